//! Scalar activation functions and their derivatives.
//!
//! Kinds serialize as a lowercase tag followed by `:`-separated parameters,
//! e.g. `sigmoid`, `leakyrelu:0.01`, `srelu:1.0:1.0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_SRELU_A: f64 = 1.0;
pub const DEFAULT_SRELU_B: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActivationKind {
    Sigmoid,
    Relu,
    LeakyRelu {
        slope: f64,
    },
    /// Spiking rectified linear unit: `x` above `b`, `0` below `-a`, and
    /// `(x + a)(b - x) / (b + a)` in between. Discontinuous at `x = b`.
    SRelu {
        a: f64,
        b: f64,
    },
    Identity,
}

impl ActivationKind {
    pub fn leaky_relu() -> Self {
        ActivationKind::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn srelu() -> Self {
        ActivationKind::SRelu {
            a: DEFAULT_SRELU_A,
            b: DEFAULT_SRELU_B,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::LeakyRelu { slope } => {
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::config(format!(
                        "leaky relu slope must lie in (0, 1), got {slope}"
                    )));
                }
            }
            ActivationKind::SRelu { a, b } => {
                if !(a >= 0.0 && b > 0.0 && a + b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::config(format!("srelu needs a >= 0 and b > 0, got a={a} b={b}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Evaluate without checking `x`. Used on hot paths where the caller
    /// already guarantees finite inputs.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::SRelu { a, b } => {
                if x > b {
                    x
                } else if x < -a {
                    0.0
                } else {
                    (x + a) * (b - x) / (b + a)
                }
            }
            ActivationKind::Identity => x,
        }
    }

    /// Derivative (subgradient at breakpoints) without checking `x`.
    ///
    /// ReLU and LeakyReLU return 1 at `x = 0`; SReLU returns the middle-branch
    /// value at both `x = -a` and `x = b`.
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            ActivationKind::SRelu { a, b } => {
                if x > b {
                    1.0
                } else if x < -a {
                    0.0
                } else {
                    (b - a - 2.0 * x) / (b + a)
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }

    /// Points where the function or its derivative changes formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            ActivationKind::Relu | ActivationKind::LeakyRelu { .. } => vec![0.0],
            ActivationKind::SRelu { a, b } => vec![-a, b],
            _ => Vec::new(),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(kind: ActivationKind, x: f64) -> Result<f64> {
    kind.validate()?;
    if !x.is_finite() {
        return Err(Error::domain(format!("activation input is not finite: {x}")));
    }
    Ok(kind.apply(x))
}

pub fn derivative(kind: ActivationKind, x: f64) -> Result<f64> {
    kind.validate()?;
    if !x.is_finite() {
        return Err(Error::domain(format!("activation input is not finite: {x}")));
    }
    Ok(kind.slope(x))
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Sigmoid => write!(f, "sigmoid"),
            ActivationKind::Relu => write!(f, "relu"),
            ActivationKind::LeakyRelu { slope } => write!(f, "leakyrelu:{slope:?}"),
            ActivationKind::SRelu { a, b } => write!(f, "srelu:{a:?}:{b:?}"),
            ActivationKind::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let tag = parts.next().unwrap_or_default().to_ascii_lowercase();
        let params = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::config(format!("bad activation parameter {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let kind = match (tag.as_str(), params.as_slice()) {
            ("sigmoid", []) => ActivationKind::Sigmoid,
            ("relu", []) => ActivationKind::Relu,
            ("identity", []) => ActivationKind::Identity,
            ("leakyrelu", []) => ActivationKind::leaky_relu(),
            ("leakyrelu", [slope]) => ActivationKind::LeakyRelu { slope: *slope },
            ("srelu", []) => ActivationKind::srelu(),
            ("srelu", [a, b]) => ActivationKind::SRelu { a: *a, b: *b },
            _ => return Err(Error::config(format!("unknown activation {s:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl TryFrom<String> for ActivationKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ActivationKind> for String {
    fn from(kind: ActivationKind) -> String {
        kind.to_string()
    }
}
