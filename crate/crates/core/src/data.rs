//! Synthetic daily power-consumption series and k-fold splitting.
//!
//! Each of the 365 rows holds the consumption of one calendar day in years
//! 1 through 5 as features and the same day in year 6 as target.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub const DAYS: usize = 365;
pub const FEATURE_YEARS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub base: f64,
    pub trend: f64,
    pub seasonal: f64,
    pub weekly: f64,
    pub sigma: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            base: 100.0,
            trend: 3.0,
            seasonal: 20.0,
            weekly: 5.0,
            sigma: 2.0,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0) {
            return Err(Error::config(format!("base load must be positive, got {}", self.base)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::config(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        if ![self.base, self.trend, self.seasonal, self.weekly, self.sigma]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::config("dataset parameters must be finite"));
        }
        Ok(())
    }

    /// Noise-free consumption for `year` (1-based) and `day` (1..=365).
    pub fn mean_consumption(&self, year: usize, day: usize) -> f64 {
        let d = day as f64;
        self.base
            + self.trend * year as f64
            + self.seasonal * (2.0 * PI * d / 365.0).sin()
            + self.weekly * (2.0 * PI * d / 7.0).sin()
    }
}

/// Per-column min/max used for `[0, 1]` scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub feature_min: [f64; FEATURE_YEARS],
    pub feature_max: [f64; FEATURE_YEARS],
    pub target_min: f64,
    pub target_max: f64,
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

impl MinMax {
    pub fn features(&self, x: &[f64; FEATURE_YEARS]) -> Vec<f64> {
        (0..FEATURE_YEARS)
            .map(|i| scale(x[i], self.feature_min[i], self.feature_max[i]))
            .collect()
    }

    pub fn target(&self, y: f64) -> f64 {
        scale(y, self.target_min, self.target_max)
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        self.target_min + y * (self.target_max - self.target_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub params: DatasetParams,
    pub features: Vec<[f64; FEATURE_YEARS]>,
    pub targets: Vec<f64>,
    /// Stats over all rows; fold training uses [`Dataset::fit_minmax`] instead.
    pub stats: MinMax,
}

/// Pure function of `(seed, params)`. Noise for year `y` comes from its own
/// `(seed, Dataset, y)` stream.
pub fn generate_dataset(seed: u64, params: DatasetParams) -> Result<Dataset> {
    params.validate()?;
    let mut series = [[0.0; DAYS]; FEATURE_YEARS + 1];
    for (y, year) in series.iter_mut().enumerate() {
        let mut rng = rng::stream(seed, Purpose::Dataset, y as u64 + 1, 0);
        for (d, v) in year.iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v = params.mean_consumption(y + 1, d + 1) + params.sigma * noise;
        }
    }
    let features: Vec<[f64; FEATURE_YEARS]> = (0..DAYS).map(|d| std::array::from_fn(|y| series[y][d])).collect();
    let targets: Vec<f64> = series[FEATURE_YEARS].to_vec();
    let mut ds = Dataset {
        seed,
        params,
        stats: MinMax {
            feature_min: [0.0; 5],
            feature_max: [0.0; 5],
            target_min: 0.0,
            target_max: 0.0,
        },
        features,
        targets,
    };
    ds.stats = ds.fit_minmax(&(0..DAYS).collect::<Vec<_>>());
    Ok(ds)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Min/max computed over `rows` only.
    pub fn fit_minmax(&self, rows: &[usize]) -> MinMax {
        let mut m = MinMax {
            feature_min: [f64::INFINITY; FEATURE_YEARS],
            feature_max: [f64::NEG_INFINITY; FEATURE_YEARS],
            target_min: f64::INFINITY,
            target_max: f64::NEG_INFINITY,
        };
        for &r in rows {
            for i in 0..FEATURE_YEARS {
                m.feature_min[i] = m.feature_min[i].min(self.features[r][i]);
                m.feature_max[i] = m.feature_max[i].max(self.features[r][i]);
            }
            m.target_min = m.target_min.min(self.targets[r]);
            m.target_max = m.target_max.max(self.targets[r]);
        }
        m
    }

    /// `day,y1,y2,y3,y4,y5,target`, days numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,y1,y2,y3,y4,y5,target\n");
        for (d, (x, y)) in self.features.iter().zip(&self.targets).enumerate() {
            out.push_str(&(d + 1).to_string());
            for v in x {
                out.push_str(&format!(",{v:?}"));
            }
            out.push_str(&format!(",{y:?}\n"));
        }
        out
    }
}

/// Normalized rows ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSplit {
    pub stats: MinMax,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub test_folds: Vec<Vec<usize>>,
}

/// Shuffle `0..n` with the `(seed, KFold)` stream and cut it into `k`
/// contiguous chunks; the first `n % k` chunks take one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::config(format!("k-fold needs 2 <= k <= n, got k={k} n={n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, Purpose::KFold, 0, 0);
    idx.shuffle(&mut rng);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan {
        n,
        k,
        seed,
        test_folds: folds,
    })
}

impl FoldPlan {
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .test_folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }

    /// Normalize with stats fitted on the training rows of `fold` only.
    pub fn split(&self, ds: &Dataset, fold: usize) -> Result<NormalizedSplit> {
        if fold >= self.k {
            return Err(Error::config(format!("fold {fold} out of range for k={}", self.k)));
        }
        if ds.len() != self.n {
            return Err(Error::config("fold plan was built for a different dataset size"));
        }
        let train = self.train_indices(fold);
        let stats = ds.fit_minmax(&train);
        let rows = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
            ix.iter()
                .map(|&r| (stats.features(&ds.features[r]), stats.target(ds.targets[r])))
                .unzip()
        };
        let (train_x, train_y) = rows(&train);
        let (test_x, test_y) = rows(&self.test_folds[fold]);
        Ok(NormalizedSplit {
            stats,
            train_x,
            train_y,
            test_x,
            test_y,
        })
    }
}
