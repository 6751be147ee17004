//! Correlation-weighted composite scores and threshold flagging.
//!
//! `Z_CS = (w' C w)^(-1/2) * sum_k w_k z_k`, where `C` is the correlation
//! matrix of the aligned per-measure scores. The normalization keeps `Z_CS`
//! standard normal under the null.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::measures::{Direction, MeasureSpec, ZScore};
use crate::{Error, Result};

const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Row sums of the inverse correlation matrix.
    InverseCorrSum,
    /// `1 / sum_l max(c_kl, 0)`; always positive.
    #[default]
    CappedCorrReciprocal,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeConfig {
    pub weight_scheme: WeightScheme,
    pub user_weights: Option<Vec<f64>>,
    pub flag_lower: f64,
    pub flag_upper: f64,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        Self {
            weight_scheme: WeightScheme::CappedCorrReciprocal,
            user_weights: None,
            flag_lower: -1.96,
            flag_upper: 1.96,
        }
    }
}

impl CompositeConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.weight_scheme, &self.user_weights) {
            (WeightScheme::UserSupplied, Some(w)) => {
                if let Some(bad) = w.iter().find(|&&x| !(x > 0.0)) {
                    return Err(Error::input(format!("user weights must be positive, got {bad}")));
                }
            }
            (WeightScheme::UserSupplied, None) => {
                return Err(Error::input("user_supplied weight scheme requires user_weights"));
            }
            (_, Some(_)) => {
                return Err(Error::input("user_weights given without the user_supplied weight scheme"));
            }
            (_, None) => {}
        }
        if !(self.flag_lower < self.flag_upper) {
            return Err(Error::input(format!(
                "flag_lower {} must be below flag_upper {}",
                self.flag_lower, self.flag_upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Poor,
    Average,
    Good,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Poor => "poor",
            Label::Average => "average",
            Label::Good => "good",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeResult {
    pub center_id: String,
    pub z_cs: f64,
    pub label: Label,
    pub weights: Vec<f64>,
    pub correlation: DMatrix<f64>,
    pub measures_used: Vec<String>,
    /// Some measures were missing for this center.
    pub partial: bool,
}

/// Orients a score so that lower always means worse care.
pub fn direction_align(z: &ZScore, spec: &MeasureSpec) -> f64 {
    match spec.direction {
        Direction::HigherIsBetter => z.value,
        Direction::LowerIsBetter => -z.value,
    }
}

/// Pairwise-complete Pearson correlations of a centers-by-measures table.
pub fn correlation_matrix(scores: &[Vec<Option<f64>>], measure_ids: &[String]) -> Result<DMatrix<f64>> {
    let p = measure_ids.len();
    if let Some(row) = scores.iter().find(|r| r.len() != p) {
        return Err(Error::input(format!(
            "score row has {} entries for {p} measures",
            row.len()
        )));
    }
    let mut c = DMatrix::identity(p, p);
    for k in 0..p {
        for l in (k + 1)..p {
            let pairs: Vec<(f64, f64)> = scores
                .iter()
                .filter_map(|r| Some((r[k]?, r[l]?)))
                .collect();
            if pairs.len() < 3 {
                return Err(Error::input(format!(
                    "measures {} and {} share only {} complete centers (need 3)",
                    measure_ids[k],
                    measure_ids[l],
                    pairs.len()
                )));
            }
            let r = pearson(&pairs).ok_or_else(|| {
                Error::Numeric(format!(
                    "correlation of {} and {} is undefined (zero variance)",
                    measure_ids[k], measure_ids[l]
                ))
            })?;
            c[(k, l)] = r;
            c[(l, k)] = r;
        }
    }
    Ok(c)
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn capped_corr_weights(c: &DMatrix<f64>) -> Vec<f64> {
    c.row_iter()
        .map(|row| 1.0 / row.iter().map(|&x| x.max(0.0)).sum::<f64>())
        .collect()
}

/// Row sums of `C^-1`. Weights can come out negative.
pub fn inverse_corr_weights(c: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sv = c.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Numeric(format!(
            "correlation matrix is singular (condition estimate {condition:.3e})"
        )));
    }
    let t = c.clone().try_inverse().ok_or_else(|| {
        Error::Numeric(format!(
            "correlation matrix inversion failed (condition estimate {condition:.3e})"
        ))
    })?;
    Ok(t.row_iter().map(|row| row.sum()).collect())
}

pub fn weights_for(c: &DMatrix<f64>, config: &CompositeConfig) -> Result<Vec<f64>> {
    match config.weight_scheme {
        WeightScheme::CappedCorrReciprocal => Ok(capped_corr_weights(c)),
        WeightScheme::InverseCorrSum => inverse_corr_weights(c),
        WeightScheme::UserSupplied => {
            let w = config
                .user_weights
                .clone()
                .ok_or_else(|| Error::input("user_supplied weight scheme requires user_weights"))?;
            if w.len() != c.nrows() {
                return Err(Error::input(format!(
                    "{} user weights for {} measures",
                    w.len(),
                    c.nrows()
                )));
            }
            Ok(w)
        }
    }
}

fn quadratic_form(w: &[f64], c: &DMatrix<f64>) -> f64 {
    let mut q = 0.0;
    for (k, wk) in w.iter().enumerate() {
        for (l, wl) in w.iter().enumerate() {
            q += wk * wl * c[(k, l)];
        }
    }
    q
}

/// Weights divided by `sqrt(w' C w)`, the scale on which a composite's
/// per-measure contributions are usually published.
pub fn normalized_weights(w: &[f64], c: &DMatrix<f64>) -> Result<Vec<f64>> {
    let q = quadratic_form(w, c);
    if !(q > 0.0) {
        return Err(Error::Numeric(format!("weight quadratic form is not positive ({q})")));
    }
    let s = q.sqrt();
    Ok(w.iter().map(|x| x / s).collect())
}

pub fn composite_score(z_row: &[f64], w: &[f64], c: &DMatrix<f64>) -> Result<f64> {
    if z_row.len() != w.len() || w.len() != c.nrows() || c.nrows() != c.ncols() {
        return Err(Error::input(format!(
            "composite dimensions disagree: {} scores, {} weights, {}x{} correlation",
            z_row.len(),
            w.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    let q = quadratic_form(w, c);
    if !(q > 0.0) {
        return Err(Error::Numeric(format!("weight quadratic form is not positive ({q})")));
    }
    let weighted: f64 = z_row.iter().zip(w).map(|(z, w)| z * w).sum();
    Ok(weighted / q.sqrt())
}

/// Threshold labelling; values exactly on a threshold are average.
pub fn flag(z_cs: f64, config: &CompositeConfig) -> Label {
    if z_cs < config.flag_lower {
        Label::Poor
    } else if z_cs > config.flag_upper {
        Label::Good
    } else {
        Label::Average
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeOutput {
    pub correlation: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub normalized_weights: Vec<f64>,
    pub results: Vec<CompositeResult>,
    /// Centers with fewer than two available measures.
    pub excluded: Vec<String>,
}

/// Builds composites for every center of an aligned score table.
///
/// Centers missing some measures use the matching sub-block of the weights
/// and correlation matrix and are marked partial.
pub fn compose(
    center_ids: &[String],
    scores: &[Vec<Option<f64>>],
    measure_ids: &[String],
    config: &CompositeConfig,
) -> Result<CompositeOutput> {
    config.validate()?;
    if center_ids.len() != scores.len() {
        return Err(Error::input("center ids and score rows differ in length"));
    }
    let correlation = correlation_matrix(scores, measure_ids)?;
    let weights = weights_for(&correlation, config)?;
    let normalized = normalized_weights(&weights, &correlation)?;

    let mut results = Vec::new();
    let mut excluded = Vec::new();
    for (center, row) in center_ids.iter().zip(scores) {
        let present: Vec<usize> = (0..row.len()).filter(|&k| row[k].is_some()).collect();
        if present.len() < 2 {
            excluded.push(center.clone());
            continue;
        }
        let z: Vec<f64> = present.iter().map(|&k| row[k].unwrap_or_default()).collect();
        let w: Vec<f64> = present.iter().map(|&k| weights[k]).collect();
        let sub = correlation.select_rows(&present).select_columns(&present);
        let z_cs = composite_score(&z, &w, &sub)?;
        results.push(CompositeResult {
            center_id: center.clone(),
            z_cs,
            label: flag(z_cs, config),
            weights: w,
            correlation: sub,
            measures_used: present.iter().map(|&k| measure_ids[k].clone()).collect(),
            partial: present.len() < row.len(),
        });
    }
    Ok(CompositeOutput {
        correlation,
        weights,
        normalized_weights: normalized,
        results,
        excluded,
    })
}
