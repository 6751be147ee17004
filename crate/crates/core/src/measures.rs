//! Measure and center data model, fixed-effects Z-scores and O/E diagnostics.

use serde::{Deserialize, Serialize};

use crate::empirical_null::EnConfig;
use crate::{Error, Result};

/// Two-sided 5% flagging threshold used by the diagnostics.
pub const FLAG_THRESHOLD: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    Binomial,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    pub measure_id: String,
    pub family: Family,
    /// Dispersion constant `a(psi)`; the error variance for normal outcomes.
    pub a_psi: f64,
    pub direction: Direction,
    pub en_config: EnConfig,
}

impl MeasureSpec {
    pub fn new(
        measure_id: impl Into<String>,
        family: Family,
        a_psi: f64,
        direction: Direction,
        en_config: EnConfig,
    ) -> Result<Self> {
        let measure_id = measure_id.into();
        if !(a_psi > 0.0 && a_psi.is_finite()) {
            return Err(Error::input(format!(
                "measure {measure_id}: a_psi must be positive, got {a_psi}"
            )));
        }
        if matches!(family, Family::Binomial | Family::Poisson) && a_psi != 1.0 {
            return Err(Error::input(format!(
                "measure {measure_id}: a_psi must be 1 for {family:?} outcomes, got {a_psi}"
            )));
        }
        en_config.validate()?;
        Ok(Self {
            measure_id,
            family,
            a_psi,
            direction,
            en_config,
        })
    }

    /// Poisson measure with default empirical-null settings.
    pub fn poisson(measure_id: impl Into<String>, direction: Direction) -> Self {
        Self {
            measure_id: measure_id.into(),
            family: Family::Poisson,
            a_psi: 1.0,
            direction,
            en_config: EnConfig::default(),
        }
    }
}

/// One center's summary statistics for one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterStat {
    pub center_id: String,
    pub measure_id: String,
    /// Sum of observed outcomes.
    pub observed: f64,
    /// Sum of null means, `sum_j b'(theta0_ij)`.
    pub expected: f64,
    /// Effective center size, `sum_j b''(theta0_ij)`.
    pub effective_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedEffects,
    EmpiricalNull,
    MethodOfMoments,
}

impl Method {
    pub fn short_name(self) -> &'static str {
        match self {
            Method::FixedEffects => "fe",
            Method::EmpiricalNull => "en",
            Method::MethodOfMoments => "mom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub center_id: String,
    pub measure_id: String,
    pub method: Method,
    pub value: f64,
}

/// A center left out of fitting, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCenter {
    pub center_id: String,
    pub measure_id: String,
    pub reason: String,
}

/// Fixed-effects score statistic `(O - E) / sqrt(a_psi * n_eff)`.
pub fn z_fixed_effects(stat: &CenterStat, spec: &MeasureSpec) -> Result<ZScore> {
    if !(stat.effective_size > 0.0) {
        return Err(Error::input(format!(
            "center {} measure {}: effective size must be positive, got {}",
            stat.center_id, stat.measure_id, stat.effective_size
        )));
    }
    let value = (stat.observed - stat.expected) / (spec.a_psi * stat.effective_size).sqrt();
    if !value.is_finite() {
        return Err(Error::input(format!(
            "center {} measure {}: non-finite Z-score",
            stat.center_id, stat.measure_id
        )));
    }
    Ok(ZScore {
        center_id: stat.center_id.clone(),
        measure_id: stat.measure_id.clone(),
        method: Method::FixedEffects,
        value,
    })
}

/// Published O/E ratio scale.
pub fn measure_ratio(stat: &CenterStat) -> Result<f64> {
    if !(stat.expected > 0.0) {
        return Err(Error::input(format!(
            "center {} measure {}: expected must be positive, got {}",
            stat.center_id, stat.measure_id, stat.expected
        )));
    }
    Ok(stat.observed / stat.expected)
}

/// Fixed-effects scores for every usable center of one measure.
///
/// Centers with non-positive effective size or expected count are returned
/// in the skipped list instead of failing the whole measure.
pub fn standardize_fixed_effects<'a>(
    stats: impl IntoIterator<Item = &'a CenterStat>,
    spec: &MeasureSpec,
) -> (Vec<(ZScore, &'a CenterStat)>, Vec<SkippedCenter>) {
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for stat in stats {
        let reason = if !(stat.effective_size > 0.0) {
            Some(format!("effective_size {} <= 0", stat.effective_size))
        } else if !(stat.expected > 0.0) {
            Some(format!("expected {} <= 0", stat.expected))
        } else {
            None
        };
        if let Some(reason) = reason {
            skipped.push(SkippedCenter {
                center_id: stat.center_id.clone(),
                measure_id: stat.measure_id.clone(),
                reason,
            });
            continue;
        }
        match z_fixed_effects(stat, spec) {
            Ok(z) => scored.push((z, stat)),
            Err(e) => skipped.push(SkippedCenter {
                center_id: stat.center_id.clone(),
                measure_id: stat.measure_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (scored, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupDiagnostic {
    pub mean_size: f64,
    pub z_variance: f64,
    pub flag_proportion: f64,
    pub count: usize,
}

/// Z-score variance within size-ordered groups of centers.
///
/// Centers are sorted by effective size and cut into `n_groups` contiguous
/// groups whose counts differ by at most one.
pub fn group_variance_diagnostic(z: &[f64], sizes: &[f64], n_groups: usize) -> Result<Vec<GroupDiagnostic>> {
    if z.len() != sizes.len() {
        return Err(Error::input(format!(
            "{} Z-scores but {} sizes",
            z.len(),
            sizes.len()
        )));
    }
    if n_groups < 2 {
        return Err(Error::input("at least 2 groups are required"));
    }
    let n = z.len();
    if n < 2 * n_groups {
        return Err(Error::input(format!(
            "{n} centers is too few for {n_groups} groups of at least 2"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sizes[a].total_cmp(&sizes[b]).then(a.cmp(&b)));

    let groups = (0..n_groups)
        .map(|g| {
            let idx = &order[g * n / n_groups..(g + 1) * n / n_groups];
            let count = idx.len() as f64;
            let mean_size = idx.iter().map(|&i| sizes[i]).sum::<f64>() / count;
            let mean_z = idx.iter().map(|&i| z[i]).sum::<f64>() / count;
            let z_variance = idx.iter().map(|&i| (z[i] - mean_z).powi(2)).sum::<f64>() / (count - 1.0);
            let flagged = idx.iter().filter(|&&i| z[i].abs() > FLAG_THRESHOLD).count();
            GroupDiagnostic {
                mean_size,
                z_variance,
                flag_proportion: flagged as f64 / count,
                count: idx.len(),
            }
        })
        .collect();
    Ok(groups)
}
