//! Synthetic Poisson provider data and Monte Carlo flagging studies.
//!
//! Each center has `records_per_center` patient records with covariates
//! `x ~ N(covariate_mean, covariate_variance)` and a center exposure
//! `r ~ Exponential(exposure_mean)`. The null mean of a center is
//! `r * sum_j exp(mu + beta * x_j)`, which is also its effective size; the
//! observed count is Poisson with that mean scaled by `exp(gamma + alpha)`.
//!
//! Every iteration draws from its own ChaCha stream keyed by
//! `(seed, grid point, iteration, measure)`, so results do not depend on how
//! iterations are scheduled across threads.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, fit_method_of_moments};
use crate::composite::composite_score;
use crate::empirical_null::{fit_empirical_null, z_empirical_null, EnConfig};
use crate::{Error, Result};

const FLAG_Z: f64 = 1.96;
/// Share of failed iterations above which an experiment aborts.
const MAX_FAILED_SHARE: f64 = 0.05;
const MAX_FOCAL_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_centers: usize,
    pub seed: u64,
    pub mu: f64,
    pub beta: f64,
    pub covariate_mean: f64,
    /// Variance of the patient covariate distribution.
    pub covariate_second_param: f64,
    /// Patient records aggregated into each center's counts.
    pub records_per_center: usize,
    pub exposure_mean: f64,
    /// Draw exposures from an exponential; otherwise every center gets
    /// exactly `exposure_mean`.
    pub exposure_random: bool,
    /// Confounder variance per measure.
    pub sigma2_alpha: Vec<f64>,
    pub outlier_fraction: f64,
    pub outlier_effect: f64,
    pub gamma_grid: Vec<f64>,
    pub iterations: usize,
    pub q_grid: Vec<f64>,
    /// Tail percentage for the empirical-null interval in the flagging and
    /// composite experiments.
    pub en_q_percent: f64,
    /// Winsorization level for the method-of-moments baseline.
    pub mom_q_percent: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_centers: 212,
            seed: 20_200_101,
            mu: -6.0,
            beta: 1.0,
            covariate_mean: -0.4,
            covariate_second_param: 0.5,
            records_per_center: 20,
            exposure_mean: 1000.0,
            exposure_random: true,
            sigma2_alpha: vec![0.14],
            outlier_fraction: 0.0,
            outlier_effect: 1.0,
            gamma_grid: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            iterations: 1000,
            q_grid: vec![2.5, 5.0, 10.0, 15.0],
            en_q_percent: 5.0,
            mom_q_percent: baselines::DEFAULT_WINSOR_Q,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Input(format!("simulation config: {msg}")));
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return fail(format!("outlier_fraction must lie in [0, 1), got {}", self.outlier_fraction));
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if !(self.exposure_mean > 0.0) {
            return fail(format!("exposure_mean must be positive, got {}", self.exposure_mean));
        }
        if self.records_per_center == 0 {
            return fail("records_per_center must be at least 1".into());
        }
        if self.n_centers < 12 {
            return fail(format!("n_centers must be at least 12, got {}", self.n_centers));
        }
        if !(self.covariate_second_param >= 0.0) {
            return fail("covariate variance must be non-negative".into());
        }
        if self.sigma2_alpha.is_empty() || self.sigma2_alpha.iter().any(|s| !(*s >= 0.0)) {
            return fail("sigma2_alpha must list non-negative variances".into());
        }
        if self.gamma_grid.is_empty() {
            return fail("gamma_grid must not be empty".into());
        }
        EnConfig::with_q(self.en_q_percent).validate()?;
        if !(0.0..50.0).contains(&self.mom_q_percent) {
            return fail(format!("mom_q_percent must lie in [0, 50), got {}", self.mom_q_percent));
        }
        Ok(())
    }

    /// Centers at `+outlier_effect` and at `-outlier_effect`, each.
    pub fn outliers_per_side(&self) -> usize {
        (self.outlier_fraction / 2.0 * self.n_centers as f64 + 1e-9).floor() as usize
    }
}

/// One simulated measure across all centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub observed: Vec<f64>,
    /// Null mean, equal to the effective size for Poisson outcomes.
    pub expected: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `+1` / `-1` for planted outliers, `0` otherwise.
    pub outlier: Vec<i8>,
}

impl SimDataset {
    pub fn z_fixed_effects(&self) -> Vec<f64> {
        self.observed
            .iter()
            .zip(&self.expected)
            .map(|(o, e)| (o - e) / e.sqrt())
            .collect()
    }
}

/// Counter-based stream for one unit of work.
pub fn stream_rng(seed: u64, point: usize, iteration: usize, measure: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) | ((iteration as u64) << 8) | measure as u64);
    rng
}

/// Effective sizes for every center.
pub fn draw_sizes<R: Rng>(config: &SimConfig, rng: &mut R) -> Vec<f64> {
    (0..config.n_centers).map(|_| draw_one_size(config, rng)).collect()
}

fn draw_one_size<R: Rng>(config: &SimConfig, rng: &mut R) -> f64 {
    let covariate = Normal::new(config.covariate_mean, config.covariate_second_param.sqrt())
        .expect("validated covariate variance");
    let rate_sum: f64 = (0..config.records_per_center)
        .map(|_| (config.mu + config.beta * covariate.sample(rng)).exp())
        .sum();
    let exposure = if config.exposure_random {
        Exp::new(1.0 / config.exposure_mean)
            .expect("validated exposure mean")
            .sample(rng)
    } else {
        config.exposure_mean
    };
    rate_sum * exposure
}

/// Picks the planted-outlier centers among indices `>= n_focal`.
fn outlier_labels<R: Rng>(config: &SimConfig, n_focal: usize, rng: &mut R) -> Vec<i8> {
    let mut labels = vec![0i8; config.n_centers];
    let per_side = config.outliers_per_side();
    let pool = config.n_centers - n_focal;
    let picked = index::sample(rng, pool, (2 * per_side).min(pool));
    for (k, idx) in picked.into_iter().enumerate() {
        labels[n_focal + idx] = if k < per_side { 1 } else { -1 };
    }
    labels
}

fn draw_outcomes<R: Rng>(
    config: &SimConfig,
    sizes: Vec<f64>,
    focal_gammas: &[f64],
    sigma2: f64,
    outlier: Vec<i8>,
    rng: &mut R,
) -> SimDataset {
    let confounder = Normal::new(0.0, sigma2.sqrt()).expect("validated variance");
    let mut gamma = vec![0.0; sizes.len()];
    for (i, g) in gamma.iter_mut().enumerate() {
        *g = match focal_gammas.get(i) {
            Some(&focal) => focal,
            None => outlier[i] as f64 * config.outlier_effect,
        };
    }
    let alpha: Vec<f64> = (0..sizes.len()).map(|_| confounder.sample(rng)).collect();
    let observed = sizes
        .iter()
        .zip(&gamma)
        .zip(&alpha)
        .map(|((&n, &g), &a)| poisson_draw(n * (g + a).exp(), rng))
        .collect();
    SimDataset {
        observed,
        expected: sizes,
        gamma,
        alpha,
        outlier,
    }
}

pub(crate) fn poisson_draw<R: Rng>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng)
}

/// Single-measure dataset; the first `focal_gammas.len()` centers get the
/// given quality effects.
pub fn gen_single_measure<R: Rng>(config: &SimConfig, sigma2: f64, focal_gammas: &[f64], rng: &mut R) -> SimDataset {
    let sizes = draw_sizes(config, rng);
    let outlier = outlier_labels(config, focal_gammas.len(), rng);
    draw_outcomes(config, sizes, focal_gammas, sigma2, outlier, rng)
}

/// Expected corrected score of a Poisson center with known confounder variance.
pub fn expected_en_z(gamma: f64, size: f64, sigma2: f64) -> f64 {
    (size / (1.0 + sigma2 * size)).sqrt() * ((gamma + sigma2 / 2.0).exp() - 1.0)
}

/// Second-measure effect that makes the expected two-measure composite zero
/// when the first measure is higher-is-better and the second lower-is-better.
pub fn gamma2_for_null_composite(gamma1: f64, size1: f64, size2: f64, sigma2_1: f64, sigma2_2: f64) -> Result<f64> {
    if !(size1 > 0.0 && size2 > 0.0) {
        return Err(Error::Domain(format!(
            "effective sizes must be positive, got {size1} and {size2}"
        )));
    }
    let s2 = (size2 / (1.0 + sigma2_2 * size2)).sqrt();
    let numerator = s2 + expected_en_z(gamma1, size1, sigma2_1);
    let arg = numerator / (s2 * (sigma2_2 / 2.0).exp());
    if !(arg > 0.0) {
        return Err(Error::Domain(format!(
            "no second-measure effect balances gamma1={gamma1} at sizes ({size1}, {size2}) \
             with variances ({sigma2_1}, {sigma2_2})"
        )));
    }
    Ok(arg.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub se: f64,
    pub successes: usize,
    pub trials: usize,
}

impl RateEstimate {
    pub fn new(successes: usize, trials: usize) -> Self {
        let rate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        let se = if trials == 0 { 0.0 } else { (rate * (1.0 - rate) / trials as f64).sqrt() };
        Self {
            rate,
            se,
            successes,
            trials,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanEstimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

/// Per-method flag rates at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodRates {
    pub fe: RateEstimate,
    pub mom: RateEstimate,
    pub en: RateEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlagCurvePoint {
    pub gamma: f64,
    /// Flag rates for the focal center.
    pub focal: MethodRates,
    /// Flag rates for a null, non-outlier reference center.
    pub reference_null: MethodRates,
    pub sigma2_en: MeanEstimate,
    pub sigma2_mom: MeanEstimate,
    pub failed_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningPoint {
    pub q: f64,
    /// `None` when `q` is outside the empirical-null range (e.g. `q = 0`).
    pub sigma2_en: Option<MeanEstimate>,
    pub sigma2_mom: MeanEstimate,
    pub flag_en: Option<RateEstimate>,
    pub flag_mom: RateEstimate,
    pub failed_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeCurvePoint {
    pub gamma: f64,
    /// One entry per focal center (poor/poor, good/good, poor/good, good/poor).
    pub centers: Vec<MethodRates>,
    pub failed_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SimResult {
    pub iterations: usize,
    pub flag_curves: Vec<FlagCurvePoint>,
    pub tuning: Vec<TuningPoint>,
    pub composite_curves: Vec<CompositeCurvePoint>,
}

#[derive(Debug, Clone, Copy)]
struct Flags {
    fe: bool,
    mom: bool,
    en: bool,
}

struct SingleOutcome {
    focal: Flags,
    reference: Flags,
    sigma2_en: f64,
    sigma2_mom: f64,
}

fn flagged(z: f64) -> bool {
    z.abs() > FLAG_Z
}

fn check_failures(failed: usize, total: usize, what: &str) -> Result<()> {
    if failed as f64 > MAX_FAILED_SHARE * total as f64 {
        return Err(Error::Convergence(format!(
            "{failed} of {total} iterations failed to fit ({what})"
        )));
    }
    Ok(())
}

fn rates<'a>(flags: impl Iterator<Item = &'a Flags> + Clone, trials: usize) -> MethodRates {
    let count = |f: fn(&Flags) -> bool| flags.clone().filter(|x| f(x)).count();
    MethodRates {
        fe: RateEstimate::new(count(|f| f.fe), trials),
        mom: RateEstimate::new(count(|f| f.mom), trials),
        en: RateEstimate::new(count(|f| f.en), trials),
    }
}

fn single_iteration(config: &SimConfig, gamma: f64, point: usize, iteration: usize) -> Result<SingleOutcome> {
    let mut rng = stream_rng(config.seed, point, iteration, 0);
    let data = gen_single_measure(config, config.sigma2_alpha[0], &[gamma], &mut rng);
    let z = data.z_fixed_effects();
    let en = fit_empirical_null(&z, &data.expected, 1.0, &EnConfig::with_q(config.en_q_percent))?;
    let mom = fit_method_of_moments(&z, &data.expected, config.mom_q_percent, 1.0)?;
    let flags_for = |i: usize| Flags {
        fe: flagged(z[i]),
        mom: flagged(baselines::z_method_of_moments(z[i], data.expected[i], mom.phi_mom)),
        en: flagged(z_empirical_null(z[i], data.expected[i], en.phi_hat)),
    };
    let reference = (1..data.outlier.len())
        .rev()
        .find(|&i| data.outlier[i] == 0)
        .unwrap_or(data.outlier.len() - 1);
    Ok(SingleOutcome {
        focal: flags_for(0),
        reference: flags_for(reference),
        sigma2_en: en.sigma2_alpha_hat,
        sigma2_mom: mom.sigma2_alpha_hat,
    })
}

/// Flag-rate curves for a focal center whose effect sweeps `gamma_grid`.
pub fn run_flagging_experiment(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let mut curves = Vec::with_capacity(config.gamma_grid.len());
    for (point, &gamma) in config.gamma_grid.iter().enumerate() {
        let outcomes: Vec<Result<SingleOutcome>> = (0..config.iterations)
            .into_par_iter()
            .map(|it| single_iteration(config, gamma, point, it))
            .collect();
        let ok: Vec<SingleOutcome> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
        let failed = config.iterations - ok.len();
        check_failures(failed, config.iterations, &format!("gamma = {gamma}"))?;
        let focal: Vec<Flags> = ok.iter().map(|o| o.focal).collect();
        let reference: Vec<Flags> = ok.iter().map(|o| o.reference).collect();
        curves.push(FlagCurvePoint {
            gamma,
            focal: rates(focal.iter(), ok.len()),
            reference_null: rates(reference.iter(), ok.len()),
            sigma2_en: MeanEstimate::from_values(&ok.iter().map(|o| o.sigma2_en).collect::<Vec<_>>()),
            sigma2_mom: MeanEstimate::from_values(&ok.iter().map(|o| o.sigma2_mom).collect::<Vec<_>>()),
            failed_iterations: failed,
        });
    }
    Ok(SimResult {
        iterations: config.iterations,
        flag_curves: curves,
        ..SimResult::default()
    })
}

struct TuningOutcome {
    en: Vec<Option<(f64, bool)>>,
    mom: Vec<(f64, bool)>,
}

/// Sensitivity of both corrections to their tuning level `q`.
///
/// The focal center's effect is the first entry of `gamma_grid`. All `q`
/// values are evaluated on the same simulated data within an iteration.
pub fn run_tuning_sensitivity(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    if config.q_grid.is_empty() {
        return Err(Error::input("q_grid must not be empty"));
    }
    if let Some(q) = config.q_grid.iter().find(|q| !(0.0..50.0).contains(*q)) {
        return Err(Error::input(format!("q values must lie in [0, 50), got {q}")));
    }
    let gamma = config.gamma_grid[0];
    let outcomes: Vec<Result<TuningOutcome>> = (0..config.iterations)
        .into_par_iter()
        .map(|it| -> Result<TuningOutcome> {
            let mut rng = stream_rng(config.seed, 0, it, 0);
            let data = gen_single_measure(config, config.sigma2_alpha[0], &[gamma], &mut rng);
            let z = data.z_fixed_effects();
            let mut en = Vec::with_capacity(config.q_grid.len());
            let mut mom = Vec::with_capacity(config.q_grid.len());
            for &q in &config.q_grid {
                en.push(if q > 0.0 {
                    let fit = fit_empirical_null(&z, &data.expected, 1.0, &EnConfig::with_q(q))?;
                    Some((
                        fit.sigma2_alpha_hat,
                        flagged(z_empirical_null(z[0], data.expected[0], fit.phi_hat)),
                    ))
                } else {
                    None
                });
                let fit = fit_method_of_moments(&z, &data.expected, q, 1.0)?;
                mom.push((
                    fit.sigma2_alpha_hat,
                    flagged(baselines::z_method_of_moments(z[0], data.expected[0], fit.phi_mom)),
                ));
            }
            Ok(TuningOutcome { en, mom })
        })
        .collect();
    let ok: Vec<TuningOutcome> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let failed = config.iterations - ok.len();
    check_failures(failed, config.iterations, "tuning sensitivity")?;

    let tuning = config
        .q_grid
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let mom_vals: Vec<f64> = ok.iter().map(|o| o.mom[k].0).collect();
            let mom_flags = ok.iter().filter(|o| o.mom[k].1).count();
            let (sigma2_en, flag_en) = if q > 0.0 {
                let vals: Vec<f64> = ok.iter().filter_map(|o| o.en[k].map(|e| e.0)).collect();
                let flags = ok.iter().filter(|o| o.en[k].is_some_and(|e| e.1)).count();
                (Some(MeanEstimate::from_values(&vals)), Some(RateEstimate::new(flags, ok.len())))
            } else {
                (None, None)
            };
            TuningPoint {
                q,
                sigma2_en,
                sigma2_mom: MeanEstimate::from_values(&mom_vals),
                flag_en,
                flag_mom: RateEstimate::new(mom_flags, ok.len()),
                failed_iterations: failed,
            }
        })
        .collect();
    Ok(SimResult {
        iterations: config.iterations,
        tuning,
        ..SimResult::default()
    })
}

/// Sign pattern of the first-measure effect for the four focal centers:
/// poor/poor, good/good, poor/good, good/poor.
const FOCAL_ACCESS_SIGN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

/// Effects `(gamma_1, gamma_2)` for the four focal centers at sweep value
/// `g`, or `None` when centers 3/4 cannot be balanced at these sizes.
fn focal_effects(g: f64, sizes1: &[f64], sizes2: &[f64], sigma2: (f64, f64)) -> Option<[(f64, f64); 4]> {
    let mut out = [(0.0, 0.0); 4];
    for (c, slot) in out.iter_mut().enumerate() {
        let g1 = FOCAL_ACCESS_SIGN[c] * g;
        let g2 = if c < 2 {
            -g1
        } else {
            gamma2_for_null_composite(g1, sizes1[c], sizes2[c], sigma2.0, sigma2.1).ok()?
        };
        *slot = (g1, g2);
    }
    Some(out)
}

fn composite_iteration(config: &SimConfig, gamma: f64, point: usize, iteration: usize) -> Result<[Flags; 4]> {
    let (s1, s2) = (config.sigma2_alpha[0], config.sigma2_alpha[1]);
    let mut rng1 = stream_rng(config.seed, point, iteration, 1);
    let mut rng2 = stream_rng(config.seed, point, iteration, 2);
    let mut sizes1 = draw_sizes(config, &mut rng1);
    let mut sizes2 = draw_sizes(config, &mut rng2);

    // Redraw focal sizes until centers 3/4 admit a balancing effect.
    let mut redraws = 0;
    let effects = loop {
        if let Some(e) = focal_effects(gamma, &sizes1, &sizes2, (s1, s2)) {
            break e;
        }
        redraws += 1;
        if redraws > MAX_FOCAL_REDRAWS {
            return Err(Error::Domain(format!(
                "could not balance focal centers at gamma = {gamma}"
            )));
        }
        for c in 2..4 {
            sizes1[c] = draw_one_size(config, &mut rng1);
            sizes2[c] = draw_one_size(config, &mut rng2);
        }
    };

    let focal1: Vec<f64> = effects.iter().map(|e| e.0).collect();
    let focal2: Vec<f64> = effects.iter().map(|e| e.1).collect();
    let out1 = outlier_labels(config, 4, &mut rng1);
    let out2 = outlier_labels(config, 4, &mut rng2);
    let m1 = draw_outcomes(config, sizes1, &focal1, s1, out1, &mut rng1);
    let m2 = draw_outcomes(config, sizes2, &focal2, s2, out2, &mut rng2);

    let en_cfg = EnConfig::with_q(config.en_q_percent);
    let scored: Vec<[f64; 4 * 3]> = [&m1, &m2]
        .iter()
        .map(|m| -> Result<[f64; 12]> {
            let z = m.z_fixed_effects();
            let en = fit_empirical_null(&z, &m.expected, 1.0, &en_cfg)?;
            let mom = fit_method_of_moments(&z, &m.expected, config.mom_q_percent, 1.0)?;
            let mut row = [0.0; 12];
            for c in 0..4 {
                row[3 * c] = z[c];
                row[3 * c + 1] = baselines::z_method_of_moments(z[c], m.expected[c], mom.phi_mom);
                row[3 * c + 2] = z_empirical_null(z[c], m.expected[c], en.phi_hat);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let identity = nalgebra::DMatrix::identity(2, 2);
    let mut flags = [Flags { fe: false, mom: false, en: false }; 4];
    for (c, f) in flags.iter_mut().enumerate() {
        // second measure is lower-is-better, so it enters with a sign flip
        let cs = |k: usize| composite_score(&[scored[0][3 * c + k], -scored[1][3 * c + k]], &[1.0, 1.0], &identity);
        *f = Flags {
            fe: flagged(cs(0)?),
            mom: flagged(cs(1)?),
            en: flagged(cs(2)?),
        };
    }
    Ok(flags)
}

/// Two-measure composite flagging for the four focal centers.
pub fn run_composite_experiment(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    if config.sigma2_alpha.len() < 2 {
        return Err(Error::input("composite experiment needs sigma2_alpha for two measures"));
    }
    let mut curves = Vec::with_capacity(config.gamma_grid.len());
    for (point, &gamma) in config.gamma_grid.iter().enumerate() {
        let outcomes: Vec<Result<[Flags; 4]>> = (0..config.iterations)
            .into_par_iter()
            .map(|it| composite_iteration(config, gamma, point, it))
            .collect();
        let ok: Vec<[Flags; 4]> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
        let failed = config.iterations - ok.len();
        check_failures(failed, config.iterations, &format!("composite gamma = {gamma}"))?;
        let centers = (0..4)
            .map(|c| {
                let flags: Vec<Flags> = ok.iter().map(|f| f[c]).collect();
                rates(flags.iter(), ok.len())
            })
            .collect();
        curves.push(CompositeCurvePoint {
            gamma,
            centers,
            failed_iterations: failed,
        });
    }
    Ok(SimResult {
        iterations: config.iterations,
        composite_curves: curves,
        ..SimResult::default()
    })
}
