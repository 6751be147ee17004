//! File formats and pipeline orchestration behind the command-line tool.
//!
//! Tabular data are RFC-4180 CSV with a required header; configuration is
//! JSON. Every number is written with six decimals, rounded half away from
//! zero, so that reruns are byte-identical.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{self, fit_method_of_moments};
use crate::composite::{self, CompositeConfig, CompositeOutput, Label};
use crate::empirical_null::{control_limits, fit_empirical_null, z_empirical_null, EnConfig, NullFit};
use crate::measures::{
    self, standardize_fixed_effects, CenterStat, Direction, Family, GroupDiagnostic, MeasureSpec, Method,
    SkippedCenter,
};
use crate::simulation::{RateEstimate, SimResult};
use crate::{Error, Result};

pub const CENTER_HEADER: [&str; 5] = ["center_id", "measure_id", "observed", "expected", "effective_size"];
pub const SCORES_HEADER: [&str; 5] = ["center_id", "measure_id", "z_fe", "z_en", "z_mom"];
const GENERATOR: &str = concat!("profile-null ", env!("CARGO_PKG_VERSION"));

/// Six decimals, ties rounded away from zero, no negative zero.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = (x * 1e6).round() / 1e6;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// measure configuration

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Pi0GridEntry {
    lo: f64,
    hi: f64,
    step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureEntry {
    measure_id: String,
    family: Family,
    direction: Direction,
    a_psi: Option<f64>,
    q_percent: Option<f64>,
    pi0_grid: Option<Pi0GridEntry>,
}

pub fn parse_measure_config(json: &str) -> Result<Vec<MeasureSpec>> {
    let entries: Vec<MeasureEntry> =
        serde_json::from_str(json).map_err(|e| Error::input(format!("measure config: {e}")))?;
    if entries.is_empty() {
        return Err(Error::input("measure config lists no measures"));
    }
    let mut seen = HashSet::new();
    entries
        .into_iter()
        .map(|e| {
            if !seen.insert(e.measure_id.clone()) {
                return Err(Error::input(format!("measure config: duplicate measure_id {}", e.measure_id)));
            }
            let mut en = EnConfig::default();
            if let Some(q) = e.q_percent {
                en.q_percent = q;
            }
            if let Some(g) = e.pi0_grid {
                en.pi0_grid_lo = g.lo;
                en.pi0_grid_hi = g.hi;
                en.pi0_grid_step = g.step;
            }
            MeasureSpec::new(e.measure_id, e.family, e.a_psi.unwrap_or(1.0), e.direction, en)
        })
        .collect()
}

pub fn read_measure_config(path: &Path) -> Result<Vec<MeasureSpec>> {
    parse_measure_config(&read_input(path)?)
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// center statistics

/// Parses and validates center statistics against the declared measures.
///
/// Poisson rows may leave `effective_size` empty; it is then set to
/// `expected`. Error messages carry the 1-based line number.
pub fn parse_center_stats(csv_text: &str, specs: &[MeasureSpec]) -> Result<Vec<CenterStat>> {
    let families: HashMap<&str, Family> = specs.iter().map(|s| (s.measure_id.as_str(), s.family)).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::input(format!("center file header: {e}")))?
        .clone();
    if header.iter().ne(CENTER_HEADER) {
        return Err(Error::input(format!(
            "line 1: center file header must be exactly {}, got {}",
            CENTER_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut stats = Vec::new();
    let mut keys = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::input(format!("line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize| -> Result<f64> {
            let raw = field(i);
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::input(format!("line {line}: {} is not a number: {raw:?}", CENTER_HEADER[i])))?;
            if !v.is_finite() {
                return Err(Error::input(format!("line {line}: {} must be finite", CENTER_HEADER[i])));
            }
            Ok(v)
        };
        let center_id = field(0).to_string();
        let measure_id = field(1).to_string();
        if center_id.is_empty() || measure_id.is_empty() {
            return Err(Error::input(format!("line {line}: center_id and measure_id are required")));
        }
        let family = *families
            .get(measure_id.as_str())
            .ok_or_else(|| Error::input(format!("line {line}: undeclared measure_id {measure_id}")))?;
        let observed = number(2)?;
        let expected = number(3)?;
        let effective_size = if field(4).is_empty() {
            if family != Family::Poisson {
                return Err(Error::input(format!(
                    "line {line}: {family:?} measure {measure_id} requires effective_size"
                )));
            }
            expected
        } else {
            number(4)?
        };
        if !keys.insert((center_id.clone(), measure_id.clone())) {
            return Err(Error::input(format!(
                "line {line}: duplicate row for center {center_id} measure {measure_id}"
            )));
        }
        stats.push(CenterStat {
            center_id,
            measure_id,
            observed,
            expected,
            effective_size,
        });
    }
    Ok(stats)
}

pub fn read_center_stats(path: &Path, specs: &[MeasureSpec]) -> Result<Vec<CenterStat>> {
    parse_center_stats(&read_input(path)?, specs)
}

// ---------------------------------------------------------------------------
// standardization

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMethod {
    Fe,
    Mom,
    En,
}

impl RunMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fe" => Ok(RunMethod::Fe),
            "mom" => Ok(RunMethod::Mom),
            "en" => Ok(RunMethod::En),
            other => Err(Error::input(format!("unknown method {other:?} (expected fe, mom or en)"))),
        }
    }

    pub fn as_method(self) -> Method {
        match self {
            RunMethod::Fe => Method::FixedEffects,
            RunMethod::Mom => Method::MethodOfMoments,
            RunMethod::En => Method::EmpiricalNull,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationRun {
    pub measures: Vec<MeasureSpec>,
    pub centers: Vec<CenterStat>,
    pub method: RunMethod,
    pub composite_config: CompositeConfig,
    pub mom_q_percent: f64,
    pub output_dir: PathBuf,
}

impl EvaluationRun {
    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::input("center table is empty"));
        }
        let declared: HashSet<&str> = self.measures.iter().map(|m| m.measure_id.as_str()).collect();
        let mut keys = HashSet::new();
        for c in &self.centers {
            if !declared.contains(c.measure_id.as_str()) {
                return Err(Error::input(format!("center {} uses undeclared measure {}", c.center_id, c.measure_id)));
            }
            if !keys.insert((c.center_id.as_str(), c.measure_id.as_str())) {
                return Err(Error::input(format!(
                    "duplicate row for center {} measure {}",
                    c.center_id, c.measure_id
                )));
            }
        }
        self.composite_config.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub center_id: String,
    pub measure_id: String,
    pub z_fe: f64,
    pub z_en: Option<f64>,
    pub z_mom: Option<f64>,
}

impl ScoreRow {
    pub fn value(&self, method: RunMethod) -> Option<f64> {
        match method {
            RunMethod::Fe => Some(self.z_fe),
            RunMethod::En => self.z_en,
            RunMethod::Mom => self.z_mom,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StandardizeOutput {
    pub scores: Vec<ScoreRow>,
    pub null_fits: Vec<NullFit>,
    pub mom_fits: Vec<(String, baselines::MomFit)>,
    pub skipped: Vec<SkippedCenter>,
}

/// Fixed-effects scores for every measure, plus the requested correction.
pub fn standardize(run: &EvaluationRun) -> Result<StandardizeOutput> {
    run.validate()?;
    let mut scores = Vec::new();
    let mut null_fits = Vec::new();
    let mut mom_fits = Vec::new();
    let mut skipped = Vec::new();
    for spec in &run.measures {
        let rows = run.centers.iter().filter(|c| c.measure_id == spec.measure_id);
        let (scored, mut dropped) = standardize_fixed_effects(rows, spec);
        skipped.append(&mut dropped);
        if scored.is_empty() {
            continue;
        }
        let z: Vec<f64> = scored.iter().map(|(z, _)| z.value).collect();
        let sizes: Vec<f64> = scored.iter().map(|(_, s)| s.effective_size).collect();

        let en = match run.method {
            RunMethod::En => {
                let mut fit = fit_empirical_null(&z, &sizes, spec.a_psi, &spec.en_config)
                    .map_err(|e| with_measure(e, &spec.measure_id))?;
                fit.measure_id = spec.measure_id.clone();
                Some(fit)
            }
            _ => None,
        };
        let mom = match run.method {
            RunMethod::Mom => Some(
                fit_method_of_moments(&z, &sizes, run.mom_q_percent, spec.a_psi)
                    .map_err(|e| with_measure(e, &spec.measure_id))?,
            ),
            _ => None,
        };
        for (i, (zs, stat)) in scored.iter().enumerate() {
            scores.push(ScoreRow {
                center_id: stat.center_id.clone(),
                measure_id: stat.measure_id.clone(),
                z_fe: zs.value,
                z_en: en.as_ref().map(|f| z_empirical_null(z[i], sizes[i], f.phi_hat)),
                z_mom: mom.as_ref().map(|f| baselines::z_method_of_moments(z[i], sizes[i], f.phi_mom)),
            });
        }
        null_fits.extend(en);
        if let Some(m) = mom {
            mom_fits.push((spec.measure_id.clone(), m));
        }
    }
    Ok(StandardizeOutput {
        scores,
        null_fits,
        mom_fits,
        skipped,
    })
}

fn with_measure(e: Error, measure: &str) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("measure {measure}: {m}")),
        Error::Fitting(m) => Error::Fitting(format!("measure {measure}: {m}")),
        Error::Convergence(m) => Error::Convergence(format!("measure {measure}: {m}")),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// writers

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_line(fields: &[String]) -> String {
    let mut out = String::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        if f.contains([',', '"', '\n', '\r']) {
            out.push('"');
            out.push_str(&f.replace('"', "\"\""));
            out.push('"');
        } else {
            out.push_str(f);
        }
    }
    out.push('\n');
    out
}

pub fn scores_csv(scores: &[ScoreRow]) -> String {
    let mut out = csv_line(&SCORES_HEADER.map(String::from));
    for r in scores {
        out.push_str(&csv_line(&[
            r.center_id.clone(),
            r.measure_id.clone(),
            fmt6(r.z_fe),
            fmt_opt(r.z_en),
            fmt_opt(r.z_mom),
        ]));
    }
    out
}

#[derive(Serialize)]
struct NullFitReport<'a> {
    measure_id: &'a str,
    phi_hat: f64,
    pi0_hat: f64,
    sigma2_alpha_hat: f64,
    phi_init: f64,
    v: f64,
    n_null_set: usize,
    loglik: f64,
}

/// Rounds to the six-decimal output precision for JSON reports.
fn r6(x: f64) -> f64 {
    fmt6(x).parse().unwrap_or(x)
}

pub fn null_fit_json(fits: &[NullFit]) -> String {
    let reports: Vec<NullFitReport> = fits
        .iter()
        .map(|f| NullFitReport {
            measure_id: &f.measure_id,
            phi_hat: r6(f.phi_hat),
            pi0_hat: r6(f.pi0_hat),
            sigma2_alpha_hat: r6(f.sigma2_alpha_hat),
            phi_init: r6(f.phi_init),
            v: r6(f.v),
            n_null_set: f.n_null_set(),
            loglik: r6(f.loglik),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&reports).expect("plain data serializes");
    s.push('\n');
    s
}

fn skipped_csv(skipped: &[SkippedCenter]) -> String {
    let mut out = csv_line(&["center_id", "measure_id", "reason"].map(String::from));
    for s in skipped {
        out.push_str(&csv_line(&[s.center_id.clone(), s.measure_id.clone(), s.reason.clone()]));
    }
    out
}

fn mom_fit_json(fits: &[(String, baselines::MomFit)]) -> String {
    let v: Vec<serde_json::Value> = fits
        .iter()
        .map(|(id, f)| {
            serde_json::json!({
                "measure_id": id,
                "phi_mom": r6(f.phi_mom),
                "q_percent": r6(f.q_percent),
                "sigma2_alpha_hat": r6(f.sigma2_alpha_hat),
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&v).expect("plain data serializes");
    s.push('\n');
    s
}

/// Writes `scores.csv`, `skipped_centers.csv` and the fit summaries.
pub fn write_scores_report(out: &StandardizeOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    if out.scores.is_empty() {
        return Err(Error::input("no scores to write (empty or fully skipped center table)"));
    }
    let mut written = Vec::new();
    let mut put = |name: &str, contents: String| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };
    put("scores.csv", scores_csv(&out.scores))?;
    put("skipped_centers.csv", skipped_csv(&out.skipped))?;
    if !out.null_fits.is_empty() {
        put("null_fit.json", null_fit_json(&out.null_fits))?;
    }
    if !out.mom_fits.is_empty() {
        put("mom_fit.json", mom_fit_json(&out.mom_fits))?;
    }
    Ok(written)
}

pub fn parse_scores(csv_text: &str) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(csv_text.as_bytes());
    let header = reader.headers().map_err(|e| Error::input(e.to_string()))?.clone();
    if header.iter().ne(SCORES_HEADER) {
        return Err(Error::input(format!("line 1: scores header must be {}", SCORES_HEADER.join(","))));
    }
    let opt = |s: &str, line: u64| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::input(format!("line {line}: not a number: {s:?}")))
        }
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::input(e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            Ok(ScoreRow {
                center_id: rec[0].to_string(),
                measure_id: rec[1].to_string(),
                z_fe: opt(&rec[2], line)?.ok_or_else(|| Error::input(format!("line {line}: z_fe is required")))?,
                z_en: opt(&rec[3], line)?,
                z_mom: opt(&rec[4], line)?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// composite

/// Builds composites from standardized scores using the run's method.
pub fn composite_from_scores(
    scores: &[ScoreRow],
    specs: &[MeasureSpec],
    method: RunMethod,
    config: &CompositeConfig,
) -> Result<CompositeOutput> {
    let measure_ids: Vec<String> = specs.iter().map(|s| s.measure_id.clone()).collect();
    let column: HashMap<&str, usize> = measure_ids.iter().enumerate().map(|(k, m)| (m.as_str(), k)).collect();
    let mut center_ids: Vec<String> = Vec::new();
    let mut row_of: HashMap<&str, usize> = HashMap::new();
    let mut table: Vec<Vec<Option<f64>>> = Vec::new();
    for s in scores {
        let Some(&k) = column.get(s.measure_id.as_str()) else {
            return Err(Error::input(format!("score for undeclared measure {}", s.measure_id)));
        };
        let Some(value) = s.value(method) else {
            return Err(Error::input(format!(
                "center {} measure {} has no {} score",
                s.center_id,
                s.measure_id,
                method.as_method().short_name()
            )));
        };
        let r = *row_of.entry(s.center_id.as_str()).or_insert_with(|| {
            center_ids.push(s.center_id.clone());
            table.push(vec![None; measure_ids.len()]);
            table.len() - 1
        });
        let aligned = match specs[k].direction {
            Direction::HigherIsBetter => value,
            Direction::LowerIsBetter => -value,
        };
        table[r][k] = Some(aligned);
    }
    composite::compose(&center_ids, &table, &measure_ids, config)
}

pub fn composite_csv(out: &CompositeOutput) -> String {
    let mut s = csv_line(&["center_id", "z_cs", "label", "partial"].map(String::from));
    for r in &out.results {
        s.push_str(&csv_line(&[
            r.center_id.clone(),
            fmt6(r.z_cs),
            r.label.as_str().to_string(),
            r.partial.to_string(),
        ]));
    }
    s
}

/// Label percentages; they partition the composite centers.
pub fn label_summary(out: &CompositeOutput) -> Vec<(Label, usize, f64)> {
    let n = out.results.len();
    [Label::Poor, Label::Average, Label::Good]
        .into_iter()
        .map(|label| {
            let count = out.results.iter().filter(|r| r.label == label).count();
            let pct = if n == 0 { 0.0 } else { 100.0 * count as f64 / n as f64 };
            (label, count, pct)
        })
        .collect()
}

pub fn composite_summary_csv(out: &CompositeOutput) -> String {
    let mut s = csv_line(&["label", "count", "percent"].map(String::from));
    for (label, count, pct) in label_summary(out) {
        s.push_str(&csv_line(&[label.as_str().to_string(), count.to_string(), fmt6(pct)]));
    }
    s
}

pub fn composite_weights_csv(out: &CompositeOutput, measure_ids: &[String]) -> String {
    let mut header = vec!["measure_id".to_string(), "weight".into(), "normalized_weight".into()];
    header.extend(measure_ids.iter().map(|m| format!("corr_{m}")));
    let mut s = csv_line(&header);
    for (k, m) in measure_ids.iter().enumerate() {
        let mut row = vec![m.clone(), fmt6(out.weights[k]), fmt6(out.normalized_weights[k])];
        row.extend((0..measure_ids.len()).map(|l| fmt6(out.correlation[(k, l)])));
        s.push_str(&csv_line(&row));
    }
    s
}

pub fn write_composite_report(out: &CompositeOutput, measure_ids: &[String], dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        ("composite.csv", composite_csv(out)),
        ("composite_summary.csv", composite_summary_csv(out)),
        ("composite_weights.csv", composite_weights_csv(out, measure_ids)),
    ];
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// funnel plots

#[derive(Debug, Clone, PartialEq)]
pub struct FunnelRow {
    pub center_id: String,
    pub effective_size: f64,
    pub ratio: f64,
    pub fe_lower: f64,
    pub fe_upper: f64,
    pub en_lower: f64,
    pub en_upper: f64,
}

/// Per-center O/E ratios and control limits without (`phi = 0`) and with
/// the fitted correction.
pub fn funnel_rows(stats: &[CenterStat], spec: &MeasureSpec, phi_hat: f64, alpha_z: f64) -> Vec<FunnelRow> {
    stats
        .iter()
        .filter(|s| s.measure_id == spec.measure_id && s.expected > 0.0 && s.effective_size > 0.0)
        .map(|s| {
            let (fe_lower, fe_upper) = control_limits(0.0, s.expected, s.effective_size, spec.a_psi, alpha_z);
            let (en_lower, en_upper) = control_limits(phi_hat, s.expected, s.effective_size, spec.a_psi, alpha_z);
            FunnelRow {
                center_id: s.center_id.clone(),
                effective_size: s.effective_size,
                ratio: measures::measure_ratio(s).unwrap_or(f64::NAN),
                fe_lower,
                fe_upper,
                en_lower,
                en_upper,
            }
        })
        .collect()
}

pub fn funnel_csv(rows: &[FunnelRow]) -> String {
    let header = ["effective_size", "ratio", "fe_lower", "fe_upper", "en_lower", "en_upper"];
    let mut s = csv_line(&header.map(String::from));
    for r in rows {
        s.push_str(&csv_line(&[
            fmt6(r.effective_size),
            fmt6(r.ratio),
            fmt6(r.fe_lower),
            fmt6(r.fe_upper),
            fmt6(r.en_lower),
            fmt6(r.en_upper),
        ]));
    }
    s
}

/// Self-contained SVG funnel plot: ratio against effective size, FE limits
/// solid, EN limits dotted, and a dot-dashed null line at one.
///
/// Limit curves assume `expected = kappa * size`, with `kappa` the median
/// expected/size ratio of the plotted centers (1 for Poisson measures).
pub fn funnel_svg(stats: &[CenterStat], spec: &MeasureSpec, phi_hat: f64, alpha_z_list: &[f64]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 60.0;
    const MR: f64 = 20.0;
    const MT: f64 = 30.0;
    const MB: f64 = 50.0;

    let points: Vec<(f64, f64)> = stats
        .iter()
        .filter(|s| s.measure_id == spec.measure_id && s.expected > 0.0 && s.effective_size > 0.0)
        .map(|s| (s.effective_size, s.observed / s.expected))
        .collect();
    let kappa = if points.is_empty() {
        1.0
    } else {
        let ratios: Vec<f64> = stats
            .iter()
            .filter(|s| s.measure_id == spec.measure_id && s.expected > 0.0 && s.effective_size > 0.0)
            .map(|s| s.expected / s.effective_size)
            .collect();
        crate::numerics::median(&ratios)
    };
    let x_max = points.iter().map(|p| p.0).fold(1.0, f64::max) * 1.05;
    let y_max = points.iter().map(|p| p.1).fold(2.0, f64::max).min(10.0) * 1.05;
    let sx = |x: f64| ML + x / x_max * (W - ML - MR);
    let sy = |y: f64| H - MB - y.clamp(0.0, y_max) / y_max * (H - MT - MB);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(svg, "<!-- generator: {GENERATOR} -->");
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" style="font-family:sans-serif;font-size:12px">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{W}" height="{H}" style="fill:#ffffff"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" style="text-anchor:middle;font-size:14px">{}</text>"#,
        W / 2.0,
        escape(&spec.measure_id)
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{0}" x2="{1}" y2="{0}" style="stroke:#000000"/>"#,
        H - MB,
        W - MR
    );
    let _ = writeln!(svg, r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" style="stroke:#000000"/>"#, H - MB);
    for i in 0..=4 {
        let xv = x_max * i as f64 / 4.0;
        let yv = y_max * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" style="text-anchor:middle">{:.0}</text>"#,
            sx(xv),
            H - MB + 16.0,
            xv
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" style="text-anchor:end">{:.2}</text>"#,
            ML - 6.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" style="text-anchor:middle">effective size</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" transform="rotate(-90 14 {:.2})" style="text-anchor:middle">observed / expected</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );
    // null line
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{0:.2}" x2="{1}" y2="{0:.2}" style="stroke:#555555;stroke-dasharray:8,3,2,3"/>"#,
        sy(1.0),
        W - MR
    );
    // limit curves
    let grid: Vec<f64> = (1..=200).map(|i| x_max * i as f64 / 200.0).collect();
    for &alpha_z in alpha_z_list {
        for (phi, dash) in [(0.0, ""), (phi_hat, "stroke-dasharray:2,3;")] {
            for upper in [false, true] {
                let pts: Vec<String> = grid
                    .iter()
                    .map(|&n| {
                        let (lo, hi) = control_limits(phi, kappa * n, n, spec.a_psi, alpha_z);
                        format!("{:.2},{:.2}", sx(n), sy(if upper { hi } else { lo }))
                    })
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" style="fill:none;stroke:#1f4e9c;{dash}"/>"#,
                    pts.join(" ")
                );
            }
        }
    }
    for &(x, y) in &points {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" style="fill:#c0392b;fill-opacity:0.7"/>"#,
            sx(x),
            sy(y)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `funnel_<measure>.csv` (first `alpha_z`), one extra CSV per
/// additional `alpha_z`, and `funnel_<measure>.svg`.
pub fn emit_funnel(
    stats: &[CenterStat],
    spec: &MeasureSpec,
    fit: &NullFit,
    alpha_z_list: &[f64],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let Some((&first, rest)) = alpha_z_list.split_first() else {
        return Err(Error::input("at least one control-limit level is required"));
    };
    let name = file_safe(&spec.measure_id);
    let mut written = Vec::new();
    let path = dir.join(format!("funnel_{name}.csv"));
    write_file(&path, &funnel_csv(&funnel_rows(stats, spec, fit.phi_hat, first)))?;
    written.push(path);
    for &a in rest {
        let path = dir.join(format!("funnel_{name}_z{}.csv", fmt6(a)));
        write_file(&path, &funnel_csv(&funnel_rows(stats, spec, fit.phi_hat, a)))?;
        written.push(path);
    }
    let path = dir.join(format!("funnel_{name}.svg"));
    write_file(&path, &funnel_svg(stats, spec, fit.phi_hat, alpha_z_list))?;
    written.push(path);
    Ok(written)
}

// ---------------------------------------------------------------------------
// diagnostics and simulation output

pub fn diagnostic_csv(rows: &[(String, Vec<GroupDiagnostic>)]) -> String {
    let header = ["measure_id", "group", "count", "mean_size", "z_variance", "flag_proportion"];
    let mut s = csv_line(&header.map(String::from));
    for (measure, groups) in rows {
        for (g, d) in groups.iter().enumerate() {
            s.push_str(&csv_line(&[
                measure.clone(),
                (g + 1).to_string(),
                d.count.to_string(),
                fmt6(d.mean_size),
                fmt6(d.z_variance),
                fmt6(d.flag_proportion),
            ]));
        }
    }
    s
}

fn rate_fields(r: &RateEstimate) -> [String; 2] {
    [fmt6(r.rate), fmt6(r.se)]
}

/// Curve tables for whichever experiments the result holds.
pub fn simulation_tables(result: &SimResult) -> Vec<(&'static str, String)> {
    let mut files = Vec::new();
    if !result.flag_curves.is_empty() {
        let mut s = csv_line(
            &[
                "gamma", "fe_rate", "fe_se", "mom_rate", "mom_se", "en_rate", "en_se", "sigma2_en_mean",
                "sigma2_mom_mean", "failed",
            ]
            .map(String::from),
        );
        for p in &result.flag_curves {
            let mut row = vec![fmt6(p.gamma)];
            row.extend(rate_fields(&p.focal.fe));
            row.extend(rate_fields(&p.focal.mom));
            row.extend(rate_fields(&p.focal.en));
            row.push(fmt6(p.sigma2_en.mean));
            row.push(fmt6(p.sigma2_mom.mean));
            row.push(p.failed_iterations.to_string());
            s.push_str(&csv_line(&row));
        }
        files.push(("flag_curves.csv", s));
    }
    if !result.tuning.is_empty() {
        let mut s = csv_line(
            &[
                "q", "sigma2_en_mean", "sigma2_en_sd", "sigma2_mom_mean", "sigma2_mom_sd", "en_rate", "en_se",
                "mom_rate", "mom_se",
            ]
            .map(String::from),
        );
        for p in &result.tuning {
            let mut row = vec![
                fmt6(p.q),
                fmt_opt(p.sigma2_en.map(|m| m.mean)),
                fmt_opt(p.sigma2_en.map(|m| m.sd)),
                fmt6(p.sigma2_mom.mean),
                fmt6(p.sigma2_mom.sd),
                fmt_opt(p.flag_en.map(|r| r.rate)),
                fmt_opt(p.flag_en.map(|r| r.se)),
            ];
            row.extend(rate_fields(&p.flag_mom));
            s.push_str(&csv_line(&row));
        }
        files.push(("tuning.csv", s));
    }
    if !result.composite_curves.is_empty() {
        let mut s = csv_line(
            &["gamma", "center", "fe_rate", "fe_se", "mom_rate", "mom_se", "en_rate", "en_se"].map(String::from),
        );
        for p in &result.composite_curves {
            for (c, r) in p.centers.iter().enumerate() {
                let mut row = vec![fmt6(p.gamma), (c + 1).to_string()];
                row.extend(rate_fields(&r.fe));
                row.extend(rate_fields(&r.mom));
                row.extend(rate_fields(&r.en));
                s.push_str(&csv_line(&row));
            }
        }
        files.push(("composite_curves.csv", s));
    }
    files
}

pub fn write_simulation(result: &SimResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, contents) in simulation_tables(result) {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    let path = dir.join("sim_result.json");
    let mut json = serde_json::to_string_pretty(result).expect("plain data serializes");
    json.push('\n');
    write_file(&path, &json)?;
    written.push(path);
    Ok(written)
}

pub fn read_sim_config(path: &Path) -> Result<crate::simulation::SimConfig> {
    serde_json::from_str(&read_input(path)?)
        .map_err(|e| Error::input(format!("simulation config {}: {e}", path.display())))
}
