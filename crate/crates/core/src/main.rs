#![allow(clippy::neg_cmp_op_on_partial_ord)]
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use profile_null::composite::{CompositeConfig, WeightScheme};
use profile_null::empirical_null::fit_empirical_null;
use profile_null::io::{self, EvaluationRun, RunMethod};
use profile_null::measures::{group_variance_diagnostic, standardize_fixed_effects};
use profile_null::simulation::{self, SimResult};
use profile_null::{Error, Result};

#[derive(Parser)]
#[command(name = "profile-null", version, about = "Provider profiling against an individualized empirical null")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fe,
    Mom,
    En,
}

impl From<MethodArg> for RunMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fe => RunMethod::Fe,
            MethodArg::Mom => RunMethod::Mom,
            MethodArg::En => RunMethod::En,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Capped,
    Inverse,
    User,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Flagging,
    Tuning,
    Composite,
    All,
}

#[derive(clap::Args)]
struct Inputs {
    /// Center statistics CSV.
    #[arg(long)]
    centers: PathBuf,
    /// Measure configuration JSON.
    #[arg(long)]
    measures: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-effects scores plus the chosen overdispersion correction.
    Standardize {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "en")]
        method: MethodArg,
        /// Winsorization percent for the method of moments.
        #[arg(long, default_value_t = profile_null::baselines::DEFAULT_WINSOR_Q)]
        mom_q: f64,
    },
    /// Standardize, then combine measures into a composite score.
    Composite {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "en")]
        method: MethodArg,
        #[arg(long, default_value_t = profile_null::baselines::DEFAULT_WINSOR_Q)]
        mom_q: f64,
        #[arg(long, value_enum, default_value = "capped")]
        weights: SchemeArg,
        /// Comma-separated weights in measure-config order (with --weights user).
        #[arg(long, value_delimiter = ',')]
        user_weights: Option<Vec<f64>>,
        #[arg(long, default_value_t = -1.96, allow_hyphen_values = true)]
        flag_lower: f64,
        #[arg(long, default_value_t = 1.96)]
        flag_upper: f64,
    },
    /// Funnel-plot data and SVG per measure.
    Funnel {
        #[command(flatten)]
        inputs: Inputs,
        /// Control-limit z levels, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1.96")]
        alpha_z: Vec<f64>,
    },
    /// Monte Carlo studies.
    Simulate {
        /// Simulation config JSON; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        experiment: Experiment,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Z-score variance and flag share by effective-size group.
    Diagnose {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 3)]
        groups: usize,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("PROFILE_NULL_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| Error::Input(format!("PROFILE_NULL_THREADS must be a positive integer, got {raw:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_run(inputs: &Inputs, method: RunMethod, mom_q: f64, composite_config: CompositeConfig) -> Result<EvaluationRun> {
    let measures = io::read_measure_config(&inputs.measures)?;
    let centers = io::read_center_stats(&inputs.centers, &measures)?;
    Ok(EvaluationRun {
        measures,
        centers,
        method,
        composite_config,
        mom_q_percent: mom_q,
        output_dir: inputs.out.clone(),
    })
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Standardize { inputs, method, mom_q } => {
            let run = load_run(&inputs, method.into(), mom_q, CompositeConfig::default())?;
            let out = io::standardize(&run)?;
            for s in &out.skipped {
                eprintln!("skipped center {} measure {}: {}", s.center_id, s.measure_id, s.reason);
            }
            report(&io::write_scores_report(&out, &run.output_dir)?);
        }
        Command::Composite {
            inputs,
            method,
            mom_q,
            weights,
            user_weights,
            flag_lower,
            flag_upper,
        } => {
            let config = CompositeConfig {
                weight_scheme: match weights {
                    SchemeArg::Capped => WeightScheme::CappedCorrReciprocal,
                    SchemeArg::Inverse => WeightScheme::InverseCorrSum,
                    SchemeArg::User => WeightScheme::UserSupplied,
                },
                user_weights,
                flag_lower,
                flag_upper,
            };
            let run = load_run(&inputs, method.into(), mom_q, config)?;
            let scored = io::standardize(&run)?;
            let mut written = io::write_scores_report(&scored, &run.output_dir)?;
            let out = io::composite_from_scores(&scored.scores, &run.measures, run.method, &run.composite_config)?;
            for id in &out.excluded {
                eprintln!("excluded center {id}: fewer than two measures");
            }
            let ids: Vec<String> = run.measures.iter().map(|m| m.measure_id.clone()).collect();
            written.extend(io::write_composite_report(&out, &ids, &run.output_dir)?);
            report(&written);
        }
        Command::Funnel { inputs, alpha_z } => {
            let run = load_run(&inputs, RunMethod::En, 0.0, CompositeConfig::default())?;
            run.validate()?;
            let mut written = Vec::new();
            for spec in &run.measures {
                let rows: Vec<_> = run.centers.iter().filter(|c| c.measure_id == spec.measure_id).cloned().collect();
                let (scored, _) = standardize_fixed_effects(rows.iter(), spec);
                let z: Vec<f64> = scored.iter().map(|(z, _)| z.value).collect();
                let sizes: Vec<f64> = scored.iter().map(|(_, s)| s.effective_size).collect();
                let mut fit = fit_empirical_null(&z, &sizes, spec.a_psi, &spec.en_config)?;
                fit.measure_id = spec.measure_id.clone();
                written.extend(io::emit_funnel(&rows, spec, &fit, &alpha_z, &run.output_dir)?);
            }
            report(&written);
        }
        Command::Simulate { config, experiment, out } => {
            let config = match config {
                Some(p) => io::read_sim_config(&p)?,
                None => simulation::SimConfig::default(),
            };
            config.validate()?;
            let mut result = SimResult::default();
            if matches!(experiment, Experiment::Flagging | Experiment::All) {
                result.flag_curves = simulation::run_flagging_experiment(&config)?.flag_curves;
            }
            if matches!(experiment, Experiment::Tuning | Experiment::All) {
                result.tuning = simulation::run_tuning_sensitivity(&config)?.tuning;
            }
            if matches!(experiment, Experiment::Composite) || (matches!(experiment, Experiment::All) && config.sigma2_alpha.len() >= 2) {
                result.composite_curves = simulation::run_composite_experiment(&config)?.composite_curves;
            }
            result.iterations = config.iterations;
            report(&io::write_simulation(&result, &out)?);
        }
        Command::Diagnose { inputs, groups } => {
            let run = load_run(&inputs, RunMethod::Fe, 0.0, CompositeConfig::default())?;
            run.validate()?;
            let mut table = Vec::new();
            for spec in &run.measures {
                let rows = run.centers.iter().filter(|c| c.measure_id == spec.measure_id);
                let (scored, _) = standardize_fixed_effects(rows, spec);
                let z: Vec<f64> = scored.iter().map(|(z, _)| z.value).collect();
                let sizes: Vec<f64> = scored.iter().map(|(_, s)| s.effective_size).collect();
                table.push((spec.measure_id.clone(), group_variance_diagnostic(&z, &sizes, groups)?));
            }
            let path = run.output_dir.join("diagnostic.csv");
            write(&path, &io::diagnostic_csv(&table))?;
            report(&[path]);
        }
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
