//! `landau`: sampling, density estimation and bound verification for the
//! Landau equation with Maxwellian molecules.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use config::{parse_points, Format, SamplerChoice, SchemeChoice, Settings};
use landau_core::brownian::BmConfig;
use landau_core::density::{self, DensityConfig, Query};
use landau_core::geometry;
use landau_core::linalg::Vector;
use landau_core::model::{InitialLaw, LawLabel};
use landau_core::sampler::{simulate_ensemble, FactorizedSampler};
use landau_core::Error;
use output::{fmt, Meta, Sink, Table};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "landau", version = output::VERSION, about = "Landau equation (Maxwellian molecules): sampling and density bounds")]
struct Cli {
    /// JSON file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw X_t from the factorized sampler or a particle ensemble.
    Sample(Settings),
    /// Monte Carlo transition density on a list or grid of points.
    Density(Settings),
    /// Run one verification suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Suite {
    Bds,
    Multiscale,
    Degenerate,
    Radial,
    HaarVolume,
    TimeReversal,
}

/// Failure categories with their exit codes.
enum Failure {
    Assertion,
    Config(String),
    Io(String),
    Precision(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Assertion => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Precision(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InsufficientPrecision { .. } => Failure::Precision(e.to_string()),
            Error::Io(m) => Failure::Io(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Assertion => eprintln!("verification failed"),
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
                Failure::Precision(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) => Settings::load(p).map_err(Failure::Config)?,
        None => Settings::default(),
    };
    let (name, flags) = match &cli.command {
        Command::Sample(s) => ("sample".to_string(), s.clone()),
        Command::Density(s) => ("density".to_string(), s.clone()),
        Command::Verify { suite, settings } => (format!("verify {}", suite_name(*suite)), settings.clone()),
    };
    let defaults = match &cli.command {
        Command::Verify { suite, .. } => suite_defaults(*suite),
        Command::Sample(_) => Settings { n: Some(3), law: Some("isotropic".into()), steps: Some(512), ..base_defaults() },
        Command::Density(_) => {
            Settings { n: Some(3), law: Some("isotropic".into()), paths: Some(10_000), dt: Some(1e-3), ..base_defaults() }
        }
    };
    let s = flags.over(&file.over(&defaults));
    if let Some(k) = s.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(|e| Failure::Config(e.to_string()))?;
    }
    let sink = Sink::new(s.output.clone(), s.format.unwrap_or(Format::Csv));
    let meta = Meta::new(&name, &s);
    match cli.command {
        Command::Sample(_) => cmd_sample(&s, &sink, &meta),
        Command::Density(_) => cmd_density(&s, &sink, &meta),
        Command::Verify { suite, .. } => cmd_verify(suite, &s, &sink, &meta),
    }
}

fn base_defaults() -> Settings {
    Settings { energy: Some(1.0), format: Some(Format::Csv), scheme: Some(SchemeChoice::Geometric), ..Default::default() }
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Bds => "bds",
        Suite::Multiscale => "multiscale",
        Suite::Degenerate => "degenerate",
        Suite::Radial => "radial",
        Suite::HaarVolume => "haar-volume",
        Suite::TimeReversal => "time-reversal",
    }
}

fn suite_defaults(s: Suite) -> Settings {
    let b = Settings { format: Some(Format::Json), ..base_defaults() };
    match s {
        Suite::Bds => Settings {
            n: Some(2),
            law: Some("aniso:0.7,0.3".into()),
            t: Some(vec![0.1, 0.5, 1.0]),
            paths: Some(10_000),
            dt: Some(1e-3),
            ..b
        },
        Suite::Multiscale => {
            Settings { n: Some(3), law: Some("isotropic".into()), t: Some(vec![0.1, 0.5, 1.0]), paths: Some(100_000), dt: Some(1e-3), ..b }
        }
        Suite::Degenerate => Settings {
            n: Some(3),
            law: Some("line:e1".into()),
            t: Some(vec![0.02, 0.05]),
            paths: Some(400_000),
            dt: Some(1e-4),
            tmax: Some(0.1),
            ..b
        },
        Suite::Radial => Settings {
            n: Some(3),
            law: Some("isotropic".into()),
            t: Some(vec![0.5, 25.0]),
            paths: Some(100_000),
            dt: Some(1e-2),
            energy: None,
            ..b
        },
        Suite::HaarVolume => Settings { n: Some(3), paths: Some(1_000_000), ..b },
        Suite::TimeReversal => {
            Settings { n: Some(3), law: Some("aniso:0.6,0.3,0.1".into()), t: Some(vec![1.0]), paths: Some(20_000), steps: Some(200), ..b }
        }
    }
}

fn need<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, Failure> {
    v.clone().ok_or_else(|| Failure::Config(format!("missing required --{flag}")))
}

fn law_of(s: &Settings) -> Result<InitialLaw, Failure> {
    let n = need(&s.n, "n")?;
    Ok(InitialLaw::parse(&need(&s.law, "law")?, n, s.energy.unwrap_or(1.0))?)
}

fn positive(x: usize, flag: &str) -> Result<usize, Failure> {
    if x == 0 {
        Err(Failure::Config(format!("--{flag} must be at least 1")))
    } else {
        Ok(x)
    }
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<Vector, Failure> {
    if v.len() != n {
        return Err(Failure::Config(format!("{what} has {} coordinates, expected {n}", v.len())));
    }
    Ok(Vector::from_slice(v))
}

fn single_time(s: &Settings) -> Result<f64, Failure> {
    let t = need(&s.t, "t")?;
    match t.as_slice() {
        [t] if *t > 0.0 => Ok(*t),
        [_] => Err(Failure::Config("--t must be positive".into())),
        _ => Err(Failure::Config("this command takes a single --t".into())),
    }
}

fn regime(law: &InitialLaw) -> &'static str {
    match law.label() {
        LawLabel::NonDegenerate => "non_degenerate",
        LawLabel::DegenerateLine => "degenerate",
    }
}

fn cmd_sample(s: &Settings, sink: &Sink, meta: &Meta) -> Outcome {
    let seed = need(&s.seed, "seed")?;
    let law = law_of(s)?;
    let n = law.dim();
    let t = single_time(s)?;
    let paths = positive(need(&s.paths, "paths")?, "paths")?;
    let steps = positive(need(&s.steps, "steps")?, "steps")?;
    let x0 = s.x0.as_ref().map(|v| vector(v, n, "--x0")).transpose()?;
    let mut cols = vec!["index".to_string(), "t".to_string()];
    cols.extend((1..=n).map(|i| format!("x0_{i}")));
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    let mut table;
    match s.sampler.unwrap_or(SamplerChoice::Factorized) {
        SamplerChoice::Factorized => {
            let cfg = BmConfig::new(n, t, steps, seed)?.with_scheme(s.scheme.unwrap_or(SchemeChoice::Geometric).into());
            let sampler = FactorizedSampler::new(cfg, law.clone())?;
            cols.push("log_scale".into());
            table = Table::new(cols);
            table.rows = (0..paths)
                .into_par_iter()
                .map(|i| {
                    let (start, smp) = match &x0 {
                        Some(x) => (*x, sampler.sample(x, i as u64)),
                        None => sampler.sample_from_law(i as u64),
                    };
                    let mut r = vec![i.to_string(), fmt(t)];
                    r.extend(start.to_vec().into_iter().map(fmt));
                    r.extend(smp.x.to_vec().into_iter().map(fmt));
                    r.push(fmt(smp.log_scale));
                    r
                })
                .collect();
        }
        SamplerChoice::Particle => {
            if x0.is_some() {
                return Err(Failure::Config("--x0 is not used by the particle sampler".into()));
            }
            if paths < 2 {
                return Err(Failure::Config("the particle sampler needs --paths >= 2".into()));
            }
            let run = simulate_ensemble(&law, paths, t / steps as f64, steps, seed, 0)?;
            table = Table::new(cols);
            table.rows = run
                .initial
                .iter()
                .zip(&run.ensemble.positions)
                .enumerate()
                .map(|(i, (a, b))| {
                    let mut r = vec![i.to_string(), fmt(t)];
                    r.extend(a.to_vec().into_iter().map(fmt));
                    r.extend(b.to_vec().into_iter().map(fmt));
                    r
                })
                .collect();
        }
    }
    sink.write_table(meta, &table, json!({ "regime": regime(&law), "lambda_bar": law.lambda_bar() }))?;
    Ok(())
}

fn cmd_density(s: &Settings, sink: &Sink, meta: &Meta) -> Outcome {
    let seed = need(&s.seed, "seed")?;
    let law = law_of(s)?;
    let n = law.dim();
    let times = need(&s.t, "t")?;
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return Err(Failure::Config("--t must list positive times".into()));
    }
    let paths = positive(need(&s.paths, "paths")?, "paths")?;
    let dt = need(&s.dt, "dt")?;
    let x0 = vector(s.x0.as_deref().unwrap_or(&vec![0.0; n]), n, "--x0")?;
    let points: Vec<Vector> = match (&s.v, s.grid_half_width, s.grid_points) {
        (Some(v), None, None) => {
            let pts = parse_points(v).map_err(Failure::Config)?;
            pts.iter().map(|p| vector(p, n, "--v point")).collect::<Result<_, _>>()?
        }
        (None, Some(h), Some(k)) => {
            if n > 3 || k == 0 || !(h > 0.0) {
                return Err(Failure::Config("grid needs N <= 3, --grid-points >= 1 and --grid-half-width > 0".into()));
            }
            let step = 2.0 * h / k as f64;
            (0..k.pow(n as u32))
                .map(|mut idx| {
                    Vector::from_fn(n, |_| {
                        let j = idx % k;
                        idx /= k;
                        -h + (j as f64 + 0.5) * step
                    })
                })
                .collect()
        }
        _ => return Err(Failure::Config("give either --v or both --grid-half-width and --grid-points".into())),
    };
    if points.is_empty() {
        return Err(Failure::Config("no evaluation points".into()));
    }
    let dc = DensityConfig { n_paths: paths, dt, seed, scheme: s.scheme.unwrap_or(SchemeChoice::Geometric).into() };
    let queries: Vec<Query> = times.iter().flat_map(|&t| points.iter().map(move |&v| Query { t, x0, v })).collect();
    let est = density::mc_density_batch(&law, &dc, &queries)?;
    let env = match law.label() {
        LawLabel::NonDegenerate => Some(density::sample_envelopes(&law, &dc, &queries)?),
        LawLabel::DegenerateLine => None,
    };
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x0_{i}")));
    cols.extend((1..=n).map(|i| format!("v_{i}")));
    cols.extend(["f", "se", "lower", "upper", "skipped"].map(String::from));
    let mut table = Table::new(cols);
    let mut integral = 0.0;
    for (i, e) in est.iter().enumerate() {
        let mut r = vec![fmt(e.t)];
        r.extend(e.x0.iter().chain(&e.v).map(|&x| fmt(x)));
        r.push(fmt(e.value));
        r.push(fmt(e.std_error));
        match &env {
            Some(env) => {
                r.push(fmt(env[i].lower));
                r.push(fmt(env[i].upper));
            }
            None => r.extend([String::new(), String::new()]),
        }
        r.push(e.n_skipped.to_string());
        table.rows.push(r);
        integral += e.value;
    }
    let mut info = json!({ "regime": regime(&law) });
    if let (Some(h), Some(k)) = (s.grid_half_width, s.grid_points) {
        let cell = (2.0 * h / k as f64).powi(n as i32);
        info["grid_integral_per_time"] = json!(integral * cell / times.len() as f64);
    }
    sink.write_table(meta, &table, info)?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyDoc<T: Serialize> {
    suite: Suite,
    pass: bool,
    report: T,
}

fn emit<T: Serialize>(sink: &Sink, meta: &Meta, suite: Suite, pass: bool, report: T) -> Outcome {
    sink.write_report(meta, &VerifyDoc { suite, pass, report })?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

fn cmd_verify(suite: Suite, s: &Settings, sink: &Sink, meta: &Meta) -> Outcome {
    let seed = need(&s.seed, "seed")?;
    let paths = positive(need(&s.paths, "paths")?, "paths")?;
    let n = need(&s.n, "n")?;
    let dc = |dt: f64| DensityConfig { n_paths: paths, dt, seed, scheme: s.scheme.unwrap_or(SchemeChoice::Geometric).into() };
    match suite {
        Suite::Bds => {
            let law = law_of(s)?;
            let times = need(&s.t, "t")?;
            let pairs = density::random_pairs(n, 20, seed);
            let r = density::verify_bds(&law, &times, &pairs, &dc(need(&s.dt, "dt")?))?;
            emit(sink, meta, suite, r.pass, r)
        }
        Suite::Multiscale => {
            let law = law_of(s)?;
            let settings = density::MultiscaleSettings {
                grid: density::MultiscaleGrid {
                    times: need(&s.t, "t")?,
                    magnitudes: vec![0.5, 1.0, 2.0, 5.0, 10.0],
                    angles: vec![0.0, std::f64::consts::FRAC_PI_2],
                    angle_min_time: 0.5,
                    angle_product: 1.0,
                },
                slice_t: 0.5,
                slice_radii: vec![2.0, 5.0, 10.0],
                slice_ratio: 0.05,
            };
            let d = dc(need(&s.dt, "dt")?);
            let r = density::verify_multiscale_bounds(&law, &settings, &d)?;
            let slice = density::super_diffusive_slice(&law, &settings, &d)?;
            let orth = density::orthogonal_representation_slice(&law, &settings, &d).ok();
            emit(sink, meta, suite, r.pass, json!({ "envelope": r, "slice": slice, "orthogonal_representation_slice": orth }))
        }
        Suite::Degenerate => {
            let settings = density::DegenerateSettings {
                grid: density::DegenerateGrid {
                    starts: vec![0.0, 0.5],
                    times: need(&s.t, "t")?,
                    axial: vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
                    transverse: vec![0.5, 1.0, 1.5, 2.0, 3.0],
                },
                t_max: need(&s.tmax, "tmax")?,
                regime_limit: 0.1,
                det_paths: paths.min(10_000),
            };
            let r = density::verify_degenerate_bounds(&settings, n, &dc(need(&s.dt, "dt")?))?;
            emit(sink, meta, suite, r.pass, r)
        }
        Suite::Radial => {
            if s.law.as_deref() != Some("isotropic") {
                return Err(Failure::Config("the radial suite uses an isotropic Gaussian law".into()));
            }
            let law = InitialLaw::isotropic(n, s.energy.unwrap_or(n as f64));
            let radii = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
            let r = density::radial_convolution_check(&law, &need(&s.t, "t")?, &radii, &dc(need(&s.dt, "dt")?))?;
            emit(sink, meta, suite, r.pass, r)
        }
        Suite::HaarVolume => {
            let radii = haar_radii(n);
            let v = geometry::volume_scaling(n, &radii, paths, seed);
            let rel = (v.exponent / v.expected - 1.0).abs();
            let rt = geometry::phi_round_trip_error(n, 1000, seed);
            let pass = rel <= 0.15 && rt <= 1e-10;
            emit(sink, meta, suite, pass, json!({ "volume": v, "relative_exponent_error": rel, "phi_round_trip_max_error": rt }))
        }
        Suite::TimeReversal => {
            let law = law_of(s)?;
            let t = single_time(s)?;
            let steps = positive(need(&s.steps, "steps")?, "steps")?;
            let cfg = BmConfig::new(n, t, steps, seed)?;
            let rev = landau_core::brownian::time_reversed_law_check(&cfg, paths, cfg.time(steps * 2 / 5))?;
            let det = density::det_law_comparison(&law, &cfg, paths)?;
            let pass = rev.ks.p_value >= 0.01 && det.ks.p_value >= 0.01;
            emit(sink, meta, suite, pass, json!({ "time_reversal": rev, "det_law": det }))
        }
    }
}

/// Radii inside the small-ball regime of the Carnot distance.
fn haar_radii(n: usize) -> Vec<f64> {
    let top = 0.6 * geometry::carnot_cap(n).min(2.0);
    (1..=5).map(|k| top * k as f64 / 5.0).collect()
}
