#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autoflow::pathology::{GrowthRow, IntegrabilityRow};
use autoflow::{
    approximate_lipschitz, assemble_field, build_counterexample, compute_monotone_map, decompose, find_fixed_points,
    probe_non_integrability, probe_velocity_growth, push_measure, verify_nd, verify_transport, BuildOptions, Error,
    Example, FlowMap, Measure1D, MeasureND, NdVerifyOptions, SeedSpec, Smoothness, Variant, VelocityField1D,
    VerifyOptions,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::{Format, Sink};

const SCHEMA_VERSION: &str = "1";

#[derive(Parser)]
#[command(name = "autoflow", version, about = "Autonomous flows for one-dimensional monotone transport")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "AUTOFLOW_OUT", default_value = "autoflow-out")]
    out: PathBuf,
    /// Format of the data tables; reports are always JSON.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monotone map between two measures: table (x, T, Tp).
    Map {
        #[command(flatten)]
        pair: Pair,
        /// Number of table rows.
        #[arg(long, default_value_t = 4096)]
        n: usize,
    },
    /// Build the velocity field: table (x, v) and a field descriptor.
    Field {
        #[command(flatten)]
        pair: Pair,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Trajectory of one point: table (t, phi).
    Flow {
        #[command(flatten)]
        pair: Pair,
        #[command(flatten)]
        build: BuildArgs,
        /// Starting point.
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Build and verify; exits with 1 when a check fails.
    Verify {
        #[command(flatten)]
        pair: Pair,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Run a named example and write its tables and report.
    Example {
        #[arg(value_enum)]
        name: ExampleName,
        #[command(flatten)]
        params: ExampleParams,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Growth and integrability tables for the non-Lipschitz counterexample.
    Pathology {
        #[arg(long, default_value = "quadratic")]
        variant: Variant,
        /// Last index of the growth stream.
        #[arg(long, default_value_t = 12_000_000)]
        i_max: u64,
        #[arg(long, default_value_t = 1e3)]
        threshold: f64,
        /// Integrability rows run up to 10^max_decade orbit intervals.
        #[arg(long, default_value_t = 6)]
        max_decade: u32,
    },
    /// Transport in several dimensions along rays.
    Sudakov {
        /// JSON measure in R^d, `{"class": ..., "params": {...}}`.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        rays: usize,
        #[arg(long, default_value_t = 0x5eed)]
        rng_seed: u64,
    },
}

#[derive(Args)]
struct Pair {
    /// JSON measure, `{"kind": ..., "params": {...}}`.
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
}

#[derive(Args, Clone)]
struct BuildArgs {
    /// Grid resolution for tables and the pushforward; a power of two, at least 16.
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long)]
    tol_julia: Option<f64>,
    #[arg(long)]
    tol_time: Option<f64>,
    #[arg(long, value_enum, default_value = "affine")]
    seed_kind: SeedArg,
    /// Matched derivatives for Hermite seeds.
    #[arg(long, default_value_t = 1)]
    ck: usize,
    /// Approximate mode: shift the target by at most this much in W1 to get a Lipschitz field.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SeedArg {
    Constant,
    Affine,
    Hermite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExampleName {
    Affine,
    Gaussian,
    BadFixedPoint,
    Accumulating,
    AccumulatingCinf,
}

#[derive(Args)]
struct ExampleParams {
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mean0: f64,
    #[arg(long, default_value_t = 1.0)]
    sd0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    mean1: f64,
    #[arg(long, default_value_t = 2.0)]
    sd1: f64,
    /// Starting point of the written trajectory; defaults to the lower source quartile.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
}

enum Failure {
    Input(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Input(e)
    }
}

type Outcome = Result<(), Failure>;

#[derive(Serialize)]
struct MapRow {
    x: f64,
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "Tp")]
    tp: f64,
}

#[derive(Serialize)]
struct FieldRow {
    x: f64,
    v: f64,
}

#[derive(Serialize)]
struct FlowRow {
    t: f64,
    phi: f64,
}

#[derive(Serialize)]
struct DensityRow {
    x: f64,
    rho0: f64,
    rho1: f64,
    pushed: f64,
}

#[derive(Serialize)]
struct RayRow {
    ray: usize,
    w1: f64,
    confinement: f64,
    direction: String,
    base: String,
}

#[derive(Serialize)]
struct ApproxSummary {
    eps: f64,
    shift: f64,
    w1_to_target: f64,
    l1_to_target: f64,
    lipschitz_grids: Vec<usize>,
    lipschitz_quotients: Vec<f64>,
}

#[derive(Serialize)]
struct PathologyReport<'a> {
    schema_version: &'static str,
    variant: Variant,
    gamma: f64,
    growth_strictly_increasing: bool,
    growth_lower_bound_holds: bool,
    first_above_threshold: Option<u64>,
    threshold: f64,
    integrability_strictly_increasing: bool,
    integrability_plateau_free: bool,
    decade_ratios: &'a [f64],
    anchor_speed_increasing: bool,
    passed: bool,
}

fn read_measure(path: &Path) -> Result<Measure1D, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Measure1D::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_measure_nd(path: &Path) -> Result<MeasureND, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    MeasureND::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn check_n(n: usize) -> Result<(), Failure> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Failure::Input(format!("--n must be a power of two >= 16, got {n}")));
    }
    Ok(())
}

fn positive(name: &str, v: Option<f64>) -> Result<(), Failure> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Failure::Input(format!("--{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl BuildArgs {
    fn validate(&self) -> Result<(), Failure> {
        check_n(self.n)?;
        positive("tol-julia", self.tol_julia)?;
        positive("tol-time", self.tol_time)?;
        positive("eps", self.eps)
    }

    fn seed(&self) -> SeedSpec {
        match self.seed_kind {
            SeedArg::Constant => SeedSpec::constant(None),
            SeedArg::Affine => SeedSpec::affine(),
            SeedArg::Hermite => SeedSpec::hermite(self.ck),
        }
    }

    fn options(&self, base: &BuildOptions) -> BuildOptions {
        let mut o = *base;
        if let Some(t) = self.tol_julia {
            o.tol_julia = t;
        }
        if let Some(t) = self.tol_time {
            o.tol_time = t;
        }
        o
    }

    fn verify_options(&self) -> VerifyOptions {
        let mut o = VerifyOptions {
            n: self.n,
            ..Default::default()
        };
        if let Some(t) = self.tol_julia {
            o.tol_julia = t;
        }
        if let Some(t) = self.tol_time {
            o.tol_time = t;
        }
        o
    }
}

/// Field for `m0 -> m1`, or for `m0 -> shifted m1` in approximate mode, with the target used.
fn build(
    m0: &Measure1D,
    m1: &Measure1D,
    args: &BuildArgs,
    base: &BuildOptions,
    sink: &mut Sink,
) -> Result<(VelocityField1D, Measure1D), Failure> {
    if let Some(eps) = args.eps {
        let out = approximate_lipschitz(m0, m1, eps)?;
        sink.report(
            "approx",
            &ApproxSummary {
                eps,
                shift: out.lambda,
                w1_to_target: out.w1,
                l1_to_target: out.l1,
                lipschitz_grids: out.certificate.grids.clone(),
                lipschitz_quotients: out.certificate.quotients.clone(),
            },
        )?;
        return Ok((out.field, out.target));
    }
    let map = compute_monotone_map(m0, m1);
    let opts = args.options(base);
    let partition = find_fixed_points(&map, opts.tol_fp_for(&map));
    let field = autoflow::build_general(&map, &partition, &[args.seed()], &opts)?;
    Ok((field, m1.clone()))
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
}

fn map_rows(map: &autoflow::MonotoneMap, n: usize) -> Vec<MapRow> {
    let (a, b) = map.source();
    grid(a, b, n)
        .map(|x| MapRow {
            x,
            t: map.forward(x),
            tp: map.derivative(x),
        })
        .collect()
}

fn field_rows(field: &VelocityField1D, n: usize) -> Vec<FieldRow> {
    field.dump(n).into_iter().map(|(x, v)| FieldRow { x, v }).collect()
}

fn flow_rows(field: &VelocityField1D, x0: f64, t_max: f64, steps: usize) -> Result<Vec<FlowRow>, Failure> {
    Ok(FlowMap::new(field.clone())
        .trajectory(x0, t_max, steps)?
        .into_iter()
        .map(|(t, phi)| FlowRow { t, phi })
        .collect())
}

fn density_rows(field: &VelocityField1D, m0: &Measure1D, m1: &Measure1D, n: usize) -> Result<Vec<DensityRow>, Failure> {
    let pushed = push_measure(field, m0, 1.0, n)?;
    let (a0, b0) = m0.window();
    let (a1, b1) = m1.window();
    Ok(grid(a0.min(a1), b0.max(b1), n)
        .map(|x| DensityRow {
            x,
            rho0: m0.density(x),
            rho1: m1.density(x),
            pushed: pushed.density(x),
        })
        .collect())
}

fn verdict(passed: bool, failures: &[String]) -> Outcome {
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification(failures.join("; ")))
    }
}

fn run(cli: Cli) -> Outcome {
    let mut sink = Sink::new(&cli.out, cli.format).map_err(|e| Failure::Input(format!("{}: {e}", cli.out.display())))?;
    let result = dispatch(cli.command, &mut sink);
    for p in sink.written() {
        println!("{}", p.display());
    }
    result
}

fn dispatch(command: Command, sink: &mut Sink) -> Outcome {
    match command {
        Command::Map { pair, n } => {
            check_n(n)?;
            let (m0, m1) = (read_measure(&pair.source)?, read_measure(&pair.target)?);
            sink.table("map", &map_rows(&compute_monotone_map(&m0, &m1), n))?;
            Ok(())
        }
        Command::Field { pair, build: args } => {
            args.validate()?;
            let (m0, m1) = (read_measure(&pair.source)?, read_measure(&pair.target)?);
            let (field, _) = build(&m0, &m1, &args, &BuildOptions::default(), sink)?;
            sink.table("field", &field_rows(&field, args.n))?;
            sink.report("descriptor", &field.descriptor())?;
            Ok(())
        }
        Command::Flow { pair, build: args, x, t_max, steps } => {
            args.validate()?;
            if !t_max.is_finite() || steps == 0 {
                return Err(Failure::Input("--t-max must be finite and --steps positive".into()));
            }
            let (m0, m1) = (read_measure(&pair.source)?, read_measure(&pair.target)?);
            let (field, _) = build(&m0, &m1, &args, &BuildOptions::default(), sink)?;
            sink.table("flow", &flow_rows(&field, x, t_max, steps)?)?;
            Ok(())
        }
        Command::Verify { pair, build: args } => {
            args.validate()?;
            let (m0, m1) = (read_measure(&pair.source)?, read_measure(&pair.target)?);
            let (field, target) = build(&m0, &m1, &args, &BuildOptions::default(), sink)?;
            let report = verify_transport(&field, &m0, &target, &args.verify_options());
            sink.report("report", &report)?;
            verdict(report.passed, &report.failures)
        }
        Command::Example { name, params, build: args } => {
            args.validate()?;
            let ex = match name {
                ExampleName::Affine => Example::affine(params.alpha, params.beta)?,
                ExampleName::Gaussian => Example::gaussian(params.mean0, params.sd0, params.mean1, params.sd1)?,
                ExampleName::BadFixedPoint => Example::bad_fixed_point()?,
                ExampleName::Accumulating => Example::accumulating(Smoothness::C1)?,
                ExampleName::AccumulatingCinf => Example::accumulating(Smoothness::CInf)?,
            };
            let (field, target) = build(&ex.m0, &ex.m1, &args, &ex.options, sink)?;
            let x0 = match params.x0 {
                Some(x) => x,
                None => ex.m0.quantile(0.25)?,
            };
            sink.table("map", &map_rows(field.map(), args.n))?;
            sink.table("field", &field_rows(&field, args.n))?;
            sink.table("densities", &density_rows(&field, &ex.m0, &target, args.n)?)?;
            sink.table("flow", &flow_rows(&field, x0, 1.0, 100)?)?;
            let report = verify_transport(&field, &ex.m0, &target, &args.verify_options());
            sink.report("report", &report)?;
            verdict(report.passed, &report.failures)
        }
        Command::Pathology { variant, i_max, threshold, max_decade } => {
            if !(threshold > 0.0) || i_max < 2 || !(1..=6).contains(&max_decade) {
                return Err(Failure::Input(
                    "need --threshold > 0, --i-max >= 2 and --max-decade in 1..=6".into(),
                ));
            }
            let cmap = build_counterexample(variant)?;
            let growth = probe_velocity_growth(&cmap, i_max, threshold);
            let field = cmap.build_field(&SeedSpec::affine())?;
            let integ = probe_non_integrability(&cmap, &field, max_decade)?;
            let growth_ok = growth.strictly_increasing && growth.lower_bound_holds && growth.first_above_threshold.is_some();
            let integ_ok = variant == Variant::Quadratic || (integ.strictly_increasing() && integ.plateau_free());
            sink.table::<GrowthRow>("growth", &growth.rows)?;
            sink.table::<IntegrabilityRow>("integrability", &integ.rows)?;
            let report = PathologyReport {
                schema_version: SCHEMA_VERSION,
                variant,
                gamma: cmap.gamma,
                growth_strictly_increasing: growth.strictly_increasing,
                growth_lower_bound_holds: growth.lower_bound_holds,
                first_above_threshold: growth.first_above_threshold,
                threshold,
                integrability_strictly_increasing: integ.strictly_increasing(),
                integrability_plateau_free: integ.plateau_free(),
                decade_ratios: &integ.decade_ratios,
                anchor_speed_increasing: integ.anchor_speed_increasing,
                passed: growth_ok && integ_ok,
            };
            sink.report("pathology", &report)?;
            verdict(report.passed, &["counterexample checks failed".to_string()])
        }
        Command::Sudakov { source, target, samples, rays, rng_seed } => {
            if samples < 2 || rays == 0 {
                return Err(Failure::Input("need --samples >= 2 and --rays >= 1".into()));
            }
            let (m0, m1) = (read_measure_nd(&source)?, read_measure_nd(&target)?);
            let family = decompose(&m0, &m1)?;
            let field = assemble_field(&family, &SeedSpec::affine(), &BuildOptions::default())?;
            let opts = NdVerifyOptions {
                n_samples: samples,
                rays,
                rng_seed,
                ..Default::default()
            };
            let report = verify_nd(&field, &m0, &m1, &opts);
            let fmt = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
            let rows: Vec<RayRow> = report
                .rays
                .iter()
                .enumerate()
                .map(|(k, r)| RayRow {
                    ray: k,
                    w1: r.w1,
                    confinement: r.confinement,
                    direction: fmt(&r.ray.direction),
                    base: fmt(&r.ray.base),
                })
                .collect();
            sink.table("rays", &rows)?;
            sink.report("report", &report)?;
            verdict(report.passed, &report.failures)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
