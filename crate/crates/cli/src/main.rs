use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use framekit::atomic::{approx_dual_ratio, atomic_certificate, construct_exact_dual, woven_atomic_certificate};
use framekit::gframe::lg_frame_bounds;
use framekit::harness::generate::{
    generate_instance, BlockDims, InstanceKind, InstanceParams, InstanceSpec, WeightProfile,
};
use framekit::harness::io::{self, family_to_json, load_instance, load_target, table_to_csv, Format, Instance};
use framekit::harness::suite::run_suite;
use framekit::linalg::Tolerances;
use framekit::perturbation::{perturbation_check, DEFAULT_SAMPLES};
use framekit::weaving::{woven_bounds_logged, Strategy};
use framekit::{Error, TargetOperator};

#[derive(Parser)]
#[command(name = "framekit", version, about = "Bounds, weaving checks and duals for finite g-frames")]
struct Cli {
    /// Slack for predicted-bound checks.
    #[arg(long, global = true, env = "FRAMEKIT_TOL")]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Json => Format::Json,
            OutputFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Gframe,
    LgFrame,
    WovenPair,
    AtomicSystem,
    ApproxDualPair,
    PerturbedPair,
}

impl From<KindArg> for InstanceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Gframe => InstanceKind::Gframe,
            KindArg::LgFrame => InstanceKind::LgFrame,
            KindArg::WovenPair => InstanceKind::WovenPair,
            KindArg::AtomicSystem => InstanceKind::AtomicSystem,
            KindArg::ApproxDualPair => InstanceKind::ApproxDualPair,
            KindArg::PerturbedPair => InstanceKind::PerturbedPair,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Uniform,
    Random,
}

#[derive(Args)]
struct InputArgs {
    /// Instance JSON (a family, or an object with chi/xi/phi/L).
    #[arg(long, short)]
    input: PathBuf,
    /// Target operator JSON; overrides the instance's "L".
    #[arg(long)]
    target: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self) -> Result<(Instance, TargetOperator), Error> {
        let inst = load_instance(&self.input)?;
        let target = match &self.target {
            Some(path) => load_target(path)?,
            None => inst.target_or_identity(),
        };
        Ok((inst, target))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance.
    Gen {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        indices: usize,
        /// One block dimension for every index, or a comma-separated list.
        #[arg(long, default_value = "1", value_delimiter = ',')]
        block_dims: Vec<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        dual_defect: Option<f64>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
        weights: WeightsArg,
    },
    /// Optimal (L-)g-frame bounds of `chi`.
    Bounds(InputArgs),
    /// Universal woven bounds of the pair (chi, xi).
    Weave {
        #[command(flatten)]
        input: InputArgs,
        /// Partition sample size; exhaustive when omitted and N is small.
        #[arg(long)]
        samples: Option<usize>,
        /// Per-partition CSV (bitmask, lower, upper).
        #[arg(long)]
        log_partitions: Option<PathBuf>,
    },
    /// Atomic certificate of chi, or of the woven system with --woven.
    Atomic {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        woven: bool,
    },
    /// Approximate-dual constant of (chi, phi), or (chi, xi) without phi.
    Dual {
        #[command(flatten)]
        input: InputArgs,
        /// Emit the constructed exact dual family instead of the report.
        #[arg(long)]
        construct: bool,
    },
    /// Check that xi is an (alpha1, alpha2)-perturbation of chi.
    Perturb {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        alpha1: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha2: f64,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
    },
    /// Run seeded verification suites.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 10)]
        instances: usize,
    },
}

/// Result text plus whether every check it carries passed.
struct Outcome {
    text: String,
    passed: bool,
}

fn render<T: serde::Serialize>(value: &T, format: Format, passed: bool) -> Result<Outcome, Error> {
    Ok(Outcome { text: io::render(value, format)?, passed })
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let tol = cli.tol.map_or_else(Tolerances::default, Tolerances::with_check);
    if !(tol.check.is_finite() && tol.check >= 0.0) {
        return Err(Error::Parse(format!("tolerance {} must be a nonnegative number", tol.check)));
    }
    let format = Format::from(cli.format);
    match &cli.command {
        Command::Gen { kind, dim, indices, block_dims, rank, delta, dual_defect, alpha1, weights } => {
            let defaults = InstanceParams::default();
            let spec = InstanceSpec {
                kind: (*kind).into(),
                dim: *dim,
                indices: *indices,
                block_dims: match block_dims.as_slice() {
                    [d] => BlockDims::Constant(*d),
                    many => BlockDims::PerIndex(many.to_vec()),
                },
                params: InstanceParams {
                    target_rank: *rank,
                    delta: delta.unwrap_or(defaults.delta),
                    dual_defect: dual_defect.unwrap_or(defaults.dual_defect),
                    alpha1: alpha1.unwrap_or(defaults.alpha1),
                    weights: match weights {
                        WeightsArg::Uniform => WeightProfile::Uniform,
                        WeightsArg::Random => WeightProfile::Random,
                    },
                },
                seed: cli.seed,
            };
            if format == Format::Csv {
                return Err(Error::Parse("instances are JSON only".into()));
            }
            let inst = generate_instance(&spec)?;
            Ok(Outcome { text: io::instance_to_json(&inst) + "\n", passed: true })
        }
        Command::Bounds(input) => {
            let (inst, target) = input.load()?;
            render(&lg_frame_bounds(&inst.chi, &target, &tol)?, format, true)
        }
        Command::Weave { input, samples, log_partitions } => {
            let (inst, target) = input.load()?;
            let strategy = match samples {
                Some(count) => Strategy::Sampled { count: *count, seed: cli.seed },
                None => Strategy::auto(inst.chi.len(), cli.seed),
            };
            let mut report =
                woven_bounds_logged(&inst.chi, inst.require_xi()?, &target, strategy, &tol, log_partitions.is_some())?;
            if let (Some(path), Some(log)) = (log_partitions, report.per_partition_log.take()) {
                let rows = PartitionLog(log.iter().map(|r| (r.partition.to_string(), r.lower, r.upper)).collect());
                std::fs::write(path, table_to_csv(&rows)?)?;
            }
            render(&report, format, true)
        }
        Command::Atomic { input, woven } => {
            let (inst, target) = input.load()?;
            if *woven {
                let r = woven_atomic_certificate(
                    &inst.chi,
                    inst.require_xi()?,
                    &target,
                    Strategy::auto(inst.chi.len(), cli.seed),
                    &tol,
                )?;
                let passed = r.holds;
                render(&r, format, passed)
            } else {
                let c = atomic_certificate(&inst.chi, &target, &tol)?;
                let passed = c.valid;
                render(&c, format, passed)
            }
        }
        Command::Dual { input, construct } => {
            let (inst, target) = input.load()?;
            let dual = match &inst.phi {
                Some(phi) => phi,
                None => inst.require_xi()?,
            };
            if *construct {
                let built = construct_exact_dual(&inst.chi, dual, &target, &tol)?;
                Ok(Outcome { text: family_to_json(&built.dual) + "\n", passed: true })
            } else {
                let r = approx_dual_ratio(&inst.chi, dual, &target, &tol)?;
                let passed = r.is_approximate;
                render(&r, format, passed)
            }
        }
        Command::Perturb { input, alpha1, alpha2, samples } => {
            let (inst, _) = input.load()?;
            let r = perturbation_check(&inst.chi, inst.require_xi()?, *alpha1, *alpha2, *samples, cli.seed, &tol)?;
            let passed = r.verified;
            render(&r, format, passed)
        }
        Command::Verify { suite, instances } => {
            let report = run_suite(suite, *instances, cli.seed, &tol)?;
            let text = match format {
                Format::Json => io::render(&report, format)?,
                Format::Csv => table_to_csv(&report)?,
            };
            Ok(Outcome { text, passed: report.passed() })
        }
    }
}

struct PartitionLog(Vec<(String, f64, f64)>);

impl io::CsvTable for PartitionLog {
    fn header(&self) -> Vec<&'static str> {
        vec!["bitmask", "lower", "upper"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0.iter().map(|(m, lo, hi)| vec![m.clone(), lo.to_string(), hi.to_string()]).collect()
    }
}

fn is_usage_error(e: &Error) -> bool {
    matches!(e, Error::Parse(_) | Error::SpecInvalid(_) | Error::UnknownSuite(_) | Error::Io(_))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let written = match &cli.output {
                Some(path) => std::fs::write(path, &outcome.text),
                None => {
                    print!("{}", outcome.text);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
