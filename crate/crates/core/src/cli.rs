//! The `solar` command-line tool.
//!
//! Exit status: 0 success, 2 usage or validation error, 3 numerical failure,
//! 4 SVD fingerprint mismatch. Machine-readable output goes to stdout,
//! diagnostics to stderr. `SOLAR_THREADS` caps the worker pool.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{
    effective_sketch_rank, empirical_rangefinder_error, similarity_grid, total_bound, BoundInputs, Side,
    TrainingTerms,
};
use crate::basis::{generate_pool, BasisMode, BasisPoolSpec, PoolTag};
use crate::bench::{
    baselines_to_csv, compare_baselines, default_grid, parse_config, sweep, synth, GridPoint, Spectrum,
    SweepConfig, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::format::{file_accounting, read_npy, read_solar, write_npy, write_solar};
use crate::linalg::{svd_full, DenseMatrix};
use crate::pipeline::{
    compress_with_svd, numerical_rank, reconstruct, relative_error, AdapterPair, Budget, CompressConfig,
};
use crate::quant::{footprint_params, preset, presets, FootprintScheme};

/// Flags that take no value; a config file sets them with `key = true`.
const SWITCHES: &[&str] = &["refit", "no-fingerprint", "timing", "json", "list", "compare", "verbose"];

const SUBCOMMANDS: &[&str] = &[
    "compress",
    "reconstruct",
    "analyze",
    "bound",
    "footprint",
    "synth",
    "sweep",
];

#[derive(Debug, Parser)]
#[command(name = "solar", version, about = "Compress low-rank adapters into seeded sparse coefficients")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat key=value file; keys are long flag names, explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Extra diagnostics on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress one adapter into a .solar file.
    Compress(CompressArgs),
    /// Rebuild adapter factors from a .solar file and the foundation weight.
    Reconstruct(ReconstructArgs),
    /// Subspace similarity grid between a weight and an update, as CSV.
    Analyze(AnalyzeArgs),
    /// Closed-form compression-error bound, as JSON.
    Bound(BoundArgs),
    /// Representation footprint of a preset, a formula or an artifact.
    Footprint(FootprintArgs),
    /// Write a synthetic weight and adapter as NPY files.
    Synth(SynthArgs),
    /// Pool-size / budget sweep on a synthetic instance, as CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Aligned,
    Random,
}

impl From<ModeArg> for BasisMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Aligned => BasisMode::Aligned,
            ModeArg::Random => BasisMode::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccountingArg {
    Param,
    Byte,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub adapter_a: PathBuf,
    #[arg(long)]
    pub adapter_b: PathBuf,
    #[arg(long)]
    pub pool_a: usize,
    #[arg(long)]
    pub pool_b: usize,
    #[arg(long)]
    pub topk_a: Option<usize>,
    #[arg(long)]
    pub topk_b: Option<usize>,
    /// Budget for each side when the per-side flags are absent.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Total budget split between sides by projected energy.
    #[arg(long, conflicts_with_all = ["topk", "topk_a", "topk_b"])]
    pub budget_total: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coefficient width: 2, 4, 8, 16, 32 or 64 (raw f64, the default).
    #[arg(long)]
    pub quant: Option<u8>,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long)]
    pub refit: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Aligned)]
    pub basis_mode: ModeArg,
    #[arg(long)]
    pub no_fingerprint: bool,
    #[arg(long, default_value = "delta")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_a: PathBuf,
    #[arg(long)]
    pub out_b: PathBuf,
    #[arg(long)]
    pub out_delta: Option<PathBuf>,
    /// Tensor to rebuild when the file holds several.
    #[arg(long)]
    pub tensor: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Dense update; alternatively give both adapter factors.
    #[arg(long, conflicts_with_all = ["adapter_a", "adapter_b"])]
    pub delta: Option<PathBuf>,
    #[arg(long, requires = "adapter_b")]
    pub adapter_a: Option<PathBuf>,
    #[arg(long, requires = "adapter_a")]
    pub adapter_b: Option<PathBuf>,
    #[arg(long)]
    pub max_i: Option<usize>,
    #[arg(long)]
    pub max_j: Option<usize>,
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    pub side: SideArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Comma-separated singular values of the update.
    #[arg(long, value_delimiter = ',', conflicts_with = "delta")]
    pub sigma: Option<Vec<f64>>,
    /// Dense update NPY; its singular values are used.
    #[arg(long)]
    pub delta: Option<PathBuf>,
    #[arg(long)]
    pub pool_a: usize,
    #[arg(long)]
    pub pool_b: usize,
    /// Effective ranks; computed from sketches when absent (needs --weights and --delta).
    #[arg(long)]
    pub rank_a: Option<usize>,
    #[arg(long)]
    pub rank_b: Option<usize>,
    /// Total sparsity budget.
    #[arg(long)]
    pub topk: usize,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Slice width for sketch pools; defaults to the update's numerical rank.
    #[arg(long)]
    pub slice_width: Option<usize>,
    #[arg(long, requires_all = ["kappa", "lambda", "eta", "steps"])]
    pub r_star: Option<usize>,
    #[arg(long, requires = "r_star")]
    pub kappa: Option<f64>,
    #[arg(long, requires = "r_star")]
    pub lambda: Option<f64>,
    #[arg(long, requires = "r_star")]
    pub eta: Option<f64>,
    #[arg(long, requires = "r_star")]
    pub steps: Option<u64>,
    /// Monte-Carlo check of the rangefinder term with this many trials (needs --delta).
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FootprintArgs {
    #[arg(long, conflicts_with_all = ["layers", "artifact", "list"])]
    pub preset: Option<String>,
    #[arg(long)]
    pub list: bool,
    /// Account for an encoded .solar file.
    #[arg(long, conflicts_with = "layers")]
    pub artifact: Option<PathBuf>,
    #[arg(long, requires_all = ["topk_a", "topk_b", "pool_a"])]
    pub layers: Option<u64>,
    #[arg(long)]
    pub topk_a: Option<u64>,
    #[arg(long)]
    pub topk_b: Option<u64>,
    #[arg(long)]
    pub pool_a: Option<u64>,
    #[arg(long)]
    pub pool_b: Option<u64>,
    /// Mask bits per layer in byte mode; defaults to pool-a + pool-b.
    #[arg(long)]
    pub n_mask: Option<u64>,
    #[arg(long, default_value_t = 32)]
    pub bits: u8,
    #[arg(long, value_enum, default_value_t = AccountingArg::Param)]
    pub mode: AccountingArg,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthSpecArgs {
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub r: usize,
    /// geometric:<ratio>, polynomial:<power> or flat.
    #[arg(long, default_value = "geometric:0.9")]
    pub spectrum: String,
    #[arg(long, default_value_t = 1.0)]
    pub alignment: f64,
    #[arg(long, default_value_t = 0)]
    pub synth_seed: u64,
}

impl SynthSpecArgs {
    fn spec(&self) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            m: self.m,
            n: self.n,
            r: self.r,
            spectrum: self.spectrum.parse::<Spectrum>()?,
            alignment: self.alignment,
            seed: self.synth_seed,
        })
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub spec: SynthSpecArgs,
    #[arg(long)]
    pub out_weights: PathBuf,
    #[arg(long)]
    pub out_a: PathBuf,
    #[arg(long)]
    pub out_b: PathBuf,
    #[arg(long)]
    pub out_delta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub spec: SynthSpecArgs,
    /// Pool sizes; with --topk forms the full grid. Default grid otherwise.
    #[arg(long, value_delimiter = ',', requires = "topk")]
    pub pools: Option<Vec<usize>>,
    /// Per-side budgets.
    #[arg(long, value_delimiter = ',', requires = "pools")]
    pub topk: Option<Vec<usize>>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModeArg::Aligned, ModeArg::Random])]
    pub modes: Vec<ModeArg>,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long)]
    pub refit: bool,
    #[arg(long)]
    pub quant: Option<u8>,
    /// Fill the ms column with wall time (output is then not reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Emit the SOLAR vs SVD-truncation table instead of the sweep.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses, runs and reports; returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match inject_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "solar: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let _ = writeln!(stderr, "{}", one_line(&e.to_string()));
            return 2;
        }
    };
    if let Err(e) = configure_threads() {
        let _ = writeln!(stderr, "solar: {e}");
        return e.exit_code();
    }
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "solar: {e}");
            e.exit_code()
        }
    }
}

fn one_line(message: &str) -> String {
    message
        .lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SOLAR_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Invalid(format!("SOLAR_THREADS must be a positive integer, got '{raw}'")))?;
    // a pool built earlier in this process (tests, embedding) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Moves `--config FILE` out of `args` and splices the file's keys in as flags
/// right after the subcommand, so flags given on the command line win.
fn inject_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            match iter.next() {
                Some(path) => config = Some(PathBuf::from(path)),
                None => return Err(Error::Invalid("--config needs a file path".into())),
            }
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut injected = Vec::new();
    for (key, value) in parse_config(&text)? {
        if SWITCHES.contains(&key.as_str()) {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => {
                    return Err(Error::Invalid(format!(
                        "config key '{key}' is a switch, expected true or false, got '{other}'"
                    )))
                }
            }
        } else {
            injected.push(format!("--{key}"));
            injected.push(value);
        }
    }
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(rest.len(), |i| i + 1);
    rest.splice(at..at, injected);
    Ok(rest)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let verbose = cli.verbose > 0;
    match &cli.command {
        Command::Compress(a) => cmd_compress(a, verbose, stdout, stderr),
        Command::Reconstruct(a) => cmd_reconstruct(a, verbose, stderr),
        Command::Analyze(a) => cmd_analyze(a, stdout),
        Command::Bound(a) => cmd_bound(a, stdout),
        Command::Footprint(a) => cmd_footprint(a, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn emit_to(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => emit(stdout, text),
    }
}

fn load_adapter(a: &Path, b: &Path) -> Result<AdapterPair> {
    AdapterPair::new(read_npy(a)?, read_npy(b)?)
}

fn cmd_compress(args: &CompressArgs, verbose: bool, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let budget = match (args.budget_total, args.topk_a.or(args.topk), args.topk_b.or(args.topk)) {
        (Some(total), _, _) => Budget::Total(total),
        (None, Some(k_a), Some(k_b)) => Budget::PerSide { k_a, k_b },
        _ => {
            return Err(Error::Invalid(
                "missing budget: give --topk, or both --topk-a and --topk-b, or --budget-total".into(),
            ))
        }
    };
    if let Some(bits) = args.quant {
        crate::quant::check_bits(bits)?;
    }
    let config = CompressConfig {
        n_a: args.pool_a,
        n_b: args.pool_b,
        budget,
        slice_width: None,
        noise_sigma: args.noise,
        seed: args.seed,
        ridge: args.ridge,
        refit: args.refit,
        basis_mode: args.basis_mode.into(),
        quant_bits: args.quant,
        fingerprint: !args.no_fingerprint,
    };
    let w = read_npy(&args.weights)?;
    let adapter = load_adapter(&args.adapter_a, &args.adapter_b)?;
    if w.shape() != (adapter.m(), adapter.n()) {
        return Err(Error::DimensionMismatch {
            op: "compress (weights vs adapter B A)",
            left: w.shape(),
            right: (adapter.m(), adapter.n()),
        });
    }
    let svd = svd_full(&w)?;
    let out = compress_with_svd(&svd, &adapter, &config)?;
    let back = reconstruct(&svd, &out.artifact)?;
    let err = relative_error(&back.delta(), &adapter.delta())?;

    let list = vec![(args.name.clone(), out.artifact)];
    write_solar(&args.out, &list)?;
    let file_bytes = std::fs::metadata(&args.out).map_err(|e| Error::io(&args.out, e))?.len();
    let art = &list[0].1;
    let (k_a, k_b) = (art.alpha.coefficients.len(), art.beta.coefficients.len());
    let params = footprint_params(1, k_a as u64, k_b as u64, art.n_a() as u64, art.n_b() as u64);
    if verbose {
        let _ = writeln!(
            stderr,
            "fit A: residual {:e} (relative {:e}, ridge {:e}); fit B: residual {:e} (relative {:e}, ridge {:e})",
            out.a.residual,
            out.a.relative(),
            out.a.ridge,
            out.b.residual,
            out.b.relative(),
            out.b.ridge
        );
    }
    emit(
        stdout,
        &format!(
            "tensor={} k_A={k_a} k_B={k_b} err_product={err:e} footprint_params={params} file_bytes={file_bytes}\n",
            args.name
        ),
    )
}

fn cmd_reconstruct(args: &ReconstructArgs, verbose: bool, stderr: &mut dyn Write) -> Result<()> {
    let list = read_solar(&args.input)?;
    let (name, artifact) = match &args.tensor {
        Some(t) => list
            .iter()
            .find(|(n, _)| n == t)
            .ok_or_else(|| Error::Invalid(format!("tensor '{t}' not found in {:?}", args.input)))?,
        None => match list.as_slice() {
            [only] => only,
            [] => return Err(Error::Invalid(format!("{:?} holds no tensors", args.input))),
            _ => {
                return Err(Error::Invalid(format!(
                    "{:?} holds {} tensors; choose one with --tensor",
                    args.input,
                    list.len()
                )))
            }
        },
    };
    let w = read_npy(&args.weights)?;
    let svd = svd_full(&w)?;
    let back = reconstruct(&svd, artifact)?;
    write_npy(&args.out_a, back.a())?;
    write_npy(&args.out_b, back.b())?;
    if let Some(path) = &args.out_delta {
        write_npy(path, &back.delta())?;
    }
    if verbose {
        let _ = writeln!(stderr, "rebuilt tensor '{name}' ({}x{}, rank {})", artifact.m, artifact.n, artifact.r);
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<()> {
    let w = read_npy(&args.weights)?;
    let delta = match (&args.delta, &args.adapter_a, &args.adapter_b) {
        (Some(d), _, _) => read_npy(d)?,
        (None, Some(a), Some(b)) => load_adapter(a, b)?.delta(),
        _ => return Err(Error::Invalid("give --delta or both --adapter-a and --adapter-b".into())),
    };
    let (side, dim) = match args.side {
        SideArg::Left => (Side::Left, w.rows()),
        SideArg::Right => (Side::Right, w.cols()),
    };
    let max_i = args.max_i.unwrap_or(dim.min(16));
    let max_j = args.max_j.unwrap_or(max_i);
    let grid = similarity_grid(&w, &delta, max_i, max_j, side)?;
    emit_to(args.out.as_deref(), stdout, &grid.to_csv())
}

fn cmd_bound(args: &BoundArgs, stdout: &mut dyn Write) -> Result<()> {
    let delta = args.delta.as_ref().map(read_npy).transpose()?;
    let sigma = match (&args.sigma, &delta) {
        (Some(s), _) => s.clone(),
        (None, Some(d)) => svd_full(d)?.sigma,
        (None, None) => return Err(Error::Invalid("give --sigma or --delta".into())),
    };
    let (r_a, r_b, source) = match (args.rank_a, args.rank_b) {
        (Some(a), Some(b)) => (a, b, "user"),
        (None, None) => {
            let (Some(d), Some(wp)) = (&delta, &args.weights) else {
                return Err(Error::Invalid(
                    "effective ranks need --rank-a and --rank-b, or --weights with --delta for sketching".into(),
                ));
            };
            let (a, b) = sketch_ranks(d, wp, args)?;
            (a, b, "sketch")
        }
        _ => return Err(Error::Invalid("give both --rank-a and --rank-b, or neither".into())),
    };
    let training = match (args.r_star, args.kappa, args.lambda, args.eta, args.steps) {
        (Some(r_star), Some(kappa), Some(lambda_r_star), Some(eta), Some(t_steps)) => Some(TrainingTerms {
            r_star,
            kappa,
            lambda_r_star,
            eta,
            t_steps,
        }),
        _ => None,
    };
    let inputs = BoundInputs {
        sigma,
        n_a: args.pool_a,
        n_b: args.pool_b,
        r_a,
        r_b,
        k: args.topk,
        training,
    };
    let b = total_bound(&inputs)?;
    let mut report = json!({
        "rank_source": source,
        "r_A": r_a,
        "r_B": r_b,
        "N_A": args.pool_a,
        "N_B": args.pool_b,
        "k": args.topk,
        "c2": {
            "prefactor_A": b.c2.prefactor_a,
            "prefactor_B": b.c2.prefactor_b,
            "term_A": b.c2.term_a,
            "term_B": b.c2.term_b,
            "term_k": b.c2.term_k,
            "total": b.c2.total,
        },
        "c1": b.c1,
        "total": b.total,
    });
    if let Some(trials) = args.trials {
        let Some(d) = &delta else {
            return Err(Error::Invalid("--trials needs --delta".into()));
        };
        let rep = empirical_rangefinder_error(d, args.pool_a, trials, args.seed, r_a)?;
        // an exactly low-rank update has bound 0 and leaves only rounding error
        let slack = 1e-12 * d.frobenius_norm();
        report["rangefinder"] = json!({
            "probes": rep.num_probes,
            "target_rank": rep.target_rank,
            "trials": rep.trials,
            "mean_error": rep.mean_error,
            "bound": rep.bound,
            "holds": rep.mean_error <= rep.bound + slack,
        });
    }
    let text = serde_json::to_string_pretty(&report).expect("bound report serializes");
    emit(stdout, &format!("{text}\n"))
}

fn sketch_ranks(delta: &DenseMatrix, weights: &Path, args: &BoundArgs) -> Result<(usize, usize)> {
    let w = read_npy(weights)?;
    if w.shape() != delta.shape() {
        return Err(Error::DimensionMismatch {
            op: "bound (weights vs delta)",
            left: w.shape(),
            right: delta.shape(),
        });
    }
    let svd = svd_full(&w)?;
    let (m, n) = w.shape();
    let width = match args.slice_width {
        Some(s) => s,
        None => {
            let sigma = svd_full(delta)?.sigma;
            numerical_rank(&sigma, m.max(n), None).max(1)
        }
    };
    let spec = |tag, count, ambient| BasisPoolSpec {
        master_seed: args.seed,
        tag,
        count,
        slice_width: width,
        ambient,
        noise_sigma: args.noise,
        mode: BasisMode::Aligned,
    };
    let pool_a = generate_pool(&spec(PoolTag::A, args.pool_a, n), &svd)?;
    let pool_b = generate_pool(&spec(PoolTag::B, args.pool_b, m), &svd)?;
    Ok((
        effective_sketch_rank(delta, &pool_a, None)?,
        effective_sketch_rank(delta, &pool_b, None)?,
    ))
}

fn cmd_footprint(args: &FootprintArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.list {
        let mut text = String::new();
        for p in presets() {
            text.push_str(&format!("{}\t{}\t{}\n", p.name, p.report().total(), p.description));
        }
        return emit(stdout, &text);
    }
    let report = if let Some(name) = &args.preset {
        preset(name)?.report()
    } else if let Some(path) = &args.artifact {
        file_accounting(&read_solar(path)?)?
    } else if let Some(layers) = args.layers {
        let (k_a, k_b) = (args.topk_a.unwrap_or(0), args.topk_b.unwrap_or(0));
        let (n_a, n_b) = (args.pool_a.unwrap_or(0), args.pool_b.unwrap_or(0));
        let scheme = match args.mode {
            AccountingArg::Param => FootprintScheme::Solar {
                units: layers,
                k_a,
                k_b,
                mask_bits: n_a + n_b,
                seed_term: 1,
            },
            AccountingArg::Byte => FootprintScheme::SolarBytes {
                units: layers,
                k_a,
                k_b,
                mask_bits: args.n_mask.unwrap_or(n_a + n_b),
                bits: args.bits,
            },
        };
        scheme.report("formula")?
    } else {
        return Err(Error::Invalid(
            "give --preset NAME, --list, --artifact FILE, or --layers with budgets and pool sizes".into(),
        ));
    };
    let text = if args.json {
        format!("{}\n", report.to_json())
    } else {
        report.to_table()
    };
    emit(stdout, &text)
}

fn cmd_synth(args: &SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = args.spec.spec()?;
    let (w, adapter) = synth(&spec)?;
    write_npy(&args.out_weights, &w)?;
    write_npy(&args.out_a, adapter.a())?;
    write_npy(&args.out_b, adapter.b())?;
    if let Some(path) = &args.out_delta {
        write_npy(path, &adapter.delta())?;
    }
    let phi = crate::analysis::subspace_similarity(&w, &adapter.delta(), spec.r, spec.r)?;
    emit(
        stdout,
        &format!(
            "m={} n={} r={} alignment_requested={} alignment_measured={}\n",
            spec.m,
            spec.n,
            spec.r,
            spec.alignment,
            phi / spec.r as f64
        ),
    )
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = args.spec.spec()?;
    if let Some(bits) = args.quant {
        crate::quant::check_bits(bits)?;
    }
    let grid: Vec<GridPoint> = match (&args.pools, &args.topk) {
        (Some(pools), Some(ks)) => {
            let mut grid = Vec::new();
            for &mode in &args.modes {
                for &n in pools {
                    for &k in ks {
                        if k > n {
                            return Err(Error::BudgetExceedsPool { side: 'A', k, pool: n });
                        }
                        grid.push(GridPoint { n, k, mode: mode.into() });
                    }
                }
            }
            grid
        }
        _ => default_grid()
            .into_iter()
            .filter(|p| args.modes.iter().any(|&m| BasisMode::from(m) == p.mode))
            .collect(),
    };
    let config = SweepConfig {
        noise_sigma: args.noise,
        seed: args.seed,
        ridge: args.ridge,
        refit: args.refit,
        quant_bits: args.quant,
        timing: args.timing,
    };
    let text = if args.compare {
        let mut budgets: Vec<(usize, usize)> = grid.iter().map(|p| (p.n, p.k)).collect();
        budgets.sort_unstable();
        budgets.dedup();
        let (w, adapter) = synth(&spec)?;
        baselines_to_csv(&compare_baselines(&w, &adapter, &budgets, &config)?)
    } else {
        sweep(&spec, &grid, &config)?.to_csv()
    };
    emit_to(args.out.as_deref(), stdout, &text)
}
