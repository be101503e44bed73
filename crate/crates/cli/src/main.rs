//! `weaksep` command-line tool.
//!
//! Exit status is 0 on success, 2 on a usage error and 1 when the command
//! itself fails.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use weaksep::bootstrap::{write_statistics_csv, BootstrapConfig};
use weaksep::datagrid::{center, load_dataset, save_dataset, Format, MultiwayDataset};
use weaksep::marginal_fpca::{full_scores, fve, marginal_fpca, select_pk};
use weaksep::plv::{load_phase_tensors, plv_dataset};
use weaksep::simlab::{build_v, max_pd_cov, run_study, PairSet, StudySpec, Variant};
use weaksep::weaksep_test::{analyze, bootstrap_test, chi2_test, PkRule, ThetaRoute};

/// Seed of the test bootstrap when `--seed` is absent.
const DEFAULT_BOOT_SEED: u64 = 24_301;

#[derive(Parser)]
#[command(name = "weaksep", version, about = "Weak separability tests for two-way functional data")]
struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = "WEAKSEP_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a dataset for weak separability and write the result as JSON.
    Test(TestArgs),
    /// Report fractions of variance explained and the selected (P, K).
    Fve(FveArgs),
    /// Run a simulation study and write its rejection table as CSV.
    Simulate(SimulateArgs),
    /// Build a PLV dataset from two phase files.
    Plv(PlvArgs),
    /// Largest covariance keeping the simulation Σ positive definite.
    MaxCov(MaxCovArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Binary,
    CsvLong,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Binary => Format::Binary,
            FormatArg::CsvLong => Format::CsvLong,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Chi2,
    Bootstrap,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThetaArg {
    Influence,
    NineCase,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    V1,
    V2,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairsArg {
    Single,
    Triple,
}

#[derive(Args)]
struct InputArgs {
    /// Dataset file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Args)]
struct PkArgs {
    /// Fixed (P, K) as `P,K`.
    #[arg(long, value_parser = parse_pk, conflicts_with = "pk_auto")]
    pk: Option<(usize, usize)>,
    /// Select (P, K) by the 90/95 FVE rule (the default).
    #[arg(long)]
    pk_auto: bool,
}

impl PkArgs {
    fn rule(&self) -> PkRule {
        match self.pk {
            Some((p, k)) => PkRule::Fixed(p, k),
            None => PkRule::Fve,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "chi2")]
    method: MethodArg,
    #[command(flatten)]
    pk: PkArgs,
    /// Θ estimator for the χ² mixture.
    #[arg(long, value_enum, default_value = "influence")]
    theta: ThetaArg,
    /// Bootstrap replicates B.
    #[arg(long, default_value_t = 1000)]
    bootstrap_reps: usize,
    /// Bootstrap seed.
    #[arg(long, default_value_t = DEFAULT_BOOT_SEED)]
    seed: u64,
    /// Significance level used for the `reject` field.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Result JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the bootstrap statistics to this CSV.
    #[arg(long)]
    dump_bootstrap: Option<PathBuf>,
}

#[derive(Args)]
struct FveArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Report FVE at this `P,K` instead of the selected pair.
    #[arg(long, value_parser = parse_pk)]
    pk: Option<(usize, usize)>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study description (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the study seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Rejection table CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlvArgs {
    /// Phase file of the first signal, one tensor per subject.
    #[arg(long)]
    left: PathBuf,
    /// Phase file of the second signal, subjects in the same order.
    #[arg(long)]
    right: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Args)]
struct MaxCovArgs {
    #[arg(long, value_enum, default_value = "v1")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "single")]
    pairs: PairsArg,
}

fn parse_pk(s: &str) -> Result<(usize, usize), String> {
    let (p, k) = s.split_once(',').ok_or("expected P,K")?;
    let p: usize = p.trim().parse().map_err(|_| format!("bad P in {s:?}"))?;
    let k: usize = k.trim().parse().map_err(|_| format!("bad K in {s:?}"))?;
    if p == 0 || k == 0 {
        return Err("P and K must be positive".into());
    }
    Ok((p, k))
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn output(path: Option<&Path>) -> AnyResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> AnyResult<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load(args: &InputArgs) -> AnyResult<MultiwayDataset> {
    Ok(load_dataset(&args.input, args.format.into())?)
}

fn run_test_cmd(args: &TestArgs) -> AnyResult<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(format!("--alpha must lie in (0, 1), got {}", args.alpha).into());
    }
    if args.dump_bootstrap.is_some() && !matches!(args.method, MethodArg::Bootstrap) {
        return Err("--dump-bootstrap needs --method bootstrap".into());
    }
    let data = load(&args.input)?;
    if data.n() < 3 {
        return Err(format!("the test needs at least three subjects, got {}", data.n()).into());
    }
    let analysis = analyze(&data, args.pk.rule())?;
    let result = match args.method {
        MethodArg::Chi2 => {
            let route = match args.theta {
                ThetaArg::Influence => ThetaRoute::Influence,
                ThetaArg::NineCase => ThetaRoute::NineCase,
            };
            chi2_test(&analysis, route)?
        }
        MethodArg::Bootstrap => {
            let cfg = BootstrapConfig {
                replicates: args.bootstrap_reps,
                seed: args.seed,
            };
            let (result, boot) = bootstrap_test(&data, &analysis, &cfg)?;
            if let Some(path) = &args.dump_bootstrap {
                write_statistics_csv(&boot.statistics, BufWriter::new(File::create(path)?))?;
            }
            result
        }
    };
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let mut value = serde_json::to_value(&result)?;
    value["alpha"] = args.alpha.into();
    value["reject"] = (result.p_value < args.alpha).into();
    write_json(args.out.as_deref(), &value)
}

fn run_fve_cmd(args: &FveArgs) -> AnyResult<()> {
    let centered = center(&load(&args.input)?)?;
    let eig = marginal_fpca(&centered)?;
    let scores = full_scores(&centered, &eig)?;
    let (p, k) = match args.pk {
        Some(pk) => pk,
        None => {
            let sel = select_pk(&eig, &scores);
            (sel.p, sel.k)
        }
    };
    if p > scores.p() || k > scores.k() {
        return Err(format!("(P, K) = ({p}, {k}) exceeds the numerical rank ({}, {})", scores.p(), scores.k()).into());
    }
    let report = fve(&eig, &scores, p, k);
    write_json(args.out.as_deref(), &serde_json::to_value(&report)?)
}

fn run_simulate_cmd(args: &SimulateArgs) -> AnyResult<()> {
    let mut spec = StudySpec::from_json(&std::fs::read_to_string(&args.scenario)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let table = run_study(&spec)?;
    let mut w = output(args.out.as_deref())?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run_plv_cmd(args: &PlvArgs) -> AnyResult<()> {
    let left = load_phase_tensors(&args.left)?;
    let right = load_phase_tensors(&args.right)?;
    if left.len() != right.len() {
        return Err(format!("{} subjects on the left but {} on the right", left.len(), right.len()).into());
    }
    let pairs: Vec<_> = left.into_iter().zip(right).collect();
    let data = plv_dataset(&pairs)?;
    save_dataset(&args.out, &data, args.format.into())?;
    Ok(())
}

fn run_max_cov_cmd(args: &MaxCovArgs) -> AnyResult<()> {
    let variant = match args.variant {
        VariantArg::V1 => Variant::V1,
        VariantArg::V2 => Variant::V2,
    };
    let pairs = match args.pairs {
        PairsArg::Single => PairSet::Single,
        PairsArg::Triple => PairSet::Triple,
    };
    println!("{}", max_pd_cov(&build_v(variant)?, pairs));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start the thread pool: {e}");
        return ExitCode::FAILURE;
    }
    let result = match &cli.command {
        Command::Test(a) => run_test_cmd(a),
        Command::Fve(a) => run_fve_cmd(a),
        Command::Simulate(a) => run_simulate_cmd(a),
        Command::Plv(a) => run_plv_cmd(a),
        Command::MaxCov(a) => run_max_cov_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pk_values() {
        assert_eq!(parse_pk("3,2"), Ok((3, 2)));
        assert_eq!(parse_pk(" 4 , 4 "), Ok((4, 4)));
        assert!(parse_pk("3").is_err());
        assert!(parse_pk("0,2").is_err());
        assert!(parse_pk("a,b").is_err());
    }

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
