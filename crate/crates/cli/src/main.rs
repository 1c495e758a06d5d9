use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use thbbpx_core::bench::{self, RunSpec, TestId};
use thbbpx_core::bpx::{CoarseSolve, DecompositionKind, SmootherKind};
use thbbpx_core::mesh::AdmissibilityClass;
use thbbpx_core::space::BasisKind;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Test {
    Test1,
    Test2,
    Test3,
    Test4,
    Test5,
    Custom,
}

/// Condition numbers of BPX-preconditioned hierarchical spline discretisations.
#[derive(Debug, Parser)]
#[command(name = "thbbpx", version)]
struct Cli {
    #[arg(value_enum)]
    test: Test,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Largest number of levels.
    #[arg(long, default_value_t = 6)]
    levels: usize,
    /// new, mod, tsupp, hsupp or all.
    #[arg(long, default_value = "tsupp")]
    decomp: String,
    /// sgs or jacobi.
    #[arg(long, default_value = "sgs")]
    smoother: String,
    /// Coarsest level: direct or smooth.
    #[arg(long, default_value = "direct")]
    coarse: String,
    /// none, H:m or T:m.
    #[arg(long, default_value = "none")]
    adm: String,
    /// hb or thb; defaults to the basis of the decomposition.
    #[arg(long)]
    basis: Option<String>,
    /// Geometry file (plain text).
    #[arg(long)]
    geometry: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 20_190_101)]
    seed: u64,
    /// Skip the unpreconditioned condition number.
    #[arg(long)]
    skip_noprec: bool,
    /// Only run the selected smoother.
    #[arg(long)]
    single_smoother: bool,
}

fn spec_from(cli: &Cli) -> Result<RunSpec> {
    let decomp: DecompositionKind = cli.decomp.parse().context("--decomp")?;
    let smoother: SmootherKind = cli.smoother.parse().context("--smoother")?;
    let coarse: CoarseSolve = cli.coarse.parse().context("--coarse")?;
    let adm = match cli.adm.as_str() {
        "none" => None,
        s => Some(s.parse::<AdmissibilityClass>().context("--adm")?),
    };
    let basis: BasisKind = match &cli.basis {
        Some(b) => b.parse().context("--basis")?,
        None => decomp.basis(),
    };
    let test = match cli.test {
        Test::Test1 => TestId::Test1,
        Test::Test2 => TestId::Test2,
        Test::Test3 => TestId::Test3,
        Test::Test4 => TestId::Test4,
        Test::Test5 => TestId::Test5,
        Test::Custom => TestId::Custom,
    };
    Ok(RunSpec {
        test,
        dim: cli.dim,
        degree: cli.degree,
        levels: cli.levels,
        decomp,
        smoother,
        coarse,
        adm,
        basis,
        geometry: cli.geometry.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        noprec: !cli.skip_noprec,
        both_smoothers: !cli.single_smoother,
    })
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("THBBPX_THREADS") {
        let n: usize = v.parse().with_context(|| format!("THBBPX_THREADS='{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| {
        let spec = spec_from(&cli)?;
        spec.validate().context("invalid run specification")?;
        let rows = bench::run(&spec)?;
        print!("{}", bench::to_csv(&rows));
        eprintln!("wrote {}", spec.out.join(format!("{}.csv", spec.tag())).display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
