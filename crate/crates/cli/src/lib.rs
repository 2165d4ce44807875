//! Command-line experiments over the `soficity` crate. Every run writes its
//! artifacts plus a `manifest.json` into the output directory.
//!
//! Exit codes: `0` success, `1` usage error, `2` failed check or refused run.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub mod commands;
pub mod config;

use config::{Param, Resolver};

pub const SUBCOMMANDS: &[&str] = &[
    "cycles", "sofic-check", "tile", "conjugate", "search-f", "h3", "padic", "heuristic", "verify",
];

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or settings.
    Usage(String),
    /// A check failed or the computation refused the instance.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Failed(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<soficity::Error> for CliError {
    fn from(e: soficity::Error) -> Self {
        use soficity::Error as E;
        match e {
            E::InvalidParameter(_) | E::NotCoprime { .. } | E::NotPrime(_) | E::NotPrimePower(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "soficity", version, about = "Sofic approximation and exponential-map experiments")]
pub struct Cli {
    /// TOML settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Periodic-point census of x -> m^x mod n over primes or prime powers.
    Cycles(CyclesArgs),
    /// Multiplicativity and displacement of the arithmetic model, plus fixed-point predictions.
    SoficCheck(SoficArgs),
    /// Quasi-tile an arithmetic model and verify the result.
    Tile(TileArgs),
    /// Build a conjugator between the arithmetic model and a random relabelling.
    Conjugate(ConjugateArgs),
    /// Search for f with f^4 = id minimizing the defect of f(x+1) = m f(x).
    SearchF(SearchArgs),
    /// Exhaustive minimum of the two-equation failure rate and the H_3 relator defects.
    H3(H3Args),
    /// Fixed points of the lifted map G on (Z/p^r)^4: lifting against brute force.
    Padic(PadicArgs),
    /// Exact P_n, counting bounds and tail diagnostics.
    Heuristic(HeuristicArgs),
    /// Re-verify a tiling certificate.
    Verify(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Cycles(_) => "cycles",
            Command::SoficCheck(_) => "sofic-check",
            Command::Tile(_) => "tile",
            Command::Conjugate(_) => "conjugate",
            Command::SearchF(_) => "search-f",
            Command::H3(_) => "h3",
            Command::Padic(_) => "padic",
            Command::Heuristic(_) => "heuristic",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Args, Debug)]
pub struct CyclesArgs {
    #[arg(long)]
    pub m: Option<u64>,
    /// Primes in A..B (inclusive).
    #[arg(long)]
    pub primes: Option<String>,
    /// p:rmin..rmax, or A..B:rmin..rmax.
    #[arg(long = "prime-powers")]
    pub prime_powers: Option<String>,
    #[arg(long = "max-n")]
    pub max_n: Option<u64>,
    /// Additive slack in count ≤ 3n/4 + slack.
    #[arg(long)]
    pub slack: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SoficArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long = "e-max")]
    pub e_max: Option<i64>,
    #[arg(long = "d-max")]
    pub d_max: Option<u32>,
    #[arg(long = "num-max")]
    pub num_max: Option<i64>,
    /// Random words for the fixed-point prediction.
    #[arg(long)]
    pub words: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TileArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    /// Amplify ψ on this degree up to n.
    #[arg(long = "base-n")]
    pub base_n: Option<usize>,
    /// interval | box
    #[arg(long)]
    pub shapes: Option<String>,
    #[arg(long)]
    pub rows: Option<u32>,
    #[arg(long)]
    pub cap: Option<u64>,
    #[arg(long = "admissibility-n")]
    pub admissibility_n: Option<usize>,
    #[arg(long = "max-delta-prime")]
    pub max_delta_prime: Option<String>,
}

#[derive(Args, Debug)]
pub struct ConjugateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long = "tile-eps")]
    pub tile_eps: Option<String>,
    #[arg(long = "tile-kappa")]
    pub tile_kappa: Option<String>,
    #[arg(long)]
    pub cap: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub budget: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long = "t-start")]
    pub t_start: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
}

#[derive(Args, Debug)]
pub struct H3Args {
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PadicArgs {
    #[arg(long)]
    pub p: Option<u64>,
    #[arg(long)]
    pub r: Option<u32>,
    /// s ≡ 1 mod p; when absent, s = m^{p−1}.
    #[arg(long)]
    pub s: Option<u64>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub tuples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct HeuristicArgs {
    /// Largest n.
    #[arg(long = "N")]
    pub n_max: Option<usize>,
    #[arg(long = "n-start")]
    pub n_start: Option<usize>,
    #[arg(long = "n-exact")]
    pub n_exact: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub certificate: PathBuf,
}

/// What a command produced.
pub struct Outcome {
    pub artifacts: Vec<String>,
    pub passed: bool,
    pub summary: String,
}

/// Shared state handed to each command.
pub struct Context {
    pub out: PathBuf,
    pub workers: usize,
    /// Raw bytes of input files, folded into the manifest hash.
    pub inputs: Vec<u8>,
    pub written: Vec<String>,
}

impl Context {
    pub fn write(&mut self, name: &str, content: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.out.join(name), content)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", self.out.join(name).display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("results serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    config: &'a str,
    params: &'a BTreeMap<String, Param>,
    input_hash: String,
    wall_time_secs: f64,
    status: &'a str,
    /// A failure interrupted the run; artifacts may be incomplete.
    partial: bool,
    exit_code: i32,
    message: &'a str,
    artifacts: &'a [String],
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let started = Instant::now();
    let name = cli.command.name();
    let mut resolver = match Resolver::load(cli.config.as_deref(), name) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return 1;
    }
    let default_workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = match resolver.get("workers", cli.workers, default_workers) {
        Ok(w) if w >= 1 => w,
        Ok(_) => {
            eprintln!("error: workers must be at least 1");
            return 1;
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    let mut ctx = Context {
        out: out.clone(),
        workers,
        inputs: Vec::new(),
        written: Vec::new(),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: worker pool: {e}");
            return 1;
        }
    };
    let result = pool.install(|| commands::dispatch(&cli, &mut resolver, &mut ctx));
    let (code, status, partial, message) = match &result {
        Ok(o) if o.passed => (0, "ok", false, o.summary.clone()),
        Ok(o) => (2, "failed", false, o.summary.clone()),
        Err(e) => (e.exit_code(), if e.exit_code() == 1 { "usage" } else { "failed" }, true, e.message().to_string()),
    };
    if code == 0 {
        println!("{message}");
    } else {
        eprintln!("{name}: {message}");
    }
    let canon = serde_json::to_string(&resolver.values()).expect("settings serialize");
    let mut hashed = format!("{name}\n{canon}\n").into_bytes();
    hashed.extend_from_slice(&ctx.inputs);
    let manifest = Manifest {
        subcommand: name,
        version: env!("CARGO_PKG_VERSION"),
        config: &resolver.origin,
        params: &resolver.params,
        input_hash: config::content_hash(&hashed),
        wall_time_secs: started.elapsed().as_secs_f64(),
        status,
        partial,
        exit_code: code,
        message: &message,
        artifacts: &ctx.written,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if let Err(e) = std::fs::write(out.join("manifest.json"), text) {
        eprintln!("error: cannot write manifest: {e}");
        return 1;
    }
    code
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
