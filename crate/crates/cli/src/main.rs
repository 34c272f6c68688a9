//! `daesim`: granularity sweeps, policy comparisons and oracle checks for
//! decoupled access-execute on a simulated big.LITTLE machine.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dae_core::error::Error;
use dae_core::kernel_ir::ValidatedKernel;
use dae_core::oracle::oracle_check;
use dae_core::scenario::{
    compare_policies, csv_bytes, policy_summary, run_scenario, Scenario, ScenarioConfig, SyncKind,
    ThreadKind, DEFAULT_RESYNC_PERIOD,
};
use dae_core::scheduler::{perfect_sleeps, run_dae, SyncPolicy};
use dae_core::transform::{chunk, make_phase_pair};

#[derive(Parser)]
#[command(name = "daesim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for jitter draws; overrides the scenario's rng_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports; overrides the scenario's out_dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Read IPC through 32-bit counters that tick once every 64 cycles.
    #[arg(long, global = true)]
    quantized_counters: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Sweep granularities for one kernel.
    Sweep {
        #[command(flatten)]
        input: Input,
        /// Comma-separated granularities; the preset grid when omitted.
        #[arg(long, value_delimiter = ',')]
        granularities: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value_t = Policy::Lockstep)]
        sync: Policy,
        /// Jitter standard deviation of timed sleeps.
        #[arg(long, default_value_t = 0.0)]
        jitter_ns: f64,
        /// Hybrid only: lock-step barrier every this many slices.
        #[arg(long)]
        resync_period: Option<u64>,
        /// Report file stem; defaults to the kernel name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Compare the simulator against the brute-force oracle.
    OracleCheck {
        #[command(flatten)]
        input: Input,
        /// Comma-separated granularities; N, N/4, N/16 and 64 when omitted.
        #[arg(long, value_delimiter = ',')]
        granularities: Option<Vec<u64>>,
        /// Policies to check; all when omitted.
        #[arg(long, value_enum, value_delimiter = ',')]
        sync: Option<Vec<Policy>>,
        #[arg(long, default_value_t = 0.0)]
        jitter_ns: f64,
        /// Hybrid only: lock-step barrier every this many slices.
        #[arg(long, default_value_t = DEFAULT_RESYNC_PERIOD)]
        resync_period: u64,
    },
    /// Coupled, LockStep, Timed (perfect sleeps) and Hybrid at one granularity.
    ComparePolicies {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        granularity: u64,
        #[arg(long, default_value_t = 0.0)]
        jitter_ns: f64,
        /// Hybrid only: lock-step barrier every this many slices.
        #[arg(long, default_value_t = DEFAULT_RESYNC_PERIOD)]
        resync_period: u64,
    },
}

#[derive(Args)]
struct Input {
    /// Preset name or kernel text file.
    #[arg(long)]
    kernel: String,
    /// Machine TOML; built-in defaults when omitted.
    #[arg(long)]
    machine: Option<PathBuf>,
    /// Preset trip count per invocation.
    #[arg(long)]
    iterations: Option<u64>,
    /// Preset invocation count.
    #[arg(long)]
    invocations: Option<u32>,
    /// Thread model; the preset's own, or spawn for kernel files, when omitted.
    #[arg(long, value_enum)]
    threads: Option<Threads>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Lockstep,
    Timed,
    Hybrid,
}

impl From<Policy> for SyncKind {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Lockstep => SyncKind::LockStep,
            Policy::Timed => SyncKind::Timed,
            Policy::Hybrid => SyncKind::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Threads {
    Spawn,
    Pool,
}

impl Cli {
    fn config(&self, input: &Input) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(&input.kernel);
        cfg.machine = input.machine.clone();
        cfg.iterations = input.iterations;
        cfg.invocations = input.invocations;
        cfg.threads = input.threads.map(|t| match t {
            Threads::Spawn => ThreadKind::Spawn,
            Threads::Pool => ThreadKind::Pool,
        });
        self.apply(&mut cfg);
        cfg
    }

    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.rng_seed = s;
        }
        if let Some(d) = &self.out_dir {
            // Taken relative to the working directory, not the scenario file.
            cfg.out_dir = std::env::current_dir()
                .map(|c| c.join(d))
                .unwrap_or_else(|_| d.clone());
        }
        cfg.quantized_counters |= self.quantized_counters;
    }
}

fn sweep(cfg: &ScenarioConfig) -> Result<(), Error> {
    let (_, files) = run_scenario(cfg)?;
    print!(
        "{}",
        fs::read_to_string(&files.summary)
            .map_err(|e| Error::io(files.summary.display().to_string(), e))?
    );
    println!("wrote {}", files.csv.display());
    Ok(())
}

fn policies_for(
    sc: &Scenario,
    g: u64,
    kinds: &[Policy],
    jitter_ns: f64,
    period: u64,
) -> Result<Vec<SyncPolicy>, Error> {
    let pair = make_phase_pair(&chunk(&sc.kernel, g)?);
    let lockstep = run_dae(&pair, &sc.machine, &SyncPolicy::lock_step(), &sc.threads)?;
    let sleeps = perfect_sleeps(&lockstep, jitter_ns, sc.rng_seed);
    Ok(kinds
        .iter()
        .map(|k| match k {
            Policy::Lockstep => SyncPolicy::lock_step(),
            Policy::Timed => SyncPolicy::Timed(sleeps),
            Policy::Hybrid => SyncPolicy::hybrid(sleeps, period),
        })
        .collect())
}

fn default_oracle_grid(k: &ValidatedKernel) -> Vec<u64> {
    let n = k.iterations();
    let mut g: Vec<u64> = [n, n / 4, n / 16, 64.min(n)]
        .into_iter()
        .filter(|&g| g > 0)
        .collect();
    g.sort_unstable_by(|a, b| b.cmp(a));
    g.dedup();
    g
}

fn oracle(
    sc: &Scenario,
    grid: Option<Vec<u64>>,
    kinds: Option<Vec<Policy>>,
    jitter_ns: f64,
    period: u64,
) -> Result<(), Error> {
    let grid = grid.unwrap_or_else(|| default_oracle_grid(&sc.kernel));
    let kinds = kinds.unwrap_or_else(|| vec![Policy::Lockstep, Policy::Timed, Policy::Hybrid]);
    let mut checked = 0;
    for g in grid {
        for p in policies_for(sc, g, &kinds, jitter_ns, period)? {
            oracle_check(&sc.kernel, &sc.machine, &p, g, &sc.threads)?;
            println!("ok {} g={g} {}", sc.kernel.name(), p.label());
            checked += 1;
        }
    }
    println!("{checked} runs match the oracle exactly");
    Ok(())
}

fn compare(sc: &Scenario, g: u64, jitter_ns: f64, period: u64) -> Result<(), Error> {
    let c = compare_policies(
        &sc.kernel,
        &sc.machine,
        g,
        &sc.threads,
        jitter_ns,
        period,
        sc.rng_seed,
        &sc.opts,
    )?;
    print!("{}", policy_summary(&c));
    fs::create_dir_all(&sc.out_dir).map_err(|e| Error::io(sc.out_dir.display().to_string(), e))?;
    let path = sc.out_dir.join(format!("{}_policies_g{g}.csv", sc.name));
    fs::write(&path, csv_bytes(&c.rows)?).map_err(|e| Error::io(path.display().to_string(), e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Run { scenarios } => {
            for path in scenarios {
                let mut cfg = ScenarioConfig::from_file(Path::new(path))?;
                cli.apply(&mut cfg);
                sweep(&cfg)?;
            }
            Ok(())
        }
        Command::Sweep {
            input,
            granularities,
            sync,
            jitter_ns,
            resync_period,
            name,
        } => {
            let mut cfg = cli.config(input);
            cfg.granularities = granularities.clone();
            cfg.sync.kind = (*sync).into();
            cfg.sync.jitter_stddev_ns = *jitter_ns;
            cfg.sync.resync_period_slices = *resync_period;
            cfg.name = name.clone();
            sweep(&cfg)
        }
        Command::OracleCheck {
            input,
            granularities,
            sync,
            jitter_ns,
            resync_period,
        } => oracle(
            &cli.config(input).resolve()?,
            granularities.clone(),
            sync.clone(),
            *jitter_ns,
            *resync_period,
        ),
        Command::ComparePolicies {
            input,
            granularity,
            jitter_ns,
            resync_period,
        } => {
            let mut cfg = cli.config(input);
            cfg.granularities = Some(vec![*granularity]);
            compare(&cfg.resolve()?, *granularity, *jitter_ns, *resync_period)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::OracleMismatch(_) => 3,
        Error::Kernel(_)
        | Error::Parse(_)
        | Error::Transform(_)
        | Error::Config(_)
        | Error::Oracle(_)
        | Error::Io { .. } => 2,
        Error::Metrics(_) | Error::Format(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn mismatches_and_validation_errors_have_distinct_codes() {
        assert_eq!(exit_code(&Error::OracleMismatch("x".into())), 3);
        let io = Error::io("p", std::io::Error::other("x"));
        assert_eq!(exit_code(&io), 2);
    }

    #[test]
    fn oracle_grid_is_deduplicated() {
        let k = dae_core::presets::preset_with_iterations("lbm_like", 64, 1).unwrap();
        assert_eq!(default_oracle_grid(&k), vec![64, 16, 4]);
        let k = dae_core::presets::preset_with_iterations("lbm_like", 1024, 1).unwrap();
        assert_eq!(default_oracle_grid(&k), vec![1024, 256, 64]);
    }
}
