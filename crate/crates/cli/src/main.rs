//! `bodydisc`: run body discovery rounds, suites and sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bodydisc_core::harness::{
    format_suite_table, run_round, run_suite, run_sweep, write_suite_csv, write_sweep_csv, Method, MethodReport,
    RunOptions, SuiteSpec, SweepParam, SweepSpec,
};
use bodydisc_core::inference::{summarize_effects, write_effects_csv};
use bodydisc_core::scenario::{TaskConfig, TaskId};
use bodydisc_core::trace::{replay, run_round_traced};

#[derive(Parser)]
#[command(name = "bodydisc", version, about = "Discover an agent's body by randomized experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one round and print its prediction and metrics.
    Round {
        #[command(flatten)]
        common: Common,
        /// Defaults to T8.
        #[arg(long)]
        task: Option<TaskId>,
        #[arg(long, default_value = "frt-bonferroni")]
        method: Method,
        /// Write a JSON-lines trace of every stage.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Average several rounds per (task, method).
    Suite {
        #[command(flatten)]
        common: Common,
        /// Comma-separated task ids, or `basic` (default), `mirror`, `all`.
        #[arg(long = "task")]
        tasks: Option<String>,
        /// Comma-separated methods, or `all` (default) / `frt`.
        #[arg(long = "method")]
        methods: Option<String>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Vary one parameter and average rounds at each value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Defaults to T8.
        #[arg(long)]
        task: Option<TaskId>,
        #[arg(long = "method")]
        methods: Option<String>,
        /// One of Q, N, T, n1, n2, n3, n4.
        #[arg(long)]
        param: Option<SweepParam>,
        /// Comma-separated, strictly monotone.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Re-run inference on a recorded trace and check it reproduces.
    Replay { trace: PathBuf },
}

#[derive(Args)]
struct Common {
    /// JSON file: a task config for `round`, a suite spec for `suite`, a
    /// sweep spec for `sweep`. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "BODYDISC_SEED")]
    seed: Option<u64>,
    /// Family-wise α for frt-bonferroni.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    n1: Option<f64>,
    #[arg(long)]
    n2: Option<f64>,
    #[arg(long)]
    n3: Option<f64>,
    #[arg(long)]
    n4: Option<f64>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    signals: Option<usize>,
    #[arg(long)]
    stages: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn apply_task(&self, cfg: &mut TaskConfig) {
        if let Some(v) = self.n1 {
            cfg.noise.n1_intensity = v;
        }
        if let Some(v) = self.n2 {
            cfg.noise.n2_intensity = v;
        }
        if let Some(v) = self.n3 {
            cfg.noise.n3_failure_prob = v;
        }
        if let Some(v) = self.n4 {
            cfg.noise.n4_sensing_error = v;
        }
        if let Some(v) = self.objects {
            cfg.objects = v;
        }
        if let Some(v) = self.signals {
            cfg.signals = v;
            cfg.counts = None;
        }
        if let Some(v) = self.stages {
            cfg.stages = v;
            cfg.counts = None;
        }
    }

    fn apply_options(&self, opts: &mut RunOptions) {
        if let Some(a) = self.alpha {
            opts.bonferroni_alpha = a;
        }
        if let Some(m) = self.mc_samples {
            opts.frt.mc_samples = m;
        }
    }

    fn load<T: serde::de::DeserializeOwned>(&self) -> Result<Option<T>> {
        match &self.config {
            None => Ok(None),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?))
            }
        }
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(self.out.as_deref())
    }
}

fn parse_tasks(s: &str) -> Result<Vec<TaskId>> {
    match s {
        "basic" => Ok(TaskId::BASIC.to_vec()),
        "mirror" => Ok(TaskId::MIRROR.to_vec()),
        "all" => Ok(TaskId::ALL.to_vec()),
        _ => Ok(s.split(',').map(|t| t.trim().parse()).collect::<std::result::Result<_, _>>()?),
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    match s {
        "all" => Ok(Method::ALL.to_vec()),
        "frt" => Ok(Method::FRT.to_vec()),
        _ => Ok(s.split(',').map(|m| m.trim().parse()).collect::<std::result::Result<_, _>>()?),
    }
}

fn check_alpha(opts: &RunOptions) -> Result<()> {
    if !(opts.bonferroni_alpha > 0.0 && opts.bonferroni_alpha < 1.0) {
        bail!("--alpha must be in (0, 1)");
    }
    Ok(())
}

fn round(common: Common, task: Option<TaskId>, method: Method, trace: Option<PathBuf>) -> Result<()> {
    let mut cfg: TaskConfig = common.load()?.unwrap_or_else(|| TaskConfig::for_task(TaskId::T8));
    if let Some(task) = task {
        cfg.task = task;
    }
    common.apply_task(&mut cfg);
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let mut opts = RunOptions::default();
    common.apply_options(&mut opts);
    check_alpha(&opts)?;

    let result = match &trace {
        Some(path) => run_round_traced(&cfg, method, &opts, path)?,
        None => run_round(&cfg, method, &opts)?,
    };
    println!("task {} method {} seed {} config {}", result.task, result.method, result.seed, &result.config_hash[..12]);
    println!("predicted body: {:?}", result.predicted());
    println!("true body:      {:?}", result.truth);
    println!("{}", result.metrics);
    println!("wall clock: {:.2?}", result.wall_clock);
    if let Some(dir) = common.out_dir()? {
        fs::write(dir.join("round.json"), result.to_json()?)?;
        if let MethodReport::Frt(report) = &result.report {
            let file = fs::File::create(dir.join("effects.csv"))?;
            write_effects_csv(&summarize_effects(report), file)?;
        }
    }
    Ok(())
}

fn suite(common: Common, tasks: Option<String>, methods: Option<String>, rounds: Option<usize>) -> Result<()> {
    let mut spec: SuiteSpec = common.load()?.unwrap_or_default();
    if let Some(t) = tasks {
        spec.tasks = parse_tasks(&t)?;
    }
    if let Some(m) = methods {
        spec.methods = parse_methods(&m)?;
    }
    if let Some(r) = rounds {
        spec.rounds = r;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    common.apply_task(&mut spec.base);
    common.apply_options(&mut spec.options);
    check_alpha(&spec.options)?;

    let result = run_suite(&spec, common.workers)?;
    let table = format_suite_table(&result.rows);
    print!("{table}");
    for (task, r, msg) in &result.failures {
        eprintln!("{task} round {r} failed: {msg}");
    }
    if let Some(dir) = common.out_dir()? {
        write_suite_csv(&result.rows, fs::File::create(dir.join("suite.csv"))?)?;
        fs::write(dir.join("suite.txt"), table)?;
    }
    Ok(())
}

fn sweep(
    common: Common,
    task: Option<TaskId>,
    methods: Option<String>,
    param: Option<SweepParam>,
    values: Option<Vec<f64>>,
    rounds: Option<usize>,
) -> Result<()> {
    let mut spec: SweepSpec = match common.load()? {
        Some(spec) => spec,
        None => SweepSpec {
            base: TaskConfig::for_task(TaskId::T8),
            param: param.context("--param is required without --config")?,
            values: values.clone().context("--values is required without --config")?,
            rounds: 10,
            methods: Method::ALL.to_vec(),
            seed: 0,
            options: RunOptions::default(),
        },
    };
    if let Some(t) = task {
        spec.base.task = t;
    }
    if let Some(m) = methods {
        spec.methods = parse_methods(&m)?;
    }
    if let Some(p) = param {
        spec.param = p;
    }
    if let Some(v) = values {
        spec.values = v;
    }
    if let Some(r) = rounds {
        spec.rounds = r;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    common.apply_task(&mut spec.base);
    common.apply_options(&mut spec.options);
    check_alpha(&spec.options)?;

    let result = run_sweep(&spec, common.workers)?;
    let mut buf = Vec::new();
    write_sweep_csv(&result, &mut buf)?;
    print!("{}", String::from_utf8(buf.clone())?);
    for (value, r, msg) in &result.failures {
        eprintln!("value {value} round {r} failed: {msg}");
    }
    if let Some(dir) = common.out_dir()? {
        fs::write(dir.join("sweep.csv"), buf)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Round { common, task, method, trace } => round(common, task, method, trace),
        Command::Suite { common, tasks, methods, rounds } => suite(common, tasks, methods, rounds),
        Command::Sweep { common, task, methods, param, values, rounds } => {
            sweep(common, task, methods, param, values, rounds)
        }
        Command::Replay { trace } => {
            let r = replay(&trace)?;
            println!("task {} method {} seed {}", r.header.config.task, r.header.method, r.header.config.seed);
            println!("predicted body: {:?}", r.predicted);
            println!("{}", r.result.metrics);
            if r.reproducible {
                println!("trace reproduces from its configuration");
                Ok(())
            } else {
                bail!("trace does not match a fresh simulation of its configuration")
            }
        }
    }
}
