use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symreg_core::bench::config::{ExperimentConfig, KEYS};
use symreg_core::bench::experiment::aggregate_csv;
use symreg_core::bench::tail::{tail_barrier_stats, to_csv};
use symreg_core::bench::{expression_r2, load_csv, run_experiment};
use symreg_core::expr::{dpe_encode, parse_infix, TokenLibrary};
use symreg_core::policy::train::{train, write_log_csv};
use symreg_core::rewards::{baseline_weights, inverse_map_f32, rank_map, tail_barrier_rewards};
use symreg_core::Error;

/// Environment variables `SYMREG_<KEY>` override config-file values.
const ENV_PREFIX: &str = "SYMREG_";

#[derive(Parser, Debug)]
#[command(name = "symreg", version, about = "Symbolic regression with a DCT-attention expression generator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long, global = true, env = "SYMREG_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long, global = true, default_value = "symreg-out", env = "SYMREG_OUT")]
    out: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "SYMREG_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Noise level as a fraction of the target's standard deviation.
    #[arg(long, global = true)]
    noise: Option<f64>,
    #[arg(long = "time-limit-s", global = true)]
    time_limit_s: Option<f64>,
    /// Extra `key=value` overrides, applied after the file and environment.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one CSV file (last column is the target).
    Fit { data: PathBuf },
    /// Run the configured problems x noise levels x seeds.
    Bench,
    /// Print the BFS node table of an infix expression.
    Inspect {
        expression: String,
        #[arg(long, default_value_t = 1)]
        variables: usize,
    },
    /// Tail-barrier analysis: precision demonstration and domination tables.
    TailLab {
        /// Recorded per-epoch rewards (one epoch per line, comma separated).
        #[arg(long)]
        rewards: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Library(_) => 2,
        Error::Data { .. } | Error::DegenerateTarget => 3,
        _ => 1,
    }
}

fn build_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for key in KEYS {
        let var = format!("{ENV_PREFIX}{}", key.to_uppercase());
        if let Ok(v) = std::env::var(&var) {
            cfg.set(key, &v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{var}: {m}")),
                other => other,
            })?;
        }
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.seeds = vec![s];
    }
    if let Some(v) = common.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = common.batch {
        cfg.batch = v;
    }
    if let Some(v) = common.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = common.noise {
        cfg.noise_levels = vec![v];
    }
    if let Some(v) = common.time_limit_s {
        cfg.time_limit_s = Some(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_fit(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<(), Error> {
    let dataset = load_csv(data)?.split(cfg.test_fraction, cfg.seed);
    let noise = cfg.noise_levels.first().copied().unwrap_or(0.0);
    let noisy = dataset.add_noise(noise, cfg.seed.wrapping_add(0x5eed))?;
    let (x_train, y_train) = noisy.train_data();
    let (x_test, y_test) = dataset.test_data();
    let library = cfg.library(dataset.variables())?;
    let mut train_cfg = cfg.train_config()?;
    if cfg.checkpoint_every > 0 {
        train_cfg.checkpoint_dir = Some(out.join("checkpoints"));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    let result = train(&x_train, &y_train, &library, &train_cfg, cfg.seed)?;
    let Some(best) = result.best.as_ref() else {
        println!("no epochs were run; nothing to report");
        return Ok(());
    };
    let r2_train = expression_r2(&best.expression, &x_train, &y_train);
    let r2_test = if dataset.test.is_empty() { None } else { expression_r2(&best.expression, &x_test, &y_test) };
    let infix = best.expression.to_infix();
    println!("expression: {infix}");
    match r2_test.or(r2_train) {
        Some(r) => println!("r2: {r:.6}"),
        None => println!("r2: n/a"),
    }
    println!("complexity: {}", best.expression.complexity());
    if result.truncated {
        println!("note: stopped by the time limit after {} epochs", result.log.len());
    }

    let report = serde_json::json!({
        "data": data.display().to_string(),
        "expression": infix,
        "best_reward": best.reward.is_finite().then_some(best.reward),
        "r2_train": r2_train,
        "r2_test": r2_test,
        "raw_complexity": best.expression.complexity(),
        "epochs_to_best": result.epochs_to_best(),
        "epochs_run": result.log.len(),
        "truncated": result.truncated,
        "seed": cfg.seed,
        "noise": noise,
    });
    std::fs::write(out.join("fit_report.json"), serde_json::to_string_pretty(&report)?)?;
    write_log_csv(&out.join("training_log.csv"), &result.log)?;
    let rewards: String = result
        .epoch_rewards
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(out.join("rewards.csv"), rewards)?;
    Ok(())
}

fn cmd_bench(cfg: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    let summary = run_experiment(cfg, out)?;
    for t in &summary.trials {
        match (&t.expression, &t.error) {
            (_, Some(e)) => println!("{} noise={} seed={}: error: {e}", t.problem, t.noise, t.seed),
            (Some(e), None) => println!(
                "{} noise={} seed={}: {e}  solved={} r2_test={}",
                t.problem,
                t.noise,
                t.seed,
                t.solved,
                t.r2_test.map_or("n/a".into(), |r| format!("{r:.6}"))
            ),
            (None, None) => println!("{} noise={} seed={}: no result", t.problem, t.noise, t.seed),
        }
    }
    print!("{}", aggregate_csv(&summary.aggregate));
    Ok(())
}

fn cmd_inspect(expression: &str, variables: usize) -> Result<(), Error> {
    let lib = TokenLibrary::full(variables);
    let expr = parse_infix(expression, &lib)?;
    println!("infix: {}", expr.to_infix());
    println!("nodes: {}  constants: {}  complexity: {}", expr.tree.len(), expr.constants.len(), expr.complexity());
    println!("{:>4} {:>8} {:>6} {:>6} {:>5} {:>10}  dpe(r=4)", "idx", "token", "parent", "slot", "depth", "h");
    for (i, n) in expr.tree.nodes().iter().enumerate() {
        let code = dpe_encode(n.position.depth as f64, n.position.horizontal, 2);
        println!(
            "{i:>4} {:>8} {:>6} {:>6} {:>5} {:>10.6}  [{}]",
            n.op.symbol(),
            n.parent.map_or("-".into(), |p| p.to_string()),
            format!("{:?}", n.slot).to_lowercase(),
            n.position.depth,
            n.position.horizontal,
            code.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(())
}

const TAIL_KS: &[usize] = &[1, 5, 10, 25, 50];

fn read_reward_log(path: &Path) -> Result<Vec<Vec<f64>>, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data { line: 0, message: format!("{}: {e}", path.display()) })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|c| match c.trim() {
                    "-inf" => Ok(f64::NEG_INFINITY),
                    s => s.parse::<f64>().map_err(|_| Error::Data {
                        line: i + 1,
                        message: format!("`{s}` is not a number"),
                    }),
                })
                .collect()
        })
        .collect()
}

fn cmd_tail_lab(cfg: &ExperimentConfig, rewards: Option<&Path>, out: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    let alpha = cfg.alpha;

    // precision demonstration
    let z = tail_barrier_rewards(100);
    let mapped = inverse_map_f32(&z);
    let all_equal = mapped.iter().all(|m| m.to_bits() == mapped[0].to_bits());
    let mapped64: Vec<f64> = mapped.iter().map(|&v| v as f64).collect();
    let (_, base32) = baseline_weights(&mapped64, alpha);
    let (_, base64) = baseline_weights(&z, alpha);
    let ranked = rank_map(&z, alpha, cfg.lambda);
    let demo = serde_json::json!({
        "rewards": "1e9 + i * 1e-4, i = 0..99",
        "alpha": alpha,
        "f32_mapped_all_equal": all_equal,
        "baseline_all_zero_f32": base32.iter().all(|&w| w == 0.0),
        "baseline_all_zero_f64": base64.iter().all(|&w| w == 0.0),
        "rank_map_all_zero": ranked.iter().all(|&w| w == 0.0),
        "rank_map_positive": ranked.iter().filter(|&&w| w > 0.0).count(),
    });
    std::fs::write(out.join("precision_barrier.json"), serde_json::to_string_pretty(&demo)?)?;
    println!(
        "precision demo: f32 mapped values identical = {all_equal}; baseline all-zero (f32) = {}; rank-map all-zero = {}",
        demo["baseline_all_zero_f32"], demo["rank_map_all_zero"]
    );

    // synthetic logs: uniform and heavy-tailed epochs
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch.min(1000);
    let uniform = vec![vec![1.0; batch]; 100];
    let skewed: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..batch).map(|_| rng.gen::<f64>().powi(8)).collect())
        .collect();
    for (name, logs) in [("uniform", &uniform), ("skewed", &skewed)] {
        let stats = tail_barrier_stats(logs, alpha, TAIL_KS);
        std::fs::write(out.join(format!("domination_{name}.csv")), to_csv(&stats))?;
        println!("{name}: barrier fraction {:.4}, domination {:?}", stats.barrier_fraction, stats.domination);
    }
    if let Some(path) = rewards {
        let logs = read_reward_log(path)?;
        let stats = tail_barrier_stats(&logs, alpha, TAIL_KS);
        std::fs::write(out.join("domination_recorded.csv"), to_csv(&stats))?;
        println!("recorded ({} epochs): barrier fraction {:.4}, domination {:?}", stats.epochs, stats.barrier_fraction, stats.domination);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = build_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let out = &cli.common.out;
    match &cli.command {
        Command::Fit { data } => cmd_fit(&cfg, data, out),
        Command::Bench => cmd_bench(&cfg, out),
        Command::Inspect { expression, variables } => cmd_inspect(expression, *variables),
        Command::TailLab { rewards } => cmd_tail_lab(&cfg, rewards.as_deref(), out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
