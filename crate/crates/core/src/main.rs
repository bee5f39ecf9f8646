use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nakamoto_mfe::analysis::efficiency::StationaryRates;
use nakamoto_mfe::analysis::oracle::{monte_carlo_oracle, SimConfig};
use nakamoto_mfe::analysis::search::{attach_basins, basin_frequencies, delay_sweep, exhaustive_search};
use nakamoto_mfe::config::{parse_config, ExperimentConfig, PolicySource};
use nakamoto_mfe::mean_field::{fixed_point, MuMode};
use nakamoto_mfe::solver::{best_response_iteration, EquilibriumOptions};
use nakamoto_mfe::{LocalPolicy, Model};

#[derive(Parser, Debug)]
#[command(name = "mfe", version, about = "Mean field equilibria of Nakamoto-style block graph growth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Graph classes and state counts
    Enumerate,
    /// Best-response iteration from the initial policy
    Solve,
    /// LCR efficiency against 1/(1+αΔ) over the δ grid
    Sweep,
    /// Equilibrium test, efficiency and basin size of every policy (M ≤ 4)
    Exhaustive,
    /// Agent-based Monte-Carlo run of the initial policy
    Simulate,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// key = value file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n_agents: Option<String>,
    #[arg(long, global = true)]
    max_blocks: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long, global = true)]
    gamma: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
    #[arg(long, global = true)]
    reward: Option<String>,
    /// lcr, root, or a policy file
    #[arg(long, global = true)]
    initial_policy: Option<String>,
    /// Comma-separated ρ grid
    #[arg(long, global = true)]
    rho: Option<String>,
    /// Comma-separated δ grid for `sweep`
    #[arg(long, global = true)]
    deltas: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    block_steps: Option<String>,
    #[arg(long, global = true)]
    threads: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    /// best-response or symmetric
    #[arg(long, global = true)]
    mu_mode: Option<String>,
    #[arg(long, global = true)]
    tie_tolerance: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields: [(&str, &Option<String>); 16] = [
            ("n_agents", &self.n_agents),
            ("max_blocks", &self.max_blocks),
            ("alpha", &self.alpha),
            ("delta", &self.delta),
            ("gamma", &self.gamma),
            ("epsilon", &self.epsilon),
            ("reward", &self.reward),
            ("initial_policy", &self.initial_policy),
            ("rho", &self.rho),
            ("deltas", &self.deltas),
            ("seed", &self.seed),
            ("block_steps", &self.block_steps),
            ("threads", &self.threads),
            ("out", &self.out),
            ("mu_mode", &self.mu_mode),
            ("tie_tolerance", &self.tie_tolerance),
        ];
        fields
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "{} {} {}: {}",
                buf.timestamp_millis(),
                record.level(),
                record.target(),
                record.args()
            )
        })
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        log::error!("{e:#}");
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = parse_config(cli.opts.config.as_deref(), &cli.opts.pairs())?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    let t = Instant::now();
    let model = Model::new(cfg.model).context("building graph catalogue and state space")?;
    log::info!(
        "model M={} classes={} states={} built in {:.2?}",
        model.cfg.max_blocks,
        model.cat.len(),
        model.space.len(),
        t.elapsed()
    );
    match cli.command {
        Command::Enumerate => enumerate(&model, &cfg),
        Command::Solve => solve(&model, &cfg),
        Command::Sweep => sweep(&model, &cfg),
        Command::Exhaustive => exhaustive(&model, &cfg),
        Command::Simulate => simulate(&model, &cfg),
    }
}

fn load_policy(model: &Model, source: &PolicySource) -> Result<LocalPolicy> {
    Ok(match source {
        PolicySource::Lcr => LocalPolicy::lcr(&model.cat),
        PolicySource::Root => LocalPolicy::root(&model.cat),
        PolicySource::File(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading policy file {}", path.display()))?;
            LocalPolicy::parse(&model.cat, &text).with_context(|| format!("parsing policy file {}", path.display()))?
        }
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn enumerate(model: &Model, cfg: &ExperimentConfig) -> Result<()> {
    let path = cfg.out.join("catalogue.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["class", "name", "size", "states"])?;
    for (id, class) in model.cat.classes().iter().enumerate() {
        let states = model.space.of_class(id).len();
        w.write_record([id.to_string(), class.name().to_string(), class.size().to_string(), states.to_string()])?;
    }
    w.flush()?;
    let counts = model.cat.counts_by_size();
    println!("graph classes by size: {counts:?} (total {})", model.cat.len());
    println!("game states: {}", model.space.len());
    println!("deterministic local policies: {}", LocalPolicy::count(&model.cat));
    log::info!("wrote {}", path.display());
    Ok(())
}

fn solve(model: &Model, cfg: &ExperimentConfig) -> Result<()> {
    let initial = load_policy(model, &cfg.initial_policy)?;
    let run = best_response_iteration(model, &initial, cfg.mu_mode).context("best-response iteration")?;
    let policy_path = cfg.out.join("policy.txt");
    fs::write(&policy_path, run.policy.to_text(&model.cat))?;
    let trace_path = cfg.out.join("trace.csv");
    let mut w = csv_writer(&trace_path)?;
    w.write_record(["iteration", "policy"])?;
    for (i, p) in run.trace.iter().enumerate() {
        w.write_record([i.to_string(), p.label()])?;
    }
    w.flush()?;
    let fp = fixed_point(model, &run.policy, cfg.mu_mode)?;
    let rates = StationaryRates::of(&fp.chain, &fp.stationary);
    println!("equilibrium policy: {}", run.policy.label());
    println!("outer iterations: {}", run.outer_iterations());
    println!("is initial policy: {}", run.policy == initial);
    println!("mean field iterations: {}", fp.residuals.len());
    match rates.efficiency() {
        Ok(e) => println!("stationary PoW efficiency: {e:.6}"),
        Err(e) => println!("stationary PoW efficiency: {e}"),
    }
    println!("prune rate: {:.6}  reset rate: {:.6}", rates.prune, rates.reset);
    log::info!("wrote {} and {}", policy_path.display(), trace_path.display());
    Ok(())
}

fn sweep(model: &Model, cfg: &ExperimentConfig) -> Result<()> {
    let rows = delay_sweep(model, &cfg.deltas, &cfg.rhos, cfg.mu_mode);
    let path = cfg.out.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["delta", "rho", "delay_steps", "theoretical", "measured", "rel_error"])?;
    let mut failed = 0;
    for (delta, row) in cfg.deltas.iter().zip(&rows) {
        match row {
            Ok(reports) => {
                for r in reports {
                    w.write_record([
                        r.delta.to_string(),
                        r.rho.to_string(),
                        r.delay_steps.to_string(),
                        r.theoretical.to_string(),
                        r.measured.to_string(),
                        r.rel_error.to_string(),
                    ])?;
                }
            }
            Err(e) => {
                failed += 1;
                log::error!("delta={delta}: {e}");
            }
        }
    }
    w.flush()?;
    log::info!("wrote {}", path.display());
    if failed > 0 {
        bail!("{failed} of {} sweep points failed", rows.len());
    }
    Ok(())
}

fn exhaustive(model: &Model, cfg: &ExperimentConfig) -> Result<()> {
    let t = Instant::now();
    let opts = EquilibriumOptions {
        tie_tolerance: cfg.tie_tolerance,
        ..EquilibriumOptions::default()
    };
    let mut report = exhaustive_search(model, opts, false)?;
    log::info!("equilibrium tests done in {:.2?}", t.elapsed());
    let basins = basin_frequencies(model, cfg.mu_mode);
    attach_basins(&mut report, &basins);
    log::info!("basins done in {:.2?}", t.elapsed());
    let path = cfg.out.join("policies.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["policy", "is_equilibrium", "efficiency", "basin_count"])?;
    for r in &report.policies {
        if let Some(err) = &r.error {
            log::warn!("policy {}: {err}", r.policy.label());
        }
        w.write_record([
            r.policy.label(),
            r.is_equilibrium.to_string(),
            r.efficiency.map_or_else(String::new, |e| e.to_string()),
            r.basin_count.to_string(),
        ])?;
    }
    w.flush()?;
    println!("policies: {}", report.policies.len());
    println!("equilibria: {}", report.equilibria);
    if let Some(best) = report.best {
        let b = &report.policies[best];
        println!("best equilibrium: {} efficiency {:.6}", b.policy.label(), b.efficiency.unwrap_or(f64::NAN));
    }
    println!(
        "LCR best: {}  equilibria tied with best: {}  gap to next efficiency: {}",
        report.lcr_is_best(),
        report.tied_with_best.len(),
        report.uniqueness_gap.map_or_else(|| "n/a".into(), |g| format!("{g:.6}"))
    );
    println!("non-convergent best-response starts: {}", basins.non_convergent);
    log::info!("wrote {}", path.display());
    Ok(())
}

fn simulate(model: &Model, cfg: &ExperimentConfig) -> Result<()> {
    let policy = load_policy(model, &cfg.initial_policy)?;
    let sim = SimConfig::from_model(model, cfg.block_steps, cfg.seed);
    let report = monte_carlo_oracle(&model.cat, &policy, &sim)?;
    let path = cfg.out.join("oracle.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["metric", "estimate", "std_error"])?;
    let mut row = |name: String, est: f64, se: f64| w.write_record([name, est.to_string(), se.to_string()]);
    row("efficiency".into(), report.efficiency.estimate, report.efficiency.std_error)?;
    row("prune_rate".into(), report.prune_rate.estimate, report.prune_rate.std_error)?;
    row("reset_rate".into(), report.reset_rate.estimate, report.reset_rate.std_error)?;
    for c in &report.local_graphs {
        let name = format!("local_graph:{}:{}", model.cat.class(c.graph).name(), c.candidate);
        row(name, c.frequency.estimate, c.frequency.std_error)?;
    }
    // chain predictions for comparison, exact so the error column is 0
    let fp = fixed_point(model, &policy, MuMode::Symmetric)?;
    let rates = StationaryRates::of(&fp.chain, &fp.stationary);
    if let Ok(e) = rates.efficiency() {
        row("chain_efficiency".into(), e, 0.0)?;
    }
    row("chain_prune_rate".into(), rates.prune, 0.0)?;
    row("chain_reset_rate".into(), rates.reset, 0.0)?;
    w.flush()?;
    println!(
        "simulated efficiency {:.5} ± {:.5} over {} block steps",
        report.efficiency.estimate, report.efficiency.std_error, report.block_steps
    );
    log::info!("wrote {}", path.display());
    Ok(())
}
