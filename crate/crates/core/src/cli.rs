//! Command-line front end.
//!
//! Exit status: 0 when every run succeeded and every cross-check held, 1 when a
//! cross-check failed, 2 on usage or input errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::algorithms::{format_trace, replay, PartitionResult, SearchBudget, Traversal, ALGORITHM_NAMES};
use crate::cache::{Cache, CacheMode, Engine, DEFAULT_DIR};
use crate::cost::{model_by_name, MODEL_NAMES};
use crate::dot::to_dot;
use crate::gen::{generate, BenchSpec, GENERATORS};
use crate::graph::{build_wsp, is_legal_partition};
use crate::ir::{parse_program, DType, Program};
use crate::state::WspState;

pub const CACHE_DIR_ENV: &str = "FUSEPART_CACHE_DIR";
pub const CONFIG_ENV: &str = "FUSEPART_CONFIG";
/// `cache stats` warns above this many entries; nothing is evicted automatically.
pub const MAX_ENTRIES_WARNING: usize = 10_000;

#[derive(Parser, Debug)]
#[command(name = "fusepart", version, about = "Partition array bytecode into fused kernels")]
pub struct Cli {
    /// key=value configuration file; flags take precedence.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Partition program files and report costs.
    Partition {
        /// Program files; `-` reads standard input.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Output format; `table` by default.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Timing repetitions per run.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Print the partition graph of a program in Graphviz format.
    Dot {
        /// Program file; `-` reads standard input.
        input: PathBuf,
        /// Algorithm whose final state is drawn; the initial state if omitted.
        #[arg(long)]
        algorithm: Option<String>,
        /// Cost model for weights and costs; the first of `--models` if omitted.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate synthetic programs and emit a CSV report.
    Bench {
        /// Generators, comma separated: chain, stencil, random-dag, fan.
        #[arg(long, value_delimiter = ',')]
        generators: Option<Vec<String>>,
        /// Instructions per generated program.
        #[arg(long, default_value_t = 10)]
        ops: usize,
        /// Base array count for random-dag.
        #[arg(long, default_value_t = 3)]
        bases: usize,
        /// Array element count.
        #[arg(long, default_value_t = 4)]
        size: u64,
        /// Element type: u8, f32 or f64.
        #[arg(long, default_value = "u8")]
        dtype: String,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Also run the exhaustive oracle and require optimal to match it.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        run: RunArgs,
        /// Timing repetitions per run.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Inspect or empty the result cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
        /// Cache directory.
        #[arg(long, global = true)]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug, Clone, Copy)]
pub enum CacheAction {
    /// Delete every cache entry.
    Clear,
    /// Print entry count and total size.
    Stats,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Algorithms, comma separated.
    #[arg(short, long, value_delimiter = ',')]
    pub algorithms: Option<Vec<String>>,
    /// Cost models, comma separated.
    #[arg(short, long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Search node budget for optimal; 0 means unlimited.
    #[arg(long)]
    pub max_nodes: Option<u64>,
    /// Search time budget for optimal in milliseconds; 0 means unlimited.
    #[arg(long)]
    pub max_ms: Option<u64>,
    /// Breadth-first search order for optimal.
    #[arg(long)]
    pub bfs: bool,
    /// Cache mode: warm (reuse entries), cold (recompute and overwrite) or none.
    #[arg(long, value_parser = clap::value_parser!(CacheMode), conflicts_with_all = ["warm_cache", "cold_cache", "no_cache"])]
    pub cache: Option<CacheMode>,
    /// Same as `--cache warm`.
    #[arg(long)]
    pub warm_cache: bool,
    /// Same as `--cache cold`.
    #[arg(long)]
    pub cold_cache: bool,
    /// Same as `--cache none`.
    #[arg(long)]
    pub no_cache: bool,
    /// Cache directory; defaults to $FUSEPART_CACHE_DIR, then the config, then `.fusepart-cache`.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl clap::builder::ValueParserFactory for CacheMode {
    type Parser = clap::builder::ValueParser;
    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<CacheMode>())
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Trace,
    Dot,
}

const DEFAULT_ALGORITHMS: [&str; 5] = ["singleton", "linear", "greedy", "unintrusive", "optimal"];

/// Settings after merging defaults, the config file and flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub algorithms: Vec<String>,
    pub models: Vec<String>,
    pub budget: SearchBudget,
    pub order: Traversal,
    pub cache: CacheMode,
    pub cache_dir: PathBuf,
    pub format: Format,
    pub reps: usize,
}

#[derive(Debug)]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key=value", i + 1));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, UsageError> {
    v.parse().or_else(|_| usage(format!("config key `{}`: bad value `{}`", key, v)))
}

impl RunConfig {
    pub fn resolve(
        run: &RunArgs,
        format: Option<Format>,
        reps: Option<usize>,
        config: &BTreeMap<String, String>,
        env_cache_dir: Option<String>,
    ) -> Result<RunConfig, UsageError> {
        const KEYS: [&str; 10] = [
            "algorithms",
            "models",
            "max_nodes",
            "max_ms",
            "bfs",
            "cache",
            "cache_dir",
            "format",
            "reps",
            "generators",
        ];
        if let Some(k) = config.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return usage(format!("unknown config key `{}`", k));
        }
        let get = |k: &str| config.get(k).map(String::as_str);

        let algorithms = run
            .algorithms
            .clone()
            .or_else(|| get("algorithms").map(list))
            .unwrap_or_else(|| DEFAULT_ALGORITHMS.iter().map(|s| s.to_string()).collect());
        let models = run.models.clone().or_else(|| get("models").map(list)).unwrap_or_else(|| vec!["bohrium".into()]);
        if algorithms.is_empty() || models.is_empty() {
            return usage("at least one algorithm and one model are required");
        }
        for a in &algorithms {
            if !ALGORITHM_NAMES.contains(&a.as_str()) {
                return usage(format!("unknown algorithm `{}` (expected one of {})", a, ALGORITHM_NAMES.join(", ")));
            }
        }
        for m in &models {
            if !MODEL_NAMES.contains(&m.as_str()) {
                return usage(format!("unknown model `{}` (expected one of {})", m, MODEL_NAMES.join(", ")));
            }
        }

        let mut budget = SearchBudget::default();
        let max_nodes = match run.max_nodes {
            Some(n) => Some(n),
            None => get("max_nodes").map(|v| number("max_nodes", v)).transpose()?,
        };
        if let Some(n) = max_nodes {
            budget.max_nodes = (n > 0).then_some(n);
        }
        let max_ms = match run.max_ms {
            Some(n) => Some(n),
            None => get("max_ms").map(|v| number("max_ms", v)).transpose()?,
        };
        if let Some(ms) = max_ms {
            budget.max_time = (ms > 0).then(|| Duration::from_millis(ms));
        }

        let bfs = run.bfs || get("bfs").map(|v| number::<bool>("bfs", v)).transpose()?.unwrap_or(false);
        let order = if bfs { Traversal::BreadthFirst } else { Traversal::DepthFirst };

        let cache = if run.no_cache {
            CacheMode::None
        } else if run.cold_cache {
            CacheMode::Cold
        } else if run.warm_cache {
            CacheMode::Warm
        } else if let Some(c) = run.cache {
            c
        } else if let Some(v) = get("cache") {
            v.parse().map_err(UsageError)?
        } else {
            CacheMode::Warm
        };
        let cache_dir = run
            .cache_dir
            .clone()
            .or_else(|| env_cache_dir.filter(|s| !s.is_empty()).map(PathBuf::from))
            .or_else(|| get("cache_dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DIR));

        let format = match format {
            Some(f) => f,
            None => match get("format") {
                Some(v) => Format::from_str(v, true).or_else(|_| usage(format!("unknown format `{}`", v)))?,
                None => Format::Table,
            },
        };
        let reps = match reps {
            Some(r) => r,
            None => get("reps").map(|v| number("reps", v)).transpose()?.unwrap_or(1),
        };
        if reps == 0 {
            return usage("reps must be at least 1");
        }
        Ok(RunConfig { algorithms, models, budget, order, cache, cache_dir, format, reps })
    }

    fn engine(&self) -> Engine {
        Engine::new(Some(Cache::new(&self.cache_dir)), self.cache)
    }
}

/// One (program, algorithm, model) measurement.
#[derive(Clone, Debug)]
pub struct Row {
    pub program: String,
    pub seed: Option<u64>,
    pub generator: String,
    pub ops: usize,
    pub algorithm: String,
    pub model: String,
    pub result: PartitionResult,
    pub ms_mean: f64,
    pub ms_2sd: f64,
}

/// Mean and twice the sample standard deviation.
pub fn mean_2sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * var.sqrt())
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    engine: Engine,
    failures: Vec<String>,
    err: &'a mut dyn Write,
}

impl Runner<'_> {
    fn run(
        &mut self,
        p: &Arc<Program>,
        name: &str,
        algorithm: &str,
        model: &str,
    ) -> Result<(PartitionResult, f64, f64), UsageError> {
        let mut times = Vec::with_capacity(self.cfg.reps);
        let mut first: Option<PartitionResult> = None;
        for _ in 0..self.cfg.reps {
            let o = self
                .engine
                .solve(p, algorithm, model, self.cfg.budget, self.cfg.order)
                .map_err(|e| UsageError(format!("{}: {}", name, e)))?;
            for w in &o.warnings {
                let _ = writeln!(self.err, "warning: {}", w);
            }
            times.push(o.result.stats.elapsed.as_secs_f64() * 1e3);
            match &first {
                None => first = Some(o.result),
                Some(f) if f.partition != o.result.partition || f.cost != o.result.cost => {
                    self.failures.push(format!("{} {} {}: repetitions disagree", name, algorithm, model));
                }
                Some(_) => {}
            }
        }
        let r = first.expect("reps >= 1");
        self.check(p, name, algorithm, model, &r);
        let (mean, sd2) = mean_2sd(&times);
        Ok((r, mean, sd2))
    }

    /// Legality, recomputed cost and trace replay.
    fn check(&mut self, p: &Arc<Program>, name: &str, algorithm: &str, model: &str, r: &PartitionResult) {
        let g = build_wsp(p);
        let m = model_by_name(model, p).expect("model validated");
        let tag = format!("{} {} {}", name, algorithm, model);
        if !is_legal_partition(&g, &r.partition) {
            self.failures.push(format!("{}: illegal partition", tag));
        }
        if m.evaluate(&r.partition) != r.cost {
            self.failures.push(format!("{}: reported cost differs from recomputed cost", tag));
        }
        match replay(&g, m.as_ref(), &r.merge_trace) {
            Ok(s) if s.partition() == r.partition => {}
            _ => self.failures.push(format!("{}: merge trace does not replay to the partition", tag)),
        }
    }
}

/// Every algorithm is no worse than singleton, and a proven optimum is no worse than
/// anything else under the same model. With an oracle row, optimal must match it.
pub fn dominance_failures(rows: &[Row]) -> Vec<String> {
    let mut groups: BTreeMap<(String, String), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.program.clone(), r.model.clone())).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((prog, model), rs) in groups {
        let cost = |a: &str| rs.iter().find(|r| r.algorithm == a).map(|r| r.result.cost);
        if let Some(single) = cost("singleton") {
            for r in &rs {
                if matches!(r.algorithm.as_str(), "greedy" | "unintrusive" | "optimal" | "bruteforce")
                    && r.result.cost > single
                {
                    out.push(format!(
                        "{} {}: {} cost {} exceeds singleton {}",
                        prog, model, r.algorithm, r.result.cost, single
                    ));
                }
            }
        }
        for opt in
            rs.iter().filter(|r| r.result.proven_optimal && matches!(r.algorithm.as_str(), "optimal" | "bruteforce"))
        {
            for r in &rs {
                if r.result.cost < opt.result.cost {
                    out.push(format!(
                        "{} {}: {} cost {} beats proven {} cost {}",
                        prog, model, r.algorithm, r.result.cost, opt.algorithm, opt.result.cost
                    ));
                }
            }
        }
    }
    out
}

pub const CSV_HEADER: &str = "seed,generator,ops,algorithm,model,cost,blocks,proven,nodes,pruned,ms_mean,ms_2sd";

pub fn csv_row(r: &Row) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
        r.seed.map_or(String::new(), |s| s.to_string()),
        r.generator,
        r.ops,
        r.algorithm,
        r.model,
        r.result.cost,
        r.result.partition.len(),
        r.result.proven_optimal,
        r.result.stats.nodes,
        r.result.stats.pruned,
        r.ms_mean,
        r.ms_2sd
    )
}

fn table(rows: &[Row]) -> String {
    let header = ["program", "algorithm", "model", "cost", "blocks", "proven", "nodes", "pruned", "ms_mean", "ms_2sd"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.program.clone(),
                r.algorithm.clone(),
                r.model.clone(),
                r.result.cost.to_string(),
                r.result.partition.len().to_string(),
                r.result.proven_optimal.to_string(),
                r.result.stats.nodes.to_string(),
                r.result.stats.pruned.to_string(),
                format!("{:.3}", r.ms_mean),
                format!("{:.3}", r.ms_2sd),
            ]
        })
        .collect();
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: Vec<&str>| {
        let parts: Vec<String> = row.iter().zip(&width).map(|(c, w)| format!("{:<w$}", c, w = w)).collect();
        format!("{}\n", parts.join("  ").trim_end())
    };
    let mut out = line(header.to_vec());
    for row in &cells {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn read_program(path: &Path) -> Result<(String, Program), UsageError> {
    let (name, text) = if path == Path::new("-") {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)
            .map_err(|e| UsageError(format!("stdin: {}", e)))?;
        ("-".to_string(), s)
    } else {
        let text = fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {}", path.display(), e)))?;
        (path.display().to_string(), text)
    };
    let p = parse_program(&text).map_err(|e| UsageError(format!("{}: {}", name, e)))?;
    Ok((name, p))
}

fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, String>, UsageError> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {}", p.display(), e)))?;
            parse_config(&text)
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{}", text) } else { write!(out, "{}", text) };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(failures) if failures.is_empty() => 0,
        Ok(failures) => {
            for f in failures {
                let _ = writeln!(err, "check failed: {}", f);
            }
            1
        }
        Err(UsageError(msg)) => {
            let _ = writeln!(err, "error: {}", msg);
            2
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Vec<String>, UsageError> {
    let config = load_config(cli.config.as_deref())?;
    let env_dir = std::env::var(CACHE_DIR_ENV).ok();
    let io = |e: std::io::Error| UsageError(e.to_string());
    match cli.command {
        Command::Partition { inputs, run, format, reps } => {
            let cfg = RunConfig::resolve(&run, format, reps, &config, env_dir)?;
            let mut programs = Vec::new();
            for path in &inputs {
                let (name, p) = read_program(path)?;
                programs.push((name, Arc::new(p)));
            }
            let mut runner = Runner { cfg: &cfg, engine: cfg.engine(), failures: Vec::new(), err };
            let mut rows = Vec::new();
            for (name, p) in &programs {
                for model in &cfg.models {
                    for alg in &cfg.algorithms {
                        let (result, ms_mean, ms_2sd) = runner.run(p, name, alg, model)?;
                        rows.push(Row {
                            program: name.clone(),
                            seed: None,
                            generator: String::new(),
                            ops: p.len(),
                            algorithm: alg.clone(),
                            model: model.clone(),
                            result,
                            ms_mean,
                            ms_2sd,
                        });
                    }
                }
            }
            let mut failures = runner.failures;
            failures.extend(dominance_failures(&rows));
            let text = match cfg.format {
                Format::Table => table(&rows),
                Format::Csv => {
                    let mut s = format!("program,{}\n", CSV_HEADER);
                    for r in &rows {
                        s.push_str(&format!("{},{}\n", r.program, csv_row(r)));
                    }
                    s
                }
                Format::Trace => rows
                    .iter()
                    .map(|r| format!("# program={}\n{}", r.program, format_trace(&r.algorithm, &r.model, &r.result)))
                    .collect(),
                Format::Dot => {
                    let mut s = String::new();
                    for r in &rows {
                        let p = &programs.iter().find(|(n, _)| *n == r.program).unwrap().1;
                        let g = build_wsp(p);
                        let m = model_by_name(&r.model, p).unwrap();
                        let st = WspState::from_partition(&g, m.as_ref(), &r.result.partition);
                        s.push_str(&to_dot(&st, &format!("{} {} {}", r.program, r.algorithm, r.model)));
                    }
                    s
                }
            };
            out.write_all(text.as_bytes()).map_err(io)?;
            Ok(failures)
        }
        Command::Dot { input, algorithm, model, mut run } => {
            if let Some(a) = &algorithm {
                run.algorithms = Some(vec![a.clone()]);
            }
            if let Some(m) = &model {
                run.models = Some(vec![m.clone()]);
            }
            let cfg = RunConfig::resolve(&run, Some(Format::Dot), None, &config, env_dir)?;
            let (name, p) = read_program(&input)?;
            let p = Arc::new(p);
            let g = build_wsp(&p);
            let model = cfg.models[0].clone();
            let m = model_by_name(&model, &p).expect("model validated");
            let (state, failures) = match &algorithm {
                None => (WspState::singleton(&g, m.as_ref()), Vec::new()),
                Some(a) => {
                    let mut runner = Runner { cfg: &cfg, engine: cfg.engine(), failures: Vec::new(), err };
                    let (r, _, _) = runner.run(&p, &name, a, &model)?;
                    (WspState::from_partition(&g, m.as_ref(), &r.partition), runner.failures)
                }
            };
            let title = format!("{} {} {}", name, algorithm.as_deref().unwrap_or("initial"), model);
            out.write_all(to_dot(&state, &title).as_bytes()).map_err(io)?;
            Ok(failures)
        }
        Command::Bench { generators, ops, bases, size, dtype, seed, seeds, oracle, run, reps } => {
            let generators = generators
                .or_else(|| config.get("generators").map(|v| list(v)))
                .unwrap_or_else(|| vec!["chain".to_string()]);
            let cfg = RunConfig::resolve(&run, Some(Format::Csv), reps, &config, env_dir)?;
            let dtype = DType::parse(&dtype).ok_or_else(|| UsageError(format!("unknown dtype `{}`", dtype)))?;
            for g in &generators {
                if !GENERATORS.contains(&g.as_str()) {
                    return usage(format!("unknown generator `{}` (expected one of {})", g, GENERATORS.join(", ")));
                }
            }
            let mut algorithms = cfg.algorithms.clone();
            if oracle && !algorithms.iter().any(|a| a == "bruteforce") {
                algorithms.push("bruteforce".into());
            }
            let mut runner = Runner { cfg: &cfg, engine: cfg.engine(), failures: Vec::new(), err };
            let mut rows = Vec::new();
            for g in &generators {
                for s in seed..seed.saturating_add(seeds) {
                    let spec = BenchSpec { generator: g.clone(), ops, bases, size, dtype, seed: s };
                    let p = Arc::new(generate(&spec).map_err(UsageError)?);
                    let name = format!("{}#{}", g, s);
                    for model in &cfg.models {
                        for alg in &algorithms {
                            let (result, ms_mean, ms_2sd) = runner.run(&p, &name, alg, model)?;
                            rows.push(Row {
                                program: name.clone(),
                                seed: Some(s),
                                generator: g.clone(),
                                ops: p.len(),
                                algorithm: alg.clone(),
                                model: model.clone(),
                                result,
                                ms_mean,
                                ms_2sd,
                            });
                        }
                    }
                }
            }
            let mut failures = runner.failures;
            failures.extend(dominance_failures(&rows));
            if oracle {
                for r in rows.iter().filter(|r| r.algorithm == "optimal" && r.result.proven_optimal) {
                    let bf = rows
                        .iter()
                        .find(|b| b.algorithm == "bruteforce" && b.program == r.program && b.model == r.model)
                        .expect("oracle row");
                    if bf.result.cost != r.result.cost {
                        failures.push(format!(
                            "{} {}: optimal {} differs from oracle {}",
                            r.program, r.model, r.result.cost, bf.result.cost
                        ));
                    }
                }
            }
            rows.sort_by(|a, b| {
                (&a.generator, a.seed, &a.model, &a.algorithm).cmp(&(&b.generator, b.seed, &b.model, &b.algorithm))
            });
            let mut s = format!("{}\n", CSV_HEADER);
            for r in &rows {
                s.push_str(&csv_row(r));
                s.push('\n');
            }
            out.write_all(s.as_bytes()).map_err(io)?;
            Ok(failures)
        }
        Command::Cache { action, cache_dir } => {
            let run = RunArgs { cache_dir, ..RunArgs::default() };
            let cfg = RunConfig::resolve(&run, None, None, &config, env_dir)?;
            let cache = Cache::new(&cfg.cache_dir);
            match action {
                CacheAction::Clear => {
                    let n = cache.clear().map_err(io)?;
                    writeln!(out, "removed {} files from {}", n, cache.dir().display()).map_err(io)?;
                }
                CacheAction::Stats => {
                    let s = cache.stats().map_err(io)?;
                    writeln!(out, "dir {}\nentries {}\nbytes {}", cache.dir().display(), s.entries, s.bytes)
                        .map_err(io)?;
                    if s.entries > MAX_ENTRIES_WARNING {
                        let _ = writeln!(
                            err,
                            "warning: {} entries exceed {}; run `fusepart cache clear`",
                            s.entries, MAX_ENTRIES_WARNING
                        );
                    }
                }
            }
            Ok(Vec::new())
        }
    }
}
