//! On-disk result cache keyed by a program fingerprint, and the engine that consults it.
//!
//! Entries are small text files named by the hex key. A hit is only used after the stored
//! partition has been re-validated against the program: legal, matching cost, and a merge
//! trace that replays to it.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algorithms::{self, AlgoError, PartitionResult, SearchBudget, Stats, Traversal};
use crate::cost::{model_by_name, CostModel};
use crate::graph::{build_wsp, is_legal_partition, Partition, WspGraph};
use crate::ir::{serialize_positional, Program};
use crate::state::WspState;

const MAGIC: &str = "fusepart-cache 1";
pub const DEFAULT_DIR: &str = ".fusepart-cache";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CacheMode {
    /// Read hits and write misses.
    #[default]
    Warm,
    /// Always recompute, then overwrite the entry.
    Cold,
    /// Never touch the cache.
    None,
}

impl FromStr for CacheMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "warm" => Ok(CacheMode::Warm),
            "cold" => Ok(CacheMode::Cold),
            "none" => Ok(CacheMode::None),
            _ => Err(format!("unknown cache mode `{}` (expected warm, cold or none)", s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    /// Fingerprint of the program up to base renaming, plus every parameter that can change
    /// the answer.
    pub fn new(p: &Program, algorithm: &str, model: &str, budget: SearchBudget, order: Traversal) -> CacheKey {
        let mut h = Sha256::new();
        h.update(b"fusepart-key 1\n");
        h.update(serialize_positional(p).as_bytes());
        let order = match order {
            Traversal::DepthFirst => "dfs",
            Traversal::BreadthFirst => "bfs",
        };
        h.update(
            format!("\nalgorithm={}\nmodel={}\nbudget={}\norder={}\n", algorithm, model, budget, order).as_bytes(),
        );
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn hex(&self) -> &str {
        &self.0
    }
}

#[derive(Debug)]
pub enum Lookup {
    Hit(PartitionResult),
    Miss,
    /// An entry exists but failed parsing or validation.
    Corrupt(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
}

#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Cache {
        Cache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.entry", key.hex()))
    }

    pub fn lookup(&self, key: &CacheKey, g: &WspGraph, m: &dyn CostModel) -> Lookup {
        let text = match fs::read_to_string(self.path(key)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Lookup::Miss,
            Err(e) => return Lookup::Corrupt(e.to_string()),
        };
        match decode(&text, key).and_then(|r| validate(r, g, m)) {
            Ok(r) => Lookup::Hit(r),
            Err(e) => Lookup::Corrupt(e),
        }
    }

    /// Writes to a temporary file in the cache directory, then renames over the entry.
    pub fn store(&self, key: &CacheKey, r: &PartitionResult) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}-{}",
            key.hex(),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let res = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(encode(key, r).as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, self.path(key))
        })();
        if res.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        res
    }

    fn entries(&self) -> io::Result<Vec<PathBuf>> {
        let rd = match fs::read_dir(&self.dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        for e in rd {
            let p = e?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".entry") || name.starts_with(".tmp-") {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Removes all entries and leftover temporaries. Returns how many files were removed.
    pub fn clear(&self) -> io::Result<usize> {
        let files = self.entries()?;
        for f in &files {
            fs::remove_file(f)?;
        }
        Ok(files.len())
    }

    pub fn stats(&self) -> io::Result<CacheStats> {
        let mut s = CacheStats::default();
        for f in self.entries()? {
            if f.extension().is_some_and(|e| e == "entry") {
                s.entries += 1;
                s.bytes += fs::metadata(&f)?.len();
            }
        }
        Ok(s)
    }
}

fn encode(key: &CacheKey, r: &PartitionResult) -> String {
    let mut body = String::new();
    writeln!(body, "{}", MAGIC).unwrap();
    writeln!(body, "digest sha256").unwrap();
    writeln!(body, "key {}", key.hex()).unwrap();
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    writeln!(body, "created {}", created).unwrap();
    writeln!(body, "cost {}", r.cost).unwrap();
    writeln!(body, "proven {}", r.proven_optimal).unwrap();
    writeln!(body, "nodes {}", r.stats.nodes).unwrap();
    writeln!(body, "pruned {}", r.stats.pruned).unwrap();
    writeln!(body, "exhausted {}", r.stats.budget_exhausted).unwrap();
    writeln!(body, "vertices {}", r.partition.vertex_count()).unwrap();
    for b in r.partition.blocks() {
        let vs: Vec<String> = b.iter().map(|v| v.to_string()).collect();
        writeln!(body, "block {}", vs.join(" ")).unwrap();
    }
    for (a, b) in &r.merge_trace {
        writeln!(body, "merge {} {}", a, b).unwrap();
    }
    let sum = hex::encode(Sha256::digest(body.as_bytes()));
    body.push_str(&format!("checksum {}\n", sum));
    body
}

fn decode(text: &str, key: &CacheKey) -> Result<PartitionResult, String> {
    let (body, last) = text.trim_end_matches('\n').rsplit_once('\n').ok_or_else(|| "truncated entry".to_string())?;
    let body = format!("{}\n", body);
    let sum = last.strip_prefix("checksum ").ok_or("missing checksum")?;
    if hex::encode(Sha256::digest(body.as_bytes())) != sum {
        return Err("checksum mismatch".into());
    }
    let mut lines = body.lines();
    if lines.next() != Some(MAGIC) {
        return Err("bad magic".into());
    }
    let mut cost = None;
    let mut proven = None;
    let mut stats = Stats::default();
    let mut vertices = None;
    let mut blocks = Vec::new();
    let mut trace = Vec::new();
    let num = |s: &str| s.parse::<u64>().map_err(|_| format!("bad number `{}`", s));
    let flag = |s: &str| s.parse::<bool>().map_err(|_| format!("bad flag `{}`", s));
    for line in lines {
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        match tag {
            "key" if rest == key.hex() => {}
            "key" => return Err("key mismatch".into()),
            "digest" if rest == "sha256" => {}
            "digest" => return Err(format!("unsupported digest `{}`", rest)),
            "created" => {
                num(rest)?;
            }
            "cost" => cost = Some(num(rest)?),
            "proven" => proven = Some(flag(rest)?),
            "nodes" => stats.nodes = num(rest)?,
            "pruned" => stats.pruned = num(rest)?,
            "exhausted" => stats.budget_exhausted = flag(rest)?,
            "vertices" => vertices = Some(num(rest)? as usize),
            "block" => blocks.push(rest.split(' ').map(|v| num(v).map(|x| x as usize)).collect::<Result<Vec<_>, _>>()?),
            "merge" => {
                let (a, b) = rest.split_once(' ').ok_or("bad merge line")?;
                trace.push((num(a)? as usize, num(b)? as usize));
            }
            _ => return Err(format!("unexpected line `{}`", line)),
        }
    }
    let (Some(cost), Some(proven), Some(vertices)) = (cost, proven, vertices) else {
        return Err("missing field".into());
    };
    let mut seen = vec![false; vertices];
    for &v in blocks.iter().flatten() {
        if v >= vertices || std::mem::replace(&mut seen[v], true) {
            return Err("blocks do not partition the vertices".into());
        }
    }
    if seen.iter().any(|s| !s) {
        return Err("blocks do not partition the vertices".into());
    }
    stats.merges = trace.len();
    Ok(PartitionResult { partition: Partition::new(blocks), cost, proven_optimal: proven, stats, merge_trace: trace })
}

fn validate(r: PartitionResult, g: &WspGraph, m: &dyn CostModel) -> Result<PartitionResult, String> {
    if r.partition.vertex_count() != g.len() {
        return Err("entry is for a different program size".into());
    }
    if !is_legal_partition(g, &r.partition) {
        return Err("stored partition is illegal".into());
    }
    if m.evaluate(&r.partition) != r.cost {
        return Err("stored cost does not match".into());
    }
    let replayed =
        algorithms::replay(g, m, &r.merge_trace).map_err(|i| format!("merge {} of the stored trace is illegal", i))?;
    if replayed.partition() != r.partition {
        return Err("stored trace does not reach the stored partition".into());
    }
    Ok(r)
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown cost model `{0}`")]
    UnknownModel(String),
    #[error(transparent)]
    Algorithm(#[from] AlgoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Computed,
    Cached,
}

#[derive(Debug)]
pub struct Outcome {
    pub result: PartitionResult,
    pub source: Source,
    /// Problems with the cache that did not prevent an answer (corrupt entry, failed write).
    pub warnings: Vec<String>,
}

/// Runs partitioners through the cache and counts how many actually computed.
#[derive(Debug)]
pub struct Engine {
    cache: Option<Cache>,
    mode: CacheMode,
    computations: AtomicU64,
}

impl Engine {
    pub fn new(cache: Option<Cache>, mode: CacheMode) -> Engine {
        Engine { cache, mode, computations: AtomicU64::new(0) }
    }

    pub fn uncached() -> Engine {
        Engine::new(None, CacheMode::None)
    }

    pub fn computations(&self) -> u64 {
        self.computations.load(Ordering::Relaxed)
    }

    pub fn cache(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }

    pub fn solve(
        &self,
        p: &Arc<Program>,
        algorithm: &str,
        model: &str,
        budget: SearchBudget,
        order: Traversal,
    ) -> Result<Outcome, EngineError> {
        if !algorithms::ALGORITHM_NAMES.contains(&algorithm) {
            return Err(AlgoError::UnknownAlgorithm(algorithm.to_string()).into());
        }
        let m = model_by_name(model, p).ok_or_else(|| EngineError::UnknownModel(model.to_string()))?;
        let g = build_wsp(p);
        let mut warnings = Vec::new();
        let cache = match self.mode {
            CacheMode::None => None,
            _ => self.cache.as_ref(),
        };
        let key = CacheKey::new(p, algorithm, model, budget, order);
        if let (Some(c), CacheMode::Warm) = (cache, self.mode) {
            match c.lookup(&key, &g, m.as_ref()) {
                Lookup::Hit(result) => return Ok(Outcome { result, source: Source::Cached, warnings }),
                Lookup::Miss => {}
                Lookup::Corrupt(e) => warnings.push(format!("ignoring cache entry {}: {}", key.hex(), e)),
            }
        }
        self.computations.fetch_add(1, Ordering::Relaxed);
        let result = match (algorithm, order) {
            ("optimal", Traversal::BreadthFirst) => {
                algorithms::optimal_with(WspState::singleton(&g, m.as_ref()), budget, order)
            }
            _ => algorithms::run(algorithm, &g, m.as_ref(), budget)?,
        };
        if let Some(c) = cache {
            if let Err(e) = c.store(&key, &result) {
                warnings.push(format!("could not write cache entry {}: {}", key.hex(), e));
            }
        }
        Ok(Outcome { result, source: Source::Computed, warnings })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    const STENCIL_PAIR: &str = include_str!("../tests/fixtures/stencil_pair.fp");

    fn prog(src: &str) -> Arc<Program> {
        Arc::new(parse_program(src).unwrap())
    }

    #[test]
    fn key_ignores_names_but_not_parameters() {
        let a = prog("array X 4 u8\narray Y 4 u8\nCOPY X, 1\nADD Y, X, X\nSYNC Y");
        let b = prog("array P 4 u8\narray Q 4 u8\nCOPY P, 1\nADD Q, P, P\nSYNC Q");
        let c = prog("array X 4 u8\narray Y 4 u8\nCOPY X, 1\nADD Y, X, X\nSYNC X");
        let k = |p: &Program, alg, model| CacheKey::new(p, alg, model, SearchBudget::default(), Traversal::DepthFirst);
        assert_eq!(k(&a, "greedy", "bohrium"), k(&b, "greedy", "bohrium"));
        assert_ne!(k(&a, "greedy", "bohrium"), k(&c, "greedy", "bohrium"));
        assert_ne!(k(&a, "greedy", "bohrium"), k(&a, "optimal", "bohrium"));
        assert_ne!(k(&a, "greedy", "bohrium"), k(&a, "greedy", "robinson"));
        assert_ne!(
            k(&a, "optimal", "bohrium"),
            CacheKey::new(&a, "optimal", "bohrium", SearchBudget::nodes(5), Traversal::DepthFirst)
        );
    }

    #[test]
    fn warm_hits_and_corruption_recovery() {
        let dir = tempfile::tempdir().unwrap();
        let p = prog(STENCIL_PAIR);
        let e = Engine::new(Some(Cache::new(dir.path())), CacheMode::Warm);
        let first = e.solve(&p, "greedy", "bohrium", SearchBudget::default(), Traversal::DepthFirst).unwrap();
        assert_eq!(first.source, Source::Computed);
        for _ in 0..5 {
            let o = e.solve(&p, "greedy", "bohrium", SearchBudget::default(), Traversal::DepthFirst).unwrap();
            assert_eq!(o.source, Source::Cached);
            assert_eq!(o.result.partition, first.result.partition);
            assert_eq!(o.result.cost, 38);
        }
        assert_eq!(e.computations(), 1);
        assert_eq!(e.cache().unwrap().stats().unwrap().entries, 1);

        let key = CacheKey::new(&p, "greedy", "bohrium", SearchBudget::default(), Traversal::DepthFirst);
        let path = dir.path().join(format!("{}.entry", key.hex()));
        let text = fs::read_to_string(&path).unwrap().replace("cost 38", "cost 37");
        fs::write(&path, text).unwrap();
        let o = e.solve(&p, "greedy", "bohrium", SearchBudget::default(), Traversal::DepthFirst).unwrap();
        assert_eq!(o.source, Source::Computed);
        assert_eq!(o.warnings.len(), 1);
        assert_eq!(e.computations(), 2);
        let o = e.solve(&p, "greedy", "bohrium", SearchBudget::default(), Traversal::DepthFirst).unwrap();
        assert_eq!(o.source, Source::Cached);
        assert_eq!(e.cache().unwrap().clear().unwrap(), 1);
        assert_eq!(e.cache().unwrap().stats().unwrap(), CacheStats::default());
    }

    #[test]
    fn validation_rejects_plausible_but_wrong_entries() {
        let p = prog(STENCIL_PAIR);
        let g = build_wsp(&p);
        let m = model_by_name("bohrium", &p).unwrap();
        let key = CacheKey::new(&p, "linear", "bohrium", SearchBudget::default(), Traversal::DepthFirst);
        let good = algorithms::linear(&g, m.as_ref());
        assert!(validate(decode(&encode(&key, &good), &key).unwrap(), &g, m.as_ref()).is_ok());

        // Internally consistent entry with an illegal partition.
        let mut bad = good.clone();
        bad.partition = Partition::new([(0..17).collect::<Vec<_>>()]);
        bad.cost = m.evaluate(&bad.partition);
        assert!(validate(decode(&encode(&key, &bad), &key).unwrap(), &g, m.as_ref()).is_err());

        let other = CacheKey::new(&p, "greedy", "bohrium", SearchBudget::default(), Traversal::DepthFirst);
        assert!(decode(&encode(&key, &good), &other).is_err());
        assert!(decode("garbage", &key).is_err());
    }

    #[test]
    fn modes() {
        let dir = tempfile::tempdir().unwrap();
        let p = prog(STENCIL_PAIR);
        let b = SearchBudget::default();
        let cold = Engine::new(Some(Cache::new(dir.path())), CacheMode::Cold);
        for _ in 0..3 {
            assert_eq!(cold.solve(&p, "linear", "bohrium", b, Traversal::DepthFirst).unwrap().source, Source::Computed);
        }
        assert_eq!(cold.computations(), 3);
        assert_eq!(Cache::new(dir.path()).stats().unwrap().entries, 1);
        let none = Engine::new(Some(Cache::new(dir.path())), CacheMode::None);
        none.solve(&p, "greedy", "bohrium", b, Traversal::DepthFirst).unwrap();
        assert_eq!(Cache::new(dir.path()).stats().unwrap().entries, 1);
        assert_eq!("warm".parse::<CacheMode>().unwrap(), CacheMode::Warm);
        assert!("hot".parse::<CacheMode>().is_err());
    }
}
