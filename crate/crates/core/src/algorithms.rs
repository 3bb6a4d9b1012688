//! Partitioners: singleton, linear, greedy, unintrusive, branch-and-bound optimal and an
//! exhaustive oracle.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cost::CostModel;
use crate::graph::{acyclic_coarsening, is_legal_partition, Partition, WspGraph};
use crate::state::WspState;

pub const ALGORITHM_NAMES: [&str; 6] = ["singleton", "linear", "greedy", "unintrusive", "optimal", "bruteforce"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub merges: usize,
    pub nodes: u64,
    pub pruned: u64,
    pub elapsed: Duration,
    pub budget_exhausted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionResult {
    pub partition: Partition,
    pub cost: u64,
    pub proven_optimal: bool,
    pub stats: Stats,
    /// Block-id pairs merged from the all-singletons state, in order.
    pub merge_trace: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SearchBudget {
    pub max_nodes: Option<u64>,
    pub max_time: Option<Duration>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_nodes: Some(10_000_000), max_time: Some(Duration::from_secs(60)) }
    }
}

impl SearchBudget {
    pub fn unlimited() -> Self {
        SearchBudget { max_nodes: None, max_time: None }
    }

    pub fn nodes(n: u64) -> Self {
        SearchBudget { max_nodes: Some(n), max_time: None }
    }
}

impl fmt::Display for SearchBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.max_nodes.map_or("inf".to_string(), |n| n.to_string());
        let ms = self.max_time.map_or("inf".to_string(), |t| t.as_millis().to_string());
        write!(f, "nodes={};ms={}", nodes, ms)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Traversal {
    #[default]
    DepthFirst,
    BreadthFirst,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgoError {
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("brute force is limited to {limit} vertices, graph has {n}")]
    TooLarge { n: usize, limit: usize },
}

fn finish(
    g: &WspGraph,
    m: &dyn CostModel,
    partition: Partition,
    trace: Vec<(usize, usize)>,
    proven: bool,
    mut stats: Stats,
    t0: Instant,
) -> PartitionResult {
    debug_assert!(is_legal_partition(g, &partition));
    stats.merges = trace.len();
    stats.elapsed = t0.elapsed();
    PartitionResult { cost: m.evaluate(&partition), partition, proven_optimal: proven, stats, merge_trace: trace }
}

/// Runs an algorithm by name from the all-singletons state.
pub fn run(name: &str, g: &WspGraph, m: &dyn CostModel, budget: SearchBudget) -> Result<PartitionResult, AlgoError> {
    match name {
        "singleton" => Ok(singleton(g, m)),
        "linear" => Ok(linear(g, m)),
        "greedy" => Ok(greedy(WspState::singleton(g, m))),
        "unintrusive" => Ok(unintrusive_result(WspState::singleton(g, m))),
        "optimal" => Ok(optimal(WspState::singleton(g, m), budget)),
        "bruteforce" => brute_force(g, m, 12),
        other => Err(AlgoError::UnknownAlgorithm(other.to_string())),
    }
}

pub fn singleton(g: &WspGraph, m: &dyn CostModel) -> PartitionResult {
    let t0 = Instant::now();
    finish(g, m, Partition::singletons(g.len()), Vec::new(), g.len() <= 1, Stats::default(), t0)
}

/// One pass in vertex order: a vertex joins the current block unless that makes the
/// partition illegal.
pub fn linear(g: &WspGraph, m: &dyn CostModel) -> PartitionResult {
    let t0 = Instant::now();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    for j in 0..g.len() {
        let joins = !cur.is_empty() && cur.iter().all(|&i| !g.forbidden(i, j)) && !path_around(g, &cur, j);
        if joins {
            trace.push((cur[0], j));
            cur.push(j);
        } else {
            if !cur.is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
            cur.push(j);
        }
    }
    if !cur.is_empty() {
        blocks.push(cur);
    }
    finish(g, m, Partition::new(blocks), trace, g.len() <= 1, Stats::default(), t0)
}

/// A dependency path from `block` to `j` that leaves the block first.
fn path_around(g: &WspGraph, block: &[usize], j: usize) -> bool {
    let inside: BTreeSet<usize> = block.iter().copied().collect();
    let mut stack: Vec<usize> = block
        .iter()
        .flat_map(|&v| g.successors(v).iter().copied())
        .filter(|&y| !inside.contains(&y) && y < j)
        .collect();
    let mut seen = BTreeSet::new();
    while let Some(x) = stack.pop() {
        if !seen.insert(x) {
            continue;
        }
        for &y in g.successors(x) {
            if y == j {
                return true;
            }
            if y < j {
                stack.push(y);
            }
        }
    }
    false
}

/// Repeatedly merges the heaviest weight edge if legal, otherwise deletes it.
pub fn greedy(mut s: WspState<'_>) -> PartitionResult {
    let t0 = Instant::now();
    while let Some(((a, b), _)) = s.heaviest() {
        if s.legal_merge(a, b) {
            s.merge(a, b);
        } else {
            s.remove_weight(a, b);
        }
    }
    let (g, m) = (s.graph(), s.model());
    finish(g, m, s.partition(), s.trace().to_vec(), false, Stats::default(), t0)
}

/// Blocks reachable from `x` along directed dependency paths (forward or backward) that use
/// an edge whose endpoints are also forbid-joined, plus `x`'s forbid neighbours.
pub fn theta(s: &WspState<'_>, x: usize) -> BTreeSet<usize> {
    let mut out: BTreeSet<usize> = s.forbid_neighbors(x).clone();
    for forward in [true, false] {
        let mut seen: BTreeSet<(usize, bool)> = BTreeSet::new();
        let mut stack = vec![(x, false)];
        seen.insert((x, false));
        while let Some((u, flag)) = stack.pop() {
            let next = if forward { s.successors(u) } else { s.predecessors(u) };
            for &v in next {
                let f = flag || s.forbidden(u, v);
                if seen.insert((v, f)) {
                    stack.push((v, f));
                }
            }
        }
        out.extend(seen.into_iter().filter(|&(_, f)| f).map(|(u, _)| u));
    }
    out
}

/// Drops illegal weight edges, then returns the first weight edge with a pendant endpoint
/// (weight degree < 2) whose endpoints and merged block all have the same θ.
pub fn find_candidate(s: &mut WspState<'_>) -> Option<(usize, usize)> {
    let illegal: Vec<(usize, usize)> = s.weights().map(|(k, _)| k).filter(|&(a, b)| !s.legal_merge(a, b)).collect();
    for (a, b) in illegal {
        s.remove_weight(a, b);
    }
    let mut deg: std::collections::BTreeMap<usize, usize> = Default::default();
    for ((a, b), _) in s.weights() {
        *deg.entry(a).or_insert(0) += 1;
        *deg.entry(b).or_insert(0) += 1;
    }
    let edges: Vec<(usize, usize)> = s.weights().map(|(k, _)| k).collect();
    for (u, v) in edges {
        if deg[&u] >= 2 && deg[&v] >= 2 {
            continue;
        }
        let tu = theta(s, u);
        if tu != theta(s, v) {
            continue;
        }
        let mut trial = s.clone();
        let z = trial.merge_structure(u, v);
        if theta(&trial, z) == tu {
            return Some((u, v));
        }
    }
    None
}

/// Applies merges that cannot exclude an optimal partition.
pub fn unintrusive(mut s: WspState<'_>) -> WspState<'_> {
    while let Some((a, b)) = find_candidate(&mut s) {
        s.merge(a, b);
    }
    s
}

pub fn unintrusive_result(s: WspState<'_>) -> PartitionResult {
    let t0 = Instant::now();
    let s = unintrusive(s);
    let (g, m) = (s.graph(), s.model());
    finish(g, m, s.partition(), s.trace().to_vec(), false, Stats::default(), t0)
}

/// Merges, in order, every weight edge whose mask bit is set. The flag is false if any
/// merged pair was forbidden. Edges refer to block ids of `s`.
pub fn merge_by_mask<'a>(s: &WspState<'a>, edges: &[(usize, usize)], mask: &[bool]) -> (WspState<'a>, bool) {
    assert_eq!(edges.len(), mask.len());
    let mut t = s.clone();
    let mut ok = true;
    for (&(a, b), &bit) in edges.iter().zip(mask) {
        if !bit {
            continue;
        }
        let (x, y) = (t.owner(s.block(a)[0]), t.owner(s.block(b)[0]));
        if x == y {
            continue;
        }
        if t.forbidden(x, y) {
            ok = false;
        }
        t.merge_structure(x, y);
    }
    (t, ok)
}

fn forbid_free(g: &WspGraph, p: &Partition) -> bool {
    let of = p.block_of();
    g.forbid_edges().iter().all(|&(a, b)| of[a] != of[b])
}

/// Union of blocks along selected edges, then the least acyclic coarsening.
fn mask_partition(g: &WspGraph, base: &Partition, ids: &[usize], edges: &[(usize, usize)], mask: &[bool]) -> Partition {
    let k = base.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let idx = |id: usize| ids.binary_search(&id).expect("edge endpoint is a block id");
    for (&(a, b), &bit) in edges.iter().zip(mask) {
        if bit {
            let (ra, rb) = (find(&mut parent, idx(a)), find(&mut parent, idx(b)));
            parent[ra] = rb;
        }
    }
    let mut labels = vec![0; g.len()];
    for (i, blk) in base.blocks().iter().enumerate() {
        let r = find(&mut parent, i);
        for &v in blk {
            labels[v] = r;
        }
    }
    acyclic_coarsening(g, &Partition::from_labels(&labels))
}

/// Branch and bound over subsets of merge-candidate edges, depth first.
pub fn optimal(s: WspState<'_>, budget: SearchBudget) -> PartitionResult {
    optimal_with(s, budget, Traversal::DepthFirst)
}

/// The search starts from the unintrusive-preconditioned state, seeds the bound with
/// greedy, and walks the mask tree down from all-ones. Every candidate edge is undecided,
/// kept (its blocks end up together) or cleared (its blocks end up apart); a node stands
/// for the non-cleared edges closed under dependency cycles, which every partition in its
/// subtree refines. So a node whose cost, plus the least cost of cutting each block that
/// still joins a forbidden or cleared pair, reaches the incumbent is pruned with its
/// subtree. A node with no such pair becomes the incumbent. Otherwise the node branches on
/// one undecided edge, keep versus clear, chosen on a path that joins a violating pair
/// through as few undecided edges as possible. The two children cover disjoint sets of
/// partitions.
pub fn optimal_with(s: WspState<'_>, budget: SearchBudget, order: Traversal) -> PartitionResult {
    let t0 = Instant::now();
    let (g, m) = (s.graph(), s.model());
    let pre = unintrusive(s);
    let base = pre.partition();
    let fresh = WspState::from_partition(g, m, &base);
    let ids: Vec<usize> = fresh.ids().collect();
    let edges: Vec<(usize, usize)> = fresh
        .weights()
        .map(|(k, _)| k)
        .filter(|&e| forbid_free(g, &mask_partition(g, &base, &ids, &[e], &[true])))
        .collect();

    let seed = greedy(fresh.clone());
    let mut best = seed.partition;
    let mut best_cost = seed.cost;
    let mut stats = Stats::default();

    let of = base.block_of();
    let rep: Vec<usize> = base.blocks().iter().map(|b| b[0]).collect();
    let idx = |id: usize| ids.binary_search(&id).expect("edge endpoint is a block id");
    let ends: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (idx(a), idx(b))).collect();
    let n = edges.len();
    // Vertex pairs that must not share a block: forbid edges plus cleared edges.
    let apart = |dec: &[Decision]| -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = g.forbid_edges().to_vec();
        v.extend((0..n).filter(|&i| dec[i] == Decision::Clear).map(|i| (rep[ends[i].0], rep[ends[i].1])));
        v
    };
    let mut frontier: VecDeque<Vec<Decision>> = VecDeque::new();
    frontier.push_back(vec![Decision::Open; n]);
    while let Some(dec) = match order {
        Traversal::DepthFirst => frontier.pop_back(),
        Traversal::BreadthFirst => frontier.pop_front(),
    } {
        if budget.max_nodes.is_some_and(|cap| stats.nodes >= cap)
            || (stats.nodes % 256 == 0 && budget.max_time.is_some_and(|t| t0.elapsed() >= t))
        {
            stats.budget_exhausted = true;
            break;
        }
        stats.nodes += 1;
        let upper: Vec<bool> = dec.iter().map(|&d| d != Decision::Clear).collect();
        let p = mask_partition(g, &base, &ids, &edges, &upper);
        let c = m.evaluate(&p);
        if c >= best_cost {
            stats.pruned += 1;
            continue;
        }
        let pof = p.block_of();
        let pairs = apart(&dec);
        let violated: Vec<(usize, usize)> = pairs.iter().copied().filter(|&(x, y)| pof[x] == pof[y]).collect();
        if violated.is_empty() {
            best = p;
            best_cost = c;
            continue;
        }
        let kept: Vec<bool> = dec.iter().map(|&d| d == Decision::Keep).collect();
        let atoms = mask_partition(g, &base, &ids, &edges, &kept);
        let aof = atoms.block_of();
        if pairs.iter().any(|&(x, y)| aof[x] == aof[y]) {
            stats.pruned += 1;
            continue;
        }
        if c as i64 + split_bound(m, &p, &atoms, &violated) >= best_cost as i64 {
            stats.pruned += 1;
            continue;
        }
        let pick = violated
            .iter()
            .filter_map(|&(x, y)| open_path(base.len(), &ends, &dec, of[x], of[y]))
            .min_by_key(|(count, _)| *count)
            .map(|(_, e)| e)
            .or_else(|| {
                let (x, _) = violated[0];
                (0..n).find(|&i| {
                    dec[i] == Decision::Open && pof[rep[ends[i].0]] == pof[x] && pof[rep[ends[i].1]] == pof[x]
                })
            });
        let Some(e) = pick else {
            stats.pruned += 1;
            continue;
        };
        let mut keep = dec.clone();
        keep[e] = Decision::Keep;
        let mut clear = dec;
        clear[e] = Decision::Clear;
        match order {
            Traversal::DepthFirst => frontier.extend([clear, keep]),
            Traversal::BreadthFirst => frontier.extend([keep, clear]),
        }
    }
    let trace = legal_chain(&best);
    let proven = !stats.budget_exhausted;
    finish(g, m, best, trace, proven, stats, t0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Decision {
    Open,
    Keep,
    Clear,
}

/// Atom count above which a block's split cost is not enumerated (bounded by 0 instead).
const SPLIT_ATOMS: usize = 12;

/// Lower bound on the extra cost any partition between `atoms` (kept merges) and `p` must
/// pay to separate the `violated` pairs. Each block of `p` holding such a pair has to be
/// cut, and by monotonicity the cut costs at least the cheapest split into two unions of
/// atoms that separates one of its pairs.
fn split_bound(m: &dyn CostModel, p: &Partition, atoms: &Partition, violated: &[(usize, usize)]) -> i64 {
    let pof = p.block_of();
    let aof = atoms.block_of();
    let mut inside: Vec<Vec<usize>> = vec![Vec::new(); p.len()];
    for (a, blk) in atoms.blocks().iter().enumerate() {
        inside[pof[blk[0]]].push(a);
    }
    let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); p.len()];
    for &(x, y) in violated {
        pairs[pof[x]].push((aof[x], aof[y]));
    }
    let mut total = 0;
    for (b, ps) in pairs.iter().enumerate() {
        let list = &inside[b];
        if ps.is_empty() || list.len() > SPLIT_ATOMS {
            continue;
        }
        let whole = m.block_cost(&p.blocks()[b]);
        let k = list.len();
        let mut side = vec![false; atoms.len()];
        let mut best = i64::MAX;
        // The first atom stays on side one, so each split is seen once.
        for bits in 0..(1u64 << (k - 1)) {
            for (j, &a) in list.iter().enumerate() {
                side[a] = j > 0 && bits >> (j - 1) & 1 == 1;
            }
            if !ps.iter().any(|&(x, y)| side[x] != side[y]) {
                continue;
            }
            let (mut one, mut two) = (Vec::new(), Vec::new());
            for &a in list {
                let dst = if side[a] { &mut two } else { &mut one };
                dst.extend_from_slice(&atoms.blocks()[a]);
            }
            best = best.min(m.block_cost(&one) + m.block_cost(&two) - whole);
        }
        if best != i64::MAX {
            total += best.max(0);
        }
    }
    total
}

/// Over non-cleared edges, a path between base blocks `x` and `y` with the fewest open
/// edges. Returns that count and one open edge on the path, or `None` when no path exists
/// or it is made of kept edges only.
fn open_path(k: usize, ends: &[(usize, usize)], dec: &[Decision], x: usize, y: usize) -> Option<(usize, usize)> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for (i, &(a, b)) in ends.iter().enumerate() {
        if dec[i] != Decision::Clear {
            adj[a].push((b, i));
            adj[b].push((a, i));
        }
    }
    let mut dist = vec![usize::MAX; k];
    let mut via: Vec<Option<(usize, usize)>> = vec![None; k];
    dist[x] = 0;
    let mut queue = VecDeque::from([x]);
    while let Some(u) = queue.pop_front() {
        for &(w, e) in &adj[u] {
            let step = usize::from(dec[e] == Decision::Open);
            if dist[u] + step < dist[w] {
                dist[w] = dist[u] + step;
                via[w] = Some((u, e));
                if step == 0 {
                    queue.push_front(w);
                } else {
                    queue.push_back(w);
                }
            }
        }
    }
    if dist[y] == usize::MAX || dist[y] == 0 {
        return None;
    }
    let mut v = y;
    while let Some((prev, e)) = via[v] {
        if dec[e] == Decision::Open {
            return Some((dist[y], e));
        }
        v = prev;
    }
    None
}

/// Exhaustive search over set partitions. Vertices are placed in order and never next to a
/// forbid partner; acyclicity is checked on complete partitions.
pub fn brute_force(g: &WspGraph, m: &dyn CostModel, limit: usize) -> Result<PartitionResult, AlgoError> {
    let t0 = Instant::now();
    let n = g.len();
    if n > limit {
        return Err(AlgoError::TooLarge { n, limit });
    }
    let mut labels = vec![0usize; n];
    let mut best: Option<(u64, Partition)> = None;
    let mut nodes = 0u64;
    fn rec(
        g: &WspGraph,
        m: &dyn CostModel,
        v: usize,
        used: usize,
        labels: &mut Vec<usize>,
        best: &mut Option<(u64, Partition)>,
        nodes: &mut u64,
    ) {
        if v == g.len() {
            *nodes += 1;
            let p = Partition::from_labels(labels);
            if is_legal_partition(g, &p) {
                let c = m.evaluate(&p);
                if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                    *best = Some((c, p));
                }
            }
            return;
        }
        for k in 0..=used {
            if k < used && g.forbid_neighbors(v).iter().any(|&u| u < v && labels[u] == k) {
                continue;
            }
            labels[v] = k;
            rec(g, m, v + 1, used.max(k + 1), labels, best, nodes);
        }
    }
    rec(g, m, 0, 0, &mut labels, &mut best, &mut nodes);
    let (_, p) = best.expect("the all-singletons partition is always legal");
    let stats = Stats { nodes, ..Stats::default() };
    let trace = legal_chain(&p);
    Ok(finish(g, m, p, trace, true, stats, t0))
}

/// A merge sequence from the all-singletons state to `target`, each step legal when
/// `target` is legal: every block is grown from its smallest vertex in vertex order.
pub fn legal_chain(target: &Partition) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for b in target.blocks() {
        for &v in &b[1..] {
            out.push((b[0], v));
        }
    }
    out
}

/// Replays a merge trace from the all-singletons state, checking `legal_merge` at every
/// step. Returns the final state or the index of the first illegal step.
pub fn replay<'a>(g: &'a WspGraph, m: &'a dyn CostModel, trace: &[(usize, usize)]) -> Result<WspState<'a>, usize> {
    let mut s = WspState::singleton(g, m);
    for (i, &(a, b)) in trace.iter().enumerate() {
        let (x, y) = (s.owner(a), s.owner(b));
        if x != a || y != b || !s.legal_merge(x, y) {
            return Err(i);
        }
        s.merge_structure(x, y);
    }
    Ok(s)
}

/// Line-oriented dump: a header line, then one `merge A B` line per step.
pub fn format_trace(algorithm: &str, model: &str, r: &PartitionResult) -> String {
    let mut s = format!(
        "# algorithm={} model={} cost={} proven={} blocks={}\n",
        algorithm,
        model,
        r.cost,
        r.proven_optimal,
        r.partition.len()
    );
    for (a, b) in &r.merge_trace {
        s.push_str(&format!("merge {} {}\n", a, b));
    }
    s
}

pub fn parse_trace(text: &str) -> Result<Vec<(usize, usize)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["merge", a, b] => {
                let a = a.parse().map_err(|_| format!("line {}: bad block id", i + 1))?;
                let b = b.parse().map_err(|_| format!("line {}: bad block id", i + 1))?;
                out.push((a, b));
            }
            _ => return Err(format!("line {}: expected `merge A B`", i + 1)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{Bohrium, CutWeight, MaxContract};
    use crate::graph::{build_wsp, mwc_to_wsp, MwcInstance};
    use crate::ir::parse_program;
    use std::sync::Arc;

    fn stencil_pair() -> Arc<crate::ir::Program> {
        Arc::new(parse_program(include_str!("../tests/fixtures/stencil_pair.fp")).unwrap())
    }

    #[test]
    fn stencil_pair_costs() {
        let p = stencil_pair();
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        assert_eq!(singleton(&g, &m).cost, 94);
        let lin = linear(&g, &m);
        assert_eq!(lin.cost, 58);
        assert_eq!(lin.partition, Partition::new([vec![0, 1], vec![2, 3], (4..=8).collect(), (9..=16).collect()]));
        assert_eq!(greedy(WspState::singleton(&g, &m)).cost, 38);
        assert_eq!(unintrusive_result(WspState::singleton(&g, &m)).cost, 58);
        let opt = optimal(WspState::singleton(&g, &m), SearchBudget::default());
        assert_eq!(opt.cost, 34);
        assert!(opt.proven_optimal);
        for r in [lin, opt] {
            assert!(replay(&g, &m, &r.merge_trace).is_ok());
        }
    }

    #[test]
    fn empty_program() {
        let p = Arc::new(parse_program("").unwrap());
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        for name in ALGORITHM_NAMES {
            let r = run(name, &g, &m, SearchBudget::default()).unwrap();
            assert_eq!(r.cost, 0);
            assert!(r.partition.is_empty());
        }
    }

    #[test]
    fn linear_runs() {
        let p = Arc::new(parse_program("array A 4 u8\narray B 4 u8\narray C 5 u8\narray D 5 u8\nCOPY A, 0\nCOPY B, 0\nCOPY C, 0\nCOPY D, 0\nCOPY A, 1").unwrap());
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let r = linear(&g, &m);
        assert_eq!(r.partition, Partition::new([vec![0, 1], vec![2, 3], vec![4]]));
    }

    #[test]
    fn greedy_tie_break_is_deterministic() {
        // Two readers of X compete for the same partner with equal weight.
        let p = Arc::new(
            parse_program("array X 4 u8\narray A 4 u8\narray B 4 u8\nCOPY X, 0\nCOPY A, X\nCOPY B, X").unwrap(),
        );
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let a = greedy(WspState::singleton(&g, &m));
        let b = greedy(WspState::singleton(&g, &m));
        assert_eq!(a.merge_trace, b.merge_trace);
        assert_eq!(a.merge_trace[0], (0, 1));
    }

    #[test]
    fn no_weights_means_identity() {
        let p = Arc::new(parse_program("array A 4 u8\narray B 5 u8\nCOPY A, 0\nCOPY B, 0").unwrap());
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let s = WspState::singleton(&g, &m);
        assert_eq!(s.weight_count(), 0);
        assert_eq!(greedy(s.clone()).partition, Partition::singletons(2));
        let mut t = s.clone();
        assert_eq!(find_candidate(&mut t), None);
        let o = optimal(s, SearchBudget::default());
        assert!(o.proven_optimal);
        assert_eq!(o.partition, Partition::singletons(2));
    }

    #[test]
    fn pendant_pair_is_merged() {
        let p = Arc::new(parse_program("array T 4 u8\narray A 4 u8\nCOPY T, 1\nADD A, T, T\nDEL T").unwrap());
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let mut s = WspState::singleton(&g, &m);
        assert!(find_candidate(&mut s).is_some());
        let u = unintrusive(s);
        assert!(u.block_count() < 3);
    }

    #[test]
    fn theta_mismatch_skips_pair() {
        // 0 is forbid-joined with 2 (partial overlap on X), 1 is not.
        let p = Arc::new(
            parse_program("array X 5 u8\narray Y 4 u8\nCOPY X[0:4], 0\nCOPY Y, X[0:4]\nCOPY Y, X[1:5]").unwrap(),
        );
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let s = WspState::singleton(&g, &m);
        assert!(s.weight(0, 1).is_some() && s.legal_merge(0, 1));
        assert_eq!(theta(&s, 0), BTreeSet::from([2]));
        assert!(theta(&s, 1).is_empty());
        let mut t = s.clone();
        assert_eq!(find_candidate(&mut t), None);
    }

    #[test]
    fn mask_merges() {
        let p = Arc::new(
            parse_program("array A 4 u8\narray B 4 u8\narray C 5 u8\nCOPY A, 0\nCOPY B, A\nCOPY C, 0").unwrap(),
        );
        let g = build_wsp(&p);
        let m = MaxContract::new(p.clone());
        let s = WspState::singleton(&g, &m);
        let edges = [(0, 1), (1, 2)];
        let (t, ok) = merge_by_mask(&s, &edges, &[false, false]);
        assert!(ok);
        assert_eq!(t.partition(), Partition::singletons(3));
        let (t, ok) = merge_by_mask(&s, &edges[..1], &[true]);
        assert!(ok);
        assert_eq!(t.block_count(), 2);
        let (t, ok) = merge_by_mask(&s, &edges, &[true, true]);
        assert!(!ok);
        assert!(t.is_poisoned());
    }

    #[test]
    fn brute_force_limits() {
        let p = Arc::new(parse_program("array A 4 u8\nCOPY A, 0").unwrap());
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let r = brute_force(&g, &m, 12).unwrap();
        assert_eq!(r.partition, Partition::singletons(1));
        let big = WspGraph::from_edges(13, [], []);
        assert_eq!(brute_force(&big, &m, 12).unwrap_err(), AlgoError::TooLarge { n: 13, limit: 12 });
    }

    #[test]
    fn stencil_pair_prefix_matches_brute_force() {
        let text: String = include_str!("../tests/fixtures/stencil_pair.fp")
            .lines()
            .filter(|l| {
                !l.starts_with("MAX") && !l.starts_with("MIN") && !l.starts_with("DEL") && !l.starts_with("SYNC")
            })
            .map(|l| format!("{}\n", l))
            .collect();
        let p = Arc::new(parse_program(&text).unwrap());
        assert_eq!(p.len(), 9);
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let o = optimal(WspState::singleton(&g, &m), SearchBudget::default());
        assert_eq!(o.cost, brute_force(&g, &m, 12).unwrap().cost);
    }

    #[test]
    fn mwc_triangle() {
        let inst = MwcInstance { n: 3, edges: vec![(0, 1, 1), (1, 2, 1), (0, 2, 1)], terminals: vec![0, 1, 2] };
        let g = mwc_to_wsp(&inst);
        let c = CutWeight::new(&inst);
        // All three vertices are terminals, so every edge is cut.
        assert_eq!(brute_force(&g, &c, 12).unwrap().cost, 3);
        let star = MwcInstance { n: 4, edges: vec![(3, 0, 5), (3, 1, 1), (3, 2, 1)], terminals: vec![0, 1, 2] };
        let g = mwc_to_wsp(&star);
        let c = CutWeight::new(&star);
        assert_eq!(brute_force(&g, &c, 12).unwrap().cost, 2);
        let iso = MwcInstance { n: 3, edges: vec![], terminals: vec![0, 1, 2] };
        let g = mwc_to_wsp(&iso);
        let c = CutWeight::new(&iso);
        assert_eq!(brute_force(&g, &c, 12).unwrap().cost, 0);
    }

    #[test]
    fn trace_roundtrip() {
        let p = stencil_pair();
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let r = greedy(WspState::singleton(&g, &m));
        let text = format_trace("greedy", "bohrium", &r);
        let t = parse_trace(&text).unwrap();
        assert_eq!(t, r.merge_trace);
        let s = replay(&g, &m, &t).unwrap();
        assert_eq!(s.partition(), r.partition);
    }
}
