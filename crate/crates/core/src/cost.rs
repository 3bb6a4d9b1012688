//! Monotone partition cost models.
//!
//! Every model here has the form `constant + Σ_B block_cost(B)`, so the saving of a merge
//! only depends on the two blocks involved.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::graph::{MwcInstance, Partition};
use crate::ir::{ArrayView, Program};

pub trait CostModel: Send + Sync {
    fn name(&self) -> &str;

    fn constant(&self) -> i64;

    /// Contribution of one block; may be negative.
    fn block_cost(&self, block: &[usize]) -> i64;

    fn evaluate(&self, p: &Partition) -> u64 {
        let c = self.constant() + p.blocks().iter().map(|b| self.block_cost(b)).sum::<i64>();
        debug_assert!(c >= 0, "{} produced a negative cost", self.name());
        c.max(0) as u64
    }

    /// cost(P) − cost(P with `a` and `b` united).
    fn saving(&self, a: &[usize], b: &[usize]) -> i64 {
        let mut u = a.to_vec();
        u.extend_from_slice(b);
        self.block_cost(a) + self.block_cost(b) - self.block_cost(&u)
    }

    /// True if the saving is zero for blocks that share no base array.
    fn base_local(&self) -> bool {
        false
    }
}

pub const MODEL_NAMES: [&str; 4] = ["bohrium", "max-contract", "max-locality", "robinson"];

pub fn model_by_name(name: &str, p: &Arc<Program>) -> Option<Box<dyn CostModel>> {
    Some(match name {
        "bohrium" => Box::new(Bohrium::new(p.clone())),
        "max-contract" => Box::new(MaxContract::new(p.clone())),
        "max-locality" => Box::new(MaxLocality::new(p.clone())),
        "robinson" => Box::new(Robinson::new(p.clone())),
        _ => return None,
    })
}

/// Bytes of external accesses summed over blocks.
pub struct Bohrium {
    p: Arc<Program>,
}

impl Bohrium {
    pub fn new(p: Arc<Program>) -> Self {
        Bohrium { p }
    }
}

struct Gathered<'a> {
    reads: BTreeSet<&'a ArrayView>,
    writes: BTreeSet<&'a ArrayView>,
    news: BTreeSet<usize>,
    dels: BTreeSet<usize>,
}

fn gather<'a>(p: &'a Program, block: &[usize]) -> Gathered<'a> {
    let mut g =
        Gathered { reads: BTreeSet::new(), writes: BTreeSet::new(), news: BTreeSet::new(), dels: BTreeSet::new() };
    for &f in block {
        let a = p.access(f);
        g.reads.extend(a.reads.iter());
        g.writes.extend(a.writes.iter());
        g.news.extend(a.news.iter().copied());
        g.dels.extend(a.dels.iter().copied());
    }
    g
}

impl Gathered<'_> {
    fn ext_bytes(&self, p: &Program) -> u64 {
        let r: u64 = self.reads.iter().filter(|v| !self.news.contains(&v.base)).map(|v| p.view_bytes(v)).sum();
        let w: u64 = self.writes.iter().filter(|v| !self.dels.contains(&v.base)).map(|v| p.view_bytes(v)).sum();
        r + w
    }
}

/// Closed-form merge saving of two disjoint blocks:
/// |ext₁ ∩ ext₂| + |new₁ ∩ in₂| + |out₁ ∩ del₂| + |new₂ ∩ in₁| + |out₂ ∩ del₁|,
/// with ext ∩ ext taken separately over reads and writes. When `b1` runs before `b2` the
/// last two terms are zero.
pub fn bohrium_saving(p: &Program, b1: &[usize], b2: &[usize]) -> u64 {
    let (x, y) = (gather(p, b1), gather(p, b2));
    let bytes = |v: &&ArrayView| p.view_bytes(v);
    let ext_r = |g: &Gathered, v: &ArrayView| !g.news.contains(&v.base) && g.reads.contains(v);
    let ext_w = |g: &Gathered, v: &ArrayView| !g.dels.contains(&v.base) && g.writes.contains(v);
    let shared_r: u64 = x.reads.iter().filter(|v| ext_r(&x, v) && ext_r(&y, v)).map(bytes).sum();
    let shared_w: u64 = x.writes.iter().filter(|v| ext_w(&x, v) && ext_w(&y, v)).map(bytes).sum();
    let new_in =
        |n: &Gathered, r: &Gathered| -> u64 { r.reads.iter().filter(|v| n.news.contains(&v.base)).map(bytes).sum() };
    let out_del =
        |w: &Gathered, d: &Gathered| -> u64 { w.writes.iter().filter(|v| d.dels.contains(&v.base)).map(bytes).sum() };
    shared_r + shared_w + new_in(&x, &y) + out_del(&x, &y) + new_in(&y, &x) + out_del(&y, &x)
}

impl CostModel for Bohrium {
    fn name(&self) -> &str {
        "bohrium"
    }

    fn constant(&self) -> i64 {
        0
    }

    fn block_cost(&self, block: &[usize]) -> i64 {
        gather(&self.p, block).ext_bytes(&self.p) as i64
    }

    fn saving(&self, a: &[usize], b: &[usize]) -> i64 {
        bohrium_saving(&self.p, a, b) as i64
    }

    fn base_local(&self) -> bool {
        true
    }
}

/// Bases allocated minus bases both created and deleted inside one block.
pub struct MaxContract {
    p: Arc<Program>,
    nbases: i64,
}

impl MaxContract {
    pub fn new(p: Arc<Program>) -> Self {
        let nbases = p.used_bases().len() as i64;
        MaxContract { p, nbases }
    }
}

impl CostModel for MaxContract {
    fn name(&self) -> &str {
        "max-contract"
    }

    fn constant(&self) -> i64 {
        self.nbases
    }

    fn block_cost(&self, block: &[usize]) -> i64 {
        let g = gather(&self.p, block);
        -(g.news.intersection(&g.dels).count() as i64)
    }

    fn base_local(&self) -> bool {
        true
    }
}

/// Number of identical-view accesses shared by instructions in different blocks, each
/// unordered pair counted once. A view accessed m and m' times by the two instructions
/// (read and write count separately) contributes m·m'.
pub struct MaxLocality {
    /// (view id, multiplicity) per instruction.
    uses: Vec<Vec<(usize, i64)>>,
    total: i64,
}

impl MaxLocality {
    pub fn new(p: Arc<Program>) -> Self {
        let mut ids: BTreeMap<&ArrayView, usize> = BTreeMap::new();
        let mut uses = Vec::with_capacity(p.len());
        for f in 0..p.len() {
            let a = p.access(f);
            let mut m: BTreeMap<usize, i64> = BTreeMap::new();
            for v in a.reads.iter().chain(a.writes.iter()) {
                let n = ids.len();
                let id = *ids.entry(v).or_insert(n);
                *m.entry(id).or_insert(0) += 1;
            }
            uses.push(m.into_iter().collect());
        }
        let mut ml = MaxLocality { uses, total: 0 };
        let all: Vec<usize> = (0..p.len()).collect();
        ml.total = ml.within(&all);
        ml
    }

    /// Pair weight summed over unordered pairs inside `block`.
    pub fn within(&self, block: &[usize]) -> i64 {
        let mut acc: HashMap<usize, (i64, i64)> = HashMap::new();
        for &f in block {
            for &(v, m) in &self.uses[f] {
                let e = acc.entry(v).or_insert((0, 0));
                e.0 += m;
                e.1 += m * m;
            }
        }
        acc.values().map(|&(s, q)| (s * s - q) / 2).sum()
    }

    pub fn pair_weight(&self, f: usize, g: usize) -> i64 {
        self.within(&[f, g])
    }
}

impl CostModel for MaxLocality {
    fn name(&self) -> &str {
        "max-locality"
    }

    fn constant(&self) -> i64 {
        self.total
    }

    fn block_cost(&self, block: &[usize]) -> i64 {
        -self.within(block)
    }

    fn base_local(&self) -> bool {
        true
    }
}

/// |P| + N·MaxContract + N²·MaxLocality with N = max(distinct views, instructions, bases + 1),
/// large enough that any drop in the locality term outweighs the other two.
pub struct Robinson {
    mc: MaxContract,
    ml: MaxLocality,
    n: i64,
}

impl Robinson {
    pub fn new(p: Arc<Program>) -> Self {
        let views = p.distinct_views().len() as i64;
        let n = views.max(p.len() as i64).max(p.used_bases().len() as i64 + 1);
        Robinson { mc: MaxContract::new(p.clone()), ml: MaxLocality::new(p), n }
    }

    pub fn factor(&self) -> i64 {
        self.n
    }
}

impl CostModel for Robinson {
    fn name(&self) -> &str {
        "robinson"
    }

    fn constant(&self) -> i64 {
        self.n * self.mc.constant() + self.n * self.n * self.ml.constant()
    }

    fn block_cost(&self, block: &[usize]) -> i64 {
        1 + self.n * self.mc.block_cost(block) + self.n * self.n * self.ml.block_cost(block)
    }
}

/// Total weight of edges whose endpoints lie in different blocks.
pub struct CutWeight {
    adj: Vec<Vec<(usize, i64)>>,
    total: i64,
}

impl CutWeight {
    pub fn new(m: &MwcInstance) -> Self {
        let mut adj = vec![Vec::new(); m.n];
        let mut total = 0;
        for &(a, b, w) in &m.edges {
            adj[a].push((b, w as i64));
            adj[b].push((a, w as i64));
            total += w as i64;
        }
        CutWeight { adj, total }
    }
}

impl CostModel for CutWeight {
    fn name(&self) -> &str {
        "cut-weight"
    }

    fn constant(&self) -> i64 {
        self.total
    }

    fn block_cost(&self, block: &[usize]) -> i64 {
        let inside: BTreeSet<usize> = block.iter().copied().collect();
        let internal: i64 =
            block.iter().flat_map(|&v| self.adj[v].iter().filter(|e| inside.contains(&e.0)).map(|e| e.1)).sum();
        -(internal / 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn prog(src: &str) -> Arc<Program> {
        Arc::new(parse_program(src).unwrap())
    }

    fn stencil_pair() -> Arc<Program> {
        prog(include_str!("../tests/fixtures/stencil_pair.fp"))
    }

    #[test]
    fn stencil_pair_singleton_costs() {
        let p = stencil_pair();
        let bot = Partition::singletons(p.len());
        assert_eq!(Bohrium::new(p.clone()).evaluate(&bot), 94);
        assert_eq!(MaxContract::new(p.clone()).evaluate(&bot), 5);
        let ml = MaxLocality::new(p.clone()).evaluate(&bot);
        let r = Robinson::new(p.clone());
        let n = r.factor() as u64;
        assert_eq!(r.evaluate(&bot), 17 + n * 5 + n * n * ml);
    }

    #[test]
    fn saving_examples() {
        let p = prog("array T 10 u8\narray A 10 u8\nCOPY T, 1\nADD A, T, T");
        assert_eq!(bohrium_saving(&p, &[0], &[1]), 10);
        let b = Bohrium::new(p.clone());
        assert_eq!(b.block_cost(&[0]) + b.block_cost(&[1]) - b.block_cost(&[0, 1]), 10);

        let f = stencil_pair();
        assert_eq!(bohrium_saving(&f, &[8], &[9]), 4);

        let q = prog("array T 4 u8\narray A 4 u8\nCOPY T, 1\nSYNC T\nCOPY T, 2\nCOPY A, T");
        assert_eq!(bohrium_saving(&q, &[2], &[3]), 0);
    }

    #[test]
    fn max_contract_examples() {
        let p = prog("array T 4 u8\narray A 4 u8\nCOPY T, 1\nADD A, T, T\nDEL T");
        let mc = MaxContract::new(p.clone());
        assert_eq!(mc.evaluate(&Partition::singletons(3)), 2);
        assert_eq!(mc.evaluate(&Partition::new([vec![0, 1, 2]])), 1);
        let q = prog("array T 4 u8\narray A 4 u8\nCOPY T, 1\nADD A, T, T");
        let mc = MaxContract::new(q);
        assert_eq!(mc.evaluate(&Partition::singletons(2)), 2);
        assert_eq!(mc.evaluate(&Partition::new([vec![0, 1]])), 2);
    }

    #[test]
    fn max_locality_pairs() {
        let p = prog("array X 4 u8\narray A 4 u8\narray B 4 u8\narray C 4 u8\narray D 4 u8\nCOPY X, 0\nCOPY A, X\nCOPY B, X\nCOPY C, X\nCOPY D, X");
        let ml = MaxLocality::new(p);
        let split = Partition::new([vec![0], vec![1], vec![2], vec![3], vec![4]]);
        let fused = Partition::new([vec![0], vec![1, 2, 3, 4]]);
        assert_eq!(ml.evaluate(&split) - ml.evaluate(&fused), 6);
        // Readers split {1}{2,3}: pairs (1,2),(1,3), plus the writer's pair with each reader.
        let only3 =
            prog("array X 4 u8\narray A 4 u8\narray B 4 u8\narray C 4 u8\nCOPY X, 0\nCOPY A, X\nCOPY B, X\nCOPY C, X");
        let ml3 = MaxLocality::new(only3);
        assert_eq!(ml3.evaluate(&Partition::new([vec![0], vec![1], vec![2, 3]])), 2 + 3);
        let disjoint = prog("array A 4 u8\narray B 4 u8\nCOPY A, 0\nCOPY B, 0");
        assert_eq!(MaxLocality::new(disjoint).evaluate(&Partition::singletons(2)), 0);
    }

    #[test]
    fn robinson_bounds() {
        let p = stencil_pair();
        let r = Robinson::new(p.clone());
        let bot = Partition::singletons(p.len());
        assert!(r.evaluate(&bot) >= bot.len() as u64);
    }

    #[test]
    fn cut_weight_extremes() {
        let m = MwcInstance { n: 4, edges: vec![(0, 1, 3), (1, 2, 2), (2, 3, 5)], terminals: vec![0, 2, 3] };
        let c = CutWeight::new(&m);
        assert_eq!(c.evaluate(&Partition::singletons(4)), 10);
        assert_eq!(c.evaluate(&Partition::new([vec![0, 1, 2, 3]])), 0);
        assert_eq!(c.evaluate(&Partition::new([vec![0, 1], vec![2], vec![3]])), 7);
    }
}
