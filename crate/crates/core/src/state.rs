//! Partition graphs: blocks with contracted dependency/forbid edges and merge-saving weights.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::cost::CostModel;
use crate::graph::{Partition, WspGraph};

/// A WSP state. Blocks are identified by their smallest vertex.
#[derive(Clone)]
pub struct WspState<'a> {
    g: &'a WspGraph,
    model: &'a dyn CostModel,
    blocks: BTreeMap<usize, Vec<usize>>,
    owner: Vec<usize>,
    succ: BTreeMap<usize, BTreeSet<usize>>,
    pred: BTreeMap<usize, BTreeSet<usize>>,
    forbid: BTreeMap<usize, BTreeSet<usize>>,
    poisoned: bool,
    weights: BTreeMap<(usize, usize), i64>,
    by_weight: BTreeSet<(Reverse<i64>, usize, usize)>,
    block_cost: BTreeMap<usize, i64>,
    cost: i64,
    /// Blocks touching each base, when the model's savings are base-local.
    base_blocks: Option<HashMap<usize, BTreeSet<usize>>>,
    vertex_bases: Vec<Vec<usize>>,
    trace: Vec<(usize, usize)>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl<'a> WspState<'a> {
    /// The all-singletons state with every positive-saving, non-forbidden weight edge.
    pub fn singleton(g: &'a WspGraph, model: &'a dyn CostModel) -> Self {
        Self::from_partition(g, model, &Partition::singletons(g.len()))
    }

    pub fn from_partition(g: &'a WspGraph, model: &'a dyn CostModel, p: &Partition) -> Self {
        assert!(p.is_valid_for(g.len()), "not a partition of the graph's vertices");
        let vertex_bases: Vec<Vec<usize>> = match g.program() {
            Some(prog) if model.base_local() => {
                (0..g.len()).map(|v| prog.instructions()[v].bases().into_iter().collect()).collect()
            }
            _ => vec![Vec::new(); g.len()],
        };
        let mut s = WspState {
            g,
            model,
            blocks: BTreeMap::new(),
            owner: vec![0; g.len()],
            succ: BTreeMap::new(),
            pred: BTreeMap::new(),
            forbid: BTreeMap::new(),
            poisoned: false,
            weights: BTreeMap::new(),
            by_weight: BTreeSet::new(),
            block_cost: BTreeMap::new(),
            cost: model.constant(),
            base_blocks: None,
            vertex_bases,
            trace: Vec::new(),
        };
        for b in p.blocks() {
            let id = b[0];
            for &v in b {
                s.owner[v] = id;
            }
            s.blocks.insert(id, b.clone());
            s.succ.insert(id, BTreeSet::new());
            s.pred.insert(id, BTreeSet::new());
            s.forbid.insert(id, BTreeSet::new());
            let c = model.block_cost(b);
            s.block_cost.insert(id, c);
            s.cost += c;
        }
        for &(a, b) in g.dep_edges() {
            let (x, y) = (s.owner[a], s.owner[b]);
            if x != y {
                s.succ.get_mut(&x).unwrap().insert(y);
                s.pred.get_mut(&y).unwrap().insert(x);
            }
        }
        for &(a, b) in g.forbid_edges() {
            let (x, y) = (s.owner[a], s.owner[b]);
            if x == y {
                s.poisoned = true;
            } else {
                s.forbid.get_mut(&x).unwrap().insert(y);
                s.forbid.get_mut(&y).unwrap().insert(x);
            }
        }
        if model.base_local() && g.program().is_some() {
            let mut idx: HashMap<usize, BTreeSet<usize>> = HashMap::new();
            for v in 0..g.len() {
                for &b in &s.vertex_bases[v] {
                    idx.entry(b).or_default().insert(s.owner[v]);
                }
            }
            s.base_blocks = Some(idx);
        }
        let ids: Vec<usize> = s.blocks.keys().copied().collect();
        for &x in &ids {
            for y in s.partners(x) {
                if y > x {
                    s.refresh_weight(x, y);
                }
            }
        }
        s
    }

    pub fn graph(&self) -> &'a WspGraph {
        self.g
    }

    pub fn model(&self) -> &'a dyn CostModel {
        self.model
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.keys().copied()
    }

    pub fn block(&self, id: usize) -> &[usize] {
        &self.blocks[&id]
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Id of the block containing vertex `v`.
    pub fn owner(&self, v: usize) -> usize {
        self.owner[v]
    }

    pub fn partition(&self) -> Partition {
        Partition::new(self.blocks.values().cloned())
    }

    pub fn cost(&self) -> u64 {
        self.cost.max(0) as u64
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn trace(&self) -> &[(usize, usize)] {
        &self.trace
    }

    pub fn successors(&self, id: usize) -> &BTreeSet<usize> {
        &self.succ[&id]
    }

    pub fn predecessors(&self, id: usize) -> &BTreeSet<usize> {
        &self.pred[&id]
    }

    pub fn forbid_neighbors(&self, id: usize) -> &BTreeSet<usize> {
        &self.forbid[&id]
    }

    pub fn forbidden(&self, a: usize, b: usize) -> bool {
        self.forbid[&a].contains(&b)
    }

    /// Block-level dependency edges, sorted.
    pub fn dep_hat(&self) -> Vec<(usize, usize)> {
        self.succ.iter().flat_map(|(&a, s)| s.iter().map(move |&b| (a, b))).collect()
    }

    /// Block-level forbid edges with the smaller id first, sorted.
    pub fn forbid_hat(&self) -> Vec<(usize, usize)> {
        self.forbid.iter().flat_map(|(&a, s)| s.iter().filter(move |&&b| b > a).map(move |&b| (a, b))).collect()
    }

    /// Weight edges as ((a, b), w) with a < b, in key order.
    pub fn weights(&self) -> impl Iterator<Item = ((usize, usize), i64)> + '_ {
        self.weights.iter().map(|(&k, &w)| (k, w))
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<i64> {
        self.weights.get(&key(a, b)).copied()
    }

    /// Heaviest weight edge; ties go to the smallest (a, b).
    pub fn heaviest(&self) -> Option<((usize, usize), i64)> {
        self.by_weight.first().map(|&(Reverse(w), a, b)| ((a, b), w))
    }

    pub fn remove_weight(&mut self, a: usize, b: usize) {
        if let Some(w) = self.weights.remove(&key(a, b)) {
            let (x, y) = key(a, b);
            self.by_weight.remove(&(Reverse(w), x, y));
        }
    }

    fn set_weight(&mut self, a: usize, b: usize, w: i64) {
        self.remove_weight(a, b);
        if w > 0 {
            let (x, y) = key(a, b);
            self.weights.insert((x, y), w);
            self.by_weight.insert((Reverse(w), x, y));
        }
    }

    fn refresh_weight(&mut self, a: usize, b: usize) {
        if self.forbidden(a, b) {
            self.remove_weight(a, b);
            return;
        }
        let w = self.model.saving(&self.blocks[&a], &self.blocks[&b]);
        self.set_weight(a, b, w);
    }

    /// Blocks whose merge with `x` can have nonzero saving.
    fn partners(&self, x: usize) -> Vec<usize> {
        match &self.base_blocks {
            Some(idx) => {
                let mut out = BTreeSet::new();
                for &v in &self.blocks[&x] {
                    for b in &self.vertex_bases[v] {
                        out.extend(idx[b].iter().copied());
                    }
                }
                out.remove(&x);
                out.into_iter().collect()
            }
            None => self.blocks.keys().copied().filter(|&y| y != x).collect(),
        }
    }

    /// Saving of merging `a` and `b` evaluated from scratch on the partition.
    pub fn saving_from_scratch(&self, a: usize, b: usize) -> i64 {
        let before = self.model.evaluate(&self.partition()) as i64;
        let p = self.partition();
        let (ia, ib) =
            (p.blocks().iter().position(|x| x[0] == a).unwrap(), p.blocks().iter().position(|x| x[0] == b).unwrap());
        before - self.model.evaluate(&p.merged(ia, ib)) as i64
    }

    /// A directed path of at least two edges from `a` to `b`.
    pub fn long_path(&self, a: usize, b: usize) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.succ[&a].iter().copied().filter(|&m| m != b).collect();
        while let Some(x) = stack.pop() {
            if !seen.insert(x) {
                continue;
            }
            for &y in &self.succ[&x] {
                if y == b {
                    return true;
                }
                if !seen.contains(&y) {
                    stack.push(y);
                }
            }
        }
        false
    }

    /// Merging `a` and `b` keeps a legal partition legal: no forbid edge between them and
    /// no dependency path of length ≥ 2 in either direction.
    pub fn legal_merge(&self, a: usize, b: usize) -> bool {
        a != b && !self.forbidden(a, b) && !self.long_path(a, b) && !self.long_path(b, a)
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<usize, usize> = self.blocks.keys().map(|&k| (k, self.pred[&k].len())).collect();
        let mut stack: Vec<usize> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
        let mut done = 0;
        while let Some(x) = stack.pop() {
            done += 1;
            for &t in &self.succ[&x] {
                let d = indeg.get_mut(&t).unwrap();
                *d -= 1;
                if *d == 0 {
                    stack.push(t);
                }
            }
        }
        done == self.blocks.len()
    }

    pub fn is_legal(&self) -> bool {
        !self.poisoned && self.is_acyclic()
    }

    /// Contracts blocks `a` and `b` (legality is not checked) and returns the new id.
    /// Weights incident to the merged block are recomputed.
    pub fn merge(&mut self, a: usize, b: usize) -> usize {
        self.contract(a, b, true)
    }

    /// Like `merge` but leaves the weight map untouched except for dropping edges
    /// incident to the two blocks. Used for speculative structure queries.
    pub fn merge_structure(&mut self, a: usize, b: usize) -> usize {
        self.contract(a, b, false)
    }

    pub fn merged(&self, a: usize, b: usize) -> WspState<'a> {
        let mut s = self.clone();
        s.merge(a, b);
        s
    }

    fn contract(&mut self, a: usize, b: usize, reweigh: bool) -> usize {
        assert!(a != b, "cannot merge a block with itself");
        let (z, o) = (a.min(b), a.max(b));
        self.trace.push((z, o));
        if self.forbid[&z].contains(&o) {
            self.poisoned = true;
        }
        let moved = self.blocks.remove(&o).expect("unknown block");
        for &v in &moved {
            self.owner[v] = z;
        }
        let members = self.blocks.get_mut(&z).expect("unknown block");
        members.extend(moved);
        members.sort_unstable();

        for t in self.succ.remove(&o).unwrap() {
            self.pred.get_mut(&t).unwrap().remove(&o);
            if t != z {
                self.succ.get_mut(&z).unwrap().insert(t);
                self.pred.get_mut(&t).unwrap().insert(z);
            }
        }
        for s in self.pred.remove(&o).unwrap() {
            self.succ.get_mut(&s).unwrap().remove(&o);
            if s != z {
                self.pred.get_mut(&z).unwrap().insert(s);
                self.succ.get_mut(&s).unwrap().insert(z);
            }
        }
        self.succ.get_mut(&z).unwrap().remove(&z);
        self.pred.get_mut(&z).unwrap().remove(&z);
        for t in self.forbid.remove(&o).unwrap() {
            let f = self.forbid.get_mut(&t).unwrap();
            f.remove(&o);
            if t != z {
                f.insert(z);
                self.forbid.get_mut(&z).unwrap().insert(t);
            }
        }
        self.forbid.get_mut(&z).unwrap().remove(&z);

        if let Some(idx) = &mut self.base_blocks {
            let mut bases: BTreeSet<usize> = BTreeSet::new();
            for &v in &self.blocks[&z] {
                bases.extend(self.vertex_bases[v].iter().copied());
            }
            for b in bases {
                let e = idx.get_mut(&b).unwrap();
                e.remove(&o);
                e.insert(z);
            }
        }

        let old = self.block_cost.remove(&o).unwrap() + self.block_cost[&z];
        let new = self.model.block_cost(&self.blocks[&z]);
        self.block_cost.insert(z, new);
        self.cost += new - old;

        let stale: Vec<(usize, usize)> =
            self.weights.keys().filter(|&&(x, y)| x == z || x == o || y == z || y == o).copied().collect();
        for (x, y) in stale {
            self.remove_weight(x, y);
        }
        if reweigh {
            for y in self.partners(z) {
                self.refresh_weight(z, y);
            }
        }
        z
    }
}
