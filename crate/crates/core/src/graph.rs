//! WSP graphs, partitions and partition legality.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::ir::{views_overlap, Instruction, Program};

/// Vertices are `0..n`. Dependency edges point from the earlier to the later vertex.
#[derive(Clone, Debug)]
pub struct WspGraph {
    n: usize,
    dep_edges: Vec<(usize, usize)>,
    forbid_edges: Vec<(usize, usize)>,
    succ: Vec<Vec<usize>>,
    forbid: Vec<BTreeSet<usize>>,
    program: Option<Arc<Program>>,
}

impl WspGraph {
    /// Builds from explicit edges. Forbid pairs are stored with the smaller vertex first.
    pub fn from_edges(
        n: usize,
        dep_edges: impl IntoIterator<Item = (usize, usize)>,
        forbid_edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> WspGraph {
        let dep: BTreeSet<(usize, usize)> = dep_edges.into_iter().collect();
        let fb: BTreeSet<(usize, usize)> = forbid_edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in &dep {
            assert!(a < b && b < n, "dependency edges must point forward");
            succ[a].push(b);
        }
        let mut forbid = vec![BTreeSet::new(); n];
        for &(a, b) in &fb {
            assert!(a != b && b < n, "invalid forbid edge");
            forbid[a].insert(b);
            forbid[b].insert(a);
        }
        WspGraph {
            n,
            dep_edges: dep.into_iter().collect(),
            forbid_edges: fb.into_iter().collect(),
            succ,
            forbid,
            program: None,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dep_edges(&self) -> &[(usize, usize)] {
        &self.dep_edges
    }

    pub fn forbid_edges(&self) -> &[(usize, usize)] {
        &self.forbid_edges
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    pub fn forbidden(&self, a: usize, b: usize) -> bool {
        self.forbid[a].contains(&b)
    }

    pub fn forbid_neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.forbid[v]
    }

    pub fn program(&self) -> Option<&Arc<Program>> {
        self.program.as_ref()
    }

    /// Display label of a vertex.
    pub fn label(&self, v: usize) -> String {
        match &self.program {
            Some(p) => p.instruction_text(v),
            None => format!("v{}", v),
        }
    }
}

fn control_conflict(a: &Instruction, b: &Instruction) -> bool {
    match a.control_base() {
        Some(base) => b.bases().contains(&base),
        None => false,
    }
}

/// Whether instruction `j` must stay after instruction `i` (`i < j`).
pub fn depends(p: &Program, i: usize, j: usize) -> bool {
    let (a, b) = (p.access(i), p.access(j));
    let hit = |xs: &BTreeSet<_>, ys: &BTreeSet<_>| xs.iter().any(|x| ys.iter().any(|y| views_overlap(x, y)));
    if hit(&a.writes, &b.reads) || hit(&a.writes, &b.writes) || hit(&a.reads, &b.writes) {
        return true;
    }
    let (ia, ib) = (&p.instructions()[i], &p.instructions()[j]);
    control_conflict(ia, ib) || control_conflict(ib, ia)
}

/// Whether two instructions may share a block.
pub fn fusible(p: &Program, i: usize, j: usize) -> bool {
    let (ia, ib) = (&p.instructions()[i], &p.instructions()[j]);
    let (oa, ob) = match (ia.output(), ib.output()) {
        (Some(x), Some(y)) => (x, y),
        _ => return true,
    };
    if oa.len() != ob.len() || oa.shape.len() != ob.shape.len() {
        return false;
    }
    for (f, g) in [(i, j), (j, i)] {
        let (af, ag) = (p.access(f), p.access(g));
        for o in &af.writes {
            for x in ag.reads.iter().chain(ag.writes.iter()) {
                if x != o && views_overlap(o, x) {
                    return false;
                }
            }
        }
    }
    true
}

pub fn build_wsp(p: &Program) -> WspGraph {
    let n = p.len();
    let mut dep = Vec::new();
    let mut forbid = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if depends(p, i, j) {
                dep.push((i, j));
            }
            if !fusible(p, i, j) {
                forbid.push((i, j));
            }
        }
    }
    let mut g = WspGraph::from_edges(n, dep, forbid);
    g.program = Some(Arc::new(p.clone()));
    g
}

/// Disjoint blocks covering `0..n`, each sorted, ordered by smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(blocks: impl IntoIterator<Item = Vec<usize>>) -> Partition {
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .filter(|b| !b.is_empty())
            .map(|mut b| {
                b.sort_unstable();
                b.dedup();
                b
            })
            .collect();
        blocks.sort();
        Partition { blocks }
    }

    pub fn singletons(n: usize) -> Partition {
        Partition { blocks: (0..n).map(|v| vec![v]).collect() }
    }

    /// Groups vertices by label.
    pub fn from_labels(labels: &[usize]) -> Partition {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, &l) in labels.iter().enumerate() {
            m.entry(l).or_default().push(v);
        }
        Partition::new(m.into_values())
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index of every vertex.
    pub fn block_of(&self) -> Vec<usize> {
        let mut of = vec![usize::MAX; self.vertex_count()];
        for (k, b) in self.blocks.iter().enumerate() {
            for &v in b {
                of[v] = k;
            }
        }
        of
    }

    /// True if every block of `self` lies inside a block of `other`.
    pub fn refines(&self, other: &Partition) -> bool {
        let of = other.block_of();
        self.blocks.iter().all(|b| b.iter().all(|&v| of[v] == of[b[0]]))
    }

    /// The partition with blocks `a` and `b` (indices) united.
    pub fn merged(&self, a: usize, b: usize) -> Partition {
        let mut blocks = self.blocks.clone();
        let (lo, hi) = (a.min(b), a.max(b));
        let moved = blocks.remove(hi);
        blocks[lo].extend(moved);
        Partition::new(blocks)
    }

    pub fn is_valid_for(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for b in &self.blocks {
            for &v in b {
                if v >= n || seen[v] {
                    return false;
                }
                seen[v] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// No block holds a forbid pair and the block graph is acyclic.
pub fn is_legal_partition(g: &WspGraph, p: &Partition) -> bool {
    assert!(p.is_valid_for(g.len()), "not a partition of the graph's vertices");
    let of = p.block_of();
    if g.forbid_edges().iter().any(|&(a, b)| of[a] == of[b]) {
        return false;
    }
    quotient_acyclic(g, &of, p.len())
}

fn quotient_acyclic(g: &WspGraph, of: &[usize], k: usize) -> bool {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for &(a, b) in g.dep_edges() {
        if of[a] != of[b] {
            adj[of[a]].insert(of[b]);
        }
    }
    let mut indeg = vec![0usize; k];
    for s in &adj {
        for &t in s {
            indeg[t] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..k).filter(|&x| indeg[x] == 0).collect();
    let mut done = 0;
    while let Some(x) = stack.pop() {
        done += 1;
        for &t in &adj[x] {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                stack.push(t);
            }
        }
    }
    done == k
}

/// Collapses the strongly connected components of the block graph: the finest acyclic
/// partition that `p` refines.
pub fn acyclic_coarsening(g: &WspGraph, p: &Partition) -> Partition {
    let of = p.block_of();
    let k = p.len();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for &(a, b) in g.dep_edges() {
        if of[a] != of[b] {
            adj[of[a]].insert(of[b]);
        }
    }
    let comp = scc(&adj);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (x, b) in p.blocks().iter().enumerate() {
        groups.entry(comp[x]).or_default().extend(b);
    }
    Partition::new(groups.into_values())
}

/// Tarjan's algorithm, iterative. Returns a component id per node.
fn scc(adj: &[BTreeSet<usize>]) -> Vec<usize> {
    let n = adj.len();
    let adjv: Vec<Vec<usize>> = adj.iter().map(|s| s.iter().copied().collect()).collect();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = work.last_mut() {
            if *i < adjv[v].len() {
                let w = adjv[v][*i];
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(u, _)) = work.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}

/// Undirected weighted graph with k ≥ 3 distinct terminals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MwcInstance {
    pub n: usize,
    pub edges: Vec<(usize, usize, u64)>,
    pub terminals: Vec<usize>,
}

impl MwcInstance {
    pub fn is_valid(&self) -> bool {
        let t: BTreeSet<usize> = self.terminals.iter().copied().collect();
        t.len() == self.terminals.len()
            && self.terminals.len() >= 3
            && self.terminals.iter().all(|&x| x < self.n)
            && self.edges.iter().all(|&(a, b, _)| a < self.n && b < self.n && a != b)
    }

    /// Minimum multiway cut by assigning every non-terminal to one of the terminals.
    pub fn brute_force_min_cut(&self) -> u64 {
        let k = self.terminals.len();
        let free: Vec<usize> = (0..self.n).filter(|v| !self.terminals.contains(v)).collect();
        let mut label = vec![0usize; self.n];
        for (i, &t) in self.terminals.iter().enumerate() {
            label[t] = i;
        }
        let total = (k as u64).pow(free.len() as u32);
        let mut best = u64::MAX;
        for code in 0..total {
            let mut c = code;
            for &v in &free {
                label[v] = (c % k as u64) as usize;
                c /= k as u64;
            }
            let cut = self.edges.iter().filter(|&&(a, b, _)| label[a] != label[b]).map(|e| e.2).sum();
            best = best.min(cut);
        }
        best
    }
}

/// The hardness construction: no dependencies, terminals pairwise forbidden.
/// Pair with `CutWeight` for the cost.
pub fn mwc_to_wsp(m: &MwcInstance) -> WspGraph {
    assert!(m.is_valid(), "invalid multiway cut instance");
    let mut forbid = Vec::new();
    for (i, &a) in m.terminals.iter().enumerate() {
        for &b in &m.terminals[i + 1..] {
            forbid.push((a, b));
        }
    }
    WspGraph::from_edges(m.n, [], forbid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    const STENCIL_PAIR: &str = include_str!("../tests/fixtures/stencil_pair.fp");

    #[test]
    fn depends_examples() {
        let p = parse_program(STENCIL_PAIR).unwrap();
        assert!(depends(&p, 8, 9));
        assert!(!depends(&p, 0, 1));
        assert!(depends(&p, 9, 14));
    }

    #[test]
    fn fusible_examples() {
        let p = parse_program(STENCIL_PAIR).unwrap();
        assert!(fusible(&p, 4, 5));
        // Every overlapping pair between MAX and MIN is an identical view.
        assert!(fusible(&p, 9, 10));
        assert!(!fusible(&p, 2, 0));
        assert!(fusible(&p, 11, 2));
    }

    #[test]
    fn stencil_pair_graph() {
        let p = parse_program(STENCIL_PAIR).unwrap();
        let g = build_wsp(&p);
        assert_eq!(g.len(), 17);
        assert!(g.dep_edges().contains(&(0, 4)));
        let mut want = vec![(0, 2), (0, 3), (1, 2), (1, 3), (4, 9), (5, 9), (6, 10), (7, 10)];
        for j in 4..=10 {
            want.push((2, j));
            want.push((3, j));
        }
        want.sort();
        assert_eq!(g.forbid_edges(), &want[..]);
        for &(a, b) in g.dep_edges() {
            assert!(a < b);
        }
    }

    #[test]
    fn small_graphs() {
        let g = build_wsp(&parse_program("").unwrap());
        assert!(g.is_empty());
        let g = build_wsp(&parse_program("array A 4 u8\narray B 4 u8\nCOPY A, 0\nCOPY B, 1").unwrap());
        assert_eq!(g.len(), 2);
        assert!(g.dep_edges().is_empty() && g.forbid_edges().is_empty());
    }

    #[test]
    fn legality() {
        let g = WspGraph::from_edges(3, [(0, 1), (1, 2)], []);
        assert!(is_legal_partition(&g, &Partition::singletons(3)));
        assert!(!is_legal_partition(&g, &Partition::new([vec![0, 2], vec![1]])));
        assert!(is_legal_partition(&g, &Partition::new([vec![0, 1, 2]])));
        let f = WspGraph::from_edges(2, [], [(0, 1)]);
        assert!(!is_legal_partition(&f, &Partition::new([vec![0, 1]])));
    }

    #[test]
    fn coarsening_collapses_cycles() {
        let g = WspGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)], []);
        let p = acyclic_coarsening(&g, &Partition::new([vec![0, 2], vec![1], vec![3]]));
        assert_eq!(p, Partition::new([vec![0, 1, 2], vec![3]]));
    }

    #[test]
    fn mwc_graph() {
        let m = MwcInstance { n: 3, edges: vec![(0, 1, 1), (1, 2, 1), (0, 2, 1)], terminals: vec![0, 1, 2] };
        let g = mwc_to_wsp(&m);
        assert!(g.dep_edges().is_empty());
        assert_eq!(g.forbid_edges().len(), 3);
        assert_eq!(m.brute_force_min_cut(), 3);
    }
}
