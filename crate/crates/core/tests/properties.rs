use std::collections::HashSet;
use std::sync::Arc;

use fusepart::algorithms::{self, legal_chain, replay, SearchBudget, Traversal};
use fusepart::cache::CacheKey;
use fusepart::cost::{bohrium_saving, model_by_name, CostModel, MaxContract, MaxLocality, Robinson, MODEL_NAMES};
use fusepart::gen::{generate, BenchSpec};
use fusepart::graph::{acyclic_coarsening, build_wsp, is_legal_partition, Partition};
use fusepart::ir::{parse_program, serialize, serialize_positional, views_overlap, ArrayView, Program};
use fusepart::state::WspState;
use proptest::prelude::*;

fn program(seed: u64, ops: usize, bases: usize, size: u64) -> Arc<Program> {
    let spec = BenchSpec { generator: "random-dag".into(), ops, bases, size, seed, ..BenchSpec::default() };
    Arc::new(generate(&spec).unwrap())
}

fn programs(max_ops: usize) -> impl Strategy<Value = Arc<Program>> {
    (any::<u64>(), 1..=max_ops, 1usize..=4, 3u64..=5).prop_map(|(s, o, b, n)| program(s, o, b, n))
}

/// A program with an arbitrary (not necessarily legal) partition of its instructions.
fn partitioned(max_ops: usize) -> impl Strategy<Value = (Arc<Program>, Partition)> {
    (programs(max_ops), prop::collection::vec(0usize..6, max_ops)).prop_map(|(p, labels)| {
        let part = Partition::from_labels(&labels[..p.len()]);
        (p, part)
    })
}

fn views() -> impl Strategy<Value = ArrayView> {
    prop::collection::vec((1u64..=4, prop_oneof![-5i64..=-1, 1i64..=5]), 1..=3)
        .prop_flat_map(|dims| (Just(dims), 0i64..40))
        .prop_map(|(dims, offset)| ArrayView {
            base: 0,
            offset,
            shape: dims.iter().map(|d| d.0).collect(),
            strides: dims.iter().map(|d| d.1).collect(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn saving_equals_cost_drop((p, part) in partitioned(9), pick in any::<(usize, usize)>()) {
        prop_assume!(part.len() >= 2);
        let a = pick.0 % part.len();
        let b = (a + 1 + pick.1 % (part.len() - 1)) % part.len();
        let merged = part.merged(a, b);
        for name in MODEL_NAMES {
            let m = model_by_name(name, &p).unwrap();
            let (ba, bb) = (&part.blocks()[a], &part.blocks()[b]);
            let drop = m.evaluate(&part) as i64 - m.evaluate(&merged) as i64;
            prop_assert_eq!(drop, m.saving(ba, bb), "{}", name);
            prop_assert_eq!(m.saving(ba, bb), m.saving(bb, ba), "{}", name);
            if name == "bohrium" {
                prop_assert_eq!(drop, bohrium_saving(&p, ba, bb) as i64);
            }
        }
    }

    #[test]
    fn merging_never_costs_more((p, part) in partitioned(9), pick in any::<(usize, usize)>()) {
        prop_assume!(part.len() >= 2);
        let a = pick.0 % part.len();
        let b = (a + 1 + pick.1 % (part.len() - 1)) % part.len();
        for name in MODEL_NAMES {
            let m = model_by_name(name, &p).unwrap();
            prop_assert!(m.saving(&part.blocks()[a], &part.blocks()[b]) >= 0, "{}", name);
        }
    }

    #[test]
    fn merge_order_does_not_matter((p, part) in partitioned(9), swap in any::<bool>()) {
        let g = build_wsp(&p);
        let target = acyclic_coarsening(&g, &part);
        for name in MODEL_NAMES {
            let m = model_by_name(name, &p).unwrap();
            let mut steps: Vec<(usize, usize)> = target.blocks().iter().flat_map(|b| b[1..].iter().map(move |&v| (b[0], v))).collect();
            if swap {
                steps.reverse();
            }
            let mut s = WspState::singleton(&g, m.as_ref());
            for (u, v) in steps {
                let (x, y) = (s.owner(u), s.owner(v));
                if x != y {
                    s.merge(x, y);
                }
            }
            prop_assert_eq!(s.partition(), target.clone());
            prop_assert_eq!(s.cost(), m.evaluate(&target));
            let fresh = WspState::from_partition(&g, m.as_ref(), &target);
            prop_assert_eq!(fresh.cost(), s.cost());
            prop_assert_eq!(fresh.dep_hat().len(), s.dep_hat().len());
            prop_assert_eq!(fresh.forbid_hat().len(), s.forbid_hat().len());
            let mut w1: Vec<i64> = fresh.weights().map(|e| e.1).collect();
            let mut w2: Vec<i64> = s.weights().map(|e| e.1).collect();
            w1.sort();
            w2.sort();
            prop_assert_eq!(w1, w2);
        }
    }

    #[test]
    fn legal_partitions_replay((p, part) in partitioned(9)) {
        let g = build_wsp(&p);
        let m = model_by_name("bohrium", &p).unwrap();
        let target = acyclic_coarsening(&g, &part);
        let s = WspState::from_partition(&g, m.as_ref(), &target);
        prop_assert_eq!(s.is_legal(), is_legal_partition(&g, &target));
        if is_legal_partition(&g, &target) {
            let r = replay(&g, m.as_ref(), &legal_chain(&target));
            prop_assert!(r.is_ok());
            prop_assert_eq!(r.unwrap().partition(), target);
        }
    }

    #[test]
    fn overlap_matches_address_sets(a in views(), b in views()) {
        let sa: HashSet<i64> = a.addresses().collect();
        let sb: HashSet<i64> = b.addresses().collect();
        prop_assert_eq!(views_overlap(&a, &b), !sa.is_disjoint(&sb));
        prop_assert_eq!(views_overlap(&a, &b), views_overlap(&b, &a));
    }

    #[test]
    fn serialization_round_trips(p in programs(14)) {
        let text = serialize(&p);
        let q = parse_program(&text).unwrap();
        prop_assert_eq!(serialize(&q), text);
        prop_assert_eq!(serialize_positional(&q), serialize_positional(&p));
    }

    #[test]
    fn robinson_orders_by_locality_then_contraction((p, x) in partitioned(8), labels in prop::collection::vec(0usize..6, 8)) {
        let y = Partition::from_labels(&labels[..p.len()]);
        let (mc, ml, r) = (MaxContract::new(p.clone()), MaxLocality::new(p.clone()), Robinson::new(p.clone()));
        let key = |q: &Partition| (ml.evaluate(q), mc.evaluate(q), q.len());
        prop_assert_eq!(key(&x).cmp(&key(&y)), r.evaluate(&x).cmp(&r.evaluate(&y)));
    }

    #[test]
    fn cache_key_tracks_every_input(p in programs(8), q in programs(8)) {
        let b = SearchBudget::default();
        let k = CacheKey::new(&p, "optimal", "bohrium", b, Traversal::DepthFirst);
        prop_assert_eq!(&k, &CacheKey::new(&p, "optimal", "bohrium", b, Traversal::DepthFirst));
        prop_assert_ne!(&k, &CacheKey::new(&p, "greedy", "bohrium", b, Traversal::DepthFirst));
        prop_assert_ne!(&k, &CacheKey::new(&p, "optimal", "robinson", b, Traversal::DepthFirst));
        prop_assert_ne!(&k, &CacheKey::new(&p, "optimal", "bohrium", SearchBudget::nodes(5), Traversal::DepthFirst));
        prop_assert_ne!(&k, &CacheKey::new(&p, "optimal", "bohrium", b, Traversal::BreadthFirst));
        let other = CacheKey::new(&q, "optimal", "bohrium", b, Traversal::DepthFirst);
        prop_assert_eq!(k == other, serialize_positional(&p) == serialize_positional(&q));
    }

    #[test]
    fn optimal_agrees_with_brute_force(p in programs(9), budget in 1u64..40) {
        let g = build_wsp(&p);
        for name in MODEL_NAMES {
            let m = model_by_name(name, &p).unwrap();
            let truth = algorithms::brute_force(&g, m.as_ref(), 9).unwrap();
            for order in [Traversal::DepthFirst, Traversal::BreadthFirst] {
                let r = algorithms::optimal_with(WspState::singleton(&g, m.as_ref()), SearchBudget::unlimited(), order);
                prop_assert!(r.proven_optimal);
                prop_assert_eq!(r.cost, truth.cost, "{} {:?}", name, order);
                prop_assert!(is_legal_partition(&g, &r.partition));
            }
            let capped = algorithms::optimal(WspState::singleton(&g, m.as_ref()), SearchBudget::nodes(budget));
            prop_assert!(capped.cost >= truth.cost);
            prop_assert!(is_legal_partition(&g, &capped.partition));
            prop_assert_eq!(capped.cost, m.evaluate(&capped.partition));
            if capped.proven_optimal {
                prop_assert_eq!(capped.cost, truth.cost);
            }
        }
    }
}
