mod common;

use std::collections::BTreeSet;

use expdesign_core::data::{CandidatePool, HitRule, Metric};
use expdesign_core::memory::{center_quotas, CandidateMemory};
use proptest::prelude::*;
use rand::Rng;

use common::{random_pool, ref_distance, ref_nearest, rng};

#[test]
fn nearest_matches_brute_force_on_random_pools() {
    let mut r = rng(11);
    for trial in 0..60 {
        let metric = if trial % 2 == 0 { Metric::Cosine } else { Metric::L2Squared };
        let n = r.gen_range(1..=400);
        let dim = r.gen_range(1..=32);
        let pool = random_pool(&mut r, n, dim, metric);
        let mut memory = CandidateMemory::new(&pool);
        let explored: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.3)).collect();
        memory.mark_indices(&explored);
        let flags: Vec<bool> = (0..n).map(|i| memory.is_explored(i)).collect();
        for _ in 0..5 {
            let query: Vec<f64> = (0..dim).map(|_| common::normal(&mut r)).collect();
            let k = r.gen_range(0..=n + 2);
            let got = memory.nearest_unexplored(&query, k).unwrap();
            assert_eq!(got, ref_nearest(&pool, &flags, &query, k), "trial {trial}");
        }
    }
}

#[test]
fn allocation_follows_center_order_and_quotas() {
    let mut r = rng(5);
    let pool = random_pool(&mut r, 300, 8, Metric::L2Squared);
    let mut memory = CandidateMemory::new(&pool);
    let centers: Vec<Vec<f64>> = (0..4).map(|i| pool.embedding(i * 10).to_vec()).collect();
    let mut flags = vec![false; pool.len()];
    let mut expected = Vec::new();
    for (c, q) in centers.iter().zip(center_quotas(30, 4)) {
        let take = ref_nearest(&pool, &flags, c, q);
        for &i in &take {
            flags[i] = true;
        }
        expected.push(take);
    }
    let alloc = memory.allocate_batch(&centers, 30).unwrap();
    assert_eq!(alloc.quotas, [8, 8, 7, 7]);
    assert_eq!(alloc.per_center, expected);
    assert_eq!(memory.explored_count(), 30);
}

fn small_pool(rows: Vec<Vec<f64>>, metric: Metric) -> CandidatePool {
    let entries = (0..rows.len()).map(|i| (format!("c{i}"), i as f64)).collect();
    CandidatePool::new(entries, rows, HitRule::GroundTruthSet { names: BTreeSet::new() }, metric).unwrap()
}

fn rows_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
    (1usize..6).prop_flat_map(|dim| {
        let row = prop::collection::vec(-5.0f64..5.0, dim);
        (prop::collection::vec(row, 1..60), Just(dim))
    })
}

proptest! {
    #[test]
    fn nearest_is_sorted_unexplored_and_sized(
        (rows, dim) in rows_strategy(),
        explored_mask in prop::collection::vec(any::<bool>(), 60),
        query_seed in prop::collection::vec(-5.0f64..5.0, 6),
        k in 0usize..70,
    ) {
        let pool = small_pool(rows, Metric::L2Squared);
        let mut memory = CandidateMemory::new(&pool);
        let explored: Vec<usize> = (0..pool.len()).filter(|&i| explored_mask[i]).collect();
        memory.mark_indices(&explored);
        let query = &query_seed[..dim];
        let got = memory.nearest_unexplored(query, k).unwrap();
        prop_assert_eq!(got.len(), k.min(memory.unexplored_count()));
        prop_assert!(got.iter().all(|&i| !memory.is_explored(i)));
        let d: Vec<f64> = got.iter().map(|&i| ref_distance(Metric::L2Squared, query, pool.embedding(i))).collect();
        prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
        // nothing left behind is closer than the farthest returned
        if let Some(&worst) = d.last() {
            for i in memory.unexplored().filter(|i| !got.contains(i)) {
                prop_assert!(ref_distance(Metric::L2Squared, query, pool.embedding(i)) >= worst);
            }
        }
    }

    #[test]
    fn allocation_is_disjoint_and_capped(
        (rows, _dim) in rows_strategy(),
        centers in prop::collection::vec(0usize..60, 1..6),
        batch in 1usize..80,
    ) {
        let pool = small_pool(rows, Metric::L2Squared);
        let mut memory = CandidateMemory::new(&pool);
        let vectors: Vec<Vec<f64>> = centers.iter().map(|&c| pool.embedding(c % pool.len()).to_vec()).collect();
        let alloc = memory.allocate_batch(&vectors, batch).unwrap();
        let selected = alloc.selected();
        let unique: BTreeSet<usize> = selected.iter().copied().collect();
        prop_assert_eq!(unique.len(), selected.len());
        prop_assert_eq!(selected.len(), batch.min(pool.len()));
        prop_assert_eq!(alloc.quotas.iter().sum::<usize>(), batch);
        prop_assert_eq!(memory.explored_count(), selected.len());
    }

    #[test]
    fn cosine_distance_is_bounded_and_zero_on_self(v in prop::collection::vec(0.1f64..3.0, 1..10), w in prop::collection::vec(-3.0f64..3.0, 10)) {
        let w = &w[..v.len()];
        let d = expdesign_core::memory::distance(Metric::Cosine, &v, &v).unwrap();
        prop_assert_eq!(d, 0.0);
        if w.iter().any(|x| *x != 0.0) {
            let d = expdesign_core::memory::distance(Metric::Cosine, &v, w).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
        }
    }
}

#[test]
fn mark_explored_is_all_or_nothing() {
    let pool = small_pool(vec![vec![0.0], vec![1.0], vec![2.0]], Metric::L2Squared);
    let mut memory = CandidateMemory::new(&pool);
    assert!(memory.mark_explored(&["c0", "nope"]).is_err());
    assert_eq!(memory.explored_count(), 0);
    memory.mark_explored(&["c0", "c2"]).unwrap();
    assert_eq!(memory.unexplored().collect::<Vec<_>>(), [1]);
}
