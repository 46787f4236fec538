use millgnn::hierarchy::{
    build_hierarchy, build_similarity_graph, cluster_scale, dtw_distance, patchify, Aggregation, Assignment, ClusterAlgo,
    HierarchyConfig, ScaleHierarchy,
};
use millgnn::tensor::Array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Fraction of nodes whose label matches the planted one under the best
/// relabelling of the (small) group set.
fn agreement(found: &[usize], planted: &[usize], k: usize) -> f64 {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits = found.iter().zip(planted).filter(|(&f, &t)| p[f] == t).count();
        best = best.max(hits);
    });
    best as f64 / found.len() as f64
}

fn permute(p: &mut Vec<usize>, at: usize, f: &mut impl FnMut(&[usize])) {
    if at == p.len() {
        f(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permute(p, at + 1, f);
        p.swap(at, i);
    }
}

#[test]
fn planted_partition_is_recovered() {
    let (n, k) = (12, 3);
    let planted: Vec<usize> = (0..n).map(|i| i / 4).collect();
    for algo in [ClusterAlgo::Spectral] {
        let mut total = 0.0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut d = Array::zeros(vec![n, n]);
            for i in 0..n {
                d.data_mut()[i * n + i] = 1.0;
                for j in i + 1..n {
                    let p = if planted[i] == planted[j] { 0.9 } else { 0.1 };
                    if rng.random_bool(p) {
                        d.data_mut()[i * n + j] = 1.0;
                        d.data_mut()[j * n + i] = 1.0;
                    }
                }
            }
            let a = cluster_scale(k, &d, algo, seed).unwrap();
            total += agreement(a.labels(), &planted, k);
        }
        let mean = total / 20.0;
        assert!(mean >= 0.9, "{algo:?}: mean agreement {mean}");
    }
}

#[test]
fn dtw_graph_recovers_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let t = 120;
    let bases: Vec<Vec<f64>> = (0..2)
        .map(|b| (0..t).map(|i| ((i as f64) * (0.07 + 0.11 * b as f64)).sin() * (1.0 + b as f64)).collect())
        .collect();
    let n = 8;
    let mut data = Vec::new();
    for v in 0..n {
        data.extend(bases[v / 4].iter().map(|x| x + noise.sample(&mut rng)));
    }
    let x = Array::new(vec![n, t], data).unwrap();
    let d = build_similarity_graph(&x, 12, 0.3).unwrap();
    let (mut inside, mut across) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            if i != j && d.at2(i, j) == 1.0 {
                if i / 4 == j / 4 {
                    inside += 1;
                } else {
                    across += 1;
                }
            }
        }
    }
    assert!(inside > 0 && across == 0, "inside {inside} across {across}");
    let a = cluster_scale(2, &d, ClusterAlgo::Spectral, 0).unwrap();
    assert_eq!(agreement(a.labels(), &(0..n).map(|v| v / 4).collect::<Vec<_>>(), 2), 1.0);
}

#[test]
fn shift_is_cheaper_with_warping() {
    let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.5).sin()).collect();
    let shifted: Vec<f64> = std::iter::once(x[0]).chain(x[..19].iter().copied()).collect();
    let free = dtw_distance(&x, &shifted, 20).unwrap();
    let rigid = dtw_distance(&x, &shifted, 0).unwrap();
    assert!(free <= rigid);
}

#[test]
fn patch_counts_on_lookback_96() {
    let x = Array::zeros(vec![2, 96]);
    assert_eq!(patchify(&x, 12).unwrap().patch_count(), 8);
    let whole = patchify(&x, 96).unwrap();
    assert_eq!(whole.patch_count(), 1);
    assert_eq!(whole.patch_len(), 96);
    assert!(patchify(&x, 7).is_err());
}

fn random_train(seed: u64, n: usize, t: usize) -> Array {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array::new(vec![n, t], (0..n * t).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn two_scale_build_with_small_group_counts() {
    let x = random_train(4, 6, 200);
    for g in 1..=3 {
        let cfg = HierarchyConfig {
            groups: vec![g],
            patch_len: vec![4, 8],
            ..HierarchyConfig::single_scale(4)
        };
        let h = build_hierarchy(&x, 32, &cfg).unwrap();
        assert_eq!(h.num_scales(), 2);
        assert_eq!(h.groups(1), g);
        let sizes = h.group_sizes(1);
        assert_eq!(sizes.iter().sum::<usize>(), 6);
        assert!(sizes.iter().all(|&s| s >= 1));
    }
    let single = build_hierarchy(&x, 32, &HierarchyConfig::single_scale(4)).unwrap();
    assert_eq!(single.num_scales(), 1);
}

#[test]
fn build_is_deterministic_per_seed() {
    let x = random_train(5, 9, 150);
    let cfg = HierarchyConfig {
        groups: vec![4, 2],
        patch_len: vec![2, 4, 8],
        seed: 11,
        ..HierarchyConfig::single_scale(2)
    };
    let a = build_hierarchy(&x, 32, &cfg).unwrap();
    let b = build_hierarchy(&x, 32, &cfg).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    for s in 1..3 {
        assert_eq!(a.assignment(s).labels(), b.assignment(s).labels());
    }
    for algo in [ClusterAlgo::Kmeans, ClusterAlgo::Hierarchical] {
        let c = HierarchyConfig { algo, ..cfg.clone() };
        let a = build_hierarchy(&x, 32, &c).unwrap();
        let b = build_hierarchy(&x, 32, &c).unwrap();
        assert_eq!(a.assignment(2).labels(), b.assignment(2).labels());
    }
}

#[test]
fn three_scale_direct_assign_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let l1: Vec<usize> = (0..10).map(|i| if i < 5 { i } else { rng.random_range(0..5) }).collect();
    let l2 = vec![0, 1, 0, 1, 1];
    let h = ScaleHierarchy::from_assignments(
        10,
        vec![Assignment::new(l1.clone(), 5), Assignment::new(l2.clone(), 2)],
        vec![2, 4, 8],
        16,
        Aggregation::Sum,
    )
    .unwrap();
    let (s1, s2) = (Assignment::new(l1, 5).matrix(), Assignment::new(l2, 2).matrix());
    let direct = h.direct_assign(2).matrix();
    for i in 0..10 {
        for j in 0..2 {
            let v: f64 = (0..5).map(|m| s1.at2(i, m) * s2.at2(m, j)).sum();
            assert!(v == 0.0 || v == 1.0);
            assert_eq!(direct.at2(i, j), v);
        }
    }
    // group sizes are the column sums
    for j in 0..2 {
        assert_eq!(h.group_sizes(2)[j] as f64, (0..10).map(|i| direct.at2(i, j)).sum::<f64>());
    }
}

#[test]
fn mean_aggregation_averages_members() {
    let x = Array::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 5.0]]).unwrap();
    let h = ScaleHierarchy::from_assignments(
        3,
        vec![Assignment::new(vec![0, 0, 1], 2)],
        vec![1, 2],
        2,
        Aggregation::Mean,
    )
    .unwrap();
    let series = h.coarsen_series(&x).unwrap();
    assert_eq!(series[1].row(0), &[2.0, 4.0]);
    assert_eq!(series[1].row(1), &[5.0, 5.0]);
}
