use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Assignment, HierarchyError};
use crate::tensor::Array;

const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterAlgo {
    #[default]
    Spectral,
    Kmeans,
    Hierarchical,
}

impl std::str::FromStr for ClusterAlgo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spectral" => Ok(Self::Spectral),
            "kmeans" | "k-means" => Ok(Self::Kmeans),
            "hierarchical" => Ok(Self::Hierarchical),
            other => Err(format!("unknown clustering algorithm `{other}`")),
        }
    }
}

/// Groups the rows of a similarity graph into `n_groups` clusters.
///
/// The graph's diagonal is ignored. Disconnected graphs are clustered per
/// connected component. Deterministic for a given seed.
pub fn cluster_scale(
    n_groups: usize,
    similarity: &Array,
    algo: ClusterAlgo,
    seed: u64,
) -> Result<Assignment, HierarchyError> {
    let n = similarity.shape()[0];
    if similarity.ndim() != 2 || similarity.shape()[1] != n {
        return Err(HierarchyError::Config(format!(
            "similarity graph must be square, got {:?}",
            similarity.shape()
        )));
    }
    if n_groups == 0 || n_groups >= n {
        return Err(HierarchyError::Config(format!(
            "cannot form {n_groups} groups from {n} members (need 1 <= groups < members)"
        )));
    }
    let mut w = similarity.clone();
    for i in 0..n {
        w.data_mut()[i * n + i] = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n_groups == 1 {
        return Ok(Assignment::new(vec![0; n], 1));
    }

    let components = connected_components(&w);
    let mut labels = vec![0usize; n];
    if components.len() >= n_groups {
        // too many components: pack whole components into groups
        let mut order: Vec<usize> = (0..components.len()).collect();
        order.sort_by_key(|&c| (std::cmp::Reverse(components[c].len()), c));
        let mut load = vec![0usize; n_groups];
        for c in order {
            let g = (0..n_groups).min_by_key(|&g| (load[g], g)).expect("groups");
            load[g] += components[c].len();
            for &v in &components[c] {
                labels[v] = g;
            }
        }
    } else {
        let alloc = allocate_groups(&components, n_groups);
        let mut next = 0;
        for (members, &k) in components.iter().zip(&alloc) {
            let local = if k == 1 {
                vec![0; members.len()]
            } else {
                let sub = submatrix(&w, members);
                match algo {
                    ClusterAlgo::Spectral => spectral(&sub, k, &mut rng),
                    ClusterAlgo::Kmeans => kmeans_rows(&sub, k, &mut rng),
                    ClusterAlgo::Hierarchical => average_linkage(&sub, k),
                }
            };
            for (&v, &l) in members.iter().zip(&local) {
                labels[v] = next + l;
            }
            next += k;
        }
    }
    Ok(Assignment::new(canonical(&labels), n_groups))
}

/// Relabels so that groups are numbered in order of first appearance.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn connected_components(w: &Array) -> Vec<Vec<usize>> {
    let n = w.shape()[0];
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut members = Vec::new();
        seen[start] = true;
        while let Some(v) = stack.pop() {
            members.push(v);
            for u in 0..n {
                if !seen[u] && (w.at2(v, u) > 0.0 || w.at2(u, v) > 0.0) {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// One group per component, the rest handed out to the component with the
/// most members per group.
fn allocate_groups(components: &[Vec<usize>], n_groups: usize) -> Vec<usize> {
    let mut alloc = vec![1usize; components.len()];
    for _ in components.len()..n_groups {
        let best = (0..components.len())
            .filter(|&c| alloc[c] < components[c].len())
            .max_by(|&a, &b| {
                let ra = components[a].len() as f64 / alloc[a] as f64;
                let rb = components[b].len() as f64 / alloc[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            })
            .expect("n_groups < n guarantees room");
        alloc[best] += 1;
    }
    alloc
}

fn submatrix(w: &Array, members: &[usize]) -> Array {
    let mut data = Vec::with_capacity(members.len() * members.len());
    for &i in members {
        for &j in members {
            data.push(w.at2(i, j));
        }
    }
    Array::new(vec![members.len(), members.len()], data).expect("square")
}

/// Normalised-Laplacian embedding followed by k-means on unit-length rows.
fn spectral(w: &Array, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = w.shape()[0];
    let degree: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    let inv_sqrt: Vec<f64> = degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        let sym = 0.5 * (w.at2(i, j) + w.at2(j, i));
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt[i] * sym * inv_sqrt[j]
    });
    let eig = SymmetricEigen::new(laplacian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut points = vec![vec![0.0; k]; n];
    for (c, &e) in order.iter().take(k).enumerate() {
        for (i, p) in points.iter_mut().enumerate() {
            p[c] = eig.eigenvectors[(i, e)];
        }
    }
    for p in &mut points {
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            p.iter_mut().for_each(|x| *x /= norm);
        }
    }
    kmeans(&points, k, rng)
}

fn kmeans_rows(w: &Array, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = w.shape()[0];
    let points: Vec<Vec<f64>> = (0..n).map(|i| w.row(i).to_vec()).collect();
    kmeans(&points, k, rng)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from k-means++ seeds; best of several restarts.
/// Every cluster in the result is non-empty.
pub(crate) fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut centers = kmeanspp(points, k, rng);
        let mut labels = vec![0usize; n];
        for _ in 0..KMEANS_ITERS {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let l = nearest(p, &centers);
                if l != labels[i] {
                    labels[i] = l;
                    changed = true;
                }
            }
            fill_empty(points, &mut labels, &centers, k);
            centers = centroids(points, &labels, k);
            if !changed {
                break;
            }
        }
        let inertia: f64 = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| sq_dist(p, &centers[l]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b - 1e-12) {
            best = Some((inertia, labels));
        }
    }
    best.expect("at least one restart").1
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn kmeanspp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if target < di {
                    chosen = i;
                    break;
                }
                target -= di;
            }
            chosen
        };
        centers.push(points[pick].clone());
    }
    centers
}

fn centroids(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

/// Moves the worst-fitting member of the largest cluster into each empty one.
fn fill_empty(points: &[Vec<f64>], labels: &mut [usize], centers: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return;
        };
        let largest = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).expect("k > 0");
        let victim = (0..points.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centers[largest])
                    .total_cmp(&sq_dist(&points[b], &centers[largest]))
                    .then(b.cmp(&a))
            })
            .expect("largest cluster non-empty");
        labels[victim] = empty;
    }
}

/// Agglomerative clustering merging the pair with the highest mean similarity.
fn average_linkage(w: &Array, k: usize) -> Vec<usize> {
    let n = w.shape()[0];
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let link = |a: &[usize], b: &[usize]| -> f64 {
        let total: f64 = a
            .iter()
            .flat_map(|&i| b.iter().map(move |&j| 0.5 * (w.at2(i, j) + w.at2(j, i))))
            .sum();
        total / (a.len() * b.len()) as f64
    };
    while clusters.len() > k {
        let mut best = (f64::NEG_INFINITY, 0, 1);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let s = link(&clusters[a], &clusters[b]);
                if s > best.0 {
                    best = (s, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }
    let mut labels = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &v in members {
            labels[v] = c;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cliques(sizes: (usize, usize)) -> Array {
        let n = sizes.0 + sizes.1;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if (i < sizes.0) == (j < sizes.0) {
                    data[i * n + j] = 1.0;
                }
            }
        }
        Array::new(vec![n, n], data).unwrap()
    }

    #[test]
    fn separates_disconnected_cliques() {
        let w = two_cliques((3, 4));
        for algo in [ClusterAlgo::Spectral, ClusterAlgo::Kmeans, ClusterAlgo::Hierarchical] {
            let a = cluster_scale(2, &w, algo, 7).unwrap();
            assert_eq!(a.labels(), &[0, 0, 0, 1, 1, 1, 1], "{algo:?}");
        }
    }

    #[test]
    fn single_group_is_all_ones() {
        let w = two_cliques((2, 3));
        let a = cluster_scale(1, &w, ClusterAlgo::Spectral, 0).unwrap();
        assert_eq!(a.labels(), &[0; 5]);
        let s = a.matrix();
        assert_eq!(s.shape(), &[5, 1]);
        assert!(s.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn rejects_too_many_groups() {
        let w = two_cliques((2, 2));
        assert!(cluster_scale(4, &w, ClusterAlgo::Spectral, 0).is_err());
        assert!(cluster_scale(0, &w, ClusterAlgo::Spectral, 0).is_err());
    }

    #[test]
    fn isolated_nodes_yield_non_empty_groups() {
        let w = Array::zeros(vec![5, 5]);
        for k in 1..5 {
            let a = cluster_scale(k, &w, ClusterAlgo::Spectral, 3).unwrap();
            assert_eq!(a.group_sizes().len(), k);
            assert!(a.group_sizes().iter().all(|&s| s >= 1));
        }
    }

    #[test]
    fn more_groups_than_components_split_components() {
        let w = two_cliques((6, 2));
        let a = cluster_scale(3, &w, ClusterAlgo::Spectral, 1).unwrap();
        let sizes = a.group_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 8);
        assert!(sizes.iter().all(|&s| s >= 1));
        // the 2-clique stays intact
        assert_eq!(a.labels()[6], a.labels()[7]);
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10;
        let data: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        let mut w = Array::new(vec![n, n], data).unwrap();
        for i in 0..n {
            for j in 0..i {
                let v = w.at2(i, j);
                w.data_mut()[j * n + i] = v;
            }
        }
        for algo in [ClusterAlgo::Spectral, ClusterAlgo::Kmeans, ClusterAlgo::Hierarchical] {
            let a = cluster_scale(3, &w, algo, 5).unwrap();
            let b = cluster_scale(3, &w, algo, 5).unwrap();
            assert_eq!(a, b);
        }
    }
}
