#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ragseg::community::WeightedGraph;
use ragseg::{LabelMap, Partition, RgbImage};

/// Every set partition of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    grow(&mut prefix, 0, n, &mut out);
    out
}

/// Dense symmetric weights with zero diagonal.
pub type Dense = Vec<Vec<f64>>;

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> (WeightedGraph, Dense) {
    let mut a = vec![vec![0.0; n]; n];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let w = rng.random_range(0.1..1.0);
                a[i][j] = w;
                a[j][i] = w;
                edges.push((i, j, w));
            }
        }
    }
    (WeightedGraph::from_edges(n, &edges).unwrap(), a)
}

pub fn dense_from(n: usize, edges: &[(usize, usize, f64)]) -> Dense {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] += w;
        a[j][i] += w;
    }
    a
}

/// `Q = (1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j)` over ordered pairs.
pub fn naive_modularity(a: &Dense, c: &[usize]) -> f64 {
    let n = a.len();
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if c[i] == c[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

pub fn best_modularity(a: &Dense) -> (f64, Vec<usize>) {
    set_partitions(a.len())
        .into_iter()
        .map(|p| (naive_modularity(a, &p), p))
        .fold((f64::NEG_INFINITY, vec![]), |best, cur| if cur.0 > best.0 { cur } else { best })
}

pub fn two_triangles_edges() -> Vec<(usize, usize, f64)> {
    vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0), (2, 3, 1.0)]
}

pub fn two_cliques_edges(k: usize) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for base in [0, k] {
        for i in 0..k {
            for j in i + 1..k {
                edges.push((base + i, base + j, 1.0));
            }
        }
    }
    edges.push((k - 1, k, 1.0));
    edges
}

pub fn partition(raw: &[usize]) -> Partition {
    Partition::from_assignment(raw)
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Flat colors plus Gaussian noise.
pub fn noisy(gt: &LabelMap, colors: &[[u8; 3]], sigma: f64, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let (w, h) = gt.dims();
    let mut img = RgbImage::from_fn(w, h, |_, _| [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let c = colors[gt.get(x, y) as usize];
            let px = [0, 1, 2].map(|k| clamp_u8(c[k] as f64 + noise.sample(&mut rng)));
            img.put(x, y, px);
        }
    }
    img
}

pub fn quadrant_truth(size: usize) -> LabelMap {
    LabelMap::from_fn(size, size, |x, y| (x >= size / 2) as u32 + 2 * (y >= size / 2) as u32)
}

pub const QUADRANT_COLORS: [[u8; 3]; 4] = [[220, 40, 40], [40, 180, 60], [40, 60, 220], [235, 225, 60]];

pub fn quadrant_image(size: usize, seed: u64) -> (RgbImage, LabelMap) {
    let gt = quadrant_truth(size);
    (noisy(&gt, &QUADRANT_COLORS, 5.0, seed), gt)
}
