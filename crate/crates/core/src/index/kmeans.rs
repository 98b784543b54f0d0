use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::squared_l2;
use crate::error::{Error, Result};

/// Training points per centroid above which k-means runs on a seeded subsample.
pub const MAX_POINTS_PER_CENTROID: usize = 256;

/// Nearest center by (distance, index).
#[inline]
pub fn nearest(v: &[f32], centers: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let d = squared_l2(v, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding over row-major `data`; returns `k × dim` centers.
pub fn kmeans(data: &[f32], dim: usize, k: usize, iterations: usize, seed: u64) -> Result<Vec<f32>> {
    let n = if dim == 0 { 0 } else { data.len() / dim };
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot fit {k} clusters to {n} vectors")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let train: Vec<&[f32]> = if n > k * MAX_POINTS_PER_CENTROID {
        let mut idx = sample(&mut rng, n, k * MAX_POINTS_PER_CENTROID).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &data[i * dim..(i + 1) * dim]).collect()
    } else {
        data.chunks_exact(dim).collect()
    };
    let m = train.len();

    // k-means++
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..m);
    centers.extend_from_slice(train[first]);
    let mut d2: Vec<f64> = train.iter().map(|v| squared_l2(v, train[first]) as f64).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        let c = train[pick];
        centers.extend_from_slice(c);
        for (slot, v) in d2.iter_mut().zip(&train) {
            *slot = slot.min(squared_l2(v, c) as f64);
        }
    }

    let mut assign = vec![usize::MAX; m];
    for _ in 0..iterations {
        let next: Vec<usize> = train.par_iter().map(|v| nearest(v, &centers, dim).0).collect();
        if next == assign {
            break;
        }
        assign = next;
        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (v, &c) in train.iter().zip(&assign) {
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(v.iter()) {
                *s += *x as f64;
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous center.
            if counts[c] > 0 {
                for j in 0..dim {
                    centers[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
                }
            }
        }
    }
    Ok(centers)
}
