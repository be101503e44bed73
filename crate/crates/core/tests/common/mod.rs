//! Random small datasets shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weaksep::datagrid::{GridAxis, MultiwayDataset};

/// Sorted random points on `[0, 1]` with trapezoid weights.
pub fn random_axis(rng: &mut ChaCha8Rng, len: usize) -> GridAxis {
    let mut pts: Vec<f64> = (0..len).map(|i| (i as f64 + rng.random_range(0.1..0.9)) / len as f64).collect();
    pts.sort_by(f64::total_cmp);
    GridAxis::trapezoid(pts).unwrap()
}

/// Sum of random rank-one surfaces with well separated variances, plus
/// a little white noise, so that marginal spectra have clear gaps.
pub fn random_dataset(seed: u64, n: usize, ns: usize, nt: usize) -> MultiwayDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s_axis = random_axis(&mut rng, ns);
    let t_axis = random_axis(&mut rng, nt);
    let comps = 6;
    let us: Vec<Vec<f64>> = (0..comps).map(|_| (0..ns).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let vs: Vec<Vec<f64>> = (0..comps).map(|_| (0..nt).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut values = vec![0.0; n * ns * nt];
    for i in 0..n {
        for c in 0..comps {
            let z: f64 = rng.random_range(-1.0..1.0) * 0.6f64.powi(c as i32) * 3.0;
            for s in 0..ns {
                for t in 0..nt {
                    values[(i * ns + s) * nt + t] += z * us[c][s] * vs[c][t];
                }
            }
        }
        for v in &mut values[i * ns * nt..(i + 1) * ns * nt] {
            *v += 0.05 * rng.random_range(-1.0..1.0);
        }
    }
    MultiwayDataset::new(n, s_axis, t_axis, values).unwrap()
}

/// `random_dataset` with sizes drawn from the seed: `n` in `[lo_n, 30]`,
/// grids of 5 to 9 points.
pub fn random_small(seed: u64, lo_n: usize) -> MultiwayDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let n = rng.random_range(lo_n..=30);
    let ns = rng.random_range(5..=9);
    let nt = rng.random_range(5..=9);
    random_dataset(seed, n, ns, nt)
}
