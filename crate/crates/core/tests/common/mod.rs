//! Independent numeric oracles shared by the integration tests.
#![allow(dead_code)]

use distcd::datamodel::ColMatrix;
use distcd::rng;
use rand::Rng;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` for a unimodal function given only through a
/// strict comparison `less(x, y) ⇔ h(x) < h(y)`.
pub fn golden_section_by(mut lo: f64, mut hi: f64, iters: usize, less: impl Fn(f64, f64) -> bool) -> f64 {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    for _ in 0..iters {
        if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(1e-300) {
            break;
        }
        if less(x1, x2) {
            hi = x2;
            x2 = x1;
            x1 = hi - INV_PHI * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + INV_PHI * (hi - lo);
        }
    }
    0.5 * (lo + hi)
}

pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    golden_section_by(lo, hi, iters, |x, y| f(x) < f(y))
}

/// `sup_{a ∈ [lo, hi]} φ(a)` for concave `φ`: a uniform grid locates the bracket,
/// golden-section refines it.
pub fn numeric_sup(phi: impl Fn(f64) -> f64, lo: f64, hi: f64, grid: usize) -> f64 {
    let step = (hi - lo) / grid as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=grid {
        let val = phi(lo + step * i as f64);
        if val > best {
            best = val;
            best_i = i;
        }
    }
    let a = (lo + step * (best_i as f64 - 1.0)).max(lo);
    let b = (lo + step * (best_i as f64 + 1.0)).min(hi);
    let x = golden_section_min(|t| -phi(t), a, b, 200);
    best.max(phi(x)).max(phi(lo)).max(phi(hi))
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Random sparse `d × n` matrix (each column has at least one entry).
pub fn random_matrix(rng: &mut impl Rng, d: usize, n: usize, density: f64) -> ColMatrix {
    let cols = (0..n)
        .map(|_| {
            let mut col: Vec<(usize, f64)> = (0..d)
                .filter_map(|r| (rng.random::<f64>() < density).then(|| (r, rng.random_range(-1.0..1.0))))
                .collect();
            if col.is_empty() {
                col.push((rng.random_range(0..d), rng.random_range(0.1..1.0)));
            }
            col
        })
        .collect();
    ColMatrix::from_columns(d, cols).unwrap()
}

pub fn random_labels(rng: &mut impl Rng, d: usize, classification: bool) -> Vec<f64> {
    (0..d)
        .map(|_| {
            if classification {
                if rng.random::<bool>() { 1.0 } else { -1.0 }
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
        .collect()
}

pub fn instance(seed: u64, d: usize, n: usize, density: f64, classification: bool) -> (ColMatrix, Vec<f64>) {
    let mut rng = rng::seeded(seed);
    let m = random_matrix(&mut rng, d, n, density);
    let b = random_labels(&mut rng, d, classification);
    (m, b)
}

fn st(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Minimum of `½‖Aα − b‖² + Σ λ(η α_i²/2 + (1−η)|α_i|)` by plain cyclic coordinate
/// descent on dense columns, run until a sweep moves no coordinate by more than `tol`.
pub fn brute_force_least_squares(m: &ColMatrix, b: &[f64], lambda: f64, eta: f64, tol: f64) -> (Vec<f64>, f64) {
    let rows = m.to_dense_rows();
    let (d, n) = (m.n_rows(), m.n_cols());
    let cols: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|r| rows[r][i]).collect()).collect();
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    let mut alpha = vec![0.0; n];
    let mut resid: Vec<f64> = b.iter().map(|x| -x).collect();
    for _ in 0..200_000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            if sq[i] == 0.0 {
                continue;
            }
            let g: f64 = cols[i].iter().zip(&resid).map(|(a, r)| a * r).sum();
            let next = st(sq[i] * alpha[i] - g, lambda * (1.0 - eta)) / (sq[i] + lambda * eta);
            let dx = next - alpha[i];
            if dx != 0.0 {
                for (r, a) in resid.iter_mut().zip(&cols[i]) {
                    *r += dx * a;
                }
                alpha[i] = next;
                moved = moved.max(dx.abs());
            }
        }
        if moved < tol {
            break;
        }
    }
    let fit: f64 = 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
    let reg: f64 = alpha.iter().map(|a| lambda * (0.5 * eta * a * a + (1.0 - eta) * a.abs())).sum();
    (alpha, fit + reg)
}
