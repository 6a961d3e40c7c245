//! CP decomposition of `n×n×n` tensors by alternating least squares.
//!
//! A fit `M ≈ Σ_r a_r ⊗ b_r ⊗ c_r` with relative residual below [`FIT_TOL`]
//! certifies that `r` real products suffice. Failing to find one is only
//! evidence: ALS can miss decompositions.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::ring::IndexingTensor;
use crate::rng;

pub const FIT_TOL: f64 = 1e-8;
pub const DEFAULT_RESTARTS: usize = 50;
pub const MAX_ITERATIONS: usize = 2000;
/// Relative change of the residual below which a run is considered stalled.
pub const STALL_TOL: f64 = 1e-12;
/// Residual at which a run stops early; well below `FIT_TOL`.
const EXACT_TOL: f64 = 1e-14;

/// Best factorization found at a trial rank. Factors are `n×r` with mode
/// order `[i][k][j]` of the indexing tensor: `M[i][k][j] ≈ Σ_r A_ir B_kr C_jr`.
#[derive(Clone, Debug, PartialEq)]
pub struct CpFit {
    pub rank: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// `‖M − [[A,B,C]]‖_F / ‖M‖_F`
    pub residual: f64,
    pub restarts_used: usize,
}

impl CpFit {
    pub fn certifies(&self) -> bool {
        self.residual < FIT_TOL
    }
}

/// Flat row-major factor triple used inside the solver.
#[derive(Clone)]
struct Factors {
    n: usize,
    r: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl Factors {
    fn random(n: usize, r: usize, seed: u64) -> Self {
        let mut g = rng::seeded(seed);
        let a = rng::normal_vec(&mut g, n * r);
        let b = rng::normal_vec(&mut g, n * r);
        let c = rng::normal_vec(&mut g, n * r);
        Self { n, r, a, b, c }
    }

    /// Append one column: zero in `A` (so the residual is unchanged) and
    /// random in `B`, `C` (so the first `A` update can use it).
    fn padded(&self, seed: u64) -> Self {
        let (n, r) = (self.n, self.r);
        let mut g = rng::seeded(seed);
        let widen = |m: &[f64], fill: &mut dyn FnMut() -> f64| {
            let mut out = Vec::with_capacity(n * (r + 1));
            for row in 0..n {
                out.extend_from_slice(&m[row * r..(row + 1) * r]);
                out.push(fill());
            }
            out
        };
        let a = widen(&self.a, &mut || 0.0);
        let b = widen(&self.b, &mut || rng::normal(&mut g));
        let c = widen(&self.c, &mut || rng::normal(&mut g));
        Self { n, r: r + 1, a, b, c }
    }

    fn into_fit(self, residual: f64, restarts_used: usize) -> CpFit {
        let (n, r) = (self.n, self.r);
        CpFit {
            rank: r,
            a: DMatrix::from_row_slice(n, r, &self.a),
            b: DMatrix::from_row_slice(n, r, &self.b),
            c: DMatrix::from_row_slice(n, r, &self.c),
            residual,
            restarts_used,
        }
    }
}

struct Problem {
    n: usize,
    dense: Vec<f64>,
    /// `(i, k, j, value)` of the nonzero entries.
    nz: Vec<(usize, usize, usize, f64)>,
    norm: f64,
}

impl Problem {
    fn new(m: &IndexingTensor) -> Self {
        let dense = m.to_f64();
        let norm = libm::sqrt(dense.iter().map(|v| v * v).sum::<f64>());
        Self { n: m.n(), dense, nz: m.nonzeros(), norm }
    }

    fn residual(&self, f: &Factors) -> f64 {
        let (n, r) = (self.n, f.r);
        let mut err = 0.0;
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    let mut x = 0.0;
                    for q in 0..r {
                        x += f.a[i * r + q] * f.b[k * r + q] * f.c[j * r + q];
                    }
                    let d = self.dense[(i * n + k) * n + j] - x;
                    err += d * d;
                }
            }
        }
        if self.norm == 0.0 {
            libm::sqrt(err)
        } else {
            libm::sqrt(err) / self.norm
        }
    }

    /// One ALS sweep: update A, then B, then C, each by exact least squares.
    fn sweep(&self, f: &mut Factors) {
        let (n, r) = (self.n, f.r);
        let mut v = vec![0.0; n * r];
        let mut gram = vec![0.0; r * r];
        for mode in 0..3 {
            v.iter_mut().for_each(|e| *e = 0.0);
            for &(i, k, j, val) in &self.nz {
                let (row, p, q) = match mode {
                    0 => (i, &f.b[k * r..], &f.c[j * r..]),
                    1 => (k, &f.a[i * r..], &f.c[j * r..]),
                    _ => (j, &f.a[i * r..], &f.b[k * r..]),
                };
                for s in 0..r {
                    v[row * r + s] += val * p[s] * q[s];
                }
            }
            let (p, q) = match mode {
                0 => (&f.b, &f.c),
                1 => (&f.a, &f.c),
                _ => (&f.a, &f.b),
            };
            gram_hadamard(n, r, p, q, &mut gram);
            let target = match mode {
                0 => &mut f.a,
                1 => &mut f.b,
                _ => &mut f.c,
            };
            solve_rows(r, &gram, &v, target);
        }
    }

    fn run(&self, mut f: Factors) -> (Factors, f64) {
        let mut prev = self.residual(&f);
        for _ in 0..MAX_ITERATIONS {
            let before = f.clone();
            self.sweep(&mut f);
            let res = self.residual(&f);
            if !res.is_finite() {
                return (before, prev);
            }
            let stalled = libm::fabs(prev - res) < STALL_TOL * prev.max(1e-300);
            prev = res;
            if res < EXACT_TOL || stalled {
                break;
            }
        }
        (f, prev)
    }
}

/// `(PᵀP) ∘ (QᵀQ)` for row-major `n×r` factors.
fn gram_hadamard(n: usize, r: usize, p: &[f64], q: &[f64], out: &mut [f64]) {
    for s in 0..r {
        for t in s..r {
            let (mut pp, mut qq) = (0.0, 0.0);
            for row in 0..n {
                pp += p[row * r + s] * p[row * r + t];
                qq += q[row * r + s] * q[row * r + t];
            }
            out[s * r + t] = pp * qq;
            out[t * r + s] = pp * qq;
        }
    }
}

/// Solve `X Γ = V` row by row for symmetric `Γ`: Cholesky when positive
/// definite, otherwise the minimum-norm least-squares solution.
fn solve_rows(r: usize, gram: &[f64], v: &[f64], x: &mut [f64]) {
    if let Some(l) = cholesky(r, gram) {
        for (row_v, row_x) in v.chunks(r).zip(x.chunks_mut(r)) {
            let mut y = row_v.to_vec();
            for s in 0..r {
                let mut acc = y[s];
                for t in 0..s {
                    acc -= l[s * r + t] * y[t];
                }
                y[s] = acc / l[s * r + s];
            }
            for s in (0..r).rev() {
                let mut acc = y[s];
                for t in s + 1..r {
                    acc -= l[t * r + s] * y[t];
                }
                y[s] = acc / l[s * r + s];
            }
            row_x.copy_from_slice(&y);
        }
        return;
    }
    let g = DMatrix::from_row_slice(r, r, gram);
    let pinv = g.pseudo_inverse(1e-13).unwrap_or_else(|_| DMatrix::zeros(r, r));
    let rows = v.len() / r;
    let vm = DMatrix::from_row_slice(rows, r, v);
    let sol = vm * pinv;
    for row in 0..rows {
        for s in 0..r {
            x[row * r + s] = sol[(row, s)];
        }
    }
}

fn cholesky(r: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; r * r];
    let scale = (0..r).map(|s| a[s * r + s]).fold(0.0, f64::max);
    for s in 0..r {
        for t in 0..=s {
            let mut acc = a[s * r + t];
            for u in 0..t {
                acc -= l[s * r + u] * l[t * r + u];
            }
            if s == t {
                if acc <= 1e-12 * scale || !acc.is_finite() {
                    return None;
                }
                l[s * r + s] = libm::sqrt(acc);
            } else {
                l[s * r + t] = acc / l[t * r + t];
            }
        }
    }
    Some(l)
}

/// Restart seed for `(rank, restart)`; independent of evaluation order.
fn restart_seed(seed: u64, r: usize, restart: usize) -> u64 {
    rng::derive(seed, r as u64, restart as u64, 0)
}

fn best_of(problem: &Problem, r: usize, restarts: usize, seed: u64, warm: Option<Factors>) -> CpFit {
    let mut best: Option<(Factors, f64)> = None;
    let mut used = 0;
    let starts = warm.into_iter().chain((0..restarts).map(|q| Factors::random(problem.n, r, restart_seed(seed, r, q))));
    for start in starts.take(restarts.max(1)) {
        used += 1;
        let (f, res) = problem.run(start);
        if best.as_ref().map_or(true, |(_, b)| res < *b) {
            best = Some((f, res));
        }
        if best.as_ref().is_some_and(|(_, b)| *b < FIT_TOL) {
            break;
        }
    }
    let (f, res) = best.expect("at least one start");
    f.into_fit(res, used)
}

/// Best-of-`restarts` ALS fit at rank `r` from Gaussian initializations.
/// Deterministic in `seed`; stops early once a fit certifies.
pub fn cp_rank_fit(m: &IndexingTensor, r: usize, restarts: usize, seed: u64) -> CpFit {
    assert!(r >= 1, "trial rank must be positive");
    best_of(&Problem::new(m), r, restarts, seed, None)
}

/// Fits at every rank in `ranks` (ascending). From the second rank on, the
/// first start is the previous best padded with a zero column, so the best
/// residual never increases with the rank.
pub fn rank_profile(
    m: &IndexingTensor,
    ranks: core::ops::RangeInclusive<usize>,
    restarts: usize,
    seed: u64,
    mut stop: impl FnMut(&CpFit) -> bool,
) -> Vec<CpFit> {
    let problem = Problem::new(m);
    let mut fits: Vec<CpFit> = Vec::new();
    for r in ranks {
        assert!(r >= 1, "trial rank must be positive");
        let warm = fits.last().filter(|f| f.rank + 1 == r).map(|f| {
            let flat = |x: &DMatrix<f64>| (0..x.nrows()).flat_map(|i| (0..x.ncols()).map(move |q| (i, q))).map(|(i, q)| x[(i, q)]).collect();
            let prev = Factors { n: problem.n, r: f.rank, a: flat(&f.a), b: flat(&f.b), c: flat(&f.c) };
            prev.padded(rng::derive(seed, r as u64, u64::MAX, 1))
        });
        let fit = best_of(&problem, r, restarts, seed, warm);
        let done = stop(&fit);
        fits.push(fit);
        if done {
            break;
        }
    }
    fits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn reconstruct(f: &CpFit, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n * n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[(i * n + k) * n + j] = (0..f.rank).map(|q| f.a[(i, q)] * f.b[(k, q)] * f.c[(j, q)]).sum();
                }
            }
        }
        out
    }

    #[test]
    fn complex_needs_three_products() {
        let m = catalog::complex().m_tensor().clone();
        let fit3 = cp_rank_fit(&m, 3, 50, 1);
        assert!(fit3.residual < FIT_TOL, "{}", fit3.residual);
        let fit2 = cp_rank_fit(&m, 2, 50, 1);
        assert!(fit2.residual > 1e-3, "{}", fit2.residual);
        assert_eq!(fit2.restarts_used, 50);
    }

    #[test]
    fn component_wise_is_exact_at_n() {
        let m = catalog::r_i(4).m_tensor().clone();
        let fit = cp_rank_fit(&m, 4, 50, 2);
        assert!(fit.residual < 1e-12, "{}", fit.residual);
    }

    #[test]
    fn reported_residual_matches_factors() {
        let m = catalog::r_h4_i().m_tensor().clone();
        let fit = cp_rank_fit(&m, 5, 20, 3);
        let rec = reconstruct(&fit, 4);
        let err: f64 = rec.iter().zip(m.to_f64()).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((libm::sqrt(err) / 4.0 - fit.residual).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = catalog::quaternion().m_tensor().clone();
        assert_eq!(cp_rank_fit(&m, 6, 3, 9), cp_rank_fit(&m, 6, 3, 9));
    }

    #[test]
    fn warm_started_profile_is_monotone() {
        let m = catalog::quaternion().m_tensor().clone();
        let fits = rank_profile(&m, 2..=8, 4, 5, |_| false);
        assert_eq!(fits.len(), 7);
        for w in fits.windows(2) {
            assert!(w[1].residual <= w[0].residual + 1e-15, "{} -> {}", w[0].residual, w[1].residual);
        }
    }
}
