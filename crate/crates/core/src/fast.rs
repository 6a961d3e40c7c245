//! Transform-based fast ring multiplication.
//!
//! A fast algorithm replaces the `n²` real products of `G x` by
//!
//! ```text
//! g̃ = T_g g,   x̃ = T_x x,   z̃ = g̃ ∘ x̃ (m products),   z = T_z z̃
//! ```
//!
//! and is correct exactly when `M[i][k][j] = Σ_r T_z[i][r] T_g[r][k] T_x[r][j]`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Result, RingError};
use crate::ring::{basis_matrices, ring_multiply, IndexingTensor, RingElement, RingSpec};
use crate::rng;

pub const DECOMPOSITION_TOL: f64 = 1e-10;

/// Seed of the random linear combination used to diagonalize `Σ c_k E_k`.
pub const PROBE_SEED: u64 = 0x5EED_0A16;
const PROBE_ATTEMPTS: usize = 8;
const EIGEN_GAP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FastAlgorithm {
    n: usize,
    m: usize,
    t_g: DMatrix<f64>,
    t_x: DMatrix<f64>,
    t_z: DMatrix<f64>,
}

impl FastAlgorithm {
    /// `t_g`, `t_x` are `m×n`; `t_z` is `n×m`.
    pub fn new(t_g: DMatrix<f64>, t_x: DMatrix<f64>, t_z: DMatrix<f64>) -> Result<Self> {
        let (m, n) = t_g.shape();
        if t_x.shape() != (m, n) || t_z.shape() != (n, m) {
            return Err(RingError::ShapeMismatch(alloc::format!(
                "T_g {:?}, T_x {:?}, T_z {:?}",
                t_g.shape(),
                t_x.shape(),
                t_z.shape()
            )));
        }
        Ok(Self { n, m, t_g, t_x, t_z })
    }

    pub fn identity(n: usize) -> Self {
        let i = DMatrix::identity(n, n);
        Self { n, m: n, t_g: i.clone(), t_x: i.clone(), t_z: i }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of real products per ring multiplication.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t_g(&self) -> &DMatrix<f64> {
        &self.t_g
    }

    pub fn t_x(&self) -> &DMatrix<f64> {
        &self.t_x
    }

    pub fn t_z(&self) -> &DMatrix<f64> {
        &self.t_z
    }

    /// `Σ_r T_z[i][r] T_g[r][k] T_x[r][j]`, flattened `[i][k][j]`.
    pub fn decomposed(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[(i * n + k) * n + j] =
                        (0..self.m).map(|r| self.t_z[(i, r)] * self.t_g[(r, k)] * self.t_x[(r, j)]).sum();
                }
            }
        }
        out
    }

    pub fn decomposition_deviation(&self, m: &IndexingTensor) -> f64 {
        if m.n() != self.n {
            return f64::INFINITY;
        }
        self.decomposed().iter().zip(m.entries()).fold(0.0, |acc, (a, &b)| acc.max(libm::fabs(a - f64::from(b))))
    }

    pub fn transform_weight(&self, g: &[f64]) -> Vec<f64> {
        apply_rows(&self.t_g, g)
    }

    pub fn transform_data(&self, x: &[f64]) -> Vec<f64> {
        apply_rows(&self.t_x, x)
    }

    pub fn reconstruct(&self, zt: &[f64]) -> Vec<f64> {
        apply_rows(&self.t_z, zt)
    }

    pub fn apply(&self, g: &[f64], x: &[f64]) -> Vec<f64> {
        self.apply_pretransformed(&self.transform_weight(g), x)
    }

    /// Fast product with a cached `g̃ = T_g g`.
    pub fn apply_pretransformed(&self, gt: &[f64], x: &[f64]) -> Vec<f64> {
        let xt = self.transform_data(x);
        let zt: Vec<f64> = gt.iter().zip(&xt).map(|(a, b)| a * b).collect();
        self.reconstruct(&zt)
    }

    /// Integer view: `T_g`, `T_x` integral and `T_z = Z / 2^shift` with `Z`
    /// integral. `None` if the transforms are not of that form.
    pub fn integer_form(&self) -> Option<IntegerTransforms> {
        let t_g = integral(&self.t_g)?;
        let t_x = integral(&self.t_x)?;
        for shift in 0..=16u32 {
            let scale = f64::from(1u32 << shift);
            if let Some(t_z) = integral(&(self.t_z.clone() * scale)) {
                return Some(IntegerTransforms { n: self.n, m: self.m, t_g, t_x, t_z, t_z_shift: shift });
            }
        }
        None
    }
}

/// `y_r = Σ_j T[r][j] v_j`, accumulated in column order and skipping zero
/// coefficients so identity transforms pass values through bit-exactly.
fn apply_rows(t: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..t.nrows())
        .map(|r| {
            let mut acc = 0.0;
            for (j, vj) in v.iter().enumerate() {
                let c = t[(r, j)];
                if c != 0.0 {
                    acc += c * vj;
                }
            }
            acc
        })
        .collect()
}

fn integral(t: &DMatrix<f64>) -> Option<Vec<i64>> {
    let mut out = Vec::with_capacity(t.len());
    for r in 0..t.nrows() {
        for c in 0..t.ncols() {
            let v = t[(r, c)];
            let rounded = libm::round(v);
            if libm::fabs(v - rounded) > 1e-12 || libm::fabs(rounded) > 1e6 {
                return None;
            }
            out.push(rounded as i64);
        }
    }
    Some(out)
}

/// Row-major integer transforms of a fast algorithm.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerTransforms {
    pub n: usize,
    pub m: usize,
    /// `m×n`
    pub t_g: Vec<i64>,
    /// `m×n`
    pub t_x: Vec<i64>,
    /// `n×m`, scaled by `2^t_z_shift`
    pub t_z: Vec<i64>,
    pub t_z_shift: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FastVerifyReport {
    pub pass: bool,
    /// Entrywise deviation of the decomposition identity.
    pub identity_deviation: f64,
    /// Max deviation from `ring_multiply` over the random trials.
    pub sample_deviation: f64,
}

pub fn verify_fast(spec: &RingSpec, alg: &FastAlgorithm, trials: usize, seed: u64) -> Result<FastVerifyReport> {
    if alg.n() != spec.n() {
        return Err(RingError::ShapeMismatch(alloc::format!(
            "algorithm has n={}, ring has n={}",
            alg.n(),
            spec.n()
        )));
    }
    let identity_deviation = alg.decomposition_deviation(spec.m_tensor());
    let mut rng = rng::seeded(seed);
    let mut sample_deviation: f64 = 0.0;
    for _ in 0..trials {
        let g = RingElement::random(spec.n(), &mut rng);
        let x = RingElement::random(spec.n(), &mut rng);
        let direct = ring_multiply(spec, &g, &x)?;
        let fast = RingElement(alg.apply(&g.0, &x.0));
        sample_deviation = sample_deviation.max(direct.max_abs_diff(&fast));
    }
    Ok(FastVerifyReport {
        pass: identity_deviation <= DECOMPOSITION_TOL && sample_deviation <= DECOMPOSITION_TOL,
        identity_deviation,
        sample_deviation,
    })
}

pub fn apply_fast(alg: &FastAlgorithm, g: &RingElement, x: &RingElement) -> Result<RingElement> {
    for e in [g, x] {
        if e.n() != alg.n() {
            return Err(RingError::DimensionMismatch { expected: alg.n(), got: e.n() });
        }
    }
    Ok(RingElement(alg.apply(&g.0, &x.0)))
}

/// Numerical rank of `G` at a random weight, singular-value threshold 1e-9.
pub fn generic_rank(spec: &RingSpec, seed: u64) -> usize {
    let mut rng = rng::seeded(seed);
    let g = rng::normal_vec(&mut rng, spec.n());
    let gm = crate::ring::isomorphic_matrix_of(spec.m_tensor(), &g);
    let sv = gm.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max).max(1.0);
    sv.iter().filter(|&&s| s > 1e-9 * top).count()
}

/// One simultaneous eigen-direction of the basis matrices: `u G(g) = λ(g) u`
/// with `λ(g) = l · g`. `w` is the matching column of the inverse of the
/// eigenvector matrix.
struct Character {
    u: Vec<Complex64>,
    l: Vec<Complex64>,
    w: Vec<Complex64>,
    lambda: Complex64,
}

fn characters(spec: &RingSpec, allow_complex: bool) -> Result<Vec<Character>> {
    let n = spec.n();
    let basis = basis_matrices(spec);
    if !basis.pairwise_commuting() {
        return Err(RingError::NotSimultaneouslyDiagonalizable);
    }
    let es: Vec<DMatrix<f64>> = (0..n).map(|k| basis.to_dmatrix(k)).collect();
    for attempt in 0..PROBE_ATTEMPTS {
        let mut rng = rng::seeded(PROBE_SEED + attempt as u64);
        let c = rng::normal_vec(&mut rng, n);
        let probe = es.iter().zip(&c).fold(DMatrix::zeros(n, n), |acc, (e, ck)| acc + e * *ck);
        let eig = probe.complex_eigenvalues();
        let scale = eig.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if !allow_complex && eig.iter().any(|z| libm::fabs(z.im) > 1e-9 * scale) {
            return Err(RingError::NotRealDiagonalizable);
        }
        let degenerate =
            (0..n).any(|a| (a + 1..n).any(|b| (eig[a] - eig[b]).norm() < EIGEN_GAP * scale));
        if degenerate {
            continue;
        }
        let probe_t = probe.transpose().map(|v| Complex64::new(v, 0.0));
        let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        for lambda in eig.iter() {
            let shifted = &probe_t - DMatrix::<Complex64>::identity(n, n) * *lambda;
            rows.push(normalize_row(null_vector(shifted)));
        }
        let w = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
        let w_inv = w.clone().try_inverse().ok_or(RingError::NotSimultaneouslyDiagonalizable)?;
        let mut out = Vec::with_capacity(n);
        for (r, lambda) in eig.iter().enumerate() {
            let mut l = vec![Complex64::new(0.0, 0.0); n];
            for (k, e) in es.iter().enumerate() {
                let ec = e.map(|v| Complex64::new(v, 0.0));
                let d = &w * ec * &w_inv;
                for c in 0..n {
                    if c != r && d[(r, c)].norm() > 1e-8 {
                        return Err(RingError::NotSimultaneouslyDiagonalizable);
                    }
                }
                l[k] = snap_c(d[(r, r)]);
            }
            out.push(Character {
                u: rows[r].iter().map(|&z| snap_c(z)).collect(),
                l,
                w: (0..n).map(|i| snap_c(w_inv[(i, r)])).collect(),
                lambda: *lambda,
            });
        }
        return Ok(out);
    }
    Err(RingError::DegenerateSpectrum { attempts: PROBE_ATTEMPTS })
}

/// Right singular vector of the smallest singular value.
fn null_vector(a: DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.ncols();
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    (0..n).map(|j| v_t[(idx, j)].conj()).collect()
}

/// Scale so the unity coordinate is 1 (or the largest entry when it vanishes).
fn normalize_row(v: Vec<Complex64>) -> Vec<Complex64> {
    let pivot = if v[0].norm() > 1e-9 {
        v[0]
    } else {
        v.iter().cloned().fold(Complex64::new(0.0, 0.0), |a, b| if b.norm() > a.norm() + 1e-12 { b } else { a })
    };
    v.into_iter().map(|z| z / pivot).collect()
}

/// Round values within 1e-9 of a dyadic rational with ≤20 fraction bits.
fn snap(x: f64) -> f64 {
    let scale = (1u64 << 20) as f64;
    let s = libm::round(x * scale) / scale;
    if libm::fabs(s - x) < 1e-9 {
        s
    } else {
        x
    }
}

fn snap_c(z: Complex64) -> Complex64 {
    Complex64::new(snap(z.re), snap(z.im))
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Minimal algorithm (`m = rank G`) for rings whose generic isomorphic matrix
/// is diagonalizable over the reals: `T_x = T`, `T_z = T⁻¹` and
/// `(T_g)_ij = (T E_j T⁻¹)_ii`. Rows are sorted lexicographically by `T_x`.
pub fn minimal_algorithm(spec: &RingSpec) -> Result<FastAlgorithm> {
    let chars = characters(spec, false)?;
    let n = spec.n();
    let mut rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = chars
        .iter()
        .filter(|c| c.l.iter().any(|z| z.norm() > 1e-9))
        .map(|c| {
            (
                c.u.iter().map(|z| z.re).collect(),
                c.l.iter().map(|z| z.re).collect(),
                c.w.iter().map(|z| z.re).collect(),
            )
        })
        .collect();
    rows.sort_by(|a, b| lex(&a.0, &b.0));
    let alg = assemble(n, &rows)?;
    finish(spec, alg)
}

/// Fast algorithm for commutative rings diagonalizable over ℂ: one product per
/// real character and Gauss's three products per conjugate pair.
pub fn character_algorithm(spec: &RingSpec) -> Result<FastAlgorithm> {
    let chars = characters(spec, true)?;
    let n = spec.n();
    let tol = 1e-9;
    let mut real_rows = Vec::new();
    let mut pairs = Vec::new();
    for c in chars.iter().filter(|c| c.l.iter().any(|z| z.norm() > tol)) {
        let first_imag = c.u.iter().find(|z| libm::fabs(z.im) > tol);
        match first_imag {
            None if libm::fabs(c.lambda.im) <= tol * (1.0 + c.lambda.norm()) => real_rows.push((
                c.u.iter().map(|z| z.re).collect::<Vec<_>>(),
                c.l.iter().map(|z| z.re).collect::<Vec<_>>(),
                c.w.iter().map(|z| z.re).collect::<Vec<_>>(),
            )),
            Some(z) if z.im > 0.0 => pairs.push(c),
            _ => {}
        }
    }
    real_rows.sort_by(|a, b| lex(&a.0, &b.0));
    let re = |v: &[Complex64]| v.iter().map(|z| z.re).collect::<Vec<_>>();
    let im = |v: &[Complex64]| v.iter().map(|z| z.im).collect::<Vec<_>>();
    pairs.sort_by(|a, b| lex(&re(&a.u), &re(&b.u)));
    let mut rows = real_rows;
    for c in pairs {
        let (ur, ui, lr, li, wr, wi) = (re(&c.u), im(&c.u), re(&c.l), im(&c.l), re(&c.w), im(&c.w));
        let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let col1 = wr.iter().zip(&wi).map(|(r, i)| 2.0 * (r + i)).collect();
        let col2 = wr.iter().zip(&wi).map(|(r, i)| 2.0 * (i - r)).collect();
        let col3 = wi.iter().map(|i| -2.0 * i).collect();
        rows.push((ur.clone(), lr.clone(), col1));
        rows.push((ui.clone(), li.clone(), col2));
        rows.push((sum(&ur, &ui), sum(&lr, &li), col3));
    }
    let alg = assemble(n, &rows)?;
    finish(spec, alg)
}

fn assemble(n: usize, rows: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> Result<FastAlgorithm> {
    let m = rows.len();
    let t_x = DMatrix::from_fn(m, n, |r, c| snap(rows[r].0[c]));
    let t_g = DMatrix::from_fn(m, n, |r, c| snap(rows[r].1[c]));
    let t_z = DMatrix::from_fn(n, m, |i, r| snap(rows[r].2[i]));
    FastAlgorithm::new(t_g, t_x, t_z)
}

fn finish(spec: &RingSpec, alg: FastAlgorithm) -> Result<FastAlgorithm> {
    let report = verify_fast(spec, &alg, 100, PROBE_SEED)?;
    if !report.pass {
        return Err(RingError::DecompositionMismatch {
            deviation: report.identity_deviation.max(report.sample_deviation),
        });
    }
    Ok(alg)
}

/// Storage, multiplication and multiplier-area accounting of a fast algorithm
/// relative to a dense real `n×n` block.
#[derive(Clone, Debug, PartialEq)]
pub struct CostProfile {
    pub n: usize,
    /// Independent real weights per ring multiplication.
    pub dof: usize,
    pub real_mults: usize,
    /// `n² / dof`
    pub storage_efficiency: f64,
    /// `n² / m`
    pub mult_efficiency: f64,
    pub input_bits: u32,
    /// Widths of `g̃` and `x̃` for `input_bits`-wide `g` and `x`.
    pub bitwidth_pair: (u32, u32),
    /// `n² w² / (m w_g w_x)` at `input_bits`.
    pub multiplier_efficiency: f64,
    /// Same quantity at 8-bit inputs.
    pub complexity_8bit: f64,
}

/// Bits gained by a row: `ceil(log2(Σ_j |T[r][j]|))`, never negative.
fn row_growth(t: &DMatrix<f64>) -> u32 {
    (0..t.nrows())
        .map(|r| {
            let s: f64 = t.row(r).iter().map(|v| libm::fabs(*v)).sum();
            if s <= 1.0 {
                0
            } else {
                libm::ceil(libm::log2(s) - 1e-12) as u32
            }
        })
        .max()
        .unwrap_or(0)
}

pub fn cost_profile(spec: &RingSpec, alg: &FastAlgorithm, w: u32) -> CostProfile {
    let n = spec.n();
    let m = spec.m_tensor();
    let dof = (0..n).filter(|&k| (0..n).any(|i| (0..n).any(|j| m.get(i, k, j) != 0))).count();
    let (grow_g, grow_x) = (row_growth(alg.t_g()), row_growth(alg.t_x()));
    let nn = (n * n) as f64;
    let mults = alg.m() as f64;
    let eff = |bits: u32| {
        let b = f64::from(bits);
        nn * b * b / (mults * (b + f64::from(grow_g)) * (b + f64::from(grow_x)))
    };
    CostProfile {
        n,
        dof,
        real_mults: alg.m(),
        storage_efficiency: nn / dof as f64,
        mult_efficiency: nn / mults,
        input_bits: w,
        bitwidth_pair: (w + grow_g, w + grow_x),
        multiplier_efficiency: eff(w),
        complexity_8bit: eff(8),
    }
}
