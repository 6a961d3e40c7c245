//! Rings over real n-tuples defined by a bilinear indexing tensor.
//!
//! A ring multiplication `z = g · x` distributes every sub-product `g_k x_j`
//! to output components through a tensor `M` with entries in {-1, 0, 1}:
//!
//! ```text
//! z_i = Σ_j Σ_k M[i][k][j] · g_k · x_j
//! ```
//!
//! Fixing the weight `g` turns the product into a matrix-vector product
//! `z = G x` with `G_ij = Σ_k M[i][k][j] g_k`. Everything else in the crate
//! (fast algorithms, ring convolution, gradients) is checked against the
//! direct evaluation in this module.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::error::{Result, RingError};
use crate::fast::FastAlgorithm;
use crate::rng;
use crate::tensor::DirectionalRelu;

/// The 3-D tensor `M[i][k][j]` (output `i`, weight `k`, data `j`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IndexingTensor {
    n: usize,
    entries: Vec<i8>,
}

impl IndexingTensor {
    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0; n * n * n] }
    }

    /// Build from a flat `[i][k][j]` array, validating every entry.
    pub fn from_entries(n: usize, entries: &[i64]) -> Result<Self> {
        if entries.len() != n * n * n {
            return Err(RingError::DimensionMismatch { expected: n * n * n, got: entries.len() });
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    let value = entries[(i * n + k) * n + j];
                    if !(-1..=1).contains(&value) {
                        return Err(RingError::InvalidEntry { i, k, j, value });
                    }
                    m.set(i, k, j, value as i8);
                }
            }
        }
        Ok(m)
    }

    /// Tensor of an exclusive distribution: `M[i][P_ij][j] = S_ij`.
    pub fn from_sign_perm(n: usize, signs: &[i8], perm: &[usize]) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, perm[i * n + j], j, signs[i * n + j]);
            }
        }
        m
    }

    /// Identity-transform ring: `z_i = g_i x_i`.
    pub fn component_wise(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, i, 1);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize, j: usize) -> i8 {
        self.entries[(i * self.n + k) * self.n + j]
    }

    pub fn set(&mut self, i: usize, k: usize, j: usize, value: i8) {
        let n = self.n;
        self.entries[(i * n + k) * n + j] = value;
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    /// Nonzero entries as `(i, k, j, sign)` in row-major order.
    pub fn nonzeros(&self) -> Vec<(usize, usize, usize, f64)> {
        let n = self.n;
        let mut out = Vec::new();
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    let v = self.get(i, k, j);
                    if v != 0 {
                        out.push((i, k, j, f64::from(v)));
                    }
                }
            }
        }
        out
    }

    /// First sub-product `(k, j)` distributed to more than one output, with
    /// the number of outputs it reaches. Sub-products that are dropped
    /// entirely (the off-diagonal ones of `R_I`) only reduce the support.
    pub fn exclusivity_violation(&self) -> Option<(usize, usize, usize)> {
        let n = self.n;
        for k in 0..n {
            for j in 0..n {
                let outputs = (0..n).filter(|&i| self.get(i, k, j) != 0).count();
                if outputs > 1 {
                    return Some((k, j, outputs));
                }
            }
        }
        None
    }

    /// Every sub-product reaches exactly one output.
    pub fn is_full_support(&self) -> bool {
        let n = self.n;
        (0..n).all(|k| (0..n).all(|j| (0..n).filter(|&i| self.get(i, k, j) != 0).count() == 1))
    }

    pub fn is_exclusive(&self) -> bool {
        self.exclusivity_violation().is_none()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&v| f64::from(v)).collect()
    }
}

impl fmt::Debug for IndexingTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IndexingTensor(n={}, ", self.n)?;
        f.debug_list().entries(self.entries.iter()).finish()?;
        write!(f, ")")
    }
}

/// A ring element: `n` real components.
#[derive(Clone, Debug, PartialEq)]
pub struct RingElement(pub Vec<f64>);

impl RingElement {
    pub fn new(components: Vec<f64>) -> Self {
        Self(components)
    }

    pub fn zero(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// `(1, 0, …, 0)`, the unity of every ring satisfying C1.
    pub fn unity(n: usize) -> Self {
        let mut v = vec![0.0; n];
        if n > 0 {
            v[0] = 1.0;
        }
        Self(v)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn random(n: usize, rng: &mut rng::SeededRng) -> Self {
        Self(rng::normal_vec(rng, n))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|v| v * alpha).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).fold(0.0, |m, (a, b)| m.max(libm::fabs(a - b)))
    }
}

impl From<&[f64]> for RingElement {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

/// Non-linearity attached to a ring.
#[derive(Clone, Debug, PartialEq)]
pub enum RingNonlinearity {
    ComponentWise,
    Directional(DirectionalRelu),
}

/// A named ring: indexing tensor, optional fast algorithm and non-linearity.
#[derive(Clone, Debug, PartialEq)]
pub struct RingSpec {
    pub name: String,
    m: IndexingTensor,
    exclusive: bool,
    fast: Option<FastAlgorithm>,
    pub nonlinearity: RingNonlinearity,
}

impl RingSpec {
    pub fn new(name: impl Into<String>, m: IndexingTensor) -> Self {
        let exclusive = m.is_exclusive();
        Self { name: name.into(), m, exclusive, fast: None, nonlinearity: RingNonlinearity::ComponentWise }
    }

    /// Attach a fast algorithm after checking its decomposition identity.
    pub fn with_fast(mut self, alg: FastAlgorithm) -> Result<Self> {
        if alg.n() != self.n() {
            return Err(RingError::DimensionMismatch { expected: self.n(), got: alg.n() });
        }
        let deviation = alg.decomposition_deviation(&self.m);
        if deviation > crate::fast::DECOMPOSITION_TOL {
            return Err(RingError::DecompositionMismatch { deviation });
        }
        self.fast = Some(alg);
        Ok(self)
    }

    /// Attach a fast algorithm without validation (used when loading files that
    /// are verified separately).
    pub fn with_fast_unchecked(mut self, alg: FastAlgorithm) -> Self {
        self.fast = Some(alg);
        self
    }

    pub fn n(&self) -> usize {
        self.m.n()
    }

    pub fn m_tensor(&self) -> &IndexingTensor {
        &self.m
    }

    pub fn is_exclusive(&self) -> bool {
        self.exclusive
    }

    pub fn fast(&self) -> Option<&FastAlgorithm> {
        self.fast.as_ref()
    }

    pub fn require_fast(&self) -> Result<&FastAlgorithm> {
        self.fast.as_ref().ok_or_else(|| RingError::MissingFastAlgorithm(self.name.clone()))
    }

    fn check_dim(&self, e: &RingElement) -> Result<()> {
        if e.n() != self.n() {
            return Err(RingError::DimensionMismatch { expected: self.n(), got: e.n() });
        }
        Ok(())
    }
}

/// Direct ring product by the triple loop over `M`. This is the reference
/// every other multiplication path is compared against.
pub fn ring_multiply(spec: &RingSpec, g: &RingElement, x: &RingElement) -> Result<RingElement> {
    spec.check_dim(g)?;
    spec.check_dim(x)?;
    let n = spec.n();
    let m = spec.m_tensor();
    let mut z = vec![0.0; n];
    for (i, zi) in z.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                let s = m.get(i, k, j);
                if s != 0 {
                    acc += f64::from(s) * g.0[k] * x.0[j];
                }
            }
        }
        *zi = acc;
    }
    Ok(RingElement(z))
}

/// `G_ij = Σ_k M[i][k][j] g_k`.
pub fn isomorphic_matrix(spec: &RingSpec, g: &RingElement) -> Result<DMatrix<f64>> {
    spec.check_dim(g)?;
    Ok(isomorphic_matrix_of(spec.m_tensor(), g.components()))
}

pub(crate) fn isomorphic_matrix_of(m: &IndexingTensor, g: &[f64]) -> DMatrix<f64> {
    let n = m.n();
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for (k, gk) in g.iter().enumerate() {
            let s = m.get(i, k, j);
            if s != 0 {
                acc += f64::from(s) * gk;
            }
        }
        acc
    })
}

/// Sign/index description `G_ij = S_ij · g_{P_ij}` of an exclusive ring.
/// Entries are `None` where `G_ij` is identically zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignPerm {
    pub n: usize,
    pub signs: Vec<Option<i8>>,
    pub index: Vec<Option<usize>>,
    pub full_support: bool,
}

impl SignPerm {
    pub fn sign(&self, i: usize, j: usize) -> Option<i8> {
        self.signs[i * self.n + j]
    }

    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        self.index[i * self.n + j]
    }

    /// Rebuild the indexing tensor.
    pub fn to_tensor(&self) -> IndexingTensor {
        let n = self.n;
        let mut m = IndexingTensor::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if let (Some(s), Some(k)) = (self.sign(i, j), self.index(i, j)) {
                    m.set(i, k, j, s);
                }
            }
        }
        m
    }

    /// Dense `S` and `P` for full-support rings.
    pub fn dense(&self) -> Option<(Vec<i8>, Vec<usize>)> {
        if !self.full_support {
            return None;
        }
        Some((
            self.signs.iter().map(|s| s.unwrap_or(0)).collect(),
            self.index.iter().map(|p| p.unwrap_or(0)).collect(),
        ))
    }
}

/// Recover `S` and `P` from an exclusive indexing tensor.
pub fn extract_sign_perm(spec: &RingSpec) -> Result<SignPerm> {
    let m = spec.m_tensor();
    if let Some((k, j, outputs)) = m.exclusivity_violation() {
        return Err(RingError::NotExclusive { k, j, outputs });
    }
    let n = m.n();
    let mut signs = vec![None; n * n];
    let mut index = vec![None; n * n];
    for i in 0..n {
        for j in 0..n {
            let hits: Vec<usize> = (0..n).filter(|&k| m.get(i, k, j) != 0).collect();
            match hits.as_slice() {
                [] => {}
                [k] => {
                    signs[i * n + j] = Some(m.get(i, *k, j));
                    index[i * n + j] = Some(*k);
                }
                // Two weights land on the same G_ij, so G is not a signed selection.
                _ => return Err(RingError::NotExclusive { k: hits[1], j, outputs: 1 }),
            }
        }
    }
    let full_support = index.iter().all(Option::is_some) && latin(n, &index);
    Ok(SignPerm { n, signs, index, full_support })
}

fn latin(n: usize, index: &[Option<usize>]) -> bool {
    let is_perm = |vals: &mut dyn Iterator<Item = usize>| {
        let mut seen = vec![false; n];
        for v in vals {
            if seen[v] {
                return false;
            }
            seen[v] = true;
        }
        true
    };
    (0..n).all(|i| is_perm(&mut (0..n).map(|j| index[i * n + j].unwrap_or(0))))
        && (0..n).all(|j| is_perm(&mut (0..n).map(|i| index[i * n + j].unwrap_or(0))))
}

/// The matrices `(E_k)_ij = M[i][k][j]`; the isomorphic matrix is `Σ_k g_k E_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedPermutationBasis {
    pub n: usize,
    pub matrices: Vec<Vec<i8>>,
}

impl SignedPermutationBasis {
    pub fn get(&self, k: usize, i: usize, j: usize) -> i8 {
        self.matrices[k][i * self.n + j]
    }

    pub fn to_dmatrix(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.get(k, i, j)))
    }

    /// True when `E_k` has exactly one nonzero per row and per column.
    pub fn is_signed_permutation(&self, k: usize) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).filter(|&j| self.get(k, i, j) != 0).count() == 1)
            && (0..n).all(|j| (0..n).filter(|&i| self.get(k, i, j) != 0).count() == 1)
    }

    pub fn is_symmetric(&self, k: usize) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).all(|j| self.get(k, i, j) == self.get(k, j, i)))
    }

    /// Integer product `E_a E_b`.
    pub fn product(&self, a: usize, b: usize) -> Vec<i64> {
        let n = self.n;
        let mut out = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] =
                    (0..n).map(|l| i64::from(self.get(a, i, l)) * i64::from(self.get(b, l, j))).sum();
            }
        }
        out
    }

    /// Exact check that `E_a E_b = E_b E_a` for every pair.
    pub fn pairwise_commuting(&self) -> bool {
        (0..self.n).all(|a| (a + 1..self.n).all(|b| self.product(a, b) == self.product(b, a)))
    }

    /// For each `k`, the `(k', sign)` with `E_kᵗ = sign · E_k'`, if the basis is
    /// closed under transposition.
    pub fn transpose_map(&self) -> Option<Vec<(usize, f64)>> {
        let n = self.n;
        (0..n)
            .map(|k| {
                (0..n).find_map(|kk| {
                    [1i8, -1].into_iter().find_map(|s| {
                        let hit = (0..n).all(|i| (0..n).all(|j| self.get(k, j, i) == s * self.get(kk, i, j)));
                        hit.then_some((kk, f64::from(s)))
                    })
                })
            })
            .collect()
    }
}

pub fn basis_matrices(spec: &RingSpec) -> SignedPermutationBasis {
    let m = spec.m_tensor();
    let n = m.n();
    let matrices = (0..n)
        .map(|k| {
            let mut e = vec![0i8; n * n];
            for i in 0..n {
                for j in 0..n {
                    e[i * n + j] = m.get(i, k, j);
                }
            }
            e
        })
        .collect();
    SignedPermutationBasis { n, matrices }
}

/// Element `gᵀ` whose isomorphic matrix is `G(g)ᵀ` (identity for symmetric
/// rings, circular folding for circulant rings, conjugation for ℂ and ℍ).
pub fn transpose_element(basis: &SignedPermutationBasis, g: &[f64]) -> Option<Vec<f64>> {
    let map = basis.transpose_map()?;
    let mut out = vec![0.0; basis.n];
    for (k, &(kk, s)) in map.iter().enumerate() {
        out[kk] += s * g[k];
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommutativityReport {
    pub elements_commute: bool,
    pub max_deviation: f64,
    pub basis_commutes: bool,
}

pub const COMMUTATIVITY_TOL: f64 = 1e-12;
pub const ASSOCIATIVITY_TOL: f64 = 1e-10;

pub fn check_commutativity(spec: &RingSpec, trials: usize, seed: u64) -> CommutativityReport {
    let n = spec.n();
    let mut rng = rng::seeded(seed);
    let mut max_deviation: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let g = RingElement::random(n, &mut rng);
        let x = RingElement::random(n, &mut rng);
        let gx = ring_multiply(spec, &g, &x).expect("dimensions match");
        let xg = ring_multiply(spec, &x, &g).expect("dimensions match");
        max_deviation = max_deviation.max(gx.max_abs_diff(&xg));
    }
    CommutativityReport {
        elements_commute: max_deviation < COMMUTATIVITY_TOL,
        max_deviation,
        basis_commutes: basis_matrices(spec).pairwise_commuting(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociativityReport {
    pub associative: bool,
    pub max_deviation: f64,
}

/// Checks `G(a·b) = G(a) G(b)`, which is equivalent to associativity.
pub fn check_associativity(spec: &RingSpec, trials: usize, seed: u64) -> AssociativityReport {
    let n = spec.n();
    let mut rng = rng::seeded(seed);
    let mut max_deviation: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let a = RingElement::random(n, &mut rng);
        let b = RingElement::random(n, &mut rng);
        let ab = ring_multiply(spec, &a, &b).expect("dimensions match");
        let lhs = isomorphic_matrix_of(spec.m_tensor(), ab.components());
        let rhs = isomorphic_matrix_of(spec.m_tensor(), a.components())
            * isomorphic_matrix_of(spec.m_tensor(), b.components());
        max_deviation = max_deviation.max((lhs - rhs).amax());
    }
    AssociativityReport { associative: max_deviation < ASSOCIATIVITY_TOL, max_deviation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn el(v: &[f64]) -> RingElement {
        RingElement::from(v)
    }

    #[test]
    fn complex_i_squared() {
        let c = catalog::complex();
        assert_eq!(ring_multiply(&c, &el(&[0.0, 1.0]), &el(&[0.0, 1.0])).unwrap(), el(&[-1.0, 0.0]));
    }

    #[test]
    fn identity_ring_is_component_wise() {
        let r = catalog::r_i(2);
        assert_eq!(ring_multiply(&r, &el(&[2.0, 3.0]), &el(&[5.0, 7.0])).unwrap(), el(&[10.0, 21.0]));
    }

    #[test]
    fn hamilton_i_times_j_is_k() {
        let h = catalog::quaternion();
        let z = ring_multiply(&h, &el(&[0.0, 1.0, 0.0, 0.0]), &el(&[0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(z, el(&[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let c = catalog::complex();
        assert!(matches!(
            ring_multiply(&c, &el(&[1.0]), &el(&[1.0, 2.0])),
            Err(RingError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(isomorphic_matrix(&c, &el(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn isomorphic_matrices_of_small_rings() {
        let g = el(&[0.3, -1.7]);
        let c = isomorphic_matrix(&catalog::complex(), &g).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[0.3, 1.7, -1.7, 0.3]));
        let d = isomorphic_matrix(&catalog::r_i(2), &g).unwrap();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -1.7]));
        let h = isomorphic_matrix(&catalog::r_h2(), &el(&[1.0, 2.0])).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
    }

    #[test]
    fn r_h2_matrix_matches_product_on_random_data() {
        let spec = catalog::r_h2();
        let g = el(&[1.0, 2.0]);
        let gm = isomorphic_matrix(&spec, &g).unwrap();
        let mut rng = rng::seeded(7);
        for _ in 0..100 {
            let x = RingElement::random(2, &mut rng);
            let direct = ring_multiply(&spec, &g, &x).unwrap();
            let via = &gm * nalgebra::DVector::from_column_slice(x.components());
            for i in 0..2 {
                assert!((direct.0[i] - via[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sign_perm_of_complex() {
        let sp = extract_sign_perm(&catalog::complex()).unwrap();
        assert!(sp.full_support);
        let (s, p) = sp.dense().unwrap();
        assert_eq!(s, vec![1, -1, 1, 1]);
        assert_eq!(p, vec![0, 1, 1, 0]);
    }

    #[test]
    fn sign_perm_of_r_h2() {
        let (s, p) = extract_sign_perm(&catalog::r_h2()).unwrap().dense().unwrap();
        assert_eq!(s, vec![1, 1, 1, 1]);
        assert_eq!(p, vec![0, 1, 1, 0]);
    }

    #[test]
    fn sign_perm_of_identity_ring_has_partial_support() {
        let spec = catalog::r_i(2);
        assert!(spec.is_exclusive());
        assert!(!spec.m_tensor().is_full_support());
        let sp = extract_sign_perm(&spec).unwrap();
        assert!(!sp.full_support);
        assert_eq!(sp.signs, vec![Some(1), None, None, Some(1)]);
        assert_eq!(sp.index, vec![Some(0), None, None, Some(1)]);
        assert_eq!(sp.to_tensor(), *spec.m_tensor());
        assert!(sp.dense().is_none());
    }

    #[test]
    fn non_exclusive_tensor_reports_sub_product() {
        let mut m = catalog::complex().m_tensor().clone();
        m.set(1, 0, 0, 1); // g0 x0 now reaches z0 and z1
        let spec = RingSpec::new("bad", m);
        assert!(!spec.is_exclusive());
        assert_eq!(extract_sign_perm(&spec).unwrap_err(), RingError::NotExclusive { k: 0, j: 0, outputs: 2 });
    }

    #[test]
    fn invalid_entries_are_rejected() {
        let mut e = vec![0i64; 8];
        e[3] = 2;
        assert!(matches!(IndexingTensor::from_entries(2, &e), Err(RingError::InvalidEntry { value: 2, .. })));
    }

    #[test]
    fn complex_basis() {
        let b = basis_matrices(&catalog::complex());
        assert_eq!(b.matrices[0], vec![1, 0, 0, 1]);
        assert_eq!(b.matrices[1], vec![0, -1, 1, 0]);
    }

    #[test]
    fn r_h4_basis_is_symmetric_permutations() {
        let b = basis_matrices(&catalog::r_h4());
        for k in 0..4 {
            assert!(b.is_signed_permutation(k));
            assert!(b.is_symmetric(k));
            assert!(b.matrices[k].iter().all(|&v| v >= 0));
        }
    }

    #[test]
    fn commutativity_examples() {
        let c = check_commutativity(&catalog::complex(), 50, 1);
        assert!(c.elements_commute && c.basis_commutes);
        let q = check_commutativity(&catalog::quaternion(), 50, 1);
        assert!(!q.elements_commute);
        assert!(!q.basis_commutes);
        let o = check_commutativity(&catalog::r_o4(), 50, 1);
        assert!(o.elements_commute && o.basis_commutes);
    }

    #[test]
    fn associativity_examples() {
        for spec in catalog::all() {
            let r = check_associativity(&spec, 100, 3);
            assert!(r.associative, "{} deviates by {}", spec.name, r.max_deviation);
        }
    }

    #[test]
    fn flipped_complex_sign_breaks_associativity() {
        // Flipping M[0][1][1] would give R_H2 (still associative); flip the
        // sign of g1 x0 in z1 instead.
        let mut m = catalog::complex().m_tensor().clone();
        assert_eq!(m.get(1, 1, 0), 1);
        m.set(1, 1, 0, -1);
        let mutant = RingSpec::new("mutant", m);
        let (a, b, c) = (el(&[1.0, 1.0]), el(&[1.0, 2.0]), el(&[2.0, -1.0]));
        let lhs = ring_multiply(&mutant, &ring_multiply(&mutant, &a, &b).unwrap(), &c).unwrap();
        let rhs = ring_multiply(&mutant, &a, &ring_multiply(&mutant, &b, &c).unwrap()).unwrap();
        assert_eq!(lhs.0[0] - rhs.0[0], -10.0);
        assert_eq!(lhs.0[1] - rhs.0[1], 8.0);
        assert!(!check_associativity(&mutant, 100, 3).associative);
    }

    #[test]
    fn transpose_elements_of_named_rings() {
        let g = [1.0, 2.0, 3.0, 4.0];
        let q = basis_matrices(&catalog::quaternion());
        assert_eq!(transpose_element(&q, &g).unwrap(), vec![1.0, -2.0, -3.0, -4.0]);
        let c = basis_matrices(&catalog::r_h4_i());
        assert_eq!(transpose_element(&c, &g).unwrap(), vec![1.0, 4.0, 3.0, 2.0]);
        let h = basis_matrices(&catalog::r_h4());
        assert_eq!(transpose_element(&h, &g).unwrap(), g.to_vec());
    }
}
