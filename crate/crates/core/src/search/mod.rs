//! Exhaustive search for exclusive ring multiplications.
//!
//! Candidates have `G_ij = S_ij g_{P_ij}` with
//!
//! * C1 — `e_0` is the unity: `P_i0 = i`, `P_ii = 0`, `S_i0 = S_ii = +1`;
//! * C2 — `P_ij = j′ ⇒ P_ij′ = j` and `S_ij = S_ij′` (forces commutativity);
//! * C3 — among the sign patterns of one index pattern keep those of minimal
//!   generic rank, estimated by CP-ALS.
//!
//! Index patterns and sign variants are reduced up to relabeling of the
//! non-unity components.

pub mod cp;

use alloc::vec;
use alloc::vec::Vec;

pub use cp::{cp_rank_fit, rank_profile, CpFit, DEFAULT_RESTARTS, FIT_TOL};

use crate::error::{Result, RingError};
use crate::fast::generic_rank;
use crate::ring::{check_associativity, check_commutativity, IndexingTensor, RingSpec};
use crate::rng;

/// Bounds on the generic rank of a candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrankBounds {
    /// Rank of the generic isomorphic matrix: a proven lower bound.
    pub proven_lower: usize,
    /// Smallest rank not excluded by failed fits (heuristic evidence).
    pub heuristic_lower: usize,
    /// Rank certified by a CP fit.
    pub upper: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub n: usize,
    pub class_id: usize,
    /// Raw index patterns in the class.
    pub class_size: usize,
    /// Row-major `n×n` index matrix.
    pub p: Vec<usize>,
    /// Row-major `n×n` sign matrix; `None` until signs are chosen.
    pub s: Option<Vec<i8>>,
    pub grank: Option<GrankBounds>,
    pub commutative: Option<bool>,
    pub associative: Option<bool>,
}

impl Candidate {
    pub fn tensor(&self) -> Option<IndexingTensor> {
        self.s.as_ref().map(|s| IndexingTensor::from_sign_perm(self.n, s, &self.p))
    }

    pub fn to_spec(&self, name: &str) -> Option<RingSpec> {
        self.tensor().map(|m| RingSpec::new(name, m))
    }

    /// C1, including the sign part when signs are set.
    pub fn satisfies_c1(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            self.p[i * n] == i
                && self.p[i * n + i] == 0
                && self.s.as_ref().map_or(true, |s| s[i * n] == 1 && s[i * n + i] == 1)
        })
    }

    /// C2, including the sign part when signs are set.
    pub fn satisfies_c2(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            (0..n).all(|j| {
                let jp = self.p[i * n + j];
                self.p[i * n + jp] == j && self.s.as_ref().map_or(true, |s| s[i * n + j] == s[i * n + jp])
            })
        })
    }
}

/// All index matrices obeying C1, C2 and the Latin-square property, in
/// lexicographic order. Each row is an involution of `0..n` swapping `0` and
/// `i`. Cheap for `n ≤ 4`; the `n = 8` space does not fit in memory on
/// ordinary machines.
pub fn enumerate_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p = vec![usize::MAX; n * n];
    fill_row(n, 0, &mut p, &mut out);
    out
}

fn fill_row(n: usize, i: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if i == n {
        out.push(p.clone());
        return;
    }
    let mut row = vec![usize::MAX; n];
    row[0] = i;
    row[i] = 0;
    let mut options = Vec::new();
    involutions(n, i, &mut row, &mut |r| options.push(r.to_vec()), p);
    for r in options {
        p[i * n..(i + 1) * n].copy_from_slice(&r);
        fill_row(n, i + 1, p, out);
    }
}

/// Complete a partial involution row, keeping columns Latin w.r.t. rows above.
fn involutions(n: usize, i: usize, row: &mut [usize], emit: &mut dyn FnMut(&[usize]), p: &[usize]) {
    let Some(j) = row.iter().position(|&v| v == usize::MAX) else {
        emit(row);
        return;
    };
    for v in 0..n {
        if v == 0 || row.contains(&v) || (0..i).any(|q| p[q * n + j] == v) {
            continue;
        }
        // v at column j forces j at column v.
        if v != j && (row[v] != usize::MAX || (0..i).any(|q| p[q * n + v] == j)) {
            continue;
        }
        row[j] = v;
        row[v] = j;
        involutions(n, i, row, emit, p);
        row[j] = usize::MAX;
        row[v] = usize::MAX;
    }
}

/// Which relabelings count as isomorphisms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Equivalence {
    /// Component permutations.
    Permutation,
    /// Component permutations with per-component sign flips.
    SignedPermutation,
}

/// Component relabeling `e_i ↦ signs[i] e_{perm[i]}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relabeling {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
}

impl Relabeling {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect(), signs: vec![1; n] }
    }

    /// `M′[π i][π k][π j] = σ_i σ_k σ_j M[i][k][j]`.
    pub fn apply(&self, m: &IndexingTensor) -> IndexingTensor {
        let n = m.n();
        let (pi, s) = (&self.perm, &self.signs);
        let mut out = IndexingTensor::zeros(n);
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out.set(pi[i], pi[k], pi[j], s[i] * s[k] * s[j] * m.get(i, k, j));
                }
            }
        }
        out
    }

    /// `P′[π i][π j] = π(P[i][j])`.
    pub fn apply_index(&self, p: &[usize]) -> Vec<usize> {
        let n = self.perm.len();
        let pi = &self.perm;
        let mut out = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[pi[i] * n + pi[j]] = pi[p[i * n + j]];
            }
        }
        out
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(a) = (0..n.saturating_sub(1)).rev().find(|&a| cur[a] < cur[a + 1]) else {
            return out;
        };
        let b = (a + 1..n).rev().find(|&b| cur[b] > cur[a]).expect("successor exists");
        cur.swap(a, b);
        cur[a + 1..].reverse();
    }
}

fn sign_vectors(n: usize, eq: Equivalence) -> Vec<Vec<i8>> {
    match eq {
        Equivalence::Permutation => vec![vec![1; n]],
        Equivalence::SignedPermutation => (0..1u32 << n)
            .map(|bits| (0..n).map(|q| if bits >> q & 1 == 1 { -1 } else { 1 }).collect())
            .collect(),
    }
}

/// A relabeling mapping `a` onto `b`, if one exists.
pub fn find_isomorphism(a: &IndexingTensor, b: &IndexingTensor, eq: Equivalence) -> Option<Relabeling> {
    if a.n() != b.n() {
        return None;
    }
    let n = a.n();
    let signs = sign_vectors(n, eq);
    for perm in permutations(n) {
        for s in &signs {
            let r = Relabeling { perm: perm.clone(), signs: s.clone() };
            if r.apply(a) == *b {
                return Some(r);
            }
        }
    }
    None
}

/// Lexicographically smallest relabeled index pattern over permutations
/// fixing the unity component, with the relabeling that produces it.
pub fn canonical_index(p: &[usize], n: usize) -> (Vec<usize>, Relabeling) {
    permutations(n)
        .into_iter()
        .filter(|pi| pi[0] == 0)
        .map(|perm| {
            let r = Relabeling { perm, signs: vec![1; n] };
            (r.apply_index(p), r)
        })
        .min_by(|x, y| x.0.cmp(&y.0))
        .expect("identity permutation exists")
}

/// Index-pattern classes: one canonical representative per class, with class
/// sizes, ordered by representative.
pub fn enumerate_candidates(n: usize) -> Vec<Candidate> {
    let mut classes: Vec<(Vec<usize>, usize)> = Vec::new();
    for p in enumerate_permutations(n) {
        let (key, _) = canonical_index(&p, n);
        match classes.iter_mut().find(|(k, _)| *k == key) {
            Some(c) => c.1 += 1,
            None => classes.push((key, 1)),
        }
    }
    classes.sort();
    classes
        .into_iter()
        .enumerate()
        .map(|(class_id, (p, class_size))| {
            let c = Candidate {
                n,
                class_id,
                class_size,
                p,
                s: None,
                grank: None,
                commutative: None,
                associative: None,
            };
            debug_assert!(c.satisfies_c1() && c.satisfies_c2());
            c
        })
        .collect()
}

/// Groups of sign positions that C2 ties together and C1 leaves free.
pub fn free_sign_groups(p: &[usize], n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; n * n];
    let mut groups = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if seen[i * n + j] {
                continue;
            }
            let jp = p[i * n + j];
            seen[i * n + j] = true;
            seen[i * n + jp] = true;
            if j == 0 || jp == 0 || i == j {
                continue;
            }
            let mut g = vec![(i, j), (i, jp)];
            g.dedup();
            groups.push(g);
        }
    }
    groups
}

/// Every sign matrix allowed by C1/C2 for `p`. The first free group is the
/// most significant choice and `+1` precedes `-1`.
pub fn sign_patterns(p: &[usize], n: usize) -> Vec<Vec<i8>> {
    let groups = free_sign_groups(p, n);
    let g = groups.len();
    (0..1usize << g)
        .map(|bits| {
            let mut s = vec![1i8; n * n];
            for (q, group) in groups.iter().enumerate() {
                if bits >> (g - 1 - q) & 1 == 1 {
                    for &(i, j) in group {
                        s[i * n + j] = -1;
                    }
                }
            }
            s
        })
        .collect()
}

/// Outcome of a rank scan.
#[derive(Clone, Debug, PartialEq)]
pub struct GrankReport {
    /// Smallest rank with a certified fit.
    pub grank: usize,
    /// Rank of the generic isomorphic matrix; ranks below it are skipped.
    pub proven_lower: usize,
    /// Best residual per scanned rank.
    pub residuals: Vec<(usize, f64)>,
    pub restarts: usize,
}

impl GrankReport {
    pub fn bounds(&self) -> GrankBounds {
        GrankBounds { proven_lower: self.proven_lower, heuristic_lower: self.grank, upper: self.grank }
    }

    /// Whether `grank` is backed only by failed fits below it (not a proof).
    pub fn lower_is_heuristic(&self) -> bool {
        self.grank > self.proven_lower
    }
}

const RANK_PROBE_SEED: u64 = 0xA11CE;

/// Smallest rank `≤ r_max` with a certified CP fit, scanning upward from the
/// generic rank of `G` with warm starts.
pub fn grank_estimate(m: &IndexingTensor, r_max: usize, restarts: usize, seed: u64) -> Result<GrankReport> {
    let n = m.n();
    if r_max < n {
        return Err(RingError::InvalidArgument(alloc::format!("r_max {r_max} < n {n}")));
    }
    let spec = RingSpec::new("probe", m.clone());
    let proven_lower = generic_rank(&spec, RANK_PROBE_SEED).max(1);
    if proven_lower > r_max {
        return Err(RingError::Unresolved { r_max, best_residuals: Vec::new() });
    }
    let fits = rank_profile(m, proven_lower..=r_max, restarts, seed, |f| f.certifies());
    let residuals: Vec<(usize, f64)> = fits.iter().map(|f| (f.rank, f.residual)).collect();
    match fits.iter().find(|f| f.certifies()) {
        Some(f) => Ok(GrankReport { grank: f.rank, proven_lower, residuals, restarts }),
        None => Err(RingError::Unresolved { r_max, best_residuals: residuals }),
    }
}

/// Grank estimate of one sign pattern within a class.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternResult {
    pub s: Vec<i8>,
    pub report: GrankReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassResult {
    pub class_id: usize,
    pub p: Vec<usize>,
    pub class_size: usize,
    /// All sign patterns, in enumeration order.
    pub patterns: Vec<PatternResult>,
    pub min_grank: usize,
    /// Kept candidates, one per isomorphism class.
    pub variants: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub n: usize,
    pub raw_permutations: usize,
    pub classes: Vec<ClassResult>,
}

impl SearchResult {
    pub fn rings(&self) -> impl Iterator<Item = &Candidate> {
        self.classes.iter().flat_map(|c| c.variants.iter())
    }
}

#[cfg(feature = "std")]
fn evaluate<T: Send, F: Fn(usize) -> T + Sync + Send>(count: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
fn evaluate<T, F: Fn(usize) -> T>(count: usize, f: F) -> Vec<T> {
    (0..count).map(f).collect()
}

/// Search all exclusive rings of dimension `n` satisfying C1/C2.
///
/// For `n ≥ 4` each index class keeps only its minimum-grank sign patterns
/// (C3). For `n = 2` every commutative, associative pattern is kept, since C3
/// alone would discard the complex numbers.
pub fn search_rings(n: usize, r_max: usize, restarts: usize, seed: u64) -> Result<SearchResult> {
    if !matches!(n, 2 | 4) {
        return Err(RingError::Unsupported(alloc::format!("ring search for n = {n}")));
    }
    let raw_permutations = enumerate_permutations(n).len();
    let classes = enumerate_candidates(n);
    let jobs: Vec<(usize, Vec<i8>)> = classes
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| sign_patterns(&c.p, n).into_iter().map(move |s| (ci, s)))
        .collect();
    let reports = evaluate(jobs.len(), |q| {
        let (ci, s) = &jobs[q];
        let m = IndexingTensor::from_sign_perm(n, s, &classes[*ci].p);
        grank_estimate(&m, r_max, restarts, rng::derive(seed, *ci as u64, q as u64, 0))
    });
    let mut per_class: Vec<Vec<PatternResult>> = vec![Vec::new(); classes.len()];
    for ((ci, s), report) in jobs.into_iter().zip(reports) {
        per_class[ci].push(PatternResult { s, report: report? });
    }

    let mut out = Vec::new();
    for (class, patterns) in classes.into_iter().zip(per_class) {
        let min_grank = patterns.iter().map(|r| r.report.grank).min().unwrap_or(0);
        let mut variants: Vec<Candidate> = Vec::new();
        for pr in &patterns {
            if n >= 4 && pr.report.grank != min_grank {
                continue;
            }
            let spec = RingSpec::new("candidate", IndexingTensor::from_sign_perm(n, &pr.s, &class.p));
            let commutative = check_commutativity(&spec, 20, seed).elements_commute;
            let associative = check_associativity(&spec, 20, seed).associative;
            if n < 4 && !(commutative && associative) {
                continue;
            }
            let duplicate = variants.iter().any(|v| {
                find_isomorphism(&v.tensor().expect("signed"), spec.m_tensor(), Equivalence::Permutation).is_some()
            });
            if duplicate {
                continue;
            }
            let c = Candidate {
                n,
                class_id: class.class_id,
                class_size: class.class_size,
                p: class.p.clone(),
                s: Some(pr.s.clone()),
                grank: Some(pr.report.bounds()),
                commutative: Some(commutative),
                associative: Some(associative),
            };
            assert!(c.satisfies_c1() && c.satisfies_c2(), "emitted candidate violates C1/C2");
            variants.push(c);
        }
        out.push(ClassResult {
            class_id: class.class_id,
            p: class.p,
            class_size: class.class_size,
            patterns,
            min_grank,
            variants,
        });
    }
    Ok(SearchResult { n, raw_permutations, classes: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn permutation_counts() {
        assert_eq!(enumerate_permutations(2), vec![vec![0, 1, 1, 0]]);
        assert_eq!(enumerate_permutations(4).len(), 4);
        let c4 = enumerate_candidates(4);
        assert_eq!(c4.len(), 2);
        let mut sizes: Vec<usize> = c4.iter().map(|c| c.class_size).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 3]);
        assert_eq!(enumerate_candidates(2).len(), 1);
    }

    #[test]
    fn all_permutations_satisfy_conditions() {
        for n in [2, 4] {
            for p in enumerate_permutations(n) {
                let c = Candidate {
                    n,
                    class_id: 0,
                    class_size: 1,
                    p,
                    s: None,
                    grank: None,
                    commutative: None,
                    associative: None,
                };
                assert!(c.satisfies_c1() && c.satisfies_c2());
            }
        }
    }

    #[test]
    fn lexicographic_permutations() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }

    #[test]
    fn sign_patterns_respect_constraints() {
        for c in enumerate_candidates(4) {
            let pats = sign_patterns(&c.p, 4);
            assert_eq!(pats.len(), 64);
            assert_eq!(pats[0], vec![1; 16]);
            for s in pats {
                let cand = Candidate { s: Some(s), ..c.clone() };
                assert!(cand.satisfies_c1() && cand.satisfies_c2());
            }
        }
        let p2 = enumerate_permutations(2).remove(0);
        assert_eq!(sign_patterns(&p2, 2), vec![vec![1, 1, 1, 1], vec![1, -1, 1, 1]]);
    }

    #[test]
    fn relabeling_round_trip() {
        let m = catalog::quaternion().m_tensor().clone();
        let r = Relabeling { perm: vec![0, 2, 3, 1], signs: vec![1, -1, 1, 1] };
        let moved = r.apply(&m);
        let found = find_isomorphism(&m, &moved, Equivalence::SignedPermutation).unwrap();
        assert_eq!(found.apply(&m), moved);
        assert!(find_isomorphism(&m, &catalog::r_h4().m_tensor().clone(), Equivalence::SignedPermutation).is_none());
    }

    #[test]
    fn sign_flips_merge_diagonalizable_variants() {
        let (h4, o4) = (catalog::r_h4(), catalog::r_o4());
        assert!(find_isomorphism(h4.m_tensor(), o4.m_tensor(), Equivalence::Permutation).is_none());
        let r = find_isomorphism(h4.m_tensor(), o4.m_tensor(), Equivalence::SignedPermutation).unwrap();
        assert_eq!(r.apply(h4.m_tensor()), *o4.m_tensor());
    }

    #[test]
    fn grank_of_small_rings() {
        let r = grank_estimate(catalog::complex().m_tensor(), 4, 50, 1).unwrap();
        assert_eq!(r.grank, 3);
        assert_eq!(r.proven_lower, 2);
        assert!(r.lower_is_heuristic());
        assert!(r.residuals[0].1 > 1e-3);
        let r = grank_estimate(catalog::r_h2().m_tensor(), 4, 50, 1).unwrap();
        assert_eq!(r.grank, 2);
        assert!(!r.lower_is_heuristic());
    }

    #[test]
    fn grank_errors() {
        let m = catalog::quaternion().m_tensor().clone();
        assert!(matches!(grank_estimate(&m, 3, 5, 0), Err(RingError::InvalidArgument(_))));
        match grank_estimate(&m, 6, 5, 0) {
            Err(RingError::Unresolved { r_max: 6, best_residuals }) => {
                assert_eq!(best_residuals.iter().map(|x| x.0).collect::<Vec<_>>(), vec![4, 5, 6]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn search_n2_finds_r_h2_and_complex() {
        let res = search_rings(2, 4, 20, 7).unwrap();
        assert_eq!(res.raw_permutations, 1);
        let rings: Vec<_> = res.rings().collect();
        assert_eq!(rings.len(), 2);
        let granks: Vec<usize> = rings.iter().map(|c| c.grank.unwrap().upper).collect();
        assert_eq!(granks, vec![2, 3]);
        assert_eq!(rings[0].tensor().unwrap(), *catalog::r_h2().m_tensor());
        assert_eq!(rings[1].tensor().unwrap(), *catalog::complex().m_tensor());
    }

    #[test]
    fn unsupported_dimension() {
        assert!(matches!(search_rings(3, 9, 1, 0), Err(RingError::Unsupported(_))));
    }
}
