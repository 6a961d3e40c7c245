//! Named rings with verified fast algorithms.
//!
//! | name      | n | products | construction                               |
//! |-----------|---|----------|--------------------------------------------|
//! | `R_I2/4/8`| n | n        | component-wise, identity transforms        |
//! | `R_H2`    | 2 | 2        | diagonalized by the Hadamard matrix        |
//! | `C`       | 2 | 3        | complex numbers, Gauss's trick             |
//! | `R_H4`    | 4 | 4        | diagonalized by the Sylvester Hadamard     |
//! | `R_O4`    | 4 | 4        | diagonalized by a reflected Householder    |
//! | `R_H4-I`..`R_O4-II` | 4 | 5 | cyclic index pattern, character split |
//! | `H`       | 4 | 8        | quaternions                                |

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::fast::{character_algorithm, FastAlgorithm};
use crate::ring::{IndexingTensor, RingSpec};

/// Sylvester Hadamard matrix, `H[i][j] = (-1)^popcount(i & j)`. `n` must be a
/// power of two.
pub fn hadamard(n: usize) -> DMatrix<f64> {
    assert!(n.is_power_of_two(), "Hadamard order {n} is not a power of two");
    DMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

/// `O = L (2I - J)` with `L = diag(1, -1, -1, -1)`: a ±1 matrix with
/// `O Oᵗ = 4I` whose first column is all ones.
pub fn reflected_householder() -> DMatrix<f64> {
    let mut o = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { -1.0 });
    for i in 1..4 {
        for j in 0..4 {
            o[(i, j)] = -o[(i, j)];
        }
    }
    o
}

/// Ring diagonalized by `T` (first column all ones): `T_g = T_x = T`,
/// `T_z = T⁻¹`, and `M` read off the decomposition.
fn from_diagonalizer(name: &str, t: DMatrix<f64>) -> RingSpec {
    let n = t.nrows();
    let t_inv = t.clone().try_inverse().expect("diagonalizer is invertible");
    let alg = FastAlgorithm::new(t.clone(), t, t_inv).expect("square transforms");
    let entries: Vec<i64> = alg.decomposed().iter().map(|v| libm::round(*v) as i64).collect();
    let m = IndexingTensor::from_entries(n, &entries).expect("diagonalizer yields a ±1 tensor");
    RingSpec::new(name, m).with_fast(alg).expect("decomposition holds by construction")
}

fn from_sign_perm(name: &str, n: usize, signs: &[i8], perm: &[usize]) -> RingSpec {
    let spec = RingSpec::new(name, IndexingTensor::from_sign_perm(n, signs, perm));
    let alg = character_algorithm(&spec).expect("catalog ring is diagonalizable over C");
    spec.with_fast(alg).expect("verified by character_algorithm")
}

/// Cyclic index pattern `P_ij = (i - j) mod 4`.
fn cyclic4() -> Vec<usize> {
    (0..16).map(|e| (4 + e / 4 - e % 4) % 4).collect()
}

pub fn r_i(n: usize) -> RingSpec {
    RingSpec::new(alloc::format!("R_I{n}"), IndexingTensor::component_wise(n))
        .with_fast(FastAlgorithm::identity(n))
        .expect("identity decomposes component-wise product")
}

pub fn r_h2() -> RingSpec {
    from_diagonalizer("R_H2", hadamard(2))
}

pub fn complex() -> RingSpec {
    from_sign_perm("C", 2, &[1, -1, 1, 1], &[0, 1, 1, 0])
}

pub fn r_h4() -> RingSpec {
    from_diagonalizer("R_H4", hadamard(4))
}

pub fn r_o4() -> RingSpec {
    from_diagonalizer("R_O4", reflected_householder())
}

/// Circular convolution of 4-tuples.
pub fn r_h4_i() -> RingSpec {
    from_sign_perm("R_H4-I", 4, &[1; 16], &cyclic4())
}

pub fn r_h4_ii() -> RingSpec {
    #[rustfmt::skip]
    let s = [1, -1, 1, -1,  1, 1, 1, 1,  1, -1, 1, -1,  1, 1, 1, 1];
    from_sign_perm("R_H4-II", 4, &s, &cyclic4())
}

pub fn r_o4_i() -> RingSpec {
    #[rustfmt::skip]
    let s = [1, 1, 1, 1,  1, 1, -1, -1,  1, -1, 1, -1,  1, -1, -1, 1];
    from_sign_perm("R_O4-I", 4, &s, &cyclic4())
}

pub fn r_o4_ii() -> RingSpec {
    #[rustfmt::skip]
    let s = [1, -1, 1, -1,  1, 1, -1, -1,  1, 1, 1, 1,  1, -1, -1, 1];
    from_sign_perm("R_O4-II", 4, &s, &cyclic4())
}

/// Hamilton quaternions with an 8-product algorithm: the Klein-group product
/// via `H` corrected by four direct products.
pub fn quaternion() -> RingSpec {
    #[rustfmt::skip]
    let s = [1, -1, -1, -1,
             1,  1, -1,  1,
             1,  1,  1, -1,
             1, -1,  1,  1];
    let p: Vec<usize> = (0..16).map(|e| (e / 4) ^ (e % 4)).collect();
    let spec = RingSpec::new("H", IndexingTensor::from_sign_perm(4, &s, &p));

    let h = hadamard(4);
    let unit = |rows: [usize; 4]| DMatrix::from_fn(4, 4, |r, c| if rows[r] == c { 1.0 } else { 0.0 });
    let stack = |extra: DMatrix<f64>| DMatrix::from_fn(8, 4, |r, c| if r < 4 { h[(r, c)] } else { extra[(r - 4, c)] });
    let t_g = stack(unit([0, 3, 1, 2]));
    let t_x = stack(unit([0, 2, 3, 1]));
    let flip = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0, 1.0]));
    let klein = &flip * &h / 4.0;
    let t_z = DMatrix::from_fn(4, 8, |i, r| {
        if r < 4 {
            klein[(i, r)]
        } else if i == r - 4 {
            if i == 0 { 2.0 } else { -2.0 }
        } else {
            0.0
        }
    });
    let alg = FastAlgorithm::new(t_g, t_x, t_z).expect("8×4 / 4×8 transforms");
    spec.with_fast(alg).expect("quaternion algorithm decomposes the Hamilton product")
}

pub fn all() -> Vec<RingSpec> {
    vec![
        r_i(2),
        r_h2(),
        complex(),
        r_i(4),
        r_h4(),
        r_o4(),
        r_h4_i(),
        r_h4_ii(),
        r_o4_i(),
        r_o4_ii(),
        quaternion(),
        r_i(8),
    ]
}

/// Case-insensitive lookup by catalog name or a common alias.
pub fn lookup(name: &str) -> Option<RingSpec> {
    let key: String = name.trim().to_ascii_uppercase().replace('_', "").replace('-', "");
    let spec = match key.as_str() {
        "RI2" => r_i(2),
        "RI4" => r_i(4),
        "RI8" => r_i(8),
        "RH2" => r_h2(),
        "C" | "COMPLEX" => complex(),
        "RH4" => r_h4(),
        "RO4" => r_o4(),
        "RH4I" => r_h4_i(),
        "RH4II" => r_h4_ii(),
        "RO4I" => r_o4_i(),
        "RO4II" => r_o4_ii(),
        "H" | "QUATERNION" | "QUATERNIONS" => quaternion(),
        // component-wise rings of other sizes, e.g. `R_I1` for plain real CNNs
        k if k.starts_with("RI") => match k[2..].parse::<usize>() {
            Ok(n @ 1..=16) => r_i(n),
            _ => return None,
        },
        _ => return None,
    };
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fast::verify_fast;
    use crate::ring::extract_sign_perm;

    #[test]
    fn twelve_rings_all_verify() {
        let all = all();
        assert_eq!(all.len(), 12);
        for spec in &all {
            assert!(spec.is_exclusive(), "{}", spec.name);
            let r = verify_fast(spec, spec.fast().unwrap(), 1000, 3).unwrap();
            assert!(r.pass, "{}: {r:?}", spec.name);
        }
    }

    #[test]
    fn product_counts() {
        let m: Vec<(String, usize)> = all().into_iter().map(|s| (s.name.clone(), s.fast().unwrap().m())).collect();
        let expect = [
            ("R_I2", 2), ("R_H2", 2), ("C", 3), ("R_I4", 4), ("R_H4", 4), ("R_O4", 4),
            ("R_H4-I", 5), ("R_H4-II", 5), ("R_O4-I", 5), ("R_O4-II", 5), ("H", 8), ("R_I8", 8),
        ];
        for ((name, count), (en, ec)) in m.iter().zip(expect) {
            assert_eq!((name.as_str(), *count), (en, ec));
        }
    }

    #[test]
    fn householder_is_orthogonal_up_to_scale() {
        let o = reflected_householder();
        assert_eq!(&o * o.transpose(), DMatrix::identity(4, 4) * 4.0);
        #[rustfmt::skip]
        let expect = DMatrix::from_row_slice(4, 4, &[
            1.0, -1.0, -1.0, -1.0,
            1.0, -1.0,  1.0,  1.0,
            1.0,  1.0, -1.0,  1.0,
            1.0,  1.0,  1.0, -1.0,
        ]);
        assert_eq!(o, expect);
    }

    #[test]
    fn diagonalized_rings_have_klein_index_pattern() {
        for (spec, signs) in [
            (r_h4(), vec![1i8; 16]),
            (r_o4(), vec![1, 1, 1, 1, 1, 1, -1, -1, 1, -1, 1, -1, 1, -1, -1, 1]),
        ] {
            let (s, p) = extract_sign_perm(&spec).unwrap().dense().unwrap();
            let klein: Vec<usize> = (0..16).map(|e| (e / 4) ^ (e % 4)).collect();
            assert_eq!(p, klein, "{}", spec.name);
            assert_eq!(s, signs, "{}", spec.name);
        }
    }

    #[test]
    fn r_h2_index_pattern() {
        let (s, p) = extract_sign_perm(&r_h2()).unwrap().dense().unwrap();
        assert_eq!(s, vec![1; 4]);
        assert_eq!(p, vec![0, 1, 1, 0]);
    }

    #[test]
    fn lookup_aliases() {
        assert_eq!(lookup("quaternion").unwrap().name, "H");
        assert_eq!(lookup("complex").unwrap().name, "C");
        assert_eq!(lookup("r_h4-ii").unwrap().name, "R_H4-II");
        assert_eq!(lookup("RI8").unwrap().n(), 8);
        assert!(lookup("R_X4").is_none());
        assert_eq!(lookup("R_I1").unwrap().n(), 1);
        assert!(lookup("R_I0").is_none());
        for spec in all() {
            assert_eq!(lookup(&spec.name).unwrap(), spec);
        }
    }

    #[test]
    fn quaternion_hamilton_product() {
        use crate::ring::{ring_multiply, RingElement};
        let q = quaternion();
        let g = RingElement(vec![1.0, 2.0, 3.0, 4.0]);
        let x = RingElement(vec![5.0, 6.0, 7.0, 8.0]);
        // (1+2i+3j+4k)(5+6i+7j+8k) = -60 + 12i + 30j + 24k
        assert_eq!(ring_multiply(&q, &g, &x).unwrap().0, vec![-60.0, 12.0, 30.0, 24.0]);
        assert_eq!(q.fast().unwrap().apply(&g.0, &x.0), vec![-60.0, 12.0, 30.0, 24.0]);
    }
}
