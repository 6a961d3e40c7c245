//! Exact rational reference for the integer directional ReLU, shared with the
//! acceptance harness.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;

use ring_core::rng;
use ring_core::tensor::DirectionalRelu;

fn pow2(e: i32) -> BigRational {
    let one = BigInt::from(1);
    if e >= 0 {
        BigRational::from_integer(one << e as usize)
    } else {
        BigRational::new(one.clone(), one << (-e) as usize)
    }
}

/// quantize(relu_dir(dequantize(y))) in exact rationals.
pub fn reference(y: &[i64], n_y: &[i32], n_x: &[i32], f: &DirectionalRelu) -> Vec<i32> {
    let n = y.len();
    let val: Vec<BigRational> = y.iter().zip(n_y).map(|(v, e)| BigRational::from_integer(BigInt::from(*v)) * pow2(-e)).collect();
    let coef = |c: f64| BigRational::from_integer(BigInt::from(c as i64));
    let h: Vec<BigRational> = (0..n)
        .map(|r| {
            let s = (0..n).fold(BigRational::zero(), |a, j| a + coef(f.v()[r * n + j]) * &val[j]);
            if s.is_negative() { BigRational::zero() } else { s }
        })
        .collect();
    (0..n)
        .map(|i| {
            let o = (0..n).fold(BigRational::zero(), |a, r| a + coef(f.u()[i * n + r]) * &h[r]);
            let code = (o * pow2(n_x[i])).round().to_integer().to_i64().unwrap();
            code.clamp(-128, 127) as i32
        })
        .collect()
}

pub fn stimulus(g: &mut rng::SeededRng, n: usize) -> (Vec<i64>, Vec<i32>, Vec<i32>) {
    let small = g.random_bool(0.3);
    let bits = if small { 7 } else { 23 };
    let y: Vec<i64> = (0..n).map(|_| g.random_range(-(1i64 << bits)..(1i64 << bits))).collect();
    let base = g.random_range(-4..20);
    let n_y: Vec<i32> = (0..n).map(|_| base + g.random_range(0..=5)).collect();
    let top = *n_y.iter().max().unwrap();
    let n_x: Vec<i32> = (0..n).map(|_| top - if small { g.random_range(0..5) } else { g.random_range(14..25) }).collect();
    (y, n_y, n_x)
}
