use rand::Rng;
use ring_core::catalog;
use ring_core::rng;
use ring_core::tensor::{
    collapse_features, expand_features, expand_weights, frconv, frconv_counted, rconv, real_conv2d, FeatureTensor, WeightTensor,
};

/// Randomized grid over rings, kernel sizes, spatial shapes and channels.
#[test]
fn rconv_frconv_and_real_expansion_agree() {
    let rings = catalog::all();
    let mut g = rng::seeded(2024);
    let mut cases = 0;
    for spec in &rings {
        let n = spec.n();
        let component_wise = spec.name.starts_with("R_I");
        for _ in 0..20 {
            let k = if g.random_bool(0.5) { 3 } else { 1 };
            let (h, w) = (g.random_range(1..7), g.random_range(1..7));
            let (ci, co) = (g.random_range(1..4), g.random_range(1..4));
            let x = FeatureTensor::random(h, w, ci, n, &mut g);
            let wt = WeightTensor::random(k, ci, co, n, &mut g);
            let bias = rng::normal_vec(&mut g, co * n);
            let direct = rconv(&x, &wt, &bias, spec).unwrap();
            let fast = frconv(&x, &wt, &bias, spec).unwrap();
            let real = real_conv2d(&expand_features(&x), &expand_weights(&wt, spec), &bias).unwrap();
            let real = collapse_features(&real, n).unwrap();
            assert!(direct.max_abs_diff(&real) < 1e-9, "{} {h}x{w} {ci}->{co} k{k}", spec.name);
            assert!(direct.max_abs_diff(&fast) < 1e-9, "{} {h}x{w} {ci}->{co} k{k}", spec.name);
            if component_wise {
                assert_eq!(direct, fast, "{}", spec.name);
            }
            cases += 1;
        }
    }
    assert!(cases >= 200);
}

#[test]
fn measured_efficiency_is_n_squared_over_m() {
    let mut g = rng::seeded(5);
    for (name, want) in [("R_I4", 4.0), ("R_H4", 4.0), ("C", 4.0 / 3.0), ("H", 2.0), ("R_H4-I", 3.2), ("R_O4-II", 3.2), ("R_I8", 8.0)] {
        let spec = catalog::lookup(name).unwrap();
        let n = spec.n();
        let x = FeatureTensor::random(5, 7, 3, n, &mut g);
        let w = WeightTensor::random(3, 3, 2, n, &mut g);
        let (_, mults) = frconv_counted(&x, &w, &vec![0.0; 2 * n], &spec).unwrap();
        let real = (5 * 7 * 9 * (3 * n) * (2 * n)) as f64;
        assert_eq!(real / mults as f64, want, "{name}");
    }
}
