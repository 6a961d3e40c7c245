mod oracle;

use rand::Rng;

use ring_core::catalog;
use ring_core::fixed::{
    calibrate, check_envelope, directional_relu_fixed, forward_fixed, quantization_error_report, Envelope, FixedFeatureTensor,
    IntegerDirectional, QFormat,
};
use ring_core::model::{HiddenActivation, ToyTask};
use ring_core::rng;
use ring_core::tensor::{DirectionalRelu, FeatureTensor};

use oracle::{reference, stimulus};

#[test]
fn directional_relu_matches_rational_reference() {
    for n in [2usize, 4] {
        let f = DirectionalRelu::hadamard(n);
        let fi = IntegerDirectional::new(&f).unwrap();
        let mut g = rng::seeded(n as u64);
        for _ in 0..50_000 {
            let (y, n_y, n_x) = stimulus(&mut g, n);
            let (codes, _) = directional_relu_fixed(&y, &n_y, &n_x, &fi, &Envelope::declared(n)).unwrap();
            assert_eq!(codes, reference(&y, &n_y, &n_x, &f), "y={y:?} n_y={n_y:?} n_x={n_x:?}");
        }
    }
}

#[test]
fn directional_relu_is_scale_exact() {
    let fi = IntegerDirectional::hadamard(4);
    let mut g = rng::seeded(9);
    for _ in 0..10_000 {
        let (y, n_y, n_x) = stimulus(&mut g, 4);
        let (a, _) = directional_relu_fixed(&y, &n_y, &n_x, &fi, &Envelope::software()).unwrap();
        let y2: Vec<i64> = y.iter().map(|v| 2 * v).collect();
        let n_y2: Vec<i32> = n_y.iter().map(|v| v + 1).collect();
        let (b, _) = directional_relu_fixed(&y2, &n_y2, &n_x, &fi, &Envelope::software()).unwrap();
        assert_eq!(a, b);
    }
}

fn toy() -> (ring_core::model::ModelGraph, Vec<FeatureTensor>) {
    let task = ToyTask::default();
    let model = task.model(HiddenActivation::Hadamard).unwrap();
    let mut g = rng::seeded(31);
    let images = (0..4).map(|_| FeatureTensor::random(8, 8, 1, 4, &mut g)).collect();
    (model, images)
}

#[test]
fn fixed_inference_is_schedule_independent() {
    let (model, images) = toy();
    let plan = calibrate(&model, &images).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| forward_fixed(&model, &plan, &images[0]).unwrap())
    };
    let one = run(1);
    assert_eq!(one.codes, run(4).codes);
    assert_eq!(one.accumulators, run(3).accumulators);
    assert_eq!(one, forward_fixed(&model, &plan, &images[0]).unwrap());
}

#[test]
fn calibrated_toy_models_fit_declared_envelope() {
    let (model, images) = toy();
    let plan = calibrate(&model, &images).unwrap();
    for x in &images {
        let run = forward_fixed(&model, &plan, x).unwrap();
        check_envelope(&run, 4).unwrap();
    }
    for lp in &plan.layers {
        assert!(lp.acc_bits <= 24, "{}", lp.acc_bits);
    }
}

#[test]
fn on_the_fly_error_never_exceeds_prequantized() {
    for seed in 0..5u64 {
        let task = ToyTask { seed, ..ToyTask::default() };
        let model = task.model(HiddenActivation::Hadamard).unwrap();
        let mut g = rng::seeded(seed + 50);
        let images: Vec<FeatureTensor> = (0..3).map(|_| FeatureTensor::random(8, 8, 1, 4, &mut g)).collect();
        let plan = calibrate(&model, &images).unwrap();
        let report = quantization_error_report(&model, &plan, &images).unwrap();
        for e in &report.layers {
            assert!(e.l2_on_the_fly <= e.l2_prequantized, "seed {seed}: {e:?}");
        }
        assert!(report.psnr.is_finite());
    }
}

#[test]
fn round_trip_within_half_lsb() {
    let mut g = rng::seeded(5);
    for _ in 0..10_000 {
        let f = g.random_range(-3..10);
        let q = QFormat::q8(f);
        let v = g.random_range(-128.0..127.0) * (-f64::from(f)).exp2();
        let (c, sat) = q.quantize(v);
        assert!(!sat);
        assert!((q.dequantize(i64::from(c)) - v).abs() <= (-f64::from(f) - 1.0).exp2());
    }
}

#[test]
fn saturation_grows_with_frac_bits() {
    let (model, images) = toy();
    let plan = calibrate(&model, &images).unwrap();
    let base = plan.layers[0].input[0];
    let count = |f: i32| -> u64 {
        images.iter().map(|x| FixedFeatureTensor::quantize(x, &[QFormat::q8(f); 4]).unwrap().saturations).sum()
    };
    assert_eq!(count(base.frac_bits), 0);
    let mut prev = 0;
    for extra in 1..6 {
        let c = count(base.frac_bits + extra);
        assert!(c >= prev);
        prev = c;
    }
    assert!(prev > 0);
}

#[test]
fn catalog_rings_run_fixed_point() {
    let mut g = rng::seeded(8);
    for spec in catalog::all() {
        let model = ring_core::model::gradient_test_model(&spec, 3).unwrap();
        let images: Vec<FeatureTensor> = (0..2).map(|_| FeatureTensor::random(5, 5, 1, spec.n(), &mut g)).collect();
        let plan = calibrate(&model, &images).unwrap();
        let report = quantization_error_report(&model, &plan, &images).unwrap();
        assert!(report.psnr > 15.0, "{}: {}", spec.name, report.psnr);
    }
}
