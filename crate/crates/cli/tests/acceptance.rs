//! Acceptance harness: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p ring-cli --test acceptance`.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use ring_core::catalog;
use ring_core::fast::cost_profile;
use ring_core::fixed::{
    calibrate, check_envelope, directional_relu_fixed, forward_fixed, quantization_error_report, Envelope, IntegerDirectional,
};
use ring_core::model::{finite_difference_check, gradient_test_model, HiddenActivation, ToyTask};
use ring_core::rng;
use ring_core::search::{grank_estimate, DEFAULT_RESTARTS, FIT_TOL};
use ring_core::tensor::{
    collapse_features, expand_features, expand_weights, frconv, frconv_counted, rconv, real_conv2d, DirectionalRelu, FeatureTensor,
    WeightTensor,
};
use ring_cli::commands::verify_ring;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

fn granks() -> Outcome {
    let expect = [
        ("R_I2", 2),
        ("R_H2", 2),
        ("C", 3),
        ("R_I4", 4),
        ("R_H4", 4),
        ("R_O4", 4),
        ("R_H4-I", 5),
        ("R_H4-II", 5),
        ("R_O4-I", 5),
        ("R_O4-II", 5),
        ("H", 8),
        ("R_I8", 8),
    ];
    for (name, want) in expect {
        let spec = catalog::lookup(name).ok_or(format!("{name} missing"))?;
        let r = grank_estimate(spec.m_tensor(), 9, DEFAULT_RESTARTS, 2024).map_err(|e| format!("{name}: {e}"))?;
        ensure(r.grank == want, || format!("{name}: grank {} != {want}", r.grank))?;
        if want > r.proven_lower {
            let below = r.residuals.iter().find(|(k, _)| *k == want - 1).map(|x| x.1);
            ensure(below.is_some_and(|v| v > FIT_TOL), || format!("{name}: rank {} fits ({below:?})", want - 1))?;
        }
    }
    Ok(format!("{} rings match", expect.len()))
}

fn cli_search() -> Outcome {
    let mut detail = Vec::new();
    for (n, rings) in [("2", 2), ("4", 6)] {
        let o = Command::new(env!("CARGO_BIN_EXE_ringcli")).args(["search", "--n", n]).output().map_err(|e| e.to_string())?;
        let text = String::from_utf8_lossy(&o.stdout);
        ensure(o.status.success(), || format!("n={n} exit {:?}: {text}", o.status.code()))?;
        ensure(text.contains(&format!("{rings} rings; expected class structure: yes")), || text.to_string())?;
        detail.push(format!("n={n}: {rings} rings"));
    }
    Ok(detail.join(", "))
}

fn algebra() -> Outcome {
    let rings = catalog::all();
    for spec in &rings {
        for (check, ok, d) in verify_ring(spec, 11) {
            ensure(ok, || format!("{} {check}: {d}", spec.name))?;
        }
    }
    Ok(format!("{} rings: unity, bilinearity, associativity, commutativity, fast algorithm, gradients", rings.len()))
}

fn conv_grid() -> Outcome {
    let mut g = rng::seeded(77);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for spec in catalog::all() {
        let n = spec.n();
        for _ in 0..20 {
            let k = if g.random_bool(0.5) { 3 } else { 1 };
            let (h, w) = (g.random_range(1..8), g.random_range(1..8));
            let (ci, co) = (g.random_range(1..4), g.random_range(1..4));
            let x = FeatureTensor::random(h, w, ci, n, &mut g);
            let wt = WeightTensor::random(k, ci, co, n, &mut g);
            let bias = rng::normal_vec(&mut g, co * n);
            let direct = rconv(&x, &wt, &bias, &spec).map_err(|e| e.to_string())?;
            let fast = frconv(&x, &wt, &bias, &spec).map_err(|e| e.to_string())?;
            let real = real_conv2d(&expand_features(&x), &expand_weights(&wt, &spec), &bias).map_err(|e| e.to_string())?;
            let real = collapse_features(&real, n).map_err(|e| e.to_string())?;
            let dev = direct.max_abs_diff(&real).max(direct.max_abs_diff(&fast));
            worst = worst.max(dev);
            ensure(dev < 1e-9, || format!("{} {h}x{w} {ci}->{co} k{k}: {dev:.3e}", spec.name))?;
            cases += 1;
        }
    }
    ensure(cases >= 200, || format!("only {cases} cases"))?;
    Ok(format!("{cases} cases, max deviation {worst:.2e}"))
}

fn efficiency() -> Outcome {
    let mut g = rng::seeded(3);
    for spec in catalog::all() {
        let n = spec.n();
        let alg = spec.require_fast().map_err(|e| e.to_string())?;
        let x = FeatureTensor::random(6, 5, 2, n, &mut g);
        let w = WeightTensor::random(3, 2, 3, n, &mut g);
        let (_, mults) = frconv_counted(&x, &w, &vec![0.0; 3 * n], &spec).map_err(|e| e.to_string())?;
        let real = (6 * 5 * 9 * 2 * n * 3 * n) as u64;
        ensure(real * alg.m() as u64 == mults * (n * n) as u64, || format!("{}: {real}/{mults} != n^2/m", spec.name))?;
    }
    let eff = |name: &str| {
        let spec = catalog::lookup(name).unwrap();
        cost_profile(&spec, spec.require_fast().unwrap(), 8).multiplier_efficiency
    };
    let (h4, i4) = (eff("R_H4"), eff("R_I4"));
    ensure((h4 - 2.56).abs() < 1e-12 && (i4 - 4.0).abs() < 1e-12, || format!("8-bit efficiencies {h4} / {i4}"))?;
    let ratio = i4 / h4;
    ensure((ratio - 1.6).abs() < 0.05, || format!("ratio {ratio}"))?;
    Ok(format!("n^2/m exact on all rings; 8-bit R_H4 {h4:.2} vs R_I4 {i4:.2} (ratio {ratio:.4})"))
}

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, spec) in catalog::all().into_iter().enumerate() {
        let model = gradient_test_model(&spec, 500 + i as u64).map_err(|e| e.to_string())?;
        let x = FeatureTensor::random(5, 5, 1, spec.n(), &mut rng::seeded(600 + i as u64));
        let c = finite_difference_check(&model, &x, 30, 1e-5, 700 + i as u64).map_err(|e| e.to_string())?;
        worst = worst.max(c.max_relative_error);
        ensure(c.max_relative_error < 1e-4, || format!("{}: {:.3e}", spec.name, c.max_relative_error))?;
    }
    Ok(format!("max relative error {worst:.2e}"))
}

fn fixed_point() -> Outcome {
    let mut stimuli = 0;
    for n in [2usize, 4] {
        let f = DirectionalRelu::hadamard(n);
        let fi = IntegerDirectional::new(&f).map_err(|e| e.to_string())?;
        let mut g = rng::seeded(1000 + n as u64);
        for _ in 0..500_000 {
            let (y, n_y, n_x) = oracle::stimulus(&mut g, n);
            let (codes, _) = directional_relu_fixed(&y, &n_y, &n_x, &fi, &Envelope::declared(n)).map_err(|e| e.to_string())?;
            let want = oracle::reference(&y, &n_y, &n_x, &f);
            ensure(codes == want, || format!("y={y:?} n_y={n_y:?} n_x={n_x:?}: {codes:?} != {want:?}"))?;
            stimuli += 1;
        }
    }

    let task = ToyTask::default();
    let model = task.model(HiddenActivation::Hadamard).map_err(|e| e.to_string())?;
    let mut g = rng::seeded(41);
    let images: Vec<FeatureTensor> = (0..4).map(|_| FeatureTensor::random(8, 8, 1, 4, &mut g)).collect();
    let plan = calibrate(&model, &images).map_err(|e| e.to_string())?;
    for x in &images {
        let runs: Vec<_> = [1, 2, 4]
            .iter()
            .map(|t| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(*t).build().unwrap();
                pool.install(|| forward_fixed(&model, &plan, x))
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure(runs.windows(2).all(|w| w[0] == w[1]), || "thread count changes the result".into())?;
        check_envelope(&runs[0], 4).map_err(|e| e.to_string())?;
    }
    Ok(format!("{stimuli} stimuli exact, 1/2/4 threads identical, declared envelope respected"))
}

fn ablation() -> Outcome {
    let mut layers = 0;
    for seed in 0..5u64 {
        let model = ToyTask { seed, ..ToyTask::default() }.model(HiddenActivation::Hadamard).map_err(|e| e.to_string())?;
        let mut g = rng::seeded(seed + 90);
        let images: Vec<FeatureTensor> = (0..3).map(|_| FeatureTensor::random(8, 8, 1, 4, &mut g)).collect();
        let plan = calibrate(&model, &images).map_err(|e| e.to_string())?;
        let report = quantization_error_report(&model, &plan, &images).map_err(|e| e.to_string())?;
        for e in &report.layers {
            ensure(e.l2_on_the_fly <= e.l2_prequantized, || format!("seed {seed} layer {}: {e:?}", e.layer))?;
            layers += 1;
        }
    }
    Ok(format!("on-the-fly L2 <= pre-quantized L2 on {layers} layers"))
}

fn toy_task() -> Outcome {
    let task = ToyTask::default();
    let fh = task.run(HiddenActivation::Hadamard).map_err(|e| e.to_string())?;
    let fcw = task.run(HiddenActivation::ComponentRelu).map_err(|e| e.to_string())?;
    let (a, b) = (fh[task.steps], fcw[task.steps]);
    ensure(a < b, || format!("f_H {a:.3e} >= f_cw {b:.3e}"))?;
    Ok(format!("final loss f_H {a:.3e} < f_cw {b:.3e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("generic ranks of the catalog", granks),
        ("ringcli search for n = 2 and n = 4", cli_search),
        ("algebraic properties of all rings", algebra),
        ("convolution equivalence grid", conv_grid),
        ("multiplication efficiency", efficiency),
        ("gradients against finite differences", gradients),
        ("exact fixed-point directional ReLU", fixed_point),
        ("quantization ablation", ablation),
        ("directional vs component-wise ReLU", toy_task),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {} {name}: {d} ({secs:.1}s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
