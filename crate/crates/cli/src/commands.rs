//! Command implementations. Each returns its report text and exit code so
//! the binary stays a thin shell and tests can call commands directly.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ring_core::catalog;
use ring_core::fast::{character_algorithm, cost_profile, minimal_algorithm, verify_fast};
use ring_core::fixed::{calibrate, quantization_error_report};
use ring_core::model::{finite_difference_check, forward, gradient_test_model, HiddenActivation, Mode, ToyTask};
use ring_core::ring::{check_associativity, check_commutativity, ring_multiply, RingElement, RingSpec};
use ring_core::rng;
use ring_core::search::{find_isomorphism, grank_estimate, search_rings, Equivalence, DEFAULT_RESTARTS};
use ring_core::tensor::{expand_features, expand_weights, frconv_counted, real_conv2d, unity_of, FeatureTensor, WeightTensor};
use ring_core::RingError;

use crate::error::{CliError, Result};
use crate::formats::{load_catalog, load_model, save_text, write_catalog, write_model};
use crate::image::{format_psnr, psnr, Image};

#[derive(Debug, Parser)]
#[command(name = "ringcli", version, about = "Ring-algebra CNN toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search exclusive rings of dimension n and report the minimal ones.
    Search(SearchArgs),
    /// Check algebraic properties, the fast algorithm and gradients of rings.
    Verify(VerifyArgs),
    /// Run a model on an image.
    Infer(InferArgs),
    /// Count and time fast ring convolutions against the real expansion.
    Bench(BenchArgs),
    /// Choose fixed-point formats for a model from calibration images.
    Calibrate(CalibrateArgs),
    /// Train a three-layer model on the identity toy task.
    TrainToy(TrainToyArgs),
    /// Estimate the generic rank of a ring's indexing tensor.
    Grank(GrankArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Largest trial rank.
    #[arg(long, default_value_t = 9)]
    pub r_max: usize,
    /// Catalog file for the discovered rings.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-pattern CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Ring name (catalog, or inside --catalog).
    pub name: Option<String>,
    #[arg(long)]
    pub ring: Option<String>,
    /// Catalog file to read rings from instead of the built-in catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Float,
    Fast,
    Fixed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Float => Mode::FloatDirect,
            ModeArg::Fast => Mode::FloatFast,
            ModeArg::Fixed => Mode::Fixed,
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input PGM/PPM.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Float)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reference image for PSNR.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated ring names; all catalog rings by default.
    #[arg(long, value_delimiter = ',')]
    pub ring: Vec<String>,
    /// Shapes `HxWxC_INxC_OUT` in tuple channels, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "16x16x4x4,32x32x8x8")]
    pub shape: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Calibration images.
    #[arg(long = "calib", required = true, num_args = 1..)]
    pub images: Vec<PathBuf>,
    /// Model file with the plan attached.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-layer error report.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    /// Directional ReLU with the Hadamard matrix.
    Fh,
    /// Component-wise ReLU.
    Fcw,
    None,
}

impl From<ActivationArg> for HiddenActivation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Fh => HiddenActivation::Hadamard,
            ActivationArg::Fcw => HiddenActivation::ComponentRelu,
            ActivationArg::None => HiddenActivation::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[arg(long, default_value = "R_I4")]
    pub ring: String,
    #[arg(long, value_enum, default_value_t = ActivationArg::Fh)]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub images: usize,
    /// Loss trace CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GrankArgs {
    #[arg(long)]
    pub ring: String,
    #[arg(long, default_value_t = 9)]
    pub r_max: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

/// Text for stdout plus the process exit code.
#[derive(Debug, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

impl Outcome {
    fn new(stdout: String, pass: bool) -> Self {
        Self { stdout, code: if pass { 0 } else { 1 } }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Search(a) => search(&a),
        Command::Verify(a) => verify(&a),
        Command::Infer(a) => infer(&a),
        Command::Bench(a) => bench(&a),
        Command::Calibrate(a) => calibrate_cmd(&a),
        Command::TrainToy(a) => train_toy_cmd(&a),
        Command::Grank(a) => grank(&a),
    }
}

fn ring_by_name(name: &str) -> Result<RingSpec> {
    catalog::lookup(name).ok_or_else(|| CliError::Usage(format!("unknown ring `{name}`")))
}

fn signs(s: &[i8]) -> String {
    s.iter().map(|v| if *v > 0 { '+' } else { '-' }).collect()
}

fn fast_for(spec: RingSpec) -> RingSpec {
    let alg = minimal_algorithm(&spec).or_else(|_| character_algorithm(&spec));
    match alg {
        Ok(alg) => spec.clone().with_fast(alg).unwrap_or(spec),
        Err(_) => spec,
    }
}

pub fn search(a: &SearchArgs) -> Result<Outcome> {
    let res = search_rings(a.n, a.r_max, a.restarts, a.seed);
    let res = match res {
        Err(e @ RingError::Unresolved { .. }) => return Ok(Outcome::new(format!("search failed: {e}\n"), false)),
        other => other?,
    };
    let known = catalog::all();
    let mut out = String::new();
    let mut csv = String::from("class,class_size,index_pattern,signs,grank,proven_lower,kept,isomorphic_to\n");
    let mut found = Vec::new();
    writeln!(out, "n={}: {} raw permutations, {} classes", res.n, res.raw_permutations, res.classes.len()).unwrap();
    for class in &res.classes {
        let p: Vec<String> = class.p.iter().map(|v| v.to_string()).collect();
        let mut names = Vec::new();
        for (k, cand) in class.variants.iter().enumerate() {
            let m = cand.tensor().expect("variants carry signs");
            let hit = known.iter().find(|s| find_isomorphism(&m, s.m_tensor(), Equivalence::Permutation).is_some());
            let label = hit.map_or("-".to_string(), |s| s.name.clone());
            names.push(label);
            found.push(fast_for(cand.to_spec(&format!("found-n{}-c{}-{k}", res.n, class.class_id)).expect("signed")));
        }
        writeln!(
            out,
            "class {} size {} min grank {}: {} variants [{}]",
            class.class_id,
            class.class_size,
            class.min_grank,
            class.variants.len(),
            names.join(", ")
        )
        .unwrap();
        for pr in &class.patterns {
            let kept = class.variants.iter().position(|v| v.s.as_deref() == Some(&pr.s[..]));
            let iso = kept.map_or("", |k| names[k].as_str());
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                class.class_id,
                class.class_size,
                p.join(" "),
                signs(&pr.s),
                pr.report.grank,
                pr.report.proven_lower,
                kept.is_some(),
                iso
            )
            .unwrap();
        }
    }
    let total: usize = res.classes.iter().map(|c| c.variants.len()).sum();
    let all_known = found.len() == total
        && res.classes.iter().all(|c| c.variants.iter().all(|v| {
            let m = v.tensor().expect("signed");
            known.iter().any(|s| find_isomorphism(&m, s.m_tensor(), Equivalence::Permutation).is_some())
        }));
    let expected = match a.n {
        2 => total == 2,
        4 => {
            let mut shape: Vec<(usize, usize)> = res.classes.iter().map(|c| (c.min_grank, c.variants.len())).collect();
            shape.sort();
            shape == [(4, 2), (5, 4)]
        }
        _ => false,
    };
    writeln!(out, "{total} rings; expected class structure: {}", if expected && all_known { "yes" } else { "no" }).unwrap();
    if let Some(path) = &a.out {
        save_text(path, &write_catalog(&found))?;
    }
    if let Some(path) = &a.csv {
        save_text(path, &csv)?;
    }
    Ok(Outcome::new(out, expected && all_known))
}

/// Per-ring check results: `(name, pass, detail)`.
pub fn verify_ring(spec: &RingSpec, seed: u64) -> Vec<(&'static str, bool, String)> {
    let n = spec.n();
    let mut g = rng::seeded(seed);
    let mut checks = Vec::new();

    let one = RingElement(unity_of(spec));
    let mut dev: f64 = 0.0;
    let mut bilinear: f64 = 0.0;
    for _ in 0..100 {
        let (a, b, c) = (RingElement::random(n, &mut g), RingElement::random(n, &mut g), RingElement::random(n, &mut g));
        let mul = |x: &RingElement, y: &RingElement| ring_multiply(spec, x, y).expect("dimensions agree");
        dev = dev.max(mul(&one, &a).max_abs_diff(&a)).max(mul(&a, &one).max_abs_diff(&a));
        let alpha = rng::uniform(&mut g, -2.0, 2.0);
        let lhs = mul(&a.scaled(alpha).add(&b), &c);
        let rhs = mul(&a, &c).scaled(alpha).add(&mul(&b, &c));
        bilinear = bilinear.max(lhs.max_abs_diff(&rhs));
    }
    checks.push(("unity", dev < 1e-12, format!("max deviation {dev:.3e}")));
    checks.push(("bilinearity", bilinear < 1e-10, format!("max deviation {bilinear:.3e}")));

    let assoc = check_associativity(spec, 200, seed);
    checks.push(("associativity", assoc.associative, format!("max deviation {:.3e}", assoc.max_deviation)));

    let comm = check_commutativity(spec, 200, seed);
    checks.push((
        "commutativity",
        comm.elements_commute == comm.basis_commutes,
        format!("commutative {}, basis matrices commute {}", comm.elements_commute, comm.basis_commutes),
    ));

    match spec.fast() {
        Some(alg) => match verify_fast(spec, alg, 1000, seed) {
            Ok(r) => checks.push((
                "fast",
                r.pass,
                format!("m={} identity deviation {:.3e}, sample deviation {:.3e}", alg.m(), r.identity_deviation, r.sample_deviation),
            )),
            Err(e) => checks.push(("fast", false, e.to_string())),
        },
        None => checks.push(("fast", false, "no fast algorithm".into())),
    }

    let grad = gradient_test_model(spec, seed).and_then(|model| {
        let x = FeatureTensor::random(4, 4, 1, n, &mut g);
        finite_difference_check(&model, &x, 20, 1e-5, seed)
    });
    match grad {
        Ok(c) => checks.push(("gradient", c.max_relative_error < 1e-4, format!("max relative error {:.3e}", c.max_relative_error))),
        Err(e) => checks.push(("gradient", false, e.to_string())),
    }
    checks
}

pub fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let name = a.name.as_ref().or(a.ring.as_ref());
    let rings: Vec<RingSpec> = match (&a.catalog, name) {
        (Some(path), name) => {
            let all = load_catalog(path)?;
            match name {
                Some(n) => all.into_iter().filter(|s| s.name.eq_ignore_ascii_case(n)).collect(),
                None => all,
            }
        }
        (None, Some(n)) => vec![ring_by_name(n)?],
        (None, None) => catalog::all(),
    };
    if rings.is_empty() {
        return Err(CliError::Usage("no matching ring".into()));
    }
    let mut out = String::new();
    let mut pass = true;
    for spec in &rings {
        for (check, ok, detail) in verify_ring(spec, a.seed) {
            pass &= ok;
            writeln!(out, "{} {check} {} ({detail})", spec.name, if ok { "pass" } else { "FAIL" }).unwrap();
        }
    }
    Ok(Outcome::new(out, pass))
}

pub fn infer(a: &InferArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let img = Image::load(&a.input)?;
    let n = model.n();
    let x = img.to_features(n);
    if x.channels != model.input_channels() || model.output_channels() != x.channels {
        return Err(CliError::Ring(RingError::ShapeMismatch(format!(
            "{}-channel image packs into {} {n}-tuples; model maps {} to {}",
            img.channels,
            x.channels,
            model.input_channels(),
            model.output_channels()
        ))));
    }
    let y = forward(&model, &x, a.mode.into())?;
    let result = Image::from_features(y.output(), img.channels)?;
    let mut out = String::new();
    if let Some(path) = &a.out {
        result.save(path)?;
        writeln!(out, "wrote {}", path.display()).unwrap();
    }
    if let Some(path) = &a.reference {
        let reference = Image::load(path)?;
        writeln!(out, "psnr {}", format_psnr(psnr(&result, &reference)?)).unwrap();
    }
    Ok(Outcome::new(out, true))
}

fn parse_shape(s: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = s.split('x').map(|p| p.trim().parse::<usize>()).collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("shape `{s}` is not HxWxC_INxC_OUT")))?;
    match parts.as_slice() {
        [h, w, ci, co] if parts.iter().all(|v| *v > 0) => Ok([*h, *w, *ci, *co]),
        _ => Err(CliError::Usage(format!("shape `{s}` is not HxWxC_INxC_OUT"))),
    }
}

pub const BENCH_HEADER: &str = "ring,op,height,width,c_in,c_out,kernel,reps,wall_ns,real_mults,mults_per_output,efficiency";

pub fn bench(a: &BenchArgs) -> Result<Outcome> {
    let rings: Vec<RingSpec> = if a.ring.is_empty() { catalog::all() } else { a.ring.iter().map(|r| ring_by_name(r)).collect::<Result<_>>()? };
    if a.kernel % 2 == 0 {
        return Err(CliError::Usage("kernel size must be odd".into()));
    }
    let shapes: Vec<[usize; 4]> = a.shape.iter().map(|s| parse_shape(s)).collect::<Result<_>>()?;
    let reps = a.reps.max(1);
    let mut csv = format!("{BENCH_HEADER}\n");
    let mut out = String::new();
    let mut pass = true;
    let mut g = rng::seeded(a.seed);
    for spec in &rings {
        let n = spec.n();
        let alg = spec.require_fast()?;
        let k = a.kernel;
        for &[h, w, ci, co] in &shapes {
            let x = FeatureTensor::random(h, w, ci, n, &mut g);
            let wt = WeightTensor::random(k, ci, co, n, &mut g);
            let bias = vec![0.0; co * n];
            let (xr, wr) = (expand_features(&x), expand_weights(&wt, spec));
            let t0 = Instant::now();
            for _ in 0..reps {
                real_conv2d(&xr, &wr, &bias)?;
            }
            let real_ns = t0.elapsed().as_nanos() / reps as u128;
            let real_mults = (h * w * k * k * ci * n * co * n) as u64;
            let t0 = Instant::now();
            let mut mults = 0;
            for _ in 0..reps {
                mults = frconv_counted(&x, &wt, &bias, spec)?.1;
            }
            let ring_ns = t0.elapsed().as_nanos() / reps as u128;
            let outputs = (h * w * co * n) as f64;
            let exact = real_mults * alg.m() as u64 == mults * (n * n) as u64;
            pass &= exact;
            let eff = real_mults as f64 / mults as f64;
            for (op, ns, m, e) in [("real", real_ns, real_mults, 1.0), ("frconv", ring_ns, mults, eff)] {
                writeln!(csv, "{},{op},{h},{w},{ci},{co},{k},{reps},{ns},{m},{},{}", spec.name, m as f64 / outputs, e).unwrap();
            }
            writeln!(
                out,
                "{:8} {h}x{w}x{ci}x{co} k{k}: mults {mults} vs {real_mults} (x{eff:.4}, n^2/m {}) time {:.3} ms vs {:.3} ms",
                spec.name,
                if exact { "exact" } else { "MISMATCH" },
                ring_ns as f64 / 1e6,
                real_ns as f64 / 1e6
            )
            .unwrap();
        }
        let p = cost_profile(spec, alg, 8);
        writeln!(
            out,
            "{:8} 8-bit operands widen to {:?}; multiplier efficiency {:.3}",
            spec.name, p.bitwidth_pair, p.multiplier_efficiency
        )
        .unwrap();
    }
    if let Some(path) = &a.csv {
        save_text(path, &csv)?;
    }
    Ok(Outcome::new(out, pass))
}

pub fn calibrate_cmd(a: &CalibrateArgs) -> Result<Outcome> {
    let mut model = load_model(&a.model)?;
    let images: Vec<FeatureTensor> =
        a.images.iter().map(|p| Image::load(p).map(|i| i.to_features(model.n()))).collect::<Result<_>>()?;
    let plan = calibrate(&model, &images)?;
    let report = quantization_error_report(&model, &plan, &images)?;
    let mut out = String::new();
    let mut csv = String::from("layer,max_abs,mean_abs,l2_on_the_fly,l2_prequantized,saturations,acc_bits\n");
    for (e, lp) in report.layers.iter().zip(&plan.layers) {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            e.layer, e.max_abs, e.mean_abs, e.l2_on_the_fly, e.l2_prequantized, e.saturations, lp.acc_bits
        )
        .unwrap();
        writeln!(
            out,
            "layer {}: max |err| {:.3e}, L2 on-the-fly {:.4e} vs pre-quantized {:.4e}, {} saturations, {}-bit accumulators",
            e.layer, e.max_abs, e.l2_on_the_fly, e.l2_prequantized, e.saturations, lp.acc_bits
        )
        .unwrap();
    }
    writeln!(
        out,
        "psnr fixed {} pre-quantized {} delta {}",
        format_psnr(report.psnr),
        format_psnr(report.psnr_prequantized),
        format_psnr(report.psnr_delta())
    )
    .unwrap();
    model.plan = Some(plan);
    save_text(&a.out, &write_model(&model))?;
    if let Some(path) = &a.csv {
        save_text(path, &csv)?;
    }
    Ok(Outcome::new(out, true))
}

pub fn train_toy_cmd(a: &TrainToyArgs) -> Result<Outcome> {
    let spec = ring_by_name(&a.ring)?;
    if !(a.lr.is_finite() && a.lr >= 0.0) || a.images == 0 {
        return Err(CliError::Usage("learning rate must be finite and non-negative, images positive".into()));
    }
    let task = ToyTask { steps: a.steps, learning_rate: a.lr, seed: a.seed, images: a.images, ..ToyTask::default() };
    let (model, trace) = match task.run_on(&spec, a.activation.into()) {
        Err(e @ RingError::Divergence { .. }) => return Ok(Outcome::new(format!("training failed: {e}\n"), false)),
        other => other?,
    };
    let (first, last) = (trace[0], trace[trace.len() - 1]);
    let out = format!("initial loss {first:.6e}\nfinal loss {last:.6e}\nratio {:.6e}\n", last / first);
    if let Some(path) = &a.csv {
        let mut csv = String::from("step,loss\n");
        for (s, l) in trace.iter().enumerate() {
            writeln!(csv, "{s},{l:?}").unwrap();
        }
        save_text(path, &csv)?;
    }
    if let Some(path) = &a.out {
        save_text(path, &write_model(&model))?;
    }
    Ok(Outcome::new(out, true))
}

pub fn grank(a: &GrankArgs) -> Result<Outcome> {
    let spec = ring_by_name(&a.ring)?;
    let mut out = String::new();
    match grank_estimate(spec.m_tensor(), a.r_max, a.restarts, a.seed) {
        Ok(report) => {
            writeln!(out, "{} proven lower bound {}", spec.name, report.proven_lower).unwrap();
            for (r, res) in &report.residuals {
                writeln!(out, "rank {r} residual {res:.3e}").unwrap();
            }
            writeln!(out, "grank {}", report.grank).unwrap();
            Ok(Outcome::new(out, true))
        }
        Err(e @ RingError::Unresolved { .. }) => {
            writeln!(out, "{}: {e}", spec.name).unwrap();
            Ok(Outcome::new(out, false))
        }
        Err(e) => Err(e.into()),
    }
}
