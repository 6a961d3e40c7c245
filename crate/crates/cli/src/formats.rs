//! Versioned text formats for ring catalogs and models. Grammar in
//! `docs/file-formats.md`; floats use Rust's shortest round-trip notation, so
//! load → save reproduces a saved file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use ring_core::catalog;
use ring_core::fast::FastAlgorithm;
use ring_core::fixed::{LayerPlan, QFormat, QFormatPlan};
use ring_core::model::{Layer, LayerKind, ModelGraph, Nonlinearity, Skip};
use ring_core::nalgebra::DMatrix;
use ring_core::ring::{IndexingTensor, RingSpec};
use ring_core::tensor::{DirectionalRelu, WeightTensor};

use crate::error::{io, CliError, Result};

pub const CATALOG_HEADER: &str = "ring-catalog v1";
pub const MODEL_HEADER: &str = "ring-model v1";

fn floats(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn matrix_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))).map(|(r, c)| m[(r, c)]).collect()
}

/// Line reader with `key value…` records; blank lines and `#` comments skipped.
struct Reader<'a> {
    file: String,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(file: &str, text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self { file: file.into(), lines, pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> CliError {
        let line = self.lines.get(self.pos.saturating_sub(1)).map_or(0, |l| l.0);
        CliError::Parse { file: self.file.clone(), line, msg: msg.into() }
    }

    fn raw(&mut self) -> Result<&'a str> {
        let l = self.lines.get(self.pos).map(|l| l.1);
        self.pos += 1;
        l.ok_or_else(|| self.err("unexpected end of file"))
    }

    /// Next record, which must start with `key`; returns the values.
    fn record(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.raw()?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some(k) if k == key => Ok(it.collect()),
            other => Err(self.err(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn one(&mut self, key: &str) -> Result<&'a str> {
        let v = self.record(key)?;
        if v.len() != 1 {
            return Err(self.err(format!("`{key}` takes one value")));
        }
        Ok(v[0])
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self.one(key)?;
        self.parse(v)
    }

    fn floats(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let vals = self.record(key)?;
        if vals.len() != len {
            return Err(self.err(format!("`{key}` needs {len} values, found {}", vals.len())));
        }
        vals.iter()
            .map(|s| {
                let v: f64 = self.parse(s)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(self.err("non-finite value"))
                }
            })
            .collect()
    }

    fn end(&mut self) -> Result<()> {
        self.record("end")?;
        if self.pos != self.lines.len() {
            return Err(self.err("content after `end`"));
        }
        Ok(())
    }
}

fn write_ring_body(out: &mut String, spec: &RingSpec) {
    let n = spec.n();
    writeln!(out, "n {n}").unwrap();
    let m: Vec<String> = spec.m_tensor().entries().iter().map(|e| e.to_string()).collect();
    writeln!(out, "M {}", m.join(" ")).unwrap();
    match spec.fast() {
        Some(alg) => {
            writeln!(out, "fast {}", alg.m()).unwrap();
            writeln!(out, "tg {}", floats(matrix_row_major(alg.t_g()))).unwrap();
            writeln!(out, "tx {}", floats(matrix_row_major(alg.t_x()))).unwrap();
            writeln!(out, "tz {}", floats(matrix_row_major(alg.t_z()))).unwrap();
        }
        None => writeln!(out, "fast none").unwrap(),
    }
}

/// Ring body after its name. The fast algorithm is attached without
/// verification so a corrupted file can be diagnosed by `verify`.
fn read_ring_body(r: &mut Reader, name: &str) -> Result<RingSpec> {
    let n = r.usize("n")?;
    if n == 0 || n > 16 {
        return Err(r.err(format!("unsupported dimension {n}")));
    }
    let raw = r.record("M")?;
    if raw.len() != n * n * n {
        return Err(r.err(format!("M needs {} entries", n * n * n)));
    }
    let entries: Vec<i64> = raw.iter().map(|s| r.parse(s)).collect::<Result<_>>()?;
    let m = IndexingTensor::from_entries(n, &entries)?;
    let spec = RingSpec::new(name, m);
    let fast = r.one("fast")?;
    if fast == "none" {
        return Ok(spec);
    }
    let k: usize = r.parse(fast)?;
    let t_g = DMatrix::from_row_slice(k, n, &r.floats("tg", k * n)?);
    let t_x = DMatrix::from_row_slice(k, n, &r.floats("tx", k * n)?);
    let t_z = DMatrix::from_row_slice(n, k, &r.floats("tz", n * k)?);
    Ok(spec.with_fast_unchecked(FastAlgorithm::new(t_g, t_x, t_z)?))
}

pub fn write_catalog(rings: &[RingSpec]) -> String {
    let mut out = format!("{CATALOG_HEADER}\nrings {}\n", rings.len());
    for spec in rings {
        writeln!(out, "ring {}", spec.name).unwrap();
        write_ring_body(&mut out, spec);
    }
    out.push_str("end\n");
    out
}

pub fn parse_catalog(file: &str, text: &str) -> Result<Vec<RingSpec>> {
    let mut r = Reader::new(file, text);
    if r.raw()? != CATALOG_HEADER {
        return Err(r.err(format!("expected header `{CATALOG_HEADER}`")));
    }
    let count = r.usize("rings")?;
    let mut rings = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.one("ring")?;
        rings.push(read_ring_body(&mut r, name)?);
    }
    r.end()?;
    Ok(rings)
}

pub fn load_catalog(path: &Path) -> Result<Vec<RingSpec>> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    parse_catalog(&path.display().to_string(), &text)
}

fn q(f: &QFormat) -> String {
    format!("{}:{}", f.total_bits, f.frac_bits)
}

fn formats(v: &[QFormat]) -> String {
    v.iter().map(q).collect::<Vec<_>>().join(" ")
}

fn parse_q(r: &Reader, s: &str) -> Result<QFormat> {
    let (t, f) = s.split_once(':').ok_or_else(|| r.err(format!("format `{s}` is not total:frac")))?;
    let total: u32 = r.parse(t)?;
    if !(2..=32).contains(&total) {
        return Err(r.err(format!("total bits {total} out of range")));
    }
    Ok(QFormat::new(total, r.parse(f)?))
}

fn nonlinearity_name(nl: &Nonlinearity) -> &'static str {
    match nl {
        Nonlinearity::None => "none",
        Nonlinearity::ComponentRelu => "relu",
        Nonlinearity::DirectionalRelu(_) => "dirrelu",
    }
}

pub fn write_model(model: &ModelGraph) -> String {
    let mut out = format!("{MODEL_HEADER}\n");
    let named = catalog::lookup(&model.ring.name).is_some_and(|c| c == model.ring);
    if named {
        writeln!(out, "ring {}", model.ring.name).unwrap();
    } else {
        writeln!(out, "ring inline {}", model.ring.name).unwrap();
        write_ring_body(&mut out, &model.ring);
    }
    writeln!(out, "layers {}", model.layers.len()).unwrap();
    for (l, layer) in model.layers.iter().enumerate() {
        let kind = match layer.kind {
            LayerKind::Conv3x3 => "conv3x3",
            LayerKind::Conv1x1 => "conv1x1",
        };
        writeln!(out, "layer {l} {kind} {} {} {}", layer.c_in(), layer.c_out(), nonlinearity_name(&layer.nonlinearity)).unwrap();
        if let Nonlinearity::DirectionalRelu(f) = &layer.nonlinearity {
            writeln!(out, "u {}", floats(f.u().iter().copied())).unwrap();
            writeln!(out, "v {}", floats(f.v().iter().copied())).unwrap();
        }
        writeln!(out, "weights {}", floats(layer.weights.data().iter().copied())).unwrap();
        writeln!(out, "bias {}", floats(layer.bias.iter().copied())).unwrap();
    }
    writeln!(out, "skips {}", model.skips.len()).unwrap();
    for s in &model.skips {
        writeln!(out, "skip {} {}", s.from, s.to).unwrap();
    }
    match &model.plan {
        None => out.push_str("plan none\n"),
        Some(plan) => {
            out.push_str("plan v1\n");
            for (l, lp) in plan.layers.iter().enumerate() {
                writeln!(out, "qlayer {l} {} {}", q(&lp.weight), lp.acc_bits).unwrap();
                writeln!(out, "input {}", formats(&lp.input)).unwrap();
                writeln!(out, "pre {}", formats(&lp.pre_activation)).unwrap();
                writeln!(out, "hidden {}", formats(&lp.hidden)).unwrap();
                writeln!(out, "output {}", formats(&lp.output)).unwrap();
            }
        }
    }
    out.push_str("end\n");
    out
}

pub fn parse_model(file: &str, text: &str) -> Result<ModelGraph> {
    let mut r = Reader::new(file, text);
    if r.raw()? != MODEL_HEADER {
        return Err(r.err(format!("expected header `{MODEL_HEADER}`")));
    }
    let ring_rec = r.record("ring")?;
    let ring = match ring_rec.as_slice() {
        ["inline", name] => read_ring_body(&mut r, name)?,
        [name] => catalog::lookup(name).ok_or_else(|| r.err(format!("unknown ring `{name}`")))?,
        _ => return Err(r.err("`ring` takes a catalog name or `inline <name>`")),
    };
    let n = ring.n();
    let count = r.usize("layers")?;
    let mut layers = Vec::with_capacity(count);
    for l in 0..count {
        let rec = r.record("layer")?;
        if rec.len() != 5 {
            return Err(r.err("`layer` takes: index kind c_in c_out nonlinearity"));
        }
        if r.parse::<usize>(rec[0])? != l {
            return Err(r.err(format!("expected layer {l}")));
        }
        let kind = match rec[1] {
            "conv3x3" => LayerKind::Conv3x3,
            "conv1x1" => LayerKind::Conv1x1,
            k => return Err(r.err(format!("unknown layer kind `{k}`"))),
        };
        let (ci, co): (usize, usize) = (r.parse(rec[2])?, r.parse(rec[3])?);
        let nonlinearity = match rec[4] {
            "none" => Nonlinearity::None,
            "relu" => Nonlinearity::ComponentRelu,
            "dirrelu" => {
                let u = r.floats("u", n * n)?;
                let v = r.floats("v", n * n)?;
                Nonlinearity::DirectionalRelu(DirectionalRelu::new(n, u, v)?)
            }
            k => return Err(r.err(format!("unknown non-linearity `{k}`"))),
        };
        let k = kind.kernel();
        let weights = WeightTensor::from_data(k, ci, co, n, r.floats("weights", k * k * ci * co * n)?)?;
        let bias = r.floats("bias", co * n)?;
        layers.push(Layer { kind, weights, bias, nonlinearity });
    }
    let count = r.usize("skips")?;
    let mut skips = Vec::with_capacity(count);
    for _ in 0..count {
        let rec = r.record("skip")?;
        if rec.len() != 2 {
            return Err(r.err("`skip` takes: from to"));
        }
        skips.push(Skip { from: r.parse(rec[0])?, to: r.parse(rec[1])? });
    }
    let mut model = ModelGraph::new(ring, layers, skips)?;
    let plan = r.one("plan")?;
    if plan == "v1" {
        let mut plan = QFormatPlan { layers: Vec::with_capacity(count) };
        for l in 0..model.layers.len() {
            let rec = r.record("qlayer")?;
            if rec.len() != 3 || r.parse::<usize>(rec[0])? != l {
                return Err(r.err(format!("expected `qlayer {l} <weight format> <acc bits>`")));
            }
            let weight = parse_q(&r, rec[1])?;
            let acc_bits = r.parse(rec[2])?;
            let mut comp = |key: &str| -> Result<Vec<QFormat>> {
                let vals = r.record(key)?;
                if vals.len() != n {
                    return Err(r.err(format!("`{key}` needs {n} formats")));
                }
                vals.iter().map(|s| parse_q(&r, s)).collect()
            };
            let input = comp("input")?;
            let pre_activation = comp("pre")?;
            let hidden = comp("hidden")?;
            let output = comp("output")?;
            plan.layers.push(LayerPlan { weight, input, pre_activation, hidden, output, acc_bits });
        }
        model.plan = Some(plan);
    } else if plan != "none" {
        return Err(r.err("`plan` is `none` or `v1`"));
    }
    r.end()?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<ModelGraph> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    parse_model(&path.display().to_string(), &text)
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io(path))
}
