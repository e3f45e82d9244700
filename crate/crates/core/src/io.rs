//! JSON system specs and CSV tables.
//!
//! Spec layout (matrices row-major):
//!
//! ```text
//! {"d": 1, "m": 0, "q": 0, "A": [[-1]], "kernel": [{"c":..,"m":..,"sigma":..,"omega":..,"phase":"cos"}],
//!  "L": {"r": 1, "atoms": [{"theta": -1, "M": [[1]]}], "density": [{"a": -1, "b": 0, "coeffs": [[[..]], ..]}]},
//!  "K": .., "C": .., "D": .., "r": 1, "x0": [1],
//!  "phi": {"start": -1, "step": 1, "samples": [[1], [1]]}, "u": .., "f": .., "notes": ".."}
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::delay_solver::{SolveReport, SystemSpec};
use crate::error::{Error, Result};
use crate::measures::{Atom, DelayMeasure, DensityPiece};
use crate::resolvent::ResolventFamily;
use crate::signals::{Kernel, KernelTerm, Trajectory};
use crate::spectral::SpectrumReport;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    d: usize,
    #[serde(default)]
    m: usize,
    #[serde(default)]
    q: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(default)]
    kernel: Vec<KernelTerm>,
    #[serde(rename = "L")]
    l: RawMeasure,
    #[serde(rename = "K", default)]
    k: Option<RawMeasure>,
    #[serde(rename = "C", default)]
    c: Option<RawMeasure>,
    #[serde(rename = "D", default)]
    dm: Option<RawMeasure>,
    r: f64,
    x0: Vec<f64>,
    phi: RawTrajectory,
    #[serde(default)]
    u: Option<RawTrajectory>,
    #[serde(default)]
    f: Option<RawTrajectory>,
    #[serde(default)]
    #[allow(dead_code)]
    notes: Option<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    r: f64,
    #[serde(default)]
    atoms: Vec<RawAtom>,
    #[serde(default)]
    density: Vec<RawPiece>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    theta: f64,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    a: f64,
    b: f64,
    coeffs: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectory {
    start: f64,
    step: f64,
    samples: Vec<Vec<f64>>,
}

fn matrix(field: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let (n, m) = shape;
    if rows.len() != n || rows.iter().any(|row| row.len() != m) {
        let got_cols = rows.first().map_or(0, Vec::len);
        return Err(Error::spec(
            field,
            format!("expected a {n}x{m} matrix, got {}x{got_cols}", rows.len()),
        ));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn measure(field: &str, raw: RawMeasure, r: f64, shape: (usize, usize)) -> Result<DelayMeasure> {
    if raw.r != r {
        return Err(Error::spec(
            field,
            format!("r = {} differs from top-level r = {r}", raw.r),
        ));
    }
    let atoms = raw
        .atoms
        .iter()
        .enumerate()
        .map(|(i, atom)| {
            Ok(Atom {
                theta: atom.theta,
                matrix: matrix(&format!("{field}.atoms[{i}].M"), &atom.m, shape)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let density = raw
        .density
        .iter()
        .enumerate()
        .map(|(i, piece)| {
            let coeffs = piece
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| matrix(&format!("{field}.density[{i}].coeffs[{k}]"), c, shape))
                .collect::<Result<Vec<_>>>()?;
            Ok(DensityPiece {
                lo: piece.a,
                hi: piece.b,
                coeffs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DelayMeasure::new(r, shape.0, shape.1, atoms, density).map_err(|e| match e {
        Error::InvalidMeasure(msg) => Error::spec(field, msg),
        other => other,
    })
}

fn trajectory(field: &str, raw: RawTrajectory, dim: usize) -> Result<Trajectory> {
    if let Some((k, s)) = raw.samples.iter().enumerate().find(|(_, s)| s.len() != dim) {
        return Err(Error::spec(
            field,
            format!("sample {k} has length {}, expected {dim}", s.len()),
        ));
    }
    Trajectory::new(raw.start, raw.step, raw.samples).map_err(|e| Error::spec(field, e.to_string()))
}

/// Parse and validate a JSON system spec.
pub fn parse_spec(text: &str) -> Result<SystemSpec> {
    let raw: RawSpec = serde_json::from_str(text)?;
    let (d, m, q, r) = (raw.d, raw.m, raw.q, raw.r);
    if d == 0 {
        return Err(Error::spec("d", "state dimension must be positive"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::spec("r", format!("must be positive, got {r}")));
    }
    let state = matrix("A", &raw.a, (d, d))?;
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::spec("A", "entries must be finite"));
    }
    let kernel = Kernel::new(raw.kernel).map_err(|e| Error::spec("kernel", e.to_string()))?;
    let delay = measure("L", raw.l, r, (d, d))?;
    if raw.x0.len() != d {
        return Err(Error::spec("x0", format!("expected length {d}, got {}", raw.x0.len())));
    }
    let phi = trajectory("phi", raw.phi, d)?;
    let mut spec = SystemSpec::new(state, kernel, delay, DVector::from_vec(raw.x0), phi);
    spec.input_dim = m;
    spec.output_dim = q;
    if let Some(k) = raw.k {
        if m == 0 {
            return Err(Error::spec("K", "given but m = 0"));
        }
        spec.input_delay = Some(measure("K", k, r, (d, m))?);
    }
    if let Some(c) = raw.c {
        if q == 0 {
            return Err(Error::spec("C", "given but q = 0"));
        }
        spec.output_state = Some(measure("C", c, r, (q, d))?);
    }
    if let Some(dm) = raw.dm {
        if q == 0 || m == 0 {
            return Err(Error::spec("D", "given but m = 0 or q = 0"));
        }
        spec.output_input = Some(measure("D", dm, r, (q, m))?);
    }
    if let Some(u) = raw.u {
        if m == 0 {
            return Err(Error::spec("u", "given but m = 0"));
        }
        spec.input = Some(trajectory("u", u, m)?);
    }
    if let Some(f) = raw.f {
        spec.forcing = Some(trajectory("f", f, d)?);
    }
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<SystemSpec> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_spec(&text)
}

/// Time label for node `k` of a grid with the given step: the exact multiple `k * step`,
/// rounded to the step's resolution so that `0.1 * 3` prints as `0.3`.
fn time_label(k: i64, step: f64) -> String {
    let t = k as f64 * step;
    let decimals = (-step.log10()).ceil().max(0.0) as usize + 3;
    let rounded: f64 = format!("{t:.decimals$}").parse().expect("formatted float");
    format!("{}", rounded + 0.0)
}

fn floats(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| format!("{v:?}"))
}

/// `t,x[0],..,y[0],..`; `y` columns are empty before `t = 0`.
pub fn write_trace(report: &SolveReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = report.x.dim();
    let q = report.y.as_ref().map_or(0, Trajectory::dim);
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("x[{i}]")));
    header.extend((0..q).map(|i| format!("y[{i}]")));
    w.write_record(&header)?;
    let origin = report.origin_index();
    for k in 0..report.x.len() {
        let mut row = vec![time_label(k as i64 - origin as i64, report.step)];
        row.extend(floats(report.x.sample(k)));
        if let Some(y) = &report.y {
            if k >= origin {
                row.extend(floats(y.sample(k - origin)));
            } else {
                row.extend(std::iter::repeat(String::new()).take(q));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,R[0][0],R[0][1],..` in row-major order.
pub fn write_resolvent(family: &ResolventFamily, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = family.dim();
    let mut header = vec!["t".to_string()];
    for i in 0..d {
        header.extend((0..d).map(|j| format!("R[{i}][{j}]")));
    }
    w.write_record(&header)?;
    for (k, r) in family.matrices().iter().enumerate() {
        let mut row = vec![time_label(k as i64, family.step())];
        for i in 0..d {
            row.extend((0..d).map(|j| format!("{:?}", r[(i, j)])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `re,im,abs_det,newton_iters`, one row per root.
pub fn write_roots(report: &SpectrumReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["re", "im", "abs_det", "newton_iters"])?;
    for root in &report.roots {
        w.write_record([
            format!("{:?}", root.value.re),
            format!("{:?}", root.value.im),
            format!("{:?}", root.abs_det),
            root.newton_iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A trace table read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// `None` on rows where the output is undefined.
    pub y: Vec<Option<Vec<f64>>>,
}

pub fn read_trace(input: impl Read) -> Result<TraceTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let d = header.iter().filter(|h| h.starts_with("x[")).count();
    let q = header.iter().filter(|h| h.starts_with("y[")).count();
    if header.get(0) != Some("t") || header.len() != 1 + d + q {
        return Err(Error::InvalidArgument(format!("unexpected trace header {header:?}")));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidArgument(format!("bad number `{s}` in trace")))
    };
    let mut table = TraceTable {
        t: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
    };
    for record in r.records() {
        let record = record?;
        table.t.push(parse(&record[0])?);
        table.x.push((1..=d).map(|i| parse(&record[i])).collect::<Result<_>>()?);
        let ys: Vec<&str> = (d + 1..=d + q).map(|i| &record[i]).collect();
        table.y.push(if q == 0 || ys.iter().all(|s| s.is_empty()) {
            None
        } else {
            Some(ys.into_iter().map(parse).collect::<Result<_>>()?)
        });
    }
    Ok(table)
}
