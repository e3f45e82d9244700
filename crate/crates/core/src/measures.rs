//! Matrix-valued Riemann-Stieltjes measures on `[-r, 0]`.
//!
//! A [`DelayMeasure`] is a finite set of point masses plus a piecewise polynomial density.
//! It acts on history segments as `phi -> sum_j M_j phi(theta_j) + integral D(theta) phi(theta)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{gemv_acc, spectral_norm, GL16, GL4};
use crate::signals::Segment;

/// Point mass `matrix` at `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub theta: f64,
    pub matrix: DMatrix<f64>,
}

/// Density `sum_k coeffs[k] * theta^k` on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<DMatrix<f64>>,
}

impl DensityPiece {
    pub const MAX_DEGREE: usize = 3;

    pub fn constant(lo: f64, hi: f64, matrix: DMatrix<f64>) -> Self {
        Self {
            lo,
            hi,
            coeffs: vec![matrix],
        }
    }

    pub fn eval(&self, theta: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.coeffs[0].nrows(), self.coeffs[0].ncols());
        let mut power = 1.0;
        for c in &self.coeffs {
            acc += c * power;
            power *= theta;
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayMeasure {
    horizon: f64,
    out_dim: usize,
    in_dim: usize,
    atoms: Vec<Atom>,
    density: Vec<DensityPiece>,
}

impl DelayMeasure {
    pub fn new(
        horizon: f64,
        out_dim: usize,
        in_dim: usize,
        mut atoms: Vec<Atom>,
        mut density: Vec<DensityPiece>,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let shape_ok = |m: &DMatrix<f64>| m.nrows() == out_dim && m.ncols() == in_dim;
        for atom in &atoms {
            if atom.theta == 0.0 {
                return Err(Error::InvalidMeasure(
                    "measure must be continuous at 0: atom at theta = 0".into(),
                ));
            }
            if !(atom.theta >= -horizon && atom.theta < 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom at {} outside [-{horizon}, 0)",
                    atom.theta
                )));
            }
            if !shape_ok(&atom.matrix) {
                return Err(Error::InvalidMeasure(format!(
                    "atom at {} has shape {}x{}, expected {out_dim}x{in_dim}",
                    atom.theta,
                    atom.matrix.nrows(),
                    atom.matrix.ncols()
                )));
            }
            if atom.matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom at {} is not finite", atom.theta)));
            }
        }
        atoms.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        if let Some(w) = atoms.windows(2).find(|w| w[0].theta == w[1].theta) {
            return Err(Error::InvalidMeasure(format!("two atoms at theta = {}", w[0].theta)));
        }
        for piece in &density {
            if !(piece.lo < piece.hi && piece.lo >= -horizon && piece.hi <= 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "density piece [{}, {}] is not a subinterval of [-{horizon}, 0]",
                    piece.lo, piece.hi
                )));
            }
            if piece.coeffs.is_empty() || piece.coeffs.len() > DensityPiece::MAX_DEGREE + 1 {
                return Err(Error::InvalidMeasure(format!(
                    "density piece [{}, {}] needs 1 to {} coefficients, got {}",
                    piece.lo,
                    piece.hi,
                    DensityPiece::MAX_DEGREE + 1,
                    piece.coeffs.len()
                )));
            }
            if !piece.coeffs.iter().all(shape_ok) {
                return Err(Error::InvalidMeasure(format!(
                    "density piece [{}, {}] has a coefficient of wrong shape",
                    piece.lo, piece.hi
                )));
            }
        }
        density.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if let Some(w) = density.windows(2).find(|w| w[1].lo < w[0].hi) {
            return Err(Error::InvalidMeasure(format!(
                "density pieces [{}, {}] and [{}, {}] overlap",
                w[0].lo, w[0].hi, w[1].lo, w[1].hi
            )));
        }
        Ok(Self {
            horizon,
            out_dim,
            in_dim,
            atoms,
            density,
        })
    }

    /// The zero operator.
    pub fn zero(horizon: f64, out_dim: usize, in_dim: usize) -> Result<Self> {
        Self::new(horizon, out_dim, in_dim, Vec::new(), Vec::new())
    }

    /// A single point delay `matrix * phi(theta)`.
    pub fn atom(horizon: f64, theta: f64, matrix: DMatrix<f64>) -> Result<Self> {
        let (o, i) = matrix.shape();
        Self::new(horizon, o, i, vec![Atom { theta, matrix }], Vec::new())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> &[DensityPiece] {
        &self.density
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.is_empty()
    }

    /// Applies the measure to a segment.
    ///
    /// Density pieces are integrated with 4-point Gauss-Legendre on every cell between the
    /// segment's breakpoints, which is exact for piecewise-linear segments.
    pub fn apply(&self, seg: &impl Segment) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.out_dim);
        self.apply_into(seg, out.as_mut_slice())?;
        Ok(out)
    }

    pub fn apply_into(&self, seg: &impl Segment, out: &mut [f64]) -> Result<()> {
        self.check_segment(seg)?;
        out.fill(0.0);
        let mut buf = vec![0.0; self.in_dim];
        for atom in &self.atoms {
            seg.eval_into(atom.theta, &mut buf);
            gemv_acc(out, &atom.matrix, &buf, 1.0);
        }
        if self.density.is_empty() {
            return Ok(());
        }
        let mut cuts = Vec::new();
        let mut moments = vec![0.0; self.in_dim * (DensityPiece::MAX_DEGREE + 1)];
        for piece in &self.density {
            cuts.clear();
            cuts.push(piece.lo);
            seg.breakpoints(piece.lo, piece.hi, &mut cuts);
            cuts.push(piece.hi);
            // moments[k] = integral theta^k phi(theta) over the piece
            let degree = piece.coeffs.len();
            moments[..degree * self.in_dim].fill(0.0);
            for cell in cuts.windows(2) {
                for (theta, w) in GL4.on(cell[0], cell[1]) {
                    seg.eval_into(theta, &mut buf);
                    let mut weight = w;
                    for k in 0..degree {
                        let m = &mut moments[k * self.in_dim..(k + 1) * self.in_dim];
                        for (mi, &b) in m.iter_mut().zip(&buf) {
                            *mi += weight * b;
                        }
                        weight *= theta;
                    }
                }
            }
            for (k, c) in piece.coeffs.iter().enumerate() {
                gemv_acc(out, c, &moments[k * self.in_dim..(k + 1) * self.in_dim], 1.0);
            }
        }
        Ok(())
    }

    fn check_segment(&self, seg: &impl Segment) -> Result<()> {
        if seg.dim() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "DelayMeasure::apply",
                expected: self.in_dim,
                got: seg.dim(),
            });
        }
        if seg.horizon() < self.horizon * (1.0 - 1e-12) {
            return Err(Error::InsufficientHistory(format!(
                "segment spans [-{}, 0], measure needs [-{}, 0]",
                seg.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }

    /// `L e_lambda = integral exp(lambda theta) dmu(theta)` in closed form.
    pub fn exp_moment(&self, lambda: Complex64) -> DMatrix<Complex64> {
        let mut out = DMatrix::<Complex64>::zeros(self.out_dim, self.in_dim);
        for atom in &self.atoms {
            let e = (lambda * atom.theta).exp();
            out.zip_apply(&atom.matrix, |o, m| *o += e * m);
        }
        for piece in &self.density {
            let moments = exp_poly_moments(lambda, piece.lo, piece.hi, piece.coeffs.len());
            for (c, j) in piece.coeffs.iter().zip(moments) {
                out.zip_apply(c, |o, m| *o += j * m);
            }
        }
        out
    }

    /// `|mu|([-window, 0])` with the spectral norm on matrices.
    pub fn total_variation(&self, window: f64) -> Result<f64> {
        if !(window > 0.0 && window <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "window must lie in (0, {}], got {window}",
                self.horizon
            )));
        }
        let lower = -window;
        let tol = 1e-12 * self.horizon;
        let mut tv: f64 = self
            .atoms
            .iter()
            .filter(|a| a.theta >= lower - tol)
            .map(|a| spectral_norm(&a.matrix))
            .sum();
        for piece in &self.density {
            let lo = piece.lo.max(lower);
            if lo >= piece.hi {
                continue;
            }
            tv += GL16
                .on(lo, piece.hi)
                .map(|(theta, w)| w * spectral_norm(&piece.eval(theta)))
                .sum::<f64>();
        }
        Ok(tv)
    }

    /// `s L R(s, Q) phi`, the Yosida approximation of `L phi` for the left-shift generator `Q`.
    ///
    /// `(R(s, Q) phi)(theta) = integral_theta^0 exp(s (theta - sigma)) phi(sigma) d sigma` is
    /// computed by product integration: on every linear cell of the segment the exponential
    /// weight is integrated exactly.
    pub fn yosida_approx(&self, seg: &impl Segment, s: f64) -> Result<DVector<f64>> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("s must be positive, got {s}")));
        }
        self.check_segment(seg)?;
        let resolvent = ShiftResolvent::new(seg, self.horizon, s);
        let smoothed = resolvent.scaled();
        self.apply(&smoothed)
    }
}

/// `J_k = integral_a^b theta^k exp(lambda theta) d theta` for `k < count`.
fn exp_poly_moments(lambda: Complex64, a: f64, b: f64, count: usize) -> Vec<Complex64> {
    let scale = a.abs().max(b.abs());
    if lambda.norm() * scale <= 0.5 {
        // power series in lambda; at lambda = 0 only the polynomial term survives
        return (0..count)
            .map(|k| {
                let mut sum = Complex64::new(0.0, 0.0);
                let mut coef = Complex64::new(1.0, 0.0);
                for n in 0..40 {
                    let p = (k + n + 1) as i32;
                    let term = coef * (b.powi(p) - a.powi(p)) / p as f64;
                    sum += term;
                    if term.norm() <= 1e-18 * sum.norm() {
                        break;
                    }
                    coef = coef * lambda / (n + 1) as f64;
                }
                sum
            })
            .collect();
    }
    let ea = (lambda * a).exp();
    let eb = (lambda * b).exp();
    let mut out = Vec::with_capacity(count);
    let mut prev = (eb - ea) / lambda;
    out.push(prev);
    for k in 1..count {
        let boundary = b.powi(k as i32) * eb - a.powi(k as i32) * ea;
        prev = (boundary - k as f64 * prev) / lambda;
        out.push(prev);
    }
    out
}

/// `theta -> s * integral_theta^0 exp(s(theta - sigma)) phi(sigma) d sigma`, tabulated on the
/// breakpoints of `phi` and evaluated exactly inside each cell.
struct ShiftResolvent {
    s: f64,
    dim: usize,
    horizon: f64,
    cuts: Vec<f64>,
    /// Resolvent value at each cut.
    nodes: Vec<f64>,
    /// Per cell `(value at left end + 0, slope)` of the linear segment.
    lines: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ShiftResolvent {
    fn new(seg: &impl Segment, horizon: f64, s: f64) -> Self {
        let dim = seg.dim();
        let mut cuts = vec![-horizon];
        seg.breakpoints(-horizon, 0.0, &mut cuts);
        cuts.push(0.0);
        let cells = cuts.len() - 1;
        let mut lines = Vec::with_capacity(cells);
        let (mut p, mut q) = (vec![0.0; dim], vec![0.0; dim]);
        for cell in cuts.windows(2) {
            // two interior probes determine the line even if the segment jumps at a cut
            let w = cell[1] - cell[0];
            let (tp, tq) = (cell[0] + w / 3.0, cell[0] + 2.0 * w / 3.0);
            seg.eval_into(tp, &mut p);
            seg.eval_into(tq, &mut q);
            let slope: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (b - a) / (tq - tp)).collect();
            let left: Vec<f64> = p.iter().zip(&slope).map(|(a, m)| a - m * (tp - cell[0])).collect();
            lines.push((left, slope));
        }
        let mut nodes = vec![0.0; (cells + 1) * dim];
        for c in (0..cells).rev() {
            let (a, b) = (cuts[c], cuts[c + 1]);
            let decay = (-s * (b - a)).exp();
            let (left, slope) = &lines[c];
            for i in 0..dim {
                let tail = decay * nodes[(c + 1) * dim + i];
                nodes[c * dim + i] = tail + cell_integral(s, b - a, left[i], slope[i]);
            }
        }
        Self {
            s,
            dim,
            horizon,
            cuts,
            nodes,
            lines,
        }
    }

    fn scaled(self) -> ScaledResolvent {
        ScaledResolvent(self)
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        let theta = theta.clamp(-self.horizon, 0.0);
        let c = match self.cuts.partition_point(|&x| x <= theta) {
            0 => 0,
            n => (n - 1).min(self.cuts.len() - 2),
        };
        let (a, b) = (self.cuts[c], self.cuts[c + 1]);
        let decay = (-self.s * (b - theta)).exp();
        let (left, slope) = &self.lines[c];
        for i in 0..self.dim {
            let value_at_theta = left[i] + slope[i] * (theta - a);
            out[i] = self.s
                * (decay * self.nodes[(c + 1) * self.dim + i]
                    + cell_integral(self.s, b - theta, value_at_theta, slope[i]));
        }
    }
}

/// `integral_0^width exp(-s u) (value + slope u) du`.
fn cell_integral(s: f64, width: f64, value: f64, slope: f64) -> f64 {
    let x = s * width;
    let zeroth = -(-x).exp_m1() / s;
    // 1 - e^{-x}(1 + x), by series when x is small to avoid cancellation
    let g = if x < 0.1 {
        // sum_{n>=2} (-1)^n (n-1) x^n / n!
        let mut term = -x;
        let mut acc = 0.0;
        for n in 2..12 {
            term *= -x / n as f64;
            acc += (n - 1) as f64 * term;
        }
        acc
    } else {
        1.0 - (-x).exp() * (1.0 + x)
    };
    value * zeroth + slope * g / (s * s)
}

struct ScaledResolvent(ShiftResolvent);

impl Segment for ScaledResolvent {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn horizon(&self) -> f64 {
        self.0.horizon
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        self.0.eval_into(theta, out);
    }

    fn breakpoints(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        // split cells so the exponential boundary layer is resolved: s * width <= 2
        let max_width = 2.0 / self.0.s;
        let mut prev = lo;
        let inner = self.0.cuts.iter().copied().filter(|&x| x > lo && x < hi);
        for next in inner.chain(std::iter::once(hi)) {
            let pieces = ((next - prev) / max_width).ceil().clamp(1.0, 4096.0) as usize;
            for k in 1..pieces {
                out.push(prev + (next - prev) * k as f64 / pieces as f64);
            }
            if next < hi {
                out.push(next);
            }
            prev = next;
        }
    }
}
