use nalgebra::DVector;

use crate::error::{Error, Result};

/// Relative slack (in units of the step) for endpoint and node snapping.
pub(crate) const GRID_TOL: f64 = 1e-9;

/// Uniformly sampled vector-valued function with piecewise-linear interpolation.
///
/// Samples are stored row by row in one flat buffer; sample `k` sits at `start + k * step`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    start: f64,
    step: f64,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(start: f64, step: f64, samples: Vec<Vec<f64>>) -> Result<Self> {
        let dim = samples
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("trajectory needs at least one sample".into()))?;
        let mut data = Vec::with_capacity(dim * samples.len());
        for (k, sample) in samples.iter().enumerate() {
            if sample.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "sample {k} has dimension {}, expected {dim}",
                    sample.len()
                )));
            }
            data.extend_from_slice(sample);
        }
        Self::from_flat(start, step, dim, data)
    }

    pub fn from_flat(start: f64, step: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
        }
        if !start.is_finite() {
            return Err(Error::InvalidArgument("start must be finite".into()));
        }
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of length {} does not hold samples of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { start, step, dim, data })
    }

    /// Samples `f` at `start + k * step` for `k = 0..count`.
    pub fn from_fn(
        start: f64,
        step: f64,
        count: usize,
        dim: usize,
        mut f: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(count * dim);
        for k in 0..count {
            let v = f(start + k as f64 * step);
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "Trajectory::from_fn",
                    expected: dim,
                    got: v.len(),
                });
            }
            data.extend(v);
        }
        Self::from_flat(start, step, dim, data)
    }

    pub fn constant(start: f64, step: f64, count: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(start, step, count, value.len(), |_| value.to_vec())
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.node_time(self.len() - 1)
    }

    pub fn node_time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Appends one sample at `end() + step`. Earlier evaluations are unaffected.
    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "Trajectory::push",
                expected: self.dim,
                got: sample.len(),
            });
        }
        self.data.extend_from_slice(sample);
        Ok(())
    }

    /// Overwrites the newest sample.
    pub(crate) fn set_last(&mut self, sample: &[f64]) {
        let n = self.data.len();
        self.data[n - self.dim..].copy_from_slice(sample);
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let slack = GRID_TOL * self.step;
        lo >= self.start - slack && hi <= self.end() + slack
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(t, out.as_mut_slice())?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !self.covers(t, t) {
            return Err(Error::OutOfRange {
                t,
                lo: self.start,
                hi: self.end(),
            });
        }
        self.interpolate(t, out);
        Ok(())
    }

    /// Interpolation without the range check; `t` is clamped to the covered interval.
    pub(crate) fn interpolate(&self, t: f64, out: &mut [f64]) {
        let last = self.len() - 1;
        let pos = (t - self.start) / self.step;
        let nearest = pos.round();
        if (pos - nearest).abs() <= GRID_TOL {
            let k = (nearest.max(0.0) as usize).min(last);
            out.copy_from_slice(self.sample(k));
            return;
        }
        let pos = pos.clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last.saturating_sub(1));
        let frac = pos - i as f64;
        let (a, b) = (self.sample(i), self.sample((i + 1).min(last)));
        for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
            *o = x + frac * (y - x);
        }
    }

    /// Grid nodes strictly inside `(lo, hi)`.
    pub(crate) fn interior_nodes(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        let slack = GRID_TOL;
        let first = ((lo - self.start) / self.step + slack).floor() as i64 + 1;
        let last = ((hi - self.start) / self.step - slack).ceil() as i64 - 1;
        (first.max(0)..=last.min(self.len() as i64 - 1)).map(move |k| self.node_time(k as usize))
    }

    /// `(integral_lo^hi |x(t)|_2^p dt)^(1/p)`, trapezoidal on the grid restricted to `[lo, hi]`.
    pub fn lp_norm(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
        }
        if lo > hi {
            return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
        }
        if !self.covers(lo, hi) {
            return Err(Error::OutOfRange {
                t: if lo < self.start { lo } else { hi },
                lo: self.start,
                hi: self.end(),
            });
        }
        let mut buf = vec![0.0; self.dim];
        let mut power_at = |t: f64| {
            self.interpolate(t, &mut buf);
            buf.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p)
        };
        let mut points = vec![lo];
        points.extend(self.interior_nodes(lo, hi));
        points.push(hi);
        let mut integral = 0.0;
        let mut prev_t = points[0];
        let mut prev_v = power_at(prev_t);
        for &t in &points[1..] {
            let v = power_at(t);
            integral += 0.5 * (t - prev_t) * (prev_v + v);
            prev_t = t;
            prev_v = v;
        }
        Ok(integral.powf(1.0 / p))
    }

    /// History view `theta -> x(t + theta)` on `[-horizon, 0]`.
    pub fn history_at(&self, t: f64, horizon: f64) -> Result<HistorySegment<'_>> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !self.covers(t - horizon, t) {
            return Err(Error::InsufficientHistory(format!(
                "[{}, {t}] not within [{}, {}]",
                t - horizon,
                self.start,
                self.end()
            )));
        }
        Ok(HistorySegment {
            trajectory: self,
            anchor: t,
            horizon,
        })
    }

    /// Resamples onto `start + k * step`, `k = 0..count`, by interpolation.
    pub fn resample(&self, start: f64, step: f64, count: usize) -> Result<Trajectory> {
        let end = start + (count.max(1) - 1) as f64 * step;
        if !self.covers(start, end) {
            return Err(Error::OutOfRange {
                t: if start < self.start { start } else { end },
                lo: self.start,
                hi: self.end(),
            });
        }
        let mut data = vec![0.0; count * self.dim];
        for (k, chunk) in data.chunks_exact_mut(self.dim).enumerate() {
            self.interpolate(start + k as f64 * step, chunk);
        }
        Trajectory::from_flat(start, step, self.dim, data)
    }
}

/// A function on `[-r, 0]` that delay operators act on.
pub trait Segment {
    fn dim(&self) -> usize;

    fn horizon(&self) -> f64;

    /// Value at `theta`; `theta` is clamped to `[-horizon, 0]`.
    fn eval_into(&self, theta: f64, out: &mut [f64]);

    /// Points in the open interval `(lo, hi)` where the segment may fail to be smooth,
    /// in increasing order. Between consecutive breakpoints the segment is linear.
    fn breakpoints(&self, lo: f64, hi: f64, out: &mut Vec<f64>);
}

/// `theta -> x(anchor + theta)` for a trajectory `x`.
#[derive(Clone, Copy, Debug)]
pub struct HistorySegment<'a> {
    trajectory: &'a Trajectory,
    anchor: f64,
    horizon: f64,
}

impl HistorySegment<'_> {
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn eval(&self, theta: f64) -> Result<DVector<f64>> {
        if theta > 0.0 || theta < -self.horizon {
            return Err(Error::OutOfRange {
                t: theta,
                lo: -self.horizon,
                hi: 0.0,
            });
        }
        let mut out = DVector::zeros(self.trajectory.dim());
        Segment::eval_into(self, theta, out.as_mut_slice());
        Ok(out)
    }
}

impl Segment for HistorySegment<'_> {
    fn dim(&self) -> usize {
        self.trajectory.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        let theta = theta.clamp(-self.horizon, 0.0);
        self.trajectory.interpolate(self.anchor + theta, out);
    }

    fn breakpoints(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        out.extend(
            self.trajectory
                .interior_nodes(self.anchor + lo, self.anchor + hi)
                .map(|t| t - self.anchor),
        );
    }
}
