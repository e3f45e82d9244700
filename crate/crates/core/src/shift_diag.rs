//! Left shift semigroup on `[-r, 0]`, its control maps and the delay input-output map.
//!
//! ```text
//! (S(t) phi)(theta) = phi(t + theta)  if t + theta < 0,   0 otherwise   (t > 0; S(0) = I)
//! (Phi_t u)(theta)  = u(t + theta)    if theta >= -t,     0 otherwise   (t > 0; Phi_0 = 0)
//! (F u)(t)          = L Phi_t u
//! ```
//!
//! Segments are sampled on a grid with the step of the data and `t`, `s` restricted to grid
//! multiples, so the semigroup and composition laws hold exactly at the nodes. The choices at
//! the single node `t + theta = 0` and at `t = 0` are the ones that keep
//! `Phi_{t+s} u = S(t) Phi_s u|[0,s] + Phi_t u(. + s)` exact for every `t, s >= 0`.

use crate::error::{Error, Result};
use crate::measures::DelayMeasure;
use crate::signals::{Segment, Trajectory, GRID_TOL};

/// A grid-sampled function on `[-r, 0]`.
pub type ShiftState = Trajectory;

/// `value / step` as an integer, if it is one up to grid tolerance.
fn grid_index(value: f64, step: f64, what: &str) -> Result<usize> {
    let ratio = value / step;
    let n = ratio.round();
    if n < 0.0 || (ratio - n).abs() > GRID_TOL * ratio.abs().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "{what} = {value} is not a nonnegative multiple of the step {step}"
        )));
    }
    Ok(n as usize)
}

/// Number of cells of a state on `[-r, 0]`.
fn state_cells(phi: &ShiftState) -> Result<usize> {
    let n = grid_index(-phi.start(), phi.step(), "r")?;
    if n + 1 != phi.len() {
        return Err(Error::GridMismatch(format!(
            "shift state must cover exactly [{}, 0], ends at {}",
            phi.start(),
            phi.end()
        )));
    }
    Ok(n)
}

/// Index of `t = 0` in `u`, which must lie on `u`'s grid.
fn origin(u: &Trajectory) -> Result<usize> {
    grid_index(-u.start(), u.step(), "-(start of u)")
}

/// `S(t) phi`.
pub fn shift_apply(phi: &ShiftState, t: f64) -> Result<ShiftState> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let n = state_cells(phi)?;
    let shift = grid_index(t, phi.step(), "t")?;
    if shift == 0 {
        return Ok(phi.clone());
    }
    let d = phi.dim();
    let mut data = vec![0.0; d * (n + 1)];
    for k in 0..(n + 1).saturating_sub(shift) {
        // t + theta_k < 0  <=>  k + shift < n
        if k + shift < n {
            data[k * d..(k + 1) * d].copy_from_slice(phi.sample(k + shift));
        }
    }
    Trajectory::from_flat(phi.start(), phi.step(), d, data)
}

/// `Phi_t u` sampled on `[-r, 0]` with the step of `u`.
pub fn control_map(u: &Trajectory, t: f64, r: f64) -> Result<ShiftState> {
    let h = u.step();
    let n = grid_index(r, h, "r")?;
    if n == 0 {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {r}")));
    }
    let shift = grid_index(t, h, "t")?;
    let zero = origin(u)?;
    if shift > 0 && zero + shift >= u.len() {
        return Err(Error::InsufficientHistory(format!(
            "u covers [{}, {}], needs [0, {t}]",
            u.start(),
            u.end()
        )));
    }
    let d = u.dim();
    let mut data = vec![0.0; d * (n + 1)];
    if shift > 0 {
        // theta_k = (k - n) h >= -t  <=>  k + shift >= n; reads u at index zero + k + shift - n
        for k in n.saturating_sub(shift)..=n {
            data[k * d..(k + 1) * d].copy_from_slice(u.sample(zero + k + shift - n));
        }
    }
    Trajectory::from_flat(-(n as f64) * h, h, d, data)
}

/// `theta -> (Phi_t u)(theta)` evaluated from `u` directly, jump at `theta = -t` included.
pub struct ControlSegment<'a> {
    u: &'a Trajectory,
    t: f64,
    horizon: f64,
}

impl<'a> ControlSegment<'a> {
    pub fn new(u: &'a Trajectory, t: f64, horizon: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if t > 0.0 && !u.covers(0.0_f64.max(t - horizon), t) {
            return Err(Error::InsufficientHistory(format!(
                "u covers [{}, {}], needs [0, {t}]",
                u.start(),
                u.end()
            )));
        }
        Ok(Self { u, t, horizon })
    }
}

impl Segment for ControlSegment<'_> {
    fn dim(&self) -> usize {
        self.u.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        let theta = theta.clamp(-self.horizon, 0.0);
        if self.t > 0.0 && theta >= -self.t {
            self.u.interpolate(self.t + theta, out);
        } else {
            out.fill(0.0);
        }
    }

    fn breakpoints(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let jump = -self.t;
        let mut pushed_jump = false;
        for node in self.u.interior_nodes(self.t + lo, self.t + hi) {
            let theta = node - self.t;
            if !pushed_jump && theta >= jump {
                if jump > lo && jump < hi && theta != jump {
                    out.push(jump);
                }
                pushed_jump = true;
            }
            out.push(theta);
        }
        if !pushed_jump && jump > lo && jump < hi {
            out.push(jump);
        }
    }
}

/// `(F u)(t_k) = L Phi_{t_k} u` on `[0, tau]` with the step of `u`.
pub fn input_output_map(l: &DelayMeasure, u: &Trajectory, tau: f64) -> Result<Trajectory> {
    if l.in_dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            context: "input-output map input",
            expected: l.in_dim(),
            got: u.dim(),
        });
    }
    let h = u.step();
    let steps = grid_index(tau, h, "tau")?;
    if !u.covers(0.0, tau) {
        return Err(Error::InsufficientHistory(format!(
            "u covers [{}, {}], needs [0, {tau}]",
            u.start(),
            u.end()
        )));
    }
    let q = l.out_dim();
    let mut data = vec![0.0; q * (steps + 1)];
    for (k, out) in data.chunks_exact_mut(q).enumerate() {
        let seg = ControlSegment::new(u, k as f64 * h, l.horizon())?;
        l.apply_into(&seg, out)?;
    }
    Trajectory::from_flat(0.0, h, q, data)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admissibility {
    /// `||F u||_{L^p[0, tau]}`.
    pub lhs: f64,
    /// `|mu|([-min(tau, r), 0]) ||u||_{L^p[0, tau]}`.
    pub rhs: f64,
}

impl Admissibility {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-8)
    }
}

pub fn admissibility_check(l: &DelayMeasure, u: &Trajectory, tau: f64, p: f64) -> Result<Admissibility> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must lie in (1, inf), got {p}")));
    }
    let output = input_output_map(l, u, tau)?;
    let lhs = output.lp_norm(p, 0.0, tau)?;
    let rhs = l.total_variation(tau.min(l.horizon()))? * u.lp_norm(p, 0.0, tau)?;
    Ok(Admissibility { lhs, rhs })
}

/// `u(. + s)` on the grid of `u`, starting at 0.
fn advanced(u: &Trajectory, s: usize) -> Result<Trajectory> {
    let zero = origin(u)?;
    let d = u.dim();
    Trajectory::from_flat(0.0, u.step(), d, u.as_flat()[(zero + s) * d..].to_vec())
}

/// `u` restricted to `[0, s]`.
fn truncated(u: &Trajectory, s: usize) -> Result<Trajectory> {
    let zero = origin(u)?;
    let d = u.dim();
    Trajectory::from_flat(0.0, u.step(), d, u.as_flat()[zero * d..(zero + s + 1) * d].to_vec())
}

/// Sup-norm defect of `Phi_{t+s} u = S(t) Phi_s u|[0,s] + Phi_t u(. + s)` over the segment grid.
pub fn composition_check(u: &Trajectory, t: f64, s: f64, r: f64) -> Result<f64> {
    let h = u.step();
    let ts = grid_index(t, h, "t")?;
    let ss = grid_index(s, h, "s")?;
    let zero = origin(u)?;
    if zero + ts + ss >= u.len() {
        return Err(Error::InsufficientHistory(format!(
            "u covers [{}, {}], needs [0, {}]",
            u.start(),
            u.end(),
            t + s
        )));
    }
    let t = ts as f64 * h;
    let s = ss as f64 * h;
    let whole = control_map(u, t + s, r)?;
    let head = shift_apply(&control_map(&truncated(u, ss)?, s, r)?, t)?;
    let tail = control_map(&advanced(u, ss)?, t, r)?;
    Ok(whole
        .as_flat()
        .iter()
        .zip(head.as_flat())
        .zip(tail.as_flat())
        .map(|((w, a), b)| (w - (a + b)).abs())
        .fold(0.0, f64::max))
}
