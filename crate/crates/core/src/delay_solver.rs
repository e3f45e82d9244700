//! Simulation of
//!
//! ```text
//! x'(t) = A x(t) + integral_0^t a(t - s) A x(s) ds + L x_t + K u_t + f(t),
//! y(t)  = C x_t + D u_t,
//! x(0) = x0,  x_0 = phi,  u_0 = psi,
//! ```
//!
//! through the variation-of-constants formula
//! `x(t) = R(t) x0 + integral_0^t R(t - s) (L x_s + K u_s + f(s)) ds`, and independently by
//! an implicit trapezoidal discretization of the differential form.
//!
//! The initial value `x0` need not equal `phi(0)`: history reads at negative times use `phi`,
//! reads at nonnegative times use the computed solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::gemv_acc;
use crate::measures::DelayMeasure;
use crate::resolvent::ResolventFamily;
use crate::signals::{Kernel, Segment, Trajectory, GRID_TOL};

/// Maximum number of corrector evaluations at each new node.
pub const MAX_CORRECTOR_ITERATIONS: usize = 3;
const CORRECTOR_TOL: f64 = 1e-12;
/// Defect above which a corrector that ran out of iterations is reported as diverged.
const CORRECTOR_FAIL: f64 = 1e-8;

/// Full problem data.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// `A`.
    pub state: DMatrix<f64>,
    /// `a`.
    pub kernel: Kernel,
    /// `L`, acting on state histories.
    pub delay: DelayMeasure,
    /// `K`, acting on input histories.
    pub input_delay: Option<DelayMeasure>,
    /// `C`, observing state histories.
    pub output_state: Option<DelayMeasure>,
    /// `D`, observing input histories.
    pub output_input: Option<DelayMeasure>,
    /// `f` on `[0, T]`; absent means zero.
    pub forcing: Option<Trajectory>,
    /// `u` on `[-r, T]`; its restriction to `[-r, 0]` is the initial input history.
    pub input: Option<Trajectory>,
    pub initial_state: DVector<f64>,
    /// `phi` on `[-r, 0]`.
    pub initial_history: Trajectory,
}

impl SystemSpec {
    /// A state-delay system without inputs, outputs or forcing.
    pub fn new(
        state: DMatrix<f64>,
        kernel: Kernel,
        delay: DelayMeasure,
        initial_state: DVector<f64>,
        initial_history: Trajectory,
    ) -> Self {
        Self {
            state_dim: state.nrows(),
            input_dim: 0,
            output_dim: 0,
            state,
            kernel,
            delay,
            input_delay: None,
            output_state: None,
            output_input: None,
            forcing: None,
            input: None,
            initial_state,
            initial_history,
        }
    }

    pub fn with_forcing(mut self, f: Trajectory) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn with_input(mut self, input_delay: Option<DelayMeasure>, u: Trajectory) -> Self {
        self.input_dim = u.dim();
        self.input_delay = input_delay;
        self.input = Some(u);
        self
    }

    pub fn with_output(
        mut self,
        output_dim: usize,
        output_state: Option<DelayMeasure>,
        output_input: Option<DelayMeasure>,
    ) -> Self {
        self.output_dim = output_dim;
        self.output_state = output_state;
        self.output_input = output_input;
        self
    }

    /// Common delay horizon `r`.
    pub fn horizon(&self) -> f64 {
        self.delay.horizon()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim;
        let r = self.horizon();
        if self.state.shape() != (d, d) {
            return Err(Error::spec(
                "A",
                format!("expected {d}x{d}, got {:?}", self.state.shape()),
            ));
        }
        if self.initial_state.len() != d {
            return Err(Error::spec(
                "x0",
                format!("expected length {d}, got {}", self.initial_state.len()),
            ));
        }
        let check = |name: &str, mu: &DelayMeasure, out: usize, inp: usize| -> Result<()> {
            if (mu.horizon() - r).abs() > 1e-12 * r {
                return Err(Error::spec(
                    name,
                    format!("horizon {} differs from r = {r}", mu.horizon()),
                ));
            }
            if mu.out_dim() != out || mu.in_dim() != inp {
                return Err(Error::spec(
                    name,
                    format!("expected {out}x{inp}, got {}x{}", mu.out_dim(), mu.in_dim()),
                ));
            }
            Ok(())
        };
        check("L", &self.delay, d, d)?;
        if let Some(k) = &self.input_delay {
            check("K", k, d, self.input_dim)?;
        }
        if let Some(c) = &self.output_state {
            check("C", c, self.output_dim, d)?;
        }
        if let Some(dm) = &self.output_input {
            check("D", dm, self.output_dim, self.input_dim)?;
        }
        if self.initial_history.dim() != d {
            return Err(Error::spec(
                "phi",
                format!("dimension {} != d = {d}", self.initial_history.dim()),
            ));
        }
        if !self.initial_history.covers(-r, 0.0) {
            return Err(Error::spec(
                "phi",
                format!(
                    "must cover [-{r}, 0], covers [{}, {}]",
                    self.initial_history.start(),
                    self.initial_history.end()
                ),
            ));
        }
        if let Some(u) = &self.input {
            if u.dim() != self.input_dim {
                return Err(Error::spec(
                    "u",
                    format!("dimension {} != m = {}", u.dim(), self.input_dim),
                ));
            }
            if !u.covers(-r, 0.0) {
                return Err(Error::spec("u", format!("must cover [-{r}, 0]")));
            }
        }
        if let Some(f) = &self.forcing {
            if f.dim() != d {
                return Err(Error::spec("f", format!("dimension {} != d = {d}", f.dim())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Mild,
    Direct,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Mild => "mild",
            Method::Direct => "direct",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Total corrector evaluations over all nodes.
    pub corrector_evaluations: usize,
    /// Largest number of corrector evaluations at a single node.
    pub max_corrector_iterations: usize,
    /// Largest final difference between successive corrector iterates.
    pub max_corrector_defect: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// State on `[-r, T]`: `phi` at negative nodes, the solution from `t = 0` on.
    pub x: Trajectory,
    /// Output on `[0, T]`, absent when the system has no outputs.
    pub y: Option<Trajectory>,
    pub method: Method,
    pub step: f64,
    pub diagnostics: Diagnostics,
}

impl SolveReport {
    /// Index of the node `t = 0` in `x`.
    pub fn origin_index(&self) -> usize {
        (-self.x.start() / self.step).round() as usize
    }
}

/// Grid layout shared by both solvers.
struct Grid {
    step: f64,
    history: usize,
    steps: usize,
}

fn multiple_of(value: f64, step: f64, what: &str) -> Result<usize> {
    let ratio = value / step;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "step {step} does not divide {what} = {value}"
        )));
    }
    Ok(n as usize)
}

/// Problem data resampled onto the solver grid.
struct Prepared {
    grid: Grid,
    phi: Trajectory,
    input: Option<Trajectory>,
    forcing: Option<Trajectory>,
}

fn prepare(spec: &SystemSpec, step: f64, horizon: f64) -> Result<Prepared> {
    spec.validate()?;
    if !(step > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step and horizon must be positive, got h = {step}, T = {horizon}"
        )));
    }
    let r = spec.horizon();
    let history = multiple_of(r, step, "r")?;
    let steps = multiple_of(horizon, step, "T")?;
    let t_end = steps as f64 * step;
    let phi = spec.initial_history.resample(-r, step, history + 1)?;
    let input = match &spec.input {
        Some(u) => {
            if !u.covers(-r, t_end) {
                return Err(Error::InsufficientHistory(format!(
                    "u covers [{}, {}], needs [-{r}, {t_end}]",
                    u.start(),
                    u.end()
                )));
            }
            Some(u.resample(-r, step, history + steps + 1)?)
        }
        None => None,
    };
    let forcing = match &spec.forcing {
        Some(f) => {
            if !f.covers(0.0, t_end) {
                return Err(Error::InsufficientHistory(format!(
                    "f covers [{}, {}], needs [0, {t_end}]",
                    f.start(),
                    f.end()
                )));
            }
            Some(f.resample(0.0, step, steps + 1)?)
        }
        None => None,
    };
    Ok(Prepared {
        grid: Grid { step, history, steps },
        phi,
        input,
        forcing,
    })
}

/// State history at `t_k`: `phi` strictly before 0, the solution from 0 on.
struct StateHistory<'a> {
    phi: &'a Trajectory,
    x: &'a Trajectory,
    anchor: f64,
    horizon: f64,
    step: f64,
}

impl Segment for StateHistory<'_> {
    fn dim(&self) -> usize {
        self.x.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        let t = self.anchor + theta.clamp(-self.horizon, 0.0);
        if t < -GRID_TOL * self.step {
            self.phi.interpolate(t, out);
        } else {
            self.x.interpolate(t.max(0.0), out);
        }
    }

    fn breakpoints(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        // anchor is a grid node, so every grid node of phi and x is a multiple of the step
        let first = (lo / self.step + GRID_TOL).floor() as i64 + 1;
        let last = (hi / self.step - GRID_TOL).ceil() as i64 - 1;
        out.extend((first..=last).map(|j| j as f64 * self.step));
    }
}

/// Evaluation of `L x_t + K u_t + f(t)` and `C x_t + D u_t` at grid nodes.
struct Channels<'a> {
    spec: &'a SystemSpec,
    prep: &'a Prepared,
}

impl Channels<'_> {
    fn state_history<'b>(&'b self, x: &'b Trajectory, k: usize) -> StateHistory<'b> {
        StateHistory {
            phi: &self.prep.phi,
            x,
            anchor: k as f64 * self.prep.grid.step,
            horizon: self.spec.horizon(),
            step: self.prep.grid.step,
        }
    }

    fn drive(&self, x: &Trajectory, k: usize, out: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        self.spec.delay.apply_into(&self.state_history(x, k), out)?;
        let t = k as f64 * self.prep.grid.step;
        if let (Some(kd), Some(u)) = (&self.spec.input_delay, &self.prep.input) {
            kd.apply_into(&u.history_at(t, self.spec.horizon())?, scratch)?;
            out.iter_mut().zip(scratch.iter()).for_each(|(o, s)| *o += s);
        }
        if let Some(f) = &self.prep.forcing {
            out.iter_mut().zip(f.sample(k)).for_each(|(o, s)| *o += s);
        }
        Ok(())
    }

    fn output(&self, x: &Trajectory) -> Result<Option<Trajectory>> {
        let q = self.spec.output_dim;
        if q == 0 {
            return Ok(None);
        }
        let grid = &self.prep.grid;
        let mut data = vec![0.0; q * (grid.steps + 1)];
        let mut scratch = vec![0.0; q];
        for (k, y) in data.chunks_exact_mut(q).enumerate() {
            if let Some(c) = &self.spec.output_state {
                c.apply_into(&self.state_history(x, k), y)?;
            }
            if let (Some(dm), Some(u)) = (&self.spec.output_input, &self.prep.input) {
                let t = k as f64 * grid.step;
                dm.apply_into(&u.history_at(t, self.spec.horizon())?, &mut scratch)?;
                y.iter_mut().zip(&scratch).for_each(|(o, s)| *o += s);
            }
        }
        Ok(Some(Trajectory::from_flat(0.0, grid.step, q, data)?))
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Resolves the implicit dependence of the newest node on itself.
///
/// `update(x_guess)` returns the new iterate; the guess is stored as the newest sample of `x`
/// before each call.
fn correct(
    x: &mut Trajectory,
    t: f64,
    guess: &mut [f64],
    diagnostics: &mut Diagnostics,
    mut update: impl FnMut(&Trajectory) -> Result<Vec<f64>>,
) -> Result<()> {
    let mut defect = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_CORRECTOR_ITERATIONS {
        x.set_last(guess);
        let next = update(x)?;
        iterations += 1;
        defect = distance(&next, guess);
        guess.copy_from_slice(&next);
        if defect <= CORRECTOR_TOL {
            break;
        }
    }
    if !guess.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("corrector"));
    }
    if defect > CORRECTOR_FAIL * (1.0 + norm(guess)) {
        return Err(Error::CorrectorDiverged { t, defect });
    }
    x.set_last(guess);
    diagnostics.corrector_evaluations += iterations;
    diagnostics.max_corrector_iterations = diagnostics.max_corrector_iterations.max(iterations);
    if defect.is_finite() {
        diagnostics.max_corrector_defect = diagnostics.max_corrector_defect.max(defect);
    }
    Ok(())
}

/// Linear extrapolation from the two newest nodes.
fn predict(x: &Trajectory) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.sample(n - 1).to_vec();
    }
    x.sample(n - 1)
        .iter()
        .zip(x.sample(n - 2))
        .map(|(a, b)| 2.0 * a - b)
        .collect()
}

fn assemble(
    prep: &Prepared,
    x: Trajectory,
    y: Option<Trajectory>,
    method: Method,
    diagnostics: Diagnostics,
) -> Result<SolveReport> {
    let d = x.dim();
    let grid = &prep.grid;
    let mut data = Vec::with_capacity(d * (grid.history + grid.steps + 1));
    data.extend_from_slice(&prep.phi.as_flat()[..grid.history * d]);
    data.extend_from_slice(x.as_flat());
    let start = -(grid.history as f64) * grid.step;
    Ok(SolveReport {
        x: Trajectory::from_flat(start, grid.step, d, data)?,
        y,
        method,
        step: grid.step,
        diagnostics,
    })
}

/// Variation-of-constants solution
/// `x(t_n) = R_n x0 + h sum_m w_m R_{n-m} g_m`, `g = L x_t + K u_t + f`.
pub fn solve_mild(spec: &SystemSpec, step: f64, horizon: f64) -> Result<SolveReport> {
    let prep = prepare(spec, step, horizon)?;
    let family = ResolventFamily::compute(&spec.state, &spec.kernel, step, prep.grid.steps as f64 * step)?;
    solve_mild_with(spec, &prep, &family)
}

/// Same as [`solve_mild`] with a precomputed resolvent family on the solver grid.
pub fn solve_mild_with_family(spec: &SystemSpec, family: &ResolventFamily, horizon: f64) -> Result<SolveReport> {
    let prep = prepare(spec, family.step(), horizon)?;
    if family.len() < prep.grid.steps + 1 || family.dim() != spec.state_dim {
        return Err(Error::GridMismatch(
            "resolvent family does not cover the horizon".into(),
        ));
    }
    solve_mild_with(spec, &prep, family)
}

fn solve_mild_with(spec: &SystemSpec, prep: &Prepared, family: &ResolventFamily) -> Result<SolveReport> {
    let d = spec.state_dim;
    let h = prep.grid.step;
    let n = prep.grid.steps;
    let channels = Channels { spec, prep };
    let x0 = spec.initial_state.as_slice();
    let mut diagnostics = Diagnostics::default();
    let mut scratch = vec![0.0; d];

    let mut x = Trajectory::from_flat(0.0, h, d, x0.to_vec())?;
    let mut g = vec![0.0; d * (n + 1)];
    channels.drive(&x, 0, &mut g[..d], &mut scratch)?;

    let mut base = vec![0.0; d];
    for k in 1..=n {
        // everything except the newest quadrature node
        base.fill(0.0);
        gemv_acc(&mut base, family.matrix(k), x0, 1.0);
        for m in 0..k {
            let w = if m == 0 { 0.5 } else { 1.0 };
            gemv_acc(&mut base, family.matrix(k - m), &g[m * d..(m + 1) * d], w * h);
        }
        let mut guess = predict(&x);
        x.push(&guess)?;
        let mut newest = vec![0.0; d];
        correct(&mut x, k as f64 * h, &mut guess, &mut diagnostics, |x| {
            channels.drive(x, k, &mut newest, &mut scratch)?;
            // R_0 = I
            Ok(base.iter().zip(&newest).map(|(b, gk)| b + 0.5 * h * gk).collect())
        })?;
        g[k * d..(k + 1) * d].copy_from_slice(&newest);
    }
    let y = channels.output(&x)?;
    assemble(prep, x, y, Method::Mild, diagnostics)
}

/// Implicit trapezoidal rule on `x' = A x + (a * A x) + g` with trapezoidal memory and delay
/// quadrature. Shares no code path with the resolvent family.
pub fn solve_direct_oracle(spec: &SystemSpec, step: f64, horizon: f64) -> Result<SolveReport> {
    let prep = prepare(spec, step, horizon)?;
    let d = spec.state_dim;
    let h = step;
    let n = prep.grid.steps;
    let channels = Channels { spec, prep: &prep };
    let a = &spec.state;
    let kernel: Vec<f64> = (0..=n).map(|j| spec.kernel.eval_unchecked(j as f64 * h)).collect();

    // (I - h/2 (1 + h/2 a(0)) A) x_k = x_{k-1} + h/2 (F_{k-1} + memory_k + g_k)
    let implicit = DMatrix::<f64>::identity(d, d) - a * (0.5 * h * (1.0 + 0.5 * h * kernel[0]));
    let inverse = implicit.try_inverse().ok_or(Error::SingularStep(h))?;

    let mut diagnostics = Diagnostics::default();
    let mut scratch = vec![0.0; d];
    let x0 = spec.initial_state.as_slice();
    let mut x = Trajectory::from_flat(0.0, h, d, x0.to_vec())?;
    // A x_j, reused by the memory sums
    let mut ax = vec![0.0; d * (n + 1)];
    gemv_acc(&mut ax[..d], a, x0, 1.0);
    let mut g = vec![0.0; d];
    channels.drive(&x, 0, &mut g, &mut scratch)?;
    // F_0 = A x_0 + g_0 (memory vanishes at t = 0)
    let mut rate: Vec<f64> = ax[..d].iter().zip(&g).map(|(p, q)| p + q).collect();

    let mut memory = vec![0.0; d];
    let mut known = vec![0.0; d];
    for k in 1..=n {
        // memory over nodes j < k
        memory.fill(0.0);
        for j in 0..k {
            let w = if j == 0 { 0.5 } else { 1.0 };
            let c = w * h * kernel[k - j];
            for (m, v) in memory.iter_mut().zip(&ax[j * d..(j + 1) * d]) {
                *m += c * v;
            }
        }
        let prev = x.sample(k - 1).to_vec();
        let mut guess = predict(&x);
        x.push(&guess)?;
        let mut newest = vec![0.0; d];
        correct(&mut x, k as f64 * h, &mut guess, &mut diagnostics, |x| {
            channels.drive(x, k, &mut newest, &mut scratch)?;
            for i in 0..d {
                known[i] = prev[i] + 0.5 * h * (rate[i] + memory[i] + newest[i]);
            }
            let mut next = vec![0.0; d];
            gemv_acc(&mut next, &inverse, &known, 1.0);
            Ok(next)
        })?;
        let xk = x.sample(k).to_vec();
        let (done, rest) = ax.split_at_mut(k * d);
        let _ = done;
        let axk = &mut rest[..d];
        axk.fill(0.0);
        gemv_acc(axk, a, &xk, 1.0);
        let self_weight = 0.5 * h * kernel[0];
        for i in 0..d {
            rate[i] = axk[i] + memory[i] + self_weight * axk[i] + newest[i];
        }
    }
    let y = channels.output(&x)?;
    assemble(&prep, x, y, Method::Direct, diagnostics)
}

/// `max_t |x_mild - x_direct| / (1 + max_t |x_direct|)` over the whole grid.
pub fn cross_validate(spec: &SystemSpec, step: f64, horizon: f64) -> Result<f64> {
    let mild = solve_mild(spec, step, horizon)?;
    let direct = solve_direct_oracle(spec, step, horizon)?;
    Ok(relative_gap(&mild.x, &direct.x))
}

pub(crate) fn relative_gap(x: &Trajectory, reference: &Trajectory) -> f64 {
    let gap = x
        .samples()
        .zip(reference.samples())
        .map(|(a, b)| distance(a, b))
        .fold(0.0, f64::max);
    let scale = reference.samples().map(norm).fold(0.0, f64::max);
    gap / (1.0 + scale)
}
