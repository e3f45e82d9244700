//! Characteristic function `Delta(lambda) = lambda I - (1 + a^(lambda)) A - L e_lambda` and
//! certified location of its zeros.
//!
//! Roots are counted by the argument principle on a lattice of cells and then polished by
//! Newton's method. `det Delta` is meromorphic with poles only at kernel poles; their orders are
//! measured numerically on small circles and added back to each cell's winding number.

use std::cell::Cell;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::delay_solver::SystemSpec;
use crate::error::{Error, Result};
use crate::measures::DelayMeasure;
use crate::signals::Kernel;

pub const DEFAULT_TOL: f64 = 1e-12;
/// Largest admissible Newton tolerance; reported roots always satisfy `|det| <= 1e-8 scale`.
pub const MAX_TOL: f64 = 1e-8;
pub const MIN_GRID: usize = 8;
/// Minimum distance between a search rectangle's boundary and any kernel pole.
pub const POLE_MARGIN: f64 = 1e-6;
const DEDUP: f64 = 1e-6;
const EDGE_SAMPLES: usize = 32;
const NEWTON_MAX: usize = 50;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Clone, Debug)]
pub struct CharacteristicFunction {
    state: DMatrix<f64>,
    kernel: Kernel,
    delay: DelayMeasure,
    poles: Vec<(Complex64, u32)>,
}

impl CharacteristicFunction {
    pub fn new(state: DMatrix<f64>, kernel: Kernel, delay: DelayMeasure) -> Result<Self> {
        let d = state.nrows();
        if state.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "A must be square",
                expected: d,
                got: state.ncols(),
            });
        }
        for (got, context) in [
            (delay.out_dim(), "L output dimension"),
            (delay.in_dim(), "L input dimension"),
        ] {
            if got != d {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: d,
                    got,
                });
            }
        }
        let poles = kernel.poles();
        Ok(Self {
            state,
            kernel,
            delay,
            poles,
        })
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        Self::new(spec.state.clone(), spec.kernel.clone(), spec.delay.clone())
    }

    pub fn dim(&self) -> usize {
        self.state.nrows()
    }

    pub fn state_matrix(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn delay(&self) -> &DelayMeasure {
        &self.delay
    }

    /// Poles of `a^` with their orders.
    pub fn kernel_poles(&self) -> &[(Complex64, u32)] {
        &self.poles
    }

    /// `lambda I - (1 + a^(lambda)) A`.
    fn free_part(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        let factor = 1.0 + self.kernel.laplace(lambda)?;
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |i, j| {
            let diag = if i == j { lambda } else { c(0.0, 0.0) };
            diag - factor * self.state[(i, j)]
        }))
    }

    pub fn char_matrix(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        Ok(self.free_part(lambda)? - self.delay.exp_moment(lambda))
    }

    pub fn char_det(&self, lambda: Complex64) -> Result<Complex64> {
        let det = self.char_matrix(lambda)?.lu().determinant();
        if !det.is_finite() {
            return Err(Error::NonFinite("characteristic determinant"));
        }
        Ok(det)
    }

    /// `(det(I - L e_lambda H(lambda)), det(lambda I - (1 + a^(lambda)) A))` with
    /// `H(lambda) = (lambda I - (1 + a^(lambda)) A)^-1`; the product is `char_det(lambda)`.
    pub fn factored_det(&self, lambda: Complex64) -> Result<(Complex64, Complex64)> {
        let free = self.free_part(lambda)?.lu();
        let free_det = free.determinant();
        let h = free
            .try_inverse()
            .filter(|h| h.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularFreeResolvent(lambda))?;
        let d = self.dim();
        let coupling = DMatrix::<Complex64>::identity(d, d) - self.delay.exp_moment(lambda) * h;
        Ok((coupling.lu().determinant(), free_det))
    }
}

/// Axis-aligned rectangle `[re_min, re_max] x [im_min, im_max]` in the complex plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let r = Self {
            re_min,
            re_max,
            im_min,
            im_max,
        };
        if ![re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite()) || re_min >= re_max || im_min >= im_max {
            return Err(Error::InvalidArgument(format!("empty or non-finite rectangle {r}")));
        }
        Ok(r)
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.re_min - slack
            && z.re <= self.re_max + slack
            && z.im >= self.im_min - slack
            && z.im <= self.im_max + slack
    }

    /// Distance from `z` to the boundary curve.
    pub fn boundary_distance(&self, z: Complex64) -> f64 {
        let dx = (self.re_min - z.re).max(z.re - self.re_max).max(0.0);
        let dy = (self.im_min - z.im).max(z.im - self.im_max).max(0.0);
        if dx > 0.0 || dy > 0.0 {
            return dx.hypot(dy);
        }
        (z.re - self.re_min)
            .min(self.re_max - z.re)
            .min(z.im - self.im_min)
            .min(self.im_max - z.im)
    }

    fn grown(&self, by: f64) -> Rect {
        Rect {
            re_min: self.re_min - by,
            re_max: self.re_max + by,
            im_min: self.im_min - by,
            im_max: self.im_max + by,
        }
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] x [{}, {}]",
            self.re_min, self.re_max, self.im_min, self.im_max
        )
    }
}

/// Parses `"re_min,re_max,im_min,im_max"`.
impl FromStr for Rect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("region `{s}`: {e}")))?;
        match parts[..] {
            [a, b, c, d] => Rect::new(a, b, c, d),
            _ => Err(Error::InvalidArgument(format!(
                "region `{s}` must have the form re_min,re_max,im_min,im_max"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Root {
    pub value: Complex64,
    pub abs_det: f64,
    pub newton_iterations: usize,
    /// Winding number of `det Delta` on a small circle around the root, when it could be
    /// resolved.
    pub multiplicity: Option<i64>,
    /// `Re lambda <= 0` up to root accuracy: outside the half plane where the stability
    /// characterization is proved.
    pub outside_half_plane: bool,
}

/// Argument-principle bookkeeping for one cell or merged block.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionDiagnostic {
    pub region: Rect,
    /// Winding number of `det Delta` along the boundary.
    pub winding: i64,
    /// Total order of kernel poles inside, as measured on small circles.
    pub pole_order: i64,
    /// Zeros expected inside, counted with multiplicity.
    pub expected: i64,
    /// Zeros found, counted with multiplicity.
    pub found: i64,
    /// Side length in lattice cells; 1 for an unmerged cell.
    pub block: usize,
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub rect: Rect,
    pub grid: usize,
    pub tol: f64,
    /// Sorted by `(re, im)`.
    pub roots: Vec<Root>,
    /// Regions with nonzero winding or pole content.
    pub regions: Vec<RegionDiagnostic>,
    pub warnings: Vec<String>,
    /// Regions whose zero count could not be certified or whose roots were not all found.
    pub failures: Vec<String>,
    pub evaluations: usize,
}

impl SpectrumReport {
    /// Largest real part over the found roots.
    pub fn abscissa(&self) -> Option<f64> {
        self.roots.iter().map(|r| r.value.re).reduce(f64::max)
    }

    pub fn is_certified(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Root search on an arbitrary meromorphic function with known pole locations.
///
/// `degree` sets the convergence scale `max(1, |lambda|^degree)`.
pub struct RootFinder<F> {
    f: F,
    degree: i32,
    poles: Vec<Complex64>,
    tol: f64,
    evaluations: Cell<usize>,
}

impl<F: Fn(Complex64) -> Result<Complex64>> RootFinder<F> {
    pub fn new(f: F, degree: usize, poles: Vec<Complex64>, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol <= MAX_TOL) {
            return Err(Error::InvalidArgument(format!(
                "tol must lie in (0, {MAX_TOL}], got {tol}"
            )));
        }
        Ok(Self {
            f,
            degree: degree as i32,
            poles,
            tol,
            evaluations: Cell::new(0),
        })
    }

    fn eval(&self, z: Complex64) -> Option<Complex64> {
        self.evaluations.set(self.evaluations.get() + 1);
        (self.f)(z).ok().filter(|v| v.is_finite() && *v != c(0.0, 0.0))
    }

    fn scale(&self, z: Complex64) -> f64 {
        z.norm().powi(self.degree).max(1.0)
    }

    /// Argument increment along the segment `a -> b` with known endpoint values.
    fn segment_increment(&self, a: Complex64, b: Complex64, fa: Complex64, fb: Complex64) -> Option<f64> {
        'refine: for samples in [EDGE_SAMPLES, 2 * EDGE_SAMPLES, 4 * EDGE_SAMPLES] {
            let mut prev = fa;
            let mut total = 0.0;
            for k in 1..=samples {
                let v = if k == samples {
                    fb
                } else {
                    self.eval(a + (b - a) * (k as f64 / samples as f64))?
                };
                let step = (v / prev).arg();
                if step.abs() > PI / 2.0 {
                    continue 'refine;
                }
                total += step;
                prev = v;
            }
            return Some(total);
        }
        None
    }

    /// Winding number on the circle `|z - center| = radius`.
    fn circle_winding(&self, center: Complex64, radius: f64) -> Option<i64> {
        'refine: for samples in [64, 128, 256] {
            let point = |k: usize| center + Complex64::from_polar(radius, TAU * k as f64 / samples as f64);
            let first = self.eval(point(0))?;
            let mut prev = first;
            let mut total = 0.0;
            for k in 1..=samples {
                let v = if k == samples { first } else { self.eval(point(k))? };
                let step = (v / prev).arg();
                if step.abs() > PI / 2.0 {
                    continue 'refine;
                }
                total += step;
                prev = v;
            }
            return integer_winding(total);
        }
        None
    }

    /// Newton with central-difference derivative; `None` if it leaves `guard` or stalls.
    ///
    /// Steps are taken on `f` times `(z - p)^order` for the nearby poles `deflate`, which is
    /// analytic around them; convergence is judged on `f` itself.
    fn newton(&self, start: Complex64, guard: &Rect, deflate: &[(Complex64, i64)]) -> Option<(Complex64, f64, usize)> {
        let deflated = |z: Complex64, fz: Complex64| {
            deflate
                .iter()
                .filter(|(_, order)| *order > 0)
                .fold(fz, |acc, &(p, order)| acc * (z - p).powi(order as i32))
        };
        let mut z = start;
        let mut fz = self.eval(z)?;
        for iteration in 0..=NEWTON_MAX {
            if fz.norm() <= self.tol * self.scale(z) {
                return Some((z, fz.norm(), iteration));
            }
            if iteration == NEWTON_MAX {
                break;
            }
            let delta = 1e-6 * (1.0 + z.norm());
            let (zp, zm) = (z + delta, z - delta);
            let derivative = (deflated(zp, self.eval(zp)?) - deflated(zm, self.eval(zm)?)) / (2.0 * delta);
            if !derivative.is_finite() || derivative == c(0.0, 0.0) {
                return None;
            }
            z -= deflated(z, fz) / derivative;
            if !guard.contains(z, 0.0) {
                return None;
            }
            // an exact zero is a converged root
            fz = match (self.f)(z) {
                Ok(v) if v == c(0.0, 0.0) => return Some((z, 0.0, iteration + 1)),
                _ => self.eval(z)?,
            };
        }
        None
    }

    pub fn find(&self, rect: Rect, grid: usize) -> Result<SpectrumReport> {
        if grid < MIN_GRID {
            return Err(Error::InvalidArgument(format!(
                "grid must be at least {MIN_GRID}, got {grid}"
            )));
        }
        for &p in &self.poles {
            if rect.boundary_distance(p) <= POLE_MARGIN {
                return Err(Error::InvalidArgument(format!(
                    "rectangle {rect} passes within {POLE_MARGIN} of kernel pole {p}"
                )));
            }
        }
        self.evaluations.set(0);
        let mut search = Search::new(self, rect, grid);
        search.run();
        Ok(search.finish())
    }
}

fn integer_winding(total: f64) -> Option<i64> {
    let w = total / TAU;
    let n = w.round();
    ((w - n).abs() <= 0.1).then_some(n as i64)
}

struct Search<'a, F> {
    finder: &'a RootFinder<F>,
    rect: Rect,
    grid: usize,
    dx: f64,
    dy: f64,
    /// `horizontal[j * grid + i]`: node (i, j) -> (i + 1, j).
    horizontal: Vec<Option<f64>>,
    /// `vertical[i * grid + j]`: node (i, j) -> (i, j + 1).
    vertical: Vec<Option<f64>>,
    interior_poles: Vec<(Complex64, i64)>,
    roots: Vec<Root>,
    regions: Vec<RegionDiagnostic>,
    warnings: Vec<String>,
    failures: Vec<String>,
}

impl<'a, F: Fn(Complex64) -> Result<Complex64>> Search<'a, F> {
    fn new(finder: &'a RootFinder<F>, rect: Rect, grid: usize) -> Self {
        Self {
            finder,
            rect,
            grid,
            dx: rect.width() / grid as f64,
            dy: rect.height() / grid as f64,
            horizontal: Vec::new(),
            vertical: Vec::new(),
            interior_poles: Vec::new(),
            roots: Vec::new(),
            regions: Vec::new(),
            warnings: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn node(&self, i: usize, j: usize) -> Complex64 {
        // exact endpoints so shared boundaries agree between calls
        let re = if i == self.grid {
            self.rect.re_max
        } else {
            self.rect.re_min + i as f64 * self.dx
        };
        let im = if j == self.grid {
            self.rect.im_max
        } else {
            self.rect.im_min + j as f64 * self.dy
        };
        c(re, im)
    }

    fn cell_rect(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> Rect {
        let lo = self.node(i0, j0);
        let hi = self.node(i1, j1);
        Rect {
            re_min: lo.re,
            re_max: hi.re,
            im_min: lo.im,
            im_max: hi.im,
        }
    }

    fn run(&mut self) {
        let n = self.grid;
        let values: Vec<Option<Complex64>> = (0..=n)
            .flat_map(|j| (0..=n).map(move |i| (i, j)))
            .map(|(i, j)| self.finder.eval(self.node(i, j)))
            .collect();
        let value = |i: usize, j: usize| values[j * (n + 1) + i];
        let edge = |a: (usize, usize), b: (usize, usize)| -> Option<f64> {
            let (fa, fb) = (value(a.0, a.1)?, value(b.0, b.1)?);
            self.finder
                .segment_increment(self.node(a.0, a.1), self.node(b.0, b.1), fa, fb)
        };
        let horizontal = (0..=n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| edge((i, j), (i + 1, j)))
            .collect();
        let vertical = (0..=n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| edge((i, j), (i, j + 1)))
            .collect();
        self.horizontal = horizontal;
        self.vertical = vertical;
        self.measure_poles();

        // unstable cells first: each is absorbed into the smallest stable block around it
        let mut covered = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                if covered[j * n + i] || self.block_winding(i, j, i + 1, j + 1).is_some() {
                    continue;
                }
                match self.merge(i, j) {
                    Some((i0, j0, i1, j1, winding)) => {
                        for jj in j0..j1 {
                            for ii in i0..i1 {
                                covered[jj * n + ii] = true;
                            }
                        }
                        self.solve_region(i0, j0, i1, j1, winding);
                    }
                    None => {
                        let cell = self.cell_rect(i, j, i + 1, j + 1);
                        if i == 0 || j == 0 || i + 1 == n || j + 1 == n {
                            self.warnings
                                .push(format!("possible root or pole on the search boundary near {cell}"));
                        }
                        self.failures
                            .push(format!("winding number unresolved for cell {cell} even after merging"));
                    }
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                if covered[j * n + i] {
                    continue;
                }
                if let Some(winding) = self.block_winding(i, j, i + 1, j + 1) {
                    self.solve_region(i, j, i + 1, j + 1, winding);
                }
            }
        }
    }

    /// Winding number around the block of cells `[i0, i1) x [j0, j1)`.
    fn block_winding(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> Option<i64> {
        let n = self.grid;
        let mut total = 0.0;
        for i in i0..i1 {
            total += self.horizontal[j0 * n + i]?;
            total -= self.horizontal[j1 * n + i]?;
        }
        for j in j0..j1 {
            total += self.vertical[i1 * n + j]?;
            total -= self.vertical[i0 * n + j]?;
        }
        integer_winding(total)
    }

    fn merge(&self, i: usize, j: usize) -> Option<(usize, usize, usize, usize, i64)> {
        for k in 1..=3 {
            let i0 = i.saturating_sub(k);
            let j0 = j.saturating_sub(k);
            let i1 = (i + k + 1).min(self.grid);
            let j1 = (j + k + 1).min(self.grid);
            if let Some(w) = self.block_winding(i0, j0, i1, j1) {
                return Some((i0, j0, i1, j1, w));
            }
        }
        None
    }

    fn measure_poles(&mut self) {
        let cell = self.dx.min(self.dy);
        let inside: Vec<Complex64> = self
            .finder
            .poles
            .iter()
            .copied()
            .filter(|&p| self.rect.contains(p, 0.0))
            .collect();
        for &p in &inside {
            let nearest = inside
                .iter()
                .filter(|&&q| q != p)
                .map(|&q| (q - p).norm())
                .fold(f64::INFINITY, f64::min);
            let radius = (0.1 * cell).min(0.3 * nearest).min(1e-2 * (1.0 + p.norm()));
            match self.finder.circle_winding(p, radius) {
                Some(w) => self.interior_poles.push((p, -w)),
                None => self
                    .warnings
                    .push(format!("order of kernel pole {p} could not be measured; assumed 0")),
            }
        }
    }

    fn solve_region(&mut self, i0: usize, j0: usize, i1: usize, j1: usize, winding: i64) {
        let region = self.cell_rect(i0, j0, i1, j1);
        let pole_order: i64 = self
            .interior_poles
            .iter()
            .filter(|(p, _)| region.contains(*p, 0.0))
            .map(|(_, o)| o)
            .sum();
        let expected = winding + pole_order;
        if winding == 0 && pole_order == 0 {
            return;
        }
        let mut diagnostic = RegionDiagnostic {
            region,
            winding,
            pole_order,
            expected,
            found: 0,
            block: i1 - i0,
        };
        if expected < 0 {
            self.warnings.push(format!(
                "negative zero count {expected} in {region}: pole order mismeasured"
            ));
            self.regions.push(diagnostic);
            return;
        }
        let guard = region.grown(self.dx.max(self.dy));
        let slack = 1e-9 * (1.0 + region.width().max(region.height()));
        let nearby: Vec<(Complex64, i64)> = self
            .interior_poles
            .iter()
            .copied()
            .filter(|(p, _)| guard.contains(*p, 0.0))
            .collect();
        let mut local: Vec<Root> = Vec::new();
        for start in self.starts(i0, j0, i1, j1, expected) {
            if let Some((z, abs_det, iterations)) = self.finder.newton(start, &guard, &nearby) {
                if region.contains(z, slack) && local.iter().all(|r| (r.value - z).norm() > DEDUP) {
                    local.push(Root {
                        value: z,
                        abs_det,
                        newton_iterations: iterations,
                        multiplicity: None,
                        outside_half_plane: z.re <= 1e-9 * (1.0 + z.norm()),
                    });
                }
            }
            if self.counted(&mut local) >= expected {
                break;
            }
        }
        let found = self.counted(&mut local);
        diagnostic.found = found;
        if found < expected {
            self.failures.push(format!(
                "{region}: expected {expected} zero(s), Newton converged to {found}"
            ));
        } else if found > expected {
            self.warnings
                .push(format!("{region}: found {found} zero(s), winding predicts {expected}"));
        }
        self.regions.push(diagnostic);
        self.roots.extend(local);
    }

    /// Total multiplicity of `roots`, resolving each root's multiplicity on first use.
    fn counted(&self, roots: &mut [Root]) -> i64 {
        let positions: Vec<Complex64> = roots.iter().map(|r| r.value).collect();
        let mut total = 0;
        for root in roots.iter_mut() {
            if root.multiplicity.is_none() {
                let z = root.value;
                let nearest = positions
                    .iter()
                    .chain(self.interior_poles.iter().map(|(p, _)| p))
                    .filter(|&&q| q != z)
                    .map(|&q| (q - z).norm())
                    .fold(f64::INFINITY, f64::min);
                let radius = (1e-3 * (1.0 + z.norm()))
                    .min(0.25 * self.dx.min(self.dy))
                    .min(0.4 * nearest);
                root.multiplicity = self.finder.circle_winding(z, radius).filter(|&m| m > 0);
            }
            total += root.multiplicity.unwrap_or(1);
        }
        total
    }

    fn starts(&self, i0: usize, j0: usize, i1: usize, j1: usize, expected: i64) -> Vec<Complex64> {
        let mut starts = Vec::new();
        let fractions: &[(f64, f64)] = if expected > 1 || i1 - i0 > 1 {
            &[(0.5, 0.5), (0.25, 0.25), (0.75, 0.75), (0.25, 0.75), (0.75, 0.25)]
        } else {
            &[(0.5, 0.5), (0.25, 0.25), (0.75, 0.75)]
        };
        for &(fx, fy) in fractions {
            for j in j0..j1 {
                for i in i0..i1 {
                    let lo = self.node(i, j);
                    starts.push(lo + c(fx * self.dx, fy * self.dy));
                }
            }
        }
        starts
    }

    fn finish(mut self) -> SpectrumReport {
        self.roots.sort_by(|a, b| {
            a.value
                .re
                .total_cmp(&b.value.re)
                .then(a.value.im.total_cmp(&b.value.im))
        });
        let mut roots: Vec<Root> = Vec::with_capacity(self.roots.len());
        for root in self.roots {
            match roots.iter_mut().find(|r| (r.value - root.value).norm() <= DEDUP) {
                Some(existing) => {
                    if root.abs_det < existing.abs_det {
                        *existing = root;
                    }
                }
                None => roots.push(root),
            }
        }
        roots.sort_by(|a, b| {
            a.value
                .re
                .total_cmp(&b.value.re)
                .then(a.value.im.total_cmp(&b.value.im))
        });
        SpectrumReport {
            rect: self.rect,
            grid: self.grid,
            tol: self.finder.tol,
            roots,
            regions: self.regions,
            warnings: self.warnings,
            failures: self.failures,
            evaluations: self.finder.evaluations.get(),
        }
    }
}

pub fn find_roots(cf: &CharacteristicFunction, rect: Rect, grid: usize, tol: f64) -> Result<SpectrumReport> {
    let poles = cf.kernel_poles().iter().map(|(p, _)| *p).collect();
    RootFinder::new(|z| cf.char_det(z), cf.dim(), poles, tol)?.find(rect, grid)
}

/// Roots in `[re_lo, re_hi] x [-delta, im_max]`, relying on conjugate symmetry for the lower
/// half plane. `delta` is half a cell height, which keeps the real axis off the lattice.
pub fn spectral_report(
    cf: &CharacteristicFunction,
    re_bounds: (f64, f64),
    im_max: f64,
    grid: usize,
    tol: f64,
) -> Result<SpectrumReport> {
    if !(im_max > 0.0) {
        return Err(Error::InvalidArgument(format!("im_max must be positive, got {im_max}")));
    }
    let delta = 0.5 * im_max / grid.max(1) as f64;
    let rect = Rect::new(re_bounds.0, re_bounds.1, -delta, im_max)?;
    find_roots(cf, rect, grid, tol)
}

/// Largest real part of the characteristic roots found in the region, or `None`.
pub fn spectral_abscissa(
    cf: &CharacteristicFunction,
    re_bounds: (f64, f64),
    im_max: f64,
    grid: usize,
    tol: f64,
) -> Result<Option<f64>> {
    Ok(spectral_report(cf, re_bounds, im_max, grid, tol)?.abscissa())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use std::f64::consts::FRAC_PI_2;

    fn delay_only(b: f64, theta: f64) -> CharacteristicFunction {
        CharacteristicFunction::new(
            dmatrix![0.0],
            Kernel::zero(),
            DelayMeasure::atom(-theta, theta, dmatrix![b]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn char_matrix_examples() {
        let cf = delay_only(2.5, -0.7);
        assert_eq!(cf.char_matrix(c(0.0, 0.0)).unwrap()[(0, 0)], c(-2.5, 0.0));

        let a = dmatrix![1.0, 2.0; -3.0, 0.5];
        let free =
            CharacteristicFunction::new(a.clone(), Kernel::zero(), DelayMeasure::zero(1.0, 2, 2).unwrap()).unwrap();
        let lambda = c(0.3, -1.2);
        let m = free.char_matrix(lambda).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { lambda } else { c(0.0, 0.0) } - a[(i, j)];
                assert_eq!(m[(i, j)], expected);
            }
        }

        let critical = delay_only(-FRAC_PI_2, -1.0);
        let v = critical.char_matrix(c(0.0, FRAC_PI_2)).unwrap()[(0, 0)];
        assert!(v.norm() <= 1e-15, "{v}");
        assert!(critical.char_det(c(0.0, FRAC_PI_2)).unwrap().norm() <= 1e-14);
    }

    #[test]
    fn det_vanishes_at_eigenvalues() {
        let a = dmatrix![2.0, 1.0; 1.0, 2.0];
        let cf = CharacteristicFunction::new(a, Kernel::zero(), DelayMeasure::zero(1.0, 2, 2).unwrap()).unwrap();
        for ev in [1.0, 3.0] {
            assert!(cf.char_det(c(ev, 0.0)).unwrap().norm() <= 1e-12);
        }
    }

    #[test]
    fn kernel_pole_is_rejected() {
        let cf = CharacteristicFunction::new(
            dmatrix![-1.0],
            Kernel::exponential(1.0, -1.0).unwrap(),
            DelayMeasure::zero(1.0, 1, 1).unwrap(),
        )
        .unwrap();
        assert!(matches!(cf.char_det(c(-1.0, 0.0)), Err(Error::KernelPole(_))));
    }

    #[test]
    fn factored_det_examples() {
        let free = CharacteristicFunction::new(
            dmatrix![-1.0, 0.4; 0.0, 2.0],
            Kernel::exponential(0.5, -2.0).unwrap(),
            DelayMeasure::zero(1.0, 2, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(free.factored_det(c(0.7, 0.2)).unwrap().0, c(1.0, 0.0));

        let cf = CharacteristicFunction::new(
            dmatrix![-1.0],
            Kernel::exponential(1.0, -1.0).unwrap(),
            DelayMeasure::atom(1.0, -1.0, dmatrix![0.1]).unwrap(),
        )
        .unwrap();
        let (p, q) = cf.factored_det(c(1.0, 0.0)).unwrap();
        let det = cf.char_det(c(1.0, 0.0)).unwrap();
        // 1 + 1 + 1/2 - 0.1/e
        let exact = 2.5 - 0.1 * (-1.0f64).exp();
        assert!((det.re - exact).abs() <= 1e-15);
        assert!((p * q - det).norm() <= 1e-14);

        // lambda = -1 + i is an eigenvalue of the free part: reported distinctly
        assert!(matches!(
            CharacteristicFunction::new(
                dmatrix![-1.0],
                Kernel::exponential(1.0, -1.0).unwrap(),
                DelayMeasure::zero(1.0, 1, 1).unwrap()
            )
            .unwrap()
            .factored_det(c(-1.0, 1.0)),
            Err(Error::SingularFreeResolvent(_))
        ));
    }

    #[test]
    fn critical_delay_root() {
        let cf = delay_only(-FRAC_PI_2, -1.0);
        let report = find_roots(&cf, Rect::new(-1.0, 1.0, 0.0, 2.0).unwrap(), 32, DEFAULT_TOL).unwrap();
        assert!(report.is_certified(), "{:?}", report.failures);
        assert_eq!(report.roots.len(), 1, "{:?}", report.roots);
        let root = &report.roots[0];
        assert!((root.value - c(0.0, FRAC_PI_2)).norm() <= 1e-8);
        assert_eq!(root.multiplicity, Some(1));
        assert!(root.outside_half_plane);
    }

    #[test]
    fn eigenvalues_of_diagonal_matrix() {
        let cf = CharacteristicFunction::new(
            dmatrix![-1.0, 0.0; 0.0, -2.0],
            Kernel::zero(),
            DelayMeasure::zero(1.0, 2, 2).unwrap(),
        )
        .unwrap();
        // off-lattice imaginary bounds keep the real roots inside cells
        let report = find_roots(&cf, Rect::new(-3.0, 0.5, -1.0, 1.03).unwrap(), 16, DEFAULT_TOL).unwrap();
        assert!(report.is_certified(), "{:?}", report.failures);
        let values: Vec<Complex64> = report.roots.iter().map(|r| r.value).collect();
        assert_eq!(values.len(), 2);
        assert!((values[0] - c(-2.0, 0.0)).norm() <= 1e-10);
        assert!((values[1] - c(-1.0, 0.0)).norm() <= 1e-10);

        // the literal rectangle puts both roots on a lattice line; merging still resolves them
        let literal = find_roots(&cf, Rect::new(-3.0, 0.5, -1.0, 1.0).unwrap(), 16, DEFAULT_TOL).unwrap();
        assert!(literal.is_certified(), "{:?}", literal.failures);
        assert_eq!(literal.roots.len(), 2);
    }

    #[test]
    fn memory_kernel_roots_with_pole_inside() {
        // lambda + (1 + 1/(lambda + 1)) = 0  <=>  lambda^2 + 2 lambda + 2 = 0
        let cf = CharacteristicFunction::new(
            dmatrix![-1.0],
            Kernel::exponential(1.0, -1.0).unwrap(),
            DelayMeasure::zero(1.0, 1, 1).unwrap(),
        )
        .unwrap();
        let report = find_roots(&cf, Rect::new(-2.0, 0.0, 0.25, 2.0).unwrap(), 16, DEFAULT_TOL).unwrap();
        assert_eq!(report.roots.len(), 1);
        assert!((report.roots[0].value - c(-1.0, 1.0)).norm() <= 1e-10);

        // the pole at -1 sits inside this one and must be compensated
        let report = find_roots(&cf, Rect::new(-2.03, 0.5, -2.0, 2.01).unwrap(), 16, DEFAULT_TOL).unwrap();
        assert!(report.is_certified(), "{:?} {:?}", report.failures, report.regions);
        let values: Vec<Complex64> = report.roots.iter().map(|r| r.value).collect();
        assert_eq!(values.len(), 2, "{values:?}");
        assert!((values[0] - c(-1.0, -1.0)).norm() <= 1e-10);
        assert!((values[1] - c(-1.0, 1.0)).norm() <= 1e-10);

        // on the boundary of the literal rectangle
        assert!(find_roots(&cf, Rect::new(-2.0, 0.0, 0.0, 2.0).unwrap(), 16, DEFAULT_TOL).is_err());
    }

    #[test]
    fn abscissa_examples() {
        let stable = delay_only(-1.0, -0.5);
        let alpha = spectral_abscissa(&stable, (-5.0, 1.0), 20.0, 32, DEFAULT_TOL)
            .unwrap()
            .unwrap();
        assert!(alpha < 0.0, "{alpha}");

        let critical = delay_only(-FRAC_PI_2, -1.0);
        let alpha = spectral_abscissa(&critical, (-1.0, 1.0), 2.0, 32, DEFAULT_TOL)
            .unwrap()
            .unwrap();
        assert!(alpha.abs() <= 1e-8, "{alpha}");

        let a = dmatrix![-0.5, 2.0, 0.0; -2.0, -0.5, 0.0; 0.0, 0.0, -1.5];
        let free = CharacteristicFunction::new(a, Kernel::zero(), DelayMeasure::zero(1.0, 3, 3).unwrap()).unwrap();
        let alpha = spectral_abscissa(&free, (-3.0, 1.0), 4.0, 16, DEFAULT_TOL)
            .unwrap()
            .unwrap();
        assert!((alpha + 0.5).abs() <= 1e-10, "{alpha}");
    }

    #[test]
    fn argument_validation() {
        let cf = delay_only(-1.0, -1.0);
        let rect = Rect::new(-1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(find_roots(&cf, rect, 4, DEFAULT_TOL).is_err());
        assert!(find_roots(&cf, rect, 8, 1e-6).is_err());
        assert!(Rect::new(1.0, -1.0, 0.0, 1.0).is_err());
        assert_eq!(
            "-1, 1,0,2".parse::<Rect>().unwrap(),
            Rect::new(-1.0, 1.0, 0.0, 2.0).unwrap()
        );
        assert!("1,2,3".parse::<Rect>().is_err());
    }
}
