//! Resolvent family of the delay-free integro-differential equation
//! `x' = A x + (a * A x)`.
//!
//! The family is computed from the integral equation
//!
//! ```text
//! R(t) = I + integral_0^t k(t - s) A R(s) ds,     k(t) = 1 + integral_0^t a,
//! ```
//!
//! whose Laplace transform is `(lambda - (1 + a^(lambda)) A)^{-1}`. With the plain kernel `a`
//! in place of `k` the transform would not match the characteristic function used by the
//! spectral module, so the integrated kernel is used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::signals::{Kernel, Trajectory};

/// `R_0, ..., R_n` on the grid `t_k = k * step`.
#[derive(Clone, Debug)]
pub struct ResolventFamily {
    step: f64,
    state: DMatrix<f64>,
    kernel: Kernel,
    /// `k(t_j)` for the integrated kernel.
    integrated: Vec<f64>,
    matrices: Vec<DMatrix<f64>>,
}

fn grid_count(step: f64, horizon: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !(horizon >= step * (1.0 - 1e-9)) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must be at least one step {step}"
        )));
    }
    let ratio = horizon / step;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "horizon {horizon} is not a multiple of step {step}"
        )));
    }
    Ok(n as usize)
}

impl ResolventFamily {
    /// Product-trapezoidal marching:
    /// `(I - h/2 A) R_n = I + h A sum_{m<n} w_m k(t_n - t_m) R_m`, `w_0 = 1/2`, else `1`.
    pub fn compute(state: &DMatrix<f64>, kernel: &Kernel, step: f64, horizon: f64) -> Result<Self> {
        if !state.is_square() {
            return Err(Error::DimensionMismatch {
                context: "compute_resolvent: A must be square",
                expected: state.nrows(),
                got: state.ncols(),
            });
        }
        let n = grid_count(step, horizon)?;
        let d = state.nrows();
        let integrated: Vec<f64> = (0..=n).map(|j| kernel.integrated_unchecked(j as f64 * step)).collect();
        let eye = DMatrix::<f64>::identity(d, d);
        // k(0) = 1
        let step_matrix = &eye - state * (0.5 * step);
        let step_inverse = step_matrix.try_inverse().ok_or(Error::SingularStep(step))?;
        if step_inverse.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularStep(step));
        }

        let mut matrices = Vec::with_capacity(n + 1);
        matrices.push(eye.clone());
        let mut acc = DMatrix::<f64>::zeros(d, d);
        for k in 1..=n {
            acc.copy_from(&matrices[0]);
            acc *= 0.5 * integrated[k];
            for (m, rm) in matrices.iter().enumerate().skip(1) {
                acc.zip_apply(rm, |a, r| *a += integrated[k - m] * r);
            }
            let rhs = &eye + state * &acc * step;
            let next = &step_inverse * rhs;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("compute_resolvent"));
            }
            matrices.push(next);
        }
        Ok(Self {
            step,
            state: state.clone(),
            kernel: kernel.clone(),
            integrated,
            matrices,
        })
    }

    /// Wraps externally supplied matrices, e.g. to measure how well they satisfy the
    /// resolvent equation. `matrices[0]` must be the identity.
    pub fn from_matrices(
        state: &DMatrix<f64>,
        kernel: &Kernel,
        step: f64,
        matrices: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let d = state.nrows();
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no matrices".into()))?;
        if *first != DMatrix::identity(d, d) {
            return Err(Error::InvalidArgument("R_0 must be the identity".into()));
        }
        if let Some(bad) = matrices.iter().find(|m| m.shape() != (d, d)) {
            return Err(Error::DimensionMismatch {
                context: "ResolventFamily::from_matrices",
                expected: d,
                got: bad.nrows(),
            });
        }
        let integrated = (0..matrices.len())
            .map(|j| kernel.integrated_unchecked(j as f64 * step))
            .collect();
        Ok(Self {
            step,
            state: state.clone(),
            kernel: kernel.clone(),
            integrated,
            matrices,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.state.nrows()
    }

    /// Number of grid nodes, `n + 1`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        (self.len() - 1) as f64 * self.step
    }

    pub fn state_matrix(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn matrix(&self, k: usize) -> &DMatrix<f64> {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// Largest defect of the discrete resolvent equation over the grid (spectral norm).
    pub fn residual(&self) -> f64 {
        let d = self.dim();
        let eye = DMatrix::<f64>::identity(d, d);
        let mut worst = spectral_norm(&(&self.matrices[0] - &eye));
        let mut acc = DMatrix::<f64>::zeros(d, d);
        for n in 1..self.len() {
            acc.fill(0.0);
            for (m, rm) in self.matrices[..=n].iter().enumerate() {
                let w = if m == 0 || m == n { 0.5 } else { 1.0 };
                let c = w * self.integrated[n - m];
                acc.zip_apply(rm, |a, r| *a += c * r);
            }
            let defect = &self.matrices[n] - &eye - &self.state * &acc * self.step;
            worst = worst.max(spectral_norm(&defect));
        }
        worst
    }

    /// `max_n |A R_n - R_n A|_2`.
    pub fn commutation_defect(&self) -> f64 {
        self.matrices
            .iter()
            .map(|r| spectral_norm(&(&self.state * r - r * &self.state)))
            .fold(0.0, f64::max)
    }

    /// `(Upsilon f)(t_n) = integral_0^{t_n} R(t_n - s) f(s) ds` by the trapezoidal rule on the
    /// shared grid. The output covers the common range of `f` and the family.
    pub fn upsilon_apply(&self, f: &Trajectory) -> Result<Trajectory> {
        if f.start().abs() > 1e-12 || (f.step() - self.step).abs() > 1e-12 * self.step {
            return Err(Error::GridMismatch(format!(
                "f must start at 0 with step {}, got start {} and step {}",
                self.step,
                f.start(),
                f.step()
            )));
        }
        let d = self.dim();
        if f.dim() != d {
            return Err(Error::DimensionMismatch {
                context: "upsilon_apply",
                expected: d,
                got: f.dim(),
            });
        }
        let count = f.len().min(self.len());
        let mut data = vec![0.0; count * d];
        let mut acc = DVector::<f64>::zeros(d);
        for n in 1..count {
            acc.fill(0.0);
            for m in 0..=n {
                let w = if m == 0 || m == n { 0.5 } else { 1.0 };
                crate::linalg::gemv_acc(acc.as_mut_slice(), &self.matrices[n - m], f.sample(m), w);
            }
            for (o, a) in data[n * d..(n + 1) * d].iter_mut().zip(acc.iter()) {
                *o = a * self.step;
            }
        }
        Trajectory::from_flat(0.0, self.step, d, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn exp_kernel() -> Kernel {
        Kernel::exponential(1.0, -1.0).unwrap()
    }

    #[test]
    fn starts_at_identity() {
        let a = dmatrix![0.3, -1.0; 2.0, -0.4];
        let fam = ResolventFamily::compute(&a, &exp_kernel(), 0.01, 1.0).unwrap();
        assert_eq!(*fam.matrix(0), DMatrix::identity(2, 2));
        assert_eq!(fam.len(), 101);
    }

    #[test]
    fn zero_kernel_reduces_to_exponential() {
        let fam = ResolventFamily::compute(&dmatrix![-1.0], &Kernel::zero(), 1e-3, 1.0).unwrap();
        let r1 = fam.matrix(1000)[(0, 0)];
        assert!((r1 - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn exponential_kernel_closed_form() {
        // R^(l) = (l + 1) / ((l + 1)^2 + 1)  =>  R(t) = e^{-t} cos t
        let h = 1e-3;
        let t = std::f64::consts::PI;
        let n = 3142;
        let fam = ResolventFamily::compute(&dmatrix![-1.0], &exp_kernel(), h, n as f64 * h).unwrap();
        let tn = n as f64 * h;
        assert!((fam.matrix(n)[(0, 0)] - (-tn).exp() * tn.cos()).abs() < 1e-4);
        assert!((fam.matrix(n)[(0, 0)] - -0.0432139).abs() < 1e-4 + (tn - t).abs());
    }

    #[test]
    fn rejects_bad_grids() {
        let a = dmatrix![-1.0];
        assert!(ResolventFamily::compute(&a, &Kernel::zero(), 0.3, 1.0).is_err());
        assert!(ResolventFamily::compute(&a, &Kernel::zero(), 0.1, 0.05).is_err());
        assert!(matches!(
            ResolventFamily::compute(&dmatrix![2.0], &Kernel::zero(), 1.0, 2.0),
            Err(Error::SingularStep(_))
        ));
    }

    #[test]
    fn residual_examples() {
        let a = dmatrix![-0.5, 1.0; -1.0, -0.2];
        let k = Kernel::exponential(0.5, -2.0).unwrap();
        let fam = ResolventFamily::compute(&a, &k, 0.01, 2.0).unwrap();
        assert!(fam.residual() <= 1e-12, "{}", fam.residual());

        let mut mats = fam.matrices().to_vec();
        mats[57][(1, 0)] += 1e-3;
        let perturbed = ResolventFamily::from_matrices(&a, &k, 0.01, mats).unwrap();
        assert!(perturbed.residual() >= 1e-4);

        // exact semigroup values leave only the trapezoidal truncation error
        let h = 0.01;
        let exact: Vec<_> = (0..=200).map(|j| (&a * (j as f64 * h)).exp()).collect();
        let oracle = ResolventFamily::from_matrices(&a, &Kernel::zero(), h, exact).unwrap();
        let res = oracle.residual();
        assert!(res > 1e-8 && res < h * h, "{res}");
    }

    #[test]
    fn commutation_examples() {
        let k = Kernel::exponential(0.8, -1.5).unwrap();
        let scalar = ResolventFamily::compute(&dmatrix![-0.7], &k, 0.01, 1.0).unwrap();
        assert_eq!(scalar.commutation_defect(), 0.0);
        let diag = ResolventFamily::compute(&dmatrix![-1.0, 0.0; 0.0, 0.5], &k, 0.01, 1.0).unwrap();
        assert!(diag.commutation_defect() <= 1e-12);
        let mut rng = StdRng::seed_from_u64(3);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let full = ResolventFamily::compute(&a, &k, 0.01, 2.0).unwrap();
        assert!(full.commutation_defect() <= 1e-10);
    }

    #[test]
    fn upsilon_examples() {
        let h = 1e-3;
        let fam = ResolventFamily::compute(&dmatrix![-1.0], &Kernel::zero(), h, 2.0).unwrap();
        let zero = Trajectory::constant(0.0, h, 2001, &[0.0]).unwrap();
        assert!(fam.upsilon_apply(&zero).unwrap().samples().all(|s| s[0] == 0.0));
        let one = Trajectory::constant(0.0, h, 2001, &[1.0]).unwrap();
        let out = fam.upsilon_apply(&one).unwrap();
        for (k, s) in out.samples().enumerate() {
            let t = k as f64 * h;
            assert!((s[0] - (1.0 - (-t).exp())).abs() < 1e-6);
        }

        let ident = ResolventFamily::compute(&dmatrix![0.0, 0.0; 0.0, 0.0], &Kernel::zero(), h, 1.0).unwrap();
        let c = Trajectory::constant(0.0, h, 1001, &[2.0, -3.0]).unwrap();
        let out = ident.upsilon_apply(&c).unwrap();
        let t = out.end();
        assert!((out.sample(1000)[0] - 2.0 * t).abs() < 1e-12);
        assert!((out.sample(1000)[1] + 3.0 * t).abs() < 1e-12);

        let coarse = Trajectory::constant(0.0, 2.0 * h, 10, &[1.0]).unwrap();
        assert!(matches!(fam.upsilon_apply(&coarse), Err(Error::GridMismatch(_))));
    }
}
