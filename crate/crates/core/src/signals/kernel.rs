use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trigonometric factor of a kernel term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "cos")]
    Cosine,
    #[serde(rename = "sin")]
    Sine,
}

/// One term `c * t^m * exp(sigma t) * {cos, sin}(omega t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    #[serde(rename = "c")]
    pub coefficient: f64,
    #[serde(rename = "m")]
    pub power: u32,
    #[serde(rename = "sigma")]
    pub rate: f64,
    #[serde(rename = "omega")]
    pub frequency: f64,
    pub phase: Phase,
}

impl KernelTerm {
    pub fn exp(coefficient: f64, rate: f64) -> Self {
        Self::new(coefficient, 0, rate, 0.0, Phase::Cosine)
    }

    pub fn new(coefficient: f64, power: u32, rate: f64, frequency: f64, phase: Phase) -> Self {
        Self {
            coefficient,
            power,
            rate,
            frequency,
            phase,
        }
    }

    /// `sigma + i omega`; the term is the real or imaginary part of `c t^m e^{z t}`.
    fn exponent(&self) -> Complex64 {
        Complex64::new(self.rate, self.frequency)
    }

    fn project(&self, value: Complex64) -> f64 {
        match self.phase {
            Phase::Cosine => value.re,
            Phase::Sine => value.im,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let envelope = self.coefficient * t.powi(self.power as i32) * (self.rate * t).exp();
        match self.phase {
            Phase::Cosine => envelope * (self.frequency * t).cos(),
            Phase::Sine => envelope * (self.frequency * t).sin(),
        }
    }
}

/// Scalar memory kernel: a finite sum of exponential-polynomial-trigonometric terms.
///
/// Every nonzero term decays (`rate < 0`), so the kernel and its derivative are integrable
/// on the half line. The family is closed under Laplace transform and antiderivative, both of
/// which are evaluated in closed form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Kernel {
    terms: Vec<KernelTerm>,
}

impl Kernel {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `c * exp(rate * t)`.
    pub fn exponential(coefficient: f64, rate: f64) -> Result<Self> {
        Self::new(vec![KernelTerm::exp(coefficient, rate)])
    }

    /// Validates and canonicalizes the term list. Zero-coefficient terms and `sin(0 t)` terms
    /// are dropped.
    pub fn new(terms: Vec<KernelTerm>) -> Result<Self> {
        let mut kept = Vec::with_capacity(terms.len());
        for (i, term) in terms.into_iter().enumerate() {
            let all_finite = term.coefficient.is_finite() && term.rate.is_finite() && term.frequency.is_finite();
            if !all_finite {
                return Err(Error::InvalidArgument(format!("kernel term {i}: non-finite field")));
            }
            if term.frequency < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "kernel term {i}: frequency must be >= 0, got {}",
                    term.frequency
                )));
            }
            if term.coefficient == 0.0 || (term.frequency == 0.0 && term.phase == Phase::Sine) {
                continue;
            }
            if term.rate >= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "kernel term {i}: rate must be < 0 for a nonzero term, got {}",
                    term.rate
                )));
            }
            kept.push(term);
        }
        Ok(Self { terms: kept })
    }

    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest decay rate over the terms, or `None` for the zero kernel.
    pub fn max_rate(&self) -> Option<f64> {
        self.terms.iter().map(|t| t.rate).reduce(f64::max)
    }

    /// Distinct poles of the Laplace transform with their maximal order.
    pub fn poles(&self) -> Vec<(Complex64, u32)> {
        let mut poles: Vec<(Complex64, u32)> = Vec::new();
        for term in &self.terms {
            let z = term.exponent();
            let candidates = if term.frequency == 0.0 {
                vec![z]
            } else {
                vec![z, z.conj()]
            };
            for p in candidates {
                let order = term.power + 1;
                match poles.iter_mut().find(|(q, _)| *q == p) {
                    Some(entry) => entry.1 = entry.1.max(order),
                    None => poles.push((p, order)),
                }
            }
        }
        poles
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    /// Closed-form Laplace transform `a^(lambda)`.
    ///
    /// For `Re lambda > max rate` this is the integral of `exp(-lambda t) a(t)` over the half
    /// line; elsewhere it is the meromorphic continuation.
    pub fn laplace(&self, lambda: Complex64) -> Result<Complex64> {
        let mut total = Complex64::new(0.0, 0.0);
        for term in &self.terms {
            let z = term.exponent();
            for pole in [z, z.conj()] {
                if (lambda - pole).norm() <= 1e-13 * (1.0 + pole.norm()) {
                    return Err(Error::KernelPole(lambda));
                }
            }
            let n = term.power as i32 + 1;
            let scale = term.coefficient * factorial(term.power);
            let upper = (lambda - z).powi(-n);
            let lower = (lambda - z.conj()).powi(-n);
            total += match term.phase {
                Phase::Cosine => scale * 0.5 * (upper + lower),
                Phase::Sine => scale * (upper - lower) / Complex64::new(0.0, 2.0),
            };
        }
        Ok(total)
    }

    /// `1 + integral_0^t a(s) ds`, the integrated kernel of the resolvent equation.
    pub fn integrated(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.integrated_unchecked(t))
    }

    pub(crate) fn integrated_unchecked(&self, t: f64) -> f64 {
        let mut acc = 1.0;
        for term in &self.terms {
            acc += term.coefficient * term.project(power_exp_integral(term.power, term.exponent(), t));
        }
        acc
    }

    /// Trapezoidal approximation of `integral_0^horizon exp(-lambda t) a(t) dt`.
    pub fn laplace_numeric(&self, lambda: Complex64, horizon: f64, step: f64) -> Result<Complex64> {
        if !(horizon > 0.0 && step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon and step must be positive, got T = {horizon}, h = {step}"
            )));
        }
        if let Some(rate) = self.max_rate() {
            if lambda.re <= rate {
                return Err(Error::InvalidArgument(format!(
                    "Re lambda = {} must exceed the largest kernel rate {rate}",
                    lambda.re
                )));
            }
        }
        if self.is_zero() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let n = (horizon / step).round().max(1.0) as usize;
        let h = horizon / n as f64;
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 0..=n {
            let t = k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            sum += w * (-lambda * t).exp() * self.eval_unchecked(t);
        }
        Ok(sum * h)
    }
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// `integral_0^t s^m exp(z s) ds` for `z != 0`, via the incomplete-gamma identity
/// `m!/p^{m+1} (1 - exp(-p t) sum_{k<=m} (p t)^k / k!)` with `p = -z`.
fn power_exp_integral(m: u32, z: Complex64, t: f64) -> Complex64 {
    let p = -z;
    let pt = p * t;
    let mut partial = Complex64::new(1.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for k in 1..=m {
        term = term * pt / k as f64;
        partial += term;
    }
    factorial(m) / p.powu(m + 1) * (Complex64::new(1.0, 0.0) - (-pt).exp() * partial)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Kernel::zero().eval(1.0).unwrap(), 0.0);
        let exp = Kernel::exponential(1.0, -1.0).unwrap();
        assert_eq!(exp.eval(0.0).unwrap(), 1.0);
        let te = Kernel::new(vec![KernelTerm::new(1.0, 1, -2.0, 0.0, Phase::Cosine)]).unwrap();
        assert!((te.eval(1.0).unwrap() - 0.1353352832366127).abs() < 1e-15);
        assert!(matches!(exp.eval(-0.1), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn laplace_examples() {
        let exp = Kernel::exponential(1.0, -1.0).unwrap();
        assert!((exp.laplace(c(1.0, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(Kernel::zero().laplace(c(3.0, -2.0)).unwrap(), c(0.0, 0.0));
        assert!((exp.laplace(c(0.0, 1.0)).unwrap() - c(0.5, -0.5)).norm() < 1e-15);
        assert!(matches!(exp.laplace(c(-1.0, 0.0)), Err(Error::KernelPole(_))));
    }

    #[test]
    fn laplace_of_oscillating_terms() {
        // e^{-t} cos 2t -> (l+1)/((l+1)^2+4); e^{-t} sin 2t -> 2/((l+1)^2+4)
        let l = c(0.7, 0.3);
        let cos = Kernel::new(vec![KernelTerm::new(1.0, 0, -1.0, 2.0, Phase::Cosine)]).unwrap();
        let sin = Kernel::new(vec![KernelTerm::new(1.0, 0, -1.0, 2.0, Phase::Sine)]).unwrap();
        let d = (l + 1.0) * (l + 1.0) + 4.0;
        assert!((cos.laplace(l).unwrap() - (l + 1.0) / d).norm() < 1e-14);
        assert!((sin.laplace(l).unwrap() - 2.0 / d).norm() < 1e-14);
        assert!(matches!(sin.laplace(c(-1.0, -2.0)), Err(Error::KernelPole(_))));
    }

    #[test]
    fn integrated_examples() {
        let exp = Kernel::exponential(1.0, -1.0).unwrap();
        assert_eq!(exp.integrated(0.0).unwrap(), 1.0);
        assert!((exp.integrated(60.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(Kernel::zero().integrated(7.0).unwrap(), 1.0);
        // 1 + int_0^t s e^{-s} ds = 2 - (1 + t) e^{-t}
        let te = Kernel::new(vec![KernelTerm::new(1.0, 1, -1.0, 0.0, Phase::Cosine)]).unwrap();
        let t: f64 = 1.7;
        assert!((te.integrated(t).unwrap() - (2.0 - (1.0 + t) * (-t).exp())).abs() < 1e-14);
    }

    #[test]
    fn numeric_laplace_examples() {
        let exp = Kernel::exponential(1.0, -1.0).unwrap();
        let v = exp.laplace_numeric(c(1.0, 0.0), 40.0, 1e-3).unwrap();
        assert!((v - c(0.5, 0.0)).norm() < 1e-6);
        let v = exp.laplace_numeric(c(2.0, 0.0), 40.0, 1e-3).unwrap();
        assert!((v - c(1.0 / 3.0, 0.0)).norm() < 1e-6);
        assert_eq!(
            Kernel::zero().laplace_numeric(c(1.0, 0.0), 40.0, 1e-3).unwrap(),
            c(0.0, 0.0)
        );
    }

    #[test]
    fn rejects_bad_terms() {
        assert!(Kernel::exponential(1.0, 0.5).is_err());
        assert!(Kernel::new(vec![KernelTerm::new(1.0, 0, -1.0, -1.0, Phase::Cosine)]).is_err());
        // sin(0 t) vanishes identically and is dropped
        let k = Kernel::new(vec![KernelTerm::new(1.0, 0, -1.0, 0.0, Phase::Sine)]).unwrap();
        assert!(k.is_zero());
    }

    #[test]
    fn poles_track_order() {
        let k = Kernel::new(vec![
            KernelTerm::new(1.0, 0, -1.0, 0.0, Phase::Cosine),
            KernelTerm::new(2.0, 2, -1.0, 0.0, Phase::Cosine),
            KernelTerm::new(1.0, 0, -0.5, 3.0, Phase::Sine),
        ])
        .unwrap();
        let poles = k.poles();
        assert_eq!(poles.len(), 3);
        assert!(poles.contains(&(c(-1.0, 0.0), 3)));
        assert!(poles.contains(&(c(-0.5, 3.0), 1)));
        assert!(poles.contains(&(c(-0.5, -3.0), 1)));
    }
}
