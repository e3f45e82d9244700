use dide_core::delay_solver::{cross_validate, solve_direct_oracle, solve_mild, SystemSpec};
use dide_core::linalg::spectral_norm;
use dide_core::shift_diag::{admissibility_check, composition_check};
use dide_core::verify::{random, unit_delay_system};
use dide_core::{CharacteristicFunction, DelayMeasure, Error, Kernel, ResolventFamily, Trajectory};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn smooth_segment(rng: &mut StdRng, r: f64, d: usize, n: usize) -> Trajectory {
    let freq: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..3.0)).collect();
    let phase: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..6.0)).collect();
    Trajectory::from_fn(-r, r / n as f64, n + 1, d, |t| {
        (0..d).map(|i| (freq[i] * t + phase[i]).sin()).collect()
    })
    .unwrap()
}

/// `-(B B^T + I/2)`: Hurwitz, so the free resolvent decays for small memory.
fn stable_matrix(rng: &mut StdRng, d: usize) -> DMatrix<f64> {
    let b = random::matrix(rng, d, d);
    -(&b * b.transpose() + DMatrix::identity(d, d) * 0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exp_moment_is_conjugate_symmetric(seed in any::<u64>(), re in -2.0..2.0f64, im in -6.0..6.0f64) {
        let mut rng = rng(seed);
        let d = rng.gen_range(1..=3);
        let r = rng.gen_range(0.5..2.0);
        let mu = random::measure(&mut rng, r, d, d);
        let lambda = Complex64::new(re, im);
        let a = mu.exp_moment(lambda);
        let b = mu.exp_moment(lambda.conj());
        let scale = 1.0 + a.norm();
        prop_assert!((a.map(|z| z.conj()) - b).norm() <= 1e-13 * scale);
    }

    #[test]
    fn apply_is_linear(seed in any::<u64>(), alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let mut rng = rng(seed);
        let (q, d) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
        let r = rng.gen_range(0.5..2.0);
        let mu = random::measure(&mut rng, r, q, d);
        let phi = random::piecewise_linear(&mut rng, -r, r / 50.0, 51, d, 7);
        let psi = random::piecewise_linear(&mut rng, -r, r / 50.0, 51, d, 4);
        let mix = Trajectory::from_flat(-r, r / 50.0, d, phi.as_flat().iter().zip(psi.as_flat()).map(|(a, b)| alpha * a + beta * b).collect()).unwrap();
        let lhs = mu.apply(&mix.history_at(0.0, r).unwrap()).unwrap();
        let rhs = mu.apply(&phi.history_at(0.0, r).unwrap()).unwrap() * alpha + mu.apply(&psi.history_at(0.0, r).unwrap()).unwrap() * beta;
        prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn exp_moment_at_zero_acts_like_apply_on_constants(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let d = rng.gen_range(1..=3);
        let r = rng.gen_range(0.5..2.0);
        let mu = random::measure(&mut rng, r, d, d);
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let constant = Trajectory::constant(-r, r / 10.0, 11, &v).unwrap();
        let applied = mu.apply(&constant.history_at(0.0, r).unwrap()).unwrap();
        let moment = mu.exp_moment(Complex64::new(0.0, 0.0)).map(|z| z.re) * DVector::from_vec(v);
        prop_assert!((applied - &moment).norm() <= 1e-12 * (1.0 + moment.norm()));
    }

    #[test]
    fn total_variation_is_monotone(seed in any::<u64>(), a in 0.01..1.0f64, b in 0.01..1.0f64) {
        let mut rng = rng(seed);
        let r = rng.gen_range(0.5..2.0);
        let mu = random::measure(&mut rng, r, 2, 2);
        let (lo, hi) = (a.min(b) * r, a.max(b) * r);
        prop_assert!(mu.total_variation(lo).unwrap() <= mu.total_variation(hi).unwrap() * (1.0 + 1e-14));
    }

    #[test]
    fn yosida_error_decreases(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let r = rng.gen_range(0.5..2.0);
        let d = rng.gen_range(1..=2);
        let mu = random::measure(&mut rng, r, d, d);
        let phi = smooth_segment(&mut rng, r, d, 2000);
        let seg = phi.history_at(0.0, r).unwrap();
        let exact = mu.apply(&seg).unwrap();
        let coarse = (mu.yosida_approx(&seg, 100.0).unwrap() - &exact).norm();
        let fine = (mu.yosida_approx(&seg, 1e4).unwrap() - &exact).norm();
        prop_assert!(fine <= coarse + 1e-14, "{fine} > {coarse}");
        prop_assert!(fine <= 1e-3 * (1.0 + exact.norm()));
    }

    #[test]
    fn factorization_identity(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let d = rng.gen_range(1..=3);
        let cf = CharacteristicFunction::new(random::matrix(&mut rng, d, d), random::kernel(&mut rng, 2), random::measure(&mut rng, 1.0, d, d)).unwrap();
        for _ in 0..100 {
            let lambda = Complex64::new(rng.gen_range(-1.0..2.0), rng.gen_range(-5.0..5.0));
            if cf.kernel_poles().iter().any(|(p, _)| (p - lambda).norm() < 1e-3) {
                continue;
            }
            match cf.factored_det(lambda) {
                Ok((p, q)) => {
                    let det = cf.char_det(lambda).unwrap();
                    prop_assert!((det - p * q).norm() <= 1e-10 * det.norm().max(1e-300) + 1e-13);
                }
                Err(Error::SingularFreeResolvent(_)) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn characteristic_determinant_is_conjugate_symmetric(seed in any::<u64>(), re in -1.0..2.0f64, im in -5.0..5.0f64) {
        let mut rng = rng(seed);
        let d = rng.gen_range(1..=3);
        let cf = CharacteristicFunction::new(random::matrix(&mut rng, d, d), random::kernel(&mut rng, 2), random::measure(&mut rng, 1.0, d, d)).unwrap();
        let lambda = Complex64::new(re, im);
        if let (Ok(a), Ok(b)) = (cf.char_det(lambda), cf.char_det(lambda.conj())) {
            prop_assert!((a.conj() - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn admissibility_holds(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let r = rng.gen_range(0.5..2.0);
        let h = r / 40.0;
        let steps = rng.gen_range(1..=120);
        let m = rng.gen_range(1..=2);
        let q = rng.gen_range(1..=2);
        let l = random::measure(&mut rng, r, q, m);
        let u = random::piecewise_linear(&mut rng, 0.0, h, steps + 1, m, 5.min(steps + 1));
        let p = rng.gen_range(1.05..5.0);
        let check = admissibility_check(&l, &u, steps as f64 * h, p).unwrap();
        prop_assert!(check.holds(), "{check:?}");
    }

    #[test]
    fn composition_is_exact(seed in any::<u64>(), t in 0usize..60, s in 0usize..60, n in 1usize..30) {
        let mut rng = rng(seed);
        let h = 0.05;
        let u = random::piecewise_linear(&mut rng, 0.0, h, t + s + 2, 2, 4);
        prop_assert!(composition_check(&u, t as f64 * h, s as f64 * h, n as f64 * h).unwrap() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn laplace_transform_of_resolvent_matches_free_resolvent(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let d = rng.gen_range(1..=2);
        let a = stable_matrix(&mut rng, d);
        let kernel = Kernel::exponential(rng.gen_range(-0.3..0.3), rng.gen_range(-2.0..-1.0)).unwrap();
        let h = 0.01;
        let fam = ResolventFamily::compute(&a, &kernel, h, 40.0).unwrap();
        let mut transform = DMatrix::<f64>::zeros(d, d);
        for k in 0..fam.len() {
            let w = if k == 0 || k + 1 == fam.len() { 0.5 } else { 1.0 };
            transform += fam.matrix(k) * (w * h * (-(k as f64) * h).exp());
        }
        let factor = 1.0 + kernel.laplace(Complex64::new(1.0, 0.0)).unwrap().re;
        let h1 = (DMatrix::<f64>::identity(d, d) - &a * factor).try_inverse().unwrap();
        prop_assert!((transform - &h1).amax() <= 1e-4);
    }

    #[test]
    fn stable_resolvents_decay_exponentially(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let d = rng.gen_range(1..=3);
        let a = stable_matrix(&mut rng, d);
        let kernel = Kernel::exponential(rng.gen_range(-0.3..0.3), rng.gen_range(-2.0..-1.0)).unwrap();
        let h = 0.02;
        let fam = ResolventFamily::compute(&a, &kernel, h, 40.0).unwrap();
        let envelope = |lo: f64, hi: f64| (0..fam.len())
            .filter(|&k| (lo..=hi).contains(&(k as f64 * h)))
            .map(|k| spectral_norm(fam.matrix(k)))
            .fold(0.0, f64::max);
        let omega = (envelope(30.0, 40.0).ln() - envelope(10.0, 20.0).ln()) / 20.0;
        prop_assert!(omega < 0.0, "fitted rate {omega}");
        let constant = (0..fam.len()).map(|k| spectral_norm(fam.matrix(k)) * (-omega * k as f64 * h).exp()).fold(0.0, f64::max);
        prop_assert!(constant.is_finite());
    }

    #[test]
    fn schemes_agree_without_delay(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let d = rng.gen_range(1..=3);
        let a = random::matrix(&mut rng, d, d);
        let x0 = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let phi = random::piecewise_linear(&mut rng, -1.0, 1e-3, 1001, d, 4);
        let spec = SystemSpec::new(a, Kernel::zero(), DelayMeasure::zero(1.0, d, d).unwrap(), x0, phi);
        prop_assert!(cross_validate(&spec, 1e-3, 1.0).unwrap() <= 1e-8);
    }
}

#[test]
fn unit_delay_cross_validation() {
    assert!(cross_validate(&unit_delay_system(1e-3), 1e-3, 2.0).unwrap() <= 1e-5);
}

/// `x' = -x(t - 1)`, `phi(theta) = e^theta`, `x0 = 1`: `x(t) = 1 - e^{t-1} + e^{-1}` on `[0, 1]`.
fn exponential_history_system(h: f64) -> SystemSpec {
    SystemSpec::new(
        dmatrix![0.0],
        Kernel::zero(),
        DelayMeasure::atom(1.0, -1.0, dmatrix![-1.0]).unwrap(),
        dvector![1.0],
        Trajectory::from_fn(-1.0, h, (1.0 / h).round() as usize + 1, 1, |t| vec![t.exp()]).unwrap(),
    )
}

fn memory_system(h: f64) -> SystemSpec {
    SystemSpec::new(
        dmatrix![-1.0],
        Kernel::exponential(1.0, -1.0).unwrap(),
        DelayMeasure::zero(1.0, 1, 1).unwrap(),
        dvector![1.0],
        Trajectory::constant(-1.0, h, (1.0 / h).round() as usize + 1, &[1.0]).unwrap(),
    )
}

#[test]
fn both_schemes_converge_at_second_order() {
    type Solver = fn(&SystemSpec, f64, f64) -> dide_core::Result<dide_core::SolveReport>;
    let solvers: [(&str, Solver); 2] = [("mild", solve_mild), ("direct", solve_direct_oracle)];
    for (name, solve) in solvers {
        let delay_error = |h: f64| {
            let x = solve(&exponential_history_system(h), h, 1.0)
                .unwrap()
                .x
                .eval(1.0)
                .unwrap()[0];
            (x - (-1.0f64).exp()).abs()
        };
        let memory_error = |h: f64| {
            let report = solve(&memory_system(h), h, 4.0).unwrap();
            let origin = report.origin_index();
            (0..=(4.0 / h).round() as usize)
                .map(|k| (report.x.sample(origin + k)[0] - dide_core::oracle::damped_cosine(k as f64 * h)).abs())
                .fold(0.0, f64::max)
        };
        for (case, ratio) in [
            ("delay", delay_error(0.01) / delay_error(0.005)),
            ("memory", memory_error(0.01) / memory_error(0.005)),
        ] {
            assert!((3.5..=4.5).contains(&ratio), "{name} {case}: ratio {ratio}");
        }
    }
}
