//! Reference values computed along paths that share no code with the solvers.

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::measures::DelayMeasure;

/// `exp(t A)` by Pade scaling and squaring.
pub fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    (a * t).exp()
}

/// Resolvent of `x' = -x + integral e^{-(t-s)} (-x(s)) ds`: `e^{-t} cos t`.
pub fn damped_cosine(t: f64) -> f64 {
    (-t).exp() * t.cos()
}

/// Solution of `x'(t) = x(t - 1)` with constant history 1, by steps on `[0, 3]`.
pub fn unit_delay_steps(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t <= 1.0 {
        1.0 + t
    } else if t <= 2.0 {
        let s = t - 1.0;
        2.0 + s + s * s / 2.0
    } else {
        let s = t - 2.0;
        3.5 + 2.0 * s + s * s / 2.0 + s * s * s / 6.0
    }
}

/// `det(lambda I - A - integral e^{lambda theta} dmu(theta))` for a system without memory,
/// with the density integrated by composite Gauss-Legendre instead of closed-form moments.
pub fn classical_delay_det(a: &DMatrix<f64>, mu: &DelayMeasure, lambda: Complex64) -> Complex64 {
    let d = a.nrows();
    let mut m = DMatrix::<Complex64>::from_fn(d, d, |i, j| {
        let diag = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
        diag - a[(i, j)]
    });
    for atom in mu.atoms() {
        let e = (lambda * atom.theta).exp();
        m.zip_apply(&atom.matrix, |x, c| *x -= e * c);
    }
    let rule = GaussLegendre::new(20.try_into().expect("nonzero"));
    let (nodes, weights): (Vec<f64>, Vec<f64>) = rule.as_node_weight_pairs().iter().copied().unzip();
    for piece in mu.density() {
        let cells = 8;
        let w = (piece.hi - piece.lo) / cells as f64;
        for cell in 0..cells {
            let lo = piece.lo + cell as f64 * w;
            for (x, wt) in nodes.iter().zip(&weights) {
                let theta = lo + 0.5 * w * (x + 1.0);
                let e = (lambda * theta).exp() * (0.5 * w * wt);
                let density = piece.eval(theta);
                m.zip_apply(&density, |x, c| *x -= e * c);
            }
        }
    }
    m.determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DensityPiece;
    use nalgebra::dmatrix;

    #[test]
    fn classical_det_matches_characteristic_function() {
        let mu = DelayMeasure::new(
            1.0,
            1,
            1,
            vec![],
            vec![DensityPiece {
                lo: -1.0,
                hi: -0.25,
                coeffs: vec![dmatrix![0.5], dmatrix![-1.0]],
            }],
        )
        .unwrap();
        let lambda = Complex64::new(0.4, 2.0);
        let oracle = classical_delay_det(&dmatrix![-1.0], &mu, lambda);
        let direct = lambda + 1.0 - mu.exp_moment(lambda)[(0, 0)];
        assert!((oracle - direct).norm() < 1e-13);
    }

    #[test]
    fn steps_solution_is_continuous() {
        for t in [1.0, 2.0] {
            assert!((unit_delay_steps(t - 1e-12) - unit_delay_steps(t + 1e-12)).abs() < 1e-10);
        }
        assert_eq!(unit_delay_steps(2.0), 3.5);
    }
}
