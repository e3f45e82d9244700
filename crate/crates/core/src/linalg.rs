//! Small dense helpers shared by the numerical modules.

use std::sync::LazyLock;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{ComplexField, DMatrix};

/// Largest singular value.
pub fn spectral_norm<T: ComplexField>(m: &DMatrix<T>) -> T::RealField {
    if m.is_empty() {
        return nalgebra::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(nalgebra::zero(), |a: T::RealField, b| if b > a { b } else { a })
}

/// `out += scale * m * v` on a column-major matrix without allocating.
pub(crate) fn gemv_acc(out: &mut [f64], m: &DMatrix<f64>, v: &[f64], scale: f64) {
    debug_assert_eq!(m.ncols(), v.len());
    debug_assert_eq!(m.nrows(), out.len());
    for (j, &vj) in v.iter().enumerate() {
        let c = scale * vj;
        if c == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m.column(j).iter()) {
            *o += mij * c;
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    fn new(n: usize) -> Self {
        let gl = GaussLegendre::new(n.try_into().expect("nonzero degree"));
        let (nodes, weights) = gl.as_node_weight_pairs().iter().copied().unzip();
        Self { nodes, weights }
    }

    /// Mapped `(node, weight)` pairs on `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

pub(crate) static GL4: LazyLock<Rule> = LazyLock::new(|| Rule::new(4));
pub(crate) static GL16: LazyLock<Rule> = LazyLock::new(|| Rule::new(16));
