//! DG basis, volume quadrature, Romberg face integration and angular quadrature.

pub mod angular;
pub mod gauss;
pub mod lagrange;
pub mod reference;
pub mod romberg;

use thiserror::Error;

use crate::scalar::{Point2, Real};

pub use angular::{AngularQuadrature, Ordinate};
pub use lagrange::{Lagrange1d, TensorLagrange};
pub use romberg::{romberg, romberg_face_integral, RombergOptions, RombergResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("unsupported level-symmetric order S{0} (only S2 and S4)")]
    UnsupportedOrder(usize),
    #[error("integrand returned NaN at {at}")]
    NotANumber { at: f64 },
    #[error("tolerance must be positive")]
    InvalidTolerance,
}

/// Tensor Gauss–Legendre rule on `[0,1]^2`.
#[derive(Debug, Clone)]
pub struct VolumeQuadrature<T> {
    pub points: Vec<Point2<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> VolumeQuadrature<T> {
    /// `n` points per axis; exact for `Q_{2n-1}`.
    pub fn gauss(n: usize) -> Self {
        let (x, w) = gauss::gauss_legendre::<T>(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                points.push([x[i], x[j]]);
                weights.push(w[i] * w[j]);
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Order-`s` DG basis on the reference square, tabulated at a volume quadrature.
#[derive(Debug, Clone)]
pub struct ReferenceBasis<T> {
    basis: TensorLagrange<T>,
    quadrature: VolumeQuadrature<T>,
    values: Vec<Vec<T>>,
    gradients: Vec<Vec<Point2<T>>>,
}

impl<T: Real> ReferenceBasis<T> {
    /// Basis of order `s` with `s + 1 + extra_points` Gauss points per axis.
    pub fn new(order: usize, extra_points: usize) -> Self {
        let basis = TensorLagrange::new(order);
        let quadrature = VolumeQuadrature::gauss(order + 1 + extra_points);
        let values = quadrature.points.iter().map(|&p| basis.values(p)).collect();
        let gradients = quadrature.points.iter().map(|&p| basis.gradients(p)).collect();
        Self {
            basis,
            quadrature,
            values,
            gradients,
        }
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    /// Number of DOFs per element, `(s + 1)^2`.
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tensor(&self) -> &TensorLagrange<T> {
        &self.basis
    }

    pub fn quadrature(&self) -> &VolumeQuadrature<T> {
        &self.quadrature
    }

    /// Basis values at quadrature point `q`.
    pub fn values_at(&self, q: usize) -> &[T] {
        &self.values[q]
    }

    /// Reference gradients at quadrature point `q`.
    pub fn gradients_at(&self, q: usize) -> &[Point2<T>] {
        &self.gradients[q]
    }

    pub fn eval(&self, xi: Point2<T>) -> Vec<T> {
        self.basis.values(xi)
    }

    pub fn eval_gradients(&self, xi: Point2<T>) -> Vec<Point2<T>> {
        self.basis.gradients(xi)
    }
}
