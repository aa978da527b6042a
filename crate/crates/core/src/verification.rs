//! Manufactured solutions, L2 errors and observed convergence orders.
//!
//! The manufactured angular flux is
//!
//! ```text
//! psi_d(x, y) = [ (1 + x^2 + y^2) / 2 + cos(3x + 3y/2) ] * [ mu_d^2 + eta_d ]
//! ```
//!
//! The angular factor is negative for some ordinates, so `psi_d` may be negative there.
//! The exact scalar flux sums `psi_d` with the same discrete quadrature as the solver.

use std::fmt::Write as _;

use thiserror::Error;

use crate::assembly::{AssemblyError, CrossSections, SourceTerm};
use crate::discretization::{AngularQuadrature, Ordinate, ReferenceBasis};
use crate::mesh::HighOrderMesh;
use crate::scalar::{Point2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerificationError {
    #[error("convergence order needs at least 3 refinement levels, got {0}")]
    TooFewLevels(usize),
    #[error("mesh sizes and errors must be positive and finite")]
    InvalidData,
    #[error("solution has {got} values, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Spatial factor `(1 + x^2 + y^2) / 2 + cos(3x + 3y/2)`.
pub fn spatial_factor<T: Real>(x: Point2<T>) -> T {
    let half = T::of(0.5);
    half * (T::one() + x[0] * x[0] + x[1] * x[1]) + (T::of(3.0) * x[0] + T::of(1.5) * x[1]).cos()
}

/// Gradient of [`spatial_factor`].
pub fn spatial_gradient<T: Real>(x: Point2<T>) -> Point2<T> {
    let s = (T::of(3.0) * x[0] + T::of(1.5) * x[1]).sin();
    [x[0] - T::of(3.0) * s, x[1] - T::of(1.5) * s]
}

/// Angular factor `mu^2 + eta`.
pub fn angular_factor<T: Real>(o: &Ordinate<T>) -> T {
    o.direction[0] * o.direction[0] + o.direction[1]
}

/// Manufactured problem for a fixed quadrature and cross sections.
#[derive(Debug, Clone)]
pub struct ManufacturedSolution<T> {
    quadrature: AngularQuadrature<T>,
    xs: CrossSections<T>,
    /// `sum_d w_d (mu_d^2 + eta_d)`.
    angular_moment: T,
}

impl<T: Real> ManufacturedSolution<T> {
    pub fn new(quadrature: AngularQuadrature<T>, xs: CrossSections<T>) -> Self {
        let angular_moment = quadrature
            .ordinates
            .iter()
            .map(|o| o.weight * angular_factor(o))
            .sum();
        Self {
            quadrature,
            xs,
            angular_moment,
        }
    }

    pub fn quadrature(&self) -> &AngularQuadrature<T> {
        &self.quadrature
    }

    pub fn cross_sections(&self) -> &CrossSections<T> {
        &self.xs
    }

    pub fn psi(&self, x: Point2<T>, d: usize) -> T {
        spatial_factor(x) * angular_factor(&self.quadrature.ordinates[d])
    }

    pub fn grad_psi(&self, x: Point2<T>, d: usize) -> Point2<T> {
        let a = angular_factor(&self.quadrature.ordinates[d]);
        let g = spatial_gradient(x);
        [g[0] * a, g[1] * a]
    }

    /// `sum_d w_d psi_d(x)` with the discrete quadrature.
    pub fn scalar_flux(&self, x: Point2<T>) -> T {
        spatial_factor(x) * self.angular_moment
    }

    /// `q_d = Omega . grad psi_d + sigma_t psi_d - sigma_s phi / (4 pi)`.
    pub fn source(&self, x: Point2<T>, region: i32, d: usize) -> Result<T, AssemblyError> {
        let m = self.xs.at(x, region)?;
        let o = &self.quadrature.ordinates[d];
        let g = self.grad_psi(x, d);
        let streaming = o.direction[0] * g[0] + o.direction[1] * g[1];
        let four_pi = T::of(4.0) * T::PI();
        Ok(streaming + m.sigma_t * self.psi(x, d) - m.sigma_s * self.scalar_flux(x) / four_pi)
    }
}

impl<T: Real> SourceTerm<T> for ManufacturedSolution<T> {
    /// Missing regions evaluate to NaN, which surfaces as a NaN solution; assembly with the
    /// same cross sections reports the region first.
    fn volume(&self, x: Point2<T>, region: i32, d: usize) -> T {
        self.source(x, region, d).unwrap_or_else(|_| T::nan())
    }

    fn inflow(&self, x: Point2<T>, _: i32, d: usize) -> T {
        self.psi(x, d)
    }
}

/// `sqrt(sum_e int (phi_h - exact)^2)` with `2s + 3` Gauss points per axis.
pub fn l2_error<T: Real>(
    mesh: &HighOrderMesh<T>,
    order: usize,
    phi: &[T],
    exact: impl Fn(Point2<T>) -> T,
) -> Result<T, VerificationError> {
    l2_error_with_points(mesh, order, phi, exact, 2 * order + 3)
}

/// [`l2_error`] with `points` Gauss points per axis.
pub fn l2_error_with_points<T: Real>(
    mesh: &HighOrderMesh<T>,
    order: usize,
    phi: &[T],
    exact: impl Fn(Point2<T>) -> T,
    points: usize,
) -> Result<T, VerificationError> {
    let basis = ReferenceBasis::<T>::new(order, points.saturating_sub(order + 1));
    let nu = basis.len();
    let expected = nu * mesh.num_elements();
    if phi.len() != expected {
        return Err(VerificationError::LengthMismatch { expected, got: phi.len() });
    }
    let quad = basis.quadrature();
    let geo = mesh.geometry_basis();
    let geo_values: Vec<Vec<T>> = quad.points.iter().map(|&p| geo.values(p)).collect();
    let geo_grads: Vec<Vec<Point2<T>>> = quad.points.iter().map(|&p| geo.gradients(p)).collect();
    let mut total = T::zero();
    for e in 0..mesh.num_elements() {
        let coeffs = &phi[e * nu..(e + 1) * nu];
        for (q, &w) in quad.weights.iter().enumerate() {
            let x = mesh.map_from_values(e, &geo_values[q]);
            let det = mesh.jacobian_from_gradients(e, &geo_grads[q]).det;
            let approx: T = basis.values_at(q).iter().zip(coeffs).map(|(&u, &c)| u * c).sum();
            let diff = approx - exact(x);
            total += w * det * diff * diff;
        }
    }
    Ok(total.sqrt())
}

/// Least-squares slope of `log E` against `log h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderEstimate {
    pub order: f64,
    /// False when some refinement did not reduce the error.
    pub monotone: bool,
}

/// Observed order from `(h, E)` pairs, at least three of them.
pub fn convergence_order(data: &[(f64, f64)]) -> Result<OrderEstimate, VerificationError> {
    if data.len() < 3 {
        return Err(VerificationError::TooFewLevels(data.len()));
    }
    if data.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(VerificationError::InvalidData);
    }
    let pts: Vec<(f64, f64)> = data.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(VerificationError::InvalidData);
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 < w[0].1);
    if !monotone {
        log::warn!("errors do not decrease monotonically under refinement: {data:?}");
    }
    Ok(OrderEstimate {
        order: sxy / sxx,
        monotone,
    })
}

/// One row of an error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub tag: String,
    pub dofs: usize,
    pub error: f64,
}

/// CSV `mesh,dofs,l2_error[,order]`; the order column (fit over all rows, reported on the
/// last row) appears when there are at least three rows and `sizes` is given.
pub fn error_table_csv(rows: &[ErrorRow], sizes: Option<&[f64]>) -> String {
    let order = sizes.filter(|_| rows.len() >= 3).and_then(|h| {
        let data: Vec<(f64, f64)> = h.iter().zip(rows).map(|(&h, r)| (h, r.error)).collect();
        convergence_order(&data).ok()
    });
    let mut s = String::from("mesh,dofs,l2_error");
    if order.is_some() {
        s.push_str(",order");
    }
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(s, "{},{},{:.6e}", r.tag, r.dofs, r.error);
        if let Some(o) = order {
            if i + 1 == rows.len() {
                let _ = write!(s, ",{:.4}", o.order);
            } else {
                s.push(',');
            }
        }
        s.push('\n');
    }
    s
}
