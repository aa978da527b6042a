//! Per-ordinate DG transport blocks.
//!
//! For ordinate `d` and element `e` with basis `u_m` the local system reads
//!
//! ```text
//! (G_e + F_e + M_t,e) psi_e + sum_u F_{e,u} psi_u = q_e + M_s,e phi_e / (4 pi)
//! ```
//!
//! * `G_e[m][n] = -int (Omega . grad u_m) u_n`
//! * `F_e[m][n] = int_{de} w+ u_m u_n`, with `w+ = max(Omega . n, 0)` (outflow)
//! * `F_{e,u}[m][n] = -int_{e|u} w- u_m u_n^u`, with `w- = max(-Omega . n, 0)` (inflow from `u`)
//! * `q_e[m] = int q_d u_m + int_{de ∩ dD} w- u_m psi_inc`
//!
//! Coupling blocks therefore have non-positive entries at `s = 1`, and row `m` always
//! belongs to the test function.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::discretization::gauss::gauss_legendre;
use crate::discretization::reference;
use crate::discretization::romberg::adaptive_romberg_vec;
use crate::discretization::{AngularQuadrature, Lagrange1d, Ordinate, QuadratureError, ReferenceBasis, RombergOptions};
use crate::linalg::DenseMatrix;
use crate::mesh::{HighOrderMesh, MeshError};
use crate::scalar::{dot, Point2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("element {elem} has non-positive Jacobian determinant {det:e} at a quadrature point")]
    SingularJacobian { elem: usize, det: f64 },
    #[error("no cross sections for region {0}")]
    MissingRegion(i32),
    #[error("invalid cross sections in element {elem}: sigma_t = {sigma_t}, sigma_s = {sigma_s} (need sigma_t >= sigma_s >= 0)")]
    InvalidCrossSection { elem: usize, sigma_t: f64, sigma_s: f64 },
    #[error("DG order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("invalid assembly options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Total and scattering cross sections (1/cm).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material<T> {
    pub sigma_t: T,
    pub sigma_s: T,
}

impl<T: Real> Material<T> {
    pub fn new(sigma_t: T, sigma_s: T) -> Self {
        Self { sigma_t, sigma_s }
    }

    pub fn is_valid(&self) -> bool {
        self.sigma_t >= self.sigma_s && self.sigma_s >= T::zero()
    }
}

/// Cross sections by region attribute, or as a function of position.
#[derive(Clone)]
pub enum CrossSections<T> {
    Uniform(Material<T>),
    Regions(BTreeMap<i32, Material<T>>),
    Analytic(Arc<dyn Fn(Point2<T>) -> Material<T> + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for CrossSections<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform(m) => f.debug_tuple("Uniform").field(m).finish(),
            Self::Regions(r) => f.debug_tuple("Regions").field(r).finish(),
            Self::Analytic(_) => f.write_str("Analytic(..)"),
        }
    }
}

impl<T: Real> CrossSections<T> {
    pub fn uniform(sigma_t: T, sigma_s: T) -> Self {
        Self::Uniform(Material::new(sigma_t, sigma_s))
    }

    pub fn regions(table: impl IntoIterator<Item = (i32, Material<T>)>) -> Self {
        Self::Regions(table.into_iter().collect())
    }

    /// Evaluates at point `x` of an element in `region`.
    pub fn at(&self, x: Point2<T>, region: i32) -> Result<Material<T>, AssemblyError> {
        match self {
            Self::Uniform(m) => Ok(*m),
            Self::Regions(table) => table.get(&region).copied().ok_or(AssemblyError::MissingRegion(region)),
            Self::Analytic(f) => Ok(f(x)),
        }
    }
}

/// Volumetric source `q_d(x)` and incident flux `psi_inc(x)` on inflow boundaries.
pub trait SourceTerm<T>: Sync {
    fn volume(&self, x: Point2<T>, region: i32, d: usize) -> T;
    fn inflow(&self, x: Point2<T>, attr: i32, d: usize) -> T;
}

/// Spatially constant isotropic source and incident flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSource<T> {
    pub volume: T,
    pub inflow: T,
}

impl<T: Real> SourceTerm<T> for ConstantSource<T> {
    fn volume(&self, _: Point2<T>, _: i32, _: usize) -> T {
        self.volume
    }

    fn inflow(&self, _: Point2<T>, _: i32, _: usize) -> T {
        self.inflow
    }
}

/// Source given by two closures, `volume(x, d)` and `inflow(x, d)`.
pub struct FnSource<Q, B> {
    pub volume: Q,
    pub inflow: B,
}

impl<T, Q, B> SourceTerm<T> for FnSource<Q, B>
where
    T: Real,
    Q: Fn(Point2<T>, usize) -> T + Sync,
    B: Fn(Point2<T>, usize) -> T + Sync,
{
    fn volume(&self, x: Point2<T>, _: i32, d: usize) -> T {
        (self.volume)(x, d)
    }

    fn inflow(&self, x: Point2<T>, _: i32, d: usize) -> T {
        (self.inflow)(x, d)
    }
}

/// Rule for the face integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceQuadrature<T> {
    /// Adaptive Romberg with absolute tolerance `rel_tol * face length` and per-panel depth
    /// `max_levels`.
    Romberg { rel_tol: T, max_levels: usize },
    /// Composite Gauss–Legendre rule with `points` per panel on `panels` equal panels.
    Gauss { points: usize, panels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions<T> {
    /// Volume Gauss points per axis beyond `s + r + 1`.
    pub extra_volume_points: usize,
    pub face: FaceQuadrature<T>,
    /// A coupling block is kept when its largest entry exceeds this times the face length.
    pub edge_threshold: T,
}

impl<T: Real> Default for AssemblyOptions<T> {
    fn default() -> Self {
        Self {
            extra_volume_points: 1,
            face: FaceQuadrature::Romberg {
                rel_tol: T::of(1e-13),
                max_levels: 6,
            },
            edge_threshold: T::of(1e-12),
        }
    }
}

/// Inflow coupling of element `e` to its upwind neighbour `from`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling<T> {
    pub from: usize,
    /// `F_{e,from}`, rows indexed by `e`'s basis, columns by `from`'s.
    pub block: DenseMatrix<T>,
}

/// Outflow functional of one boundary face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFlux<T> {
    pub elem: usize,
    pub face: usize,
    pub attr: i32,
    /// `int w+ u_n ds`, so the outgoing current is `weights . psi_elem`.
    pub weights: Vec<T>,
    /// Incoming current `int w- psi_inc ds`.
    pub inflow: T,
    pub length: T,
}

/// Blocks that depend on the ordinate.
#[derive(Debug, Clone)]
pub struct OrdinateBlocks<T> {
    pub ordinate: Ordinate<T>,
    /// `G_e` per element.
    pub streaming: Vec<DenseMatrix<T>>,
    /// `F_e` per element.
    pub outflow: Vec<DenseMatrix<T>>,
    /// Incoming couplings per element, sorted by upwind element id.
    pub upwind: Vec<Vec<Coupling<T>>>,
    /// Volume source moments per element.
    pub q_volume: Vec<Vec<T>>,
    /// Inflow boundary moments per element.
    pub q_inflow: Vec<Vec<T>>,
    pub boundary: Vec<BoundaryFlux<T>>,
    /// Face integrals that did not meet the Romberg tolerance.
    pub unconverged_faces: usize,
}

impl<T: Real> OrdinateBlocks<T> {
    /// Total source moments `q_e` (volume plus inflow) of element `e`.
    pub fn source(&self, e: usize) -> Vec<T> {
        self.q_volume[e]
            .iter()
            .zip(&self.q_inflow[e])
            .map(|(&a, &b)| a + b)
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.upwind.iter().map(Vec::len).sum()
    }
}

/// The assembled discrete transport operator for every ordinate. Immutable.
#[derive(Debug, Clone)]
pub struct TransportOperator<T> {
    order: usize,
    dofs: usize,
    regions: Vec<i32>,
    quadrature: AngularQuadrature<T>,
    mass_t: Vec<DenseMatrix<T>>,
    mass_s: Vec<DenseMatrix<T>>,
    ordinates: Vec<OrdinateBlocks<T>>,
}

struct VolumeData<T> {
    /// Physical point and `w |J|` at each quadrature point, per element.
    points: Vec<Vec<(Point2<T>, T)>>,
    mass_t: Vec<DenseMatrix<T>>,
    mass_s: Vec<DenseMatrix<T>>,
    /// `-int d_x u_m u_n` and `-int d_y u_m u_n`.
    grad_x: Vec<DenseMatrix<T>>,
    grad_y: Vec<DenseMatrix<T>>,
}

fn assemble_volume<T: Real>(
    mesh: &HighOrderMesh<T>,
    basis: &ReferenceBasis<T>,
    xs: &CrossSections<T>,
) -> Result<VolumeData<T>, AssemblyError> {
    let nu = basis.len();
    let quad = basis.quadrature();
    let geo = mesh.geometry_basis();
    let geo_values: Vec<Vec<T>> = quad.points.iter().map(|&p| geo.values(p)).collect();
    let geo_grads: Vec<Vec<Point2<T>>> = quad.points.iter().map(|&p| geo.gradients(p)).collect();
    let per_element: Vec<_> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let region = mesh.region(e);
            let mut points = Vec::with_capacity(quad.len());
            let mut mt = DenseMatrix::zeros(nu, nu);
            let mut ms = DenseMatrix::zeros(nu, nu);
            let mut gx = DenseMatrix::zeros(nu, nu);
            let mut gy = DenseMatrix::zeros(nu, nu);
            let mut phys = vec![[T::zero(); 2]; nu];
            for (q, &w) in quad.weights.iter().enumerate() {
                let jac = mesh.jacobian_from_gradients(e, &geo_grads[q]);
                if !(jac.det > T::zero()) {
                    return Err(AssemblyError::SingularJacobian {
                        elem: e,
                        det: jac.det.to_f64_lossy(),
                    });
                }
                let x = mesh.map_from_values(e, &geo_values[q]);
                let mat = xs.at(x, region)?;
                if !mat.is_valid() {
                    return Err(AssemblyError::InvalidCrossSection {
                        elem: e,
                        sigma_t: mat.sigma_t.to_f64_lossy(),
                        sigma_s: mat.sigma_s.to_f64_lossy(),
                    });
                }
                let dv = w * jac.det;
                points.push((x, dv));
                let u = basis.values_at(q);
                for (m, g) in basis.gradients_at(q).iter().enumerate() {
                    phys[m] = jac.inverse_transpose_apply(*g);
                }
                for m in 0..nu {
                    let (um, dxm, dym) = (u[m] * dv, phys[m][0] * dv, phys[m][1] * dv);
                    for n in 0..nu {
                        mt[(m, n)] += mat.sigma_t * um * u[n];
                        ms[(m, n)] += mat.sigma_s * um * u[n];
                        gx[(m, n)] -= dxm * u[n];
                        gy[(m, n)] -= dym * u[n];
                    }
                }
            }
            Ok((points, mt, ms, gx, gy))
        })
        .collect::<Result<_, _>>()?;
    let mut data = VolumeData {
        points: Vec::with_capacity(per_element.len()),
        mass_t: Vec::with_capacity(per_element.len()),
        mass_s: Vec::with_capacity(per_element.len()),
        grad_x: Vec::with_capacity(per_element.len()),
        grad_y: Vec::with_capacity(per_element.len()),
    };
    for (p, mt, ms, gx, gy) in per_element {
        data.points.push(p);
        data.mass_t.push(mt);
        data.mass_s.push(ms);
        data.grad_x.push(gx);
        data.grad_y.push(gy);
    }
    Ok(data)
}

/// Integrates a vector-valued face integrand over `t in [0, 1]`; returns `(values, converged)`.
fn face_integral<T: Real>(
    rule: &FaceQuadrature<T>,
    length_hint: T,
    dim: usize,
    mut f: impl FnMut(T, &mut [T]),
) -> Result<(Vec<T>, bool), AssemblyError> {
    match *rule {
        FaceQuadrature::Romberg { rel_tol, max_levels } => {
            let opts = RombergOptions {
                max_levels,
                ..RombergOptions::adaptive(rel_tol * length_hint)
            };
            let r = adaptive_romberg_vec(f, dim, T::zero(), T::one(), &opts)?;
            Ok((r.values, r.converged))
        }
        FaceQuadrature::Gauss { points, panels } => {
            if points == 0 || panels == 0 {
                return Err(AssemblyError::InvalidOptions("face Gauss rule needs points and panels".into()));
            }
            let (x, w) = gauss_legendre::<T>(points);
            let h = T::one() / T::of_usize(panels);
            let mut acc = vec![T::zero(); dim];
            let mut buf = vec![T::zero(); dim];
            for p in 0..panels {
                let a = T::of_usize(p) * h;
                for (&xi, &wi) in x.iter().zip(&w) {
                    f(a + h * xi, &mut buf);
                    for (s, &v) in acc.iter_mut().zip(&buf) {
                        *s += h * wi * v;
                    }
                }
            }
            Ok((acc, true))
        }
    }
}

/// Face length by 8-point Gauss, used to scale tolerances.
fn face_length<T: Real>(mesh: &HighOrderMesh<T>, e: usize, face: usize) -> T {
    let (x, w) = gauss_legendre::<T>(8);
    x.iter()
        .zip(&w)
        .map(|(&t, &wt)| wt * mesh.face_geometry_unchecked(e, face, t).jacobian)
        .sum()
}

/// Assembles every ordinate of `quadrature` on `mesh` with a DG basis of order `order`.
pub fn assemble<T: Real>(
    mesh: &HighOrderMesh<T>,
    order: usize,
    quadrature: &AngularQuadrature<T>,
    xs: &CrossSections<T>,
    source: &dyn SourceTerm<T>,
    opts: &AssemblyOptions<T>,
) -> Result<TransportOperator<T>, AssemblyError> {
    if order == 0 {
        return Err(AssemblyError::InvalidOrder(order));
    }
    if order > 15 {
        return Err(AssemblyError::InvalidOptions(format!("DG order {order} exceeds 15")));
    }
    if !(opts.edge_threshold >= T::zero()) {
        return Err(AssemblyError::InvalidOptions("edge threshold must be non-negative".into()));
    }
    if let FaceQuadrature::Romberg { rel_tol, .. } = opts.face {
        if !(rel_tol > T::zero()) {
            return Err(AssemblyError::InvalidOptions("face tolerance must be positive".into()));
        }
    }
    let basis = ReferenceBasis::<T>::new(order, mesh.order() + opts.extra_volume_points);
    let volume = assemble_volume(mesh, &basis, xs)?;
    let ordinates = quadrature
        .ordinates
        .par_iter()
        .enumerate()
        .map(|(d, ord)| assemble_ordinate(mesh, &basis, &volume, d, ord, source, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TransportOperator {
        order,
        dofs: basis.len(),
        regions: mesh.elements().iter().map(|e| e.region).collect(),
        quadrature: quadrature.clone(),
        mass_t: volume.mass_t,
        mass_s: volume.mass_s,
        ordinates,
    })
}

fn assemble_ordinate<T: Real>(
    mesh: &HighOrderMesh<T>,
    basis: &ReferenceBasis<T>,
    volume: &VolumeData<T>,
    d: usize,
    ord: &Ordinate<T>,
    source: &dyn SourceTerm<T>,
    opts: &AssemblyOptions<T>,
) -> Result<OrdinateBlocks<T>, AssemblyError> {
    let nu = basis.len();
    let s = basis.order();
    let np = s + 1;
    let omega = ord.planar();
    let ne = mesh.num_elements();
    let line = Lagrange1d::<T>::gauss_lobatto(s);

    let mut streaming = Vec::with_capacity(ne);
    let mut q_volume = Vec::with_capacity(ne);
    for e in 0..ne {
        let mut g = volume.grad_x[e].clone();
        g.scale(omega[0]);
        g.add_scaled(&volume.grad_y[e], omega[1]);
        streaming.push(g);
        let region = mesh.region(e);
        let mut q = vec![T::zero(); nu];
        for (k, &(x, dv)) in volume.points[e].iter().enumerate() {
            let val = source.volume(x, region, d) * dv;
            for (qm, &um) in q.iter_mut().zip(basis.values_at(k)) {
                *qm += val * um;
            }
        }
        q_volume.push(q);
    }

    let mut outflow = vec![DenseMatrix::zeros(nu, nu); ne];
    let mut upwind: Vec<BTreeMap<usize, DenseMatrix<T>>> = vec![BTreeMap::new(); ne];
    let mut q_inflow = vec![vec![T::zero(); nu]; ne];
    let mut boundary = Vec::with_capacity(mesh.boundary_faces().len());
    let mut unconverged = 0usize;
    let mut ell = vec![T::zero(); np];
    let nb = np * np;

    for (fi, face) in mesh.interior_faces().iter().enumerate() {
        let (l, fl, r, fr) = (face.elem_left, face.local_face_left, face.elem_right, face.local_face_right);
        let hint = face_length(mesh, l, fl);
        // [w+ products | w- products | length], all in the left element's face-node order
        let (vals, ok) = face_integral(&opts.face, hint, 2 * nb + 1, |t, out| {
            let fp = mesh.face_geometry_unchecked(l, fl, t);
            out.iter_mut().for_each(|v| *v = T::zero());
            out[2 * nb] = fp.jacobian;
            if !(fp.jacobian > T::zero()) {
                return;
            }
            line.values_into(t, &mut ell);
            let a = dot(omega, fp.normal);
            let (wp, wm) = (a.max(T::zero()), (-a).max(T::zero()));
            for k in 0..np {
                for j in 0..np {
                    let p = ell[k] * ell[j] * fp.jacobian;
                    out[k * np + j] = wp * p;
                    out[nb + k * np + j] = wm * p;
                }
            }
        })?;
        if !ok {
            unconverged += 1;
            log::warn!("ordinate {d}: face integral on interior face {fi} (elements {l}, {r}) did not converge");
        }
        let length = vals[2 * nb];
        let nodes_l = reference::face_nodes(s, fl);
        let nodes_r = reference::face_nodes(s, fr);
        let map_r = |k: usize| if face.orientation < 0 { nodes_r[s - k] } else { nodes_r[k] };
        let threshold = opts.edge_threshold * length;
        let (mut max_p, mut max_m) = (T::zero(), T::zero());
        for k in 0..nb {
            max_p = max_p.max(vals[k].abs());
            max_m = max_m.max(vals[nb + k].abs());
        }
        for k in 0..np {
            for j in 0..np {
                let (p, m) = (vals[k * np + j], vals[nb + k * np + j]);
                outflow[l][(nodes_l[k], nodes_l[j])] += p;
                outflow[r][(map_r(k), map_r(j))] += m;
            }
        }
        if max_m > threshold {
            let block = upwind[l].entry(r).or_insert_with(|| DenseMatrix::zeros(nu, nu));
            for k in 0..np {
                for j in 0..np {
                    block[(nodes_l[k], map_r(j))] -= vals[nb + k * np + j];
                }
            }
        }
        if max_p > threshold {
            let block = upwind[r].entry(l).or_insert_with(|| DenseMatrix::zeros(nu, nu));
            for k in 0..np {
                for j in 0..np {
                    block[(map_r(k), nodes_l[j])] -= vals[k * np + j];
                }
            }
        }
    }

    for (bi, bf) in mesh.boundary_faces().iter().enumerate() {
        let (e, f) = (bf.elem, bf.face);
        let hint = face_length(mesh, e, f);
        // [w+ products | w- psi_inc moments | w- psi_inc | length]
        let (vals, ok) = face_integral(&opts.face, hint, nb + np + 2, |t, out| {
            let fp = mesh.face_geometry_unchecked(e, f, t);
            out.iter_mut().for_each(|v| *v = T::zero());
            out[nb + np + 1] = fp.jacobian;
            if !(fp.jacobian > T::zero()) {
                return;
            }
            line.values_into(t, &mut ell);
            let a = dot(omega, fp.normal);
            let (wp, wm) = (a.max(T::zero()), (-a).max(T::zero()));
            for k in 0..np {
                for j in 0..np {
                    out[k * np + j] = wp * ell[k] * ell[j] * fp.jacobian;
                }
            }
            if wm > T::zero() {
                let inc = wm * source.inflow(fp.point, bf.attr, d) * fp.jacobian;
                for k in 0..np {
                    out[nb + k] = inc * ell[k];
                }
                out[nb + np] = inc;
            }
        })?;
        if !ok {
            unconverged += 1;
            log::warn!("ordinate {d}: face integral on boundary face {bi} (element {e}) did not converge");
        }
        let nodes = reference::face_nodes(s, f);
        let mut weights = vec![T::zero(); nu];
        for k in 0..np {
            for j in 0..np {
                let p = vals[k * np + j];
                outflow[e][(nodes[k], nodes[j])] += p;
                weights[nodes[j]] += p;
            }
            q_inflow[e][nodes[k]] += vals[nb + k];
        }
        boundary.push(BoundaryFlux {
            elem: e,
            face: f,
            attr: bf.attr,
            weights,
            inflow: vals[nb + np],
            length: vals[nb + np + 1],
        });
    }

    Ok(OrdinateBlocks {
        ordinate: *ord,
        streaming,
        outflow,
        upwind: upwind
            .into_iter()
            .map(|m| m.into_iter().map(|(from, block)| Coupling { from, block }).collect())
            .collect(),
        q_volume,
        q_inflow,
        boundary,
        unconverged_faces: unconverged,
    })
}

impl<T: Real> TransportOperator<T> {
    /// DG order `s`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Unknowns per element, `(s + 1)^2`.
    pub fn dofs_per_element(&self) -> usize {
        self.dofs
    }

    pub fn num_elements(&self) -> usize {
        self.mass_t.len()
    }

    /// Unknowns per ordinate.
    pub fn num_dofs(&self) -> usize {
        self.dofs * self.num_elements()
    }

    pub fn num_ordinates(&self) -> usize {
        self.ordinates.len()
    }

    pub fn quadrature(&self) -> &AngularQuadrature<T> {
        &self.quadrature
    }

    pub fn region(&self, e: usize) -> i32 {
        self.regions[e]
    }

    pub fn mass_t(&self, e: usize) -> &DenseMatrix<T> {
        &self.mass_t[e]
    }

    pub fn mass_s(&self, e: usize) -> &DenseMatrix<T> {
        &self.mass_s[e]
    }

    pub fn ordinate(&self, d: usize) -> &OrdinateBlocks<T> {
        &self.ordinates[d]
    }

    pub fn ordinates(&self) -> &[OrdinateBlocks<T>] {
        &self.ordinates
    }

    /// Streaming-plus-collision matrix `G_e + F_e + M_t,e`.
    pub fn local_matrix(&self, d: usize, e: usize) -> DenseMatrix<T> {
        let blocks = &self.ordinates[d];
        let mut a = blocks.streaming[e].clone();
        a.add_scaled(&blocks.outflow[e], T::one());
        a.add_scaled(&self.mass_t[e], T::one());
        a
    }

    /// `out = (G + F + M_t) psi` for ordinate `d`, with `psi` element-major.
    pub fn apply(&self, d: usize, psi: &[T], out: &mut [T]) {
        let nu = self.dofs;
        let blocks = &self.ordinates[d];
        for e in 0..self.num_elements() {
            let y = &mut out[e * nu..(e + 1) * nu];
            y.iter_mut().for_each(|v| *v = T::zero());
            let x = &psi[e * nu..(e + 1) * nu];
            blocks.streaming[e].mul_vec_acc(x, T::one(), y);
            blocks.outflow[e].mul_vec_acc(x, T::one(), y);
            self.mass_t[e].mul_vec_acc(x, T::one(), y);
            for c in &blocks.upwind[e] {
                c.block.mul_vec_acc(&psi[c.from * nu..(c.from + 1) * nu], T::one(), y);
            }
        }
    }

    /// Coupling pattern of ordinate `d` as lines `u v max|F_{v,u}|`, upwind element first.
    pub fn edge_list(&self, d: usize) -> String {
        let mut out = String::new();
        for (v, couplings) in self.ordinates[d].upwind.iter().enumerate() {
            for c in couplings {
                out.push_str(&format!("{} {} {:.6e}\n", c.from, v, c.block.max_abs()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::reference::NUM_FACES;
    use crate::mesh::{generate_distorted, generate_uniform, Rect};

    fn single_direction(mu: f64, eta: f64) -> AngularQuadrature<f64> {
        let xi = (1.0 - mu * mu - eta * eta).max(0.0).sqrt();
        AngularQuadrature {
            ordinates: vec![Ordinate {
                weight: 4.0 * std::f64::consts::PI,
                direction: [mu, eta, xi],
            }],
        }
    }

    fn zero_source() -> ConstantSource<f64> {
        ConstantSource { volume: 0.0, inflow: 0.0 }
    }

    fn close(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>, tol: f64) -> bool {
        let mut d = a.clone();
        d.add_scaled(b, -1.0);
        d.max_abs() < tol
    }

    #[test]
    fn bilinear_mass_matrix_on_unit_square() {
        let m = generate_uniform::<f64>(1, 1, 1, Rect::UNIT).unwrap();
        let op = assemble(
            &m,
            1,
            &single_direction(1.0, 0.0),
            &CrossSections::uniform(1.0, 0.0),
            &zero_source(),
            &AssemblyOptions::default(),
        )
        .unwrap();
        let expected = DenseMatrix::from_rows(&[
            vec![4.0, 2.0, 2.0, 1.0],
            vec![2.0, 4.0, 1.0, 2.0],
            vec![2.0, 1.0, 4.0, 2.0],
            vec![1.0, 2.0, 2.0, 4.0],
        ]);
        let mut expected = expected;
        expected.scale(1.0 / 36.0);
        assert!(close(op.mass_t(0), &expected, 1e-15));
        assert!(op.mass_s(0).is_zero());
    }

    #[test]
    fn mass_scales_with_area() {
        let run = |h: f64| {
            let m = generate_uniform::<f64>(1, 1, 2, Rect::new(0.0, h, 0.0, h)).unwrap();
            assemble(
                &m,
                2,
                &single_direction(1.0, 0.0),
                &CrossSections::uniform(1.3, 0.4),
                &zero_source(),
                &AssemblyOptions::default(),
            )
            .unwrap()
        };
        let (a, b) = (run(0.5), run(1.0));
        let mut scaled = a.mass_t(0).clone();
        scaled.scale(4.0);
        assert!(close(&scaled, b.mass_t(0), 1e-14));
        for op in [&a, &b] {
            let mt = op.mass_t(0);
            for i in 0..mt.rows() {
                for j in 0..mt.cols() {
                    assert!((mt[(i, j)] - mt[(j, i)]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn two_squares_couple_only_downwind() {
        let m = generate_uniform::<f64>(2, 1, 1, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        let op = assemble(
            &m,
            1,
            &single_direction(1.0, 0.0),
            &CrossSections::uniform(1.0, 0.0),
            &zero_source(),
            &AssemblyOptions::default(),
        )
        .unwrap();
        let b = op.ordinate(0);
        assert!(b.upwind[0].is_empty());
        assert_eq!(b.upwind[1].len(), 1);
        let c = &b.upwind[1][0];
        assert_eq!(c.from, 0);
        // right element's left-edge nodes (0, 2) see the left element's right-edge nodes (1, 3)
        let mut expected = DenseMatrix::zeros(4, 4);
        for (i, &a) in [0usize, 2].iter().enumerate() {
            for (j, &bb) in [1usize, 3].iter().enumerate() {
                expected[(a, bb)] = if i == j { -2.0 / 6.0 } else { -1.0 / 6.0 };
            }
        }
        assert!(close(&c.block, &expected, 1e-14));
        assert_eq!(op.edge_list(0).trim(), format!("0 1 {:.6e}", 1.0 / 3.0));
    }

    #[test]
    fn grazing_face_has_no_coupling() {
        let m = generate_uniform::<f64>(2, 1, 2, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        let op = assemble(
            &m,
            2,
            &single_direction(0.0, 1.0),
            &CrossSections::uniform(1.0, 0.0),
            &zero_source(),
            &AssemblyOptions::default(),
        )
        .unwrap();
        assert_eq!(op.ordinate(0).num_edges(), 0);
    }

    #[test]
    fn unit_source_moments() {
        let m = generate_uniform::<f64>(1, 1, 1, Rect::UNIT).unwrap();
        let op = assemble(
            &m,
            1,
            &single_direction(1.0, 0.0),
            &CrossSections::uniform(1.0, 0.0),
            &ConstantSource { volume: 1.0, inflow: 1.0 },
            &AssemblyOptions::default(),
        )
        .unwrap();
        let b = op.ordinate(0);
        for &v in &b.q_volume[0] {
            assert!((v - 0.25).abs() < 1e-15);
        }
        // inflow only through the left edge (nodes 0 and 2)
        let expected = [0.5, 0.0, 0.5, 0.0];
        for (v, e) in b.q_inflow[0].iter().zip(expected) {
            assert!((v - e).abs() < 1e-13, "{:?}", b.q_inflow[0]);
        }
        assert!(op.ordinate(0).boundary.iter().map(|f| f.inflow).sum::<f64>() - 1.0 < 1e-13);
    }

    #[test]
    fn zero_source_gives_zero_moments() {
        let m = generate_distorted::<f64>(2, 2, 2, 0.05, Rect::UNIT).unwrap();
        let q = AngularQuadrature::level_symmetric_2d(4).unwrap();
        let op = assemble(&m, 2, &q, &CrossSections::uniform(1.0, 0.5), &zero_source(), &AssemblyOptions::default())
            .unwrap();
        for b in op.ordinates() {
            assert!(b.q_volume.iter().chain(&b.q_inflow).flatten().all(|&v| v == 0.0));
        }
    }

    /// `int_{de} (Omega . n) u_m u_n` by composite Gauss directly from the mesh geometry.
    fn boundary_matrix(mesh: &HighOrderMesh<f64>, e: usize, s: usize, omega: Point2<f64>) -> DenseMatrix<f64> {
        let tl = crate::discretization::TensorLagrange::<f64>::new(s);
        let nu = tl.len();
        let (x, w) = gauss_legendre::<f64>(10);
        let panels = 16;
        let mut out = DenseMatrix::zeros(nu, nu);
        for f in 0..NUM_FACES {
            for p in 0..panels {
                for (&xi, &wi) in x.iter().zip(&w) {
                    let t = (p as f64 + xi) / panels as f64;
                    let fp = mesh.face_geometry(e, f, t).unwrap();
                    let u = tl.values(reference::face_point(f, t));
                    let a = (omega[0] * fp.normal[0] + omega[1] * fp.normal[1]) * fp.jacobian * wi / panels as f64;
                    for m in 0..nu {
                        for n in 0..nu {
                            out[(m, n)] += a * u[m] * u[n];
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn streaming_block_obeys_divergence_theorem() {
        let m = generate_distorted::<f64>(3, 3, 3, 0.06, Rect::UNIT).unwrap();
        let q = AngularQuadrature::level_symmetric_2d(4).unwrap();
        let op = assemble(&m, 3, &q, &CrossSections::uniform(1.0, 0.0), &zero_source(), &AssemblyOptions::default())
            .unwrap();
        for d in [0, 5] {
            let omega = q.ordinates[d].planar();
            for e in [0, 4, 7] {
                let g = &op.ordinate(d).streaming[e];
                let mut sum = g.clone();
                sum.add_scaled(&g.transpose(), 1.0);
                let bnd = boundary_matrix(&m, e, 3, omega);
                sum.add_scaled(&bnd, 1.0);
                assert!(sum.max_abs() < 1e-10, "d {d} e {e}: {}", sum.max_abs());
            }
        }
    }

    #[test]
    fn romberg_matches_gauss_on_straight_meshes() {
        let m = generate_uniform::<f64>(3, 2, 2, Rect::new(0.0, 1.5, 0.0, 1.0)).unwrap();
        let q = AngularQuadrature::level_symmetric_2d(4).unwrap();
        let xs = CrossSections::uniform(1.0, 0.3);
        let src = ConstantSource { volume: 1.0, inflow: 0.7 };
        let a = assemble(&m, 3, &q, &xs, &src, &AssemblyOptions::default()).unwrap();
        let opts = AssemblyOptions {
            face: FaceQuadrature::Gauss { points: 6, panels: 1 },
            ..AssemblyOptions::default()
        };
        let b = assemble(&m, 3, &q, &xs, &src, &opts).unwrap();
        for d in 0..q.len() {
            let (x, y) = (a.ordinate(d), b.ordinate(d));
            for e in 0..m.num_elements() {
                assert!(close(&x.outflow[e], &y.outflow[e], 1e-12));
                assert_eq!(x.upwind[e].len(), y.upwind[e].len());
                for (c1, c2) in x.upwind[e].iter().zip(&y.upwind[e]) {
                    assert_eq!(c1.from, c2.from);
                    assert!(close(&c1.block, &c2.block, 1e-12));
                }
                for (u, v) in x.q_inflow[e].iter().zip(&y.q_inflow[e]) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn re_entrant_faces_couple_both_ways() {
        let m = generate_distorted::<f64>(8, 8, 3, 0.15 / 8.0, Rect::UNIT).unwrap();
        let q = AngularQuadrature::level_symmetric_2d(4).unwrap();
        let op = assemble(&m, 1, &q, &CrossSections::uniform(1.0, 0.0), &zero_source(), &AssemblyOptions::default())
            .unwrap();
        let mutual = op.ordinates().iter().any(|b| {
            b.upwind.iter().enumerate().any(|(v, cs)| {
                cs.iter().any(|c| b.upwind[c.from].iter().any(|back| back.from == v))
            })
        });
        assert!(mutual);
        for b in op.ordinates() {
            for cs in &b.upwind {
                for c in cs {
                    assert!(c.block.as_slice().iter().all(|&v| v <= 0.0));
                }
            }
            assert_eq!(b.unconverged_faces, 0);
        }
    }

    #[test]
    fn transport_rows_sum_to_boundary_outflow() {
        use rand::{Rng, SeedableRng};
        let m = generate_distorted::<f64>(4, 4, 3, 0.05, Rect::UNIT).unwrap();
        let q = AngularQuadrature::level_symmetric_2d(4).unwrap();
        let xs = CrossSections::uniform(0.0, 0.0);
        let op = assemble(&m, 2, &q, &xs, &zero_source(), &AssemblyOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let psi: Vec<f64> = (0..op.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nu = op.dofs_per_element();
        for d in 0..q.len() {
            let mut out = vec![0.0; psi.len()];
            op.apply(d, &psi, &mut out);
            let total: f64 = out.iter().sum();
            let leak: f64 = op
                .ordinate(d)
                .boundary
                .iter()
                .map(|b| b.weights.iter().zip(&psi[b.elem * nu..]).map(|(w, p)| w * p).sum::<f64>())
                .sum();
            assert!((total - leak).abs() < 1e-11, "{total} {leak}");
        }
    }

    #[test]
    fn region_table_errors() {
        let m = generate_uniform::<f64>(1, 1, 1, Rect::UNIT).unwrap();
        let q = single_direction(1.0, 0.0);
        let missing = CrossSections::regions([(7, Material::new(1.0, 0.0))]);
        assert_eq!(
            assemble(&m, 1, &q, &missing, &zero_source(), &AssemblyOptions::default()).unwrap_err(),
            AssemblyError::MissingRegion(1)
        );
        let bad = CrossSections::uniform(0.5, 1.0);
        assert!(matches!(
            assemble(&m, 1, &q, &bad, &zero_source(), &AssemblyOptions::default()),
            Err(AssemblyError::InvalidCrossSection { elem: 0, .. })
        ));
        assert!(matches!(
            assemble(&m, 0, &q, &CrossSections::uniform(1.0, 0.0), &zero_source(), &AssemblyOptions::default()),
            Err(AssemblyError::InvalidOrder(0))
        ));
    }
}
