//! Curved quadrilateral meshes of arbitrary geometric order.
//!
//! Each element is the image of the unit square under `x(xi) = sum_m x_m v_m(xi)`, with
//! `v_m` the order-`r` tensor Lagrange basis on Gauss–Lobatto nodes. Faces are found by
//! matching corner control points; conforming neighbours must share the full list of
//! face control points.

mod generate;
mod io;
mod straighten;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::reference::{self, NUM_FACES};
use crate::discretization::TensorLagrange;
use crate::scalar::{dist, norm, Point2, Real};

pub use generate::{generate_annulus_in_square, generate_distorted, generate_uniform, generate_vortex, AnnulusParams, Rect};
pub use io::MeshFile;
pub use straighten::{straighten, StraightenReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("element {elem} references {got} control points, expected {expected}")]
    WrongNodeCount { elem: usize, expected: usize, got: usize },
    #[error("element {elem} node {local} references control point {index} out of range ({len} points)")]
    NodeOutOfRange { elem: usize, local: usize, index: usize, len: usize },
    #[error("element index {0} out of range")]
    ElementOutOfRange(usize),
    #[error("element {elem} has non-positive Jacobian determinant {det:e} at xi = ({xi0}, {xi1})")]
    InvalidJacobian { elem: usize, xi0: f64, xi1: f64, det: f64 },
    #[error("face {face} of element {elem} is shared by more than two elements")]
    NonManifoldFace { elem: usize, face: usize },
    #[error("face {face} of element {elem} does not conform to its neighbour {neighbor}")]
    NonConformingFace { elem: usize, face: usize, neighbor: usize },
    #[error("traces of face {face} of element {elem} disagree by {distance:e}")]
    FaceMismatch { elem: usize, face: usize, distance: f64 },
    #[error("boundary face ({elem}, {face}) is listed but is not on the boundary")]
    NotABoundaryFace { elem: usize, face: usize },
    #[error("boundary face ({elem}, {face}) is missing from the boundary list")]
    MissingBoundaryFace { elem: usize, face: usize },
    #[error("boundary face ({elem}, {face}) listed more than once")]
    DuplicateBoundaryFace { elem: usize, face: usize },
    #[error("degenerate face {face} of element {elem}: tangent length {length:e}")]
    DegenerateFace { elem: usize, face: usize, length: f64 },
    #[error("invalid mesh parameters: {0}")]
    InvalidParameters(String),
    #[error("mesh file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRecord {
    /// `(r+1)^2` control point indices in tensor order (first reference coordinate fastest).
    pub nodes: Vec<usize>,
    pub region: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFace {
    pub elem: usize,
    pub face: usize,
    pub attr: i32,
}

/// An interior face shared by `elem_left` and `elem_right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceRecord {
    pub elem_left: usize,
    pub local_face_left: usize,
    pub elem_right: usize,
    pub local_face_right: usize,
    /// `-1` when the right element traverses the face parameter in reverse.
    pub orientation: i8,
}

impl FaceRecord {
    /// Right element's face parameter for left parameter `t`.
    pub fn right_parameter<T: Real>(&self, t: T) -> T {
        if self.orientation < 0 {
            T::one() - t
        } else {
            t
        }
    }
}

/// What lies across a local face of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceLink {
    /// Index into [`HighOrderMesh::interior_faces`].
    Interior(usize),
    /// Index into [`HighOrderMesh::boundary_faces`].
    Boundary(usize),
}

/// Jacobian of the element map at a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian<T> {
    /// `matrix[i][j] = d x_i / d xi_j`
    pub matrix: [[T; 2]; 2],
    pub det: T,
}

impl<T: Real> Jacobian<T> {
    /// `J^{-T} g` for a reference gradient `g`.
    pub fn inverse_transpose_apply(&self, g: Point2<T>) -> Point2<T> {
        let [[a, b], [c, d]] = self.matrix;
        // J^{-1} = [[d, -b], [-c, a]] / det, so J^{-T} = [[d, -c], [-b, a]] / det
        [(d * g[0] - c * g[1]) / self.det, (-b * g[0] + a * g[1]) / self.det]
    }

    pub fn apply(&self, v: Point2<T>) -> Point2<T> {
        let [[a, b], [c, d]] = self.matrix;
        [a * v[0] + b * v[1], c * v[0] + d * v[1]]
    }
}

/// Geometry of a face at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePoint<T> {
    pub point: Point2<T>,
    /// Unit normal pointing out of the element the face was evaluated from.
    pub normal: Point2<T>,
    /// Surface Jacobian `|d x / d t|`.
    pub jacobian: T,
}

/// A high-order curved quadrilateral mesh. Immutable once built.
#[derive(Debug, Clone)]
pub struct HighOrderMesh<T> {
    order: usize,
    control_points: Vec<Point2<T>>,
    elements: Vec<ElementRecord>,
    boundary_faces: Vec<BoundaryFace>,
    interior_faces: Vec<FaceRecord>,
    links: Vec<[FaceLink; NUM_FACES]>,
    geometry: TensorLagrange<T>,
}

const MAX_NODES: usize = 256;

impl<T: Real> HighOrderMesh<T> {
    /// Builds a mesh from an explicit boundary list and validates every invariant.
    pub fn new(
        order: usize,
        control_points: Vec<Point2<T>>,
        elements: Vec<ElementRecord>,
        boundary_faces: Vec<BoundaryFace>,
    ) -> Result<Self, MeshError> {
        let mut mesh = Self::topology(order, control_points, elements)?;
        mesh.attach_boundary(boundary_faces)?;
        mesh.check_face_agreement()?;
        mesh.check_validity()?;
        Ok(mesh)
    }

    /// Builds a mesh whose boundary faces are inferred and labelled by `attr(elem, face, midpoint)`.
    pub fn with_boundary_attributes(
        order: usize,
        control_points: Vec<Point2<T>>,
        elements: Vec<ElementRecord>,
        attr: impl Fn(usize, usize, Point2<T>) -> i32,
    ) -> Result<Self, MeshError> {
        let mut mesh = Self::topology(order, control_points, elements)?;
        mesh.infer_boundary(attr);
        mesh.check_face_agreement()?;
        mesh.check_validity()?;
        Ok(mesh)
    }

    /// Topology only: index checks and face matching, boundary left empty.
    fn topology(
        order: usize,
        control_points: Vec<Point2<T>>,
        elements: Vec<ElementRecord>,
    ) -> Result<Self, MeshError> {
        if order == 0 || (order + 1) * (order + 1) > MAX_NODES {
            return Err(MeshError::InvalidOrder(order));
        }
        let nv = (order + 1) * (order + 1);
        for (e, el) in elements.iter().enumerate() {
            if el.nodes.len() != nv {
                return Err(MeshError::WrongNodeCount {
                    elem: e,
                    expected: nv,
                    got: el.nodes.len(),
                });
            }
            for (local, &index) in el.nodes.iter().enumerate() {
                if index >= control_points.len() {
                    return Err(MeshError::NodeOutOfRange {
                        elem: e,
                        local,
                        index,
                        len: control_points.len(),
                    });
                }
            }
        }

        // match faces by their (sorted) corner control points
        // Some(first side) while open, None once both sides are matched
        let mut open: HashMap<(usize, usize), Option<(usize, usize)>> = HashMap::new();
        let mut interior_faces = Vec::new();
        let placeholder = FaceLink::Boundary(usize::MAX);
        let mut links = vec![[placeholder; NUM_FACES]; elements.len()];
        for (e, el) in elements.iter().enumerate() {
            for f in 0..NUM_FACES {
                let (a, b) = reference::face_corners(order, f);
                let (ga, gb) = (el.nodes[a], el.nodes[b]);
                let key = (ga.min(gb), ga.max(gb));
                match open.get(&key).copied() {
                    None => {
                        open.insert(key, Some((e, f)));
                    }
                    Some(None) => return Err(MeshError::NonManifoldFace { elem: e, face: f }),
                    Some(Some((e0, f0))) => {
                        open.insert(key, None);
                        let left: Vec<usize> = reference::face_nodes(order, f0)
                            .into_iter()
                            .map(|m| elements[e0].nodes[m])
                            .collect();
                        let right: Vec<usize> = reference::face_nodes(order, f)
                            .into_iter()
                            .map(|m| el.nodes[m])
                            .collect();
                        let reversed: Vec<usize> = right.iter().rev().copied().collect();
                        let orientation = if left == reversed {
                            -1
                        } else if left == right {
                            1
                        } else {
                            return Err(MeshError::NonConformingFace {
                                elem: e0,
                                face: f0,
                                neighbor: e,
                            });
                        };
                        let idx = interior_faces.len();
                        interior_faces.push(FaceRecord {
                            elem_left: e0,
                            local_face_left: f0,
                            elem_right: e,
                            local_face_right: f,
                            orientation,
                        });
                        links[e0][f0] = FaceLink::Interior(idx);
                        links[e][f] = FaceLink::Interior(idx);
                    }
                }
            }
        }
        Ok(Self {
            order,
            control_points,
            elements,
            boundary_faces: Vec::new(),
            interior_faces,
            links,
            geometry: TensorLagrange::new(order),
        })
    }

    fn attach_boundary(&mut self, boundary: Vec<BoundaryFace>) -> Result<(), MeshError> {
        for (i, b) in boundary.iter().enumerate() {
            if b.elem >= self.elements.len() || b.face >= NUM_FACES {
                return Err(MeshError::NotABoundaryFace {
                    elem: b.elem,
                    face: b.face,
                });
            }
            match self.links[b.elem][b.face] {
                FaceLink::Interior(_) => {
                    return Err(MeshError::NotABoundaryFace {
                        elem: b.elem,
                        face: b.face,
                    })
                }
                FaceLink::Boundary(j) if j != usize::MAX => {
                    return Err(MeshError::DuplicateBoundaryFace {
                        elem: b.elem,
                        face: b.face,
                    })
                }
                FaceLink::Boundary(_) => self.links[b.elem][b.face] = FaceLink::Boundary(i),
            }
        }
        for (e, l) in self.links.iter().enumerate() {
            for (f, link) in l.iter().enumerate() {
                if *link == FaceLink::Boundary(usize::MAX) {
                    return Err(MeshError::MissingBoundaryFace { elem: e, face: f });
                }
            }
        }
        self.boundary_faces = boundary;
        Ok(())
    }

    fn infer_boundary(&mut self, attr: impl Fn(usize, usize, Point2<T>) -> i32) {
        let mut boundary = Vec::new();
        for e in 0..self.elements.len() {
            for f in 0..NUM_FACES {
                if self.links[e][f] == FaceLink::Boundary(usize::MAX) {
                    let mid = self.map_unchecked(e, reference::face_point(f, T::of(0.5)));
                    self.links[e][f] = FaceLink::Boundary(boundary.len());
                    boundary.push(BoundaryFace {
                        elem: e,
                        face: f,
                        attr: attr(e, f, mid),
                    });
                }
            }
        }
        self.boundary_faces = boundary;
    }

    /// Left and right traces agree at five parameter values, relative to element size.
    fn check_face_agreement(&self) -> Result<(), MeshError> {
        for rec in &self.interior_faces {
            let scale = self.element_diameter(rec.elem_left);
            for k in 0..5 {
                let t = T::of(k as f64 / 4.0);
                let pl = self.map_unchecked(rec.elem_left, reference::face_point(rec.local_face_left, t));
                let pr = self.map_unchecked(
                    rec.elem_right,
                    reference::face_point(rec.local_face_right, rec.right_parameter(t)),
                );
                let d = dist(pl, pr);
                if d > T::of(1e-12) * T::precision_scale() * scale {
                    return Err(MeshError::FaceMismatch {
                        elem: rec.elem_left,
                        face: rec.local_face_left,
                        distance: d.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(())
    }

    /// `det J > 0` on an `(r+2)^2` lattice in every element.
    pub fn check_validity(&self) -> Result<(), MeshError> {
        match self.invalid_elements().first() {
            None => Ok(()),
            Some(&(elem, xi, det)) => Err(MeshError::InvalidJacobian {
                elem,
                xi0: xi[0].to_f64_lossy(),
                xi1: xi[1].to_f64_lossy(),
                det: det.to_f64_lossy(),
            }),
        }
    }

    /// Elements with `det J <= 0` at some lattice point, with the first offending sample.
    pub fn invalid_elements(&self) -> Vec<(usize, Point2<T>, T)> {
        let samples = self.order + 2;
        let mut bad = Vec::new();
        for e in 0..self.elements.len() {
            'lattice: for j in 0..samples {
                for i in 0..samples {
                    let xi = [
                        T::of_usize(i) / T::of_usize(samples - 1),
                        T::of_usize(j) / T::of_usize(samples - 1),
                    ];
                    let jac = self.jacobian_unchecked(e, xi);
                    if !(jac.det > T::zero()) {
                        bad.push((e, xi, jac.det));
                        break 'lattice;
                    }
                }
            }
        }
        bad
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn control_points(&self) -> &[Point2<T>] {
        &self.control_points
    }

    pub fn elements(&self) -> &[ElementRecord] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &ElementRecord {
        &self.elements[e]
    }

    pub fn region(&self, e: usize) -> i32 {
        self.elements[e].region
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn interior_faces(&self) -> &[FaceRecord] {
        &self.interior_faces
    }

    /// Neighbour links of element `e`, one per local face.
    pub fn face_links(&self, e: usize) -> &[FaceLink; NUM_FACES] {
        &self.links[e]
    }

    pub fn geometry_basis(&self) -> &TensorLagrange<T> {
        &self.geometry
    }

    fn check_element(&self, e: usize) -> Result<(), MeshError> {
        if e < self.elements.len() {
            Ok(())
        } else {
            Err(MeshError::ElementOutOfRange(e))
        }
    }

    /// Physical coordinates of reference point `xi` in element `e`.
    pub fn map_point(&self, e: usize, xi: Point2<T>) -> Result<Point2<T>, MeshError> {
        self.check_element(e)?;
        Ok(self.map_unchecked(e, xi))
    }

    pub(crate) fn map_unchecked(&self, e: usize, xi: Point2<T>) -> Point2<T> {
        let nv = self.geometry.len();
        let mut v = [T::zero(); MAX_NODES];
        self.geometry.values_into(xi, &mut v[..nv]);
        let mut p = [T::zero(); 2];
        for (m, &g) in self.elements[e].nodes.iter().enumerate() {
            let x = self.control_points[g];
            p[0] += x[0] * v[m];
            p[1] += x[1] * v[m];
        }
        p
    }

    /// Jacobian matrix and determinant of the element map at `xi`.
    pub fn jacobian(&self, e: usize, xi: Point2<T>) -> Result<Jacobian<T>, MeshError> {
        self.check_element(e)?;
        Ok(self.jacobian_unchecked(e, xi))
    }

    pub(crate) fn jacobian_unchecked(&self, e: usize, xi: Point2<T>) -> Jacobian<T> {
        let nv = self.geometry.len();
        let mut g = [[T::zero(); 2]; MAX_NODES];
        self.geometry.gradients_into(xi, &mut g[..nv]);
        self.jacobian_from_gradients(e, &g[..nv])
    }

    /// Jacobian from tabulated reference gradients of the geometric basis.
    pub fn jacobian_from_gradients(&self, e: usize, grads: &[Point2<T>]) -> Jacobian<T> {
        let mut m = [[T::zero(); 2]; 2];
        for (k, &gi) in self.elements[e].nodes.iter().enumerate() {
            let x = self.control_points[gi];
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += x[i] * grads[k][j];
                }
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        Jacobian { matrix: m, det }
    }

    /// Physical point from tabulated geometric basis values.
    pub fn map_from_values(&self, e: usize, values: &[T]) -> Point2<T> {
        let mut p = [T::zero(); 2];
        for (k, &gi) in self.elements[e].nodes.iter().enumerate() {
            let x = self.control_points[gi];
            p[0] += x[0] * values[k];
            p[1] += x[1] * values[k];
        }
        p
    }

    /// Largest distance between two corners of element `e`.
    pub fn element_diameter(&self, e: usize) -> T {
        let corners = reference::corner_nodes(self.order);
        let pts: Vec<Point2<T>> = corners
            .iter()
            .map(|&c| self.control_points[self.elements[e].nodes[c]])
            .collect();
        let mut d = T::zero();
        for a in 0..4 {
            for b in a + 1..4 {
                d = d.max(dist(pts[a], pts[b]));
            }
        }
        d
    }

    /// Point, outward unit normal and surface Jacobian of local face `face` of `e` at `t`.
    pub fn face_geometry(&self, e: usize, face: usize, t: T) -> Result<FacePoint<T>, MeshError> {
        self.check_element(e)?;
        if face >= NUM_FACES {
            return Err(MeshError::InvalidParameters(format!("local face {face}")));
        }
        let fp = self.face_geometry_unchecked(e, face, t);
        if !(fp.jacobian >= T::of(1e-14) * self.element_diameter(e)) {
            return Err(MeshError::DegenerateFace {
                elem: e,
                face,
                length: fp.jacobian.to_f64_lossy(),
            });
        }
        Ok(fp)
    }

    pub(crate) fn face_geometry_unchecked(&self, e: usize, face: usize, t: T) -> FacePoint<T> {
        let xi = reference::face_point(face, t);
        let nv = self.geometry.len();
        let mut v = [T::zero(); MAX_NODES];
        let mut g = [[T::zero(); 2]; MAX_NODES];
        self.geometry.values_into(xi, &mut v[..nv]);
        self.geometry.gradients_into(xi, &mut g[..nv]);
        let point = self.map_from_values(e, &v[..nv]);
        let jac = self.jacobian_from_gradients(e, &g[..nv]);
        let tangent = jac.apply(reference::face_direction(face));
        let length = norm(tangent);
        let mut normal = [tangent[1] / length, -tangent[0] / length];
        // flip if the normal points toward the element interior
        let inward = jac.apply(reference::face_inward(face));
        if normal[0] * inward[0] + normal[1] * inward[1] > T::zero() {
            normal = [-normal[0], -normal[1]];
        }
        FacePoint {
            point,
            normal,
            jacobian: length,
        }
    }

    /// Geometry of an interior face, evaluated from its left element.
    pub fn interior_face_geometry(&self, face: &FaceRecord, t: T) -> Result<FacePoint<T>, MeshError> {
        self.face_geometry(face.elem_left, face.local_face_left, t)
    }

    /// Total area, by Gauss quadrature of `det J`.
    pub fn area(&self) -> T {
        let q = crate::discretization::VolumeQuadrature::<T>::gauss(self.order + 2);
        (0..self.num_elements())
            .map(|e| {
                q.points
                    .iter()
                    .zip(&q.weights)
                    .map(|(&p, &w)| w * self.jacobian_unchecked(e, p).det)
                    .sum::<T>()
            })
            .sum()
    }
}
