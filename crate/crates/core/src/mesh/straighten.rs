//! Projection of a curved mesh onto a refined bilinear mesh.

use std::collections::HashMap;

use crate::discretization::reference::{self, NUM_FACES};
use crate::mesh::{BoundaryFace, ElementRecord, FaceLink, HighOrderMesh, MeshError};
use crate::scalar::{Point2, Real};

/// Outcome of [`straighten`]: the linear mesh (valid or not) and its invalid sub-elements.
#[derive(Debug, Clone)]
pub struct StraightenReport<T> {
    pub mesh: HighOrderMesh<T>,
    /// `(sub-element, smallest corner det J)` for every sub-element with `det J <= 0` at a corner.
    pub invalid: Vec<(usize, T)>,
    /// Parent element of each sub-element.
    pub parent: Vec<usize>,
}

impl<T: Real> StraightenReport<T> {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum LatticeKey {
    Vertex(usize),
    Edge(usize, usize, usize),
    Interior(usize, usize, usize),
}

/// Splits every element into `n_ref x n_ref` bilinear elements whose vertices are images
/// of the uniform reference lattice. Shared lattice points are merged topologically.
///
/// Invalid output elements are reported, not rejected.
pub fn straighten<T: Real>(mesh: &HighOrderMesh<T>, n_ref: usize) -> Result<StraightenReport<T>, MeshError> {
    if n_ref == 0 {
        return Err(MeshError::InvalidParameters("refinement level must be at least 1".into()));
    }
    let order = mesh.order();
    let corners = reference::corner_nodes(order);
    let mut index: HashMap<LatticeKey, usize> = HashMap::new();
    let mut points: Vec<Point2<T>> = Vec::new();
    let mut elements = Vec::with_capacity(mesh.num_elements() * n_ref * n_ref);
    let mut parent = Vec::with_capacity(elements.capacity());
    let mut boundary = Vec::new();

    for (e, el) in mesh.elements().iter().enumerate() {
        let corner_ids: Vec<usize> = corners.iter().map(|&c| el.nodes[c]).collect();
        let key_of = |i: usize, j: usize| -> LatticeKey {
            let c = |k: usize| corner_ids[k];
            match (i, j) {
                (0, 0) => return LatticeKey::Vertex(c(0)),
                (i, 0) if i == n_ref => return LatticeKey::Vertex(c(1)),
                (i, j) if i == n_ref && j == n_ref => return LatticeKey::Vertex(c(2)),
                (0, j) if j == n_ref => return LatticeKey::Vertex(c(3)),
                _ => {}
            }
            // (face, position along the face parameter)
            let on_face = if j == 0 {
                Some((0, i))
            } else if i == n_ref {
                Some((1, j))
            } else if j == n_ref {
                Some((2, n_ref - i))
            } else if i == 0 {
                Some((3, n_ref - j))
            } else {
                None
            };
            match on_face {
                None => LatticeKey::Interior(e, i, j),
                Some((f, k)) => {
                    let (a, b) = (c(f), c((f + 1) % NUM_FACES));
                    if a < b {
                        LatticeKey::Edge(a, b, k)
                    } else {
                        LatticeKey::Edge(b, a, n_ref - k)
                    }
                }
            }
        };
        let mut local = vec![0usize; (n_ref + 1) * (n_ref + 1)];
        for j in 0..=n_ref {
            for i in 0..=n_ref {
                let key = key_of(i, j);
                let id = *index.entry(key).or_insert_with(|| {
                    let xi = [T::of_usize(i) / T::of_usize(n_ref), T::of_usize(j) / T::of_usize(n_ref)];
                    points.push(mesh.map_unchecked(e, xi));
                    points.len() - 1
                });
                local[i + (n_ref + 1) * j] = id;
            }
        }
        for sj in 0..n_ref {
            for si in 0..n_ref {
                let at = |i: usize, j: usize| local[i + (n_ref + 1) * j];
                let sub = elements.len();
                elements.push(ElementRecord {
                    nodes: vec![at(si, sj), at(si + 1, sj), at(si, sj + 1), at(si + 1, sj + 1)],
                    region: el.region,
                });
                parent.push(e);
                // inherit boundary attributes from the parent face
                for (f, link) in mesh.face_links(e).iter().enumerate() {
                    if let FaceLink::Boundary(b) = *link {
                        let touches = match f {
                            0 => sj == 0,
                            1 => si == n_ref - 1,
                            2 => sj == n_ref - 1,
                            _ => si == 0,
                        };
                        if touches {
                            boundary.push(BoundaryFace {
                                elem: sub,
                                face: f,
                                attr: mesh.boundary_faces()[b].attr,
                            });
                        }
                    }
                }
            }
        }
    }

    let mut linear = HighOrderMesh::topology(1, points, elements)?;
    linear.attach_boundary(boundary)?;
    let mut invalid = Vec::new();
    for e in 0..linear.num_elements() {
        let min_det = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
            .iter()
            .map(|xi| linear.jacobian_unchecked(e, [T::of(xi[0]), T::of(xi[1])]).det)
            .fold(T::infinity(), T::min);
        if !(min_det > T::zero()) {
            invalid.push((e, min_det));
        }
    }
    Ok(StraightenReport {
        mesh: linear,
        invalid,
        parent,
    })
}
