//! JSON mesh files.
//!
//! ```json
//! { "order": 3, "dim": 2, "control_points": [[x, y], ...],
//!   "elements": [{"nodes": [...], "region": 1}, ...],
//!   "boundary": [{"elem": 0, "face": 3, "attr": 1}, ...] }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mesh::{BoundaryFace, ElementRecord, HighOrderMesh, MeshError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub order: usize,
    pub dim: usize,
    pub control_points: Vec<[f64; 2]>,
    pub elements: Vec<ElementRecord>,
    pub boundary: Vec<BoundaryFace>,
}

impl MeshFile {
    pub fn from_mesh<T: Real>(mesh: &HighOrderMesh<T>) -> Self {
        Self {
            order: mesh.order(),
            dim: 2,
            control_points: mesh
                .control_points()
                .iter()
                .map(|p| [p[0].to_f64_lossy(), p[1].to_f64_lossy()])
                .collect(),
            elements: mesh.elements().to_vec(),
            boundary: mesh.boundary_faces().to_vec(),
        }
    }

    /// Validates every mesh invariant, reporting the first violation.
    pub fn into_mesh<T: Real>(self) -> Result<HighOrderMesh<T>, MeshError> {
        if self.dim != 2 {
            return Err(MeshError::Format(format!("only dim = 2 is supported, got {}", self.dim)));
        }
        HighOrderMesh::new(
            self.order,
            self.control_points
                .into_iter()
                .map(|p| [T::of(p[0]), T::of(p[1])])
                .collect(),
            self.elements,
            self.boundary,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        serde_json::from_str(text).map_err(|e| MeshError::Format(e.to_string()))
    }
}

impl<T: Real> HighOrderMesh<T> {
    pub fn to_json(&self) -> String {
        MeshFile::from_mesh(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        MeshFile::from_json(text)?.into_mesh()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| MeshError::Format(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path.as_ref(), self.to_json())
            .map_err(|e| MeshError::Format(format!("{}: {e}", path.as_ref().display())))
    }
}
