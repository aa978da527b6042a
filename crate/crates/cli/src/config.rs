//! Run configuration shared by `graph-info`, `solve` and `mms`.
//!
//! ```json
//! {
//!   "mesh": { "kind": "file", "path": "mesh.json" },
//!   "order": 2,
//!   "angular": "S4",
//!   "cross_sections": { "default": { "sigma_t": 2.0, "sigma_s": 1.0 }, "regions": {} },
//!   "source": { "preset": "triple-point" },
//!   "weighting": "face",
//!   "solver": { "tolerance": 1e-14, "max_iterations": 500, "exact_threshold": 10, "compare_oracle": false },
//!   "output_dir": "out"
//! }
//! ```
//!
//! Every key is optional except that some mesh must be given before a run; unknown keys
//! are rejected at every level.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use hosweep_core::assembly::Material;
use hosweep_core::mesh::{
    generate_annulus_in_square, generate_distorted, generate_uniform, generate_vortex, AnnulusParams, Rect,
};
use hosweep_core::sweepgraph::Weighting;
use hosweep_core::{CrossSections, Mesh, Quadrature, SolveConfig};

fn unit_rect() -> Rect {
    Rect::UNIT
}

/// Where the mesh comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    File {
        path: PathBuf,
    },
    Uniform {
        nx: usize,
        ny: usize,
        order: usize,
        #[serde(default = "unit_rect")]
        domain: Rect,
    },
    Annulus(AnnulusParams),
    Distorted {
        nx: usize,
        ny: usize,
        order: usize,
        amplitude: f64,
        #[serde(default = "unit_rect")]
        domain: Rect,
    },
    Vortex {
        nx: usize,
        ny: usize,
        order: usize,
        amplitude: f64,
        #[serde(default = "unit_rect")]
        domain: Rect,
    },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        let mesh = match self {
            Self::File { path } => Mesh::read(path)?,
            Self::Uniform { nx, ny, order, domain } => generate_uniform(*nx, *ny, *order, *domain)?,
            Self::Annulus(params) => generate_annulus_in_square(params)?,
            Self::Distorted {
                nx,
                ny,
                order,
                amplitude,
                domain,
            } => generate_distorted(*nx, *ny, *order, *amplitude, *domain)?,
            Self::Vortex {
                nx,
                ny,
                order,
                amplitude,
                domain,
            } => generate_vortex(*nx, *ny, *order, *amplitude, *domain)?,
        };
        Ok(mesh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum AngularSet {
    #[serde(rename = "S2")]
    #[value(name = "S2")]
    S2,
    #[default]
    #[serde(rename = "S4")]
    #[value(name = "S4")]
    S4,
}

impl AngularSet {
    pub fn quadrature(self) -> Quadrature {
        let n = match self {
            Self::S2 => 2,
            Self::S4 => 4,
        };
        Quadrature::level_symmetric_2d(n).expect("S2 and S4 are tabulated")
    }
}

/// Cross sections per mesh region, with an optional fallback for unlisted regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossSectionTable {
    pub default: Option<Material<f64>>,
    pub regions: BTreeMap<i32, Material<f64>>,
}

impl Default for CrossSectionTable {
    fn default() -> Self {
        Self {
            default: Some(Material::new(2.0, 1.0)),
            regions: BTreeMap::new(),
        }
    }
}

impl CrossSectionTable {
    /// Resolves a material for every region present in `mesh`.
    pub fn for_mesh(&self, mesh: &Mesh) -> Result<CrossSections> {
        let regions: BTreeSet<i32> = mesh.elements().iter().map(|e| e.region).collect();
        let mut table = BTreeMap::new();
        for r in regions {
            let m = match self.regions.get(&r).or(self.default.as_ref()) {
                Some(m) => *m,
                None => bail!("no cross sections for region {r} and no default material"),
            };
            if !m.is_valid() {
                bail!("region {r}: need sigma_t >= sigma_s >= 0, got {m:?}");
            }
            table.insert(r, m);
        }
        Ok(CrossSections::regions(table))
    }
}

/// Named source and boundary presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Constant isotropic volume source and incident flux.
    Constant { volume: f64, inflow: f64 },
    /// `q = 1 + sin^2(2x + y)` with unit incident flux.
    TriplePoint {},
    /// Manufactured solution; cross sections must be uniform over the mesh.
    Mms {},
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self::Constant { volume: 1.0, inflow: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest strongly connected component ordered by the exact solver.
    pub exact_threshold: usize,
    /// Also run the direct global solve for comparison.
    pub compare_oracle: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            exact_threshold: d.exact_threshold,
            compare_oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSpec>,
    /// DG polynomial order `s`.
    pub order: usize,
    pub angular: AngularSet,
    pub cross_sections: CrossSectionTable,
    pub source: SourceSpec,
    pub weighting: Weighting,
    pub solver: SolverSpec,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: None,
            order: 2,
            angular: AngularSet::S4,
            cross_sections: CrossSectionTable::default(),
            source: SourceSpec::default(),
            weighting: Weighting::Face,
            solver: SolverSpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Overlays the keys present in the file at `path` on `self`.
    pub fn merged_with_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let overlay: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, overlay);
        serde_json::from_value(base).with_context(|| format!("invalid configuration in {}", path.display()))
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            weighting: self.weighting,
            exact_threshold: self.solver.exact_threshold,
            ..SolveConfig::default()
        }
    }

    pub fn mesh_spec(&self) -> Result<&MeshSpec> {
        self.mesh.as_ref().context("no mesh given (use --mesh or a \"mesh\" entry in --config)")
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            bail!("order must be at least 1");
        }
        self.solve_config().validate()?;
        Ok(())
    }
}

/// Recursive object merge. Tagged objects (`kind` or `preset`) are replaced wholesale so
/// fields of different variants never mix.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) if !o.contains_key("kind") && !o.contains_key("preset") => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
