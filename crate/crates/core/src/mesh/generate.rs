//! Test-mesh factories: uniform grids, a curved annulus-in-square, and distorted or swirled grids.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::discretization::gauss::gauss_lobatto;
use crate::mesh::{ElementRecord, HighOrderMesh, MeshError};
use crate::scalar::Real;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }
}

/// Boundary attributes of rectangular meshes: 1 bottom, 2 right, 3 top, 4 left.
fn rect_side(domain: &Rect, p: [f64; 2]) -> i32 {
    let tol = 1e-9 * (domain.x1 - domain.x0).max(domain.y1 - domain.y0);
    if (p[1] - domain.y0).abs() < tol {
        1
    } else if (p[0] - domain.x1).abs() < tol {
        2
    } else if (p[1] - domain.y1).abs() < tol {
        3
    } else {
        4
    }
}

/// Structured grid with shared Gauss–Lobatto geometric nodes; `displace` moves each node.
fn structured_grid<T: Real>(
    nx: usize,
    ny: usize,
    order: usize,
    domain: Rect,
    displace: impl Fn(usize, usize, [f64; 2]) -> [f64; 2],
) -> Result<HighOrderMesh<T>, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidParameters("nx and ny must be at least 1".into()));
    }
    if order == 0 {
        return Err(MeshError::InvalidOrder(order));
    }
    if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
        return Err(MeshError::InvalidParameters("empty domain rectangle".into()));
    }
    let (g, _) = gauss_lobatto::<f64>(order + 1);
    let (px, py) = (nx * order + 1, ny * order + 1);
    let hx = (domain.x1 - domain.x0) / nx as f64;
    let hy = (domain.y1 - domain.y0) / ny as f64;
    let coord = |cells: usize, k: usize, origin: f64, h: f64, count: usize| -> f64 {
        let (c, i) = (k / order, k % order);
        if k == count - 1 {
            origin + cells as f64 * h
        } else {
            origin + (c as f64 + g[i]) * h
        }
    };
    let mut points = Vec::with_capacity(px * py);
    for j in 0..py {
        for i in 0..px {
            let x = coord(nx, i, domain.x0, hx, px);
            let y = coord(ny, j, domain.y0, hy, py);
            let on_boundary = i == 0 || j == 0 || i == px - 1 || j == py - 1;
            let p = if on_boundary {
                [x, y]
            } else {
                displace(i, j, [x, y])
            };
            points.push([T::of(p[0]), T::of(p[1])]);
        }
    }
    let n = order + 1;
    let mut elements = Vec::with_capacity(nx * ny);
    for cj in 0..ny {
        for ci in 0..nx {
            let mut nodes = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    nodes.push((ci * order + i) + px * (cj * order + j));
                }
            }
            elements.push(ElementRecord { nodes, region: 1 });
        }
    }
    HighOrderMesh::with_boundary_attributes(order, points, elements, |_, _, mid| {
        rect_side(&domain, [mid[0].to_f64_lossy(), mid[1].to_f64_lossy()])
    })
}

/// Axis-aligned `nx x ny` grid of order-`order` elements on `domain`.
pub fn generate_uniform<T: Real>(
    nx: usize,
    ny: usize,
    order: usize,
    domain: Rect,
) -> Result<HighOrderMesh<T>, MeshError> {
    structured_grid(nx, ny, order, domain, |_, _, p| p)
}

/// Uniform grid on `domain` with interior geometric nodes displaced by
///
/// `dx = a sin(pi ny Y) sin(pi X)`, `dy = a sin(pi nx X) sin(pi Y)`
///
/// in normalized coordinates `X, Y in [0,1]`. Element vertices stay fixed and the field
/// vanishes on the domain boundary. Each interior face bows into an arc whose end slopes
/// reach `pi a n`, so faces become re-entrant for ordinates within that angle of tangency.
/// The map stays valid while `pi a max(nx, ny) < 1`.
pub fn generate_distorted<T: Real>(
    nx: usize,
    ny: usize,
    order: usize,
    amplitude: f64,
    domain: Rect,
) -> Result<HighOrderMesh<T>, MeshError> {
    if !amplitude.is_finite() {
        return Err(MeshError::InvalidParameters("amplitude must be finite".into()));
    }
    let lx = domain.x1 - domain.x0;
    let ly = domain.y1 - domain.y0;
    structured_grid(nx, ny, order, domain, |_, _, p| {
        let xn = (p[0] - domain.x0) / lx;
        let yn = (p[1] - domain.y0) / ly;
        let dx = amplitude * (PI * ny as f64 * yn).sin() * (PI * xn).sin();
        let dy = amplitude * (PI * nx as f64 * xn).sin() * (PI * yn).sin();
        [p[0] + dx * lx, p[1] + dy * ly]
    })
}

/// Uniform grid on `domain` with every node (vertices included) moved by the swirl
///
/// `dx = -a sin^2(pi X) sin(2 pi Y)`, `dy = a sin^2(pi Y) sin(2 pi X)`
///
/// in normalized coordinates. The field is divergence free and vanishes on the boundary, so
/// the grid rolls up around the centre like a sheared Lagrangian mesh. Unlike
/// [`generate_distorted`] the amplitude is independent of the resolution; valid meshes need
/// roughly `a < 1 / pi`.
pub fn generate_vortex<T: Real>(
    nx: usize,
    ny: usize,
    order: usize,
    amplitude: f64,
    domain: Rect,
) -> Result<HighOrderMesh<T>, MeshError> {
    if !amplitude.is_finite() {
        return Err(MeshError::InvalidParameters("amplitude must be finite".into()));
    }
    let lx = domain.x1 - domain.x0;
    let ly = domain.y1 - domain.y0;
    structured_grid(nx, ny, order, domain, |_, _, p| {
        let xn = (p[0] - domain.x0) / lx;
        let yn = (p[1] - domain.y0) / ly;
        let dx = -amplitude * (PI * xn).sin().powi(2) * (2.0 * PI * yn).sin();
        let dy = amplitude * (PI * yn).sin().powi(2) * (2.0 * PI * xn).sin();
        [p[0] + dx * lx, p[1] + dy * ly]
    })
}

/// Parameters of the annulus-in-square mesh.
///
/// The hole `r < inner_radius` is excluded. Region 1 spans `[inner_radius, interface_radius]`,
/// region 2 spans `[interface_radius, outer_radius]`, region 3 fills the rest of the square
/// `[-half_width, half_width]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusParams {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Defaults to the midpoint of the two radii.
    pub interface_radius: Option<f64>,
    pub half_width: f64,
    /// Angular segments; a multiple of 8 so square corners fall on segment boundaries.
    pub segments: usize,
    /// Radial element layers in regions 1, 2 and 3.
    pub layers: [usize; 3],
    pub order: usize,
}

impl Default for AnnulusParams {
    fn default() -> Self {
        Self {
            inner_radius: 0.4,
            outer_radius: 0.45,
            interface_radius: None,
            half_width: 0.6,
            segments: 16,
            layers: [1, 1, 2],
            order: 3,
        }
    }
}

impl AnnulusParams {
    /// Doubles the angular and radial resolution.
    pub fn refined(&self) -> Self {
        Self {
            segments: self.segments * 2,
            layers: [self.layers[0] * 2, self.layers[1] * 2, self.layers[2] * 2],
            ..*self
        }
    }

    fn interface(&self) -> f64 {
        self.interface_radius
            .unwrap_or(0.5 * (self.inner_radius + self.outer_radius))
    }
}

/// Point on the square perimeter, affine in angle within each side.
fn square_point(theta: f64, w: f64) -> [f64; 2] {
    let quarter = PI / 2.0;
    let side = ((theta + PI / 4.0) / quarter).floor();
    let phi = theta - side * quarter;
    let local = [w, w * phi / (PI / 4.0)];
    let (s, c) = (side * quarter).sin_cos();
    [c * local[0] - s * local[1], s * local[0] + c * local[1]]
}

/// Curved annulus-in-square mesh. Boundary attributes: 1 inner circle, 2 square.
pub fn generate_annulus_in_square<T: Real>(params: &AnnulusParams) -> Result<HighOrderMesh<T>, MeshError> {
    let &AnnulusParams {
        inner_radius: r1,
        outer_radius: r2,
        half_width: w,
        segments,
        layers,
        order,
        ..
    } = params;
    let rm = params.interface();
    if !(0.0 < r1 && r1 < rm && rm < r2 && r2 < w) {
        return Err(MeshError::InvalidParameters(format!(
            "radii must satisfy 0 < r1 < interface < r2 < half_width (got {r1}, {rm}, {r2}, {w})"
        )));
    }
    if order < 2 {
        return Err(MeshError::InvalidParameters("annulus mesh needs order >= 2".into()));
    }
    if segments == 0 || segments % 8 != 0 {
        return Err(MeshError::InvalidParameters(format!(
            "angular segments must be a positive multiple of 8, got {segments}"
        )));
    }
    if layers.iter().any(|&l| l == 0) {
        return Err(MeshError::InvalidParameters("every region needs at least one layer".into()));
    }
    let (g, _) = gauss_lobatto::<f64>(order + 1);
    let n_layers: usize = layers.iter().sum();
    let n_theta = segments * order;
    let n_rad = n_layers * order + 1;
    let dtheta = 2.0 * PI / segments as f64;

    // radial node index -> (layer, local GLL coordinate)
    let radial = |k: usize| -> (usize, f64) {
        if k == n_rad - 1 {
            (n_layers - 1, 1.0)
        } else {
            (k / order, g[k % order])
        }
    };
    let position = |kr: usize, kt: usize| -> [f64; 2] {
        let theta = (kt / order) as f64 * dtheta + g[kt % order] * dtheta;
        let (layer, s) = radial(kr);
        if layer < layers[0] {
            let r = r1 + (layer as f64 + s) / layers[0] as f64 * (rm - r1);
            [r * theta.cos(), r * theta.sin()]
        } else if layer < layers[0] + layers[1] {
            let l = layer - layers[0];
            let r = rm + (l as f64 + s) / layers[1] as f64 * (r2 - rm);
            [r * theta.cos(), r * theta.sin()]
        } else {
            let l = layer - layers[0] - layers[1];
            let rho = (l as f64 + s) / layers[2] as f64;
            // angle of the node within its own segment, so shared nodes on segment
            // boundaries use the same side of the square
            let seg = kt / order;
            let local = g[kt % order];
            let th = (seg as f64 + local) * dtheta;
            let circle = [r2 * th.cos(), r2 * th.sin()];
            let sq = square_point(th, w);
            [
                (1.0 - rho) * circle[0] + rho * sq[0],
                (1.0 - rho) * circle[1] + rho * sq[1],
            ]
        }
    };
    let mut points = Vec::with_capacity(n_rad * n_theta);
    for kr in 0..n_rad {
        for kt in 0..n_theta {
            let p = position(kr, kt);
            points.push([T::of(p[0]), T::of(p[1])]);
        }
    }
    let n = order + 1;
    let mut elements = Vec::with_capacity(n_layers * segments);
    for layer in 0..n_layers {
        let region = if layer < layers[0] {
            1
        } else if layer < layers[0] + layers[1] {
            2
        } else {
            3
        };
        for seg in 0..segments {
            let mut nodes = Vec::with_capacity(n * n);
            // first reference coordinate runs radially, second angularly (positive orientation)
            for j in 0..n {
                for i in 0..n {
                    let kr = layer * order + i;
                    let kt = (seg * order + j) % n_theta;
                    nodes.push(kr * n_theta + kt);
                }
            }
            elements.push(ElementRecord { nodes, region });
        }
    }
    let mid_radius = 0.5 * (r1 + rm);
    HighOrderMesh::with_boundary_attributes(order, points, elements, move |_, _, mid| {
        let r = (mid[0].to_f64_lossy()).hypot(mid[1].to_f64_lossy());
        if r < mid_radius {
            1
        } else {
            2
        }
    })
}
