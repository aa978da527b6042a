//! Level-symmetric discrete-ordinates sets.

use serde::{Deserialize, Serialize};

use crate::discretization::QuadratureError;
use crate::scalar::{Point2, Real};

/// First direction cosine of the standard S4 level-symmetric set.
pub const S4_MU1: f64 = 0.3500212;

/// One discrete direction and its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ordinate<T> {
    pub weight: T,
    /// Direction cosines `(mu, eta, xi)` with respect to the x, y and z axes.
    pub direction: [T; 3],
}

impl<T: Real> Ordinate<T> {
    /// In-plane streaming direction `(mu, eta)`.
    pub fn planar(&self) -> Point2<T> {
        [self.direction[0], self.direction[1]]
    }

    /// True when `|mu| == |eta|` (to rounding).
    pub fn is_diagonal(&self) -> bool {
        (self.direction[0].abs() - self.direction[1].abs()).abs() <= T::of(1e-12)
    }
}

/// A set of ordinates whose weights sum to `4 pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularQuadrature<T> {
    pub ordinates: Vec<Ordinate<T>>,
}

impl<T: Real> AngularQuadrature<T> {
    /// Full-sphere level-symmetric `S_N` set, `N` in `{2, 4}`, equal weights.
    pub fn level_symmetric(n: usize) -> Result<Self, QuadratureError> {
        let levels: Vec<f64> = match n {
            2 => vec![3f64.sqrt() / 3.0],
            4 => {
                let mu1 = S4_MU1;
                // mu_i^2 = mu_1^2 + 2 (i - 1) (1 - 3 mu_1^2) / (N - 2)
                let mu2 = (mu1 * mu1 + 2.0 * (1.0 - 3.0 * mu1 * mu1) / (n as f64 - 2.0)).sqrt();
                vec![mu1, mu2]
            }
            _ => return Err(QuadratureError::UnsupportedOrder(n)),
        };
        // Octant points: index triples (i, j, k) with i + j + k = N/2 - 1 (0-based levels).
        let half = n / 2;
        let mut octant = Vec::new();
        for i in 0..half {
            for j in 0..half - i {
                let k = half - 1 - i - j;
                octant.push([levels[i], levels[j], levels[k]]);
            }
        }
        let count = octant.len() * 8;
        let weight = T::of(4.0 * std::f64::consts::PI / count as f64);
        let mut ordinates = Vec::with_capacity(count);
        for sz in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sx in [1.0, -1.0] {
                    for p in &octant {
                        ordinates.push(Ordinate {
                            weight,
                            direction: [T::of(sx * p[0]), T::of(sy * p[1]), T::of(sz * p[2])],
                        });
                    }
                }
            }
        }
        Ok(Self { ordinates })
    }

    /// Planar reduction: keeps ordinates with `xi > 0` and doubles their weights.
    pub fn upper_hemisphere(&self) -> Self {
        let two = T::one() + T::one();
        Self {
            ordinates: self
                .ordinates
                .iter()
                .filter(|o| o.direction[2] > T::zero())
                .map(|o| Ordinate {
                    weight: o.weight * two,
                    direction: o.direction,
                })
                .collect(),
        }
    }

    /// Planar level-symmetric set used by the 2D solver.
    pub fn level_symmetric_2d(n: usize) -> Result<Self, QuadratureError> {
        Ok(Self::level_symmetric(n)?.upper_hemisphere())
    }

    pub fn len(&self) -> usize {
        self.ordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinates.is_empty()
    }

    pub fn total_weight(&self) -> T {
        self.ordinates.iter().map(|o| o.weight).sum()
    }

    pub fn first_moment(&self) -> [T; 3] {
        let mut m = [T::zero(); 3];
        for o in &self.ordinates {
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += o.weight * o.direction[k];
            }
        }
        m
    }
}
