//! One-dimensional Lagrange interpolants and their tensor products on the unit square.

use crate::discretization::gauss::gauss_lobatto;
use crate::scalar::{Point2, Real};

/// Lagrange basis on a set of distinct nodes in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Lagrange1d<T> {
    nodes: Vec<T>,
    /// `1 / prod_{k != j} (x_j - x_k)`
    denominators: Vec<T>,
}

impl<T: Real> Lagrange1d<T> {
    pub fn new(nodes: Vec<T>) -> Self {
        let n = nodes.len();
        let denominators = (0..n)
            .map(|j| {
                let p = (0..n)
                    .filter(|&k| k != j)
                    .fold(T::one(), |acc, k| acc * (nodes[j] - nodes[k]));
                T::one() / p
            })
            .collect();
        Self {
            nodes,
            denominators,
        }
    }

    /// Degree-`order` basis on Gauss–Lobatto nodes.
    pub fn gauss_lobatto(order: usize) -> Self {
        assert!(order >= 1, "Lagrange order must be at least 1");
        Self::new(gauss_lobatto::<T>(order + 1).0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn values_into(&self, x: T, out: &mut [T]) {
        let n = self.nodes.len();
        for j in 0..n {
            let mut p = self.denominators[j];
            for k in 0..n {
                if k != j {
                    p *= x - self.nodes[k];
                }
            }
            out[j] = p;
        }
    }

    /// Derivatives via the product rule, valid at the nodes themselves.
    pub fn derivatives_into(&self, x: T, out: &mut [T]) {
        let n = self.nodes.len();
        for j in 0..n {
            let mut total = T::zero();
            for k in 0..n {
                if k == j {
                    continue;
                }
                let mut p = T::one();
                for m in 0..n {
                    if m != j && m != k {
                        p *= x - self.nodes[m];
                    }
                }
                total += p;
            }
            out[j] = total * self.denominators[j];
        }
    }

    pub fn values(&self, x: T) -> Vec<T> {
        let mut v = vec![T::zero(); self.len()];
        self.values_into(x, &mut v);
        v
    }

    pub fn derivatives(&self, x: T) -> Vec<T> {
        let mut v = vec![T::zero(); self.len()];
        self.derivatives_into(x, &mut v);
        v
    }
}

/// Tensor-product Lagrange basis `Q_p` on `[0,1]^2` with Gauss–Lobatto nodes.
///
/// Node `(i, j)` has index `i + (p + 1) j`, so the first coordinate runs fastest.
#[derive(Debug, Clone)]
pub struct TensorLagrange<T> {
    order: usize,
    line: Lagrange1d<T>,
}

impl<T: Real> TensorLagrange<T> {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            line: Lagrange1d::gauss_lobatto(order),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions `(p + 1)^2`.
    pub fn len(&self) -> usize {
        (self.order + 1) * (self.order + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn line(&self) -> &Lagrange1d<T> {
        &self.line
    }

    pub fn node(&self, m: usize) -> Point2<T> {
        let n = self.order + 1;
        [self.line.nodes()[m % n], self.line.nodes()[m / n]]
    }

    pub fn nodes(&self) -> Vec<Point2<T>> {
        (0..self.len()).map(|m| self.node(m)).collect()
    }

    pub fn values_into(&self, xi: Point2<T>, out: &mut [T]) {
        let n = self.order + 1;
        assert!(n <= 16, "orders above 15 unsupported");
        let mut a = [T::zero(); 16];
        let mut b = [T::zero(); 16];
        self.line.values_into(xi[0], &mut a[..n]);
        self.line.values_into(xi[1], &mut b[..n]);
        for j in 0..n {
            for i in 0..n {
                out[i + n * j] = a[i] * b[j];
            }
        }
    }

    pub fn gradients_into(&self, xi: Point2<T>, out: &mut [Point2<T>]) {
        let n = self.order + 1;
        assert!(n <= 16, "orders above 15 unsupported");
        let mut a = [T::zero(); 16];
        let mut b = [T::zero(); 16];
        let mut da = [T::zero(); 16];
        let mut db = [T::zero(); 16];
        self.line.values_into(xi[0], &mut a[..n]);
        self.line.values_into(xi[1], &mut b[..n]);
        self.line.derivatives_into(xi[0], &mut da[..n]);
        self.line.derivatives_into(xi[1], &mut db[..n]);
        for j in 0..n {
            for i in 0..n {
                out[i + n * j] = [da[i] * b[j], a[i] * db[j]];
            }
        }
    }

    pub fn values(&self, xi: Point2<T>) -> Vec<T> {
        let mut v = vec![T::zero(); self.len()];
        self.values_into(xi, &mut v);
        v
    }

    pub fn gradients(&self, xi: Point2<T>) -> Vec<Point2<T>> {
        let mut v = vec![[T::zero(); 2]; self.len()];
        self.gradients_into(xi, &mut v);
        v
    }
}
