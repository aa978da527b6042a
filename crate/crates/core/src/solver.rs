//! Source iteration with lagged transport sweeps, and a direct global solve as a reference.
//!
//! Iteration `l` solves, for every ordinate `d` in parallel,
//!
//! ```text
//! (G + F_ret + M_t) psi_{l+1} = q + M_s phi_l / (4 pi) - F_lag psi_l
//! ```
//!
//! element by element in sweep order, where `F_lag` holds the couplings lagged by the
//! ordinate's sweep ordering. The oracle mode instead solves `(G + F + M_t) psi_{l+1} =
//! q + M_s phi_l / (4 pi)` with a banded LU of the whole ordinate system.
//!
//! Local factorizations are cached per (element, ordinate), which costs
//! `N_elements * N_ordinates * N_u^2` scalars.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::TransportOperator;
use crate::linalg::{factor_checked, reverse_cuthill_mckee, BandedLu, LinalgError, LuFactor};
use crate::scalar::Real;
use crate::sweepgraph::{build_graph, sweep_ordering, DependencyGraph, GraphError, SweepOrdering, Weighting, MAX_EXACT_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("ordinate {ordinate}: {source}")]
    Graph { ordinate: usize, source: GraphError },
    #[error("local system of element {elem}, ordinate {ordinate}: {source}")]
    LocalSolve { elem: usize, ordinate: usize, source: LinalgError },
    #[error("global system of ordinate {ordinate}: {source}")]
    Oracle { ordinate: usize, source: LinalgError },
}

/// How each source iteration inverts the streaming-plus-collision operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// Element-by-element sweep with lagged couplings.
    Sweep,
    /// Exact global solve per ordinate.
    DirectOracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig<T> {
    /// Stop when `max_d |psi_{l+1} - psi_l|_inf` falls below this.
    pub tolerance: T,
    pub max_iterations: usize,
    pub weighting: Weighting,
    /// Components up to this size are ordered by the exact feedback arc set solver.
    pub exact_threshold: usize,
    pub mode: SolveMode,
    /// Largest accepted 1-norm condition number of a local matrix.
    pub max_condition: f64,
}

impl<T: Real> Default for SolveConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: T::of(1e-14),
            max_iterations: 500,
            weighting: Weighting::Face,
            exact_threshold: 10,
            mode: SolveMode::Sweep,
            max_condition: 1e14,
        }
    }
}

impl<T: Real> SolveConfig<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tolerance > T::zero()) {
            return Err(SolverError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.exact_threshold > MAX_EXACT_THRESHOLD {
            return Err(SolverError::InvalidConfig(format!(
                "exact_threshold {} exceeds {MAX_EXACT_THRESHOLD}",
                self.exact_threshold
            )));
        }
        if !(self.max_condition > 1.0) {
            return Err(SolverError::InvalidConfig("max_condition must exceed 1".into()));
        }
        Ok(())
    }
}

/// Successive-difference norms, one entry per source iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceHistory<T> {
    /// `max_d |psi_{l+1} - psi_l|_inf`.
    pub errors: Vec<T>,
    /// The same difference per ordinate.
    pub per_ordinate: Vec<Vec<T>>,
}

impl<T: Real> ConvergenceHistory<T> {
    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn last(&self) -> Option<T> {
        self.errors.last().copied()
    }

    /// Geometric mean of the last `window` ratios `e_l / e_{l-1}` among errors above `floor`.
    pub fn asymptotic_ratio(&self, floor: T, window: usize) -> Option<T> {
        let ratios: Vec<T> = self
            .errors
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect();
        if ratios.is_empty() || window == 0 {
            return None;
        }
        let tail = &ratios[ratios.len().saturating_sub(window)..];
        let mean_log = tail.iter().map(|r| r.ln()).sum::<T>() / T::of_usize(tail.len());
        Some(mean_log.exp())
    }

    /// True when the errors after the first `skip` entries never increase.
    pub fn is_monotone_after(&self, skip: usize) -> bool {
        self.errors.iter().skip(skip).collect::<Vec<_>>().windows(2).all(|w| w[1] <= w[0])
    }

    /// CSV with columns `iteration,error` and optionally one column per ordinate.
    pub fn to_csv(&self, per_ordinate: bool) -> String {
        let mut s = String::from("iteration,error");
        let nd = self.per_ordinate.first().map_or(0, Vec::len);
        if per_ordinate {
            for d in 0..nd {
                let _ = write!(s, ",ordinate_{d}");
            }
        }
        s.push('\n');
        for (i, e) in self.errors.iter().enumerate() {
            let _ = write!(s, "{},{:.6e}", i + 1, e.to_f64_lossy());
            if per_ordinate {
                for v in &self.per_ordinate[i] {
                    let _ = write!(s, ",{:.6e}", v.to_f64_lossy());
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Angular and scalar fluxes after source iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T> {
    /// Per-ordinate DOF vectors, element-major.
    pub psi: Vec<Vec<T>>,
    /// `sum_d w_d psi_d`.
    pub phi: Vec<T>,
    /// Source iterations performed, including the one confirming convergence.
    pub sweeps: usize,
    pub converged: bool,
    pub history: ConvergenceHistory<T>,
}

impl<T: Real> SolverState<T> {
    /// Iterations to convergence: the final confirming iteration is not counted, so a
    /// problem solved exactly by the first iteration reports 1.
    pub fn iterations(&self) -> usize {
        if self.converged {
            self.sweeps.saturating_sub(1).max(1)
        } else {
            self.sweeps
        }
    }
}

/// Banded LU of one ordinate's global system, elements renumbered by reverse Cuthill–McKee.
#[derive(Debug, Clone)]
struct GlobalFactor<T> {
    /// Block slot of each element.
    slot: Vec<usize>,
    lu: BandedLu<T>,
}

/// Sweep schedules and cached factorizations for an assembled operator.
pub struct TransportSolver<'a, T> {
    op: &'a TransportOperator<T>,
    config: SolveConfig<T>,
    graphs: Vec<DependencyGraph<T>>,
    orderings: Vec<SweepOrdering<T>>,
    local: Vec<Vec<LuFactor<T>>>,
    oracle: Vec<OnceLock<Result<GlobalFactor<T>, LinalgError>>>,
}

impl<'a, T: Real> TransportSolver<'a, T> {
    /// Builds the dependency graph and sweep ordering of every ordinate and factors every
    /// local matrix.
    pub fn new(op: &'a TransportOperator<T>, config: SolveConfig<T>) -> Result<Self, SolverError> {
        config.validate()?;
        let nd = op.num_ordinates();
        let scheduled: Vec<(DependencyGraph<T>, SweepOrdering<T>)> = (0..nd)
            .into_par_iter()
            .map(|d| {
                let g = build_graph(op, d, config.weighting).map_err(|source| SolverError::Graph { ordinate: d, source })?;
                let o = sweep_ordering(&g, config.exact_threshold)
                    .map_err(|source| SolverError::Graph { ordinate: d, source })?;
                Ok((g, o))
            })
            .collect::<Result<_, SolverError>>()?;
        let local = (0..nd)
            .into_par_iter()
            .map(|d| {
                (0..op.num_elements())
                    .map(|e| {
                        factor_checked(&op.local_matrix(d, e), config.max_condition).map_err(|source| {
                            SolverError::LocalSolve {
                                elem: e,
                                ordinate: d,
                                source,
                            }
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (graphs, orderings) = scheduled.into_iter().unzip();
        Ok(Self {
            op,
            config,
            graphs,
            orderings,
            local,
            oracle: (0..nd).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn operator(&self) -> &TransportOperator<T> {
        self.op
    }

    pub fn config(&self) -> &SolveConfig<T> {
        &self.config
    }

    pub fn graph(&self, d: usize) -> &DependencyGraph<T> {
        &self.graphs[d]
    }

    pub fn ordering(&self, d: usize) -> &SweepOrdering<T> {
        &self.orderings[d]
    }

    /// Solves `(G_e + F_e + M_t,e) x = rhs` with the cached factorization.
    pub fn local_solve(&self, d: usize, e: usize, rhs: &[T]) -> Vec<T> {
        self.local[d][e].solve(rhs)
    }

    /// `q_e + M_s,e phi_e / (4 pi)`.
    fn fixed_rhs(&self, d: usize, e: usize, phi: &[T]) -> Vec<T> {
        let nu = self.op.dofs_per_element();
        let mut rhs = self.op.ordinate(d).source(e);
        let scale = T::one() / (T::of(4.0) * T::PI());
        self.op.mass_s(e).mul_vec_acc(&phi[e * nu..(e + 1) * nu], scale, &mut rhs);
        rhs
    }

    /// One lagged sweep: retained upwind couplings use values from this sweep, lagged ones
    /// use `previous`.
    pub fn sweep(&self, d: usize, phi: &[T], previous: &[T]) -> Vec<T> {
        let nu = self.op.dofs_per_element();
        let blocks = self.op.ordinate(d);
        let ordering = &self.orderings[d];
        let mut out = vec![T::zero(); self.op.num_dofs()];
        for &e in &ordering.order {
            let mut rhs = self.fixed_rhs(d, e, phi);
            for c in &blocks.upwind[e] {
                let u = c.from;
                let src = if ordering.is_lagged(u, e) { previous } else { &out[..] };
                c.block.mul_vec_acc(&src[u * nu..(u + 1) * nu], -T::one(), &mut rhs);
            }
            let x = self.local_solve(d, e, &rhs);
            out[e * nu..(e + 1) * nu].copy_from_slice(&x);
        }
        out
    }

    fn global_factor(&self, d: usize) -> Result<&GlobalFactor<T>, SolverError> {
        self.oracle[d]
            .get_or_init(|| factor_global(self.op, d))
            .as_ref()
            .map_err(|source| SolverError::Oracle {
                ordinate: d,
                source: source.clone(),
            })
    }

    /// Exact solve of `(G + F + M_t) psi = q + M_s phi / (4 pi)` for ordinate `d`.
    ///
    /// One step of iterative refinement brings the banded solve's roundoff down to that of
    /// a sweep, so iteration counts of the two modes compare at tight tolerances.
    pub fn direct_oracle(&self, d: usize, phi: &[T]) -> Result<Vec<T>, SolverError> {
        let f = self.global_factor(d)?;
        let nu = self.op.dofs_per_element();
        let ne = self.op.num_elements();
        let mut rhs = vec![T::zero(); self.op.num_dofs()];
        for e in 0..ne {
            rhs[e * nu..(e + 1) * nu].copy_from_slice(&self.fixed_rhs(d, e, phi));
        }
        let solve = |r: &[T]| {
            let mut b = vec![T::zero(); r.len()];
            for e in 0..ne {
                let s = f.slot[e] * nu;
                b[s..s + nu].copy_from_slice(&r[e * nu..(e + 1) * nu]);
            }
            let x = f.lu.solve(&b);
            let mut out = vec![T::zero(); x.len()];
            for e in 0..ne {
                let s = f.slot[e] * nu;
                out[e * nu..(e + 1) * nu].copy_from_slice(&x[s..s + nu]);
            }
            out
        };
        let mut psi = solve(&rhs);
        let mut residual = vec![T::zero(); psi.len()];
        self.op.apply(d, &psi, &mut residual);
        for (r, b) in residual.iter_mut().zip(&rhs) {
            *r = *b - *r;
        }
        for (p, c) in psi.iter_mut().zip(solve(&residual)) {
            *p += c;
        }
        Ok(psi)
    }

    /// `sum_d w_d psi_d`, accumulated in ordinate order.
    pub fn scalar_flux(&self, psi: &[Vec<T>]) -> Vec<T> {
        let mut phi = vec![T::zero(); self.op.num_dofs()];
        for (d, p) in psi.iter().enumerate() {
            let w = self.op.quadrature().ordinates[d].weight;
            for (f, &v) in phi.iter_mut().zip(p) {
                *f += w * v;
            }
        }
        phi
    }

    /// Source iteration from `psi = 0` in the configured mode.
    pub fn source_iteration(&self) -> Result<SolverState<T>, SolverError> {
        self.iterate(self.config.mode)
    }

    /// Source iteration from `psi = 0` in the given mode.
    pub fn iterate(&self, mode: SolveMode) -> Result<SolverState<T>, SolverError> {
        let nd = self.op.num_ordinates();
        let mut psi = vec![vec![T::zero(); self.op.num_dofs()]; nd];
        let mut phi = vec![T::zero(); self.op.num_dofs()];
        let mut history = ConvergenceHistory::default();
        let mut converged = false;
        for it in 0..self.config.max_iterations {
            let next: Vec<Vec<T>> = (0..nd)
                .into_par_iter()
                .map(|d| match mode {
                    SolveMode::Sweep => Ok(self.sweep(d, &phi, &psi[d])),
                    SolveMode::DirectOracle => self.direct_oracle(d, &phi),
                })
                .collect::<Result<_, _>>()?;
            let per: Vec<T> = next
                .iter()
                .zip(&psi)
                .map(|(a, b)| a.iter().zip(b).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs())))
                .collect();
            let err = per.iter().fold(T::zero(), |m, &v| m.max(v));
            psi = next;
            phi = self.scalar_flux(&psi);
            log::debug!("iteration {}: error {:.3e}", it + 1, err.to_f64_lossy());
            history.errors.push(err);
            history.per_ordinate.push(per);
            if !err.is_finite() {
                break;
            }
            if err < self.config.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!(
                "source iteration stopped after {} iterations at error {:.3e}",
                history.len(),
                history.last().unwrap_or_else(T::nan).to_f64_lossy()
            );
        }
        Ok(SolverState {
            sweeps: history.len(),
            psi,
            phi,
            converged,
            history,
        })
    }
}

fn factor_global<T: Real>(op: &TransportOperator<T>, d: usize) -> Result<GlobalFactor<T>, LinalgError> {
    let ne = op.num_elements();
    let nu = op.dofs_per_element();
    let blocks = op.ordinate(d);
    let mut adjacency = vec![Vec::new(); ne];
    for (v, cs) in blocks.upwind.iter().enumerate() {
        for c in cs {
            adjacency[v].push(c.from);
            adjacency[c.from].push(v);
        }
    }
    let order = reverse_cuthill_mckee(&adjacency);
    let mut slot = vec![0usize; ne];
    for (i, &e) in order.iter().enumerate() {
        slot[e] = i;
    }
    let (mut lower, mut upper) = (nu - 1, nu - 1);
    for (v, cs) in blocks.upwind.iter().enumerate() {
        for c in cs {
            let (rv, ru) = (slot[v] * nu, slot[c.from] * nu);
            // row block rv, column block ru
            if ru > rv {
                upper = upper.max(ru + nu - 1 - rv);
            } else {
                lower = lower.max(rv + nu - 1 - ru);
            }
        }
    }
    let mut lu = BandedLu::new(ne * nu, lower, upper);
    for e in 0..ne {
        let a = op.local_matrix(d, e);
        let r = slot[e] * nu;
        for m in 0..nu {
            for n in 0..nu {
                lu.add(r + m, r + n, a[(m, n)]);
            }
        }
        for c in &blocks.upwind[e] {
            let col = slot[c.from] * nu;
            for m in 0..nu {
                for n in 0..nu {
                    let v = c.block[(m, n)];
                    if v != T::zero() {
                        lu.add(r + m, col + n, v);
                    }
                }
            }
        }
    }
    lu.factor()?;
    Ok(GlobalFactor { slot, lu })
}

/// Particle balance of a converged state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    /// `sum_d w_d int q_d`.
    pub source: f64,
    /// Incoming boundary current `sum_d w_d int w- psi_inc`.
    pub inflow: f64,
    /// `int (sigma_t - sigma_s) phi`.
    pub absorption: f64,
    /// Outgoing boundary current.
    pub outflow: f64,
    /// `outflow - inflow`.
    pub net_leakage: f64,
    /// `source - absorption - net_leakage`.
    pub residual: f64,
    /// Outflow minus inflow per boundary attribute.
    pub leakage_by_attribute: BTreeMap<i32, f64>,
}

/// Balance functionals of `state` against the operator it was computed with.
pub fn balance_report<T: Real>(op: &TransportOperator<T>, state: &SolverState<T>) -> BalanceReport {
    let nu = op.dofs_per_element();
    let mut source = T::zero();
    let mut inflow = T::zero();
    let mut outflow = T::zero();
    let mut by_attr: BTreeMap<i32, T> = BTreeMap::new();
    for (d, blocks) in op.ordinates().iter().enumerate() {
        let w = blocks.ordinate.weight;
        source += w * blocks.q_volume.iter().flatten().copied().sum::<T>();
        for b in &blocks.boundary {
            let psi_e = &state.psi[d][b.elem * nu..(b.elem + 1) * nu];
            let out = b.weights.iter().zip(psi_e).map(|(&a, &p)| a * p).sum::<T>();
            inflow += w * b.inflow;
            outflow += w * out;
            *by_attr.entry(b.attr).or_insert_with(T::zero) += w * (out - b.inflow);
        }
    }
    let mut absorption = T::zero();
    for e in 0..op.num_elements() {
        let phi_e = &state.phi[e * nu..(e + 1) * nu];
        let mut a = op.mass_t(e).clone();
        a.add_scaled(op.mass_s(e), -T::one());
        absorption += a.mul_vec(phi_e).into_iter().sum::<T>();
    }
    let net = outflow - inflow;
    BalanceReport {
        source: source.to_f64_lossy(),
        inflow: inflow.to_f64_lossy(),
        absorption: absorption.to_f64_lossy(),
        outflow: outflow.to_f64_lossy(),
        net_leakage: net.to_f64_lossy(),
        residual: (source - absorption - net).to_f64_lossy(),
        leakage_by_attribute: by_attr.into_iter().map(|(k, v)| (k, v.to_f64_lossy())).collect(),
    }
}
