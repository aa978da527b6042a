use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use hosweep_core::assembly::{assemble, AssemblyOptions, ConstantSource, FnSource, SourceTerm};
use hosweep_core::discretization::gauss::gauss_lobatto;
use hosweep_core::mesh::straighten;
use hosweep_core::solver::{balance_report, SolveMode};
use hosweep_core::sweepgraph::{build_graph, sweep_ordering, to_dot, GraphSummary, Weighting};
use hosweep_core::verification::{convergence_order, error_table_csv, l2_error, ErrorRow};
use hosweep_core::{Manufactured, Mesh, Operator, Solver, State};

use crate::config::{RunConfig, SourceSpec};

/// Outcome of a command that iterates: all solves converged or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    NotConverged,
}

fn triple_point_source(x: [f64; 2]) -> f64 {
    let s = (2.0 * x[0] + x[1]).sin();
    1.0 + s * s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn describe_mesh(mesh: &Mesh) -> String {
    let regions: BTreeSet<i32> = mesh.elements().iter().map(|e| e.region).collect();
    let attrs: BTreeSet<i32> = mesh.boundary_faces().iter().map(|b| b.attr).collect();
    format!(
        "{} elements, geometry order {}, {} control points, regions {:?}, boundary attributes {:?}",
        mesh.num_elements(),
        mesh.order(),
        mesh.control_points().len(),
        regions,
        attrs
    )
}

pub fn write_mesh(mesh: &Mesh, output: &Path) -> Result<()> {
    write_file(output, &mesh.to_json())?;
    println!("wrote {}: {}", output.display(), describe_mesh(mesh));
    Ok(())
}

pub fn straighten_mesh(input: &Path, levels: usize, output: &Path) -> Result<()> {
    let mesh = Mesh::read(input)?;
    let report = straighten(&mesh, levels)?;
    if !report.is_valid() {
        let (elem, det) = report.invalid[0];
        bail!(
            "straightened mesh has {} inverted sub-elements (first: {elem}, det J = {det:.3e}); try more refinement levels",
            report.invalid.len()
        );
    }
    write_mesh(&report.mesh, output)
}

/// Mesh and operator for a run; `mms` overrides the source preset.
fn build_operator(cfg: &RunConfig, mesh: &Mesh) -> Result<(Operator, Option<Manufactured>)> {
    let q = cfg.angular.quadrature();
    let xs = cfg.cross_sections.for_mesh(mesh)?;
    let opts = AssemblyOptions::default();
    let mut mms = None;
    let op = match &cfg.source {
        SourceSpec::Constant { volume, inflow } => {
            let src = ConstantSource {
                volume: *volume,
                inflow: *inflow,
            };
            assemble(mesh, cfg.order, &q, &xs, &src, &opts)?
        }
        SourceSpec::TriplePoint {} => {
            let src = FnSource {
                volume: |x: [f64; 2], _| triple_point_source(x),
                inflow: |_: [f64; 2], _| 1.0,
            };
            assemble(mesh, cfg.order, &q, &xs, &src, &opts)?
        }
        SourceSpec::Mms {} => {
            let m = Manufactured::new(q.clone(), xs.clone());
            let op = assemble(mesh, cfg.order, &q, &xs, &m as &dyn SourceTerm<f64>, &opts)?;
            mms = Some(m);
            op
        }
    };
    let unconverged: usize = op.ordinates().iter().map(|o| o.unconverged_faces).sum();
    if unconverged > 0 {
        log::warn!("{unconverged} face integrals did not reach the Romberg tolerance");
    }
    Ok((op, mms))
}

pub fn graph_info(cfg: &RunConfig, write_dot: bool) -> Result<()> {
    cfg.validate()?;
    let mesh = cfg.mesh_spec()?.build()?;
    let (op, _) = build_operator(cfg, &mesh)?;
    let mut csv = String::from(
        "ordinate,mu,eta,diagonal,edges,scc_sizes,simple_cycles,large_components,elements_in_large,weighting,lagged_edges,lagged_weight\n",
    );
    println!("{}", describe_mesh(&mesh));
    println!(
        "{:>3} {:>9} {:>9} {:>5} {:>6} {:>7} {:>6} {:>8}  {:<20} lagged edges ({})",
        "d",
        "mu",
        "eta",
        "diag",
        "edges",
        "simple",
        "large",
        "in large",
        "scc sizes",
        Weighting::ALL.map(|w| w.name()).join("/")
    );
    let mut total_cycles = 0;
    let mut dots = Vec::new();
    for d in 0..op.num_ordinates() {
        let o = &op.quadrature().ordinates[d];
        let mut lagged = Vec::new();
        let mut structure = None;
        for w in Weighting::ALL {
            let g = build_graph(&op, d, w)?;
            let ordering = sweep_ordering(&g, cfg.solver.exact_threshold)?;
            let s = GraphSummary::new(&g, &ordering);
            let _ = writeln!(
                csv,
                "{d},{:.7},{:.7},{},{},{},{},{},{},{},{},{:.6e}",
                o.direction[0],
                o.direction[1],
                o.is_diagonal(),
                s.edges,
                s.histogram(),
                s.simple_cycles,
                s.large_components,
                s.elements_in_large,
                w.name(),
                s.lagged_edges,
                s.lagged_weight
            );
            lagged.push(s.lagged_edges.to_string());
            if write_dot && w == cfg.weighting {
                dots.push((d, to_dot(&g, Some(&ordering), &format!("ordinate_{d}"))));
            }
            structure.get_or_insert(s);
        }
        let s = structure.expect("three weightings");
        total_cycles += s.simple_cycles + s.large_components;
        println!(
            "{d:>3} {:>9.5} {:>9.5} {:>5} {:>6} {:>7} {:>6} {:>8}  {:<20} {}",
            o.direction[0],
            o.direction[1],
            if o.is_diagonal() { "yes" } else { "no" },
            s.edges,
            s.simple_cycles,
            s.large_components,
            s.elements_in_large,
            if s.scc_sizes.is_empty() { "-".to_string() } else { s.histogram() },
            lagged.join("/")
        );
    }
    println!("total cycles (simple + large) over all ordinates: {total_cycles}");
    let path = cfg.output_dir.join("graph_info.csv");
    write_file(&path, &csv)?;
    println!("wrote {}", path.display());
    for (d, dot) in dots {
        let path = cfg.output_dir.join(format!("graph_ordinate_{d}.dot"));
        write_file(&path, &dot)?;
    }
    if write_dot {
        println!("wrote DOT graphs ({} weighting) to {}", cfg.weighting.name(), cfg.output_dir.display());
    }
    Ok(())
}

/// Nodal scalar flux at the GLL nodes: `element,node,x,y,phi`.
fn solution_csv(mesh: &Mesh, op: &Operator, state: &State) -> Result<String> {
    let s = op.order();
    let nu = op.dofs_per_element();
    let (nodes, _) = gauss_lobatto::<f64>(s + 1);
    let mut out = String::from("element,node,x,y,phi\n");
    for e in 0..op.num_elements() {
        for j in 0..=s {
            for i in 0..=s {
                let k = i + (s + 1) * j;
                let x = mesh.map_point(e, [nodes[i], nodes[j]])?;
                let _ = writeln!(out, "{e},{k},{:.12e},{:.12e},{:.12e}", x[0], x[1], state.phi[e * nu + k]);
            }
        }
    }
    Ok(out)
}

pub fn solve(cfg: &RunConfig) -> Result<Status> {
    cfg.validate()?;
    let mesh = cfg.mesh_spec()?.build()?;
    let (op, mms) = build_operator(cfg, &mesh)?;
    let solver = Solver::new(&op, cfg.solve_config())?;
    let lagged: usize = (0..op.num_ordinates()).map(|d| solver.ordering(d).lagged.len()).sum();
    println!("{}", describe_mesh(&mesh));
    println!(
        "{} DOFs per ordinate, {} ordinates, {lagged} lagged edges ({} weighting)",
        op.num_dofs(),
        op.num_ordinates(),
        cfg.weighting.name()
    );
    let state = solver.iterate(SolveMode::Sweep)?;
    let dir = &cfg.output_dir;
    write_file(&dir.join("history.csv"), &state.history.to_csv(true))?;
    println!(
        "sweep: {} after {} iterations, final error {:.3e}",
        if state.converged { "converged" } else { "NOT converged" },
        state.iterations(),
        state.history.last().unwrap_or(f64::NAN)
    );
    let mut converged = state.converged;
    if cfg.solver.compare_oracle {
        let oracle = solver.iterate(SolveMode::DirectOracle)?;
        write_file(&dir.join("history_oracle.csv"), &oracle.history.to_csv(true))?;
        let diff = state
            .phi
            .iter()
            .zip(&oracle.phi)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!(
            "oracle: {} after {} iterations, final error {:.3e}; max |phi_sweep - phi_oracle| = {diff:.3e}",
            if oracle.converged { "converged" } else { "NOT converged" },
            oracle.iterations(),
            oracle.history.last().unwrap_or(f64::NAN)
        );
        converged &= oracle.converged;
    }
    let balance = balance_report(&op, &state);
    write_file(&dir.join("balance.json"), &serde_json::to_string_pretty(&balance)?)?;
    println!(
        "balance: source {:.6e}, absorption {:.6e}, net leakage {:.6e}, residual {:.3e}",
        balance.source, balance.absorption, balance.net_leakage, balance.residual
    );
    write_file(&dir.join("solution.csv"), &solution_csv(&mesh, &op, &state)?)?;
    if let Some(m) = mms {
        let err = l2_error(&mesh, op.order(), &state.phi, |x| m.scalar_flux(x))?;
        println!("L2 error of the scalar flux against the manufactured solution: {err:.6e}");
    }
    println!("wrote history, balance and solution to {}", dir.display());
    Ok(if converged { Status::Done } else { Status::NotConverged })
}

pub fn mms(cfg: &RunConfig, meshes: &[PathBuf]) -> Result<Status> {
    if meshes.is_empty() {
        bail!("mms needs at least one mesh file");
    }
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.source = SourceSpec::Mms {};
    let mut rows = Vec::new();
    let mut sizes = Vec::new();
    let mut converged = true;
    for path in meshes {
        let mesh = Mesh::read(path)?;
        let (op, m) = build_operator(&cfg, &mesh)?;
        let m = m.expect("mms preset");
        let state = Solver::new(&op, cfg.solve_config())?.iterate(SolveMode::Sweep)?;
        if !state.converged {
            log::warn!("{}: source iteration did not converge", path.display());
            converged = false;
        }
        let error = l2_error(&mesh, op.order(), &state.phi, |x| m.scalar_flux(x))?;
        let tag = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        rows.push(ErrorRow {
            tag,
            dofs: op.num_dofs(),
            error,
        });
        sizes.push((mesh.area() / mesh.num_elements() as f64).sqrt());
    }
    let csv = error_table_csv(&rows, Some(&sizes));
    print!("{csv}");
    if rows.len() >= 3 {
        let data: Vec<(f64, f64)> = sizes.iter().zip(&rows).map(|(&h, r)| (h, r.error)).collect();
        let est = convergence_order(&data)?;
        println!("observed order {:.3}{}", est.order, if est.monotone { "" } else { " (errors not monotone)" });
    }
    let path = cfg.output_dir.join("mms_errors.csv");
    write_file(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(if converged { Status::Done } else { Status::NotConverged })
}
