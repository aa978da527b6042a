use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use hosweep_cli::config::RunConfig;
use hosweep_core::Mesh;

fn hosweep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hosweep"))
        .args(args)
        .current_dir(dir)
        .env_remove("HOSWEEP_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hosweep(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

/// `graph_info.csv` rows as (ordinate, simple, large, weighting, lagged).
fn graph_rows(csv: &str) -> Vec<(usize, usize, usize, String, usize)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[6].parse().unwrap(), f[7].parse().unwrap(), f[9].to_string(), f[10].parse().unwrap())
        })
        .collect()
}

fn history_errors(csv: &str) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn generate_uniform_mesh() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate-mesh", "uniform", "--nx", "4", "--ny", "4", "--order", "3", "-o", "u.json"]);
    let mesh = Mesh::read(dir.path().join("u.json")).unwrap();
    assert_eq!(mesh.num_elements(), 16);
    assert_eq!(mesh.order(), 3);
}

#[test]
fn generate_annulus_mesh_has_three_regions() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["generate-mesh", "annulus", "--r1", "0.4", "--r2", "0.45", "--half-width", "0.6", "--order", "3", "-o", "a.json"],
    );
    let mesh = Mesh::read(dir.path().join("a.json")).unwrap();
    let regions: BTreeSet<i32> = mesh.elements().iter().map(|e| e.region).collect();
    assert_eq!(regions, BTreeSet::from([1, 2, 3]));
}

#[test]
fn invalid_generator_parameters_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = hosweep(dir.path(), &["generate-mesh", "annulus", "--r1", "0.5", "--r2", "0.45", "-o", "a.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = hosweep(dir.path(), &["generate-mesh", "distorted", "--nx", "8", "--ny", "8", "--amplitude", "0.2", "-o", "d.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("element"));
}

#[test]
fn distorted_mesh_has_cycles_and_straightened_mesh_has_none() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate-mesh", "distorted", "--nx", "8", "--ny", "8", "--order", "3", "--amplitude", "0.018", "-o", "d.json"]);
    let stdout = ok(d, &["graph-info", "--mesh", "d.json", "--output-dir", "g", "--dot"]);
    let rows = graph_rows(&read(d, "g/graph_info.csv"));
    assert_eq!(rows.len(), 36);
    assert!(rows.iter().any(|r| r.1 + r.2 >= 1));
    assert!(!stdout.contains("over all ordinates: 0"));
    let dot = read(d, "g/graph_ordinate_1.dot");
    assert!(dot.starts_with("digraph") && dot.contains("dashed"));

    ok(d, &["straighten", "d.json", "--levels", "3", "-o", "s.json"]);
    ok(d, &["graph-info", "--mesh", "s.json", "--order", "1", "--output-dir", "gs"]);
    assert!(graph_rows(&read(d, "gs/graph_info.csv")).iter().all(|r| r.1 == 0 && r.2 == 0 && r.4 == 0));
}

#[test]
fn uniform_mesh_graph_is_acyclic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate-mesh", "uniform", "--nx", "5", "--ny", "3", "-o", "u.json"]);
    let stdout = ok(d, &["graph-info", "--mesh", "u.json", "--angular", "S2", "--output-dir", "g"]);
    let rows = graph_rows(&read(d, "g/graph_info.csv"));
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.1 == 0 && r.2 == 0 && r.4 == 0));
    assert!(stdout.contains("over all ordinates: 0"));
}

#[test]
fn vortex_mesh_lag_counts_depend_on_weighting() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate-mesh", "vortex", "--nx", "8", "--ny", "8", "--order", "3", "--amplitude", "0.25", "-o", "v.json"]);
    ok(d, &["graph-info", "--mesh", "v.json", "--output-dir", "g"]);
    let rows = graph_rows(&read(d, "g/graph_info.csv"));
    let lagged = |w: &str| -> usize { rows.iter().filter(|r| r.3 == w).map(|r| r.4).sum() };
    let counts = [lagged("unity"), lagged("face"), lagged("sig-inv-face")];
    assert!(counts[0] != counts[1] || counts[1] != counts[2], "{counts:?}");
}

#[test]
fn solve_reaches_tolerance_and_sweep_needs_at_least_oracle_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate-mesh", "vortex", "--nx", "8", "--ny", "8", "--order", "3", "--amplitude", "0.25", "-o", "v.json"]);
    ok(
        d,
        &["solve", "--mesh", "v.json", "--source", "triple-point", "--sigma-t", "2", "--sigma-s", "1", "--compare-oracle", "--output-dir", "s"],
    );
    let sweep = history_errors(&read(d, "s/history.csv"));
    let oracle = history_errors(&read(d, "s/history_oracle.csv"));
    assert!(*sweep.last().unwrap() <= 1e-14);
    assert!(*oracle.last().unwrap() <= 1e-14);
    assert!(sweep.len() >= oracle.len(), "{} vs {}", sweep.len(), oracle.len());
    let balance: serde_json::Value = serde_json::from_str(&read(d, "s/balance.json")).unwrap();
    let residual = balance["residual"].as_f64().unwrap();
    assert!(residual.abs() < 1e-10 * balance["source"].as_f64().unwrap());
    let solution = read(d, "s/solution.csv");
    assert_eq!(solution.lines().count(), 1 + 64 * 9);
}

#[test]
fn pure_absorber_on_acyclic_mesh_converges_in_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate-mesh", "uniform", "--nx", "3", "--ny", "3", "--order", "1", "-o", "u.json"]);
    let stdout = ok(d, &["solve", "--mesh", "u.json", "--sigma-t", "1", "--sigma-s", "0", "--output-dir", "s"]);
    assert!(stdout.contains("converged after 1 iterations"), "{stdout}");
}

#[test]
fn non_convergence_exits_with_two_and_errors_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate-mesh", "uniform", "--nx", "3", "--ny", "3", "--order", "1", "-o", "u.json"]);
    let out = hosweep(d, &["solve", "--mesh", "u.json", "--sigma-s", "1.9", "--max-iterations", "3", "--output-dir", "s"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(history_errors(&read(d, "s/history.csv")).len(), 3);
    let out = hosweep(d, &["solve", "--mesh", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = hosweep(d, &["solve", "--output-dir", "s"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no mesh"));
    let out = hosweep(d, &["solve", "--mesh", "u.json", "--sigma-t", "1", "--sigma-s", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mms_table_reports_order_for_refinement_family() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for n in ["4", "8", "16"] {
        ok(d, &["generate-mesh", "uniform", "--nx", n, "--ny", n, "--order", "1", "-o", &format!("u{n}.json")]);
    }
    ok(d, &["mms", "u4.json", "u8.json", "u16.json", "--order", "3", "--sigma-t", "1", "--sigma-s", "0.5", "--output-dir", "m"]);
    let table = read(d, "m/mms_errors.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "mesh,dofs,l2_error,order");
    assert_eq!(lines.len(), 4);
    let order: f64 = lines[3].rsplit(',').next().unwrap().parse().unwrap();
    assert!(order >= 3.8, "{table}");

    ok(d, &["mms", "u4.json", "--order", "3", "--output-dir", "m1"]);
    let single = read(d, "m1/mms_errors.csv");
    assert_eq!(single.lines().next(), Some("mesh,dofs,l2_error"));
    assert_eq!(single.lines().count(), 2);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.json"),
        r#"{"mesh": {"kind": "distorted", "nx": 6, "ny": 6, "order": 3, "amplitude": 0.025},
            "source": {"preset": "triple-point"}, "solver": {"compare_oracle": true}}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out_dir = format!("o{i}");
        let out = Command::new(env!("CARGO_BIN_EXE_hosweep"))
            .args(["solve", "--config", "run.json", "--output-dir", &out_dir])
            .current_dir(d)
            .env("HOSWEEP_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        let out = Command::new(env!("CARGO_BIN_EXE_hosweep"))
            .args(["graph-info", "--config", "run.json", "--output-dir", &out_dir])
            .current_dir(d)
            .env("HOSWEEP_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(
            ["history.csv", "history_oracle.csv", "solution.csv", "balance.json", "graph_info.csv"]
                .map(|f| read(d, &format!("{out_dir}/{f}"))),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn config_file_overrides_flags_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), r#"{"order": 1, "weighting": "unity", "cross_sections": {"regions": {"2": {"sigma_t": 3.0, "sigma_s": 0.5}}}}"#).unwrap();
    let printed = ok(d, &["solve", "--config", "c.json", "--order", "3", "--mesh", "m.json", "--tolerance", "1e-9", "--print-config"]);
    let cfg = RunConfig::from_json(&printed).unwrap();
    assert_eq!(cfg.order, 1);
    assert_eq!(cfg.solver.tolerance, 1e-9);
    assert_eq!(cfg.cross_sections.regions.len(), 1);
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);

    std::fs::write(d.join("again.json"), &printed).unwrap();
    let reprinted = ok(d, &["solve", "--config", "again.json", "--print-config"]);
    assert_eq!(reprinted, printed);

    std::fs::write(d.join("bad.json"), r#"{"solver": {"tolerence": 1e-9}}"#).unwrap();
    let out = hosweep(d, &["solve", "--config", "bad.json", "--mesh", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerence"));
}
