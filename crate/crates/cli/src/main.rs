//! `hosweep`: mesh generation, sweep-graph analysis and transport solves from the command line.
//!
//! Exit status: 0 on success (and convergence), 1 on any error, 2 when a solve did not converge.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hosweep_core::assembly::Material;
use hosweep_core::mesh::{generate_annulus_in_square, generate_distorted, generate_uniform, generate_vortex, AnnulusParams, Rect};
use hosweep_core::sweepgraph::Weighting;
use hosweep_core::Mesh;

use hosweep_cli::commands::{self, Status};
use hosweep_cli::config::{AngularSet, MeshSpec, RunConfig, SourceSpec};

#[derive(Parser)]
#[command(name = "hosweep", version, about = "High-order DG transport sweeps on curved meshes")]
struct Cli {
    /// Log progress (repeat for more detail); RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated mesh as JSON.
    GenerateMesh(GenerateArgs),
    /// Replace a curved mesh by a refined bilinear one.
    Straighten {
        mesh: PathBuf,
        /// Sub-elements per element edge.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-ordinate cycle structure and lagged edges for every weighting.
    GraphInfo {
        #[command(flatten)]
        run: RunArgs,
        /// Also write one DOT file per ordinate for the configured weighting.
        #[arg(long)]
        dot: bool,
    },
    /// Source iteration with transport sweeps.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Also run the direct global solve and report both histories.
        #[arg(long)]
        compare_oracle: bool,
    },
    /// Manufactured-solution error table over a family of meshes.
    Mms {
        #[arg(required = true)]
        meshes: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Uniform,
    Annulus,
    Distorted,
    Vortex,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: MeshKind,
    #[arg(long, default_value_t = 4)]
    nx: usize,
    #[arg(long, default_value_t = 4)]
    ny: usize,
    /// Geometry order r.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Displacement amplitude (distorted and vortex).
    #[arg(long, default_value_t = 0.018)]
    amplitude: f64,
    /// Rectangle `x0,x1,y0,y1` (uniform, distorted and vortex).
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.0, 1.0, 0.0, 1.0])]
    domain: Vec<f64>,
    /// Inner annulus radius.
    #[arg(long, default_value_t = 0.4)]
    r1: f64,
    /// Outer annulus radius.
    #[arg(long, default_value_t = 0.45)]
    r2: f64,
    /// Radius of the interface between regions 1 and 2 (default: midway).
    #[arg(long)]
    interface_radius: Option<f64>,
    #[arg(long, default_value_t = 0.6)]
    half_width: f64,
    /// Angular segments of the annulus, a multiple of 8.
    #[arg(long, default_value_t = 16)]
    segments: usize,
    /// Radial layers in regions 1, 2 and 3.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1, 1, 2])]
    layers: Vec<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

/// Flags mirroring [`RunConfig`]; keys present in `--config` win over them.
#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; its keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// DG order s.
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, value_enum, default_value_t = AngularSet::S4)]
    angular: AngularSet,
    /// Total cross section of regions without an entry in --region.
    #[arg(long, default_value_t = 2.0)]
    sigma_t: f64,
    /// Scattering cross section of regions without an entry in --region.
    #[arg(long, default_value_t = 1.0)]
    sigma_s: f64,
    /// Per-region cross sections `region:sigma_t:sigma_s` (repeatable).
    #[arg(long = "region", value_name = "R:ST:SS")]
    regions: Vec<String>,
    #[arg(long, value_enum, default_value_t = SourceKind::Constant)]
    source: SourceKind,
    /// Volume source of the constant preset.
    #[arg(long, default_value_t = 1.0)]
    volume_source: f64,
    /// Incident flux of the constant preset.
    #[arg(long, default_value_t = 1.0)]
    inflow: f64,
    #[arg(long, default_value = "face")]
    weighting: Weighting,
    #[arg(long, default_value_t = 1e-14)]
    tolerance: f64,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Largest cycle component ordered exactly (at most 20).
    #[arg(long, default_value_t = 10)]
    exact_threshold: usize,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Constant,
    TriplePoint,
    Mms,
}

fn parse_region(s: &str) -> Result<(i32, Material<f64>)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("--region expects region:sigma_t:sigma_s, got '{s}'");
    }
    let region = parts[0].parse().with_context(|| format!("bad region id in '{s}'"))?;
    let st = parts[1].parse().with_context(|| format!("bad sigma_t in '{s}'"))?;
    let ss = parts[2].parse().with_context(|| format!("bad sigma_s in '{s}'"))?;
    Ok((region, Material::new(st, ss)))
}

impl RunArgs {
    fn resolve(&self, compare_oracle: bool) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            mesh: self.mesh.clone().map(|path| MeshSpec::File { path }),
            order: self.order,
            angular: self.angular,
            source: match self.source {
                SourceKind::Constant => SourceSpec::Constant {
                    volume: self.volume_source,
                    inflow: self.inflow,
                },
                SourceKind::TriplePoint => SourceSpec::TriplePoint {},
                SourceKind::Mms => SourceSpec::Mms {},
            },
            weighting: self.weighting,
            output_dir: self.output_dir.clone(),
            ..RunConfig::default()
        };
        cfg.cross_sections.default = Some(Material::new(self.sigma_t, self.sigma_s));
        for r in &self.regions {
            let (id, m) = parse_region(r)?;
            cfg.cross_sections.regions.insert(id, m);
        }
        cfg.solver.tolerance = self.tolerance;
        cfg.solver.max_iterations = self.max_iterations;
        cfg.solver.exact_threshold = self.exact_threshold;
        cfg.solver.compare_oracle = compare_oracle;
        match &self.config {
            Some(path) => cfg.merged_with_file(path),
            None => Ok(cfg),
        }
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let domain = Rect::new(args.domain[0], args.domain[1], args.domain[2], args.domain[3]);
    let mesh: Mesh = match args.kind {
        MeshKind::Uniform => generate_uniform(args.nx, args.ny, args.order, domain)?,
        MeshKind::Distorted => generate_distorted(args.nx, args.ny, args.order, args.amplitude, domain)?,
        MeshKind::Vortex => generate_vortex(args.nx, args.ny, args.order, args.amplitude, domain)?,
        MeshKind::Annulus => generate_annulus_in_square(&AnnulusParams {
            inner_radius: args.r1,
            outer_radius: args.r2,
            interface_radius: args.interface_radius,
            half_width: args.half_width,
            segments: args.segments,
            layers: [args.layers[0], args.layers[1], args.layers[2]],
            order: args.order,
        })?,
    };
    commands::write_mesh(&mesh, &args.output)
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("HOSWEEP_THREADS") {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("HOSWEEP_THREADS must be a positive integer, got '{value}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Status> {
    configure_threads()?;
    let (run, compare_oracle) = match &cli.command {
        Command::GraphInfo { run, .. } | Command::Mms { run, .. } => (Some(run), false),
        Command::Solve { run, compare_oracle } => (Some(run), *compare_oracle),
        _ => (None, false),
    };
    let cfg = run.map(|r| r.resolve(compare_oracle)).transpose()?;
    if let (Some(r), Some(cfg)) = (run, &cfg) {
        if r.print_config {
            println!("{}", cfg.to_json());
            return Ok(Status::Done);
        }
    }
    match (cli.command, cfg) {
        (Command::GenerateMesh(args), _) => generate(&args).map(|_| Status::Done),
        (Command::Straighten { mesh, levels, output }, _) => {
            commands::straighten_mesh(&mesh, levels, &output).map(|_| Status::Done)
        }
        (Command::GraphInfo { dot, .. }, Some(cfg)) => commands::graph_info(&cfg, dot).map(|_| Status::Done),
        (Command::Solve { .. }, Some(cfg)) => commands::solve(&cfg),
        (Command::Mms { meshes, .. }, Some(cfg)) => commands::mms(&cfg, &meshes),
        _ => unreachable!("run configuration resolved for every run command"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
