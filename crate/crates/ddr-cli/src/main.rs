//! `ddr`: mesh generation, verification and Maxwell runs on the DDR complex.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use manifold_ddr::maxwell::{report_csv, CaseId, Discretization, TimeScheme};
use thiserror::Error;

use manifest::{Flags, ManifestFile, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Sphere,
    Torus,
}

#[derive(Parser)]
#[command(name = "ddr", version, about = "Discrete de Rham complex on the sphere and the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh and write it as JSON.
    Meshgen {
        #[arg(long)]
        manifold: Shape,
        /// Sphere boundary-layer width.
        #[arg(long)]
        rs: Option<f64>,
        /// Sphere boundary segment count (alternative to --rs).
        #[arg(long, conflicts_with = "rs")]
        segments: Option<usize>,
        /// Torus grid size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Validate meshes and check the complex, commutation and cohomology.
    Verify(RunArgs),
    /// Space-time errors and fitted rates over a mesh sequence.
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Generate this many levels of the standard sequence instead of --mesh.
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long, requires = "levels")]
        manifold: Option<Shape>,
        /// Prefix for gnuplot `.dat` files, one per degree.
        #[arg(long)]
        dat: Option<PathBuf>,
    },
    /// A single Maxwell run.
    Maxwell {
        #[command(flatten)]
        run: RunArgs,
        /// Write `t energy constraint` per step.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Key/value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh: Vec<PathBuf>,
    #[arg(short = 'r', long = "degree", value_delimiter = ',')]
    degree: Vec<u32>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    quad_degree: Option<usize>,
    #[arg(long)]
    case: Option<CaseId>,
    #[arg(long)]
    scheme: Option<TimeScheme>,
    /// Current density pairing: `interpolate` or `load`.
    #[arg(long)]
    source: Option<Discretization>,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn manifest(self, default_degrees: &[u32]) -> Result<RunManifest, CliError> {
        let file = match &self.config {
            Some(p) => ManifestFile::load(p)?,
            None => ManifestFile::default(),
        };
        let flags = Flags {
            mesh: self.mesh,
            degrees: self.degree,
            dt: self.dt,
            tmax: self.tmax,
            quad_degree: self.quad_degree,
            case: self.case,
            scheme: self.scheme,
            source: self.source,
            output: self.output,
            seed: self.seed,
        };
        RunManifest::merge(flags, file, default_degrees)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DDR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("DDR_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Meshgen { manifold, rs, segments, n, output } => {
            let mesh = commands::meshgen(manifold, rs, segments, n)?;
            let c = mesh.census();
            eprintln!(
                "{} vertices, {} edges, {} faces (boundary {}, triangles {}, quads {}, pentagons {}), chi {}",
                mesh.n_cells(0),
                mesh.n_cells(1),
                mesh.n_cells(2),
                c.boundary_cells,
                c.triangles,
                c.quads,
                c.pentagons,
                mesh.euler_characteristic()
            );
            let json = mesh.to_json().map_err(|e| CliError::Failed(e.to_string()))?;
            commands::write_output(output.as_ref(), &json)
        }
        Command::Verify(args) => {
            let m = args.manifest(&[0, 1])?;
            if m.meshes.is_empty() {
                return Err(CliError::Usage("verify needs --mesh".into()));
            }
            let mut all = true;
            let mut text = String::new();
            for path in &m.meshes {
                let mesh = commands::load_mesh(path)?;
                for c in commands::verify(&mesh, &m)? {
                    all &= c.passed;
                    text.push_str(&format!("{} {}: {} ({})\n", path.display(), c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail));
                }
            }
            commands::write_output(m.output.as_ref(), &text)?;
            if all {
                Ok(())
            } else {
                Err(CliError::Failed("verification failed".into()))
            }
        }
        Command::Convergence { run, levels, manifold, dat } => {
            let m = run.manifest(&[0, 1])?;
            let meshes = match (levels, manifold) {
                (Some(l), Some(shape)) if m.meshes.is_empty() => commands::sequence(shape, l)?,
                (None, None) if !m.meshes.is_empty() => m.meshes.iter().map(|p| commands::load_mesh(p)).collect::<Result<Vec<_>, _>>()?,
                _ => return Err(CliError::Usage("give either --mesh files or --levels with --manifold".into())),
            };
            let rows = commands::convergence(&meshes, &m)?;
            if let Some(prefix) = dat {
                for &r in &m.degrees {
                    let path = PathBuf::from(format!("{}_r{r}.dat", prefix.display()));
                    commands::write_output(Some(&path), &commands::convergence_dat(&rows, r))?;
                }
            }
            commands::write_output(m.output.as_ref(), &report_csv(&rows))
        }
        Command::Maxwell { run, trace } => {
            let m = run.manifest(&[0])?;
            let path = match m.meshes.as_slice() {
                [p] => p,
                _ => return Err(CliError::Usage("maxwell needs exactly one --mesh".into())),
            };
            let mesh = commands::load_mesh(path)?;
            let (row, tr) = commands::maxwell(&mesh, &m)?;
            if let Some(p) = trace {
                commands::write_output(Some(&p), &commands::trace_dat(&tr))?;
            }
            commands::write_output(m.output.as_ref(), &report_csv(&[row]))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
