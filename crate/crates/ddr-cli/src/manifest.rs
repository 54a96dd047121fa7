//! Run manifest: command-line flags merged over an optional key/value file.

use std::path::{Path, PathBuf};

use manifold_ddr::ddr::MAX_DEGREE;
use manifold_ddr::maxwell::{CaseId, Discretization, RunConfig, TimeScheme};
use serde::Deserialize;

use crate::CliError;

/// Keys accepted in a `--config` file. Every key mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub mesh: Option<Vec<PathBuf>>,
    pub degrees: Option<Vec<u32>>,
    pub dt: Option<f64>,
    pub tmax: Option<f64>,
    pub quad_degree: Option<usize>,
    pub case: Option<String>,
    pub scheme: Option<String>,
    pub source: Option<String>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ManifestFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub meshes: Vec<PathBuf>,
    pub degrees: Vec<u32>,
    pub case: Option<CaseId>,
    pub run: RunConfig,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

/// Flag values as parsed; `None`/empty means "not given".
#[derive(Debug, Default, Clone)]
pub struct Flags {
    pub mesh: Vec<PathBuf>,
    pub degrees: Vec<u32>,
    pub dt: Option<f64>,
    pub tmax: Option<f64>,
    pub quad_degree: Option<usize>,
    pub case: Option<CaseId>,
    pub scheme: Option<TimeScheme>,
    pub source: Option<Discretization>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn parse<T: std::str::FromStr>(key: &str, v: Option<String>) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    v.map(|s| s.parse::<T>().map_err(|e| CliError::Usage(format!("{key}: {e}")))).transpose()
}

fn pick_list<T>(flag: Vec<T>, file: Option<Vec<T>>) -> Vec<T> {
    if flag.is_empty() {
        file.unwrap_or_default()
    } else {
        flag
    }
}

impl RunManifest {
    /// Flags win over file values; `default_degrees` fills an empty list.
    pub fn merge(flags: Flags, file: ManifestFile, default_degrees: &[u32]) -> Result<Self, CliError> {
        let meshes = pick_list(flags.mesh, file.mesh);
        let mut degrees = pick_list(flags.degrees, file.degrees);
        if degrees.is_empty() {
            degrees = default_degrees.to_vec();
        }
        if let Some(r) = degrees.iter().find(|r| **r > MAX_DEGREE) {
            return Err(CliError::Usage(format!("degree {r} outside 0..={MAX_DEGREE}")));
        }
        for m in &meshes {
            if !m.exists() {
                return Err(CliError::Usage(format!("mesh file {} does not exist", m.display())));
            }
        }
        let mut run = RunConfig::new(0);
        run.dt = flags.dt.or(file.dt).unwrap_or(run.dt);
        run.t_end = flags.tmax.or(file.tmax).unwrap_or(run.t_end);
        run.quad_degree = flags.quad_degree.or(file.quad_degree);
        run.scheme = flags.scheme.or(parse("scheme", file.scheme)?).unwrap_or(run.scheme);
        run.source = flags.source.or(parse("source", file.source)?).unwrap_or(run.source);
        run.steps().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(RunManifest {
            meshes,
            degrees,
            case: flags.case.or(parse("case", file.case)?),
            run,
            output: flags.output.or(file.output),
            seed: flags.seed.or(file.seed).unwrap_or(1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: ManifestFile = toml::from_str("dt = 0.01\ntmax = 1.0\ncase = \"torus_c0\"\ndegrees = [0, 1]\nscheme = \"ie\"").unwrap();
        let flags = Flags {
            dt: Some(0.02),
            degrees: vec![2],
            ..Flags::default()
        };
        let m = RunManifest::merge(flags, file, &[0]).unwrap();
        assert_eq!(m.run.dt, 0.02);
        assert_eq!(m.run.t_end, 1.0);
        assert_eq!(m.degrees, vec![2]);
        assert_eq!(m.case, Some(CaseId::TorusC0));
        assert_eq!(m.run.scheme, TimeScheme::ImplicitEuler);
    }

    #[test]
    fn rejects_bad_values() {
        let bad_degree = Flags {
            degrees: vec![5],
            ..Flags::default()
        };
        assert!(matches!(RunManifest::merge(bad_degree, ManifestFile::default(), &[0]), Err(CliError::Usage(_))));
        assert!(toml::from_str::<ManifestFile>("colour = 3").is_err());
        let file: ManifestFile = toml::from_str("case = \"cube\"").unwrap();
        assert!(RunManifest::merge(Flags::default(), file, &[0]).is_err());
        let missing = Flags {
            mesh: vec![PathBuf::from("/nonexistent/mesh.json")],
            ..Flags::default()
        };
        assert!(RunManifest::merge(missing, ManifestFile::default(), &[0]).is_err());
    }
}
