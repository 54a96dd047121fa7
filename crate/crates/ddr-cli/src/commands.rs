use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use manifold_ddr::ddr::{DdrComplex, Sampler};
use manifold_ddr::exterior::AlternatingValue;
use manifold_ddr::maxwell::{run_case, run_many, CaseId, ReportRow, RunTrace};
use manifold_ddr::mesh::{Manifold, Mesh};
use manifold_ddr::meshgen::{gen_sphere, gen_torus, MeshgenError, SphereGenParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifest::RunManifest;
use crate::{CliError, Shape};

pub fn meshgen(shape: Shape, rs: Option<f64>, segments: Option<usize>, n: Option<usize>) -> Result<Mesh, CliError> {
    let generated = match shape {
        Shape::Sphere => {
            let rs = match (rs, segments) {
                (Some(r), None) => r,
                (None, Some(s)) => SphereGenParams::rs_for_segments(s),
                _ => return Err(CliError::Usage("sphere needs exactly one of --rs or --segments".into())),
            };
            gen_sphere(rs)
        }
        Shape::Torus => gen_torus(n.ok_or_else(|| CliError::Usage("torus needs --n".into()))?),
    };
    generated.map_err(|e| match e {
        MeshgenError::Mesh(_) | MeshgenError::Hypothesis(_) => CliError::Failed(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })
}

/// Standard refinement sequence: sphere segment counts `28, 62, 130, …`
/// (halving `r_s`), torus grids `4, 8, 16, …`.
pub fn sequence(shape: Shape, levels: usize) -> Result<Vec<Mesh>, CliError> {
    let mut out = Vec::new();
    let (mut s, mut n) = (28usize, 4usize);
    for _ in 0..levels {
        out.push(match shape {
            Shape::Sphere => meshgen(shape, None, Some(s), None)?,
            Shape::Torus => meshgen(shape, None, None, Some(n))?,
        });
        s = 2 * s + 6;
        n *= 2;
    }
    Ok(out)
}

pub fn load_mesh(path: &Path) -> Result<Mesh, CliError> {
    Mesh::load(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

pub fn write_output(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Failed(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn embed_x(_c: usize, x: &[f64]) -> AlternatingValue {
    AlternatingValue::scalar(2.0 * x[0] / (1.0 + x[0] * x[0] + x[1] * x[1]), 2)
}

fn embed_dx(_c: usize, x: &[f64]) -> AlternatingValue {
    let s = 1.0 + x[0] * x[0] + x[1] * x[1];
    AlternatingValue::new(2, 1, vec![2.0 / s - 4.0 * x[0] * x[0] / (s * s), -4.0 * x[0] * x[1] / (s * s)])
}

fn wave(_c: usize, x: &[f64]) -> AlternatingValue {
    AlternatingValue::scalar((TAU * x[0]).sin() * (TAU * x[1]).cos(), 2)
}

fn dwave(_c: usize, x: &[f64]) -> AlternatingValue {
    let (a, b) = (TAU * x[0], TAU * x[1]);
    AlternatingValue::new(2, 1, vec![TAU * a.cos() * b.cos(), -TAU * a.sin() * b.sin()])
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: String, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn verify(mesh: &Mesh, manifest: &RunManifest) -> Result<Vec<Check>, CliError> {
    let failed = |e: manifold_ddr::ddr::DdrError| CliError::Failed(e.to_string());
    let mut out = Vec::new();
    let report = mesh.validate(1e-10);
    out.push(check("validate".into(), report.passed(), format!("chi {} failures {:?}", report.euler_characteristic, report.failures)));
    if !report.passed() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let forms: Option<(&Sampler, &Sampler)> = match mesh.manifold {
        Manifold::Sphere => Some((&embed_x, &embed_dx)),
        Manifold::Torus => Some((&wave, &dwave)),
        Manifold::Custom => None,
    };
    let expected_betti = match mesh.manifold {
        Manifold::Sphere => Some([1, 0, 1]),
        Manifold::Torus => Some([1, 2, 1]),
        Manifold::Custom => None,
    };
    for &r in &manifest.degrees {
        let cx = match manifest.run.quad_degree {
            Some(q) => DdrComplex::with_quadrature(mesh, r, q),
            None => DdrComplex::new(mesh, r),
        }
        .map_err(failed)?;
        let d0 = cx.global_derivative(0).map_err(failed)?;
        let d1 = cx.global_derivative(1).map_err(failed)?;
        let dd = d1.mul(&d0).map_err(|e| CliError::Failed(e.to_string()))?.max_abs() / (d1.max_abs() * d0.max_abs()).max(f64::MIN_POSITIVE);
        out.push(check(format!("complex r={r}"), dd <= 1e-12, format!("|d1 d0| {dd:.2e}")));
        let x: Vec<Vec<f64>> = (0..3).map(|k| (0..cx.ndofs(k)).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut proj: f64 = 0.0;
        for (k, xk) in x.iter().enumerate() {
            proj = proj.max(cx.projection_residual(k, xk).map_err(failed)?);
        }
        out.push(check(format!("projection r={r}"), proj <= 1e-12, format!("{proj:.2e}")));
        let mut link: f64 = 0.0;
        for k in 1..3 {
            link = link.max(cx.link_residual(k, &x[k - 1]).map_err(failed)?);
        }
        out.push(check(format!("link r={r}"), link <= 1e-12, format!("{link:.2e}")));
        if let Some((f, df)) = forms {
            let hi = DdrComplex::with_quadrature(mesh, r, cx.quad_degree + 8).map_err(failed)?;
            let scale = max_abs(&cx.interpolate(1, df).map_err(failed)?.values).max(f64::MIN_POSITIVE);
            let a = cx.commutation_defect(0, f, df).map_err(failed)?;
            let b = hi.commutation_defect(0, f, df).map_err(failed)?;
            let est = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale;
            let defect = max_abs(&a) / scale;
            out.push(check(
                format!("commutation r={r}"),
                defect <= 10.0 * est + 1e-13,
                format!("defect {defect:.2e}, quadrature estimate {est:.2e}"),
            ));
        }
        let b = cx.betti().map_err(failed)?;
        let gap = b.rank_d0.gap.min(b.rank_d1.gap);
        let ok = gap >= 1e3 && expected_betti.is_none_or(|e| e == b.numbers);
        out.push(check(format!("betti r={r}"), ok, format!("{:?}, gap {gap:.2e}", b.numbers)));
    }
    Ok(out)
}

fn case_for(manifold: Manifold, case: Option<CaseId>) -> Result<CaseId, CliError> {
    match (case, manifold) {
        (Some(c), _) => Ok(c),
        (None, Manifold::Sphere) => Ok(CaseId::SphereSmooth),
        (None, Manifold::Torus) => Ok(CaseId::TorusC0),
        (None, Manifold::Custom) => Err(CliError::Usage("--case is required for this mesh".into())),
    }
}

fn usage_or_failed(e: manifold_ddr::maxwell::MaxwellError) -> CliError {
    use manifold_ddr::maxwell::MaxwellError as M;
    match e {
        M::UnknownChart { .. } | M::TimeStep(_) | M::NotMultiple { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Failed(e.to_string()),
    }
}

pub fn maxwell(mesh: &Mesh, manifest: &RunManifest) -> Result<(ReportRow, RunTrace), CliError> {
    let case = case_for(mesh.manifold, manifest.case)?;
    let r = match manifest.degrees.as_slice() {
        [r] => *r,
        _ => return Err(CliError::Usage("maxwell takes a single degree".into())),
    };
    let cfg = manifold_ddr::maxwell::RunConfig { r, ..manifest.run.clone() };
    run_case(mesh, case, &cfg).map_err(usage_or_failed)
}

pub fn trace_dat(trace: &RunTrace) -> String {
    let mut s = String::from("# t energy constraint\n");
    for i in 0..trace.t.len() {
        let _ = writeln!(s, "{:.9e} {:.17e} {:.6e}", trace.t[i], trace.energy[i], trace.constraint[i]);
    }
    s
}

/// Runs every `(mesh, r)` pair; rows are ordered by degree, then mesh.
pub fn convergence(meshes: &[Mesh], manifest: &RunManifest) -> Result<Vec<ReportRow>, CliError> {
    let first = meshes.first().ok_or_else(|| CliError::Usage("no meshes given".into()))?;
    let case = case_for(first.manifold, manifest.case)?;
    let mut jobs = Vec::new();
    for &r in &manifest.degrees {
        for m in meshes {
            let cfg = manifold_ddr::maxwell::RunConfig { r, ..manifest.run.clone() };
            jobs.push((m, case, cfg));
        }
    }
    run_many(&jobs).into_iter().collect::<Result<Vec<_>, _>>().map_err(usage_or_failed)
}

/// Gnuplot-ready columns `h ndof err_E err_dE err_B` for one degree.
pub fn convergence_dat(rows: &[ReportRow], r: u32) -> String {
    let mut s = String::from("# h ndof err_E err_dE err_B\n");
    for row in rows.iter().filter(|o| o.r == r) {
        let _ = writeln!(s, "{:.6e} {} {:.6e} {:.6e} {:.6e}", row.h, row.ndof, row.err_e, row.err_de, row.err_b);
    }
    s
}
