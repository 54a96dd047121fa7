//! Multi-chart meshes of closed 2-manifolds.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{CellShape, Construction};
use crate::exterior::AffineMap;
use crate::geometry::{gauss_legendre, CellGeometry, CellMap, ChartMetric, GeometryError, RefDomain};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("unknown {dim}-cell {id}")]
    UnknownCell { dim: usize, id: usize },
    #[error("unknown chart {0}")]
    UnknownChart(usize),
    #[error("edge {0} does not lie on an interface between the requested charts")]
    NotAnInterface(usize),
    #[error("no transition between charts {0} and {1}")]
    NoTransition(usize, usize),
    #[error("invalid construction: {0}")]
    InvalidConstruction(String),
    #[error("unsupported mesh file format {0}")]
    Format(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Sphere,
    Torus,
    Custom,
}

impl Manifold {
    pub fn euler_characteristic(self) -> Option<i64> {
        match self {
            Manifold::Sphere => Some(2),
            Manifold::Torus => Some(0),
            Manifold::Custom => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pole {
    North,
    South,
}

/// A chart of the atlas and its metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartSpec {
    /// Stereographic hemisphere chart, metric `4/(1+X²+Y²)² (dX² + dY²)`.
    Stereographic { pole: Pole },
    /// Flat unit torus, coordinates in the window `[origin, origin + 1)²`.
    PeriodicFlat { origin: [f64; 2] },
    /// Euclidean plane.
    Plane,
}

impl ChartSpec {
    /// Orientation of the chart relative to the manifold.
    pub fn orientation(&self) -> i8 {
        match self {
            ChartSpec::Stereographic { pole: Pole::South } => -1,
            _ => 1,
        }
    }
}

/// Conformal factor `λ = 4/(1+ρ²)²` of the stereographic metric.
pub fn stereographic_lambda(x: &[f64]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    4.0 / ((1.0 + r2) * (1.0 + r2))
}

impl ChartMetric for ChartSpec {
    fn gamma(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            ChartSpec::Stereographic { .. } => DMatrix::identity(2, 2) * stereographic_lambda(x),
            _ => DMatrix::identity(2, 2),
        }
    }
}

/// Map chart coordinates of `from` to chart `to`. For periodic charts the
/// translate closest to `near` is returned, or the one in the target window.
pub fn transition(charts: &[ChartSpec], from: usize, to: usize, x: &[f64], near: Option<&[f64]>) -> Result<Vec<f64>, MeshError> {
    let cf = charts.get(from).ok_or(MeshError::UnknownChart(from))?;
    let ct = charts.get(to).ok_or(MeshError::UnknownChart(to))?;
    match (cf, ct) {
        (ChartSpec::PeriodicFlat { .. }, ChartSpec::PeriodicFlat { .. }) if from == to && near.is_none() => Ok(x.to_vec()),
        _ if from == to && !matches!(cf, ChartSpec::PeriodicFlat { .. }) => Ok(x.to_vec()),
        (ChartSpec::Stereographic { pole: a }, ChartSpec::Stereographic { pole: b }) if a != b => {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Ok(vec![x[0] / r2, x[1] / r2])
        }
        (ChartSpec::Stereographic { .. }, ChartSpec::Stereographic { .. }) => Ok(x.to_vec()),
        (ChartSpec::PeriodicFlat { .. }, ChartSpec::PeriodicFlat { origin }) => Ok((0..2)
            .map(|i| match near {
                Some(n) => x[i] + (n[i] - x[i]).round(),
                None => origin[i] + (x[i] - origin[i]).rem_euclid(1.0),
            })
            .collect()),
        _ => Err(MeshError::NoTransition(from, to)),
    }
}

/// A cell: construction, chart and orientation relative to the manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDescriptor {
    #[serde(flatten)]
    pub construction: Construction,
    pub chart: usize,
    pub orientation: i8,
}

impl CellDescriptor {
    pub fn dim(&self) -> usize {
        self.construction.dim()
    }
}

/// Boundary incidence: subcell, relative orientation, trace map into the
/// reference coordinates of the parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incidence {
    pub sub: usize,
    pub sign: i8,
    pub map: AffineMap<f64>,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub manifold: Manifold,
    pub charts: Vec<ChartSpec>,
    pub cells: [Vec<CellDescriptor>; 3],
    /// `boundary[1]`: edge → vertices; `boundary[2]`: face → edges.
    pub boundary: [Vec<Vec<Incidence>>; 3],
    /// Face → vertices (sign unused, +1).
    pub face_vertices: Vec<Vec<Incidence>>,
    shapes: [Vec<Arc<CellShape>>; 3],
}

#[derive(Serialize, Deserialize)]
struct MeshCells {
    vertices: Vec<CellDescriptor>,
    edges: Vec<CellDescriptor>,
    faces: Vec<CellDescriptor>,
}

#[derive(Serialize, Deserialize)]
struct MeshIncidence {
    edges: Vec<Vec<Incidence>>,
    faces: Vec<Vec<Incidence>>,
    face_vertices: Vec<Vec<Incidence>>,
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    format: u32,
    manifold: Manifold,
    charts: Vec<ChartSpec>,
    cells: MeshCells,
    incidence: MeshIncidence,
}

impl Mesh {
    pub fn new(
        manifold: Manifold,
        charts: Vec<ChartSpec>,
        cells: [Vec<CellDescriptor>; 3],
        boundary: [Vec<Vec<Incidence>>; 3],
        face_vertices: Vec<Vec<Incidence>>,
    ) -> Self {
        let shapes = [0, 1, 2].map(|d| cells[d].iter().map(|c| Arc::new(c.construction.shape())).collect());
        Mesh {
            manifold,
            charts,
            cells,
            boundary,
            face_vertices,
            shapes,
        }
    }

    pub fn n_cells(&self, d: usize) -> usize {
        self.cells.get(d).map_or(0, |c| c.len())
    }

    pub fn cell(&self, d: usize, i: usize) -> Result<&CellDescriptor, MeshError> {
        self.cells
            .get(d)
            .and_then(|c| c.get(i))
            .ok_or(MeshError::UnknownCell { dim: d, id: i })
    }

    pub fn shape(&self, d: usize, i: usize) -> &Arc<CellShape> {
        &self.shapes[d][i]
    }

    /// Ordered boundary chain of a cell.
    pub fn boundary_with_orientation(&self, d: usize, i: usize) -> Result<&[Incidence], MeshError> {
        self.cell(d, i)?;
        Ok(self.boundary[d].get(i).map_or(&[][..], |v| v.as_slice()))
    }

    pub fn geometry(&self, d: usize, i: usize) -> CellGeometry {
        let c = &self.cells[d][i];
        let shape = self.shapes[d][i].clone();
        CellGeometry {
            domain: shape.ref_domain(),
            map: shape,
            metric: Arc::new(self.charts[c.chart].clone()),
            chart: c.chart,
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_cells(0) as i64 - self.n_cells(1) as i64 + self.n_cells(2) as i64
    }

    /// Chart coordinates of a point of cell `(d, i)` in chart `to`, the
    /// periodic translate chosen near `near`.
    pub fn to_chart(&self, d: usize, i: usize, x: &[f64], to: usize, near: Option<&[f64]>) -> Result<Vec<f64>, MeshError> {
        transition(&self.charts, self.cells[d][i].chart, to, x, near)
    }

    /// Faces incident to each edge.
    pub fn edge_faces(&self) -> Vec<Vec<(usize, i8)>> {
        let mut out = vec![Vec::new(); self.n_cells(1)];
        for (f, inc) in self.boundary[2].iter().enumerate() {
            for i in inc {
                out[i.sub].push((f, i.sign));
            }
        }
        out
    }

    /// Evaluator of an interface edge's points from chart `from` into chart `to`.
    pub fn chart_transition_edge(&self, edge: usize, from: usize, to: usize) -> Result<impl Fn(&[f64]) -> Vec<f64> + '_, MeshError> {
        let e = self.cell(1, edge)?;
        let mut charts: Vec<usize> = vec![e.chart];
        for (f, inc) in self.boundary[2].iter().enumerate() {
            if inc.iter().any(|i| i.sub == edge) {
                charts.push(self.cells[2][f].chart);
            }
        }
        let interface = charts.iter().any(|c| *c != e.chart);
        if !interface || !charts.contains(&from) || !charts.contains(&to) {
            return Err(MeshError::NotAnInterface(edge));
        }
        let mid = self.shapes[1][edge].eval(&self.shapes[1][edge].ref_domain().center());
        let anchor_from = transition(&self.charts, e.chart, from, &mid, None)?;
        let anchor_to = transition(&self.charts, from, to, &anchor_from, None)?;
        Ok(move |x: &[f64]| transition(&self.charts, from, to, x, Some(&anchor_to)).unwrap_or_default())
    }

    /// Characteristic size `|f|^{1/d}` of a cell.
    pub fn cell_size(&self, d: usize, i: usize) -> Result<f64, MeshError> {
        if d == 0 {
            return Ok(1.0);
        }
        Ok(self.geometry(d, i).quadrature(10)?.size())
    }

    /// Largest face size.
    pub fn h_max(&self) -> Result<f64, MeshError> {
        (0..self.n_cells(2)).try_fold(0.0_f64, |m, f| Ok(m.max(self.cell_size(2, f)?)))
    }

    pub fn census(&self) -> Census {
        self.census_where(|_| true)
    }

    /// Census of the faces stored in one chart.
    pub fn chart_census(&self, chart: usize) -> Census {
        self.census_where(|f| f.chart == chart)
    }

    fn census_where(&self, keep: impl Fn(&CellDescriptor) -> bool) -> Census {
        let mut c = Census::default();
        for f in self.cells[2].iter().filter(|f| keep(f)) {
            match &f.construction {
                Construction::FlatPolygon { vertices } => match vertices.len() {
                    3 => c.triangles += 1,
                    4 => c.quads += 1,
                    5 => c.pentagons += 1,
                    _ => c.other += 1,
                },
                Construction::ConeSection(_) => c.boundary_cells += 1,
                _ => c.other += 1,
            }
        }
        c
    }

    pub fn to_json(&self) -> Result<String, MeshError> {
        let [v, e, f] = self.cells.clone();
        let file = MeshFile {
            format: 1,
            manifold: self.manifold,
            charts: self.charts.clone(),
            cells: MeshCells {
                vertices: v,
                edges: e,
                faces: f,
            },
            incidence: MeshIncidence {
                edges: self.boundary[1].clone(),
                faces: self.boundary[2].clone(),
                face_vertices: self.face_vertices.clone(),
            },
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self, MeshError> {
        let file: MeshFile = serde_json::from_str(s)?;
        if file.format != 1 {
            return Err(MeshError::Format(file.format));
        }
        let nv = file.cells.vertices.len();
        Ok(Mesh::new(
            file.manifold,
            file.charts,
            [file.cells.vertices, file.cells.edges, file.cells.faces],
            [vec![Vec::new(); nv], file.incidence.edges, file.incidence.faces],
            file.incidence.face_vertices,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        Mesh::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self, tolerance: f64) -> ValidationReport {
        validate_mesh(self, tolerance)
    }
}

/// Face counts by shape for one mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Census {
    pub boundary_cells: usize,
    pub triangles: usize,
    pub quads: usize,
    pub pentagons: usize,
    pub other: usize,
}

/// Incremental construction with trace maps computed from the geometry.
pub struct MeshBuilder {
    manifold: Manifold,
    charts: Vec<ChartSpec>,
    cells: [Vec<CellDescriptor>; 3],
    shapes: [Vec<CellShape>; 3],
    edge_vertices: Vec<Vec<Incidence>>,
    face_edges: Vec<Vec<Incidence>>,
    face_vertices: Vec<Vec<Incidence>>,
}

impl MeshBuilder {
    pub fn new(manifold: Manifold, charts: Vec<ChartSpec>) -> Self {
        MeshBuilder {
            manifold,
            charts,
            cells: Default::default(),
            shapes: Default::default(),
            edge_vertices: Vec::new(),
            face_edges: Vec::new(),
            face_vertices: Vec::new(),
        }
    }

    fn push(&mut self, construction: Construction, chart: usize) -> Result<usize, MeshError> {
        let spec = self.charts.get(chart).ok_or(MeshError::UnknownChart(chart))?;
        let d = construction.dim();
        let shape = construction.shape();
        let orientation = shape.chart_orientation() * spec.orientation();
        self.cells[d].push(CellDescriptor {
            construction,
            chart,
            orientation,
        });
        self.shapes[d].push(shape);
        Ok(self.cells[d].len() - 1)
    }

    pub fn add_vertex(&mut self, point: [f64; 2], chart: usize) -> Result<usize, MeshError> {
        self.push(Construction::Vertex { point }, chart)
    }

    fn point_in(&self, d: usize, i: usize, u: &[f64], chart: usize, near: &[f64]) -> Result<Vec<f64>, MeshError> {
        let x = self.shapes[d][i].eval(u);
        transition(&self.charts, self.cells[d][i].chart, chart, &x, Some(near))
    }

    /// Add an edge joining two existing vertices.
    pub fn add_edge(&mut self, construction: Construction, chart: usize, vertices: [usize; 2]) -> Result<usize, MeshError> {
        if construction.dim() != 1 {
            return Err(MeshError::InvalidConstruction("edge construction must be 1-dimensional".into()));
        }
        let e = self.push(construction, chart)?;
        let shape = &self.shapes[1][e];
        let RefDomain::Interval { a, b } = shape.ref_domain() else {
            unreachable!()
        };
        let near = shape.eval(&[0.5 * (a + b)]);
        let mut inc = Vec::new();
        for v in vertices {
            let x = self.point_in(0, v, &[], chart, &near)?;
            let t = shape.inverse(&x)[0];
            let sign = if (t - a).abs() < (t - b).abs() { -1 } else { 1 };
            inc.push(Incidence {
                sub: v,
                sign,
                map: AffineMap::new(vec![vec![]], vec![t]),
            });
        }
        if inc[0].sign == inc[1].sign {
            return Err(MeshError::InvalidConstruction(format!("edge {e} endpoints do not match its vertices")));
        }
        self.edge_vertices.push(inc);
        Ok(e)
    }

    /// Add a face bounded by existing edges.
    pub fn add_face(&mut self, construction: Construction, chart: usize, edges: &[usize]) -> Result<usize, MeshError> {
        if construction.dim() != 2 {
            return Err(MeshError::InvalidConstruction("face construction must be 2-dimensional".into()));
        }
        let f = self.push(construction, chart)?;
        let shape = self.shapes[2][f].clone();
        let center = shape.ref_domain().center();
        let near = shape.eval(&center);
        let mut inc = Vec::new();
        let mut vinc: Vec<Incidence> = Vec::new();
        for &e in edges {
            let RefDomain::Interval { a, b } = self.shapes[1][e].ref_domain() else {
                unreachable!()
            };
            // fit from two interior points: corners can be singular for J_f
            let (s0, s1) = (a + 0.25 * (b - a), a + 0.75 * (b - a));
            let u0 = shape.inverse(&self.point_in(1, e, &[s0], chart, &near)?);
            let u1 = shape.inverse(&self.point_in(1, e, &[s1], chart, &near)?);
            let slope = [(u1[0] - u0[0]) / (s1 - s0), (u1[1] - u0[1]) / (s1 - s0)];
            let offset = vec![u0[0] - slope[0] * s0, u0[1] - slope[1] * s0];
            let map = AffineMap::new(vec![vec![slope[0]], vec![slope[1]]], offset);
            let mid = map.apply(&[0.5 * (a + b)]);
            let n = [mid[0] - center[0], mid[1] - center[1]];
            let sign = if n[0] * slope[1] - n[1] * slope[0] > 0.0 { 1 } else { -1 };
            for vi in &self.edge_vertices[e] {
                if vinc.iter().any(|x| x.sub == vi.sub) {
                    continue;
                }
                vinc.push(Incidence {
                    sub: vi.sub,
                    sign: 1,
                    map: AffineMap::constant(map.apply(&vi.map.offset)),
                });
            }
            inc.push(Incidence { sub: e, sign, map });
        }
        self.face_edges.push(inc);
        self.face_vertices.push(vinc);
        Ok(f)
    }

    pub fn n_cells(&self, d: usize) -> usize {
        self.cells[d].len()
    }

    pub fn build(self) -> Mesh {
        let nv = self.cells[0].len();
        Mesh::new(
            self.manifold,
            self.charts,
            self.cells,
            [vec![Vec::new(); nv], self.edge_vertices, self.face_edges],
            self.face_vertices,
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub euler_characteristic: i64,
    pub max_affine_residual: f64,
    pub max_size_ratio: f64,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Least-squares affine fit `u ≈ A s + b` for scalar `s`; returns map and max residual.
fn fit_affine_1d(s: &[f64], u: &[Vec<f64>]) -> (AffineMap<f64>, f64) {
    let n = s.len();
    let m = DMatrix::from_fn(n, 2, |i, j| if j == 0 { s[i] } else { 1.0 });
    let mut matrix = vec![vec![0.0]; 2];
    let mut offset = vec![0.0; 2];
    let mut res: f64 = 0.0;
    let svd = m.clone().svd(true, true);
    for k in 0..2 {
        let rhs = DVector::from_fn(n, |i, _| u[i][k]);
        let c = svd.solve(&rhs, 1e-14).unwrap_or_else(|_| DVector::zeros(2));
        matrix[k][0] = c[0];
        offset[k] = c[1];
        let r = &m * &c - rhs;
        res = res.max(r.amax());
    }
    (AffineMap::new(matrix, offset), res)
}

pub fn validate_mesh(mesh: &Mesh, tol: f64) -> ValidationReport {
    let mut failures = Vec::new();
    let mut checks = Vec::new();
    let mut record = |name: &str, fails: Vec<String>, detail: String, failures: &mut Vec<String>| {
        checks.push(CheckResult {
            name: name.to_string(),
            passed: fails.is_empty(),
            detail: if fails.is_empty() { detail } else { fails[0].clone() },
        });
        failures.extend(fails);
    };

    // (a) combinatorics
    let mut comb = Vec::new();
    for (e, inc) in mesh.boundary[1].iter().enumerate() {
        if inc.len() != 2 || inc[0].sub == inc[1].sub || inc[0].sign == inc[1].sign {
            comb.push(format!("edge {e}: malformed vertex incidence"));
        }
        if inc.iter().any(|i| i.sub >= mesh.n_cells(0)) {
            comb.push(format!("edge {e}: unknown vertex"));
        }
    }
    let mut vertex_used = vec![false; mesh.n_cells(0)];
    for (f, inc) in mesh.boundary[2].iter().enumerate() {
        if inc.len() < 2 || inc.iter().any(|i| i.sub >= mesh.n_cells(1)) {
            comb.push(format!("face {f}: malformed edge list"));
            continue;
        }
        let mut count: HashMap<usize, usize> = HashMap::new();
        for i in inc {
            for v in &mesh.boundary[1][i.sub] {
                *count.entry(v.sub).or_default() += 1;
                if v.sub < vertex_used.len() {
                    vertex_used[v.sub] = true;
                }
            }
        }
        if count.values().any(|c| *c != 2) {
            comb.push(format!("face {f}: boundary is not a closed cycle"));
        }
    }
    if let Some(v) = vertex_used.iter().position(|u| !u) {
        comb.push(format!("vertex {v} belongs to no face"));
    }
    for (e, faces) in mesh.edge_faces().iter().enumerate() {
        if faces.len() == 1 && mesh.manifold == Manifold::Custom {
            continue;
        }
        if faces.len() != 2 {
            comb.push(format!("edge {e}: {} incident faces", faces.len()));
            continue;
        }
        let o: Vec<i32> = faces
            .iter()
            .map(|(f, s)| *s as i32 * mesh.cells[2][*f].orientation as i32)
            .collect();
        if o[0] != -o[1] {
            comb.push(format!("edge {e}: faces {} and {} induce the same orientation", faces[0].0, faces[1].0));
        }
    }
    let chi = mesh.euler_characteristic();
    if let Some(target) = mesh.manifold.euler_characteristic() {
        if chi != target {
            comb.push(format!("Euler characteristic {chi}, expected {target}"));
        }
    }
    record("combinatorics", comb, format!("chi = {chi}"), &mut failures);

    // (b) ∂∂ = 0
    let mut dd = Vec::new();
    for (f, inc) in mesh.boundary[2].iter().enumerate() {
        let mut acc: HashMap<usize, i32> = HashMap::new();
        for i in inc {
            for v in mesh.boundary[1].get(i.sub).map_or(&[][..], |x| x.as_slice()) {
                *acc.entry(v.sub).or_default() += i.sign as i32 * v.sign as i32;
            }
        }
        if let Some((v, s)) = acc.iter().find(|(_, s)| **s != 0) {
            dd.push(format!("face {f}: boundary of boundary has coefficient {s} at vertex {v}"));
        }
    }
    record("boundary_of_boundary", dd, "zero".into(), &mut failures);

    // (c) affine compatibility
    let mut aff = Vec::new();
    let mut max_res: f64 = 0.0;
    let (gl, _) = gauss_legendre(8);
    for (f, inc) in mesh.boundary[2].iter().enumerate() {
        let fs = mesh.shape(2, f);
        let fchart = mesh.cells[2][f].chart;
        let near = fs.eval(&fs.ref_domain().center());
        for i in inc {
            let es = mesh.shape(1, i.sub);
            let RefDomain::Interval { a, b } = es.ref_domain() else {
                continue;
            };
            let s: Vec<f64> = gl.iter().map(|g| a + g * (b - a)).collect();
            let mut u = Vec::new();
            for si in &s {
                let x = es.eval(&[*si]);
                match mesh.to_chart(1, i.sub, &x, fchart, Some(&near)) {
                    Ok(y) => u.push(fs.inverse(&y)),
                    Err(err) => aff.push(format!("face {f}, edge {}: {err}", i.sub)),
                }
            }
            if u.len() != s.len() {
                continue;
            }
            let (fit, res) = fit_affine_1d(&s, &u);
            let diff = fit.max_abs_diff(&i.map);
            let worst = res.max(diff);
            max_res = max_res.max(worst);
            if !(worst < tol) {
                aff.push(format!("face {f}, edge {}: affine residual {res:.3e}, stored map deviation {diff:.3e}", i.sub));
            }
        }
        for vi in &mesh.face_vertices[f] {
            let x = mesh.shape(0, vi.sub).eval(&[]);
            let Ok(y) = mesh.to_chart(0, vi.sub, &x, fchart, Some(&near)) else {
                aff.push(format!("face {f}, vertex {}: no chart transition", vi.sub));
                continue;
            };
            let z = fs.eval(&vi.map.offset);
            let err = (z[0] - y[0]).abs().max((z[1] - y[1]).abs());
            max_res = max_res.max(err);
            if !(err < tol) {
                aff.push(format!("face {f}, vertex {}: embedding mismatch {err:.3e}", vi.sub));
            }
            // composition through an edge
            for ie in inc {
                if let Some(ev) = mesh.boundary[1][ie.sub].iter().find(|x| x.sub == vi.sub) {
                    let c = ie.map.apply(&ev.map.offset);
                    let err = (c[0] - vi.map.offset[0]).abs().max((c[1] - vi.map.offset[1]).abs());
                    if !(err < tol) {
                        aff.push(format!("face {f}, edge {}, vertex {}: composed trace mismatch {err:.3e}", ie.sub, vi.sub));
                    }
                }
            }
        }
    }
    for (e, inc) in mesh.boundary[1].iter().enumerate() {
        let es = mesh.shape(1, e);
        let near = es.eval(&es.ref_domain().center());
        for vi in inc {
            let x = mesh.shape(0, vi.sub).eval(&[]);
            let Ok(y) = mesh.to_chart(0, vi.sub, &x, mesh.cells[1][e].chart, Some(&near)) else {
                aff.push(format!("edge {e}, vertex {}: no chart transition", vi.sub));
                continue;
            };
            let z = es.eval(&vi.map.offset);
            let err = (z[0] - y[0]).abs().max((z[1] - y[1]).abs());
            max_res = max_res.max(err);
            if !(err < tol) {
                aff.push(format!("edge {e}, vertex {}: embedding mismatch {err:.3e}", vi.sub));
            }
        }
    }
    record("affine_compatibility", aff, format!("max residual {max_res:.3e}"), &mut failures);

    // (d) geometric sanity
    let mut geo = Vec::new();
    let mut sizes = [Vec::new(), Vec::new()];
    for d in 1..=2 {
        for i in 0..mesh.n_cells(d) {
            let g = mesh.geometry(d, i);
            match g.quadrature(8) {
                Ok(q) => {
                    sizes[d - 1].push(q.size());
                    if d == 2 {
                        let s0 = mesh.cells[2][i].orientation as f64 * mesh.charts[mesh.cells[2][i].chart].orientation() as f64;
                        if q.nodes.iter().any(|u| g.map.jacobian(u).determinant() * s0 <= 0.0) {
                            geo.push(format!("face {i}: parametrization changes orientation"));
                        }
                    }
                }
                Err(err) => geo.push(format!("{d}-cell {i}: {err}")),
            }
        }
    }
    let mut ratio: f64 = 1.0;
    if sizes[0].len() == mesh.n_cells(1) && sizes[1].len() == mesh.n_cells(2) {
        for (f, inc) in mesh.boundary[2].iter().enumerate() {
            for i in inc {
                let (hf, he) = (sizes[1][f], sizes[0][i.sub]);
                ratio = ratio.max(hf / he).max(he / hf);
            }
        }
    }
    if ratio >= 10.0 {
        geo.push(format!("neighbouring size ratio {ratio:.3}"));
    }
    record("geometry", geo, format!("size ratio {ratio:.3}"), &mut failures);

    ValidationReport {
        checks,
        euler_characteristic: chi,
        max_affine_residual: max_res,
        max_size_ratio: ratio,
        failures,
    }
}
