//! Maxwell equations in 2+1 form on the DDR complex: exact solutions,
//! assembly, Crank–Nicolson and implicit Euler stepping, error and
//! conservation diagnostics.
//!
//! Unknowns are `E ∈ X¹_h` and the density `B′ ∈ X²_h`:
//! `D1 E = −∂_t B′` and `M1 ∂_t E = D1ᵀ M2 B′ − M1 J`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddr::{DdrComplex, DdrError};
use crate::exterior::AlternatingValue;
use crate::mesh::{ChartSpec, Mesh, Pole};
use crate::sparse::{dot, norm2, CsrMatrix, SparseError};

#[derive(Debug, Error)]
pub enum MaxwellError {
    #[error("unknown case '{0}'")]
    UnknownCase(String),
    #[error("unknown time scheme '{0}'")]
    UnknownScheme(String),
    #[error("unknown source treatment '{0}'")]
    UnknownSource(String),
    #[error("case {case} is not defined on chart {chart:?}")]
    UnknownChart { case: CaseId, chart: ChartSpec },
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("final time {t_end} is not close to a multiple of the time step {dt}")]
    NotMultiple { t_end: f64, dt: f64 },
    #[error("solver breakdown: {0}")]
    Solver(String),
    #[error(transparent)]
    Ddr(#[from] DdrError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    TorusC0,
    SphereC0,
    SphereSmooth,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::TorusC0, CaseId::SphereC0, CaseId::SphereSmooth];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::TorusC0 => "torus_c0",
            CaseId::SphereC0 => "sphere_c0",
            CaseId::SphereSmooth => "sphere_smooth",
        }
    }

    pub fn is_vacuum(self) -> bool {
        self == CaseId::SphereSmooth
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = MaxwellError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| MaxwellError::UnknownCase(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    E,
    Bp,
    J,
    Rho,
}

impl Field {
    pub fn degree(self) -> usize {
        match self {
            Field::E | Field::J => 1,
            Field::Bp => 2,
            Field::Rho => 0,
        }
    }
}

fn one_form(a: f64, b: f64) -> AlternatingValue {
    AlternatingValue::new(2, 1, vec![a, b])
}

/// Minimum-image offset in `[−½, ½)`.
fn wrap(d: f64) -> f64 {
    (d + 0.5).rem_euclid(1.0) - 0.5
}

fn torus_eval(field: Field, x: &[f64], t: f64) -> AlternatingValue {
    let (px, py) = (x[0].rem_euclid(1.0), x[1].rem_euclid(1.0));
    let dx = wrap(px - t);
    let dy = wrap(py - 0.5);
    match field {
        Field::Bp => AlternatingValue::top(2.0 + dx * dx + dy * dy, 2),
        Field::E => one_form(0.0, dx * dx),
        Field::J => one_form(2.0 * py - 1.0, 0.0),
        Field::Rho => AlternatingValue::scalar(0.0, 2),
    }
}

fn sphere_smooth_eval(field: Field, x: &[f64], t: f64) -> AlternatingValue {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let lam = 4.0 / ((1.0 + r2) * (1.0 + r2));
    match field {
        Field::Bp => AlternatingValue::top((SQRT_2 * t).cos() * (1.0 - r2) / (1.0 + r2) * lam, 2),
        Field::E => {
            let a = (SQRT_2 * t).sin() / SQRT_2 * lam;
            one_form(-x[1] * a, x[0] * a)
        }
        Field::J => one_form(0.0, 0.0),
        Field::Rho => AlternatingValue::scalar(0.0, 2),
    }
}

/// Piecewise solution: the north expression on the north hemisphere, the
/// south expression on the south one (`s = ±1`).
fn sphere_c0_eval(field: Field, x: &[f64], t: f64, s: f64) -> AlternatingValue {
    let (xx, yy) = (x[0], x[1]);
    let r2 = xx * xx + yy * yy;
    let (c, sn) = (t.cos(), t.sin());
    match field {
        Field::Bp => AlternatingValue::top((r2 - 1.0) * c + s * (r2 + 1.0 - 2.0 * xx * sn), 2),
        Field::E => one_form(
            yy / 4.0 * (2.0 - r2) * sn - s * xx * yy / 2.0 * c,
            xx / 4.0 * (r2 - 2.0) * sn + s * (3.0 * xx * xx + yy * yy - 3.0) / 4.0 * c,
        ),
        Field::J => {
            let p = 1.5 * r2 * r2 * (1.0 + s * c) + r2 * (3.0 + s * 1.25 * c) + 1.5 - s * c;
            let q = (10.0 * xx.powi(4) + 12.0 * xx * xx * yy * yy + 15.0 * xx * xx + 2.0 * yy.powi(4) + 5.0 * yy * yy - 1.0) / 4.0;
            one_form(
                s * (yy * p - xx * yy * (2.0 * r2 + 2.5) * sn),
                s * (-xx * p + q * sn),
            )
        }
        Field::Rho => AlternatingValue::scalar(0.0, 2),
    }
}

/// Closed-form value of a field of a case, in chart coordinates.
pub fn exact_eval(case: CaseId, field: Field, chart: &ChartSpec, x: &[f64], t: f64) -> Result<AlternatingValue, MaxwellError> {
    let bad = || MaxwellError::UnknownChart { case, chart: chart.clone() };
    match (case, chart) {
        (CaseId::TorusC0, ChartSpec::PeriodicFlat { .. }) => Ok(torus_eval(field, x, t)),
        (CaseId::SphereSmooth, ChartSpec::Stereographic { .. }) => Ok(sphere_smooth_eval(field, x, t)),
        (CaseId::SphereC0, ChartSpec::Stereographic { pole }) => {
            let s = if *pole == Pole::North { 1.0 } else { -1.0 };
            Ok(sphere_c0_eval(field, x, t, s))
        }
        _ => Err(bad()),
    }
}

/// Scalar time profile of a separable mode.
type Profile = fn(f64) -> f64;

/// Time dependence of a field as `Σ φ_m(t) S_m(x)`, with sample times at
/// which the basis matrix is the identity up to rounding.
fn time_basis(case: CaseId, field: Field) -> Option<Vec<(Profile, f64)>> {
    fn one(_t: f64) -> f64 {
        1.0
    }
    fn cos(t: f64) -> f64 {
        t.cos()
    }
    fn sin(t: f64) -> f64 {
        t.sin()
    }
    fn a(t: f64) -> f64 {
        (SQRT_2 * t).sin() / SQRT_2
    }
    fn b(t: f64) -> f64 {
        (SQRT_2 * t).cos()
    }
    match (case, field) {
        (CaseId::TorusC0, Field::J) => Some(vec![(one, 0.0)]),
        (CaseId::TorusC0, Field::Rho) => Some(Vec::new()),
        (CaseId::TorusC0, _) => None,
        (CaseId::SphereSmooth, Field::E) => Some(vec![(a, PI / (2.0 * SQRT_2))]),
        (CaseId::SphereSmooth, Field::Bp) => Some(vec![(b, 0.0)]),
        (CaseId::SphereSmooth, _) => Some(Vec::new()),
        (CaseId::SphereC0, _) => Some(vec![(one, PI), (cos, 0.0), (sin, 0.5 * PI)]),
    }
}

/// How a field is turned into a dof-space vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `I^k ω`.
    Interpolate,
    /// `v ↦ ⟨ω, P^k v⟩`, assembled face by face.
    Load,
}

impl FromStr for Discretization {
    type Err = MaxwellError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interpolate" => Ok(Discretization::Interpolate),
            "load" => Ok(Discretization::Load),
            _ => Err(MaxwellError::UnknownSource(s.to_string())),
        }
    }
}

/// Discrete values of a field at arbitrary times, through cached spatial
/// modes when the time dependence separates.
pub struct FieldSeries<'a, 'm> {
    cx: &'a DdrComplex<'m>,
    case: CaseId,
    field: Field,
    how: Discretization,
    modes: Option<Vec<(Profile, Vec<f64>)>>,
}

impl<'a, 'm> FieldSeries<'a, 'm> {
    pub fn new(cx: &'a DdrComplex<'m>, case: CaseId, field: Field) -> Result<Self, MaxwellError> {
        Self::with(cx, case, field, Discretization::Interpolate)
    }

    pub fn with(cx: &'a DdrComplex<'m>, case: CaseId, field: Field, how: Discretization) -> Result<Self, MaxwellError> {
        for chart in &cx.mesh.charts {
            exact_eval(case, field, chart, &[0.5, 0.5], 0.0)?;
        }
        let modes = match time_basis(case, field) {
            None => None,
            Some(basis) => {
                let samples = basis
                    .iter()
                    .map(|(_, ts)| direct(cx, case, field, how, *ts))
                    .collect::<Result<Vec<_>, _>>()?;
                // separate modes: sample m = Σ_j φ_j(t_m) S_j
                let n = basis.len();
                let v = nalgebra::DMatrix::from_fn(n, n, |m, j| (basis[j].0)(basis[m].1));
                let inv = v.try_inverse().ok_or_else(|| MaxwellError::Solver("time basis".into()))?;
                let len = cx.ndofs(field.degree());
                let mut out = Vec::new();
                for j in 0..n {
                    let mut s = vec![0.0; len];
                    for (m, sample) in samples.iter().enumerate() {
                        let w = inv[(j, m)];
                        if w != 0.0 {
                            s.iter_mut().zip(sample).for_each(|(a, b)| *a += w * b);
                        }
                    }
                    out.push((basis[j].0, s));
                }
                Some(out)
            }
        };
        Ok(FieldSeries { cx, case, field, how, modes })
    }

    pub fn at(&self, t: f64) -> Result<Vec<f64>, MaxwellError> {
        match &self.modes {
            Some(modes) => {
                let mut v = vec![0.0; self.cx.ndofs(self.field.degree())];
                for (phi, s) in modes {
                    let c = phi(t);
                    v.iter_mut().zip(s).for_each(|(a, b)| *a += c * b);
                }
                Ok(v)
            }
            None => direct(self.cx, self.case, self.field, self.how, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.modes, Some(m) if m.is_empty())
    }
}

fn direct(cx: &DdrComplex, case: CaseId, field: Field, how: Discretization, t: f64) -> Result<Vec<f64>, MaxwellError> {
    let charts = &cx.mesh.charts;
    // charts were checked when the series was built
    let sampler = |c: usize, x: &[f64]| exact_eval(case, field, &charts[c], x, t).unwrap_or_else(|_| AlternatingValue::zero(2, field.degree()));
    Ok(match how {
        Discretization::Interpolate => cx.interpolate(field.degree(), &sampler)?.values,
        Discretization::Load => cx.l2_load(field.degree(), &sampler)?,
    })
}

/// Sparse matrices of the semi-discrete system.
pub struct MaxwellSystem {
    pub m1: CsrMatrix,
    pub m2: CsrMatrix,
    pub d0: CsrMatrix,
    pub d1: CsrMatrix,
    /// `M2·D1`.
    pub k: CsrMatrix,
}

impl MaxwellSystem {
    pub fn energy(&self, e: &[f64], b: &[f64]) -> f64 {
        dot(e, &self.m1.matvec(e)) + dot(b, &self.m2.matvec(b))
    }

    /// `D0ᵀ M1 v`.
    pub fn gauss(&self, v: &[f64]) -> Vec<f64> {
        self.d0.transpose().matvec(&self.m1.matvec(v))
    }
}

pub fn assemble_maxwell(cx: &DdrComplex) -> Result<MaxwellSystem, MaxwellError> {
    let m1 = cx.inner_product_matrix(1)?;
    let m2 = cx.inner_product_matrix(2)?;
    let d0 = cx.global_derivative(0)?;
    let d1 = cx.global_derivative(1)?;
    let k = m2.mul(&d1)?;
    Ok(MaxwellSystem { m1, m2, d0, d1, k })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    CrankNicolson,
    ImplicitEuler,
}

impl FromStr for TimeScheme {
    type Err = MaxwellError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "crank_nicolson" | "cn" => Ok(TimeScheme::CrankNicolson),
            "implicit_euler" | "ie" => Ok(TimeScheme::ImplicitEuler),
            _ => Err(MaxwellError::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub r: u32,
    pub dt: f64,
    pub t_end: f64,
    pub quad_degree: Option<usize>,
    pub scheme: TimeScheme,
    /// Pairing of the current density with `X¹_h`.
    pub source: Discretization,
}

impl RunConfig {
    pub fn new(r: u32) -> Self {
        RunConfig {
            r,
            dt: 1e-3,
            t_end: 2.0 * PI,
            quad_degree: None,
            scheme: TimeScheme::CrankNicolson,
            source: Discretization::Interpolate,
        }
    }

    /// Number of steps `N = round(T/Δt)` and the step `T/N` actually taken.
    /// `Δt` may be adjusted by at most 1% so that `T` is hit exactly.
    pub fn steps(&self) -> Result<(usize, f64), MaxwellError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(MaxwellError::TimeStep(self.dt));
        }
        let n = (self.t_end / self.dt).round();
        let dt = self.t_end / n;
        if n < 1.0 || !dt.is_finite() || (dt - self.dt).abs() > 1e-2 * self.dt {
            return Err(MaxwellError::NotMultiple {
                t_end: self.t_end,
                dt: self.dt,
            });
        }
        Ok((n as usize, dt))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxwellState {
    pub e: Vec<f64>,
    pub b: Vec<f64>,
    pub t: f64,
}

/// Factorized time stepper. Crank–Nicolson eliminates `B′` from the
/// midpoint system, leaving `(M1 + Δt²/4 D1ᵀM2D1) E^{n+1} = …`.
pub struct Stepper<'s> {
    sys: &'s MaxwellSystem,
    dt: f64,
    scheme: TimeScheme,
    a: CsrMatrix,
    /// `D1ᵀM2`.
    kt: CsrMatrix,
    /// `D1ᵀM2D1`.
    curl: CsrMatrix,
    llt: Llt<usize, f64>,
}

impl<'s> Stepper<'s> {
    pub fn new(sys: &'s MaxwellSystem, dt: f64, scheme: TimeScheme) -> Result<Self, MaxwellError> {
        let kt = sys.k.transpose();
        let curl = kt.mul(&sys.d1)?;
        let w = match scheme {
            TimeScheme::CrankNicolson => dt * dt / 4.0,
            TimeScheme::ImplicitEuler => dt * dt,
        };
        let a = sys.m1.add_scaled(1.0, &curl, w)?;
        let sym = a.add_scaled(0.5, &a.transpose(), 0.5)?;
        let llt = sym
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| MaxwellError::Solver(format!("{e:?}")))?;
        Ok(Stepper {
            sys,
            dt,
            scheme,
            a: sym,
            kt,
            curl,
            llt,
        })
    }

    /// Solve with two rounds of iterative refinement.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let raw = |v: &[f64]| {
            let m = Mat::<f64>::from_fn(n, 1, |i, _| v[i]);
            let x = self.llt.solve(&m);
            (0..n).map(|i| x[(i, 0)]).collect::<Vec<f64>>()
        };
        let mut x = raw(rhs);
        for _ in 0..2 {
            let ax = self.a.matvec(&x);
            let res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = raw(&res);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        }
        x
    }

    /// One step. `j` is the interpolated source at the half step (CN) or
    /// the new time (implicit Euler), `None` in vacuum.
    pub fn step(&self, s: &MaxwellState, j: Option<&[f64]>) -> MaxwellState {
        let load = j.map(|j| self.sys.m1.matvec(j));
        self.step_with_load(s, load.as_deref())
    }

    /// One step with the source given as a load vector `⟨J, ·⟩`.
    pub fn step_with_load(&self, s: &MaxwellState, load: Option<&[f64]>) -> MaxwellState {
        let dt = self.dt;
        let m1e = self.sys.m1.matvec(&s.e);
        let ktb = self.kt.matvec(&s.b);
        let mut rhs: Vec<f64> = match self.scheme {
            TimeScheme::CrankNicolson => {
                let ce = self.curl.matvec(&s.e);
                (0..m1e.len()).map(|i| m1e[i] - dt * dt / 4.0 * ce[i] + dt * ktb[i]).collect()
            }
            TimeScheme::ImplicitEuler => (0..m1e.len()).map(|i| m1e[i] + dt * ktb[i]).collect(),
        };
        if let Some(l) = load {
            rhs.iter_mut().zip(l).for_each(|(a, b)| *a -= dt * b);
        }
        let e = self.solve(&rhs);
        let de = match self.scheme {
            TimeScheme::CrankNicolson => {
                let avg: Vec<f64> = s.e.iter().zip(&e).map(|(a, b)| 0.5 * (a + b)).collect();
                self.sys.d1.matvec(&avg)
            }
            TimeScheme::ImplicitEuler => self.sys.d1.matvec(&e),
        };
        let b = s.b.iter().zip(&de).map(|(b, d)| b - dt * d).collect();
        MaxwellState { e, b, t: s.t + dt }
    }
}

/// One row of a convergence report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case: CaseId,
    pub r: u32,
    pub h: f64,
    pub ndof: usize,
    pub err_e: f64,
    pub err_de: f64,
    pub err_b: f64,
    pub energy_min: f64,
    pub energy_max: f64,
    /// `(max − min)/E(0)` of the discrete energy over the run.
    pub energy_drift: f64,
    pub constraint_max: f64,
    pub steps: usize,
    /// Step actually taken.
    pub dt: f64,
}

/// Trace of a run for plotting: `(t, energy, constraint)` per step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    pub constraint: Vec<f64>,
}

/// Discrete Gauss law residual `‖D0ᵀM1(E − E(0)) + Σ Δt D0ᵀM1 J‖₂/√n₀`.
pub struct ConstraintMonitor {
    g0: Vec<f64>,
    acc: Vec<f64>,
}

impl ConstraintMonitor {
    pub fn new(sys: &MaxwellSystem, e0: &[f64]) -> Self {
        let g0 = sys.gauss(e0);
        ConstraintMonitor {
            acc: vec![0.0; g0.len()],
            g0,
        }
    }

    /// Adds `Δt·D0ᵀ·load`, where `load` is the source paired with `X¹_h`
    /// (`M1 I¹J`, or the weak load).
    pub fn add_load(&mut self, sys: &MaxwellSystem, dt: f64, load: &[f64]) {
        let g = sys.d0.transpose().matvec(load);
        self.acc.iter_mut().zip(&g).for_each(|(a, b)| *a += dt * b);
    }

    pub fn residual(&self, sys: &MaxwellSystem, e: &[f64]) -> f64 {
        let g = sys.gauss(e);
        let v: Vec<f64> = (0..g.len()).map(|i| g[i] - self.g0[i] + self.acc[i]).collect();
        norm2(&v) / (v.len().max(1) as f64).sqrt()
    }
}

/// Run a case from interpolated initial data to `T`.
pub fn run_case(mesh: &Mesh, case: CaseId, cfg: &RunConfig) -> Result<(ReportRow, RunTrace), MaxwellError> {
    let (steps, dt) = cfg.steps()?;
    let qd = cfg.quad_degree.unwrap_or_else(|| crate::ddr::default_quad_degree(cfg.r));
    let cx = DdrComplex::with_quadrature(mesh, cfg.r, qd)?;
    let sys = assemble_maxwell(&cx)?;
    let es = FieldSeries::new(&cx, case, Field::E)?;
    let bs = FieldSeries::new(&cx, case, Field::Bp)?;
    let js = FieldSeries::with(&cx, case, Field::J, cfg.source)?;
    let stepper = Stepper::new(&sys, dt, cfg.scheme)?;
    let mut state = MaxwellState {
        e: es.at(0.0)?,
        b: bs.at(0.0)?,
        t: 0.0,
    };
    let mut monitor = ConstraintMonitor::new(&sys, &state.e);
    let errors = |s: &MaxwellState| -> Result<[f64; 3], MaxwellError> {
        let de: Vec<f64> = es.at(s.t)?.iter().zip(&s.e).map(|(a, b)| a - b).collect();
        let db: Vec<f64> = bs.at(s.t)?.iter().zip(&s.b).map(|(a, b)| a - b).collect();
        let dde = sys.d1.matvec(&de);
        Ok([dot(&de, &sys.m1.matvec(&de)), dot(&dde, &sys.m2.matvec(&dde)), dot(&db, &sys.m2.matvec(&db))])
    };
    let mut acc = [0.0; 3];
    let mut prev = errors(&state)?;
    let e0 = sys.energy(&state.e, &state.b);
    let (mut emin, mut emax) = (e0, e0);
    let mut cmax: f64 = 0.0;
    let mut trace = RunTrace {
        t: vec![0.0],
        energy: vec![e0],
        constraint: vec![0.0],
    };
    for n in 0..steps {
        let t_src = match cfg.scheme {
            TimeScheme::CrankNicolson => (n as f64 + 0.5) * dt,
            TimeScheme::ImplicitEuler => (n as f64 + 1.0) * dt,
        };
        let load = if js.is_zero() {
            None
        } else {
            let j = js.at(t_src)?;
            Some(match cfg.source {
                Discretization::Interpolate => sys.m1.matvec(&j),
                Discretization::Load => j,
            })
        };
        let mut next = stepper.step_with_load(&state, load.as_deref());
        next.t = (n as f64 + 1.0) * dt;
        state = next;
        if let Some(l) = &load {
            monitor.add_load(&sys, dt, l);
        }
        let cur = errors(&state)?;
        for i in 0..3 {
            acc[i] += 0.5 * dt * (prev[i] + cur[i]);
        }
        prev = cur;
        let en = sys.energy(&state.e, &state.b);
        let c = monitor.residual(&sys, &state.e);
        emin = emin.min(en);
        emax = emax.max(en);
        cmax = cmax.max(c);
        trace.t.push(state.t);
        trace.energy.push(en);
        trace.constraint.push(c);
    }
    let row = ReportRow {
        case,
        r: cfg.r,
        h: mesh.h_max().map_err(DdrError::from)?,
        ndof: cx.ndofs(1) + cx.ndofs(2),
        err_e: acc[0].max(0.0).sqrt(),
        err_de: acc[1].max(0.0).sqrt(),
        err_b: acc[2].max(0.0).sqrt(),
        energy_min: emin,
        energy_max: emax,
        energy_drift: (emax - emin) / e0.abs().max(f64::MIN_POSITIVE),
        constraint_max: cmax,
        steps,
        dt,
    };
    Ok((row, trace))
}

/// Least-squares slope of `log y` against `log x`; `NaN` with fewer than two
/// usable points.
pub fn fit_rate(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

/// Six significant digits in `%g` style, `NaN` for missing values.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v == 0.0 || v.is_infinite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{exp}")
    }
}

/// CSV table with least-squares rates per error column (same for all rows
/// of one `(case, r)` group) and pairwise rates against the previous row.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("case,r,h,ndof,err_E,err_dE,err_B,energy_drift,constraint_max,rate_E,rate_dE,rate_B,pair_rate_E,pair_rate_dE,pair_rate_B\n");
    for (idx, row) in rows.iter().enumerate() {
        let group: Vec<&ReportRow> = rows.iter().filter(|o| o.case == row.case && o.r == row.r).collect();
        let hs: Vec<f64> = group.iter().map(|o| o.h).collect();
        let col = |f: fn(&ReportRow) -> f64| fit_rate(&hs, &group.iter().map(|o| f(o)).collect::<Vec<_>>());
        let prev = rows[..idx].iter().rev().find(|o| o.case == row.case && o.r == row.r);
        let pair = |f: fn(&ReportRow) -> f64| prev.map_or(f64::NAN, |p| fit_rate(&[p.h, row.h], &[f(p), f(row)]));
        let cols = [
            format_value(row.h),
            row.ndof.to_string(),
            format_value(row.err_e),
            format_value(row.err_de),
            format_value(row.err_b),
            format_value(row.energy_drift),
            format_value(row.constraint_max),
            format_value(col(|o| o.err_e)),
            format_value(col(|o| o.err_de)),
            format_value(col(|o| o.err_b)),
            format_value(pair(|o| o.err_e)),
            format_value(pair(|o| o.err_de)),
            format_value(pair(|o| o.err_b)),
        ];
        s.push_str(&format!("{},{},{}\n", row.case, row.r, cols.join(",")));
    }
    s
}

/// Space-time errors of several runs in parallel, deterministic order.
pub fn run_many(jobs: &[(&Mesh, CaseId, RunConfig)]) -> Vec<Result<ReportRow, MaxwellError>> {
    jobs.par_iter()
        .map(|(m, c, cfg)| run_case(m, *c, cfg).map(|(r, _)| r))
        .collect()
}
