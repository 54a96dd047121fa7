//! Quadrature and metric geometry on curved cells.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::exterior::{AlternatingValue, ExteriorError, MetricAtPoint};
use crate::polyspace::SpanBasis;

/// Largest supported exactness degree.
pub const MAX_QUAD_DEGREE: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unsupported quadrature degree {0} (max {MAX_QUAD_DEGREE})")]
    UnsupportedDegree(usize),
    #[error("degenerate metric at reference point {point:?}: {source}")]
    DegenerateMetric { point: Vec<f64>, source: ExteriorError },
    #[error("singular Gram matrix of size {0}")]
    SingularGram(usize),
    #[error("form degrees {0} and {1} are not compatible with dimension {2}")]
    IncompatibleDegrees(usize, usize, usize),
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn points_for(degree: usize) -> usize {
    degree / 2 + 1
}

/// Reference domain of a cell parametrization.
#[derive(Clone, Debug, PartialEq)]
pub enum RefDomain {
    Point,
    Interval { a: f64, b: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Counter-clockwise polygon, star-shaped with respect to its centroid.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl RefDomain {
    pub fn dim(&self) -> usize {
        match self {
            RefDomain::Point => 0,
            RefDomain::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn unit_triangle() -> Self {
        RefDomain::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// A point inside the domain from which every boundary point is visible.
    pub fn center(&self) -> Vec<f64> {
        match self {
            RefDomain::Point => vec![],
            RefDomain::Interval { a, b } => vec![0.5 * (a + b)],
            RefDomain::Rectangle { x0, x1, y0, y1 } => vec![0.5 * (x0 + x1), 0.5 * (y0 + y1)],
            RefDomain::Polygon { vertices } => polygon_centroid(vertices).to_vec(),
        }
    }
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(v: &[[f64; 2]]) -> [f64; 2] {
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..v.len() {
        let p = v[i];
        let q = v[(i + 1) % v.len()];
        let c = p[0] * q[1] - q[0] * p[1];
        a += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    [cx / (3.0 * a), cy / (3.0 * a)]
}

pub fn polygon_signed_area(v: &[[f64; 2]]) -> f64 {
    0.5 * (0..v.len())
        .map(|i| {
            let p = v[i];
            let q = v[(i + 1) % v.len()];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub domain: RefDomain,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Tensor Gauss–Legendre rule on `[0,1]^d`.
pub fn make_quadrature(d: usize, degree: usize) -> Result<QuadratureRule, GeometryError> {
    let domain = match d {
        0 => RefDomain::Point,
        1 => RefDomain::Interval { a: 0.0, b: 1.0 },
        _ => RefDomain::Rectangle {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        },
    };
    if d > 2 {
        return tensor_cube(d, degree);
    }
    rule_for(&domain, degree)
}

fn tensor_cube(d: usize, degree: usize) -> Result<QuadratureRule, GeometryError> {
    if degree > MAX_QUAD_DEGREE {
        return Err(GeometryError::UnsupportedDegree(degree));
    }
    let (x, w) = gauss_legendre(points_for(degree));
    let mut nodes = vec![vec![]];
    let mut weights = vec![1.0];
    for _ in 0..d {
        let mut nn = Vec::new();
        let mut nw = Vec::new();
        for (p, pw) in nodes.iter().zip(&weights) {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q = p.clone();
                q.push(*xi);
                nn.push(q);
                nw.push(pw * wi);
            }
        }
        nodes = nn;
        weights = nw;
    }
    Ok(QuadratureRule {
        domain: RefDomain::Point,
        nodes,
        weights,
        exactness_degree: degree,
    })
}

/// Rule on a reference domain, exact for polynomials up to `degree`.
pub fn rule_for(domain: &RefDomain, degree: usize) -> Result<QuadratureRule, GeometryError> {
    if degree > MAX_QUAD_DEGREE {
        return Err(GeometryError::UnsupportedDegree(degree));
    }
    let (x, w) = gauss_legendre(points_for(degree));
    let (mut nodes, mut weights) = (Vec::new(), Vec::new());
    match domain {
        RefDomain::Point => {
            nodes.push(vec![]);
            weights.push(1.0);
        }
        RefDomain::Interval { a, b } => {
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(vec![a + (b - a) * xi]);
                weights.push((b - a) * wi);
            }
        }
        RefDomain::Rectangle { x0, x1, y0, y1 } => {
            for (xi, wi) in x.iter().zip(&w) {
                for (yj, wj) in x.iter().zip(&w) {
                    nodes.push(vec![x0 + (x1 - x0) * xi, y0 + (y1 - y0) * yj]);
                    weights.push((x1 - x0) * (y1 - y0) * wi * wj);
                }
            }
        }
        RefDomain::Polygon { vertices } => {
            // fan of collapsed (Duffy) rules from the centroid
            let (xs, ws) = gauss_legendre(points_for(degree + 1));
            let c = polygon_centroid(vertices);
            for i in 0..vertices.len() {
                let p1 = vertices[i];
                let p2 = vertices[(i + 1) % vertices.len()];
                let e1 = [p1[0] - c[0], p1[1] - c[1]];
                let e2 = [p2[0] - p1[0], p2[1] - p1[1]];
                let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
                for (s, ws_) in xs.iter().zip(&ws) {
                    for (t, wt) in x.iter().zip(&w) {
                        nodes.push(vec![c[0] + s * e1[0] + s * t * e2[0], c[1] + s * e1[1] + s * t * e2[1]]);
                        weights.push(jac * s * ws_ * wt);
                    }
                }
            }
        }
    }
    Ok(QuadratureRule {
        domain: domain.clone(),
        nodes,
        weights,
        exactness_degree: degree,
    })
}

/// Parametrization `Φ` of a cell from its reference domain into chart coordinates.
pub trait CellMap: Send + Sync {
    fn ref_dim(&self) -> usize;
    fn chart_dim(&self) -> usize;
    fn eval(&self, u: &[f64]) -> Vec<f64>;
    /// `chart_dim × ref_dim` Jacobian.
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64>;
}

/// Riemannian metric `γ` of a chart, in chart coordinates.
pub trait ChartMetric: Send + Sync {
    fn gamma(&self, x: &[f64]) -> DMatrix<f64>;
}

/// Euclidean metric.
#[derive(Clone, Copy, Debug)]
pub struct FlatMetric(pub usize);

impl ChartMetric for FlatMetric {
    fn gamma(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.0, self.0)
    }
}

/// Geometry of one cell: parametrization, chart metric, reference domain.
#[derive(Clone)]
pub struct CellGeometry {
    pub map: Arc<dyn CellMap>,
    pub metric: Arc<dyn ChartMetric>,
    pub domain: RefDomain,
    pub chart: usize,
}

impl CellGeometry {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Induced metric `G(u) = DΦᵀ γ(Φ(u)) DΦ`.
    pub fn induced_metric(&self, u: &[f64]) -> Result<MetricAtPoint, GeometryError> {
        if self.dim() == 0 {
            return Ok(MetricAtPoint::identity(0));
        }
        let x = self.map.eval(u);
        let j = self.map.jacobian(u);
        let g = j.transpose() * self.metric.gamma(&x) * &j;
        MetricAtPoint::new(g).map_err(|source| GeometryError::DegenerateMetric {
            point: u.to_vec(),
            source,
        })
    }

    /// Precompute nodes, weights and metrics for a given exactness degree.
    pub fn quadrature(&self, degree: usize) -> Result<CellQuad, GeometryError> {
        let rule = rule_for(&self.domain, degree)?;
        let mut metrics = Vec::with_capacity(rule.len());
        let mut points = Vec::with_capacity(rule.len());
        let mut jacobians = Vec::with_capacity(rule.len());
        for u in &rule.nodes {
            metrics.push(self.induced_metric(u)?);
            if self.dim() > 0 {
                points.push(self.map.eval(u));
                jacobians.push(self.map.jacobian(u));
            } else {
                points.push(self.map.eval(u));
                jacobians.push(DMatrix::zeros(self.map.chart_dim(), 0));
            }
        }
        let vol: Vec<f64> = metrics.iter().zip(&rule.weights).map(|(g, w)| w * g.sqrt_det()).collect();
        Ok(CellQuad {
            dim: self.dim(),
            nodes: rule.nodes,
            weights: rule.weights,
            metrics,
            vol,
            points,
            jacobians,
            chart: self.chart,
        })
    }
}

/// Quadrature data of a cell: reference nodes, weights, induced metrics,
/// chart-coordinate images and Jacobians.
#[derive(Clone, Debug)]
pub struct CellQuad {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub metrics: Vec<MetricAtPoint>,
    /// `w_q √det G(u_q)`.
    pub vol: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub chart: usize,
}

impl CellQuad {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Riemannian measure `|f|`.
    pub fn measure(&self) -> f64 {
        self.vol.iter().sum()
    }

    /// Characteristic size `|f|^{1/d}` (1 for points).
    pub fn size(&self) -> f64 {
        if self.dim == 0 {
            1.0
        } else {
            self.measure().powf(1.0 / self.dim as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    /// `∫ α∧β` (metric-free).
    Wedge,
    /// `∫ α∧★β = ∫ ⟨α, β⟩ vol`.
    WedgeStar,
}

/// `∫_f α∧β` or `∫_f α∧★β`, samplers given in reference coordinates per node.
pub fn integrate_pair(
    quad: &CellQuad,
    alpha: impl Fn(usize) -> AlternatingValue,
    beta: impl Fn(usize) -> AlternatingValue,
    mode: PairMode,
) -> f64 {
    let mut s = 0.0;
    for q in 0..quad.len() {
        let a = alpha(q);
        let b = beta(q);
        s += match mode {
            PairMode::Wedge => quad.weights[q] * a.wedge(&b).coeffs[0],
            PairMode::WedgeStar => quad.vol[q] * quad.metrics[q].inner(&a, &b),
        };
    }
    s
}

/// Values of every basis member at every node: `values[q][i]`.
pub fn nodal_values(quad: &CellQuad, basis: &SpanBasis) -> Vec<Vec<AlternatingValue>> {
    let compiled: Vec<_> = basis.forms.iter().map(|f| f.compile()).collect();
    quad.nodes
        .iter()
        .map(|u| compiled.iter().map(|c| c.eval(u)).collect())
        .collect()
}

/// Gram matrix from precomputed nodal values.
pub fn gram_from_values(
    quad: &CellQuad,
    a: &[Vec<AlternatingValue>],
    b: &[Vec<AlternatingValue>],
    mode: PairMode,
) -> DMatrix<f64> {
    let na = a.first().map_or(0, |v| v.len());
    let nb = b.first().map_or(0, |v| v.len());
    let mut m = DMatrix::zeros(na, nb);
    if na == 0 || nb == 0 {
        return m;
    }
    for q in 0..quad.len() {
        match mode {
            PairMode::Wedge => {
                for i in 0..na {
                    for j in 0..nb {
                        m[(i, j)] += quad.weights[q] * a[q][i].wedge(&b[q][j]).coeffs[0];
                    }
                }
            }
            PairMode::WedgeStar => {
                let h = quad.metrics[q].form_inner_matrix(a[q][0].degree) * quad.vol[q];
                let nc = h.nrows();
                for j in 0..nb {
                    let mut hb = vec![0.0; nc];
                    for (r, hr) in hb.iter_mut().enumerate() {
                        for c in 0..nc {
                            *hr += h[(r, c)] * b[q][j].coeffs[c];
                        }
                    }
                    for i in 0..na {
                        m[(i, j)] += a[q][i].coeffs.iter().zip(&hb).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
        }
    }
    m
}

/// `M[i][j] = ∫ a_i ∧ b_j` or `∫ a_i ∧ ★b_j`.
pub fn gram_matrix(quad: &CellQuad, a: &SpanBasis, b: &SpanBasis, mode: PairMode) -> Result<DMatrix<f64>, GeometryError> {
    let d = quad.dim;
    let (ka, kb) = (a.spec.form_degree, b.spec.form_degree);
    let ok = match mode {
        PairMode::Wedge => ka + kb == d,
        PairMode::WedgeStar => ka == kb,
    };
    if !ok {
        return Err(GeometryError::IncompatibleDegrees(ka, kb, d));
    }
    Ok(gram_from_values(quad, &nodal_values(quad, a), &nodal_values(quad, b), mode))
}

/// Metric `L²` projection onto the span of `target`.
pub fn l2_project(
    quad: &CellQuad,
    target: &SpanBasis,
    sampler: impl Fn(usize) -> AlternatingValue,
) -> Result<DVector<f64>, GeometryError> {
    let vals = nodal_values(quad, target);
    let g = gram_from_values(quad, &vals, &vals, PairMode::WedgeStar);
    let n = target.len();
    let mut rhs = DVector::zeros(n);
    for q in 0..quad.len() {
        let s = sampler(q);
        for i in 0..n {
            rhs[i] += quad.vol[q] * quad.metrics[q].inner(&vals[q][i], &s);
        }
    }
    solve_spd(g, rhs)
}

/// Solve with a symmetric positive definite matrix, falling back to LU.
pub fn solve_spd(g: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    let n = g.nrows();
    if n == 0 {
        return Ok(rhs);
    }
    if let Some(ch) = g.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    g.lu().solve(&rhs).ok_or(GeometryError::SingularGram(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyspace::basis_full;

    struct Affine2 {
        a: DMatrix<f64>,
        b: Vec<f64>,
    }

    impl CellMap for Affine2 {
        fn ref_dim(&self) -> usize {
            self.a.ncols()
        }
        fn chart_dim(&self) -> usize {
            self.a.nrows()
        }
        fn eval(&self, u: &[f64]) -> Vec<f64> {
            (0..self.a.nrows())
                .map(|i| self.b[i] + (0..self.a.ncols()).map(|j| self.a[(i, j)] * u[j]).sum::<f64>())
                .collect()
        }
        fn jacobian(&self, _u: &[f64]) -> DMatrix<f64> {
            self.a.clone()
        }
    }

    struct Diagonal(f64, f64);
    impl ChartMetric for Diagonal {
        fn gamma(&self, _x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_diagonal(&DVector::from_vec(vec![self.0, self.1]))
        }
    }

    fn unit(d: usize, metric: Arc<dyn ChartMetric>) -> CellGeometry {
        let domain = if d == 1 {
            RefDomain::Interval { a: 0.0, b: 1.0 }
        } else {
            RefDomain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            }
        };
        CellGeometry {
            map: Arc::new(Affine2 {
                a: DMatrix::identity(d, d),
                b: vec![0.0; d],
            }),
            metric,
            domain,
            chart: 0,
        }
    }

    #[test]
    fn gauss_rules() {
        let r = make_quadrature(1, 1).unwrap();
        assert_eq!(r.len(), 1);
        let r = make_quadrature(1, 3).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r.integrate(|x| x[0].powi(3)) - 0.25).abs() < 1e-15);
        let r = make_quadrature(2, 5).unwrap();
        assert_eq!(r.len(), 9);
        assert!((r.integrate(|x| x[0].powi(2) * x[1].powi(3)) - 1.0 / 12.0).abs() < 1e-14);
        assert!(make_quadrature(1, 61).is_err());
        for deg in [0, 7, 20, 40, 60] {
            let r = make_quadrature(1, deg).unwrap();
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((r.integrate(|x| x[0].powi(deg as i32)) - exact).abs() < 1e-14 * exact.max(1e-2));
        }
    }

    #[test]
    fn polygon_rule() {
        let tri = RefDomain::unit_triangle();
        let r = rule_for(&tri, 3).unwrap();
        assert!((r.integrate(|x| x[0] * x[0] * x[1]) - 1.0 / 60.0).abs() < 1e-15);
        let sq = RefDomain::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        let r = rule_for(&sq, 5).unwrap();
        assert!((r.integrate(|x| x[0].powi(2) * x[1].powi(3)) - 1.0 / 12.0).abs() < 1e-14);
        let pent: Vec<[f64; 2]> = (0..5)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 5.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let area = polygon_signed_area(&pent);
        let r = rule_for(&RefDomain::Polygon { vertices: pent }, 4).unwrap();
        assert!((r.integrate(|_| 1.0) - area).abs() < 1e-14);
    }

    #[test]
    fn pairings() {
        let g = unit(2, Arc::new(FlatMetric(2)));
        let q = g.quadrature(6).unwrap();
        let dx = AlternatingValue::new(2, 1, vec![1.0, 0.0]);
        let dy = AlternatingValue::new(2, 1, vec![0.0, 1.0]);
        assert!((integrate_pair(&q, |_| dx.clone(), |_| dy.clone(), PairMode::Wedge) - 1.0).abs() < 1e-14);
        assert!((integrate_pair(&q, |_| dx.clone(), |_| dx.clone(), PairMode::WedgeStar) - 1.0).abs() < 1e-14);
        let b = basis_full(2, 0, 1).unwrap();
        let m = gram_matrix(&q, &b, &b, PairMode::WedgeStar).unwrap();
        assert!((m - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-14);

        let e = unit(1, Arc::new(FlatMetric(1)));
        let qe = e.quadrature(6).unwrap();
        let b = basis_full(1, 1, 0).unwrap();
        let m = gram_matrix(&qe, &b, &b, PairMode::WedgeStar).unwrap();
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0 / 3.0]);
        assert!((m - h).abs().max() < 1e-14);
        let c = l2_project(&qe, &basis_full(1, 0, 0).unwrap(), |i| AlternatingValue::scalar(qe.nodes[i][0], 1)).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wedge_mode_is_metric_free() {
        let g1 = unit(2, Arc::new(Diagonal(1.3, 0.7)));
        let g4 = unit(2, Arc::new(Diagonal(5.2, 0.2)));
        let q1 = g1.quadrature(8).unwrap();
        let q4 = g4.quadrature(8).unwrap();
        let a = basis_full(2, 2, 1).unwrap();
        let w1 = gram_matrix(&q1, &a, &a, PairMode::Wedge).unwrap();
        let w4 = gram_matrix(&q4, &a, &a, PairMode::Wedge).unwrap();
        assert!((&w1 - &w4).abs().max() < 1e-13 * w1.abs().max());
        let s1 = gram_matrix(&q1, &a, &a, PairMode::WedgeStar).unwrap();
        let s4 = gram_matrix(&q4, &a, &a, PairMode::WedgeStar).unwrap();
        assert!((&s1 - &s4).abs().max() > 1e-3);
    }
}
