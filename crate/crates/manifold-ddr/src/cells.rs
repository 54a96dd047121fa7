//! Closed-form cell parametrizations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::{polygon_centroid, CellMap, RefDomain};

/// Polynomial with ascending coefficients.
pub fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * t + a)
}

pub fn poly_deriv(c: &[f64], t: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, a)| acc * t + i as f64 * a)
}

/// Inverse of a strictly monotone polynomial on `[0, 1]`.
pub fn poly_inverse(c: &[f64], y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    let increasing = poly_eval(c, 1.0) >= poly_eval(c, 0.0);
    let mut t = 0.5;
    for _ in 0..200 {
        let f = poly_eval(c, t) - y;
        if f.abs() < 1e-16 || hi - lo < 1e-16 {
            break;
        }
        let below = if increasing { f < 0.0 } else { f > 0.0 };
        if below {
            lo = t;
        } else {
            hi = t;
        }
        let df = poly_deriv(c, t);
        let tn = t - f / df;
        t = if df != 0.0 && tn > lo && tn < hi { tn } else { 0.5 * (lo + hi) };
    }
    t
}

fn rotate(beta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = beta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Curve of an edge in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "curve", rename_all = "snake_case")]
pub enum Curve {
    /// `m + t (b - a)`, `t ∈ [-½, ½]`.
    Straight { a: [f64; 2], b: [f64; 2] },
    /// Arc of the unit circle `R_β q(t)/|q(t)|`, `q(t) = (2t cos a, sin a)`, `t ∈ [-½, ½]`.
    UnitCircleChord { beta: f64, half_angle: f64 },
    /// `(x(t), y(t))`, `t ∈ [0, 1]`.
    Polynomial { x: Vec<f64>, y: Vec<f64> },
    /// Polar `(r(t), θ(t))`, `t ∈ [0, 1]`.
    Polar { r: Vec<f64>, theta: Vec<f64> },
}

impl Curve {
    pub fn ref_domain(&self) -> RefDomain {
        match self {
            Curve::Straight { .. } | Curve::UnitCircleChord { .. } => RefDomain::Interval { a: -0.5, b: 0.5 },
            _ => RefDomain::Interval { a: 0.0, b: 1.0 },
        }
    }

    pub fn point(&self, t: f64) -> [f64; 2] {
        match self {
            Curve::Straight { a, b } => [
                0.5 * (a[0] + b[0]) + t * (b[0] - a[0]),
                0.5 * (a[1] + b[1]) + t * (b[1] - a[1]),
            ],
            Curve::UnitCircleChord { beta, half_angle } => {
                let q = [2.0 * t * half_angle.cos(), half_angle.sin()];
                let n = q[0].hypot(q[1]);
                rotate(*beta, [q[0] / n, q[1] / n])
            }
            Curve::Polynomial { x, y } => [poly_eval(x, t), poly_eval(y, t)],
            Curve::Polar { r, theta } => {
                let (rr, th) = (poly_eval(r, t), poly_eval(theta, t));
                [rr * th.cos(), rr * th.sin()]
            }
        }
    }

    pub fn tangent(&self, t: f64) -> [f64; 2] {
        match self {
            Curve::Straight { a, b } => [b[0] - a[0], b[1] - a[1]],
            Curve::UnitCircleChord { beta, half_angle } => {
                let ca = half_angle.cos();
                let q = [2.0 * t * ca, half_angle.sin()];
                let n = q[0].hypot(q[1]);
                let dn = 4.0 * t * ca * ca / n;
                rotate(*beta, [2.0 * ca / n - q[0] * dn / (n * n), -q[1] * dn / (n * n)])
            }
            Curve::Polynomial { x, y } => [poly_deriv(x, t), poly_deriv(y, t)],
            Curve::Polar { r, theta } => {
                let (rr, th) = (poly_eval(r, t), poly_eval(theta, t));
                let (dr, dth) = (poly_deriv(r, t), poly_deriv(theta, t));
                let (s, c) = th.sin_cos();
                [dr * c - rr * dth * s, dr * s + rr * dth * c]
            }
        }
    }

    /// Parameter of a point on the curve.
    pub fn inverse(&self, x: &[f64]) -> f64 {
        match self {
            Curve::Straight { a, b } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                ((x[0] - m[0]) * d[0] + (x[1] - m[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])
            }
            Curve::UnitCircleChord { beta, half_angle } => {
                let y = rotate(-beta, [x[0], x[1]]);
                y[0] * half_angle.sin() / (2.0 * y[1] * half_angle.cos())
            }
            _ => {
                // projection by Newton on the squared distance, seeded by sampling
                let mut t = (0..=32)
                    .map(|i| i as f64 / 32.0)
                    .min_by(|s, u| dist2(self.point(*s), x).total_cmp(&dist2(self.point(*u), x)))
                    .unwrap_or(0.5);
                for _ in 0..50 {
                    let p = self.point(t);
                    let d = self.tangent(t);
                    let dt = ((p[0] - x[0]) * d[0] + (p[1] - x[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1]);
                    t -= dt;
                    if dt.abs() < 1e-16 {
                        break;
                    }
                }
                t
            }
        }
    }
}

fn dist2(p: [f64; 2], x: &[f64]) -> f64 {
    (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
}

/// Boundary-layer cone cells of the sphere and the polar cone section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConeSection {
    /// `R_β[(p w(t) + (1-p) ρ) q(t)]`, `q(t) = (2t cos a, sin a)`, `w = 1/|q|`, on `[-½,½]×[0,1]`.
    SphereBoundary { beta: f64, half_angle: f64, rho: f64 },
    /// Polar `(p g₁(t) + (1-p) g₃(t), h(t))` on `[0,1]²`.
    Polar { h: Vec<f64>, g1: Vec<f64>, g3: Vec<f64> },
}

/// Construction kind and parameters of a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Construction {
    Vertex { point: [f64; 2] },
    ParametrizedSegment(Curve),
    /// Counter-clockwise vertices in chart coordinates.
    FlatPolygon { vertices: Vec<[f64; 2]> },
    ConeSection(ConeSection),
    TriangleTwoCurved { h1: Vec<f64>, g1: Vec<f64>, h2: Vec<f64>, g2: Vec<f64> },
    QuadFourCurved { h: [Vec<f64>; 4], g: [Vec<f64>; 4], a: f64, b: f64 },
}

impl Construction {
    pub fn dim(&self) -> usize {
        match self {
            Construction::Vertex { .. } => 0,
            Construction::ParametrizedSegment(_) => 1,
            _ => 2,
        }
    }

    pub fn shape(&self) -> CellShape {
        CellShape::new(self.clone())
    }
}

/// Flat polygon reference frame: `u = (x - c)/s`.
fn polygon_frame(v: &[[f64; 2]]) -> ([f64; 2], f64) {
    let c = polygon_centroid(v);
    let s = v
        .iter()
        .map(|p| (p[0] - c[0]).abs().max((p[1] - c[1]).abs()))
        .fold(0.0, f64::max);
    (c, s)
}

/// Evaluable parametrization built from a [`Construction`].
#[derive(Clone, Debug)]
pub struct CellShape {
    pub construction: Construction,
    frame: ([f64; 2], f64),
}

impl CellShape {
    pub fn new(construction: Construction) -> Self {
        let frame = match &construction {
            Construction::FlatPolygon { vertices } => polygon_frame(vertices),
            _ => ([0.0, 0.0], 1.0),
        };
        CellShape { construction, frame }
    }

    pub fn ref_domain(&self) -> RefDomain {
        match &self.construction {
            Construction::Vertex { .. } => RefDomain::Point,
            Construction::ParametrizedSegment(c) => c.ref_domain(),
            Construction::FlatPolygon { vertices } => {
                let (c, s) = self.frame;
                RefDomain::Polygon {
                    vertices: vertices.iter().map(|p| [(p[0] - c[0]) / s, (p[1] - c[1]) / s]).collect(),
                }
            }
            Construction::ConeSection(ConeSection::SphereBoundary { .. }) => RefDomain::Rectangle {
                x0: -0.5,
                x1: 0.5,
                y0: 0.0,
                y1: 1.0,
            },
            Construction::TriangleTwoCurved { .. } => RefDomain::unit_triangle(),
            _ => RefDomain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
        }
    }

    /// Reference coordinates of a chart point lying on the closed cell.
    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        match &self.construction {
            Construction::Vertex { .. } => vec![],
            Construction::ParametrizedSegment(c) => vec![c.inverse(x)],
            Construction::FlatPolygon { .. } => {
                let (c, s) = self.frame;
                vec![(x[0] - c[0]) / s, (x[1] - c[1]) / s]
            }
            Construction::ConeSection(ConeSection::SphereBoundary { beta, half_angle, rho }) => {
                let y = rotate(-beta, [x[0], x[1]]);
                let (sa, ca) = half_angle.sin_cos();
                let t = y[0] * sa / (2.0 * y[1] * ca);
                let n = (2.0 * t * ca).hypot(sa);
                let r = y[0].hypot(y[1]);
                vec![t, (r - rho * n) / (1.0 - rho * n)]
            }
            Construction::ConeSection(ConeSection::Polar { h, g1, g3 }) => {
                let r = x[0].hypot(x[1]);
                let mid = 0.5 * (poly_eval(h, 0.0) + poly_eval(h, 1.0));
                let mut th = x[1].atan2(x[0]);
                th += (2.0 * std::f64::consts::PI) * ((mid - th) / (2.0 * std::f64::consts::PI)).round();
                let t = poly_inverse(h, th);
                let (a, b) = (poly_eval(g1, t), poly_eval(g3, t));
                vec![t, (r - b) / (a - b)]
            }
            Construction::TriangleTwoCurved { h1, g1, h2, g2 } => tri_j(h1, g1, h2, g2, x).0.to_vec(),
            Construction::QuadFourCurved { .. } => self.newton_inverse(x),
        }
    }

    fn newton_inverse(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.ref_domain().center();
        for _ in 0..100 {
            let f = self.eval(&u);
            let r = Residual::new(&f, x);
            if r.norm < 1e-15 {
                break;
            }
            let j = self.jacobian(&u);
            let Some(ji) = j.try_inverse() else { break };
            let mut step = 1.0;
            let du = [
                ji[(0, 0)] * r.v[0] + ji[(0, 1)] * r.v[1],
                ji[(1, 0)] * r.v[0] + ji[(1, 1)] * r.v[1],
            ];
            loop {
                let cand = vec![u[0] - step * du[0], u[1] - step * du[1]];
                let rn = Residual::new(&self.eval(&cand), x).norm;
                if rn < r.norm || step < 1e-6 {
                    u = cand;
                    break;
                }
                step *= 0.5;
            }
        }
        u
    }

    /// Sign of `det DΦ` at the reference center (relative to the chart).
    pub fn chart_orientation(&self) -> i8 {
        match self.construction.dim() {
            2 => {
                let j = self.jacobian(&self.ref_domain().center());
                if j.determinant() > 0.0 {
                    1
                } else {
                    -1
                }
            }
            _ => 1,
        }
    }
}

struct Residual {
    v: [f64; 2],
    norm: f64,
}

impl Residual {
    fn new(f: &[f64], x: &[f64]) -> Self {
        let v = [f[0] - x[0], f[1] - x[1]];
        Residual {
            v,
            norm: v[0].hypot(v[1]),
        }
    }
}

/// `J_f` of the two-curved-edge triangle and its Jacobian.
fn tri_j(h1: &[f64], g1: &[f64], h2: &[f64], g2: &[f64], x: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (xx, y) = (x[0], x[1]);
    let a = poly_inverse(h2, xx);
    let bv = poly_inverse(h1, xx);
    let (gg1, gg2) = (poly_eval(g1, bv), poly_eval(g2, a));
    let da = 1.0 / poly_deriv(h2, a);
    let db = 1.0 / poly_deriv(h1, bv);
    let dg1 = poly_deriv(g1, bv) * db;
    let dg2 = poly_deriv(g2, a) * da;
    let d = gg2 - gg1;
    let dd = dg2 - dg1;
    let n1 = (y - gg1) * a + (gg2 - y) * bv;
    let n2 = (y - gg1) * (1.0 - a);
    let n1x = -dg1 * a + (y - gg1) * da + dg2 * bv + (gg2 - y) * db;
    let n1y = a - bv;
    let n2x = -dg1 * (1.0 - a) - (y - gg1) * da;
    let n2y = 1.0 - a;
    (
        [n1 / d, n2 / d],
        [
            [(n1x * d - n1 * dd) / (d * d), n1y / d],
            [(n2x * d - n2 * dd) / (d * d), n2y / d],
        ],
    )
}

fn tri_i(h1: &[f64], g1: &[f64], h2: &[f64], g2: &[f64], u: &[f64]) -> [f64; 2] {
    if u[0] >= 1.0 - 1e-14 {
        // the corner where both curved edges meet and J_f degenerates
        return [poly_eval(h1, 1.0), poly_eval(g1, 1.0)];
    }
    // damped Newton on J_f(x) = u from the flat guess
    let mut x = [u[0], u[1]];
    for _ in 0..100 {
        let (j, dj) = tri_j(h1, g1, h2, g2, &x);
        let r = [j[0] - u[0], j[1] - u[1]];
        let norm = r[0].hypot(r[1]);
        if norm < 1e-15 {
            break;
        }
        let det = dj[0][0] * dj[1][1] - dj[0][1] * dj[1][0];
        let dx = [
            (dj[1][1] * r[0] - dj[0][1] * r[1]) / det,
            (-dj[1][0] * r[0] + dj[0][0] * r[1]) / det,
        ];
        let mut step = 1.0;
        loop {
            let cand = [
                (x[0] - step * dx[0]).clamp(0.0, 1.0 - 1e-14),
                x[1] - step * dx[1],
            ];
            let (jc, _) = tri_j(h1, g1, h2, g2, &cand);
            let nc = (jc[0] - u[0]).hypot(jc[1] - u[1]);
            if nc < norm || step < 1e-8 {
                x = cand;
                break;
            }
            step *= 0.5;
        }
    }
    x
}

impl CellMap for CellShape {
    fn ref_dim(&self) -> usize {
        self.construction.dim()
    }

    fn chart_dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &[f64]) -> Vec<f64> {
        match &self.construction {
            Construction::Vertex { point } => point.to_vec(),
            Construction::ParametrizedSegment(c) => c.point(u[0]).to_vec(),
            Construction::FlatPolygon { .. } => {
                let (c, s) = self.frame;
                vec![c[0] + s * u[0], c[1] + s * u[1]]
            }
            Construction::ConeSection(ConeSection::SphereBoundary { beta, half_angle, rho }) => {
                let (t, p) = (u[0], u[1]);
                let q = [2.0 * t * half_angle.cos(), half_angle.sin()];
                let n = q[0].hypot(q[1]);
                let s = p / n + (1.0 - p) * rho;
                rotate(*beta, [s * q[0], s * q[1]]).to_vec()
            }
            Construction::ConeSection(ConeSection::Polar { h, g1, g3 }) => {
                let (t, p) = (u[0], u[1]);
                let r = p * poly_eval(g1, t) + (1.0 - p) * poly_eval(g3, t);
                let th = poly_eval(h, t);
                vec![r * th.cos(), r * th.sin()]
            }
            Construction::TriangleTwoCurved { h1, g1, h2, g2 } => tri_i(h1, g1, h2, g2, u).to_vec(),
            Construction::QuadFourCurved { h, g, a, b } => {
                let (t, p) = (u[0], u[1]);
                let pp = p * poly_eval(&h[2], t) / a + (1.0 - p) * poly_eval(&h[0], t);
                let x = pp * poly_eval(&h[1], p) + (1.0 - pp) * poly_eval(&h[3], p);
                let qq = t * poly_eval(&g[1], p) / b + (1.0 - t) * poly_eval(&g[3], p);
                let y = qq * poly_eval(&g[2], t) + (1.0 - qq) * poly_eval(&g[0], t);
                vec![x, y]
            }
        }
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        match &self.construction {
            Construction::Vertex { .. } => DMatrix::zeros(2, 0),
            Construction::ParametrizedSegment(c) => {
                let d = c.tangent(u[0]);
                DMatrix::from_column_slice(2, 1, &d)
            }
            Construction::FlatPolygon { .. } => DMatrix::identity(2, 2) * self.frame.1,
            Construction::ConeSection(ConeSection::SphereBoundary { beta, half_angle, rho }) => {
                let (t, p) = (u[0], u[1]);
                let ca = half_angle.cos();
                let q = [2.0 * t * ca, half_angle.sin()];
                let n = q[0].hypot(q[1]);
                let w = 1.0 / n;
                let dw = -4.0 * t * ca * ca / (n * n * n);
                let s = p * w + (1.0 - p) * rho;
                let dt = rotate(*beta, [p * dw * q[0] + s * 2.0 * ca, p * dw * q[1]]);
                let dp = rotate(*beta, [(w - rho) * q[0], (w - rho) * q[1]]);
                DMatrix::from_column_slice(2, 2, &[dt[0], dt[1], dp[0], dp[1]])
            }
            Construction::ConeSection(ConeSection::Polar { h, g1, g3 }) => {
                let (t, p) = (u[0], u[1]);
                let (a, b) = (poly_eval(g1, t), poly_eval(g3, t));
                let r = p * a + (1.0 - p) * b;
                let dr_t = p * poly_deriv(g1, t) + (1.0 - p) * poly_deriv(g3, t);
                let th = poly_eval(h, t);
                let dth = poly_deriv(h, t);
                let (s, c) = th.sin_cos();
                DMatrix::from_column_slice(
                    2,
                    2,
                    &[dr_t * c - r * dth * s, dr_t * s + r * dth * c, (a - b) * c, (a - b) * s],
                )
            }
            Construction::TriangleTwoCurved { h1, g1, h2, g2 } => {
                let x = tri_i(h1, g1, h2, g2, u);
                let (_, dj) = tri_j(h1, g1, h2, g2, &x);
                let m = DMatrix::from_row_slice(2, 2, &[dj[0][0], dj[0][1], dj[1][0], dj[1][1]]);
                m.try_inverse().unwrap_or_else(|| DMatrix::from_element(2, 2, f64::NAN))
            }
            Construction::QuadFourCurved { h, g, a, b } => {
                let (t, p) = (u[0], u[1]);
                let (h1, h2, h3, h4) = (&h[0], &h[1], &h[2], &h[3]);
                let (g1, g2, g3, g4) = (&g[0], &g[1], &g[2], &g[3]);
                let pp = p * poly_eval(h3, t) / a + (1.0 - p) * poly_eval(h1, t);
                let pp_t = p * poly_deriv(h3, t) / a + (1.0 - p) * poly_deriv(h1, t);
                let pp_p = poly_eval(h3, t) / a - poly_eval(h1, t);
                let (h2p, h4p) = (poly_eval(h2, p), poly_eval(h4, p));
                let x_t = pp_t * (h2p - h4p);
                let x_p = pp_p * (h2p - h4p) + pp * poly_deriv(h2, p) + (1.0 - pp) * poly_deriv(h4, p);
                let qq = t * poly_eval(g2, p) / b + (1.0 - t) * poly_eval(g4, p);
                let qq_t = poly_eval(g2, p) / b - poly_eval(g4, p);
                let qq_p = t * poly_deriv(g2, p) / b + (1.0 - t) * poly_deriv(g4, p);
                let (g3t, g1t) = (poly_eval(g3, t), poly_eval(g1, t));
                let y_t = qq_t * (g3t - g1t) + qq * poly_deriv(g3, t) + (1.0 - qq) * poly_deriv(g1, t);
                let y_p = qq_p * (g3t - g1t);
                DMatrix::from_row_slice(2, 2, &[x_t, x_p, y_t, y_p])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(shape: &CellShape, u: &[f64]) {
        let j = shape.jacobian(u);
        let eps = 1e-6;
        for k in 0..u.len() {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[k] += eps;
            um[k] -= eps;
            let (fp, fm) = (shape.eval(&up), shape.eval(&um));
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                assert!((fd - j[(i, k)]).abs() < 1e-7, "{:?} {i} {k}: {fd} vs {}", shape.construction, j[(i, k)]);
            }
        }
        let x = shape.eval(u);
        let back = shape.inverse(&x);
        for k in 0..u.len() {
            assert!((back[k] - u[k]).abs() < 1e-11, "{:?}: {back:?} vs {u:?}", shape.construction);
        }
    }

    #[test]
    fn jacobians_and_inverses() {
        let shapes = vec![
            Construction::ParametrizedSegment(Curve::UnitCircleChord {
                beta: 0.3,
                half_angle: 1.4,
            }),
            Construction::ParametrizedSegment(Curve::Polar {
                r: vec![1.0, 0.2, 0.1],
                theta: vec![0.1, 0.5],
            }),
            Construction::ConeSection(ConeSection::SphereBoundary {
                beta: 0.7,
                half_angle: 1.45,
                rho: 0.8,
            }),
            Construction::ConeSection(ConeSection::Polar {
                h: vec![0.2, 0.4],
                g1: vec![2.0, -0.5, 0.0],
                g3: vec![1.0, 0.3, -0.3],
            }),
            Construction::TriangleTwoCurved {
                h1: vec![0.0, 0.8, 0.2],
                g1: vec![0.0, -0.1, 0.1],
                h2: vec![0.0, 1.1, -0.1],
                g2: vec![1.0, -1.2, 0.2],
            },
            Construction::QuadFourCurved {
                h: [vec![0.0, 1.0], vec![1.0, 0.1], vec![0.0, 1.1], vec![0.0, 0.0, 0.05, -0.05]],
                g: [vec![0.0, 0.0, 0.1, -0.1], vec![0.0, 1.05], vec![1.0, 0.05], vec![0.0, 1.0]],
                a: 1.1,
                b: 1.05,
            },
        ];
        for c in shapes {
            let s = c.shape();
            let pts: Vec<Vec<f64>> = match s.ref_domain() {
                RefDomain::Interval { a, b } => vec![vec![a + 0.3 * (b - a)], vec![a + 0.8 * (b - a)]],
                RefDomain::Rectangle { x0, x1, y0, y1 } => vec![
                    vec![x0 + 0.3 * (x1 - x0), y0 + 0.6 * (y1 - y0)],
                    vec![x0 + 0.9 * (x1 - x0), y0 + 0.2 * (y1 - y0)],
                ],
                _ => vec![vec![0.2, 0.3], vec![0.6, 0.1]],
            };
            for u in pts {
                fd_check(&s, &u);
            }
        }
    }

    #[test]
    fn flat_triangle_is_affine() {
        let s = Construction::TriangleTwoCurved {
            h1: vec![0.0, 1.0],
            g1: vec![0.0],
            h2: vec![0.0, 1.0],
            g2: vec![1.0, -1.0],
        }
        .shape();
        for u in [[0.1, 0.2], [0.5, 0.25], [0.0, 0.9]] {
            let x = s.eval(&u);
            assert!((x[0] - u[0]).abs() < 1e-14 && (x[1] - u[1]).abs() < 1e-14);
        }
    }
}
