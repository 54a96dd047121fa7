//! Mesh generators for the flat torus and the sphere, and curved-cell constructors.

use std::f64::consts::PI;

use thiserror::Error;

use crate::cells::{poly_deriv, poly_eval, CellShape, ConeSection, Construction, Curve};
use crate::geometry::{CellMap, RefDomain};
use crate::mesh::{ChartSpec, Manifold, Mesh, MeshBuilder, MeshError, Pole};

#[derive(Debug, Error)]
pub enum MeshgenError {
    #[error("torus grid size must be at least 2, got {0}")]
    TorusSize(usize),
    #[error("r_s = {0} outside (0, 1/2)")]
    RsOutOfRange(f64),
    #[error("segment count < 3 (got {0})")]
    SegmentCount(i64),
    #[error("innermost polygon would have {0} vertices")]
    InnerPolygon(i64),
    #[error("construction hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Sphere generator parameters derived from `r_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereGenParams {
    pub r_s: f64,
    pub segments: usize,
    pub delta_alpha: f64,
    /// Vertex counts of the interior polygons, outermost first.
    pub polygons: Vec<usize>,
}

impl SphereGenParams {
    pub fn new(r_s: f64) -> Result<Self, MeshgenError> {
        if !(r_s > 0.0 && r_s.is_finite()) {
            return Err(MeshgenError::RsOutOfRange(r_s));
        }
        let n = (2.0 * PI * (1.0 - r_s) / r_s + 1e-9).floor() as i64;
        if n < 3 {
            return Err(MeshgenError::SegmentCount(n));
        }
        if r_s >= 0.5 {
            return Err(MeshgenError::RsOutOfRange(r_s));
        }
        let layers = (1.0 / r_s + 1e-9).floor() as i64;
        let count = ((layers - 1) / 2).max(1);
        let polygons: Vec<i64> = (0..count).map(|j| n - 12 * j).collect();
        if let Some(&last) = polygons.last() {
            if last < 3 {
                return Err(MeshgenError::InnerPolygon(last));
            }
        }
        Ok(SphereGenParams {
            r_s,
            segments: n as usize,
            delta_alpha: 2.0 * PI / n as f64,
            polygons: polygons.into_iter().map(|p| p as usize).collect(),
        })
    }

    /// `r_s` giving exactly `segments` boundary cells: `2π/(segments + 2π)`.
    pub fn rs_for_segments(segments: usize) -> f64 {
        2.0 * PI / (segments as f64 + 2.0 * PI)
    }
}

/// Cartesian `n × n` grid on the flat torus with four charts.
pub fn gen_torus(n: usize) -> Result<Mesh, MeshgenError> {
    if n < 2 {
        return Err(MeshgenError::TorusSize(n));
    }
    let charts = vec![
        ChartSpec::PeriodicFlat { origin: [0.0, 0.0] },
        ChartSpec::PeriodicFlat { origin: [-0.5, 0.0] },
        ChartSpec::PeriodicFlat { origin: [0.0, -0.5] },
        ChartSpec::PeriodicFlat { origin: [-0.5, -0.5] },
    ];
    let mut b = MeshBuilder::new(Manifold::Torus, charts);
    let h = 1.0 / n as f64;
    let vid = |i: usize, j: usize| (j % n) * n + (i % n);
    for j in 0..n {
        for i in 0..n {
            b.add_vertex([i as f64 * h, j as f64 * h], 0)?;
        }
    }
    // horizontal edges then vertical edges
    let mut hor = vec![0; n * n];
    let mut ver = vec![0; n * n];
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * h, j as f64 * h);
            hor[j * n + i] = b.add_edge(
                Construction::ParametrizedSegment(Curve::Straight { a: [x, y], b: [x + h, y] }),
                0,
                [vid(i, j), vid(i + 1, j)],
            )?;
        }
    }
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * h, j as f64 * h);
            ver[j * n + i] = b.add_edge(
                Construction::ParametrizedSegment(Curve::Straight { a: [x, y], b: [x, y + h] }),
                0,
                [vid(i, j), vid(i, j + 1)],
            )?;
        }
    }
    for j in 0..n {
        for i in 0..n {
            let (sx, sy) = (i == n - 1, j == n - 1);
            let chart = sx as usize + 2 * sy as usize;
            let x0 = i as f64 * h - if sx { 1.0 } else { 0.0 };
            let y0 = j as f64 * h - if sy { 1.0 } else { 0.0 };
            let vertices = vec![[x0, y0], [x0 + h, y0], [x0 + h, y0 + h], [x0, y0 + h]];
            let edges = [
                hor[j * n + i],
                ver[j * n + (i + 1) % n],
                hor[((j + 1) % n) * n + i],
                ver[j * n + i],
            ];
            b.add_face(Construction::FlatPolygon { vertices }, chart, &edges)?;
        }
    }
    Ok(b.build())
}

fn polar(r: f64, theta: f64) -> [f64; 2] {
    [r * theta.cos(), r * theta.sin()]
}

fn straight(a: [f64; 2], b: [f64; 2]) -> Construction {
    Construction::ParametrizedSegment(Curve::Straight { a, b })
}

/// Two stereographic hemisphere disks glued along the equator.
pub fn gen_sphere(r_s: f64) -> Result<Mesh, MeshgenError> {
    let p = SphereGenParams::new(r_s)?;
    let n = p.segments;
    let da = p.delta_alpha;
    let a = 0.5 * (PI - da);
    let rho = 1.0 - r_s;
    let charts = vec![
        ChartSpec::Stereographic { pole: Pole::North },
        ChartSpec::Stereographic { pole: Pole::South },
    ];
    let mut b = MeshBuilder::new(Manifold::Sphere, charts);
    let theta = |k: usize| (k % n) as f64 * da;

    let eq_v: Vec<usize> = (0..n).map(|k| b.add_vertex(polar(1.0, theta(k)), 0)).collect::<Result<_, _>>()?;
    let eq_e: Vec<usize> = (0..n)
        .map(|k| {
            b.add_edge(
                Construction::ParametrizedSegment(Curve::UnitCircleChord {
                    beta: theta(k) - a,
                    half_angle: a,
                }),
                0,
                [eq_v[(k + 1) % n], eq_v[k]],
            )
        })
        .collect::<Result<_, _>>()?;

    for chart in 0..2 {
        // polygon vertices and sides, outermost first
        let mut pv: Vec<Vec<usize>> = Vec::new();
        let mut pp: Vec<Vec<[f64; 2]>> = Vec::new();
        let mut ps: Vec<Vec<usize>> = Vec::new();
        for (j, &nj) in p.polygons.iter().enumerate() {
            let radius = 1.0 - (2 * j + 1) as f64 * r_s;
            let pts: Vec<[f64; 2]> = (0..nj).map(|i| polar(radius, 2.0 * PI * i as f64 / nj as f64)).collect();
            let ids: Vec<usize> = pts.iter().map(|x| b.add_vertex(*x, chart)).collect::<Result<_, _>>()?;
            let sides: Vec<usize> = (0..nj)
                .map(|i| b.add_edge(straight(pts[i], pts[(i + 1) % nj]), chart, [ids[i], ids[(i + 1) % nj]]))
                .collect::<Result<_, _>>()?;
            pv.push(ids);
            pp.push(pts);
            ps.push(sides);
        }

        // boundary layer
        let radial: Vec<usize> = (0..n)
            .map(|k| b.add_edge(straight(pp[0][k], polar(1.0, theta(k))), chart, [pv[0][k], eq_v[k]]))
            .collect::<Result<_, _>>()?;
        for k in 0..n {
            b.add_face(
                Construction::ConeSection(ConeSection::SphereBoundary {
                    beta: theta(k) - a,
                    half_angle: a,
                    rho,
                }),
                chart,
                &[eq_e[k], radial[k], ps[0][k], radial[(k + 1) % n]],
            )?;
        }

        // rings between consecutive polygons
        for j in 0..p.polygons.len() - 1 {
            let (outer, inner) = (&pp[j], &pp[j + 1]);
            let (no, ni) = (outer.len(), inner.len());
            let nearest: Vec<usize> = inner
                .iter()
                .map(|x| {
                    let mut best = 0;
                    let mut bd = f64::INFINITY;
                    for (o, y) in outer.iter().enumerate() {
                        let d = (x[0] - y[0]).hypot(x[1] - y[1]);
                        // indices increase with polar angle, so strict comparison keeps the smaller angle on ties
                        if d < bd - 1e-12 {
                            best = o;
                            bd = d;
                        }
                    }
                    best
                })
                .collect();
            let conn: Vec<usize> = (0..ni)
                .map(|i| b.add_edge(straight(inner[i], outer[nearest[i]]), chart, [pv[j + 1][i], pv[j][nearest[i]]]))
                .collect::<Result<_, _>>()?;
            for i in 0..ni {
                let i1 = (i + 1) % ni;
                let (o0, o1) = (nearest[i], nearest[i1]);
                let steps = (o1 + no - o0) % no;
                let mut vertices = vec![inner[i]];
                let mut edges = vec![conn[i]];
                for s in 0..=steps {
                    vertices.push(outer[(o0 + s) % no]);
                    if s < steps {
                        edges.push(ps[j][(o0 + s) % no]);
                    }
                }
                vertices.push(inner[i1]);
                edges.push(conn[i1]);
                edges.push(ps[j + 1][i]);
                b.add_face(Construction::FlatPolygon { vertices }, chart, &edges)?;
            }
        }

        // central fan
        let last = p.polygons.len() - 1;
        let nl = pp[last].len();
        let c = b.add_vertex([0.0, 0.0], chart)?;
        let spokes: Vec<usize> = (0..nl)
            .map(|i| b.add_edge(straight([0.0, 0.0], pp[last][i]), chart, [c, pv[last][i]]))
            .collect::<Result<_, _>>()?;
        for i in 0..nl {
            let i1 = (i + 1) % nl;
            b.add_face(
                Construction::FlatPolygon {
                    vertices: vec![[0.0, 0.0], pp[last][i], pp[last][i1]],
                },
                chart,
                &[spokes[i], ps[last][i], spokes[i1]],
            )?;
        }
    }
    Ok(b.build())
}

fn samples() -> impl Iterator<Item = f64> {
    (0..=20).map(|i| i as f64 / 20.0)
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

/// Cone section with a curved edge in polar chart coordinates.
pub fn cone_cell(h: Vec<f64>, g1: Vec<f64>, g3: Vec<f64>) -> Result<Construction, MeshgenError> {
    if samples().any(|t| poly_deriv(&h, t) <= 0.0) {
        return Err(MeshgenError::Hypothesis("h must be strictly increasing".into()));
    }
    if samples().any(|t| poly_eval(&g1, t) - poly_eval(&g3, t) <= 0.0) {
        return Err(MeshgenError::Hypothesis("g1 - g3 must be strictly positive".into()));
    }
    if samples().any(|t| poly_eval(&g3, t) <= 0.0) {
        return Err(MeshgenError::Hypothesis("radii must be positive".into()));
    }
    Ok(Construction::ConeSection(ConeSection::Polar { h, g1, g3 }))
}

/// Edge curves `I₁..I₄` of a polar cone section.
pub fn cone_edges(h: &[f64], g1: &[f64], g3: &[f64]) -> [Curve; 4] {
    let (t1, t2) = (poly_eval(h, 0.0), poly_eval(h, 1.0));
    let (r10, r11) = (poly_eval(g1, 0.0), poly_eval(g1, 1.0));
    let (r30, r31) = (poly_eval(g3, 0.0), poly_eval(g3, 1.0));
    [
        Curve::Polar {
            r: g1.to_vec(),
            theta: h.to_vec(),
        },
        Curve::Polar {
            r: vec![r30, r10 - r30],
            theta: vec![t1],
        },
        Curve::Polar {
            r: g3.to_vec(),
            theta: h.to_vec(),
        },
        Curve::Polar {
            r: vec![r31, r11 - r31],
            theta: vec![t2],
        },
    ]
}

fn check_increasing_unit(h: &[f64], name: &str) -> Result<(), MeshgenError> {
    if !near(poly_eval(h, 0.0), 0.0) || !near(poly_eval(h, 1.0), 1.0) {
        return Err(MeshgenError::Hypothesis(format!("{name} must satisfy {name}(0) = 0, {name}(1) = 1")));
    }
    if samples().any(|t| poly_deriv(h, t) <= 0.0) {
        return Err(MeshgenError::Hypothesis(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn check_jacobian_sign(shape: &CellShape) -> Result<(), MeshgenError> {
    let mut sign = 0.0;
    for i in 1..10 {
        for j in 1..10 {
            let u = [i as f64 / 10.0, j as f64 / 10.0];
            if matches!(shape.ref_domain(), RefDomain::Polygon { .. }) && u[0] + u[1] >= 1.0 {
                continue;
            }
            let d = shape.jacobian(&u).determinant();
            if !d.is_finite() || d == 0.0 || (sign != 0.0 && d.signum() != sign) {
                return Err(MeshgenError::Hypothesis("Jacobian determinant changes sign".into()));
            }
            sign = d.signum();
        }
    }
    Ok(())
}

/// Triangle with two curved edges `(h₁, g₁)`, `(h₂, g₂)` and the straight edge `(0, t)`.
pub fn tri_two_curved(h1: Vec<f64>, g1: Vec<f64>, h2: Vec<f64>, g2: Vec<f64>) -> Result<Construction, MeshgenError> {
    check_increasing_unit(&h1, "h1")?;
    check_increasing_unit(&h2, "h2")?;
    let ends = [
        (poly_eval(&g1, 0.0), 0.0),
        (poly_eval(&g1, 1.0), 0.0),
        (poly_eval(&g2, 0.0), 1.0),
        (poly_eval(&g2, 1.0), 0.0),
    ];
    if ends.iter().any(|(v, e)| !near(*v, *e)) {
        return Err(MeshgenError::Hypothesis("endpoint conditions on g1, g2".into()));
    }
    let c = Construction::TriangleTwoCurved { h1, g1, h2, g2 };
    check_jacobian_sign(&c.shape())?;
    Ok(c)
}

pub fn tri_two_curved_edges(h1: &[f64], g1: &[f64], h2: &[f64], g2: &[f64]) -> [Curve; 3] {
    [
        Curve::Polynomial {
            x: h1.to_vec(),
            y: g1.to_vec(),
        },
        Curve::Polynomial {
            x: h2.to_vec(),
            y: g2.to_vec(),
        },
        Curve::Polynomial {
            x: vec![0.0],
            y: vec![0.0, 1.0],
        },
    ]
}

/// Quadrilateral with four curved edges `(h_i, g_i)`.
pub fn quad_four_curved(h: [Vec<f64>; 4], g: [Vec<f64>; 4], a: f64, b: f64) -> Result<Construction, MeshgenError> {
    let ends = [
        ((0, 0.0), (0.0, 0.0)),
        ((0, 1.0), (1.0, 0.0)),
        ((1, 0.0), (1.0, 0.0)),
        ((1, 1.0), (a, b)),
        ((2, 0.0), (0.0, 1.0)),
        ((2, 1.0), (a, b)),
        ((3, 0.0), (0.0, 0.0)),
        ((3, 1.0), (0.0, 1.0)),
    ];
    for ((i, t), (x, y)) in ends {
        if !near(poly_eval(&h[i], t), x) || !near(poly_eval(&g[i], t), y) {
            return Err(MeshgenError::Hypothesis(format!("endpoint condition on edge {} at t = {t}", i + 1)));
        }
    }
    let c = Construction::QuadFourCurved { h, g, a, b };
    check_jacobian_sign(&c.shape())?;
    Ok(c)
}

pub fn quad_four_curved_edges(h: &[Vec<f64>; 4], g: &[Vec<f64>; 4]) -> [Curve; 4] {
    [0, 1, 2, 3].map(|i| Curve::Polynomial {
        x: h[i].clone(),
        y: g[i].clone(),
    })
}

/// One face with its edges and vertices in a single Euclidean chart.
pub fn single_cell_mesh(face: Construction, edges: &[Curve]) -> Result<Mesh, MeshgenError> {
    let mut b = MeshBuilder::new(Manifold::Custom, vec![ChartSpec::Plane]);
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut ids = Vec::new();
    let mut vertex = |b: &mut MeshBuilder, x: [f64; 2]| -> Result<usize, MeshError> {
        if let Some(i) = points.iter().position(|p| (p[0] - x[0]).hypot(p[1] - x[1]) < 1e-12) {
            return Ok(ids[i]);
        }
        let id = b.add_vertex(x, 0)?;
        points.push(x);
        ids.push(id);
        Ok(id)
    };
    let mut eids = Vec::new();
    for c in edges {
        let RefDomain::Interval { a, b: bb } = c.ref_domain() else {
            unreachable!()
        };
        let v0 = vertex(&mut b, c.point(a))?;
        let v1 = vertex(&mut b, c.point(bb))?;
        eids.push(b.add_edge(Construction::ParametrizedSegment(c.clone()), 0, [v0, v1])?);
    }
    b.add_face(face, 0, &eids)?;
    Ok(b.build())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_params() {
        let p = SphereGenParams::new(SphereGenParams::rs_for_segments(28)).unwrap();
        assert_eq!(p.segments, 28);
        assert_eq!(p.polygons, vec![28, 16]);
        assert_eq!(SphereGenParams::new(0.1833).unwrap().segments, 27);
        assert!(matches!(SphereGenParams::new(0.9), Err(MeshgenError::SegmentCount(0))));
        assert!(matches!(SphereGenParams::new(-1.0), Err(MeshgenError::RsOutOfRange(_))));
    }
}
