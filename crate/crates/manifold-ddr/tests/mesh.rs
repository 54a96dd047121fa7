use manifold_ddr::cells::{ConeSection, Construction};
use manifold_ddr::geometry::{CellMap, PairMode};
use manifold_ddr::mesh::{stereographic_lambda, transition, ChartSpec, Mesh, Pole};
use manifold_ddr::meshgen::*;

fn coarse_sphere() -> Mesh {
    gen_sphere(SphereGenParams::rs_for_segments(28)).unwrap()
}

fn census_of_chart(mesh: &Mesh, chart: usize) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for f in mesh.cells[2].iter().filter(|f| f.chart == chart) {
        match &f.construction {
            Construction::ConeSection(_) => c.0 += 1,
            Construction::FlatPolygon { vertices } => match vertices.len() {
                3 => c.1 += 1,
                4 => c.2 += 1,
                5 => c.3 += 1,
                n => panic!("unexpected {n}-gon"),
            },
            _ => panic!("unexpected construction"),
        }
    }
    c
}

#[test]
fn torus_counts_and_validation() {
    let m = gen_torus(2).unwrap();
    assert_eq!((m.n_cells(0), m.n_cells(1), m.n_cells(2)), (4, 8, 4));
    assert_eq!(m.euler_characteristic(), 0);
    for n in [4, 8] {
        let m = gen_torus(n).unwrap();
        let r = m.validate(1e-12);
        assert!(r.passed(), "{:?}", r.failures);
        assert!(r.max_affine_residual < 1e-12);
        assert!((m.h_max().unwrap() - 1.0 / n as f64).abs() < 1e-14);
    }
    assert!(gen_torus(1).is_err());
}

#[test]
fn torus_faces_have_four_edges_shared_with_opposite_sign() {
    let m = gen_torus(3).unwrap();
    let ef = m.edge_faces();
    for (f, inc) in m.boundary[2].iter().enumerate() {
        assert_eq!(inc.len(), 4);
        let signs: Vec<i8> = inc.iter().map(|i| i.sign).collect();
        assert_eq!(signs, vec![1, 1, -1, -1], "face {f}");
        for i in inc {
            let other: Vec<_> = ef[i.sub].iter().filter(|(g, _)| *g != f).collect();
            assert_eq!(other.len(), 1);
            assert_eq!(other[0].1, -i.sign);
        }
    }
}

#[test]
fn coarse_sphere_census() {
    let m = coarse_sphere();
    for chart in 0..2 {
        assert_eq!(census_of_chart(&m, chart), (28, 16, 4, 12));
    }
    assert_eq!(m.euler_characteristic(), 2);
    let r = m.validate(1e-10);
    assert!(r.passed(), "{:?}", r.failures);
    assert!(r.max_size_ratio < 10.0);
}

#[test]
fn fine_sphere_census() {
    let m = gen_sphere(0.0178).unwrap();
    assert_eq!(census_of_chart(&m, 0), (346, 34, 4472, 312));
    assert_eq!(m.euler_characteristic(), 2);
}

#[test]
fn sphere_sequence_validates_and_halves() {
    let mut prev: Option<f64> = None;
    for segs in [28, 62, 130] {
        let m = gen_sphere(SphereGenParams::rs_for_segments(segs)).unwrap();
        assert_eq!(m.euler_characteristic(), 2);
        let r = m.validate(1e-10);
        assert!(r.passed(), "{segs}: {:?}", r.failures);
        let h = m.h_max().unwrap();
        if let Some(p) = prev {
            let q = h / p;
            assert!((0.4..=0.6).contains(&q), "h ratio {q}");
        }
        prev = Some(h);
    }
}

#[test]
fn equator_is_shared_between_charts() {
    let m = coarse_sphere();
    let charts = &m.charts;
    for (e, c) in m.cells[1].iter().enumerate() {
        if !matches!(c.construction, Construction::ParametrizedSegment(manifold_ddr::cells::Curve::UnitCircleChord { .. })) {
            continue;
        }
        let tr = m.chart_transition_edge(e, 0, 1).unwrap();
        for t in [-0.5, -0.2, 0.1, 0.5] {
            let x = m.shape(1, e).eval(&[t]);
            let y = tr(&x);
            assert!((x[0] - y[0]).abs() < 1e-13 && (x[1] - y[1]).abs() < 1e-13);
        }
    }
    let y = transition(charts, 0, 1, &[2.0, 0.0], None).unwrap();
    assert_eq!(y, vec![0.5, 0.0]);
    assert!(m.chart_transition_edge(m.n_cells(1) - 1, 0, 1).is_err());
}

#[test]
fn torus_transition() {
    let m = gen_torus(4).unwrap();
    let y = transition(&m.charts, 0, 1, &[1.0 - 1e-9, 0.3], None).unwrap();
    assert!(y[0].abs() < 1e-8);
}

#[test]
fn flipped_sign_is_detected() {
    let mut m = gen_torus(3).unwrap();
    m.boundary[2][4][1].sign *= -1;
    let r = m.validate(1e-10);
    assert!(!r.passed());
    assert!(r.failures.iter().any(|f| f.contains("boundary of boundary")));
}

#[test]
fn json_roundtrip() {
    let m = coarse_sphere();
    let s = m.to_json().unwrap();
    let back = Mesh::from_json(&s).unwrap();
    assert_eq!(back.cells, m.cells);
    assert_eq!(back.boundary[2], m.boundary[2]);
    assert!(back.validate(1e-10).passed());
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["format"], 1);
    assert_eq!(v["manifold"], "sphere");
    assert!(Mesh::from_json(&s.replace("\"format\":1", "\"format\":7")).is_err());
}

#[test]
fn spherical_cell_area() {
    let m = coarse_sphere();
    let total: f64 = (0..m.n_cells(2))
        .map(|f| m.geometry(2, f).quadrature(14).unwrap().measure())
        .sum();
    assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-6, "{total}");
    // a flat triangle of the north chart against a fine tensor integration of λ
    let f = m.cells[2]
        .iter()
        .position(|c| matches!(&c.construction, Construction::FlatPolygon { vertices } if vertices.len() == 3))
        .unwrap();
    let g = m.geometry(2, f);
    let q = g.quadrature(30).unwrap();
    let one = manifold_ddr::exterior::AlternatingValue::scalar(1.0, 2);
    let area = manifold_ddr::geometry::integrate_pair(&q, |_| one.clone(), |_| one.clone(), PairMode::WedgeStar);
    let Construction::FlatPolygon { vertices } = &m.cells[2][f].construction else {
        unreachable!()
    };
    let n = 400;
    let mut reference = 0.0;
    let [a, b, c] = [vertices[0], vertices[1], vertices[2]];
    let det = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
    let at = |s: f64, t: f64| {
        let x = [a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]), a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1])];
        stereographic_lambda(&x) * det * 0.5 / (n * n) as f64
    };
    // centroid rule on a uniform subdivision into n² triangles
    for i in 0..n {
        for j in 0..n - i {
            reference += at((i as f64 + 1.0 / 3.0) / n as f64, (j as f64 + 1.0 / 3.0) / n as f64);
            if i + j + 1 < n {
                reference += at((i as f64 + 2.0 / 3.0) / n as f64, (j as f64 + 2.0 / 3.0) / n as f64);
            }
        }
    }
    assert!((area - reference).abs() < 1e-5 * reference, "{area} {reference}");
}

#[test]
fn cone_cell_traces() {
    let h = vec![0.1, 0.5];
    let g1 = vec![2.0, -0.8];
    let g3 = vec![1.0, 0.1, -0.1];
    let c = cone_cell(h.clone(), g1.clone(), g3.clone()).unwrap();
    let s = c.shape();
    let x = s.eval(&[0.3, 0.0]);
    let r = 1.0 + 0.1 * 0.3 - 0.1 * 0.09;
    let th: f64 = 0.1 + 0.5 * 0.3;
    assert!((x[0] - r * th.cos()).abs() < 1e-15 && (x[1] - r * th.sin()).abs() < 1e-15);
    let x = s.eval(&[0.0, 0.4]);
    assert!((x[0] - 1.4 * 0.1f64.cos()).abs() < 1e-15);
    let m = single_cell_mesh(c, &cone_edges(&h, &g1, &g3)).unwrap();
    let rep = m.validate(1e-12);
    assert!(rep.passed(), "{:?}", rep.failures);
    assert!(cone_cell(vec![0.5, -0.1], g1.clone(), g3.clone()).is_err());
    assert!(cone_cell(h, vec![1.0], g3).is_err());
}

#[test]
fn triangle_two_curved_traces() {
    let (h1, g1) = (vec![0.0, 0.8, 0.2], vec![0.0, -0.1, 0.1]);
    let (h2, g2) = (vec![0.0, 1.1, -0.1], vec![1.0, -1.2, 0.2]);
    let c = tri_two_curved(h1.clone(), g1.clone(), h2.clone(), g2.clone()).unwrap();
    let s = c.shape();
    for t in [0.0, 0.25, 0.5, 1.0] {
        let x = [manifold_ddr::cells::poly_eval(&h2, t), manifold_ddr::cells::poly_eval(&g2, t)];
        if t < 1.0 {
            let u = s.inverse(&x);
            assert!((u[0] - t).abs() < 1e-13 && (u[1] - (1.0 - t)).abs() < 1e-13, "{t}: {u:?}");
        }
        if t > 0.0 && t < 1.0 {
            let u = s.inverse(&[0.0, t]);
            assert!(u[0].abs() < 1e-13 && (u[1] - t).abs() < 1e-13);
        }
    }
    let m = single_cell_mesh(c, &tri_two_curved_edges(&h1, &g1, &h2, &g2)).unwrap();
    let rep = m.validate(1e-10);
    assert!(rep.passed(), "{:?}", rep.failures);
    assert!(tri_two_curved(vec![0.0, 0.5], g1, h2, g2).is_err());
}

#[test]
fn quad_four_curved_traces() {
    let a = 1.1;
    let b = 1.05;
    let h = [vec![0.0, 1.0], vec![1.0, a - 1.0], vec![0.0, a], vec![0.0, 0.0, 0.05, -0.05]];
    let g = [vec![0.0, 0.0, 0.1, -0.1], vec![0.0, b], vec![1.0, b - 1.0], vec![0.0, 1.0]];
    let c = quad_four_curved(h.clone(), g.clone(), a, b).unwrap();
    let s = c.shape();
    for t in [0.0, 0.3, 1.0] {
        let x = s.eval(&[t, 0.0]);
        assert!((x[0] - manifold_ddr::cells::poly_eval(&h[0], t)).abs() < 1e-14);
        assert!((x[1] - manifold_ddr::cells::poly_eval(&g[0], t)).abs() < 1e-14);
        let x = s.eval(&[1.0, t]);
        assert!((x[0] - manifold_ddr::cells::poly_eval(&h[1], t)).abs() < 1e-14);
        assert!((x[1] - manifold_ddr::cells::poly_eval(&g[1], t)).abs() < 1e-14);
    }
    let m = single_cell_mesh(c, &quad_four_curved_edges(&h, &g)).unwrap();
    let rep = m.validate(1e-10);
    assert!(rep.passed(), "{:?}", rep.failures);
    let mut bad = g.clone();
    bad[0] = vec![0.0, 6.0, -6.0];
    assert!(quad_four_curved(h, bad, a, b).is_err());
}

#[test]
fn sphere_boundary_cone_orientation() {
    let m = coarse_sphere();
    for c in &m.cells[2] {
        let expect = if m.charts[c.chart] == (ChartSpec::Stereographic { pole: Pole::South }) { -1 } else { 1 };
        assert_eq!(c.orientation, expect);
        if let Construction::ConeSection(ConeSection::SphereBoundary { .. }) = c.construction {
            assert!(c.construction.shape().jacobian(&[0.0, 0.5]).determinant() > 0.0);
        }
    }
}
