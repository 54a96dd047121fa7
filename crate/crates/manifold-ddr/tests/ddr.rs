use std::f64::consts::PI;

use manifold_ddr::ddr::{DdrComplex, Sampler};
use manifold_ddr::exterior::AlternatingValue;
use manifold_ddr::mesh::Mesh;
use manifold_ddr::meshgen::{gen_sphere, gen_torus, SphereGenParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sphere() -> Mesh {
    gen_sphere(SphereGenParams::rs_for_segments(28)).unwrap()
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Embedded `X = 2x/(1+ρ²)`, identical in both stereographic charts.
fn embed_x(_c: usize, x: &[f64]) -> AlternatingValue {
    AlternatingValue::scalar(2.0 * x[0] / (1.0 + x[0] * x[0] + x[1] * x[1]), 2)
}

fn embed_dx(_c: usize, x: &[f64]) -> AlternatingValue {
    let s = 1.0 + x[0] * x[0] + x[1] * x[1];
    AlternatingValue::new(2, 1, vec![2.0 / s - 4.0 * x[0] * x[0] / (s * s), -4.0 * x[0] * x[1] / (s * s)])
}

fn wave(_c: usize, x: &[f64]) -> AlternatingValue {
    AlternatingValue::scalar((2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(), 2)
}

fn dwave(_c: usize, x: &[f64]) -> AlternatingValue {
    let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
    AlternatingValue::new(2, 1, vec![2.0 * PI * a.cos() * b.cos(), -2.0 * PI * a.sin() * b.sin()])
}

fn check_identities(mesh: &Mesh, r: u32) {
    let cx = DdrComplex::new(mesh, r).unwrap();
    let d0 = cx.global_derivative(0).unwrap();
    let d1 = cx.global_derivative(1).unwrap();
    assert_eq!((d0.nrows, d0.ncols), (cx.ndofs(1), cx.ndofs(0)));
    let dd = d1.mul(&d0).unwrap();
    let complex = dd.max_abs() / (d1.max_abs() * d0.max_abs());
    let x0 = random_vec(cx.ndofs(0), 1);
    let x1 = random_vec(cx.ndofs(1), 2);
    let x2 = random_vec(cx.ndofs(2), 3);
    let proj = [0, 1, 2].map(|k| cx.projection_residual(k, [&x0, &x1, &x2][k]).unwrap());
    let link = [1, 2].map(|k| cx.link_residual(k, [&x0, &x1][k - 1]).unwrap());
    let stokes = cx.stokes_residual(&x0).unwrap();
    eprintln!("r={r} complex {complex:.2e} proj {proj:?} link {link:?} stokes {stokes:.2e} cond {:.2e}", cx.max_condition(0).max(cx.max_condition(1)));
    assert!(complex < 1e-12);
    assert!(proj.iter().all(|p| *p < 1e-12), "{proj:?}");
    assert!(link.iter().all(|p| *p < 1e-12), "{link:?}");
    assert!(stokes < 1e-11);
}

#[test]
fn torus_identities() {
    let m = gen_torus(3).unwrap();
    for r in 0..=2 {
        check_identities(&m, r);
    }
}

#[test]
fn sphere_identities() {
    let m = sphere();
    for r in 0..=2 {
        check_identities(&m, r);
    }
}

#[test]
fn torus_dof_counts() {
    let m = gen_torus(2).unwrap();
    let cx = DdrComplex::new(&m, 0).unwrap();
    assert_eq!([cx.ndofs(0), cx.ndofs(1), cx.ndofs(2)], [4, 8, 4]);
    let d0 = cx.global_derivative(0).unwrap();
    assert_eq!((d0.nrows, d0.ncols), (8, 4));
    let cx = DdrComplex::new(&m, 2).unwrap();
    // vertices 1, edges r, faces r(r+1)/2; edges r+1, faces r(r+2); faces (r+1)(r+2)/2
    assert_eq!([cx.ndofs(0), cx.ndofs(1), cx.ndofs(2)], [4 + 8 * 2 + 4 * 3, 8 * 3 + 4 * 8, 4 * 6]);
}

#[test]
fn constants_have_zero_derivative() {
    let m = sphere();
    let cx = DdrComplex::new(&m, 1).unwrap();
    let one = |_c: usize, _x: &[f64]| AlternatingValue::scalar(1.0, 2);
    let i = cx.interpolate(0, &one).unwrap();
    let d = cx.global_derivative(0).unwrap().matvec(&i.values);
    assert!(d.iter().all(|v| v.abs() < 1e-12));
    let again = cx.interpolate(0, &one).unwrap();
    assert_eq!(i, again);
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Commutation defect at the default quadrature, and a quadrature error
/// estimate from the same defect at a higher degree.
fn commutation(mesh: &Mesh, r: u32, f: &Sampler, df: &Sampler) -> (f64, f64) {
    let lo = DdrComplex::new(mesh, r).unwrap();
    let hi = DdrComplex::with_quadrature(mesh, r, lo.quad_degree + 8).unwrap();
    let scale = max_abs(&lo.interpolate(1, df).unwrap().values);
    let a = lo.commutation_defect(0, f, df).unwrap();
    let b = hi.commutation_defect(0, f, df).unwrap();
    let est: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    (max_abs(&a) / scale, max_abs(&est) / scale)
}

#[test]
fn commutation_torus_and_sphere() {
    let t = gen_torus(4).unwrap();
    let s = sphere();
    for r in 0..=2 {
        for (name, (defect, est)) in [("torus", commutation(&t, r, &wave, &dwave)), ("sphere", commutation(&s, r, &embed_x, &embed_dx))] {
            assert!(defect <= 10.0 * est + 1e-13, "{name} r={r}: {defect:.3e} vs estimate {est:.3e}");
            assert!(defect < 1e-5);
        }
    }
}

#[test]
fn inner_product_is_spd_and_consistent() {
    let m = sphere();
    let cx = DdrComplex::new(&m, 2).unwrap();
    for k in 0..=2 {
        let mk = cx.inner_product_matrix(k).unwrap();
        assert!(mk.max_asymmetry() < 1e-12 * mk.max_abs());
        let x = random_vec(cx.ndofs(k), 7 + k as u64);
        let v = manifold_ddr::sparse::dot(&x, &mk.matvec(&x));
        assert!(v > 0.0);
        let y: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        let w = manifold_ddr::sparse::dot(&y, &mk.matvec(&y));
        assert!((w - 4.0 * v).abs() < 1e-12 * w);
    }
    let i = cx.interpolate(0, &embed_x).unwrap();
    let m0 = cx.inner_product_matrix(0).unwrap();
    let discrete = manifold_ddr::sparse::dot(&i.values, &m0.matvec(&i.values));
    // ∫ X² over the unit sphere is 4π/3
    let exact = 4.0 * PI / 3.0;
    assert!((discrete - exact).abs() < 1e-2 * exact, "{discrete} {exact}");
}

#[test]
fn betti_numbers() {
    for r in 0..=2 {
        let t = gen_torus(3).unwrap();
        let b = DdrComplex::new(&t, r).unwrap().betti().unwrap();
        assert_eq!(b.numbers, [1, 2, 1], "torus r={r}");
        let s = sphere();
        let b = DdrComplex::new(&s, r).unwrap().betti().unwrap();
        eprintln!("r={r} sphere gaps {:.2e} {:.2e}", b.rank_d0.gap, b.rank_d1.gap);
        assert_eq!(b.numbers, [1, 0, 1], "sphere r={r}");
        assert!(b.rank_d0.gap > 1e3 && b.rank_d1.gap > 1e3);
    }
}
