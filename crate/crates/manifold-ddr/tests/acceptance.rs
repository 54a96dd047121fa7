//! Acceptance checks, one line per criterion. Exits non-zero if any fails.
//! Criterion numbers given as arguments (`-- 1 9`) select a subset.

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use manifold_ddr::ddr::{DdrComplex, Sampler};
use manifold_ddr::exterior::{
    ext_d, koszul, monomials_of_degree, rat, wedge, AffineMap, AlternatingValue, IndexSet, PolyForm,
};
use manifold_ddr::maxwell::{exact_eval, fit_rate, run_case, CaseId, Field, ReportRow, RunConfig};
use manifold_ddr::mesh::Mesh;
use manifold_ddr::meshgen::{gen_sphere, gen_torus, SphereGenParams};
use manifold_ddr::polyspace::{
    basis_full, basis_trimmed, exact_rank, full_dimension, trace_form, trimmed_dimension, Echelon,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPHERE_SEGMENTS: [usize; 4] = [28, 62, 130, 266];
const TORUS_N: [usize; 3] = [4, 8, 16];

struct Meshes {
    spheres: Vec<Mesh>,
    tori: Vec<Mesh>,
}

impl Meshes {
    fn build() -> Self {
        Meshes {
            spheres: SPHERE_SEGMENTS
                .iter()
                .map(|&s| gen_sphere(SphereGenParams::rs_for_segments(s)).expect("sphere mesh"))
                .collect(),
            tori: TORUS_N.iter().map(|&n| gen_torus(n).expect("torus mesh")).collect(),
        }
    }
}

type Verdict = (bool, String);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn random_form(rng: &mut ChaCha8Rng, d: usize, l: usize, degrees: std::ops::RangeInclusive<u32>) -> PolyForm {
    let idx = IndexSet::all(d, l);
    let mut f = PolyForm::zero(d, l);
    for _ in 0..rng.gen_range(1..=4) {
        let s = rng.gen_range(degrees.clone());
        let mons = monomials_of_degree(d, s);
        let m = mons[rng.gen_range(0..mons.len())].clone();
        let i = idx[rng.gen_range(0..idx.len())];
        let c = rat(rng.gen_range(-9..=9), rng.gen_range(1..=7));
        f = f.add(&PolyForm::term(d, m, i, c));
    }
    f
}

fn exact_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut cases, mut bad) = (0, 0);
    for _ in 0..1000 {
        let d = rng.gen_range(1..=3);
        let r = rng.gen_range(0..=4);
        let l = rng.gen_range(0..=d);
        let a = random_form(&mut rng, d, l, 0..=r);
        if !ext_d(&ext_d(&a)).is_zero() {
            bad += 1;
        }
        if !koszul(&koszul(&a)).is_zero() {
            bad += 1;
        }
        let h = random_form(&mut rng, d, l, r..=r);
        // κ vanishes on 0-forms
        let kd = koszul(&ext_d(&h));
        let lhs = if l == 0 { kd } else { ext_d(&koszul(&h)).add(&kd) };
        if lhs != h.scale(&rat((r as usize + l) as i64, 1)) {
            bad += 1;
        }
        let m = rng.gen_range(0..=d);
        let b = random_form(&mut rng, d, m, 0..=r);
        let ab = wedge(&a, &b).expect("same dimension");
        let ba = wedge(&b, &a).expect("same dimension");
        let sign = if (l * m) % 2 == 0 { 1 } else { -1 };
        if ab != ba.scale(&rat(sign, 1)) {
            bad += 1;
        }
        cases += 4;
    }
    (bad == 0, format!("{cases} exact identities, {bad} violations"))
}

fn binom(n: i64, k: i64) -> usize {
    if k == 0 {
        return 1;
    }
    if n < 0 || k < 0 || k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) as usize / (i + 1) as usize)
}

fn image(forms: &[PolyForm], op: fn(&PolyForm) -> PolyForm) -> Vec<PolyForm> {
    forms.iter().map(op).collect()
}

fn full_forms(d: usize, r: i64, l: usize) -> Vec<PolyForm> {
    if r < 0 || l > d {
        return Vec::new();
    }
    basis_full(d, r as u32, l).expect("valid full space").forms
}

/// Ranks of `A`, `B`, `A ∪ B` for a claimed direct sum `A ⊕ B`.
fn sum_ranks(a: &[PolyForm], b: &[PolyForm]) -> (usize, usize, usize) {
    let all: Vec<PolyForm> = a.iter().chain(b).cloned().collect();
    (exact_rank(a), exact_rank(b), exact_rank(&all))
}

fn space_structure() -> Verdict {
    let mut failures = Vec::new();
    for d in 1..=3usize {
        for r in 0..=4i64 {
            for l in 0..=d {
                let dim = full_dimension(d, r as u32, l);
                let kappa = image(&full_forms(d, r - 1, l + 1), koszul);
                let exact = if l == 0 {
                    vec![PolyForm::constant(d, rat(1, 1))]
                } else {
                    image(&full_forms(d, r + 1, l - 1), ext_d)
                };
                let (ra, rb, rs) = sum_ranks(&exact, &kappa);
                if ra + rb != rs || rs != dim || exact_rank(&full_forms(d, r, l)) != dim {
                    failures.push(format!("full d={d} r={r} l={l}"));
                }
                if l >= 1 {
                    let (ra, rb, rs) = sum_ranks(&image(&full_forms(d, r, l - 1), ext_d), &kappa);
                    let trimmed = basis_trimmed(d, r as u32, l).expect("valid trimmed space");
                    let formula = binom(r + d as i64, r + l as i64) * binom(r + l as i64 - 1, l as i64);
                    if ra + rb != rs
                        || rs != trimmed.len()
                        || exact_rank(&trimmed.forms) != rs
                        || trimmed_dimension(d, r as u32, l) != rs
                        || (d == 2 && formula != rs)
                    {
                        failures.push(format!("trimmed d={d} r={r} l={l}"));
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut traces = 0;
    for (d, sub) in [(2, 1), (3, 1), (3, 2)] {
        for _ in 0..4 {
            let dyadic = |rng: &mut ChaCha8Rng| rng.gen_range(-8..=8) as f64 / 4.0;
            let matrix: Vec<Vec<f64>> = (0..d).map(|_| (0..sub).map(|_| dyadic(&mut rng)).collect()).collect();
            let offset: Vec<f64> = (0..d).map(|_| dyadic(&mut rng)).collect();
            let t = AffineMap::new(matrix, offset);
            for r in 0..=(if d == 3 { 3 } else { 4 }) {
                for l in 0..=sub {
                    let mut target = Echelon::new();
                    for f in basis_trimmed(sub, r, l).expect("valid trimmed space").forms {
                        target.insert(&f);
                    }
                    for g in basis_trimmed(d, r, l).expect("valid trimmed space").forms {
                        traces += 1;
                        let tr = trace_form(&t, &g).expect("trace");
                        if !target.contains(&tr) {
                            failures.push(format!("trace d={d}->{sub} r={r} l={l}"));
                        }
                    }
                }
            }
        }
    }
    let n = failures.len();
    failures.truncate(3);
    (n == 0, format!("{traces} trimmed traces checked, {n} failures {failures:?}"))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Embedded coordinate `X = 2x/(1+ρ²)`, the same expression in both charts.
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

fn complex_identities(meshes: &Meshes) -> Verdict {
    let mut worst = [0.0_f64; 4];
    let mut ok = true;
    let cases: Vec<(&Mesh, &Sampler, &Sampler)> = meshes.spheres[..2]
        .iter()
        .map(|m| (m, &embed_x as &Sampler, &embed_dx as &Sampler))
        .chain(meshes.tori[..2].iter().map(|m| (m, &wave as &Sampler, &dwave as &Sampler)))
        .collect();
    for (mesh, f, df) in cases {
        for r in 0..=2 {
            let cx = DdrComplex::new(mesh, r).expect("complex");
            let d0 = cx.global_derivative(0).expect("d0");
            let d1 = cx.global_derivative(1).expect("d1");
            let dd = d1.mul(&d0).expect("shapes").max_abs() / (d1.max_abs() * d0.max_abs());
            let x: Vec<Vec<f64>> = (0..3).map(|k| random_vec(cx.ndofs(k), 5 + k as u64)).collect();
            let proj = (0..3).map(|k| cx.projection_residual(k, &x[k]).expect("projection")).fold(0.0, f64::max);
            let link = (1..3).map(|k| cx.link_residual(k, &x[k - 1]).expect("link")).fold(0.0, f64::max);
            let hi = DdrComplex::with_quadrature(mesh, r, cx.quad_degree + 8).expect("complex");
            let scale = max_abs(&cx.interpolate(1, df).expect("interpolate").values);
            let a = cx.commutation_defect(0, f, df).expect("defect");
            let b = hi.commutation_defect(0, f, df).expect("defect");
            let est = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
            let defect = max_abs(&a) / scale;
            ok &= dd <= 1e-12 && proj <= 1e-12 && link <= 1e-12 && defect <= 10.0 * est + 1e-13;
            worst[0] = worst[0].max(dd);
            worst[1] = worst[1].max(proj);
            worst[2] = worst[2].max(link);
            worst[3] = worst[3].max(defect / est.max(1e-300));
        }
    }
    (
        ok,
        format!(
            "|d1 d0| {:.1e}, projection {:.1e}, link {:.1e}, commutation/estimate {:.2}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn cohomology(meshes: &Meshes) -> Verdict {
    let mut ok = true;
    let mut min_gap = f64::INFINITY;
    let mut seen = Vec::new();
    let cases = meshes.spheres[..2].iter().map(|m| (m, [1, 0, 1])).chain(meshes.tori[..2].iter().map(|m| (m, [1, 2, 1])));
    for (mesh, expect) in cases {
        for r in 0..=2 {
            let b = DdrComplex::new(mesh, r).expect("complex").betti().expect("betti");
            min_gap = min_gap.min(b.rank_d0.gap).min(b.rank_d1.gap);
            ok &= b.numbers == expect;
            seen.push(b.numbers);
        }
    }
    seen.dedup();
    ok &= min_gap >= 1e3;
    (ok, format!("Betti numbers {seen:?}, smallest gap {min_gap:.1e}"))
}

fn primal_consistency(meshes: &Meshes) -> Verdict {
    let mut ok = true;
    let mut slopes = Vec::new();
    let t = 1.0;
    for r in 0..=2 {
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for mesh in &meshes.spheres[..3] {
            let charts = &mesh.charts;
            let omega = |c: usize, x: &[f64]| exact_eval(CaseId::SphereSmooth, Field::E, &charts[c], x, t).expect("sphere chart");
            let cx = DdrComplex::new(mesh, r).expect("complex");
            let i = cx.interpolate(1, &omega).expect("interpolate");
            errs.push(cx.potential_error(1, &i.values, &omega).expect("potential error"));
            hs.push(mesh.h_max().expect("mesh size"));
        }
        let s = fit_rate(&hs, &errs);
        ok &= s >= r as f64 + 0.8;
        slopes.push(format!("r={r} {s:.2}"));
    }
    (ok, format!("slopes {}", slopes.join(", ")))
}

fn smooth_rows(meshes: &Meshes) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for r in 0..=1 {
        for mesh in &meshes.spheres[..3] {
            let (row, _) = run_case(mesh, CaseId::SphereSmooth, &RunConfig::new(r)).expect("smooth run");
            rows.push(row);
        }
    }
    rows
}

fn conservation(rows: &[ReportRow]) -> Verdict {
    let coarse: Vec<&ReportRow> = rows.iter().filter(|row| row.ndof == rows.iter().filter(|o| o.r == row.r).map(|o| o.ndof).min().unwrap_or(0)).collect();
    let drift = coarse.iter().map(|r| r.energy_drift).fold(0.0, f64::max);
    let constraint = coarse.iter().map(|r| r.constraint_max).fold(0.0, f64::max);
    let others = rows.iter().map(|r| r.energy_drift).fold(0.0, f64::max);
    (
        coarse.len() == 2 && drift < 1e-11 && constraint < 1e-10,
        format!("coarsest mesh: energy drift {drift:.2e}, constraint {constraint:.2e} (all meshes: drift {others:.2e})"),
    )
}

fn rates(rows: &[ReportRow]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (r, e_target, b_min) in [(0, 1.85, 2.0), (1, 2.66, 3.0)] {
        let group: Vec<&ReportRow> = rows.iter().filter(|o| o.r == r).collect();
        let h: Vec<f64> = group.iter().map(|o| o.h).collect();
        let e = fit_rate(&h, &group.iter().map(|o| o.err_e).collect::<Vec<_>>());
        let b = fit_rate(&h, &group.iter().map(|o| o.err_b).collect::<Vec<_>>());
        let e_ok = (e - e_target).abs() <= 0.5;
        let b_ok = b >= b_min;
        ok &= e_ok && b_ok;
        parts.push(format!(
            "r={r} E {e:.2} ({}), B {b:.2} ({})",
            if e_ok { "ok" } else { "out of band" },
            if b_ok { "ok" } else { "below target" }
        ));
    }
    (ok, parts.join("; "))
}

fn c0_reduction(meshes: &Meshes) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let cases = [(CaseId::SphereC0, &meshes.spheres[2..4]), (CaseId::TorusC0, &meshes.tori[..2])];
    for (case, pair) in cases {
        let mut ratios = Vec::new();
        for mesh in pair {
            let err = |r: u32| {
                let cfg = RunConfig {
                    dt: 1e-2,
                    ..RunConfig::new(r)
                };
                run_case(mesh, case, &cfg).expect("C0 run").0.err_e
            };
            let ratio = err(0) / err(1);
            ok &= ratio >= 5.0;
            ratios.push(format!("{ratio:.2}"));
        }
        parts.push(format!("{case} E(r=0)/E(r=1) {}", ratios.join(", ")));
    }
    (ok, parts.join("; "))
}

fn census(meshes: &Meshes) -> Verdict {
    let coarse = &meshes.spheres[0];
    let per_chart: Vec<_> = (0..2)
        .map(|c| {
            let k = coarse.chart_census(c);
            (k.boundary_cells, k.triangles, k.quads, k.pentagons, k.other)
        })
        .collect();
    let census_ok = per_chart.iter().all(|c| *c == (28, 16, 4, 12, 0));
    let chi_s: Vec<i64> = meshes.spheres.iter().map(|m| m.euler_characteristic()).collect();
    let chi_t: Vec<i64> = meshes.tori.iter().map(|m| m.euler_characteristic()).collect();
    let ok = census_ok && chi_s.iter().all(|&c| c == 2) && chi_t.iter().all(|&c| c == 0);
    (ok, format!("per chart {:?}, chi sphere {chi_s:?}, chi torus {chi_t:?}", per_chart[0]))
}

fn main() {
    let start = Instant::now();
    let meshes = Meshes::build();
    println!("meshes built in {:.1}s", start.elapsed().as_secs_f64());
    let smooth = std::cell::OnceCell::new();
    let smooth_rows = || smooth.get_or_init(|| smooth_rows(&meshes)).as_slice();
    let checks: Vec<Criterion> = vec![
        ("exact algebra", Box::new(exact_algebra)),
        ("space structure", Box::new(space_structure)),
        ("complex, projection, commutation", Box::new(|| complex_identities(&meshes))),
        ("cohomology", Box::new(|| cohomology(&meshes))),
        ("primal consistency", Box::new(|| primal_consistency(&meshes))),
        ("Maxwell conservation", Box::new(|| conservation(smooth_rows()))),
        ("convergence rates", Box::new(|| rates(smooth_rows()))),
        ("C0 cases", Box::new(|| c0_reduction(&meshes))),
        ("mesh census", Box::new(|| census(&meshes))),
    ];
    // optional criterion numbers on the command line select a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => (false, format!("panicked: {:?}", e.downcast_ref::<String>().map(String::as_str).or(e.downcast_ref::<&str>().copied()))),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} [{detail}] ({:.1}s)",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{} of {ran} criteria passed in {:.0}s", ran - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
