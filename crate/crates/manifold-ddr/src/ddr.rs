//! Discrete de Rham complex on a 2D mesh: dof layout, interpolators,
//! local derivatives and potentials, global derivatives, stabilized inner
//! products and cohomology.
//!
//! A block on a `d`-cell for form degree `k` stores the coefficients of
//! `★ tr ω` in the trimmed basis of `P⁻_rΛ^{d−k}` (reference coordinates of
//! the cell). Potentials and local derivatives are likewise stored through
//! their Hodge star, in full polynomial bases. Pairings `∫ ★⁻¹q ∧ μ` are the
//! metric inner products `(q, μ)_G`, evaluated with the induced metric at
//! quadrature nodes.

use std::collections::HashMap;

use faer::Mat;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::exterior::{ext_d, hodge_star_at, hodge_star_inv_at, AlternatingValue, CompiledForm, ExteriorError, MetricAtPoint};
use crate::geometry::{gram_from_values, CellQuad, GeometryError, PairMode};
use crate::mesh::{Incidence, Mesh, MeshError};
use crate::polyspace::{full, koszul_range, trimmed, SpanBasis};
use crate::sparse::{CsrMatrix, SparseError};

/// Highest supported polynomial degree.
pub const MAX_DEGREE: u32 = 4;

#[derive(Debug, Error)]
pub enum DdrError {
    #[error("polynomial degree {0} outside 0..={MAX_DEGREE}")]
    Degree(u32),
    #[error("form degree {0} outside 0..=2")]
    FormDegree(usize),
    #[error("singular local system on cell ({dim}, {id}) for k = {k}, r = {r}")]
    Singular { dim: usize, id: usize, k: usize, r: u32 },
    #[error("dof vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("sampler returned a {got}-form, expected a {expected}-form")]
    Sampler { got: usize, expected: usize },
    #[error("ambiguous rank: gap {gap:.3e} at threshold {threshold:.3e}")]
    RankGap { gap: f64, threshold: f64 },
    #[error("singular value decomposition failed")]
    Svd,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Chart-coordinate evaluator of a `k`-form: `(chart, x) ↦ value`.
pub type Sampler<'a> = dyn Fn(usize, &[f64]) -> AlternatingValue + Sync + 'a;

/// Global numbering of the dofs of `X^k_h`: cells of dimension `k`, then
/// `k+1`, then `2`, each cell a contiguous block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofLayout {
    pub k: usize,
    pub block_len: [usize; 3],
    pub offsets: [Vec<usize>; 3],
    pub total: usize,
}

impl DofLayout {
    fn new(mesh: &Mesh, r: u32, k: usize) -> Self {
        let mut block_len = [0; 3];
        let mut offsets: [Vec<usize>; 3] = Default::default();
        let mut total = 0;
        for d in k..=2 {
            block_len[d] = block_dimension(d, k, r);
            for _ in 0..mesh.n_cells(d) {
                offsets[d].push(total);
                total += block_len[d];
            }
        }
        DofLayout {
            k,
            block_len,
            offsets,
            total,
        }
    }

    pub fn block(&self, d: usize, i: usize) -> std::ops::Range<usize> {
        let o = self.offsets[d][i];
        o..o + self.block_len[d]
    }
}

/// `dim P⁻_rΛ^{d−k}(R^d)`, one for vertices.
pub fn block_dimension(d: usize, k: usize, r: u32) -> usize {
    if d == 0 {
        1
    } else {
        trimmed(d, r, d - k).len()
    }
}

/// Element of `X^k_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteForm {
    pub k: usize,
    pub r: u32,
    pub values: Vec<f64>,
}

impl DiscreteForm {
    pub fn zeros(layout: &DofLayout, r: u32) -> Self {
        DiscreteForm {
            k: layout.k,
            r,
            values: vec![0.0; layout.total],
        }
    }

    pub fn block<'a>(&'a self, layout: &DofLayout, d: usize, i: usize) -> &'a [f64] {
        &self.values[layout.block(d, i)]
    }
}

/// Local operators of one cell for one form degree.
#[derive(Clone, Debug)]
pub struct LocalOperatorSet {
    /// Global dof indices of the cell and its subcells, the column order of
    /// `p` and `d`.
    pub dofs: Vec<usize>,
    /// Potential: coefficients of `★P ω_f` in the potential basis.
    pub p: DMatrix<f64>,
    /// Derivative: coefficients of `★d ω_f` in `P_rΛ^{d−k−1}`.
    pub d: Option<DMatrix<f64>>,
    /// Condition estimate of the potential solve.
    pub condition: f64,
}

/// Compiled basis with pointwise evaluation; dimension-0 bases are the
/// single constant.
#[derive(Clone, Debug)]
struct Evaluator {
    dim: usize,
    degree: usize,
    forms: Vec<CompiledForm>,
}

impl Evaluator {
    fn new(b: &SpanBasis) -> Self {
        Evaluator {
            dim: b.spec.dim,
            degree: b.spec.form_degree,
            forms: b.forms.iter().map(|f| f.compile()).collect(),
        }
    }

    fn derivative(b: &SpanBasis) -> Self {
        Evaluator {
            dim: b.spec.dim,
            degree: b.spec.form_degree + 1,
            forms: b.forms.iter().map(|f| ext_d(f).compile()).collect(),
        }
    }

    fn point() -> Self {
        Evaluator {
            dim: 0,
            degree: 0,
            forms: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        if self.dim == 0 {
            1
        } else {
            self.forms.len()
        }
    }

    fn eval(&self, u: &[f64]) -> Vec<AlternatingValue> {
        if self.dim == 0 {
            return vec![AlternatingValue::scalar(1.0, 0)];
        }
        self.forms.iter().map(|f| f.eval(u)).collect()
    }

    fn at_nodes(&self, quad: &CellQuad) -> Vec<Vec<AlternatingValue>> {
        quad.nodes.iter().map(|u| self.eval(u)).collect()
    }
}

/// Bases used on a `d`-cell for form degree `k`.
#[derive(Clone, Debug)]
struct CellBases {
    /// Block basis `P⁻_rΛ^{d−k}`.
    trim: Evaluator,
    /// Potential basis: `P_rΛ^{d−k}`, or the block basis when `d = k`.
    pot: Evaluator,
    /// `P_rΛ^{d−k−1}` and its exterior derivative.
    der: Option<(Evaluator, Evaluator)>,
    /// `κP_rΛ^{d−k}` and its exterior derivative.
    mu: Option<(Evaluator, Evaluator)>,
    /// `κP_{r−1}Λ^{d−k+1}`.
    nu: Option<Evaluator>,
}

impl CellBases {
    fn new(d: usize, k: usize, r: u32) -> Self {
        if d == 0 {
            return CellBases {
                trim: Evaluator::point(),
                pot: Evaluator::point(),
                der: None,
                mu: None,
                nu: None,
            };
        }
        let trim = Evaluator::new(&trimmed(d, r, d - k));
        if d == k {
            return CellBases {
                pot: trim.clone(),
                trim,
                der: None,
                mu: None,
                nu: None,
            };
        }
        let der = full(d, r, d - k - 1);
        let mu = koszul_range(d, r, d - k - 1);
        let nu = (r >= 1 && k >= 1).then(|| Evaluator::new(&koszul_range(d, r - 1, d - k)));
        CellBases {
            trim,
            pot: Evaluator::new(&full(d, r, d - k)),
            der: Some((Evaluator::new(&der), Evaluator::derivative(&der))),
            mu: Some((Evaluator::new(&mu), Evaluator::derivative(&mu))),
            nu,
        }
    }
}

/// Result of a rank computation.
#[derive(Clone, Debug, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    pub threshold: f64,
    /// Smallest retained over largest discarded singular value (infinite
    /// when nothing is discarded or nothing retained).
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Betti {
    pub numbers: [i64; 3],
    pub rank_d0: RankInfo,
    pub rank_d1: RankInfo,
}

/// The assembled complex on a mesh for a polynomial degree.
pub struct DdrComplex<'m> {
    pub mesh: &'m Mesh,
    pub r: u32,
    pub quad_degree: usize,
    pub layouts: [DofLayout; 3],
    /// `ops[k][d][i]`, empty for `d < k`.
    pub ops: [[Vec<LocalOperatorSet>; 3]; 3],
    quads: [Vec<CellQuad>; 3],
    face_size: Vec<f64>,
    bases: [[CellBases; 3]; 3],
}

/// Default quadrature exactness for degree `r`.
pub fn default_quad_degree(r: u32) -> usize {
    2 * r as usize + 6
}

fn point_quad(mesh: &Mesh, i: usize) -> CellQuad {
    let c = &mesh.cells[0][i];
    let p = match &c.construction {
        crate::cells::Construction::Vertex { point } => point.to_vec(),
        _ => crate::geometry::CellMap::eval(mesh.shape(0, i).as_ref(), &[]),
    };
    CellQuad {
        dim: 0,
        nodes: vec![Vec::new()],
        weights: vec![1.0],
        metrics: vec![MetricAtPoint::identity(0)],
        vol: vec![1.0],
        points: vec![p],
        jacobians: vec![DMatrix::zeros(2, 0)],
        chart: c.chart,
    }
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Solve `a x = b` by LU with partial pivoting.
fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(0, b.ncols()));
    }
    a.clone().lu().solve(b)
}

fn condition(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let s = a.clone().singular_values();
    let max = s.max();
    let min = s.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `B[j][b] = Σ_q vol_q ⟨tr μ_j, π_b⟩_{G'}` on a subcell, where `μ` lives on
/// the parent and `π` is the subcell potential basis.
fn boundary_pairing(sub: &CellQuad, map: &Incidence, parent: &Evaluator, sub_pot: &Evaluator) -> DMatrix<f64> {
    let l = map.map.linear_part();
    let mut b = DMatrix::zeros(parent.len(), sub_pot.len());
    for q in 0..sub.len() {
        let u = map.map.apply(&sub.nodes[q]);
        let tr: Vec<AlternatingValue> = parent.eval(&u).iter().map(|v| v.pullback(&l)).collect();
        let pv = sub_pot.eval(&sub.nodes[q]);
        let h = sub.metrics[q].form_inner_matrix(sub_pot.degree) * sub.vol[q];
        for (j, t) in tr.iter().enumerate() {
            for (bi, p) in pv.iter().enumerate() {
                b[(j, bi)] += quad_form(&h, &t.coeffs, &p.coeffs);
            }
        }
    }
    b
}

fn quad_form(h: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..b.len() {
            s += a[i] * h[(i, j)] * b[j];
        }
    }
    s
}

/// Map from global dof index to local column.
fn column_map(dofs: &[usize]) -> HashMap<usize, usize> {
    dofs.iter().enumerate().map(|(c, &g)| (g, c)).collect()
}

/// Add `m` (columns indexed by `sub_dofs`) into `target` (columns by `map`).
fn scatter_add(target: &mut DMatrix<f64>, m: &DMatrix<f64>, sub_dofs: &[usize], map: &HashMap<usize, usize>, scale: f64) {
    for (c, g) in sub_dofs.iter().enumerate() {
        let tc = map[g];
        for row in 0..m.nrows() {
            target[(row, tc)] += scale * m[(row, c)];
        }
    }
}

impl<'m> DdrComplex<'m> {
    pub fn new(mesh: &'m Mesh, r: u32) -> Result<Self, DdrError> {
        Self::with_quadrature(mesh, r, default_quad_degree(r))
    }

    pub fn with_quadrature(mesh: &'m Mesh, r: u32, quad_degree: usize) -> Result<Self, DdrError> {
        if r > MAX_DEGREE {
            return Err(DdrError::Degree(r));
        }
        let vq: Vec<CellQuad> = (0..mesh.n_cells(0)).map(|i| point_quad(mesh, i)).collect();
        let eq = (0..mesh.n_cells(1))
            .into_par_iter()
            .map(|i| mesh.geometry(1, i).quadrature(quad_degree))
            .collect::<Result<Vec<_>, _>>()?;
        let fq = (0..mesh.n_cells(2))
            .into_par_iter()
            .map(|i| mesh.geometry(2, i).quadrature(quad_degree))
            .collect::<Result<Vec<_>, _>>()?;
        let face_size = fq.iter().map(|q| q.size()).collect();
        let bases = [0, 1, 2].map(|k| [0, 1, 2].map(|d| if d >= k { CellBases::new(d, k, r) } else { CellBases::new(0, 0, r) }));
        let layouts = [0, 1, 2].map(|k| DofLayout::new(mesh, r, k));
        let mut cx = DdrComplex {
            mesh,
            r,
            quad_degree,
            layouts,
            ops: Default::default(),
            quads: [vq, eq, fq],
            face_size,
            bases,
        };
        for k in 0..=2 {
            for d in k..=2 {
                let ops = (0..mesh.n_cells(d))
                    .into_par_iter()
                    .map(|i| cx.local_operators(k, d, i))
                    .collect::<Result<Vec<_>, _>>()?;
                cx.ops[k][d] = ops;
            }
        }
        Ok(cx)
    }

    pub fn quad(&self, d: usize, i: usize) -> &CellQuad {
        &self.quads[d][i]
    }

    pub fn ndofs(&self, k: usize) -> usize {
        self.layouts[k].total
    }

    /// Sub-cells of `(d, i)` of dimension `d − 1` with their incidences.
    fn facets(&self, d: usize, i: usize) -> &[Incidence] {
        self.mesh.boundary[d].get(i).map_or(&[], |v| v.as_slice())
    }

    /// Global dofs of `X^k` attached to `(d, i)` and its subcells.
    fn local_dofs(&self, k: usize, d: usize, i: usize) -> Vec<usize> {
        let lay = &self.layouts[k];
        let mut out = Vec::new();
        let mut push = |dd: usize, j: usize| {
            for g in lay.block(dd, j) {
                if !out.contains(&g) {
                    out.push(g);
                }
            }
        };
        if d == 2 {
            if k == 0 {
                for v in &self.mesh.face_vertices[i] {
                    push(0, v.sub);
                }
            }
            if k <= 1 {
                for e in &self.mesh.boundary[2][i] {
                    push(1, e.sub);
                }
            }
        } else if d == 1 && k == 0 {
            for v in &self.mesh.boundary[1][i] {
                push(0, v.sub);
            }
        }
        push(d, i);
        out
    }

    fn local_operators(&self, k: usize, d: usize, i: usize) -> Result<LocalOperatorSet, DdrError> {
        let dofs = self.local_dofs(k, d, i);
        let n = dofs.len();
        let cols = column_map(&dofs);
        let own: Vec<usize> = self.layouts[k].block(d, i).map(|g| cols[&g]).collect();
        let b = &self.bases[k][d];
        if d == k {
            let mut p = DMatrix::zeros(own.len(), n);
            for (a, &c) in own.iter().enumerate() {
                p[(a, c)] = 1.0;
            }
            return Ok(LocalOperatorSet {
                dofs,
                p,
                d: None,
                condition: 1.0,
            });
        }
        let singular = DdrError::Singular { dim: d, id: i, k, r: self.r };
        let q = &self.quads[d][i];
        let (der, dder) = b.der.as_ref().expect("derivative basis");
        let (mu, dmu) = b.mu.as_ref().expect("koszul basis");
        let tvals = b.trim.at_nodes(q);
        let dervals = der.at_nodes(q);
        let s = sign(k + 1);

        // boundary pairings and subcell potentials
        let sub_pot = &self.bases[k][d - 1].pot;
        let mut bd_der = Vec::new();
        let mut bd_mu = Vec::new();
        for inc in self.facets(d, i) {
            let sq = &self.quads[d - 1][inc.sub];
            bd_der.push(boundary_pairing(sq, inc, der, sub_pot));
            bd_mu.push(boundary_pairing(sq, inc, mu, sub_pot));
        }

        // derivative
        let gd = gram_from_values(q, &dervals, &dervals, PairMode::WedgeStar);
        let mut rhs = DMatrix::zeros(der.len(), n);
        let own_term = gram_from_values(q, &dder.at_nodes(q), &tvals, PairMode::WedgeStar);
        for (a, &c) in own.iter().enumerate() {
            for j in 0..der.len() {
                rhs[(j, c)] += s * own_term[(j, a)];
            }
        }
        for (inc, bm) in self.facets(d, i).iter().zip(&bd_der) {
            let sub = &self.ops[k][d - 1][inc.sub];
            scatter_add(&mut rhs, &(bm * &sub.p), &sub.dofs, &cols, inc.sign as f64);
        }
        let dmat = gd.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| lu_solve(&gd, &rhs)).ok_or(singular)?;

        // potential
        let potvals = b.pot.at_nodes(q);
        let muvals = mu.at_nodes(q);
        let dmuvals = dmu.at_nodes(q);
        let nmu = mu.len();
        let nnu = b.nu.as_ref().map_or(0, |e| e.len());
        let npot = b.pot.len();
        if nmu + nnu != npot {
            return Err(DdrError::Singular { dim: d, id: i, k, r: self.r });
        }
        let mut a = DMatrix::zeros(npot, npot);
        let mut rp = DMatrix::zeros(npot, n);
        let amu = gram_from_values(q, &dmuvals, &potvals, PairMode::WedgeStar);
        a.rows_mut(0, nmu).copy_from(&(amu * s));
        let mu_der = gram_from_values(q, &muvals, &dervals, PairMode::WedgeStar) * &dmat;
        rp.rows_mut(0, nmu).copy_from(&mu_der);
        for (inc, bm) in self.facets(d, i).iter().zip(&bd_mu) {
            let sub = &self.ops[k][d - 1][inc.sub];
            let mut tmp = DMatrix::zeros(nmu, n);
            scatter_add(&mut tmp, &(bm * &sub.p), &sub.dofs, &cols, -(inc.sign as f64));
            let mut top = rp.rows_mut(0, nmu);
            top += tmp;
        }
        if let Some(nu) = &b.nu {
            let nuvals = nu.at_nodes(q);
            let anu = gram_from_values(q, &nuvals, &potvals, PairMode::WedgeStar);
            a.rows_mut(nmu, nnu).copy_from(&(anu * s));
            let own_nu = gram_from_values(q, &nuvals, &tvals, PairMode::WedgeStar);
            for (ai, &c) in own.iter().enumerate() {
                for j in 0..nnu {
                    rp[(nmu + j, c)] += s * own_nu[(j, ai)];
                }
            }
        }
        let p = lu_solve(&a, &rp).ok_or(DdrError::Singular { dim: d, id: i, k, r: self.r })?;
        if p.iter().any(|x| !x.is_finite()) {
            return Err(DdrError::Singular { dim: d, id: i, k, r: self.r });
        }
        Ok(LocalOperatorSet {
            dofs,
            p,
            d: Some(dmat),
            condition: condition(&a),
        })
    }

    /// Largest condition estimate of the potential solves for degree `k`.
    pub fn max_condition(&self, k: usize) -> f64 {
        self.ops[k].iter().flatten().fold(1.0, |m, o| m.max(o.condition))
    }

    fn gather(&self, op: &LocalOperatorSet, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(op.dofs.len(), op.dofs.iter().map(|&g| x[g]))
    }

    fn check_len(&self, k: usize, x: &[f64]) -> Result<(), DdrError> {
        if k > 2 {
            return Err(DdrError::FormDegree(k));
        }
        if x.len() != self.layouts[k].total {
            return Err(DdrError::Length {
                got: x.len(),
                expected: self.layouts[k].total,
            });
        }
        Ok(())
    }

    /// Coefficients of `★P^k_{r,f} ω_f` in the potential basis.
    pub fn local_potential(&self, k: usize, d: usize, i: usize, x: &[f64]) -> Result<DVector<f64>, DdrError> {
        self.check_len(k, x)?;
        let op = &self.ops[k][d][i];
        Ok(&op.p * self.gather(op, x))
    }

    /// Coefficients of `★d^k_{r,f} ω_f` in `P_rΛ^{d−k−1}`, `None` for `d = k`.
    pub fn local_derivative(&self, k: usize, d: usize, i: usize, x: &[f64]) -> Result<Option<DVector<f64>>, DdrError> {
        self.check_len(k, x)?;
        let op = &self.ops[k][d][i];
        Ok(op.d.as_ref().map(|m| m * self.gather(op, x)))
    }

    /// `I^k_{r,h} ω`.
    pub fn interpolate(&self, k: usize, sampler: &Sampler) -> Result<DiscreteForm, DdrError> {
        if k > 2 {
            return Err(DdrError::FormDegree(k));
        }
        let lay = &self.layouts[k];
        let mut blocks: Vec<(usize, DVector<f64>)> = Vec::new();
        for d in k..=2 {
            let part = (0..self.mesh.n_cells(d))
                .into_par_iter()
                .map(|i| self.interpolate_cell(k, d, i, sampler).map(|v| (lay.offsets[d][i], v)))
                .collect::<Result<Vec<_>, _>>()?;
            blocks.extend(part);
        }
        let mut values = vec![0.0; lay.total];
        for (o, v) in blocks {
            values[o..o + v.len()].copy_from_slice(v.as_slice());
        }
        Ok(DiscreteForm { k, r: self.r, values })
    }

    /// Load vector `v ↦ Σ_f ∫_f ⟨ω, P^k_f v⟩`, with `ω` sampled in each
    /// face's own chart. Unlike `M·Iω` it needs no traces of `ω`.
    pub fn l2_load(&self, k: usize, sampler: &Sampler) -> Result<Vec<f64>, DdrError> {
        if k > 2 {
            return Err(DdrError::FormDegree(k));
        }
        let parts = (0..self.mesh.n_cells(2))
            .into_par_iter()
            .map(|f| {
                let op = &self.ops[k][2][f];
                let q = &self.quads[2][f];
                let pv = self.bases[k][2].pot.at_nodes(q);
                let mut out = vec![0.0; op.dofs.len()];
                for node in 0..q.len() {
                    let w = self.pulled(2, f, node, k, sampler)?;
                    for (a, v) in pv[node].iter().enumerate() {
                        let pa = hodge_star_inv_at(&q.metrics[node], v)?;
                        let s = q.vol[node] * q.metrics[node].inner(&pa, &w);
                        for (c, o) in out.iter_mut().enumerate() {
                            *o += s * op.p[(a, c)];
                        }
                    }
                }
                Ok((f, out))
            })
            .collect::<Result<Vec<_>, DdrError>>()?;
        let mut load = vec![0.0; self.layouts[k].total];
        for (f, out) in parts {
            for (c, g) in self.ops[k][2][f].dofs.iter().enumerate() {
                load[*g] += out[c];
            }
        }
        Ok(load)
    }

    /// Pullback of a sampled chart form to reference coordinates at node `q`.
    fn pulled(&self, d: usize, i: usize, q: usize, k: usize, sampler: &Sampler) -> Result<AlternatingValue, DdrError> {
        let quad = &self.quads[d][i];
        let v = sampler(quad.chart, &quad.points[q]);
        if v.degree != k {
            return Err(DdrError::Sampler {
                got: v.degree,
                expected: k,
            });
        }
        Ok(v.pullback(&quad.jacobians[q]))
    }

    fn interpolate_cell(&self, k: usize, d: usize, i: usize, sampler: &Sampler) -> Result<DVector<f64>, DdrError> {
        let quad = &self.quads[d][i];
        if d == 0 {
            let v = sampler(quad.chart, &quad.points[0]);
            return Ok(DVector::from_element(1, v.coeffs.first().copied().unwrap_or(0.0)));
        }
        let tb = &self.bases[k][d].trim;
        let tv = tb.at_nodes(quad);
        let g = gram_from_values(quad, &tv, &tv, PairMode::WedgeStar);
        let mut rhs = DVector::zeros(tb.len());
        for q in 0..quad.len() {
            let star = hodge_star_at(&quad.metrics[q], &self.pulled(d, i, q, k, sampler)?)?;
            let h = quad.metrics[q].form_inner_matrix(d - k) * quad.vol[q];
            for a in 0..tb.len() {
                rhs[a] += quad_form(&h, &tv[q][a].coeffs, &star.coeffs);
            }
        }
        Ok(crate::geometry::solve_spd(g, rhs)?)
    }

    /// Global derivative `X^k_h → X^{k+1}_h`.
    pub fn global_derivative(&self, k: usize) -> Result<CsrMatrix, DdrError> {
        if k > 1 {
            return Err(DdrError::FormDegree(k));
        }
        let (src, dst) = (&self.layouts[k], &self.layouts[k + 1]);
        let mut trip = Vec::new();
        for d in k + 1..=2 {
            let parts: Vec<Vec<(usize, usize, f64)>> = (0..self.mesh.n_cells(d))
                .into_par_iter()
                .map(|i| {
                    let op = &self.ops[k][d][i];
                    let q = &self.quads[d][i];
                    let tb = &self.bases[k + 1][d].trim;
                    let (der, _) = self.bases[k][d].der.as_ref().expect("derivative basis");
                    let tv = tb.at_nodes(q);
                    let g = gram_from_values(q, &tv, &tv, PairMode::WedgeStar);
                    let c = gram_from_values(q, &tv, &der.at_nodes(q), PairMode::WedgeStar) * op.d.as_ref().expect("derivative");
                    let m = lu_solve(&g, &c).expect("trimmed Gram");
                    let rows = dst.block(d, i);
                    let mut t = Vec::new();
                    for (a, row) in rows.enumerate() {
                        for (cidx, &col) in op.dofs.iter().enumerate() {
                            let v = m[(a, cidx)];
                            if v != 0.0 {
                                t.push((row, col, v));
                            }
                        }
                    }
                    t
                })
                .collect();
            trip.extend(parts.into_iter().flatten());
        }
        Ok(CsrMatrix::from_triplets(dst.total, src.total, &trip)?)
    }

    /// `★⁻¹` of the potential basis at reference point `u` of `(d, i)`, using
    /// metric `g`.
    fn potential_values(&self, k: usize, d: usize, u: &[f64], g: &MetricAtPoint) -> Result<Vec<AlternatingValue>, DdrError> {
        self.bases[k][d]
            .pot
            .eval(u)
            .iter()
            .map(|v| hodge_star_inv_at(g, v).map_err(DdrError::from))
            .collect()
    }

    /// Local matrix of the stabilized inner product of face `f`, columns in
    /// the order of `ops[k][2][f].dofs`.
    pub fn local_inner_product(&self, k: usize, f: usize) -> Result<DMatrix<f64>, DdrError> {
        let op = &self.ops[k][2][f];
        let n = op.dofs.len();
        let cols = column_map(&op.dofs);
        let q = &self.quads[2][f];
        let pv = self.bases[k][2].pot.at_nodes(q);
        let mp = gram_from_values(q, &pv, &pv, PairMode::WedgeStar);
        let mut m = op.p.transpose() * mp * &op.p;
        let geom = self.mesh.geometry(2, f);
        let h = self.face_size[f];
        for dsub in k..2 {
            let incs: &[Incidence] = if dsub == 1 { &self.mesh.boundary[2][f] } else { &self.mesh.face_vertices[f] };
            let w = h.powi(2 - dsub as i32);
            for inc in incs {
                let sq = &self.quads[dsub][inc.sub];
                let sop = &self.ops[k][dsub][inc.sub];
                let lin = inc.map.linear_part();
                for node in 0..sq.len() {
                    let u = inc.map.apply(&sq.nodes[node]);
                    let gf = geom.induced_metric(&u)?;
                    let parent: Vec<AlternatingValue> = self.potential_values(k, 2, &u, &gf)?.iter().map(|v| v.pullback(&lin)).collect();
                    let own = self.potential_values(k, dsub, &sq.nodes[node], &sq.metrics[node])?;
                    let nc = own.first().map_or(1, |v| v.coeffs.len());
                    let mut diff = DMatrix::<f64>::zeros(nc, n);
                    for (bi, v) in own.iter().enumerate() {
                        for (c, g) in sop.dofs.iter().enumerate() {
                            let tc = cols[g];
                            for comp in 0..nc {
                                diff[(comp, tc)] += v.coeffs[comp] * sop.p[(bi, c)];
                            }
                        }
                    }
                    for (a, v) in parent.iter().enumerate() {
                        for c in 0..n {
                            for comp in 0..nc {
                                diff[(comp, c)] -= v.coeffs[comp] * op.p[(a, c)];
                            }
                        }
                    }
                    let hm = sq.metrics[node].form_inner_matrix(k) * (sq.vol[node] * w);
                    m += diff.transpose() * hm * diff;
                }
            }
        }
        Ok((&m + m.transpose()) * 0.5)
    }

    /// Stabilized `L²`-like inner product on `X^k_h`.
    pub fn inner_product_matrix(&self, k: usize) -> Result<CsrMatrix, DdrError> {
        if k > 2 {
            return Err(DdrError::FormDegree(k));
        }
        let parts = (0..self.mesh.n_cells(2))
            .into_par_iter()
            .map(|f| {
                let m = self.local_inner_product(k, f)?;
                let dofs = &self.ops[k][2][f].dofs;
                let mut t = Vec::with_capacity(dofs.len() * dofs.len());
                for (a, &ga) in dofs.iter().enumerate() {
                    for (b, &gb) in dofs.iter().enumerate() {
                        t.push((ga, gb, m[(a, b)]));
                    }
                }
                Ok(t)
            })
            .collect::<Result<Vec<_>, DdrError>>()?;
        let n = self.layouts[k].total;
        let trip: Vec<_> = parts.into_iter().flatten().collect();
        Ok(CsrMatrix::from_triplets(n, n, &trip)?)
    }

    /// `‖P^k_h x − ω‖_{L²}` over all faces.
    pub fn potential_error(&self, k: usize, x: &[f64], sampler: &Sampler) -> Result<f64, DdrError> {
        Ok(self.potential_error_by_face(k, x, sampler)?.iter().sum::<f64>().sqrt())
    }

    /// Squared `L²(f)` errors of the potential, one per face.
    pub fn potential_error_by_face(&self, k: usize, x: &[f64], sampler: &Sampler) -> Result<Vec<f64>, DdrError> {
        self.check_len(k, x)?;
        (0..self.mesh.n_cells(2))
            .into_par_iter()
            .map(|f| {
                let q = &self.quads[2][f];
                let c = self.local_potential(k, 2, f, x)?;
                let pv = self.bases[k][2].pot.at_nodes(q);
                let mut s = 0.0;
                for node in 0..q.len() {
                    let mut val = AlternatingValue::zero(2, 2 - k);
                    for (a, v) in pv[node].iter().enumerate() {
                        val.axpy(c[a], v);
                    }
                    let mut e = hodge_star_inv_at(&q.metrics[node], &val)?;
                    e.axpy(-1.0, &self.pulled(2, f, node, k, sampler)?);
                    s += q.vol[node] * q.metrics[node].inner(&e, &e);
                }
                Ok(s)
            })
            .collect()
    }

    /// `‖ω‖_{L²}` by face quadrature.
    pub fn l2_norm(&self, k: usize, sampler: &Sampler) -> Result<f64, DdrError> {
        let parts = (0..self.mesh.n_cells(2))
            .into_par_iter()
            .map(|f| {
                let q = &self.quads[2][f];
                let mut s = 0.0;
                for node in 0..q.len() {
                    let v = self.pulled(2, f, node, k, sampler)?;
                    s += q.vol[node] * q.metrics[node].inner(&v, &v);
                }
                Ok(s)
            })
            .collect::<Result<Vec<f64>, DdrError>>()?;
        Ok(parts.iter().sum::<f64>().sqrt())
    }

    /// Largest deviation of `π⁻★P^k_{r,f}ω_f` from the block of `f`, over
    /// cells of dimension above `k`, relative to `max|x|`.
    pub fn projection_residual(&self, k: usize, x: &[f64]) -> Result<f64, DdrError> {
        self.check_len(k, x)?;
        let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for d in k + 1..=2 {
            for i in 0..self.mesh.n_cells(d) {
                let q = &self.quads[d][i];
                let b = &self.bases[k][d];
                let tv = b.trim.at_nodes(q);
                let g = gram_from_values(q, &tv, &tv, PairMode::WedgeStar);
                let c = gram_from_values(q, &tv, &b.pot.at_nodes(q), PairMode::WedgeStar) * self.local_potential(k, d, i, x)?;
                let proj = lu_solve(&g, &DMatrix::from_column_slice(c.len(), 1, c.as_slice())).ok_or(DdrError::Singular {
                    dim: d,
                    id: i,
                    k,
                    r: self.r,
                })?;
                let block = &x[self.layouts[k].block(d, i)];
                for (a, v) in block.iter().enumerate() {
                    worst = worst.max((proj[(a, 0)] - v).abs());
                }
            }
        }
        Ok(worst / scale)
    }

    /// Largest nodal deviation between `P^k_{r,f}(d^{k−1}_h x)` and
    /// `d^{k−1}_{r,f} x` on cells of dimension at least `k`, relative to the
    /// largest nodal value.
    pub fn link_residual(&self, k: usize, x: &[f64]) -> Result<f64, DdrError> {
        if k == 0 || k > 2 {
            return Err(DdrError::FormDegree(k));
        }
        self.check_len(k - 1, x)?;
        let dx = self.global_derivative(k - 1)?.matvec(x);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for d in k..=2 {
            for i in 0..self.mesh.n_cells(d) {
                let q = &self.quads[d][i];
                let p = self.local_potential(k, d, i, &dx)?;
                let dd = self.local_derivative(k - 1, d, i, x)?.expect("derivative");
                let (der, _) = self.bases[k - 1][d].der.as_ref().expect("derivative basis");
                for u in &q.nodes {
                    let pv = self.bases[k][d].pot.eval(u);
                    let dv = der.eval(u);
                    let mut a = AlternatingValue::zero(d, d - k);
                    let mut b = AlternatingValue::zero(d, d - k);
                    for (j, v) in pv.iter().enumerate() {
                        a.axpy(p[j], v);
                    }
                    for (j, v) in dv.iter().enumerate() {
                        b.axpy(dd[j], v);
                    }
                    scale = scale.max(b.norm_inf());
                    b.axpy(-1.0, &a);
                    worst = worst.max(b.norm_inf());
                }
            }
        }
        Ok(worst / scale.max(f64::MIN_POSITIVE))
    }

    /// Discrete Stokes link on faces, `k = 0`: `∫_f d⁰ω ∧ dα` against
    /// `∫_{∂f} P_{∂f}ω ∧ tr dα` for `α ∈ P⁻_{r+1}Λ⁰`; largest mismatch
    /// relative to the boundary terms.
    pub fn stokes_residual(&self, x: &[f64]) -> Result<f64, DdrError> {
        self.check_len(0, x)?;
        let dev = Evaluator::derivative(&trimmed(2, self.r + 1, 0));
        let (der, _) = self.bases[0][2].der.as_ref().expect("derivative basis");
        let mut worst: f64 = 0.0;
        for f in 0..self.mesh.n_cells(2) {
            let q = &self.quads[2][f];
            let dd = self.local_derivative(0, 2, f, x)?.expect("derivative");
            let lhs = gram_from_values(q, &dev.at_nodes(q), &der.at_nodes(q), PairMode::WedgeStar) * &dd;
            let mut rhs = DVector::zeros(dev.len());
            let mut scale: f64 = 0.0;
            for inc in &self.mesh.boundary[2][f] {
                let b = boundary_pairing(&self.quads[1][inc.sub], inc, &dev, &self.bases[0][1].pot);
                let t = b * self.local_potential(0, 1, inc.sub, x)? * inc.sign as f64;
                scale = scale.max(t.amax());
                rhs += t;
            }
            worst = worst.max((lhs - rhs).amax() / scale.max(f64::MIN_POSITIVE));
        }
        Ok(worst)
    }

    /// `d^k_h I^k ω − I^{k+1} dω`, as a dof vector of `X^{k+1}_h`.
    pub fn commutation_defect(&self, k: usize, f: &Sampler, df: &Sampler) -> Result<Vec<f64>, DdrError> {
        let i0 = self.interpolate(k, f)?;
        let i1 = self.interpolate(k + 1, df)?;
        let mut d = self.global_derivative(k)?.matvec(&i0.values);
        for (a, b) in d.iter_mut().zip(&i1.values) {
            *a -= b;
        }
        Ok(d)
    }

    /// Betti numbers by singular values of the global derivatives.
    pub fn betti(&self) -> Result<Betti, DdrError> {
        let d0 = self.global_derivative(0)?;
        let d1 = self.global_derivative(1)?;
        let r0 = numerical_rank(&d0)?;
        let r1 = numerical_rank(&d1)?;
        let n = [0, 1, 2].map(|k| self.layouts[k].total as i64);
        Ok(Betti {
            numbers: [n[0] - r0.rank as i64, n[1] - r0.rank as i64 - r1.rank as i64, n[2] - r1.rank as i64],
            rank_d0: r0,
            rank_d1: r1,
        })
    }
}

/// Rank with threshold `1e−10·σ_max` and the spectral gap around it.
pub fn numerical_rank(m: &CsrMatrix) -> Result<RankInfo, DdrError> {
    let dense = if m.nrows >= m.ncols { m.clone() } else { m.transpose() };
    let a = Mat::<f64>::from_fn(dense.nrows, dense.ncols, |_, _| 0.0);
    let mut a = a;
    for (i, j, v) in dense.triplets() {
        a[(i, j)] += v;
    }
    let s = a.singular_values().map_err(|_| DdrError::Svd)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = 1e-10 * smax;
    let rank = s.iter().filter(|&&x| x > threshold).count();
    let gap = match (rank, s.get(rank)) {
        (0, _) | (_, None) => f64::INFINITY,
        (r, Some(&next)) => s[r - 1] / next.max(f64::MIN_POSITIVE),
    };
    Ok(RankInfo { rank, threshold, gap })
}
