//! Polynomial differential forms in reference coordinates.
//!
//! The symbolic layer ([`PolyForm`]) uses exact rational coefficients so that
//! identities such as `d∘d = 0` hold exactly. Pointwise values
//! ([`AlternatingValue`]) are plain floats and carry the metric-dependent
//! operations.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num::{BigRational, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact coefficient type of the symbolic layer.
pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExteriorError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("affine map of shape {rows}x{cols} cannot act on dimension {dim}")]
    ShapeMismatch { rows: usize, cols: usize, dim: usize },
    #[error("metric is not positive definite (det = {0})")]
    NotPositiveDefinite(f64),
    #[error("form degree {degree} out of range for dimension {dim}")]
    DegreeOutOfRange { dim: usize, degree: usize },
}

/// Strictly increasing set of coordinate indices (0-based), stored as a bitmask.
///
/// Ordered lexicographically as sorted tuples.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct IndexSet(u32);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);

    pub fn from_indices(indices: &[usize]) -> Self {
        let mut bits = 0u32;
        for &i in indices {
            bits |= 1 << i;
        }
        IndexSet(bits)
    }

    pub fn singleton(i: usize) -> Self {
        IndexSet(1 << i)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn indices(self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    pub fn union(self, other: IndexSet) -> IndexSet {
        IndexSet(self.0 | other.0)
    }

    pub fn without(self, i: usize) -> IndexSet {
        IndexSet(self.0 & !(1 << i))
    }

    pub fn intersects(self, other: IndexSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Complement within `{0..d}`.
    pub fn complement(self, d: usize) -> IndexSet {
        IndexSet(!self.0 & ((1u32 << d) - 1))
    }

    /// Number of elements strictly below `i`.
    pub fn count_below(self, i: usize) -> usize {
        (self.0 & ((1u32 << i) - 1)).count_ones() as usize
    }

    /// Sign of the permutation sorting the concatenation `(self, other)`.
    pub fn merge_sign(self, other: IndexSet) -> i32 {
        let mut inversions = 0;
        for j in other.indices() {
            inversions += self.len() - self.count_below(j + 1);
        }
        if inversions % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// All `k`-subsets of `{0..d}` in lexicographic order.
    pub fn all(d: usize, k: usize) -> Vec<IndexSet> {
        fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<IndexSet>) {
            if cur.len() == k {
                out.push(IndexSet::from_indices(cur));
                return;
            }
            for i in start..d {
                cur.push(i);
                rec(i + 1, d, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if k <= d {
            rec(0, d, k, &mut Vec::new(), &mut out);
        }
        out
    }

    /// Position of this set within [`IndexSet::all`]`(d, self.len())`.
    pub fn position(self, d: usize) -> usize {
        IndexSet::all(d, self.len())
            .iter()
            .position(|&s| s == self)
            .expect("index set within dimension")
    }
}

impl Ord for IndexSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.indices().cmp(&other.indices())
    }
}

impl PartialOrd for IndexSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exponent vector of a monomial. Graded order: total degree first, then
/// `x² > xy > y²` style lexicographic order within a degree.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn one(d: usize) -> Self {
        Monomial(vec![0; d])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials of total degree `s` in `d` variables, in graded order.
pub fn monomials_of_degree(d: usize, s: u32) -> Vec<Monomial> {
    fn rec(i: usize, d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if i + 1 == d {
            cur.push(left);
            out.push(Monomial(cur.clone()));
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(i + 1, d, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if s == 0 {
            out.push(Monomial(vec![]));
        }
        return out;
    }
    rec(0, d, s, &mut Vec::new(), &mut out);
    out
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Polynomial differential `l`-form on `R^d` with exact coefficients.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PolyForm {
    dim: usize,
    degree: usize,
    terms: BTreeMap<(Monomial, IndexSet), Rational>,
}

impl PolyForm {
    /// The zero `l`-form. Out-of-range degrees give the canonical empty form.
    pub fn zero(dim: usize, degree: usize) -> Self {
        PolyForm {
            dim,
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        PolyForm::term(dim, Monomial::one(dim), IndexSet::EMPTY, c)
    }

    /// Single term `c x^m dx^I`.
    pub fn term(dim: usize, m: Monomial, idx: IndexSet, c: Rational) -> Self {
        assert_eq!(m.0.len(), dim, "monomial arity");
        let degree = idx.len();
        let mut f = PolyForm::zero(dim, degree);
        if !c.is_zero() && degree <= dim {
            f.terms.insert((m, idx), c);
        }
        f
    }

    /// Coordinate function `x_i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut m = vec![0; dim];
        m[i] = 1;
        PolyForm::term(dim, Monomial(m), IndexSet::EMPTY, Rational::one())
    }

    /// Basic one-form `dx_i`.
    pub fn dx(dim: usize, i: usize) -> Self {
        PolyForm::term(dim, Monomial::one(dim), IndexSet::singleton(i), Rational::one())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree_form(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, IndexSet, &Rational)> {
        self.terms.iter().map(|((m, i), c)| (m, *i, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximal total degree of the monomials, `None` for the zero form.
    pub fn poly_degree(&self) -> Option<u32> {
        self.terms.keys().map(|(m, _)| m.degree()).max()
    }

    pub fn coefficient(&self, m: &Monomial, idx: IndexSet) -> Rational {
        self.terms
            .get(&(m.clone(), idx))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    fn add_term(&mut self, m: Monomial, idx: IndexSet, c: Rational) {
        if c.is_zero() {
            return;
        }
        let key = (m, idx);
        match self.terms.get_mut(&key) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    pub fn add(&self, other: &PolyForm) -> PolyForm {
        assert_eq!((self.dim, self.degree), (other.dim, other.degree), "form shape");
        let mut out = self.clone();
        for ((m, i), c) in &other.terms {
            out.add_term(m.clone(), *i, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &PolyForm) -> PolyForm {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn scale(&self, s: &Rational) -> PolyForm {
        let mut out = PolyForm::zero(self.dim, self.degree);
        if s.is_zero() {
            return out;
        }
        for ((m, i), c) in &self.terms {
            out.terms.insert((m.clone(), *i), c * s);
        }
        out
    }

    /// Linear combination `Σ c_i f_i` of forms of the same shape.
    pub fn combination(dim: usize, degree: usize, items: &[(Rational, &PolyForm)]) -> PolyForm {
        let mut out = PolyForm::zero(dim, degree);
        for (c, f) in items {
            for ((m, i), v) in &f.terms {
                out.add_term(m.clone(), *i, c * v);
            }
        }
        out
    }

    /// Split into homogeneous components, ascending monomial degree.
    pub fn homogeneous_parts(&self) -> Vec<(u32, PolyForm)> {
        let mut parts: BTreeMap<u32, PolyForm> = BTreeMap::new();
        for ((m, i), c) in &self.terms {
            parts
                .entry(m.degree())
                .or_insert_with(|| PolyForm::zero(self.dim, self.degree))
                .terms
                .insert((m.clone(), *i), c.clone());
        }
        parts.into_iter().collect()
    }

    /// Exact-to-float conversion for fast pointwise evaluation.
    pub fn compile(&self) -> CompiledForm {
        let sets = IndexSet::all(self.dim, self.degree);
        let terms = self
            .terms
            .iter()
            .map(|((m, i), c)| {
                let comp = sets.iter().position(|s| s == i).expect("index set");
                (comp, m.0.clone(), c.to_f64().unwrap_or(f64::NAN))
            })
            .collect();
        CompiledForm {
            dim: self.dim,
            degree: self.degree,
            max_degree: self.poly_degree().unwrap_or(0),
            terms,
        }
    }
}

impl fmt::Display for PolyForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let names = ["x", "y", "z", "w"];
        let mut first = true;
        for ((m, idx), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (k, e) in m.0.iter().enumerate() {
                if *e > 0 {
                    let n = names.get(k).copied().unwrap_or("u");
                    if *e == 1 {
                        write!(f, "{n}")?;
                    } else {
                        write!(f, "{n}^{e}")?;
                    }
                }
            }
            let parts: Vec<String> = idx
                .indices()
                .iter()
                .map(|&k| format!("d{}", names.get(k).copied().unwrap_or("u").to_uppercase()))
                .collect();
            if !parts.is_empty() {
                write!(f, " {}", parts.join("^"))?;
            }
        }
        Ok(())
    }
}

/// Wedge product. Degrees beyond `d` give the empty form of that degree.
pub fn wedge(a: &PolyForm, b: &PolyForm) -> Result<PolyForm, ExteriorError> {
    if a.dim != b.dim {
        return Err(ExteriorError::DimensionMismatch(a.dim, b.dim));
    }
    let mut out = PolyForm::zero(a.dim, a.degree + b.degree);
    if a.degree + b.degree > a.dim {
        return Ok(out);
    }
    for ((ma, ia), ca) in &a.terms {
        for ((mb, ib), cb) in &b.terms {
            if ia.intersects(*ib) {
                continue;
            }
            let sign = ia.merge_sign(*ib);
            let mut c = ca * cb;
            if sign < 0 {
                c = -c;
            }
            out.add_term(ma.mul(mb), ia.union(*ib), c);
        }
    }
    Ok(out)
}

/// Exterior derivative.
pub fn ext_d(a: &PolyForm) -> PolyForm {
    let mut out = PolyForm::zero(a.dim, a.degree + 1);
    if a.degree >= a.dim {
        return out;
    }
    for ((m, idx), c) in &a.terms {
        for j in 0..a.dim {
            if m.0[j] == 0 || idx.contains(j) {
                continue;
            }
            let mut e = m.clone();
            e.0[j] -= 1;
            let mut v = c * Rational::from_integer(m.0[j].into());
            if idx.count_below(j) % 2 == 1 {
                v = -v;
            }
            out.add_term(e, idx.union(IndexSet::singleton(j)), v);
        }
    }
    out
}

/// Koszul operator: contraction with the identity field `X(x) = x`.
pub fn koszul(a: &PolyForm) -> PolyForm {
    if a.degree == 0 {
        return PolyForm::zero(a.dim, 0);
    }
    let mut out = PolyForm::zero(a.dim, a.degree - 1);
    for ((m, idx), c) in &a.terms {
        for (p, i) in idx.indices().into_iter().enumerate() {
            let mut e = m.clone();
            e.0[i] += 1;
            let v = if p % 2 == 0 { c.clone() } else { -c.clone() };
            out.add_term(e, idx.without(i), v);
        }
    }
    out
}

/// Affine map `x = A u + b` from `R^{source}` to `R^{target}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap<T = f64> {
    /// Row-major `target × source` matrix.
    pub matrix: Vec<Vec<T>>,
    pub offset: Vec<T>,
}

impl<T: Clone> AffineMap<T> {
    pub fn new(matrix: Vec<Vec<T>>, offset: Vec<T>) -> Self {
        AffineMap { matrix, offset }
    }

    pub fn target_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn source_dim(&self) -> usize {
        self.matrix.first().map_or(0, |r| r.len())
    }
}

impl AffineMap<f64> {
    /// Constant map from `R^0`.
    pub fn constant(point: Vec<f64>) -> Self {
        AffineMap {
            matrix: vec![Vec::new(); point.len()],
            offset: point,
        }
    }

    pub fn identity(d: usize) -> Self {
        let matrix = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        AffineMap {
            matrix,
            offset: vec![0.0; d],
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, b)| b + row.iter().zip(u).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    pub fn linear_part(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.target_dim(), self.source_dim(), |i, j| self.matrix[i][j])
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap<f64>) -> AffineMap<f64> {
        let a = self.linear_part() * inner.linear_part();
        let b = self.apply(&inner.offset);
        AffineMap {
            matrix: (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
                .collect(),
            offset: b,
        }
    }

    /// Exact rational copy (every finite float is a dyadic rational).
    pub fn to_rational(&self) -> AffineMap<Rational> {
        let conv = |x: &f64| Rational::from_float(*x).expect("finite affine coefficient");
        AffineMap {
            matrix: self.matrix.iter().map(|r| r.iter().map(conv).collect()).collect(),
            offset: self.offset.iter().map(conv).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &AffineMap<f64>) -> f64 {
        let mut m: f64 = 0.0;
        for (r1, r2) in self.matrix.iter().zip(&other.matrix) {
            for (a, b) in r1.iter().zip(r2) {
                m = m.max((a - b).abs());
            }
        }
        for (a, b) in self.offset.iter().zip(&other.offset) {
            m = m.max((a - b).abs());
        }
        m
    }
}

/// Pullback of a polynomial form by an affine map with exact coefficients.
pub fn pullback_affine(t: &AffineMap<Rational>, a: &PolyForm) -> Result<PolyForm, ExteriorError> {
    let (rows, cols) = (t.target_dim(), t.source_dim());
    if rows != a.dim || t.matrix.iter().any(|r| r.len() != cols) {
        return Err(ExteriorError::ShapeMismatch {
            rows,
            cols,
            dim: a.dim,
        });
    }
    let ds = cols;
    let mut out = PolyForm::zero(ds, a.degree);
    if a.degree > ds {
        return Ok(out);
    }
    // x_i = Σ_j A_ij u_j + b_i and dx_i = Σ_j A_ij du_j
    let coord: Vec<PolyForm> = (0..rows)
        .map(|i| {
            let mut p = PolyForm::constant(ds, t.offset[i].clone());
            for j in 0..ds {
                p = p.add(&PolyForm::coordinate(ds, j).scale(&t.matrix[i][j]));
            }
            p
        })
        .collect();
    let diff: Vec<PolyForm> = (0..rows)
        .map(|i| {
            let mut p = PolyForm::zero(ds, 1);
            for j in 0..ds {
                p = p.add(&PolyForm::dx(ds, j).scale(&t.matrix[i][j]));
            }
            p
        })
        .collect();
    let mut powers: BTreeMap<(usize, u32), PolyForm> = BTreeMap::new();
    for ((m, idx), c) in &a.terms {
        let mut acc = PolyForm::constant(ds, c.clone());
        for (i, &e) in m.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let p = powers
                .entry((i, e))
                .or_insert_with(|| {
                    let mut p = PolyForm::constant(ds, Rational::one());
                    for _ in 0..e {
                        p = wedge(&p, &coord[i]).expect("same dim");
                    }
                    p
                })
                .clone();
            acc = wedge(&acc, &p)?;
        }
        for i in idx.indices() {
            acc = wedge(&acc, &diff[i])?;
        }
        out = out.add(&acc);
    }
    Ok(out)
}

/// Float version of a [`PolyForm`] for repeated pointwise evaluation.
#[derive(Clone, Debug)]
pub struct CompiledForm {
    pub dim: usize,
    pub degree: usize,
    max_degree: u32,
    terms: Vec<(usize, Vec<u32>, f64)>,
}

impl CompiledForm {
    pub fn eval(&self, x: &[f64]) -> AlternatingValue {
        let n = binomial(self.dim, self.degree);
        let mut coeffs = vec![0.0; n];
        let md = self.max_degree as usize + 1;
        let mut pw = vec![1.0; self.dim * md];
        for i in 0..self.dim {
            for e in 1..md {
                pw[i * md + e] = pw[i * md + e - 1] * x[i];
            }
        }
        for (comp, exps, c) in &self.terms {
            let mut v = *c;
            for (i, &e) in exps.iter().enumerate() {
                v *= pw[i * md + e as usize];
            }
            coeffs[*comp] += v;
        }
        AlternatingValue {
            dim: self.dim,
            degree: self.degree,
            coeffs,
        }
    }
}

/// Value of a `k`-form at a point: one coefficient per `k`-subset in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct AlternatingValue {
    pub dim: usize,
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl AlternatingValue {
    pub fn zero(dim: usize, degree: usize) -> Self {
        AlternatingValue {
            dim,
            degree,
            coeffs: vec![0.0; binomial(dim, degree)],
        }
    }

    pub fn new(dim: usize, degree: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), binomial(dim, degree), "coefficient count");
        AlternatingValue { dim, degree, coeffs }
    }

    pub fn scalar(c: f64, dim: usize) -> Self {
        let mut v = AlternatingValue::zero(dim, 0);
        v.coeffs[0] = c;
        v
    }

    /// Top-degree form `c dx_1∧…∧dx_d`.
    pub fn top(c: f64, dim: usize) -> Self {
        let mut v = AlternatingValue::zero(dim, dim);
        v.coeffs[0] = c;
        v
    }

    pub fn axpy(&mut self, a: f64, other: &AlternatingValue) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        AlternatingValue {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Pointwise wedge product.
    pub fn wedge(&self, other: &AlternatingValue) -> AlternatingValue {
        let d = self.dim;
        let k = self.degree + other.degree;
        let mut out = AlternatingValue::zero(d, k);
        if k > d {
            return out;
        }
        let sa = IndexSet::all(d, self.degree);
        let sb = IndexSet::all(d, other.degree);
        let so = IndexSet::all(d, k);
        for (i, a) in sa.iter().enumerate() {
            if self.coeffs[i] == 0.0 {
                continue;
            }
            for (j, b) in sb.iter().enumerate() {
                if a.intersects(*b) {
                    continue;
                }
                let pos = so.iter().position(|s| *s == a.union(*b)).expect("subset");
                out.coeffs[pos] += a.merge_sign(*b) as f64 * self.coeffs[i] * other.coeffs[j];
            }
        }
        out
    }

    /// Pullback through a linear map `A` (`dim × d'`): coefficients on `R^{d'}`.
    pub fn pullback(&self, a: &DMatrix<f64>) -> AlternatingValue {
        assert_eq!(a.nrows(), self.dim, "pullback shape");
        let ds = a.ncols();
        let mut out = AlternatingValue::zero(ds, self.degree);
        if self.degree > ds {
            return out;
        }
        let rows = IndexSet::all(self.dim, self.degree);
        let cols = IndexSet::all(ds, self.degree);
        for (i, r) in rows.iter().enumerate() {
            if self.coeffs[i] == 0.0 {
                continue;
            }
            let ri = r.indices();
            for (j, c) in cols.iter().enumerate() {
                out.coeffs[j] += self.coeffs[i] * minor_det(a, &ri, &c.indices());
            }
        }
        out
    }
}

/// Determinant of the submatrix with the given rows and columns.
pub fn minor_det(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let at = |i: usize, j: usize| m[(rows[i], cols[j])];
    match rows.len() {
        0 => 1.0,
        1 => at(0, 0),
        2 => at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0),
        3 => {
            at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1))
                - at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0))
                + at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0))
        }
        n => DMatrix::from_fn(n, n, at).determinant(),
    }
}

/// Symmetric positive definite metric at a point, with cached inverse.
#[derive(Clone, Debug)]
pub struct MetricAtPoint {
    g: DMatrix<f64>,
    inv: DMatrix<f64>,
    det: f64,
}

impl MetricAtPoint {
    pub fn new(g: DMatrix<f64>) -> Result<Self, ExteriorError> {
        let d = g.nrows();
        if d == 0 {
            return Ok(MetricAtPoint {
                g: g.clone(),
                inv: g,
                det: 1.0,
            });
        }
        let sym = (&g + g.transpose()) * 0.5;
        let det = sym.determinant();
        let chol = sym.clone().cholesky().ok_or(ExteriorError::NotPositiveDefinite(det))?;
        if det <= 0.0 {
            return Err(ExteriorError::NotPositiveDefinite(det));
        }
        Ok(MetricAtPoint {
            inv: chol.inverse(),
            g: sym,
            det,
        })
    }

    pub fn identity(d: usize) -> Self {
        MetricAtPoint {
            g: DMatrix::identity(d, d),
            inv: DMatrix::identity(d, d),
            det: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn sqrt_det(&self) -> f64 {
        self.det.sqrt()
    }

    /// Matrix of the induced inner product on `k`-forms, in the
    /// lexicographic component basis.
    pub fn form_inner_matrix(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim();
        let sets = IndexSet::all(d, k);
        let n = sets.len();
        let idx: Vec<Vec<usize>> = sets.iter().map(|s| s.indices()).collect();
        DMatrix::from_fn(n, n, |i, j| minor_det(&self.inv, &idx[i], &idx[j]))
    }

    /// Pointwise inner product of two `k`-forms.
    pub fn inner(&self, a: &AlternatingValue, b: &AlternatingValue) -> f64 {
        let h = self.form_inner_matrix(a.degree);
        let mut s = 0.0;
        for i in 0..a.coeffs.len() {
            for j in 0..b.coeffs.len() {
                s += a.coeffs[i] * h[(i, j)] * b.coeffs[j];
            }
        }
        s
    }
}

/// Hodge star of a pointwise value, Riemannian signature.
pub fn hodge_star_at(g: &MetricAtPoint, v: &AlternatingValue) -> Result<AlternatingValue, ExteriorError> {
    let d = g.dim();
    if v.dim != d {
        return Err(ExteriorError::DimensionMismatch(v.dim, d));
    }
    if g.det <= 0.0 {
        return Err(ExteriorError::NotPositiveDefinite(g.det));
    }
    let k = v.degree;
    let rt = g.sqrt_det();
    let src = IndexSet::all(d, k);
    let dst = IndexSet::all(d, d - k);
    let mut out = AlternatingValue::zero(d, d - k);
    for kset in &src {
        let comp = kset.complement(d);
        let eps = kset.merge_sign(comp) as f64;
        let pos = dst.iter().position(|s| *s == comp).expect("complement");
        let kidx = kset.indices();
        for (i, iset) in src.iter().enumerate() {
            if v.coeffs[i] == 0.0 {
                continue;
            }
            out.coeffs[pos] += rt * eps * v.coeffs[i] * minor_det(&g.inv, &iset.indices(), &kidx);
        }
    }
    Ok(out)
}

/// Inverse Hodge star, `★⁻¹ = (−1)^{k(d−k)} ★` on `k`-forms.
pub fn hodge_star_inv_at(g: &MetricAtPoint, v: &AlternatingValue) -> Result<AlternatingValue, ExteriorError> {
    let s = hodge_star_at(g, v)?;
    let k = v.degree;
    if (k * (v.dim - k)) % 2 == 1 {
        Ok(s.scaled(-1.0))
    } else {
        Ok(s)
    }
}

/// Interior product `ι_X v`. A 0-form input gives the empty value.
pub fn interior_product_at(x: &[f64], v: &AlternatingValue) -> Result<AlternatingValue, ExteriorError> {
    if x.len() != v.dim {
        return Err(ExteriorError::DimensionMismatch(x.len(), v.dim));
    }
    if v.degree == 0 {
        return Ok(AlternatingValue {
            dim: v.dim,
            degree: 0,
            coeffs: Vec::new(),
        });
    }
    let d = v.dim;
    let src = IndexSet::all(d, v.degree);
    let dst = IndexSet::all(d, v.degree - 1);
    let mut out = AlternatingValue::zero(d, v.degree - 1);
    for (i, s) in src.iter().enumerate() {
        for (p, j) in s.indices().into_iter().enumerate() {
            let pos = dst.iter().position(|t| *t == s.without(j)).expect("subset");
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            out.coeffs[pos] += sign * x[j] * v.coeffs[i];
        }
    }
    Ok(out)
}

/// Small helper for exact literals in tests and examples.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

/// `true` if every coefficient is an integer.
pub fn has_integer_coefficients(a: &PolyForm) -> bool {
    a.terms.values().all(|c| c.is_integer())
}

/// Largest absolute coefficient, as a float.
pub fn max_abs_coefficient(a: &PolyForm) -> f64 {
    a.terms
        .values()
        .map(|c| c.abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}
