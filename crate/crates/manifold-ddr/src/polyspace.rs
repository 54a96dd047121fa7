//! Bases of full, homogeneous and trimmed polynomial form spaces.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use num::{One, Zero};
use thiserror::Error;

use crate::exterior::{
    binomial, ext_d, koszul, monomials_of_degree, pullback_affine, AffineMap, ExteriorError, IndexSet, Monomial,
    PolyForm, Rational,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("form degree {l} out of range for dimension {d}")]
    DegreeOutOfRange { d: usize, l: usize },
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Full,
    Homogeneous(u32),
    Trimmed,
    /// Range of the Koszul operator on `P_rΛ^{l+1}`: the `l`-forms `κP_rΛ^{l+1}`.
    KoszulRange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisSpec {
    pub dim: usize,
    pub poly_degree: u32,
    pub form_degree: usize,
    pub kind: BasisKind,
}

/// Ordered, linearly independent list of forms spanning a polynomial space.
#[derive(Clone, Debug)]
pub struct SpanBasis {
    pub spec: BasisSpec,
    pub forms: Vec<PolyForm>,
}

impl SpanBasis {
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }
}

/// Incremental reduced row echelon form over the rationals, on forms seen as
/// coefficient vectors indexed by `(monomial, index set)`.
#[derive(Default, Clone)]
pub struct Echelon {
    rows: Vec<(Key, BTreeMap<Key, Rational>)>,
}

type Key = (Monomial, IndexSet);

fn as_vector(f: &PolyForm) -> BTreeMap<Key, Rational> {
    f.terms().map(|(m, i, c)| ((m.clone(), i), c.clone())).collect()
}

impl Echelon {
    pub fn new() -> Self {
        Echelon::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    fn reduce(&self, mut v: BTreeMap<Key, Rational>) -> BTreeMap<Key, Rational> {
        for (pivot, row) in &self.rows {
            let c = match v.get(pivot) {
                Some(c) => c.clone(),
                None => continue,
            };
            for (k, x) in row {
                let e = v.entry(k.clone()).or_insert_with(Rational::zero);
                *e -= &c * x;
                if e.is_zero() {
                    v.remove(k);
                }
            }
        }
        v
    }

    /// `true` if `f` lies in the span of the rows inserted so far.
    pub fn contains(&self, f: &PolyForm) -> bool {
        self.reduce(as_vector(f)).is_empty()
    }

    /// Insert `f`; returns `false` (and leaves the echelon unchanged) if it is
    /// dependent on the current rows.
    pub fn insert(&mut self, f: &PolyForm) -> bool {
        let v = self.reduce(as_vector(f));
        let (pivot, pc) = match v.iter().next_back() {
            Some((k, c)) => (k.clone(), c.clone()),
            None => return false,
        };
        let inv = Rational::one() / pc;
        let row: BTreeMap<Key, Rational> = v.into_iter().map(|(k, x)| (k, x * &inv)).collect();
        for (_, other) in self.rows.iter_mut() {
            if let Some(c) = other.get(&pivot).cloned() {
                for (k, x) in &row {
                    let e = other.entry(k.clone()).or_insert_with(Rational::zero);
                    *e -= &c * x;
                    if e.is_zero() {
                        other.remove(k);
                    }
                }
            }
        }
        self.rows.push((pivot, row));
        true
    }
}

/// Exact rank of a list of forms.
pub fn exact_rank(forms: &[PolyForm]) -> usize {
    let mut e = Echelon::new();
    forms.iter().filter(|f| e.insert(f)).count()
}

/// Exact membership test.
pub fn in_span(basis: &[PolyForm], f: &PolyForm) -> bool {
    let mut e = Echelon::new();
    for b in basis {
        e.insert(b);
    }
    e.contains(f)
}

fn check(d: usize, l: usize) -> Result<(), SpaceError> {
    if l > d {
        Err(SpaceError::DegreeOutOfRange { d, l })
    } else {
        Ok(())
    }
}

fn homogeneous_forms(d: usize, s: u32, l: usize) -> Vec<PolyForm> {
    let mut out = Vec::new();
    for m in monomials_of_degree(d, s) {
        for idx in IndexSet::all(d, l) {
            out.push(PolyForm::term(d, m.clone(), idx, Rational::one()));
        }
    }
    out
}

/// Monomial basis of `P_rΛ^l(R^d)`: monomial-major, index sets inner.
pub fn basis_full(d: usize, r: u32, l: usize) -> Result<SpanBasis, SpaceError> {
    check(d, l)?;
    let forms = (0..=r).flat_map(|s| homogeneous_forms(d, s, l)).collect();
    Ok(SpanBasis {
        spec: BasisSpec {
            dim: d,
            poly_degree: r,
            form_degree: l,
            kind: BasisKind::Full,
        },
        forms,
    })
}

/// Monomial basis of `H_sΛ^l(R^d)`.
pub fn basis_homogeneous(d: usize, s: u32, l: usize) -> Result<SpanBasis, SpaceError> {
    check(d, l)?;
    Ok(SpanBasis {
        spec: BasisSpec {
            dim: d,
            poly_degree: s,
            form_degree: l,
            kind: BasisKind::Homogeneous(s),
        },
        forms: homogeneous_forms(d, s, l),
    })
}

fn pruned(gens: impl IntoIterator<Item = PolyForm>) -> Vec<PolyForm> {
    let mut e = Echelon::new();
    gens.into_iter().filter(|g| e.insert(g)).collect()
}

/// Basis of `P⁻_rΛ^l = dP_rΛ^{l−1} ⊕ κP_{r−1}Λ^{l+1}` (d-generators first,
/// then κ-generators, pruned by exact rank).
pub fn basis_trimmed(d: usize, r: u32, l: usize) -> Result<SpanBasis, SpaceError> {
    check(d, l)?;
    let forms = if l == 0 {
        basis_full(d, r, 0)?.forms
    } else {
        let dgen = basis_full(d, r, l - 1)?.forms.into_iter().map(|f| ext_d(&f));
        let kgen: Vec<PolyForm> = if r >= 1 && l < d {
            basis_full(d, r - 1, l + 1)?.forms.iter().map(koszul).collect()
        } else {
            Vec::new()
        };
        pruned(dgen.chain(kgen))
    };
    Ok(SpanBasis {
        spec: BasisSpec {
            dim: d,
            poly_degree: r,
            form_degree: l,
            kind: BasisKind::Trimmed,
        },
        forms,
    })
}

/// Basis of `κP_rΛ^{l+1}` (a space of `l`-forms of degree at most `r+1`).
pub fn basis_koszul_range(d: usize, r: u32, l: usize) -> Result<SpanBasis, SpaceError> {
    check(d, l)?;
    let forms = if l < d {
        pruned(basis_full(d, r, l + 1)?.forms.iter().map(koszul))
    } else {
        Vec::new()
    };
    Ok(SpanBasis {
        spec: BasisSpec {
            dim: d,
            poly_degree: r,
            form_degree: l,
            kind: BasisKind::KoszulRange,
        },
        forms,
    })
}

/// Closed-form dimension of the trimmed space (cross-check only).
pub fn trimmed_dimension(d: usize, r: u32, l: usize) -> usize {
    let r = r as usize;
    if l == 0 {
        binomial(r + d, d)
    } else if r == 0 {
        0
    } else {
        binomial(r + d, r + l) * binomial(r + l - 1, l)
    }
}

pub fn full_dimension(d: usize, r: u32, l: usize) -> usize {
    binomial(r as usize + d, d) * binomial(d, l)
}

/// Trace of a polynomial form through an affine trace map.
pub fn trace_form(t: &AffineMap<f64>, a: &PolyForm) -> Result<PolyForm, SpaceError> {
    Ok(pullback_affine(&t.to_rational(), a)?)
}

/// Homogeneous components `(s, a_s)` with `Σ a_s = a`, ascending `s`.
pub fn homogeneous_decompose(a: &PolyForm) -> Vec<(u32, PolyForm)> {
    a.homogeneous_parts()
}

/// Shared reference bases, keyed by spec.
pub fn cached(spec: BasisSpec) -> Arc<SpanBasis> {
    static CACHE: OnceLock<Mutex<HashMap<BasisSpec, Arc<SpanBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("basis cache").get(&spec) {
        return b.clone();
    }
    let (d, r, l) = (spec.dim, spec.poly_degree, spec.form_degree);
    let basis = match spec.kind {
        BasisKind::Full => basis_full(d, r, l),
        BasisKind::Homogeneous(s) => basis_homogeneous(d, s, l),
        BasisKind::Trimmed => basis_trimmed(d, r, l),
        BasisKind::KoszulRange => basis_koszul_range(d, r, l),
    }
    .expect("cached basis spec in range");
    let arc = Arc::new(basis);
    cache.lock().expect("basis cache").insert(spec, arc.clone());
    arc
}

pub fn full(d: usize, r: u32, l: usize) -> Arc<SpanBasis> {
    cached(BasisSpec {
        dim: d,
        poly_degree: r,
        form_degree: l,
        kind: BasisKind::Full,
    })
}

pub fn trimmed(d: usize, r: u32, l: usize) -> Arc<SpanBasis> {
    cached(BasisSpec {
        dim: d,
        poly_degree: r,
        form_degree: l,
        kind: BasisKind::Trimmed,
    })
}

pub fn koszul_range(d: usize, r: u32, l: usize) -> Arc<SpanBasis> {
    cached(BasisSpec {
        dim: d,
        poly_degree: r,
        form_degree: l,
        kind: BasisKind::KoszulRange,
    })
}
