//! Finite semi-simple algebras `B = M_{d_1}(F_{q^{n_1}}) x ... x
//! M_{d_k}(F_{q^{n_k}})` over a base field `F_q`, their elements,
//! trace/norm maps, deterministic enumeration, and the characteristic /
//! minimal polynomial machinery used by the product-trace bounds.
//!
//! The canonical trace and norm are the reduced ones: field trace of the
//! matrix trace and field norm of the matrix determinant, per factor,
//! summed / multiplied across factors. The regular-representation
//! variants (`d_i`-scaled trace, `d_i`-th-power norm) coincide with these
//! only in the etale case and are available behind
//! [`TraceNormKind::RegularRepresentation`] for study.

use std::fmt;
use std::sync::Arc;

use crate::gf::{
    construct_field, enumerate_irreducibles, is_prime, FieldElement, FiniteField, PolyF,
    TowerEmbedding,
};
use crate::{Error, Result};

/// Desk cap on matrix dimension for charpoly/minpoly work.
pub const MATRIX_CAP: usize = 6;

/// Default cap on enumeration sizes (elements or summands).
pub const ENUM_CAP: u64 = 1 << 24;

// ---------------------------------------------------------------------------
// Matrices over one factor field
// ---------------------------------------------------------------------------

/// A square matrix over one factor field, stored as row-major element
/// codes. The owning field is implied by the factor position.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MatF {
    pub d: usize,
    pub entries: Vec<u64>,
}

impl MatF {
    pub fn new(d: usize, entries: Vec<u64>) -> MatF {
        assert_eq!(entries.len(), d * d, "entry count must be d^2");
        MatF { d, entries }
    }

    pub fn zero(d: usize) -> MatF {
        MatF {
            d,
            entries: vec![0; d * d],
        }
    }

    /// Code 1 is the multiplicative identity in every constructed field.
    pub fn identity(d: usize) -> MatF {
        Self::scalar(d, 1)
    }

    pub fn scalar(d: usize, c: u64) -> MatF {
        let mut m = MatF::zero(d);
        for i in 0..d {
            m.entries[i * d + i] = c;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, c: u64) {
        self.entries[i * self.d + j] = c;
    }

    pub fn render(&self) -> String {
        let rows: Vec<String> = (0..self.d)
            .map(|i| {
                let cells: Vec<String> = (0..self.d).map(|j| self.get(i, j).to_string()).collect();
                format!("[{}]", cells.join(","))
            })
            .collect();
        format!("[{}]", rows.join(","))
    }
}

pub fn mat_add(f: &FiniteField, a: &MatF, b: &MatF) -> MatF {
    assert_eq!(a.d, b.d);
    let entries = a
        .entries
        .iter()
        .zip(&b.entries)
        .map(|(&x, &y)| f.add(f.elt(x).unwrap(), f.elt(y).unwrap()).code())
        .collect();
    MatF { d: a.d, entries }
}

pub fn mat_mul(f: &FiniteField, a: &MatF, b: &MatF) -> MatF {
    assert_eq!(a.d, b.d);
    let d = a.d;
    let mut out = MatF::zero(d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = f.zero();
            for l in 0..d {
                acc = f.add(
                    acc,
                    f.mul(f.elt(a.get(i, l)).unwrap(), f.elt(b.get(l, j)).unwrap()),
                );
            }
            out.set(i, j, acc.code());
        }
    }
    out
}

pub fn mat_trace(f: &FiniteField, a: &MatF) -> FieldElement {
    let mut acc = f.zero();
    for i in 0..a.d {
        acc = f.add(acc, f.elt(a.get(i, i)).unwrap());
    }
    acc
}

/// Determinant by Gaussian elimination; exact over a field.
pub fn mat_det(f: &FiniteField, a: &MatF) -> FieldElement {
    let d = a.d;
    let mut w: Vec<FieldElement> = a.entries.iter().map(|&c| f.elt(c).unwrap()).collect();
    let mut det = f.one();
    for col in 0..d {
        let pivot_row = (col..d).find(|&r| !w[r * d + col].is_zero());
        let pivot_row = match pivot_row {
            Some(r) => r,
            None => return f.zero(),
        };
        if pivot_row != col {
            for j in 0..d {
                w.swap(col * d + j, pivot_row * d + j);
            }
            det = f.neg(det);
        }
        let pivot = w[col * d + col];
        det = f.mul(det, pivot);
        let pinv = f.inv(pivot).expect("pivot is nonzero");
        for r in (col + 1)..d {
            let factor = f.mul(w[r * d + col], pinv);
            if factor.is_zero() {
                continue;
            }
            for j in col..d {
                let sub = f.mul(factor, w[col * d + j]);
                w[r * d + j] = f.sub(w[r * d + j], sub);
            }
        }
    }
    det
}

/// Inverse by Gauss-Jordan elimination on an augmented matrix.
pub fn mat_inv(f: &FiniteField, a: &MatF) -> Result<MatF> {
    let d = a.d;
    let mut w: Vec<FieldElement> = a.entries.iter().map(|&c| f.elt(c).unwrap()).collect();
    let mut inv: Vec<FieldElement> = MatF::identity(d)
        .entries
        .iter()
        .map(|&c| f.elt(c).unwrap())
        .collect();
    for col in 0..d {
        let pivot_row = (col..d)
            .find(|&r| !w[r * d + col].is_zero())
            .ok_or(Error::NotInvertible)?;
        if pivot_row != col {
            for j in 0..d {
                w.swap(col * d + j, pivot_row * d + j);
                inv.swap(col * d + j, pivot_row * d + j);
            }
        }
        let pinv = f.inv(w[col * d + col])?;
        for j in 0..d {
            w[col * d + j] = f.mul(w[col * d + j], pinv);
            inv[col * d + j] = f.mul(inv[col * d + j], pinv);
        }
        for r in 0..d {
            if r == col || w[r * d + col].is_zero() {
                continue;
            }
            let factor = w[r * d + col];
            for j in 0..d {
                let s1 = f.mul(factor, w[col * d + j]);
                w[r * d + j] = f.sub(w[r * d + j], s1);
                let s2 = f.mul(factor, inv[col * d + j]);
                inv[r * d + j] = f.sub(inv[r * d + j], s2);
            }
        }
    }
    Ok(MatF {
        d,
        entries: inv.iter().map(|e| e.code()).collect(),
    })
}

// ---------------------------------------------------------------------------
// Algebra specification
// ---------------------------------------------------------------------------

/// Which trace/norm convention to use. `Reduced` is the canonical one.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TraceNormKind {
    Reduced,
    RegularRepresentation,
}

/// A finite semi-simple algebra `prod_i M_{d_i}(F_{q^{n_i}})` over the
/// base field `F_q` with `q = p^e`, together with its constructed factor
/// fields and base-to-factor embeddings. Immutable and shareable.
pub struct AlgebraSpec {
    p: u64,
    e: u32,
    factors: Vec<(u32, u32)>,
    base: Arc<FiniteField>,
    factor_fields: Vec<Arc<FiniteField>>,
    embeddings: Vec<Arc<TowerEmbedding>>,
    n: u32,
    m: u32,
    sum_d: u32,
    size: u128,
    unit_count: u128,
}

impl fmt::Debug for AlgebraSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AlgebraSpec({})", self.name())
    }
}

impl AlgebraSpec {
    /// Build a spec. Internal callers may use degree-1 algebras for smoke
    /// tests; the external parser additionally enforces `n >= 2`.
    pub fn new(p: u64, e: u32, factors: Vec<(u32, u32)>) -> Result<AlgebraSpec> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if e == 0 {
            return Err(Error::ZeroDegree);
        }
        if factors.is_empty() {
            return Err(Error::EmptyFactors);
        }
        if factors.iter().any(|&(d, n)| d == 0 || n == 0) {
            return Err(Error::Parse(
                "factor entries [d, n] must both be at least 1".into(),
            ));
        }
        let base = construct_field(p, e)?;
        let q = base.q();
        let mut factor_fields = Vec::with_capacity(factors.len());
        let mut embeddings = Vec::with_capacity(factors.len());
        for &(_, ni) in &factors {
            let field = construct_field(p, e * ni)?;
            let emb = TowerEmbedding::new(base.clone(), field.clone())?;
            factor_fields.push(field);
            embeddings.push(emb);
        }
        let n: u32 = factors.iter().map(|&(d, ni)| d * d * ni).sum();
        let m: u32 = factors.iter().map(|&(d, ni)| d * ni).sum();
        let sum_d: u32 = factors.iter().map(|&(d, _)| d).sum();
        assert!((n - m).is_multiple_of(2), "n - m is even by construction");
        let size = (q as u128).checked_pow(n).ok_or(Error::Overflow)?;
        let mut unit_count: u128 = 1;
        for &(d, ni) in &factors {
            let qd = (q as u128).checked_pow(d * ni).ok_or(Error::Overflow)?;
            for j in 0..d {
                let qj = (q as u128).checked_pow(j * ni).ok_or(Error::Overflow)?;
                unit_count = unit_count.checked_mul(qd - qj).ok_or(Error::Overflow)?;
            }
        }
        Ok(AlgebraSpec {
            p,
            e,
            factors,
            base,
            factor_fields,
            embeddings,
            n,
            m,
            sum_d,
            size,
            unit_count,
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn e(&self) -> u32 {
        self.e
    }

    /// Base field size `q = p^e`.
    pub fn q(&self) -> u64 {
        self.base.q()
    }

    pub fn factors(&self) -> &[(u32, u32)] {
        &self.factors
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    /// Degree `n = sum d_i^2 n_i` of B over F_q.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// The reduction degree `m = sum d_i n_i`.
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn sum_d(&self) -> u32 {
        self.sum_d
    }

    /// `|B| = q^n`.
    pub fn size(&self) -> u128 {
        self.size
    }

    /// `|B*| = prod_i prod_{j<d_i} (q^{d_i n_i} - q^{j n_i})`.
    pub fn unit_count(&self) -> u128 {
        self.unit_count
    }

    pub fn is_etale(&self) -> bool {
        self.factors.iter().all(|&(d, _)| d == 1)
    }

    pub fn base(&self) -> &Arc<FiniteField> {
        &self.base
    }

    pub fn factor_field(&self, i: usize) -> &Arc<FiniteField> {
        &self.factor_fields[i]
    }

    pub fn embedding(&self, i: usize) -> &Arc<TowerEmbedding> {
        &self.embeddings[i]
    }

    /// `(n - m)/2`, the exponent of the exact power `q^{(n-m)/2}`.
    pub fn half_nm(&self) -> u32 {
        (self.n - self.m) / 2
    }

    /// `(-1)^{sum d_i}`.
    pub fn sign_sum_d(&self) -> i32 {
        if self.sum_d.is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// `(-1)^{m - sum d_i}`.
    pub fn sign_m_minus_sum_d(&self) -> i32 {
        if (self.m - self.sum_d).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// `q^e` as u128, erroring on overflow.
    pub fn q_pow(&self, e: u32) -> Result<u128> {
        (self.q() as u128).checked_pow(e).ok_or(Error::Overflow)
    }

    /// Short display name, e.g. `M2(F2)xF4/F2`.
    pub fn name(&self) -> String {
        let q = self.q();
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|&(d, ni)| {
                let qq = (q as u128).pow(ni);
                if d == 1 {
                    format!("F{qq}")
                } else {
                    format!("M{d}(F{qq})")
                }
            })
            .collect();
        format!("{}/F{}", parts.join("x"), q)
    }

    // -- elements ----------------------------------------------------------

    pub fn zero_element(&self) -> AlgebraElement {
        AlgebraElement {
            parts: self
                .factors
                .iter()
                .map(|&(d, _)| MatF::zero(d as usize))
                .collect(),
        }
    }

    pub fn identity(&self) -> AlgebraElement {
        AlgebraElement {
            parts: self
                .factors
                .iter()
                .map(|&(d, _)| MatF::identity(d as usize))
                .collect(),
        }
    }

    pub fn check_shape(&self, x: &AlgebraElement) -> Result<()> {
        if x.parts.len() != self.factors.len() {
            return Err(Error::Shape(format!(
                "element has {} parts, spec has {} factors",
                x.parts.len(),
                self.factors.len()
            )));
        }
        for (i, part) in x.parts.iter().enumerate() {
            let d = self.factors[i].0 as usize;
            if part.d != d || part.entries.len() != d * d {
                return Err(Error::Shape(format!("part {i} must be a {d}x{d} matrix")));
            }
            let q = self.factor_fields[i].q();
            if let Some(&bad) = part.entries.iter().find(|&&c| c >= q) {
                return Err(Error::InvalidElement(bad));
            }
        }
        Ok(())
    }

    /// Reduced trace and norm (the pair every identity and bound here uses).
    pub fn trace_norm(&self, x: &AlgebraElement) -> Result<(FieldElement, FieldElement)> {
        self.trace_norm_with(x, TraceNormKind::Reduced)
    }

    pub fn trace_norm_with(
        &self,
        x: &AlgebraElement,
        kind: TraceNormKind,
    ) -> Result<(FieldElement, FieldElement)> {
        self.check_shape(x)?;
        let base = &self.base;
        let mut a = base.zero();
        let mut b = base.one();
        for (i, part) in x.parts.iter().enumerate() {
            let f = &self.factor_fields[i];
            let emb = &self.embeddings[i];
            let tr = emb.relative_trace(mat_trace(f, part))?;
            let nm = emb.relative_norm(mat_det(f, part))?;
            match kind {
                TraceNormKind::Reduced => {
                    a = base.add(a, tr);
                    b = base.mul(b, nm);
                }
                TraceNormKind::RegularRepresentation => {
                    let d = self.factors[i].0;
                    let d_scalar = base.elt((d as u64) % self.p).unwrap();
                    a = base.add(a, base.mul(d_scalar, tr));
                    b = base.mul(b, base.pow(nm, d as u64));
                }
            }
        }
        Ok((a, b))
    }

    /// Reduced trace alone, skipping the determinant work.
    pub fn trace_of(&self, x: &AlgebraElement) -> Result<FieldElement> {
        self.check_shape(x)?;
        let mut a = self.base.zero();
        for (i, part) in x.parts.iter().enumerate() {
            let tr = self.embeddings[i].relative_trace(mat_trace(&self.factor_fields[i], part))?;
            a = self.base.add(a, tr);
        }
        Ok(a)
    }

    pub fn is_invertible(&self, x: &AlgebraElement) -> bool {
        x.parts
            .iter()
            .enumerate()
            .all(|(i, part)| !mat_det(&self.factor_fields[i], part).is_zero())
    }

    pub fn mul_elements(&self, x: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
        AlgebraElement {
            parts: x
                .parts
                .iter()
                .zip(&y.parts)
                .enumerate()
                .map(|(i, (a, b))| mat_mul(&self.factor_fields[i], a, b))
                .collect(),
        }
    }

    pub fn add_elements(&self, x: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
        AlgebraElement {
            parts: x
                .parts
                .iter()
                .zip(&y.parts)
                .enumerate()
                .map(|(i, (a, b))| mat_add(&self.factor_fields[i], a, b))
                .collect(),
        }
    }

    pub fn invert_element(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        let parts = x
            .parts
            .iter()
            .enumerate()
            .map(|(i, part)| mat_inv(&self.factor_fields[i], part))
            .collect::<Result<Vec<_>>>()?;
        Ok(AlgebraElement { parts })
    }

    /// Apply a base-field polynomial to an element, per part (coefficients
    /// embed as scalar matrices).
    pub fn apply_poly(&self, poly: &PolyF, x: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_shape(x)?;
        let mut parts = Vec::with_capacity(x.parts.len());
        for (i, part) in x.parts.iter().enumerate() {
            let f = &self.factor_fields[i];
            let emb = &self.embeddings[i];
            let d = part.d;
            let mut acc = MatF::zero(d);
            for &c in poly.coeffs.iter().rev() {
                let ce = emb.embed(self.base.elt(c)?)?;
                acc = mat_mul(f, &acc, part);
                acc = mat_add(f, &acc, &MatF::scalar(d, ce.code()));
            }
            parts.push(acc);
        }
        Ok(AlgebraElement { parts })
    }

    // -- enumeration -------------------------------------------------------

    /// Number of elements as a `u64`, or a cap error naming the computed
    /// cardinality.
    pub fn element_count_checked(&self, cap: u64) -> Result<u64> {
        if self.size > cap as u128 {
            return Err(Error::CapExceeded {
                what: format!("enumeration of {}", self.name()),
                needed: self.size,
                cap,
            });
        }
        Ok(self.size as u64)
    }

    /// Decode the element at `idx` in the deterministic order:
    /// lexicographic over flattened entries (parts in factor order, entries
    /// row-major, field elements in enumeration-rank order), first entry
    /// most significant.
    pub fn decode_element(&self, idx: u64) -> AlgebraElement {
        debug_assert!((idx as u128) < self.size);
        let mut parts = Vec::with_capacity(self.factors.len());
        // Compute digits from the least significant (last entry) backwards.
        let mut digits: Vec<u64> = Vec::new();
        let mut rem = idx;
        let entry_fields: Vec<usize> = self
            .factors
            .iter()
            .enumerate()
            .flat_map(|(i, &(d, _))| std::iter::repeat_n(i, (d * d) as usize))
            .collect();
        for &fi in entry_fields.iter().rev() {
            let q = self.factor_fields[fi].q();
            digits.push(rem % q);
            rem /= q;
        }
        digits.reverse();
        let mut pos = 0;
        for (i, &(d, _)) in self.factors.iter().enumerate() {
            let f = &self.factor_fields[i];
            let d = d as usize;
            let entries: Vec<u64> = (0..d * d)
                .map(|j| f.code_of_rank(digits[pos + j]))
                .collect();
            pos += d * d;
            parts.push(MatF { d, entries });
        }
        AlgebraElement { parts }
    }

    /// Inverse of [`decode_element`](Self::decode_element).
    pub fn encode_element(&self, x: &AlgebraElement) -> u64 {
        let mut idx: u64 = 0;
        for (i, part) in x.parts.iter().enumerate() {
            let f = &self.factor_fields[i];
            for &c in &part.entries {
                idx = idx * f.q() + f.rank_of_code(c);
            }
        }
        idx
    }

    /// Deterministic element iterator; `units_only` filters by the
    /// per-part determinant test.
    pub fn enumerate(&self, units_only: bool, cap: u64) -> Result<ElementIter<'_>> {
        if units_only {
            if self.unit_count > cap as u128 {
                return Err(Error::CapExceeded {
                    what: format!("unit enumeration of {}", self.name()),
                    needed: self.unit_count,
                    cap,
                });
            }
            // The unit filter still scans the full index space.
            if self.size > (1u128 << 28) {
                return Err(Error::CapExceeded {
                    what: format!("unit enumeration scan of {}", self.name()),
                    needed: self.size,
                    cap: 1 << 28,
                });
            }
        } else {
            self.element_count_checked(cap)?;
        }
        Ok(ElementIter {
            spec: self,
            idx: 0,
            end: self.size as u64,
            units_only,
        })
    }

    /// Iterator over an index sub-range, for partitioned sweeps.
    pub fn enumerate_range(&self, start: u64, end: u64, units_only: bool) -> ElementIter<'_> {
        let size = u64::try_from(self.size).unwrap_or(u64::MAX);
        ElementIter {
            spec: self,
            idx: start,
            end: end.min(size),
            units_only,
        }
    }

    /// Materialized unit list in enumeration order.
    pub fn units(&self, cap: u64) -> Result<Vec<AlgebraElement>> {
        let units: Vec<AlgebraElement> = self.enumerate(true, cap)?.collect();
        assert_eq!(units.len() as u128, self.unit_count);
        Ok(units)
    }
}

/// An element of a semi-simple algebra: one square matrix per factor.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AlgebraElement {
    pub parts: Vec<MatF>,
}

impl AlgebraElement {
    pub fn render(&self) -> String {
        self.parts
            .iter()
            .map(|m| m.render())
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug)]
pub struct ElementIter<'a> {
    spec: &'a AlgebraSpec,
    idx: u64,
    end: u64,
    units_only: bool,
}

impl Iterator for ElementIter<'_> {
    type Item = AlgebraElement;

    fn next(&mut self) -> Option<AlgebraElement> {
        while self.idx < self.end {
            let x = self.spec.decode_element(self.idx);
            self.idx += 1;
            if !self.units_only || self.spec.is_invertible(&x) {
                return Some(x);
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Characteristic & minimal polynomials, regularity
// ---------------------------------------------------------------------------

/// Characteristic and minimal polynomial of a square matrix; both monic
/// and exact. The characteristic polynomial comes from division-free
/// cofactor expansion of `det(tI - M)` (d <= 6 keeps O(d!) acceptable);
/// the minimal polynomial from the least-degree dependency among the
/// powers of M, found by exact linear algebra.
pub fn char_min_poly(f: &FiniteField, mat: &MatF) -> Result<(PolyF, PolyF)> {
    let d = mat.d;
    if d > MATRIX_CAP {
        return Err(Error::MatrixCap { d, cap: MATRIX_CAP });
    }
    // t*I - M as a matrix of degree-<=1 polynomials.
    let entries: Vec<Vec<PolyF>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let neg = f.neg(f.elt(mat.get(i, j)).unwrap()).code();
                    if i == j {
                        PolyF::new(vec![neg, 1])
                    } else {
                        PolyF::new(vec![neg])
                    }
                })
                .collect()
        })
        .collect();
    let charpoly = poly_mat_det(f, &entries);
    debug_assert_eq!(charpoly.degree(), Some(d));
    debug_assert!(charpoly.is_monic(f));

    // Powers of M, vectorized.
    let mut powers: Vec<Vec<u64>> = Vec::with_capacity(d + 1);
    let mut acc = MatF::identity(d);
    powers.push(acc.entries.clone());
    for _ in 0..d {
        acc = mat_mul(f, &acc, mat);
        powers.push(acc.entries.clone());
    }
    let mut minpoly = None;
    for r in 1..=d {
        if let Some(combo) = solve_linear(f, &powers[..r], &powers[r]) {
            let mut coeffs: Vec<u64> = combo
                .iter()
                .map(|&c| f.neg(f.elt(c).unwrap()).code())
                .collect();
            coeffs.push(1);
            minpoly = Some(PolyF::new(coeffs));
            break;
        }
    }
    let minpoly = minpoly.expect("the characteristic polynomial annihilates M");
    debug_assert!(charpoly.rem(&minpoly, f).is_zero());
    Ok((charpoly, minpoly))
}

fn poly_mat_det(f: &FiniteField, m: &[Vec<PolyF>]) -> PolyF {
    let d = m.len();
    if d == 1 {
        return m[0][0].clone();
    }
    let mut acc = PolyF::zero();
    for j in 0..d {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<PolyF>> = (1..d)
            .map(|i| {
                (0..d)
                    .filter(|&jj| jj != j)
                    .map(|jj| m[i][jj].clone())
                    .collect()
            })
            .collect();
        let term = m[0][j].mul(&poly_mat_det(f, &minor), f);
        acc = if j % 2 == 0 {
            acc.add(&term, f)
        } else {
            acc.sub(&term, f)
        };
    }
    acc
}

/// Solve `sum_j c_j cols[j] = target` over the field; `None` when the
/// target is outside the span.
#[allow(clippy::needless_range_loop)] // row elimination reads and writes across rows
fn solve_linear(f: &FiniteField, cols: &[Vec<u64>], target: &[u64]) -> Option<Vec<u64>> {
    let rows = target.len();
    let ncols = cols.len();
    if ncols == 0 {
        return if target.iter().all(|&c| c == 0) {
            Some(Vec::new())
        } else {
            None
        };
    }
    // Augmented matrix, rows x (ncols + 1).
    let mut aug: Vec<Vec<FieldElement>> = (0..rows)
        .map(|r| {
            let mut row: Vec<FieldElement> =
                cols.iter().map(|col| f.elt(col[r]).unwrap()).collect();
            row.push(f.elt(target[r]).unwrap());
            row
        })
        .collect();
    let mut pivot_rows = Vec::new();
    let mut r0 = 0;
    for c in 0..ncols {
        let pivot = (r0..rows).find(|&r| !aug[r][c].is_zero());
        let Some(pr) = pivot else { continue };
        aug.swap(r0, pr);
        let pinv = f.inv(aug[r0][c]).unwrap();
        for j in c..=ncols {
            aug[r0][j] = f.mul(aug[r0][j], pinv);
        }
        for r in 0..rows {
            if r != r0 && !aug[r][c].is_zero() {
                let factor = aug[r][c];
                for j in c..=ncols {
                    let s = f.mul(factor, aug[r0][j]);
                    aug[r][j] = f.sub(aug[r][j], s);
                }
            }
        }
        pivot_rows.push((r0, c));
        r0 += 1;
        if r0 == rows {
            break;
        }
    }
    // Inconsistent if a leftover row reads 0 = nonzero.
    for r in r0..rows {
        if !aug[r][ncols].is_zero() {
            return None;
        }
    }
    let mut solution = vec![0u64; ncols];
    for &(r, c) in &pivot_rows {
        solution[c] = aug[r][ncols].code();
    }
    // Free columns default to zero; verify the combination hits the target.
    for r in 0..rows {
        let mut acc = f.zero();
        for (c, col) in cols.iter().enumerate() {
            acc = f.add(
                acc,
                f.mul(f.elt(solution[c]).unwrap(), f.elt(col[r]).unwrap()),
            );
        }
        if acc.code() != target[r] {
            return None;
        }
    }
    Some(solution)
}

/// The factorization of a characteristic polynomial into monic
/// irreducibles with multiplicities, in irreducible enumeration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharPolyFactorization {
    pub factors: Vec<(PolyF, u32)>,
}

impl CharPolyFactorization {
    /// Number of distinct irreducible factors.
    pub fn s(&self) -> usize {
        self.factors.len()
    }
}

/// Factor the characteristic polynomial of `mat` by trial division
/// against the deterministic irreducible enumeration.
pub fn factor_charpoly(f: &FiniteField, mat: &MatF) -> Result<CharPolyFactorization> {
    let (charpoly, _) = char_min_poly(f, mat)?;
    let d = mat.d;
    let irreducibles = enumerate_irreducibles(f, d as u32)?;
    let mut rem = charpoly.clone();
    let mut factors = Vec::new();
    for irr in &irreducibles {
        let mut mult = 0u32;
        loop {
            let (quot, r) = rem.divrem(irr, f);
            if r.is_zero() && !quot.is_zero() {
                rem = quot;
                mult += 1;
            } else {
                break;
            }
        }
        if mult > 0 {
            factors.push((irr.clone(), mult));
        }
        if rem.degree() == Some(0) {
            break;
        }
    }
    assert_eq!(rem.coeffs, vec![1], "monic polynomial fully factored");
    // Product check.
    let mut prod = PolyF::new(vec![1]);
    for (irr, mult) in &factors {
        for _ in 0..*mult {
            prod = prod.mul(irr, f);
        }
    }
    assert_eq!(prod, charpoly, "factorization reconstructs the charpoly");
    Ok(CharPolyFactorization { factors })
}

/// A matrix is regular when its minimal polynomial equals its
/// characteristic polynomial (one rational block per eigenvalue, so the
/// eigenvector count equals the distinct-eigenvalue count over the
/// closure). Decidable with no closure computation.
pub fn matrix_is_regular(f: &FiniteField, mat: &MatF) -> Result<bool> {
    let (charpoly, minpoly) = char_min_poly(f, mat)?;
    Ok(charpoly == minpoly)
}

/// An algebra element is regular when every part is.
pub fn is_regular(spec: &AlgebraSpec, x: &AlgebraElement) -> Result<bool> {
    spec.check_shape(x)?;
    for (i, part) in x.parts.iter().enumerate() {
        if !matrix_is_regular(spec.factor_field(i), part)? {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Spec parsing (external interface)
// ---------------------------------------------------------------------------

/// Parse an algebra spec from its serialized form: a single object with
/// integer fields `p`, `e` (optional, default 1) and `factors`, a list of
/// `[d, n]` integer pairs. Keys may be bare or quoted, so both strict
/// JSON (`{"p": 2, "e": 1, "factors": [[2, 1]]}`) and the compact inline
/// form (`{p:2,e:1,factors:[[2,1]]}`) are accepted. Unknown keys are
/// rejected. The algebra degree must satisfy `n >= 2`.
pub fn parse_spec(text: &str) -> Result<AlgebraSpec> {
    let mut p = SpecParser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let (prime, e, factors) = p.parse_object()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(Error::Parse(format!(
            "trailing input after the spec object at byte {}",
            p.pos
        )));
    }
    let spec = AlgebraSpec::new(prime, e, factors)?;
    if spec.n() < 2 {
        return Err(Error::DegreeTooSmall(spec.n()));
    }
    Ok(spec)
}

struct SpecParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl SpecParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected '{}' at byte {}",
                c as char, self.pos
            )))
        }
    }

    fn key(&mut self) -> Result<String> {
        let quoted = match self.peek() {
            Some(b'"') => {
                self.pos += 1;
                true
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => false,
            _ => {
                return Err(Error::Parse(format!("expected a key at byte {}", self.pos)));
            }
        };
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            let stop = if quoted {
                c == b'"'
            } else {
                !(c.is_ascii_alphanumeric() || c == b'_')
            };
            if stop {
                break;
            }
            self.pos += 1;
        }
        let name = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
        if quoted {
            self.expect(b'"')?;
        }
        Ok(name)
    }

    fn integer(&mut self) -> Result<u64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse(format!(
                "expected an integer at byte {}",
                start
            )));
        }
        String::from_utf8_lossy(&self.bytes[start..self.pos])
            .parse::<u64>()
            .map_err(|_| Error::Parse("integer out of range".into()))
    }

    fn pair(&mut self) -> Result<(u32, u32)> {
        // Accept [d, n] and (d, n).
        let open = self.peek();
        let close = match open {
            Some(b'[') => b']',
            Some(b'(') => b')',
            _ => {
                return Err(Error::Parse(format!(
                    "expected a [d, n] pair at byte {}",
                    self.pos
                )));
            }
        };
        self.pos += 1;
        let d = self.integer()?;
        self.expect(b',')?;
        let n = self.integer()?;
        self.expect(close)?;
        if d == 0 || n == 0 || d > u32::MAX as u64 || n > u32::MAX as u64 {
            return Err(Error::Parse(format!("invalid factor pair [{d}, {n}]")));
        }
        Ok((d as u32, n as u32))
    }

    fn factors(&mut self) -> Result<Vec<(u32, u32)>> {
        self.expect(b'[')?;
        let mut out = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.pair()?);
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                Some(b']') => {
                    self.pos += 1;
                    break;
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "expected ',' or ']' in factors at byte {}",
                        self.pos
                    )));
                }
            }
        }
        Ok(out)
    }

    #[allow(clippy::type_complexity)]
    fn parse_object(&mut self) -> Result<(u64, u32, Vec<(u32, u32)>)> {
        self.expect(b'{')?;
        let mut p: Option<u64> = None;
        let mut e: Option<u64> = None;
        let mut factors: Option<Vec<(u32, u32)>> = None;
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Err(Error::Parse("missing required key \"p\"".into()));
        }
        loop {
            let key = self.key()?;
            self.expect(b':')?;
            match key.as_str() {
                "p" => p = Some(self.integer()?),
                "e" => e = Some(self.integer()?),
                "factors" => factors = Some(self.factors()?),
                other => {
                    return Err(Error::Parse(format!("unknown key \"{other}\"")));
                }
            }
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                Some(b'}') => {
                    self.pos += 1;
                    break;
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "expected ',' or '}}' at byte {}",
                        self.pos
                    )));
                }
            }
        }
        let p = p.ok_or_else(|| Error::Parse("missing required key \"p\"".into()))?;
        let factors =
            factors.ok_or_else(|| Error::Parse("missing required key \"factors\"".into()))?;
        let e = e.unwrap_or(1);
        if e == 0 || e > u32::MAX as u64 {
            return Err(Error::Parse(format!("invalid base degree e = {e}")));
        }
        if factors.is_empty() {
            return Err(Error::EmptyFactors);
        }
        Ok((p, e as u32, factors))
    }
}

/// Parse an element literal: parts separated by `;`, each part the
/// row-major comma-separated entry codes of its matrix, e.g. `0,1,1,1`
/// for one 2x2 part or `1;2` for two 1x1 parts.
pub fn parse_element(spec: &AlgebraSpec, text: &str) -> Result<AlgebraElement> {
    let chunks: Vec<&str> = text.split(';').collect();
    if chunks.len() != spec.k() {
        return Err(Error::Parse(format!(
            "element literal has {} parts, spec has {}",
            chunks.len(),
            spec.k()
        )));
    }
    let mut parts = Vec::with_capacity(chunks.len());
    for (i, chunk) in chunks.iter().enumerate() {
        let d = spec.factors()[i].0 as usize;
        let entries = chunk
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Parse(format!("bad entry '{}' in part {}", s.trim(), i)))
            })
            .collect::<Result<Vec<u64>>>()?;
        if entries.len() != d * d {
            return Err(Error::Parse(format!(
                "part {} needs {} entries, got {}",
                i,
                d * d,
                entries.len()
            )));
        }
        parts.push(MatF::new(d, entries));
    }
    let x = AlgebraElement { parts };
    spec.check_shape(&x)?;
    Ok(x)
}
