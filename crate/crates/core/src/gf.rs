//! Prime-power finite fields `F_{p^k}` with dense exp/log tables,
//! deterministic moduli, and tower embeddings.
//!
//! Construction is bit-reproducible. The modulus of `F_{p^k}` is the first
//! monic irreducible polynomial of degree `k` in the fixed coefficient
//! order: vectors `(c_0, ..., c_{k-1})` compared lexicographically with
//! `c_0` varying slowest. Elements are enumerated in the same order, and
//! the generator is the first element of full multiplicative order. Two
//! fields built from the same `(p, k)` are therefore identical, and a
//! field is identified by that pair alone.
//!
//! Internally an element is a `u64` code: the base-`p` digits of the code,
//! least significant first, are the coefficients of the residue-class
//! representative (constant term first). The enumeration *rank* of an
//! element reverses the digit order, so rank 0 is zero and ranks 1..q
//! walk the field in the canonical order.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Largest permitted field size; exp/log tables are dense.
pub const TABLE_CAP: u64 = 1 << 20;

/// Cap on `|F|^d` when enumerating irreducible polynomials of degree <= d.
pub const IRREDUCIBLE_CAP: u128 = 1 << 24;

/// Identifies a constructed field. Construction is deterministic, so two
/// fields with equal ids carry identical tables.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct FieldId {
    pub p: u64,
    pub k: u32,
}

/// An element of a specific [`FiniteField`], tagged with its owner so that
/// cross-field arithmetic is rejected unless routed through an embedding.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct FieldElement {
    field: FieldId,
    code: u64,
}

impl FieldElement {
    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn field_id(&self) -> FieldId {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.code == 0
    }
}

/// A finite field `F_{p^k}` as a quotient `F_p[t]/(modulus)`.
pub struct FiniteField {
    p: u64,
    k: u32,
    q: u64,
    /// Monic modulus, little-endian coefficients over `F_p`, length `k + 1`.
    modulus: Vec<u64>,
    generator: u64,
    /// `exp_table[t]` = code of `generator^t`, `t` in `0..q-1`.
    exp_table: Vec<u64>,
    /// `log_table[code]` for nonzero codes; `log_table[0]` is a sentinel.
    log_table: Vec<u64>,
}

impl fmt::Debug for FiniteField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FiniteField(p={}, k={}, q={})", self.p, self.k, self.q)
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

// ---------------------------------------------------------------------------
// Polynomial helpers over the prime field, used only during construction
// (before any tables exist). Coefficients are raw integers mod p,
// little-endian, with no trailing zeros.
// ---------------------------------------------------------------------------

fn pp_trim(a: &mut Vec<u64>) {
    while a.last() == Some(&0) {
        a.pop();
    }
}

fn pp_mul(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + ai * bj) % p;
        }
    }
    pp_trim(&mut out);
    out
}

/// Remainder of `a` by the monic polynomial `m`, everything mod `p`.
fn pp_rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut r: Vec<u64> = a.to_vec();
    pp_trim(&mut r);
    let dm = m.len() - 1;
    while r.len() > dm {
        let lead = *r.last().unwrap();
        let shift = r.len() - 1 - dm;
        if lead != 0 {
            for j in 0..dm {
                let sub = (lead * m[j]) % p;
                r[shift + j] = (r[shift + j] + p - sub) % p;
            }
        }
        r.pop();
        pp_trim(&mut r);
    }
    r
}

/// Monic irreducibles over `F_p` of degree 1..=dmax, grouped by degree,
/// each degree in the canonical coefficient order. Found by trial division
/// against all lower-degree entries.
fn prime_irreducibles_up_to(p: u64, dmax: u32) -> Vec<Vec<Vec<u64>>> {
    let mut by_degree: Vec<Vec<Vec<u64>>> = Vec::new();
    for e in 1..=dmax {
        let mut this: Vec<Vec<u64>> = Vec::new();
        let count = p.pow(e);
        for idx in 0..count {
            // idx digits, most significant first, give (c_0, ..., c_{e-1}).
            let mut cand = vec![0u64; e as usize + 1];
            cand[e as usize] = 1;
            let mut rem = idx;
            for j in (0..e as usize).rev() {
                cand[j] = rem % p;
                rem /= p;
            }
            let irreducible = by_degree
                .iter()
                .take((e / 2) as usize)
                .flatten()
                .all(|f| !pp_rem(&cand, f, p).is_empty());
            if irreducible {
                this.push(cand);
            }
        }
        by_degree.push(this);
    }
    by_degree
}

/// Construct `F_{p^k}` deterministically. See the module docs for the
/// modulus and generator selection rules.
pub fn construct_field(p: u64, k: u32) -> Result<Arc<FiniteField>> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if k == 0 {
        return Err(Error::ZeroDegree);
    }
    let size = (p as u128).checked_pow(k).ok_or(Error::Overflow)?;
    if size > TABLE_CAP as u128 {
        return Err(Error::TableCapExceeded {
            size,
            cap: TABLE_CAP,
        });
    }
    let q = size as u64;

    let modulus = if k == 1 {
        vec![0, 1]
    } else {
        let lower = prime_irreducibles_up_to(p, k / 2);
        let mut found: Option<Vec<u64>> = None;
        for idx in 0..q {
            let mut c = vec![0u64; k as usize];
            let mut rem = idx;
            for j in (0..k as usize).rev() {
                c[j] = rem % p;
                rem /= p;
            }
            let mut cand = c;
            cand.push(1);
            let irreducible = lower
                .iter()
                .flatten()
                .all(|f| !pp_rem(&cand, f, p).is_empty());
            if irreducible {
                found = Some(cand);
                break;
            }
        }
        found.expect("an irreducible polynomial of every degree exists")
    };

    let decode = |code: u64| -> Vec<u64> {
        let mut out = vec![0u64; k as usize];
        let mut c = code;
        for digit in out.iter_mut() {
            *digit = c % p;
            c /= p;
        }
        out
    };
    let encode = |coeffs: &[u64]| -> u64 {
        let mut code = 0u64;
        for &c in coeffs.iter().rev() {
            code = code * p + c;
        }
        code
    };
    let code_of_rank = |rank: u64| -> u64 {
        let mut r = rank;
        let mut code = 0u64;
        let mut place = q / p;
        for _ in 0..k {
            code += (r % p) * place;
            r /= p;
            place /= p;
        }
        code
    };

    // Slow-path multiplication through polynomial arithmetic, used only to
    // locate the generator and fill the tables.
    let poly_mul = |a: u64, b: u64| -> u64 {
        let prod = pp_mul(&decode(a), &decode(b), p);
        encode(&pp_rem(&prod, &modulus, p))
    };
    let poly_pow = |mut base: u64, mut e: u64| -> u64 {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = poly_mul(acc, base);
            }
            base = poly_mul(base, base);
            e >>= 1;
        }
        acc
    };

    let group = q - 1;
    let prime_factors = {
        let mut fs = Vec::new();
        let mut n = group;
        let mut d = 2u64;
        while d * d <= n {
            if n.is_multiple_of(d) {
                fs.push(d);
                while n.is_multiple_of(d) {
                    n /= d;
                }
            }
            d += 1;
        }
        if n > 1 {
            fs.push(n);
        }
        fs
    };
    let mut generator = None;
    for rank in 1..q {
        let cand = code_of_rank(rank);
        if prime_factors
            .iter()
            .all(|&l| poly_pow(cand, group / l) != 1)
        {
            generator = Some(cand);
            break;
        }
    }
    let generator = generator.expect("the multiplicative group is cyclic");

    let mut exp_table = vec![0u64; group as usize];
    let mut log_table = vec![u64::MAX; q as usize];
    let mut x = 1u64;
    for t in 0..group {
        exp_table[t as usize] = x;
        log_table[x as usize] = t;
        x = poly_mul(x, generator);
    }
    assert_eq!(x, 1, "generator order must be q - 1");

    Ok(Arc::new(FiniteField {
        p,
        k,
        q,
        modulus,
        generator,
        exp_table,
        log_table,
    }))
}

impl FiniteField {
    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Field size `q = p^k`.
    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn id(&self) -> FieldId {
        FieldId {
            p: self.p,
            k: self.k,
        }
    }

    /// Monic modulus polynomial, little-endian coefficients.
    pub fn modulus(&self) -> &[u64] {
        &self.modulus
    }

    pub fn generator(&self) -> FieldElement {
        self.make(self.generator)
    }

    fn make(&self, code: u64) -> FieldElement {
        FieldElement {
            field: self.id(),
            code,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.make(0)
    }

    pub fn one(&self) -> FieldElement {
        self.make(1)
    }

    /// Element from its integer code (base-p digits = coefficients,
    /// constant term first).
    pub fn elt(&self, code: u64) -> Result<FieldElement> {
        if code < self.q {
            Ok(self.make(code))
        } else {
            Err(Error::InvalidElement(code))
        }
    }

    fn decode(&self, code: u64) -> Vec<u64> {
        let mut out = vec![0u64; self.k as usize];
        let mut c = code;
        for digit in out.iter_mut() {
            *digit = c % self.p;
            c /= self.p;
        }
        out
    }

    /// Code of the element at position `rank` in the canonical enumeration
    /// order (coefficient vectors lexicographic, `c_0` slowest). This is a
    /// base-p digit reversal, and is its own inverse.
    pub fn code_of_rank(&self, rank: u64) -> u64 {
        debug_assert!(rank < self.q);
        let mut r = rank;
        let mut code = 0u64;
        let mut place = self.q / self.p; // p^{k-1}
        for _ in 0..self.k {
            code += (r % self.p) * place;
            r /= self.p;
            place /= self.p;
        }
        code
    }

    pub fn rank_of_code(&self, code: u64) -> u64 {
        self.code_of_rank(code)
    }

    pub fn element_of_rank(&self, rank: u64) -> FieldElement {
        self.make(self.code_of_rank(rank))
    }

    fn check(&self, x: FieldElement) -> u64 {
        assert!(
            x.field == self.id(),
            "field mismatch: element of F_{{{}^{}}} used with F_{{{}^{}}}",
            x.field.p,
            x.field.k,
            self.p,
            self.k
        );
        x.code
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let (a, b) = (self.check(a), self.check(b));
        let mut code = 0u64;
        let mut place = 1u64;
        let (mut ca, mut cb) = (a, b);
        for _ in 0..self.k {
            let s = (ca % self.p + cb % self.p) % self.p;
            code += s * place;
            place *= self.p;
            ca /= self.p;
            cb /= self.p;
        }
        self.make(code)
    }

    pub fn neg(&self, a: FieldElement) -> FieldElement {
        let a = self.check(a);
        let mut code = 0u64;
        let mut place = 1u64;
        let mut ca = a;
        for _ in 0..self.k {
            let d = ca % self.p;
            code += ((self.p - d) % self.p) * place;
            place *= self.p;
            ca /= self.p;
        }
        self.make(code)
    }

    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let (a, b) = (self.check(a), self.check(b));
        if a == 0 || b == 0 {
            return self.zero();
        }
        let t = self.log_table[a as usize] + self.log_table[b as usize];
        self.make(self.exp_table[(t % (self.q - 1)) as usize])
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        let a = self.check(a);
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        let t = self.log_table[a as usize];
        let g = self.q - 1;
        Ok(self.make(self.exp_table[((g - t) % g) as usize]))
    }

    /// `a^e` with the convention `0^0 = 1`.
    pub fn pow(&self, a: FieldElement, e: u64) -> FieldElement {
        let a = self.check(a);
        if a == 0 {
            return if e == 0 { self.one() } else { self.zero() };
        }
        let t = self.log_table[a as usize] as u128 * e as u128;
        self.make(self.exp_table[(t % (self.q as u128 - 1)) as usize])
    }

    /// The p-power Frobenius `x -> x^p`.
    pub fn frobenius(&self, a: FieldElement) -> FieldElement {
        self.pow(a, self.p)
    }

    /// Discrete log to the fixed generator. Errors on zero.
    pub fn discrete_log(&self, x: FieldElement) -> Result<u64> {
        let c = self.check(x);
        if c == 0 {
            return Err(Error::LogOfZero);
        }
        Ok(self.log_table[c as usize])
    }

    /// `generator^t` (exponent taken mod q-1).
    pub fn exp(&self, t: u64) -> FieldElement {
        self.make(self.exp_table[(t % (self.q - 1)) as usize])
    }

    /// Lift of the absolute trace `Tr_{F_q/F_p}(x)` to an integer in `0..p`.
    pub fn abs_trace_lift(&self, x: FieldElement) -> u64 {
        let c = self.check(x);
        if c == 0 {
            return 0;
        }
        let mut acc = self.zero();
        let mut e = 1u64;
        for _ in 0..self.k {
            acc = self.add(acc, self.pow(self.make(c), e));
            e *= self.p;
        }
        debug_assert!(acc.code < self.p, "absolute trace must lie in F_p");
        acc.code
    }

    /// Render an element as a polynomial in `t`, mostly for CLI output.
    pub fn render(&self, x: FieldElement) -> String {
        let c = self.check(x);
        if c == 0 {
            return "0".to_string();
        }
        let digits = self.decode(c);
        let mut parts = Vec::new();
        for (j, &d) in digits.iter().enumerate().rev() {
            if d == 0 {
                continue;
            }
            let term = match (j, d) {
                (0, d) => format!("{d}"),
                (1, 1) => "t".to_string(),
                (1, d) => format!("{d}t"),
                (j, 1) => format!("t^{j}"),
                (j, d) => format!("{d}t^{j}"),
            };
            parts.push(term);
        }
        parts.join("+")
    }
}

// ---------------------------------------------------------------------------
// Polynomials over a constructed field
// ---------------------------------------------------------------------------

/// A polynomial over a constructed field, stored as little-endian element
/// codes with no trailing zeros (the zero polynomial is empty).
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct PolyF {
    pub coeffs: Vec<u64>,
}

impl PolyF {
    pub fn new(mut coeffs: Vec<u64>) -> PolyF {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        PolyF { coeffs }
    }

    pub fn zero() -> PolyF {
        PolyF { coeffs: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn is_monic(&self, _f: &FiniteField) -> bool {
        self.coeffs.last() == Some(&1)
    }

    pub fn constant(c: u64) -> PolyF {
        PolyF::new(vec![c])
    }

    pub fn add(&self, other: &PolyF, f: &FiniteField) -> PolyF {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0u64; n];
        for (j, slot) in out.iter_mut().enumerate() {
            let a = self.coeffs.get(j).copied().unwrap_or(0);
            let b = other.coeffs.get(j).copied().unwrap_or(0);
            *slot = f.add(f.elt(a).unwrap(), f.elt(b).unwrap()).code();
        }
        PolyF::new(out)
    }

    pub fn neg(&self, f: &FiniteField) -> PolyF {
        PolyF::new(
            self.coeffs
                .iter()
                .map(|&c| f.neg(f.elt(c).unwrap()).code())
                .collect(),
        )
    }

    pub fn sub(&self, other: &PolyF, f: &FiniteField) -> PolyF {
        self.add(&other.neg(f), f)
    }

    pub fn mul(&self, other: &PolyF, f: &FiniteField) -> PolyF {
        if self.is_zero() || other.is_zero() {
            return PolyF::zero();
        }
        let mut out = vec![0u64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let ea = f.elt(a).unwrap();
            for (j, &b) in other.coeffs.iter().enumerate() {
                if b == 0 {
                    continue;
                }
                let prod = f.mul(ea, f.elt(b).unwrap());
                out[i + j] = f.add(f.elt(out[i + j]).unwrap(), prod).code();
            }
        }
        PolyF::new(out)
    }

    /// Division with remainder by a nonzero polynomial.
    pub fn divrem(&self, div: &PolyF, f: &FiniteField) -> (PolyF, PolyF) {
        assert!(!div.is_zero(), "division by the zero polynomial");
        let dd = div.degree().unwrap();
        let lead_inv = f
            .inv(f.elt(*div.coeffs.last().unwrap()).unwrap())
            .expect("nonzero leading coefficient");
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0u64; self.coeffs.len().saturating_sub(dd)];
        while rem.len() > dd && !rem.is_empty() {
            let lead = *rem.last().unwrap();
            let shift = rem.len() - 1 - dd;
            if lead != 0 {
                let qc = f.mul(f.elt(lead).unwrap(), lead_inv);
                quot[shift] = qc.code();
                for j in 0..=dd {
                    let sub = f.mul(qc, f.elt(div.coeffs[j]).unwrap());
                    rem[shift + j] = f.sub(f.elt(rem[shift + j]).unwrap(), sub).code();
                }
            }
            while rem.last() == Some(&0) {
                rem.pop();
            }
            if rem.len() <= dd {
                break;
            }
        }
        (PolyF::new(quot), PolyF::new(rem))
    }

    pub fn rem(&self, div: &PolyF, f: &FiniteField) -> PolyF {
        self.divrem(div, f).1
    }

    pub fn eval(&self, x: FieldElement, f: &FiniteField) -> FieldElement {
        let mut acc = f.zero();
        for &c in self.coeffs.iter().rev() {
            acc = f.add(f.mul(acc, x), f.elt(c).unwrap());
        }
        acc
    }

    pub fn render(&self, var: &str) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (j, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            let term = match (j, c) {
                (0, c) => format!("{c}"),
                (1, 1) => var.to_string(),
                (1, c) => format!("{c}{var}"),
                (j, 1) => format!("{var}^{j}"),
                (j, c) => format!("{c}{var}^{j}"),
            };
            parts.push(term);
        }
        parts.join("+")
    }
}

/// All monic irreducible polynomials over `f` of degree 1..=d, in the
/// deterministic coefficient order (coefficients scanned in element
/// enumeration order, `c_0` slowest), grouped by degree.
pub fn enumerate_irreducibles(f: &FiniteField, d: u32) -> Result<Vec<PolyF>> {
    let total = (f.q() as u128).checked_pow(d).ok_or(Error::Overflow)?;
    if total > IRREDUCIBLE_CAP {
        return Err(Error::CapExceeded {
            what: format!("irreducible enumeration over F_{} to degree {}", f.q(), d),
            needed: total,
            cap: IRREDUCIBLE_CAP as u64,
        });
    }
    let mut out: Vec<PolyF> = Vec::new();
    let mut by_degree: Vec<Vec<PolyF>> = Vec::new();
    for e in 1..=d {
        let mut this: Vec<PolyF> = Vec::new();
        let count = (f.q() as u128).pow(e) as u64;
        for idx in 0..count {
            // Decode idx into ranks (r_0, ..., r_{e-1}), r_0 slowest, then
            // map ranks to element codes.
            let mut coeffs = vec![0u64; e as usize + 1];
            coeffs[e as usize] = 1;
            let mut rem = idx;
            for j in (0..e as usize).rev() {
                coeffs[j] = f.code_of_rank(rem % f.q());
                rem /= f.q();
            }
            let cand = PolyF::new(coeffs);
            let irreducible = by_degree
                .iter()
                .take((e / 2) as usize)
                .flatten()
                .all(|g| !cand.rem(g, f).is_zero());
            if irreducible {
                this.push(cand);
            }
        }
        out.extend(this.iter().cloned());
        by_degree.push(this);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tower embeddings
// ---------------------------------------------------------------------------

/// An explicit field homomorphism `F_{p^e} -> F_{p^{e*m}}`, realized by
/// mapping the base residue class to the first root of the base modulus in
/// the extension (first in enumeration order). Carries dense forward,
/// trace, and norm tables.
pub struct TowerEmbedding {
    base: Arc<FiniteField>,
    ext: Arc<FiniteField>,
    m: u32,
    base_root_image: FieldElement,
    fwd: Vec<u64>,
    rev: HashMap<u64, u64>,
    tr_table: Vec<u64>,
    norm_table: Vec<u64>,
}

impl fmt::Debug for TowerEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TowerEmbedding(F_{} -> F_{}, m={})",
            self.base.q(),
            self.ext.q(),
            self.m
        )
    }
}

impl TowerEmbedding {
    pub fn new(base: Arc<FiniteField>, ext: Arc<FiniteField>) -> Result<Arc<TowerEmbedding>> {
        if base.p() != ext.p() || !ext.k().is_multiple_of(base.k()) {
            return Err(Error::NotASubfield(base.p(), base.k(), ext.p(), ext.k()));
        }
        let m = ext.k() / base.k();

        // First root of the base modulus among extension elements, scanned
        // in enumeration order. The base modulus has coefficients in F_p,
        // which are constant codes in the extension.
        let mod_coeffs: Vec<FieldElement> = base
            .modulus()
            .iter()
            .map(|&c| ext.elt(c).unwrap())
            .collect();
        let mut root = None;
        for rank in 0..ext.q() {
            let x = ext.element_of_rank(rank);
            let mut acc = ext.zero();
            for &c in mod_coeffs.iter().rev() {
                acc = ext.add(ext.mul(acc, x), c);
            }
            if acc.is_zero() {
                root = Some(x);
                break;
            }
        }
        let w = root.expect("the base modulus splits in every extension of its field");

        let mut fwd = vec![0u64; base.q() as usize];
        let mut rev = HashMap::with_capacity(base.q() as usize);
        for code in 0..base.q() {
            let digits_val = {
                // Horner over the base digits of `code`.
                let mut acc = ext.zero();
                let mut ds = Vec::with_capacity(base.k() as usize);
                let mut c = code;
                for _ in 0..base.k() {
                    ds.push(c % base.p());
                    c /= base.p();
                }
                for &d in ds.iter().rev() {
                    acc = ext.add(ext.mul(acc, w), ext.elt(d).unwrap());
                }
                acc
            };
            fwd[code as usize] = digits_val.code();
            rev.insert(digits_val.code(), code);
        }
        assert_eq!(rev.len(), base.q() as usize, "embedding must be injective");

        // Relative trace and norm tables. The trace lands in the embedded
        // base field because it is fixed by the q-power Frobenius.
        let qb = base.q();
        let mut tr_table = vec![0u64; ext.q() as usize];
        let mut norm_table = vec![0u64; ext.q() as usize];
        for code in 0..ext.q() {
            let x = ext.elt(code).unwrap();
            let mut tr = ext.zero();
            let mut e = 1u64;
            for _ in 0..m {
                tr = ext.add(tr, ext.pow(x, e));
                e *= qb;
            }
            tr_table[code as usize] = *rev
                .get(&tr.code())
                .expect("relative trace lies in the embedded base field");
            if code == 0 {
                norm_table[0] = 0;
            } else {
                let exp_sum = (ext.q() - 1) / (qb - 1);
                let n = ext.pow(x, exp_sum);
                norm_table[code as usize] = *rev
                    .get(&n.code())
                    .expect("relative norm lies in the embedded base field");
            }
        }

        Ok(Arc::new(TowerEmbedding {
            base_root_image: w,
            base,
            ext,
            m,
            fwd,
            rev,
            tr_table,
            norm_table,
        }))
    }

    pub fn base(&self) -> &Arc<FiniteField> {
        &self.base
    }

    pub fn ext(&self) -> &Arc<FiniteField> {
        &self.ext
    }

    /// Relative extension degree m, so that |ext| = |base|^m.
    pub fn degree(&self) -> u32 {
        self.m
    }

    pub fn base_root_image(&self) -> FieldElement {
        self.base_root_image
    }

    pub fn embed(&self, x: FieldElement) -> Result<FieldElement> {
        if x.field_id() != self.base.id() {
            return Err(Error::FieldMismatch {
                have_p: x.field_id().p,
                have_k: x.field_id().k,
                want_p: self.base.p(),
                want_k: self.base.k(),
            });
        }
        self.ext.elt(self.fwd[x.code() as usize])
    }

    /// Inverse of [`embed`](Self::embed) on its image.
    pub fn project(&self, y: FieldElement) -> Result<FieldElement> {
        if y.field_id() != self.ext.id() {
            return Err(Error::FieldMismatch {
                have_p: y.field_id().p,
                have_k: y.field_id().k,
                want_p: self.ext.p(),
                want_k: self.ext.k(),
            });
        }
        match self.rev.get(&y.code()) {
            Some(&c) => self.base.elt(c),
            None => Err(Error::NotInSubfield),
        }
    }

    fn check_ext(&self, x: FieldElement) -> Result<u64> {
        if x.field_id() != self.ext.id() {
            return Err(Error::FieldMismatch {
                have_p: x.field_id().p,
                have_k: x.field_id().k,
                want_p: self.ext.p(),
                want_k: self.ext.k(),
            });
        }
        Ok(x.code())
    }

    /// Relative trace `Tr_{ext/base}(x) = sum of x^{q^j}`, pulled back to
    /// the base field.
    pub fn relative_trace(&self, x: FieldElement) -> Result<FieldElement> {
        let c = self.check_ext(x)?;
        self.base.elt(self.tr_table[c as usize])
    }

    /// Relative norm `N_{ext/base}(x) = product of x^{q^j}`, pulled back to
    /// the base field. Zero exactly on zero.
    pub fn relative_norm(&self, x: FieldElement) -> Result<FieldElement> {
        let c = self.check_ext(x)?;
        self.base.elt(self.norm_table[c as usize])
    }
}
