//! Additive and multiplicative characters of finite fields, their lifts
//! along trace/norm, Gauss sums, and the Hasse-Davenport relation.
//!
//! Character values are double-precision complex numbers carried by
//! [`SumValue`]. Every identity verified downstream is integer-valued or
//! has magnitude at most `q^{n/2}` at desk scale, so the relative
//! tolerance `1e-6 * (1 + magnitude)` sits many orders above accumulated
//! rounding error.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::gf::{construct_field, FieldElement, FiniteField, TowerEmbedding};
use crate::{Error, Result};

/// Default relative tolerance scale for route agreement and rounding.
pub const TOL_SCALE: f64 = 1e-6;

/// A complex value carrying an exponential sum.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct SumValue {
    pub re: f64,
    pub im: f64,
}

impl SumValue {
    pub fn new(re: f64, im: f64) -> SumValue {
        SumValue { re, im }
    }

    pub fn zero() -> SumValue {
        SumValue { re: 0.0, im: 0.0 }
    }

    pub fn one() -> SumValue {
        SumValue { re: 1.0, im: 0.0 }
    }

    pub fn from_real(re: f64) -> SumValue {
        SumValue { re, im: 0.0 }
    }

    /// `exp(2*pi*i * num / den)`.
    pub fn root_of_unity(num: u64, den: u64) -> SumValue {
        let theta = 2.0 * PI * (num % den) as f64 / den as f64;
        SumValue {
            re: theta.cos(),
            im: theta.sin(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn conj(&self) -> SumValue {
        SumValue {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn scale(&self, s: f64) -> SumValue {
        SumValue {
            re: self.re * s,
            im: self.im * s,
        }
    }

    /// Integer power by repeated multiplication (exponents stay tiny).
    pub fn powi(&self, e: u32) -> SumValue {
        let mut acc = SumValue::one();
        for _ in 0..e {
            acc = acc * *self;
        }
        acc
    }

    /// Round to a nearby integer, with tolerance `tol_scale * (1 + |z|)`.
    /// Refusal is a numerical-integrity error, never a silent truncation.
    /// Magnitudes past 2^52 are refused outright: doubles can no longer
    /// separate adjacent integers there.
    pub fn round_to_integer_with(&self, tol_scale: f64) -> Result<i64> {
        if self.magnitude() > (1u64 << 52) as f64 {
            return Err(Error::Numerical(format!(
                "{self} is too large to round to an exact integer"
            )));
        }
        let tau = tol_scale * (1.0 + self.magnitude());
        let nearest = self.re.round();
        if self.im.abs() <= tau && (self.re - nearest).abs() <= tau {
            Ok(nearest as i64)
        } else {
            Err(Error::Numerical(format!(
                "{self} is not within {tau:e} of an integer"
            )))
        }
    }

    pub fn round_to_integer(&self) -> Result<i64> {
        self.round_to_integer_with(TOL_SCALE)
    }

    /// Route-agreement test at relative tolerance `tol_scale`.
    pub fn agrees(&self, other: SumValue, tol_scale: f64) -> bool {
        let tau = tol_scale * (1.0 + self.magnitude().max(other.magnitude()));
        (*self - other).magnitude() <= tau
    }

    /// Rendering with float dust snapped away: components within a
    /// relative 1e-12 of an integer print as that integer, and a zero
    /// imaginary part is dropped. Deterministic, for report rows; the
    /// `Display` impl keeps full precision.
    pub fn display_clean(&self) -> String {
        let snap = |v: f64| -> f64 {
            let nearest = v.round();
            if (v - nearest).abs() <= 1e-12 * (1.0 + self.magnitude()) {
                nearest
            } else {
                v
            }
        };
        let re = snap(self.re);
        let im = snap(self.im);
        if im == 0.0 {
            format!("{re}")
        } else if im < 0.0 {
            format!("{re}{im}i")
        } else {
            format!("{re}+{im}i")
        }
    }
}

impl Add for SumValue {
    type Output = SumValue;
    fn add(self, rhs: SumValue) -> SumValue {
        SumValue::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for SumValue {
    type Output = SumValue;
    fn sub(self, rhs: SumValue) -> SumValue {
        SumValue::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for SumValue {
    type Output = SumValue;
    fn mul(self, rhs: SumValue) -> SumValue {
        SumValue::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

impl Neg for SumValue {
    type Output = SumValue;
    fn neg(self) -> SumValue {
        SumValue::new(-self.re, -self.im)
    }
}

impl fmt::Display for SumValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im == 0.0 {
            write!(f, "{}", self.re)
        } else if self.im < 0.0 {
            write!(f, "{}{}i", self.re, self.im)
        } else {
            write!(f, "{}+{}i", self.re, self.im)
        }
    }
}

/// An additive character `psi_c(x) = e(Tr_{F_q/F_p}(c*x) / p)` of `F_q`,
/// indexed by a nonzero twist `c`. Nontrivial for every such `c`.
#[derive(Clone)]
pub struct AdditiveCharacter {
    field: Arc<FiniteField>,
    twist: FieldElement,
    /// p-th roots of unity, indexed by the lifted absolute trace.
    roots: Vec<SumValue>,
    /// Character value per element code.
    values: Vec<SumValue>,
}

impl AdditiveCharacter {
    pub fn new(field: Arc<FiniteField>, twist: FieldElement) -> Result<AdditiveCharacter> {
        if twist.field_id() != field.id() {
            return Err(mismatch(&field, twist));
        }
        if twist.is_zero() {
            return Err(Error::Numerical(
                "the additive character twist must be nonzero".into(),
            ));
        }
        let p = field.p();
        let roots: Vec<SumValue> = (0..p).map(|t| SumValue::root_of_unity(t, p)).collect();
        let values = (0..field.q())
            .map(|code| {
                let x = field.elt(code).unwrap();
                roots[field.abs_trace_lift(field.mul(twist, x)) as usize]
            })
            .collect();
        Ok(AdditiveCharacter {
            field,
            twist,
            roots,
            values,
        })
    }

    /// The standard character with twist 1.
    pub fn standard(field: Arc<FiniteField>) -> AdditiveCharacter {
        let one = field.one();
        AdditiveCharacter::new(field, one).expect("twist 1 is nonzero")
    }

    pub fn field(&self) -> &Arc<FiniteField> {
        &self.field
    }

    pub fn twist(&self) -> FieldElement {
        self.twist
    }

    pub fn eval(&self, x: FieldElement) -> SumValue {
        assert!(x.field_id() == self.field.id(), "field mismatch");
        self.values[x.code() as usize]
    }

    /// Value at the element with the given code.
    pub fn eval_code(&self, code: u64) -> SumValue {
        self.values[code as usize]
    }

    pub fn root(&self, lift: u64) -> SumValue {
        self.roots[(lift % self.field.p()) as usize]
    }
}

/// A multiplicative character `chi_j(x) = e(j * log(x) / (q-1))` of
/// `F_q^*`, with the convention `chi_j(0) = 0` so that sums over the full
/// field silently restrict to units.
#[derive(Clone)]
pub struct MultiplicativeCharacter {
    field: Arc<FiniteField>,
    index: u64,
    roots: Vec<SumValue>,
}

impl MultiplicativeCharacter {
    pub fn new(field: Arc<FiniteField>, index: u64) -> MultiplicativeCharacter {
        let group = field.q() - 1;
        let roots = (0..group)
            .map(|t| SumValue::root_of_unity(t, group))
            .collect();
        MultiplicativeCharacter {
            index: index % group,
            field,
            roots,
        }
    }

    pub fn trivial(field: Arc<FiniteField>) -> MultiplicativeCharacter {
        MultiplicativeCharacter::new(field, 0)
    }

    pub fn field(&self) -> &Arc<FiniteField> {
        &self.field
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn is_trivial(&self) -> bool {
        self.index == 0
    }

    /// The conjugate character `chi^{-1}` (index negated mod q-1).
    pub fn inverse(&self) -> MultiplicativeCharacter {
        let group = self.field.q() - 1;
        MultiplicativeCharacter::new(self.field.clone(), (group - self.index) % group)
    }

    /// The character `chi^e`.
    pub fn power(&self, e: u64) -> MultiplicativeCharacter {
        let group = self.field.q() - 1;
        MultiplicativeCharacter::new(
            self.field.clone(),
            ((self.index as u128 * e as u128) % group as u128) as u64,
        )
    }

    pub fn eval(&self, x: FieldElement) -> SumValue {
        assert!(x.field_id() == self.field.id(), "field mismatch");
        if x.is_zero() {
            return SumValue::zero();
        }
        let group = self.field.q() - 1;
        let t = self.field.discrete_log(x).expect("nonzero");
        self.roots[((self.index as u128 * t as u128) % group as u128) as usize]
    }

    /// Value at a unit given by its discrete log.
    pub fn eval_log(&self, log: u64) -> SumValue {
        let group = self.field.q() - 1;
        self.roots[((self.index as u128 * log as u128) % group as u128) as usize]
    }
}

/// All multiplicative characters of the field, trivial one first.
pub fn all_characters(field: &Arc<FiniteField>) -> Vec<MultiplicativeCharacter> {
    (0..field.q() - 1)
        .map(|j| MultiplicativeCharacter::new(field.clone(), j))
        .collect()
}

fn mismatch(field: &FiniteField, x: FieldElement) -> Error {
    Error::FieldMismatch {
        have_p: x.field_id().p,
        have_k: x.field_id().k,
        want_p: field.p(),
        want_k: field.k(),
    }
}

/// The Gauss sum `G(chi, psi) = sum over x != 0 of psi(x) chi(x)`.
///
/// Equals -1 for trivial chi and has magnitude sqrt(q) otherwise.
pub fn gauss_sum(chi: &MultiplicativeCharacter, psi: &AdditiveCharacter) -> Result<SumValue> {
    if chi.field().id() != psi.field().id() {
        return Err(Error::FieldMismatch {
            have_p: chi.field().p(),
            have_k: chi.field().k(),
            want_p: psi.field().p(),
            want_k: psi.field().k(),
        });
    }
    let f = psi.field();
    let mut acc = SumValue::zero();
    for t in 0..f.q() - 1 {
        let x = f.exp(t);
        acc = acc + psi.eval(x) * chi.eval_log(t);
    }
    Ok(acc)
}

/// Lift a character pair along a tower embedding: `psi' = psi o Tr` and
/// `chi' = chi o N`. Both lifts are again genuine characters of the
/// extension (the additive lift is the character twisted by the embedded
/// twist; the multiplicative lift has index `j * u * (Q-1)/(q-1)` where
/// `u` is the base log of the norm of the extension generator).
pub fn lift_characters(
    chi: &MultiplicativeCharacter,
    psi: &AdditiveCharacter,
    emb: &TowerEmbedding,
) -> Result<(MultiplicativeCharacter, AdditiveCharacter)> {
    if chi.field().id() != emb.base().id() || psi.field().id() != emb.base().id() {
        return Err(Error::FieldMismatch {
            have_p: chi.field().p(),
            have_k: chi.field().k(),
            want_p: emb.base().p(),
            want_k: emb.base().k(),
        });
    }
    let base = emb.base();
    let ext = emb.ext();
    let lifted_psi = AdditiveCharacter::new(ext.clone(), emb.embed(psi.twist())?)?;
    let q = base.q();
    let big_q = ext.q();
    let norm_of_gen = emb.relative_norm(ext.generator())?;
    let u = base.discrete_log(norm_of_gen)?;
    let ratio = (big_q - 1) / (q - 1);
    let index = ((chi.index() as u128 * u as u128 % (big_q - 1) as u128) * ratio as u128
        % (big_q - 1) as u128) as u64;
    let lifted_chi = MultiplicativeCharacter::new(ext.clone(), index);
    Ok((lifted_chi, lifted_psi))
}

/// Hasse-Davenport check: returns (lhs, rhs) where lhs is the Gauss sum of
/// the lifted pair over `F_{q^m}` computed by direct summation, and rhs is
/// `(-1)^{m-1} G(chi, psi)^m`. The two agree; callers assert tolerance.
pub fn hasse_davenport_check(
    chi: &MultiplicativeCharacter,
    psi: &AdditiveCharacter,
    m: u32,
) -> Result<(SumValue, SumValue)> {
    if m == 0 {
        return Err(Error::ZeroDegree);
    }
    let base = psi.field();
    let ext = construct_field(base.p(), base.k() * m)?;
    let emb = TowerEmbedding::new(base.clone(), ext)?;
    let (chi_m, psi_m) = lift_characters(chi, psi, &emb)?;
    let lhs = gauss_sum(&chi_m, &psi_m)?;
    let g = gauss_sum(chi, psi)?;
    let sign = if (m - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let rhs = g.powi(m).scale(sign);
    Ok((lhs, rhs))
}
