//! Every exponential sum in the family: Gauss sums over GL_d, the
//! auxiliary sums S_m(a,b), hyper-Kloosterman sums, Kloosterman sums over
//! a semi-simple algebra, full unit sums, product-trace sums, and
//! polynomial-trace sums. Each is evaluated by direct summation and,
//! where a closed form exists, by that closed form; the two routes must
//! agree within tolerance or the operation errors out.
//!
//! Direct summations iterate the free variables and solve the last one,
//! so an r-fold sum costs `|B*|^{r-1}` rather than `|B*|^r`. Floating
//! accumulation is pairwise per partition with a fixed partition merge
//! order, which keeps sums reproducible to well under 1e-9 across
//! partition counts.

use std::sync::Arc;
use std::thread;

use crate::algebra::{is_regular, mat_trace, AlgebraElement, AlgebraSpec};
use crate::chars::{
    all_characters, gauss_sum, AdditiveCharacter, MultiplicativeCharacter, SumValue, TOL_SCALE,
};
use crate::gf::{FieldElement, FiniteField, PolyF};
use crate::{Error, Result};

/// Evaluation configuration: enumeration cap, partition count for the
/// concurrent sweeps, and the relative tolerance scale.
#[derive(Clone, Copy, Debug)]
pub struct SumConfig {
    pub max_summands: u64,
    pub partitions: u32,
    pub tol: f64,
}

impl Default for SumConfig {
    fn default() -> SumConfig {
        SumConfig {
            max_summands: 1 << 24,
            partitions: 1,
            tol: TOL_SCALE,
        }
    }
}

impl SumConfig {
    pub fn with_partitions(partitions: u32) -> SumConfig {
        SumConfig {
            partitions,
            ..SumConfig::default()
        }
    }

    fn check_cap(&self, what: &str, needed: u128) -> Result<()> {
        if needed > self.max_summands as u128 {
            return Err(Error::CapExceeded {
                what: what.to_string(),
                needed,
                cap: self.max_summands,
            });
        }
        Ok(())
    }
}

/// How a requested quantity should be evaluated.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Method {
    Direct,
    ClosedForm,
    #[default]
    Both,
}

/// A CLI-level request for one of the norm-fiber sums.
#[derive(Debug)]
pub struct SumRequest<'a> {
    pub spec: &'a AlgebraSpec,
    pub psi_twist: u64,
    pub a: Option<FieldElement>,
    pub b: FieldElement,
    pub method: Method,
}

/// A product-trace query: sums/counts over r-tuples of units multiplying
/// to the invertible target x.
#[derive(Debug, Clone)]
pub struct ProductTraceQuery<'a> {
    pub spec: &'a AlgebraSpec,
    pub r: u32,
    pub x: AlgebraElement,
}

// ---------------------------------------------------------------------------
// Pairwise (tree) summation and partitioning
// ---------------------------------------------------------------------------

/// Streaming pairwise accumulator: partial sums of 2^i consecutive terms
/// per level, merged in a fixed low-to-high order. Deterministic for a
/// fixed term sequence.
#[derive(Default)]
pub struct PairwiseSum {
    levels: Vec<Option<SumValue>>,
}

impl PairwiseSum {
    pub fn new() -> PairwiseSum {
        PairwiseSum::default()
    }

    pub fn push(&mut self, v: SumValue) {
        let mut carry = v;
        for level in self.levels.iter_mut() {
            match level.take() {
                None => {
                    *level = Some(carry);
                    return;
                }
                Some(existing) => {
                    carry = existing + carry;
                }
            }
        }
        self.levels.push(Some(carry));
    }

    pub fn finish(&self) -> SumValue {
        let mut acc = SumValue::zero();
        for v in self.levels.iter().flatten() {
            acc = acc + *v;
        }
        acc
    }
}

/// Contiguous near-equal index ranges covering `0..total`.
pub fn partition_ranges(total: u64, partitions: u32) -> Vec<(u64, u64)> {
    let parts = (partitions.max(1) as u64).min(total.max(1));
    let base = total / parts;
    let extra = total % parts;
    let mut out = Vec::with_capacity(parts as usize);
    let mut start = 0;
    for i in 0..parts {
        let len = base + if i < extra { 1 } else { 0 };
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Run `work` over each partition range (concurrently when more than one)
/// and return the per-partition results in partition order.
pub fn partitioned_map<T, W>(total: u64, partitions: u32, work: W) -> Vec<T>
where
    T: Send,
    W: Fn(u64, u64) -> T + Sync,
{
    let ranges = partition_ranges(total, partitions);
    if ranges.len() == 1 {
        let (a, b) = ranges[0];
        return vec![work(a, b)];
    }
    thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|&(a, b)| {
                let work = &work;
                scope.spawn(move || work(a, b))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("partition worker panicked"))
            .collect()
    })
}

/// Pairwise-summed complex sweep over `0..total` with partitioned
/// evaluation; `term` returns `None` for filtered-out indices. Partition
/// results merge in partition index order.
pub fn partitioned_complex_sum<F>(total: u64, partitions: u32, term: F) -> SumValue
where
    F: Fn(u64) -> Option<SumValue> + Sync,
{
    let parts = partitioned_map(total, partitions, |start, end| {
        let mut acc = PairwiseSum::new();
        for idx in start..end {
            if let Some(v) = term(idx) {
                acc.push(v);
            }
        }
        acc.finish()
    });
    parts.into_iter().fold(SumValue::zero(), |acc, v| acc + v)
}

/// `q^{num/2}` as a float, exact when `num` is even.
pub fn q_pow_half(q: u64, num: u32) -> f64 {
    let whole = (q as f64).powi((num / 2) as i32);
    if num.is_multiple_of(2) {
        whole
    } else {
        whole * (q as f64).sqrt()
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn check_same_field(
    f: &FiniteField,
    chi: &MultiplicativeCharacter,
    psi: &AdditiveCharacter,
) -> Result<()> {
    if chi.field().id() != f.id() || psi.field().id() != f.id() {
        return Err(Error::FieldMismatch {
            have_p: chi.field().p(),
            have_k: chi.field().k(),
            want_p: f.p(),
            want_k: f.k(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gauss sums over GL_d
// ---------------------------------------------------------------------------

/// The Gauss sum over `GL_d(F_Q)`: direct enumeration of all invertible
/// matrices weighted by `chi(det) psi(tr)`, against the closed form
/// `Q^{d(d-1)/2} G(chi, psi)^d`. Contract: the routes agree.
pub fn gauss_sum_gl(
    field: &Arc<FiniteField>,
    d: u32,
    chi: &MultiplicativeCharacter,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<(SumValue, SumValue)> {
    check_same_field(field, chi, psi)?;
    let q = field.q();
    let total = (q as u128).checked_pow(d * d).ok_or(Error::Overflow)?;
    cfg.check_cap(&format!("GL_{d}(F_{q}) enumeration"), total)?;
    let total = total as u64;
    let d = d as usize;

    let direct = partitioned_complex_sum(total, cfg.partitions, |idx| {
        // Decode idx into d^2 entry ranks, first entry most significant.
        let mut entries = vec![0u64; d * d];
        let mut rem = idx;
        for slot in entries.iter_mut().rev() {
            *slot = field.code_of_rank(rem % q);
            rem /= q;
        }
        let m = crate::algebra::MatF { d, entries };
        let det = crate::algebra::mat_det(field, &m);
        if det.is_zero() {
            return None;
        }
        Some(chi.eval(det) * psi.eval(mat_trace(field, &m)))
    });

    let g = gauss_sum(chi, psi)?;
    let closed = g
        .powi(d as u32)
        .scale((q as f64).powi((d * (d - 1) / 2) as i32));
    if !direct.agrees(closed, cfg.tol) {
        return Err(Error::RouteDisagreement(format!(
            "GL_{d}(F_{q}) Gauss sum: direct {direct} vs closed {closed}"
        )));
    }
    Ok((direct, closed))
}

// ---------------------------------------------------------------------------
// S_m(a, b)
// ---------------------------------------------------------------------------

/// The auxiliary sum `S_m(a,b)` and its centered companion
/// `T_m(a,b) = S_m(a,b) - (-1)^m (q-1)`.
#[derive(Clone, Copy, Debug)]
pub struct SmSum {
    pub value: SumValue,
    pub t_term: SumValue,
}

/// `S_m(a,b) = sum over v != 0 of psi(-av) sum over chi of
/// conj(chi)(b v^m) G(chi,psi)^m`. Evaluated by the definition and by the
/// separated fast path for its `a` case; the routes must agree.
pub fn s_m(
    field: &Arc<FiniteField>,
    m: u32,
    a: FieldElement,
    b: FieldElement,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<SmSum> {
    if b.is_zero() {
        return Err(Error::NormTargetZero);
    }
    if psi.field().id() != field.id() {
        return Err(Error::FieldMismatch {
            have_p: psi.field().p(),
            have_k: psi.field().k(),
            want_p: field.p(),
            want_k: field.k(),
        });
    }
    let q = field.q();
    let chis = all_characters(field);
    let gauss_pows: Vec<SumValue> = chis
        .iter()
        .map(|chi| gauss_sum(chi, psi).map(|g| g.powi(m)))
        .collect::<Result<Vec<_>>>()?;

    // Route 1: the definition.
    let mut definitional = SumValue::zero();
    for t in 0..q - 1 {
        let v = field.exp(t);
        let psi_factor = psi.eval(field.neg(field.mul(a, v)));
        let bvm = field.mul(b, field.pow(v, m as u64));
        let mut inner = SumValue::zero();
        for (chi, gp) in chis.iter().zip(&gauss_pows) {
            inner = inner + chi.eval(bvm).conj() * *gp;
        }
        definitional = definitional + psi_factor * inner;
    }

    // Route 2: the separated form.
    let separated = if a.is_zero() {
        // (q-1) [(-1)^m + sum over chi^m = 1, chi != 1 of G^m conj(chi)(b)].
        let mut s = SumValue::from_real(if m.is_multiple_of(2) { 1.0 } else { -1.0 });
        for (j, (chi, gp)) in chis.iter().zip(&gauss_pows).enumerate() {
            if j == 0 {
                continue;
            }
            if (j as u128 * m as u128).is_multiple_of(q as u128 - 1) {
                s = s + *gp * chi.eval(b).conj();
            }
        }
        s.scale((q - 1) as f64)
    } else {
        // sum over chi of chi((-a)^m / b) G(conj(chi)^m, psi) G(chi,psi)^m.
        let neg_a_m = field.pow(field.neg(a), m as u64);
        let arg = field.mul(neg_a_m, field.inv(b)?);
        let mut s = SumValue::zero();
        for (chi, gp) in chis.iter().zip(&gauss_pows) {
            let conj_m = chi.inverse().power(m as u64);
            let g2 = gauss_sum(&conj_m, psi)?;
            s = s + chi.eval(arg) * g2 * *gp;
        }
        s
    };

    if !definitional.agrees(separated, cfg.tol) {
        return Err(Error::RouteDisagreement(format!(
            "S_{m}({}, {}) over F_{q}: definition {definitional} vs separated {separated}",
            a.code(),
            b.code()
        )));
    }
    let center =
        SumValue::from_real(if m.is_multiple_of(2) { 1.0 } else { -1.0 }).scale((q - 1) as f64);
    Ok(SmSum {
        value: definitional,
        t_term: definitional - center,
    })
}

// ---------------------------------------------------------------------------
// Hyper-Kloosterman sums
// ---------------------------------------------------------------------------

/// The classical hyper-Kloosterman sum `K_{F_q^m}(b)`: the sum of
/// `psi(x_1 + ... + x_m)` over unit m-tuples with product b, evaluated
/// over `(m-1)` free variables with the last solved. Deligne's bound
/// `m q^{(m-1)/2}` is asserted.
pub fn hyper_kloosterman(
    field: &Arc<FiniteField>,
    m: u32,
    b: FieldElement,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<SumValue> {
    if b.is_zero() {
        return Err(Error::NormTargetZero);
    }
    if m == 0 {
        return Err(Error::ZeroDegree);
    }
    if psi.field().id() != field.id() {
        return Err(Error::FieldMismatch {
            have_p: psi.field().p(),
            have_k: psi.field().k(),
            want_p: field.p(),
            want_k: field.k(),
        });
    }
    let q = field.q();
    let units = q - 1;
    let needed = (units as u128).checked_pow(m - 1).ok_or(Error::Overflow)?;
    cfg.check_cap(&format!("hyper-Kloosterman over F_{q} with m={m}"), needed)?;

    let log_b = field.discrete_log(b)?;
    let value = if m == 1 {
        psi.eval(b)
    } else {
        partitioned_complex_sum(needed as u64, cfg.partitions, |idx| {
            let mut rem = idx;
            let mut sum = field.zero();
            let mut log_prod: u64 = 0;
            for _ in 0..m - 1 {
                let t = rem % units;
                rem /= units;
                let x = field.exp(t);
                sum = field.add(sum, x);
                log_prod = (log_prod + t) % units;
            }
            let last = field.exp((log_b + units - log_prod) % units);
            sum = field.add(sum, last);
            Some(psi.eval(sum))
        })
    };

    let bound = m as f64 * q_pow_half(q, m - 1);
    if value.magnitude() > bound + cfg.tol * (1.0 + value.magnitude()) {
        return Err(Error::BoundViolated(format!(
            "Deligne bound: |K_{{F_{q}^{m}}}({})| = {} > {bound}",
            b.code(),
            value.magnitude()
        )));
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// Kloosterman sums over B
// ---------------------------------------------------------------------------

/// Both routes to the Kloosterman sum over B.
#[derive(Clone, Copy, Debug)]
pub struct KloostermanB {
    pub direct: SumValue,
    pub reduced: SumValue,
}

/// The reduction route: `K_B(b) = (-1)^{m - sum d_i} q^{(n-m)/2}
/// K_{F_q^m}(b)`. Always feasible.
pub fn kloosterman_b_reduced(
    spec: &AlgebraSpec,
    b: FieldElement,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<SumValue> {
    let k_m = hyper_kloosterman(spec.base(), spec.m(), b, psi, cfg)?;
    let scale = spec.sign_m_minus_sum_d() as f64 * spec.q_pow(spec.half_nm())? as f64;
    let value = k_m.scale(scale);
    check_square_root_bound(spec, b, value, cfg)?;
    Ok(value)
}

fn check_square_root_bound(
    spec: &AlgebraSpec,
    b: FieldElement,
    value: SumValue,
    cfg: &SumConfig,
) -> Result<()> {
    let bound = spec.m() as f64 * q_pow_half(spec.q(), spec.n() - 1);
    if value.magnitude() > bound + cfg.tol * (1.0 + value.magnitude()) {
        return Err(Error::BoundViolated(format!(
            "|K_B({})| = {} > {} on {}",
            b.code(),
            value.magnitude(),
            bound,
            spec.name()
        )));
    }
    Ok(())
}

/// `K_B(b) = sum over units with N_B(x) = b of psi(Tr_B(x))`, by direct
/// enumeration and by the reduction to `K_{F_q^m}(b)`. Contract: the two
/// agree, and the square-root bound `m q^{(n-1)/2}` holds.
pub fn kloosterman_b(
    spec: &AlgebraSpec,
    b: FieldElement,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<KloostermanB> {
    if b.is_zero() {
        return Err(Error::NormTargetZero);
    }
    cfg.check_cap(
        &format!("direct Kloosterman enumeration of {}", spec.name()),
        spec.size(),
    )?;
    let total = spec.size() as u64;
    let direct = partitioned_complex_sum(total, cfg.partitions, |idx| {
        let x = spec.decode_element(idx);
        if !spec.is_invertible(&x) {
            return None;
        }
        let (tr, nm) = spec.trace_norm(&x).expect("conforming element");
        if nm != b {
            return None;
        }
        Some(psi.eval(tr))
    });
    let reduced = kloosterman_b_reduced(spec, b, psi, cfg)?;
    if !direct.agrees(reduced, cfg.tol) {
        return Err(Error::RouteDisagreement(format!(
            "K_B({}) on {}: direct {direct} vs reduced {reduced}",
            b.code(),
            spec.name()
        )));
    }
    check_square_root_bound(spec, b, direct, cfg)?;
    Ok(KloostermanB { direct, reduced })
}

/// The full unit sum `K_{B*} = sum over all units of psi(Tr_B(x))`, which
/// collapses to the exact integer `(-1)^{sum d_i} q^{(n-m)/2}`.
pub fn full_unit_sum(
    spec: &AlgebraSpec,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<(SumValue, i128)> {
    let closed = spec.sign_sum_d() as i128 * spec.q_pow(spec.half_nm())? as i128;
    cfg.check_cap(
        &format!("full unit sum enumeration of {}", spec.name()),
        spec.size(),
    )?;
    let total = spec.size() as u64;
    let direct = partitioned_complex_sum(total, cfg.partitions, |idx| {
        let x = spec.decode_element(idx);
        if !spec.is_invertible(&x) {
            return None;
        }
        let tr = spec.trace_of(&x).expect("conforming element");
        Some(psi.eval(tr))
    });
    if !direct.agrees(SumValue::from_real(closed as f64), cfg.tol) {
        return Err(Error::RouteDisagreement(format!(
            "K_{{B*}} on {}: direct {direct} vs closed {closed}",
            spec.name()
        )));
    }
    Ok((direct, closed))
}

// ---------------------------------------------------------------------------
// Product-trace Kloosterman sums
// ---------------------------------------------------------------------------

/// Result of a product-trace Kloosterman evaluation.
#[derive(Clone, Debug)]
pub struct ProductTraceSum {
    pub value: SumValue,
    pub regular: bool,
    /// Per-factor binomial-product bound.
    pub fine_bound: f64,
    /// `r^{sum d_i} q^{(r-1)n/2}`.
    pub coarse_bound: f64,
    /// For etale B, the per-factor twisted-Kloosterman factorization.
    pub etale_factorization: Option<SumValue>,
}

/// Fine (binomial-product, per-factor field size) and coarse
/// (`r^{sum d_i} q^{(r-1)n/2}`) bounds for the product-trace sum at a
/// regular element. The fine bound never exceeds the coarse one.
pub fn product_trace_bounds(spec: &AlgebraSpec, x: &AlgebraElement, r: u32) -> Result<(f64, f64)> {
    spec.check_shape(x)?;
    let q = spec.q();
    let mut fine = 1.0f64;
    for (i, part) in x.parts.iter().enumerate() {
        let (d, ni) = spec.factors()[i];
        let fac = crate::algebra::factor_charpoly(spec.factor_field(i), part)?;
        let mut binom_prod = 1.0f64;
        for &(_, mult) in &fac.factors {
            binom_prod *= binomial(mult as u64 + r as u64 - 1, mult as u64) as f64;
        }
        fine *= binom_prod * q_pow_half(q, ni * (r - 1) * d * d);
    }
    let coarse = (r as f64).powi(spec.sum_d() as i32) * q_pow_half(q, (r - 1) * spec.n());
    Ok((fine, coarse))
}

/// `K(B, r, x, psi) = sum of psi(Tr_B(g_1 + ... + g_r))` over unit
/// r-tuples with product x, via `(r-1)` free factors and
/// `g_r = (g_1 ... g_{r-1})^{-1} x`. For regular x the square-root bound
/// `r^{sum d_i} q^{(r-1)n/2}` is asserted; for etale B the per-factor
/// twisted-Kloosterman factorization is also computed and compared.
pub fn product_trace_k(
    query: &ProductTraceQuery<'_>,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<ProductTraceSum> {
    let spec = query.spec;
    let r = query.r;
    let x = &query.x;
    if r < 2 {
        return Err(Error::Parse("product-trace requires r >= 2".into()));
    }
    if !spec.is_invertible(x) {
        return Err(Error::NotInvertible);
    }
    let needed = spec
        .unit_count()
        .checked_pow(r - 1)
        .ok_or(Error::Overflow)?;
    cfg.check_cap(
        &format!("product-trace sweep of {} with r={r}", spec.name()),
        needed,
    )?;
    let units = spec.units(cfg.max_summands)?;
    let nu = units.len() as u64;
    let total = needed as u64;

    let value = partitioned_complex_sum(total, cfg.partitions, |idx| {
        let mut rem = idx;
        let mut sum = spec.zero_element();
        let mut prod = spec.identity();
        for _ in 0..r - 1 {
            let g = &units[(rem % nu) as usize];
            rem /= nu;
            sum = spec.add_elements(&sum, g);
            prod = spec.mul_elements(&prod, g);
        }
        let last = spec.mul_elements(&spec.invert_element(&prod).expect("product of units"), x);
        sum = spec.add_elements(&sum, &last);
        let tr = spec.trace_of(&sum).expect("conforming element");
        Some(psi.eval(tr))
    });

    let regular = is_regular(spec, x)?;
    let (fine_bound, coarse_bound) = product_trace_bounds(spec, x, r)?;
    if regular && value.magnitude() > coarse_bound + cfg.tol * (1.0 + value.magnitude()) {
        return Err(Error::BoundViolated(format!(
            "|K({}, r={r}, x)| = {} > {} at regular x = {}",
            spec.name(),
            value.magnitude(),
            coarse_bound,
            x.render()
        )));
    }

    let etale_factorization = if spec.is_etale() {
        let mut prod = SumValue::one();
        for (i, part) in x.parts.iter().enumerate() {
            let ext = spec.factor_field(i);
            let emb = spec.embedding(i);
            let psi_i = AdditiveCharacter::new(ext.clone(), emb.embed(psi.twist())?)?;
            let xi = ext.elt(part.entries[0])?;
            let ki = hyper_kloosterman(ext, r, xi, &psi_i, cfg)?;
            prod = prod * ki;
        }
        if !value.agrees(prod, cfg.tol) {
            return Err(Error::RouteDisagreement(format!(
                "etale product-trace factorization on {}: direct {value} vs factored {prod}",
                spec.name()
            )));
        }
        Some(prod)
    } else {
        None
    };

    Ok(ProductTraceSum {
        value,
        regular,
        fine_bound,
        coarse_bound,
        etale_factorization,
    })
}

// ---------------------------------------------------------------------------
// Polynomial-trace Kloosterman sums
// ---------------------------------------------------------------------------

/// Result of a polynomial-trace Kloosterman evaluation. Brute force only;
/// no closed form is known outside the etale case, where the toric
/// reference bound `n r^{n-1} q^{(n-1)/2}` is reported (not asserted).
#[derive(Clone, Debug)]
pub struct PolyTraceSum {
    pub value: SumValue,
    pub reference_bound: Option<f64>,
    pub warnings: Vec<String>,
}

/// `K_{B,f}(b) = sum over units with N_B(x) = b of psi(Tr_B(f(x)))`.
pub fn poly_trace_kloosterman(
    spec: &AlgebraSpec,
    f: &PolyF,
    b: FieldElement,
    psi: &AdditiveCharacter,
    cfg: &SumConfig,
) -> Result<PolyTraceSum> {
    if b.is_zero() {
        return Err(Error::NormTargetZero);
    }
    let mut warnings = Vec::new();
    match f.degree() {
        None | Some(0) => warnings.push("f has degree < 1; the estimates assume deg f >= 1".into()),
        Some(r) => {
            if (r as u64).is_multiple_of(spec.p()) {
                warnings.push(format!(
                    "p = {} divides deg f = {r}; the estimates assume gcd(deg f, p) = 1",
                    spec.p()
                ));
            }
        }
    }
    cfg.check_cap(
        &format!("polynomial-trace enumeration of {}", spec.name()),
        spec.size(),
    )?;
    let total = spec.size() as u64;
    let value = partitioned_complex_sum(total, cfg.partitions, |idx| {
        let x = spec.decode_element(idx);
        if !spec.is_invertible(&x) {
            return None;
        }
        let (_, nm) = spec.trace_norm(&x).expect("conforming element");
        if nm != b {
            return None;
        }
        let fx = spec.apply_poly(f, &x).expect("conforming element");
        let tr = spec.trace_of(&fx).expect("conforming element");
        Some(psi.eval(tr))
    });
    let reference_bound = if spec.is_etale() {
        f.degree().filter(|&r| r >= 1).map(|r| {
            spec.n() as f64
                * (r as f64).powi(spec.n() as i32 - 1)
                * q_pow_half(spec.q(), spec.n() - 1)
        })
    } else {
        None
    };
    Ok(PolyTraceSum {
        value,
        reference_bound,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::MatF;
    use crate::gf::construct_field;

    fn cfg() -> SumConfig {
        SumConfig::default()
    }

    fn std_psi(p: u64, k: u32) -> (Arc<FiniteField>, AdditiveCharacter) {
        let f = construct_field(p, k).unwrap();
        let psi = AdditiveCharacter::standard(f.clone());
        (f, psi)
    }

    #[test]
    fn gl_gauss_sum_examples() {
        // d=2, q=2, trivial chi: direct enumeration of the six invertible
        // matrices gives 2; closed form 2 * (-1)^2 = 2.
        let (f2, psi) = std_psi(2, 1);
        let chi = MultiplicativeCharacter::trivial(f2.clone());
        let (direct, closed) = gauss_sum_gl(&f2, 2, &chi, &psi, &cfg()).unwrap();
        assert!(direct.agrees(SumValue::from_real(2.0), 1e-9));
        assert!(closed.agrees(SumValue::from_real(2.0), 1e-9));

        // d=2, q=3, quadratic chi: both routes -9.
        let (f3, psi3) = std_psi(3, 1);
        let chi3 = MultiplicativeCharacter::new(f3.clone(), 1);
        let (direct, closed) = gauss_sum_gl(&f3, 2, &chi3, &psi3, &cfg()).unwrap();
        assert!(direct.agrees(SumValue::from_real(-9.0), 1e-9));
        assert!(closed.agrees(SumValue::from_real(-9.0), 1e-9));

        // d=1 collapses to the ordinary Gauss sum.
        let (direct, closed) = gauss_sum_gl(&f3, 1, &chi3, &psi3, &cfg()).unwrap();
        let g = gauss_sum(&chi3, &psi3).unwrap();
        assert!(direct.agrees(g, 1e-9));
        assert!(closed.agrees(g, 1e-12));
    }

    #[test]
    fn eichler_sweep_all_characters() {
        for (d, p, k) in [(2u32, 2u64, 1u32), (2, 3, 1), (2, 2, 2), (3, 2, 1)] {
            let (f, psi) = std_psi(p, k);
            for j in 0..f.q() - 1 {
                let chi = MultiplicativeCharacter::new(f.clone(), j);
                gauss_sum_gl(&f, d, &chi, &psi, &cfg()).unwrap();
            }
        }
    }

    #[test]
    fn s_m_examples() {
        let (f3, psi3) = std_psi(3, 1);
        let s = s_m(&f3, 2, f3.zero(), f3.one(), &psi3, &cfg()).unwrap();
        assert!(s.value.agrees(SumValue::from_real(-4.0), 1e-9));
        // T_m = S_m - (-1)^m (q-1) = -4 - 2 = -6.
        assert!(s.t_term.agrees(SumValue::from_real(-6.0), 1e-9));

        let (f2, psi2) = std_psi(2, 1);
        let s = s_m(&f2, 2, f2.one(), f2.one(), &psi2, &cfg()).unwrap();
        assert!(s.value.agrees(SumValue::from_real(-1.0), 1e-9));

        let s = s_m(&f2, 1, f2.zero(), f2.one(), &psi2, &cfg()).unwrap();
        assert!(s.value.agrees(SumValue::from_real(-1.0), 1e-9));

        assert!(matches!(
            s_m(&f2, 2, f2.zero(), f2.zero(), &psi2, &cfg()),
            Err(Error::NormTargetZero)
        ));
    }

    #[test]
    fn s_m_routes_agree_on_a_sweep() {
        for (p, k, m) in [
            (2u64, 1u32, 2u32),
            (3, 1, 2),
            (3, 1, 3),
            (5, 1, 2),
            (2, 2, 2),
            (7, 1, 4),
        ] {
            let (f, psi) = std_psi(p, k);
            for a in 0..f.q() {
                for b in 1..f.q() {
                    s_m(&f, m, f.elt(a).unwrap(), f.elt(b).unwrap(), &psi, &cfg()).unwrap();
                }
            }
        }
    }

    #[test]
    fn hyper_kloosterman_examples() {
        let (f2, psi2) = std_psi(2, 1);
        let k = hyper_kloosterman(&f2, 2, f2.one(), &psi2, &cfg()).unwrap();
        assert!(k.agrees(SumValue::one(), 1e-12));

        let (f3, psi3) = std_psi(3, 1);
        let k = hyper_kloosterman(&f3, 2, f3.one(), &psi3, &cfg()).unwrap();
        assert!(k.agrees(SumValue::from_real(-1.0), 1e-9));

        let b = f3.elt(2).unwrap();
        let k = hyper_kloosterman(&f3, 1, b, &psi3, &cfg()).unwrap();
        assert!(k.agrees(psi3.eval(b), 1e-12));
    }

    #[test]
    fn deligne_bound_small_sweep() {
        for (p, k) in [(2u64, 1u32), (3, 1), (2, 2), (5, 1), (7, 1)] {
            let (f, psi) = std_psi(p, k);
            for m in 2..=4u32 {
                for b in 1..f.q() {
                    // The op itself asserts the bound.
                    hyper_kloosterman(&f, m, f.elt(b).unwrap(), &psi, &cfg()).unwrap();
                }
            }
        }
    }

    #[test]
    fn kloosterman_b_examples() {
        // M_2(F_2), b=1: all six units have det 1; sum of psi(tr) = 4 - 2.
        let b_alg = AlgebraSpec::new(2, 1, vec![(2, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let one = b_alg.base().one();
        let kb = kloosterman_b(&b_alg, one, &psi, &cfg()).unwrap();
        assert!(kb.direct.agrees(SumValue::from_real(2.0), 1e-9));
        assert!(kb.reduced.agrees(SumValue::from_real(2.0), 1e-9));

        // Etale F_2 x F_2.
        let b_alg = AlgebraSpec::new(2, 1, vec![(1, 1), (1, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let kb = kloosterman_b(&b_alg, b_alg.base().one(), &psi, &cfg()).unwrap();
        assert!(kb.direct.agrees(SumValue::one(), 1e-9));

        // F_4 over q=2.
        let b_alg = AlgebraSpec::new(2, 1, vec![(1, 2)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let kb = kloosterman_b(&b_alg, b_alg.base().one(), &psi, &cfg()).unwrap();
        assert!(kb.direct.agrees(SumValue::from_real(-1.0), 1e-9));
        assert!(kb.reduced.agrees(SumValue::from_real(-1.0), 1e-9));
    }

    #[test]
    fn full_unit_sum_examples() {
        let b_alg = AlgebraSpec::new(2, 1, vec![(2, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let (direct, closed) = full_unit_sum(&b_alg, &psi, &cfg()).unwrap();
        assert_eq!(closed, 2);
        assert!(direct.agrees(SumValue::from_real(2.0), 1e-9));

        let b_alg = AlgebraSpec::new(2, 1, vec![(1, 1), (1, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let (_, closed) = full_unit_sum(&b_alg, &psi, &cfg()).unwrap();
        assert_eq!(closed, 1);

        // Degree-1 smoke test: B = F_q gives the trivial-character Gauss
        // sum -1.
        let b_alg = AlgebraSpec::new(5, 1, vec![(1, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let (direct, closed) = full_unit_sum(&b_alg, &psi, &cfg()).unwrap();
        assert_eq!(closed, -1);
        assert!(direct.agrees(SumValue::from_real(-1.0), 1e-9));
    }

    #[test]
    fn product_trace_examples() {
        // B = F_2, r = 2, x = 1: single term psi(1 + 1) = 1.
        let b_alg = AlgebraSpec::new(2, 1, vec![(1, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let q = ProductTraceQuery {
            spec: &b_alg,
            r: 2,
            x: b_alg.identity(),
        };
        let s = product_trace_k(&q, &psi, &cfg()).unwrap();
        assert!(s.value.agrees(SumValue::one(), 1e-12));
        assert!(s.regular);

        // B = F_3, r = 2, x = 1: psi(2) + psi(1) = -1.
        let b_alg = AlgebraSpec::new(3, 1, vec![(1, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let q = ProductTraceQuery {
            spec: &b_alg,
            r: 2,
            x: b_alg.identity(),
        };
        let s = product_trace_k(&q, &psi, &cfg()).unwrap();
        assert!(s.value.agrees(SumValue::from_real(-1.0), 1e-9));

        // B = F_4 over q=2, r = 2, x = 1: all three terms trace to 0.
        let b_alg = AlgebraSpec::new(2, 1, vec![(1, 2)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let q = ProductTraceQuery {
            spec: &b_alg,
            r: 2,
            x: b_alg.identity(),
        };
        let s = product_trace_k(&q, &psi, &cfg()).unwrap();
        assert!(s.value.agrees(SumValue::from_real(3.0), 1e-9));
        assert!(s.etale_factorization.is_some());

        // Non-invertible x is rejected.
        let q = ProductTraceQuery {
            spec: &b_alg,
            r: 2,
            x: b_alg.zero_element(),
        };
        assert!(matches!(
            product_trace_k(&q, &psi, &cfg()),
            Err(Error::NotInvertible)
        ));
    }

    #[test]
    fn product_trace_bound_shapes() {
        let b_alg = AlgebraSpec::new(3, 1, vec![(2, 1)]).unwrap();
        let r = 2u32;
        let diag = AlgebraElement {
            parts: vec![MatF::new(2, vec![1, 0, 0, 2])],
        };
        let (fine, coarse) = product_trace_bounds(&b_alg, &diag, r).unwrap();
        // Two distinct linear factors: binomial product C(r,1)^2 = r^2, so
        // fine = coarse here.
        assert!((fine - coarse).abs() < 1e-9);

        let scalar2 = AlgebraElement {
            parts: vec![MatF::new(2, vec![2, 0, 0, 2])],
        };
        let (fine, coarse) = product_trace_bounds(&b_alg, &scalar2, r).unwrap();
        // One factor with multiplicity 2: C(r+1,2) = 3 < r^2 = 4.
        assert!(fine < coarse);
        assert!((fine / q_pow_half(3, (r - 1) * 4) - 3.0).abs() < 1e-9);

        // Etale factor: fine = coarse.
        let b_alg = AlgebraSpec::new(2, 1, vec![(1, 2)]).unwrap();
        let x = b_alg.identity();
        let (fine, coarse) = product_trace_bounds(&b_alg, &x, 3).unwrap();
        assert!((fine - coarse).abs() < 1e-9);
    }

    #[test]
    fn poly_trace_examples() {
        // f(t) = t collapses to the Kloosterman sum over B.
        let b_alg = AlgebraSpec::new(2, 1, vec![(2, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let f = PolyF::new(vec![0, 1]);
        let one = b_alg.base().one();
        let s = poly_trace_kloosterman(&b_alg, &f, one, &psi, &cfg()).unwrap();
        let kb = kloosterman_b(&b_alg, one, &psi, &cfg()).unwrap();
        assert!(s.value.agrees(kb.direct, 1e-9));
        assert!(s.warnings.is_empty());

        // B = F_2 x F_2, f = t^3, b = 1: single term psi(1 + 1) = 1.
        let b_alg = AlgebraSpec::new(2, 1, vec![(1, 1), (1, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let f = PolyF::new(vec![0, 0, 0, 1]);
        let s = poly_trace_kloosterman(&b_alg, &f, b_alg.base().one(), &psi, &cfg()).unwrap();
        assert!(s.value.agrees(SumValue::one(), 1e-12));
        assert!(s.reference_bound.is_some());

        // B = F_3 smoke test, f = t^2, b = 2: single summand psi(2^2) = psi(1).
        let b_alg = AlgebraSpec::new(3, 1, vec![(1, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let f = PolyF::new(vec![0, 0, 1]);
        let b = b_alg.base().elt(2).unwrap();
        let s = poly_trace_kloosterman(&b_alg, &f, b, &psi, &cfg()).unwrap();
        let want = psi.eval(b_alg.base().one());
        assert!(s.value.agrees(want, 1e-12));
        assert!(s.warnings.is_empty());

        // p | deg f draws a warning, not an error.
        let f_bad = PolyF::new(vec![0, 0, 0, 1]);
        let s = poly_trace_kloosterman(&b_alg, &f_bad, b, &psi, &cfg()).unwrap();
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn partition_invariance() {
        let b_alg = AlgebraSpec::new(3, 1, vec![(2, 1)]).unwrap();
        let psi = AdditiveCharacter::standard(b_alg.base().clone());
        let one = b_alg.base().one();
        let mut values = Vec::new();
        for parts in [1u32, 2, 8] {
            let c = SumConfig::with_partitions(parts);
            values.push(kloosterman_b(&b_alg, one, &psi, &c).unwrap().direct);
        }
        for pair in values.windows(2) {
            assert!((pair[0] - pair[1]).magnitude() < 1e-9);
        }
    }

    #[test]
    fn partition_ranges_cover_exactly() {
        for total in [0u64, 1, 7, 16, 100] {
            for parts in [1u32, 2, 3, 8, 64] {
                let ranges = partition_ranges(total, parts);
                let mut expected_start = 0;
                for &(a, b) in &ranges {
                    assert_eq!(a, expected_start);
                    assert!(b >= a);
                    expected_start = b;
                }
                assert_eq!(expected_start, total);
            }
        }
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let terms: Vec<SumValue> = (0..1000)
            .map(|i| SumValue::root_of_unity(i % 7, 7))
            .collect();
        let naive = terms.iter().fold(SumValue::zero(), |acc, &v| acc + v);
        let mut pw = PairwiseSum::new();
        for &t in &terms {
            pw.push(t);
        }
        assert!((pw.finish() - naive).magnitude() < 1e-10);
    }

    #[test]
    fn cross_identity_kb_equals_count_weighted_psi() {
        // K_B(b) = sum over a of N_B(a,b) psi(a), with the counts tallied
        // here independently of the sums path.
        for b_alg in [
            AlgebraSpec::new(2, 1, vec![(2, 1)]).unwrap(),
            AlgebraSpec::new(2, 1, vec![(1, 1), (1, 2)]).unwrap(),
            AlgebraSpec::new(3, 1, vec![(1, 2)]).unwrap(),
        ] {
            let base = b_alg.base().clone();
            let psi = AdditiveCharacter::standard(base.clone());
            let q = base.q();
            let mut tally = vec![vec![0u64; q as usize]; q as usize];
            for x in b_alg.enumerate(true, 1 << 24).unwrap() {
                let (a, nm) = b_alg.trace_norm(&x).unwrap();
                tally[a.code() as usize][nm.code() as usize] += 1;
            }
            for b_code in 1..q {
                let b = base.elt(b_code).unwrap();
                let kb = kloosterman_b(&b_alg, b, &psi, &cfg()).unwrap();
                let mut expected = SumValue::zero();
                for a_code in 0..q {
                    let weight = tally[a_code as usize][b_code as usize] as f64;
                    expected = expected + psi.eval_code(a_code).scale(weight);
                }
                assert!(kb.direct.agrees(expected, 1e-9));
            }
        }
    }
}
