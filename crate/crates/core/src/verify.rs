//! Whole-domain verification sweeps: every computed quantity compared
//! against its theorem bound or exact identity, with structured reports.
//!
//! Failures never abort a sweep; they become `fail` records. A `fail`
//! status appears only when a proven theorem's bound or an exact identity
//! is violated. Conjecture checks can at most produce
//! `conjecture-violation` records, and the one formula printed with an
//! etale-only range of validity produces `known-paper-mismatch` records
//! on non-etale instances instead of failing the suite.
//!
//! Reports are deterministic: identical inputs yield identical bytes
//! (wall-clock duration is kept out of the emitted formats).

use std::time::{Duration, Instant};

use crate::algebra::AlgebraSpec;
use crate::chars::AdditiveCharacter;
use crate::counts::{
    a_nonzero_bound, a_zero_bound, brute_counts, count_norm_zero, field_main_term,
    field_plain_main_term, identity_suite, main_bound, main_term, norm_trace_formula,
    product_trace_counts, product_trace_record, simple_bound, simple_main_term, split_main_term,
    trace_units_closed, BruteCounts,
};
use crate::ratio::Ratio;
use crate::sums::{
    hyper_kloosterman, kloosterman_b, kloosterman_b_reduced, product_trace_k, q_pow_half,
    ProductTraceQuery, SumConfig,
};
use crate::{Error, Result};

/// Default deterministic sample size when a full x-sweep exceeds caps.
pub const DEFAULT_X_SAMPLE: usize = 256;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Status {
    Pass,
    Fail,
    ConjectureViolation,
    KnownPaperMismatch,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::ConjectureViolation => "conjecture-violation",
            Status::KnownPaperMismatch => "known-paper-mismatch",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One report row. Numeric columns are pre-rendered deterministically
/// (rationals exactly, floats in shortest round-trip form).
#[derive(Clone, Debug)]
pub struct ReportRecord {
    pub suite: String,
    pub spec: String,
    pub a: Option<u64>,
    pub b: Option<u64>,
    pub r: Option<u32>,
    pub value: String,
    pub main_term: String,
    pub error: String,
    pub bound: String,
    pub slack: String,
    pub status: Status,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Totals {
    pub pass: usize,
    pub fail: usize,
    pub conjecture_violation: usize,
    pub known_paper_mismatch: usize,
}

#[derive(Debug)]
pub struct VerificationReport {
    pub suite_name: String,
    pub spec_summary: String,
    pub notes: Vec<String>,
    pub records: Vec<ReportRecord>,
    pub totals: Totals,
    pub max_error_bound_ratio: Option<f64>,
    pub duration: Duration,
}

impl VerificationReport {
    fn new(suite_name: &str, spec_summary: String) -> VerificationReport {
        VerificationReport {
            suite_name: suite_name.to_string(),
            spec_summary,
            notes: Vec::new(),
            records: Vec::new(),
            totals: Totals::default(),
            max_error_bound_ratio: None,
            duration: Duration::ZERO,
        }
    }

    fn push(&mut self, rec: ReportRecord) {
        match rec.status {
            Status::Pass => self.totals.pass += 1,
            Status::Fail => self.totals.fail += 1,
            Status::ConjectureViolation => self.totals.conjecture_violation += 1,
            Status::KnownPaperMismatch => self.totals.known_paper_mismatch += 1,
        }
        self.records.push(rec);
    }

    fn track_ratio(&mut self, error: f64, bound: f64) {
        if bound > 0.0 {
            let ratio = error / bound;
            self.max_error_bound_ratio = Some(match self.max_error_bound_ratio {
                Some(prev) => prev.max(ratio),
                None => ratio,
            });
        } else if error == 0.0 && self.max_error_bound_ratio.is_none() {
            self.max_error_bound_ratio = Some(0.0);
        }
    }

    pub fn passed(&self) -> bool {
        self.totals.fail == 0
    }
}

struct RecordBuilder<'a> {
    suite: &'a str,
    spec: String,
    a: Option<u64>,
    b: Option<u64>,
    r: Option<u32>,
}

impl RecordBuilder<'_> {
    /// A bound check row: pass iff error <= bound.
    fn bound_check(
        &self,
        value: impl ToString,
        main: impl ToString,
        error: f64,
        bound: f64,
        error_text: String,
    ) -> ReportRecord {
        let status = if error <= bound {
            Status::Pass
        } else {
            Status::Fail
        };
        ReportRecord {
            suite: self.suite.to_string(),
            spec: self.spec.clone(),
            a: self.a,
            b: self.b,
            r: self.r,
            value: value.to_string(),
            main_term: main.to_string(),
            error: error_text,
            bound: format!("{bound}"),
            slack: format!("{}", bound - error),
            status,
        }
    }

    /// An exactness row: pass iff the residual is zero.
    fn exactness(
        &self,
        value: impl ToString,
        expected: impl ToString,
        residual: Ratio,
    ) -> ReportRecord {
        let status = if residual.is_zero() {
            Status::Pass
        } else {
            Status::Fail
        };
        ReportRecord {
            suite: self.suite.to_string(),
            spec: self.spec.clone(),
            a: self.a,
            b: self.b,
            r: self.r,
            value: value.to_string(),
            main_term: expected.to_string(),
            error: residual.to_string(),
            bound: "0".to_string(),
            slack: residual.neg().to_string(),
            status,
        }
    }

    fn with_status(
        &self,
        value: impl ToString,
        main: impl ToString,
        error: impl ToString,
        bound: impl ToString,
        slack: impl ToString,
        status: Status,
    ) -> ReportRecord {
        ReportRecord {
            suite: self.suite.to_string(),
            spec: self.spec.clone(),
            a: self.a,
            b: self.b,
            r: self.r,
            value: value.to_string(),
            main_term: main.to_string(),
            error: error.to_string(),
            bound: bound.to_string(),
            slack: slack.to_string(),
            status,
        }
    }
}

fn rb<'a>(
    suite: &'a str,
    spec: &AlgebraSpec,
    a: Option<u64>,
    b: Option<u64>,
    r: Option<u32>,
) -> RecordBuilder<'a> {
    RecordBuilder {
        suite,
        spec: spec.name(),
        a,
        b,
        r,
    }
}

/// Bound check against an exact rational error (ratio tracked by caller).
fn push_rational_bound(
    report: &mut VerificationReport,
    builder: RecordBuilder<'_>,
    value: impl ToString,
    main: &Ratio,
    error: &Ratio,
    bound: f64,
) {
    let e = error.to_f64();
    report.track_ratio(e, bound);
    report.push(builder.bound_check(value, main, e, bound, error.to_string()));
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Sweep all `a` and `b != 0`: the formula-vs-brute exactness of
/// `N_B(a,b)`, the square-root bounds (main, simple, elementary), the
/// norm-trace reduction identity, the exact trace-fiber and norm-zero
/// closed forms, and the special-case estimates where the algebra shape
/// admits them.
pub fn verify_norm_trace(spec: &AlgebraSpec, cfg: &SumConfig) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = VerificationReport::new("norm-trace", spec.name());
    let psi = AdditiveCharacter::standard(spec.base().clone());
    let tally = brute_counts(spec, cfg)?;
    let q = spec.q();

    let main = main_term(spec)?;
    let simple_main = simple_main_term(spec)?;
    let is_field = spec.k() == 1 && spec.factors()[0].0 == 1 && spec.factors()[0].1 >= 2;
    let is_split = spec.factors().iter().all(|&(d, ni)| d == 1 && ni == 1);

    for a_code in 0..q {
        let a = spec.base().elt(a_code)?;
        for b_code in 1..q {
            let b = spec.base().elt(b_code)?;
            let brute = tally.norm_trace(a_code, b_code) as i128;

            // Exact agreement between the brute count and the
            // character-sum formula.
            let builder = rb(
                "norm-trace/formula-vs-brute",
                spec,
                Some(a_code),
                Some(b_code),
                None,
            );
            match norm_trace_formula(spec, a, b, &psi, cfg) {
                Ok(formula) => {
                    report.push(builder.exactness(
                        brute,
                        formula,
                        Ratio::from_int(brute - formula),
                    ));
                }
                Err(err) => {
                    report.push(builder.with_status(
                        brute,
                        format!("formula error: {err}"),
                        "",
                        "0",
                        "",
                        Status::Fail,
                    ));
                }
            }

            let err_main = Ratio::from_int(brute).sub(main).abs();
            push_rational_bound(
                &mut report,
                rb(
                    "norm-trace/main-bound",
                    spec,
                    Some(a_code),
                    Some(b_code),
                    None,
                ),
                brute,
                &main,
                &err_main,
                main_bound(spec),
            );

            let err_simple = Ratio::from_int(brute).sub(simple_main).abs();
            push_rational_bound(
                &mut report,
                rb(
                    "norm-trace/simple-bound",
                    spec,
                    Some(a_code),
                    Some(b_code),
                    None,
                ),
                brute,
                &simple_main,
                &err_simple,
                simple_bound(spec),
            );

            if a_code == 0 {
                push_rational_bound(
                    &mut report,
                    rb(
                        "norm-trace/elementary-a0",
                        spec,
                        Some(a_code),
                        Some(b_code),
                        None,
                    ),
                    brute,
                    &main,
                    &err_main,
                    a_zero_bound(spec),
                );
            } else {
                push_rational_bound(
                    &mut report,
                    rb(
                        "norm-trace/elementary-a-nonzero",
                        spec,
                        Some(a_code),
                        Some(b_code),
                        None,
                    ),
                    brute,
                    &simple_main,
                    &err_simple,
                    a_nonzero_bound(spec),
                );
            }

            // Shape-specific published estimates.
            if is_field {
                let n = spec.factors()[0].1;
                let plain = field_plain_main_term(q, n);
                let err = Ratio::from_int(brute).sub(plain).abs();
                push_rational_bound(
                    &mut report,
                    rb(
                        "norm-trace/field-plain-estimate",
                        spec,
                        Some(a_code),
                        Some(b_code),
                        None,
                    ),
                    brute,
                    &plain,
                    &err,
                    n as f64 * q_pow_half(q, n - 2),
                );
                let improved = field_main_term(q, n);
                let err = Ratio::from_int(brute).sub(improved).abs();
                push_rational_bound(
                    &mut report,
                    rb(
                        "norm-trace/field-improved-estimate",
                        spec,
                        Some(a_code),
                        Some(b_code),
                        None,
                    ),
                    brute,
                    &improved,
                    &err,
                    (n as f64 - 1.0) * q_pow_half(q, n - 2),
                );
            }
            if is_split {
                let n = spec.n();
                let split = split_main_term(q, n);
                let err = Ratio::from_int(brute).sub(split).abs();
                push_rational_bound(
                    &mut report,
                    rb(
                        "norm-trace/split-estimate",
                        spec,
                        Some(a_code),
                        Some(b_code),
                        None,
                    ),
                    brute,
                    &split,
                    &err,
                    (n as f64 - 1.0) * q_pow_half(q, n - 2),
                );
            }
        }

        // Exact per-a closed forms.
        push_trace_unit_records(&mut report, spec, &tally, a_code)?;
        push_norm_zero_records(&mut report, spec, &tally, a_code)?;
    }

    // Reduction identities, both sides brute.
    for res in identity_suite(spec, cfg)? {
        let builder = RecordBuilder {
            suite: "norm-trace/identity",
            spec: format!("{} [{}]", spec.name(), res.identity),
            a: res.a,
            b: res.b,
            r: None,
        };
        let lhs = res
            .lhs
            .map(|v| v.to_string())
            .unwrap_or_else(|| "-".to_string());
        let rhs = res
            .rhs
            .map(|v| v.to_string())
            .unwrap_or_else(|| "-".to_string());
        report.push(builder.exactness(lhs, rhs, res.residual));
    }

    report.duration = start.elapsed();
    Ok(report)
}

fn push_trace_unit_records(
    report: &mut VerificationReport,
    spec: &AlgebraSpec,
    tally: &BruteCounts,
    a_code: u64,
) -> Result<()> {
    let brute = tally.trace_units(a_code) as i128;
    let closed = trace_units_closed(spec, a_code)? as i128;
    report.push(
        rb("trace-units/closed-form", spec, Some(a_code), None, None).exactness(
            brute,
            closed,
            Ratio::from_int(brute - closed),
        ),
    );
    Ok(())
}

fn push_norm_zero_records(
    report: &mut VerificationReport,
    spec: &AlgebraSpec,
    tally: &BruteCounts,
    a_code: u64,
) -> Result<()> {
    let a = spec.base().elt(a_code)?;
    // count_norm_zero hard-errors only on real contract violations
    // (general closed form or the etale-only printed formula on an
    // etale instance); surface those as fail records.
    match count_norm_zero(spec, tally, a) {
        Ok(rec) => {
            report.push(
                rb("norm-zero/general-form", spec, Some(a_code), Some(0), None).exactness(
                    rec.brute as i128,
                    rec.general_closed as i128,
                    Ratio::from_int(rec.brute as i128 - rec.general_closed as i128),
                ),
            );
            let builder = rb(
                "norm-zero/inclusion-exclusion",
                spec,
                Some(a_code),
                Some(0),
                None,
            );
            let status = if rec.printed_matches {
                Status::Pass
            } else {
                Status::KnownPaperMismatch
            };
            report.push(builder.with_status(
                rec.brute,
                rec.printed,
                Ratio::from_int(rec.brute as i128 - rec.printed),
                if rec.etale { "0" } else { "-" },
                "-",
                status,
            ));
        }
        Err(err) => {
            report.push(
                rb("norm-zero/general-form", spec, Some(a_code), Some(0), None).with_status(
                    format!("error: {err}"),
                    "-",
                    "-",
                    "0",
                    "-",
                    Status::Fail,
                ),
            );
        }
    }
    Ok(())
}

/// For all `b != 0`: direct-vs-reduced agreement of `K_B(b)`, the
/// square-root bound, and Deligne's bound on the hyper-Kloosterman
/// factor. Falls back to the reduced route alone when the direct
/// enumeration exceeds caps.
pub fn verify_kloosterman(spec: &AlgebraSpec, cfg: &SumConfig) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = VerificationReport::new("kloosterman", spec.name());
    let psi = AdditiveCharacter::standard(spec.base().clone());
    let q = spec.q();
    let bound = spec.m() as f64 * q_pow_half(q, spec.n() - 1);

    let direct_feasible = spec.size() <= cfg.max_summands as u128;
    if !direct_feasible {
        report
            .notes
            .push("direct route skipped: enumeration exceeds cap; reduced route only".into());
    }

    for b_code in 1..q {
        let b = spec.base().elt(b_code)?;

        let value = if direct_feasible {
            match kloosterman_b(spec, b, &psi, cfg) {
                Ok(kb) => {
                    let residual = (kb.direct - kb.reduced).magnitude();
                    let tol = cfg.tol * (1.0 + kb.direct.magnitude().max(kb.reduced.magnitude()));
                    report.push(
                        rb("kloosterman/reduction", spec, None, Some(b_code), None).bound_check(
                            kb.direct.display_clean(),
                            kb.reduced.display_clean(),
                            residual,
                            tol,
                            format!("{residual}"),
                        ),
                    );
                    Some(kb.direct)
                }
                Err(err) => {
                    report.push(
                        rb("kloosterman/reduction", spec, None, Some(b_code), None).with_status(
                            format!("error: {err}"),
                            "-",
                            "-",
                            "-",
                            "-",
                            Status::Fail,
                        ),
                    );
                    None
                }
            }
        } else {
            match kloosterman_b_reduced(spec, b, &psi, cfg) {
                Ok(v) => Some(v),
                Err(err) => {
                    report.push(
                        rb("kloosterman/reduced-route", spec, None, Some(b_code), None)
                            .with_status(format!("error: {err}"), "-", "-", "-", "-", Status::Fail),
                    );
                    None
                }
            }
        };

        if let Some(v) = value {
            let mag = v.magnitude();
            report.track_ratio(mag, bound);
            report.push(
                rb(
                    "kloosterman/square-root-bound",
                    spec,
                    None,
                    Some(b_code),
                    None,
                )
                .bound_check(v.display_clean(), "0", mag, bound, format!("{mag}")),
            );
        }

        // Deligne bound on the reduced hyper-Kloosterman factor.
        match hyper_kloosterman(spec.base(), spec.m(), b, &psi, cfg) {
            Ok(k) => {
                let mag = k.magnitude();
                let dbound = spec.m() as f64 * q_pow_half(q, spec.m() - 1);
                report.push(
                    rb("kloosterman/deligne-factor", spec, None, Some(b_code), None).bound_check(
                        k.display_clean(),
                        "0",
                        mag,
                        dbound,
                        format!("{mag}"),
                    ),
                );
            }
            Err(err) => {
                report.push(
                    rb("kloosterman/deligne-factor", spec, None, Some(b_code), None).with_status(
                        format!("error: {err}"),
                        "-",
                        "-",
                        "-",
                        "-",
                        Status::Fail,
                    ),
                );
            }
        }
    }

    report.duration = start.elapsed();
    Ok(report)
}

/// Sweep every unit x (or the first [`DEFAULT_X_SAMPLE`] in enumeration
/// order when the full sweep exceeds caps): regularity classification,
/// the square-root bound on `K(B,r,x,psi)` for regular x (observational
/// for the rest), the etale factorization, the conjectured count margins
/// for `a != 0`, and the exact tuple-count partition.
pub fn verify_product_trace(
    spec: &AlgebraSpec,
    r: u32,
    cfg: &SumConfig,
) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = VerificationReport::new("product-trace", spec.name());
    let psi = AdditiveCharacter::standard(spec.base().clone());

    let per_x = spec
        .unit_count()
        .checked_pow(r - 1)
        .ok_or(Error::Overflow)?;
    if per_x > cfg.max_summands as u128 {
        return Err(Error::CapExceeded {
            what: format!("product-trace sweep of {} with r={r}", spec.name()),
            needed: per_x,
            cap: cfg.max_summands,
        });
    }
    let full_sweep = per_x.saturating_mul(spec.unit_count()) <= cfg.max_summands as u128;
    let units = spec.units(cfg.max_summands)?;
    let sample: Vec<_> = if full_sweep {
        units.iter().collect()
    } else {
        report.notes.push(format!(
            "full x-sweep exceeds cap; deterministic sample of first {DEFAULT_X_SAMPLE} units"
        ));
        units.iter().take(DEFAULT_X_SAMPLE).collect()
    };

    let tuples = i128::try_from(per_x).map_err(|_| Error::Overflow)?;
    for x in sample {
        let query = ProductTraceQuery {
            spec,
            r,
            x: x.clone(),
        };
        let x_tag = format!("{} x={}", spec.name(), x.render());

        match product_trace_k(&query, &psi, cfg) {
            Ok(s) => {
                let mag = s.value.magnitude();
                let suite = if s.regular {
                    "product-trace/square-root-bound"
                } else {
                    "product-trace/observational"
                };
                let builder = RecordBuilder {
                    suite,
                    spec: x_tag.clone(),
                    a: None,
                    b: None,
                    r: Some(r),
                };
                if s.regular {
                    report.track_ratio(mag, s.coarse_bound);
                    report.push(builder.bound_check(
                        s.value.display_clean(),
                        "0",
                        mag,
                        s.coarse_bound,
                        format!("{mag}"),
                    ));
                    report.push(
                        RecordBuilder {
                            suite: "product-trace/fine-bound",
                            spec: x_tag.clone(),
                            a: None,
                            b: None,
                            r: Some(r),
                        }
                        .bound_check(
                            s.value.display_clean(),
                            "0",
                            mag,
                            s.fine_bound,
                            format!("{mag}"),
                        ),
                    );
                } else {
                    report.push(builder.with_status(
                        s.value.display_clean(),
                        "0",
                        format!("{mag}"),
                        "-",
                        "-",
                        Status::Pass,
                    ));
                }
                if let Some(factored) = s.etale_factorization {
                    let residual = (s.value - factored).magnitude();
                    let tol = cfg.tol * (1.0 + mag.max(factored.magnitude()));
                    report.push(
                        RecordBuilder {
                            suite: "product-trace/etale-factorization",
                            spec: x_tag.clone(),
                            a: None,
                            b: None,
                            r: Some(r),
                        }
                        .bound_check(
                            s.value.display_clean(),
                            factored.display_clean(),
                            residual,
                            tol,
                            format!("{residual}"),
                        ),
                    );
                }
            }
            Err(err) => {
                report.push(
                    RecordBuilder {
                        suite: "product-trace/square-root-bound",
                        spec: x_tag.clone(),
                        a: None,
                        b: None,
                        r: Some(r),
                    }
                    .with_status(
                        format!("error: {err}"),
                        "-",
                        "-",
                        "-",
                        "-",
                        Status::Fail,
                    ),
                );
                continue;
            }
        }

        // Conjectured count margins.
        let counts = product_trace_counts(&query, cfg)?;
        let regular = crate::algebra::is_regular(spec, x)?;
        let total: i128 = counts.iter().map(|&c| c as i128).sum();
        report.push(
            RecordBuilder {
                suite: "product-trace/tuple-partition",
                spec: x_tag.clone(),
                a: None,
                b: None,
                r: Some(r),
            }
            .exactness(total, tuples, Ratio::from_int(total - tuples)),
        );
        for (a_code, &count) in counts.iter().enumerate() {
            let rec = product_trace_record(&query, a_code as u64, count)?;
            let suite = if a_code == 0 {
                "product-trace/conjecture-excluded-a0"
            } else if regular {
                "product-trace/conjecture-margin"
            } else {
                "product-trace/conjecture-margin-nonregular"
            };
            let builder = RecordBuilder {
                suite,
                spec: x_tag.clone(),
                a: Some(a_code as u64),
                b: None,
                r: Some(r),
            };
            let err = rec.error.to_f64();
            // Conjecture checks never hard-fail; violations are
            // first-class report items.
            let status = if a_code == 0 || !regular || err <= rec.bound {
                Status::Pass
            } else {
                Status::ConjectureViolation
            };
            report.push(builder.with_status(
                count,
                rec.main_term,
                rec.error,
                format!("{}", rec.bound),
                format!("{}", rec.bound - err),
                status,
            ));
        }
    }

    report.duration = start.elapsed();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReportFormat {
    Csv,
    Table,
    Structured,
}

const CSV_HEADER: &str = "suite,spec,a,b,r,value,main_term,error,bound,slack,status";

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Serialize a report. CSV holds one record per row under a fixed header;
/// the structured form mirrors every report field except the wall-clock
/// duration, which would break byte-stability.
pub fn emit_report(report: &VerificationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for rec in &report.records {
                let row = [
                    csv_escape(&rec.suite),
                    csv_escape(&rec.spec),
                    opt_str(&rec.a),
                    opt_str(&rec.b),
                    opt_str(&rec.r),
                    csv_escape(&rec.value),
                    csv_escape(&rec.main_term),
                    csv_escape(&rec.error),
                    csv_escape(&rec.bound),
                    csv_escape(&rec.slack),
                    rec.status.to_string(),
                ];
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Table => {
            let mut out = format!(
                "suite: {}  spec: {}\n",
                report.suite_name, report.spec_summary
            );
            for note in &report.notes {
                out.push_str(&format!("note: {note}\n"));
            }
            out.push_str(&format!(
                "{:<42} {:>4} {:>4} {:>3} {:>16} {:>16} {:>12} {:>12} {:>12} {}\n",
                "check", "a", "b", "r", "value", "main", "error", "bound", "slack", "status"
            ));
            for rec in &report.records {
                out.push_str(&format!(
                    "{:<42} {:>4} {:>4} {:>3} {:>16} {:>16} {:>12} {:>12} {:>12} {}\n",
                    rec.suite,
                    opt_str(&rec.a),
                    opt_str(&rec.b),
                    opt_str(&rec.r),
                    truncate(&rec.value, 16),
                    truncate(&rec.main_term, 16),
                    truncate(&rec.error, 12),
                    truncate(&rec.bound, 12),
                    truncate(&rec.slack, 12),
                    rec.status,
                ));
            }
            out.push_str(&format!(
                "totals: pass={} fail={} conjecture-violation={} known-paper-mismatch={}",
                report.totals.pass,
                report.totals.fail,
                report.totals.conjecture_violation,
                report.totals.known_paper_mismatch
            ));
            if let Some(ratio) = report.max_error_bound_ratio {
                out.push_str(&format!("  max-error/bound={ratio}"));
            }
            out.push('\n');
            out
        }
        ReportFormat::Structured => {
            let mut out = String::from("{\n");
            out.push_str(&format!(
                "  \"suite_name\": {},\n",
                json_string(&report.suite_name)
            ));
            out.push_str(&format!(
                "  \"spec\": {},\n",
                json_string(&report.spec_summary)
            ));
            out.push_str("  \"notes\": [");
            for (i, note) in report.notes.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&json_string(note));
            }
            out.push_str("],\n");
            match report.max_error_bound_ratio {
                Some(ratio) => out.push_str(&format!("  \"max_error_bound_ratio\": {ratio},\n")),
                None => out.push_str("  \"max_error_bound_ratio\": null,\n"),
            }
            out.push_str(&format!(
                "  \"totals\": {{\"pass\": {}, \"fail\": {}, \"conjecture_violation\": {}, \"known_paper_mismatch\": {}}},\n",
                report.totals.pass,
                report.totals.fail,
                report.totals.conjecture_violation,
                report.totals.known_paper_mismatch
            ));
            out.push_str("  \"records\": [\n");
            for (i, rec) in report.records.iter().enumerate() {
                out.push_str("    {");
                out.push_str(&format!("\"suite\": {}, ", json_string(&rec.suite)));
                out.push_str(&format!("\"spec\": {}, ", json_string(&rec.spec)));
                out.push_str(&format!("\"a\": {}, ", json_opt(&rec.a)));
                out.push_str(&format!("\"b\": {}, ", json_opt(&rec.b)));
                out.push_str(&format!("\"r\": {}, ", json_opt(&rec.r)));
                out.push_str(&format!("\"value\": {}, ", json_string(&rec.value)));
                out.push_str(&format!("\"main_term\": {}, ", json_string(&rec.main_term)));
                out.push_str(&format!("\"error\": {}, ", json_string(&rec.error)));
                out.push_str(&format!("\"bound\": {}, ", json_string(&rec.bound)));
                out.push_str(&format!("\"slack\": {}, ", json_string(&rec.slack)));
                out.push_str(&format!("\"status\": {}", json_string(rec.status.as_str())));
                out.push('}');
                if i + 1 < report.records.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str("  ]\n}\n");
            out
        }
    }
}

fn truncate(s: &str, width: usize) -> String {
    if s.len() <= width {
        s.to_string()
    } else {
        format!("{}..", &s[..width.saturating_sub(2)])
    }
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn json_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref()
        .map(|x| x.to_string())
        .unwrap_or_else(|| "null".to_string())
}
