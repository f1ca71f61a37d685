//! A-posteriori accuracy tests on solved coefficient tables: stability under
//! a change of horocycle height, scaled non-holomorphic ratios, nearest
//! integer proximity, automorphy residuals, and the cross-report against
//! imported L-value records.
//!
//! Every check is a pure function of stored tables plus parameters, so
//! reports can be regenerated offline from persisted data.

use crate::bigarith::{complex_abs, complex_abs_sq, BigComplex, BigReal, PrecisionContext};
use crate::error::{Error, Result};
use crate::fundom::automorphy_j2k;
use crate::maassform::{delta_to_index, CoefficientTable};
use crate::solver::{solve_phase1, SolveJob};
use crate::weilrep::WeilRep;
use rug::ops::Pow;
use rug::{Float, Integer};
use std::path::Path;

/// An imported central L-value or L-derivative record; never computed here.
#[derive(Debug, Clone)]
pub struct LValueRecord {
    pub delta: i64,
    pub value: String,
    pub source: String,
}

impl LValueRecord {
    pub fn value_f64(&self) -> f64 {
        self.value.trim().parse().unwrap_or(f64::NAN)
    }
}

/// Loads records from a CSV file with header `Delta,value,source`.
pub fn load_lvalues_csv(path: &Path) -> Result<Vec<LValueRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingData(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 && line.to_ascii_lowercase().starts_with("delta,") {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let delta = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::invalid(format!("bad Delta on line {}", i + 1)))?;
        let value = parts
            .next()
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::invalid(format!("missing value on line {}", i + 1)))?;
        let source = parts.next().map(|s| s.trim().to_string()).unwrap_or_default();
        out.push(LValueRecord {
            delta,
            value,
            source,
        });
    }
    Ok(out)
}

/// One line of a check report.
#[derive(Debug, Clone)]
pub struct CheckItem {
    pub label: String,
    pub measured: String,
    pub pass: bool,
}

/// Outcome of one a-posteriori check, reproducible from the stored table and
/// the listed parameters alone.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub threshold: String,
    pub items: Vec<CheckItem>,
    /// Worst measured discrepancy, where the check has a single scalar one.
    pub worst: Option<BigReal>,
}

impl CheckReport {
    fn finish(name: &str, threshold: String, items: Vec<CheckItem>, worst: Option<BigReal>) -> Self {
        CheckReport {
            name: name.to_string(),
            passed: items.iter().all(|i| i.pass),
            threshold,
            items,
            worst,
        }
    }
}

/// Solves the job at two heights and compares the common coefficients in the
/// sup norm; passes when the discrepancy stays below `threshold`
/// (default `10^(-digits/2)`).
///
/// Each run sizes its own truncation from its height, so the comparison runs
/// over the intersection of the index sets.  A table already solved at `y1`
/// can be passed to avoid re-solving it.
pub fn y_independence(
    job: &SolveJob,
    y1: &BigReal,
    y2: &BigReal,
    reuse_y1: Option<&CoefficientTable>,
    threshold: Option<BigReal>,
) -> Result<CheckReport> {
    let ctx = &job.ctx;
    let threshold = threshold
        .unwrap_or_else(|| Float::with_val(ctx.bits(), 10).pow(-(ctx.digits() as i32) / 2));
    let solve_at = |y: &BigReal| -> Result<CoefficientTable> {
        let j = SolveJob {
            y: y.clone(),
            m0: job.m0,
            q: 0,
            ..job.clone()
        };
        Ok(solve_phase1(&j)?.0)
    };
    let t1 = match reuse_y1 {
        Some(t) => t.clone(),
        None => solve_at(y1)?,
    };
    let t2 = solve_at(y2)?;

    let mut worst = ctx.real_zero();
    let mut worst_key = (0i64, 0u32);
    let mut compared = 0usize;
    for (key, e1) in t1.entries() {
        if let Some(e2) = t2.entries().get(key) {
            compared += 1;
            let d = complex_abs(&(e1.value.clone() - &e2.value));
            if d > worst {
                worst = d;
                worst_key = *key;
            }
        }
    }
    if compared == 0 {
        return Err(Error::MissingData(
            "y-independence: no common indices to compare".to_string(),
        ));
    }
    let pass = worst <= threshold;
    let items = vec![CheckItem {
        label: format!(
            "sup|D({}) - D({})| over {compared} common indices, worst at (n, h) = {:?}",
            y1.to_f64(),
            y2.to_f64(),
            worst_key
        ),
        measured: format!("{:.3e}", worst.to_f64()),
        pass,
    }];
    Ok(CheckReport::finish(
        "y_independence",
        format!("{:.3e}", threshold.to_f64()),
        items,
        Some(worst),
    ))
}

/// Scaled ratios `sqrt|Delta| c^-(Delta) / (sqrt|Delta0| c^-(Delta0))` for
/// canonically labeled non-holomorphic entries, with nearest-integer
/// distances.
pub fn cminus_ratio_values(
    table: &CoefficientTable,
    normalizer: (i64, u32),
    deltas: &[i64],
    ctx: &PrecisionContext,
) -> Result<Vec<(i64, BigComplex, BigReal)>> {
    let (n0, h0) = normalizer;
    let e0 = table
        .get(n0, h0)
        .ok_or_else(|| Error::MissingData(format!("normalizer ({n0}, {h0}) not in table")))?;
    if complex_abs(&e0.value).is_zero() {
        return Err(Error::invalid("normalizer coefficient is zero".to_string()));
    }
    let scale0 = ctx.real_from_i64(crate::maassform::index_to_delta(table.params(), n0).abs());
    let denom = e0.value.clone() * scale0.sqrt();

    // an empty request means every canonically labeled stored c^- entry
    let all_deltas: Vec<i64>;
    let deltas = if deltas.is_empty() {
        all_deltas = table
            .entries()
            .keys()
            .filter(|&&(n, _)| n < 0)
            .filter_map(|&(n, h)| {
                let delta = crate::maassform::index_to_delta(table.params(), n);
                match delta_to_index(table.params(), delta) {
                    Ok(idx) if idx == (n, h) => Some(delta),
                    _ => None,
                }
            })
            .collect();
        &all_deltas[..]
    } else {
        deltas
    };

    let mut out = Vec::new();
    for &delta in deltas {
        let (n, h) = delta_to_index(table.params(), delta)?;
        if n >= 0 {
            return Err(Error::invalid(format!(
                "Delta = {delta} labels a holomorphic coefficient, not c^-"
            )));
        }
        let e = table
            .get(n, h)
            .ok_or_else(|| Error::MissingData(format!("no entry at Delta = {delta}")))?;
        let ratio = e.value.clone() * ctx.real_from_i64(delta.abs()).sqrt() / &denom;
        let (_, dist) = nearest_integer(ratio.real(), ctx);
        out.push((delta, ratio, dist));
    }
    Ok(out)
}

/// Report wrapper around [`cminus_ratio_values`] with an integrality
/// threshold on every ratio.
pub fn cminus_ratio_report(
    table: &CoefficientTable,
    normalizer: (i64, u32),
    deltas: &[i64],
    tol: &BigReal,
    ctx: &PrecisionContext,
) -> Result<CheckReport> {
    let values = cminus_ratio_values(table, normalizer, deltas, ctx)?;
    let items = values
        .iter()
        .map(|(delta, ratio, dist)| CheckItem {
            label: format!("Delta = {delta}"),
            measured: format!(
                "{:+.12} (distance to integer {:.3e})",
                ratio.real().to_f64(),
                dist.to_f64()
            ),
            pass: *dist <= *tol && ratio.imag().clone().abs() <= tol.clone(),
        })
        .collect();
    Ok(CheckReport::finish(
        "cminus_ratios",
        format!("{:.3e}", tol.to_f64()),
        items,
        None,
    ))
}

/// Nearest integer under round-half-even, with the distance.
pub fn nearest_integer(x: &BigReal, _ctx: &PrecisionContext) -> (Integer, BigReal) {
    let rounded = x.clone().round_even();
    let dist = (x.clone() - &rounded).abs();
    let int = rounded.to_integer().unwrap_or_default();
    (int, dist)
}

/// Typed result of one integer-proximity lookup.
#[derive(Debug, Clone)]
pub struct ProximityItem {
    pub index: (i64, u32),
    pub nearest: Integer,
    pub distance: BigReal,
    /// Set when distance < min(err_bound, 10^(-digits/3)).
    pub algebraic_candidate: bool,
}

/// For each requested index, the nearest integer to the real part, the
/// distance, and the algebraic-candidate flag.  Half-integer ties round to
/// even and never flag.
pub fn integer_proximity(
    table: &CoefficientTable,
    indices: &[(i64, u32)],
    ctx: &PrecisionContext,
) -> Result<Vec<ProximityItem>> {
    let digit_cap = Float::with_val(ctx.bits(), 10).pow(-((ctx.digits() / 3) as i32));
    let mut out = Vec::new();
    for &(n, h) in indices {
        let entry = table
            .get(n, h)
            .ok_or_else(|| Error::MissingData(format!("no entry at ({n}, {h})")))?;
        let (nearest, dist) = nearest_integer(entry.value.real(), ctx);
        let cap = if entry.err_bound < digit_cap {
            entry.err_bound.clone()
        } else {
            digit_cap.clone()
        };
        let tie = dist == Float::with_val(ctx.bits(), 0.5);
        let flagged = !tie && dist < cap;
        out.push(ProximityItem {
            index: (n, h),
            nearest,
            distance: dist,
            algebraic_candidate: flagged,
        });
    }
    Ok(out)
}

pub fn integer_proximity_report(
    table: &CoefficientTable,
    indices: &[(i64, u32)],
    ctx: &PrecisionContext,
) -> Result<CheckReport> {
    let items = integer_proximity(table, indices, ctx)?
        .into_iter()
        .map(|p| CheckItem {
            label: format!("(n, h) = {:?}", p.index),
            measured: format!(
                "nearest {} at distance {:.3e}{}",
                p.nearest,
                p.distance.to_f64(),
                if p.algebraic_candidate {
                    ", algebraic candidate"
                } else {
                    ""
                }
            ),
            pass: true,
        })
        .collect();
    Ok(CheckReport::finish(
        "integer_proximity",
        format!("min(err_bound, 1e-{})", ctx.digits() / 3),
        items,
        None,
    ))
}

/// Squared automorphy residual `|| f^(A tau) - phi^{2k} rho(A) f^(tau) ||^2`
/// per sample; passes iff every residual stays below `2 eps Y^{-2k}` for the
/// eps and Y of the run.  Samples must keep both tau and A tau at height >= Y.
pub fn automorphy_residual(
    table: &CoefficientTable,
    samples: &[(BigComplex, [i128; 4])],
    ctx: &PrecisionContext,
) -> Result<CheckReport> {
    let params = table.params();
    let rep = WeilRep::new(params.n_level(), *ctx);
    let y_run = table.meta().y.clone();
    let bound = Float::with_val(ctx.bits(), &table.meta().eps) * 2u32
        * Float::with_val(ctx.bits(), &y_run).pow(-params.weight().twice());

    let mut items = Vec::new();
    let mut worst = ctx.real_zero();
    for (i, (tau, mat)) in samples.iter().enumerate() {
        let elt = crate::weilrep::canonical_lift(*mat)?;
        let a_tau = elt.act(tau);
        if tau.imag().clone() < y_run || a_tau.imag().clone() < y_run {
            return Err(Error::invalid(format!(
                "sample {i}: both tau and A tau must have height >= Y = {}",
                y_run.to_f64()
            )));
        }
        let lhs = table.evaluate_truncated(&a_tau, ctx)?;
        let f_tau = table.evaluate_truncated(tau, ctx)?;
        let mut rhs = rep.apply(&elt, params.conjugated(), &f_tau);
        let jfac = automorphy_j2k(&elt, tau, params.weight(), ctx)?;
        for slot in rhs.iter_mut() {
            *slot *= &jfac;
        }
        let mut resid = ctx.real_zero();
        for (a, b) in lhs.iter().zip(&rhs) {
            resid += complex_abs_sq(&(a.clone() - b));
        }
        if resid > worst {
            worst = resid.clone();
        }
        let pass = resid <= bound;
        items.push(CheckItem {
            label: format!(
                "sample {i}: A = {mat:?}, tau = {:.4}+{:.4}i",
                tau.real().to_f64(),
                tau.imag().to_f64()
            ),
            measured: format!("{:.3e}", resid.to_f64()),
            pass,
        });
    }
    Ok(CheckReport::finish(
        "automorphy_residual",
        format!("{:.3e}", bound.to_f64()),
        items,
        Some(worst),
    ))
}

/// Deterministic pseudo-random (tau, A) samples for the automorphy check:
/// short words in S and T keep matrix entries small, and samples are
/// filtered so that both tau and A tau stay at height >= y_min.
pub fn automorphy_samples(
    y_min: &BigReal,
    count: usize,
    seed: u64,
    ctx: &PrecisionContext,
) -> Vec<(BigComplex, [i128; 4])> {
    use crate::weilrep::{mp_compose, MetaplecticElement};
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
    let mut next = move || {
        // xorshift64*
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        state.wrapping_mul(0x2545f4914f6cdd1d)
    };
    let y_f = y_min.to_f64();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = 1 + (next() % 4) as usize;
        let mut elt = MetaplecticElement::identity();
        for _ in 0..len {
            let g = if next() % 2 == 0 {
                MetaplecticElement::gen_s()
            } else {
                MetaplecticElement::gen_t((next() % 5) as i128 - 2)
            };
            elt = mp_compose(&elt, &g);
        }
        let x = ((next() % 10_000) as f64 / 10_000.0) - 0.5;
        let y = y_f + ((next() % 10_000) as f64 / 10_000.0) * (2.0 * y_f + 1.0);
        let tau = ctx.complex_from_f64(x, y);
        let a_tau = elt.act(&tau);
        if a_tau.imag().to_f64() >= y_f {
            out.push((tau, elt.matrix()));
        }
    }
    out
}

/// Cross-report of integer proximity against imported L-value records: every
/// record with `|L'| < vanish_threshold` must have an algebraic-candidate
/// coefficient, every clearly nonvanishing record must not.
pub fn dichotomy_report(
    table: &CoefficientTable,
    records: &[LValueRecord],
    vanish_threshold: f64,
    ctx: &PrecisionContext,
) -> Result<CheckReport> {
    let mut items = Vec::new();
    for rec in records {
        let (n, h) = delta_to_index(table.params(), rec.delta)?;
        let prox = integer_proximity(table, &[(n, h)], ctx)?;
        let p = &prox[0];
        let vanishing = rec.value_f64().abs() < vanish_threshold;
        let pass = vanishing == p.algebraic_candidate;
        items.push(CheckItem {
            label: format!(
                "Delta = {} (L' {} {vanish_threshold:.0e})",
                rec.delta,
                if vanishing { "<" } else { ">=" }
            ),
            measured: format!(
                "nearest {} at {:.3e}, candidate = {}",
                p.nearest,
                p.distance.to_f64(),
                p.algebraic_candidate
            ),
            pass,
        });
    }
    Ok(CheckReport::finish(
        "lvalue_dichotomy",
        format!("vanish threshold {vanish_threshold:.0e}"),
        items,
        None,
    ))
}
