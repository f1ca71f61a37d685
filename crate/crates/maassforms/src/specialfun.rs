//! Incomplete gamma function, the W kernel separating the u- and v-dependence
//! of the Fourier expansion, its decay bound, and the truncation estimator
//! M0(Y, eps).
//!
//! The only base cases ever needed are Gamma(1/2, x) = sqrt(pi) erfc(sqrt(x))
//! for half-odd parameters and Gamma(1, x) = exp(-x) for integral ones; all
//! other half-integral parameters follow from the recurrence
//! Gamma(a+1, x) = a Gamma(a, x) + x^a exp(-x).

use crate::bigarith::{ensure_finite_real, BigReal, PrecisionContext};
use crate::error::{Error, Result};
use rug::ops::Pow;
use rug::Float;

/// Half-integral weight `k = twice_k / 2`, kept as an exact integer multiple
/// of 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WeightParam {
    twice_k: i32,
}

impl WeightParam {
    pub fn from_twice(twice_k: i32) -> Self {
        WeightParam { twice_k }
    }

    /// Parses `"1/2"`, `"-1/2"`, `"-2"`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let n: i32 = num
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad weight {s:?}")))?;
            if den.trim() != "2" {
                return Err(Error::invalid(format!(
                    "weight denominator must be 1 or 2, got {s:?}"
                )));
            }
            Ok(WeightParam { twice_k: n })
        } else {
            let n: i32 = s
                .parse()
                .map_err(|_| Error::invalid(format!("bad weight {s:?}")))?;
            Ok(WeightParam { twice_k: 2 * n })
        }
    }

    pub fn twice(&self) -> i32 {
        self.twice_k
    }

    pub fn as_f64(&self) -> f64 {
        self.twice_k as f64 / 2.0
    }

    /// True for genuinely half-integral weights (odd numerator over 2).
    pub fn is_half_odd(&self) -> bool {
        self.twice_k.rem_euclid(2) == 1
    }
}

impl std::fmt::Display for WeightParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.twice_k % 2 == 0 {
            write!(f, "{}", self.twice_k / 2)
        } else {
            write!(f, "{}/2", self.twice_k)
        }
    }
}

/// Complementary error function with relative error below
/// `10^(-digits + 2)`.
///
/// Small arguments use the positive-term series
/// `erf(t) = (2/sqrt(pi)) t e^{-t^2} sum_n (2 t^2)^n / (1*3*...*(2n+1))`
/// at a precision widened by ~t^2/ln 2 bits to absorb the final `1 - erf`
/// cancellation; large arguments use the Legendre continued fraction for
/// `Gamma(1/2, t^2)`.  The switch point is `t^2 = max(30, digits ln(10)/2)`.
pub fn erfc_big(x: &BigReal, ctx: &PrecisionContext) -> Result<BigReal> {
    ensure_finite_real(x)?;
    if x.is_zero() {
        return Ok(ctx.real_from_i64(1));
    }
    if x.is_sign_negative() {
        let pos = erfc_big(&(-x.clone()), ctx)?;
        return Ok(Float::with_val(ctx.bits(), 2 - pos));
    }
    let x64 = x.to_f64();
    let switch = (30.0f64).max(ctx.digits() as f64 * std::f64::consts::LN_10 / 2.0);
    if x64 * x64 <= switch {
        erfc_series(x, ctx)
    } else {
        // erfc(t) = Gamma(1/2, t^2) / sqrt(pi)
        let wide = ctx.widened(32);
        let xx = Float::with_val(wide.bits(), x).square();
        let g = gamma_cf(1, &xx, &wide)?;
        let sqrt_pi = wide.pi().sqrt();
        Ok(Float::with_val(ctx.bits(), g / sqrt_pi))
    }
}

fn erfc_series(x: &BigReal, ctx: &PrecisionContext) -> Result<BigReal> {
    let x64 = x.to_f64();
    let extra = (x64 * x64 * std::f64::consts::LOG2_E).ceil() as u32 + 32;
    let wide = ctx.widened(extra);
    let bits = wide.bits();
    let t = Float::with_val(bits, x);
    let t2_twice = t.clone().square() * 2u32;

    let mut term = t.clone();
    let mut sum = t.clone();
    let mut odd = Float::with_val(bits, 1);
    loop {
        odd += 2u32;
        term *= &t2_twice;
        term /= &odd;
        sum += &term;
        if term < Float::with_val(bits, &sum) >> bits {
            break;
        }
    }
    let exp_neg = (-t.square()).exp();
    let two_over_sqrt_pi = Float::with_val(bits, 2) / wide.pi().sqrt();
    let erf = sum * exp_neg * two_over_sqrt_pi;
    let erfc = Float::with_val(bits, 1) - erf;
    Ok(Float::with_val(ctx.bits(), erfc))
}

/// Legendre continued fraction for Gamma(a, x), a = twice_a/2, valid (and
/// only used) for x well above a.  Modified Lentz iteration.
fn gamma_cf(twice_a: i32, x: &BigReal, ctx: &PrecisionContext) -> Result<BigReal> {
    let bits = ctx.bits();
    let a = Float::with_val(bits, twice_a) / 2u32;
    let tiny = Float::with_val(bits, 1) >> (2 * bits);
    let mut b = Float::with_val(bits, x) + 1u32 - a.clone();
    let mut c = Float::with_val(bits, 1) / tiny.clone();
    let mut d = if b.is_zero() {
        Float::with_val(bits, 1) / tiny.clone()
    } else {
        Float::with_val(bits, 1) / b.clone()
    };
    let mut h = d.clone();
    let mut converged = false;
    for i in 1..100_000u32 {
        let an = -(Float::with_val(bits, i) * (Float::with_val(bits, i) - a.clone()));
        b += 2u32;
        d = an.clone() * d + &b;
        if d.is_zero() {
            d = tiny.clone();
        }
        c = b.clone() + an / c;
        if c.is_zero() {
            c = tiny.clone();
        }
        d = d.recip();
        let del = d.clone() * &c;
        h *= &del;
        let dev = (del - 1u32).abs();
        if dev < Float::with_val(bits, 1) >> (bits - 4) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PrecisionFault(format!(
            "incomplete gamma continued fraction did not converge at x = {x}"
        )));
    }
    // Gamma(a, x) = e^{-x} x^a H
    let ln_part = Float::with_val(bits, x).ln() * &a - Float::with_val(bits, x);
    Ok(ln_part.exp() * h)
}

/// Complete Gamma(a) for a = twice_a/2 > 0 (half-odd or integral), via the
/// recurrence from Gamma(1/2) = sqrt(pi) and Gamma(1) = 1.
pub fn gamma_complete_halfint(twice_a: i32, ctx: &PrecisionContext) -> Result<BigReal> {
    if twice_a <= 0 {
        return Err(Error::domain(format!(
            "complete gamma at non-positive parameter {}/2",
            twice_a
        )));
    }
    let bits = ctx.bits();
    let mut val;
    let mut s;
    if twice_a % 2 != 0 {
        val = ctx.pi().sqrt();
        s = 1; // twice the current parameter
    } else {
        val = Float::with_val(bits, 1);
        s = 2;
    }
    while s < twice_a {
        val *= Float::with_val(bits, s) / 2u32;
        s += 2;
    }
    Ok(val)
}

/// Upper incomplete gamma Gamma(a, x) for half-integral a = twice_a/2,
/// relative error below `10^(-digits + 3)`.
///
/// Built from the base Gamma(1/2, x) = sqrt(pi) erfc(sqrt(x)) by the upward
/// recurrence `Gamma(a+1, x) = a Gamma(a, x) + x^a e^{-x}` and its inversion
/// downward for a < 1/2 (at widened precision; each downward step cancels
/// ~log2(x) bits).  Integral a >= 1 uses the base Gamma(1, x) = e^{-x}.
pub fn upper_gamma_halfint(twice_a: i32, x: &BigReal, ctx: &PrecisionContext) -> Result<BigReal> {
    ensure_finite_real(x)?;
    if x.is_sign_negative() && !x.is_zero() {
        return Err(Error::domain(format!(
            "upper incomplete gamma needs x >= 0, got {x}"
        )));
    }
    if x.is_zero() {
        if twice_a <= 0 {
            return Err(Error::domain(
                "Gamma(a, 0) diverges for a <= 0".to_string(),
            ));
        }
        return gamma_complete_halfint(twice_a, ctx);
    }
    if twice_a % 2 == 0 && twice_a < 2 {
        return Err(Error::domain(format!(
            "integral parameter a = {} not supported below 1",
            twice_a / 2
        )));
    }

    let x64 = x.to_f64();
    let down_steps = if twice_a < 1 {
        ((1 - twice_a) / 2) as u32
    } else {
        0
    };
    let extra = 32 + down_steps * ((x64 + 2.0).log2().ceil().max(1.0) as u32 + 2);
    let wide = ctx.widened(extra);
    let bits = wide.bits();
    let xw = Float::with_val(bits, x);

    // base value and twice its parameter
    let (mut val, mut s) = if twice_a % 2 != 0 {
        let sqrt_x = xw.clone().sqrt();
        let base = erfc_big(&sqrt_x, &wide)? * wide.pi().sqrt();
        (Float::with_val(bits, base), 1i32)
    } else {
        ((-xw.clone()).exp(), 2i32)
    };

    // x^{s/2} e^{-x}, maintained alongside the recurrence
    let mut boundary = {
        let ln = xw.clone().ln() * Float::with_val(bits, s) / 2u32 - xw.clone();
        ln.exp()
    };
    while s < twice_a {
        // Gamma(s/2 + 1, x) = (s/2) Gamma(s/2, x) + x^{s/2} e^{-x}
        val = val * Float::with_val(bits, s) / 2u32 + &boundary;
        boundary *= &xw;
        s += 2;
    }
    while s > twice_a {
        // Gamma(s/2 - 1, x) = (Gamma(s/2, x) - x^{s/2 - 1} e^{-x}) / (s/2 - 1)
        boundary /= &xw;
        let denom = Float::with_val(bits, s - 2) / 2u32;
        val = (val - &boundary) / denom;
        s -= 2;
    }
    Ok(Float::with_val(ctx.bits(), val))
}

/// The kernel `W(v) = e^{-2 pi v}` for `v > 0` and
/// `W(v) = e^{-2 pi v} Gamma(1 - k, 4 pi |v|)` for `v < 0`.
///
/// Positive for all valid arguments; `v = 0` is rejected (the index n = 0
/// never uses W).
pub fn w_kernel(k: WeightParam, v: &BigReal, ctx: &PrecisionContext) -> Result<BigReal> {
    ensure_finite_real(v)?;
    if v.is_zero() {
        return Err(Error::domain("W(0) is not defined".to_string()));
    }
    let wide = ctx.widened(16);
    let bits = wide.bits();
    let exp_part = (-(wide.two_pi() * Float::with_val(bits, v))).exp();
    if v.is_sign_negative() {
        let arg = wide.two_pi() * 2u32 * Float::with_val(bits, v).abs();
        let g = upper_gamma_halfint(2 - k.twice(), &arg, &wide)?;
        Ok(Float::with_val(ctx.bits(), exp_part * g))
    } else {
        Ok(Float::with_val(ctx.bits(), exp_part))
    }
}

/// Upper bound of the shape `c_k e^{-2 pi |v|}` (v > 0) and
/// `c_k e^{-2 pi |v|} (4 pi |v|)^{-k}` (v < 0) with `|W(v)| <= bound`.
///
/// For k >= 0 the bound holds for every v != 0 with c_k = max(1, Gamma(1-k)).
/// For k < 0 the constant carries an extra factor 2 and the bound is valid
/// once `4 pi |v| >= 2(1 - k)`, which covers every argument the truncation
/// model feeds it.
pub fn w_kernel_bound(k: WeightParam, v: &BigReal, ctx: &PrecisionContext) -> Result<BigReal> {
    ensure_finite_real(v)?;
    if v.is_zero() {
        return Err(Error::domain("W(0) is not defined".to_string()));
    }
    let bits = ctx.bits();
    let c_k = w_bound_constant(k, ctx)?;
    let abs_v = Float::with_val(bits, v).abs();
    let decay = (-(ctx.two_pi() * abs_v.clone())).exp();
    if v.is_sign_negative() {
        let y = ctx.two_pi() * 2u32 * abs_v;
        let poly = y.pow(Float::with_val(bits, -k.twice()) / 2u32);
        Ok(c_k * decay * poly)
    } else {
        Ok(c_k * decay)
    }
}

fn w_bound_constant(k: WeightParam, ctx: &PrecisionContext) -> Result<BigReal> {
    let one = ctx.real_from_i64(1);
    let g = gamma_complete_halfint(2 - k.twice(), ctx)?;
    let base = if g > one { g } else { one };
    if k.twice() < 0 {
        Ok(base * 2u32)
    } else {
        Ok(base)
    }
}

/// Natural log of the modeled coefficient tail beyond `|n| > 4 N m0`:
/// the holomorphic side grows like `exp(4 pi C sqrt(n))` with
/// `C = sqrt(pole_depth) / 4N`, the non-holomorphic side like `|n|^{k/2}`,
/// both damped by the W decay at height y.  Runs in f64 log space.
pub(crate) fn tail_model_ln(
    n_level: u32,
    k: WeightParam,
    pole_depth: u32,
    y: f64,
    m0: u32,
) -> f64 {
    let four_n = 4.0 * n_level as f64;
    let c_growth = (pole_depth as f64).sqrt() / four_n;
    let rate = 2.0 * std::f64::consts::PI * y / four_n;
    let kf = k.as_f64();
    let n_start = four_n * m0 as f64 + 1.0;

    // positive-index tail: 4 pi C sqrt(n) - rate * n
    let g_holo = |n: f64| 4.0 * std::f64::consts::PI * c_growth * n.sqrt() - rate * n;
    let peak_holo = (4.0 * std::f64::consts::PI * c_growth / (2.0 * rate)).powi(2);
    let holo = log_tail_sum(g_holo, n_start, peak_holo);

    // negative-index tail, using the bound shape for W(-v):
    // (k/2) ln n + ln c_k - rate*n - k ln(4 pi n y / 4N)
    let ln_ck = {
        let s = 1.0 - kf;
        // ln Gamma(s) is modest for the weights in play; clamp at 0 like max(1, .)
        let lg = ln_gamma_f64(s).max(0.0);
        if kf < 0.0 {
            lg + std::f64::consts::LN_2
        } else {
            lg
        }
    };
    let g_neg = |n: f64| {
        kf / 2.0 * n.ln() + ln_ck - rate * n
            - kf * (4.0 * std::f64::consts::PI * n * y / four_n).ln()
    };
    // the polynomial factors shift the peak of the negative tail only
    // slightly; start the scan at n_start and let the summer walk past it
    let peak_neg = (kf.abs() / rate).max(1.0);
    let neg = log_tail_sum(g_neg, n_start, peak_neg);

    log_add(holo, neg)
}

fn ln_gamma_f64(s: f64) -> f64 {
    // Stirling with correction, adequate for a heuristic constant
    if s <= 0.0 {
        return 0.0;
    }
    let mut s = s;
    let mut shift = 0.0f64;
    while s < 7.0 {
        shift -= s.ln();
        s += 1.0;
    }
    let inv = 1.0 / s;
    shift
        + (s - 0.5) * s.ln() - s
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv / 12.0 - inv.powi(3) / 360.0
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln of `sum_{n >= n_start, integer steps} exp(g(n))`, walking past the
/// peak of g and closing the geometric remainder analytically.
fn log_tail_sum(g: impl Fn(f64) -> f64, n_start: f64, peak: f64) -> f64 {
    let mut n = n_start;
    let mut max_ln = f64::NEG_INFINITY;
    let mut acc = 0.0f64; // sum of exp(g - max_ln)
    let mut iterations = 0u64;
    loop {
        let gn = g(n);
        if gn > max_ln {
            acc = acc * (max_ln - gn).exp() + 1.0;
            max_ln = gn;
        } else {
            acc += (gn - max_ln).exp();
        }
        iterations += 1;
        if n > peak {
            let ratio = (g(n + 1.0) - gn).exp();
            if ratio < 0.9999 {
                let term = (gn - max_ln).exp();
                let remainder = term * ratio / (1.0 - ratio);
                if remainder < acc * 1e-3 || term < acc * 1e-30 {
                    acc += remainder;
                    break;
                }
            }
        }
        if iterations > 50_000_000 {
            break;
        }
        n += 1.0;
    }
    max_ln + acc.ln()
}

/// Smallest truncation point M0 such that the modeled tail beyond
/// `|n| > 4 N M0` stays below `eps` at height `Y`, then widened by the
/// safety factor 1.2.
///
/// `pole_depth` is the maximal |n| over the principal part in the
/// `q^{1/4N}` grading.
pub fn truncation_m0(
    n_level: u32,
    k: WeightParam,
    pole_depth: u32,
    y: &BigReal,
    eps: &BigReal,
) -> Result<u32> {
    ensure_finite_real(y)?;
    ensure_finite_real(eps)?;
    let y64 = y.to_f64();
    if !(y64 > 0.0 && y64 < 0.75f64.sqrt()) {
        return Err(Error::invalid(format!(
            "height Y = {y64} outside (0, sqrt(3)/2)"
        )));
    }
    if eps.is_zero() || eps.is_sign_negative() {
        return Err(Error::invalid("eps must be positive".to_string()));
    }
    let ln_eps = eps.clone().ln().to_f64();

    let fits = |m0: u32| tail_model_ln(n_level, k, pole_depth, y64, m0) < ln_eps;

    let mut hi = 1u32;
    while !fits(hi) {
        hi = hi.saturating_mul(2);
        if hi > 1 << 22 {
            return Err(Error::PrecisionFault(
                "truncation point exceeds supported range".to_string(),
            ));
        }
    }
    let mut lo = hi / 2; // fits(lo) is false (or lo == 0)
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(((hi as f64) * 1.2).ceil() as u32)
}
