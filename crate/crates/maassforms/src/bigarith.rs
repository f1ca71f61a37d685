//! Arbitrary-precision real/complex arithmetic contract used by every other
//! module.
//!
//! All numerical work is done with MPFR/MPC (via `rug`) in round-to-nearest
//! mode at a fixed mantissa precision derived from a requested decimal digit
//! count plus a fixed number of guard bits.  Values are plain [`rug::Float`]
//! and [`rug::Complex`]; the [`PrecisionContext`] carries the precision and
//! provides constructors, so that every derived quantity in one computation
//! uses the same precision.

use crate::error::{Error, Result};
use rug::float::Special;
use rug::{Complex, Float};

/// Real number at context precision.
pub type BigReal = Float;
/// Complex number at context precision (component-wise [`BigReal`]).
pub type BigComplex = Complex;

/// Guard bits folded into the working precision for compound expressions.
pub const GUARD_BITS: u32 = 32;

/// Working precision for a whole computation.
///
/// `bits = ceil(decimal_digits * log2(10)) + GUARD_BITS`; every value created
/// through the context carries exactly this mantissa precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionContext {
    digits: u32,
    bits: u32,
}

/// Builds a context from a decimal digit request.
///
/// Rejects `decimal_digits < 20`, below any sensible run of the method.
pub fn make_context(decimal_digits: u32) -> Result<PrecisionContext> {
    PrecisionContext::new(decimal_digits)
}

impl PrecisionContext {
    pub fn new(decimal_digits: u32) -> Result<Self> {
        if decimal_digits < 20 {
            return Err(Error::invalid(format!(
                "precision of {decimal_digits} decimal digits is below the minimum of 20"
            )));
        }
        let bits = (decimal_digits as f64 * std::f64::consts::LOG2_10).ceil() as u32 + GUARD_BITS;
        Ok(PrecisionContext {
            digits: decimal_digits,
            bits,
        })
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Context with `extra` additional bits, for internal steps that must
    /// absorb known cancellation before rounding back.
    pub(crate) fn widened(&self, extra: u32) -> PrecisionContext {
        PrecisionContext {
            digits: self.digits,
            bits: self.bits + extra,
        }
    }

    pub fn real_zero(&self) -> BigReal {
        Float::new(self.bits)
    }

    pub fn real_from_f64(&self, v: f64) -> BigReal {
        Float::with_val(self.bits, v)
    }

    pub fn real_from_i64(&self, v: i64) -> BigReal {
        Float::with_val(self.bits, v)
    }

    /// Exact rational `p/q` rounded once to context precision.
    pub fn real_from_ratio(&self, p: i64, q: u64) -> BigReal {
        debug_assert!(q != 0);
        Float::with_val(self.bits, p) / Float::with_val(self.bits, q)
    }

    pub fn complex_zero(&self) -> BigComplex {
        Complex::new(self.bits)
    }

    pub fn complex_from(&self, re: BigReal, im: BigReal) -> BigComplex {
        Complex::with_val(self.bits, (re, im))
    }

    pub fn complex_from_f64(&self, re: f64, im: f64) -> BigComplex {
        Complex::with_val(self.bits, (re, im))
    }

    pub fn pi(&self) -> BigReal {
        Float::with_val(self.bits, rug::float::Constant::Pi)
    }

    pub fn two_pi(&self) -> BigReal {
        Float::with_val(self.bits, rug::float::Constant::Pi) * 2u32
    }

    /// `k * 2^-bits`, the comparison tolerance for "within k ulp" checks at
    /// unit scale.
    pub fn ulps(&self, k: u32) -> BigReal {
        let mut t = Float::with_val(self.bits, k);
        t >>= self.bits;
        t
    }

    /// `10^(-digits + d)` as a positive tolerance.
    pub fn digits_tol(&self, d: i64) -> BigReal {
        use rug::ops::Pow;
        Float::with_val(self.bits, 10).pow(-(self.digits as i64) + d)
    }

    /// Parses a decimal string at context precision.
    ///
    /// Accepts plain decimal/scientific notation and exact rationals `"p/q"`.
    pub fn parse_decimal(&self, s: &str) -> Result<BigReal> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad rational numerator in {s:?}")))?;
            let q: i64 = q
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad rational denominator in {s:?}")))?;
            if q == 0 {
                return Err(Error::invalid(format!("zero denominator in {s:?}")));
            }
            let sign = if q < 0 { -1 } else { 1 };
            return Ok(self.real_from_ratio(sign * p, q.unsigned_abs()));
        }
        let parsed = Float::parse(s).map_err(|e| Error::invalid(format!("bad decimal {s:?}: {e}")))?;
        let v = Float::with_val(self.bits, parsed);
        ensure_finite_real(&v)?;
        Ok(v)
    }

    /// Formats with enough decimal digits that [`Self::parse_decimal`]
    /// recovers the identical binary value (mpfr emits a uniquely-reading
    /// string when the digit count is left open).
    pub fn format_decimal(&self, x: &BigReal) -> String {
        if x.is_zero() {
            return "0".to_string();
        }
        x.to_string_radix(10, None)
    }
}

pub fn ensure_finite_real(x: &BigReal) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("non-finite real value {x}")))
    }
}

pub fn ensure_finite_complex(z: &BigComplex) -> Result<()> {
    if z.real().is_finite() && z.imag().is_finite() {
        Ok(())
    } else {
        Err(Error::domain("non-finite complex value".to_string()))
    }
}

/// `e(frac) = exp(2 pi i frac)`.
///
/// The angle is formed at widened precision so the result stays within a few
/// ulp of the unit circle at context precision.
pub fn unit_circle_exp(frac: &BigReal, ctx: &PrecisionContext) -> Result<BigComplex> {
    ensure_finite_real(frac)?;
    let wide = ctx.widened(GUARD_BITS);
    let theta = wide.two_pi() * Float::with_val(wide.bits(), frac);
    let (s, c) = theta.sin_cos(Float::new(wide.bits()));
    Ok(Complex::with_val(ctx.bits(), (c, s)))
}

/// `e(p/q)` with the argument reduced exactly modulo `q` before any rounding.
pub fn unit_circle_exp_ratio(p: i64, q: u64, ctx: &PrecisionContext) -> BigComplex {
    debug_assert!(q != 0);
    let r = p.rem_euclid(q as i64);
    let wide = ctx.widened(GUARD_BITS);
    let theta = wide.two_pi() * wide.real_from_ratio(r, q);
    let (s, c) = theta.sin_cos(Float::new(wide.bits()));
    Complex::with_val(ctx.bits(), (c, s))
}

/// `w^k = exp(k Log w)` for half-integral `k = twice_k / 2`, with `Log` the
/// principal logarithm (argument in `(-pi, pi]`).
///
/// Values exactly on the negative real axis take argument `+pi`.  For
/// `twice_k = 1` this is the principal square root `sqrt(w)`.
pub fn principal_power_halfint(
    w: &BigComplex,
    twice_k: i32,
    ctx: &PrecisionContext,
) -> Result<BigComplex> {
    ensure_finite_complex(w)?;
    if w.real().is_zero() && w.imag().is_zero() {
        return Err(Error::domain("principal power of zero".to_string()));
    }
    let wide = ctx.widened(GUARD_BITS);
    let mut base = Complex::with_val(wide.bits(), w);
    // A signed zero imaginary part would put mpc's atan2 on the wrong side of
    // the branch cut; pin it to +0.
    if base.imag().is_zero() && base.imag().is_sign_negative() {
        let re = base.real().clone();
        base = Complex::with_val(wide.bits(), (re, Float::with_val(wide.bits(), Special::Zero)));
    }
    let ln = base.ln();
    let scaled = ln * Float::with_val(wide.bits(), twice_k) / 2u32;
    let result = scaled.exp();
    Ok(Complex::with_val(ctx.bits(), result))
}

/// Complex modulus at the value's own precision.
pub fn complex_abs(z: &BigComplex) -> BigReal {
    z.clone().abs().into_real_imag().0
}

/// Squared modulus, cheaper than [`complex_abs`] where a square suffices.
pub fn complex_abs_sq(z: &BigComplex) -> BigReal {
    let re2 = z.real().clone().square();
    let im2 = z.imag().clone().square();
    re2 + im2
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ctx30() -> PrecisionContext {
        make_context(30).unwrap()
    }

    #[test]
    fn context_bit_counts() {
        // 40 digits: 40*log2(10) = 132.9 -> at least 133 bits before guard
        let c = make_context(40).unwrap();
        assert!(c.bits() >= 133);
        let c = make_context(20).unwrap();
        assert!(c.bits() >= 67);
        assert!(make_context(10).is_err());
    }

    #[test]
    fn context_is_deterministic() {
        let a = make_context(37).unwrap();
        let b = make_context(37).unwrap();
        assert_eq!(a.bits(), b.bits());
    }

    #[test]
    fn unit_circle_special_values() {
        let ctx = ctx30();
        let one = unit_circle_exp(&ctx.real_zero(), &ctx).unwrap();
        assert!((one.real().clone() - 1u32).abs() < ctx.ulps(4));
        assert!(one.imag().clone().abs() < ctx.ulps(4));

        let quarter = unit_circle_exp(&ctx.real_from_ratio(1, 4), &ctx).unwrap();
        assert!(quarter.real().clone().abs() < ctx.ulps(4));
        assert!((quarter.imag().clone() - 1u32).abs() < ctx.ulps(4));

        // e(1/3) = -1/2 + sqrt(3)/2 i
        let third = unit_circle_exp(&ctx.real_from_ratio(1, 3), &ctx).unwrap();
        let half = ctx.real_from_ratio(-1, 2);
        let s3h = (ctx.real_from_f64(3.0).sqrt()) / 2u32;
        assert!((third.real().clone() - half).abs() < ctx.ulps(8));
        assert!((third.imag().clone() - s3h).abs() < ctx.ulps(8));
    }

    #[test]
    fn unit_circle_group_law() {
        let ctx = ctx30();
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for _ in 0..200 {
            let a = ctx.real_from_f64(rng.gen_range(-10.0..10.0));
            let b = ctx.real_from_f64(rng.gen_range(-10.0..10.0));
            let ea = unit_circle_exp(&a, &ctx).unwrap();
            let eb = unit_circle_exp(&b, &ctx).unwrap();
            let eab = unit_circle_exp(&(a + b), &ctx).unwrap();
            let prod = ea * eb;
            let diff = complex_abs(&(prod - eab));
            assert!(diff < ctx.ulps(4), "group law broke: {diff}");
        }
    }

    #[test]
    fn principal_power_examples() {
        let ctx = ctx30();
        // 1^(7/2) = 1
        let one = ctx.complex_from_f64(1.0, 0.0);
        let p = principal_power_halfint(&one, 7, &ctx).unwrap();
        assert!(complex_abs(&(p - ctx.complex_from_f64(1.0, 0.0))) < ctx.ulps(4));

        // i^(1/2) = e^(i pi/4)
        let i = ctx.complex_from_f64(0.0, 1.0);
        let p = principal_power_halfint(&i, 1, &ctx).unwrap();
        let expect = unit_circle_exp(&ctx.real_from_ratio(1, 8), &ctx).unwrap();
        assert!(complex_abs(&(p - expect)) < ctx.ulps(8));

        // (-1)^(1/2) = i on the principal branch (argument +pi on the cut)
        let minus_one = ctx.complex_from_f64(-1.0, 0.0);
        let p = principal_power_halfint(&minus_one, 1, &ctx).unwrap();
        assert!(complex_abs(&(p - ctx.complex_from_f64(0.0, 1.0))) < ctx.ulps(8));

        assert!(principal_power_halfint(&ctx.complex_zero(), 1, &ctx).is_err());
    }

    #[test]
    fn principal_sqrt_squares_back() {
        let ctx = ctx30();
        let mut rng = StdRng::seed_from_u64(0xf00d);
        for _ in 0..200 {
            // stay off the negative real axis
            let re = rng.gen_range(-3.0..3.0);
            let im = loop {
                let v: f64 = rng.gen_range(-3.0..3.0);
                if v.abs() > 1e-3 || re > 1e-3 {
                    break v;
                }
            };
            let w = ctx.complex_from_f64(re, im);
            let r = principal_power_halfint(&w, 1, &ctx).unwrap();
            let sq = r.clone() * r;
            let scale = complex_abs(&w) + ctx.real_from_f64(1.0);
            assert!(complex_abs(&(sq - w)) < ctx.ulps(4) * scale);
        }
    }

    #[test]
    fn decimal_round_trip_is_exact() {
        let ctx = ctx30();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..100 {
            let x = ctx.real_from_f64(rng.gen_range(-1.0..1.0))
                * ctx.real_from_f64(10f64.powi(rng.gen_range(-30..30)));
            let s = ctx.format_decimal(&x);
            let back = ctx.parse_decimal(&s).unwrap();
            assert_eq!(x, back, "round trip failed for {s}");
        }
        assert_eq!(ctx.parse_decimal("0").unwrap(), ctx.real_zero());
        let r = ctx.parse_decimal("-3/7").unwrap();
        assert_eq!(r, ctx.real_from_ratio(-3, 7));
    }

    #[test]
    fn deterministic_evaluation() {
        let ctx = ctx30();
        let a = unit_circle_exp(&ctx.real_from_f64(0.7431), &ctx).unwrap();
        let b = unit_circle_exp(&ctx.real_from_f64(0.7431), &ctx).unwrap();
        assert_eq!(a, b);
    }
}
