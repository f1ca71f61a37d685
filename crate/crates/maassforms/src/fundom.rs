//! Pullback of points of the upper half-plane into the standard closed
//! fundamental domain `F = { |Re z| <= 1/2, |z| >= 1 }` of PSL(2,Z), and the
//! automorphy factor attached to the pullback map.

use crate::bigarith::{
    complex_abs_sq, ensure_finite_complex, principal_power_halfint, BigComplex, PrecisionContext,
};
use crate::error::{Error, Result};
use crate::specialfun::WeightParam;
use crate::weilrep::{canonical_lift, MetaplecticElement};
use rug::{Complex, Float};

/// Result of reducing `z` into the fundamental domain: `z = map * z_star`
/// with `z_star` in closed F.
#[derive(Debug, Clone)]
pub struct PullbackResult {
    pub z_star: BigComplex,
    pub map: MetaplecticElement,
}

/// Reduces `z` into the closed fundamental domain by the classical
/// translate-and-invert iteration, accumulating the word exactly in integer
/// matrices.
///
/// Boundary ties (|z| = 1 or Re = +-1/2 within 2^(-bits/2)) are accepted as
/// inside; the algorithm needs only some valid representative.  Failure to
/// land in F within `10 (digits + |log2 Im z|)` iterations signals a
/// precision fault.
pub fn pullback(z: &BigComplex, ctx: &PrecisionContext) -> Result<PullbackResult> {
    ensure_finite_complex(z)?;
    let im = z.imag();
    if !(im.is_sign_positive() && !im.is_zero()) {
        return Err(Error::domain(format!("pullback needs Im z > 0, got {im}")));
    }
    let bits = ctx.bits();
    let tol = Float::with_val(bits, 1) >> (bits / 2);

    let im_log = im.to_f64().abs().log2().abs().ceil() as u64;
    let max_iter = 10 * (ctx.digits() as u64 + im_log + 1);

    let mut w = Complex::with_val(bits, z);
    // accumulated word g with w = g * z
    let mut g: [i128; 4] = [1, 0, 0, 1];
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::PrecisionFault(format!(
                "fundamental-domain reduction did not converge for z = {z}"
            )));
        }
        let t = nearest_integer(w.real())?;
        if t != 0 {
            let re = w.real().clone() - Float::with_val(bits, t);
            w = Complex::with_val(bits, (re, w.imag().clone()));
            // left-multiply by T^{-t}
            g = [g[0] - t * g[2], g[1] - t * g[3], g[2], g[3]];
        }
        let norm = complex_abs_sq(&w);
        if norm < Float::with_val(bits, 1) - &tol {
            // left-multiply by S: w -> -1/w
            w = -w.recip();
            g = [-g[2], -g[3], g[0], g[1]];
        } else {
            break;
        }
    }

    // evaluate z_star once from the exact word to shed iteration drift
    let g_elt = canonical_lift(g)?;
    let z_star = g_elt.act(z);
    let map = canonical_lift([g[3], -g[1], -g[2], g[0]])?;
    Ok(PullbackResult { z_star, map })
}

fn nearest_integer(x: &Float) -> Result<i128> {
    let rounded = x.clone().round();
    rounded
        .to_integer()
        .and_then(|i| i.to_i128())
        .ok_or_else(|| Error::domain(format!("real part {x} out of integer range")))
}

/// The automorphy factor `phi(z_star)^{2k}` for `phi = sign * j_map`:
/// `sign^{2k} * exp(k Log(c z_star + d))` with the principal logarithm.
/// For half-integral k the exponent 2k is odd, so `sign^{2k} = sign`.
pub fn automorphy_j2k(
    map: &MetaplecticElement,
    z_star: &BigComplex,
    k: WeightParam,
    ctx: &PrecisionContext,
) -> Result<BigComplex> {
    ensure_finite_complex(z_star)?;
    if !(z_star.imag().is_sign_positive() && !z_star.imag().is_zero()) {
        return Err(Error::domain("automorphy factor needs Im z > 0".to_string()));
    }
    let bits = ctx.bits();
    let [_, _, c, d] = map.matrix();
    let w = Complex::with_val(bits, z_star) * Float::with_val(bits, c) + Float::with_val(bits, d);
    let mut factor = principal_power_halfint(&w, k.twice(), ctx)?;
    if map.sign() == -1 && k.twice().rem_euclid(2) == 1 {
        factor = -factor;
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigarith::{complex_abs, make_context, unit_circle_exp_ratio};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ctx() -> PrecisionContext {
        make_context(30).unwrap()
    }

    #[test]
    fn point_already_reduced() {
        let c = ctx();
        let z = c.complex_from_f64(0.0, 1.0);
        let r = pullback(&z, &c).unwrap();
        assert_eq!(r.map.matrix(), [1, 0, 0, 1]);
        assert!(complex_abs(&(r.z_star - z)) < c.digits_tol(6));
    }

    #[test]
    fn textbook_reduction() {
        let c = ctx();
        // 1/10 + 2/10 i -> -1/z = -2 + 4i -> shift by 2 -> 4i, word T^2 S
        let z = c.complex_from(c.real_from_ratio(1, 10), c.real_from_ratio(2, 10));
        let r = pullback(&z, &c).unwrap();
        let want = c.complex_from_f64(0.0, 4.0);
        assert!(complex_abs(&(r.z_star.clone() - want)) < c.digits_tol(6));
        // map = (T^2 S)^{-1}
        assert_eq!(r.map.matrix(), [0, 1, -1, 2]);
        let back = r.map.act(&r.z_star);
        assert!(complex_abs(&(back - z)) < c.digits_tol(6));
    }

    #[test]
    fn pure_translation() {
        let c = ctx();
        let tau0 = c.complex_from_f64(0.1, 2.0);
        let z = tau0.clone() + c.complex_from_f64(5.0, 0.0);
        let r = pullback(&z, &c).unwrap();
        assert!(complex_abs(&(r.z_star.clone() - tau0)) < c.digits_tol(6));
        assert_eq!(r.map.matrix(), [1, 5, 0, 1]);
    }

    #[test]
    fn random_points_land_in_f_and_round_trip() {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(2024);
        let tol = c.digits_tol(6);
        let half_bit = Float::with_val(c.bits(), 1) >> (c.bits() / 2);
        let half_plus = c.real_from_f64(0.5) + &half_bit;
        for _ in 0..1000 {
            let x = rng.gen_range(-8.0..8.0);
            let y = 10f64.powf(rng.gen_range(-4.0..1.0));
            let z = c.complex_from_f64(x, y);
            let r = pullback(&z, &c).unwrap();
            // inside the closed domain (with boundary slack)
            assert!(r.z_star.real().clone().abs() <= half_plus);
            let n = complex_abs_sq(&r.z_star);
            assert!(n >= c.real_from_f64(1.0) - &half_bit);
            // height never decreases
            assert!(r.z_star.imag().clone() >= c.real_from_f64(y) - &half_bit);
            // Mobius round trip
            let back = r.map.act(&r.z_star);
            assert!(complex_abs(&(back - z)) < tol);
        }
    }

    #[test]
    fn automorphy_factor_examples() {
        let c = ctx();
        let k = WeightParam::parse("1/2").unwrap();
        // identity map: factor 1 everywhere
        let id = canonical_lift([1, 0, 0, 1]).unwrap();
        let f = automorphy_j2k(&id, &c.complex_from_f64(0.3, 1.7), k, &c).unwrap();
        assert!(complex_abs(&(f - c.complex_from_f64(1.0, 0.0))) < c.digits_tol(6));

        // map = S at z = i: (1*i + 0)^{1/2} = e^{i pi/4}
        let s = canonical_lift([0, -1, 1, 0]).unwrap();
        let f = automorphy_j2k(&s, &c.complex_from_f64(0.0, 1.0), k, &c).unwrap();
        let want = unit_circle_exp_ratio(1, 8, &c);
        assert!(complex_abs(&(f - want)) < c.digits_tol(6));
    }

    #[test]
    fn automorphy_modulus_identity() {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(404);
        for &twice_k in &[1i32, -1, 3] {
            let k = WeightParam::from_twice(twice_k);
            for _ in 0..50 {
                let z = c.complex_from_f64(rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0));
                let r = pullback(&z, &c).unwrap();
                let f = automorphy_j2k(&r.map, &r.z_star, k, &c).unwrap();
                let [_, _, mc, md] = r.map.matrix();
                let w = Complex::with_val(c.bits(), &r.z_star) * Float::with_val(c.bits(), mc)
                    + Float::with_val(c.bits(), md);
                use rug::ops::Pow;
                let want = complex_abs(&w).pow(Float::with_val(c.bits(), twice_k) / 2u32);
                let got = complex_abs(&f);
                assert!((got - want).abs() < c.digits_tol(6));
            }
        }
    }

    #[test]
    fn rejects_lower_half_plane() {
        let c = ctx();
        assert!(pullback(&c.complex_from_f64(0.3, -1.0), &c).is_err());
        assert!(pullback(&c.complex_from_f64(0.3, 0.0), &c).is_err());
    }
}
