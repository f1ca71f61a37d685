//! Metaplectic group arithmetic and evaluation of the Weil representation
//! rho (and its conjugate) on C[Z/2NZ].
//!
//! Elements of Mp2(Z) are pairs (M, phi) with phi(tau)^2 = c tau + d; we store
//! the integral matrix together with a sign meaning phi = sign * j_M where
//! j_M(tau) = sqrt(c tau + d) on the principal branch.  A general element is
//! evaluated by decomposing its matrix into the generators S and T by the
//! Euclidean algorithm on the bottom row; the generator images
//!
//! ```text
//! rho(T) e_h = e(h^2 / 4N) e_h
//! rho(S) e_h = (2 i N)^{-1/2} sum_{h'} e(-h h' / 2N) e_{h'}
//! ```
//!
//! are exact roots of unity, and the metaplectic cocycle sign of the word is
//! fixed numerically at tau = 2i, where both candidate values are bounded
//! away from each other.

use crate::bigarith::{unit_circle_exp_ratio, BigComplex, PrecisionContext};
use crate::error::{Error, Result};
use rug::{Complex, Float};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// An SL2(Z) matrix `(a, b; c, d)` with the metaplectic square-root branch
/// sign: the pair represents `(m, sign * j_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetaplecticElement {
    mat: [i128; 4],
    sign: i8,
}

impl MetaplecticElement {
    pub fn matrix(&self) -> [i128; 4] {
        self.mat
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn identity() -> Self {
        MetaplecticElement {
            mat: [1, 0, 0, 1],
            sign: 1,
        }
    }

    pub fn gen_t(n: i128) -> Self {
        MetaplecticElement {
            mat: [1, n, 0, 1],
            sign: 1,
        }
    }

    pub fn gen_s() -> Self {
        MetaplecticElement {
            mat: [0, -1, 1, 0],
            sign: 1,
        }
    }

    /// Matrix inverse with the sign resolved through the group law.
    pub fn inverse(&self) -> Self {
        let [a, b, c, d] = self.mat;
        let inv_mat = [d, -b, -c, a];
        let candidate = MetaplecticElement {
            mat: inv_mat,
            sign: 1,
        };
        // (self * candidate) is (I, +-1); flip if the product sign is -1
        let prod = mp_compose(self, &candidate);
        MetaplecticElement {
            mat: inv_mat,
            sign: candidate.sign * prod.sign,
        }
    }

    /// Mobius action on a point of the upper half-plane.
    pub fn act(&self, z: &BigComplex) -> BigComplex {
        let prec = z.prec().0;
        let [a, b, c, d] = self.mat;
        let num = Complex::with_val(prec, z) * i128_float(prec, a) + i128_float(prec, b);
        let den = Complex::with_val(prec, z) * i128_float(prec, c) + i128_float(prec, d);
        num / den
    }
}

fn i128_float(prec: u32, v: i128) -> Float {
    Float::with_val(prec, v)
}

/// Lifts an SL2(Z) matrix to its canonical metaplectic representative
/// `(m, +j_m)`.
pub fn canonical_lift(mat: [i128; 4]) -> Result<MetaplecticElement> {
    let [a, b, c, d] = mat;
    let det = a
        .checked_mul(d)
        .zip(b.checked_mul(c))
        .and_then(|(ad, bc)| ad.checked_sub(bc))
        .ok_or_else(|| Error::invalid("matrix entries overflow".to_string()))?;
    if det != 1 {
        return Err(Error::invalid(format!(
            "determinant {det} != 1 for ({a}, {b}; {c}, {d})"
        )));
    }
    Ok(MetaplecticElement { mat, sign: 1 })
}

/// Metaplectic group law `(M, phi)(M', phi') = (M M', phi(M' tau) phi'(tau))`.
///
/// The output sign sigma satisfies `phi_A(B tau) phi_B(tau) = sigma * j_{AB}(tau)`
/// and is decided by evaluating both sides at tau = 2i in double precision;
/// the two candidates differ by a factor -1 and the evaluated ratio is 1 or
/// -1 up to roundoff far below that gap.
pub fn mp_compose(a: &MetaplecticElement, b: &MetaplecticElement) -> MetaplecticElement {
    let [aa, ab, ac, ad] = a.mat;
    let [ba, bb, bc, bd] = b.mat;
    let mat = [
        aa * ba + ab * bc,
        aa * bb + ab * bd,
        ac * ba + ad * bc,
        ac * bb + ad * bd,
    ];

    let tau = (0.0f64, 2.0f64);
    let b_tau = mobius_f64(b.mat, tau);
    let ja = j_factor_f64(a.mat, b_tau);
    let jb = j_factor_f64(b.mat, tau);
    let jab = j_factor_f64(mat, tau);
    let prod = c64_mul(ja, jb);
    let ratio = c64_div(prod, jab);
    debug_assert!(
        ratio.1.abs() < 1e-6 && (ratio.0.abs() - 1.0).abs() < 1e-6,
        "cocycle ratio {ratio:?} not near a unit"
    );
    let sigma = if ratio.0 > 0.0 { 1 } else { -1 };
    MetaplecticElement {
        mat,
        sign: a.sign * b.sign * sigma,
    }
}

fn mobius_f64(m: [i128; 4], tau: (f64, f64)) -> (f64, f64) {
    let [a, b, c, d] = m.map(|v| v as f64);
    let num = (a * tau.0 + b, a * tau.1);
    let den = (c * tau.0 + d, c * tau.1);
    c64_div(num, den)
}

/// Principal branch of sqrt(c tau + d) in double precision.  The side of the
/// branch cut is decided by the exact sign of c (the imaginary part of
/// c tau + d), so the cut itself is only reached for c = 0, d < 0, where the
/// argument is taken as +pi.
fn j_factor_f64(m: [i128; 4], tau: (f64, f64)) -> (f64, f64) {
    let c = m[2] as f64;
    let d = m[3] as f64;
    let w = (c * tau.0 + d, c * tau.1);
    if m[2] == 0 {
        let dd = m[3] as f64;
        if dd < 0.0 {
            return (0.0, (-dd).sqrt());
        }
        return (dd.sqrt(), 0.0);
    }
    c64_sqrt(w)
}

fn c64_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn c64_div(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let den = b.0 * b.0 + b.1 * b.1;
    (
        (a.0 * b.0 + a.1 * b.1) / den,
        (a.1 * b.0 - a.0 * b.1) / den,
    )
}

fn c64_sqrt(w: (f64, f64)) -> (f64, f64) {
    let r = w.0.hypot(w.1);
    let theta = w.1.atan2(w.0);
    let s = r.sqrt();
    let half = theta / 2.0;
    (s * half.cos(), s * half.sin())
}

/// A 2N x 2N matrix of Weil representation values, indexed by
/// `(h, h') in (Z/2NZ)^2`.
#[derive(Debug, Clone)]
pub struct RepMatrix {
    n_level: u32,
    conjugated: bool,
    dim: usize,
    entries: Vec<BigComplex>,
}

impl RepMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_level(&self) -> u32 {
        self.n_level
    }

    pub fn conjugated(&self) -> bool {
        self.conjugated
    }

    pub fn entry(&self, h: usize, hp: usize) -> &BigComplex {
        &self.entries[h * self.dim + hp]
    }

    pub fn row(&self, h: usize) -> &[BigComplex] {
        &self.entries[h * self.dim..(h + 1) * self.dim]
    }

    pub fn apply(&self, v: &[BigComplex]) -> Vec<BigComplex> {
        let prec = v
            .first()
            .map(|z| z.prec().0)
            .unwrap_or_else(|| self.entries[0].prec().0);
        (0..self.dim)
            .map(|h| {
                let mut acc = Complex::new(prec);
                for hp in 0..self.dim {
                    acc += self.entry(h, hp).clone() * &v[hp];
                }
                acc
            })
            .collect()
    }

    fn identity(n_level: u32, conjugated: bool, ctx: &PrecisionContext) -> Self {
        let dim = 2 * n_level as usize;
        let mut entries = vec![ctx.complex_zero(); dim * dim];
        for h in 0..dim {
            entries[h * dim + h] = ctx.complex_from_f64(1.0, 0.0);
        }
        RepMatrix {
            n_level,
            conjugated,
            dim,
            entries,
        }
    }
}

/// One word generator: the decomposition writes every element as a product of
/// `S`, `S^{-1}`, and translation powers, possibly closed by `S^4 = (I, -1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gen {
    S,
    SInv,
    T(i128),
}

fn gen_element(g: Gen) -> MetaplecticElement {
    match g {
        Gen::S => MetaplecticElement::gen_s(),
        Gen::SInv => MetaplecticElement {
            mat: [0, 1, -1, 0],
            sign: 1,
        },
        Gen::T(n) => MetaplecticElement::gen_t(n),
    }
}

/// Writes `mat` as an ordered product of generators (left to right) by
/// Euclidean reduction of the bottom row; word length is O(log max |entry|).
fn word_for(mat: [i128; 4]) -> Vec<Gen> {
    let [mut a, mut b, mut c, mut d] = mat;
    let mut inverse_tail: Vec<Gen> = Vec::new();
    while c != 0 {
        let q = -round_div(d, c);
        if q != 0 {
            // right-multiply by T^q
            b += q * a;
            d += q * c;
            inverse_tail.push(Gen::T(-q));
        }
        // right-multiply by S: (a,b;c,d) -> (b,-a; d,-c)
        let (na, nb, nc, nd) = (b, -a, d, -c);
        a = na;
        b = nb;
        c = nc;
        d = nd;
        inverse_tail.push(Gen::SInv);
    }
    debug_assert!(a == d && (a == 1 || a == -1));
    let mut word: Vec<Gen> = Vec::new();
    if a == 1 {
        if b != 0 {
            word.push(Gen::T(b));
        }
    } else {
        // (-1, b; 0, -1) = S^2 T^{-b}
        word.push(Gen::S);
        word.push(Gen::S);
        if b != 0 {
            word.push(Gen::T(-b));
        }
    }
    word.extend(inverse_tail.into_iter().rev());
    word
}

/// Nearest integer to d/c in exact arithmetic, ties rounded up.
fn round_div(d: i128, c: i128) -> i128 {
    debug_assert!(c != 0);
    let (d, c) = if c < 0 { (-d, -c) } else { (d, c) };
    (2 * d + c).div_euclid(2 * c)
}

type CacheKey = ([i128; 4], i8, bool);

/// Evaluator for one level N at one precision, with a bounded cache keyed by
/// (matrix, sign, conjugation).  Cache hits return the stored matrix;
/// recomputation after eviction is deterministic, so values are bit-identical
/// either way.
pub struct WeilRep {
    n_level: u32,
    ctx: PrecisionContext,
    rho_s: OnceLock<Arc<RepMatrix>>,
    rho_s_conj: OnceLock<Arc<RepMatrix>>,
    rho_s4: OnceLock<Arc<RepMatrix>>,
    rho_s4_conj: OnceLock<Arc<RepMatrix>>,
    cache: Mutex<HashMap<CacheKey, Arc<RepMatrix>>>,
    cache_cap: usize,
}

impl WeilRep {
    pub fn new(n_level: u32, ctx: PrecisionContext) -> Self {
        let dim = 2 * n_level as usize;
        // keep the cache near 256 MB regardless of dimension
        let per_entry = dim * dim * 48 + 64;
        let cache_cap = (256usize << 20) / per_entry.max(1);
        WeilRep {
            n_level,
            ctx,
            rho_s: OnceLock::new(),
            rho_s_conj: OnceLock::new(),
            rho_s4: OnceLock::new(),
            rho_s4_conj: OnceLock::new(),
            cache: Mutex::new(HashMap::new()),
            cache_cap,
        }
    }

    pub fn n_level(&self) -> u32 {
        self.n_level
    }

    pub fn ctx(&self) -> &PrecisionContext {
        &self.ctx
    }

    fn dim(&self) -> usize {
        2 * self.n_level as usize
    }

    /// rho(S) (or its conjugate): entries `(2iN)^{-1/2} e(-h h'/2N)` with the
    /// principal root `(2iN)^{-1/2} = (2N)^{-1/2} e^{-i pi/4}`.
    fn rho_s_matrix(&self, conjugated: bool) -> Arc<RepMatrix> {
        let slot = if conjugated { &self.rho_s_conj } else { &self.rho_s };
        slot.get_or_init(|| {
            let dim = self.dim();
            let bits = self.ctx.bits();
            let inv_sqrt = Float::with_val(bits, 2 * self.n_level).recip().sqrt();
            let eighth = unit_circle_exp_ratio(if conjugated { 1 } else { -1 }, 8, &self.ctx);
            let kappa = Complex::with_val(bits, (&inv_sqrt, Float::new(bits))) * eighth;
            let two_n = dim as i64;
            let mut entries = Vec::with_capacity(dim * dim);
            for h in 0..dim {
                for hp in 0..dim {
                    let prod = (h as i64 * hp as i64).rem_euclid(two_n);
                    let sign = if conjugated { 1 } else { -1 };
                    let root = unit_circle_exp_ratio(sign * prod, two_n as u64, &self.ctx);
                    entries.push(kappa.clone() * root);
                }
            }
            Arc::new(RepMatrix {
                n_level: self.n_level,
                conjugated,
                dim,
                entries,
            })
        })
        .clone()
    }

    /// rho(S^4) = rho of the central element (I, -1), formed honestly as the
    /// fourth power of rho(S).
    fn rho_s4_matrix(&self, conjugated: bool) -> Arc<RepMatrix> {
        let slot = if conjugated {
            &self.rho_s4_conj
        } else {
            &self.rho_s4
        };
        slot.get_or_init(|| {
            let s = self.rho_s_matrix(conjugated);
            let s2 = self.matmul(&s, &s);
            Arc::new(self.matmul(&s2, &s2))
        })
        .clone()
    }

    fn matmul(&self, a: &RepMatrix, b: &RepMatrix) -> RepMatrix {
        let dim = a.dim;
        let bits = self.ctx.bits();
        let mut entries = vec![Complex::new(bits); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = Complex::new(bits);
                for t in 0..dim {
                    acc += a.entry(i, t).clone() * b.entry(t, j);
                }
                entries[i * dim + j] = acc;
            }
        }
        RepMatrix {
            n_level: a.n_level,
            conjugated: a.conjugated,
            dim,
            entries,
        }
    }

    /// Left-multiplies `acc` by rho(T^n): row h scales by `e(+-n h^2 / 4N)`.
    fn apply_t_rows(&self, acc: &mut RepMatrix, n: i128, conjugated: bool) {
        let dim = acc.dim;
        let four_n = 4 * self.n_level as i64;
        let n_red = n.rem_euclid(four_n as i128) as i64;
        for h in 0..dim {
            let hh = (h as i64 * h as i64).rem_euclid(four_n);
            let sign = if conjugated { -1 } else { 1 };
            let phase = unit_circle_exp_ratio(sign * ((n_red * hh) % four_n), four_n as u64, &self.ctx);
            for j in 0..dim {
                let idx = h * dim + j;
                acc.entries[idx] *= &phase;
            }
        }
    }

    fn apply_t_vec(&self, v: &mut [BigComplex], n: i128, conjugated: bool) {
        let four_n = 4 * self.n_level as i64;
        let n_red = n.rem_euclid(four_n as i128) as i64;
        for (h, slot) in v.iter_mut().enumerate() {
            let hh = (h as i64 * h as i64).rem_euclid(four_n);
            let sign = if conjugated { -1 } else { 1 };
            let phase = unit_circle_exp_ratio(sign * ((n_red * hh) % four_n), four_n as u64, &self.ctx);
            *slot *= &phase;
        }
    }

    /// The generator word for `elt`, closed with S^4 when the composed
    /// cocycle sign differs from the requested one.
    fn signed_word(&self, elt: &MetaplecticElement) -> (Vec<Gen>, bool) {
        let word = word_for(elt.mat);
        let mut composed = MetaplecticElement::identity();
        for g in &word {
            composed = mp_compose(&composed, &gen_element(*g));
        }
        debug_assert_eq!(composed.mat, elt.mat, "word decomposition broke");
        (word, composed.sign != elt.sign)
    }

    /// Full representation matrix for `elt`.
    pub fn evaluate(&self, elt: &MetaplecticElement, conjugated: bool) -> Arc<RepMatrix> {
        let key: CacheKey = (elt.mat, elt.sign, conjugated);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let (word, needs_s4) = self.signed_word(elt);
        let mut acc = RepMatrix::identity(self.n_level, conjugated, &self.ctx);
        for g in word.iter().rev() {
            match g {
                Gen::T(n) => self.apply_t_rows(&mut acc, *n, conjugated),
                Gen::S => acc = self.matmul(&self.rho_s_matrix(conjugated), &acc),
                Gen::SInv => {
                    let s_inv = self.rho_s_inv_matrix(conjugated);
                    acc = self.matmul(&s_inv, &acc);
                }
            }
        }
        if needs_s4 {
            acc = self.matmul(&self.rho_s4_matrix(conjugated), &acc);
        }
        let out = Arc::new(acc);
        let mut cache = self.cache.lock().unwrap();
        if cache.len() < self.cache_cap {
            // concurrent computations of the same key keep the first stored
            // value as the canonical one
            return cache.entry(key).or_insert(out).clone();
        }
        out
    }

    /// rho(S)^{-1} = conjugate transpose of rho(S); the matrix is symmetric,
    /// so this is the entrywise conjugate.
    fn rho_s_inv_matrix(&self, conjugated: bool) -> RepMatrix {
        let s = self.rho_s_matrix(conjugated);
        let entries = s.entries.iter().map(|z| z.clone().conj()).collect();
        RepMatrix {
            n_level: s.n_level,
            conjugated: s.conjugated,
            dim: s.dim,
            entries,
        }
    }

    /// Applies rho(elt) to a coefficient vector without materializing the
    /// matrix: translation factors are diagonal and each S factor is one
    /// dense O((2N)^2) pass.
    pub fn apply(&self, elt: &MetaplecticElement, conjugated: bool, v: &[BigComplex]) -> Vec<BigComplex> {
        debug_assert_eq!(v.len(), self.dim());
        let (word, needs_s4) = self.signed_word(elt);
        let mut acc: Vec<BigComplex> = v.to_vec();
        for g in word.iter().rev() {
            match g {
                Gen::T(n) => self.apply_t_vec(&mut acc, *n, conjugated),
                Gen::S => acc = self.rho_s_matrix(conjugated).apply(&acc),
                Gen::SInv => acc = self.rho_s_inv_matrix(conjugated).apply(&acc),
            }
        }
        if needs_s4 {
            acc = self.rho_s4_matrix(conjugated).apply(&acc);
        }
        acc
    }
}

/// Uncached single evaluation of the representation.
pub fn rho_evaluate(
    elt: &MetaplecticElement,
    n_level: u32,
    conjugated: bool,
    ctx: &PrecisionContext,
) -> RepMatrix {
    let rep = WeilRep::new(n_level, *ctx);
    Arc::try_unwrap(rep.evaluate(elt, conjugated)).unwrap_or_else(|arc| (*arc).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigarith::{complex_abs, make_context};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ctx() -> PrecisionContext {
        make_context(30).unwrap()
    }

    fn random_element(rng: &mut StdRng, len: usize) -> MetaplecticElement {
        // random short word keeps entries well inside i128
        let mut m = MetaplecticElement::identity();
        for _ in 0..len {
            let g = if rng.gen_bool(0.5) {
                MetaplecticElement::gen_s()
            } else {
                MetaplecticElement::gen_t(rng.gen_range(-6i128..=6))
            };
            m = mp_compose(&m, &g);
        }
        if rng.gen_bool(0.5) {
            m = MetaplecticElement {
                mat: m.mat,
                sign: -m.sign,
            };
        }
        m
    }

    #[test]
    fn canonical_lift_basics() {
        let id = canonical_lift([1, 0, 0, 1]).unwrap();
        assert_eq!(id, MetaplecticElement::identity());
        let s = canonical_lift([0, -1, 1, 0]).unwrap();
        assert_eq!(s.sign(), 1);
        let minus_id = canonical_lift([-1, 0, 0, -1]).unwrap();
        assert_eq!(minus_id.sign(), 1);
        assert!(canonical_lift([1, 1, 1, 1]).is_err());
    }

    #[test]
    fn compose_t_and_s() {
        let t = MetaplecticElement::gen_t(1);
        let tt = mp_compose(&t, &t);
        assert_eq!(tt.matrix(), [1, 2, 0, 1]);
        assert_eq!(tt.sign(), 1);

        // S * S = canonical lift of -I (phi = j_{-I} = i)
        let s = MetaplecticElement::gen_s();
        let ss = mp_compose(&s, &s);
        assert_eq!(ss.matrix(), [-1, 0, 0, -1]);
        assert_eq!(ss.sign(), 1);

        // S^4 = (I, -1)
        let s4 = mp_compose(&ss, &ss);
        assert_eq!(s4.matrix(), [1, 0, 0, 1]);
        assert_eq!(s4.sign(), -1);

        // S^8 = identity
        let s8 = mp_compose(&s4, &s4);
        assert_eq!(s8, MetaplecticElement::identity());
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let a = random_element(&mut rng, 4);
            let b = random_element(&mut rng, 4);
            let c = random_element(&mut rng, 4);
            let left = mp_compose(&mp_compose(&a, &b), &c);
            let right = mp_compose(&a, &mp_compose(&b, &c));
            assert_eq!(left, right);
        }
    }

    #[test]
    fn inverse_through_group_law() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_element(&mut rng, 5);
            let inv = a.inverse();
            let prod = mp_compose(&a, &inv);
            assert_eq!(prod, MetaplecticElement::identity());
        }
    }

    #[test]
    fn rho_t_diagonal_entry() {
        let c = ctx();
        let rep = rho_evaluate(&MetaplecticElement::gen_t(1), 11, false, &c);
        // entry (7,7) = e(49/44) = e(5/44)
        let want = unit_circle_exp_ratio(5, 44, &c);
        let got = rep.entry(7, 7).clone();
        assert!(complex_abs(&(got - want)) < c.digits_tol(5));
        // off-diagonal vanishes
        assert!(complex_abs(rep.entry(3, 7)) < c.digits_tol(5));
        for h in 0..rep.dim() {
            let m = complex_abs(rep.entry(h, h));
            assert!((m - 1u32).abs() < c.digits_tol(5));
        }
    }

    #[test]
    fn rho_s_entry_level_one() {
        let c = ctx();
        let rep = rho_evaluate(&MetaplecticElement::gen_s(), 1, false, &c);
        // entry (0,0) = (1/sqrt 2) e^{-i pi/4}
        let want = unit_circle_exp_ratio(-1, 8, &c) / c.real_from_f64(2.0).sqrt();
        assert!(complex_abs(&(rep.entry(0, 0).clone() - want)) < c.digits_tol(5));
        // constant modulus (2N)^{-1/2}
        let inv_sqrt = c.real_from_f64(2.0).recip().sqrt();
        for h in 0..2 {
            for hp in 0..2 {
                let m = complex_abs(rep.entry(h, hp));
                assert!((m - inv_sqrt.clone()).abs() < c.digits_tol(5));
            }
        }
    }

    #[test]
    fn rho_word_matches_generator_product() {
        let c = ctx();
        let n = 5u32;
        let rep = WeilRep::new(n, c);
        let t = MetaplecticElement::gen_t(1);
        let s = MetaplecticElement::gen_s();
        let tst = mp_compose(&mp_compose(&t, &s), &t);
        let direct = rep.evaluate(&tst, false);
        let product = {
            let rt = rep.evaluate(&t, false);
            let rs = rep.evaluate(&s, false);
            let ts = rep.matmul(&rt, &rs);
            rep.matmul(&ts, &rt)
        };
        for h in 0..direct.dim() {
            for hp in 0..direct.dim() {
                let d = complex_abs(&(direct.entry(h, hp).clone() - product.entry(h, hp)));
                assert!(d < c.digits_tol(5), "entry ({h},{hp}) differs by {d}");
            }
        }
    }

    #[test]
    fn rho_is_multiplicative() {
        let c = ctx();
        for &(n, conj) in &[(3u32, false), (4u32, true)] {
            let rep = WeilRep::new(n, c);
            let mut rng = StdRng::seed_from_u64(1000 + n as u64);
            for _ in 0..50 {
                let a = random_element(&mut rng, 4);
                let b = random_element(&mut rng, 4);
                let ab = mp_compose(&a, &b);
                let lhs = rep.evaluate(&ab, conj);
                let ra = rep.evaluate(&a, conj);
                let rb = rep.evaluate(&b, conj);
                let rhs = rep.matmul(&ra, &rb);
                for h in 0..lhs.dim() {
                    for hp in 0..lhs.dim() {
                        let d = complex_abs(&(lhs.entry(h, hp).clone() - rhs.entry(h, hp)));
                        assert!(
                            d < c.digits_tol(5),
                            "multiplicativity broke at N={n}, ({h},{hp}): {d}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn rho_is_unitary() {
        let c = ctx();
        let rep = WeilRep::new(7, c);
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..20 {
            let m = random_element(&mut rng, 12);
            let mat = rep.evaluate(&m, rng.gen_bool(0.5));
            let x: Vec<_> = (0..mat.dim())
                .map(|_| c.complex_from_f64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let y = mat.apply(&x);
            let norm = |v: &[BigComplex]| {
                let mut acc = c.real_zero();
                for z in v {
                    acc += crate::bigarith::complex_abs_sq(z);
                }
                acc.sqrt()
            };
            let d = (norm(&x) - norm(&y)).abs();
            assert!(d < c.digits_tol(5), "unitarity broke: {d}");
        }
    }

    #[test]
    fn apply_matches_evaluate() {
        let c = ctx();
        let rep = WeilRep::new(6, c);
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..10 {
            let m = random_element(&mut rng, 6);
            let conj = rng.gen_bool(0.5);
            let x: Vec<_> = (0..rep.dim())
                .map(|_| c.complex_from_f64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let via_matrix = rep.evaluate(&m, conj).apply(&x);
            let via_word = rep.apply(&m, conj, &x);
            for (a, b) in via_matrix.iter().zip(&via_word) {
                assert!(complex_abs(&(a.clone() - b)) < c.digits_tol(5));
            }
        }
    }

    #[test]
    fn cache_returns_identical_matrices() {
        let c = ctx();
        let rep = WeilRep::new(3, c);
        let m = canonical_lift([2, 1, 1, 1]).unwrap();
        let a = rep.evaluate(&m, false);
        let b = rep.evaluate(&m, false);
        assert!(Arc::ptr_eq(&a, &b));
        // conjugate evaluation is the entrywise conjugate
        let cbar = rep.evaluate(&m, true);
        for h in 0..a.dim() {
            for hp in 0..a.dim() {
                let d = complex_abs(&(a.entry(h, hp).clone().conj() - cbar.entry(h, hp)));
                assert!(d < c.digits_tol(5));
            }
        }
    }
}
