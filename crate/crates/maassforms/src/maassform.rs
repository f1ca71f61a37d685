//! Data model for the expansions: index sets, principal parts, coefficient
//! tables, discriminant labels, truncated evaluation, and the pairing sum.
//!
//! Indices `(n, h)` live on the grid `h in Z/2NZ`, `n == sigma h^2 (mod 4N)`
//! where `sigma = +1` for rho and `-1` for the conjugate representation; the
//! expansion of the component `f_h` collects `q^{n/4N}` terms over that
//! residue class.  Discriminant labels satisfy `Delta == r^2 (mod 4N)` with
//! `n = sigma Delta`, so a coefficient reported at `Delta` is stored at
//! `(sigma Delta, r)` for the smallest admissible residue `r`.

use crate::bigarith::{
    ensure_finite_complex, unit_circle_exp, BigComplex, BigReal, PrecisionContext,
};
use crate::error::{Error, Result};
use crate::specialfun::{w_kernel, WeightParam};
use std::collections::{BTreeMap, HashMap};

/// Harmonic mode solves for both the holomorphic part and the
/// incomplete-gamma part; holomorphic mode sets the non-holomorphic part to
/// zero and restricts every index to n > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Harmonic,
    Holomorphic,
}

/// Level, weight, representation choice and mode for one family of forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarmonicParams {
    n_level: u32,
    k: WeightParam,
    conjugated: bool,
    mode: Mode,
}

impl HarmonicParams {
    pub fn new(n_level: u32, k: WeightParam, conjugated: bool, mode: Mode) -> Result<Self> {
        if n_level == 0 {
            return Err(Error::invalid("level N must be positive".to_string()));
        }
        if k.twice() > 2 {
            return Err(Error::invalid(format!(
                "weight {k} > 1 is outside the harmonic theory"
            )));
        }
        if mode == Mode::Harmonic {
            // uniqueness assumption: k = 1/2 or k < 0; the W kernel also needs
            // genuinely half-integral weight for its incomplete gamma factors
            if !(k.twice() == 1 || k.twice() < 0) {
                return Err(Error::invalid(format!(
                    "harmonic mode needs k = 1/2 or k < 0, got {k}"
                )));
            }
            if !k.is_half_odd() {
                return Err(Error::invalid(format!(
                    "harmonic mode needs half-integral weight, got {k}"
                )));
            }
        }
        Ok(HarmonicParams {
            n_level,
            k,
            conjugated,
            mode,
        })
    }

    pub fn n_level(&self) -> u32 {
        self.n_level
    }

    pub fn weight(&self) -> WeightParam {
        self.k
    }

    pub fn conjugated(&self) -> bool {
        self.conjugated
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Residue sign: +1 for rho, -1 for the conjugate representation.
    pub fn sigma(&self) -> i64 {
        if self.conjugated {
            -1
        } else {
            1
        }
    }

    pub fn two_n(&self) -> u32 {
        2 * self.n_level
    }

    pub fn four_n(&self) -> i64 {
        4 * self.n_level as i64
    }

    /// True when `(n, h)` satisfies the residue congruence
    /// `n == sigma h^2 (mod 4N)`.
    pub fn index_admissible(&self, n: i64, h: u32) -> bool {
        let four_n = self.four_n();
        let hh = (h as i64 * h as i64).rem_euclid(four_n);
        n.rem_euclid(four_n) == (self.sigma() * hh).rem_euclid(four_n)
    }
}

/// The prescribed Fourier polynomial `sum a(n, h) q^{n/4N} e_h` over
/// exponents `n <= 0` that pins down the form.
#[derive(Debug, Clone)]
pub struct PrincipalPart {
    terms: BTreeMap<(i64, u32), BigComplex>,
    pole_depth: u32,
}

impl PrincipalPart {
    /// Validates indices and drops exact zeros.  Every surviving term must
    /// satisfy `n <= 0` and the residue congruence; at least one nonzero term
    /// must remain.
    pub fn new(
        params: &HarmonicParams,
        terms: impl IntoIterator<Item = ((i64, u32), BigComplex)>,
    ) -> Result<Self> {
        let two_n = params.two_n();
        let mut map = BTreeMap::new();
        for ((n, h), value) in terms {
            ensure_finite_complex(&value)?;
            if value.real().is_zero() && value.imag().is_zero() {
                continue;
            }
            let h = h % two_n;
            if n > 0 {
                return Err(Error::invalid(format!(
                    "principal part exponent n = {n} must be <= 0"
                )));
            }
            if !params.index_admissible(n, h) {
                return Err(Error::invalid(format!(
                    "principal part index (n, h) = ({n}, {h}) violates n == sigma h^2 (mod 4N)"
                )));
            }
            map.insert((n, h), value);
        }
        if map.is_empty() {
            return Err(Error::invalid(
                "principal part needs at least one nonzero term".to_string(),
            ));
        }
        let pole_depth = map.keys().map(|&(n, _)| n.unsigned_abs() as u32).max().unwrap_or(0);
        Ok(PrincipalPart {
            terms: map,
            pole_depth,
        })
    }

    pub fn terms(&self) -> &BTreeMap<(i64, u32), BigComplex> {
        &self.terms
    }

    /// Max |n| over the terms: the pole depth in the `q^{1/4N}` grading.
    pub fn pole_depth(&self) -> u32 {
        self.pole_depth
    }

    pub fn get(&self, n: i64, h: u32) -> Option<&BigComplex> {
        self.terms.get(&(n, h))
    }
}

/// The ordered index set D of unknowns: all `(n, h)` with
/// `0 < |n| <= 4 N M0` in the residue class of h (n > 0 only in holomorphic
/// mode), ordered lexicographically by `(h, n)`.
#[derive(Debug, Clone)]
pub struct CoeffIndexSet {
    entries: Vec<(i64, u32)>,
    positions: HashMap<(i64, u32), usize>,
}

impl CoeffIndexSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(i64, u32)> {
        self.entries.iter()
    }

    pub fn at(&self, i: usize) -> (i64, u32) {
        self.entries[i]
    }

    pub fn position(&self, n: i64, h: u32) -> Option<usize> {
        self.positions.get(&(n, h)).copied()
    }
}

/// Builds the index set for truncation point `m0`.
pub fn build_index_set(params: &HarmonicParams, m0: u32) -> CoeffIndexSet {
    let four_n = params.four_n();
    let bound = four_n * m0 as i64;
    let mut entries = Vec::new();
    for h in 0..params.two_n() {
        let hh = (h as i64 * h as i64).rem_euclid(four_n);
        let r0 = (params.sigma() * hh).rem_euclid(four_n);
        for j in -(m0 as i64)..=(m0 as i64) {
            let n = r0 + four_n * j;
            if n == 0 || n.abs() > bound {
                continue;
            }
            if params.mode() == Mode::Holomorphic && n <= 0 {
                continue;
            }
            entries.push((n, h));
        }
    }
    // already grouped by h ascending with n ascending inside each class
    let positions = entries
        .iter()
        .enumerate()
        .map(|(i, &key)| (key, i))
        .collect();
    CoeffIndexSet { entries, positions }
}

/// Maps a discriminant table label to its storage index
/// `(n, h) = (sigma Delta, r)` with the smallest residue `r in [0, 2N)`
/// satisfying `Delta == r^2 (mod 4N)`.
pub fn delta_to_index(params: &HarmonicParams, delta: i64) -> Result<(i64, u32)> {
    if delta == 0 {
        return Err(Error::invalid("discriminant 0 has no index".to_string()));
    }
    let four_n = params.four_n();
    let target = delta.rem_euclid(four_n);
    let r = (0..params.two_n())
        .find(|&h| (h as i64 * h as i64).rem_euclid(four_n) == target)
        .ok_or_else(|| {
            Error::MissingData(format!(
                "discriminant {delta} not represented: no r with r^2 == {delta} (mod {four_n})"
            ))
        })?;
    Ok((params.sigma() * delta, r))
}

/// Inverse of [`delta_to_index`] on the n-coordinate.
pub fn index_to_delta(params: &HarmonicParams, n: i64) -> i64 {
    params.sigma() * n
}

/// One computed coefficient with its certified error bound and the phase that
/// produced it.
#[derive(Debug, Clone)]
pub struct TableEntry {
    pub value: BigComplex,
    pub err_bound: BigReal,
    pub phase: u8,
}

/// Run parameters recorded alongside the computed coefficients.
#[derive(Debug, Clone)]
pub struct RunMetadata {
    pub y: BigReal,
    pub q: u32,
    pub m0: u32,
    pub eps: BigReal,
    pub precision_digits: u32,
    pub residual_bound: Option<BigReal>,
    pub inv_norm: Option<BigReal>,
    pub coeff_bound: Option<BigReal>,
}

/// Computed coefficients `c(n, h)` for one form, immutable once built.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    params: HarmonicParams,
    principal: PrincipalPart,
    entries: BTreeMap<(i64, u32), TableEntry>,
    meta: RunMetadata,
}

impl CoefficientTable {
    pub fn new(
        params: HarmonicParams,
        principal: PrincipalPart,
        entries: BTreeMap<(i64, u32), TableEntry>,
        meta: RunMetadata,
    ) -> Result<Self> {
        for (&(n, h), entry) in &entries {
            if !params.index_admissible(n, h % params.two_n()) {
                return Err(Error::invalid(format!(
                    "table index ({n}, {h}) violates the residue congruence"
                )));
            }
            if entry.err_bound.is_sign_negative() || entry.err_bound.is_zero() {
                return Err(Error::invalid(format!(
                    "table entry ({n}, {h}) needs a positive error bound"
                )));
            }
        }
        Ok(CoefficientTable {
            params,
            principal,
            entries,
            meta,
        })
    }

    pub fn params(&self) -> &HarmonicParams {
        &self.params
    }

    pub fn principal(&self) -> &PrincipalPart {
        &self.principal
    }

    pub fn entries(&self) -> &BTreeMap<(i64, u32), TableEntry> {
        &self.entries
    }

    pub fn meta(&self) -> &RunMetadata {
        &self.meta
    }

    pub fn get(&self, n: i64, h: u32) -> Option<&TableEntry> {
        self.entries.get(&(n, h))
    }

    pub fn get_by_delta(&self, delta: i64) -> Result<&TableEntry> {
        let (n, h) = delta_to_index(&self.params, delta)?;
        self.entries.get(&(n, h)).ok_or_else(|| {
            Error::MissingData(format!("no coefficient stored at Delta = {delta} -> ({n}, {h})"))
        })
    }

    /// With a fresh entry map (phase-2 extension builds a new table).
    pub fn with_entries(&self, entries: BTreeMap<(i64, u32), TableEntry>) -> Self {
        CoefficientTable {
            params: self.params,
            principal: self.principal.clone(),
            entries,
            meta: self.meta.clone(),
        }
    }

    /// Componentwise value of the truncated series at tau: the principal part
    /// with its own v-profile plus every stored coefficient times its W
    /// factor,
    /// `f_h(tau) = sum a(n,h) e^{-2 pi n v/4N} e_{4N}(n u)
    ///           + sum c(n,h) W(n v/4N) e_{4N}(n u)`.
    pub fn evaluate_truncated(
        &self,
        tau: &BigComplex,
        ctx: &PrecisionContext,
    ) -> Result<Vec<BigComplex>> {
        ensure_finite_complex(tau)?;
        let v = tau.imag();
        if !(v.is_sign_positive() && !v.is_zero()) {
            return Err(Error::domain("evaluation needs Im tau > 0".to_string()));
        }
        let two_n = self.params.two_n() as usize;
        let four_n = self.params.four_n();
        let u = tau.real();
        let mut out = vec![ctx.complex_zero(); two_n];

        for (&(n, h), value) in self.principal.terms() {
            let frac = ctx.real_from_i64(n) / ctx.real_from_i64(four_n);
            let phase = unit_circle_exp(&(frac.clone() * u), ctx)?;
            let radial = (-(ctx.two_pi() * frac * v)).exp();
            out[h as usize] += value.clone() * phase * radial;
        }
        for (&(n, h), entry) in &self.entries {
            let frac = ctx.real_from_i64(n) / ctx.real_from_i64(four_n);
            let phase = unit_circle_exp(&(frac.clone() * u), ctx)?;
            let w = w_kernel(self.params.weight(), &(frac * v), ctx)?;
            out[h as usize] += entry.value.clone() * phase * w;
        }
        Ok(out)
    }
}

/// The pairing sum `{g, f} = sum_h sum_{n <= 0} a(n, h) b(-n, h)` between a
/// principal part and the coefficients of a holomorphic form; it depends on
/// the principal part only.
pub fn pairing(
    principal: &PrincipalPart,
    cusp_coeffs: &BTreeMap<(i64, u32), BigComplex>,
    ctx: &PrecisionContext,
) -> Result<BigComplex> {
    let mut acc = ctx.complex_zero();
    for (&(n, h), a) in principal.terms() {
        let b = cusp_coeffs.get(&(-n, h)).ok_or_else(|| {
            Error::MissingData(format!("pairing needs the cusp coefficient b({}, {h})", -n))
        })?;
        acc += a.clone() * b;
    }
    Ok(acc)
}
