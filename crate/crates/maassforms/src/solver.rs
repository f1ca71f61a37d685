//! Phase 1: horocycle sampling, assembly of the linear system `V D + W = 0`,
//! high-precision LU solve and error certification.  Phase 2: extension of a
//! solved coefficient block to arbitrary index ranges.
//!
//! Assembly evaluates, for every sample point `z_m` on the horocycle at
//! height Y, the pullback `z_m^* = T_m^{-1} z_m`, the automorphy factor
//! `phi_{T_m}(z_m^*)^{2k}` and the representation matrix `rho(T_m)`; the
//! matrix entries are
//!
//! ```text
//! V~[(n,h),(l,h')] = (1/2Q) sum_m phi^{2k} rho_{h h'}(T_m)
//!                            W(l y_m^*/4N) e_{4N}(l x_m^* - n x_m)
//! ```
//!
//! with the diagonal correction `V = V~ - diag W(n Y/4N)` and the
//! inhomogeneous part collecting the principal-part terms.  Sums over m run
//! in fixed ascending order and rows are updated independently, so results
//! are bit-identical regardless of thread count.

use crate::bigarith::{
    complex_abs, unit_circle_exp, unit_circle_exp_ratio, BigComplex, BigReal,
    PrecisionContext,
};
use crate::error::{Error, Result};
use crate::fundom::{automorphy_j2k, pullback};
use crate::maassform::{
    build_index_set, CoeffIndexSet, CoefficientTable, HarmonicParams, Mode, PrincipalPart,
    RunMetadata, TableEntry,
};
use crate::specialfun::{tail_model_ln, truncation_m0, w_kernel};
use crate::weilrep::WeilRep;
use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Assign, Complex, Float};
use std::collections::{BTreeMap, HashMap};

/// Full parameter bundle for one phase-1 computation.  `m0 = 0` and `q = 0`
/// request automatic sizing from `eps` and `y`.
#[derive(Debug, Clone)]
pub struct SolveJob {
    pub params: HarmonicParams,
    pub principal: PrincipalPart,
    pub eps: BigReal,
    pub y: BigReal,
    pub q: u32,
    pub m0: u32,
    pub ctx: PrecisionContext,
}

impl SolveJob {
    /// Validates ranges and resolves automatic M0/Q.
    pub fn resolve(&self) -> Result<(u32, u32)> {
        let y64 = self.y.to_f64();
        if !(y64 > 0.0 && y64 < 0.75f64.sqrt()) {
            return Err(Error::invalid(format!(
                "height Y = {y64} outside (0, sqrt(3)/2)"
            )));
        }
        if self.eps.is_zero() || self.eps.is_sign_negative() {
            return Err(Error::invalid("eps must be positive".to_string()));
        }
        let k = self.params.weight();
        let depth = self.principal.pole_depth();
        let m_of_y = truncation_m0(self.params.n_level(), k, depth, &self.y, &self.eps)?;
        let m0 = if self.m0 != 0 { self.m0 } else { m_of_y };
        let q = if self.q != 0 {
            self.q
        } else {
            // the default margin over M0, raised when an explicitly small M0
            // would let the height-Y tail alias back into the retained rows
            let margin = m0 + (10u32).max(m0.div_ceil(5));
            let alias = (m_of_y + m0).div_ceil(2) + 5;
            margin.max(alias)
        };
        if q <= m0 {
            return Err(Error::invalid(format!("Q = {q} must exceed M0 = {m0}")));
        }
        Ok((m0, q))
    }
}

/// The 2Q equally spaced points `z_m = x_m + iY`, `x_m = (1-2m)/(4Q)`, in the
/// order `m = 1-Q, ..., Q`.
pub fn horocycle_points(y: &BigReal, q: u32, ctx: &PrecisionContext) -> Vec<BigComplex> {
    let mut out = Vec::with_capacity(2 * q as usize);
    for m in (1 - q as i64)..=(q as i64) {
        let x = ctx.real_from_ratio(1 - 2 * m, 4 * q as u64);
        out.push(ctx.complex_from(x, Float::with_val(ctx.bits(), y)));
    }
    out
}

/// Dense row-major complex matrix at context precision.
#[derive(Debug, Clone)]
pub struct CMatrix {
    n: usize,
    data: Vec<BigComplex>,
}

impl CMatrix {
    pub fn zeros(n: usize, ctx: &PrecisionContext) -> Self {
        CMatrix {
            n,
            data: vec![Complex::new(ctx.bits()); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &BigComplex {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigComplex) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[BigComplex] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Max row sum of |entries|, in double precision (diagnostics only).
    pub fn norm_inf_f64(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .map(|z| z.real().to_f64().hypot(z.imag().to_f64()))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[BigComplex], ctx: &PrecisionContext) -> Vec<BigComplex> {
        (0..self.n)
            .map(|i| {
                let mut acc = Complex::new(ctx.bits());
                let mut tmp = Complex::new(ctx.bits());
                for (a, b) in self.row(i).iter().zip(x) {
                    tmp.assign(a);
                    tmp *= b;
                    acc += &tmp;
                }
                acc
            })
            .collect()
    }
}

/// The assembled square system `V D + W = 0` over the index set D.
pub struct LinearSystem {
    pub v: CMatrix,
    pub wvec: Vec<BigComplex>,
    pub index: CoeffIndexSet,
}

struct SampleData {
    /// phi^{2k} at the pullback of z_m
    jfac: BigComplex,
    /// rho(T_m), cached per sample
    rho: std::sync::Arc<crate::weilrep::RepMatrix>,
    /// per column (l, h'): W(l y*/4N) e_{4N}(l x*)
    col_factor: Vec<BigComplex>,
    /// (rho(T_m) . principal-part vector at z*)_h
    rho_pp: Vec<BigComplex>,
    /// per row (n, h): e_{4N}(-n x_m), exact root of unity
    row_phase: Vec<BigComplex>,
}

fn sample_data(
    job: &SolveJob,
    rep: &WeilRep,
    index: &CoeffIndexSet,
    q: u32,
    m_ord: i64,
    z_m: &BigComplex,
) -> Result<SampleData> {
    let ctx = &job.ctx;
    let params = &job.params;
    let four_n = params.four_n();
    let pb = pullback(z_m, ctx)?;
    let jfac = automorphy_j2k(&pb.map, &pb.z_star, params.weight(), ctx)?;
    let rho = rep.evaluate(&pb.map, params.conjugated());

    let x_star = pb.z_star.real().clone();
    let y_star = pb.z_star.imag().clone();

    // columns: W(l y*/4N) e(l x*/4N); the value depends on l only, and paired
    // classes h' and 2N - h' share their residue class, so cache by l
    let mut by_l: HashMap<i64, BigComplex> = HashMap::new();
    let mut col_factor = Vec::with_capacity(index.len());
    for &(l, _) in index.iter() {
        if let Some(v) = by_l.get(&l) {
            col_factor.push(v.clone());
            continue;
        }
        let frac = ctx.real_from_i64(l) / ctx.real_from_i64(four_n);
        let w = w_kernel(params.weight(), &(frac.clone() * &y_star), ctx)?;
        let phase = unit_circle_exp(&(frac * &x_star), ctx)?;
        let v = phase * w;
        by_l.insert(l, v.clone());
        col_factor.push(v);
    }

    // principal part at the pullback point, then rho applied to it
    let two_n = params.two_n() as usize;
    let mut pp_vec = vec![ctx.complex_zero(); two_n];
    for (&(l, h), a) in job.principal.terms() {
        let frac = ctx.real_from_i64(l) / ctx.real_from_i64(four_n);
        let radial = (-(ctx.two_pi() * frac.clone() * &y_star)).exp();
        let phase = unit_circle_exp(&(frac * &x_star), ctx)?;
        pp_vec[h as usize] += a.clone() * radial * phase;
    }
    let rho_pp = rho.apply(&pp_vec);

    // rows: e_{4N}(-n x_m) with x_m = (1-2m)/4Q exactly rational
    let denom = 16 * params.n_level() as i64 * q as i64;
    let mut by_n: HashMap<i64, BigComplex> = HashMap::new();
    let mut row_phase = Vec::with_capacity(index.len());
    for &(n, _) in index.iter() {
        if let Some(v) = by_n.get(&n) {
            row_phase.push(v.clone());
            continue;
        }
        let num = -(n.checked_mul(1 - 2 * m_ord).ok_or_else(|| {
            Error::invalid("phase numerator overflow".to_string())
        })?);
        let v = unit_circle_exp_ratio(num.rem_euclid(denom), denom as u64, ctx);
        by_n.insert(n, v.clone());
        row_phase.push(v);
    }

    Ok(SampleData {
        jfac,
        rho,
        col_factor,
        rho_pp,
        row_phase,
    })
}

/// Builds V and W for the job.  Pullbacks and representation matrices are
/// computed once per sample point; row accumulation runs over samples in
/// fixed ascending order.
pub fn assemble_system(job: &SolveJob) -> Result<LinearSystem> {
    let (m0, q) = job.resolve()?;
    assemble_system_sized(job, m0, q)
}

fn assemble_system_sized(job: &SolveJob, m0: u32, q: u32) -> Result<LinearSystem> {
    let ctx = &job.ctx;
    let params = &job.params;
    let index = build_index_set(params, m0);
    let d = index.len();
    if d == 0 {
        return Err(Error::invalid("empty index set".to_string()));
    }
    let rep = WeilRep::new(params.n_level(), *ctx);
    let points = horocycle_points(&job.y, q, ctx);

    let samples: Vec<SampleData> = points
        .par_iter()
        .enumerate()
        .map(|(i, z_m)| {
            let m_ord = (1 - q as i64) + i as i64;
            sample_data(job, &rep, &index, q, m_ord, z_m)
        })
        .collect::<Result<Vec<_>>>()?;

    let two_q = 2 * q;
    let four_n = params.four_n();

    // contiguous column blocks per residue class h'
    let mut blocks: Vec<(usize, usize, usize)> = Vec::new(); // (h', start, end)
    {
        let mut start = 0usize;
        while start < d {
            let h = index.at(start).1 as usize;
            let mut end = start + 1;
            while end < d && index.at(end).1 as usize == h {
                end += 1;
            }
            blocks.push((h, start, end));
            start = end;
        }
    }

    let mut v = CMatrix::zeros(d, ctx);
    let mut row_slices: Vec<(usize, &mut [BigComplex])> = Vec::with_capacity(d);
    {
        let mut rest: &mut [BigComplex] = &mut v.data;
        for i in 0..d {
            let (head, tail) = std::mem::take(&mut rest).split_at_mut(d);
            row_slices.push((i, head));
            rest = tail;
        }
    }
    let wvec: Vec<BigComplex> = row_slices
        .into_par_iter()
        .map(|(i, row)| -> Result<BigComplex> {
            let (n, h) = index.at(i);
            let mut wacc = Complex::new(ctx.bits());
            let mut tmp = Complex::new(ctx.bits());
            let mut scaled = Complex::new(ctx.bits());
            for s in &samples {
                // rf = phi^{2k} e(-n x_m)
                let mut rf = s.jfac.clone();
                rf *= &s.row_phase[i];
                tmp.assign(&rf);
                tmp *= &s.rho_pp[h as usize];
                wacc += &tmp;
                let rho_row = s.rho.row(h as usize);
                for &(hp, start, end) in &blocks {
                    scaled.assign(&rf);
                    scaled *= &rho_row[hp];
                    for col in start..end {
                        tmp.assign(&scaled);
                        tmp *= &s.col_factor[col];
                        row[col] += &tmp;
                    }
                }
            }
            for col in row.iter_mut() {
                *col /= two_q;
            }
            wacc /= two_q;
            // diagonal correction V - diag W(n Y / 4N)
            let frac = ctx.real_from_i64(n) / ctx.real_from_i64(four_n);
            let w_diag = w_kernel(params.weight(), &(frac.clone() * &job.y), ctx)?;
            row[i] -= &w_diag;
            // inhomogeneous part: subtract a(n,h) e^{-2 pi n Y/4N}
            if let Some(a) = job.principal.get(n, h) {
                let radial = (-(ctx.two_pi() * frac * &job.y)).exp();
                tmp.assign(a);
                tmp *= &radial;
                wacc -= &tmp;
            }
            Ok(wacc)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LinearSystem { v, wvec, index })
}

/// LU factorization with partial (row) pivoting; pivot magnitudes are
/// compared in double precision with ties broken by smallest row index, so
/// factorization order is deterministic.
#[derive(Debug)]
pub struct LuFactors {
    n: usize,
    data: Vec<BigComplex>,
    swaps: Vec<(usize, usize)>,
    pub pivot_growth: f64,
    norm_inf: f64,
    bits: u32,
}

fn abs2_f64(z: &BigComplex) -> f64 {
    let re = z.real().to_f64();
    let im = z.imag().to_f64();
    re * re + im * im
}

pub fn lu_factor(mut a: CMatrix, ctx: &PrecisionContext) -> Result<LuFactors> {
    let n = a.n;
    let norm_inf = a.norm_inf_f64();
    let mut swaps = Vec::new();
    // Columns of these systems carry wildly different natural scales (the
    // diagonal W factors decay exponentially in |n|), so singularity is
    // judged per column: a pivot is suspect only when elimination has
    // collapsed it relative to the column's own original magnitude.
    let col_scale: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| abs2_f64(a.get(i, j))).fold(0.0, f64::max))
        .collect();
    let rel = 2f64.powi(-((ctx.bits() / 2) as i32));
    let mut max_u = 0.0f64;

    for j in 0..n {
        // pivot scan
        let mut best = j;
        let mut best_mag = abs2_f64(a.get(j, j));
        for i in (j + 1)..n {
            let mag = abs2_f64(a.get(i, j));
            if mag > best_mag {
                best = i;
                best_mag = mag;
            }
        }
        let threshold = col_scale[j].sqrt() * rel;
        if best_mag.sqrt() <= threshold {
            return Err(Error::SingularSystem(format!(
                "pivot {:.3e} below threshold {threshold:.3e} at column {j} (dim {n})",
                best_mag.sqrt()
            )));
        }
        if best != j {
            for t in 0..n {
                let hi = best * n + t;
                let lo = j * n + t;
                a.data.swap(hi, lo);
            }
            swaps.push((j, best));
        }
        max_u = max_u.max(best_mag.sqrt());

        let pivot_inv = a.get(j, j).clone().recip();
        // trailing update, parallel over rows; each row only reads the pivot row
        let (head, tail) = a.data.split_at_mut((j + 1) * n);
        let pivot_row = &head[j * n..(j + 1) * n];
        tail.par_chunks_mut(n).for_each(|row| {
            if abs2_f64(&row[j]) == 0.0 {
                // keep the explicit zero; nothing to eliminate
                return;
            }
            let mut lij = row[j].clone();
            lij *= &pivot_inv;
            let mut tmp = Complex::new(lij.prec().0);
            for t in (j + 1)..n {
                tmp.assign(&lij);
                tmp *= &pivot_row[t];
                row[t] -= &tmp;
            }
            row[j] = lij;
        });
    }

    let growth = if norm_inf > 0.0 { max_u / norm_inf } else { 1.0 };
    Ok(LuFactors {
        n,
        data: a.data,
        swaps,
        pivot_growth: growth,
        norm_inf,
        bits: ctx.bits(),
    })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    fn at(&self, i: usize, j: usize) -> &BigComplex {
        &self.data[i * self.n + j]
    }

    /// Solves `V x = b`.
    pub fn solve(&self, b: &[BigComplex]) -> Vec<BigComplex> {
        let n = self.n;
        let mut x: Vec<BigComplex> = b.to_vec();
        for &(i, j) in &self.swaps {
            x.swap(i, j);
        }
        let mut tmp = Complex::new(self.bits);
        // L y = Pb (unit lower)
        for i in 1..n {
            let mut acc = x[i].clone();
            for t in 0..i {
                tmp.assign(self.at(i, t));
                tmp *= &x[t];
                acc -= &tmp;
            }
            x[i] = acc;
        }
        // U x = y
        for i in (0..n).rev() {
            let mut acc = x[i].clone();
            for t in (i + 1)..n {
                tmp.assign(self.at(i, t));
                tmp *= &x[t];
                acc -= &tmp;
            }
            acc /= self.at(i, i);
            x[i] = acc;
        }
        x
    }

    /// Solves `V^T x = b` using the same factors.
    pub fn solve_transpose(&self, b: &[BigComplex]) -> Vec<BigComplex> {
        let n = self.n;
        let mut x: Vec<BigComplex> = b.to_vec();
        let mut tmp = Complex::new(self.bits);
        // U^T y = b (lower triangular with diagonal)
        for i in 0..n {
            let mut acc = x[i].clone();
            for t in 0..i {
                tmp.assign(self.at(t, i));
                tmp *= &x[t];
                acc -= &tmp;
            }
            acc /= self.at(i, i);
            x[i] = acc;
        }
        // L^T z = y (unit upper)
        for i in (0..n).rev() {
            let mut acc = x[i].clone();
            for t in (i + 1)..n {
                tmp.assign(self.at(t, i));
                tmp *= &x[t];
                acc -= &tmp;
            }
            x[i] = acc;
        }
        // x = P^{-1} z: undo the swaps in reverse
        for &(i, j) in self.swaps.iter().rev() {
            x.swap(i, j);
        }
        x
    }
}

/// Factorizes and solves `V D = -W`.
pub fn lu_solve(system: &LinearSystem, ctx: &PrecisionContext) -> Result<Vec<BigComplex>> {
    let factors = lu_factor(system.v.clone(), ctx)?;
    let rhs: Vec<BigComplex> = system.wvec.iter().map(|w| -w.clone()).collect();
    Ok(factors.solve(&rhs))
}

/// Upper-biased estimate of `||V^{-1}||_inf`.
///
/// Dimensions up to 200 invert explicitly (the estimate is then exact);
/// larger systems run five rounds of the Hager/Higham 1-norm power iteration
/// on `V^{-T}` and scale the result by the safety factor 3.
pub fn inv_norm_estimate(factors: &LuFactors, ctx: &PrecisionContext) -> BigReal {
    if factors.n <= 200 {
        inv_norm_exact(factors, ctx)
    } else {
        inv_norm_hager(factors, ctx) * 3u32
    }
}

pub(crate) fn inv_norm_exact(factors: &LuFactors, ctx: &PrecisionContext) -> BigReal {
    let n = factors.n;
    let mut row_sums = vec![ctx.real_zero(); n];
    let mut e = vec![Complex::new(ctx.bits()); n];
    for j in 0..n {
        e[j].assign((1, 0));
        let col = factors.solve(&e);
        e[j].assign((0, 0));
        for (i, z) in col.iter().enumerate() {
            row_sums[i] += complex_abs(z);
        }
    }
    row_sums
        .into_iter()
        .fold(ctx.real_zero(), |acc, s| if s > acc { s } else { acc })
}

fn inv_norm_hager(factors: &LuFactors, ctx: &PrecisionContext) -> BigReal {
    // ||V^{-1}||_inf = ||V^{-T}||_1; iterate on B = V^{-T}:
    //   B x   = solve_transpose(x)
    //   B^H x = conj(solve(conj x))
    let n = factors.n;
    let bits = ctx.bits();
    let mut x: Vec<BigComplex> = (0..n)
        .map(|_| Complex::with_val(bits, (1, 0)) / Float::with_val(bits, n as u32))
        .collect();
    let one_norm = |v: &[BigComplex]| -> BigReal {
        let mut acc = Float::new(bits);
        for z in v {
            acc += complex_abs(z);
        }
        acc
    };
    let mut best = Float::new(bits);
    for _round in 0..5 {
        let y = factors.solve_transpose(&x);
        let est = one_norm(&y);
        if est > best {
            best = est;
        }
        // xi = sign(y)
        let xi: Vec<BigComplex> = y
            .iter()
            .map(|z| {
                let m = complex_abs(z);
                if m.is_zero() {
                    Complex::with_val(bits, (1, 0))
                } else {
                    z.clone() / m
                }
            })
            .collect();
        let xi_conj: Vec<BigComplex> = xi.iter().map(|z| z.clone().conj()).collect();
        let z: Vec<BigComplex> = factors
            .solve(&xi_conj)
            .into_iter()
            .map(|w| w.conj())
            .collect();
        // next unit vector at the largest |z_j|
        let mut jmax = 0usize;
        let mut zmax = -1.0f64;
        for (j, w) in z.iter().enumerate() {
            let m = abs2_f64(w);
            if m > zmax {
                zmax = m;
                jmax = j;
            }
        }
        for (j, slot) in x.iter_mut().enumerate() {
            slot.assign(if j == jmax { (1, 0) } else { (0, 0) });
        }
    }
    best
}

/// Certified error data attached to a phase-1 solve.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// `2 eps Y^{-2k}`: bound on the residual of the true coefficients.
    pub residual_bound: BigReal,
    /// Estimate of `||V^{-1}||_inf`.
    pub inv_norm: BigReal,
    /// Their product: certified sup-norm bound on the coefficient error.
    pub coeff_bound: BigReal,
    /// Largest |U| entry over the input norm during elimination.
    pub pivot_growth: f64,
    /// Measured discrepancy against a second height, when a check ran.
    pub empirical_y_discrepancy: Option<BigReal>,
}

fn residual_bound(job: &SolveJob) -> BigReal {
    // 2 eps Y^{-2k}; the exponent 2k is exactly the stored integer
    let ctx = &job.ctx;
    let y_pow = Float::with_val(ctx.bits(), &job.y).pow(-job.params.weight().twice());
    Float::with_val(ctx.bits(), &job.eps) * 2u32 * y_pow
}

/// End-to-end phase 1: assemble, factor, solve `D = -V^{-1} W`, certify.
pub fn solve_phase1(job: &SolveJob) -> Result<(CoefficientTable, ErrorReport)> {
    let (m0, q) = job.resolve()?;
    let system = assemble_system_sized(job, m0, q)?;
    let ctx = &job.ctx;
    let factors = lu_factor(system.v.clone(), ctx)?;
    let rhs: Vec<BigComplex> = system.wvec.iter().map(|w| -w.clone()).collect();
    let solution = factors.solve(&rhs);
    let inv_norm = inv_norm_estimate(&factors, ctx);

    let res_bound = residual_bound(job);
    let coeff_bound = res_bound.clone() * &inv_norm;
    let report = ErrorReport {
        residual_bound: res_bound.clone(),
        inv_norm: inv_norm.clone(),
        coeff_bound: coeff_bound.clone(),
        pivot_growth: factors.pivot_growth,
        empirical_y_discrepancy: None,
    };

    let mut entries = BTreeMap::new();
    for (i, &(n, h)) in system.index.iter().enumerate() {
        entries.insert(
            (n, h),
            TableEntry {
                value: solution[i].clone(),
                err_bound: coeff_bound.clone(),
                phase: 1,
            },
        );
    }
    let meta = RunMetadata {
        y: job.y.clone(),
        q,
        m0,
        eps: job.eps.clone(),
        precision_digits: ctx.digits(),
        residual_bound: Some(res_bound),
        inv_norm: Some(inv_norm),
        coeff_bound: Some(coeff_bound),
    };
    let table = CoefficientTable::new(job.params, job.principal.clone(), entries, meta)?;
    Ok((table, report))
}

/// Phase-2 extension: recomputes/extends coefficients for all admissible
/// `(n, h)` with `|n|` in `[n_lo, n_hi]` by explicit inversion on fresh
/// horocycles, choosing per-batch heights so that the amplification
/// `W(n Y_n / 4N)^{-1}` stays within `10^digit_loss_budget`.
///
/// New entries carry `err_bound = eps * |W|^{-1}` and phase 2; requested
/// indices already present are replaced.
pub fn extend_phase2(
    table: &CoefficientTable,
    n_lo: i64,
    n_hi: i64,
    digit_loss_budget: u32,
) -> Result<CoefficientTable> {
    if n_lo < 1 || n_hi < n_lo {
        return Err(Error::invalid(format!(
            "bad phase-2 range [{n_lo}, {n_hi}]"
        )));
    }
    if digit_loss_budget == 0 {
        return Err(Error::invalid("digit_loss_budget must be >= 1".to_string()));
    }
    let params = *table.params();
    let ctx = crate::bigarith::make_context(table.meta().precision_digits)?;

    // all admissible targets in the band
    let mut targets: Vec<(i64, u32)> = Vec::new();
    for h in 0..params.two_n() {
        let four_n = params.four_n();
        let hh = (h as i64 * h as i64).rem_euclid(four_n);
        let r0 = (params.sigma() * hh).rem_euclid(four_n);
        let mut j = -(n_hi / four_n) - 2;
        while r0 + four_n * j <= n_hi {
            let n = r0 + four_n * j;
            j += 1;
            if n == 0 || n.abs() < n_lo || n.abs() > n_hi {
                continue;
            }
            if params.mode() == Mode::Holomorphic && n <= 0 {
                continue;
            }
            targets.push((n, h));
        }
    }
    if targets.is_empty() {
        return Err(Error::invalid(format!(
            "no admissible indices with |n| in [{n_lo}, {n_hi}]"
        )));
    }
    targets.sort_by_key(|&(n, h)| (n.abs(), h, n));

    let mut entries = table.entries().clone();
    // geometric bands share one horocycle ("long stretches")
    let mut start = 0usize;
    while start < targets.len() {
        let band_lo = targets[start].0.abs();
        let mut end = start + 1;
        while end < targets.len() && targets[end].0.abs() <= 2 * band_lo {
            end += 1;
        }
        extend_batch(table, &params, &ctx, &targets[start..end], digit_loss_budget, &mut entries)?;
        start = end;
    }
    Ok(table.with_entries(entries))
}

fn extend_batch(
    table: &CoefficientTable,
    params: &HarmonicParams,
    ctx: &PrecisionContext,
    targets: &[(i64, u32)],
    budget: u32,
    entries: &mut BTreeMap<(i64, u32), TableEntry>,
) -> Result<()> {
    let n_max = targets.iter().map(|&(n, _)| n.abs()).max().unwrap();
    let four_n = params.four_n();
    let k = params.weight();

    // height with W(n Y/4N)^{-1} <= 10^budget at the far end of the band
    let y_cap = 0.8 * (0.75f64).sqrt();
    let y64 = y_cap.min(
        four_n as f64 * budget as f64 * std::f64::consts::LN_10
            / (2.0 * std::f64::consts::PI * n_max as f64),
    );
    if y64 < 1e-3 {
        return Err(Error::PrecisionFault(format!(
            "no admissible height for |n| = {n_max} within a 10^{budget} amplification budget; \
             rerun phase 1 at higher precision"
        )));
    }
    let y = ctx.real_from_f64(y64);

    // sampling density: the truncated table must still be eps2-faithful on
    // the new horocycle, and the inversion frequency must stay below the
    // aliasing threshold
    let eps2 = {
        let m0 = table.meta().m0;
        let depth = table.principal().pole_depth();
        let intrinsic_ln =
            tail_model_ln(params.n_level(), k, depth, 0.995 * (0.75f64).sqrt(), m0);
        let eps_job_ln = table.meta().eps.clone().ln().to_f64();
        let target_ln = eps_job_ln.min(intrinsic_ln) - 3.0 * std::f64::consts::LN_10;
        let floor_ln = -((ctx.digits() as f64 - 5.0) * std::f64::consts::LN_10);
        let ln = target_ln.max(floor_ln);
        let mut e = Float::with_val(ctx.bits(), ln);
        e.exp_mut();
        e
    };
    let m_y = truncation_m0(params.n_level(), k, table.principal().pole_depth(), &y, &eps2)?;
    let q = m_y + (n_max / four_n) as u32 + 10;

    let rep = WeilRep::new(params.n_level(), *ctx);
    let points = horocycle_points(&y, q, ctx);

    // per sample: phi^{2k} * rho(T_m) f^(z_m^*)
    let transported: Vec<Vec<BigComplex>> = points
        .par_iter()
        .map(|z_m| -> Result<Vec<BigComplex>> {
            let pb = pullback(z_m, ctx)?;
            let jfac = automorphy_j2k(&pb.map, &pb.z_star, k, ctx)?;
            let f_star = table.evaluate_truncated(&pb.z_star, ctx)?;
            let mut v = rep.apply(&pb.map, params.conjugated(), &f_star);
            for slot in v.iter_mut() {
                *slot *= &jfac;
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;

    let two_q = 2 * q;
    let denom = 16 * params.n_level() as i64 * q as i64;
    let new_entries: Vec<((i64, u32), TableEntry)> = targets
        .par_iter()
        .map(|&(n, h)| -> Result<((i64, u32), TableEntry)> {
            let mut acc = Complex::new(ctx.bits());
            let mut tmp = Complex::new(ctx.bits());
            for (i, vec_m) in transported.iter().enumerate() {
                let m_ord = (1 - q as i64) + i as i64;
                let num = -(n * (1 - 2 * m_ord));
                let phase = unit_circle_exp_ratio(num.rem_euclid(denom), denom as u64, ctx);
                tmp.assign(&vec_m[h as usize]);
                tmp *= &phase;
                acc += &tmp;
            }
            acc /= two_q;
            let frac = ctx.real_from_i64(n) / ctx.real_from_i64(four_n);
            if let Some(a) = table.principal().get(n, h) {
                let radial = (-(ctx.two_pi() * frac.clone() * &y)).exp();
                tmp.assign(a);
                tmp *= &radial;
                acc -= &tmp;
            }
            let w = w_kernel(k, &(frac * &y), ctx)?;
            let value = acc / &w;
            let err = Float::with_val(ctx.bits(), &table.meta().eps) / w;
            Ok((
                (n, h),
                TableEntry {
                    value,
                    err_bound: err.abs(),
                    phase: 2,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    for (key, entry) in new_entries {
        entries.insert(key, entry);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigarith::make_context;
    use crate::specialfun::WeightParam;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ctx() -> PrecisionContext {
        make_context(30).unwrap()
    }

    #[test]
    fn horocycle_layout() {
        let c = ctx();
        let pts = horocycle_points(&c.real_from_f64(0.5), 2, &c);
        assert_eq!(pts.len(), 4);
        let want = [0.375, 0.125, -0.125, -0.375];
        for (p, w) in pts.iter().zip(want) {
            assert!((p.real().clone() - c.real_from_f64(w)).abs() < c.digits_tol(8));
            assert!((p.imag().clone() - c.real_from_f64(0.5)).abs() < c.digits_tol(8));
        }
        // spacing 1/(2Q), all inside (-1/2, 1/2]
        let pts = horocycle_points(&c.real_from_f64(0.3), 7, &c);
        assert_eq!(pts.len(), 14);
        for w in pts.windows(2) {
            let gap = w[0].real().clone() - w[1].real().clone();
            assert!((gap - c.real_from_ratio(1, 14)).abs() < c.digits_tol(8));
        }
        assert!(pts.iter().all(|p| {
            let x = p.real().to_f64();
            x > -0.5 && x <= 0.5
        }));
    }

    fn random_matrix(n: usize, c: &PrecisionContext, rng: &mut StdRng, dominant: f64) -> CMatrix {
        let mut m = CMatrix::zeros(n, c);
        for i in 0..n {
            for j in 0..n {
                let re = rng.gen_range(-1.0..1.0) + if i == j { dominant } else { 0.0 };
                let im = rng.gen_range(-1.0..1.0);
                m.set(i, j, c.complex_from_f64(re, im));
            }
        }
        m
    }

    #[test]
    fn lu_identity_and_residual() {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(13);
        // identity: V x = -W with W = -e1 gives x = e1
        let n = 4;
        let mut ident = CMatrix::zeros(n, &c);
        for i in 0..n {
            ident.set(i, i, c.complex_from_f64(1.0, 0.0));
        }
        let mut w = vec![c.complex_zero(); n];
        w[0] = c.complex_from_f64(-1.0, 0.0);
        let sys = LinearSystem {
            v: ident,
            wvec: w,
            index: build_index_set(
                &HarmonicParams::new(1, WeightParam::parse("1/2").unwrap(), false, Mode::Harmonic)
                    .unwrap(),
                1,
            ),
        };
        let x = lu_solve(&sys, &c).unwrap();
        assert!(complex_abs(&(x[0].clone() - c.complex_from_f64(1.0, 0.0))) < c.digits_tol(6));
        for s in &x[1..] {
            assert!(complex_abs(s) < c.digits_tol(6));
        }

        // random 20x20: check V x + W ~ 0
        let n = 20;
        let m = random_matrix(n, &c, &mut rng, 4.0);
        let wv: Vec<_> = (0..n)
            .map(|_| c.complex_from_f64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let factors = lu_factor(m.clone(), &c).unwrap();
        let rhs: Vec<_> = wv.iter().map(|z| -z.clone()).collect();
        let x = factors.solve(&rhs);
        let vx = m.matvec(&x, &c);
        for (a, b) in vx.iter().zip(&wv) {
            let r = complex_abs(&(a.clone() + b));
            assert!(r < c.digits_tol(6), "residual {r}");
        }
    }

    #[test]
    fn lu_detects_rank_deficiency() {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(3);
        let n = 8;
        let mut m = random_matrix(n, &c, &mut rng, 2.0);
        // duplicate a row
        let row: Vec<BigComplex> = m.row(2).to_vec();
        for (j, v) in row.into_iter().enumerate() {
            m.set(5, j, v);
        }
        match lu_factor(m, &c) {
            Err(Error::SingularSystem(_)) => {}
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn lu_transpose_solve() {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(21);
        let n = 12;
        let m = random_matrix(n, &c, &mut rng, 3.0);
        let factors = lu_factor(m.clone(), &c).unwrap();
        let b: Vec<_> = (0..n)
            .map(|_| c.complex_from_f64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let x = factors.solve_transpose(&b);
        // check V^T x = b by computing x^T V row-wise
        for j in 0..n {
            let mut acc = c.complex_zero();
            for i in 0..n {
                acc += m.get(i, j).clone() * &x[i];
            }
            assert!(complex_abs(&(acc - &b[j])) < c.digits_tol(6));
        }
    }

    #[test]
    fn inv_norm_simple_cases() {
        let c = ctx();
        let n = 5;
        let mut ident = CMatrix::zeros(n, &c);
        for i in 0..n {
            ident.set(i, i, c.complex_from_f64(1.0, 0.0));
        }
        let f = lu_factor(ident, &c).unwrap();
        let est = inv_norm_estimate(&f, &c);
        assert!((est - 1u32).abs() < c.digits_tol(8));

        let mut diag2 = CMatrix::zeros(n, &c);
        for i in 0..n {
            diag2.set(i, i, c.complex_from_f64(2.0, 0.0));
        }
        let f = lu_factor(diag2, &c).unwrap();
        let est = inv_norm_estimate(&f, &c);
        assert!((est - c.real_from_f64(0.5)).abs() < c.digits_tol(8));
    }

    #[test]
    fn inv_norm_exact_matches_explicit_inverse_50() {
        let c = ctx();
        let mut rng = StdRng::seed_from_u64(50);
        let m = random_matrix(50, &c, &mut rng, 3.0);
        let f = lu_factor(m, &c).unwrap();
        let est = inv_norm_estimate(&f, &c);
        let exact = inv_norm_exact(&f, &c);
        assert!(est >= exact.clone() - c.digits_tol(10));
        assert!(est <= exact * 3u32);
    }

    #[test]
    fn inv_norm_hager_brackets_truth() {
        let c = make_context(20).unwrap();
        let mut rng = StdRng::seed_from_u64(230);
        let m = random_matrix(230, &c, &mut rng, 4.0);
        let f = lu_factor(m, &c).unwrap();
        let est = inv_norm_estimate(&f, &c); // Hager path with x3
        let exact = inv_norm_exact(&f, &c);
        assert!(est >= exact.clone() * c.real_from_f64(0.999));
        assert!(est <= exact * 3u32 + c.digits_tol(8));
    }

    /// Exact finite-Fourier inversion on a synthetic truncated series: no
    /// automorphy involved, so sampling + inversion must reproduce
    /// `W(nY/4N) c(n,h) + a(n,h) e^{-2 pi n Y/4N}` to working precision.
    #[test]
    fn finite_fourier_inversion_is_exact() {
        let c = ctx();
        let k = WeightParam::parse("1/2").unwrap();
        let params = HarmonicParams::new(2, k, false, Mode::Harmonic).unwrap();
        let principal =
            PrincipalPart::new(&params, vec![((0, 0), c.complex_from_f64(1.0, 0.0))]).unwrap();
        let m0 = 3u32;
        let index = build_index_set(&params, m0);
        let mut rng = StdRng::seed_from_u64(777);
        let mut entries = BTreeMap::new();
        for &(n, h) in index.iter() {
            entries.insert(
                (n, h),
                TableEntry {
                    value: c.complex_from_f64(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                    err_bound: c.real_from_f64(1e-30),
                    phase: 1,
                },
            );
        }
        let meta = RunMetadata {
            y: c.real_from_f64(0.4),
            q: 5,
            m0,
            eps: c.real_from_f64(1e-20),
            precision_digits: 30,
            residual_bound: None,
            inv_norm: None,
            coeff_bound: None,
        };
        let table = CoefficientTable::new(params, principal.clone(), entries, meta).unwrap();

        let q = 5u32;
        let y = c.real_from_f64(0.4);
        let points = horocycle_points(&y, q, &c);
        let samples: Vec<Vec<BigComplex>> = points
            .iter()
            .map(|z| table.evaluate_truncated(z, &c).unwrap())
            .collect();

        let four_n = params.four_n();
        let denom = 16 * params.n_level() as i64 * q as i64;
        for &(n, h) in index.iter() {
            let mut acc = c.complex_zero();
            for (i, sample) in samples.iter().enumerate() {
                let m_ord = (1 - q as i64) + i as i64;
                let num = -(n * (1 - 2 * m_ord));
                let phase = unit_circle_exp_ratio(num.rem_euclid(denom), denom as u64, &c);
                acc += sample[h as usize].clone() * phase;
            }
            acc /= 2 * q;
            let frac = c.real_from_i64(n) / c.real_from_i64(four_n);
            let mut want = table.get(n, h).unwrap().value.clone()
                * w_kernel(k, &(frac.clone() * &y), &c).unwrap();
            if let Some(a) = table.principal().get(n, h) {
                want += a.clone() * (-(c.two_pi() * frac * &y)).exp();
            }
            let d = complex_abs(&(acc - want));
            assert!(d < c.digits_tol(6), "inversion off by {d} at ({n}, {h})");
        }
    }

    #[test]
    fn job_validation() {
        let c = ctx();
        let k = WeightParam::parse("1/2").unwrap();
        let params = HarmonicParams::new(1, k, false, Mode::Holomorphic).unwrap();
        let principal =
            PrincipalPart::new(&params, vec![((0, 0), c.complex_from_f64(1.0, 0.0))]).unwrap();
        let good = SolveJob {
            params,
            principal: principal.clone(),
            eps: c.parse_decimal("1e-10").unwrap(),
            y: c.real_from_f64(0.4),
            q: 0,
            m0: 0,
            ctx: c,
        };
        let (m0, q) = good.resolve().unwrap();
        assert!(q > m0);

        let bad_y = SolveJob {
            y: c.real_from_f64(0.9),
            ..good.clone()
        };
        assert!(bad_y.resolve().is_err());
        let bad_q = SolveJob {
            q: 3,
            m0: 8,
            ..good.clone()
        };
        assert!(bad_q.resolve().is_err());
    }

    #[test]
    fn assembly_dimensions_and_determinism() {
        let c = make_context(20).unwrap();
        let k = WeightParam::parse("1/2").unwrap();
        let params = HarmonicParams::new(1, k, false, Mode::Holomorphic).unwrap();
        let principal =
            PrincipalPart::new(&params, vec![((0, 0), c.complex_from_f64(1.0, 0.0))]).unwrap();
        let job = SolveJob {
            params,
            principal,
            eps: c.parse_decimal("1e-8").unwrap(),
            y: c.real_from_f64(0.35),
            q: 24,
            m0: 4,
            ctx: c,
        };
        let s1 = assemble_system(&job).unwrap();
        assert_eq!(s1.v.dim(), s1.index.len());
        assert_eq!(s1.wvec.len(), s1.index.len());

        let s2 = assemble_system(&job).unwrap();
        for i in 0..s1.v.dim() {
            assert_eq!(s1.wvec[i], s2.wvec[i]);
            for j in 0..s1.v.dim() {
                assert_eq!(s1.v.get(i, j), s2.v.get(i, j), "entry ({i},{j}) differs");
            }
        }
        let d1 = lu_solve(&s1, &job.ctx).unwrap();
        let d2 = lu_solve(&s2, &job.ctx).unwrap();
        assert_eq!(d1, d2);
    }
}
