//! End-to-end solver checks at small scale: the holomorphic theta recovery,
//! cross-height residual consistency of an assembled system against an
//! independently solved coefficient vector, and the phase-2 overlap check.

use maassforms::bigarith::{complex_abs, make_context};
use maassforms::maassform::{HarmonicParams, Mode, PrincipalPart};
use maassforms::solver::{assemble_system, extend_phase2, solve_phase1, SolveJob};
use maassforms::specialfun::WeightParam;
use rug::ops::Pow;
use rug::Float;

/// Prescribing the constant term a(0,0) = 1 at level 1 in holomorphic mode
/// recovers the classical theta series.
#[test]
fn theta_series_from_constant_term() {
    let ctx = make_context(20).unwrap();
    let k = WeightParam::parse("1/2").unwrap();
    let params = HarmonicParams::new(1, k, false, Mode::Holomorphic).unwrap();
    let principal =
        PrincipalPart::new(&params, vec![((0, 0), ctx.complex_from_f64(1.0, 0.0))]).unwrap();
    let job = SolveJob {
        params,
        principal,
        eps: ctx.parse_decimal("1e-13").unwrap(),
        y: ctx.real_from_f64(0.07),
        q: 115,
        m0: 6,
        ctx,
    };
    let (table, _) = solve_phase1(&job).unwrap();
    let tol = ctx.real_from_f64(1e-12);
    for (&(n, h), entry) in table.entries() {
        let root = (n as f64).sqrt().round() as i64;
        let want = if root * root == n && (root % 2 == h as i64 % 2) {
            2.0
        } else {
            0.0
        };
        assert!(
            (entry.value.real().clone() - ctx.real_from_f64(want)).abs() < tol
                && entry.value.imag().clone().abs() < tol,
            "c({n},{h}) missed the theta pattern"
        );
    }
}

fn reduced_11a1(ctx: &maassforms::bigarith::PrecisionContext) -> SolveJob {
    let k = WeightParam::parse("1/2").unwrap();
    let params = HarmonicParams::new(11, k, true, Mode::Harmonic).unwrap();
    let principal = PrincipalPart::new(
        &params,
        vec![
            ((-5, 7), ctx.complex_from_f64(1.0, 0.0)),
            ((-5, 15), ctx.complex_from_f64(-1.0, 0.0)),
        ],
    )
    .unwrap();
    SolveJob {
        params,
        principal,
        eps: ctx.parse_decimal("1e-3").unwrap(),
        y: ctx.real_from_f64(0.5),
        q: 0,
        m0: 8,
        ctx: *ctx,
    }
}

/// Self-consistency across heights: coefficients solved at Y = 0.5 satisfy
/// the system assembled at Y = 0.45 within the residual bound 2 eps Y^{-2k}.
#[test]
fn converged_solution_satisfies_foreign_height_system() {
    let ctx = make_context(25).unwrap();
    let job = reduced_11a1(&ctx);
    let (table, _) = solve_phase1(&job).unwrap();

    let job2 = SolveJob {
        y: ctx.real_from_f64(0.45),
        ..job.clone()
    };
    let system = assemble_system(&job2).unwrap();
    let coeffs: Vec<_> = system
        .index
        .iter()
        .map(|&(n, h)| table.get(n, h).unwrap().value.clone())
        .collect();
    let vc = system.v.matvec(&coeffs, &ctx);
    let mut worst = ctx.real_zero();
    for (a, b) in vc.iter().zip(&system.wvec) {
        let r = complex_abs(&(a.clone() + b));
        if r > worst {
            worst = r;
        }
    }
    let bound = Float::with_val(ctx.bits(), &job.eps) * 2u32
        * Float::with_val(ctx.bits(), &job2.y).pow(-1i32);
    assert!(
        worst <= bound,
        "cross-height residual {:.3e} above 2 eps Y^(-2k) = {:.3e}",
        worst.to_f64(),
        bound.to_f64()
    );
}

/// Phase-2 overlap: recomputing indices already solved in phase 1 agrees
/// within the combined error bounds (and to far better accuracy in practice).
#[test]
fn phase2_overlap_agrees_with_phase1() {
    let ctx = make_context(25).unwrap();
    let job = reduced_11a1(&ctx);
    let (table, _) = solve_phase1(&job).unwrap();

    let redone = extend_phase2(&table, 40, 130, 6).unwrap();
    let mut compared = 0;
    for (key, e2) in redone.entries() {
        if e2.phase != 2 {
            continue;
        }
        let e1 = table.entries().get(key).unwrap();
        let diff = complex_abs(&(e1.value.clone() - &e2.value));
        let combined = e1.err_bound.clone() + &e2.err_bound;
        assert!(
            diff <= combined,
            "phase-2 overlap at {key:?} off by {:.3e} (bound {:.3e})",
            diff.to_f64(),
            combined.to_f64()
        );
        assert!(diff.to_f64() < 1e-4, "overlap drift {:.3e}", diff.to_f64());
        compared += 1;
    }
    assert!(compared >= 10, "too few overlap indices: {compared}");

    // a one-digit budget cannot reach far indices at any admissible height
    let err = extend_phase2(&table, 200_000, 200_001, 1).unwrap_err();
    assert!(
        err.to_string().contains("higher precision"),
        "unexpected error text: {err}"
    );
}
