//! Normalization by recursion: four explicit map-building steps, each of
//! which solves an initial value problem for the components of a concrete
//! fibre-preserving map and removes one family of monomials for good.
//!
//! The steps, in the order they must run:
//!
//! - step 1, graph straightening: `(x, y + G)` with
//!   `G_xx = K(x, y + G, G_x)`, `G(0, y) = G_x(0, y) = 0`, after which
//!   `K(x, y, 0) = 0`;
//! - step 2a, a Moebius reparametrization `(x / (1 - f2 x), y)` with
//!   `f2 = -K_p(0, 0, 0) / 2`, which kills the slope coefficient at the
//!   origin while keeping step 1's gain;
//! - step 2b, a shear `(x, y + s(y) x + h)` where `s` solves
//!   `s' = K_p(0, y, s) / 2`, `s(0) = 0`, and `h` restores the graph
//!   condition; after this `K_p(0, y, 0) = 0`;
//! - step 3, a base reparametrization `(x + f, y)` with
//!   `f''' = f''^2 / (1 + f') - (1 + f')^3 K_xp(x + f, 0, 0)
//!   - f'' (1 + f') K_p(x + f, 0, 0)` and `f(0) = f'(0) = f''(0) = 0`,
//!   after which `K_p(x, 0, 0) = 0`;
//! - step 4, a fibre rescaling `(x, y + g(y))` with
//!   `g'' = K_pp(0, y + g, 0) (1 + g')^2 / 2`, `g(0) = g'(0) = 0`, after
//!   which `K_pp(0, y, 0) = 0`.
//!
//! Every initial value problem is solved degree by degree; the recursions
//! are triangular, so each new coefficient is determined by already known
//! ones. Solutions are verified by substituting back: a nonzero residual,
//! or a target condition that fails to hold on the output, is reported as
//! an internal error rather than silently accepted.

use crate::error::{Error, Result};
use crate::invariants::{check_normal, condition_defect, NormalCondition};
use crate::jet::{apply_map, compose_maps, FibreMap, Ode};
use crate::rat::Rat;
use crate::series::{Series, Validity, Var, VarSet};
use std::fmt;

/// Identifies one of the five normalization steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkStepId {
    /// Graph straightening.
    Step1,
    /// Moebius reparametrization.
    Step2a,
    /// Shear in the fibre direction.
    Step2b,
    /// Base reparametrization.
    Step3,
    /// Fibre rescaling.
    Step4,
}

impl fmt::Display for CkStepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CkStepId::Step1 => "1",
            CkStepId::Step2a => "2a",
            CkStepId::Step2b => "2b",
            CkStepId::Step3 => "3",
            CkStepId::Step4 => "4",
        };
        f.write_str(s)
    }
}

/// What one normalization step did, with enough data to audit it.
#[derive(Debug, Clone)]
pub struct CkStepReport {
    /// Which step ran.
    pub step: CkStepId,
    /// The map that was applied.
    pub map: FibreMap,
    /// The series solved for, by name.
    pub solved: Vec<(&'static str, Series)>,
    /// Back-substitution residuals, all verified to vanish.
    pub residuals: Vec<(&'static str, Series)>,
    /// The normal-form conditions that hold for the output, found by
    /// direct checking.
    pub conditions_after: Vec<NormalCondition>,
    /// Trustworthy order of the output equation.
    pub output_order: i64,
}

fn require_order(e: &Ode) -> Result<i64> {
    e.rhs().valid_order().ok_or_else(|| {
        Error::order("normalization steps require a truncated equation; truncate the right side first")
    })
}

fn conditions_holding(e: &Ode) -> Vec<NormalCondition> {
    NormalCondition::ALL
        .into_iter()
        .filter(|&c| condition_defect(e, c).is_zero())
        .collect()
}

/// Verifies residuals and target conditions, then assembles the report.
fn finish_step(
    step: CkStepId,
    input_order: i64,
    out: Ode,
    map: FibreMap,
    solved: Vec<(&'static str, Series)>,
    residuals: Vec<(&'static str, Series)>,
    required: &[NormalCondition],
) -> Result<(Ode, CkStepReport)> {
    for (name, r) in &residuals {
        if !r.is_zero() {
            return Err(Error::internal(format!(
                "step {step}: back-substitution residual {name} is nonzero: {r}"
            )));
        }
    }
    let output_order = out.rhs().valid_order().ok_or_else(|| {
        Error::internal(format!("step {step}: output lost its truncation order"))
    })?;
    if output_order != input_order {
        return Err(Error::internal(format!(
            "step {step}: trustworthy order changed from {input_order} to {output_order}"
        )));
    }
    let conditions_after = conditions_holding(&out);
    for c in required {
        if !conditions_after.contains(c) {
            return Err(Error::internal(format!(
                "step {step} failed to establish {c}"
            )));
        }
    }
    Ok((
        out,
        CkStepReport {
            step,
            map,
            solved,
            residuals,
            conditions_after,
            output_order,
        },
    ))
}

/// Solves `h_xx = K(x, y + s x + h, s + h_x)` with `h(0, y) = h_x(0, y) = 0`
/// degree by degree in `x`, for an exact univariate profile `s(y)`. The
/// coefficient of `x^i` on the right depends only on the parts of `h` of
/// degree at most `i + 1`, so each pass determines the next coefficient.
fn solve_graph(k: &Series, s: &Series, n: i64) -> Result<Series> {
    let x = Series::var(Var::X);
    let y = Series::var(Var::Y);
    let shift = s * &x;
    let mut h_terms: Vec<((u32, u32, u32), Rat)> = Vec::new();
    for i in 0..=n {
        let h = Series::from_terms(VarSet::XY, Validity::Exact, h_terms.iter().cloned());
        let sub_y = &(&y + &shift) + &h;
        let sub_p = s + &h.diff(Var::X);
        let rhs = k.compose(&x, &sub_y, &sub_p)?;
        let row = rhs.slice(Var::X, i as u32);
        let div = Rat::new(1, (i + 1) * (i + 2));
        for (e, c) in row.terms() {
            h_terms.push(((i as u32 + 2, e.j(), 0), c * &div));
        }
    }
    Ok(Series::from_terms(
        VarSet::XY,
        Validity::Truncated(n + 2),
        h_terms,
    ))
}

/// Residual of the graph equation for a solved `h`.
fn graph_residual(k: &Series, s: &Series, h: &Series) -> Result<Series> {
    let x = Series::var(Var::X);
    let shift = s * &x;
    let sub_y = &(&Series::var(Var::Y) + &shift) + h;
    let sub_p = s + &h.diff(Var::X);
    let rhs = k.compose(&x, &sub_y, &sub_p)?;
    Ok(&h.diff(Var::X).diff(Var::X) - &rhs)
}

/// Straightens the graph of solutions through `x = 0`: applies
/// `(x, y + G)` where `G` solves the graph equation, so the output
/// satisfies `K(x, y, 0) = 0`.
///
/// # Errors
///
/// [`Error::OrderExceeded`] for an untruncated input; [`Error::Internal`]
/// if the solved series fails back-substitution.
#[allow(non_snake_case)]
pub fn step1_D1(e: &Ode) -> Result<(Ode, CkStepReport)> {
    let n = require_order(e)?;
    let zero = Series::zero();
    let g = solve_graph(e.rhs(), &zero, n)?;
    let map = FibreMap::new(Series::var(Var::X), &Series::var(Var::Y) + &g)?;
    let out = apply_map(e, &map)?;
    let r = graph_residual(e.rhs(), &zero, &g)?;
    finish_step(
        CkStepId::Step1,
        n,
        out,
        map,
        vec![("G", g)],
        vec![("r_G", r)],
        &[NormalCondition::D1],
    )
}

/// Kills the slope coefficient at the origin with the Moebius map
/// `(x / (1 - f2 x), y)`, `f2 = -K_p(0, 0, 0) / 2`.
///
/// # Errors
///
/// [`Error::PreconditionD1`] if the input does not satisfy the first
/// condition; [`Error::OrderExceeded`] for an untruncated input.
pub fn step2_moebius(e: &Ode) -> Result<(Ode, CkStepReport)> {
    let n = require_order(e)?;
    if !condition_defect(e, NormalCondition::D1).is_zero() {
        return Err(Error::PreconditionD1);
    }
    let f2 = &e.rhs().coeff(0, 0, 1) * &Rat::new(-1, 2);
    let phi = if f2.is_zero() {
        Series::var(Var::X)
    } else {
        let mut terms = Vec::new();
        let mut pw = Rat::one();
        for k in 1..=n + 1 {
            terms.push(((k as u32, 0, 0), pw.clone()));
            pw = &pw * &f2;
        }
        Series::from_terms(VarSet::X, Validity::Truncated(n + 1), terms)
    };
    let map = FibreMap::new(phi, Series::var(Var::Y))?;
    let out = apply_map(e, &map)?;
    let slope = Series::constant(out.rhs().coeff(0, 0, 1));
    finish_step(
        CkStepId::Step2a,
        n,
        out,
        map,
        vec![("f2", Series::constant(f2))],
        vec![("origin_slope", slope)],
        &[NormalCondition::D1],
    )
}

/// Solves `s' = K_p(0, y, s) / 2` with `s(0) = 0` degree by degree in `y`.
fn solve_slope_profile(kp: &Series, n: i64) -> Result<Series> {
    let y = Series::var(Var::Y);
    let zero = Series::zero();
    let mut s_terms: Vec<((u32, u32, u32), Rat)> = Vec::new();
    let mut m = 0i64;
    while 2 * m < n {
        let s = Series::from_terms(VarSet::Y, Validity::Exact, s_terms.iter().cloned());
        let rhs = kp.compose(&zero, &y, &s)?.scale(&Rat::new(1, 2));
        let c = rhs.coeff(0, m as u32, 0);
        s_terms.push(((0, m as u32 + 1, 0), &c * &Rat::new(1, m + 1)));
        m += 1;
    }
    Ok(Series::from_terms(
        VarSet::Y,
        Validity::Truncated(n + 1),
        s_terms,
    ))
}

/// Removes the slope along the whole fibre over `x = 0` with the shear
/// `(x, y + s(y) x + h)`, restoring the graph condition at the same time.
/// The output satisfies both `K(x, y, 0) = 0` and `K_p(0, y, 0) = 0`.
///
/// # Errors
///
/// [`Error::PreconditionD1`] or [`Error::PreconditionOriginSlope`] when the
/// input is not prepared by the earlier steps; [`Error::OrderExceeded`] for
/// an untruncated input; [`Error::Internal`] on failed back-substitution.
#[allow(non_snake_case)]
pub fn step2_D2(e: &Ode) -> Result<(Ode, CkStepReport)> {
    let n = require_order(e)?;
    if !condition_defect(e, NormalCondition::D1).is_zero() {
        return Err(Error::PreconditionD1);
    }
    if !e.rhs().coeff(0, 0, 1).is_zero() {
        return Err(Error::PreconditionOriginSlope);
    }
    let kp = e.rhs().diff(Var::P);
    let s = solve_slope_profile(&kp, n)?;
    let s_exact = Series::from_terms(VarSet::Y, Validity::Exact, s.terms().iter().map(|(e, c)| ((e.i(), e.j(), e.k()), c.clone())));
    let h = solve_graph(e.rhs(), &s_exact, n)?;
    let shift = &(&s * &Series::var(Var::X)) + &h;
    let map = FibreMap::new(Series::var(Var::X), &Series::var(Var::Y) + &shift)?;
    let out = apply_map(e, &map)?;
    let r_s = &s.diff(Var::Y)
        - &kp
            .compose(&Series::zero(), &Series::var(Var::Y), &s)?
            .scale(&Rat::new(1, 2));
    let r_h = graph_residual(e.rhs(), &s_exact, &h)?;
    finish_step(
        CkStepId::Step2b,
        n,
        out,
        map,
        vec![("s", s), ("h", h)],
        vec![("r_s", r_s), ("r_h", r_h)],
        &[NormalCondition::D1, NormalCondition::D2],
    )
}

/// The right side of the reparametrization equation
/// `f''' = f''^2 / (1 + f') - (1 + f')^3 K_xp(x + f, 0, 0)
/// - f'' (1 + f') K_p(x + f, 0, 0)`.
fn reparam_rhs(kp: &Series, kxp: &Series, f: &Series, cap: i64) -> Result<Series> {
    let zero = Series::zero();
    let xf = &Series::var(Var::X) + f;
    let fx = f.diff(Var::X);
    let fxx = fx.diff(Var::X);
    let one_fx = &Series::one() + &fx;
    let inv = one_fx.reciprocal_to(cap)?;
    let kp_c = kp.compose(&xf, &zero, &zero)?;
    let kxp_c = kxp.compose(&xf, &zero, &zero)?;
    let t1 = &(&fxx * &fxx) * &inv;
    let t2 = &(&(&one_fx * &one_fx) * &one_fx) * &kxp_c;
    let t3 = &(&fxx * &one_fx) * &kp_c;
    Ok(&(&t1 - &t2) - &t3)
}

/// Removes the slope along the section `y = 0` with a base
/// reparametrization `(x + f, y)`, keeping the conditions already won.
/// The output satisfies `K_p(x, 0, 0) = 0` on top of the first two
/// conditions.
///
/// # Errors
///
/// [`Error::PreconditionD1D2`] when the input is not prepared;
/// [`Error::OrderExceeded`] for an untruncated input; [`Error::Internal`]
/// on failed back-substitution.
#[allow(non_snake_case)]
pub fn step3_D3(e: &Ode) -> Result<(Ode, CkStepReport)> {
    let n = require_order(e)?;
    if !condition_defect(e, NormalCondition::D1).is_zero()
        || !condition_defect(e, NormalCondition::D2).is_zero()
    {
        return Err(Error::PreconditionD1D2);
    }
    let kp = e.rhs().diff(Var::P);
    let kxp = kp.diff(Var::X);
    let mut f_terms: Vec<((u32, u32, u32), Rat)> = Vec::new();
    for d in 3..=n + 1 {
        let f = Series::from_terms(VarSet::X, Validity::Exact, f_terms.iter().cloned());
        let rhs = reparam_rhs(&kp, &kxp, &f, n)?;
        let c = rhs.coeff(d as u32 - 3, 0, 0);
        f_terms.push(((d as u32, 0, 0), &c * &Rat::new(1, d * (d - 1) * (d - 2))));
    }
    let f = Series::from_terms(VarSet::X, Validity::Truncated(n + 1), f_terms);
    let map = FibreMap::new(&Series::var(Var::X) + &f, Series::var(Var::Y))?;
    let out = apply_map(e, &map)?;
    let r_f = if n >= 2 {
        &f.diff(Var::X).diff(Var::X).diff(Var::X) - &reparam_rhs(&kp, &kxp, &f, n - 2)?
    } else {
        Series::zero()
    };
    finish_step(
        CkStepId::Step3,
        n,
        out,
        map,
        vec![("f", f)],
        vec![("r_f", r_f)],
        &[
            NormalCondition::D1,
            NormalCondition::D2,
            NormalCondition::D3,
        ],
    )
}

/// The right side of the rescaling equation
/// `g'' = K_pp(0, y + g, 0) (1 + g')^2 / 2`.
fn rescale_rhs(kpp: &Series, g: &Series) -> Result<Series> {
    let zero = Series::zero();
    let yg = &Series::var(Var::Y) + g;
    let one_gy = &Series::one() + &g.diff(Var::Y);
    let kpp_c = kpp.compose(&zero, &yg, &zero)?;
    Ok((&(&one_gy * &one_gy) * &kpp_c).scale(&Rat::new(1, 2)))
}

/// Flattens the second fibre derivative over `x = 0` with the rescaling
/// `(x, y + g(y))`. The output satisfies all four normal-form conditions.
///
/// # Errors
///
/// [`Error::PreconditionD1D2D3`] when the input is not prepared;
/// [`Error::OrderExceeded`] for an untruncated input; [`Error::Internal`]
/// on failed back-substitution.
#[allow(non_snake_case)]
pub fn step4_D4(e: &Ode) -> Result<(Ode, CkStepReport)> {
    let n = require_order(e)?;
    if !condition_defect(e, NormalCondition::D1).is_zero()
        || !condition_defect(e, NormalCondition::D2).is_zero()
        || !condition_defect(e, NormalCondition::D3).is_zero()
    {
        return Err(Error::PreconditionD1D2D3);
    }
    let kpp = e.rhs().diff(Var::P).diff(Var::P);
    let mut g_terms: Vec<((u32, u32, u32), Rat)> = Vec::new();
    let mut m = 2i64;
    while 2 * m <= n + 2 {
        let g = Series::from_terms(VarSet::Y, Validity::Exact, g_terms.iter().cloned());
        let rhs = rescale_rhs(&kpp, &g)?;
        let c = rhs.coeff(0, m as u32 - 2, 0);
        g_terms.push(((0, m as u32, 0), &c * &Rat::new(1, m * (m - 1))));
        m += 1;
    }
    let g = Series::from_terms(VarSet::Y, Validity::Truncated(n + 2), g_terms);
    let map = FibreMap::new(Series::var(Var::X), &Series::var(Var::Y) + &g)?;
    let out = apply_map(e, &map)?;
    let r_g = &g.diff(Var::Y).diff(Var::Y) - &rescale_rhs(&kpp, &g)?;
    finish_step(
        CkStepId::Step4,
        n,
        out,
        map,
        vec![("g", g)],
        vec![("r_g", r_g)],
        &[
            NormalCondition::D1,
            NormalCondition::D2,
            NormalCondition::D3,
            NormalCondition::D4,
        ],
    )
}

/// Runs the full four-step normalization and folds the step maps into one.
/// Returns the normal form, the composite map realizing it, and the audit
/// report of every step. The composite is cross-checked by applying it to
/// the input and comparing with the staged result.
///
/// # Errors
///
/// [`Error::OrderExceeded`] if the input is not trustworthy through
/// `order`; [`Error::Internal`] if any verification fails.
pub fn normalize_ck(e: &Ode, order: i64) -> Result<(Ode, FibreMap, Vec<CkStepReport>)> {
    if let Some(v) = e.rhs().valid_order() {
        if order > v {
            return Err(Error::order(format!(
                "normalization to order {order} from an input valid to {v}"
            )));
        }
    }
    if order < 0 {
        return Err(Error::order(format!("normalization to negative order {order}")));
    }
    let start = Ode::new(e.rhs().truncate(order));
    let (e1, r1) = step1_D1(&start)?;
    let (e2, r2) = step2_moebius(&e1)?;
    let (e3, r3) = step2_D2(&e2)?;
    let (e4, r4) = step3_D3(&e3)?;
    let (e5, r5) = step4_D4(&e4)?;
    let reports = vec![r1, r2, r3, r4, r5];

    let mut total = FibreMap::identity();
    for r in &reports {
        let next = compose_maps(&total, &r.map)?;
        total = FibreMap::new(
            next.phi().truncate(order + 1),
            next.psi().truncate(order + 2),
        )?;
    }

    let (ok, violated) = check_normal(&e5);
    if !ok {
        return Err(Error::internal(format!(
            "four-step output still violates {}",
            violated
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let via = apply_map(&start, &total)?;
    if !via.rhs().eq_to_order(e5.rhs(), order) {
        return Err(Error::internal(
            "composite map does not reproduce the staged normal form",
        ));
    }
    Ok((e5, total, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::formal_normalize;
    use crate::invariants::normal_pattern_check;

    type RawTerm = ((u32, u32, u32), (i64, i64));

    fn ode(terms: &[RawTerm], order: i64) -> Ode {
        Ode::new(Series::from_terms(
            VarSet::XYP,
            Validity::Truncated(order),
            terms.iter().map(|&(e, (num, den))| (e, Rat::new(num, den))),
        ))
    }

    #[test]
    fn graph_step_on_linear_fibre_term() {
        // K = y: the graph profile is y (cosh x - 1).
        let e = ode(&[((0, 1, 0), (1, 1))], 8);
        let (out, report) = step1_D1(&e).unwrap();
        let g = &report.solved[0].1;
        assert_eq!(g.coeff(2, 1, 0), Rat::new(1, 2));
        assert_eq!(g.coeff(4, 1, 0), Rat::new(1, 24));
        assert_eq!(g.coeff(6, 1, 0), Rat::new(1, 720));
        assert!(g.coeff(3, 1, 0).is_zero());
        assert!(condition_defect(&out, NormalCondition::D1).is_zero());
        assert!(report.conditions_after.contains(&NormalCondition::D1));
        assert_eq!(report.output_order, 8);
    }

    #[test]
    fn graph_step_on_constant_term() {
        let e = ode(&[((0, 0, 0), (3, 1))], 6);
        let (out, report) = step1_D1(&e).unwrap();
        let g = &report.solved[0].1;
        assert_eq!(g.coeff(2, 0, 0), Rat::new(3, 2));
        assert!(out.rhs().is_zero(), "a constant right side straightens away");
    }

    #[test]
    fn moebius_step_kills_origin_slope() {
        // K = 2p: f2 = -1 and the image is -2xp / (1 + x)^2.
        let e = ode(&[((0, 0, 1), (2, 1))], 8);
        let (out, report) = step2_moebius(&e).unwrap();
        assert_eq!(report.solved[0].1.constant_term(), Rat::int(-1));
        assert_eq!(report.map.phi().coeff(2, 0, 0), Rat::int(-1));
        assert_eq!(report.map.phi().coeff(3, 0, 0), Rat::one());
        assert!(out.rhs().coeff(0, 0, 1).is_zero());
        assert_eq!(out.rhs().coeff(1, 0, 1), Rat::int(-2));
        assert_eq!(out.rhs().coeff(2, 0, 1), Rat::int(4));
        assert_eq!(out.rhs().coeff(3, 0, 1), Rat::int(-6));
    }

    #[test]
    fn shear_step_removes_fibre_slope() {
        // K = yp: s = y^2 / 4 and h starts at (y^3 / 8) x^2.
        let e = ode(&[((0, 1, 1), (1, 1))], 8);
        let (out, report) = step2_D2(&e).unwrap();
        let s = &report.solved[0].1;
        let h = &report.solved[1].1;
        assert_eq!(s.coeff(0, 2, 0), Rat::new(1, 4));
        assert!(s.coeff(0, 1, 0).is_zero());
        assert_eq!(h.coeff(2, 3, 0), Rat::new(1, 8));
        assert!(condition_defect(&out, NormalCondition::D1).is_zero());
        assert!(condition_defect(&out, NormalCondition::D2).is_zero());
    }

    #[test]
    fn reparametrization_step_removes_section_slope() {
        // K = xp: f = -x^3/6 + higher terms.
        let e = ode(&[((1, 0, 1), (1, 1))], 8);
        let (out, report) = step3_D3(&e).unwrap();
        let f = &report.solved[0].1;
        assert_eq!(f.coeff(3, 0, 0), Rat::new(-1, 6));
        assert!(condition_defect(&out, NormalCondition::D3).is_zero());
        assert!(report.conditions_after.contains(&NormalCondition::D3));
    }

    #[test]
    fn rescaling_step_removes_second_fibre_derivative() {
        // K = y p^2: g = y^3/6 + higher terms.
        let e = ode(&[((0, 1, 2), (1, 1))], 8);
        let (out, report) = step4_D4(&e).unwrap();
        let g = &report.solved[0].1;
        assert_eq!(g.coeff(0, 3, 0), Rat::new(1, 6));
        let (ok, _) = check_normal(&out);
        assert!(ok);
    }

    #[test]
    fn step_preconditions_are_enforced() {
        let constant = ode(&[((0, 0, 0), (1, 1))], 6);
        assert!(matches!(step2_moebius(&constant), Err(Error::PreconditionD1)));
        assert!(matches!(step2_D2(&constant), Err(Error::PreconditionD1)));

        let slope = ode(&[((0, 0, 1), (2, 1))], 6);
        assert!(matches!(
            step2_D2(&slope),
            Err(Error::PreconditionOriginSlope)
        ));

        let yp = ode(&[((0, 1, 1), (1, 1))], 6);
        assert!(matches!(step3_D3(&yp), Err(Error::PreconditionD1D2)));

        let xp = ode(&[((1, 0, 1), (1, 1))], 6);
        assert!(matches!(step4_D4(&xp), Err(Error::PreconditionD1D2D3)));

        let exact = Ode::new(Series::monomial(0, 1, 0, Rat::one()));
        assert!(matches!(step1_D1(&exact), Err(Error::OrderExceeded { .. })));
    }

    #[test]
    fn full_pipeline_fixes_flat_and_normal_inputs() {
        let (k, map, reports) = normalize_ck(&Ode::flat(8), 8).unwrap();
        assert!(k.rhs().is_zero());
        assert!(map.phi().same_terms(&Series::var(Var::X)));
        assert!(map.psi().same_terms(&Series::var(Var::Y)));
        assert_eq!(reports.len(), 5);

        let p3 = ode(&[((0, 0, 3), (1, 1))], 8);
        let (k, map, _) = normalize_ck(&p3, 8).unwrap();
        assert!(k.rhs().same_terms(p3.rhs()));
        assert!(map.phi().same_terms(&Series::var(Var::X)));
        assert!(map.psi().same_terms(&Series::var(Var::Y)));
    }

    #[test]
    fn full_pipeline_produces_normal_form() {
        let e = ode(
            &[
                ((0, 0, 0), (1, 2)),
                ((0, 0, 1), (2, 1)),
                ((0, 1, 0), (1, 3)),
                ((1, 0, 2), (1, 1)),
                ((0, 1, 1), (-1, 2)),
            ],
            8,
        );
        let (k, _, reports) = normalize_ck(&e, 8).unwrap();
        assert!(normal_pattern_check(&k));
        assert_eq!(k.rhs().valid_order(), Some(8));
        for pair in reports.windows(2) {
            for c in &pair[0].conditions_after {
                if *c == NormalCondition::D1 {
                    assert!(
                        pair[1].conditions_after.contains(c),
                        "the first condition, once won, is never lost"
                    );
                }
            }
        }
    }

    #[test]
    fn both_normalization_routes_agree() {
        let e = ode(
            &[((0, 0, 0), (2, 1)), ((0, 0, 1), (1, 1)), ((0, 1, 0), (1, 2))],
            8,
        );
        let (via_ck, _, _) = normalize_ck(&e, 8).unwrap();
        let (via_stages, _) = formal_normalize(&e, 8).unwrap();
        assert!(
            via_ck.rhs().eq_to_order(via_stages.rhs(), 8),
            "normal forms differ:\n  four-step: {}\n  staged: {}",
            via_ck.rhs(),
            via_stages.rhs()
        );
    }
}
