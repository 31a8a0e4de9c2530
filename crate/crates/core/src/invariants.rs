//! Normal-form conditions, relative invariants, and the flatness decision.
//!
//! An equation `y_xx = K(x, y, p)` is in normal form when four restriction
//! conditions hold:
//!
//! * D1: `K(x, y, 0) = 0`,
//! * D2: `K_p(0, y, 0) = 0`,
//! * D3: `K_p(x, 0, 0) = 0`,
//! * D4: `K_pp(0, y, 0) = 0`.
//!
//! Equivalently, every monomial of `K` belongs to one of three families:
//! `p^3` times anything, `x^(1+i) y^j p^2`, or `x^(1+i) y^(1+j) p`. Both
//! predicates are provided and agree on every input.
//!
//! The three relative invariants are computed at a fixed section of the
//! structure group, with constant nonzero prefactors dropped (the vanishing
//! loci, which carry all the information used here, are unchanged):
//!
//! ```text
//! I1 = K_ppp
//! I2 = D_x K_pp - K_py
//! I3 = D_x K_py + K_pp K_y - K_py K_p - 2 K_yy
//! ```
//!
//! A normal equation is flat (equivalent to `y_xx = 0`) exactly when all
//! three invariants vanish; for truncated series both this criterion and the
//! direct `K = 0` check are evaluated and must agree.

use crate::error::{Error, Result};
use crate::jet::{total_derivative, Ode};
use crate::rat::Rat;
use crate::series::{Series, Var};

/// One of the four restriction conditions defining the normal form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalCondition {
    /// `K(x, y, 0) = 0`: zero-slope jets solve the equation.
    D1,
    /// `K_p(0, y, 0) = 0`: the slope derivative vanishes on the fibre axis.
    D2,
    /// `K_p(x, 0, 0) = 0`: the slope derivative vanishes on the base axis.
    D3,
    /// `K_pp(0, y, 0) = 0`: the second slope derivative vanishes on the
    /// fibre axis.
    D4,
}

impl NormalCondition {
    /// All four conditions in order.
    pub const ALL: [NormalCondition; 4] = [
        NormalCondition::D1,
        NormalCondition::D2,
        NormalCondition::D3,
        NormalCondition::D4,
    ];
}

impl std::fmt::Display for NormalCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NormalCondition::D1 => "D1",
            NormalCondition::D2 => "D2",
            NormalCondition::D3 => "D3",
            NormalCondition::D4 => "D4",
        };
        write!(f, "{s}")
    }
}

/// The restricted series whose vanishing is the given condition.
pub fn condition_defect(e: &Ode, cond: NormalCondition) -> Series {
    let k = e.rhs();
    match cond {
        NormalCondition::D1 => k.set_zero(Var::P),
        NormalCondition::D2 => k.diff(Var::P).set_zero(Var::P).set_zero(Var::X),
        NormalCondition::D3 => k.diff(Var::P).set_zero(Var::P).set_zero(Var::Y),
        NormalCondition::D4 => k.diff(Var::P).diff(Var::P).set_zero(Var::P).set_zero(Var::X),
    }
}

/// Evaluates the four conditions through the input's trustworthy order and
/// returns the overall verdict together with every violated condition.
pub fn check_normal(e: &Ode) -> (bool, Vec<NormalCondition>) {
    let violated: Vec<NormalCondition> = NormalCondition::ALL
        .into_iter()
        .filter(|c| !condition_defect(e, *c).is_zero())
        .collect();
    (violated.is_empty(), violated)
}

/// Whether the monomial `x^i y^j p^k` may appear in a normal-form series:
/// any monomial with `k >= 3`, `x^(1+i) y^j p^2`, or `x^(1+i) y^(1+j) p`.
pub fn is_normal_exponent(i: u32, j: u32, k: u32) -> bool {
    match k {
        0 => false,
        1 => i >= 1 && j >= 1,
        2 => i >= 1,
        _ => true,
    }
}

/// Whether every stored monomial of the equation matches the normal-form
/// pattern. Agrees with [`check_normal`] on every input.
pub fn normal_pattern_check(e: &Ode) -> bool {
    e.rhs()
        .terms()
        .iter()
        .all(|(exp, _)| is_normal_exponent(exp.i(), exp.j(), exp.k()))
}

/// The three relative invariants of an equation.
#[derive(Debug, Clone)]
pub struct InvariantTriple {
    /// `K_ppp`; trustworthy to the input order minus 3.
    pub i1: Series,
    /// `D_x K_pp - K_py`; trustworthy to the input order minus 3.
    pub i2: Series,
    /// `D_x K_py + K_pp K_y - K_py K_p - 2 K_yy`; trustworthy to the input
    /// order minus 4.
    pub i3: Series,
}

impl InvariantTriple {
    /// Whether all three invariants vanish through their trustworthy orders.
    pub fn all_zero(&self) -> bool {
        self.i1.is_zero() && self.i2.is_zero() && self.i3.is_zero()
    }
}

/// Computes the three relative invariants.
pub fn relative_invariants(e: &Ode) -> InvariantTriple {
    let k = e.rhs();
    let k_p = k.diff(Var::P);
    let k_pp = k_p.diff(Var::P);
    let k_py = k_p.diff(Var::Y);
    let k_y = k.diff(Var::Y);
    let i1 = k_pp.diff(Var::P);
    let i2 = &total_derivative(&k_pp, e) - &k_py;
    let i3 = &(&total_derivative(&k_py, e) + &(&k_pp * &k_y))
        - &(&(&k_py * &k_p) + &k_y.diff(Var::Y).scale(&Rat::int(2)));
    InvariantTriple { i1, i2, i3 }
}

/// The invariants evaluated at the origin. For a normal equation these are
/// `(6 K_{0,0,3}, 2 K_{1,0,2}, K_{1,1,1})` in terms of the monomial
/// coefficients of the right-hand side.
///
/// # Errors
///
/// [`Error::NotNormal`] if the equation fails a normal-form condition.
pub fn invariants_at_origin(e: &Ode) -> Result<(Rat, Rat, Rat)> {
    let (ok, violated) = check_normal(e);
    if !ok {
        return Err(Error::NotNormal {
            detail: format!("violated conditions: {}", join_conditions(&violated)),
        });
    }
    let inv = relative_invariants(e);
    Ok((
        inv.i1.constant_term(),
        inv.i2.constant_term(),
        inv.i3.constant_term(),
    ))
}

fn join_conditions(conds: &[NormalCondition]) -> String {
    conds
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// The flatness verdict for a normal equation, with the diagnostic data
/// behind it.
#[derive(Debug, Clone)]
pub struct FlatnessReport {
    /// Whether the equation is equivalent to `y_xx = 0` through the checked
    /// order.
    pub is_flat: bool,
    /// The three relative invariants; all zero exactly when flat.
    pub invariants: InvariantTriple,
    /// Coefficient of `p^2` in the right-hand side.
    pub m: Series,
    /// Coefficient of `p` in the right-hand side.
    pub n: Series,
    /// `2 M_x - N_y`; vanishes on flat equations.
    pub relation1_residual: Series,
    /// `N_xy - N_y N`; vanishes on flat equations.
    pub relation2_residual: Series,
    /// The weighted order through which the verdict holds.
    pub order_checked: i64,
}

/// Decides whether a normal equation is flat. The invariant-vanishing
/// criterion and the direct `K = 0` check are both evaluated; they are
/// equivalent for normal equations, and a disagreement is reported as an
/// internal error rather than silently resolved.
///
/// # Errors
///
/// [`Error::NotNormal`] if the equation fails a normal-form condition;
/// [`Error::Internal`] if the two flatness routes disagree.
pub fn check_flat(e: &Ode) -> Result<FlatnessReport> {
    let (ok, violated) = check_normal(e);
    if !ok {
        return Err(Error::NotNormal {
            detail: format!("violated conditions: {}", join_conditions(&violated)),
        });
    }
    let k = e.rhs();
    let inv = relative_invariants(e);
    let by_invariants = inv.all_zero();
    let directly = k.is_zero();
    if by_invariants != directly {
        return Err(Error::internal(format!(
            "flatness routes disagree: invariants vanish = {by_invariants}, \
             right-hand side vanishes = {directly}"
        )));
    }
    let m = k.slice(Var::P, 2);
    let n = k.slice(Var::P, 1);
    let relation1_residual = &m.diff(Var::X).scale(&Rat::int(2)) - &n.diff(Var::Y);
    let relation2_residual = &n.diff(Var::X).diff(Var::Y) - &(&n.diff(Var::Y) * &n);
    let order_checked = k
        .valid_order()
        .unwrap_or_else(|| k.min_weight().map_or(0, |_| {
            k.terms().last().map_or(0, |(e, _)| e.weight() as i64)
        }));
    Ok(FlatnessReport {
        is_flat: directly,
        invariants: inv,
        m,
        n,
        relation1_residual,
        relation2_residual,
        order_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Validity, VarSet};

    type RawTerm = ((u32, u32, u32), (i64, i64));

    fn ode(terms: &[RawTerm], order: i64) -> Ode {
        Ode::new(Series::from_terms(
            VarSet::XYP,
            Validity::Truncated(order),
            terms.iter().map(|&(e, (n, d))| (e, Rat::new(n, d))),
        ))
    }

    #[test]
    fn cubic_slope_term_is_normal() {
        let e = ode(&[((0, 0, 3), (1, 1))], 8);
        let (ok, violated) = check_normal(&e);
        assert!(ok, "violated: {violated:?}");
        assert!(normal_pattern_check(&e));
    }

    #[test]
    fn mixed_linear_slope_term_is_normal() {
        let e = ode(&[((1, 1, 1), (1, 1))], 8);
        assert!(check_normal(&e).0);
        assert!(normal_pattern_check(&e));
    }

    #[test]
    fn fibre_linear_slope_term_violates_d2() {
        let e = ode(&[((0, 1, 1), (1, 1))], 8);
        let (ok, violated) = check_normal(&e);
        assert!(!ok);
        assert_eq!(violated, vec![NormalCondition::D2]);
        assert!(!normal_pattern_check(&e));
    }

    #[test]
    fn pattern_families_match_examples() {
        let good = ode(
            &[((0, 0, 3), (1, 1)), ((1, 0, 2), (1, 1)), ((1, 1, 1), (1, 1))],
            8,
        );
        assert!(normal_pattern_check(&good));
        let base_slope = ode(&[((1, 0, 1), (1, 1))], 8);
        assert!(!normal_pattern_check(&base_slope));
        assert_eq!(check_normal(&base_slope).1, vec![NormalCondition::D3]);
        let fibre_quadratic = ode(&[((0, 1, 2), (1, 1))], 8);
        assert!(!normal_pattern_check(&fibre_quadratic));
        assert_eq!(check_normal(&fibre_quadratic).1, vec![NormalCondition::D4]);
    }

    #[test]
    fn predicates_agree_on_constructed_inputs() {
        let cases = [
            ode(&[], 6),
            ode(&[((0, 0, 0), (3, 1))], 6),
            ode(&[((2, 1, 0), (1, 2))], 6),
            ode(&[((1, 0, 2), (5, 1)), ((0, 0, 4), (-1, 3))], 6),
            ode(&[((1, 1, 1), (2, 7)), ((0, 0, 1), (1, 1))], 6),
        ];
        for e in &cases {
            assert_eq!(
                check_normal(e).0,
                normal_pattern_check(e),
                "predicates disagree on {}",
                e.rhs()
            );
        }
    }

    #[test]
    fn invariants_of_flat_equation_vanish() {
        let inv = relative_invariants(&Ode::flat(10));
        assert!(inv.all_zero());
    }

    #[test]
    fn invariants_of_cubic_slope_term() {
        let e = ode(&[((0, 0, 3), (1, 1))], 9);
        let inv = relative_invariants(&e);
        assert_eq!(inv.i1.constant_term(), Rat::int(6));
        assert_eq!(inv.i1.terms().len(), 1);
        assert_eq!(invariants_at_origin(&e).unwrap(), (Rat::int(6), Rat::zero(), Rat::zero()));
    }

    #[test]
    fn invariants_of_base_quadratic_slope_term() {
        // K = x p^2: I1 = 0, I2 = D_x(2x) - 0 = 2.
        let e = ode(&[((1, 0, 2), (1, 1))], 9);
        let inv = relative_invariants(&e);
        assert!(inv.i1.is_zero());
        assert_eq!(inv.i2.constant_term(), Rat::int(2));
        assert_eq!(inv.i2.terms().len(), 1);
        assert_eq!(invariants_at_origin(&e).unwrap(), (Rat::zero(), Rat::int(2), Rat::zero()));
    }

    #[test]
    fn invariants_of_mixed_term_at_origin() {
        let e = ode(&[((1, 1, 1), (1, 1))], 9);
        assert_eq!(
            invariants_at_origin(&e).unwrap(),
            (Rat::zero(), Rat::zero(), Rat::int(1))
        );
    }

    #[test]
    fn origin_invariants_require_normal_form() {
        let e = ode(&[((0, 1, 1), (1, 1))], 9);
        assert!(matches!(
            invariants_at_origin(&e),
            Err(Error::NotNormal { .. })
        ));
    }

    #[test]
    fn flat_equation_reports_flat() {
        let report = check_flat(&Ode::flat(10)).unwrap();
        assert!(report.is_flat);
        assert!(report.relation1_residual.is_zero());
        assert!(report.relation2_residual.is_zero());
        assert_eq!(report.order_checked, 10);
    }

    #[test]
    fn nonflat_normal_equation_reports_residual() {
        let e = ode(&[((1, 0, 2), (1, 1))], 9);
        let report = check_flat(&e).unwrap();
        assert!(!report.is_flat);
        assert_eq!(report.m.coeff(1, 0, 0), Rat::int(1));
        assert!(report.n.is_zero());
        // 2 M_x - N_y = 2 is the obstruction.
        assert_eq!(report.relation1_residual.constant_term(), Rat::int(2));
    }

    #[test]
    fn flatness_rejects_non_normal_input() {
        let e = ode(&[((0, 0, 1), (1, 1))], 9);
        assert!(matches!(check_flat(&e), Err(Error::NotNormal { .. })));
    }
}
