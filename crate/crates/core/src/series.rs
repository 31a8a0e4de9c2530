//! Truncated formal power series in the jet variables `x`, `y`, `p`.
//!
//! Series are sparse maps from exponents to exact rational coefficients,
//! graded by the weight `w(x^i y^j p^k) = i + 2j + k` (so `[x] = [p] = 1` and
//! `[y] = 2`). A series never pretends to know more than it does: each value
//! carries a [`Validity`] stating either that it is an exact polynomial or
//! that only the coefficients of weight `<= N` are trustworthy. Every
//! operation derives the trustworthy order of its result from sound,
//! conservative rules:
//!
//! * sums keep the minimum of the inputs' orders;
//! * a product of series valid to `v_a`, `v_b` with minimum term weights
//!   `m_a`, `m_b` is valid to `min(v_a + m_b, v_b + m_a)`;
//! * differentiation loses the weight of the variable (1 for `x` and `p`,
//!   2 for `y`);
//! * composition scales the weight of the unknown tail by the smallest
//!   weight ratio among the substituents, and requires substituents with
//!   zero constant term whenever the outer series is truncated.
//!
//! The weight-`alpha` slice of a trustworthy region is exactly known, so
//! [`Series::project_weight`] returns an exact polynomial; this is what lets
//! the staged normalization apply exact correction maps without eroding the
//! order of the equation it transforms.

use std::fmt;

use crate::error::{Error, Result};
use crate::rat::Rat;

/// One of the three jet variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Base variable `x`, weight 1.
    X,
    /// Fibre variable `y`, weight 2.
    Y,
    /// First-derivative coordinate `p = y_x`, weight 1.
    P,
}

impl Var {
    /// The grading weight of the variable.
    pub fn weight(self) -> u32 {
        match self {
            Var::X => 1,
            Var::Y => 2,
            Var::P => 1,
        }
    }

    fn mask(self) -> u8 {
        match self {
            Var::X => 1,
            Var::Y => 2,
            Var::P => 4,
        }
    }

    fn letter(self) -> char {
        match self {
            Var::X => 'x',
            Var::Y => 'y',
            Var::P => 'p',
        }
    }
}

/// An upper bound on the variables a series may involve, including in the
/// unknown tail beyond its trustworthy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarSet(u8);

impl VarSet {
    /// No variables: constants.
    pub const EMPTY: VarSet = VarSet(0);
    /// Univariate in `x`.
    pub const X: VarSet = VarSet(1);
    /// Univariate in `y`.
    pub const Y: VarSet = VarSet(2);
    /// Univariate in `p`.
    pub const P: VarSet = VarSet(4);
    /// Bivariate in `x, y`.
    pub const XY: VarSet = VarSet(3);
    /// Bivariate in `y, p`.
    pub const YP: VarSet = VarSet(6);
    /// All three jet variables.
    pub const XYP: VarSet = VarSet(7);

    /// Whether `var` belongs to the set.
    pub fn contains(self, var: Var) -> bool {
        self.0 & var.mask() != 0
    }

    /// Set union.
    pub fn union(self, other: VarSet) -> VarSet {
        VarSet(self.0 | other.0)
    }

    /// Whether every variable of `self` lies in `other`.
    pub fn subset_of(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// The set without `var`.
    pub fn without(self, var: Var) -> VarSet {
        VarSet(self.0 & !var.mask())
    }

    /// Iterates over the member variables.
    pub fn iter(self) -> impl Iterator<Item = Var> {
        [Var::X, Var::Y, Var::P]
            .into_iter()
            .filter(move |v| self.contains(*v))
    }
}

/// Maximum degree representable per variable in a packed exponent.
pub const MAX_DEGREE: u32 = 63;

/// A monomial exponent `x^i y^j p^k`, packed so that the natural `u32` order
/// is the canonical term order: ascending weight, then `i`, then `j`, then
/// `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exp(u32);

impl Exp {
    /// Packs the exponent of `x^i y^j p^k`.
    ///
    /// # Panics
    ///
    /// Panics if any degree exceeds [`MAX_DEGREE`].
    pub fn new(i: u32, j: u32, k: u32) -> Exp {
        assert!(
            i <= MAX_DEGREE && j <= MAX_DEGREE && k <= MAX_DEGREE,
            "exponent degree out of range"
        );
        let w = i + 2 * j + k;
        Exp((w << 18) | (i << 12) | (j << 6) | k)
    }

    /// Degree in `x`.
    pub fn i(self) -> u32 {
        (self.0 >> 12) & 0x3f
    }

    /// Degree in `y`.
    pub fn j(self) -> u32 {
        (self.0 >> 6) & 0x3f
    }

    /// Degree in `p`.
    pub fn k(self) -> u32 {
        self.0 & 0x3f
    }

    /// Grading weight `i + 2j + k`.
    pub fn weight(self) -> u32 {
        self.0 >> 18
    }

    /// Degree of `var`.
    pub fn degree(self, var: Var) -> u32 {
        match var {
            Var::X => self.i(),
            Var::Y => self.j(),
            Var::P => self.k(),
        }
    }

    /// Component-wise sum of exponents (monomial product).
    pub fn plus(self, other: Exp) -> Exp {
        Exp::new(
            self.i() + other.i(),
            self.j() + other.j(),
            self.k() + other.k(),
        )
    }
}

/// How much of a series is trustworthy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    /// The series is an exact polynomial: every absent coefficient is zero.
    Exact,
    /// Only coefficients of weight `<= N` are trustworthy. `N` may be
    /// negative, meaning no coefficient is trustworthy.
    Truncated(i64),
}

/// Sentinel used for "unbounded" in order arithmetic.
const UNBOUNDED: i64 = i64::MAX / 4;

impl Validity {
    fn cap(self) -> i64 {
        match self {
            Validity::Exact => UNBOUNDED,
            Validity::Truncated(n) => n,
        }
    }

    /// The weaker (smaller) of two validities.
    pub fn min(self, other: Validity) -> Validity {
        match (self, other) {
            (Validity::Exact, Validity::Exact) => Validity::Exact,
            _ => Validity::Truncated(self.cap().min(other.cap())),
        }
    }

    /// Whether the validity is [`Validity::Exact`].
    pub fn is_exact(self) -> bool {
        matches!(self, Validity::Exact)
    }
}

/// A sparse truncated power series with exact rational coefficients.
#[derive(Clone)]
pub struct Series {
    vars: VarSet,
    validity: Validity,
    /// Sorted ascending by packed exponent; no zero coefficients; when
    /// truncated at `N`, no term of weight `> N`.
    terms: Vec<(Exp, Rat)>,
}

fn normalize_terms(mut terms: Vec<(Exp, Rat)>, cap: i64) -> Vec<(Exp, Rat)> {
    terms.retain(|(e, _)| (e.weight() as i64) <= cap);
    terms.sort_unstable_by_key(|(e, _)| *e);
    let mut out: Vec<(Exp, Rat)> = Vec::with_capacity(terms.len());
    for (e, c) in terms {
        match out.last_mut() {
            Some((last, acc)) if *last == e => {
                *acc += &c;
            }
            _ => out.push((e, c)),
        }
    }
    out.retain(|(_, c)| !c.is_zero());
    out
}

impl Series {
    /// The zero polynomial, exactly.
    pub fn zero() -> Series {
        Series {
            vars: VarSet::EMPTY,
            validity: Validity::Exact,
            terms: Vec::new(),
        }
    }

    /// A zero series trustworthy only to the given order.
    pub fn zero_to(order: i64, vars: VarSet) -> Series {
        Series {
            vars,
            validity: Validity::Truncated(order),
            terms: Vec::new(),
        }
    }

    /// An exact constant.
    pub fn constant(c: Rat) -> Series {
        let terms = if c.is_zero() {
            Vec::new()
        } else {
            vec![(Exp::new(0, 0, 0), c)]
        };
        Series {
            vars: VarSet::EMPTY,
            validity: Validity::Exact,
            terms,
        }
    }

    /// The exact constant one.
    pub fn one() -> Series {
        Series::constant(Rat::one())
    }

    /// The coordinate variable as an exact series.
    pub fn var(v: Var) -> Series {
        let e = match v {
            Var::X => Exp::new(1, 0, 0),
            Var::Y => Exp::new(0, 1, 0),
            Var::P => Exp::new(0, 0, 1),
        };
        Series {
            vars: VarSet(v.mask()),
            validity: Validity::Exact,
            terms: vec![(e, Rat::one())],
        }
    }

    /// An exact single monomial `c * x^i y^j p^k`.
    pub fn monomial(i: u32, j: u32, k: u32, c: Rat) -> Series {
        let mut vars = VarSet::EMPTY;
        if i > 0 {
            vars = vars.union(VarSet::X);
        }
        if j > 0 {
            vars = vars.union(VarSet::Y);
        }
        if k > 0 {
            vars = vars.union(VarSet::P);
        }
        let terms = if c.is_zero() {
            Vec::new()
        } else {
            vec![(Exp::new(i, j, k), c)]
        };
        Series {
            vars,
            validity: Validity::Exact,
            terms,
        }
    }

    /// Builds a series from raw terms. Duplicate exponents are summed, zero
    /// coefficients dropped, and terms beyond a truncated validity removed.
    ///
    /// # Panics
    ///
    /// Panics if a term uses a variable outside `vars`.
    pub fn from_terms(
        vars: VarSet,
        validity: Validity,
        terms: impl IntoIterator<Item = ((u32, u32, u32), Rat)>,
    ) -> Series {
        let raw: Vec<(Exp, Rat)> = terms
            .into_iter()
            .map(|((i, j, k), c)| (Exp::new(i, j, k), c))
            .collect();
        for (e, _) in &raw {
            assert!(
                (e.i() == 0 || vars.contains(Var::X))
                    && (e.j() == 0 || vars.contains(Var::Y))
                    && (e.k() == 0 || vars.contains(Var::P)),
                "term uses a variable outside the declared set"
            );
        }
        Series {
            vars,
            validity,
            terms: normalize_terms(raw, validity.cap()),
        }
    }

    /// The declared variable set.
    pub fn vars(&self) -> VarSet {
        self.vars
    }

    /// The validity of the series.
    pub fn validity(&self) -> Validity {
        self.validity
    }

    /// The trustworthy order, or `None` for an exact polynomial.
    pub fn valid_order(&self) -> Option<i64> {
        match self.validity {
            Validity::Exact => None,
            Validity::Truncated(n) => Some(n),
        }
    }

    /// The stored terms in canonical ascending order.
    pub fn terms(&self) -> &[(Exp, Rat)] {
        &self.terms
    }

    /// The coefficient of `x^i y^j p^k` (zero if absent).
    pub fn coeff(&self, i: u32, j: u32, k: u32) -> Rat {
        let e = Exp::new(i, j, k);
        match self.terms.binary_search_by_key(&e, |(e, _)| *e) {
            Ok(idx) => self.terms[idx].1.clone(),
            Err(_) => Rat::zero(),
        }
    }

    /// The constant coefficient.
    pub fn constant_term(&self) -> Rat {
        self.coeff(0, 0, 0)
    }

    /// Whether no trustworthy coefficient is nonzero. For an exact series
    /// this means identically zero; for a truncated one, zero through the
    /// trustworthy order.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Smallest weight among stored terms.
    pub fn min_weight(&self) -> Option<u32> {
        self.terms.first().map(|(e, _)| e.weight())
    }

    /// Lower bound for the weight of any term the series could have,
    /// including unknown tail terms.
    fn mu_eff(&self) -> i64 {
        let stored = self
            .min_weight()
            .map(|w| w as i64)
            .unwrap_or(UNBOUNDED);
        match self.validity {
            Validity::Exact => stored,
            Validity::Truncated(v) => stored.min(v + 1),
        }
    }

    /// Restricts the trustworthy order to `order` and drops terms beyond it.
    pub fn truncate(&self, order: i64) -> Series {
        let validity = self.validity.min(Validity::Truncated(order));
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| (e.weight() as i64) <= order)
            .cloned()
            .collect();
        Series {
            vars: self.vars,
            validity,
            terms,
        }
    }

    /// Multiplies every coefficient by `c`.
    pub fn scale(&self, c: &Rat) -> Series {
        if c.is_zero() {
            // The result is exactly zero whatever the unknown tail was.
            return Series::zero();
        }
        Series {
            vars: self.vars,
            validity: self.validity,
            terms: self
                .terms
                .iter()
                .map(|(e, a)| (*e, a * c))
                .collect(),
        }
    }

    /// Derivative with respect to `var`. The trustworthy order drops by the
    /// weight of the variable.
    pub fn diff(&self, var: Var) -> Series {
        let validity = match self.validity {
            Validity::Exact => Validity::Exact,
            Validity::Truncated(v) => Validity::Truncated(v - var.weight() as i64),
        };
        let mut terms = Vec::with_capacity(self.terms.len());
        for (e, c) in &self.terms {
            let d = e.degree(var);
            if d == 0 {
                continue;
            }
            let ne = match var {
                Var::X => Exp::new(e.i() - 1, e.j(), e.k()),
                Var::Y => Exp::new(e.i(), e.j() - 1, e.k()),
                Var::P => Exp::new(e.i(), e.j(), e.k() - 1),
            };
            terms.push((ne, c * &Rat::int(d as i64)));
        }
        Series {
            vars: self.vars,
            validity,
            terms: normalize_terms(terms, validity.cap()),
        }
    }

    /// The coefficient series of `var^deg`: all terms with that exact degree
    /// in `var`, with the `var` power removed.
    pub fn slice(&self, var: Var, deg: u32) -> Series {
        let validity = match self.validity {
            Validity::Exact => Validity::Exact,
            Validity::Truncated(v) => Validity::Truncated(v - (deg * var.weight()) as i64),
        };
        let terms: Vec<(Exp, Rat)> = self
            .terms
            .iter()
            .filter(|(e, _)| e.degree(var) == deg)
            .map(|(e, c)| {
                let ne = match var {
                    Var::X => Exp::new(0, e.j(), e.k()),
                    Var::Y => Exp::new(e.i(), 0, e.k()),
                    Var::P => Exp::new(e.i(), e.j(), 0),
                };
                (ne, c.clone())
            })
            .collect();
        Series {
            vars: self.vars.without(var),
            validity,
            terms: normalize_terms(terms, validity.cap()),
        }
    }

    /// Substitutes `var := 0`: keeps the terms free of `var`. Trustworthy
    /// order is unchanged.
    pub fn set_zero(&self, var: Var) -> Series {
        let terms: Vec<(Exp, Rat)> = self
            .terms
            .iter()
            .filter(|(e, _)| e.degree(var) == 0)
            .cloned()
            .collect();
        Series {
            vars: self.vars.without(var),
            validity: self.validity,
            terms,
        }
    }

    /// Largest degree of `var` among stored terms.
    pub fn max_degree(&self, var: Var) -> u32 {
        self.terms
            .iter()
            .map(|(e, _)| e.degree(var))
            .max()
            .unwrap_or(0)
    }

    /// The weight-`alpha` component. It is exactly known whenever
    /// `alpha` lies within the trustworthy order.
    ///
    /// # Errors
    ///
    /// [`Error::OrderExceeded`] if `alpha` exceeds the trustworthy order.
    pub fn project_weight(&self, alpha: u32) -> Result<Series> {
        if let Validity::Truncated(v) = self.validity {
            if (alpha as i64) > v {
                return Err(Error::order(format!(
                    "weight {alpha} projection of a series valid to {v}"
                )));
            }
        }
        let terms: Vec<(Exp, Rat)> = self
            .terms
            .iter()
            .filter(|(e, _)| e.weight() == alpha)
            .cloned()
            .collect();
        Ok(Series {
            vars: self.vars,
            validity: Validity::Exact,
            terms,
        })
    }

    /// Whether the series is concentrated in a single weight.
    pub fn is_semi_homogeneous(&self, alpha: u32) -> bool {
        self.terms.iter().all(|(e, _)| e.weight() == alpha)
    }

    /// Structural equality of the stored coefficients.
    pub fn same_terms(&self, other: &Series) -> bool {
        self.terms == other.terms
    }

    /// Whether `self` and `other` agree coefficient-wise through weight
    /// `order`.
    pub fn eq_to_order(&self, other: &Series, order: i64) -> bool {
        (self - other).truncate(order).is_zero()
    }

    /// The multiplicative inverse, truncated at `order`.
    ///
    /// # Errors
    ///
    /// [`Error::ZeroConstantTerm`] if the constant term vanishes;
    /// [`Error::OrderExceeded`] if the constant term is not trustworthy.
    pub fn reciprocal_to(&self, order: i64) -> Result<Series> {
        if let Validity::Truncated(v) = self.validity {
            if v < 0 {
                return Err(Error::order(
                    "reciprocal of a series with no trustworthy coefficients",
                ));
            }
        }
        let c = self.constant_term();
        if c.is_zero() {
            return Err(Error::ZeroConstantTerm);
        }
        let validity = self.validity.min(Validity::Truncated(order));
        let cap = validity.cap().max(-1);

        // Weight-graded recurrence: with a = c (1 + n), the inverse satisfies
        // r_0 = 1/c and r_w = -(1/c) * sum_{u=1..w} a_u r_{w-u}.
        let max_w = cap.max(0) as usize;
        let mut a_slices: Vec<Vec<(Exp, Rat)>> = vec![Vec::new(); max_w + 1];
        for (e, coeff) in &self.terms {
            let w = e.weight() as usize;
            if w >= 1 && w <= max_w {
                a_slices[w].push((*e, coeff.clone()));
            }
        }
        let c_inv = c.recip();
        let mut r_slices: Vec<Vec<(Exp, Rat)>> = vec![Vec::new(); max_w + 1];
        r_slices[0].push((Exp::new(0, 0, 0), c_inv.clone()));
        for w in 1..=max_w {
            let mut acc: Vec<(Exp, Rat)> = Vec::new();
            for u in 1..=w {
                if a_slices[u].is_empty() || r_slices[w - u].is_empty() {
                    continue;
                }
                for (ea, ca) in &a_slices[u] {
                    for (er, cr) in &r_slices[w - u] {
                        acc.push((ea.plus(*er), ca * cr));
                    }
                }
            }
            let merged = normalize_terms(acc, cap);
            r_slices[w] = merged
                .into_iter()
                .map(|(e, v)| (e, &(-&v) * &c_inv))
                .collect();
        }
        let terms: Vec<(Exp, Rat)> = r_slices.into_iter().flatten().collect();
        Ok(Series {
            vars: self.vars,
            validity,
            terms: normalize_terms(terms, cap),
        })
    }

    /// The multiplicative inverse at the series' own trustworthy order.
    ///
    /// # Errors
    ///
    /// As [`Series::reciprocal_to`]; additionally [`Error::OrderExceeded`]
    /// for an exact non-constant input, whose inverse is not a polynomial and
    /// needs an explicit truncation order.
    pub fn reciprocal(&self) -> Result<Series> {
        match self.validity {
            Validity::Truncated(v) => self.reciprocal_to(v),
            Validity::Exact => {
                if self.terms.len() <= 1 {
                    let c = self.constant_term();
                    if c.is_zero() {
                        return Err(Error::ZeroConstantTerm);
                    }
                    Ok(Series::constant(c.recip()))
                } else {
                    Err(Error::order(
                        "reciprocal of an exact non-constant series requires reciprocal_to",
                    ))
                }
            }
        }
    }

    /// Substitutes `sub_x`, `sub_y`, `sub_p` for the variables.
    ///
    /// When `self` is truncated, every substituent for a variable in
    /// [`Series::vars`] must have zero constant term; otherwise each output
    /// coefficient would depend on unknown tail terms. For an exact `self`
    /// the substitution is polynomial evaluation and constants are allowed.
    ///
    /// # Errors
    ///
    /// [`Error::NonzeroConstantSubstituent`] when the precondition fails, and
    /// [`Error::OrderExceeded`] when an exact composition would produce an
    /// exponent beyond [`MAX_DEGREE`]; truncate with [`Series::compose_to`]
    /// in that case.
    pub fn compose(&self, sub_x: &Series, sub_y: &Series, sub_p: &Series) -> Result<Series> {
        self.compose_capped(sub_x, sub_y, sub_p, UNBOUNDED)
    }

    /// [`Series::compose`] with an additional truncation of the result.
    pub fn compose_to(
        &self,
        sub_x: &Series,
        sub_y: &Series,
        sub_p: &Series,
        order: i64,
    ) -> Result<Series> {
        self.compose_capped(sub_x, sub_y, sub_p, order)
    }

    fn compose_capped(
        &self,
        sub_x: &Series,
        sub_y: &Series,
        sub_p: &Series,
        extra_cap: i64,
    ) -> Result<Series> {
        let sub = |v: Var| -> &Series {
            match v {
                Var::X => sub_x,
                Var::Y => sub_y,
                Var::P => sub_p,
            }
        };

        let outer_exact = self.validity.is_exact();
        if !outer_exact {
            for v in self.vars.iter() {
                if !sub(v).constant_term().is_zero() {
                    return Err(Error::NonzeroConstantSubstituent { var: v.letter() });
                }
            }
        }

        // Trustworthy order of the composition.
        let mut result_vars = VarSet::EMPTY;
        let mut all_exact = outer_exact;
        let mut bound = UNBOUNDED;
        for v in self.vars.iter() {
            let s = sub(v);
            result_vars = result_vars.union(s.vars());
            if let Validity::Truncated(vs) = s.validity() {
                all_exact = false;
                bound = bound.min(vs);
            }
        }
        if let Validity::Truncated(va) = self.validity {
            // Unknown outer terms of weight w >= va + 1 contribute at weight
            // >= w * lambda, where lambda is the smallest ratio of
            // substituent minimum weight to variable weight.
            let mut lambda_num: i64 = UNBOUNDED;
            let mut lambda_den: i64 = 1;
            for v in self.vars.iter() {
                let mu = sub(v).mu_eff();
                let wv = v.weight() as i64;
                if (mu as i128) * (lambda_den as i128) < (lambda_num as i128) * (wv as i128) {
                    lambda_num = mu;
                    lambda_den = wv;
                }
            }
            let tail_floor = if lambda_num >= UNBOUNDED {
                UNBOUNDED
            } else {
                // ceil((va + 1) * lambda) - 1, i.e. trustworthy strictly below
                // the least weight an unknown outer term can reach.
                let scaled = (va as i128 + 1) * lambda_num as i128;
                let den = lambda_den as i128;
                let ceil = if scaled >= 0 {
                    (scaled + den - 1) / den
                } else {
                    scaled / den
                };
                i64::try_from(ceil - 1).unwrap_or(UNBOUNDED).min(UNBOUNDED)
            };
            bound = bound.min(tail_floor);
        }
        let validity = if all_exact {
            Validity::Exact.min(if extra_cap >= UNBOUNDED {
                Validity::Exact
            } else {
                Validity::Truncated(extra_cap)
            })
        } else {
            Validity::Truncated(bound.min(extra_cap))
        };
        let cap = validity.cap();

        // A cap of MAX_DEGREE or below bounds every exponent through the
        // weight filter in mul_capped. Beyond that, check that the composed
        // degrees stay representable before any product is formed.
        if cap > MAX_DEGREE as i64 {
            let comp_max = |s: &Series| {
                s.terms.iter().fold((0u64, 0u64, 0u64), |m, (e, _)| {
                    (
                        m.0.max(e.i() as u64),
                        m.1.max(e.j() as u64),
                        m.2.max(e.k() as u64),
                    )
                })
            };
            let mx = comp_max(sub_x);
            let my = comp_max(sub_y);
            let mp = comp_max(sub_p);
            for (e, _) in &self.terms {
                let (i, j, k) = (e.i() as u64, e.j() as u64, e.k() as u64);
                let di = i * mx.0 + j * my.0 + k * mp.0;
                let dj = i * mx.1 + j * my.1 + k * mp.1;
                let dk = i * mx.2 + j * my.2 + k * mp.2;
                if di.max(dj).max(dk) > MAX_DEGREE as u64 {
                    return Err(Error::order(
                        "composition exceeds the representable degree; truncate with compose_to",
                    ));
                }
            }
        }

        // Cached powers of each substituent, truncated to the cap.
        let mut pow_x: Vec<Series> = vec![Series::one()];
        let mut pow_y: Vec<Series> = vec![Series::one()];
        let mut pow_p: Vec<Series> = vec![Series::one()];
        let grow = |pows: &mut Vec<Series>, base: &Series, upto: u32| {
            while pows.len() <= upto as usize {
                let next = mul_capped(pows.last().unwrap(), base, cap);
                pows.push(next);
            }
        };

        let mut acc: Vec<(Exp, Rat)> = Vec::new();
        for (e, c) in &self.terms {
            grow(&mut pow_x, sub_x, e.i());
            grow(&mut pow_y, sub_y, e.j());
            grow(&mut pow_p, sub_p, e.k());
            let xy = mul_capped(&pow_x[e.i() as usize], &pow_y[e.j() as usize], cap);
            let xyp = mul_capped(&xy, &pow_p[e.k() as usize], cap);
            for (pe, pc) in &xyp.terms {
                acc.push((*pe, pc * c));
            }
        }
        Ok(Series {
            vars: result_vars,
            validity,
            terms: normalize_terms(acc, cap),
        })
    }
}

/// Term-level product of two series truncated to weight `cap`; metadata is
/// handled by the callers.
fn mul_capped(a: &Series, b: &Series, cap: i64) -> Series {
    let mut acc: Vec<(Exp, Rat)> = Vec::new();
    for (ea, ca) in &a.terms {
        let wa = ea.weight() as i64;
        if wa > cap {
            continue;
        }
        for (eb, cb) in &b.terms {
            if wa + eb.weight() as i64 > cap {
                break;
            }
            acc.push((ea.plus(*eb), ca * cb));
        }
    }
    Series {
        vars: a.vars.union(b.vars),
        validity: Validity::Truncated(cap),
        terms: normalize_terms(acc, cap),
    }
}

impl std::ops::Add for &Series {
    type Output = Series;

    fn add(self, rhs: &Series) -> Series {
        let validity = self.validity.min(rhs.validity);
        let cap = validity.cap();
        let mut terms = Vec::with_capacity(self.terms.len() + rhs.terms.len());
        terms.extend(self.terms.iter().cloned());
        terms.extend(rhs.terms.iter().cloned());
        Series {
            vars: self.vars.union(rhs.vars),
            validity,
            terms: normalize_terms(terms, cap),
        }
    }
}

impl std::ops::Sub for &Series {
    type Output = Series;

    fn sub(self, rhs: &Series) -> Series {
        self + &(-rhs)
    }
}

impl std::ops::Neg for &Series {
    type Output = Series;

    fn neg(self) -> Series {
        Series {
            vars: self.vars,
            validity: self.validity,
            terms: self.terms.iter().map(|(e, c)| (*e, -c)).collect(),
        }
    }
}

impl std::ops::Mul for &Series {
    type Output = Series;

    fn mul(self, rhs: &Series) -> Series {
        if (self.validity.is_exact() && self.terms.is_empty())
            || (rhs.validity.is_exact() && rhs.terms.is_empty())
        {
            return Series::zero();
        }
        let validity = if self.validity.is_exact() && rhs.validity.is_exact() {
            Validity::Exact
        } else {
            let mut bound = UNBOUNDED;
            if let Validity::Truncated(va) = self.validity {
                bound = bound.min(va.saturating_add(rhs.mu_eff()).min(UNBOUNDED));
            }
            if let Validity::Truncated(vb) = rhs.validity {
                bound = bound.min(vb.saturating_add(self.mu_eff()).min(UNBOUNDED));
            }
            Validity::Truncated(bound)
        };
        let product = mul_capped(self, rhs, validity.cap());
        Series {
            vars: self.vars.union(rhs.vars),
            validity,
            terms: product.terms,
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        } else {
            for (idx, (e, c)) in self.terms.iter().enumerate() {
                if idx > 0 {
                    write!(f, " + ")?;
                }
                write!(f, "{c}")?;
                for (var, d) in [(Var::X, e.i()), (Var::Y, e.j()), (Var::P, e.k())] {
                    match d {
                        0 => {}
                        1 => write!(f, "*{}", var.letter())?,
                        _ => write!(f, "*{}^{}", var.letter(), d)?,
                    }
                }
            }
        }
        match self.validity {
            Validity::Exact => Ok(()),
            Validity::Truncated(v) => write!(f, " (order <= {v})"),
        }
    }
}

impl fmt::Debug for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trunc(n: i64) -> Validity {
        Validity::Truncated(n)
    }

    type RawTerm = ((u32, u32, u32), (i64, i64));

    fn s_xyp(validity: Validity, terms: &[RawTerm]) -> Series {
        Series::from_terms(
            VarSet::XYP,
            validity,
            terms.iter().map(|&(e, (n, d))| (e, Rat::new(n, d))),
        )
    }

    #[test]
    fn canonical_term_order_is_weight_then_lex() {
        let s = s_xyp(
            trunc(10),
            &[
                ((0, 1, 0), (1, 1)),
                ((2, 0, 0), (1, 1)),
                ((0, 0, 2), (1, 1)),
                ((1, 0, 1), (1, 1)),
                ((0, 0, 1), (1, 1)),
            ],
        );
        let order: Vec<(u32, u32, u32)> = s.terms().iter().map(|(e, _)| (e.i(), e.j(), e.k())).collect();
        assert_eq!(
            order,
            vec![(0, 0, 1), (0, 0, 2), (0, 1, 0), (1, 0, 1), (2, 0, 0)]
        );
    }

    #[test]
    fn weights_follow_the_grading() {
        assert_eq!(Exp::new(1, 0, 0).weight(), 1);
        assert_eq!(Exp::new(0, 1, 0).weight(), 2);
        assert_eq!(Exp::new(0, 0, 1).weight(), 1);
        assert_eq!(Exp::new(2, 3, 1).weight(), 9);
    }

    #[test]
    fn add_merges_and_cancels() {
        let a = s_xyp(trunc(5), &[((1, 0, 0), (1, 1)), ((0, 1, 0), (2, 1))]);
        let b = s_xyp(trunc(5), &[((1, 0, 0), (-1, 1)), ((0, 0, 1), (1, 2))]);
        let sum = &a + &b;
        assert_eq!(sum.coeff(1, 0, 0), Rat::zero());
        assert_eq!(sum.coeff(0, 1, 0), Rat::int(2));
        assert_eq!(sum.coeff(0, 0, 1), Rat::new(1, 2));
        assert_eq!(sum.valid_order(), Some(5));
    }

    #[test]
    fn mul_respects_truncation_and_sharpened_order() {
        // x * (series valid to 3 with min weight 1) is valid to 4.
        let x = Series::var(Var::X);
        let a = s_xyp(trunc(3), &[((0, 0, 1), (1, 1))]);
        let prod = &x * &a;
        assert_eq!(prod.valid_order(), Some(4));
        assert_eq!(prod.coeff(1, 0, 1), Rat::int(1));

        // Two generic truncated series with constant terms keep the min rule.
        let b = s_xyp(trunc(3), &[((0, 0, 0), (1, 1)), ((1, 0, 0), (1, 1))]);
        let c = s_xyp(trunc(7), &[((0, 0, 0), (1, 1))]);
        assert_eq!((&b * &c).valid_order(), Some(3));
    }

    #[test]
    fn exact_times_exact_is_exact() {
        let x = Series::var(Var::X);
        let y = Series::var(Var::Y);
        let prod = &x * &y;
        assert!(prod.validity().is_exact());
        assert_eq!(prod.coeff(1, 1, 0), Rat::int(1));
    }

    #[test]
    fn scale_by_zero_is_exactly_zero() {
        let a = s_xyp(trunc(3), &[((1, 0, 0), (5, 1))]);
        let z = a.scale(&Rat::zero());
        assert!(z.is_zero());
        assert!(z.validity().is_exact());
    }

    #[test]
    fn diff_weights() {
        let s = s_xyp(trunc(6), &[((2, 1, 1), (1, 1))]);
        let dx = s.diff(Var::X);
        assert_eq!(dx.coeff(1, 1, 1), Rat::int(2));
        assert_eq!(dx.valid_order(), Some(5));
        let dy = s.diff(Var::Y);
        assert_eq!(dy.coeff(2, 0, 1), Rat::int(1));
        assert_eq!(dy.valid_order(), Some(4));
        let dp = s.diff(Var::P);
        assert_eq!(dp.coeff(2, 1, 0), Rat::int(1));
        assert_eq!(dp.valid_order(), Some(5));
    }

    #[test]
    fn diff_then_integrate_structure() {
        // d/dx and d/dp commute.
        let s = s_xyp(
            trunc(8),
            &[((2, 1, 1), (3, 2)), ((1, 0, 2), (-1, 3)), ((0, 2, 0), (7, 1))],
        );
        let a = s.diff(Var::X).diff(Var::P);
        let b = s.diff(Var::P).diff(Var::X);
        assert!(a.same_terms(&b));
    }

    #[test]
    fn reciprocal_of_geometric_series() {
        // 1/(1 - x) = 1 + x + x^2 + ...
        let one_minus_x = &Series::one() - &Series::var(Var::X);
        let r = one_minus_x.reciprocal_to(5).unwrap();
        for i in 0..=5 {
            assert_eq!(r.coeff(i, 0, 0), Rat::int(1));
        }
        assert_eq!(r.valid_order(), Some(5));
        let product = &one_minus_x * &r;
        assert!(product.truncate(5).eq_to_order(&Series::one(), 5));
    }

    #[test]
    fn reciprocal_requires_nonzero_constant() {
        let x = Series::var(Var::X);
        assert_eq!(x.reciprocal_to(4).unwrap_err(), Error::ZeroConstantTerm);
    }

    #[test]
    fn compose_rejects_constant_substituent_for_truncated_outer() {
        let a = s_xyp(trunc(4), &[((0, 0, 1), (1, 1))]);
        let shifted = &Series::var(Var::P) + &Series::one();
        let err = a
            .compose(&Series::var(Var::X), &Series::var(Var::Y), &shifted)
            .unwrap_err();
        assert_eq!(err, Error::NonzeroConstantSubstituent { var: 'p' });
    }

    #[test]
    fn compose_exact_outer_allows_constant_substituent() {
        // (p^2) with p := 1 + p gives 1 + 2p + p^2 exactly.
        let a = Series::monomial(0, 0, 2, Rat::int(1));
        let shifted = &Series::var(Var::P) + &Series::one();
        let out = a
            .compose(&Series::var(Var::X), &Series::var(Var::Y), &shifted)
            .unwrap();
        assert!(out.validity().is_exact());
        assert_eq!(out.coeff(0, 0, 0), Rat::int(1));
        assert_eq!(out.coeff(0, 0, 1), Rat::int(2));
        assert_eq!(out.coeff(0, 0, 2), Rat::int(1));
    }

    #[test]
    fn compose_rejects_unrepresentable_exact_degrees() {
        // x^32 with x := x^2 would need x^64, one past the packed limit.
        let outer = Series::monomial(32, 0, 0, Rat::one());
        let inner = Series::monomial(2, 0, 0, Rat::one());
        let zero = Series::zero();
        let err = outer.compose(&inner, &zero, &zero).unwrap_err();
        assert!(matches!(err, Error::OrderExceeded { .. }));
        // The same request succeeds once a truncation order is supplied.
        let capped = outer.compose_to(&inner, &zero, &zero, 20).unwrap();
        assert!(capped.is_zero());
        assert_eq!(capped.validity(), Validity::Truncated(20));
    }

    #[test]
    fn compose_substitution_example() {
        // J = y p, with y := y + x^2 and p := 2p, gives 2yp + 2x^2 p.
        let a = s_xyp(trunc(9), &[((0, 1, 1), (1, 1))]);
        let sy = &Series::var(Var::Y) + &Series::monomial(2, 0, 0, Rat::int(1));
        let sp = Series::var(Var::P).scale(&Rat::int(2));
        let out = a.compose(&Series::var(Var::X), &sy, &sp).unwrap();
        assert_eq!(out.coeff(0, 1, 1), Rat::int(2));
        assert_eq!(out.coeff(2, 0, 1), Rat::int(2));
        assert_eq!(out.valid_order(), Some(9));
    }

    #[test]
    fn compose_order_contracts_for_light_substituents() {
        // Substituting y := x (weight 1 replacing weight 2) halves the
        // trustworthy order.
        let a = Series::from_terms(
            VarSet::Y,
            trunc(10),
            [((0u32, 1u32, 0u32), Rat::int(1))],
        );
        let out = a
            .compose(&Series::var(Var::X), &Series::var(Var::X), &Series::var(Var::P))
            .unwrap();
        // Unknown tail terms y^j have weight 2j <= 10, i.e. j <= 5; they land
        // at weight j >= 6 after substitution, so weight 5 is trustworthy.
        assert_eq!(out.valid_order(), Some(5));
    }

    #[test]
    fn project_weight_extracts_exact_slice() {
        let a = s_xyp(
            trunc(4),
            &[((2, 0, 0), (1, 1)), ((0, 1, 0), (2, 1)), ((3, 0, 0), (1, 1))],
        );
        let w2 = a.project_weight(2).unwrap();
        assert!(w2.validity().is_exact());
        assert_eq!(w2.coeff(2, 0, 0), Rat::int(1));
        assert_eq!(w2.coeff(0, 1, 0), Rat::int(2));
        assert!(w2.coeff(3, 0, 0).is_zero());
        assert!(a.project_weight(5).is_err());
    }

    #[test]
    fn weight_components_sum_back() {
        let a = s_xyp(
            trunc(6),
            &[
                ((1, 0, 0), (1, 2)),
                ((0, 1, 1), (3, 1)),
                ((2, 2, 0), (-5, 3)),
                ((0, 0, 4), (7, 4)),
            ],
        );
        let mut sum = Series::zero_to(6, VarSet::XYP);
        for alpha in 0..=6u32 {
            sum = &sum + &a.project_weight(alpha).unwrap();
        }
        assert!(sum.same_terms(&a));
    }

    #[test]
    fn slice_extracts_var_coefficients() {
        let a = s_xyp(
            trunc(8),
            &[((1, 0, 2), (4, 1)), ((0, 2, 2), (1, 1)), ((1, 1, 0), (2, 1))],
        );
        let m = a.slice(Var::P, 2);
        assert_eq!(m.coeff(1, 0, 0), Rat::int(4));
        assert_eq!(m.coeff(0, 2, 0), Rat::int(1));
        assert!(m.coeff(1, 1, 0).is_zero());
        assert_eq!(m.valid_order(), Some(6));
        assert!(!m.vars().contains(Var::P));
    }

    #[test]
    fn semi_homogeneous_scaling_identity() {
        // F semi-homogeneous of weight alpha satisfies
        // F(t x, t^2 y, t p) = t^alpha F for rational t.
        let f = s_xyp(trunc(5), &[((1, 2, 0), (1, 1)), ((3, 1, 0), (2, 1)), ((4, 0, 1), (-3, 1))]);
        assert!(f.is_semi_homogeneous(5));
        let t = Rat::new(3, 2);
        let tx = Series::var(Var::X).scale(&t);
        let ty = Series::var(Var::Y).scale(&(&t * &t));
        let tp = Series::var(Var::P).scale(&t);
        let scaled = f.compose(&tx, &ty, &tp).unwrap();
        let mut t5 = Rat::one();
        for _ in 0..5 {
            t5 = &t5 * &t;
        }
        assert!(scaled.same_terms(&f.scale(&t5)));
    }
}
