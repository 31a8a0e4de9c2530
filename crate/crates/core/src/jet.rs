//! Fibre-preserving point transformations and their action on second-order
//! equations `y_xx = J(x, y, p)`.
//!
//! A fibre-preserving map sends `(x, y)` to `(phi(x), psi(x, y))` with
//! `phi(0) = 0`, `phi'(0) != 0`, `psi(0, 0) = 0`, `psi_y(0, 0) != 0`. Its
//! second prolongation acts on the jet coordinates: the first derivative
//! transforms as
//!
//! ```text
//! P = (psi_x + psi_y p) / phi_x
//! ```
//!
//! and the second derivative transforms affinely, `Y_XX = a0 + a1 y_xx`,
//! with `a1 = psi_y / phi_x^2`. Pulling an equation `Y_XX = J(X, Y, P)` back
//! along the map therefore yields `y_xx = K(x, y, p)` with
//!
//! ```text
//! K = (J(phi, psi, P) - a0) / a1 .
//! ```
//!
//! The module also provides the infinitesimal picture: vector fields
//! `f(x) d/dx + g(x, y) d/dy`, their prolongation to the jet space, the
//! tangency defect that vanishes exactly on symmetries of an equation, the
//! pullback of fields along maps, and flows. Flows are computed either as
//! polynomials in the flow parameter `t` (see [`TSeries`]) or, when the
//! iteration terminates or gains weight, as an honest map at unit time.

use crate::error::{Error, Result};
use crate::rat::Rat;
use crate::series::{Series, Var, VarSet};

/// A second-order equation `y_xx = J(x, y, p)` given by its right-hand side.
#[derive(Debug, Clone)]
pub struct Ode {
    rhs: Series,
}

impl Ode {
    /// Wraps a right-hand side series.
    pub fn new(rhs: Series) -> Ode {
        Ode { rhs }
    }

    /// The flat equation `y_xx = 0`, trustworthy to `order`.
    pub fn flat(order: i64) -> Ode {
        Ode {
            rhs: Series::zero_to(order, VarSet::XYP),
        }
    }

    /// The right-hand side.
    pub fn rhs(&self) -> &Series {
        &self.rhs
    }
}

/// A fibre-preserving point transformation `(x, y) -> (phi(x), psi(x, y))`.
#[derive(Debug, Clone)]
pub struct FibreMap {
    phi: Series,
    psi: Series,
}

impl FibreMap {
    /// Validates and wraps the two components.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidMap`] unless `phi` is a series in `x` alone with
    /// `phi(0) = 0` and `phi'(0) != 0`, `psi` a series in `x, y` with
    /// `psi(0, 0) = 0` and `psi_y(0, 0) != 0`, and both are trustworthy far
    /// enough (weight 1 for `phi`, weight 2 for `psi`) for those jets to be
    /// meaningful.
    pub fn new(phi: Series, psi: Series) -> Result<FibreMap> {
        if !phi.vars().subset_of(VarSet::X) {
            return Err(Error::InvalidMap {
                detail: "phi must be a series in x alone".into(),
            });
        }
        if !psi.vars().subset_of(VarSet::XY) {
            return Err(Error::InvalidMap {
                detail: "psi must be a series in x and y".into(),
            });
        }
        if let Some(v) = phi.valid_order() {
            if v < 1 {
                return Err(Error::InvalidMap {
                    detail: format!("phi is trustworthy only to order {v}, need at least 1"),
                });
            }
        }
        if let Some(v) = psi.valid_order() {
            if v < 2 {
                return Err(Error::InvalidMap {
                    detail: format!("psi is trustworthy only to order {v}, need at least 2"),
                });
            }
        }
        if !phi.constant_term().is_zero() {
            return Err(Error::InvalidMap {
                detail: "phi(0) must be 0".into(),
            });
        }
        if !psi.constant_term().is_zero() {
            return Err(Error::InvalidMap {
                detail: "psi(0, 0) must be 0".into(),
            });
        }
        if phi.coeff(1, 0, 0).is_zero() {
            return Err(Error::InvalidMap {
                detail: "phi'(0) must be nonzero".into(),
            });
        }
        if psi.coeff(0, 1, 0).is_zero() {
            return Err(Error::InvalidMap {
                detail: "psi_y(0, 0) must be nonzero".into(),
            });
        }
        Ok(FibreMap { phi, psi })
    }

    /// The identity map.
    pub fn identity() -> FibreMap {
        FibreMap {
            phi: Series::var(Var::X),
            psi: Series::var(Var::Y),
        }
    }

    /// The base component `phi`.
    pub fn phi(&self) -> &Series {
        &self.phi
    }

    /// The fibre component `psi`.
    pub fn psi(&self) -> &Series {
        &self.psi
    }

    /// Whether both components agree with `other` through weight `order`.
    pub fn eq_to_order(&self, other: &FibreMap, order: i64) -> bool {
        self.phi.eq_to_order(&other.phi, order) && self.psi.eq_to_order(&other.psi, order)
    }
}

/// The second prolongation of a fibre-preserving map: how the jet
/// coordinates transform. `p` maps to [`p`](Prolongation2::p) and `y_xx`
/// maps to `a0 + a1 y_xx`.
#[derive(Debug, Clone)]
pub struct Prolongation2 {
    /// Image of the first derivative: a series in `x, y, p`.
    pub p: Series,
    /// Inhomogeneous part of the second-derivative action.
    pub a0: Series,
    /// Factor multiplying `y_xx`; invertible near the origin.
    pub a1: Series,
}

/// Composition `m1 * m2`: the map applying `m2` first, so that pulling an
/// equation back along it equals pulling back along `m1`, then along `m2`.
///
/// # Errors
///
/// [`Error::NonzeroConstantSubstituent`] if a truncated outer component is
/// composed with an inadmissible inner one, [`Error::InvalidMap`] if the
/// result is not trustworthy far enough to be a map, and
/// [`Error::OrderExceeded`] if an exact composition would exceed the
/// representable exponent degree; truncate the factors to the working order
/// first in that case.
pub fn compose_maps(m1: &FibreMap, m2: &FibreMap) -> Result<FibreMap> {
    let zero = Series::zero();
    let phi = m1.phi.compose(&m2.phi, &zero, &zero)?;
    let psi = m1.psi.compose(&m2.phi, &m2.psi, &zero)?;
    FibreMap::new(phi, psi)
}

/// Computes the second prolongation of `map`, truncating any genuinely
/// infinite series (the reciprocals of `phi_x`) at `order`.
///
/// # Errors
///
/// [`Error::OrderExceeded`] if the components are not trustworthy enough to
/// determine the reciprocal's constant term.
pub fn prolong_map(map: &FibreMap, order: i64) -> Result<Prolongation2> {
    let phi_x = map.phi.diff(Var::X);
    let phi_xx = phi_x.diff(Var::X);
    let psi_x = map.psi.diff(Var::X);
    let psi_y = map.psi.diff(Var::Y);
    let p = Series::var(Var::P);

    // S = psi_x + psi_y p is the numerator of the prolonged first derivative.
    let s = &psi_x + &(&psi_y * &p);
    let r = if phi_x.validity().is_exact() && phi_x.terms().len() <= 1 {
        phi_x.reciprocal()?
    } else {
        phi_x.reciprocal_to(order)?
    };
    let r2 = &r * &r;
    let prolonged_p = &s * &r;
    let a1 = &psi_y * &r2;

    // Q = psi_xx + 2 psi_xy p + psi_yy p^2 collects the pure second
    // derivatives of psi along a solution curve.
    let psi_xx = psi_x.diff(Var::X);
    let psi_xy = psi_x.diff(Var::Y);
    let psi_yy = psi_y.diff(Var::Y);
    let q = &(&psi_xx + &(&psi_xy * &p).scale(&Rat::int(2))) + &(&psi_yy * &(&p * &p));
    let a0 = &(&q * &r2) - &(&(&s * &phi_xx) * &(&r2 * &r));
    Ok(Prolongation2 {
        p: prolonged_p,
        a0,
        a1,
    })
}

/// Pulls the equation `Y_XX = J(X, Y, P)` back along `map`, producing
/// `y_xx = K(x, y, p)`; work is truncated at weight `order`. The returned
/// right-hand side carries the trustworthy order implied by the inputs,
/// which may be lower than `order`.
///
/// # Errors
///
/// [`Error::NonzeroConstantSubstituent`] if the equation is truncated and
/// the prolonged first derivative has a nonzero value at the origin (that
/// is, `psi_x(0, 0) != 0`), since the result would then depend on unknown
/// coefficients; [`Error::ZeroConstantTerm`] or [`Error::OrderExceeded`] if
/// the map is degenerate or not trustworthy enough.
pub fn apply_map_to(e: &Ode, map: &FibreMap, order: i64) -> Result<Ode> {
    let pr = prolong_map(map, order)?;
    let moved = e.rhs().compose_to(&map.phi, &map.psi, &pr.p, order)?;
    let num = (&moved - &pr.a0).truncate(order);
    let a1_inv = if pr.a1.validity().is_exact() && pr.a1.terms().len() <= 1 {
        pr.a1.reciprocal()?
    } else {
        let cap = match num.valid_order() {
            Some(v) => v.min(order),
            None => order,
        };
        pr.a1.reciprocal_to(cap)?
    };
    let k = &num * &a1_inv;
    let k = match k.valid_order() {
        Some(_) => k,
        None => k.truncate(order),
    };
    Ok(Ode::new(k))
}

/// [`apply_map_to`] at the trustworthy order of the equation itself.
///
/// # Errors
///
/// As [`apply_map_to`]; additionally [`Error::OrderExceeded`] for an exact
/// equation, whose image under a map with non-constant `phi_x` is not a
/// polynomial and needs an explicit truncation order.
pub fn apply_map(e: &Ode, map: &FibreMap) -> Result<Ode> {
    match e.rhs().valid_order() {
        Some(n) => apply_map_to(e, map, n),
        None => Err(Error::order(
            "applying a map to an exact equation requires apply_map_to with an explicit order",
        )),
    }
}

/// An infinitesimal fibre-preserving transformation
/// `f(x) d/dx + g(x, y) d/dy`.
#[derive(Debug, Clone)]
pub struct VectorField {
    f: Series,
    g: Series,
}

impl VectorField {
    /// Validates the variable dependencies of the two components.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidMap`] if `f` involves `y` or `p`, or `g` involves `p`.
    pub fn new(f: Series, g: Series) -> Result<VectorField> {
        if !f.vars().subset_of(VarSet::X) {
            return Err(Error::InvalidMap {
                detail: "the d/dx component must be a series in x alone".into(),
            });
        }
        if !g.vars().subset_of(VarSet::XY) {
            return Err(Error::InvalidMap {
                detail: "the d/dy component must be a series in x and y".into(),
            });
        }
        Ok(VectorField { f, g })
    }

    /// The `d/dx` component.
    pub fn f(&self) -> &Series {
        &self.f
    }

    /// The `d/dy` component.
    pub fn g(&self) -> &Series {
        &self.g
    }

    /// Component-wise sum.
    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField {
            f: &self.f + &other.f,
            g: &self.g + &other.g,
        }
    }

    /// Component-wise scalar multiple.
    pub fn scale(&self, c: &Rat) -> VectorField {
        VectorField {
            f: self.f.scale(c),
            g: self.g.scale(c),
        }
    }

    /// Whether both components are zero through their trustworthy orders.
    pub fn is_zero(&self) -> bool {
        self.f.is_zero() && self.g.is_zero()
    }

    /// Applies the field as a derivation to a series in `x, y`.
    pub fn derive(&self, h: &Series) -> Series {
        &(&self.f * &h.diff(Var::X)) + &(&self.g * &h.diff(Var::Y))
    }
}

/// The prolongation of a vector field to the second jet space:
/// `f d/dx + g d/dy + x1 d/dp + (x2_0 + x2_1 y_xx) d/dy_xx`.
#[derive(Debug, Clone)]
pub struct FieldProlongation {
    /// Coefficient on `d/dp`: `g_x + (g_y - f_x) p`.
    pub x1: Series,
    /// Inhomogeneous part of the `d/dy_xx` coefficient:
    /// `g_xx + (2 g_xy - f_xx) p + g_yy p^2`.
    pub x2_0: Series,
    /// Part of the `d/dy_xx` coefficient multiplying `y_xx`: `g_y - 2 f_x`.
    pub x2_1: Series,
}

/// Prolongs a vector field to the second jet space.
pub fn prolong_field(v: &VectorField) -> FieldProlongation {
    let p = Series::var(Var::P);
    let f_x = v.f.diff(Var::X);
    let g_x = v.g.diff(Var::X);
    let g_y = v.g.diff(Var::Y);
    let x1 = &g_x + &(&(&g_y - &f_x) * &p);
    let g_xx = g_x.diff(Var::X);
    let g_xy = g_x.diff(Var::Y);
    let g_yy = g_y.diff(Var::Y);
    let f_xx = f_x.diff(Var::X);
    let x2_0 = &(&g_xx + &(&(&g_xy.scale(&Rat::int(2)) - &f_xx) * &p)) + &(&g_yy * &(&p * &p));
    let x2_1 = &g_y - &f_x.scale(&Rat::int(2));
    FieldProlongation { x1, x2_0, x2_1 }
}

/// The total derivative along solutions of `e`:
/// `D_x h = h_x + p h_y + K h_p`.
pub fn total_derivative(h: &Series, e: &Ode) -> Series {
    let p = Series::var(Var::P);
    &(&h.diff(Var::X) + &(&p * &h.diff(Var::Y))) + &(e.rhs() * &h.diff(Var::P))
}

/// The tangency defect of the prolonged field along the equation surface
/// `y_xx = K`. It vanishes identically exactly when the field is an
/// infinitesimal symmetry of the equation.
pub fn symmetry_defect(v: &VectorField, e: &Ode) -> Series {
    let pr = prolong_field(v);
    let k = e.rhs();
    let along = &(&(&v.f * &k.diff(Var::X)) + &(&v.g * &k.diff(Var::Y)))
        + &(&pr.x1 * &k.diff(Var::P));
    &(&pr.x2_0 + &(&pr.x2_1 * k)) - &along
}

/// Whether the field is a symmetry of the equation through the trustworthy
/// order of the defect.
pub fn is_symmetry(v: &VectorField, e: &Ode) -> bool {
    symmetry_defect(v, e).is_zero()
}

/// Pulls a vector field back along a map, truncating reciprocals at
/// `order`: the unique field whose pushforward under the map is `v`. If `v`
/// generates symmetries of an equation, the pullback generates symmetries
/// of the pulled-back equation.
///
/// # Errors
///
/// Propagates composition and reciprocal failures from the series layer.
pub fn pullback_field(v: &VectorField, map: &FibreMap, order: i64) -> Result<VectorField> {
    let zero = Series::zero();
    let phi_x = map.phi.diff(Var::X);
    let phi_x_inv = if phi_x.validity().is_exact() && phi_x.terms().len() <= 1 {
        phi_x.reciprocal()?
    } else {
        phi_x.reciprocal_to(order)?
    };
    let f_back = &v.f.compose_to(&map.phi, &zero, &zero, order)? * &phi_x_inv;
    let psi_y = map.psi.diff(Var::Y);
    let psi_y_inv = if psi_y.validity().is_exact() && psi_y.terms().len() <= 1 {
        psi_y.reciprocal()?
    } else {
        psi_y.reciprocal_to(order)?
    };
    let g_moved = v.g.compose_to(&map.phi, &map.psi, &zero, order)?;
    let g_back = &(&g_moved - &(&map.psi.diff(Var::X) * &f_back)) * &psi_y_inv;
    VectorField::new(f_back.truncate(order), g_back.truncate(order))
}

/// A polynomial in the flow parameter `t` with series coefficients,
/// `c_0 + c_1 t + ... + c_n t^n`.
#[derive(Debug, Clone)]
pub struct TSeries {
    coeffs: Vec<Series>,
}

impl TSeries {
    /// Builds from coefficients, constant term first.
    pub fn new(coeffs: Vec<Series>) -> TSeries {
        TSeries { coeffs }
    }

    /// The polynomial `s` of degree zero in `t`.
    pub fn from_series(s: Series) -> TSeries {
        TSeries { coeffs: vec![s] }
    }

    /// The coefficient of `t^n` (zero beyond the stored degree).
    pub fn coeff_t(&self, n: usize) -> Series {
        self.coeffs.get(n).cloned().unwrap_or_else(Series::zero)
    }

    /// Degree bound: number of stored coefficients minus one.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Term-wise sum.
    pub fn add(&self, other: &TSeries) -> TSeries {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len)
            .map(|n| &self.coeff_t(n) + &other.coeff_t(n))
            .collect();
        TSeries { coeffs }
    }

    /// Term-wise difference.
    pub fn sub(&self, other: &TSeries) -> TSeries {
        self.add(&other.scale(&Rat::int(-1)))
    }

    /// Scalar multiple.
    pub fn scale(&self, c: &Rat) -> TSeries {
        TSeries {
            coeffs: self.coeffs.iter().map(|s| s.scale(c)).collect(),
        }
    }

    /// Product, truncated at degree `t_cap` in `t`.
    pub fn mul(&self, other: &TSeries, t_cap: usize) -> TSeries {
        let len = (self.coeffs.len() + other.coeffs.len()).saturating_sub(1).min(t_cap + 1);
        let mut coeffs = vec![Series::zero(); len.max(1)];
        for (i, a) in self.coeffs.iter().enumerate() {
            if i > t_cap {
                break;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if i + j > t_cap || i + j >= len {
                    break;
                }
                coeffs[i + j] = &coeffs[i + j] + &(a * b);
            }
        }
        TSeries { coeffs }
    }

    /// Coefficient-wise derivative in a jet variable.
    pub fn diff(&self, var: Var) -> TSeries {
        TSeries {
            coeffs: self.coeffs.iter().map(|s| s.diff(var)).collect(),
        }
    }

    /// Derivative in the flow parameter `t`.
    pub fn diff_t(&self) -> TSeries {
        if self.coeffs.len() <= 1 {
            return TSeries::from_series(Series::zero());
        }
        let coeffs = self.coeffs[1..]
            .iter()
            .enumerate()
            .map(|(n, s)| s.scale(&Rat::int(n as i64 + 1)))
            .collect();
        TSeries { coeffs }
    }

    /// Whether every coefficient is zero through its trustworthy order.
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Series::is_zero)
    }

    /// Multiplicative inverse in `t` up to degree `t_cap`, assuming the
    /// `t^0` coefficient is invertible as a series.
    ///
    /// # Errors
    ///
    /// Propagates the reciprocal failure of the `t^0` coefficient; the
    /// coefficient must be an exact series with invertible constant part.
    pub fn recip_t(&self, t_cap: usize) -> Result<TSeries> {
        let r0 = self.coeff_t(0).reciprocal()?;
        let mut coeffs = vec![r0.clone()];
        for n in 1..=t_cap {
            let mut acc = Series::zero();
            for u in 1..=n {
                acc = &acc + &(&self.coeff_t(u) * &coeffs[n - u]);
            }
            coeffs.push(&(-&acc) * &r0);
        }
        Ok(TSeries { coeffs })
    }

    /// Substitutes `t`-polynomials for the variables of `outer`, truncating
    /// at degree `t_cap` in `t`.
    ///
    /// # Errors
    ///
    /// [`Error::NonzeroConstantSubstituent`] when `outer` is truncated and a
    /// substituent used by it has a nonzero value at the origin.
    pub fn compose_outer(
        outer: &Series,
        sub_x: &TSeries,
        sub_y: &TSeries,
        sub_p: &TSeries,
        t_cap: usize,
    ) -> Result<TSeries> {
        let sub = |v: Var| -> &TSeries {
            match v {
                Var::X => sub_x,
                Var::Y => sub_y,
                Var::P => sub_p,
            }
        };
        if !outer.validity().is_exact() {
            for v in outer.vars().iter() {
                if !sub(v).coeff_t(0).constant_term().is_zero() {
                    return Err(Error::NonzeroConstantSubstituent {
                        var: match v {
                            Var::X => 'x',
                            Var::Y => 'y',
                            Var::P => 'p',
                        },
                    });
                }
            }
        }
        let one = TSeries::from_series(Series::one());
        let mut pow_x: Vec<TSeries> = vec![one.clone()];
        let mut pow_y: Vec<TSeries> = vec![one.clone()];
        let mut pow_p: Vec<TSeries> = vec![one];
        let grow = |pows: &mut Vec<TSeries>, base: &TSeries, upto: u32| {
            while pows.len() <= upto as usize {
                let next = pows.last().unwrap().mul(base, t_cap);
                pows.push(next);
            }
        };
        let mut acc = TSeries::from_series(Series::zero());
        for (e, c) in outer.terms() {
            grow(&mut pow_x, sub_x, e.i());
            grow(&mut pow_y, sub_y, e.j());
            grow(&mut pow_p, sub_p, e.k());
            let xy = pow_x[e.i() as usize].mul(&pow_y[e.j() as usize], t_cap);
            let xyp = xy.mul(&pow_p[e.k() as usize], t_cap);
            acc = acc.add(&xyp.scale(c));
        }
        Ok(acc)
    }
}

/// The flow of a vector field as polynomials in `t` up to degree `t_cap`:
/// the pair `(x(t), y(t))` with `x(0) = x`, `y(0) = y`, solving
/// `dx/dt = f(x)`, `dy/dt = g(x, y)` coefficient-wise.
pub fn flow_series(v: &VectorField, t_cap: usize) -> (TSeries, TSeries) {
    let mut xt = vec![Series::var(Var::X)];
    let mut yt = vec![Series::var(Var::Y)];
    for n in 1..=t_cap {
        let inv_n = Rat::new(1, n as i64);
        let next_x = v.derive(xt.last().unwrap()).scale(&inv_n);
        let next_y = v.derive(yt.last().unwrap()).scale(&inv_n);
        xt.push(next_x);
        yt.push(next_y);
    }
    (TSeries::new(xt), TSeries::new(yt))
}

/// Evaluates the flow of `v` at unit time as a fibre-preserving map with
/// components trustworthy to `order`. The sum over flow terms must either
/// terminate exactly or gain weight at every step; fields whose unit-time
/// flow has irrational coefficients are rejected.
///
/// # Errors
///
/// [`Error::FlowEvaluation`] if the flow terms neither vanish nor escape
/// past `order`; [`Error::InvalidMap`] if the resulting map does not fix the
/// origin or is degenerate there.
pub fn flow_map_at_unit(v: &VectorField, order: i64) -> Result<FibreMap> {
    let weight_gain = {
        let df = v.f.min_weight().map(|w| w as i64 - 1);
        let dg = v.g.min_weight().map(|w| w as i64 - 2);
        match (df, dg) {
            (None, None) => None,
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (Some(a), Some(b)) => Some(a.min(b)),
        }
    };
    let mut term_x = Series::var(Var::X);
    let mut term_y = Series::var(Var::Y);
    let mut phi = term_x.clone();
    let mut psi = term_y.clone();
    let mut exact_end = false;
    let max_steps = (4 * order.max(1) + 50) as usize;
    for n in 1..=max_steps {
        let inv_n = Rat::new(1, n as i64);
        term_x = v.derive(&term_x).scale(&inv_n);
        term_y = v.derive(&term_y).scale(&inv_n);
        if term_x.is_zero() && term_y.is_zero() {
            exact_end = true;
            break;
        }
        phi = &phi + &term_x;
        psi = &psi + &term_y;
        let past_order = term_x.min_weight().is_none_or(|w| w as i64 > order)
            && term_y.min_weight().is_none_or(|w| w as i64 > order);
        if past_order && weight_gain.is_some_and(|d| d >= 1) {
            break;
        }
        if n == max_steps {
            return Err(Error::FlowEvaluation {
                detail: "flow terms at unit time neither terminate nor gain weight".into(),
            });
        }
    }
    let (phi, psi) = if exact_end && v.f.validity().is_exact() && v.g.validity().is_exact() {
        (phi, psi)
    } else {
        (phi.truncate(order), psi.truncate(order))
    };
    FibreMap::new(phi.set_zero(Var::Y), psi)
}

/// The second prolongation of the flow of `v`, as `t`-polynomials up to
/// degree `t_cap`: the transformed first derivative and the affine action
/// `(a0, a1)` on `y_xx`. At `t = 0` these are `(p, 0, 1)`; the coefficients
/// of `t` are the components of the prolonged field.
///
/// # Errors
///
/// Propagates reciprocal failures; the flow of an admissible field has an
/// invertible `phi_x` at `t^0`, so this does not fail for polynomial fields.
pub fn prolong_flow(v: &VectorField, t_cap: usize) -> Result<(TSeries, TSeries, TSeries)> {
    let (xt, yt) = flow_series(v, t_cap);
    let phi_x = xt.diff(Var::X);
    let phi_xx = phi_x.diff(Var::X);
    let psi_x = yt.diff(Var::X);
    let psi_y = yt.diff(Var::Y);
    let p = TSeries::from_series(Series::var(Var::P));
    let s = psi_x.add(&psi_y.mul(&p, t_cap));
    let r = phi_x.recip_t(t_cap)?;
    let r2 = r.mul(&r, t_cap);
    let prolonged_p = s.mul(&r, t_cap);
    let a1 = psi_y.mul(&r2, t_cap);
    let psi_xx = psi_x.diff(Var::X);
    let psi_xy = psi_x.diff(Var::Y);
    let psi_yy = psi_y.diff(Var::Y);
    let q = psi_xx
        .add(&psi_xy.mul(&p, t_cap).scale(&Rat::int(2)))
        .add(&psi_yy.mul(&p.mul(&p, t_cap), t_cap));
    let a0 = q.mul(&r2, t_cap).sub(&s.mul(&phi_xx, t_cap).mul(&r2.mul(&r, t_cap), t_cap));
    Ok((prolonged_p, a0, a1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Validity;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    /// phi = x/(1 - c x) as a truncated series in x.
    fn moebius_phi(c: &Rat, order: i64) -> Series {
        let mut terms = Vec::new();
        let mut coeff = Rat::one();
        for n in 1..=order.max(0) as u32 {
            terms.push(((n, 0, 0), coeff.clone()));
            coeff = &coeff * c;
        }
        Series::from_terms(VarSet::X, Validity::Truncated(order), terms)
    }

    /// psi = y/(1 - c x) as a truncated series in x, y.
    fn moebius_psi(c: &Rat, order: i64) -> Series {
        let mut terms = Vec::new();
        let mut coeff = Rat::one();
        let mut i = 0u32;
        while (i + 2) as i64 <= order {
            terms.push(((i, 1, 0), coeff.clone()));
            coeff = &coeff * c;
            i += 1;
        }
        Series::from_terms(VarSet::XY, Validity::Truncated(order), terms)
    }

    fn field(f: Series, g: Series) -> VectorField {
        VectorField::new(f, g).expect("admissible field components")
    }

    #[test]
    fn identity_map_prolongs_trivially() {
        let pr = prolong_map(&FibreMap::identity(), 10).unwrap();
        assert!(pr.p.same_terms(&Series::var(Var::P)));
        assert!(pr.a0.is_zero());
        assert!(pr.a1.same_terms(&Series::one()));
    }

    #[test]
    fn scaling_map_prolongation_and_action() {
        // (x, y) -> (2x, 3y): P = (3/2) p, a1 = 3/4, a0 = 0.
        let m = FibreMap::new(
            Series::var(Var::X).scale(&rat(2, 1)),
            Series::var(Var::Y).scale(&rat(3, 1)),
        )
        .unwrap();
        let pr = prolong_map(&m, 10).unwrap();
        assert!(pr.p.same_terms(&Series::var(Var::P).scale(&rat(3, 2))));
        assert!(pr.a0.is_zero());
        assert!(pr.a1.same_terms(&Series::constant(rat(3, 4))));

        // Y_XX = P^2 pulls back to y_xx = 3 p^2.
        let e = Ode::new(Series::from_terms(
            VarSet::XYP,
            Validity::Truncated(8),
            [((0u32, 0u32, 2u32), Rat::one())],
        ));
        let k = apply_map(&e, &m).unwrap();
        assert_eq!(k.rhs().coeff(0, 0, 2), Rat::int(3), "quadratic term");
        assert_eq!(k.rhs().terms().len(), 1, "no other terms");
        assert_eq!(k.rhs().valid_order(), Some(8));
    }

    #[test]
    fn moebius_map_preserves_the_flat_equation() {
        let c = rat(1, 2);
        let m = FibreMap::new(moebius_phi(&c, 11), moebius_psi(&c, 12)).unwrap();
        let flat = Ode::flat(10);
        let k = apply_map(&flat, &m).unwrap();
        assert!(k.rhs().is_zero(), "flat equation must stay flat, got {}", k.rhs());
        assert_eq!(k.rhs().valid_order(), Some(10), "order must be preserved");
    }

    #[test]
    fn map_composition_matches_sequential_pullback() {
        let m1 = FibreMap::new(
            Series::var(Var::X).scale(&rat(2, 1)),
            &Series::var(Var::Y) + &Series::monomial(2, 0, 0, rat(1, 1)),
        )
        .unwrap();
        let m2 = FibreMap::new(
            &Series::var(Var::X) + &Series::monomial(2, 0, 0, rat(1, 3)),
            &Series::var(Var::Y) + &Series::monomial(1, 1, 0, rat(1, 2)),
        )
        .unwrap();
        let e = Ode::new(Series::from_terms(
            VarSet::XYP,
            Validity::Truncated(8),
            [
                ((0u32, 0u32, 2u32), rat(1, 1)),
                ((1, 1, 0), rat(-2, 3)),
                ((0, 1, 1), rat(1, 5)),
            ],
        ));
        let sequential = apply_map(&apply_map(&e, &m1).unwrap(), &m2).unwrap();
        let composed = apply_map(&e, &compose_maps(&m1, &m2).unwrap()).unwrap();
        let order = sequential
            .rhs()
            .valid_order()
            .unwrap()
            .min(composed.rhs().valid_order().unwrap());
        assert!(order >= 8, "exact polynomial maps must preserve the order");
        assert!(
            sequential.rhs().eq_to_order(composed.rhs(), order),
            "pullback along a composition must equal sequential pullback"
        );
    }

    #[test]
    fn prolonged_field_components() {
        // x^2 d/dx + x y d/dy prolongs with x1 = y - x p and x2_1 = -3x.
        let v = field(
            Series::monomial(2, 0, 0, Rat::one()),
            Series::monomial(1, 1, 0, Rat::one()),
        );
        let pr = prolong_field(&v);
        let expected_x1 = &Series::var(Var::Y) - &Series::monomial(1, 0, 1, Rat::one());
        assert!(pr.x1.same_terms(&expected_x1));
        assert!(pr.x2_0.is_zero());
        assert!(pr.x2_1.same_terms(&Series::monomial(1, 0, 0, rat(-3, 1))));
    }

    #[test]
    fn flat_equation_symmetries() {
        let flat = Ode::flat(10);
        let x = Series::var(Var::X);
        let y = Series::var(Var::Y);
        let basis = [
            field(Series::one(), Series::zero()),
            field(Series::zero(), Series::one()),
            field(Series::zero(), x.clone()),
            field(Series::zero(), y.clone()),
            field(x.clone(), Series::zero()),
            field(
                Series::monomial(2, 0, 0, Rat::one()),
                Series::monomial(1, 1, 0, Rat::one()),
            ),
        ];
        for (idx, v) in basis.iter().enumerate() {
            assert!(
                is_symmetry(v, &flat),
                "basis field {idx} must be tangent to the flat equation"
            );
        }
    }

    #[test]
    fn symmetry_check_detects_non_symmetries() {
        // y_xx = y: scaling in y is a symmetry, x d/dy is not.
        let e = Ode::new(Series::from_terms(
            VarSet::XYP,
            Validity::Truncated(10),
            [((0u32, 1u32, 0u32), Rat::one())],
        ));
        let scaling = field(Series::zero(), Series::var(Var::Y));
        assert!(is_symmetry(&scaling, &e));
        let shear = field(Series::zero(), Series::var(Var::X));
        let defect = symmetry_defect(&shear, &e);
        assert!(!defect.is_zero());
        assert_eq!(defect.coeff(1, 0, 0), rat(-1, 1));
    }

    #[test]
    fn pullback_of_translation_along_moebius_is_a_flat_symmetry() {
        let c = rat(1, 3);
        let m = FibreMap::new(moebius_phi(&c, 11), moebius_psi(&c, 12)).unwrap();
        let translation = field(Series::one(), Series::zero());
        let back = pullback_field(&translation, &m, 8).unwrap();
        // f = (1 - c x)^2, g = -c y (1 - c x).
        assert_eq!(back.f().coeff(0, 0, 0), Rat::one());
        assert_eq!(back.f().coeff(1, 0, 0), rat(-2, 3));
        assert_eq!(back.f().coeff(2, 0, 0), rat(1, 9));
        assert_eq!(back.g().coeff(0, 1, 0), rat(-1, 3));
        assert_eq!(back.g().coeff(1, 1, 0), rat(1, 9));
        assert!(is_symmetry(&back, &Ode::flat(6)));
    }

    #[test]
    fn flow_of_quadratic_field_is_geometric() {
        // x^2 d/dx + x y d/dy flows to (x/(1 - t x), y/(1 - t x)).
        let v = field(
            Series::monomial(2, 0, 0, Rat::one()),
            Series::monomial(1, 1, 0, Rat::one()),
        );
        let (xt, yt) = flow_series(&v, 3);
        for n in 0..=3u32 {
            assert!(
                xt.coeff_t(n as usize).same_terms(&Series::monomial(n + 1, 0, 0, Rat::one())),
                "x flow coefficient of t^{n}"
            );
            assert!(
                yt.coeff_t(n as usize).same_terms(&Series::monomial(n, 1, 0, Rat::one())),
                "y flow coefficient of t^{n}"
            );
        }
    }

    #[test]
    fn unit_time_flow_matches_moebius_map() {
        let v = field(
            Series::monomial(2, 0, 0, Rat::one()),
            Series::monomial(1, 1, 0, Rat::one()),
        );
        let m = flow_map_at_unit(&v, 9).unwrap();
        let expected = FibreMap::new(moebius_phi(&Rat::one(), 9), moebius_psi(&Rat::one(), 9)).unwrap();
        assert!(m.eq_to_order(&expected, 9));
    }

    #[test]
    fn unit_time_flow_rejects_inadmissible_fields() {
        // y d/dy flows to (x, e^t y): irrational at unit time.
        let scaling = field(Series::zero(), Series::var(Var::Y));
        assert!(matches!(
            flow_map_at_unit(&scaling, 6),
            Err(Error::FlowEvaluation { .. })
        ));
        // d/dx flows to a translation, which does not fix the origin.
        let translation = field(Series::one(), Series::zero());
        assert!(matches!(
            flow_map_at_unit(&translation, 6),
            Err(Error::InvalidMap { .. })
        ));
    }

    #[test]
    fn flow_satisfies_its_defining_equation() {
        let v = field(
            &Series::monomial(2, 0, 0, rat(1, 2)) + &Series::monomial(3, 0, 0, rat(-1, 3)),
            &Series::monomial(1, 1, 0, Rat::one()) + &Series::monomial(0, 2, 0, rat(2, 5)),
        );
        let t_cap = 4;
        let (xt, yt) = flow_series(&v, t_cap);
        let f_along = TSeries::compose_outer(
            v.f(),
            &xt,
            &yt,
            &TSeries::from_series(Series::zero()),
            t_cap - 1,
        )
        .unwrap();
        let g_along = TSeries::compose_outer(
            v.g(),
            &xt,
            &yt,
            &TSeries::from_series(Series::zero()),
            t_cap - 1,
        )
        .unwrap();
        let res_x = xt.diff_t().sub(&f_along);
        let res_y = yt.diff_t().sub(&g_along);
        for n in 0..t_cap {
            assert!(
                res_x.coeff_t(n).is_zero() && res_y.coeff_t(n).is_zero(),
                "flow equation residual at t^{n}"
            );
        }
    }

    #[test]
    fn flow_prolongation_linearizes_to_field_prolongation() {
        let v = field(
            Series::monomial(2, 0, 0, Rat::one()),
            Series::monomial(1, 1, 0, Rat::one()),
        );
        let (pt, a0t, a1t) = prolong_flow(&v, 2).unwrap();
        assert!(pt.coeff_t(0).same_terms(&Series::var(Var::P)));
        assert!(a0t.coeff_t(0).is_zero());
        assert!(a1t.coeff_t(0).same_terms(&Series::one()));
        let pr = prolong_field(&v);
        assert!(
            pt.coeff_t(1).same_terms(&pr.x1),
            "t-linear part of the prolonged flow must be x1, got {} vs {}",
            pt.coeff_t(1),
            pr.x1
        );
        assert!(a0t.coeff_t(1).same_terms(&pr.x2_0));
        assert!(a1t.coeff_t(1).same_terms(&pr.x2_1));
    }

    #[test]
    fn total_derivative_of_jet_coordinates() {
        let e = Ode::new(Series::from_terms(
            VarSet::XYP,
            Validity::Truncated(6),
            [((0u32, 1u32, 0u32), Rat::one())],
        ));
        assert!(total_derivative(&Series::var(Var::Y), &e).same_terms(&Series::var(Var::P)));
        assert!(total_derivative(&Series::var(Var::P), &e).eq_to_order(e.rhs(), 4));
    }
}
