//! The linearized action of near-identity maps on equations, its kernel,
//! the subspace on which it is injective, and the weight-by-weight formal
//! normalization.
//!
//! A correction pair `(f(x), g(x, y))` acts on equations infinitesimally
//! through the operator
//!
//! ```text
//! L(f, g) = g_xx + (2 g_xy - f_xx) p + g_yy p^2 ,
//! ```
//!
//! which is also the determining expression for symmetries of the flat
//! equation: `L(f, g) = 0` exactly when `f d/dx + g d/dy` is tangent to
//! `y_xx = 0`. The kernel of `L` among polynomial pairs is six-dimensional
//! at every order, and `L` is injective on the complement `F'` of pairs
//! whose low coefficients are removed (`f = O(x^2)`, `g` with no constant or
//! linear part and `g_xy(0, 0) = 0`).
//!
//! Normalization proceeds weight by weight: at stage `alpha` the non-normal
//! part of the weight-`alpha` coefficients is the defect, the unique
//! correction pair in `F'` with `L` matching the defect is solved for, and
//! the genuine polynomial map `(x + f, y + g)` is applied through
//! [`crate::jet::apply_map`]. Weights below `alpha` are never touched again,
//! and the weight-`alpha` coefficients change by exactly `-L` of the
//! correction, so the process terminates with an equation in normal form to
//! the full requested order.

use crate::error::{Error, Result};
use crate::invariants::{check_normal, is_normal_exponent};
use crate::jet::{apply_map, compose_maps, prolong_field, FibreMap, Ode, VectorField};
use crate::rat::Rat;
use crate::series::{Series, Validity, Var, VarSet};

/// A pair `(f(x), g(x, y))` of correction components, the infinitesimal
/// data of a near-identity map `(x + f, y + g)`.
#[derive(Debug, Clone)]
pub struct CorrectionPair {
    f: Series,
    g: Series,
}

impl CorrectionPair {
    /// Validates the variable dependencies of the components.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidMap`] if `f` involves `y` or `p`, or `g` involves `p`.
    pub fn new(f: Series, g: Series) -> Result<CorrectionPair> {
        if !f.vars().subset_of(VarSet::X) {
            return Err(Error::InvalidMap {
                detail: "the x-correction must be a series in x alone".into(),
            });
        }
        if !g.vars().subset_of(VarSet::XY) {
            return Err(Error::InvalidMap {
                detail: "the y-correction must be a series in x and y".into(),
            });
        }
        Ok(CorrectionPair { f, g })
    }

    /// The zero pair.
    pub fn zero() -> CorrectionPair {
        CorrectionPair {
            f: Series::zero(),
            g: Series::zero(),
        }
    }

    /// The `x`-component.
    pub fn f(&self) -> &Series {
        &self.f
    }

    /// The `y`-component.
    pub fn g(&self) -> &Series {
        &self.g
    }

    /// Whether both components vanish through their trustworthy orders.
    pub fn is_zero(&self) -> bool {
        self.f.is_zero() && self.g.is_zero()
    }

    /// The pair viewed as the vector field `f d/dx + g d/dy`.
    pub fn as_field(&self) -> VectorField {
        VectorField::new(self.f.clone(), self.g.clone())
            .expect("correction components are validated on construction")
    }

    /// The near-identity map `(x + f, y + g)`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidMap`] if the components do not leave the origin fixed
    /// with an invertible linear part.
    pub fn as_map(&self) -> Result<FibreMap> {
        FibreMap::new(&Series::var(Var::X) + &self.f, &Series::var(Var::Y) + &self.g)
    }
}

/// The linearized action of the correction pair on equations:
/// `g_xx + (2 g_xy - f_xx) p + g_yy p^2`. Applying the near-identity map
/// `(x + f, y + g)` to an equation changes its weight-`alpha` part by
/// exactly the negative of this series when the pair is concentrated in
/// weights `alpha + 1` and `alpha + 2`.
pub fn linearized_action(c: &CorrectionPair) -> Series {
    prolong_field(&c.as_field()).x2_0
}

/// The determining expression for infinitesimal symmetries of the flat
/// equation; zero exactly when `v` is tangent to `y_xx = 0`. Coincides with
/// [`linearized_action`] on the components of `v`.
pub fn determining_equation(v: &VectorField) -> Series {
    prolong_field(v).x2_0
}

/// Whether the pair lies in the injectivity subspace: `f = O(x^2)` and `g`
/// free of constant, `x`, `y`, and `xy` monomials.
pub fn in_fprime(c: &CorrectionPair) -> bool {
    c.f.coeff(0, 0, 0).is_zero()
        && c.f.coeff(1, 0, 0).is_zero()
        && c.g.coeff(0, 0, 0).is_zero()
        && c.g.coeff(1, 0, 0).is_zero()
        && c.g.coeff(0, 1, 0).is_zero()
        && c.g.coeff(1, 1, 0).is_zero()
}

/// Reduces the matrix to row echelon form in place and returns the pivot
/// column of each nonzero row.
fn row_reduce(mat: &mut [Vec<Rat>]) -> Vec<usize> {
    let rows = mat.len();
    let cols = if rows == 0 { 0 } else { mat[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(pr) = (r..rows).find(|&i| !mat[i][c].is_zero()) else {
            continue;
        };
        mat.swap(r, pr);
        let inv = mat[r][c].recip();
        for v in mat[r].iter_mut() {
            *v = &*v * &inv;
        }
        let pivot_row = mat[r].clone();
        for (i, row) in mat.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let factor = row[c].clone();
                for (dst, src) in row.iter_mut().zip(&pivot_row) {
                    *dst = &*dst - &(src * &factor);
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    pivots
}

/// A basis of the null space of the matrix, one vector per free column.
fn null_space(mut mat: Vec<Vec<Rat>>, cols: usize) -> Vec<Vec<Rat>> {
    let pivots = row_reduce(&mut mat);
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = vec![Rat::zero(); cols];
        v[free] = Rat::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = -&mat[row][free];
        }
        basis.push(v);
    }
    basis
}

/// Computes a basis of the kernel of [`linearized_action`] among polynomial
/// pairs of weight at most `order`. The kernel is six-dimensional at every
/// order at least 3.
///
/// # Panics
///
/// Panics if `order < 3`.
pub fn kernel_basis(order: i64) -> Vec<CorrectionPair> {
    assert!(order >= 3, "kernel_basis requires order >= 3");
    let order = order as u32;

    // Unknowns: f_j x^j for j <= order, then g_{a,b} x^a y^b for
    // a + 2b <= order.
    let mut f_index = Vec::new();
    for j in 0..=order {
        f_index.push(j);
    }
    let mut g_index = Vec::new();
    for b in 0..=order / 2 {
        for a in 0..=order - 2 * b {
            g_index.push((a, b));
        }
    }
    let cols = f_index.len() + g_index.len();
    let g_col = |a: u32, b: u32| -> Option<usize> {
        g_index
            .iter()
            .position(|&(x, y)| (x, y) == (a, b))
            .map(|p| p + f_index.len())
    };

    // Equations: every coefficient of g_xx + (2 g_xy - f_xx) p + g_yy p^2.
    let mut rows: Vec<Vec<Rat>> = Vec::new();
    let mut push_row = |entries: Vec<(usize, Rat)>| {
        let mut row = vec![Rat::zero(); cols];
        let mut nonzero = false;
        for (c, v) in entries {
            if !v.is_zero() {
                nonzero = true;
            }
            row[c] = v;
        }
        if nonzero {
            rows.push(row);
        }
    };
    for i in 0..=order {
        for j in 0..=order / 2 {
            // p^0 coefficient at x^i y^j: (i+1)(i+2) g_{i+2,j}.
            if let Some(c) = g_col(i + 2, j) {
                push_row(vec![(c, Rat::int(((i + 1) * (i + 2)) as i64))]);
            }
            // p^1 coefficient at x^i y^j: 2(i+1)(j+1) g_{i+1,j+1} - (i+1)(i+2) f_{i+2} [j=0].
            let mut entries = Vec::new();
            if let Some(c) = g_col(i + 1, j + 1) {
                entries.push((c, Rat::int((2 * (i + 1) * (j + 1)) as i64)));
            }
            if j == 0 && i + 2 <= order {
                entries.push(((i + 2) as usize, Rat::int(-(((i + 1) * (i + 2)) as i64))));
            }
            push_row(entries);
            // p^2 coefficient at x^i y^j: (j+1)(j+2) g_{i,j+2}.
            if let Some(c) = g_col(i, j + 2) {
                push_row(vec![(c, Rat::int(((j + 1) * (j + 2)) as i64))]);
            }
        }
    }

    let basis = null_space(rows, cols);
    basis
        .into_iter()
        .map(|v| {
            let f = Series::from_terms(
                VarSet::X,
                Validity::Exact,
                f_index
                    .iter()
                    .enumerate()
                    .map(|(c, &j)| ((j, 0, 0), v[c].clone())),
            );
            let g = Series::from_terms(
                VarSet::XY,
                Validity::Exact,
                g_index
                    .iter()
                    .enumerate()
                    .map(|(c, &(a, b))| ((a, b, 0), v[c + f_index.len()].clone())),
            );
            CorrectionPair { f, g }
        })
        .collect()
}

/// The six classical symmetry generators of the flat equation: the two
/// translations, the three linear fields, and the quadratic pair
/// `(x^2, xy)`.
pub fn classical_kernel() -> Vec<CorrectionPair> {
    let x = Series::var(Var::X);
    let y = Series::var(Var::Y);
    let pairs = [
        (Series::one(), Series::zero()),
        (Series::zero(), Series::one()),
        (Series::zero(), x.clone()),
        (Series::zero(), y),
        (x, Series::zero()),
        (
            Series::monomial(2, 0, 0, Rat::one()),
            Series::monomial(1, 1, 0, Rat::one()),
        ),
    ];
    pairs
        .into_iter()
        .map(|(f, g)| CorrectionPair::new(f, g).expect("classical components are admissible"))
        .collect()
}

/// Coordinates of the pairs over the union of their monomials, one row per
/// pair, for exact rank computations.
fn coordinate_rows(pairs: &[&CorrectionPair]) -> Vec<Vec<Rat>> {
    let mut monomials = std::collections::BTreeSet::new();
    for p in pairs {
        for (e, _) in p.f.terms() {
            monomials.insert((0u8, e.i(), e.j()));
        }
        for (e, _) in p.g.terms() {
            monomials.insert((1u8, e.i(), e.j()));
        }
    }
    let monomials: Vec<_> = monomials.into_iter().collect();
    pairs
        .iter()
        .map(|p| {
            monomials
                .iter()
                .map(|&(tag, i, j)| {
                    if tag == 0 {
                        p.f.coeff(i, j, 0)
                    } else {
                        p.g.coeff(i, j, 0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Whether the pairs span exactly the six-dimensional symmetry algebra of
/// the flat equation: six elements, each annihilated by the linearized
/// action, whose span contains every classical generator.
pub fn matches_flat_symmetries(basis: &[CorrectionPair]) -> bool {
    if basis.len() != 6 {
        return false;
    }
    if basis.iter().any(|c| !linearized_action(c).is_zero()) {
        return false;
    }
    let classical = classical_kernel();
    let basis_refs: Vec<&CorrectionPair> = basis.iter().collect();
    let rank_basis = {
        let mut rows = coordinate_rows(&basis_refs);
        row_reduce(&mut rows).len()
    };
    if rank_basis != 6 {
        return false;
    }
    for c in &classical {
        let mut with: Vec<&CorrectionPair> = basis.iter().collect();
        with.push(c);
        let mut rows = coordinate_rows(&with);
        if row_reduce(&mut rows).len() != 6 {
            return false;
        }
    }
    true
}

/// The non-normal part of the weight-`alpha` coefficients of the equation.
///
/// # Errors
///
/// [`Error::NotNormalBelow`] if some weight below `alpha` still has a
/// non-normal coefficient; [`Error::OrderExceeded`] if `alpha` exceeds the
/// trustworthy order.
pub fn normal_defect(e: &Ode, alpha: u32) -> Result<Series> {
    for (exp, _) in e.rhs().terms() {
        if exp.weight() < alpha && !is_normal_exponent(exp.i(), exp.j(), exp.k()) {
            return Err(Error::NotNormalBelow { alpha });
        }
    }
    let slice = e.rhs().project_weight(alpha)?;
    let terms: Vec<((u32, u32, u32), Rat)> = slice
        .terms()
        .iter()
        .filter(|(exp, _)| !is_normal_exponent(exp.i(), exp.j(), exp.k()))
        .map(|(exp, c)| ((exp.i(), exp.j(), exp.k()), c.clone()))
        .collect();
    Ok(Series::from_terms(VarSet::XYP, Validity::Exact, terms))
}

/// Solves for the unique correction pair in the injectivity subspace whose
/// linearized action matches the defect on the non-normal monomials. The
/// components are concentrated in weights `alpha + 1` (for `f`) and
/// `alpha + 2` (for `g`).
///
/// # Errors
///
/// [`Error::NotSemiHomogeneous`] if the defect is not concentrated in
/// weight `alpha`; [`Error::UnsolvableDefect`] if it contains a normal-form
/// monomial (which [`normal_defect`] never produces).
pub fn solve_stage(defect: &Series, alpha: u32) -> Result<CorrectionPair> {
    if !defect.is_semi_homogeneous(alpha) {
        return Err(Error::NotSemiHomogeneous { alpha });
    }
    let mut g_terms: Vec<((u32, u32, u32), Rat)> = Vec::new();
    let mut slope_row: Option<Rat> = None;
    let mut g_coupling = Rat::zero();
    for (exp, d) in defect.terms() {
        let (i, j, k) = (exp.i(), exp.j(), exp.k());
        if is_normal_exponent(i, j, k) {
            return Err(Error::UnsolvableDefect { i, j, k });
        }
        match k {
            0 => {
                // g_xx row: (i+1)(i+2) g_{i+2,j} = d.
                let value = d * &Rat::new(1, ((i + 1) * (i + 2)) as i64);
                if j == 1 {
                    g_coupling = value.clone();
                }
                g_terms.push(((i + 2, j, 0), value));
            }
            1 if i == 0 && j >= 1 => {
                // 2 g_xy row at x^0 y^j: 2(j+1) g_{1,j+1} = d.
                g_terms.push(((1, j + 1, 0), d * &Rat::new(1, 2 * (j + 1) as i64)));
            }
            1 if j == 0 => {
                slope_row = Some(d.clone());
            }
            2 if i == 0 => {
                // g_yy row at y^j: (j+1)(j+2) g_{0,j+2} = d.
                g_terms.push(((0, j + 2, 0), d * &Rat::new(1, ((j + 1) * (j + 2)) as i64)));
            }
            _ => {
                return Err(Error::UnsolvableDefect { i, j, k });
            }
        }
    }
    let f = if alpha >= 1 && (slope_row.is_some() || !g_coupling.is_zero()) {
        // 2 alpha g_{alpha,1} - alpha (alpha+1) f_{alpha+1} = d. The row is
        // active even when the defect has no x^(alpha-1) p term, because the
        // g_xy part of the p^0 solution at x^(alpha-2) y spills onto it.
        let d = slope_row.unwrap_or_else(Rat::zero);
        let a = alpha as i64;
        let coeff = &(&(&Rat::int(2 * a) * &g_coupling) - &d) * &Rat::new(1, a * (a + 1));
        Series::from_terms(VarSet::X, Validity::Exact, [((alpha + 1, 0, 0), coeff)])
    } else {
        Series::zero()
    };
    let g = Series::from_terms(VarSet::XY, Validity::Exact, g_terms);
    Ok(CorrectionPair { f, g })
}

/// One stage of the formal normalization.
#[derive(Debug, Clone)]
pub struct StageRecord {
    /// The weight handled by this stage.
    pub alpha: u32,
    /// The non-normal weight-`alpha` part that was removed.
    pub defect: Series,
    /// The correction pair solving the stage.
    pub correction: CorrectionPair,
    /// The polynomial near-identity map that was applied.
    pub map_applied: FibreMap,
}

/// Normalizes the equation weight by weight up to `order`, recording every
/// nontrivial stage. The result satisfies all four normal-form conditions
/// exactly through `order`, and each stage leaves every weight below its
/// own unchanged.
///
/// # Errors
///
/// [`Error::OrderExceeded`] if the input is not trustworthy through
/// `order`; [`Error::Internal`] if the output fails its own verification.
pub fn formal_normalize(e: &Ode, order: i64) -> Result<(Ode, Vec<StageRecord>)> {
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
    let mut current = Ode::new(e.rhs().truncate(order));
    let mut stages = Vec::new();
    for alpha in 0..=order as u32 {
        let defect = normal_defect(&current, alpha)?;
        if defect.is_zero() {
            continue;
        }
        let correction = solve_stage(&defect, alpha)?;
        let map = correction.as_map()?;
        current = apply_map(&current, &map)?;
        stages.push(StageRecord {
            alpha,
            defect,
            correction,
            map_applied: map,
        });
    }
    let (ok, violated) = check_normal(&current);
    if !ok {
        return Err(Error::internal(format!(
            "normalized output still violates {}",
            violated
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    if current.rhs().valid_order() != Some(order) {
        return Err(Error::internal(format!(
            "normalization was expected to preserve order {order}, got {:?}",
            current.rhs().valid_order()
        )));
    }
    Ok((current, stages))
}

/// Composes the stage maps into a single map whose pullback action equals
/// running the stages in sequence, truncated so it stays trustworthy for
/// equations of the given order (`phi` to `order + 1`, `psi` to
/// `order + 2`).
///
/// # Errors
///
/// Propagates composition failures from the series layer.
pub fn composite_map(stages: &[StageRecord], order: i64) -> Result<FibreMap> {
    let mut acc = FibreMap::identity();
    for stage in stages {
        let next = compose_maps(&acc, &stage.map_applied)?;
        acc = FibreMap::new(
            next.phi().truncate(order + 1),
            next.psi().truncate(order + 2),
        )?;
    }
    Ok(acc)
}
