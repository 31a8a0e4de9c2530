//! Seeded random generators for test corpora: equations, normal-form
//! equations, valid fibre maps, vector fields, and correction pairs. All
//! generators are deterministic for a fixed seed.

use crate::homology::CorrectionPair;
use crate::invariants::is_normal_exponent;
use crate::jet::{FibreMap, Ode, VectorField};
use crate::rat::Rat;
use crate::series::{Series, Validity, VarSet};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A reproducible generator for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small nonzero rational with numerator and denominator up to 9.
fn small_rat(r: &mut ChaCha8Rng) -> Rat {
    let mut num = 0i64;
    while num == 0 {
        num = r.gen_range(-9..=9);
    }
    Rat::new(num, r.gen_range(1..=9))
}

const DENSITY: f64 = 0.3;

/// A random truncated series over `vars` with terms of weight at most
/// `order`, each monomial kept with probability `density`.
pub fn random_series(r: &mut ChaCha8Rng, vars: VarSet, order: i64, density: f64) -> Series {
    let mut terms = Vec::new();
    let n = order.max(0) as u32;
    for i in 0..=n {
        for j in 0..=(n / 2) {
            for k in 0..=n {
                if i + 2 * j + k > n {
                    continue;
                }
                if (i > 0 && !vars.contains(crate::series::Var::X))
                    || (j > 0 && !vars.contains(crate::series::Var::Y))
                    || (k > 0 && !vars.contains(crate::series::Var::P))
                {
                    continue;
                }
                if r.gen_bool(density) {
                    terms.push(((i, j, k), small_rat(r)));
                }
            }
        }
    }
    Series::from_terms(vars, Validity::Truncated(order), terms)
}

/// A random equation with unconstrained right side, truncated to `order`.
pub fn random_ode(r: &mut ChaCha8Rng, order: i64) -> Ode {
    Ode::new(random_series(r, VarSet::XYP, order, DENSITY))
}

/// A random equation already in normal form: only monomials surviving the
/// support pattern are kept. Nonempty whenever `order >= 3`.
pub fn random_normal_ode(r: &mut ChaCha8Rng, order: i64) -> Ode {
    let raw = random_series(r, VarSet::XYP, order, DENSITY);
    let mut terms: Vec<((u32, u32, u32), Rat)> = raw
        .terms()
        .iter()
        .filter(|(e, _)| is_normal_exponent(e.i(), e.j(), e.k()))
        .map(|(e, c)| ((e.i(), e.j(), e.k()), c.clone()))
        .collect();
    if terms.is_empty() && order >= 3 {
        terms.push(((0, 0, 3), small_rat(r)));
    }
    Ode::new(Series::from_terms(
        VarSet::XYP,
        Validity::Truncated(order),
        terms,
    ))
}

/// A random valid fibre map as an exact polynomial pair: `phi` with a
/// nonzero linear coefficient and terms up to degree `order + 1`, `psi`
/// with a nonzero linear `y` coefficient, no constant or linear-`x` term,
/// and terms up to weight `order + 2`.
pub fn random_fibre_map(r: &mut ChaCha8Rng, order: i64) -> FibreMap {
    let n = order.max(0) as u32;
    let mut phi_terms = vec![((1u32, 0u32, 0u32), small_rat(r))];
    for i in 2..=n + 1 {
        if r.gen_bool(DENSITY) {
            phi_terms.push(((i, 0, 0), small_rat(r)));
        }
    }
    let mut psi_terms = vec![((0u32, 1u32, 0u32), small_rat(r))];
    for i in 0..=n + 2 {
        for j in 0..=(n + 2) / 2 {
            let w = i + 2 * j;
            if w < 2 || w > n + 2 || (i, j) == (0, 1) {
                continue;
            }
            if r.gen_bool(DENSITY) {
                psi_terms.push(((i, j, 0), small_rat(r)));
            }
        }
    }
    let phi = Series::from_terms(VarSet::X, Validity::Exact, phi_terms);
    let psi = Series::from_terms(VarSet::XY, Validity::Exact, psi_terms);
    FibreMap::new(phi, psi).expect("generated maps satisfy the validity checks")
}

/// A random polynomial vector field `f(x) d/dx + g(x, y) d/dy` with
/// component weights up to `order`.
pub fn random_vector_field(r: &mut ChaCha8Rng, order: i64) -> VectorField {
    let f = exact_polynomial(r, VarSet::X, 0, order);
    let g = exact_polynomial(r, VarSet::XY, 0, order);
    VectorField::new(f, g).expect("component variable sets are correct")
}

/// A random vector field whose unit-time flow exists on truncations:
/// `f = O(x^2)` and `g` of weight at least 3, so every flow term gains
/// weight.
pub fn random_gaining_field(r: &mut ChaCha8Rng, order: i64) -> VectorField {
    let f = exact_polynomial(r, VarSet::X, 2, order);
    let g = exact_polynomial(r, VarSet::XY, 3, order);
    VectorField::new(f, g).expect("component variable sets are correct")
}

/// A random nonzero correction pair in the injectivity subspace, with
/// `f` of weight up to `order + 1` and `g` of weight up to `order + 2`.
pub fn random_correction_pair(r: &mut ChaCha8Rng, order: i64) -> CorrectionPair {
    let n = order.max(0) as u32;
    let mut f_terms: Vec<((u32, u32, u32), Rat)> = Vec::new();
    for i in 2..=n + 1 {
        if r.gen_bool(DENSITY) {
            f_terms.push(((i, 0, 0), small_rat(r)));
        }
    }
    let mut g_terms: Vec<((u32, u32, u32), Rat)> = Vec::new();
    for i in 0..=n + 2 {
        for j in 0..=(n + 2) / 2 {
            let w = i + 2 * j;
            if w < 2 || w > n + 2 || (i, j) == (0, 1) || (i, j) == (1, 1) {
                continue;
            }
            if r.gen_bool(DENSITY) {
                g_terms.push(((i, j, 0), small_rat(r)));
            }
        }
    }
    if f_terms.is_empty() && g_terms.is_empty() {
        g_terms.push(((2, 0, 0), small_rat(r)));
    }
    let f = Series::from_terms(VarSet::X, Validity::Exact, f_terms);
    let g = Series::from_terms(VarSet::XY, Validity::Exact, g_terms);
    CorrectionPair::new(f, g).expect("generated components are admissible")
}

/// A random exact polynomial over `vars` with term weights in
/// `min_weight..=max_weight`.
fn exact_polynomial(r: &mut ChaCha8Rng, vars: VarSet, min_weight: i64, max_weight: i64) -> Series {
    let raw = random_series(r, vars, max_weight, DENSITY);
    let terms: Vec<((u32, u32, u32), Rat)> = raw
        .terms()
        .iter()
        .filter(|(e, _)| e.weight() as i64 >= min_weight)
        .map(|(e, c)| ((e.i(), e.j(), e.k()), c.clone()))
        .collect();
    Series::from_terms(vars, Validity::Exact, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::{formal_normalize, in_fprime};
    use crate::invariants::normal_pattern_check;
    use crate::jet::{apply_map, flow_map_at_unit};

    #[test]
    fn generators_are_deterministic() {
        let a = random_ode(&mut rng(42), 8);
        let b = random_ode(&mut rng(42), 8);
        assert!(a.rhs().same_terms(b.rhs()));
        let c = random_ode(&mut rng(43), 8);
        assert!(!a.rhs().same_terms(c.rhs()), "different seeds should differ");
    }

    #[test]
    fn normal_generator_passes_the_pattern() {
        for seed in 0..10 {
            let e = random_normal_ode(&mut rng(seed), 10);
            assert!(normal_pattern_check(&e), "seed {seed}");
        }
    }

    #[test]
    fn generated_maps_flatten_back_to_zero() {
        let m = random_fibre_map(&mut rng(7), 6);
        let pushed = apply_map(&Ode::flat(6), &m).unwrap();
        let (k, _) = formal_normalize(&pushed, 6).unwrap();
        assert!(k.rhs().is_zero());
    }

    #[test]
    fn correction_pairs_are_nonzero_members() {
        for seed in 0..10 {
            let c = random_correction_pair(&mut rng(seed), 6);
            assert!(in_fprime(&c), "seed {seed}");
            assert!(!c.is_zero(), "seed {seed}");
        }
    }

    #[test]
    fn gaining_fields_flow_to_valid_maps() {
        for seed in 0..5 {
            let v = random_gaining_field(&mut rng(seed), 6);
            flow_map_at_unit(&v, 6).expect("weight-gaining fields flow to unit time");
        }
    }
}
