//! Canonical JSON documents for equations, maps, and the series fragments
//! embedded in machine-readable reports.
//!
//! Canonical form: terms sorted ascending by (weight, i, j, k), no zero
//! coefficients, no term of weight beyond the document order, coefficients
//! as lowest-term `"num/den"` strings. Loading validates every invariant
//! and rejects violations as malformed input.

use fibrenorm::jet::{FibreMap, Ode};
use fibrenorm::series::{Exp, Series, Validity, VarSet};
use fibrenorm::Rat;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: &str = "1";

/// One monomial of an equation right side: exponents `[i, j, k]` for
/// `x^i y^j p^k` and a rational coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeTerm {
    pub e: [u32; 3],
    pub c: String,
}

/// A truncated equation `y_xx = J(x, y, p)` with exact coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeDocument {
    pub format_version: String,
    pub order: i64,
    pub terms: Vec<OdeTerm>,
}

/// One monomial of the base component `phi(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiTerm {
    pub e: [u32; 1],
    pub c: String,
}

/// One monomial of the fibre component `psi(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiTerm {
    pub e: [u32; 2],
    pub c: String,
}

/// A fibre-preserving map, trustworthy for equations truncated at `order`
/// (`phi` carries terms to weight `order + 1`, `psi` to `order + 2`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapDocument {
    pub format_version: String,
    pub order: i64,
    pub phi_terms: Vec<PhiTerm>,
    pub psi_terms: Vec<PsiTerm>,
}

/// A series fragment inside a report: its trustworthy order (`null` for
/// exact polynomials) and its terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesDoc {
    pub order: Option<i64>,
    pub terms: Vec<OdeTerm>,
}

fn weight(e: &[u32; 3]) -> u32 {
    e[0] + 2 * e[1] + e[2]
}

fn check_sorted_terms(terms: &[([u32; 3], &str)], order: i64) -> Result<Vec<Rat>, String> {
    let mut coeffs = Vec::with_capacity(terms.len());
    for (idx, (e, c)) in terms.iter().enumerate() {
        if e.iter().any(|&d| d > 63) {
            return Err(format!("term {idx}: exponent beyond the supported degree 63"));
        }
        let w = weight(e) as i64;
        if w > order {
            return Err(format!(
                "term {idx}: weight {w} exceeds the document order {order}"
            ));
        }
        let coeff = Rat::parse(c).map_err(|err| format!("term {idx}: {err}"))?;
        if coeff.is_zero() {
            return Err(format!("term {idx}: zero coefficients are not stored"));
        }
        if idx > 0 {
            let prev = &terms[idx - 1].0;
            let key = |e: &[u32; 3]| (weight(e), e[0], e[1], e[2]);
            if key(prev) >= key(e) {
                return Err(format!(
                    "term {idx}: terms must be strictly ascending by (weight, i, j, k)"
                ));
            }
        }
        coeffs.push(coeff);
    }
    Ok(coeffs)
}

impl OdeDocument {
    /// Parses and fully validates a document.
    pub fn parse(text: &str) -> Result<OdeDocument, String> {
        let doc: OdeDocument =
            serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format_version `{}` (expected `{FORMAT_VERSION}`)",
                self.format_version
            ));
        }
        if self.order < 0 {
            return Err(format!("negative order {}", self.order));
        }
        let raw: Vec<([u32; 3], &str)> = self.terms.iter().map(|t| (t.e, t.c.as_str())).collect();
        check_sorted_terms(&raw, self.order)?;
        Ok(())
    }

    /// The equation the document encodes, truncated at the document order.
    pub fn to_ode(&self) -> Ode {
        let terms = self.terms.iter().map(|t| {
            (
                (t.e[0], t.e[1], t.e[2]),
                Rat::parse(&t.c).expect("validated on parse"),
            )
        });
        Ode::new(Series::from_terms(
            VarSet::XYP,
            Validity::Truncated(self.order),
            terms,
        ))
    }

    /// The canonical document for a truncated equation.
    ///
    /// # Panics
    ///
    /// Panics if the right side is an exact series; every emitted equation
    /// carries a truncation order.
    pub fn from_ode(e: &Ode) -> OdeDocument {
        let order = e
            .rhs()
            .valid_order()
            .expect("emitted equations are truncated");
        OdeDocument {
            format_version: FORMAT_VERSION.into(),
            order,
            terms: e
                .rhs()
                .terms()
                .iter()
                .map(|(exp, c)| OdeTerm {
                    e: [exp.i(), exp.j(), exp.k()],
                    c: c.frac_string(),
                })
                .collect(),
        }
    }
}

impl MapDocument {
    /// Parses and validates the document shape; the map itself is
    /// validated in [`MapDocument::to_map`].
    pub fn parse(text: &str) -> Result<MapDocument, String> {
        let doc: MapDocument =
            serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format_version `{}` (expected `{FORMAT_VERSION}`)",
                self.format_version
            ));
        }
        if self.order < 0 {
            return Err(format!("negative order {}", self.order));
        }
        let phi: Vec<([u32; 3], &str)> = self
            .phi_terms
            .iter()
            .map(|t| ([t.e[0], 0, 0], t.c.as_str()))
            .collect();
        check_sorted_terms(&phi, self.order + 1).map_err(|e| format!("phi: {e}"))?;
        let psi: Vec<([u32; 3], &str)> = self
            .psi_terms
            .iter()
            .map(|t| ([t.e[0], t.e[1], 0], t.c.as_str()))
            .collect();
        check_sorted_terms(&psi, self.order + 2).map_err(|e| format!("psi: {e}"))?;
        Ok(())
    }

    /// The map the document encodes, with components truncated at
    /// `order + 1` and `order + 2`.
    ///
    /// # Errors
    ///
    /// The map validity checks: fixed origin, invertible linear part,
    /// correct variable dependence.
    pub fn to_map(&self) -> fibrenorm::Result<FibreMap> {
        let phi = Series::from_terms(
            VarSet::X,
            Validity::Truncated(self.order + 1),
            self.phi_terms.iter().map(|t| {
                (
                    (t.e[0], 0, 0),
                    Rat::parse(&t.c).expect("validated on parse"),
                )
            }),
        );
        let psi = Series::from_terms(
            VarSet::XY,
            Validity::Truncated(self.order + 2),
            self.psi_terms.iter().map(|t| {
                (
                    (t.e[0], t.e[1], 0),
                    Rat::parse(&t.c).expect("validated on parse"),
                )
            }),
        );
        FibreMap::new(phi, psi)
    }

    /// The canonical document for a map, truncating `phi` to weight
    /// `order + 1` and `psi` to `order + 2`.
    pub fn from_map(map: &FibreMap, order: i64) -> MapDocument {
        let keep = |exp: &Exp, cap: i64| (exp.weight() as i64) <= cap;
        MapDocument {
            format_version: FORMAT_VERSION.into(),
            order,
            phi_terms: map
                .phi()
                .terms()
                .iter()
                .filter(|(e, _)| keep(e, order + 1))
                .map(|(e, c)| PhiTerm {
                    e: [e.i()],
                    c: c.frac_string(),
                })
                .collect(),
            psi_terms: map
                .psi()
                .terms()
                .iter()
                .filter(|(e, _)| keep(e, order + 2))
                .map(|(e, c)| PsiTerm {
                    e: [e.i(), e.j()],
                    c: c.frac_string(),
                })
                .collect(),
        }
    }
}

impl SeriesDoc {
    /// The report fragment for a series, carrying its trustworthy order.
    pub fn from_series(s: &Series) -> SeriesDoc {
        SeriesDoc {
            order: s.valid_order(),
            terms: s
                .terms()
                .iter()
                .map(|(exp, c)| OdeTerm {
                    e: [exp.i(), exp.j(), exp.k()],
                    c: c.frac_string(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ode_document_round_trips() {
        let text = r#"{"format_version":"1","order":4,"terms":[{"e":[0,0,1],"c":"2/1"},{"e":[1,1,0],"c":"-1/3"}]}"#;
        let doc = OdeDocument::parse(text).unwrap();
        let emitted = serde_json::to_string(&doc).unwrap();
        assert_eq!(emitted, text);
        let back = OdeDocument::from_ode(&doc.to_ode());
        assert_eq!(back, doc);
    }

    #[test]
    fn ode_document_rejects_violations() {
        let unsorted = r#"{"format_version":"1","order":4,"terms":[{"e":[1,1,0],"c":"1/1"},{"e":[0,0,1],"c":"2/1"}]}"#;
        assert!(OdeDocument::parse(unsorted).is_err());
        let zero = r#"{"format_version":"1","order":4,"terms":[{"e":[0,0,1],"c":"0/1"}]}"#;
        assert!(OdeDocument::parse(zero).is_err());
        let heavy = r#"{"format_version":"1","order":2,"terms":[{"e":[0,0,3],"c":"1/1"}]}"#;
        assert!(OdeDocument::parse(heavy).is_err());
        let version = r#"{"format_version":"2","order":2,"terms":[]}"#;
        assert!(OdeDocument::parse(version).is_err());
        let duplicate = r#"{"format_version":"1","order":4,"terms":[{"e":[0,0,1],"c":"1/1"},{"e":[0,0,1],"c":"2/1"}]}"#;
        assert!(OdeDocument::parse(duplicate).is_err());
    }

    #[test]
    fn map_document_encodes_valid_maps_only() {
        let text = r#"{"format_version":"1","order":4,"phi_terms":[{"e":[1],"c":"1/1"}],"psi_terms":[{"e":[0,1],"c":"1/1"},{"e":[2,0],"c":"1/2"}]}"#;
        let doc = MapDocument::parse(text).unwrap();
        let map = doc.to_map().unwrap();
        assert_eq!(map.psi().coeff(2, 0, 0), Rat::new(1, 2));

        let singular = r#"{"format_version":"1","order":4,"phi_terms":[{"e":[2],"c":"1/1"}],"psi_terms":[{"e":[0,1],"c":"1/1"}]}"#;
        let doc = MapDocument::parse(singular).unwrap();
        assert!(doc.to_map().is_err(), "phi without a linear term is singular");
    }
}
