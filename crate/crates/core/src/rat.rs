//! Exact rational coefficients with a fast small-integer lane.
//!
//! Every coefficient in the library is an exact rational number. The pipelines
//! perform millions of coefficient operations per equation, and the vast
//! majority of intermediate values fit comfortably in machine words, so [`Rat`]
//! keeps a reduced `i64/i64` representation and transparently promotes to an
//! arbitrary-precision [`BigRational`] only when a value leaves that range.
//! Results are demoted back whenever they fit, so equal values always have
//! equal representations and derived equality/hashing are sound.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::{One, Signed, Zero};

/// An exact rational number, always stored in lowest terms with a positive
/// denominator.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Rat(Repr);

#[derive(Clone, PartialEq, Eq, Hash)]
enum Repr {
    /// Reduced fraction with positive denominator, both components in `i64`.
    Small(i64, i64),
    /// Reduced fraction that does not fit the small lane.
    Big(Box<BigRational>),
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    gcd_u128(a.unsigned_abs() as u128, b.unsigned_abs() as u128) as i64
}

/// Builds a `Rat` from a not-necessarily-reduced `i128` fraction with a
/// positive denominator.
fn from_i128(mut n: i128, mut d: i128) -> Rat {
    debug_assert!(d > 0);
    if n == 0 {
        return Rat(Repr::Small(0, 1));
    }
    let g = gcd_u128(n.unsigned_abs(), d as u128) as i128;
    n /= g;
    d /= g;
    match (i64::try_from(n), i64::try_from(d)) {
        (Ok(n64), Ok(d64)) => Rat(Repr::Small(n64, d64)),
        _ => Rat(Repr::Big(Box::new(Ratio::new(
            BigInt::from(n),
            BigInt::from(d),
        )))),
    }
}

/// Demotes a reduced `BigRational` to the small lane when it fits.
fn from_big(value: BigRational) -> Rat {
    let (n, d) = (value.numer(), value.denom());
    match (i64::try_from(n), i64::try_from(d)) {
        (Ok(n64), Ok(d64)) => Rat(Repr::Small(n64, d64)),
        _ => Rat(Repr::Big(Box::new(value))),
    }
}

impl Rat {
    /// The rational zero.
    pub fn zero() -> Self {
        Rat(Repr::Small(0, 1))
    }

    /// The rational one.
    pub fn one() -> Self {
        Rat(Repr::Small(1, 1))
    }

    /// An integer value.
    pub fn int(n: i64) -> Self {
        Rat(Repr::Small(n, 1))
    }

    /// The fraction `n/d`, reduced.
    ///
    /// # Panics
    ///
    /// Panics if `d == 0`.
    pub fn new(n: i64, d: i64) -> Self {
        assert!(d != 0, "rational denominator must be nonzero");
        let (n, d) = if d < 0 { (-(n as i128), -(d as i128)) } else { (n as i128, d as i128) };
        from_i128(n, d)
    }

    /// Whether the value is exactly zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small(0, _))
    }

    /// Whether the value is exactly one.
    pub fn is_one(&self) -> bool {
        matches!(self.0, Repr::Small(1, 1))
    }

    /// Whether the value is negative.
    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small(n, _) => *n < 0,
            Repr::Big(b) => b.is_negative(),
        }
    }

    /// The value as a `BigRational`, promoting if necessary.
    pub fn to_big(&self) -> BigRational {
        match &self.0 {
            Repr::Small(n, d) => Ratio::new(BigInt::from(*n), BigInt::from(*d)),
            Repr::Big(b) => (**b).clone(),
        }
    }

    /// The multiplicative inverse.
    ///
    /// # Panics
    ///
    /// Panics if the value is zero.
    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        match &self.0 {
            Repr::Small(n, d) => {
                if *n > 0 {
                    Rat(Repr::Small(*d, *n))
                } else {
                    from_i128(-(*d as i128), -(*n as i128))
                }
            }
            Repr::Big(b) => from_big(b.recip()),
        }
    }

    /// Canonical `numerator/denominator` form, used by the document format.
    pub fn frac_string(&self) -> String {
        match &self.0 {
            Repr::Small(n, d) => format!("{n}/{d}"),
            Repr::Big(b) => format!("{}/{}", b.numer(), b.denom()),
        }
    }

    /// Parses `"n"` or `"n/d"` with arbitrary-precision integer parts.
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let (num_text, den_text) = match text.split_once('/') {
            Some((n, d)) => (n, d),
            None => (text, "1"),
        };
        let numer = BigInt::from_str(num_text.trim())
            .map_err(|_| format!("invalid integer `{}`", num_text.trim()))?;
        let denom = BigInt::from_str(den_text.trim())
            .map_err(|_| format!("invalid integer `{}`", den_text.trim()))?;
        if denom.is_zero() {
            return Err("zero denominator".to_string());
        }
        Ok(from_big(Ratio::new(numer, denom)))
    }
}

impl Default for Rat {
    fn default() -> Self {
        Rat::zero()
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::int(n)
    }
}

impl From<BigRational> for Rat {
    fn from(value: BigRational) -> Self {
        from_big(value)
    }
}

impl PartialOrd for Rat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rat {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a, b), Repr::Small(c, d)) => {
                (*a as i128 * *d as i128).cmp(&(*c as i128 * *b as i128))
            }
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(n, 1) => write!(f, "{n}"),
            Repr::Small(n, d) => write!(f, "{n}/{d}"),
            Repr::Big(b) => {
                if b.denom().is_one() {
                    write!(f, "{}", b.numer())
                } else {
                    write!(f, "{}/{}", b.numer(), b.denom())
                }
            }
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Add for &Rat {
    type Output = Rat;

    fn add(self, rhs: &Rat) -> Rat {
        match (&self.0, &rhs.0) {
            (Repr::Small(a, b), Repr::Small(c, d)) => {
                let g = gcd_i64(*b, *d);
                let b1 = (*b / g) as i128;
                let d1 = (*d / g) as i128;
                let lhs = (*a as i128).checked_mul(d1);
                let rhs_term = (*c as i128).checked_mul(b1);
                let num = match (lhs, rhs_term) {
                    (Some(x), Some(y)) => x.checked_add(y),
                    _ => None,
                };
                let den = b1.checked_mul(*d as i128);
                match (num, den) {
                    (Some(n), Some(dn)) => from_i128(n, dn),
                    _ => from_big(self.to_big() + rhs.to_big()),
                }
            }
            _ => from_big(self.to_big() + rhs.to_big()),
        }
    }
}

impl Sub for &Rat {
    type Output = Rat;

    fn sub(self, rhs: &Rat) -> Rat {
        self + &(-rhs)
    }
}

impl Mul for &Rat {
    type Output = Rat;

    fn mul(self, rhs: &Rat) -> Rat {
        match (&self.0, &rhs.0) {
            (Repr::Small(a, b), Repr::Small(c, d)) => {
                if *a == 0 || *c == 0 {
                    return Rat::zero();
                }
                let g1 = gcd_i64(*a, *d).max(1);
                let g2 = gcd_i64(*c, *b).max(1);
                let num = (*a / g1) as i128 * (*c / g2) as i128;
                let den = (*b / g2) as i128 * (*d / g1) as i128;
                from_i128(num, den)
            }
            _ => from_big(self.to_big() * rhs.to_big()),
        }
    }
}

impl Div for &Rat {
    type Output = Rat;

    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: &Rat) -> Rat {
        self * &rhs.recip()
    }
}

impl Neg for &Rat {
    type Output = Rat;

    fn neg(self) -> Rat {
        match &self.0 {
            Repr::Small(n, d) => {
                if *n == i64::MIN {
                    from_i128(-(*n as i128), *d as i128)
                } else {
                    Rat(Repr::Small(-n, *d))
                }
            }
            Repr::Big(b) => from_big(-(**b).clone()),
        }
    }
}

impl Neg for Rat {
    type Output = Rat;

    fn neg(self) -> Rat {
        -&self
    }
}

macro_rules! forward_owned_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rat {
            type Output = Rat;

            fn $method(self, rhs: Rat) -> Rat {
                (&self).$method(&rhs)
            }
        }

        impl $trait<&Rat> for Rat {
            type Output = Rat;

            fn $method(self, rhs: &Rat) -> Rat {
                (&self).$method(rhs)
            }
        }
    };
}

forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);
forward_owned_binop!(Mul, mul);
forward_owned_binop!(Div, div);

impl AddAssign<&Rat> for Rat {
    fn add_assign(&mut self, rhs: &Rat) {
        *self = &*self + rhs;
    }
}

impl SubAssign<&Rat> for Rat {
    fn sub_assign(&mut self, rhs: &Rat) {
        *self = &*self - rhs;
    }
}

impl MulAssign<&Rat> for Rat {
    fn mul_assign(&mut self, rhs: &Rat) {
        *self = &*self * rhs;
    }
}
