//! Scalar abstractions shared by the difference calculus, the closed-form
//! coefficient evaluators and the expansion engine.
//!
//! Everything downstream is written once, generically, over a [`Scalar`]:
//! either exact Gaussian rationals ([`CRat`], used whenever `cos k`, `sin k`
//! and the lattice parameters are rational) or complex doubles ([`C64`]).
//! Identity tests run in the exact instantiation, where "equal" means equal.

use num::bigint::BigInt;
use num::complex::Complex64;
use num::rational::BigRational;
use num::traits::{Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Exact rational number.
pub type Rat = BigRational;

/// Exact Gaussian rational (complex number with rational parts).
pub type CRat = num::complex::Complex<BigRational>;

/// Complex double.
pub type C64 = Complex64;

/// Build a rational from an integer pair.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Parse `"3"`, `"-3/5"` into an exact rational.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(Rat::new(n, d))
        }
        None => {
            if let Ok(n) = s.parse::<BigInt>() {
                return Some(Rat::from_integer(n));
            }
            // fall back to the exact rational value of a float literal
            let f: f64 = s.parse().ok()?;
            Rat::from_float(f)
        }
    }
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64()
        .unwrap_or_else(|| r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN))
}

/// Field-like scalar for the generic numeric kernels.
pub trait Scalar:
    Clone
    + PartialEq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + num::traits::Zero
    + num::traits::One
{
    fn from_rat(r: &Rat) -> Self;
    /// Complex number from exact rational parts.
    fn from_re_im(re: &Rat, im: &Rat) -> Self;
    fn conj(&self) -> Self;
    /// Squared modulus as a double, for pivots and tolerance checks.
    fn abs2(&self) -> f64;
    /// True for exact instantiations (identities may be asserted exactly).
    fn exact() -> bool;
    fn from_i64(n: i64) -> Self {
        Self::from_rat(&Rat::from_integer(BigInt::from(n)))
    }
    fn is_zero_tol(&self, tol: f64) -> bool {
        if Self::exact() {
            self.is_zero()
        } else {
            self.abs2() <= tol * tol
        }
    }
    fn to_c64(&self) -> C64;
    /// exact rational strings for the real/imaginary parts, when exact
    fn exact_parts(&self) -> Option<(String, String)> {
        None
    }
}

impl Scalar for CRat {
    fn from_rat(r: &Rat) -> Self {
        CRat::new(r.clone(), Rat::zero())
    }
    fn from_re_im(re: &Rat, im: &Rat) -> Self {
        CRat::new(re.clone(), im.clone())
    }
    fn conj(&self) -> Self {
        CRat::new(self.re.clone(), -self.im.clone())
    }
    fn abs2(&self) -> f64 {
        rat_to_f64(&(&self.re * &self.re + &self.im * &self.im))
    }
    fn exact() -> bool {
        true
    }
    fn to_c64(&self) -> C64 {
        C64::new(rat_to_f64(&self.re), rat_to_f64(&self.im))
    }
    fn exact_parts(&self) -> Option<(String, String)> {
        Some((self.re.to_string(), self.im.to_string()))
    }
}

impl Scalar for C64 {
    fn from_rat(r: &Rat) -> Self {
        C64::new(rat_to_f64(r), 0.0)
    }
    fn from_re_im(re: &Rat, im: &Rat) -> Self {
        C64::new(rat_to_f64(re), rat_to_f64(im))
    }
    fn conj(&self) -> Self {
        num::complex::Complex::conj(self)
    }
    fn abs2(&self) -> f64 {
        self.norm_sqr()
    }
    fn exact() -> bool {
        false
    }
    fn to_c64(&self) -> C64 {
        *self
    }
}

/// Laurent polynomial in the lattice-ratio parameter `N` with exact rational
/// coefficients. Stencil coefficients live here so that identity tests can be
/// carried out symbolically in `N` before evaluating at a concrete integer.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct NPoly {
    /// power of `N` -> coefficient, zero coefficients absent
    terms: std::collections::BTreeMap<i32, Rat>,
}

impl NPoly {
    pub fn zero() -> Self {
        Self::default()
    }
    pub fn constant(c: Rat) -> Self {
        let mut p = Self::default();
        p.add_term(0, c);
        p
    }
    /// `c * N^k`
    pub fn term(c: Rat, k: i32) -> Self {
        let mut p = Self::default();
        p.add_term(k, c);
        p
    }
    pub fn add_term(&mut self, k: i32, c: Rat) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(k).or_insert_with(Rat::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&k);
        }
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    /// Coefficient of `N^k`.
    pub fn coeff(&self, k: i32) -> Rat {
        self.terms.get(&k).cloned().unwrap_or_else(Rat::zero)
    }
    /// Lowest power of `1/N` present (None if zero polynomial).
    pub fn min_power(&self) -> Option<i32> {
        self.terms.keys().next().copied()
    }
    pub fn evaluate(&self, n: i64) -> Rat {
        let nn = Rat::from_integer(BigInt::from(n));
        let mut acc = Rat::zero();
        for (k, c) in &self.terms {
            let p = if *k >= 0 {
                num::pow::pow(nn.clone(), *k as usize)
            } else {
                num::pow::pow(nn.clone().recip(), (-k) as usize)
            };
            acc += c * p;
        }
        acc
    }
    pub fn iter(&self) -> impl Iterator<Item = (&i32, &Rat)> {
        self.terms.iter()
    }
}

impl Add for NPoly {
    type Output = NPoly;
    fn add(mut self, rhs: NPoly) -> NPoly {
        for (k, c) in rhs.terms {
            self.add_term(k, c);
        }
        self
    }
}

impl Mul<&NPoly> for &NPoly {
    type Output = NPoly;
    fn mul(self, rhs: &NPoly) -> NPoly {
        let mut out = NPoly::zero();
        for (k1, c1) in &self.terms {
            for (k2, c2) in &rhs.terms {
                out.add_term(k1 + k2, c1 * c2);
            }
        }
        out
    }
}

impl fmt::Display for NPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}*N")?,
                -1 => write!(f, "{c}/N")?,
                k if *k > 0 => write!(f, "{c}*N^{k}")?,
                k => write!(f, "{c}/N^{}", -k)?,
            }
        }
        Ok(())
    }
}

/// |x| for rationals as f64 (diagnostics only).
pub fn rat_abs_f64(r: &Rat) -> f64 {
    rat_to_f64(&r.abs())
}
