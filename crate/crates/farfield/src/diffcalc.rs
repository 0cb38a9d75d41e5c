//! Exact difference calculus on multiple lattices.
//!
//! A function `f_n` on a fine lattice that only depends on slow variables
//! `n_j = M_j n / N^j` is a polynomial of low degree between slow sites, and
//! its fine-lattice shifts can be written as finite linear combinations of
//! slow-lattice samples. This module builds those combinations exactly:
//!
//! * Stirling-number tables and the coefficients `P(i,j) = Σ_α ω^α s(i,α) S(α,j)`
//!   that convert difference tables between lattices (`ω = N` one way,
//!   `ω = 1/N` back);
//! * one-scale shift stencils of order 1..3 (asymmetric Newton forms and the
//!   symmetric order-2 form);
//! * two-scale stencils for `(n_1, n_2)` of orders (2,2) and (2,1);
//! * the cross-shift stencil for `f_{n+1,m+1}` over `(n_1, m_1, m_2)`.
//!
//! Coefficients are Laurent polynomials in `N` over the rationals, so the
//! defining identities can be tested symbolically. A slow function of order
//! `p` (vanishing `(p+1)`-th difference) is reproduced exactly; no floats are
//! involved anywhere in this module.
//!
//! ```
//! use farfield::diffcalc::one_scale_stencil;
//! use farfield::numeric::rat;
//!
//! // symmetric order-2 stencil for f_{n+1}, N = 6, M = 1, built symbolically in N
//! let st = one_scale_stencil(2, 6, 1, 1, true).unwrap();
//! assert!(st.reproduces_constants());
//! // exact on any quadratic: g(x) = 3x² - x + 2 at base point 5
//! let g = |x: farfield::numeric::Rat| rat(3, 1) * x.clone() * x.clone() - x + rat(2, 1);
//! let predicted = st.apply(|s| g(rat(5, 1) + rat(s[0] as i64, 1)));
//! assert_eq!(predicted, g(rat(5, 1) + rat(1, 6)));
//! // odd orders have no symmetric form
//! assert!(one_scale_stencil(3, 6, 1, 1, true).is_err());
//! ```

use crate::numeric::{rat, NPoly, Rat};
use crate::{Error, Result};
use num::bigint::BigInt;
use num::traits::{One, Signed, Zero};
use serde_json::json;

/// Which kind of Stirling number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StirlingKind {
    /// signed первой kind `s(n,k)`: `s(n+1,k) = s(n,k-1) - n s(n,k)`
    First,
    /// second kind `S(n,k)`: `S(n+1,k) = S(n,k-1) + k S(n,k)`
    Second,
}

/// Triangular tables of Stirling numbers of both kinds, built once by the
/// standard recurrences and shared read-only.
#[derive(Clone, Debug)]
pub struct StirlingTable {
    max_index: usize,
    first: Vec<Vec<BigInt>>,
    second: Vec<Vec<BigInt>>,
}

impl StirlingTable {
    pub fn new(max_index: usize) -> Self {
        let mut first = vec![vec![BigInt::one()]];
        let mut second = vec![vec![BigInt::one()]];
        for n in 1..=max_index {
            let mut rf = vec![BigInt::zero(); n + 1];
            let mut rs = vec![BigInt::zero(); n + 1];
            for k in 1..=n {
                let prev_k1 = &first[n - 1][k - 1];
                let prev_k = if k < n { first[n - 1][k].clone() } else { BigInt::zero() };
                rf[k] = prev_k1 - BigInt::from(n - 1) * prev_k;
                let sprev_k1 = &second[n - 1][k - 1];
                let sprev_k = if k < n { second[n - 1][k].clone() } else { BigInt::zero() };
                rs[k] = sprev_k1 + BigInt::from(k) * sprev_k;
            }
            first.push(rf);
            second.push(rs);
        }
        Self { max_index, first, second }
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn stirling(&self, kind: StirlingKind, n: usize, k: usize) -> Result<BigInt> {
        if n > self.max_index || k > n {
            return Err(Error::Domain(format!(
                "stirling index out of range: n={n}, k={k}, max={}",
                self.max_index
            )));
        }
        Ok(match kind {
            StirlingKind::First => self.first[n][k].clone(),
            StirlingKind::Second => self.second[n][k].clone(),
        })
    }
}

/// `P(i,j) = Σ_{α=j}^{i} ω^α s(i,α) S(α,j)` for an exact lattice-increment
/// ratio `ω`. With `ω = N` it expands slow differences in fine ones; with
/// `ω = 1/N` it inverts that relation.
pub fn expansion_coefficient(table: &StirlingTable, omega: &Rat, i: usize, j: usize) -> Result<Rat> {
    if j > i || j == 0 {
        return Err(Error::Domain(format!("expansion coefficient needs 1 <= j <= i, got i={i}, j={j}")));
    }
    let mut acc = Rat::zero();
    let mut w = num::pow::pow(omega.clone(), j);
    for alpha in j..=i {
        let s1 = table.stirling(StirlingKind::First, i, alpha)?;
        let s2 = table.stirling(StirlingKind::Second, alpha, j)?;
        acc += &w * Rat::from_integer(s1 * s2);
        w *= omega;
    }
    Ok(acc)
}

/// Forward difference table: returns `Δ^k v` for `k = 0..=order`.
pub fn forward_differences(values: &[Rat], order: usize) -> Vec<Vec<Rat>> {
    let mut rows = vec![values.to_vec()];
    for _ in 0..order {
        let prev = rows.last().unwrap();
        if prev.len() < 2 {
            break;
        }
        rows.push(prev.windows(2).map(|w| &w[1] - &w[0]).collect());
    }
    rows
}

/// `Δ^k` on the target lattice from the difference table on the source
/// lattice, truncated at order `p`:  `Δ^k g = Σ_{i=k}^{p} (k!/i!) P(i,k) Δ^i f`.
pub fn convert_difference(
    table: &StirlingTable,
    omega: &Rat,
    k: usize,
    p: usize,
    source_diffs: &[Rat],
) -> Result<Rat> {
    let mut acc = Rat::zero();
    let mut kfact_over_ifact = Rat::one();
    for i in k..=p {
        if i > k {
            kfact_over_ifact /= Rat::from_integer(BigInt::from(i));
        }
        let c = expansion_coefficient(table, omega, i, k)?;
        acc += &kfact_over_ifact * c * &source_diffs[i];
    }
    Ok(acc)
}

/// Sample of a slow-varying function on consecutive lattice sites.
#[derive(Clone, Debug)]
pub struct SlowFunctionSample {
    pub values: Vec<Rat>,
    pub declared_order: usize,
}

impl SlowFunctionSample {
    pub fn new(values: Vec<Rat>, declared_order: usize) -> Self {
        Self { values, declared_order }
    }

    /// Check the defining invariant `Δ^{p+1} values = 0`.
    pub fn is_consistent(&self) -> bool {
        slow_order(&self.values).map(|p| p <= self.declared_order).unwrap_or(false)
    }

    /// Smallest order with vanishing next difference.
    pub fn order(&self) -> Result<usize> {
        slow_order(&self.values)
    }
}

/// Smallest `p` with `Δ^{p+1} values` identically zero, in exact arithmetic.
pub fn slow_order(values: &[Rat]) -> Result<usize> {
    if values.len() < 2 {
        return Err(Error::Undetermined("need at least 2 samples".into()));
    }
    let mut row: Vec<Rat> = values.windows(2).map(|w| &w[1] - &w[0]).collect();
    for p in 0..values.len() - 1 {
        if row.iter().all(|x| x.is_zero()) {
            return Ok(p);
        }
        row = row.windows(2).map(|w| &w[1] - &w[0]).collect();
        if row.is_empty() {
            break;
        }
    }
    Err(Error::Undetermined("no vanishing difference within sample length".into()))
}

/// Float-mode variant with a relative tolerance.
pub fn slow_order_f64(values: &[f64], tol: f64) -> Result<usize> {
    if values.len() < 2 {
        return Err(Error::Undetermined("need at least 2 samples".into()));
    }
    let scale = values.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    let mut row: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    for p in 0..values.len() - 1 {
        if row.iter().all(|x| x.abs() <= tol * scale) {
            return Ok(p);
        }
        row = row.windows(2).map(|w| w[1] - w[0]).collect();
        if row.is_empty() {
            break;
        }
    }
    Err(Error::Undetermined("no vanishing difference within sample length".into()))
}

/// Which fine-lattice shift a stencil reproduces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StencilTarget {
    /// `f_{n+shift}` expressed over one slow variable `n_1`
    OneScale { shift: i32 },
    /// `f_{n+shift}` over `(n_1, n_2)`
    TwoScale { shift: i32 },
    /// `f_{n+1,m+1}` over `(n_1, m_1, m_2)`
    CrossShift,
}

/// Finite linear combination of slow-lattice samples reproducing a
/// fine-lattice shift. Coefficients are Laurent polynomials in `N`.
#[derive(Clone, Debug)]
pub struct ExpansionStencil {
    pub target: StencilTarget,
    /// slow multi-shift -> coefficient
    pub terms: Vec<(Vec<i32>, NPoly)>,
    /// power of `1/N` at which the expansion was truncated (first omitted order)
    pub truncation_order: u32,
    pub n: i64,
}

impl ExpansionStencil {
    fn push(&mut self, shift: Vec<i32>, coeff: NPoly) {
        if coeff.is_zero() {
            return;
        }
        if let Some(t) = self.terms.iter_mut().find(|t| t.0 == shift) {
            let old = std::mem::take(&mut t.1);
            t.1 = old + coeff;
        } else {
            self.terms.push((shift, coeff));
        }
        self.terms.retain(|t| !t.1.is_zero());
    }

    /// Apply to slow samples given as a callback on multi-indices, using the
    /// stencil's own `N`. Exact.
    pub fn apply<F: Fn(&[i32]) -> Rat>(&self, g: F) -> Rat {
        let mut acc = Rat::zero();
        for (shift, coeff) in &self.terms {
            acc += coeff.evaluate(self.n) * g(shift);
        }
        acc
    }

    /// Apply a one-scale stencil to consecutive slow samples anchored at
    /// `base` (index into `sample.values` that plays the role of `n_1`).
    /// Applying a stencil outside its declared validity is an error, not a
    /// silent degradation: the sample's declared order must not exceed the
    /// stencil's, and the sample must actually satisfy its own invariant.
    pub fn apply_to_sample(&self, sample: &SlowFunctionSample, base: usize) -> Result<Rat> {
        let stencil_order = match self.target {
            StencilTarget::OneScale { .. } => (self.truncation_order - 1) as usize,
            _ => {
                return Err(Error::Domain(
                    "apply_to_sample supports one-scale stencils; use apply for multi-scale targets".into(),
                ))
            }
        };
        if sample.declared_order > stencil_order {
            return Err(Error::Domain(format!(
                "sample declares order {} but the stencil is valid through order {stencil_order}",
                sample.declared_order
            )));
        }
        if !sample.is_consistent() {
            return Err(Error::Domain(
                "sample violates its declared slow order (nonvanishing top difference)".into(),
            ));
        }
        for (shift, _) in &self.terms {
            let idx = base as i64 + shift[0] as i64;
            if idx < 0 || idx >= sample.values.len() as i64 {
                return Err(Error::Domain(format!("stencil shift {} leaves the sample", shift[0])));
            }
        }
        Ok(self.apply(|shift| sample.values[(base as i64 + shift[0] as i64) as usize].clone()))
    }

    pub fn apply_f64<F: Fn(&[i32]) -> f64>(&self, g: F) -> f64 {
        use crate::numeric::rat_to_f64;
        self.terms
            .iter()
            .map(|(s, c)| rat_to_f64(&c.evaluate(self.n)) * g(s))
            .sum()
    }

    /// Coefficients of the zero-shift term must sum to 1 at order `N^0`
    /// (constants are reproduced exactly); in fact the sum over *all* terms
    /// must be exactly 1.
    pub fn reproduces_constants(&self) -> bool {
        let mut total = NPoly::zero();
        for (_, c) in &self.terms {
            total = total + c.clone();
        }
        total == NPoly::constant(Rat::one())
    }

    /// Structured-text form: shift multi-index -> numerator/denominator pair
    /// of the coefficient evaluated at the stencil's `N`.
    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<_> = self
            .terms
            .iter()
            .map(|(s, c)| {
                let v = c.evaluate(self.n);
                json!({
                    "shift": s,
                    "num": v.numer().to_string(),
                    "den": v.denom().to_string(),
                })
            })
            .collect();
        json!({
            "target": format!("{:?}", self.target),
            "n": self.n,
            "truncation_order": self.truncation_order,
            "terms": terms,
        })
    }
}

fn check_divides(m: i64, n: i64, what: &str) -> Result<()> {
    if m == 0 || n % m != 0 {
        return Err(Error::Domain(format!("{what}: {m} must divide {n}")));
    }
    Ok(())
}

/// Shift stencil over a single slow variable `n_1 = M n / N`.
///
/// The asymmetric forms are Newton forward-difference interpolants, which is
/// exactly what inverting the `ω = 1/N` expansion gives; for `p = 2` the
/// symmetric three-point form exists, while odd orders admit no symmetric
/// form and are rejected.
pub fn one_scale_stencil(p: usize, n: i64, m: i64, shift: i32, symmetric: bool) -> Result<ExpansionStencil> {
    if !(1..=3).contains(&p) {
        return Err(Error::Domain(format!("one-scale stencil supports p in 1..=3, got {p}")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("need N >= 2, got {n}")));
    }
    if shift != 1 && shift != -1 {
        return Err(Error::Domain("shift must be +1 or -1".into()));
    }
    check_divides(m, n, "one-scale stencil")?;
    if symmetric && p % 2 == 1 {
        return Err(Error::Domain(format!(
            "a slow function of odd order {p} has no symmetric expansion"
        )));
    }
    let mut st = ExpansionStencil {
        target: StencilTarget::OneScale { shift },
        terms: vec![],
        truncation_order: (p + 1) as u32,
        n,
    };
    // slow increment t = shift * M / N as a Laurent polynomial in N
    let t = NPoly::term(rat(shift as i64 * m, 1), -1);
    if symmetric {
        // f = g + t (g_{+1} - g_{-1})/2 + t^2 (g_{+1} - 2g + g_{-1})/2
        let t2 = &t * &t;
        let half = |p: &NPoly| {
            let mut out = NPoly::zero();
            for (k, c) in p.iter() {
                out.add_term(*k, c * rat(1, 2));
            }
            out
        };
        let th = half(&t);
        let t2h = half(&t2);
        st.push(vec![0], NPoly::constant(Rat::one()));
        st.push(vec![1], th.clone() + t2h.clone());
        let mut neg_th = NPoly::zero();
        for (k, c) in th.iter() {
            neg_th.add_term(*k, -c.clone());
        }
        st.push(vec![-1], neg_th + t2h.clone());
        let mut m2t2 = NPoly::zero();
        for (k, c) in t2.iter() {
            m2t2.add_term(*k, -c.clone());
        }
        st.push(vec![0], m2t2);
        return Ok(st);
    }
    // Newton forward: f(n1 + t) = sum_{i=0}^{p} C(t, i) Δ^i g, exact for order-p g
    let mut binom = NPoly::constant(Rat::one()); // C(t, 0)
    for i in 0..=p {
        if i > 0 {
            // C(t,i) = C(t,i-1) * (t - (i-1)) / i
            let factor = t.clone() + NPoly::constant(rat(-((i as i64) - 1), 1));
            let mut prod = &binom * &factor;
            let mut scaled = NPoly::zero();
            for (k, c) in prod.iter() {
                scaled.add_term(*k, c / Rat::from_integer(BigInt::from(i)));
            }
            prod = scaled;
            binom = prod;
        }
        // Δ^i g = Σ_j (-1)^{i-j} C(i,j) g_{+j}
        for j in 0..=i {
            let mut c = Rat::from_integer(num::integer::binomial(BigInt::from(i), BigInt::from(j)));
            if (i - j) % 2 == 1 {
                c = -c;
            }
            let mut contrib = NPoly::zero();
            for (k, bc) in binom.iter() {
                contrib.add_term(*k, bc * &c);
            }
            st.push(vec![j as i32], contrib);
        }
    }
    Ok(st)
}

/// Orders supported by [`two_scale_stencil`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwoScaleOrders {
    /// order 2 in both `n_1` and `n_2`
    TwoTwo,
    /// order 2 in `n_1`, order 1 in `n_2`
    TwoOne,
}

/// Shift stencil over `n_1 = M_1 n / N`, `n_2 = M_2 n / N^2`.
pub fn two_scale_stencil(n: i64, m1: i64, m2: i64, orders: TwoScaleOrders, shift: i32) -> Result<ExpansionStencil> {
    if n < 2 {
        return Err(Error::Domain(format!("need N >= 2, got {n}")));
    }
    if shift != 1 && shift != -1 {
        return Err(Error::Domain("shift must be +1 or -1".into()));
    }
    check_divides(m1, n, "two-scale stencil (M1 | N)")?;
    check_divides(m2, n * n, "two-scale stencil (M2 | N^2)")?;
    let s = shift as i64;
    let mut st = ExpansionStencil {
        target: StencilTarget::TwoScale { shift },
        terms: vec![],
        truncation_order: match orders {
            TwoScaleOrders::TwoTwo => 4,
            TwoScaleOrders::TwoOne => 3,
        },
        n,
    };
    st.push(vec![0, 0], NPoly::constant(Rat::one()));
    // first and second symmetric differences in n_1
    st.push(vec![1, 0], NPoly::term(rat(s * m1, 2), -1) + NPoly::term(rat(m1 * m1, 2), -2));
    st.push(vec![-1, 0], NPoly::term(rat(-s * m1, 2), -1) + NPoly::term(rat(m1 * m1, 2), -2));
    st.push(vec![0, 0], NPoly::term(rat(-m1 * m1, 1), -2));
    match orders {
        TwoScaleOrders::TwoTwo => {
            st.push(vec![0, 1], NPoly::term(rat(s * m2, 2), -2));
            st.push(vec![0, -1], NPoly::term(rat(-s * m2, 2), -2));
            for (a, b) in [(1, 1), (-1, -1), (1, -1), (-1, 1)] {
                let sign = (a * b) as i64;
                st.push(vec![a, b], NPoly::term(rat(sign * m1 * m2, 4), -3));
            }
        }
        TwoScaleOrders::TwoOne => {
            st.push(vec![0, shift], NPoly::term(rat(m2, 1), -2));
            st.push(vec![0, 0], NPoly::term(rat(-m2, 1), -2));
        }
    }
    Ok(st)
}

/// Stencil for `f_{n+1,m+1}` when `f` is slow of order 2 in `n_1 = M_1 n/N`
/// and `m_1 = M_2 m/N`, and of order 1 in `m_2 = m/N^2`.
pub fn cross_shift_stencil(n: i64, m1: i64, m2: i64) -> Result<ExpansionStencil> {
    if n < 2 {
        return Err(Error::Domain(format!("need N >= 2, got {n}")));
    }
    check_divides(m1, n, "cross-shift stencil (M1 | N)")?;
    check_divides(m2, n, "cross-shift stencil (M2 | N)")?;
    let mut st = ExpansionStencil {
        target: StencilTarget::CrossShift,
        terms: vec![],
        truncation_order: 3,
        n,
    };
    st.push(vec![0, 0, 0], NPoly::constant(Rat::one()));
    st.push(vec![1, 0, 0], NPoly::term(rat(m1, 2), -1) + NPoly::term(rat(m1 * m1, 2), -2));
    st.push(vec![-1, 0, 0], NPoly::term(rat(-m1, 2), -1) + NPoly::term(rat(m1 * m1, 2), -2));
    st.push(vec![0, 1, 0], NPoly::term(rat(m2, 2), -1) + NPoly::term(rat(m2 * m2, 2), -2));
    st.push(vec![0, -1, 0], NPoly::term(rat(-m2, 2), -1) + NPoly::term(rat(m2 * m2, 2), -2));
    st.push(vec![0, 0, 0], NPoly::term(rat(-(m1 * m1 + m2 * m2), 1), -2));
    for (a, b) in [(1, 1), (-1, -1), (1, -1), (-1, 1)] {
        let sign = (a * b) as i64;
        st.push(vec![a, b, 0], NPoly::term(rat(sign * m1 * m2, 4), -2));
    }
    st.push(vec![0, 0, 1], NPoly::term(rat(1, 1), -2));
    st.push(vec![0, 0, 0], NPoly::term(rat(-1, 1), -2));
    Ok(st)
}

/// One term of an envelope expansion at a fine shift: extra power of `1/N`,
/// slow multi-shift in `(n_1, m_1, m_2)`, powers of the scale integers
/// `(M_1, M_2)`, and an exact numeric factor.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeTerm {
    pub extra_order: u8,
    pub shift: [i8; 3],
    pub m1_pow: u8,
    pub m2_pow: u8,
    pub coeff: Rat,
}

/// Expansion of a slow envelope sampled at fine shift `(dn, dm)`, as used by
/// the eps-expansion engine. Valid for envelopes slow of order 2 in `n_1`,
/// `m_1` and order 1 in `m_2 = m/N^2`; truncated after `1/N^2`.
pub fn fine_sample_expansion(dn: i32, dm: i32) -> Vec<EnvelopeTerm> {
    let dn = dn as i64;
    let dm = dm as i64;
    let mut out: Vec<EnvelopeTerm> = vec![];
    let mut push = |o: u8, s: [i8; 3], a: u8, b: u8, c: Rat| {
        if c.is_zero() {
            return;
        }
        if let Some(e) = out
            .iter_mut()
            .find(|e| e.extra_order == o && e.shift == s && e.m1_pow == a && e.m2_pow == b)
        {
            e.coeff += c;
            return;
        }
        out.push(EnvelopeTerm { extra_order: o, shift: s, m1_pow: a, m2_pow: b, coeff: c });
    };
    push(0, [0, 0, 0], 0, 0, Rat::one());
    push(1, [1, 0, 0], 1, 0, rat(dn, 2));
    push(1, [-1, 0, 0], 1, 0, rat(-dn, 2));
    push(1, [0, 1, 0], 0, 1, rat(dm, 2));
    push(1, [0, -1, 0], 0, 1, rat(-dm, 2));
    push(2, [1, 0, 0], 2, 0, rat(dn * dn, 2));
    push(2, [-1, 0, 0], 2, 0, rat(dn * dn, 2));
    push(2, [0, 0, 0], 2, 0, rat(-dn * dn, 1));
    push(2, [0, 1, 0], 0, 2, rat(dm * dm, 2));
    push(2, [0, -1, 0], 0, 2, rat(dm * dm, 2));
    push(2, [0, 0, 0], 0, 2, rat(-dm * dm, 1));
    let x = rat(dn * dm, 4);
    push(2, [1, 1, 0], 1, 1, x.clone());
    push(2, [-1, -1, 0], 1, 1, x.clone());
    push(2, [1, -1, 0], 1, 1, -x.clone());
    push(2, [-1, 1, 0], 1, 1, -x);
    push(2, [0, 0, 1], 0, 0, rat(dm, 1));
    push(2, [0, 0, 0], 0, 0, rat(-dm, 1));
    out.retain(|e| !e.coeff.is_zero());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> StirlingTable {
        StirlingTable::new(8)
    }

    #[test]
    fn stirling_values() {
        let t = table();
        assert_eq!(t.stirling(StirlingKind::First, 3, 3).unwrap(), BigInt::from(1));
        assert_eq!(t.stirling(StirlingKind::First, 3, 2).unwrap(), BigInt::from(-3));
        assert_eq!(t.stirling(StirlingKind::Second, 3, 2).unwrap(), BigInt::from(3));
        assert_eq!(t.stirling(StirlingKind::First, 3, 0).unwrap(), BigInt::from(0));
        assert!(t.stirling(StirlingKind::First, 9, 1).is_err());
    }

    #[test]
    fn stirling_recurrences_hold() {
        let t = table();
        for n in 1..8usize {
            for k in 1..=n {
                let lhs = t.stirling(StirlingKind::First, n + 1, k).unwrap();
                let a = t.stirling(StirlingKind::First, n, k - 1).unwrap();
                let b = if k <= n { t.stirling(StirlingKind::First, n, k).unwrap() } else { BigInt::zero() };
                assert_eq!(lhs, a - BigInt::from(n) * b);
                let lhs = t.stirling(StirlingKind::Second, n + 1, k).unwrap();
                let a = t.stirling(StirlingKind::Second, n, k - 1).unwrap();
                let b = if k <= n { t.stirling(StirlingKind::Second, n, k).unwrap() } else { BigInt::zero() };
                assert_eq!(lhs, a + BigInt::from(k) * b);
            }
        }
    }

    #[test]
    fn expansion_coefficient_cases() {
        let t = table();
        // P(k,k) = omega^k
        for k in 1..5usize {
            let w = rat(7, 3);
            assert_eq!(
                expansion_coefficient(&t, &w, k, k).unwrap(),
                num::pow::pow(w.clone(), k)
            );
        }
        // omega = 1/N, i=2, j=1 -> (1-N)/N^2 at N = 4: -3/16
        let w = rat(1, 4);
        assert_eq!(expansion_coefficient(&t, &w, 2, 1).unwrap(), rat(-3, 16));
        // omega = N: single-term sum
        assert_eq!(expansion_coefficient(&t, &rat(5, 1), 1, 1).unwrap(), rat(5, 1));
        assert!(expansion_coefficient(&t, &rat(2, 1), 1, 2).is_err());
    }

    #[test]
    fn slow_order_detection() {
        let c: Vec<Rat> = (0..5).map(|_| rat(3, 1)).collect();
        assert_eq!(slow_order(&c).unwrap(), 0);
        let sq: Vec<Rat> = (0..5).map(|n| rat(n * n, 1)).collect();
        assert_eq!(slow_order(&sq).unwrap(), 2);
        let cu: Vec<Rat> = (0..6).map(|n| rat(n * n * n - n, 1)).collect();
        assert_eq!(slow_order(&cu).unwrap(), 3);
        let r: Vec<Rat> = (0..4).map(|n| rat(1 << n, 1)).collect();
        assert!(slow_order(&r).is_err());
        assert_eq!(slow_order_f64(&[1.0, 2.0, 3.0, 4.0], 1e-12).unwrap(), 1);
    }

    #[test]
    fn symmetric_p2_matches_print() {
        // N generic, M = 1: g + (g_{+1} - g_{-1})/2N + (g_{+1} - 2g + g_{-1})/2N^2
        let st = one_scale_stencil(2, 6, 1, 1, true).unwrap();
        let coeff = |s: i32| st.terms.iter().find(|t| t.0 == vec![s]).map(|t| t.1.clone()).unwrap();
        assert_eq!(coeff(1), NPoly::term(rat(1, 2), -1) + NPoly::term(rat(1, 2), -2));
        assert_eq!(coeff(-1), NPoly::term(rat(-1, 2), -1) + NPoly::term(rat(1, 2), -2));
        assert_eq!(
            coeff(0),
            NPoly::constant(rat(1, 1)) + NPoly::term(rat(-1, 1), -2)
        );
        assert!(st.reproduces_constants());
    }

    #[test]
    fn asymmetric_p2_matches_print() {
        // f_{n+1} = g + (-g_{+2} + 4g_{+1} - 3g)/2N + (g_{+2} - 2g_{+1} + g)/2N^2
        let st = one_scale_stencil(2, 4, 1, 1, false).unwrap();
        let coeff = |s: i32| st.terms.iter().find(|t| t.0 == vec![s]).map(|t| t.1.clone()).unwrap();
        assert_eq!(coeff(2), NPoly::term(rat(-1, 2), -1) + NPoly::term(rat(1, 2), -2));
        assert_eq!(coeff(1), NPoly::term(rat(2, 1), -1) + NPoly::term(rat(-1, 1), -2));
        assert!(st.reproduces_constants());
    }

    #[test]
    fn asymmetric_p1() {
        // f_{n+1} = g + (g_{+1} - g)/N
        let st = one_scale_stencil(1, 4, 1, 1, false).unwrap();
        let coeff = |s: i32| st.terms.iter().find(|t| t.0 == vec![s]).map(|t| t.1.clone()).unwrap();
        assert_eq!(coeff(1), NPoly::term(rat(1, 1), -1));
        assert_eq!(coeff(0), NPoly::constant(rat(1, 1)) + NPoly::term(rat(-1, 1), -1));
    }

    #[test]
    fn odd_symmetric_rejected() {
        assert!(one_scale_stencil(1, 4, 1, 1, true).is_err());
        assert!(one_scale_stencil(3, 4, 1, 1, true).is_err());
        assert!(one_scale_stencil(4, 4, 1, 1, false).is_err());
        assert!(one_scale_stencil(2, 4, 3, 1, false).is_err(), "M must divide N");
    }

    /// Exactness on polynomials of the declared order, both shifts, p = 1..3.
    #[test]
    fn one_scale_exact_on_polynomials() {
        for p in 1..=3usize {
            for n in [2i64, 5, 8] {
                for shift in [1, -1] {
                    for symmetric in [false, true] {
                        if symmetric && p % 2 == 1 {
                            continue;
                        }
                        let st = one_scale_stencil(p, n, 1, shift, symmetric).unwrap();
                        // g(x) = 2x^p - 3x + 5 truncated to degree p
                        let g = |x: Rat| -> Rat {
                            let mut acc = rat(5, 1) + rat(-3, 1) * x.clone();
                            acc += rat(2, 1) * num::pow::pow(x, p);
                            acc
                        };
                        let base = rat(7, 1); // n1 at the expansion point
                        let predicted = st.apply(|s| g(base.clone() + rat(s[0] as i64, 1)));
                        let direct = g(base.clone() + rat(shift as i64, n));
                        assert_eq!(predicted, direct, "p={p} n={n} shift={shift} sym={symmetric}");
                    }
                }
            }
        }
    }

    #[test]
    fn two_scale_coefficients_match_print() {
        // (p27b): M1 = M2 = 1 pattern at the printed orders
        let st = two_scale_stencil(4, 1, 1, TwoScaleOrders::TwoTwo, 1).unwrap();
        let coeff = |s: &[i32]| st.terms.iter().find(|t| t.0 == s).map(|t| t.1.clone()).unwrap();
        assert_eq!(coeff(&[1, 0]), NPoly::term(rat(1, 2), -1) + NPoly::term(rat(1, 2), -2));
        assert_eq!(coeff(&[0, 1]), NPoly::term(rat(1, 2), -2));
        assert_eq!(coeff(&[1, 1]), NPoly::term(rat(1, 4), -3));
        assert_eq!(coeff(&[1, -1]), NPoly::term(rat(-1, 4), -3));
        assert!(st.reproduces_constants());
        // (h16): n2 term carries M2/N^2 and there is no mixed 1/N^3 term
        let st = two_scale_stencil(4, 1, 2, TwoScaleOrders::TwoOne, 1).unwrap();
        let coeff = |s: &[i32]| st.terms.iter().find(|t| t.0 == s).map(|t| t.1.clone());
        assert_eq!(coeff(&[0, 1]).unwrap(), NPoly::term(rat(2, 1), -2));
        assert!(coeff(&[1, 1]).is_none());
        assert!(st.reproduces_constants());
    }

    #[test]
    fn two_scale_exact_on_captured_monomials() {
        // order (2,2): exact on 1, x1, x1^2, x2, x1 x2
        let st = two_scale_stencil(6, 2, 4, TwoScaleOrders::TwoTwo, -1).unwrap();
        let g = |x1: Rat, x2: Rat| {
            rat(3, 1) + rat(2, 1) * &x1 + rat(5, 1) * &x1 * &x1 + rat(-7, 1) * &x2 + rat(11, 1) * &x1 * &x2
        };
        let (b1, b2) = (rat(4, 1), rat(9, 1));
        let predicted = st.apply(|s| g(b1.clone() + rat(s[0] as i64, 1), b2.clone() + rat(s[1] as i64, 1)));
        let direct = g(b1.clone() - rat(2, 6), b2.clone() - rat(4, 36));
        assert_eq!(predicted, direct);
        // order (2,1): exact on 1, x1, x1^2, x2
        let st = two_scale_stencil(6, 3, 9, TwoScaleOrders::TwoOne, 1).unwrap();
        let g = |x1: Rat, x2: Rat| rat(1, 3) + rat(2, 1) * &x1 * &x1 + rat(-5, 1) * &x2 + &x1;
        let predicted = st.apply(|s| g(b1.clone() + rat(s[0] as i64, 1), b2.clone() + rat(s[1] as i64, 1)));
        let direct = g(b1.clone() + rat(3, 6), b2.clone() + rat(9, 36));
        assert_eq!(predicted, direct);
    }

    #[test]
    fn cross_shift_structure_and_exactness() {
        let st = cross_shift_stencil(6, 2, 3).unwrap();
        assert_eq!(st.terms.len(), 10);
        assert!(st.reproduces_constants());
        // linear in n1 only: f_{n+1,m+1} - g = (M1/N) * slope exactly
        let slope = rat(4, 1);
        let predicted = st.apply(|s| rat(100, 1) + &slope * rat(s[0] as i64, 1));
        let direct = rat(100, 1) + &slope * rat(2, 6);
        assert_eq!(predicted, direct);
        // full captured set: order 2 in n1, m1, order 1 in m2, mixed bilinear
        let g = |a: Rat, b: Rat, c: Rat| {
            rat(2, 1) + &a * &a + rat(3, 1) * &b * &b - rat(4, 1) * &c + rat(7, 1) * &a * &b + &a - &b
        };
        let (ba, bb, bc) = (rat(1, 1), rat(-2, 1), rat(5, 1));
        let predicted = st.apply(|s| {
            g(
                ba.clone() + rat(s[0] as i64, 1),
                bb.clone() + rat(s[1] as i64, 1),
                bc.clone() + rat(s[2] as i64, 1),
            )
        });
        let direct = g(ba.clone() + rat(2, 6), bb.clone() + rat(3, 6), bc.clone() + rat(1, 36));
        assert_eq!(predicted, direct);
    }

    #[test]
    fn cross_shift_numeric_truncation_order() {
        // A smooth Gaussian envelope is only approximately slow; the stencil
        // is asymptotic in the regime where the envelope widens with N. With
        // width ∝ N the deviation from direct sampling shrinks like N^-4
        // (dropped third-derivative terms carry 1/N against W^-3 ~ N^-3),
        // comfortably inside the O(N^-3) truncation bookkeeping.
        let mut errs = vec![];
        for n in [10i64, 20] {
            let w = n as f64 / 2.0;
            let g = |a: f64, b: f64, c: f64| {
                (-(a * a + 0.5 * b * b) / (w * w)).exp() * (1.0 + 0.1 * c)
            };
            let st = cross_shift_stencil(n, 1, 1).unwrap();
            let (ba, bb, bc) = (0.7 * w, -0.3 * w, 0.2);
            let predicted = st.apply_f64(|s| g(ba + s[0] as f64, bb + s[1] as f64, bc + s[2] as f64));
            let direct = g(ba + 1.0 / n as f64, bb + 1.0 / n as f64, bc + 1.0 / (n * n) as f64);
            errs.push((predicted - direct).abs());
        }
        assert!(errs[0] / errs[1] > 8.0, "ratio {}", errs[0] / errs[1]);
    }

    #[test]
    fn duality_difint_composes_to_identity() {
        // order-p sample on the fine lattice; map fine differences to slow ones
        // with omega = N, back with omega = 1/N, for p <= 3: identity, exactly.
        let t = table();
        for p in 1..=3usize {
            for n in [2i64, 3, 7] {
                let poly = |x: Rat| {
                    let mut acc = rat(1, 1) + rat(2, 1) * x.clone();
                    for d in 2..=p {
                        acc += rat(d as i64, 1) * num::pow::pow(x.clone(), d);
                    }
                    acc
                };
                let fine: Vec<Rat> = (0..(p as i64 + 2)).map(|i| poly(rat(i, n))).collect();
                let slow: Vec<Rat> = (0..(p as i64 + 2)).map(|i| poly(rat(i, 1))).collect();
                let df = forward_differences(&fine, p);
                let ds = forward_differences(&slow, p);
                let fine_diffs: Vec<Rat> = (0..=p).map(|i| df[i][0].clone()).collect();
                let slow_diffs: Vec<Rat> = (0..=p).map(|i| ds[i][0].clone()).collect();
                let wn = rat(n, 1);
                let wi = rat(1, n);
                for k in 1..=p {
                    // fine -> slow with omega = N
                    let got = convert_difference(&t, &wn, k, p, &fine_diffs).unwrap();
                    assert_eq!(got, slow_diffs[k], "difInt p={p} N={n} k={k}");
                    // slow -> fine with omega = 1/N
                    let back = convert_difference(&t, &wi, k, p, &slow_diffs).unwrap();
                    assert_eq!(back, fine_diffs[k], "difInt1 p={p} N={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn top_difference_shift_invariance() {
        // remark 2: Δ^p f_n = Δ^p f_{n+l} for order-p samples
        let poly = |x: i64| rat(2 * x * x * x - x + 4, 1);
        let vals: Vec<Rat> = (0..8).map(poly).collect();
        let d = forward_differences(&vals, 3);
        let top = &d[3];
        for w in top.windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn checked_application_rejects_wrong_order() {
        let st = one_scale_stencil(2, 4, 1, 1, true).unwrap();
        // cubic sample declared as order 3: outside an order-2 stencil
        let cubic: Vec<Rat> = (0..6).map(|n: i64| rat(n * n * n, 1)).collect();
        let sample = SlowFunctionSample::new(cubic, 3);
        assert!(st.apply_to_sample(&sample, 2).is_err());
        // mis-declared sample (claims order 1, is order 2) is rejected too
        let quad: Vec<Rat> = (0..5).map(|n: i64| rat(n * n, 1)).collect();
        let lying = SlowFunctionSample::new(quad.clone(), 1);
        assert!(st.apply_to_sample(&lying, 2).is_err());
        // honest quadratic sample reproduces f_{n+1} exactly
        let sample = SlowFunctionSample::new(quad, 2);
        assert_eq!(sample.order().unwrap(), 2);
        // g(x) = x² at x = 2 + 1/4
        assert_eq!(st.apply_to_sample(&sample, 2).unwrap(), rat(81, 16));
    }

    #[test]
    fn stencil_json_roundtrip_shape() {
        let st = one_scale_stencil(2, 4, 1, 1, true).unwrap();
        let v = st.to_json();
        assert_eq!(v["n"], 4);
        assert!(v["terms"].as_array().unwrap().len() >= 3);
    }
}
