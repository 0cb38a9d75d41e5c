//! The four lattice models: residuals, explicit stepping, dispersion.
//!
//! The three quad-graph equations (lattice mKdV, Hietarinta, lattice VKVM)
//! relate the four corners of an elementary square and are affine in each
//! corner, so marching is an exact one-point solve. The non-integrable
//! lattice KdV is an explicit two-row scheme on a wider stencil.
//!
//! Conventions:
//! * mKdV and VKVM are simulated in their original multiplicative forms
//!   around background 1; their split forms (linear + quadratic) are used
//!   for linearization checks only.
//! * Hietarinta is evaluated through its polynomial form to avoid the pole
//!   configurations of the rational form; the linear part of that polynomial
//!   form is the one consistent with the printed dispersion relation.
//! * Plane waves are `E_{n,m} = z^n Ω^m`, `z = e^{ik}`, `Ω = e^{-iω}`; for
//!   the three quad models `Ω = (P - Qz)/(Pz - Q)` with the per-model real
//!   pair `(P, Q)`, and the group velocity is
//!   `ω'(k) = (P² - Q²)/(P² + Q² - 2PQ cos k)`.
//!
//! ```
//! use farfield::models::LatticeModel;
//!
//! let m = LatticeModel::mkdv("2", "1").unwrap();
//! let cw = m.dispersion(std::f64::consts::FRAC_PI_2).unwrap();
//! assert!((cw.big_omega.norm() - 1.0).abs() < 1e-13); // |Ω| = 1
//! assert!((cw.group_velocity + 0.8).abs() < 1e-13);   // ω' = -4/5 at cos k = 0
//! ```

use crate::numeric::{parse_rat, rat_to_f64, Rat, C64};
use crate::{Error, Result};
use num::traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SING_REL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkdvParams {
    pub p: Rat,
    pub q: Rat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HietarintaParams {
    pub e1: Rat,
    pub e2: Rat,
    pub o1: Rat,
    /// if absent, derived from the reality condition
    pub o2: Option<Rat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VkvmParams {
    pub alpha: Rat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NikdvParams {
    pub alpha: Rat,
    pub beta: Rat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LatticeModel {
    Mkdv(MkdvParams),
    Hietarinta(HietarintaParams),
    Vkvm(VkvmParams),
    Nikdv(NikdvParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Mkdv,
    Hietarinta,
    Vkvm,
    Nikdv,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Mkdv => "mkdv",
            ModelKind::Hietarinta => "hietarinta",
            ModelKind::Vkvm => "vkvm",
            ModelKind::Nikdv => "nikdv",
        };
        write!(f, "{s}")
    }
}

/// The unique `o2` making the Hietarinta dispersion real:
/// `o2 = e1 e2 o1 / (e1 e2 - o1 (e1 - e2))`.
pub fn hietarinta_o2(e1: &Rat, e2: &Rat, o1: &Rat) -> Result<Rat> {
    let den = e1 * e2 - o1 * (e1 - e2);
    if den.is_zero() {
        return Err(Error::Degenerate(
            "no real dispersion: e1 e2 - o1 (e1 - e2) = 0".into(),
        ));
    }
    Ok(e1 * e2 * o1 / den)
}

impl LatticeModel {
    pub fn mkdv(p: &str, q: &str) -> Result<Self> {
        let p = parse_rat(p).ok_or_else(|| Error::Domain("bad p".into()))?;
        let q = parse_rat(q).ok_or_else(|| Error::Domain("bad q".into()))?;
        if p.is_zero() || q.is_zero() {
            return Err(Error::Domain("mkdv needs p, q nonzero".into()));
        }
        Ok(Self::Mkdv(MkdvParams { p, q }))
    }

    /// Hietarinta model with `o2` derived from the reality condition.
    pub fn hietarinta_real(e1: &str, e2: &str, o1: &str) -> Result<Self> {
        let e1 = parse_rat(e1).ok_or_else(|| Error::Domain("bad e1".into()))?;
        let e2 = parse_rat(e2).ok_or_else(|| Error::Domain("bad e2".into()))?;
        let o1 = parse_rat(o1).ok_or_else(|| Error::Domain("bad o1".into()))?;
        let o2 = hietarinta_o2(&e1, &e2, &o1)?;
        Ok(Self::Hietarinta(HietarintaParams { e1, e2, o1, o2: Some(o2) }))
    }

    pub fn vkvm(alpha: &str) -> Result<Self> {
        let alpha = parse_rat(alpha).ok_or_else(|| Error::Domain("bad alpha".into()))?;
        Ok(Self::Vkvm(VkvmParams { alpha }))
    }

    pub fn nikdv(alpha: &str, beta: &str) -> Result<Self> {
        let alpha = parse_rat(alpha).ok_or_else(|| Error::Domain("bad alpha".into()))?;
        let beta = parse_rat(beta).ok_or_else(|| Error::Domain("bad beta".into()))?;
        Ok(Self::Nikdv(NikdvParams { alpha, beta }))
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Mkdv(_) => ModelKind::Mkdv,
            Self::Hietarinta(_) => ModelKind::Hietarinta,
            Self::Vkvm(_) => ModelKind::Vkvm,
            Self::Nikdv(_) => ModelKind::Nikdv,
        }
    }

    /// Background around which the linearization lives: 1 for the
    /// multiplicative forms, 0 for the already-split ones.
    pub fn background(&self) -> f64 {
        match self {
            Self::Mkdv(_) | Self::Vkvm(_) => 1.0,
            Self::Hietarinta(_) | Self::Nikdv(_) => 0.0,
        }
    }

    /// Exact `(P, Q)` of the linear dispersion `Ω = (P - Qz)/(Pz - Q)`.
    pub fn pq_exact(&self) -> Result<(Rat, Rat)> {
        match self {
            Self::Mkdv(m) => Ok((&m.p - &m.q, &m.p + &m.q)),
            Self::Hietarinta(h) => {
                let o2 = h
                    .o2
                    .clone()
                    .ok_or_else(|| Error::Domain("hietarinta o2 not fixed; reality condition required".into()))?;
                let expect = hietarinta_o2(&h.e1, &h.e2, &h.o1)?;
                if o2 != expect {
                    return Err(Error::Domain("hietarinta o2 violates the reality condition".into()));
                }
                Ok((&h.o1 * (&h.e1 - &h.e2), &h.e1 * (&h.o1 - &h.e2)))
            }
            Self::Vkvm(v) => Ok((v.alpha.clone(), Rat::from_integer(1.into()) - &v.alpha)),
            Self::Nikdv(_) => Err(Error::Domain("nikdv is not of PQ form".into())),
        }
    }

    /// Quad linear part `a u00 + b u10 + c u01 + d u11` of the split form.
    pub fn linear_coeffs(&self) -> Result<[f64; 4]> {
        match self {
            Self::Mkdv(m) => {
                let (p, q) = (rat_to_f64(&m.p), rat_to_f64(&m.q));
                Ok([p - q, -(p + q), p + q, -(p - q)])
            }
            Self::Hietarinta(h) => {
                let o2 = h
                    .o2
                    .clone()
                    .ok_or_else(|| Error::Domain("hietarinta o2 not fixed".into()))?;
                let (e1, e2, o1, o2) =
                    (rat_to_f64(&h.e1), rat_to_f64(&h.e2), rat_to_f64(&h.o1), rat_to_f64(&o2));
                Ok([
                    o1 * o2 * (e1 - e2),
                    e1 * o2 * (e2 - o1),
                    e2 * o1 * (o2 - e1),
                    e1 * e2 * (o1 - o2),
                ])
            }
            Self::Vkvm(v) => {
                let a = rat_to_f64(&v.alpha);
                Ok([-a, 1.0 - a, -(1.0 - a), a])
            }
            Self::Nikdv(_) => Err(Error::Domain("nikdv is not a quad model".into())),
        }
    }

    /// Residual of the model's defining equation at the four corners
    /// `(u00, u10, u01, u11)` in original variables. Zero iff the
    /// configuration satisfies the equation.
    pub fn residual_quad(&self, u00: f64, u10: f64, u01: f64, u11: f64) -> Result<f64> {
        match self {
            Self::Mkdv(m) => {
                let (p, q) = (rat_to_f64(&m.p), rat_to_f64(&m.q));
                Ok(p * (u00 * u01 - u10 * u11) - q * (u00 * u10 - u01 * u11))
            }
            Self::Vkvm(v) => {
                let a = rat_to_f64(&v.alpha);
                Ok(u01 * (a * u11 - 1.0) - u10 * (a * u00 - 1.0))
            }
            Self::Hietarinta(h) => {
                let o2 = h
                    .o2
                    .clone()
                    .ok_or_else(|| Error::Domain("hietarinta o2 not fixed".into()))?;
                let (e1, e2, o1, o2) =
                    (rat_to_f64(&h.e1), rat_to_f64(&h.e2), rat_to_f64(&h.o1), rat_to_f64(&o2));
                let lhs = o1 * o2 * (e1 - e2) * u00
                    + e1 * e2 * (o1 - o2) * u11
                    + e1 * o2 * (e2 - o1) * u10
                    + e2 * o1 * (o2 - e1) * u01;
                let rhs = ((o2 - e1) * u10 + (e2 - o1) * u01) * u00 * u11
                    + ((o1 - o2) * u00 + (e1 - e2) * u11) * u10 * u01
                    + (o1 * (e2 - o2) * u01 + o2 * (o1 - e1) * u10) * u00
                    + (e2 * (e1 - o1) * u01 + e1 * (o2 - e2) * u10) * u11
                    + (o2 * e2 - o1 * e1) * (u00 * u11 - u10 * u01);
                Ok(lhs - rhs)
            }
            Self::Nikdv(_) => Err(Error::Domain("nikdv residual needs rows; use residual_nikdv".into())),
        }
    }

    /// Residual of the lattice KdV scheme at one site:
    /// `u_up - u_dn - α/4 (u3 - 3u1 + 3um1 - um3) - β (u1² - um1²)`.
    pub fn residual_nikdv(&self, u3: f64, u1: f64, um1: f64, um3: f64, u_up: f64, u_dn: f64) -> Result<f64> {
        match self {
            Self::Nikdv(p) => {
                let a = rat_to_f64(&p.alpha);
                let b = rat_to_f64(&p.beta);
                Ok(u_up - u_dn - a / 4.0 * (u3 - 3.0 * u1 + 3.0 * um1 - um3) - b * (u1 * u1 - um1 * um1))
            }
            _ => Err(Error::Domain("residual_nikdv requires the nikdv model".into())),
        }
    }

    /// Linear-part residual on complex corners (for plane-wave checks).
    pub fn linear_residual(&self, u00: C64, u10: C64, u01: C64, u11: C64) -> Result<C64> {
        let [a, b, c, d] = self.linear_coeffs()?;
        Ok(u00 * a + u10 * b + u01 * c + u11 * d)
    }
}

/// Direction of the quad solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveDirection {
    /// given `(u00, u10, u01)` produce `u11`
    UpRight,
    /// given `(u00, u10, u11)` produce `u01`
    UpLeft,
}

impl LatticeModel {
    /// Exact affine solve of the quad equation for the missing corner. The
    /// inputs are the three known corners in the order documented on
    /// [`SolveDirection`].
    pub fn step_quad(&self, dir: SolveDirection, a: f64, b: f64, c: f64, sing_rel: f64) -> Result<f64> {
        let f = |x: f64| match dir {
            SolveDirection::UpRight => self.residual_quad(a, b, c, x),
            SolveDirection::UpLeft => self.residual_quad(a, b, x, c),
        };
        let f0 = f(0.0)?;
        let f1 = f(1.0)?;
        let den = f1 - f0;
        let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
        if den.abs() < sing_rel * scale {
            return Err(Error::Singular {
                what: format!("quad solve denominator {den:.3e}"),
            });
        }
        Ok(-f0 / den)
    }

    /// One explicit leapfrog row of the lattice KdV, periodic in `n`.
    pub fn step_nikdv(&self, row_m: &[f64], row_m_minus: &[f64]) -> Result<Vec<f64>> {
        let p = match self {
            Self::Nikdv(p) => p,
            _ => return Err(Error::Domain("step_nikdv requires the nikdv model".into())),
        };
        let n = row_m.len();
        if n < 7 || row_m_minus.len() != n {
            return Err(Error::Domain("nikdv needs two equal rows of period >= 7".into()));
        }
        let a = rat_to_f64(&p.alpha);
        let b = rat_to_f64(&p.beta);
        let idx = |i: i64| (((i % n as i64) + n as i64) % n as i64) as usize;
        Ok((0..n as i64)
            .map(|i| {
                let (u3, u1, um1, um3) =
                    (row_m[idx(i + 3)], row_m[idx(i + 1)], row_m[idx(i - 1)], row_m[idx(i - 3)]);
                row_m_minus[idx(i)] + a / 4.0 * (u3 - 3.0 * u1 + 3.0 * um1 - um3) + b * (u1 * u1 - um1 * um1)
            })
            .collect())
    }
}

/// Linear plane-wave data for a model at wavenumber `k`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CarrierWave {
    pub k: f64,
    pub z: C64,
    pub omega: f64,
    pub big_omega: C64,
    pub group_velocity: f64,
}

impl LatticeModel {
    /// Dispersion relation and group velocity at wavenumber `k`.
    pub fn dispersion(&self, k: f64) -> Result<CarrierWave> {
        let z = C64::from_polar(1.0, k);
        match self {
            Self::Nikdv(p) => {
                let a = rat_to_f64(&p.alpha);
                let sigma = a * k.sin().powi(3);
                if sigma.abs() > 1.0 {
                    return Err(Error::Degenerate(format!(
                        "nikdv reality violated: |alpha sin^3 k| = {:.6} > 1",
                        sigma.abs()
                    )));
                }
                let omega = sigma.asin();
                let cw = (1.0 - sigma * sigma).sqrt();
                let big_omega = C64::new(cw, -sigma);
                let gv = 3.0 * a * k.cos() * k.sin().powi(2) / cw;
                Ok(CarrierWave { k, z, omega, big_omega, group_velocity: gv })
            }
            _ => {
                let (p, q) = self.pq_exact()?;
                let (pf, qf) = (rat_to_f64(&p), rat_to_f64(&q));
                let den = pf * pf + qf * qf - 2.0 * pf * qf * k.cos();
                if den.abs() < 1e-14 {
                    return Err(Error::Degenerate("dispersion denominator vanishes (P = Q, k = 0 type)".into()));
                }
                let big_omega = (C64::new(pf, 0.0) - z * qf) / (z * pf - C64::new(qf, 0.0));
                let omega = -big_omega.arg();
                let gv = (pf * pf - qf * qf) / den;
                Ok(CarrierWave { k, z, omega, big_omega, group_velocity: gv })
            }
        }
    }

    /// `ω(k)` along a sweep with branch continuity (unwrap by ±2π).
    pub fn dispersion_sweep(&self, ks: &[f64]) -> Vec<Result<CarrierWave>> {
        let mut prev: Option<f64> = None;
        ks.iter()
            .map(|&k| {
                let mut cw = self.dispersion(k)?;
                if let Some(p) = prev {
                    while cw.omega - p > std::f64::consts::PI {
                        cw.omega -= 2.0 * std::f64::consts::PI;
                    }
                    while cw.omega - p < -std::f64::consts::PI {
                        cw.omega += 2.0 * std::f64::consts::PI;
                    }
                }
                prev = Some(cw.omega);
                Ok(cw)
            })
            .collect()
    }
}

impl LatticeModel {
    /// Signed extremes of the group velocity over the whole Brillouin zone,
    /// by dense sampling. Radiation shed by imperfect initial data travels
    /// at these speeds, so simulation windows must budget for them.
    pub fn group_speed_bounds(&self) -> (f64, f64) {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for i in 1..512 {
            let k = std::f64::consts::PI * i as f64 / 512.0;
            if let Ok(cw) = self.dispersion(k) {
                lo = lo.min(cw.group_velocity);
                hi = hi.max(cw.group_velocity);
            }
        }
        (lo, hi)
    }
}

/// Wavenumber given by a rational `cos k` and the sign of `sin k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosK {
    pub cos: Rat,
    pub sin_sign: i8,
}

impl CosK {
    pub fn new(cos: Rat, sin_sign: i8) -> Result<Self> {
        if cos.abs() > Rat::from_integer(1.into()) {
            return Err(Error::Domain("need |cos k| <= 1".into()));
        }
        if sin_sign != 1 && sin_sign != -1 {
            return Err(Error::Domain("sin sign must be +1 or -1".into()));
        }
        Ok(Self { cos, sin_sign })
    }

    pub fn k(&self) -> f64 {
        let k = rat_to_f64(&self.cos).clamp(-1.0, 1.0).acos();
        if self.sin_sign >= 0 {
            k
        } else {
            -k
        }
    }

    /// Exact `sin k` when `1 - cos²k` is a rational square.
    pub fn exact_sin(&self) -> Option<Rat> {
        let s2 = Rat::from_integer(1.into()) - &self.cos * &self.cos;
        let num = s2.numer().sqrt();
        let den = s2.denom().sqrt();
        if &num * &num == *s2.numer() && &den * &den == *s2.denom() {
            let s = Rat::new(num, den);
            Some(if self.sin_sign >= 0 { s } else { -s })
        } else {
            None
        }
    }
}

/// Rectangular field window indexed by `(n, m)`.
#[derive(Clone, Debug)]
pub struct FieldGrid<T> {
    pub n_lo: i64,
    pub width: usize,
    pub height: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> FieldGrid<T> {
    pub fn new(n_lo: i64, width: usize, height: usize) -> Self {
        Self { n_lo, width, height, data: vec![T::default(); width * height] }
    }

    #[inline]
    pub fn get(&self, n: i64, m: usize) -> T {
        self.data[m * self.width + (n - self.n_lo) as usize]
    }

    #[inline]
    pub fn set(&mut self, n: i64, m: usize, v: T) {
        self.data[m * self.width + (n - self.n_lo) as usize] = v;
    }

    pub fn row(&self, m: usize) -> &[T] {
        &self.data[m * self.width..(m + 1) * self.width]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [T] {
        &mut self.data[m * self.width..(m + 1) * self.width]
    }
}

pub const GRID_MAGIC: &[u8; 4] = b"FFGr";

impl FieldGrid<f64> {
    /// CSV rows `(n, m, value)` with a schema header line.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# farfield-grid-csv v1")?;
        writeln!(w, "n,m,value")?;
        for m in 0..self.height {
            for i in 0..self.width {
                writeln!(w, "{},{},{}", self.n_lo + i as i64, m, self.row(m)[i])?;
            }
        }
        Ok(())
    }

    /// Compact binary dump. Header: magic `FFGr`, version u32, n_lo i64,
    /// m_lo i64 (=0), width u64, height u64; then row-major f64, little endian.
    pub fn write_binary<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&self.n_lo.to_le_bytes())?;
        w.write_all(&0i64.to_le_bytes())?;
        w.write_all(&(self.width as u64).to_le_bytes())?;
        w.write_all(&(self.height as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: std::io::Read>(mut r: R) -> std::io::Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        r.read_exact(&mut b8)?;
        let n_lo = i64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        r.read_exact(&mut b8)?;
        let width = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let height = u64::from_le_bytes(b8) as usize;
        let mut data = vec![0f64; width * height];
        for v in data.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Ok(Self { n_lo, width, height, data })
    }
}

/// Exact square root of a rational if it is a perfect square.
pub fn rat_sqrt(r: &Rat) -> Option<Rat> {
    if r.is_negative() {
        return None;
    }
    let num = r.numer().sqrt();
    let den = r.denom().sqrt();
    if &num * &num == *r.numer() && &den * &den == *r.denom() {
        Some(Rat::new(num, den))
    } else {
        None
    }
}
