//! The `h = 1` orbital integral on the orbital side of the linear AFL, and
//! the verifier comparing its derivative with the intersection number.
//!
//! `H' = A x A` with `A` the diagonal torus of `GL_2`. For `g = [[a, b],
//! [c, d]]` with no zero entry the stabilizer is the center, which is
//! gauge-fixed by `t_1 = 1` for `h_1 = diag(t_1, t_2)`. Writing
//! `x = v(t_2)`, `y = v(u_1)`, `z = v(u_2)` for `h_2 = diag(u_1, u_2)`, the
//! condition `h_1^{-1} g h_2 in GL_2(O)` depends only on valuations, and each
//! valuation cell gets volume one. The characters are `eta(u_2/u_1)` and
//! `|t_2 u_2 / (t_1 u_1)|^s`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::cda::CdaElement;
use crate::cycles::EquiPair;
use crate::error::{MathError, Result};
use crate::formula::{intersection_number, FormulaOptions};
use crate::integrate::TestFunction;
use crate::linalg::{Mat, MatF, PolyF};
use crate::localfield::{ExtKind, QuadExt};

/// `sum_k c_k t^k` with `t = q^{-s}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QSeries {
    coeffs: BTreeMap<i64, BigRational>,
}

impl QSeries {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (i64, BigRational)>) -> Self {
        let mut s = Self::zero();
        for (k, c) in terms {
            s.add_term(k, c);
        }
        s
    }

    pub fn add_term(&mut self, k: i64, c: BigRational) {
        let e = self.coeffs.entry(k).or_insert_with(BigRational::zero);
        *e += c;
        if e.is_zero() {
            self.coeffs.remove(&k);
        }
    }

    pub fn coeff(&self, k: i64) -> BigRational {
        self.coeffs.get(&k).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Nonzero coefficients in increasing exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (i64, &BigRational)> {
        self.coeffs.iter().map(|(k, c)| (*k, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Value at `s = 0`.
    pub fn value_at_zero(&self) -> BigRational {
        self.coeffs.values().fold(BigRational::zero(), |a, c| a + c)
    }

    /// Evaluates at a real `s`; for numerical checks only.
    pub fn eval_f64(&self, q: u32, s: f64) -> f64 {
        let t = (q as f64).powf(-s);
        self.terms().map(|(k, c)| c.to_f64().unwrap_or(f64::NAN) * t.powi(k as i32)).sum()
    }
}

impl fmt::Display for QSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms().map(|(k, c)| format!("({c})t^{k}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// `sum_k k c_k`; the derivative at `s = 0` is `-ln q` times this.
pub fn derivative_at_zero(s: &QSeries) -> BigRational {
    s.terms().fold(BigRational::zero(), |a, (k, c)| a + c * BigRational::from_integer(k.into()))
}

/// Entry valuations `(v(a), v(b), v(c), v(d), v(det))` of a regular `g`.
fn profile(g: &MatF) -> Result<[i64; 5]> {
    if g.rows() != 2 || !g.is_square() {
        return Err(MathError::DimensionMismatch("orbital integrals are for 2 x 2 matrices".into()));
    }
    let v = |x: &crate::localfield::Scalar| {
        x.val().ok_or_else(|| MathError::IrregularElement("an entry or the determinant vanishes".into()))
    };
    Ok([v(g.get(0, 0))?, v(g.get(0, 1))?, v(g.get(1, 0))?, v(g.get(1, 1))?, v(&g.det())?])
}

fn sign(k: i64) -> BigRational {
    if k.rem_euclid(2) == 0 { BigRational::one() } else { -BigRational::one() }
}

/// `Orb(1_{GL_2(O)}, g, s)` from the valuation rectangle
/// `y in [-v(a), v(d) - v(det)]`, `z in [-v(b), v(c) - v(det)]`, where the
/// term is `(-1)^{y+z} t^{v(det) + 2z}`.
pub fn orbital_h1(g: &MatF) -> Result<QSeries> {
    let [va, vb, vc, vd, vdet] = profile(g)?;
    let (ylo, yhi) = (-va, vd - vdet);
    let (zlo, zhi) = (-vb, vc - vdet);
    if ylo > yhi || zlo > zhi {
        return Ok(QSeries::zero());
    }
    // The y-sum factors out: it is 1 or -1 for an odd count, 0 otherwise.
    let ysum: i64 = if (yhi - ylo) % 2 == 0 { if ylo % 2 == 0 { 1 } else { -1 } } else { 0 };
    if ysum == 0 {
        return Ok(QSeries::zero());
    }
    Ok(QSeries::from_terms(
        (zlo..=zhi).map(|z| (vdet + 2 * z, sign(z) * BigRational::from_integer(ysum.into()))),
    ))
}

/// Which torus coordinate is pinned to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    T1,
    U1,
}

/// Direct enumeration of valuation triples, checking each integrality
/// condition separately.
pub fn orbital_h1_brute(g: &MatF, gauge: Gauge) -> Result<QSeries> {
    let [va, vb, vc, vd, vdet] = profile(g)?;
    let span = [va, vb, vc, vd, vdet].iter().map(|v| v.abs()).sum::<i64>() + 2;
    let mut s = QSeries::zero();
    for p1 in -span..=span {
        for p2 in -span..=span {
            for p3 in -span..=span {
                // Valuations of (t1, t2, u1, u2).
                let (t1, t2, u1, u2) = match gauge {
                    Gauge::T1 => (0, p1, p2, p3),
                    Gauge::U1 => (p1, p2, 0, p3),
                };
                let ok = va + u1 - t1 >= 0
                    && vb + u2 - t1 >= 0
                    && vc + u1 - t2 >= 0
                    && vd + u2 - t2 >= 0
                    && vdet + u1 + u2 - t1 - t2 == 0;
                if ok {
                    s.add_term(t2 - t1 + u2 - u1, sign(u2 - u1));
                }
            }
        }
    }
    Ok(s)
}

/// `eta(b / a)`, which makes `Omega(g) * Orb'(g, 0)` depend only on the
/// invariant of `g`.
pub fn transfer_factor(g: &MatF) -> Result<i64> {
    let [va, vb, ..] = profile(g)?;
    Ok(if (vb - va).rem_euclid(2) == 0 { 1 } else { -1 })
}

/// A regular `g` whose invariant `ad / (ad - bc)` is the root of `P`.
pub fn match_element(p: &PolyF) -> Result<MatF> {
    if p.degree() != 1 {
        return Err(MathError::DimensionMismatch("matching is implemented for h = 1".into()));
    }
    let alpha = p.coeff(0).neg();
    let f = alpha.field();
    if alpha.val().is_none() {
        return Err(MathError::NoIntegralRepresentative("the invariant is zero".into()));
    }
    let c = f.one().sub(&alpha.inv()?);
    let Some(vc) = c.val() else {
        return Ok(Mat::identity(2, &f.one()));
    };
    // Keep b and c integral by moving negative valuation of c into b.
    let k = (-vc).max(0);
    Ok(Mat::from_rows(vec![vec![f.one(), f.pi_pow(k)], vec![c.mul(&f.pi_pow(-k)), f.one()]]))
}

/// Both sides of the linear AFL for one `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AflReport {
    /// `v(alpha - 1)` for `P_j = X - alpha`.
    pub r: i64,
    pub series: QSeries,
    /// `-1/2 * Omega(g) * sum k c_k`.
    pub lhs: BigRational,
    /// `c(K) * int_{GL_2(O)} |Res(P_j, P_g)|^{-1} dg`.
    pub rhs: BigRational,
    pub ratio: BigRational,
    pub cells_used: u64,
}

/// Compares the orbital derivative with the intersection number for `j` in
/// the quaternion algebra, with `K` unramified and the unit spherical
/// function. Requires `v(Nrd j)` even so that `j` acts on the height-zero
/// piece.
pub fn verify_afl_h1(j: &CdaElement, opts: FormulaOptions) -> Result<AflReport> {
    let cda = j.algebra();
    if cda.h() != 1 {
        return Err(MathError::Domain("the linear AFL check is for h = 1".into()));
    }
    let vn = j.nrd()?.val().ok_or_else(|| MathError::Domain("j must be invertible".into()))?;
    if vn % 2 != 0 {
        return Err(MathError::Domain(format!("v(Nrd j) = {vn} is odd")));
    }
    let field = cda.field();
    let emb = crate::cda::QuadEmbedding::new(&QuadExt::unramified(field), &cda)?;
    debug_assert_eq!(emb.ext().kind(), ExtKind::Unramified);
    let pair = EquiPair::standard(&emb)?;
    let pj = pair.invariant_poly_j(j)?;
    let g = match_element(&pj)?;
    let series = orbital_h1(&g)?;
    let omega = BigRational::from_integer(transfer_factor(&g)?.into());
    let lhs = -omega * derivative_at_zero(&series) / BigRational::from_integer(2.into());
    let rep = intersection_number(j, &pair, &TestFunction::standard(field, 1, 0), opts)?;
    let rhs = &rep.constant_c * &rep.integral;
    if !rhs.is_positive() {
        return Err(MathError::Domain("intersection side vanished".into()));
    }
    let r = pj.coeff(0).neg().sub(&field.one()).val().ok_or(MathError::InfiniteIntersection)?;
    Ok(AflReport { r, ratio: &lhs / &rhs, series, lhs, rhs, cells_used: rep.cells_used })
}
