//! Exact matrix algebra over F, K and the other valued division rings of the
//! crate: determinants, characteristic polynomials, resultants, Smith normal
//! form over the valuation ring, and the split invariant polynomial.

use std::fmt;

use crate::error::{MathError, Result};
use crate::localfield::{cmp_val, ExtScalar, Scalar};

/// Division ring with a discrete valuation, as used by the matrix routines.
///
/// Elements carry their own context so that `zero_like`/`one_like` can build
/// constants without a separate descriptor.
pub trait Ring: Clone + fmt::Debug + Send + Sync {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn inv(&self) -> Result<Self>;
    /// Zero at the working precision (exact or not).
    fn is_zero(&self) -> bool;
    fn is_exact_zero(&self) -> bool;
    /// Valuation used for pivoting; `None` when zero at working precision.
    fn val(&self) -> Option<i64>;
}

/// Rings where multiplication commutes; determinants and characteristic
/// polynomials are only meaningful here.
pub trait Commutative: Ring {}

impl Commutative for Scalar {}
impl Commutative for ExtScalar {}

/// Valued rings with a distinguished uniformizer, for Smith/Cartan forms.
pub trait Uniformized: Ring {
    /// `varpi^k` for the uniformizer `varpi` of the valuation returned by `val`.
    fn uniformizer_pow(&self, k: i64) -> Self;
}

impl Uniformized for Scalar {
    fn uniformizer_pow(&self, k: i64) -> Self {
        self.field().pi_pow(k)
    }
}

/// Dense row-major matrix.
#[derive(Clone)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type MatF = Mat<Scalar>;
pub type MatK = Mat<ExtScalar>;

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = self.data.chunks(self.cols.max(1)).collect();
        f.debug_list().entries(rows).finish()
    }
}

impl<T: Clone> Mat<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn try_map<U: Clone>(&self, f: impl FnMut(&T) -> Result<U>) -> Result<Mat<U>> {
        let data = self.data.iter().map(f).collect::<Result<Vec<U>>>()?;
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// Sub-block starting at `(r0, c0)` of size `nr x nc`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |i, j| self.get(r0 + i, c0 + j).clone())
    }

    /// `[[a, b], [c, d]]` from four blocks.
    pub fn from_blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        assert!(a.rows == b.rows && c.rows == d.rows && a.cols == c.cols && b.cols == d.cols);
        Self::from_fn(a.rows + c.rows, a.cols + b.cols, |i, j| {
            match (i < a.rows, j < a.cols) {
                (true, true) => a.get(i, j).clone(),
                (true, false) => b.get(i, j - a.cols).clone(),
                (false, true) => c.get(i - a.rows, j).clone(),
                (false, false) => d.get(i - a.rows, j - a.cols).clone(),
            }
        })
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.data.swap(i * self.cols + a, i * self.cols + b);
            }
        }
    }
}

impl<T: Ring> Mat<T> {
    pub fn identity(n: usize, one: &T) -> Self {
        let zero = one.zero_like();
        Self::from_fn(n, n, |i, j| if i == j { one.clone() } else { zero.clone() })
    }

    pub fn zeros(rows: usize, cols: usize, zero: &T) -> Self {
        Self::from_fn(rows, cols, |_, _| zero.clone())
    }

    /// Diagonal matrix with the given entries.
    pub fn diag(entries: &[T]) -> Self {
        let zero = entries[0].zero_like();
        Self::from_fn(entries.len(), entries.len(), |i, j| {
            if i == j { entries[i].clone() } else { zero.clone() }
        })
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "matrix product shape");
        Self::from_fn(self.rows, o.cols, |i, j| {
            let mut acc = self.get(i, 0).mul(o.get(0, j));
            for k in 1..self.cols {
                let t = self.get(i, k).mul(o.get(k, j));
                if !t.is_exact_zero() {
                    acc = acc.add(&t);
                }
            }
            acc
        })
    }

    pub fn add(&self, o: &Self) -> Self {
        assert!(self.rows == o.rows && self.cols == o.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).add(o.get(i, j)))
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert!(self.rows == o.rows && self.cols == o.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).sub(o.get(i, j)))
    }

    pub fn neg(&self) -> Self {
        self.map(Ring::neg)
    }

    /// `c * self` (scalar on the left).
    pub fn scale_left(&self, c: &T) -> Self {
        self.map(|x| c.mul(x))
    }

    /// `self * c` (scalar on the right).
    pub fn scale_right(&self, c: &T) -> Self {
        self.map(|x| x.mul(c))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Ring::is_zero)
    }

    /// Entrywise agreement at working precision.
    pub fn agrees_with(&self, o: &Self) -> bool {
        self.rows == o.rows && self.cols == o.cols && self.sub(o).is_zero()
    }

    /// Smallest valuation among entries; `None` if all vanish.
    pub fn min_val(&self) -> Option<i64> {
        self.data.iter().filter_map(Ring::val).min()
    }

    /// Inverse by Gauss-Jordan elimination with row operations only, valid
    /// over division rings. A pivot column that vanishes at working precision
    /// counts as singular.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(MathError::DimensionMismatch("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        let one = self.data[0].one_like();
        let mut a = self.clone();
        let mut b = Self::identity(n, &one);
        for col in 0..n {
            let piv = (col..n)
                .filter(|&r| a.get(r, col).val().is_some())
                .min_by(|&x, &y| cmp_val(a.get(x, col).val(), a.get(y, col).val()));
            let Some(piv) = piv else {
                return Err(MathError::SingularMatrix);
            };
            a.swap_rows(col, piv);
            b.swap_rows(col, piv);
            let pinv = a.get(col, col).inv()?;
            for j in 0..n {
                let x = pinv.mul(a.get(col, j));
                a.set(col, j, x);
                let y = pinv.mul(b.get(col, j));
                b.set(col, j, y);
            }
            for r in 0..n {
                if r == col || a.get(r, col).is_exact_zero() {
                    continue;
                }
                let c = a.get(r, col).clone();
                for j in 0..n {
                    let x = a.get(r, j).sub(&c.mul(a.get(col, j)));
                    a.set(r, j, x);
                    let y = b.get(r, j).sub(&c.mul(b.get(col, j)));
                    b.set(r, j, y);
                }
                a.set(r, col, c.zero_like());
            }
        }
        Ok(b)
    }
}

impl<T: Ring + Commutative> Mat<T> {
    /// Determinant by elimination with minimal-valuation pivots. A vanishing
    /// pivot column yields a (possibly inexact) zero.
    pub fn det(&self) -> T {
        assert!(self.is_square(), "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut det = self.data[0].one_like();
        for col in 0..n {
            let piv = (col..n)
                .filter(|&r| a.get(r, col).val().is_some())
                .min_by(|&x, &y| cmp_val(a.get(x, col).val(), a.get(y, col).val()));
            let Some(piv) = piv else {
                // Every candidate pivot vanishes; keep the precision of the zero.
                let z = (col..n)
                    .map(|r| a.get(r, col).clone())
                    .find(|x| !x.is_exact_zero())
                    .unwrap_or_else(|| det.zero_like());
                return det.mul(&z);
            };
            if piv != col {
                a.swap_rows(col, piv);
                det = det.neg();
            }
            let p = a.get(col, col).clone();
            det = det.mul(&p);
            let pinv = p.inv().expect("pivot has a certified valuation");
            for r in col + 1..n {
                if a.get(r, col).is_exact_zero() {
                    continue;
                }
                let c = a.get(r, col).mul(&pinv);
                for j in col + 1..n {
                    let x = a.get(r, j).sub(&c.mul(a.get(col, j)));
                    a.set(r, j, x);
                }
            }
        }
        det
    }

    /// Characteristic polynomial `det(X - M)` by Berkowitz's division-free
    /// algorithm.
    pub fn charpoly(&self) -> Poly<T> {
        assert!(self.is_square(), "characteristic polynomial of a non-square matrix");
        let n = self.rows;
        let one = self.data[0].one_like();
        let zero = one.zero_like();
        // Coefficients from the leading term down.
        let mut c: Vec<T> = vec![one.clone()];
        for r in 0..n {
            let a = self.get(r, r).clone();
            let row: Vec<T> = (0..r).map(|j| self.get(r, j).clone()).collect();
            let mut col: Vec<T> = (0..r).map(|i| self.get(i, r).clone()).collect();
            let mut t = vec![one.clone(), a.neg()];
            for _ in 0..r {
                let dot = row.iter().zip(&col).fold(zero.clone(), |s, (x, y)| s.add(&x.mul(y)));
                t.push(dot.neg());
                col = (0..r)
                    .map(|i| (0..r).fold(zero.clone(), |s, k| s.add(&self.get(i, k).mul(&col[k]))))
                    .collect();
            }
            let next: Vec<T> = (0..r + 2)
                .map(|i| {
                    (0..=r.min(i)).fold(zero.clone(), |s, k| {
                        if i - k < t.len() && k < c.len() { s.add(&t[i - k].mul(&c[k])) } else { s }
                    })
                })
                .collect();
            c = next;
        }
        c.reverse();
        Poly::new(c)
    }

    pub fn trace(&self) -> T {
        (1..self.rows).fold(self.get(0, 0).clone(), |s, i| s.add(self.get(i, i)))
    }
}

/// Dense polynomial, coefficients from the constant term up.
#[derive(Clone, Debug)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

pub type PolyF = Poly<Scalar>;

impl<T: Ring> Poly<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs a coefficient");
        Self { coeffs }
    }

    /// `X - a`.
    pub fn linear(a: &T) -> Self {
        Self::new(vec![a.neg(), a.one_like()])
    }

    /// `prod (X - r_i)`.
    pub fn from_roots(roots: &[T], one: &T) -> Self {
        roots.iter().fold(Self::new(vec![one.clone()]), |acc, r| acc.mul(&Self::linear(r)))
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Formal degree (index of the last stored coefficient).
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, i: usize) -> &T {
        &self.coeffs[i]
    }

    pub fn eval(&self, x: &T) -> T {
        let mut acc = self.coeffs.last().expect("non-empty").clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc.mul(x).add(c);
        }
        acc
    }

    pub fn mul(&self, o: &Self) -> Self {
        let zero = self.coeffs[0].zero_like();
        let mut out = vec![zero; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        Self::new(out)
    }

    pub fn map<U: Ring>(&self, f: impl FnMut(&T) -> U) -> Poly<U> {
        Poly::new(self.coeffs.iter().map(f).collect())
    }

    pub fn try_map<U: Ring>(&self, f: impl FnMut(&T) -> Result<U>) -> Result<Poly<U>> {
        Ok(Poly::new(self.coeffs.iter().map(f).collect::<Result<Vec<U>>>()?))
    }

    pub fn agrees_with(&self, o: &Self) -> bool {
        self.coeffs.len() == o.coeffs.len()
            && self.coeffs.iter().zip(&o.coeffs).all(|(a, b)| a.sub(b).is_zero())
    }
}

impl<T: Ring + Commutative> Poly<T> {
    /// Resultant via the Sylvester determinant. For monic inputs this is
    /// `prod (lambda_i - mu_j)` over the roots of `self` and `o`.
    pub fn resultant(&self, o: &Self) -> T {
        let (m, n) = (self.degree(), o.degree());
        let zero = self.coeffs[0].zero_like();
        if m + n == 0 {
            return self.coeffs[0].one_like();
        }
        let syl = Mat::from_fn(m + n, m + n, |i, j| {
            let (src, shift, deg) = if i < n { (self, i, m) } else { (o, i - n, n) };
            if j >= shift && j - shift <= deg {
                src.coeffs[deg - (j - shift)].clone()
            } else {
                zero.clone()
            }
        });
        syl.det()
    }
}

impl<T: fmt::Display> fmt::Display for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, c)| match i {
                0 => format!("({c})"),
                1 => format!("({c})X"),
                _ => format!("({c})X^{i}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

/// `M = U * diag(varpi^{a_i}) * V` with `U`, `V` invertible over the
/// valuation ring and `a_1 <= ... <= a_r`.
#[derive(Clone, Debug)]
pub struct SnfResult<T> {
    pub u: Mat<T>,
    pub v: Mat<T>,
    pub exponents: Vec<i64>,
}

impl<T: Uniformized> SnfResult<T> {
    pub fn diagonal(&self) -> Mat<T> {
        let one = self.u.get(0, 0).one_like();
        let d: Vec<T> = self.exponents.iter().map(|&a| one.uniformizer_pow(a)).collect();
        Mat::diag(&d)
    }

    pub fn reconstruct(&self) -> Mat<T> {
        self.u.mul(&self.diagonal()).mul(&self.v)
    }

    pub fn max_exponent(&self) -> i64 {
        *self.exponents.last().expect("non-empty")
    }
}

/// Smith (Cartan) normal form of a square nonsingular matrix over the
/// valuation ring of a possibly non-commutative valued division ring.
/// Entries may have negative valuation. A block that vanishes at working
/// precision counts as singular.
pub fn snf<T: Uniformized>(m: &Mat<T>) -> Result<SnfResult<T>> {
    if !m.is_square() {
        return Err(MathError::DimensionMismatch("Smith form of a non-square matrix".into()));
    }
    let n = m.rows;
    let one = m.data[0].one_like();
    let zero = one.zero_like();
    let mut a = m.clone();
    let mut u = Mat::identity(n, &one);
    let mut v = Mat::identity(n, &one);
    let mut exps = Vec::with_capacity(n);
    for t in 0..n {
        let mut best: Option<(usize, usize, i64)> = None;
        for i in t..n {
            for j in t..n {
                if let Some(val) = a.get(i, j).val() {
                    if best.is_none_or(|(_, _, b)| val < b) {
                        best = Some((i, j, val));
                    }
                }
            }
        }
        let Some((pi, pj, e)) = best else {
            return Err(MathError::SingularMatrix);
        };
        a.swap_rows(t, pi);
        u.swap_cols(t, pi);
        a.swap_cols(t, pj);
        v.swap_rows(t, pj);
        // Normalize the pivot to varpi^e by a unit on the right.
        let w = one.uniformizer_pow(-e).mul(a.get(t, t));
        let winv = w.inv()?;
        for i in 0..n {
            let x = a.get(i, t).mul(&winv);
            a.set(i, t, x);
        }
        for l in 0..n {
            let x = w.mul(v.get(t, l));
            v.set(t, l, x);
        }
        let pivot_inv = one.uniformizer_pow(-e);
        for i in t + 1..n {
            if a.get(i, t).is_exact_zero() {
                continue;
            }
            let c = a.get(i, t).mul(&pivot_inv);
            for j in t..n {
                let x = a.get(i, j).sub(&c.mul(a.get(t, j)));
                a.set(i, j, x);
            }
            a.set(i, t, zero.clone());
            for k in 0..n {
                let x = u.get(k, t).add(&u.get(k, i).mul(&c));
                u.set(k, t, x);
            }
        }
        for k in t + 1..n {
            if a.get(t, k).is_exact_zero() {
                continue;
            }
            let d = pivot_inv.mul(a.get(t, k));
            for i in t..n {
                let x = a.get(i, k).sub(&a.get(i, t).mul(&d));
                a.set(i, k, x);
            }
            a.set(t, k, zero.clone());
            for l in 0..n {
                let x = v.get(t, l).add(&d.mul(v.get(k, l)));
                v.set(t, l, x);
            }
        }
        exps.push(e);
    }
    Ok(SnfResult { u, v, exponents: exps })
}

/// Characteristic polynomial of `g'` where
/// `diag(g', g'') = diag(a, d) g^{-1} diag(a, d) [[a, -b], [-c, d]]^{-1}`
/// for `g = [[a, b], [c, d]]` in `h x h` blocks.
pub fn invariant_poly_split<T: Ring + Commutative>(g: &Mat<T>) -> Result<Poly<T>> {
    let gp = split_invariant_element(g)?;
    Ok(gp.charpoly())
}

/// The block `g'` of the split invariant construction.
pub fn split_invariant_element<T: Ring + Commutative>(g: &Mat<T>) -> Result<Mat<T>> {
    if !g.is_square() || !g.rows.is_multiple_of(2) {
        return Err(MathError::DimensionMismatch("need a 2h x 2h matrix".into()));
    }
    let h = g.rows / 2;
    let zero = g.data[0].zero_like();
    let z = Mat::zeros(h, h, &zero);
    let (a, b, c, d) = (g.block(0, 0, h, h), g.block(0, h, h, h), g.block(h, 0, h, h), g.block(h, h, h, h));
    let ad = Mat::from_blocks(&a, &z, &z, &d);
    let twisted = Mat::from_blocks(&a, &b.neg(), &c.neg(), &d);
    let degenerate = |e: MathError| match e {
        MathError::SingularMatrix => MathError::DegenerateElement("a required inverse does not exist".into()),
        other => other,
    };
    let ginv = g.inverse().map_err(degenerate)?;
    let tinv = twisted.inverse().map_err(degenerate)?;
    let full = ad.mul(&ginv).mul(&ad).mul(&tinv);
    Ok(full.block(0, 0, h, h))
}

/// Converts a polynomial with coefficients in K to one over F, checking that
/// every imaginary part vanishes.
pub fn descend_poly(p: &Poly<ExtScalar>) -> Result<PolyF> {
    p.try_map(|c| c.to_base())
}

/// Embeds an F-matrix into K.
pub fn mat_to_k(m: &MatF, k: &std::sync::Arc<crate::localfield::QuadExt>) -> MatK {
    m.map(|x| k.from_base(x.clone()))
}
