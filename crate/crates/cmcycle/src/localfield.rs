//! Arithmetic in F = Q_p (odd p) and in a quadratic extension K/F.
//!
//! Elements carry capped relative precision: a nonzero [`Scalar`] is
//! `p^val * unit + O(p^(val + rel))` with `unit` a p-adic unit known modulo
//! `p^rel`. Inexact zeros `O(p^k)` arise from cancellation and make any
//! valuation-dependent query fail with [`MathError::PrecisionExhausted`].

use std::cell::RefCell;
use std::cmp::{min, Ordering};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{MathError, Result};
use crate::linalg::Ring;

/// Default number of significant p-adic digits.
pub const DEFAULT_PRECISION: u32 = 64;
/// Digits reserved on top of the working precision when retrying.
pub const GUARD_DIGITS: u32 = 8;
const MIN_PRECISION: u32 = 8;
const EXACT_ZERO: i64 = i64::MAX;

thread_local! {
    static POWERS: RefCell<HashMap<u32, Vec<BigInt>>> = RefCell::new(HashMap::new());
}

/// Runs `f` on `p^k` taken from a per-thread table.
fn with_pow<R>(p: u32, k: u32, f: impl FnOnce(&BigInt) -> R) -> R {
    let m = POWERS.with(|cell| {
        let mut map = cell.borrow_mut();
        let table = map.entry(p).or_insert_with(|| vec![BigInt::one()]);
        while table.len() <= k as usize {
            let next = table.last().expect("table starts non-empty") * p;
            table.push(next);
        }
        table[k as usize].clone()
    });
    f(&m)
}

pub(crate) fn pow_p(p: u32, k: u32) -> BigInt {
    with_pow(p, k, |m| m.clone())
}

pub(crate) fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    (2..).take_while(|d: &u32| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// Splits `n != 0` as `p^v * m` with `p` not dividing `m`.
fn split_p(p: u32, n: &BigInt) -> (i64, BigInt) {
    let pb = BigInt::from(p);
    let mut m = n.clone();
    let mut v = 0i64;
    loop {
        let (q, r) = m.div_rem(&pb);
        if !r.is_zero() {
            return (v, m);
        }
        m = q;
        v += 1;
    }
}

/// Base field descriptor: the prime `p` (so `q = p`) and the digit cap `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldDesc {
    p: u32,
    cap: u32,
}

impl FieldDesc {
    pub fn new(p: u32, cap: u32) -> Result<Self> {
        if p < 3 || !is_prime(p) {
            return Err(MathError::Domain(format!("p = {p} is not an odd prime")));
        }
        if cap < MIN_PRECISION {
            return Err(MathError::Domain(format!(
                "precision {cap} is below the minimum {MIN_PRECISION}"
            )));
        }
        Ok(Self { p, cap })
    }

    pub fn with_default_precision(p: u32) -> Result<Self> {
        Self::new(p, DEFAULT_PRECISION)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// Residue field cardinality.
    pub fn q(&self) -> u32 {
        self.p
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    /// Same prime with twice the digit cap.
    pub fn doubled(&self) -> Self {
        Self { p: self.p, cap: self.cap * 2 }
    }

    pub fn zero(&self) -> Scalar {
        Scalar::exact_zero(self.p, self.cap)
    }

    pub fn one(&self) -> Scalar {
        self.int(1)
    }

    pub fn int(&self, n: i64) -> Scalar {
        self.big(&BigInt::from(n))
    }

    pub fn big(&self, n: &BigInt) -> Scalar {
        if n.is_zero() {
            return self.zero();
        }
        let (v, m) = split_p(self.p, n);
        Scalar::from_unit(self.p, self.cap, v, m, self.cap)
    }

    pub fn ratio(&self, num: i64, den: i64) -> Scalar {
        self.rational(&BigRational::new(num.into(), den.into()))
    }

    pub fn rational(&self, r: &BigRational) -> Scalar {
        if r.is_zero() {
            return self.zero();
        }
        let (vn, un) = split_p(self.p, r.numer());
        let (vd, ud) = split_p(self.p, r.denom());
        let modulus = pow_p(self.p, self.cap);
        let inv = ud.modinv(&modulus).expect("denominator unit is invertible");
        Scalar::from_unit(self.p, self.cap, vn - vd, un * inv, self.cap)
    }

    /// `pi^k` for the uniformizer `pi = p`.
    pub fn pi_pow(&self, k: i64) -> Scalar {
        Scalar::from_unit(self.p, self.cap, k, BigInt::one(), self.cap)
    }

    pub fn uniformizer(&self) -> Scalar {
        self.pi_pow(1)
    }

    /// Teichmuller representative of `a mod p`, the `(p-1)`-th root of unity
    /// congruent to `a`.
    pub fn teichmuller(&self, a: u32) -> Scalar {
        let m = pow_p(self.p, self.cap);
        let e = pow_p(self.p, self.cap - 1);
        let w = BigInt::from(a).modpow(&e, &m);
        Scalar::from_unit(self.p, self.cap, 0, w, self.cap)
    }

    /// Smallest positive integer that is a quadratic non-residue mod p.
    pub fn smallest_nonresidue(&self) -> u32 {
        let p = self.p as u64;
        (2..p)
            .find(|&a| mod_pow(a, (p - 1) / 2, p) == p - 1)
            .expect("odd primes have non-residues") as u32
    }
}

pub(crate) fn mod_pow(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

/// Element of F = Q_p with capped relative precision.
#[derive(Clone)]
pub struct Scalar {
    p: u32,
    cap: u32,
    val: i64,
    unit: BigInt,
    rel: u32,
}

impl Scalar {
    fn exact_zero(p: u32, cap: u32) -> Self {
        Self { p, cap, val: EXACT_ZERO, unit: BigInt::zero(), rel: 0 }
    }

    /// `O(p^k)`.
    fn inexact_zero(p: u32, cap: u32, k: i64) -> Self {
        Self { p, cap, val: k, unit: BigInt::zero(), rel: 0 }
    }

    /// `p^val * unit` known to `rel` digits; `unit` must be prime to p.
    fn from_unit(p: u32, cap: u32, val: i64, unit: BigInt, rel: u32) -> Self {
        if rel == 0 {
            return Self::inexact_zero(p, cap, val);
        }
        let unit = with_pow(p, rel, |m| unit.mod_floor(m));
        debug_assert!(!(&unit % p).is_zero());
        Self { p, cap, val, unit, rel }
    }

    /// Descriptor of the field this value was created in.
    pub fn field(&self) -> FieldDesc {
        FieldDesc { p: self.p, cap: self.cap }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn is_exact_zero(&self) -> bool {
        self.val == EXACT_ZERO
    }

    /// True for exact zeros and for values that vanish at their precision.
    pub fn is_zero(&self) -> bool {
        self.rel == 0
    }

    /// Certified valuation, or `None` when the value is zero at its precision.
    pub fn val(&self) -> Option<i64> {
        (self.rel > 0).then_some(self.val)
    }

    /// Valuation, failing for inexact zeros.
    pub fn valuation(&self) -> Result<i64> {
        if self.is_exact_zero() {
            return Err(MathError::Domain("valuation of zero".into()));
        }
        self.val().ok_or_else(|| MathError::precision("valuation of an inexact zero"))
    }

    /// Absolute precision; `None` for an exact zero.
    pub fn abs_prec(&self) -> Option<i64> {
        (!self.is_exact_zero()).then(|| self.val + self.rel as i64)
    }

    pub fn rel_prec(&self) -> u32 {
        self.rel
    }

    /// Reduction of the unit part modulo p.
    pub fn unit_residue(&self) -> Option<u32> {
        (self.rel > 0).then(|| (&self.unit % self.p).to_u32().expect("residue fits"))
    }

    /// The normalized absolute value `q^(-v(x))`.
    pub fn norm_abs(&self) -> Result<BigRational> {
        if self.is_exact_zero() {
            return Ok(BigRational::zero());
        }
        Ok(q_power(self.p, -self.valuation()?))
    }

    /// Canonical rational lift `p^val * unit` with `0 < unit < p^rel`.
    pub fn lift(&self) -> BigRational {
        if self.rel == 0 {
            return BigRational::zero();
        }
        q_power(self.p, self.val) * BigRational::from_integer(self.unit.clone())
    }

    /// Best integer approximation modulo `p^k` for integral values.
    pub fn residue_mod(&self, k: u32) -> Result<BigInt> {
        if self.rel == 0 {
            if self.is_exact_zero() || self.val >= k as i64 {
                return Ok(BigInt::zero());
            }
            return Err(MathError::precision("residue of an inexact zero"));
        }
        if self.val < 0 {
            return Err(MathError::Domain("residue of a non-integral value".into()));
        }
        if self.val + (self.rel as i64) < k as i64 {
            return Err(MathError::precision("residue beyond known digits"));
        }
        let m = pow_p(self.p, k);
        Ok((pow_p(self.p, self.val as u32) * &self.unit).mod_floor(&m))
    }

    pub fn neg(&self) -> Self {
        if self.rel == 0 {
            return self.clone();
        }
        let unit = with_pow(self.p, self.rel, |m| (-&self.unit).mod_floor(m));
        Self { unit, ..self.clone() }
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.p, o.p);
        if self.is_exact_zero() {
            return o.clone();
        }
        if o.is_exact_zero() {
            return self.clone();
        }
        let abs = min(self.val + self.rel as i64, o.val + o.rel as i64);
        let vmin = min(self.val, o.val);
        if abs <= vmin {
            return Self::inexact_zero(self.p, self.cap, abs);
        }
        let width = (abs - vmin) as u32;
        let term = |x: &Scalar| -> BigInt {
            let shift = x.val - vmin;
            if x.rel == 0 || shift >= width as i64 {
                BigInt::zero()
            } else {
                with_pow(x.p, shift as u32, |m| &x.unit * m)
            }
        };
        let s = with_pow(self.p, width, |m| (term(self) + term(o)).mod_floor(m));
        if s.is_zero() {
            return Self::inexact_zero(self.p, self.cap, abs);
        }
        let (k, unit) = split_p(self.p, &s);
        Self { p: self.p, cap: self.cap, val: vmin + k, unit, rel: width - k as u32 }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.p, o.p);
        if self.is_exact_zero() || o.is_exact_zero() {
            return Self::exact_zero(self.p, self.cap);
        }
        let rel = min(self.rel, o.rel);
        let val = self.val + o.val;
        if rel == 0 {
            let abs = min(self.val + self.rel as i64 + o.val, o.val + o.rel as i64 + self.val);
            return Self::inexact_zero(self.p, self.cap, abs);
        }
        let unit = with_pow(self.p, rel, |m| (&self.unit * &o.unit).mod_floor(m));
        Self { p: self.p, cap: self.cap, val, unit, rel }
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_exact_zero() {
            return Err(MathError::Domain("inverse of zero".into()));
        }
        if self.rel == 0 {
            return Err(MathError::precision("inverse of an inexact zero"));
        }
        let m = pow_p(self.p, self.rel);
        let unit = self.unit.modinv(&m).expect("units are invertible");
        Ok(Self { p: self.p, cap: self.cap, val: -self.val, unit, rel: self.rel })
    }

    pub fn div(&self, o: &Self) -> Result<Self> {
        Ok(self.mul(&o.inv()?))
    }

    /// Multiplication by `p^k`.
    pub fn shift(&self, k: i64) -> Self {
        if self.is_exact_zero() {
            return self.clone();
        }
        Self { val: self.val + k, ..self.clone() }
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(self.field().one(), |acc, _| acc.mul(self))
    }

    /// Equality at the common precision of both operands.
    pub fn agrees_with(&self, o: &Self) -> bool {
        self.sub(o).is_zero()
    }

    /// Reduces the relative precision to at most `rel` digits.
    pub fn truncate(&self, rel: u32) -> Self {
        if self.rel <= rel {
            return self.clone();
        }
        Self::from_unit(self.p, self.cap, self.val, self.unit.clone(), rel)
    }
}

/// `q^k` as an exact rational.
pub fn q_power(q: u32, k: i64) -> BigRational {
    let base = BigInt::from(q).pow(k.unsigned_abs() as u32);
    if k >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact_zero() {
            return write!(f, "0");
        }
        if self.rel == 0 {
            return write!(f, "O({}^{})", self.p, self.val);
        }
        write!(f, "{} + O({}^{})", self.lift(), self.p, self.val + self.rel as i64)
    }
}

impl PartialEq for Scalar {
    /// Exact structural equality of the stored digits.
    fn eq(&self, o: &Self) -> bool {
        self.p == o.p && self.val == o.val && self.rel == o.rel && self.unit == o.unit
    }
}

impl Ring for Scalar {
    fn zero_like(&self) -> Self {
        self.field().zero()
    }
    fn one_like(&self) -> Self {
        self.field().one()
    }
    fn add(&self, o: &Self) -> Self {
        Scalar::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Scalar::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Scalar::mul(self, o)
    }
    fn neg(&self) -> Self {
        Scalar::neg(self)
    }
    fn inv(&self) -> Result<Self> {
        Scalar::inv(self)
    }
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn is_exact_zero(&self) -> bool {
        Scalar::is_exact_zero(self)
    }
    fn val(&self) -> Option<i64> {
        Scalar::val(self)
    }
}

/// Ramification type of K/F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtKind {
    Unramified,
    Ramified,
}

/// Quadratic extension `K = F(g)` with `g^2` the Teichmuller lift of the
/// smallest non-residue (unramified) or `g^2 = pi * u` (ramified).
#[derive(Debug, Clone)]
pub struct QuadExt {
    field: FieldDesc,
    kind: ExtKind,
    u: i64,
    gen_sq: Scalar,
}

impl QuadExt {
    pub fn unramified(field: FieldDesc) -> Arc<Self> {
        let e = field.smallest_nonresidue() as i64;
        let gen_sq = field.teichmuller(e as u32);
        Arc::new(Self { field, kind: ExtKind::Unramified, u: e, gen_sq })
    }

    /// Ramified extension with `g^2 = pi * u` for a unit `u`.
    pub fn ramified(field: FieldDesc, u: i64) -> Result<Arc<Self>> {
        if u.rem_euclid(field.p() as i64) == 0 {
            return Err(MathError::Domain(format!("u = {u} is not a unit")));
        }
        let gen_sq = field.int(u).shift(1);
        Ok(Arc::new(Self { field, kind: ExtKind::Ramified, u, gen_sq }))
    }

    pub fn new(field: FieldDesc, kind: ExtKind) -> Arc<Self> {
        match kind {
            ExtKind::Unramified => Self::unramified(field),
            ExtKind::Ramified => Self::ramified(field, 1).expect("1 is a unit"),
        }
    }

    pub fn field(&self) -> FieldDesc {
        self.field
    }

    pub fn kind(&self) -> ExtKind {
        self.kind
    }

    /// The unit `u` in `g^2 = pi * u` (ramified) or `e` (unramified).
    pub fn unit_param(&self) -> i64 {
        self.u
    }

    pub fn gen_sq(&self) -> &Scalar {
        &self.gen_sq
    }

    /// Valuation of the relative discriminant.
    pub fn disc_val(&self) -> u32 {
        match self.kind {
            ExtKind::Unramified => 0,
            ExtKind::Ramified => 1,
        }
    }

    pub fn elem(self: &Arc<Self>, a: Scalar, b: Scalar) -> ExtScalar {
        ExtScalar { a, b, ext: Arc::clone(self) }
    }

    pub fn from_base(self: &Arc<Self>, a: Scalar) -> ExtScalar {
        let b = self.field.zero();
        self.elem(a, b)
    }

    pub fn ints(self: &Arc<Self>, a: i64, b: i64) -> ExtScalar {
        self.elem(self.field.int(a), self.field.int(b))
    }

    pub fn zero(self: &Arc<Self>) -> ExtScalar {
        self.ints(0, 0)
    }

    pub fn one(self: &Arc<Self>) -> ExtScalar {
        self.ints(1, 0)
    }

    /// The trace-zero generator `g`.
    pub fn gen(self: &Arc<Self>) -> ExtScalar {
        self.ints(0, 1)
    }
}

impl PartialEq for QuadExt {
    fn eq(&self, o: &Self) -> bool {
        self.field == o.field && self.kind == o.kind && self.u == o.u
    }
}

/// `|Disc_{K/F}|^{-h^2} = q^{d h^2}`.
pub fn disc_norm(k: &QuadExt, h: u32) -> BigRational {
    q_power(k.field.q(), (k.disc_val() * h * h) as i64)
}

/// The unramified quadratic character `eta(x) = (-1)^{v(x)}`.
pub fn eta_unramified(k: &QuadExt, x: &Scalar) -> Result<i8> {
    if k.kind != ExtKind::Unramified {
        return Err(MathError::Domain("eta is defined here for unramified K only".into()));
    }
    Ok(if x.valuation()?.rem_euclid(2) == 0 { 1 } else { -1 })
}

/// Element `a + b g` of K.
#[derive(Clone)]
pub struct ExtScalar {
    a: Scalar,
    b: Scalar,
    ext: Arc<QuadExt>,
}

impl ExtScalar {
    pub fn ext(&self) -> &Arc<QuadExt> {
        &self.ext
    }

    pub fn re(&self) -> &Scalar {
        &self.a
    }

    pub fn im(&self) -> &Scalar {
        &self.b
    }

    fn with(&self, a: Scalar, b: Scalar) -> Self {
        Self { a, b, ext: Arc::clone(&self.ext) }
    }

    pub fn conj(&self) -> Self {
        self.with(self.a.clone(), self.b.neg())
    }

    pub fn norm(&self) -> Scalar {
        self.a.mul(&self.a).sub(&self.ext.gen_sq.mul(&self.b.mul(&self.b)))
    }

    pub fn trace(&self) -> Scalar {
        self.a.add(&self.a)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.with(self.a.add(&o.a), self.b.add(&o.b))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.with(self.a.sub(&o.a), self.b.sub(&o.b))
    }

    pub fn neg(&self) -> Self {
        self.with(self.a.neg(), self.b.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let re = self.a.mul(&o.a).add(&self.ext.gen_sq.mul(&self.b.mul(&o.b)));
        let im = self.a.mul(&o.b).add(&self.b.mul(&o.a));
        self.with(re, im)
    }

    pub fn scale(&self, c: &Scalar) -> Self {
        self.with(self.a.mul(c), self.b.mul(c))
    }

    pub fn inv(&self) -> Result<Self> {
        let n = self.norm();
        if n.is_exact_zero() {
            return Err(MathError::Domain("inverse of zero in K".into()));
        }
        let ni = n.inv()?;
        Ok(self.conj().scale(&ni))
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_exact_zero(&self) -> bool {
        self.a.is_exact_zero() && self.b.is_exact_zero()
    }

    /// Valuation normalized on K: `v_K(g) = 1` in both cases.
    pub fn val_k(&self) -> Option<i64> {
        let (va, vb) = (self.a.val(), self.b.val());
        let (wa, wb) = match self.ext.kind {
            ExtKind::Unramified => (va, vb),
            ExtKind::Ramified => (va.map(|v| 2 * v), vb.map(|v| 2 * v + 1)),
        };
        match (wa, wb) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }

    /// The coordinate `a` when the element lies in F.
    pub fn to_base(&self) -> Result<Scalar> {
        if !self.b.is_zero() {
            return Err(MathError::CoefficientNotRational(format!("{self}")));
        }
        Ok(self.a.clone())
    }

    pub fn agrees_with(&self, o: &Self) -> bool {
        self.sub(o).is_zero()
    }
}

impl fmt::Debug for ExtScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ExtScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) + ({})g", self.a, self.b)
    }
}

impl Ring for ExtScalar {
    fn zero_like(&self) -> Self {
        self.ext.zero()
    }
    fn one_like(&self) -> Self {
        self.ext.one()
    }
    fn add(&self, o: &Self) -> Self {
        ExtScalar::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        ExtScalar::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        ExtScalar::mul(self, o)
    }
    fn neg(&self) -> Self {
        ExtScalar::neg(self)
    }
    fn inv(&self) -> Result<Self> {
        ExtScalar::inv(self)
    }
    fn is_zero(&self) -> bool {
        ExtScalar::is_zero(self)
    }
    fn is_exact_zero(&self) -> bool {
        ExtScalar::is_exact_zero(self)
    }
    fn val(&self) -> Option<i64> {
        self.val_k()
    }
}

/// Orders two valuations with `None` (zero) last.
pub(crate) fn cmp_val(a: Option<i64>, b: Option<i64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<Scalar>();
    check::<ExtScalar>();
}
