//! Haar integration over compact open pieces of `GL_2h(F)`, normalized so
//! that `GL_2h(O_F)` has volume one.
//!
//! Sets are unions of cells `a R_m b` with `R_m` the principal congruence
//! subgroup of level `m` (and `R_0 = GL_2h(O_F)`). Every cell has volume
//! `Vol(R_m) = 1 / #GL_2h(O_F / pi^m)`. A cell is accepted once the integrand
//! certifies that it is constant on it; otherwise it is split into its
//! `R_{m+1}` cosets.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{MathError, Result};
use crate::exec;
use crate::linalg::{snf, Mat, MatF};
use crate::localfield::{ExtKind, FieldDesc, Scalar};

fn big(n: u64) -> BigInt {
    BigInt::from(n)
}

/// `#GL_k(F_Q)`.
pub fn gl_order(qq: &BigInt, k: usize) -> BigInt {
    let qk = qq.pow(k as u32);
    (0..k).fold(BigInt::one(), |acc, i| acc * (&qk - qq.pow(i as u32)))
}

/// `#GL_2h(O_F / pi^n)`; one at `n = 0`.
pub fn deg_level_f(q: u32, h: usize, n: u32) -> BigInt {
    if n == 0 {
        return BigInt::one();
    }
    let qb = big(q as u64);
    qb.pow(4 * (h * h) as u32 * (n - 1)) * gl_order(&qb, 2 * h)
}

/// `#GL_h(O_K / pi^n)`; for ramified K this is `O_K / varpi^{2n}`.
pub fn deg_level_k(kind: ExtKind, q: u32, h: usize, n: u32) -> BigInt {
    if n == 0 {
        return BigInt::one();
    }
    let qb = big(q as u64);
    let hh = (h * h) as u32;
    match kind {
        ExtKind::Unramified => qb.pow(2 * hh * (n - 1)) * gl_order(&qb.pow(2), h),
        ExtKind::Ramified => qb.pow(hh * (2 * n - 1)) * gl_order(&qb, h),
    }
}

/// `Vol(R_n) = 1 / deg_level_f(n)`.
pub fn vol_level(q: u32, h: usize, n: u32) -> BigRational {
    BigRational::new(BigInt::one(), deg_level_f(q, h, n))
}

/// The degree ratio at level `m >= 1`.
pub fn c_pair_at(k1: ExtKind, k2: ExtKind, q: u32, h: usize, m: u32) -> BigRational {
    BigRational::new(deg_level_f(q, h, m), deg_level_k(k1, q, h, m) * deg_level_k(k2, q, h, m))
}

/// `c(K_1, K_2)`; the ratio does not depend on the level, which is checked.
pub fn c_pair(k1: ExtKind, k2: ExtKind, q: u32, h: usize) -> BigRational {
    let c = c_pair_at(k1, k2, q, h, 1);
    debug_assert_eq!(c, c_pair_at(k1, k2, q, h, 2), "degree ratio must not depend on the level");
    c
}

/// `c(K)` from its product formula.
pub fn c_closed(kind: ExtKind, q: u32, h: usize) -> BigRational {
    let qi = |k: i64| crate::localfield::q_power(q, k);
    let one = BigRational::one();
    (1..=h as i64).fold(one.clone(), |acc, n| {
        let (num, den) = match kind {
            ExtKind::Unramified => (&one - qi(1 - 2 * n), &one - qi(-2 * n)),
            ExtKind::Ramified => (&one - qi(-n - h as i64), &one - qi(-n)),
        };
        acc * num / den
    })
}

/// `a R_m b`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub left: MatF,
    pub right: MatF,
    pub depth: u32,
}

impl Cell {
    pub fn new(left: MatF, right: MatF, depth: u32) -> Self {
        Self { left, right, depth }
    }

    /// The point `a b` of the cell.
    pub fn rep(&self) -> MatF {
        self.left.mul(&self.right)
    }

    /// Every `a k b` with `k` in `R_m` differs from `a b` by a matrix with
    /// entries of valuation at least this.
    pub fn perturbation_val(&self) -> i64 {
        let v = |m: &MatF| m.min_val().unwrap_or(0);
        self.depth as i64 + v(&self.left) + v(&self.right)
    }

    /// The `R_{m+1}` cosets making up the cell.
    pub fn children(&self, field: FieldDesc, gl_lifts: &[MatF]) -> Vec<Cell> {
        let dim = self.left.rows();
        if self.depth == 0 {
            return gl_lifts
                .iter()
                .map(|k| Cell::new(self.left.mul(k), self.right.clone(), 1))
                .collect();
        }
        let q = field.q() as usize;
        let count = q.pow((dim * dim) as u32);
        let scale = field.pi_pow(self.depth as i64);
        (0..count)
            .map(|idx| {
                let k = congruence_element(field, dim, &digits(idx, q, dim * dim), &scale);
                Cell::new(self.left.mul(&k), self.right.clone(), self.depth + 1)
            })
            .collect()
    }
}

fn digits(mut idx: usize, base: usize, len: usize) -> Vec<i64> {
    (0..len)
        .map(|_| {
            let d = idx % base;
            idx /= base;
            d as i64
        })
        .collect()
}

/// `I + s Y` for an integer matrix `Y` given row-major.
fn congruence_element(field: FieldDesc, dim: usize, y: &[i64], s: &Scalar) -> MatF {
    Mat::from_fn(dim, dim, |i, j| {
        let e = field.int(y[i * dim + j]).mul(s);
        if i == j { e.add(&field.one()) } else { e }
    })
}

fn det_mod_p(mut a: Vec<i64>, n: usize, p: i64) -> i64 {
    let mut det = 1i64;
    for c in 0..n {
        let Some(piv) = (c..n).find(|&r| a[r * n + c].rem_euclid(p) != 0) else { return 0 };
        if piv != c {
            for k in 0..n {
                a.swap(piv * n + k, c * n + k);
            }
            det = -det;
        }
        let pv = a[c * n + c].rem_euclid(p);
        det = det * pv % p;
        let inv = crate::localfield::mod_pow(pv as u64, (p - 2) as u64, p as u64) as i64;
        for r in c + 1..n {
            let f = a[r * n + c].rem_euclid(p) * inv % p;
            for k in c..n {
                a[r * n + k] = (a[r * n + k] - f * a[c * n + k]).rem_euclid(p);
            }
        }
    }
    det.rem_euclid(p)
}

/// Integer lifts of `GL_dim(F_q)`, in a fixed order.
pub fn gl_residue_lifts(field: FieldDesc, dim: usize, budget: u64) -> Result<Vec<MatF>> {
    let q = field.q() as usize;
    let total = (q as u128).pow((dim * dim) as u32);
    if total > budget as u128 {
        return Err(MathError::EnumerationTooLarge { needed: total, budget });
    }
    Ok((0..total as usize)
        .map(|idx| digits(idx, q, dim * dim))
        .filter(|d| det_mod_p(d.clone(), dim, q as i64) != 0)
        .map(|d| Mat::from_fn(dim, dim, |i, j| field.int(d[i * dim + j])))
        .collect())
}

/// Representatives of `R_n / R_m` (`m > n`), addressed by index.
#[derive(Debug, Clone)]
pub struct QuotientReps {
    field: FieldDesc,
    dim: usize,
    n: u32,
    m: u32,
    lifts: Vec<MatF>,
    len: u128,
}

impl QuotientReps {
    pub fn new(field: FieldDesc, h: usize, n: u32, m: u32, budget: u64) -> Result<Self> {
        assert!(m >= n, "depth below the level");
        let dim = 2 * h;
        let q = field.q();
        let len = deg_level_f(q, h, m) / deg_level_f(q, h, n);
        let len: u128 = len.try_into().unwrap_or(u128::MAX);
        if len > budget as u128 {
            return Err(MathError::EnumerationTooLarge { needed: len, budget });
        }
        let lifts = if n == 0 && m > 0 { gl_residue_lifts(field, dim, budget)? } else { Vec::new() };
        Ok(Self { field, dim, n, m, lifts, len })
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The `idx`-th representative: `k_0 (I + pi Y)` at level 0, `I + pi^n Y`
    /// otherwise, with `Y` read modulo the remaining depth.
    pub fn get(&self, idx: usize) -> MatF {
        let dim2 = self.dim * self.dim;
        let one = Mat::identity(self.dim, &self.field.one());
        if self.m == self.n {
            return one;
        }
        let (base, start) = if self.n == 0 { (self.lifts.len(), 1) } else { (1, self.n) };
        let (k0, rest) = (idx % base, idx / base);
        let span = (self.field.q() as usize).pow(self.m - start);
        let y = digits(rest, span, dim2);
        let k = if self.m > start {
            congruence_element(self.field, self.dim, &y, &self.field.pi_pow(start as i64))
        } else {
            one
        };
        if self.n == 0 { self.lifts[k0].mul(&k) } else { k }
    }
}

/// Whether `x` lies in `R_n`.
pub fn in_level(x: &MatF, n: u32) -> bool {
    if x.entries().iter().any(|e| e.val().is_some_and(|v| v < 0)) {
        return false;
    }
    if n == 0 {
        return x.det().val() == Some(0);
    }
    let id = Mat::identity(x.rows(), &x.get(0, 0).field().one());
    x.sub(&id).entries().iter().all(|e| e.val().is_none_or(|v| v >= n as i64))
}

/// Standard function of `R_n g0` or of `R_n g0 R_n`.
#[derive(Debug, Clone)]
pub enum TestFunction {
    SingleCoset { n: u32, g0: MatF },
    DoubleCoset { n: u32, g0: MatF },
}

impl TestFunction {
    /// Standard function of `R_n` itself.
    pub fn standard(field: FieldDesc, h: usize, n: u32) -> Self {
        TestFunction::SingleCoset { n, g0: Mat::identity(2 * h, &field.one()) }
    }

    pub fn level(&self) -> u32 {
        match self {
            TestFunction::SingleCoset { n, .. } | TestFunction::DoubleCoset { n, .. } => *n,
        }
    }

    pub fn g0(&self) -> &MatF {
        match self {
            TestFunction::SingleCoset { g0, .. } | TestFunction::DoubleCoset { g0, .. } => g0,
        }
    }

    /// The support as disjoint cells of depth `n`.
    pub fn support_cells(&self, budget: u64) -> Result<Vec<Cell>> {
        let g0 = self.g0();
        let id = Mat::identity(g0.rows(), &g0.get(0, 0).field().one());
        match self {
            TestFunction::SingleCoset { n, g0 } => Ok(vec![Cell::new(id, g0.clone(), *n)]),
            TestFunction::DoubleCoset { n, g0 } => Ok(decompose_double_coset(*n, g0, budget)?
                .reps
                .into_iter()
                .map(|x| Cell::new(x, id.clone(), *n))
                .collect()),
        }
    }
}

/// A function on `GL_2h(F)` that can certify its own local constancy.
pub trait Integrand: Sync {
    fn value(&self, x: &MatF) -> Result<BigRational>;
    /// Whether the value is constant on `x + pi^w M_2h(O)` (intersected
    /// with the cell), given that `w` bounds every perturbation.
    fn constant_near(&self, x: &MatF, w: i64) -> Result<bool>;
}

/// A constant function.
#[derive(Debug, Clone)]
pub struct ConstantIntegrand(pub BigRational);

impl Integrand for ConstantIntegrand {
    fn value(&self, _: &MatF) -> Result<BigRational> {
        Ok(self.0.clone())
    }
    fn constant_near(&self, _: &MatF, _: i64) -> Result<bool> {
        Ok(true)
    }
}

/// Limits for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationConfig {
    pub cell_budget: u64,
    pub max_depth: u32,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self { cell_budget: 10_000_000, max_depth: 24 }
    }
}

/// Result of an integration with its cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Integral {
    pub value: BigRational,
    pub cells_used: u64,
    pub max_depth: u32,
}

struct Walk<'a, G> {
    g: &'a G,
    field: FieldDesc,
    h: usize,
    lifts: &'a [MatF],
    cfg: IntegrationConfig,
    used: AtomicU64,
}

impl<G: Integrand> Walk<'_, G> {
    /// Integral over one cell and the depth reached, splitting depth first.
    fn cell(&self, c: &Cell) -> Result<(BigRational, u32)> {
        let rep = c.rep();
        if self.g.constant_near(&rep, c.perturbation_val())? {
            if self.used.fetch_add(1, Ordering::Relaxed) >= self.cfg.cell_budget {
                return Err(MathError::BudgetExceeded { budget: self.cfg.cell_budget });
            }
            return Ok((self.g.value(&rep)? * vol_level(self.field.q(), self.h, c.depth), c.depth));
        }
        if c.depth >= self.cfg.max_depth || self.used.load(Ordering::Relaxed) >= self.cfg.cell_budget {
            // Distinguish a genuine singularity from slow convergence.
            self.g.value(&rep)?;
            return Err(MathError::BudgetExceeded { budget: self.cfg.cell_budget });
        }
        self.cells(&c.children(self.field, self.lifts))
    }

    fn cells(&self, cells: &[Cell]) -> Result<(BigRational, u32)> {
        let mut total = BigRational::zero();
        let mut deepest = 0;
        for r in exec::map_ordered(cells, |c| self.cell(c)) {
            let (v, d) = r?;
            total += v;
            deepest = deepest.max(d);
        }
        Ok((total, deepest))
    }
}

/// `int_{union of cells} G(x) dx`, splitting cells until certified. The
/// value is an exact sum, so it does not depend on the evaluation order.
pub fn integrate_cells<G: Integrand>(g: &G, cells: Vec<Cell>, cfg: IntegrationConfig) -> Result<Integral> {
    let Some(first) = cells.first() else {
        return Ok(Integral { value: BigRational::zero(), cells_used: 0, max_depth: 0 });
    };
    let field = first.left.get(0, 0).field();
    let dim = first.left.rows();
    let lifts = if cells.iter().any(|c| c.depth == 0) {
        gl_residue_lifts(field, dim, cfg.cell_budget)?
    } else {
        Vec::new()
    };
    let walk = Walk { g, field, h: dim / 2, lifts: &lifts, cfg, used: AtomicU64::new(0) };
    let (value, max_depth) = walk.cells(&cells)?;
    Ok(Integral { value, cells_used: walk.used.into_inner(), max_depth })
}

/// `int f(x) G(x) dx` for the standard function `f`.
pub fn adaptive_integrate<G: Integrand>(g: &G, f: &TestFunction, cfg: IntegrationConfig) -> Result<Integral> {
    let cells = f.support_cells(cfg.cell_budget)?;
    let field = f.g0().get(0, 0).field();
    let h = f.g0().rows() / 2;
    let support = vol_level(field.q(), h, f.level()) * BigInt::from(cells.len());
    let raw = integrate_cells(g, cells, cfg)?;
    Ok(Integral { value: raw.value / support, ..raw })
}

/// Average of `G` over every `R_m` coset of the support of `f`; equals
/// `int f G` when `G` is constant on those cosets.
pub fn exhaustive_integrate<G: Integrand>(g: &G, f: &TestFunction, m: u32, budget: u64) -> Result<BigRational> {
    let n = f.level();
    if m < n {
        return Err(MathError::Domain(format!("depth {m} below level {n}")));
    }
    let cells = f.support_cells(budget)?;
    let field = f.g0().get(0, 0).field();
    let h = f.g0().rows() / 2;
    let reps = QuotientReps::new(field, h, n, m, budget)?;
    let per = reps.len();
    let total = per as u128 * cells.len() as u128;
    if total > budget as u128 {
        return Err(MathError::EnumerationTooLarge { needed: total, budget });
    }
    const CHUNK: usize = 4096;
    let chunks = (total as usize).div_ceil(CHUNK);
    let partial = exec::map_range(chunks, |c| -> Result<BigRational> {
        let mut acc = BigRational::zero();
        for idx in c * CHUNK..((c + 1) * CHUNK).min(total as usize) {
            let cell = &cells[idx / per];
            let x = cell.left.mul(&reps.get(idx % per)).mul(&cell.right);
            acc += g.value(&x)?;
        }
        Ok(acc)
    });
    let mut sum = BigRational::zero();
    for p in partial {
        sum += p?;
    }
    Ok(sum / BigInt::from(total))
}

/// Left cosets of `R_n` inside `R_n g0 R_n`.
#[derive(Debug, Clone)]
pub struct DoubleCoset {
    pub reps: Vec<MatF>,
    /// `#(R_n / R_M)` for the auxiliary level `M`.
    pub enumerated: u128,
    /// `#((R_n cap g0 R_n g0^{-1}) / R_M)`.
    pub stabilizer: u128,
}

/// Decomposes `R_n g0 R_n` into left `R_n` cosets by running `r g0` over
/// `R_n / R_M`, where `R_M` lies inside `g0 R_n g0^{-1}`.
pub fn decompose_double_coset(n: u32, g0: &MatF, budget: u64) -> Result<DoubleCoset> {
    let field = g0.get(0, 0).field();
    let h = g0.rows() / 2;
    let ex = snf(g0)?.exponents;
    let spread = (ex.last().unwrap() - ex.first().unwrap()) as u32;
    if spread == 0 {
        return Ok(DoubleCoset { reps: vec![g0.clone()], enumerated: 1, stabilizer: 1 });
    }
    let g0_inv = g0.inverse()?;
    let reps_q = QuotientReps::new(field, h, n, n + spread, budget)?;
    let mut reps: Vec<MatF> = Vec::new();
    let mut inverses: Vec<MatF> = Vec::new();
    let mut stabilizer = 0u128;
    for idx in 0..reps_q.len() {
        let r = reps_q.get(idx);
        if in_level(&g0_inv.mul(&r).mul(g0), n) {
            stabilizer += 1;
        }
        let x = r.mul(g0);
        if !inverses.iter().any(|yi| in_level(&yi.mul(&x), n)) {
            inverses.push(x.inverse()?);
            reps.push(x);
        }
    }
    Ok(DoubleCoset { reps, enumerated: reps_q.len() as u128, stabilizer })
}
