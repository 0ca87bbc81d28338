//! Equi-height pairs `(phi, tau)`, the matrix `Delta = phi (tau | conj tau)`,
//! relative resultants and the stable level.
//!
//! `tau` is a `2h x h` matrix over K. Its F-linear shadow `M_tau` is the
//! matrix of `v -> Tr_{K/F}(tau v / (2 g))` (with `g` the trace-zero generator
//! of K) in the basis `e_1, .., e_h, g e_1, .., g e_h` of `K^h`; this pairing
//! makes `O_K` self-dual, so the standard `tau_0 = [I; g I]` has unimodular
//! shadow in both ramification types.

use std::sync::Arc;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::cda::{nrd_block, split_matrix, CdaElement, QuadEmbedding, TowerElem};
use crate::error::{MathError, Result};
use crate::linalg::{descend_poly, invariant_poly_split, snf, Mat, MatF, MatK, PolyF};
use crate::localfield::{disc_norm, q_power, ExtScalar, QuadExt, Scalar};

/// `[I_h; g I_h]`.
pub fn tau_standard(ext: &Arc<QuadExt>, h: usize) -> MatK {
    Mat::from_fn(2 * h, h, |i, k| {
        if i == k {
            ext.one()
        } else if i == k + h {
            ext.gen()
        } else {
            ext.zero()
        }
    })
}

/// The F-matrix `M_tau` described in the module docs.
pub fn tau_f_matrix(tau: &MatK) -> Result<MatF> {
    if tau.rows() != 2 * tau.cols() {
        return Err(MathError::DimensionMismatch("tau must be 2h x h".into()));
    }
    let h = tau.cols();
    let ext = Arc::clone(tau.get(0, 0).ext());
    let two_g_inv = ext.gen().scale(&ext.field().int(2)).inv()?;
    let half = ext.field().ratio(1, 2);
    Ok(Mat::from_fn(2 * h, 2 * h, |i, c| {
        if c < h {
            tau.get(i, c).mul(&two_g_inv).trace()
        } else {
            tau.get(i, c - h).trace().mul(&half)
        }
    }))
}

/// `Height(tau) = log_q Vol(tau(O_K^h)) = -v_F(det M_tau)`.
pub fn height_tau(tau: &MatK) -> Result<i64> {
    let det = tau_f_matrix(tau)?.det();
    det.val().map(|v| -v).ok_or(MathError::SingularMatrix)
}

/// Least `m >= 0` with `tau(O_K^h)` containing `pi^m O_F^{2h}`.
pub fn cond_tau(tau: &MatK) -> Result<i64> {
    Ok(snf(&tau_f_matrix(tau)?)?.max_exponent().max(0))
}

/// `Height(phi) = v_F(Nrd phi)`.
pub fn height_phi(phi: &CdaElement) -> Result<i64> {
    phi.val_pi().ok_or_else(|| MathError::Domain("phi must be invertible".into()))
}

/// `(tau | conj tau)` as a `2h x 2h` matrix over K.
pub fn tau_pair_matrix(tau: &MatK) -> MatK {
    let h = tau.cols();
    Mat::from_fn(2 * h, 2 * h, |i, c| if c < h { tau.get(i, c).clone() } else { tau.get(i, c - h).conj() })
}

/// A validated equi-height pair with `Delta` cached.
#[derive(Debug, Clone)]
pub struct EquiPair {
    emb: QuadEmbedding,
    h: usize,
    tau: MatK,
    phi: CdaElement,
    t: MatK,
    t_inv: MatK,
    delta: Mat<CdaElement>,
    delta_inv: Mat<CdaElement>,
    height: i64,
    cond: i64,
}

impl EquiPair {
    /// Validates `Height(tau) = Height(phi)` and `|NRD(Delta)| = |Disc|^{h^2}`.
    pub fn new(emb: &QuadEmbedding, tau: MatK, phi: CdaElement) -> Result<Self> {
        let h = emb.cda().h();
        if tau.rows() != 2 * h || tau.cols() != h {
            return Err(MathError::DimensionMismatch(format!("tau must be {} x {h}", 2 * h)));
        }
        let ht = height_tau(&tau)?;
        let hp = height_phi(&phi)?;
        if ht != hp {
            return Err(MathError::HeightMismatch { tau: ht, phi: hp });
        }
        let cond = cond_tau(&tau)?;
        let t = tau_pair_matrix(&tau);
        let t_inv = t.inverse()?;
        let delta = emb.embed_mat(&t).map(|x| phi.mul(x));
        let delta_inv = delta.inverse().map_err(|_| MathError::SingularMatrix)?;
        let expected = (h * h) as i64 * emb.ext().disc_val() as i64;
        let got = nrd_block(&delta)?.val().ok_or(MathError::SingularMatrix)?;
        if got != expected {
            return Err(MathError::DeltaNormMismatch { got, expected });
        }
        Ok(Self { emb: emb.clone(), h, tau, phi, t, t_inv, delta, delta_inv, height: ht, cond })
    }

    /// The pair `(1, tau_0)`.
    pub fn standard(emb: &QuadEmbedding) -> Result<Self> {
        let h = emb.cda().h();
        Self::new(emb, tau_standard(emb.ext(), h), emb.cda().one())
    }

    pub fn embedding(&self) -> &QuadEmbedding {
        &self.emb
    }

    pub fn ext(&self) -> &Arc<QuadExt> {
        self.emb.ext()
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn q(&self) -> u32 {
        self.ext().field().q()
    }

    pub fn tau(&self) -> &MatK {
        &self.tau
    }

    pub fn phi(&self) -> &CdaElement {
        &self.phi
    }

    pub fn delta(&self) -> &Mat<CdaElement> {
        &self.delta
    }

    pub fn delta_inv(&self) -> &Mat<CdaElement> {
        &self.delta_inv
    }

    pub fn height(&self) -> i64 {
        self.height
    }

    pub fn cond(&self) -> i64 {
        self.cond
    }

    /// `|Disc_{K/F}|^{-h^2}`.
    pub fn disc_factor(&self) -> BigRational {
        disc_norm(self.ext(), self.h as u32)
    }

    /// Invariant polynomial of `j` relative to this pair: that of
    /// `phi^{-1} j phi` for the embedded K.
    pub fn invariant_poly_j(&self, j: &CdaElement) -> Result<PolyF> {
        let jt = self.phi.inv()?.mul(j).mul(&self.phi);
        crate::cda::invariant_poly_d(&jt, &self.emb)
    }

    /// `X = T^{-1} g T` split into its blocks `x_+` (top left) and `x_-`
    /// (top right); the bottom blocks are their conjugates.
    pub fn tau_blocks(&self, g: &MatF) -> Result<(MatK, MatK)> {
        let h = self.h;
        if g.rows() != 2 * h || !g.is_square() {
            return Err(MathError::DimensionMismatch(format!("g must be {} x {}", 2 * h, 2 * h)));
        }
        let gk = g.map(|x| self.ext().from_base(x.clone()));
        let x = self.t_inv.mul(&gk).mul(&self.t);
        Ok((x.block(0, 0, h, h), x.block(0, h, h, h)))
    }

    /// Invariant polynomial of `g` in `GL_2h(F)` relative to `tau`: the
    /// characteristic polynomial of `(I - u conj(u))^{-1}` with
    /// `u = x_+^{-1} x_-`, or of the split construction when `x_+` is singular.
    pub fn invariant_poly_tau(&self, g: &MatF) -> Result<PolyF> {
        let (xp, xm) = self.tau_blocks(g)?;
        let h = self.h;
        let one = self.ext().one();
        let degenerate = |e: MathError| match e {
            MathError::SingularMatrix => MathError::DegenerateElement("I - u conj(u) is singular".into()),
            other => other,
        };
        let p = match xp.inverse() {
            Ok(xpi) => {
                let u = xpi.mul(&xm);
                let uu = u.mul(&u.map(ExtScalar::conj));
                let m = Mat::identity(h, &one).sub(&uu).inverse().map_err(degenerate)?;
                m.charpoly()
            }
            Err(MathError::SingularMatrix) => {
                let x = Mat::from_blocks(&xp, &xm, &xm.map(ExtScalar::conj), &xp.map(ExtScalar::conj));
                invariant_poly_split(&x)?
            }
            Err(e) => return Err(e),
        };
        descend_poly(&p)
    }

    /// `Res(P_j, P_g)` for a given `P_j`.
    pub fn res_rel(&self, pj: &PolyF, g: &MatF) -> Result<Scalar> {
        if pj.degree() != self.h {
            return Err(MathError::DimensionMismatch(format!("P_j must have degree {}", self.h)));
        }
        Ok(pj.resultant(&self.invariant_poly_tau(g)?))
    }

    /// The `h x h` matrix `[0 I] Delta^{-1} (j g) Delta [I; 0]` over D.
    pub fn res_matrix(&self, j: &CdaElement, g: &MatF) -> Mat<CdaElement> {
        let jg = g.map(|x| j.scale(x));
        let full = self.delta_inv.mul(&jg).mul(&self.delta);
        full.block(self.h, 0, self.h, self.h)
    }

    /// `Nrd([0 I] Delta^{-1} (j g) Delta [I; 0])`.
    pub fn res_nrd(&self, j: &CdaElement, g: &MatF) -> Result<Scalar> {
        nrd_block(&self.res_matrix(j, g))
    }

    /// `|Nrd([0 I] Delta^{-1} (j g) Delta [I; 0])|^{-1}`; equals
    /// `|Res(P_j, P_g)|^{-1}` whenever `v(Nrd j) + v(det g) = 0`.
    pub fn res_rel_norm_oracle(&self, j: &CdaElement, g: &MatF) -> Result<BigRational> {
        inv_norm(&self.res_nrd(j, g)?).ok_or(MathError::InfiniteIntersection)
    }

    /// `|Disc|^{-h^2} |Res(P_j, P_g)|^{-1}`.
    pub fn infinite_level_intersection(&self, pj: &PolyF, g: &MatF) -> Result<BigRational> {
        let res = self.res_rel(pj, g)?;
        let norm = inv_norm(&res).ok_or(MathError::InfiniteIntersection)?;
        Ok(self.disc_factor() * norm)
    }

    /// Linear form `x -> [0 I] Delta^{-1} (j x) Delta [I; 0]`, split.
    pub fn res_linear_form(&self, j: &CdaElement) -> LinearForm {
        LinearForm::new(&self.delta_inv, Some(j), &self.delta, self.h)
    }
}

/// `|Disc_1|^{-h^2} |Nrd([0 I] Delta_1^{-1} Delta_2 [I; 0])|^{-1}`.
pub fn infinite_level_intersection_two(p1: &EquiPair, p2: &EquiPair) -> Result<BigRational> {
    if p1.h != p2.h {
        return Err(MathError::DimensionMismatch("pairs of different h".into()));
    }
    let h = p1.h;
    let m = p1.delta_inv.mul(&p2.delta).block(h, 0, h, h);
    let norm = inv_norm(&nrd_block(&m)?).ok_or(MathError::InfiniteIntersection)?;
    Ok(p1.disc_factor() * norm)
}

/// `|x|^{-1} = q^{v(x)}`, `None` at zero.
pub fn inv_norm(x: &Scalar) -> Option<BigRational> {
    x.val().map(|v| q_power(x.field().q(), v))
}

/// Exponent `k` with `x = q^k`, if `x` is a power of `q`.
pub fn q_exponent(x: &BigRational, q: u32) -> Option<i64> {
    if !x.is_positive_q_power(q) {
        return None;
    }
    let (mut num, mut den) = (x.numer().clone(), x.denom().clone());
    let qb = num_bigint::BigInt::from(q);
    let mut k = 0i64;
    while num > num_bigint::BigInt::one() {
        num /= &qb;
        k += 1;
    }
    while den > num_bigint::BigInt::one() {
        den /= &qb;
        k -= 1;
    }
    Some(k)
}

trait QPower {
    fn is_positive_q_power(&self, q: u32) -> bool;
}

impl QPower for BigRational {
    fn is_positive_q_power(&self, q: u32) -> bool {
        let is_pow = |n: &num_bigint::BigInt| {
            let qb = num_bigint::BigInt::from(q);
            let mut n = n.clone();
            if n.is_zero() {
                return false;
            }
            while (&n % &qb).is_zero() {
                n /= &qb;
            }
            n.is_one()
        };
        is_pow(self.numer()) && is_pow(self.denom())
    }
}

/// `N = ceil(log_q(length) / 2h) + 2 max(cond_1, cond_2) + 1`.
pub fn stable_level(length: &BigRational, q: u32, h: usize, cond1: i64, cond2: i64) -> Result<i64> {
    let k = q_exponent(length, q)
        .ok_or_else(|| MathError::Domain(format!("{length} is not a power of {q}")))?;
    Ok(Integer::div_ceil(&k, &(2 * h as i64)) + 2 * cond1.max(cond2) + 1)
}

/// An F-linear map `M_2h(F) -> M_{hn}(F_n)`, stored by its values on the
/// elementary matrices, with the valuation slack of those values.
#[derive(Debug, Clone)]
pub struct LinearForm {
    dim: usize,
    terms: Vec<Mat<TowerElem>>,
    slack: i64,
}

impl LinearForm {
    /// `x -> [0 I] left (j x) right [I; 0]`, each D-entry split.
    pub fn new(left: &Mat<CdaElement>, j: Option<&CdaElement>, right: &Mat<CdaElement>, h: usize) -> Self {
        let dim = 2 * h;
        let jj = j.cloned().unwrap_or_else(|| left.get(0, 0).algebra().one());
        let mut terms = Vec::with_capacity(dim * dim);
        for k in 0..dim {
            for l in 0..dim {
                // (left [h.., k]) j (right [l, ..h]) as an h x h matrix over D.
                let m = Mat::from_fn(h, h, |a, b| left.get(h + a, k).mul(&jj).mul(right.get(l, b)));
                terms.push(split_matrix(&m));
            }
        }
        let slack = terms.iter().filter_map(Mat::min_val).min().map_or(0, |v| -v);
        Self { dim, terms, slack }
    }

    /// Minus the least valuation among the coefficients; a perturbation of
    /// `x` by `pi^w M_2h(O)` moves the value by `pi^{w - slack}` at most.
    pub fn slack(&self) -> i64 {
        self.slack
    }

    pub fn eval(&self, x: &MatF) -> Mat<TowerElem> {
        let mut acc: Option<Mat<TowerElem>> = None;
        for k in 0..self.dim {
            for l in 0..self.dim {
                let c = x.get(k, l);
                if c.is_exact_zero() {
                    continue;
                }
                let term = self.terms[k * self.dim + l].map(|e| e.scale(c));
                acc = Some(match acc {
                    Some(a) => a.add(&term),
                    None => term,
                });
            }
        }
        acc.unwrap_or_else(|| self.terms[0].map(|e| e.scale(&e.tower().field().zero())))
    }

    /// `v_F` of the determinant of the form at `x`, `None` when singular.
    pub fn det_val(&self, x: &MatF) -> Option<i64> {
        self.eval(x).det().to_base().ok().and_then(|d| d.val())
    }

    /// Whether `v(det)` is constant on `x + pi^w M_2h(O)`: the largest Smith
    /// exponent at `x` must be below `w - slack`.
    pub fn stable_on_ball(&self, x: &MatF, w: i64) -> Result<bool> {
        match snf(&self.eval(x)) {
            Ok(s) => Ok(s.max_exponent() < w - self.slack),
            Err(MathError::SingularMatrix) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

/// Cross-check helper used by tests and the CLI: both sides of the
/// resultant/reduced-norm identity.
pub fn res_paths(pair: &EquiPair, j: &CdaElement, g: &MatF) -> Result<(BigRational, BigRational)> {
    let pj = pair.invariant_poly_j(j)?;
    let res = pair.res_rel(&pj, g)?;
    let lhs = inv_norm(&res).ok_or(MathError::InfiniteIntersection)?;
    Ok((lhs, pair.res_rel_norm_oracle(j, g)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cda::Cda;
    use crate::linalg::Poly;
    use crate::localfield::FieldDesc;
    use proptest::prelude::*;

    fn setup(p: u32, h: usize, ram: bool) -> QuadEmbedding {
        let f = FieldDesc::new(p, 40).unwrap();
        let cda = Cda::new(f, h).unwrap();
        let k = if ram { QuadExt::ramified(f, 1).unwrap() } else { QuadExt::unramified(f) };
        QuadEmbedding::new(&k, &cda).unwrap()
    }

    fn fmat(f: FieldDesc, rows: &[&[i64]]) -> MatF {
        Mat::from_rows(rows.iter().map(|r| r.iter().map(|&x| f.int(x)).collect()).collect())
    }

    #[test]
    fn height_and_conductor_examples() {
        for ram in [false, true] {
            for h in 1..=2 {
                let emb = setup(3, h, ram);
                let f = emb.cda().field();
                let t0 = tau_standard(emb.ext(), h);
                assert_eq!(height_tau(&t0).unwrap(), 0);
                assert_eq!(cond_tau(&t0).unwrap(), 0);
                let pit = t0.map(|x| x.scale(&f.uniformizer()));
                assert_eq!(height_tau(&pit).unwrap(), -2 * h as i64);
                assert_eq!(cond_tau(&pit).unwrap(), 1);
                let g = Mat::from_fn(2 * h, 2 * h, |i, j| f.int(if i == j { 1 } else if j == i + 1 { 2 } else { 0 }));
                let gt = g.map(|x| emb.ext().from_base(x.clone())).mul(&t0);
                assert_eq!(height_tau(&gt).unwrap(), 0);
            }
        }
        // Shadow with Smith exponents (-1, 2).
        let emb = setup(3, 1, false);
        let f = emb.cda().field();
        let t0 = tau_standard(emb.ext(), 1);
        let g = Mat::diag(&[f.pi_pow(-1), f.pi_pow(2)]);
        let t = g.map(|x| emb.ext().from_base(x.clone())).mul(&t0);
        assert_eq!(cond_tau(&t).unwrap(), 2);
        assert_eq!(height_tau(&t).unwrap(), -1);
    }

    #[test]
    fn pair_examples() {
        let emb = setup(3, 1, false);
        let f = emb.cda().field();
        let p = EquiPair::standard(&emb).unwrap();
        assert_eq!(p.height(), 0);
        // Pi has height 1; tau scaled so that v(det M_tau) = -1.
        let t0 = tau_standard(emb.ext(), 1);
        let g = Mat::diag(&[f.pi_pow(-1), f.one()]);
        let t = g.map(|x| emb.ext().from_base(x.clone())).mul(&t0);
        let p = EquiPair::new(&emb, t, emb.cda().pi_elem()).unwrap();
        assert_eq!(p.height(), 1);
        let bad = EquiPair::new(&emb, t0, emb.cda().from_base(f.uniformizer()));
        assert_eq!(bad.unwrap_err(), MathError::HeightMismatch { tau: 0, phi: 2 });
    }

    #[test]
    fn res_rel_examples() {
        let emb = setup(3, 1, false);
        let f = emb.cda().field();
        let p = EquiPair::standard(&emb).unwrap();
        let alpha = f.ratio(7, 2);
        let pj = Poly::linear(&alpha);
        // g in the embedded K^x: P_g = X - 1.
        let k = emb.ext().ints(2, 1);
        let t = tau_pair_matrix(&tau_standard(emb.ext(), 1));
        let gk = t.mul(&Mat::diag(&[k.clone(), k.conj()])).mul(&t.inverse().unwrap());
        let gf = gk.try_map(ExtScalar::to_base).unwrap();
        assert!(p.res_rel(&pj, &gf).unwrap().agrees_with(&alpha.sub(&f.one())));
        // Quaternion closed form on both sides.
        let cda = emb.cda();
        let (a, b) = (cda.tower().ints(&[1, 1]), cda.tower().ints(&[3, 0]));
        let j = cda.elem(vec![a.clone(), b.clone()]);
        let alpha = f.one().sub(&f.uniformizer().mul(&b.mul(&a.inv().unwrap()).norm())).inv().unwrap();
        let pj = p.invariant_poly_j(&j).unwrap();
        assert!(pj.agrees_with(&Poly::linear(&alpha)));
        // In tau-coordinates g has blocks (x_+, x_-); the split closed form
        // gives P_g = X - N(x_+) / (N(x_+) - N(x_-)).
        let g = fmat(f, &[&[2, 1], &[1, 5]]);
        let (xp, xm) = p.tau_blocks(&g).unwrap();
        let (np, nm) = (xp.get(0, 0).norm(), xm.get(0, 0).norm());
        let beta = np.div(&np.sub(&nm)).unwrap();
        assert!(p.res_rel(&pj, &g).unwrap().agrees_with(&alpha.sub(&beta)));
    }

    #[test]
    fn tau_invariant_matches_split_form() {
        let emb = setup(5, 1, true);
        let f = emb.cda().field();
        let p = EquiPair::standard(&emb).unwrap();
        let g = fmat(f, &[&[2, 1], &[7, 3]]);
        let (xp, xm) = p.tau_blocks(&g).unwrap();
        let x = Mat::from_blocks(&xp, &xm, &xm.map(ExtScalar::conj), &xp.map(ExtScalar::conj));
        let split = descend_poly(&invariant_poly_split(&x).unwrap()).unwrap();
        assert!(p.invariant_poly_tau(&g).unwrap().agrees_with(&split));
    }

    #[test]
    fn infinite_level_examples() {
        let emb = setup(3, 1, false);
        let f = emb.cda().field();
        let p = EquiPair::standard(&emb).unwrap();
        let id = Mat::identity(2, &f.one());
        assert_eq!(
            p.res_rel_norm_oracle(&emb.cda().one(), &id).unwrap_err(),
            MathError::InfiniteIntersection
        );
        assert_eq!(infinite_level_intersection_two(&p, &p).unwrap_err(), MathError::InfiniteIntersection);
        // Ramified: prefactor q on top of |1/4 - 1|^{-1} = q.
        let emb_r = setup(3, 1, true);
        let pr = EquiPair::standard(&emb_r).unwrap();
        let pj = Poly::linear(&f.ratio(1, 4));
        let v = pr.infinite_level_intersection(&pj, &id).unwrap();
        assert_eq!(v, BigRational::from_integer(9.into()));
    }

    #[test]
    fn stable_level_examples() {
        let one = BigRational::one();
        let q2 = q_power(3, 2);
        assert_eq!(stable_level(&one, 3, 1, 0, 0).unwrap(), 1);
        assert_eq!(stable_level(&q2, 3, 1, 0, 0).unwrap(), 2);
        assert_eq!(stable_level(&q2, 3, 1, 1, 2).unwrap(), 6);
        assert!(stable_level(&BigRational::from_integer(2.into()), 3, 1, 0, 0).is_err());
    }

    fn arb_unimodular() -> impl Strategy<Value = [i64; 4]> {
        prop::array::uniform4(-20i64..20).prop_filter("unit det", |m| (m[0] * m[3] - m[1] * m[2]) % 3 != 0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn delta_norm_identity(gm in prop::array::uniform4(-20i64..20), e in 0i64..3, ram in any::<bool>(), u in prop::array::uniform2(-9i64..9)) {
            prop_assume!(gm[0] * gm[3] - gm[1] * gm[2] != 0);
            let emb = setup(3, 1, ram);
            let f = emb.cda().field();
            let g = fmat(f, &[&[gm[0], gm[1]], &[gm[2], gm[3]]]);
            let t = g.map(|x| emb.ext().from_base(x.clone())).mul(&tau_standard(emb.ext(), 1));
            let ht = height_tau(&t).unwrap();
            let cda = emb.cda();
            let unit = cda.elem(vec![cda.tower().ints(&[1 + 3 * u[0], u[1]]), cda.tower().ints(&[e, 1])]);
            let phi = cda.pi_elem_pow(ht).mul(&unit);
            let pair = EquiPair::new(&emb, t, phi).unwrap();
            prop_assert_eq!(nrd_block(pair.delta()).unwrap().val(), Some(ram as i64));
        }

        #[test]
        fn resultant_matches_reduced_norm(gm in arb_unimodular(), a in prop::array::uniform2(-9i64..9), b in prop::array::uniform2(-9i64..9), ram in any::<bool>()) {
            let emb = setup(3, 1, ram);
            let f = emb.cda().field();
            let cda = emb.cda();
            let at = cda.tower().ints(&[1 + 3 * a[0], a[1]]);
            let bt = cda.tower().ints(&b);
            let j = cda.elem(vec![at, bt]);
            let pair = EquiPair::standard(&emb).unwrap();
            let g = fmat(f, &[&[gm[0], gm[1]], &[gm[2], gm[3]]]);
            match res_paths(&pair, &j, &g) {
                Ok((lhs, rhs)) => prop_assert_eq!(lhs, rhs),
                Err(MathError::InfiniteIntersection) => {}
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }

        #[test]
        fn res_is_invariant_under_k_basis_change(gm in arb_unimodular(), c in prop::array::uniform2(-9i64..9)) {
            let emb = setup(3, 1, false);
            let f = emb.cda().field();
            let pair = EquiPair::standard(&emb).unwrap();
            let k = emb.ext().ints(1 + 3 * c[0], c[1]);
            let t = pair.tau().map(|x| x.mul(&k));
            let moved = EquiPair::new(&emb, t, emb.cda().one()).unwrap();
            let g = fmat(f, &[&[gm[0], gm[1]], &[gm[2], gm[3]]]);
            let pj = Poly::linear(&f.ratio(4, 7));
            prop_assert!(pair.res_rel(&pj, &g).unwrap().agrees_with(&moved.res_rel(&pj, &g).unwrap()));
        }

        #[test]
        fn linear_form_matches_oracle(gm in prop::array::uniform4(-20i64..20), b in prop::array::uniform2(-9i64..9)) {
            prop_assume!(gm[0] * gm[3] - gm[1] * gm[2] != 0);
            let emb = setup(3, 1, false);
            let f = emb.cda().field();
            let cda = emb.cda();
            let j = cda.elem(vec![cda.tower().one(), cda.tower().ints(&b)]);
            let pair = EquiPair::standard(&emb).unwrap();
            let g = fmat(f, &[&[gm[0], gm[1]], &[gm[2], gm[3]]]);
            let lf = pair.res_linear_form(&j);
            prop_assert_eq!(lf.det_val(&g), pair.res_nrd(&j, &g).unwrap().val());
        }

        #[test]
        fn stable_level_is_monotone(k in 0i64..10, c1 in 0i64..4, c2 in 0i64..4, h in 1usize..4) {
            let n = stable_level(&q_power(5, k), 5, h, c1, c2).unwrap();
            prop_assert!(stable_level(&q_power(5, k + 1), 5, h, c1, c2).unwrap() >= n);
            prop_assert!(stable_level(&q_power(5, k), 5, h, c1 + 1, c2).unwrap() >= n);
            prop_assert!(stable_level(&q_power(5, k), 5, h, c1, c2 + 1).unwrap() >= n);
        }
    }
}
