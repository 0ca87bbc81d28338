//! Intersection numbers of CM cycles: one pair against a translate, two pairs
//! for different quadratic fields, and Hecke translates.
//!
//! All evaluators return an [`IntersectionReport`] whose `value` is exactly
//! `constant_c * disc_factor * integral`.

use num_rational::BigRational;
use num_traits::One;

use crate::cda::{ensure_irreducible, CdaElement};
use crate::cycles::{inv_norm, EquiPair, LinearForm};
use crate::error::{MathError, Result};
use crate::integrate::{
    adaptive_integrate, c_closed, c_pair, deg_level_k, vol_level, Integral, IntegrationConfig, Integrand,
    TestFunction,
};
use crate::linalg::{MatF, PolyF};

/// Knobs shared by the evaluators.
#[derive(Debug, Clone, Copy)]
pub struct FormulaOptions {
    /// Check that `P_j` is irreducible of degree `h` before integrating.
    pub strict: bool,
    pub integration: IntegrationConfig,
}

impl Default for FormulaOptions {
    fn default() -> Self {
        Self { strict: true, integration: IntegrationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntersectionReport {
    pub value: BigRational,
    pub constant_c: BigRational,
    pub disc_factor: BigRational,
    pub integral: BigRational,
    pub cells_used: u64,
    pub n: u32,
}

impl IntersectionReport {
    fn new(constant_c: BigRational, disc_factor: BigRational, integral: Integral, n: u32) -> Self {
        Self {
            value: &constant_c * &disc_factor * &integral.value,
            constant_c,
            disc_factor,
            integral: integral.value,
            cells_used: integral.cells_used,
            n,
        }
    }
}

/// `g -> |Res(P_j, P_g)|^{-1}`, certified through the reduced-norm linear
/// form: on a coset of `R_m` the valuations of the resultant and of that
/// reduced norm differ by a constant.
pub struct ResultantIntegrand<'a> {
    pair: &'a EquiPair,
    pj: PolyF,
    form: LinearForm,
}

impl<'a> ResultantIntegrand<'a> {
    pub fn new(pair: &'a EquiPair, j: &CdaElement) -> Result<Self> {
        Ok(Self { pj: pair.invariant_poly_j(j)?, form: pair.res_linear_form(j), pair })
    }

    pub fn invariant_poly(&self) -> &PolyF {
        &self.pj
    }
}

impl Integrand for ResultantIntegrand<'_> {
    fn value(&self, x: &MatF) -> Result<BigRational> {
        inv_norm(&self.pair.res_rel(&self.pj, x)?).ok_or(MathError::InfiniteIntersection)
    }

    fn constant_near(&self, x: &MatF, w: i64) -> Result<bool> {
        self.form.stable_on_ball(x, w)
    }
}

/// `g -> |Nrd([0 I] Delta_1^{-1} g Delta_2 [I; 0])|^{-1}`.
pub struct TwoFieldIntegrand {
    form: LinearForm,
}

impl TwoFieldIntegrand {
    pub fn new(p1: &EquiPair, p2: &EquiPair) -> Result<Self> {
        if p1.h() != p2.h() || p1.q() != p2.q() {
            return Err(MathError::DimensionMismatch("pairs over different F or of different h".into()));
        }
        Ok(Self { form: LinearForm::new(p1.delta_inv(), None, p2.delta(), p1.h()) })
    }
}

impl Integrand for TwoFieldIntegrand {
    fn value(&self, x: &MatF) -> Result<BigRational> {
        let v = self.form.det_val(x).ok_or(MathError::SingularOrbit)?;
        Ok(crate::localfield::q_power(x.get(0, 0).field().q(), v))
    }

    fn constant_near(&self, x: &MatF, w: i64) -> Result<bool> {
        self.form.stable_on_ball(x, w)
    }
}

/// `C * |Disc|^{-h^2} * int f G` with `C = c(K)` at level 0 and 1 above.
pub fn evaluate<G: Integrand>(
    g: &G,
    pair: &EquiPair,
    f: &TestFunction,
    cfg: IntegrationConfig,
) -> Result<IntersectionReport> {
    let n = f.level();
    let c = if n == 0 { c_closed(pair.ext().kind(), pair.q(), pair.h()) } else { BigRational::one() };
    let integral = adaptive_integrate(g, f, cfg)?;
    Ok(IntersectionReport::new(c, pair.disc_factor(), integral, n))
}

fn check_strict(pair: &EquiPair, pj: &PolyF) -> Result<()> {
    if pj.degree() != pair.h() {
        return Err(MathError::NotIrreducible);
    }
    ensure_irreducible(pj)
}

/// `Int(j, f)` for the pair and a test function on `GL_2h(F)`.
pub fn intersection_number(
    j: &CdaElement,
    pair: &EquiPair,
    f: &TestFunction,
    opts: FormulaOptions,
) -> Result<IntersectionReport> {
    let g = ResultantIntegrand::new(pair, j)?;
    if opts.strict {
        check_strict(pair, g.invariant_poly())?;
    }
    evaluate(&g, pair, f, opts.integration)
}

/// `Int(j, f)` for `f` the standard function of `R_n g0 R_n`.
pub fn hecke_intersection(
    j: &CdaElement,
    pair: &EquiPair,
    n: u32,
    g0: &MatF,
    opts: FormulaOptions,
) -> Result<IntersectionReport> {
    let f = TestFunction::DoubleCoset { n, g0: g0.clone() };
    intersection_number(j, pair, &f, opts)
}

/// Intersection of the cycles of two pairs at level `n`:
/// `c(K_1, K_2) deg_{K_1}(n) deg_{K_2}(n) |Disc_1|^{-h^2} int_{R_n} |F|^{-1}`.
/// `constant_c` in the report collects everything except the disc factor.
pub fn intersection_two_fields(
    p1: &EquiPair,
    p2: &EquiPair,
    n: u32,
    opts: FormulaOptions,
) -> Result<IntersectionReport> {
    let g = TwoFieldIntegrand::new(p1, p2)?;
    let (q, h) = (p1.q(), p1.h());
    let (k1, k2) = (p1.ext().kind(), p2.ext().kind());
    let field = p1.ext().field();
    let f = TestFunction::standard(field, h, n);
    let avg = adaptive_integrate(&g, &f, opts.integration)?;
    // The average over R_n times Vol(R_n) is the raw integral.
    let c = c_pair(k1, k2, q, h)
        * BigRational::from_integer(deg_level_k(k1, q, h, n) * deg_level_k(k2, q, h, n))
        * vol_level(q, h, n);
    Ok(IntersectionReport::new(c, p1.disc_factor(), avg, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cda::{Cda, QuadEmbedding};
    use num_bigint::BigInt;
    use crate::integrate::{exhaustive_integrate, ConstantIntegrand};
    use crate::linalg::Mat;
    use crate::localfield::{ExtKind, FieldDesc, QuadExt};
    use proptest::prelude::*;

    fn setup(p: u32, ram: bool) -> QuadEmbedding {
        let f = FieldDesc::new(p, 40).unwrap();
        let cda = Cda::new(f, 1).unwrap();
        let k = if ram { QuadExt::ramified(f, 1).unwrap() } else { QuadExt::unramified(f) };
        QuadEmbedding::new(&k, &cda).unwrap()
    }

    fn quaternion(emb: &QuadEmbedding, a: &[i64], b: &[i64]) -> CdaElement {
        let cda = emb.cda();
        cda.elem(vec![cda.tower().ints(a), cda.tower().ints(b)])
    }

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn fmat(f: FieldDesc, m: [i64; 4]) -> MatF {
        Mat::from_rows(vec![vec![f.int(m[0]), f.int(m[1])], vec![f.int(m[2]), f.int(m[3])]])
    }

    fn report_identity(rep: &IntersectionReport) -> bool {
        rep.value == &rep.constant_c * &rep.disc_factor * &rep.integral
    }

    #[test]
    fn level_zero_constant() {
        for ram in [false, true] {
            let emb = setup(3, ram);
            let pair = EquiPair::standard(&emb).unwrap();
            let f = emb.cda().field();
            let g = ConstantIntegrand(r(2, 1));
            let cfg = IntegrationConfig::default();
            let r0 = evaluate(&g, &pair, &TestFunction::standard(f, 1, 0), cfg).unwrap();
            let r1 = evaluate(&g, &pair, &TestFunction::standard(f, 1, 1), cfg).unwrap();
            let kind = if ram { ExtKind::Ramified } else { ExtKind::Unramified };
            assert_eq!(r0.value, &r1.value * c_closed(kind, 3, 1));
            assert_eq!(r1.value, pair.disc_factor() * r(2, 1));
            assert!(report_identity(&r0) && report_identity(&r1));
        }
    }

    #[test]
    fn quaternion_matches_exhaustive() {
        let emb = setup(3, false);
        let f = emb.cda().field();
        let pair = EquiPair::standard(&emb).unwrap();
        let j = quaternion(&emb, &[1, 1], &[1, 0]);
        let tf = TestFunction::standard(f, 1, 0);
        let rep = intersection_number(&j, &pair, &tf, FormulaOptions::default()).unwrap();
        let g = ResultantIntegrand::new(&pair, &j).unwrap();
        let oracle = exhaustive_integrate(&g, &tf, 1, 1 << 20).unwrap();
        assert_eq!(rep.integral, oracle);
        assert!(report_identity(&rep));
    }

    #[test]
    fn singular_element_is_reported() {
        let emb = setup(3, false);
        let pair = EquiPair::standard(&emb).unwrap();
        let f = emb.cda().field();
        // An element of K has P_j = X - 1, which degree one lets through
        // strict mode; the integrand is unbounded near the torus.
        let j = quaternion(&emb, &[1, 1], &[0, 0]);
        let tf = TestFunction::standard(f, 1, 1);
        let opts = FormulaOptions { integration: IntegrationConfig { cell_budget: 20_000, max_depth: 24 }, ..Default::default() };
        let err = intersection_number(&j, &pair, &tf, opts).unwrap_err();
        assert!(matches!(err, MathError::InfiniteIntersection | MathError::BudgetExceeded { .. }), "{err:?}");
    }

    #[test]
    fn strict_mode_rejects_reducible() {
        let f = FieldDesc::new(3, 40).unwrap();
        let cda = Cda::new(f, 2).unwrap();
        let emb = QuadEmbedding::new(&QuadExt::unramified(f), &cda).unwrap();
        let pair = EquiPair::standard(&emb).unwrap();
        let j = emb.embed(&emb.ext().ints(2, 1));
        let tf = TestFunction::standard(f, 2, 1);
        // P_j = (X - 1)^2 exactly; a repeated factor is indistinguishable
        // from a nearby irreducible polynomial at finite precision.
        let err = intersection_number(&j, &pair, &tf, FormulaOptions::default()).unwrap_err();
        assert!(matches!(err, MathError::NotIrreducible | MathError::IrreducibilityUndecided(_)), "{err:?}");
    }

    #[test]
    fn hecke_examples() {
        let emb = setup(3, false);
        let f = emb.cda().field();
        let pair = EquiPair::standard(&emb).unwrap();
        let j = quaternion(&emb, &[1, 2], &[1, 1]);
        let opts = FormulaOptions::default();
        let id = Mat::identity(2, &f.one());
        let a = hecke_intersection(&j, &pair, 1, &id, opts).unwrap();
        let b = intersection_number(&j, &pair, &TestFunction::standard(f, 1, 1), opts).unwrap();
        assert_eq!(a, b);
        // diag(pi, 1): average of the single-coset values.
        let g0 = Mat::diag(&[f.uniformizer(), f.one()]);
        let h = hecke_intersection(&j, &pair, 0, &g0, opts).unwrap();
        let cosets = crate::integrate::decompose_double_coset(0, &g0, 1 << 20).unwrap().reps;
        assert_eq!(cosets.len(), 4);
        let mut sum = BigRational::from_integer(0.into());
        for x in &cosets {
            let tf = TestFunction::SingleCoset { n: 0, g0: x.clone() };
            sum += intersection_number(&j, &pair, &tf, opts).unwrap().value;
        }
        assert_eq!(h.value, sum / BigInt::from(cosets.len()));
    }

    #[test]
    fn two_fields_reduces_to_one_field() {
        for ram in [false, true] {
            let emb = setup(3, ram);
            let f = emb.cda().field();
            let p1 = EquiPair::standard(&emb).unwrap();
            let j = quaternion(&emb, &[1, 1], &[1, 0]);
            let p2 = EquiPair::new(&emb, p1.tau().clone(), j.clone()).unwrap();
            for n in 0..2 {
                let two = intersection_two_fields(&p1, &p2, n, FormulaOptions::default()).unwrap();
                let one =
                    intersection_number(&j, &p1, &TestFunction::standard(f, 1, n), FormulaOptions::default()).unwrap();
                assert_eq!(two.value, one.value, "ram={ram} n={n}");
                assert!(report_identity(&two));
            }
        }
    }

    #[test]
    fn two_fields_mixed_is_stable_in_precision() {
        let run = |cap| {
            let f = FieldDesc::new(3, cap).unwrap();
            let cda = Cda::new(f, 1).unwrap();
            let e1 = QuadEmbedding::new(&QuadExt::unramified(f), &cda).unwrap();
            let e2 = QuadEmbedding::new(&QuadExt::ramified(f, 1).unwrap(), &cda).unwrap();
            let p1 = EquiPair::standard(&e1).unwrap();
            let p2 = EquiPair::standard(&e2).unwrap();
            intersection_two_fields(&p1, &p2, 1, FormulaOptions::default()).unwrap()
        };
        assert_eq!(run(40), run(80));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// The certificate relies on `v(Res) - v(Nrd)` depending only on the
        /// coset data that is constant on a cell.
        #[test]
        fn valuation_offset_is_locally_constant(
            a in prop::array::uniform2(-9i64..9), b in prop::array::uniform2(-9i64..9),
            m in prop::array::uniform4(-9i64..9), e in 0i64..3, ram in any::<bool>(),
        ) {
            prop_assume!((m[0] * m[3] - m[1] * m[2]) % 3 != 0);
            let emb = setup(3, ram);
            let f = emb.cda().field();
            let pair = EquiPair::standard(&emb).unwrap();
            let j = quaternion(&emb, &[1 + 3 * a[0], a[1]], &b).mul(&emb.cda().pi_elem_pow(e));
            let g = fmat(f, m).mul(&Mat::diag(&[f.pi_pow(e), f.one()]));
            let pj = pair.invariant_poly_j(&j).unwrap();
            let (Some(vr), Some(vn)) = (pair.res_rel(&pj, &g).unwrap().val(), pair.res_nrd(&j, &g).unwrap().val()) else {
                return Ok(());
            };
            let vj = j.nrd().unwrap().val().unwrap();
            prop_assert_eq!(vn - vr, vj + e);
        }

        #[test]
        fn certified_cells_are_constant(a in prop::array::uniform2(-9i64..9), b in prop::array::uniform2(-9i64..9), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let emb = setup(3, false);
            let f = emb.cda().field();
            let pair = EquiPair::standard(&emb).unwrap();
            let j = quaternion(&emb, &[1 + 3 * a[0], a[1]], &[1 + 3 * b[0], b[1]]);
            let g = ResultantIntegrand::new(&pair, &j).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // A random depth-2 cell inside GL_2(O).
            let lifts = crate::integrate::gl_residue_lifts(f, 2, 1000).unwrap();
            let left = lifts[rng.random_range(0..lifts.len())].clone();
            let x = left.mul(&Mat::from_fn(2, 2, |i, k| f.int(rng.random_range(0..3) * 3 + (i == k) as i64)));
            let id = Mat::identity(2, &f.one());
            let cell = crate::integrate::Cell::new(x.clone(), id, 2);
            if g.constant_near(&cell.rep(), cell.perturbation_val()).unwrap() {
                let v0 = g.value(&x).unwrap();
                for _ in 0..20 {
                    let k = Mat::from_fn(2, 2, |i, l| f.int(rng.random_range(-40..40) * 9 + (i == l) as i64));
                    prop_assert_eq!(g.value(&x.mul(&k)).unwrap(), v0.clone());
                }
            }
        }
    }
}
