//! End-to-end checks across modules: integration against enumeration,
//! consistency between the evaluators, and invariances of the inputs.

use cmcycle::cda::{Cda, QuadEmbedding};
use cmcycle::cycles::{res_paths, EquiPair};
use cmcycle::formula::{
    hecke_intersection, intersection_number, intersection_two_fields, FormulaOptions, ResultantIntegrand,
};
use cmcycle::integrate::{adaptive_integrate, exhaustive_integrate, IntegrationConfig, TestFunction};
use cmcycle::linalg::Mat;
use cmcycle::localfield::{FieldDesc, QuadExt};
use cmcycle::orbital::verify_afl_h1;
use cmcycle::{sample, MathError};
use num_rational::BigRational;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn embedding(p: u32, ramified: bool) -> QuadEmbedding {
    let f = FieldDesc::new(p, 40).unwrap();
    let cda = Cda::new(f, 1).unwrap();
    let k = if ramified { QuadExt::ramified(f, 1).unwrap() } else { QuadExt::unramified(f) };
    QuadEmbedding::new(&k, &cda).unwrap()
}

#[test]
fn adaptive_equals_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for ramified in [false, true] {
        let emb = embedding(3, ramified);
        let f = emb.cda().field();
        let pair = EquiPair::standard(&emb).unwrap();
        for _ in 0..2 {
            let j = sample::quaternion(emb.cda(), &mut rng, 0);
            let g = ResultantIntegrand::new(&pair, &j).unwrap();
            for n in 0..2 {
                let tf = TestFunction::standard(f, 1, n);
                let a = adaptive_integrate(&g, &tf, IntegrationConfig::default()).unwrap();
                let e = exhaustive_integrate(&g, &tf, n + 1, 1 << 22).unwrap();
                assert_eq!(a.value, e, "ramified={ramified} n={n}");
            }
        }
    }
}

#[test]
fn resultant_oracle_with_twisted_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for ramified in [false, true] {
        let emb = embedding(3, ramified);
        let f = emb.cda().field();
        for _ in 0..10 {
            let pair = sample::equi_pair(&emb, &mut rng).unwrap();
            let j = sample::quaternion(emb.cda(), &mut rng, 0);
            let g = sample::gl_o(f, 2, &mut rng, 2);
            match res_paths(&pair, &j, &g) {
                Ok((lhs, rhs)) => assert_eq!(lhs, rhs),
                Err(MathError::InfiniteIntersection) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn two_fields_specializes_to_one_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let emb = embedding(3, false);
    let f = emb.cda().field();
    let p1 = EquiPair::standard(&emb).unwrap();
    let j = sample::quaternion(emb.cda(), &mut rng, 0);
    let p2 = EquiPair::new(&emb, p1.tau().clone(), j.clone()).unwrap();
    let opts = FormulaOptions::default();
    for n in 0..2 {
        let two = intersection_two_fields(&p1, &p2, n, opts).unwrap();
        let one = intersection_number(&j, &p1, &TestFunction::standard(f, 1, n), opts).unwrap();
        assert_eq!(two.value, one.value);
    }
}

#[test]
fn hecke_value_depends_on_the_double_coset_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let emb = embedding(3, false);
    let f = emb.cda().field();
    let pair = EquiPair::standard(&emb).unwrap();
    let j = sample::quaternion(emb.cda(), &mut rng, 0);
    let g0 = Mat::diag(&[f.uniformizer(), f.one()]);
    let opts = FormulaOptions::default();
    let base = hecke_intersection(&j, &pair, 0, &g0, opts).unwrap();
    for _ in 0..2 {
        let r1 = sample::gl_o(f, 2, &mut rng, 1);
        let r2 = sample::gl_o(f, 2, &mut rng, 1);
        let moved = hecke_intersection(&j, &pair, 0, &r1.mul(&g0).mul(&r2), opts).unwrap();
        assert_eq!(moved.value, base.value);
    }
}

#[test]
fn central_scaling_with_translated_test_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let emb = embedding(3, false);
    let f = emb.cda().field();
    let pair = EquiPair::standard(&emb).unwrap();
    let j = sample::quaternion(emb.cda(), &mut rng, 0);
    let opts = FormulaOptions::default();
    let base = intersection_number(&j, &pair, &TestFunction::standard(f, 1, 1), opts).unwrap();
    let zj = j.scale(&f.uniformizer());
    let shifted = TestFunction::SingleCoset { n: 1, g0: Mat::diag(&[f.pi_pow(-1), f.pi_pow(-1)]) };
    assert_eq!(intersection_number(&zj, &pair, &shifted, opts).unwrap().value, base.value);
}

#[test]
fn linear_afl_on_a_small_family() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for p in [3u32, 5] {
        let emb = embedding(p, false);
        for _ in 0..2 {
            let j = sample::quaternion(emb.cda(), &mut rng, 0);
            let rep = verify_afl_h1(&j, FormulaOptions::default()).unwrap();
            assert_eq!(rep.ratio, BigRational::one(), "p={p}");
        }
    }
}
