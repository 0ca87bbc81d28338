//! Seeded random inputs for property tests, the acceptance suite and the
//! CLI sweeps.

use rand::Rng;

use crate::cda::{Cda, CdaElement, QuadEmbedding, TowerElem};
use crate::cycles::{height_tau, tau_standard, EquiPair};
use crate::error::Result;
use crate::linalg::{Mat, MatF};
use crate::localfield::FieldDesc;

/// Tower element with coordinates in `[0, p^digits)`; a unit when `unit`.
pub fn tower_element<R: Rng>(cda: &Cda, rng: &mut R, digits: u32, unit: bool) -> TowerElem {
    let p = cda.field().p() as i64;
    let bound = p.pow(digits);
    loop {
        let c: Vec<i64> = (0..cda.degree()).map(|_| rng.random_range(0..bound)).collect();
        let t = cda.tower().ints(&c);
        if !unit || t.val() == Some(0) {
            return t;
        }
    }
}

/// `a + b Pi` in the quaternion algebra with `a` a unit and `v(b) = vb`
/// (before reduction of `b` the unit part is random). For `vb >= 0` the
/// invariant polynomial is `X - alpha` with `v(alpha - 1) = 2 vb + 1`.
pub fn quaternion<R: Rng>(cda: &Cda, rng: &mut R, vb: i64) -> CdaElement {
    assert_eq!(cda.h(), 1, "quaternions need h = 1");
    let a = tower_element(cda, rng, 2, true);
    let b = tower_element(cda, rng, 2, true).scale(&cda.field().pi_pow(vb));
    cda.elem(vec![a, b])
}

/// A unit of the maximal order: unit constant coordinate, the rest random.
pub fn cda_unit<R: Rng>(cda: &Cda, rng: &mut R) -> CdaElement {
    let mut coeffs = vec![tower_element(cda, rng, 2, true)];
    coeffs.extend((1..cda.degree()).map(|_| tower_element(cda, rng, 2, false)));
    cda.elem(coeffs)
}

/// A matrix in `GL_dim(O_F)` with entries in `[0, p^digits)`.
pub fn gl_o<R: Rng>(field: FieldDesc, dim: usize, rng: &mut R, digits: u32) -> MatF {
    let bound = (field.p() as i64).pow(digits);
    loop {
        let m = Mat::from_fn(dim, dim, |_, _| field.int(rng.random_range(0..bound)));
        if m.det().val() == Some(0) {
            return m;
        }
    }
}

/// An invertible matrix with small integer entries, possibly of nonzero
/// determinant valuation.
pub fn gl_f<R: Rng>(field: FieldDesc, dim: usize, rng: &mut R) -> MatF {
    loop {
        let m = Mat::from_fn(dim, dim, |_, _| field.int(rng.random_range(-12..=12)));
        if m.det().val().is_some() {
            return m;
        }
    }
}

/// `(phi, g tau_0)` with `phi = Pi^{Height} u` for a random unit `u`.
pub fn equi_pair<R: Rng>(emb: &QuadEmbedding, rng: &mut R) -> Result<EquiPair> {
    let cda = emb.cda();
    let h = cda.h();
    let g = gl_f(cda.field(), 2 * h, rng);
    let tau = g.map(|x| emb.ext().from_base(x.clone())).mul(&tau_standard(emb.ext(), h));
    let phi = cda.pi_elem_pow(height_tau(&tau)?).mul(&cda_unit(cda, rng));
    EquiPair::new(emb, tau, phi)
}
