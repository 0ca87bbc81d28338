//! Experiment configuration files and their translation into library objects
//! at a chosen working precision.

use std::sync::Arc;

use num_rational::BigRational;
use serde::Deserialize;

use cmcycle::cda::{Cda, CdaElement, QuadEmbedding};
use cmcycle::cycles::{height_tau, tau_standard, EquiPair};
use cmcycle::integrate::TestFunction;
use cmcycle::linalg::{Mat, MatF, Poly, PolyF};
use cmcycle::localfield::{FieldDesc, QuadExt, Scalar};
use cmcycle::{MathError, Result};

/// An exact number written as a TOML integer or as a string `"a"` / `"a/b"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Int(i64),
    Text(String),
}

impl Num {
    pub fn rational(&self) -> Result<BigRational> {
        match self {
            Num::Int(n) => Ok(BigRational::from_integer((*n).into())),
            Num::Text(s) => s
                .trim()
                .parse::<BigRational>()
                .map_err(|_| MathError::Domain(format!("`{s}` is not an integer or fraction"))),
        }
    }

    fn scalar(&self, f: FieldDesc) -> Result<Scalar> {
        Ok(f.rational(&self.rational()?))
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum KindSpec {
    #[default]
    Unramified,
    Ramified,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtSpec {
    #[serde(default)]
    pub kind: KindSpec,
    /// `K = F(sqrt(pi u))` in the ramified case.
    #[serde(default = "one")]
    pub unit: i64,
}

fn one() -> i64 {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    /// `tau = g tau_0`; the standard `tau_0` when absent.
    pub tau_g: Option<Vec<Vec<Num>>>,
    /// Coordinates of `phi` in the cyclic presentation; `Pi^{Height(tau)}`
    /// when absent.
    pub phi: Option<Vec<Vec<Num>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JSpec {
    /// `j = sum_i a_i Pi^i`, each `a_i` by its tower coordinates.
    pub coeffs: Option<Vec<Vec<Num>>>,
    /// A monic invariant polynomial, low degree first.
    pub poly: Option<Vec<Num>>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CosetKind {
    #[default]
    Single,
    Double,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    #[serde(default)]
    pub kind: CosetKind,
    #[serde(default)]
    pub n: u32,
    pub g0: Option<Vec<Vec<Num>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitalSpec {
    /// The matrix whose orbital integral is taken; matched from `P_j` when
    /// absent.
    pub g: Option<Vec<Vec<Num>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub p: u32,
    pub coeffs: Vec<Vec<Num>>,
}

/// A sweep over quaternions: explicit cases plus `count` random ones per
/// prime, drawn from the seed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default = "default_primes")]
    pub p: Vec<u32>,
    #[serde(default)]
    pub count: usize,
    /// Valuations of the `Pi` coefficient to draw from.
    #[serde(default = "default_vb")]
    pub vb: Vec<i64>,
    #[serde(default)]
    pub case: Vec<CaseSpec>,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self { p: default_primes(), count: 0, vb: default_vb(), case: Vec::new() }
    }
}

fn default_primes() -> Vec<u32> {
    vec![3]
}

fn default_vb() -> Vec<i64> {
    vec![0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Enumeration depth `m`.
    #[serde(default = "default_depth")]
    pub depth: u32,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { depth: default_depth() }
    }
}

fn default_depth() -> u32 {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: u32,
    #[serde(default = "one_usize")]
    pub h: usize,
    pub precision: Option<u32>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub field: ExtSpec,
    #[serde(default)]
    pub field2: ExtSpec,
    #[serde(default)]
    pub pair: PairSpec,
    #[serde(default)]
    pub pair2: PairSpec,
    #[serde(default)]
    pub j: JSpec,
    #[serde(default)]
    pub test_function: TestFunctionSpec,
    #[serde(default)]
    pub orbital: OrbitalSpec,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default)]
    pub oracle: OracleSpec,
}

fn one_usize() -> usize {
    1
}

/// Library objects built from a config at one precision.
pub struct Built {
    pub field: FieldDesc,
    pub cda: Cda,
}

impl ExperimentConfig {
    pub fn build(&self, precision: u32) -> Result<Built> {
        let field = FieldDesc::new(self.p, precision)?;
        Ok(Built { field, cda: Cda::new(field, self.h)? })
    }

    pub fn extension(spec: &ExtSpec, field: FieldDesc) -> Result<Arc<QuadExt>> {
        match spec.kind {
            KindSpec::Unramified => Ok(QuadExt::unramified(field)),
            KindSpec::Ramified => QuadExt::ramified(field, spec.unit),
        }
    }

    pub fn embedding(spec: &ExtSpec, b: &Built) -> Result<QuadEmbedding> {
        QuadEmbedding::new(&Self::extension(spec, b.field)?, &b.cda)
    }

    pub fn pair(spec: &PairSpec, emb: &QuadEmbedding) -> Result<EquiPair> {
        let cda = emb.cda();
        let h = cda.h();
        let field = cda.field();
        let t0 = tau_standard(emb.ext(), h);
        let tau = match &spec.tau_g {
            Some(rows) => matrix(rows, field, 2 * h)?.map(|x| emb.ext().from_base(x.clone())).mul(&t0),
            None => t0,
        };
        let phi = match &spec.phi {
            Some(c) => cda_element(c, cda)?,
            None => cda.pi_elem_pow(height_tau(&tau)?),
        };
        EquiPair::new(emb, tau, phi)
    }

    pub fn j(&self, b: &Built) -> Result<CdaElement> {
        let c = self.j.coeffs.as_ref().ok_or_else(|| MathError::Domain("[j] coeffs are required".into()))?;
        cda_element(c, &b.cda)
    }

    /// `P_j`, either given directly or computed relative to the pair.
    pub fn pj(&self, b: &Built, pair: &EquiPair) -> Result<PolyF> {
        match &self.j.poly {
            Some(coeffs) => {
                let c = coeffs.iter().map(|x| x.scalar(b.field)).collect::<Result<Vec<_>>>()?;
                if c.len() != self.h + 1 || !c[self.h].agrees_with(&b.field.one()) {
                    return Err(MathError::Domain(format!("P_j must be monic of degree {}", self.h)));
                }
                Ok(Poly::new(c))
            }
            None => pair.invariant_poly_j(&self.j(b)?),
        }
    }

    pub fn test_function(&self, b: &Built) -> Result<TestFunction> {
        let t = &self.test_function;
        let g0 = match &t.g0 {
            Some(rows) => matrix(rows, b.field, 2 * self.h)?,
            None => Mat::identity(2 * self.h, &b.field.one()),
        };
        Ok(match t.kind {
            CosetKind::Single => TestFunction::SingleCoset { n: t.n, g0 },
            CosetKind::Double => TestFunction::DoubleCoset { n: t.n, g0 },
        })
    }

    pub fn orbital_g(&self, b: &Built) -> Result<Option<MatF>> {
        self.orbital.g.as_ref().map(|rows| matrix(rows, b.field, 2)).transpose()
    }
}

pub fn matrix(rows: &[Vec<Num>], f: FieldDesc, dim: usize) -> Result<MatF> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(MathError::DimensionMismatch(format!("expected a {dim} x {dim} matrix")));
    }
    let rows = rows
        .iter()
        .map(|r| r.iter().map(|x| x.scalar(f)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Mat::from_rows(rows))
}

pub fn cda_element(coeffs: &[Vec<Num>], cda: &Cda) -> Result<CdaElement> {
    let n = cda.degree();
    if coeffs.len() != n || coeffs.iter().any(|c| c.len() != n) {
        return Err(MathError::DimensionMismatch(format!("expected {n} coefficients of {n} coordinates each")));
    }
    let f = cda.field();
    let parts = coeffs
        .iter()
        .map(|c| Ok(cda.tower().elem(c.iter().map(|x| x.scalar(f)).collect::<Result<Vec<_>>>()?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(cda.elem(parts))
}
