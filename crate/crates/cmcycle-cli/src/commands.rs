use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmcycle::cda::{ensure_irreducible, Cda, CdaElement};
use cmcycle::cycles::EquiPair;
use cmcycle::formula::{
    hecke_intersection, intersection_number, intersection_two_fields, FormulaOptions, IntersectionReport,
    ResultantIntegrand,
};
use cmcycle::integrate::{
    adaptive_integrate, c_closed, c_pair, decompose_double_coset, exhaustive_integrate, IntegrationConfig,
    TestFunction,
};
use cmcycle::localfield::{ExtKind, FieldDesc};
use cmcycle::orbital::{derivative_at_zero, match_element, orbital_h1, transfer_factor, verify_afl_h1};
use cmcycle::{exec, sample, MathError, Result};

use crate::config::{cda_element, Built, ExperimentConfig, ExtSpec, KindSpec};
use crate::report::Record;

/// Settings shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct Ctx {
    pub precision: u32,
    pub cell_budget: u64,
    pub strict: bool,
    pub seed: u64,
}

impl Ctx {
    fn opts(&self) -> FormulaOptions {
        FormulaOptions {
            strict: self.strict,
            integration: IntegrationConfig { cell_budget: self.cell_budget, ..IntegrationConfig::default() },
        }
    }
}

/// Runs `f` at the base precision, doubling up to four times it while the
/// failure is a precision shortfall.
fn with_precision<T>(base: u32, mut f: impl FnMut(u32) -> Result<T>) -> Result<T> {
    let mut prec = base;
    loop {
        match f(prec) {
            Err(MathError::PrecisionExhausted(_) | MathError::IrreducibilityUndecided(_)) if prec < 4 * base => {
                prec *= 2;
            }
            r => return r,
        }
    }
}

fn kind_name(k: ExtKind) -> &'static str {
    match k {
        ExtKind::Unramified => "unramified",
        ExtKind::Ramified => "ramified",
    }
}

fn report_record(cmd: &str, rep: &IntersectionReport, q: u32) -> Record {
    Record::new(cmd)
        .input("n", rep.n)
        .value(&rep.value, q)
        .cells(rep.cells_used)
        .detail("constant_c", &rep.constant_c)
        .detail("disc_factor", &rep.disc_factor)
        .detail("integral", &rep.integral)
}

fn describe(j: &CdaElement) -> String {
    j.coeffs()
        .iter()
        .map(|t| t.coeffs().iter().map(|c| c.lift().to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(" | ")
}

pub fn constants(cfg: &ExperimentConfig, _: &Ctx) -> Result<Vec<Record>> {
    let q = FieldDesc::new(cfg.p, 16)?.q();
    let h = cfg.h;
    let mut out = Vec::new();
    for kind in [ExtKind::Unramified, ExtKind::Ramified] {
        let closed = c_closed(kind, q, h);
        let counted = c_pair(kind, kind, q, h);
        out.push(
            Record::new("constants")
                .input("K", kind_name(kind))
                .input("q", q)
                .input("h", h)
                .value(&closed, q)
                .detail("c_pair", &counted)
                .detail("agree", closed == counted),
        );
    }
    let mixed = c_pair(ExtKind::Unramified, ExtKind::Ramified, q, h);
    out.push(
        Record::new("constants")
            .input("K", "unramified x ramified")
            .input("q", q)
            .input("h", h)
            .value(&mixed, q),
    );
    Ok(out)
}

fn standard_setup(cfg: &ExperimentConfig, spec: &ExtSpec, prec: u32) -> Result<(Built, EquiPair)> {
    let b = cfg.build(prec)?;
    let emb = ExperimentConfig::embedding(spec, &b)?;
    let pair = ExperimentConfig::pair(&cfg.pair, &emb)?;
    Ok((b, pair))
}

pub fn invariant(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<Vec<Record>> {
    with_precision(ctx.precision, |prec| {
        let (b, pair) = standard_setup(cfg, &cfg.field, prec)?;
        let pj = cfg.pj(&b, &pair)?;
        let q = b.field.q();
        let mut out: Vec<Record> = pj
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let r = Record::new("invariant").input("coefficient", i).detail("padic", c);
                match c.val() {
                    Some(v) => r.norm_exponent(q, -v),
                    None => r,
                }
            })
            .collect();
        let status = match ensure_irreducible(&pj) {
            Ok(()) => "irreducible".to_owned(),
            Err(MathError::NotIrreducible) => "reducible".to_owned(),
            Err(MathError::IrreducibilityUndecided(why)) => format!("undecided ({why})"),
            Err(e) => return Err(e),
        };
        out.push(Record::new("invariant").input("coefficient", "all").detail("status", status));
        Ok(out)
    })
}

pub fn intersect(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<Vec<Record>> {
    with_precision(ctx.precision, |prec| {
        let (b, pair) = standard_setup(cfg, &cfg.field, prec)?;
        let j = cfg.j(&b)?;
        let f = cfg.test_function(&b)?;
        let rep = intersection_number(&j, &pair, &f, ctx.opts())?;
        Ok(vec![report_record("intersect", &rep, b.field.q()).input("K", kind_name(pair.ext().kind()))])
    })
}

pub fn two_fields(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<Vec<Record>> {
    with_precision(ctx.precision, |prec| {
        let b = cfg.build(prec)?;
        let e1 = ExperimentConfig::embedding(&cfg.field, &b)?;
        let e2 = ExperimentConfig::embedding(&cfg.field2, &b)?;
        let p1 = ExperimentConfig::pair(&cfg.pair, &e1)?;
        let p2 = ExperimentConfig::pair(&cfg.pair2, &e2)?;
        let rep = intersection_two_fields(&p1, &p2, cfg.test_function.n, ctx.opts())?;
        Ok(vec![report_record("two-fields", &rep, b.field.q())
            .input("K1", kind_name(p1.ext().kind()))
            .input("K2", kind_name(p2.ext().kind()))])
    })
}

pub fn hecke(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<Vec<Record>> {
    with_precision(ctx.precision, |prec| {
        let (b, pair) = standard_setup(cfg, &cfg.field, prec)?;
        let j = cfg.j(&b)?;
        let f = cfg.test_function(&b)?;
        let (n, g0) = (f.level(), f.g0().clone());
        let cosets = decompose_double_coset(n, &g0, ctx.cell_budget)?;
        let rep = hecke_intersection(&j, &pair, n, &g0, ctx.opts())?;
        Ok(vec![report_record("hecke", &rep, b.field.q()).detail("cosets", cosets.reps.len())])
    })
}

pub fn orbital(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<Vec<Record>> {
    with_precision(ctx.precision, |prec| {
        let b = cfg.build(prec)?;
        let g = match cfg.orbital_g(&b)? {
            Some(g) => g,
            None => {
                let spec = ExtSpec { kind: KindSpec::Unramified, unit: 1 };
                let emb = ExperimentConfig::embedding(&spec, &b)?;
                let pair = ExperimentConfig::pair(&cfg.pair, &emb)?;
                match_element(&cfg.pj(&b, &pair)?)?
            }
        };
        let q = b.field.q();
        let s = orbital_h1(&g)?;
        let mut out: Vec<Record> =
            s.terms().map(|(k, c)| Record::new("orbital").input("t_power", k).value(c, q)).collect();
        out.push(
            Record::new("orbital")
                .input("t_power", "derivative")
                .value(&derivative_at_zero(&s), q)
                .detail("transfer_factor", transfer_factor(&g)?)
                .detail("value_at_zero", s.value_at_zero()),
        );
        Ok(out)
    })
}

/// The quaternions of the configured family for prime `p`, in order.
fn family(cfg: &ExperimentConfig, ctx: &Ctx, cda: &Cda, p: u32) -> Result<Vec<(String, CdaElement)>> {
    let mut out = Vec::new();
    for (i, c) in cfg.family.case.iter().enumerate().filter(|(_, c)| c.p == p) {
        out.push((format!("case{i}"), cda_element(&c.coeffs, cda)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ u64::from(p));
    for i in 0..cfg.family.count {
        let vb = cfg.family.vb[rng.random_range(0..cfg.family.vb.len())];
        out.push((format!("random{i}"), sample::quaternion(cda, &mut rng, vb)));
    }
    Ok(out)
}

fn family_primes(cfg: &ExperimentConfig) -> Vec<u32> {
    let mut ps = cfg.family.p.clone();
    ps.extend(cfg.family.case.iter().map(|c| c.p));
    ps.sort_unstable();
    ps.dedup();
    ps
}

pub fn verify_afl(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    let mut ratios = Vec::new();
    for p in family_primes(cfg) {
        let rows = with_precision(ctx.precision, |prec| {
            let cda = Cda::new(FieldDesc::new(p, prec)?, 1)?;
            let cases = family(cfg, ctx, &cda, p)?;
            exec::map_ordered(&cases, |(name, j)| Ok((name.clone(), describe(j), verify_afl_h1(j, ctx.opts())?)))
                .into_iter()
                .collect::<Result<Vec<_>>>()
        })?;
        for (name, desc, rep) in rows {
            ratios.push(rep.ratio.clone());
            out.push(
                Record::new("verify-afl")
                    .input("p", p)
                    .input("case", name)
                    .input("j", desc)
                    .value(&rep.ratio, p)
                    .cells(rep.cells_used)
                    .detail("lhs", &rep.lhs)
                    .detail("rhs", &rep.rhs)
                    .detail("r", rep.r),
            );
        }
    }
    let common = ratios.first().filter(|r0| ratios.iter().all(|r| r == *r0)).cloned();
    let mut summary = Record::new("verify-afl").input("case", "global").detail("cases", ratios.len());
    summary = match common {
        Some(r) => summary.value(&r, cfg.p).detail("sign", if r == BigRational::one() { "+1" } else { "other" }),
        None => summary.detail("sign", "inconsistent"),
    };
    out.push(summary);
    Ok(out)
}

pub fn oracle_compare(cfg: &ExperimentConfig, ctx: &Ctx) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for p in family_primes(cfg) {
        let rows = with_precision(ctx.precision, |prec| {
            let field = FieldDesc::new(p, prec)?;
            let cda = Cda::new(field, 1)?;
            let emb = ExperimentConfig::embedding(&cfg.field, &Built { field, cda: cda.clone() })?;
            let pair = EquiPair::standard(&emb)?;
            let n = cfg.test_function.n;
            let m = cfg.oracle.depth.max(n);
            let tf = TestFunction::standard(field, 1, n);
            family(cfg, ctx, &cda, p)?
                .into_iter()
                .map(|(name, j)| {
                    let g = ResultantIntegrand::new(&pair, &j)?;
                    let a = adaptive_integrate(&g, &tf, ctx.opts().integration)?;
                    let e = exhaustive_integrate(&g, &tf, m, ctx.cell_budget)?;
                    Ok((name, describe(&j), m, a, e))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (name, desc, m, a, e) in rows {
            let status = if a.value == e { "MATCH" } else { "MISMATCH" };
            out.push(
                Record::new("oracle-compare")
                    .input("p", p)
                    .input("case", name)
                    .input("j", desc)
                    .input("depth", m)
                    .value(&a.value, p)
                    .cells(a.cells_used)
                    .detail("exhaustive", &e)
                    .detail("status", status),
            );
        }
    }
    if out.is_empty() {
        return Err(MathError::Domain("the family is empty".into()));
    }
    Ok(out)
}
