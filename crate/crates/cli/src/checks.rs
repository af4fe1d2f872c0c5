//! The property suite run by `geoconn check`.
//!
//! Every sample draws from its own generator, seeded by the run seed, the
//! check and the sample index, so results do not depend on thread scheduling.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use geoconn::bundle::uniform_grid;
use geoconn::chart::{ScalarField, TangentField};
use geoconn::connection::{fiber_samples, h_lift_section, intersection_sum_dims, partial_connection_test, RhoConnection};
use geoconn::derivative::nabla;
use geoconn::prelie::{anchor_hom_residual, curvature_components, involutivity_defect, star_product};
use geoconn::sampling::{random_polynomial, random_section, seeded_rng, uniform_point, uniform_vector, SampleRng};
use geoconn::{DVector, Result};

use crate::model::Model;

/// Residual bound for the base part of the involutivity defect.
pub const INVOLUTIVITY_BASE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// Whether this check counts towards the exit status.
    pub required: bool,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl CheckRecord {
    fn residual(name: &str, residual: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            name: name.into(),
            required: true,
            passed: residual <= tolerance,
            residual: Some(residual),
            tolerance: Some(tolerance),
            samples,
            detail: Value::Null,
        }
    }

    fn skipped(name: &str, reason: &str) -> Self {
        Self {
            name: name.into(),
            required: false,
            passed: false,
            residual: None,
            tolerance: None,
            samples: 0,
            detail: json!({ "skipped": reason }),
        }
    }
}

fn sample_rng(seed: u64, check: u64, index: usize) -> SampleRng {
    seeded_rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (check << 40) ^ index as u64)
}

/// Runs `f` on every sample index in parallel and returns the largest residual.
fn max_over_samples<F>(model: &Model, check: u64, f: F) -> Result<f64>
where
    F: Fn(&mut SampleRng) -> Result<f64> + Sync,
{
    let residuals: Vec<f64> =
        (0..model.samples).into_par_iter().map(|i| f(&mut sample_rng(model.seed, check, i))).collect::<Result<_>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

fn connection(model: &Model) -> &(dyn RhoConnection + Sync) {
    match (&model.linear, &model.general) {
        (Some(c), _) => c,
        (None, Some(c)) => c,
        (None, None) => unreachable!("models always carry a connection"),
    }
}

fn fiber_point(model: &Model, rng: &mut SampleRng) -> Vec<f64> {
    match &model.general {
        Some(g) => {
            let n = model.n();
            let total = g.total_domain();
            let lower = total.lower()[n..].to_vec();
            let upper = total.upper()[n..].to_vec();
            let fiber = geoconn::chart::CoordDomain::new(lower, upper).expect("sub-box of a valid box");
            uniform_point(&fiber.shrunk(0.1), rng)
        }
        None => uniform_vector(model.ell, 1.0, rng),
    }
}

fn rho_of(model: &Model, f: &ScalarField, s: &[f64], x: &[f64]) -> Result<f64> {
    Ok(DVector::from_vec(f.gradient(x)?).dot(&model.bundle.anchor(x, s)?))
}

pub fn admissibility(model: &Model) -> Result<Vec<CheckRecord>> {
    model
        .curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (t0, t1) = c.curve.t_range();
            let grid = uniform_grid(t0, t1, 256);
            let residual = model.bundle.admissibility_residual(&c.curve, &grid)?;
            Ok(CheckRecord::residual(&format!("admissibility[{i}]"), residual, c.curve.tolerance(), grid.len()))
        })
        .collect()
}

pub fn partial_connection(model: &Model) -> Result<CheckRecord> {
    let conn = connection(model);
    let ys: Vec<Vec<f64>> = match &model.general {
        Some(_) => {
            let mut rng = sample_rng(model.seed, 1, 0);
            (0..8).map(|_| fiber_point(model, &mut rng)).collect()
        }
        None => fiber_samples(model.ell, 4, model.seed),
    };
    let reports: Vec<_> = model.points.par_iter().map(|x| partial_connection_test(conn, x, &ys)).collect::<Result<_>>()?;
    let witness = model
        .points
        .iter()
        .zip(&reports)
        .find_map(|(x, r)| r.witness.as_ref().map(|y| json!({ "x": x, "y": y, "ker_rho_dim": r.ker_rho_dim })));
    let holds = witness.is_none();
    Ok(CheckRecord {
        name: "partial_connection".into(),
        required: model.expect.partial.is_some(),
        passed: model.expect.partial.map_or(holds, |e| e == holds),
        residual: None,
        tolerance: None,
        samples: model.points.len() * ys.len(),
        detail: json!({ "holds": holds, "expected": model.expect.partial, "witness": witness }),
    })
}

pub fn intersection(model: &Model) -> Result<CheckRecord> {
    let conn = connection(model);
    let mut rng = sample_rng(model.seed, 2, 0);
    let ys: Vec<Vec<f64>> = (0..3).map(|_| fiber_point(model, &mut rng)).collect();
    let mut failures = Vec::new();
    for x in &model.points {
        for y in &ys {
            let r = intersection_sum_dims(conn, x, y)?;
            if !r.consistent() {
                failures.push(json!({ "x": x, "y": y, "intersection_dim": r.intersection_dim, "kernel_difference": r.kernel_difference }));
            }
        }
    }
    Ok(CheckRecord {
        name: "intersection_dimension".into(),
        required: true,
        passed: failures.is_empty(),
        residual: None,
        tolerance: None,
        samples: model.points.len() * ys.len(),
        detail: if failures.is_empty() { Value::Null } else { json!({ "failures": failures }) },
    })
}

/// Additivity and `C∞`-homogeneity of the h-lift of sections, and
/// `π_* ∘ s^h = ρ ∘ s`.
pub fn h_lift(model: &Model) -> Result<CheckRecord> {
    let conn = connection(model);
    let base = model.base().clone();
    let inner = base.shrunk(0.1);
    let k = model.k();
    let residual = max_over_samples(model, 3, |rng| {
        let s1 = random_section(&base, rng, k, 2, 1.0);
        let s2 = random_section(&base, rng, k, 2, 1.0);
        let f = random_polynomial(&base, rng, 2, 1.0);
        let x = uniform_point(&inner, rng);
        let y = fiber_point(model, rng);
        let mut e = x.clone();
        e.extend_from_slice(&y);
        let lift = |s: &geoconn::section::SectionNu| h_lift_section(conn, s).and_then(|l| l.value(&e));
        let sum = s1.add(&s2)?;
        let additivity = (lift(&sum)? - lift(&s1)? - lift(&s2)?).amax();
        let homogeneity = (lift(&s1.scaled(&f))? - lift(&s1)? * f.eval(&x)?).amax();
        let projected = lift(&s1)?.rows(0, model.n()).into_owned();
        let anchored = model.bundle.anchor(&x, s1.eval(&x)?.as_slice())?;
        Ok(additivity.max(homogeneity).max((projected - anchored).amax()))
    })?;
    Ok(CheckRecord::residual("h_lift_linearity", residual, model.tolerances.h_lift, model.samples))
}

/// Bilinearity, `∇_{fs}ψ = f∇_sψ` and `∇_s(fψ) = f∇_sψ + ρ(s)(f)ψ`.
pub fn nabla_axioms(model: &Model) -> Result<Option<CheckRecord>> {
    let Some(conn) = &model.linear else { return Ok(None) };
    let base = model.base().clone();
    let inner = base.shrunk(0.1);
    let (k, l) = (model.k(), model.ell);
    let residual = max_over_samples(model, 4, |rng| {
        let (s1, s2) = (random_section(&base, rng, k, 2, 1.0), random_section(&base, rng, k, 2, 1.0));
        let (p1, p2) = (random_section(&base, rng, l, 2, 1.0), random_section(&base, rng, l, 2, 1.0));
        let f = random_polynomial(&base, rng, 2, 1.0);
        let x = uniform_point(&inner, rng);
        let nab = |s: &geoconn::section::SectionNu, p: &geoconn::section::SectionPi| nabla(conn, s, p, &x);
        let (a, b) = (1.5, -0.5);
        let bilinear_s = (nab(&s1.scaled_by(a).add(&s2.scaled_by(b))?, &p1)? - nab(&s1, &p1)? * a - nab(&s2, &p1)? * b).amax();
        let bilinear_p = (nab(&s1, &p1.scaled_by(a).add(&p2.scaled_by(b))?)? - nab(&s1, &p1)? * a - nab(&s1, &p2)? * b).amax();
        let fx = f.eval(&x)?;
        let linear_s = (nab(&s1.scaled(&f), &p1)? - nab(&s1, &p1)? * fx).amax();
        let rho_f = rho_of(model, &f, s1.eval(&x)?.as_slice(), &x)?;
        let leibniz = (nab(&s1, &p1.scaled(&f))? - nab(&s1, &p1)? * fx - p1.eval(&x)? * rho_f).amax();
        Ok(bilinear_s.max(bilinear_p).max(linear_s).max(leibniz))
    })?;
    Ok(Some(CheckRecord::residual("nabla_axioms", residual, model.tolerances.axioms, model.samples)))
}

/// `s₁ * (f s₂) = f (s₁ * s₂) + ρ(s₁)(f) s₂`.
pub fn star_leibniz(model: &Model) -> Result<Option<CheckRecord>> {
    let Some(st) = &model.structure else { return Ok(None) };
    let base = model.base().clone();
    let inner = base.shrunk(0.1);
    let k = model.k();
    let residual = max_over_samples(model, 5, |rng| {
        let (s1, s2) = (random_section(&base, rng, k, 2, 1.0), random_section(&base, rng, k, 2, 1.0));
        let f = random_polynomial(&base, rng, 2, 1.0);
        let x = uniform_point(&inner, rng);
        let lhs = star_product(st, &s1, &s2.scaled(&f), &x)?;
        let rhs = star_product(st, &s1, &s2, &x)? * f.eval(&x)? + s2.eval(&x)? * rho_of(model, &f, s1.eval(&x)?.as_slice(), &x)?;
        Ok((lhs - rhs).amax())
    })?;
    Ok(Some(CheckRecord::residual("star_leibniz", residual, model.tolerances.axioms, model.samples)))
}

pub fn max_anchor_hom(model: &Model) -> Result<Option<f64>> {
    let Some(st) = &model.structure else { return Ok(None) };
    let residuals: Vec<f64> = model.points.par_iter().map(|x| anchor_hom_residual(st, x)).collect::<Result<_>>()?;
    Ok(Some(residuals.into_iter().fold(0.0, f64::max)))
}

pub fn anchor_hom(model: &Model) -> Result<Option<CheckRecord>> {
    let Some(worst) = max_anchor_hom(model)? else { return Ok(None) };
    let tolerance = model.tolerances.anchor_hom;
    let holds = worst <= tolerance;
    Ok(Some(CheckRecord {
        name: "anchor_homomorphism".into(),
        required: model.expect.anchor_hom.is_some(),
        passed: model.expect.anchor_hom.map_or(holds, |e| e == holds),
        residual: Some(worst),
        tolerance: Some(tolerance),
        samples: model.points.len(),
        detail: json!({ "holds": holds, "expected": model.expect.anchor_hom }),
    }))
}

/// `[s₁^h, s₂^h] − (s₁ * s₂)^h` is vertical and equals minus the curvature
/// contraction with the fiber point.
pub fn involutivity(model: &Model) -> Result<Option<CheckRecord>> {
    let (Some(conn), Some(st)) = (&model.linear, &model.structure) else { return Ok(None) };
    let worst = max_anchor_hom(model)?.unwrap_or(0.0);
    if worst > model.tolerances.anchor_hom {
        return Ok(Some(CheckRecord::skipped("involutivity_defect", "anchor-homomorphism condition fails")));
    }
    let base = model.base().clone();
    let inner = base.shrunk(0.1);
    let k = model.k();
    let mut base_worst = 0.0_f64;
    let residual = {
        let results: Vec<(f64, f64)> = (0..model.samples)
            .into_par_iter()
            .map(|i| {
                let rng = &mut sample_rng(model.seed, 6, i);
                let (s1, s2) = (random_section(&base, rng, k, 2, 1.0), random_section(&base, rng, k, 2, 1.0));
                let x = uniform_point(&inner, rng);
                let y = uniform_vector(model.ell, 1.0, rng);
                let defect = involutivity_defect(conn, st, &s1, &s2, &x, &y)?;
                let r = curvature_components(conn, st, &x)?.contract(s1.eval(&x)?.as_slice(), s2.eval(&x)?.as_slice(), &y);
                Ok((defect.base.amax(), (defect.fiber + r).amax()))
            })
            .collect::<Result<_>>()?;
        let mut fiber_worst = 0.0_f64;
        for (b, f) in results {
            base_worst = base_worst.max(b);
            fiber_worst = fiber_worst.max(f);
        }
        fiber_worst
    };
    let mut record = CheckRecord::residual("involutivity_defect", residual, model.tolerances.involutivity, model.samples);
    record.passed &= base_worst <= INVOLUTIVITY_BASE_TOLERANCE;
    record.detail = json!({ "base_residual": base_worst, "base_tolerance": INVOLUTIVITY_BASE_TOLERANCE });
    Ok(Some(record))
}

/// All checks, in a fixed order.
pub fn run_all(model: &Model) -> Result<Vec<CheckRecord>> {
    let mut out = admissibility(model)?;
    out.push(partial_connection(model)?);
    out.push(intersection(model)?);
    out.push(h_lift(model)?);
    out.extend(nabla_axioms(model)?);
    out.extend(anchor_hom(model)?);
    out.extend(star_leibniz(model)?);
    out.extend(involutivity(model)?);
    Ok(out)
}
