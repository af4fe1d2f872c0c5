//! Seeded sampling helpers shared by property checks and the CLI.
//!
//! All randomness flows through [`ChaCha8Rng`] so that a seed reproduces a
//! run bit for bit on every platform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chart::{CoordDomain, Dual, ScalarField, VectorField};

pub type SampleRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_point(domain: &CoordDomain, rng: &mut SampleRng) -> Vec<f64> {
    domain.lower().iter().zip(domain.upper()).map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect()
}

pub fn uniform_vector(len: usize, scale: f64, rng: &mut SampleRng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..=scale)).collect()
}

/// Exponent vectors of all monomials in `dim` variables of total degree ≤ `degree`.
fn monomials(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<u32>| {
                let used: u32 = prefix.iter().sum();
                (0..=degree - used).map(move |e| {
                    let mut p = prefix.clone();
                    p.push(e);
                    p
                })
            })
            .collect();
    }
    out
}

/// Polynomial with coefficients drawn uniformly from `[-scale, scale]`,
/// normalised by the box size so values stay moderate. Dual-number mode.
pub fn random_polynomial(domain: &CoordDomain, rng: &mut SampleRng, degree: u32, scale: f64) -> ScalarField {
    let center = domain.center();
    let half: Vec<f64> = domain.lower().iter().zip(domain.upper()).map(|(lo, hi)| 0.5 * (hi - lo)).collect();
    let terms: Vec<(f64, Vec<u32>)> = monomials(domain.dim(), degree).into_iter().map(|m| (rng.gen_range(-scale..=scale), m)).collect();
    ScalarField::from_dual_fn(domain.clone(), move |x| {
        let mut acc = Dual::constant(0.0);
        for (c, exps) in &terms {
            let mut term = Dual::constant(*c);
            for (i, &e) in exps.iter().enumerate() {
                if e > 0 {
                    term *= ((x[i] - center[i]) / half[i]).powi(e as i32);
                }
            }
            acc += term;
        }
        acc
    })
}

pub fn random_section(domain: &CoordDomain, rng: &mut SampleRng, len: usize, degree: u32, scale: f64) -> VectorField {
    VectorField::new(domain.clone(), (0..len).map(|_| random_polynomial(domain, rng, degree, scale)).collect())
        .expect("components share the domain")
}
