//! Turning a [`RunConfig`] into library objects.

use geoconn::bundle::{AdmissibleCurve, AnchorBundle, ANALYTIC_ADMISSIBILITY_TOLERANCE};
use geoconn::chart::{CoordDomain, MatrixField, ScalarField, VectorField};
use geoconn::connection::{GeneralConnection, LinearConnection};
use geoconn::expr::{parse, to_field, to_total_field, VarSpec};
use geoconn::gallery;
use geoconn::prelie::PreLieStructure;
use geoconn::section::{SectionNu, SectionPi};

use crate::config::{AnchorSpec, BoxSpec, ConnectionSpec, Expect, RunConfig, StructureSpec};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SAMPLES: usize = 20;
pub const DEFAULT_GRID: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ResolvedTolerances {
    pub admissibility: f64,
    pub anchor_hom: f64,
    pub h_lift: f64,
    pub axioms: f64,
    pub involutivity: f64,
}

#[derive(Clone, Debug)]
pub struct CurveModel {
    pub curve: AdmissibleCurve,
    pub steps: Option<usize>,
    pub y0: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub gallery: Option<String>,
    pub bundle: AnchorBundle,
    pub ell: usize,
    pub linear: Option<LinearConnection>,
    pub general: Option<GeneralConnection>,
    pub structure: Option<PreLieStructure>,
    pub curves: Vec<CurveModel>,
    pub sections: Vec<(SectionNu, SectionPi)>,
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
    pub samples: usize,
    pub tolerances: ResolvedTolerances,
    pub expect: Expect,
}

impl Model {
    pub fn n(&self) -> usize {
        self.bundle.n()
    }

    pub fn k(&self) -> usize {
        self.bundle.k()
    }

    pub fn base(&self) -> &CoordDomain {
        self.bundle.base()
    }
}

fn config_err(path: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {e}"))
}

fn domain(spec: &BoxSpec, path: &str) -> Result<CoordDomain, CliError> {
    CoordDomain::new(spec.lower.clone(), spec.upper.clone()).map_err(|e| config_err(path, e))
}

fn field(src: &str, vars: VarSpec, domain: &CoordDomain, path: &str) -> Result<ScalarField, CliError> {
    let expr = parse(src, vars).map_err(|e| config_err(path, e))?;
    to_field(&expr, domain).map_err(|e| config_err(path, e))
}

fn expect_len<T>(items: &[T], len: usize, path: &str) -> Result<(), CliError> {
    if items.len() != len {
        return Err(config_err(path, format!("expected {len} entries, found {}", items.len())));
    }
    Ok(())
}

impl Model {
    pub fn from_config(config: &RunConfig) -> Result<Self, CliError> {
        let (gallery_case, bundle) = match &config.anchor {
            AnchorSpec::Gallery(name) => {
                if config.domain.is_some() {
                    return Err(config_err("box", "a gallery anchor brings its own box"));
                }
                let case = gallery::by_name(name).map_err(|e| config_err("anchor", e))?;
                let bundle = case.bundle.clone();
                (Some(case), bundle)
            }
            AnchorSpec::Matrix(rows) => {
                let base = domain(config.domain.as_ref().ok_or_else(|| config_err("box", "required with an expression anchor"))?, "box")?;
                let n = base.dim();
                expect_len(rows, n, "anchor")?;
                let k = rows.first().map_or(0, Vec::len);
                let mut entries = Vec::with_capacity(n * k);
                for (i, row) in rows.iter().enumerate() {
                    expect_len(row, k, &format!("anchor[{i}]"))?;
                    for (j, src) in row.iter().enumerate() {
                        entries.push(field(src, VarSpec::base(n), &base, &format!("anchor[{i}][{j}]"))?);
                    }
                }
                let gamma = MatrixField::new(base, n, k, entries).map_err(|e| config_err("anchor", e))?;
                (None, AnchorBundle::new(gamma).map_err(|e| config_err("anchor", e))?)
            }
        };
        let base = bundle.base().clone();
        let (n, k) = (bundle.n(), bundle.k());

        let mut linear = None;
        let mut general = None;
        match &config.connection {
            None => {
                let ell = config.dims.map_or(1, |d| d.l);
                linear = Some(LinearConnection::zero(bundle.clone(), ell));
            }
            Some(ConnectionSpec::Gallery(word)) => {
                let case = gallery_case
                    .as_ref()
                    .filter(|_| word == "gallery")
                    .ok_or_else(|| config_err("connection", "the string form must be \"gallery\" and needs a gallery anchor"))?;
                linear = Some(case.connection.clone().ok_or_else(|| config_err("connection", "this gallery case has no connection"))?);
            }
            Some(ConnectionSpec::Linear(table)) => {
                let ell = table.len();
                let mut coeffs: Vec<Vec<ScalarField>> = vec![Vec::with_capacity(ell * ell); k];
                for (a, per_alpha) in table.iter().enumerate() {
                    expect_len(per_alpha, k, &format!("connection[{a}]"))?;
                    for (alpha, row) in per_alpha.iter().enumerate() {
                        expect_len(row, ell, &format!("connection[{a}][{alpha}]"))?;
                        for (b, src) in row.iter().enumerate() {
                            coeffs[alpha].push(field(src, VarSpec::base(n), &base, &format!("connection[{a}][{alpha}][{b}]"))?);
                        }
                    }
                }
                let matrices = coeffs
                    .into_iter()
                    .map(|entries| MatrixField::new(base.clone(), ell, ell, entries))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| config_err("connection", e))?;
                linear = Some(LinearConnection::new(bundle.clone(), ell, matrices).map_err(|e| config_err("connection", e))?);
            }
            Some(ConnectionSpec::General { general: table, fiber_box }) => {
                let fiber = domain(fiber_box, "connection.fiber_box")?;
                let ell = fiber.dim();
                expect_len(table, ell, "connection.general")?;
                let total = base.product(&fiber);
                let mut entries = Vec::with_capacity(ell * k);
                for (a, row) in table.iter().enumerate() {
                    expect_len(row, k, &format!("connection.general[{a}]"))?;
                    for (alpha, src) in row.iter().enumerate() {
                        let path = format!("connection.general[{a}][{alpha}]");
                        let expr = parse(src, VarSpec::total(n, ell)).map_err(|e| config_err(&path, e))?;
                        entries.push(to_total_field(&expr, &total, n).map_err(|e| config_err(&path, e))?);
                    }
                }
                let coeffs = MatrixField::new(total, ell, k, entries).map_err(|e| config_err("connection", e))?;
                general = Some(GeneralConnection::new(bundle.clone(), coeffs).map_err(|e| config_err("connection", e))?);
            }
        }
        let ell = linear
            .as_ref()
            .map(geoconn::connection::RhoConnection::fiber_dim)
            .or_else(|| general.as_ref().map(geoconn::connection::RhoConnection::fiber_dim));
        let ell = ell.expect("one connection form is always set");

        if let Some(d) = config.dims {
            if (d.n, d.k, d.l) != (n, k, ell) {
                return Err(config_err(
                    "dims",
                    format!("declared (n, k, l) = ({}, {}, {}) but the model has ({n}, {k}, {ell})", d.n, d.k, d.l),
                ));
            }
        }

        let structure = match &config.structure {
            None => None,
            Some(StructureSpec::Gallery(word)) => {
                let case = gallery_case
                    .as_ref()
                    .filter(|_| word == "gallery")
                    .ok_or_else(|| config_err("structure", "the string form must be \"gallery\" and needs a gallery anchor"))?;
                Some(case.structure.clone().ok_or_else(|| config_err("structure", "this gallery case has no structure"))?)
            }
            Some(StructureSpec::Table(table)) => {
                expect_len(table, k, "structure")?;
                let mut c = Vec::with_capacity(k);
                for (lambda, rows) in table.iter().enumerate() {
                    expect_len(rows, k, &format!("structure[{lambda}]"))?;
                    let mut m = Vec::with_capacity(k);
                    for (alpha, row) in rows.iter().enumerate() {
                        expect_len(row, k, &format!("structure[{lambda}][{alpha}]"))?;
                        m.push(
                            row.iter()
                                .enumerate()
                                .map(|(beta, src)| field(src, VarSpec::base(n), &base, &format!("structure[{lambda}][{alpha}][{beta}]")))
                                .collect::<Result<Vec<_>, _>>()?,
                        );
                    }
                    c.push(m);
                }
                Some(PreLieStructure::from_full(bundle.clone(), c).map_err(|e| config_err("structure", e))?)
            }
        };

        let mut curves = Vec::with_capacity(config.curves.len());
        for (i, spec) in config.curves.iter().enumerate() {
            let path = format!("curves[{i}]");
            expect_len(&spec.x, n, &format!("{path}.x"))?;
            expect_len(&spec.u, k, &format!("{path}.u"))?;
            let parse_all = |list: &[String], key: &str| {
                list.iter()
                    .enumerate()
                    .map(|(j, src)| parse(src, VarSpec::time()).map_err(|e| config_err(&format!("{path}.{key}[{j}]"), e)))
                    .collect::<Result<Vec<_>, _>>()
            };
            if !(spec.t0.is_finite() && spec.t1.is_finite() && spec.t1 > spec.t0) {
                return Err(config_err(&path, "need finite t0 < t1"));
            }
            if let Some(y0) = &spec.y0 {
                expect_len(y0, ell, &format!("{path}.y0"))?;
            }
            let tolerance = config.tolerances.admissibility.unwrap_or(ANALYTIC_ADMISSIBILITY_TOLERANCE);
            let curve =
                AdmissibleCurve::from_exprs(spec.t0, spec.t1, parse_all(&spec.x, "x")?, parse_all(&spec.u, "u")?).with_tolerance(tolerance);
            curves.push(CurveModel { curve, steps: spec.steps, y0: spec.y0.clone() });
        }

        let mut sections = Vec::with_capacity(config.sections.len());
        for (i, spec) in config.sections.iter().enumerate() {
            let path = format!("sections[{i}]");
            expect_len(&spec.s, k, &format!("{path}.s"))?;
            expect_len(&spec.psi, ell, &format!("{path}.psi"))?;
            let build = |list: &[String], key: &str| -> Result<VectorField, CliError> {
                let comps = list
                    .iter()
                    .enumerate()
                    .map(|(j, src)| field(src, VarSpec::base(n), &base, &format!("{path}.{key}[{j}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                VectorField::new(base.clone(), comps).map_err(|e| config_err(&path, e))
            };
            sections.push((build(&spec.s, "s")?, build(&spec.psi, "psi")?));
        }

        let points = match &config.points {
            Some(points) => {
                for (i, p) in points.iter().enumerate() {
                    base.check(p).map_err(|e| config_err(&format!("points[{i}]"), e))?;
                }
                points.clone()
            }
            None => base.shrunk(0.1).grid(config.grid.unwrap_or(DEFAULT_GRID).max(1)),
        };

        let t = &config.tolerances;
        let tolerances = ResolvedTolerances {
            admissibility: t.admissibility.unwrap_or(ANALYTIC_ADMISSIBILITY_TOLERANCE),
            anchor_hom: t.anchor_hom.unwrap_or_else(|| structure.as_ref().map_or(geoconn::prelie::TAU_HOM_EXACT, PreLieStructure::tau_hom)),
            h_lift: t.h_lift.unwrap_or(1e-10),
            axioms: t.axioms.unwrap_or(1e-6),
            involutivity: t.involutivity.unwrap_or(1e-5),
        };

        Ok(Self {
            gallery: gallery_case.map(|c| c.name),
            bundle,
            ell,
            linear,
            general,
            structure,
            curves,
            sections,
            points,
            seed: config.seed.unwrap_or(DEFAULT_SEED),
            samples: config.samples.unwrap_or(DEFAULT_SAMPLES),
            tolerances,
            expect: config.expect,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(json: &str) -> Result<Model, CliError> {
        Model::from_config(&RunConfig::from_json(json)?)
    }

    #[test]
    fn expression_model() {
        let m = model(
            r#"{"schema_version": 1, "box": {"lower": [-1], "upper": [1]}, "anchor": [["1"]],
                "connection": [[["0.5"]]], "curves": [{"x": ["t"], "u": ["1"], "t0": 0, "t1": 1}],
                "sections": [{"s": ["1"], "psi": ["x0^2"]}]}"#,
        )
        .unwrap();
        assert_eq!((m.n(), m.k(), m.ell), (1, 1, 1));
        assert_eq!(m.linear.unwrap().matrix(0, &[0.0]).unwrap()[(0, 0)], 0.5);
        assert_eq!(m.points.len(), 3);
    }

    #[test]
    fn gallery_model() {
        let m =
            model(r#"{"schema_version": 1, "anchor": "heisenberg-algebroid", "connection": "gallery", "structure": "gallery"}"#).unwrap();
        assert_eq!((m.n(), m.k(), m.ell), (3, 3, 2));
        assert!(m.structure.is_some());
        assert!(model(r#"{"schema_version": 1, "anchor": "heisenberg-sr", "structure": "gallery"}"#).is_err());
    }

    #[test]
    fn positioned_expression_errors() {
        let e = model(r#"{"schema_version": 1, "box": {"lower": [-1], "upper": [1]}, "anchor": [["1 + x3"]]}"#).unwrap_err();
        match e {
            CliError::Config(m) => assert!(m.starts_with("anchor[0][0]") && m.contains("byte 4"), "{m}"),
            other => panic!("{other:?}"),
        }
        let e = model(r#"{"schema_version": 1, "box": {"lower": [-1], "upper": [1]}, "anchor": [["1"]], "connection": [[["0"]]], "dims": {"n": 1, "k": 1, "l": 2}}"#).unwrap_err();
        assert!(matches!(e, CliError::Config(m) if m.starts_with("dims")));
    }
}
