//! Subcommand implementations. Each returns the rendered output plus a pass
//! flag; only `check` can report failure.

use std::path::PathBuf;

use serde_json::{json, Value};

use geoconn::connection::{LinearConnection, RhoConnection};
use geoconn::derivative::{nabla, NESTED_DIFFERENCE_STEP};
use geoconn::prelie::{anchor_hom_residual, curvature_components, torsion_components, PreLieStructure};
use geoconn::transport::{default_steps, h_lift_curve, DEFAULT_STEPS_PER_UNIT};

use crate::checks::{run_all, CheckRecord};
use crate::config::RunConfig;
use crate::model::Model;
use crate::output::{envelope, format_number, matrix_rows, numbers, CsvTable};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Transport,
    Nabla,
    Curvature,
    Torsion,
    Describe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Transport => "transport",
            Command::Nabla => "nabla",
            Command::Curvature => "curvature",
            Command::Torsion => "torsion",
            Command::Describe => "describe",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub format: Format,
    pub deterministic: bool,
    /// Curve index for `transport`.
    pub curve: usize,
    /// Where `transport` writes its `(t, x, y)` samples.
    pub samples: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutput {
    pub body: String,
    pub passed: bool,
}

impl CommandOutput {
    pub fn exit_code(&self) -> u8 {
        if self.passed {
            crate::EXIT_PASS
        } else {
            crate::EXIT_CHECK_FAILED
        }
    }
}

/// Loads the model and runs `command`.
pub fn execute(command: Command, config: &RunConfig, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let mut model = Model::from_config(config)?;
    if let Some(seed) = opts.seed {
        model.seed = seed;
    }
    match command {
        Command::Check => cmd_check(&model, opts),
        Command::Transport => cmd_transport(&model, opts),
        Command::Nabla => cmd_nabla(&model, opts),
        Command::Curvature => cmd_curvature(&model, opts),
        Command::Torsion => cmd_torsion(&model, opts),
        Command::Describe => cmd_describe(&model, opts),
    }
}

fn steps_value(model: &Model, opts: &RunOptions) -> Value {
    json!({
        "rk4_steps_per_unit": opts.steps.unwrap_or(DEFAULT_STEPS_PER_UNIT),
        "nested_difference": NESTED_DIFFERENCE_STEP,
        "samples": model.samples,
    })
}

fn timestamp(opts: &RunOptions) -> Option<String> {
    (!opts.deterministic).then(|| chrono::Utc::now().to_rfc3339())
}

fn render(command: Command, model: &Model, opts: &RunOptions, result: Value, csv: impl FnOnce() -> CsvTable) -> Result<String, CliError> {
    let tolerances = serde_json::to_value(model.tolerances).map_err(|e| CliError::Runtime(e.to_string()))?;
    match opts.format {
        Format::Json => {
            let env = envelope(command.name(), model.seed, tolerances, steps_value(model, opts), timestamp(opts), result);
            let mut s = serde_json::to_string_pretty(&env).map_err(|e| CliError::Runtime(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut table = csv();
            let mut common = vec![
                ("command".to_string(), command.name().to_string()),
                ("seed".to_string(), model.seed.to_string()),
                ("tolerances".to_string(), tolerances.to_string()),
                ("steps".to_string(), steps_value(model, opts).to_string()),
            ];
            if let Some(ts) = timestamp(opts) {
                common.push(("timestamp".to_string(), ts));
            }
            table.prepend_meta(common);
            Ok(table.render())
        }
    }
}

fn require_linear(model: &Model, command: Command) -> Result<&LinearConnection, CliError> {
    model.linear.as_ref().ok_or_else(|| CliError::Config(format!("connection: `{}` needs a linear connection", command.name())))
}

fn require_structure(model: &Model, command: Command) -> Result<&PreLieStructure, CliError> {
    model.structure.as_ref().ok_or_else(|| CliError::Config(format!("structure: `{}` needs a pre-Lie structure", command.name())))
}

fn coord_header(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

fn opt_number(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub fn cmd_check(model: &Model, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let records: Vec<CheckRecord> = run_all(model)?;
    let passed = records.iter().all(|r| !r.required || r.passed);
    let result = json!({ "gallery": model.gallery, "checks": records, "passed": passed });
    let body = render(Command::Check, model, opts, result, || {
        let mut t = CsvTable::new(["name", "required", "passed", "residual", "tolerance", "samples"].map(String::from).to_vec());
        for r in &records {
            t.push(vec![
                r.name.clone(),
                r.required.to_string(),
                r.passed.to_string(),
                opt_number(r.residual),
                opt_number(r.tolerance),
                r.samples.to_string(),
            ]);
        }
        t
    })?;
    Ok(CommandOutput { body, passed })
}

pub fn cmd_transport(model: &Model, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let conn = require_linear(model, Command::Transport)?;
    let spec = model
        .curves
        .get(opts.curve)
        .ok_or_else(|| CliError::Config(format!("curves: no curve with index {} ({} declared)", opts.curve, model.curves.len())))?;
    let (t0, t1) = spec.curve.t_range();
    let steps = match opts.steps {
        Some(per_unit) => ((t1 - t0) * per_unit as f64).ceil().max(1.0) as usize,
        None => spec.steps.unwrap_or_else(|| default_steps(&spec.curve)),
    };
    let y0 = spec.y0.clone().unwrap_or_else(|| {
        let mut e = vec![0.0; model.ell];
        if let Some(first) = e.first_mut() {
            *first = 1.0;
        }
        e
    });
    let lift = h_lift_curve(conn, &spec.curve, &y0, steps)?;

    if let Some(path) = &opts.samples {
        let mut header = vec!["t".to_string()];
        header.extend(coord_header("x", model.n()));
        header.extend(coord_header("y", model.ell));
        let mut t = CsvTable::new(header);
        for s in &lift.samples {
            let mut row = vec![format_number(s.t)];
            row.extend(numbers(&s.x));
            row.extend(numbers(&s.y));
            t.push(row);
        }
        std::fs::write(path, t.render()).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    }

    let result = json!({
        "curve": opts.curve,
        "steps": lift.step_count,
        "y0": y0,
        "final_value": lift.final_value(),
        "transport_matrix": matrix_rows(&lift.transport_matrix),
        "determinant": lift.transport_matrix.determinant(),
        "residual": lift.max_admissibility_residual,
        "samples": opts.samples.as_ref().map(|p| p.display().to_string()),
    });
    let body = render(Command::Transport, model, opts, result, || {
        let mut t = CsvTable::new(["row", "col", "value"].map(String::from).to_vec());
        t.meta("curve", opts.curve);
        t.meta("rk4_steps", lift.step_count);
        t.meta("residual", format_number(lift.max_admissibility_residual));
        let m = &lift.transport_matrix;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                t.push(vec![i.to_string(), j.to_string(), format_number(m[(i, j)])]);
            }
        }
        t
    })?;
    Ok(CommandOutput { body, passed: true })
}

pub fn cmd_nabla(model: &Model, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let conn = require_linear(model, Command::Nabla)?;
    if model.sections.is_empty() {
        return Err(CliError::Config("sections: `nabla` needs at least one section pair".into()));
    }
    let mut rows = Vec::new();
    for (i, (s, psi)) in model.sections.iter().enumerate() {
        for x in &model.points {
            rows.push((i, x.clone(), nabla(conn, s, psi, x)?.as_slice().to_vec()));
        }
    }
    let result = json!({
        "rows": rows.iter().map(|(i, x, v)| json!({ "section": i, "x": x, "value": v })).collect::<Vec<_>>(),
    });
    let body = render(Command::Nabla, model, opts, result, || {
        let mut header = vec!["section".to_string()];
        header.extend(coord_header("x", model.n()));
        header.extend(coord_header("value", model.ell));
        let mut t = CsvTable::new(header);
        for (i, x, v) in &rows {
            let mut row = vec![i.to_string()];
            row.extend(numbers(x));
            row.extend(numbers(v));
            t.push(row);
        }
        t
    })?;
    Ok(CommandOutput { body, passed: true })
}

/// Per-point anchor-hom residual and the tensorial flag.
fn regime(st: &PreLieStructure, model: &Model, x: &[f64]) -> Result<(f64, bool), CliError> {
    let residual = anchor_hom_residual(st, x)?;
    Ok((residual, residual <= model.tolerances.anchor_hom))
}

pub fn cmd_curvature(model: &Model, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let st = require_structure(model, Command::Curvature)?;
    let conn = require_linear(model, Command::Curvature)?;
    let (k, ell) = (model.k(), model.ell);
    let mut points = Vec::with_capacity(model.points.len());
    for x in &model.points {
        let (residual, tensorial) = regime(st, model, x)?;
        points.push((x.clone(), residual, tensorial, curvature_components(conn, st, x)?));
    }
    let result = json!({
        "index_order": "R[alpha][beta][B][A]",
        "points": points.iter().map(|(x, residual, tensorial, r)| {
            let comps: Vec<Vec<Vec<Vec<f64>>>> = (0..k)
                .map(|a| (0..k).map(|b| matrix_rows(r.matrix(a, b))).collect())
                .collect();
            json!({ "x": x, "anchor_hom_residual": residual, "tensorial": tensorial, "max_abs": r.max_abs(), "components": comps })
        }).collect::<Vec<_>>(),
    });
    let body = render(Command::Curvature, model, opts, result, || {
        let mut header = vec!["point".to_string()];
        header.extend(coord_header("x", model.n()));
        header.extend(["alpha", "beta", "B", "A", "value", "tensorial"].map(String::from));
        let mut t = CsvTable::new(header);
        for (p, (x, _, tensorial, r)) in points.iter().enumerate() {
            for alpha in 0..k {
                for beta in 0..k {
                    for b in 0..ell {
                        for a in 0..ell {
                            let mut row = vec![p.to_string()];
                            row.extend(numbers(x));
                            row.extend([alpha, beta, b, a].map(|i| i.to_string()));
                            row.push(format_number(r.component(b, alpha, beta, a)));
                            row.push(tensorial.to_string());
                            t.push(row);
                        }
                    }
                }
            }
        }
        t
    })?;
    Ok(CommandOutput { body, passed: true })
}

pub fn cmd_torsion(model: &Model, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let st = require_structure(model, Command::Torsion)?;
    let conn = require_linear(model, Command::Torsion)?;
    let k = model.k();
    let mut points = Vec::with_capacity(model.points.len());
    for x in &model.points {
        let (residual, tensorial) = regime(st, model, x)?;
        points.push((x.clone(), residual, tensorial, torsion_components(conn, st, x)?));
    }
    let result = json!({
        "index_order": "T[lambda][alpha][beta]",
        "points": points.iter().map(|(x, residual, tensorial, t)| {
            let comps: Vec<Vec<Vec<f64>>> = t.matrices.iter().map(matrix_rows).collect();
            json!({ "x": x, "anchor_hom_residual": residual, "tensorial": tensorial, "max_abs": t.max_abs(), "components": comps })
        }).collect::<Vec<_>>(),
    });
    let body = render(Command::Torsion, model, opts, result, || {
        let mut header = vec!["point".to_string()];
        header.extend(coord_header("x", model.n()));
        header.extend(["lambda", "alpha", "beta", "value", "tensorial"].map(String::from));
        let mut t = CsvTable::new(header);
        for (p, (x, _, tensorial, tt)) in points.iter().enumerate() {
            for lambda in 0..k {
                for alpha in 0..k {
                    for beta in 0..k {
                        let mut row = vec![p.to_string()];
                        row.extend(numbers(x));
                        row.extend([lambda, alpha, beta].map(|i| i.to_string()));
                        row.push(format_number(tt.component(lambda, alpha, beta)));
                        row.push(tensorial.to_string());
                        t.push(row);
                    }
                }
            }
        }
        t
    })?;
    Ok(CommandOutput { body, passed: true })
}

pub fn cmd_describe(model: &Model, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let mut anchor = Vec::with_capacity(model.points.len());
    for x in &model.points {
        let rk = model.bundle.fiber_rank_kernel(x)?;
        anchor.push((x.clone(), rk.rank, rk.kernel.len()));
    }
    let connection = match (&model.linear, &model.general) {
        (Some(_), _) => "linear",
        (None, Some(_)) => "general",
        (None, None) => "none",
    };
    let fiber_dim = model.linear.as_ref().map(|c| c.fiber_dim()).unwrap_or(model.ell);
    let result = json!({
        "gallery": model.gallery,
        "dims": { "n": model.n(), "k": model.k(), "l": fiber_dim },
        "box": { "lower": model.base().lower(), "upper": model.base().upper() },
        "connection": connection,
        "structure": model.structure.is_some(),
        "curves": model.curves.len(),
        "sections": model.sections.len(),
        "anchor": anchor.iter().map(|(x, rank, kernel)| json!({ "x": x, "rank": rank, "kernel_dim": kernel })).collect::<Vec<_>>(),
    });
    let body = render(Command::Describe, model, opts, result, || {
        let mut header = coord_header("x", model.n());
        header.extend(["rank", "kernel_dim"].map(String::from));
        let mut t = CsvTable::new(header);
        t.meta("dims", format!("n={} k={} l={}", model.n(), model.k(), fiber_dim));
        t.meta("connection", connection);
        for (x, rank, kernel) in &anchor {
            let mut row = numbers(x);
            row.push(rank.to_string());
            row.push(kernel.to_string());
            t.push(row);
        }
        t
    })?;
    Ok(CommandOutput { body, passed: true })
}
