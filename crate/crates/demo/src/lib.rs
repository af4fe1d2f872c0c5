//! Browser bindings for three interactive views:
//!
//! * the horizontal lift of a Heisenberg-admissible loop,
//! * a curvature-norm heat map on a coordinate slice,
//! * the anchor rank over a coordinate slice.
//!
//! Each exported function wraps a plain Rust function that returns a flat
//! `Vec<f64>`, so the numerics are testable without a browser.

use geoconn::bundle::AdmissibleCurve;
use geoconn::chart::CoordDomain;
use geoconn::gallery::{anchor_rank, by_name, GalleryCase};
use geoconn::prelie::curvature_components;
use geoconn::transport::h_lift_curve;
use geoconn::{Error, Result};
use wasm_bindgen::prelude::*;

/// Values per sample in [`heisenberg_lift`]: `t, x0, x1, x2, y0, y1`.
pub const LIFT_STRIDE: usize = 6;

/// Circle `x(t) = (r sin t, r(1 − cos t), r²(t − sin t)/2)` with control
/// `u = r(cos t, sin t, 0)` in the Heisenberg algebroid, lifted through
/// `y0`. `t` runs over `[0, turns · 2π]`; each turn climbs `πr²` in `x2`,
/// which must stay inside the unit box.
pub fn heisenberg_lift(radius: f64, turns: f64, y0: [f64; 2], steps: usize) -> Result<Vec<f64>> {
    let climb = std::f64::consts::PI * radius * radius * turns;
    if !(radius > 0.0 && radius <= 0.45 && turns > 0.0 && climb <= 0.95) {
        return Err(Error::Rejected("need 0 < radius ≤ 0.45, turns > 0 and π·radius²·turns ≤ 0.95".into()));
    }
    let case = by_name("heisenberg-algebroid")?;
    let conn = case.connection.ok_or_else(|| Error::Rejected("gallery case has no connection".into()))?;
    let t1 = turns * std::f64::consts::TAU;
    let curve = AdmissibleCurve::from_fns(
        0.0,
        t1,
        move |t| vec![radius * t.sin(), radius * (1.0 - t.cos()), 0.5 * radius * radius * (t - t.sin())],
        move |t| vec![radius * t.cos(), radius * t.sin(), 0.0],
    );
    let lift = h_lift_curve(&conn, &curve, &y0, steps.max(1))?;
    let mut out = Vec::with_capacity(lift.samples.len() * LIFT_STRIDE);
    for s in &lift.samples {
        out.push(s.t);
        out.extend_from_slice(&s.x);
        out.extend_from_slice(&s.y);
    }
    Ok(out)
}

/// Row-major `resolution × resolution` sample points on the `(x0, x1)` slice
/// of the case's box (shrunk by 5%), with any further coordinates fixed at
/// `level` inside their range.
fn slice_points(case: &GalleryCase, resolution: usize, level: f64) -> Result<Vec<Vec<f64>>> {
    if !(2..=256).contains(&resolution) {
        return Err(Error::Rejected("resolution must lie in [2, 256]".into()));
    }
    let base: CoordDomain = case.bundle.base().shrunk(0.05);
    if base.dim() < 2 {
        return Err(Error::Rejected(format!("{} has a one-dimensional base", case.name)));
    }
    let (lo, hi) = (base.lower(), base.upper());
    let mut points = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            let mut x = base.center();
            x[0] = lo[0] + (hi[0] - lo[0]) * col as f64 / (resolution - 1) as f64;
            x[1] = lo[1] + (hi[1] - lo[1]) * row as f64 / (resolution - 1) as f64;
            for (i, xi) in x.iter_mut().enumerate().skip(2) {
                *xi = lo[i] + (hi[i] - lo[i]) * level.clamp(0.0, 1.0);
            }
            points.push(x);
        }
    }
    Ok(points)
}

/// Largest curvature component at each slice point.
pub fn curvature_norm_grid(case_name: &str, resolution: usize, level: f64) -> Result<Vec<f64>> {
    let case = by_name(case_name)?;
    let (conn, st) = match (&case.connection, &case.structure) {
        (Some(c), Some(s)) => (c, s),
        _ => return Err(Error::Rejected(format!("{case_name} lacks a connection or structure"))),
    };
    slice_points(&case, resolution, level)?.iter().map(|x| Ok(curvature_components(conn, st, x)?.max_abs())).collect()
}

/// Numerical rank of the anchor at each slice point.
pub fn anchor_rank_map(case_name: &str, resolution: usize, level: f64) -> Result<Vec<f64>> {
    let case = by_name(case_name)?;
    slice_points(&case, resolution, level)?.iter().map(|x| Ok(anchor_rank(&case.bundle, x)? as f64)).collect()
}

fn to_js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen(js_name = heisenbergLift)]
pub fn heisenberg_lift_js(radius: f64, turns: f64, y0: f64, y1: f64, steps: usize) -> std::result::Result<Vec<f64>, JsValue> {
    heisenberg_lift(radius, turns, [y0, y1], steps).map_err(to_js)
}

#[wasm_bindgen(js_name = curvatureNormGrid)]
pub fn curvature_norm_grid_js(case_name: &str, resolution: usize, level: f64) -> std::result::Result<Vec<f64>, JsValue> {
    curvature_norm_grid(case_name, resolution, level).map_err(to_js)
}

#[wasm_bindgen(js_name = anchorRankMap)]
pub fn anchor_rank_map_js(case_name: &str, resolution: usize, level: f64) -> std::result::Result<Vec<f64>, JsValue> {
    anchor_rank_map(case_name, resolution, level).map_err(to_js)
}

#[wasm_bindgen(js_name = caseNames)]
pub fn case_names() -> String {
    geoconn::gallery::CASE_NAMES.join(",")
}
