//! SVG overlay of a trial trajectory on the occupancy map.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nigelpark_core::geometry::Vec2;
use nigelpark_core::grid::{Cell, OccupancyGrid};
use nigelpark_core::mapping::load_map;
use serde::Deserialize;

use crate::error::{HarnessError, Result};

/// Pixels per meter.
const SCALE: f64 = 100.0;
const MARGIN: f64 = 0.1;

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    x: f64,
    y: f64,
    est_x: f64,
    est_y: f64,
}

/// Ground-truth and estimated positions from a `trajectory.csv` log.
pub fn read_trajectory(path: &Path) -> Result<(Vec<Vec2>, Vec<Vec2>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut truth = Vec::new();
    let mut est = Vec::new();
    for row in rdr.deserialize::<TrajectoryRow>() {
        let r = row.map_err(|e| csv_error(path, e))?;
        truth.push(Vec2::new(r.x, r.y));
        est.push(Vec2::new(r.est_x, r.est_y));
    }
    Ok((truth, est))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

fn polyline(out: &mut String, pts: &[Vec2], style: &str) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::new();
    for p in pts {
        let _ = write!(d, "{:.4},{:.4} ", p.x, p.y);
    }
    let _ = writeln!(out, r#"<polyline points="{}" {style}/>"#, d.trim_end());
}

/// Occupied cells (merged into row runs) with the truth path solid and the
/// estimate dashed, in world coordinates with y up.
pub fn render_svg(map: Option<&OccupancyGrid>, truth: &[Vec2], estimate: &[Vec2]) -> String {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |p: Vec2| {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    };
    if let Some(m) = map {
        let o = m.origin.translation();
        grow(o);
        grow(o + Vec2::new(m.width as f64, m.height as f64) * m.resolution);
    }
    truth.iter().chain(estimate).for_each(|p| grow(*p));
    if !lo.x.is_finite() {
        lo = Vec2::zeros();
        hi = Vec2::new(1.0, 1.0);
    }
    let lo = lo - Vec2::new(MARGIN, MARGIN);
    let hi = hi + Vec2::new(MARGIN, MARGIN);
    let size = hi - lo;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        size.x * SCALE,
        size.y * SCALE,
        size.x * SCALE,
        size.y * SCALE
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<g transform="translate({:.4},{:.4}) scale({SCALE},{:.1})">"#,
        -lo.x * SCALE,
        hi.y * SCALE,
        -SCALE
    );
    if let Some(m) = map {
        let _ = writeln!(out, r#"<g id="map" fill="black">"#);
        let r = m.resolution;
        for iy in 0..m.height as i64 {
            let mut ix = 0;
            while ix < m.width as i64 {
                if !m.is_occupied(Cell::new(ix, iy)) {
                    ix += 1;
                    continue;
                }
                let start = ix;
                while ix < m.width as i64 && m.is_occupied(Cell::new(ix, iy)) {
                    ix += 1;
                }
                let c = m.grid_to_world(Cell::new(start, iy));
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.4}" y="{:.4}" width="{:.4}" height="{r:.4}"/>"#,
                    c.x - 0.5 * r,
                    c.y - 0.5 * r,
                    (ix - start) as f64 * r
                );
            }
        }
        let _ = writeln!(out, "</g>");
    }
    polyline(&mut out, estimate, r#"id="estimate" fill="none" stroke="orange" stroke-width="0.01" stroke-dasharray="0.03,0.02""#);
    polyline(&mut out, truth, r#"id="trajectory" fill="none" stroke="blue" stroke-width="0.015""#);
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    out
}

/// Locates the trajectory CSV and map for a log path: either a trial
/// directory or a `trajectory.csv` inside one. Without an explicit map,
/// `map.yaml` is looked up in the trial directory and then its parent.
pub fn resolve_log(log: &Path, map: Option<&Path>) -> Result<(PathBuf, Option<PathBuf>)> {
    let traj = if log.is_dir() { log.join("trajectory.csv") } else { log.to_path_buf() };
    if !traj.is_file() {
        return Err(HarnessError::io(&traj, std::io::Error::new(std::io::ErrorKind::NotFound, "no trajectory log")));
    }
    let map = match map {
        Some(m) => Some(crate::verify::map_yaml(m)),
        None => {
            let dir = traj.parent().map(Path::to_path_buf).unwrap_or_default();
            [dir.join("map.yaml"), dir.parent().map(|p| p.join("map.yaml")).unwrap_or_default()]
                .into_iter()
                .find(|p| p.is_file())
        }
    };
    Ok((traj, map))
}

/// Renders the log at `log` and returns the SVG text.
pub fn plot_log(log: &Path, map: Option<&Path>) -> Result<String> {
    let (traj, map) = resolve_log(log, map)?;
    let (truth, est) = read_trajectory(&traj)?;
    let grid = map.map(|m| load_map(&m)).transpose()?;
    Ok(render_svg(grid.as_ref(), &truth, &est))
}
