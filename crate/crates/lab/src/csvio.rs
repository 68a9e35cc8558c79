//! CSV emission and parsing for all artifacts of record. Numeric columns are
//! written with 17 significant digits so values round-trip f64 exactly and
//! repeated runs produce byte-identical files.

use crate::error::LabError;
use chstab_core::spectral::{Discretization, SpectralField};
use chstab_core::{ScanRow, TrajectoryRecord};
use nalgebra::DVector;
use std::fs;
use std::path::Path;
use std::sync::Arc;

pub const TIMESERIES_HEADER: &str =
    "n,t,z_norm_sq,energy_lhs,energy_rhs,feedback_energy,newton_iters";
pub const SCAN_HEADER: &str = "M,lambda,alpha_min,c_star,gamma";
pub const FIELD_HEADER_1D: &str = "x,value";
pub const FIELD_HEADER_2D: &str = "x,y,value";

/// 17-significant-digit decimal form (exact f64 round trip).
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), LabError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| LabError::io(parent, source))?;
        }
    }
    fs::write(path, contents).map_err(|source| LabError::io(path, source))
}

pub fn write_timeseries(path: &Path, record: &TrajectoryRecord) -> Result<(), LabError> {
    let mut out = String::with_capacity(record.steps.len() * 96);
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    for s in &record.steps {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.step,
            format_float(s.time),
            format_float(s.z_norm_sq),
            format_float(s.energy_lhs),
            format_float(s.energy_rhs),
            format_float(s.feedback_energy),
            s.newton_iterations,
        ));
    }
    write_atomic(path, &out)
}

pub fn write_scan(path: &Path, rows: &[ScanRow]) -> Result<(), LabError> {
    let mut out = String::with_capacity(rows.len() * 64 + 64);
    out.push_str(SCAN_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.actuators_per_axis,
            format_float(r.lambda),
            format_float(r.alpha_min),
            format_float(r.c_star),
            format_float(r.gamma),
        ));
    }
    write_atomic(path, &out)
}

/// Field snapshot: header `x[,y],value`, row-major over the collocation grid.
pub fn write_field(path: &Path, field: &SpectralField) -> Result<(), LabError> {
    let disc = field.disc();
    let grid = field.to_grid();
    let mut out = String::with_capacity(grid.len() * 64 + 16);
    if disc.dim() == 1 {
        out.push_str(FIELD_HEADER_1D);
        out.push('\n');
        for (q, v) in grid.iter().enumerate() {
            let x = disc.grid_coords(q)[0];
            out.push_str(&format!("{},{}\n", format_float(x), format_float(*v)));
        }
    } else {
        out.push_str(FIELD_HEADER_2D);
        out.push('\n');
        for (q, v) in grid.iter().enumerate() {
            let xy = disc.grid_coords(q);
            out.push_str(&format!(
                "{},{},{}\n",
                format_float(xy[0]),
                format_float(xy[1]),
                format_float(*v)
            ));
        }
    }
    write_atomic(path, &out)
}

/// Read a field snapshot written by [`write_field`] (values are re-analyzed
/// onto the discretization's basis; coordinates are trusted to be row-major).
pub fn read_field(path: &Path, disc: &Arc<Discretization>) -> Result<SpectralField, LabError> {
    let text = fs::read_to_string(path).map_err(|source| LabError::io(path, source))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| LabError::csv(path, 1, "empty file"))?;
    let expected_header = if disc.dim() == 1 {
        FIELD_HEADER_1D
    } else {
        FIELD_HEADER_2D
    };
    if header.trim() != expected_header {
        return Err(LabError::csv(
            path,
            1,
            format!("expected header `{expected_header}`, got `{header}`"),
        ));
    }
    let value_column = if disc.dim() == 1 { 1 } else { 2 };
    let mut values = Vec::with_capacity(disc.num_grid_points());
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != value_column + 1 {
            return Err(LabError::csv(
                path,
                idx + 1,
                format!(
                    "expected {} columns, got {}",
                    value_column + 1,
                    fields.len()
                ),
            ));
        }
        let v: f64 = fields[value_column].trim().parse().map_err(|_| {
            LabError::csv(
                path,
                idx + 1,
                format!("cannot parse `{}`", fields[value_column]),
            )
        })?;
        values.push(v);
    }
    if values.len() != disc.num_grid_points() {
        return Err(LabError::csv(
            path,
            values.len() + 1,
            format!(
                "field has {} samples, discretization needs {}",
                values.len(),
                disc.num_grid_points()
            ),
        ));
    }
    SpectralField::from_grid(disc, &DVector::from_vec(values)).map_err(LabError::from)
}

#[derive(Debug, Clone, Copy)]
pub struct TimeSeriesRow {
    pub step: usize,
    pub time: f64,
    pub z_norm_sq: f64,
    pub energy_lhs: f64,
    pub energy_rhs: f64,
    pub feedback_energy: f64,
    pub newton_iterations: usize,
}

/// Parse a time-series CSV in the dynamics schema; malformed rows are
/// reported with their line number.
pub fn read_timeseries(path: &Path) -> Result<Vec<TimeSeriesRow>, LabError> {
    let text = fs::read_to_string(path).map_err(|source| LabError::io(path, source))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| LabError::csv(path, 1, "empty file"))?;
    if header.trim() != TIMESERIES_HEADER {
        return Err(LabError::csv(
            path,
            1,
            format!("expected header `{TIMESERIES_HEADER}`, got `{header}`"),
        ));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(LabError::csv(
                path,
                line_no,
                format!("expected 7 columns, got {}", fields.len()),
            ));
        }
        let parse_f = |i: usize| -> Result<f64, LabError> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| LabError::csv(path, line_no, format!("cannot parse `{}`", fields[i])))
        };
        let parse_u = |i: usize| -> Result<usize, LabError> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| LabError::csv(path, line_no, format!("cannot parse `{}`", fields[i])))
        };
        rows.push(TimeSeriesRow {
            step: parse_u(0)?,
            time: parse_f(1)?,
            z_norm_sq: parse_f(2)?,
            energy_lhs: parse_f(3)?,
            energy_rhs: parse_f(4)?,
            feedback_energy: parse_f(5)?,
            newton_iterations: parse_u(6)?,
        });
    }
    Ok(rows)
}
