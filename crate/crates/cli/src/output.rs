//! File formats: legacy ASCII VTK snapshots, CSV tables and run metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use chmhd_core::scheme::Spaces;
use chmhd_core::{Mesh, State};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;

/// Writes `state` on the vertices of `mesh` as a legacy VTK unstructured grid.
///
/// Velocity is sampled at the vertices, where the MINI bubbles vanish.
pub fn write_vtk(state: &State, mesh: &Mesh, spaces: &Spaces, path: &Path) -> Result<()> {
    fs::write(path, vtk_string(state, mesh, spaces)).with_context(|| format!("cannot write {}", path.display()))
}

pub fn vtk_string(state: &State, mesh: &Mesh, spaces: &Spaces) -> String {
    let n = mesh.num_nodes();
    let nt = mesh.num_triangles();
    let mut s = String::with_capacity(64 * n + 32 * nt);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "chmhd snapshot t={:e}", state.time);
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, field) in [("phi", &state.phi), ("omega", &state.omega), ("p", &state.pres)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in &field.coeffs[..n] {
            let _ = writeln!(s, "{v:e}");
        }
    }
    for (name, field, space) in [("velocity", &state.vel, &spaces.vel), ("magnetic", &state.mag, &spaces.mag)] {
        let _ = writeln!(s, "VECTORS {name} double");
        for k in 0..n {
            let (x, y) = (field.coeffs[space.node_dof(k, 0)], field.coeffs[space.node_dof(k, 1)]);
            let _ = writeln!(s, "{x:e} {y:e} 0");
        }
    }
    s
}

/// Writes one row per record under a header derived from the record's fields.
/// Floats are written in shortest round-trip form, so reading back is bit-exact.
pub fn write_csv<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in records {
        w.serialize(r).with_context(|| format!("cannot write {}", path.display()))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().with_context(|| format!("malformed CSV in {}", path.display()))
}

#[derive(Serialize)]
struct Metadata<'a> {
    notes: &'a [String],
    config: &'a RunConfig,
}

/// Records the fully resolved configuration next to the results.
pub fn write_metadata(cfg: &RunConfig, notes: &[String], path: &Path) -> Result<()> {
    let text = toml::to_string(&Metadata { notes, config: cfg })?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chmhd_core::mesh::{build_mesh, Rect};
    use serde::Deserialize;

    #[test]
    fn two_triangle_snapshot() {
        let mesh = build_mesh(Rect::UNIT_SQUARE, 1, 1).unwrap();
        let spaces = Spaces::new(&mesh);
        let state = State::zeros(&spaces, 0.0);
        let text = vtk_string(&state, &mesh, &spaces);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 2 8"));
        let cells = lines.iter().position(|l| l.starts_with("CELLS")).unwrap();
        for l in &lines[cells + 1..cells + 3] {
            assert!(l.starts_with("3 "), "{l}");
        }
        let types = lines.iter().position(|l| l.starts_with("CELL_TYPES")).unwrap();
        assert_eq!(&lines[types + 1..types + 3], &["5", "5"]);
        for key in ["SCALARS phi", "SCALARS omega", "SCALARS p", "VECTORS velocity", "VECTORS magnetic"] {
            assert!(text.contains(key), "{key}");
        }
    }

    #[test]
    fn vector_data_at_vertices() {
        let mesh = build_mesh(Rect::UNIT_SQUARE, 1, 1).unwrap();
        let spaces = Spaces::new(&mesh);
        let mut state = State::zeros(&spaces, 0.0);
        for k in 0..4 {
            state.vel.coeffs[spaces.vel.node_dof(k, 0)] = k as f64;
            state.vel.coeffs[spaces.vel.node_dof(k, 1)] = -(k as f64);
        }
        let text = vtk_string(&state, &mesh, &spaces);
        let start = text.find("VECTORS velocity").unwrap();
        let rows: Vec<&str> = text[start..].lines().skip(1).take(4).collect();
        assert_eq!(rows[3], "3e0 -3e0 0");
    }

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Row {
        step: usize,
        value: f64,
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let rows: Vec<Row> = [0.1, 1.0 / 3.0, -2.5e-300, f64::MIN_POSITIVE, 123456789.123456789, f64::EPSILON]
            .iter()
            .enumerate()
            .map(|(step, &value)| Row { step, value })
            .collect();
        write_csv(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,value\n"));
        let back: Vec<Row> = read_csv(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let err = write_csv::<Row>(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(format!("{err:#}").contains("/nonexistent-dir/x.csv"));
    }
}
