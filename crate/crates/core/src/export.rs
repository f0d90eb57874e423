//! CSV and legacy-VTK writers for controls, trajectories and reports.
//!
//! Numbers are written in the shortest decimal form that parses back to the
//! same `f64`, so every exported value round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dynamics::{ControlTrajectory, SpaceTimeTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::fem::{Discretization, FeField};
use crate::mesh::Mesh;
use crate::optimize::{OptimizeReport, Residual};

/// Shortest round-trip decimal, switching to exponent form for very large or
/// very small magnitudes.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Vtk,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(ExportFormat::Csv),
            "vtk" => Ok(ExportFormat::Vtk),
            other => Err(Error::Config(format!("unknown export format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSpec {
    pub out_dir: PathBuf,
    /// `None` selects `{0, T/4, T/2, T}`.
    pub snapshot_times: Option<Vec<f64>>,
    pub formats: Vec<ExportFormat>,
}

impl ExportSpec {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        ExportSpec {
            out_dir: out_dir.into(),
            snapshot_times: None,
            formats: vec![ExportFormat::Csv, ExportFormat::Vtk],
        }
    }

    pub fn wants(&self, format: ExportFormat) -> bool {
        self.formats.contains(&format)
    }

    /// Snapshot times snapped to their nearest time node, without repeats.
    pub fn snapshot_nodes(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        let t = grid.final_time();
        let times = self
            .snapshot_times
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.25 * t, 0.5 * t, t]);
        let mut nodes = Vec::with_capacity(times.len());
        for s in times {
            if !(0.0..=t).contains(&s) {
                return Err(Error::Config(format!("snapshot time {s} lies outside [0, {t}]")));
            }
            let k = grid.nearest_node(s);
            if !nodes.contains(&k) {
                nodes.push(k);
            }
        }
        Ok(nodes)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes rows of numbers under a header line.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(format_f64).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    finish(path, w)
}

/// `t,C`, one row per time node.
pub fn write_control_csv(grid: &TimeGrid, control: &ControlTrajectory, path: &Path) -> Result<()> {
    control.check_on(grid)?;
    let rows = grid
        .times()
        .zip(control.values())
        .map(|(t, c)| vec![t, *c]);
    write_csv(path, &["t", "C"], rows)
}

/// `iter,J,residual_norm,delta_norm`, one row per iteration.
pub fn write_iterations_csv(report: &OptimizeReport, path: &Path) -> Result<()> {
    let rows = report.per_iter.iter().enumerate().map(|(i, r)| {
        vec![
            i as f64,
            r.objective,
            r.residual_norm,
            r.control_delta_norm,
        ]
    });
    write_csv(path, &["iter", "J", "residual_norm", "delta_norm"], rows)
}

/// Writes the final control to `path` and the iteration log to
/// `iterations.csv` in the same directory.
pub fn export_control_csv(grid: &TimeGrid, report: &OptimizeReport, path: &Path) -> Result<()> {
    write_control_csv(grid, &report.final_control, path)?;
    let log = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("iterations.csv");
    write_iterations_csv(report, &log)
}

/// Reads a `t,C` file, returning the time column and the control.
pub fn read_control_csv(path: &Path) -> Result<(Vec<f64>, ControlTrajectory)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(format!("missing column `{name}`")))
    };
    let (ti, ci) = (col("t")?, col("C")?);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(format!("bad number on data row {}", line + 1)))
        };
        times.push(get(ti)?);
        values.push(get(ci)?);
    }
    Ok((times, ControlTrajectory::new(values)?))
}

/// `t,g` rows of an optimality residual.
pub fn write_residual_csv(grid: &TimeGrid, residual: &Residual, path: &Path) -> Result<()> {
    let rows = grid
        .times()
        .zip(&residual.values)
        .map(|(t, g)| vec![t, *g]);
    write_csv(path, &["t", "g"], rows)
}

/// Burden `∫_Ω u dx` and its running time integral.
pub fn burden_series(disc: &Discretization, state: &SpaceTimeTrajectory) -> (Vec<f64>, Vec<f64>) {
    let burden = state.spatial_integrals(disc);
    let dt = state.grid().dt();
    let mut cumulative = Vec::with_capacity(burden.len());
    let mut acc = 0.0;
    for (k, b) in burden.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * dt * (burden[k - 1] + b);
        }
        cumulative.push(acc);
    }
    (burden, cumulative)
}

/// `t,burden,cumulative`.
pub fn export_burden_timeseries(disc: &Discretization, state: &SpaceTimeTrajectory, path: &Path) -> Result<()> {
    if state.n_nodes() != disc.n_nodes() {
        return Err(Error::invalid("trajectory does not live on this mesh"));
    }
    let (burden, cumulative) = burden_series(disc, state);
    let rows = state
        .grid()
        .times()
        .zip(burden.iter().zip(&cumulative))
        .map(|(t, (b, c))| vec![t, *b, *c]);
    write_csv(path, &["t", "burden", "cumulative"], rows)
}

/// `x,u` for a field on a 1D mesh.
pub fn export_field_csv(mesh: &Mesh, field: &FeField, path: &Path) -> Result<()> {
    if mesh.dim() != 1 {
        return Err(Error::UnsupportedFormat(
            "x,u CSV export needs a 1D mesh; use VTK for 2D".into(),
        ));
    }
    field.check_on(mesh)?;
    let rows = mesh
        .nodes()
        .zip(field.values())
        .map(|(x, u)| vec![x[0], *u]);
    write_csv(path, &["x", "u"], rows)
}

/// Legacy ASCII VTK unstructured grid with a point scalar `u`.
pub fn export_field_vtk(mesh: &Mesh, field: &FeField, path: &Path) -> Result<()> {
    field.check_on(mesh)?;
    write_vtk(mesh, Some(field), path)
}

/// Legacy ASCII VTK of the mesh alone.
pub fn export_mesh_vtk(mesh: &Mesh, path: &Path) -> Result<()> {
    write_vtk(mesh, None, path)
}

fn write_vtk(mesh: &Mesh, field: Option<&FeField>, path: &Path) -> Result<()> {
    if mesh.dim() != 2 {
        return Err(Error::UnsupportedFormat(
            "VTK export needs a 2D triangle mesh; 1D fields export as x,u CSV".into(),
        ));
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let ne = mesh.n_elements();
    writeln!(w, "# vtk DataFile Version 3.0").map_err(io)?;
    writeln!(w, "rd-optctl").map_err(io)?;
    writeln!(w, "ASCII").map_err(io)?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID").map_err(io)?;
    writeln!(w, "POINTS {} double", mesh.n_nodes()).map_err(io)?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} 0", format_f64(p[0]), format_f64(p[1])).map_err(io)?;
    }
    writeln!(w, "CELLS {} {}", ne, 4 * ne).map_err(io)?;
    for t in mesh.elements() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2]).map_err(io)?;
    }
    writeln!(w, "CELL_TYPES {ne}").map_err(io)?;
    for _ in 0..ne {
        writeln!(w, "5").map_err(io)?;
    }
    if let Some(f) = field {
        writeln!(w, "POINT_DATA {}", mesh.n_nodes()).map_err(io)?;
        writeln!(w, "SCALARS u double 1").map_err(io)?;
        writeln!(w, "LOOKUP_TABLE default").map_err(io)?;
        for v in f.values() {
            writeln!(w, "{}", format_f64(*v)).map_err(io)?;
        }
    }
    finish(path, w)
}

/// Writes the trajectory at each snapshot node as `<prefix>_<k>.csv` (1D) or
/// `<prefix>_<k>.vtk` (2D), returning the files written.
pub fn export_snapshots(
    mesh: &Mesh,
    traj: &SpaceTimeTrajectory,
    spec: &ExportSpec,
    prefix: &str,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for k in spec.snapshot_nodes(traj.grid())? {
        let field = traj.field(k);
        if mesh.dim() == 1 && spec.wants(ExportFormat::Csv) {
            let p = spec.path(&format!("{prefix}_{k:05}.csv"));
            export_field_csv(mesh, field, &p)?;
            written.push(p);
        }
        if mesh.dim() == 2 && spec.wants(ExportFormat::Vtk) {
            let p = spec.path(&format!("{prefix}_{k:05}.vtk"));
            export_field_vtk(mesh, field, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::DiffusionField;
    use crate::mesh::build_interval_mesh;
    use crate::optimize::{IterationRecord, Method};

    fn triangle() -> Mesh {
        Mesh::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 1, 2]).unwrap()
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 2.512566e-2, 1e-300, 6.02e23, f64::MIN_POSITIVE, 123456.789] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_f64(0.0), "0");
    }

    #[test]
    fn zero_control_rows() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let c = ControlTrajectory::constant(&grid, 0.0).unwrap();
        let p = dir.path().join("c.csv");
        write_control_csv(&grid, &c, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,C");
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.ends_with(",0")));
    }

    #[test]
    fn control_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::new(3.0, 7).unwrap();
        let vals: Vec<f64> = (0..8).map(|k| (k as f64 * 0.7).sin().abs() / 3.0).collect();
        let c = ControlTrajectory::new(vals).unwrap();
        let report = OptimizeReport {
            method: Method::GradientDescent,
            iterations: 2,
            per_iter: vec![
                IterationRecord {
                    objective: 1.5,
                    residual_norm: 0.1,
                    control_delta_norm: 0.2,
                },
                IterationRecord {
                    objective: 1.25,
                    residual_norm: 0.01,
                    control_delta_norm: 0.02,
                },
            ],
            final_control: c.clone(),
            converged: true,
        };
        let p = dir.path().join("control.csv");
        export_control_csv(&grid, &report, &p).unwrap();
        let (times, back) = read_control_csv(&p).unwrap();
        assert_eq!(back, c);
        for (k, t) in times.iter().enumerate() {
            assert_eq!(*t, grid.time(k));
        }
        let log = std::fs::read_to_string(dir.path().join("iterations.csv")).unwrap();
        assert_eq!(log.lines().next().unwrap(), "iter,J,residual_norm,delta_norm");
        assert_eq!(log.lines().count(), 3);
    }

    #[test]
    fn single_triangle_vtk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.vtk");
        let f = FeField::new(vec![0.0, 0.5, 1.0]).unwrap();
        export_field_vtk(&triangle(), &f, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let expect = "# vtk DataFile Version 3.0\nrd-optctl\nASCII\nDATASET UNSTRUCTURED_GRID\n\
POINTS 3 double\n0 0 0\n1 0 0\n0 1 0\nCELLS 1 4\n3 0 1 2\nCELL_TYPES 1\n5\n\
POINT_DATA 3\nSCALARS u double 1\nLOOKUP_TABLE default\n0\n0.5\n1\n";
        assert_eq!(text, expect);
    }

    #[test]
    fn one_dimensional_vtk_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = build_interval_mesh(2, 0.0, 1.0).unwrap();
        let f = FeField::zeros(3);
        let err = export_field_vtk(&mesh, &f, &dir.path().join("x.vtk"));
        assert!(matches!(err, Err(Error::UnsupportedFormat(_))));
        export_field_csv(&mesh, &f, &dir.path().join("x.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
        assert_eq!(text, "x,u\n0,0\n0.5,0\n1,0\n");
        assert!(matches!(
            export_field_csv(&triangle(), &FeField::zeros(3), &dir.path().join("y.csv")),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn burden_of_constant_states() {
        let mesh = build_interval_mesh(4, 0.0, 1.0).unwrap();
        let disc = Discretization::new(mesh, DiffusionField::Uniform(1.0)).unwrap();
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let ones = SpaceTimeTrajectory::frozen(grid, FeField::constant(5, 1.0));
        let (b, c) = burden_series(&disc, &ones);
        assert!(b.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!((c[8] - 2.0).abs() < 1e-14);
        let zeros = SpaceTimeTrajectory::frozen(grid, FeField::zeros(5));
        let (b, c) = burden_series(&disc, &zeros);
        assert!(b.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn snapshot_defaults_and_bounds() {
        let grid = TimeGrid::new(42.0, 420).unwrap();
        let mut spec = ExportSpec::new("out");
        assert_eq!(spec.snapshot_nodes(&grid).unwrap(), vec![0, 105, 210, 420]);
        spec.snapshot_times = Some(vec![10.0, 10.04, 20.0, 42.0]);
        assert_eq!(spec.snapshot_nodes(&grid).unwrap(), vec![100, 200, 420]);
        spec.snapshot_times = Some(vec![43.0]);
        assert!(spec.snapshot_nodes(&grid).is_err());
    }

    #[test]
    fn unwritable_path() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let c = ControlTrajectory::constant(&grid, 0.0).unwrap();
        let err = write_control_csv(&grid, &c, Path::new("/nonexistent-dir/c.csv"));
        assert!(matches!(err, Err(Error::Io { .. })));
    }
}
