//! Field, trajectory, trace, spectrum and report files.
//!
//! Fields are a small JSON manifest next to a raw little-endian `f64`
//! payload. Text output writes floats with 17 significant digits so that
//! identical runs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::mesh::Grid;
use crate::parabolic::{BoundaryTrace, ScalarTrajectory};
use crate::spectra::NeumannSpectrum;

const DTYPE: &str = "f64-le";

/// Formats a float so it round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldManifest {
    pub dim: usize,
    pub counts: Vec<usize>,
    pub extents: Vec<(f64, f64)>,
    pub dtype: String,
    pub payload: String,
}

impl FieldManifest {
    fn for_grid(grid: &Grid, payload: String) -> Self {
        Self {
            dim: grid.dim(),
            counts: grid.counts()[..grid.dim()].to_vec(),
            extents: grid.extents(),
            dtype: DTYPE.into(),
            payload,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.extents, &self.counts)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 8 * expected {
        return Err(Error::Format {
            path: path.into(),
            msg: format!(
                "payload holds {} bytes, expected {}",
                bytes.len(),
                8 * expected
            ),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn write_json_value<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.into(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_json_value<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        msg: e.to_string(),
    })
}

/// Writes `<stem>.json` and `<stem>.bin`; returns both paths.
pub fn write_field(stem: &Path, grid: &Grid, values: &[f64]) -> Result<Vec<PathBuf>> {
    grid.check_field(values)?;
    let json = stem.with_extension("json");
    let bin = stem.with_extension("bin");
    let name = bin
        .file_name()
        .expect("file name")
        .to_string_lossy()
        .into_owned();
    write_bytes(&bin, &encode(values))?;
    write_json_value(&json, &FieldManifest::for_grid(grid, name))?;
    Ok(vec![json, bin])
}

/// Reads a field from its JSON manifest.
pub fn read_field(manifest: &Path) -> Result<(Grid, Vec<f64>)> {
    let m: FieldManifest = read_json_value(manifest)?;
    if m.dtype != DTYPE {
        return Err(Error::Format {
            path: manifest.into(),
            msg: format!("unsupported dtype {}", m.dtype),
        });
    }
    let grid = m.grid()?;
    let bin = manifest.parent().unwrap_or(Path::new(".")).join(&m.payload);
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    let values = decode(&bin, &bytes, grid.len())?;
    Ok((grid, values))
}

/// Writes `rows` under `header` as CSV with round-trip float formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Node coordinates and values, one row per node.
pub fn write_field_csv(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    grid.check_field(values)?;
    let header: &[&str] = if grid.dim() == 1 {
        &["x", "value"]
    } else {
        &["x", "y", "value"]
    };
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .map(|k| {
            let c = grid.coords(k);
            let mut r = c[..grid.dim()].to_vec();
            r.push(values[k]);
            r
        })
        .collect();
    write_csv(path, header, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub time: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub dim: usize,
    pub counts: Vec<usize>,
    pub extents: Vec<(f64, f64)>,
    pub dtype: String,
    pub start: f64,
    pub dt: f64,
    pub stride: usize,
    pub snapshots: Vec<SnapshotEntry>,
}

/// Writes every `stride`-th snapshot (always including the last) into `dir`
/// with a `trajectory.json` manifest; returns all written paths.
pub fn write_trajectory(
    dir: &Path,
    traj: &ScalarTrajectory,
    stride: usize,
) -> Result<Vec<PathBuf>> {
    let stride = stride.max(1);
    let grid = traj.grid();
    let mut indices: Vec<usize> = (0..traj.len()).step_by(stride).collect();
    if indices.last() != Some(&(traj.len() - 1)) {
        indices.push(traj.len() - 1);
    }
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for &n in &indices {
        let file = format!("snapshot_{n:06}.bin");
        let path = dir.join(&file);
        write_bytes(&path, &encode(traj.snapshot(n)))?;
        written.push(path);
        entries.push(SnapshotEntry {
            index: n,
            time: traj.time(n),
            file,
        });
    }
    let manifest = TrajectoryManifest {
        dim: grid.dim(),
        counts: grid.counts()[..grid.dim()].to_vec(),
        extents: grid.extents(),
        dtype: DTYPE.into(),
        start: traj.start(),
        dt: traj.dt(),
        stride,
        snapshots: entries,
    };
    let path = dir.join("trajectory.json");
    write_json_value(&path, &manifest)?;
    written.insert(0, path);
    Ok(written)
}

/// Reads a trajectory written with stride 1, or the strided subsequence as
/// a trajectory with step `stride dt` when every stored index is a multiple
/// of the stride.
pub fn read_trajectory(dir: &Path) -> Result<ScalarTrajectory> {
    let path = dir.join("trajectory.json");
    let m: TrajectoryManifest = read_json_value(&path)?;
    let grid = Grid::new(m.dim, &m.extents, &m.counts)?;
    if m.snapshots
        .iter()
        .enumerate()
        .any(|(k, e)| e.index != k * m.stride)
    {
        return Err(Error::Format {
            path,
            msg: "stored snapshots are not uniformly spaced".into(),
        });
    }
    let snaps = m
        .snapshots
        .iter()
        .map(|e| {
            let p = dir.join(&e.file);
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            decode(&p, &bytes, grid.len())
        })
        .collect::<Result<Vec<_>>>()?;
    ScalarTrajectory::new(grid, m.start, m.dt * m.stride as f64, snaps)
}

/// Trace as CSV rows `(t, coordinates..., value)`.
pub fn write_trace_csv(path: &Path, trace: &BoundaryTrace) -> Result<()> {
    let dim = trace.grid.dim();
    let header: &[&str] = if dim == 1 {
        &["t", "x", "value"]
    } else {
        &["t", "x", "y", "value"]
    };
    let mut rows = Vec::with_capacity(trace.times.len() * trace.nodes.len());
    for (n, t) in trace.times.iter().enumerate() {
        for (j, &k) in trace.nodes.iter().enumerate() {
            let c = trace.grid.coords(k);
            let mut r = vec![*t];
            r.extend_from_slice(&c[..dim]);
            r.push(trace.values[n][j]);
            rows.push(r);
        }
    }
    write_csv(path, header, &rows)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json_value(path, value)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json_value(path)
}

/// A readable key identifying a grid, used to name cache files.
pub fn grid_key(grid: &Grid) -> String {
    let mut key = format!("d{}", grid.dim());
    for d in 0..grid.dim() {
        let (lo, hi) = grid.extent(d);
        key.push_str(&format!("_n{}_{}_{}", grid.count(d), lo, hi));
    }
    key
}

#[derive(Serialize, Deserialize)]
struct SpectrumHeader {
    key: String,
    size: usize,
    payload: String,
}

/// Loads the reference spectrum of `grid` from `cache_dir`, computing and
/// storing it on a miss.
pub fn cached_reference_spectrum(cache_dir: &Path, grid: &Grid) -> Result<NeumannSpectrum> {
    let key = grid_key(grid);
    let header_path = cache_dir.join(format!("spectrum_{key}.json"));
    let bin_path = cache_dir.join(format!("spectrum_{key}.bin"));
    if header_path.exists() && bin_path.exists() {
        let h: SpectrumHeader = read_json_value(&header_path)?;
        let n = grid.len();
        if h.key == key && h.size == n {
            let bytes = fs::read(&bin_path).map_err(io_err(&bin_path))?;
            let data = decode(&bin_path, &bytes, n + n * n)?;
            let vecs = DMatrix::from_column_slice(n, n, &data[n..]);
            return NeumannSpectrum::from_parts(grid.clone(), data[..n].to_vec(), vecs);
        }
    }
    let s = NeumannSpectrum::reference(grid)?;
    let mut data = s.eigenvalues().to_vec();
    data.extend_from_slice(s.eigenvectors().as_slice());
    write_bytes(&bin_path, &encode(&data))?;
    let payload = bin_path
        .file_name()
        .expect("file name")
        .to_string_lossy()
        .into_owned();
    write_json_value(
        &header_path,
        &SpectrumHeader {
            key,
            size: grid.len(),
            payload,
        },
    )?;
    Ok(s)
}

/// Appends text lines to a file, creating it when missing.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{EllipticOperator, Face, SubboundarySpec};
    use crate::parabolic::{extract_trace, solve_parabolic};

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, &[(0.0, 2.0), (-1.0, 1.0)], &[5, 4]).unwrap();
        let v = g.sample(|x| x[0] * x[1] + 0.1);
        let paths = write_field(&dir.path().join("f"), &g, &v).unwrap();
        assert_eq!(paths.len(), 2);
        let (g2, v2) = read_field(&paths[0]).unwrap();
        assert_eq!(g, g2);
        assert_eq!(v, v2);
    }

    #[test]
    fn trajectory_round_trip_and_stride() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit_interval(9).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let u = solve_parabolic(&op, &[0.3; 9], &g.sample(|x| 1.0 + x[0] * x[0]), 1.0, 20).unwrap();
        write_trajectory(&dir.path().join("full"), &u, 1).unwrap();
        assert_eq!(read_trajectory(&dir.path().join("full")).unwrap(), u);
        let files = write_trajectory(&dir.path().join("strided"), &u, 5).unwrap();
        assert_eq!(files.len(), 1 + 5);
        let s = read_trajectory(&dir.path().join("strided")).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.final_snapshot(), u.final_snapshot());
        assert!((s.dt() - 5.0 * u.dt()).abs() < 1e-15);
    }

    #[test]
    fn csv_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit_square(4).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let u = solve_parabolic(&op, &[0.0; 16], &[1.0; 16], 0.5, 4).unwrap();
        let gamma = SubboundarySpec::new(&g, &[Face::LEFT], None).unwrap();
        let tr = extract_trace(&u, &gamma).unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_trace_csv(&a, &tr).unwrap();
        write_trace_csv(&b, &tr).unwrap();
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(text, fs::read_to_string(&b).unwrap());
        assert!(text.starts_with("t,x,y,value\n"));
        assert_eq!(text.lines().count(), 1 + 5 * 4);
    }

    #[test]
    fn spectrum_cache_hit_matches_miss() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit_interval(17).unwrap();
        let first = cached_reference_spectrum(dir.path(), &g).unwrap();
        let second = cached_reference_spectrum(dir.path(), &g).unwrap();
        assert_eq!(first.eigenvalues(), second.eigenvalues());
        assert_eq!(first.eigenvectors(), second.eigenvectors());
        assert!(grid_key(&g).starts_with("d1_n17"));
    }

    #[test]
    fn malformed_payload() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit_interval(5).unwrap();
        let paths = write_field(&dir.path().join("f"), &g, &[1.0; 5]).unwrap();
        fs::write(&paths[1], [0u8; 7]).unwrap();
        assert!(matches!(read_field(&paths[0]), Err(Error::Format { .. })));
    }
}
