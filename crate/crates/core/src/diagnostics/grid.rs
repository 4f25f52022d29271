//! Uniform velocity grids and their on-disk formats.
//!
//! Values live at cell centres, row-major with the first axis slowest.
//!
//! CSV layout:
//!
//! ```text
//! # density-grid dim=2 n=128 lo=-8,-8 hi=8,8
//! v1,v2,value
//! -7.9375000000000000e0,-7.9375000000000000e0,1.2345678901234567e-30
//! ...
//! ```
//!
//! Binary layout (all little-endian): `dim: u64`, then `lo, hi: f64` for each
//! axis, then `n: u64` cells per axis, then `n^dim` values as `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Geometry of a uniform grid: `n` cells per axis over `[lo_a, hi_a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: usize,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: usize) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid("grid", "lo and hi have different lengths"));
        }
        crate::check_dim(lo.len())?;
        if n == 0 {
            return Err(Error::invalid("grid", "need at least one cell per axis"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && h > l))
        {
            return Err(Error::invalid("grid", "each axis needs finite lo < hi"));
        }
        Ok(Self { lo, hi, n })
    }

    /// `[lo, hi]^dim` with `n` cells per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], n)
    }

    /// `[-8, 8]^dim`, 128 cells per axis in 2D and 64 in 3D.
    pub fn default_for(dim: usize) -> Result<Self> {
        let n = if dim == 2 { 128 } else { 64 };
        Self::cube(dim, -8.0, 8.0, n)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.n as f64
    }

    /// `h^d`, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn num_cells(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    /// Centre coordinate of cell `l` along `axis`.
    pub fn center(&self, axis: usize, l: usize) -> f64 {
        self.lo[axis] + (l as f64 + 0.5) * self.spacing(axis)
    }

    /// Centre of the cell with flat (row-major) index `flat`.
    pub fn center_of(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for axis in (0..self.dim()).rev() {
            out[axis] = self.center(axis, rem % self.n);
            rem /= self.n;
        }
    }

    pub fn is_congruent(&self, other: &GridSpec) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
        };
        self.n == other.n && self.dim() == other.dim() && close(&self.lo, &other.lo) && close(&self.hi, &other.hi)
    }
}

/// Grid-sampled density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        let values = vec![0.0; spec.num_cells()];
        Self { spec, values }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_cells() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid with {} cells",
                values.len(),
                spec.num_cells()
            )));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut center = vec![0.0; spec.dim()];
        let values = (0..spec.num_cells())
            .map(|flat| {
                spec.center_of(flat, &mut center);
                f(&center)
            })
            .collect();
        Self { spec, values }
    }

    /// Riemann sum `sum h^d f`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let dim = self.spec.dim();
        writeln!(
            w,
            "# density-grid dim={dim} n={} lo={} hi={}",
            self.spec.n,
            join(&self.spec.lo),
            join(&self.spec.hi)
        )
        .map_err(io_err)?;
        let header: Vec<String> = (1..=dim)
            .map(|a| format!("v{a}"))
            .chain(["value".to_string()])
            .collect();
        writeln!(w, "{}", header.join(",")).map_err(io_err)?;
        let mut center = vec![0.0; dim];
        for (flat, value) in self.values.iter().enumerate() {
            self.spec.center_of(flat, &mut center);
            for c in &center {
                write!(w, "{c:.16e},").map_err(io_err)?;
            }
            writeln!(w, "{value:.16e}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let fail = |line: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            location: format!("line {line}"),
            message,
        };
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(text))) => Ok((i + 1, text)),
                Some((i, Err(e))) => Err(fail(i + 1, e.to_string())),
                None => Err(fail(0, format!("unexpected end of file, expected {what}"))),
            }
        };

        let (lineno, meta) = next_line("metadata line")?;
        let spec = parse_metadata(&meta).map_err(|m| fail(lineno, m))?;
        let dim = spec.dim();
        let (lineno, header) = next_line("column header")?;
        if header.split(',').count() != dim + 1 {
            return Err(fail(lineno, format!("expected {} columns in header", dim + 1)));
        }

        let mut values = Vec::with_capacity(spec.num_cells());
        let mut center = vec![0.0; dim];
        for flat in 0..spec.num_cells() {
            let (lineno, row) = next_line("data row")?;
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(fail(
                    lineno,
                    format!("expected {} fields, found {}", dim + 1, fields.len()),
                ));
            }
            let parsed: Vec<f64> = fields
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fail(lineno, format!("bad number: {e}")))?;
            spec.center_of(flat, &mut center);
            for axis in 0..dim {
                if (parsed[axis] - center[axis]).abs() > 1e-6 * spec.spacing(axis) {
                    return Err(fail(
                        lineno,
                        format!(
                            "cell centre {} does not match the grid header ({})",
                            parsed[axis], center[axis]
                        ),
                    ));
                }
            }
            values.push(parsed[dim]);
        }
        if let Ok((lineno, extra)) = next_line("nothing") {
            if !extra.trim().is_empty() {
                return Err(fail(lineno, "trailing data after the last cell".into()));
            }
        }
        Ok(Self { spec, values })
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        w.write_all(&(self.spec.dim() as u64).to_le_bytes()).map_err(io_err)?;
        for (lo, hi) in self.spec.lo.iter().zip(&self.spec.hi) {
            w.write_all(&lo.to_le_bytes()).map_err(io_err)?;
            w.write_all(&hi.to_le_bytes()).map_err(io_err)?;
        }
        w.write_all(&(self.spec.n as u64).to_le_bytes()).map_err(io_err)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let mut cursor = ByteCursor {
            bytes: &bytes,
            offset: 0,
            path,
        };
        let dim = cursor.u64("dim")? as usize;
        if dim != 2 && dim != 3 {
            return Err(cursor.fail(0, format!("dimension {dim} is not 2 or 3")));
        }
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for _ in 0..dim {
            lo.push(cursor.f64("lo")?);
            hi.push(cursor.f64("hi")?);
        }
        let n_offset = cursor.offset;
        let n = cursor.u64("n")? as usize;
        let spec = GridSpec::new(lo, hi, n).map_err(|e| cursor.fail(n_offset, e.to_string()))?;
        let expected = spec.num_cells();
        let remaining = bytes.len() - cursor.offset;
        if remaining != 8 * expected {
            return Err(cursor.fail(
                cursor.offset,
                format!("expected {} bytes of values, found {remaining}", 8 * expected),
            ));
        }
        let values = (0..expected).map(|_| cursor.f64("value")).collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, values })
    }

    /// Reads CSV when the extension is `.csv`, the binary layout otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::read_csv(path)
        } else {
            Self::read_binary(path)
        }
    }

    /// Writes CSV when the extension is `.csv`, the binary layout otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.write_csv(path)
        } else {
            self.write_binary(path)
        }
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl ByteCursor<'_> {
    fn fail(&self, offset: usize, message: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            location: format!("byte {offset}"),
            message,
        }
    }

    fn take8(&mut self, what: &str) -> Result<[u8; 8]> {
        let end = self.offset + 8;
        let chunk = self
            .bytes
            .get(self.offset..end)
            .ok_or_else(|| self.fail(self.offset, format!("truncated file while reading {what}")))?;
        self.offset = end;
        Ok(chunk.try_into().expect("8-byte slice"))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take8(what).map(u64::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take8(what).map(f64::from_le_bytes)
    }
}

fn parse_metadata(line: &str) -> std::result::Result<GridSpec, String> {
    let body = line
        .strip_prefix("# density-grid")
        .ok_or_else(|| "missing `# density-grid` metadata line".to_string())?;
    let (mut dim, mut n, mut lo, mut hi) = (None, None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("malformed field `{field}`"))?;
        let list = |v: &str| -> std::result::Result<Vec<f64>, String> {
            v.split(',')
                .map(|x| x.parse::<f64>().map_err(|e| format!("bad `{key}`: {e}")))
                .collect()
        };
        match key {
            "dim" => dim = Some(value.parse::<usize>().map_err(|e| format!("bad dim: {e}"))?),
            "n" => n = Some(value.parse::<usize>().map_err(|e| format!("bad n: {e}"))?),
            "lo" => lo = Some(list(value)?),
            "hi" => hi = Some(list(value)?),
            _ => return Err(format!("unknown metadata key `{key}`")),
        }
    }
    let dim = dim.ok_or("metadata lacks dim")?;
    let lo = lo.ok_or("metadata lacks lo")?;
    let hi = hi.ok_or("metadata lacks hi")?;
    if lo.len() != dim || hi.len() != dim {
        return Err(format!("dim={dim} but lo/hi have {}/{} entries", lo.len(), hi.len()));
    }
    GridSpec::new(lo, hi, n.ok_or("metadata lacks n")?).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> DensityGrid {
        let spec = GridSpec::new(vec![-1.0, 0.0], vec![1.0, 3.0], 5).unwrap();
        DensityGrid::from_fn(spec, |v| (v[0] * 1.7 + v[1]).exp() / 3.0 + 1e-300)
    }

    #[test]
    fn spec_geometry() {
        let spec = GridSpec::cube(2, -8.0, 8.0, 128).unwrap();
        assert_eq!(spec.spacing(0), 0.125);
        assert_eq!(spec.cell_volume(), 0.125 * 0.125);
        assert_eq!(spec.center(1, 0), -7.9375);
        let mut c = [0.0; 2];
        spec.center_of(129, &mut c);
        assert_eq!(c, [-7.8125, -7.8125]);
        assert!(GridSpec::cube(4, 0.0, 1.0, 2).is_err());
        assert!(GridSpec::cube(2, 1.0, 0.0, 2).is_err());
    }

    #[test]
    fn csv_and_binary_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let grid = sample_grid();
        for name in ["g.csv", "g.bin"] {
            let path = dir.path().join(name);
            grid.save(&path).unwrap();
            let back = DensityGrid::load(&path).unwrap();
            assert_eq!(back.spec, grid.spec);
            let same = back
                .values
                .iter()
                .zip(&grid.values)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{name}");
        }
    }

    #[test]
    fn truncated_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let grid = sample_grid();

        let bin = dir.path().join("g.bin");
        grid.write_binary(&bin).unwrap();
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
        let err = DensityGrid::load(&bin).unwrap_err();
        assert!(
            matches!(&err, Error::Format { location, .. } if location.starts_with("byte")),
            "{err}"
        );
        std::fs::write(&bin, &bytes[..12]).unwrap();
        assert!(matches!(DensityGrid::load(&bin), Err(Error::Format { .. })));

        let csv = dir.path().join("g.csv");
        grid.write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        std::fs::write(&csv, cut).unwrap();
        assert!(matches!(DensityGrid::load(&csv), Err(Error::Format { .. })));
    }

    #[test]
    fn corrupted_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("g.csv");
        sample_grid().write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let broken: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 4 {
                    "0.0,abc,1.0".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect();
        std::fs::write(&csv, broken.join("\n")).unwrap();
        match DensityGrid::load(&csv) {
            Err(Error::Format { location, .. }) => assert_eq!(location, "line 5"),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&csv, "v1,v2,value\n").unwrap();
        assert!(matches!(DensityGrid::load(&csv), Err(Error::Format { .. })));
    }

    #[test]
    fn value_count_must_match() {
        let spec = GridSpec::cube(2, 0.0, 1.0, 3).unwrap();
        assert!(matches!(
            DensityGrid::from_values(spec, vec![0.0; 8]),
            Err(Error::GridMismatch(_))
        ));
    }
}
