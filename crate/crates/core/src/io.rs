//! Output formats.
//!
//! * CSV with a header row for every observable stream.
//! * Grid files: `#` comment lines, one line per axis (`name,v0,v1,...`),
//!   then the row-major values, one row of the first axis per line.
//! * Binary snapshots: `u64` rows, `u64` cols, then row-major `(re, im)` pairs
//!   of `f64`, all little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::classical::{AmplitudeChart, ClassicalSeries, StrobePoint};
use crate::error::{Error, Result};
use crate::master::MasterRun;
use crate::observables::{AutocorrelationSeries, Moments, WignerGrid};
use crate::qsd::{Ensemble, TrajectoryRecord};

/// Shortest round-trip text for a float, switching to exponent form for
/// very small or very large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes a numeric table with the given header.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("{}: bad number {s:?}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_classical_series(path: &Path, series: &ClassicalSeries) -> Result<()> {
    write_table(
        path,
        &["tau", "alpha_re", "alpha_im", "beta_re", "beta_im", "x", "p"],
        series.times.iter().zip(&series.states).map(|(&t, s)| {
            vec![t, s.alpha.re, s.alpha.im, s.beta.re, s.beta.im, s.x(), s.p()]
        }),
    )
}

pub fn write_strobe(path: &Path, points: &[StrobePoint]) -> Result<()> {
    write_table(
        path,
        &["tau", "x", "p", "radius"],
        points.iter().map(|s| vec![s.tau, s.x, s.p, s.x.hypot(s.p)]),
    )
}

const MOMENT_HEADER: [&str; 13] = [
    "tau", "x", "p", "sigma_x", "sigma_p", "product", "localized", "a_re", "a_im", "b_re", "b_im", "n_cav", "n_mech",
];

fn moment_row(t: f64, m: &Moments, floor: f64) -> Vec<f64> {
    let product = m.uncertainty_product();
    vec![
        t,
        m.x,
        m.p,
        m.sigma_x(),
        m.sigma_p(),
        product,
        if product < 2.0 * floor { 1.0 } else { 0.0 },
        m.a.re,
        m.a.im,
        m.b.re,
        m.b.im,
        m.n_cav,
        m.n_mech,
    ]
}

/// Per-time expectations of one trajectory; `localized` flags products within
/// a factor 2 of `floor`.
pub fn write_trajectory(path: &Path, record: &TrajectoryRecord, floor: f64) -> Result<()> {
    write_table(
        path,
        &MOMENT_HEADER,
        record.times.iter().zip(&record.moments).map(|(&t, m)| moment_row(t, m, floor)),
    )
}

pub fn write_ensemble(path: &Path, ens: &Ensemble, floor: f64) -> Result<()> {
    let mut header = MOMENT_HEADER.to_vec();
    header.extend(["x_stderr", "p_stderr", "n_cav_stderr", "n_mech_stderr"]);
    write_table(
        path,
        &header,
        ens.times.iter().zip(&ens.mean).zip(&ens.stderr).map(|((&t, m), e)| {
            let mut row = moment_row(t, m, floor);
            row.extend([e.x, e.p, e.n_cav, e.n_mech]);
            row
        }),
    )
}

pub fn write_master(path: &Path, run: &MasterRun, floor: f64) -> Result<()> {
    let mut header = MOMENT_HEADER.to_vec();
    header.extend(["trace", "hermiticity"]);
    write_table(
        path,
        &header,
        (0..run.times.len()).map(|i| {
            let mut row = moment_row(run.times[i], &run.moments[i], floor);
            row.extend([run.traces[i], run.hermiticity[i]]);
            row
        }),
    )
}

pub fn write_autocorrelation(path: &Path, series: &[AutocorrelationSeries]) -> Result<()> {
    write_table(
        path,
        &["tau", "lag", "R", "residual_bound", "stderr"],
        series.iter().flat_map(|s| {
            (0..s.lags.len()).map(move |i| vec![s.tau, s.lags[i], s.values[i], s.residual_bound[i], s.stderr[i]])
        }),
    )
}

/// Stable amplitudes per detuning, one row per branch point.
pub fn write_chart_branches(path: &Path, chart: &AmplitudeChart) -> Result<()> {
    write_table(
        path,
        &["detuning", "branch", "amplitude"],
        chart.detunings.iter().zip(&chart.branches).flat_map(|(&d, b)| {
            b.iter().enumerate().map(move |(k, &a)| vec![d, k as f64, a])
        }),
    )
}

/// Dense grid with two named axes; `values[i * cols.len() + j]` belongs to
/// `(rows[i], cols[j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub comment: String,
    pub row_name: String,
    pub rows: Vec<f64>,
    pub col_name: String,
    pub cols: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFile {
    pub fn from_wigner(w: &WignerGrid, comment: &str) -> Self {
        Self {
            comment: comment.to_owned(),
            row_name: "x".into(),
            rows: w.x.clone(),
            col_name: "p".into(),
            cols: w.p.clone(),
            values: w.values.clone(),
        }
    }

    /// Net power `P_rad − P_fric` over (detuning, amplitude).
    pub fn from_chart(chart: &AmplitudeChart, comment: &str) -> Self {
        Self {
            comment: comment.to_owned(),
            row_name: "detuning".into(),
            rows: chart.detunings.clone(),
            col_name: "amplitude".into(),
            cols: chart.amplitudes.clone(),
            values: chart.cells.iter().flatten().map(|c| c.net()).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if self.values.len() != self.rows.len() * self.cols.len() {
            return Err(Error::Dimension(format!(
                "grid values {} vs {}x{}",
                self.values.len(),
                self.rows.len(),
                self.cols.len()
            )));
        }
        let mut w = BufWriter::new(File::create(path)?);
        for line in self.comment.lines() {
            writeln!(w, "# {line}")?;
        }
        let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",");
        writeln!(w, "{},{}", self.row_name, join(&self.rows))?;
        writeln!(w, "{},{}", self.col_name, join(&self.cols))?;
        for row in self.values.chunks(self.cols.len().max(1)) {
            writeln!(w, "{}", join(row))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
        let mut comment = Vec::new();
        let mut data = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if let Some(c) = line.strip_prefix('#') {
                comment.push(c.strip_prefix(' ').unwrap_or(c).to_owned());
            } else if !line.trim().is_empty() {
                data.push(line);
            }
        }
        if data.len() < 2 {
            return Err(bad("missing axis lines".into()));
        }
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| bad(format!("bad number {t:?}: {e}"))))
                .collect()
        };
        let axis = |s: &str| -> Result<(String, Vec<f64>)> {
            let (name, rest) = s.split_once(',').ok_or_else(|| bad(format!("bad axis line {s:?}")))?;
            Ok((name.to_owned(), nums(rest)?))
        };
        let (row_name, rows) = axis(&data[0])?;
        let (col_name, cols) = axis(&data[1])?;
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for line in &data[2..] {
            let row = nums(line)?;
            if row.len() != cols.len() {
                return Err(bad(format!("row of {} values, expected {}", row.len(), cols.len())));
            }
            values.extend(row);
        }
        if values.len() != rows.len() * cols.len() {
            return Err(bad(format!("{} rows, expected {}", values.len() / cols.len().max(1), rows.len())));
        }
        Ok(Self {
            comment: comment.join("\n"),
            row_name,
            rows,
            col_name,
            cols,
            values,
        })
    }
}

pub fn write_snapshot(path: &Path, m: &DMatrix<C64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<DMatrix<C64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let word = |k: usize| -> [u8; 8] { bytes[8 * k..8 * k + 8].try_into().unwrap() };
    if bytes.len() < 16 {
        return Err(Error::Dimension(format!("{}: truncated header", path.display())));
    }
    let rows = u64::from_le_bytes(word(0)) as usize;
    let cols = u64::from_le_bytes(word(1)) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(16))
        .and_then(|n| n.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(Error::Dimension(format!(
            "{}: {} bytes for a {rows}x{cols} snapshot",
            path.display(),
            bytes.len()
        )));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 + 2 * (i * cols + j);
        C64::new(f64::from_le_bytes(word(k)), f64::from_le_bytes(word(k + 1)))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_text_round_trips() {
        for v in [0.0, -0.0, 1.0, 1e-300, -3.5e-7, 2.0f64.sqrt(), 1e20, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(0.25), "0.25");
    }

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let g = GridFile {
            comment: "wigner at tau = 0.4\nscaled units".into(),
            row_name: "x".into(),
            rows: vec![-1.0, 0.0, 1.0],
            col_name: "p".into(),
            cols: vec![0.5, 1.5],
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0, -6e-9],
        };
        g.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# wigner at tau = 0.4\n# scaled units\nx,-1,0,1\np,0.5,1.5\n1,2\n"));
        assert_eq!(GridFile::read(&path).unwrap(), g);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table(&path, &["a", "b"], vec![vec![1.0, 1e-12], vec![-0.5, 3.0]]).unwrap();
        let (h, rows) = read_table(&path).unwrap();
        assert_eq!(h, ["a", "b"]);
        assert_eq!(rows, vec![vec![1.0, 1e-12], vec![-0.5, 3.0]]);
    }

    #[test]
    fn snapshot_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let m = DMatrix::from_row_slice(1, 2, &[C64::new(1.0, 2.0), C64::new(3.0, 4.0)]);
        write_snapshot(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 32);
        assert_eq!(&bytes[..8], &1u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[40..48], &4.0f64.to_le_bytes());
        std::fs::write(&path, &bytes[..40]).unwrap();
        assert!(read_snapshot(&path).is_err());
    }

    proptest! {
        #[test]
        fn snapshot_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.bin");
            let m = DMatrix::from_fn(rows, cols, |i, j| {
                let k = (seed ^ (i * 31 + j) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                C64::new(k as f64 / u64::MAX as f64 - 0.5, (k >> 7) as f64 * 1e-19)
            });
            write_snapshot(&path, &m).unwrap();
            prop_assert_eq!(read_snapshot(&path).unwrap(), m);
        }
    }
}
