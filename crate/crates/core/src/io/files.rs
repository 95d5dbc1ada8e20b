use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, C64};
use crate::spectroscopy::{Spectrum, SpectrumMeta};

const SPECTRUM_HEADER: &str = "delta_over_omega,transfer_fraction";
const ARRAY_MAGIC: &str = "PPSARRAY1";

/// Columns of numbers with a header row and optional `#` comment lines.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str], columns: Vec<Vec<f64>>) -> Result<Self> {
        if headers.len() != columns.len() || columns.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::ShapeMismatch("table columns must match the header and each other".into()));
        }
        Ok(Self { comments: vec![], headers: headers.iter().map(|s| s.to_string()).collect(), columns })
    }

    pub fn with_comment(mut self, c: impl Into<String>) -> Self {
        self.comments.push(c.into());
        self
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|k| self.columns[k].as_slice())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }
}

/// Writes a table. Numbers use the shortest representation that reads back exactly.
pub fn write_table_csv(path: &Path, table: &Table) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for c in &table.comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{}", table.headers.join(","))?;
    for r in 0..table.rows() {
        let row: Vec<String> = table.columns.iter().map(|c| format!("{:?}", c[r])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table_csv(path: &Path) -> Result<Table> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut comments = vec![];
    let mut headers: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = vec![];
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            comments.push(c.trim_start().to_string());
            continue;
        }
        match &headers {
            None => {
                let h: Vec<String> = t.split(',').map(|s| s.trim().to_string()).collect();
                columns = vec![vec![]; h.len()];
                headers = Some(h);
            }
            Some(h) => {
                let vals: Vec<&str> = t.split(',').collect();
                if vals.len() != h.len() {
                    return Err(Error::Format(format!("line {}: expected {} fields, got {}", k + 1, h.len(), vals.len())));
                }
                for (col, v) in columns.iter_mut().zip(vals) {
                    col.push(v.trim().parse().map_err(|_| Error::Format(format!("line {}: bad number '{v}'", k + 1)))?);
                }
            }
        }
    }
    let headers = headers.ok_or_else(|| Error::Format("no header row".into()))?;
    Ok(Table { comments, headers, columns })
}

pub fn write_spectrum_csv(path: &Path, s: &Spectrum) -> Result<()> {
    let t = Table::new(&["delta_over_omega", "transfer_fraction"], vec![s.detunings.clone(), s.fractions.clone()])?
        .with_comment("units: delta_over_omega [omega], transfer_fraction [1]")
        .with_comment(format!("meta: {}", serde_json::to_string(&s.meta).map_err(|e| Error::Format(e.to_string()))?));
    write_table_csv(path, &t)
}

pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let t = read_table_csv(path)?;
    if t.headers.join(",") != SPECTRUM_HEADER {
        return Err(Error::Format(format!("expected header '{SPECTRUM_HEADER}', got '{}'", t.headers.join(","))));
    }
    let meta = t
        .comments
        .iter()
        .find_map(|c| c.strip_prefix("meta: "))
        .map(serde_json::from_str::<SpectrumMeta>)
        .transpose()
        .map_err(|e| Error::Format(e.to_string()))?
        .unwrap_or_default();
    let mut cols = t.columns.into_iter();
    Spectrum::new(cols.next().unwrap(), cols.next().unwrap(), meta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub shape: Vec<usize>,
    /// `f64` or `c64`, little endian, row major.
    pub dtype: String,
    pub axes: Vec<Axis>,
    pub unit: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl ArrayData {
    fn len(&self) -> usize {
        match self {
            ArrayData::Real(v) => v.len(),
            ArrayData::Complex(v) => v.len(),
        }
    }
}

/// Flat binary array behind a one-line JSON header.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayFile {
    pub header: ArrayHeader,
    pub data: ArrayData,
}

impl ArrayFile {
    pub fn real(shape: Vec<usize>, axes: Vec<Axis>, unit: &str, data: Vec<f64>) -> Result<Self> {
        Self::build(shape, axes, unit, ArrayData::Real(data))
    }

    pub fn complex(shape: Vec<usize>, axes: Vec<Axis>, unit: &str, data: Vec<C64>) -> Result<Self> {
        Self::build(shape, axes, unit, ArrayData::Complex(data))
    }

    fn build(shape: Vec<usize>, axes: Vec<Axis>, unit: &str, data: ArrayData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} holds {n} values, got {}", data.len())));
        }
        if axes.iter().zip(&shape).any(|(a, s)| a.values.len() != *s) || axes.len() > shape.len() {
            return Err(Error::ShapeMismatch("axis lengths must match the shape".into()));
        }
        let dtype = match data {
            ArrayData::Real(_) => "f64",
            ArrayData::Complex(_) => "c64",
        };
        Ok(Self {
            header: ArrayHeader { shape, dtype: dtype.into(), axes, unit: unit.into(), meta: serde_json::Value::Null },
            data,
        })
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.header.meta = meta;
        self
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match &self.data {
            ArrayData::Real(v) => Ok(v),
            ArrayData::Complex(_) => Err(Error::Format("expected a real array".into())),
        }
    }

    /// Real arrays are promoted.
    pub fn to_complex(&self) -> Vec<C64> {
        match &self.data {
            ArrayData::Real(v) => v.iter().map(|&x| C64::new(x, 0.0)).collect(),
            ArrayData::Complex(v) => v.clone(),
        }
    }
}

pub fn write_array(path: &Path, a: &ArrayFile) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = serde_json::to_string(&a.header).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w, "{ARRAY_MAGIC}")?;
    writeln!(w, "{header}")?;
    match &a.data {
        ArrayData::Real(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        ArrayData::Complex(v) => {
            for z in v {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<ArrayFile> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = String::new();
    r.read_line(&mut magic)?;
    if magic.trim_end() != ARRAY_MAGIC {
        return Err(Error::Format(format!("{} is not an array file", path.display())));
    }
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: ArrayHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(e.to_string()))?;
    let n: usize = header.shape.iter().product();
    let mut bytes = vec![];
    r.read_to_end(&mut bytes)?;
    let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let data = match header.dtype.as_str() {
        "f64" if bytes.len() == 8 * n => ArrayData::Real((0..n).map(f).collect()),
        "c64" if bytes.len() == 16 * n => ArrayData::Complex((0..n).map(|k| C64::new(f(2 * k), f(2 * k + 1))).collect()),
        d => return Err(Error::Format(format!("payload of {} bytes does not fit {n} values of {d}", bytes.len()))),
    };
    Ok(ArrayFile { header, data })
}

/// Rebuilds the sine-DVR grid whose points are `values`.
pub fn grid_from_axis(axis: &Axis) -> Result<Arc<Grid>> {
    let v = &axis.values;
    if v.len() < 2 {
        return Err(Error::InvalidGrid("axis needs at least two points".into()));
    }
    let dx = v[1] - v[0];
    let g = Grid::sine_dvr(v.len(), v[0] - dx, v[v.len() - 1] + dx)?;
    if g.points().iter().zip(v).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs())) {
        return Err(Error::InvalidGrid("axis is not uniformly spaced".into()));
    }
    Ok(Arc::new(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_round_trip_is_exact() {
        let d: Vec<f64> = (0..50).map(|k| -3.0 + k as f64 * 0.1234567891234567).collect();
        let f: Vec<f64> = d.iter().map(|x| (x.sin() * 0.5 + 0.5) * (1.0 - 1e-17)).collect();
        let s = Spectrum::new(d, f, SpectrumMeta { t_dark: Some(8.0), omega_r0: Some(1.0), ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_spectrum_csv(&p, &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().any(|l| l == SPECTRUM_HEADER));
        let back = read_spectrum_csv(&p).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn arrays_round_trip() {
        let g = Grid::sine_dvr(7, -2.0, 2.0).unwrap();
        let ax = Axis { name: "x".into(), unit: "alpha".into(), values: g.points().to_vec() };
        let data: Vec<C64> = (0..49).map(|k| C64::new(k as f64 / 3.0, -(k as f64).sqrt())).collect();
        let a = ArrayFile::complex(vec![7, 7], vec![ax.clone(), ax.clone()], "1/alpha", data)
            .unwrap()
            .with_meta(serde_json::json!({"t": 1.5}));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppsa");
        write_array(&p, &a).unwrap();
        assert_eq!(read_array(&p).unwrap(), a);
        let r = ArrayFile::real(vec![7], vec![ax.clone()], "1/alpha", vec![0.1; 7]).unwrap();
        write_array(&p, &r).unwrap();
        assert_eq!(read_array(&p).unwrap(), r);
        assert!(grid_from_axis(&ax).unwrap().same_as(&g));
        assert!(ArrayFile::real(vec![3], vec![], "", vec![1.0]).is_err());
    }

    #[test]
    fn bad_tables_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "a,b\n1,2\n3\n").unwrap();
        assert!(read_table_csv(&p).is_err());
        std::fs::write(&p, "x,y\n1,2\n").unwrap();
        assert!(read_spectrum_csv(&p).is_err());
    }
}
