//! Chain output storage, CSV ingestion and sample moments.
//!
//! A [`ChainMatrix`] holds `n` iterations of a `p`-dimensional chain in
//! row-major order. Autocovariances use the divide-by-`n` convention and are
//! centered at the full-sample mean, so `|γ̂(k)| <= γ̂(0)` always holds.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// `n × p` matrix of chain output, rows are iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl ChainMatrix {
    /// Builds a chain from row-major data.
    pub fn new(data: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidChain("p must be at least 1".into()));
        }
        if n < 2 {
            return Err(Error::InvalidChain(format!("need n >= 2 rows, got {n}")));
        }
        if data.len() != n * p {
            return Err(Error::Dimension {
                expected: n * p,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidChain(format!(
                "non-finite entry at row {}, column {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(ChainMatrix { data, n, p })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::NoRows)?;
        let p = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != p {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: p,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        ChainMatrix::new(data, rows.len(), p)
    }

    /// Single-component chain.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        ChainMatrix::new(values.to_vec(), values.len(), 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.p..(t + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.data[t * self.p + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }

    /// First `len` rows as a new chain.
    pub fn head(&self, len: usize) -> Result<ChainMatrix> {
        let len = len.min(self.n);
        ChainMatrix::new(self.data[..len * self.p].to_vec(), len, self.p)
    }

    /// Applies `f(t, i, value)` to every entry.
    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> Result<ChainMatrix> {
        let p = self.p;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(idx, &x)| f(idx / p, idx % p, x))
            .collect();
        ChainMatrix::new(data, self.n, self.p)
    }

    /// Reads a chain from a comma-separated file, one iteration per row.
    pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, has_header)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut data = Vec::new();
        let mut p = None;
        let mut n = 0usize;
        for record in rdr.records() {
            let record = record?;
            n += 1;
            let expected = *p.get_or_insert(record.len());
            if record.len() != expected {
                return Err(Error::RaggedRow {
                    row: n,
                    expected,
                    found: record.len(),
                });
            }
            for (j, cell) in record.iter().enumerate() {
                let value = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: n,
                        column: j + 1,
                        value: cell.to_string(),
                    })?;
                data.push(value);
            }
        }
        let p = p.ok_or(Error::NoRows)?;
        ChainMatrix::new(data, n, p)
    }

    /// Writes the chain as CSV using shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            let names: Vec<String> = (1..=self.p).map(|i| format!("y{i}")).collect();
            writeln!(out, "{}", names.join(","))?;
        }
        let mut line = String::new();
        for row in self.rows() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, header: bool) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out, header)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Column means `Ȳ`.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.p];
        for row in self.rows() {
            for (s, &x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        let n = self.n as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Column `i` minus its mean.
    pub fn centered_column(&self, i: usize) -> Vec<f64> {
        let col = self.column(i);
        let mean = col.iter().sum::<f64>() / self.n as f64;
        col.into_iter().map(|x| x - mean).collect()
    }

    /// Sample autocovariances `γ̂_i(0..=max_lag)` of one component.
    pub fn sample_autocovariance(&self, component: usize, max_lag: usize) -> Result<AcovSeries> {
        if component >= self.p {
            return Err(Error::InvalidArgument(format!(
                "component {component} out of range for p = {}",
                self.p
            )));
        }
        if max_lag >= self.n {
            return Err(Error::InvalidArgument(format!(
                "max_lag {max_lag} must be < n = {}",
                self.n
            )));
        }
        let x = self.centered_column(component);
        let values = (0..=max_lag).map(|k| autocovariance_centered(&x, k)).collect();
        Ok(AcovSeries {
            component,
            values,
            n: self.n,
        })
    }

    /// `max_i |γ̂_i(k) / γ̂_i(0)|`, skipping constant components.
    pub fn max_abs_crosscorrelation(&self, lag: usize) -> Result<f64> {
        if lag == 0 || lag >= self.n {
            return Err(Error::InvalidArgument(format!(
                "lag {lag} must satisfy 1 <= lag < n = {}",
                self.n
            )));
        }
        AutocorrelationScan::new(self)?.max_abs(lag)
    }
}

/// `n⁻¹ Σ_{t<n-k} x_t x_{t+k}` for an already-centered series.
pub(crate) fn autocovariance_centered(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    if k >= n {
        return 0.0;
    }
    let s: f64 = x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum();
    s / n as f64
}

/// Lag autocovariances of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct AcovSeries {
    pub component: usize,
    pub values: Vec<f64>,
    pub n: usize,
}

impl AcovSeries {
    pub fn variance(&self) -> f64 {
        self.values[0]
    }

    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    /// `γ̂(k)` for `|k| <= max_lag`, using evenness.
    pub fn at(&self, k: isize) -> f64 {
        self.values[k.unsigned_abs()]
    }
}

/// Lazily evaluated `ρ(k) = max_i |ρ̂_i(k)|` over the non-constant components.
///
/// Centered columns are computed once, so scanning many lags costs `O(n·p)`
/// per lag.
#[derive(Debug, Clone)]
pub struct AutocorrelationScan {
    columns: Vec<Vec<f64>>,
    variances: Vec<f64>,
    n: usize,
}

impl AutocorrelationScan {
    pub fn new(chain: &ChainMatrix) -> Result<Self> {
        let mut columns = Vec::new();
        let mut variances = Vec::new();
        for i in 0..chain.p() {
            let x = chain.centered_column(i);
            let v = autocovariance_centered(&x, 0);
            if v > 0.0 {
                columns.push(x);
                variances.push(v);
            }
        }
        if columns.is_empty() {
            return Err(Error::AllConstant);
        }
        Ok(AutocorrelationScan {
            columns,
            variances,
            n: chain.n(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_abs(&self, lag: usize) -> Result<f64> {
        if lag >= self.n {
            return Err(Error::InvalidArgument(format!(
                "lag {lag} must be < n = {}",
                self.n
            )));
        }
        Ok(self
            .columns
            .iter()
            .zip(&self.variances)
            .map(|(x, &v)| (autocovariance_centered(x, lag) / v).abs())
            .fold(0.0, f64::max))
    }
}
