//! Environmental samples: parametric generation and CSV ingestion.
//!
//! Generation is deterministic. The generator is ChaCha20 (`rand_chacha`)
//! seeded through `SeedableRng::seed_from_u64`; each uniform variate is built
//! from the top 53 bits of one `next_u64` call as `(k + 0.5) / 2^53`, so it
//! lies strictly inside (0, 1). All transcendental functions on the sampling
//! path come from `libm` so that output is bit-identical across platforms.
//!
//! Dependence is modelled with a Gaussian copula only: independent standard
//! normals are correlated through the lower Cholesky factor of the
//! correlation matrix, mapped through Φ, then through each marginal's
//! inverse CDF.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// N observations of an n-dimensional environmental vector, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptyInput("sample matrix needs at least one row"));
        }
        if cols == 0 {
            return Err(Error::EmptyInput("sample matrix needs at least one column"));
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / cols + 1,
                column: pos % cols + 1,
                message: "non-finite value".into(),
            });
        }
        Ok(Self { values, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Parse {
                    row: i + 1,
                    column: row.len().min(cols) + 1,
                    message: format!("expected {cols} fields, found {}", row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    /// Sample count N.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Environment dimension n.
    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Inner products u'Vᵢ for every row.
    pub fn project(&self, direction: &[f64]) -> Result<Vec<f64>> {
        if direction.len() != self.cols {
            return Err(Error::Dimension {
                expected: self.cols,
                found: direction.len(),
            });
        }
        Ok(self
            .rows()
            .map(|r| r.iter().zip(direction).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, values)
    }

    /// Applies `f` to every row, producing a matrix of the same shape.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; self.values.len()];
        for (src, dst) in self.rows().zip(values.chunks_exact_mut(self.cols)) {
            f(src, dst);
        }
        Self::new(self.rows, self.cols, values)
    }
}

/// One marginal distribution of the environmental model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Marginal {
    Normal { mu: f64, sigma: f64 },
    /// `mu` and `sigma` are the parameters of the underlying normal.
    Lognormal { mu: f64, sigma: f64 },
    Weibull { shape: f64, scale: f64 },
    Uniform { a: f64, b: f64 },
    Exponential { rate: f64 },
}

impl Marginal {
    fn validate(&self, index: usize) -> Result<()> {
        let field = |name: &str| format!("marginals[{index}].{name}");
        let positive = |value: f64, name: &str| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field(name), format!("must be positive and finite, got {value}")))
            }
        };
        let finite = |value: f64, name: &str| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field(name), "must be finite"))
            }
        };
        match *self {
            Marginal::Normal { mu, sigma } | Marginal::Lognormal { mu, sigma } => {
                finite(mu, "mu")?;
                positive(sigma, "sigma")
            }
            Marginal::Weibull { shape, scale } => {
                positive(shape, "shape")?;
                positive(scale, "scale")
            }
            Marginal::Uniform { a, b } => {
                finite(a, "a")?;
                finite(b, "b")?;
                if a < b {
                    Ok(())
                } else {
                    Err(Error::config(field("b"), format!("need a < b, got a = {a}, b = {b}")))
                }
            }
            Marginal::Exponential { rate } => positive(rate, "rate"),
        }
    }

    /// Inverse CDF at `p`, where `q = 1 - p` is supplied separately so upper
    /// tails keep full precision.
    fn quantile(&self, p: f64, q: f64) -> f64 {
        match *self {
            Marginal::Normal { mu, sigma } => mu + sigma * normal::inverse_cdf(p),
            Marginal::Lognormal { mu, sigma } => libm::exp(mu + sigma * normal::inverse_cdf(p)),
            Marginal::Weibull { shape, scale } => scale * libm::pow(-libm::log(q), 1.0 / shape),
            Marginal::Uniform { a, b } => a + (b - a) * p,
            Marginal::Exponential { rate } => -libm::log(q) / rate,
        }
    }

    /// Maps a standard normal variate to this marginal.
    fn map_standard_normal(&self, z: f64) -> f64 {
        match *self {
            // F⁻¹(Φ(z)) reduces to an affine map for the normal family; skip the
            // round trip through Φ.
            Marginal::Normal { mu, sigma } => mu + sigma * z,
            Marginal::Lognormal { mu, sigma } => libm::exp(mu + sigma * z),
            _ => self.quantile(normal::cdf(z), normal::cdf(-z)),
        }
    }

    /// Analytic CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mu, sigma } => normal::cdf((x - mu) / sigma),
            Marginal::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal::cdf((x.ln() - mu) / sigma)
                }
            }
            Marginal::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-(x / scale).powf(shape)).exp()
                }
            }
            Marginal::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
        }
    }
}

/// Parametric model for V: independent marginals, optionally coupled by a
/// Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvModelConfig {
    pub marginals: Vec<Marginal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl EnvModelConfig {
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Checks every parameter and returns the copula factor, if any.
    pub fn validate(&self) -> Result<Option<DMatrix<f64>>> {
        if self.marginals.is_empty() {
            return Err(Error::config("marginals", "at least one marginal is required"));
        }
        for (i, m) in self.marginals.iter().enumerate() {
            m.validate(i)?;
        }
        let Some(rho) = &self.correlation else {
            return Ok(None);
        };
        let n = self.marginals.len();
        if rho.len() != n || rho.iter().any(|r| r.len() != n) {
            return Err(Error::config("correlation", format!("must be {n}x{n}")));
        }
        for i in 0..n {
            if (rho[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::config(
                    "correlation",
                    format!("diagonal entry {i} is {}, expected 1", rho[i][i]),
                ));
            }
            for j in 0..n {
                if !rho[i][j].is_finite() {
                    return Err(Error::config("correlation", "entries must be finite"));
                }
                if (rho[i][j] - rho[j][i]).abs() > 1e-12 {
                    return Err(Error::config(
                        "correlation",
                        format!("not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| rho[i][j]);
        let chol = matrix.cholesky().ok_or(Error::Factorization)?;
        Ok(Some(chol.l()))
    }
}

fn open_unit(rng: &mut ChaCha20Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((rng.next_u64() >> 11) as f64 + 0.5) * SCALE
}

/// Draws `count` rows from the model.
pub fn sample(config: &EnvModelConfig, count: usize) -> Result<SampleMatrix> {
    if count == 0 {
        return Err(Error::config("count", "must be at least 1"));
    }
    let factor = config.validate()?;
    let n = config.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut values = Vec::with_capacity(count * n);

    match factor {
        None => {
            for _ in 0..count {
                for m in &config.marginals {
                    let p = open_unit(&mut rng);
                    values.push(m.quantile(p, 1.0 - p));
                }
            }
        }
        Some(l) => {
            let mut z = DVector::zeros(n);
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = normal::inverse_cdf(open_unit(&mut rng));
                }
                let w = &l * &z;
                for (m, wi) in config.marginals.iter().zip(w.iter()) {
                    values.push(m.map_standard_normal(*wi));
                }
            }
        }
    }
    SampleMatrix::new(count, n, values)
}

/// Splits rows into an estimation set and a holdout set of
/// `round(fraction · N)` rows, after a seeded Fisher–Yates shuffle. A
/// fraction of 0 returns every row, in order, as the estimation set.
pub fn split_holdout(
    samples: &SampleMatrix,
    fraction: f64,
    seed: u64,
) -> Result<(SampleMatrix, Option<SampleMatrix>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config("holdout_fraction", format!("must lie in [0, 1), got {fraction}")));
    }
    if fraction == 0.0 {
        return Ok((samples.clone(), None));
    }
    let n = samples.len();
    let holdout = (fraction * n as f64).round() as usize;
    if holdout == 0 || holdout >= n {
        return Err(Error::config(
            "holdout_fraction",
            format!("splitting {n} samples at {fraction} leaves an empty part"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        // Lemire's multiply-shift maps a 64-bit draw onto 0..=i.
        let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
        order.swap(i, j);
    }
    let (estimation, rest) = order.split_at(n - holdout);
    Ok((samples.select_rows(estimation)?, Some(samples.select_rows(rest)?)))
}

/// Reads a comma-separated sample file. A first row in which no cell is
/// numeric is treated as a header and skipped.
pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_samples(file)
}

/// Parses the CSV sample format from any reader.
pub fn parse_samples(reader: impl std::io::Read) -> Result<SampleMatrix> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;
    for record in csv.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if first {
            first = false;
            if record.iter().all(|cell| cell.parse::<f64>().is_err()) {
                continue;
            }
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                row,
                column: record.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("non-finite value: {cell:?}"),
                });
            }
            values.push(value);
        }
    }
    let Some(cols) = width else {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "no data rows".into(),
        });
    };
    SampleMatrix::new(values.len() / cols, cols, values)
}

/// Writes the matrix in the CSV sample format, without a header. Values are
/// printed in shortest round-trip form, so reading the file back yields the
/// identical matrix.
pub fn write_samples(matrix: &SampleMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_samples_to(matrix, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_samples_to(matrix: &SampleMatrix, out: &mut impl Write) -> std::io::Result<()> {
    let mut buf = ryu::Buffer::new();
    for row in matrix.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.write_all(b",")?;
            }
            out.write_all(buf.format_finite(*v).as_bytes())?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SampleMatrix> {
        parse_samples(text.as_bytes())
    }

    fn uniform2(seed: u64) -> EnvModelConfig {
        EnvModelConfig {
            marginals: vec![Marginal::Uniform { a: 0.0, b: 1.0 }; 2],
            correlation: None,
            seed,
        }
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let a = sample(&uniform2(42), 3).unwrap();
        let b = sample(&uniform2(42), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.len(), a.dim()), (3, 2));
        assert_ne!(a, sample(&uniform2(43), 3).unwrap());
    }

    #[test]
    fn normal_mean_within_four_standard_errors() {
        let cfg = EnvModelConfig {
            marginals: vec![Marginal::Normal { mu: 5.0, sigma: 2.0 }],
            correlation: None,
            seed: 1,
        };
        let m = sample(&cfg, 100_000).unwrap();
        let mean = m.as_slice().iter().sum::<f64>() / 100_000.0;
        let bound = 4.0 * 2.0 / 100_000f64.sqrt();
        assert!((mean - 5.0).abs() < bound, "mean {mean}");
    }

    #[test]
    fn non_positive_definite_correlation_fails_factorization() {
        let cfg = EnvModelConfig {
            marginals: vec![Marginal::Normal { mu: 0.0, sigma: 1.0 }; 2],
            correlation: Some(vec![vec![1.0, 1.5], vec![1.5, 1.0]]),
            seed: 0,
        };
        assert!(matches!(sample(&cfg, 10), Err(Error::Factorization)));
    }

    #[test]
    fn invalid_parameters_name_the_field() {
        let cfg = EnvModelConfig {
            marginals: vec![
                Marginal::Exponential { rate: 1.0 },
                Marginal::Normal { mu: 0.0, sigma: -1.0 },
            ],
            correlation: None,
            seed: 0,
        };
        match sample(&cfg, 1) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "marginals[1].sigma"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = EnvModelConfig {
            marginals: vec![Marginal::Uniform { a: 1.0, b: 1.0 }],
            correlation: None,
            seed: 0,
        };
        assert!(matches!(sample(&cfg, 1), Err(Error::Config { .. })));
        assert!(matches!(sample(&uniform2(0), 0), Err(Error::Config { .. })));
    }

    #[test]
    fn asymmetric_or_bad_diagonal_correlation_rejected() {
        let mut cfg = uniform2(0);
        cfg.correlation = Some(vec![vec![1.0, 0.2], vec![0.3, 1.0]]);
        assert!(matches!(sample(&cfg, 1), Err(Error::Config { .. })));
        cfg.correlation = Some(vec![vec![2.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(sample(&cfg, 1), Err(Error::Config { .. })));
    }

    #[test]
    fn config_json_field_names() {
        let json = r#"{"marginals":[{"type":"weibull","shape":1.5,"scale":2.0},
            {"type":"lognormal","mu":0.0,"sigma":0.5}],
            "correlation":[[1.0,0.3],[0.3,1.0]],"seed":7}"#;
        let cfg: EnvModelConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.marginals[0], Marginal::Weibull { shape: 1.5, scale: 2.0 });
        let m = sample(&cfg, 500).unwrap();
        assert!(m.as_slice().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn parses_plain_rows() {
        let m = parse("1.0,2.0\n3.0,4.0").unwrap();
        assert_eq!(m, SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    }

    #[test]
    fn skips_header() {
        let m = parse("h,t\n1.0,2.0").unwrap();
        assert_eq!(m, SampleMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap());
    }

    #[test]
    fn ragged_row_reports_row_two() {
        match parse("1.0\n2.0,3.0") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_location() {
        match parse("1,2\n3,x\n") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("1,NaN\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_and_header_only_files_rejected() {
        assert!(matches!(parse(""), Err(Error::Parse { .. })));
        assert!(matches!(parse("a,b\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_format() {
        let m = SampleMatrix::from_rows(&[vec![0.0]]).unwrap();
        let mut out = Vec::new();
        write_samples_to(&m, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0.0\n");
    }

    #[test]
    fn round_trip_exact_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let m = SampleMatrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2e-300, 7.0e22]]).unwrap();
        write_samples(&m, &path).unwrap();
        assert_eq!(read_samples(&path).unwrap(), m);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let m = SampleMatrix::from_rows(&[vec![0.0]]).unwrap();
        let err = write_samples(&m, "/nonexistent-dir/x/y.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn holdout_split_partitions_rows() {
        let m = sample(&uniform2(3), 101).unwrap();
        let (est, hold) = split_holdout(&m, 0.5, 9).unwrap();
        let hold = hold.unwrap();
        assert_eq!((est.len(), hold.len()), (50, 51));
        let mut all: Vec<f64> = est.as_slice().iter().chain(hold.as_slice()).copied().collect();
        let mut orig = m.as_slice().to_vec();
        all.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(all, orig);
        assert_eq!(split_holdout(&m, 0.5, 9).unwrap().0, est);
        assert!(split_holdout(&m, 0.0, 9).unwrap().1.is_none());
        assert!(split_holdout(&m, 1.0, 9).is_err());
    }

    #[test]
    fn projection_and_dimension_check() {
        let m = SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        assert_eq!(m.project(&[1.0, 1.0]).unwrap(), vec![3.0, 2.0]);
        assert!(matches!(m.project(&[1.0]), Err(Error::Dimension { .. })));
    }
}
