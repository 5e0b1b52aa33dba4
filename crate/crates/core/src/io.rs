//! LIBSVM ingestion, synthetic problem generation and trace serialization.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::ColMatrix;
use crate::engine::{RoundTrace, SimulatedClock};
use crate::{rng, Error, Result};

/// Parses LIBSVM text (`label idx:val idx:val ...`, 1-based strictly ascending indices).
///
/// With `transpose_to_columns` every example becomes a row of `A` and every feature a
/// column, so the labels have length `n_rows`. Without it examples become columns.
/// `n_features` pads the feature dimension beyond the largest index seen.
pub fn parse_libsvm<R: BufRead>(
    reader: R,
    transpose_to_columns: bool,
    n_features: Option<usize>,
) -> Result<(ColMatrix, Vec<f64>)> {
    let mut labels = Vec::new();
    let mut examples: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_feature = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: lineno, msg };
        let mut tokens = trimmed.split_whitespace();
        let label_tok = tokens.next().ok_or_else(|| perr("missing label".into()))?;
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(perr(format!("non-finite label {label_tok:?}")));
        }
        let mut feats = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| perr(format!("bad index {idx:?}")))?;
            let val: f64 = val.parse().map_err(|_| perr(format!("bad value {val:?}")))?;
            if idx == 0 {
                return Err(perr("indices are 1-based".into()));
            }
            if idx <= last {
                return Err(perr(format!("index {idx} not ascending after {last}")));
            }
            if !val.is_finite() {
                return Err(perr(format!("non-finite value at index {idx}")));
            }
            last = idx;
            feats.push((idx - 1, val));
        }
        max_feature = max_feature.max(last);
        labels.push(label);
        examples.push(feats);
    }
    if labels.is_empty() {
        return Err(Error::Parse { line: 0, msg: "no examples".into() });
    }
    let n_feat = max_feature.max(n_features.unwrap_or(0));
    let m = if transpose_to_columns {
        let mut columns = vec![Vec::new(); n_feat];
        for (row, feats) in examples.into_iter().enumerate() {
            for (f, x) in feats {
                columns[f].push((row, x));
            }
        }
        ColMatrix::from_columns(labels.len(), columns)?
    } else {
        ColMatrix::from_columns(n_feat, examples)?
    };
    Ok((m, labels))
}

pub fn read_libsvm(path: impl AsRef<Path>, transpose_to_columns: bool) -> Result<(ColMatrix, Vec<f64>)> {
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file), transpose_to_columns, None)
}

/// Writes `A` (examples as rows) and labels in LIBSVM format.
pub fn write_libsvm_to<W: Write>(mut out: W, m: &ColMatrix, labels: &[f64]) -> Result<()> {
    if labels.len() != m.n_rows() {
        return Err(Error::DimensionMismatch { expected: m.n_rows(), got: labels.len() });
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m.n_rows()];
    for i in 0..m.n_cols() {
        let (rs, vs) = m.column(i);
        for (&r, &x) in rs.iter().zip(vs) {
            rows[r].push((i, x));
        }
    }
    for (label, row) in labels.iter().zip(&rows) {
        write!(out, "{label}")?;
        for &(i, x) in row {
            write!(out, " {}:{}", i + 1, x)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_libsvm(path: impl AsRef<Path>, m: &ColMatrix, labels: &[f64]) -> Result<()> {
    write_libsvm_to(BufWriter::new(File::create(path)?), m, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of columns (variables).
    pub n: usize,
    /// Number of rows (examples).
    pub d: usize,
    pub density: f64,
    pub true_nnz: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 || self.d == 0 {
            return bad("n and d must be positive".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density must lie in (0, 1], got {}", self.density));
        }
        if self.true_nnz > self.n {
            return bad(format!("true_nnz = {} exceeds n = {}", self.true_nnz, self.n));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// `b = Aα* + noise`.
    Regression,
    /// `b = sign(Aα* + noise)` in `{−1, +1}`.
    Classification,
}

/// Sparse Gaussian design with a planted sparse coefficient vector.
/// Returns `(A, b, α*)`.
pub fn gen_synthetic(spec: &SyntheticSpec, kind: LabelKind) -> Result<(ColMatrix, Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let columns: Vec<Vec<(usize, f64)>> = (0..spec.n)
        .map(|_| {
            (0..spec.d)
                .filter_map(|r| {
                    if spec.density >= 1.0 || rng.random::<f64>() < spec.density {
                        Some((r, rng.sample::<f64, _>(StandardNormal)))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let m = ColMatrix::from_columns(spec.d, columns)?;
    let mut truth = vec![0.0; spec.n];
    for i in rand::seq::index::sample(&mut rng, spec.n, spec.true_nnz) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        truth[i] = sign * (0.5 + rng.random::<f64>());
    }
    let clean = m.mat_vec(&truth)?;
    let labels = clean
        .into_iter()
        .map(|x| {
            let y = x + spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
            match kind {
                LabelKind::Regression => y,
                LabelKind::Classification => {
                    if y >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            }
        })
        .collect();
    Ok((m, labels, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Csv,
    Json,
}

/// One serialized trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub elapsed_ms: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub nnz: usize,
    pub local_updates: usize,
    pub theta: Option<f64>,
}

pub const TRACE_HEADER: [&str; 8] =
    ["round", "elapsed_ms", "primal", "dual", "gap", "nnz", "local_updates", "theta"];

/// Source of the `elapsed_ms` column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceClock {
    /// Measured wall-clock time since the start of the solve.
    Wall,
    /// Deterministic model time.
    Simulated(SimulatedClock),
}

pub fn trace_records(trace: &[RoundTrace], clock: TraceClock) -> Vec<TraceRecord> {
    trace
        .iter()
        .map(|t| TraceRecord {
            round: t.round,
            elapsed_ms: match clock {
                TraceClock::Wall => t.elapsed.as_secs_f64() * 1e3,
                TraceClock::Simulated(c) => c.elapsed_ms(t.round, t.critical_updates),
            },
            primal: t.primal,
            dual: t.dual,
            gap: t.gap,
            nnz: t.nnz,
            local_updates: t.local_updates,
            theta: t.theta_estimate,
        })
        .collect()
}

pub fn write_trace_to<W: Write>(out: W, records: &[TraceRecord], format: TraceFormat) -> Result<()> {
    match format {
        TraceFormat::Csv => {
            let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            wtr.write_record(TRACE_HEADER)?;
            for r in records {
                wtr.serialize(r)?;
            }
            wtr.flush()?;
        }
        TraceFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, records)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn write_trace(records: &[TraceRecord], path: impl AsRef<Path>, format: TraceFormat) -> Result<()> {
    write_trace_to(BufWriter::new(File::create(path)?), records, format)
}

pub fn read_trace_from<R: Read>(input: R, format: TraceFormat) -> Result<Vec<TraceRecord>> {
    match format {
        TraceFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(input);
            let header = rdr.headers()?.clone();
            if header.iter().ne(TRACE_HEADER) {
                return Err(Error::Parse { line: 1, msg: format!("unexpected header {header:?}") });
            }
            Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
        }
        TraceFormat::Json => Ok(serde_json::from_reader(input)?),
    }
}

pub fn read_trace(path: impl AsRef<Path>, format: TraceFormat) -> Result<Vec<TraceRecord>> {
    read_trace_from(BufReader::new(File::open(path)?), format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_small_file() {
        let (m, b) = parse_libsvm("1 1:0.5\n-1 2:1.0\n".as_bytes(), true, None).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (2, 2));
        assert_eq!(b, vec![1.0, -1.0]);
        assert_eq!(m.to_dense_rows(), vec![vec![0.5, 0.0], vec![0.0, 1.0]]);

        let (mt, bt) = parse_libsvm("1 1:0.5 3:2\n-1 2:1.0\n".as_bytes(), false, None).unwrap();
        assert_eq!((mt.n_rows(), mt.n_cols()), (3, 2));
        assert_eq!(bt.len(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse_libsvm("".as_bytes(), true, None), Err(Error::Parse { .. })));
        let err = parse_libsvm("1 1:0.5\n1 3:1 2:1\n".as_bytes(), true, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_libsvm("1 1:0.5\n\nx 1:1\n".as_bytes(), true, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(parse_libsvm("1 0:1\n".as_bytes(), true, None).is_err());
        assert!(parse_libsvm("1 1-1\n".as_bytes(), true, None).is_err());
        assert!(parse_libsvm("1 1:1 1:2\n".as_bytes(), true, None).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_dense_when_asked() {
        let spec = SyntheticSpec { n: 20, d: 15, density: 1.0, true_nnz: 3, noise_sd: 0.0, seed: 4 };
        let (m, b, truth) = gen_synthetic(&spec, LabelKind::Regression).unwrap();
        assert_eq!(m.nnz(), 20 * 15);
        assert_eq!(truth.iter().filter(|&&x| x != 0.0).count(), 3);
        assert_eq!(m.mat_vec(&truth).unwrap(), b);
        let again = gen_synthetic(&spec, LabelKind::Regression).unwrap();
        assert_eq!((m, b, truth), again);

        let (_, c, _) = gen_synthetic(&spec, LabelKind::Classification).unwrap();
        assert!(c.iter().all(|&x| x == 1.0 || x == -1.0));

        let bad = SyntheticSpec { true_nnz: 21, ..spec };
        assert!(gen_synthetic(&bad, LabelKind::Regression).is_err());
    }

    #[test]
    fn trace_csv_shapes() {
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &[], TraceFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "round,elapsed_ms,primal,dual,gap,nnz,local_updates,theta\n");

        let rec = TraceRecord {
            round: 3,
            elapsed_ms: 1.5,
            primal: 0.1 + 0.2,
            dual: -1e-300,
            gap: 1.0 / 3.0,
            nnz: 2,
            local_updates: 40,
            theta: None,
        };
        let mut buf = Vec::new();
        write_trace_to(&mut buf, std::slice::from_ref(&rec), TraceFormat::Csv).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_trace_from(&buf[..], TraceFormat::Csv).unwrap(), vec![rec.clone()]);

        let mut js = Vec::new();
        let with_theta = TraceRecord { theta: Some(0.25), ..rec };
        write_trace_to(&mut js, std::slice::from_ref(&with_theta), TraceFormat::Json).unwrap();
        assert_eq!(read_trace_from(&js[..], TraceFormat::Json).unwrap(), vec![with_theta]);
    }
}
