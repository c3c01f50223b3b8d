//! Decimal-text file formats.
//!
//! Feature file: first line `n d`, then `n` lines of `d` space-separated
//! values. Label file: one nonnegative integer per line. Model file:
//!
//! ```text
//! PKT-MODEL v1
//! dims d0 d1 ... dk
//! <d0 lines of d1 weights>
//! <1 line of d1 biases>
//! ...
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::affinity::FeatureMatrix;
use crate::error::{PktError, Result};
use crate::student::{Layer, StudentModel};
use crate::trainer::LossRecord;

pub const MODEL_HEADER: &str = "PKT-MODEL v1";

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(line: usize, msg: impl Into<String>) -> PktError {
    PktError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(reader: impl Read) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_values(line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let vals = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("not a finite number: {t:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != expected {
        return Err(parse_err(
            line_no,
            format!("expected {expected} values, found {}", vals.len()),
        ));
    }
    Ok(vals)
}

fn parse_count(line_no: usize, tok: Option<&str>, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| parse_err(line_no, format!("missing or invalid {what}")))
}

pub fn read_features(reader: impl Read) -> Result<FeatureMatrix> {
    let lines = content_lines(reader)?;
    let (hline, header) = lines
        .first()
        .ok_or_else(|| parse_err(1, "empty feature file"))?;
    let mut toks = header.split_whitespace();
    let n = parse_count(*hline, toks.next(), "row count")?;
    let d = parse_count(*hline, toks.next(), "dimension")?;
    if toks.next().is_some() {
        return Err(parse_err(*hline, "header must be `n d`"));
    }
    if n == 0 || d == 0 {
        return Err(parse_err(*hline, "n and d must be >= 1"));
    }
    let body = &lines[1..];
    if body.len() != n {
        return Err(parse_err(
            *hline,
            format!("header declares {n} rows, found {}", body.len()),
        ));
    }
    let mut flat = Vec::with_capacity(n * d);
    for (no, line) in body {
        flat.extend(parse_values(*no, line, d)?);
    }
    FeatureMatrix::new(Array2::from_shape_vec((n, d), flat).expect("n*d values collected"))
}

pub fn write_features(mut w: impl Write, feats: &FeatureMatrix) -> Result<()> {
    writeln!(w, "{} {}", feats.rows(), feats.dim())?;
    for i in 0..feats.rows() {
        let line: Vec<String> = feats.row(i).iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_labels(reader: impl Read) -> Result<Vec<usize>> {
    content_lines(reader)?
        .into_iter()
        .map(|(no, line)| {
            line.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(no, format!("not a nonnegative integer: {:?}", line.trim())))
        })
        .collect()
}

pub fn write_labels(mut w: impl Write, labels: &[usize]) -> Result<()> {
    for l in labels {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

pub fn read_model(reader: impl Read) -> Result<StudentModel> {
    let lines = content_lines(reader)?;
    let mut it = lines.iter();
    match it.next() {
        Some((_, h)) if h.trim() == MODEL_HEADER => {}
        Some((no, _)) => return Err(parse_err(*no, format!("expected `{MODEL_HEADER}`"))),
        None => return Err(parse_err(1, "empty model file")),
    }
    let (dno, dline) = it.next().ok_or_else(|| parse_err(2, "missing dims line"))?;
    let mut toks = dline.split_whitespace();
    if toks.next() != Some("dims") {
        return Err(parse_err(*dno, "expected `dims d0 d1 ...`"));
    }
    let dims = toks
        .map(|t| t.parse::<usize>().ok().filter(|&d| d > 0))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| parse_err(*dno, "invalid layer size"))?;
    if dims.len() < 2 {
        return Err(parse_err(*dno, "need at least two layer sizes"));
    }

    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut flat = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in {
            let (no, line) = it
                .next()
                .ok_or_else(|| parse_err(*dno, "truncated weights"))?;
            flat.extend(parse_values(*no, line, fan_out)?);
        }
        let (no, line) = it
            .next()
            .ok_or_else(|| parse_err(*dno, "truncated biases"))?;
        let bias = parse_values(*no, line, fan_out)?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((fan_in, fan_out), flat).expect("fan_in*fan_out values"),
            bias: Array1::from(bias),
        });
    }
    if let Some((no, _)) = it.next() {
        return Err(parse_err(*no, "trailing content after last layer"));
    }
    StudentModel::from_layers(layers)
}

pub fn write_model(mut w: impl Write, model: &StudentModel) -> Result<()> {
    writeln!(w, "{MODEL_HEADER}")?;
    let dims: Vec<String> = model.dims().iter().map(usize::to_string).collect();
    writeln!(w, "dims {}", dims.join(" "))?;
    for layer in model.layers() {
        for row in layer.weight.rows() {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        let line: Vec<String> = layer.bias.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// One `epoch batch loss` line per record.
pub fn write_loss_trace(mut w: impl Write, trace: &[LossRecord]) -> Result<()> {
    for r in trace {
        writeln!(w, "{} {} {}", r.epoch, r.batch, fmt_f64(r.loss))?;
    }
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    read_features(File::open(path)?)
}

pub fn save_features(path: &Path, feats: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features(&mut w, feats)?;
    w.flush()?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    read_labels(File::open(path)?)
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_labels(&mut w, labels)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<StudentModel> {
    read_model(File::open(path)?)
}

pub fn save_model(path: &Path, model: &StudentModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_feature_file() {
        let f = read_features("2 3\n1 2 3\n-0.5 1e-3 4.25\n".as_bytes()).unwrap();
        assert_eq!(f.rows(), 2);
        assert_eq!(f.row(1), &[-0.5, 1e-3, 4.25]);
    }

    #[test]
    fn rejects_bad_feature_files() {
        assert!(read_features("".as_bytes()).is_err());
        assert!(read_features("2 2\n1 2\n".as_bytes()).is_err());
        assert!(read_features("1 2\n1 2 3\n".as_bytes()).is_err());
        assert!(read_features("1 2\n1 nan\n".as_bytes()).is_err());
        assert!(read_features("0 2\n".as_bytes()).is_err());
        assert!(read_features("1 1 1\n4\n".as_bytes()).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(
            read_labels("3\n0\n\n12\n".as_bytes()).unwrap(),
            vec![3, 0, 12]
        );
        assert!(read_labels("1\n-2\n".as_bytes()).is_err());
        assert!(read_labels("1.5\n".as_bytes()).is_err());
    }

    #[test]
    fn model_layout() {
        let m = StudentModel::new(&[2, 3, 1], 4).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "PKT-MODEL v1");
        assert_eq!(lines[1], "dims 2 3 1");
        // 2 weight rows + bias, then 3 weight rows + bias
        assert_eq!(lines.len(), 2 + 3 + 4);
        assert_eq!(lines[2].split_whitespace().count(), 3);
        assert_eq!(read_model(text.as_bytes()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(read_model("PKT-MODEL v2\ndims 1 1\n1\n0\n".as_bytes()).is_err());
        assert!(read_model("PKT-MODEL v1\ndims 1 1\n1\n".as_bytes()).is_err());
        assert!(read_model("PKT-MODEL v1\ndims 1 1\n1\n0\n5\n".as_bytes()).is_err());
        assert!(read_model("PKT-MODEL v1\ndims 1\n".as_bytes()).is_err());
        assert_eq!(
            read_model("PKT-MODEL v1\ndims 1 1\n2\n0.5\n".as_bytes())
                .unwrap()
                .layers()[0]
                .bias[0],
            0.5
        );
    }

    #[test]
    fn loss_trace_lines() {
        let mut buf = Vec::new();
        write_loss_trace(
            &mut buf,
            &[LossRecord {
                epoch: 2,
                batch: 1,
                loss: 0.25,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "2 1 2.5000000000000000e-1\n"
        );
    }

    proptest! {
        #[test]
        fn feature_round_trip_is_exact(
            (n, d, vals) in (1usize..6, 1usize..5).prop_flat_map(|(n, d)| {
                (Just(n), Just(d), prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, n * d))
            })
        ) {
            let f = FeatureMatrix::new(Array2::from_shape_vec((n, d), vals).unwrap()).unwrap();
            let mut buf = Vec::new();
            write_features(&mut buf, &f).unwrap();
            let back = read_features(buf.as_slice()).unwrap();
            for (a, b) in f.as_array().iter().zip(back.as_array().iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn model_round_trip_is_exact(seed in any::<u64>(), h in 1usize..5) {
            let m = StudentModel::new(&[3, h, 2], seed).unwrap();
            let mut buf = Vec::new();
            write_model(&mut buf, &m).unwrap();
            prop_assert_eq!(read_model(buf.as_slice()).unwrap(), m);
        }
    }
}
