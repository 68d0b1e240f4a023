//! CSV and binary matrix files.
//!
//! CSV: one matrix row per line (row = feature, column = sample), comma
//! separated, with an optional single header row detected automatically.
//! Binary: magic `DPSA`, `u32` rows, `u32` cols, then little-endian `f64`
//! entries in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::linalg::DenseMatrix;
use crate::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"DPSA";

pub fn load_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(file))
}

pub(crate) fn parse_csv<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(index + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|f| f.parse::<f64>().ok()).collect();
        if index == 0 && parsed.iter().any(Option::is_none) {
            // Header row.
            continue;
        }
        let expected = *cols.get_or_insert(parsed.len());
        if parsed.len() != expected {
            return Err(Error::RaggedRows {
                line,
                expected,
                found: parsed.len(),
            });
        }
        for (field, value) in record.iter().zip(parsed) {
            match value {
                Some(v) if v.is_finite() => data.push(v),
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("not a finite number: {field:?}"),
                    })
                }
            }
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse {
        line: 0,
        message: "no numeric rows".into(),
    })?;
    DenseMatrix::new(rows, cols, data)
}

pub fn save_csv(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn save_binary(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
    write(BINARY_MAGIC)?;
    write(&(m.rows() as u32).to_le_bytes())?;
    write(&(m.cols() as u32).to_le_bytes())?;
    for v in m.as_slice() {
        write(&v.to_le_bytes())?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes)
}

pub(crate) fn decode_binary(bytes: &[u8]) -> Result<DenseMatrix> {
    let bad = |message: &str| Error::Parse {
        line: 0,
        message: message.to_string(),
    };
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("missing DPSA header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if payload.len() != rows * cols * 8 {
        return Err(bad("payload length does not match header"));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::new(rows, cols, data)
}

/// Loads either format, sniffing the binary magic.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let is_binary = File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map(|_| &head == BINARY_MAGIC)
        .unwrap_or(false);
    if is_binary {
        load_binary(path)
    } else {
        load_csv(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_header_csv() {
        let m = parse_csv("1,2\n3,4".as_bytes()).unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let h = parse_csv("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(h, m);
    }

    #[test]
    fn reports_ragged_and_bad_lines() {
        match parse_csv("1,2\n3,4\n5\n".as_bytes()) {
            Err(Error::RaggedRows { line, expected, found }) => {
                assert_eq!((line, expected, found), (3, 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv("1,2\n3,x\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn files_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = DenseMatrix::from_fn(5, 7, |_, _| rng.random_range(-1e3..1e3));
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("m.csv");
        save_csv(&m, &csv_path).unwrap();
        let back = load_matrix(&csv_path).unwrap();
        assert!(back.sub(&m).max_abs() <= 1e-12);
        let bin_path = dir.path().join("m.bin");
        save_binary(&m, &bin_path).unwrap();
        assert_eq!(load_matrix(&bin_path).unwrap(), m);
        let bytes = std::fs::read(&bin_path).unwrap();
        assert_eq!(&bytes[..4], b"DPSA");
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
    }
}
