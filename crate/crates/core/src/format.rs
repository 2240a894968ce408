//! On-disk formats for dictionaries and sample batches.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! dictionary:  "DICT" u32 version u64 n u64 h  f64[n*h] atoms, column-major
//! batch:       "SBAT" u32 version u64 N u64 n u64 h u64 k
//!              u64[N*k] supports (sample-major)
//!              f64[N*k] amplitudes (sample-major)
//!              f64[n*N] signals, column-major as an n x N matrix
//! ```
//!
//! Batches store a fixed support size `k`. A JSON sidecar next to a
//! dictionary records the generating parameters and measured coherence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{Dictionary, SampleBatch};

pub const FORMAT_VERSION: u32 = 1;
const DICT_MAGIC: &[u8; 4] = b"DICT";
const BATCH_MAGIC: &[u8; 4] = b"SBAT";

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_size(r: &mut impl Read, what: &str) -> Result<usize> {
    usize::try_from(get_u64(r)?).map_err(|_| bad(format!("{what} does not fit in usize")))
}

fn expect_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(bad(format!("expected magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(bad("trailing bytes")),
    }
}

pub fn write_dictionary(w: &mut impl Write, dict: &Dictionary) -> Result<()> {
    w.write_all(DICT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    put_u64(w, dict.n() as u64)?;
    put_u64(w, dict.h() as u64)?;
    for col in dict.atoms().columns() {
        for &v in col {
            put_f64(w, v)?;
        }
    }
    Ok(())
}

/// Reads a dictionary, rejecting columns that are not unit length.
pub fn read_dictionary(r: &mut impl Read) -> Result<Dictionary> {
    expect_header(r, DICT_MAGIC)?;
    let n = get_size(r, "n")?;
    let h = get_size(r, "h")?;
    let mut atoms = Array2::<f64>::zeros((n, h));
    for j in 0..h {
        for i in 0..n {
            atoms[[i, j]] = get_f64(r)?;
        }
    }
    expect_eof(r)?;
    Dictionary::from_unit_columns(atoms).map_err(|e| bad(e.to_string()))
}

pub fn write_batch(w: &mut impl Write, batch: &SampleBatch) -> Result<()> {
    let k = batch.supports().first().map_or(0, Vec::len);
    if batch.supports().iter().any(|s| s.len() != k) {
        return Err(bad("batch has mixed support sizes"));
    }
    w.write_all(BATCH_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [batch.len(), batch.n(), batch.h(), k] {
        put_u64(w, v as u64)?;
    }
    for &j in batch.supports().iter().flatten() {
        put_u64(w, j as u64)?;
    }
    for &x in batch.amplitudes().iter().flatten() {
        put_f64(w, x)?;
    }
    // column-major n x N means one signal after another
    for &v in batch.signals().iter() {
        put_f64(w, v)?;
    }
    Ok(())
}

/// Reads a batch and checks its stored signals against `A* x*` recomputed
/// from `dict` (to 1e-12 relative).
pub fn read_batch(r: &mut impl Read, dict: &Dictionary) -> Result<SampleBatch> {
    expect_header(r, BATCH_MAGIC)?;
    let count = get_size(r, "N")?;
    let n = get_size(r, "n")?;
    let h = get_size(r, "h")?;
    let k = get_size(r, "k")?;
    if n != dict.n() || h != dict.h() {
        return Err(Error::DimensionMismatch(format!(
            "batch is {n}x{h} but dictionary is {}x{}",
            dict.n(),
            dict.h()
        )));
    }
    let mut supports = vec![Vec::with_capacity(k); count];
    for s in supports.iter_mut() {
        for _ in 0..k {
            s.push(get_size(r, "support index")?);
        }
    }
    let mut amplitudes = vec![Vec::with_capacity(k); count];
    for a in amplitudes.iter_mut() {
        for _ in 0..k {
            a.push(get_f64(r)?);
        }
    }
    let mut stored = Vec::with_capacity(count * n);
    for _ in 0..count * n {
        stored.push(get_f64(r)?);
    }
    expect_eof(r)?;
    let batch = SampleBatch::from_codes(dict, supports, amplitudes)?;
    for (&want, &got) in stored.iter().zip(batch.signals().iter()) {
        if (want - got).abs() > 1e-12 * (1.0 + want.abs()) {
            return Err(bad("stored signals disagree with dictionary and codes"));
        }
    }
    Ok(batch)
}

/// JSON sidecar for a generated dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub h: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub coherence: f64,
    /// `null` for an orthogonal dictionary (infinite xi).
    pub xi: Option<f64>,
}

impl Sidecar {
    pub fn describe(dict: &Dictionary, p: f64, a: f64, b: f64, seed: u64) -> Self {
        Self {
            n: dict.n(),
            h: dict.h(),
            p,
            a,
            b,
            seed,
            coherence: dict.coherence(),
            xi: dict.xi().is_finite().then_some(dict.xi()),
        }
    }
}

pub fn save_dictionary(path: &Path, dict: &Dictionary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dictionary(&mut w, dict)?;
    Ok(w.flush()?)
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    read_dictionary(&mut BufReader::new(File::open(path)?))
}

pub fn save_batch(path: &Path, batch: &SampleBatch) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_batch(&mut w, batch)?;
    Ok(w.flush()?)
}

pub fn load_batch(path: &Path, dict: &Dictionary) -> Result<SampleBatch> {
    read_batch(&mut BufReader::new(File::open(path)?), dict)
}

pub fn save_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    Ok(std::fs::write(path, text)?)
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Sparse codes as CSV: `sample,index,amplitude`, one line per nonzero.
pub fn write_codes_csv(w: &mut impl Write, batch: &SampleBatch) -> Result<()> {
    writeln!(w, "sample,index,amplitude")?;
    for (s, (sup, amps)) in batch.supports().iter().zip(batch.amplitudes()).enumerate() {
        for (j, x) in sup.iter().zip(amps) {
            writeln!(w, "{s},{j},{x:e}")?;
        }
    }
    Ok(())
}

/// Parses [`write_codes_csv`] output back into supports and amplitudes.
pub fn read_codes_csv(text: &str) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    if lines.next() != Some("sample,index,amplitude") {
        return Err(bad("codes csv: bad header"));
    }
    let mut supports: Vec<Vec<usize>> = Vec::new();
    let mut amplitudes: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let [s, j, x] = fields[..] else {
            return Err(bad(format!("codes csv line {}: expected 3 fields", lineno + 2)));
        };
        let parse_err = |_| bad(format!("codes csv line {}: parse error", lineno + 2));
        let s: usize = s.parse().map_err(parse_err)?;
        let j: usize = j.parse().map_err(parse_err)?;
        let x: f64 = x.parse().map_err(|_| bad(format!("codes csv line {}: parse error", lineno + 2)))?;
        if s >= supports.len() {
            supports.resize(s + 1, Vec::new());
            amplitudes.resize(s + 1, Vec::new());
        }
        supports[s].push(j);
        amplitudes[s].push(x);
    }
    Ok((supports, amplitudes))
}

/// Signals as CSV, one sample per line: `sample,y0,...,y{n-1}`.
pub fn write_signals_csv(w: &mut impl Write, batch: &SampleBatch) -> Result<()> {
    let header: Vec<String> = (0..batch.n()).map(|r| format!("y{r}")).collect();
    writeln!(w, "sample,{}", header.join(","))?;
    for (s, row) in batch.signals().rows().into_iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{s},{}", vals.join(","))?;
    }
    Ok(())
}

/// Parses [`write_signals_csv`] output into an `N x n` matrix.
pub fn read_signals_csv(text: &str) -> Result<Array2<f64>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("signals csv: empty"))?;
    let n = header.split(',').count().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 1 {
            return Err(bad(format!("signals csv row {rows}: expected {} fields", n + 1)));
        }
        for f in &fields[1..] {
            data.push(f.parse::<f64>().map_err(|_| bad(format!("signals csv row {rows}: parse error")))?);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, n), data).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dictionary, make_batch, CodeModel};

    #[test]
    fn dictionary_bytes_layout() {
        let d = Dictionary::from_matrix(Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_dictionary(&mut buf, &d).unwrap();
        assert_eq!(&buf[..4], b"DICT");
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 4 * 8);
        // column 0 is (1, 0)
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 0.0);
    }

    #[test]
    fn rejects_wrong_magic_and_trailing() {
        let d = generate_dictionary(3, 4, 1).unwrap();
        let mut buf = Vec::new();
        write_dictionary(&mut buf, &d).unwrap();
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_dictionary(&mut extra.as_slice()), Err(Error::Format(_))));
        buf[0] = b'X';
        assert!(matches!(read_dictionary(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn batch_roundtrip_and_mismatch() {
        let d = generate_dictionary(5, 9, 2).unwrap();
        let m = CodeModel::with_support_size(9, 3, 1.0, 2.0).unwrap();
        let b = make_batch(&d, &m, 7, 3).unwrap();
        let mut buf = Vec::new();
        write_batch(&mut buf, &b).unwrap();
        assert_eq!(read_batch(&mut buf.as_slice(), &d).unwrap(), b);
        let other = generate_dictionary(5, 10, 2).unwrap();
        assert!(matches!(read_batch(&mut buf.as_slice(), &other), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn csv_roundtrip() {
        let d = generate_dictionary(4, 6, 2).unwrap();
        let m = CodeModel::with_support_size(6, 2, 1.0, 3.0).unwrap();
        let b = make_batch(&d, &m, 5, 1).unwrap();
        let mut codes = Vec::new();
        write_codes_csv(&mut codes, &b).unwrap();
        let (sup, amps) = read_codes_csv(std::str::from_utf8(&codes).unwrap()).unwrap();
        assert_eq!(sup, b.supports());
        assert_eq!(amps, b.amplitudes());
        let mut sig = Vec::new();
        write_signals_csv(&mut sig, &b).unwrap();
        assert_eq!(&read_signals_csv(std::str::from_utf8(&sig).unwrap()).unwrap(), b.signals());
    }

    #[test]
    fn sidecar_null_xi_for_orthogonal() {
        let d = Dictionary::from_matrix(Array2::eye(3)).unwrap();
        let s = Sidecar::describe(&d, 0.1, 1.0, 2.0, 0);
        assert_eq!(s.xi, None);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"xi\":null"));
        assert_eq!(serde_json::from_str::<Sidecar>(&text).unwrap(), s);
    }
}
