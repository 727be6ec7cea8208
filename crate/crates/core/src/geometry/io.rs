//! CSV and binary point-cloud formats.
//!
//! CSV: one point per row, comma separated, optional final weight column.
//! Blank lines and lines starting with `#` are skipped.
//!
//! Binary (little-endian): magic `MNFD`, `u32` ambient dimension n, `u64` count N,
//! then N*n `f64` coordinates row by row, then N `f64` weights.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::PointCloud;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MNFD";

pub fn parse_csv(text: &str, weight_column: bool) -> Result<PointCloud> {
    read_csv(BufReader::new(text.as_bytes()), weight_column)
}

pub fn read_csv<R: BufRead>(reader: R, weight_column: bool) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut vals = t
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if weight_column {
            let w = vals
                .pop()
                .ok_or_else(|| Error::Parse(format!("line {}: missing weight", lineno + 1)))?;
            weights.push(w);
        }
        points.push(DVector::from_vec(vals));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("csv point cloud"));
    }
    if weight_column {
        PointCloud::with_weights(points, weights)
    } else {
        PointCloud::new(points)
    }
}

pub fn write_csv<W: Write>(cloud: &PointCloud, mut w: W, weight_column: bool) -> Result<()> {
    for (p, wt) in cloud.points().iter().zip(cloud.weights()) {
        let mut row: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
        if weight_column {
            row.push(format!("{wt}"));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(cloud: &PointCloud, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(cloud.dim() as u32).to_le_bytes())?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    for p in cloud.points() {
        for x in p.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    for wt in cloud.weights() {
        w.write_all(&wt.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<PointCloud> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("bad magic, expected MNFD".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut read_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = DVector::zeros(n);
        for j in 0..n {
            v[j] = read_f64(&mut r)?;
        }
        points.push(v);
    }
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        weights.push(read_f64(&mut r)?);
    }
    PointCloud::with_weights(points, weights)
}

/// Loads by extension: `.bin` is binary, anything else CSV.
pub fn load(path: &Path, weight_column: bool) -> Result<PointCloud> {
    if path.extension().is_some_and(|e| e == "bin") {
        read_binary(BufReader::new(fs::File::open(path)?))
    } else {
        read_csv(BufReader::new(fs::File::open(path)?), weight_column)
    }
}

/// Saves by extension: `.bin` is binary, anything else CSV.
pub fn save(cloud: &PointCloud, path: &Path, weight_column: bool) -> Result<()> {
    let f = std::io::BufWriter::new(fs::File::create(path)?);
    if path.extension().is_some_and(|e| e == "bin") {
        write_binary(cloud, f)
    } else {
        write_csv(cloud, f, weight_column)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_with_weights() {
        let c = PointCloud::with_weights(
            vec![
                DVector::from_row_slice(&[0.1, -0.25]),
                DVector::from_row_slice(&[1.0 / 3.0, 0.5]),
            ],
            vec![0.25, 0.75],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&c, &mut buf, true).unwrap();
        let back = parse_csv(std::str::from_utf8(&buf).unwrap(), true).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn binary_roundtrip() {
        let c = PointCloud::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 1e-300]]).unwrap();
        let mut buf = Vec::new();
        write_binary(&c, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MNFD");
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 * 6 + 8 * 2);
        assert_eq!(read_binary(&buf[..]).unwrap(), c);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(parse_csv("1,2\nx,3\n", false).is_err());
        assert!(parse_csv("# only a comment\n", false).is_err());
        assert!(parse_csv("1,2\n3\n", false).is_err());
    }
}
