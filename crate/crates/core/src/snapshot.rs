//! Binary and text serialisation of field configurations.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic  b"YMHC"   4 bytes
//! version          u8 (currently 1)
//! d, L, N          u32 each
//! target tag       u8 (0 Euclidean, 1 sphere, 2 group)
//! links            |E+| row-major N x N blocks of f64, in positive-edge order
//! Higgs values     |sites| row-major blocks (N x 1 or N x N)
//! ```
//!
//! The text dump writes the same numbers with shortest round-trip formatting,
//! so parsing it back is exact.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Mat;
use crate::lattice::Lattice;
use crate::model::{FieldConfiguration, Target};

const MAGIC: &[u8; 4] = b"YMHC";
pub const SNAPSHOT_VERSION: u8 = 1;

fn push_matrix(out: &mut Vec<u8>, m: &Mat) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
}

pub fn to_bytes(cfg: &FieldConfiguration) -> Vec<u8> {
    let lat = cfg.lattice();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(SNAPSHOT_VERSION);
    for v in [lat.dim(), lat.side(), cfg.n()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(cfg.target().tag());
    for q in cfg.links() {
        push_matrix(&mut out, q);
    }
    for phi in cfg.higgs_values() {
        push_matrix(&mut out, phi);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(Error::Snapshot("truncated input".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Mat> {
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
            }
        }
        Ok(m)
    }
}

/// Parses a binary snapshot and validates every constraint.
pub fn from_bytes(bytes: &[u8]) -> Result<FieldConfiguration> {
    let mut rd = Reader { bytes, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = rd.take(1)?[0];
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let (d, l, n) = (rd.u32()?, rd.u32()?, rd.u32()?);
    let target = Target::from_tag(rd.take(1)?[0])?;
    let lattice = Arc::new(Lattice::new(d, l)?);
    let links = (0..lattice.n_edges())
        .map(|_| rd.matrix(n, n))
        .collect::<Result<Vec<_>>>()?;
    let cols = target.higgs_cols(n);
    let higgs = (0..lattice.n_sites())
        .map(|_| rd.matrix(n, cols))
        .collect::<Result<Vec<_>>>()?;
    if rd.pos != bytes.len() {
        return Err(Error::Snapshot("trailing bytes".into()));
    }
    FieldConfiguration::from_parts(lattice, n, target, links, higgs)
}

/// Human-readable dump: a header line, then one line per link and per site.
pub fn to_text(cfg: &FieldConfiguration) -> String {
    let lat = cfg.lattice();
    let mut s = format!(
        "ymh-config v{} d={} L={} N={} target={}\n",
        SNAPSHOT_VERSION,
        lat.dim(),
        lat.side(),
        cfg.n(),
        cfg.target()
    );
    let row = |m: &Mat| {
        let mut vals = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                vals.push(format!("{:e}", m[(r, c)]));
            }
        }
        vals.join(" ")
    };
    for (i, q) in cfg.links().iter().enumerate() {
        s.push_str(&format!("Q {} {}\n", lat.positive_edge(i), row(q)));
    }
    for (x, phi) in cfg.higgs_values().iter().enumerate() {
        s.push_str(&format!("Phi {x} {}\n", row(phi)));
    }
    s
}

/// Parses the output of [`to_text`].
pub fn from_text(text: &str) -> Result<FieldConfiguration> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Snapshot("empty input".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("ymh-config") {
        return Err(Error::Snapshot("bad header".into()));
    }
    let mut get = |key: &str| -> Result<String> {
        let f = fields.next().ok_or_else(|| Error::Snapshot(format!("missing {key}")))?;
        f.strip_prefix(key)
            .map(str::to_string)
            .ok_or_else(|| Error::Snapshot(format!("expected {key}")))
    };
    let version = get("v")?;
    if version != SNAPSHOT_VERSION.to_string() {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let parse = |s: String| s.parse::<usize>().map_err(|e| Error::Snapshot(e.to_string()));
    let d = parse(get("d=")?)?;
    let l = parse(get("L=")?)?;
    let n = parse(get("N=")?)?;
    let target: Target = get("target=")?
        .parse()
        .map_err(|_| Error::Snapshot("bad target".into()))?;
    let lattice = Arc::new(Lattice::new(d, l)?);
    let cols = target.higgs_cols(n);
    let numbers = |line: &str, rows: usize, cols: usize| -> Result<Mat> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .rev()
            .take(rows * cols)
            .map(|t| t.parse::<f64>().map_err(|e| Error::Snapshot(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != rows * cols {
            return Err(Error::Snapshot("short line".into()));
        }
        let vals: Vec<f64> = vals.into_iter().rev().collect();
        Ok(Mat::from_row_slice(rows, cols, &vals))
    };
    let mut links = Vec::with_capacity(lattice.n_edges());
    let mut higgs = Vec::with_capacity(lattice.n_sites());
    for line in lines {
        if let Some(rest) = line.strip_prefix("Q ") {
            links.push(numbers(rest, n, n)?);
        } else if let Some(rest) = line.strip_prefix("Phi ") {
            higgs.push(numbers(rest, n, cols)?);
        } else if !line.trim().is_empty() {
            return Err(Error::Snapshot(format!("unexpected line '{line}'")));
        }
    }
    FieldConfiguration::from_parts(lattice, n, target, links, higgs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for target in [Target::Euclidean, Target::Sphere, Target::Group] {
            let lat = Arc::new(Lattice::new(2, 3).unwrap());
            let cfg = FieldConfiguration::random(lat, 3, target, &mut rng);
            assert_eq!(from_bytes(&to_bytes(&cfg)).unwrap(), cfg);
            assert_eq!(from_text(&to_text(&cfg)).unwrap(), cfg);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let lat = Arc::new(Lattice::new(2, 2).unwrap());
        let cfg = FieldConfiguration::cold(lat, 2, Target::Group);
        let bytes = to_bytes(&cfg);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(from_bytes(&bad), Err(Error::Snapshot(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        // Corrupt a link entry so it leaves SO(N).
        let mut bad = bytes;
        let off = 4 + 1 + 12 + 1;
        bad[off..off + 8].copy_from_slice(&2.0f64.to_le_bytes());
        assert!(from_bytes(&bad).is_err());
    }
}
