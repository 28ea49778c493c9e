//! `LEM1` raster files: an ASCII header line `LEM1 <width> <height>\n`
//! followed by `width * height` row-major little-endian `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::RasterIoError;
use crate::grid::{Elevation, Raster};

pub const MAGIC: &str = "LEM1";

const MAX_HEADER: usize = 64;

pub fn encode_raster<T: Elevation>(r: &Raster<T>) -> Vec<u8> {
    let header = format!("{MAGIC} {} {}\n", r.width(), r.height());
    let mut out = Vec::with_capacity(header.len() + r.len() * 8);
    out.extend_from_slice(header.as_bytes());
    for v in r.iter() {
        out.extend_from_slice(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes());
    }
    out
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster<f64>, RasterIoError> {
    let newline = bytes
        .iter()
        .take(MAX_HEADER)
        .position(|&b| b == b'\n')
        .ok_or_else(|| RasterIoError::Header("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| RasterIoError::Header("header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, w, h] = fields[..] else {
        return Err(RasterIoError::Header(format!("expected `{MAGIC} <width> <height>`, got `{header}`")));
    };
    if magic != MAGIC {
        return Err(RasterIoError::Header(format!("bad magic `{magic}`")));
    }
    let parse = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| RasterIoError::Header(format!("bad dimension `{s}`")))
    };
    let (width, height) = (parse(w)?, parse(h)?);
    let expected = width
        .checked_mul(height)
        .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= usize::MAX as u64))
        .ok_or(RasterIoError::DimensionOverflow { width, height })? as usize;
    let payload = &bytes[newline + 1..];
    if payload.len() < expected * 8 {
        return Err(RasterIoError::Truncated {
            expected,
            found: payload.len() / 8,
        });
    }
    if payload.len() > expected * 8 {
        return Err(RasterIoError::TrailingData {
            extra: payload.len() - expected * 8,
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Raster::from_vec(width as usize, height as usize, data)
        .map_err(|e| RasterIoError::Header(e.to_string()))
}

pub fn write_raster<T: Elevation>(r: &Raster<T>, path: &Path) -> Result<(), RasterIoError> {
    fs::write(path, encode_raster(r)).map_err(|source| RasterIoError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_raster(path: &Path) -> Result<Raster<f64>, RasterIoError> {
    let bytes = fs::read(path).map_err(|source| RasterIoError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_raster(&bytes)
}

/// Plain-text export: one raster row per line, space separated.
pub fn write_raster_text<T: Elevation>(r: &Raster<T>, path: &Path) -> Result<(), RasterIoError> {
    let io_err = |source| RasterIoError::Io {
        path: path.to_owned(),
        source,
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for row in r.chunks(r.width()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", line.join(" ")).map_err(io_err)?;
    }
    f.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_round_trip() {
        let r = Raster::from_vec(3, 3, (0..9).map(|i| i as f64 * 0.1).collect()).unwrap();
        let bytes = encode_raster(&r);
        assert!(bytes.starts_with(b"LEM1 3 3\n"));
        assert_eq!(bytes.len(), 9 + 72);
        assert_eq!(decode_raster(&bytes).unwrap(), r);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = b"LEM1 3 3\n".to_vec();
        bytes.extend(std::iter::repeat_n(0u8, 8 * 8));
        assert!(matches!(
            decode_raster(&bytes),
            Err(RasterIoError::Truncated { expected: 9, found: 8 })
        ));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = b"XYZ1 3 3\n".to_vec();
        bytes.extend([0u8; 72]);
        assert!(matches!(decode_raster(&bytes), Err(RasterIoError::Header(_))));
    }

    #[test]
    fn overflowing_dimensions() {
        let bytes = b"LEM1 18446744073709551615 3\n".to_vec();
        assert!(matches!(decode_raster(&bytes), Err(RasterIoError::DimensionOverflow { .. })));
    }

    #[test]
    fn trailing_bytes() {
        let mut bytes = encode_raster(&Raster::filled(3, 3, 1.0).unwrap());
        bytes.push(0);
        assert!(matches!(decode_raster(&bytes), Err(RasterIoError::TrailingData { extra: 1 })));
    }

    #[test]
    fn file_and_text_export() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_vec(4, 3, (0..12).map(f64::from).collect()).unwrap();
        let p = dir.path().join("a.lem");
        write_raster(&r, &p).unwrap();
        assert_eq!(read_raster(&p).unwrap(), r);
        let t = dir.path().join("a.txt");
        write_raster_text(&r, &t).unwrap();
        let text = std::fs::read_to_string(&t).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), "0 1 2 3");
    }

    proptest! {
        #[test]
        fn round_trip_preserves_bits(w in 3usize..8, h in 3usize..8, bits in proptest::collection::vec(any::<u64>(), 64)) {
            let data: Vec<f64> = (0..w * h).map(|i| f64::from_bits(bits[i % bits.len()])).collect();
            let r = Raster::from_vec(w, h, data).unwrap();
            let back = decode_raster(&encode_raster(&r)).unwrap();
            prop_assert!(back.iter().zip(r.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
