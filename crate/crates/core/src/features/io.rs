//! Binary feature files: `"TATF"`, version `1`, then `T, Mh, Mw, D, width,
//! height` as little-endian `u32`, then `T*Mh*Mw*D` little-endian `f32`.

use std::fs;
use std::path::Path;

use super::PatchTokenGrid;
use crate::error::{Result, TatError};

const MAGIC: &[u8; 4] = b"TATF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 7 * 4;

pub fn encode_features(grid: &PatchTokenGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.data.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        grid.num_frames as u32,
        grid.patches_h as u32,
        grid.patches_w as u32,
        grid.dim as u32,
        grid.frame_width,
        grid.frame_height,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &grid.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<PatchTokenGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(TatError::parse(
            "feature header",
            format!("expected {HEADER_LEN} header bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(TatError::parse("feature header", "bad magic, expected \"TATF\""));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let version = word(0);
    if version != VERSION {
        return Err(TatError::parse("feature header", format!("unsupported version {version}")));
    }
    let (t, mh, mw, d) = (word(1) as usize, word(2) as usize, word(3) as usize, word(4) as usize);
    let (w, h) = (word(5), word(6));
    if t == 0 || mh == 0 || mw == 0 || d == 0 {
        return Err(TatError::Validation(format!(
            "feature header has a zero dimension: T={t} Mh={mh} Mw={mw} D={d}"
        )));
    }
    let count = t
        .checked_mul(mh)
        .and_then(|v| v.checked_mul(mw))
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| TatError::parse("feature header", "shape overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(TatError::parse(
            "feature payload",
            format!("expected {} bytes, found {}", count * 4, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    PatchTokenGrid::new(t, mh, mw, d, (w, h), data)
}

pub fn save_features(path: &Path, grid: &PatchTokenGrid) -> Result<()> {
    crate::io_util::write_atomic(path, &encode_features(grid))
}

pub fn load_features(path: &Path) -> Result<PatchTokenGrid> {
    let bytes = fs::read(path).map_err(|e| TatError::io(path, e))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PatchTokenGrid {
        let data = (0..2 * 3 * 2 * 5).map(|i| (i as f32).sin() * 1e-3).collect();
        PatchTokenGrid::new(2, 3, 2, 5, (30, 20), data).unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let g = grid();
        let back = decode_features(&encode_features(&g)).unwrap();
        assert_eq!(back, g);
        assert!(back.data.iter().zip(&g.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let mut bytes = encode_features(&grid());
        bytes.truncate(bytes.len() - 6);
        match decode_features(&bytes).unwrap_err() {
            TatError::Parse { message, .. } => {
                assert!(message.contains("expected 240 bytes, found 234"), "{message}")
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn zero_frames_and_bad_magic() {
        let mut bytes = encode_features(&grid());
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_features(&bytes), Err(TatError::Validation(_))));
        let mut bytes = encode_features(&grid());
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes), Err(TatError::Parse { .. })));
    }
}
