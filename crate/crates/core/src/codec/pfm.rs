//! Single-channel Portable Float Map.
//!
//! Layout: `Pf\n{width} {height}\n{scale}\n` followed by `width * height`
//! float32 samples, bottom row first. A negative scale means little-endian.

use std::fs;
use std::path::Path;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::raster::FloatRaster;

/// Result of decoding a PFM into a depth map.
#[derive(Clone, Debug, PartialEq)]
pub struct PfmRead {
    pub map: DepthMap,
    /// Number of samples that fell outside `[0, 1]` and were clamped.
    pub clamped: usize,
    pub big_endian: bool,
}

impl PfmRead {
    pub fn was_clamped(&self) -> bool {
        self.clamped > 0
    }
}

struct Header {
    width: u32,
    height: u32,
    big_endian: bool,
    data_offset: usize,
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_token<T: std::str::FromStr>(tok: &[u8], what: &str) -> Result<T> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("invalid {what}: {:?}", String::from_utf8_lossy(tok))))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    match next_token(bytes, &mut pos)? {
        b"Pf" => {}
        b"PF" => return Err(Error::MalformedHeader("3-channel PF maps are not supported; expected Pf".into())),
        other => return Err(Error::MalformedHeader(format!("bad magic {:?}", String::from_utf8_lossy(other)))),
    }
    let width: u64 = parse_token(next_token(bytes, &mut pos)?, "width")?;
    let height: u64 = parse_token(next_token(bytes, &mut pos)?, "height")?;
    let scale: f64 = parse_token(next_token(bytes, &mut pos)?, "scale")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::MalformedHeader(format!("invalid scale {scale}")));
    }
    if width > u32::MAX as u64
        || height > u32::MAX as u64
        || width.checked_mul(height).and_then(|n| n.checked_mul(4)).is_none_or(|n| n > usize::MAX as u64)
    {
        return Err(Error::DimensionOverflow { width, height });
    }
    // exactly one whitespace byte separates the scale from the samples
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing separator after scale".into()));
    }
    Ok(Header { width: width as u32, height: height as u32, big_endian: scale > 0.0, data_offset: pos + 1 })
}

/// Decodes a single-channel PFM into a float raster without range checks.
pub fn decode_pfm_raster(bytes: &[u8]) -> Result<(FloatRaster, bool)> {
    let header = parse_header(bytes)?;
    let (w, h) = (header.width as usize, header.height as usize);
    let expected = w * h * 4;
    let payload = &bytes[header.data_offset..];
    if payload.len() < expected {
        return Err(Error::TruncatedData { expected, actual: payload.len() });
    }
    let mut data = vec![0f32; w * h];
    for (i, chunk) in payload[..expected].chunks_exact(4).enumerate() {
        let word = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if header.big_endian { f32::from_be_bytes(word) } else { f32::from_le_bytes(word) };
        if !v.is_finite() {
            return Err(Error::NonFiniteSample { index: i });
        }
        // file rows run bottom to top
        let (row, col) = (i / w, i % w);
        data[(h - 1 - row) * w + col] = v;
    }
    Ok((FloatRaster::from_vec(header.width, header.height, data)?, header.big_endian))
}

/// Decodes a PFM depth map, clamping samples into `[0, 1]`.
pub fn decode_pfm(bytes: &[u8]) -> Result<PfmRead> {
    let (raster, big_endian) = decode_pfm_raster(bytes)?;
    let (map, clamped) = DepthMap::clamped(raster)?;
    Ok(PfmRead { map, clamped, big_endian })
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmRead> {
    decode_pfm(&fs::read(path)?)
}

/// Encodes a single-channel float raster as little-endian PFM.
pub fn encode_pfm_raster(raster: &FloatRaster) -> Result<Vec<u8>> {
    if raster.channels() != 1 {
        return Err(Error::InvalidRaster("PFM writer handles single-channel maps only".into()));
    }
    let (w, h) = (raster.width() as usize, raster.height() as usize);
    let header = format!("Pf\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + w * h * 4);
    out.extend_from_slice(header.as_bytes());
    for row in raster.data().chunks_exact(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn encode_pfm(map: &DepthMap) -> Vec<u8> {
    encode_pfm_raster(map.raster()).expect("depth maps are single-channel")
}

pub fn write_pfm(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pfm(map))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pfm_bytes(header: &str, samples: &[f32], big_endian: bool) -> Vec<u8> {
        let mut out = header.as_bytes().to_vec();
        for v in samples {
            out.extend_from_slice(&if big_endian { v.to_be_bytes() } else { v.to_le_bytes() });
        }
        out
    }

    #[test]
    fn two_by_two_round_trips_byte_identically() {
        // file order is bottom-up: first two words are the bottom row
        let file = pfm_bytes("Pf\n2 2\n-1.0\n", &[0.1, 0.2, 0.3, 0.4], false);
        let read = decode_pfm(&file).unwrap();
        assert!(!read.was_clamped());
        assert_eq!(read.map.data(), &[0.3, 0.4, 0.1, 0.2]);
        assert_eq!(encode_pfm(&read.map), file);
    }

    #[test]
    fn big_endian_is_honoured() {
        let file = pfm_bytes("Pf\n2 1\n1.0\n", &[0.25, 0.75], true);
        let read = decode_pfm(&file).unwrap();
        assert!(read.big_endian);
        assert_eq!(read.map.data(), &[0.25, 0.75]);
    }

    #[test]
    fn out_of_range_sample_is_clamped_and_flagged() {
        let file = pfm_bytes("Pf\n1 1\n-1.0\n", &[1.5], false);
        let read = decode_pfm(&file).unwrap();
        assert_eq!(read.map.data(), &[1.0]);
        assert_eq!(read.clamped, 1);
    }

    #[test]
    fn three_channel_header_rejected() {
        let file = pfm_bytes("PF\n1 1\n-1.0\n", &[0.1, 0.2, 0.3], false);
        assert!(matches!(decode_pfm(&file), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(decode_pfm(b"P5\n1 1\n255\n\0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pfm(b"Pf\n0 1\n-1.0\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pfm(b"Pf\nx 1\n-1.0\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pfm(b"Pf\n1 1\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pfm(b"Pf\n99999999999 99999999999\n-1.0\n"), Err(Error::DimensionOverflow { .. })));
        assert!(matches!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0"), Err(Error::TruncatedData { .. })));
    }

    #[test]
    fn non_finite_sample_rejected() {
        let file = pfm_bytes("Pf\n2 1\n-1.0\n", &[0.5, f32::NAN], false);
        assert!(matches!(decode_pfm(&file), Err(Error::NonFiniteSample { index: 1 })));
    }

    #[test]
    fn constant_map_is_sixteen_identical_words() {
        let map = DepthMap::constant(4, 4, 0.5).unwrap();
        let bytes = encode_pfm(&map);
        let header = b"Pf\n4 4\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let words: Vec<&[u8]> = bytes[header.len()..].chunks(4).collect();
        assert_eq!(words.len(), 16);
        assert!(words.iter().all(|w| *w == 0.5f32.to_le_bytes()));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let map = DepthMap::from_fn(3, 2, |x, y| (x + 3 * y) as f32 / 5.0).unwrap();
        write_pfm(&map, &path).unwrap();
        assert_eq!(read_pfm(&path).unwrap().map, map);
    }

    #[test]
    fn hundred_seeded_maps_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..100 {
            let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
            let map = DepthMap::from_fn(w, h, |_, _| rng.random_range(0.0..=1.0)).unwrap();
            let bytes = encode_pfm(&map);
            let back = decode_pfm(&bytes).unwrap();
            assert_eq!(
                back.map.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                map.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(encode_pfm(&back.map), bytes);
        }
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_pfm(&bytes);
        }
    }
}
