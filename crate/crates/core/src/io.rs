//! Volume file IO.
//!
//! A stored volume is a pair of files sharing a stem: `<stem>.mv1.json`, a
//! JSON header `{magic, dtype, dims, spacing_mm, origin_mm, axis_order}`,
//! and `<stem>.mv1.raw`, the voxel payload in little-endian order with x
//! fastest. Scalar and probability volumes use dtype `"f32"`, masks `"u8"`.
//! Round trips are bit-exact; any malformed or truncated input is rejected
//! with [`Error::Format`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Mask, ProbVolume, Volume};
use crate::{Error, Result};

const MAGIC: &str = "MV1";
const AXIS_ORDER: &str = "x-fastest";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    dtype: String,
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    origin_mm: [f64; 3],
    axis_order: String,
}

/// Header and payload paths for a stem given in any accepted form:
/// the bare stem, `<stem>.mv1`, `<stem>.mv1.json`, or `<stem>.mv1.raw`.
pub fn mv1_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let s = path.as_ref().to_string_lossy();
    let stem = s
        .strip_suffix(".mv1.json")
        .or_else(|| s.strip_suffix(".mv1.raw"))
        .or_else(|| s.strip_suffix(".mv1"))
        .unwrap_or(&s)
        .to_string();
    (
        PathBuf::from(format!("{stem}.mv1.json")),
        PathBuf::from(format!("{stem}.mv1.raw")),
    )
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_pair(path: impl AsRef<Path>, header: &Header, payload: &[u8]) -> Result<()> {
    let (header_path, raw_path) = mv1_paths(path);
    let text = serde_json::to_string(header).map_err(|source| Error::Json {
        path: header_path.display().to_string(),
        source,
    })?;
    fs::write(&header_path, text).map_err(|e| io_err(&header_path, e))?;
    fs::write(&raw_path, payload).map_err(|e| io_err(&raw_path, e))?;
    Ok(())
}

fn read_pair(path: impl AsRef<Path>, expect_dtype: &str) -> Result<(Grid, Vec<u8>)> {
    let (header_path, raw_path) = mv1_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| io_err(&header_path, e))?;
    let header: Header = serde_json::from_str(&text)
        .map_err(|e| format_err(&header_path, format!("bad header JSON: {e}")))?;
    if header.magic != MAGIC {
        return Err(format_err(
            &header_path,
            format!("bad magic {:?}, expected {MAGIC:?}", header.magic),
        ));
    }
    if header.axis_order != AXIS_ORDER {
        return Err(format_err(
            &header_path,
            format!(
                "unsupported axis order {:?}, expected {AXIS_ORDER:?}",
                header.axis_order
            ),
        ));
    }
    if header.dtype != expect_dtype {
        return Err(format_err(
            &header_path,
            format!("dtype {:?}, expected {expect_dtype:?}", header.dtype),
        ));
    }
    let grid = Grid::new(header.dims, header.spacing_mm, header.origin_mm)
        .map_err(|e| format_err(&header_path, format!("bad geometry: {e}")))?;
    let payload = fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let elem = if expect_dtype == "f32" { 4 } else { 1 };
    let expected = grid.voxel_count() * elem;
    if payload.len() != expected {
        return Err(format_err(
            &raw_path,
            format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            ),
        ));
    }
    Ok((grid, payload))
}

fn f32_payload(data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn f32_decode(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Write a scalar volume as dtype f32.
pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let header = Header {
        magic: MAGIC.into(),
        dtype: "f32".into(),
        dims: volume.grid.dims,
        spacing_mm: volume.grid.spacing_mm,
        origin_mm: volume.grid.origin_mm,
        axis_order: AXIS_ORDER.into(),
    };
    write_pair(path, &header, &f32_payload(volume.data()))
}

/// Read a scalar volume (dtype f32; values must be finite).
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let (header_path, _) = mv1_paths(&path);
    let (grid, payload) = read_pair(&path, "f32")?;
    Volume::new(grid, f32_decode(&payload))
        .map_err(|e| format_err(&header_path, format!("bad payload: {e}")))
}

/// Write a binary mask as dtype u8.
pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let header = Header {
        magic: MAGIC.into(),
        dtype: "u8".into(),
        dims: mask.grid.dims,
        spacing_mm: mask.grid.spacing_mm,
        origin_mm: mask.grid.origin_mm,
        axis_order: AXIS_ORDER.into(),
    };
    write_pair(path, &header, mask.data())
}

/// Read a binary mask (dtype u8; values must be 0/1).
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let (header_path, _) = mv1_paths(&path);
    let (grid, payload) = read_pair(&path, "u8")?;
    Mask::new(grid, payload).map_err(|e| format_err(&header_path, format!("bad payload: {e}")))
}

/// Write a probability volume as dtype f32.
pub fn write_prob_volume(path: impl AsRef<Path>, prob: &ProbVolume) -> Result<()> {
    let header = Header {
        magic: MAGIC.into(),
        dtype: "f32".into(),
        dims: prob.grid.dims,
        spacing_mm: prob.grid.spacing_mm,
        origin_mm: prob.grid.origin_mm,
        axis_order: AXIS_ORDER.into(),
    };
    write_pair(path, &header, &f32_payload(prob.data()))
}

/// Read a probability volume (dtype f32; values must lie in [0, 1]).
pub fn read_prob_volume(path: impl AsRef<Path>) -> Result<ProbVolume> {
    let (header_path, _) = mv1_paths(&path);
    let (grid, payload) = read_pair(&path, "f32")?;
    ProbVolume::new(grid, f32_decode(&payload))
        .map_err(|e| format_err(&header_path, format!("bad payload: {e}")))
}

/// Read a JSON value from a file, tagging errors with the path.
pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Write a value to a file as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn stem_resolution_accepts_all_forms() {
        for form in ["v", "v.mv1", "v.mv1.json", "v.mv1.raw"] {
            let (h, r) = mv1_paths(form);
            assert_eq!(h, PathBuf::from("v.mv1.json"));
            assert_eq!(r, PathBuf::from("v.mv1.raw"));
        }
    }

    #[test]
    fn volume_round_trip_is_bit_exact() {
        let dir = tmp();
        let grid = Grid::new([5, 4, 3], [0.7, 1.0, 2.5], [-1.0, 0.0, 3.5]).unwrap();
        let mut rng = SeededRng::new(9);
        let data: Vec<f32> = (0..grid.voxel_count())
            .map(|_| rng.range_f64(-100.0, 100.0) as f32)
            .collect();
        let vol = Volume::new(grid, data).unwrap();
        let path = dir.path().join("vol");
        write_volume(&path, &vol).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back.grid, vol.grid);
        let bits: Vec<u32> = vol.data().iter().map(|v| v.to_bits()).collect();
        let back_bits: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, back_bits);
    }

    #[test]
    fn mask_round_trip_is_bit_exact() {
        let dir = tmp();
        let grid = Grid::isotropic([4, 4, 4], 1.0).unwrap();
        let mut rng = SeededRng::new(10);
        let data: Vec<u8> = (0..64).map(|_| u8::from(rng.bernoulli(0.4))).collect();
        let mask = Mask::new(grid, data).unwrap();
        let path = dir.path().join("m");
        write_mask(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("x");
        let vol = Volume::filled(Grid::isotropic([2, 2, 2], 1.0).unwrap(), 1.0).unwrap();
        write_volume(&path, &vol).unwrap();
        let header_path = dir.path().join("x.mv1.json");
        let text = fs::read_to_string(&header_path)
            .unwrap()
            .replace("\"MV1\"", "\"XXX\"");
        fs::write(&header_path, text).unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("t");
        let vol = Volume::filled(Grid::isotropic([3, 3, 3], 1.0).unwrap(), 2.0).unwrap();
        write_volume(&path, &vol).unwrap();
        let raw_path = dir.path().join("t.mv1.raw");
        let bytes = fs::read(&raw_path).unwrap();
        fs::write(&raw_path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn oversized_payload_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("o");
        let vol = Volume::filled(Grid::isotropic([3, 3, 3], 1.0).unwrap(), 2.0).unwrap();
        write_volume(&path, &vol).unwrap();
        let raw_path = dir.path().join("o.mv1.raw");
        let mut bytes = fs::read(&raw_path).unwrap();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        fs::write(&raw_path, bytes).unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn header_payload_dtype_mismatch_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("d");
        let mask = Mask::empty(Grid::isotropic([2, 2, 2], 1.0).unwrap());
        write_mask(&path, &mask).unwrap();
        // Reading a u8 file as a volume must fail on the dtype, not mis-decode.
        assert!(matches!(read_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn corrupt_header_json_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("c");
        let vol = Volume::filled(Grid::isotropic([2, 2, 2], 1.0).unwrap(), 0.0).unwrap();
        write_volume(&path, &vol).unwrap();
        fs::write(dir.path().join("c.mv1.json"), "{not json").unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_geometry_in_header_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("g");
        let vol = Volume::filled(Grid::isotropic([2, 2, 2], 1.0).unwrap(), 0.0).unwrap();
        write_volume(&path, &vol).unwrap();
        let header_path = dir.path().join("g.mv1.json");
        let text = fs::read_to_string(&header_path)
            .unwrap()
            .replace("\"spacing_mm\":[1.0,1.0,1.0]", "\"spacing_mm\":[1.0,0.0,1.0]");
        fs::write(&header_path, text).unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_volume("/nonexistent/path/vol"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn mask_payload_with_twos_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("two");
        let mask = Mask::empty(Grid::isotropic([2, 2, 2], 1.0).unwrap());
        write_mask(&path, &mask).unwrap();
        let raw_path = dir.path().join("two.mv1.raw");
        let mut bytes = fs::read(&raw_path).unwrap();
        bytes[3] = 2;
        fs::write(&raw_path, bytes).unwrap();
        assert!(matches!(read_mask(&path), Err(Error::Format { .. })));
    }
}
