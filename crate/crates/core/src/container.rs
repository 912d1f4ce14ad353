//! Raster container: a JSON header `<name>.json` next to a binary payload
//! `<name>.bin`.
//!
//! The payload holds `width * height` little-endian samples in row-major
//! order (`f32le` for scores, `u32le` for labels) followed by
//! `ceil(width * height / 8)` bytes of nodata bitmask, packed row-major and
//! LSB-first, a set bit marking nodata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GeoTransform, Grid, LabelRaster, ProbabilityRaster};

pub const DTYPE_F32: &str = "f32le";
pub const DTYPE_U32: &str = "u32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
    /// GDAL order: origin_x, pixel_width, row_rotation, origin_y, col_rotation, pixel_height.
    pub geotransform: [f64; 6],
    pub crs: String,
    pub nodata_count: usize,
}

impl RasterHeader {
    fn for_grid(grid: &Grid, dtype: &str, nodata_count: usize) -> Self {
        RasterHeader {
            width: grid.width,
            height: grid.height,
            dtype: dtype.to_string(),
            geotransform: grid.geotransform.to_gdal(),
            crs: grid.crs.clone(),
            nodata_count,
        }
    }

    pub fn payload_len(&self) -> usize {
        let n = self.width * self.height;
        n * 4 + n.div_ceil(8)
    }
}

/// Either kind of raster a container may hold.
#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    Scores(ProbabilityRaster),
    Labels(LabelRaster),
}

/// `foo`, `foo.json` and `foo.bin` all name the same container.
pub fn container_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = base.clone().into_os_string();
    header.push(".json");
    let mut payload = base.into_os_string();
    payload.push(".bin");
    (header.into(), payload.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_header(path: impl AsRef<Path>) -> Result<RasterHeader> {
    let (header_path, _) = container_paths(path);
    let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: header_path.clone(),
        reason,
    };
    let header: RasterHeader = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if header.dtype != DTYPE_F32 && header.dtype != DTYPE_U32 {
        return Err(malformed(format!("unsupported dtype {:?}", header.dtype)));
    }
    GeoTransform::from_gdal(header.geotransform).map_err(|e| malformed(e.to_string()))?;
    if header.nodata_count > header.width * header.height {
        return Err(malformed("nodata_count exceeds pixel count".into()));
    }
    Ok(header)
}

struct RawContainer {
    header: RasterHeader,
    grid: Grid,
    samples: Vec<[u8; 4]>,
    nodata: Vec<bool>,
}

fn read_raw(path: impl AsRef<Path>) -> Result<RawContainer> {
    let (header_path, payload_path) = container_paths(path.as_ref());
    let header = read_header(&header_path)?;
    let bytes = fs::read(&payload_path).map_err(io_err(&payload_path))?;
    let expected = header.payload_len();
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch {
            path: payload_path,
            expected,
            actual: bytes.len(),
        });
    }
    let n = header.width * header.height;
    let (data, mask) = bytes.split_at(n * 4);
    let samples: Vec<[u8; 4]> = data
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();
    let nodata: Vec<bool> = (0..n).map(|i| mask[i / 8] >> (i % 8) & 1 == 1).collect();
    let set = nodata.iter().filter(|&&b| b).count();
    if set != header.nodata_count {
        return Err(Error::MalformedHeader {
            path: header_path,
            reason: format!(
                "nodata_count {} disagrees with {} set mask bits",
                header.nodata_count, set
            ),
        });
    }
    let gt = GeoTransform::from_gdal(header.geotransform)?;
    let grid = Grid::new(header.width, header.height, gt, header.crs.clone())?;
    Ok(RawContainer {
        header,
        grid,
        samples,
        nodata,
    })
}

pub fn read_any(path: impl AsRef<Path>) -> Result<RasterData> {
    let raw = read_raw(path)?;
    if raw.header.dtype == DTYPE_F32 {
        let values = raw.samples.iter().map(|b| f32::from_le_bytes(*b)).collect();
        Ok(RasterData::Scores(ProbabilityRaster::new(
            raw.grid,
            values,
            Some(raw.nodata),
        )?))
    } else {
        // Labels have no nodata notion of their own; masked pixels read as background.
        let labels = raw
            .samples
            .iter()
            .zip(&raw.nodata)
            .map(|(b, &nd)| if nd { 0 } else { u32::from_le_bytes(*b) })
            .collect();
        Ok(RasterData::Labels(LabelRaster::new(raw.grid, labels)?))
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<ProbabilityRaster> {
    let path = path.as_ref();
    match read_any(path)? {
        RasterData::Scores(r) => Ok(r),
        RasterData::Labels(_) => Err(Error::MalformedHeader {
            path: container_paths(path).0,
            reason: format!("expected dtype {DTYPE_F32}, found {DTYPE_U32}"),
        }),
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelRaster> {
    let path = path.as_ref();
    match read_any(path)? {
        RasterData::Labels(r) => Ok(r),
        RasterData::Scores(_) => Err(Error::MalformedHeader {
            path: container_paths(path).0,
            reason: format!("expected dtype {DTYPE_U32}, found {DTYPE_F32}"),
        }),
    }
}

/// Reads a mask from either dtype: `f32le` pixels are set when `>= 0.5`,
/// `u32le` pixels when non-zero. Nodata pixels become invalid.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let raw = read_raw(path)?;
    let bits = if raw.header.dtype == DTYPE_F32 {
        raw.samples
            .iter()
            .map(|b| f32::from_le_bytes(*b) >= 0.5)
            .collect()
    } else {
        raw.samples
            .iter()
            .map(|b| u32::from_le_bytes(*b) != 0)
            .collect()
    };
    let valid = raw.nodata.iter().map(|&nd| !nd).collect();
    BinaryMask::with_validity(raw.grid, bits, valid)
}

fn pack_nodata(nodata: impl ExactSizeIterator<Item = bool>, out: &mut Vec<u8>) {
    let n = nodata.len();
    let start = out.len();
    out.resize(start + n.div_ceil(8), 0);
    for (i, nd) in nodata.enumerate() {
        if nd {
            out[start + i / 8] |= 1 << (i % 8);
        }
    }
}

fn write_container(path: &Path, header: &RasterHeader, payload: &[u8]) -> Result<()> {
    let (header_path, payload_path) = container_paths(path);
    let mut text = serde_json::to_string_pretty(header).expect("header serializes");
    text.push('\n');
    fs::write(&header_path, text).map_err(io_err(&header_path))?;
    fs::write(&payload_path, payload).map_err(io_err(&payload_path))?;
    Ok(())
}

pub fn write_raster(raster: &ProbabilityRaster, path: impl AsRef<Path>) -> Result<()> {
    let header = RasterHeader::for_grid(raster.grid(), DTYPE_F32, raster.nodata_count());
    let mut payload = Vec::with_capacity(header.payload_len());
    for v in raster.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    pack_nodata(raster.nodata().iter().copied(), &mut payload);
    write_container(path.as_ref(), &header, &payload)
}

pub fn write_labels(labels: &LabelRaster, path: impl AsRef<Path>) -> Result<()> {
    let header = RasterHeader::for_grid(labels.grid(), DTYPE_U32, 0);
    let mut payload = Vec::with_capacity(header.payload_len());
    for v in labels.labels() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    pack_nodata(
        std::iter::repeat_n(false, labels.labels().len()),
        &mut payload,
    );
    write_container(path.as_ref(), &header, &payload)
}

/// Masks are stored as `f32le` 0/1 scores; invalid pixels become nodata.
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let values = mask
        .bits()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let nodata = mask.valid().iter().map(|&v| !v).collect();
    let raster = ProbabilityRaster::from_parts_unchecked(mask.grid().clone(), values, nodata);
    write_raster(&raster, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize) -> Grid {
        Grid::new(
            w,
            h,
            GeoTransform::from_gdal([500_000.0, 10.0, 0.0, 3_700_000.0, 0.0, -10.0]).unwrap(),
            "EPSG:32636",
        )
        .unwrap()
    }

    #[test]
    fn reads_values_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let r = ProbabilityRaster::new(grid(2, 2), vec![0.1, 0.2, 0.3, 0.4], None).unwrap();
        write_raster(&r, dir.path().join("a")).unwrap();
        let back = read_raster(dir.path().join("a.json")).unwrap();
        assert_eq!(back.values(), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(back, r);
    }

    #[test]
    fn short_payload_is_a_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let r = ProbabilityRaster::new(grid(2, 2), vec![0.1, 0.2, 0.3, 0.4], None).unwrap();
        write_raster(&r, dir.path().join("a")).unwrap();
        let mut payload = Vec::new();
        for v in [0.1f32, 0.2, 0.3] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        payload.push(0);
        fs::write(dir.path().join("a.bin"), payload).unwrap();
        let err = read_raster(dir.path().join("a")).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 17,
                actual: 13,
                ..
            }
        ));
    }

    #[test]
    fn out_of_range_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = ProbabilityRaster::new(grid(2, 1), vec![0.1, 0.2], None).unwrap();
        write_raster(&r, dir.path().join("a")).unwrap();
        let mut payload = Vec::new();
        for v in [0.1f32, 1.5] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        payload.push(0);
        fs::write(dir.path().join("a.bin"), payload).unwrap();
        let err = read_raster(dir.path().join("a")).unwrap_err();
        assert!(matches!(err, Error::ValueOutOfRange { index: 1, .. }));
    }

    #[test]
    fn nodata_mask_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let nodata = vec![
            false, true, false, false, false, false, false, false, false, true,
        ];
        let mut values = vec![0.5f32; 10];
        values[1] = f32::NAN;
        values[9] = -3.0;
        let r = ProbabilityRaster::new(grid(5, 2), values, Some(nodata)).unwrap();
        write_raster(&r, dir.path().join("nd")).unwrap();
        let header = read_header(dir.path().join("nd")).unwrap();
        assert_eq!(header.nodata_count, 2);
        assert_eq!(
            header.geotransform,
            [500_000.0, 10.0, 0.0, 3_700_000.0, 0.0, -10.0]
        );
        let back = read_raster(dir.path().join("nd")).unwrap();
        assert_eq!(back, r);
        let bytes = fs::read(dir.path().join("nd.bin")).unwrap();
        assert_eq!(&bytes[40..], &[0b0000_0010, 0b0000_0010]);
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let r = ProbabilityRaster::filled(grid(1, 1), 0.0).unwrap();
        let err = write_raster(&r, "/nonexistent-dir/sub/out").unwrap_err();
        assert!(matches!(err, Error::IoFailure { .. }));
    }

    #[test]
    fn header_defects_are_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.json");
        fs::write(&p, r#"{"width":1,"height":1,"dtype":"f64le","geotransform":[0,1,0,0,0,-1],"crs":"x","nodata_count":0}"#).unwrap();
        assert!(matches!(
            read_header(&p),
            Err(Error::MalformedHeader { .. })
        ));
        fs::write(&p, r#"{"width":1,"height":1}"#).unwrap();
        assert!(matches!(
            read_header(&p),
            Err(Error::MalformedHeader { .. })
        ));
        fs::write(&p, r#"{"width":1,"height":1,"dtype":"f32le","geotransform":[0,0,0,0,0,-1],"crs":"x","nodata_count":0}"#).unwrap();
        assert!(matches!(
            read_header(&p),
            Err(Error::MalformedHeader { .. })
        ));
    }

    #[test]
    fn wrong_nodata_count_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let r =
            ProbabilityRaster::new(grid(2, 1), vec![0.1, 0.2], Some(vec![true, false])).unwrap();
        write_raster(&r, dir.path().join("a")).unwrap();
        let p = dir.path().join("a.json");
        let text = fs::read_to_string(&p)
            .unwrap()
            .replace("\"nodata_count\": 1", "\"nodata_count\": 0");
        fs::write(&p, text).unwrap();
        assert!(matches!(
            read_raster(&p),
            Err(Error::MalformedHeader { .. })
        ));
    }

    #[test]
    fn labels_and_masks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelRaster::new(grid(3, 1), vec![0, 7, u32::MAX]).unwrap();
        write_labels(&labels, dir.path().join("l")).unwrap();
        assert_eq!(read_labels(dir.path().join("l")).unwrap(), labels);
        assert_eq!(read_header(dir.path().join("l")).unwrap().dtype, "u32le");
        assert!(read_raster(dir.path().join("l")).is_err());

        let mask =
            BinaryMask::with_validity(grid(3, 1), vec![true, false, true], vec![true, true, false])
                .unwrap();
        write_mask(&mask, dir.path().join("m")).unwrap();
        assert_eq!(read_mask(dir.path().join("m")).unwrap(), mask);
        assert_eq!(
            read_mask(dir.path().join("l")).unwrap().bits(),
            &[false, true, true]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn any_valid_raster_round_trips_bit_exact(
            w in 1usize..9,
            h in 1usize..9,
            seed in proptest::collection::vec((0.0f32..=1.0, any::<bool>(), any::<u32>()), 64),
            gt in (-1e6f64..1e6, 0.5f64..50.0, -1e6f64..1e6, 0.5f64..50.0),
        ) {
            let n = w * h;
            let values: Vec<f32> = (0..n).map(|i| {
                let (v, nd, bits) = seed[i % seed.len()];
                if nd { f32::from_bits(bits) } else { v }
            }).collect();
            let nodata: Vec<bool> = (0..n).map(|i| seed[i % seed.len()].1).collect();
            let grid = Grid::new(w, h, GeoTransform::from_gdal([gt.0, gt.1, 0.0, gt.2, 0.0, -gt.3]).unwrap(), "EPSG:3857").unwrap();
            let r = ProbabilityRaster::new(grid, values, Some(nodata)).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_raster(&r, dir.path().join("p")).unwrap();
            prop_assert_eq!(read_raster(dir.path().join("p")).unwrap(), r);
        }
    }
}
