//! Georeferenced grid types shared by every stage of the pipeline.
//!
//! All grids are row-major with row 0 at the top (north-up when
//! `pixel_height < 0`). Rasters are immutable once constructed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Six-parameter affine map from pixel indices to map coordinates.
///
/// `x = origin_x + col * pixel_width + row * row_rotation`
/// `y = origin_y + col * col_rotation + row * pixel_height`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
    pub row_rotation: f64,
    pub col_rotation: f64,
}

impl GeoTransform {
    /// North-up transform with square pixels.
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_size: f64) -> Result<Self> {
        Self::from_gdal([origin_x, pixel_size, 0.0, origin_y, 0.0, -pixel_size])
    }

    /// Builds from the GDAL coefficient order
    /// `[origin_x, pixel_width, row_rotation, origin_y, col_rotation, pixel_height]`.
    pub fn from_gdal(c: [f64; 6]) -> Result<Self> {
        let gt = GeoTransform {
            origin_x: c[0],
            pixel_width: c[1],
            row_rotation: c[2],
            origin_y: c[3],
            col_rotation: c[4],
            pixel_height: c[5],
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn to_gdal(&self) -> [f64; 6] {
        [
            self.origin_x,
            self.pixel_width,
            self.row_rotation,
            self.origin_y,
            self.col_rotation,
            self.pixel_height,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_gdal().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeoTransform("non-finite coefficient".into()));
        }
        if self.pixel_width == 0.0 || self.pixel_height == 0.0 {
            return Err(Error::InvalidGeoTransform("zero pixel size".into()));
        }
        if self.determinant() == 0.0 {
            return Err(Error::InvalidGeoTransform("singular affine".into()));
        }
        Ok(())
    }

    pub fn determinant(&self) -> f64 {
        self.pixel_width * self.pixel_height - self.row_rotation * self.col_rotation
    }

    pub fn is_rotated(&self) -> bool {
        self.row_rotation != 0.0 || self.col_rotation != 0.0
    }

    /// Map coordinate of the pixel-lattice corner `(col, row)`.
    #[inline]
    pub fn apply(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.pixel_width + row * self.row_rotation,
            self.origin_y + col * self.col_rotation + row * self.pixel_height,
        )
    }
}

/// Ground area covered by one pixel, in squared map units.
pub fn pixel_area(gt: &GeoTransform) -> f64 {
    gt.determinant().abs()
}

/// Dimensions and georeferencing shared by rasters that can be combined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub geotransform: GeoTransform,
    pub crs: String,
}

const GEOGRAPHIC_CODES: &[&str] = &[
    "EPSG:4326",
    "EPSG:4258",
    "EPSG:4269",
    "EPSG:4267",
    "EPSG:4230",
    "EPSG:4283",
    "EPSG:4674",
    "OGC:CRS84",
    "CRS:84",
];

impl Grid {
    pub fn new(
        width: usize,
        height: usize,
        geotransform: GeoTransform,
        crs: impl Into<String>,
    ) -> Result<Self> {
        geotransform.validate()?;
        Ok(Grid {
            width,
            height,
            geotransform,
            crs: crs.into(),
        })
    }

    /// North-up grid anchored at the origin, convenient for tests and synthetic scenes.
    pub fn simple(width: usize, height: usize, pixel_size: f64) -> Self {
        let gt = GeoTransform::north_up(0.0, height as f64 * pixel_size, pixel_size)
            .expect("pixel size must be finite and non-zero");
        Grid {
            width,
            height,
            geotransform: gt,
            crs: "LOCAL:METERS".into(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Heuristic on the CRS identifier: well-known geographic EPSG codes,
    /// PROJ `longlat` strings and WKT `GEOGCS`/`GEOGCRS` roots.
    pub fn is_geographic(&self) -> bool {
        let crs = self.crs.trim().to_ascii_uppercase();
        GEOGRAPHIC_CODES.iter().any(|c| crs == *c)
            || crs.contains("+PROJ=LONGLAT")
            || crs.contains("+PROJ=LATLONG")
            || crs.starts_with("GEOGCS")
            || crs.starts_with("GEOGCRS")
    }

    pub fn pixel_area(&self) -> f64 {
        pixel_area(&self.geotransform)
    }

    /// Pixel area for operations that report areas; refuses degree-based grids.
    pub fn checked_pixel_area(&self) -> Result<f64> {
        if self.is_geographic() {
            return Err(Error::GeographicCrs(self.crs.clone()));
        }
        Ok(self.pixel_area())
    }

    pub fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::GridMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.geotransform != other.geotransform {
            return Err(Error::GridMismatch(format!("{what}: geotransforms differ")));
        }
        if self.crs != other.crs {
            return Err(Error::GridMismatch(format!(
                "{what}: crs {:?} vs {:?}",
                self.crs, other.crs
            )));
        }
        Ok(())
    }
}

/// Per-pixel scores in `[0, 1]` with an explicit nodata mask.
#[derive(Debug, Clone)]
pub struct ProbabilityRaster {
    grid: Grid,
    values: Vec<f32>,
    nodata: Vec<bool>,
}

impl ProbabilityRaster {
    /// Validates length and range; values under nodata pixels are unconstrained.
    pub fn new(grid: Grid, values: Vec<f32>, nodata: Option<Vec<bool>>) -> Result<Self> {
        let n = grid.len();
        if values.len() != n {
            return Err(Error::BadLength {
                expected: n,
                actual: values.len(),
            });
        }
        let nodata = nodata.unwrap_or_else(|| vec![false; n]);
        if nodata.len() != n {
            return Err(Error::BadLength {
                expected: n,
                actual: nodata.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|&(i, v)| !nodata[i] && !(0.0..=1.0).contains(v))
        {
            return Err(Error::ValueOutOfRange { index, value });
        }
        Ok(ProbabilityRaster {
            grid,
            values,
            nodata,
        })
    }

    pub fn filled(grid: Grid, value: f32) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![value; n], None)
    }

    /// Construction from parts already known to satisfy the invariants.
    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f32>, nodata: Vec<bool>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        debug_assert_eq!(nodata.len(), grid.len());
        ProbabilityRaster {
            grid,
            values,
            nodata,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn nodata(&self) -> &[bool] {
        &self.nodata
    }

    pub fn nodata_count(&self) -> usize {
        self.nodata.iter().filter(|&&b| b).count()
    }

    /// Score at pixel `index`, or `None` under nodata.
    #[inline]
    pub fn get(&self, index: usize) -> Option<f32> {
        if self.nodata[index] {
            None
        } else {
            Some(self.values[index])
        }
    }
}

// Bitwise so that round-trips are checked exactly, nodata payloads included.
impl PartialEq for ProbabilityRaster {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.nodata == other.nodata
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Instance labels; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    grid: Grid,
    labels: Vec<u32>,
}

impl LabelRaster {
    pub fn new(grid: Grid, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::BadLength {
                expected: grid.len(),
                actual: labels.len(),
            });
        }
        Ok(LabelRaster { grid, labels })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        LabelRaster {
            grid,
            labels: vec![0; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Distinct non-zero labels in ascending order.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::new(
            self.grid.clone(),
            self.labels.iter().map(|&l| l != 0).collect(),
        )
        .expect("same length")
    }
}

/// Boolean per-pixel mask. Pixels flagged invalid carry no observation and
/// are excluded from metric accounting; their bit is always false.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    bits: Vec<bool>,
    valid: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, bits: Vec<bool>) -> Result<Self> {
        let n = grid.len();
        Self::with_validity(grid, bits, vec![true; n])
    }

    pub fn with_validity(grid: Grid, mut bits: Vec<bool>, valid: Vec<bool>) -> Result<Self> {
        let n = grid.len();
        for len in [bits.len(), valid.len()] {
            if len != n {
                return Err(Error::BadLength {
                    expected: n,
                    actual: len,
                });
            }
        }
        for (b, &v) in bits.iter_mut().zip(&valid) {
            *b &= v;
        }
        Ok(BinaryMask { grid, bits, valid })
    }

    pub fn empty(grid: Grid) -> Self {
        let n = grid.len();
        BinaryMask {
            grid,
            bits: vec![false; n],
            valid: vec![true; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_area_of_sentinel_grid() {
        let gt = GeoTransform::from_gdal([0.0, 10.0, 0.0, 0.0, 0.0, -10.0]).unwrap();
        assert_eq!(pixel_area(&gt), 100.0);
        let gt = GeoTransform::from_gdal([0.0, 1.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!(pixel_area(&gt), 1.0);
    }

    #[test]
    fn pixel_area_times_count_converts_to_km2() {
        let gt = GeoTransform::from_gdal([0.0, 10.0, 0.0, 0.0, 0.0, -10.0]).unwrap();
        let total = 1_000_000.0 * pixel_area(&gt);
        assert_eq!(total, 1.0e8);
        assert_eq!(total * 1e-6, 100.0);
        assert!((1000.0 * pixel_area(&gt) * 1e-6 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pixel_area_ignores_sign_of_pixel_height() {
        let up = GeoTransform::from_gdal([5.0, 3.0, 0.5, 7.0, 0.25, -2.0]).unwrap();
        let down = GeoTransform::from_gdal([5.0, 3.0, 0.5, 7.0, 0.25, 2.0]).unwrap();
        assert_eq!(pixel_area(&up), 6.125);
        assert_eq!(pixel_area(&down), 5.875);
        let flipped = GeoTransform::from_gdal([5.0, 3.0, 0.0, 7.0, 0.0, 2.0]).unwrap();
        let unflipped = GeoTransform::from_gdal([5.0, 3.0, 0.0, 7.0, 0.0, -2.0]).unwrap();
        assert_eq!(pixel_area(&flipped), pixel_area(&unflipped));
    }

    #[test]
    fn degenerate_geotransforms_are_rejected() {
        assert!(GeoTransform::from_gdal([0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).is_err());
        assert!(GeoTransform::from_gdal([0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(GeoTransform::from_gdal([0.0, f64::NAN, 0.0, 0.0, 0.0, -1.0]).is_err());
    }

    #[test]
    fn out_of_range_scores_are_rejected_unless_nodata() {
        let grid = Grid::simple(2, 1, 10.0);
        let err = ProbabilityRaster::new(grid.clone(), vec![0.5, 1.5], None).unwrap_err();
        assert!(matches!(err, Error::ValueOutOfRange { index: 1, .. }));
        assert!(ProbabilityRaster::new(grid.clone(), vec![0.5, f32::NAN], None).is_err());
        assert!(ProbabilityRaster::new(grid, vec![0.5, 1.5], Some(vec![false, true])).is_ok());
    }

    #[test]
    fn geographic_crs_refuses_area() {
        let mut grid = Grid::simple(1, 1, 1.0);
        grid.crs = "EPSG:4326".into();
        assert!(matches!(
            grid.checked_pixel_area(),
            Err(Error::GeographicCrs(_))
        ));
        grid.crs = "EPSG:32636".into();
        assert_eq!(grid.checked_pixel_area().unwrap(), 1.0);
        grid.crs = "+proj=longlat +datum=WGS84".into();
        assert!(grid.is_geographic());
    }

    #[test]
    fn invalid_mask_pixels_are_never_set() {
        let grid = Grid::simple(2, 1, 1.0);
        let m = BinaryMask::with_validity(grid, vec![true, true], vec![true, false]).unwrap();
        assert_eq!(m.bits(), &[true, false]);
    }
}
