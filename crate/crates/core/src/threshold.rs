//! Score thresholding: gradual thresholding, the basins mask that seeds the
//! watershed, hard binarization and the argmax baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::Connectivity;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbabilityRaster};

/// Every threshold and tolerance the delineation pipeline consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Gradual threshold applied to boundary scores.
    pub t_boundary: f64,
    /// Gradual threshold applied to field scores.
    pub t_field: f64,
    /// Fields smaller than this (map units²) are dropped.
    pub min_field_area: f64,
    /// RDP tolerance in map units.
    pub rdp_epsilon: f64,
    /// A field is wheat when its wheat-pixel fraction strictly exceeds this.
    pub wheat_overlap_threshold: f64,
    pub connectivity: Connectivity,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            t_boundary: 0.8,
            t_field: 0.2,
            min_field_area: 1000.0,
            rdp_epsilon: 10.0,
            wheat_overlap_threshold: 0.5,
            connectivity: Connectivity::Four,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.t_boundary) {
            return bad(format!("t_boundary {} outside [0, 1]", self.t_boundary));
        }
        if !(0.0..=1.0).contains(&self.t_field) {
            return bad(format!("t_field {} outside [0, 1]", self.t_field));
        }
        if !(self.wheat_overlap_threshold > 0.0 && self.wheat_overlap_threshold < 1.0) {
            return bad(format!(
                "wheat_overlap_threshold {} outside (0, 1)",
                self.wheat_overlap_threshold
            ));
        }
        if !(self.min_field_area >= 0.0 && self.min_field_area.is_finite()) {
            return bad(format!(
                "min_field_area {} must be >= 0",
                self.min_field_area
            ));
        }
        if !(self.rdp_epsilon >= 0.0 && self.rdp_epsilon.is_finite()) {
            return bad(format!("rdp_epsilon {} must be >= 0", self.rdp_epsilon));
        }
        Ok(())
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::ThresholdOutOfRange(t))
    }
}

/// Zeroes scores below `t` and keeps scores at or above it unchanged.
/// Nodata pixels pass through untouched.
pub fn gradual_threshold(r: &ProbabilityRaster, t: f64) -> Result<ProbabilityRaster> {
    check_threshold(t)?;
    let values = r
        .values()
        .par_iter()
        .zip(r.nodata().par_iter())
        .map(|(&v, &nd)| if nd || f64::from(v) >= t { v } else { 0.0 })
        .collect();
    Ok(ProbabilityRaster::from_parts_unchecked(
        r.grid().clone(),
        values,
        r.nodata().to_vec(),
    ))
}

/// `fields * (1 - boundaries)`, nodata wherever either operand is nodata.
pub fn basins_mask(
    gradual_fields: &ProbabilityRaster,
    gradual_boundaries: &ProbabilityRaster,
) -> Result<ProbabilityRaster> {
    gradual_fields.grid().ensure_matches(
        gradual_boundaries.grid(),
        "basins_mask fields vs boundaries",
    )?;
    let (values, nodata): (Vec<f32>, Vec<bool>) = (0..gradual_fields.grid().len())
        .into_par_iter()
        .map(
            |i| match (gradual_fields.get(i), gradual_boundaries.get(i)) {
                (Some(f), Some(b)) => ((f64::from(f) * (1.0 - f64::from(b))) as f32, false),
                _ => (0.0, true),
            },
        )
        .unzip();
    Ok(ProbabilityRaster::from_parts_unchecked(
        gradual_fields.grid().clone(),
        values,
        nodata,
    ))
}

/// Pixels whose score is at least `t`; nodata pixels are false and invalid.
pub fn binarize(r: &ProbabilityRaster, t: f64) -> Result<BinaryMask> {
    check_threshold(t)?;
    let bits = r
        .values()
        .par_iter()
        .zip(r.nodata().par_iter())
        .map(|(&v, &nd)| !nd && f64::from(v) >= t)
        .collect();
    let valid = r.nodata().iter().map(|&nd| !nd).collect();
    BinaryMask::with_validity(r.grid().clone(), bits, valid)
}

/// Per-pixel argmax over class scores; true where `target_class` wins.
///
/// Ties go to the lowest class index, so the target must be strictly
/// greater than every lower-indexed class. A pixel that is nodata in any
/// class is false and invalid.
pub fn argmax_mask(class_scores: &[ProbabilityRaster], target_class: usize) -> Result<BinaryMask> {
    if class_scores.len() < 2 || target_class >= class_scores.len() {
        return Err(Error::BadClassIndex {
            index: target_class,
            classes: class_scores.len(),
        });
    }
    let grid = class_scores[0].grid();
    for (k, r) in class_scores.iter().enumerate().skip(1) {
        grid.ensure_matches(r.grid(), &format!("argmax_mask class {k} vs class 0"))?;
    }
    let (bits, valid): (Vec<bool>, Vec<bool>) = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut best = 0usize;
            let mut best_score = f32::NEG_INFINITY;
            for (k, r) in class_scores.iter().enumerate() {
                match r.get(i) {
                    None => return (false, false),
                    Some(s) if s > best_score => {
                        best = k;
                        best_score = s;
                    }
                    Some(_) => {}
                }
            }
            (best == target_class, true)
        })
        .unzip();
    BinaryMask::with_validity(grid.clone(), bits, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;
    use proptest::prelude::*;

    fn raster(values: &[f32]) -> ProbabilityRaster {
        ProbabilityRaster::new(Grid::simple(values.len(), 1, 10.0), values.to_vec(), None).unwrap()
    }

    #[test]
    fn gradual_keeps_scores_at_or_above_threshold() {
        let g = gradual_threshold(&raster(&[0.85, 0.5, 0.8]), 0.8).unwrap();
        assert_eq!(g.values(), &[0.85, 0.0, 0.8]);
        let g = gradual_threshold(&raster(&[0.0]), 0.0).unwrap();
        assert_eq!(g.values(), &[0.0]);
        assert!(matches!(
            gradual_threshold(&raster(&[0.1]), 1.2),
            Err(Error::ThresholdOutOfRange(_))
        ));
    }

    #[test]
    fn gradual_preserves_nodata() {
        let r = ProbabilityRaster::new(
            Grid::simple(2, 1, 1.0),
            vec![0.1, 0.9],
            Some(vec![true, false]),
        )
        .unwrap();
        let g = gradual_threshold(&r, 0.5).unwrap();
        assert_eq!(g.nodata(), &[true, false]);
        assert_eq!(g.values(), &[0.1, 0.9]);
        assert_eq!(g.grid(), r.grid());
    }

    #[test]
    fn basins_attenuate_fields_by_boundaries() {
        let b = basins_mask(&raster(&[1.0, 0.9, 0.6]), &raster(&[0.0, 1.0, 0.9])).unwrap();
        assert_eq!(b.values()[0], 1.0);
        assert_eq!(b.values()[1], 0.0);
        assert!((b.values()[2] - 0.06).abs() < 1e-6);
    }

    #[test]
    fn basins_propagate_nodata_and_check_grids() {
        let f = ProbabilityRaster::new(
            Grid::simple(2, 1, 1.0),
            vec![0.5, 0.5],
            Some(vec![false, true]),
        )
        .unwrap();
        let b = ProbabilityRaster::new(
            Grid::simple(2, 1, 1.0),
            vec![0.5, 0.5],
            Some(vec![true, false]),
        )
        .unwrap();
        assert_eq!(basins_mask(&f, &b).unwrap().nodata(), &[true, true]);
        let other = ProbabilityRaster::new(Grid::simple(1, 2, 1.0), vec![0.5, 0.5], None).unwrap();
        assert!(matches!(
            basins_mask(&f, &other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn argmax_picks_strict_winner_with_low_index_ties() {
        let bg = raster(&[0.1, 0.4, 0.0]);
        let field = raster(&[0.7, 0.4, 1.0]);
        let boundary = raster(&[0.2, 0.2, 0.0]);
        let m = argmax_mask(&[bg, field, boundary], 1).unwrap();
        assert_eq!(m.bits(), &[true, false, true]);
    }

    #[test]
    fn argmax_rejects_bad_class_lists() {
        let a = raster(&[0.1]);
        assert!(matches!(
            argmax_mask(std::slice::from_ref(&a), 0),
            Err(Error::BadClassIndex { .. })
        ));
        assert!(matches!(
            argmax_mask(&[a.clone(), a.clone()], 2),
            Err(Error::BadClassIndex { .. })
        ));
        let b = ProbabilityRaster::new(Grid::simple(1, 1, 2.0), vec![0.2], None).unwrap();
        assert!(matches!(
            argmax_mask(&[a, b], 1),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn binarize_is_inclusive_and_drops_nodata() {
        let r = ProbabilityRaster::new(
            Grid::simple(3, 1, 1.0),
            vec![0.8, 0.79, 0.95],
            Some(vec![false, false, true]),
        )
        .unwrap();
        let m = binarize(&r, 0.8).unwrap();
        assert_eq!(m.bits(), &[true, false, false]);
        assert_eq!(m.valid(), &[true, true, false]);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = PipelineConfig::default();
        assert_eq!(
            (c.t_boundary, c.t_field, c.min_field_area, c.rdp_epsilon),
            (0.8, 0.2, 1000.0, 10.0)
        );
        assert_eq!(c.wheat_overlap_threshold, 0.5);
        assert_eq!(c.connectivity, Connectivity::Four);
        c.validate().unwrap();
        let parsed: PipelineConfig =
            serde_json::from_str(r#"{"t_field": 0.3, "connectivity": 8}"#).unwrap();
        assert_eq!(parsed.t_field, 0.3);
        assert_eq!(parsed.connectivity, Connectivity::Eight);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"t_fields": 0.3}"#).is_err());
        for bad in [
            PipelineConfig {
                t_boundary: 1.1,
                ..c.clone()
            },
            PipelineConfig {
                wheat_overlap_threshold: 1.0,
                ..c.clone()
            },
            PipelineConfig {
                min_field_area: -1.0,
                ..c.clone()
            },
            PipelineConfig {
                rdp_epsilon: f64::NAN,
                ..c.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn scores() -> impl Strategy<Value = ProbabilityRaster> {
        proptest::collection::vec((0.0f32..=1.0, proptest::bool::weighted(0.1)), 1..64).prop_map(
            |v| {
                let (values, nodata): (Vec<f32>, Vec<bool>) = v.into_iter().unzip();
                ProbabilityRaster::new(Grid::simple(values.len(), 1, 10.0), values, Some(nodata))
                    .unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn gradual_is_idempotent(r in scores(), t in 0.0f64..=1.0) {
            let once = gradual_threshold(&r, t).unwrap();
            prop_assert_eq!(gradual_threshold(&once, t).unwrap(), once);
        }

        #[test]
        fn gradual_at_zero_is_identity(r in scores()) {
            prop_assert_eq!(gradual_threshold(&r, 0.0).unwrap(), r);
        }

        #[test]
        fn basins_bounded_by_fields(f in scores(), seed in proptest::collection::vec(0.0f32..=1.0, 64)) {
            let b = ProbabilityRaster::new(f.grid().clone(), seed[..f.grid().len()].to_vec(), None).unwrap();
            let out = basins_mask(&f, &b).unwrap();
            for i in 0..out.grid().len() {
                if let Some(v) = out.get(i) {
                    prop_assert!(v >= 0.0 && v <= f.get(i).unwrap());
                }
            }
        }

        #[test]
        fn binarize_after_gradual_composes(r in scores(), t in 0.0f64..=1.0, t2 in 0.001f64..=1.0) {
            let lhs = binarize(&gradual_threshold(&r, t).unwrap(), t2).unwrap();
            let rhs = binarize(&r, t.max(t2)).unwrap();
            prop_assert_eq!(lhs.bits(), rhs.bits());
        }
    }
}
