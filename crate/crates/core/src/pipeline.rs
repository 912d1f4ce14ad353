//! End-to-end stage composition with per-stage timing and error attribution.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::components::connected_components;
use crate::error::Error;
use crate::fusion::{annotate, fuse, FusionReport};
use crate::raster::{BinaryMask, LabelRaster, ProbabilityRaster};
use crate::threshold::{argmax_mask, basins_mask, gradual_threshold, PipelineConfig};
use crate::vectorize::{polygonize, simplify_rdp, FieldPolygon};
use crate::watershed::{extract_seeds, filter_small_labels, watershed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    GradualField,
    GradualBoundary,
    Basins,
    Seeds,
    Watershed,
    Argmax,
    Components,
    AreaFilter,
    Polygonize,
    Simplify,
    Fusion,
    Annotate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::GradualField => "gradual_threshold(field)",
            Stage::GradualBoundary => "gradual_threshold(boundary)",
            Stage::Basins => "basins_mask",
            Stage::Seeds => "extract_seeds",
            Stage::Watershed => "watershed",
            Stage::Argmax => "argmax_mask",
            Stage::Components => "connected_components",
            Stage::AreaFilter => "filter_small_labels",
            Stage::Polygonize => "polygonize",
            Stage::Simplify => "simplify_rdp",
            Stage::Fusion => "fuse",
            Stage::Annotate => "annotate",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Wall-clock duration of each stage, in execution order.
#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(Stage, Duration)>);

impl Timings {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((stage, start.elapsed()));
        out
    }

    pub fn total(&self) -> Duration {
        self.0.iter().map(|(_, d)| *d).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: LabelRaster,
    pub seed_count: u32,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct Delineation {
    pub labels: LabelRaster,
    pub polygons: Vec<FieldPolygon>,
    pub seed_count: u32,
    pub timings: Timings,
}

/// Gradual thresholds, basins, seeds, watershed and the small-field filter.
pub fn segment(
    field_scores: &ProbabilityRaster,
    boundary_scores: &ProbabilityRaster,
    config: &PipelineConfig,
) -> StageResult<Segmentation> {
    config.validate().at(Stage::Config)?;
    let mut t = Timings::default();
    let fields = t
        .time(Stage::GradualField, || {
            gradual_threshold(field_scores, config.t_field)
        })
        .at(Stage::GradualField)?;
    let boundaries = t
        .time(Stage::GradualBoundary, || {
            gradual_threshold(boundary_scores, config.t_boundary)
        })
        .at(Stage::GradualBoundary)?;
    let basins = t
        .time(Stage::Basins, || basins_mask(&fields, &boundaries))
        .at(Stage::Basins)?;
    let seeds = t.time(Stage::Seeds, || extract_seeds(&basins, config.connectivity));
    let flood_bits = (0..fields.grid().len())
        .map(|i| fields.get(i).is_some_and(|v| v > 0.0))
        .collect();
    let flood_mask = BinaryMask::new(fields.grid().clone(), flood_bits).at(Stage::Watershed)?;
    let flooded = t
        .time(Stage::Watershed, || {
            watershed(&fields, &seeds, &flood_mask, config.connectivity)
        })
        .at(Stage::Watershed)?;
    let labels = t
        .time(Stage::AreaFilter, || {
            filter_small_labels(&flooded, config.min_field_area)
        })
        .at(Stage::AreaFilter)?;
    Ok(Segmentation {
        labels,
        seed_count: seeds.seed_count,
        timings: t,
    })
}

/// Baseline segmentation: per-pixel argmax over (background, field,
/// boundary), where background is `1 - field - boundary` clamped to `[0, 1]`,
/// then connected components of the field class and the small-field filter.
pub fn segment_argmax(
    field_scores: &ProbabilityRaster,
    boundary_scores: &ProbabilityRaster,
    config: &PipelineConfig,
) -> StageResult<Segmentation> {
    config.validate().at(Stage::Config)?;
    let mut t = Timings::default();
    field_scores
        .grid()
        .ensure_matches(boundary_scores.grid(), "argmax field vs boundary")
        .at(Stage::Argmax)?;
    let mask = t
        .time(Stage::Argmax, || {
            let n = field_scores.grid().len();
            let mut values = Vec::with_capacity(n);
            let mut nodata = Vec::with_capacity(n);
            for i in 0..n {
                match (field_scores.get(i), boundary_scores.get(i)) {
                    (Some(f), Some(b)) => {
                        values.push((1.0 - f - b).clamp(0.0, 1.0));
                        nodata.push(false);
                    }
                    _ => {
                        values.push(0.0);
                        nodata.push(true);
                    }
                }
            }
            let background =
                ProbabilityRaster::new(field_scores.grid().clone(), values, Some(nodata))?;
            argmax_mask(
                &[background, field_scores.clone(), boundary_scores.clone()],
                1,
            )
        })
        .at(Stage::Argmax)?;
    let components = t.time(Stage::Components, || {
        connected_components(&mask, config.connectivity)
    });
    let seed_count = components.max_label();
    let labels = t
        .time(Stage::AreaFilter, || {
            filter_small_labels(&components, config.min_field_area)
        })
        .at(Stage::AreaFilter)?;
    Ok(Segmentation {
        labels,
        seed_count,
        timings: t,
    })
}

/// Polygonizes labels and simplifies every polygon with `rdp_epsilon`.
pub fn vectorize(
    labels: &LabelRaster,
    config: &PipelineConfig,
    timings: &mut Timings,
) -> StageResult<Vec<FieldPolygon>> {
    let raw = timings
        .time(Stage::Polygonize, || polygonize(labels))
        .at(Stage::Polygonize)?;
    let eps = config.rdp_epsilon;
    Ok(timings.time(Stage::Simplify, || {
        raw.par_iter().map(|p| simplify_rdp(p, eps)).collect()
    }))
}

/// Full delineation: segmentation followed by vectorization.
pub fn delineate(
    field_scores: &ProbabilityRaster,
    boundary_scores: &ProbabilityRaster,
    config: &PipelineConfig,
) -> StageResult<Delineation> {
    let Segmentation {
        labels,
        seed_count,
        mut timings,
    } = segment(field_scores, boundary_scores, config)?;
    let polygons = vectorize(&labels, config, &mut timings)?;
    Ok(Delineation {
        labels,
        polygons,
        seed_count,
        timings,
    })
}

/// Fusion report for `labels` and the polygons annotated from it.
pub fn fuse_fields(
    labels: &LabelRaster,
    polygons: &[FieldPolygon],
    wheat_mask: &BinaryMask,
    config: &PipelineConfig,
    timings: &mut Timings,
) -> StageResult<(FusionReport, Vec<FieldPolygon>)> {
    let report = timings
        .time(Stage::Fusion, || {
            fuse(labels, wheat_mask, config.wheat_overlap_threshold)
        })
        .at(Stage::Fusion)?;
    let annotated = timings
        .time(Stage::Annotate, || annotate(polygons, &report))
        .at(Stage::Annotate)?;
    Ok((report, annotated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;
    use crate::synth::{generate, SceneSpec};
    use std::collections::HashMap;

    /// Every predicted label lies within one truth parcel and no truth
    /// parcel is split across predicted labels.
    fn assert_partition_agrees(pred: &LabelRaster, truth: &LabelRaster) {
        let mut pred_to_truth = HashMap::new();
        let mut truth_to_pred = HashMap::new();
        for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
            if p == 0 {
                continue;
            }
            assert_eq!(
                *pred_to_truth.entry(p).or_insert(t),
                t,
                "pred {p} spans parcels"
            );
            assert_eq!(*truth_to_pred.entry(t).or_insert(p), p, "parcel {t} split");
        }
    }

    #[test]
    fn noiseless_scene_is_recovered_by_both_pipelines() {
        let spec = SceneSpec {
            rng_seed: 11,
            width: 128,
            height: 128,
            n_parcels: 15,
            boundary_width: 1.0,
            noise_sigma: 0.0,
            ..SceneSpec::default()
        };
        let scene = generate(&spec).unwrap();
        let config = PipelineConfig {
            min_field_area: 0.0,
            ..PipelineConfig::default()
        };
        let gradual = segment(&scene.field_scores, &scene.boundary_scores, &config).unwrap();
        let argmax = segment_argmax(&scene.field_scores, &scene.boundary_scores, &config).unwrap();
        for seg in [&gradual, &argmax] {
            assert_partition_agrees(&seg.labels, &scene.truth_labels);
            assert_eq!(seg.labels.max_label(), 15);
        }
    }

    #[test]
    fn zero_field_scores_give_no_fields() {
        let grid = Grid::simple(16, 16, 10.0);
        let zero = ProbabilityRaster::filled(grid.clone(), 0.0).unwrap();
        let d = delineate(&zero, &zero, &PipelineConfig::default()).unwrap();
        assert!(d.polygons.is_empty());
        assert_eq!(d.labels.max_label(), 0);
    }

    #[test]
    fn errors_name_their_stage() {
        let a = ProbabilityRaster::filled(Grid::simple(4, 4, 10.0), 0.5).unwrap();
        let b = ProbabilityRaster::filled(Grid::simple(4, 5, 10.0), 0.5).unwrap();
        let err = delineate(&a, &b, &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Basins);
        assert!(matches!(err.source, Error::GridMismatch(_)));
        assert!(err.to_string().contains("basins_mask"));

        let bad = PipelineConfig {
            t_field: 2.0,
            ..PipelineConfig::default()
        };
        assert_eq!(delineate(&a, &a, &bad).unwrap_err().stage, Stage::Config);
    }

    #[test]
    fn polygons_cover_labelled_area() {
        let scene = generate(&SceneSpec {
            rng_seed: 5,
            width: 96,
            height: 96,
            n_parcels: 10,
            ..SceneSpec::default()
        })
        .unwrap();
        let config = PipelineConfig {
            rdp_epsilon: 0.0,
            ..PipelineConfig::default()
        };
        let d = delineate(&scene.field_scores, &scene.boundary_scores, &config).unwrap();
        let labelled = d.labels.labels().iter().filter(|&&l| l != 0).count() as f64 * 100.0;
        let total: f64 = d.polygons.iter().map(|p| p.area).sum();
        assert!((total - labelled).abs() < 1e-6);
        assert!(!d.polygons.is_empty());
    }
}
