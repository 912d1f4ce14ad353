//! Agricultural field delineation from per-pixel probability rasters.
//!
//! The pipeline turns field and boundary score maps into instance labels
//! (gradual thresholding, a basins mask, then marker-based watershed),
//! vectorizes the instances into georeferenced polygons, and labels each
//! field with a crop flag from a crop score map by majority overlap.
//! Companion modules score predicted masks against ground truth and account
//! for crop area gained, kept and lost between years.
//!
//! ```text
//! field scores ──gradual──┐
//!                         ├─ basins ─ seeds ─ watershed ─ area filter ─ polygonize ─ RDP
//! boundary scores─gradual─┘                                   │
//! crop scores ───────────── binarize ───────────────────── fuse ─ annotate
//! ```

pub mod change;
pub mod components;
pub mod container;
pub mod error;
pub mod fusion;
pub mod geojson;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod threshold;
pub mod vectorize;
pub mod watershed;

pub use components::{connected_components, Connectivity};
pub use error::{Error, Result};
pub use raster::{pixel_area, BinaryMask, GeoTransform, Grid, LabelRaster, ProbabilityRaster};
pub use threshold::PipelineConfig;
pub use vectorize::{FieldPolygon, FieldProperties, Point, Ring};
