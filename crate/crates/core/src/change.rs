//! Multi-year crop area accounting.
//!
//! Flows between two years are plain set arithmetic on the rasterized crop
//! masks, so `persisted + lost` always equals the earlier year's area and
//! `persisted + gained` the later year's, exactly in pixel counts. Areas
//! stay in squared map units internally; km² appear only in the CSV output.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::components::{connected_components, Connectivity};
use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone)]
pub struct YearMask {
    pub year: i32,
    pub mask: BinaryMask,
    /// Number of crop fields when known from the fused polygons; otherwise
    /// counted as connected components of the mask.
    pub field_count: Option<usize>,
}

impl YearMask {
    pub fn new(year: i32, mask: BinaryMask) -> Self {
        YearMask {
            year,
            mask,
            field_count: None,
        }
    }

    pub fn with_field_count(mut self, n: usize) -> Self {
        self.field_count = Some(n);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YearSummary {
    pub year: i32,
    pub pixel_count: u64,
    pub area: f64,
    pub field_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionFlow {
    pub year_from: i32,
    pub year_to: i32,
    pub gained_pixels: u64,
    pub persisted_pixels: u64,
    pub lost_pixels: u64,
    pub gained_area: f64,
    pub persisted_area: f64,
    pub lost_area: f64,
}

impl TransitionFlow {
    pub fn gap(&self) -> i32 {
        self.year_to - self.year_from
    }
}

const M2_TO_KM2: f64 = 1e-6;

pub fn year_summary(m: &YearMask, connectivity: Connectivity) -> Result<YearSummary> {
    let pixel_area = m.mask.grid().checked_pixel_area()?;
    let pixel_count = m.mask.count_true() as u64;
    let field_count = match m.field_count {
        Some(n) => n,
        None => connected_components(&m.mask, connectivity).max_label() as usize,
    };
    Ok(YearSummary {
        year: m.year,
        pixel_count,
        area: pixel_count as f64 * pixel_area,
        field_count,
    })
}

/// Gained, persisted and lost crop area from year `a` to the later year `b`.
pub fn transition(a: &YearMask, b: &YearMask) -> Result<TransitionFlow> {
    a.mask.grid().ensure_matches(
        b.mask.grid(),
        &format!("transition {} vs {}", a.year, b.year),
    )?;
    if a.year >= b.year {
        return Err(Error::YearOrder {
            from: a.year,
            to: b.year,
        });
    }
    let pixel_area = a.mask.grid().checked_pixel_area()?;
    let (mut gained, mut persisted, mut lost) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.mask.bits().iter().zip(b.mask.bits()) {
        match (x, y) {
            (false, true) => gained += 1,
            (true, true) => persisted += 1,
            (true, false) => lost += 1,
            (false, false) => {}
        }
    }
    Ok(TransitionFlow {
        year_from: a.year,
        year_to: b.year,
        gained_pixels: gained,
        persisted_pixels: persisted,
        lost_pixels: lost,
        gained_area: gained as f64 * pixel_area,
        persisted_area: persisted as f64 * pixel_area,
        lost_area: lost as f64 * pixel_area,
    })
}

/// One flow for every pair of years whose difference is one of `gaps`,
/// sorted by `(gap, year_from)`.
pub fn flow_table(masks: &[YearMask], gaps: &[i32]) -> Result<Vec<TransitionFlow>> {
    if masks.len() < 2 {
        return Err(Error::InsufficientYears(masks.len()));
    }
    if let Some(&bad) = gaps.iter().find(|&&g| g <= 0) {
        return Err(Error::InvalidGap(bad));
    }
    let mut ordered: Vec<&YearMask> = masks.iter().collect();
    ordered.sort_by_key(|m| m.year);
    for w in ordered.windows(2) {
        if w[0].year == w[1].year {
            return Err(Error::YearOrder {
                from: w[0].year,
                to: w[1].year,
            });
        }
        ordered[0].mask.grid().ensure_matches(
            w[1].mask.grid(),
            &format!("year {} vs {}", ordered[0].year, w[1].year),
        )?;
    }

    let mut gaps = gaps.to_vec();
    gaps.sort_unstable();
    gaps.dedup();
    let mut pairs = Vec::new();
    for &gap in &gaps {
        for a in &ordered {
            if let Some(b) = ordered.iter().find(|b| b.year - a.year == gap) {
                pairs.push((*a, *b));
            }
        }
    }
    pairs.par_iter().map(|(a, b)| transition(a, b)).collect()
}

/// Columns `year_from,year_to,gap,gained_km2,persisted_km2,lost_km2`.
pub fn write_flow_csv<W: Write>(flows: &[TransitionFlow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "year_from,year_to,gap,gained_km2,persisted_km2,lost_km2"
    )?;
    for f in flows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            f.year_from,
            f.year_to,
            f.gap(),
            f.gained_area * M2_TO_KM2,
            f.persisted_area * M2_TO_KM2,
            f.lost_area * M2_TO_KM2
        )?;
    }
    Ok(())
}

/// Columns `year,area_km2,field_count`.
pub fn write_summary_csv<W: Write>(years: &[YearSummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "year,area_km2,field_count")?;
    for y in years {
        writeln!(out, "{},{},{}", y.year, y.area * M2_TO_KM2, y.field_count)?;
    }
    Ok(())
}
