//! Crop labelling of delineated fields by majority pixel overlap.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LabelRaster};
use crate::vectorize::FieldPolygon;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionEntry {
    pub label: u32,
    pub pixel_count: u64,
    pub wheat_pixel_count: u64,
    pub wheat_fraction: f64,
    pub is_wheat: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub threshold: f64,
    entries: BTreeMap<u32, FusionEntry>,
}

impl FusionReport {
    pub fn get(&self, label: u32) -> Option<&FusionEntry> {
        self.entries.get(&label)
    }

    /// Entries in ascending label order.
    pub fn entries(&self) -> impl Iterator<Item = &FusionEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn wheat_labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries
            .values()
            .filter(|e| e.is_wheat)
            .map(|e| e.label)
    }

    /// Columns `label,pixel_count,wheat_pixel_count,wheat_fraction,is_wheat`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "label,pixel_count,wheat_pixel_count,wheat_fraction,is_wheat"
        )?;
        for e in self.entries() {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.label, e.pixel_count, e.wheat_pixel_count, e.wheat_fraction, e.is_wheat
            )?;
        }
        Ok(())
    }
}

/// Counts wheat pixels per label on the raster domain. A field is wheat
/// when its wheat fraction strictly exceeds `threshold`. Invalid wheat-mask
/// pixels count as non-wheat.
pub fn fuse(labels: &LabelRaster, wheat_mask: &BinaryMask, threshold: f64) -> Result<FusionReport> {
    labels
        .grid()
        .ensure_matches(wheat_mask.grid(), "fuse labels vs wheat mask")?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "overlap threshold {threshold} outside (0, 1)"
        )));
    }
    let max = labels.max_label() as usize;
    let mut counts = vec![(0u64, 0u64); max + 1];
    for (&l, &wheat) in labels.labels().iter().zip(wheat_mask.bits()) {
        let c = &mut counts[l as usize];
        c.0 += 1;
        c.1 += u64::from(wheat);
    }
    let entries = counts
        .into_iter()
        .enumerate()
        .skip(1)
        .filter(|(_, (n, _))| *n > 0)
        .map(|(label, (pixel_count, wheat_pixel_count))| {
            let wheat_fraction = wheat_pixel_count as f64 / pixel_count as f64;
            let label = label as u32;
            let entry = FusionEntry {
                label,
                pixel_count,
                wheat_pixel_count,
                wheat_fraction,
                is_wheat: wheat_fraction > threshold,
            };
            (label, entry)
        })
        .collect();
    Ok(FusionReport { threshold, entries })
}

/// Copies each polygon's wheat fraction and flag from the report.
pub fn annotate(polygons: &[FieldPolygon], report: &FusionReport) -> Result<Vec<FieldPolygon>> {
    polygons
        .iter()
        .map(|p| {
            let entry = report.get(p.id).ok_or(Error::UnknownLabel(p.id))?;
            let mut p = p.clone();
            p.properties.wheat_fraction = Some(entry.wheat_fraction);
            p.properties.is_wheat = Some(entry.is_wheat);
            Ok(p)
        })
        .collect()
}

/// Pixels belonging to labels flagged as wheat.
pub fn wheat_field_mask(labels: &LabelRaster, report: &FusionReport) -> BinaryMask {
    let mut is_wheat = vec![false; labels.max_label() as usize + 1];
    for l in report.wheat_labels() {
        if let Some(slot) = is_wheat.get_mut(l as usize) {
            *slot = true;
        }
    }
    let bits = labels
        .labels()
        .iter()
        .map(|&l| is_wheat[l as usize])
        .collect();
    BinaryMask::new(labels.grid().clone(), bits).expect("same grid length")
}
