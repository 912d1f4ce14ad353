//! Marker-based watershed on field scores.
//!
//! Seeds are the connected components of the positive basins mask. Flooding
//! proceeds from the seeds over the flood mask in order of increasing depth,
//! where depth is the negated field score, so the most field-like pixels are
//! claimed first. Equal depths are served first-in first-out, which makes the
//! result fully deterministic on plateaus.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::components::{connected_components, Connectivity};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LabelRaster, ProbabilityRaster};

/// Seed regions labelled `1..=seed_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    pub labels: LabelRaster,
    pub seed_count: u32,
}

/// Components of `{basins > 0}` under `connectivity`, in raster-scan order.
pub fn extract_seeds(basins: &ProbabilityRaster, connectivity: Connectivity) -> SeedSet {
    let bits = (0..basins.grid().len())
        .map(|i| basins.get(i).is_some_and(|v| v > 0.0))
        .collect();
    let mask = BinaryMask::new(basins.grid().clone(), bits).expect("same grid length");
    let labels = connected_components(&mask, connectivity);
    let seed_count = labels.max_label();
    SeedSet { labels, seed_count }
}

#[derive(Clone, Copy)]
struct Pending {
    depth: f32,
    seq: u32,
    index: u32,
    label: u32,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // BinaryHeap is a max-heap: invert so the shallowest, oldest entry pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .depth
            .total_cmp(&self.depth)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Watershed output plus the order in which flooded pixels were finalized.
#[derive(Debug, Clone)]
pub struct FloodTrace {
    pub labels: LabelRaster,
    /// Pixel indices in the order they were popped; seeds are not included.
    pub order: Vec<usize>,
}

/// Priority-flood watershed from `seeds` over `flood_mask`.
///
/// Every flood-mask pixel reachable from a seed through flood-mask pixels
/// receives the label of the first finalized neighbour that discovered it.
/// Seed pixels keep their labels. Unreachable pixels and pixels outside the
/// mask (or nodata in `field_scores`) stay 0.
pub fn watershed(
    field_scores: &ProbabilityRaster,
    seeds: &SeedSet,
    flood_mask: &BinaryMask,
    connectivity: Connectivity,
) -> Result<LabelRaster> {
    flood(field_scores, seeds, flood_mask, connectivity, false).map(|t| t.labels)
}

/// As [`watershed`], also recording the finalization order.
pub fn watershed_trace(
    field_scores: &ProbabilityRaster,
    seeds: &SeedSet,
    flood_mask: &BinaryMask,
    connectivity: Connectivity,
) -> Result<FloodTrace> {
    flood(field_scores, seeds, flood_mask, connectivity, true)
}

fn flood(
    field_scores: &ProbabilityRaster,
    seeds: &SeedSet,
    flood_mask: &BinaryMask,
    connectivity: Connectivity,
    trace: bool,
) -> Result<FloodTrace> {
    let grid = field_scores.grid();
    grid.ensure_matches(seeds.labels.grid(), "watershed field scores vs seeds")?;
    grid.ensure_matches(flood_mask.grid(), "watershed field scores vs flood mask")?;
    let (w, h) = (grid.width, grid.height);
    let n = grid.len();
    if n > u32::MAX as usize {
        return Err(Error::GridMismatch("grid exceeds 2^32 pixels".into()));
    }

    let scores = field_scores.values();
    let nodata = field_scores.nodata();
    let floodable = |i: usize| flood_mask.get(i) && !nodata[i];

    let mut labels = seeds.labels.labels().to_vec();
    // queued[i]: pixel already labelled or waiting in the heap
    let mut queued: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    let mut heap = BinaryHeap::with_capacity(n / 4);
    let mut seq = 0u32;
    let mut order = Vec::new();

    let mut discover =
        |from: usize, label: u32, queued: &mut [bool], heap: &mut BinaryHeap<Pending>| {
            for j in connectivity.neighbors(from, w, h) {
                if !queued[j] && floodable(j) {
                    queued[j] = true;
                    heap.push(Pending {
                        depth: -scores[j],
                        seq,
                        index: j as u32,
                        label,
                    });
                    seq = seq.wrapping_add(1);
                }
            }
        };

    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            discover(i, l, &mut queued, &mut heap);
        }
    }
    while let Some(p) = heap.pop() {
        let i = p.index as usize;
        labels[i] = p.label;
        if trace {
            order.push(i);
        }
        discover(i, p.label, &mut queued, &mut heap);
    }

    Ok(FloodTrace {
        labels: LabelRaster::new(grid.clone(), labels)?,
        order,
    })
}

/// Drops labels whose area (pixel count × pixel area) is below `min_area`
/// and renumbers the survivors densely, preserving their relative order.
/// A label with area exactly `min_area` is kept.
pub fn filter_small_labels(labels: &LabelRaster, min_area: f64) -> Result<LabelRaster> {
    let pixel_area = if min_area > 0.0 {
        labels.grid().checked_pixel_area()?
    } else {
        labels.grid().pixel_area()
    };
    let max = labels.max_label() as usize;
    let mut counts = vec![0u64; max + 1];
    for &l in labels.labels() {
        counts[l as usize] += 1;
    }
    let mut remap = vec![0u32; max + 1];
    let mut next = 0u32;
    for l in 1..=max {
        if counts[l] > 0 && counts[l] as f64 * pixel_area >= min_area {
            next += 1;
            remap[l] = next;
        }
    }
    let out = labels.labels().iter().map(|&l| remap[l as usize]).collect();
    LabelRaster::new(labels.grid().clone(), out)
}
