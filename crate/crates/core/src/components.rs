//! Pixel adjacency and connected-component labelling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, Grid, LabelRaster};

/// Pixel adjacency: edge neighbours only, or edges plus corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

// Raster-scan order: earlier rows first, then earlier columns.
const OFFSETS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
const OFFSETS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

impl Connectivity {
    /// `(drow, dcol)` offsets in raster-scan order.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &OFFSETS_4,
            Connectivity::Eight => &OFFSETS_8,
        }
    }

    /// In-bounds neighbours of `index` in raster-scan order.
    #[inline]
    pub fn neighbors(
        self,
        index: usize,
        width: usize,
        height: usize,
    ) -> impl Iterator<Item = usize> {
        let row = (index / width) as isize;
        let col = (index % width) as isize;
        self.offsets().iter().filter_map(move |&(dr, dc)| {
            let r = row + dr;
            let c = col + dc;
            if r < 0 || c < 0 || r >= height as isize || c >= width as isize {
                None
            } else {
                Some(r as usize * width + c as usize)
            }
        })
    }

    /// Already-visited neighbours (previous row, and the pixel to the left).
    fn backward_offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &OFFSETS_4[..2],
            Connectivity::Eight => &OFFSETS_8[..4],
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn with_capacity(n: usize) -> Self {
        let mut parent = Vec::with_capacity(n);
        parent.push(0);
        DisjointSet { parent }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let ra = self.find(a);
        let rb = self.find(b);
        // smaller provisional id wins so roots stay in scan order
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass labelling of pixels for which `member(i)` holds, where two
/// neighbouring members join the same component when `same(a, b)` holds.
pub(crate) fn label_regions(
    grid: &Grid,
    connectivity: Connectivity,
    member: impl Fn(usize) -> bool,
    same: impl Fn(usize, usize) -> bool,
) -> (Vec<u32>, u32) {
    let (w, h) = (grid.width, grid.height);
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::with_capacity(1024);
    let back = connectivity.backward_offsets();

    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !member(i) {
                continue;
            }
            let mut current = 0u32;
            for &(dr, dc) in back {
                let nr = r as isize + dr;
                let nc = c as isize + dc;
                if nr < 0 || nc < 0 || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                let pj = provisional[j];
                if pj == 0 || !same(i, j) {
                    continue;
                }
                current = if current == 0 {
                    sets.find(pj)
                } else {
                    sets.union(current, pj)
                };
            }
            provisional[i] = if current == 0 { sets.make() } else { current };
        }
    }

    // Final ids in order of each component's first pixel.
    let mut remap = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    for p in provisional.iter_mut() {
        if *p == 0 {
            continue;
        }
        let root = sets.find(*p) as usize;
        if remap[root] == 0 {
            next += 1;
            remap[root] = next;
        }
        *p = remap[root];
    }
    (provisional, next)
}

/// Labels maximal connected regions of set pixels `1..=k` in raster-scan
/// order of each region's first pixel; unset pixels get 0.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelRaster {
    let bits = mask.bits();
    let (labels, _) = label_regions(mask.grid(), connectivity, |i| bits[i], |_, _| true);
    LabelRaster::new(mask.grid().clone(), labels).expect("same grid length")
}

/// Components of pixels sharing the same non-zero label.
pub(crate) fn label_pieces(labels: &LabelRaster, connectivity: Connectivity) -> (Vec<u32>, u32) {
    let l = labels.labels();
    label_regions(
        labels.grid(),
        connectivity,
        |i| l[i] != 0,
        |a, b| l[a] == l[b],
    )
}
