//! Lattice and dual-lattice geometry: boxes, boundary sets, bonds, dual
//! bonds and the nested-annulus construction.
//!
//! Conventions pinned here and relied on everywhere else:
//! * site ordering is row-major, `y` outer and `x` inner;
//! * a lattice bond is oriented from its smaller to its larger endpoint
//!   in that same (y, x) order;
//! * dual bonds are ordered lexicographically by (min endpoint, orientation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard limit on the number of sites a region may hold.
pub const SITE_CAP: u128 = 1 << 25;

/// A site of the square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    /// The four nearest neighbors, in E, W, N, S order.
    pub fn neighbors(self) -> [Site; 4] {
        [
            Site::new(self.x + 1, self.y),
            Site::new(self.x - 1, self.y),
            Site::new(self.x, self.y + 1),
            Site::new(self.x, self.y - 1),
        ]
    }

    /// Row-major ordering key: y first, then x.
    pub fn key(self) -> (i64, i64) {
        (self.y, self.x)
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Site {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

/// An unordered nearest-neighbor lattice bond, stored with `a < b` in
/// row-major order, which also fixes the bond orientation (a -> b).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub a: Site,
    pub b: Site,
}

impl Bond {
    pub fn new(u: Site, v: Site) -> Self {
        debug_assert_eq!((u.x - v.x).abs() + (u.y - v.y).abs(), 1, "not nearest neighbors");
        if u.key() <= v.key() {
            Bond { a: u, b: v }
        } else {
            Bond { a: v, b: u }
        }
    }

    pub fn is_horizontal(&self) -> bool {
        self.a.y == self.b.y
    }

    /// The dual bond crossing this lattice bond.
    pub fn dual(&self) -> DualBond {
        if self.is_horizontal() {
            // ((i,j),(i+1,j)) is crossed by the vertical dual bond at (i, j-1).
            DualBond::new(DualVertex::new(self.a.x, self.a.y - 1), Orientation::Vertical)
        } else {
            // ((i,j),(i,j+1)) is crossed by the horizontal dual bond at (i-1, j).
            DualBond::new(DualVertex::new(self.a.x - 1, self.a.y), Orientation::Horizontal)
        }
    }
}

/// A vertex of the dual lattice Z^2 + (1/2, 1/2); the stored integers (x, y)
/// denote the point (x + 1/2, y + 1/2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DualVertex {
    pub x: i64,
    pub y: i64,
}

impl DualVertex {
    pub const fn new(x: i64, y: i64) -> Self {
        DualVertex { x, y }
    }

    pub fn key(self) -> (i64, i64) {
        (self.y, self.x)
    }

    /// Coordinates in the plane (used for serialization and geometry tests).
    pub fn coords(self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }

    /// The four lattice sites diagonally adjacent at distance 1/sqrt(2).
    pub fn diagonal_sites(self) -> [Site; 4] {
        [
            Site::new(self.x, self.y),
            Site::new(self.x + 1, self.y),
            Site::new(self.x, self.y + 1),
            Site::new(self.x + 1, self.y + 1),
        ]
    }
}

impl PartialOrd for DualVertex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DualVertex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// A dual bond: the unit segment from `v` to the next dual vertex in the
/// given direction (east for horizontal, north for vertical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DualBond {
    pub v: DualVertex,
    pub orientation: Orientation,
}

impl DualBond {
    pub const fn new(v: DualVertex, orientation: Orientation) -> Self {
        DualBond { v, orientation }
    }

    pub fn endpoints(&self) -> (DualVertex, DualVertex) {
        match self.orientation {
            Orientation::Horizontal => (self.v, DualVertex::new(self.v.x + 1, self.v.y)),
            Orientation::Vertical => (self.v, DualVertex::new(self.v.x, self.v.y + 1)),
        }
    }

    /// The two lattice sites separated by this dual bond (distance 1/2
    /// from the segment), returned with the smaller site first.
    pub fn separated_sites(&self) -> (Site, Site) {
        match self.orientation {
            // segment (x+1/2,y+1/2)-(x+3/2,y+1/2) separates (x+1,y) | (x+1,y+1)
            Orientation::Horizontal => {
                (Site::new(self.v.x + 1, self.v.y), Site::new(self.v.x + 1, self.v.y + 1))
            }
            // segment (x+1/2,y+1/2)-(x+1/2,y+3/2) separates (x,y+1) | (x+1,y+1)
            Orientation::Vertical => {
                (Site::new(self.v.x, self.v.y + 1), Site::new(self.v.x + 1, self.v.y + 1))
            }
        }
    }

    /// The lattice bond orthogonal to (crossed by) this dual bond.
    pub fn crossed_bond(&self) -> Bond {
        let (a, b) = self.separated_sites();
        Bond::new(a, b)
    }

    /// Canonical ordering: lexicographic on (min endpoint, orientation).
    pub fn key(&self) -> ((i64, i64), Orientation) {
        (self.v.key(), self.orientation)
    }
}

impl PartialOrd for DualBond {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DualBond {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    /// The square [-L,L]^2.
    Square { l: i64 },
    /// The rectangle [-L,L] x [-M,M].
    Rectangle { l: i64, m: i64 },
    /// An arbitrary finite site set.
    Custom,
}

/// A finite region of the lattice with O(1) membership queries.
///
/// Sites are stored in row-major order (y outer, x inner); membership is a
/// dense index over the bounding box rather than a hash set, so sweeps are
/// cache-friendly and iteration order is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    kind: RegionKind,
    xmin: i64,
    xmax: i64,
    ymin: i64,
    ymax: i64,
    sites: Vec<Site>,
    /// site index + 1 per bounding-box cell; 0 marks absence.
    index: Vec<u32>,
}

impl Region {
    pub fn square(l: i64) -> Result<Self> {
        if l < 0 {
            return Err(Error::validation("square half-side must be >= 0"));
        }
        let mut r = Self::rectangle(l, l)?;
        r.kind = RegionKind::Square { l };
        Ok(r)
    }

    pub fn rectangle(l: i64, m: i64) -> Result<Self> {
        if l < 0 || m < 0 {
            return Err(Error::validation("rectangle half-sides must be >= 0"));
        }
        let nx = 2 * l as u128 + 1;
        let ny = 2 * m as u128 + 1;
        if nx * ny > SITE_CAP {
            return Err(Error::CapExceeded {
                what: "region",
                needed: nx * ny,
                cap: SITE_CAP,
                unit: "sites",
            });
        }
        let mut sites = Vec::with_capacity((nx * ny) as usize);
        for y in -m..=m {
            for x in -l..=l {
                sites.push(Site::new(x, y));
            }
        }
        let mut r = Region {
            kind: RegionKind::Rectangle { l, m },
            xmin: -l,
            xmax: l,
            ymin: -m,
            ymax: m,
            sites,
            index: Vec::new(),
        };
        r.build_index();
        Ok(r)
    }

    /// Builds a region from an arbitrary site set (deduplicated, reordered
    /// into row-major order).
    pub fn from_sites(mut sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::validation("region must be nonempty"));
        }
        sites.sort();
        sites.dedup();
        let xmin = sites.iter().map(|s| s.x).min().unwrap();
        let xmax = sites.iter().map(|s| s.x).max().unwrap();
        let ymin = sites.iter().map(|s| s.y).min().unwrap();
        let ymax = sites.iter().map(|s| s.y).max().unwrap();
        let cells = (xmax - xmin + 1) as u128 * (ymax - ymin + 1) as u128;
        if cells > SITE_CAP {
            return Err(Error::CapExceeded {
                what: "region bounding box",
                needed: cells,
                cap: SITE_CAP,
                unit: "cells",
            });
        }
        let mut r = Region {
            kind: RegionKind::Custom,
            xmin,
            xmax,
            ymin,
            ymax,
            sites,
            index: Vec::new(),
        };
        r.build_index();
        Ok(r)
    }

    fn build_index(&mut self) {
        let w = (self.xmax - self.xmin + 1) as usize;
        let h = (self.ymax - self.ymin + 1) as usize;
        self.index = vec![0; w * h];
        for (i, s) in self.sites.iter().enumerate() {
            let cell = (s.y - self.ymin) as usize * w + (s.x - self.xmin) as usize;
            self.index[cell] = i as u32 + 1;
        }
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    /// Half-sides (L, M) for rectangles and squares.
    pub fn half_sides(&self) -> Option<(i64, i64)> {
        match self.kind {
            RegionKind::Square { l } => Some((l, l)),
            RegionKind::Rectangle { l, m } => Some((l, m)),
            RegionKind::Custom => None,
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.site_index(s).is_some()
    }

    pub fn site_index(&self, s: Site) -> Option<usize> {
        if s.x < self.xmin || s.x > self.xmax || s.y < self.ymin || s.y > self.ymax {
            return None;
        }
        let w = (self.xmax - self.xmin + 1) as usize;
        let cell = (s.y - self.ymin) as usize * w + (s.x - self.xmin) as usize;
        match self.index[cell] {
            0 => None,
            i => Some(i as usize - 1),
        }
    }

    pub fn bounding_box(&self) -> (i64, i64, i64, i64) {
        (self.xmin, self.xmax, self.ymin, self.ymax)
    }
}

/// The three boundary structures attached to a region: the external boundary
/// dΛ, the starred inner boundary d*Λ, and the bond set B_Λ.
#[derive(Debug, Clone)]
pub struct BoundarySets {
    /// Sites of the complement adjacent to the region.
    pub external: Vec<Site>,
    /// Sites of the region at distance 1 from dΛ, or at distance sqrt(2)
    /// from dΛ in the South-West or North-East direction.
    pub starred: Vec<Site>,
    /// Bonds xy with x in the region and y in the region or its boundary.
    pub bonds: Vec<Bond>,
}

/// Computes dΛ, d*Λ and B_Λ exactly per their definitions.
pub fn boundary_sets(region: &Region) -> BoundarySets {
    let mut external: Vec<Site> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    for &s in region.sites() {
        // Interior bonds once each: owned by the smaller endpoint.
        for nb in [Site::new(s.x + 1, s.y), Site::new(s.x, s.y + 1)] {
            if region.contains(nb) {
                bonds.push(Bond::new(s, nb));
            }
        }
        for nb in s.neighbors() {
            if !region.contains(nb) {
                bonds.push(Bond::new(s, nb));
                external.push(nb);
            }
        }
    }
    external.sort();
    external.dedup();
    bonds.sort();

    let is_external = |s: Site| external.binary_search(&s).is_ok();
    let mut starred: Vec<Site> = Vec::new();
    for &s in region.sites() {
        let near = s.neighbors().iter().any(|&n| is_external(n))
            || is_external(Site::new(s.x + 1, s.y + 1))
            || is_external(Site::new(s.x - 1, s.y - 1));
        if near {
            starred.push(s);
        }
    }
    BoundarySets { external, starred, bonds }
}

/// One annulus Λ_outer \ Λ_inner of a square ladder.
#[derive(Debug, Clone)]
pub struct Annulus {
    /// Half-side of the outer square (sites with sup-norm <= outer belong
    /// to the outer square).
    pub outer: i64,
    /// Half-side of the excluded inner square.
    pub inner: i64,
    pub sites: Vec<Site>,
}

impl Annulus {
    fn new(outer: i64, inner: i64) -> Self {
        debug_assert!(outer > inner);
        let mut sites = Vec::new();
        for y in -outer..=outer {
            for x in -outer..=outer {
                if x.abs().max(y.abs()) > inner {
                    sites.push(Site::new(x, y));
                }
            }
        }
        Annulus { outer, inner, sites }
    }
}

/// Level `i` of the nested annulus ladder: the width-3i band
/// Λ_{L-3l_{i-1}} \ Λ_{L-3l_i} (with l_i = i(i+1)/2) and its middle
/// width-i annulus.
#[derive(Debug, Clone)]
pub struct AnnulusLadder {
    pub index: u32,
    pub outer_band: Annulus,
    pub middle: Annulus,
}

fn triangular(i: i64) -> i64 {
    i * (i + 1) / 2
}

/// Builds the nested annuli for i = 1..=n inside Λ_L. Successive middle
/// annuli are at Euclidean distance >= 2i+1 from each other.
pub fn annulus_ladder(l: i64, n: u32) -> Result<Vec<AnnulusLadder>> {
    if l < 1 {
        return Err(Error::validation("annulus ladder requires L >= 1"));
    }
    if 3 * triangular(n as i64) >= l {
        return Err(Error::validation(format!(
            "annulus ladder with N={n} does not fit in L={l}: need 3*N(N+1)/2 < L"
        )));
    }
    let mut out = Vec::with_capacity(n as usize);
    for i in 1..=n as i64 {
        let band_outer = l - 3 * triangular(i - 1);
        let band_inner = l - 3 * triangular(i);
        out.push(AnnulusLadder {
            index: i as u32,
            outer_band: Annulus::new(band_outer, band_inner),
            // middle one of the three width-i annuli making up the band
            middle: Annulus::new(band_outer - i, band_outer - 2 * i),
        });
    }
    Ok(out)
}
