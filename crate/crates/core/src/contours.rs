//! Dual-lattice combinatorics: geometric contours and h-contours with
//! their decoration sets, open crossing contours under single-step
//! boundary conditions, and the cluster decomposition of surfaces.
//!
//! At a dual vertex where four contour bonds meet, the pairs on the same
//! side of the slope +1 diagonal are traversed together: {N,W} and {S,E}.
//! This makes extraction deterministic, merges plateaus touching across a
//! NE/SW diagonal and keeps NW/SE touches separate, which is exactly what
//! the decoration rule (diagonal sites at non-linked meetings) expects.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::ConstraintSet;
use crate::lattice::{boundary_sets, Bond, DualBond, DualVertex, Orientation, Region, Site};
use crate::model::{BoundaryCondition, HeightField, Params, WeightRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arm {
    N,
    S,
    E,
    W,
}

impl Arm {
    const ALL: [Arm; 4] = [Arm::N, Arm::S, Arm::E, Arm::W];

    fn bit(self) -> u8 {
        match self {
            Arm::N => 1,
            Arm::S => 2,
            Arm::E => 4,
            Arm::W => 8,
        }
    }

    /// The partner on the same side of the slope +1 diagonal.
    fn linked(self) -> Arm {
        match self {
            Arm::N => Arm::W,
            Arm::W => Arm::N,
            Arm::S => Arm::E,
            Arm::E => Arm::S,
        }
    }

    fn bond_at(self, v: DualVertex) -> DualBond {
        match self {
            Arm::N => DualBond::new(v, Orientation::Vertical),
            Arm::S => DualBond::new(DualVertex::new(v.x, v.y - 1), Orientation::Vertical),
            Arm::E => DualBond::new(v, Orientation::Horizontal),
            Arm::W => DualBond::new(DualVertex::new(v.x - 1, v.y), Orientation::Horizontal),
        }
    }
}

/// The exactly-one-linked-pair masks {N,W} and {S,E}.
const LINKED_NW: u8 = 1 | 8;
const LINKED_SE: u8 = 2 | 4;

/// Arms of a bond as seen from each of its endpoints.
fn bond_arms(b: DualBond) -> [(DualVertex, Arm); 2] {
    let (u, w) = b.endpoints();
    match b.orientation {
        Orientation::Vertical => [(u, Arm::N), (w, Arm::S)],
        Orientation::Horizontal => [(u, Arm::E), (w, Arm::W)],
    }
}

/// An ordered dual-bond path; closed contours repeat their first vertex at
/// the end of `vertices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeometricContour {
    pub vertices: Vec<DualVertex>,
    pub closed: bool,
}

impl GeometricContour {
    pub fn bonds(&self) -> Vec<DualBond> {
        self.vertices
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                if a.key() <= b.key() {
                    bond_between(a, b)
                } else {
                    bond_between(b, a)
                }
            })
            .collect()
    }

    /// Contour length: the number of distinct bonds.
    pub fn len(&self) -> usize {
        self.bond_set().len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 2
    }

    pub fn bond_set(&self) -> BTreeSet<DualBond> {
        self.bonds().into_iter().collect()
    }

    /// Sites enclosed by a closed contour (ray-parity test).
    pub fn interior(&self) -> Vec<Site> {
        assert!(self.closed, "interior of an open contour is undefined");
        let bonds = self.bond_set();
        let xs: Vec<i64> = self.vertices.iter().map(|v| v.x).collect();
        let ys: Vec<i64> = self.vertices.iter().map(|v| v.y).collect();
        let (xmin, xmax) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
        let (ymin, ymax) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
        // vertical bonds grouped by the row of sites they flank
        let mut by_row: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for b in &bonds {
            if b.orientation == Orientation::Vertical {
                by_row.entry(b.v.y + 1).or_default().push(b.v.x);
            }
        }
        let mut inside = Vec::new();
        for y in ymin..=ymax + 1 {
            let Some(cols) = by_row.get(&y) else { continue };
            for x in xmin..=xmax + 1 {
                let crossings = cols.iter().filter(|&&a| a >= x).count();
                if crossings % 2 == 1 {
                    inside.push(Site::new(x, y));
                }
            }
        }
        inside.sort();
        inside
    }

    pub fn to_json(&self) -> serde_json::Value {
        let verts: Vec<[f64; 2]> = self
            .vertices
            .iter()
            .map(|v| {
                let (x, y) = v.coords();
                [x, y]
            })
            .collect();
        serde_json::json!({ "closed": self.closed, "vertices": verts })
    }
}

fn bond_between(a: DualVertex, b: DualVertex) -> DualBond {
    debug_assert!(a.key() <= b.key());
    if a.y == b.y {
        DualBond::new(a, Orientation::Horizontal)
    } else {
        DualBond::new(a, Orientation::Vertical)
    }
}

/// The decoration sets of a closed contour: Δ (sites at distance 1/2 from
/// the contour or 1/sqrt(2) from a non-linked meeting), split into the
/// interior part Δ+ and the rest Δ-.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContourDecoration {
    pub delta: Vec<Site>,
    pub plus: Vec<Site>,
    pub minus: Vec<Site>,
}

/// Computes Δ, Δ+, Δ- for a closed contour.
pub fn decorations(contour: &GeometricContour) -> Result<ContourDecoration> {
    if !contour.closed {
        return Err(Error::validation("decorations are defined for closed contours"));
    }
    let bonds = contour.bond_set();
    let delta = decoration_sites(&bonds);
    let interior: HashSet<Site> = contour.interior().into_iter().collect();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for &s in &delta {
        if interior.contains(&s) {
            plus.push(s);
        } else {
            minus.push(s);
        }
    }
    Ok(ContourDecoration { delta: delta.into_iter().collect(), plus, minus })
}

fn decoration_sites(bonds: &BTreeSet<DualBond>) -> BTreeSet<Site> {
    let mut delta = BTreeSet::new();
    let mut arm_mask: HashMap<DualVertex, u8> = HashMap::new();
    for &b in bonds {
        let (x, y) = b.separated_sites();
        delta.insert(x);
        delta.insert(y);
        for (v, arm) in bond_arms(b) {
            *arm_mask.entry(v).or_insert(0) |= arm.bit();
        }
    }
    for (v, mask) in arm_mask {
        if mask.count_ones() >= 2 && mask != LINKED_NW && mask != LINKED_SE {
            // two non-linked bonds meet here
            for s in v.diagonal_sites() {
                delta.insert(s);
            }
        }
    }
    delta
}

/// True iff the contour is an h-contour for the field: heights >= h on Δ+
/// and <= h-1 on Δ-.
pub fn is_h_contour(field: &HeightField, contour: &GeometricContour, h: i64) -> Result<bool> {
    let dec = decorations(contour)?;
    Ok(dec.plus.iter().all(|&s| field.value(s) >= h)
        && dec.minus.iter().all(|&s| field.value(s) <= h - 1))
}

// ---------------------------------------------------------------------------
// tracing
// ---------------------------------------------------------------------------

struct Tracer {
    remaining: BTreeSet<DualBond>,
    arm_mask: HashMap<DualVertex, u8>,
}

impl Tracer {
    fn new(bonds: BTreeSet<DualBond>) -> Self {
        let mut arm_mask: HashMap<DualVertex, u8> = HashMap::new();
        for &b in &bonds {
            for (v, arm) in bond_arms(b) {
                *arm_mask.entry(v).or_insert(0) |= arm.bit();
            }
        }
        Tracer { remaining: bonds, arm_mask }
    }

    fn continuation(&self, v: DualVertex, incoming: Arm) -> Result<Arm> {
        let mask = *self.arm_mask.get(&v).unwrap_or(&0);
        debug_assert!(mask & incoming.bit() != 0);
        match mask.count_ones() {
            4 => Ok(incoming.linked()),
            2 => Arm::ALL
                .iter()
                .copied()
                .find(|a| *a != incoming && mask & a.bit() != 0)
                .ok_or_else(|| Error::validation("inconsistent contour structure")),
            d => Err(Error::validation(format!(
                "dual vertex ({},{}) has odd degree {d}; level set is not closed",
                v.x, v.y
            ))),
        }
    }

    /// Traces the closed contour through `start`, consuming its bonds.
    fn trace_closed(&mut self, start: DualBond) -> Result<GeometricContour> {
        let (v0, v1) = start.endpoints();
        let mut vertices = vec![v0, v1];
        self.remaining.remove(&start);
        let mut cur = v1;
        let mut incoming = bond_arms(start).iter().find(|(v, _)| *v == v1).unwrap().1;
        loop {
            let out = self.continuation(cur, incoming)?;
            let bond = out.bond_at(cur);
            if bond == start {
                // the previous step already pushed v0, closing the path
                return Ok(GeometricContour { vertices, closed: true });
            }
            if !self.remaining.remove(&bond) {
                return Err(Error::validation("contour trace revisited a consumed bond"));
            }
            let (next, next_arm) = bond_arms(bond).into_iter().find(|(v, _)| *v != cur).unwrap();
            vertices.push(next);
            cur = next;
            incoming = next_arm;
        }
    }
}

/// The dual bonds separating sites across level h: bonds xy of B_Λ with
/// heights on the two sides straddling h.
fn level_set_bonds(field: &HeightField, h: i64) -> BTreeSet<DualBond> {
    let bs = boundary_sets(&field.region);
    let mut duals = BTreeSet::new();
    for bond in &bs.bonds {
        let above_a = field.value(bond.a) >= h;
        let above_b = field.value(bond.b) >= h;
        if above_a != above_b {
            duals.insert(bond.dual());
        }
    }
    duals
}

/// Result of h-contour extraction: contours passing the decoration test and
/// those excluded by it (mixed-height decorations).
#[derive(Debug, Clone)]
pub struct Extraction {
    pub accepted: Vec<GeometricContour>,
    pub rejected: Vec<GeometricContour>,
}

/// Extracts all closed h-contours of the field. Requires a boundary
/// condition whose level sets close up (zero or constant); staircase fields
/// have an open crossing contour handled by [`open_contour`].
pub fn extract_h_contours(field: &HeightField, h: i64) -> Result<Extraction> {
    let mut tracer = Tracer::new(level_set_bonds(field, h));
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    while let Some(&start) = tracer.remaining.iter().next() {
        let contour = tracer.trace_closed(start)?;
        if is_h_contour(field, &contour, h)? {
            accepted.push(contour);
        } else {
            rejected.push(contour);
        }
    }
    Ok(Extraction { accepted, rejected })
}

/// An open crossing contour with its decoration sets restricted to the
/// region (computed from the external closure of the contour).
#[derive(Debug, Clone)]
pub struct OpenContour {
    pub path: GeometricContour,
    pub plus: Vec<Site>,
    pub minus: Vec<Site>,
}

/// Extracts the open 1-contour forced by an n = 1 staircase boundary
/// condition: the level-1 separation line joining the dual points
/// (-L-1/2, a-1/2) and (L+1/2, b-1/2).
pub fn open_contour(field: &HeightField) -> Result<OpenContour> {
    let BoundaryCondition::Staircase(st) = &field.bc else {
        return Err(Error::validation("open_contour requires a staircase boundary condition"));
    };
    if st.n() != 1 {
        return Err(Error::validation("open_contour requires exactly one step"));
    }
    let (l, m) = (st.l, st.m);
    let (a, b) = (st.a[0], st.b[0]);
    let v_left = DualVertex::new(-l - 1, a - 1);
    let v_right = DualVertex::new(l, b - 1);
    // virtual arms across the walls, where the boundary condition jumps
    let virtual_left = Arm::W.bond_at(v_left);
    let virtual_right = Arm::E.bond_at(v_right);

    let mut bonds = level_set_bonds(field, 1);
    bonds.insert(virtual_left);
    bonds.insert(virtual_right);
    let mut tracer = Tracer::new(bonds);
    tracer.remaining.remove(&virtual_left);

    let mut vertices = vec![v_left];
    let mut cur = v_left;
    let mut incoming = Arm::W;
    loop {
        let out = tracer.continuation(cur, incoming)?;
        let bond = out.bond_at(cur);
        if bond == virtual_right {
            if cur != v_right {
                return Err(Error::validation("crossing contour ended at the wrong wall vertex"));
            }
            break;
        }
        if bond == virtual_left || !tracer.remaining.remove(&bond) {
            return Err(Error::validation(
                "field admits no crossing contour compatible with the staircase",
            ));
        }
        let (next, next_arm) = bond_arms(bond).into_iter().find(|(v, _)| *v != cur).unwrap();
        vertices.push(next);
        cur = next;
        incoming = next_arm;
    }

    let path = GeometricContour { vertices: vertices.clone(), closed: false };

    // Close the contour above through a loop outside the rectangle, then take
    // decorations of the closed curve intersected with the region.
    let closure_top = m + 2;
    let mut closed = vertices;
    let push_segment = |closed: &mut Vec<DualVertex>, to: DualVertex| {
        let cur = *closed.last().unwrap();
        let (dx, dy) = ((to.x - cur.x).signum(), (to.y - cur.y).signum());
        let steps = (to.x - cur.x).abs().max((to.y - cur.y).abs());
        for k in 1..=steps {
            closed.push(DualVertex::new(cur.x + dx * k, cur.y + dy * k));
        }
    };
    push_segment(&mut closed, DualVertex::new(l + 1, b - 1));
    push_segment(&mut closed, DualVertex::new(l + 1, closure_top));
    push_segment(&mut closed, DualVertex::new(-l - 2, closure_top));
    push_segment(&mut closed, DualVertex::new(-l - 2, a - 1));
    push_segment(&mut closed, v_left);
    let closed_contour = GeometricContour { vertices: closed, closed: true };
    let dec = decorations(&closed_contour)?;
    let plus: Vec<Site> = dec.plus.into_iter().filter(|s| field.region.contains(*s)).collect();
    let minus: Vec<Site> = dec.minus.into_iter().filter(|s| field.region.contains(*s)).collect();
    Ok(OpenContour { path, plus, minus })
}

// ---------------------------------------------------------------------------
// clusters
// ---------------------------------------------------------------------------

/// A cluster: a connected set of dual bonds (the support) together with the
/// height gradients of the lattice bonds they cross, listed in the canonical
/// dual-bond order. Gradients follow the bond orientation from the smaller
/// to the larger endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cluster {
    pub support: Vec<DualBond>,
    pub gradients: Vec<i64>,
}

/// The surface determined by a single cluster: zero outside its interior,
/// constant on each face.
#[derive(Debug, Clone)]
pub struct ClusterSurface {
    pub heights: BTreeMap<Site, i64>,
    pub interior: Vec<Site>,
    pub external_boundary: Vec<Site>,
}

impl ClusterSurface {
    pub fn value(&self, s: Site) -> i64 {
        self.heights.get(&s).copied().unwrap_or(0)
    }
}

impl Cluster {
    /// Every endpoint of a support bond must be shared by at least one other
    /// support bond.
    pub fn support_is_valid(&self) -> bool {
        let mut deg: HashMap<DualVertex, u32> = HashMap::new();
        for b in &self.support {
            let (u, v) = b.endpoints();
            *deg.entry(u).or_insert(0) += 1;
            *deg.entry(v).or_insert(0) += 1;
        }
        !self.support.is_empty() && deg.values().all(|&d| d >= 2)
    }

    /// Reconstructs the unique surface with the recorded gradients across
    /// the support and zero gradients elsewhere, anchored at zero on the
    /// external boundary. Fails if the gradients are inconsistent
    /// (non-admissible cluster).
    pub fn reconstruct(&self) -> Result<ClusterSurface> {
        if !self.support_is_valid() {
            return Err(Error::validation("cluster support has a free endpoint"));
        }
        if self.gradients.len() != self.support.len() || self.gradients.contains(&0) {
            return Err(Error::validation("cluster gradients must be nonzero, one per bond"));
        }
        let grad: HashMap<Bond, i64> = self
            .support
            .iter()
            .zip(&self.gradients)
            .map(|(d, &g)| (d.crossed_bond(), g))
            .collect();

        // bounding box of all sites flanking the support
        let mut xmin = i64::MAX;
        let mut xmax = i64::MIN;
        let mut ymin = i64::MAX;
        let mut ymax = i64::MIN;
        for d in &self.support {
            let (p, q) = d.separated_sites();
            for s in [p, q] {
                xmin = xmin.min(s.x);
                xmax = xmax.max(s.x);
                ymin = ymin.min(s.y);
                ymax = ymax.max(s.y);
            }
        }
        xmin -= 1;
        ymin -= 1;
        xmax += 1;
        ymax += 1;

        let w = (xmax - xmin + 1) as usize;
        let h = (ymax - ymin + 1) as usize;
        let idx = |s: Site| ((s.y - ymin) as usize) * w + ((s.x - xmin) as usize);
        let in_box = |s: Site| s.x >= xmin && s.x <= xmax && s.y >= ymin && s.y <= ymax;

        // heights by BFS crossing support bonds with the recorded gradients
        let mut height = vec![i64::MAX; w * h];
        let origin = Site::new(xmin, ymin);
        height[idx(origin)] = 0;
        let mut queue = VecDeque::from([origin]);
        while let Some(s) = queue.pop_front() {
            let hs = height[idx(s)];
            for nb in s.neighbors() {
                if !in_box(nb) {
                    continue;
                }
                let bond = Bond::new(s, nb);
                let step = match grad.get(&bond) {
                    Some(&g) => {
                        if bond.a == s {
                            g
                        } else {
                            -g
                        }
                    }
                    None => 0,
                };
                let hn = hs + step;
                if height[idx(nb)] == i64::MAX {
                    height[idx(nb)] = hn;
                    queue.push_back(nb);
                } else if height[idx(nb)] != hn {
                    return Err(Error::validation("cluster gradients are inconsistent"));
                }
            }
        }

        // outer face by BFS that never crosses the support
        let support_bonds: HashSet<Bond> = grad.keys().copied().collect();
        let mut outer = vec![false; w * h];
        let mut queue = VecDeque::new();
        for y in ymin..=ymax {
            for x in [xmin, xmax] {
                let s = Site::new(x, y);
                if !outer[idx(s)] {
                    outer[idx(s)] = true;
                    queue.push_back(s);
                }
            }
        }
        for x in xmin..=xmax {
            for y in [ymin, ymax] {
                let s = Site::new(x, y);
                if !outer[idx(s)] {
                    outer[idx(s)] = true;
                    queue.push_back(s);
                }
            }
        }
        while let Some(s) = queue.pop_front() {
            for nb in s.neighbors() {
                if in_box(nb) && !outer[idx(nb)] && !support_bonds.contains(&Bond::new(s, nb)) {
                    outer[idx(nb)] = true;
                    queue.push_back(nb);
                }
            }
        }

        let mut heights = BTreeMap::new();
        let mut interior = Vec::new();
        for y in ymin..=ymax {
            for x in xmin..=xmax {
                let s = Site::new(x, y);
                if !outer[idx(s)] {
                    interior.push(s);
                    if height[idx(s)] != 0 {
                        heights.insert(s, height[idx(s)]);
                    }
                } else if height[idx(s)] != 0 {
                    return Err(Error::validation(
                        "cluster assigns nonzero height outside its interior",
                    ));
                }
            }
        }
        let interior_set: HashSet<Site> = interior.iter().copied().collect();
        let mut external_boundary: Vec<Site> = Vec::new();
        for &s in &interior {
            for nb in s.neighbors() {
                if !interior_set.contains(&nb) {
                    external_boundary.push(nb);
                }
            }
        }
        external_boundary.sort();
        external_boundary.dedup();
        Ok(ClusterSurface { heights, interior, external_boundary })
    }

    /// Legal iff the reconstructed surface satisfies the sign constraints.
    pub fn is_legal(&self, constraints: &ConstraintSet) -> Result<bool> {
        let surface = self.reconstruct()?;
        Ok(constraints.plus.iter().all(|&s| surface.value(s) >= 0)
            && constraints.minus.iter().all(|&s| surface.value(s) <= 0))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let support: Vec<[[f64; 2]; 2]> = self
            .support
            .iter()
            .map(|d| {
                let (u, v) = d.endpoints();
                let (ux, uy) = u.coords();
                let (vx, vy) = v.coords();
                [[ux, uy], [vx, vy]]
            })
            .collect();
        serde_json::json!({ "support": support, "gradients": self.gradients })
    }
}

/// An unordered collection of clusters with pairwise disjoint supports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterConfig {
    pub clusters: Vec<Cluster>,
}

impl ClusterConfig {
    pub fn is_compatible(&self) -> bool {
        let mut seen = HashSet::new();
        for c in &self.clusters {
            for b in &c.support {
                if !seen.insert(*b) {
                    return false;
                }
            }
        }
        true
    }

    /// The combined surface: clusters have disjoint supports, so heights add.
    pub fn combined_heights(&self, region: &Region) -> Result<Vec<i64>> {
        let mut out = vec![0i64; region.len()];
        for c in &self.clusters {
            let surf = c.reconstruct()?;
            for (s, h) in surf.heights {
                if let Some(i) = region.site_index(s) {
                    out[i] += h;
                }
            }
        }
        Ok(out)
    }
}

/// Decomposes a zero-boundary surface into its clusters: connected
/// components of the dual bonds carrying nonzero gradients, with the
/// gradients recorded in canonical order.
pub fn cluster_decompose(field: &HeightField) -> Result<ClusterConfig> {
    if !matches!(field.bc, BoundaryCondition::Zero) {
        return Err(Error::validation("cluster decomposition requires zero boundary conditions"));
    }
    let bs = boundary_sets(&field.region);
    let mut grads: BTreeMap<DualBond, i64> = BTreeMap::new();
    for bond in &bs.bonds {
        let g = field.value(bond.b) - field.value(bond.a);
        if g != 0 {
            grads.insert(bond.dual(), g);
        }
    }
    // union-find over bonds joined by shared dual vertices
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..grads.len()).collect();
    let mut vertex_rep: HashMap<DualVertex, usize> = HashMap::new();
    for (k, d) in grads.keys().enumerate() {
        for (v, _) in bond_arms(*d) {
            match vertex_rep.get(&v) {
                Some(&other) => {
                    let a = find(&mut parent, k);
                    let b = find(&mut parent, other);
                    if a != b {
                        parent[a] = b;
                    }
                }
                None => {
                    vertex_rep.insert(v, k);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(DualBond, i64)>> = BTreeMap::new();
    for (k, (d, g)) in grads.iter().enumerate() {
        groups.entry(find(&mut parent, k)).or_default().push((*d, *g));
    }
    let clusters = groups
        .into_values()
        .map(|items| {
            // BTreeMap iteration already yields canonical order
            let support: Vec<DualBond> = items.iter().map(|(d, _)| *d).collect();
            let gradients: Vec<i64> = items.iter().map(|(_, g)| *g).collect();
            Cluster { support, gradients }
        })
        .collect();
    Ok(ClusterConfig { clusters })
}

/// Log weight of a compatible cluster configuration: the sum over clusters
/// of -beta times the bond weights of the recorded gradients.
pub fn weight_product(config: &ClusterConfig, params: &Params, rule: &WeightRule) -> Result<f64> {
    if !config.is_compatible() {
        return Err(Error::validation("cluster supports are not pairwise disjoint"));
    }
    let mut log_w = 0.0;
    for c in &config.clusters {
        for (d, &g) in c.support.iter().zip(&c.gradients) {
            let bond = d.crossed_bond();
            log_w -= params.beta * params.bond_weight(rule.kind_of(&bond), g.unsigned_abs());
        }
    }
    Ok(log_w)
}
