//! Height configurations, boundary conditions, the generalized SOS
//! Hamiltonian with gradient potential |grad|^p, tilted bond weights, and
//! the FKG lattice condition check.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{boundary_sets, Bond, Region, Site};

/// The gradient exponent p in [1, inf]. Infinity is a distinguished value:
/// gradients of magnitude >= 2 are forbidden outright (infinite energy),
/// an allowed unit gradient costs exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinite)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::validation(format!("exponent p must be in [1, inf], got {p}")))
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}

/// Model parameters (p, beta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: Exponent,
    pub beta: f64,
}

impl Params {
    pub fn new(p: Exponent, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::validation(format!("beta must be positive, got {beta}")));
        }
        Ok(Params { p, beta })
    }

    /// Standard per-bond weight a |-> a^p for an integer gradient magnitude.
    pub fn standard_weight(&self, a: u64) -> f64 {
        match self.p {
            Exponent::Finite(p) => (a as f64).powf(p),
            Exponent::Infinite => {
                if a <= 1 {
                    a as f64
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Tilted per-bond weight a |-> (1+a)^p - 1, applied on marked bonds.
    /// At p = inf this degenerates to 0 for a = 0 and forbidden otherwise.
    pub fn tilted_weight(&self, a: u64) -> f64 {
        match self.p {
            Exponent::Finite(p) => (1.0 + a as f64).powf(p) - 1.0,
            Exponent::Infinite => {
                if a == 0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn bond_weight(&self, kind: BondKind, a: u64) -> f64 {
        match kind {
            BondKind::Standard => self.standard_weight(a),
            BondKind::Tilted => self.tilted_weight(a),
        }
    }
}

/// Which per-bond weight applies to a given lattice bond.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondKind {
    Standard,
    Tilted,
}

/// The set of lattice bonds carrying the tilted weight, precomputed from
/// the dual bonds of marked contours so lookups are O(1).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkedBonds {
    set: HashSet<Bond>,
}

impl MarkedBonds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bonds(bonds: impl IntoIterator<Item = Bond>) -> Self {
        MarkedBonds { set: bonds.into_iter().collect() }
    }

    /// Marks the lattice bonds crossed by the given dual bonds.
    pub fn from_dual_bonds(duals: impl IntoIterator<Item = crate::lattice::DualBond>) -> Self {
        MarkedBonds { set: duals.into_iter().map(|d| d.crossed_bond()).collect() }
    }

    pub fn insert(&mut self, b: Bond) {
        self.set.insert(b);
    }

    pub fn contains(&self, b: &Bond) -> bool {
        self.set.contains(b)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Bond> {
        self.set.iter()
    }
}

/// Bond weight rule: every bond standard, or a marked subset tilted.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum WeightRule {
    #[default]
    Standard,
    Tilted(MarkedBonds),
}

impl WeightRule {
    pub fn kind_of(&self, bond: &Bond) -> BondKind {
        match self {
            WeightRule::Standard => BondKind::Standard,
            WeightRule::Tilted(marked) => {
                if marked.contains(bond) {
                    BondKind::Tilted
                } else {
                    BondKind::Standard
                }
            }
        }
    }
}

/// Staircase boundary height for a rectangle [-L,L]x[-M,M]: zero on the
/// bottom row, n on the top row, and unit steps on the side walls at the
/// prescribed locations a_1 <= ... <= a_n (left) and b_1 <= ... <= b_n
/// (right).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Staircase {
    pub l: i64,
    pub m: i64,
    pub a: Vec<i64>,
    pub b: Vec<i64>,
}

impl Staircase {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    fn wall_value(steps: &[i64], v: i64) -> i64 {
        // tau = i on [a_i, a_{i+1}) with a_0 = -(M+1), a_{n+1} = M+1
        steps.iter().filter(|&&s| s <= v).count() as i64
    }

    pub fn eval(&self, s: Site) -> i64 {
        if s.x < -self.l {
            Self::wall_value(&self.a, s.y)
        } else if s.x > self.l {
            Self::wall_value(&self.b, s.y)
        } else if s.y <= -(self.m + 1) {
            0
        } else if s.y >= self.m + 1 {
            self.n() as i64
        } else {
            // interior of the rectangle; never queried as a boundary value
            0
        }
    }
}

/// A boundary condition tau defined on the complement of the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Zero,
    Constant(i64),
    Staircase(Staircase),
    /// An explicit map on the external boundary; sites not listed evaluate
    /// to zero (values further out never enter B_Λ sums).
    Explicit(Vec<(Site, i64)>),
}

impl BoundaryCondition {
    pub fn eval(&self, s: Site) -> i64 {
        match self {
            BoundaryCondition::Zero => 0,
            BoundaryCondition::Constant(c) => *c,
            BoundaryCondition::Staircase(st) => st.eval(s),
            BoundaryCondition::Explicit(map) => {
                map.iter().find(|(t, _)| *t == s).map(|(_, h)| *h).unwrap_or(0)
            }
        }
    }

    pub fn kind_label(&self) -> String {
        match self {
            BoundaryCondition::Zero => "zero".into(),
            BoundaryCondition::Constant(c) => format!("constant:{c}"),
            BoundaryCondition::Staircase(st) => {
                let a: Vec<String> = st.a.iter().map(|v| v.to_string()).collect();
                let b: Vec<String> = st.b.iter().map(|v| v.to_string()).collect();
                format!("staircase:{}/{}", a.join(","), b.join(","))
            }
            BoundaryCondition::Explicit(_) => "explicit".into(),
        }
    }
}

/// Builds the staircase boundary condition, checking the required ordering
/// -M <= a_1 <= ... <= a_n <= M (same for b).
pub fn staircase_bc(a: Vec<i64>, b: Vec<i64>, l: i64, m: i64) -> Result<BoundaryCondition> {
    if a.len() != b.len() {
        return Err(Error::validation("staircase needs equally many left and right steps"));
    }
    for steps in [&a, &b] {
        if steps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::validation("staircase steps must be nondecreasing"));
        }
        if steps.iter().any(|&s| s < -m || s > m) {
            return Err(Error::validation("staircase steps must lie in [-M, M]"));
        }
    }
    Ok(BoundaryCondition::Staircase(Staircase { l, m, a, b }))
}

/// An integer height configuration on a region together with its boundary
/// condition; evaluating outside the region returns the boundary value.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub region: Region,
    pub heights: Vec<i64>,
    pub bc: BoundaryCondition,
}

impl HeightField {
    pub fn new(region: Region, heights: Vec<i64>, bc: BoundaryCondition) -> Result<Self> {
        if heights.len() != region.len() {
            return Err(Error::validation(format!(
                "height vector length {} does not match region size {}",
                heights.len(),
                region.len()
            )));
        }
        if let BoundaryCondition::Staircase(st) = &bc {
            match region.half_sides() {
                Some((l, m)) if l == st.l && m == st.m => {}
                _ => {
                    return Err(Error::validation(
                        "staircase boundary condition requires a matching rectangle",
                    ))
                }
            }
        }
        Ok(HeightField { region, heights, bc })
    }

    pub fn flat(region: Region, h: i64, bc: BoundaryCondition) -> Result<Self> {
        let n = region.len();
        Self::new(region, vec![h; n], bc)
    }

    pub fn value(&self, s: Site) -> i64 {
        match self.region.site_index(s) {
            Some(i) => self.heights[i],
            None => self.bc.eval(s),
        }
    }

    pub fn set(&mut self, s: Site, h: i64) {
        let i = self.region.site_index(s).expect("site not in region");
        self.heights[i] = h;
    }
}

/// Total energy sum over B_Λ of the per-bond weights of the gradient
/// magnitudes. Returns +infinity when p = inf and some gradient exceeds 1.
pub fn energy(field: &HeightField, params: &Params, rule: &WeightRule) -> f64 {
    let bs = boundary_sets(&field.region);
    let mut total = 0.0;
    for bond in &bs.bonds {
        let a = field.value(bond.a).abs_diff(field.value(bond.b));
        total += params.bond_weight(rule.kind_of(bond), a);
    }
    total
}

/// Energy difference of replacing the height at `site` by `new_height`,
/// computed from the at-most-four incident bonds only.
pub fn energy_delta(
    field: &HeightField,
    site: Site,
    new_height: i64,
    params: &Params,
    rule: &WeightRule,
) -> f64 {
    let old = field.value(site);
    let mut before = 0.0;
    let mut after = 0.0;
    for nb in site.neighbors() {
        let bond = Bond::new(site, nb);
        let kind = rule.kind_of(&bond);
        let h_nb = field.value(nb);
        before += params.bond_weight(kind, old.abs_diff(h_nb));
        after += params.bond_weight(kind, new_height.abs_diff(h_nb));
    }
    after - before
}

/// A counterexample to the FKG lattice condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkgViolation {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Exhaustively verifies the four-point lattice inequality
///   h(|max(a,c)-max(b,d)|) + h(|min(a,c)-min(b,d)|) <= h(|a-b|) + h(|c-d|)
/// over the given integer range, for the requested bond weight. Returns the
/// first violation if any.
pub fn check_fkg_lattice(
    params: &Params,
    kind: BondKind,
    range: std::ops::RangeInclusive<i64>,
) -> Option<FkgViolation> {
    let lo = *range.start();
    let hi = *range.end();
    let w = |x: i64, y: i64| params.bond_weight(kind, x.abs_diff(y));
    // tiny absolute slack for floating-point noise in powf at equality cases
    let tol = 1e-9;
    for a in lo..=hi {
        for b in lo..=hi {
            for c in lo..=hi {
                for d in lo..=hi {
                    let lhs = w(a.max(c), b.max(d)) + w(a.min(c), b.min(d));
                    let rhs = w(a, b) + w(c, d);
                    if lhs > rhs + tol {
                        return Some(FkgViolation { a, b, c, d, lhs, rhs });
                    }
                }
            }
        }
    }
    None
}

/// Plain-text serialization of a height field: a header line
/// `L M p beta bc-kind` followed by 2M+1 rows (bottom row first) of 2L+1
/// integers each. Only rectangular regions are supported.
pub fn field_to_text(field: &HeightField, params: &Params) -> Result<String> {
    let (l, m) = field
        .region
        .half_sides()
        .ok_or_else(|| Error::validation("text format requires a rectangular region"))?;
    if matches!(field.bc, BoundaryCondition::Explicit(_)) {
        return Err(Error::validation("explicit boundary maps have no text form"));
    }
    let mut s = format!("{} {} {} {} {}\n", l, m, params.p, params.beta, field.bc.kind_label());
    let w = (2 * l + 1) as usize;
    for row in field.heights.chunks(w) {
        let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    Ok(s)
}

/// Parses the text format written by [`field_to_text`].
pub fn field_from_text(text: &str) -> Result<(HeightField, Params)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 {
        return Err(Error::Parse(format!("bad header `{header}`: want `L M p beta bc-kind`")));
    }
    let l: i64 = toks[0].parse().map_err(|_| Error::Parse("bad L".into()))?;
    let m: i64 = toks[1].parse().map_err(|_| Error::Parse("bad M".into()))?;
    let p = if toks[2] == "inf" {
        Exponent::Infinite
    } else {
        Exponent::new(toks[2].parse().map_err(|_| Error::Parse("bad p".into()))?)?
    };
    let beta: f64 = toks[3].parse().map_err(|_| Error::Parse("bad beta".into()))?;
    let bc = parse_bc_label(toks[4], l, m)?;
    let region = if l == m { Region::square(l)? } else { Region::rectangle(l, m)? };
    let mut heights = Vec::with_capacity(region.len());
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split_whitespace() {
            heights.push(tok.parse().map_err(|_| Error::Parse(format!("bad height `{tok}`")))?);
        }
    }
    let field = HeightField::new(region, heights, bc)?;
    Ok((field, Params::new(p, beta)?))
}

/// Parses a boundary-condition label: `zero`, `constant:<c>` or
/// `staircase:a1,..,an/b1,..,bn`.
pub fn parse_bc_label(label: &str, l: i64, m: i64) -> Result<BoundaryCondition> {
    if label == "zero" {
        return Ok(BoundaryCondition::Zero);
    }
    if let Some(c) = label.strip_prefix("constant:") {
        return Ok(BoundaryCondition::Constant(
            c.parse().map_err(|_| Error::Parse(format!("bad constant bc `{label}`")))?,
        ));
    }
    if let Some(spec) = label.strip_prefix("staircase:") {
        let parse_list = |s: &str| -> Result<Vec<i64>> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad step `{t}`"))))
                .collect()
        };
        let (a, b) = match spec.split_once('/') {
            Some((a, b)) => (parse_list(a)?, parse_list(b)?),
            None => (parse_list(spec)?, parse_list(spec)?),
        };
        return staircase_bc(a, b, l, m);
    }
    Err(Error::Parse(format!("unknown boundary condition `{label}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(p: f64, beta: f64) -> Params {
        Params::new(Exponent::new(p).unwrap(), beta).unwrap()
    }

    #[test]
    fn flat_field_zero_energy() {
        for p in [1.0, 1.5, 2.0, f64::INFINITY] {
            let f = HeightField::flat(Region::square(2).unwrap(), 0, BoundaryCondition::Zero)
                .unwrap();
            assert_eq!(energy(&f, &params(p, 1.0), &WeightRule::Standard), 0.0);
        }
    }

    #[test]
    fn single_site_energies() {
        let f = HeightField::new(
            Region::square(0).unwrap(),
            vec![2],
            BoundaryCondition::Zero,
        )
        .unwrap();
        // four boundary bonds with gradient 2
        assert_eq!(energy(&f, &params(2.0, 1.0), &WeightRule::Standard), 16.0);
        assert_eq!(energy(&f, &params(1.0, 1.0), &WeightRule::Standard), 8.0);
        // gradients of magnitude >= 2 are forbidden at p = inf
        assert!(energy(&f, &params(f64::INFINITY, 1.0), &WeightRule::Standard).is_infinite());
    }

    #[test]
    fn energy_delta_unit_moves() {
        let region = Region::square(2).unwrap();
        let f = HeightField::flat(region, 0, BoundaryCondition::Zero).unwrap();
        let d1 = energy_delta(&f, Site::new(0, 0), 1, &params(1.0, 1.0), &WeightRule::Standard);
        assert_eq!(d1, 4.0);
        let d3 = energy_delta(&f, Site::new(0, 0), 1, &params(3.0, 1.0), &WeightRule::Standard);
        assert_eq!(d3, 4.0);
    }

    #[test]
    fn staircase_spot_values() {
        let (l, m) = (4, 3);
        let bc = staircase_bc(vec![-1, 2], vec![0, 1], l, m).unwrap();
        assert_eq!(bc.eval(Site::new(-l - 1, 1)), 1);
        assert_eq!(bc.eval(Site::new(l + 1, 1)), 2);
        assert_eq!(bc.eval(Site::new(0, -(m + 1))), 0);
        assert_eq!(bc.eval(Site::new(0, m + 1)), 2);

        let one = staircase_bc(vec![0], vec![0], 2, 2).unwrap();
        assert_eq!(one.eval(Site::new(-3, -1)), 0);
        assert_eq!(one.eval(Site::new(-3, 0)), 1);
        assert_eq!(one.eval(Site::new(3, 2)), 1);

        let empty = staircase_bc(vec![], vec![], 2, 2).unwrap();
        for y in -3..=3 {
            assert_eq!(empty.eval(Site::new(-3, y)), 0);
            assert_eq!(empty.eval(Site::new(3, y)), 0);
        }
    }

    #[test]
    fn staircase_rejects_unordered() {
        assert!(staircase_bc(vec![1, 0], vec![0, 1], 2, 2).is_err());
        assert!(staircase_bc(vec![0, 5], vec![0, 1], 2, 2).is_err());
    }

    #[test]
    fn fkg_standard_and_tilted() {
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            for kind in [BondKind::Standard, BondKind::Tilted] {
                let v = check_fkg_lattice(&params(p, 1.0), kind, -3..=3);
                assert!(v.is_none(), "p={p} {kind:?}: {v:?}");
            }
        }
    }

    #[test]
    fn fkg_equality_at_origin() {
        let p = params(1.0, 1.0);
        let w = |x: i64, y: i64| p.bond_weight(BondKind::Standard, x.abs_diff(y));
        assert_eq!(w(0, 0) + w(0, 0), 0.0);
    }

    #[test]
    fn tilted_rule_marks_bonds() {
        let mark = Bond::new(Site::new(0, 0), Site::new(0, 1));
        let rule = WeightRule::Tilted(MarkedBonds::from_bonds([mark]));
        assert_eq!(rule.kind_of(&mark), BondKind::Tilted);
        let other = Bond::new(Site::new(0, 0), Site::new(1, 0));
        assert_eq!(rule.kind_of(&other), BondKind::Standard);

        // marked bond with zero gradient costs nothing, unit gradient costs
        // 2^p - 1
        let pr = params(2.0, 1.0);
        assert_eq!(pr.tilted_weight(0), 0.0);
        assert_eq!(pr.tilted_weight(1), 3.0);
    }

    #[test]
    fn text_roundtrip() {
        let region = Region::rectangle(2, 1).unwrap();
        let n = region.len();
        let heights: Vec<i64> = (0..n as i64).map(|i| i % 3 - 1).collect();
        let bc = staircase_bc(vec![0], vec![1], 2, 1).unwrap();
        let field = HeightField::new(region, heights, bc).unwrap();
        let pr = params(1.5, 2.25);
        let text = field_to_text(&field, &pr).unwrap();
        let (back, pr2) = field_from_text(&text).unwrap();
        assert_eq!(back, field);
        assert_eq!(pr2, pr);
    }

    proptest! {
        /// Global height shift together with a shifted boundary condition
        /// leaves the energy exactly invariant.
        #[test]
        fn shift_invariance(
            heights in proptest::collection::vec(-3i64..=3, 9),
            c in -5i64..=5,
            pexp in prop_oneof![Just(1.0), Just(1.5), Just(2.0)],
        ) {
            let region = Region::square(1).unwrap();
            let f0 = HeightField::new(region.clone(), heights.clone(), BoundaryCondition::Constant(0)).unwrap();
            let shifted: Vec<i64> = heights.iter().map(|h| h + c).collect();
            let f1 = HeightField::new(region, shifted, BoundaryCondition::Constant(c)).unwrap();
            let pr = params(pexp, 1.0);
            let e0 = energy(&f0, &pr, &WeightRule::Standard);
            let e1 = energy(&f1, &pr, &WeightRule::Standard);
            prop_assert_eq!(e0.to_bits(), e1.to_bits());
        }

        /// On fields with all gradients in {-1,0,1} the p=1 and p=inf
        /// energies agree exactly.
        #[test]
        fn p1_matches_pinf_on_unit_gradients(seed in proptest::collection::vec(0i64..=1, 9)) {
            let region = Region::square(1).unwrap();
            let f = HeightField::new(region, seed, BoundaryCondition::Zero).unwrap();
            let e1 = energy(&f, &params(1.0, 1.0), &WeightRule::Standard);
            let einf = energy(&f, &params(f64::INFINITY, 1.0), &WeightRule::Standard);
            prop_assert_eq!(e1, einf);
        }

        /// energy_delta telescopes along a move sequence.
        #[test]
        fn delta_telescopes(
            start in proptest::collection::vec(-2i64..=2, 9),
            moves in proptest::collection::vec((0usize..9, -2i64..=2), 1..20),
            pexp in prop_oneof![Just(1.0), Just(2.0), Just(2.5)],
        ) {
            let region = Region::square(1).unwrap();
            let pr = params(pexp, 1.0);
            let mut f = HeightField::new(region.clone(), start, BoundaryCondition::Zero).unwrap();
            let e_start = energy(&f, &pr, &WeightRule::Standard);
            let mut acc = 0.0;
            for (idx, h) in moves {
                let site = region.sites()[idx];
                acc += energy_delta(&f, site, h, &pr, &WeightRule::Standard);
                f.set(site, h);
            }
            let e_end = energy(&f, &pr, &WeightRule::Standard);
            prop_assert!((e_end - e_start - acc).abs() < 1e-10);
        }

        /// Both weight rules are nonnegative, nondecreasing for a >= 0 and
        /// convex as functions of the signed gradient.
        #[test]
        fn weight_shape(pexp in prop_oneof![Just(1.0), Just(1.3), Just(2.0), Just(4.0)]) {
            let pr = params(pexp, 1.0);
            for kind in [BondKind::Standard, BondKind::Tilted] {
                let w = |t: i64| pr.bond_weight(kind, t.unsigned_abs());
                for a in 0u64..8 {
                    prop_assert!(pr.bond_weight(kind, a) >= 0.0);
                    prop_assert!(pr.bond_weight(kind, a + 1) >= pr.bond_weight(kind, a));
                }
                for t in -6i64..=6 {
                    prop_assert!(w(t + 1) + w(t - 1) >= 2.0 * w(t) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn random_delta_matches_full_recompute() {
        // deterministic pseudo-random probe on a 5x5 box
        let region = Region::square(2).unwrap();
        let pr = params(1.7, 0.8);
        let mut heights = vec![0i64; region.len()];
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for h in heights.iter_mut() {
            *h = (next() % 7) as i64 - 3;
        }
        let f = HeightField::new(region.clone(), heights, BoundaryCondition::Zero).unwrap();
        for _ in 0..50 {
            let idx = (next() % region.len() as u64) as usize;
            let nh = (next() % 7) as i64 - 3;
            let site = region.sites()[idx];
            let d = energy_delta(&f, site, nh, &pr, &WeightRule::Standard);
            let mut g = f.clone();
            g.set(site, nh);
            let full = energy(&g, &pr, &WeightRule::Standard) - energy(&f, &pr, &WeightRule::Standard);
            assert!((d - full).abs() < 1e-12);
        }
    }
}
