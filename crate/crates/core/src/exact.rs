//! Exact computation on truncated-height systems: full enumeration with
//! incremental energy accumulation, a factorized column-transfer method for
//! strips, constrained partition functions, exact event probabilities and
//! staircase partition-function ratios.
//!
//! All partition values are carried as log-values; enumeration accumulates
//! with a rescaled log-sum-exp so that large beta and hundreds of bonds do
//! not underflow.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Bond, Region, Site};
use crate::model::{BondKind, BoundaryCondition, HeightField, MarkedBonds, Params};

/// Default cap on the number of configurations full enumeration may visit.
pub const ENUM_STATE_CAP: u128 = 100_000_000;
/// Default cap on the per-column state count of the transfer method.
pub const TRANSFER_STATE_CAP: u128 = 1 << 22;

/// Allowed height window [lo, hi]; the finite proxy for unbounded heights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::validation(format!("window [{lo},{hi}] is empty")));
        }
        Ok(Window { lo, hi })
    }

    /// Default truncation for a staircase of n steps: [-4, n+4].
    pub fn staircase_default(n: usize) -> Self {
        Window { lo: -4, hi: n as i64 + 4 }
    }

    pub fn size(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn contains(&self, h: i64) -> bool {
        (self.lo..=self.hi).contains(&h)
    }

    pub fn heights(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// Sign constraints plus optional tilt: heights >= 0 on `plus`, <= 0 on
/// `minus`, and the tilted bond weight on the marked bonds. `bounds` narrows
/// single sites to an explicit interval (used for exact marginals).
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    pub plus: Vec<Site>,
    pub minus: Vec<Site>,
    pub tilt: Option<MarkedBonds>,
    pub bounds: Vec<(Site, i64, i64)>,
}

impl ConstraintSet {
    pub fn positive_on(sites: impl IntoIterator<Item = Site>) -> Self {
        ConstraintSet { plus: sites.into_iter().collect(), ..Default::default() }
    }

    fn allowed(&self, s: Site, window: Window) -> (i64, i64) {
        let mut lo = window.lo;
        let mut hi = window.hi;
        if self.plus.contains(&s) {
            lo = lo.max(0);
        }
        if self.minus.contains(&s) {
            hi = hi.min(0);
        }
        for &(t, blo, bhi) in &self.bounds {
            if t == s {
                lo = lo.max(blo);
                hi = hi.min(bhi);
            }
        }
        (lo, hi)
    }

    fn kind_of(&self, bond: &Bond) -> BondKind {
        match &self.tilt {
            Some(marked) if marked.contains(bond) => BondKind::Tilted,
            _ => BondKind::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Enumerate,
    Transfer,
}

/// An exactly computed log partition function.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionValue {
    pub log_z: f64,
    pub method: Method,
    pub exact: bool,
    pub window: Window,
    pub n_states: u128,
    /// Mean energy <H> under the (constrained) Gibbs measure; enumeration only.
    pub mean_energy: Option<f64>,
}

// ---------------------------------------------------------------------------
// enumeration
// ---------------------------------------------------------------------------

struct EnumProblem {
    /// allowed heights per site, in region order
    allowed: Vec<(i64, i64)>,
    /// bonds to already-assigned neighbors: (site index, kind)
    back_bonds: Vec<Vec<(usize, BondKind)>>,
    /// bonds to boundary sites: (boundary value, kind)
    bc_bonds: Vec<Vec<(i64, BondKind)>>,
}

impl EnumProblem {
    fn build(
        region: &Region,
        bc: &BoundaryCondition,
        constraints: &ConstraintSet,
        window: Window,
    ) -> Result<Self> {
        let mut allowed = Vec::with_capacity(region.len());
        let mut back_bonds = vec![Vec::new(); region.len()];
        let mut bc_bonds = vec![Vec::new(); region.len()];
        for (i, &s) in region.sites().iter().enumerate() {
            let (lo, hi) = constraints.allowed(s, window);
            if lo > hi {
                return Err(Error::validation(format!(
                    "contradictory constraints at site ({},{})",
                    s.x, s.y
                )));
            }
            allowed.push((lo, hi));
            for nb in s.neighbors() {
                let bond = Bond::new(s, nb);
                let kind = constraints.kind_of(&bond);
                match region.site_index(nb) {
                    Some(j) if j < i => back_bonds[i].push((j, kind)),
                    Some(_) => {}
                    None => bc_bonds[i].push((bc.eval(nb), kind)),
                }
            }
        }
        Ok(EnumProblem { allowed, back_bonds, bc_bonds })
    }

    fn state_count(&self) -> u128 {
        self.allowed.iter().map(|(lo, hi)| (hi - lo + 1) as u128).product()
    }
}

/// Compensated sum that survives rescaling.
#[derive(Clone, Copy, Default)]
struct Kahan {
    s: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }

    #[inline]
    fn scale(&mut self, f: f64) {
        self.s *= f;
        self.c *= f;
    }
}

/// Rescaled log-sum-exp accumulator with weighted-observable support.
struct GibbsAccum {
    max_t: f64,
    sum: Kahan,
    sum_energy: Kahan,
    sum_obs: Kahan,
    n: u128,
    min_energy: f64,
    argmin: Vec<i64>,
}

impl GibbsAccum {
    fn new() -> Self {
        GibbsAccum {
            max_t: f64::NEG_INFINITY,
            sum: Kahan::default(),
            sum_energy: Kahan::default(),
            sum_obs: Kahan::default(),
            n: 0,
            min_energy: f64::INFINITY,
            argmin: Vec::new(),
        }
    }

    #[inline]
    fn push(&mut self, energy: f64, obs: f64, heights: &[i64], beta: f64) {
        self.n += 1;
        let t = -beta * energy;
        if t == f64::NEG_INFINITY {
            return;
        }
        if t > self.max_t {
            let scale = (self.max_t - t).exp();
            self.sum.scale(scale);
            self.sum_energy.scale(scale);
            self.sum_obs.scale(scale);
            self.max_t = t;
        }
        let w = (t - self.max_t).exp();
        self.sum.add(w);
        self.sum_energy.add(energy * w);
        self.sum_obs.add(obs * w);
        if energy < self.min_energy {
            self.min_energy = energy;
            self.argmin = heights.to_vec();
        }
    }

    fn log_z(&self) -> f64 {
        if self.sum.s == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max_t + self.sum.s.ln()
        }
    }
}

fn enumerate_with<F>(
    region: &Region,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    constraints: &ConstraintSet,
    cap: u128,
    mut obs: F,
) -> Result<GibbsAccum>
where
    F: FnMut(&[i64]) -> f64,
{
    if region.is_empty() {
        return Err(Error::validation("cannot enumerate an empty region"));
    }
    let prob = EnumProblem::build(region, bc, constraints, window)?;
    let n_states = prob.state_count();
    if n_states > cap {
        return Err(Error::CapExceeded {
            what: "enumeration (use the transfer method for strips)",
            needed: n_states,
            cap,
            unit: "states",
        });
    }
    let n = region.len();
    let mut heights = vec![0i64; n];
    let mut acc = GibbsAccum::new();
    // explicit DFS over sites in region order with incremental bond energy
    let mut level = 0usize;
    let mut choice = vec![0i64; n]; // current height offset per level
    let mut partial = vec![0f64; n + 1]; // energy after assigning first `level` sites
    loop {
        let (lo, hi) = prob.allowed[level];
        let h = lo + choice[level];
        if h > hi {
            // backtrack
            if level == 0 {
                break;
            }
            choice[level] = 0;
            level -= 1;
            choice[level] += 1;
            continue;
        }
        heights[level] = h;
        let mut delta = 0.0;
        for &(j, kind) in &prob.back_bonds[level] {
            delta += params.bond_weight(kind, h.abs_diff(heights[j]));
        }
        for &(v, kind) in &prob.bc_bonds[level] {
            delta += params.bond_weight(kind, h.abs_diff(v));
        }
        let e = partial[level] + delta;
        if e.is_infinite() {
            // forbidden gradient (p = inf): weight is exactly zero, prune
            acc.n += count_subtree(&prob.allowed[level + 1..]);
            choice[level] += 1;
            continue;
        }
        if level + 1 == n {
            let o = obs(&heights);
            acc.push(e, o, &heights, params.beta);
            choice[level] += 1;
        } else {
            partial[level + 1] = e;
            level += 1;
        }
    }
    Ok(acc)
}

fn count_subtree(allowed: &[(i64, i64)]) -> u128 {
    allowed.iter().map(|(lo, hi)| (hi - lo + 1) as u128).product()
}

/// Exact log partition function by full enumeration over the truncated
/// configuration space, honoring sign constraints and tilted bonds.
pub fn enumerate_partition(
    region: &Region,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    constraints: &ConstraintSet,
) -> Result<PartitionValue> {
    enumerate_partition_with_cap(region, bc, params, window, constraints, ENUM_STATE_CAP)
}

pub fn enumerate_partition_with_cap(
    region: &Region,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    constraints: &ConstraintSet,
    cap: u128,
) -> Result<PartitionValue> {
    let acc = enumerate_with(region, bc, params, window, constraints, cap, |_| 0.0)?;
    Ok(PartitionValue {
        log_z: acc.log_z(),
        method: Method::Enumerate,
        exact: true,
        window,
        n_states: acc.n,
        mean_energy: Some(acc.sum_energy.s / acc.sum.s),
    })
}

/// Exact probability of a decidable event under the (possibly constrained)
/// Gibbs measure. The event sees heights in region site order.
pub fn exact_probability<F>(
    region: &Region,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    event: F,
) -> Result<f64>
where
    F: Fn(&[i64]) -> bool,
{
    let acc = enumerate_with(
        region,
        bc,
        params,
        window,
        &ConstraintSet::default(),
        ENUM_STATE_CAP,
        |h| if event(h) { 1.0 } else { 0.0 },
    )?;
    Ok(acc.sum_obs.s / acc.sum.s)
}

/// Exact Gibbs expectation of an observable, honoring constraints.
pub fn exact_expectation<F>(
    region: &Region,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    constraints: &ConstraintSet,
    obs: F,
) -> Result<f64>
where
    F: Fn(&[i64]) -> f64,
{
    let acc = enumerate_with(region, bc, params, window, constraints, ENUM_STATE_CAP, obs)?;
    Ok(acc.sum_obs.s / acc.sum.s)
}

/// The minimum-energy configuration in the truncated space (first one in
/// enumeration order on ties).
pub fn ground_state(
    region: &Region,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    constraints: &ConstraintSet,
) -> Result<HeightField> {
    let acc = enumerate_with(region, bc, params, window, constraints, ENUM_STATE_CAP, |_| 0.0)?;
    if acc.argmin.is_empty() {
        return Err(Error::Estimate("no admissible configuration".into()));
    }
    HeightField::new(region.clone(), acc.argmin, bc.clone())
}

// ---------------------------------------------------------------------------
// transfer method
// ---------------------------------------------------------------------------

/// Exact log partition function for the rectangle [-L,L]x[-M,M] by a
/// column-to-column transfer over truncated cross-section states. The sweep
/// runs along the longer side so the state space is the smaller
/// cross-section; boundary heights fold into per-column edge weights.
pub fn transfer_matrix(
    l: i64,
    m: i64,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    constraints: &ConstraintSet,
) -> Result<PartitionValue> {
    transfer_matrix_with_cap(l, m, bc, params, window, constraints, TRANSFER_STATE_CAP)
}

pub fn transfer_matrix_with_cap(
    l: i64,
    m: i64,
    bc: &BoundaryCondition,
    params: &Params,
    window: Window,
    constraints: &ConstraintSet,
    cap: u128,
) -> Result<PartitionValue> {
    if l < 0 || m < 0 {
        return Err(Error::validation("transfer_matrix requires L, M >= 0"));
    }
    let wx = (2 * l + 1) as usize;
    let wy = (2 * m + 1) as usize;
    // sweep along the longer side
    let sweep_is_y = wx <= wy;
    let (cross, sweeps) = if sweep_is_y { (wx, wy) } else { (wy, wx) };
    let wsz = window.size();
    let n_states = (wsz as u128).checked_pow(cross as u32).unwrap_or(u128::MAX);
    if n_states > cap {
        return Err(Error::CapExceeded {
            what: "transfer cross-section",
            needed: n_states,
            cap,
            unit: "states",
        });
    }
    let s_total = n_states as usize;

    // real lattice coordinates of (cross index c, sweep index t)
    let site_at = |c: usize, t: usize| -> Site {
        if sweep_is_y {
            Site::new(c as i64 - l, t as i64 - m)
        } else {
            Site::new(t as i64 - l, c as i64 - m)
        }
    };
    // neighbor just before the first / after the last cross position
    let cross_wall = |c_edge: i64, t: usize| -> Site {
        if sweep_is_y {
            Site::new(c_edge - l, t as i64 - m)
        } else {
            Site::new(t as i64 - l, c_edge - m)
        }
    };
    // neighbor before the first / after the last sweep row
    let sweep_wall = |c: usize, t_edge: i64| -> Site {
        if sweep_is_y {
            Site::new(c as i64 - l, t_edge - m)
        } else {
            Site::new(t_edge - l, c as i64 - m)
        }
    };

    let weight_between = |a: Site, b: Site, ha: i64, hb: i64| -> f64 {
        let bond = Bond::new(a, b);
        let kind = constraints.kind_of(&bond);
        (-params.beta * params.bond_weight(kind, ha.abs_diff(hb))).exp()
    };

    let heights: Vec<i64> = window.heights().collect();

    // per-site factor tables for one sweep row: site_tab[c][d] multiplies the
    // wall bonds, constraint mask, and at the first/last row the bc bonds
    let site_tab_for = |t: usize, first: bool, last: bool| -> Result<Vec<Vec<f64>>> {
        let mut tabs = Vec::with_capacity(cross);
        for c in 0..cross {
            let s = site_at(c, t);
            let (lo, hi) = constraints.allowed(s, window);
            if lo > hi {
                return Err(Error::validation(format!(
                    "contradictory constraints at site ({},{})",
                    s.x, s.y
                )));
            }
            let mut tab = vec![0.0; wsz];
            for (d, &h) in heights.iter().enumerate() {
                if h < lo || h > hi {
                    continue;
                }
                let mut f = 1.0;
                if c == 0 {
                    let wall = cross_wall(-1, t);
                    f *= weight_between(s, wall, h, bc.eval(wall));
                }
                if c + 1 == cross {
                    let wall = cross_wall(cross as i64, t);
                    f *= weight_between(s, wall, h, bc.eval(wall));
                }
                if first {
                    let wall = sweep_wall(c, -1);
                    f *= weight_between(s, wall, h, bc.eval(wall));
                }
                if last {
                    let wall = sweep_wall(c, if sweep_is_y { 2 * m + 1 } else { 2 * l + 1 });
                    f *= weight_between(s, wall, h, bc.eval(wall));
                }
                tab[d] = f;
            }
            tabs.push(tab);
        }
        Ok(tabs)
    };

    // cross-bond tables for one row: cross_tab[c][d][d'] couples positions
    // c and c+1
    let cross_tab_for = |t: usize| -> Vec<Vec<f64>> {
        let mut tabs = Vec::with_capacity(cross.saturating_sub(1));
        for c in 0..cross.saturating_sub(1) {
            let a = site_at(c, t);
            let b = site_at(c + 1, t);
            let mut tab = vec![0.0; wsz * wsz];
            for (da, &ha) in heights.iter().enumerate() {
                for (db, &hb) in heights.iter().enumerate() {
                    tab[da * wsz + db] = weight_between(a, b, ha, hb);
                }
            }
            tabs.push(tab);
        }
        tabs
    };

    // sweep-bond matrices between row t and t+1, one per cross position
    let step_tab_for = |t: usize| -> Vec<Vec<f64>> {
        let mut tabs = Vec::with_capacity(cross);
        for c in 0..cross {
            let a = site_at(c, t);
            let b = site_at(c, t + 1);
            let mut tab = vec![0.0; wsz * wsz];
            for (dn, &hn) in heights.iter().enumerate() {
                for (dold, &hold) in heights.iter().enumerate() {
                    tab[dn * wsz + dold] = weight_between(a, b, hn, hold);
                }
            }
            tabs.push(tab);
        }
        tabs
    };

    let mut v = vec![1.0f64; s_total];
    let mut scratch = vec![0.0f64; s_total];
    let mut log_scale = 0.0f64;

    let multiply_row = |v: &mut [f64], site_tabs: &[Vec<f64>], cross_tabs: &[Vec<f64>]| {
        let mut digits = vec![0usize; cross];
        for state in v.iter_mut() {
            let mut f = 1.0;
            for c in 0..cross {
                f *= site_tabs[c][digits[c]];
            }
            for c in 0..cross - 1 {
                f *= cross_tabs[c][digits[c] * wsz + digits[c + 1]];
            }
            *state *= f;
            // odometer increment
            for d in digits.iter_mut() {
                *d += 1;
                if *d < wsz {
                    break;
                }
                *d = 0;
            }
        }
    };

    for t in 0..sweeps {
        if t > 0 {
            // factorized vertical coupling, one axis at a time
            let steps = step_tab_for(t - 1);
            for (c, k) in steps.iter().enumerate() {
                let stride = wsz.pow(c as u32);
                apply_axis(&v, &mut scratch, wsz, stride, k);
                std::mem::swap(&mut v, &mut scratch);
            }
        }
        let site_tabs = site_tab_for(t, t == 0, t + 1 == sweeps)?;
        let cross_tabs = cross_tab_for(t);
        multiply_row(&mut v, &site_tabs, &cross_tabs);
        // renormalize to dodge underflow
        let mx = v.iter().cloned().fold(0.0f64, f64::max);
        if mx == 0.0 {
            return Ok(PartitionValue {
                log_z: f64::NEG_INFINITY,
                method: Method::Transfer,
                exact: true,
                window,
                n_states,
                mean_energy: None,
            });
        }
        let inv = 1.0 / mx;
        for x in v.iter_mut() {
            *x *= inv;
        }
        log_scale += mx.ln();
    }

    let total: f64 = kahan_sum(&v);
    Ok(PartitionValue {
        log_z: log_scale + total.ln(),
        method: Method::Transfer,
        exact: true,
        window,
        n_states,
        mean_energy: None,
    })
}

fn apply_axis(v: &[f64], out: &mut [f64], wsz: usize, stride: usize, k: &[f64]) {
    let block = stride * wsz;
    let s = v.len();
    let mut base = 0;
    while base < s {
        for lo in 0..stride {
            let off = base + lo;
            for dn in 0..wsz {
                let row = &k[dn * wsz..(dn + 1) * wsz];
                let mut acc = 0.0;
                for (dold, kk) in row.iter().enumerate() {
                    acc += kk * v[off + dold * stride];
                }
                out[off + dn * stride] = acc;
            }
        }
        base += block;
    }
}

fn kahan_sum(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

// ---------------------------------------------------------------------------
// staircase ratios
// ---------------------------------------------------------------------------

/// The sequence log Z(a;b;L,M) - log Z_{L,M} for increasing M, together
/// with a convergence flag (successive difference below `tol`). The last
/// value approximates the M -> infinity limit.
#[derive(Debug, Clone, Serialize)]
pub struct StaircaseRatio {
    pub l: i64,
    pub a: Vec<i64>,
    pub b: Vec<i64>,
    pub ratios: Vec<(i64, f64)>,
    pub converged: bool,
    pub limit: f64,
}

pub fn staircase_ratio(
    a: &[i64],
    b: &[i64],
    l: i64,
    m_list: &[i64],
    params: &Params,
    window: Window,
    tol: f64,
) -> Result<StaircaseRatio> {
    staircase_ratio_cached(a, b, l, m_list, params, window, tol, &mut std::collections::HashMap::new())
}

/// Same as [`staircase_ratio`] but reusing zero-boundary denominators
/// across calls (they depend only on M for fixed L, params and window).
#[allow(clippy::too_many_arguments)]
pub fn staircase_ratio_cached(
    a: &[i64],
    b: &[i64],
    l: i64,
    m_list: &[i64],
    params: &Params,
    window: Window,
    tol: f64,
    denominators: &mut std::collections::HashMap<i64, f64>,
) -> Result<StaircaseRatio> {
    if m_list.is_empty() {
        return Err(Error::validation("staircase_ratio needs at least one M"));
    }
    let mut ratios = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let bc = crate::model::staircase_bc(a.to_vec(), b.to_vec(), l, m)?;
        let num = transfer_matrix(l, m, &bc, params, window, &ConstraintSet::default())?;
        let den = match denominators.get(&m) {
            Some(&d) => d,
            None => {
                let d = transfer_matrix(
                    l,
                    m,
                    &BoundaryCondition::Zero,
                    params,
                    window,
                    &ConstraintSet::default(),
                )?
                .log_z;
                denominators.insert(m, d);
                d
            }
        };
        ratios.push((m, num.log_z - den));
    }
    let converged = ratios.len() >= 2 && {
        let k = ratios.len();
        (ratios[k - 1].1 - ratios[k - 2].1).abs() < tol
    };
    let limit = ratios.last().unwrap().1;
    Ok(StaircaseRatio { l, a: a.to_vec(), b: b.to_vec(), ratios, converged, limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{staircase_bc, Exponent};

    fn params(p: f64, beta: f64) -> Params {
        Params::new(Exponent::new(p).unwrap(), beta).unwrap()
    }

    fn no_constraints() -> ConstraintSet {
        ConstraintSet::default()
    }

    #[test]
    fn single_site_closed_form() {
        // three states at heights -1,0,1, each non-flat one paying 4 bonds
        let region = Region::square(0).unwrap();
        let beta = 0.7;
        let z = enumerate_partition(
            &region,
            &BoundaryCondition::Zero,
            &params(1.0, beta),
            Window::new(-1, 1).unwrap(),
            &no_constraints(),
        )
        .unwrap();
        let expect = (1.0 + 2.0 * (-4.0 * beta).exp()).ln();
        assert!((z.log_z - expect).abs() < 1e-14);
        assert_eq!(z.n_states, 3);

        // constraining phi(0) >= 0 drops the height -1 state
        let zc = enumerate_partition(
            &region,
            &BoundaryCondition::Zero,
            &params(1.0, beta),
            Window::new(-1, 1).unwrap(),
            &ConstraintSet::positive_on([Site::new(0, 0)]),
        )
        .unwrap();
        let expect_c = (1.0 + (-4.0 * beta).exp()).ln();
        assert!((zc.log_z - expect_c).abs() < 1e-14);
    }

    #[test]
    fn single_site_tail_probability() {
        let region = Region::square(0).unwrap();
        let beta = 1.0;
        let p = exact_probability(
            &region,
            &BoundaryCondition::Zero,
            &params(1.0, beta),
            Window::new(-1, 1).unwrap(),
            |h| h[0] >= 1,
        )
        .unwrap();
        let q = (-4.0f64).exp();
        assert!((p - q / (1.0 + 2.0 * q)).abs() < 1e-15);
        assert!((p - 0.01768).abs() < 5e-5);
    }

    #[test]
    fn whole_space_event_has_probability_one() {
        let region = Region::square(1).unwrap();
        let p = exact_probability(
            &region,
            &BoundaryCondition::Zero,
            &params(2.0, 1.0),
            Window::new(-1, 1).unwrap(),
            |_| true,
        )
        .unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn complementary_events_sum_to_one() {
        let region = Region::square(1).unwrap();
        let w = Window::new(-1, 1).unwrap();
        let pr = params(1.5, 0.9);
        let a = exact_probability(&region, &BoundaryCondition::Zero, &pr, w, |h| {
            h.iter().all(|&x| x >= 0)
        })
        .unwrap();
        let b = exact_probability(&region, &BoundaryCondition::Zero, &pr, w, |h| {
            h.iter().any(|&x| x < 0)
        })
        .unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transfer_agrees_with_enumeration_small() {
        // 2x2-ish boxes and strips across p and bc
        let w = Window::new(-1, 1).unwrap();
        for (l, m) in [(0, 0), (0, 1), (1, 1), (0, 3), (1, 2)] {
            for p in [1.0, 2.0, f64::INFINITY] {
                for bc in [
                    BoundaryCondition::Zero,
                    staircase_bc(vec![0], vec![0], l, m).unwrap(),
                ] {
                    let pr = params(p, 1.2);
                    let region = Region::rectangle(l, m).unwrap();
                    let ze = enumerate_partition(&region, &bc, &pr, w, &no_constraints()).unwrap();
                    let zt = transfer_matrix(l, m, &bc, &pr, w, &no_constraints()).unwrap();
                    let rel = (ze.log_z - zt.log_z).abs() / ze.log_z.abs().max(1.0);
                    assert!(rel < 1e-12, "L={l} M={m} p={p} bc={bc:?}: {} vs {}", ze.log_z, zt.log_z);
                }
            }
        }
    }

    #[test]
    fn transfer_single_column_matches() {
        let w = Window::new(-2, 2).unwrap();
        let pr = params(1.0, 0.8);
        let region = Region::rectangle(0, 1).unwrap();
        let ze =
            enumerate_partition(&region, &BoundaryCondition::Zero, &pr, w, &no_constraints())
                .unwrap();
        let zt =
            transfer_matrix(0, 1, &BoundaryCondition::Zero, &pr, w, &no_constraints()).unwrap();
        assert!((ze.log_z - zt.log_z).abs() < 1e-12);
    }

    #[test]
    fn transfer_with_constraints_and_tilt() {
        let w = Window::new(-1, 2).unwrap();
        let pr = params(2.0, 1.0);
        let region = Region::rectangle(1, 1).unwrap();
        let mut marked = MarkedBonds::new();
        marked.insert(Bond::new(Site::new(0, 0), Site::new(0, 1)));
        marked.insert(Bond::new(Site::new(-1, 0), Site::new(-1, 1)));
        let cs = ConstraintSet {
            plus: vec![Site::new(0, 1)],
            minus: vec![Site::new(0, -1)],
            tilt: Some(marked),
            bounds: vec![(Site::new(1, 1), 0, 1)],
        };
        let ze = enumerate_partition(&region, &BoundaryCondition::Zero, &pr, w, &cs).unwrap();
        let zt = transfer_matrix(1, 1, &BoundaryCondition::Zero, &pr, w, &cs).unwrap();
        assert!((ze.log_z - zt.log_z).abs() < 1e-11);
    }

    #[test]
    fn widening_window_never_decreases_z() {
        let pr = params(1.0, 1.0);
        let region = Region::square(1).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=3 {
            let z = enumerate_partition(
                &region,
                &BoundaryCondition::Zero,
                &pr,
                Window::new(-k, k).unwrap(),
                &no_constraints(),
            )
            .unwrap();
            assert!(z.log_z >= prev);
            prev = z.log_z;
        }
    }

    #[test]
    fn window_truncation_converges_at_low_temperature() {
        let pr = params(1.0, 3.0);
        let region = Region::square(1).unwrap();
        let z1 = enumerate_partition(
            &region,
            &BoundaryCondition::Zero,
            &pr,
            Window::new(-1, 1).unwrap(),
            &no_constraints(),
        )
        .unwrap();
        let z2 = enumerate_partition(
            &region,
            &BoundaryCondition::Zero,
            &pr,
            Window::new(-2, 2).unwrap(),
            &no_constraints(),
        )
        .unwrap();
        assert!(z2.log_z >= z1.log_z);
        assert!(z2.log_z - z1.log_z < 1e-3);
    }

    #[test]
    fn log_z_derivative_is_minus_mean_energy() {
        let region = Region::square(1).unwrap();
        let w = Window::new(-1, 1).unwrap();
        let beta = 1.3;
        let eps = 1e-4;
        let z = |b: f64| {
            enumerate_partition(
                &region,
                &BoundaryCondition::Zero,
                &params(2.0, b),
                w,
                &no_constraints(),
            )
            .unwrap()
        };
        let mid = z(beta);
        let fd = (z(beta + eps).log_z - z(beta - eps).log_z) / (2.0 * eps);
        let mean = mid.mean_energy.unwrap();
        assert!(mean > 0.0);
        assert!(((-fd) - mean).abs() / mean < 1e-5, "fd {fd} mean {mean}");
    }

    #[test]
    fn enumeration_cap_errors() {
        let region = Region::square(3).unwrap(); // 49 sites
        let err = enumerate_partition(
            &region,
            &BoundaryCondition::Zero,
            &params(1.0, 1.0),
            Window::new(-2, 2).unwrap(),
            &no_constraints(),
        );
        assert!(matches!(err, Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn staircase_ratio_zero_steps_is_identically_zero() {
        let r = staircase_ratio(
            &[],
            &[],
            1,
            &[1, 2, 3],
            &params(1.0, 2.0),
            Window::new(-2, 2).unwrap(),
            1e-6,
        )
        .unwrap();
        for (_, v) in &r.ratios {
            assert_eq!(*v, 0.0);
        }
        assert!(r.converged);
    }

    #[test]
    fn staircase_ratio_converges_in_m() {
        let r = staircase_ratio(
            &[0],
            &[0],
            1,
            &[2, 3, 4, 5],
            &params(1.0, 3.0),
            Window::new(-2, 3).unwrap(),
            1e-4,
        )
        .unwrap();
        assert!(r.converged, "ratios: {:?}", r.ratios);
        let k = r.ratios.len();
        assert!((r.ratios[k - 1].1 - r.ratios[k - 2].1).abs() < 1e-4);
        // one straight open contour of 2L+1 = 3 dual bonds dominates at beta = 3
        assert!((r.limit + 3.0 * 3.0).abs() < 1.0, "limit {}", r.limit);
    }

    #[test]
    fn staircase_transfer_matches_enumeration() {
        // Z(0;0;1,3): the 21-site strip is enumerable at window [0,1];
        // wider windows are cross-checked on the 15-site strip.
        let pr = params(1.0, 2.0);
        let bc3 = staircase_bc(vec![0], vec![0], 1, 3).unwrap();
        let region3 = Region::rectangle(1, 3).unwrap();
        let w01 = Window::new(0, 1).unwrap();
        let ze = enumerate_partition(&region3, &bc3, &pr, w01, &no_constraints()).unwrap();
        let zt = transfer_matrix(1, 3, &bc3, &pr, w01, &no_constraints()).unwrap();
        assert!((ze.log_z - zt.log_z).abs() < 1e-10);

        let bc1 = staircase_bc(vec![0], vec![0], 1, 1).unwrap();
        let region1 = Region::rectangle(1, 1).unwrap();
        let wide = Window::new(-2, 3).unwrap();
        let ze2 = enumerate_partition(&region1, &bc1, &pr, wide, &no_constraints()).unwrap();
        let zt2 = transfer_matrix(1, 1, &bc1, &pr, wide, &no_constraints()).unwrap();
        assert!((ze2.log_z - zt2.log_z).abs() < 1e-10);
    }

    #[test]
    fn ground_state_of_single_step_is_split_plane() {
        let pr = params(1.0, 4.0);
        let w = Window::new(-1, 2).unwrap();
        let bc = staircase_bc(vec![0], vec![0], 1, 1).unwrap();
        let region = Region::rectangle(1, 1).unwrap();
        let gs = ground_state(&region, &bc, &pr, w, &no_constraints()).unwrap();
        for &s in gs.region.sites() {
            let expect = if s.y >= 0 { 1 } else { 0 };
            assert_eq!(gs.value(s), expect, "site {s:?}");
        }
    }
}
