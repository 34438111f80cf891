//! Heat-bath Markov chains for the Gibbs measures on truncated height
//! windows: systematic sweeps with exact conditional resampling,
//! positivity-conditioned dynamics via per-site floors, monotone sandwich
//! couplings driven by shared counter-based randomness, and multilevel
//! splitting for log P(phi >= 0).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::Window;
use crate::lattice::{Bond, Region, Site};
use crate::model::{BondKind, BoundaryCondition, HeightField, Params, WeightRule};
use crate::rng::CounterRng;

/// Fraction of sweeps discarded before measuring.
pub const BURN_IN_FRACTION: f64 = 0.2;
/// Batch count for autocorrelation-aware error bars.
pub const N_BATCHES: usize = 32;

#[derive(Debug, Clone, Copy)]
enum ArmRef {
    Site(u32),
    Fixed(i64),
}

/// Initial state of a chain.
#[derive(Debug, Clone)]
pub enum Start {
    Flat(i64),
    /// All sites at the top of their allowed range.
    Top,
    /// All sites at the bottom of their allowed range.
    Bottom,
    Given(Vec<i64>),
}

/// A single-spin-flip heat-bath chain. Each site update resamples the site
/// exactly from its conditional Gibbs distribution given its neighbors,
/// restricted to the window and the optional per-site floor, using one
/// uniform variate per (sweep, site) counter.
pub struct Chain {
    region: Region,
    params: Params,
    window: Window,
    heights: Vec<i64>,
    arms: Vec<[ArmRef; 4]>,
    arm_kinds: Vec<[BondKind; 4]>,
    exp_std: Vec<f64>,
    exp_tilt: Vec<f64>,
    floor: Option<Vec<i64>>,
    rng: CounterRng,
    sweep: u64,
}

impl Chain {
    pub fn new(
        region: Region,
        bc: BoundaryCondition,
        params: Params,
        rule: &WeightRule,
        window: Window,
        floor: Option<Vec<i64>>,
        start: Start,
        rng: CounterRng,
    ) -> Result<Self> {
        if let Some(f) = &floor {
            if f.len() != region.len() {
                return Err(Error::validation("floor length must match region size"));
            }
            for (&fl, s) in f.iter().zip(region.sites()) {
                if fl.max(window.lo) > window.hi {
                    return Err(Error::EmptySupport { x: s.x, y: s.y });
                }
            }
        }
        let mut arms = Vec::with_capacity(region.len());
        let mut arm_kinds = Vec::with_capacity(region.len());
        let mut dmax: i64 = window.hi - window.lo;
        for &s in region.sites() {
            let mut a = [ArmRef::Fixed(0); 4];
            let mut k = [BondKind::Standard; 4];
            for (j, nb) in s.neighbors().into_iter().enumerate() {
                k[j] = rule.kind_of(&Bond::new(s, nb));
                a[j] = match region.site_index(nb) {
                    Some(i) => ArmRef::Site(i as u32),
                    None => {
                        let v = bc.eval(nb);
                        dmax = dmax.max((window.lo - v).abs()).max((window.hi - v).abs());
                        ArmRef::Fixed(v)
                    }
                };
            }
            arms.push(a);
            arm_kinds.push(k);
        }
        let exp_std: Vec<f64> =
            (0..=dmax).map(|d| (-params.beta * params.standard_weight(d as u64)).exp()).collect();
        let exp_tilt: Vec<f64> =
            (0..=dmax).map(|d| (-params.beta * params.tilted_weight(d as u64)).exp()).collect();

        let lo_at = |i: usize| match &floor {
            Some(f) => f[i].max(window.lo),
            None => window.lo,
        };
        let heights = match start {
            Start::Flat(h) => (0..region.len())
                .map(|i| h.max(lo_at(i)).min(window.hi))
                .collect(),
            Start::Top => vec![window.hi; region.len()],
            Start::Bottom => (0..region.len()).map(lo_at).collect(),
            Start::Given(h) => {
                if h.len() != region.len() {
                    return Err(Error::validation("start heights must match region size"));
                }
                for (i, &v) in h.iter().enumerate() {
                    if v < lo_at(i) || v > window.hi {
                        return Err(Error::validation("start heights violate window or floor"));
                    }
                }
                h
            }
        };
        Ok(Chain {
            region,
            params,
            window,
            heights,
            arms,
            arm_kinds,
            exp_std,
            exp_tilt,
            floor,
            rng,
            sweep: 0,
        })
    }

    /// Chain for the plain Gibbs measure with zero boundary conditions.
    pub fn zero_bc(region: Region, params: Params, window: Window, rng: CounterRng) -> Result<Self> {
        Chain::new(
            region,
            BoundaryCondition::Zero,
            params,
            &WeightRule::Standard,
            window,
            None,
            Start::Flat(0),
            rng,
        )
    }

    /// Chain for the positivity-conditioned measure: floor 0 everywhere.
    pub fn conditioned(
        region: Region,
        params: Params,
        window: Window,
        rng: CounterRng,
    ) -> Result<Self> {
        let n = region.len();
        Chain::new(
            region,
            BoundaryCondition::Zero,
            params,
            &WeightRule::Standard,
            window,
            Some(vec![0; n]),
            Start::Flat(0),
            rng,
        )
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    pub fn sweep_count(&self) -> u64 {
        self.sweep
    }

    pub fn value(&self, s: Site) -> Option<i64> {
        self.region.site_index(s).map(|i| self.heights[i])
    }

    pub fn min_height(&self) -> i64 {
        *self.heights.iter().min().unwrap()
    }

    pub fn snapshot(&self, bc: BoundaryCondition) -> Result<HeightField> {
        HeightField::new(self.region.clone(), self.heights.clone(), bc)
    }

    #[inline]
    fn weight_of_gap(&self, kind: BondKind, d: u64) -> f64 {
        match kind {
            BondKind::Standard => self.exp_std[d as usize],
            BondKind::Tilted => self.exp_tilt[d as usize],
        }
    }

    #[inline]
    fn allowed_range(&self, i: usize) -> (i64, i64) {
        let lo = match &self.floor {
            Some(f) => f[i].max(self.window.lo),
            None => self.window.lo,
        };
        (lo, self.window.hi)
    }

    /// The exact single-site conditional distribution: support start and
    /// normalized probabilities.
    pub fn conditional_distribution(&self, i: usize) -> (i64, Vec<f64>) {
        let (lo, hi) = self.allowed_range(i);
        let mut w = Vec::with_capacity((hi - lo + 1) as usize);
        let mut total = 0.0;
        for h in lo..=hi {
            let mut f = 1.0;
            for (arm, kind) in self.arms[i].iter().zip(&self.arm_kinds[i]) {
                let nb = match arm {
                    ArmRef::Site(j) => self.heights[*j as usize],
                    ArmRef::Fixed(v) => *v,
                };
                f *= self.weight_of_gap(*kind, h.abs_diff(nb));
            }
            total += f;
            w.push(f);
        }
        for x in w.iter_mut() {
            *x /= total;
        }
        (lo, w)
    }

    #[inline]
    fn resample_site(&mut self, i: usize, u: f64) -> Result<()> {
        let (lo, hi) = self.allowed_range(i);
        let nbs = {
            let mut nbs = [0i64; 4];
            for (j, arm) in self.arms[i].iter().enumerate() {
                nbs[j] = match arm {
                    ArmRef::Site(k) => self.heights[*k as usize],
                    ArmRef::Fixed(v) => *v,
                };
            }
            nbs
        };
        let kinds = self.arm_kinds[i];
        let mut total = 0.0;
        let mut weights = [0.0f64; 64];
        let count = (hi - lo + 1) as usize;
        debug_assert!(count <= 64);
        for (slot, h) in (lo..=hi).enumerate() {
            let mut f = 1.0;
            for j in 0..4 {
                f *= self.weight_of_gap(kinds[j], h.abs_diff(nbs[j]));
            }
            weights[slot] = f;
            total += f;
        }
        if total <= 0.0 {
            let s = self.region.sites()[i];
            return Err(Error::EmptySupport { x: s.x, y: s.y });
        }
        // inverse-CDF sampling: the shared-uniform coupling preserves the
        // pathwise order because the conditionals are stochastically ordered
        let target = u * total;
        let mut acc = 0.0;
        let mut chosen = hi;
        for (slot, h) in (lo..=hi).enumerate().take(count) {
            acc += weights[slot];
            if acc >= target {
                chosen = h;
                break;
            }
        }
        self.heights[i] = chosen;
        Ok(())
    }

    /// One systematic sweep in region site order.
    pub fn sweep(&mut self) -> Result<()> {
        let sweep_idx = self.sweep;
        for i in 0..self.heights.len() {
            let u = self.rng.uniform(sweep_idx, i as u64);
            self.resample_site(i, u)?;
        }
        self.sweep += 1;
        Ok(())
    }

    /// Runs `n` sweeps, calling the observer after each.
    pub fn run<F: FnMut(&Chain)>(&mut self, n: u64, mut observer: F) -> Result<()> {
        for _ in 0..n {
            self.sweep()?;
            observer(self);
        }
        Ok(())
    }
}

/// Outcome of the two-chain sandwich coupling.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub coalesced_at: Option<u64>,
    pub sweeps_run: u64,
}

/// Runs top- and bottom-started chains with shared randomness, checking the
/// pathwise order after every sweep. Non-coalescence within the budget is
/// reported, not an error; an order violation is an error.
pub fn monotone_sandwich(
    region: &Region,
    params: Params,
    window: Window,
    max_sweeps: u64,
    seed: u64,
) -> Result<SandwichReport> {
    let rng = CounterRng::new(seed, 0);
    let mut top = Chain::new(
        region.clone(),
        BoundaryCondition::Zero,
        params,
        &WeightRule::Standard,
        window,
        None,
        Start::Top,
        rng,
    )?;
    let mut bottom = Chain::new(
        region.clone(),
        BoundaryCondition::Zero,
        params,
        &WeightRule::Standard,
        window,
        None,
        Start::Bottom,
        rng,
    )?;
    if top.heights == bottom.heights {
        return Ok(SandwichReport { coalesced_at: Some(0), sweeps_run: 0 });
    }
    for sweep in 1..=max_sweeps {
        let sweep_idx = top.sweep;
        for i in 0..region.len() {
            let u = rng.uniform(sweep_idx, i as u64);
            top.resample_site(i, u)?;
            bottom.resample_site(i, u)?;
        }
        top.sweep += 1;
        bottom.sweep += 1;
        for i in 0..region.len() {
            if top.heights[i] < bottom.heights[i] {
                let s = region.sites()[i];
                return Err(Error::Estimate(format!(
                    "sandwich order violated at site ({},{}) on sweep {sweep}",
                    s.x, s.y
                )));
            }
        }
        if top.heights == bottom.heights {
            return Ok(SandwichReport { coalesced_at: Some(sweep), sweeps_run: sweep });
        }
    }
    Ok(SandwichReport { coalesced_at: None, sweeps_run: max_sweeps })
}

/// A Monte Carlo estimate with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub method: String,
    pub params: serde_json::Value,
}

/// Mean and batch-means standard error of a sample sequence.
pub fn batch_means(samples: &[f64], n_batches: usize) -> (f64, f64) {
    let n = samples.len();
    assert!(n >= n_batches && n_batches >= 2, "need at least {n_batches} samples");
    let batch = n / n_batches;
    let used = batch * n_batches;
    let mut means = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let s: f64 = samples[b * batch..(b + 1) * batch].iter().sum();
        means.push(s / batch as f64);
    }
    let mean: f64 = samples[..used].iter().sum::<f64>() / used as f64;
    let var: f64 =
        means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

/// Floor levels 0 < l_1 < ... < l_k; level l is the event
/// {min phi >= -l}. With `refine` = R > 1 every unit floor step is further
/// subdivided into R nested sub-events that raise the floor row band by row
/// band, so each telescoping factor stays O(1) even when a whole-box unit
/// lift is exponentially unlikely.
#[derive(Debug, Clone, Serialize)]
pub struct SplittingSchedule {
    pub levels: Vec<i64>,
    pub refine: u32,
}

impl SplittingSchedule {
    pub fn new(mut levels: Vec<i64>, refine: u32) -> Result<Self> {
        levels.sort();
        if levels.iter().any(|&l| l <= 0) {
            return Err(Error::validation("splitting levels must be positive"));
        }
        if levels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("splitting levels must be distinct"));
        }
        if refine == 0 {
            return Err(Error::validation("refinement factor must be >= 1"));
        }
        Ok(SplittingSchedule { levels, refine })
    }

    pub fn uniform(k: i64) -> Result<Self> {
        Self::uniform_refined(k, 1)
    }

    pub fn uniform_refined(k: i64, refine: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::validation("splitting depth must be >= 1"));
        }
        Self::new((1..=k).collect(), refine)
    }
}

/// Multilevel-splitting estimate of log P(phi >= 0 on the whole region)
/// under the zero-boundary Gibbs measure:
///
///   log P = sum_k log P(min >= -(k-1) | min >= -k) + log P(min >= -K),
///
/// each conditional factor estimated by a chain floored at -k and the last
/// factor by an unfloored chain. With `refine` > 1 every unit factor is
/// further telescoped through per-site floors that rise one row band at a
/// time, which keeps each factor away from zero on large boxes. `budget`
/// is the sweep count per stage.
pub fn estimate_positivity(
    region: &Region,
    params: Params,
    window: Window,
    schedule: &SplittingSchedule,
    budget: u64,
    seed: u64,
) -> Result<EstimateRecord> {
    if budget < 200 {
        return Err(Error::validation("splitting budget must be at least 200 sweeps"));
    }
    let n = region.len();
    let burn = (budget as f64 * BURN_IN_FRACTION) as u64;
    let kept = budget - burn;
    let refine = schedule.refine as usize;

    // the floor vector of sub-level j of the step from -k up to -(k-1):
    // the first (n j / R) sites in region order already sit at -(k-1)
    let sub_floor = |k: i64, j: usize| -> Vec<i64> {
        let cut = n * j / refine;
        (0..n).map(|i| if i < cut { -(k - 1) } else { -k }).collect()
    };

    // (sampling floor or None for the free chain, measured event floor)
    let mut stages: Vec<(Option<Vec<i64>>, Vec<i64>)> = Vec::new();
    let mut below = 0i64;
    for &l in &schedule.levels {
        let gap = l - below;
        for step in 0..gap {
            let k = l - step; // raising -k to -(k-1)
            for j in 0..refine {
                stages.push((Some(sub_floor(k, j)), sub_floor(k, j + 1)));
            }
        }
        below = l;
    }
    let deepest = schedule.levels.last().copied().unwrap_or(0);
    stages.push((None, vec![-deepest; n]));

    let mut log_p = 0.0;
    let mut var = 0.0;
    let mut n_samples = 0u64;
    for (stream, (floor, event_floor)) in stages.iter().enumerate() {
        let rng = CounterRng::new(seed, stream as u64);
        let mut chain = Chain::new(
            region.clone(),
            BoundaryCondition::Zero,
            params,
            &WeightRule::Standard,
            window,
            floor.clone(),
            Start::Flat(0),
            rng,
        )?;
        let mut samples = Vec::with_capacity(kept as usize);
        chain.run(burn, |_| {})?;
        chain.run(kept, |c| {
            let hit = c.heights().iter().zip(event_floor).all(|(h, f)| h >= f);
            samples.push(if hit { 1.0 } else { 0.0 });
        })?;
        let (p, se) = batch_means(&samples, N_BATCHES);
        if p <= 0.0 {
            return Err(Error::Estimate(format!(
                "splitting stage {stream} saw no successes; increase the budget or refinement"
            )));
        }
        log_p += p.ln();
        var += (se / p) * (se / p);
        n_samples += kept;
    }
    Ok(EstimateRecord {
        value: log_p,
        std_error: var.sqrt(),
        n_samples,
        seed,
        method: "multilevel-splitting".into(),
        params: serde_json::json!({
            "p": params.p.to_string(),
            "beta": params.beta,
            "window": [window.lo, window.hi],
            "levels": schedule.levels, "refine": schedule.refine,
            "budget": budget,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_expectation, exact_probability, ConstraintSet};
    use crate::model::{energy_delta, Exponent};

    fn params(p: f64, beta: f64) -> Params {
        Params::new(Exponent::new(p).unwrap(), beta).unwrap()
    }

    #[test]
    fn frozen_at_large_beta() {
        let region = Region::square(1).unwrap();
        let mut chain = Chain::zero_bc(
            region,
            params(1.0, 50.0),
            Window::new(-2, 2).unwrap(),
            CounterRng::new(1, 0),
        )
        .unwrap();
        chain.run(1000, |c| assert!(c.heights().iter().all(|&h| h == 0))).unwrap();
    }

    #[test]
    fn conditional_matches_gibbs_weights() {
        // the sampled conditional distribution itself equals the normalized
        // restricted Gibbs weights
        let region = Region::square(1).unwrap();
        let pr = params(1.6, 0.8);
        let w = Window::new(-2, 2).unwrap();
        let mut chain =
            Chain::zero_bc(region.clone(), pr, w, CounterRng::new(3, 0)).unwrap();
        chain.run(7, |_| {}).unwrap();
        let field = chain.snapshot(BoundaryCondition::Zero).unwrap();
        for i in 0..region.len() {
            let (lo, probs) = chain.conditional_distribution(i);
            let site = region.sites()[i];
            let mut weights = Vec::new();
            for h in w.heights() {
                let d = energy_delta(&field, site, h, &pr, &WeightRule::Standard);
                weights.push((-pr.beta * d).exp());
            }
            let total: f64 = weights.iter().sum();
            assert_eq!(lo, w.lo);
            for (k, expect) in weights.iter().enumerate() {
                assert!(
                    (probs[k] - expect / total).abs() < 1e-12,
                    "site {i} height slot {k}"
                );
            }
        }
    }

    #[test]
    fn empirical_tail_matches_exact() {
        let region = Region::square(1).unwrap();
        let pr = params(1.0, 1.5);
        let w = Window::new(-1, 1).unwrap();
        let exact = exact_probability(&region, &BoundaryCondition::Zero, &pr, w, |h| h[4] >= 1)
            .unwrap();
        let mut chain = Chain::zero_bc(region, pr, w, CounterRng::new(11, 0)).unwrap();
        let mut samples = Vec::new();
        chain.run(20_000, |_| {}).unwrap();
        chain
            .run(100_000, |c| samples.push(if c.heights()[4] >= 1 { 1.0 } else { 0.0 }))
            .unwrap();
        let (mean, se) = batch_means(&samples, N_BATCHES);
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "mean {mean} exact {exact} se {se}"
        );
    }

    #[test]
    fn infinite_p_never_creates_steep_gradients() {
        let region = Region::square(1).unwrap();
        let pr = params(f64::INFINITY, 0.8);
        let w = Window::new(-2, 2).unwrap();
        let mut chain = Chain::zero_bc(region.clone(), pr, w, CounterRng::new(4, 0)).unwrap();
        chain
            .run(2000, |c| {
                let f = c.snapshot(BoundaryCondition::Zero).unwrap();
                let bs = crate::lattice::boundary_sets(&region);
                for b in &bs.bonds {
                    assert!(f.value(b.a).abs_diff(f.value(b.b)) <= 1);
                }
            })
            .unwrap();
    }

    #[test]
    fn conditioned_chain_matches_constrained_enumeration() {
        let region = Region::square(1).unwrap();
        let pr = params(1.0, 1.5);
        let w = Window::new(0, 2).unwrap();
        let constraints = ConstraintSet::positive_on(region.sites().iter().copied());
        let exact_mean = exact_expectation(
            &region,
            &BoundaryCondition::Zero,
            &pr,
            Window::new(-2, 2).unwrap(),
            &constraints,
            |h| h[4] as f64,
        )
        .unwrap();
        // window [0,2] realizes the conditioning by truncation
        let mut chain =
            Chain::conditioned(region, pr, w, CounterRng::new(9, 0)).unwrap();
        let mut samples = Vec::new();
        chain.run(20_000, |_| {}).unwrap();
        chain.run(120_000, |c| samples.push(c.heights()[4] as f64)).unwrap();
        let (mean, se) = batch_means(&samples, N_BATCHES);
        assert!(
            (mean - exact_mean).abs() < 3.0 * se + 1e-3,
            "mean {mean} exact {exact_mean} se {se}"
        );
    }

    #[test]
    fn degenerate_window_is_deterministic() {
        let region = Region::square(1).unwrap();
        let mut chain = Chain::conditioned(
            region,
            params(2.0, 1.0),
            Window::new(0, 0).unwrap(),
            CounterRng::new(5, 0),
        )
        .unwrap();
        chain.run(50, |c| assert!(c.heights().iter().all(|&h| h == 0))).unwrap();
    }

    #[test]
    fn floor_window_contradiction_is_rejected() {
        let region = Region::square(0).unwrap();
        let err = Chain::new(
            region,
            BoundaryCondition::Zero,
            params(1.0, 1.0),
            &WeightRule::Standard,
            Window::new(-2, -1).unwrap(),
            Some(vec![0]),
            Start::Flat(0),
            CounterRng::new(1, 0),
        );
        assert!(matches!(err, Err(Error::EmptySupport { .. })));
    }

    #[test]
    fn sandwich_identical_start_coalesces_immediately() {
        let region = Region::square(1).unwrap();
        let report = monotone_sandwich(
            &region,
            params(1.0, 2.0),
            Window::new(0, 0).unwrap(),
            10,
            7,
        )
        .unwrap();
        assert_eq!(report.coalesced_at, Some(0));
    }

    #[test]
    fn sandwich_coalesces_and_keeps_order() {
        let region = Region::square(2).unwrap();
        let report = monotone_sandwich(
            &region,
            params(1.0, 3.0),
            Window::new(-2, 2).unwrap(),
            1000,
            13,
        )
        .unwrap();
        assert!(report.coalesced_at.is_some(), "no coalescence within 1000 sweeps");
    }

    #[test]
    fn splitting_on_sure_event_is_zero() {
        // window with floor already at zero: every level is a sure event
        let region = Region::square(1).unwrap();
        let rec = estimate_positivity(
            &region,
            params(1.0, 1.0),
            Window::new(0, 2).unwrap(),
            &SplittingSchedule::uniform(2).unwrap(),
            1000,
            3,
        )
        .unwrap();
        assert_eq!(rec.value, 0.0);
        assert_eq!(rec.std_error, 0.0);
    }

    #[test]
    fn splitting_matches_exact_probability() {
        let region = Region::square(1).unwrap();
        let pr = params(1.0, 1.5);
        let w = Window::new(-2, 2).unwrap();
        let exact = exact_probability(&region, &BoundaryCondition::Zero, &pr, w, |h| {
            h.iter().all(|&x| x >= 0)
        })
        .unwrap();
        let rec = estimate_positivity(
            &region,
            pr,
            w,
            &SplittingSchedule::uniform(2).unwrap(),
            40_000,
            17,
        )
        .unwrap();
        assert!(
            (rec.value - exact.ln()).abs() < 3.0 * rec.std_error,
            "estimate {} +- {} vs exact {}",
            rec.value,
            rec.std_error,
            exact.ln()
        );
    }

    #[test]
    fn single_site_marginals_match_oracle_on_pairs() {
        // empirical tail marginals across (site, level) pairs vs enumeration
        let region = Region::square(1).unwrap();
        let pr = params(2.0, 1.0);
        let w = Window::new(-1, 1).unwrap();
        let mut chain = Chain::zero_bc(region.clone(), pr, w, CounterRng::new(23, 0)).unwrap();
        let n = region.len();
        let mut samples: Vec<Vec<f64>> = vec![Vec::new(); n * 2];
        chain.run(20_000, |_| {}).unwrap();
        chain
            .run(150_000, |c| {
                for i in 0..n {
                    for (k, lvl) in [0i64, 1].into_iter().enumerate() {
                        samples[i * 2 + k]
                            .push(if c.heights()[i] >= lvl { 1.0 } else { 0.0 });
                    }
                }
            })
            .unwrap();
        let mut hits = 0;
        let mut total = 0;
        for i in 0..n {
            for (k, lvl) in [0i64, 1].into_iter().enumerate() {
                let exact =
                    exact_probability(&region, &BoundaryCondition::Zero, &pr, w, |h| {
                        h[i] >= lvl
                    })
                    .unwrap();
                let (mean, se) = batch_means(&samples[i * 2 + k], N_BATCHES);
                total += 1;
                if (mean - exact).abs() <= 3.0 * se {
                    hits += 1;
                }
            }
        }
        assert!(
            hits as f64 >= 0.95 * total as f64,
            "only {hits}/{total} (site, level) pairs within 3 standard errors"
        );
    }
}
