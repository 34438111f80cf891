//! Derived observables: the entropic-repulsion height from tail marginals,
//! circuit detection in annuli, surface-tension (step free energy)
//! estimation with 1/L extrapolation, staircase product-inequality checks,
//! large-deviation rate estimates and growth-law fits.

use std::collections::{HashMap, HashSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{
    staircase_ratio, transfer_matrix, ConstraintSet, StaircaseRatio, Window,
};
use crate::lattice::{Region, Site};
use crate::model::{BoundaryCondition, Exponent, HeightField, Params};
use crate::rng::CounterRng;
use crate::sampler::{
    batch_means, estimate_positivity, Chain, EstimateRecord, SplittingSchedule, N_BATCHES,
};

/// One point of the tail-marginal curve h -> P(phi(0) >= h).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailPoint {
    pub h: i64,
    pub p: f64,
    pub se: f64,
}

/// The entropic-repulsion height H = max{h >= 1 : P(phi(0) >= h) >= 5*beta/L}
/// (H = 0 when no positive level qualifies), together with the measured
/// curve. The infinite-volume marginal is approximated in the box of
/// half-side 2L with zero boundary conditions.
#[derive(Debug, Clone, Serialize)]
pub struct RepulsionEstimate {
    pub l: i64,
    pub threshold: f64,
    pub h: i64,
    pub curve: Vec<TailPoint>,
    /// every threshold decision up to H+1 is 3-sigma stable
    pub stable: bool,
    /// threshold 5*beta/L exceeds 1, so no level can qualify
    pub degenerate_threshold: bool,
    pub method: String,
    pub proxy: String,
}

#[derive(Debug, Clone, Copy)]
pub enum HMethod {
    /// Exact tail marginals by the transfer method (small L only).
    Exact,
    /// Tail marginals from a heat-bath chain, averaging the indicator over
    /// the central sub-box of half-side L/2 for statistics.
    Mcmc { sweeps: u64, seed: u64 },
}

pub fn compute_h(l: i64, params: Params, method: HMethod, window: Window) -> Result<RepulsionEstimate> {
    if l < 1 {
        return Err(Error::validation("repulsion height needs L >= 1"));
    }
    let threshold = 5.0 * params.beta / l as f64;
    let proxy_l = 2 * l;
    let hmax = window.hi;
    let (curve, method_name) = match method {
        HMethod::Exact => {
            let log_z = transfer_matrix(
                proxy_l,
                proxy_l,
                &BoundaryCondition::Zero,
                &params,
                window,
                &ConstraintSet::default(),
            )?
            .log_z;
            let mut curve = Vec::new();
            for h in 1..=hmax {
                let constrained = ConstraintSet {
                    bounds: vec![(Site::new(0, 0), h, window.hi)],
                    ..Default::default()
                };
                let log_zc = transfer_matrix(
                    proxy_l,
                    proxy_l,
                    &BoundaryCondition::Zero,
                    &params,
                    window,
                    &constrained,
                )?
                .log_z;
                curve.push(TailPoint { h, p: (log_zc - log_z).exp(), se: 0.0 });
            }
            (curve, "exact-transfer")
        }
        HMethod::Mcmc { sweeps, seed } => {
            let region = Region::square(proxy_l)?;
            let mut chain =
                Chain::zero_bc(region.clone(), params, window, CounterRng::new(seed, 0))?;
            let half = l / 2;
            let central: Vec<usize> = region
                .sites()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.x.abs().max(s.y.abs()) <= half.max(1))
                .map(|(i, _)| i)
                .collect();
            let burn = (sweeps as f64 * crate::sampler::BURN_IN_FRACTION) as u64;
            chain.run(burn, |_| {})?;
            let mut samples: Vec<Vec<f64>> = vec![Vec::new(); hmax as usize];
            chain.run(sweeps - burn, |c| {
                for h in 1..=hmax {
                    let frac = central
                        .iter()
                        .filter(|&&i| c.heights()[i] >= h)
                        .count() as f64
                        / central.len() as f64;
                    samples[(h - 1) as usize].push(frac);
                }
            })?;
            let curve = (1..=hmax)
                .map(|h| {
                    let (p, se) = batch_means(&samples[(h - 1) as usize], N_BATCHES);
                    TailPoint { h, p, se }
                })
                .collect();
            (curve, "mcmc-heat-bath")
        }
    };
    let degenerate = threshold > 1.0;
    let h = curve.iter().filter(|pt| pt.p >= threshold).map(|pt| pt.h).max().unwrap_or(0);
    let stable = curve
        .iter()
        .filter(|pt| pt.h <= h + 1)
        .all(|pt| (pt.p - threshold).abs() >= 3.0 * pt.se);
    Ok(RepulsionEstimate {
        l,
        threshold,
        h,
        curve,
        stable,
        degenerate_threshold: degenerate,
        method: method_name.into(),
        proxy: format!(
            "infinite-volume marginal approximated in the square of half-side {proxy_l} \
             with zero boundary conditions; tail averaged over the central sub-box"
        ),
    })
}

// ---------------------------------------------------------------------------
// circuits
// ---------------------------------------------------------------------------

/// Outcome of the circuit search in the annulus.
#[derive(Debug, Clone, Serialize)]
pub struct CircuitReport {
    pub delta: f64,
    pub k: i64,
    pub h_ref: i64,
    pub found: bool,
    /// a closed 4-walk (consecutive sites adjacent, last adjacent to first)
    pub circuit: Vec<Site>,
}

/// Searches for a lattice circuit inside the annulus Λ_L \ Λ_{(1-δ)L} whose
/// sites all have height >= h_ref - k and which surrounds the inner square.
/// Returns the innermost such cycle found, verified by an explicit
/// separation re-check.
pub fn detect_circuit(field: &HeightField, delta: f64, k: i64, h_ref: i64) -> Result<CircuitReport> {
    let (l, m) = field
        .region
        .half_sides()
        .ok_or_else(|| Error::validation("circuit detection requires a square region"))?;
    if l != m {
        return Err(Error::validation("circuit detection requires a square region"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::validation("delta must be in [0, 1)"));
    }
    let inner = ((1.0 - delta) * l as f64).floor() as i64;
    let bound = h_ref - k;
    let in_annulus = |s: Site| {
        let r = s.x.abs().max(s.y.abs());
        r > inner && r <= l
    };
    let high = |s: Site| field.value(s) >= bound;

    // winding potential of an edge relative to the cut {(x,0)-(x,-1), x>=1}
    let winding = |from: Site, to: Site| -> i64 {
        if from.x == to.x && from.x >= 1 {
            if from.y == 0 && to.y == -1 {
                1
            } else if from.y == -1 && to.y == 0 {
                -1
            } else {
                0
            }
        } else {
            0
        }
    };

    let mut report =
        CircuitReport { delta, k, h_ref, found: false, circuit: Vec::new() };

    let mut visited: HashSet<Site> = HashSet::new();
    let mut components: Vec<Vec<Site>> = Vec::new();
    for &s in field.region.sites() {
        if !in_annulus(s) || !high(s) || visited.contains(&s) {
            continue;
        }
        let mut comp = vec![s];
        visited.insert(s);
        let mut queue = VecDeque::from([s]);
        while let Some(t) = queue.pop_front() {
            for nb in t.neighbors() {
                if field.region.contains(nb)
                    && in_annulus(nb)
                    && high(nb)
                    && !visited.contains(&nb)
                {
                    visited.insert(nb);
                    comp.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        components.push(comp);
    }
    // innermost components first
    components.sort_by_key(|c| c.iter().map(|s| s.x.abs().max(s.y.abs())).max().unwrap());

    for comp in components {
        let comp_set: HashSet<Site> = comp.iter().copied().collect();
        let root = comp[0];
        let mut parent: HashMap<Site, Site> = HashMap::new();
        let mut pot: HashMap<Site, i64> = HashMap::new();
        let mut order = vec![root];
        pot.insert(root, 0);
        parent.insert(root, root);
        let mut queue = VecDeque::from([root]);
        let mut cycle: Option<Vec<Site>> = None;
        while let Some(t) = queue.pop_front() {
            for nb in t.neighbors() {
                if !comp_set.contains(&nb) {
                    continue;
                }
                if let Some(&pnb) = pot.get(&nb) {
                    if parent[&t] != nb {
                        // non-tree edge: a fundamental cycle
                        let w = pot[&t] + winding(t, nb) - pnb;
                        if w != 0 && cycle.is_none() {
                            cycle = Some(tree_cycle(&parent, t, nb));
                        }
                    }
                } else {
                    pot.insert(nb, pot[&t] + winding(t, nb));
                    parent.insert(nb, t);
                    order.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        if let Some(c) = cycle {
            if verify_circuit(field, &c, inner, l, bound) {
                report.found = true;
                report.circuit = c;
                return Ok(report);
            }
        }
    }
    Ok(report)
}

/// The cycle closed by the non-tree edge (u, v): the two tree paths up to
/// their lowest common ancestor.
fn tree_cycle(parent: &HashMap<Site, Site>, u: Site, v: Site) -> Vec<Site> {
    let mut anc_u = vec![u];
    let mut cur = u;
    while parent[&cur] != cur {
        cur = parent[&cur];
        anc_u.push(cur);
    }
    let index: HashMap<Site, usize> = anc_u.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut path_v = vec![v];
    let mut cur = v;
    while !index.contains_key(&cur) {
        cur = parent[&cur];
        path_v.push(cur);
    }
    let lca = *path_v.last().unwrap();
    let mut cycle: Vec<Site> = anc_u[..=index[&lca]].to_vec();
    path_v.pop();
    path_v.reverse();
    cycle.extend(path_v);
    cycle
}

/// Re-checks the three defining properties: heights, connectivity of the
/// walk, and that removing the cycle separates the inner square from the
/// outside even for diagonal moves.
fn verify_circuit(field: &HeightField, cycle: &[Site], inner: i64, l: i64, bound: i64) -> bool {
    if cycle.len() < 4 {
        return false;
    }
    for w in cycle.windows(2) {
        if (w[0].x - w[1].x).abs() + (w[0].y - w[1].y).abs() != 1 {
            return false;
        }
    }
    let first = cycle[0];
    let last = cycle[cycle.len() - 1];
    if (first.x - last.x).abs() + (first.y - last.y).abs() != 1 {
        return false;
    }
    if !cycle.iter().all(|&s| field.value(s) >= bound) {
        return false;
    }
    let on_cycle: HashSet<Site> = cycle.iter().copied().collect();
    if on_cycle.iter().any(|s| s.x.abs().max(s.y.abs()) <= inner) {
        return false;
    }
    // 8-connected escape attempt from the inner square
    let mut visited: HashSet<Site> = HashSet::new();
    let mut queue: VecDeque<Site> = VecDeque::new();
    for x in -inner..=inner {
        for y in -inner..=inner {
            let s = Site::new(x, y);
            visited.insert(s);
            queue.push_back(s);
        }
    }
    while let Some(t) = queue.pop_front() {
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nb = Site::new(t.x + dx, t.y + dy);
                let r = nb.x.abs().max(nb.y.abs());
                if r > l + 1 || visited.contains(&nb) || on_cycle.contains(&nb) {
                    continue;
                }
                if r == l + 1 {
                    return false; // escaped
                }
                visited.insert(nb);
                queue.push_back(nb);
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// surface tension
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TauPoint {
    pub l: i64,
    pub tau_l: f64,
    pub converged: bool,
    pub ratio: StaircaseRatio,
}

/// Surface tension at tilt theta: finite-L values
/// -cos(theta)/(2 beta L) log Z(a;b;L) and the c0 + c1/L extrapolation.
#[derive(Debug, Clone, Serialize)]
pub struct SurfaceTensionEstimate {
    pub theta: f64,
    pub tau: f64,
    pub tau_se: f64,
    pub per_l: Vec<TauPoint>,
    pub all_converged: bool,
}

pub fn estimate_tau(
    theta: f64,
    params: Params,
    l_list: &[i64],
    window: Window,
    tol: f64,
) -> Result<SurfaceTensionEstimate> {
    if l_list.len() < 2 {
        return Err(Error::validation("tension extrapolation needs at least two L values"));
    }
    if !(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::validation("theta must lie in (-pi/2, pi/2)"));
    }
    let lambda = theta.tan();
    let per_l: Vec<TauPoint> = l_list
        .par_iter()
        .map(|&l| -> Result<TauPoint> {
            let half_gap = (lambda * l as f64).round() as i64;
            let (a, b) = (-half_gap, half_gap);
            let m_lo = a.abs().max(b.abs()).max(2);
            let mut ratio = None;
            for m_hi in [m_lo + 2, m_lo + 3, m_lo + 4] {
                let m_list: Vec<i64> = (m_lo..=m_hi).collect();
                let r = staircase_ratio(&[a], &[b], l, &m_list, &params, window, tol)?;
                let done = r.converged;
                ratio = Some(r);
                if done {
                    break;
                }
            }
            let ratio = ratio.unwrap();
            let tau_l = -theta.cos() / (2.0 * params.beta * l as f64) * ratio.limit;
            Ok(TauPoint { l, tau_l, converged: ratio.converged, ratio })
        })
        .collect::<Result<Vec<_>>>()?;

    // least squares for tau_L = c0 + c1 / L
    let n = per_l.len() as f64;
    let xs: Vec<f64> = per_l.iter().map(|p| 1.0 / p.l as f64).collect();
    let ys: Vec<f64> = per_l.iter().map(|p| p.tau_l).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let c1 = (n * sxy - sx * sy) / det;
    let c0 = (sy - c1 * sx) / n;
    let dof = (per_l.len() as i64 - 2).max(1) as f64;
    let ss_res: f64 =
        xs.iter().zip(&ys).map(|(x, y)| (y - c0 - c1 * x).powi(2)).sum::<f64>();
    let se_c0 = (ss_res / dof * (sxx / det)).sqrt();
    Ok(SurfaceTensionEstimate {
        theta,
        tau: c0,
        tau_se: se_c0,
        all_converged: per_l.iter().all(|p| p.converged),
        per_l,
    })
}

// ---------------------------------------------------------------------------
// staircase monotonicity
// ---------------------------------------------------------------------------

/// Margins of the staircase product inequalities for one (a, b) pair:
/// both margins are log(lhs) - log(rhs) and should be <= 0 up to numerics.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityCase {
    pub a: Vec<i64>,
    pub b: Vec<i64>,
    pub m_used: i64,
    pub log_z: f64,
    pub product_log_z: f64,
    pub product_margin: f64,
    pub shift_log_z: f64,
    pub shift_margin: f64,
    pub converged: bool,
}

/// Evaluates, at the largest converged M, the product inequality
/// Z(a_1..a_n; b_1..b_n) <= prod_i Z(a_i; b_i) and the top-step shift
/// inequality Z(a; b) <= Z(a_1..a_n+1; b_1..b_n+1).
pub fn check_monotonicity(
    staircases: &[(Vec<i64>, Vec<i64>)],
    l: i64,
    m_list: &[i64],
    params: Params,
    window: Window,
    tol: f64,
) -> Result<Vec<MonotonicityCase>> {
    use crate::exact::staircase_ratio_cached;
    let mut denominators: HashMap<i64, f64> = HashMap::new();
    let mut single_cache: HashMap<(i64, i64), StaircaseRatio> = HashMap::new();
    let mut out = Vec::with_capacity(staircases.len());
    for (a, b) in staircases {
        let n = a.len();
        if n == 0 {
            return Err(Error::validation("monotonicity check needs at least one step"));
        }
        let full = staircase_ratio_cached(a, b, l, m_list, &params, window, tol, &mut denominators)?;
        let mut product = 0.0;
        let mut conv = full.converged;
        for i in 0..n {
            let r = match single_cache.get(&(a[i], b[i])) {
                Some(r) => r.clone(),
                None => {
                    let r = staircase_ratio_cached(
                        &[a[i]],
                        &[b[i]],
                        l,
                        m_list,
                        &params,
                        window,
                        tol,
                        &mut denominators,
                    )?;
                    single_cache.insert((a[i], b[i]), r.clone());
                    r
                }
            };
            conv &= r.converged;
            product += r.limit;
        }
        let mut a_shift = a.clone();
        let mut b_shift = b.clone();
        a_shift[n - 1] += 1;
        b_shift[n - 1] += 1;
        let shifted =
            staircase_ratio_cached(&a_shift, &b_shift, l, m_list, &params, window, tol, &mut denominators)?;
        conv &= shifted.converged;
        out.push(MonotonicityCase {
            a: a.clone(),
            b: b.clone(),
            m_used: *m_list.last().unwrap(),
            log_z: full.limit,
            product_log_z: product,
            product_margin: full.limit - product,
            shift_log_z: shifted.limit,
            shift_margin: full.limit - shifted.limit,
            converged: conv,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// rate estimates
// ---------------------------------------------------------------------------

/// The large-deviation rate -log P(phi >= 0) / (8 L H), undefined when the
/// repulsion height vanishes.
#[derive(Debug, Clone, Serialize)]
pub struct RateEstimate {
    pub l: i64,
    pub log_p: f64,
    pub log_p_se: f64,
    pub h: i64,
    pub rate: Option<f64>,
    pub rate_se: Option<f64>,
    pub splitting: EstimateRecord,
}

pub struct RateConfig {
    pub window: Window,
    pub schedule: SplittingSchedule,
    pub budget: u64,
    pub seed: u64,
    pub h_sweeps: u64,
}

pub fn estimate_rate(
    l_list: &[i64],
    params: Params,
    config: &RateConfig,
) -> Result<Vec<RateEstimate>> {
    l_list
        .par_iter()
        .map(|&l| -> Result<RateEstimate> {
            let region = Region::square(l)?;
            let rec = estimate_positivity(
                &region,
                params,
                config.window,
                &config.schedule,
                config.budget,
                config.seed.wrapping_add(l as u64),
            )?;
            let rep = compute_h(
                l,
                params,
                HMethod::Mcmc { sweeps: config.h_sweeps, seed: config.seed ^ 0x5eed },
                config.window,
            )?;
            let denom = 8.0 * l as f64 * rep.h as f64;
            let (rate, rate_se) = if rep.h >= 1 {
                (Some(-rec.value / denom), Some(rec.std_error / denom))
            } else {
                (None, None)
            };
            Ok(RateEstimate {
                l,
                log_p: rec.value,
                log_p_se: rec.std_error,
                h: rep.h,
                rate,
                rate_se,
                splitting: rec,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// growth-law fits
// ---------------------------------------------------------------------------

/// One-parameter least-squares fit of the repulsion height against the
/// growth law for the given exponent.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Fit {
    pub c: f64,
    /// residuals on the H scale, one per input point
    pub residuals: Vec<f64>,
    pub rms: f64,
}

/// Fits H(L) to the asymptotic form for the exponent p:
/// p = 1: c log L; 1 < p < 2: (c log L)^(1/p); p = 2:
/// sqrt(c log L loglog L); p > 2 and p = inf: sqrt(c log L).
pub fn fit_table1(h_curve: &[(f64, f64)], p: Exponent) -> Result<Table1Fit> {
    if h_curve.len() < 4 {
        return Err(Error::validation("growth-law fit needs at least 4 points"));
    }
    let h0 = h_curve[0].1;
    if h_curve.iter().all(|&(_, h)| h == h0) {
        return Err(Error::validation("growth-law fit needs varying H values"));
    }
    if h_curve.iter().any(|&(l, h)| l <= std::f64::consts::E || h < 0.0) {
        return Err(Error::validation("growth-law fit needs L > e and H >= 0"));
    }
    // transform to y = c * x
    let (xs, ys): (Vec<f64>, Vec<f64>) = h_curve
        .iter()
        .map(|&(l, h)| match p {
            Exponent::Finite(pf) if pf < 2.0 => (l.ln(), h.powf(pf)),
            Exponent::Finite(pf) if pf == 2.0 => (l.ln() * l.ln().ln(), h * h),
            _ => (l.ln(), h * h),
        })
        .unzip();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let c = sxy / sxx;
    let predict = |l: f64| -> f64 {
        match p {
            Exponent::Finite(pf) if pf < 2.0 => (c * l.ln()).max(0.0).powf(1.0 / pf),
            Exponent::Finite(pf) if pf == 2.0 => (c * l.ln() * l.ln().ln()).max(0.0).sqrt(),
            _ => (c * l.ln()).max(0.0).sqrt(),
        }
    };
    let residuals: Vec<f64> = h_curve.iter().map(|&(l, h)| h - predict(l)).collect();
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(Table1Fit { c, residuals, rms })
}
