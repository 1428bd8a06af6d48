//! Good/bad ball stopping-time trees, tree alternation, the key packing
//! cover, and the refinement iteration.
//!
//! At scale r a ball is *good* when every stratum point inside it keeps high
//! Weiss density down to the probe radius gamma*rho*r (drop below E - eta'
//! nowhere), and *bad* otherwise. In a bad ball the high-density points
//! cluster near an affine (k-1)-plane (the dichotomy); the witness fit and a
//! violation flag record whether the input actually honored that.
//!
//! A good tree refines good balls by Vitali nets until the stop scale,
//! avoiding previously seen bad balls; its leaves are bad balls and its
//! shrunken stop/leaf balls are pairwise disjoint. A bad tree peels the
//! neighborhood of each witness plane, stopping with small balls on the
//! complement where the density has verifiably dropped. Alternating the two
//! constructions terminates with a cover whose stop balls carry either the
//! floor radius or an energy-drop certificate, and every covering, packing,
//! and drop property is re-verified from the recorded probes rather than
//! trusted from the construction.

use crate::error::{Error, Result};
use crate::field::{QField, ScalarField};
use crate::geom::{self, AffinePlane};
use crate::jones::{second_moment, DiscreteMeasure};
use crate::weiss;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;

/// Stopping-time construction parameters. `E` (the root density sup) is
/// resolved at run time when absent; every report echoes the full config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Scale ratio between tree levels, in (0, 1/10].
    pub rho: f64,
    /// Density-drop quantum; stop balls certify a drop of eta/2.
    pub eta: f64,
    /// Probe-radius factor for the good-ball condition (probe at gamma*rho*r).
    pub gamma: f64,
    /// Slack in the good-ball condition (W >= E - eta_prime).
    pub eta_prime: f64,
    /// Root density sup; computed from probes at 2*domain_radius when None.
    #[serde(default)]
    pub e_density: Option<f64>,
    /// Stop scale R in (0, 1].
    pub stop_scale: f64,
    /// Stratum dimension k >= 1 (witness planes have dimension k-1).
    pub k: usize,
    /// Symmetry gap of the stratum points (carried into reports).
    pub eps: f64,
    /// Packing budget for sum r_x^k over the final cover.
    pub c_packing_budget: f64,
    /// Quadrature slack added to every density comparison.
    #[serde(default)]
    pub probe_tol: f64,
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvariant(msg));
        if !(self.rho > 0.0 && self.rho <= 0.1) {
            return fail(format!("rho = {} must lie in (0, 1/10]", self.rho));
        }
        if !(self.eta > 0.0) {
            return fail("eta must be positive".into());
        }
        if !(self.eta < self.rho / 2.0) {
            return fail(format!(
                "eta = {} must be < rho/2 = {}",
                self.eta,
                self.rho / 2.0
            ));
        }
        if !(self.gamma > 0.0) {
            return fail("gamma must be positive".into());
        }
        if !(self.eta_prime > 0.0) {
            return fail("eta_prime must be positive".into());
        }
        if !(self.stop_scale > 0.0 && self.stop_scale <= 1.0) {
            return fail(format!("stop_scale = {} must lie in (0, 1]", self.stop_scale));
        }
        if self.k == 0 {
            return fail("k must be >= 1 (witness planes have dimension k-1)".into());
        }
        if !(self.eps > 0.0) {
            return fail("eps must be positive".into());
        }
        if !(self.c_packing_budget > 0.0) {
            return fail("c_packing_budget must be positive".into());
        }
        if self.probe_tol < 0.0 {
            return fail("probe_tol must be nonnegative".into());
        }
        Ok(())
    }
}

/// Source of Weiss density values W(point, radius).
pub trait WeissOracle {
    fn weiss_at(&self, point: &[f64], radius: f64) -> Result<f64>;
}

/// Grid-backed oracle: radii snap to the nearest grid multiple, and probes
/// below the 4h resolution floor abort instead of silently passing.
pub struct GridOracle<'a> {
    pub u: &'a ScalarField,
    pub q: &'a QField,
}

impl WeissOracle for GridOracle<'_> {
    fn weiss_at(&self, point: &[f64], radius: f64) -> Result<f64> {
        let h = self.u.spec.h;
        let floor = weiss::MIN_RADIUS_SPACINGS * h;
        if radius < floor * (1.0 - 1e-9) {
            return Err(Error::Unresolvable {
                point: point.to_vec(),
                requested: radius,
                floor,
            });
        }
        let snapped = (radius / h).round() * h;
        weiss::weiss_density(self.u, self.q, point, snapped.max(floor))
    }
}

/// Synthetic oracle from a closure (tests and designed stratum sets).
pub struct FnOracle<F: Fn(&[f64], f64) -> f64>(pub F);

impl<F: Fn(&[f64], f64) -> f64> WeissOracle for FnOracle<F> {
    fn weiss_at(&self, point: &[f64], radius: f64) -> Result<f64> {
        Ok((self.0)(point, radius))
    }
}

/// Lazy per-(point, radius) probe cache over a fixed stratum point list.
pub struct ProbeCache<'a> {
    oracle: &'a dyn WeissOracle,
    pub points: &'a [Vec<f64>],
    cache: RefCell<HashMap<(usize, u64), f64>>,
}

impl<'a> ProbeCache<'a> {
    pub fn new(oracle: &'a dyn WeissOracle, points: &'a [Vec<f64>]) -> Self {
        ProbeCache { oracle, points, cache: RefCell::new(HashMap::new()) }
    }

    pub fn probe(&self, idx: usize, radius: f64) -> Result<f64> {
        let key = (idx, radius.to_bits());
        if let Some(&v) = self.cache.borrow().get(&key) {
            return Ok(v);
        }
        let v = self.oracle.weiss_at(&self.points[idx], radius)?;
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }

    pub fn probes_issued(&self) -> usize {
        self.cache.borrow().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallKind {
    Good,
    Bad,
    Stop,
}

/// Min/max of the probed densities in one ball at one probe radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub radius: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
    pub kind: BallKind,
    pub scale_index: usize,
    /// Least-squares (k-1)-plane through the high-density set; Bad balls only.
    pub witness_plane: Option<AffinePlane>,
    pub density_record: Vec<ProbeSummary>,
    /// Set when a high-density point escaped B_{rho r}(witness_plane); cannot
    /// occur for true minimizers with admissible parameters, so this flags
    /// either a synthetic violation or an under-resolved run.
    pub dichotomy_violated: bool,
    /// Stop balls born on the complement of a witness-plane neighborhood
    /// carry a guaranteed density drop.
    pub drop_certified: bool,
}

impl Ball {
    fn stop(center: Vec<f64>, radius: f64, scale_index: usize, certified: bool) -> Self {
        Ball {
            center,
            radius,
            kind: BallKind::Stop,
            scale_index,
            witness_plane: None,
            density_record: Vec::new(),
            dichotomy_violated: false,
            drop_certified: certified,
        }
    }
}

/// One stopping-time tree: per-scale good/bad/stop lists plus the flattened
/// leaves (bad balls of a good tree, good balls of a bad tree) and stops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverTree {
    pub root: Ball,
    pub good: Vec<Vec<Ball>>,
    pub bad: Vec<Vec<Ball>>,
    pub stop: Vec<Vec<Ball>>,
    pub leaves: Vec<Ball>,
    pub stops: Vec<Ball>,
}

/// Greedy lexicographic maximal net: accept a candidate iff it keeps distance
/// >= spacing from all accepted points. Every rejected candidate then lies
/// within spacing of an accepted one.
pub fn maximal_net(candidates: &[Vec<f64>], spacing: f64) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| geom::lex_cmp(&candidates[a], &candidates[b]));
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    let sp_sq = spacing * spacing;
    for i in order {
        if accepted.iter().all(|a| geom::dist_sq(a, &candidates[i]) >= sp_sq) {
            accepted.push(candidates[i].clone());
        }
    }
    accepted
}

fn maximal_net_indices(points: &[Vec<f64>], candidates: &[usize], spacing: f64) -> Vec<usize> {
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| geom::lex_cmp(&points[a], &points[b]));
    let mut accepted: Vec<usize> = Vec::new();
    let sp_sq = spacing * spacing;
    for i in order {
        if accepted.iter().all(|&a| geom::dist_sq(&points[a], &points[i]) >= sp_sq) {
            accepted.push(i);
        }
    }
    accepted
}

/// Shared construction state: probe cache, config, resolved E, and the
/// ambient domain ball every candidate set is intersected with.
pub struct TreeContext<'a> {
    pub cache: &'a ProbeCache<'a>,
    pub cfg: &'a TreeConfig,
    pub e_density: f64,
    pub domain_center: Vec<f64>,
    pub domain_radius: f64,
}

impl TreeContext<'_> {
    fn in_domain(&self, idx: usize) -> bool {
        geom::dist_sq(&self.cache.points[idx], &self.domain_center)
            < self.domain_radius * self.domain_radius
    }
}

pub struct ClassifyOutcome {
    pub kind: BallKind,
    pub witness: Option<AffinePlane>,
    pub violated: bool,
    pub record: Vec<ProbeSummary>,
}

fn summarize(cache: &ProbeCache, idx: &[usize], radius: f64) -> Result<ProbeSummary> {
    let mut w_min = f64::INFINITY;
    let mut w_max = f64::NEG_INFINITY;
    for &i in idx {
        let w = cache.probe(i, radius)?;
        w_min = w_min.min(w);
        w_max = w_max.max(w);
    }
    Ok(ProbeSummary { radius, w_min, w_max, count: idx.len() })
}

/// Good iff every stratum point in the ball keeps W at the gamma*rho*r probe
/// above E - eta_prime (within probe_tol); otherwise Bad with a total
/// least-squares (k-1)-plane fit to the high-density set at the 2*eta*r probe.
pub fn classify_ball(
    ctx: &TreeContext,
    in_ball: &[usize],
    center: &[f64],
    r: f64,
) -> Result<ClassifyOutcome> {
    let cfg = ctx.cfg;
    let probe_good = cfg.gamma * cfg.rho * r;
    let good_summary = summarize(ctx.cache, in_ball, probe_good)?;
    let mut record = vec![good_summary.clone()];
    if in_ball.is_empty() || good_summary.w_min >= ctx.e_density - cfg.eta_prime - cfg.probe_tol {
        return Ok(ClassifyOutcome { kind: BallKind::Good, witness: None, violated: false, record });
    }

    // bad: fit the high-density set at the 2*eta*r probe
    let probe_high = 2.0 * cfg.eta * r;
    record.push(summarize(ctx.cache, in_ball, probe_high)?);
    let mut high: Vec<usize> = Vec::new();
    for &i in in_ball {
        if ctx.cache.probe(i, probe_high)? >= ctx.e_density - cfg.eta / 2.0 - cfg.probe_tol {
            high.push(i);
        }
    }
    let witness = if high.is_empty() {
        AffinePlane::point(center.to_vec())
    } else {
        let pts: Vec<Vec<f64>> = high.iter().map(|&i| ctx.cache.points[i].clone()).collect();
        let mu = DiscreteMeasure::counting(pts)?;
        let (centroid, m) = second_moment(&mu, center, 2.0 * r)?;
        let (_, vecs) = geom::jacobi_eigen(&m);
        AffinePlane { base: centroid, basis: vecs.into_iter().take(cfg.k - 1).collect() }
    };
    let violated = high
        .iter()
        .any(|&i| witness.dist(&ctx.cache.points[i]) > cfg.rho * r + 1e-12);
    Ok(ClassifyOutcome { kind: BallKind::Bad, witness: Some(witness), violated, record })
}

fn classify_to_ball(
    ctx: &TreeContext,
    all_idx: &[usize],
    center: &[f64],
    r: f64,
    scale_index: usize,
) -> Result<Ball> {
    let in_ball: Vec<usize> = all_idx
        .iter()
        .copied()
        .filter(|&i| geom::dist_sq(&ctx.cache.points[i], center) < r * r)
        .collect();
    let outcome = classify_ball(ctx, &in_ball, center, r)?;
    Ok(Ball {
        center: center.to_vec(),
        radius: r,
        kind: outcome.kind,
        scale_index,
        witness_plane: outcome.witness,
        density_record: outcome.record,
        dichotomy_violated: outcome.violated,
        drop_certified: false,
    })
}

/// Good tree rooted at a Good ball: at each scale j the candidates are the
/// stratum points inside the previous good balls minus all earlier bad balls,
/// thinned by a maximal 2 r_j / 5 net; when r_j falls to the stop scale the
/// net becomes the stop collection.
pub fn build_good_tree(ctx: &TreeContext, all_idx: &[usize], root: &Ball) -> Result<CoverTree> {
    if root.kind != BallKind::Good {
        return Err(Error::WrongRootKind { expected: "Good" });
    }
    let cfg = ctx.cfg;
    if root.radius <= cfg.stop_scale {
        return Err(Error::InvalidParameter(format!(
            "good tree root radius {} must exceed the stop scale {}",
            root.radius, cfg.stop_scale
        )));
    }
    let pts = ctx.cache.points;
    let root_sq = root.radius * root.radius;
    let base: Vec<usize> = all_idx
        .iter()
        .copied()
        .filter(|&i| ctx.in_domain(i) && geom::dist_sq(&pts[i], &root.center) < root_sq)
        .collect();

    let mut good: Vec<Vec<Ball>> = vec![vec![root.clone()]];
    let mut bad: Vec<Vec<Ball>> = vec![Vec::new()];
    let mut stop: Vec<Vec<Ball>> = vec![Vec::new()];
    let mut prior_bad: Vec<(Vec<f64>, f64)> = Vec::new();

    let mut j = 0usize;
    loop {
        j += 1;
        let r_j = root.radius * cfg.rho.powi(j as i32);
        let r_prev = root.radius * cfg.rho.powi(j as i32 - 1);
        let prev_good: Vec<(Vec<f64>, f64)> = good[j - 1]
            .iter()
            .map(|b| (b.center.clone(), r_prev))
            .collect();
        let candidates: Vec<usize> = base
            .iter()
            .copied()
            .filter(|&i| {
                prev_good
                    .iter()
                    .any(|(c, rr)| geom::dist_sq(&pts[i], c) < rr * rr)
                    && prior_bad
                        .iter()
                        .all(|(c, rr)| geom::dist_sq(&pts[i], c) >= rr * rr)
            })
            .collect();
        let net = maximal_net_indices(pts, &candidates, 2.0 * r_j / 5.0);

        if r_j <= cfg.stop_scale {
            let stops: Vec<Ball> = net
                .iter()
                .map(|&i| Ball::stop(pts[i].clone(), r_j, j, false))
                .collect();
            good.push(Vec::new());
            bad.push(Vec::new());
            stop.push(stops);
            break;
        }

        let mut g_here = Vec::new();
        let mut b_here = Vec::new();
        for &i in &net {
            let ball = classify_to_ball(ctx, &base, &pts[i], r_j, j)?;
            match ball.kind {
                BallKind::Good => g_here.push(ball),
                BallKind::Bad => {
                    prior_bad.push((ball.center.clone(), ball.radius));
                    b_here.push(ball);
                }
                BallKind::Stop => unreachable!(),
            }
        }
        good.push(g_here);
        bad.push(b_here);
        stop.push(Vec::new());
        if good[j].is_empty() {
            // nothing left to refine; remaining stratum sits in bad balls
            break;
        }
    }

    let leaves: Vec<Ball> = bad.iter().flatten().cloned().collect();
    let stops: Vec<Ball> = stop.iter().flatten().cloned().collect();
    Ok(CoverTree { root: root.clone(), good, bad, stop, leaves, stops })
}

/// Bad tree rooted at a Bad ball: per scale, stop balls of radius
/// eta * r_{j-1} cover the stratum outside the 2 rho r_{j-1} neighborhood of
/// each witness plane (these certify the density drop), while good/bad balls
/// at radius r_j refine the neighborhood itself; only bad balls recurse.
pub fn build_bad_tree(ctx: &TreeContext, all_idx: &[usize], root: &Ball) -> Result<CoverTree> {
    if root.kind != BallKind::Bad || root.witness_plane.is_none() {
        return Err(Error::WrongRootKind { expected: "Bad (with witness plane)" });
    }
    let cfg = ctx.cfg;
    if root.radius <= cfg.stop_scale {
        return Err(Error::InvalidParameter(format!(
            "bad tree root radius {} must exceed the stop scale {}",
            root.radius, cfg.stop_scale
        )));
    }
    let pts = ctx.cache.points;
    let root_sq = root.radius * root.radius;
    let base: Vec<usize> = all_idx
        .iter()
        .copied()
        .filter(|&i| ctx.in_domain(i) && geom::dist_sq(&pts[i], &root.center) < root_sq)
        .collect();

    let mut good: Vec<Vec<Ball>> = vec![Vec::new()];
    let mut bad: Vec<Vec<Ball>> = vec![vec![root.clone()]];
    let mut stop: Vec<Vec<Ball>> = vec![Vec::new()];

    let mut j = 0usize;
    loop {
        j += 1;
        let r_j = root.radius * cfg.rho.powi(j as i32);
        let r_prev = root.radius * cfg.rho.powi(j as i32 - 1);
        let prev_bad = &bad[j - 1];
        if prev_bad.is_empty() {
            break;
        }
        let stop_radius = cfg.eta * r_prev;

        if r_j <= cfg.stop_scale {
            // floor: stop balls cover everything left in the bad balls
            let candidates: Vec<usize> = base
                .iter()
                .copied()
                .filter(|&i| {
                    prev_bad
                        .iter()
                        .any(|b| geom::dist_sq(&pts[i], &b.center) < r_prev * r_prev)
                })
                .collect();
            let net = maximal_net_indices(pts, &candidates, 2.0 * stop_radius / 5.0);
            let stops: Vec<Ball> = net
                .iter()
                .map(|&i| Ball::stop(pts[i].clone(), stop_radius, j, false))
                .collect();
            good.push(Vec::new());
            bad.push(Vec::new());
            stop.push(stops);
            break;
        }

        // complement stops: outside the witness-plane neighborhoods
        let mut stop_candidates: Vec<usize> = Vec::new();
        let mut refine_candidates: Vec<usize> = Vec::new();
        for &i in &base {
            let p = &pts[i];
            let mut in_stop = false;
            let mut in_refine = false;
            for b in prev_bad {
                if geom::dist_sq(p, &b.center) < r_prev * r_prev {
                    let wp = b.witness_plane.as_ref().expect("bad ball carries witness");
                    if wp.dist(p) < 2.0 * cfg.rho * r_prev {
                        in_refine = true;
                    } else {
                        in_stop = true;
                    }
                }
            }
            if in_stop {
                stop_candidates.push(i);
            }
            if in_refine {
                refine_candidates.push(i);
            }
        }
        let stop_net = maximal_net_indices(pts, &stop_candidates, 2.0 * stop_radius / 5.0);
        let stops: Vec<Ball> = stop_net
            .iter()
            .map(|&i| Ball::stop(pts[i].clone(), stop_radius, j, true))
            .collect();

        let net = maximal_net_indices(pts, &refine_candidates, 2.0 * r_j / 5.0);
        let mut g_here = Vec::new();
        let mut b_here = Vec::new();
        for &i in &net {
            let ball = classify_to_ball(ctx, &base, &pts[i], r_j, j)?;
            match ball.kind {
                BallKind::Good => g_here.push(ball),
                BallKind::Bad => b_here.push(ball),
                BallKind::Stop => unreachable!(),
            }
        }
        good.push(g_here);
        bad.push(b_here);
        stop.push(stops);
    }

    let leaves: Vec<Ball> = good.iter().flatten().cloned().collect();
    let stops: Vec<Ball> = stop.iter().flatten().cloned().collect();
    Ok(CoverTree { root: root.clone(), good, bad, stop, leaves, stops })
}

/// Structural invariants of a good tree: the r/5-shrunk stop and leaf balls
/// are pairwise disjoint, and every stop/leaf center keeps
/// W_{gamma r_scale} >= E - eta_prime (the centered-drop certificate).
pub fn verify_good_tree(ctx: &TreeContext, tree: &CoverTree) -> Result<Vec<String>> {
    let mut faults = Vec::new();
    let shrunk: Vec<(&Ball, f64)> = tree
        .leaves
        .iter()
        .chain(tree.stops.iter())
        .map(|b| (b, b.radius / 5.0))
        .collect();
    for i in 0..shrunk.len() {
        for j in (i + 1)..shrunk.len() {
            let d = geom::dist(&shrunk[i].0.center, &shrunk[j].0.center);
            if d < shrunk[i].1 + shrunk[j].1 - 1e-12 {
                faults.push(format!(
                    "shrunk balls {i} and {j} overlap (centers {:?} / {:?})",
                    shrunk[i].0.center, shrunk[j].0.center
                ));
            }
        }
    }
    let cfg = ctx.cfg;
    let point_index = |center: &[f64]| -> Option<usize> {
        (0..ctx.cache.points.len()).find(|&i| geom::dist(&ctx.cache.points[i], center) < 1e-12)
    };
    for b in tree.leaves.iter().chain(tree.stops.iter()) {
        let r_scale = tree.root.radius * cfg.rho.powi(b.scale_index as i32);
        let probe = cfg.gamma * r_scale;
        if let Some(i) = point_index(&b.center) {
            let w = ctx.cache.probe(i, probe)?;
            if w < ctx.e_density - cfg.eta_prime - cfg.probe_tol {
                faults.push(format!(
                    "centered drop failed at {:?}: W_{probe} = {w} < E - eta'",
                    b.center
                ));
            }
        }
    }
    Ok(faults)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub leaf_kind: String,
    pub leaf_count: usize,
    pub sum_r_k: f64,
    pub max_radius: f64,
    pub stops_so_far: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlternationLedger {
    pub generations: Vec<GenerationRecord>,
    pub measured_c1: f64,
    pub measured_c2: f64,
    /// 2 c1 c2 rho, which must stay <= 1/2 for geometric leaf decay.
    pub rho_condition_value: f64,
    pub rho_condition_ok: bool,
    /// max over generations of sum_r_k * 2^{i/2} (the decay envelope constant).
    pub decay_envelope: f64,
    pub good_tree_faults: Vec<String>,
}

/// Alternate good and bad trees from the domain ball until no leaves remain.
/// Returns the accumulated stop balls and the per-generation ledger.
pub fn alternate_trees(
    ctx: &TreeContext,
    all_idx: &[usize],
) -> Result<(Vec<Ball>, AlternationLedger)> {
    let cfg = ctx.cfg;
    cfg.validate()?;
    let k = cfg.k as i32;
    let idx: Vec<usize> = all_idx.iter().copied().filter(|&i| ctx.in_domain(i)).collect();
    let mut ledger = AlternationLedger {
        generations: Vec::new(),
        measured_c1: 0.0,
        measured_c2: 0.0,
        rho_condition_value: 0.0,
        rho_condition_ok: true,
        decay_envelope: 0.0,
        good_tree_faults: Vec::new(),
    };
    if idx.is_empty() {
        return Ok((Vec::new(), ledger));
    }

    let root = classify_to_ball(ctx, &idx, &ctx.domain_center.clone(), ctx.domain_radius, 0)?;
    let mut frontier = vec![root];
    let mut stops: Vec<Ball> = Vec::new();
    ledger.generations.push(GenerationRecord {
        generation: 0,
        leaf_kind: format!("{:?}", frontier[0].kind),
        leaf_count: 1,
        sum_r_k: ctx.domain_radius.powi(k),
        max_radius: ctx.domain_radius,
        stops_so_far: 0,
    });

    let guard = ((ctx.domain_radius / cfg.stop_scale).ln() / (1.0 / cfg.rho).ln()).ceil()
        as usize
        + 2;
    let mut gen = 0usize;
    while !frontier.is_empty() {
        gen += 1;
        if gen > guard + 1 {
            return Err(Error::AlternationStalled { generations: gen });
        }
        let kind = frontier[0].kind;
        debug_assert!(frontier.iter().all(|b| b.kind == kind), "mixed frontier");
        let mut next: Vec<Ball> = Vec::new();
        for leaf in &frontier {
            let tree = match kind {
                BallKind::Good => {
                    let t = build_good_tree(ctx, &idx, leaf)?;
                    ledger.good_tree_faults.extend(verify_good_tree(ctx, &t)?);
                    let leaf_sum: f64 = t.leaves.iter().map(|b| b.radius.powi(k)).sum();
                    ledger.measured_c1 =
                        ledger.measured_c1.max(leaf_sum / leaf.radius.powi(k));
                    t
                }
                BallKind::Bad => {
                    let t = build_bad_tree(ctx, &idx, leaf)?;
                    let leaf_sum: f64 = t.leaves.iter().map(|b| b.radius.powi(k)).sum();
                    ledger.measured_c2 = ledger
                        .measured_c2
                        .max(leaf_sum / (2.0 * cfg.rho * leaf.radius.powi(k)));
                    t
                }
                BallKind::Stop => unreachable!("stop balls never enter the frontier"),
            };
            stops.extend(tree.stops.iter().cloned());
            next.extend(tree.leaves.iter().cloned());
        }
        let sum_r_k: f64 = next.iter().map(|b| b.radius.powi(k)).sum();
        let max_radius = next.iter().map(|b| b.radius).fold(0.0f64, f64::max);
        ledger.generations.push(GenerationRecord {
            generation: gen,
            leaf_kind: next
                .first()
                .map(|b| format!("{:?}", b.kind))
                .unwrap_or_else(|| "None".into()),
            leaf_count: next.len(),
            sum_r_k,
            max_radius,
            stops_so_far: stops.len(),
        });
        ledger.decay_envelope = ledger
            .decay_envelope
            .max(sum_r_k * 2f64.powf(gen as f64 / 2.0));
        frontier = next;
    }

    ledger.rho_condition_value =
        2.0 * ledger.measured_c1 * ledger.measured_c2 * cfg.rho;
    ledger.rho_condition_ok = ledger.rho_condition_value <= 0.5;
    if ledger.measured_c1 > 0.0 && ledger.measured_c2 > 0.0 && !ledger.rho_condition_ok {
        return Err(Error::PackingCondition {
            c1: ledger.measured_c1,
            c2: ledger.measured_c2,
            rho: cfg.rho,
            value: ledger.rho_condition_value,
        });
    }
    Ok((stops, ledger))
}

/// One ball of the final cover, radius clamped to r_x = max(R, r_stop).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub stop_radius: f64,
    pub scale_index: usize,
    pub drop_certified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropCertificate {
    pub center: Vec<f64>,
    pub probe_radius: f64,
    pub w_max: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cover {
    pub balls: Vec<CoverBall>,
    pub config: TreeConfig,
    pub e_density: f64,
    pub domain_center: Vec<f64>,
    pub domain_radius: f64,
    pub stratum_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverReport {
    pub covering_ok: bool,
    pub uncovered_count: usize,
    pub packing_sum: f64,
    pub packing_ok: bool,
    pub drop_ok: bool,
    pub drop_certificates: Vec<DropCertificate>,
    pub ledger: AlternationLedger,
}

impl CoverReport {
    pub fn all_ok(&self) -> bool {
        self.covering_ok && self.packing_ok && self.drop_ok
    }
}

/// Covering check: every stratum point lies strictly inside some cover ball.
pub fn verify_covering(points: &[Vec<f64>], idx: &[usize], balls: &[CoverBall]) -> (bool, usize) {
    let mut uncovered = 0usize;
    for &i in idx {
        let covered = balls
            .iter()
            .any(|b| geom::dist_sq(&points[i], &b.center) < b.radius * b.radius + 1e-12);
        if !covered {
            uncovered += 1;
        }
    }
    (uncovered == 0, uncovered)
}

/// Packing check: sum of r_x^k against the configured budget.
pub fn verify_packing(balls: &[CoverBall], k: usize, budget: f64) -> (f64, bool) {
    let sum: f64 = balls.iter().map(|b| b.radius.powi(k as i32)).sum();
    (sum, sum <= budget)
}

/// Energy-drop check: every ball with radius above the stop scale must have
/// max stratum density W_{2 r_x} <= E - eta/2 (within probe_tol).
pub fn verify_drops(
    cache: &ProbeCache,
    idx: &[usize],
    balls: &[CoverBall],
    cfg: &TreeConfig,
    e_density: f64,
) -> Result<(bool, Vec<DropCertificate>)> {
    let mut ok = true;
    let mut certs = Vec::new();
    for b in balls {
        if b.radius <= cfg.stop_scale * (1.0 + 1e-12) {
            continue;
        }
        let probe = 2.0 * b.radius;
        let mut w_max = f64::NEG_INFINITY;
        for &i in idx {
            if geom::dist_sq(&cache.points[i], &b.center) < probe * probe {
                w_max = w_max.max(cache.probe(i, probe)?);
            }
        }
        let bound = e_density - cfg.eta / 2.0 + cfg.probe_tol;
        let this_ok = w_max <= bound || w_max == f64::NEG_INFINITY;
        ok &= this_ok;
        certs.push(DropCertificate {
            center: b.center.clone(),
            probe_radius: probe,
            w_max,
            bound,
            ok: this_ok,
        });
    }
    Ok((ok, certs))
}

/// Build the key packing cover: alternate trees over the domain ball, clamp
/// stop radii to r_x = max(R, r_s), then verify covering, packing, and the
/// energy-drop certificates from the recorded probes.
pub fn key_packing_cover(
    cache: &ProbeCache,
    all_idx: &[usize],
    domain_center: &[f64],
    domain_radius: f64,
    cfg: &TreeConfig,
) -> Result<(Cover, CoverReport)> {
    cfg.validate()?;
    let idx: Vec<usize> = all_idx
        .iter()
        .copied()
        .filter(|&i| {
            geom::dist_sq(&cache.points[i], domain_center) < domain_radius * domain_radius
        })
        .collect();
    let e_density = match cfg.e_density {
        Some(e) => e,
        None => {
            let mut e = 0.0f64;
            for &i in &idx {
                e = e.max(cache.probe(i, 2.0 * domain_radius)?);
            }
            e
        }
    };
    let mut cfg_run = cfg.clone();
    cfg_run.e_density = Some(e_density);
    let ctx = TreeContext {
        cache,
        cfg: &cfg_run,
        e_density,
        domain_center: domain_center.to_vec(),
        domain_radius,
    };
    let (stops, ledger) = alternate_trees(&ctx, &idx)?;
    let balls: Vec<CoverBall> = stops
        .iter()
        .map(|s| CoverBall {
            center: s.center.clone(),
            radius: s.radius.max(cfg.stop_scale),
            stop_radius: s.radius,
            scale_index: s.scale_index,
            drop_certified: s.drop_certified,
        })
        .collect();
    let cover = Cover {
        balls,
        config: cfg_run.clone(),
        e_density,
        domain_center: domain_center.to_vec(),
        domain_radius,
        stratum_size: idx.len(),
    };
    let (covering_ok, uncovered) = verify_covering(cache.points, &idx, &cover.balls);
    let (packing_sum, packing_ok) = verify_packing(&cover.balls, cfg.k, cfg.c_packing_budget);
    let (drop_ok, drop_certificates) =
        verify_drops(cache, &idx, &cover.balls, &cfg_run, e_density)?;
    let report = CoverReport {
        covering_ok,
        uncovered_count: uncovered,
        packing_sum,
        packing_ok,
        drop_ok,
        drop_certificates,
        ledger,
    };
    Ok((cover, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineGeneration {
    pub generation: usize,
    pub ball_count: usize,
    pub sum_r_k: f64,
    pub max_radius: f64,
    pub covering_ok: bool,
    /// Energy budget E - i*eta/2 that this generation's big balls must obey.
    pub energy_budget: f64,
    pub budget_ok: bool,
    /// max radius <= max(R, rho^i * domain_radius).
    pub radius_control_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReport {
    pub generations: Vec<RefineGeneration>,
    pub generation_bound: usize,
    pub e_density: f64,
    /// Consolidated cover at the stop scale: a maximal 2R/5 net of the
    /// stratum points, radius R each.
    pub final_centers: Vec<Vec<f64>>,
    pub final_count: usize,
    pub stop_scale: f64,
    pub packing_r_k: f64,
    /// #balls * omega_n * (2R)^n, the tube-volume style summary.
    pub tube_volume: f64,
    pub covering_ok: bool,
}

/// Refinement iteration: rebuild the key packing cover inside every ball
/// whose radius exceeds the stop scale, decrementing the energy budget by
/// eta/2 per generation, until all radii equal R or the generation bound
/// 2 + 2E/eta is exhausted.
pub fn refine_cover(
    cache: &ProbeCache,
    all_idx: &[usize],
    domain_center: &[f64],
    domain_radius: f64,
    cfg: &TreeConfig,
    stop_scale: f64,
    ambient_dim: usize,
) -> Result<RefineReport> {
    let mut cfg_run = cfg.clone();
    cfg_run.stop_scale = stop_scale;
    cfg_run.validate()?;
    let idx: Vec<usize> = all_idx
        .iter()
        .copied()
        .filter(|&i| {
            geom::dist_sq(&cache.points[i], domain_center) < domain_radius * domain_radius
        })
        .collect();

    let (cover, report) = key_packing_cover(cache, &idx, domain_center, domain_radius, &cfg_run)?;
    let e0 = cover.e_density;
    let bound = (2.0 + 2.0 * e0 / cfg_run.eta).ceil().max(2.0) as usize;
    let k = cfg_run.k as i32;

    let mut balls = cover.balls;
    let mut gens: Vec<RefineGeneration> = Vec::new();
    let mut gen = 1usize;
    let mut prev_sum = f64::INFINITY;
    loop {
        let sum_r_k: f64 = balls.iter().map(|b| b.radius.powi(k)).sum();
        let max_radius = balls.iter().map(|b| b.radius).fold(0.0f64, f64::max);
        let (cov_ok, _) = verify_covering(cache.points, &idx, &balls);
        let budget = e0 - gen as f64 * cfg_run.eta / 2.0;
        // big balls of this generation must certify densities under budget
        let mut budget_ok = true;
        for b in &balls {
            if b.radius > stop_scale * (1.0 + 1e-12) {
                let probe = 2.0 * b.radius;
                for &i in &idx {
                    if geom::dist_sq(&cache.points[i], &b.center) < probe * probe {
                        let w = cache.probe(i, probe)?;
                        if w > budget + cfg_run.probe_tol {
                            budget_ok = false;
                        }
                    }
                }
            }
        }
        let radius_cap = stop_scale.max(domain_radius * cfg_run.rho.powi(gen as i32));
        gens.push(RefineGeneration {
            generation: gen,
            ball_count: balls.len(),
            sum_r_k,
            max_radius,
            covering_ok: cov_ok,
            energy_budget: budget,
            budget_ok,
            radius_control_ok: max_radius <= radius_cap * (1.0 + 1e-9),
        });
        let _ = prev_sum;
        prev_sum = sum_r_k;

        let big: Vec<CoverBall> = balls
            .iter()
            .filter(|b| b.radius > stop_scale * (1.0 + 1e-12))
            .cloned()
            .collect();
        if big.is_empty() {
            break;
        }
        gen += 1;
        if gen > bound {
            return Err(Error::DropAccountingViolated { bound, remaining: big.len() });
        }
        let mut next: Vec<CoverBall> = balls
            .into_iter()
            .filter(|b| b.radius <= stop_scale * (1.0 + 1e-12))
            .collect();
        for b in big {
            let sub_idx: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| {
                    geom::dist_sq(&cache.points[i], &b.center) < b.radius * b.radius
                })
                .collect();
            if sub_idx.is_empty() {
                continue;
            }
            // the certified drop caps the sub-domain's density sup
            let mut e_sub = 0.0f64;
            for &i in &sub_idx {
                e_sub = e_sub.max(cache.probe(i, 2.0 * b.radius)?);
            }
            let mut sub_cfg = cfg_run.clone();
            sub_cfg.e_density = Some(e_sub);
            let (sub_cover, _) =
                key_packing_cover(cache, &sub_idx, &b.center, b.radius, &sub_cfg)?;
            next.extend(sub_cover.balls);
        }
        balls = next;
    }

    // consolidated R-scale cover: maximal 2R/5 net of the stratum points
    let stratum_pts: Vec<Vec<f64>> = idx.iter().map(|&i| cache.points[i].clone()).collect();
    let final_centers = maximal_net(&stratum_pts, 2.0 * stop_scale / 5.0);
    let final_balls: Vec<CoverBall> = final_centers
        .iter()
        .map(|c| CoverBall {
            center: c.clone(),
            radius: stop_scale,
            stop_radius: stop_scale,
            scale_index: 0,
            drop_certified: false,
        })
        .collect();
    let (final_cov_ok, _) = verify_covering(cache.points, &idx, &final_balls);
    let final_count = final_centers.len();
    let tube_volume = final_count as f64
        * geom::unit_ball_volume(ambient_dim)
        * (2.0 * stop_scale).powi(ambient_dim as i32);
    let _ = report;
    Ok(RefineReport {
        generations: gens,
        generation_bound: bound,
        e_density: e0,
        final_centers,
        final_count,
        stop_scale,
        packing_r_k: final_count as f64 * stop_scale.powi(k),
        tube_volume,
        covering_ok: final_cov_ok,
    })
}
