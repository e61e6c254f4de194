//! Connectivity of the vacant and covered sets of a sampled cloud.
//!
//! The cloud sampler produces, per site, the smallest intensity at which the
//! site is covered; thresholding at a level `u` gives a vacant bit grid.
//! This module analyses those grids: union-find cluster labelling under
//! nearest-neighbour or star adjacency, box-crossing events on a tripled
//! window, a finite-volume escape proxy for the critical intensity, and an
//! empirical two-point covariance.
//!
//! Monte Carlo estimators share one convention: a trial draws a single cloud
//! at the largest requested level and evaluates every level on it. Sublevel
//! clouds coincide with what sampling at the smaller level would have
//! produced (labels are thinned, never moved), so within a trial the events
//! are coupled and the estimated curves are monotone in `u` by construction,
//! not just in expectation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::lattice::{check_dim, linf_norm, BitMask, Coord, GridBox, Point};
use crate::rng::{derive, purpose};
use crate::sampler::{CloudConfig, CloudSampler, EscapeMode, LeveledOccupancy};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Neighbourhood relation used when joining sites into clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Adjacency {
    /// The 2d sites at sup-plus-taxicab distance one (edges of the lattice).
    Nearest,
    /// All 3^d - 1 sites at sup-distance one (diagonals included).
    Star,
}

impl Adjacency {
    /// Offsets to all neighbours of a site under this relation.
    pub fn offsets(self, dim: usize) -> Vec<Point> {
        match self {
            Adjacency::Nearest => {
                let mut out = Vec::with_capacity(2 * dim);
                for axis in 0..dim {
                    for sign in [1, -1] {
                        let mut o = vec![0; dim];
                        o[axis] = sign;
                        out.push(o);
                    }
                }
                out
            }
            Adjacency::Star => {
                let mut out = Vec::new();
                let mut cur = vec![-1i64; dim];
                loop {
                    if cur.iter().any(|&c| c != 0) {
                        out.push(cur.clone());
                    }
                    let mut axis = 0;
                    loop {
                        if axis == dim {
                            return out;
                        }
                        cur[axis] += 1;
                        if cur[axis] <= 1 {
                            break;
                        }
                        cur[axis] = -1;
                        axis += 1;
                    }
                }
            }
        }
    }
}

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    /// A forest of `n` singletons.
    pub fn new(n: usize) -> Result<Self> {
        if n >= u32::MAX as usize {
            return Err(Error::precondition(format!(
                "union-find over {n} elements exceeds the u32 index space"
            )));
        }
        Ok(Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        })
    }

    /// Representative of the set containing `x`.
    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Merge the sets of `a` and `b`; false if they already coincided.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }

    /// Whether `a` and `b` currently share a set.
    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }

    /// Size of the set containing `x`.
    pub fn set_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }
}

/// Marker for sites outside every cluster in [`ClusterLabels`].
pub const NO_CLUSTER: u32 = u32::MAX;

/// Dense cluster identifiers for the active sites of a bit grid.
#[derive(Debug, Clone)]
pub struct ClusterLabels {
    grid: GridBox,
    adjacency: Adjacency,
    ids: Vec<u32>,
    sizes: Vec<usize>,
}

impl ClusterLabels {
    /// The grid the labels refer to.
    pub fn grid(&self) -> &GridBox {
        &self.grid
    }

    /// Adjacency used to build the clusters.
    pub fn adjacency(&self) -> Adjacency {
        self.adjacency
    }

    /// Cluster id of the site with this grid index, if it was active.
    pub fn id(&self, index: usize) -> Option<u32> {
        let id = self.ids[index];
        (id != NO_CLUSTER).then_some(id)
    }

    /// Cluster id of a point, if it lies in the grid and was active.
    pub fn id_of_point(&self, p: &[Coord]) -> Option<u32> {
        self.grid.index(p).and_then(|i| self.id(i))
    }

    /// Raw id array indexed like the grid; inactive sites hold [`NO_CLUSTER`].
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Number of clusters.
    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    /// Site count of each cluster, indexed by cluster id. The sizes sum to
    /// the number of active sites.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Label the connected components of the active (true) sites of `mask`.
///
/// Ids are dense from zero, assigned in order of each cluster's first site
/// in grid-index order, so the labelling is a pure function of the mask.
pub fn label_clusters(mask: &BitMask, adjacency: Adjacency) -> Result<ClusterLabels> {
    let grid = mask.grid().clone();
    let n = grid.len();
    let mut uf = UnionFind::new(n)?;
    let offsets = adjacency.offsets(grid.dim());
    let mut scratch = vec![0i64; grid.dim()];
    for idx in 0..n {
        if !mask.get(idx) {
            continue;
        }
        let p = grid.point(idx);
        for o in &offsets {
            for (s, (a, b)) in scratch.iter_mut().zip(p.iter().zip(o)) {
                *s = a + b;
            }
            if let Some(j) = grid.index(&scratch) {
                // Only look backwards so every edge is examined once.
                if j < idx && mask.get(j) {
                    uf.union(idx as u32, j as u32);
                }
            }
        }
    }

    let mut ids = vec![NO_CLUSTER; n];
    let mut sizes = Vec::new();
    let mut root_to_id = vec![NO_CLUSTER; n];
    for (idx, slot) in ids.iter_mut().enumerate() {
        if !mask.get(idx) {
            continue;
        }
        let root = uf.find(idx as u32) as usize;
        if root_to_id[root] == NO_CLUSTER {
            root_to_id[root] = sizes.len() as u32;
            sizes.push(0);
        }
        let id = root_to_id[root];
        *slot = id;
        sizes[id as usize] += 1;
    }
    Ok(ClusterLabels {
        grid,
        adjacency,
        ids,
        sizes,
    })
}

/// Which of the two crossing events a geometry describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CrossingKind {
    /// Nearest-neighbour vacant path from the central box of a tripled cube
    /// to the inner shell of the cube.
    Vacant,
    /// Star-adjacent covered path inside a one-site-thick plate, from the
    /// central square to the plate's rim.
    OccupiedPlanar,
}

impl CrossingKind {
    /// Adjacency under which paths are traced for this event.
    pub fn adjacency(self) -> Adjacency {
        match self {
            CrossingKind::Vacant => Adjacency::Nearest,
            CrossingKind::OccupiedPlanar => Adjacency::Star,
        }
    }
}

/// A crossing arena: the window to sample, the source sites, and the target
/// sites a path must reach.
///
/// For side length `L`, the vacant arena is the cube `[-L, 2L)^d` with
/// source `[0, L)^d` and target the inner shell of the big cube. The planar
/// arena is the plate `[-L, 2L)^2 x {0}^(d-2)` with source `[0, L)^2 x {0}`
/// and target the plate's rim. Either way the source is separated from the
/// target by a moat of width `L`, so a crossing certifies connectivity over
/// a distance comparable to the scale.
#[derive(Debug, Clone)]
pub struct CrossingGeometry {
    kind: CrossingKind,
    scale: Coord,
    window: GridBox,
    source: Vec<usize>,
    target: Vec<usize>,
}

impl CrossingGeometry {
    /// Build the arena for the given event kind, dimension and side length.
    pub fn new(kind: CrossingKind, dim: usize, scale: Coord) -> Result<Self> {
        check_dim(dim)?;
        if scale < 1 {
            return Err(Error::precondition(format!(
                "crossing scale must be at least 1, got {scale}"
            )));
        }
        let side = 3 * scale;
        if side > 3000 {
            return Err(Error::precondition(format!(
                "crossing scale {scale} gives a window of side {side}; refusing above 3000"
            )));
        }
        let window = match kind {
            CrossingKind::Vacant => GridBox::new(vec![-scale; dim], vec![side as u32; dim])?,
            CrossingKind::OccupiedPlanar => {
                GridBox::plate(dim, [-scale, -scale], [side as u32, side as u32])?
            }
        };
        let planar_axes = match kind {
            CrossingKind::Vacant => dim,
            CrossingKind::OccupiedPlanar => 2,
        };
        let mut source = Vec::new();
        let mut target = Vec::new();
        for (idx, p) in window.iter_points().enumerate() {
            let in_core = p[..planar_axes].iter().all(|&c| (0..scale).contains(&c));
            let on_rim = p[..planar_axes]
                .iter()
                .any(|&c| c == -scale || c == 2 * scale - 1);
            if in_core {
                source.push(idx);
            } else if on_rim {
                target.push(idx);
            }
        }
        Ok(Self {
            kind,
            scale,
            window,
            source,
            target,
        })
    }

    /// Event kind this arena belongs to.
    pub fn kind(&self) -> CrossingKind {
        self.kind
    }

    /// Side length of the central box.
    pub fn scale(&self) -> Coord {
        self.scale
    }

    /// The window a cloud must be sampled on for this arena.
    pub fn window(&self) -> &GridBox {
        &self.window
    }

    /// Window indices of the source sites.
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    /// Window indices of the target sites.
    pub fn target(&self) -> &[usize] {
        &self.target
    }

    /// Whether the active sites of `mask` contain a source-to-target path
    /// under this arena's adjacency. The mask must live on the arena window.
    pub fn crossed_by(&self, mask: &BitMask) -> Result<bool> {
        if mask.grid() != &self.window {
            return Err(Error::precondition(
                "crossing mask lives on a different grid than the arena",
            ));
        }
        let n = self.window.len();
        let mut is_target = vec![false; n];
        for &t in &self.target {
            is_target[t] = true;
        }
        let mut seen = vec![false; n];
        let mut queue: Vec<u32> = Vec::new();
        for &s in &self.source {
            if mask.get(s) {
                if is_target[s] {
                    return Ok(true);
                }
                seen[s] = true;
                queue.push(s as u32);
            }
        }
        let offsets = self.kind.adjacency().offsets(self.window.dim());
        let mut scratch = vec![0i64; self.window.dim()];
        while let Some(idx) = queue.pop() {
            let p = self.window.point(idx as usize);
            for o in &offsets {
                for (s, (a, b)) in scratch.iter_mut().zip(p.iter().zip(o)) {
                    *s = a + b;
                }
                if let Some(j) = self.window.index(&scratch) {
                    if !seen[j] && mask.get(j) {
                        if is_target[j] {
                            return Ok(true);
                        }
                        seen[j] = true;
                        queue.push(j as u32);
                    }
                }
            }
        }
        Ok(false)
    }
}

/// Whether the vacant set of `occ` at level `u` crosses the vacant arena.
pub fn vacant_crossing(
    occ: &LeveledOccupancy,
    u: f64,
    geometry: &CrossingGeometry,
) -> Result<bool> {
    if geometry.kind() != CrossingKind::Vacant {
        return Err(Error::precondition(
            "vacant crossing asked of a planar arena",
        ));
    }
    geometry.crossed_by(&occ.vacant_mask(u)?)
}

/// Whether the covered set of `occ` at level `u` crosses the planar arena.
pub fn occupied_planar_crossing(
    occ: &LeveledOccupancy,
    u: f64,
    geometry: &CrossingGeometry,
) -> Result<bool> {
    if geometry.kind() != CrossingKind::OccupiedPlanar {
        return Err(Error::precondition(
            "planar crossing asked of a vacant arena",
        ));
    }
    let vacant = occ.vacant_mask(u)?;
    let mut covered = BitMask::new(occ.window().clone());
    for i in 0..occ.window().len() {
        covered.set(i, !vacant.get(i));
    }
    geometry.crossed_by(&covered)
}

/// One Monte Carlo estimate of an event probability at a given scale and
/// level, with a Wilson 95% confidence interval.
#[derive(Debug, Clone, Serialize)]
pub struct CrossingEstimate {
    /// Side length (crossings) or ball radius (escape proxy).
    pub scale: Coord,
    /// Cloud intensity the event was evaluated at.
    pub u: f64,
    /// Number of independent trials.
    pub trials: u64,
    /// Trials on which the event occurred.
    pub successes: u64,
    /// Lower end of the Wilson 95% interval.
    pub lo95: f64,
    /// Upper end of the Wilson 95% interval.
    pub hi95: f64,
}

impl CrossingEstimate {
    /// Point estimate `successes / trials`.
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let zz = z * z;
    let denom = 1.0 + zz / n;
    let center = (p + zz / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + zz / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn check_levels(u_list: &[f64]) -> Result<f64> {
    if u_list.is_empty() {
        return Err(Error::precondition("empty level list"));
    }
    let mut u_max = 0.0f64;
    for &u in u_list {
        if !u.is_finite() || u < 0.0 {
            return Err(Error::precondition(format!("bad intensity level {u}")));
        }
        u_max = u_max.max(u);
    }
    Ok(u_max)
}

/// Run `trials` independent evaluations of a per-trial event vector and sum
/// the outcomes componentwise. The reduction is a sum of indicator vectors,
/// so the result is independent of evaluation order (and thread count).
fn tally_trials<F>(trials: u64, events: usize, run: F) -> Result<Vec<u64>>
where
    F: Fn(u64) -> Result<Vec<bool>> + Sync,
{
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(&run)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Vec<bool>> = (0..trials).map(&run).collect::<Result<_>>()?;

    let mut tallies = vec![0u64; events];
    for trial in outcomes {
        debug_assert_eq!(trial.len(), events);
        for (t, &hit) in tallies.iter_mut().zip(&trial) {
            *t += hit as u64;
        }
    }
    Ok(tallies)
}

/// Estimate crossing probabilities at several levels with coupled trials.
///
/// Each trial samples one cloud on the arena window at the largest level and
/// evaluates the event at every requested level, so for any fixed seed the
/// vacant success counts are nonincreasing in `u` and the covered ones
/// nondecreasing — exactly, not just on average. Truncated-shell sampling is
/// used; the certified truncation bias per trajectory is available from the
/// sampler and is reported by the command-line frontend.
pub fn estimate_crossing(
    green: &mut GreenTable,
    kind: CrossingKind,
    dim: usize,
    scale: Coord,
    u_list: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<CrossingEstimate>> {
    let u_max = check_levels(u_list)?;
    if trials == 0 {
        return Err(Error::precondition("at least one trial is required"));
    }
    let geometry = CrossingGeometry::new(kind, dim, scale)?;
    let sampler = CloudSampler::new(
        green,
        CloudConfig::new(geometry.window().clone(), u_max, seed).with_mode(EscapeMode::Truncate),
    )?;

    let run = |trial: u64| -> Result<Vec<bool>> {
        let occ = sampler.sample(trial)?;
        u_list
            .iter()
            .map(|&u| match kind {
                CrossingKind::Vacant => vacant_crossing(&occ, u, &geometry),
                CrossingKind::OccupiedPlanar => occupied_planar_crossing(&occ, u, &geometry),
            })
            .collect()
    };
    let tallies = tally_trials(trials, u_list.len(), run)?;

    Ok(u_list
        .iter()
        .zip(tallies)
        .map(|(&u, successes)| {
            let (lo95, hi95) = wilson_interval(successes, trials, 1.96);
            CrossingEstimate {
                scale,
                u,
                trials,
                successes,
                lo95,
                hi95,
            }
        })
        .collect())
}

/// Escape proxy: the probability that the vacant cluster of the origin
/// inside the centred sup-norm ball of radius `m` reaches the ball's
/// surface.
///
/// All radii are evaluated on one cloud per trial, sampled on the largest
/// ball at the largest level. A path within the big ball from the origin to
/// sup-distance `m` first touches distance `m` after moving only through
/// sites strictly inside, so the event read off the big window equals the
/// event defined on the radius-`m` ball alone; radii are therefore coupled
/// the same way levels are. Estimates are returned in radius-major order:
/// one row per `(m, u)` pair, levels innermost.
pub fn eta_proxy(
    green: &mut GreenTable,
    dim: usize,
    u_list: &[f64],
    m_list: &[Coord],
    trials: u64,
    seed: u64,
) -> Result<Vec<CrossingEstimate>> {
    let u_max = check_levels(u_list)?;
    if trials == 0 {
        return Err(Error::precondition("at least one trial is required"));
    }
    if m_list.is_empty() {
        return Err(Error::precondition("empty radius list"));
    }
    let mut m_max = 0;
    for &m in m_list {
        if m < 1 {
            return Err(Error::precondition(format!(
                "escape proxy radius must be at least 1, got {m}"
            )));
        }
        m_max = m_max.max(m);
    }
    if m_max > 1000 {
        return Err(Error::precondition(format!(
            "escape proxy radius {m_max} gives an oversized window; refusing above 1000"
        )));
    }
    let window = GridBox::cube(dim, m_max)?;
    let sampler = CloudSampler::new(
        green,
        CloudConfig::new(window.clone(), u_max, seed).with_mode(EscapeMode::Truncate),
    )?;
    let origin = vec![0i64; dim];
    let origin_idx = window
        .index(&origin)
        .expect("centred cube contains the origin");
    let offsets = Adjacency::Nearest.offsets(dim);

    let run = |trial: u64| -> Result<Vec<bool>> {
        let occ = sampler.sample(trial)?;
        let mut events = Vec::with_capacity(m_list.len() * u_list.len());
        for &u in u_list {
            let mask = occ.vacant_mask(u)?;
            // One flood from the origin; the farthest sup-norm it reaches
            // decides the event at every radius.
            let mut reached: Coord = -1;
            if mask.get(origin_idx) {
                reached = 0;
                let mut seen = vec![false; window.len()];
                seen[origin_idx] = true;
                let mut queue = vec![origin_idx as u32];
                let mut scratch = vec![0i64; dim];
                while let Some(idx) = queue.pop() {
                    let p = window.point(idx as usize);
                    reached = reached.max(linf_norm(&p));
                    if reached == m_max {
                        break;
                    }
                    for o in &offsets {
                        for (s, (a, b)) in scratch.iter_mut().zip(p.iter().zip(o)) {
                            *s = a + b;
                        }
                        if let Some(j) = window.index(&scratch) {
                            if !seen[j] && mask.get(j) {
                                seen[j] = true;
                                queue.push(j as u32);
                            }
                        }
                    }
                }
            }
            events.push((u, reached));
        }
        let mut out = Vec::with_capacity(m_list.len() * u_list.len());
        for &m in m_list {
            for &(_, reached) in &events {
                out.push(reached >= m);
            }
        }
        Ok(out)
    };
    let tallies = tally_trials(trials, m_list.len() * u_list.len(), run)?;

    let mut out = Vec::with_capacity(tallies.len());
    let mut k = 0;
    for &m in m_list {
        for &u in u_list {
            let successes = tallies[k];
            k += 1;
            let (lo95, hi95) = wilson_interval(successes, trials, 1.96);
            out.push(CrossingEstimate {
                scale: m,
                u,
                trials,
                successes,
                lo95,
                hi95,
            });
        }
    }
    Ok(out)
}

/// Result of bisecting the escape proxy against a threshold.
#[derive(Debug, Clone, Serialize)]
pub struct UStarBracket {
    /// Largest probed level with proxy above the threshold.
    pub u_lo: f64,
    /// Smallest probed level with proxy at or below the threshold.
    pub u_hi: f64,
    /// Threshold the proxy was compared against.
    pub threshold: f64,
    /// Ball radius of the proxy.
    pub radius: Coord,
    /// Bisection steps performed after the two endpoint probes.
    pub iterations: u32,
    /// Trials per probe.
    pub trials: u64,
    /// Final measurement at `u_lo`.
    pub at_lo: CrossingEstimate,
    /// Final measurement at `u_hi`.
    pub at_hi: CrossingEstimate,
    /// Statement of the convention the bracket depends on.
    pub convention: String,
}

/// Bracket the level at which the escape proxy crosses `threshold`.
///
/// Each probe is an independent `eta_proxy` run with its own derived seed,
/// so unlike the coupled single-run curves the comparison against the
/// threshold is noisy; the endpoint measurements with their intervals are
/// returned so a caller can judge how sharp the bracket really is. The
/// choice of threshold is a convention, recorded in the result.
#[allow(clippy::too_many_arguments)]
pub fn bracket_u_star(
    green: &mut GreenTable,
    dim: usize,
    radius: Coord,
    u_lo: f64,
    u_hi: f64,
    threshold: f64,
    trials: u64,
    iterations: u32,
    seed: u64,
) -> Result<UStarBracket> {
    if !(u_lo.is_finite() && u_hi.is_finite()) || u_lo <= 0.0 || u_hi <= u_lo {
        return Err(Error::precondition(format!("bad bracket [{u_lo}, {u_hi}]")));
    }
    if !(0.0..1.0).contains(&threshold) || threshold <= 0.0 {
        return Err(Error::precondition(format!(
            "threshold must lie strictly between 0 and 1, got {threshold}"
        )));
    }
    if iterations > 60 {
        return Err(Error::precondition(
            "more than 60 bisection steps cannot narrow an f64 bracket further",
        ));
    }
    let mut probe = |u: f64, index: u64| -> Result<CrossingEstimate> {
        let rows = eta_proxy(
            green,
            dim,
            &[u],
            &[radius],
            trials,
            derive(seed, purpose::BISECTION, index),
        )?;
        Ok(rows.into_iter().next().expect("one probe row"))
    };

    let mut at_lo = probe(u_lo, 0)?;
    let mut at_hi = probe(u_hi, 1)?;
    if at_lo.rate() <= threshold || at_hi.rate() > threshold {
        return Err(Error::precondition(format!(
            "bracket endpoints do not straddle the threshold {threshold}: \
             proxy({u_lo}) = {:.4}, proxy({u_hi}) = {:.4}",
            at_lo.rate(),
            at_hi.rate()
        )));
    }
    let (mut lo, mut hi) = (u_lo, u_hi);
    for i in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let at_mid = probe(mid, 2 + i as u64)?;
        if at_mid.rate() > threshold {
            lo = mid;
            at_lo = at_mid;
        } else {
            hi = mid;
            at_hi = at_mid;
        }
    }
    Ok(UStarBracket {
        u_lo: lo,
        u_hi: hi,
        threshold,
        radius,
        iterations,
        trials,
        at_lo,
        at_hi,
        convention: format!(
            "crossing level of the radius-{radius} escape proxy at threshold {threshold}; \
             the threshold choice is a convention, not an estimate of the phase boundary"
        ),
    })
}

/// Empirical two-point statistics of the vacant set at level `u`.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceEstimate {
    /// Estimated covariance of the two vacancy indicators.
    pub value: f64,
    /// Standard error of `value` (influence-function estimate).
    pub sigma: f64,
    /// Empirical vacancy rate at the first site.
    pub p_x: f64,
    /// Empirical vacancy rate at the second site.
    pub p_y: f64,
    /// Number of independent clouds drawn.
    pub samples: u64,
}

/// Estimate the covariance of the vacancy indicators of `x` and `y`.
///
/// Clouds are drawn in resampling mode on the smallest box containing both
/// sites, so the sampled law is exact and the estimate is unbiased up to
/// Monte Carlo error. The reported `sigma` is the standard error of the
/// empirical covariance obtained from the variance of its influence values
/// `(a_i - mean(a)) * (b_i - mean(b))`.
pub fn empirical_covariance(
    green: &mut GreenTable,
    u: f64,
    x: &[Coord],
    y: &[Coord],
    samples: u64,
    seed: u64,
) -> Result<CovarianceEstimate> {
    let dim = green.dim();
    if x.len() != dim || y.len() != dim {
        return Err(Error::precondition(
            "site dimension does not match the green table",
        ));
    }
    if !u.is_finite() || u <= 0.0 {
        return Err(Error::precondition(format!("bad intensity level {u}")));
    }
    if samples < 2 {
        return Err(Error::precondition(
            "at least two samples are needed for a covariance",
        ));
    }
    let lo: Point = x.iter().zip(y).map(|(&a, &b)| a.min(b)).collect();
    let extent: Vec<u32> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| ((a - b).unsigned_abs() + 1) as u32)
        .collect();
    let window = GridBox::new(lo, extent)?;
    let idx_x = window.index(x).expect("window contains x");
    let idx_y = window.index(y).expect("window contains y");
    let sampler = CloudSampler::new(
        green,
        CloudConfig::new(window, u, seed).with_mode(EscapeMode::Resample),
    )?;

    let run = |i: u64| -> Result<(bool, bool)> {
        let occ = sampler.sample(i)?;
        Ok((occ.is_vacant(idx_x, u), occ.is_vacant(idx_y, u)))
    };
    #[cfg(feature = "parallel")]
    let pairs: Vec<(bool, bool)> = (0..samples)
        .into_par_iter()
        .map(run)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<(bool, bool)> = (0..samples).map(run).collect::<Result<_>>()?;

    let n = samples as f64;
    let mean_a = pairs.iter().filter(|&&(a, _)| a).count() as f64 / n;
    let mean_b = pairs.iter().filter(|&&(_, b)| b).count() as f64 / n;
    let mut sum_phi = 0.0;
    let mut sum_phi2 = 0.0;
    for &(a, b) in &pairs {
        let phi = (a as u8 as f64 - mean_a) * (b as u8 as f64 - mean_b);
        sum_phi += phi;
        sum_phi2 += phi * phi;
    }
    let value = sum_phi / n;
    let var_phi = (sum_phi2 / n - value * value).max(0.0);
    Ok(CovarianceEstimate {
        value,
        sigma: (var_phi / n).sqrt(),
        p_x: mean_a,
        p_y: mean_b,
        samples,
    })
}
