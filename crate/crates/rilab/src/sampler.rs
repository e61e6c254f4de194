//! Poisson cloud of labeled random-walk trajectories on a finite window.
//!
//! A window `W` receives trajectories at Poisson rate `cap(W)` per unit of
//! intensity: arrival labels are generated with exponential gaps on
//! `(0, u_max]`, each trajectory starts from the normalized equilibrium
//! measure of `W` and runs as a simple random walk recording which sites of
//! `W` it covers. Keeping, per site, the *minimal* covering label realizes
//! every intensity `u <= u_max` in one sample: the occupied set at level
//! `u` is the sublevel set `{label <= u}`, monotone in `u` by construction.
//!
//! Walks must eventually leave for good; two escape policies are offered:
//!
//! * [`EscapeMode::Truncate`] kills a walk when it first leaves the ball
//!   `B(center, R)`. The probability it would have revisited `W` is bounded
//!   through the Green function and reported as a certified bias.
//! * [`EscapeMode::Resample`] is exact: at the shell the walk survives with
//!   its true return probability and, if it survives, restarts at a draw
//!   from the first-entrance distribution on the window boundary. The
//!   skipped excursion stays outside `W`, so the visit counts in `W` have
//!   exactly the right law and the reported bias is zero.

use std::collections::HashMap;

use rand::Rng;

use crate::green::GreenTable;
use crate::lattice::{linf_dist, BitMask, Coord, FiniteSet, GridBox, Point};
use crate::potential::{is_signed_permutation_symmetric, EntranceKernel, Equilibrium};
use crate::rng::{self, purpose};
use crate::{Error, Result};

/// Per-trajectory step budget; transient walks essentially never reach it.
pub const MAX_STEPS: u64 = 10_000_000;

/// Guard on the expected trajectory count `u_max * cap(W)`.
pub const MAX_EXPECTED_TRAJECTORIES: f64 = 1e9;

/// How a trajectory's simulation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Left the truncation shell (truncate mode).
    EscapedShell,
    /// Survival draw at the shell decided the walk never returns (exact mode).
    Escaped,
    /// The trajectory had already covered every site of the window.
    CoveredWindow,
    /// Hit the per-trajectory step cap.
    StepCap,
}

/// One sampled trajectory: contiguous walk segments (an entrance-law restart
/// opens a new segment) plus the label and termination reason.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub label: f64,
    /// Segments as (start point, unit steps); within a segment consecutive
    /// positions differ by one lattice step.
    pub segments: Vec<(Point, Vec<u8>)>,
    pub termination: Termination,
}

impl Trajectory {
    /// All positions visited, in order, across segments.
    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.segments.iter().flat_map(|(start, steps)| {
            let mut pos = start.clone();
            std::iter::once(start.clone()).chain(steps.iter().map(move |&s| {
                apply_step(&mut pos, s);
                pos.clone()
            }))
        })
    }
}

fn apply_step(pos: &mut [Coord], step: u8) {
    let axis = (step >> 1) as usize;
    pos[axis] += if step & 1 == 0 { 1 } else { -1 };
}

/// Escape policy at the truncation shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeMode {
    /// Kill at the shell; certified bias reported.
    Truncate,
    /// Exact survival + first-entrance restart; zero bias.
    Resample,
}

/// Sampling parameters.
#[derive(Debug, Clone)]
pub struct CloudConfig {
    pub window: GridBox,
    pub u_max: f64,
    /// Sup-norm radius of the kill shell around the window center.
    pub shell_radius: Coord,
    pub seed: u64,
    pub mode: EscapeMode,
    /// Retain full trajectories (needed for occupation functionals).
    pub keep_paths: bool,
}

impl CloudConfig {
    /// Config with the conventional shell at four circumradii.
    pub fn new(window: GridBox, u_max: f64, seed: u64) -> Self {
        let shell = default_shell(&window);
        CloudConfig {
            window,
            u_max,
            shell_radius: shell,
            seed,
            mode: EscapeMode::Truncate,
            keep_paths: false,
        }
    }

    pub fn with_mode(mut self, mode: EscapeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_shell(mut self, shell_radius: Coord) -> Self {
        self.shell_radius = shell_radius;
        self
    }

    pub fn with_paths(mut self, keep: bool) -> Self {
        self.keep_paths = keep;
        self
    }
}

/// Conventional shell radius: four circumradii, at least two steps beyond
/// the window.
pub fn default_shell(window: &GridBox) -> Coord {
    (4 * window.circumradius()).max(window_reach(window) + 2)
}

/// Largest sup-norm distance from the window center to a window site.
fn window_reach(window: &GridBox) -> Coord {
    let center = window.center();
    (0..window.dim())
        .map(|j| {
            let lo = window.lo()[j];
            let hi = lo + window.extent()[j] as Coord - 1;
            (center[j] - lo).max(hi - center[j])
        })
        .max()
        .unwrap_or(0)
}

/// Per-site minimal covering labels for one sampled cloud; realizes the
/// window trace of every intensity `u <= u_max` simultaneously.
#[derive(Debug, Clone)]
pub struct LeveledOccupancy {
    window: GridBox,
    labels: Vec<f64>,
    u_max: f64,
    n_trajectories: usize,
    expected_trajectories: f64,
    bias_per_trajectory: f64,
    total_steps: u64,
    step_cap_hits: usize,
    seed: u64,
    capacity: f64,
    trajectories: Option<Vec<Trajectory>>,
}

impl LeveledOccupancy {
    pub fn window(&self) -> &GridBox {
        &self.window
    }

    /// Minimal covering label per window index; `INFINITY` = never covered.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_trajectories
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn step_cap_hits(&self) -> usize {
        self.step_cap_hits
    }

    /// Certified per-trajectory escape bias (zero in resample mode).
    pub fn bias_per_trajectory(&self) -> f64 {
        self.bias_per_trajectory
    }

    /// Total-variation bias budget: expected trajectory count times the
    /// per-trajectory bound.
    pub fn bias_total(&self) -> f64 {
        self.expected_trajectories * self.bias_per_trajectory
    }

    pub fn trajectories(&self) -> Option<&[Trajectory]> {
        self.trajectories.as_deref()
    }

    /// True when the site with this window index is vacant at level `u`.
    pub fn is_vacant(&self, index: usize, u: f64) -> bool {
        self.labels[index] > u
    }

    /// Bit grid of vacant sites at level `u <= u_max` (true = vacant).
    pub fn vacant_mask(&self, u: f64) -> Result<BitMask> {
        if !(0.0..=self.u_max).contains(&u) {
            return Err(Error::precondition(format!(
                "level {u} outside the sampled range [0, {}]",
                self.u_max
            )));
        }
        let mut mask = BitMask::new(self.window.clone());
        for (i, &label) in self.labels.iter().enumerate() {
            mask.set(i, label > u);
        }
        Ok(mask)
    }

    /// Number of covered sites at level `u`.
    pub fn covered_count(&self, u: f64) -> usize {
        self.labels.iter().filter(|&&l| l <= u).count()
    }

    /// Total time spent in `targets` (a subset of the window) by all
    /// trajectories with label at most `u`. Requires kept paths.
    pub fn occupation_functional(&self, targets: &FiniteSet, u: f64) -> Result<u64> {
        let trajectories = self.trajectories.as_ref().ok_or_else(|| {
            Error::precondition("occupation functionals require keep_paths sampling")
        })?;
        for p in targets.points() {
            if !self.window.contains(p) {
                return Err(Error::precondition(
                    "occupation target outside the sampled window",
                ));
            }
        }
        let mut total = 0u64;
        for t in trajectories {
            if t.label > u {
                continue;
            }
            for pos in t.positions() {
                if targets.contains(&pos) {
                    total += 1;
                }
            }
        }
        Ok(total)
    }
}

/// Reusable sampler for a fixed window: equilibrium solve, start-point
/// tables and (in resample mode) the entrance kernel are computed once.
#[derive(Debug)]
pub struct CloudSampler {
    window: GridBox,
    u_max: f64,
    shell_radius: Coord,
    seed: u64,
    mode: EscapeMode,
    keep_paths: bool,
    center: Point,
    capacity: f64,
    starts: Vec<Point>,
    start_cum: Vec<f64>,
    kernel: Option<EntranceKernel>,
    bias_per_trajectory: f64,
}

impl CloudSampler {
    pub fn new(green: &mut GreenTable, cfg: CloudConfig) -> Result<Self> {
        let window = cfg.window.clone();
        if window.dim() != green.dim() {
            return Err(Error::precondition(format!(
                "window dimension {} does not match green table dimension {}",
                window.dim(),
                green.dim()
            )));
        }
        if window.is_empty() {
            return Err(Error::precondition("empty sampling window"));
        }
        if !cfg.u_max.is_finite() || cfg.u_max < 0.0 {
            return Err(Error::precondition(format!("bad u_max {}", cfg.u_max)));
        }
        let reach = window_reach(&window);
        if cfg.shell_radius < 2 * window.circumradius() || cfg.shell_radius <= reach {
            return Err(Error::precondition(format!(
                "shell radius {} too small: need >= 2x circumradius ({}) and > window reach ({reach})",
                cfg.shell_radius,
                2 * window.circumradius()
            )));
        }

        let set = window.to_finite_set()?;
        let equilibrium = Equilibrium::compute(green, &set)?;
        let capacity = equilibrium.capacity();
        let expected = cfg.u_max * capacity;
        if expected > MAX_EXPECTED_TRAJECTORIES {
            return Err(Error::precondition(format!(
                "expected trajectory count {expected:.3e} exceeds the guard"
            )));
        }

        let mut starts = Vec::new();
        let mut start_cum = Vec::new();
        let mut acc = 0.0;
        for (p, &w) in equilibrium.support().iter().zip(equilibrium.weights()) {
            if w > 0.0 {
                acc += w;
                starts.push(p.clone());
                start_cum.push(acc);
            }
        }

        let center = window.center();
        let (kernel, bias) = match cfg.mode {
            EscapeMode::Resample => {
                let probes = shell_probe_points(&window, cfg.shell_radius);
                (Some(EntranceKernel::new(green, &set, &probes)?), 0.0)
            }
            EscapeMode::Truncate => {
                let bias = escape_bias_bound(green, &set, &equilibrium, &center, cfg.shell_radius)?;
                (None, bias)
            }
        };

        Ok(CloudSampler {
            window,
            u_max: cfg.u_max,
            shell_radius: cfg.shell_radius,
            seed: cfg.seed,
            mode: cfg.mode,
            keep_paths: cfg.keep_paths,
            center,
            capacity,
            starts,
            start_cum,
            kernel,
            bias_per_trajectory: bias,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn bias_per_trajectory(&self) -> f64 {
        self.bias_per_trajectory
    }

    /// Start support (positive-weight equilibrium sites).
    pub fn start_support(&self) -> &[Point] {
        &self.starts
    }

    /// Start probabilities aligned with [`Self::start_support`].
    pub fn start_probabilities(&self) -> Vec<f64> {
        let total = *self.start_cum.last().unwrap_or(&1.0);
        let mut prev = 0.0;
        self.start_cum
            .iter()
            .map(|&c| {
                let p = (c - prev) / total;
                prev = c;
                p
            })
            .collect()
    }

    /// Independent start draws (for distribution tests).
    pub fn sample_start_points(&self, count: usize, seed_index: u64) -> Vec<Point> {
        let mut rng = rng::stream(self.seed, purpose::TRAJECTORY, seed_index);
        (0..count)
            .map(|_| self.draw_start(&mut rng).clone())
            .collect()
    }

    fn draw_start(&self, rng: &mut rng::Stream) -> &Point {
        let total = *self.start_cum.last().expect("nonempty support");
        let r = rng.random::<f64>() * total;
        let idx = self.start_cum.partition_point(|&c| c <= r);
        &self.starts[idx.min(self.starts.len() - 1)]
    }

    /// Draw one cloud. Distinct `sample_index` values give independent
    /// samples; everything is deterministic in `(seed, sample_index)`.
    pub fn sample(&self, sample_index: u64) -> Result<LeveledOccupancy> {
        let sample_seed = rng::derive(self.seed, purpose::TRIAL, sample_index);
        let n_sites = self.window.len();
        let mut labels = vec![f64::INFINITY; n_sites];
        let mut visit_epoch = vec![0u32; n_sites];
        let mut kept: Option<Vec<Trajectory>> = self.keep_paths.then(Vec::new);
        let mut entry_cache: HashMap<Point, (Vec<f64>, f64)> = HashMap::new();

        // Arrival labels: exponential gaps at rate cap(W) over (0, u_max].
        let mut arrivals = rng::stream(sample_seed, purpose::ARRIVALS, 0);
        let mut arrival_labels = Vec::new();
        if self.capacity > 0.0 {
            let mut u = 0.0f64;
            loop {
                let gap: f64 = -(-arrivals.random::<f64>()).ln_1p() / self.capacity;
                u += gap;
                if u.is_nan() || u > self.u_max {
                    break;
                }
                arrival_labels.push(u);
                if arrival_labels.len() as f64 > 2.0 * MAX_EXPECTED_TRAJECTORIES {
                    return Err(Error::numerical("arrival count ran away"));
                }
            }
        }

        let mut total_steps = 0u64;
        let mut step_cap_hits = 0usize;
        for (i, &label) in arrival_labels.iter().enumerate() {
            let mut rng = rng::stream(sample_seed, purpose::TRAJECTORY, i as u64);
            let epoch = i as u32 + 1;
            let (steps, hit_cap) = self.run_trajectory(
                label,
                &mut rng,
                &mut labels,
                &mut visit_epoch,
                epoch,
                &mut entry_cache,
                &mut kept,
            )?;
            total_steps += steps;
            step_cap_hits += usize::from(hit_cap);
        }

        Ok(LeveledOccupancy {
            window: self.window.clone(),
            labels,
            u_max: self.u_max,
            n_trajectories: arrival_labels.len(),
            expected_trajectories: self.u_max * self.capacity,
            bias_per_trajectory: self.bias_per_trajectory,
            total_steps,
            step_cap_hits,
            seed: self.seed,
            capacity: self.capacity,
            trajectories: kept,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_trajectory(
        &self,
        label: f64,
        walk_rng: &mut rng::Stream,
        labels: &mut [f64],
        visit_epoch: &mut [u32],
        epoch: u32,
        entry_cache: &mut HashMap<Point, (Vec<f64>, f64)>,
        kept: &mut Option<Vec<Trajectory>>,
    ) -> Result<(u64, bool)> {
        let dim = self.window.dim();
        let n_sites = self.window.len();
        let mut pos = self.draw_start(walk_rng).clone();
        let mut segments: Vec<(Point, Vec<u8>)> = Vec::new();
        if kept.is_some() {
            segments.push((pos.clone(), Vec::new()));
        }

        let mut fresh_visits = 0usize;
        record_visit(
            &self.window,
            label,
            &pos,
            labels,
            visit_epoch,
            epoch,
            &mut fresh_visits,
        );

        let early_kill = !self.keep_paths;
        let mut steps = 0u64;
        let termination = loop {
            if early_kill && fresh_visits == n_sites {
                break Termination::CoveredWindow;
            }
            if steps >= MAX_STEPS {
                break Termination::StepCap;
            }
            if linf_dist(&pos, &self.center) >= self.shell_radius {
                match self.mode {
                    EscapeMode::Truncate => break Termination::EscapedShell,
                    EscapeMode::Resample => {
                        let (cum, h) = if let Some(hit) = entry_cache.get(&pos) {
                            hit.clone()
                        } else {
                            let kernel = self.kernel.as_ref().expect("kernel in resample mode");
                            let (weights, h) = kernel.entry_distribution(&pos)?;
                            let mut cum = Vec::with_capacity(weights.len());
                            let mut acc = 0.0;
                            for w in weights {
                                acc += w;
                                cum.push(acc);
                            }
                            entry_cache.insert(pos.clone(), (cum.clone(), h));
                            (cum, h)
                        };
                        if walk_rng.random::<f64>() >= h {
                            break Termination::Escaped;
                        }
                        // Restart at the first window site the walk hits.
                        let kernel = self.kernel.as_ref().expect("kernel in resample mode");
                        let r = walk_rng.random::<f64>() * *cum.last().expect("nonempty boundary");
                        let idx = cum.partition_point(|&c| c <= r);
                        pos = kernel.boundary()[idx.min(cum.len() - 1)].clone();
                        record_visit(
                            &self.window,
                            label,
                            &pos,
                            labels,
                            visit_epoch,
                            epoch,
                            &mut fresh_visits,
                        );
                        if kept.is_some() {
                            segments.push((pos.clone(), Vec::new()));
                        }
                        continue;
                    }
                }
            }
            let dir = walk_rng.random_range(0..2 * dim as u32) as u8;
            apply_step(&mut pos, dir);
            steps += 1;
            record_visit(
                &self.window,
                label,
                &pos,
                labels,
                visit_epoch,
                epoch,
                &mut fresh_visits,
            );
            if kept.is_some() {
                segments.last_mut().expect("open segment").1.push(dir);
            }
        };

        let hit_cap = termination == Termination::StepCap;
        if let Some(kept) = kept.as_mut() {
            kept.push(Trajectory {
                label,
                segments,
                termination,
            });
        }
        Ok((steps, hit_cap))
    }
}

/// One-shot sampling: build the sampler and draw sample 0.
pub fn sample_interlacement(green: &mut GreenTable, cfg: CloudConfig) -> Result<LeveledOccupancy> {
    CloudSampler::new(green, cfg)?.sample(0)
}

#[allow(clippy::too_many_arguments)]
fn record_visit(
    window: &GridBox,
    label: f64,
    pos: &Point,
    labels: &mut [f64],
    visit_epoch: &mut [u32],
    epoch: u32,
    fresh_visits: &mut usize,
) {
    if let Some(idx) = window.index(pos) {
        if labels[idx] > label {
            labels[idx] = label;
        }
        if visit_epoch[idx] != epoch {
            visit_epoch[idx] = epoch;
            *fresh_visits += 1;
        }
    }
}

/// Representative points of the kill shell (symmetry-reduced for windows
/// symmetric about their center).
fn shell_probe_points(window: &GridBox, radius: Coord) -> Vec<Point> {
    let center = window.center();
    let dim = window.dim();
    let sphere = FiniteSet::sphere(dim, radius).ok();
    let Some(sphere) = sphere else {
        return Vec::new();
    };
    let symmetric = window_is_centered_symmetric(window);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for p in sphere.points() {
        if symmetric && !seen.insert(crate::lattice::canonical(p)) {
            continue;
        }
        out.push(p.iter().zip(&center).map(|(a, c)| a + c).collect());
    }
    out
}

fn window_is_centered_symmetric(window: &GridBox) -> bool {
    // A box is symmetric about its lattice center iff every extent is odd.
    window.extent().iter().all(|&e| e % 2 == 1)
}

/// Upper bound on the probability that a walk killed at sup-norm `radius`
/// from `center` would have revisited the set. Two certified bounds are
/// combined: the Green-quotient bound
/// `sup_x sum_y g(x-y) / inf_z sum_y g(z-y)` over the shell (skipped when
/// the scan would be too large) and the capacity bound
/// `cap(K) g((radius - reach) e_1)`; the smaller wins.
pub fn escape_bias_bound(
    green: &mut GreenTable,
    set: &FiniteSet,
    equilibrium: &Equilibrium,
    center: &[Coord],
    radius: Coord,
) -> Result<f64> {
    let reach = set
        .points()
        .iter()
        .map(|p| linf_dist(p, center))
        .max()
        .unwrap_or(0);
    if radius <= reach {
        return Err(Error::precondition("shell not outside the set"));
    }
    let cap_route = equilibrium.hitting_bound_beyond(green, radius - reach)?;

    let dim = set.dim();
    let symmetric = {
        let centered = FiniteSet::new(
            dim,
            set.points()
                .iter()
                .map(|p| crate::lattice::sub(p, center))
                .collect(),
        )?;
        is_signed_permutation_symmetric(&centered)
    };
    let probe_count = if symmetric {
        // Canonical classes on the sphere: a crude overcount is fine here.
        let r = radius as u128 + 1;
        r.pow(dim as u32 - 1)
    } else {
        let r = radius as u128;
        2 * dim as u128 * (2 * r + 1).pow(dim as u32 - 1)
    };
    let inf_probes: Vec<Point> = if symmetric {
        let mut seen = std::collections::HashSet::new();
        set.points()
            .iter()
            .filter(|p| seen.insert(crate::lattice::canonical(&crate::lattice::sub(p, center))))
            .cloned()
            .collect()
    } else {
        set.points().to_vec()
    };

    let scan_cost =
        probe_count.saturating_mul(set.len() as u128) + (inf_probes.len() * set.len()) as u128;
    if scan_cost > 20_000_000 {
        // The capacity route stays certified: g is maximal on the axis at
        // fixed sup norm and decreasing along it.
        return Ok(cap_route);
    }

    // Denominator: inf over the set of the set's Green potential.
    let mut diffs = Vec::new();
    for z in &inf_probes {
        for y in set.points() {
            diffs.push(crate::lattice::sub(z, y));
        }
    }
    green.fill(diffs)?;
    let mut inf_pot = f64::MAX;
    for z in &inf_probes {
        let mut s = 0.0;
        for y in set.points() {
            s += green.value(&crate::lattice::sub(z, y))?;
        }
        inf_pot = inf_pot.min(s);
    }

    // Numerator: sup over shell points of the potential from outside.
    let probes = {
        let sphere = FiniteSet::sphere(dim, radius)?;
        let mut seen = std::collections::HashSet::new();
        let mut out: Vec<Point> = Vec::new();
        for p in sphere.points() {
            if symmetric && !seen.insert(crate::lattice::canonical(p)) {
                continue;
            }
            out.push(p.iter().zip(center).map(|(a, c)| a + c).collect());
        }
        out
    };
    let mut diffs = Vec::new();
    for x in &probes {
        for y in set.points() {
            diffs.push(crate::lattice::sub(x, y));
        }
    }
    green.fill(diffs)?;
    let mut sup_num = 0.0f64;
    for x in &probes {
        let mut s = 0.0;
        for y in set.points() {
            s += green.value(&crate::lattice::sub(x, y))?;
        }
        sup_num = sup_num.max(s);
    }

    Ok((sup_num / inf_pot).min(cap_route).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::DEFAULT_TOL;

    fn table() -> GreenTable {
        GreenTable::new(3, DEFAULT_TOL).unwrap()
    }

    fn singleton_cfg(u_max: f64, seed: u64) -> CloudConfig {
        CloudConfig::new(GridBox::cube(3, 0).unwrap(), u_max, seed)
            .with_shell(2)
            .with_mode(EscapeMode::Resample)
    }

    #[test]
    fn zero_intensity_means_empty_cloud() {
        let mut g = table();
        let occ = sample_interlacement(&mut g, singleton_cfg(0.0, 7)).unwrap();
        assert_eq!(occ.n_trajectories(), 0);
        assert!(occ.labels().iter().all(|l| l.is_infinite()));
        assert_eq!(occ.vacant_mask(0.0).unwrap().count_ones(), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut g = table();
        let cfg = CloudConfig::new(GridBox::cube(3, 2).unwrap(), 1.5, 99)
            .with_mode(EscapeMode::Resample)
            .with_shell(10);
        let sampler = CloudSampler::new(&mut g, cfg.clone()).unwrap();
        let a = sampler.sample(3).unwrap();
        let b = sampler.sample(3).unwrap();
        assert_eq!(a.n_trajectories(), b.n_trajectories());
        for (x, y) in a.labels().iter().zip(b.labels()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = sampler.sample(4).unwrap();
        let differs = a
            .labels()
            .iter()
            .zip(c.labels())
            .any(|(x, y)| x.to_bits() != y.to_bits());
        assert!(differs || a.n_trajectories() != c.n_trajectories());
    }

    #[test]
    fn vacant_masks_nest_across_levels() {
        let mut g = table();
        let cfg = CloudConfig::new(GridBox::cube(3, 2).unwrap(), 2.0, 5)
            .with_mode(EscapeMode::Resample)
            .with_shell(10);
        let occ = sample_interlacement(&mut g, cfg).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64 / 10.0).collect();
        for w in grid.windows(2) {
            let coarse = occ.vacant_mask(w[1]).unwrap();
            let fine = occ.vacant_mask(w[0]).unwrap();
            assert!(fine.contains_mask(&coarse), "u={} vs u={}", w[0], w[1]);
        }
    }

    #[test]
    fn singleton_vacancy_matches_exponential_law() {
        // For W = {0} every trajectory covers the site at its start, so
        // P[vacant at u] = P[no arrival <= u] = exp(-u cap) exactly; the
        // Monte Carlo side only checks the arrival machinery.
        let mut g = table();
        let cap = 1.0 / g.origin().unwrap();
        let sampler = CloudSampler::new(&mut g, singleton_cfg(1.0, 2024)).unwrap();
        let trials = 20_000;
        let mut vacant = 0usize;
        for i in 0..trials {
            let occ = sampler.sample(i as u64).unwrap();
            vacant += usize::from(occ.labels()[0].is_infinite());
        }
        let p_hat = vacant as f64 / trials as f64;
        let p = (-cap).exp();
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (p_hat - p).abs() < 4.0 * sigma,
            "p_hat={p_hat}, p={p}, sigma={sigma}"
        );
    }

    #[test]
    fn resample_mode_reports_zero_bias() {
        let mut g = table();
        let cfg = CloudConfig::new(GridBox::cube(3, 1).unwrap(), 1.0, 1)
            .with_mode(EscapeMode::Resample)
            .with_shell(8);
        let occ = sample_interlacement(&mut g, cfg).unwrap();
        assert_eq!(occ.bias_per_trajectory(), 0.0);
        assert_eq!(occ.bias_total(), 0.0);
    }

    #[test]
    fn truncation_bias_shrinks_with_the_shell() {
        let mut g = table();
        let set = FiniteSet::cube(3, 2).unwrap();
        let eq = Equilibrium::compute(&mut g, &set).unwrap();
        let b40 = escape_bias_bound(&mut g, &set, &eq, &[0, 0, 0], 40).unwrap();
        let b80 = escape_bias_bound(&mut g, &set, &eq, &[0, 0, 0], 80).unwrap();
        assert!(b40 < 0.1, "bias at R=40: {b40}");
        // Green decay ~ 1/R in d=3: doubling the shell should halve it.
        let ratio = b80 / b40;
        assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn singleton_quotient_bound_is_green_ratio() {
        let mut g = table();
        let set = FiniteSet::new(3, vec![vec![0, 0, 0]]).unwrap();
        let eq = Equilibrium::compute(&mut g, &set).unwrap();
        let b = escape_bias_bound(&mut g, &set, &eq, &[0, 0, 0], 12).unwrap();
        // sup_{|x|=12} g(x)/g(0) is attained on the axis.
        let want = g.value(&[12, 0, 0]).unwrap() / g.origin().unwrap();
        assert!((b - want).abs() < 1e-12, "{b} vs {want}");
    }

    #[test]
    fn shell_preconditions_enforced() {
        let mut g = table();
        let cfg = CloudConfig::new(GridBox::cube(3, 3).unwrap(), 1.0, 1).with_shell(3);
        assert!(CloudSampler::new(&mut g, cfg).is_err());
    }

    #[test]
    fn occupation_functional_counts_visits() {
        let mut g = table();
        let cfg = CloudConfig::new(GridBox::cube(3, 1).unwrap(), 1.0, 42)
            .with_mode(EscapeMode::Resample)
            .with_shell(8)
            .with_paths(true);
        let occ = sample_interlacement(&mut g, cfg).unwrap();
        let site = FiniteSet::new(3, vec![vec![0, 0, 0]]).unwrap();
        let all = occ.occupation_functional(&site, 1.0).unwrap();
        let none = occ.occupation_functional(&site, 0.0).unwrap();
        assert_eq!(none, 0);
        // Covered origin implies at least one visit.
        let idx = occ.window().index(&[0, 0, 0]).unwrap();
        if occ.labels()[idx] <= 1.0 {
            assert!(all >= 1);
        }
        // Kept trajectories carry valid segments.
        for t in occ.trajectories().unwrap() {
            for (start, steps) in &t.segments {
                assert_eq!(start.len(), 3);
                let _ = steps;
            }
        }
    }

    #[test]
    fn start_draws_follow_equilibrium_weights() {
        let mut g = table();
        let cfg = CloudConfig::new(GridBox::cube(3, 1).unwrap(), 1.0, 11)
            .with_mode(EscapeMode::Resample)
            .with_shell(8);
        let sampler = CloudSampler::new(&mut g, cfg).unwrap();
        let draws = sampler.sample_start_points(100_000, 0);
        let probs = sampler.start_probabilities();
        let mut counts = vec![0usize; sampler.start_support().len()];
        for p in &draws {
            let idx = sampler.start_support().iter().position(|q| q == p).unwrap();
            counts[idx] += 1;
        }
        // Chi-squared against expected counts; threshold ~ p=0.001 via the
        // Wilson-Hilferty cube approximation.
        let n = draws.len() as f64;
        let mut chi2 = 0.0;
        for (c, p) in counts.iter().zip(&probs) {
            let expect = n * p;
            chi2 += (*c as f64 - expect).powi(2) / expect;
        }
        let dof = (counts.len() - 1) as f64;
        let z = 3.0902; // one-sided 0.001 normal quantile
        let crit = dof * (1.0 - 2.0 / (9.0 * dof) + z * (2.0 / (9.0 * dof)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2} vs crit {crit}");
    }

    #[test]
    fn heavy_regime_density_matches_site_vacancy() {
        // Mean vacant fraction over samples ~ exp(-u/g(0)) for a small box.
        let mut g = table();
        let g0 = g.origin().unwrap();
        let u = 3.0;
        let cfg = CloudConfig::new(GridBox::cube(3, 1).unwrap(), u, 31)
            .with_mode(EscapeMode::Resample)
            .with_shell(8);
        let sampler = CloudSampler::new(&mut g, cfg).unwrap();
        let trials = 4000;
        let mut density_sum = 0.0;
        for i in 0..trials {
            let occ = sampler.sample(i).unwrap();
            let vac = occ.window().len() - occ.covered_count(u);
            density_sum += vac as f64 / occ.window().len() as f64;
        }
        let mean = density_sum / trials as f64;
        let want = (-u / g0).exp();
        assert!(
            (mean - want).abs() < 0.01,
            "density {mean} vs site vacancy {want}"
        );
    }
}
