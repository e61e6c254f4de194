//! Potential theory for finite subsets of `Z^d`: equilibrium measures,
//! capacities, hitting probabilities and the vacancy laws they induce.
//!
//! The equilibrium measure `e_K` of a finite set `K` is supported on the
//! inner boundary and satisfies `sum_y g(x - y) e_K(y) = 1` for every
//! `x` in `K`; its total mass is the capacity. Because the restriction of
//! the Green matrix to any finite point set is positive definite, `e_K`
//! is obtained from a dense linear solve on the inner boundary. Sets that
//! are closed under coordinate permutations and sign flips are reduced to
//! one unknown per symmetry orbit first, which brings window boundaries
//! with ~10^4 sites down to a few hundred unknowns.
//!
//! On top of the solver sit the closed-form laws of the vacant set: a set
//! is vacant with probability `exp(-u cap(K))`, finite-dimensional
//! marginals follow by inclusion-exclusion, and two-point covariances have
//! an explicit expression through the pair capacity.

use std::collections::{HashMap, HashSet};

use nalgebra::{DMatrix, DVector};

use crate::green::GreenTable;
use crate::lattice::{canonical, linf_dist, linf_norm, sub, Coord, FiniteSet, Point};
use crate::{Error, Result};

/// Largest dense linear system attempted (after symmetry reduction).
pub const MAX_DENSE_SOLVE: usize = 4000;

/// Largest number of "occupied" constraints in exact finite-dimensional
/// probabilities; inclusion-exclusion is exponential in this count.
pub const MAX_OCCUPIED: usize = 20;

/// Equilibrium measure and capacity of a finite set.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    set: FiniteSet,
    support: Vec<Point>,
    weights: Vec<f64>,
    capacity: f64,
}

impl Equilibrium {
    /// Solve for the equilibrium measure of `set`.
    pub fn compute(green: &mut GreenTable, set: &FiniteSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::precondition("equilibrium of the empty set"));
        }
        if set.dim() != green.dim() {
            return Err(Error::precondition(format!(
                "set dimension {} does not match green table dimension {}",
                set.dim(),
                green.dim()
            )));
        }
        let boundary: Vec<Point> = set
            .inner_boundary()
            .into_iter()
            .map(|i| set.points()[i].clone())
            .collect();

        let weights = if let Some(sym) = BoxSymmetry::detect(set) {
            solve_orbit_reduced(green, &boundary, &sym)?
        } else {
            if boundary.len() > MAX_DENSE_SOLVE {
                return Err(Error::precondition(format!(
                    "boundary of {} sites exceeds the dense solve limit {MAX_DENSE_SOLVE} \
                     and the set has no coordinate symmetry to exploit",
                    boundary.len()
                )));
            }
            let matrix = green_matrix(green, &boundary, &boundary)?;
            solve_spd(matrix, DVector::from_element(boundary.len(), 1.0))?
        };

        let mut clean = Vec::with_capacity(weights.len());
        for &w in &weights {
            if w < -1e-8 {
                return Err(Error::numerical(format!(
                    "equilibrium weight {w} is significantly negative"
                )));
            }
            clean.push(w.max(0.0));
        }
        let capacity = clean.iter().sum();
        Ok(Equilibrium {
            set: set.clone(),
            support: boundary,
            weights: clean,
            capacity,
        })
    }

    /// Total mass of the equilibrium measure.
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Support points (the inner boundary of the set), in set order.
    pub fn support(&self) -> &[Point] {
        &self.support
    }

    /// Weights aligned with [`Self::support`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set(&self) -> &FiniteSet {
        &self.set
    }

    /// Probability that a walk from `x` ever hits the set,
    /// `sum_y e_K(y) g(x - y)`; identically 1 inside the set.
    pub fn hitting_probability(&self, green: &mut GreenTable, x: &[Coord]) -> Result<f64> {
        if self.set.contains(x) {
            return Ok(1.0);
        }
        green.fill(self.support.iter().map(|y| sub(x, y)))?;
        let mut acc = 0.0;
        for (y, &w) in self.support.iter().zip(&self.weights) {
            acc += w * green.value(&sub(x, y))?;
        }
        Ok(acc.clamp(0.0, 1.0))
    }

    /// Upper bound on the hitting probability from any point at sup-norm
    /// distance at least `gap` from every support point:
    /// `cap(K) g(gap, 0, ..., 0)`. Relies on the Green function being
    /// maximal on the axis among points of equal sup norm.
    pub fn hitting_bound_beyond(&self, green: &mut GreenTable, gap: Coord) -> Result<f64> {
        if gap <= 0 {
            return Ok(1.0);
        }
        let mut axis = vec![0 as Coord; self.set.dim()];
        axis[0] = gap;
        Ok((self.capacity * green.value(&axis)?).min(1.0))
    }

    /// Exact maximum of the hitting probability over all points at sup-norm
    /// distance exactly `radius` from `center`. Enumerates one point per
    /// symmetry class when the support is symmetric about `center`;
    /// otherwise the whole sphere (guarded).
    pub fn max_hitting_on_sphere(
        &self,
        green: &mut GreenTable,
        center: &[Coord],
        radius: Coord,
    ) -> Result<f64> {
        let dim = self.set.dim();
        let centered: Vec<Point> = self.support.iter().map(|y| sub(y, center)).collect();
        let symmetric = {
            let pts: HashSet<&Point> = centered.iter().collect();
            centered.iter().all(|p| {
                signed_permutation_generators(p)
                    .iter()
                    .all(|img| pts.contains(img))
            })
        };
        let sphere = FiniteSet::sphere(dim, radius)?;
        let probes: Vec<Point> = if symmetric {
            let mut reps: HashSet<Point> = HashSet::new();
            sphere
                .points()
                .iter()
                .filter(|p| reps.insert(canonical(p)))
                .cloned()
                .collect()
        } else {
            sphere.points().to_vec()
        };
        if probes.len().saturating_mul(self.support.len()) > 50_000_000 {
            return Err(Error::precondition(
                "sphere scan too large; use hitting_bound_beyond instead",
            ));
        }
        let mut diffs = Vec::new();
        for p in &probes {
            let abs: Point = p.iter().zip(center).map(|(a, c)| a + c).collect();
            for y in &self.support {
                diffs.push(sub(&abs, y));
            }
        }
        green.fill(diffs)?;
        let mut best = 0.0f64;
        for p in &probes {
            let abs: Point = p.iter().zip(center).map(|(a, c)| a + c).collect();
            if self.set.contains(&abs) {
                return Err(Error::precondition(
                    "probe sphere intersects the set itself",
                ));
            }
            let mut acc = 0.0;
            for (y, &w) in self.support.iter().zip(&self.weights) {
                acc += w * green.value(&sub(&abs, y))?;
            }
            best = best.max(acc);
        }
        Ok(best.min(1.0))
    }
}

/// Capacity of a single site, `1 / g(0)`.
pub fn capacity_point(green: &mut GreenTable) -> Result<f64> {
    Ok(1.0 / green.origin()?)
}

/// Capacity of a two-point set `{x, y}`, `2 / (g(0) + g(x - y))`.
pub fn capacity_pair(green: &mut GreenTable, x: &[Coord], y: &[Coord]) -> Result<f64> {
    if x == y {
        return capacity_point(green);
    }
    let g0 = green.origin()?;
    let g = green.value(&sub(x, y))?;
    Ok(2.0 / (g0 + g))
}

/// Probability that a set of capacity `capacity` is entirely vacant at
/// intensity `u`.
pub fn vacancy_probability(u: f64, capacity: f64) -> Result<f64> {
    if u.is_nan() || u < 0.0 || capacity.is_nan() || capacity < 0.0 {
        return Err(Error::precondition(format!(
            "vacancy probability needs u >= 0 and capacity >= 0, got u={u}, cap={capacity}"
        )));
    }
    Ok((-u * capacity).exp())
}

/// Exact probability that every point of `vacant` is vacant and every point
/// of `occupied` is covered, at intensity `u`. Inclusion-exclusion over
/// subsets of `occupied`, one capacity solve per subset.
pub fn finite_dim_vacancy(
    green: &mut GreenTable,
    vacant: &[Point],
    occupied: &[Point],
    u: f64,
) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::precondition("negative intensity"));
    }
    let dim = green.dim();
    for p in vacant.iter().chain(occupied) {
        if p.len() != dim {
            return Err(Error::precondition("point arity mismatch"));
        }
    }
    let vac: HashSet<&Point> = vacant.iter().collect();
    let mut occ: Vec<&Point> = Vec::new();
    let mut seen = HashSet::new();
    for p in occupied {
        if vac.contains(p) {
            return Ok(0.0); // a site cannot be both vacant and covered
        }
        if seen.insert(p) {
            occ.push(p);
        }
    }
    if occ.len() > MAX_OCCUPIED {
        return Err(Error::precondition(format!(
            "{} occupied constraints exceed the exact limit {MAX_OCCUPIED}",
            occ.len()
        )));
    }
    let base: Vec<Point> = vac.iter().map(|p| (*p).clone()).collect();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << occ.len()) {
        let mut pts = base.clone();
        for (i, p) in occ.iter().enumerate() {
            if mask >> i & 1 == 1 {
                pts.push((*p).clone());
            }
        }
        let term = if pts.is_empty() {
            1.0
        } else {
            let set = FiniteSet::new(dim, pts)?;
            let eq = Equilibrium::compute(green, &set)?;
            vacancy_probability(u, eq.capacity())?
        };
        total += if mask.count_ones() % 2 == 0 {
            term
        } else {
            -term
        };
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Covariance of the vacancy indicators of two sites.
pub fn pair_covariance(green: &mut GreenTable, u: f64, x: &[Coord], y: &[Coord]) -> Result<f64> {
    let both = vacancy_probability(u, capacity_pair(green, x, y)?)?;
    let single = vacancy_probability(u, capacity_point(green)?)?;
    Ok(both - single * single)
}

/// Leading large-separation form of [`pair_covariance`]:
/// `(2u / g(0)^2) g(x - y) exp(-2u / g(0))`.
pub fn pair_covariance_decay(
    green: &mut GreenTable,
    u: f64,
    x: &[Coord],
    y: &[Coord],
) -> Result<f64> {
    let g0 = green.origin()?;
    let g = green.value(&sub(x, y))?;
    Ok(2.0 * u * g / (g0 * g0) * (-2.0 * u / g0).exp())
}

/// Two-sided sandwich for the hitting probability of `set` from `x` that
/// avoids the equilibrium solve:
/// `sum_y g(x-y) / sup_z sum_y g(z-y) <= P <= sum_y g(x-y) / inf_z sum_y g(z-y)`
/// with `z` ranging over the set. Returns `(lower, upper)` clamped to [0,1].
pub fn hitting_bounds(green: &mut GreenTable, set: &FiniteSet, x: &[Coord]) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::precondition("hitting bounds of the empty set"));
    }
    if set.contains(x) {
        return Ok((1.0, 1.0));
    }
    let probes: Vec<&Point> = if is_signed_permutation_symmetric(set) {
        let mut reps: HashSet<Point> = HashSet::new();
        set.points()
            .iter()
            .filter(|p| reps.insert(canonical(p)))
            .collect()
    } else {
        set.points().iter().collect()
    };
    if probes.len().saturating_mul(set.len()) > 20_000_000 {
        return Err(Error::precondition("set too large for the potential scan"));
    }
    let mut diffs: Vec<Point> = Vec::with_capacity(probes.len() * set.len());
    for z in &probes {
        for y in set.points() {
            diffs.push(sub(z, y));
        }
    }
    diffs.extend(set.points().iter().map(|y| sub(x, y)));
    green.fill(diffs)?;

    let mut sup = f64::MIN;
    let mut inf = f64::MAX;
    for z in &probes {
        let mut s = 0.0;
        for y in set.points() {
            s += green.value(&sub(z, y))?;
        }
        sup = sup.max(s);
        inf = inf.min(s);
    }
    let mut num = 0.0;
    for y in set.points() {
        num += green.value(&sub(x, y))?;
    }
    Ok(((num / sup).clamp(0.0, 1.0), (num / inf).clamp(0.0, 1.0)))
}

/// First-entrance kernel of a finite window: for an outside point `x`,
/// the sub-probability distribution of the first point of the window the
/// walk steps on, obtained by solving the same Green system as the
/// equilibrium measure with right-hand side `g(x - .)`.
#[derive(Debug)]
pub struct EntranceKernel {
    boundary: Vec<Point>,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    green: crate::green::FrozenGreenTable,
    membership: HashSet<Point>,
}

impl EntranceKernel {
    /// Build the kernel for `set`. `probes` lists outside points the kernel
    /// will be asked about, so their Green differences are memoized ahead
    /// of the frozen snapshot.
    pub fn new(green: &mut GreenTable, set: &FiniteSet, probes: &[Point]) -> Result<Self> {
        let boundary: Vec<Point> = set
            .inner_boundary()
            .into_iter()
            .map(|i| set.points()[i].clone())
            .collect();
        if boundary.len() > MAX_DENSE_SOLVE {
            return Err(Error::precondition(format!(
                "entrance kernel boundary {} exceeds limit {MAX_DENSE_SOLVE}",
                boundary.len()
            )));
        }
        let matrix = green_matrix(green, &boundary, &boundary)?;
        let mut diffs = Vec::with_capacity(probes.len() * boundary.len());
        for x in probes {
            for y in &boundary {
                diffs.push(sub(x, y));
            }
        }
        green.fill(diffs)?;
        let factor = nalgebra::Cholesky::new(matrix)
            .ok_or_else(|| Error::numerical("green matrix lost positive definiteness"))?;
        Ok(EntranceKernel {
            boundary,
            factor,
            green: green.clone().freeze(),
            membership: set.points().iter().cloned().collect(),
        })
    }

    pub fn boundary(&self) -> &[Point] {
        &self.boundary
    }

    /// Entry distribution from `x`: weights aligned with [`Self::boundary`]
    /// summing to the hitting probability (returned second).
    pub fn entry_distribution(&self, x: &[Coord]) -> Result<(Vec<f64>, f64)> {
        if self.membership.contains(x) {
            return Err(Error::precondition(
                "entrance kernel probed from inside the window",
            ));
        }
        let mut rhs = DVector::zeros(self.boundary.len());
        for (i, y) in self.boundary.iter().enumerate() {
            rhs[i] = self.green.value(&sub(x, y))?;
        }
        let sol = self.factor.solve(&rhs);
        let mut weights: Vec<f64> = sol.iter().map(|&w| w.max(0.0)).collect();
        let mut h: f64 = weights.iter().sum();
        if h > 1.0 {
            if h > 1.0 + 1e-6 {
                return Err(Error::numerical(format!(
                    "entrance mass {h} exceeds 1 beyond numerical tolerance"
                )));
            }
            for w in &mut weights {
                *w /= h;
            }
            h = 1.0;
        }
        Ok((weights, h))
    }
}

/// Whether the set is invariant under coordinate permutations and sign
/// flips (the symmetry group of the lattice fixing the origin).
pub fn is_signed_permutation_symmetric(set: &FiniteSet) -> bool {
    set.points().iter().all(|p| {
        signed_permutation_generators(p)
            .iter()
            .all(|img| set.contains(img))
    })
}

/// Reflection and permutation symmetry of a set about the centre of its
/// bounding box, detected from the point data.
///
/// Work in doubled coordinates `q_j = 2 p_j - (lo_j + hi_j)`, which centre
/// the bounding box at the origin even when a side length is even. The
/// candidate group is generated by the reflection of each axis and by the
/// transposition of any two axes whose bounding-box extents agree. Equal
/// extents force `lo_j + hi_j ≡ lo_k + hi_k (mod 2)`, so every generator
/// maps lattice points to lattice points. A detected symmetry requires all
/// candidate generators to fix the set; orbits are then labelled by taking
/// absolute values of `q` and sorting descending within each equal-extent
/// axis class.
pub struct BoxSymmetry {
    /// Per-axis `lo_j + hi_j` of the bounding box.
    shift: Vec<Coord>,
    /// Axis indices grouped by bounding-box extent, in axis order.
    classes: Vec<Vec<usize>>,
}

impl BoxSymmetry {
    /// Detect the full box symmetry of `set`, or `None` if any candidate
    /// generator fails to fix the set (partial symmetry is not exploited).
    pub fn detect(set: &FiniteSet) -> Option<Self> {
        let points = set.points();
        let first = points.first()?;
        let dim = first.len();
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in points {
            for j in 0..dim {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        let shift: Vec<Coord> = (0..dim).map(|j| lo[j] + hi[j]).collect();

        let mut classes: Vec<(Coord, Vec<usize>)> = Vec::new();
        for j in 0..dim {
            let extent = hi[j] - lo[j];
            match classes.iter_mut().find(|(e, _)| *e == extent) {
                Some((_, axes)) => axes.push(j),
                None => classes.push((extent, vec![j])),
            }
        }
        let classes: Vec<Vec<usize>> = classes.into_iter().map(|(_, axes)| axes).collect();

        // Closure under each axis reflection: p_j -> lo_j + hi_j - p_j.
        for j in 0..dim {
            for p in points {
                let mut r = p.clone();
                r[j] = shift[j] - p[j];
                if !set.contains(&r) {
                    return None;
                }
            }
        }
        // Closure under adjacent transpositions within each extent class;
        // these generate all permutations of the class.
        for axes in &classes {
            for w in axes.windows(2) {
                let (a, b) = (w[0], w[1]);
                let delta = (shift[a] - shift[b]) / 2;
                for p in points {
                    let mut r = p.clone();
                    r[a] = p[b] + delta;
                    r[b] = p[a] - delta;
                    if !set.contains(&r) {
                        return None;
                    }
                }
            }
        }
        Some(Self { shift, classes })
    }

    /// Orbit label of `p`: absolute doubled coordinates, sorted descending
    /// within each equal-extent axis class. Two points share a label if and
    /// only if the detected group maps one to the other.
    pub fn orbit_key(&self, p: &[Coord]) -> Point {
        let mut q: Point = p
            .iter()
            .zip(&self.shift)
            .map(|(&a, &s)| (2 * a - s).abs())
            .collect();
        for axes in &self.classes {
            let mut vals: Vec<Coord> = axes.iter().map(|&j| q[j]).collect();
            vals.sort_unstable_by(|a, b| b.cmp(a));
            for (&j, v) in axes.iter().zip(vals) {
                q[j] = v;
            }
        }
        q
    }
}

fn signed_permutation_generators(p: &[Coord]) -> Vec<Point> {
    let mut out = Vec::with_capacity(p.len());
    // Adjacent transpositions and one sign flip generate the whole group.
    for i in 0..p.len() - 1 {
        let mut q = p.to_vec();
        q.swap(i, i + 1);
        out.push(q);
    }
    let mut q = p.to_vec();
    q[0] = -q[0];
    out.push(q);
    out
}

fn green_matrix(green: &mut GreenTable, rows: &[Point], cols: &[Point]) -> Result<DMatrix<f64>> {
    let mut diffs = Vec::with_capacity(rows.len() * cols.len());
    for a in rows {
        for b in cols {
            diffs.push(sub(a, b));
        }
    }
    green.fill(diffs)?;
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            m[(i, j)] = green.value(&sub(a, b))?;
        }
    }
    Ok(m)
}

fn solve_spd(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    if let Some(chol) = nalgebra::Cholesky::new(matrix.clone()) {
        return Ok(chol.solve(&rhs).iter().copied().collect());
    }
    let lu = matrix.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::numerical(format!("singular {n}x{n} green system")))?;
    Ok(sol.iter().copied().collect())
}

/// Equilibrium weights on a symmetric boundary via one unknown per symmetry
/// orbit. The reduced system is solved with LU (it is not symmetric after
/// summing columns over orbits).
fn solve_orbit_reduced(
    green: &mut GreenTable,
    boundary: &[Point],
    sym: &BoxSymmetry,
) -> Result<Vec<f64>> {
    let mut orbit_of: Vec<usize> = Vec::with_capacity(boundary.len());
    let mut orbit_index: HashMap<Point, usize> = HashMap::new();
    let mut reps: Vec<Point> = Vec::new();
    for p in boundary {
        let key = sym.orbit_key(p);
        let id = *orbit_index.entry(key).or_insert_with(|| {
            reps.push(p.clone());
            reps.len() - 1
        });
        orbit_of.push(id);
    }
    let m = reps.len();
    if m > MAX_DENSE_SOLVE {
        return Err(Error::precondition(format!(
            "{m} symmetry orbits exceed the dense solve limit {MAX_DENSE_SOLVE}"
        )));
    }

    let mut diffs = Vec::with_capacity(m * boundary.len());
    for r in &reps {
        for y in boundary {
            diffs.push(sub(r, y));
        }
    }
    green.fill(diffs)?;

    let mut a = DMatrix::zeros(m, m);
    for (i, r) in reps.iter().enumerate() {
        for (k, y) in boundary.iter().enumerate() {
            a[(i, orbit_of[k])] += green.value(&sub(r, y))?;
        }
    }
    let rhs = DVector::from_element(m, 1.0);
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("singular orbit-reduced green system"))?;
    Ok(orbit_of.iter().map(|&id| sol[id]).collect())
}

/// Sup-norm distance from `x` to the nearest point of `set`.
pub fn linf_distance_to_set(set: &FiniteSet, x: &[Coord]) -> Coord {
    set.points()
        .iter()
        .map(|p| linf_dist(p, x))
        .min()
        .unwrap_or(Coord::MAX)
}

/// Sup-norm radius of the smallest origin-centered ball containing `set`.
pub fn linf_radius(set: &FiniteSet) -> Coord {
    set.points().iter().map(|p| linf_norm(p)).max().unwrap_or(0)
}
