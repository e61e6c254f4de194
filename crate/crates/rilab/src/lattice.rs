//! Lattice geometry: points of `Z^d`, finite sets with boundary structure,
//! axis-aligned box windows and bit masks over them.
//!
//! Points are plain coordinate vectors. Dimension is a runtime value (the
//! model is studied across d = 3..~30), so no fixed-arity point type is used;
//! functions that combine several points check dimensions in debug builds.

use std::collections::HashMap;

use crate::{Error, Result};

pub type Coord = i64;
pub type Point = Vec<Coord>;

/// Smallest dimension in which simple random walk is transient; everything in
/// this crate requires it.
pub const MIN_DIM: usize = 3;

pub fn check_dim(dim: usize) -> Result<()> {
    if dim < MIN_DIM {
        return Err(Error::precondition(format!(
            "dimension must be at least {MIN_DIM}, got {dim}"
        )));
    }
    Ok(())
}

/// Sup norm `|x|_inf`.
pub fn linf_norm(x: &[Coord]) -> Coord {
    x.iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// Sup-norm distance between two points.
pub fn linf_dist(x: &[Coord], y: &[Coord]) -> Coord {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .max()
        .unwrap_or(0)
}

/// Squared Euclidean norm.
pub fn euclid_norm_sq(x: &[Coord]) -> i128 {
    x.iter().map(|&c| (c as i128) * (c as i128)).sum()
}

pub fn sub(x: &[Coord], y: &[Coord]) -> Point {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Canonical representative of a point under the symmetries of the walk:
/// coordinate permutations and sign flips. Absolute values, sorted
/// descending. The Green function is constant on these orbits.
pub fn canonical(x: &[Coord]) -> Point {
    let mut c: Point = x.iter().map(|v| v.abs()).collect();
    c.sort_unstable_by(|a, b| b.cmp(a));
    c
}

/// The 2d nearest neighbors of `x`, in a fixed deterministic order
/// (+e_1, -e_1, +e_2, ...).
pub fn neighbors(x: &[Coord]) -> impl Iterator<Item = Point> + '_ {
    (0..x.len()).flat_map(move |axis| {
        [1, -1].into_iter().map(move |s| {
            let mut n = x.to_vec();
            n[axis] += s;
            n
        })
    })
}

/// A finite subset of `Z^d` with membership index and boundary structure.
///
/// Points are stored sorted lexicographically and deduplicated, so two sets
/// with equal membership compare equal and iterate identically.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSet {
    dim: usize,
    points: Vec<Point>,
    index: HashMap<Point, usize>,
}

impl FiniteSet {
    pub fn new(dim: usize, mut points: Vec<Point>) -> Result<Self> {
        check_dim(dim)?;
        if points.is_empty() {
            return Err(Error::precondition("finite set must be nonempty"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::precondition(format!(
                    "point of arity {} in a dimension-{dim} set",
                    p.len()
                )));
            }
        }
        points.sort_unstable();
        points.dedup();
        let index = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Ok(FiniteSet { dim, points, index })
    }

    /// Centered cube `B(0, r) = [-r, r]^d`.
    pub fn cube(dim: usize, r: Coord) -> Result<Self> {
        check_dim(dim)?;
        if r < 0 {
            return Err(Error::precondition("cube radius must be nonnegative"));
        }
        let side = 2 * r + 1;
        if (side as u128).pow(dim as u32) > 20_000_000 {
            return Err(Error::precondition(format!(
                "cube B(0,{r}) in dimension {dim} is too large to enumerate"
            )));
        }
        let mut points = Vec::new();
        let mut p = vec![-r; dim];
        loop {
            points.push(p.clone());
            let mut axis = 0;
            loop {
                if axis == dim {
                    return FiniteSet::new(dim, points);
                }
                p[axis] += 1;
                if p[axis] <= r {
                    break;
                }
                p[axis] = -r;
                axis += 1;
            }
        }
    }

    /// Centered sup-norm sphere `S(0, r) = { x : |x|_inf = r }`.
    pub fn sphere(dim: usize, r: Coord) -> Result<Self> {
        if r == 0 {
            return FiniteSet::new(dim, vec![vec![0; dim]]);
        }
        let cube = FiniteSet::cube(dim, r)?;
        let shell: Vec<Point> = cube
            .points
            .into_iter()
            .filter(|p| linf_norm(p) == r)
            .collect();
        FiniteSet::new(dim, shell)
    }

    /// Axis-aligned segment `{ lo, lo + e_1, ..., lo + (len-1) e_1 }`.
    pub fn segment(dim: usize, lo: Point, len: usize) -> Result<Self> {
        check_dim(dim)?;
        if len == 0 {
            return Err(Error::precondition("segment length must be positive"));
        }
        let points = (0..len)
            .map(|i| {
                let mut p = lo.clone();
                p[0] += i as Coord;
                p
            })
            .collect();
        FiniteSet::new(dim, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn contains(&self, p: &[Coord]) -> bool {
        self.index.contains_key(p)
    }

    pub fn position(&self, p: &[Coord]) -> Option<usize> {
        self.index.get(p).copied()
    }

    /// Indices of points with at least one nearest neighbor outside the set.
    /// Any nearest-neighbor path entering the set from outside first lands
    /// here, so hitting this subset is equivalent to hitting the whole set
    /// for walks started outside.
    pub fn inner_boundary(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| neighbors(p).any(|n| !self.contains(&n)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Geometric center of the bounding box, rounded to a lattice point.
    pub fn center(&self) -> Point {
        (0..self.dim)
            .map(|axis| {
                let lo = self.points.iter().map(|p| p[axis]).min().unwrap();
                let hi = self.points.iter().map(|p| p[axis]).max().unwrap();
                // Round toward lo; for symmetric sets this is the exact center.
                lo + (hi - lo) / 2
            })
            .collect()
    }

    /// Euclidean circumradius about [`center`](Self::center), rounded up.
    pub fn circumradius(&self) -> Coord {
        let c = self.center();
        let max_sq = self
            .points
            .iter()
            .map(|p| euclid_norm_sq(&sub(p, &c)))
            .max()
            .unwrap();
        (max_sq as f64).sqrt().ceil() as Coord
    }

    /// True if the set is exactly the cube `B(center, r)` for some r.
    pub fn is_centered_cube(&self) -> Option<Coord> {
        let c = self.center();
        let r = self.points.iter().map(|p| linf_dist(p, &c)).max().unwrap();
        let side = (2 * r + 1) as u128;
        if side.pow(self.dim as u32) == self.points.len() as u128 {
            Some(r)
        } else {
            None
        }
    }

    /// True if the set is exactly the sup-norm sphere `S(center, r)`.
    pub fn is_centered_sphere(&self) -> Option<Coord> {
        let c = self.center();
        let r = linf_dist(&self.points[0], &c);
        if r == 0 {
            return None;
        }
        let side = (2 * r + 1) as u128;
        let inner = (2 * r - 1) as u128;
        let count = side.pow(self.dim as u32) - inner.pow(self.dim as u32);
        if count == self.points.len() as u128 && self.points.iter().all(|p| linf_dist(p, &c) == r) {
            Some(r)
        } else {
            None
        }
    }
}

/// Axis-aligned box of lattice sites, the index space for windows, masks and
/// occupancy grids. Sites are enumerated row-major with the first axis
/// fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridBox {
    lo: Point,
    extent: Vec<u32>,
    len: usize,
}

impl GridBox {
    pub fn new(lo: Point, extent: Vec<u32>) -> Result<Self> {
        check_dim(lo.len())?;
        if extent.len() != lo.len() {
            return Err(Error::precondition("box corner and extent arity differ"));
        }
        if extent.contains(&0) {
            return Err(Error::precondition("box extent must be positive"));
        }
        let len: u128 = extent.iter().map(|&e| e as u128).product();
        if len > 1 << 31 {
            return Err(Error::precondition(format!(
                "box with {len} sites is too large"
            )));
        }
        Ok(GridBox {
            lo,
            extent,
            len: len as usize,
        })
    }

    /// Centered cube `B(0, r)` as a grid.
    pub fn cube(dim: usize, r: Coord) -> Result<Self> {
        GridBox::new(vec![-r; dim], vec![(2 * r + 1) as u32; dim])
    }

    /// Thickness-one plate: `[lo_1, lo_1+n_1) x [lo_2, lo_2+n_2) x {0}^(d-2)`.
    pub fn plate(dim: usize, lo2: [Coord; 2], n2: [u32; 2]) -> Result<Self> {
        check_dim(dim)?;
        let mut lo = vec![0; dim];
        let mut extent = vec![1; dim];
        lo[0] = lo2[0];
        lo[1] = lo2[1];
        extent[0] = n2[0];
        extent[1] = n2[1];
        GridBox::new(lo, extent)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self) -> &[Coord] {
        &self.lo
    }

    pub fn extent(&self) -> &[u32] {
        &self.extent
    }

    pub fn contains(&self, p: &[Coord]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(&self.lo)
                .zip(&self.extent)
                .all(|((&c, &l), &e)| c >= l && c < l + e as Coord)
    }

    pub fn index(&self, p: &[Coord]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let mut idx = 0usize;
        for axis in (0..self.dim()).rev() {
            idx = idx * self.extent[axis] as usize + (p[axis] - self.lo[axis]) as usize;
        }
        Some(idx)
    }

    pub fn point(&self, mut idx: usize) -> Point {
        debug_assert!(idx < self.len);
        let mut p = self.lo.clone();
        for (coord, &extent) in p.iter_mut().zip(&self.extent) {
            let e = extent as usize;
            *coord += (idx % e) as Coord;
            idx /= e;
        }
        p
    }

    pub fn iter_points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len).map(|i| self.point(i))
    }

    /// All sites as a [`FiniteSet`].
    pub fn to_finite_set(&self) -> Result<FiniteSet> {
        FiniteSet::new(self.dim(), self.iter_points().collect())
    }

    pub fn center(&self) -> Point {
        self.lo
            .iter()
            .zip(&self.extent)
            .map(|(&l, &e)| l + (e as Coord - 1) / 2)
            .collect()
    }

    pub fn circumradius(&self) -> Coord {
        let c = self.center();
        let far_sq: i128 = (0..self.dim())
            .map(|axis| {
                let lo = self.lo[axis];
                let hi = self.lo[axis] + self.extent[axis] as Coord - 1;
                let d = (c[axis] - lo).max(hi - c[axis]) as i128;
                d * d
            })
            .sum();
        (far_sq as f64).sqrt().ceil() as Coord
    }
}

/// Bit mask over a [`GridBox`], word-packed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    grid: GridBox,
    words: Vec<u64>,
}

impl BitMask {
    pub fn new(grid: GridBox) -> Self {
        let words = vec![0u64; grid.len().div_ceil(64)];
        BitMask { grid, words }
    }

    pub fn grid(&self) -> &GridBox {
        &self.grid
    }

    pub fn get(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        let (w, b) = (idx / 64, idx % 64);
        if value {
            self.words[w] |= 1 << b;
        } else {
            self.words[w] &= !(1 << b);
        }
    }

    pub fn get_point(&self, p: &[Coord]) -> Option<bool> {
        self.grid.index(p).map(|i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// True on every site where `other` is true. Both masks must share a grid.
    pub fn contains_mask(&self, other: &BitMask) -> bool {
        debug_assert_eq!(self.grid, other.grid);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & b == *b)
    }
}
