//! Exact integer scale recursion and the inequalities propagated along it.
//!
//! A run of the multi-scale argument is driven by a rapidly growing sequence
//! of box sides: `L_{n+1} = ell_n * L_n` with `ell_n = 100 * floor(L_n^a)`
//! and `a = 1/(100 d)`. Everything here that can be checked in integers is
//! checked in integers (big ones — the scales overflow `u64` after a few
//! steps); the remaining inequalities are evaluated in log space through
//! [`big_ln`], which is exact to f64 roundoff even for scales with millions
//! of bits.
//!
//! Two induction verifiers consume measured crossing probabilities. They
//! never assume the data satisfies the recursion: the data check is reported
//! separately from the closure check, which plugs the worst state allowed by
//! the induction hypothesis into the recursion and asks whether the
//! hypothesis survives at the next scale.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::check_dim;

/// Largest integer `r` with `r^k <= x` (floor k-th root), exact.
pub fn integer_root(x: &BigUint, k: u32) -> Result<BigUint> {
    if k == 0 {
        return Err(Error::precondition("zeroth root is undefined"));
    }
    if x.is_zero() || x.is_one() || k == 1 {
        return Ok(x.clone());
    }
    // Bracket by bit length: 2^(floor((bits-1)/k)) <= root < 2^(ceil(bits/k)).
    let bits = x.bits();
    let mut lo = BigUint::one() << ((bits - 1) / k as u64);
    let mut hi = (BigUint::one() << (bits / k as u64 + 1)) + BigUint::one();
    // Invariant: lo^k <= x < hi^k.
    while &lo + BigUint::one() < hi {
        let mid: BigUint = (&lo + &hi) >> 1;
        if mid.pow(k) <= *x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Natural logarithm of a positive big integer, accurate to f64 roundoff.
pub fn big_ln(x: &BigUint) -> Result<f64> {
    if x.is_zero() {
        return Err(Error::precondition("logarithm of zero"));
    }
    let bits = x.bits();
    if bits <= 53 {
        return Ok((x.to_u64().expect("fits by bit length") as f64).ln());
    }
    let shift = bits - 53;
    let top = (x >> shift).to_u64().expect("53 bits fit") as f64;
    Ok(top.ln() + shift as f64 * std::f64::consts::LN_2)
}

/// `ln(e^a + e^b)` without overflow.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// The integer scale ladder `L_0, L_1, ...` with its ratio sequence.
#[derive(Debug, Clone)]
pub struct ScaleSequence {
    dim: usize,
    scales: Vec<BigUint>,
    ratios: Vec<BigUint>,
}

impl ScaleSequence {
    /// Build `nmax + 1` scales starting from `L_0 = l0 >= 2`.
    ///
    /// `ratios[n]` holds `ell_n = 100 * floor(L_n^(1/(100 d)))`, defined for
    /// every built scale including the last, and `L_{n+1} = ell_n * L_n`
    /// exactly.
    pub fn new(dim: usize, l0: u64, nmax: usize) -> Result<Self> {
        check_dim(dim)?;
        if l0 < 2 {
            return Err(Error::precondition(format!(
                "base scale must be at least 2, got {l0}"
            )));
        }
        if nmax > 10_000 {
            return Err(Error::precondition(format!(
                "refusing to build {nmax} scale levels"
            )));
        }
        let root_order = 100 * dim as u32;
        let hundred = BigUint::from(100u32);
        let mut scales = Vec::with_capacity(nmax + 1);
        let mut ratios = Vec::with_capacity(nmax + 1);
        let mut l = BigUint::from(l0);
        for _ in 0..=nmax {
            let ell = integer_root(&l, root_order)? * &hundred;
            let next = &ell * &l;
            scales.push(l);
            ratios.push(ell);
            l = next;
        }
        Ok(Self {
            dim,
            scales,
            ratios,
        })
    }

    /// Lattice dimension the ladder was built for.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Growth-rate exponent `a = 1/(100 d)`.
    pub fn growth_exponent(&self) -> f64 {
        1.0 / (100.0 * self.dim as f64)
    }

    /// Number of built levels (`nmax + 1`).
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    /// Never empty: level 0 always exists.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Side length `L_n`.
    pub fn scale(&self, n: usize) -> &BigUint {
        &self.scales[n]
    }

    /// Ratio `ell_n` (`L_{n+1} = ell_n * L_n`).
    pub fn ratio(&self, n: usize) -> &BigUint {
        &self.ratios[n]
    }

    /// Exact check that `L_n >= L_0^((1+a)^n)` for every built level.
    ///
    /// Verified step by step as `L_{k+1}^(100 d) >= L_k^(100 d + 1)`, which
    /// is `L_{k+1} >= L_k^(1+a)` with both sides raised to the integer power
    /// `100 d`; chaining and the monotonicity of `x -> x^(1+a)` give the
    /// claim without ever forming the astronomically large right-hand side.
    pub fn verify_growth(&self) -> bool {
        let k = 100 * self.dim as u32;
        self.scales
            .windows(2)
            .all(|w| w[1].pow(k) >= w[0].pow(k + 1))
    }

    /// Natural logs of the scales, for inequality checks in log space.
    pub fn log_scales(&self) -> Result<Vec<f64>> {
        self.scales.iter().map(big_ln).collect()
    }

    /// Natural logs of the ratios.
    pub fn log_ratios(&self) -> Result<Vec<f64>> {
        self.ratios.iter().map(big_ln).collect()
    }
}

/// Intensity levels raised slightly at every scale step, with a certified
/// bound on their limit.
#[derive(Debug, Clone, Serialize)]
pub struct LevelTrack {
    /// `u_n` for every built scale level.
    pub levels: Vec<f64>,
    /// Certified upper bound on the natural log of the remaining growth
    /// factor past the last built level.
    pub tail_log_bound: f64,
    /// Certified upper bound on `u_infinity = lim u_n`.
    pub u_infinity_upper: f64,
}

/// Track `u_{n+1} = (1 + c1 * ell_n^-(d-2))^(r+1) * u_n` along the ladder.
///
/// The returned tail bound covers all omitted factors: using
/// `ell_k >= 50 L_k^a` (the floor loses at most half once the root is at
/// least one) and `L_{k+1} >= 100 L_k`, the omitted exponent sum is dominated
/// by a geometric series with ratio `100^(-a(d-2))` starting at the last
/// built scale.
pub fn track_levels(scales: &ScaleSequence, u0: f64, c1: f64, r: u32) -> Result<LevelTrack> {
    if !u0.is_finite() || u0 <= 0.0 {
        return Err(Error::precondition(format!("bad starting level {u0}")));
    }
    if !c1.is_finite() || c1 < 0.0 {
        return Err(Error::precondition(format!("bad level constant {c1}")));
    }
    let d = scales.dim() as f64;
    let a = scales.growth_exponent();
    let mut levels = Vec::with_capacity(scales.len());
    let mut u = u0;
    levels.push(u);
    for n in 0..scales.len() - 1 {
        let ell = scales
            .ratio(n)
            .to_f64()
            .ok_or_else(|| Error::numerical("scale ratio overflows f64"))?;
        u *= (1.0 + c1 * ell.powf(-(d - 2.0))).powi(r as i32 + 1);
        levels.push(u);
    }

    let last = scales.len() - 1;
    let ln_l_last = big_ln(scales.scale(last))?;
    let first_term = c1 * (50.0 * (a * ln_l_last).exp()).powf(-(d - 2.0));
    let rho = 100f64.powf(-a * (d - 2.0));
    let tail_log_bound = (r as f64 + 1.0) * first_term / (1.0 - rho);
    let u_infinity_upper = levels[last] * tail_log_bound.exp();
    Ok(LevelTrack {
        levels,
        tail_log_bound,
        u_infinity_upper,
    })
}

/// One named inequality check inside an induction report.
#[derive(Debug, Clone, Serialize)]
pub struct InductionCheck {
    /// Stable identifier of the check.
    pub name: String,
    /// Whether the inequality held everywhere it was evaluated.
    pub holds: bool,
    /// Human-readable account: worst margin and where it occurred.
    pub detail: String,
}

/// Outcome of running an induction verifier over a scale ladder.
#[derive(Debug, Clone, Serialize)]
pub struct InductionReport {
    /// Conjunction of all performed checks.
    pub holds: bool,
    /// The individual checks.
    pub checks: Vec<InductionCheck>,
}

impl InductionReport {
    fn from_checks(checks: Vec<InductionCheck>) -> Self {
        Self {
            holds: checks.iter().all(|c| c.holds),
            checks,
        }
    }

    /// The check with this name, if it was performed.
    pub fn check(&self, name: &str) -> Option<&InductionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Track the worst (largest) margin of a family of `lhs <= 0` checks.
struct WorstMargin {
    worst: f64,
    at: usize,
}

impl WorstMargin {
    fn new() -> Self {
        Self {
            worst: f64::NEG_INFINITY,
            at: 0,
        }
    }

    fn observe(&mut self, margin: f64, index: usize) {
        if margin > self.worst {
            self.worst = margin;
            self.at = index;
        }
    }

    fn into_check(self, name: &str) -> InductionCheck {
        InductionCheck {
            name: name.to_string(),
            holds: self.worst <= 0.0,
            detail: format!(
                "worst log-margin {:+.6e} at level {} (nonpositive means the inequality holds)",
                self.worst, self.at
            ),
        }
    }
}

fn check_measured_indices(measured: &[(usize, f64)], len: usize) -> Result<()> {
    for &(n, p) in measured {
        if n >= len {
            return Err(Error::precondition(format!(
                "measured level {n} beyond the built ladder (max {})",
                len - 1
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::precondition(format!(
                "measured probability {p} at level {n} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// Verify the vacant-crossing induction over the ladder.
///
/// Checks, in order:
/// - `parameter-threshold`: the integer requirement `(d-2) r >= 400 d^2` on
///   the seed-count exponent.
/// - `level-cap`: the tracked levels stay below `L_n^((d-2) a r / 2)`.
/// - `worst-case-propagation`: plugging the worst state allowed by the
///   hypothesis (`a_n = L_n^-1` at the level cap) into the recursion
///   `a_{n+1} <= (ell_{n+1}/ell_n)^(2(d-1)) a_n (a_n + c2 ell_n^(2(d-1))
///   u_n c3^r L_n^((d-2)(1-ar)))` still yields `a_{n+1} <= L_{n+1}^-1`.
/// - `data-consistency` (only when measurements are supplied): the measured
///   crossing probabilities `p_n` satisfy the hypothesis
///   `c2 ell_n^(2(d-1)) p_n <= L_n^-1` directly. This is a statement about
///   the data, kept separate from the closure of the induction step.
///
/// Every check is monotone in the constants: enlarging `c2` or `c3` can only
/// turn a passing report into a failing one, never the reverse.
pub fn verify_induction_vacant(
    scales: &ScaleSequence,
    track: &LevelTrack,
    r: u32,
    c2: f64,
    c3: f64,
    measured: &[(usize, f64)],
) -> Result<InductionReport> {
    if !c2.is_finite() || !c3.is_finite() || c2 <= 0.0 || c3 <= 0.0 {
        return Err(Error::precondition(format!(
            "bad constants c2={c2} c3={c3}"
        )));
    }
    if track.levels.len() != scales.len() {
        return Err(Error::precondition(
            "level track does not match the scale ladder",
        ));
    }
    check_measured_indices(measured, scales.len())?;
    let d = scales.dim() as f64;
    let a = scales.growth_exponent();
    let ln_l = scales.log_scales()?;
    let ln_ell = scales.log_ratios()?;
    let mut checks = Vec::new();

    let need = 400 * (scales.dim() as u64).pow(2);
    let have = (scales.dim() as u64 - 2) * r as u64;
    checks.push(InductionCheck {
        name: "parameter-threshold".into(),
        holds: have >= need,
        detail: format!("(d-2) r = {have}, threshold 400 d^2 = {need}"),
    });

    let cap_exp = (d - 2.0) * a * r as f64 / 2.0;
    let mut cap = WorstMargin::new();
    for (n, &u) in track.levels.iter().enumerate() {
        cap.observe(u.ln() - cap_exp * ln_l[n], n);
    }
    checks.push(cap.into_check("level-cap"));

    let mut prop = WorstMargin::new();
    for n in 0..scales.len() - 1 {
        let hypothesis = -ln_l[n];
        let level_cap = cap_exp * ln_l[n];
        let growth_term = c2.ln()
            + 2.0 * (d - 1.0) * ln_ell[n]
            + level_cap
            + r as f64 * c3.ln()
            + (d - 2.0) * (1.0 - a * r as f64) * ln_l[n];
        let inner = log_add_exp(hypothesis, growth_term);
        let next = 2.0 * (d - 1.0) * (ln_ell[n + 1] - ln_ell[n]) + hypothesis + inner;
        prop.observe(next - (-ln_l[n + 1]), n);
    }
    checks.push(prop.into_check("worst-case-propagation"));

    if !measured.is_empty() {
        let mut data = WorstMargin::new();
        for &(n, p) in measured {
            let lhs = if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                c2.ln() + 2.0 * (d - 1.0) * ln_ell[n] + p.ln()
            };
            data.observe(lhs - (-ln_l[n]), n);
        }
        checks.push(data.into_check("data-consistency"));
    }

    Ok(InductionReport::from_checks(checks))
}

/// Verify the covered-plane induction over the ladder (needs `d >= 7`).
///
/// Checks:
/// - `worst-case-propagation`: with `b_n = c5 ell_n^2 q_n` at the worst
///   allowed value `L_n^-1/2`, the recursion
///   `b_{n+1} <= c6 L_n^(2 a^2) (b_n^2 + L_n^-1)` keeps `b_{n+1}` at or
///   below `L_{n+1}^-1/2`; after substituting this reduces to
///   `2 c6 ell_n^1/2 L_n^(2 a^2 - 1/2) <= 1`.
/// - `data-consistency` (when measurements are supplied): the measured plane
///   crossing probabilities `q_n` satisfy `c5 ell_n^2 q_n <= L_n^-1/2`.
///
/// Monotone in `c5` and `c6` the same way the vacant verifier is monotone
/// in its constants.
pub fn verify_induction_planar(
    scales: &ScaleSequence,
    c5: f64,
    c6: f64,
    measured: &[(usize, f64)],
) -> Result<InductionReport> {
    if scales.dim() < 7 {
        return Err(Error::precondition(format!(
            "the planar induction needs dimension at least 7, got {}",
            scales.dim()
        )));
    }
    if !c5.is_finite() || !c6.is_finite() || c5 <= 0.0 || c6 <= 0.0 {
        return Err(Error::precondition(format!(
            "bad constants c5={c5} c6={c6}"
        )));
    }
    check_measured_indices(measured, scales.len())?;
    let a = scales.growth_exponent();
    let ln_l = scales.log_scales()?;
    let ln_ell = scales.log_ratios()?;
    let mut checks = Vec::new();

    let mut prop = WorstMargin::new();
    for n in 0..scales.len() - 1 {
        let lhs =
            std::f64::consts::LN_2 + c6.ln() + 0.5 * ln_ell[n] + (2.0 * a * a - 0.5) * ln_l[n];
        prop.observe(lhs, n);
    }
    checks.push(prop.into_check("worst-case-propagation"));

    if !measured.is_empty() {
        let mut data = WorstMargin::new();
        for &(n, q) in measured {
            let lhs = if q == 0.0 {
                f64::NEG_INFINITY
            } else {
                c5.ln() + 2.0 * ln_ell[n] + q.ln()
            };
            data.observe(lhs - (-0.5 * ln_l[n]), n);
        }
        checks.push(data.into_check("data-consistency"));
    }

    Ok(InductionReport::from_checks(checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn integer_root_is_exact_around_perfect_powers() {
        let mut rng = stream(31, 0, 0);
        for _ in 0..200 {
            let r = BigUint::from(rng.random_range(2u64..1_000_000));
            let k = rng.random_range(2u32..30);
            let power = r.pow(k);
            assert_eq!(integer_root(&power, k).unwrap(), r);
            assert_eq!(
                integer_root(&(&power - BigUint::one()), k).unwrap(),
                &r - BigUint::one()
            );
            assert_eq!(integer_root(&(&power + BigUint::one()), k).unwrap(), r);
        }
        assert_eq!(
            integer_root(&BigUint::from(0u32), 5).unwrap(),
            BigUint::zero()
        );
        assert!(integer_root(&BigUint::from(10u32), 0).is_err());
    }

    #[test]
    fn big_ln_matches_f64_and_scales_past_it() {
        for v in [1u64, 2, 1000, u64::MAX] {
            let got = big_ln(&BigUint::from(v)).unwrap();
            assert!((got - (v as f64).ln()).abs() < 1e-12);
        }
        // ln(2^100000) = 100000 ln 2, far outside f64 integer range.
        let big = BigUint::one() << 100_000;
        let got = big_ln(&big).unwrap();
        assert!((got - 100_000.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert!(big_ln(&BigUint::zero()).is_err());
    }

    #[test]
    fn ladder_recursion_is_exact_and_growth_holds() {
        for (dim, l0) in [(3usize, 2u64), (3, 10), (3, 1000), (7, 10), (18, 1000)] {
            let seq = ScaleSequence::new(dim, l0, 10).unwrap();
            assert_eq!(seq.len(), 11);
            for n in 0..10 {
                assert_eq!(seq.scale(n) * seq.ratio(n), *seq.scale(n + 1));
                // ell_n = 100 floor(L_n^a) by definition.
                let root = integer_root(seq.scale(n), 100 * dim as u32).unwrap();
                assert_eq!(*seq.ratio(n), root * BigUint::from(100u32));
            }
            assert!(seq.verify_growth(), "d={dim} L0={l0}");
        }
    }

    #[test]
    fn ratios_dominate_half_the_real_root() {
        // ell_n >= 50 L_n^a, the estimate behind the level tail bound.
        let seq = ScaleSequence::new(3, 57, 8).unwrap();
        let a = seq.growth_exponent();
        for n in 0..seq.len() {
            let ln_ell = big_ln(seq.ratio(n)).unwrap();
            let ln_l = big_ln(seq.scale(n)).unwrap();
            assert!(
                ln_ell >= 50f64.ln() + a * ln_l - 1e-12,
                "level {n}: {ln_ell} vs {}",
                50f64.ln() + a * ln_l
            );
        }
    }

    #[test]
    fn levels_increase_and_the_limit_bound_caps_them() {
        let seq = ScaleSequence::new(3, 1000, 12).unwrap();
        let track = track_levels(&seq, 0.5, 2.0, 3).unwrap();
        assert_eq!(track.levels.len(), 13);
        for w in track.levels.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(track.u_infinity_upper >= *track.levels.last().unwrap());
        assert!(track.tail_log_bound > 0.0);

        // A longer ladder never overshoots the certified limit bound.
        let longer = ScaleSequence::new(3, 1000, 40).unwrap();
        let more = track_levels(&longer, 0.5, 2.0, 3).unwrap();
        for &u in &more.levels[..13.min(more.levels.len())] {
            assert!(u <= track.u_infinity_upper * (1.0 + 1e-12));
        }
    }

    #[test]
    fn level_sequence_is_cauchy_in_dimension_seven() {
        let seq = ScaleSequence::new(7, 10, 25).unwrap();
        let track = track_levels(&seq, 1.0, 5.0, 10).unwrap();
        for n in 0..10 {
            let rel = (track.levels[n + 10] - track.levels[n]) / track.levels[n];
            assert!(rel < 1e-6, "levels still moving at n={n}: {rel}");
        }
        // The certified limit bound is looser than the pointwise drift (the
        // geometric tail ratio is close to 1 in low dimension) but still tiny.
        assert!(track.u_infinity_upper / track.levels[0] < 1.0 + 1e-5);
    }

    #[test]
    fn vacant_induction_passes_on_a_large_base_scale() {
        // (d-2) r = 400 d^2 exactly at d=18, r=8100.
        let seq = ScaleSequence::new(18, 1_000_000, 8).unwrap();
        let track = track_levels(&seq, 1.0, 1.0, 8100).unwrap();
        let measured = vec![(0usize, 1e-80), (1usize, 0.0)];
        let report = verify_induction_vacant(&seq, &track, 8100, 2.0, 1.0, &measured).unwrap();
        for check in &report.checks {
            assert!(check.holds, "{}: {}", check.name, check.detail);
        }
        assert!(report.holds);
        assert!(report.check("data-consistency").is_some());
    }

    #[test]
    fn vacant_induction_reports_honest_failures() {
        let seq = ScaleSequence::new(18, 1_000_000, 6).unwrap();
        let track = track_levels(&seq, 1.0, 1.0, 8100).unwrap();

        // Too few seeds: the parameter threshold fails.
        let report = verify_induction_vacant(&seq, &track, 100, 2.0, 1.0, &[]).unwrap();
        assert!(!report.check("parameter-threshold").unwrap().holds);
        assert!(!report.holds);

        // A fat measured probability breaks the data check but nothing else.
        let report = verify_induction_vacant(&seq, &track, 8100, 2.0, 1.0, &[(0, 0.5)]).unwrap();
        assert!(!report.check("data-consistency").unwrap().holds);
        assert!(report.check("worst-case-propagation").unwrap().holds);

        // An enormous interaction constant breaks propagation.
        let report = verify_induction_vacant(&seq, &track, 8100, 2.0, 1.2, &[]).unwrap();
        assert!(!report.check("worst-case-propagation").unwrap().holds);
    }

    #[test]
    fn enlarging_constants_never_rescues_a_failing_report() {
        let seq = ScaleSequence::new(18, 1_000_000, 5).unwrap();
        let track = track_levels(&seq, 1.0, 1.0, 8100).unwrap();
        let measured = vec![(0usize, 1e-80)];
        let mut rng = stream(77, 0, 0);
        for _ in 0..25 {
            let c2 = rng.random_range(0.5..4.0);
            let c3 = rng.random_range(0.9..1.1);
            let small = verify_induction_vacant(&seq, &track, 8100, c2, c3, &measured)
                .unwrap()
                .holds;
            let grow2 = rng.random_range(1.0..3.0);
            let grow3 = rng.random_range(1.0..1.05);
            let big =
                verify_induction_vacant(&seq, &track, 8100, c2 * grow2, c3 * grow3, &measured)
                    .unwrap()
                    .holds;
            assert!(
                small || !big,
                "bigger constants passed where smaller failed: c2={c2} c3={c3}"
            );
        }
    }

    #[test]
    fn planar_induction_needs_dimension_and_scale() {
        let low = ScaleSequence::new(3, 1000, 4).unwrap();
        assert!(verify_induction_planar(&low, 1.0, 2.0, &[]).is_err());

        let seq = ScaleSequence::new(7, 1_000_000, 6).unwrap();
        let good = verify_induction_planar(&seq, 1.0, 2.0, &[(0, 1e-10), (3, 0.0)]).unwrap();
        assert!(good.holds, "{:?}", good.checks);

        // A small base scale leaves no room at level zero.
        let tiny = ScaleSequence::new(7, 10, 6).unwrap();
        let report = verify_induction_planar(&tiny, 1.0, 2.0, &[]).unwrap();
        assert!(!report.check("worst-case-propagation").unwrap().holds);
    }
}
