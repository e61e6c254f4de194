//! Gauss-Legendre quadrature support: node/weight computation and the
//! panel scheme used for the half-line Green-function integral.

use std::f64::consts::PI;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence. Accurate to
/// machine precision for the modest orders used here.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2);
    let mut rule = Vec::with_capacity(n);
    // Nodes come in symmetric pairs; compute the nonnegative half.
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
        if x.abs() > 1e-14 {
            rule.push((-x, w));
        }
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Geometrically growing panel boundaries covering [0, top]:
/// 0, 1, 2, 4, ..., with the final edge clamped to `top`.
pub fn panel_edges(top: f64) -> Vec<f64> {
    debug_assert!(top > 1.0);
    let mut edges = vec![0.0, 1.0];
    let mut hi = 1.0;
    while hi < top {
        hi = (hi * 2.0).min(top);
        edges.push(hi);
    }
    edges
}

/// Nodes and weights of `rule` mapped onto every panel of [`panel_edges`].
pub fn panel_nodes(top: f64, rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let edges = panel_edges(top);
    let mut out = Vec::with_capacity(rule.len() * (edges.len() - 1));
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for &(x, w) in rule {
            out.push((mid + half * x, half * w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_rules_match_known_nodes() {
        let r2 = gauss_legendre(2);
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        assert!((r2[0].0 + inv_sqrt3).abs() < 1e-15);
        assert!((r2[1].0 - inv_sqrt3).abs() < 1e-15);
        assert!((r2[0].1 - 1.0).abs() < 1e-15);

        let r3 = gauss_legendre(3);
        assert!((r3[1].0).abs() < 1e-15);
        assert!((r3[1].1 - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [5, 16, 48, 64] {
            let s: f64 = gauss_legendre(n).iter().map(|&(_, w)| w).sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn integrates_polynomials_exactly() {
        // 48-point rule is exact through degree 95.
        let rule = gauss_legendre(48);
        let val: f64 = rule.iter().map(|&(x, w)| w * x.powi(20)).sum();
        assert!(
            (val - 2.0 / 21.0).abs() < 1e-13,
            "err {:e}",
            val - 2.0 / 21.0
        );
    }

    #[test]
    fn panels_cover_the_range() {
        let edges = panel_edges(1000.0);
        assert_eq!(edges.first(), Some(&0.0));
        assert_eq!(edges.last(), Some(&1000.0));
        let rule = gauss_legendre(16);
        let nodes = panel_nodes(1000.0, &rule);
        // Integrating 1 over [0, 1000] by panels.
        let s: f64 = nodes.iter().map(|&(_, w)| w).sum();
        assert!((s - 1000.0).abs() < 1e-9);
    }
}
