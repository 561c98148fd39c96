//! Gauss–Legendre rules and the causal double integral used as the
//! general-kernel path of the cost engine.

use crate::kernels::CausalDomain;

/// Default number of nodes per dimension.
pub const DEFAULT_ORDER: usize = 64;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial roots.
    ///
    /// # Panics
    /// If `order` is zero.
    pub fn new(order: usize) -> Self {
        assert!(order > 0, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess for the i-th largest root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                deriv = dp;
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            if dp != 0.0 {
                deriv = dp;
            }
            let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ∫_a^b f(x) dx.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        if b == a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// ∬ g(t − t′) dt′ dt over the causal part of `domain`, for any lag
    /// function `g` defined on `τ ≥ 0`.
    ///
    /// The outer axis is split where the inner upper limit switches from `t`
    /// to `d`, so each piece has a smooth integrand.
    pub fn causal_double<G: Fn(f64) -> f64>(&self, domain: &CausalDomain, g: G) -> f64 {
        let CausalDomain { t_lo, t_hi, s_lo, s_hi } = *domain;
        let start = t_lo.max(s_lo);
        if start >= t_hi {
            return 0.0;
        }
        // t in [start, min(t_hi, s_hi)]: inner upper limit is t itself.
        let knee = t_hi.min(s_hi).max(start);
        let moving = self.integrate(start, knee, |t| self.integrate(s_lo, t, |s| g(t - s)));
        // t beyond s_hi: inner range is the full [s_lo, s_hi].
        let fixed = if knee < t_hi {
            self.integrate(knee, t_hi, |t| self.integrate(s_lo, s_hi, |s| g(t - s)))
        } else {
            0.0
        };
        moving + fixed
    }
}

impl Default for GaussLegendre {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER)
    }
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 64, 128] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let rule = GaussLegendre::new(5);
        // ∫_0^2 x^9 dx = 2^10 / 10
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 102.4).abs() < 1e-10);
    }

    #[test]
    fn smooth_function() {
        let rule = GaussLegendre::default();
        let v = rule.integrate(0.0, std::f64::consts::PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn causal_double_constant_kernel() {
        let rule = GaussLegendre::new(8);
        // triangle 0<=s<=t<=1 has area 1/2
        let tri = CausalDomain::lower_triangle(0.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert!((rule.causal_double(&tri, |_| 1.0) - 0.5).abs() < 1e-14);
        // rectangle [0,2]x[0,1] clipped to s<=t: area 2 - 1/2
        let rect = CausalDomain::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        assert!((rule.causal_double(&rect, |_| 1.0) - 1.5).abs() < 1e-14);
    }
}
