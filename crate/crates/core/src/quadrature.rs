//! Gauss-Hermite quadrature for the weight `exp(-x^2)`.

use std::f64::consts::PI;

/// Nodes and weights such that `∫ f(x) exp(-x²) dx ≈ Σ w_k f(x_k)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes an `n`-point rule by Newton iteration on the normalised Hermite
    /// recurrence. Nodes are returned in ascending order.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        let mut z = 0.0;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut deriv = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                deriv = (2.0 * nf).sqrt() * p2;
                let prev = z;
                z = prev - p1 / deriv;
                if (z - prev).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (deriv * deriv);
            weights[n - 1 - i] = weights[i];
        }
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    /// Expectation of `f` under the Gaussian density `exp(-(x - mean)²) / √π`,
    /// i.e. N(mean, 1/2).
    pub fn expect<F: Fn(f64) -> f64>(&self, mean: f64, f: F) -> f64 {
        let norm = PI.sqrt().recip();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + x))
            .sum::<f64>()
            * norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_gaussian() {
        for n in [1, 2, 5, 8, 20, 64, 100] {
            let gh = GaussHermite::new(n);
            let total: f64 = gh.weights.iter().sum();
            assert!((total - PI.sqrt()).abs() < 1e-12, "n={n}: {total}");
            assert!(gh.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let gh = GaussHermite::new(10);
        // E[x^2] = 1/2 and E[x^4] = 3/4 under N(0, 1/2)
        assert!((gh.expect(0.0, |x| x * x) - 0.5).abs() < 1e-13);
        assert!((gh.expect(0.0, |x| x.powi(4)) - 0.75).abs() < 1e-13);
        assert!((gh.expect(2.0, |x| x) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn known_two_point_rule() {
        let gh = GaussHermite::new(2);
        let r = 0.5f64.sqrt();
        assert!((gh.nodes[0] + r).abs() < 1e-14 && (gh.nodes[1] - r).abs() < 1e-14);
        assert!((gh.weights[0] - PI.sqrt() / 2.0).abs() < 1e-14);
    }
}
