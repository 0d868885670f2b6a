use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Binary-response link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFunction {
    #[default]
    Logit,
    Probit,
}

impl LinkFunction {
    /// The other link, used for link-swap calibration.
    pub fn swapped(self) -> LinkFunction {
        match self {
            LinkFunction::Logit => LinkFunction::Probit,
            LinkFunction::Probit => LinkFunction::Logit,
        }
    }

    /// Inverse link `η ↦ μ ∈ (0, 1)`.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            LinkFunction::Probit => normal_cdf(eta),
        }
    }

    /// `dμ/dη` at `η`.
    pub fn derivative(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => {
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            LinkFunction::Probit => normal_pdf(eta),
        }
    }

    /// Link `μ ↦ η`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            LinkFunction::Logit => mu.ln() - (-mu).ln_1p(),
            LinkFunction::Probit => normal_quantile(mu),
        }
    }

    /// `(ln μ, ln(1 − μ))` evaluated without cancellation.
    pub fn log_probabilities(self, eta: f64) -> (f64, f64) {
        match self {
            LinkFunction::Logit => (-softplus(-eta), -softplus(eta)),
            LinkFunction::Probit => {
                let lo = 1e-300_f64;
                (normal_cdf(eta).max(lo).ln(), normal_cdf(-eta).max(lo).ln())
            }
        }
    }
}

impl LinkFunction {
    /// Change in `(ln μ, ln(1 − μ))` when `η` moves to `η + δ`, accurate for small `δ`.
    pub fn log_probability_change(self, eta: f64, delta: f64) -> (f64, f64) {
        match self {
            LinkFunction::Logit => {
                let up = -(self.inverse(-eta) * (-delta).exp_m1()).ln_1p();
                let down = -(self.inverse(eta) * delta.exp_m1()).ln_1p();
                (up, down)
            }
            LinkFunction::Probit if delta.abs() < 1e-3 => {
                let mass = normal_mass(eta, delta);
                ((mass / normal_cdf(eta)).ln_1p(), (-mass / normal_cdf(-eta)).ln_1p())
            }
            LinkFunction::Probit => {
                let (a, b) = self.log_probabilities(eta);
                let (c, d) = self.log_probabilities(eta + delta);
                (c - a, d - b)
            }
        }
    }
}

/// `Φ(x + h) − Φ(x)` by five-point Gauss-Legendre quadrature.
fn normal_mass(x: f64, h: f64) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    0.5 * h * NODES.iter().map(|(t, w)| w * normal_pdf(x + 0.5 * h * (1.0 + t))).sum::<f64>()
}

impl std::fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkFunction::Logit => "logit",
            LinkFunction::Probit => "probit",
        })
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile, polished by Newton steps on the lower tail.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..3 {
        let pdf = normal_pdf(x);
        if pdf <= 0.0 || !x.is_finite() {
            break;
        }
        let step = (normal_cdf(x) - p) / pdf;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_is_strictly_increasing_and_inside_unit_interval() {
        for link in [LinkFunction::Logit, LinkFunction::Probit] {
            let mut prev = 0.0;
            for k in -300..=300 {
                let eta = k as f64 / 10.0;
                let mu = link.inverse(eta);
                assert!(mu > 0.0 && mu <= 1.0, "{link} {eta} {mu}");
                if eta <= 8.0 {
                    assert!(mu < 1.0);
                }
                assert!(mu >= prev);
                prev = mu;
            }
        }
    }

    // Above zero, 1 - μ is not representable to the needed precision in f64, so the round
    // trip is checked on the non-positive half; the positive half follows from the
    // symmetry μ(-η) = 1 - μ(η), which is checked separately.
    #[test]
    fn link_round_trip() {
        for link in [LinkFunction::Logit, LinkFunction::Probit] {
            for k in -3000..=0 {
                let x = k as f64 / 100.0;
                let back = link.link(link.inverse(x));
                assert!((back - x).abs() <= 1e-10, "{link}: {x} -> {back}");
            }
            for k in 0..=500 {
                let x = k as f64 / 100.0;
                let back = link.link(link.inverse(x));
                assert!((back - x).abs() <= 1e-10, "{link}: {x} -> {back}");
            }
        }
    }

    #[test]
    fn symmetry() {
        for link in [LinkFunction::Logit, LinkFunction::Probit] {
            for k in 0..=300 {
                let x = k as f64 / 10.0;
                let a = link.inverse(x);
                let b = link.inverse(-x);
                assert!((a + b - 1.0).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for link in [LinkFunction::Logit, LinkFunction::Probit] {
            for k in -40..=40 {
                let x = k as f64 / 10.0;
                let h = 1e-6;
                let fd = (link.inverse(x + h) - link.inverse(x - h)) / (2.0 * h);
                assert!((fd - link.derivative(x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn log_probability_change_matches_direct_difference() {
        for link in [LinkFunction::Logit, LinkFunction::Probit] {
            for &eta in &[-6.0, -1.3, 0.0, 0.4, 2.5, 7.0] {
                for &d in &[-0.5, -2e-3, -1e-4, 3e-7, 5e-4, 0.8] {
                    let (a, b) = link.log_probabilities(eta);
                    let (c, e) = link.log_probabilities(eta + d);
                    let (u, v) = link.log_probability_change(eta, d);
                    assert!((u - (c - a)).abs() < 1e-12 * (1.0 + a.abs()), "{link} {eta} {d}");
                    assert!((v - (e - b)).abs() < 1e-12 * (1.0 + b.abs()), "{link} {eta} {d}");
                }
            }
        }
    }

    #[test]
    fn log_probabilities_consistent() {
        for link in [LinkFunction::Logit, LinkFunction::Probit] {
            for k in -20..=20 {
                let x = k as f64 / 4.0;
                let (lp, lq) = link.log_probabilities(x);
                assert!((lp.exp() - link.inverse(x)).abs() < 1e-14);
                assert!((lq.exp() - (1.0 - link.inverse(x))).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quantile_known_values() {
        let z = normal_quantile(0.975);
        assert!((z - 1.959_963_984_540_054).abs() < 1e-12, "{z}");
        assert!(normal_quantile(0.5).abs() < 1e-15);
    }
}
