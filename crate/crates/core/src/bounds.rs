//! Explicit error-bound constants and bound verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::c0_constant;

/// Every constant in the truncation and discretisation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub m1: f64,
    pub m2: f64,
    pub beta: f64,
    pub dim: usize,
    pub a: f64,
    pub c0: f64,
    /// `E|𝒜 − 𝒜_N| ≤ K1/√N`
    pub k1: f64,
    /// `E|ℬ − ℬ_N| ≤ K2/√N`
    pub k2: f64,
    /// `|⟨O⟩_β − ⟨O⟩_{β,N}| ≤ K/√N`
    pub k: f64,
    /// `E|𝒜_N − 𝒜_{N,D}| ≤ L1/√D`
    pub l1: f64,
    /// `E|ℬ_N − ℬ_{N,D}| ≤ L2/√D`
    pub l2: f64,
    /// `|⟨O⟩_{β,N} − ⟨O⟩_{β,N,D}| ≤ L/√D`
    pub l: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// The exponential factors overflow to `+∞` when `βM1 + C0·M1` is large
/// (small `a`); such bounds are vacuous but still valid.
pub fn compute_constants(m1: f64, m2: f64, beta: f64, dim: usize, a: f64) -> Result<BoundConstants> {
    positive("M1", m1)?;
    positive("M2", m2)?;
    positive("beta", beta)?;
    positive("a", a)?;
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let d = dim as f64;
    let c0 = c0_constant(dim, beta, a);
    let growth = (beta * m1).exp();
    let k1 = beta * growth * m1 * (d * (beta + 2.0 * c0) / 2.0).sqrt();
    let k2 = 0.5 * m2 * (d * beta).sqrt();
    let k = (6.0 * beta * m1 + 2.0 * c0 * m1).exp() * m2 * (2.0 * d * (2.0 * beta + 3.0 * c0)).sqrt();
    let l1 = beta * growth * m1 * (2.0 * d * (beta + 2.0 * c0) * (2.0 * beta + 1.0)).sqrt();
    let l2 = m2 * (d * beta * (2.0 * beta + 1.0)).sqrt();
    let l = 2.0
        * (6.0 * beta * m1 + 2.0 * c0 * m1).exp()
        * m2
        * (2.0 * d * (2.0 * beta + 1.0) * (2.0 * beta + 3.0 * c0)).sqrt();
    Ok(BoundConstants { m1, m2, beta, dim, a, c0, k1, k2, k, l1, l2, l })
}

impl BoundConstants {
    /// `K/√N`
    pub fn truncation_bound(&self, n_modes: usize) -> f64 {
        self.k / (n_modes as f64).sqrt()
    }

    /// `L/√D`
    pub fn discretisation_bound(&self, beads: usize) -> f64 {
        self.l / (beads as f64).sqrt()
    }

    /// `2K(1/√N + 2√(2β+1)/√D)`, the combined bound on `|⟨O⟩_β − ⟨O⟩_{β,N,D}|`.
    pub fn combined_bound(&self, n_modes: usize, beads: usize) -> f64 {
        2.0 * self.k
            * (1.0 / (n_modes as f64).sqrt()
                + 2.0 * (2.0 * self.beta + 1.0).sqrt() / (beads as f64).sqrt())
    }

    /// Multiplies every derived constant by `s`. Used to exercise the
    /// failure path of a sweep.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            k1: self.k1 * s,
            k2: self.k2 * s,
            k: self.k * s,
            l1: self.l1 * s,
            l2: self.l2 * s,
            l: self.l * s,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub pass: bool,
    pub measured: f64,
    pub mc_sigma: f64,
    pub bound: f64,
    /// `bound − (measured − 3σ)`; nonnegative iff the check passes.
    pub margin: f64,
}

/// Passes iff `measured − 3σ ≤ constant/√n`.
pub fn check_bound(measured: f64, mc_sigma: f64, constant: f64, n: f64) -> Result<BoundVerdict> {
    if !(mc_sigma >= 0.0) {
        return Err(invalid(format!("mc_sigma must be nonnegative, got {mc_sigma}")));
    }
    if !(n > 0.0) {
        return Err(invalid(format!("bound denominator must be positive, got {n}")));
    }
    check_against(measured, mc_sigma, constant / n.sqrt())
}

/// Passes iff `measured − 3σ ≤ bound`.
pub fn check_against(measured: f64, mc_sigma: f64, bound: f64) -> Result<BoundVerdict> {
    if !(mc_sigma >= 0.0) {
        return Err(invalid(format!("mc_sigma must be nonnegative, got {mc_sigma}")));
    }
    let margin = bound - (measured - 3.0 * mc_sigma);
    Ok(BoundVerdict { pass: margin >= 0.0, measured, mc_sigma, bound, margin })
}

/// Least-squares line through `(ln n, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(invalid(format!("rate fit needs at least 4 points, got {}", points.len())));
    }
    for &(n, e) in points {
        if !(n > 0.0 && e > 0.0) {
            return Err(invalid(format!("rate fit needs positive n and error, got ({n}, {e})")));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate fit needs at least two distinct n"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;

    #[test]
    fn l_is_scaled_k() {
        for &(m1, m2, beta, d, a) in &[(1.0, 1.0, 1.0, 1, 1.0), (0.4, 1.0, 2.0, 3, 0.5), (0.1, 7.0, 0.3, 2, 4.0)] {
            let c = compute_constants(m1, m2, beta, d, a).unwrap();
            let ratio = c.l / c.k;
            assert!((ratio - 2.0 * (2.0 * beta + 1.0f64).sqrt()).abs() < 1e-12 * ratio);
        }
    }

    #[test]
    fn k2_value() {
        let c = compute_constants(1.0, 1.0, 4.0, 1, 1.0).unwrap();
        assert!((c.k2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constants_by_hand() {
        // β = 1, a = 1, d = 1: C0 = coth(1/2)/2
        let c = compute_constants(0.4, 1.0, 1.0, 1, 1.0).unwrap();
        let c0 = 0.5 / (0.5f64).tanh();
        assert!((c.c0 - c0).abs() < 1e-15);
        let e = (0.4f64).exp();
        assert!((c.k1 - e * 0.4 * ((1.0 + 2.0 * c0) / 2.0).sqrt()).abs() < 1e-14);
        assert!((c.l1 - e * 0.4 * (2.0 * (1.0 + 2.0 * c0) * 3.0).sqrt()).abs() < 1e-14);
        assert!((c.l2 - 3.0f64.sqrt()).abs() < 1e-15);
        let k = (2.4 + 0.8 * c0).exp() * (2.0 * (2.0 + 3.0 * c0)).sqrt();
        assert!((c.k - k).abs() < 1e-12 * k);
    }

    #[test]
    fn k_increases_in_each_argument() {
        let base = compute_constants(0.5, 1.0, 1.0, 1, 1.0).unwrap().k;
        assert!(compute_constants(0.6, 1.0, 1.0, 1, 1.0).unwrap().k > base);
        assert!(compute_constants(0.5, 1.1, 1.0, 1, 1.0).unwrap().k > base);
        assert!(compute_constants(0.5, 1.0, 1.1, 1, 1.0).unwrap().k > base);
        assert!(compute_constants(0.5, 1.0, 1.0, 2, 1.0).unwrap().k > base);
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        assert!(compute_constants(0.0, 1.0, 1.0, 1, 1.0).is_err());
        assert!(compute_constants(1.0, -1.0, 1.0, 1, 1.0).is_err());
        assert!(compute_constants(1.0, 1.0, 0.0, 1, 1.0).is_err());
        assert!(compute_constants(1.0, 1.0, 1.0, 0, 1.0).is_err());
        assert!(compute_constants(1.0, 1.0, 1.0, 1, f64::NAN).is_err());
    }

    #[test]
    fn combined_bound_form() {
        let c = compute_constants(1.0, 1.0, 1.0, 1, 1.0).unwrap();
        let b = c.combined_bound(16, 64);
        assert!((b - 2.0 * c.k * (0.25 + 2.0 * 3.0f64.sqrt() / 8.0)).abs() < 1e-12 * b);
    }

    #[test]
    fn verdicts() {
        let v = check_bound(0.01, 0.0, 10.0, 100.0).unwrap();
        assert!(v.pass);
        assert!((v.margin - 0.99).abs() < 1e-15);
        assert!(!check_bound(2.0, 0.0, 10.0, 100.0).unwrap().pass);
        assert!(check_bound(2.0, 0.4, 10.0, 100.0).unwrap().pass);
        assert!(check_bound(1.0, -0.1, 10.0, 100.0).is_err());
    }

    #[test]
    fn exact_rates() {
        let inv: Vec<(f64, f64)> = (1..=6).map(|i| (2f64.powi(i), 3.0 / 2f64.powi(i))).collect();
        assert!((fit_rate(&inv).unwrap().slope + 1.0).abs() < 1e-10);
        let half: Vec<(f64, f64)> = (1..=6).map(|i| (2f64.powi(i), 3.0 / 2f64.powi(i).sqrt())).collect();
        let f = fit_rate(&half).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-10);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_half_rate() {
        let mut rng = StreamKey::new(20240611, 0).rng();
        let pts: Vec<(f64, f64)> = (1..=8)
            .map(|i| {
                let n = 2f64.powi(i);
                (n, n.powf(-0.5) * (1.0 + rng.random_range(-0.2..0.2)))
            })
            .collect();
        let s = fit_rate(&pts).unwrap().slope;
        assert!((-0.65..=-0.35).contains(&s), "{s}");
    }

    #[test]
    fn fit_needs_valid_points() {
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 1.0), (4.0, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 0.0), (4.0, 1.0), (8.0, 1.0)]).is_err());
    }
}
