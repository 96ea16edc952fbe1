use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ABStatistics, EstimatorResult, Representation};
use crate::error::{invalid, Error, Result};
use crate::potentials::{ObservableSpec, PotentialSpec};
use crate::rng::StreamKey;
use crate::spectral::{fill_nu, mode_table, nu_std_devs, synthesize, NormalModeLoop};

/// Samples per parallel work unit. Fixed so reductions do not depend on the
/// thread count.
const CHUNK: usize = 2048;
/// Slack on the per-sample bound checks.
const BOUND_SLACK: f64 = 1e-12;

/// How the loop integrals `∫₀^β f(x_N(τ)) dτ` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Integration {
    /// Periodic midpoint rule on `n_quad` nodes `(i+½)β/n_quad`.
    Quadrature { n_quad: usize },
    /// Left Riemann sum on the beads `jβ/D`.
    Riemann { beads: usize },
}

impl Integration {
    fn nodes(&self, beta: f64) -> Vec<f64> {
        match *self {
            Integration::Quadrature { n_quad } => quadrature_nodes(beta, n_quad),
            Integration::Riemann { beads } => (0..beads).map(|j| j as f64 * beta / beads as f64).collect(),
        }
    }

    fn count(&self) -> usize {
        match *self {
            Integration::Quadrature { n_quad } => n_quad,
            Integration::Riemann { beads } => beads,
        }
    }
}

pub fn quadrature_nodes(beta: f64, n_quad: usize) -> Vec<f64> {
    (0..n_quad).map(|i| (i as f64 + 0.5) * beta / n_quad as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureValue {
    pub value: f64,
    /// `|M(n) − M(2n)|` for the midpoint rule `M`.
    pub error_estimate: f64,
}

fn midpoint_va(lp: &NormalModeLoop, p: &PotentialSpec, n_quad: usize) -> f64 {
    let beta = lp.basis.beta;
    let nodes = quadrature_nodes(beta, n_quad);
    let table = mode_table(beta, lp.n_modes(), &nodes);
    let mut x = vec![0.0; n_quad * lp.dim];
    synthesize(&table, lp.n_modes(), &lp.xi, lp.dim, &mut x);
    let s: f64 = x.chunks_exact(lp.dim).map(|q| p.va(q)).sum();
    s * beta / n_quad as f64
}

/// `∫₀^β V^a(x_N(τ)) dτ` by the periodic midpoint rule. The rule is
/// spectrally accurate for smooth periodic integrands; `n_quad` must be at
/// least `4N`.
pub fn quadrature_va(lp: &NormalModeLoop, p: &PotentialSpec, n_quad: usize) -> Result<QuadratureValue> {
    if lp.dim != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: lp.dim });
    }
    if n_quad < 4 * lp.n_modes() {
        return Err(invalid(format!(
            "n_quad = {n_quad} cannot resolve {} modes (need at least {})",
            lp.n_modes(),
            4 * lp.n_modes()
        )));
    }
    let value = midpoint_va(lp, p, n_quad);
    let fine = midpoint_va(lp, p, 2 * n_quad);
    Ok(QuadratureValue { value, error_estimate: (value - fine).abs() })
}

/// `β_D Σ_{j<D} V^a(x_N(jβ_D))`.
pub fn riemann_va(lp: &NormalModeLoop, p: &PotentialSpec, beads: usize) -> Result<f64> {
    if lp.dim != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: lp.dim });
    }
    if beads == 0 {
        return Err(invalid("bead count must be positive"));
    }
    let beta = lp.basis.beta;
    let nodes = Integration::Riemann { beads }.nodes(beta);
    let table = mode_table(beta, lp.n_modes(), &nodes);
    let mut x = vec![0.0; beads * lp.dim];
    synthesize(&table, lp.n_modes(), &lp.xi, lp.dim, &mut x);
    let s: f64 = x.chunks_exact(lp.dim).map(|q| p.va(q)).sum();
    Ok(s * beta / beads as f64)
}

/// Settings shared by both CL estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Warn when the effective sample size falls below this.
    pub ess_floor: f64,
    /// Fail instead of counting when a sample breaks `𝒜 ≤ e^{βM1}` or
    /// `|ℬ| ≤ M2`.
    pub strict: bool,
}

impl ClConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, ess_floor: 100.0, strict: false }
    }
}

/// Per-sample log-weights `ln 𝒜_i` and observable averages `ℬ_i`. Sample `i`
/// is drawn from stream `(seed, i)`, so sets sharing a seed use common
/// random numbers and a prefix of modes is shared across truncations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub log_a: Vec<f64>,
    pub b: Vec<f64>,
    pub seed: u64,
    pub representation: Representation,
    pub beta: f64,
}

/// Draws `n_samples` loops from `ν` truncated at `n_modes` and evaluates
/// `(ln 𝒜, ℬ)` for each under the given integration rule.
pub fn cl_samples(
    p: &PotentialSpec,
    o: &ObservableSpec,
    beta: f64,
    n_modes: usize,
    integration: Integration,
    n_samples: usize,
    seed: u64,
) -> Result<SampleSet> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    if n_modes == 0 {
        return Err(invalid("mode count must be positive"));
    }
    if p.dim != o.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: o.dim });
    }
    let representation = match integration {
        Integration::Quadrature { n_quad } => {
            if n_quad < 4 * n_modes {
                return Err(invalid(format!(
                    "n_quad = {n_quad} cannot resolve {n_modes} modes (need at least {})",
                    4 * n_modes
                )));
            }
            Representation::Cl { modes: n_modes }
        }
        Integration::Riemann { beads } => {
            if beads == 0 {
                return Err(invalid("bead count must be positive"));
            }
            Representation::ClDisc { modes: n_modes, beads }
        }
    };
    let dim = p.dim;
    let n_nodes = integration.count();
    let node_weight = beta / n_nodes as f64;
    let table = mode_table(beta, n_modes, &integration.nodes(beta));
    let sd = nu_std_devs(beta, n_modes, p.a);

    let mut log_a = vec![0.0; n_samples];
    let mut b = vec![0.0; n_samples];
    log_a
        .par_chunks_mut(CHUNK)
        .zip(b.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (la, bb))| {
            let mut xi = vec![0.0; n_modes * dim];
            let mut x = vec![0.0; n_nodes * dim];
            for (off, (la_i, b_i)) in la.iter_mut().zip(bb.iter_mut()).enumerate() {
                let i = (c * CHUNK + off) as u64;
                let mut rng = StreamKey::new(seed, i).rng();
                fill_nu(&sd, dim, &mut rng, &mut xi);
                synthesize(&table, n_modes, &xi, dim, &mut x);
                let (mut sv, mut so) = (0.0, 0.0);
                for q in x.chunks_exact(dim) {
                    sv += p.va(q);
                    so += o.value(q);
                }
                *la_i = -node_weight * sv;
                *b_i = so / n_nodes as f64;
            }
        });
    Ok(SampleSet { log_a, b, seed, representation, beta })
}

/// Normalised weights `w_i = 𝒜_i / max 𝒜`, computed in log space.
fn normalised_weights(log_a: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = log_a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::WeightUnderflow);
    }
    let w: Vec<f64> = log_a.iter().map(|&l| (l - m).exp()).collect();
    Ok((m, w))
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Self-normalised estimate `Σ𝒜ℬ/Σ𝒜` with delta-method error, ESS, and
    /// the `𝒜`/`ℬ` statistics.
    pub fn summarize(
        &self,
        p: &PotentialSpec,
        o: &ObservableSpec,
        cfg: &ClConfig,
    ) -> Result<(EstimatorResult, ABStatistics)> {
        let n = self.len();
        if n == 0 {
            return Err(invalid("no samples"));
        }
        let (m, w) = normalised_weights(&self.log_a)?;
        let sw: f64 = w.iter().sum();
        let sw2: f64 = w.iter().map(|x| x * x).sum();
        let swb: f64 = w.iter().zip(&self.b).map(|(w, b)| w * b).sum();
        let estimate = swb / sw;
        let var: f64 = w
            .iter()
            .zip(&self.b)
            .map(|(w, b)| {
                let r = w * (b - estimate);
                r * r
            })
            .sum();
        let std_error = var.sqrt() / sw;
        let ess = sw * sw / sw2;

        let nf = n as f64;
        let scale = m.exp();
        let mean_w = sw / nf;
        let var_w = w.iter().map(|x| (x - mean_w) * (x - mean_w)).sum::<f64>() / (nf - 1.0).max(1.0);
        let log_a_cap = p.m1 * self.beta + BOUND_SLACK;
        let b_cap = o.m2 + BOUND_SLACK;
        let stats = ABStatistics {
            mean_a: scale * mean_w,
            mean_a_se: scale * (var_w / nf).sqrt(),
            mean_b: self.b.iter().sum::<f64>() / nf,
            mean_ab: scale * swb / nf,
            max_log_a: m,
            max_abs_b: self.b.iter().fold(0.0, |acc: f64, b| acc.max(b.abs())),
            a_bound_violations: self.log_a.iter().filter(|&&l| l > log_a_cap).count(),
            b_bound_violations: self.b.iter().filter(|b| b.abs() > b_cap).count(),
        };
        if cfg.strict && (stats.a_bound_violations > 0 || stats.b_bound_violations > 0) {
            return Err(Error::AssumptionViolated(format!(
                "{} samples exceed A ≤ exp(βM1), {} exceed |B| ≤ M2",
                stats.a_bound_violations, stats.b_bound_violations
            )));
        }
        let result = EstimatorResult {
            estimate,
            std_error,
            n_samples: n,
            ess,
            seed: self.seed,
            representation: self.representation,
            ess_warning: ess < cfg.ess_floor,
            acceptance: None,
            wall_time_s: 0.0,
        };
        Ok((result, stats))
    }
}

fn check_sample_count(n: usize) -> Result<()> {
    if n < 1000 {
        return Err(invalid(format!("CL estimators need at least 1000 samples, got {n}")));
    }
    Ok(())
}

/// `⟨O⟩_{β,N}`: importance sampling under `ν` with both loop integrals done
/// by the same midpoint rule. `n_quad = None` selects `max(8N, 64)` nodes.
pub fn estimate_cl_truncated(
    p: &PotentialSpec,
    o: &ObservableSpec,
    beta: f64,
    n_modes: usize,
    n_quad: Option<usize>,
    cfg: &ClConfig,
) -> Result<(EstimatorResult, ABStatistics)> {
    check_sample_count(cfg.n_samples)?;
    let start = Instant::now();
    let n_quad = n_quad.unwrap_or_else(|| default_n_quad(n_modes));
    let set = cl_samples(p, o, beta, n_modes, Integration::Quadrature { n_quad }, cfg.n_samples, cfg.seed)?;
    let (mut r, s) = set.summarize(p, o, cfg)?;
    r.wall_time_s = start.elapsed().as_secs_f64();
    Ok((r, s))
}

pub fn default_n_quad(n_modes: usize) -> usize {
    (8 * n_modes).max(64)
}

/// `⟨O⟩_{β,N,D}`: as [`estimate_cl_truncated`] with Riemann sums on `D` beads.
pub fn estimate_cl_discretized(
    p: &PotentialSpec,
    o: &ObservableSpec,
    beta: f64,
    n_modes: usize,
    beads: usize,
    cfg: &ClConfig,
) -> Result<(EstimatorResult, ABStatistics)> {
    check_sample_count(cfg.n_samples)?;
    let start = Instant::now();
    let set = cl_samples(p, o, beta, n_modes, Integration::Riemann { beads }, cfg.n_samples, cfg.seed)?;
    let (mut r, s) = set.summarize(p, o, cfg)?;
    r.wall_time_s = start.elapsed().as_secs_f64();
    Ok((r, s))
}

/// Difference of two self-normalised estimates drawn with common random
/// numbers, with its paired (influence-function) standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub first: f64,
    pub second: f64,
    /// `first − second`
    pub difference: f64,
    pub std_error: f64,
}

pub fn paired_difference(first: &SampleSet, second: &SampleSet) -> Result<PairedDifference> {
    if first.len() != second.len() || first.seed != second.seed {
        return Err(invalid("paired comparison needs sample sets with equal size and seed"));
    }
    let influence = |s: &SampleSet| -> Result<(f64, Vec<f64>)> {
        let (_, w) = normalised_weights(&s.log_a)?;
        let sw: f64 = w.iter().sum();
        let r = w.iter().zip(&s.b).map(|(w, b)| w * b).sum::<f64>() / sw;
        let mean_w = sw / s.len() as f64;
        Ok((r, w.iter().zip(&s.b).map(|(w, b)| w / mean_w * (b - r)).collect()))
    };
    let (r1, f1) = influence(first)?;
    let (r2, f2) = influence(second)?;
    let n = first.len() as f64;
    let diffs: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(PairedDifference { first: r1, second: r2, difference: r1 - r2, std_error: (var / n).sqrt() })
}

/// Monte Carlo estimates of `E_ν|𝒜 − 𝒜'|` and `E_ν|ℬ − ℬ'|` between two
/// levels evaluated on the same loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbDifferences {
    pub mean_abs_da: f64,
    pub se_da: f64,
    pub mean_abs_db: f64,
    pub se_db: f64,
}

pub fn ab_differences(first: &SampleSet, second: &SampleSet) -> Result<AbDifferences> {
    if first.len() != second.len() || first.seed != second.seed || first.is_empty() {
        return Err(invalid("paired comparison needs non-empty sample sets with equal size and seed"));
    }
    let n = first.len() as f64;
    let mean_se = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, (var / n).sqrt())
    };
    let (da, se_da) = mean_se(
        first.log_a.iter().zip(&second.log_a).map(|(a, b)| (a.exp() - b.exp()).abs()).collect(),
    );
    let (db, se_db) = mean_se(first.b.iter().zip(&second.b).map(|(a, b)| (a - b).abs()).collect());
    Ok(AbDifferences { mean_abs_da: da, se_da, mean_abs_db: db, se_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::ObservableKind;
    use crate::spectral::{sample_nu, SpectralBasis};

    fn bumped() -> PotentialSpec {
        PotentialSpec::soft_bumped(1.0, 0.2, 2.0, 1, 1.0, 0.4).unwrap()
    }

    fn tanh2() -> ObservableSpec {
        ObservableSpec::new(ObservableKind::TanhSquared, 1, 1.0).unwrap()
    }

    #[test]
    fn quadrature_of_vanishing_va() {
        let p = PotentialSpec::harmonic(1.0, 1, 1.0, 1.0).unwrap();
        let basis = SpectralBasis::new(2.0, 8).unwrap();
        let lp = sample_nu(&basis, 1, 1.0, &mut StreamKey::new(3, 0).rng()).unwrap();
        assert_eq!(quadrature_va(&lp, &p, 32).unwrap().value, 0.0);
    }

    #[test]
    fn quadrature_of_constant_integrand() {
        // ξ = 0 and V^a(0) = c
        let p = bumped();
        let lp = NormalModeLoop::zeros(SpectralBasis::new(1.5, 4).unwrap(), 1);
        let v = quadrature_va(&lp, &p, 16).unwrap().value;
        assert!((v - 1.5 * 0.2).abs() < 1e-15);
        let r = riemann_va(&lp, &p, 5).unwrap();
        assert!((r - 1.5 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn quadrature_rejects_coarse_rule() {
        let lp = NormalModeLoop::zeros(SpectralBasis::new(1.0, 8).unwrap(), 1);
        assert!(quadrature_va(&lp, &bumped(), 31).is_err());
        assert!(quadrature_va(&lp, &bumped(), 32).is_ok());
    }

    #[test]
    fn quadrature_self_converges() {
        let basis = SpectralBasis::new(1.0, 32).unwrap();
        for s in 0..5 {
            let lp = sample_nu(&basis, 1, 1.0, &mut StreamKey::new(9, s).rng()).unwrap();
            let q = quadrature_va(&lp, &bumped(), 128).unwrap();
            assert!(q.error_estimate < 1e-9, "{q:?}");
        }
    }

    #[test]
    fn riemann_single_bead() {
        let basis = SpectralBasis::new(1.3, 6).unwrap();
        let lp = sample_nu(&basis, 1, 1.0, &mut StreamKey::new(5, 0).rng()).unwrap();
        let x0 = lp.eval(0.0).unwrap();
        let r = riemann_va(&lp, &bumped(), 1).unwrap();
        assert!((r - 1.3 * bumped().va(&x0)).abs() < 1e-14);
    }

    #[test]
    fn constant_observable_is_exact() {
        let o = ObservableSpec::constant(1.0, 1).unwrap();
        let cfg = ClConfig::new(2000, 1);
        let (r, _) = estimate_cl_truncated(&bumped(), &o, 1.0, 8, None, &cfg).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
        let (r, _) = estimate_cl_discretized(&bumped(), &o, 1.0, 8, 16, &cfg).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let cfg = ClConfig::new(999, 1);
        assert!(estimate_cl_truncated(&bumped(), &tanh2(), 1.0, 8, None, &cfg).is_err());
    }

    #[test]
    fn weight_underflow_is_an_error() {
        let set = SampleSet {
            log_a: vec![f64::NEG_INFINITY; 4],
            b: vec![0.0; 4],
            seed: 0,
            representation: Representation::Cl { modes: 1 },
            beta: 1.0,
        };
        let err = set.summarize(&bumped(), &tanh2(), &ClConfig::new(4, 0)).unwrap_err();
        assert!(matches!(err, Error::WeightUnderflow));
    }

    #[test]
    fn ess_floor_sets_warning() {
        let mut cfg = ClConfig::new(1000, 2);
        cfg.ess_floor = 1e9;
        let (r, _) = estimate_cl_truncated(&bumped(), &tanh2(), 1.0, 4, None, &cfg).unwrap();
        assert!(r.ess_warning);
        assert!(r.ess <= r.n_samples as f64 + 1e-9);
    }

    #[test]
    fn strict_mode_rejects_bound_violations() {
        let o = ObservableSpec::new(ObservableKind::Square, 1, 0.01).unwrap();
        let mut cfg = ClConfig::new(1000, 2);
        assert!(estimate_cl_truncated(&bumped(), &o, 1.0, 4, None, &cfg).is_ok());
        cfg.strict = true;
        let err = estimate_cl_truncated(&bumped(), &o, 1.0, 4, None, &cfg).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolated(_)));
    }

    #[test]
    fn samples_share_mode_prefix_across_truncations() {
        let p = PotentialSpec::harmonic(1.0, 1, 1.0, 1.0).unwrap();
        let o = ObservableSpec::new(ObservableKind::Position, 1, 1.0).unwrap();
        // Mode 0 alone gives x = ξ_0/√β, so ℬ recovers ξ_0 exactly.
        let s1 = cl_samples(&p, &o, 1.0, 1, Integration::Riemann { beads: 1 }, 8, 4).unwrap();
        for (i, b) in s1.b.iter().enumerate() {
            let lp = sample_nu(&SpectralBasis::new(1.0, 5).unwrap(), 1, 1.0, &mut StreamKey::new(4, i as u64).rng())
                .unwrap();
            assert!((b - lp.mode(0)[0]).abs() < 1e-15);
        }
    }
}
