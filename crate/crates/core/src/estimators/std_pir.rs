use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EstimatorResult, Representation};
use crate::error::{invalid, Error, Result};
use crate::potentials::{ObservableSpec, PotentialSpec};
use crate::rng::StreamKey;
use crate::spectral::{discrete_frequency, grid_mode_table, modes_to_grid, synthesize, NormalModeLoop, RingPolymer};

fn check_dims(rp: &RingPolymer, p: &PotentialSpec) -> Result<()> {
    if rp.dim != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: rp.dim });
    }
    Ok(())
}

/// `(1/2β_D) Σ_j |x_j − x_{j+1}|² + β_D Σ_j V(x_j)` with cyclic indices.
pub fn std_energy(rp: &RingPolymer, p: &PotentialSpec) -> Result<f64> {
    check_dims(rp, p)?;
    let beads = rp.beads();
    let beta_d = rp.beta_d();
    let mut spring = 0.0;
    let mut pot = 0.0;
    for j in 0..beads {
        let (x, y) = (rp.bead(j), rp.bead(j + 1));
        spring += x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        pot += p.value(x);
    }
    Ok(spring / (2.0 * beta_d) + beta_d * pot)
}

/// Gradient of [`std_energy`], row-major `D × d`.
pub fn std_energy_grad(rp: &RingPolymer, p: &PotentialSpec) -> Result<Vec<f64>> {
    check_dims(rp, p)?;
    let (beads, dim) = (rp.beads(), rp.dim);
    let beta_d = rp.beta_d();
    let mut g = vec![0.0; beads * dim];
    for j in 0..beads {
        let row = &mut g[j * dim..(j + 1) * dim];
        p.grad_into(rp.bead(j), row);
        let (prev, x, next) = (rp.bead(j + beads - 1), rp.bead(j), rp.bead(j + 1));
        for i in 0..dim {
            row[i] = beta_d * row[i] + (2.0 * x[i] - prev[i] - next[i]) / beta_d;
        }
    }
    Ok(g)
}

/// `½ Σ_k (ω_{k,D}² + a²)|ξ_k|² + β_D Σ_j V^a(x_j)` for a loop of up to `D`
/// modes placed on `D` beads. With `N = D` this equals [`std_energy`] of the
/// corresponding ring polymer.
pub fn normal_mode_energy(lp: &NormalModeLoop, beads: usize, p: &PotentialSpec) -> Result<f64> {
    if lp.dim != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: lp.dim });
    }
    let rp = modes_to_grid(lp, beads)?;
    let beta = lp.basis.beta;
    let a2 = p.a * p.a;
    let kinetic: f64 = (0..lp.n_modes())
        .map(|k| {
            let w = discrete_frequency(beta, beads, k);
            let n2: f64 = lp.mode(k).iter().map(|v| v * v).sum();
            (w * w + a2) * n2
        })
        .sum();
    let pot: f64 = rp.x.chunks_exact(lp.dim).map(|q| p.va(q)).sum();
    Ok(0.5 * kinetic + rp.beta_d() * pot)
}

/// Settings for the ring-polymer Langevin sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdSamplerConfig {
    /// Steps per chain, burn-in included.
    pub n_steps: usize,
    /// Langevin time step in preconditioned units; stable for `h < 2`.
    pub step_h: f64,
    pub burn_in_frac: f64,
    /// Metropolis-adjust each Euler–Maruyama step (MALA).
    pub metropolis: bool,
    pub n_chains: usize,
    /// Batches per chain for the batch-means error.
    pub n_batches: usize,
    pub seed: u64,
    /// Abort when the ring-polymer energy exceeds this.
    pub divergence_threshold: f64,
}

impl Default for StdSamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 100_000,
            step_h: 0.25,
            burn_in_frac: 0.1,
            metropolis: true,
            n_chains: 4,
            n_batches: 50,
            seed: 0,
            divergence_threshold: 1e8,
        }
    }
}

impl StdSamplerConfig {
    fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.n_chains == 0 {
            return Err(invalid("n_steps and n_chains must be positive"));
        }
        if !(self.step_h > 0.0 && self.step_h < 2.0) {
            return Err(invalid(format!("step_h must lie in (0, 2), got {}", self.step_h)));
        }
        if !(0.0..1.0).contains(&self.burn_in_frac) {
            return Err(invalid(format!("burn_in_frac must lie in [0, 1), got {}", self.burn_in_frac)));
        }
        if self.n_batches < 2 {
            return Err(invalid("need at least 2 batches per chain"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(invalid("divergence threshold must be positive"));
        }
        Ok(())
    }

    fn kept(&self) -> usize {
        self.n_steps - (self.burn_in_frac * self.n_steps as f64).floor() as usize
    }
}

/// State of one chain in mode coordinates: the modes, `β_D Σ V^a`, its
/// gradient with respect to the modes and `(1/D) Σ O`.
struct ModeState {
    xi: Vec<f64>,
    phi: f64,
    grad_phi: Vec<f64>,
    obs: f64,
}

struct Target<'a> {
    p: &'a PotentialSpec,
    o: &'a ObservableSpec,
    beads: usize,
    dim: usize,
    beta_d: f64,
    table: Vec<f64>,
    /// `P_k = 1/(ω_{k,D}² + a²)`
    precond: Vec<f64>,
}

impl Target<'_> {
    fn state(&self, xi: Vec<f64>, gbuf: &mut [f64]) -> ModeState {
        let (beads, dim) = (self.beads, self.dim);
        let mut x = vec![0.0; beads * dim];
        synthesize(&self.table, beads, &xi, dim, &mut x);
        let mut phi = 0.0;
        let mut obs = 0.0;
        for (q, g) in x.chunks_exact(dim).zip(gbuf.chunks_exact_mut(dim)) {
            phi += self.p.va(q);
            obs += self.o.value(q);
            self.p.va_grad_into(q, g);
        }
        // ∂/∂ξ_k = β_D Σ_j c_k(j) ∇V^a(x_j)
        let mut grad_phi = vec![0.0; beads * dim];
        for (row, g) in self.table.chunks_exact(beads).zip(gbuf.chunks_exact(dim)) {
            for (k, &c) in row.iter().enumerate() {
                for i in 0..dim {
                    grad_phi[k * dim + i] += self.beta_d * c * g[i];
                }
            }
        }
        ModeState { xi, phi: self.beta_d * phi, grad_phi, obs: obs / beads as f64 }
    }

    fn energy(&self, s: &ModeState) -> f64 {
        let quad: f64 = s
            .xi
            .chunks_exact(self.dim)
            .zip(&self.precond)
            .map(|(v, pk)| v.iter().map(|u| u * u).sum::<f64>() / pk)
            .sum();
        0.5 * quad + s.phi
    }

    /// Mean of the proposal from `s`: `ξ − h P ∇E = (1 − h)ξ − h P ∇Φ`.
    fn drift(&self, s: &ModeState, h: f64) -> Vec<f64> {
        let dim = self.dim;
        s.xi
            .iter()
            .zip(&s.grad_phi)
            .enumerate()
            .map(|(i, (&v, &g))| (1.0 - h) * v - h * self.precond[i / dim] * g)
            .collect()
    }

    /// `ln q(to | from)` up to a constant.
    fn log_proposal(&self, to: &ModeState, mean_from: &[f64], h: f64) -> f64 {
        let dim = self.dim;
        -to.xi
            .iter()
            .zip(mean_from)
            .enumerate()
            .map(|(i, (t, m))| (t - m) * (t - m) / (4.0 * h * self.precond[i / dim]))
            .sum::<f64>()
    }
}

struct ChainOutput {
    batch_means: Vec<f64>,
    accepted: usize,
    proposed: usize,
}

fn run_chain(t: &Target<'_>, cfg: &StdSamplerConfig, chain: u64) -> Result<ChainOutput> {
    let mut rng = StreamKey::new(cfg.seed, chain).rng();
    let n = t.beads * t.dim;
    let h = cfg.step_h;
    let mut gbuf = vec![0.0; n];
    let xi0: Vec<f64> = (0..n)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            t.precond[i / t.dim].sqrt() * z
        })
        .collect();
    let mut cur = t.state(xi0, &mut gbuf);
    let mut cur_e = t.energy(&cur);
    let mut cur_mean = t.drift(&cur, h);

    let burn = cfg.n_steps - cfg.kept();
    let kept = cfg.kept();
    let mut sums = vec![0.0; cfg.n_batches];
    let mut counts = vec![0usize; cfg.n_batches];
    let (mut accepted, mut proposed) = (0, 0);

    for step in 0..cfg.n_steps {
        let xi: Vec<f64> = cur_mean
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let z: f64 = rng.sample(StandardNormal);
                m + (2.0 * h * t.precond[i / t.dim]).sqrt() * z
            })
            .collect();
        let prop = t.state(xi, &mut gbuf);
        let prop_e = t.energy(&prop);
        if !prop_e.is_finite() || prop_e > cfg.divergence_threshold {
            return Err(Error::SamplerDiverged { chain, step, energy: prop_e });
        }
        proposed += 1;
        let accept = if cfg.metropolis {
            let prop_mean = t.drift(&prop, h);
            let log_r = cur_e - prop_e + t.log_proposal(&cur, &prop_mean, h) - t.log_proposal(&prop, &cur_mean, h);
            let u: f64 = rng.random();
            if log_r >= 0.0 || u < log_r.exp() {
                cur_mean = prop_mean;
                true
            } else {
                false
            }
        } else {
            cur_mean = t.drift(&prop, h);
            true
        };
        if accept {
            cur = prop;
            cur_e = prop_e;
            accepted += 1;
        }
        if step >= burn {
            let b = ((step - burn) * cfg.n_batches) / kept;
            sums[b] += cur.obs;
            counts[b] += 1;
        }
    }
    let batch_means = sums.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(s, &c)| s / c as f64).collect();
    Ok(ChainOutput { batch_means, accepted, proposed })
}

/// `⟨O⟩_{β,D}^std` by preconditioned overdamped Langevin on `π_D^std`.
///
/// The chain moves in the `D` grid normal modes, where the spring term is
/// diagonal with stiffness `ω_{k,D}² + a²`; the Euler–Maruyama step is
/// preconditioned by its inverse, so the free ring polymer is integrated
/// stably at every `D`. Each step scores `(1/D) Σ_j O(x_j)`; the error bar
/// comes from batch means pooled over independent chains.
pub fn sample_std(
    p: &PotentialSpec,
    o: &ObservableSpec,
    beta: f64,
    beads: usize,
    cfg: &StdSamplerConfig,
) -> Result<EstimatorResult> {
    cfg.validate()?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    if beads == 0 {
        return Err(invalid("bead count must be positive"));
    }
    if p.dim != o.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: o.dim });
    }
    let start = Instant::now();
    let a2 = p.a * p.a;
    let target = Target {
        p,
        o,
        beads,
        dim: p.dim,
        beta_d: beta / beads as f64,
        table: grid_mode_table(beta, beads, beads),
        precond: (0..beads)
            .map(|k| {
                let w = discrete_frequency(beta, beads, k);
                1.0 / (w * w + a2)
            })
            .collect(),
    };
    let chains: Vec<ChainOutput> = (0..cfg.n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain(&target, cfg, c))
        .collect::<Result<_>>()?;

    let means: Vec<f64> = chains.iter().flat_map(|c| c.batch_means.iter().copied()).collect();
    let nb = means.len() as f64;
    let estimate = means.iter().sum::<f64>() / nb;
    let var = means.iter().map(|m| (m - estimate) * (m - estimate)).sum::<f64>() / (nb - 1.0);
    let std_error = (var / nb).sqrt();
    let n_samples = cfg.kept() * cfg.n_chains;
    // Batch-means ESS: the sample count that would give the same error under
    // independence, using the pooled batch variance as the per-sample scale.
    let per_sample_var = var * (n_samples as f64 / nb);
    let ess = if std_error > 0.0 {
        (per_sample_var / (std_error * std_error)).min(n_samples as f64)
    } else {
        n_samples as f64
    };
    let accepted: usize = chains.iter().map(|c| c.accepted).sum();
    let proposed: usize = chains.iter().map(|c| c.proposed).sum();
    Ok(EstimatorResult {
        estimate,
        std_error,
        n_samples,
        ess,
        seed: cfg.seed,
        representation: Representation::Std { beads },
        ess_warning: false,
        acceptance: Some(accepted as f64 / proposed as f64),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::trotter_trace;
    use crate::potentials::ObservableKind;
    use crate::spectral::{grid_to_modes, SpectralBasis};
    use rand::Rng;

    fn harmonic() -> PotentialSpec {
        PotentialSpec::harmonic(1.0, 1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_loop_energy() {
        let p = PotentialSpec::soft_bumped(1.0, 0.2, 2.0, 1, 1.0, 0.4).unwrap();
        let rp = RingPolymer::new(1.7, 1, vec![0.3; 9]).unwrap();
        let e = std_energy(&rp, &p).unwrap();
        assert!((e - 1.7 * p.value(&[0.3])).abs() < 1e-14);
    }

    #[test]
    fn two_bead_spring() {
        let p = PotentialSpec::harmonic(1e-300, 1, 1.0, 1.0).unwrap();
        let rp = RingPolymer::new(2.0, 1, vec![0.0, 1.5]).unwrap();
        let e = std_energy(&rp, &p).unwrap();
        assert!((e - 1.5 * 1.5 / 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_identity_in_modes() {
        let p = PotentialSpec::soft_bumped(1.0, 0.2, 2.0, 1, 1.0, 0.4).unwrap();
        let mut rng = StreamKey::new(11, 0).rng();
        for &d in &[2usize, 3, 4, 8, 64] {
            for _ in 0..20 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let rp = RingPolymer::new(1.3, 1, x).unwrap();
                let lp = grid_to_modes(&rp, d).unwrap();
                let lhs = std_energy(&rp, &p).unwrap();
                let rhs = normal_mode_energy(&lp, d, &p).unwrap();
                assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "D={d}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = PotentialSpec::soft_bumped(1.0, 0.2, 2.0, 2, 1.0, 0.4).unwrap();
        let mut rng = StreamKey::new(2, 0).rng();
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rp = RingPolymer::new(1.0, 2, x.clone()).unwrap();
        let g = std_energy_grad(&rp, &p).unwrap();
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let ep = std_energy(&RingPolymer::new(1.0, 2, xp).unwrap(), &p).unwrap();
            let em = std_energy(&RingPolymer::new(1.0, 2, xm).unwrap(), &p).unwrap();
            assert!(((ep - em) / (2.0 * eps) - g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mode_energy_rejects_aliasing() {
        let lp = NormalModeLoop::zeros(SpectralBasis::new(1.0, 5).unwrap(), 1);
        assert!(normal_mode_energy(&lp, 4, &harmonic()).is_err());
    }

    fn small_cfg(seed: u64) -> StdSamplerConfig {
        StdSamplerConfig { n_steps: 20_000, n_chains: 2, seed, ..Default::default() }
    }

    #[test]
    fn constant_observable_is_exact() {
        let o = ObservableSpec::constant(1.0, 1).unwrap();
        let r = sample_std(&harmonic(), &o, 2.0, 8, &small_cfg(1)).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn odd_observable_vanishes() {
        let p = PotentialSpec::soft_bumped(1.0, 0.2, 2.0, 1, 1.0, 0.4).unwrap();
        let o = ObservableSpec::new(ObservableKind::Position, 1, 10.0).unwrap();
        let r = sample_std(&p, &o, 2.0, 16, &small_cfg(2)).unwrap();
        assert!(r.estimate.abs() < 3.0 * r.std_error, "{r:?}");
        assert!(r.ess <= r.n_samples as f64);
    }

    #[test]
    fn matches_trotter_trace() {
        let o = ObservableSpec::new(ObservableKind::Square, 1, 100.0).unwrap();
        let cfg = StdSamplerConfig { n_steps: 100_000, n_chains: 4, seed: 3, ..Default::default() };
        let r = sample_std(&harmonic(), &o, 2.0, 16, &cfg).unwrap();
        let t = trotter_trace(&harmonic(), &o, 2.0, 16, 400, 8.0).unwrap();
        assert!((r.estimate - t).abs() < 3.0 * r.std_error, "{} vs {t} (se {})", r.estimate, r.std_error);
        assert!(r.acceptance.unwrap() > 0.5);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let o = ObservableSpec::new(ObservableKind::TanhSquared, 1, 1.0).unwrap();
        let a = sample_std(&harmonic(), &o, 1.0, 8, &small_cfg(5)).unwrap();
        let b = sample_std(&harmonic(), &o, 1.0, 8, &small_cfg(5)).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn divergence_is_reported() {
        let p = PotentialSpec::quartic(1, 1.0, 1.0).unwrap();
        let o = ObservableSpec::new(ObservableKind::Square, 1, 1.0).unwrap();
        let cfg = StdSamplerConfig { divergence_threshold: 1e-3, ..small_cfg(1) };
        assert!(matches!(sample_std(&p, &o, 1.0, 4, &cfg), Err(Error::SamplerDiverged { .. })));
    }

    #[test]
    fn rejects_bad_step() {
        let o = ObservableSpec::constant(1.0, 1).unwrap();
        let cfg = StdSamplerConfig { step_h: 2.5, ..small_cfg(1) };
        assert!(sample_std(&harmonic(), &o, 1.0, 4, &cfg).is_err());
    }
}
