//! Normal-mode basis of the imaginary-time torus `[0, β]`.
//!
//! Mode 0 is the constant `1/√β`; modes `2k−1` and `2k` are the sine and
//! cosine of frequency `ω = 2kπ/β`, both normalised to `√(2/β)`. Loops are
//! stored by their mode coefficients; grid values are derived on demand.
//!
//! On an even grid of `D` beads the top sine (`k = D−1`, frequency `Dπ/β`)
//! vanishes at every bead. The grid transforms therefore replace it with its
//! same-frequency cosine `(−1)^j/√β`, which keeps the `N = D` transform an
//! exact bijection.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const TAU_SLACK: f64 = 1e-12;

/// Frequencies and eigenfunctions of `−d²/dτ²` on the torus, truncated to
/// `n_modes` modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub beta: f64,
    pub n_modes: usize,
}

impl SpectralBasis {
    pub fn new(beta: f64, n_modes: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        if n_modes == 0 {
            return Err(invalid("mode count must be positive"));
        }
        Ok(Self { beta, n_modes })
    }

    /// `ω_k`.
    pub fn frequency(&self, k: usize) -> f64 {
        mode_frequency(self.beta, k)
    }

    /// `c_k(τ)`, range-checked.
    pub fn eval_mode(&self, k: usize, tau: f64) -> Result<f64> {
        if k >= self.n_modes {
            return Err(invalid(format!("mode index {k} out of range 0..{}", self.n_modes)));
        }
        self.check_tau(tau)?;
        Ok(mode_value(self.beta, k, tau))
    }

    fn check_tau(&self, tau: f64) -> Result<()> {
        let slack = TAU_SLACK * self.beta;
        if !(tau >= -slack && tau <= self.beta + slack) {
            return Err(invalid(format!("tau = {tau} outside [0, {}]", self.beta)));
        }
        Ok(())
    }
}

/// Index of the frequency pair a mode belongs to: 0 for the constant mode,
/// `k` for modes `2k−1` and `2k`.
#[inline]
pub fn pair_index(k: usize) -> usize {
    (k + 1) / 2
}

#[inline]
pub fn mode_frequency(beta: f64, k: usize) -> f64 {
    2.0 * PI * pair_index(k) as f64 / beta
}

/// Unchecked `c_k(τ)`.
#[inline]
pub fn mode_value(beta: f64, k: usize, tau: f64) -> f64 {
    if k == 0 {
        return (1.0 / beta).sqrt();
    }
    let arg = mode_frequency(beta, k) * tau;
    let amp = (2.0 / beta).sqrt();
    if k % 2 == 1 {
        amp * arg.sin()
    } else {
        amp * arg.cos()
    }
}

/// Mode `k` sampled at bead `j` of a `beads`-point grid, with the Nyquist
/// substitution for even grids.
#[inline]
pub fn grid_mode_value(beta: f64, beads: usize, k: usize, j: usize) -> f64 {
    if beads % 2 == 0 && k == beads - 1 {
        let s = (1.0 / beta).sqrt();
        return if j % 2 == 0 { s } else { -s };
    }
    // Reduce the phase exactly on the integer lattice before taking sin/cos.
    if k == 0 {
        return (1.0 / beta).sqrt();
    }
    let m = pair_index(k);
    let phase = 2.0 * PI * ((m * j) % beads) as f64 / beads as f64;
    let amp = (2.0 / beta).sqrt();
    if k % 2 == 1 {
        amp * phase.sin()
    } else {
        amp * phase.cos()
    }
}

/// `ω_{k,D} = (2/β_D)·sin(mπ/D)` with `m` the pair index: the eigenvalues of
/// the cyclic ring-polymer spring matrix, which tend to `ω_k` as `D → ∞`.
pub fn discrete_frequency(beta: f64, beads: usize, k: usize) -> f64 {
    let beta_d = beta / beads as f64;
    let m = pair_index(k);
    (2.0 / beta_d) * (m as f64 * PI / beads as f64).sin()
}

/// Row-major table `table[i * n_modes + k] = c_k(nodes[i])`.
pub fn mode_table(beta: f64, n_modes: usize, nodes: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(nodes.len() * n_modes);
    for &tau in nodes {
        t.extend((0..n_modes).map(|k| mode_value(beta, k, tau)));
    }
    t
}

/// Row-major table of the grid transform, `table[j * n_modes + k]`.
pub fn grid_mode_table(beta: f64, beads: usize, n_modes: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(beads * n_modes);
    for j in 0..beads {
        t.extend((0..n_modes).map(|k| grid_mode_value(beta, beads, k, j)));
    }
    t
}

/// Writes `x_i = Σ_k table[i,k] ξ_k` for every node `i` (each `dim`-wide).
#[inline]
pub fn synthesize(table: &[f64], n_modes: usize, xi: &[f64], dim: usize, out: &mut [f64]) {
    let n_nodes = table.len() / n_modes;
    debug_assert!(xi.len() >= n_modes * dim);
    debug_assert_eq!(out.len(), n_nodes * dim);
    if dim == 1 {
        for (o, row) in out.iter_mut().zip(table.chunks_exact(n_modes)) {
            *o = row.iter().zip(xi).map(|(c, x)| c * x).sum();
        }
        return;
    }
    for (o, row) in out.chunks_exact_mut(dim).zip(table.chunks_exact(n_modes)) {
        o.iter_mut().for_each(|v| *v = 0.0);
        for (k, &c) in row.iter().enumerate() {
            for (v, &x) in o.iter_mut().zip(&xi[k * dim..(k + 1) * dim]) {
                *v += c * x;
            }
        }
    }
}

/// A loop `x_N(τ) = Σ_{k<N} ξ_k c_k(τ)` held by its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModeLoop {
    pub basis: SpectralBasis,
    pub dim: usize,
    /// Row-major `N × d`.
    pub xi: Vec<f64>,
}

impl NormalModeLoop {
    pub fn new(basis: SpectralBasis, dim: usize, xi: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("loop dimension must be positive"));
        }
        if xi.len() != basis.n_modes * dim {
            return Err(Error::DimensionMismatch { expected: basis.n_modes * dim, got: xi.len() });
        }
        Ok(Self { basis, dim, xi })
    }

    pub fn zeros(basis: SpectralBasis, dim: usize) -> Self {
        Self { basis, dim, xi: vec![0.0; basis.n_modes * dim] }
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        &self.xi[k * self.dim..(k + 1) * self.dim]
    }

    pub fn mode_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.xi[k * self.dim..(k + 1) * self.dim]
    }

    /// `x_N(τ)`.
    pub fn eval(&self, tau: f64) -> Result<Vec<f64>> {
        self.basis.check_tau(tau)?;
        let mut out = vec![0.0; self.dim];
        for k in 0..self.n_modes() {
            let c = mode_value(self.basis.beta, k, tau);
            for (o, &x) in out.iter_mut().zip(self.mode(k)) {
                *o += c * x;
            }
        }
        Ok(out)
    }

    /// `Σ_k |ξ_k|²`, which equals `∫₀^β |x_N|² dτ`.
    pub fn norm_sq(&self) -> f64 {
        self.xi.iter().map(|x| x * x).sum()
    }
}

/// Grid values `x_j ≈ x(jβ_D)` on the torus; indices are cyclic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingPolymer {
    pub beta: f64,
    pub dim: usize,
    /// Row-major `D × d`.
    pub x: Vec<f64>,
}

impl RingPolymer {
    pub fn new(beta: f64, dim: usize, x: Vec<f64>) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        if dim == 0 || x.is_empty() || x.len() % dim != 0 {
            return Err(invalid("ring polymer needs at least one bead of positive dimension"));
        }
        Ok(Self { beta, dim, x })
    }

    pub fn beads(&self) -> usize {
        self.x.len() / self.dim
    }

    /// `β_D = β/D`.
    pub fn beta_d(&self) -> f64 {
        self.beta / self.beads() as f64
    }

    /// Bead `j`, with `j` taken modulo `D`.
    pub fn bead(&self, j: usize) -> &[f64] {
        let j = j % self.beads();
        &self.x[j * self.dim..(j + 1) * self.dim]
    }
}

/// `ξ_k = β_D Σ_j x_j c_k(jβ_D)` for `k < n_modes`.
pub fn grid_to_modes(rp: &RingPolymer, n_modes: usize) -> Result<NormalModeLoop> {
    let beads = rp.beads();
    if n_modes > beads {
        return Err(invalid(format!(
            "cannot resolve {n_modes} modes from {beads} beads (aliasing)"
        )));
    }
    let basis = SpectralBasis::new(rp.beta, n_modes)?;
    let beta_d = rp.beta_d();
    let mut lp = NormalModeLoop::zeros(basis, rp.dim);
    for k in 0..n_modes {
        let dim = rp.dim;
        let xi = lp.mode_mut(k);
        for j in 0..beads {
            let c = grid_mode_value(rp.beta, beads, k, j);
            for (v, &x) in xi.iter_mut().zip(&rp.x[j * dim..(j + 1) * dim]) {
                *v += c * x;
            }
        }
        xi.iter_mut().for_each(|v| *v *= beta_d);
    }
    Ok(lp)
}

/// `x_j = x_N(jβ_D)` for `j < beads`; requires `beads ≥ N`.
pub fn modes_to_grid(lp: &NormalModeLoop, beads: usize) -> Result<RingPolymer> {
    let n = lp.n_modes();
    if beads < n {
        return Err(invalid(format!("{beads} beads cannot carry {n} modes (aliasing)")));
    }
    let table = grid_mode_table(lp.basis.beta, beads, n);
    let mut x = vec![0.0; beads * lp.dim];
    synthesize(&table, n, &lp.xi, lp.dim, &mut x);
    RingPolymer::new(lp.basis.beta, lp.dim, x)
}

/// Draws a loop from the Gaussian measure `ν`: independent
/// `ξ_k ~ N(0, I_d/(ω_k² + a²))`, consumed mode by mode and component by
/// component so that a prefix of modes is identical across truncations.
pub fn sample_nu<R: Rng + ?Sized>(
    basis: &SpectralBasis,
    dim: usize,
    a: f64,
    rng: &mut R,
) -> Result<NormalModeLoop> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("a must be positive for the loop measure, got {a}")));
    }
    let sd = nu_std_devs(basis.beta, basis.n_modes, a);
    let mut lp = NormalModeLoop::zeros(*basis, dim);
    fill_nu(&sd, dim, rng, &mut lp.xi);
    Ok(lp)
}

/// Standard deviations `1/√(ω_k² + a²)`.
pub fn nu_std_devs(beta: f64, n_modes: usize, a: f64) -> Vec<f64> {
    (0..n_modes)
        .map(|k| {
            let w = mode_frequency(beta, k);
            1.0 / (w * w + a * a).sqrt()
        })
        .collect()
}

#[inline]
pub(crate) fn fill_nu<R: Rng + ?Sized>(sd: &[f64], dim: usize, rng: &mut R, xi: &mut [f64]) {
    for (k, &s) in sd.iter().enumerate() {
        for v in &mut xi[k * dim..(k + 1) * dim] {
            let z: f64 = rng.sample(StandardNormal);
            *v = s * z;
        }
    }
}

/// How to evaluate the loop covariance `E_ν[x(0)·x(τ)]/d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum CovarianceMethod {
    /// Truncated sum over `k ≤ k_max` of the mode expansion.
    Spectral { k_max: usize },
    /// Periodic Green's function of `−d²/dτ² + a²`.
    Closed,
    /// Off-diagonal of the inverted 2×2 precision built from two Mehler
    /// kernels.
    Mehler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceValue {
    pub value: f64,
    /// Bound on the truncation error (zero for the exact methods).
    pub tail_bound: f64,
}

pub fn covariance(beta: f64, a: f64, tau: f64, method: CovarianceMethod) -> Result<CovarianceValue> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("a must be positive, got {a}")));
    }
    let slack = TAU_SLACK * beta;
    if !(tau >= -slack && tau <= beta + slack) {
        return Err(invalid(format!("tau = {tau} outside [0, {beta}]")));
    }
    let tau = tau.clamp(0.0, beta);
    match method {
        CovarianceMethod::Closed => Ok(CovarianceValue { value: closed_covariance(beta, a, tau), tail_bound: 0.0 }),
        CovarianceMethod::Spectral { k_max } => Ok(spectral_covariance(beta, a, tau, k_max)),
        CovarianceMethod::Mehler => {
            if tau <= 0.0 || tau >= beta {
                return Err(invalid("Mehler covariance is singular at tau = 0 and tau = beta"));
            }
            Ok(CovarianceValue { value: mehler_covariance(beta, a, tau), tail_bound: 0.0 })
        }
    }
}

/// `cosh(a(β/2−τ)) / (2a·sinh(aβ/2))`, written with decaying exponentials.
fn closed_covariance(beta: f64, a: f64, tau: f64) -> f64 {
    let num = (-a * tau).exp() + (-a * (beta - tau)).exp();
    num / (2.0 * a * (-(-a * beta).exp_m1()))
}

fn spectral_covariance(beta: f64, a: f64, tau: f64, k_max: usize) -> CovarianceValue {
    let a2 = a * a;
    let theta = 2.0 * PI * tau / beta;
    let term = |k: usize| {
        let w = 2.0 * PI * k as f64 / beta;
        (2.0 / beta) / (w * w + a2)
    };
    // Smallest terms first.
    let mut s = 0.0;
    for k in (1..=k_max).rev() {
        s += term(k) * (k as f64 * theta).cos();
    }
    let value = 1.0 / (beta * a2) + s;

    // Σ_{k>K} term(k) ≤ β/(2π²K); with oscillation, Abel summation gives
    // term(K+1)/|sin(θ/2)|.
    let crude = if k_max == 0 { f64::INFINITY } else { beta / (2.0 * PI * PI * k_max as f64) };
    let half = (0.5 * theta).sin().abs();
    let abel = if half > 0.0 { term(k_max + 1) / half } else { f64::INFINITY };
    CovarianceValue { value, tail_bound: crude.min(abel) }
}

/// With `A = a/tanh(aτ) + a/tanh(a(β−τ))` and `B = a/sinh(aτ) + a/sinh(a(β−τ))`
/// the pair `(x(0), x(τ))` has precision `[[A, −B], [−B, A]]`; the
/// off-diagonal covariance is `B/(A²−B²)`.
fn mehler_covariance(beta: f64, a: f64, tau: f64) -> f64 {
    let (u, v) = (a * tau, a * (beta - tau));
    let big_a = a / u.tanh() + a / v.tanh();
    let big_b = a / u.sinh() + a / v.sinh();
    // coth x − csch x = tanh(x/2); avoids cancellation in A − B.
    let diff = a * ((0.5 * u).tanh() + (0.5 * v).tanh());
    big_b / (diff * (big_a + big_b))
}

/// `C0 = (dβ/2a)·coth(aβ/2)`, the `ν`-expected squared loop norm.
pub fn c0_constant(dim: usize, beta: f64, a: f64) -> f64 {
    dim as f64 * beta / (2.0 * a) / (0.5 * a * beta).tanh()
}

/// `E_ν|x(τ1) − x(τ2)|²`. With `Some(N)` the exact sum over the first `N`
/// modes; with `None` the untruncated value `2d(C(0) − C(τ1−τ2))`.
pub fn increment_msd(
    beta: f64,
    a: f64,
    dim: usize,
    tau1: f64,
    tau2: f64,
    n_modes: Option<usize>,
) -> Result<f64> {
    let basis = SpectralBasis::new(beta, n_modes.unwrap_or(1))?;
    basis.check_tau(tau1)?;
    basis.check_tau(tau2)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("a must be positive, got {a}")));
    }
    if tau1 == tau2 {
        return Ok(0.0);
    }
    let d = dim as f64;
    match n_modes {
        Some(n) => {
            let mut s = 0.0;
            for k in (1..n).rev() {
                let w = mode_frequency(beta, k);
                let diff = mode_value(beta, k, tau1) - mode_value(beta, k, tau2);
                s += diff * diff / (w * w + a * a);
            }
            Ok(d * s)
        }
        None => {
            let lag = (tau1 - tau2).abs();
            let c0 = closed_covariance(beta, a, 0.0);
            let ct = closed_covariance(beta, a, lag.min(beta));
            Ok(2.0 * d * (c0 - ct))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn mode_values() {
        let b = SpectralBasis::new(4.0, 8).unwrap();
        assert_eq!(b.eval_mode(0, 1.3).unwrap(), 0.5);
        let b = SpectralBasis::new(2.0 * PI, 8).unwrap();
        assert!((b.eval_mode(2, 0.0).unwrap() - (1.0 / PI).sqrt()).abs() < 1e-15);
        assert_eq!(b.eval_mode(1, 0.0).unwrap(), 0.0);
        assert!(b.eval_mode(8, 0.0).is_err());
        assert!(b.eval_mode(1, 7.0).is_err());
    }

    #[test]
    fn frequencies_pair_up() {
        let b = SpectralBasis::new(2.0, 7).unwrap();
        assert_eq!(b.frequency(0), 0.0);
        for k in 1..4 {
            let w = 2.0 * k as f64 * PI / 2.0;
            assert_eq!(b.frequency(2 * k - 1), w);
            assert_eq!(b.frequency(2 * k), w);
        }
    }

    #[test]
    fn loop_eval_cases() {
        let beta = 2.0 * PI;
        let basis = SpectralBasis::new(beta, 5).unwrap();
        let zero = NormalModeLoop::zeros(basis, 2);
        assert_eq!(zero.eval(1.0).unwrap(), vec![0.0, 0.0]);

        let mut c = NormalModeLoop::zeros(basis, 2);
        c.mode_mut(0).copy_from_slice(&[1.0, -2.0]);
        for tau in [0.0, 1.0, beta] {
            let v = c.eval(tau).unwrap();
            assert!((v[0] - 1.0 / beta.sqrt()).abs() < 1e-15);
            assert!((v[1] + 2.0 / beta.sqrt()).abs() < 1e-15);
        }

        let mut s = NormalModeLoop::zeros(basis, 1);
        s.mode_mut(1)[0] = 1.0;
        let v = s.eval(PI / 2.0).unwrap()[0];
        let expect = (1.0 / PI).sqrt() * (PI / 2.0).sin();
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn loops_are_periodic() {
        let basis = SpectralBasis::new(3.0, 9).unwrap();
        let lp = sample_nu(&basis, 2, 1.0, &mut StreamKey::new(1, 0).rng()).unwrap();
        let (x0, xb) = (lp.eval(0.0).unwrap(), lp.eval(3.0).unwrap());
        for (u, v) in x0.iter().zip(&xb) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_grid_maps_to_mode_zero() {
        let beta = 1.7;
        let rp = RingPolymer::new(beta, 2, [0.3, -1.1].repeat(6)).unwrap();
        let lp = grid_to_modes(&rp, 6).unwrap();
        assert!((lp.mode(0)[0] - 0.3 * beta.sqrt()).abs() < 1e-14);
        assert!((lp.mode(0)[1] + 1.1 * beta.sqrt()).abs() < 1e-14);
        for k in 1..6 {
            assert!(lp.mode(k).iter().all(|v| v.abs() < 1e-14), "mode {k}: {:?}", lp.mode(k));
        }
    }

    #[test]
    fn sampled_mode_one_recovers_unit_coefficient() {
        let beta = 2.5;
        let d = 8;
        let x: Vec<f64> = (0..d).map(|j| mode_value(beta, 1, j as f64 * beta / d as f64)).collect();
        let lp = grid_to_modes(&RingPolymer::new(beta, 1, x).unwrap(), d).unwrap();
        for k in 0..d {
            let expect = if k == 1 { 1.0 } else { 0.0 };
            assert!((lp.mode(k)[0] - expect).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn grid_transform_rejects_aliasing() {
        let rp = RingPolymer::new(1.0, 1, vec![0.0; 4]).unwrap();
        assert!(grid_to_modes(&rp, 5).is_err());
        let lp = NormalModeLoop::zeros(SpectralBasis::new(1.0, 5).unwrap(), 1);
        assert!(modes_to_grid(&lp, 4).is_err());
    }

    #[test]
    fn modes_to_grid_cases() {
        let beta = 1.3;
        let basis = SpectralBasis::new(beta, 4).unwrap();
        let zero = modes_to_grid(&NormalModeLoop::zeros(basis, 1), 8).unwrap();
        assert!(zero.x.iter().all(|&v| v == 0.0));

        let mut c = NormalModeLoop::zeros(basis, 1);
        c.mode_mut(0)[0] = 0.7 * beta.sqrt();
        let g = modes_to_grid(&c, 8).unwrap();
        assert!(g.x.iter().all(|v| (v - 0.7).abs() < 1e-14));

        let mut s = NormalModeLoop::zeros(basis, 1);
        s.mode_mut(1)[0] = 1.0;
        let g = modes_to_grid(&s, 8).unwrap();
        for j in 0..8 {
            let tau = j as f64 * beta / 8.0;
            assert!((g.x[j] - s.eval(tau).unwrap()[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn nyquist_substitution_only_on_even_grids() {
        let beta = 2.0;
        // odd grid: plain sampling
        for j in 0..5 {
            let tau = j as f64 * beta / 5.0;
            assert!((grid_mode_value(beta, 5, 4, j) - mode_value(beta, 4, tau)).abs() < 1e-14);
        }
        // even grid: top mode is the alternating cosine
        for j in 0..6 {
            let expect = if j % 2 == 0 { 1.0 } else { -1.0 } / beta.sqrt();
            assert!((grid_mode_value(beta, 6, 5, j) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn discrete_frequency_limit() {
        let beta = 2.0;
        for k in 0..7 {
            let d = discrete_frequency(beta, 1 << 16, k);
            assert!((d - mode_frequency(beta, k)).abs() < 1e-6 * (1.0 + mode_frequency(beta, k)));
        }
    }

    #[test]
    fn sample_nu_requires_positive_a() {
        let basis = SpectralBasis::new(1.0, 3).unwrap();
        let mut rng = StreamKey::new(0, 0).rng();
        assert!(sample_nu(&basis, 1, 0.0, &mut rng).is_err());
        assert!(sample_nu(&basis, 1, -1.0, &mut rng).is_err());
    }

    #[test]
    fn closed_covariance_at_zero() {
        let c = covariance(2.0, 1.0, 0.0, CovarianceMethod::Closed).unwrap().value;
        // coth(1)/2
        assert!((c - 0.656_517_642_749_665).abs() < 1e-12, "{c}");
    }

    #[test]
    fn closed_covariance_is_symmetric() {
        for tau in [0.0, 0.3, 0.77, 1.0] {
            let a = covariance(2.0, 1.3, tau, CovarianceMethod::Closed).unwrap().value;
            let b = covariance(2.0, 1.3, 2.0 - tau, CovarianceMethod::Closed).unwrap().value;
            assert!((a - b).abs() <= 1e-16 * a.abs().max(1.0), "{tau}");
        }
    }

    #[test]
    fn mehler_covariance_rejects_endpoints() {
        assert!(covariance(2.0, 1.0, 0.0, CovarianceMethod::Mehler).is_err());
        assert!(covariance(2.0, 1.0, 2.0, CovarianceMethod::Mehler).is_err());
        assert!(covariance(2.0, 1.0, 2.5, CovarianceMethod::Closed).is_err());
    }

    #[test]
    fn spectral_covariance_at_third() {
        let beta = 2.0;
        let s = covariance(beta, 1.0, beta / 3.0, CovarianceMethod::Spectral { k_max: 100_000 }).unwrap();
        let c = covariance(beta, 1.0, beta / 3.0, CovarianceMethod::Closed).unwrap();
        assert!((s.value - c.value).abs() < 1e-8);
        assert!(s.tail_bound < 1e-8);
    }

    #[test]
    fn c0_values() {
        assert!((c0_constant(1, 2.0, 1.0) - 1.0f64 / 1.0f64.tanh()).abs() < 1e-14);
        assert!((c0_constant(1, 2.0, 1.0) - 1.313_035_285_499_331).abs() < 1e-12);
        assert_eq!(c0_constant(2, 3.0, 0.5), 2.0 * c0_constant(1, 3.0, 0.5));
    }

    #[test]
    fn increment_msd_cases() {
        assert_eq!(increment_msd(2.0, 1.0, 1, 0.4, 0.4, None).unwrap(), 0.0);
        assert_eq!(increment_msd(2.0, 1.0, 1, 0.4, 0.4, Some(16)).unwrap(), 0.0);
        let (beta, delta) = (2.0, 0.3);
        let a = increment_msd(beta, 1.0, 1, 0.0, beta - delta, None).unwrap();
        let b = increment_msd(beta, 1.0, 1, 0.0, delta, None).unwrap();
        assert!((a - b).abs() < 1e-14);
        let a = increment_msd(beta, 1.0, 1, 0.0, beta - delta, Some(33)).unwrap();
        let b = increment_msd(beta, 1.0, 1, 0.0, delta, Some(33)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn truncated_msd_approaches_full() {
        let full = increment_msd(2.0, 1.0, 2, 0.2, 1.1, None).unwrap();
        let trunc = increment_msd(2.0, 1.0, 2, 0.2, 1.1, Some(200_001)).unwrap();
        assert!((full - trunc).abs() < 1e-5, "{full} {trunc}");
    }
}
