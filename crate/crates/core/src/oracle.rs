//! Exact reference machinery: the Mehler and heat kernels, a finite-difference
//! grid Hamiltonian for `d = 1`, and a matrix-level Trotter product.
//!
//! Kernel math is carried in log space. Thermal traces are formed from
//! eigenvalues shifted by the ground-state energy so `e^{−βE}` never
//! underflows.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::potentials::{norm_sq, ObservableSpec, PotentialSpec};

fn check_pair(q: &[f64], qt: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(invalid("kernel arguments must have positive dimension"));
    }
    if q.len() != qt.len() {
        return Err(Error::DimensionMismatch { expected: q.len(), got: qt.len() });
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// `ln ⟨q| e^{−βĤ^a} |q̃⟩` for `Ĥ^a = p̂²/2 + a²q̂²/2`.
pub fn log_mehler_kernel(q: &[f64], qt: &[f64], beta: f64, a: f64) -> Result<f64> {
    check_pair(q, qt)?;
    check_positive("beta", beta)?;
    check_positive("a", a)?;
    let d = q.len() as f64;
    let x = a * beta;
    let e2 = -(-2.0 * x).exp_m1(); // 1 − e^{−2x}
    let ln_sinh = x + e2.ln() - std::f64::consts::LN_2;
    let a_coth = a / x.tanh();
    let a_csch = 2.0 * a * (-x).exp() / e2;
    let dot: f64 = q.iter().zip(qt).map(|(u, v)| u * v).sum();
    let prefactor = 0.5 * d * (a.ln() - (2.0 * PI).ln() - ln_sinh);
    Ok(prefactor - 0.5 * a_coth * (norm_sq(q) + norm_sq(qt)) + a_csch * dot)
}

/// The Mehler kernel `⟨q| e^{−βĤ^a} |q̃⟩`.
pub fn mehler_kernel(q: &[f64], qt: &[f64], beta: f64, a: f64) -> Result<f64> {
    log_mehler_kernel(q, qt, beta, a).map(f64::exp)
}

/// `ln ⟨q| e^{−βĤ⁰} |q̃⟩`, the free-particle heat kernel.
pub fn log_heat_kernel(q: &[f64], qt: &[f64], beta: f64) -> Result<f64> {
    check_pair(q, qt)?;
    check_positive("beta", beta)?;
    let d = q.len() as f64;
    let r2: f64 = q.iter().zip(qt).map(|(u, v)| (u - v) * (u - v)).sum();
    Ok(-0.5 * d * (2.0 * PI * beta).ln() - r2 / (2.0 * beta))
}

pub fn heat_kernel(q: &[f64], qt: &[f64], beta: f64) -> Result<f64> {
    log_heat_kernel(q, qt, beta).map(f64::exp)
}

/// Dirichlet finite-difference Hamiltonian `−½Δ_h + V` on the interior
/// points `q_i = −Q + (i+1)h`, `h = 2Q/(n+1)`. Tridiagonal, stored as its
/// diagonal and the constant off-diagonal.
#[derive(Debug, Clone)]
pub struct GridHamiltonian {
    pub q: Vec<f64>,
    pub h: f64,
    pub q_max: f64,
    pub diag: Vec<f64>,
    pub off: f64,
}

impl GridHamiltonian {
    pub fn new(p: &PotentialSpec, n_grid: usize, q_max: f64) -> Result<Self> {
        if p.dim != 1 {
            return Err(invalid(format!("grid oracle supports d = 1 only, got d = {}", p.dim)));
        }
        if n_grid < 8 {
            return Err(invalid(format!("n_grid must be at least 8, got {n_grid}")));
        }
        check_positive("q_max", q_max)?;
        let h = 2.0 * q_max / (n_grid + 1) as f64;
        let q: Vec<f64> = (0..n_grid).map(|i| -q_max + (i + 1) as f64 * h).collect();
        let kin = 1.0 / (h * h);
        let diag = q.iter().map(|&x| kin + p.value(&[x])).collect();
        Ok(Self { q, h, q_max, diag, off: -0.5 * kin })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off;
                m[(i + 1, i)] = self.off;
            }
        }
        m
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    pub fn count_below(&self, x: f64) -> usize {
        let e2 = self.off * self.off;
        let tiny = f64::MIN_POSITIVE.sqrt() * (1.0 + self.off.abs());
        let mut count = 0;
        let mut piv = 1.0;
        for (i, &di) in self.diag.iter().enumerate() {
            piv = if i == 0 { di - x } else { di - x - e2 / piv };
            if piv == 0.0 {
                piv = -tiny;
            }
            if piv < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn spectrum_bounds(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().cloned().fold(f64::INFINITY, f64::min) - r;
        let hi = self.diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + r;
        (lo, hi)
    }

    /// The `i`-th smallest eigenvalue by bisection.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        let (mut lo, mut hi) = self.spectrum_bounds();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Normalised eigenvector for an (accurate) eigenvalue, by inverse
    /// iteration with a pivoted tridiagonal solve.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        // Deterministic start with no parity.
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_034).fract()).collect();
        for _ in 0..3 {
            v = solve_shifted(&self.diag, self.off, lambda, &v);
            let norm = norm_sq(&v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    /// Lowest eigenpairs whose Boltzmann weight relative to the ground
    /// state exceeds `e^{−cutoff}`.
    pub fn thermal_eigenpairs(&self, beta: f64, cutoff: f64) -> Vec<(f64, Vec<f64>)> {
        let e0 = self.eigenvalue(0);
        let m = self.count_below(e0 + cutoff / beta).clamp(1, self.len());
        (0..m)
            .map(|i| {
                let e = if i == 0 { e0 } else { self.eigenvalue(i) };
                (e, self.eigenvector(e))
            })
            .collect()
    }
}

/// Solves `(T − λI) y = b` for symmetric tridiagonal `T` with constant
/// off-diagonal, using Gaussian elimination with partial pivoting.
fn solve_shifted(diag: &[f64], off: f64, lambda: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let scale = diag.iter().map(|d| d.abs()).fold(off.abs(), f64::max);
    let eps = f64::EPSILON * scale;
    // Rows after elimination: u0 on the diagonal, u1 and u2 above it.
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut rhs = b.to_vec();
    let mut cur_d = diag[0] - lambda;
    let mut cur_u = if n > 1 { off } else { 0.0 };
    let mut cur_u2 = 0.0;
    for i in 0..n - 1 {
        let next_l = off;
        let next_d = diag[i + 1] - lambda;
        let next_u = if i + 2 < n { off } else { 0.0 };
        if cur_d.abs() >= next_l.abs() {
            let piv = if cur_d == 0.0 { eps } else { cur_d };
            let m = next_l / piv;
            u0[i] = piv;
            u1[i] = cur_u;
            u2[i] = cur_u2;
            rhs[i + 1] -= m * rhs[i];
            cur_d = next_d - m * cur_u;
            cur_u = next_u - m * cur_u2;
            cur_u2 = 0.0;
        } else {
            // Swap rows i and i+1.
            let m = cur_d / next_l;
            u0[i] = next_l;
            u1[i] = next_d;
            u2[i] = next_u;
            rhs.swap(i, i + 1);
            rhs[i + 1] -= m * rhs[i];
            let new_d = cur_u - m * next_d;
            let new_u = cur_u2 - m * next_u;
            cur_d = new_d;
            cur_u = new_u;
            cur_u2 = 0.0;
        }
    }
    u0[n - 1] = if cur_d == 0.0 { eps } else { cur_d };
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s -= u1[i] * y[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * y[i + 2];
        }
        let piv = if u0[i] == 0.0 { eps } else { u0[i] };
        y[i] = s / piv;
    }
    y
}

/// Boltzmann weights relative to the ground state are dropped below `e^{−60}`.
const SPECTRUM_CUTOFF: f64 = 60.0;
/// Boundary-mass ceiling for a trusted grid.
const BOUNDARY_MASS_LIMIT: f64 = 1e-10;

/// Thermal average on one grid, without extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAverage {
    pub n_grid: usize,
    pub value: f64,
    pub log_z: f64,
    /// Boltzmann-weighted probability in the outer 10% of the box.
    pub boundary_mass: f64,
}

/// `Σ e^{−βE_i}⟨ψ_i|O|ψ_i⟩ / Σ e^{−βE_i}` for the grid Hamiltonian.
pub fn grid_thermal_average(
    p: &PotentialSpec,
    o: &ObservableSpec,
    beta: f64,
    n_grid: usize,
    q_max: f64,
) -> Result<GridAverage> {
    check_positive("beta", beta)?;
    if o.dim != 1 {
        return Err(invalid("grid oracle supports d = 1 observables only"));
    }
    let ham = GridHamiltonian::new(p, n_grid, q_max)?;
    let pairs = ham.thermal_eigenpairs(beta, SPECTRUM_CUTOFF);
    let e0 = pairs[0].0;
    let obs: Vec<f64> = ham.q.iter().map(|&x| o.value(&[x])).collect();
    let edge = 0.9 * q_max;
    let (mut sw, mut swo, mut swb) = (0.0, 0.0, 0.0);
    for (e, psi) in &pairs {
        let w = (-beta * (e - e0)).exp();
        let norm: f64 = psi.iter().map(|v| v * v).sum();
        let expect: f64 = psi.iter().zip(&obs).map(|(v, o)| v * v * o).sum::<f64>() / norm;
        let outer: f64 = psi
            .iter()
            .zip(&ham.q)
            .filter(|(_, x)| x.abs() > edge)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            / norm;
        sw += w;
        swo += w * expect;
        swb += w * outer;
    }
    Ok(GridAverage {
        n_grid,
        value: swo / sw,
        log_z: -beta * e0 + sw.ln(),
        boundary_mass: swb / sw,
    })
}

/// Resolution and acceptance settings for the grid oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub n_grid: usize,
    /// Box half-width; `None` selects `max(8, 6/√a)`.
    pub q_max: Option<f64>,
    /// Largest accepted change between successive Richardson estimates.
    pub tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { n_grid: 2048, q_max: None, tol: 1e-6 }
    }
}

impl OracleSettings {
    pub fn resolved_q_max(&self, a: f64) -> f64 {
        self.q_max.unwrap_or_else(|| 8.0f64.max(6.0 / a.sqrt()))
    }
}

/// A trusted thermal average with its resolution metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactReference {
    pub beta: f64,
    pub potential: String,
    pub observable: String,
    /// Richardson-extrapolated `⟨O⟩_β`.
    pub value: f64,
    /// `ln Tr e^{−βH}` on the finest grid.
    pub log_z: f64,
    pub n_grid: usize,
    pub q_max: f64,
    /// Raw values on grids of `n`, `2n+1`, `4n+3` points (spacing halves).
    pub levels: [f64; 3],
    /// `|R(2n+1, 4n+3) − R(n, 2n+1)|`.
    pub drift: f64,
    pub boundary_mass: f64,
    pub trusted: bool,
}

impl ExactReference {
    pub fn partition_function(&self) -> f64 {
        self.log_z.exp()
    }
}

/// `⟨O⟩_β` for a one-dimensional potential. The finite-difference error is
/// `O(h²)`, so three grids with halving spacing give two Richardson
/// estimates; their difference must stay under `settings.tol`.
pub fn exact_thermal_average(
    p: &PotentialSpec,
    o: &ObservableSpec,
    beta: f64,
    settings: &OracleSettings,
) -> Result<ExactReference> {
    let q_max = settings.resolved_q_max(p.a);
    let n0 = settings.n_grid;
    let n1 = 2 * n0 + 1;
    let n2 = 2 * n1 + 1;
    let g0 = grid_thermal_average(p, o, beta, n0, q_max)?;
    let g1 = grid_thermal_average(p, o, beta, n1, q_max)?;
    let g2 = grid_thermal_average(p, o, beta, n2, q_max)?;
    if g2.boundary_mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::OracleDomain { mass: g2.boundary_mass, limit: BOUNDARY_MASS_LIMIT });
    }
    let r1 = (4.0 * g1.value - g0.value) / 3.0;
    let r2 = (4.0 * g2.value - g1.value) / 3.0;
    // A constant observable is exact on every grid.
    let (value, drift) = match o.constant_value() {
        Some(c) => (c, 0.0),
        None => (r2, (r2 - r1).abs()),
    };
    if !(drift <= settings.tol) {
        return Err(Error::OracleNotConverged { drift, tol: settings.tol });
    }
    Ok(ExactReference {
        beta,
        potential: p.id(),
        observable: o.id(),
        value,
        log_z: g2.log_z,
        n_grid: n0,
        q_max,
        levels: [g0.value, g1.value, g2.value],
        drift,
        boundary_mass: g2.boundary_mass,
        trusted: true,
    })
}

/// `Tr[(G·e^{−β_D V})^D O] / Tr[(G·e^{−β_D V})^D]` with `G_ij = h·K_{β_D}(q_i, q_j)`
/// the sampled free heat kernel. This is the ring-polymer average at `D`
/// beads evaluated by grid quadrature, and tends to `⟨O⟩_β` as `D → ∞`.
///
/// The grid must resolve the kernel width: `h` well below `√β_D`.
pub fn trotter_trace(
    p: &PotentialSpec,
    o: &ObservableSpec,
    beta: f64,
    beads: usize,
    n_grid: usize,
    q_max: f64,
) -> Result<f64> {
    check_positive("beta", beta)?;
    if beads == 0 {
        return Err(invalid("bead count must be positive"));
    }
    if p.dim != 1 || o.dim != 1 {
        return Err(invalid("Trotter oracle supports d = 1 only"));
    }
    if n_grid < 8 {
        return Err(invalid(format!("n_grid must be at least 8, got {n_grid}")));
    }
    check_positive("q_max", q_max)?;
    let h = 2.0 * q_max / (n_grid + 1) as f64;
    let q: Vec<f64> = (0..n_grid).map(|i| -q_max + (i + 1) as f64 * h).collect();
    let beta_d = beta / beads as f64;
    let half_boltz: Vec<f64> = q.iter().map(|&x| (-0.5 * beta_d * p.value(&[x])).exp()).collect();
    let norm = -0.5 * (2.0 * PI * beta_d).ln();
    // Symmetrised factor e^{−β_D V/2} G e^{−β_D V/2}.
    let m = DMatrix::from_fn(n_grid, n_grid, |i, j| {
        let dq = q[i] - q[j];
        h * (norm - dq * dq / (2.0 * beta_d)).exp() * half_boltz[i] * half_boltz[j]
    });
    let eig = SymmetricEigen::new(m);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let obs: Vec<f64> = q.iter().map(|&x| o.value(&[x])).collect();
    let (mut sw, mut swo) = (0.0, 0.0);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let w = (lam / lmax).powi(beads as i32);
        if w == 0.0 {
            continue;
        }
        let col = eig.eigenvectors.column(i);
        let nrm: f64 = col.iter().map(|v| v * v).sum();
        let expect: f64 = col.iter().zip(&obs).map(|(v, o)| v * v * o).sum::<f64>() / nrm;
        sw += w;
        swo += w * expect;
    }
    Ok(swo / sw)
}

/// JSON sidecar cache of [`ExactReference`] values keyed by a hash of
/// `(potential, observable, β, n_grid, Q, tol)`.
#[derive(Debug, Clone)]
pub struct OracleCache {
    dir: PathBuf,
}

impl OracleCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(p: &PotentialSpec, o: &ObservableSpec, beta: f64, settings: &OracleSettings) -> String {
        let canon = format!(
            "{}|{}|{:e}|{}|{:e}|{:e}",
            p.id(),
            o.id(),
            beta,
            settings.n_grid,
            settings.resolved_q_max(p.a),
            settings.tol
        );
        hex::encode(&Sha256::digest(canon.as_bytes())[..16])
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("oracle-{key}.json"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Returns the cached reference, computing and storing it on a miss.
    pub fn get_or_compute(
        &self,
        p: &PotentialSpec,
        o: &ObservableSpec,
        beta: f64,
        settings: &OracleSettings,
    ) -> Result<ExactReference> {
        let path = self.path_for(&Self::key(p, o, beta, settings));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(r) = serde_json::from_str::<ExactReference>(&text) {
                return Ok(r);
            }
        }
        let r = exact_thermal_average(p, o, beta, settings)?;
        fs::create_dir_all(&self.dir)?;
        let text = serde_json::to_string_pretty(&r).map_err(|e| Error::Io(e.into()))?;
        fs::write(&path, text)?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::ObservableKind;

    fn harmonic() -> PotentialSpec {
        PotentialSpec::harmonic(1.0, 1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn mehler_is_symmetric() {
        let k1 = mehler_kernel(&[0.3, -1.0], &[1.2, 0.4], 0.7, 1.3).unwrap();
        let k2 = mehler_kernel(&[1.2, 0.4], &[0.3, -1.0], 0.7, 1.3).unwrap();
        assert_eq!(k1, k2);
    }

    #[test]
    fn mehler_reduces_to_heat_kernel() {
        let m = mehler_kernel(&[0.0], &[1.0], 1.0, 1e-6).unwrap();
        let h = (2.0 * PI).powf(-0.5) * (-0.5f64).exp();
        assert!(((m - h) / h).abs() < 1e-5);
        assert!((heat_kernel(&[0.0], &[1.0], 1.0).unwrap() - h).abs() < 1e-15);
    }

    #[test]
    fn heat_kernel_values() {
        let k = heat_kernel(&[0.5], &[0.5], 1.0).unwrap();
        assert!((k - 0.398_942_280_401_432_7).abs() < 1e-15);
        let k2 = heat_kernel(&[0.1, 0.4], &[-0.3, 1.0], 0.6).unwrap();
        let p = heat_kernel(&[0.1], &[-0.3], 0.6).unwrap() * heat_kernel(&[0.4], &[1.0], 0.6).unwrap();
        assert!((k2 - p).abs() < 1e-15);
    }

    #[test]
    fn kernel_argument_errors() {
        assert!(mehler_kernel(&[0.0], &[0.0, 1.0], 1.0, 1.0).is_err());
        assert!(mehler_kernel(&[0.0], &[0.0], 0.0, 1.0).is_err());
        assert!(mehler_kernel(&[0.0], &[0.0], 1.0, 0.0).is_err());
        assert!(heat_kernel(&[0.0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn log_kernel_survives_large_beta() {
        let l = log_mehler_kernel(&[0.0], &[0.0], 2000.0, 1.0).unwrap();
        // ≈ −aβ/2 + ½ ln(a/π)
        assert!((l - (-1000.0 + 0.5 * (1.0 / PI).ln())).abs() < 1e-9, "{l}");
    }

    #[test]
    fn sturm_count_matches_dense() {
        let ham = GridHamiltonian::new(&harmonic(), 40, 6.0).unwrap();
        let dense = ham.to_dense();
        let eig = SymmetricEigen::new(dense.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, &e) in ev.iter().enumerate().take(10) {
            assert!((ham.eigenvalue(i) - e).abs() < 1e-10 * e.abs().max(1.0), "{i}");
        }
        assert!((dense.clone() - dense.transpose()).amax() < 1e-13);
    }

    #[test]
    fn eigenvector_is_eigenvector() {
        let ham = GridHamiltonian::new(&harmonic(), 200, 8.0).unwrap();
        let dense = ham.to_dense();
        for i in [0, 1, 5] {
            let e = ham.eigenvalue(i);
            let v = ham.eigenvector(e);
            let hv = &dense * nalgebra::DVector::from_vec(v.clone());
            let resid: f64 = hv.iter().zip(&v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
            assert!(resid < 1e-8, "state {i} residual {resid}");
        }
    }

    #[test]
    fn ground_energy_converges_monotonically() {
        // The three-point Laplacian underestimates kinetic energy, so E_0(h)
        // approaches the continuum value from below with an O(h²) error.
        let p = PotentialSpec::soft_bumped(1.0, 0.2, 2.0, 1, 1.0, 0.4).unwrap();
        let energies: Vec<f64> = [127, 255, 511, 1023]
            .iter()
            .map(|&n| GridHamiltonian::new(&p, n, 8.0).unwrap().eigenvalue(0))
            .collect();
        let steps: Vec<f64> = energies.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|&s| s > 0.0), "{energies:?}");
        for w in steps.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
        }
    }

    #[test]
    fn constant_observable_is_exact() {
        let o = ObservableSpec::constant(1.0, 1).unwrap();
        let r = exact_thermal_average(&harmonic(), &o, 2.0, &OracleSettings { n_grid: 256, ..Default::default() })
            .unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(trotter_trace(&harmonic(), &o, 2.0, 16, 128, 8.0).unwrap(), 1.0);
    }

    #[test]
    fn parity_kills_position_average() {
        let o = ObservableSpec::new(ObservableKind::Position, 1, 1.0).unwrap();
        let r = exact_thermal_average(&harmonic(), &o, 1.3, &OracleSettings { n_grid: 512, ..Default::default() })
            .unwrap();
        assert!(r.value.abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn unconverged_oracle_reports_drift() {
        let o = ObservableSpec::new(ObservableKind::Square, 1, 1.0).unwrap();
        let err = exact_thermal_average(
            &harmonic(),
            &o,
            2.0,
            &OracleSettings { n_grid: 16, q_max: Some(8.0), tol: 1e-12 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::OracleNotConverged { .. }), "{err}");
    }

    #[test]
    fn small_box_is_rejected() {
        let o = ObservableSpec::new(ObservableKind::Square, 1, 1.0).unwrap();
        let err = exact_thermal_average(
            &harmonic(),
            &o,
            2.0,
            &OracleSettings { n_grid: 256, q_max: Some(2.0), tol: 1.0 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::OracleDomain { .. }), "{err}");
    }

    #[test]
    fn oracle_rejects_higher_dimension() {
        let p = PotentialSpec::harmonic(1.0, 2, 1.0, 1.0).unwrap();
        let o = ObservableSpec::new(ObservableKind::Square, 2, 1.0).unwrap();
        assert!(exact_thermal_average(&p, &o, 1.0, &OracleSettings::default()).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = OracleCache::new(dir.path());
        let o = ObservableSpec::new(ObservableKind::Square, 1, 1.0).unwrap();
        let s = OracleSettings { n_grid: 256, ..Default::default() };
        let r1 = cache.get_or_compute(&harmonic(), &o, 2.0, &s).unwrap();
        let key = OracleCache::key(&harmonic(), &o, 2.0, &s);
        assert!(cache.path_for(&key).exists());
        let r2 = cache.get_or_compute(&harmonic(), &o, 2.0, &s).unwrap();
        assert_eq!(r1, r2);
        let other = OracleCache::key(&harmonic(), &o, 2.5, &s);
        assert_ne!(key, other);
    }
}
