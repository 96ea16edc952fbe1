//! Convergence sweeps over `N` and `D`, bound verdicts, and loop-measure
//! statistics.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{check_against, check_bound, compute_constants, fit_rate, BoundConstants, BoundVerdict, RateFit};
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    ab_differences, cl_samples, estimate_cl_discretized, estimate_cl_truncated, paired_difference, sample_std,
    ClConfig, EstimatorResult, Integration, StdSamplerConfig,
};
use crate::oracle::{exact_thermal_average, ExactReference, OracleSettings};
use crate::potentials::{ObservableSpec, PotentialSpec};
use crate::rng::StreamKey;
use crate::spectral::{fill_nu, increment_msd, mode_table, nu_std_devs, synthesize};

const CHUNK: usize = 1024;

/// What a sweep compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Ring polymer at each `D` against the oracle.
    Std,
    /// `cl(N)` at each `N` against the oracle, bound `K/√N`.
    Cl,
    /// `cl(N)` against `cl(N,D)` on common random numbers, bound `L/√D`.
    ClDisc,
    /// `cl(N,D)` at each pair against the oracle, combined bound.
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub mode: SweepMode,
    pub potential: PotentialSpec,
    pub observable: ObservableSpec,
    pub beta: f64,
    pub n_values: Vec<usize>,
    pub d_values: Vec<usize>,
    pub n_samples: usize,
    pub seed: u64,
    pub oracle: OracleSettings,
    /// Midpoint nodes for `cl(N)`; `None` uses the estimator default.
    pub n_quad: Option<usize>,
    /// Sampler settings for `std` sweeps; `n_steps` and `seed` are derived
    /// from the plan.
    pub std_sampler: StdSamplerConfig,
    /// Multiplies every bound constant (1 for the printed bounds).
    pub bound_scale: f64,
}

impl SweepPlan {
    pub fn new(mode: SweepMode, potential: PotentialSpec, observable: ObservableSpec, beta: f64) -> Self {
        Self {
            mode,
            potential,
            observable,
            beta,
            n_values: Vec::new(),
            d_values: Vec::new(),
            n_samples: 100_000,
            seed: 0,
            oracle: OracleSettings::default(),
            n_quad: None,
            std_sampler: StdSamplerConfig::default(),
            bound_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn increasing(name: &str, v: &[usize]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("{name} list is empty")));
            }
            if v[0] == 0 || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("{name} list must be positive and strictly increasing")));
            }
            Ok(())
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.n_samples < 1000 {
            return Err(Error::Config(format!("need at least 1000 samples per point, got {}", self.n_samples)));
        }
        if !(self.bound_scale > 0.0) {
            return Err(Error::Config("bound_scale must be positive".into()));
        }
        match self.mode {
            SweepMode::Std => increasing("D", &self.d_values)?,
            SweepMode::Cl => increasing("N", &self.n_values)?,
            SweepMode::ClDisc | SweepMode::Combined => {
                increasing("N", &self.n_values)?;
                increasing("D", &self.d_values)?;
            }
        }
        if self.potential.dim != self.observable.dim {
            return Err(Error::DimensionMismatch { expected: self.potential.dim, got: self.observable.dim });
        }
        Ok(())
    }
}

/// One row of a convergence report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_modes: Option<usize>,
    pub beads: Option<usize>,
    pub seed: u64,
    pub result: Option<EstimatorResult>,
    /// Oracle value, or the `cl(N)` estimate for `cl-disc` sweeps.
    pub reference: Option<f64>,
    pub error: Option<f64>,
    pub error_sigma: Option<f64>,
    pub verdict: Option<BoundVerdict>,
    /// `E|𝒜_N − 𝒜_{N,D}|` against `L1/√D`, and the same for `ℬ` against `L2/√D`.
    pub weight_verdict: Option<BoundVerdict>,
    pub observable_verdict: Option<BoundVerdict>,
    /// `E_ν[𝒜_N] ≥ exp(−3βM1/2 − C0·M1)` within 3σ.
    pub partition_lower_ok: Option<bool>,
    pub a_bound_violations: usize,
    pub b_bound_violations: usize,
    pub failure: Option<String>,
}

impl SweepPoint {
    fn empty(n_modes: Option<usize>, beads: Option<usize>, seed: u64) -> Self {
        Self {
            n_modes,
            beads,
            seed,
            result: None,
            reference: None,
            error: None,
            error_sigma: None,
            verdict: None,
            weight_verdict: None,
            observable_verdict: None,
            partition_lower_ok: None,
            a_bound_violations: 0,
            b_bound_violations: 0,
            failure: None,
        }
    }

    /// False if any verdict failed or the point could not be computed.
    pub fn passed(&self) -> bool {
        self.failure.is_none()
            && [self.verdict, self.weight_verdict, self.observable_verdict].iter().flatten().all(|v| v.pass)
            && self.partition_lower_ok != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub plan: SweepPlan,
    pub oracle: Option<ExactReference>,
    pub constants: BoundConstants,
    pub points: Vec<SweepPoint>,
    /// Log-log fit of error against the swept parameter.
    pub rate: Option<RateFit>,
    /// Why no rate was fitted, when it was not.
    pub rate_note: Option<String>,
    /// For `std` sweeps: errors never grow by more than 3 combined σ.
    pub monotone: Option<bool>,
    pub all_pass: bool,
    pub total_wall_time_s: f64,
}

/// Runs every point of the plan. Points that fail are recorded and the sweep
/// continues; an unavailable oracle or an invalid plan aborts.
pub fn run_sweep(plan: &SweepPlan) -> Result<ConvergenceReport> {
    plan.validate()?;
    let start = Instant::now();
    let p = &plan.potential;
    let o = &plan.observable;
    let constants = compute_constants(p.m1, o.m2, plan.beta, p.dim, p.a)?.scaled(plan.bound_scale);
    let oracle = match plan.mode {
        SweepMode::ClDisc => None,
        _ => {
            if p.dim != 1 {
                return Err(invalid("sweeps against the oracle need d = 1"));
            }
            Some(exact_thermal_average(p, o, plan.beta, &plan.oracle)?)
        }
    };
    let exact = oracle.as_ref().map(|r| r.value);
    let cl_cfg = ClConfig::new(plan.n_samples, plan.seed);

    let mut points = Vec::new();
    match plan.mode {
        SweepMode::Std => {
            let mut cfg = plan.std_sampler;
            cfg.seed = plan.seed;
            let per_chain = plan.n_samples.div_ceil(cfg.n_chains) as f64 / (1.0 - cfg.burn_in_frac);
            cfg.n_steps = per_chain.ceil() as usize;
            for &d in &plan.d_values {
                let mut pt = SweepPoint::empty(None, Some(d), plan.seed);
                match sample_std(p, o, plan.beta, d, &cfg) {
                    Ok(r) => {
                        let exact = exact.unwrap_or_default();
                        pt.reference = Some(exact);
                        pt.error = Some((r.estimate - exact).abs());
                        pt.error_sigma = Some(r.std_error);
                        pt.result = Some(r);
                    }
                    Err(e) => pt.failure = Some(e.to_string()),
                }
                points.push(pt);
            }
        }
        SweepMode::Cl => {
            let floor = (-1.5 * plan.beta * p.m1 - constants.c0 * p.m1).exp();
            for &n in &plan.n_values {
                let mut pt = SweepPoint::empty(Some(n), None, plan.seed);
                match estimate_cl_truncated(p, o, plan.beta, n, plan.n_quad, &cl_cfg) {
                    Ok((r, s)) => {
                        let exact = exact.unwrap_or_default();
                        let err = (r.estimate - exact).abs();
                        pt.reference = Some(exact);
                        pt.error = Some(err);
                        pt.error_sigma = Some(r.std_error);
                        pt.verdict = Some(check_bound(err, r.std_error, constants.k, n as f64)?);
                        pt.partition_lower_ok = Some(s.mean_a + 3.0 * s.mean_a_se >= floor);
                        pt.a_bound_violations = s.a_bound_violations;
                        pt.b_bound_violations = s.b_bound_violations;
                        pt.result = Some(r);
                    }
                    Err(e) => pt.failure = Some(e.to_string()),
                }
                points.push(pt);
            }
        }
        SweepMode::ClDisc => {
            for &n in &plan.n_values {
                let n_quad = plan.n_quad.unwrap_or_else(|| crate::estimators::default_n_quad(n));
                let base =
                    cl_samples(p, o, plan.beta, n, Integration::Quadrature { n_quad }, plan.n_samples, plan.seed);
                for &d in &plan.d_values {
                    let mut pt = SweepPoint::empty(Some(n), Some(d), plan.seed);
                    let outcome = base.as_ref().map_err(|e| invalid(e.to_string())).and_then(|base| {
                        let disc =
                            cl_samples(p, o, plan.beta, n, Integration::Riemann { beads: d }, plan.n_samples, plan.seed)?;
                        let diff = paired_difference(base, &disc)?;
                        let ab = ab_differences(base, &disc)?;
                        let (r, s) = disc.summarize(p, o, &cl_cfg)?;
                        let (_, s_base) = base.summarize(p, o, &cl_cfg)?;
                        Ok((diff, ab, r, s, s_base))
                    });
                    match outcome {
                        Ok((diff, ab, r, s, s_base)) => {
                            let err = diff.difference.abs();
                            pt.reference = Some(diff.first);
                            pt.error = Some(err);
                            pt.error_sigma = Some(diff.std_error);
                            pt.verdict = Some(check_bound(err, diff.std_error, constants.l, d as f64)?);
                            pt.weight_verdict = Some(check_bound(ab.mean_abs_da, ab.se_da, constants.l1, d as f64)?);
                            pt.observable_verdict =
                                Some(check_bound(ab.mean_abs_db, ab.se_db, constants.l2, d as f64)?);
                            pt.a_bound_violations = s.a_bound_violations + s_base.a_bound_violations;
                            pt.b_bound_violations = s.b_bound_violations + s_base.b_bound_violations;
                            pt.result = Some(r);
                        }
                        Err(e) => pt.failure = Some(e.to_string()),
                    }
                    points.push(pt);
                }
            }
        }
        SweepMode::Combined => {
            for &n in &plan.n_values {
                for &d in &plan.d_values {
                    let mut pt = SweepPoint::empty(Some(n), Some(d), plan.seed);
                    match estimate_cl_discretized(p, o, plan.beta, n, d, &cl_cfg) {
                        Ok((r, s)) => {
                            let exact = exact.unwrap_or_default();
                            let err = (r.estimate - exact).abs();
                            pt.reference = Some(exact);
                            pt.error = Some(err);
                            pt.error_sigma = Some(r.std_error);
                            pt.verdict = Some(check_against(err, r.std_error, constants.combined_bound(n, d))?);
                            pt.a_bound_violations = s.a_bound_violations;
                            pt.b_bound_violations = s.b_bound_violations;
                            pt.result = Some(r);
                        }
                        Err(e) => pt.failure = Some(e.to_string()),
                    }
                    points.push(pt);
                }
            }
        }
    }

    let (rate, rate_note) = fit_points(plan, &points);
    let monotone = (plan.mode == SweepMode::Std).then(|| {
        points.windows(2).all(|w| match (w[0].error, w[1].error, w[0].error_sigma, w[1].error_sigma) {
            (Some(e0), Some(e1), Some(s0), Some(s1)) => e1 <= e0 + 3.0 * (s0 * s0 + s1 * s1).sqrt(),
            _ => false,
        })
    });
    let all_pass = points.iter().all(SweepPoint::passed) && monotone != Some(false);
    Ok(ConvergenceReport {
        plan: plan.clone(),
        oracle,
        constants,
        points,
        rate,
        rate_note,
        monotone,
        all_pass,
        total_wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Fits error against `N` (cl), `D` (std, cl-disc with a single `N`), or
/// skips the fit when the sweep is two-dimensional or too short.
fn fit_points(plan: &SweepPlan, points: &[SweepPoint]) -> (Option<RateFit>, Option<String>) {
    let xy: Vec<(f64, f64)> = match plan.mode {
        SweepMode::Cl => points.iter().filter_map(|p| Some((p.n_modes? as f64, p.error?))).collect(),
        SweepMode::Std => points.iter().filter_map(|p| Some((p.beads? as f64, p.error?))).collect(),
        SweepMode::ClDisc if plan.n_values.len() == 1 => {
            points.iter().filter_map(|p| Some((p.beads? as f64, p.error?))).collect()
        }
        _ => return (None, Some("two-dimensional sweep, no rate fitted".into())),
    };
    if xy.len() < 4 {
        return (None, Some(format!("{} point(s), no rate fitted", xy.len())));
    }
    match fit_rate(&xy) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Column order of the report CSV.
pub const CSV_HEADER: [&str; 20] = [
    "config_hash",
    "mode",
    "representation",
    "n_modes",
    "beads",
    "seed",
    "n_samples",
    "estimate",
    "std_error",
    "ess",
    "ess_warning",
    "reference",
    "error",
    "error_sigma",
    "bound",
    "margin",
    "pass",
    "a_violations",
    "b_violations",
    "failure",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ConvergenceReport {
    /// One row per point; floats in shortest round-trip decimal. Wall times
    /// are left out so reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, config_hash: &str, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wr.write_record(CSV_HEADER).map_err(io)?;
        let mode = serde_json::to_value(self.plan.mode).ok().and_then(|v| v.as_str().map(String::from));
        for pt in &self.points {
            let r = pt.result.as_ref();
            wr.write_record([
                config_hash.to_string(),
                mode.clone().unwrap_or_default(),
                opt(r.map(|r| r.representation)),
                opt(pt.n_modes),
                opt(pt.beads),
                pt.seed.to_string(),
                opt(r.map(|r| r.n_samples)),
                opt(r.map(|r| r.estimate)),
                opt(r.map(|r| r.std_error)),
                opt(r.map(|r| r.ess)),
                opt(r.map(|r| r.ess_warning)),
                opt(pt.reference),
                opt(pt.error),
                opt(pt.error_sigma),
                opt(pt.verdict.map(|v| v.bound)),
                opt(pt.verdict.map(|v| v.margin)),
                pt.passed().to_string(),
                pt.a_bound_violations.to_string(),
                pt.b_bound_violations.to_string(),
                pt.failure.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn csv_string(&self, config_hash: &str) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(config_hash, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Mean of a Monte Carlo quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McMean {
    pub mean: f64,
    pub std_error: f64,
}

impl McMean {
    fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }
}

/// Draws `n_samples` loops from `ν` (first `n_modes` modes) and returns, per
/// sample, `f(ξ, x)` where `x` holds the loop at `nodes`. Columns are the
/// entries of `f`'s output.
fn loop_columns<F>(
    beta: f64,
    a: f64,
    dim: usize,
    n_modes: usize,
    nodes: &[f64],
    n_samples: usize,
    seed: u64,
    width: usize,
    f: F,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Sync,
{
    if !(beta > 0.0 && beta.is_finite()) || !(a > 0.0 && a.is_finite()) {
        return Err(invalid("beta and a must be positive"));
    }
    if dim == 0 || n_modes == 0 || n_samples < 2 {
        return Err(invalid("dimension, mode count and sample count must be positive"));
    }
    let table = mode_table(beta, n_modes, nodes);
    let sd = nu_std_devs(beta, n_modes, a);
    let chunks: Vec<Vec<f64>> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            let mut xi = vec![0.0; n_modes * dim];
            let mut x = vec![0.0; nodes.len() * dim];
            let mut out = vec![0.0; (hi - lo) * width];
            for (i, row) in (lo..hi).zip(out.chunks_exact_mut(width)) {
                let mut rng = StreamKey::new(seed, i as u64).rng();
                fill_nu(&sd, dim, &mut rng, &mut xi);
                synthesize(&table, n_modes, &xi, dim, &mut x);
                f(&xi, &x, row);
            }
            out
        })
        .collect();
    let mut cols = vec![Vec::with_capacity(n_samples); width];
    for chunk in &chunks {
        for row in chunk.chunks_exact(width) {
            for (c, &v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
    }
    Ok(cols)
}

/// `E_ν ∫₀^β |x_N(τ)|² dτ = E_ν Σ_k |ξ_k|²` by Monte Carlo; tends to `C0` as
/// `N → ∞`.
pub fn loop_norm_mc(beta: f64, a: f64, dim: usize, n_modes: usize, n_samples: usize, seed: u64) -> Result<McMean> {
    let cols = loop_columns(beta, a, dim, n_modes, &[], n_samples, seed, 1, |xi, _, out| {
        out[0] = xi.iter().map(|v| v * v).sum();
    })?;
    Ok(McMean::from_values(&cols[0]))
}

fn sq_dist(x: &[f64], i: usize, j: usize, dim: usize) -> f64 {
    x[i * dim..(i + 1) * dim].iter().zip(&x[j * dim..(j + 1) * dim]).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `E_ν|x_N(τ1) − x_N(τ2)|²` for each pair, all pairs evaluated on the same
/// loops.
pub fn increment_mc(
    beta: f64,
    a: f64,
    dim: usize,
    n_modes: usize,
    pairs: &[(f64, f64)],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<McMean>> {
    for &(t1, t2) in pairs {
        if !(0.0..=beta).contains(&t1) || !(0.0..=beta).contains(&t2) {
            return Err(invalid(format!("times ({t1}, {t2}) outside [0, β]")));
        }
    }
    let nodes: Vec<f64> = pairs.iter().flat_map(|&(t1, t2)| [t1, t2]).collect();
    let cols = loop_columns(beta, a, dim, n_modes, &nodes, n_samples, seed, pairs.len(), |_, x, out| {
        for (k, o) in out.iter_mut().enumerate() {
            *o = sq_dist(x, 2 * k, 2 * k + 1, dim);
        }
    })?;
    Ok(cols.iter().map(|c| McMean::from_values(c)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub delta: f64,
    /// Monte Carlo `E|x(τ+δ) − x(τ)|²`.
    pub msd: f64,
    pub msd_se: f64,
    /// The same expectation summed exactly over the retained modes.
    pub msd_exact: f64,
    /// `d(2β+1)δ`
    pub bound: f64,
    pub within_bound: bool,
    /// 99th percentile of `|x(τ+δ) − x(τ)|/δ^0.4`.
    pub p99_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderTable {
    pub beta: f64,
    pub a: f64,
    pub dim: usize,
    pub n_modes: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub rows: Vec<HolderRow>,
    /// Log-log slope of `msd` against `δ` over rows with `0 < δ ≤ β/10`.
    pub small_delta_slope: Option<f64>,
}

impl HolderTable {
    pub fn write_csv<W: Write>(&self, config_hash: &str, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wr.write_record(["config_hash", "seed", "n_modes", "delta", "msd", "msd_se", "msd_exact", "bound", "within_bound", "p99_ratio"])
            .map_err(io)?;
        for r in &self.rows {
            wr.write_record([
                config_hash.to_string(),
                self.seed.to_string(),
                self.n_modes.to_string(),
                r.delta.to_string(),
                r.msd.to_string(),
                r.msd_se.to_string(),
                r.msd_exact.to_string(),
                r.bound.to_string(),
                r.within_bound.to_string(),
                r.p99_ratio.to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Increment statistics of `ν`-loops at lags `δ`. By stationarity of `ν`
/// every increment is taken from `τ = 0`.
pub fn holder_scan(
    beta: f64,
    a: f64,
    dim: usize,
    n_modes: usize,
    n_samples: usize,
    deltas: &[f64],
    seed: u64,
) -> Result<HolderTable> {
    if deltas.is_empty() {
        return Err(invalid("δ list is empty"));
    }
    if deltas.iter().any(|&d| !(0.0..=beta).contains(&d)) {
        return Err(invalid("every δ must lie in [0, β]"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("δ list must be strictly decreasing"));
    }
    let mut nodes = vec![0.0];
    nodes.extend_from_slice(deltas);
    let cols = loop_columns(beta, a, dim, n_modes, &nodes, n_samples, seed, deltas.len(), |_, x, out| {
        for (k, o) in out.iter_mut().enumerate() {
            *o = sq_dist(x, 0, k + 1, dim);
        }
    })?;
    let d = dim as f64;
    let mut rows = Vec::with_capacity(deltas.len());
    for (&delta, col) in deltas.iter().zip(&cols) {
        let m = McMean::from_values(col);
        let bound = d * (2.0 * beta + 1.0) * delta;
        let p99_ratio = if delta == 0.0 {
            0.0
        } else {
            let mut r: Vec<f64> = col.iter().map(|s| s.sqrt() / delta.powf(0.4)).collect();
            r.sort_by(f64::total_cmp);
            r[((r.len() as f64 * 0.99).ceil() as usize).clamp(1, r.len()) - 1]
        };
        rows.push(HolderRow {
            delta,
            msd: m.mean,
            msd_se: m.std_error,
            msd_exact: increment_msd(beta, a, dim, 0.0, delta, Some(n_modes))?,
            bound,
            within_bound: m.mean <= bound + 3.0 * m.std_error,
            p99_ratio,
        });
    }
    let small: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.delta > 0.0 && r.delta <= 0.1 * beta).map(|r| (r.delta, r.msd)).collect();
    let small_delta_slope = fit_rate(&small).ok().map(|f| f.slope);
    Ok(HolderTable { beta, a, dim, n_modes, n_samples, seed, rows, small_delta_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::ObservableKind;
    use crate::spectral::c0_constant;

    fn plan(mode: SweepMode) -> SweepPlan {
        let p = PotentialSpec::soft_bumped(1.0, 0.2, 2.0, 1, 1.0, 0.4).unwrap();
        let o = ObservableSpec::new(ObservableKind::TanhSquared, 1, 1.0).unwrap();
        let mut plan = SweepPlan::new(mode, p, o, 1.0);
        plan.n_samples = 4000;
        plan.oracle.n_grid = 512;
        plan
    }

    #[test]
    fn plan_validation() {
        let mut p = plan(SweepMode::Cl);
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        p.n_values = vec![4, 2];
        assert!(p.validate().is_err());
        p.n_values = vec![2, 4];
        assert!(p.validate().is_ok());
        p.n_samples = 10;
        assert!(p.validate().is_err());
    }

    #[test]
    fn single_point_sweep_is_flagged() {
        let mut p = plan(SweepMode::Cl);
        p.n_values = vec![8];
        let r = run_sweep(&p).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(r.rate.is_none());
        assert!(r.rate_note.is_some());
        assert!(r.all_pass);
    }

    #[test]
    fn tiny_bound_scale_fails() {
        // ⟨q²⟩ from the constant mode alone is 1/β against coth(β/2)/2.
        let h = PotentialSpec::harmonic(1.0, 1, 1.0, 1.0).unwrap();
        let o = ObservableSpec::new(ObservableKind::Square, 1, 100.0).unwrap();
        let mut p = SweepPlan::new(SweepMode::Cl, h, o, 2.0);
        p.n_values = vec![1, 2];
        p.n_samples = 4000;
        p.oracle.n_grid = 512;
        p.bound_scale = 1e-12;
        let r = run_sweep(&p).unwrap();
        assert!(!r.points[0].passed(), "{:?}", r.points[0]);
        assert!(!r.all_pass);
    }

    #[test]
    fn csv_is_reproducible() {
        let mut p = plan(SweepMode::ClDisc);
        p.n_values = vec![4];
        p.d_values = vec![2, 4, 8, 16];
        let a = run_sweep(&p).unwrap();
        let b = run_sweep(&p).unwrap();
        let ca = a.csv_string("abc").unwrap();
        assert_eq!(ca, b.csv_string("abc").unwrap());
        assert_eq!(ca.lines().count(), 5);
        assert!(ca.starts_with(&CSV_HEADER.join(",")));
        assert!(a.rate.is_some());
    }

    #[test]
    fn loop_norm_near_c0() {
        let m = loop_norm_mc(2.0, 1.0, 1, 256, 20_000, 3).unwrap();
        let c0 = c0_constant(1, 2.0, 1.0);
        assert!((m.mean - c0).abs() < 0.02 * c0 + 3.0 * m.std_error, "{m:?} vs {c0}");
    }

    #[test]
    fn increments_match_mode_sums() {
        let pairs = [(0.1, 0.7), (0.0, 1.9), (1.2, 1.25)];
        let m = increment_mc(2.0, 1.0, 2, 64, &pairs, 20_000, 8).unwrap();
        for (&(t1, t2), mc) in pairs.iter().zip(&m) {
            let exact = increment_msd(2.0, 1.0, 2, t1, t2, Some(64)).unwrap();
            assert!((mc.mean - exact).abs() < 4.0 * mc.std_error, "{mc:?} vs {exact}");
        }
    }

    #[test]
    fn holder_rows() {
        let deltas = [0.5, 0.1, 0.05, 0.02, 0.01, 0.0];
        let t = holder_scan(1.0, 1.0, 1, 1024, 5000, &deltas, 4).unwrap();
        assert_eq!(t.rows.last().unwrap().msd, 0.0);
        assert!(t.rows.iter().all(|r| r.within_bound));
        let s = t.small_delta_slope.unwrap();
        assert!((0.9..=1.1).contains(&s), "{s}");
        assert!(holder_scan(1.0, 1.0, 1, 8, 100, &[0.1, 0.2], 0).is_err());
    }
}
