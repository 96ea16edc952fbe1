//! Potentials, observables, the shifted potential `V^a`, and sampled checks
//! of the growth/boundedness conditions the error bounds rely on.
//!
//! The shifted potential removes the harmonic reference `a²|q|²/2` that the
//! Gaussian loop measure absorbs. Its splitting parameter `a` is a free
//! choice: the loop measure depends on it, the target distribution does not.
//! Larger `a` tightens the Gaussian reference (smaller `C0`) but makes the
//! shifted potential more negative at large `|q|`, which drives `M1` up.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamKey;

/// Built-in potential catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum PotentialKind {
    /// `ω²|q|²/2`
    Harmonic { omega: f64 },
    /// `ω²|q|²/2 + c·cos(k·Σq_i)`
    SoftBumped { omega: f64, c: f64, k: f64 },
    /// `|q|⁴`; violates the linear-growth condition on `∇V^a`.
    Quartic,
}

impl PotentialKind {
    pub fn from_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "harmonic" => &["omega"],
            "soft-bumped" => &["omega", "c", "k"],
            "quartic" => &[],
            other => return Err(Error::Config(format!("unknown potential `{other}`"))),
        };
        reject_unknown(name, params, allowed)?;
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        Ok(match name {
            "harmonic" => PotentialKind::Harmonic { omega: get("omega", 1.0) },
            "soft-bumped" => PotentialKind::SoftBumped {
                omega: get("omega", 1.0),
                c: get("c", 0.2),
                k: get("k", 2.0),
            },
            _ => PotentialKind::Quartic,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::Harmonic { .. } => "harmonic",
            PotentialKind::SoftBumped { .. } => "soft-bumped",
            PotentialKind::Quartic => "quartic",
        }
    }
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Harmonic { omega } => write!(f, "harmonic(omega={omega})"),
            PotentialKind::SoftBumped { omega, c, k } => {
                write!(f, "soft-bumped(omega={omega},c={c},k={k})")
            }
            PotentialKind::Quartic => write!(f, "quartic"),
        }
    }
}

/// A potential together with its splitting parameter `a` and declared
/// assumption constant `M1`. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub dim: usize,
    pub a: f64,
    pub m1: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, dim: usize, a: f64, m1: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("potential dimension must be positive"));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid(format!("splitting parameter a must be positive, got {a}")));
        }
        if !(m1 > 0.0 && m1.is_finite()) {
            return Err(invalid(format!("M1 must be positive, got {m1}")));
        }
        match kind {
            PotentialKind::Harmonic { omega } if !omega.is_finite() => {
                return Err(invalid("harmonic omega must be finite"))
            }
            PotentialKind::SoftBumped { omega, c, k }
                if !(omega.is_finite() && c.is_finite() && k.is_finite()) =>
            {
                return Err(invalid("soft-bumped parameters must be finite"))
            }
            _ => {}
        }
        Ok(Self { kind, dim, a, m1 })
    }

    pub fn harmonic(omega: f64, dim: usize, a: f64, m1: f64) -> Result<Self> {
        Self::new(PotentialKind::Harmonic { omega }, dim, a, m1)
    }

    pub fn soft_bumped(omega: f64, c: f64, k: f64, dim: usize, a: f64, m1: f64) -> Result<Self> {
        Self::new(PotentialKind::SoftBumped { omega, c, k }, dim, a, m1)
    }

    pub fn quartic(dim: usize, a: f64, m1: f64) -> Result<Self> {
        Self::new(PotentialKind::Quartic, dim, a, m1)
    }

    /// Stable identifier used in records and cache keys.
    pub fn id(&self) -> String {
        format!("{}[d={},a={},M1={}]", self.kind, self.dim, self.a, self.m1)
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: q.len() });
        }
        Ok(())
    }

    /// `V(q)`. The slice length must equal `dim`.
    pub fn value(&self, q: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), self.dim);
        let r2 = norm_sq(q);
        match self.kind {
            PotentialKind::Harmonic { omega } => 0.5 * omega * omega * r2,
            PotentialKind::SoftBumped { omega, c, k } => {
                let s: f64 = q.iter().sum();
                0.5 * omega * omega * r2 + c * (k * s).cos()
            }
            PotentialKind::Quartic => r2 * r2,
        }
    }

    /// Writes `∇V(q)` into `out`.
    pub fn grad_into(&self, q: &[f64], out: &mut [f64]) {
        debug_assert_eq!(q.len(), self.dim);
        match self.kind {
            PotentialKind::Harmonic { omega } => {
                let w2 = omega * omega;
                for (o, &x) in out.iter_mut().zip(q) {
                    *o = w2 * x;
                }
            }
            PotentialKind::SoftBumped { omega, c, k } => {
                let w2 = omega * omega;
                let s: f64 = q.iter().sum();
                let bump = -c * k * (k * s).sin();
                for (o, &x) in out.iter_mut().zip(q) {
                    *o = w2 * x + bump;
                }
            }
            PotentialKind::Quartic => {
                let r2 = norm_sq(q);
                for (o, &x) in out.iter_mut().zip(q) {
                    *o = 4.0 * r2 * x;
                }
            }
        }
    }

    pub fn grad(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.grad_into(q, &mut g);
        g
    }

    /// Unchecked `V^a(q) = V(q) − a²|q|²/2`, for hot loops.
    #[inline]
    pub fn va(&self, q: &[f64]) -> f64 {
        match self.kind {
            // Avoid cancellation when ω = a.
            PotentialKind::Harmonic { omega } => 0.5 * (omega * omega - self.a * self.a) * norm_sq(q),
            PotentialKind::SoftBumped { omega, c, k } => {
                let s: f64 = q.iter().sum();
                0.5 * (omega * omega - self.a * self.a) * norm_sq(q) + c * (k * s).cos()
            }
            PotentialKind::Quartic => self.value(q) - 0.5 * self.a * self.a * norm_sq(q),
        }
    }

    /// Unchecked `∇V^a(q) = ∇V(q) − a²q`.
    #[inline]
    pub fn va_grad_into(&self, q: &[f64], out: &mut [f64]) {
        match self.kind {
            PotentialKind::Harmonic { omega } => {
                let w = omega * omega - self.a * self.a;
                for (o, &x) in out.iter_mut().zip(q) {
                    *o = w * x;
                }
            }
            PotentialKind::SoftBumped { omega, c, k } => {
                let w = omega * omega - self.a * self.a;
                let s: f64 = q.iter().sum();
                let bump = -c * k * (k * s).sin();
                for (o, &x) in out.iter_mut().zip(q) {
                    *o = w * x + bump;
                }
            }
            PotentialKind::Quartic => {
                self.grad_into(q, out);
                let a2 = self.a * self.a;
                for (o, &x) in out.iter_mut().zip(q) {
                    *o -= a2 * x;
                }
            }
        }
    }

    /// Checked `V^a(q)`.
    pub fn va_eval(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        Ok(self.va(q))
    }

    /// Checked `∇V^a(q)`.
    pub fn va_grad(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(q)?;
        let mut g = vec![0.0; self.dim];
        self.va_grad_into(q, &mut g);
        Ok(g)
    }
}

/// Built-in observable catalog. Scalar-argument observables act on the
/// first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ObservableKind {
    Constant { value: f64 },
    /// `q_1`
    Position,
    /// `|q|²`
    Square,
    /// `tanh(q_1)`
    Tanh,
    /// `tanh²(q_1)`
    TanhSquared,
}

impl ObservableKind {
    pub fn from_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "constant" => &["value"],
            "position" | "square" | "tanh" | "tanh-squared" => &[],
            other => return Err(Error::Config(format!("unknown observable `{other}`"))),
        };
        reject_unknown(name, params, allowed)?;
        Ok(match name {
            "constant" => ObservableKind::Constant {
                value: params.get("value").copied().unwrap_or(1.0),
            },
            "position" => ObservableKind::Position,
            "square" => ObservableKind::Square,
            "tanh" => ObservableKind::Tanh,
            _ => ObservableKind::TanhSquared,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObservableKind::Constant { .. } => "constant",
            ObservableKind::Position => "position",
            ObservableKind::Square => "square",
            ObservableKind::Tanh => "tanh",
            ObservableKind::TanhSquared => "tanh-squared",
        }
    }
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableKind::Constant { value } => write!(f, "constant(value={value})"),
            other => f.write_str(other.name()),
        }
    }
}

/// An observable with its declared bound `M2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    pub dim: usize,
    pub m2: f64,
}

impl ObservableSpec {
    pub fn new(kind: ObservableKind, dim: usize, m2: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("observable dimension must be positive"));
        }
        if !(m2 > 0.0 && m2.is_finite()) {
            return Err(invalid(format!("M2 must be positive, got {m2}")));
        }
        if let ObservableKind::Constant { value } = kind {
            if !value.is_finite() {
                return Err(invalid("constant observable must be finite"));
            }
        }
        Ok(Self { kind, dim, m2 })
    }

    pub fn constant(value: f64, dim: usize) -> Result<Self> {
        Self::new(ObservableKind::Constant { value }, dim, value.abs().max(1.0))
    }

    pub fn id(&self) -> String {
        format!("{}[d={},M2={}]", self.kind, self.dim, self.m2)
    }

    /// Returns true when the observable is identically constant, so that
    /// estimators can return it exactly.
    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            ObservableKind::Constant { value } => Some(value),
            _ => None,
        }
    }

    #[inline]
    pub fn value(&self, q: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), self.dim);
        match self.kind {
            ObservableKind::Constant { value } => value,
            ObservableKind::Position => q[0],
            ObservableKind::Square => norm_sq(q),
            ObservableKind::Tanh => q[0].tanh(),
            ObservableKind::TanhSquared => {
                let t = q[0].tanh();
                t * t
            }
        }
    }

    pub fn grad_into(&self, q: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self.kind {
            ObservableKind::Constant { .. } => {}
            ObservableKind::Position => out[0] = 1.0,
            ObservableKind::Square => {
                for (o, &x) in out.iter_mut().zip(q) {
                    *o = 2.0 * x;
                }
            }
            ObservableKind::Tanh => {
                let t = q[0].tanh();
                out[0] = 1.0 - t * t;
            }
            ObservableKind::TanhSquared => {
                let t = q[0].tanh();
                out[0] = 2.0 * t * (1.0 - t * t);
            }
        }
    }

    pub fn grad(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.grad_into(q, &mut g);
        g
    }
}

fn reject_unknown(name: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(key) => Err(Error::Config(format!("unknown parameter `{key}` for `{name}`"))),
        None => Ok(()),
    }
}

#[inline]
pub(crate) fn norm_sq(q: &[f64]) -> f64 {
    q.iter().map(|x| x * x).sum()
}

/// Worst-case margins found while probing the assumption inequalities.
/// A margin is `rhs − lhs` of an inequality `lhs ≤ rhs`; negative means
/// violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionMargins {
    /// `M1 − |V^a(0)|`
    pub va_at_origin: f64,
    /// `min (V^a(q) + M1)`
    pub va_lower: f64,
    /// `min (M1(1+|q|) − |∇V^a(q)|)`
    pub va_gradient: f64,
    /// `min ((3/2)M1 + M1|q|² − V^a(q))`
    pub va_upper: f64,
    /// `min (M2 − |O(q)|)`
    pub observable_value: f64,
    /// `min (M2 − |∇O(q)|)`
    pub observable_gradient: f64,
}

impl AssumptionMargins {
    fn as_array(&self) -> [(&'static str, f64); 6] {
        [
            ("va_at_origin", self.va_at_origin),
            ("va_lower", self.va_lower),
            ("va_gradient", self.va_gradient),
            ("va_upper", self.va_upper),
            ("observable_value", self.observable_value),
            ("observable_gradient", self.observable_gradient),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub radius: f64,
    pub n_probe: usize,
    pub margins: AssumptionMargins,
    pub passed: bool,
    /// Names of the inequalities with negative margin.
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn potential_passed(&self) -> bool {
        !self.failures.iter().any(|f| f.starts_with("va_"))
    }

    pub fn observable_passed(&self) -> bool {
        !self.failures.iter().any(|f| f.starts_with("observable_"))
    }
}

/// Probe seed used by [`check_assumptions`].
pub const PROBE_SEED: u64 = 0x5eed_a55e;

/// Probes the assumption inequalities at `n_probe` points of the ball of the
/// given radius (plus the origin and the axis endpoints). Probabilistic: a
/// pass is evidence, not a proof.
pub fn check_assumptions(
    p: &PotentialSpec,
    o: &ObservableSpec,
    radius: f64,
    n_probe: usize,
) -> Result<CheckReport> {
    check_assumptions_seeded(p, o, radius, n_probe, PROBE_SEED)
}

pub fn check_assumptions_seeded(
    p: &PotentialSpec,
    o: &ObservableSpec,
    radius: f64,
    n_probe: usize,
    seed: u64,
) -> Result<CheckReport> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("probe radius must be positive, got {radius}")));
    }
    if n_probe < 100 {
        return Err(invalid(format!("n_probe must be at least 100, got {n_probe}")));
    }
    if p.dim != o.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: o.dim });
    }
    let d = p.dim;
    let (m1, m2) = (p.m1, o.m2);

    let origin = vec![0.0; d];
    let mut margins = AssumptionMargins {
        va_at_origin: m1 - p.va(&origin).abs(),
        va_lower: f64::INFINITY,
        va_gradient: f64::INFINITY,
        va_upper: f64::INFINITY,
        observable_value: f64::INFINITY,
        observable_gradient: f64::INFINITY,
    };

    let mut probes: Vec<Vec<f64>> = vec![origin];
    for i in 0..d {
        for sign in [-1.0, 1.0] {
            let mut e = vec![0.0; d];
            e[i] = sign * radius;
            probes.push(e);
        }
    }
    let mut rng = StreamKey::new(seed, 0).rng();
    for _ in 0..n_probe {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm_sq(&dir).sqrt().max(f64::MIN_POSITIVE);
        let u: f64 = rng.random();
        let r = radius * u.powf(1.0 / d as f64);
        dir.iter_mut().for_each(|x| *x *= r / n);
        probes.push(dir);
    }

    let mut g = vec![0.0; d];
    for q in &probes {
        let r = norm_sq(q).sqrt();
        let va = p.va(q);
        p.va_grad_into(q, &mut g);
        let gn = norm_sq(&g).sqrt();
        margins.va_lower = margins.va_lower.min(va + m1);
        margins.va_gradient = margins.va_gradient.min(m1 * (1.0 + r) - gn);
        margins.va_upper = margins.va_upper.min(1.5 * m1 + m1 * r * r - va);
        margins.observable_value = margins.observable_value.min(m2 - o.value(q).abs());
        o.grad_into(q, &mut g);
        margins.observable_gradient = margins.observable_gradient.min(m2 - norm_sq(&g).sqrt());
    }

    let failures: Vec<String> = margins
        .as_array()
        .iter()
        .filter(|(_, m)| *m < -CHECK_TOL)
        .map(|(n, _)| n.to_string())
        .collect();
    Ok(CheckReport { radius, n_probe, margins, passed: failures.is_empty(), failures })
}

/// Absolute slack allowed on each margin to absorb rounding.
pub const CHECK_TOL: f64 = 1e-12;
