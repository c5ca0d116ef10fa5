//! Bad-line environments, the score χ and parameter validation.

use serde::{Deserialize, Serialize};

use crate::clusters::ClusterHierarchy;
use crate::error::{Error, Result};
use crate::rng::{hash2, Threshold, TAG_LINE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub delta: f64,
    #[serde(rename = "L")]
    pub l: u64,
    pub window_len: u64,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
}

impl EnvironmentConfig {
    pub fn new(delta: f64, l: u64, window_len: u64, rng_seed: u64) -> Self {
        EnvironmentConfig { delta, l, window_len, rng_seed }
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta={} outside [0,1]", self.delta)));
        }
        if self.l < 3 || self.l % 3 != 0 {
            return Err(Error::Config(format!("L={} must be >= 3 and divisible by 3", self.l)));
        }
        if self.window_len < 1 {
            return Err(Error::Config("window_len must be >= 1".into()));
        }
        Ok(())
    }

    /// The gate 64·δ·L² < 1.
    pub fn is_validated(&self) -> bool {
        64.0 * self.delta * (self.l as f64).powi(2) < 1.0
    }

    /// State of line `i`, also beyond the window. Line i is bad iff its
    /// uniform falls below δ, which couples environments monotonically in δ.
    #[inline]
    pub fn line_bad(&self, i: u64) -> bool {
        Threshold::new(self.delta).hit(hash2(self.rng_seed, i, TAG_LINE))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(flatten)]
    pub config: EnvironmentConfig,
    pub gamma: Vec<u64>,
}

pub fn sample_environment(config: &EnvironmentConfig) -> Result<Environment> {
    config.check()?;
    let thr = Threshold::new(config.delta);
    let gamma = match thr {
        Threshold::Never => Vec::new(),
        Threshold::Always => (0..config.window_len).collect(),
        Threshold::Below(_) => (0..config.window_len)
            .filter(|&i| thr.hit(hash2(config.rng_seed, i, TAG_LINE)))
            .collect(),
    };
    Ok(Environment { config: config.clone(), gamma })
}

impl Environment {
    /// Builds an environment from an explicit bad-line list (for tests and imports).
    pub fn from_gamma(config: EnvironmentConfig, mut gamma: Vec<u64>) -> Result<Self> {
        config.check()?;
        gamma.sort_unstable();
        gamma.dedup();
        if let Some(&last) = gamma.last() {
            if last >= config.window_len {
                return Err(Error::Config(format!("bad line {last} outside window {}", config.window_len)));
            }
        }
        Ok(Environment { config, gamma })
    }

    pub fn l(&self) -> u64 {
        self.config.l
    }

    pub fn window_len(&self) -> u64 {
        self.config.window_len
    }

    pub fn is_bad(&self, row: u64) -> bool {
        if row < self.config.window_len {
            self.gamma.binary_search(&row).is_ok()
        } else {
            self.config.line_bad(row)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Environment = serde_json::from_str(s)?;
        Environment::from_gamma(e.config, e.gamma)
    }
}

/// Removes every bad line with index ≤ n.
pub fn zero_prefix(env: &Environment, n: u64) -> Environment {
    Environment { config: env.config.clone(), gamma: env.gamma.iter().copied().filter(|&g| g > n).collect() }
}

/// Clears the prefix up to the last cluster that keeps χ above 0 and
/// rebuilds, until χ = 0. Returns the reduced environment, its hierarchy and
/// the cut, if one was needed.
pub fn reduce_to_chi_zero(env: &Environment, k_max: u32) -> Result<(Environment, ClusterHierarchy, Option<u64>)> {
    let mut env = env.clone();
    let mut cut = None;
    loop {
        let h = crate::clusters::build_hierarchy(&env, k_max)?;
        let near = h
            .top_clusters()
            .filter(|c| c.span.0 < crate::clusters::lpow(h.l, c.mass))
            .map(|c| c.span.1)
            .max();
        match near {
            None => return Ok((env, h, cut)),
            Some(n) => {
                cut = Some(n);
                env = zero_prefix(&env, n);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChiValue {
    Value { value: u32 },
    /// Boundary clusters could still change the answer; `at_least` is the
    /// value seen on the resolved part of the window.
    Unresolved { at_least: u32 },
}

impl ChiValue {
    pub fn value(self) -> Option<u32> {
        match self {
            ChiValue::Value { value } => Some(value),
            ChiValue::Unresolved { .. } => None,
        }
    }
}

/// χ = smallest k with every C_∞ cluster of mass > k at distance ≥ L^{m(C)} from 0.
pub fn chi(env: &Environment, h: &ClusterHierarchy) -> Result<ChiValue> {
    if h.l != env.config.l || h.gamma != env.gamma {
        return Err(Error::Consistency("hierarchy was not built from this environment".into()));
    }
    let mut value = 0u32;
    let mut open_ended = !h.capped_runs.is_empty();
    for c in h.top_clusters() {
        if c.provisional {
            open_ended = true;
            continue;
        }
        if c.span.0 < crate::clusters::lpow(h.l, c.mass) {
            value = value.max(c.mass);
        }
    }
    Ok(if open_ended { ChiValue::Unresolved { at_least: value } } else { ChiValue::Value { value } })
}

#[derive(Clone, Debug, Serialize)]
pub struct Gate {
    pub name: &'static str,
    pub passed: bool,
    /// Advisory gates inform but are not required by any construction.
    pub advisory: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub gates: Vec<Gate>,
}

impl ValidationReport {
    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn all_required_pass(&self) -> bool {
        self.gates.iter().all(|g| g.passed || g.advisory)
    }
}

/// Reports each parameter gate separately. `c` is the site aspect constant.
pub fn validate(config: &EnvironmentConfig, c: Option<f64>, estimated_edge_speed: Option<f64>) -> ValidationReport {
    let mut r = ValidationReport::default();
    let l = config.l;
    let lf = l as f64;
    let prod = 64.0 * config.delta * lf * lf;
    r.gates.push(Gate {
        name: "mass_decay_gate",
        passed: prod < 1.0,
        advisory: false,
        detail: format!("64*delta*L^2 = {prod:.6}"),
    });
    r.gates.push(Gate { name: "scale_divisible_by_3", passed: l % 3 == 0, advisory: false, detail: format!("L = {l}") });
    r.gates.push(Gate { name: "scale_at_least_12", passed: l >= 12, advisory: false, detail: format!("L = {l}") });
    r.gates.push(Gate {
        name: "scale_at_least_108",
        passed: l >= 108,
        advisory: false,
        detail: format!("L = {l}; needed by the layer lemmas"),
    });
    if let Some(c) = c {
        let inv = 1.0 / c;
        let inv_ok = c > 0.0 && (inv - inv.round()).abs() < 1e-9;
        r.gates.push(Gate { name: "c_inverse_integer", passed: inv_ok, advisory: false, detail: format!("1/c = {inv}") });
        let half = c * lf / 2.0;
        let half_ok = (half - half.round()).abs() < 1e-9 && half >= 1.0 - 1e-9;
        r.gates.push(Gate { name: "half_cl_integer", passed: half_ok, advisory: false, detail: format!("cL/2 = {half}") });
        let twelfth = c * lf / 12.0;
        r.gates.push(Gate {
            name: "cl_divisible_by_12",
            passed: (twelfth - twelfth.round()).abs() < 1e-9 && twelfth >= 1.0 - 1e-9,
            advisory: true,
            detail: format!("cL/12 = {twelfth}; keeps the density regions aligned with site columns"),
        });
        if let Some(s) = estimated_edge_speed {
            r.gates.push(Gate {
                name: "c_below_edge_speed",
                passed: c < 3.0 / 14.0 * s,
                advisory: false,
                detail: format!("c = {c}, (3/14)*s = {}", 3.0 / 14.0 * s),
            });
        }
    }
    r
}
