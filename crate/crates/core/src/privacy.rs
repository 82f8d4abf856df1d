//! Laplace mechanism on the exchanged boundary values: query sensitivity
//! over the load neighbourhood, noise generation and the privacy accountant.

use std::fmt;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ZoneModel;
use crate::partition::ZonePartition;
use crate::solver::{solve, ObjectiveOverlay, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Accountant {
    /// Each iteration is ε̄-DP on its own; a K-iteration run is Kε̄-DP.
    #[serde(rename = "iter")]
    PerIteration,
    /// Noise scaled by K so the whole run is ε̄-DP.
    #[serde(rename = "run")]
    WholeRun,
}

impl std::str::FromStr for Accountant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iter" => Ok(Accountant::PerIteration),
            "run" => Ok(Accountant::WholeRun),
            _ => Err(Error::invalid(format!("unknown accountant '{s}' (expected iter or run)"))),
        }
    }
}

impl fmt::Display for Accountant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Accountant::PerIteration => write!(f, "iter"),
            Accountant::WholeRun => write!(f, "run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    /// Privacy loss; `f64::INFINITY` disables the mechanism.
    #[serde(with = "extended_float")]
    pub epsilon_bar: f64,
    /// Relative neighbourhood radius on each load.
    pub beta: f64,
    pub accountant: Accountant,
    pub seed: u64,
}

impl PrivacyParams {
    pub fn new(epsilon_bar: f64, beta: f64, seed: u64) -> Result<Self> {
        let p = Self { epsilon_bar, beta, accountant: Accountant::PerIteration, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn non_private(seed: u64) -> Self {
        Self { epsilon_bar: f64::INFINITY, beta: 0.05, accountant: Accountant::PerIteration, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_bar > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon_bar)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        Ok(())
    }

    pub fn is_private(&self) -> bool {
        self.epsilon_bar.is_finite()
    }

    /// Laplace scale for a given sensitivity.
    pub fn scale(&self, delta: f64, total_iters: usize) -> f64 {
        if !self.is_private() {
            return 0.0;
        }
        match self.accountant {
            Accountant::PerIteration => delta / self.epsilon_bar,
            Accountant::WholeRun => total_iters as f64 * delta / self.epsilon_bar,
        }
    }
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`
/// so they survive JSON and TOML.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => parse(&t).ok_or_else(|| serde::de::Error::custom(format!("bad number '{t}'"))),
        }
    }

    /// Parses a float, accepting `inf`/`infinity`/`∞` spellings.
    pub fn parse(text: &str) -> Option<f64> {
        match text.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "∞" => Some(f64::INFINITY),
            "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            t => t.parse().ok(),
        }
    }
}

/// Per-copy sensitivities, laid out like the stacked dual vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub xi: Vec<f64>,
    pub scale_used: Vec<f64>,
}

/// Sensitivity of one zone's boundary values plus the number of perturbed
/// solves that were skipped because they failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSensitivity {
    pub delta: Vec<f64>,
    pub skipped: usize,
}

/// Largest change of the zone's boundary solution when any single load moves
/// to either end of `[d(1-β), d(1+β)]`.
///
/// `overlay` must be the objective layer used for the base solve so the
/// query matches the one actually released.
pub fn compute_sensitivity(
    model: &ZoneModel,
    overlay: &ObjectiveOverlay,
    base_y: &[f64],
    beta: f64,
    cfg: &SolverConfig,
) -> Result<ZoneSensitivity> {
    if base_y.len() != model.y_vars.len() {
        return Err(Error::LengthMismatch { expected: model.y_vars.len(), found: base_y.len() });
    }
    let base_demand = model.demand();
    let mut candidates = Vec::new();
    if beta > 0.0 {
        for (l, &d) in base_demand.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            candidates.push((l, d * (1.0 - beta)));
            candidates.push((l, d * (1.0 + beta)));
        }
    }

    let outcomes: Vec<Option<Vec<f64>>> = candidates
        .par_iter()
        .map(|&(l, value)| {
            let mut perturbed = model.clone();
            let mut demand = base_demand.clone();
            demand[l] = value;
            perturbed.set_demand(&demand).ok()?;
            let res = solve(&perturbed.program, Some(overlay), cfg);
            if !res.is_optimal() {
                log::warn!(
                    "zone {}: perturbed solve for bus index {} skipped ({:?})",
                    model.zone,
                    model.buses[l],
                    res.status
                );
                return None;
            }
            Some(model.y_vars.iter().map(|&j| res.x[j]).collect())
        })
        .collect();

    let mut delta = vec![0.0f64; base_y.len()];
    let mut skipped = 0;
    for out in outcomes {
        match out {
            Some(y) => {
                for ((d, yp), yb) in delta.iter_mut().zip(&y).zip(base_y) {
                    *d = (*d).max((yp - yb).abs());
                }
            }
            None => skipped += 1,
        }
    }
    Ok(ZoneSensitivity { delta, skipped })
}

/// Uniform draw in the open interval (0, 1) from a counter-addressed stream
/// keyed by `(seed, iteration, zone, index)`.
fn keyed_uniform(seed: u64, iteration: usize, zone: usize, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | zone as u64);
    rng.set_word_pos(2 * index as u128);
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF Laplace(0, b) sample from a uniform in (0, 1).
pub fn laplace_from_uniform(u: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let c = u - 0.5;
    -b * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// `n` i.i.d. Laplace(0, b) samples; the `stream` selects an independent
/// sequence for the same seed.
pub fn laplace_samples(b: f64, n: usize, seed: u64, stream: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64 | (1u64 << 63));
    (0..n)
        .map(|_| {
            let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
            laplace_from_uniform(u, b)
        })
        .collect()
}

/// Draws the iteration-`k` noise for every boundary copy.
///
/// Each entry depends only on `(seed, k, zone, index)`, so the result is the
/// same however the zones are scheduled.
pub fn draw_noise(
    delta: &SensitivityVector,
    params: &PrivacyParams,
    total_iters: usize,
    k: usize,
    part: &ZonePartition,
) -> Result<NoiseDraw> {
    if delta.0.len() != part.dual_len() {
        return Err(Error::LengthMismatch { expected: part.dual_len(), found: delta.0.len() });
    }
    let mut xi = vec![0.0; delta.0.len()];
    let mut scale_used = vec![0.0; delta.0.len()];
    if !params.is_private() {
        return Ok(NoiseDraw { xi, scale_used });
    }
    for z in 0..part.n_zones() {
        for (j, pos) in part.dual_range(z).enumerate() {
            let b = params.scale(delta.0[pos], total_iters);
            scale_used[pos] = b;
            if b > 0.0 {
                xi[pos] = laplace_from_uniform(keyed_uniform(params.seed, k, z, j), b);
            }
        }
    }
    Ok(NoiseDraw { xi, scale_used })
}

/// Adds noise elementwise; no clamping.
pub fn perturb(y: &[f64], noise: &NoiseDraw) -> Result<Vec<f64>> {
    if y.len() != noise.xi.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: noise.xi.len() });
    }
    Ok(y.iter().zip(&noise.xi).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantReport {
    pub private: bool,
    #[serde(with = "extended_float")]
    pub per_iteration_epsilon: f64,
    #[serde(with = "extended_float")]
    pub cumulative_epsilon: f64,
    /// Factor applied to Δ̄/ε̄ when drawing noise.
    pub scale_multiplier: f64,
}

pub fn accountant_report(params: &PrivacyParams, total_iters: usize) -> AccountantReport {
    let k = total_iters as f64;
    if !params.is_private() {
        return AccountantReport {
            private: false,
            per_iteration_epsilon: f64::INFINITY,
            cumulative_epsilon: f64::INFINITY,
            scale_multiplier: 0.0,
        };
    }
    match params.accountant {
        Accountant::PerIteration => AccountantReport {
            private: true,
            per_iteration_epsilon: params.epsilon_bar,
            cumulative_epsilon: k * params.epsilon_bar,
            scale_multiplier: 1.0,
        },
        Accountant::WholeRun => AccountantReport {
            private: true,
            per_iteration_epsilon: params.epsilon_bar / k,
            cumulative_epsilon: params.epsilon_bar,
            scale_multiplier: k,
        },
    }
}

/// Disk cache for zone sensitivities, keyed by a digest of the case name,
/// zone assignment, zone, multiplier block and β.
#[derive(Debug, Clone)]
pub struct SensitivityCache {
    pub dir: PathBuf,
}

impl SensitivityCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn key(case: &str, assignment: &[usize], zone: usize, lambda: &[f64], beta: f64) -> String {
        // FNV-1a, stable across builds
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        feed(case.as_bytes());
        for &a in assignment {
            feed(&(a as u64).to_le_bytes());
        }
        feed(&(zone as u64).to_le_bytes());
        for &l in lambda {
            feed(&l.to_bits().to_le_bytes());
        }
        feed(&beta.to_bits().to_le_bytes());
        format!("{h:016x}")
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        let text = std::fs::read_to_string(self.dir.join(format!("{key}.json"))).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, delta: &[f64]) -> Result<()> {
        std::fs::write(self.dir.join(format!("{key}.json")), serde_json::to_string(delta)?)?;
        Ok(())
    }
}
