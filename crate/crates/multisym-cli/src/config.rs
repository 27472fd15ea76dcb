//! Scenario configs. Every file carries `"version": 1`; unknown fields are rejected.

use multisym::bfmod::PhiTerm;
use multisym::complex::ComplexSpec;
use multisym::liegroup::Group;
use multisym::mech1d::Potential;
use multisym::scalar2d::Nonlinearity;
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub const VERSION: u32 = 1;

pub trait Versioned {
    fn version(&self) -> u32;
}

pub fn parse<T: DeserializeOwned + Versioned>(text: &str) -> Result<T, String> {
    let cfg: T = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if cfg.version() != VERSION {
        return Err(format!("unsupported config version {} (expected {VERSION})", cfg.version()));
    }
    Ok(cfg)
}

macro_rules! versioned {
    ($($t:ty),*) => {
        $(impl Versioned for $t {
            fn version(&self) -> u32 {
                self.version
            }
        })*
    };
}

versioned!(MechConfig, WaveConfig, LgtConfig, BfConfig, CanonicalConfig, ConvergeConfig);

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechConfig {
    pub version: u32,
    pub complex: ComplexSpec,
    pub system: MechSystem,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechSystem {
    Particle {
        mass: f64,
        potential: Potential,
        q_start: Vec<f64>,
        q_end: Vec<f64>,
        /// Direction of the translation current column; defaults to the first axis.
        #[serde(default)]
        xi: Option<Vec<f64>>,
    },
    /// Free rigid body on SO(3) from the identity to `exp(rotation)`.
    Rigid { inertia: Vec<f64>, rotation: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub version: u32,
    pub n1: usize,
    pub h: f64,
    pub k: f64,
    pub steps: usize,
    pub nonlinearity: Nonlinearity,
    pub initial: WaveInitial,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveInitial {
    /// `φ = amp sin(κ(x¹ − x⁰))`, sampled for the Cauchy data and the sides.
    PlaneWave { amp: f64, wavenumber: f64 },
    /// Uniform random slice, past row and sides in `[-amp, amp]`.
    Random { amp: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LgtConfig {
    pub version: u32,
    pub group: Group,
    pub beta: f64,
    pub complex: ComplexSpec,
    /// Radius of the random boundary `k_r` around the identity.
    pub boundary_radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BfConfig {
    pub version: u32,
    pub group: Group,
    pub complex: ComplexSpec,
    pub phi: PhiTerm,
    /// Scale of the constant `B` of the flat starting solution.
    pub b_radius: f64,
    pub gauge_radius: f64,
    /// Size of the random bulk perturbation Newton starts from.
    pub perturbation: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalConfig {
    pub version: u32,
    pub family: CanonicalFamily,
    pub configs: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CanonicalFamily {
    Scalar { nonlinearity: Nonlinearity, n0: usize, n1: usize, h: f64, k: f64 },
    Gauge { group: Group, beta: f64, dims: Vec<usize>, radius: f64 },
    Bf { group: Group, phi: PhiTerm, dims: Vec<usize>, radius: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub version: u32,
    pub scenario: ConvergeScenario,
    /// Atoms per unit (particle, rigid, wave) or refinement factors (corrected action).
    pub scales: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleSection {
    /// `q = t`, `v = sin t`.
    Linear,
    /// `q = cos t + t²/2`, `v = sin t`.
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigidSection {
    /// Steady rotation about the second principal axis.
    Steady,
    /// Small non-uniform rotation about varying axes.
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveSection {
    /// `φ = sin x⁰ sin x¹` on `[0, π]²`.
    Sine,
    /// `φ = 0.4`, `v = 1.5`.
    Constant,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvergeScenario {
    Particle { mass: f64, duration: f64, section: ParticleSection },
    Rigid { inertia: Vec<f64>, duration: f64, section: RigidSection },
    Wave { nonlinearity: Nonlinearity, section: WaveSection },
    /// Corrected action of one coarse atom for the harmonic oscillator (`k = 0` is free).
    Corrected { mass: f64, k: f64, duration: f64, q_start: f64, q_end: f64 },
}
