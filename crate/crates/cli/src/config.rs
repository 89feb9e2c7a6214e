use std::path::Path;

use kgsa_core::potential::WidthRule;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// εₙ = min(cap, scale·(n+1)^(−exponent)).
    pub cap: f64,
    pub scale: f64,
    pub exponent: f64,
    pub calibration_tol: f64,
    /// Spikes tabulated and certified.
    pub n_max: usize,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        let r = WidthRule::default();
        PotentialConfig {
            cap: r.cap,
            scale: r.scale,
            exponent: r.exponent,
            calibration_tol: 1e-10,
            n_max: 200,
        }
    }
}

impl PotentialConfig {
    pub fn rule(&self) -> WidthRule {
        WidthRule {
            cap: self.cap,
            scale: self.scale,
            exponent: self.exponent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicConfig {
    pub tol: f64,
    pub lambda_max: f64,
    /// Initial point (η, z, x, y) for the `geodesic` subcommand.
    pub point: [f64; 4],
    /// Initial momentum (p_η, p_z, p_x, p_y).
    pub momentum: [f64; 4],
    /// Keep every k-th accepted step in trajectory.csv.
    pub sample_stride: usize,
    /// Random initial conditions in the completeness batch.
    pub batch: usize,
    /// C/p_z² range of the batch.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Batch starting points have |x₀| ≤ x0_max.
    pub x0_max: f64,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        GeodesicConfig {
            tol: 1e-10,
            lambda_max: 1000.0,
            point: [0.0; 4],
            momentum: [0.0, 1.0, 1.0, 0.0],
            sample_stride: 100,
            batch: 50,
            ratio_min: 0.1,
            ratio_max: 20.0,
            x0_max: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeConfig {
    /// Causal future vectors sampled for the cone inequalities.
    pub samples: usize,
    /// Sample points have |x| ≤ 𝔵ₙ with n drawn from 1..=n_max.
    pub n_max: usize,
}

impl Default for ConeConfig {
    fn default() -> Self {
        ConeConfig {
            samples: 100_000,
            n_max: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiamondConfig {
    /// Points (η, z, x, y) for the `diamond` subcommand.
    pub p: [f64; 4],
    pub q: [f64; 4],
    /// Random connected pairs checked against their diamond.
    pub pairs: usize,
    /// Affine length of the connecting geodesics is drawn from [0.5, pair_lambda_max].
    pub pair_lambda_max: f64,
}

impl Default for DiamondConfig {
    fn default() -> Self {
        DiamondConfig {
            p: [0.0; 4],
            q: [1.0, 0.0, 0.0, 0.0],
            pairs: 100,
            pair_lambda_max: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeylConfig {
    /// Reduced momenta for the `weyl` subcommand and the deficiency solution checks.
    pub p_y: f64,
    pub p_z: f64,
    pub p_eta: f64,
    pub l_max: f64,
    pub tol: f64,
    /// Random reduced momenta for the LG and L¹ checks.
    pub lg_cases: usize,
}

impl Default for WeylConfig {
    fn default() -> Self {
        WeylConfig {
            p_y: 1.0,
            p_z: 1.0,
            p_eta: 1.0,
            l_max: 40.0,
            tol: 1e-10,
            lg_cases: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsiConfig {
    pub l: f64,
    /// Second rung of the norm ladder.
    pub l_check: f64,
    pub tol: f64,
}

impl Default for PsiConfig {
    fn default() -> Self {
        PsiConfig {
            l: 60.0,
            l_check: 120.0,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormMapConfig {
    /// Cube [lo, hi]³ with `count` points per axis.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub l: f64,
    pub tol: f64,
    pub target: f64,
}

impl Default for NormMapConfig {
    fn default() -> Self {
        NormMapConfig {
            lo: 1.0,
            hi: 2.0,
            count: 9,
            l: 60.0,
            tol: 1e-10,
            target: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; not part of the config hash.
    pub out: String,
    /// Worker threads, 0 for one per core; not part of the config hash.
    pub threads: usize,
    pub potential: PotentialConfig,
    pub geodesic: GeodesicConfig,
    pub cone: ConeConfig,
    pub diamond: DiamondConfig,
    pub weyl: WeylConfig,
    pub psi: PsiConfig,
    pub normmap: NormMapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out: "kgsa-out".into(),
            threads: 0,
            potential: PotentialConfig::default(),
            geodesic: GeodesicConfig::default(),
            cone: ConeConfig::default(),
            diamond: DiamondConfig::default(),
            weyl: WeylConfig::default(),
            psi: PsiConfig::default(),
            normmap: NormMapConfig::default(),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be positive and finite, got {x}")))
    }
}

fn at_least(name: &str, x: usize, min: usize) -> Result<(), ConfigError> {
    if x >= min {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be at least {min}, got {x}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets every solver tolerance (calibration excluded).
    pub fn override_tol(&mut self, tol: f64) {
        self.geodesic.tol = tol;
        self.weyl.tol = tol;
        self.psi.tol = tol;
        self.normmap.tol = tol;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.potential
            .rule()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        positive("potential.calibration_tol", self.potential.calibration_tol)?;
        at_least("potential.n_max", self.potential.n_max, 1)?;
        let g = &self.geodesic;
        positive("geodesic.tol", g.tol)?;
        positive("geodesic.lambda_max", g.lambda_max)?;
        positive("geodesic.ratio_min", g.ratio_min)?;
        positive("geodesic.x0_max", g.x0_max)?;
        at_least("geodesic.sample_stride", g.sample_stride, 1)?;
        if !(g.ratio_max > g.ratio_min) {
            return Err(ConfigError::Invalid("geodesic.ratio_max must exceed ratio_min".into()));
        }
        if g.point.iter().chain(&g.momentum).any(|c| !c.is_finite()) {
            return Err(ConfigError::Invalid("geodesic initial data must be finite".into()));
        }
        at_least("cone.n_max", self.cone.n_max, 1)?;
        if !(self.diamond.pair_lambda_max > 0.5 && self.diamond.pair_lambda_max.is_finite()) {
            return Err(ConfigError::Invalid("diamond.pair_lambda_max must exceed 0.5".into()));
        }
        if self.diamond.p.iter().chain(&self.diamond.q).any(|c| !c.is_finite()) {
            return Err(ConfigError::Invalid("diamond points must be finite".into()));
        }
        let w = &self.weyl;
        positive("weyl.tol", w.tol)?;
        if !(w.l_max >= 40.0) {
            return Err(ConfigError::Invalid(format!("weyl.l_max must be at least 40, got {}", w.l_max)));
        }
        if ![w.p_y, w.p_z, w.p_eta].iter().all(|c| c.is_finite()) {
            return Err(ConfigError::Invalid("weyl reduced momenta must be finite".into()));
        }
        let p = &self.psi;
        positive("psi.tol", p.tol)?;
        if !(p.l >= 60.0 && p.l_check > p.l) {
            return Err(ConfigError::Invalid(format!(
                "psi needs l ≥ 60 and l_check > l, got {} and {}",
                p.l, p.l_check
            )));
        }
        let n = &self.normmap;
        positive("normmap.tol", n.tol)?;
        at_least("normmap.count", n.count, 2)?;
        if !(n.lo > 0.0 && n.hi > n.lo) {
            return Err(ConfigError::Invalid("normmap needs 0 < lo < hi".into()));
        }
        if !(n.l >= 60.0) {
            return Err(ConfigError::Invalid(format!("normmap.l must be at least 60, got {}", n.l)));
        }
        if !(n.target > 0.0 && n.target <= 1.0) {
            return Err(ConfigError::Invalid(format!("normmap.target must lie in (0, 1], got {}", n.target)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML with `out` and `threads` cleared; neither affects results.
    pub fn hash(&self) -> String {
        let canon = RunConfig {
            out: String::new(),
            threads: 0,
            ..self.clone()
        };
        let digest = Sha256::digest(canon.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Largest |x| any configured computation reaches, plus margin for the spike table.
    pub fn x_extent(&self) -> f64 {
        let l1 = kgsa_core::reduced::L1_LADDER.iter().copied().fold(0.0, f64::max);
        [l1, self.psi.l_check, self.weyl.l_max, self.normmap.l].into_iter().fold(0.0, f64::max) + 10.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), c);
    }

    #[test]
    fn sections_override_single_keys() {
        let c = RunConfig::parse("seed = 9\n[weyl]\np_z = 0.0\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.weyl.p_z, 0.0);
        assert_eq!(c.weyl.l_max, 40.0);
    }

    #[test]
    fn malformed_and_invalid_configs_are_rejected() {
        assert!(matches!(RunConfig::parse("seed = ["), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::parse("[weyl]\nbogus = 1\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::parse("[psi]\ntol = -1.0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse("[potential]\nexponent = 2.5\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse("[normmap]\ncount = 1\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: "elsewhere".into(),
            threads: 3,
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed = 2;
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.override_tol(1e-9);
        assert_ne!(a.hash(), d.hash());
    }
}
