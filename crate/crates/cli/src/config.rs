//! Experiment configuration: TOML file plus command-line overrides.

use std::f64::consts::TAU;
use std::path::Path;

use electrosense::classifier::{paper_entries, EntrySpec, Family, NoiseMode, CHANCE_RATE};
use electrosense::forward::Target;
use electrosense::geometry::{make_shape, FishKind, FishSetup, Point, ShapeSpec};
use electrosense::gpt::Contrast;
use electrosense::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A named built-in kind or a full parametric description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeConfig {
    Named(String),
    Spec(ShapeSpec),
}

impl ShapeConfig {
    pub fn resolve(&self) -> Result<ShapeSpec> {
        match self {
            ShapeConfig::Named(kind) => ShapeSpec::named(kind),
            ShapeConfig::Spec(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub shape: ShapeConfig,
    pub sigma: f64,
    pub epsilon: f64,
    /// Characteristic size.
    pub delta: f64,
    pub angle: f64,
    pub center: [f64; 2],
    /// Boundary nodes; the shape's recommended count when absent.
    pub nodes: Option<usize>,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            shape: ShapeConfig::Named("ellipse".into()),
            sigma: 2.0,
            epsilon: 1.0,
            delta: 0.3,
            angle: 0.0,
            center: [0.0, 0.0],
            nodes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    pub name: String,
    pub shape: ShapeConfig,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_sigma() -> f64 {
    2.0
}

fn default_epsilon() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fish: FishKind,
    pub positions: usize,
    pub receptors: usize,
    pub orbit_radius: f64,
    pub aperture: f64,
    pub body_nodes: usize,
    pub xi: f64,
    pub frequencies: Vec<f64>,
    pub order: usize,
    pub family: Family,
    /// Frequency indices compared by the classifier (all when absent).
    pub compare: Option<Vec<usize>>,
    pub noise: Vec<f64>,
    pub noise_mode: NoiseMode,
    pub trials: usize,
    pub seed: u64,
    pub stop_rate: f64,
    /// Characteristic size of the dictionary entries.
    pub scale: f64,
    pub target: TargetConfig,
    /// Dictionary entries; the eight reference targets when absent.
    pub dictionary: Option<Vec<EntryConfig>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let setup = FishSetup::default();
        Self {
            fish: setup.kind,
            positions: setup.positions,
            receptors: setup.receptors,
            orbit_radius: setup.orbit_radius,
            aperture: TAU,
            body_nodes: setup.body_nodes,
            xi: 0.0,
            frequencies: (1..=10).map(f64::from).collect(),
            order: 2,
            family: Family::Sv,
            compare: None,
            noise: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 5.0],
            noise_mode: NoiseMode::Real,
            trials: 1000,
            seed: 0,
            stop_rate: CHANCE_RATE,
            scale: 0.3,
            target: TargetConfig::default(),
            dictionary: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })
    }

    pub fn setup(&self) -> FishSetup {
        FishSetup {
            kind: self.fish,
            positions: self.positions,
            orbit_radius: self.orbit_radius,
            aperture: self.aperture,
            body_nodes: self.body_nodes,
            receptors: self.receptors,
        }
    }

    pub fn entries(&self) -> Result<Vec<EntrySpec>> {
        match &self.dictionary {
            None => Ok(paper_entries()),
            Some(list) => list
                .iter()
                .map(|e| {
                    Ok(EntrySpec {
                        name: e.name.clone(),
                        shape: e.shape.resolve()?,
                        sigma: e.sigma,
                        epsilon: e.epsilon,
                    })
                })
                .collect(),
        }
    }

    pub fn target(&self) -> Result<Target> {
        let t = &self.target;
        if !(t.delta > 0.0) || !t.delta.is_finite() {
            return Err(Error::InvalidInput(format!("target size must be positive, got {}", t.delta)));
        }
        let spec = t.shape.resolve()?;
        let b = make_shape(&spec, t.nodes.unwrap_or_else(|| spec.recommended_nodes()))?.transform(
            t.delta,
            t.angle,
            Point::new(t.center[0], t.center[1]),
        )?;
        Target::new(b, t.sigma, t.epsilon)
    }

    pub fn target_center(&self) -> Point {
        Point::new(self.target.center[0], self.target.center[1])
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<()> {
        self.setup().validate()?;
        if self.frequencies.is_empty() {
            return Err(Error::InvalidInput("the frequency grid is empty".into()));
        }
        if self.frequencies.iter().any(|w| !(*w > 0.0) || !w.is_finite())
            || self.frequencies.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidInput(
                "frequencies must be positive, finite and strictly ascending".into(),
            ));
        }
        if self.order == 0 {
            return Err(Error::InvalidInput("CGPT order must be at least 1".into()));
        }
        if self.noise.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("noise levels must be non-negative".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("at least one trial is required".into()));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidInput(format!("dictionary scale must be positive, got {}", self.scale)));
        }
        if !self.xi.is_finite() || self.xi < 0.0 {
            return Err(Error::InvalidInput(format!("skin impedance must be non-negative, got {}", self.xi)));
        }
        if let Some(c) = &self.compare {
            if c.is_empty() || c.iter().any(|&f| f >= self.frequencies.len()) {
                return Err(Error::InvalidInput("compared frequency indices out of range".into()));
            }
        }
        for e in self.entries()? {
            for &w in &self.frequencies {
                Contrast::new(e.sigma, e.epsilon, w)?;
            }
        }
        self.target.shape.resolve()?;
        Ok(())
    }

    /// SHA-256 of the resolved configuration. The noise grid is left out
    /// when `without_noise` so that sweeps can be extended in place.
    pub fn hash(&self, without_noise: bool) -> String {
        let mut c = self.clone();
        if without_noise {
            c.noise.clear();
        }
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = ExperimentConfig::default();
        assert_eq!((c.positions, c.receptors, c.orbit_radius), (20, 128, 1.0));
        assert_eq!(c.frequencies.len(), 10);
        assert_eq!(c.target.delta, 0.3);
        c.validate().unwrap();
        assert_eq!(c.entries().unwrap().len(), 8);
    }

    #[test]
    fn toml_overrides_and_unknown_keys() {
        let c: ExperimentConfig = toml::from_str(
            "fish = \"ellipse\"\npositions = 8\nfamily = \"pt-imag\"\n[target]\nshape = \"triangle\"\ndelta = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.fish, FishKind::Ellipse);
        assert_eq!(c.family, Family::PtImag);
        assert_eq!(c.target.delta, 0.2);
        assert_eq!(c.receptors, 128);
        assert!(toml::from_str::<ExperimentConfig>("speed = 3").is_err());
        let custom: ExperimentConfig =
            toml::from_str("[target]\nshape = { kind = \"ellipse\", a = 0.6, b = 0.2 }\n").unwrap();
        assert_eq!(custom.target.shape.resolve().unwrap(), ShapeSpec::Ellipse { a: 0.6, b: 0.2 });
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(false), b.hash(false));
        b.noise.push(9.0);
        assert_ne!(a.hash(false), b.hash(false));
        assert_eq!(a.hash(true), b.hash(true));
        b.seed = 1;
        assert_ne!(a.hash(true), b.hash(true));
    }
}
