//! Dictionary of known targets, nearest-feature matching, the measurement
//! noise model and the Monte Carlo stability harness.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{descriptors, pt_spectrum, PtSpectrum};
use crate::forward::{data_matrix, MeasurementSet, Simulation, Target};
use crate::geometry::{fish_trajectory, make_shape, FishPose, FishSetup, Point, ShapeSpec};
use crate::gpt::{cgpt_multi, CgptMatrix, Contrast};
use crate::inversion::{
    background_gradients, maps_from_skin, pt_imag_data, pt_imag_operator, CgptSolver,
    PtImagSolver,
};

pub const DICTIONARY_VERSION: u32 = 1;

/// Detection rate of a uniform random guess among the paper's 8 targets.
pub const CHANCE_RATE: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Shape descriptors `𝓘⁽¹⁾, 𝓘⁽²⁾`.
    #[serde(rename = "sd")]
    Sd,
    /// PT singular values `τ`, compared at the dictionary scale.
    #[serde(rename = "sv")]
    Sv,
    /// Ratios `μ` of PT singular values, scale free.
    #[serde(rename = "svr")]
    Svr,
    /// Singular values of `Im 𝓜` from background-eliminated skin data.
    #[serde(rename = "pt-imag")]
    PtImag,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Sd, Family::Sv, Family::Svr, Family::PtImag];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sd => "sd",
            Family::Sv => "sv",
            Family::Svr => "svr",
            Family::PtImag => "pt-imag",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown feature family '{s}' (expected sd, sv, svr or pt-imag)"
                ))
            })
    }
}

/// A dictionary target before its features are computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub name: String,
    pub shape: ShapeSpec,
    pub sigma: f64,
    pub epsilon: f64,
}

/// The eight targets of the reference experiments.
pub fn paper_entries() -> Vec<EntrySpec> {
    let named = |name: &str, kind: &str, sigma: f64, epsilon: f64| EntrySpec {
        name: name.to_string(),
        shape: ShapeSpec::named(kind).expect("built-in shape"),
        sigma,
        epsilon,
    };
    vec![
        named("disk", "disk", 2.0, 1.0),
        named("ellipse", "ellipse", 2.0, 1.0),
        named("letterA", "letterA", 2.0, 1.0),
        named("letterE", "letterE", 2.0, 1.0),
        named("rectangle", "rectangle", 2.0, 1.0),
        named("square", "square", 2.0, 1.0),
        named("triangle", "triangle", 2.0, 1.0),
        named("ellipse-s5e2", "ellipse", 5.0, 2.0),
    ]
}

/// Descriptor matrices of one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorPair {
    pub i1: [[f64; 2]; 2],
    pub i2: [[f64; 2]; 2],
}

impl DescriptorPair {
    fn to_vec(&self) -> Vec<f64> {
        self.i1.iter().chain(&self.i2).flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryEntry {
    pub name: String,
    pub shape: ShapeSpec,
    pub sigma: f64,
    pub epsilon: f64,
    pub scale: f64,
    /// Exact CGPTs per frequency.
    pub cgpt: Vec<CgptMatrix>,
    pub spectrum: PtSpectrum,
    /// Per frequency; empty when the order is below 2.
    pub descriptors: Vec<DescriptorPair>,
}

fn imag_singular_values(m: &Matrix2<Complex64>) -> Vec<f64> {
    let s = m.map(|z| z.im).singular_values();
    vec![s[0].max(s[1]), s[0].min(s[1])]
}

fn descriptor_pair(m: &CgptMatrix) -> Result<DescriptorPair> {
    let d = descriptors(m)?;
    let arr = |x: &Matrix2<f64>| [[x[(0, 0)], x[(0, 1)]], [x[(1, 0)], x[(1, 1)]]];
    Ok(DescriptorPair {
        i1: arr(&d.i1),
        i2: arr(&d.i2),
    })
}

impl DictionaryEntry {
    /// Feature vectors of the given frequency indices.
    pub fn features(&self, family: Family, freqs: &[usize]) -> Result<Vec<Vec<f64>>> {
        let available = match family {
            Family::Sd => self.descriptors.len(),
            Family::Sv | Family::PtImag => self.cgpt.len(),
            Family::Svr => self.spectrum.mu.len(),
        };
        freqs
            .iter()
            .map(|&f| {
                if f >= available {
                    return Err(Error::invalid(format!(
                        "frequency index {f} unavailable for family {family} in entry '{}'",
                        self.name
                    )));
                }
                Ok(match family {
                    Family::Sd => self.descriptors[f].to_vec(),
                    Family::Sv => self.spectrum.tau[f].to_vec(),
                    Family::Svr => self.spectrum.mu[f].to_vec(),
                    Family::PtImag => imag_singular_values(&self.cgpt[f].pt()),
                })
            })
            .collect()
    }

    /// The target this entry describes, sampled at the recommended density.
    pub fn target(&self, angle: f64, center: Point) -> Result<Target> {
        let b = make_shape(&self.shape, self.shape.recommended_nodes())?
            .transform(self.scale, angle, center)?;
        Target::new(b, self.sigma, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// Ascending.
    pub frequencies: Vec<f64>,
    pub order: usize,
    pub entries: Vec<DictionaryEntry>,
}

fn check_frequencies(freqs: &[f64]) -> Result<()> {
    if freqs.is_empty() {
        return Err(Error::invalid("the frequency grid is empty"));
    }
    if freqs.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid("frequencies must be positive and finite"));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("frequencies must be strictly ascending"));
    }
    Ok(())
}

/// Exact features of every entry at `scale`, from boundary-integral CGPTs.
pub fn build_dictionary(specs: &[EntrySpec], frequencies: &[f64], order: usize, scale: f64) -> Result<Dictionary> {
    if specs.is_empty() {
        return Err(Error::invalid("the dictionary needs at least one entry"));
    }
    check_frequencies(frequencies)?;
    if order == 0 {
        return Err(Error::invalid("CGPT order must be at least 1"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let entries = specs
        .par_iter()
        .map(|spec| {
            let lambdas = frequencies
                .iter()
                .map(|&w| Ok(Contrast::new(spec.sigma, spec.epsilon, w)?.lambda()))
                .collect::<Result<Vec<_>>>()?;
            let b = make_shape(&spec.shape, spec.shape.recommended_nodes())?
                .transform(scale, 0.0, Point::zeros())?;
            let cgpt = cgpt_multi(&b, &lambdas, order)?;
            let pts: Vec<_> = frequencies.iter().copied().zip(cgpt.iter().map(CgptMatrix::pt)).collect();
            let spectrum = pt_spectrum(&pts)?;
            let descriptors = if order >= 2 {
                cgpt.iter().map(descriptor_pair).collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            Ok(DictionaryEntry {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                sigma: spec.sigma,
                epsilon: spec.epsilon,
                scale,
                cgpt,
                spectrum,
                descriptors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dictionary {
        frequencies: frequencies.to_vec(),
        order,
        entries,
    })
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    name: String,
    shape: ShapeSpec,
    sigma: f64,
    epsilon: f64,
    scale: f64,
    /// `[f][m][n]` with entries `cc, cs, sc, ss` as `[re, im]`.
    cgpt: Vec<Vec<Vec<[Complex64; 4]>>>,
    tau: Vec<[f64; 2]>,
    mu: Vec<[f64; 2]>,
    descriptors: DescriptorsJson,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct DescriptorsJson {
    I1: Vec<[[f64; 2]; 2]>,
    I2: Vec<[[f64; 2]; 2]>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryJson {
    version: u32,
    frequencies: Vec<f64>,
    order: usize,
    entries: Vec<EntryJson>,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let entries = self
            .entries
            .iter()
            .map(|e| EntryJson {
                name: e.name.clone(),
                shape: e.shape.clone(),
                sigma: e.sigma,
                epsilon: e.epsilon,
                scale: e.scale,
                cgpt: e
                    .cgpt
                    .iter()
                    .map(|c| {
                        (1..=c.order())
                            .map(|m| {
                                (1..=c.order())
                                    .map(|n| {
                                        let b = c.block(m, n);
                                        [b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]]
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
                tau: e.spectrum.tau.clone(),
                mu: e.spectrum.mu.clone(),
                descriptors: DescriptorsJson {
                    I1: e.descriptors.iter().map(|d| d.i1).collect(),
                    I2: e.descriptors.iter().map(|d| d.i2).collect(),
                },
            })
            .collect();
        let doc = DictionaryJson {
            version: DICTIONARY_VERSION,
            frequencies: self.frequencies.clone(),
            order: self.order,
            entries,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let doc: DictionaryJson = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        if doc.version != DICTIONARY_VERSION {
            return Err(Error::format(path, format!("unsupported dictionary version {}", doc.version)));
        }
        check_frequencies(&doc.frequencies).map_err(|e| Error::format(path, e.to_string()))?;
        let nf = doc.frequencies.len();
        let entries = doc
            .entries
            .into_iter()
            .map(|e| {
                let bad = |msg: String| Error::format(path, format!("entry '{}': {msg}", e.name));
                if e.cgpt.len() != nf || e.tau.len() != nf {
                    return Err(bad("per-frequency arrays do not match the frequency grid".into()));
                }
                let cgpt = e
                    .cgpt
                    .iter()
                    .map(|f| {
                        if f.len() != doc.order || f.iter().any(|row| row.len() != doc.order) {
                            return Err(bad(format!("CGPT blocks are not {0}×{0}", doc.order)));
                        }
                        let mut c = CgptMatrix::zeros(doc.order);
                        for (m, row) in f.iter().enumerate() {
                            for (n, v) in row.iter().enumerate() {
                                *c.block_mut(m + 1, n + 1) = Matrix2::new(v[0], v[1], v[2], v[3]);
                            }
                        }
                        Ok(c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let descriptors: Vec<DescriptorPair> = e
                    .descriptors
                    .I1
                    .iter()
                    .zip(&e.descriptors.I2)
                    .map(|(i1, i2)| DescriptorPair { i1: *i1, i2: *i2 })
                    .collect();
                let finite = cgpt.iter().all(|c| c.max_abs().is_finite())
                    && e.tau.iter().chain(&e.mu).flatten().all(|v| v.is_finite());
                if !finite {
                    return Err(bad("non-finite feature values".into()));
                }
                Ok(DictionaryEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    sigma: e.sigma,
                    epsilon: e.epsilon,
                    scale: e.scale,
                    cgpt,
                    spectrum: PtSpectrum { tau: e.tau, mu: e.mu },
                    descriptors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dictionary {
            frequencies: doc.frequencies,
            order: doc.order,
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Measured features of one family at a set of frequency indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub family: Family,
    pub frequencies: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl FeatureSet {
    /// Features of recovered CGPTs, one per dictionary frequency. `freqs`
    /// selects the frequencies compared (all when `None`).
    pub fn from_cgpts(
        family: Family,
        cgpts: &[CgptMatrix],
        frequencies: &[f64],
        freqs: Option<&[usize]>,
    ) -> Result<Self> {
        if cgpts.len() != frequencies.len() {
            return Err(Error::Dimension {
                context: "recovered CGPTs per frequency",
                expected: frequencies.len(),
                found: cgpts.len(),
            });
        }
        let nf = match family {
            Family::Svr => frequencies.len().saturating_sub(1),
            _ => frequencies.len(),
        };
        let idx: Vec<usize> = freqs.map_or_else(|| (0..nf).collect(), <[usize]>::to_vec);
        if idx.iter().any(|&f| f >= nf) {
            return Err(Error::invalid(format!(
                "frequency index out of range for family {family}"
            )));
        }
        let values = match family {
            Family::Sd => idx.iter().map(|&f| Ok(descriptor_pair(&cgpts[f])?.to_vec())).collect::<Result<_>>()?,
            Family::Sv | Family::Svr => {
                let pts: Vec<_> = frequencies.iter().copied().zip(cgpts.iter().map(CgptMatrix::pt)).collect();
                let s = pt_spectrum(&pts)?;
                let src = if family == Family::Sv { &s.tau } else { &s.mu };
                idx.iter().map(|&f| src[f].to_vec()).collect()
            }
            Family::PtImag => idx.iter().map(|&f| imag_singular_values(&cgpts[f].pt())).collect(),
        };
        Ok(Self {
            family,
            frequencies: idx,
            values,
        })
    }

    /// Features from fitted `Im 𝓜` per selected frequency.
    pub fn from_imag_pts(pts: &[Matrix2<f64>], freqs: &[usize]) -> Result<Self> {
        if pts.len() != freqs.len() {
            return Err(Error::Dimension {
                context: "imaginary PTs per frequency",
                expected: freqs.len(),
                found: pts.len(),
            });
        }
        Ok(Self {
            family: Family::PtImag,
            frequencies: freqs.to_vec(),
            values: pts
                .iter()
                .map(|m| {
                    let s = m.singular_values();
                    vec![s[0].max(s[1]), s[0].min(s[1])]
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub family: Family,
    pub scores: Vec<f64>,
    pub winner: usize,
}

/// `e_n = Σ_f ‖q(B_n)⁽ᶠ⁾ - q⁽ᶠ⁾‖²`; the smallest score wins, ties going to
/// the lower index.
pub fn match_features(q: &FeatureSet, dict: &Dictionary) -> Result<MatchResult> {
    if dict.is_empty() {
        return Err(Error::invalid("cannot match against an empty dictionary"));
    }
    let scores = dict
        .entries
        .iter()
        .map(|e| {
            let reference = e.features(q.family, &q.frequencies)?;
            let mut score = 0.0;
            for (a, b) in reference.iter().zip(&q.values) {
                if a.len() != b.len() {
                    return Err(Error::invalid(format!(
                        "feature length {} does not match the dictionary's {} for family {}",
                        b.len(),
                        a.len(),
                        q.family
                    )));
                }
                score += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
            Ok(score)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut winner = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[winner] {
            winner = i;
        }
    }
    Ok(MatchResult {
        family: q.family,
        scores,
        winner,
    })
}

fn check_level(level: f64) -> Result<()> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::invalid(format!("noise level must be non-negative, got {level}")));
    }
    Ok(())
}

/// Which components of the complex data receive noise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// A single real Gaussian matrix added to `Q`.
    #[default]
    Real,
    /// Independent draws on the real and imaginary parts.
    Complex,
}

impl FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" => Ok(NoiseMode::Complex),
            "real" => Ok(NoiseMode::Real),
            _ => Err(Error::invalid(format!(
                "unknown noise mode '{s}' (expected complex or real)"
            ))),
        }
    }
}

/// `Q + εW` with `ε = level·(max Re Q - min Re Q)` per matrix.
pub fn add_noise<R: Rng>(
    q: &[DMatrix<Complex64>],
    level: f64,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<Vec<DMatrix<Complex64>>> {
    check_level(level)?;
    if level == 0.0 {
        return Ok(q.to_vec());
    }
    Ok(q.iter()
        .map(|m| {
            let eps = level * fluctuation(m.iter().map(|z| z.re));
            m.map(|z| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = match mode {
                    NoiseMode::Complex => rng.sample(StandardNormal),
                    NoiseMode::Real => 0.0,
                };
                z + Complex64::new(a, b) * eps
            })
        })
        .collect())
}

/// Real-valued version of [`add_noise`].
pub fn add_noise_real<R: Rng>(data: &[Vec<f64>], level: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    check_level(level)?;
    if level == 0.0 {
        return Ok(data.to_vec());
    }
    Ok(data
        .iter()
        .map(|v| {
            let eps = level * fluctuation(v.iter().copied());
            v.iter().map(|x| x + eps * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect())
}

fn fluctuation(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Noisy copy of a measurement set under a fixed seed.
pub fn add_noise_seeded(m: &MeasurementSet, level: f64, mode: NoiseMode, seed: u64) -> Result<MeasurementSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(MeasurementSet {
        q: add_noise(&m.q, level, mode, &mut rng)?,
        ..m.clone()
    })
}

/// How the targets are measured in a stability experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub setup: FishSetup,
    pub xi: f64,
    /// Expansion order of the recovery; the descriptor family needs the
    /// `𝐌₂₂` block and raises it to at least 3.
    pub order: usize,
    /// Rotation applied to every target.
    pub rotation: f64,
    /// Frequencies compared, as indices into the dictionary grid (all when
    /// `None`).
    pub frequencies: Option<Vec<usize>>,
    pub noise: NoiseMode,
}

impl Default for Acquisition {
    fn default() -> Self {
        Self {
            setup: FishSetup::default(),
            xi: 0.0,
            order: 2,
            rotation: 0.0,
            frequencies: None,
            noise: NoiseMode::Real,
        }
    }
}

impl Acquisition {
    pub fn effective_order(&self, family: Family) -> usize {
        match family {
            Family::Sd => self.order.max(3),
            _ => self.order,
        }
    }
}

/// Simulated acquisition of one dictionary entry.
pub fn simulate_entry(entry: &DictionaryEntry, frequencies: &[f64], acq: &Acquisition) -> Result<(Vec<FishPose>, Simulation)> {
    let poses = fish_trajectory(&acq.setup)?;
    let target = entry.target(acq.rotation, Point::zeros())?;
    let sim = data_matrix(&poses, Some(&target), frequencies, acq.xi, Point::zeros())?;
    Ok((poses, sim))
}

enum Prepared {
    Cgpt {
        clean: Vec<DMatrix<Complex64>>,
        solvers: Vec<CgptSolver>,
    },
    Imag {
        clean: Vec<Vec<f64>>,
        solver: PtImagSolver,
    },
}

/// Noiseless data and recovery operators of every dictionary target, ready
/// for repeated noisy trials.
pub struct Experiment {
    pub family: Family,
    /// Frequency indices compared.
    pub frequencies: Vec<usize>,
    dictionary: Dictionary,
    prepared: Vec<Prepared>,
    noise: NoiseMode,
}

impl Experiment {
    pub fn prepare(dict: &Dictionary, family: Family, acq: &Acquisition) -> Result<Self> {
        let nf = dict.frequencies.len();
        let compared: Vec<usize> = match (&acq.frequencies, family) {
            (_, Family::Svr) if nf < 2 => {
                return Err(Error::invalid("ratio features need at least two frequencies"))
            }
            (Some(f), _) => f.clone(),
            (None, Family::Svr) => (0..nf - 1).collect(),
            (None, _) => (0..nf).collect(),
        };
        let limit = if family == Family::Svr { nf - 1 } else { nf };
        if compared.is_empty() || compared.iter().any(|&f| f >= limit) {
            return Err(Error::invalid("compared frequency indices out of range"));
        }
        // Frequencies whose data enter the recovery.
        let used: Vec<usize> = match family {
            Family::Sv | Family::Svr => (0..nf).collect(),
            _ => compared.clone(),
        };
        let omegas: Vec<f64> = used.iter().map(|&f| dict.frequencies[f]).collect();
        let z = Point::zeros();
        let prepared = dict
            .entries
            .iter()
            .map(|entry| {
                let (poses, sim) = simulate_entry(entry, &omegas, acq)?;
                if family == Family::PtImag {
                    let grads = background_gradients(&poses, &sim.background, &z, acq.xi)?;
                    let solver = PtImagSolver::new(&pt_imag_operator(&poses, &grads, &z)?)?;
                    let clean = (0..omegas.len())
                        .map(|f| {
                            let mut v = Vec::new();
                            for (s, pose) in poses.iter().enumerate() {
                                v.extend(pt_imag_data(pose, &sim.skin[s][f], &sim.background[s])?);
                            }
                            Ok(v)
                        })
                        .collect::<Result<_>>()?;
                    Ok(Prepared::Imag { clean, solver })
                } else {
                    let maps = maps_from_skin(&poses, &sim.skin, &z, acq.effective_order(family))?;
                    let solvers = maps.iter().map(|m| m.solver()).collect::<Result<_>>()?;
                    Ok(Prepared::Cgpt {
                        clean: sim.measurements.q,
                        solvers,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family,
            frequencies: compared,
            dictionary: dict.clone(),
            prepared,
            noise: acq.noise,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// Features measured on target `n` at one noise level.
    pub fn measure<R: Rng>(&self, n: usize, level: f64, rng: &mut R) -> Result<FeatureSet> {
        let nf = self.dictionary.frequencies.len();
        match &self.prepared[n] {
            Prepared::Cgpt { clean, solvers } => {
                let noisy = add_noise(clean, level, self.noise, rng)?;
                match self.family {
                    Family::Sv | Family::Svr => {
                        let pts = noisy
                            .iter()
                            .zip(solvers)
                            .map(|(q, s)| s.solve_pt(q))
                            .collect::<Result<Vec<_>>>()?;
                        let pairs: Vec<_> = self.dictionary.frequencies.iter().copied().zip(pts).collect();
                        let s = pt_spectrum(&pairs)?;
                        let src = if self.family == Family::Sv { &s.tau } else { &s.mu };
                        Ok(FeatureSet {
                            family: self.family,
                            frequencies: self.frequencies.clone(),
                            values: self.frequencies.iter().map(|&f| src[f].to_vec()).collect(),
                        })
                    }
                    _ => {
                        // Only the compared frequencies were simulated.
                        let mut cgpts = vec![CgptMatrix::zeros(1); nf];
                        for (k, &f) in self.frequencies.iter().enumerate() {
                            cgpts[f] = solvers[k].solve(&noisy[k])?;
                        }
                        let values = self
                            .frequencies
                            .iter()
                            .map(|&f| Ok(descriptor_pair(&cgpts[f])?.to_vec()))
                            .collect::<Result<_>>()?;
                        Ok(FeatureSet {
                            family: self.family,
                            frequencies: self.frequencies.clone(),
                            values,
                        })
                    }
                }
            }
            Prepared::Imag { clean, solver } => {
                let noisy = add_noise_real(clean, level, rng)?;
                let pts = noisy
                    .iter()
                    .map(|d| Ok(solver.solve(d)?.pt))
                    .collect::<Result<Vec<_>>>()?;
                FeatureSet::from_imag_pts(&pts, &self.frequencies)
            }
        }
    }

    fn trial_rng(seed: u64, level: f64, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ level.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(trial as u64);
        rng
    }

    /// `trials` independent recognitions at one noise level, each on a
    /// uniformly chosen target. Results do not depend on the thread count.
    pub fn run_level(&self, level: f64, trials: usize, seed: u64) -> Result<StabilityPoint> {
        check_level(level)?;
        if trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        let n = self.dictionary.len();
        let outcomes = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = Self::trial_rng(seed, level, t);
                let target = rng.random_range(0..n);
                let q = self.measure(target, level, &mut rng)?;
                Ok((target, match_features(&q, &self.dictionary)?.winner))
            })
            .collect::<Result<Vec<(usize, usize)>>>()?;
        let mut per_target = vec![(0usize, 0usize); n];
        for (t, w) in outcomes {
            per_target[t].0 += 1;
            if t == w {
                per_target[t].1 += 1;
            }
        }
        Ok(StabilityPoint {
            noise: level,
            names: self.dictionary.entries.iter().map(|e| e.name.clone()).collect(),
            per_target,
        })
    }

    /// Runs the noise levels in order until the overall detection rate
    /// falls to `stop_rate`. `on_level` sees each completed level.
    pub fn sweep(
        &self,
        levels: &[f64],
        trials: usize,
        seed: u64,
        stop_rate: f64,
        mut on_level: impl FnMut(&StabilityPoint) -> Result<()>,
    ) -> Result<Vec<StabilityPoint>> {
        let mut out = Vec::new();
        for &level in levels {
            let p = self.run_level(level, trials, seed)?;
            on_level(&p)?;
            let stop = p.rate() <= stop_rate;
            out.push(p);
            if stop {
                break;
            }
        }
        Ok(out)
    }
}

/// Detection counts at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPoint {
    pub noise: f64,
    pub names: Vec<String>,
    /// `(trials, detections)` per dictionary entry.
    pub per_target: Vec<(usize, usize)>,
}

impl StabilityPoint {
    pub fn trials(&self) -> usize {
        self.per_target.iter().map(|p| p.0).sum()
    }

    pub fn detections(&self) -> usize {
        self.per_target.iter().map(|p| p.1).sum()
    }

    pub fn rate(&self) -> f64 {
        self.detections() as f64 / self.trials().max(1) as f64
    }

    /// CSV rows, one per target then an `all` row.
    pub fn rows(&self) -> Vec<StabilityRow> {
        let mut rows: Vec<StabilityRow> = self
            .names
            .iter()
            .zip(&self.per_target)
            .map(|(name, &(trials, detections))| StabilityRow {
                noise_level: self.noise,
                target: name.clone(),
                trials,
                detections,
                rate: detections as f64 / trials.max(1) as f64,
            })
            .collect();
        rows.push(StabilityRow {
            noise_level: self.noise,
            target: "all".into(),
            trials: self.trials(),
            detections: self.detections(),
            rate: self.rate(),
        });
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub noise_level: f64,
    pub target: String,
    pub trials: usize,
    pub detections: usize,
    pub rate: f64,
}

pub const STABILITY_HEADER: &str = "noise_level,target,trials,detections,rate";

/// Reads a stability CSV, returning its config hash and rows.
pub fn read_stability_csv(path: &Path) -> Result<(Option<String>, Vec<StabilityRow>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hash = None;
    let mut body = String::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(h) = line.strip_prefix("# config_hash=") {
            hash = Some(h.trim().to_string());
        } else if !line.starts_with('#') {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let rows = rd
        .deserialize()
        .collect::<std::result::Result<Vec<StabilityRow>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((hash, rows))
}

/// Writes rows under a `# config_hash=` comment, replacing the file.
pub fn write_stability_csv(path: &Path, hash: &str, rows: &[StabilityRow]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "# config_hash={hash}").map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        if rows.is_empty() {
            w.write_record(STABILITY_HEADER.split(',')).map_err(|e| Error::format(path, e.to_string()))?;
        }
        for r in rows {
            w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
