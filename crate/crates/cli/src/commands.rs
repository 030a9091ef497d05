use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use electrosense::classifier::{
    add_noise, add_noise_real, build_dictionary, match_features, read_stability_csv, write_stability_csv,
    Acquisition, Dictionary, Experiment, Family, FeatureSet, StabilityRow,
};
use electrosense::forward::{data_matrix, read_measurements, write_measurements, MeasurementSet};
use electrosense::geometry::{fish_trajectory, FishSetup, Point};
use electrosense::inversion::{
    assemble_operator, background_gradients, pt_imag_data, recover_pt_imag, skin_coefficients,
    SourceCoefficients,
};
use electrosense::{Complex64, Error, Result};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source: e,
    }
}

fn format_err(path: &Path, msg: impl ToString) -> Error {
    Error::Format {
        path: path.into(),
        message: msg.to_string(),
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| format_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn build_dict(cfg: &ExperimentConfig, out: PathBuf) -> Result<()> {
    if cfg.frequencies.len() < 2 {
        warn!("a single frequency leaves the singular-value ratios undefined; mu features are omitted");
    }
    let dict = build_dictionary(&cfg.entries()?, &cfg.frequencies, cfg.order, cfg.scale)?;
    let mut v: Value = serde_json::from_str(&dict.to_json()?).map_err(|e| format_err(&out, e))?;
    v["config_hash"] = json!(cfg.hash(true));
    write_json(&out, &v)?;
    info!("wrote {} entries to {}", dict.len(), out.display());
    Ok(())
}

/// Per-frequency source coefficients and background-eliminated data stored
/// next to the measurements so that `classify` needs only the bundle.
#[derive(Serialize, Deserialize)]
struct BundleExtra {
    config_hash: String,
    setup: FishSetup,
    xi: f64,
    noise: f64,
    seed: u64,
    /// `[frequency][pose]`.
    source_coefficients: Vec<Vec<SourceCoefficients>>,
    /// `[frequency][pose][receptor]`.
    pt_imag_data: Vec<Vec<Vec<f64>>>,
    /// `∇U(z)` per pose.
    background_gradient: Vec<[f64; 2]>,
}

pub fn simulate(cfg: &ExperimentConfig, level: f64, out: PathBuf) -> Result<()> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidInput(format!("noise level must be non-negative, got {level}")));
    }
    let setup = cfg.setup();
    let poses = fish_trajectory(&setup)?;
    let target = cfg.target()?;
    let z = cfg.target_center();
    let sim = data_matrix(&poses, Some(&target), &cfg.frequencies, cfg.xi, z)?;
    let coeffs = skin_coefficients(&poses, &sim.skin, &z, cfg.order.max(3) + 1)?;
    let grads = background_gradients(&poses, &sim.background, &z, cfg.xi)?;
    let imag = (0..cfg.frequencies.len())
        .map(|f| {
            poses
                .iter()
                .zip(&sim.skin)
                .zip(&sim.background)
                .map(|((p, row), bg)| pt_imag_data(p, &row[f], bg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q = add_noise(&sim.measurements.q, level, cfg.noise_mode, &mut rng)?;
    let imag = imag
        .into_iter()
        .map(|per_pose| {
            let r = per_pose.first().map_or(0, Vec::len);
            let flat = add_noise_real(&[per_pose.concat()], level, &mut rng)?.remove(0);
            Ok(flat.chunks(r.max(1)).map(<[f64]>::to_vec).collect())
        })
        .collect::<Result<Vec<Vec<Vec<f64>>>>>()?;

    let m = MeasurementSet { q, ..sim.measurements };
    let extra = BundleExtra {
        config_hash: cfg.hash(true),
        setup,
        xi: cfg.xi,
        noise: level,
        seed: cfg.seed,
        source_coefficients: coeffs,
        pt_imag_data: imag,
        background_gradient: grads.iter().map(|g| [g.x, g.y]).collect(),
    };
    let extra = serde_json::to_value(&extra).map_err(|e| format_err(&out, e))?;
    write_measurements(&out, &m, extra)?;
    info!("wrote {} frequencies of {}×{} data to {}", m.q.len(), m.poses(), m.receptors_per_pose(), out.display());
    Ok(())
}

pub fn classify(cfg: &ExperimentConfig, bundle: &Path, dict_path: &Path, out: PathBuf) -> Result<()> {
    let dict = Dictionary::load(dict_path)?;
    let (m, extra) = read_measurements(bundle)?;
    let meta = bundle.join("metadata.json");
    let extra: BundleExtra = serde_json::from_value(extra).map_err(|e| format_err(&meta, e))?;
    let nf = m.frequencies.len();
    if nf != dict.frequencies.len()
        || m.frequencies.iter().zip(&dict.frequencies).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs())
    {
        return Err(Error::InvalidInput(
            "bundle and dictionary frequency grids differ".into(),
        ));
    }
    if extra.source_coefficients.len() != nf || extra.pt_imag_data.len() != nf {
        return Err(Error::Dimension {
            context: "bundle frequencies",
            expected: nf,
            found: extra.source_coefficients.len(),
        });
    }
    let family = cfg.family;
    let z = Point::new(m.z[0], m.z[1]);
    let receptors: Vec<Vec<Point>> = m
        .receptors
        .iter()
        .map(|v| v.iter().map(|p| Point::new(p[0], p[1])).collect())
        .collect();
    let compare = cfg.compare.as_deref();

    let (features, recovered): (FeatureSet, Value) = if family == Family::PtImag {
        let poses = fish_trajectory(&extra.setup)?;
        let matches = poses.len() == receptors.len()
            && poses.iter().zip(&receptors).all(|(p, r)| {
                p.receptors.len() == r.len() && p.receptors.iter().zip(r).all(|(a, b)| (a - b).norm() <= 1e-9)
            });
        if !matches {
            return Err(format_err(&meta, "fish setup does not reproduce the receptor positions"));
        }
        let grads: Vec<Point> = extra.background_gradient.iter().map(|g| Point::new(g[0], g[1])).collect();
        let idx: Vec<usize> = compare.map_or_else(|| (0..nf).collect(), <[usize]>::to_vec);
        let fits = idx
            .iter()
            .map(|&f| recover_pt_imag(&poses, &extra.pt_imag_data[f], &grads, &z))
            .collect::<Result<Vec<_>>>()?;
        let pts: Vec<_> = fits.iter().map(|f| f.pt).collect();
        let rec = json!(fits
            .iter()
            .map(|f| json!({"im_pt": [[f.pt[(0, 0)], f.pt[(0, 1)]], [f.pt[(1, 0)], f.pt[(1, 1)]]], "asymmetry": f.asymmetry}))
            .collect::<Vec<_>>());
        (FeatureSet::from_imag_pts(&pts, &idx)?, rec)
    } else {
        let k = if family == Family::Sd { cfg.order.max(3) } else { cfg.order };
        let cgpts = extra
            .source_coefficients
            .iter()
            .zip(&m.q)
            .map(|(c, q)| assemble_operator(c, &receptors, &z, k)?.solver()?.solve(q))
            .collect::<Result<Vec<_>>>()?;
        let pair = |c: Complex64| [c.re, c.im];
        let rec = json!(cgpts
            .iter()
            .map(|c| {
                let p = c.pt();
                json!({"pt": [[pair(p[(0, 0)]), pair(p[(0, 1)])], [pair(p[(1, 0)]), pair(p[(1, 1)])]]})
            })
            .collect::<Vec<_>>());
        (FeatureSet::from_cgpts(family, &cgpts, &m.frequencies, compare)?, rec)
    };
    let result = match_features(&features, &dict)?;
    let winner = &dict.entries[result.winner].name;
    let scores: Vec<Value> = dict
        .entries
        .iter()
        .zip(&result.scores)
        .map(|(e, s)| json!({"target": e.name, "score": s}))
        .collect();
    let doc = json!({
        "config_hash": cfg.hash(true),
        "family": family.name(),
        "frequencies": features.frequencies,
        "winner": result.winner,
        "winner_name": winner,
        "scores": scores,
        "features": features.values,
        "recovered": recovered,
    });
    write_json(&out, &doc)?;
    println!("{winner}");
    Ok(())
}

fn stability_hash(cfg: &ExperimentConfig, dict_path: Option<&Path>) -> Result<String> {
    let mut h = Sha256::new();
    h.update(cfg.hash(true).as_bytes());
    if let Some(p) = dict_path {
        h.update(std::fs::read(p).map_err(|e| io_err(p, e))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs the noise grid, reusing levels already present in `out` when its
/// config hash matches. The file is rewritten after every level.
pub fn stability(cfg: &ExperimentConfig, dict_path: Option<&Path>, out: PathBuf) -> Result<()> {
    let hash = stability_hash(cfg, dict_path)?;
    let mut rows: Vec<StabilityRow> = Vec::new();
    if out.exists() {
        let (old, existing) = read_stability_csv(&out)?;
        if old.as_deref() != Some(hash.as_str()) {
            return Err(Error::InvalidInput(format!(
                "{} was written with a different configuration; choose another --out",
                out.display()
            )));
        }
        rows = existing;
    }
    let done: BTreeMap<u64, f64> = rows
        .iter()
        .filter(|r| r.target == "all")
        .map(|r| (r.noise_level.to_bits(), r.rate))
        .collect();
    if cfg.noise.iter().all(|l| done.contains_key(&l.to_bits())) {
        write_stability_csv(&out, &hash, &rows)?;
        return Ok(());
    }

    let dict = match dict_path {
        Some(p) => Dictionary::load(p)?,
        None => build_dictionary(&cfg.entries()?, &cfg.frequencies, cfg.order, cfg.scale)?,
    };
    let acq = Acquisition {
        setup: cfg.setup(),
        xi: cfg.xi,
        order: cfg.order,
        rotation: cfg.target.angle,
        frequencies: cfg.compare.clone(),
        noise: cfg.noise_mode,
    };
    let mut exp: Option<Experiment> = None;
    for &level in &cfg.noise {
        let rate = match done.get(&level.to_bits()) {
            Some(&r) => r,
            None => {
                if exp.is_none() {
                    exp = Some(Experiment::prepare(&dict, cfg.family, &acq)?);
                }
                let p = exp.as_ref().expect("prepared").run_level(level, cfg.trials, cfg.seed)?;
                rows.extend(p.rows());
                write_stability_csv(&out, &hash, &rows)?;
                info!("noise {level}: detection {:.3}", p.rate());
                p.rate()
            }
        };
        if rate <= cfg.stop_rate {
            break;
        }
    }
    write_stability_csv(&out, &hash, &rows)
}
