//! Corpus registration: fit every target, transfer landmarks onto the
//! template, then re-fit with the landmark term.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit, metrics_csv, FitConfig, FitResult, LandmarkConstraint};
use crate::landmarks::{
    anchor_weights, landmark_positions, load_landmarks, resample_landmarks, write_resampled, Fitting,
    ResampleHeader, ResampledLandmarks, DEFAULT_ANCHOR_INDEX, DEFAULT_ANCHOR_WEIGHT,
};
use crate::mesh::{load_obj, save_obj, TriMesh, Vec3};

/// One corpus line: target mesh, its landmarks, and where the fit goes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub target: PathBuf,
    pub landmarks: PathBuf,
    pub output: PathBuf,
}

impl ManifestEntry {
    fn name(&self) -> String {
        self.target.display().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Three whitespace-separated paths per line, `#` comments. Relative
    /// paths are taken relative to `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [target, landmarks, output] = fields.as_slice() else {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: n + 1,
                    message: format!("expected `<target.obj> <landmarks.txt> <output.obj>`, got `{line}`"),
                });
            };
            entries.push(ManifestEntry {
                target: base.join(target),
                landmarks: base.join(landmarks),
                output: base.join(output),
            });
        }
        if entries.is_empty() {
            return Err(Error::Config(format!("{}: manifest lists no targets", origin.display())));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }
}

/// A loaded target with its landmark positions.
#[derive(Debug, Clone)]
pub struct Target {
    pub entry: ManifestEntry,
    pub mesh: TriMesh,
    pub landmarks: Vec<Vec3>,
}

/// Loads every target and checks that landmark counts agree.
pub fn load_targets(manifest: &Manifest) -> Result<Vec<Target>> {
    let mut targets: Vec<Target> = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let mesh = load_obj(&entry.target)?;
        let entries = load_landmarks(&entry.landmarks)?;
        let landmarks = landmark_positions(&entries, Some(&mesh)).map_err(|e| e.context(&entry.name()))?;
        if let Some(first) = targets.first() {
            if first.landmarks.len() != landmarks.len() {
                return Err(Error::Config(format!(
                    "{}: {} landmarks in {}, but {} has {}",
                    entry.name(),
                    landmarks.len(),
                    entry.landmarks.display(),
                    first.entry.name(),
                    first.landmarks.len()
                )));
            }
        }
        targets.push(Target { entry: entry.clone(), mesh, landmarks });
    }
    Ok(targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterConfig {
    pub fit: FitConfig,
    pub anchor_index: usize,
    pub anchor_weight: f64,
    pub skip_landmarks: bool,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            anchor_index: DEFAULT_ANCHOR_INDEX,
            anchor_weight: DEFAULT_ANCHOR_WEIGHT,
            skip_landmarks: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub stage1: Vec<FitResult>,
    pub resampled: Option<ResampledLandmarks>,
    pub stage3: Vec<FitResult>,
}

impl Registration {
    /// The fits written as final outputs.
    pub fn finals(&self) -> &[FitResult] {
        if self.stage3.is_empty() {
            &self.stage1
        } else {
            &self.stage3
        }
    }
}

fn fit_all(template: &TriMesh, targets: &[Target], config: &FitConfig, stage: u32) -> Result<Vec<FitResult>> {
    targets
        .iter()
        .map(|t| {
            log::info!("stage {stage}: fitting {}", t.entry.name());
            fit(template, &t.mesh, config).map_err(|e| e.context(&format!("stage {stage}, {}", t.entry.name())))
        })
        .collect()
}

/// Runs the three stages in memory.
pub fn register(template: &TriMesh, targets: &[Target], config: &RegisterConfig) -> Result<Registration> {
    if targets.is_empty() {
        return Err(Error::Config("no targets to register".into()));
    }
    let mut stage1_config = config.fit.clone();
    stage1_config.landmarks = None;
    let stage1 = fit_all(template, targets, &stage1_config, 1)?;
    if config.skip_landmarks {
        return Ok(Registration { stage1, resampled: None, stage3: Vec::new() });
    }

    let count = targets[0].landmarks.len();
    let weights = anchor_weights(count, config.anchor_index, config.anchor_weight)?;
    let fittings: Vec<Fitting> = stage1
        .iter()
        .zip(targets)
        .map(|(r, t)| Fitting { fitted: r.mesh.clone(), target_landmarks: t.landmarks.clone() })
        .collect();
    let resampled = resample_landmarks(template, &fittings, &weights, config.fit.execution)
        .map_err(|e| e.context("stage 2"))?;

    let stage3 = targets
        .iter()
        .map(|t| {
            let mut c = config.fit.clone();
            c.landmarks = Some(LandmarkConstraint {
                template_indices: resampled.indices.clone(),
                target_points: t.landmarks.clone(),
            });
            log::info!("stage 3: fitting {}", t.entry.name());
            fit(template, &t.mesh, &c).map_err(|e| e.context(&format!("stage 3, {}", t.entry.name())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Registration { stage1, resampled: Some(resampled), stage3 })
}

/// `output.obj` -> `output.metrics.csv`.
pub fn metrics_path(output: &Path) -> PathBuf {
    output.with_extension("metrics.csv")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes final meshes (and their metrics) to the manifest's output paths
/// and the resampled landmarks to `landmarks_out`.
pub fn write_registration(
    targets: &[Target],
    registration: &Registration,
    config: &RegisterConfig,
    landmarks_out: &Path,
) -> Result<()> {
    for (t, r) in targets.iter().zip(registration.finals()) {
        if let Some(dir) = t.entry.output.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        save_obj(&r.mesh, &t.entry.output)?;
        write_file(&metrics_path(&t.entry.output), &metrics_csv(&r.trace))?;
    }
    if let Some(resampled) = &registration.resampled {
        let header = ResampleHeader {
            reference: targets[resampled.reference].entry.name(),
            anchor_index: config.anchor_index,
            anchor_weight: config.anchor_weight,
            fittings: targets.len(),
        };
        write_file(landmarks_out, &write_resampled(&header, resampled))?;
    }
    Ok(())
}

/// Stage 2 on its own, reading fitted meshes from the manifest's output paths.
pub fn resample_from_manifest(
    template: &TriMesh,
    manifest: &Manifest,
    anchor_index: usize,
    anchor_weight: f64,
    exec: crate::par::Execution,
) -> Result<(ResampledLandmarks, ResampleHeader)> {
    let targets = load_targets(manifest)?;
    let fittings = targets
        .iter()
        .map(|t| {
            let fitted = load_obj(&t.entry.output)?;
            if !fitted.same_connectivity(template) {
                return Err(Error::Config(format!(
                    "{}: fitted mesh {} does not share the template's connectivity",
                    t.entry.name(),
                    t.entry.output.display()
                )));
            }
            Ok(Fitting { fitted, target_landmarks: t.landmarks.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = anchor_weights(targets[0].landmarks.len(), anchor_index, anchor_weight)?;
    let resampled = resample_landmarks(template, &fittings, &weights, exec)?;
    let header = ResampleHeader {
        reference: targets[resampled.reference].entry.name(),
        anchor_index,
        anchor_weight,
        fittings: targets.len(),
    };
    Ok((resampled, header))
}
