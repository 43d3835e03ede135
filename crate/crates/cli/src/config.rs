//! Experiment configuration: one JSON document with a section per
//! subcommand. Every section has defaults so a config only needs to spell
//! out what it changes.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use infield::bench1d::{make_curve, BenchConfig, CurvePreset};
use infield::embedding::{EmbeddingSpec, IntrinsicSpec, PosencSpec, RffSpec};
use infield::field::{InitScheme, MlpConfig, TrainConfig};
use infield::mesh::{load_obj, load_polyline_txt, shapes, TriMesh};
use infield::ntk::NtkConfig;
use infield::render::{bipyramid_rig, orbit_rig, Camera, SynthTexture};
use infield::spectrum::EigenBasis;
use infield::transfer::Projection;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub mesh: MeshSource,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub eigens: EigensSection,
    /// Defaults to all `eigens.d` eigenfunctions with unit scales.
    #[serde(default)]
    pub embedding: Option<EmbeddingChoice>,
    #[serde(default)]
    pub mlp: MlpSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub ntk: NtkSection,
    #[serde(default)]
    pub transfer: Option<TransferSection>,
    #[serde(default)]
    pub bench1d: BenchConfig,
}

/// One seed per stochastic stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub basis: u64,
    pub init: u64,
    pub shuffle: u64,
    pub embedding: u64,
}

impl Seeds {
    fn set_all(&mut self, s: u64) {
        *self = Seeds {
            basis: s,
            init: s,
            shuffle: s,
            embedding: s,
        };
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    /// `.obj` surface or `.txt` closed polyline.
    File { path: PathBuf },
    Icosphere {
        subdivisions: u32,
        #[serde(default = "one")]
        radius: f64,
    },
    IrregularSphere {
        rings: usize,
        segments: usize,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        seed: u64,
    },
    Torus { major: f64, minor: f64, nu: usize, nv: usize },
    Dumbbell { rings: usize, segments: usize },
    /// Closed loop: a regular polygon of the given circumference, or a
    /// benchmark curve preset.
    Loop {
        n: usize,
        #[serde(default)]
        preset: Option<CurvePreset>,
        #[serde(default = "tau")]
        circumference: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn tau() -> f64 {
    std::f64::consts::TAU
}

impl MeshSource {
    pub fn file(&self) -> Option<&Path> {
        match self {
            MeshSource::File { path } => Some(path),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<TriMesh> {
        Ok(match self {
            MeshSource::File { path } => match path.extension().and_then(|e| e.to_str()) {
                Some("obj") => load_obj(path)?,
                Some("txt") => load_polyline_txt(path)?,
                _ => bail!("mesh file {} must end in .obj or .txt", path.display()),
            },
            MeshSource::Icosphere { subdivisions, radius } => {
                ensure!(*subdivisions <= 7, "icosphere subdivisions above 7 are not supported");
                shapes::icosphere(*subdivisions, *radius)
            }
            MeshSource::IrregularSphere {
                rings,
                segments,
                radius,
                seed,
            } => {
                ensure!(*rings >= 3 && *segments >= 3, "irregular sphere needs at least 3 rings and segments");
                shapes::irregular_sphere(*rings, *segments, *radius, *seed)
            }
            MeshSource::Torus { major, minor, nu, nv } => {
                ensure!(*nu >= 3 && *nv >= 3 && major > minor && *minor > 0.0, "invalid torus parameters");
                shapes::torus(*major, *minor, *nu, *nv)
            }
            MeshSource::Dumbbell { rings, segments } => {
                ensure!(*rings >= 3 && *segments >= 3, "dumbbell needs at least 3 rings and segments");
                shapes::dumbbell(*rings, *segments)
            }
            MeshSource::Loop { n, preset, circumference } => match preset {
                Some(p) => make_curve(*p, *n)?.mesh,
                None => {
                    ensure!(*n >= 3 && *circumference > 0.0, "loop needs n >= 3 and a positive circumference");
                    shapes::circle(*n, *circumference)
                }
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigensSection {
    /// Number of eigenpairs to compute.
    pub d: usize,
}

impl Default for EigensSection {
    fn default() -> Self {
        EigensSection { d: 64 }
    }
}

/// Surface embedding as written in a config; resolved to an
/// [`EmbeddingSpec`] once the basis (and seed) are known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingChoice {
    Intrinsic {
        d: usize,
        /// Explicit `a_i`; defaults to ones.
        #[serde(default)]
        coefficients: Option<Vec<f64>>,
        /// Zero out a trailing eigenvalue group that `d` cuts in half.
        #[serde(default)]
        respect_degeneracy: bool,
    },
    Rff { d: usize, sigma: f64 },
    Extrinsic,
}

impl EmbeddingChoice {
    pub fn needs_basis(&self) -> bool {
        matches!(self, EmbeddingChoice::Intrinsic { .. })
    }

    pub fn resolve(&self, basis: Option<&EigenBasis>, seed: u64) -> Result<EmbeddingSpec> {
        Ok(match self {
            EmbeddingChoice::Intrinsic {
                d,
                coefficients,
                respect_degeneracy,
            } => {
                let spec = match (coefficients, respect_degeneracy) {
                    (Some(c), _) => {
                        ensure!(c.len() == *d, "intrinsic embedding: {} coefficients for d = {d}", c.len());
                        IntrinsicSpec::new(c.clone())?
                    }
                    (None, true) => {
                        let b = basis.context("degeneracy-respecting coefficients need the eigenbasis")?;
                        IntrinsicSpec::respecting_degeneracy(b, *d)?
                    }
                    (None, false) => IntrinsicSpec::ones(*d),
                };
                EmbeddingSpec::Intrinsic(spec)
            }
            EmbeddingChoice::Rff { d, sigma } => EmbeddingSpec::Rff(RffSpec::new(*d, *sigma, seed, 3)?),
            EmbeddingChoice::Extrinsic => EmbeddingSpec::Extrinsic,
        })
    }

    pub fn label(&self) -> String {
        match self {
            EmbeddingChoice::Intrinsic { d, .. } => format!("intrinsic-d{d}"),
            EmbeddingChoice::Rff { d, sigma } => format!("rff-d{d}-sigma{sigma}"),
            EmbeddingChoice::Extrinsic => "extrinsic".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden_width: usize,
    pub num_hidden_layers: usize,
    pub skip_at: Option<usize>,
    pub head_width: Option<usize>,
    /// Enables the view-dependent head with this direction encoding.
    pub view_encoding: Option<PosencSpec>,
    pub init: InitScheme,
}

impl Default for MlpSection {
    fn default() -> Self {
        let t = MlpConfig::texture(1, 0);
        MlpSection {
            hidden_width: t.hidden_width,
            num_hidden_layers: t.num_hidden_layers,
            skip_at: t.skip_at,
            head_width: None,
            view_encoding: None,
            init: InitScheme::He,
        }
    }
}

impl MlpSection {
    pub fn config(&self, input_dim: usize, seed: u64) -> Result<MlpConfig> {
        let c = MlpConfig {
            input_dim,
            hidden_width: self.hidden_width,
            num_hidden_layers: self.num_hidden_layers,
            skip_at: self.skip_at,
            view_dim: self.view_encoding.as_ref().map(|v| v.output_dim()),
            head_width: self.head_width,
            output_dim: 3,
            output_sigmoid: true,
            init_seed: seed,
            init: self.init,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rig", rename_all = "snake_case", deny_unknown_fields)]
pub enum RigSpec {
    /// Above, below and three around the equator.
    Bipyramid { distance: f64, size: usize, fov_deg: f64 },
    Orbit {
        count: usize,
        elevation_deg: f64,
        #[serde(default)]
        azimuth_deg: f64,
        distance: f64,
        size: usize,
        fov_deg: f64,
    },
    /// JSON array of cameras.
    File { path: PathBuf },
}

impl RigSpec {
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let cams = match self {
            RigSpec::Bipyramid { distance, size, fov_deg } => bipyramid_rig(*distance, *size, fov_deg.to_radians())?,
            RigSpec::Orbit {
                count,
                elevation_deg,
                azimuth_deg,
                distance,
                size,
                fov_deg,
            } => orbit_rig(
                *count,
                elevation_deg.to_radians(),
                azimuth_deg.to_radians(),
                *distance,
                *size,
                fov_deg.to_radians(),
            )?,
            RigSpec::File { path } => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading cameras {}", path.display()))?;
                let cams: Vec<Camera> = serde_json::from_str(&text).with_context(|| format!("parsing cameras {}", path.display()))?;
                for c in &cams {
                    c.validate()?;
                }
                cams
            }
        };
        ensure!(!cams.is_empty(), "camera rig is empty");
        Ok(cams)
    }

    pub fn file(&self) -> Option<&Path> {
        match self {
            RigSpec::File { path } => Some(path),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub texture: SynthTexture,
    pub train: RigSpec,
    pub test: RigSpec,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            texture: SynthTexture::checker(1.2),
            train: RigSpec::Bipyramid {
                distance: 3.0,
                size: 128,
                fov_deg: 40.0,
            },
            test: RigSpec::Orbit {
                count: 4,
                elevation_deg: 25.0,
                azimuth_deg: 23.0,
                distance: 3.0,
                size: 128,
                fov_deg: 40.0,
            },
        }
    }
}

impl DatasetSection {
    pub fn split(&self, name: &str) -> Result<&RigSpec> {
        match name {
            "train" => Ok(&self.train),
            "test" => Ok(&self.test),
            _ => bail!("unknown split '{name}' (expected train or test)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psnr,
    Dssim,
    Mse,
    Mae,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Dssim => "dssim",
            Metric::Mse => "mse",
            Metric::Mae => "mae",
        }
    }
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Psnr, Metric::Dssim]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NtkSection {
    pub kernel: NtkConfig,
    /// Embeddings to compare; defaults to the experiment embedding.
    pub embeddings: Vec<EmbeddingChoice>,
    /// Refuse meshes above this size (the kernel is dense).
    pub max_vertices: usize,
}

impl Default for NtkSection {
    fn default() -> Self {
        NtkSection {
            kernel: NtkConfig::default(),
            embeddings: Vec::new(),
            max_vertices: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrespondenceSource {
    /// Vertex `i` of the target matches vertex `i` of the source.
    Identity,
    /// Central projection of target vertices onto the source.
    Radial {
        #[serde(default)]
        center: [f64; 3],
    },
    /// An INFP2P file; `--p2p` overrides it.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub target: MeshSource,
    pub correspondence: CorrespondenceSource,
    #[serde(default)]
    pub projection: Projection,
    /// Cameras for the transferred renders; defaults to the test rig.
    #[serde(default)]
    pub cameras: Option<RigSpec>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths inside the config are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let MeshSource::File { path } = &mut self.mesh {
            fix(path);
        }
        for rig in [&mut self.dataset.train, &mut self.dataset.test] {
            if let RigSpec::File { path } = rig {
                fix(path);
            }
        }
        if let Some(t) = &mut self.transfer {
            if let MeshSource::File { path } = &mut t.target {
                fix(path);
            }
            if let CorrespondenceSource::File { path } = &mut t.correspondence {
                fix(path);
            }
            if let Some(RigSpec::File { path }) = &mut t.cameras {
                fix(path);
            }
        }
    }

    /// `--seed` replaces every stage seed, including the ones nested in
    /// section configs.
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds.set_all(seed);
        self.bench1d.init_seed = seed;
        self.bench1d.basis_seed = seed;
    }

    pub fn embedding(&self) -> EmbeddingChoice {
        self.embedding.clone().unwrap_or(EmbeddingChoice::Intrinsic {
            d: self.eigens.d,
            coefficients: None,
            respect_degeneracy: false,
        })
    }

    /// Training config with the stage seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            shuffle_seed: self.seeds.shuffle,
            ..self.train.clone()
        }
    }

    /// Static checks that need no heavy computation.
    pub fn validate(&self) -> Result<()> {
        let mut files: Vec<&Path> = Vec::new();
        files.extend(self.mesh.file());
        files.extend(self.dataset.train.file());
        files.extend(self.dataset.test.file());
        if let Some(t) = &self.transfer {
            files.extend(t.target.file());
            if let CorrespondenceSource::File { path } = &t.correspondence {
                files.push(path);
            }
            files.extend(t.cameras.as_ref().and_then(|c| c.file()));
        }
        for f in files {
            ensure!(f.is_file(), "referenced file {} does not exist", f.display());
        }
        ensure!(self.eigens.d >= 1, "eigens.d must be at least 1");
        if let EmbeddingChoice::Intrinsic { d, .. } = self.embedding() {
            ensure!(d <= self.eigens.d, "embedding uses {d} eigenfunctions but eigens.d = {}", self.eigens.d);
        }
        self.train.validate()?;
        ensure!(!self.metrics.is_empty(), "metric list is empty");
        Ok(())
    }
}
