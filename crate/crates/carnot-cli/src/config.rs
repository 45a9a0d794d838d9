//! Experiment configuration files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use carnot::besov::{BesovParams, ScaleGrid, TestFamily};
use carnot::group::{make_group, GroupDescriptor, GroupSpec};
use carnot::spectral::{assemble_sublaplacian, Backend, BasisChange, SubLaplacian};
use carnot::wavelets::{make_phi_hat, make_psi_hat, BumpSpec};
use carnot::{GridSpec, MultiplierProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Points per axis: one count for every axis or an explicit list.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Points {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub points: Points,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            half_width: 16.0,
            points: Points::Uniform(257),
        }
    }
}

/// Built-in test family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub count: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    pub envelope: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            count: 8,
            band_lo: 0.25,
            band_hi: 4.0,
            envelope: 0.25,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub partition_of_unity: f64,
    pub moments: f64,
    /// Homogeneous degrees `0..moment_degrees` must have vanishing moments.
    pub moment_degrees: u32,
    pub orthogonality: f64,
    pub reproducing: f64,
    pub calderon: f64,
    pub reconstruction: f64,
    pub neumann: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            partition_of_unity: 1e-10,
            moments: 1e-5,
            moment_degrees: 3,
            orthogonality: 1e-6,
            reproducing: 1e-3,
            calderon: 1e-3,
            reconstruction: 5e-2,
            neumann: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    pub k: u32,
    pub t_grid: ScaleGrid,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            k: 2,
            t_grid: ScaleGrid::Log {
                eps: 0.0625,
                a_max: 16.0,
                n: 33,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BesovConfig {
    pub params: Vec<BesovParams>,
    /// Scale window of the dyadic norm; the wavelet range when absent.
    pub window: Option<(i32, i32)>,
    pub cwt_scales: ScaleGrid,
    pub heat: Option<HeatConfig>,
}

impl Default for BesovConfig {
    fn default() -> Self {
        BesovConfig {
            params: vec![
                BesovParams {
                    p: 2.0,
                    q: 2.0,
                    s: 0.0,
                },
                BesovParams {
                    p: 2.0,
                    q: 2.0,
                    s: 1.0,
                },
                BesovParams {
                    p: 1.0,
                    q: 1.0,
                    s: 0.5,
                },
            ],
            window: None,
            cwt_scales: ScaleGrid::Log {
                eps: 0.0625,
                a_max: 16.0,
                n: 33,
            },
            heat: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    /// Reference density.
    pub alpha: f64,
    /// Density sweep; `{0.8, 0.4, 0.2}·alpha` when empty.
    pub sweep: Vec<f64>,
    /// Frame scales; the wavelet range when absent.
    pub j_range: Option<(i32, i32)>,
    /// Add the out-of-window scales in continuous form.
    pub complement: bool,
    pub max_iter: usize,
    /// Residual images per probe used when measuring the deviation.
    pub krylov_steps: usize,
    pub params: BesovParams,
    /// Number of coefficient tables written.
    pub coefficient_files: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            alpha: 0.1,
            sweep: Vec::new(),
            j_range: None,
            complement: true,
            max_iter: 60,
            krylov_steps: 2,
            params: BesovParams {
                p: 2.0,
                q: 2.0,
                s: 0.0,
            },
            coefficient_files: 1,
        }
    }
}

impl FrameConfig {
    pub fn sweep(&self) -> Vec<f64> {
        if self.sweep.is_empty() {
            [0.8, 0.4, 0.2].iter().map(|f| f * self.alpha).collect()
        } else {
            self.sweep.clone()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquivConfig {
    /// Second bump of the wavelet pair.
    pub bump_pair: Option<BumpSpec>,
    /// Basis of the second sub-Laplacian.
    pub basis_pair: Option<BasisChange>,
    /// `L^k` shift and powers for commensurability.
    pub k: u32,
    pub params: BesovParams,
    /// Windows `[-J, J]` of the truncation study.
    pub windows: Vec<i32>,
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig {
            bump_pair: Some(BumpSpec::new(0.125, 1.0)),
            basis_pair: None,
            k: 1,
            params: BesovParams {
                p: 2.0,
                q: 2.0,
                s: 0.0,
            },
            windows: vec![2, 3, 4],
        }
    }
}

/// One experiment. Every field has a default so a config may be as short
/// as `{}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub group: GroupDescriptor,
    pub grid: GridConfig,
    pub basis: Option<BasisChange>,
    pub bump: BumpSpec,
    pub j_range: (i32, i32),
    pub backend: Backend,
    pub dense_threshold: Option<usize>,
    pub seed: u64,
    pub family: FamilyConfig,
    /// `.gfn` inputs used instead of the built-in family.
    pub inputs: Vec<PathBuf>,
    pub calderon_j: i32,
    pub tolerances: Tolerances,
    pub skip_moments: bool,
    pub besov: BesovConfig,
    pub frame: FrameConfig,
    pub equiv: EquivConfig,
    /// Random pairs for the quasi-triangle constant.
    pub quasi_triangle_samples: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            group: GroupDescriptor::Preset("euclidean(1)".into()),
            grid: GridConfig::default(),
            basis: None,
            bump: BumpSpec::default(),
            j_range: (-2, 2),
            backend: Backend::Auto,
            dense_threshold: None,
            seed: 0,
            family: FamilyConfig::default(),
            inputs: Vec::new(),
            calderon_j: 4,
            tolerances: Tolerances::default(),
            skip_moments: false,
            besov: BesovConfig::default(),
            frame: FrameConfig::default(),
            equiv: EquivConfig::default(),
            quasi_triangle_samples: 2000,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for input in &mut cfg.inputs {
            if input.is_relative() {
                *input = base.join(&*input);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.j_range.0 > self.j_range.1 {
            return Err(CliError::Config(format!(
                "empty j_range {:?}",
                self.j_range
            )));
        }
        if self.calderon_j < 1 {
            return Err(CliError::Config("calderon_j must be at least 1".into()));
        }
        for input in &self.inputs {
            if !input.exists() {
                return Err(CliError::Config(format!(
                    "input file {} does not exist",
                    input.display()
                )));
            }
        }
        self.bump.validate()?;
        for p in &self.besov.params {
            p.validate()?;
        }
        if !(self.frame.alpha > 0.0) {
            return Err(CliError::Config(format!(
                "frame alpha must be positive, got {}",
                self.frame.alpha
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn group_spec(&self) -> Result<GroupSpec, CliError> {
        Ok(make_group(&self.group)?)
    }

    pub fn grid_spec(&self) -> Result<Arc<GridSpec>, CliError> {
        let group = self.group_spec()?;
        let points = match &self.grid.points {
            Points::Uniform(n) => vec![*n; group.dim()],
            Points::PerAxis(v) => v.clone(),
        };
        Ok(Arc::new(GridSpec::new(
            group,
            self.grid.half_width,
            points,
        )?))
    }

    pub fn laplacian_with(
        &self,
        basis: Option<BasisChange>,
    ) -> Result<Arc<SubLaplacian>, CliError> {
        let mut lm = assemble_sublaplacian(self.grid_spec()?, basis)?;
        if let Some(t) = self.dense_threshold {
            lm.set_dense_threshold(t);
        }
        Ok(Arc::new(lm))
    }

    pub fn laplacian(&self) -> Result<Arc<SubLaplacian>, CliError> {
        self.laplacian_with(self.basis.clone())
    }

    pub fn phi_hat(&self) -> Result<MultiplierProfile, CliError> {
        Ok(make_phi_hat(&self.bump)?)
    }

    pub fn psi_hat(&self) -> Result<MultiplierProfile, CliError> {
        Ok(make_psi_hat(&self.phi_hat()?)?)
    }

    pub fn test_family(&self, count: usize) -> TestFamily {
        TestFamily {
            count,
            seed: self.seed,
            band_lo: self.family.band_lo,
            band_hi: self.family.band_hi,
            envelope: self.family.envelope,
        }
    }
}
