//! Experiment configuration read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffuse::{HaptoParams, ProfileSpec};
use crate::error::{Error, Result};
use crate::grid::{Domain, Grid};
use crate::shape::{FieldSpec, Shape};
use crate::sharp::SharpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Diffuse,
    Sharp,
    Compare,
    Generation,
    Convergence,
    Profile,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Diffuse => "diffuse",
            ExperimentKind::Sharp => "sharp",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Generation => "generation",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Profile => "profile",
        }
    }
}

/// Snapshot times: `count` equal steps over `(0, T]` plus any listed times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Snapshots {
    pub count: usize,
    pub times: Vec<f64>,
    /// Write field CSVs at every snapshot.
    pub write_fields: bool,
}

impl Default for Snapshots {
    fn default() -> Self {
        Self {
            count: 10,
            times: Vec::new(),
            write_fields: true,
        }
    }
}

impl Snapshots {
    /// Sorted times in `(0, t_final]`.
    pub fn schedule(&self, t_final: f64) -> Vec<f64> {
        let mut out: Vec<f64> = (1..=self.count)
            .map(|k| t_final * k as f64 / self.count as f64)
            .chain(self.times.iter().copied().filter(|&t| t > 0.0 && t <= t_final))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Settings of the generation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSpec {
    pub eta: f64,
    /// Frozen `M0`; fitted on the first (largest) `eps` when absent.
    #[serde(rename = "M0", skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    /// Grid of candidate `M0` values used by the fit.
    pub m0_step: f64,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        Self {
            eta: 0.1,
            m0: None,
            m0_step: 0.05,
        }
    }
}

/// Envelope checks on a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub eps0: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// Fixed slack on the bracket, added to `q(t)`.
    #[serde(default = "default_bracket_slack")]
    pub bracket_slack: f64,
    /// Half-width of the band `|d| < band` where operator signs are checked.
    pub residual_band: f64,
}

fn default_bracket_slack() -> f64 {
    1e-6
}

/// Standing-profile solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSolve {
    pub half_width: f64,
    pub intervals: usize,
}

impl Default for ProfileSolve {
    fn default() -> Self {
        Self {
            half_width: 20.0,
            intervals: 8000,
        }
    }
}

fn default_shape() -> Shape {
    Shape::Circle {
        center: [0.5, 0.5],
        radius: 0.25,
    }
}

fn default_v0() -> FieldSpec {
    FieldSpec::constant(1.0)
}

fn default_m0() -> FieldSpec {
    FieldSpec::constant(0.0)
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub domain: Domain,
    /// Cells across the domain width; the coarsest grid with `h <= eps/4`
    /// when absent. Ignored by runs over an `eps` list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    /// `params.eps` is the single `eps`; runs over `eps_list` replace it.
    pub params: HaptoParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default = "default_shape")]
    pub shape: Shape,
    #[serde(default)]
    pub profile: ProfileSpec,
    #[serde(default = "default_v0")]
    pub v0: FieldSpec,
    #[serde(default = "default_m0")]
    pub m0: FieldSpec,
    /// Final time; the generation experiment stops at `t*` instead.
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub snapshots: Snapshots,
    #[serde(default)]
    pub sharp: SharpConfig,
    /// Cells across the width for the sharp run of a convergence study; the
    /// finest diffuse grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharp_cells: Option<usize>,
    #[serde(default)]
    pub generation: GenerationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeSpec>,
    #[serde(default)]
    pub profile_solve: ProfileSolve,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// Parses JSON text, naming the offending key on failure.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = if path.is_empty() || path == "." {
            String::new()
        } else {
            format!("at `{path}`: ")
        };
        Error::Parse {
            path: origin.to_path_buf(),
            detail: format!("{at}{inner}"),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, path)
}

impl RunConfig {
    /// Canonical JSON with every default filled in.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn require_t_final(&self) -> Result<f64> {
        match self.t_final {
            Some(t) if t > 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(Error::Config(format!("T must be positive, got {t}"))),
            None => Err(Error::Config(format!("experiment `{}` needs a final time T", self.kind.name()))),
        }
    }

    /// Final time of a run with a fixed horizon.
    pub fn horizon(&self) -> Result<f64> {
        self.require_t_final()
    }

    /// The `eps` values of the run: `eps_list` when given, else `params.eps`.
    pub fn eps_values(&self) -> Vec<f64> {
        self.eps_list.clone().unwrap_or_else(|| vec![self.params.eps])
    }

    /// Grid of a single-`eps` run, checked against `h <= eps/4`.
    pub fn grid_for(&self, eps: f64) -> Result<Grid> {
        let grid = match self.cells {
            Some(n) => self.domain.grid(n)?,
            None => self.domain.resolving(eps / 4.0)?,
        };
        let limit = eps / 4.0;
        if grid.h > limit * (1.0 + 1e-9) {
            return Err(Error::UnderResolved {
                h: grid.h,
                eps,
                limit,
            });
        }
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.shape.validate()?;
        let d = &self.domain;
        if !(d.width > 0.0 && d.height > 0.0 && d.origin.iter().all(|c| c.is_finite())) {
            return Err(Error::Config(format!("domain sides must be positive, got {} x {}", d.width, d.height)));
        }
        if let Some(n) = self.cells {
            d.grid(n)?;
        }
        if let Some(list) = &self.eps_list {
            crate::analysis::convergence::study_grids(&self.domain, list)?;
        }
        let uses_list = matches!(self.kind, ExperimentKind::Generation | ExperimentKind::Convergence);
        if self.kind == ExperimentKind::Convergence && self.eps_list.as_ref().map_or(true, |l| l.len() < 2) {
            return Err(Error::Config("convergence needs an eps_list with two or more entries".into()));
        }
        match self.kind {
            ExperimentKind::Profile => {
                let p = &self.profile_solve;
                if !(p.half_width >= 10.0 && p.intervals >= 100 && p.intervals % 2 == 0) {
                    return Err(Error::Config(format!(
                        "profile_solve needs half_width >= 10 and an even interval count >= 100 (got {}, {})",
                        p.half_width, p.intervals
                    )));
                }
            }
            ExperimentKind::Generation => {
                let g = &self.generation;
                if !(g.eta > 0.0 && g.eta < 0.25) {
                    return Err(Error::Config(format!("generation.eta must lie in (0, 1/4), got {}", g.eta)));
                }
                if !(g.m0_step > 0.0) || g.m0.is_some_and(|m| !(m >= 0.0)) {
                    return Err(Error::Config("generation.M0 must be nonnegative and M0_step positive".into()));
                }
            }
            _ => {
                self.require_t_final()?;
            }
        }
        if matches!(self.kind, ExperimentKind::Diffuse | ExperimentKind::Compare) || uses_list {
            for eps in self.eps_values() {
                if uses_list {
                    self.domain.resolving(eps / 4.0)?;
                } else {
                    self.grid_for(eps)?;
                }
            }
        }
        if matches!(self.kind, ExperimentKind::Sharp | ExperimentKind::Compare | ExperimentKind::Convergence) {
            let grid = match (self.kind, self.sharp_cells) {
                (ExperimentKind::Convergence, Some(n)) => self.domain.grid(n)?,
                (ExperimentKind::Convergence, None) => {
                    let eps = self.eps_values().into_iter().fold(f64::INFINITY, f64::min);
                    self.domain.resolving(eps / 4.0)?
                }
                _ => match self.cells {
                    Some(n) => self.domain.grid(n)?,
                    None => self.domain.resolving(self.params.eps / 4.0)?,
                },
            };
            self.sharp.validate(&grid)?;
        }
        if let Some(e) = &self.envelope {
            if self.kind != ExperimentKind::Compare {
                return Err(Error::Config("envelope checks belong to compare runs".into()));
            }
            if !(e.residual_band > 0.0 && e.bracket_slack >= 0.0) {
                return Err(Error::Config("envelope.residual_band must be positive and bracket_slack nonnegative".into()));
            }
        }
        Ok(())
    }
}
