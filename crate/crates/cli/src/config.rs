//! Run/sweep configuration file.
//!
//! Every key is optional; omitted keys take the three-community protocol
//! defaults. Unknown keys are rejected so typos fail loudly.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use identity_core::experiments::{Axis, SweepSpec};
use identity_core::graphgen::Adjacency;
use identity_core::{AdjacencySpec, BlockLayout, NoiseMode, NoiseSpec, Param, PotentialKind, PotentialSpec, Scenario};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TAU: f64 = 0.63;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_HORIZON: u64 = 30_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub layout: LayoutSection,
    #[serde(default)]
    pub adjacency: AdjacencySection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    pub n_s: usize,
    pub n_p: usize,
}

impl Default for LayoutSection {
    fn default() -> Self {
        LayoutSection { n_s: 3, n_p: 4 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyKind {
    #[default]
    Deterministic,
    Random,
    Averaged,
    File,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjacencySection {
    #[serde(default)]
    pub kind: AdjacencyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default = "tent")]
    pub kind: PotentialKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

fn tent() -> PotentialKind {
    PotentialKind::Tent
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection {
            kind: PotentialKind::Tent,
            tau: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "noise_off")]
    pub mode: NoiseMode,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub s_s: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn noise_off() -> NoiseMode {
    NoiseMode::Off
}

fn default_delta() -> f64 {
    identity_core::noise::DEFAULT_DELTA
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            mode: NoiseMode::Off,
            s: 0.0,
            s_s: 0.0,
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// One starting opinion per group.
    #[serde(default = "default_initials")]
    pub initial_opinions: Vec<f64>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_initials() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            alpha: DEFAULT_ALPHA,
            initial_opinions: default_initials(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Horizon in pairwise interactions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    /// Horizon in macro steps of N interactions; exclusive with `horizon`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_steps: Option<u64>,
    /// Defaults to one macro step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
    #[serde(default = "default_gap")]
    pub gap: f64,
}

fn default_gap() -> f64 {
    identity_core::analysis::DEFAULT_GAP
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            horizon: None,
            horizon_steps: None,
            record_every: None,
            gap: default_gap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub replicates: usize,
    #[serde(default)]
    pub axis: Vec<AxisSection>,
}

/// Either an explicit `values` list or an inclusive `start`/`stop`/`step` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    pub param: Param,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl AxisSection {
    fn values(&self, key: &str) -> Result<Vec<f64>> {
        let values = match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(start), Some(stop), Some(step)) => {
                if step.is_nan() || step <= 0.0 || stop < start {
                    bail!("{key}: need step > 0 and stop >= start");
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| start + k as f64 * step).collect()
            }
            _ => bail!("{key}: give either `values` or all of `start`, `stop`, `step`"),
        };
        if values.is_empty() {
            bail!("{key}: axis has no values");
        }
        Ok(values)
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        // Relative matrix paths are taken relative to the config file.
        if let Some(p) = cfg.adjacency.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("cannot serialize resolved config")
    }

    fn layout(&self) -> Result<BlockLayout> {
        BlockLayout::new(self.layout.n_s, self.layout.n_p).context("[layout] section")
    }

    /// Fills every defaulted value in place so the echo is fully explicit.
    /// Applies `horizon` and `record_every` overrides first.
    pub fn resolve(&mut self, horizon: Option<u64>, record_every: Option<u64>) -> Result<()> {
        let layout = self.layout()?;
        let n = layout.population() as u64;
        if let Some(h) = horizon {
            self.run.horizon = Some(h);
            self.run.horizon_steps = None;
        }
        self.run.horizon = Some(match (self.run.horizon, self.run.horizon_steps) {
            (Some(_), Some(_)) => bail!("run.horizon and run.horizon_steps are mutually exclusive"),
            (Some(h), None) => h,
            (None, Some(steps)) => steps.checked_mul(n).context("run.horizon_steps: horizon overflows")?,
            (None, None) => DEFAULT_HORIZON,
        });
        self.run.horizon_steps = None;
        if let Some(r) = record_every {
            self.run.record_every = Some(r);
        }
        self.run.record_every.get_or_insert(n);

        let adj = &mut self.adjacency;
        let stray = |name: &str, present: bool| -> Result<()> {
            if present {
                bail!("adjacency.{name} is not used by kind `{:?}`", adj.kind);
            }
            Ok(())
        };
        match adj.kind {
            AdjacencyKind::Deterministic => {
                stray("u_b", adj.u_b.is_some())?;
                stray("count", adj.count.is_some())?;
                stray("path", adj.path.is_some())?;
                adj.i_p.get_or_insert(0.0);
            }
            AdjacencyKind::Random | AdjacencyKind::Averaged => {
                stray("i_p", adj.i_p.is_some())?;
                stray("path", adj.path.is_some())?;
                if adj.u_b.is_none() {
                    bail!("adjacency.u_b is required for kind `{:?}`", adj.kind);
                }
                if adj.kind == AdjacencyKind::Random {
                    stray("count", adj.count.is_some())?;
                } else if adj.count.is_none() {
                    bail!("adjacency.count is required for kind `Averaged`");
                }
            }
            AdjacencyKind::File => {
                stray("i_p", adj.i_p.is_some())?;
                stray("u_b", adj.u_b.is_some())?;
                stray("count", adj.count.is_some())?;
                let Some(p) = adj.path.as_mut() else {
                    bail!("adjacency.path is required for kind `File`");
                };
                *p = fs::canonicalize(&*p).with_context(|| format!("adjacency.path: cannot open {}", p.display()))?;
            }
        }

        if self.potential.tau.is_none() {
            match self.potential.kind {
                PotentialKind::Tent => self.potential.tau = Some(DEFAULT_TAU),
                PotentialKind::BoundedConfidence => {
                    bail!("potential.tau is required for the bounded_confidence potential")
                }
            }
        }
        Ok(())
    }

    /// Builds the simulation template. Call [`ConfigFile::resolve`] first.
    pub fn scenario(&self) -> Result<Scenario> {
        let layout = self.layout()?;
        let a = &self.adjacency;
        let adjacency = match a.kind {
            AdjacencyKind::Deterministic => AdjacencySpec::Deterministic {
                i_p: a.i_p.unwrap_or(0.0),
            },
            AdjacencyKind::Random => AdjacencySpec::Random {
                u_b: a.u_b.context("adjacency.u_b missing")?,
            },
            AdjacencyKind::Averaged => AdjacencySpec::Averaged {
                u_b: a.u_b.context("adjacency.u_b missing")?,
                count: a.count.context("adjacency.count missing")?,
            },
            AdjacencyKind::File => {
                let path = a.path.as_ref().context("adjacency.path missing")?;
                let file =
                    fs::File::open(path).with_context(|| format!("adjacency.path: cannot open {}", path.display()))?;
                let adj = Adjacency::read_csv(std::io::BufReader::new(file), layout)
                    .with_context(|| format!("adjacency.path: {}", path.display()))?;
                AdjacencySpec::Fixed(Arc::new(adj))
            }
        };
        let tau = self.potential.tau.context("potential.tau missing")?;
        let potential = PotentialSpec::new(self.potential.kind, tau).context("potential.tau")?;
        let n = &self.noise;
        let noise = NoiseSpec {
            mode: n.mode,
            s: n.s,
            s_s: n.s_s,
            delta: n.delta,
        };
        noise.validate().context("noise")?;
        if !(self.dynamics.alpha > 0.0 && self.dynamics.alpha.is_finite()) {
            bail!("dynamics.alpha must be positive, got {}", self.dynamics.alpha);
        }
        if self.dynamics.initial_opinions.len() != layout.n_s() {
            bail!(
                "dynamics.initial_opinions has {} entries but layout.n_s is {}",
                self.dynamics.initial_opinions.len(),
                layout.n_s()
            );
        }
        if self.run.gap.is_nan() || self.run.gap <= 0.0 {
            bail!("run.gap must be positive, got {}", self.run.gap);
        }
        let scenario = Scenario {
            layout,
            adjacency,
            potential,
            alpha: self.dynamics.alpha,
            noise,
            initial_opinions: self.dynamics.initial_opinions.clone(),
            horizon: self.run.horizon.unwrap_or(DEFAULT_HORIZON),
            record_every: self.run.record_every.unwrap_or(layout.population() as u64),
            gap: self.run.gap,
        };
        // Surface parameter errors now, with the config as context.
        scenario.instantiate(0).context("config")?;
        Ok(scenario)
    }

    pub fn sweep_spec(&self, base_seed: u64) -> Result<SweepSpec> {
        let section = self.sweep.as_ref().context("config has no [sweep] section")?;
        if section.replicates == 0 {
            bail!("sweep.replicates must be at least 1");
        }
        let axes = section
            .axis
            .iter()
            .enumerate()
            .map(|(k, a)| {
                Ok(Axis {
                    param: a.param,
                    values: a.values(&format!("sweep.axis[{k}]"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut axes = axes.into_iter();
        let (Some(axis1), axis2, None) = (axes.next(), axes.next(), axes.next()) else {
            bail!("sweep.axis needs one or two entries, got {}", section.axis.len());
        };
        Ok(SweepSpec {
            base: self.scenario()?,
            axis1,
            axis2,
            replicates: section.replicates,
            base_seed,
        })
    }
}
