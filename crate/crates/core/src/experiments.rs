//! Monte Carlo harness: replicate batches, parameter sweeps and the
//! minimum-collapse search over the inter-group probability.
//!
//! Every replicate gets its own seed derived from `(base_seed, index)`,
//! and every grid point reuses the same replicate seeds, so results do
//! not depend on evaluation order or on the number of worker threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{RunSummary, SummaryBuilder, DEFAULT_GAP};
use crate::engine::{SimConfig, Simulation};
use crate::error::{Result, SimError};
use crate::graphgen::{self, Adjacency, BlockLayout};
use crate::noise::NoiseSpec;
use crate::potentials::PotentialSpec;
use crate::rng::{derive_seed, rng_from_seed};

/// Stream index reserved for adjacency generation inside a replicate.
const ADJACENCY_STREAM: u64 = 0xA0A0_A0A0;

/// Seed used for the interaction matrix of a run seeded with `run_seed`.
pub fn adjacency_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, ADJACENCY_STREAM)
}

/// Fraction of collapsed replicates at which a grid point counts as collapsing.
pub const DEFAULT_COLLAPSE_CRITERION: f64 = 0.5;

/// How each replicate obtains its interaction matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum AdjacencySpec {
    Deterministic {
        i_p: f64,
    },
    Random {
        u_b: f64,
    },
    /// Mean of `count` random matrices.
    Averaged {
        u_b: f64,
        count: usize,
    },
    Fixed(Arc<Adjacency>),
}

impl AdjacencySpec {
    pub fn build(&self, layout: BlockLayout, seed: u64) -> Result<Arc<Adjacency>> {
        Ok(match self {
            AdjacencySpec::Deterministic { i_p } => Arc::new(graphgen::gen_deterministic(layout, *i_p)?),
            AdjacencySpec::Random { u_b } => Arc::new(graphgen::gen_random_seeded(layout, *u_b, seed)?),
            AdjacencySpec::Averaged { u_b, count } => {
                let mut rng = rng_from_seed(seed);
                let mats = (0..*count)
                    .map(|_| graphgen::gen_random(layout, *u_b, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                Arc::new(graphgen::average_adjacency(&mats)?)
            }
            AdjacencySpec::Fixed(adj) => {
                if adj.layout() != layout {
                    return Err(SimError::LayoutMismatch {
                        expected: layout.to_string(),
                        found: adj.layout().to_string(),
                    });
                }
                Arc::clone(adj)
            }
        })
    }
}

/// A simulation template: everything in [`SimConfig`] except the seed and
/// the realized adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub layout: BlockLayout,
    pub adjacency: AdjacencySpec,
    pub potential: PotentialSpec,
    pub alpha: f64,
    pub noise: NoiseSpec,
    pub initial_opinions: Vec<f64>,
    pub horizon: u64,
    pub record_every: u64,
    /// Cluster gap used by the summaries.
    pub gap: f64,
}

impl Scenario {
    /// Three groups of `n_p` at 0.1/0.5/0.9 with tent potential
    /// (`tau = 0.63`), `alpha = 0.1`, no noise, recorded every macro step.
    pub fn three_communities(n_p: usize, adjacency: AdjacencySpec, horizon: u64) -> Result<Scenario> {
        let layout = BlockLayout::new(3, n_p)?;
        Ok(Scenario {
            layout,
            adjacency,
            potential: PotentialSpec::tent(0.63)?,
            alpha: 0.1,
            noise: NoiseSpec::off(),
            initial_opinions: vec![0.1, 0.5, 0.9],
            horizon,
            record_every: layout.population() as u64,
            gap: DEFAULT_GAP,
        })
    }

    pub fn instantiate(&self, seed: u64) -> Result<SimConfig> {
        let adjacency = self.adjacency.build(self.layout, adjacency_seed(seed))?;
        let config = SimConfig {
            layout: self.layout,
            adjacency,
            potential: self.potential,
            alpha: self.alpha,
            noise: self.noise,
            initial_opinions: self.initial_opinions.clone(),
            horizon: self.horizon,
            record_every: self.record_every,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// Copy of the scenario with one parameter replaced.
    pub fn with_param(&self, param: Param, value: f64) -> Result<Scenario> {
        let invalid = |reason: &str| SimError::InvalidParameter {
            name: param.to_string(),
            value,
            reason: reason.into(),
        };
        if !value.is_finite() {
            return Err(invalid("must be finite"));
        }
        let mut next = self.clone();
        match param {
            Param::Ip => match &mut next.adjacency {
                AdjacencySpec::Deterministic { i_p } if value >= 0.0 => *i_p = value,
                AdjacencySpec::Deterministic { .. } => return Err(invalid("must be non-negative")),
                _ => return Err(invalid("requires a deterministic adjacency")),
            },
            Param::Ub => match &mut next.adjacency {
                AdjacencySpec::Random { u_b } | AdjacencySpec::Averaged { u_b, .. } if (0.0..=1.0).contains(&value) => {
                    *u_b = value
                }
                AdjacencySpec::Random { .. } | AdjacencySpec::Averaged { .. } => {
                    return Err(invalid("must lie in [0, 1]"))
                }
                _ => return Err(invalid("requires a random adjacency")),
            },
            Param::S => {
                if value < 0.0 {
                    return Err(invalid("must be non-negative"));
                }
                next.noise.s = value;
            }
            Param::Ss => {
                if value < 0.0 {
                    return Err(invalid("must be non-negative"));
                }
                next.noise.s_s = value;
            }
            Param::Alpha => {
                if value <= 0.0 {
                    return Err(invalid("must be positive"));
                }
                next.alpha = value;
            }
            Param::Tau => {
                next.potential =
                    PotentialSpec::new(next.potential.kind, value).map_err(|_| invalid("must lie in (0, 1)"))?;
            }
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "i_p")]
    Ip,
    #[serde(rename = "u_b")]
    Ub,
    #[serde(rename = "s")]
    S,
    #[serde(rename = "s_s")]
    Ss,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "tau")]
    Tau,
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Param::Ip => "i_p",
            Param::Ub => "u_b",
            Param::S => "s",
            Param::Ss => "s_s",
            Param::Alpha => "alpha",
            Param::Tau => "tau",
        })
    }
}

impl FromStr for Param {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "i_p" => Param::Ip,
            "u_b" => Param::Ub,
            "s" => Param::S,
            "s_s" => Param::Ss,
            "alpha" => Param::Alpha,
            "tau" => Param::Tau,
            other => {
                return Err(SimError::InvalidConfig(format!(
                    "unknown sweep parameter `{other}` (expected one of i_p, u_b, s, s_s, alpha, tau)"
                )))
            }
        })
    }
}

/// Runs one replicate without storing its trajectory.
pub fn run_replicate(scenario: &Scenario, seed: u64) -> Result<RunSummary> {
    let config = scenario.instantiate(seed)?;
    let n_s = config.layout.n_s();
    let mut sim = Simulation::new(config)?;
    let mut builder = SummaryBuilder::new(n_s, scenario.gap);
    sim.run_observed(|t, ops| builder.observe(t, ops));
    Ok(builder.finish(sim.state().clamp_events, sim.sigma_stats()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// `n` replicates; replicate `r` uses `derive_seed(base_seed, r)`.
/// Failures are returned in place rather than aborting the batch.
pub fn run_replicates(
    scenario: &Scenario,
    n: usize,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<Result<RunSummary>>> {
    if n == 0 {
        return Err(SimError::InvalidConfig("replicate count must be at least 1".into()));
    }
    let pool = pool(workers)?;
    Ok(pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|r| run_replicate(scenario, derive_seed(base_seed, r)))
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    pub replicates: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub replicates: usize,
    pub failures: usize,
    pub avg_final_clusters: f64,
    pub collapse_fraction: f64,
    /// Mean over collapsed replicates only.
    pub avg_collapse_time: Option<f64>,
    pub n_collapsed: usize,
}

impl Aggregate {
    pub fn from_summaries(results: &[Result<RunSummary>]) -> Aggregate {
        let ok: Vec<&RunSummary> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let n = ok.len();
        let collapse_times: Vec<u64> = ok.iter().filter_map(|s| s.collapse_time).collect();
        let n_collapsed = collapse_times.len();
        Aggregate {
            replicates: results.len(),
            failures: results.len() - n,
            avg_final_clusters: if n == 0 {
                f64::NAN
            } else {
                ok.iter().map(|s| s.final_cluster_count as f64).sum::<f64>() / n as f64
            },
            collapse_fraction: if n == 0 {
                f64::NAN
            } else {
                n_collapsed as f64 / n as f64
            },
            avg_collapse_time: (n_collapsed > 0)
                .then(|| collapse_times.iter().map(|&t| t as f64).sum::<f64>() / n_collapsed as f64),
            n_collapsed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub values: Vec<(Param, f64)>,
    pub aggregate: Aggregate,
    pub summaries: Vec<Result<RunSummary>>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub params: Vec<Param>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        header.extend(
            [
                "replicates",
                "avg_final_clusters",
                "collapse_fraction",
                "avg_collapse_time",
                "n_collapsed",
            ]
            .map(String::from),
        );
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            let a = &p.aggregate;
            let mut row: Vec<String> = p.values.iter().map(|(_, v)| v.to_string()).collect();
            row.push(a.replicates.to_string());
            row.push(a.avg_final_clusters.to_string());
            row.push(a.collapse_fraction.to_string());
            row.push(a.avg_collapse_time.map(|t| t.to_string()).unwrap_or_default());
            row.push(a.n_collapsed.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// One row per replicate; failed replicates carry their error message.
    pub fn write_detail_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let axes: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        writeln!(out, "{},replicate,{},error", axes.join(","), RunSummary::CSV_HEADER)?;
        let blank = RunSummary::CSV_HEADER
            .split(',')
            .map(|_| "")
            .collect::<Vec<_>>()
            .join(",");
        for p in &self.points {
            let vals: Vec<String> = p.values.iter().map(|(_, v)| v.to_string()).collect();
            for (r, s) in p.summaries.iter().enumerate() {
                match s {
                    Ok(s) => writeln!(out, "{},{r},{},", vals.join(","), s.csv_row())?,
                    Err(e) => writeln!(
                        out,
                        "{},{r},{blank},\"{}\"",
                        vals.join(","),
                        e.to_string().replace('"', "'")
                    )?,
                }
            }
        }
        Ok(())
    }
}

/// Evaluates every grid point with `spec.replicates` replicates.
pub fn sweep(spec: &SweepSpec, workers: usize) -> Result<SweepResult> {
    if spec.replicates == 0 {
        return Err(SimError::InvalidConfig("replicate count must be at least 1".into()));
    }
    let mut axes = vec![&spec.axis1];
    axes.extend(spec.axis2.as_ref());
    for axis in &axes {
        if axis.values.is_empty() {
            return Err(SimError::InvalidConfig(format!(
                "sweep axis `{}` has no values",
                axis.param
            )));
        }
    }

    let mut grid: Vec<(Vec<(Param, f64)>, Scenario)> = Vec::new();
    for &v1 in &spec.axis1.values {
        let s1 = spec.base.with_param(spec.axis1.param, v1)?;
        match &spec.axis2 {
            None => grid.push((vec![(spec.axis1.param, v1)], s1)),
            Some(axis2) => {
                for &v2 in &axis2.values {
                    let s2 = s1.with_param(axis2.param, v2)?;
                    grid.push((vec![(spec.axis1.param, v1), (axis2.param, v2)], s2));
                }
            }
        }
    }

    let reps = spec.replicates;
    let pool = pool(workers)?;
    let mut flat: Vec<Result<RunSummary>> = pool.install(|| {
        (0..grid.len() * reps)
            .into_par_iter()
            .map(|k| run_replicate(&grid[k / reps].1, derive_seed(spec.base_seed, (k % reps) as u64)))
            .collect()
    });

    let points = grid
        .into_iter()
        .enumerate()
        .map(|(g, (values, _))| {
            let summaries: Vec<_> = flat.drain(..reps).collect();
            debug_assert!(g * reps < usize::MAX);
            SweepPoint {
                values,
                aggregate: Aggregate::from_summaries(&summaries),
                summaries,
            }
        })
        .collect();

    Ok(SweepResult {
        params: axes.iter().map(|a| a.param).collect(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub i_p: f64,
    pub ratio: f64,
    pub collapse_fraction: f64,
}

/// Scans an ascending `i_p` grid and returns the first value whose
/// collapse fraction reaches `criterion`, with its inter/intra ratio.
pub fn find_min_collapse_ip(
    scenario: &Scenario,
    grid: &[f64],
    replicates: usize,
    base_seed: u64,
    criterion: f64,
    workers: usize,
) -> Result<CriticalPoint> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::InvalidConfig("i_p grid must be sorted ascending".into()));
    }
    for &i_p in grid {
        let point = scenario.with_param(Param::Ip, i_p)?;
        let results = run_replicates(&point, replicates, base_seed, workers)?;
        let agg = Aggregate::from_summaries(&results);
        if agg.collapse_fraction >= criterion {
            return Ok(CriticalPoint {
                i_p,
                ratio: graphgen::ratio_from_ip(scenario.layout, i_p),
                collapse_fraction: agg.collapse_fraction,
            });
        }
    }
    Err(SimError::NotFound { criterion })
}
