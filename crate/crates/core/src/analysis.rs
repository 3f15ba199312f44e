//! Observables extracted from trajectories: opinion clusters, community
//! collapse, drift and noise statistics.

use std::io::Write;

use serde::Serialize;

use crate::engine::{RunOutput, SigmaStats, SimConfig, Trajectory};
use crate::error::Result;

/// Default gap separating two opinion clusters.
pub const DEFAULT_GAP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub centroid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub gap: f64,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn centroids(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.centroid).collect()
    }
}

/// Single-linkage clustering on the line: sorted opinions are cut wherever
/// two neighbors differ by at least `gap`.
pub fn detect_clusters(opinions: &[f64], gap: f64) -> ClusterSet {
    let mut order: Vec<usize> = (0..opinions.len()).collect();
    order.sort_by(|&a, &b| opinions[a].total_cmp(&opinions[b]));
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let flush = |current: &mut Vec<usize>, clusters: &mut Vec<Cluster>| {
        if !current.is_empty() {
            let centroid = current.iter().map(|&a| opinions[a]).sum::<f64>() / current.len() as f64;
            clusters.push(Cluster {
                members: std::mem::take(current),
                centroid,
            });
        }
    };
    for (k, &a) in order.iter().enumerate() {
        if k > 0 && opinions[a] - opinions[order[k - 1]] >= gap {
            flush(&mut current, &mut clusters);
        }
        current.push(a);
    }
    flush(&mut current, &mut clusters);
    ClusterSet { clusters, gap }
}

/// Cluster count only; reuses `scratch` to avoid allocating per sample.
pub fn count_clusters(opinions: &[f64], gap: f64, scratch: &mut Vec<f64>) -> usize {
    if opinions.is_empty() {
        return 0;
    }
    scratch.clear();
    scratch.extend_from_slice(opinions);
    scratch.sort_by(f64::total_cmp);
    1 + scratch.windows(2).filter(|w| w[1] - w[0] >= gap).count()
}

/// Earliest sample time with fewer than `n_s` clusters.
pub fn collapse_time(trajectory: &Trajectory, n_s: usize, gap: f64) -> Option<u64> {
    let mut scratch = Vec::new();
    trajectory
        .sample_times
        .iter()
        .zip(&trajectory.samples)
        .find(|(_, s)| count_clusters(s, gap, &mut scratch) < n_s)
        .map(|(&t, _)| t)
}

pub fn mean_opinion(opinions: &[f64]) -> f64 {
    opinions.iter().sum::<f64>() / opinions.len() as f64
}

fn group_mean(opinions: &[f64], group: &[usize]) -> f64 {
    group.iter().map(|&a| opinions[a]).sum::<f64>() / group.len() as f64
}

/// Change of the group's mean opinion between the first and last sample.
pub fn drift(trajectory: &Trajectory, group: &[usize]) -> f64 {
    match (trajectory.samples.first(), trajectory.samples.last()) {
        (Some(first), Some(last)) if !group.is_empty() => group_mean(last, group) - group_mean(first, group),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub variance: f64,
}

impl From<SigmaStats> for SigmaSummary {
    fn from(s: SigmaStats) -> Self {
        SigmaSummary {
            min: s.min,
            max: s.max,
            mean: s.mean,
            variance: s.variance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_cluster_count: usize,
    pub collapsed: bool,
    pub collapse_time: Option<u64>,
    /// Population mean at the last sample minus the mean at the first.
    pub mean_drift: f64,
    pub clamp_events: u64,
    pub sigma_stats: Option<SigmaSummary>,
}

impl RunSummary {
    pub const CSV_HEADER: &'static str =
        "final_cluster_count,collapsed,collapse_time,mean_drift,clamp_events,sigma_min,sigma_max,sigma_mean,sigma_variance";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let s = self.sigma_stats;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.final_cluster_count,
            self.collapsed,
            self.collapse_time.map(|t| t.to_string()).unwrap_or_default(),
            self.mean_drift,
            self.clamp_events,
            opt(s.map(|s| s.min)),
            opt(s.map(|s| s.max)),
            opt(s.map(|s| s.mean)),
            opt(s.map(|s| s.variance)),
        )
    }

    pub fn write_csv<W: Write>(summaries: &[RunSummary], mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for s in summaries {
            writeln!(out, "{}", s.csv_row())?;
        }
        Ok(())
    }
}

/// Incremental summary built from trajectory samples as they are produced,
/// so sweeps never need to store whole trajectories.
#[derive(Debug, Clone)]
pub struct SummaryBuilder {
    n_s: usize,
    gap: f64,
    first_mean: Option<f64>,
    last_mean: f64,
    last_count: usize,
    collapse_time: Option<u64>,
    scratch: Vec<f64>,
}

impl SummaryBuilder {
    pub fn new(n_s: usize, gap: f64) -> Self {
        SummaryBuilder {
            n_s,
            gap,
            first_mean: None,
            last_mean: 0.0,
            last_count: 0,
            collapse_time: None,
            scratch: Vec::new(),
        }
    }

    pub fn observe(&mut self, time: u64, opinions: &[f64]) {
        let mean = mean_opinion(opinions);
        self.first_mean.get_or_insert(mean);
        self.last_mean = mean;
        self.last_count = count_clusters(opinions, self.gap, &mut self.scratch);
        if self.collapse_time.is_none() && self.last_count < self.n_s {
            self.collapse_time = Some(time);
        }
    }

    pub fn finish(self, clamp_events: u64, sigma: Option<SigmaStats>) -> RunSummary {
        RunSummary {
            final_cluster_count: self.last_count,
            collapsed: self.collapse_time.is_some(),
            collapse_time: self.collapse_time,
            mean_drift: self.last_mean - self.first_mean.unwrap_or(self.last_mean),
            clamp_events,
            sigma_stats: sigma.map(SigmaSummary::from),
        }
    }
}

pub fn summarize(output: &RunOutput, config: &SimConfig, gap: f64) -> RunSummary {
    let mut builder = SummaryBuilder::new(config.layout.n_s(), gap);
    for (&t, s) in output.trajectory.sample_times.iter().zip(&output.trajectory.samples) {
        builder.observe(t, s);
    }
    builder.finish(output.final_state.clamp_events, output.sigma_stats)
}
