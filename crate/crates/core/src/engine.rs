//! Simulation state and micro-dynamics.
//!
//! One interaction picks an agent uniformly, picks its partner from that
//! agent's row of the adjacency matrix, moves both opinions by the
//! potential-driven step, adds individualization noise and clamps to
//! `[0, 1]`. A macro step is `N` interactions.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::graphgen::{Adjacency, BlockLayout};
use crate::noise::{adaptive_sigma, cluster_direction, sample_noise, NoiseMode, NoiseSpec};
use crate::potentials::PotentialSpec;
use crate::rng::{rng_from_seed, SimRng};

/// Row sums must be within this of 1 for partner sampling.
pub const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub layout: BlockLayout,
    pub adjacency: Arc<Adjacency>,
    pub potential: PotentialSpec,
    pub alpha: f64,
    pub noise: NoiseSpec,
    /// One initial opinion per social group.
    pub initial_opinions: Vec<f64>,
    /// Total pairwise interactions.
    pub horizon: u64,
    /// Interactions between trajectory samples.
    pub record_every: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.adjacency.layout() != self.layout {
            return invalid(format!(
                "adjacency layout {} does not match population layout {}",
                self.adjacency.layout(),
                self.layout
            ));
        }
        if self.initial_opinions.len() != self.layout.n_s() {
            return invalid(format!(
                "expected {} initial opinions, got {}",
                self.layout.n_s(),
                self.initial_opinions.len()
            ));
        }
        if let Some(bad) = self.initial_opinions.iter().find(|o| !(0.0..=1.0).contains(*o)) {
            return invalid(format!("initial opinion {bad} outside [0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.horizon == 0 {
            return invalid("horizon must be at least 1".into());
        }
        if self.record_every == 0 {
            return invalid("record_every must be at least 1".into());
        }
        self.potential
            .validate()
            .and_then(|_| self.noise.validate())
            .map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    pub fn population(&self) -> usize {
        self.layout.population()
    }

    /// Short hex digest identifying every input that affects a run.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{}|{}|{}",
            self.layout,
            self.potential,
            self.alpha,
            self.noise,
            self.initial_opinions,
            self.horizon,
            self.record_every,
            self.seed
        ));
        for w in self.adjacency.weights() {
            h.update(w.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    pub opinions: Vec<f64>,
    /// Opinions at the start of the previous macro step.
    pub prev_step_opinions: Vec<f64>,
    pub interaction_count: u64,
    pub step_count: u64,
    /// Number of agent updates that had to be clamped to `[0, 1]`.
    pub clamp_events: u64,
    step_start: Vec<f64>,
}

impl OpinionState {
    pub fn from_opinions(opinions: Vec<f64>) -> Result<Self> {
        if let Some(bad) = opinions.iter().find(|o| !(0.0..=1.0).contains(*o)) {
            return Err(SimError::InvalidConfig(format!("opinion {bad} outside [0, 1]")));
        }
        Ok(OpinionState {
            prev_step_opinions: opinions.clone(),
            step_start: opinions.clone(),
            opinions,
            interaction_count: 0,
            step_count: 0,
            clamp_events: 0,
        })
    }
}

/// Every member of group `g` starts at `initial_opinions[g]`.
pub fn init_state(config: &SimConfig) -> Result<OpinionState> {
    config.validate()?;
    let layout = config.layout;
    let opinions = (0..layout.population())
        .map(|a| config.initial_opinions[layout.group_of(a)])
        .collect();
    OpinionState::from_opinions(opinions)
}

/// Partner selection tables built once per adjacency matrix.
#[derive(Debug, Clone)]
pub struct PartnerSampler {
    n: usize,
    cumulative: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl PartnerSampler {
    pub fn new(adj: &Adjacency) -> Result<Self> {
        let n = adj.size();
        let mut cumulative = Vec::with_capacity(n * n);
        let mut neighbors = Vec::with_capacity(n);
        for i in 0..n {
            let row = adj.row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&w| w < 0.0) || row[i] != 0.0 {
                return Err(SimError::Sampling { row: i, sum });
            }
            let mut acc = 0.0;
            for &w in row {
                acc += w;
                cumulative.push(acc);
            }
            neighbors.push((0..n).filter(|&j| row[j] > 0.0).collect());
        }
        Ok(PartnerSampler {
            n,
            cumulative,
            neighbors,
        })
    }

    /// Spatial neighbors of `i`: every agent it can be paired with.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `i` uniform over agents, `j` drawn from row `i`.
    pub fn select_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let i = rng.random_range(0..self.n);
        let cum = &self.cumulative[i * self.n..(i + 1) * self.n];
        let u = rng.random::<f64>() * cum[self.n - 1];
        let j = cum.partition_point(|&c| c <= u).min(self.n - 1);
        (i, j)
    }
}

/// Running min/max/mean/variance of realized noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SigmaStats {
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    m2: f64,
}

impl SigmaStats {
    pub fn push(&mut self, x: f64) {
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample_times: Vec<u64>,
    pub samples: Vec<Vec<f64>>,
    pub config_digest: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    pub fn population(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Keeps the samples taken at or before `time`.
    pub fn truncated(&self, time: u64) -> Trajectory {
        let keep = self.sample_times.partition_point(|&t| t <= time);
        Trajectory {
            sample_times: self.sample_times[..keep].to_vec(),
            samples: self.samples[..keep].to_vec(),
            config_digest: self.config_digest.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# config_digest={}", self.config_digest)?;
        let header: Vec<String> = std::iter::once("interaction".to_string())
            .chain((0..self.population()).map(|a| format!("agent_{a}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, sample) in self.sample_times.iter().zip(&self.samples) {
            let mut line = t.to_string();
            for v in sample {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Trajectory> {
        let mut digest = String::new();
        let mut width: Option<usize> = None;
        let mut traj = Trajectory {
            sample_times: Vec::new(),
            samples: Vec::new(),
            config_digest: String::new(),
        };
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let err = |message: String| SimError::Parse { line: lineno, message };
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(d) = comment.trim().strip_prefix("config_digest=") {
                    digest = d.to_string();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let Some(w) = width else {
                if fields.first().map(|f| f.trim()) != Some("interaction") || fields.len() < 2 {
                    return Err(err("expected header `interaction,agent_0,...`".into()));
                }
                width = Some(fields.len());
                continue;
            };
            if fields.len() != w {
                return Err(err(format!("expected {w} fields, found {}", fields.len())));
            }
            let t: u64 = fields[0]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad interaction count `{}`", fields[0])))?;
            if traj.sample_times.last().is_some_and(|&last| t <= last) {
                return Err(err(format!("sample time {t} is not increasing")));
            }
            let sample = fields[1..]
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|_| err(format!("bad opinion `{f}`"))))
                .collect::<Result<Vec<f64>>>()?;
            traj.sample_times.push(t);
            traj.samples.push(sample);
        }
        if width.is_none() {
            return Err(SimError::Parse {
                line: 0,
                message: "missing header".into(),
            });
        }
        traj.config_digest = digest;
        Ok(traj)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub final_state: OpinionState,
    /// Present when noise is active.
    pub sigma_stats: Option<SigmaStats>,
}

/// A single sequential simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    sampler: PartnerSampler,
    state: OpinionState,
    rng: SimRng,
    sigma_stats: SigmaStats,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        let state = init_state(&config)?;
        Self::with_state(config, state)
    }

    /// Starts from an explicit opinion vector instead of the group
    /// initial values.
    pub fn with_state(config: SimConfig, state: OpinionState) -> Result<Self> {
        config.validate()?;
        if state.opinions.len() != config.population() {
            return Err(SimError::InvalidConfig(format!(
                "state has {} agents, layout needs {}",
                state.opinions.len(),
                config.population()
            )));
        }
        let sampler = PartnerSampler::new(&config.adjacency)?;
        let rng = rng_from_seed(config.seed);
        Ok(Simulation {
            config,
            sampler,
            state,
            rng,
            sigma_stats: SigmaStats::default(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &OpinionState {
        &self.state
    }

    pub fn opinions(&self) -> &[f64] {
        &self.state.opinions
    }

    pub fn sigma_stats(&self) -> Option<SigmaStats> {
        self.config.noise.is_active().then_some(self.sigma_stats)
    }

    pub fn select_pair(&mut self) -> (usize, usize) {
        self.sampler.select_pair(&mut self.rng)
    }

    /// Pairwise update of agents `i` and `j`.
    pub fn apply_interaction(&mut self, i: usize, j: usize) {
        debug_assert_ne!(i, j);
        let ops = &self.state.opinions;
        let (oi, oj) = (ops[i], ops[j]);
        let step = self.config.potential.interaction_step(self.config.alpha, oi - oj);

        let noise = &self.config.noise;
        let (xi_i, xi_j) = if noise.is_active() && noise.s > 0.0 {
            let sigma_i = adaptive_sigma(i, ops, self.sampler.neighbors(i), noise.s);
            let sigma_j = adaptive_sigma(j, ops, self.sampler.neighbors(j), noise.s);
            self.sigma_stats.push(sigma_i);
            self.sigma_stats.push(sigma_j);
            let (c_i, c_j) = if noise.mode == NoiseMode::Skewed {
                let prev = &self.state.prev_step_opinions;
                (
                    cluster_direction(i, ops, prev, noise.delta),
                    cluster_direction(j, ops, prev, noise.delta),
                )
            } else {
                (0, 0)
            };
            (
                sample_noise(noise, sigma_i, c_i, &mut self.rng),
                sample_noise(noise, sigma_j, c_j, &mut self.rng),
            )
        } else {
            if noise.is_active() {
                self.sigma_stats.push(0.0);
                self.sigma_stats.push(0.0);
            }
            (0.0, 0.0)
        };

        let new_i = self.clamp(oi - step + xi_i);
        let new_j = self.clamp(oj + step + xi_j);
        self.state.opinions[i] = new_i;
        self.state.opinions[j] = new_j;
        self.state.interaction_count += 1;
        self.roll_step_boundary();
    }

    fn clamp(&mut self, x: f64) -> f64 {
        if x < 0.0 {
            self.state.clamp_events += 1;
            0.0
        } else if x > 1.0 {
            self.state.clamp_events += 1;
            1.0
        } else {
            x
        }
    }

    fn roll_step_boundary(&mut self) {
        let n = self.config.population() as u64;
        if self.state.interaction_count.is_multiple_of(n) {
            let st = &mut self.state;
            std::mem::swap(&mut st.prev_step_opinions, &mut st.step_start);
            st.step_start.copy_from_slice(&st.opinions);
            st.step_count += 1;
        }
    }

    /// One random pairing followed by its update.
    pub fn interact(&mut self) -> (usize, usize) {
        let (i, j) = self.select_pair();
        self.apply_interaction(i, j);
        (i, j)
    }

    pub fn advance(&mut self, interactions: u64) {
        for _ in 0..interactions {
            self.interact();
        }
    }

    /// Runs the remainder of a macro step (a full one when aligned).
    pub fn step(&mut self) {
        let n = self.config.population() as u64;
        let within = self.state.interaction_count % n;
        self.advance(n - within);
    }

    /// Runs to the configured horizon, calling `observe` at time 0, every
    /// `record_every` interactions, and at the horizon.
    pub fn run_observed<F: FnMut(u64, &[f64])>(&mut self, mut observe: F) {
        let horizon = self.config.horizon;
        let every = self.config.record_every;
        observe(self.state.interaction_count, &self.state.opinions);
        while self.state.interaction_count < horizon {
            let next = (self.state.interaction_count / every + 1) * every;
            let target = next.min(horizon);
            self.advance(target - self.state.interaction_count);
            observe(self.state.interaction_count, &self.state.opinions);
        }
    }

    pub fn into_state(self) -> OpinionState {
        self.state
    }
}

/// Full run with trajectory recording.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(config.clone())?;
    let mut traj = Trajectory {
        sample_times: Vec::new(),
        samples: Vec::new(),
        config_digest: config.digest(),
    };
    sim.run_observed(|t, ops| {
        traj.sample_times.push(t);
        traj.samples.push(ops.to_vec());
    });
    let sigma_stats = sim.sigma_stats();
    Ok(RunOutput {
        trajectory: traj,
        final_state: sim.into_state(),
        sigma_stats,
    })
}
