//! Block-structured, symmetric, doubly-stochastic interaction matrices.
//!
//! Agents are laid out in `n_s` contiguous groups of `n_p` members. Entry
//! `(i, j)` is the probability that agent `i` picks agent `j` as its
//! interaction partner. Two generators are provided: a deterministic one
//! with a uniform inter-group weight `i_p`, and a random one that draws
//! inter-group weights from `[0, u_b)` and balances the result with a
//! symmetrized Sinkhorn iteration.

use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::{rng_from_seed, SimRng};

/// Row/column tolerance at which the Sinkhorn loop stops.
pub const SINKHORN_TOL: f64 = 1e-8;
/// Sweep cap for the Sinkhorn loop.
pub const SINKHORN_MAX_SWEEPS: usize = 10_000;
/// Re-draw attempts for an off-diagonal block that came out all zeros.
pub const ZERO_BLOCK_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    n_s: usize,
    n_p: usize,
}

impl BlockLayout {
    pub fn new(n_s: usize, n_p: usize) -> Result<Self> {
        if n_s == 0 {
            return Err(SimError::InvalidLayout("n_s must be at least 1".into()));
        }
        if n_p < 2 {
            return Err(SimError::InvalidLayout(format!("n_p must be at least 2, got {n_p}")));
        }
        Ok(BlockLayout { n_s, n_p })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn population(&self) -> usize {
        self.n_s * self.n_p
    }

    pub fn group_of(&self, agent: usize) -> usize {
        agent / self.n_p
    }

    pub fn members(&self, group: usize) -> std::ops::Range<usize> {
        group * self.n_p..(group + 1) * self.n_p
    }
}

impl fmt::Display for BlockLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n_s, self.n_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Deterministic { i_p: f64 },
    Random { u_b: f64, seed: u64 },
    Averaged { count: usize },
    External,
}

/// Dense row-major interaction-probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    layout: BlockLayout,
    weights: Vec<f64>,
    provenance: Provenance,
}

impl Adjacency {
    /// Wraps an existing matrix. Only the shape is checked here; use
    /// [`validate_doubly_stochastic`] for the stochastic invariants.
    pub fn from_weights(layout: BlockLayout, weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let n = layout.population();
        if weights.len() != n * n {
            return Err(SimError::InvalidLayout(format!(
                "layout {layout} needs {} entries, got {}",
                n * n,
                weights.len()
            )));
        }
        Ok(Adjacency {
            layout,
            weights,
            provenance,
        })
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn size(&self) -> usize {
        self.layout.population()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.size();
        &self.weights[i * n..(i + 1) * n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major CSV: a `c0,c1,...` header, then one matrix row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = (0..self.size()).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",");
        writeln!(out, "{header}")?;
        for i in 0..self.size() {
            let line = self.row(i).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads [`Adjacency::write_csv`] output; the header line is optional.
    pub fn read_csv<R: BufRead>(input: R, layout: BlockLayout) -> Result<Self> {
        let n = layout.population();
        let mut weights = Vec::with_capacity(n * n);
        let mut rows = 0;
        let mut seen_first = false;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if !seen_first {
                seen_first = true;
                if line.trim_start().starts_with('c') {
                    let cols = line.split(',').count();
                    if cols != n {
                        return Err(SimError::Parse {
                            line: lineno,
                            message: format!("header has {cols} columns, layout {layout} needs {n}"),
                        });
                    }
                    continue;
                }
            }
            let before = weights.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| SimError::Parse {
                    line: lineno,
                    message: format!("not a number: `{field}`"),
                })?;
                weights.push(v);
            }
            if weights.len() - before != n {
                return Err(SimError::Parse {
                    line: lineno,
                    message: format!("expected {n} values, found {}", weights.len() - before),
                });
            }
            rows += 1;
        }
        if rows != n {
            return Err(SimError::Parse {
                line: rows,
                message: format!("expected {n} rows, found {rows}"),
            });
        }
        Adjacency::from_weights(layout, weights, Provenance::External)
    }

    /// `(row, col, value)` CSV with header, for heat-map plotting.
    pub fn write_heatmap<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,col,value")?;
        let n = self.size();
        for i in 0..n {
            for j in 0..n {
                writeln!(out, "{i},{j},{}", self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Unnormalized matrix with `1/(n_p-1)` off the diagonal of every
/// diagonal block and zeros elsewhere.
fn intra_block_seed(layout: BlockLayout) -> Vec<f64> {
    let n = layout.population();
    let w = 1.0 / (layout.n_p - 1) as f64;
    let mut a = vec![0.0; n * n];
    for g in 0..layout.n_s {
        for i in layout.members(g) {
            for j in layout.members(g) {
                if i != j {
                    a[i * n + j] = w;
                }
            }
        }
    }
    a
}

/// Deterministic generator: every inter-group entry starts at `i_p`, then
/// the matrix is divided by its common row sum `1 + (n_s-1) n_p i_p`.
pub fn gen_deterministic(layout: BlockLayout, i_p: f64) -> Result<Adjacency> {
    if !(i_p >= 0.0 && i_p.is_finite()) {
        return Err(SimError::InvalidParameter {
            name: "i_p".into(),
            value: i_p,
            reason: "must be a finite non-negative number".into(),
        });
    }
    let n = layout.population();
    let mut a = intra_block_seed(layout);
    for i in 0..n {
        for j in 0..n {
            if layout.group_of(i) != layout.group_of(j) {
                a[i * n + j] = i_p;
            }
        }
    }
    let row_sum = 1.0 + ((layout.n_s - 1) * layout.n_p) as f64 * i_p;
    for v in &mut a {
        *v /= row_sum;
    }
    Adjacency::from_weights(layout, a, Provenance::Deterministic { i_p })
}

/// Random generator seeded from `seed`.
pub fn gen_random_seeded(layout: BlockLayout, u_b: f64, seed: u64) -> Result<Adjacency> {
    let mut rng = rng_from_seed(seed);
    random_with_rng(layout, u_b, &mut rng, seed)
}

/// Random generator: inter-group entries drawn uniformly from `[0, u_b)`
/// on the lower blocks and mirrored, then balanced by alternating row
/// normalization, column normalization and lower-over-upper copying
/// until every row and column sums to 1 within [`SINKHORN_TOL`].
pub fn gen_random<R: Rng + ?Sized>(layout: BlockLayout, u_b: f64, rng: &mut R) -> Result<Adjacency> {
    if !(0.0..=1.0).contains(&u_b) {
        return Err(SimError::InvalidParameter {
            name: "u_b".into(),
            value: u_b,
            reason: "must lie in [0, 1]".into(),
        });
    }
    let n = layout.population();
    let n_p = layout.n_p;
    let mut a = intra_block_seed(layout);

    for bi in 1..layout.n_s {
        for bj in 0..bi {
            let mut block = vec![0.0; n_p * n_p];
            for attempt in 0..ZERO_BLOCK_REDRAWS {
                for v in &mut block {
                    *v = if u_b > 0.0 { rng.random_range(0.0..u_b) } else { 0.0 };
                }
                if u_b == 0.0 || block.iter().any(|&v| v > 0.0) || attempt + 1 == ZERO_BLOCK_REDRAWS {
                    break;
                }
            }
            for r in 0..n_p {
                for c in 0..n_p {
                    let i = bi * n_p + r;
                    let j = bj * n_p + c;
                    a[i * n + j] = block[r * n_p + c];
                    a[j * n + i] = block[r * n_p + c];
                }
            }
        }
    }

    sinkhorn_symmetric(&mut a, n)?;
    Ok(Adjacency {
        layout,
        weights: a,
        provenance: Provenance::Random { u_b, seed: 0 },
    })
}

fn sinkhorn_symmetric(a: &mut [f64], n: usize) -> Result<()> {
    let mut col_sums = vec![0.0; n];
    let mut deviation = f64::INFINITY;
    for sweep in 0..SINKHORN_MAX_SWEEPS {
        if sweep > 0 && deviation <= SINKHORN_TOL {
            return Ok(());
        }
        for row in a.chunks_exact_mut(n) {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        col_sums.iter_mut().for_each(|c| *c = 0.0);
        for row in a.chunks_exact(n) {
            for (c, v) in col_sums.iter_mut().zip(row) {
                *c += v;
            }
        }
        for row in a.chunks_exact_mut(n) {
            for (v, c) in row.iter_mut().zip(&col_sums) {
                if *c > 0.0 {
                    *v /= c;
                }
            }
        }
        // Lower triangle overwrites upper; this covers the off-diagonal
        // blocks and keeps the diagonal blocks symmetric as well.
        for i in 1..n {
            for j in 0..i {
                a[j * n + i] = a[i * n + j];
            }
        }
        deviation = max_line_deviation(a, n);
    }
    if deviation <= SINKHORN_TOL {
        return Ok(());
    }
    Err(SimError::Convergence {
        sweeps: SINKHORN_MAX_SWEEPS,
        max_deviation: deviation,
    })
}

fn max_line_deviation(a: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let mut col_sums = vec![0.0; n];
    for row in a.chunks_exact(n) {
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        for (c, v) in col_sums.iter_mut().zip(row) {
            *c += v;
        }
    }
    col_sums.iter().fold(worst, |w, c| w.max((c - 1.0).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    pub max_row_deviation: f64,
    pub max_col_deviation: f64,
    pub max_asymmetry: f64,
    pub max_diagonal: f64,
    pub min_entry: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn validate_doubly_stochastic(adj: &Adjacency, tol: f64) -> ValidationReport {
    let n = adj.size();
    let mut col_sums = vec![0.0; n];
    let mut max_row_deviation: f64 = 0.0;
    let mut max_asymmetry: f64 = 0.0;
    let mut max_diagonal: f64 = 0.0;
    let mut min_entry = f64::INFINITY;
    for i in 0..n {
        let row = adj.row(i);
        max_row_deviation = max_row_deviation.max((row.iter().sum::<f64>() - 1.0).abs());
        for (j, &v) in row.iter().enumerate() {
            col_sums[j] += v;
            min_entry = min_entry.min(v);
            max_asymmetry = max_asymmetry.max((v - adj.get(j, i)).abs());
        }
        max_diagonal = max_diagonal.max(row[i].abs());
    }
    let max_col_deviation = col_sums.iter().fold(0.0f64, |w, c| w.max((c - 1.0).abs()));
    let passed = max_row_deviation <= tol
        && max_col_deviation <= tol
        && max_asymmetry <= tol
        && max_diagonal <= tol
        && min_entry >= 0.0;
    ValidationReport {
        max_row_deviation,
        max_col_deviation,
        max_asymmetry,
        max_diagonal,
        min_entry,
        tol,
        passed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockStat {
    pub block: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and (population) standard deviation of the off-diagonal entries
/// of each diagonal block.
pub fn block_stats(adj: &Adjacency) -> Vec<BlockStat> {
    let layout = adj.layout();
    (0..layout.n_s)
        .map(|g| {
            let values: Vec<f64> = layout
                .members(g)
                .flat_map(|i| layout.members(g).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| adj.get(i, j))
                .collect();
            let count = values.len() as f64;
            let mean = values.iter().sum::<f64>() / count;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
            BlockStat {
                block: g,
                mean,
                std: var.sqrt(),
            }
        })
        .collect()
}

/// Entrywise mean of matrices sharing a layout.
pub fn average_adjacency(matrices: &[Adjacency]) -> Result<Adjacency> {
    let first = matrices
        .first()
        .ok_or_else(|| SimError::Empty("no matrices to average".into()))?;
    let layout = first.layout();
    let mut sum = vec![0.0; first.weights.len()];
    for m in matrices {
        if m.layout() != layout {
            return Err(SimError::LayoutMismatch {
                expected: layout.to_string(),
                found: m.layout().to_string(),
            });
        }
        for (s, v) in sum.iter_mut().zip(&m.weights) {
            *s += v;
        }
    }
    let count = matrices.len();
    for s in &mut sum {
        *s /= count as f64;
    }
    Adjacency::from_weights(layout, sum, Provenance::Averaged { count })
}

/// Pre-normalization inter/intra mass ratio for one column of the
/// deterministic matrix: `((n_s-1)/n_s) * N * i_p`.
pub fn ratio_from_ip(layout: BlockLayout, i_p: f64) -> f64 {
    let n_s = layout.n_s as f64;
    (n_s - 1.0) / n_s * layout.population() as f64 * i_p
}

pub(crate) fn random_with_rng(layout: BlockLayout, u_b: f64, rng: &mut SimRng, seed: u64) -> Result<Adjacency> {
    let mut adj = gen_random(layout, u_b, rng)?;
    adj.provenance = Provenance::Random { u_b, seed };
    Ok(adj)
}
