//! Posterior fault probabilities from trouble calls and crew observations.
//!
//! Calls only depend on which protection segments tripped, and lines are
//! independent a priori, so the exact posterior is computed by summing over
//! segment states with a message pass over each circuit's protection tree.
//! Within a tripped segment, a line's conditional fault probability is
//! `p_i / P(segment tripped)`.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::BeliefError;
use crate::grid::DistributionGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LineStatus {
    Unvisited,
    ObservedIntact,
    ObservedDamaged,
    Repaired,
}

impl LineStatus {
    /// Whether the line was faulted when the calls were made, if known.
    fn pinned(self) -> Option<bool> {
        match self {
            Self::Unvisited => None,
            Self::ObservedIntact => Some(false),
            Self::ObservedDamaged | Self::Repaired => Some(true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeliefConfig {
    /// Circuits with more free segments than this use Monte Carlo.
    pub enum_limit: usize,
    pub mc_samples: usize,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self { enum_limit: 20, mc_samples: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Traversal {
    pub vehicle: usize,
    pub edge: usize,
    pub minutes: f64,
}

/// Likelihood factors of one customer node: (de-energized, energized).
fn node_factors(grid: &DistributionGrid, customer: usize, called: bool, rho_scale: f64) -> (f64, f64) {
    let c = &grid.customers[customer];
    let silent = (1.0 - c.call_probability * rho_scale).powi(c.count as i32);
    if called {
        (1.0 - silent, 0.0)
    } else {
        (silent, 1.0)
    }
}

/// Likelihood of the call record on `circuit` given which of its lines are faulted.
///
/// Every customer node contributes: called and dark `1-(1-ρ)^n`, silent and dark
/// `(1-ρ)^n`, called but energized `0`, silent and energized `1`.
pub fn call_likelihood(
    grid: &DistributionGrid,
    circuit: usize,
    faulted: &[bool],
    calls: &[bool],
) -> Result<f64, BeliefError> {
    scaled_call_likelihood(grid, circuit, faulted, calls, 1.0)
}

fn scaled_call_likelihood(
    grid: &DistributionGrid,
    circuit: usize,
    faulted: &[bool],
    calls: &[bool],
    rho_scale: f64,
) -> Result<f64, BeliefError> {
    check_calls_len(grid, calls)?;
    let dark = grid.affected_nodes(circuit, faulted)?;
    Ok(grid.circuits[circuit]
        .customers
        .iter()
        .map(|&k| {
            let (d, l) = node_factors(grid, k, calls[k], rho_scale);
            if dark.contains(&grid.customers[k].node) {
                d
            } else {
                l
            }
        })
        .product())
}

fn check_calls_len(grid: &DistributionGrid, calls: &[bool]) -> Result<(), BeliefError> {
    if calls.len() != grid.customers.len() {
        return Err(BeliefError::CallVectorLength { expected: grid.customers.len(), got: calls.len() });
    }
    Ok(())
}

/// Number of segments of `circuit` whose trip state is not pinned by an observation
/// and could be tripped.
pub fn free_segments(grid: &DistributionGrid, circuit: usize, status: &[LineStatus], prior: &[f64]) -> usize {
    grid.circuits[circuit]
        .segments
        .iter()
        .filter(|&&s| {
            let lines = &grid.segments[s].lines;
            !lines.iter().any(|&l| status[l].pinned() == Some(true))
                && lines.iter().any(|&l| status[l] == LineStatus::Unvisited && prior[l] > 0.0)
        })
        .count()
}

/// Exact posterior for the lines of `circuit`, aligned with `grid.circuits[circuit].lines`.
pub fn posterior_exact(
    grid: &DistributionGrid,
    circuit: usize,
    calls: &[bool],
    status: &[LineStatus],
    prior: &[f64],
) -> Result<Vec<f64>, BeliefError> {
    exact_scaled(grid, circuit, calls, status, prior, 1.0)
}

fn exact_scaled(
    grid: &DistributionGrid,
    circuit: usize,
    calls: &[bool],
    status: &[LineStatus],
    prior: &[f64],
    rho_scale: f64,
) -> Result<Vec<f64>, BeliefError> {
    check_calls_len(grid, calls)?;
    let c = &grid.circuits[circuit];
    let nseg = grid.segments.len();
    // probability that each segment tripped, a priori given observations
    let mut q = vec![0.0; nseg];
    let mut pinned = vec![false; nseg];
    let mut unvisited = vec![0usize; nseg];
    let mut dark_f = vec![1.0; nseg];
    let mut lit_f = vec![1.0; nseg];
    for &s in &c.segments {
        let seg = &grid.segments[s];
        pinned[s] = seg.lines.iter().any(|&l| status[l].pinned() == Some(true));
        unvisited[s] = seg.lines.iter().filter(|&&l| status[l] == LineStatus::Unvisited).count();
        q[s] = if pinned[s] {
            1.0
        } else {
            1.0 - seg
                .lines
                .iter()
                .filter(|&&l| status[l] == LineStatus::Unvisited)
                .map(|&l| 1.0 - prior[l])
                .product::<f64>()
        };
        for &k in &seg.customers {
            let (d, l) = node_factors(grid, k, calls[k], rho_scale);
            dark_f[s] *= d;
            lit_f[s] *= l;
        }
    }
    // upward pass: `all_dark` = subtree weight when dark from above,
    // `value` = subtree weight when energized from above
    let mut all_dark = vec![1.0; nseg];
    let mut value = vec![1.0; nseg];
    let mut tripped_weight = vec![0.0; nseg];
    for &s in c.segments.iter().rev() {
        let seg = &grid.segments[s];
        let d: f64 = seg.children.iter().map(|&ch| all_dark[ch]).product();
        let v: f64 = seg.children.iter().map(|&ch| value[ch]).product();
        all_dark[s] = dark_f[s] * d;
        tripped_weight[s] = q[s] * dark_f[s] * d;
        value[s] = tripped_weight[s] + (1.0 - q[s]) * lit_f[s] * v;
    }
    let root = c.segments[0];
    let z = value[root];
    if !(z > 0.0) {
        return Err(BeliefError::ZeroEvidence { circuit: c.id.clone() });
    }
    // downward pass: weight of everything outside the subtree, split by
    // whether the segment is energized (`outside`) or dark (`outside_dark`) from above
    let mut outside = vec![0.0; nseg];
    let mut outside_dark = vec![0.0; nseg];
    outside[root] = 1.0;
    let mut seg_post = vec![0.0; nseg];
    for &s in &c.segments {
        let seg = &grid.segments[s];
        let (o, od) = (outside[s], outside_dark[s]);
        let v: f64 = seg.children.iter().map(|&ch| value[ch]).product();
        let tripped = q[s] * all_dark[s] * (od + o);
        let intact = (1.0 - q[s]) * (od * all_dark[s] + o * lit_f[s] * v);
        seg_post[s] = if tripped + intact > 0.0 { tripped / (tripped + intact) } else { 0.0 };
        for (i, &ch) in seg.children.iter().enumerate() {
            let others = |f: &[f64]| -> f64 {
                seg.children.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &sib)| f[sib]).product()
            };
            outside[ch] = o * (1.0 - q[s]) * lit_f[s] * others(&value);
            outside_dark[ch] = (od + o * q[s]) * dark_f[s] * others(&all_dark);
        }
    }
    Ok(c.lines
        .iter()
        .map(|&l| match status[l] {
            LineStatus::ObservedIntact | LineStatus::Repaired => 0.0,
            LineStatus::ObservedDamaged => 1.0,
            LineStatus::Unvisited => {
                let s = grid.lines[l].segment;
                if prior[l] == 0.0 {
                    0.0
                } else if pinned[s] {
                    prior[l]
                } else if unvisited[s] == 1 {
                    seg_post[s]
                } else {
                    (prior[l] / q[s] * seg_post[s]).clamp(0.0, 1.0)
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    /// Aligned with `grid.circuits[circuit].lines`.
    pub posterior: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Samples with nonzero likelihood.
    pub accepted: usize,
}

/// Importance-sampling posterior: fault combinations drawn from the prior,
/// weighted by the call likelihood.
pub fn posterior_mc(
    grid: &DistributionGrid,
    circuit: usize,
    calls: &[bool],
    status: &[LineStatus],
    prior: &[f64],
    samples: usize,
    seed: u64,
) -> Result<McEstimate, BeliefError> {
    mc_scaled(grid, circuit, calls, status, prior, samples, seed, 1.0)
}

#[allow(clippy::too_many_arguments)]
fn mc_scaled(
    grid: &DistributionGrid,
    circuit: usize,
    calls: &[bool],
    status: &[LineStatus],
    prior: &[f64],
    samples: usize,
    seed: u64,
    rho_scale: f64,
) -> Result<McEstimate, BeliefError> {
    if samples == 0 {
        return Err(BeliefError::NoSamples);
    }
    check_calls_len(grid, calls)?;
    let c = &grid.circuits[circuit];
    let nseg = grid.segments.len();
    let mut dark_f = vec![1.0; nseg];
    let mut lit_f = vec![1.0; nseg];
    for &s in &c.segments {
        for &k in &grid.segments[s].customers {
            let (d, l) = node_factors(grid, k, calls[k], rho_scale);
            dark_f[s] *= d;
            lit_f[s] *= l;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nl = c.lines.len();
    let mut draw = vec![false; nl];
    let mut tripped = vec![false; nseg];
    let mut dark = vec![false; nseg];
    let mut accepted = 0;
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut sum_wx = vec![0.0; nl];
    let mut sum_w2x = vec![0.0; nl];
    for _ in 0..samples {
        for &s in &c.segments {
            tripped[s] = false;
        }
        for (j, &l) in c.lines.iter().enumerate() {
            draw[j] = match status[l].pinned() {
                Some(f) => f,
                None => rng.gen::<f64>() < prior[l],
            };
            if draw[j] {
                tripped[grid.lines[l].segment] = true;
            }
        }
        let mut w = 1.0;
        for &s in &c.segments {
            dark[s] = tripped[s] || grid.segments[s].parent.is_some_and(|p| dark[p]);
            w *= if dark[s] { dark_f[s] } else { lit_f[s] };
        }
        if w > 0.0 {
            accepted += 1;
        }
        sum_w += w;
        sum_w2 += w * w;
        for j in 0..nl {
            if draw[j] {
                sum_wx[j] += w;
                sum_w2x[j] += w * w;
            }
        }
    }
    if !(sum_w > 0.0) {
        return Err(BeliefError::ZeroEvidence { circuit: c.id.clone() });
    }
    let mut posterior = Vec::with_capacity(nl);
    let mut std_error = Vec::with_capacity(nl);
    for (j, &l) in c.lines.iter().enumerate() {
        let est = sum_wx[j] / sum_w;
        // delta-method variance of a self-normalized estimator: sum w^2 (x - est)^2 / (sum w)^2
        let var = (sum_w2x[j] * (1.0 - 2.0 * est) + est * est * sum_w2).max(0.0) / (sum_w * sum_w);
        let (p, se) = match status[l] {
            LineStatus::ObservedIntact | LineStatus::Repaired => (0.0, 0.0),
            LineStatus::ObservedDamaged => (1.0, 0.0),
            LineStatus::Unvisited => (est, var.sqrt()),
        };
        posterior.push(p);
        std_error.push(se);
    }
    Ok(McEstimate { posterior, std_error, accepted })
}

/// What a crew learned about a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    Intact,
    Damaged,
    /// Damaged and already fixed.
    Repaired,
}

#[derive(Debug, Clone, Serialize)]
pub struct Belief {
    prior: Vec<f64>,
    status: Vec<LineStatus>,
    posterior: Vec<f64>,
    calls: Vec<bool>,
    trajectory: Vec<Traversal>,
    /// Fraction of the eventual calling probability already elapsed (1 for calls known up front).
    rho_scale: f64,
    #[serde(skip)]
    config: BeliefConfig,
}

impl Belief {
    pub fn new(grid: &DistributionGrid, calls: Vec<bool>, config: BeliefConfig) -> Result<Self, BeliefError> {
        Self::with_prior(grid, grid.lines.iter().map(|l| l.prior).collect(), calls, config)
    }

    pub fn with_prior(
        grid: &DistributionGrid,
        prior: Vec<f64>,
        calls: Vec<bool>,
        config: BeliefConfig,
    ) -> Result<Self, BeliefError> {
        check_calls_len(grid, &calls)?;
        let n = grid.lines.len();
        let mut b = Self {
            prior,
            status: vec![LineStatus::Unvisited; n],
            posterior: vec![0.0; n],
            calls,
            trajectory: Vec::new(),
            rho_scale: 1.0,
            config,
        };
        b.recompute_all(grid)?;
        Ok(b)
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    pub fn status(&self) -> &[LineStatus] {
        &self.status
    }

    pub fn calls(&self) -> &[bool] {
        &self.calls
    }

    pub fn trajectory(&self) -> &[Traversal] {
        &self.trajectory
    }

    pub fn config(&self) -> BeliefConfig {
        self.config
    }

    pub fn rho_scale(&self) -> f64 {
        self.rho_scale
    }

    /// Probability that segment `s` currently holds an unrepaired fault.
    pub fn segment_posterior(&self, grid: &DistributionGrid, s: usize) -> f64 {
        1.0 - grid.segments[s].lines.iter().map(|&l| 1.0 - self.posterior[l]).product::<f64>()
    }

    pub fn max_posterior(&self) -> f64 {
        self.posterior.iter().copied().fold(0.0, f64::max)
    }

    /// Short content hash of the posterior vector.
    pub fn posterior_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.posterior {
            h.update(p.to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn mc_seed(&self, circuit: usize) -> u64 {
        let mut h = DefaultHasher::new();
        circuit.hash(&mut h);
        self.status.hash(&mut h);
        self.calls.hash(&mut h);
        self.rho_scale.to_bits().hash(&mut h);
        h.finish()
    }

    fn recompute_circuit(&mut self, grid: &DistributionGrid, circuit: usize) -> Result<(), BeliefError> {
        let post = if free_segments(grid, circuit, &self.status, &self.prior) <= self.config.enum_limit {
            exact_scaled(grid, circuit, &self.calls, &self.status, &self.prior, self.rho_scale)?
        } else {
            let seed = self.mc_seed(circuit);
            mc_scaled(grid, circuit, &self.calls, &self.status, &self.prior, self.config.mc_samples, seed, self.rho_scale)?
                .posterior
        };
        for (&l, p) in grid.circuits[circuit].lines.iter().zip(post) {
            self.posterior[l] = p;
        }
        Ok(())
    }

    fn recompute_all(&mut self, grid: &DistributionGrid) -> Result<(), BeliefError> {
        for c in 0..grid.circuits.len() {
            self.recompute_circuit(grid, c)?;
        }
        Ok(())
    }

    /// Records findings for several lines and recomputes the affected circuits once.
    pub fn observe_in_place(&mut self, grid: &DistributionGrid, findings: &[(usize, Finding)]) -> Result<(), BeliefError> {
        let mut touched: Vec<usize> = Vec::with_capacity(findings.len());
        for &(line, finding) in findings {
            let next = match finding {
                Finding::Intact => LineStatus::ObservedIntact,
                Finding::Damaged => LineStatus::ObservedDamaged,
                Finding::Repaired => LineStatus::Repaired,
            };
            let cur = self.status[line];
            // repaired lines stay repaired; a repair needs a prior damage sighting unless both arrive together
            let new = match (cur, next) {
                (LineStatus::Repaired, _) => LineStatus::Repaired,
                (LineStatus::ObservedDamaged, LineStatus::ObservedIntact) => LineStatus::ObservedDamaged,
                _ => next,
            };
            if new != cur {
                self.status[line] = new;
                let c = grid.lines[line].circuit;
                if !touched.contains(&c) {
                    touched.push(c);
                }
            }
        }
        for c in touched {
            self.recompute_circuit(grid, c)?;
        }
        Ok(())
    }

    /// Belief after a crew inspects `line`.
    pub fn update_on_observation(&self, grid: &DistributionGrid, line: usize, damaged: bool) -> Result<Self, BeliefError> {
        let mut b = self.clone();
        b.observe_in_place(grid, &[(line, if damaged { Finding::Damaged } else { Finding::Intact })])?;
        Ok(b)
    }

    /// Belief after a damaged line is fixed.
    pub fn repair(&self, grid: &DistributionGrid, line: usize) -> Result<Self, BeliefError> {
        if self.status[line] != LineStatus::ObservedDamaged {
            return Err(BeliefError::RepairBeforeDamage { line: grid.lines[line].id.clone() });
        }
        let mut b = self.clone();
        b.observe_in_place(grid, &[(line, Finding::Repaired)])?;
        Ok(b)
    }

    /// Merges newly received calls. Calls are never withdrawn.
    pub fn update_on_calls(&self, grid: &DistributionGrid, new_calls: &[bool]) -> Result<Self, BeliefError> {
        let mut b = self.clone();
        b.merge_calls_in_place(grid, new_calls, self.rho_scale)?;
        Ok(b)
    }

    pub(crate) fn merge_calls_in_place(
        &mut self,
        grid: &DistributionGrid,
        new_calls: &[bool],
        rho_scale: f64,
    ) -> Result<(), BeliefError> {
        check_calls_len(grid, new_calls)?;
        if let Some(k) = (0..new_calls.len()).find(|&k| self.calls[k] && !new_calls[k]) {
            return Err(BeliefError::CallWithdrawn { node: grid.customers[k].node });
        }
        let changed = new_calls != self.calls.as_slice() || rho_scale != self.rho_scale;
        if changed {
            self.calls.copy_from_slice(new_calls);
            self.rho_scale = rho_scale;
            self.recompute_all(grid)?;
        }
        Ok(())
    }

    pub(crate) fn record_traversal(&mut self, t: Traversal) {
        self.trajectory.push(t);
    }
}
