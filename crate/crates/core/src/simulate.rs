//! Slotted broadcast SIS on a realized multi-layer graph.
//!
//! Each slot is split into `1/Δt` synchronous micro-steps. In a micro-step an
//! informed node forgets with probability `Δt` and an uninformed node with
//! `j` informed strand-neighbors is informed with probability
//! `1 − (1 − αΔt)^j`, matching the mean-field rates to first order in `Δt`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree::StrandId;
use crate::error::{invalid, Result};
use crate::geometry::MultiLayerGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub slots: usize,
    pub burn_in: usize,
    pub trials: usize,
    pub seed: u64,
    /// Micro-step length as a fraction of a slot.
    pub dt: f64,
    pub initial_fraction: f64,
    /// Restarts allowed per trial when the process dies during burn-in.
    pub max_restarts: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slots: 300,
            burn_in: 100,
            trials: 10,
            seed: 1,
            dt: 0.05,
            initial_fraction: 0.5,
            max_restarts: 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.slots {
            return Err(invalid(format!(
                "burn-in {} must be shorter than the run ({} slots)",
                self.burn_in, self.slots
            )));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(invalid(format!(
                "micro-step dt = {} outside (0, 1]",
                self.dt
            )));
        }
        if self.trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        if !(0.0..=1.0).contains(&self.initial_fraction) {
            return Err(invalid(format!(
                "initial informed fraction {} outside [0, 1]",
                self.initial_fraction
            )));
        }
        Ok(())
    }

    fn micro_steps(&self) -> usize {
        (1.0 / self.dt).round().max(1.0) as usize
    }
}

/// One simulated run: per-trial informed-fraction trajectories indexed by
/// slot (`0` is the initial state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub strand: StrandId,
    pub alpha: f64,
    pub participants: usize,
    pub burn_in: usize,
    pub trajectories: Vec<Vec<f64>>,
    /// Trials restarted because the process died during burn-in.
    pub restarts: usize,
    /// Trials still extinct after exhausting their restarts.
    pub extinct_trials: usize,
}

impl SimResult {
    /// Trajectory averaged over trials.
    pub fn mean_trajectory(&self) -> Vec<f64> {
        let n = self.trajectories.len() as f64;
        let len = self.trajectories.iter().map(Vec::len).min().unwrap_or(0);
        (0..len)
            .map(|s| self.trajectories.iter().map(|t| t[s]).sum::<f64>() / n)
            .collect()
    }

    /// CSV `slot,informed_fraction` of the trial-averaged trajectory.
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "slot,informed_fraction")?;
        for (s, v) in self.mean_trajectory().iter().enumerate() {
            writeln!(out, "{s},{v}")?;
        }
        Ok(())
    }
}

/// Time average over the post-burn-in slots of each trial, then mean and
/// standard error across trials.
pub fn estimate_steady_state(result: &SimResult) -> Result<(f64, f64)> {
    let per_trial: Vec<f64> = result
        .trajectories
        .iter()
        .map(|t| {
            let window = t.get(result.burn_in + 1..).unwrap_or(&[]);
            if window.is_empty() {
                Err(invalid(format!(
                    "no slots after burn-in {} (trajectory has {} slots)",
                    result.burn_in,
                    t.len().saturating_sub(1)
                )))
            } else {
                Ok(window.iter().sum::<f64>() / window.len() as f64)
            }
        })
        .collect::<Result<_>>()?;
    if per_trial.is_empty() {
        return Err(invalid("no trials to average"));
    }
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / n;
    let stderr = if per_trial.len() > 1 {
        let var = per_trial.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

/// Nodes and edges that carry one strand, in compact (CSR) form.
struct StrandGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl StrandGraph {
    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Participating nodes and edges per strand:
/// - `Intra(m)`: layer-`m` nodes and the links among them;
/// - `Inter(m, n)`: layer-`m` and layer-`n` nodes, linked when a layer-`m`
///   endpoint has the other endpoint within its own range;
/// - `Combined`: every node and every link.
fn strand_graph(graph: &MultiLayerGraph, strand: StrandId) -> Result<StrandGraph> {
    strand.check(graph.layer_count())?;
    let member = |node: usize| -> bool {
        let l = graph.layer_of(node);
        match strand {
            StrandId::Intra(m) => l == m,
            StrandId::Inter(m, n) => l == m || l == n,
            StrandId::Combined => true,
        }
    };
    let nodes: Vec<usize> = (0..graph.node_count()).filter(|&v| member(v)).collect();
    let mut local = vec![u32::MAX; graph.node_count()];
    for (i, &v) in nodes.iter().enumerate() {
        local[v] = i as u32;
    }
    let mut offsets = Vec::with_capacity(nodes.len() + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for &v in &nodes {
        let lv = graph.layer_of(v);
        for nb in graph.neighbors(v) {
            let u = nb.node as usize;
            if local[u] == u32::MAX {
                continue;
            }
            let keep = match strand {
                StrandId::Intra(_) | StrandId::Combined => true,
                StrandId::Inter(m, _) => {
                    let lu = graph.layer_of(u);
                    let rm = graph.ranges()[m];
                    (lv == m || lu == m) && nb.dist <= rm
                }
            };
            if keep {
                targets.push(local[u]);
            }
        }
        offsets.push(targets.len());
    }
    Ok(StrandGraph { offsets, targets })
}

/// Runs `config.trials` independent trials of the slotted SIS process for
/// one strand. Deterministic in `config.seed`; trials may run in parallel.
pub fn run_sis(
    graph: &MultiLayerGraph,
    strand: StrandId,
    alpha: f64,
    config: &SimConfig,
) -> Result<SimResult> {
    config.validate()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!(
            "spreading rate alpha = {alpha} outside [0, 1]"
        )));
    }
    let sub = strand_graph(graph, strand)?;
    if sub.len() == 0 {
        return Err(invalid(format!(
            "strand {strand} has no participating nodes"
        )));
    }
    let max_degree = (0..sub.len())
        .map(|i| sub.neighbors(i).len())
        .max()
        .unwrap_or(0);
    let stay_uninformed = 1.0 - alpha * config.dt;
    let infect_prob: Vec<f64> = (0..=max_degree)
        .map(|j| 1.0 - stay_uninformed.powi(j as i32))
        .collect();

    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_trial(&sub, &infect_prob, config, trial))
        .collect();

    Ok(SimResult {
        strand,
        alpha,
        participants: sub.len(),
        burn_in: config.burn_in,
        restarts: outcomes.iter().map(|o| o.restarts).sum(),
        extinct_trials: outcomes.iter().filter(|o| o.extinct).count(),
        trajectories: outcomes.into_iter().map(|o| o.trajectory).collect(),
    })
}

struct TrialOutcome {
    trajectory: Vec<f64>,
    restarts: usize,
    extinct: bool,
}

fn trial_rng(seed: u64, trial: usize, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 32) | attempt as u64);
    rng
}

fn run_trial(
    sub: &StrandGraph,
    infect_prob: &[f64],
    config: &SimConfig,
    trial: usize,
) -> TrialOutcome {
    let n = sub.len();
    let micro = config.micro_steps();
    let mut attempt = 0;
    loop {
        let mut rng = trial_rng(config.seed, trial, attempt);
        let mut state: Vec<bool> = (0..n)
            .map(|_| rng.gen::<f64>() < config.initial_fraction)
            .collect();
        let mut next = state.clone();
        let mut informed = state.iter().filter(|&&s| s).count();
        let seeded = informed > 0;
        let mut trajectory = Vec::with_capacity(config.slots + 1);
        trajectory.push(informed as f64 / n as f64);
        let mut died_early = false;
        for slot in 1..=config.slots {
            for _ in 0..micro {
                if informed == 0 {
                    break;
                }
                informed = 0;
                for i in 0..n {
                    let u: f64 = rng.gen();
                    next[i] = if state[i] {
                        u >= config.dt
                    } else {
                        let j = sub
                            .neighbors(i)
                            .iter()
                            .filter(|&&v| state[v as usize])
                            .count();
                        j > 0 && u < infect_prob[j]
                    };
                    informed += next[i] as usize;
                }
                std::mem::swap(&mut state, &mut next);
            }
            trajectory.push(informed as f64 / n as f64);
            if informed == 0 && seeded && slot <= config.burn_in {
                died_early = true;
                break;
            }
        }
        if !died_early {
            return TrialOutcome {
                trajectory,
                restarts: attempt,
                extinct: informed == 0 && seeded,
            };
        }
        if attempt >= config.max_restarts {
            trajectory.resize(config.slots + 1, 0.0);
            return TrialOutcome {
                trajectory,
                restarts: attempt,
                extinct: true,
            };
        }
        attempt += 1;
    }
}
