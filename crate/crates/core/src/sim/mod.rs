//! Packet-level discrete-event simulator of the chain under the same
//! channel abstraction the analytic model uses: Poisson sources,
//! exponential service, delta-lagged carrier sensing with a 2-delta
//! vulnerable window, reliable instantaneous ACKs, beta-bounded
//! retransmission, encode-on-arrival XOR coding with a non-preemptive
//! priority coded queue, and partner-based decoding.

mod engine;
mod stats;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ValidatedConfig;

use engine::Engine;
pub use stats::{mean_and_ci95, mix_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Simulated seconds per replication.
    pub horizon_s: f64,
    /// Throughput and queue statistics start after this many seconds.
    pub warmup_s: f64,
    /// Master seed; replication seeds derive from it via `mix_seed`.
    pub seed: u64,
    /// Runtime instability guard: error out when any queue exceeds this.
    pub queue_cap: usize,
    /// Decode-history capacity per node and flow; oldest ids evicted.
    pub history_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon_s: 170.0,
            warmup_s: 10.0,
            seed: 42,
            queue_cap: 100_000,
            history_cap: 100_000,
        }
    }
}

impl SimOptions {
    pub fn check(&self) -> Result<()> {
        if !self.horizon_s.is_finite() || !self.warmup_s.is_finite() || self.warmup_s < 0.0 {
            return Err(Error::Config(
                "simulation times must be finite and >= 0".into(),
            ));
        }
        if self.horizon_s <= self.warmup_s {
            return Err(Error::Config(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon_s, self.warmup_s
            )));
        }
        if self.queue_cap == 0 || self.history_cap == 0 {
            return Err(Error::Config("queue and history caps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub attempts: u64,
    pub successes: u64,
    pub collisions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkUsage {
    pub from: usize,
    pub to: usize,
    pub attempts: u64,
    pub successes: u64,
    pub collisions: u64,
}

/// Full-horizon packet accounting, per flow (index 0: N1 -> Nk).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTotals {
    pub generated: [u64; 2],
    pub delivered: [u64; 2],
    pub dropped: [u64; 2],
    pub undecodable: [u64; 2],
    pub in_queue: [u64; 2],
    pub in_flight: [u64; 2],
}

impl SimTotals {
    /// Exact conservation at the horizon: every generated packet is
    /// delivered, dropped after beta attempts, discarded undecodable, or
    /// still queued/in flight.
    pub fn conserved(&self) -> bool {
        (0..2).all(|f| {
            self.generated[f]
                == self.delivered[f]
                    + self.dropped[f]
                    + self.undecodable[f]
                    + self.in_queue[f]
                    + self.in_flight[f]
        })
    }

    fn add(&mut self, other: &SimTotals) {
        for f in 0..2 {
            self.generated[f] += other.generated[f];
            self.delivered[f] += other.delivered[f];
            self.dropped[f] += other.dropped[f];
            self.undecodable[f] += other.undecodable[f];
            self.in_queue[f] += other.in_queue[f];
            self.in_flight[f] += other.in_flight[f];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Measured throughput: delivered intended packets/second at the
    /// destinations, post warm-up, averaged over replications.
    pub theta_hat: f64,
    /// 95% Student-t half-width over replications (0 for a single run).
    pub ci_half_width: f64,
    pub replications: usize,
    /// Per-replication measured throughput.
    pub theta_reps: Vec<f64>,
    /// Per-link counters, summed over replications.
    pub link_stats: Vec<LinkUsage>,
    /// Time-averaged queue length per node (post warm-up), averaged over
    /// replications.
    pub mean_queue: Vec<f64>,
    /// Packet accounting summed over replications.
    pub totals: SimTotals,
}

impl SimResult {
    pub fn link(&self, from: usize, to: usize) -> Option<&LinkUsage> {
        self.link_stats
            .iter()
            .find(|l| l.from == from && l.to == to)
    }
}

/// Runs one replication.
pub fn simulate(cfg: &ValidatedConfig, opts: &SimOptions) -> Result<SimResult> {
    Engine::new(cfg, opts, None)?.run()
}

/// Runs one replication and writes the event trace, one event per line:
/// `time_s event_type node packet_id flow kind attempt outcome`.
pub fn simulate_traced(
    cfg: &ValidatedConfig,
    opts: &SimOptions,
    trace: &mut dyn Write,
) -> Result<SimResult> {
    Engine::new(cfg, opts, Some(trace))?.run()
}

/// Runs `n_reps` independent replications with seeds derived from the
/// master seed and aggregates them: mean throughput with a 95% Student-t
/// interval, summed counters, averaged queue lengths. Replications execute
/// in parallel; the aggregate is identical to a serial run.
pub fn run_replications(
    cfg: &ValidatedConfig,
    opts: &SimOptions,
    n_reps: usize,
) -> Result<SimResult> {
    if n_reps < 1 {
        return Err(Error::Config("n_reps must be >= 1".into()));
    }
    let runs: Vec<(u64, Result<SimResult>)> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let seed = mix_seed(opts.seed, rep);
            let rep_opts = SimOptions { seed, ..*opts };
            (seed, simulate(cfg, &rep_opts))
        })
        .collect();

    let failed: Vec<String> = runs
        .iter()
        .filter_map(|(seed, r)| r.as_ref().err().map(|e| format!("seed {seed}: {e}")))
        .collect();
    if !failed.is_empty() {
        return Err(Error::Simulation(format!(
            "{} of {} replications failed: {}",
            failed.len(),
            n_reps,
            failed.join("; ")
        )));
    }

    let results: Vec<SimResult> = runs.into_iter().map(|(_, r)| r.unwrap()).collect();
    if results.len() == 1 {
        return Ok(results.into_iter().next().unwrap());
    }

    let theta_reps: Vec<f64> = results.iter().map(|r| r.theta_hat).collect();
    let (mean, half) = mean_and_ci95(&theta_reps);

    let mut links: std::collections::BTreeMap<(usize, usize), LinkStats> = Default::default();
    let mut totals = SimTotals::default();
    let nodes = results[0].mean_queue.len();
    let mut mean_queue = vec![0.0; nodes];
    for r in &results {
        totals.add(&r.totals);
        for l in &r.link_stats {
            let e = links.entry((l.from, l.to)).or_default();
            e.attempts += l.attempts;
            e.successes += l.successes;
            e.collisions += l.collisions;
        }
        for (acc, q) in mean_queue.iter_mut().zip(&r.mean_queue) {
            *acc += q / results.len() as f64;
        }
    }

    Ok(SimResult {
        theta_hat: mean,
        ci_half_width: half,
        replications: results.len(),
        theta_reps,
        link_stats: links
            .into_iter()
            .map(|((from, to), s)| LinkUsage {
                from,
                to,
                attempts: s.attempts,
                successes: s.successes,
                collisions: s.collisions,
            })
            .collect(),
        mean_queue,
        totals,
    })
}
