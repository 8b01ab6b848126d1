//! Replicated experiments, sweeps, aggregation and result files.

mod output;
mod spec;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{Agent, AlgoError, VariantConfig};
use crate::environments::{EnvError, NoiseConfig, ProblemInstance, RoundNoise};
use crate::numerics::{derive_seed, rng_from_seed};

pub use output::{file_stem, read_trace_csv, write_outputs, OutputFiles, TraceRow, SUMMARY_FILE};
pub use spec::{apply_override, correlation_for, ExperimentSpec, InstanceSpec, Sweep};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Algorithm(#[from] AlgoError),
    #[error(transparent)]
    Environment(#[from] EnvError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// Seed-path tags. Instance, round and history streams depend only on the
// replication, so every algorithm and sweep point sees the same draws.
const TAG_INSTANCE: u64 = 1;
const TAG_ROUND: u64 = 2;
const TAG_HISTORY: u64 = 3;
const TAG_AGENT: u64 = 4;

/// Cumulative regret of one algorithm at one sweep point, over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub algorithm: String,
    pub sweep_axis: Option<String>,
    pub sweep_value: Option<f64>,
    /// `per_replication[i][t]` is the regret accumulated through round `t+1`.
    pub per_replication: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Half-width of the 95% normal interval for the mean; zero with a single
    /// replication.
    pub ci_half: Vec<f64>,
    /// Set when the interval is meaningless (one replication).
    pub single_replication: bool,
    pub wall_ms: u128,
}

impl RegretTrace {
    pub fn from_replications(
        algorithm: String,
        sweep_axis: Option<String>,
        sweep_value: Option<f64>,
        per_replication: Vec<Vec<f64>>,
        wall_ms: u128,
    ) -> Self {
        let (mean, ci_half) = aggregate(&per_replication);
        Self {
            algorithm,
            sweep_axis,
            sweep_value,
            single_replication: per_replication.len() == 1,
            per_replication,
            mean,
            ci_half,
            wall_ms,
        }
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_ci_half(&self) -> f64 {
        self.ci_half.last().copied().unwrap_or(0.0)
    }

    /// `algorithm` or `algorithm@axis=value`; the legend label of the trace.
    pub fn series_name(&self) -> String {
        match (&self.sweep_axis, self.sweep_value) {
            (Some(axis), Some(v)) => format!("{}@{}={}", self.algorithm, axis, v),
            _ => self.algorithm.clone(),
        }
    }
}

/// Per-round mean and 1.96·sd/√R across equal-length traces.
pub fn aggregate(traces: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let r = traces.len();
    let horizon = traces.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; horizon];
    let mut half = vec![0.0; horizon];
    if r == 0 {
        return (mean, half);
    }
    for t in 0..horizon {
        let m = traces.iter().map(|tr| tr[t]).sum::<f64>() / r as f64;
        mean[t] = m;
        if r > 1 {
            let var = traces.iter().map(|tr| (tr[t] - m).powi(2)).sum::<f64>() / (r - 1) as f64;
            half[t] = 1.96 * var.sqrt() / (r as f64).sqrt();
        }
    }
    (mean, half)
}

/// Everything a run produced, in spec order: sweep points outer, algorithms
/// inner. Algorithms the sweep does not touch appear once, before the sweep.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub traces: Vec<RegretTrace>,
}

impl ExperimentResult {
    pub fn trace(&self, series: &str) -> Option<&RegretTrace> {
        self.traces.iter().find(|t| t.series_name() == series)
    }
}

struct Job {
    algo_index: usize,
    sweep_index: Option<usize>,
    config: VariantConfig,
    noise: NoiseConfig,
}

fn plan(spec: &ExperimentSpec) -> Vec<Job> {
    let base_noise = spec.instance.noise();
    let mut jobs = Vec::new();
    match &spec.sweep {
        None => {
            for (i, a) in spec.algorithms.iter().enumerate() {
                jobs.push(Job {
                    algo_index: i,
                    sweep_index: None,
                    config: a.clone(),
                    noise: base_noise,
                });
            }
        }
        Some(sweep) => {
            for (i, a) in spec.algorithms.iter().enumerate() {
                if !sweep.affects(a) {
                    jobs.push(Job {
                        algo_index: i,
                        sweep_index: None,
                        config: a.clone(),
                        noise: base_noise,
                    });
                }
            }
            for s in 0..sweep.len() {
                for (i, a) in spec.algorithms.iter().enumerate() {
                    if sweep.affects(a) {
                        let (config, noise) = sweep.apply(s, a, base_noise);
                        jobs.push(Job {
                            algo_index: i,
                            sweep_index: Some(s),
                            config,
                            noise,
                        });
                    }
                }
            }
        }
    }
    jobs
}

/// Seed of the problem instance for replication `rep`.
pub fn instance_seed(spec: &ExperimentSpec, rep: usize) -> u64 {
    if spec.instance.fixed_instance {
        derive_seed(spec.master_seed, &[TAG_INSTANCE])
    } else {
        derive_seed(spec.master_seed, &[TAG_INSTANCE, rep as u64])
    }
}

/// Cumulative regret of one algorithm over one replication.
pub fn run_replication(
    spec: &ExperimentSpec,
    config: &VariantConfig,
    noise: NoiseConfig,
    algo_index: usize,
    sweep_index: Option<usize>,
    rep: usize,
) -> Result<Vec<f64>, HarnessError> {
    let master = spec.master_seed;
    let env: ProblemInstance = spec.instance.build(instance_seed(spec, rep), noise)?;
    let mut history_rng = rng_from_seed(derive_seed(master, &[TAG_HISTORY, rep as u64]));
    let mut agent = Agent::new(&env, config, &mut history_rng)?;
    let sweep_tag = sweep_index.map_or(u64::MAX, |s| s as u64);
    let mut extra_rng = rng_from_seed(derive_seed(
        master,
        &[TAG_AGENT, algo_index as u64, sweep_tag, rep as u64],
    ));
    let q = env.num_feedback();
    let mut total = 0.0;
    let mut cum = Vec::with_capacity(spec.horizon);
    for round in 0..spec.horizon {
        let mut round_rng =
            rng_from_seed(derive_seed(master, &[TAG_ROUND, rep as u64, round as u64]));
        let actions = env.action_set(&mut round_rng);
        let shared = RoundNoise::draw(&mut round_rng, q);
        let out = agent.step_with(&env, &actions, &shared, &mut extra_rng)?;
        total += out.regret;
        cum.push(total);
    }
    Ok(cum)
}

/// Runs every (algorithm, sweep point) over all replications. Replications
/// run in parallel on at most `threads` workers (all cores when `None`); the
/// results do not depend on the thread count.
pub fn run_experiment(
    spec: &ExperimentSpec,
    threads: Option<usize>,
) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let threads = threads.or(spec.threads);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Config(format!("threads: {e}")))?;
    let jobs = plan(spec);
    let axis = spec.sweep.as_ref().map(|s| s.axis_name().to_string());
    let mut traces = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let start = Instant::now();
        let reps: Result<Vec<Vec<f64>>, HarnessError> = pool.install(|| {
            (0..spec.replications)
                .into_par_iter()
                .map(|rep| {
                    run_replication(
                        spec,
                        &job.config,
                        job.noise,
                        job.algo_index,
                        job.sweep_index,
                        rep,
                    )
                })
                .collect()
        });
        let wall_ms = start.elapsed().as_millis();
        let sweep_value = match (&spec.sweep, job.sweep_index) {
            (Some(s), Some(i)) => Some(s.value(i)),
            _ => None,
        };
        traces.push(RegretTrace::from_replications(
            spec.algorithms[job.algo_index].name(),
            job.sweep_index.and(axis.clone()),
            sweep_value,
            reps?,
            wall_ms,
        ));
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        traces,
    })
}
