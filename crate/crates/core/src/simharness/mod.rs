//! Synchronous round-based execution with message accounting, a simulated
//! clock, straggler injection and an optional TCP transport.
//!
//! The simulated clock counts integer nanoseconds. Under synchrony a round
//! lasts as long as its slowest node, so with stragglers enabled every
//! consensus round costs the configured delay, whichever node is the victim.

mod socket;

pub use socket::{
    encode_frame, node_error_path, node_frame_path, node_state_path, read_frame, run_socket_node,
    run_socket_node_to_dir, socket_transport_roundtrip, threaded_transport_check, NodeConfig, NodeLinks, NodeReport,
    RoundtripReport, RoundtripSpec, SocketMesh, DEFAULT_TIMEOUT, FRAME_MAGIC,
};

use std::fmt::Write as _;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{centralized_oi, f_dot, ground_truth, s_dot, sa_dot, seq_dist_pm, seq_pm, EstimatorState};
use crate::config::{AlgorithmName, DataSource, ExperimentConfig, TopologySpec};
use crate::consensus::{run_rounds, ConsensusOutcome, ConsensusSchedule, Exchange, Gossip, InProcess, Support};
use crate::datagen::{
    center_columns, load_matrix, partition, partition_shuffled, random_orthonormal, synthetic_dataset, PartitionMode,
    PartitionedDataset, SpectrumSpec,
};
use crate::exec::Execution;
use crate::linalg::{subspace_error, DenseMatrix};
use crate::netgraph::{gen_complete, gen_erdos_renyi, gen_ring, gen_star, metropolis_weights, Topology, WeightMatrix};
use crate::trace::{fmt_f64, RunTrace, TraceRow};
use crate::{Error, Result};

/// One randomly chosen node per consensus round is slowed down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StragglerSpec {
    pub enabled: bool,
    pub delay_seconds: f64,
    pub seed: u64,
}

impl Default for StragglerSpec {
    fn default() -> Self {
        StragglerSpec {
            enabled: false,
            delay_seconds: 0.01,
            seed: 0,
        }
    }
}

impl StragglerSpec {
    pub fn on(delay_seconds: f64, seed: u64) -> Self {
        StragglerSpec {
            enabled: true,
            delay_seconds,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TransportSpec {
    #[default]
    InProcess,
    /// Node `i` listens on `host:base_port + i` (any free port when 0).
    Sockets { host: String, base_port: u16 },
}

fn to_nanos(seconds: f64) -> u64 {
    (seconds * 1e9).round() as u64
}

/// A network of nodes on a fixed weight matrix, with counters and a clock.
pub struct SimNetwork {
    w: WeightMatrix,
    support: Support,
    exchange: Box<dyn Exchange>,
    exec: Execution,
    straggler: StragglerSpec,
    seconds_per_flop: f64,
    clock_ns: u64,
    rounds_so_far: u64,
    p2p: Vec<u64>,
    straggler_hits: Vec<u64>,
}

impl std::fmt::Debug for SimNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimNetwork")
            .field("nodes", &self.w.size())
            .field("rounds_so_far", &self.rounds_so_far)
            .field("clock_ns", &self.clock_ns)
            .finish()
    }
}

impl SimNetwork {
    pub fn in_process(w: WeightMatrix, exec: Execution) -> Self {
        Self::with_exchange(w, Box::new(InProcess { exec }), exec)
    }

    pub fn with_exchange(w: WeightMatrix, exchange: Box<dyn Exchange>, exec: Execution) -> Self {
        let n = w.size();
        SimNetwork {
            support: Support::of(&w),
            w,
            exchange,
            exec,
            straggler: StragglerSpec::default(),
            seconds_per_flop: 0.0,
            clock_ns: 0,
            rounds_so_far: 0,
            p2p: vec![0; n],
            straggler_hits: vec![0; n],
        }
    }

    /// Builds the network for `topology` with Metropolis weights.
    pub fn build(topology: &Topology, transport: &TransportSpec, exec: Execution, timeout: Duration) -> Result<Self> {
        let w = metropolis_weights(topology);
        let exchange: Box<dyn Exchange> = match transport {
            TransportSpec::InProcess => Box::new(InProcess { exec }),
            TransportSpec::Sockets { host, base_port } => {
                Box::new(SocketMesh::connect(topology, host, *base_port, timeout)?)
            }
        };
        Ok(Self::with_exchange(w, exchange, exec))
    }

    pub fn with_straggler(mut self, straggler: StragglerSpec) -> Self {
        self.straggler = straggler;
        self
    }

    pub fn with_seconds_per_flop(mut self, seconds_per_flop: f64) -> Self {
        self.seconds_per_flop = seconds_per_flop;
        self
    }

    /// Cumulative sends per node.
    pub fn p2p(&self) -> &[u64] {
        &self.p2p
    }

    /// How often each node was the straggler.
    pub fn straggler_hits(&self) -> &[u64] {
        &self.straggler_hits
    }

    pub fn clock_nanos(&self) -> u64 {
        self.clock_ns
    }

    pub fn rounds_so_far(&self) -> u64 {
        self.rounds_so_far
    }

    fn straggle(&mut self, round: u64) {
        if !self.straggler.enabled {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.straggler.seed);
        rng.set_stream(round);
        let victim = rng.random_range(0..self.w.size());
        self.straggler_hits[victim] += 1;
        self.clock_ns += to_nanos(self.straggler.delay_seconds);
    }
}

impl Gossip for SimNetwork {
    fn weights(&self) -> &WeightMatrix {
        &self.w
    }

    fn consensus(&mut self, initial: Vec<DenseMatrix>, rounds: u32) -> Result<ConsensusOutcome> {
        let first = self.rounds_so_far;
        let out = run_rounds(self.exchange.as_mut(), &self.w, &self.support, initial, rounds, first)?;
        for k in 0..u64::from(rounds) {
            self.straggle(first + k);
        }
        self.rounds_so_far += u64::from(rounds);
        for (total, sent) in self.p2p.iter_mut().zip(&out.messages) {
            *total += sent;
        }
        Ok(out)
    }

    fn charge_compute(&mut self, flops: f64) {
        self.clock_ns += to_nanos(flops * self.seconds_per_flop);
    }

    fn simulated_seconds(&self) -> f64 {
        self.clock_ns as f64 / 1e9
    }

    fn execution(&self) -> Execution {
        self.exec
    }
}

/// Closed-form send counts for a sample-wise run.
#[derive(Debug, Clone, PartialEq)]
pub struct P2pCounts {
    pub per_node: Vec<u64>,
    pub mean: f64,
}

/// `deg(i) * sum_{t < outer_iters} schedule.eval(t)` per node.
pub fn p2p_expected(topology: &Topology, schedule: &ConsensusSchedule, outer_iters: usize) -> P2pCounts {
    let rounds = schedule.total_rounds(outer_iters);
    let per_node: Vec<u64> = topology.degrees().iter().map(|&k| k as u64 * rounds).collect();
    let mean = per_node.iter().sum::<u64>() as f64 / per_node.len().max(1) as f64;
    P2pCounts { per_node, mean }
}

pub fn build_topology(cfg: &ExperimentConfig) -> Result<Topology> {
    let cfg = &cfg.network;
    match &cfg.topology {
        TopologySpec::ErdosRenyi { nodes, p } => {
            let seed = cfg
                .seed
                .ok_or_else(|| Error::config("network.seed", "required field is missing"))?;
            gen_erdos_renyi(*nodes, *p, seed)
        }
        TopologySpec::Ring { nodes } => gen_ring(*nodes),
        TopologySpec::Star { nodes } => gen_star(*nodes),
        TopologySpec::Complete { nodes } => gen_complete(*nodes),
        TopologySpec::File { path } => Topology::load(path),
    }
}

pub fn build_dataset(cfg: &ExperimentConfig, nodes: usize) -> Result<PartitionedDataset> {
    let data = &cfg.data;
    let mode = data.partition;
    match &data.source {
        DataSource::Synthetic {
            dim,
            gap,
            top,
            tail_ratio,
            samples_per_node,
        } => {
            let spec = SpectrumSpec {
                d: *dim,
                r: cfg.algorithm.r,
                gap: *gap,
                top: *top,
                tail_ratio: *tail_ratio,
            };
            let ds = synthetic_dataset(&spec, *samples_per_node, nodes, mode, data.seed, data.center)?;
            if data.shuffle {
                partition_shuffled(&ds.global(), nodes, data.seed)
            } else {
                Ok(ds)
            }
        }
        DataSource::File { path } => {
            let mut x = load_matrix(path)?;
            if data.center {
                x = center_columns(&x);
            }
            if data.shuffle {
                partition_shuffled(&x, nodes, data.seed)
            } else {
                partition(&x, mode, nodes, data.seed)
            }
        }
    }
}

/// Headline numbers of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: AlgorithmName,
    pub nodes: usize,
    pub edges: usize,
    pub outer_iters: usize,
    pub final_mean_error: f64,
    pub final_max_error: f64,
    pub p2p_total: u64,
    pub p2p_mean: f64,
    pub simulated_seconds: f64,
    /// `lambda_{r+1} / lambda_r` of the data covariance.
    pub eigengap: f64,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "algorithm = {}", self.algorithm.as_str());
        let _ = writeln!(s, "nodes = {}", self.nodes);
        let _ = writeln!(s, "edges = {}", self.edges);
        let _ = writeln!(s, "outer_iters = {}", self.outer_iters);
        let _ = writeln!(s, "final_mean_error = {}", fmt_f64(self.final_mean_error));
        let _ = writeln!(s, "final_max_error = {}", fmt_f64(self.final_max_error));
        let _ = writeln!(s, "p2p_total = {}", self.p2p_total);
        let _ = writeln!(s, "p2p_mean = {}", fmt_f64(self.p2p_mean));
        let _ = writeln!(s, "simulated_seconds = {}", fmt_f64(self.simulated_seconds));
        let _ = writeln!(s, "eigengap = {}", fmt_f64(self.eigengap));
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub state: Option<EstimatorState>,
    pub summary: Summary,
    /// Straggler victim counts per node.
    pub straggler_hits: Vec<u64>,
}

fn check_partition(cfg: &ExperimentConfig, want: PartitionMode) -> Result<()> {
    if cfg.data.partition != want {
        let name = cfg.algorithm.name.as_str();
        return Err(Error::config(
            "data.partition",
            format!("{name} needs a {want:?} partition"),
        ));
    }
    Ok(())
}

/// Executes the configured estimator and records its trace.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let a = &cfg.algorithm;
    match a.name {
        AlgorithmName::FDot => check_partition(cfg, PartitionMode::FeatureWise)?,
        AlgorithmName::SDot | AlgorithmName::SaDot | AlgorithmName::SeqDistPm => {
            check_partition(cfg, PartitionMode::SampleWise)?
        }
        AlgorithmName::Oi | AlgorithmName::SeqPm => {}
    }
    if a.name == AlgorithmName::SDot && !matches!(a.schedule, ConsensusSchedule::Fixed(_)) {
        return Err(Error::config(
            "algorithm.schedule",
            "s-dot takes a fixed schedule; use sa-dot",
        ));
    }
    let topology = build_topology(cfg)?;
    let n = topology.node_count();
    let dataset = build_dataset(cfg, n)?;
    let d = dataset.global_dims.0;
    if a.r >= d {
        return Err(Error::config(
            "algorithm.r",
            format!("must be below the data dimension {d}"),
        ));
    }
    let q_init = random_orthonormal(d, a.r, a.seed)?;
    let m = dataset.global_covariance();
    let (_, lambda) = ground_truth(&m, a.r)?;
    let eigengap = lambda[a.r] / lambda[a.r - 1];

    let h = &cfg.harness;
    let mut net = SimNetwork::build(
        &topology,
        &h.transport,
        h.execution,
        Duration::from_millis(h.timeout_ms),
    )?
    .with_straggler(h.straggler)
    .with_seconds_per_flop(h.seconds_per_flop);

    let (trace, state) = match a.name {
        AlgorithmName::Oi => {
            let run = centralized_oi(&m, &q_init, a.outer_iters, a.tol, true)?;
            let mut trace = RunTrace::default();
            for (t, &e) in run.errors.iter().enumerate() {
                trace.push(
                    TraceRow {
                        t,
                        consensus_rounds: 0,
                        mean_error: e,
                        max_error: e,
                        mean_drift: 0.0,
                        p2p: vec![0; n],
                        simulated_seconds: 0.0,
                        wall_seconds: 0.0,
                    },
                    0.0,
                );
            }
            (trace, None)
        }
        AlgorithmName::SeqPm => {
            let (truth, _) = ground_truth(&m, a.r)?;
            let basis = seq_pm(&m, &q_init, a.iters_per_vector, a.tol.unwrap_or(1e-10))?;
            let mut trace = RunTrace::default();
            for (t, q) in [(0, &q_init), (1, &basis)] {
                let e = subspace_error(&truth, q)?;
                trace.push(
                    TraceRow {
                        t,
                        consensus_rounds: 0,
                        mean_error: e,
                        max_error: e,
                        mean_drift: 0.0,
                        p2p: vec![0; n],
                        simulated_seconds: 0.0,
                        wall_seconds: 0.0,
                    },
                    0.0,
                );
            }
            (trace, None)
        }
        AlgorithmName::SDot => {
            let ConsensusSchedule::Fixed(rounds) = a.schedule else {
                unreachable!("checked above")
            };
            let est = s_dot(&dataset, &mut net, rounds, &q_init, a.outer_iters, a.tol)?;
            (est.trace, Some(est.state))
        }
        AlgorithmName::SaDot => {
            let est = sa_dot(&dataset, &mut net, a.schedule, &q_init, a.outer_iters, a.tol)?;
            (est.trace, Some(est.state))
        }
        AlgorithmName::FDot => {
            let est = f_dot(&dataset, &mut net, a.schedule, &q_init, a.outer_iters, a.qr_rounds)?;
            (est.trace, Some(est.state))
        }
        AlgorithmName::SeqDistPm => {
            let est = seq_dist_pm(&dataset, &mut net, &q_init, a.schedule.eval(0), a.iters_per_vector)?;
            (est.trace, Some(est.state))
        }
    };

    let last = trace
        .last()
        .cloned()
        .ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    let summary = Summary {
        algorithm: a.name,
        nodes: n,
        edges: topology.edge_count(),
        outer_iters: last.t,
        final_mean_error: last.mean_error,
        final_max_error: last.max_error,
        p2p_total: last.p2p.iter().sum(),
        p2p_mean: last.p2p_mean(),
        simulated_seconds: last.simulated_seconds,
        eigengap,
    };
    Ok(RunOutput {
        trace,
        state,
        summary,
        straggler_hits: net.straggler_hits().to_vec(),
    })
}
