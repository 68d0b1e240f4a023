//! Experiment configuration: a sectioned `key = value` file (TOML syntax).
//!
//! ```text
//! [data]
//! source = "synthetic"        # or "file" with path = "X.csv"
//! dim = 20
//! gap = 0.7
//! samples_per_node = 500
//! seed = 1
//!
//! [network]
//! topology = "erdos-renyi"    # ring | star | complete | file
//! nodes = 10
//! p = 0.5
//! seed = 2
//!
//! [algorithm]
//! name = "s-dot"              # oi | s-dot | sa-dot | f-dot | seq-pm | seq-dist-pm
//! r = 5
//! outer_iters = 200
//! schedule = "fixed(50)"
//! seed = 3
//!
//! [harness]
//! transport = "inprocess"     # or "sockets"
//! ```
//!
//! Every error names the offending field as `section.key`.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::consensus::ConsensusSchedule;
use crate::datagen::{PartitionMode, SpectrumSpec, TopProfile};
use crate::exec::Execution;
use crate::simharness::{StragglerSpec, TransportSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        dim: usize,
        gap: f64,
        top: TopProfile,
        tail_ratio: f64,
        /// Samples per node (sample-wise) or in total (feature-wise).
        samples_per_node: usize,
    },
    /// CSV or binary matrix, one column per sample.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub partition: PartitionMode,
    /// Seeded column shuffle before a sample-wise split.
    pub shuffle: bool,
    pub center: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    ErdosRenyi { nodes: usize, p: f64 },
    Ring { nodes: usize },
    Star { nodes: usize },
    Complete { nodes: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub topology: TopologySpec,
    /// Required for random topologies.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmName {
    Oi,
    SDot,
    SaDot,
    FDot,
    SeqPm,
    SeqDistPm,
}

impl AlgorithmName {
    pub const ALL: [AlgorithmName; 6] = [
        AlgorithmName::Oi,
        AlgorithmName::SDot,
        AlgorithmName::SaDot,
        AlgorithmName::FDot,
        AlgorithmName::SeqPm,
        AlgorithmName::SeqDistPm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmName::Oi => "oi",
            AlgorithmName::SDot => "s-dot",
            AlgorithmName::SaDot => "sa-dot",
            AlgorithmName::FDot => "f-dot",
            AlgorithmName::SeqPm => "seq-pm",
            AlgorithmName::SeqDistPm => "seq-dist-pm",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    pub r: usize,
    pub outer_iters: usize,
    pub schedule: ConsensusSchedule,
    pub tol: Option<f64>,
    /// Gram consensus rounds per distributed QR (F-DOT).
    pub qr_rounds: u32,
    /// Iterations per basis vector (sequential baselines).
    pub iters_per_vector: usize,
    /// Seed of the shared `Q_init`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub transport: TransportSpec,
    pub straggler: StragglerSpec,
    pub seconds_per_flop: f64,
    pub execution: Execution,
    /// Record real elapsed time in traces (makes CSVs non-reproducible).
    pub wall_clock: bool,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub algorithm: AlgorithmConfig,
    pub harness: HarnessConfig,
}

/// Reads typed values out of one section, naming `section.key` on error.
struct Section<'a> {
    name: &'a str,
    table: Table,
}

impl<'a> Section<'a> {
    fn take(root: &mut Table, name: &'a str) -> Result<Self> {
        let table = match root.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => return Err(Error::config(name, "expected a [section]")),
        };
        Ok(Section { name, table })
    }

    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn raw(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn opt_str(&mut self, key: &str) -> Result<Option<String>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Error::config(self.field(key), format!("expected a string, got {v}"))),
        }
    }

    fn opt_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(v) => Err(Error::config(
                self.field(key),
                format!("expected a non-negative integer, got {v}"),
            )),
        }
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(f)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Error::config(self.field(key), format!("expected a number, got {v}"))),
        }
    }

    fn opt_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => Err(Error::config(
                self.field(key),
                format!("expected true or false, got {v}"),
            )),
        }
    }

    fn missing(&self, key: &str) -> Error {
        Error::config(self.field(key), "required field is missing")
    }

    fn req_str(&mut self, key: &str) -> Result<String> {
        self.opt_str(key)?.ok_or_else(|| self.missing(key))
    }

    fn req_u64(&mut self, key: &str) -> Result<u64> {
        self.opt_u64(key)?.ok_or_else(|| self.missing(key))
    }

    fn req_usize(&mut self, key: &str) -> Result<usize> {
        Ok(self.req_u64(key)? as usize)
    }

    fn req_f64(&mut self, key: &str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            Some(k) => Err(Error::config(self.field(k), "unknown field")),
            None => Ok(()),
        }
    }
}

fn parse_schedule(sec: &mut Section, key: &str) -> Result<Option<ConsensusSchedule>> {
    let field = sec.field(key);
    let parsed = match sec.raw(key) {
        None => return Ok(None),
        Some(Value::Integer(i)) if i > 0 && i <= i64::from(u32::MAX) => ConsensusSchedule::Fixed(i as u32),
        Some(Value::String(s)) => s.parse().map_err(|e: Error| Error::config(&field, e.to_string()))?,
        Some(v) => return Err(Error::config(field, format!("expected a schedule, got {v}"))),
    };
    parsed.validate().map_err(|e| Error::config(field, e.to_string()))?;
    Ok(Some(parsed))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        Self::from_table(root)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative data and topology paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::File { path } = &mut self.data.source {
            fix(path);
        }
        if let TopologySpec::File { path } = &mut self.network.topology {
            fix(path);
        }
    }

    pub fn from_table(mut root: Table) -> Result<Self> {
        let mut data = Section::take(&mut root, "data")?;
        let mut network = Section::take(&mut root, "network")?;
        let mut algorithm = Section::take(&mut root, "algorithm")?;
        let mut harness = Section::take(&mut root, "harness")?;
        if let Some(k) = root.keys().next() {
            return Err(Error::config(k.as_str(), "unknown section"));
        }

        // [algorithm] first: r feeds the synthetic spectrum.
        let name_field = algorithm.field("name");
        let name = algorithm.req_str("name")?;
        let name = AlgorithmName::parse(&name).ok_or_else(|| {
            let known: Vec<&str> = AlgorithmName::ALL.iter().map(|a| a.as_str()).collect();
            Error::config(
                name_field,
                format!("unknown algorithm {name:?}, expected one of {known:?}"),
            )
        })?;
        let r = algorithm.req_usize("r")?;
        if r == 0 {
            return Err(Error::config(algorithm.field("r"), "must be at least 1"));
        }
        let outer_iters = algorithm.req_usize("outer_iters")?;
        let schedule = parse_schedule(&mut algorithm, "schedule")?.unwrap_or(ConsensusSchedule::Fixed(50));
        let tol = algorithm.opt_f64("tol")?;
        if tol.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return Err(Error::config(algorithm.field("tol"), "must be positive"));
        }
        let qr_rounds = algorithm.opt_u64("qr_rounds")?.unwrap_or(50);
        if qr_rounds == 0 || qr_rounds > u64::from(u32::MAX) {
            return Err(Error::config(
                algorithm.field("qr_rounds"),
                "must be between 1 and 2^32-1",
            ));
        }
        let iters_per_vector = algorithm
            .opt_u64("iters_per_vector")?
            .map(|k| k as usize)
            .unwrap_or_else(|| (outer_iters / r).max(1));
        let algorithm_cfg = AlgorithmConfig {
            name,
            r,
            outer_iters,
            schedule,
            tol,
            qr_rounds: qr_rounds as u32,
            iters_per_vector,
            seed: algorithm.req_u64("seed")?,
        };
        algorithm.finish()?;

        let source_field = data.field("source");
        let source = match data.opt_str("source")?.as_deref().unwrap_or("synthetic") {
            "synthetic" => {
                let dim = data.req_usize("dim")?;
                let gap = data.req_f64("gap")?;
                let top = match data.opt_str("top")?.as_deref().unwrap_or("geometric") {
                    "geometric" => TopProfile::DistinctGeometric {
                        ratio: data.opt_f64("top_ratio")?.unwrap_or(0.9),
                    },
                    "equal" => TopProfile::EqualTopR,
                    other => {
                        return Err(Error::config(
                            data.field("top"),
                            format!("expected geometric or equal, got {other:?}"),
                        ))
                    }
                };
                let tail_ratio = data.opt_f64("tail_ratio")?.unwrap_or(0.9);
                SpectrumSpec {
                    d: dim,
                    r,
                    gap,
                    top,
                    tail_ratio,
                }
                .validate()
                .map_err(|e| Error::config(data.field("gap"), e.to_string()))?;
                DataSource::Synthetic {
                    dim,
                    gap,
                    top,
                    tail_ratio,
                    samples_per_node: data.req_usize("samples_per_node")?,
                }
            }
            "file" => DataSource::File {
                path: data.req_str("path")?.into(),
            },
            other => {
                return Err(Error::config(
                    source_field,
                    format!("expected synthetic or file, got {other:?}"),
                ))
            }
        };
        let partition = match data.opt_str("partition")?.as_deref() {
            None if name == AlgorithmName::FDot => PartitionMode::FeatureWise,
            None | Some("sample") => PartitionMode::SampleWise,
            Some("feature") => PartitionMode::FeatureWise,
            Some(other) => {
                return Err(Error::config(
                    data.field("partition"),
                    format!("expected sample or feature, got {other:?}"),
                ))
            }
        };
        let data_cfg = DataConfig {
            source,
            partition,
            shuffle: data.opt_bool("shuffle")?.unwrap_or(false),
            center: data.opt_bool("center")?.unwrap_or(false),
            seed: data.req_u64("seed")?,
        };
        if data_cfg.shuffle && partition == PartitionMode::FeatureWise {
            return Err(Error::config(
                data.field("shuffle"),
                "only applies to sample-wise partitions",
            ));
        }
        data.finish()?;

        let kind_field = network.field("topology");
        let kind = network.req_str("topology")?;
        let topology = match kind.as_str() {
            "erdos-renyi" => TopologySpec::ErdosRenyi {
                nodes: network.req_usize("nodes")?,
                p: network.req_f64("p")?,
            },
            "ring" => TopologySpec::Ring {
                nodes: network.req_usize("nodes")?,
            },
            "star" => TopologySpec::Star {
                nodes: network.req_usize("nodes")?,
            },
            "complete" => TopologySpec::Complete {
                nodes: network.req_usize("nodes")?,
            },
            "file" => TopologySpec::File {
                path: network.req_str("path")?.into(),
            },
            other => {
                return Err(Error::config(
                    kind_field,
                    format!("expected erdos-renyi, ring, star, complete or file, got {other:?}"),
                ))
            }
        };
        let seed = match topology {
            TopologySpec::ErdosRenyi { p, .. } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::config(network.field("p"), "must lie in (0, 1]"));
                }
                Some(network.req_u64("seed")?)
            }
            _ => network.opt_u64("seed")?,
        };
        let network_cfg = NetworkConfig { topology, seed };
        network.finish()?;

        let transport_field = harness.field("transport");
        let host = harness.opt_str("host")?.unwrap_or_else(|| "127.0.0.1".into());
        let base_port = harness.opt_u64("base_port")?.unwrap_or(0);
        if base_port > u64::from(u16::MAX) {
            return Err(Error::config(harness.field("base_port"), "not a port number"));
        }
        let transport = match harness.opt_str("transport")?.as_deref().unwrap_or("inprocess") {
            "inprocess" => TransportSpec::InProcess,
            "sockets" => TransportSpec::Sockets {
                host,
                base_port: base_port as u16,
            },
            other => {
                return Err(Error::config(
                    transport_field,
                    format!("expected inprocess or sockets, got {other:?}"),
                ))
            }
        };
        let delay = harness.opt_f64("straggler_delay")?.unwrap_or(0.01);
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(Error::config(
                harness.field("straggler_delay"),
                "must be a finite non-negative number",
            ));
        }
        let straggler = StragglerSpec {
            enabled: harness.opt_bool("straggler")?.unwrap_or(false),
            delay_seconds: delay,
            seed: harness.opt_u64("straggler_seed")?.unwrap_or(0),
        };
        let seconds_per_flop = harness.opt_f64("seconds_per_flop")?.unwrap_or(0.0);
        if !(seconds_per_flop >= 0.0 && seconds_per_flop.is_finite()) {
            return Err(Error::config(
                harness.field("seconds_per_flop"),
                "must be a finite non-negative number",
            ));
        }
        let execution_field = harness.field("execution");
        let execution = match harness.opt_str("execution")?.as_deref().unwrap_or("parallel") {
            "parallel" => Execution::Parallel,
            "sequential" => Execution::Sequential,
            other => {
                return Err(Error::config(
                    execution_field,
                    format!("expected parallel or sequential, got {other:?}"),
                ))
            }
        };
        let harness_cfg = HarnessConfig {
            transport,
            straggler,
            seconds_per_flop,
            execution,
            wall_clock: harness.opt_bool("wall_clock")?.unwrap_or(false),
            timeout_ms: harness.opt_u64("timeout_ms")?.unwrap_or(10_000),
        };
        harness.finish()?;

        Ok(ExperimentConfig {
            data: data_cfg,
            network: network_cfg,
            algorithm: algorithm_cfg,
            harness: harness_cfg,
        })
    }

    pub fn to_table(&self) -> Table {
        let mut data = Table::new();
        match &self.data.source {
            DataSource::Synthetic {
                dim,
                gap,
                top,
                tail_ratio,
                samples_per_node,
            } => {
                data.insert("source".into(), "synthetic".into());
                data.insert("dim".into(), (*dim as i64).into());
                data.insert("gap".into(), (*gap).into());
                match top {
                    TopProfile::DistinctGeometric { ratio } => {
                        data.insert("top".into(), "geometric".into());
                        data.insert("top_ratio".into(), (*ratio).into());
                    }
                    TopProfile::EqualTopR => {
                        data.insert("top".into(), "equal".into());
                    }
                }
                data.insert("tail_ratio".into(), (*tail_ratio).into());
                data.insert("samples_per_node".into(), (*samples_per_node as i64).into());
            }
            DataSource::File { path } => {
                data.insert("source".into(), "file".into());
                data.insert("path".into(), path.display().to_string().into());
            }
        }
        let partition = match self.data.partition {
            PartitionMode::SampleWise => "sample",
            PartitionMode::FeatureWise => "feature",
        };
        data.insert("partition".into(), partition.into());
        data.insert("shuffle".into(), self.data.shuffle.into());
        data.insert("center".into(), self.data.center.into());
        data.insert("seed".into(), (self.data.seed as i64).into());

        let mut network = Table::new();
        let (kind, nodes) = match &self.network.topology {
            TopologySpec::ErdosRenyi { nodes, p } => {
                network.insert("p".into(), (*p).into());
                ("erdos-renyi", Some(*nodes))
            }
            TopologySpec::Ring { nodes } => ("ring", Some(*nodes)),
            TopologySpec::Star { nodes } => ("star", Some(*nodes)),
            TopologySpec::Complete { nodes } => ("complete", Some(*nodes)),
            TopologySpec::File { path } => {
                network.insert("path".into(), path.display().to_string().into());
                ("file", None)
            }
        };
        network.insert("topology".into(), kind.into());
        if let Some(n) = nodes {
            network.insert("nodes".into(), (n as i64).into());
        }
        if let Some(seed) = self.network.seed {
            network.insert("seed".into(), (seed as i64).into());
        }

        let a = &self.algorithm;
        let mut algorithm = Table::new();
        algorithm.insert("name".into(), a.name.as_str().into());
        algorithm.insert("r".into(), (a.r as i64).into());
        algorithm.insert("outer_iters".into(), (a.outer_iters as i64).into());
        algorithm.insert("schedule".into(), a.schedule.to_string().into());
        if let Some(tol) = a.tol {
            algorithm.insert("tol".into(), tol.into());
        }
        algorithm.insert("qr_rounds".into(), i64::from(a.qr_rounds).into());
        algorithm.insert("iters_per_vector".into(), (a.iters_per_vector as i64).into());
        algorithm.insert("seed".into(), (a.seed as i64).into());

        let h = &self.harness;
        let mut harness = Table::new();
        match &h.transport {
            TransportSpec::InProcess => {
                harness.insert("transport".into(), "inprocess".into());
            }
            TransportSpec::Sockets { host, base_port } => {
                harness.insert("transport".into(), "sockets".into());
                harness.insert("host".into(), host.clone().into());
                harness.insert("base_port".into(), i64::from(*base_port).into());
            }
        }
        harness.insert("straggler".into(), h.straggler.enabled.into());
        harness.insert("straggler_delay".into(), h.straggler.delay_seconds.into());
        harness.insert("straggler_seed".into(), (h.straggler.seed as i64).into());
        harness.insert("seconds_per_flop".into(), h.seconds_per_flop.into());
        let execution = match h.execution {
            Execution::Parallel => "parallel",
            Execution::Sequential => "sequential",
        };
        harness.insert("execution".into(), execution.into());
        harness.insert("wall_clock".into(), h.wall_clock.into());
        harness.insert("timeout_ms".into(), (h.timeout_ms as i64).into());

        let mut root = Table::new();
        root.insert("data".into(), Value::Table(data));
        root.insert("network".into(), Value::Table(network));
        root.insert("algorithm".into(), Value::Table(algorithm));
        root.insert("harness".into(), Value::Table(harness));
        root
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("tables of plain values serialize")
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.network.seed = Some(seed);
        self.algorithm.seed = seed;
        self.harness.straggler.seed = seed;
    }

    /// Copy with `axis` (`section.key`) set to `value`. The value is read as
    /// a TOML literal when it parses as one, otherwise as a string.
    pub fn with_override(&self, axis: &str, value: &str) -> Result<Self> {
        let (section, key) = axis
            .split_once('.')
            .ok_or_else(|| Error::config(axis, "sweep axis must look like section.key"))?;
        let mut root = self.to_table();
        let table = match root.get_mut(section) {
            Some(Value::Table(t)) => t,
            _ => return Err(Error::config(axis, "unknown section")),
        };
        let literal = format!("v = {value}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"));
        table.insert(
            key.to_string(),
            literal.unwrap_or_else(|| Value::String(value.to_string())),
        );
        // Changing an algorithm may change its default partition.
        if axis == "algorithm.name" {
            if let Some(Value::Table(d)) = root.get_mut("data") {
                d.remove("partition");
            }
        }
        Self::from_table(root)
    }
}
