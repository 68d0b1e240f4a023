//! Consensus rounds over localhost TCP.
//!
//! Wire format per message: `b"DPSA"`, `u32` round, `u32` rows, `u32` cols,
//! then `rows * cols` little-endian `f64` values in row-major order. Every
//! edge `(i, j)` with `i < j` is one TCP connection opened by `i`, which
//! first sends its id as a little-endian `u32`.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consensus::{run_rounds, weighted_combine, Exchange, InProcess, Support};
use crate::datagen::{load_binary, save_binary};
use crate::linalg::DenseMatrix;
use crate::netgraph::{gen_complete, metropolis_weights, Topology, WeightMatrix};
use crate::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"DPSA";
const HEADER_LEN: usize = 16;
/// Largest payload accepted from a peer.
const MAX_PAYLOAD: usize = 1 << 30;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

pub fn encode_frame(round: u32, m: &DenseMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&round.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn transport_error(peer: usize, e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock
        | ErrorKind::TimedOut
        | ErrorKind::UnexpectedEof
        | ErrorKind::ConnectionReset
        | ErrorKind::ConnectionAborted
        | ErrorKind::BrokenPipe => Error::Timeout { peer },
        _ => Error::Transport(format!("peer {peer}: {e}")),
    }
}

/// Reads one frame from `peer` and checks it carries `round`.
pub fn read_frame(stream: &mut impl Read, peer: usize, round: u32) -> Result<DenseMatrix> {
    let mut header = [0u8; HEADER_LEN];
    stream.read_exact(&mut header).map_err(|e| transport_error(peer, e))?;
    let corrupt = |reason: String| Error::FrameCorruption { peer, reason };
    if &header[0..4] != FRAME_MAGIC {
        return Err(corrupt(format!("bad magic {:?}", &header[0..4])));
    }
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().expect("4 bytes"));
    let (tag, rows, cols) = (word(4), word(8) as usize, word(12) as usize);
    if tag != round {
        return Err(corrupt(format!("frame for round {tag} during round {round}")));
    }
    let len = rows
        .checked_mul(cols)
        .and_then(|k| k.checked_mul(8))
        .filter(|&k| k <= MAX_PAYLOAD)
        .ok_or_else(|| corrupt(format!("implausible shape {rows}x{cols}")))?;
    let mut payload = vec![0u8; len];
    stream.read_exact(&mut payload).map_err(|e| transport_error(peer, e))?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseMatrix::new(rows, cols, data).map_err(|e| corrupt(e.to_string()))
}

/// One node's connections, sorted by peer id.
#[derive(Debug)]
pub struct NodeLinks {
    pub id: usize,
    writers: Vec<(usize, TcpStream)>,
    readers: Vec<(usize, TcpStream)>,
}

impl NodeLinks {
    fn from_streams(id: usize, mut streams: Vec<(usize, TcpStream)>, timeout: Duration) -> Result<Self> {
        streams.sort_by_key(|(p, _)| *p);
        let mut writers = Vec::with_capacity(streams.len());
        let mut readers = Vec::with_capacity(streams.len());
        for (peer, s) in streams {
            let io = |e| transport_error(peer, e);
            s.set_nodelay(true).map_err(io)?;
            s.set_read_timeout(Some(timeout)).map_err(io)?;
            s.set_write_timeout(Some(timeout)).map_err(io)?;
            writers.push((peer, s.try_clone().map_err(io)?));
            readers.push((peer, s));
        }
        Ok(NodeLinks { id, writers, readers })
    }

    pub fn peers(&self) -> Vec<usize> {
        self.readers.iter().map(|(p, _)| *p).collect()
    }

    /// Sends `state` to every peer and collects theirs (ascending peer id).
    /// Sending runs on its own thread so large frames cannot deadlock.
    pub fn exchange(&mut self, round: u32, state: &DenseMatrix) -> Result<Vec<(usize, DenseMatrix)>> {
        let frame = encode_frame(round, state);
        let writers = &mut self.writers;
        let readers = &mut self.readers;
        thread::scope(|scope| {
            let sender = scope.spawn(|| -> Result<()> {
                for (peer, s) in writers.iter_mut() {
                    s.write_all(&frame).map_err(|e| transport_error(*peer, e))?;
                }
                Ok(())
            });
            let received: Result<Vec<_>> = readers
                .iter_mut()
                .map(|(peer, s)| Ok((*peer, read_frame(s, *peer, round)?)))
                .collect();
            let sent = sender
                .join()
                .map_err(|_| Error::Transport("sender thread panicked".into()))?;
            let received = received?;
            sent?;
            Ok(received)
        })
    }

    /// One consensus round: exchange, then combine in ascending id order.
    pub fn round(&mut self, w: &WeightMatrix, round: u32, state: &DenseMatrix) -> Result<DenseMatrix> {
        let received = self.exchange(round, state)?;
        Ok(combine(w, self.id, state, &received))
    }
}

fn combine(w: &WeightMatrix, id: usize, own: &DenseMatrix, received: &[(usize, DenseMatrix)]) -> DenseMatrix {
    let mut values: Vec<(usize, &DenseMatrix)> = received.iter().map(|(j, m)| (*j, m)).collect();
    values.push((id, own));
    values.sort_by_key(|(j, _)| *j);
    weighted_combine(w, id, values, own.shape())
}

fn write_id(s: &mut TcpStream, id: usize) -> std::io::Result<()> {
    s.write_all(&(id as u32).to_le_bytes())
}

fn read_id(s: &mut TcpStream) -> std::io::Result<usize> {
    let mut b = [0u8; 4];
    s.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn connect_with_retry(addr: &str, peer: usize, deadline: Instant) -> Result<TcpStream> {
    let target = addr
        .to_socket_addrs()
        .map_err(|e| Error::Transport(format!("resolving {addr}: {e}")))?
        .next()
        .ok_or_else(|| Error::Transport(format!("no address for {addr}")))?;
    loop {
        match TcpStream::connect_timeout(&target, Duration::from_millis(500)) {
            Ok(s) => return Ok(s),
            Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(20)),
            Err(_) => return Err(Error::Timeout { peer }),
        }
    }
}

/// A full mesh of TCP links inside one process, one set per node; used by
/// `run_experiment` for the sockets transport.
#[derive(Debug)]
pub struct SocketMesh {
    nodes: Vec<NodeLinks>,
}

impl SocketMesh {
    /// Binds node `i` to `host:base_port + i` (any free port when
    /// `base_port` is 0) and opens one connection per edge.
    pub fn connect(topology: &Topology, host: &str, base_port: u16, timeout: Duration) -> Result<Self> {
        let n = topology.node_count();
        let listeners: Vec<TcpListener> = (0..n)
            .map(|i| {
                let port = if base_port == 0 { 0 } else { base_port + i as u16 };
                TcpListener::bind((host, port)).map_err(|e| Error::Transport(format!("binding node {i}: {e}")))
            })
            .collect::<Result<_>>()?;
        let addrs: Vec<String> = listeners
            .iter()
            .map(|l| l.local_addr().map(|a| a.to_string()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let deadline = Instant::now() + timeout;
        let mut streams: Vec<Vec<(usize, TcpStream)>> = (0..n).map(|_| Vec::new()).collect();
        for &(i, j) in topology.edges() {
            let mut out = connect_with_retry(&addrs[j], j, deadline)?;
            write_id(&mut out, i).map_err(|e| transport_error(j, e))?;
            let (mut inc, _) = listeners[j].accept().map_err(|e| transport_error(i, e))?;
            let who = read_id(&mut inc).map_err(|e| transport_error(i, e))?;
            if who != i {
                return Err(Error::FrameCorruption {
                    peer: i,
                    reason: format!("handshake announced node {who}"),
                });
            }
            streams[i].push((j, out));
            streams[j].push((i, inc));
        }
        let nodes = streams
            .into_iter()
            .enumerate()
            .map(|(i, s)| NodeLinks::from_streams(i, s, timeout))
            .collect::<Result<_>>()?;
        Ok(SocketMesh { nodes })
    }
}

impl Exchange for SocketMesh {
    fn round(
        &mut self,
        w: &WeightMatrix,
        support: &Support,
        round: u64,
        states: &[DenseMatrix],
    ) -> Result<Vec<DenseMatrix>> {
        if self.nodes.len() != states.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} states on a {}-node mesh",
                states.len(),
                self.nodes.len()
            )));
        }
        for links in &self.nodes {
            if links.peers() != support.peers(links.id).collect::<Vec<_>>() {
                return Err(Error::InvalidTopology(format!(
                    "node {} is wired to {:?}, weights expect {:?}",
                    links.id,
                    links.peers(),
                    support.peers(links.id).collect::<Vec<_>>()
                )));
            }
        }
        // Frame tags carry the round number modulo 2^32.
        let tag = round as u32;
        thread::scope(|scope| {
            let handles: Vec<_> = self
                .nodes
                .iter_mut()
                .map(|links| scope.spawn(move || links.round(w, tag, &states[links.id])))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| Error::Transport("node thread panicked".into()))?)
                .collect()
        })
    }
}

/// Everything one node process needs.
#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: usize,
    pub host: String,
    /// Listening port of every node, indexed by id.
    pub ports: Vec<u16>,
    pub topology: Topology,
    pub initial: DenseMatrix,
    pub rounds: u32,
    pub timeout: Duration,
    /// Fault injection: leave right after the handshakes.
    pub exit_after_connect: bool,
}

#[derive(Debug, Clone)]
pub struct NodeReport {
    pub state: DenseMatrix,
    /// Frames received in the first round, by peer.
    pub first_round: Vec<(usize, DenseMatrix)>,
}

/// Runs one node: bind, handshake (connect to higher ids, accept lower
/// ids), then `rounds` consensus rounds with Metropolis weights.
pub fn run_socket_node(cfg: &NodeConfig) -> Result<Option<NodeReport>> {
    let id = cfg.id;
    let n = cfg.topology.node_count();
    if cfg.ports.len() != n || id >= n {
        return Err(Error::InvalidArgument(format!(
            "node {id} with {} ports for {n} nodes",
            cfg.ports.len()
        )));
    }
    let listener = TcpListener::bind((cfg.host.as_str(), cfg.ports[id]))
        .map_err(|e| Error::Transport(format!("binding node {id}: {e}")))?;
    let deadline = Instant::now() + cfg.timeout;
    let lower: Vec<usize> = cfg.topology.neighbors(id).iter().copied().filter(|&j| j < id).collect();
    let higher: Vec<usize> = cfg.topology.neighbors(id).iter().copied().filter(|&j| j > id).collect();

    let acceptor = thread::spawn(move || -> Result<Vec<(usize, TcpStream)>> {
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let mut got = Vec::new();
        while got.len() < lower.len() {
            match listener.accept() {
                Ok((mut s, _)) => {
                    s.set_nonblocking(false).map_err(|e| Error::Transport(e.to_string()))?;
                    s.set_read_timeout(Some(Duration::from_secs(5)))
                        .map_err(|e| Error::Transport(e.to_string()))?;
                    let who = read_id(&mut s).map_err(|e| Error::Transport(format!("handshake: {e}")))?;
                    if !lower.contains(&who) {
                        return Err(Error::FrameCorruption {
                            peer: who,
                            reason: "unexpected handshake".into(),
                        });
                    }
                    got.push((who, s));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        let missing = lower.iter().find(|j| !got.iter().any(|(p, _)| p == *j)).copied();
                        return Err(Error::Timeout {
                            peer: missing.unwrap_or(0),
                        });
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(Error::Transport(e.to_string())),
            }
        }
        Ok(got)
    });

    let mut streams = Vec::new();
    for &j in &higher {
        let mut s = connect_with_retry(&format!("{}:{}", cfg.host, cfg.ports[j]), j, deadline)?;
        write_id(&mut s, id).map_err(|e| transport_error(j, e))?;
        streams.push((j, s));
    }
    let accepted = acceptor
        .join()
        .map_err(|_| Error::Transport("accept thread panicked".into()))??;
    streams.extend(accepted);
    if cfg.exit_after_connect {
        return Ok(None);
    }

    let w = metropolis_weights(&cfg.topology);
    let mut links = NodeLinks::from_streams(id, streams, cfg.timeout)?;
    let mut state = cfg.initial.clone();
    let mut first_round = Vec::new();
    for k in 0..cfg.rounds {
        let received = links.exchange(k, &state)?;
        state = combine(&w, id, &state, &received);
        if k == 0 {
            first_round = received;
        }
    }
    Ok(Some(NodeReport { state, first_round }))
}

/// File names used between a node process and its launcher.
pub fn node_state_path(dir: &Path) -> PathBuf {
    dir.join("state.bin")
}

pub fn node_frame_path(dir: &Path, peer: usize) -> PathBuf {
    dir.join(format!("recv_{peer}.bin"))
}

pub fn node_error_path(dir: &Path) -> PathBuf {
    dir.join("error.txt")
}

/// [`run_socket_node`] with results written under `dir`. On failure the
/// error is also recorded in `error.txt` so the launcher can rebuild it.
pub fn run_socket_node_to_dir(cfg: &NodeConfig, dir: &Path) -> Result<()> {
    let outcome = run_socket_node(cfg).and_then(|report| {
        if let Some(report) = report {
            save_binary(&report.state, node_state_path(dir))?;
            for (peer, m) in &report.first_round {
                save_binary(m, node_frame_path(dir, *peer))?;
            }
        }
        Ok(())
    });
    if let Err(e) = &outcome {
        let line = match e {
            Error::Timeout { peer } => format!("timeout {peer}"),
            Error::FrameCorruption { peer, reason } => format!("frame {peer} {reason}"),
            other => format!("other {other}"),
        };
        let path = node_error_path(dir);
        std::fs::write(&path, line).map_err(|e| Error::io(path, e))?;
    }
    outcome
}

fn parse_node_error(text: &str) -> Error {
    let mut parts = text.trim().splitn(3, ' ');
    let kind = parts.next().unwrap_or("");
    let peer = parts.next().and_then(|p| p.parse().ok());
    match (kind, peer) {
        ("timeout", Some(peer)) => Error::Timeout { peer },
        ("frame", Some(peer)) => Error::FrameCorruption {
            peer,
            reason: parts.next().unwrap_or("").to_string(),
        },
        _ => Error::Transport(text.trim().to_string()),
    }
}

/// Multi-process socket check.
#[derive(Debug, Clone)]
pub struct RoundtripSpec {
    /// Binary providing the hidden `node` subcommand.
    pub exe: PathBuf,
    pub nodes: usize,
    pub rounds: u32,
    pub host: String,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub timeout: Duration,
    /// Fault injection: this node leaves right after connecting.
    pub kill: Option<usize>,
}

impl RoundtripSpec {
    pub fn new(exe: impl Into<PathBuf>, nodes: usize) -> Self {
        RoundtripSpec {
            exe: exe.into(),
            nodes,
            rounds: 1,
            host: "127.0.0.1".into(),
            rows: 6,
            cols: 3,
            seed: 0,
            timeout: Duration::from_secs(10),
            kill: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripReport {
    pub nodes: usize,
    pub rounds: u32,
    /// First-round frames compared with what the sender held.
    pub frames_checked: usize,
    pub frames_identical: bool,
    /// Final states equal the in-process result bit for bit.
    pub states_identical: bool,
}

impl RoundtripReport {
    pub fn passed(&self) -> bool {
        self.frames_identical && self.states_identical
    }
}

fn free_ports(host: &str, n: usize) -> Result<Vec<u16>> {
    let held: Vec<TcpListener> = (0..n)
        .map(|_| TcpListener::bind((host, 0)).map_err(|e| Error::Transport(e.to_string())))
        .collect::<Result<_>>()?;
    held.iter()
        .map(|l| {
            l.local_addr()
                .map(|a| a.port())
                .map_err(|e| Error::Transport(e.to_string()))
        })
        .collect()
}

struct ScratchDir(PathBuf);

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

/// Spawns `nodes` OS processes on a complete graph, runs `rounds` rounds
/// and checks frames and final states against the in-process engine.
pub fn socket_transport_roundtrip(spec: &RoundtripSpec) -> Result<RoundtripReport> {
    let n = spec.nodes;
    let topology = gen_complete(n)?;
    let w = metropolis_weights(&topology);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let initial: Vec<DenseMatrix> = (0..n)
        .map(|_| DenseMatrix::from_fn(spec.rows, spec.cols, |_, _| rng.random_range(-1.0..1.0)))
        .collect();

    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let root = std::env::temp_dir().join(format!("dpsa-roundtrip-{}-{stamp}", std::process::id()));
    let scratch = ScratchDir(root.clone());
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let topo_path = root.join("topology.txt");
    topology.save(&topo_path)?;
    let ports = free_ports(&spec.host, n)?;
    let port_list = ports.iter().map(u16::to_string).collect::<Vec<_>>().join(",");

    let mut children = Vec::with_capacity(n);
    for (i, init) in initial.iter().enumerate() {
        let dir = root.join(format!("node{i}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let input = dir.join("input.bin");
        save_binary(init, &input)?;
        let mut cmd = Command::new(&spec.exe);
        cmd.arg("node")
            .args(["--id", &i.to_string()])
            .args(["--host", &spec.host])
            .args(["--ports", &port_list])
            .arg("--topology")
            .arg(&topo_path)
            .arg("--input")
            .arg(&input)
            .arg("--out-dir")
            .arg(&dir)
            .args(["--rounds", &spec.rounds.to_string()])
            .args(["--timeout-ms", &spec.timeout.as_millis().to_string()])
            .stdout(Stdio::null())
            .stderr(Stdio::null());
        if spec.kill == Some(i) {
            cmd.arg("--exit-after-connect");
        }
        let child = cmd
            .spawn()
            .map_err(|e| Error::Transport(format!("spawning {}: {e}", spec.exe.display())))?;
        children.push(child);
    }
    for child in &mut children {
        child.wait().map_err(|e| Error::Transport(e.to_string()))?;
    }

    for i in 0..n {
        let path = node_error_path(&root.join(format!("node{i}")));
        if let Ok(text) = std::fs::read_to_string(&path) {
            return Err(parse_node_error(&text));
        }
    }
    if spec.kill.is_some() {
        return Err(Error::Transport("fault injected but every node finished".into()));
    }

    let reference = run_rounds(
        &mut InProcess::default(),
        &w,
        &Support::of(&w),
        initial.clone(),
        spec.rounds,
        0,
    )?;
    let mut frames_checked = 0;
    let mut frames_identical = true;
    let mut states_identical = true;
    for i in 0..n {
        let dir = root.join(format!("node{i}"));
        let state = load_binary(node_state_path(&dir))?;
        states_identical &= bits(&state) == bits(&reference.states[i]);
        for &j in topology.neighbors(i) {
            let frame = load_binary(node_frame_path(&dir, j))?;
            frames_identical &= bits(&frame) == bits(&initial[j]);
            frames_checked += 1;
        }
    }
    drop(scratch);
    Ok(RoundtripReport {
        nodes: n,
        rounds: spec.rounds,
        frames_checked,
        frames_identical,
        states_identical,
    })
}

fn bits(m: &DenseMatrix) -> (usize, usize, Vec<u64>) {
    (m.rows(), m.cols(), m.as_slice().iter().map(|v| v.to_bits()).collect())
}

/// Same check without extra processes: a threaded [`SocketMesh`] against
/// the in-process engine.
pub fn threaded_transport_check(nodes: usize, rounds: u32, seed: u64) -> Result<bool> {
    let topology = gen_complete(nodes)?;
    let w = metropolis_weights(&topology);
    let support = Support::of(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial: Vec<DenseMatrix> = (0..nodes)
        .map(|_| DenseMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let mut mesh = SocketMesh::connect(&topology, "127.0.0.1", 0, DEFAULT_TIMEOUT)?;
    let a = run_rounds(&mut mesh, &w, &support, initial.clone(), rounds, 0)?;
    let b = run_rounds(&mut InProcess::default(), &w, &support, initial, rounds, 0)?;
    Ok(a.states.iter().zip(&b.states).all(|(x, y)| bits(x) == bits(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{gen_erdos_renyi, gen_ring};

    #[test]
    fn frame_round_trip() {
        let m = DenseMatrix::from_fn(3, 2, |i, j| (i as f64 - 1.3) * (j as f64 + 0.1));
        let buf = encode_frame(7, &m);
        assert_eq!(&buf[..4], FRAME_MAGIC);
        assert_eq!(buf.len(), 16 + 6 * 8);
        let back = read_frame(&mut buf.as_slice(), 3, 7).unwrap();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn bad_frames_are_named() {
        let m = DenseMatrix::identity(2);
        let mut buf = encode_frame(1, &m);
        assert!(matches!(
            read_frame(&mut buf.as_slice(), 4, 2),
            Err(Error::FrameCorruption { peer: 4, .. })
        ));
        buf[0] = b'X';
        assert!(matches!(
            read_frame(&mut buf.as_slice(), 4, 1),
            Err(Error::FrameCorruption { peer: 4, .. })
        ));
        let short = &encode_frame(1, &m)[..20];
        assert!(matches!(
            read_frame(&mut &short[..], 5, 1),
            Err(Error::Timeout { peer: 5 })
        ));
        let mut huge = encode_frame(1, &m);
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            read_frame(&mut huge.as_slice(), 1, 1),
            Err(Error::FrameCorruption { .. })
        ));
    }

    #[test]
    fn threaded_mesh_matches_in_process() {
        assert!(threaded_transport_check(4, 3, 1).unwrap());
    }

    #[test]
    fn sparse_mesh_matches_in_process() {
        for topology in [gen_ring(6).unwrap(), gen_erdos_renyi(7, 0.4, 3).unwrap()] {
            let w = metropolis_weights(&topology);
            let support = Support::of(&w);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let init: Vec<DenseMatrix> = (0..topology.node_count())
                .map(|_| DenseMatrix::from_fn(40, 30, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let mut mesh = SocketMesh::connect(&topology, "127.0.0.1", 0, DEFAULT_TIMEOUT).unwrap();
            let a = run_rounds(&mut mesh, &w, &support, init.clone(), 4, 0).unwrap();
            let b = run_rounds(&mut InProcess::default(), &w, &support, init, 4, 0).unwrap();
            assert_eq!(a.states, b.states);
            assert_eq!(a.messages, b.messages);
        }
    }

    #[test]
    fn mesh_rejects_foreign_weights() {
        let mut mesh = SocketMesh::connect(&gen_ring(4).unwrap(), "127.0.0.1", 0, DEFAULT_TIMEOUT).unwrap();
        let w = metropolis_weights(&gen_complete(4).unwrap());
        let init = vec![DenseMatrix::identity(2); 4];
        assert!(matches!(
            run_rounds(&mut mesh, &w, &Support::of(&w), init, 1, 0),
            Err(Error::InvalidTopology(_))
        ));
    }

    #[test]
    fn node_errors_parse_back() {
        assert!(matches!(parse_node_error("timeout 3\n"), Error::Timeout { peer: 3 }));
        assert!(matches!(
            parse_node_error("frame 2 bad magic"),
            Error::FrameCorruption { peer: 2, ref reason } if reason == "bad magic"
        ));
        assert!(matches!(parse_node_error("other boom"), Error::Transport(_)));
    }
}
