use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A connected undirected graph without stored self-loops.
///
/// Node `i`'s neighbourhood used by consensus includes `i` itself; that is a
/// view rule ([`Topology::neighborhood`]), not an edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from unordered pairs. Duplicates are merged; self
    /// loops, out-of-range ids and disconnected graphs are rejected.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidTopology("no nodes".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidTopology(format!("self loop on node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) outside 0..{node_count}"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let t = Self::build(node_count, set);
        if !t.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(t)
    }

    fn build(node_count: usize, set: BTreeSet<(usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Topology {
            node_count,
            edges: set.into_iter().collect(),
            neighbors,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighbours plus `i` itself, sorted.
    pub fn neighborhood(&self, i: usize) -> Vec<usize> {
        let mut n = self.neighbors[i].clone();
        let pos = n.partition_point(|&j| j < i);
        n.insert(pos, i);
        n
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.node_count
    }

    /// Edge list text: a `# nodes N` header then one `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# nodes {}\n", self.node_count);
        for (a, b) in &self.edges {
            writeln!(s, "{a} {b}").unwrap();
        }
        s
    }

    /// Parses an edge list. Without a `# nodes N` header the node count is
    /// one more than the largest id.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(n) = rest.trim().strip_prefix("nodes") {
                    declared = Some(n.trim().parse::<usize>().map_err(|e| Error::Parse {
                        line: k + 1,
                        message: e.to_string(),
                    })?);
                }
                continue;
            }
            let ids: Vec<&str> = line.split_whitespace().collect();
            if ids.len() != 2 {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("expected `i j`, got {line:?}"),
                });
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| Error::Parse {
                    line: k + 1,
                    message: e.to_string(),
                })
            };
            edges.push((parse(ids[0])?, parse(ids[1])?));
        }
        let inferred = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(1);
        Self::from_edges(declared.unwrap_or(inferred), edges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text)
    }
}

pub const ER_MAX_ATTEMPTS: usize = 1000;

/// Erdős–Rényi `G(n, p)`, redrawn until connected.
pub fn gen_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Topology> {
    if n < 2 {
        return Err(Error::TooSmall { min: 2, got: n });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidTopology(format!("edge probability {p} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ER_MAX_ATTEMPTS {
        let mut set = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    set.insert((i, j));
                }
            }
        }
        let t = Topology::build(n, set);
        if t.is_connected() {
            return Ok(t);
        }
    }
    Err(Error::DisconnectedAfterRetries {
        attempts: ER_MAX_ATTEMPTS,
    })
}

pub fn gen_ring(n: usize) -> Result<Topology> {
    if n < 3 {
        return Err(Error::TooSmall { min: 3, got: n });
    }
    Topology::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// Star with node 0 at the centre.
pub fn gen_star(n: usize) -> Result<Topology> {
    if n < 3 {
        return Err(Error::TooSmall { min: 3, got: n });
    }
    Topology::from_edges(n, (1..n).map(|i| (0, i)))
}

pub fn gen_complete(n: usize) -> Result<Topology> {
    if n == 0 {
        return Err(Error::TooSmall { min: 1, got: 0 });
    }
    Topology::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
}
