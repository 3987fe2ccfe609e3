//! Finite graphs the servers live on: odd cycles, odd tori and arbitrary
//! connected graphs loaded from an edge list.
//!
//! All-pairs hop distances are computed once at construction, so a
//! [`GraphTopology`] is immutable afterwards and can be shared freely
//! between threads.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertex index in `0..vertex_count`.
pub type Vertex = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("K must be odd (got K = {0})")]
    EvenDimension(usize),
    #[error("dimension must be at least 3 (got {0})")]
    TooSmall(usize),
    #[error("graph has no vertices")]
    Empty,
    #[error("graph is disconnected: vertex {0} is unreachable from vertex 0")]
    Disconnected(Vertex),
    #[error("adjacency is asymmetric: {0} lists {1} but {1} does not list {0}")]
    Asymmetric(Vertex, Vertex),
    #[error("self-loop at vertex {0}")]
    SelfLoop(Vertex),
    #[error("vertex {vertex} out of range for a graph with {count} vertices")]
    InvalidVertex { vertex: Vertex, count: usize },
    #[error("next hop requested for ({from}, {dest}) at distance {distance}; customers within distance 1 exit instead")]
    NoNextHop { from: Vertex, dest: Vertex, distance: u32 },
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error reading edge list: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Cycle { k: usize },
    Torus { k: usize, l: usize },
    General,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Cycle { k } => write!(f, "cycle({k})"),
            GraphKind::Torus { k, l } => write!(f, "torus({k},{l})"),
            GraphKind::General => write!(f, "general"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphTopology {
    kind: GraphKind,
    adjacency: Vec<Vec<Vertex>>,
    degree: usize,
    is_regular: bool,
    distances: Vec<Vec<u32>>,
}

fn check_odd(k: usize) -> Result<(), GraphError> {
    if k % 2 == 0 {
        return Err(GraphError::EvenDimension(k));
    }
    if k < 3 {
        return Err(GraphError::TooSmall(k));
    }
    Ok(())
}

impl GraphTopology {
    /// Cycle on `0..k` with edges `(i, i+1 mod k)`.
    pub fn cycle(k: usize) -> Result<Self, GraphError> {
        check_odd(k)?;
        let adjacency = (0..k)
            .map(|i| {
                let mut n = vec![(i + 1) % k, (i + k - 1) % k];
                n.sort_unstable();
                n
            })
            .collect();
        Ok(Self::from_parts(GraphKind::Cycle { k }, adjacency))
    }

    /// `k x l` torus. Vertex `x * l + y` has centered coordinates given by
    /// [`GraphTopology::torus_coords`].
    pub fn torus(k: usize, l: usize) -> Result<Self, GraphError> {
        check_odd(k)?;
        check_odd(l)?;
        let mut adjacency = Vec::with_capacity(k * l);
        for x in 0..k {
            for y in 0..l {
                let mut n = vec![
                    ((x + 1) % k) * l + y,
                    ((x + k - 1) % k) * l + y,
                    x * l + (y + 1) % l,
                    x * l + (y + l - 1) % l,
                ];
                n.sort_unstable();
                adjacency.push(n);
            }
        }
        Ok(Self::from_parts(GraphKind::Torus { k, l }, adjacency))
    }

    /// Arbitrary connected, symmetric, loop-free graph.
    pub fn general(adjacency: Vec<Vec<Vertex>>) -> Result<Self, GraphError> {
        let n = adjacency.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut adjacency = adjacency;
        for (v, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &u in list.iter() {
                if u >= n {
                    return Err(GraphError::InvalidVertex { vertex: u, count: n });
                }
                if u == v {
                    return Err(GraphError::SelfLoop(v));
                }
            }
        }
        for (v, list) in adjacency.iter().enumerate() {
            for &u in list {
                if adjacency[u].binary_search(&v).is_err() {
                    return Err(GraphError::Asymmetric(v, u));
                }
            }
        }
        let graph = Self::from_parts(GraphKind::General, adjacency);
        if let Some(v) = graph.distances[0].iter().position(|&d| d == u32::MAX) {
            return Err(GraphError::Disconnected(v));
        }
        Ok(graph)
    }

    /// Build a general graph from undirected edges on `0..vertex_count`.
    pub fn from_edges(vertex_count: usize, edges: &[(Vertex, Vertex)]) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= vertex_count {
                    return Err(GraphError::InvalidVertex { vertex: w, count: vertex_count });
                }
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        Self::general(adjacency)
    }

    /// Parse an edge list: one whitespace-separated `u v` pair per line,
    /// 0-based ids. Blank lines and lines starting with `#` are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        let mut max_id = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(GraphError::Parse {
                    line: idx + 1,
                    message: format!("expected two vertex ids, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<Vertex>().map_err(|e| GraphError::Parse {
                    line: idx + 1,
                    message: format!("bad vertex id {s:?}: {e}"),
                })
            };
            let (u, v) = (parse(fields[0])?, parse(fields[1])?);
            max_id = max_id.max(u).max(v);
            edges.push((u, v));
        }
        if edges.is_empty() {
            return Err(GraphError::Empty);
        }
        Self::from_edges(max_id + 1, &edges)
    }

    pub fn load_edge_list(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(e.to_string()))?;
        Self::parse_edge_list(&text)
    }

    fn from_parts(kind: GraphKind, adjacency: Vec<Vec<Vertex>>) -> Self {
        let degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let is_regular = adjacency.iter().all(|a| a.len() == degree);
        let distances = (0..adjacency.len()).map(|s| bfs(&adjacency, s)).collect();
        Self { kind, adjacency, degree, is_regular, distances }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Common degree for regular graphs, maximum degree otherwise.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_regular(&self) -> bool {
        self.is_regular
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v]
    }

    /// Undirected edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(Vertex, Vertex)> {
        let mut out = Vec::new();
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn diameter(&self) -> u32 {
        self.distances.iter().flatten().copied().max().unwrap_or(0)
    }

    fn check_vertex(&self, v: Vertex) -> Result<(), GraphError> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(GraphError::InvalidVertex { vertex: v, count: self.vertex_count() })
        }
    }

    /// Hop distance. Panics on out-of-range vertices; use
    /// [`GraphTopology::try_distance`] for untrusted input.
    pub fn distance(&self, u: Vertex, v: Vertex) -> u32 {
        self.distances[u][v]
    }

    pub fn try_distance(&self, u: Vertex, v: Vertex) -> Result<u32, GraphError> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        Ok(self.distances[u][v])
    }

    /// A customer served at `u` leaves the network iff it is within one hop
    /// of its destination.
    pub fn exits_on_service(&self, u: Vertex, dest: Vertex) -> bool {
        self.distances[u][dest] <= 1
    }

    /// Neighbors of `u` strictly closer to `dest`. Only defined when the
    /// customer does not exit, i.e. at distance > 1.
    pub fn next_hop_set(&self, u: Vertex, dest: Vertex) -> Result<Vec<Vertex>, GraphError> {
        self.check_vertex(u)?;
        self.check_vertex(dest)?;
        let d = self.distances[u][dest];
        if d <= 1 {
            return Err(GraphError::NoNextHop { from: u, dest, distance: d });
        }
        Ok(self.next_hops_unchecked(u, dest).collect())
    }

    /// Iterator form of [`GraphTopology::next_hop_set`] for hot loops; the
    /// caller guarantees distance > 1.
    pub fn next_hops_unchecked(&self, u: Vertex, dest: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        let target = self.distances[u][dest] - 1;
        self.adjacency[u]
            .iter()
            .copied()
            .filter(move |&w| self.distances[w][dest] == target)
    }

    /// Centered torus coordinates of a vertex, each component in
    /// `-(n-1)/2 ..= (n-1)/2`. `None` for non-torus graphs.
    pub fn torus_coords(&self, v: Vertex) -> Option<(i64, i64)> {
        match self.kind {
            GraphKind::Torus { k, l } => {
                let (x, y) = ((v / l) as i64, (v % l) as i64);
                Some((center(x, k as i64), center(y, l as i64)))
            }
            _ => None,
        }
    }

    /// Vertex at centered (or any integer) torus coordinates, taken modulo
    /// the torus dimensions.
    pub fn torus_vertex(&self, x: i64, y: i64) -> Option<Vertex> {
        match self.kind {
            GraphKind::Torus { k, l } => {
                let (k, l) = (k as i64, l as i64);
                Some((x.rem_euclid(k) * l + y.rem_euclid(l)) as Vertex)
            }
            _ => None,
        }
    }

    /// Translate `v` by an offset: `(dx, _)` on cycles, `(dx, dy)` on tori.
    /// General graphs only support the zero offset.
    pub fn translate(&self, v: Vertex, offset: (i64, i64)) -> Option<Vertex> {
        match self.kind {
            GraphKind::Cycle { k } => Some((v as i64 + offset.0).rem_euclid(k as i64) as Vertex),
            GraphKind::Torus { l, .. } => {
                let (x, y) = ((v / l) as i64, (v % l) as i64);
                self.torus_vertex(x + offset.0, y + offset.1)
            }
            GraphKind::General => (offset == (0, 0)).then_some(v),
        }
    }

    /// Signed offset from `from` to `to` on a cycle, in `-(K-1)/2 ..= (K-1)/2`.
    pub fn cycle_offset(&self, from: Vertex, to: Vertex) -> Option<i64> {
        match self.kind {
            GraphKind::Cycle { k } => {
                let raw = (to as i64 - from as i64).rem_euclid(k as i64);
                Some(center(raw, k as i64))
            }
            _ => None,
        }
    }
}

fn center(x: i64, n: i64) -> i64 {
    if x > (n - 1) / 2 {
        x - n
    } else {
        x
    }
}

fn bfs(adjacency: &[Vec<Vertex>], source: Vertex) -> Vec<u32> {
    let mut dist = vec![u32::MAX; adjacency.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// The Petersen graph (10 vertices, 3-regular, diameter 2).
pub fn petersen() -> GraphTopology {
    let mut edges = Vec::new();
    for i in 0..5 {
        edges.push((i, (i + 1) % 5));
        edges.push((i, i + 5));
        edges.push((5 + i, 5 + (i + 2) % 5));
    }
    GraphTopology::from_edges(10, &edges).expect("petersen graph is valid")
}

/// Complete graph on `n` vertices.
pub fn complete(n: usize) -> Result<GraphTopology, GraphError> {
    let adjacency = (0..n).map(|v| (0..n).filter(|&u| u != v).collect()).collect();
    GraphTopology::general(adjacency)
}
