//! Random disc topologies with perimeter landmarks.
//!
//! A [`Topology`] holds `M` uniformly drawn sensor positions followed by `N`
//! landmark positions on the field border. Two nodes are neighbors iff their
//! Euclidean distance is at most the radio range. Adjacency is derived from
//! positions and never stored on disk.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{JumpsError, Result};

/// Index of a node inside a [`Topology`].
pub type NodeId = usize;

/// Hop count along the graph.
pub type Hops = u32;

pub const TOPOLOGY_SCHEMA_VERSION: u32 = 1;

/// A point of the plane, in meters. Serialized as an `[x, y]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn polar(radius: f64, angle: f64) -> Self {
        Point::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Parameters of a random topology draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    /// Field radius `R`, meters.
    pub field_radius: f64,
    /// Radio range `r`, meters.
    pub radio_range: f64,
    /// Target average number of neighbors per node.
    pub neighbor_density: f64,
    /// Number of landmarks `N`.
    pub landmark_count: usize,
    /// Angular phase of the first landmark, radians.
    pub landmark_angle_offset: f64,
    pub seed: u64,
    /// Maximum number of draws before giving up on connectivity.
    pub max_connectivity_retries: u32,
    /// Overrides the population derived from `neighbor_density` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_count: Option<usize>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            field_radius: 1000.0,
            radio_range: 50.0,
            neighbor_density: 10.0,
            landmark_count: 3,
            landmark_angle_offset: 0.0,
            seed: 0,
            max_connectivity_retries: 1000,
            node_count: None,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        let (big_r, r) = (self.field_radius, self.radio_range);
        if !(r.is_finite() && big_r.is_finite() && r > 0.0 && r <= big_r) {
            return Err(JumpsError::Validation(format!(
                "radio range must satisfy 0 < r <= R, got r = {r}, R = {big_r}"
            )));
        }
        if self.landmark_count == 0 {
            return Err(JumpsError::Validation("at least one landmark is required".into()));
        }
        if self.node_count.is_none() && !(self.neighbor_density > 0.0 && self.neighbor_density.is_finite()) {
            return Err(JumpsError::Validation(format!(
                "neighbor density must be positive, got {}",
                self.neighbor_density
            )));
        }
        if !self.landmark_angle_offset.is_finite() {
            return Err(JumpsError::Validation("landmark angle offset must be finite".into()));
        }
        if self.max_connectivity_retries == 0 {
            return Err(JumpsError::Validation("max_connectivity_retries must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of random (non-landmark) nodes `M`.
    pub fn population(&self) -> Result<usize> {
        match self.node_count {
            Some(m) => Ok(m),
            None => population_for_density(self.neighbor_density, self.field_radius, self.radio_range),
        }
    }
}

/// `M = round((R/r)^2 * (d_neig + 1))`.
///
/// With `R = 1000` and `r = 50` this is `400 * (d_neig + 1)`.
pub fn population_for_density(neighbor_density: f64, field_radius: f64, radio_range: f64) -> Result<usize> {
    if !(neighbor_density > 0.0 && neighbor_density.is_finite()) {
        return Err(JumpsError::Domain(format!("neighbor density must be positive, got {neighbor_density}")));
    }
    if !(radio_range > 0.0 && field_radius.is_finite() && radio_range <= field_radius) {
        return Err(JumpsError::Domain(format!(
            "need 0 < r <= R, got r = {radio_range}, R = {field_radius}"
        )));
    }
    let ratio = field_radius / radio_range;
    Ok((ratio * ratio * (neighbor_density + 1.0)).round() as usize)
}

/// `count` points on the circle of radius `field_radius`, the k-th at angle
/// `offset + 2πk/count`.
pub fn place_landmarks(count: usize, field_radius: f64, offset: f64) -> Vec<Point> {
    (0..count)
        .map(|k| Point::polar(field_radius, offset + 2.0 * PI * k as f64 / count as f64))
        .collect()
}

/// Area-uniform sample of `count` points strictly inside the disc.
pub fn draw_disc_positions<R: Rng + ?Sized>(rng: &mut R, count: usize, field_radius: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let p = Point::polar(field_radius * u.sqrt(), 2.0 * PI * v);
        if p.norm() < field_radius {
            out.push(p);
        }
    }
    out
}

/// Immutable node placement plus radio-range adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    config: TopologyConfig,
    positions: Vec<Point>,
    landmark_ids: Vec<NodeId>,
    // CSR adjacency, neighbor lists sorted ascending
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    connectivity_retries: u32,
}

impl Topology {
    /// Builds a topology from explicit positions. Connectivity is not
    /// required here; see [`Topology::is_connected`].
    pub fn from_positions(config: TopologyConfig, positions: Vec<Point>, landmark_ids: Vec<NodeId>) -> Result<Self> {
        let r = config.radio_range;
        if !(r > 0.0 && r.is_finite()) {
            return Err(JumpsError::Validation(format!("radio range must be positive, got {r}")));
        }
        if landmark_ids.is_empty() {
            return Err(JumpsError::Validation("at least one landmark is required".into()));
        }
        if let Some(&bad) = landmark_ids.iter().find(|&&id| id >= positions.len()) {
            return Err(JumpsError::Validation(format!(
                "landmark id {bad} out of range for {} nodes",
                positions.len()
            )));
        }
        let mut sorted = landmark_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(JumpsError::Validation("duplicate landmark id".into()));
        }
        if positions.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(JumpsError::Validation("non-finite node position".into()));
        }
        let (offsets, neighbors) = build_adjacency(&positions, r);
        Ok(Topology {
            config,
            positions,
            landmark_ids,
            offsets,
            neighbors,
            connectivity_retries: 0,
        })
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    pub fn radio_range(&self) -> f64 {
        self.config.radio_range
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, node: NodeId) -> Point {
        self.positions[node]
    }

    pub fn landmark_ids(&self) -> &[NodeId] {
        &self.landmark_ids
    }

    pub fn landmark_count(&self) -> usize {
        self.landmark_ids.len()
    }

    /// Neighbors of `node`, ascending.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        self.neighbors.len() as f64 / self.positions.len() as f64
    }

    /// Rejected draws before this topology was accepted.
    pub fn connectivity_retries(&self) -> u32 {
        self.connectivity_retries
    }

    pub fn euclidean(&self, a: NodeId, b: NodeId) -> f64 {
        self.positions[a].distance(&self.positions[b])
    }

    pub fn is_connected(&self) -> bool {
        if self.positions.is_empty() {
            return true;
        }
        bfs_levels(self, 0).iter().all(|&h| h != UNREACHED)
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            schema_version: TOPOLOGY_SCHEMA_VERSION,
            config: self.config.clone(),
            positions: self.positions.clone(),
            landmark_ids: self.landmark_ids.clone(),
        }
    }

    /// Rebuilds a topology from its document. The result must be connected.
    pub fn from_document(doc: TopologyDocument) -> Result<Self> {
        if doc.schema_version != TOPOLOGY_SCHEMA_VERSION {
            return Err(JumpsError::Validation(format!(
                "unsupported topology schema version {} (expected {TOPOLOGY_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        if doc.config.landmark_count != doc.landmark_ids.len() {
            return Err(JumpsError::Validation(format!(
                "config declares {} landmarks but document lists {}",
                doc.config.landmark_count,
                doc.landmark_ids.len()
            )));
        }
        let topo = Topology::from_positions(doc.config, doc.positions, doc.landmark_ids)?;
        if !topo.is_connected() {
            return Err(JumpsError::Validation("topology document describes a disconnected graph".into()));
        }
        Ok(topo)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_document())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Topology::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| JumpsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| JumpsError::io(path, e))?;
        Topology::from_json(&text)
    }
}

/// On-disk form of a [`Topology`]. Positions are canonical; adjacency is
/// recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDocument {
    pub schema_version: u32,
    pub config: TopologyConfig,
    pub positions: Vec<Point>,
    pub landmark_ids: Vec<NodeId>,
}

/// Draws a connected topology: `M` random nodes, then `N` landmarks.
///
/// Disconnected draws are rejected and redrawn from the same seeded stream.
pub fn generate_topology(config: &TopologyConfig) -> Result<Topology> {
    config.validate()?;
    let population = config.population()?;
    let landmarks = place_landmarks(
        config.landmark_count,
        config.field_radius,
        config.landmark_angle_offset,
    );
    let landmark_ids: Vec<NodeId> = (population..population + config.landmark_count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for attempt in 0..config.max_connectivity_retries {
        let mut positions = draw_disc_positions(&mut rng, population, config.field_radius);
        positions.extend_from_slice(&landmarks);
        let mut topo = Topology::from_positions(config.clone(), positions, landmark_ids.clone())?;
        if topo.is_connected() {
            topo.connectivity_retries = attempt;
            return Ok(topo);
        }
    }
    Err(JumpsError::ConnectivityExhausted {
        attempts: config.max_connectivity_retries,
    })
}

const UNREACHED: Hops = Hops::MAX;

fn bfs_levels(topology: &Topology, source: NodeId) -> Vec<Hops> {
    let mut hops = vec![UNREACHED; topology.node_count()];
    let mut queue = VecDeque::new();
    hops[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = hops[u] + 1;
        for &v in topology.neighbors(u) {
            if hops[v] == UNREACHED {
                hops[v] = next;
                queue.push_back(v);
            }
        }
    }
    hops
}

/// Exact minimum hop counts from `source` to every node.
pub fn bfs_hops(topology: &Topology, source: NodeId) -> Result<Vec<Hops>> {
    if source >= topology.node_count() {
        return Err(JumpsError::Validation(format!(
            "source {source} out of range for {} nodes",
            topology.node_count()
        )));
    }
    let hops = bfs_levels(topology, source);
    if let Some(node) = hops.iter().position(|&h| h == UNREACHED) {
        return Err(JumpsError::Unreachable {
            source_node: source,
            node,
        });
    }
    Ok(hops)
}

/// Grid-bucketed construction of the `distance <= r` graph.
fn build_adjacency(positions: &[Point], r: f64) -> (Vec<usize>, Vec<NodeId>) {
    let n = positions.len();
    if n == 0 {
        return (vec![0], Vec::new());
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in positions {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let cols = (((max_x - min_x) / r).floor() as usize + 1).max(1);
    let rows = (((max_y - min_y) / r).floor() as usize + 1).max(1);
    let cell_of = |p: &Point| {
        let cx = (((p.x - min_x) / r) as usize).min(cols - 1);
        let cy = (((p.y - min_y) / r) as usize).min(rows - 1);
        (cx, cy)
    };

    // counting sort of nodes into cells
    let mut cell_start = vec![0usize; cols * rows + 1];
    let cells: Vec<(usize, usize)> = positions.iter().map(cell_of).collect();
    for &(cx, cy) in &cells {
        cell_start[cy * cols + cx + 1] += 1;
    }
    for i in 1..cell_start.len() {
        cell_start[i] += cell_start[i - 1];
    }
    let mut fill = cell_start.clone();
    let mut bucketed = vec![0usize; n];
    for (id, &(cx, cy)) in cells.iter().enumerate() {
        let c = cy * cols + cx;
        bucketed[fill[c]] = id;
        fill[c] += 1;
    }

    let r_sq = r * r;
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::new();
    offsets.push(0);
    let mut scratch = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cells[i];
        scratch.clear();
        for ny in cy.saturating_sub(1)..=(cy + 1).min(rows - 1) {
            for nx in cx.saturating_sub(1)..=(cx + 1).min(cols - 1) {
                let c = ny * cols + nx;
                for &j in &bucketed[cell_start[c]..cell_start[c + 1]] {
                    if j != i && p.distance_sq(&positions[j]) <= r_sq {
                        scratch.push(j);
                    }
                }
            }
        }
        scratch.sort_unstable();
        neighbors.extend_from_slice(&scratch);
        offsets.push(neighbors.len());
    }
    (offsets, neighbors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_config(r: f64) -> TopologyConfig {
        TopologyConfig {
            field_radius: 1000.0,
            radio_range: r,
            landmark_count: 1,
            node_count: Some(3),
            ..TopologyConfig::default()
        }
    }

    #[test]
    fn population_matches_published_table() {
        let pops: Vec<usize> = [10.0, 20.0, 30.0, 40.0, 50.0]
            .iter()
            .map(|&d| population_for_density(d, 1000.0, 50.0).unwrap())
            .collect();
        assert_eq!(pops, vec![4400, 8400, 12400, 16400, 20400]);
        assert_eq!(population_for_density(1.0, 100.0, 100.0).unwrap(), 2);
    }

    #[test]
    fn population_rejects_bad_domain() {
        assert!(population_for_density(0.0, 1000.0, 50.0).is_err());
        assert!(population_for_density(-3.0, 1000.0, 50.0).is_err());
        assert!(population_for_density(10.0, 1000.0, 0.0).is_err());
        assert!(population_for_density(10.0, 10.0, 50.0).is_err());
    }

    #[test]
    fn landmarks_sit_on_the_circle_at_equal_angles() {
        let pts = place_landmarks(4, 1000.0, 0.0);
        let expected = [(1000.0, 0.0), (0.0, 1000.0), (-1000.0, 0.0), (0.0, -1000.0)];
        for (p, (x, y)) in pts.iter().zip(expected) {
            assert_relative_eq!(p.x, x, epsilon = 1e-9);
            assert_relative_eq!(p.y, y, epsilon = 1e-9);
        }
        let tri = place_landmarks(3, 1000.0, 0.0);
        for (k, p) in tri.iter().enumerate() {
            let a = p.y.atan2(p.x).rem_euclid(2.0 * PI);
            assert_relative_eq!(a, 2.0 * PI * k as f64 / 3.0, epsilon = 1e-12);
        }
        for p in place_landmarks(8, 1000.0, 0.3) {
            assert_relative_eq!(p.norm(), 1000.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn adjacency_uses_inclusive_threshold() {
        let positions = vec![Point::new(0.0, 0.0), Point::new(50.0, 0.0), Point::new(100.0001, 0.0)];
        let topo = Topology::from_positions(line_config(50.0), positions, vec![2]).unwrap();
        assert_eq!(topo.neighbors(0), &[1]);
        assert_eq!(topo.neighbors(1), &[0]);
        assert!(topo.neighbors(2).is_empty());
        assert!(!topo.is_connected());
        assert!(matches!(bfs_hops(&topo, 0), Err(JumpsError::Unreachable { node: 2, .. })));
    }

    #[test]
    fn chain_of_point_nine_r_gaps_is_three_hops() {
        let r = 50.0;
        let positions: Vec<Point> = (0..4).map(|i| Point::new(0.9 * r * i as f64, 0.0)).collect();
        let mut cfg = line_config(r);
        cfg.node_count = Some(3);
        let topo = Topology::from_positions(cfg, positions, vec![3]).unwrap();
        let hops = bfs_hops(&topo, 0).unwrap();
        assert_eq!(hops, vec![0, 1, 2, 3]);
        assert_eq!(bfs_hops(&topo, 3).unwrap()[0], 3);
    }

    #[test]
    fn single_node_and_single_landmark() {
        let cfg = TopologyConfig {
            field_radius: 50.0,
            radio_range: 50.0,
            landmark_count: 1,
            node_count: Some(1),
            seed: 7,
            ..TopologyConfig::default()
        };
        let topo = generate_topology(&cfg).unwrap();
        assert_eq!(topo.node_count(), 2);
        assert_eq!(topo.edge_count(), 1);
        assert!(topo.is_connected());
        assert_eq!(bfs_hops(&topo, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_range = TopologyConfig {
            radio_range: 2000.0,
            ..TopologyConfig::default()
        };
        assert!(matches!(generate_topology(&bad_range), Err(JumpsError::Validation(_))));
        let no_landmarks = TopologyConfig {
            landmark_count: 0,
            ..TopologyConfig::default()
        };
        assert!(generate_topology(&no_landmarks).is_err());
        let no_density = TopologyConfig {
            neighbor_density: 0.0,
            ..TopologyConfig::default()
        };
        assert!(generate_topology(&no_density).is_err());
    }

    #[test]
    fn sparse_field_exhausts_retries() {
        let cfg = TopologyConfig {
            field_radius: 1000.0,
            radio_range: 50.0,
            node_count: Some(50),
            max_connectivity_retries: 5,
            ..TopologyConfig::default()
        };
        assert!(matches!(
            generate_topology(&cfg),
            Err(JumpsError::ConnectivityExhausted { attempts: 5 })
        ));
    }

    #[test]
    fn document_round_trip_rebuilds_adjacency() {
        let cfg = TopologyConfig {
            field_radius: 200.0,
            radio_range: 50.0,
            neighbor_density: 10.0,
            landmark_count: 4,
            seed: 3,
            ..TopologyConfig::default()
        };
        let topo = generate_topology(&cfg).unwrap();
        let back = Topology::from_json(&topo.to_json().unwrap()).unwrap();
        assert_eq!(back.positions(), topo.positions());
        assert_eq!(back.landmark_ids(), topo.landmark_ids());
        for i in 0..topo.node_count() {
            assert_eq!(back.neighbors(i), topo.neighbors(i));
        }
    }

    #[test]
    fn document_with_wrong_schema_is_rejected() {
        let cfg = TopologyConfig {
            field_radius: 100.0,
            radio_range: 50.0,
            landmark_count: 1,
            node_count: Some(0),
            ..TopologyConfig::default()
        };
        let topo = generate_topology(&cfg).unwrap();
        let mut doc = topo.to_document();
        doc.schema_version = 99;
        assert!(Topology::from_document(doc).is_err());
    }
}
