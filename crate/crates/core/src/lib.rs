//! Multi-landmark hop-count virtual coordinates for wireless sensor networks.
//!
//! The crate generates random disc topologies with landmarks on the perimeter,
//! runs the WAKE/DDM flooding protocol that assigns every node its vector of
//! hop counts to the landmarks, measures the positioning ambiguity left by
//! those vectors (zones of nodes sharing a coordinate vector), and evaluates
//! the energy trade-off between adding landmarks and raising node density.
//!
//! Module map:
//! - [`topology`]: disc topologies, landmark placement, BFS hop oracle.
//! - [`protocol`]: per-node WAKE/DDM state machine and traffic counters.
//! - [`zones`]: coordinate-class partition and zone geometry metrics.
//! - [`energy`]: CC2420-based energy model.
//! - [`harness`]: seeded Monte-Carlo sweep over landmark counts and densities.
//! - [`cli`]: command-line front end.

pub mod cli;
pub mod energy;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod protocol;
pub mod topology;
pub mod zones;

pub use error::{JumpsError, Result};
pub use protocol::{run_full_protocol, CoordinateMatrix, TrafficStats};
pub use topology::{bfs_hops, generate_topology, Point, Topology, TopologyConfig};
pub use zones::{network_zone_summary, partition_zones, ZonePartition};
