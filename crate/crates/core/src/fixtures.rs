//! Hand-built topologies with known hop distances.

use std::f64::consts::PI;

use crate::topology::{place_landmarks, Hops, NodeId, Point, Topology, TopologyConfig};

/// Hop distances of the reference node to the eight landmarks of the
/// worked example.
pub const EIGHT_LANDMARK_COORDS: [Hops; 8] = [3, 6, 7, 7, 8, 7, 6, 3];

/// Eight-landmark worked example.
///
/// Node 0 sits inside a 220 m disc (r = 50 m); from it a straight relay
/// chain runs to each perimeter landmark with exactly the hop count of
/// [`EIGHT_LANDMARK_COORDS`]. Relay spacing stays within (r/2, r], so no
/// chain can shortcut another: nodes two or more relay steps apart are
/// farther than r.
pub fn eight_landmark_example() -> (Topology, NodeId) {
    let field_radius = 220.0;
    let radio_range = 50.0;
    let offset = PI / 12.0;
    let center = Point::new(110.0, -13.0);
    let landmarks = place_landmarks(8, field_radius, offset);

    let mut positions = vec![center];
    for (lm, &hops) in landmarks.iter().zip(EIGHT_LANDMARK_COORDS.iter()) {
        for step in 1..hops {
            let t = step as f64 / hops as f64;
            positions.push(Point::new(
                center.x + (lm.x - center.x) * t,
                center.y + (lm.y - center.y) * t,
            ));
        }
    }
    let relays = positions.len();
    positions.extend_from_slice(&landmarks);
    let config = TopologyConfig {
        field_radius,
        radio_range,
        landmark_count: 8,
        landmark_angle_offset: offset,
        node_count: Some(relays),
        ..TopologyConfig::default()
    };
    let topo = Topology::from_positions(config, positions, (relays..relays + 8).collect())
        .expect("fixture geometry is valid");
    (topo, 0)
}

/// Star: node 0 at the centre and `leaves` nodes on the circle of radius
/// r around it. Leaves are pairwise farther than r apart for up to five
/// leaves. Leaf 1 (at angle 0) doubles as the single landmark.
pub fn star(leaves: usize) -> Topology {
    assert!((1..=5).contains(&leaves), "a geometric star has 1..=5 leaves");
    let radio_range = 50.0;
    let mut positions = vec![Point::ORIGIN];
    positions.extend((0..leaves).map(|k| Point::polar(radio_range, 2.0 * PI * k as f64 / leaves as f64)));
    let config = TopologyConfig {
        field_radius: radio_range,
        radio_range,
        landmark_count: 1,
        node_count: Some(leaves),
        ..TopologyConfig::default()
    };
    Topology::from_positions(config, positions, vec![1]).expect("star geometry is valid")
}
