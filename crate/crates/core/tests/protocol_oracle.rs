use std::collections::VecDeque;

use jumps::fixtures::{eight_landmark_example, star, EIGHT_LANDMARK_COORDS};
use jumps::protocol::{run_ddm_flood, run_full_protocol_traced, run_wake, FloodId};
use jumps::{generate_topology, run_full_protocol, Topology, TopologyConfig};
use proptest::prelude::*;

fn config(seed: u64, landmarks: usize, density: f64) -> TopologyConfig {
    TopologyConfig {
        field_radius: 200.0,
        radio_range: 50.0,
        neighbor_density: density,
        landmark_count: landmarks,
        seed,
        ..TopologyConfig::default()
    }
}

/// Independent hop oracle written against the raw positions only.
fn oracle_hops(topo: &Topology, source: usize) -> Vec<u32> {
    let n = topo.node_count();
    let r = topo.radio_range();
    let mut dist = vec![u32::MAX; n];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if v != u && dist[v] == u32::MAX && topo.euclidean(u, v) <= r {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

#[test]
fn fixture_node_has_expected_coordinates() {
    let (topo, node) = eight_landmark_example();
    let (coords, _) = run_full_protocol(&topo, 0).unwrap();
    assert_eq!(coords.row(node), &EIGHT_LANDMARK_COORDS);
    assert_eq!(coords.row(node), &[3, 6, 7, 7, 8, 7, 6, 3]);
}

#[test]
fn coordinates_match_oracle_on_seeded_topologies() {
    for seed in 0..8 {
        let topo = generate_topology(&config(seed, 5, 10.0)).unwrap();
        let (coords, _) = run_full_protocol(&topo, 0).unwrap();
        for (j, &lm) in topo.landmark_ids().iter().enumerate() {
            let expected = oracle_hops(&topo, lm);
            for (i, &h) in expected.iter().enumerate() {
                assert_eq!(coords.get(i, j), h, "seed {seed} node {i} landmark {j}");
            }
            assert_eq!(coords.get(lm, j), 0);
        }
    }
}

#[test]
fn star_traffic() {
    for leaves in 1..=5 {
        let topo = star(leaves);
        let (_, traffic) = run_full_protocol(&topo, 0).unwrap();
        for f in &traffic.floods {
            assert_eq!(f.emissions, leaves as u64 + 1);
            assert_eq!(f.receptions, 2 * leaves as u64);
        }
    }
}

#[test]
fn receptions_per_node_track_density() {
    for density in [20.0, 30.0, 40.0] {
        let topo = generate_topology(&TopologyConfig {
            field_radius: 500.0,
            neighbor_density: density,
            seed: 3,
            ..TopologyConfig::default()
        })
        .unwrap();
        let (_, traffic) = run_full_protocol(&topo, 0).unwrap();
        let wake = traffic.flood(FloodId::Wake).unwrap();
        let per_node = wake.receptions as f64 / topo.node_count() as f64;
        // border nodes have fewer neighbors, so allow 15% below nominal
        assert!(
            (per_node - density).abs() / density < 0.15,
            "density {density}: {per_node} receptions per node"
        );
    }
}

#[test]
fn single_ddm_flood_matches_full_run() {
    let topo = generate_topology(&config(9, 4, 12.0)).unwrap();
    let (coords, _) = run_full_protocol(&topo, 0).unwrap();
    for j in 0..4 {
        let (hops, trace) = run_ddm_flood(&topo, j).unwrap();
        let column: Vec<u32> = (0..topo.node_count()).map(|i| coords.get(i, j)).collect();
        assert_eq!(hops, column);
        assert_eq!(trace.traffic.total_emissions(), topo.node_count() as u64);
    }
}

#[test]
fn wake_reaches_every_node_in_bfs_order() {
    let topo = generate_topology(&config(4, 3, 10.0)).unwrap();
    let trace = run_wake(&topo, 17).unwrap();
    let expected = oracle_hops(&topo, 17);
    // a node at h hops receives WAKE in round h - 1 and forwards it in round h
    for (i, &h) in expected.iter().enumerate() {
        assert_eq!(trace.reached_round(FloodId::Wake, i), Some(h.saturating_sub(1)));
    }
    for e in &trace.events {
        for &id in &e.emitters {
            assert_eq!(e.round, expected[id]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn coordinate_invariants(seed in any::<u64>(), landmarks in 3usize..=6, initiator in 0usize..10_000) {
        let topo = generate_topology(&config(seed, landmarks, 10.0)).unwrap();
        let initiator = initiator % topo.node_count();
        let (coords, trace) = run_full_protocol_traced(&topo, initiator).unwrap();
        let r = topo.radio_range();
        for (j, &lm) in topo.landmark_ids().iter().enumerate() {
            prop_assert_eq!(coords.get(lm, j), 0);
            for i in 0..topo.node_count() {
                let h = coords.get(i, j);
                prop_assert!(topo.euclidean(i, lm) <= h as f64 * r + 1e-9);
                for &k in topo.neighbors(i) {
                    prop_assert!(h.abs_diff(coords.get(k, j)) <= 1);
                }
            }
        }
        let n = topo.node_count() as u64;
        prop_assert_eq!(trace.traffic.floods.len(), landmarks + 1);
        prop_assert_eq!(trace.traffic.total_emissions(), (landmarks as u64 + 1) * n);
        for f in &trace.traffic.floods {
            prop_assert_eq!(f.emissions, n);
            prop_assert_eq!(f.receptions, 2 * topo.edge_count() as u64);
            // one forward per node per flood
            let mut seen = vec![false; topo.node_count()];
            for e in trace.events.iter().filter(|e| e.flood == f.flood) {
                for &id in &e.emitters {
                    prop_assert!(!seen[id]);
                    seen[id] = true;
                }
            }
            let first = trace.first_round(f.flood).unwrap();
            let last = trace.last_round(f.flood).unwrap();
            prop_assert!(last - first < topo.node_count() as u32);
        }
    }

    #[test]
    fn protocol_is_deterministic(seed in any::<u64>()) {
        let topo = generate_topology(&config(seed, 4, 10.0)).unwrap();
        let (a, ta) = run_full_protocol_traced(&topo, 0).unwrap();
        let (b, tb) = run_full_protocol_traced(&topo, 0).unwrap();
        prop_assert_eq!(a, b);
        let mut la = Vec::new();
        let mut lb = Vec::new();
        ta.write_event_log(&mut la).unwrap();
        tb.write_event_log(&mut lb).unwrap();
        prop_assert_eq!(la, lb);
        prop_assert_eq!(ta.traffic, tb.traffic);
    }
}
