//! Zones: classes of two or more nodes with identical coordinate vectors.
//!
//! All distances reported here are in radio-range units (meters / r).

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{JumpsError, Result};
use crate::protocol::CoordinateMatrix;
use crate::topology::{Hops, NodeId, Point, Topology};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZonePartition {
    /// Members of each zone, ascending; zones ordered by smallest member.
    zones: Vec<Vec<NodeId>>,
    singleton_count: usize,
    node_count: usize,
}

impl ZonePartition {
    pub fn zones(&self) -> &[Vec<NodeId>] {
        &self.zones
    }

    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    /// Nodes whose coordinate vector is unique.
    pub fn singleton_count(&self) -> usize {
        self.singleton_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn populations(&self) -> impl Iterator<Item = usize> + '_ {
        self.zones.iter().map(Vec::len)
    }
}

/// Groups nodes by exact equality of their coordinate vectors. Classes of a
/// single node are counted as singletons, not zones.
pub fn partition_zones(coords: &CoordinateMatrix) -> ZonePartition {
    let mut classes: HashMap<&[Hops], Vec<NodeId>> = HashMap::with_capacity(coords.node_count());
    for (i, row) in coords.rows().enumerate().take(coords.node_count()) {
        classes.entry(row).or_default().push(i);
    }
    let mut zones = Vec::new();
    let mut singleton_count = 0;
    for members in classes.into_values() {
        if members.len() >= 2 {
            zones.push(members);
        } else {
            singleton_count += 1;
        }
    }
    zones.sort_unstable_by_key(|z| z[0]);
    ZonePartition {
        zones,
        singleton_count,
        node_count: coords.node_count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneMetrics {
    /// Largest pairwise distance inside the zone.
    pub zone_size: f64,
    /// Mean pairwise distance over all unordered pairs.
    pub intra_zone_distance: f64,
    pub population: usize,
}

pub fn zone_metrics(zone: &[NodeId], topology: &Topology) -> Result<ZoneMetrics> {
    if zone.len() < 2 {
        return Err(JumpsError::Validation(format!(
            "a zone needs at least two nodes, got {}",
            zone.len()
        )));
    }
    let r = topology.radio_range();
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (k, &a) in zone.iter().enumerate() {
        for &b in &zone[k + 1..] {
            let d = topology.euclidean(a, b);
            max = max.max(d);
            sum += d;
            pairs += 1;
        }
    }
    Ok(ZoneMetrics {
        zone_size: max / r,
        intra_zone_distance: sum / pairs as f64 / r,
        population: zone.len(),
    })
}

/// How per-zone values are averaged over a network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeWeighting {
    /// Every zone counts once.
    #[default]
    PerZone,
    /// Every zone counts once per member node.
    PerNode,
}

/// Network-wide zone statistics. Size means are `None` when there are no zones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkZoneSummary {
    pub zone_count: usize,
    pub singleton_count: usize,
    pub mean_zone_size: Option<f64>,
    pub mean_intra_zone_distance: Option<f64>,
    pub max_zone_size: Option<f64>,
    pub mean_population: Option<f64>,
}

pub fn network_zone_summary(partition: &ZonePartition, topology: &Topology) -> NetworkZoneSummary {
    network_zone_summary_weighted(partition, topology, SizeWeighting::PerZone)
}

pub fn network_zone_summary_weighted(
    partition: &ZonePartition,
    topology: &Topology,
    weighting: SizeWeighting,
) -> NetworkZoneSummary {
    let metrics: Vec<ZoneMetrics> = partition
        .zones()
        .iter()
        .map(|z| zone_metrics(z, topology).expect("partition zones hold two or more nodes"))
        .collect();
    summarize(&metrics, partition.singleton_count(), weighting)
}

/// Folds per-zone metrics into a network summary.
pub fn summarize(metrics: &[ZoneMetrics], singleton_count: usize, weighting: SizeWeighting) -> NetworkZoneSummary {
    if metrics.is_empty() {
        return NetworkZoneSummary {
            zone_count: 0,
            singleton_count,
            mean_zone_size: None,
            mean_intra_zone_distance: None,
            max_zone_size: None,
            mean_population: None,
        };
    }
    let weight = |m: &ZoneMetrics| match weighting {
        SizeWeighting::PerZone => 1.0,
        SizeWeighting::PerNode => m.population as f64,
    };
    let total_weight: f64 = metrics.iter().map(weight).sum();
    let weighted_mean = |f: fn(&ZoneMetrics) -> f64| metrics.iter().map(|m| weight(m) * f(m)).sum::<f64>() / total_weight;
    let populations: usize = metrics.iter().map(|m| m.population).sum();
    NetworkZoneSummary {
        zone_count: metrics.len(),
        singleton_count,
        mean_zone_size: Some(weighted_mean(|m| m.zone_size)),
        mean_intra_zone_distance: Some(weighted_mean(|m| m.intra_zone_distance)),
        max_zone_size: metrics.iter().map(|m| m.zone_size).reduce(f64::max),
        mean_population: Some(populations as f64 / metrics.len() as f64),
    }
}

/// One line of the per-trial zone report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneReport {
    pub zone_id: usize,
    pub population: usize,
    pub zone_size_rr: f64,
    pub intra_zone_rr: f64,
    pub centroid: Point,
}

pub fn zone_reports(partition: &ZonePartition, topology: &Topology) -> Vec<ZoneReport> {
    partition
        .zones()
        .iter()
        .enumerate()
        .map(|(zone_id, members)| {
            let m = zone_metrics(members, topology).expect("partition zones hold two or more nodes");
            let n = members.len() as f64;
            let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), &i| {
                let p = topology.position(i);
                (sx + p.x, sy + p.y)
            });
            ZoneReport {
                zone_id,
                population: m.population,
                zone_size_rr: m.zone_size,
                intra_zone_rr: m.intra_zone_distance,
                centroid: Point::new(sx / n, sy / n),
            }
        })
        .collect()
}

/// `zone_id,population,zone_size_rr,intra_zone_rr,centroid_x,centroid_y`
pub fn write_zone_report_csv<W: Write>(reports: &[ZoneReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "zone_id,population,zone_size_rr,intra_zone_rr,centroid_x,centroid_y")?;
    for z in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            z.zone_id, z.population, z.zone_size_rr, z.intra_zone_rr, z.centroid.x, z.centroid.y
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologyConfig;
    use approx::assert_relative_eq;

    fn topo_of(points: &[(f64, f64)]) -> Topology {
        let cfg = TopologyConfig {
            field_radius: 1000.0,
            radio_range: 50.0,
            landmark_count: 1,
            node_count: Some(points.len() - 1),
            ..TopologyConfig::default()
        };
        let positions = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        Topology::from_positions(cfg, positions, vec![points.len() - 1]).unwrap()
    }

    #[test]
    fn distinct_vectors_give_no_zones() {
        let coords = CoordinateMatrix::from_rows(2, vec![vec![0, 1], vec![1, 0], vec![1, 1]]);
        let p = partition_zones(&coords);
        assert_eq!(p.zone_count(), 0);
        assert_eq!(p.singleton_count(), 3);
    }

    #[test]
    fn one_shared_vector_is_one_zone_of_two() {
        let coords = CoordinateMatrix::from_rows(2, vec![vec![2, 3], vec![0, 1], vec![2, 3], vec![1, 1]]);
        let p = partition_zones(&coords);
        assert_eq!(p.zones(), &[vec![0, 2]]);
        assert_eq!(p.singleton_count(), 2);
    }

    #[test]
    fn collinear_zone_metrics() {
        let topo = topo_of(&[(0.0, 0.0), (30.0, 0.0), (60.0, 0.0)]);
        let m = zone_metrics(&[0, 1, 2], &topo).unwrap();
        assert_relative_eq!(m.zone_size, 1.2, epsilon = 1e-12);
        assert_relative_eq!(m.intra_zone_distance, 0.8, epsilon = 1e-12);
        assert_eq!(m.population, 3);
    }

    #[test]
    fn coincident_and_boundary_pairs() {
        let topo = topo_of(&[(5.0, 5.0), (5.0, 5.0), (55.0, 5.0)]);
        let m = zone_metrics(&[0, 1], &topo).unwrap();
        assert_eq!(m.zone_size, 0.0);
        assert_eq!(m.intra_zone_distance, 0.0);
        let edge = zone_metrics(&[1, 2], &topo).unwrap();
        assert_eq!(edge.zone_size, 1.0);
    }

    #[test]
    fn degenerate_zone_is_rejected() {
        let topo = topo_of(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(zone_metrics(&[0], &topo).is_err());
        assert!(zone_metrics(&[], &topo).is_err());
    }

    #[test]
    fn summary_arithmetic() {
        let metrics = [
            ZoneMetrics {
                zone_size: 1.2,
                intra_zone_distance: 0.8,
                population: 3,
            },
            ZoneMetrics {
                zone_size: 0.4,
                intra_zone_distance: 0.4,
                population: 2,
            },
        ];
        let s = summarize(&metrics, 7, SizeWeighting::PerZone);
        assert_eq!(s.zone_count, 2);
        assert_relative_eq!(s.max_zone_size.unwrap(), 1.2);
        assert_relative_eq!(s.mean_zone_size.unwrap(), 0.8, epsilon = 1e-12);
        assert_relative_eq!(s.mean_population.unwrap(), 2.5);
        let by_node = summarize(&metrics, 7, SizeWeighting::PerNode);
        assert_relative_eq!(by_node.mean_zone_size.unwrap(), (3.0 * 1.2 + 2.0 * 0.4) / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_summary_has_absent_means() {
        let s = summarize(&[], 4, SizeWeighting::PerZone);
        assert_eq!(s.zone_count, 0);
        assert_eq!(s.mean_zone_size, None);
        assert_eq!(s.max_zone_size, None);
        assert_eq!(s.mean_population, None);
    }

    #[test]
    fn report_csv_has_one_line_per_zone() {
        let topo = topo_of(&[(0.0, 0.0), (30.0, 0.0), (60.0, 0.0), (0.0, 40.0)]);
        let coords = CoordinateMatrix::from_rows(1, vec![vec![1], vec![1], vec![2], vec![0]]);
        let p = partition_zones(&coords);
        let reports = zone_reports(&p, &topo);
        assert_eq!(reports.len(), 1);
        assert_relative_eq!(reports[0].centroid.x, 15.0);
        let mut buf = Vec::new();
        write_zone_report_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("0,2,0.6,0.6,15,0"));
    }
}
