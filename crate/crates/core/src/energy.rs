//! Energy cost of building the coordinate system.
//!
//! Each landmark flood costs one emission per node and one reception per
//! neighbor. Raising transmit power by a factor λ extends the range by
//! λ^(1/α) and the neighbor count by λ^(2/α); the CC2420 transmit current
//! grows with it. Energies are compared as ratios to the reference case of a
//! single landmark at minimum power (`d_neig = d0`).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{JumpsError, Result};

/// CC2420-derived model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModelParams {
    /// Receive current, mA.
    pub rx_current: f64,
    pub itx_offset: f64,
    pub itx_scale: f64,
    /// Supply voltage, V.
    pub voltage: f64,
    pub path_loss_exponent: f64,
    /// Neighbor count at minimum transmit power.
    pub reference_density: f64,
}

impl Default for EnergyModelParams {
    fn default() -> Self {
        EnergyModelParams {
            rx_current: 19.7,
            itx_offset: 15.338,
            itx_scale: 1.8709,
            voltage: 3.0,
            path_loss_exponent: 2.0,
            reference_density: 10.0,
        }
    }
}

impl EnergyModelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rx_current", self.rx_current),
            ("itx_offset", self.itx_offset),
            ("itx_scale", self.itx_scale),
            ("voltage", self.voltage),
            ("path_loss_exponent", self.path_loss_exponent),
            ("reference_density", self.reference_density),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(JumpsError::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Transmit current for a neighbor-density ratio `d_neig / d0`, mA.
    pub fn itx(&self, density_ratio: f64) -> Result<f64> {
        positive("density ratio", density_ratio)?;
        Ok((density_ratio.sqrt() + self.itx_offset) / self.itx_scale)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(JumpsError::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Range and coverage-area gains for a transmit power ratio λ:
/// `(λ^(1/α), λ^(2/α))`.
pub fn range_and_coverage_scale(power_ratio: f64, path_loss_exponent: f64) -> Result<(f64, f64)> {
    positive("power ratio", power_ratio)?;
    positive("path loss exponent", path_loss_exponent)?;
    let range = power_ratio.powf(1.0 / path_loss_exponent);
    Ok((range, power_ratio.powf(2.0 / path_loss_exponent)))
}

/// Interpolated CC2420 transmit current with the default fit constants.
pub fn itx_of_density_ratio(density_ratio: f64) -> Result<f64> {
    EnergyModelParams::default().itx(density_ratio)
}

/// `U * M * N * (I_tx(d/d0) + I_rx * d/d0)`.
///
/// The unit is mA·V per node-flood: no per-packet airtime enters the model,
/// so only ratios between configurations are meaningful.
pub fn total_energy(population: usize, landmarks: usize, neighbor_density: f64, params: &EnergyModelParams) -> Result<f64> {
    params.validate()?;
    positive("neighbor density", neighbor_density)?;
    let per_flood = per_node_flood_cost(neighbor_density, params)?;
    Ok(params.voltage * population as f64 * landmarks as f64 * per_flood)
}

fn per_node_flood_cost(neighbor_density: f64, params: &EnergyModelParams) -> Result<f64> {
    let ratio = neighbor_density / params.reference_density;
    Ok(params.itx(ratio)? + params.rx_current * ratio)
}

/// Per-node energy of `N` floods at density `d`, relative to one flood at `d0`.
pub fn relative_energy(landmarks: usize, neighbor_density: f64, params: &EnergyModelParams) -> Result<f64> {
    params.validate()?;
    positive("neighbor density", neighbor_density)?;
    let reference = per_node_flood_cost(params.reference_density, params)?;
    Ok(landmarks as f64 * per_node_flood_cost(neighbor_density, params)? / reference)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub landmarks: usize,
    pub neighbor_density: f64,
    pub density_ratio: f64,
    pub itx_ma: f64,
    /// Per-node energy, `U * N * (I_tx + I_rx * d/d0)`.
    pub per_node_energy: f64,
    pub ratio_to_reference: f64,
}

/// Relative energy for every `(N, d_neig)` pair, `N` outermost.
pub fn relative_energy_curve(landmarks: &[usize], densities: &[f64], params: &EnergyModelParams) -> Result<Vec<EnergyRow>> {
    params.validate()?;
    let reference = params.voltage * per_node_flood_cost(params.reference_density, params)?;
    let mut rows = Vec::with_capacity(landmarks.len() * densities.len());
    for &n in landmarks {
        for &d in densities {
            let per_node = total_energy(1, n, d, params)?;
            let density_ratio = d / params.reference_density;
            rows.push(EnergyRow {
                landmarks: n,
                neighbor_density: d,
                density_ratio,
                itx_ma: params.itx(density_ratio)?,
                per_node_energy: per_node,
                ratio_to_reference: per_node / reference,
            });
        }
    }
    Ok(rows)
}

/// `N,d_neig,d_ratio,itx_mA,per_node_energy,ratio_to_reference`
pub fn write_energy_csv<W: Write>(rows: &[EnergyRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "N,d_neig,d_ratio,itx_mA,per_node_energy,ratio_to_reference")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.landmarks, r.neighbor_density, r.density_ratio, r.itx_ma, r.per_node_energy, r.ratio_to_reference
        )?;
    }
    Ok(())
}

/// One row of the CC2420 output-power table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLevel {
    pub output_dbm: f64,
    /// Datasheet transmit current, mA.
    pub itx_ma: f64,
    /// Tabulated range factor for α = 2.
    pub range_factor: f64,
    /// Tabulated neighbor-count factor for α = 2.
    pub coverage_factor: f64,
}

impl PowerLevel {
    /// Power ratio to the -25 dBm reference level.
    pub fn power_ratio(&self) -> f64 {
        10f64.powf((self.output_dbm - CC2420_LEVELS[0].output_dbm) / 10.0)
    }
}

pub const CC2420_LEVELS: [PowerLevel; 8] = [
    PowerLevel { output_dbm: -25.0, itx_ma: 8.5, range_factor: 1.0, coverage_factor: 1.0 },
    PowerLevel { output_dbm: -15.0, itx_ma: 9.9, range_factor: 3.16, coverage_factor: 10.0 },
    PowerLevel { output_dbm: -10.0, itx_ma: 11.2, range_factor: 5.62, coverage_factor: 31.62 },
    PowerLevel { output_dbm: -7.0, itx_ma: 12.5, range_factor: 7.94, coverage_factor: 63.1 },
    PowerLevel { output_dbm: -5.0, itx_ma: 13.9, range_factor: 10.0, coverage_factor: 100.0 },
    PowerLevel { output_dbm: -3.0, itx_ma: 15.2, range_factor: 12.59, coverage_factor: 158.49 },
    PowerLevel { output_dbm: -1.0, itx_ma: 16.5, range_factor: 15.84, coverage_factor: 251.2 },
    PowerLevel { output_dbm: 0.0, itx_ma: 17.4, range_factor: 17.78, coverage_factor: 316.22 },
];

/// Model output next to a tabulated power level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLevelCheck {
    pub level: PowerLevel,
    pub model_itx_ma: f64,
    pub model_range_factor: f64,
    pub model_coverage_factor: f64,
}

impl PowerLevelCheck {
    pub fn itx_error_ma(&self) -> f64 {
        (self.model_itx_ma - self.level.itx_ma).abs()
    }

    pub fn range_rel_error(&self) -> f64 {
        (self.model_range_factor - self.level.range_factor).abs() / self.level.range_factor
    }

    pub fn coverage_rel_error(&self) -> f64 {
        (self.model_coverage_factor - self.level.coverage_factor).abs() / self.level.coverage_factor
    }
}

/// Evaluates the model at every CC2420 power level.
pub fn power_table(params: &EnergyModelParams) -> Result<Vec<PowerLevelCheck>> {
    params.validate()?;
    CC2420_LEVELS
        .iter()
        .map(|&level| {
            let (range, coverage) = range_and_coverage_scale(level.power_ratio(), params.path_loss_exponent)?;
            Ok(PowerLevelCheck {
                level,
                model_itx_ma: params.itx(coverage)?,
                model_range_factor: range,
                model_coverage_factor: coverage,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn range_and_coverage() {
        let (range, cov) = range_and_coverage_scale(10.0, 2.0).unwrap();
        assert_relative_eq!(range, 3.1623, epsilon = 1e-4);
        assert_relative_eq!(cov, 10.0, epsilon = 1e-12);
        assert_eq!(range_and_coverage_scale(1.0, 2.0).unwrap(), (1.0, 1.0));
        let (_, cov) = range_and_coverage_scale(10f64.powf(1.8), 2.0).unwrap();
        assert!((cov - 63.1).abs() / 63.1 < 0.01);
        assert!(range_and_coverage_scale(0.0, 2.0).is_err());
        assert!(range_and_coverage_scale(10.0, -1.0).is_err());
    }

    #[test]
    fn itx_spot_values() {
        assert!((itx_of_density_ratio(1.0).unwrap() - 8.5).abs() < 0.4);
        assert_relative_eq!(itx_of_density_ratio(1.0).unwrap(), 8.7327, epsilon = 1e-4);
        assert!((itx_of_density_ratio(10.0).unwrap() - 9.9).abs() < 0.4);
        assert!((itx_of_density_ratio(316.22).unwrap() - 17.4).abs() < 0.4);
        assert!(itx_of_density_ratio(0.0).is_err());
        assert!(itx_of_density_ratio(-2.0).is_err());
    }

    #[test]
    fn energy_is_linear_in_landmarks() {
        let p = EnergyModelParams::default();
        assert_eq!(total_energy(4400, 0, 50.0, &p).unwrap(), 0.0);
        let one = total_energy(4400, 3, 50.0, &p).unwrap();
        let two = total_energy(4400, 6, 50.0, &p).unwrap();
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-12);
    }

    #[test]
    fn per_node_factor_at_three_landmarks_fifty_neighbors() {
        // direct evaluation: 3 * ((sqrt(5) + 15.338) / 1.8709 + 19.7 * 5)
        let expected = 3.0 * ((5f64.sqrt() + 15.338) / 1.8709 + 19.7 * 5.0);
        assert_relative_eq!(expected, 323.68, epsilon = 0.01);
        let p = EnergyModelParams::default();
        let e = total_energy(4400, 3, 50.0, &p).unwrap();
        assert_relative_eq!(e / (p.voltage * 4400.0), expected, max_relative = 1e-12);
    }

    #[test]
    fn reference_ratio_and_equivalence() {
        let p = EnergyModelParams::default();
        assert_relative_eq!(relative_energy(1, 10.0, &p).unwrap(), 1.0, max_relative = 1e-12);
        let a = relative_energy(3, 50.0, &p).unwrap();
        let b = relative_energy(10, 10.0, &p).unwrap();
        assert_relative_eq!(a, 11.384, epsilon = 1e-3);
        assert_relative_eq!(b, 10.0, max_relative = 1e-12);
        assert!((a / b - 1.0).abs() < 0.2);
    }

    #[test]
    fn ratios_do_not_depend_on_voltage() {
        let p = EnergyModelParams::default();
        let q = EnergyModelParams { voltage: 1.2, ..p.clone() };
        let a = relative_energy_curve(&[1, 5], &[10.0, 30.0], &p).unwrap();
        let b = relative_energy_curve(&[1, 5], &[10.0, 30.0], &q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x.ratio_to_reference, y.ratio_to_reference, max_relative = 1e-12);
        }
    }

    #[test]
    fn curve_increases_with_landmarks() {
        let p = EnergyModelParams::default();
        let rows = relative_energy_curve(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10], &[20.0], &p).unwrap();
        assert!(rows.windows(2).all(|w| w[1].ratio_to_reference > w[0].ratio_to_reference));
        assert_relative_eq!(
            relative_energy_curve(&[1], &[10.0], &p).unwrap()[0].ratio_to_reference,
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = EnergyModelParams {
            rx_current: 0.0,
            ..EnergyModelParams::default()
        };
        assert!(total_energy(10, 1, 10.0, &p).is_err());
        assert!(total_energy(10, 1, 0.0, &EnergyModelParams::default()).is_err());
    }
}
