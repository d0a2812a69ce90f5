//! Bundled mission presets and the JSON mission-file format.
//!
//! Mission files carry explicit unit tags because densities are naturally
//! quoted per km² while ranges are usually quoted in meters:
//!
//! ```json
//! {
//!   "name": "intelligence",
//!   "gamma": 1.0, "delta": 0.0, "p": 40.0, "eta": 4.0, "area": 1.0,
//!   "weights": [0.8, 0.2],
//!   "layers": [
//!     { "lambda_min": 0.1, "lambda_max": 10, "lambda_unit": "per_km2",
//!       "r_min": 100, "r_max": 1000, "r_unit": "m" }
//!   ],
//!   "thresholds": { "intra": [0, 0.7], "inter": [[0, 0.8], [0, 0]], "global": 0.7 }
//! }
//! ```
//!
//! `area` (km², default 1) and `verify_thresholds` (same shape as
//! `thresholds`) are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::epidemic::ThreatParams;
use crate::error::{Error, Result};
use crate::optimizer::{LayerBounds, MissionSpec, Thresholds};

fn table1_layers() -> Vec<LayerBounds> {
    vec![
        LayerBounds {
            density: (0.1, 10.0),
            range_km: (0.1, 1.0),
        },
        LayerBounds {
            density: (1.0, 40.0),
            range_km: (0.01, 0.5),
        },
    ]
}

/// Two-layer intelligence mission: costly power, commanders relay to followers.
pub fn preset_intelligence() -> MissionSpec {
    MissionSpec {
        name: "intelligence".into(),
        layers: table1_layers(),
        thresholds: Thresholds {
            intra: vec![0.0, 0.7],
            inter: vec![vec![0.0, 0.8], vec![0.0, 0.0]],
            global: 0.7,
        },
        verify_thresholds: None,
        weights: vec![0.8, 0.2],
        power_price: 40.0,
        path_loss: 4.0,
        area_km2: 1.0,
        threat: ThreatParams::default(),
    }
}

/// Two-layer encounter battle: cheap power, commander density fixed at 5 km⁻².
pub fn preset_encounter() -> MissionSpec {
    let mut layers = table1_layers();
    layers[0].density = (5.0, 5.0);
    MissionSpec {
        name: "encounter".into(),
        layers,
        thresholds: Thresholds {
            intra: vec![0.6, 0.0],
            inter: vec![vec![0.0, 0.0], vec![0.7, 0.0]],
            global: 0.7,
        },
        verify_thresholds: None,
        weights: vec![0.8, 0.2],
        power_price: 8.0,
        path_loss: 4.0,
        area_km2: 1.0,
        threat: ThreatParams::default(),
    }
}

pub const PRESET_NAMES: [&str; 2] = ["intelligence", "encounter"];

pub fn preset(name: &str) -> Result<MissionSpec> {
    match name.to_ascii_lowercase().as_str() {
        "intelligence" => Ok(preset_intelligence()),
        "encounter" => Ok(preset_encounter()),
        other => Err(Error::InvalidParameter(format!(
            "unknown preset '{other}' (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DensityUnit {
    PerKm2,
    PerM2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LengthUnit {
    M,
    Km,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    lambda_min: f64,
    lambda_max: f64,
    lambda_unit: DensityUnit,
    r_min: f64,
    r_max: f64,
    r_unit: LengthUnit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MissionFile {
    name: String,
    gamma: f64,
    delta: f64,
    p: f64,
    eta: f64,
    #[serde(default = "unit_area")]
    area: f64,
    weights: Vec<f64>,
    layers: Vec<LayerFile>,
    thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verify_thresholds: Option<Thresholds>,
}

fn unit_area() -> f64 {
    1.0
}

impl MissionFile {
    fn into_spec(self) -> Result<MissionSpec> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let d = match l.lambda_unit {
                    DensityUnit::PerKm2 => 1.0,
                    DensityUnit::PerM2 => 1e6,
                };
                let r = match l.r_unit {
                    LengthUnit::M => 1e-3,
                    LengthUnit::Km => 1.0,
                };
                LayerBounds {
                    density: (l.lambda_min * d, l.lambda_max * d),
                    range_km: (l.r_min * r, l.r_max * r),
                }
            })
            .collect();
        let spec = MissionSpec {
            name: self.name,
            layers,
            thresholds: self.thresholds,
            verify_thresholds: self.verify_thresholds,
            weights: self.weights,
            power_price: self.p,
            path_loss: self.eta,
            area_km2: self.area,
            threat: ThreatParams {
                gamma: self.gamma,
                delta: self.delta,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    fn from_spec(spec: &MissionSpec) -> Self {
        MissionFile {
            name: spec.name.clone(),
            gamma: spec.threat.gamma,
            delta: spec.threat.delta,
            p: spec.power_price,
            eta: spec.path_loss,
            area: spec.area_km2,
            weights: spec.weights.clone(),
            layers: spec
                .layers
                .iter()
                .map(|b| LayerFile {
                    lambda_min: b.density.0,
                    lambda_max: b.density.1,
                    lambda_unit: DensityUnit::PerKm2,
                    r_min: b.range_km.0,
                    r_max: b.range_km.1,
                    r_unit: LengthUnit::Km,
                })
                .collect(),
            thresholds: spec.thresholds.clone(),
            verify_thresholds: spec.verify_thresholds.clone(),
        }
    }
}

/// Parses and validates a mission from JSON text.
pub fn parse_mission(text: &str) -> Result<MissionSpec> {
    let file: MissionFile = serde_json::from_str(text).map_err(schema_error)?;
    file.into_spec()
}

/// Reads, parses and validates a mission file; units come back as km / km⁻².
pub fn load_mission(path: impl AsRef<Path>) -> Result<MissionSpec> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_mission(&text)
}

/// Pretty JSON in the mission-file format, ranges in km.
pub fn mission_to_json(spec: &MissionSpec) -> String {
    let mut s =
        serde_json::to_string_pretty(&MissionFile::from_spec(spec)).expect("mission serializes");
    s.push('\n');
    s
}

pub fn save_mission(spec: &MissionSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), mission_to_json(spec))?;
    Ok(())
}

/// serde_json names the offending field in backticks; surface it.
fn schema_error(e: serde_json::Error) -> Error {
    let message = e.to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| format!("line {} column {}", e.line(), e.column()));
    Error::Schema { field, message }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intelligence_values() {
        let m = preset_intelligence();
        assert_eq!(m.power_price, 40.0);
        assert_eq!(m.layers[1].range_km, (0.01, 0.5));
        assert_eq!(m.thresholds.inter[0][1], 0.8);
        assert_eq!(m.thresholds.global, 0.7);
        m.validate().unwrap();
    }

    #[test]
    fn encounter_values() {
        let m = preset_encounter();
        assert_eq!(m.layers[0].density, (5.0, 5.0));
        assert_eq!(m.power_price, 8.0);
        assert_eq!(m.thresholds.inter[1][0], 0.7);
        assert_eq!(m.thresholds.intra[0], 0.6);
        m.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        for m in [preset_intelligence(), preset_encounter()] {
            assert_eq!(parse_mission(&mission_to_json(&m)).unwrap(), m);
        }
    }

    #[test]
    fn meters_converted() {
        let text = mission_to_json(&preset_intelligence())
            .replace("\"r_min\": 0.1,", "\"r_min\": 100.0,")
            .replace("\"r_max\": 1.0,", "\"r_max\": 1000.0,")
            .replacen("\"r_unit\": \"km\"", "\"r_unit\": \"m\"", 1);
        let m = parse_mission(&text).unwrap();
        assert_eq!(m.layers[0].range_km, (0.1, 1.0));
    }

    #[test]
    fn weight_sum_rejected() {
        let text =
            mission_to_json(&preset_intelligence()).replace("0.8,\n    0.2", "0.5,\n    0.6");
        assert!(matches!(parse_mission(&text), Err(Error::WeightSum(_))));
    }

    #[test]
    fn schema_errors_name_field() {
        let text = mission_to_json(&preset_intelligence()).replace("\"eta\"", "\"etta\"");
        match parse_mission(&text) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "etta"),
            other => panic!("{other:?}"),
        }
        let text = mission_to_json(&preset_intelligence()).replace("\"km\"", "\"miles\"");
        assert!(matches!(parse_mission(&text), Err(Error::Schema { .. })));
    }
}
