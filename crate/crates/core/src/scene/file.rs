use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Obstacle, Scene};
use crate::error::{Error, Result};
use crate::grid::Domain;
use crate::kinematics::{CarParams, Configuration};

/// On-disk scene description.
///
/// ```json
/// {
///   "domain": {"x_min": -1, "x_max": 1, "y_min": -1, "y_max": 1},
///   "horizon": 10,
///   "car": {"d": 0.07, "R": 0.04, "W": 4, "body": {"half_length": 0.07, "half_width": 0.04}},
///   "target": {"x": 0, "y": 0, "theta": 3.14159},
///   "margin": 0.0,
///   "starts": [{"x": -0.8, "y": -0.8, "theta": 0.785}],
///   "obstacles": [{"kind": "static_disk", "center": [0.3, 0.2], "radius": 0.1}]
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub domain: Domain,
    pub horizon: f64,
    pub car: CarParams,
    pub target: Configuration,
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub starts: Vec<Configuration>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl SceneFile {
    pub fn scene(&self) -> Scene {
        Scene {
            domain: self.domain,
            horizon: self.horizon,
            obstacles: self.obstacles.clone(),
            margin: self.margin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.car.validate()?;
        self.scene().validate()?;
        if !self.domain.contains(self.target.x, self.target.y) {
            return Err(Error::OutsideDomain(format!("target ({}, {})", self.target.x, self.target.y)));
        }
        Ok(())
    }

    /// Parses and validates. Errors carry the serde line/column.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            path: origin.to_path_buf(),
            message,
        };
        let mut file: SceneFile = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        file.target = Configuration::new(file.target.x, file.target.y, file.target.theta);
        for s in &mut file.starts {
            *s = Configuration::new(s.x, s.y, s.theta);
        }
        file.validate().map_err(|e| schema(e.to_string()))?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ObstacleMotion, Waypoint};
    use proptest::prelude::*;
    use std::path::PathBuf;

    const MINIMAL: &str = r#"{
        "domain": {"x_min": -1, "x_max": 1, "y_min": -1, "y_max": 1},
        "horizon": 10,
        "car": {"d": 0.07, "R": 0.04, "W": 4},
        "target": {"x": 0, "y": 0, "theta": 3.141592653589793},
        "obstacles": [
            {"kind": "static_disk", "center": [0.5, 0.5], "radius": 0.1},
            {"kind": "rotating_annular_sector", "inner_radius": 0.35, "outer_radius": 0.65,
             "start_angle": 0, "angular_width": 0.785, "angular_speed": 0.628, "color": [0, 0, 255]}
        ]
    }"#;

    #[test]
    fn parses_reference_parameters() {
        let f = SceneFile::from_json(MINIMAL, &PathBuf::from("mem.json")).unwrap();
        assert_eq!(f.car, CarParams::reference());
        assert_eq!(f.obstacles.len(), 2);
        assert_eq!(f.obstacles[1].color, Some([0, 0, 255]));
        assert!(f.starts.is_empty());
    }

    #[test]
    fn missing_target_is_named() {
        let text = MINIMAL.replace(r#""target": {"x": 0, "y": 0, "theta": 3.141592653589793},"#, "");
        let err = SceneFile::from_json(&text, &PathBuf::from("s.json")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Schema { .. }));
        assert!(msg.contains("missing field `target`"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn bad_values_are_schema_errors() {
        let text = MINIMAL.replace(r#""inner_radius": 0.35"#, r#""inner_radius": 0.95"#);
        assert!(matches!(
            SceneFile::from_json(&text, &PathBuf::from("s.json")),
            Err(Error::Schema { .. })
        ));
        let text = MINIMAL.replace(r#""kind": "static_disk""#, r#""kind": "teapot""#);
        let msg = SceneFile::from_json(&text, &PathBuf::from("s.json")).unwrap_err().to_string();
        assert!(msg.contains("teapot"), "{msg}");
    }

    fn arb_obstacle() -> impl Strategy<Value = Obstacle> {
        prop_oneof![
            (-1.0..1.0f64, -1.0..1.0f64, 0.01..0.5f64)
                .prop_map(|(x, y, r)| ObstacleMotion::StaticDisk { center: [x, y], radius: r }.into()),
            (0.0..0.4f64, 0.05..0.4f64, 0.0..6.0f64, 0.1..6.0f64, -2.0..2.0f64).prop_map(
                |(ri, dr, a, w, s)| ObstacleMotion::RotatingAnnularSector {
                    center: [0.0, 0.0],
                    inner_radius: ri,
                    outer_radius: ri + dr,
                    start_angle: a,
                    angular_width: w,
                    angular_speed: s,
                }
                .into()
            ),
            (-1.0..1.0f64, 0.01..0.5f64, 0.1..5.0f64, 0.0..0.5f64).prop_map(|(x, hl, p, a)| {
                Obstacle::from(ObstacleMotion::OscillatingBar {
                    center: [x, 0.0],
                    half_length: hl,
                    half_width: 0.03,
                    orientation: 1.5,
                    axis: [0.0, 1.0],
                    amplitude: a,
                    period: p,
                    phase: 0.2,
                })
                .with_color([10, 20, 30])
            }),
            (-1.0..1.0f64, 0.1..3.0f64).prop_map(|(x, t)| ObstacleMotion::MovingRectangle {
                half_length: 0.1,
                half_width: 0.05,
                waypoints: vec![
                    Waypoint { t: 0.0, x, y: 0.1, heading: 0.0 },
                    Waypoint { t, x: x + 0.5, y: 0.1, heading: 0.2 },
                ],
            }
            .into()),
            proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3..7).prop_map(|v| {
                ObstacleMotion::StaticPolygon { vertices: v.into_iter().map(|(x, y)| [x, y]).collect() }.into()
            }),
        ]
    }

    proptest! {
        #[test]
        fn json_roundtrip_is_fixed_point(
            obstacles in proptest::collection::vec(arb_obstacle(), 0..6),
            tx in -1.0..1.0f64, ty in -1.0..1.0f64, th in -7.0..7.0f64,
            body in proptest::option::of((0.07..0.2f64, 0.04..0.1f64)),
            margin in 0.0..0.05f64,
        ) {
            let mut car = CarParams::reference();
            if let Some((l, w)) = body {
                car = car.with_body(l, w).unwrap();
            }
            let f = SceneFile {
                domain: Domain::UNIT_SQUARE,
                horizon: 10.0,
                car,
                target: Configuration::new(tx, ty, th),
                margin,
                starts: vec![Configuration::new(ty, tx, 1.0)],
                obstacles,
            };
            let origin = PathBuf::from("prop.json");
            let once = SceneFile::from_json(&f.to_json(), &origin).unwrap();
            let text = once.to_json();
            let twice = SceneFile::from_json(&text, &origin).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(text, twice.to_json());
            prop_assert_eq!(once, f);
        }
    }
}
