use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{angle_diff, wrap_angle};

pub type Point = [f64; 2];

/// Pose of a rectangle at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

/// Shape and motion of one obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstacleMotion {
    StaticPolygon {
        vertices: Vec<Point>,
    },
    StaticDisk {
        center: Point,
        radius: f64,
    },
    /// Annulus piece spanning `[start_angle, start_angle + angular_width]`
    /// at `t = 0`, rotating counterclockwise about `center`.
    RotatingAnnularSector {
        #[serde(default)]
        center: Point,
        inner_radius: f64,
        outer_radius: f64,
        start_angle: f64,
        angular_width: f64,
        angular_speed: f64,
    },
    /// Rectangle displaced by `amplitude * sin(2πt/period + phase)` along `axis`.
    OscillatingBar {
        center: Point,
        half_length: f64,
        half_width: f64,
        /// Direction of the long side.
        #[serde(default)]
        orientation: f64,
        axis: Point,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Rectangle following a piecewise-linear schedule, held at the end poses
    /// outside the schedule.
    MovingRectangle {
        half_length: f64,
        half_width: f64,
        waypoints: Vec<Waypoint>,
    },
}

/// An obstacle plus its display color.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    #[serde(flatten)]
    pub motion: ObstacleMotion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

impl From<ObstacleMotion> for Obstacle {
    fn from(motion: ObstacleMotion) -> Self {
        Obstacle { motion, color: None }
    }
}

impl Obstacle {
    pub fn with_color(mut self, color: [u8; 3]) -> Self {
        self.color = Some(color);
        self
    }
}

#[inline]
fn rect_contains(p: Point, center: Point, heading: f64, hl: f64, hw: f64, margin: f64) -> bool {
    let (s, c) = heading.sin_cos();
    let dx = p[0] - center[0];
    let dy = p[1] - center[1];
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    let du = (u.abs() - hl).max(0.0);
    let dv = (v.abs() - hw).max(0.0);
    du.hypot(dv) <= margin
}

/// Distance from the polar point `(r, rel)` to the annular sector spanning
/// angles `[0, width]` and radii `[inner, outer]`; zero inside.
fn sector_distance(r: f64, rel: f64, inner: f64, outer: f64, width: f64) -> f64 {
    if rel <= width {
        return (inner - r).max(r - outer).max(0.0);
    }
    let edge = |beta: f64| {
        let along = r * (rel - beta).cos();
        let perp = r * (rel - beta).sin();
        (along - along.clamp(inner, outer)).hypot(perp)
    };
    edge(0.0).min(edge(width))
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (ax, ay) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ax * ax + ay * ay;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ax + (p[1] - a[1]) * ay) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * ax).hypot(p[1] - a[1] - t * ay)
}

fn polygon_contains(vertices: &[Point], p: Point) -> bool {
    // Even-odd crossing rule.
    let mut inside = false;
    let n = vertices.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

impl ObstacleMotion {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        match self {
            ObstacleMotion::StaticPolygon { vertices } => {
                if vertices.len() < 3 {
                    return bad(format!("polygon needs at least 3 vertices, got {}", vertices.len()));
                }
            }
            ObstacleMotion::StaticDisk { radius, .. } => {
                if !(*radius > 0.0) {
                    return bad(format!("disk radius must be positive, got {radius}"));
                }
            }
            ObstacleMotion::RotatingAnnularSector {
                inner_radius,
                outer_radius,
                angular_width,
                angular_speed,
                ..
            } => {
                if !(*inner_radius >= 0.0 && inner_radius < outer_radius) {
                    return bad(format!(
                        "sector radii must satisfy 0 <= inner < outer, got [{inner_radius}, {outer_radius}]"
                    ));
                }
                if !(*angular_width > 0.0 && *angular_width < TAU) {
                    return bad(format!("sector width must lie in (0, 2π), got {angular_width}"));
                }
                if !angular_speed.is_finite() {
                    return bad("sector angular speed must be finite".into());
                }
            }
            ObstacleMotion::OscillatingBar {
                half_length,
                half_width,
                axis,
                period,
                amplitude,
                ..
            } => {
                if !(*half_length > 0.0 && *half_width > 0.0) {
                    return bad("bar half-dimensions must be positive".into());
                }
                if !(*period > 0.0) || !amplitude.is_finite() {
                    return bad(format!("bar period must be positive, got {period}"));
                }
                if !(axis[0].hypot(axis[1]) > 0.0) {
                    return bad("bar oscillation axis must be nonzero".into());
                }
            }
            ObstacleMotion::MovingRectangle {
                half_length,
                half_width,
                waypoints,
            } => {
                if !(*half_length > 0.0 && *half_width > 0.0) {
                    return bad("rectangle half-dimensions must be positive".into());
                }
                if waypoints.is_empty() {
                    return bad("moving rectangle needs at least one waypoint".into());
                }
                if waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return bad("waypoint times must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        match self {
            ObstacleMotion::StaticPolygon { .. } | ObstacleMotion::StaticDisk { .. } => true,
            ObstacleMotion::RotatingAnnularSector { angular_speed, .. } => *angular_speed == 0.0,
            ObstacleMotion::OscillatingBar { amplitude, .. } => *amplitude == 0.0,
            ObstacleMotion::MovingRectangle { waypoints, .. } => waypoints.windows(2).all(|w| {
                w[0].x == w[1].x && w[0].y == w[1].y && w[0].heading == w[1].heading
            }),
        }
    }

    /// Period of the motion, if it is periodic and moving.
    pub fn period(&self) -> Option<f64> {
        match self {
            ObstacleMotion::RotatingAnnularSector { angular_speed, .. } if *angular_speed != 0.0 => {
                Some(TAU / angular_speed.abs())
            }
            ObstacleMotion::OscillatingBar { amplitude, period, .. } if *amplitude != 0.0 => Some(*period),
            _ => None,
        }
    }

    fn rect_pose(&self, t: f64) -> Option<(Point, f64, f64, f64)> {
        match self {
            ObstacleMotion::OscillatingBar {
                center,
                half_length,
                half_width,
                orientation,
                axis,
                amplitude,
                period,
                phase,
            } => {
                let norm = axis[0].hypot(axis[1]);
                let s = amplitude * (TAU * t / period + phase).sin() / norm;
                Some((
                    [center[0] + s * axis[0], center[1] + s * axis[1]],
                    *orientation,
                    *half_length,
                    *half_width,
                ))
            }
            ObstacleMotion::MovingRectangle {
                half_length,
                half_width,
                waypoints,
            } => {
                let (c, h) = interpolate_waypoints(waypoints, t);
                Some((c, h, *half_length, *half_width))
            }
            _ => None,
        }
    }

    /// Whether `p` lies in the obstacle, grown by `margin`, at time `t`.
    pub fn contains(&self, p: Point, t: f64, margin: f64) -> bool {
        match self {
            ObstacleMotion::StaticPolygon { vertices } => {
                polygon_contains(vertices, p)
                    || (margin > 0.0
                        && (0..vertices.len()).any(|i| {
                            point_segment_distance(p, vertices[i], vertices[(i + 1) % vertices.len()])
                                <= margin
                        }))
            }
            ObstacleMotion::StaticDisk { center, radius } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) <= radius + margin
            }
            ObstacleMotion::RotatingAnnularSector {
                center,
                inner_radius,
                outer_radius,
                start_angle,
                angular_width,
                angular_speed,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let r = dx.hypot(dy);
                if r < inner_radius - margin || r > outer_radius + margin {
                    return false;
                }
                // Angle measured in the frame that rotates with the sector.
                let rel = wrap_angle(dy.atan2(dx) - start_angle - angular_speed * t);
                sector_distance(r, rel, *inner_radius, *outer_radius, *angular_width) <= margin
            }
            ObstacleMotion::OscillatingBar { .. } | ObstacleMotion::MovingRectangle { .. } => {
                let (c, h, hl, hw) = self.rect_pose(t).expect("rectangle pose");
                rect_contains(p, c, h, hl, hw, margin)
            }
        }
    }

    /// A lower bound on the distance from `p` to the obstacle at time `t`.
    /// Never positive when `p` is inside.
    pub fn clearance_lower_bound(&self, p: Point, t: f64) -> f64 {
        match self {
            ObstacleMotion::StaticPolygon { vertices } => {
                let n = vertices.len() as f64;
                let cx = vertices.iter().map(|v| v[0]).sum::<f64>() / n;
                let cy = vertices.iter().map(|v| v[1]).sum::<f64>() / n;
                let rad = vertices
                    .iter()
                    .map(|v| (v[0] - cx).hypot(v[1] - cy))
                    .fold(0.0, f64::max);
                (p[0] - cx).hypot(p[1] - cy) - rad
            }
            ObstacleMotion::StaticDisk { center, radius } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) - radius
            }
            ObstacleMotion::RotatingAnnularSector {
                center,
                inner_radius,
                outer_radius,
                start_angle,
                angular_width,
                angular_speed,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let rel = wrap_angle(dy.atan2(dx) - start_angle - angular_speed * t);
                sector_distance(dx.hypot(dy), rel, *inner_radius, *outer_radius, *angular_width)
            }
            ObstacleMotion::OscillatingBar { .. } | ObstacleMotion::MovingRectangle { .. } => {
                let (c, h, hl, hw) = self.rect_pose(t).expect("rectangle pose");
                let (s, co) = h.sin_cos();
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                let du = ((co * dx + s * dy).abs() - hl).max(0.0);
                let dv = ((co * dy - s * dx).abs() - hw).max(0.0);
                du.hypot(dv)
            }
        }
    }

    /// Outline polygon at time `t`, for rendering. Sectors are approximated
    /// by `segments` chords per arc.
    pub fn outline(&self, t: f64, segments: usize) -> Vec<Point> {
        match self {
            ObstacleMotion::StaticPolygon { vertices } => vertices.clone(),
            ObstacleMotion::StaticDisk { center, radius } => (0..segments.max(8))
                .map(|s| {
                    let a = TAU * s as f64 / segments.max(8) as f64;
                    [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
                })
                .collect(),
            ObstacleMotion::RotatingAnnularSector {
                center,
                inner_radius,
                outer_radius,
                start_angle,
                angular_width,
                angular_speed,
            } => {
                let a0 = start_angle + angular_speed * t;
                let n = segments.max(2);
                let arc = |r: f64, rev: bool| {
                    (0..=n).map(move |s| {
                        let s = if rev { n - s } else { s };
                        let a = a0 + angular_width * s as f64 / n as f64;
                        [center[0] + r * a.cos(), center[1] + r * a.sin()]
                    })
                };
                arc(*outer_radius, false).chain(arc(*inner_radius, true)).collect()
            }
            ObstacleMotion::OscillatingBar { .. } | ObstacleMotion::MovingRectangle { .. } => {
                let (c, h, hl, hw) = self.rect_pose(t).expect("rectangle pose");
                rectangle_corners(c, h, hl, hw).to_vec()
            }
        }
    }
}

/// Corners of an oriented rectangle, counterclockwise from front-left.
pub fn rectangle_corners(center: Point, heading: f64, hl: f64, hw: f64) -> [Point; 4] {
    let (s, c) = heading.sin_cos();
    let corner = |u: f64, v: f64| [center[0] + c * u - s * v, center[1] + s * u + c * v];
    [corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)]
}

fn interpolate_waypoints(waypoints: &[Waypoint], t: f64) -> (Point, f64) {
    let first = waypoints[0];
    let last = waypoints[waypoints.len() - 1];
    if t <= first.t {
        return ([first.x, first.y], first.heading);
    }
    if t >= last.t {
        return ([last.x, last.y], last.heading);
    }
    let seg = waypoints
        .windows(2)
        .find(|w| t <= w[1].t)
        .expect("t inside schedule");
    let (a, b) = (seg[0], seg[1]);
    let s = (t - a.t) / (b.t - a.t);
    (
        [a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)],
        a.heading + s * angle_diff(b.heading, a.heading),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn sector() -> ObstacleMotion {
        ObstacleMotion::RotatingAnnularSector {
            center: [0.0, 0.0],
            inner_radius: 0.35,
            outer_radius: 0.65,
            start_angle: 0.0,
            angular_width: FRAC_PI_4,
            angular_speed: PI / 5.0,
        }
    }

    #[test]
    fn sector_rotates_past_a_point() {
        // Point at radius 0.5 and angle π/8, inside the initial span [0, π/4].
        let p = [0.5 * (PI / 8.0).cos(), 0.5 * (PI / 8.0).sin()];
        let s = sector();
        assert!(s.contains(p, 0.0, 0.0));
        // The trailing edge passes π/8 once the sector has turned by more than
        // π/8, i.e. after t = (π/8)/(π/5) = 0.625.
        assert!(s.contains(p, 0.6, 0.0));
        assert!(!s.contains(p, 0.65, 0.0));
        // It comes back after one period of 10 minus the width crossing time.
        assert!(!s.contains(p, 5.0, 0.0));
        assert!(s.contains(p, 10.0, 0.0));
        assert_eq!(s.period(), Some(10.0));
    }

    #[test]
    fn sector_radial_limits() {
        let s = sector();
        let a = PI / 8.0;
        assert!(!s.contains([0.3 * a.cos(), 0.3 * a.sin()], 0.0, 0.0));
        assert!(!s.contains([0.7 * a.cos(), 0.7 * a.sin()], 0.0, 0.0));
        assert!(s.contains([0.7 * a.cos(), 0.7 * a.sin()], 0.0, 0.06));
        // Just below the leading-edge angle π/4 + speed * 0 and just past the trailing edge with margin.
        let p = [0.5, -0.02];
        assert!(!s.contains(p, 0.0, 0.0));
        assert!(s.contains(p, 0.0, 0.03));
    }

    #[test]
    fn bar_oscillates() {
        let bar = ObstacleMotion::OscillatingBar {
            center: [0.0, 0.0],
            half_length: 0.5,
            half_width: 0.05,
            orientation: std::f64::consts::FRAC_PI_2,
            axis: [0.0, 2.0],
            amplitude: 0.35,
            period: 4.0,
            phase: 0.0,
        };
        assert!(bar.contains([0.0, 0.5], 0.0, 0.0));
        assert!(!bar.contains([0.0, 0.6], 0.0, 0.0));
        // Quarter period: shifted up by the full amplitude.
        assert!(bar.contains([0.0, 0.8], 1.0, 0.0));
        assert!(!bar.contains([0.0, -0.2], 1.0, 0.0));
        assert!(!bar.contains([0.06, 0.0], 0.0, 0.0));
        assert!(bar.contains([0.06, 0.0], 0.0, 0.02));
    }

    #[test]
    fn moving_rectangle_follows_schedule() {
        let r = ObstacleMotion::MovingRectangle {
            half_length: 0.1,
            half_width: 0.05,
            waypoints: vec![
                Waypoint { t: 0.0, x: -0.5, y: 0.0, heading: 0.0 },
                Waypoint { t: 2.0, x: 0.5, y: 0.0, heading: 0.0 },
            ],
        };
        assert!(r.contains([-0.5, 0.0], 0.0, 0.0));
        assert!(r.contains([0.0, 0.04], 1.0, 0.0));
        assert!(!r.contains([0.0, 0.06], 1.0, 0.0));
        assert!(r.contains([0.5, 0.0], 5.0, 0.0));
        assert!(!r.is_static());
    }

    #[test]
    fn polygon_membership() {
        let poly = ObstacleMotion::StaticPolygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        assert!(poly.contains([0.5, 0.5], 0.0, 0.0));
        assert!(!poly.contains([1.05, 0.5], 0.0, 0.0));
        assert!(poly.contains([1.05, 0.5], 0.0, 0.1));
        assert!(poly.is_static());
    }

    #[test]
    fn lower_bound_is_conservative() {
        use rand::{Rng, SeedableRng};
        let obstacles = [
            sector(),
            ObstacleMotion::StaticDisk { center: [0.2, 0.1], radius: 0.3 },
            ObstacleMotion::StaticPolygon { vertices: vec![[0.0, 0.0], [0.5, 0.1], [0.2, 0.6]] },
            ObstacleMotion::OscillatingBar {
                center: [0.1, 0.0],
                half_length: 0.4,
                half_width: 0.05,
                orientation: 0.3,
                axis: [0.0, 1.0],
                amplitude: 0.2,
                period: 3.0,
                phase: 0.5,
            },
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20000 {
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let t = rng.gen_range(0.0..10.0);
            let m = rng.gen_range(0.0..0.1);
            for o in &obstacles {
                if o.contains(p, t, m) {
                    assert!(o.clearance_lower_bound(p, t) <= m + 1e-12, "{o:?} {p:?}");
                }
            }
        }
    }

    #[test]
    fn validation() {
        let bad = ObstacleMotion::RotatingAnnularSector {
            center: [0.0, 0.0],
            inner_radius: 0.5,
            outer_radius: 0.4,
            start_angle: 0.0,
            angular_width: 1.0,
            angular_speed: 1.0,
        };
        assert!(bad.validate().is_err());
        assert!(sector().validate().is_ok());
        assert!(ObstacleMotion::StaticDisk { center: [0.0, 0.0], radius: 0.0 }.validate().is_err());
    }
}
