//! The three demonstration scenes. Obstacle sizes, speeds and phases are
//! tuned by hand. The same scenes ship as JSON under `scenes/`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use super::{Obstacle, ObstacleMotion, SceneFile, Waypoint};
use crate::grid::Domain;
use crate::kinematics::{CarParams, Configuration};

const BLUE: [u8; 3] = [40, 90, 220];
const BLACK: [u8; 3] = [0, 0, 0];

/// Four annular sectors rotating counterclockwise about the origin; the
/// black pair turns three times as fast as the blue pair. Cars start near
/// the corners and end at the center facing west.
pub fn rotating_sectors() -> SceneFile {
    let blue_speed = PI / 5.0;
    // Blue sectors sweep across the north-west and south-east diagonals
    // while those cars approach the ring.
    let blue_start = -17.0 * PI / 32.0;
    let black_start = -PI / 16.0;
    let sector = |start: f64, speed: f64| ObstacleMotion::RotatingAnnularSector {
        center: [0.0, 0.0],
        inner_radius: 0.35,
        outer_radius: 0.65,
        start_angle: start,
        angular_width: FRAC_PI_4,
        angular_speed: speed,
    };
    SceneFile {
        domain: Domain::UNIT_SQUARE,
        horizon: 10.0,
        car: CarParams::reference(),
        target: Configuration::new(0.0, 0.0, PI),
        margin: 0.0,
        starts: vec![
            Configuration::new(-0.8, -0.8, FRAC_PI_4),
            Configuration::new(0.8, -0.8, 3.0 * FRAC_PI_4),
            Configuration::new(0.8, 0.8, 5.0 * FRAC_PI_4),
            Configuration::new(-0.8, 0.8, 7.0 * FRAC_PI_4),
        ],
        obstacles: vec![
            Obstacle::from(sector(blue_start, blue_speed)).with_color(BLUE),
            Obstacle::from(sector(blue_start + PI, blue_speed)).with_color(BLUE),
            Obstacle::from(sector(black_start, 3.0 * blue_speed)).with_color(BLACK),
            Obstacle::from(sector(black_start + PI, 3.0 * blue_speed)).with_color(BLACK),
        ],
    }
}

/// Three vertical walls, each pierced by a doorway that slides up and down.
/// The car crosses from the bottom-left corner to the top-right corner.
pub fn doors() -> SceneFile {
    let gap = 0.4;
    let wall_half = 1.0;
    let mut obstacles = Vec::new();
    for (x, period, phase) in [(-0.4, 4.0, 0.0), (0.0, 3.0, 2.0), (0.4, 5.0, 4.0)] {
        for side in [-1.0, 1.0] {
            obstacles.push(
                Obstacle::from(ObstacleMotion::OscillatingBar {
                    center: [x, side * (0.5 * gap + wall_half)],
                    half_length: wall_half,
                    half_width: 0.03,
                    orientation: FRAC_PI_2,
                    axis: [0.0, 1.0],
                    amplitude: 0.35,
                    period,
                    phase,
                })
                .with_color(BLACK),
            );
        }
    }
    SceneFile {
        domain: Domain::UNIT_SQUARE,
        horizon: 10.0,
        car: CarParams::reference(),
        target: Configuration::new(0.8, 0.8, FRAC_PI_4),
        margin: 0.0,
        starts: vec![Configuration::new(-0.8, -0.8, FRAC_PI_4)],
        obstacles,
    }
}

/// Two cars drive east in the upper lane at constant speed; the planned car
/// starts in the lower lane and merges into the gap between them.
pub fn lane_change() -> SceneFile {
    let lane = 0.15;
    let speed = 0.15;
    // The trailing car reaches the target pose at about t = 5.5.
    let horizon = 4.0;
    let car = |x0: f64| {
        Obstacle::from(ObstacleMotion::MovingRectangle {
            half_length: 0.1,
            half_width: 0.05,
            waypoints: vec![
                Waypoint { t: 0.0, x: x0, y: lane, heading: 0.0 },
                Waypoint { t: horizon, x: x0 + speed * horizon, y: lane, heading: 0.0 },
            ],
        })
        .with_color(BLUE)
    };
    SceneFile {
        domain: Domain::UNIT_SQUARE,
        horizon,
        car: CarParams::reference(),
        target: Configuration::new(0.1, lane, 0.0),
        margin: 0.0,
        starts: vec![Configuration::new(-0.8, -lane, 0.0)],
        obstacles: vec![car(-0.9), car(0.3)],
    }
}
