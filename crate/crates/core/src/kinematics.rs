//! Car model, the discrete control set and the upwind coefficient table.
//!
//! The car is described by its center of mass `(x, y)` and heading `theta`.
//! With tangential control `v` and angular control `w`, both in `{-1, 0, 1}`,
//! the center of mass moves as
//!
//! ```text
//! x' = v cos(theta) - w W d sin(theta)
//! y' = v sin(theta) + w W d cos(theta)
//! theta' = w W
//! ```
//!
//! where `d` is the distance from the rear axle to the center of mass and `W`
//! the maximum angular velocity. The half-axle `R` only enters the collision
//! footprint.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed shortest angular difference `a - b`, in `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Half-dimensions of the rectangular body, centered on the center of mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub half_length: f64,
    pub half_width: f64,
}

/// Vehicle geometry and angular velocity bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    /// Rear axle to center of mass.
    pub d: f64,
    /// Half of the rear axle length.
    #[serde(rename = "R")]
    pub r: f64,
    /// Maximum angular velocity.
    #[serde(rename = "W")]
    pub w_max: f64,
    /// Body rectangle. Defaults to half-length `d` and half-width `R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Body>,
}

impl CarParams {
    pub fn new(d: f64, r: f64, w_max: f64) -> Result<Self> {
        let car = CarParams {
            d,
            r,
            w_max,
            body: None,
        };
        car.validate()?;
        Ok(car)
    }

    /// The car of the demonstration scenes: `d = 0.07`, `R = 0.04`, `W = 4`.
    pub fn reference() -> Self {
        CarParams {
            d: 0.07,
            r: 0.04,
            w_max: 4.0,
            body: None,
        }
    }

    pub fn with_body(mut self, half_length: f64, half_width: f64) -> Result<Self> {
        self.body = Some(Body {
            half_length,
            half_width,
        });
        self.validate()?;
        Ok(self)
    }

    pub fn body(&self) -> Body {
        self.body.unwrap_or(Body {
            half_length: self.d,
            half_width: self.r,
        })
    }

    /// Upper bound on `|x'|` and `|y'|` over all controls.
    pub fn max_axis_speed(&self) -> f64 {
        1.0 + self.w_max * self.d
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.d, self.r, self.w_max].iter().all(|v| v.is_finite());
        if !finite || self.d < 0.0 || self.r < 0.0 || self.w_max <= 0.0 {
            return Err(Error::invalid(format!(
                "car parameters must satisfy d >= 0, R >= 0, W > 0 (got d={}, R={}, W={})",
                self.d, self.r, self.w_max
            )));
        }
        if let Some(b) = self.body {
            if !(b.half_length >= self.d && b.half_width >= self.r) {
                return Err(Error::invalid(format!(
                    "body ({} x {}) must contain the rear axle and center of mass (d={}, R={})",
                    b.half_length, b.half_width, self.d, self.r
                )));
            }
        }
        Ok(())
    }
}

/// One of the seven admissible `(v, w)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlPair {
    pub v: i8,
    pub w: i8,
}

impl ControlPair {
    pub const WAIT: ControlPair = ControlPair { v: 0, w: 0 };

    /// The admissible pairs in tie-break order.
    pub const ALL: [ControlPair; 7] = [
        ControlPair { v: 0, w: 0 },
        ControlPair { v: 1, w: 0 },
        ControlPair { v: -1, w: 0 },
        ControlPair { v: 1, w: 1 },
        ControlPair { v: 1, w: -1 },
        ControlPair { v: -1, w: 1 },
        ControlPair { v: -1, w: -1 },
    ];

    pub fn new(v: i8, w: i8) -> Result<Self> {
        let pair = ControlPair { v, w };
        if pair.is_admissible() {
            Ok(pair)
        } else {
            Err(Error::invalid(format!("inadmissible control pair ({v}, {w})")))
        }
    }

    /// Turning in place, `(0, ±1)`, and out-of-range values are excluded.
    pub fn is_admissible(&self) -> bool {
        (-1..=1).contains(&self.v) && (-1..=1).contains(&self.w) && !(self.v == 0 && self.w != 0)
    }

    pub fn is_wait(&self) -> bool {
        self.v == 0 && self.w == 0
    }

    /// Position of this pair in [`ControlPair::ALL`].
    pub fn index(&self) -> Option<usize> {
        Self::ALL.iter().position(|p| p == self)
    }
}

/// A point of the configuration space, with `theta` kept in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Configuration {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Configuration {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    /// Euler step `self + dt * velocity`, rewrapping the heading.
    pub fn advance(&self, vel: Velocity, dt: f64) -> Self {
        Configuration::new(self.x + dt * vel.x, self.y + dt * vel.y, self.theta + dt * vel.theta)
    }

    pub fn distance(&self, other: &Configuration) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Time derivative of a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Velocity {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Equations of motion.
#[inline]
pub fn motion(c: &Configuration, u: ControlPair, car: &CarParams) -> Velocity {
    motion_at(c.theta, u, car)
}

#[inline]
fn motion_at(theta: f64, u: ControlPair, car: &CarParams) -> Velocity {
    let (s, co) = theta.sin_cos();
    let v = f64::from(u.v);
    let ww = f64::from(u.w) * car.w_max;
    Velocity {
        x: v * co - ww * car.d * s,
        y: v * s + ww * car.d * co,
        theta: ww,
    }
}

/// Upwind coefficients of one control pair at one heading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpwindCoeffs {
    /// x-velocity.
    pub a_coef: f64,
    /// `sign(a_coef)`, the x-offset of the upwind neighbor.
    pub a_sign: i32,
    /// y-velocity.
    pub b_coef: f64,
    pub b_sign: i32,
}

/// Coefficients at heading `theta_k`. They share the computation path of
/// [`motion`], so both agree bitwise.
pub fn upwind_coeffs(theta_k: f64, u: ControlPair, car: &CarParams) -> UpwindCoeffs {
    let vel = motion_at(theta_k, u, car);
    UpwindCoeffs {
        a_coef: vel.x,
        a_sign: sign(vel.x),
        b_coef: vel.y,
        b_sign: sign(vel.y),
    }
}

/// Result of the closed-form minimization over `[-1, 1]²` given a gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradientControls {
    pub v: i8,
    pub w: i8,
    /// `false` when the formula asks to turn in place.
    pub admissible: bool,
}

/// Bang-bang controls read off the gradient `(u_x, u_y, u_theta)`.
///
/// Only used as a diagnostic against the semi-Lagrangian argmin.
pub fn controls_from_gradient(grad: [f64; 3], theta: f64, car: &CarParams) -> GradientControls {
    let [ux, uy, ut] = grad;
    let (s, c) = theta.sin_cos();
    let v = -sign(ux * c + uy * s) as i8;
    let w = -sign(-car.d * s * ux + car.d * c * uy + ut) as i8;
    GradientControls {
        v,
        w,
        admissible: !(v == 0 && w != 0),
    }
}
