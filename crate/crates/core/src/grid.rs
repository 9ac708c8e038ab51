//! Uniform discretization of `Ω × [0, 2π) × [0, T]`.
//!
//! Spatial axes carry `I + 1` and `J + 1` nodes including both walls. The
//! heading axis carries `K` distinct nodes, `θ_k = kΔθ` with `Δθ = 2π / K`;
//! node `K` is node `0`. Time carries `N + 1` nodes `t_n = nΔt`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{wrap_angle, CarParams, Configuration};

/// Rectangular spatial domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub const UNIT_SQUARE: Domain = Domain {
        x_min: -1.0,
        x_max: 1.0,
        y_min: -1.0,
        y_max: 1.0,
    };

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate domain {self:?}")))
        }
    }
}

/// Largest stable time step: `1 / ((1+Wd)/Δx + (1+Wd)/Δy + W/Δθ)`.
pub fn cfl_max_dt(dx: f64, dy: f64, dtheta: f64, car: &CarParams) -> f64 {
    let s = car.max_axis_speed();
    1.0 / (s / dx + s / dy + car.w_max / dtheta)
}

/// Spatial/heading node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl NodeIndex {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        NodeIndex { i, j, k }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid4 {
    pub domain: Domain,
    /// Cell counts along x and y.
    pub nx: usize,
    pub ny: usize,
    /// Number of distinct heading nodes.
    pub ntheta: usize,
    /// Number of time steps.
    pub nt: usize,
    pub horizon: f64,
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub dt: f64,
}

impl Grid4 {
    /// Grid with an explicit number of time steps. Stability is checked by the
    /// solver, which knows the car.
    pub fn new(
        domain: Domain,
        nx: usize,
        ny: usize,
        ntheta: usize,
        horizon: f64,
        nt: usize,
    ) -> Result<Self> {
        domain.validate()?;
        if nx < 2 || ny < 2 || ntheta < 3 || nt == 0 {
            return Err(Error::invalid(format!(
                "grid resolution must be at least 2x2 cells, 3 headings and 1 time step (got {nx}x{ny}x{ntheta}, {nt} steps)"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Grid4 {
            domain,
            nx,
            ny,
            ntheta,
            nt,
            horizon,
            dx: (domain.x_max - domain.x_min) / nx as f64,
            dy: (domain.y_max - domain.y_min) / ny as f64,
            dtheta: TAU / ntheta as f64,
            dt: horizon / nt as f64,
        })
    }

    /// Grid whose time step is `safety` times the stable bound, rounded down so
    /// that an integer number of steps lands exactly on the horizon.
    pub fn with_cfl(
        domain: Domain,
        nx: usize,
        ny: usize,
        ntheta: usize,
        horizon: f64,
        car: &CarParams,
        safety: f64,
    ) -> Result<Self> {
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::invalid(format!("CFL safety factor must lie in (0, 1], got {safety}")));
        }
        let probe = Grid4::new(domain, nx, ny, ntheta, horizon, 1)?;
        let target_dt = safety * probe.cfl_max_dt(car);
        let nt = (horizon / target_dt).ceil() as usize;
        Grid4::new(domain, nx, ny, ntheta, horizon, nt.max(1))
    }

    pub fn cfl_max_dt(&self, car: &CarParams) -> f64 {
        cfl_max_dt(self.dx, self.dy, self.dtheta, car)
    }

    /// Node counts `(I + 1, J + 1, K)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx + 1, self.ny + 1, self.ntheta)
    }

    pub fn nodes_per_slice(&self) -> usize {
        (self.nx + 1) * (self.ny + 1) * self.ntheta
    }

    /// Row-major offset with heading fastest.
    #[inline]
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.ny + 1) + j) * self.ntheta + k
    }

    pub fn unlinear(&self, idx: usize) -> NodeIndex {
        let k = idx % self.ntheta;
        let rest = idx / self.ntheta;
        NodeIndex {
            i: rest / (self.ny + 1),
            j: rest % (self.ny + 1),
            k,
        }
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.domain.x_min + i as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.domain.y_min + j as f64 * self.dy
    }

    #[inline]
    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.dtheta
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        if n == self.nt {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    /// `k + step` modulo `K`.
    #[inline]
    pub fn wrap_k(&self, k: usize, step: i32) -> usize {
        (k as i64 + i64::from(step)).rem_euclid(self.ntheta as i64) as usize
    }

    pub fn node_to_config(&self, idx: NodeIndex, n: usize) -> Result<(Configuration, f64)> {
        if idx.i > self.nx || idx.j > self.ny || idx.k >= self.ntheta || n > self.nt {
            return Err(Error::OutOfRange(format!(
                "node ({}, {}, {}) at step {n} outside ({}, {}, {}) x {}",
                idx.i,
                idx.j,
                idx.k,
                self.nx,
                self.ny,
                self.ntheta - 1,
                self.nt
            )));
        }
        Ok((
            Configuration {
                x: self.x(idx.i),
                y: self.y(idx.j),
                theta: self.theta(idx.k),
            },
            self.time(n),
        ))
    }

    /// Nearest node per axis; exact midpoints go to the lower index.
    pub fn snap_config(&self, c: &Configuration) -> Result<NodeIndex> {
        if !self.domain.contains(c.x, c.y) {
            return Err(Error::OutsideDomain(format!("({}, {})", c.x, c.y)));
        }
        let i = round_half_down((c.x - self.domain.x_min) / self.dx).min(self.nx);
        let j = round_half_down((c.y - self.domain.y_min) / self.dy).min(self.ny);
        let k = round_half_down(wrap_angle(c.theta) / self.dtheta) % self.ntheta;
        Ok(NodeIndex { i, j, k })
    }
}

fn round_half_down(f: f64) -> usize {
    let fl = f.floor();
    let idx = if f - fl > 0.5 { fl + 1.0 } else { fl };
    idx.max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid4 {
        Grid4::new(Domain::UNIT_SQUARE, 100, 100, 100, 10.0, 2000).unwrap()
    }

    #[test]
    fn cfl_reference_parameters() {
        // (1 + 0.28) / 0.02 = 64 per spatial axis, 4 / (2π/100) = 63.662.
        let car = CarParams::reference();
        let dt = cfl_max_dt(0.02, 0.02, TAU / 100.0, &car);
        let expected = 1.0 / (64.0 + 64.0 + 400.0 / TAU);
        assert!((dt - expected).abs() < 1e-15);
        assert!((dt - 0.0052175).abs() < 5e-7);
    }

    #[test]
    fn cfl_unit_spacing_and_homogeneity() {
        for w in [0.5, 1.0, 4.0, 10.0] {
            let car = CarParams::new(0.0, 0.0, w).unwrap();
            assert!((cfl_max_dt(1.0, 1.0, 1.0, &car) - 1.0 / (2.0 + w)).abs() < 1e-15);
        }
        let car = CarParams::reference();
        let a = cfl_max_dt(0.03, 0.05, 0.1, &car);
        let b = cfl_max_dt(0.06, 0.1, 0.2, &car);
        assert!((b - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn with_cfl_lands_on_horizon() {
        let car = CarParams::reference();
        let g = Grid4::with_cfl(Domain::UNIT_SQUARE, 100, 100, 100, 10.0, &car, 0.9).unwrap();
        assert!(g.dt <= 0.9 * g.cfl_max_dt(&car));
        assert!((g.dt * g.nt as f64 - 10.0).abs() < 1e-9);
        assert!(Grid4::with_cfl(Domain::UNIT_SQUARE, 10, 10, 10, 1.0, &car, 1.5).is_err());
    }

    #[test]
    fn rejects_degenerate_resolution() {
        assert!(Grid4::new(Domain::UNIT_SQUARE, 0, 10, 10, 1.0, 10).is_err());
        assert!(Grid4::new(Domain::UNIT_SQUARE, 10, 10, 0, 1.0, 10).is_err());
        assert!(Grid4::new(Domain::UNIT_SQUARE, 10, 10, 10, 0.0, 10).is_err());
    }

    #[test]
    fn node_to_config_corners() {
        let g = grid();
        let (c, t) = g.node_to_config(NodeIndex::new(0, 0, 0), 0).unwrap();
        assert_eq!((c.x, c.y, c.theta, t), (-1.0, -1.0, 0.0, 0.0));
        let (c, t) = g.node_to_config(NodeIndex::new(100, 100, 0), 2000).unwrap();
        assert_eq!((c.x, c.y, c.theta, t), (1.0, 1.0, 0.0, 10.0));
        assert!(g.node_to_config(NodeIndex::new(0, 0, 100), 0).is_err());
        assert!(g.node_to_config(NodeIndex::new(101, 0, 0), 0).is_err());
        assert!(g.node_to_config(NodeIndex::new(0, 0, 0), 2001).is_err());
    }

    #[test]
    fn snap_examples() {
        let g = grid();
        let idx = NodeIndex::new(37, 12, 5);
        let (c, _) = g.node_to_config(idx, 0).unwrap();
        assert_eq!(g.snap_config(&c).unwrap(), idx);

        let c = Configuration::new(0.0, 0.0, TAU - g.dtheta / 4.0);
        assert_eq!(g.snap_config(&c).unwrap().k, 0);

        // Exact binary midpoint on a power-of-two grid.
        let g2 = Grid4::new(Domain { x_min: 0.0, x_max: 4.0, y_min: 0.0, y_max: 4.0 }, 4, 4, 8, 1.0, 1).unwrap();
        let c = Configuration::new(1.5, 2.5, 0.0);
        let idx = g2.snap_config(&c).unwrap();
        assert_eq!((idx.i, idx.j), (1, 2));

        assert!(g.snap_config(&Configuration::new(1.5, 0.0, 0.0)).is_err());
    }

    #[test]
    fn theta_wraps_after_k_steps() {
        let g = grid();
        for k in [0, 1, 50, 99] {
            let mut kk = k;
            for _ in 0..g.ntheta {
                kk = g.wrap_k(kk, 1);
            }
            assert_eq!(kk, k);
            assert_eq!(g.wrap_k(g.wrap_k(k, -1), 1), k);
        }
    }

    #[test]
    fn linear_roundtrip() {
        let g = Grid4::new(Domain::UNIT_SQUARE, 6, 7, 5, 1.0, 3).unwrap();
        for idx in 0..g.nodes_per_slice() {
            let n = g.unlinear(idx);
            assert_eq!(g.linear(n.i, n.j, n.k), idx);
        }
    }

    proptest! {
        #[test]
        fn snapping_displacement_bounded(x in -1.0..1.0f64, y in -1.0..1.0f64, th in 0.0..TAU) {
            let g = Grid4::new(Domain::UNIT_SQUARE, 50, 40, 64, 1.0, 10).unwrap();
            let c = Configuration::new(x, y, th);
            let idx = g.snap_config(&c).unwrap();
            let (s, _) = g.node_to_config(idx, 0).unwrap();
            prop_assert!((s.x - c.x).abs() <= g.dx / 2.0 + 1e-12);
            prop_assert!((s.y - c.y).abs() <= g.dy / 2.0 + 1e-12);
            prop_assert!(crate::kinematics::angle_diff(s.theta, c.theta).abs() <= g.dtheta / 2.0 + 1e-12);
        }
    }
}
