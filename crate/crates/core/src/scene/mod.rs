//! Time-dependent obstacle sets, the car footprint and collision queries.

mod builtin;
mod file;
mod obstacle;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid4};
use crate::kinematics::{CarParams, Configuration};

pub use builtin::{doors, lane_change, rotating_sectors};
pub use file::SceneFile;
pub use obstacle::{rectangle_corners, Obstacle, ObstacleMotion, Point, Waypoint};

/// Obstacles over a domain and horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub domain: Domain,
    pub horizon: f64,
    pub obstacles: Vec<Obstacle>,
    /// Growth applied to every obstacle when building solver masks.
    #[serde(default)]
    pub margin: f64,
}

impl Scene {
    pub fn new(domain: Domain, horizon: f64, obstacles: Vec<Obstacle>) -> Result<Self> {
        let s = Scene {
            domain,
            horizon,
            obstacles,
            margin: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(domain: Domain, horizon: f64) -> Self {
        Scene {
            domain,
            horizon,
            obstacles: Vec::new(),
            margin: 0.0,
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::invalid(format!("margin must be non-negative, got {}", self.margin)));
        }
        self.obstacles.iter().try_for_each(|o| o.motion.validate())
    }

    pub fn is_static(&self) -> bool {
        self.obstacles.iter().all(|o| o.motion.is_static())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.horizon {
            Ok(())
        } else {
            Err(Error::OutsideHorizon { t, horizon: self.horizon })
        }
    }

    /// Whether `p` is covered by an obstacle at time `t`. Points outside the
    /// domain are never occupied.
    pub fn occupied(&self, p: Point, t: f64) -> Result<bool> {
        self.check_time(t)?;
        Ok(self.occupied_grown(p, t, 0.0))
    }

    #[inline]
    pub(crate) fn occupied_grown(&self, p: Point, t: f64, margin: f64) -> bool {
        self.domain.contains(p[0], p[1]) && self.obstacles.iter().any(|o| o.motion.contains(p, t, margin))
    }

    /// Obstacles that may come within `reach` of `p` at time `t`.
    fn nearby(&self, p: Point, t: f64, reach: f64) -> Vec<&ObstacleMotion> {
        self.obstacles
            .iter()
            .map(|o| &o.motion)
            .filter(|o| o.clearance_lower_bound(p, t) <= reach)
            .collect()
    }

    /// Whether the car body at `c` overlaps an obstacle at time `t`.
    pub fn collides(&self, c: &Configuration, t: f64, sampler: &FootprintSampler) -> Result<bool> {
        self.check_time(t)?;
        Ok(self.collides_grown(c, t, sampler, 0.0))
    }

    pub(crate) fn collides_grown(
        &self,
        c: &Configuration,
        t: f64,
        sampler: &FootprintSampler,
        margin: f64,
    ) -> bool {
        let near = self.nearby([c.x, c.y], t, sampler.circumradius + margin);
        if near.is_empty() {
            return false;
        }
        let (s, co) = c.theta.sin_cos();
        sampler.offsets.iter().any(|o| {
            let r = [co * o[0] - s * o[1], s * o[0] + co * o[1]];
            let p = [c.x + r[0], c.y + r[1]];
            self.domain.contains(p[0], p[1]) && near.iter().any(|m| m.contains(p, t, margin))
        })
    }

    /// Illegal nodes of slice `n`: `mask[grid.linear(i, j, k)]` is true when
    /// the car at that node collides with the grown obstacles at `t_n`.
    pub fn illegal_mask(&self, grid: &Grid4, n: usize, car: &CarParams) -> Result<Vec<bool>> {
        if n > grid.nt {
            return Err(Error::OutOfRange(format!("time index {n} > {}", grid.nt)));
        }
        Ok(MaskBuilder::new(self, grid, car).mask(grid.time(n)))
    }
}

/// Oriented body rectangle at a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    /// Counterclockwise, starting at the front-left corner.
    pub corners: [Point; 4],
}

impl Footprint {
    pub fn area(&self) -> f64 {
        let c = &self.corners;
        0.5 * (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }
}

/// Body rectangle of the car placed at `c`, centered on the center of mass.
pub fn footprint(c: &Configuration, car: &CarParams) -> Footprint {
    let b = car.body();
    Footprint {
        corners: rectangle_corners([c.x, c.y], c.theta, b.half_length, b.half_width),
    }
}

/// Regular lattice of body-frame points covering the footprint, boundary
/// and corners included, plus the center.
#[derive(Clone, Debug)]
pub struct FootprintSampler {
    offsets: Vec<Point>,
    circumradius: f64,
}

impl FootprintSampler {
    /// `spacing` is the largest allowed gap between neighboring samples.
    pub fn new(car: &CarParams, spacing: f64) -> Self {
        assert!(spacing > 0.0, "sample spacing must be positive");
        let b = car.body();
        let axis = |half: f64| -> Vec<f64> {
            let segs = ((2.0 * half) / spacing).ceil().max(1.0) as usize;
            if half == 0.0 {
                return vec![0.0];
            }
            (0..=segs).map(|s| -half + 2.0 * half * s as f64 / segs as f64).collect()
        };
        let us = axis(b.half_length);
        let vs = axis(b.half_width);
        let mut offsets: Vec<Point> = us.iter().flat_map(|&u| vs.iter().map(move |&v| [u, v])).collect();
        if !offsets.contains(&[0.0, 0.0]) {
            offsets.push([0.0, 0.0]);
        }
        FootprintSampler {
            offsets,
            circumradius: b.half_length.hypot(b.half_width),
        }
    }

    /// Sampler whose spacing matches the grid, `min(Δx, Δy) / 2`.
    pub fn for_grid(car: &CarParams, grid: &Grid4) -> Self {
        Self::new(car, 0.5 * grid.dx.min(grid.dy))
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Builds illegal-node masks at arbitrary times, reusing the per-heading
/// rotated sample offsets.
pub struct MaskBuilder<'a> {
    scene: &'a Scene,
    grid: &'a Grid4,
    sampler: FootprintSampler,
    /// `rotated[k]` holds the sample offsets rotated to heading `θ_k`.
    rotated: Vec<Vec<Point>>,
}

impl<'a> MaskBuilder<'a> {
    pub fn new(scene: &'a Scene, grid: &'a Grid4, car: &CarParams) -> Self {
        let sampler = FootprintSampler::for_grid(car, grid);
        let rotated = (0..grid.ntheta)
            .map(|k| {
                let (s, c) = grid.theta(k).sin_cos();
                sampler
                    .offsets
                    .iter()
                    .map(|o| [c * o[0] - s * o[1], s * o[0] + c * o[1]])
                    .collect()
            })
            .collect();
        MaskBuilder {
            scene,
            grid,
            sampler,
            rotated,
        }
    }

    pub fn mask(&self, t: f64) -> Vec<bool> {
        let g = self.grid;
        let mut mask = vec![false; g.nodes_per_slice()];
        if self.scene.obstacles.is_empty() {
            return mask;
        }
        let margin = self.scene.margin;
        let reach = self.sampler.circumradius + margin;
        let row = (g.ny + 1) * g.ntheta;
        mask.par_chunks_mut(row).enumerate().for_each(|(i, out)| {
            let x = g.x(i);
            for j in 0..=g.ny {
                let y = g.y(j);
                let near = self.scene.nearby([x, y], t, reach);
                if near.is_empty() {
                    continue;
                }
                let hit = |p: Point| self.scene.domain.contains(p[0], p[1]) && near.iter().any(|m| m.contains(p, t, margin));
                let cell = &mut out[j * g.ntheta..(j + 1) * g.ntheta];
                // The center is one of the samples at every heading.
                if hit([x, y]) {
                    cell.fill(true);
                    continue;
                }
                for (k, v) in cell.iter_mut().enumerate() {
                    *v = self.rotated[k].iter().any(|o| hit([x + o[0], y + o[1]]));
                }
            }
        });
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn disk(cx: f64, cy: f64, r: f64) -> Obstacle {
        ObstacleMotion::StaticDisk { center: [cx, cy], radius: r }.into()
    }

    #[test]
    fn footprint_examples() {
        let car = CarParams::reference();
        let f = footprint(&Configuration::new(0.0, 0.0, 0.0), &car);
        let mut xs: Vec<_> = f.corners.iter().map(|c| (c[0], c[1])).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, vec![(-0.07, -0.04), (-0.07, 0.04), (0.07, -0.04), (0.07, 0.04)]);

        let f = footprint(&Configuration::new(0.0, 0.0, FRAC_PI_2), &car);
        for c in f.corners {
            assert!((c[0].abs() - 0.04).abs() < 1e-15 && (c[1].abs() - 0.07).abs() < 1e-15);
        }

        let f0 = footprint(&Configuration::new(0.0, 0.0, 0.7), &car);
        let f1 = footprint(&Configuration::new(0.3, 0.3, 0.7), &car);
        for (a, b) in f0.corners.iter().zip(f1.corners.iter()) {
            assert!((b[0] - a[0] - 0.3).abs() < 1e-15 && (b[1] - a[1] - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn occupancy_examples() {
        let s = Scene::new(Domain::UNIT_SQUARE, 5.0, vec![disk(0.2, 0.2, 0.2)]).unwrap();
        for t in [0.0, 2.5, 5.0] {
            assert!(s.occupied([0.25, 0.2], t).unwrap());
        }
        assert!(s.occupied([0.0, 0.0], 6.0).is_err());
        let outside = Scene::new(Domain::UNIT_SQUARE, 5.0, vec![disk(1.0, 0.0, 0.3)]).unwrap();
        assert!(!outside.occupied([1.1, 0.0], 0.0).unwrap());
        assert!(outside.occupied([0.9, 0.0], 0.0).unwrap());
    }

    #[test]
    fn collision_examples() {
        let car = CarParams::reference();
        let sampler = FootprintSampler::new(&car, 0.01);
        let s = Scene::new(Domain::UNIT_SQUARE, 1.0, vec![disk(0.5, 0.5, 0.3)]).unwrap();
        assert!(s.collides(&Configuration::new(0.5, 0.5, 1.0), 0.0, &sampler).unwrap());

        let half = Scene::new(
            Domain::UNIT_SQUARE,
            1.0,
            vec![ObstacleMotion::StaticPolygon {
                vertices: vec![[0.2, -1.0], [1.0, -1.0], [1.0, 1.0], [0.2, 1.0]],
            }
            .into()],
        )
        .unwrap();
        // Body diagonal 2 * 0.0806; clearance 0.2 - (-0.1) > diagonal.
        for th in [0.0, 0.5, 1.5, 3.0] {
            assert!(!half.collides(&Configuration::new(-0.1, 0.0, th), 0.0, &sampler).unwrap());
        }
    }

    #[test]
    fn thin_bar_is_detected() {
        // A bar exactly one sample spacing wide, placed strictly between two
        // lattice columns, must still hit a lattice column.
        let car = CarParams::reference();
        let spacing = 0.02;
        let sampler = FootprintSampler::new(&car, spacing);
        for shift in [0.0, 0.003, 0.0071, 0.013, 0.0199] {
            let bar = ObstacleMotion::OscillatingBar {
                center: [0.01 + shift - 0.07, 0.0],
                half_length: 0.5,
                half_width: spacing / 2.0,
                orientation: FRAC_PI_2,
                axis: [1.0, 0.0],
                amplitude: 0.0,
                period: 1.0,
                phase: 0.0,
            };
            let s = Scene::new(Domain::UNIT_SQUARE, 1.0, vec![bar.into()]).unwrap();
            assert!(s.collides(&Configuration::new(0.0, 0.0, 0.0), 0.0, &sampler).unwrap(), "shift {shift}");
        }
    }

    #[test]
    fn sampler_covers_corners_and_center() {
        let car = CarParams::reference();
        let s = FootprintSampler::new(&car, 0.02);
        for c in [[0.07, 0.04], [-0.07, 0.04], [-0.07, -0.04], [0.07, -0.04], [0.0, 0.0]] {
            assert!(s.offsets.iter().any(|o| (o[0] - c[0]).abs() < 1e-15 && (o[1] - c[1]).abs() < 1e-15));
        }
        let gap = s
            .offsets
            .iter()
            .filter(|o| o[1] == -0.04)
            .map(|o| o[0])
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        assert!(gap <= 0.02 + 1e-15);
        let point_car = CarParams::new(0.0, 0.0, 4.0).unwrap();
        assert_eq!(FootprintSampler::new(&point_car, 0.02).len(), 1);
    }

    #[test]
    fn masks() {
        let car = CarParams::reference();
        let g = Grid4::new(Domain::UNIT_SQUARE, 20, 20, 16, 10.0, 100).unwrap();
        let empty = Scene::empty(Domain::UNIT_SQUARE, 10.0);
        assert!(empty.illegal_mask(&g, 0, &car).unwrap().iter().all(|m| !m));

        let st = Scene::new(Domain::UNIT_SQUARE, 10.0, vec![disk(0.1, -0.2, 0.3)]).unwrap();
        let m0 = st.illegal_mask(&g, 0, &car).unwrap();
        assert!(m0.iter().any(|&m| m));
        assert_eq!(m0, st.illegal_mask(&g, 57, &car).unwrap());
        assert!(st.illegal_mask(&g, 101, &car).is_err());

        // Mask agrees with the direct footprint query.
        let sampler = FootprintSampler::for_grid(&car, &g);
        for (idx, &m) in m0.iter().enumerate() {
            let n = g.unlinear(idx);
            let (c, _) = g.node_to_config(n, 0).unwrap();
            assert_eq!(m, st.collides(&c, 0.0, &sampler).unwrap());
        }
    }

    #[test]
    fn rotating_mask_is_periodic() {
        let car = CarParams::reference();
        let scene = rotating_sectors().scene();
        let g = Grid4::new(Domain::UNIT_SQUARE, 40, 40, 16, 12.0, 1200).unwrap();
        let b = MaskBuilder::new(&scene, &g, &car);
        // All sectors share the period 10.
        let a = b.mask(0.37);
        assert!(a.iter().any(|&m| m));
        assert_eq!(a, b.mask(10.37));
        assert_ne!(a, b.mask(1.37));
    }

    proptest! {
        #[test]
        fn footprint_area_invariant(x in -1.0..1.0f64, y in -1.0..1.0f64, th in 0.0..TAU) {
            let car = CarParams::reference();
            let f = footprint(&Configuration::new(x, y, th), &car);
            prop_assert!((f.area() - 4.0 * 0.07 * 0.04).abs() < 1e-12);
        }

        #[test]
        fn bigger_car_collides_more(
            discs in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.02..0.2f64), 1..5),
            x in -0.9..0.9f64, y in -0.9..0.9f64, th in 0.0..TAU, grow in 0usize..6,
        ) {
            let obstacles = discs.iter().map(|&(cx, cy, r)| disk(cx, cy, r)).collect();
            let s = Scene::new(Domain::UNIT_SQUARE, 1.0, obstacles).unwrap();
            let small = CarParams::reference();
            let g = 0.01 * grow as f64;
            let big = small.with_body(0.07 + g, 0.04 + g).unwrap();
            let c = Configuration::new(x, y, th);
            // With half-dimensions on multiples of the spacing the lattices nest.
            let hit_small = s.collides(&c, 0.0, &FootprintSampler::new(&small, 0.01)).unwrap();
            let hit_big = s.collides(&c, 0.0, &FootprintSampler::new(&big, 0.01)).unwrap();
            prop_assert!(!hit_small || hit_big);
            // The dense region check agrees with the lattice whenever the lattice reports a hit.
            prop_assert!(!hit_small || region_hit(&s, &c, &small));
        }
    }

    /// Dense brute-force check of the continuous footprint region.
    fn region_hit(s: &Scene, c: &Configuration, car: &CarParams) -> bool {
        let b = car.body();
        let (sn, cs) = c.theta.sin_cos();
        let n = 60;
        (0..=n).any(|a| {
            (0..=n).any(|bb| {
                let u = -b.half_length + 2.0 * b.half_length * a as f64 / n as f64;
                let v = -b.half_width + 2.0 * b.half_width * bb as f64 / n as f64;
                s.occupied_grown([c.x + cs * u - sn * v, c.y + sn * u + cs * v], 0.0, 0.0)
            })
        })
    }
}
