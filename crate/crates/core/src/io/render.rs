//! Raster frames of a scene with cars and their paths, as binary PPM.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{CarParams, Configuration};
use crate::scene::{footprint, Point, Scene};
use crate::tracer::Trajectory;

pub type Rgb = [u8; 3];

const WHITE: Rgb = [255, 255, 255];
const OBSTACLE: Rgb = [60, 60, 60];
const STAR: Rgb = [0, 170, 0];
const PALETTE: [Rgb; 6] = [
    [220, 30, 30],
    [0, 150, 60],
    [30, 60, 220],
    [235, 120, 190],
    [140, 140, 140],
    [230, 150, 0],
];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub times: Vec<f64>,
    /// Width in pixels; the height follows the domain aspect ratio.
    pub size: usize,
    pub trajectories: bool,
    pub footprints: bool,
}

impl PlotSpec {
    pub fn new(times: Vec<f64>, size: usize) -> Self {
        PlotSpec {
            times,
            size,
            trajectories: true,
            footprints: true,
        }
    }

    /// `count` times spread evenly over `[0, end]`.
    pub fn evenly(end: f64, count: usize, size: usize) -> Self {
        let times = if count <= 1 {
            vec![0.0]
        } else {
            (0..count).map(|i| end * i as f64 / (count - 1) as f64).collect()
        };
        Self::new(times, size)
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.size < 8 {
            return Err(Error::invalid(format!("image size {} is too small", self.size)));
        }
        match self.times.iter().find(|t| !(**t >= 0.0 && **t <= horizon)) {
            Some(t) => Err(Error::OutsideHorizon { t: *t, horizon }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Image {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(3 * self.pixels.len());
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

/// Maps world coordinates to pixels, y pointing up.
struct View {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl View {
    fn pixel(&self, p: Point) -> (f64, f64) {
        ((p[0] - self.x0) * self.scale, (self.y1 - p[1]) * self.scale)
    }

    fn world(&self, px: usize, py: usize) -> Point {
        [
            self.x0 + (px as f64 + 0.5) / self.scale,
            self.y1 - (py as f64 + 0.5) / self.scale,
        ]
    }
}

fn polygon_contains(poly: &[Point], p: Point) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn line(img: &mut Image, view: &View, a: Point, b: Point, c: Rgb) {
    let (ax, ay) = view.pixel(a);
    let (bx, by) = view.pixel(b);
    let steps = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let f = s as f64 / steps as f64;
        img.put((ax + f * (bx - ax)) as i64, (ay + f * (by - ay)) as i64, c);
    }
}

fn star(img: &mut Image, view: &View, p: Point, c: Rgb) {
    let r = 6.0 / view.scale;
    for a in 0..5 {
        let ang = std::f64::consts::FRAC_PI_2 + a as f64 * std::f64::consts::TAU / 5.0;
        line(img, view, p, [p[0] + r * ang.cos(), p[1] + r * ang.sin()], c);
    }
}

/// One frame at time `t`: obstacles, the path of each trajectory, each car
/// where it is at `t`, and green stars on starts and the target.
pub fn render_frame(
    scene: &Scene,
    car: &CarParams,
    target: Option<&Configuration>,
    trajectories: &[Trajectory],
    t: f64,
    spec: &PlotSpec,
) -> Image {
    let d = scene.domain;
    let width = spec.size;
    let scale = width as f64 / (d.x_max - d.x_min);
    let height = ((d.y_max - d.y_min) * scale).round().max(1.0) as usize;
    let view = View {
        x0: d.x_min,
        y1: d.y_max,
        scale,
    };
    let mut img = Image::new(width, height, WHITE);
    let tc = t.clamp(0.0, scene.horizon);
    for py in 0..height {
        for px in 0..width {
            let p = view.world(px, py);
            if let Some(o) = scene.obstacles.iter().find(|o| o.motion.contains(p, tc, 0.0)) {
                img.pixels[py * width + px] = o.color.unwrap_or(OBSTACLE);
            }
        }
    }
    for (idx, tr) in trajectories.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if spec.trajectories {
            let states: Vec<_> = tr.states().collect();
            for w in states.windows(2) {
                line(&mut img, &view, [w[0].1.x, w[0].1.y], [w[1].1.x, w[1].1.y], color);
            }
        }
        if spec.footprints {
            let poly = footprint(&tr.state_at(t), car).corners;
            let (lo, hi) = poly.iter().fold(((f64::MAX, f64::MAX), (f64::MIN, f64::MIN)), |(lo, hi), p| {
                let q = view.pixel(*p);
                ((lo.0.min(q.0), lo.1.min(q.1)), (hi.0.max(q.0), hi.1.max(q.1)))
            });
            let clampx = |v: f64| v.clamp(0.0, (width - 1) as f64) as usize;
            let clampy = |v: f64| v.clamp(0.0, (height - 1) as f64) as usize;
            for py in clampy(lo.1.floor())..=clampy(hi.1.ceil()) {
                for px in clampx(lo.0.floor())..=clampx(hi.0.ceil()) {
                    if polygon_contains(&poly, view.world(px, py)) {
                        img.pixels[py * width + px] = color;
                    }
                }
            }
        }
        star(&mut img, &view, [tr.start.x, tr.start.y], STAR);
    }
    if let Some(tg) = target {
        star(&mut img, &view, [tg.x, tg.y], STAR);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::kinematics::ControlPair;
    use crate::scene::ObstacleMotion;
    use crate::tracer::TraceSample;

    #[test]
    fn ppm_header_and_size() {
        let img = Image::new(4, 3, [1, 2, 3]);
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n4 3\n255\n"));
        assert_eq!(bytes.len(), b"P6\n4 3\n255\n".len() + 36);
    }

    #[test]
    fn frame_shows_obstacle_and_car() {
        let disk = ObstacleMotion::StaticDisk { center: [0.5, 0.5], radius: 0.2 };
        let scene = Scene::new(Domain::UNIT_SQUARE, 1.0, vec![disk.into()]).unwrap();
        let car = CarParams::reference();
        let start = Configuration::new(-0.5, -0.5, 0.0);
        let end = Configuration::new(-0.4, -0.5, 0.0);
        let tr = Trajectory {
            start,
            samples: vec![TraceSample { t: 0.0, state: start, control: ControlPair { v: 1, w: 0 } }],
            end,
            end_time: 0.1,
            arrival_time: Some(0.1),
        };
        let spec = PlotSpec::new(vec![0.0], 200);
        let img = render_frame(&scene, &car, Some(&end), &[tr], 0.0, &spec);
        assert_eq!((img.width, img.height), (200, 200));
        // World (0.5, 0.5) lands at pixel (150, 50).
        assert_eq!(img.get(150, 50), OBSTACLE);
        assert_eq!(img.get(10, 10), WHITE);
        // The car body around (-0.5, -0.5), away from the star strokes.
        assert_eq!(img.get(54, 152), PALETTE[0]);
    }

    #[test]
    fn spec_validation() {
        assert!(PlotSpec::new(vec![0.0, 2.0], 100).validate(1.0).is_err());
        assert!(PlotSpec::new(vec![0.5], 2).validate(1.0).is_err());
        assert_eq!(PlotSpec::evenly(2.0, 3, 100).times, vec![0.0, 1.0, 2.0]);
    }
}
