//! Brute-force upper bounds: forward shooting over bang-bang schedules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{angle_diff, motion, CarParams, Configuration, ControlPair, Velocity};
use crate::scene::{FootprintSampler, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub control: ControlPair,
    pub duration: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<(ControlPair, f64)>) -> Result<Self> {
        if let Some((_, d)) = segments.iter().find(|(_, d)| !(*d >= 0.0)) {
            return Err(Error::invalid(format!("segment duration must be non-negative, got {d}")));
        }
        Ok(Schedule {
            segments: segments
                .into_iter()
                .map(|(control, duration)| Segment { control, duration })
                .collect(),
        })
    }

    pub fn total(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// The schedule that undoes this one: segments reversed, controls negated.
    pub fn reversed(&self) -> Schedule {
        Schedule {
            segments: self
                .segments
                .iter()
                .rev()
                .map(|s| Segment {
                    control: ControlPair { v: -s.control.v, w: -s.control.w },
                    duration: s.duration,
                })
                .collect(),
        }
    }
}

/// Target and arrival tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Goal {
    pub target: Configuration,
    pub position_tolerance: f64,
    pub angle_tolerance: f64,
}

impl Goal {
    pub fn reached(&self, c: &Configuration) -> bool {
        c.distance(&self.target) <= self.position_tolerance
            && angle_diff(c.theta, self.target.theta).abs() <= self.angle_tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimOutcome {
    Arrived { time: f64, state: Configuration },
    Collided { time: f64, state: Configuration },
    /// Left the domain or ran past the scene horizon.
    OutOfBounds { time: f64, state: Configuration },
    /// Schedule finished without reaching the goal.
    Missed { end: Configuration },
}

impl SimOutcome {
    pub fn arrival(&self) -> Option<f64> {
        match self {
            SimOutcome::Arrived { time, .. } => Some(*time),
            _ => None,
        }
    }
}

/// One RK4 step of the equations of motion under a fixed control.
pub fn rk4_step(c: &Configuration, u: ControlPair, car: &CarParams, h: f64) -> Configuration {
    let f = |c: &Configuration| motion(c, u, car);
    let shift = |c: &Configuration, v: Velocity, s: f64| Configuration {
        x: c.x + s * v.x,
        y: c.y + s * v.y,
        theta: c.theta + s * v.theta,
    };
    let k1 = f(c);
    let k2 = f(&shift(c, k1, h / 2.0));
    let k3 = f(&shift(c, k2, h / 2.0));
    let k4 = f(&shift(c, k3, h));
    Configuration::new(
        c.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        c.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        c.theta + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
    )
}

/// Open-loop integration in free space, with no checks.
pub fn integrate(start: &Configuration, sched: &Schedule, car: &CarParams, h: f64) -> Configuration {
    let mut c = *start;
    for seg in &sched.segments {
        let n = (seg.duration / h).ceil().max(1.0) as usize;
        let step = seg.duration / n as f64;
        for _ in 0..n {
            c = rk4_step(&c, seg.control, car, step);
        }
    }
    c
}

/// A start from which `sched` drives the car exactly onto `target` in free
/// space.
pub fn reverse_start(target: &Configuration, sched: &Schedule, car: &CarParams, h: f64) -> Configuration {
    integrate(target, &sched.reversed(), car, h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShootingResult {
    pub best: Option<f64>,
    pub schedule: Option<Schedule>,
    pub tried: usize,
}

/// Forward simulator with collision checking at every substep.
pub struct Simulator<'a> {
    pub scene: &'a Scene,
    pub car: CarParams,
    pub goal: Goal,
    pub sampler: FootprintSampler,
    /// Integration substep.
    pub h: f64,
}

enum SegmentEnd {
    Done(Configuration),
    Stop(SimOutcome),
}

impl<'a> Simulator<'a> {
    pub fn new(scene: &'a Scene, car: CarParams, goal: Goal, sampler: FootprintSampler, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid(format!("substep must be positive, got {h}")));
        }
        Ok(Simulator { scene, car, goal, sampler, h })
    }

    fn check(&self, c: &Configuration, t: f64) -> Option<SimOutcome> {
        if !self.scene.domain.contains(c.x, c.y) || t > self.scene.horizon {
            return Some(SimOutcome::OutOfBounds { time: t, state: *c });
        }
        match self.scene.collides(c, t, &self.sampler) {
            Ok(false) => None,
            Ok(true) => Some(SimOutcome::Collided { time: t, state: *c }),
            Err(_) => Some(SimOutcome::OutOfBounds { time: t, state: *c }),
        }
    }

    fn segment(&self, c: &Configuration, t0: f64, seg: &Segment) -> SegmentEnd {
        let n = (seg.duration / self.h).ceil() as usize;
        if n == 0 {
            return SegmentEnd::Done(*c);
        }
        let step = seg.duration / n as f64;
        let mut c = *c;
        for s in 1..=n {
            c = rk4_step(&c, seg.control, &self.car, step);
            let t = t0 + s as f64 * step;
            if let Some(out) = self.check(&c, t) {
                return SegmentEnd::Stop(out);
            }
            if self.goal.reached(&c) {
                return SegmentEnd::Stop(SimOutcome::Arrived { time: t, state: c });
            }
        }
        SegmentEnd::Done(c)
    }

    pub fn simulate(&self, start: &Configuration, sched: &Schedule) -> SimOutcome {
        if let Some(out) = self.check(start, 0.0) {
            return out;
        }
        if self.goal.reached(start) {
            return SimOutcome::Arrived { time: 0.0, state: *start };
        }
        let mut c = *start;
        let mut t = 0.0;
        for seg in &sched.segments {
            match self.segment(&c, t, seg) {
                SegmentEnd::Done(next) => c = next,
                SegmentEnd::Stop(out) => return out,
            }
            t += seg.duration;
        }
        SimOutcome::Missed { end: c }
    }

    /// Exhaustive search over schedules of up to `depth` segments with
    /// durations drawn from `durations`. Consecutive segments never repeat
    /// a control.
    pub fn shoot(&self, start: &Configuration, depth: usize, durations: &[f64]) -> ShootingResult {
        let empty = ShootingResult {
            best: None,
            schedule: None,
            tried: 0,
        };
        if depth == 0 || self.check(start, 0.0).is_some() {
            return empty;
        }
        if self.goal.reached(start) {
            return ShootingResult {
                best: Some(0.0),
                schedule: Some(Schedule::default()),
                tried: 1,
            };
        }
        let firsts: Vec<Segment> = ControlPair::ALL
            .iter()
            .flat_map(|&control| durations.iter().map(move |&duration| Segment { control, duration }))
            .collect();
        let results: Vec<Search> = firsts
            .par_iter()
            .map(|seg| {
                let mut s = Search {
                    best: f64::INFINITY,
                    schedule: Vec::new(),
                    tried: 0,
                };
                let mut prefix = vec![*seg];
                self.descend(start, 0.0, &mut prefix, depth, durations, &mut s);
                s
            })
            .collect();
        let mut out = empty;
        for r in results {
            out.tried += r.tried;
            if r.best < out.best.unwrap_or(f64::INFINITY) {
                out.best = Some(r.best);
                out.schedule = Some(Schedule { segments: r.schedule });
            }
        }
        out
    }

    fn descend(
        &self,
        c: &Configuration,
        t: f64,
        prefix: &mut Vec<Segment>,
        depth: usize,
        durations: &[f64],
        s: &mut Search,
    ) {
        let seg = *prefix.last().expect("nonempty prefix");
        if t >= s.best {
            return;
        }
        s.tried += 1;
        let next = match self.segment(c, t, &seg) {
            SegmentEnd::Stop(SimOutcome::Arrived { time, .. }) => {
                if time < s.best {
                    s.best = time;
                    s.schedule = prefix.clone();
                    if let Some(last) = s.schedule.last_mut() {
                        last.duration = time - t;
                    }
                }
                return;
            }
            SegmentEnd::Stop(_) => return,
            SegmentEnd::Done(next) => next,
        };
        if prefix.len() >= depth {
            return;
        }
        for control in ControlPair::ALL {
            if control == seg.control {
                continue;
            }
            for &duration in durations {
                prefix.push(Segment { control, duration });
                self.descend(&next, t + seg.duration, prefix, depth, durations, s);
                prefix.pop();
            }
        }
    }
}

struct Search {
    best: f64,
    schedule: Vec<Segment>,
    tried: usize,
}
