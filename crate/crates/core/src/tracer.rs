//! Off-grid evaluation of the value function and semi-Lagrangian extraction
//! of optimal trajectories.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kinematics::{
    angle_diff, controls_from_gradient, motion, wrap_angle, CarParams, Configuration, ControlPair,
};
use crate::scene::{FootprintSampler, Scene};
use crate::solver::ValueFunction;

/// Quadrilinear interpolation in `(x, y, θ, t)`, periodic in `θ` and linear
/// in time between stored slices. A stencil vertex with nonzero weight that
/// holds the sentinel makes the result the sentinel.
pub fn interpolate(vf: &ValueFunction, x: f64, y: f64, theta: f64, t: f64) -> Result<f64> {
    let g = &vf.grid;
    if !g.domain.contains(x, y) {
        return Err(Error::OutsideDomain(format!("({x}, {y})")));
    }
    if !(t >= 0.0 && t <= g.horizon) {
        return Err(Error::OutsideHorizon { t, horizon: g.horizon });
    }
    let axis = |f: f64, cells: usize| -> (usize, f64) {
        let i0 = (f.floor().max(0.0) as usize).min(cells - 1);
        (i0, (f - i0 as f64).clamp(0.0, 1.0))
    };
    let (i0, wx) = axis((x - g.domain.x_min) / g.dx, g.nx);
    let (j0, wy) = axis((y - g.domain.y_min) / g.dy, g.ny);
    let ft = wrap_angle(theta) / g.dtheta;
    let k0 = (ft.floor() as usize).min(g.ntheta - 1);
    let wk = (ft - k0 as f64).clamp(0.0, 1.0);
    let k1 = (k0 + 1) % g.ntheta;

    let fnt = t / g.dt;
    let (p0, p1, wt) = time_bracket(&vf.times, fnt);

    let m = vf.sentinel;
    let mut acc = 0.0;
    for (p, tw) in [(p0, 1.0 - wt), (p1, wt)] {
        if tw == 0.0 {
            continue;
        }
        let slice = &vf.slices[p];
        for (i, xw) in [(i0, 1.0 - wx), (i0 + 1, wx)] {
            if xw == 0.0 {
                continue;
            }
            for (j, yw) in [(j0, 1.0 - wy), (j0 + 1, wy)] {
                if yw == 0.0 {
                    continue;
                }
                for (k, kw) in [(k0, 1.0 - wk), (k1, wk)] {
                    if kw == 0.0 {
                        continue;
                    }
                    let v = slice[g.linear(i, j, k)];
                    if v >= m {
                        return Ok(f64::from(m));
                    }
                    acc += tw * xw * yw * kw * f64::from(v);
                }
            }
        }
    }
    Ok(acc)
}

/// Positions of the stored slices around fractional time index `fnt` and
/// the weight of the later one. Times within 1e-9 of a stored slice snap to it.
fn time_bracket(times: &[usize], fnt: f64) -> (usize, usize, f64) {
    let last = times.len() - 1;
    let nearest = fnt.round();
    if (fnt - nearest).abs() < 1e-9 {
        if let Ok(p) = times.binary_search(&(nearest.max(0.0) as usize)) {
            return (p, p, 0.0);
        }
    }
    let p0 = match times.binary_search_by(|n| (*n as f64).partial_cmp(&fnt).expect("finite time")) {
        Ok(p) => return (p, p, 0.0),
        Err(p) => p.saturating_sub(1).min(last.saturating_sub(1)),
    };
    let p1 = (p0 + 1).min(last);
    if p0 == p1 {
        return (p0, p0, 0.0);
    }
    let (a, b) = (times[p0] as f64, times[p1] as f64);
    (p0, p1, ((fnt - a) / (b - a)).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracerParams {
    /// Time step of the tracer.
    pub delta: f64,
    pub position_tolerance: f64,
    pub angle_tolerance: f64,
    pub max_steps: usize,
}

impl TracerParams {
    /// `δ` equal to the stored-slice interval, tolerances of one and a half
    /// cells, and enough steps to reach the horizon.
    pub fn defaults_for(vf: &ValueFunction) -> Self {
        let g = &vf.grid;
        let delta = vf.stride as f64 * g.dt;
        TracerParams {
            delta,
            position_tolerance: 1.5 * g.dx.max(g.dy),
            angle_tolerance: 1.5 * g.dtheta,
            max_steps: (g.horizon / delta).ceil() as usize,
        }
    }

    /// Time to cover the arrival tolerances at full speed and turn rate.
    pub fn arrival_slack(&self, car: &CarParams) -> f64 {
        self.position_tolerance + self.angle_tolerance / car.w_max
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta > 0.0 && self.position_tolerance > 0.0 && self.angle_tolerance > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("tracer step and tolerances must be positive: {self:?}")))
        }
    }
}

pub fn within_tolerance(c: &Configuration, target: &Configuration, p: &TracerParams) -> bool {
    c.distance(target) <= p.position_tolerance && angle_diff(c.theta, target.theta).abs() <= p.angle_tolerance
}

/// State at `t` and the control applied over `[t, t + δ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub state: Configuration,
    pub control: ControlPair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start: Configuration,
    pub samples: Vec<TraceSample>,
    pub end: Configuration,
    pub end_time: f64,
    /// `None` when the step budget or horizon ran out first.
    pub arrival_time: Option<f64>,
}

impl Trajectory {
    pub fn arrived(&self) -> bool {
        self.arrival_time.is_some()
    }

    /// Every state, from the start through the end.
    pub fn states(&self) -> impl Iterator<Item = (f64, Configuration)> + '_ {
        self.samples
            .iter()
            .map(|s| (s.t, s.state))
            .chain(std::iter::once((self.end_time, self.end)))
    }

    /// Longest run of consecutive waiting steps.
    pub fn longest_wait(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        for s in &self.samples {
            if s.control.is_wait() {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best
    }

    /// Configuration at time `t`, linear between samples.
    pub fn state_at(&self, t: f64) -> Configuration {
        let states: Vec<_> = self.states().collect();
        if t <= states[0].0 {
            return states[0].1;
        }
        for w in states.windows(2) {
            let ((t0, a), (t1, b)) = (w[0], w[1]);
            if t <= t1 {
                let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                return lerp_config(&a, &b, s);
            }
        }
        self.end
    }

    /// CSV with header `t,x,y,theta,v,w`. The final row is the end state,
    /// with no control applied.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,theta,v,w\n");
        let mut row = |t: f64, c: &Configuration, u: ControlPair| {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_sig9(t),
                fmt_sig9(c.x),
                fmt_sig9(c.y),
                fmt_sig9(c.theta),
                u.v,
                u.w
            );
        };
        for s in &self.samples {
            row(s.t, &s.state, s.control);
        }
        row(self.end_time, &self.end, ControlPair::WAIT);
        out
    }
}

fn lerp_config(a: &Configuration, b: &Configuration, s: f64) -> Configuration {
    Configuration::new(
        a.x + s * (b.x - a.x),
        a.y + s * (b.y - a.y),
        a.theta + s * angle_diff(b.theta, a.theta),
    )
}

/// Formats with 9 significant digits, like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..9).contains(&e) {
        let s = format!("{:.*}", (8 - e).max(0) as usize, x);
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

/// Semi-Lagrangian path extraction: at each step pick the pair whose Euler
/// step lands on the smallest interpolated value at the current time, then
/// take that step.
pub fn trace(
    vf: &ValueFunction,
    start: &Configuration,
    scene: &Scene,
    car: &CarParams,
    params: &TracerParams,
) -> Result<Trajectory> {
    params.validate()?;
    let g = &vf.grid;
    let start = Configuration::new(start.x, start.y, start.theta);
    if !g.domain.contains(start.x, start.y) {
        return Err(Error::OutsideDomain(format!("start ({}, {})", start.x, start.y)));
    }
    let sampler = FootprintSampler::for_grid(car, g);
    if scene.collides(&start, 0.0, &sampler)? {
        return Err(Error::IllegalStart(format!("({}, {}, {})", start.x, start.y, start.theta)));
    }
    let target = vf.target;
    let value = interpolate(vf, start.x, start.y, start.theta, 0.0)?;
    if within_tolerance(&start, &target, params) {
        return Ok(Trajectory {
            start,
            samples: Vec::new(),
            end: start,
            end_time: 0.0,
            arrival_time: Some(0.0),
        });
    }
    if value >= g.horizon {
        return Err(Error::Unreachable {
            start: format!("({}, {}, {})", start.x, start.y, start.theta),
            value,
        });
    }

    let m = f64::from(vf.sentinel);
    let mut samples = Vec::new();
    let mut state = start;
    let mut t = 0.0;
    for step in 0..params.max_steps {
        let t_next = (step + 1) as f64 * params.delta;
        if t_next > g.horizon + 1e-9 {
            break;
        }
        let mut best = (ControlPair::WAIT, f64::INFINITY, state);
        for pair in ControlPair::ALL {
            let cand = state.advance(motion(&state, pair, car), params.delta);
            let v = interpolate(vf, cand.x, cand.y, cand.theta, t).unwrap_or(m);
            if v < best.1 {
                best = (pair, v, cand);
            }
        }
        samples.push(TraceSample {
            t,
            state,
            control: best.0,
        });
        state = best.2;
        t = t_next.min(g.horizon);
        if within_tolerance(&state, &target, params) {
            return Ok(Trajectory {
                start,
                samples,
                end: state,
                end_time: t,
                arrival_time: Some(t),
            });
        }
    }
    Ok(Trajectory {
        start,
        samples,
        end: state,
        end_time: t,
        arrival_time: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Collision,
    OutsideDomain,
    /// Consecutive states disagree with the recorded control.
    EulerMismatch,
    TurnRate,
    InadmissibleControl,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Index of the offending step.
    pub step: usize,
    pub time: f64,
    pub state: Configuration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checked_states: usize,
    pub first_violation: Option<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Post-hoc admissibility check: collisions at `oversample` points per step
/// (states interpolated linearly), agreement of every step with an Euler
/// step under its recorded control, and the turn-rate bound.
pub fn validate_trajectory(
    tr: &Trajectory,
    scene: &Scene,
    car: &CarParams,
    sampler: &FootprintSampler,
    oversample: usize,
) -> ValidationReport {
    let oversample = oversample.max(1);
    let mut checked = 0;
    let states: Vec<(f64, Configuration)> = tr.states().collect();
    let fail = |kind, step, time, state, checked| ValidationReport {
        checked_states: checked,
        first_violation: Some(Violation { kind, step, time, state }),
    };
    let clear = |t: f64, c: &Configuration| -> Option<ViolationKind> {
        if !scene.domain.contains(c.x, c.y) {
            return Some(ViolationKind::OutsideDomain);
        }
        let t = t.clamp(0.0, scene.horizon);
        match scene.collides(c, t, sampler) {
            Ok(false) => None,
            _ => Some(ViolationKind::Collision),
        }
    };
    for (step, s) in tr.samples.iter().enumerate() {
        let (t1, next) = states[step + 1];
        let dt = t1 - s.t;
        if !s.control.is_admissible() {
            return fail(ViolationKind::InadmissibleControl, step, s.t, s.state, checked);
        }
        let expect = s.state.advance(motion(&s.state, s.control, car), dt);
        let pos_err = (expect.x - next.x).abs().max((expect.y - next.y).abs());
        if pos_err > 1e-9 || angle_diff(expect.theta, next.theta).abs() > 1e-9 {
            return fail(ViolationKind::EulerMismatch, step, s.t, s.state, checked);
        }
        if dt > 0.0 && angle_diff(next.theta, s.state.theta).abs() > car.w_max * dt * (1.0 + 1e-9) {
            return fail(ViolationKind::TurnRate, step, s.t, s.state, checked);
        }
        for q in 0..oversample {
            let frac = q as f64 / oversample as f64;
            let c = lerp_config(&s.state, &next, frac);
            let t = s.t + frac * dt;
            checked += 1;
            if let Some(kind) = clear(t, &c) {
                return fail(kind, step, t, c, checked);
            }
        }
    }
    checked += 1;
    if let Some(kind) = clear(tr.end_time, &tr.end) {
        return fail(kind, tr.samples.len(), tr.end_time, tr.end, checked);
    }
    ValidationReport {
        checked_states: checked,
        first_violation: None,
    }
}

/// Agreement between the gradient sign formula and the semi-Lagrangian
/// argmin on a set of states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgreementReport {
    pub compared: usize,
    pub mismatches: usize,
    /// Gradient formula asked to turn in place.
    pub inadmissible: usize,
}

impl AgreementReport {
    pub fn mismatch_rate(&self) -> f64 {
        if self.compared == 0 {
            0.0
        } else {
            self.mismatches as f64 / self.compared as f64
        }
    }
}

/// Compares the two ways of reading controls off the value function.
/// States whose difference stencil touches the sentinel are skipped.
pub fn control_agreement(
    vf: &ValueFunction,
    car: &CarParams,
    delta: f64,
    states: &[(Configuration, f64)],
) -> AgreementReport {
    let g = &vf.grid;
    let m = f64::from(vf.sentinel);
    let mut report = AgreementReport {
        compared: 0,
        mismatches: 0,
        inadmissible: 0,
    };
    for (c, t) in states {
        let f = |x: f64, y: f64, th: f64| interpolate(vf, x, y, th, *t).unwrap_or(m);
        let (hx, hy, ht) = (g.dx, g.dy, g.dtheta);
        let vals = [
            f(c.x + hx, c.y, c.theta),
            f(c.x - hx, c.y, c.theta),
            f(c.x, c.y + hy, c.theta),
            f(c.x, c.y - hy, c.theta),
            f(c.x, c.y, c.theta + ht),
            f(c.x, c.y, c.theta - ht),
        ];
        if vals.iter().any(|v| *v >= m) {
            continue;
        }
        let grad = [
            (vals[0] - vals[1]) / (2.0 * hx),
            (vals[2] - vals[3]) / (2.0 * hy),
            (vals[4] - vals[5]) / (2.0 * ht),
        ];
        let gc = controls_from_gradient(grad, c.theta, car);
        let mut best = (ControlPair::WAIT, f64::INFINITY);
        for pair in ControlPair::ALL {
            let cand = c.advance(motion(c, pair, car), delta);
            let v = interpolate(vf, cand.x, cand.y, cand.theta, *t).unwrap_or(m);
            if v < best.1 {
                best = (pair, v);
            }
        }
        report.compared += 1;
        if !gc.admissible {
            report.inadmissible += 1;
        }
        if gc.v != best.0.v || gc.w != best.0.w {
            report.mismatches += 1;
        }
    }
    report
}
