//! Backward-in-time upwind integration of the travel-time HJB equation.
//!
//! Slice `n` is computed from slice `n + 1` by the explicit update
//!
//! ```text
//! u^n = u^{n+1} + Δt (1 + min_{(v,w)} [ |A| (u_{i+a} - u) / Δx
//!                                      + |B| (u_{j+b} - u) / Δy
//!                                      + |w| W (u_{k+sign w} - u) / Δθ ])
//! ```
//!
//! with every neighbor read from slice `n + 1`. Under the CFL bound the
//! weight of `u` itself stays non-negative, so the update is monotone.
//! Unreachable states hold the finite sentinel `M`, target nodes hold 0, and
//! boundary and illegal nodes are pinned to `M`.

use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid4, NodeIndex};
use crate::kinematics::{upwind_coeffs, CarParams, Configuration, ControlPair};
use crate::scene::{MaskBuilder, Scene};

/// Default cap on the memory used by stored slices.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams {
    /// Stand-in for +∞. `None` means `2T`.
    pub sentinel: Option<f64>,
    /// Fraction of the CFL bound used when the grid picks `Δt`.
    pub cfl_safety: f64,
    /// Keep every `stride`-th slice. `None` derives it from `memory_budget`.
    pub stride: Option<usize>,
    /// Bytes available for stored slices.
    pub memory_budget: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            sentinel: None,
            cfl_safety: 0.9,
            stride: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// One `(v, w)` term of the update at a fixed heading. Zero coefficients
/// carry a zero offset so they read the node itself.
#[derive(Clone, Copy, Debug)]
struct PairTerm {
    cx: f64,
    di: isize,
    cy: f64,
    dj: isize,
    ct: f64,
    dk: i32,
}

/// Solver for one grid, car and target.
#[derive(Clone, Debug)]
pub struct Solver {
    grid: Grid4,
    car: CarParams,
    target: Configuration,
    target_node: NodeIndex,
    sentinel: f64,
    stride: usize,
    /// `terms[k][p]` for heading `k` and pair `ControlPair::ALL[p]`.
    terms: Vec<[PairTerm; 7]>,
}

/// Time-stacked travel-time field on a subset of the time nodes.
#[derive(Clone, Debug)]
pub struct ValueFunction {
    pub grid: Grid4,
    pub sentinel: f32,
    pub stride: usize,
    pub target: Configuration,
    pub target_node: NodeIndex,
    /// Ascending time indices of the stored slices; always holds `0` and `N`.
    pub times: Vec<usize>,
    pub slices: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    /// Share of legal interior nodes at `t = 0` with value below `T`.
    pub reachable_fraction: f64,
    /// Number of time steps at which the target node was illegal.
    pub target_conflicts: usize,
    pub wall_seconds: f64,
}

impl Solver {
    pub fn new(grid: Grid4, car: CarParams, target: Configuration, params: &SolverParams) -> Result<Self> {
        car.validate()?;
        let bound = grid.cfl_max_dt(&car);
        if grid.dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt: grid.dt, bound });
        }
        if !(params.cfl_safety > 0.0 && params.cfl_safety <= 1.0) {
            return Err(Error::invalid(format!("CFL safety factor {} outside (0, 1]", params.cfl_safety)));
        }
        let sentinel = params.sentinel.unwrap_or(2.0 * grid.horizon);
        if !(sentinel >= 2.0 * grid.horizon) || !sentinel.is_finite() || sentinel > f64::from(f32::MAX) {
            return Err(Error::invalid(format!(
                "sentinel {sentinel} must be finite and at least 2T = {}",
                2.0 * grid.horizon
            )));
        }
        let target = Configuration::new(target.x, target.y, target.theta);
        let target_node = grid.snap_config(&target)?;
        if grid.is_boundary(target_node.i, target_node.j) {
            return Err(Error::IllegalTarget(format!(
                "({}, {}, {}) snaps to the domain boundary",
                target.x, target.y, target.theta
            )));
        }
        let stride = match params.stride {
            Some(0) => return Err(Error::invalid("slice stride must be at least 1")),
            Some(s) => s,
            None => {
                let bytes = (grid.nt + 1) * grid.nodes_per_slice() * std::mem::size_of::<f32>();
                bytes.div_ceil(params.memory_budget.max(1)).max(1)
            }
        };

        let si = ((grid.ny + 1) * grid.ntheta) as isize;
        let sj = grid.ntheta as isize;
        let terms = (0..grid.ntheta)
            .map(|k| {
                let theta = grid.theta(k);
                ControlPair::ALL.map(|p| {
                    let c = upwind_coeffs(theta, p, &car);
                    let w = f64::from(p.w);
                    PairTerm {
                        cx: c.a_coef.abs() / grid.dx,
                        di: c.a_sign as isize * si,
                        cy: c.b_coef.abs() / grid.dy,
                        dj: c.b_sign as isize * sj,
                        ct: w.abs() * car.w_max / grid.dtheta,
                        dk: i32::from(p.w),
                    }
                })
            })
            .collect();

        Ok(Solver {
            grid,
            car,
            target,
            target_node,
            sentinel,
            stride,
            terms,
        })
    }

    pub fn grid(&self) -> &Grid4 {
        &self.grid
    }

    pub fn car(&self) -> &CarParams {
        &self.car
    }

    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn target_node(&self) -> NodeIndex {
        self.target_node
    }

    fn target_linear(&self) -> usize {
        let t = self.target_node;
        self.grid.linear(t.i, t.j, t.k)
    }

    /// Slice at `t = T`: zero at the target node, the sentinel elsewhere.
    /// `mask` is the illegal-node mask at `T` (empty when there are no obstacles).
    pub fn terminal_slice(&self, mask: &[bool]) -> Result<Vec<f32>> {
        let tl = self.target_linear();
        if mask.get(tl).copied().unwrap_or(false) {
            return Err(Error::IllegalTarget(format!(
                "({}, {}, {})",
                self.target.x, self.target.y, self.target.theta
            )));
        }
        let mut slice = vec![self.sentinel as f32; self.grid.nodes_per_slice()];
        slice[tl] = 0.0;
        Ok(slice)
    }

    /// Minimizing term of the update at one node, as `(pair index, value)`.
    /// Ties go to the earliest pair in [`ControlPair::ALL`].
    #[inline]
    fn best_term(&self, next: &[f32], idx: usize, k: usize) -> (usize, f64) {
        let u = f64::from(next[idx]);
        let kbase = idx - k;
        let mut best = (0, f64::INFINITY);
        for (p, t) in self.terms[k].iter().enumerate() {
            let mut s = 0.0;
            if t.cx > 0.0 {
                s += t.cx * (f64::from(next[(idx as isize + t.di) as usize]) - u);
            }
            if t.cy > 0.0 {
                s += t.cy * (f64::from(next[(idx as isize + t.dj) as usize]) - u);
            }
            if t.ct > 0.0 {
                let kn = self.grid.wrap_k(k, t.dk);
                s += t.ct * (f64::from(next[kbase + kn]) - u);
            }
            if s < best.1 {
                best = (p, s);
            }
        }
        best
    }

    /// One backward step: slice `n` from slice `n + 1`. `mask` is the
    /// illegal-node mask at `t_n`, or empty for an obstacle-free scene.
    pub fn step_backward(&self, next: &[f32], mask: &[bool]) -> Vec<f32> {
        let mut out = vec![0.0f32; next.len()];
        self.step_into(next, mask, &mut out);
        out
    }

    fn step_into(&self, next: &[f32], mask: &[bool], out: &mut [f32]) {
        let g = &self.grid;
        assert_eq!(next.len(), g.nodes_per_slice());
        assert!(mask.is_empty() || mask.len() == next.len());
        let m = self.sentinel;
        let mf = m as f32;
        let dt = g.dt;
        let row = (g.ny + 1) * g.ntheta;
        let tl = self.target_linear();
        out.par_chunks_mut(row).enumerate().for_each(|(i, out_row)| {
            let base = i * row;
            for j in 0..=g.ny {
                let boundary = g.is_boundary(i, j);
                for k in 0..g.ntheta {
                    let local = j * g.ntheta + k;
                    let idx = base + local;
                    out_row[local] = if boundary || (!mask.is_empty() && mask[idx]) {
                        mf
                    } else {
                        let (_, term) = self.best_term(next, idx, k);
                        let cand = f64::from(next[idx]) + dt * (1.0 + term);
                        cand.clamp(0.0, m) as f32
                    };
                }
            }
        });
        out[tl] = 0.0;
    }

    /// Unclamped update candidate of every pair at `node`, in
    /// [`ControlPair::ALL`] order.
    pub fn candidates(&self, next: &[f32], node: NodeIndex) -> [f64; 7] {
        let idx = self.grid.linear(node.i, node.j, node.k);
        let u = f64::from(next[idx]);
        let kbase = idx - node.k;
        self.terms[node.k].map(|t| {
            let xn = f64::from(next[(idx as isize + t.di) as usize]);
            let yn = f64::from(next[(idx as isize + t.dj) as usize]);
            let tn = f64::from(next[kbase + self.grid.wrap_k(node.k, t.dk)]);
            u + self.grid.dt * (1.0 + t.cx * (xn - u) + t.cy * (yn - u) + t.ct * (tn - u))
        })
    }

    /// The pair attaining the minimum of the update at `node`.
    pub fn argmin_controls(&self, next: &[f32], node: NodeIndex) -> ControlPair {
        let idx = self.grid.linear(node.i, node.j, node.k);
        ControlPair::ALL[self.best_term(next, idx, node.k).0]
    }

    fn stored(&self, n: usize) -> bool {
        n % self.stride == 0 || n == self.grid.nt
    }

    /// Runs from `T` back to `0`.
    pub fn solve(&self, scene: &Scene) -> Result<(ValueFunction, SolveReport)> {
        let start = Instant::now();
        let g = &self.grid;
        if scene.horizon + 1e-12 < g.horizon {
            return Err(Error::invalid(format!(
                "scene horizon {} shorter than grid horizon {}",
                scene.horizon, g.horizon
            )));
        }
        let builder = MaskBuilder::new(scene, g, &self.car);
        let moving = !scene.is_static();
        let empty = scene.obstacles.is_empty();
        let static_mask = if empty || moving { Vec::new() } else { builder.mask(0.0) };
        let mask_at = |n: usize| -> Vec<bool> {
            if moving {
                builder.mask(g.time(n))
            } else {
                Vec::new()
            }
        };
        let tl = self.target_linear();
        let mut conflicts = 0;

        let terminal_mask = if moving { mask_at(g.nt) } else { static_mask.clone() };
        let mut next = self.terminal_slice(&terminal_mask)?;
        let mut stored = vec![(g.nt, next.clone())];
        let mut cur = vec![0.0f32; next.len()];
        for n in (0..g.nt).rev() {
            let owned;
            let mask: &[bool] = if moving {
                owned = mask_at(n);
                &owned
            } else {
                &static_mask
            };
            if !mask.is_empty() && mask[tl] {
                conflicts += 1;
            }
            self.step_into(&next, mask, &mut cur);
            std::mem::swap(&mut next, &mut cur);
            if self.stored(n) {
                stored.push((n, next.clone()));
            }
        }
        if conflicts > 0 {
            warn!("target node is covered by an obstacle at {conflicts} time steps; pinned to 0 anyway");
        }
        stored.reverse();

        let legal0 = if moving { mask_at(0) } else { static_mask };
        let slice0 = &stored[0].1;
        let (mut legal, mut reach) = (0usize, 0usize);
        for i in 1..g.nx {
            for j in 1..g.ny {
                for k in 0..g.ntheta {
                    let idx = g.linear(i, j, k);
                    if legal0.is_empty() || !legal0[idx] {
                        legal += 1;
                        if f64::from(slice0[idx]) < g.horizon {
                            reach += 1;
                        }
                    }
                }
            }
        }
        let report = SolveReport {
            reachable_fraction: if legal > 0 { reach as f64 / legal as f64 } else { 0.0 },
            target_conflicts: conflicts,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        debug!("solve finished: {report:?}");
        let (times, slices) = stored.into_iter().unzip();
        Ok((
            ValueFunction {
                grid: self.grid.clone(),
                sentinel: self.sentinel as f32,
                stride: self.stride,
                target: self.target,
                target_node: self.target_node,
                times,
                slices,
            },
            report,
        ))
    }
}

impl ValueFunction {
    pub fn slice_at(&self, n: usize) -> Option<&[f32]> {
        self.times
            .binary_search(&n)
            .ok()
            .map(|p| self.slices[p].as_slice())
    }

    /// Value of a stored slice at a node.
    pub fn node_value(&self, n: usize, node: NodeIndex) -> Option<f32> {
        self.slice_at(n)
            .map(|s| s[self.grid.linear(node.i, node.j, node.k)])
    }

    /// Structural invariants: range, zero target, sentinel boundary.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let g = &self.grid;
        if self.times.first() != Some(&0) || self.times.last() != Some(&g.nt) {
            return Err(format!("stored slices must include 0 and {}", g.nt));
        }
        if self.times.len() != self.slices.len() || self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err("stored slice times must be strictly increasing".into());
        }
        let t = self.target_node;
        let tl = g.linear(t.i, t.j, t.k);
        for (&n, s) in self.times.iter().zip(&self.slices) {
            if s.len() != g.nodes_per_slice() {
                return Err(format!("slice {n} has {} values, expected {}", s.len(), g.nodes_per_slice()));
            }
            if let Some((idx, v)) = s
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= 0.0 && **v <= self.sentinel))
            {
                return Err(format!("slice {n} node {idx} holds {v}, outside [0, {}]", self.sentinel));
            }
            if s[tl] != 0.0 {
                return Err(format!("slice {n}: target value {} is not 0", s[tl]));
            }
            for i in 0..=g.nx {
                for j in 0..=g.ny {
                    if !g.is_boundary(i, j) {
                        continue;
                    }
                    for k in 0..g.ntheta {
                        let v = s[g.linear(i, j, k)];
                        if v != self.sentinel {
                            return Err(format!("slice {n}: boundary node ({i}, {j}, {k}) holds {v}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
