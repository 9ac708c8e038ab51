//! Binary slice dumps and the manifest that indexes them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid4, NodeIndex};
use crate::kinematics::{CarParams, Configuration};
use crate::solver::{SolveReport, ValueFunction};
use crate::tracer::fmt_sig9;

const HEADER_LEN: usize = 16;

/// `{I, J, K, n}` as little-endian `u32`, then the slice as little-endian
/// `f32` in row-major `(i, j, k)` order.
pub fn encode_slice(grid: &Grid4, n: usize, data: &[f32]) -> Result<Vec<u8>> {
    if data.len() != grid.nodes_per_slice() {
        return Err(Error::invalid(format!(
            "slice has {} values, grid needs {}",
            data.len(),
            grid.nodes_per_slice()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    for h in [grid.nx, grid.ny, grid.ntheta, n] {
        let h = u32::try_from(h).map_err(|_| Error::invalid(format!("{h} does not fit the dump header")))?;
        out.extend_from_slice(&h.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_slice`]. Returns the time index and the values.
pub fn decode_slice(grid: &Grid4, bytes: &[u8]) -> Result<(usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let (ni, nj, nk, n) = (word(0), word(1), word(2), word(3));
    let cells = (grid.nx, grid.ny, grid.ntheta);
    if (ni, nj, nk) != cells {
        return Err(Error::Corrupt(format!(
            "header shape {:?} does not match grid {cells:?}",
            (ni, nj, nk)
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * grid.nodes_per_slice() {
        return Err(Error::Corrupt(format!(
            "payload has {} bytes, expected {}",
            body.len(),
            4 * grid.nodes_per_slice()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((n, data))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceEntry {
    pub n: usize,
    pub t: f64,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    pub nt: usize,
    pub horizon: f64,
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub dt: f64,
    /// Largest stable time step for this grid and car.
    pub cfl_max_dt: f64,
    pub cfl_safety: f64,
    pub sentinel: f64,
    pub stride: usize,
    pub car: CarParams,
    pub target: Configuration,
    pub target_node: [usize; 3],
    pub wall_seconds: f64,
    pub reachable_fraction: f64,
    pub target_conflicts: usize,
    pub slices: Vec<SliceEntry>,
}

impl Manifest {
    pub fn grid(&self) -> Result<Grid4> {
        Grid4::new(self.domain, self.nx, self.ny, self.ntheta, self.horizon, self.nt)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path,
            message: e.to_string(),
        })
    }
}

pub const MANIFEST: &str = "manifest.json";
const SLICE_DIR: &str = "slices";

/// Writes every stored slice and the manifest under `dir`.
pub fn write_value_function(
    dir: &Path,
    vf: &ValueFunction,
    report: &SolveReport,
    car: &CarParams,
    cfl_safety: f64,
) -> Result<Manifest> {
    let g = &vf.grid;
    let slice_dir = dir.join(SLICE_DIR);
    fs::create_dir_all(&slice_dir).map_err(|e| Error::io(&slice_dir, e))?;
    let mut slices = Vec::with_capacity(vf.times.len());
    for (&n, data) in vf.times.iter().zip(&vf.slices) {
        let bytes = encode_slice(g, n, data)?;
        let file = format!("{SLICE_DIR}/u_{n:06}.bin");
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        slices.push(SliceEntry {
            n,
            t: g.time(n),
            file,
            sha256: sha256_hex(&bytes),
        });
    }
    let NodeIndex { i, j, k } = vf.target_node;
    let manifest = Manifest {
        domain: g.domain,
        nx: g.nx,
        ny: g.ny,
        ntheta: g.ntheta,
        nt: g.nt,
        horizon: g.horizon,
        dx: g.dx,
        dy: g.dy,
        dtheta: g.dtheta,
        dt: g.dt,
        cfl_max_dt: g.cfl_max_dt(car),
        cfl_safety,
        sentinel: f64::from(vf.sentinel),
        stride: vf.stride,
        car: *car,
        target: vf.target,
        target_node: [i, j, k],
        wall_seconds: report.wall_seconds,
        reachable_fraction: report.reachable_fraction,
        target_conflicts: report.target_conflicts,
        slices,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a dump back, checking hashes, headers and the value invariants.
pub fn read_value_function(dir: &Path) -> Result<(Manifest, ValueFunction)> {
    let manifest = Manifest::load(dir)?;
    let grid = manifest.grid()?;
    let mut times = Vec::with_capacity(manifest.slices.len());
    let mut slices = Vec::with_capacity(manifest.slices.len());
    for entry in &manifest.slices {
        let path: PathBuf = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let sum = sha256_hex(&bytes);
        if sum != entry.sha256 {
            return Err(Error::Corrupt(format!("{}: checksum {sum} != {}", entry.file, entry.sha256)));
        }
        let (n, data) = decode_slice(&grid, &bytes)?;
        if n != entry.n {
            return Err(Error::Corrupt(format!("{}: header says n = {n}, manifest {}", entry.file, entry.n)));
        }
        times.push(n);
        slices.push(data);
    }
    let [i, j, k] = manifest.target_node;
    let vf = ValueFunction {
        grid,
        sentinel: manifest.sentinel as f32,
        stride: manifest.stride,
        target: manifest.target,
        target_node: NodeIndex::new(i, j, k),
        times,
        slices,
    };
    vf.check_invariants().map_err(Error::Corrupt)?;
    Ok((manifest, vf))
}

/// The `(x, y)` plane at heading index `k` and stored time index `n`, as
/// CSV `x,y,u`.
pub fn slice_csv(vf: &ValueFunction, k: usize, n: usize) -> Result<String> {
    let g = &vf.grid;
    if k >= g.ntheta {
        return Err(Error::OutOfRange(format!("heading index {k} >= {}", g.ntheta)));
    }
    let data = vf
        .slice_at(n)
        .ok_or_else(|| Error::OutOfRange(format!("time index {n} is not stored")))?;
    let mut out = String::from("x,y,u\n");
    for i in 0..=g.nx {
        for j in 0..=g.ny {
            let _ = writeln!(out, "{},{},{}", fmt_sig9(g.x(i)), fmt_sig9(g.y(j)), fmt_sig9(f64::from(data[g.linear(i, j, k)])));
        }
    }
    Ok(out)
}
