//! Sampled functions on uniform grids, with optional closed-form profiles
//! used for off-grid evaluation.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_MAGIC: &[u8; 16] = b"KINETIC-GRIDFN01";

/// `C^∞` step: 0 for `u ≤ 0`, 1 for `u ≥ 1`, built from `e^{-1/u}`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

fn dist2(v: &[f64], c: &[f64]) -> f64 {
    v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Closed-form functions on ℝ^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `mass·(2πT)^{-n/2} exp(−|v−c|²/(2T))`.
    Maxwellian { mass: f64, temperature: f64, center: Vec<f64> },
    /// `amplitude·exp(1 − 1/(1 − |v−c|²/R²))` inside `B_R(c)`, zero outside.
    Bump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// `height·step((R − |v−c|)/width)`: equal to `height` on `B_{R−width}(c)`.
    SmoothIndicator { center: Vec<f64>, radius: f64, width: f64, height: f64 },
    /// `amplitude·(v−c)_axis·exp(−|v−c|²/(2σ²))`.
    OddGaussian { center: Vec<f64>, sigma: f64, amplitude: f64, axis: usize },
    /// `amplitude·cos(k·v + phase)·bump(v)`: oscillating compactly supported test function.
    ModulatedBump { center: Vec<f64>, radius: f64, amplitude: f64, wavevector: Vec<f64>, phase: f64 },
    /// `amplitude·cos(k·v + phase)`.
    Cosine { amplitude: f64, wavevector: Vec<f64>, phase: f64 },
    Sum { terms: Vec<Profile> },
    Scaled { factor: f64, inner: Box<Profile> },
}

impl Profile {
    pub fn maxwellian(d: usize, mass: f64, temperature: f64) -> Self {
        Profile::Maxwellian { mass, temperature, center: vec![0.0; d] }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Maxwellian { mass, temperature, center } => {
                let n = center.len() as i32;
                mass * (2.0 * PI * temperature).powf(-0.5 * n as f64) * (-dist2(v, center) / (2.0 * temperature)).exp()
            }
            Profile::Bump { center, radius, amplitude } => {
                let q = dist2(v, center) / (radius * radius);
                if q >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
            Profile::SmoothIndicator { center, radius, width, height } => {
                height * smooth_step((radius - dist2(v, center).sqrt()) / width)
            }
            Profile::OddGaussian { center, sigma, amplitude, axis } => {
                amplitude * (v[*axis] - center[*axis]) * (-dist2(v, center) / (2.0 * sigma * sigma)).exp()
            }
            Profile::ModulatedBump { center, radius, amplitude, wavevector, phase } => {
                let q = dist2(v, center) / (radius * radius);
                if q >= 1.0 {
                    return 0.0;
                }
                let arg: f64 = v.iter().zip(wavevector).map(|(a, k)| a * k).sum::<f64>() + phase;
                amplitude * arg.cos() * (1.0 - 1.0 / (1.0 - q)).exp()
            }
            Profile::Cosine { amplitude, wavevector, phase } => {
                amplitude * (v.iter().zip(wavevector).map(|(a, k)| a * k).sum::<f64>() + phase).cos()
            }
            Profile::Sum { terms } => terms.iter().map(|t| t.eval(v)).sum(),
            Profile::Scaled { factor, inner } => factor * inner.eval(v),
        }
    }

    /// Radius of a ball around the origin outside which the profile is
    /// zero, or `None` when unbounded support.
    pub fn support_radius(&self) -> Option<f64> {
        let norm = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>().sqrt();
        match self {
            Profile::Constant { value } if *value == 0.0 => Some(0.0),
            Profile::Bump { center, radius, .. } | Profile::ModulatedBump { center, radius, .. } => {
                Some(norm(center) + radius)
            }
            Profile::SmoothIndicator { center, radius, .. } => Some(norm(center) + radius),
            Profile::Sum { terms } => terms.iter().try_fold(0.0f64, |acc, t| t.support_radius().map(|r| acc.max(r))),
            Profile::Scaled { factor, inner } => {
                if *factor == 0.0 {
                    Some(0.0)
                } else {
                    inner.support_radius()
                }
            }
            _ => None,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Profile::Scaled { factor, inner: Box::new(self) }
    }
}

/// Uniform grid over a box with samples in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub axes: Vec<String>,
    /// Coordinate of the first sample on each axis.
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub dims: Vec<usize>,
    #[serde(skip)]
    pub values: Vec<f64>,
    pub compact_support: bool,
    pub profile: Option<Profile>,
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    axes: Vec<String>,
    lo: Vec<f64>,
    spacing: Vec<f64>,
    dims: Vec<usize>,
    compact_support: bool,
    profile: Option<Profile>,
    dtype: String,
    order: String,
}

impl GridFunction {
    /// Samples `profile` at `dims` nodes spanning `[lo, hi]` inclusive on each axis.
    pub fn sample(profile: Profile, lo: &[f64], hi: &[f64], dims: &[usize]) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n || dims.len() != n || n == 0 {
            return Err(Error::InvalidParameter("box and resolution dimensions differ".into()));
        }
        if dims.iter().any(|&m| m < 2) {
            return Err(Error::InvalidParameter("need at least two nodes per axis".into()));
        }
        let spacing: Vec<f64> = (0..n).map(|a| (hi[a] - lo[a]) / (dims[a] - 1) as f64).collect();
        let mut g = Self {
            axes: (0..n).map(|a| format!("v{a}")).collect(),
            lo: lo.to_vec(),
            spacing,
            dims: dims.to_vec(),
            values: Vec::new(),
            compact_support: false,
            profile: None,
        };
        g.values = (0..g.len()).map(|i| profile.eval(&g.node(i))).collect();
        g.profile = Some(profile);
        g.compact_support = g.outer_layers_vanish();
        Ok(g)
    }

    /// Grid samples without a closed form.
    pub fn from_values(lo: Vec<f64>, spacing: Vec<f64>, dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != values.len() {
            return Err(Error::InvalidParameter("value count does not match the grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite samples".into()));
        }
        let n = dims.len();
        let mut g = Self {
            axes: (0..n).map(|a| format!("v{a}")).collect(),
            lo,
            spacing,
            dims,
            values,
            compact_support: false,
            profile: None,
        };
        g.compact_support = g.outer_layers_vanish();
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hi(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.lo[a] + self.spacing[a] * (self.dims[a] - 1) as f64).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = i % self.dims[a];
            i /= self.dims[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(a, &k)| self.lo[a] + k as f64 * self.spacing[a])
            .collect()
    }

    fn outer_layers_vanish(&self) -> bool {
        (0..self.len()).all(|i| {
            let idx = self.multi_index(i);
            let outer = idx.iter().zip(&self.dims).any(|(&k, &n)| k < 2 || k + 2 >= n);
            !outer || self.values[i] == 0.0
        })
    }

    /// Value at an arbitrary point: closed form when available, otherwise
    /// tensor cubic interpolation with zero extension outside the box.
    pub fn eval(&self, v: &[f64]) -> f64 {
        match &self.profile {
            Some(p) => p.eval(v),
            None => self.interpolate(v),
        }
    }

    /// Tensor cubic convolution (Keys, `a = −1/2`) of the samples.
    pub fn interpolate(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        let mut base = vec![0i64; d];
        let mut w = vec![[0.0; 4]; d];
        for a in 0..d {
            let u = (v[a] - self.lo[a]) / self.spacing[a];
            if u < -1.0 || u > self.dims[a] as f64 {
                return 0.0;
            }
            let b = u.floor();
            base[a] = b as i64 - 1;
            let f = u - b;
            for (m, wm) in w[a].iter_mut().enumerate() {
                *wm = keys((f - (m as f64 - 1.0)).abs());
            }
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..4usize.pow(d as u32) {
            let mut c = corner;
            let mut weight = 1.0;
            let mut inside = true;
            for a in 0..d {
                let m = c % 4;
                c /= 4;
                let k = base[a] + m as i64;
                if k < 0 || k >= self.dims[a] as i64 {
                    inside = false;
                    break;
                }
                idx[a] = k as usize;
                weight *= w[a][m];
            }
            if inside {
                acc += weight * self.values[self.flat_index(&idx)];
            }
        }
        acc
    }

    /// Trapezoid-weighted integral of `|f|^p` over the box, then `1/p` power.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = (0..self.len()).map(|i| self.trap_weight(i) * self.values[i].abs().powf(p)).sum();
        (s * self.cell_volume()).powf(1.0 / p)
    }

    pub fn integral(&self) -> f64 {
        (0..self.len()).map(|i| self.trap_weight(i) * self.values[i]).sum::<f64>() * self.cell_volume()
    }

    fn trap_weight(&self, i: usize) -> f64 {
        self.multi_index(i)
            .iter()
            .zip(&self.dims)
            .map(|(&k, &n)| if k == 0 || k + 1 == n { 0.5 } else { 1.0 })
            .product()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Measure of `{f > 0}` as node count times cell volume.
    pub fn positivity_measure(&self) -> f64 {
        self.values.iter().filter(|v| **v > 0.0).count() as f64 * self.cell_volume()
    }

    /// `(sup|f|, sup|∇f|, sup|D²f|)` by centered differences at the nodes,
    /// Richardson-extrapolated from steps `h` and `h/2` when a closed form
    /// is available and from `2h` and `h` on the grid otherwise.
    pub fn derivative_sups(&self) -> (f64, f64, f64) {
        let d = self.dim();
        let f = |p: &[f64]| self.eval(p);
        let mut g1: f64 = 0.0;
        let mut g2: f64 = 0.0;
        for i in 0..self.len() {
            let x = self.node(i);
            let mut grad2 = 0.0;
            let mut hess2 = 0.0;
            for a in 0..d {
                let (h_fine, h_coarse) = if self.profile.is_some() {
                    (0.5 * self.spacing[a], self.spacing[a])
                } else {
                    (self.spacing[a], 2.0 * self.spacing[a])
                };
                for b in a..d {
                    let mixed = |h: f64| {
                        let mut p = x.clone();
                        let at = |p: &mut Vec<f64>, da: f64, db: f64| {
                            p.copy_from_slice(&x);
                            p[a] += da;
                            p[b] += db;
                            f(p)
                        };
                        if a == b {
                            (at(&mut p, h, 0.0) - 2.0 * f(&x) + at(&mut p, -h, 0.0)) / (h * h)
                        } else {
                            (at(&mut p, h, h) - at(&mut p, h, -h) - at(&mut p, -h, h) + at(&mut p, -h, -h))
                                / (4.0 * h * h)
                        }
                    };
                    let v = (4.0 * mixed(h_fine) - mixed(h_coarse)) / 3.0;
                    hess2 += if a == b { v * v } else { 2.0 * v * v };
                }
                let first = |h: f64| {
                    let mut p = x.clone();
                    p[a] += h;
                    let fp = f(&p);
                    p[a] -= 2.0 * h;
                    (fp - f(&p)) / (2.0 * h)
                };
                let v = (4.0 * first(h_fine) - first(h_coarse)) / 3.0;
                grad2 += v * v;
            }
            g1 = g1.max(grad2.sqrt());
            g2 = g2.max(hess2.sqrt());
        }
        (self.sup_norm(), g1, g2)
    }

    /// `‖f‖_{C¹} = sup|f| + sup|∇f|`.
    pub fn c1_norm(&self) -> f64 {
        let (a, b, _) = self.derivative_sups();
        a + b
    }

    /// `‖f‖_{C²} = sup|f| + sup|∇f| + sup|D²f|`.
    pub fn c2_norm(&self) -> f64 {
        let (a, b, c) = self.derivative_sups();
        a + b + c
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header = GridHeader {
            axes: self.axes.clone(),
            lo: self.lo.clone(),
            spacing: self.spacing.clone(),
            dims: self.dims.clone(),
            compact_support: self.compact_support,
            profile: self.profile.clone(),
            dtype: "f64-le".into(),
            order: "row-major".into(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(GRID_MAGIC)?;
        f.write_all(&(json.len() as u32).to_le_bytes())?;
        f.write_all(&json)?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 16];
        f.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::Format("not a grid-function file".into()));
        }
        let mut len = [0u8; 4];
        f.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        f.read_exact(&mut json)?;
        let h: GridHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        let n: usize = h.dims.iter().product();
        let mut raw = vec![0u8; 8 * n];
        f.read_exact(&mut raw)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self {
            axes: h.axes,
            lo: h.lo,
            spacing: h.spacing,
            dims: h.dims,
            values,
            compact_support: h.compact_support,
            profile: h.profile,
        })
    }
}

/// Keys cubic convolution kernel with `a = −1/2`.
fn keys(x: f64) -> f64 {
    if x <= 1.0 {
        1.5 * x * x * x - 2.5 * x * x + 1.0
    } else if x < 2.0 {
        -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}
