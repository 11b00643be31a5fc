//! Galilean group on ℝ × ℝ^d × ℝ^d, kinetic scaling and slanted cylinders.
//!
//! Conventions: time sections are left-open and right-closed, balls are open.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::unit_ball_volume;

/// A point `z = (t, x, v)` of kinetic phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(t: f64, x: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(x.len(), v.len(), "x and v must share the dimension");
        Self { t, x, v }
    }

    pub fn identity(d: usize) -> Self {
        Self { t: 0.0, x: vec![0.0; d], v: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `(t1, x1, v1) ∘ (t2, x2, v2) = (t1 + t2, x1 + x2 + t2·v1, v1 + v2)`.
pub fn group_product(z1: &PhasePoint, z2: &PhasePoint) -> PhasePoint {
    let x = (0..z1.dim()).map(|i| z1.x[i] + z2.x[i] + z2.t * z1.v[i]).collect();
    let v = (0..z1.dim()).map(|i| z1.v[i] + z2.v[i]).collect();
    PhasePoint { t: z1.t + z2.t, x, v }
}

/// `z⁻¹ = (−t, −x + t·v, −v)`.
pub fn group_inverse(z: &PhasePoint) -> PhasePoint {
    PhasePoint {
        t: -z.t,
        x: z.x.iter().zip(&z.v).map(|(x, v)| -x + z.t * v).collect(),
        v: z.v.iter().map(|v| -v).collect(),
    }
}

/// `(r^{2s} t, r^{1+2s} x, r v)`.
pub fn kinetic_scale(z: &PhasePoint, r: f64, s: f64) -> Result<PhasePoint> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("scale factor must be positive, got {r}")));
    }
    let (a, b) = (r.powf(2.0 * s), r.powf(1.0 + 2.0 * s));
    Ok(PhasePoint {
        t: a * z.t,
        x: z.x.iter().map(|c| b * c).collect(),
        v: z.v.iter().map(|c| r * c).collect(),
    })
}

/// `Q_r(z0) = {−r^{2s} < t − t0 ≤ 0, |v − v0| < r, |x − x0 − (t − t0)v0| < r^{1+2s}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlantedCylinder {
    pub top: PhasePoint,
    pub radius: f64,
    pub s: f64,
}

impl SlantedCylinder {
    pub fn new(top: PhasePoint, radius: f64, s: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0,1), got {s}")));
        }
        Ok(Self { top, radius, s })
    }

    pub fn dim(&self) -> usize {
        self.top.dim()
    }

    /// Duration `r^{2s}`.
    pub fn duration(&self) -> f64 {
        self.radius.powf(2.0 * self.s)
    }

    /// Position radius `r^{1+2s}`.
    pub fn x_radius(&self) -> f64 {
        self.radius.powf(1.0 + 2.0 * self.s)
    }

    /// Time interval `(t0 − r^{2s}, t0]`.
    pub fn time_range(&self) -> (f64, f64) {
        (self.top.t - self.duration(), self.top.t)
    }

    /// Center of the position section at time `t`.
    pub fn x_center_at(&self, t: f64) -> Vec<f64> {
        let dt = t - self.top.t;
        self.top.x.iter().zip(&self.top.v).map(|(x, v)| x + dt * v).collect()
    }

    pub fn contains(&self, z: &PhasePoint) -> bool {
        let dt = z.t - self.top.t;
        if !(dt > -self.duration() && dt <= 0.0) {
            return false;
        }
        let dv: Vec<f64> = z.v.iter().zip(&self.top.v).map(|(a, b)| a - b).collect();
        if norm(&dv) >= self.radius {
            return false;
        }
        let c = self.x_center_at(z.t);
        let dx: Vec<f64> = z.x.iter().zip(&c).map(|(a, b)| a - b).collect();
        norm(&dx) < self.x_radius()
    }

    /// `r^{2s} · ω_d r^{(1+2s)d} · ω_d r^d`.
    pub fn measure(&self) -> f64 {
        let d = self.dim();
        let w = unit_ball_volume(d);
        self.duration() * w * self.x_radius().powi(d as i32) * w * self.radius.powi(d as i32)
    }

    /// `kQ_r(z0)`: radius `kr`, top time raised by `(k^{2s} − 1)/2 · r^{2s}`.
    ///
    /// The top is the image of `((k^{2s}−1)/2 · r^{2s}, 0, 0)` under left
    /// translation by `z0`, so the position is also carried along `v0`.
    pub fn scale(&self, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {k}")));
        }
        let lift = 0.5 * (k.powf(2.0 * self.s) - 1.0) * self.duration();
        let shift = PhasePoint { t: lift, x: vec![0.0; self.dim()], v: vec![0.0; self.dim()] };
        Ok(Self { top: group_product(&self.top, &shift), radius: k * self.radius, s: self.s })
    }

    /// The stacked cylinder `Q̄^m` above this one.
    pub fn stacked(&self, m: u32) -> Result<StackedCylinder> {
        if m < 1 {
            return Err(Error::InvalidParameter("stacking multiplicity must be at least 1".into()));
        }
        Ok(StackedCylinder { base: self.clone(), m })
    }

    /// Exact emptiness test of `self ∩ other`.
    pub fn intersects(&self, other: &SlantedCylinder) -> bool {
        let (a0, b0) = self.time_range();
        let (a1, b1) = other.time_range();
        let (lo, hi) = (a0.max(a1), b0.min(b1));
        if lo >= hi {
            return false;
        }
        let dv: Vec<f64> = self.top.v.iter().zip(&other.top.v).map(|(a, b)| a - b).collect();
        if norm(&dv) >= self.radius + other.radius {
            return false;
        }
        // x-center difference is affine in t: c(t) = p + t·q.
        let c0 = self.x_center_at(0.0);
        let c1 = other.x_center_at(0.0);
        let p: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| a - b).collect();
        let q = &dv;
        let qq: f64 = q.iter().map(|c| c * c).sum();
        // Minimize |p + t q| over t ∈ (lo, hi]; the closure of an open range
        // yields the same infimum, and a strict comparison keeps it exact.
        let tstar = if qq > 0.0 { -p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / qq } else { hi };
        let t = tstar.clamp(lo, hi);
        let gap: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + t * b).collect();
        norm(&gap) < self.x_radius() + other.x_radius()
    }
}

/// `Q̄^m = {0 < t − t0 ≤ m r^{2s}, |v − v0| < r, |x − x0 − (t − t0)v0| < (m+2) r^{1+2s}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedCylinder {
    pub base: SlantedCylinder,
    pub m: u32,
}

impl StackedCylinder {
    pub fn time_range(&self) -> (f64, f64) {
        let t0 = self.base.top.t;
        (t0, t0 + self.m as f64 * self.base.duration())
    }

    pub fn x_radius(&self) -> f64 {
        (self.m as f64 + 2.0) * self.base.x_radius()
    }

    pub fn contains(&self, z: &PhasePoint) -> bool {
        let dt = z.t - self.base.top.t;
        if !(dt > 0.0 && dt <= self.m as f64 * self.base.duration()) {
            return false;
        }
        let dv: Vec<f64> = z.v.iter().zip(&self.base.top.v).map(|(a, b)| a - b).collect();
        if norm(&dv) >= self.base.radius {
            return false;
        }
        let c = self.base.x_center_at(z.t);
        let dx: Vec<f64> = z.x.iter().zip(&c).map(|(a, b)| a - b).collect();
        norm(&dx) < self.x_radius()
    }

    pub fn measure(&self) -> f64 {
        let d = self.base.dim();
        let w = unit_ball_volume(d);
        self.m as f64
            * self.base.duration()
            * w
            * self.x_radius().powi(d as i32)
            * w
            * self.base.radius.powi(d as i32)
    }
}

/// Smallest `k` (rounded up to three decimals) such that a cylinder of
/// radius `r1 ≤ 2 r0` meeting `Q_{r0}(z0)` lies inside `k Q_{r0}(z0)`.
///
/// Conditions checked: `k ≥ 5`, `k^{2s} ≥ 1 + 2·2^{2s}` for the time
/// extent, and `k^{1+2s} ≥ 1 + 7·4^s` for the position extent. The last
/// one includes the drift `|v1|·|t − t'| < 3·4^s` of the smaller
/// cylinder's position center and is implied by the first two.
pub fn containment_factor(s: f64) -> f64 {
    let a = 2f64.powf(2.0 * s);
    let time = (1.0 + 2.0 * a).powf(1.0 / (2.0 * s));
    let pos = (1.0 + 7.0 * a).powf(1.0 / (1.0 + 2.0 * s));
    let k = 5f64.max(time).max(pos);
    (k * 1000.0).ceil() / 1000.0
}
