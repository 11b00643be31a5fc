//! Extremal operators over the constrained kernel class and the barrier
//! functions `φ1`, `φ2`, `φ3` for `s < 1/2`.
//!
//! A kernel of the class is discretized as point masses `m_c` at nodes `w_c`
//! on dyadic shells `[2^k, 2^{k+1})`, `k ∈ [ladder_min, ladder_max)`, split into
//! `sub_shells` geometric sub-shells, plus one aggregated node per far shell
//! beyond `2^{ladder_max}`. The class constraints become
//!
//! * tail: `Σ_{|w_c| > r} m_c ≤ Λ r^{−2s}` for every ladder radius `r`;
//! * nondegeneracy: `Σ_{|w_c| < r} (w_c·e)₊² m_c ≥ λ r^{2−2s}` for every ladder
//!   radius enclosing a node and every sampled direction `e`.
//!
//! `M^∓f(v)` is then the minimum/maximum of `Σ m_c (f(v + w_c) − f(v))`.

use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::direction_sample;
use crate::simplex::{LinearProgram, Sense};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct KernelClassParams {
    /// Velocity dimension.
    pub d: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    pub s: f64,
    pub ladder_min: i32,
    pub ladder_max: i32,
    pub sub_shells: usize,
    /// Size of the direction sample for `d ≥ 2`; `d = 1` always uses `±1`.
    pub directions: usize,
    pub far_shells: usize,
}

impl Default for KernelClassParams {
    fn default() -> Self {
        Self { d: 1, lambda: 1.0, big_lambda: 10.0, s: 0.25, ladder_min: -8, ladder_max: 4, sub_shells: 2, directions: 8, far_shells: 4 }
    }
}

impl KernelClassParams {
    /// `Λ` bound on `∫_{|w|<r} |w| K` (first entry) and the tail mass
    /// `∫_{|w|>r} K` (second), valid for every kernel of the class when `s < 1/2`.
    pub fn moment_bounds(&self, r: f64) -> (f64, f64) {
        let s = self.s;
        let first = self.big_lambda * 2f64.powf(2.0 * s) * r.powf(1.0 - 2.0 * s) / (1.0 - 2f64.powf(2.0 * s - 1.0));
        (first, self.big_lambda * r.powf(-2.0 * s))
    }

    /// `C_r` with `|M^±f(v) − M^±g(v)| ≤ C_r(‖f−g‖_∞ + Lip_{B_r(v)}(f−g))`.
    ///
    /// Splitting at `r`: increments inside are at most `Lip·|w|`, outside at
    /// most `2‖·‖_∞`; both moments are bounded by [`Self::moment_bounds`].
    pub fn continuity_constant(&self, r: f64) -> Result<f64> {
        if !(self.s < 0.5) {
            return Err(Error::Precondition(format!("the continuity constant needs s < 1/2, got {}", self.s)));
        }
        let (first, tail) = self.moment_bounds(r);
        Ok(first.max(2.0 * tail))
    }
}

/// The discretized class with its constraint rows.
#[derive(Debug, Clone)]
pub struct KernelClass {
    pub params: KernelClassParams,
    /// Node coordinates, `d` per node.
    pub nodes: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    lp: LinearProgram,
}

/// Optimal kernel and its multipliers for one extremal evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Extremal {
    pub value: f64,
    /// Node masses of the optimizing kernel.
    pub kernel: Vec<f64>,
    pub duals: Vec<f64>,
    pub maximize: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Certificate {
    /// Smallest constraint slack of the optimizer (≥ 0 when feasible).
    pub min_slack: f64,
    /// `|Σ m_c δf_c − value|`.
    pub objective_error: f64,
    /// `|bᵀy − value|`.
    pub duality_gap: f64,
    pub dual_violation: f64,
}

impl Certificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_slack >= -tol && self.objective_error <= tol && self.duality_gap <= tol * (1.0 + self.objective_error.abs()) && self.dual_violation <= tol
    }
}

impl KernelClass {
    pub fn new(params: KernelClassParams) -> Result<Self> {
        let p = &params;
        if !(p.s > 0.0 && p.s < 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0,1), got {}", p.s)));
        }
        if !(p.lambda > 0.0 && p.big_lambda > 0.0) {
            return Err(Error::InvalidParameter("λ and Λ must be positive".into()));
        }
        if p.d == 0 || p.d > 3 {
            return Err(Error::Dimension(p.d));
        }
        if p.ladder_max <= p.ladder_min + 1 || p.sub_shells == 0 {
            return Err(Error::InvalidParameter("the radius ladder needs at least two rungs and one sub-shell".into()));
        }
        let dirs = direction_sample(p.d, p.directions);
        let mut radii = Vec::new();
        for k in p.ladder_min..p.ladder_max {
            for j in 0..p.sub_shells {
                radii.push(2f64.powf(k as f64 + (j as f64 + 0.5) / p.sub_shells as f64));
            }
        }
        for j in 0..p.far_shells {
            radii.push(2f64.powf(p.ladder_max as f64 + j as f64 + 0.5));
        }
        let mut nodes = Vec::new();
        let mut node_radii = Vec::new();
        for &r in &radii {
            for e in &dirs {
                nodes.push(e.iter().map(|c| c * r).collect::<Vec<f64>>());
                node_radii.push(r);
            }
        }
        let n = nodes.len();
        let mut lp = LinearProgram::new(vec![0.0; n]);
        for k in p.ladder_min..=p.ladder_max {
            let r = 2f64.powi(k);
            let row = node_radii.iter().map(|&q| if q > r { 1.0 } else { 0.0 }).collect();
            lp.add(row, Sense::Le, p.big_lambda * r.powf(-2.0 * p.s))?;
        }
        for k in p.ladder_min + 1..=p.ladder_max {
            let r = 2f64.powi(k);
            for e in &dirs {
                let row = nodes
                    .iter()
                    .zip(&node_radii)
                    .map(|(w, &q)| {
                        let we: f64 = w.iter().zip(e).map(|(a, b)| a * b).sum();
                        if q < r {
                            we.max(0.0).powi(2)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                lp.add(row, Sense::Ge, p.lambda * r.powf(2.0 - 2.0 * p.s))?;
            }
        }
        let class = Self { params, nodes, radii: node_radii, lp };
        class.lp.minimize().map_err(|e| match e {
            Error::Infeasible(m) => Error::Infeasible(format!("kernel class is empty at this discretization (λ = {}, Λ = {}): {m}", p.lambda, p.big_lambda)),
            other => other,
        })?;
        Ok(class)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `f(v + w_c) − f(v)` at every node.
    pub fn increments(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.params.d {
            return Err(Error::InvalidParameter(format!("point has dimension {}, class has {}", v.len(), self.params.d)));
        }
        let f0 = f(v);
        let mut p = v.to_vec();
        let inc: Vec<f64> = self
            .nodes
            .iter()
            .map(|w| {
                for ((a, b), c) in p.iter_mut().zip(v).zip(w) {
                    *a = b + c;
                }
                f(&p) - f0
            })
            .collect();
        if !f0.is_finite() || inc.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("function is not finite at the probed nodes".into()));
        }
        Ok(inc)
    }

    fn solve(&self, increments: Vec<f64>, maximize: bool) -> Result<Extremal> {
        let mut lp = self.lp.clone();
        lp.objective = increments;
        let sol = if maximize { lp.maximize() } else { lp.minimize() }.map_err(|e| match e {
            Error::Unbounded(m) => Error::Unbounded(format!("constraint ladder leaves mass unconstrained: {m}")),
            other => other,
        })?;
        Ok(Extremal { value: sol.objective, kernel: sol.x, duals: sol.duals, maximize })
    }

    pub fn minus_from_increments(&self, increments: Vec<f64>) -> Result<Extremal> {
        self.solve(increments, false)
    }

    pub fn plus_from_increments(&self, increments: Vec<f64>) -> Result<Extremal> {
        self.solve(increments, true)
    }

    /// `L_K f(v) = Σ m_c δf_c` for a discrete kernel.
    pub fn apply(&self, kernel: &[f64], increments: &[f64]) -> f64 {
        kernel.iter().zip(increments).map(|(a, b)| a * b).sum()
    }

    /// Smallest slack of a discrete kernel against the class constraints.
    pub fn kernel_slack(&self, kernel: &[f64]) -> f64 {
        self.lp.min_slack(kernel)
    }

    /// Re-checks an optimizer against the constraints, the objective and the duals.
    pub fn revalidate(&self, increments: &[f64], e: &Extremal) -> Certificate {
        let mut lp = self.lp.clone();
        lp.objective = increments.to_vec();
        let min_slack = lp.min_slack(&e.kernel);
        let objective_error = (lp.value(&e.kernel) - e.value).abs();
        let duality_gap = (lp.dual_value(&e.duals) - e.value).abs();
        // A maximization is a minimization of −f with negated multipliers.
        let dual_violation = if e.maximize {
            lp.objective.iter_mut().for_each(|c| *c = -*c);
            let y: Vec<f64> = e.duals.iter().map(|y| -y).collect();
            lp.dual_violation_min(&y)
        } else {
            lp.dual_violation_min(&e.duals)
        };
        Certificate { min_slack, objective_error, duality_gap, dual_violation }
    }
}

pub fn extremal_minus(class: &KernelClass, f: &(dyn Fn(&[f64]) -> f64 + Sync), v: &[f64]) -> Result<Extremal> {
    class.minus_from_increments(class.increments(f, v)?)
}

pub fn extremal_plus(class: &KernelClass, f: &(dyn Fn(&[f64]) -> f64 + Sync), v: &[f64]) -> Result<Extremal> {
    class.plus_from_increments(class.increments(f, v)?)
}

// Ψ on [1/2, 1] in u = 2r − 1: 1 − (79/8)u³ + (59/4)u⁴ − (47/8)u⁵, the unique
// quintic with Ψ = 1, Ψ' = Ψ'' = 0 at r = 1/2 and Ψ = 0, Ψ' = 0, Ψ'' = 1 at r = 1.
const PSI: [f64; 3] = [-79.0 / 8.0, 59.0 / 4.0, -47.0 / 8.0];

/// Radial profile `Ψ(r)` and its first two derivatives.
pub fn psi(r: f64) -> (f64, f64, f64) {
    if r <= 0.5 {
        return (1.0, 0.0, 0.0);
    }
    if r >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = 2.0 * r - 1.0;
    let [a, b, c] = PSI;
    let v = 1.0 + u * u * u * (a + u * (b + u * c));
    let d1 = u * u * (3.0 * a + u * (4.0 * b + 5.0 * u * c));
    let d2 = u * (6.0 * a + u * (12.0 * b + 20.0 * u * c));
    (v, 2.0 * d1, 4.0 * d2)
}

/// Samples `Ψ` on `[1/2, 1)` and checks positivity and monotonicity.
pub fn validate_profile(samples: usize) -> Result<()> {
    let mut prev = 1.0;
    for i in 1..samples {
        let r = 0.5 + 0.5 * i as f64 / samples as f64;
        let (v, d1, _) = psi(r);
        if !(v > 0.0) || v > prev || d1 > 0.0 {
            return Err(Error::CheckFailed(format!("profile fails positivity or monotonicity at r = {r}")));
        }
        prev = v;
    }
    Ok(())
}

fn profile_checked() -> Result<()> {
    static CHECK: OnceLock<std::result::Result<(), String>> = OnceLock::new();
    CHECK.get_or_init(|| validate_profile(100_000).map_err(|e| e.to_string())).clone().map_err(Error::CheckFailed)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum BarrierKind {
    Phi1,
    Phi2,
    Phi3,
}

/// Parameters of `φ3` and of the rescaled barrier
/// `φ(t,x,v) = φ3(ρ^{−2s}t, ρ^{−1−2s}x, ρ^{−1}v)`; `ρ = 1` gives `φ3`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BarrierParams {
    pub s: f64,
    pub t0: f64,
    pub p: f64,
    pub rho: f64,
}

impl BarrierParams {
    pub fn new(s: f64, t0: f64, p: f64, rho: f64) -> Result<Self> {
        let b = Self { s, t0, p, rho };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0,1), got {}", self.s)));
        }
        if !(self.t0 > 0.0 && self.p > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidParameter("t0, p and ρ must be positive".into()));
        }
        profile_checked()
    }

    /// Shear of `φ2`: `A = 5 + 1/(2s)`.
    pub fn a(&self) -> f64 {
        5.0 + 1.0 / (2.0 * self.s)
    }

    /// `(b, α, β)` at physical time `t`: `b = t0/(τ+t0)`, `α = b^{1+1/2s}`, `β = b^{1/2s}`.
    fn scales(&self, t: f64) -> (f64, f64, f64, f64) {
        let tau = self.rho.powf(-2.0 * self.s) * t;
        let b = self.t0 / (tau + self.t0);
        let e = 1.0 / (2.0 * self.s);
        (tau, b, b.powf(1.0 + e), b.powf(e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierValue {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major; for `φ3` this is the `(x, v)` block.
    pub hessian: Option<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn phi1_full(v: &[f64], hessian: bool) -> BarrierValue {
    let d = v.len();
    let r = norm(v);
    let (val, d1, d2) = psi(r);
    let gradient = if r > 0.0 { v.iter().map(|x| d1 * x / r).collect() } else { vec![0.0; d] };
    let hessian = hessian.then(|| {
        let mut h = vec![0.0; d * d];
        if r > 0.0 {
            for i in 0..d {
                for j in 0..d {
                    let (ei, ej) = (v[i] / r, v[j] / r);
                    let delta = if i == j { 1.0 } else { 0.0 };
                    h[i * d + j] = d2 * ei * ej + d1 / r * (delta - ei * ej);
                }
            }
        }
        h
    });
    BarrierValue { value: val, gradient, hessian }
}

pub fn phi1(v: &[f64]) -> f64 {
    psi(norm(v)).0
}

/// `φ2(x, v) = φ1(x) φ1(v − Ax)`.
pub fn phi2(x: &[f64], v: &[f64], a: f64) -> f64 {
    let fx = phi1(x);
    if fx == 0.0 {
        return 0.0;
    }
    let u: Vec<f64> = v.iter().zip(x).map(|(vi, xi)| vi - a * xi).collect();
    fx * phi1(&u)
}

fn phi2_full(x: &[f64], v: &[f64], a: f64, hessian: bool) -> BarrierValue {
    let d = x.len();
    let u: Vec<f64> = v.iter().zip(x).map(|(vi, xi)| vi - a * xi).collect();
    let px = phi1_full(x, hessian);
    let pu = phi1_full(&u, hessian);
    let (fa, fb) = (px.value, pu.value);
    let mut gradient = vec![0.0; 2 * d];
    for i in 0..d {
        gradient[i] = px.gradient[i] * fb - a * fa * pu.gradient[i];
        gradient[d + i] = fa * pu.gradient[i];
    }
    let hessian = hessian.then(|| {
        let (hx, hu) = (px.hessian.unwrap(), pu.hessian.unwrap());
        let (gx, gu) = (&px.gradient, &pu.gradient);
        let n = 2 * d;
        let mut h = vec![0.0; n * n];
        for i in 0..d {
            for j in 0..d {
                h[i * n + j] = hx[i * d + j] * fb - a * (gx[i] * gu[j] + gu[i] * gx[j]) + a * a * fa * hu[i * d + j];
                let xv = gx[i] * gu[j] - a * fa * hu[i * d + j];
                h[i * n + d + j] = xv;
                h[(d + j) * n + i] = xv;
                h[(d + i) * n + d + j] = fa * hu[i * d + j];
            }
        }
        h
    });
    BarrierValue { value: fa * fb, gradient, hessian }
}

/// Self-similar coordinates `(X, V)` of a physical point and the prefactor `b`.
fn phi3_coordinates(t: f64, x: &[f64], v: &[f64], bp: &BarrierParams) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let (tau, b, al, be) = bp.scales(t);
    let s = bp.s;
    let (sx, sv) = (bp.rho.powf(-1.0 - 2.0 * s), 1.0 / bp.rho);
    (tau, b, x.iter().map(|c| al * sx * c).collect(), v.iter().map(|c| be * sv * c).collect())
}

pub fn barrier_eval(kind: BarrierKind, point: &[f64], bp: &BarrierParams, hessian: bool) -> Result<BarrierValue> {
    bp.validate()?;
    let a = bp.a();
    match kind {
        BarrierKind::Phi1 => {
            if point.is_empty() {
                return Err(Error::Dimension(0));
            }
            Ok(phi1_full(point, hessian))
        }
        BarrierKind::Phi2 => {
            if point.is_empty() || point.len() % 2 == 1 {
                return Err(Error::InvalidParameter(format!("φ2 takes (x, v) of equal dimension, got {} coordinates", point.len())));
            }
            let d = point.len() / 2;
            Ok(phi2_full(&point[..d], &point[d..], a, hessian))
        }
        BarrierKind::Phi3 => {
            if point.len() < 3 || point.len() % 2 == 0 {
                return Err(Error::InvalidParameter(format!("φ3 takes (t, x, v), got {} coordinates", point.len())));
            }
            let t = point[0];
            if !(t >= 0.0) {
                return Err(Error::InvalidParameter(format!("φ3 is defined for t ≥ 0, got {t}")));
            }
            let d = (point.len() - 1) / 2;
            let s = bp.s;
            let e = 1.0 / (2.0 * s);
            let (tau, b, xx, vv) = phi3_coordinates(t, &point[1..1 + d], &point[1 + d..], bp);
            let (_, _, al, be) = bp.scales(t);
            let inner = phi2_full(&xx, &vv, a, hessian);
            let pre = b.powf(bp.p);
            let (gx, gv) = inner.gradient.split_at(d);
            let dt = bp.rho.powf(-2.0 * s) * pre / (tau + bp.t0) * (-bp.p * inner.value - (1.0 + e) * dot(&xx, gx) - e * dot(&vv, gv));
            let cx = al * bp.rho.powf(-1.0 - 2.0 * s);
            let cv = be / bp.rho;
            let mut gradient = vec![dt];
            gradient.extend(gx.iter().map(|g| pre * cx * g));
            gradient.extend(gv.iter().map(|g| pre * cv * g));
            let hessian = inner.hessian.map(|h| {
                let n = 2 * d;
                let c = |i: usize| if i < d { cx } else { cv };
                (0..n * n).map(|k| pre * c(k / n) * c(k % n) * h[k]).collect()
            });
            Ok(BarrierValue { value: pre * inner.value, gradient, hessian })
        }
    }
}

/// Margin of `M^-φ1` on the boundary layer `{φ1 < δ} ∩ B1`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MarginReport {
    pub delta: f64,
    pub margin: f64,
    pub argmin: Vec<f64>,
    pub points: usize,
    /// Smallest constraint slack over all certificates.
    pub min_slack: f64,
}

/// Minimum of `M^-φ1` over grid points of `B1` with `φ1 < δ`.
///
/// By radial symmetry the grid is `±(i + 1/2)/n · e1`, which is all of `B1`
/// when `d = 1`.
pub fn b1_margin(class: &KernelClass, delta: f64, n: usize) -> Result<MarginReport> {
    if !(class.params.s < 0.5) {
        return Err(Error::Precondition(format!("pointwise extremal evaluation needs s < 1/2, got {}", class.params.s)));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("δ must lie in (0, 1], got {delta}")));
    }
    let d = class.params.d;
    let pts: Vec<Vec<f64>> = (0..n)
        .flat_map(|i| {
            let r = (i as f64 + 0.5) / n as f64;
            [1.0, -1.0].map(|sg| {
                let mut p = vec![0.0; d];
                p[0] = sg * r;
                p
            })
        })
        .filter(|p| phi1(p) < delta)
        .collect();
    if pts.is_empty() {
        return Err(Error::Precondition(format!("no grid point of B1 has φ1 < {delta}")));
    }
    let f = |p: &[f64]| phi1(p);
    let vals: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|p| {
            let inc = class.increments(&f, p)?;
            let e = class.minus_from_increments(inc)?;
            Ok((e.value, class.kernel_slack(&e.kernel)))
        })
        .collect::<Result<_>>()?;
    let (k, margin) = vals.iter().enumerate().map(|(k, v)| (k, v.0)).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let min_slack = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    Ok(MarginReport { delta, margin, argmin: pts[k].clone(), points: pts.len(), min_slack })
}

/// One point of the `φ2` inequality check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LevelPoint {
    pub x: f64,
    pub v: f64,
    pub phi2: f64,
    pub residual: f64,
}

/// Largest `δ` such that every point with `φ < δ` has residual `≤ 0`.
///
/// The predicate is monotone in `δ`, so the bisection limit is the smallest
/// level carrying a positive residual; it is computed directly.
pub fn largest_safe_level(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    points.into_iter().filter(|p| p.1 > 0.0).map(|p| p.0).fold(1.0, f64::min)
}

/// Cell midpoints of `(−1,1)²` in the support coordinates `(X, U = V − AX)`.
fn support_grid(n: usize) -> Vec<(f64, f64)> {
    let c = |i: usize| -1.0 + (2.0 * i as f64 + 1.0) / n as f64;
    (0..n * n).map(|k| (c(k / n), c(k % n))).collect()
}

/// Left side of the `φ2` inequality
/// `(−1−1/2s) X·∇_xφ2 − (1/2s) V·∇_vφ2 + t0 (V·∇_xφ2 − M^-_vφ2)` on an
/// `n × n` grid of the support, for `d = 1`.
pub fn phi2_inequality(class: &KernelClass, bp: &BarrierParams, n: usize) -> Result<Vec<LevelPoint>> {
    if class.params.d != 1 {
        return Err(Error::Dimension(class.params.d));
    }
    if !(bp.s < 0.5) || (bp.s - class.params.s).abs() > 0.0 {
        return Err(Error::Precondition("barrier and kernel class must share one s < 1/2".into()));
    }
    bp.validate()?;
    let a = bp.a();
    let e = 1.0 / (2.0 * bp.s);
    support_grid(n)
        .par_iter()
        .map(|&(x, u)| {
            let v = u + a * x;
            let p = phi2_full(&[x], &[v], a, false);
            let f = |w: &[f64]| phi2(&[x], w, a);
            let m = extremal_minus(class, &f, &[v])?.value;
            let (gx, gv) = (p.gradient[0], p.gradient[1]);
            let residual = -(1.0 + e) * x * gx - e * v * gv + bp.t0 * (v * gx - m);
            Ok(LevelPoint { x, v, phi2: p.value, residual })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SubsolutionGrid {
    pub horizon: f64,
    pub nt: usize,
    /// Points per support coordinate `X`, `U`.
    pub n: usize,
}

impl SubsolutionGrid {
    pub fn points(&self) -> usize {
        self.nt * self.n * self.n
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubsolutionReport {
    pub p: f64,
    pub max_residual: f64,
    pub points: usize,
    /// `(p, max residual)` for every rung tried.
    pub ladder: Vec<(f64, f64)>,
    /// Max over `φ2(X,V) < δ` of the `p`-free part; `≤ 0` means the region is
    /// handled without `p`.
    pub delta_region_max: Option<f64>,
    /// Smallest `p` (not restricted to the ladder) that makes the grid maximum nonpositive.
    pub p_required: f64,
    pub min_slack: f64,
}

/// Per-point split `residual(p) = b^p (R0 − p·c·φ2)` with `c = ρ^{−2s}/(τ+t0)`.
struct Split {
    pre_log: f64,
    r0: f64,
    c: f64,
    phi2: f64,
}

/// Max of `∂_tφ + v·∂_xφ − M^-_vφ` over a grid of `{φ > 0}` on `[0, T]`, for
/// the rescaled barrier with `d = 1`, and the smallest `p = 2^k ≤ p_max`
/// making it nonpositive. The `p` in `bp` is ignored.
///
/// The grid is `nt` uniform times on `[0, T]` times an `n × n` grid of the
/// support coordinates, mapped back to `(x, v)`; `M^-` is an LP at every point.
pub fn barrier_subsolution_residual(class: &KernelClass, bp: &BarrierParams, grid: &SubsolutionGrid, p_max: f64, delta: Option<f64>) -> Result<SubsolutionReport> {
    if class.params.d != 1 {
        return Err(Error::Dimension(class.params.d));
    }
    if !(bp.s < 0.5) || (bp.s - class.params.s).abs() > 0.0 {
        return Err(Error::Precondition("barrier and kernel class must share one s < 1/2".into()));
    }
    if grid.nt < 1 || grid.n < 1 || !(grid.horizon >= 0.0) {
        return Err(Error::InvalidParameter("subsolution grid needs nt, n ≥ 1 and T ≥ 0".into()));
    }
    bp.validate()?;
    let s = bp.s;
    let e = 1.0 / (2.0 * s);
    let a = bp.a();
    let support = support_grid(grid.n);
    let times: Vec<f64> = (0..grid.nt).map(|k| if grid.nt == 1 { 0.0 } else { grid.horizon * k as f64 / (grid.nt - 1) as f64 }).collect();
    let jobs: Vec<(f64, f64, f64)> = times.iter().flat_map(|&t| support.iter().map(move |&(x, u)| (t, x, u))).collect();
    let splits: Vec<(Split, f64)> = jobs
        .par_iter()
        .map(|&(t, xs, us)| {
            let (tau, b, _, be) = bp.scales(t);
            let vs = us + a * xs;
            let p2 = phi2_full(&[xs], &[vs], a, false);
            let kappa = be / bp.rho;
            let f = |w: &[f64]| phi2(&[xs], &[vs + kappa * (w[0] - vs)], a);
            let ext = extremal_minus(class, &f, &[vs])?;
            let c = bp.rho.powf(-2.0 * s) / (tau + bp.t0);
            let (gx, gv) = (p2.gradient[0], p2.gradient[1]);
            let r0 = c * (-(1.0 + e) * xs * gx - e * vs * gv + bp.t0 * vs * gx) - ext.value;
            Ok((Split { pre_log: b.ln(), r0, c, phi2: p2.value }, class.kernel_slack(&ext.kernel)))
        })
        .collect::<Result<_>>()?;
    let min_slack = splits.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let delta_region_max = delta.map(|dl| splits.iter().filter(|s| s.0.phi2 < dl).map(|s| s.0.r0).fold(f64::NEG_INFINITY, f64::max));
    let p_required = splits.iter().filter(|(q, _)| q.r0 > 0.0).map(|(q, _)| q.r0 / (q.c * q.phi2)).fold(0.0, f64::max);
    let max_at = |p: f64| splits.iter().map(|(q, _)| (p * q.pre_log).exp() * (q.r0 - p * q.c * q.phi2)).fold(f64::NEG_INFINITY, f64::max);
    let mut ladder = Vec::new();
    let mut p = 1.0;
    while p <= p_max {
        let m = max_at(p);
        ladder.push((p, m));
        if m <= 0.0 {
            return Ok(SubsolutionReport { p, max_residual: m, points: jobs.len(), ladder, delta_region_max, p_required, min_slack });
        }
        p *= 2.0;
    }
    let profile: Vec<String> = ladder.iter().map(|(p, m)| format!("p = {p}: {m:.4e}")).collect();
    Err(Error::CheckFailed(format!(
        "no p ≤ {p_max} makes the barrier a subsolution ({}); the grid needs p ≥ {p_required:.4e}",
        profile.join(", ")
    )))
}

/// Constants found for one `(s, λ, Λ)` configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BarrierConstants {
    pub s: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Level below which `M^-φ1` is certified positive on the grid.
    pub delta_b1: f64,
    /// `M^-φ1` margin on `{φ1 < δ_b1}`.
    pub theta: f64,
    /// Level below which the `φ2` inequality holds on the grid.
    pub delta: f64,
    pub t0: f64,
    pub p: f64,
    pub rho: f64,
}

impl BarrierConstants {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}
