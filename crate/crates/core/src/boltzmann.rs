//! The non-cutoff Boltzmann collision kernel in Carleman coordinates, the
//! cancellation convolution term, the change-of-variables identities behind
//! them, and the geometric nondegeneracy machinery (lifted level sets, cones
//! of directions).

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernel::{ellipticity_report, CheckOptions, EllipticityReport, Kernel, KernelSpec};
use crate::quad::{adaptive_gl, ball_probes, full_range, gauss_legendre, sphere_area, RadialEngine};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn axpy(a: &[f64], t: f64, e: &[f64]) -> Vec<f64> {
    a.iter().zip(e).map(|(x, y)| x + t * y).collect()
}

/// `B(r, cos θ) = r^γ b(cos θ)` with `b(c) = |sin(θ/2)|^{−(d−1)−2s}` for
/// `c ≥ 0` and the folded branch `|cos(θ/2)|^{γ+2s+1}` for `c < 0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CrossSection {
    pub d: usize,
    pub gamma: f64,
    pub s: f64,
}

impl CrossSection {
    pub fn new(d: usize, gamma: f64, s: f64) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0,1), got {s}")));
        }
        if !(gamma > -(d as f64) && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (-d,1], got {gamma}")));
        }
        if gamma + 2.0 * s > 2.0 {
            return Err(Error::InvalidParameter(format!("gamma + 2s = {} exceeds 2", gamma + 2.0 * s)));
        }
        Ok(Self { d, gamma, s })
    }

    /// Grazing branch in terms of `sin²(θ/2) = (1 − c)/2`.
    fn grazing(&self, sin2_half: f64) -> f64 {
        sin2_half.powf(-0.5 * (self.d as f64 - 1.0) - self.s)
    }

    /// Folded branch in terms of `cos²(θ/2) = (1 + c)/2`.
    fn folded(&self, cos2_half: f64) -> f64 {
        cos2_half.powf(0.5 * (self.gamma + 2.0 * self.s + 1.0))
    }

    /// Angular factor `b(c)`.
    pub fn angular(&self, c: f64) -> f64 {
        if c >= 0.0 {
            self.grazing(0.5 * (1.0 - c))
        } else {
            self.folded(0.5 * (1.0 + c))
        }
    }

    pub fn value(&self, r: f64, c: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("relative speed must be positive, got {r}")));
        }
        if !(-1.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!("cos θ must lie in [-1,1], got {c}")));
        }
        Ok(r.powf(self.gamma) * self.angular(c))
    }

    /// Both branch formulas at `c`, for the continuity log at `c = 0`.
    pub fn branches(&self, r: f64, c: f64) -> (f64, f64) {
        let rg = r.powf(self.gamma);
        (rg * self.grazing(0.5 * (1.0 - c)), rg * self.folded(0.5 * (1.0 + c)))
    }

    /// `B(r, c) r^{2−d}` on the Carleman hyperplane, with `|u| = |v'−v|`,
    /// `ρ = |w|`, `r² = |u|² + ρ²`, `c = (ρ² − |u|²)/r²`.
    fn hyperplane_weight(&self, u: f64, rho: f64) -> f64 {
        let r2 = u * u + rho * rho;
        let d = self.d as f64;
        let b = if rho >= u { self.grazing(u * u / r2) } else { self.folded(rho * rho / r2) };
        r2.powf(0.5 * (self.gamma + 2.0 - d)) * b
    }

    /// Pointwise bracket of `K_f(v,v')|v'−v|^{d+2s}` over `∫_{w⊥v'−v} f(v+w)|w|^{γ+2s+1} dw`.
    ///
    /// Far branch: `2^{d−1}(r/|w|)^{γ+2s+1}` with `r/|w| ∈ [1, √2]`; near branch:
    /// `2^{d−1}(|u|/r)^{d+2s−1}` with `|u|/r ∈ [1/√2, 1]`.
    pub fn comparability_bracket(&self) -> (f64, f64) {
        let base = 2f64.powi(self.d as i32 - 1);
        let far = 2f64.powf(0.5 * (self.gamma + 2.0 * self.s + 1.0));
        let near = 2f64.powf(-0.5 * (self.d as f64 + 2.0 * self.s - 1.0));
        (base * far.min(1.0).min(near), base * far.max(1.0).max(near))
    }
}

/// Where `f` is not negligible: a ball `B_R(c)`.
fn extent(f: &GridFunction) -> (Vec<f64>, f64) {
    use crate::grid::Profile;
    if let Some(Profile::Maxwellian { temperature, center, .. }) = &f.profile {
        // exp(−R²/2T) < 1e−17.
        return (center.clone(), (2.0 * temperature * 39.2).sqrt());
    }
    if let Some(r) = f.profile.as_ref().and_then(|p| p.support_radius()) {
        return (vec![0.0; f.dim()], r);
    }
    let hi = f.hi();
    let c: Vec<f64> = f.lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let r = norm(&sub(&hi, &c)) + f.spacing.iter().cloned().fold(0.0, f64::max);
    (c, r)
}

/// Orthonormal basis of `u^⊥`.
pub fn hyperplane_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let n = norm(u);
    let uh: Vec<f64> = u.iter().map(|x| x / n).collect();
    match u.len() {
        2 => vec![vec![-uh[1], uh[0]]],
        _ => {
            let k = (0..3).min_by(|&a, &b| uh[a].abs().total_cmp(&uh[b].abs())).unwrap();
            let mut a = vec![0.0; 3];
            a[k] = 1.0;
            let p = dot(&a, &uh);
            let e1: Vec<f64> = a.iter().zip(&uh).map(|(x, y)| x - p * y).collect();
            let n1 = norm(&e1);
            let e1: Vec<f64> = e1.iter().map(|x| x / n1).collect();
            let e2 = vec![
                uh[1] * e1[2] - uh[2] * e1[1],
                uh[2] * e1[0] - uh[0] * e1[2],
                uh[0] * e1[1] - uh[1] * e1[0],
            ];
            vec![e1, e2]
        }
    }
}

/// Quadrature settings of the Carleman hyperplane integral.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CarlemanOptions {
    pub rtol: f64,
    /// Trapezoid points on in-plane circles (`d = 3`).
    pub azimuths: usize,
}

impl Default for CarlemanOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, azimuths: 32 }
    }
}

/// `K_f(v,v')` from the Carleman representation.
#[derive(Debug, Clone)]
pub struct BoltzmannKernel {
    pub f: Arc<GridFunction>,
    pub cs: CrossSection,
    pub opts: CarlemanOptions,
    center: Vec<f64>,
    reach: f64,
}

impl BoltzmannKernel {
    pub fn new(f: Arc<GridFunction>, cs: CrossSection, opts: CarlemanOptions) -> Result<Self> {
        if f.dim() != cs.d {
            return Err(Error::Dimension(f.dim()));
        }
        let (center, reach) = extent(&f);
        Ok(Self { f, cs, opts, center, reach })
    }

    /// `(2^{d−1}/|u|) ∫_{w⊥u} f(v+w) B(r, cos θ) r^{2−d} dw` with `u = v' − v`.
    pub fn carleman(&self, v: &[f64], vp: &[f64]) -> Result<f64> {
        let d = self.cs.d;
        let u = sub(vp, v);
        let un = norm(&u);
        if un == 0.0 {
            return Err(Error::InvalidParameter("K_f is singular at v = v'".into()));
        }
        let basis = hyperplane_basis(&u);
        let rho_max = norm(&sub(v, &self.center)) + self.reach;
        let f = &self.f;
        let na = self.opts.azimuths;
        let ring = |rho: f64| -> f64 {
            if d == 2 {
                f.eval(&axpy(v, rho, &basis[0])) + f.eval(&axpy(v, -rho, &basis[0]))
            } else {
                let mut acc = 0.0;
                for j in 0..na {
                    let a = 2.0 * PI * j as f64 / na as f64;
                    let p: Vec<f64> = (0..3).map(|i| v[i] + rho * (a.cos() * basis[0][i] + a.sin() * basis[1][i])).collect();
                    acc += f.eval(&p);
                }
                acc * 2.0 * PI / na as f64 * rho
            }
        };
        let integrand = |rho: f64| {
            let val = self.cs.hyperplane_weight(un, rho) * ring(rho);
            (val, val.abs())
        };
        let mut total = 0.0;
        let split = un.min(rho_max);
        total += adaptive_gl(0.0, split, 2, self.opts.rtol, 0.0, 40, integrand)?.0;
        if rho_max > un {
            total += adaptive_gl(un, rho_max, 4, self.opts.rtol, 0.0, 40, integrand)?.0;
        }
        Ok(2f64.powi(d as i32 - 1) / un * total)
    }

    /// `∫_{w⊥u} f(v+w)|w|^{γ+2s+1} dw`, the comparable simplified form.
    pub fn simplified(&self, v: &[f64], vp: &[f64]) -> Result<f64> {
        let d = self.cs.d;
        let u = sub(vp, v);
        let basis = hyperplane_basis(&u);
        let rho_max = norm(&sub(v, &self.center)) + self.reach;
        let p = self.cs.gamma + 2.0 * self.cs.s + 1.0;
        let f = &self.f;
        let gl = gauss_legendre(48);
        let integrand = |rho: f64| -> (f64, f64) {
            let ring = if d == 2 {
                f.eval(&axpy(v, rho, &basis[0])) + f.eval(&axpy(v, -rho, &basis[0]))
            } else {
                // Independent azimuthal rule: Gauss nodes on [0, 2π].
                let mut acc = 0.0;
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let a = PI * (1.0 + x);
                    let q: Vec<f64> = (0..3).map(|i| v[i] + rho * (a.cos() * basis[0][i] + a.sin() * basis[1][i])).collect();
                    acc += PI * w * f.eval(&q);
                }
                acc * rho
            };
            let val = rho.powf(p) * ring;
            (val, val.abs())
        };
        Ok(adaptive_gl(0.0, rho_max, 8, 1e-8, 0.0, 40, integrand)?.0)
    }
}

impl Kernel for BoltzmannKernel {
    fn dim(&self) -> usize {
        self.cs.d
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        self.carleman(v, vp).unwrap_or(f64::NAN)
    }
}

/// Kernel spec for `K_f` with reference radius `R̄`.
pub fn boltzmann_spec(f: Arc<GridFunction>, cs: CrossSection, radius: f64, opts: CarlemanOptions) -> Result<KernelSpec> {
    let k = BoltzmannKernel::new(f, cs, opts)?;
    KernelSpec::new(Arc::new(k), cs.s, radius, false, "boltzmann")
}

/// `C_b = ∫_{S^{d−1}} {2^{(d+γ)/2}(1 + σ·e)^{−(d+γ)/2} − 1} b(σ·e) dσ` in a frame adapted to `e`.
///
/// Both endpoint singularities are removed by power substitutions, and
/// `1 ± σ·e` are formed as `|σ ± e|²/2` so no cancellation occurs.
pub fn cancellation_constant(cs: &CrossSection, e: &[f64], rtol: f64) -> Result<f64> {
    let d = cs.d;
    if e.len() != d {
        return Err(Error::Dimension(e.len()));
    }
    let n = norm(e);
    let e: Vec<f64> = e.iter().map(|x| x / n).collect();
    let frame = hyperplane_basis(&e);
    let p = 0.5 * (d as f64 + cs.gamma);
    let azimuths = if d == 2 { 2 } else { 8 };
    // Sphere integrand at polar angle θ, averaged over the azimuth.
    let at = |th: f64| -> f64 {
        let (st, ct) = th.sin_cos();
        let mut acc = 0.0;
        for j in 0..azimuths {
            let sigma: Vec<f64> = if d == 2 {
                let sg = if j == 0 { 1.0 } else { -1.0 };
                (0..2).map(|i| ct * e[i] + sg * st * frame[0][i]).collect()
            } else {
                let a = 2.0 * PI * j as f64 / azimuths as f64;
                (0..3).map(|i| ct * e[i] + st * (a.cos() * frame[0][i] + a.sin() * frame[1][i])).collect()
            };
            let plus: f64 = sigma.iter().zip(&e).map(|(x, y)| (x + y) * (x + y)).sum::<f64>() * 0.25;
            let minus: f64 = sigma.iter().zip(&e).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * 0.25;
            // plus = (1+c)/2, minus = (1−c)/2.
            let log_plus = if minus < 0.5 { (-minus).ln_1p() } else { plus.ln() };
            let bracket = (-p * log_plus).exp_m1();
            let b = if plus >= minus { cs.grazing(minus) } else { cs.folded(plus) };
            acc += bracket * b;
        }
        let circle = if d == 2 { 1.0 } else { 2.0 * PI / azimuths as f64 };
        acc * circle * st.powi(d as i32 - 2)
    };
    let m0 = (3.0 / (2.0 - 2.0 * cs.s)).ceil().max(1.0);
    let mpi = (3.0 / (2.0 * cs.s)).ceil().max(1.0);
    let half = 0.5 * PI;
    let near = adaptive_gl(0.0, 1.0, 4, rtol, 0.0, 40, |y| {
        let th = half * y.powf(m0);
        let v = at(th) * half * m0 * y.powf(m0 - 1.0);
        (v, v.abs())
    })?;
    let far = adaptive_gl(0.0, 1.0, 4, rtol, 0.0, 40, |y| {
        let th = PI - half * y.powf(mpi);
        let v = at(th) * half * mpi * y.powf(mpi - 1.0);
        (v, v.abs())
    })?;
    Ok(near.0 + far.0)
}

/// `∫ f(v − z)|z|^p dz`.
pub fn moment_convolution(f: &GridFunction, v: &[f64], p: f64, engine: &RadialEngine) -> Result<f64> {
    let d = f.dim();
    if !(p > -(d as f64)) {
        return Err(Error::InvalidParameter(format!("|z|^{p} is not locally integrable in dimension {d}")));
    }
    let h = |z: &[f64]| {
        let q = sub(v, z);
        let fv = f.eval(&q);
        if fv == 0.0 {
            0.0
        } else {
            fv * norm(z).powf(p)
        }
    };
    Ok(engine.integrate(d, 1.0, 0.0, f64::INFINITY, &full_range, &h)?.value)
}

/// `(C_b, C_b·(|·|^γ ⋆ f)(v))`.
pub fn cancellation_convolution(f: &GridFunction, v: &[f64], cs: &CrossSection, engine: &RadialEngine) -> Result<(f64, f64)> {
    let mut e = vec![0.0; cs.d];
    e[0] = 1.0;
    let cb = cancellation_constant(cs, &e, 1e-10)?;
    let conv = moment_convolution(f, v, cs.gamma, engine)?;
    Ok((cb, cb * conv))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Collision {
    pub q1: f64,
    pub q2: f64,
    pub total: f64,
}

/// `Q(f,g)(v) = PV∫(g(v')−g(v))K_f(v,v')dv' + C_b(|·|^γ⋆f)(v) g(v)`.
///
/// The principal value pairs `w` with `−w`; `K_f(v, v+w) = K_f(v, v−w)` makes
/// the paired integrand absolutely convergent.
pub fn collision_bilinear(
    f: Arc<GridFunction>,
    g: &GridFunction,
    v: &[f64],
    cs: &CrossSection,
    opts: CarlemanOptions,
    engine: &RadialEngine,
) -> Result<Collision> {
    let k = BoltzmannKernel::new(f.clone(), *cs, opts)?;
    let gv = g.eval(v);
    let h = |w: &[f64]| {
        let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
        let dg = g.eval(&vp) - gv;
        if dg == 0.0 {
            0.0
        } else {
            dg * k.eval(v, &vp)
        }
    };
    let q1 = engine.integrate(cs.d, 0.5, 0.0, f64::INFINITY, &full_range, &h)?.value;
    let (_, c) = cancellation_convolution(&f, v, cs, engine)?;
    let q2 = c * gv;
    Ok(Collision { q1, q2, total: q1 + q2 })
}

/// Closed-form test functions for the change-of-variables identities.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `exp(−|z − c|²/(2σ²))`.
    Gaussian { center: Vec<f64>, sigma: f64 },
    /// `z_axis·exp(−|z|²/(2σ²))`.
    Odd { sigma: f64, axis: usize },
    /// Smooth bump supported in `B_R(c)`.
    Bump { center: Vec<f64>, radius: f64 },
}

impl TestFunction {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Self::Gaussian { center, sigma } => (-dot(&sub(z, center), &sub(z, center)) / (2.0 * sigma * sigma)).exp(),
            Self::Odd { sigma, axis } => z[*axis] * (-dot(z, z) / (2.0 * sigma * sigma)).exp(),
            Self::Bump { center, radius } => {
                let q = dot(&sub(z, center), &sub(z, center)) / (radius * radius);
                if q >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
        }
    }

    /// Radius of a centered ball outside which the function is negligible.
    fn reach(&self) -> f64 {
        match self {
            Self::Gaussian { center, sigma } => norm(center) + 9.0 * sigma,
            Self::Odd { sigma, .. } => 9.5 * sigma,
            Self::Bump { center, radius } => norm(center) + radius,
        }
    }
}

/// Tensor Gauss rule for `∫_{S^{d−1}} g(σ) dσ` (polar, azimuth) with `n` polar nodes.
fn sphere_rule(d: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = gauss_legendre(n);
    match d {
        2 => gl
            .nodes
            .iter()
            .zip(&gl.weights)
            .map(|(x, w)| {
                let a = PI * (1.0 + x);
                (vec![a.cos(), a.sin()], PI * w)
            })
            .collect(),
        _ => {
            let na = 2 * n;
            let mut out = Vec::with_capacity(n * na);
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                // Gauss in cos θ = x.
                let st = (1.0 - x * x).sqrt();
                for j in 0..na {
                    let a = 2.0 * PI * (j as f64 + 0.5) / na as f64;
                    out.push((vec![st * a.cos(), st * a.sin(), *x], w * 2.0 * PI / na as f64));
                }
            }
            out
        }
    }
}

/// Gauss rule for `∫_{ℝ^k} g(w) dw` over the ball `B_R`, `k ∈ {1, 2}`, in polar form,
/// with radial panels.
fn plane_rule(k: usize, radius: f64, panels: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = gauss_legendre(n);
    let h = radius / panels as f64;
    let radial: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let m = (p as f64 + 0.5) * h;
            gl.nodes.iter().zip(&gl.weights).map(move |(x, w)| (m + 0.5 * h * x, 0.5 * h * w)).collect::<Vec<_>>()
        })
        .collect();
    match k {
        1 => radial.iter().flat_map(|&(r, w)| [(vec![r], w), (vec![-r], w)]).collect(),
        _ => {
            let na = 2 * n;
            let mut out = Vec::new();
            for &(r, w) in &radial {
                for j in 0..na {
                    let a = 2.0 * PI * (j as f64 + 0.5) / na as f64;
                    out.push((vec![r * a.cos(), r * a.sin()], w * r * 2.0 * PI / na as f64));
                }
            }
            out
        }
    }
}

/// Gauss rule over `ℝ^d` restricted to `B_R(c)` in polar coordinates about `c`.
fn space_rule(d: usize, center: &[f64], radius: f64, panels: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = gauss_legendre(n);
    let h = radius / panels as f64;
    let sph = sphere_rule(d, n);
    let mut out = Vec::new();
    for p in 0..panels {
        let m = (p as f64 + 0.5) * h;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let r = m + 0.5 * h * x;
            let jac = 0.5 * h * w * r.powi(d as i32 - 1);
            for (s, ws) in &sph {
                out.push(((0..d).map(|i| center[i] + r * s[i]).collect(), jac * ws));
            }
        }
    }
    out
}

fn embed(sigma: &[f64], w: &[f64]) -> Vec<f64> {
    // Point of σ^⊥ with in-plane coordinates w.
    let basis = hyperplane_basis(sigma);
    let mut p = vec![0.0; sigma.len()];
    for (c, e) in w.iter().zip(&basis) {
        for i in 0..p.len() {
            p[i] += c * e[i];
        }
    }
    p
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IdentityResidual {
    pub name: String,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: f64,
}

/// Sup-norm residual relative to `max(|sides|, floor)`; `floor` is the
/// integral of the absolute integrand, so vanishing sides stay meaningful.
fn residual_of(name: &str, lhs: Vec<f64>, rhs: Vec<f64>, floor: f64) -> IdentityResidual {
    let scale = lhs.iter().chain(&rhs).fold(floor, |m, x| m.max(x.abs()));
    let residual = if scale == 0.0 {
        0.0
    } else {
        lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
    };
    IdentityResidual { name: name.into(), lhs, rhs, residual }
}

/// Resolution of the change-of-variables quadratures.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CdvOptions {
    pub panels: usize,
    pub order: usize,
}

impl Default for CdvOptions {
    fn default() -> Self {
        Self { panels: 6, order: 12 }
    }
}

/// Both sides of the three sphere–hyperplane identities at radius `r`.
pub fn change_of_variables_residuals(tf: &TestFunction, d: usize, r: f64, o: &CdvOptions) -> Result<Vec<IdentityResidual>> {
    if !(2..=3).contains(&d) {
        return Err(Error::Dimension(d));
    }
    let omega = sphere_area(d - 1);
    let reach = tf.reach();
    let sph = sphere_rule(d, o.order);
    let plane = plane_rule(d - 1, reach + r, o.panels, o.order);
    // Left sides: sphere of radius r times hyperplane.
    let lhs: Vec<[f64; 5]> = sph
        .par_iter()
        .map(|(sig, ws)| {
            let mut acc = [0.0; 5];
            for (w, ww) in &plane {
                let p = embed(sig, w);
                let f1 = tf.eval(&p);
                let q: Vec<f64> = (0..d).map(|i| r * sig[i] + p[i]).collect();
                let f2 = tf.eval(&q);
                acc[0] += ww * f1;
                acc[1] += ww * f2;
                for a in 0..d.min(3) {
                    acc[2 + a] += ww * r * sig[a] * f2;
                }
            }
            acc.map(|x| x * ws * r.powi(d as i32 - 1))
        })
        .collect();
    let mut l = [0.0; 5];
    for a in lhs {
        for i in 0..5 {
            l[i] += a[i];
        }
    }
    // Right sides: polar quadrature in ℝ^d, split at |z| = r.
    let origin = vec![0.0; d];
    let inner = space_rule(d, &origin, r, o.panels, o.order);
    let outer: Vec<(Vec<f64>, f64)> = {
        let gl = gauss_legendre(o.order);
        let h = (reach.max(r) + r - r) / o.panels as f64;
        let sphd = sphere_rule(d, o.order);
        let mut out = Vec::new();
        for pnl in 0..o.panels {
            let m = r + (pnl as f64 + 0.5) * h;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let rr = m + 0.5 * h * x;
                for (s, ws) in &sphd {
                    out.push((s.iter().map(|c| rr * c).collect::<Vec<f64>>(), 0.5 * h * w * rr.powi(d as i32 - 1) * ws));
                }
            }
        }
        out
    };
    let dm3 = 0.5 * (d as f64 - 3.0);
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    let mut r1_abs = 0.0;
    let mut r2_abs = 0.0;
    let mut r3 = vec![0.0; d];
    let mut r3_abs = 0.0;
    for (z, w) in inner.iter().chain(&outer) {
        let zn = norm(z);
        let fz = tf.eval(z);
        r1 += w * fz / zn;
        r1_abs += w * fz.abs() / zn;
    }
    for (z, w) in &outer {
        let zn = norm(z);
        let fz = tf.eval(z);
        let g = (zn * zn - r * r).powf(dm3);
        r2 += w * fz * g / zn.powi(d as i32 - 2);
        r2_abs += w * fz.abs() * g / zn.powi(d as i32 - 2);
        for a in 0..d {
            r3[a] += w * z[a] * fz * g / zn.powi(d as i32);
        }
        r3_abs += w * zn * fz.abs() * g / zn.powi(d as i32);
    }
    let c1 = omega * r.powi(d as i32 - 1);
    let c3 = omega * r.powi(d as i32 + 1);
    let mut out = vec![
        residual_of("cdv1", vec![l[0]], vec![c1 * r1], c1 * r1_abs),
        residual_of("cdv2", vec![l[1]], vec![c1 * r2], c1 * r2_abs),
    ];
    out.push(residual_of("cdv3", l[2..2 + d].to_vec(), r3.iter().map(|x| c3 * x).collect(), c3 * r3_abs));
    Ok(out)
}

/// Both sides of the Carleman change of variables for
/// `F = exp(−|v'−a|² − |v'_*−b|²)` at fixed `v`.
///
/// `∫∫ F dσ dv_* = 2^{d−1} ∫ |v'−v|^{−1} ∫_{w⊥v'−v} F r^{2−d} dw dv'`,
/// with `v'_* = v + w`, `v_* = v' + w`, `r = |v − v_*|`.
pub fn carleman_identity_residual(v: &[f64], a: &[f64], b: &[f64], o: &CdvOptions) -> Result<IdentityResidual> {
    let d = v.len();
    if !(2..=3).contains(&d) {
        return Err(Error::Dimension(d));
    }
    let big_f = |vp: &[f64], vps: &[f64]| (-dot(&sub(vp, a), &sub(vp, a)) - dot(&sub(vps, b), &sub(vps, b))).exp();
    let reach = norm(v).max(norm(a)).max(norm(b)) * 2.0 + 12.0;
    // Left: v_* in polar coordinates about v, σ on the sphere.
    let sph = sphere_rule(d, o.order);
    let outer = space_rule(d, v, reach, o.panels, o.order);
    let lhs: f64 = outer
        .par_iter()
        .map(|(vs, wv)| {
            let rr = norm(&sub(v, vs));
            let mid: Vec<f64> = v.iter().zip(vs).map(|(x, y)| 0.5 * (x + y)).collect();
            let mut acc = 0.0;
            for (s, ws) in &sph {
                let vp = axpy(&mid, 0.5 * rr, s);
                let vps = axpy(&mid, -0.5 * rr, s);
                acc += ws * big_f(&vp, &vps);
            }
            acc * wv
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    // Right: v' in polar coordinates about v, w on the hyperplane.
    let plane = plane_rule(d - 1, reach, o.panels, o.order);
    let rhs: f64 = outer
        .par_iter()
        .map(|(vp, wv)| {
            let u = sub(vp, v);
            let un = norm(&u);
            let mut acc = 0.0;
            for (w, ww) in &plane {
                let wv3 = embed(&u, w);
                let vps: Vec<f64> = v.iter().zip(&wv3).map(|(x, y)| x + y).collect();
                let r = (un * un + dot(&wv3, &wv3)).sqrt();
                acc += ww * big_f(vp, &vps) * r.powi(2 - d as i32);
            }
            acc * wv / un
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * 2f64.powi(d as i32 - 1);
    Ok(IdentityResidual { name: "carleman".into(), lhs: vec![lhs], rhs: vec![rhs], residual: rel(lhs, rhs) })
}

/// Hydrodynamic bounds `M₁ ≤ mass ≤ M₀`, energy ≤ `E₀`, entropy ≤ `H₀`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct HydroBounds {
    pub mass_min: f64,
    pub mass_max: f64,
    pub energy_max: f64,
    pub entropy_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Hydro {
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
}

/// Mass, energy and entropy of a grid function by the trapezoid rule.
pub fn hydrodynamic(f: &GridFunction) -> Hydro {
    let mut e = f.clone();
    let mut h = f.clone();
    e.profile = None;
    h.profile = None;
    for i in 0..f.len() {
        let v = f.node(i);
        let x = f.values[i];
        e.values[i] = x * dot(&v, &v);
        h.values[i] = if x > 0.0 { x * x.ln() } else { 0.0 };
    }
    Hydro { mass: f.integral(), energy: e.integral(), entropy: h.integral() }
}

pub fn check_bounds(f: &GridFunction, b: &HydroBounds) -> Result<Hydro> {
    if f.values.iter().any(|x| *x < 0.0) {
        return Err(Error::Precondition("f must be nonnegative".into()));
    }
    let h = hydrodynamic(f);
    if h.mass < b.mass_min {
        return Err(Error::Precondition(format!("mass {} is below the lower bound M1 = {}", h.mass, b.mass_min)));
    }
    if h.mass > b.mass_max {
        return Err(Error::Precondition(format!("mass {} exceeds the upper bound M0 = {}", h.mass, b.mass_max)));
    }
    if h.energy > b.energy_max {
        return Err(Error::Precondition(format!("energy {} exceeds the bound E0 = {}", h.energy, b.energy_max)));
    }
    if h.entropy > b.entropy_max {
        return Err(Error::Precondition(format!("entropy {} exceeds the bound H0 = {}", h.entropy, b.entropy_max)));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LiftedSet {
    pub r: f64,
    pub level: f64,
    pub measure: f64,
}

/// Dyadic search for `(r, ℓ)` maximizing `ℓ·|{f>ℓ}∩B_r|/r`.
///
/// Radii are `2^k`, `k ∈ [−3, 4]`; levels are `sup f·2^{−j}`, `j ∈ [1, 12]`.
/// Measures count grid nodes with trapezoid weights.
pub fn lifted_level_set(f: &GridFunction, bounds: &HydroBounds) -> Result<LiftedSet> {
    check_bounds(f, bounds)?;
    let sup = f.sup_norm();
    let cell = f.cell_volume();
    let nodes: Vec<(f64, f64, f64)> = (0..f.len())
        .map(|i| {
            let v = f.node(i);
            let idx = f.multi_index(i);
            let w: f64 = idx.iter().zip(&f.dims).map(|(&k, &n)| if k == 0 || k + 1 == n { 0.5 } else { 1.0 }).product();
            (norm(&v), f.values[i], w * cell)
        })
        .collect();
    let mut best = LiftedSet { r: 0.0, level: 0.0, measure: 0.0 };
    let mut score = 0.0;
    for k in -3..=4 {
        let r = 2f64.powi(k);
        for j in 1..=12 {
            let level = sup * 2f64.powi(-j);
            let m: f64 = nodes.iter().filter(|(n, x, _)| *n <= r && *x > level).map(|(_, _, w)| w).sum();
            let sc = level * m / r;
            if sc > score {
                score = sc;
                best = LiftedSet { r, level, measure: m };
            }
        }
    }
    if !(best.measure > 0.0) {
        return Err(Error::Precondition("f has no lifted level set".into()));
    }
    Ok(best)
}

/// Set of directions `A(v)` on a quasi-uniform sphere grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConeSet {
    pub center: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub marked: Vec<bool>,
    /// Estimated `(d−1)`-measure of `A`.
    pub mu: f64,
    pub threshold: f64,
    pub lifted: LiftedSet,
}

/// Membership oracle: the hyperplane through `v` normal to `σ` meets
/// `{f > ℓ} ∩ B_r` in `(d−1)`-measure at least `threshold`.
#[derive(Debug, Clone)]
pub struct ConeOracle {
    pub f: Arc<GridFunction>,
    pub lifted: LiftedSet,
    pub threshold: f64,
    /// In-plane grid resolution per axis.
    pub resolution: usize,
}

impl ConeOracle {
    pub fn section_measure(&self, v: &[f64], sigma: &[f64]) -> f64 {
        let d = v.len();
        let sn = norm(sigma);
        let s: Vec<f64> = sigma.iter().map(|x| x / sn).collect();
        let off = dot(v, &s);
        let r = self.lifted.r;
        if off.abs() >= r {
            return 0.0;
        }
        let rad = (r * r - off * off).sqrt();
        // Plane point nearest the origin.
        let q: Vec<f64> = s.iter().map(|x| off * x).collect();
        let basis = hyperplane_basis(&s);
        let n = self.resolution;
        let h = 2.0 * rad / n as f64;
        let mut count = 0usize;
        if d == 2 {
            for i in 0..n {
                let t = -rad + (i as f64 + 0.5) * h;
                let p = axpy(&q, t, &basis[0]);
                if self.f.eval(&p) > self.lifted.level {
                    count += 1;
                }
            }
            count as f64 * h
        } else {
            for i in 0..n {
                for j in 0..n {
                    let a = -rad + (i as f64 + 0.5) * h;
                    let b = -rad + (j as f64 + 0.5) * h;
                    if a * a + b * b > rad * rad {
                        continue;
                    }
                    let p: Vec<f64> = (0..3).map(|k| q[k] + a * basis[0][k] + b * basis[1][k]).collect();
                    if self.f.eval(&p) > self.lifted.level {
                        count += 1;
                    }
                }
            }
            count as f64 * h * h
        }
    }

    pub fn contains(&self, v: &[f64], sigma: &[f64]) -> bool {
        self.section_measure(v, sigma) >= self.threshold
    }
}

/// Marks the direction grid and estimates `μ(v)`.
pub fn nondegeneracy_cone(oracle: &ConeOracle, v: &[f64], directions: usize) -> Result<ConeSet> {
    let d = v.len();
    let dirs = crate::quad::direction_sample(d, directions);
    let mut marked: Vec<bool> = dirs.par_iter().map(|s| oracle.contains(v, s)).collect();
    // Symmetrize: σ and −σ share their hyperplane.
    for i in 0..dirs.len() {
        let neg: Vec<f64> = dirs[i].iter().map(|x| -x).collect();
        if let Some(j) = dirs.iter().position(|s| s == &neg) {
            let m = marked[i] || marked[j];
            marked[i] = m;
            marked[j] = m;
        }
    }
    let frac = marked.iter().filter(|m| **m).count() as f64 / dirs.len() as f64;
    if frac == 0.0 {
        return Err(Error::Precondition(format!("empty cone of directions at v = {v:?}")));
    }
    Ok(ConeSet {
        center: v.to_vec(),
        directions: dirs,
        marked,
        mu: frac * sphere_area(d),
        threshold: oracle.threshold,
        lifted: oracle.lifted,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConeProperties {
    pub symmetric: bool,
    /// `min` over sampled big circles of the measure of `A ∩ circle`, times `(1+|v|)`.
    pub big_circle_constant: f64,
    /// `max |σ·v̂|` over marked directions, times `(1+|v|)`.
    pub strip_constant: f64,
}

/// Audits the three properties of a cone of directions.
pub fn cone_properties(oracle: &ConeOracle, cone: &ConeSet, circles: usize, points: usize, seed: u64) -> ConeProperties {
    let v = &cone.center;
    let d = v.len();
    let symmetric = cone.directions.iter().zip(&cone.marked).all(|(s, m)| {
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        cone.directions.iter().position(|t| t == &neg).is_none_or(|j| cone.marked[j] == *m)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_circle = f64::INFINITY;
    for _ in 0..circles.max(1) {
        // Orthonormal pair spanning a random plane.
        let (a, b) = if d == 2 {
            (vec![1.0, 0.0], vec![0.0, 1.0])
        } else {
            let g: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() - 0.5).collect();
            let basis = hyperplane_basis(&g);
            (basis[0].clone(), basis[1].clone())
        };
        let hits = (0..points)
            .filter(|&j| {
                let t = 2.0 * PI * (j as f64 + 0.5) / points as f64;
                let s: Vec<f64> = (0..d).map(|i| t.cos() * a[i] + t.sin() * b[i]).collect();
                oracle.contains(v, &s)
            })
            .count();
        min_circle = min_circle.min(hits as f64 * 2.0 * PI / points as f64);
    }
    let vn = norm(v);
    let strip = if vn == 0.0 {
        0.0
    } else {
        cone.directions
            .iter()
            .zip(&cone.marked)
            .filter(|(_, m)| **m)
            .map(|(s, _)| dot(s, v).abs() / vn)
            .fold(0.0, f64::max)
    };
    ConeProperties { symmetric, big_circle_constant: min_circle * (1.0 + vn), strip_constant: strip * (1.0 + vn) }
}

/// Back-solved `c` in `|cone(v) ∩ ℒ ∩ B_{Cρ}(v)| ≥ cρ` over random lines at distance `ρ`.
pub fn line_cone_audit(oracle: &ConeOracle, v: &[f64], rho: f64, big_c: f64, lines: usize, seed: u64) -> f64 {
    let d = v.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 4000;
    let mut worst = f64::INFINITY;
    for _ in 0..lines {
        let g: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
        let dir: Vec<f64> = g.iter().map(|x| x / norm(&g)).collect();
        let normal = hyperplane_basis(&dir)[if d == 3 && rng.gen::<bool>() { 1 } else { 0 }].clone();
        let foot = axpy(v, rho, &normal);
        let half = (big_c * big_c * rho * rho - rho * rho).max(0.0).sqrt();
        let h = 2.0 * half / n as f64;
        let mut len = 0.0;
        for j in 0..n {
            let t = -half + (j as f64 + 0.5) * h;
            let p = axpy(&foot, t, &dir);
            if oracle.contains(v, &sub(&p, v)) {
                len += h;
            }
        }
        worst = worst.min(len / rho);
    }
    worst
}

/// Back-solved `c` in `|cone(v₁) ∩ cone(v₂) ∩ B_{C|v₁−v₂|}(v₂)| ≥ c|v₁−v₂|^d` by Monte Carlo.
pub fn cone_cone_audit(oracle: &ConeOracle, v1: &[f64], v2: &[f64], big_c: f64, samples: usize, seed: u64) -> f64 {
    let d = v1.len();
    let dist = norm(&sub(v1, v2));
    let radius = big_c * dist;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut drawn = 0usize;
    while drawn < samples {
        let p: Vec<f64> = (0..d).map(|_| (2.0 * rng.gen::<f64>() - 1.0) * radius).collect();
        if dot(&p, &p) > radius * radius {
            continue;
        }
        drawn += 1;
        let x: Vec<f64> = v2.iter().zip(&p).map(|(a, b)| a + b).collect();
        let d1 = sub(&x, v1);
        let d2 = sub(&x, v2);
        if norm(&d1) > 0.0 && norm(&d2) > 0.0 && oracle.contains(v1, &d1) && oracle.contains(v2, &d2) {
            hits += 1;
        }
    }
    let vol = crate::quad::unit_ball_volume(d) * radius.powi(d as i32);
    vol * hits as f64 / samples as f64 / dist.powi(d as i32)
}

/// Kernel checks on `K_f` plus its moment bounds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoltzmannReport {
    pub ellipticity: EllipticityReport,
    /// `sup_v ∫f(z)|z − v|^{γ+2s} dz` over the probes.
    pub moment_bound: f64,
    /// Measured tail constant over the moment bound.
    pub moment_ratio: f64,
    /// `sup_v |C_b (|·|^γ ⋆ f)(v)|` over the probes.
    pub convolution_bound: f64,
}

pub fn boltzmann_assumption_report(
    f: Arc<GridFunction>,
    cs: &CrossSection,
    radius: f64,
    carleman: CarlemanOptions,
    opts: &CheckOptions,
) -> Result<BoltzmannReport> {
    let spec = boltzmann_spec(f.clone(), *cs, radius, carleman)?;
    let ellipticity = ellipticity_report(&spec, opts, None)?;
    let probes = ball_probes(cs.d, CheckOptions::probe_radius(&spec, 0.875), opts.probe_count);
    let mut moment_bound: f64 = 0.0;
    let mut convolution_bound: f64 = 0.0;
    for v in &probes {
        moment_bound = moment_bound.max(moment_convolution(&f, v, cs.gamma + 2.0 * cs.s, &opts.engine)?);
        convolution_bound = convolution_bound.max(cancellation_convolution(&f, v, cs, &opts.engine)?.1.abs());
    }
    let upper = ellipticity.upper.tail_i.value.max(ellipticity.upper.tail_ii.value);
    let moment_ratio = if moment_bound > 0.0 { upper / moment_bound } else { 0.0 };
    Ok(BoltzmannReport { ellipticity, moment_bound, moment_ratio, convolution_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Profile;
    use crate::kernel::antisymmetric_pv;
    use approx::assert_relative_eq;

    fn maxwellian(d: usize, mass: f64) -> Arc<GridFunction> {
        let lo = vec![-6.0; d];
        let hi = vec![6.0; d];
        Arc::new(GridFunction::sample(Profile::maxwellian(d, mass, 1.0), &lo, &hi, &vec![25; d]).unwrap())
    }

    #[test]
    fn cross_section_examples() {
        let cs = CrossSection::new(3, 0.0, 0.5).unwrap();
        let b0 = (0.5f64).sqrt().powf(-(2.0) - 1.0);
        assert_relative_eq!(cs.value(0.3, 0.0).unwrap(), b0, max_relative = 1e-14);
        assert_relative_eq!(cs.value(7.0, 0.0).unwrap(), b0, max_relative = 1e-14);
        let cs1 = CrossSection::new(3, 1.0, 0.4).unwrap();
        for c in [-0.7, 0.0, 0.2, 0.9] {
            assert_relative_eq!(cs1.value(2.0, c).unwrap(), 2.0 * cs1.value(1.0, c).unwrap(), max_relative = 1e-14);
        }
        assert!(cs.value(0.0, 0.1).is_err());
        assert!(CrossSection::new(3, 1.0, 0.6).is_err());
        let (g, f) = cs.branches(1.0, 0.0);
        assert!(g > f);
    }

    #[test]
    fn zero_density_gives_zero_kernel() {
        let z = Arc::new(GridFunction::sample(Profile::Constant { value: 0.0 }, &[-1.0, -1.0], &[1.0, 1.0], &[5, 5]).unwrap());
        let k = BoltzmannKernel::new(z, CrossSection::new(2, 0.0, 0.5).unwrap(), CarlemanOptions::default()).unwrap();
        assert_eq!(k.carleman(&[0.1, 0.2], &[0.5, -0.3]).unwrap(), 0.0);
    }

    #[test]
    fn kernel_is_linear_and_nonnegative() {
        let cs = CrossSection::new(2, 0.0, 0.5).unwrap();
        let o = CarlemanOptions::default();
        let k1 = BoltzmannKernel::new(maxwellian(2, 1.0), cs, o).unwrap();
        let k2 = BoltzmannKernel::new(maxwellian(2, 2.5), cs, o).unwrap();
        for (v, vp) in [([0.1, 0.2], [0.5, -0.3]), ([1.0, 0.0], [1.0, 0.01]), ([0.0, 0.0], [3.0, 2.0])] {
            let a = k1.carleman(&v, &vp).unwrap();
            assert!(a >= 0.0);
            assert_relative_eq!(k2.carleman(&v, &vp).unwrap(), 2.5 * a, max_relative = 1e-8);
        }
    }

    #[test]
    fn even_increment_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2usize, 3] {
            let cs = CrossSection::new(d, 0.0, 0.5).unwrap();
            let k = BoltzmannKernel::new(maxwellian(d, 1.0), cs, CarlemanOptions::default()).unwrap();
            for _ in 0..10 {
                let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let w: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let a = k.carleman(&v, &axpy(&v, 1.0, &w)).unwrap();
                let b = k.carleman(&v, &axpy(&v, -1.0, &w)).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn simplified_form_is_within_the_bracket() {
        for (d, gamma, s) in [(2usize, 0.0, 0.5), (3, -1.0, 0.3), (3, 0.5, 0.7)] {
            let cs = CrossSection::new(d, gamma, s).unwrap();
            let k = BoltzmannKernel::new(maxwellian(d, 1.0), cs, CarlemanOptions::default()).unwrap();
            let (lo, hi) = cs.comparability_bracket();
            let v = vec![0.3; d];
            for scale in [0.1, 0.7, 2.0] {
                let mut vp = v.clone();
                vp[0] += scale;
                vp[1] -= 0.5 * scale;
                let u = norm(&sub(&vp, &v));
                let ratio = k.carleman(&v, &vp).unwrap() * u.powf(d as f64 + 2.0 * s) / k.simplified(&v, &vp).unwrap();
                assert!(ratio >= lo * (1.0 - 1e-6) && ratio <= hi * (1.0 + 1e-6), "{d} {gamma} {s}: {ratio} not in [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn cancellation_constant_is_frame_independent_and_collapses_for_gamma_zero() {
        let cs = CrossSection::new(3, 0.0, 0.5).unwrap();
        let a = cancellation_constant(&cs, &[0.3, -0.8, 0.2], 1e-11).unwrap();
        let b = cancellation_constant(&cs, &[-0.5, 0.1, 0.9], 1e-11).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-8);
        let f = maxwellian(3, 1.7);
        let (cb, val) = cancellation_convolution(&f, &[0.2, 0.1, -0.4], &cs, &RadialEngine::default()).unwrap();
        assert_relative_eq!(val, cb * 1.7, max_relative = 1e-5);
    }

    #[test]
    fn pv_cancellation_matches_convolution_d2() {
        let cs = CrossSection::new(2, 0.0, 0.5).unwrap();
        let f = maxwellian(2, 1.0);
        let spec = boltzmann_spec(f.clone(), cs, f64::INFINITY, CarlemanOptions::default()).unwrap();
        let e = RadialEngine { rtol: 1e-5, ..Default::default() };
        for v in [[0.0, 0.0], [0.6, -0.3]] {
            let pv = antisymmetric_pv(&spec, &v, |_| 1.0, &e, 0.5).unwrap().value;
            let (_, c) = cancellation_convolution(&f, &v, &cs, &e).unwrap();
            assert_relative_eq!(pv, c, max_relative = 2e-2);
        }
    }

    #[test]
    fn maxwellian_is_an_equilibrium() {
        let cs = CrossSection::new(2, 0.0, 0.5).unwrap();
        let f = maxwellian(2, 1.0);
        let e = RadialEngine { rtol: 1e-6, ..Default::default() };
        let q = collision_bilinear(f.clone(), &f, &[0.3, 0.2], &cs, CarlemanOptions::default(), &e).unwrap();
        assert!(q.total.abs() < 1e-4 * q.q2.abs(), "{q:?}");
        let c = GridFunction::sample(Profile::Constant { value: 2.0 }, &[-1.0, -1.0], &[1.0, 1.0], &[3, 3]).unwrap();
        let q = collision_bilinear(f, &c, &[0.3, 0.2], &cs, CarlemanOptions::default(), &e).unwrap();
        assert_eq!(q.q1, 0.0);
    }

    #[test]
    fn change_of_variables_identities_d3() {
        let fam = [
            TestFunction::Gaussian { center: vec![0.0; 3], sigma: 0.8 },
            TestFunction::Gaussian { center: vec![0.4, -0.2, 0.3], sigma: 0.6 },
            TestFunction::Odd { sigma: 0.7, axis: 0 },
        ];
        for tf in &fam {
            for r in [0.5, 1.0] {
                for res in change_of_variables_residuals(tf, 3, r, &CdvOptions::default()).unwrap() {
                    assert!(res.residual < 1e-3, "{tf:?} r={r} {res:?}");
                }
            }
        }
    }

    #[test]
    fn separated_support_gives_zero() {
        let tf = TestFunction::Bump { center: vec![0.0; 3], radius: 0.4 };
        let res = change_of_variables_residuals(&tf, 3, 1.0, &CdvOptions::default()).unwrap();
        assert_eq!(res[1].lhs[0], 0.0);
        assert_eq!(res[1].rhs[0], 0.0);
    }

    #[test]
    fn carleman_identity_d2() {
        let r = carleman_identity_residual(&[0.2, -0.1], &[0.5, 0.3], &[-0.4, 0.2], &CdvOptions { panels: 8, order: 12 }).unwrap();
        assert!(r.residual < 1e-3, "{r:?}");
    }

    #[test]
    fn lifted_set_of_indicator() {
        let p = Profile::SmoothIndicator { center: vec![0.0, 0.0], radius: 1.05, width: 0.1, height: 2.0 };
        let f = GridFunction::sample(p, &[-2.0, -2.0], &[2.0, 2.0], &[161, 161]).unwrap();
        let b = HydroBounds { mass_min: 0.1, mass_max: 100.0, energy_max: 100.0, entropy_max: 100.0 };
        let l = lifted_level_set(&f, &b).unwrap();
        assert_eq!(l.r, 1.0);
        assert_eq!(l.level, 1.0);
        assert_relative_eq!(l.measure, PI, max_relative = 2e-2);
        let low = HydroBounds { mass_min: 50.0, ..b };
        let err = lifted_level_set(&f, &low).unwrap_err().to_string();
        assert!(err.contains("M1"), "{err}");
    }

    #[test]
    fn cone_of_centered_bump() {
        let p = Profile::Bump { center: vec![0.0, 0.0, 0.0], radius: 1.0, amplitude: 1.0 };
        let f = Arc::new(GridFunction::sample(p, &[-1.2; 3], &[1.2; 3], &[25, 25, 25]).unwrap());
        let b = HydroBounds { mass_min: 0.01, mass_max: 10.0, energy_max: 10.0, entropy_max: 10.0 };
        let lifted = lifted_level_set(&f, &b).unwrap();
        let oracle = ConeOracle { f: f.clone(), lifted, threshold: 0.05, resolution: 40 };
        let c0 = nondegeneracy_cone(&oracle, &[0.0, 0.0, 0.0], 60).unwrap();
        assert!(c0.marked.iter().all(|m| *m));
        let far = [5.0, 0.0, 0.0];
        let c5 = nondegeneracy_cone(&oracle, &far, 400).unwrap();
        let props = cone_properties(&oracle, &c5, 8, 720, 1);
        assert!(props.symmetric);
        assert!(props.strip_constant <= 6.0 * lifted.r + 1e-12);
        assert!(props.big_circle_constant > 0.0);
    }
}
