//! Spectral solver for `f_t + v·∂_x f + (−Δ_v)^s f = h` in one space and one
//! velocity dimension on a periodic phase-space box.
//!
//! Fourier convention: `f̂(φ, ξ) = ∫∫ e^{−i(xφ + vξ)} f dx dv`. With it the
//! fundamental solution is `Ĵ(t; φ, ξ) = exp(−∫₀ᵗ |ξ + σφ|^{2s} dσ)` and the
//! solution from `f0` is `f̂(t; φ, ξ) = f̂0(φ, ξ + tφ) Ĵ(t; φ, ξ)`, realized as a
//! spectral shear `x ↦ x − tv` followed by a Fourier multiplier.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Profile};
use crate::quad::{adaptive_gl, gauss_legendre};

/// Periodic `(x, v)` box `[−Lx/2, Lx/2) × [−Lv/2, Lv/2)` with `nx × nv` nodes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PropagatorGrid {
    pub s: f64,
    pub lx: f64,
    pub lv: f64,
    pub nx: usize,
    pub nv: usize,
    /// Largest admissible mass of `J` outside the box.
    #[serde(default = "default_wrap_tol")]
    pub wrap_tol: f64,
}

fn default_wrap_tol() -> f64 {
    1e-6
}

impl PropagatorGrid {
    pub fn new(s: f64, lx: f64, lv: f64, nx: usize, nv: usize) -> Result<Self> {
        let g = Self { s, lx, lv, nx, nv, wrap_tol: default_wrap_tol() };
        g.validate()?;
        Ok(g)
    }

    pub fn with_wrap_tol(mut self, tol: f64) -> Self {
        self.wrap_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0,1), got {}", self.s)));
        }
        if !(self.lx > 0.0 && self.lv > 0.0) {
            return Err(Error::InvalidParameter("box lengths must be positive".into()));
        }
        if self.nx < 4 || self.nv < 4 || self.nx % 2 == 1 || self.nv % 2 == 1 {
            return Err(Error::InvalidParameter(format!("resolution must be even and at least 4, got {}x{}", self.nx, self.nv)));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hv(&self) -> f64 {
        self.lv / self.nv as f64
    }

    pub fn cell(&self) -> f64 {
        self.hx() * self.hv()
    }

    pub fn len(&self) -> usize {
        self.nx * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.lx + i as f64 * self.hx()
    }

    pub fn v(&self, j: usize) -> f64 {
        -0.5 * self.lv + j as f64 * self.hv()
    }

    fn signed(m: usize, n: usize) -> f64 {
        if m < n / 2 {
            m as f64
        } else {
            m as f64 - n as f64
        }
    }

    /// Spatial frequency of DFT index `m`.
    pub fn phi(&self, m: usize) -> f64 {
        2.0 * PI * Self::signed(m, self.nx) / self.lx
    }

    /// Velocity frequency of DFT index `n`.
    pub fn xi(&self, n: usize) -> f64 {
        2.0 * PI * Self::signed(n, self.nv) / self.lv
    }

    /// Box scaled by the intrinsic scaling at time `t`: `x ∼ t^{1+1/2s}`, `v ∼ t^{1/2s}`.
    pub fn scaled(&self, t: f64) -> Self {
        let b = 1.0 / (2.0 * self.s);
        Self { lx: self.lx * t.powf(1.0 + b), lv: self.lv * t.powf(b), ..*self }
    }

    pub fn sample(&self, p: &Profile) -> Vec<f64> {
        (0..self.len()).map(|k| p.eval(&[self.x(k / self.nv), self.v(k % self.nv)])).collect()
    }

    pub fn to_grid(&self, values: Vec<f64>) -> Result<GridFunction> {
        let mut g = GridFunction::from_values(vec![-0.5 * self.lx, -0.5 * self.lv], vec![self.hx(), self.hv()], vec![self.nx, self.nv], values)?;
        g.axes = vec!["x".into(), "v".into()];
        Ok(g)
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        let ok = f.dims == [self.nx, self.nv]
            && (f.lo[0] + 0.5 * self.lx).abs() < 1e-12 * self.lx
            && (f.lo[1] + 0.5 * self.lv).abs() < 1e-12 * self.lv
            && (f.spacing[0] - self.hx()).abs() < 1e-12 * self.hx()
            && (f.spacing[1] - self.hv()).abs() < 1e-12 * self.hv();
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("grid function {:?}/{:?} does not live on the {}x{} propagator grid", f.lo, f.dims, self.nx, self.nv)))
        }
    }
}

/// `∫₀ᵗ |ξ + σφ|^{2s} dσ` by adaptive Gauss quadrature split at the minimizing `σ`.
pub fn exponent_quadrature(t: f64, phi: &[f64], xi: &[f64], s: f64) -> f64 {
    let pp: f64 = phi.iter().map(|p| p * p).sum();
    let f = |sig: f64| {
        let n2: f64 = xi.iter().zip(phi).map(|(x, p)| (x + sig * p).powi(2)).sum();
        let v = n2.powf(s);
        (v, v)
    };
    let star = if pp > 0.0 { (-xi.iter().zip(phi).map(|(x, p)| x * p).sum::<f64>() / pp).clamp(0.0, t) } else { 0.0 };
    // σ = σ* ± Δ·y^m with m = 1/s turns |σ − σ*|^{2s} into Δ^{2s}y², so each
    // piece is smooth up to a y^{m+1} factor.
    let m = 1.0 / s;
    let mut total = 0.0;
    for (len, sign) in [(star, -1.0), (t - star, 1.0)] {
        if len > 0.0 {
            total += adaptive_gl(0.0, 1.0, 2, 1e-13, 0.0, 40, |y| {
                let (v, _) = f(star + sign * len * y.powf(m));
                let w = v * len * m * y.powf(m - 1.0);
                (w, w.abs())
            })
            .map(|r| r.0)
            .unwrap_or(f64::NAN);
        }
    }
    total
}

/// `Ĵ(t; φ, ξ)` in any dimension.
pub fn fundamental_solution_hat(t: f64, phi: &[f64], xi: &[f64], s: f64) -> f64 {
    (-exponent_quadrature(t, phi, xi, s)).exp()
}

/// Closed-form exponent in one dimension: `(G(ξ + tφ) − G(ξ))/φ`, `G(y) = y|y|^{2s}/(2s+1)`.
pub fn exponent_1d(t: f64, phi: f64, xi: f64, s: f64) -> f64 {
    let a = 2.0 * s + 1.0;
    let g = |y: f64| y * y.abs().powf(2.0 * s) / a;
    let e = xi.abs().max((xi + t * phi).abs());
    // Below this relative size of tφ the difference quotient cancels badly.
    if (t * phi).abs() <= 1e-6 * e {
        let mid = xi + 0.5 * t * phi;
        return t * mid.abs().powf(2.0 * s);
    }
    if phi == 0.0 {
        return t * xi.abs().powf(2.0 * s);
    }
    (g(xi + t * phi) - g(xi)) / phi
}

/// `P(|Y| > a)` for the symmetric law with characteristic function `exp(−c|k|^α)`.
pub fn stable_tail(c: f64, alpha: f64, a: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let kmax = (40.0 / c).powf(1.0 / alpha);
    let width = PI / a;
    let panels = ((kmax / width).ceil() as usize).max(8);
    let gl = gauss_legendre(16);
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = p as f64 * width;
        let mid = lo + 0.5 * width;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let k = mid + 0.5 * width * x;
            acc += 0.5 * width * w * (-c * k.powf(alpha)).exp() * (k * a).sin() / k;
        }
    }
    (1.0 - 2.0 / PI * acc).max(0.0)
}

/// Mass of `J(t)` outside the box, bounded by the two marginal tails.
pub fn wrap_leak(t: f64, g: &PropagatorGrid) -> f64 {
    let s = g.s;
    let cx = t.powf(2.0 * s + 1.0) / (2.0 * s + 1.0);
    stable_tail(cx, 2.0 * s, 0.5 * g.lx) + stable_tail(t, 2.0 * s, 0.5 * g.lv)
}

fn planner_pair(n: usize, inverse: bool) -> std::sync::Arc<dyn rustfft::Fft<f64>> {
    let mut p = FftPlanner::new();
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Unnormalized transform along the contiguous axis.
fn fft_rows(data: &mut [Complex64], cols: usize, inverse: bool) {
    let f = planner_pair(cols, inverse);
    data.par_chunks_mut(cols).for_each(|row| f.process(row));
}

/// Unnormalized 2-d transform of an `nx × nv` array (v fastest).
fn fft2(data: &mut Vec<Complex64>, nx: usize, nv: usize, inverse: bool) {
    fft_rows(data, nv, inverse);
    let mut t = transpose(data, nx, nv);
    fft_rows(&mut t, nx, inverse);
    *data = transpose(&t, nv, nx);
}

fn complexify(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// `h(x − t v, v)` by exact Fourier translation of each `x`-line.
pub fn shear(values: &[f64], g: &PropagatorGrid, t: f64) -> Vec<f64> {
    if t == 0.0 {
        return values.to_vec();
    }
    let (nx, nv) = (g.nx, g.nv);
    // Lines along x are rows of the transpose.
    let mut lines = transpose(&complexify(values), nx, nv);
    fft_rows(&mut lines, nx, false);
    lines.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let shift = t * g.v(j);
        for (m, c) in row.iter_mut().enumerate() {
            let ph = -g.phi(m) * shift;
            *c *= Complex64::new(ph.cos(), ph.sin());
        }
    });
    fft_rows(&mut lines, nx, true);
    let back = transpose(&lines, nv, nx);
    back.iter().map(|c| c.re / nx as f64).collect()
}

/// `∬ a(y, w) b(x − y, v − w) dy dw` on the periodic grid.
pub fn convolve(a: &[f64], b: &[f64], g: &PropagatorGrid) -> Vec<f64> {
    let (nx, nv) = (g.nx, g.nv);
    let mut fa = complexify(a);
    let mut fb = complexify(b);
    fft2(&mut fa, nx, nv, false);
    fft2(&mut fb, nx, nv, false);
    for k in 0..fa.len() {
        // Index shift by half the grid: the origin sits at (nx/2, nv/2).
        let sign = if (k / nv + k % nv) % 2 == 0 { 1.0 } else { -1.0 };
        fa[k] = fa[k] * fb[k] * sign;
    }
    fft2(&mut fa, nx, nv, true);
    let scale = g.cell() / (nx * nv) as f64;
    fa.iter().map(|c| c.re * scale).collect()
}

/// `h ∗_t j (x, v) = ∬ h(y, w) j(x − y − tw, v − w) dw dy`: shear, then convolve.
pub fn modified_convolve(h: &GridFunction, j: &GridFunction, t: f64, g: &PropagatorGrid) -> Result<GridFunction> {
    g.check(h)?;
    g.check(j)?;
    g.to_grid(convolve(&shear(&h.values, g, t), &j.values, g))
}

/// Fourier multiplier applied to a grid array.
fn multiply(values: &[f64], g: &PropagatorGrid, m: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
    let (nx, nv) = (g.nx, g.nv);
    let mut f = complexify(values);
    fft2(&mut f, nx, nv, false);
    f.par_iter_mut().enumerate().for_each(|(k, c)| *c *= m(g.phi(k / nv), g.xi(k % nv)));
    fft2(&mut f, nx, nv, true);
    let n = (nx * nv) as f64;
    f.iter().map(|c| c.re / n).collect()
}

/// Exact solution of the homogeneous equation at time `t` from `f0`.
pub fn propagate(f0: &[f64], g: &PropagatorGrid, t: f64) -> Vec<f64> {
    if t == 0.0 {
        return f0.to_vec();
    }
    let s = g.s;
    multiply(&shear(f0, g, t), g, |phi, xi| (-exponent_1d(t, phi, xi, s)).exp())
}

/// `(−Δ_v)^{α/2}` spectrally.
pub fn fractional_velocity_laplacian(values: &[f64], g: &PropagatorGrid, alpha: f64) -> Vec<f64> {
    multiply(values, g, |_, xi| xi.abs().powf(alpha))
}

/// `v ∂_x f` spectrally.
pub fn transport(values: &[f64], g: &PropagatorGrid) -> Vec<f64> {
    let (nx, nv) = (g.nx, g.nv);
    let mut f = complexify(values);
    fft2(&mut f, nx, nv, false);
    f.par_iter_mut().enumerate().for_each(|(k, c)| {
        let m = k / nv;
        // The Nyquist mode has no odd counterpart.
        let phi = if 2 * m == nx { 0.0 } else { g.phi(m) };
        *c *= Complex64::new(0.0, phi);
    });
    fft2(&mut f, nx, nv, true);
    let n = (nx * nv) as f64;
    f.iter().enumerate().map(|(k, c)| g.v(k % nv) * c.re / n).collect()
}

/// `(Σ |f|^p h_x h_v)^{1/p}`; `p = ∞` gives the max.
pub fn lp_norm(values: &[f64], g: &PropagatorGrid, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    (values.iter().map(|x| x.abs().powf(p)).sum::<f64>() * g.cell()).powf(1.0 / p)
}

/// `J(t)` on the grid with diagnostics.
#[derive(Debug, Clone)]
pub struct Fundamental {
    pub t: f64,
    pub values: Vec<f64>,
    pub mass: f64,
    pub min: f64,
    /// Mass of the continuum `J(t)` outside the box (marginal tail bound).
    pub leak: f64,
    /// Largest `|Ĵ|` on the frequency boundary; bounds aliasing.
    pub nyquist: f64,
}

fn fundamental_from(t: f64, g: &PropagatorGrid, hat: impl Fn(f64, f64) -> f64 + Sync) -> Result<Fundamental> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    g.validate()?;
    let leak = wrap_leak(t, g);
    if leak > g.wrap_tol {
        return Err(Error::CheckFailed(format!(
            "wrap-around mass {leak:.3e} of J({t}) exceeds the tolerance {:.1e}; enlarge the box",
            g.wrap_tol
        )));
    }
    let (nx, nv) = (g.nx, g.nv);
    let mut f: Vec<Complex64> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let (m, n) = (k / nv, k % nv);
            let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::new(sign * hat(g.phi(m), g.xi(n)), 0.0)
        })
        .collect();
    let nyquist = (0..nv).map(|n| hat(g.phi(nx / 2), g.xi(n))).chain((0..nx).map(|m| hat(g.phi(m), g.xi(nv / 2)))).fold(0.0, f64::max);
    fft2(&mut f, nx, nv, true);
    let values: Vec<f64> = f.iter().map(|c| c.re / (g.lx * g.lv)).collect();
    let mass = values.iter().sum::<f64>() * g.cell();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Fundamental { t, values, mass, min, leak, nyquist })
}

/// `J(t)` through the self-similar scaling `Ĵ(t; φ, ξ) = Ĵ(1; t^{1+1/2s}φ, t^{1/2s}ξ)`.
///
/// Mass one is a post-check of the caller; nothing is renormalized.
pub fn fundamental_solution_grid(t: f64, g: &PropagatorGrid) -> Result<Fundamental> {
    let s = g.s;
    let b = 1.0 / (2.0 * s);
    let (ax, av) = (t.powf(1.0 + b), t.powf(b));
    fundamental_from(t, g, |phi, xi| (-exponent_1d(1.0, ax * phi, av * xi, s)).exp())
}

/// `J(t)` from the exponent at time `t` directly, without the scaling.
pub fn fundamental_solution_direct(t: f64, g: &PropagatorGrid) -> Result<Fundamental> {
    let s = g.s;
    fundamental_from(t, g, |phi, xi| (-exponent_1d(t, phi, xi, s)).exp())
}

/// `‖J(t)‖₂` and `‖(−Δ_v)^{s/2}J(t)‖₂` by Plancherel in polar frequency coordinates.
///
/// Along each ray the exponent is `r^{2s} c(θ)`, so the radial integral is a
/// Gamma function; the angular integral is adaptive.
pub fn plancherel_norms(t: f64, s: f64) -> Result<(f64, f64)> {
    let gam0 = statrs::function::gamma::gamma(1.0 / s);
    let gam1 = statrs::function::gamma::gamma(1.0 / s + 1.0);
    let integrand = |th: f64, deriv: bool| {
        let (sn, cs) = th.sin_cos();
        let a = 2.0 * exponent_1d(t, cs, sn, s);
        let v = if deriv {
            sn.abs().powf(2.0 * s) * gam1 / (2.0 * s * a.powf(1.0 / s + 1.0))
        } else {
            gam0 / (2.0 * s * a.powf(1.0 / s))
        };
        (v, v)
    };
    let j = adaptive_gl(0.0, 2.0 * PI, 16, 1e-12, 0.0, 30, |th| integrand(th, false))?.0;
    let dj = adaptive_gl(0.0, 2.0 * PI, 16, 1e-12, 0.0, 30, |th| integrand(th, true))?.0;
    let c = 1.0 / (4.0 * PI * PI);
    Ok(((c * j).sqrt(), (c * dj).sqrt()))
}

/// `p_⋆ = (2d(1+s) + 2s)/(2d(1+s) + s)`.
pub fn p_star(d: usize, s: f64) -> f64 {
    let a = 2.0 * d as f64 * (1.0 + s);
    (a + 2.0 * s) / (a + s)
}

/// Exponent `e` with `‖J(t)‖_p = t^{−e}‖J(1)‖_p`.
pub fn lp_scaling_exponent(d: usize, s: f64, p: f64) -> f64 {
    d as f64 * (1.0 + 1.0 / s) * (1.0 - 1.0 / p)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScalingRow {
    pub t: f64,
    pub p: f64,
    /// `‖J(t)‖_p t^{e}` on the self-similar grid.
    pub normalized: f64,
    /// `‖(−Δ_v)^{s/2}J(t)‖_p t^{e + 1/2}` on the self-similar grid.
    pub normalized_derivative: f64,
    /// `‖J(t)‖_p t^{e}` on the fixed base grid (periodization drift, not gated).
    pub fixed_grid: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScalingAudit {
    pub s: f64,
    pub p_star: f64,
    pub rows: Vec<ScalingRow>,
    /// Max relative spread in `t`, per `p` (same order as the input).
    pub spread: Vec<f64>,
    pub spread_derivative: Vec<f64>,
    pub spread_fixed_grid: Vec<f64>,
    /// Spread of the Plancherel `L²` norms after normalization.
    pub plancherel_spread: f64,
    pub plancherel_derivative_spread: f64,
    /// Largest relative gap between grid and Plancherel `L²` norms.
    pub plancherel_gap: f64,
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi == 0.0 {
        0.0
    } else {
        (hi - lo) / hi.abs()
    }
}

/// Norms of `J(t)` across `ts` for each `p`.
///
/// On the self-similar grid the exponent is evaluated at time `t` directly,
/// so the check exercises the identity `Ĵ(t; φ, ξ) = Ĵ(1; t^{1+1/2s}φ, t^{1/2s}ξ)`
/// rather than assuming it.
pub fn scaling_audit(base: &PropagatorGrid, ts: &[f64], ps: &[f64]) -> Result<ScalingAudit> {
    let s = base.s;
    let mut rows = Vec::new();
    let mut pl = Vec::new();
    let mut pld = Vec::new();
    let mut gap: f64 = 0.0;
    for &t in ts {
        let g = base.scaled(t);
        let j = fundamental_solution_direct(t, &g)?;
        let dj = fractional_velocity_laplacian(&j.values, &g, s);
        let fixed = fundamental_solution_direct(t, base)?;
        for &p in ps {
            let e = lp_scaling_exponent(1, s, p);
            rows.push(ScalingRow {
                t,
                p,
                normalized: lp_norm(&j.values, &g, p) * t.powf(e),
                normalized_derivative: lp_norm(&dj, &g, p) * t.powf(e + 0.5),
                fixed_grid: lp_norm(&fixed.values, base, p) * t.powf(e),
            });
        }
        let (n2, dn2) = plancherel_norms(t, s)?;
        gap = gap.max((lp_norm(&j.values, &g, 2.0) - n2).abs() / n2);
        let e2 = lp_scaling_exponent(1, s, 2.0);
        pl.push(n2 * t.powf(e2));
        pld.push(dn2 * t.powf(e2 + 0.5));
    }
    let col = |p: f64, f: fn(&ScalingRow) -> f64| -> Vec<f64> { rows.iter().filter(|r| r.p == p).map(f).collect() };
    Ok(ScalingAudit {
        s,
        p_star: p_star(1, s),
        spread: ps.iter().map(|&p| spread(&col(p, |r| r.normalized))).collect(),
        spread_derivative: ps.iter().map(|&p| spread(&col(p, |r| r.normalized_derivative))).collect(),
        spread_fixed_grid: ps.iter().map(|&p| spread(&col(p, |r| r.fixed_grid))).collect(),
        rows,
        plancherel_spread: spread(&pl),
        plancherel_derivative_spread: spread(&pld),
        plancherel_gap: gap,
    })
}

/// Solution frames at increasing times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub frames: Vec<GridFunction>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    times: &'a [f64],
    files: Vec<String>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, frames: Vec<GridFunction>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::InvalidParameter("one frame per time is required".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("trajectory times must increase strictly".into()));
        }
        Ok(Self { times, frames })
    }

    /// One grid file per frame plus `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, f) in self.frames.iter().enumerate() {
            let name = format!("frame_{k:04}.grid");
            f.write(&dir.join(&name))?;
            files.push(name);
        }
        let m = Manifest { times: &self.times, files };
        std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&m).map_err(|e| Error::Format(e.to_string()))?)?;
        Ok(())
    }
}

/// Piecewise-linear-in-time source; a single frame is constant in time.
#[derive(Debug, Clone)]
pub struct Source {
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

impl Source {
    pub fn steady(h: Vec<f64>) -> Self {
        Self { times: vec![0.0], frames: vec![h] }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        if self.frames.len() == 1 || t <= self.times[0] {
            return self.frames[0].clone();
        }
        let k = self.times.iter().rposition(|&x| x <= t).unwrap_or(0);
        if k + 1 >= self.times.len() {
            return self.frames[k].clone();
        }
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.frames[k].iter().zip(&self.frames[k + 1]).map(|(a, b)| (1.0 - w) * a + w * b).collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DuhamelOptions {
    /// Relative `L²` change at which step halving stops.
    pub rtol: f64,
    pub max_halvings: usize,
    /// Relative PDE residual above which a warning is raised.
    pub residual_tol: f64,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        Self { rtol: 1e-4, max_halvings: 10, residual_tol: 1e-2 }
    }
}

#[derive(Debug, Clone)]
pub struct DuhamelResult {
    pub trajectory: Trajectory,
    /// `(t, relative residual)` at interior times.
    pub residuals: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// `f(t) = f0 ∗_t J(t) + ∫₀ᵗ h(τ) ∗_{t−τ} J(t−τ) dτ`.
///
/// The time integral is a composite trapezoid in `u = t − τ`, halved until the
/// relative `L²` change drops below `rtol`.
pub fn duhamel_at(f0: &[f64], source: Option<&Source>, g: &PropagatorGrid, t: f64, o: &DuhamelOptions) -> Result<Vec<f64>> {
    let mut f = propagate(f0, g, t);
    let Some(src) = source else { return Ok(f) };
    if t == 0.0 {
        return Ok(f);
    }
    let term = |u: f64| propagate(&src.at(t - u), g, u);
    let mut n = 4usize;
    let nodes: Vec<Vec<f64>> = (0..=n).map(|k| term(t * k as f64 / n as f64)).collect();
    let trap = |nodes: &[Vec<f64>], n: usize| -> Vec<f64> {
        let h = t / n as f64;
        let mut acc = vec![0.0; g.len()];
        for (k, v) in nodes.iter().enumerate() {
            let w = if k == 0 || k == n { 0.5 * h } else { h };
            for (a, b) in acc.iter_mut().zip(v) {
                *a += w * b;
            }
        }
        acc
    };
    let mut nodes = nodes;
    let mut prev = trap(&nodes, n);
    let mut converged = false;
    for _ in 0..o.max_halvings {
        let mids: Vec<Vec<f64>> = (0..n).into_par_iter().map(|k| term(t * (2 * k + 1) as f64 / (2 * n) as f64)).collect();
        let mut merged = Vec::with_capacity(2 * n + 1);
        for (k, v) in nodes.into_iter().enumerate() {
            merged.push(v);
            if k < n {
                merged.push(mids[k].clone());
            }
        }
        nodes = merged;
        n *= 2;
        let cur = trap(&nodes, n);
        let diff: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
        let rel = lp_norm(&diff, g, 2.0) / lp_norm(&cur, g, 2.0).max(f64::MIN_POSITIVE);
        prev = cur;
        if rel < o.rtol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Quadrature(format!("Duhamel time integral did not settle to {} at t = {t}", o.rtol)));
    }
    for (a, b) in f.iter_mut().zip(&prev) {
        *a += b;
    }
    Ok(f)
}

pub fn duhamel_solve(f0: &GridFunction, source: Option<&Source>, times: &[f64], g: &PropagatorGrid, o: &DuhamelOptions) -> Result<DuhamelResult> {
    g.check(f0)?;
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("solution times must be positive".into()));
    }
    let mut frames = Vec::new();
    for &t in times {
        frames.push(g.to_grid(duhamel_at(&f0.values, source, g, t, o)?)?);
    }
    let mut residuals = Vec::new();
    let mut warnings = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let dt = 1e-3 * t;
        let fp = duhamel_at(&f0.values, source, g, t + dt, o)?;
        let fm = duhamel_at(&f0.values, source, g, t - dt, o)?;
        let f = &frames[k].values;
        let ft: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
        let tr = transport(f, g);
        let lap = fractional_velocity_laplacian(f, g, 2.0 * g.s);
        let h = source.map(|s| s.at(t)).unwrap_or_else(|| vec![0.0; g.len()]);
        let r: Vec<f64> = (0..g.len()).map(|i| ft[i] + tr[i] + lap[i] - h[i]).collect();
        let scale = lp_norm(&ft, g, 2.0) + lp_norm(&tr, g, 2.0) + lp_norm(&lap, g, 2.0) + lp_norm(&h, g, 2.0);
        let rel = if scale > 0.0 { lp_norm(&r, g, 2.0) / scale } else { 0.0 };
        if rel > o.residual_tol {
            warnings.push(format!("PDE residual {rel:.3e} at t = {t} exceeds {:.1e}", o.residual_tol));
        }
        residuals.push((t, rel));
    }
    Ok(DuhamelResult { trajectory: Trajectory::new(times.to_vec(), frames)?, residuals, warnings })
}

/// `‖f‖_{L^q([0,T]×box)} / (‖f0‖₂ + ‖h1‖₂ + ‖h2‖₂)` for the source `h1 + (−Δ_v)^{s/2}h2`.
pub fn gain_of_integrability_check(
    f0: &[f64],
    h1: &[f64],
    h2: &[f64],
    q: f64,
    horizon: f64,
    g: &PropagatorGrid,
    time_nodes: usize,
    o: &DuhamelOptions,
) -> Result<f64> {
    let ps = p_star(1, g.s);
    if !(1.0 / q > 1.0 / ps - 0.5) {
        return Err(Error::InvalidParameter(format!(
            "q = {q} is outside the admissible range 1/q > 1/p_star - 1/2 with p_star = {ps}"
        )));
    }
    let denom = lp_norm(f0, g, 2.0) + lp_norm(h1, g, 2.0) + lp_norm(h2, g, 2.0);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let frac = fractional_velocity_laplacian(h2, g, g.s);
    let h: Vec<f64> = h1.iter().zip(&frac).map(|(a, b)| a + b).collect();
    let src = Source::steady(h);
    let has_source = src.frames[0].iter().any(|x| *x != 0.0);
    let gl = gauss_legendre(time_nodes);
    let mut acc = 0.0;
    for (x, w) in gl.nodes.iter().zip(&gl.weights) {
        let t = 0.5 * horizon * (1.0 + x);
        let f = duhamel_at(f0, has_source.then_some(&src), g, t, o)?;
        acc += 0.5 * horizon * w * lp_norm(&f, g, q).powf(q);
    }
    Ok(acc.powf(1.0 / q) / denom)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct HarnackOptions {
    pub r0: f64,
    pub epsilon: f64,
    /// Gauss nodes in time on the lower cylinder; uniform nodes on the upper one.
    pub time_nodes: usize,
}

impl Default for HarnackOptions {
    fn default() -> Self {
        Self { r0: 0.5, epsilon: 0.5, time_nodes: 6 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct HarnackResult {
    /// `(∫_{Q^-} f^ε)^{1/ε} / inf_{Q^+} f`.
    pub ratio: f64,
    /// Same with the average over `Q^-` in place of the integral.
    pub normalized_ratio: f64,
    pub lower_integral: f64,
    pub upper_infimum: f64,
}

/// Weak-Harnack quotient for the free solution started at `t = −1` (shifted to 0).
///
/// `Q^- = (0, r0^{2s}] × B_{r0^{1+2s}} × B_{r0}` and
/// `Q^+ = (1 − r0^{2s}, 1] × B_{r0^{1+2s}} × B_{r0}` in shifted time.
pub fn weak_harnack_ratio(f0: &[f64], g: &PropagatorGrid, o: &HarnackOptions) -> Result<HarnackResult> {
    if f0.iter().any(|x| *x < 0.0) {
        return Err(Error::Precondition("initial datum must be nonnegative".into()));
    }
    let s = g.s;
    let tau = o.r0.powf(2.0 * s);
    let rx = o.r0.powf(1.0 + 2.0 * s);
    let rv = o.r0;
    if 2.0 * rx > g.lx || 2.0 * rv > g.lv {
        return Err(Error::InvalidParameter("cylinders do not fit in the box".into()));
    }
    // Faces on grid lines make the closed-box trapezoid rule second order and put
    // the corners, where the infimum tends to sit, on nodes.
    let aligned = |r: f64, h: f64| ((r / h) - (r / h).round()).abs() < 1e-9;
    if !aligned(rx, g.hx()) || !aligned(rv, g.hv()) {
        return Err(Error::InvalidParameter(format!("cylinder faces x = ±{rx}, v = ±{rv} must lie on grid lines")));
    }
    let face = |y: f64, r: f64, h: f64| {
        let e = (y.abs() - r) / h;
        if e > 1e-9 {
            0.0
        } else if e > -1e-9 {
            0.5
        } else {
            1.0
        }
    };
    let inside: Vec<(usize, f64)> = (0..g.len())
        .map(|k| (k, face(g.x(k / g.nv), rx, g.hx()) * face(g.v(k % g.nv), rv, g.hv())))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let gl = gauss_legendre(o.time_nodes);
    let mut integral = 0.0;
    for (x, w) in gl.nodes.iter().zip(&gl.weights) {
        let t = 0.5 * tau * (1.0 + x);
        let f = propagate(f0, g, t);
        integral += 0.5 * tau * w * inside.iter().map(|&(k, q)| q * f[k].max(0.0).powf(o.epsilon)).sum::<f64>() * g.cell();
    }
    let mut inf = f64::INFINITY;
    for k in 0..=o.time_nodes {
        let t = 1.0 - tau + tau * k as f64 / o.time_nodes as f64;
        let f = propagate(f0, g, t);
        inf = inf.min(inside.iter().map(|&(k, _)| f[k]).fold(f64::INFINITY, f64::min));
    }
    let volume = tau * 4.0 * rx * rv;
    let num = integral.powf(1.0 / o.epsilon);
    let avg = (integral / volume).powf(1.0 / o.epsilon);
    let (ratio, normalized_ratio) = if inf > 0.0 {
        (num / inf, avg / inf)
    } else if num == 0.0 {
        (0.0, 0.0)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(HarnackResult { ratio, normalized_ratio, lower_integral: integral, upper_infimum: inf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(center: (f64, f64), sigma: f64) -> Profile {
        Profile::Maxwellian { mass: 1.0, temperature: sigma * sigma, center: vec![center.0, center.1] }
    }

    #[test]
    fn hat_examples() {
        assert_eq!(fundamental_solution_hat(1.0, &[0.0], &[0.0], 0.5), 1.0);
        assert_relative_eq!(fundamental_solution_hat(1.0, &[0.0], &[1.7], 0.3), (-(1.7f64).powf(0.6)).exp(), max_relative = 1e-13);
        assert_relative_eq!(fundamental_solution_hat(1.0, &[1.0], &[0.0], 0.5), (-0.5f64).exp(), max_relative = 1e-13);
    }

    proptest! {
        #[test]
        fn quadrature_matches_closed_form(t in 0.1f64..2.0, phi in -20.0f64..20.0, xi in -20.0f64..20.0, s in 0.1f64..0.95) {
            let a = exponent_quadrature(t, &[phi], &[xi], s);
            let b = exponent_1d(t, phi, xi, s);
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} {b}");
        }

        #[test]
        fn exponent_scaling(t in 0.1f64..3.0, phi in -10.0f64..10.0, xi in -10.0f64..10.0, s in 0.2f64..0.9) {
            let b = 1.0 / (2.0 * s);
            let a = exponent_1d(t, phi, xi, s);
            let c = exponent_1d(1.0, t.powf(1.0 + b) * phi, t.powf(b) * xi, s);
            prop_assert!((a - c).abs() <= 1e-11 * a.abs().max(1.0));
        }
    }

    #[test]
    fn stable_tail_of_cauchy() {
        // α = 1 is Cauchy with scale c: P(|Y| > a) = 1 − (2/π) atan(a/c).
        for (c, a) in [(1.0, 3.0), (0.5, 10.0), (2.0, 1.0)] {
            assert_relative_eq!(stable_tail(c, 1.0, a), 1.0 - 2.0 / PI * (a / c).atan(), max_relative = 1e-7);
        }
    }

    #[test]
    fn fundamental_mass_and_sign() {
        // Ringing depends on πN/L only; the slowest symbol decay (small s) needs the finest grid.
        for (s, l, n) in [(0.3, 8.0, 2048), (0.5, 12.0, 512), (0.7, 12.0, 512)] {
            let g = PropagatorGrid::new(s, l, l, n, n).unwrap().with_wrap_tol(1.0);
            for t in [0.25, 0.5, 1.0] {
                let j = fundamental_solution_grid(t, &g.scaled(t)).unwrap();
                assert!((j.mass - 1.0).abs() < 1e-6, "{s} {t} {}", j.mass);
                assert!(j.min > -1e-8, "{s} {t} {}", j.min);
            }
        }
    }

    #[test]
    fn wrap_guard_fires() {
        let g = PropagatorGrid::new(0.5, 4.0, 4.0, 64, 64).unwrap();
        let err = fundamental_solution_grid(1.0, &g).unwrap_err().to_string();
        assert!(err.contains("wrap-around"), "{err}");
    }

    #[test]
    fn scaled_and_direct_agree() {
        let g = PropagatorGrid::new(0.5, 24.0, 24.0, 256, 256).unwrap().with_wrap_tol(1.0);
        let a = fundamental_solution_grid(0.7, &g).unwrap();
        let b = fundamental_solution_direct(0.7, &g).unwrap();
        let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn plancherel_matches_grid() {
        let s = 0.5;
        let g = PropagatorGrid::new(s, 64.0, 64.0, 1024, 1024).unwrap().with_wrap_tol(1.0);
        let j = fundamental_solution_grid(1.0, &g).unwrap();
        let (n2, dn2) = plancherel_norms(1.0, s).unwrap();
        assert_relative_eq!(lp_norm(&j.values, &g, 2.0), n2, max_relative = 1e-4);
        let dj = fractional_velocity_laplacian(&j.values, &g, s);
        assert_relative_eq!(lp_norm(&dj, &g, 2.0), dn2, max_relative = 1e-3);
    }

    #[test]
    fn scaling_audit_s_half() {
        let g = PropagatorGrid::new(0.5, 32.0, 32.0, 512, 512).unwrap().with_wrap_tol(1.0);
        let ps = [1.0, p_star(1, 0.5), 2.0];
        let a = scaling_audit(&g, &[0.25, 0.5, 1.0], &ps).unwrap();
        assert_relative_eq!(a.p_star, 8.0 / 7.0, max_relative = 1e-15);
        for sp in &a.spread {
            assert!(*sp < 1e-3, "{a:?}");
        }
        assert!(a.plancherel_spread < 1e-8, "{}", a.plancherel_spread);
        assert!(a.plancherel_derivative_spread < 1e-8);
    }

    #[test]
    fn convolution_identities() {
        let g = PropagatorGrid::new(0.5, 8.0, 8.0, 32, 32).unwrap();
        let h = g.to_grid(g.sample(&gauss((0.3, -0.2), 0.6))).unwrap();
        // Discrete delta at the origin node.
        let mut dv = vec![0.0; g.len()];
        dv[(g.nx / 2) * g.nv + g.nv / 2] = 1.0 / g.cell();
        let delta = g.to_grid(dv).unwrap();
        let same = modified_convolve(&h, &delta, 0.0, &g).unwrap();
        for (a, b) in same.values.iter().zip(&h.values) {
            assert!((a - b).abs() < 1e-13);
        }
        let t = 0.4;
        let sheared = modified_convolve(&h, &delta, t, &g).unwrap();
        let p = gauss((0.3, -0.2), 0.6);
        for k in 0..g.len() {
            let (x, v) = (g.x(k / g.nv), g.v(k % g.nv));
            assert!((sheared.values[k] - p.eval(&[x - t * v, v])).abs() < 1e-6, "{k}");
        }
        // t = 0 against the direct double sum.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gs = PropagatorGrid::new(0.5, 4.0, 4.0, 8, 8).unwrap();
        let a: Vec<f64> = (0..gs.len()).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..gs.len()).map(|_| rng.gen()).collect();
        let c = convolve(&a, &b, &gs);
        for k in 0..gs.len() {
            let (kx, kv) = ((k / 8) as i64, (k % 8) as i64);
            let mut acc = 0.0;
            for j in 0..gs.len() {
                let (jx, jv) = ((j / 8) as i64, (j % 8) as i64);
                let bx = (kx - jx + 4).rem_euclid(8) as usize;
                let bv = (kv - jv + 4).rem_euclid(8) as usize;
                acc += a[j] * b[bx * 8 + bv];
            }
            assert!((c[k] - acc * gs.cell()).abs() < 1e-12);
        }
    }

    #[test]
    fn young_inequality_on_random_inputs() {
        let g = PropagatorGrid::new(0.5, 6.0, 6.0, 32, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let h: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>() - 0.3).collect();
            let j: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let t = rng.gen::<f64>() * 2.0;
            let c = convolve(&shear(&h, &g, t), &j, &g);
            assert!(lp_norm(&c, &g, 2.0) <= lp_norm(&h, &g, 1.0) * lp_norm(&j, &g, 2.0) + 1e-10);
            assert!(lp_norm(&c, &g, f64::INFINITY) <= lp_norm(&h, &g, 2.0) * lp_norm(&j, &g, 2.0) + 1e-10);
        }
    }

    #[test]
    fn semigroup_on_shear_compatible_grid() {
        // t·Lv/Lx ∈ ℤ makes the shear an index shift in ξ. The v-Nyquist must
        // exceed (t0 + t)·φ_max so the shift never aliases, and min_ξ of the
        // exponent is |φ|t²/4, so φ_max = 100 resolves J from t = 1 on.
        let g = PropagatorGrid::new(0.5, 4.0, 8.0, 128, 512).unwrap().with_wrap_tol(1.0);
        for (t0, t) in [(1.0, 0.5), (0.5, 1.0), (1.0, 1.0)] {
            let j0 = fundamental_solution_grid(t0, &g).unwrap();
            let j1 = fundamental_solution_grid(t0 + t, &g).unwrap();
            let f = propagate(&j0.values, &g, t);
            let diff: Vec<f64> = f.iter().zip(&j1.values).map(|(a, b)| a - b).collect();
            assert!(lp_norm(&diff, &g, 1.0) < 1e-4, "{t0} {t}: {}", lp_norm(&diff, &g, 1.0));
            let via_conv = convolve(&shear(&j0.values, &g, t), &fundamental_solution_grid(t, &g).unwrap().values, &g);
            let diff: Vec<f64> = via_conv.iter().zip(&j1.values).map(|(a, b)| a - b).collect();
            assert!(lp_norm(&diff, &g, 1.0) < 1e-4);
        }
    }

    #[test]
    fn duhamel_basics() {
        // The residual is dominated by the truncated |v|^{-1-2s} tails and decays like 1/L.
        let g = PropagatorGrid::new(0.5, 48.0, 48.0, 192, 192).unwrap();
        let o = DuhamelOptions::default();
        let zero = g.to_grid(vec![0.0; g.len()]).unwrap();
        let r = duhamel_solve(&zero, None, &[0.5], &g, &o).unwrap();
        assert!(r.trajectory.frames[0].values.iter().all(|x| *x == 0.0));
        let f0 = g.to_grid(g.sample(&gauss((0.0, 0.0), 0.7))).unwrap();
        let m0 = f0.values.iter().sum::<f64>() * g.cell();
        let r = duhamel_solve(&f0, None, &[0.3, 0.8], &g, &o).unwrap();
        for f in &r.trajectory.frames {
            assert!((f.values.iter().sum::<f64>() * g.cell() - m0).abs() < 1e-6 * m0);
        }
        for (_, res) in &r.residuals {
            assert!(*res < 1e-2, "{:?}", r.residuals);
        }
        // Constant source, zero datum: mass grows linearly.
        let h = g.sample(&gauss((0.0, 0.0), 0.5));
        let mh = h.iter().sum::<f64>() * g.cell();
        let r = duhamel_solve(&zero, Some(&Source::steady(h)), &[0.4], &g, &o).unwrap();
        let m = r.trajectory.frames[0].values.iter().sum::<f64>() * g.cell();
        assert_relative_eq!(m, 0.4 * mh, max_relative = 1e-6);
        assert!(r.residuals[0].1 < 1e-2, "{:?}", r.residuals);
    }

    #[test]
    fn comparison_principle() {
        let g = PropagatorGrid::new(0.5, 12.0, 12.0, 64, 64).unwrap();
        let f0 = g.sample(&gauss((0.0, 0.0), 0.6));
        let extra = g.sample(&gauss((0.5, 0.3), 0.4));
        let g0: Vec<f64> = f0.iter().zip(&extra).map(|(a, b)| a + 0.3 * b).collect();
        let range = g0.iter().cloned().fold(0.0, f64::max);
        for t in [0.2, 0.6, 1.0] {
            let f = propagate(&f0, &g, t);
            let gg = propagate(&g0, &g, t);
            assert!(f.iter().zip(&gg).all(|(a, b)| *a <= b + 1e-6 * range));
        }
    }

    #[test]
    fn gain_of_integrability() {
        let s = 0.5;
        let g = PropagatorGrid::new(s, 12.0, 12.0, 64, 64).unwrap();
        let zero = vec![0.0; g.len()];
        let o = DuhamelOptions::default();
        assert_eq!(gain_of_integrability_check(&zero, &zero, &zero, 2.5, 1.0, &g, 6, &o).unwrap(), 0.0);
        let err = gain_of_integrability_check(&zero, &zero, &zero, 3.0, 1.0, &g, 6, &o).unwrap_err().to_string();
        assert!(err.contains("p_star"), "{err}");
        let ratio = |n: usize| {
            let g = PropagatorGrid::new(s, 12.0, 12.0, n, n).unwrap();
            let f0 = g.sample(&gauss((0.0, 0.0), 0.6));
            let z = vec![0.0; g.len()];
            gain_of_integrability_check(&f0, &z, &z, 2.6, 1.0, &g, 8, &o).unwrap()
        };
        let (a, b, c) = (ratio(32), ratio(64), ratio(128));
        assert!(a.is_finite() && (b - a).abs() < 0.1 * b && (c - b).abs() < 0.1 * c, "{a} {b} {c}");
    }

    #[test]
    fn weak_harnack_basics() {
        let g = PropagatorGrid::new(0.5, 8.0, 8.0, 64, 64).unwrap();
        let o = HarnackOptions::default();
        let c = vec![3.0; g.len()];
        let r = weak_harnack_ratio(&c, &g, &o).unwrap();
        assert_relative_eq!(r.normalized_ratio, 1.0, max_relative = 1e-10);
        let p = Profile::SmoothIndicator { center: vec![0.0, 0.0], radius: 0.6, width: 0.2, height: 1.0 };
        let f0 = g.sample(&p);
        let a = weak_harnack_ratio(&f0, &g, &o).unwrap();
        let f2: Vec<f64> = f0.iter().map(|x| 2.0 * x).collect();
        let b = weak_harnack_ratio(&f2, &g, &o).unwrap();
        assert!(a.ratio.is_finite() && a.ratio > 0.0);
        assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio);
        let fine = PropagatorGrid::new(0.5, 8.0, 8.0, 128, 128).unwrap();
        let c = weak_harnack_ratio(&fine.sample(&p), &fine, &o).unwrap();
        assert!((c.ratio - a.ratio).abs() < 0.02 * c.ratio, "{} {}", a.ratio, c.ratio);
        let skew = PropagatorGrid::new(0.5, 8.0, 8.0, 60, 64).unwrap();
        assert!(weak_harnack_ratio(&skew.sample(&p), &skew, &o).is_err());
    }
}
