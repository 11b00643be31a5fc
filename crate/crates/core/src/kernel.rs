//! Jump kernels `K(v, v')` and numerical measurement of their ellipticity
//! constants: upper bounds, cancellation suprema, nondegeneracy and
//! coercivity, plus the global extension outside a reference ball.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bilinear::{energy_form, sobolev_seminorm, BilinearOptions, SeminormDomain};
use crate::error::{Error, Result};
use crate::grid::{smooth_step, GridFunction, Profile};
use crate::quad::{ball_probes, direction_sample, full_range, ray_exit_ball, RadialEngine};

/// A nonnegative jump kernel, callable concurrently.
pub trait Kernel: Send + Sync + Debug {
    fn dim(&self) -> usize;
    /// `K(v, v')`; the diagonal `v = v'` is never queried.
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64;
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn increment(v: &[f64], vp: &[f64]) -> f64 {
    v.iter().zip(vp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `scale·|v − v'|^{−d−2s}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FractionalLaplacian {
    pub d: usize,
    pub s: f64,
    pub scale: f64,
}

impl Kernel for FractionalLaplacian {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        self.scale * increment(v, vp).powf(-(self.d as f64) - 2.0 * self.s)
    }
}

/// `K(v, v')·1_{|v−v'| < cutoff}`.
#[derive(Debug, Clone)]
pub struct Truncated {
    pub inner: Arc<dyn Kernel>,
    pub cutoff: f64,
}

impl Kernel for Truncated {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        if increment(v, vp) < self.cutoff {
            self.inner.eval(v, vp)
        } else {
            0.0
        }
    }
}

/// `|w|^{−d−2s}` restricted to the double cone `|ŵ·axis| ≥ cos(aperture)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeRestricted {
    pub s: f64,
    pub axis: Vec<f64>,
    /// Half-angle in radians, in `(0, π/2]`.
    pub aperture: f64,
}

impl Kernel for ConeRestricted {
    fn dim(&self) -> usize {
        self.axis.len()
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        let w: Vec<f64> = vp.iter().zip(v).map(|(a, b)| a - b).collect();
        let r = norm(&w);
        let c = w.iter().zip(&self.axis).map(|(a, b)| a * b).sum::<f64>().abs() / (r * norm(&self.axis));
        if c >= self.aperture.cos() {
            r.powf(-(self.dim() as f64) - 2.0 * self.s)
        } else {
            0.0
        }
    }
}

/// `|w|^{−d−2s}·(1 + a(v))` with a smooth modulation `a`, `|a| < 1`: non-symmetric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Modulated {
    pub s: f64,
    pub d: usize,
    pub modulation: Profile,
}

impl Modulated {
    /// `a(v) = amplitude·exp(−|v − c|²/2)`.
    pub fn gaussian(s: f64, amplitude: f64, center: Vec<f64>) -> Self {
        let d = center.len();
        let mass = amplitude * (2.0 * PI).powf(0.5 * d as f64);
        Self { s, d, modulation: Profile::Maxwellian { mass, temperature: 1.0, center } }
    }

    /// `a(v) = amplitude·cos(k·v)`.
    pub fn cosine(s: f64, amplitude: f64, wavevector: Vec<f64>) -> Self {
        Self { s, d: wavevector.len(), modulation: Profile::Cosine { amplitude, wavevector, phase: 0.0 } }
    }
}

impl Kernel for Modulated {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        (1.0 + self.modulation.eval(v)) * increment(v, vp).powf(-(self.d as f64) - 2.0 * self.s)
    }
}

/// `m(v, v' − v)·|v − v'|^{−d−2s}` with `m` sampled on a `2d`-dimensional grid.
#[derive(Debug, Clone)]
pub struct Tabulated {
    pub s: f64,
    pub table: GridFunction,
}

impl Kernel for Tabulated {
    fn dim(&self) -> usize {
        self.table.dim() / 2
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        let d = self.dim();
        let mut p = v.to_vec();
        p.extend(vp.iter().zip(v).map(|(a, b)| a - b));
        self.table.interpolate(&p).max(0.0) * increment(v, vp).powf(-(d as f64) - 2.0 * self.s)
    }
}

/// `c·K`.
#[derive(Debug, Clone)]
pub struct Scaled {
    pub inner: Arc<dyn Kernel>,
    pub factor: f64,
}

impl Kernel for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        self.factor * self.inner.eval(v, vp)
    }
}

/// Radial cutoff equal to 1 on `B_{3R/4}` and 0 outside `B_{7R/8}`.
pub fn eta(v: &[f64], radius: f64) -> f64 {
    1.0 - smooth_step((norm(v) - 0.75 * radius) / (0.125 * radius))
}

/// `η(v)η(v')K(v,v') + Λ(1 − η(v)η(v'))|v − v'|^{−d−2s}`.
#[derive(Debug, Clone)]
pub struct Extended {
    pub inner: Arc<dyn Kernel>,
    pub s: f64,
    pub cap_lambda: f64,
    pub radius: f64,
}

impl Kernel for Extended {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        let e = eta(v, self.radius) * eta(vp, self.radius);
        let base = self.cap_lambda * increment(v, vp).powf(-(self.dim() as f64) - 2.0 * self.s);
        if e == 0.0 {
            base
        } else {
            e * self.inner.eval(v, vp) + (1.0 - e) * base
        }
    }
}

/// A kernel with its order and claimed constants.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub kernel: Arc<dyn Kernel>,
    pub s: f64,
    pub lambda: f64,
    pub cap_lambda: f64,
    /// Reference radius `R̄ ≥ 1`; `f64::INFINITY` means the whole space.
    pub radius: f64,
    pub symmetric: bool,
    pub name: String,
}

impl KernelSpec {
    pub fn new(kernel: Arc<dyn Kernel>, s: f64, radius: f64, symmetric: bool, name: &str) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0,1), got {s}")));
        }
        if !(radius >= 1.0) {
            return Err(Error::InvalidParameter(format!("reference radius must be at least 1, got {radius}")));
        }
        Ok(Self { kernel, s, lambda: 1.0, cap_lambda: 1.0, radius, symmetric, name: name.into() })
    }

    pub fn fractional_laplacian(d: usize, s: f64, scale: f64, radius: f64) -> Result<Self> {
        let mut k = Self::new(Arc::new(FractionalLaplacian { d, s, scale }), s, radius, true, "fractional-laplacian")?;
        k.lambda = scale;
        k.cap_lambda = scale;
        Ok(k)
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn with_constants(mut self, lambda: f64, cap_lambda: f64) -> Self {
        self.lambda = lambda;
        self.cap_lambda = cap_lambda;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kernel: Arc::new(Scaled { inner: self.kernel.clone(), factor }),
            s: self.s,
            lambda: self.lambda * factor,
            cap_lambda: self.cap_lambda * factor,
            radius: self.radius,
            symmetric: self.symmetric,
            name: format!("{}x{}", factor, self.name),
        }
    }

    pub fn eval(&self, v: &[f64], vp: &[f64]) -> f64 {
        self.kernel.eval(v, vp)
    }
}

/// A measured constant and where it was attained.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Witnessed {
    pub value: f64,
    pub v: Vec<f64>,
    pub r: Option<f64>,
    pub e: Option<Vec<f64>>,
}

impl Witnessed {
    fn at(value: f64, v: &[f64], r: Option<f64>, e: Option<&[f64]>) -> Self {
        Self { value, v: v.to_vec(), r, e: e.map(<[f64]>::to_vec) }
    }
}

fn arg_max(items: Vec<Witnessed>) -> Witnessed {
    items
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("nonempty probe set")
}

fn arg_min(items: Vec<Witnessed>) -> Witnessed {
    items
        .into_iter()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .expect("nonempty probe set")
}

/// Probe and quadrature settings shared by the kernel checks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckOptions {
    pub probe_count: usize,
    pub direction_count: usize,
    /// Dyadic radii `2^k` for `k` in this inclusive range.
    pub radius_exponents: (i32, i32),
    pub engine: RadialEngine,
    /// Anchor radius of the dyadic shells in principal-value integrals.
    pub pv_anchor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            probe_count: 12,
            direction_count: 16,
            radius_exponents: (-4, 2),
            engine: RadialEngine::default(),
            pv_anchor: 0.5,
        }
    }
}

impl CheckOptions {
    pub fn radii(&self, spec: &KernelSpec) -> Vec<f64> {
        let cap = if spec.radius.is_finite() { 2.0 * spec.radius } else { f64::INFINITY };
        (self.radius_exponents.0..=self.radius_exponents.1)
            .map(|k| 2f64.powi(k))
            .filter(|r| *r <= cap)
            .collect()
    }

    /// Probe radius: `R̄` for finite references, 1 for the whole space.
    pub fn probe_radius(spec: &KernelSpec, fraction: f64) -> f64 {
        if spec.radius.is_finite() {
            fraction * spec.radius
        } else {
            fraction
        }
    }
}

/// All measured forms of the upper bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UpperBoundReport {
    /// `sup r^{2s}∫_{ℝ^d∖B_r(v)} K(v,v') dv'`.
    pub tail_i: Witnessed,
    /// `sup r^{2s}∫_{B_R̄∖B_r(v')} K(v,v') dv`.
    pub tail_ii: Witnessed,
    /// `sup r^{2s}∫_{B_2r(v)∖B_r(v)} K(v,v') dv'`.
    pub annulus_i: Witnessed,
    pub annulus_ii: Witnessed,
    /// `sup r^{2s−2}∫_{B_r(v)} |v−v'|² K(v,v') dv'`.
    pub moment_i: Witnessed,
    pub moment_ii: Witnessed,
    /// Largest ratio between any two forms of the same variant.
    pub max_form_ratio: f64,
}

impl UpperBoundReport {
    pub fn max(&self) -> f64 {
        [&self.tail_i, &self.tail_ii, &self.annulus_i, &self.annulus_ii, &self.moment_i, &self.moment_ii]
            .iter()
            .map(|w| w.value)
            .fold(0.0, f64::max)
    }
}

/// Radial range of `v + ρσ` inside `B_R̄`, or unbounded.
fn ball_clip(spec: &KernelSpec, v: &[f64]) -> impl Fn(&[f64]) -> (f64, f64) + Sync {
    let radius = spec.radius;
    let v = v.to_vec();
    let c = vec![0.0; v.len()];
    move |e: &[f64]| {
        if radius.is_finite() {
            (0.0, ray_exit_ball(&v, e, &c, radius))
        } else {
            (0.0, f64::INFINITY)
        }
    }
}

/// Integrals over `{lo ≤ |v' − v| ≤ hi}` of `weight(w)·K` in either argument order.
fn shell_integral(
    spec: &KernelSpec,
    v: &[f64],
    lo: f64,
    hi: f64,
    second: bool,
    weight: impl Fn(&[f64]) -> f64 + Sync,
    engine: &RadialEngine,
) -> Result<f64> {
    let d = spec.dim();
    let k = &spec.kernel;
    let h = |w: &[f64]| {
        let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
        let kv = if second { k.eval(&vp, v) } else { k.eval(v, &vp) };
        if kv == 0.0 {
            0.0
        } else {
            weight(w) * kv
        }
    };
    let anchor = if lo > 0.0 { lo } else { hi };
    let res = if second && spec.radius.is_finite() {
        let clip = ball_clip(spec, v);
        let hi = hi.min(norm(v) + spec.radius);
        if hi <= lo {
            return Ok(0.0);
        }
        engine.integrate(d, anchor.min(hi), lo, hi, &clip, &h)?
    } else {
        engine.integrate(d, anchor, lo, hi, &full_range, &h)?
    };
    Ok(res.value)
}

/// Measures every form of the upper bound over probes in `B_R̄` and dyadic radii.
pub fn upper_bound_constant(spec: &KernelSpec, opts: &CheckOptions) -> Result<UpperBoundReport> {
    let d = spec.dim();
    let probes = ball_probes(d, CheckOptions::probe_radius(spec, 1.0), opts.probe_count);
    let radii = opts.radii(spec);
    let s2 = 2.0 * spec.s;
    let eng = &opts.engine;
    let jobs: Vec<(usize, f64)> = (0..probes.len()).flat_map(|p| radii.iter().map(move |&r| (p, r))).collect();
    let rows: Vec<Result<[f64; 6]>> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let v = &probes[p];
            let one = |_: &[f64]| 1.0;
            let sq = |w: &[f64]| w.iter().map(|c| c * c).sum::<f64>();
            let rs = r.powf(s2);
            Ok([
                rs * shell_integral(spec, v, r, f64::INFINITY, false, one, eng)?,
                rs * shell_integral(spec, v, r, f64::INFINITY, true, one, eng)?,
                rs * shell_integral(spec, v, r, 2.0 * r, false, one, eng)?,
                rs * shell_integral(spec, v, r, 2.0 * r, true, one, eng)?,
                rs / (r * r) * shell_integral(spec, v, 0.0, r, false, sq, eng)?,
                rs / (r * r) * shell_integral(spec, v, 0.0, r, true, sq, eng)?,
            ])
        })
        .collect();
    let mut cols: [Vec<Witnessed>; 6] = Default::default();
    for (row, &(p, r)) in rows.into_iter().zip(&jobs) {
        let row = row?;
        for (c, val) in cols.iter_mut().zip(row) {
            c.push(Witnessed::at(val, &probes[p], Some(r), None));
        }
    }
    let [t1, t2, a1, a2, m1, m2] = cols.map(arg_max);
    let ratio = |a: f64, b: f64| if a > 0.0 && b > 0.0 { (a / b).max(b / a) } else { 1.0 };
    let max_form_ratio = [
        ratio(t1.value, a1.value),
        ratio(t1.value, m1.value),
        ratio(a1.value, m1.value),
        ratio(t2.value, a2.value),
        ratio(t2.value, m2.value),
        ratio(a2.value, m2.value),
    ]
    .into_iter()
    .fold(1.0, f64::max);
    Ok(UpperBoundReport {
        tail_i: t1,
        tail_ii: t2,
        annulus_i: a1,
        annulus_ii: a2,
        moment_i: m1,
        moment_ii: m2,
        max_form_ratio,
    })
}

/// `PV∫_{B_R̄} weight(v'−v)·(K(v,v') − K(v',v)) dv'` by paired dyadic shells.
pub fn antisymmetric_pv(
    spec: &KernelSpec,
    v: &[f64],
    weight: impl Fn(&[f64]) -> f64 + Sync,
    engine: &RadialEngine,
    anchor: f64,
) -> Result<crate::quad::RadialResult> {
    let d = spec.dim();
    let k = &spec.kernel;
    let h = |w: &[f64]| {
        let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
        let diff = k.eval(v, &vp) - k.eval(&vp, v);
        if diff == 0.0 {
            0.0
        } else {
            weight(w) * diff
        }
    };
    let clip = ball_clip(spec, v);
    let hi = if spec.radius.is_finite() { norm(v) + spec.radius } else { f64::INFINITY };
    engine.integrate(d, anchor.min(hi), 0.0, hi, &clip, &h)
}

fn pv_or_infinite(r: Result<crate::quad::RadialResult>) -> Result<f64> {
    match r {
        Ok(res) => Ok(res.value),
        Err(Error::Divergent { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `sup_{v ∈ B_{7R̄/8}} |PV∫_{B_R̄}(K(v,v') − K(v',v)) dv'|`.
pub fn cancellation0_constant(spec: &KernelSpec, opts: &CheckOptions) -> Result<Witnessed> {
    let probes = ball_probes(spec.dim(), CheckOptions::probe_radius(spec, 0.875), opts.probe_count);
    let vals: Vec<Result<f64>> = probes
        .par_iter()
        .map(|v| pv_or_infinite(antisymmetric_pv(spec, v, |_| 1.0, &opts.engine, opts.pv_anchor)).map(f64::abs))
        .collect();
    let items = vals.into_iter().zip(&probes).map(|(r, v)| r.map(|x| Witnessed::at(x, v, None, None))).collect::<Result<Vec<_>>>()?;
    Ok(arg_max(items))
}

/// `sup_{v ∈ B_{7R̄/8}} |PV∫_{B_R̄}(v − v')(K(v,v') − K(v',v)) dv'|`.
pub fn cancellation1_constant(spec: &KernelSpec, opts: &CheckOptions) -> Result<Witnessed> {
    let d = spec.dim();
    let probes = ball_probes(d, CheckOptions::probe_radius(spec, 0.875), opts.probe_count);
    let vals: Vec<Result<f64>> = probes
        .par_iter()
        .map(|v| {
            let mut sq = 0.0;
            for a in 0..d {
                let c = pv_or_infinite(antisymmetric_pv(spec, v, |w| -w[a], &opts.engine, opts.pv_anchor))?;
                sq += c * c;
            }
            Ok(sq.sqrt())
        })
        .collect();
    let items = vals.into_iter().zip(&probes).map(|(r, v)| r.map(|x| Witnessed::at(x, v, None, None))).collect::<Result<Vec<_>>>()?;
    Ok(arg_max(items))
}

/// `inf r^{2s−2}∫_{B_r(v)}((v'−v)·e)₊² K(v,v') dv'` over probes, directions and radii.
pub fn nondegeneracy_constant(spec: &KernelSpec, opts: &CheckOptions) -> Result<Witnessed> {
    let d = spec.dim();
    let probes = ball_probes(d, CheckOptions::probe_radius(spec, 1.0), opts.probe_count);
    let dirs = direction_sample(d, opts.direction_count);
    let radii = &opts.radii(spec);
    let n_dirs = dirs.len();
    let jobs: Vec<(usize, usize, f64)> = (0..probes.len())
        .flat_map(|p| (0..n_dirs).flat_map(move |e| radii.iter().map(move |&r| (p, e, r))))
        .collect();
    let vals: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(p, e, r)| {
            let dir = &dirs[e];
            let weight = |w: &[f64]| {
                let c = w.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>().max(0.0);
                c * c
            };
            Ok(r.powf(2.0 * spec.s - 2.0) * shell_integral(spec, &probes[p], 0.0, r, false, weight, &opts.engine)?)
        })
        .collect();
    let items = vals
        .into_iter()
        .zip(&jobs)
        .map(|(x, &(p, e, r))| x.map(|x| Witnessed::at(x, &probes[p], Some(r), Some(&dirs[e]))))
        .collect::<Result<Vec<_>>>()?;
    Ok(arg_min(items))
}

/// Rayleigh quotient `(ℰ(f,f) + shift·‖f‖²_{L²}) / ‖f‖²_{Ḣs}` minimized over a family.
///
/// Members with zero seminorm are skipped and listed in `skipped`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoercivityReport {
    pub value: f64,
    /// Index into the test family of the minimizer.
    pub witness: usize,
    pub ratios: Vec<f64>,
    pub skipped: Vec<usize>,
}

pub fn coercivity_estimate(
    spec: &KernelSpec,
    l2_shift: f64,
    family: &[GridFunction],
    opts: &BilinearOptions,
) -> Result<CoercivityReport> {
    let mut ratios = Vec::new();
    let mut skipped = Vec::new();
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, f) in family.iter().enumerate() {
        let semi = sobolev_seminorm(f, spec.s, &SeminormDomain::Whole, opts)?;
        if !(semi > 0.0) {
            skipped.push(i);
            continue;
        }
        let e = energy_form(spec, f, f, opts)?;
        let l2 = f.lp_norm(2.0);
        let q = (e.total + l2_shift * l2 * l2) / (semi * semi);
        ratios.push(q);
        if q < best.0 {
            best = (q, i);
        }
    }
    if ratios.is_empty() {
        return Err(Error::Precondition("every test function has zero seminorm".into()));
    }
    Ok(CoercivityReport { value: best.0, witness: best.1, ratios, skipped })
}

/// Global extension `K̃` of a kernel given on `B_R̄ × ℝ^d`.
pub fn extend_global(spec: &KernelSpec) -> Result<KernelSpec> {
    if !spec.radius.is_finite() {
        return Err(Error::Precondition("extension needs a finite reference radius".into()));
    }
    let kernel = Arc::new(Extended {
        inner: spec.kernel.clone(),
        s: spec.s,
        cap_lambda: spec.cap_lambda,
        radius: spec.radius,
    });
    Ok(KernelSpec {
        kernel,
        s: spec.s,
        lambda: spec.lambda,
        cap_lambda: spec.cap_lambda,
        radius: f64::INFINITY,
        symmetric: spec.symmetric,
        name: format!("extended-{}", spec.name),
    })
}

/// `sup_{v ∈ B_{R̄/2}} ∫|K − K̃|(v, ·) / Λ`.
pub fn extension_tail_error(spec: &KernelSpec, ext: &KernelSpec, opts: &CheckOptions) -> Result<Witnessed> {
    let d = spec.dim();
    let probes = ball_probes(d, 0.5 * spec.radius, opts.probe_count);
    let vals: Vec<Result<f64>> = probes
        .par_iter()
        .map(|v| {
            let h = |w: &[f64]| {
                let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
                (spec.eval(v, &vp) - ext.eval(v, &vp)).abs()
            };
            // K = K̃ on B_{3R̄/4}, so the integrand vanishes for |w| < R̄/4.
            let r = opts.engine.integrate(d, 0.25 * spec.radius, 0.25 * spec.radius, f64::INFINITY, &full_range, &h)?;
            Ok(r.value / spec.cap_lambda)
        })
        .collect();
    let items = vals.into_iter().zip(&probes).map(|(r, v)| r.map(|x| Witnessed::at(x, v, None, None))).collect::<Result<Vec<_>>>()?;
    Ok(arg_max(items))
}

/// Every measured hypothesis constant.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EllipticityReport {
    pub kernel: String,
    pub upper: UpperBoundReport,
    pub cancellation0: Witnessed,
    pub cancellation1: Witnessed,
    pub nondegeneracy: Witnessed,
    pub coercivity: Option<CoercivityReport>,
    pub probes: String,
    pub engine: RadialEngine,
}

pub fn ellipticity_report(
    spec: &KernelSpec,
    opts: &CheckOptions,
    coercivity: Option<(f64, &[GridFunction], &BilinearOptions)>,
) -> Result<EllipticityReport> {
    let coercivity = match coercivity {
        Some((shift, fam, bo)) => Some(coercivity_estimate(spec, shift, fam, bo)?),
        None => None,
    };
    Ok(EllipticityReport {
        kernel: spec.name.clone(),
        upper: upper_bound_constant(spec, opts)?,
        cancellation0: cancellation0_constant(spec, opts)?,
        cancellation1: cancellation1_constant(spec, opts)?,
        nondegeneracy: nondegeneracy_constant(spec, opts)?,
        coercivity,
        probes: format!(
            "{} Halton points in the reference ball with origin and axis points; {} directions; radii 2^{}..2^{}",
            opts.probe_count, opts.direction_count, opts.radius_exponents.0, opts.radius_exponents.1
        ),
        engine: opts.engine,
    })
}

/// `C_{d,s} = 4^s Γ(d/2 + s) / (π^{d/2} |Γ(−s)|)`, the normalizing constant of `(−Δ)^s`.
pub fn fractional_laplacian_constant(d: usize, s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    4f64.powf(s) * gamma(0.5 * d as f64 + s) / (PI.powf(0.5 * d as f64) * gamma(-s).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fl(d: usize, s: f64) -> KernelSpec {
        KernelSpec::fractional_laplacian(d, s, 1.0, 1.0).unwrap()
    }

    fn quick() -> CheckOptions {
        CheckOptions { probe_count: 5, direction_count: 8, radius_exponents: (-3, 1), ..Default::default() }
    }

    #[test]
    fn fractional_laplacian_upper_forms_d1() {
        let r = upper_bound_constant(&fl(1, 0.5), &quick()).unwrap();
        assert_relative_eq!(r.tail_i.value, 2.0, max_relative = 1e-6);
        assert_relative_eq!(r.annulus_i.value, 1.0, max_relative = 1e-6);
        assert_relative_eq!(r.moment_i.value, 2.0, max_relative = 1e-6);
        assert!(r.tail_ii.value <= 2.0 + 1e-6);
        assert!(r.max_form_ratio <= 8.0);
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let z = KernelSpec::fractional_laplacian(2, 0.5, 0.0, 1.0).unwrap();
        let o = quick();
        assert_eq!(upper_bound_constant(&z, &o).unwrap().max(), 0.0);
        assert_eq!(nondegeneracy_constant(&z, &o).unwrap().value, 0.0);
    }

    #[test]
    fn truncation_lowers_the_upper_bound() {
        let base = fl(2, 0.4);
        let trunc = KernelSpec::new(Arc::new(Truncated { inner: base.kernel.clone(), cutoff: 1.0 }), 0.4, 1.0, true, "trunc").unwrap();
        let o = quick();
        let a = upper_bound_constant(&base, &o).unwrap();
        let b = upper_bound_constant(&trunc, &o).unwrap();
        assert!(b.tail_i.value <= a.tail_i.value * (1.0 + 1e-9));
    }

    #[test]
    fn fractional_laplacian_nondegeneracy_d1() {
        let w = nondegeneracy_constant(&fl(1, 0.5), &quick()).unwrap();
        assert_relative_eq!(w.value, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn symmetric_kernels_cancel_exactly() {
        for d in 1..=2 {
            let o = quick();
            assert_eq!(cancellation0_constant(&fl(d, 0.6), &o).unwrap().value, 0.0);
            assert_eq!(cancellation1_constant(&fl(d, 0.6), &o).unwrap().value, 0.0);
        }
    }

    /// `(−Δ)^s` of `A·exp(−v²/2)` in one dimension by the Fourier integral, with `ξ = u²`.
    fn gaussian_fractional_laplacian_1d(s: f64, amp: f64, v: f64) -> f64 {
        let int = crate::quad::gl_panels(0.0, 3.5, 200, 16, |u| {
            2.0 * u.powf(4.0 * s + 1.0) * (-0.5 * u.powi(4)).exp() * (u * u * v).cos()
        });
        amp * (2.0 * PI).sqrt() / PI * int
    }

    #[test]
    fn modulated_kernel_cancellation_matches_fourier_symbol() {
        // PV∫(a(v) − a(v+w))|w|^{−d−2s} dw = (−Δ)^s a(v) / C_{d,s}.
        use statrs::function::gamma::gamma;
        let e = RadialEngine::default();
        for s in [0.3, 0.7] {
            let spec = KernelSpec::new(Arc::new(Modulated::gaussian(s, 0.4, vec![0.0])), s, f64::INFINITY, false, "g").unwrap();
            let closed = 0.4 * 2f64.powf(s) * gamma(s + 0.5) / PI.sqrt();
            assert_relative_eq!(gaussian_fractional_laplacian_1d(s, 0.4, 0.0), closed, max_relative = 1e-9);
            for v in [0.0, 0.35, 1.2] {
                let res = antisymmetric_pv(&spec, &[v], |_| 1.0, &e, 0.5).unwrap();
                let expect = gaussian_fractional_laplacian_1d(s, 0.4, v) / fractional_laplacian_constant(1, s);
                assert_relative_eq!(res.value, expect, max_relative = 1e-5);
            }
        }
        let s = 0.5;
        let spec = KernelSpec::new(Arc::new(Modulated::gaussian(s, 0.4, vec![0.0, 0.0])), s, f64::INFINITY, false, "g").unwrap();
        let res = antisymmetric_pv(&spec, &[0.0, 0.0], |_| 1.0, &e, 0.5).unwrap();
        let expect = 0.4 * 2f64.powf(s) * gamma(s + 1.0) / fractional_laplacian_constant(2, s);
        assert_relative_eq!(res.value, expect, max_relative = 1e-5);
    }

    #[test]
    fn pv_is_independent_of_the_dyadic_phase() {
        let m = Modulated::cosine(0.6, 0.3, vec![0.9, -0.4]);
        let spec = KernelSpec::new(Arc::new(m), 0.6, 2.0, false, "mod").unwrap();
        let v = [0.3, -0.5];
        let e = RadialEngine::default();
        let a = antisymmetric_pv(&spec, &v, |_| 1.0, &e, 0.5).unwrap().value;
        let b = antisymmetric_pv(&spec, &v, |_| 1.0, &e, 0.37).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-5);
    }

    #[test]
    fn even_increment_kernels_have_zero_first_moment_term() {
        // K(v, v+w) = K(v, v−w): PV∫ w K(v, v+w) dw = 0.
        let m = Modulated::cosine(0.7, 0.5, vec![1.0, 0.5]);
        let spec = KernelSpec::new(Arc::new(m), 0.7, f64::INFINITY, false, "mod").unwrap();
        let v = [0.4, 0.1];
        for a in 0..2 {
            let h = |w: &[f64]| {
                let vp = [v[0] + w[0], v[1] + w[1]];
                w[a] * spec.eval(&v, &vp)
            };
            let r = RadialEngine::default().integrate(2, 0.5, 0.0, f64::INFINITY, &full_range, &h).unwrap();
            assert!(r.value.abs() < 1e-12);
        }
    }

    #[test]
    fn cone_nondegeneracy_grows_with_aperture() {
        let mut prev = 0.0;
        for ap in [0.3, 0.6, 1.0] {
            let k = ConeRestricted { s: 0.4, axis: vec![1.0, 0.0], aperture: ap };
            let spec = KernelSpec::new(Arc::new(k), 0.4, 1.0, true, "cone").unwrap();
            let w = nondegeneracy_constant(&spec, &quick()).unwrap();
            assert!(w.value > prev, "aperture {ap}: {w:?}");
            prev = w.value;
        }
    }

    #[test]
    fn constants_scale_linearly() {
        let m = Modulated::cosine(0.5, 0.3, vec![1.1]);
        let spec = KernelSpec::new(Arc::new(m), 0.5, 1.0, false, "mod").unwrap();
        let o = quick();
        let base = (
            upper_bound_constant(&spec, &o).unwrap().tail_i.value,
            cancellation0_constant(&spec, &o).unwrap().value,
            nondegeneracy_constant(&spec, &o).unwrap().value,
        );
        for c in [0.5, 3.0] {
            let sc = spec.scaled(c);
            assert_relative_eq!(upper_bound_constant(&sc, &o).unwrap().tail_i.value, c * base.0, max_relative = 1e-9);
            assert_relative_eq!(cancellation0_constant(&sc, &o).unwrap().value, c * base.1, max_relative = 1e-9);
            assert_relative_eq!(nondegeneracy_constant(&sc, &o).unwrap().value, c * base.2, max_relative = 1e-9);
        }
    }

    #[test]
    fn extension_agrees_inside_and_collapses_for_fractional_laplacian() {
        let m = Modulated::cosine(0.5, 0.3, vec![1.0, 2.0]);
        let spec = KernelSpec::new(Arc::new(m), 0.5, 1.5, false, "mod").unwrap().with_constants(0.5, 2.0);
        let ext = extend_global(&spec).unwrap();
        let probes = ball_probes(2, 1.0, 40);
        for a in &probes {
            for b in &probes {
                if a != b {
                    assert_eq!(ext.eval(a, b), spec.eval(a, b));
                }
            }
        }
        let f = KernelSpec::fractional_laplacian(2, 0.5, 2.0, 1.5).unwrap();
        let fe = extend_global(&f).unwrap();
        for (a, b) in [([0.0, 0.0], [3.0, 1.0]), ([1.3, 0.0], [0.2, 0.1])] {
            assert_relative_eq!(fe.eval(&a, &b), f.eval(&a, &b), max_relative = 1e-14);
        }
        let err = extension_tail_error(&spec, &ext, &quick()).unwrap();
        assert!(err.value.is_finite());
        let up = upper_bound_constant(&ext, &CheckOptions { radius_exponents: (-3, 3), ..quick() }).unwrap();
        assert!(up.tail_i.value.is_finite());
    }

    #[test]
    fn eta_profile() {
        assert_eq!(eta(&[0.7], 1.0), 1.0);
        assert_eq!(eta(&[0.9], 1.0), 0.0);
        let mid = eta(&[0.8125], 1.0);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn laplacian_constant_values() {
        assert_relative_eq!(fractional_laplacian_constant(1, 0.5), 1.0 / PI, max_relative = 1e-12);
        // d = 3, s = 1/2: Γ(2)·2/(π^{3/2}·2√π) = 1/π².
        assert_relative_eq!(fractional_laplacian_constant(3, 0.5), 1.0 / (PI * PI), max_relative = 1e-12);
    }
}
