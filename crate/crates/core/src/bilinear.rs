//! The energy form `ℰ(φ, g) = −∫(L_v φ) g`, its symmetric and skew parts,
//! fractional Sobolev seminorms and the `H^s` boundedness checks.
//!
//! Double integrals use an outer tensor Gauss rule over the support box `D`
//! and the dyadic-shell engine for the inner variable. Pairs with one point
//! outside `D` collapse to a one-dimensional correction `∫_D φ g T` with
//! `T(v) = ∫_{Ω∖D} K`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernel::{FractionalLaplacian, KernelSpec};
use crate::quad::{full_range, gauss_legendre, ray_exit_ball, ray_exit_box, RadialEngine};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BilinearOptions {
    /// Composite panels per axis of the outer rule.
    pub outer_panels: usize,
    /// Gauss order per outer panel.
    pub outer_order: usize,
    pub engine: RadialEngine,
}

impl Default for BilinearOptions {
    fn default() -> Self {
        Self { outer_panels: 16, outer_order: 6, engine: RadialEngine::default() }
    }
}

/// Integration domain `Ω` of a seminorm.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeminormDomain {
    Whole,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl SeminormDomain {
    fn contains(&self, v: &[f64]) -> bool {
        match self {
            Self::Whole => true,
            Self::Box { lo, hi } => v.iter().zip(lo.iter().zip(hi)).all(|(x, (a, b))| *x >= *a && *x <= *b),
            Self::Ball { center, radius } => {
                v.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }
        }
    }

    /// Exit distance along `e` from an interior point.
    fn exit(&self, v: &[f64], e: &[f64]) -> f64 {
        match self {
            Self::Whole => f64::INFINITY,
            Self::Box { lo, hi } => ray_exit_box(v, e, lo, hi),
            Self::Ball { center, radius } => ray_exit_ball(v, e, center, *radius),
        }
    }

    /// Bounding box, if bounded.
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Whole => None,
            Self::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Self::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
        }
    }
}

/// Closed form everywhere when available, else the interpolant (zero off the grid).
fn value(f: &GridFunction, v: &[f64]) -> f64 {
    f.eval(v)
}

/// Whether `f` vanishes outside its grid box.
fn supported_in_box(f: &GridFunction) -> bool {
    f.compact_support && f.profile.as_ref().is_none_or(|p| p.support_radius().is_some())
}

/// Tensor composite Gauss nodes and weights over a box.
pub fn box_rule(lo: &[f64], hi: &[f64], panels: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    let rule = gauss_legendre(order);
    let axis = |a: usize| -> Vec<(f64, f64)> {
        let h = (hi[a] - lo[a]) / panels as f64;
        (0..panels)
            .flat_map(|p| {
                let m = lo[a] + (p as f64 + 0.5) * h;
                rule.nodes.iter().zip(&rule.weights).map(move |(x, w)| (m + 0.5 * h * x, 0.5 * h * w))
            })
            .collect()
    };
    let axes: Vec<Vec<(f64, f64)>> = (0..lo.len()).map(axis).collect();
    let mut out = vec![(Vec::new(), 1.0)];
    for ax in &axes {
        out = out
            .into_iter()
            .flat_map(|(p, w)| {
                ax.iter().map(move |(x, wx)| {
                    let mut q = p.clone();
                    q.push(*x);
                    (q, w * wx)
                })
            })
            .collect();
    }
    out
}

/// `½∬_{Ω×Ω}(φ(v)−φ(v'))(g(v)−g(v'))K(v,v') dv' dv`.
fn symmetric_part(
    spec: &KernelSpec,
    phi: &GridFunction,
    g: &GridFunction,
    omega: &SeminormDomain,
    opts: &BilinearOptions,
) -> Result<f64> {
    let d = spec.dim();
    if phi.dim() != d || g.dim() != d {
        return Err(Error::Dimension(phi.dim()));
    }
    // Outer box D: Δg vanishes on pairs outside D × D unless one end lies in D.
    let (mut lo, mut hi) = if supported_in_box(g) {
        (g.lo.clone(), g.hi())
    } else {
        match omega.bounds() {
            Some(b) => b,
            None => return Err(Error::Precondition("g must vanish outside its grid box".into())),
        }
    };
    if let Some((olo, ohi)) = omega.bounds() {
        for a in 0..d {
            lo[a] = lo[a].max(olo[a]);
            hi[a] = hi[a].min(ohi[a]);
        }
        if (0..d).any(|a| hi[a] <= lo[a]) {
            return Ok(0.0);
        }
    }
    let nodes = box_rule(&lo, &hi, opts.outer_panels, opts.outer_order);
    let side = (0..d).map(|a| hi[a] - lo[a]).fold(f64::INFINITY, f64::min);
    let anchor = 0.25 * side;
    let k = &spec.kernel;
    let reach = omega.bounds().map(|(a, b)| a.iter().zip(&b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt());
    let vals: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|(v, wt)| {
            if !omega.contains(v) {
                return Ok(0.0);
            }
            let (pv, gv) = (value(phi, v), value(g, v));
            let inner_range = |e: &[f64]| (0.0, omega.exit(v, e));
            let h = |w: &[f64]| {
                let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
                let dp = pv - value(phi, &vp);
                let dg = gv - value(g, &vp);
                if dp == 0.0 || dg == 0.0 {
                    0.0
                } else {
                    dp * dg * k.eval(v, &vp)
                }
            };
            let top = reach.unwrap_or(f64::INFINITY);
            let inner = opts.engine.integrate(d, anchor.min(top), 0.0, top, &inner_range, &h)?.value;
            // Pairs (u, v) with u ∈ Ω∖D contribute g(v)(φ(v) − φ(u))K(u, v).
            let mut col = 0.0;
            if gv != 0.0 {
                let out_range = |e: &[f64]| (ray_exit_box(v, e, &lo, &hi), omega.exit(v, e));
                let kt = |w: &[f64]| {
                    let u: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
                    let dp = pv - value(phi, &u);
                    if dp == 0.0 {
                        0.0
                    } else {
                        dp * k.eval(&u, v)
                    }
                };
                let gap = (0..d).map(|a| (v[a] - lo[a]).min(hi[a] - v[a])).fold(f64::INFINITY, f64::min);
                if gap < top {
                    col = gv * opts.engine.integrate(d, gap, gap, top, &out_range, &kt)?.value;
                }
            }
            Ok(wt * (inner + col))
        })
        .collect();
    let mut total = 0.0;
    for v in vals {
        total += v?;
    }
    // The first term covers v ∈ D; the column term covers v ∉ D, v' ∈ D.
    Ok(0.5 * total)
}

/// `½∫g(v) PV∫(φ(v)−φ(v'))(K(v,v')−K(v',v)) dv' dv`.
fn skew_part(spec: &KernelSpec, phi: &GridFunction, g: &GridFunction, opts: &BilinearOptions) -> Result<f64> {
    if spec.symmetric {
        return Ok(0.0);
    }
    let d = spec.dim();
    if !supported_in_box(g) {
        return Err(Error::Precondition("g must vanish outside its grid box".into()));
    }
    let (lo, hi) = (g.lo.clone(), g.hi());
    let nodes = box_rule(&lo, &hi, opts.outer_panels, opts.outer_order);
    let k = &spec.kernel;
    let side = (0..d).map(|a| hi[a] - lo[a]).fold(f64::INFINITY, f64::min);
    let vals: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|(v, wt)| {
            let gv = value(g, v);
            if gv == 0.0 {
                return Ok(0.0);
            }
            let pv = value(phi, v);
            let h = |w: &[f64]| {
                let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
                let dk = k.eval(v, &vp) - k.eval(&vp, v);
                if dk == 0.0 {
                    0.0
                } else {
                    (pv - value(phi, &vp)) * dk
                }
            };
            let r = opts.engine.integrate(d, 0.25 * side, 0.0, f64::INFINITY, &full_range, &h)?;
            Ok(wt * gv * r.value)
        })
        .collect();
    let mut total = 0.0;
    for v in vals {
        total += v?;
    }
    Ok(0.5 * total)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Energy {
    pub total: f64,
    pub sym: f64,
    pub skew: f64,
}

/// `ℰ(φ, g)` split as `ℰ^sym + ℰ^skew`. Both functions vanish outside their grid boxes.
pub fn energy_form(spec: &KernelSpec, phi: &GridFunction, g: &GridFunction, opts: &BilinearOptions) -> Result<Energy> {
    let sym = symmetric_part(spec, phi, g, &SeminormDomain::Whole, opts)?;
    let skew = skew_part(spec, phi, g, opts)?;
    Ok(Energy { total: sym + skew, sym, skew })
}

/// `(∬_{Ω×Ω}|f(v')−f(v)|²|v−v'|^{−d−2s})^{1/2}`.
///
/// Ball domains are integrated with an indicator on the outer rule, so
/// their accuracy is first order in the outer panel width.
pub fn sobolev_seminorm(f: &GridFunction, s: f64, omega: &SeminormDomain, opts: &BilinearOptions) -> Result<f64> {
    if f.values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite samples".into()));
    }
    let spec = KernelSpec::new(Arc::new(FractionalLaplacian { d: f.dim(), s, scale: 1.0 }), s, f64::INFINITY, true, "seminorm")?;
    let half = symmetric_part(&spec, f, f, omega, opts)?;
    Ok((2.0 * half).max(0.0).sqrt())
}

/// `(‖f‖²_{Ḣs} + ‖f‖²_{L²})^{1/2}`.
pub fn sobolev_norm(f: &GridFunction, s: f64, opts: &BilinearOptions) -> Result<f64> {
    let semi = sobolev_seminorm(f, s, &SeminormDomain::Whole, opts)?;
    let l2 = f.lp_norm(2.0);
    Ok((semi * semi + l2 * l2).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoundednessReport {
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
    pub skipped: Vec<usize>,
}

/// `max |ℰ(f,g)| / (‖f‖_{H^s}‖g‖_{H^s})` over pairs.
pub fn hs_boundedness_ratio(
    spec: &KernelSpec,
    pairs: &[(GridFunction, GridFunction)],
    opts: &BilinearOptions,
) -> Result<BoundednessReport> {
    let mut ratios = Vec::new();
    let mut skipped = Vec::new();
    for (i, (f, g)) in pairs.iter().enumerate() {
        let nf = sobolev_norm(f, spec.s, opts)?;
        let ng = sobolev_norm(g, spec.s, opts)?;
        if !(nf > 0.0 && ng > 0.0) {
            skipped.push(i);
            continue;
        }
        ratios.push(energy_form(spec, f, g, opts)?.total.abs() / (nf * ng));
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(BoundednessReport { max_ratio, ratios, skipped })
}

/// Right side minus left side of the one-smooth-function energy estimate
/// `ℰ(φ,g) ≤ ε‖g‖²_{Ḣs} + Cε⁻¹‖φ‖²_{C¹}|{g>0}| + C‖φ‖_{C²}‖g‖_{L¹}` for `g ≥ 0`.
pub fn second_upper_bound_residual(
    spec: &KernelSpec,
    phi: &GridFunction,
    g: &GridFunction,
    eps: f64,
    constant: f64,
    opts: &BilinearOptions,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    if g.values.iter().any(|x| *x < 0.0) {
        return Err(Error::Precondition("g must be nonnegative".into()));
    }
    let lhs = energy_form(spec, phi, g, opts)?.total;
    let semi = sobolev_seminorm(g, spec.s, &SeminormDomain::Whole, opts)?;
    let c1 = phi.c1_norm();
    let rhs = eps * semi * semi
        + constant / eps * c1 * c1 * g.positivity_measure()
        + constant * phi.c2_norm() * g.lp_norm(1.0);
    Ok(rhs - lhs)
}

/// `sup_v |PV∫(φ(v')−φ(v))(K(v,v')−K(v',v))dv'| / ‖φ‖_{C²}` over probes.
pub fn g_cancellation_ratio(spec: &KernelSpec, phi: &GridFunction, probes: &[Vec<f64>], engine: &RadialEngine) -> Result<f64> {
    let c2 = phi.c2_norm();
    if spec.symmetric || c2 == 0.0 {
        return Ok(0.0);
    }
    let d = spec.dim();
    let k = &spec.kernel;
    let vals: Vec<Result<f64>> = probes
        .par_iter()
        .map(|v| {
            let pv = value(phi, v);
            let h = |w: &[f64]| {
                let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
                let dk = k.eval(v, &vp) - k.eval(&vp, v);
                if dk == 0.0 {
                    0.0
                } else {
                    (value(phi, &vp) - pv) * dk
                }
            };
            Ok(engine.integrate(d, 0.5, 0.0, f64::INFINITY, &full_range, &h)?.value.abs())
        })
        .collect();
    let mut m: f64 = 0.0;
    for v in vals {
        m = m.max(v?);
    }
    Ok(m / c2)
}

/// `ℰ^sym(g,g) / ‖g‖²_{Ḣs}`.
pub fn symmetric_ratio(spec: &KernelSpec, g: &GridFunction, opts: &BilinearOptions) -> Result<f64> {
    let sym = symmetric_part(spec, g, g, &SeminormDomain::Whole, opts)?;
    let semi = sobolev_seminorm(g, spec.s, &SeminormDomain::Whole, opts)?;
    if semi == 0.0 {
        return Err(Error::Precondition("zero seminorm".into()));
    }
    Ok(sym / (semi * semi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Profile;
    use crate::kernel::{fractional_laplacian_constant, Modulated};
    use approx::assert_relative_eq;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn bump1(c: f64, r: f64, dims: usize) -> GridFunction {
        let p = Profile::SmoothIndicator { center: vec![c], radius: r, width: 0.5 * r, height: 1.0 };
        GridFunction::sample(p, &[c - 1.6 * r], &[c + 1.6 * r], &[dims]).unwrap()
    }

    fn fast() -> BilinearOptions {
        BilinearOptions { outer_panels: 12, outer_order: 6, ..Default::default() }
    }

    /// `(2/C_{1,s}) Σ|ξ|^{2s}|f̂|²/L` on a periodic grid of length `len`.
    fn fourier_seminorm_sq(f: &GridFunction, s: f64, len: f64, n: usize) -> f64 {
        let h = len / n as f64;
        let mut buf: Vec<Complex<f64>> =
            (0..n).map(|j| Complex::new(value(f, &[-0.5 * len + j as f64 * h]), 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mut acc = 0.0;
        for (k, c) in buf.iter().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let xi = 2.0 * std::f64::consts::PI * kk / len;
            acc += xi.abs().powf(2.0 * s) * (c.norm() * h).powi(2);
        }
        2.0 / fractional_laplacian_constant(1, s) * acc / len
    }

    #[test]
    fn seminorm_matches_fourier_side() {
        let f = bump1(0.1, 0.8, 81);
        let direct = sobolev_seminorm(&f, 0.5, &SeminormDomain::Whole, &fast()).unwrap().powi(2);
        let spectral = fourier_seminorm_sq(&f, 0.5, 64.0, 1 << 16);
        assert_relative_eq!(direct, spectral, max_relative = 1e-2);
    }

    #[test]
    fn seminorm_of_constant_and_homogeneity() {
        let c = GridFunction::sample(Profile::Constant { value: 2.0 }, &[-1.0], &[1.0], &[21]).unwrap();
        let dom = SeminormDomain::Box { lo: vec![-1.0], hi: vec![1.0] };
        assert!(sobolev_seminorm(&c, 0.4, &dom, &fast()).unwrap() < 1e-12);
        let f = bump1(0.0, 0.6, 61);
        let base = sobolev_seminorm(&f, 0.3, &SeminormDomain::Whole, &fast()).unwrap();
        for k in [-2.5, 0.5, 3.0] {
            let mut g = f.clone();
            g.profile = g.profile.take().map(|p| p.scaled(k));
            g.values.iter_mut().for_each(|x| *x *= k);
            let v = sobolev_seminorm(&g, 0.3, &SeminormDomain::Whole, &fast()).unwrap();
            assert_relative_eq!(v, k.abs() * base, max_relative = 1e-9);
        }
    }

    #[test]
    fn energy_of_fractional_laplacian_is_half_the_seminorm() {
        let f = bump1(0.0, 0.7, 61);
        for s in [0.3, 0.5, 0.8] {
            let spec = KernelSpec::fractional_laplacian(1, s, 1.0, f64::INFINITY).unwrap();
            let e = energy_form(&spec, &f, &f, &fast()).unwrap();
            let semi = sobolev_seminorm(&f, s, &SeminormDomain::Whole, &fast()).unwrap();
            assert_eq!(e.skew, 0.0);
            assert_relative_eq!(e.total, 0.5 * semi * semi, max_relative = 1e-12);
        }
    }

    #[test]
    fn energy_is_bilinear_and_sym_is_symmetric() {
        let m = Modulated::gaussian(0.6, 0.4, vec![0.2]);
        let spec = KernelSpec::new(Arc::new(m), 0.6, f64::INFINITY, false, "mod").unwrap();
        let a = bump1(0.0, 0.7, 41);
        let b = bump1(0.3, 0.5, 41);
        let g = bump1(-0.2, 0.6, 41);
        // A fixed outer rule keeps the form linear up to the inner tolerance.
        let o = BilinearOptions {
            outer_panels: 8,
            outer_order: 4,
            engine: RadialEngine { rtol: 1e-8, atol: 1e-15, ..Default::default() },
        };
        let (x, y) = (1.3, -0.7);
        let (lo, hi) = (vec![-1.2], vec![1.2]);
        let comb = Profile::Sum {
            terms: vec![a.profile.clone().unwrap().scaled(x), b.profile.clone().unwrap().scaled(y)],
        };
        let ab = GridFunction::sample(comb, &lo, &hi, &[81]).unwrap();
        let ea = energy_form(&spec, &a, &g, &o).unwrap().total;
        let eb = energy_form(&spec, &b, &g, &o).unwrap().total;
        let eab = energy_form(&spec, &ab, &g, &o).unwrap().total;
        assert_relative_eq!(eab, x * ea + y * eb, max_relative = 1e-8);
        // Swapping the arguments changes the outer box, so agreement is at discretization level.
        let s1 = energy_form(&spec, &a, &g, &fast()).unwrap().sym;
        let s2 = energy_form(&spec, &g, &a, &fast()).unwrap().sym;
        assert_relative_eq!(s1, s2, max_relative = 1e-4);
        assert!(energy_form(&spec, &g, &g, &fast()).unwrap().sym >= 0.0);
    }

    #[test]
    fn energy_matches_pointwise_operator_for_modulated_kernel() {
        // ℰ(φ,g) = ∫ g(v) PV∫(φ(v)−φ(v'))K(v,v') dv' dv computed directly.
        let m = Modulated::gaussian(0.4, 0.5, vec![-0.1]);
        let spec = KernelSpec::new(Arc::new(m), 0.4, f64::INFINITY, false, "mod").unwrap();
        let phi = bump1(0.1, 0.6, 61);
        let g = bump1(-0.1, 0.5, 61);
        let o = fast();
        let e = energy_form(&spec, &phi, &g, &o).unwrap();
        let nodes = box_rule(&g.lo, &g.hi(), 12, 6);
        let mut direct = 0.0;
        for (v, w) in &nodes {
            let pv = value(&phi, v);
            let h = |x: &[f64]| {
                let vp = [v[0] + x[0]];
                (pv - value(&phi, &vp)) * spec.eval(v, &vp)
            };
            let r = o.engine.integrate(1, 0.2, 0.0, f64::INFINITY, &full_range, &h).unwrap();
            direct += w * value(&g, v) * r.value;
        }
        assert_relative_eq!(e.total, direct, max_relative = 1e-4);
    }

    #[test]
    fn boundedness_for_fractional_laplacian_is_below_half() {
        let spec = KernelSpec::fractional_laplacian(1, 0.5, 1.0, f64::INFINITY).unwrap();
        let f = bump1(0.0, 0.7, 61);
        let r = hs_boundedness_ratio(&spec, &[(f.clone(), f)], &fast()).unwrap();
        assert!(r.max_ratio < 0.5 && r.max_ratio > 0.0);
        let z = KernelSpec::fractional_laplacian(1, 0.5, 0.0, f64::INFINITY).unwrap();
        let f = bump1(0.0, 0.7, 61);
        assert_eq!(hs_boundedness_ratio(&z, &[(f.clone(), f)], &fast()).unwrap().max_ratio, 0.0);
    }

    #[test]
    fn second_bound_trivial_cases() {
        let spec = KernelSpec::fractional_laplacian(1, 0.5, 1.0, f64::INFINITY).unwrap();
        let phi = bump1(0.0, 0.7, 61);
        let zero = GridFunction::sample(Profile::Constant { value: 0.0 }, &[-1.0], &[1.0], &[21]).unwrap();
        assert_eq!(second_upper_bound_residual(&spec, &phi, &zero, 0.5, 1.0, &fast()).unwrap(), 0.0);
        assert!(second_upper_bound_residual(&spec, &phi, &zero, 0.0, 1.0, &fast()).is_err());
        let flat = GridFunction::sample(Profile::Constant { value: 1.0 }, &[-3.0], &[3.0], &[61]).unwrap();
        let g = bump1(0.0, 0.5, 41);
        assert!(second_upper_bound_residual(&spec, &flat, &g, 0.5, 1.0, &fast()).unwrap() >= 0.0);
    }

    #[test]
    fn box_rule_integrates_polynomials() {
        let nodes = box_rule(&[0.0, -1.0], &[2.0, 1.0], 3, 4);
        let s: f64 = nodes.iter().map(|(p, w)| w * p[0] * p[0] * p[1] * p[1]).sum();
        assert_relative_eq!(s, 8.0 / 3.0 * 2.0 / 3.0, max_relative = 1e-13);
    }
}
