//! Quadrature building blocks shared by every singular-integral routine.
//!
//! The workhorse is [`RadialEngine`]: it integrates a function of an
//! increment `w` over a star-shaped region around the origin by splitting
//! `|w|` into dyadic shells. Each shell is integrated over half of the unit
//! sphere with the integrand paired at `w` and `-w`, so odd near-diagonal
//! terms cancel exactly and principal values converge absolutely. Shell
//! sums are continued to `0` and `∞` with a geometric (Aitken) tail.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Cached Gauss–Legendre rule of order `n` (n ≥ 2).
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("quadrature cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(n.max(2)).expect("order ≥ 2");
            let mut pairs: Vec<(f64, f64)> = rule.into_node_weight_pairs();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(GaussRule {
                nodes: pairs.iter().map(|p| p.0).collect(),
                weights: pairs.iter().map(|p| p.1).collect(),
            })
        })
        .clone()
}

/// Fixed-order Gauss–Legendre on `[a, b]`.
pub fn gl(a: f64, b: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = gauss_legendre(n);
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(m + h * x);
    }
    acc * h
}

/// Composite Gauss–Legendre with `panels` equal panels of order `n`.
pub fn gl_panels(a: f64, b: f64, panels: usize, n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| gl(a + i as f64 * h, a + (i + 1) as f64 * h, n, &mut f))
        .sum()
}

/// Adaptive Gauss–Legendre by bisection.
///
/// The closure returns `(value, magnitude)`; magnitudes accumulate the
/// scale against which the relative tolerance is measured, so integrands
/// that cancel to zero still terminate. Intervals are processed in a fixed
/// order, so the result is deterministic.
pub fn adaptive_gl(
    a: f64,
    b: f64,
    initial_panels: usize,
    rtol: f64,
    atol: f64,
    max_depth: usize,
    mut f: impl FnMut(f64) -> (f64, f64),
) -> Result<(f64, f64)> {
    const N: usize = 8;
    let mut eval = |lo: f64, hi: f64| -> (f64, f64) {
        let rule = gauss_legendre(N);
        let (m, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let (mut v, mut g) = (0.0, 0.0);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let (fv, fm) = f(m + h * x);
            v += w * fv;
            g += w * fm;
        }
        (v * h, g * h)
    };
    let width = (b - a) / initial_panels as f64;
    let mut stack: Vec<(f64, f64, usize, f64, f64)> = (0..initial_panels)
        .rev()
        .map(|i| {
            let (lo, hi) = (a + i as f64 * width, a + (i + 1) as f64 * width);
            let (v, g) = eval(lo, hi);
            (lo, hi, 0, v, g)
        })
        .collect();
    let scale: f64 = stack.iter().map(|s| s.4.abs()).sum();
    let (mut total, mut mag) = (0.0, 0.0);
    while let Some((lo, hi, depth, v, g)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (v1, g1) = eval(lo, mid);
        let (v2, g2) = eval(mid, hi);
        let refined = v1 + v2;
        let allowed = (rtol * scale + atol) * (hi - lo) / (b - a);
        // At full depth a jump discontinuity leaves a change far below the
        // global budget; accept it there rather than fail.
        let exhausted = depth >= max_depth && (refined - v).abs() <= rtol * scale + atol;
        if (refined - v).abs() <= allowed || exhausted || (hi - lo) < 1e-14 * (b - a).abs() {
            total += refined;
            mag += g1 + g2;
        } else if depth >= max_depth {
            return Err(Error::Quadrature(format!(
                "adaptive Gauss–Legendre did not converge on [{lo}, {hi}] (change {:e})",
                (refined - v).abs()
            )));
        } else {
            let _ = g;
            stack.push((mid, hi, depth + 1, v2, g2));
            stack.push((lo, mid, depth + 1, v1, g1));
        }
    }
    Ok((total, mag))
}

/// Volume of the unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Surface measure `|S^{d-1}|` of the unit sphere in ℝ^d (`|S^0| = 2`).
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Point on the unit sphere from spherical angles; `angles.len() == d - 1`.
fn direction(d: usize, angles: &[f64]) -> Vec<f64> {
    match d {
        1 => vec![1.0],
        2 => vec![angles[0].cos(), angles[0].sin()],
        3 => {
            let (st, ct) = angles[0].sin_cos();
            let (sp, cp) = angles[1].sin_cos();
            vec![st * cp, st * sp, ct]
        }
        _ => unreachable!("dimension checked by caller"),
    }
}

/// Integrates `g` over a half sphere `H` with `H ∪ (−H) = S^{d−1}`.
///
/// Callers integrate `g(σ) + g(−σ)` to obtain the full-sphere integral.
/// `g` returns `(value, magnitude)`.
pub fn half_sphere_integral(
    d: usize,
    rtol: f64,
    atol: f64,
    mut g: impl FnMut(&[f64]) -> (f64, f64),
) -> Result<(f64, f64)> {
    match d {
        1 => Ok(g(&[1.0])),
        2 => adaptive_gl(0.0, PI, 4, rtol, atol, 30, |th| g(&direction(2, &[th]))),
        3 => adaptive_gl(0.0, 0.5 * PI, 2, rtol, atol, 24, |th| {
            let st = th.sin();
            let inner = adaptive_gl(0.0, 2.0 * PI, 4, rtol, atol, 24, |ph| g(&direction(3, &[th, ph])));
            match inner {
                Ok((v, m)) => (v * st, m * st),
                Err(_) => (f64::NAN, f64::NAN),
            }
        })
        .and_then(|(v, m)| {
            if v.is_finite() {
                Ok((v, m))
            } else {
                Err(Error::Quadrature("azimuthal quadrature failed".into()))
            }
        }),
        _ => Err(Error::Dimension(d)),
    }
}

/// Quasi-uniform direction sample on `S^{d−1}` closed under `σ ↦ −σ`.
pub fn direction_sample(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let n = n.max(2) + n % 2;
            (0..n)
                .map(|j| direction(2, &[2.0 * PI * (j as f64 + 0.5) / n as f64]))
                .collect()
        }
        _ => {
            // Fibonacci points on the upper hemisphere, mirrored.
            let half = n.div_ceil(2).max(1);
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut out = Vec::with_capacity(2 * half);
            for i in 0..half {
                let z = 1.0 - (i as f64 + 0.5) / half as f64;
                let rho = (1.0 - z * z).sqrt();
                let ph = golden * i as f64;
                let p = vec![rho * ph.cos(), rho * ph.sin(), z];
                out.push(p.iter().map(|c| -c).collect());
                out.push(p);
            }
            out
        }
    }
}

/// One dyadic shell's contribution in a [`RadialResult`] trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ShellRecord {
    pub inner: f64,
    pub outer: f64,
    pub value: f64,
}

/// Outcome of a dyadic-shell integration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RadialResult {
    pub value: f64,
    /// Tail added below the innermost shell.
    pub inner_tail: f64,
    /// Tail added beyond the outermost shell.
    pub outer_tail: f64,
    pub trace: Vec<ShellRecord>,
}

/// Settings of the dyadic-shell integrator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RadialEngine {
    /// Relative tolerance for shells and tail continuation.
    pub rtol: f64,
    /// Absolute tolerance floor.
    pub atol: f64,
    /// Initial radial Gauss order per shell (doubled until stable).
    pub radial_order: usize,
    /// Shell budget on each side of the anchor.
    pub max_shells: usize,
    /// Shells integrated before tail continuation may stop the sweep.
    pub min_shells: usize,
}

impl Default for RadialEngine {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-13, radial_order: 8, max_shells: 80, min_shells: 5 }
    }
}

/// Radial clipping: the allowed `|w|` range along a direction.
pub type RangeFn<'a> = &'a (dyn Fn(&[f64]) -> (f64, f64) + Sync);

/// Unclipped range.
pub fn full_range(_: &[f64]) -> (f64, f64) {
    (0.0, f64::INFINITY)
}

impl RadialEngine {
    /// Integrates `h(w)` over `{ w : lo ≤ |w| ≤ hi, |w| ∈ range(ŵ) }` in ℝ^d.
    ///
    /// Shells are `[anchor·2^k, anchor·2^{k+1}]`. If `lo == 0` the sweep
    /// continues toward the origin with tail extrapolation; if `hi` is
    /// infinite it continues outward likewise.
    pub fn integrate(
        &self,
        d: usize,
        anchor: f64,
        lo: f64,
        hi: f64,
        range: RangeFn<'_>,
        h: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<RadialResult> {
        if !(1..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        let mut trace = Vec::new();
        let mut total = 0.0;
        let mut inner_tail = 0.0;
        let mut outer_tail = 0.0;

        // Inward sweep: shells below the anchor.
        if anchor > lo {
            let mut outer = anchor.min(hi);
            let mut hist: Vec<f64> = Vec::new();
            let mut partial = 0.0;
            let mut last_est = f64::NAN;
            let mut converged = false;
            for k in 0..self.max_shells {
                let inner = (outer * 0.5).max(lo);
                let a = self.shell(d, inner, outer, range, h)?;
                trace.push(ShellRecord { inner, outer, value: a });
                partial += a;
                hist.push(a);
                if inner <= lo {
                    converged = true;
                    break;
                }
                if let Some((tail, est)) = self.tail_estimate(&hist, partial, k, &mut last_est) {
                    inner_tail = tail;
                    let _ = est;
                    converged = true;
                    break;
                }
                outer = inner;
            }
            if !converged {
                return Err(Error::Divergent { trace });
            }
            total += partial + inner_tail;
        }

        // Outward sweep: shells above the anchor.
        if hi > anchor {
            let mut inner = anchor.max(lo);
            let mut hist: Vec<f64> = Vec::new();
            let mut partial = 0.0;
            let mut last_est = f64::NAN;
            let mut converged = false;
            for k in 0..self.max_shells {
                let outer = (inner * 2.0).min(hi);
                let a = self.shell(d, inner, outer, range, h)?;
                trace.push(ShellRecord { inner, outer, value: a });
                partial += a;
                hist.push(a);
                if outer >= hi {
                    converged = true;
                    break;
                }
                if let Some((tail, _)) = self.tail_estimate(&hist, partial, k, &mut last_est) {
                    outer_tail = tail;
                    converged = true;
                    break;
                }
                inner = outer;
            }
            if !converged {
                return Err(Error::Divergent { trace });
            }
            total += partial + outer_tail;
        }
        Ok(RadialResult { value: total, inner_tail, outer_tail, trace })
    }

    /// Geometric tail once shell ratios settle, or zero once shells vanish.
    fn tail_estimate(
        &self,
        hist: &[f64],
        partial: f64,
        k: usize,
        last_est: &mut f64,
    ) -> Option<(f64, f64)> {
        if k + 1 < self.min_shells {
            return None;
        }
        let n = hist.len();
        let a = hist[n - 1];
        let floor = self.atol + self.rtol * partial.abs();
        if a.abs() <= floor && hist[n - 2].abs() <= floor {
            return Some((0.0, partial));
        }
        let q1 = a / hist[n - 2];
        let q0 = hist[n - 2] / hist[n - 3];
        if q1.is_finite() && q0.is_finite() && q1 > 0.0 && q1 < 0.97 && (q1 - q0).abs() <= 1e-2 * q1 {
            let tail = a * q1 / (1.0 - q1);
            let est = partial + tail;
            let settled = (est - *last_est).abs() <= self.rtol * est.abs() + self.atol;
            *last_est = est;
            if settled || tail.abs() <= floor {
                return Some((tail, est));
            }
        } else {
            *last_est = f64::NAN;
        }
        None
    }

    /// One shell `[a, b]` with paired half-sphere integration, radial order
    /// doubling, then radial bisection for integrands with a jump.
    fn shell(
        &self,
        d: usize,
        a: f64,
        b: f64,
        range: RangeFn<'_>,
        h: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<f64> {
        let mut order = self.radial_order;
        let mut prev = self.shell_at_order(d, a, b, order, range, h)?;
        while order < 64 {
            order *= 2;
            let next = self.shell_at_order(d, a, b, order, range, h)?;
            if (next.0 - prev.0).abs() <= self.rtol * next.1 + self.atol * (b - a) {
                return Ok(next.0);
            }
            prev = next;
        }
        let scale = prev.1;
        let mut stack = vec![(a, b, 0usize, prev.0)];
        let mut total = 0.0;
        while let Some((lo, hi, depth, v)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let v1 = self.shell_at_order(d, lo, mid, order, range, h)?.0;
            let v2 = self.shell_at_order(d, mid, hi, order, range, h)?.0;
            let change = (v1 + v2 - v).abs();
            let allowed = (self.rtol * scale + self.atol * (b - a)) * (hi - lo) / (b - a);
            if change <= allowed || (depth >= 40 && change <= self.rtol * scale + self.atol * (b - a)) {
                total += v1 + v2;
            } else if depth >= 40 {
                return Err(Error::Quadrature(format!(
                    "radial bisection exhausted on shell [{a:e}, {b:e}] at [{lo:e}, {hi:e}]"
                )));
            } else {
                stack.push((mid, hi, depth + 1, v2));
                stack.push((lo, mid, depth + 1, v1));
            }
        }
        Ok(total)
    }

    fn shell_at_order(
        &self,
        d: usize,
        a: f64,
        b: f64,
        order: usize,
        range: RangeFn<'_>,
        h: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<(f64, f64)> {
        let rule = gauss_legendre(order);
        let mut w = vec![0.0; d];
        let mut radial = |sigma: &[f64], sign: f64| -> (f64, f64) {
            let (rlo, rhi) = range(sigma);
            let (lo, hi) = (a.max(rlo), b.min(rhi));
            if hi <= lo {
                return (0.0, 0.0);
            }
            let (m, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            let (mut v, mut g) = (0.0, 0.0);
            for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                let rho = m + half * x;
                for i in 0..d {
                    w[i] = sign * rho * sigma[i];
                }
                let jac = rho.powi(d as i32 - 1);
                let val = h(&w) * jac;
                v += wt * val;
                g += wt * val.abs();
            }
            (v * half, g * half)
        };
        half_sphere_integral(d, self.rtol, self.atol * (b - a), |sigma| {
            let neg: Vec<f64> = sigma.iter().map(|c| -c).collect();
            let (v1, g1) = radial(sigma, 1.0);
            let (v2, g2) = radial(&neg, 1.0);
            (v1 + v2, g1 + g2)
        })
    }
}

/// Exit distance from `p` along unit direction `e` for the ball `B_R(c)`,
/// assuming `p` lies inside.
pub fn ray_exit_ball(p: &[f64], e: &[f64], c: &[f64], radius: f64) -> f64 {
    let mut pe = 0.0;
    let mut pp = 0.0;
    for i in 0..p.len() {
        let q = p[i] - c[i];
        pe += q * e[i];
        pp += q * q;
    }
    let disc = pe * pe - (pp - radius * radius);
    if disc <= 0.0 {
        return 0.0;
    }
    (-pe + disc.sqrt()).max(0.0)
}

/// Entry and exit distances of the ray `p + ρe` (ρ ≥ 0) through the ball `B_R(c)`.
pub fn ray_ball_interval(p: &[f64], e: &[f64], c: &[f64], radius: f64) -> Option<(f64, f64)> {
    let mut pe = 0.0;
    let mut pp = 0.0;
    for i in 0..p.len() {
        let q = p[i] - c[i];
        pe += q * e[i];
        pp += q * q;
    }
    let disc = pe * pe - (pp - radius * radius);
    if disc <= 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let (t0, t1) = (-pe - r, -pe + r);
    if t1 <= 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

/// Exit distance from `p` along `e` for the axis-aligned box `[lo, hi]`.
pub fn ray_exit_box(p: &[f64], e: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut t = f64::INFINITY;
    for i in 0..p.len() {
        if e[i] > 0.0 {
            t = t.min((hi[i] - p[i]) / e[i]);
        } else if e[i] < 0.0 {
            t = t.min((lo[i] - p[i]) / e[i]);
        }
    }
    t.max(0.0)
}

/// Radical inverse of `i` in base `b` (Halton coordinate).
pub fn halton(mut i: usize, b: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Low-discrepancy points in `B_R(0) ⊂ ℝ^d`, plus the origin and
/// boundary-adjacent points along the coordinate axes.
pub fn ball_probes(d: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    const BASES: [usize; 3] = [2, 3, 5];
    let mut out = vec![vec![0.0; d]];
    for axis in 0..d {
        let mut p = vec![0.0; d];
        p[axis] = 0.95 * radius;
        out.push(p.clone());
        p[axis] = -0.95 * radius;
        out.push(p);
    }
    let mut i = 1;
    while out.len() < count {
        let p: Vec<f64> = (0..d).map(|k| (2.0 * halton(i, BASES[k]) - 1.0) * radius).collect();
        if p.iter().map(|c| c * c).sum::<f64>() < radius * radius {
            out.push(p);
        }
        i += 1;
    }
    out.truncate(count.max(1));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let v = gl(0.0, 2.0, 4, |x| x.powi(7));
        assert_relative_eq!(v, 2f64.powi(8) / 8.0, max_relative = 1e-13);
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0);
        assert_relative_eq!(unit_ball_volume(2), PI, max_relative = 1e-15);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(3), 4.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn adaptive_handles_a_jump() {
        let (v, _) = adaptive_gl(0.0, 1.0, 2, 1e-10, 0.0, 50, |x| {
            let y = if x < 1.0 / 3.0 { 1.0 } else { 0.0 };
            (y, y)
        })
        .unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn half_sphere_pairs_cover_the_sphere() {
        for d in 1..=3 {
            let (v, _) = half_sphere_integral(d, 1e-10, 0.0, |_| (2.0, 2.0)).unwrap();
            assert_relative_eq!(v, sphere_area(d), max_relative = 1e-9);
        }
    }

    #[test]
    fn tail_of_power_law_in_each_dimension() {
        // ∫_{|w|>1} |w|^{-d-1} dw = |S^{d-1}|.
        let eng = RadialEngine::default();
        for d in 1..=3 {
            let h = move |w: &[f64]| w.iter().map(|c| c * c).sum::<f64>().sqrt().powi(-(d as i32) - 1);
            let r = eng.integrate(d, 1.0, 1.0, f64::INFINITY, &full_range, &h).unwrap();
            assert_relative_eq!(r.value, sphere_area(d), max_relative = 1e-6);
        }
    }

    #[test]
    fn inner_sweep_extrapolates_to_the_origin() {
        // ∫_{|w|<1} |w|^{1-d} dw = |S^{d-1}|.
        let eng = RadialEngine::default();
        for d in 1..=3 {
            let h = move |w: &[f64]| w.iter().map(|c| c * c).sum::<f64>().sqrt().powi(1 - d as i32);
            let r = eng.integrate(d, 1.0, 0.0, 1.0, &full_range, &h).unwrap();
            assert_relative_eq!(r.value, sphere_area(d), max_relative = 1e-6);
        }
    }

    #[test]
    fn clipped_ball_volume() {
        let eng = RadialEngine::default();
        let c = [0.3, -0.2];
        let range = move |e: &[f64]| (0.0, ray_exit_ball(&[0.0, 0.0], e, &c, 1.0));
        let r = eng.integrate(2, 1.0, 0.0, 2.0, &range, &|_| 1.0).unwrap();
        assert_relative_eq!(r.value, PI, max_relative = 1e-6);
    }

    #[test]
    fn direction_sample_is_symmetric() {
        for d in 1..=3 {
            let s = direction_sample(d, 20);
            for p in &s {
                let neg: Vec<f64> = p.iter().map(|c| -c).collect();
                assert!(s.iter().any(|q| q.iter().zip(&neg).all(|(a, b)| (a - b).abs() < 1e-15)));
            }
        }
    }

    #[test]
    fn probes_stay_in_the_ball() {
        for p in ball_probes(2, 1.5, 30) {
            assert!(p.iter().map(|c| c * c).sum::<f64>().sqrt() < 1.5);
        }
    }
}
