//! Covering machinery for slanted cylinders: Vitali selection, the kinetic
//! maximal function, interval stacking, stacked-cylinder overlap and the
//! ink-spots audit on voxelized sets.

use std::ops::{Add, Mul, Sub};

use num_traits::{FromPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{containment_factor, group_inverse, group_product, PhasePoint, SlantedCylinder};
use crate::voxel::{VoxelField, VoxelGrid, VoxelSet};

/// Greedy selection by descending radius of a pairwise disjoint subfamily.
///
/// Every unselected member meets a selected one of at least its radius, so
/// it lies in that cylinder scaled by [`containment_factor`].
pub fn vitali_select(family: &[SlantedCylinder]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..family.len()).collect();
    order.sort_by(|&a, &b| family[b].radius.total_cmp(&family[a].radius).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if chosen.iter().all(|&j| !family[i].intersects(&family[j])) {
            chosen.push(i);
        }
    }
    chosen
}

/// Uniform sample from a slanted cylinder.
pub fn sample_cylinder(q: &SlantedCylinder, rng: &mut impl Rng) -> PhasePoint {
    let d = q.dim();
    let mut ball = |r: f64| loop {
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-r..r)).collect();
        if p.iter().map(|c| c * c).sum::<f64>() < r * r {
            return p;
        }
    };
    let dx = ball(q.x_radius());
    let dv = ball(q.radius);
    let t = q.top.t - q.duration() * rng.gen::<f64>();
    let c = q.x_center_at(t);
    PhasePoint {
        t,
        x: c.iter().zip(&dx).map(|(a, b)| a + b).collect(),
        v: q.top.v.iter().zip(&dv).map(|(a, b)| a + b).collect(),
    }
}

/// Outcome of a Monte-Carlo audit of the Vitali covering property.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VitaliAudit {
    pub selected: Vec<usize>,
    pub k: f64,
    pub samples: usize,
    pub uncovered: usize,
    pub pairwise_disjoint: bool,
}

/// Samples `samples` points from the family and checks they lie in the
/// union of the `k`-scaled selected cylinders.
pub fn vitali_audit(family: &[SlantedCylinder], samples: usize, rng: &mut impl Rng) -> Result<VitaliAudit> {
    let selected = vitali_select(family);
    if family.is_empty() {
        return Ok(VitaliAudit { selected, k: 0.0, samples: 0, uncovered: 0, pairwise_disjoint: true });
    }
    let k = containment_factor(family[0].s);
    let scaled: Vec<SlantedCylinder> = selected.iter().map(|&i| family[i].scale(k)).collect::<Result<_>>()?;
    let mut uncovered = 0;
    for n in 0..samples {
        let q = &family[n % family.len()];
        let z = sample_cylinder(q, rng);
        if !scaled.iter().any(|c| c.contains(&z)) {
            uncovered += 1;
        }
    }
    let pairwise_disjoint = selected
        .iter()
        .enumerate()
        .all(|(a, &i)| selected[a + 1..].iter().all(|&j| !family[i].intersects(&family[j])));
    Ok(VitaliAudit { selected, k, samples, uncovered, pairwise_disjoint })
}

/// Relative positions `w ∈ Q_r(0)` whose inverse translates give cylinders
/// containing a given point: `z ∈ Q_r(z ∘ w⁻¹)`.
fn probe_offsets(r: f64, s: f64) -> Vec<PhasePoint> {
    let (dur, xr) = (r.powf(2.0 * s), r.powf(1.0 + 2.0 * s));
    let mut out = Vec::new();
    for ft in [0.0, -0.5, -0.95] {
        for fx in [-0.8, 0.0, 0.8] {
            for fv in [-0.8, 0.0, 0.8] {
                // w = (τ, ξ, ν) with |ξ| < r^{1+2s} since Q_r(0) is unslanted.
                out.push(PhasePoint::new(ft * dur, vec![fx * xr], vec![fv * r]));
            }
        }
    }
    out
}

/// Kinetic maximal function `sup_{Q ∋ z} ⨍_{Q ∩ Ω} |f|`.
///
/// Probes cylinders of radius in `radii` from a fixed 27-point stencil of
/// relative positions; averages are taken over the voxels of `Q ∩ Ω`.
pub struct MaximalFunction {
    field: crate::voxel::SlicePrefix,
    ones: crate::voxel::SlicePrefix,
    grid: VoxelGrid,
    radii: Vec<f64>,
    s: f64,
}

impl MaximalFunction {
    pub fn new(f: &VoxelField, radii: &[f64], s: f64) -> Self {
        let full = VoxelSet::from_predicate(f.grid.clone(), |_, _, _| true);
        Self { field: f.prefix(), ones: full.prefix(), grid: f.grid.clone(), radii: radii.to_vec(), s }
    }

    pub fn value(&self, z: &PhasePoint) -> Result<f64> {
        let inside = (0..3).all(|a| {
            let c = [z.t, z.x[0], z.v[0]][a];
            c >= self.grid.origin[a] && c <= self.grid.origin[a] + self.grid.spacing[a] * self.grid.dims[a] as f64
        });
        if !inside {
            return Err(Error::Precondition("point outside the voxel domain".into()));
        }
        let mut best: f64 = 0.0;
        for &r in &self.radii {
            for w in probe_offsets(r, self.s) {
                let top = group_product(z, &group_inverse(&w));
                let q = SlantedCylinder::new(top, r, self.s)?;
                let n = self.ones.sum(&q);
                if n > 0.0 {
                    best = best.max(self.field.sum(&q) / n);
                }
            }
        }
        Ok(best)
    }
}

/// Maximal function at a single point; see [`MaximalFunction`].
pub fn maximal_value(f: &VoxelField, z: &PhasePoint, radii: &[f64], s: f64) -> Result<f64> {
    MaximalFunction::new(f, radii, s).value(z)
}

/// Weak-type audit `|{Mf > λ}|·λ/‖f‖_{L¹}` against `2k^{2(d+ds+s)}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaximalAudit {
    pub lambda: f64,
    pub level_measure: f64,
    pub l1: f64,
    pub ratio: f64,
    pub bound: f64,
}

pub fn maximal_inequality_audit(f: &VoxelField, radii: &[f64], s: f64, lambda: f64) -> Result<MaximalAudit> {
    let mf = MaximalFunction::new(f, radii, s);
    let g = &f.grid;
    let [nt, nx, nv] = g.dims;
    let counts: Vec<usize> = (0..nt)
        .into_par_iter()
        .map(|i| {
            let mut c = 0;
            for j in 0..nx {
                for k in 0..nv {
                    let z = PhasePoint::new(g.center(0, i), vec![g.center(1, j)], vec![g.center(2, k)]);
                    if mf.value(&z).unwrap_or(0.0) > lambda {
                        c += 1;
                    }
                }
            }
            c
        })
        .collect();
    let level_measure = counts.iter().sum::<usize>() as f64 * g.voxel_volume();
    let l1 = f.l1();
    let k = containment_factor(s);
    let d = 1.0;
    let ratio = if l1 > 0.0 { level_measure * lambda / l1 } else { 0.0 };
    Ok(MaximalAudit { lambda, level_measure, l1, ratio, bound: 2.0 * k.powf(2.0 * (d + d * s + s)) })
}

/// Measure of a union of intervals given as `(lo, hi)`.
fn union_length<T>(mut iv: Vec<(T, T)>) -> T
where
    T: Copy + PartialOrd + Zero + Add<Output = T> + Sub<Output = T>,
{
    iv.retain(|(a, b)| a < b);
    iv.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("comparable endpoints"));
    let mut total = T::zero();
    let mut cur: Option<(T, T)> = None;
    for (a, b) in iv {
        match cur {
            Some((c0, c1)) if a <= c1 => cur = Some((c0, if b > c1 { b } else { c1 })),
            Some((c0, c1)) => {
                total = total + (c1 - c0);
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((c0, c1)) = cur {
        total = total + (c1 - c0);
    }
    total
}

/// `(|∪(a_k, a_k + m h_k)|, |∪(a_k − h_k, a_k]|)` in the arithmetic of `T`.
///
/// Exact for integer or rational `T`; the first is at least `m/(m+1)` times
/// the second.
pub fn interval_stack_measures<T>(intervals: &[(T, T)], m: u32) -> (T, T)
where
    T: Copy + PartialOrd + Zero + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + FromPrimitive,
{
    let mt = T::from_u32(m).expect("multiplicity representable");
    let delayed = union_length(intervals.iter().map(|&(a, h)| (a, a + mt * h)).collect());
    let original = union_length(intervals.iter().map(|&(a, h)| (a - h, a)).collect());
    (delayed, original)
}

/// Voxel measure ratio `|∪Q̄_j^m| / |∪Q_j|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackedRatio {
    pub ratio: f64,
    pub bound: f64,
    /// Boundary-layer voxels of both unions relative to `|∪Q_j|`.
    pub delta_grid: f64,
    pub holds: bool,
}

/// Minimum voxels across each axis extent of the smallest cylinder.
pub const MIN_VOXELS_PER_RADIUS: f64 = 8.0;

pub fn stacked_union_ratio(family: &[SlantedCylinder], m: u32, grid: &VoxelGrid) -> Result<StackedRatio> {
    for q in family {
        if q.dim() != 1 {
            return Err(Error::Dimension(q.dim()));
        }
        let need = [q.duration(), 2.0 * q.x_radius(), 2.0 * q.radius];
        for a in 0..3 {
            if need[a] / grid.spacing[a] < MIN_VOXELS_PER_RADIUS {
                return Err(Error::Precondition(format!(
                    "radius {} spans {:.2} voxels on axis {a}; at least {MIN_VOXELS_PER_RADIUS} required",
                    q.radius,
                    need[a] / grid.spacing[a]
                )));
            }
        }
    }
    let mut base = VoxelSet::empty(grid.clone());
    let mut stacked = VoxelSet::empty(grid.clone());
    for q in family {
        base.insert(q);
        stacked.insert(&q.stacked(m)?);
    }
    let nb = base.count() as f64;
    if nb == 0.0 {
        return Err(Error::Precondition("family does not meet the grid".into()));
    }
    let ratio = stacked.count() as f64 / nb;
    let delta_grid = (base.boundary_count() + stacked.boundary_count()) as f64 / nb;
    let bound = m as f64 / (m as f64 + 1.0);
    Ok(StackedRatio { ratio, bound, delta_grid, holds: ratio >= bound - delta_grid })
}

/// Restriction on the candidate family of the ink-spots audit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub enum InkSpotsMode {
    /// Candidates with `Q ⊆ Q_1` and `Q̄^m ⊆ Q_1`.
    Theorem,
    /// Candidates with `Q ⊆ Q_1` and radius below `r0`; `F` may leak out of `Q_1`.
    Leakage { r0: f64 },
}

/// Candidate enumeration for the ink-spots audit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DyadicFamily {
    /// Radii `2^{-j}` for `j` in this range (inclusive).
    pub j_min: u32,
    pub j_max: u32,
    /// Lattice step as a fraction of each axis half-extent.
    pub step_fraction: f64,
}

impl Default for DyadicFamily {
    fn default() -> Self {
        Self { j_min: 1, j_max: 2, step_fraction: 0.5 }
    }
}

/// Whether the closure of `q` lies in the closure of `Q_1(0)`.
fn inside_unit(q: &SlantedCylinder) -> bool {
    let (t0, t1) = SlantedCylinder::time_range(q);
    if t0 < -1.0 || t1 > 0.0 || q.top.v[0].abs() + q.radius > 1.0 {
        return false;
    }
    // |x-center(t)| + r^{1+2s} is convex in t; check both endpoints.
    [t0, t1].iter().all(|&t| q.x_center_at(t)[0].abs() + q.x_radius() <= 1.0)
}

fn stacked_inside_unit(q: &SlantedCylinder, m: u32) -> bool {
    let t1 = q.top.t + m as f64 * q.duration();
    if t1 > 0.0 {
        return false;
    }
    let xr = (m as f64 + 2.0) * q.x_radius();
    [q.top.t, t1].iter().all(|&t| q.x_center_at(t)[0].abs() + xr <= 1.0)
}

/// Enumerates lattice cylinders of the dyadic family admissible for `mode`.
pub fn dyadic_candidates(s: f64, m: u32, family: &DyadicFamily, mode: InkSpotsMode) -> Result<Vec<SlantedCylinder>> {
    let mut out = Vec::new();
    for j in family.j_min..=family.j_max {
        let r = 0.5f64.powi(j as i32);
        if let InkSpotsMode::Leakage { r0 } = mode {
            if r >= r0 {
                continue;
            }
        }
        let (dur, xr) = (r.powf(2.0 * s), r.powf(1.0 + 2.0 * s));
        let (st, sx, sv) = (family.step_fraction * dur, family.step_fraction * xr, family.step_fraction * r);
        let nt = ((1.0 - dur) / st).floor() as i64;
        let nv = ((1.0 - r) / sv).floor() as i64;
        let nx = ((1.0 + 1.0) / sx).ceil() as i64;
        for it in 0..=nt {
            let t = -1.0 + dur + it as f64 * st;
            for iv in -nv..=nv {
                let v = iv as f64 * sv;
                for ix in -nx..=nx {
                    let x = ix as f64 * sx;
                    let q = SlantedCylinder::new(PhasePoint::new(t, vec![x], vec![v]), r, s)?;
                    let ok = inside_unit(&q) && (mode != InkSpotsMode::Theorem || stacked_inside_unit(&q, m));
                    if ok {
                        out.push(q);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of an ink-spots audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InkSpotsReport {
    pub measure_e: f64,
    pub measure_f: f64,
    /// `|F ∩ Q_1|`, used by the leakage bound.
    pub measure_f_in_q1: f64,
    pub measure_g: f64,
    pub candidates: usize,
    pub qualifying: usize,
    /// Qualifying cylinders whose stacked version is not inside `F`.
    pub hypothesis_violations: usize,
    pub ratio: f64,
    pub m: u32,
    pub mu: f64,
    /// Largest `c` with `|E| ≤ (m+1)/m·(1−cμ)·(|F| + leakage)`.
    pub c_sup: f64,
    /// `min(c_sup, 1)`: a value in `(0, 1]` certified by this instance when `c_sup > 0`.
    pub c: f64,
    /// Leakage measure added to `|F ∩ Q_1|`; zero for the plain theorem.
    pub leakage: f64,
    pub holds: bool,
}

/// Audits the ink-spots conclusion for `E ⊆ F` on a common grid.
pub fn inkspots_audit(
    e: &VoxelSet,
    f: &VoxelSet,
    mu: f64,
    m: u32,
    s: f64,
    family: &DyadicFamily,
    mode: InkSpotsMode,
) -> Result<InkSpotsReport> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParameter(format!("μ must lie in (0,1), got {mu}")));
    }
    if m < 1 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !e.is_subset(f)? {
        return Err(Error::Precondition("E must be contained in F".into()));
    }
    let grid = &e.grid;
    let unit = SlantedCylinder::new(PhasePoint::identity(1), 1.0, s)?;
    let mut q1 = VoxelSet::empty(grid.clone());
    q1.insert(&unit);
    if !e.is_subset(&q1)? {
        return Err(Error::Precondition("E must be contained in Q_1".into()));
    }
    let candidates = dyadic_candidates(s, m, family, mode)?;
    let qualifying = qualifying_family(e, &candidates, mu);
    let fp = f.prefix();
    let mut g = VoxelSet::empty(grid.clone());
    let mut violations = 0;
    for q in &qualifying {
        let st = q.stacked(m)?;
        g.insert(&st);
        if fp.sum(&st) < grid.count(&st) as f64 {
            violations += 1;
        }
    }
    let (me, mf) = (e.measure(), f.measure());
    let mf_q1 = f.intersection(&q1)?.measure();
    let (rhs_base, leakage) = match mode {
        InkSpotsMode::Theorem => (mf, 0.0),
        InkSpotsMode::Leakage { r0 } => {
            // |(-1, m r0^{2s}] × B_{1+m r0^{2s}} × B_1| − |Q_1|, the room G has outside Q_1.
            let a = m as f64 * r0.powf(2.0 * s);
            let outer = (1.0 + a) * 2.0 * (1.0 + a) * 2.0;
            (mf_q1, outer - unit.measure())
        }
    };
    let mf1 = m as f64 / (m as f64 + 1.0);
    let denom = rhs_base + leakage;
    let c_sup = if denom > 0.0 { (1.0 - mf1 * me / denom) / mu } else { f64::INFINITY };
    let c = c_sup.min(1.0);
    let holds = me == 0.0 || (c > 0.0 && me <= (1.0 / mf1) * (1.0 - c * mu) * denom * (1.0 + 1e-12));
    Ok(InkSpotsReport {
        measure_e: me,
        measure_f: mf,
        measure_f_in_q1: mf_q1,
        measure_g: g.measure(),
        candidates: candidates.len(),
        qualifying: qualifying.len(),
        hypothesis_violations: violations,
        ratio: if mf > 0.0 { me / mf } else { 0.0 },
        m,
        mu,
        c_sup,
        c,
        leakage,
        holds,
    })
}

/// Candidates with `|Q ∩ E| ≥ (1 − μ)|Q|` in voxel counts.
pub fn qualifying_family(e: &VoxelSet, candidates: &[SlantedCylinder], mu: f64) -> Vec<SlantedCylinder> {
    let ep = e.prefix();
    let grid = &e.grid;
    let flags: Vec<bool> = candidates
        .par_iter()
        .map(|q| {
            let n = grid.count(q) as f64;
            n > 0.0 && ep.sum(q) >= (1.0 - mu) * n
        })
        .collect();
    candidates.iter().zip(flags).filter(|(_, f)| *f).map(|(q, _)| q.clone()).collect()
}

/// Seeded `(E, F)` instance: `E` a union of random cylinders inside `Q_1`
/// and `F = E ∪ ⋃ Q̄^m` over the qualifying candidates, so the hypothesis
/// holds on the audited family by construction.
pub fn inkspots_instance(
    grid: &VoxelGrid,
    s: f64,
    m: u32,
    mu: f64,
    family: &DyadicFamily,
    mode: InkSpotsMode,
    seeds: usize,
    rng: &mut impl Rng,
) -> Result<(VoxelSet, VoxelSet)> {
    let mut e = VoxelSet::empty(grid.clone());
    let mut placed = 0;
    let mut attempts = 0;
    while placed < seeds && attempts < 10_000 {
        attempts += 1;
        let r = 0.5f64.powf(rng.gen_range(family.j_min as f64..family.j_max as f64 + 1.0));
        let t = rng.gen_range(-1.0 + r.powf(2.0 * s)..0.0);
        let v = rng.gen_range(-(1.0 - r)..(1.0 - r));
        let x = rng.gen_range(-1.0..1.0);
        let q = SlantedCylinder::new(PhasePoint::new(t, vec![x], vec![v]), r, s)?;
        if inside_unit(&q) {
            e.insert(&q);
            placed += 1;
        }
    }
    let candidates = dyadic_candidates(s, m, family, mode)?;
    let mut f = e.clone();
    for q in qualifying_family(&e, &candidates, mu) {
        f.insert(&q.stacked(m)?);
    }
    Ok((e, f))
}
