//! Voxelized subsets of one-dimensional kinetic phase space `(t, x, v)`.
//!
//! A voxel belongs to a set when its center does. Cylinders rasterize slice
//! by slice: for fixed `t` both the position and the velocity section are
//! open intervals, so each slice is an axis-aligned rectangle of voxels.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SlantedCylinder, StackedCylinder};

const VOXEL_MAGIC: &[u8; 16] = b"KINETIC-VOXSET01";

/// Uniform grid over a box in `(t, x, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

/// Inclusive index rectangle `[j0, j1] × [k0, k1]` on slice `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceRect {
    pub i: usize,
    pub j0: usize,
    pub j1: usize,
    pub k0: usize,
    pub k1: usize,
}

impl SliceRect {
    pub fn count(&self) -> usize {
        (self.j1 - self.j0 + 1) * (self.k1 - self.k0 + 1)
    }
}

/// A phase-space region whose every time slice is a rectangle.
pub trait SlabShape {
    /// `(lo, hi)` with slices kept when `lo < t ≤ hi`.
    fn time_range(&self) -> (f64, f64);
    /// Open position interval at time `t`: center and half-width.
    fn x_section(&self, t: f64) -> (f64, f64);
    /// Open velocity interval: center and half-width.
    fn v_section(&self) -> (f64, f64);
}

impl SlabShape for SlantedCylinder {
    fn time_range(&self) -> (f64, f64) {
        SlantedCylinder::time_range(self)
    }
    fn x_section(&self, t: f64) -> (f64, f64) {
        (self.x_center_at(t)[0], self.x_radius())
    }
    fn v_section(&self) -> (f64, f64) {
        (self.top.v[0], self.radius)
    }
}

impl SlabShape for StackedCylinder {
    fn time_range(&self) -> (f64, f64) {
        StackedCylinder::time_range(self)
    }
    fn x_section(&self, t: f64) -> (f64, f64) {
        (self.base.x_center_at(t)[0], self.x_radius())
    }
    fn v_section(&self) -> (f64, f64) {
        (self.base.top.v[0], self.base.radius)
    }
}

impl VoxelGrid {
    /// Grid of `dims` voxels covering `[lo, hi]` on each axis.
    pub fn new(lo: [f64; 3], hi: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if dims[a] == 0 || !(hi[a] > lo[a]) {
                return Err(Error::InvalidParameter(format!("axis {a}: empty box or zero resolution")));
            }
        }
        let spacing = [0, 1, 2].map(|a| (hi[a] - lo[a]) / dims[a] as f64);
        Ok(Self { origin: lo, spacing, dims })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn center(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.spacing[axis]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Indices whose centers satisfy `keep`, assuming `keep` selects a
    /// contiguous run around the estimate `[a, b]` (in coordinates).
    fn run(&self, axis: usize, a: f64, b: f64, keep: impl Fn(f64) -> bool) -> Option<(usize, usize)> {
        let n = self.dims[axis] as i64;
        let h = self.spacing[axis];
        let o = self.origin[axis];
        let mut lo = (((a - o) / h - 0.5).floor() as i64).clamp(0, n - 1);
        let mut hi = (((b - o) / h - 0.5).ceil() as i64).clamp(0, n - 1);
        let c = |i: i64| o + (i as f64 + 0.5) * h;
        // Trim to the exact predicate; the estimate is off by at most one.
        while lo <= hi && !keep(c(lo)) {
            lo += 1;
        }
        while hi >= lo && !keep(c(hi)) {
            hi -= 1;
        }
        if lo > hi {
            return None;
        }
        while lo > 0 && keep(c(lo - 1)) {
            lo -= 1;
        }
        while hi < n - 1 && keep(c(hi + 1)) {
            hi += 1;
        }
        Some((lo as usize, hi as usize))
    }

    /// Rasterization of a slab shape as one rectangle per kept slice.
    pub fn slices(&self, shape: &impl SlabShape) -> Vec<SliceRect> {
        let (tlo, thi) = shape.time_range();
        let Some((i0, i1)) = self.run(0, tlo, thi, |t| t > tlo && t <= thi) else {
            return Vec::new();
        };
        let (vc, vr) = shape.v_section();
        let Some((k0, k1)) = self.run(2, vc - vr, vc + vr, |v| (v - vc).abs() < vr) else {
            return Vec::new();
        };
        (i0..=i1)
            .filter_map(|i| {
                let t = self.center(0, i);
                let (xc, xr) = shape.x_section(t);
                self.run(1, xc - xr, xc + xr, |x| (x - xc).abs() < xr)
                    .map(|(j0, j1)| SliceRect { i, j0, j1, k0, k1 })
            })
            .collect()
    }

    /// Number of voxel centers of this grid inside `shape`.
    pub fn count(&self, shape: &impl SlabShape) -> usize {
        self.slices(shape).iter().map(SliceRect::count).sum()
    }

    /// Identical origin, spacing and resolution.
    pub fn same_as(&self, other: &VoxelGrid) -> bool {
        self == other
    }
}

/// Occupancy bitmap on a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub grid: VoxelGrid,
    bits: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct VoxelHeader {
    axes: [String; 3],
    origin: [f64; 3],
    spacing: [f64; 3],
    dims: [usize; 3],
    bit_order: String,
}

impl VoxelSet {
    pub fn empty(grid: VoxelGrid) -> Self {
        let words = grid.len().div_ceil(64);
        Self { grid, bits: vec![0; words] }
    }

    pub fn from_predicate(grid: VoxelGrid, pred: impl Fn(f64, f64, f64) -> bool + Sync) -> Self {
        let [nt, nx, nv] = grid.dims;
        let rows: Vec<Vec<usize>> = (0..nt)
            .into_par_iter()
            .map(|i| {
                let t = grid.center(0, i);
                let mut hits = Vec::new();
                for j in 0..nx {
                    let x = grid.center(1, j);
                    for k in 0..nv {
                        if pred(t, x, grid.center(2, k)) {
                            hits.push(grid.index(i, j, k));
                        }
                    }
                }
                hits
            })
            .collect();
        let mut set = Self::empty(grid);
        for idx in rows.into_iter().flatten() {
            set.set(idx, true);
        }
        set
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, idx: usize, on: bool) {
        if on {
            self.bits[idx / 64] |= 1 << (idx % 64);
        } else {
            self.bits[idx / 64] &= !(1 << (idx % 64));
        }
    }

    pub fn get3(&self, i: usize, j: usize, k: usize) -> bool {
        self.get(self.grid.index(i, j, k))
    }

    pub fn insert(&mut self, shape: &impl SlabShape) {
        for r in self.grid.slices(shape) {
            for j in r.j0..=r.j1 {
                for k in r.k0..=r.k1 {
                    let idx = self.grid.index(r.i, j, k);
                    self.set(idx, true);
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.voxel_volume()
    }

    fn combine(&self, other: &Self, op: impl Fn(u64, u64) -> u64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("voxel sets live on different grids".into()));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| op(*a, *b)).collect();
        Ok(Self { grid: self.grid.clone(), bits })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a & !b)
    }

    pub fn is_subset(&self, other: &Self) -> Result<bool> {
        Ok(self.difference(other)?.count() == 0)
    }

    /// Voxels of the set with a face neighbor outside it (or on the grid edge).
    pub fn boundary_count(&self) -> usize {
        let [nt, nx, nv] = self.grid.dims;
        (0..nt)
            .into_par_iter()
            .map(|i| {
                let mut c = 0;
                for j in 0..nx {
                    for k in 0..nv {
                        if !self.get3(i, j, k) {
                            continue;
                        }
                        let edge = i == 0 || j == 0 || k == 0 || i + 1 == nt || j + 1 == nx || k + 1 == nv;
                        if edge
                            || !self.get3(i - 1, j, k)
                            || !self.get3(i + 1, j, k)
                            || !self.get3(i, j - 1, k)
                            || !self.get3(i, j + 1, k)
                            || !self.get3(i, j, k - 1)
                            || !self.get3(i, j, k + 1)
                        {
                            c += 1;
                        }
                    }
                }
                c
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    }

    /// Per-slice two-dimensional prefix counts.
    pub fn prefix(&self) -> SlicePrefix {
        let [nt, nx, nv] = self.grid.dims;
        let slices: Vec<Vec<f64>> = (0..nt)
            .into_par_iter()
            .map(|i| {
                let mut p = vec![0.0; (nx + 1) * (nv + 1)];
                for j in 0..nx {
                    let mut row = 0.0;
                    for k in 0..nv {
                        row += if self.get3(i, j, k) { 1.0 } else { 0.0 };
                        p[(j + 1) * (nv + 1) + k + 1] = p[j * (nv + 1) + k + 1] + row;
                    }
                }
                p
            })
            .collect();
        SlicePrefix { grid: self.grid.clone(), slices }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header = VoxelHeader {
            axes: ["t".into(), "x".into(), "v".into()],
            origin: self.grid.origin,
            spacing: self.grid.spacing,
            dims: self.grid.dims,
            bit_order: "row-major (t,x,v); bit b of byte n is voxel 8n+b".into(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(VOXEL_MAGIC)?;
        f.write_all(&(json.len() as u32).to_le_bytes())?;
        f.write_all(&json)?;
        let nbytes = self.grid.len().div_ceil(8);
        let bytes: Vec<u8> = self.bits.iter().flat_map(|w| w.to_le_bytes()).take(nbytes).collect();
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 16];
        f.read_exact(&mut magic)?;
        if &magic != VOXEL_MAGIC {
            return Err(Error::Format("not a voxel-set file".into()));
        }
        let mut len = [0u8; 4];
        f.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        f.read_exact(&mut json)?;
        let h: VoxelHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        let grid = VoxelGrid { origin: h.origin, spacing: h.spacing, dims: h.dims };
        let mut bytes = vec![0u8; grid.len().div_ceil(8)];
        f.read_exact(&mut bytes)?;
        let mut set = Self::empty(grid);
        for (w, chunk) in set.bits.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_le_bytes(buf);
        }
        Ok(set)
    }
}

/// Nonnegative sampled density on a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    pub grid: VoxelGrid,
    pub values: Vec<f64>,
}

impl VoxelField {
    pub fn from_fn(grid: VoxelGrid, f: impl Fn(f64, f64, f64) -> f64 + Sync) -> Self {
        let [nt, nx, nv] = grid.dims;
        let values = (0..nt)
            .into_par_iter()
            .flat_map_iter(|i| {
                let g = &grid;
                let f = &f;
                (0..nx).flat_map(move |j| {
                    (0..nv).map(move |k| f(g.center(0, i), g.center(1, j), g.center(2, k)))
                })
            })
            .collect();
        Self { grid, values }
    }

    pub fn indicator(set: &VoxelSet) -> Self {
        let values = (0..set.grid.len()).map(|i| if set.get(i) { 1.0 } else { 0.0 }).collect();
        Self { grid: set.grid.clone(), values }
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.voxel_volume()
    }

    /// Per-slice prefix sums of `|f|`.
    pub fn prefix(&self) -> SlicePrefix {
        let [nt, nx, nv] = self.grid.dims;
        let slices = (0..nt)
            .into_par_iter()
            .map(|i| {
                let mut p = vec![0.0; (nx + 1) * (nv + 1)];
                for j in 0..nx {
                    let mut row = 0.0;
                    for k in 0..nv {
                        row += self.values[self.grid.index(i, j, k)].abs();
                        p[(j + 1) * (nv + 1) + k + 1] = p[j * (nv + 1) + k + 1] + row;
                    }
                }
                p
            })
            .collect();
        SlicePrefix { grid: self.grid.clone(), slices }
    }
}

/// Rectangle sums over each time slice in O(1).
#[derive(Debug, Clone)]
pub struct SlicePrefix {
    grid: VoxelGrid,
    slices: Vec<Vec<f64>>,
}

impl SlicePrefix {
    pub fn rect(&self, r: &SliceRect) -> f64 {
        let w = self.grid.dims[2] + 1;
        let p = &self.slices[r.i];
        p[(r.j1 + 1) * w + r.k1 + 1] - p[r.j0 * w + r.k1 + 1] - p[(r.j1 + 1) * w + r.k0] + p[r.j0 * w + r.k0]
    }

    /// Sum over the voxels of `shape` (counts for sets, `∑|f|` for fields).
    pub fn sum(&self, shape: &impl SlabShape) -> f64 {
        self.grid.slices(shape).iter().map(|r| self.rect(r)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PhasePoint;

    fn grid() -> VoxelGrid {
        VoxelGrid::new([-1.0, -2.0, -1.0], [1.0, 2.0, 1.0], [24, 48, 24]).unwrap()
    }

    fn cyl(t: f64, x: f64, v: f64, r: f64) -> SlantedCylinder {
        SlantedCylinder::new(PhasePoint::new(t, vec![x], vec![v]), r, 0.5).unwrap()
    }

    #[test]
    fn rasterization_matches_center_membership() {
        let g = grid();
        for q in [cyl(0.3, 0.2, 0.4, 0.7), cyl(-0.2, -1.0, -0.6, 0.35), cyl(0.9, 1.9, 0.9, 0.5)] {
            let brute = VoxelSet::from_predicate(g.clone(), |t, x, v| {
                q.contains(&PhasePoint::new(t, vec![x], vec![v]))
            });
            let mut fast = VoxelSet::empty(g.clone());
            fast.insert(&q);
            assert_eq!(brute, fast);
            assert_eq!(g.count(&q), brute.count());
            let st = q.stacked(2).unwrap();
            let brute = VoxelSet::from_predicate(g.clone(), |t, x, v| {
                st.contains(&PhasePoint::new(t, vec![x], vec![v]))
            });
            assert_eq!(g.count(&st), brute.count());
        }
    }

    #[test]
    fn set_algebra_and_measure() {
        let g = grid();
        let mut a = VoxelSet::empty(g.clone());
        a.insert(&cyl(0.0, 0.0, 0.0, 0.8));
        let mut b = VoxelSet::empty(g.clone());
        b.insert(&cyl(0.2, 0.3, 0.2, 0.6));
        let u = a.union(&b).unwrap();
        let i = a.intersection(&b).unwrap();
        assert_eq!(u.count() + i.count(), a.count() + b.count());
        assert_eq!(a.difference(&b).unwrap().count(), a.count() - i.count());
        assert!(i.is_subset(&u).unwrap());
        assert_eq!(a.measure(), a.count() as f64 * g.voxel_volume());
        let other = VoxelGrid::new([0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
        assert!(a.union(&VoxelSet::empty(other)).is_err());
    }

    #[test]
    fn prefix_sums_match_counts() {
        let g = grid();
        let mut a = VoxelSet::empty(g.clone());
        a.insert(&cyl(0.0, 0.0, 0.0, 0.8));
        let p = a.prefix();
        let q = cyl(0.4, 0.5, 0.3, 0.5);
        let mut qs = VoxelSet::empty(g.clone());
        qs.insert(&q);
        assert_eq!(p.sum(&q) as usize, a.intersection(&qs).unwrap().count());
    }

    #[test]
    fn file_round_trip() {
        let mut a = VoxelSet::empty(grid());
        a.insert(&cyl(0.1, 0.0, 0.2, 0.6));
        let dir = std::env::temp_dir().join(format!("voxset-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.vox");
        a.write(&p).unwrap();
        assert_eq!(VoxelSet::read(&p).unwrap(), a);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn boundary_layer_of_a_box() {
        let g = VoxelGrid::new([0.0; 3], [1.0; 3], [6, 6, 6]).unwrap();
        let s = VoxelSet::from_predicate(g, |t, x, v| {
            (0.17..0.83).contains(&t) && (0.17..0.83).contains(&x) && (0.17..0.83).contains(&v)
        });
        assert_eq!(s.count(), 64);
        assert_eq!(s.boundary_count(), 64 - 8);
    }
}
