//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems are `min/max cᵀx` subject to rows `aᵢᵀx {≤,≥,=} bᵢ` and `x ≥ 0`.
//! Duals follow the textbook convention for the minimization form: `Aᵀy ≤ c`,
//! `yᵢ ≥ 0` on `≥` rows, `yᵢ ≤ 0` on `≤` rows, and `bᵀy` equals the optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row, in the convention of the solved sense.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { objective, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Result<()> {
        if coeffs.len() != self.len() {
            return Err(Error::InvalidParameter(format!("row has {} coefficients, expected {}", coeffs.len(), self.len())));
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("row contains a non-finite entry".into()));
        }
        self.rows.push(Row { coeffs, sense, rhs });
        Ok(())
    }

    pub fn minimize(&self) -> Result<Solution> {
        solve(&self.objective, &self.rows)
    }

    /// Duals returned here satisfy `Aᵀy ≥ c` with the row signs reversed.
    pub fn maximize(&self) -> Result<Solution> {
        let neg: Vec<f64> = self.objective.iter().map(|c| -c).collect();
        let mut s = solve(&neg, &self.rows)?;
        s.objective = -s.objective;
        s.duals.iter_mut().for_each(|y| *y = -*y);
        Ok(s)
    }

    /// Signed slack per row; nonnegative iff the row holds.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let ax: f64 = r.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
                match r.sense {
                    Sense::Le => r.rhs - ax,
                    Sense::Ge => ax - r.rhs,
                    Sense::Eq => -(ax - r.rhs).abs(),
                }
            })
            .collect()
    }

    /// Smallest row slack, also counting `x ≥ 0`.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.slacks(x).into_iter().chain(x.iter().copied()).fold(f64::INFINITY, f64::min)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest violation of dual feasibility for the minimization form.
    pub fn dual_violation_min(&self, y: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (r, &yi) in self.rows.iter().zip(y) {
            let bad = match r.sense {
                Sense::Le => yi.max(0.0),
                Sense::Ge => (-yi).max(0.0),
                Sense::Eq => 0.0,
            };
            worst = worst.max(bad);
        }
        for j in 0..self.len() {
            let aty: f64 = self.rows.iter().zip(y).map(|(r, yi)| r.coeffs[j] * yi).sum();
            worst = worst.max(aty - self.objective[j]);
        }
        worst
    }

    pub fn dual_value(&self, y: &[f64]) -> f64 {
        self.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum()
    }
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        let (head, rest) = self.data.split_at_mut(r * w);
        let (prow, tail) = rest.split_at_mut(w);
        for row in head.chunks_mut(w).chain(tail.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(prow.iter()) {
                    *a -= f * b;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (a, b) in self.cost.iter_mut().zip(prow.iter()) {
                *a -= f * b;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn set_cost(&mut self, c: &[f64]) {
        let w = self.width;
        self.cost = c.to_vec();
        self.cost.push(0.0);
        for i in 0..self.rows() {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.cost[j] -= cb * self.data[i * w + j];
                }
            }
        }
    }

    /// Bland iterations over the columns `allowed`; `Ok(false)` means unbounded.
    fn iterate(&mut self, allowed: usize, dtol: f64) -> Result<bool> {
        let rhs = self.width - 1;
        loop {
            let Some(c) = (0..allowed).find(|&j| self.cost[j] < -dtol) else { return Ok(true) };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows() {
                let a = self.at(i, c);
                if a > PIVOT_EPS {
                    let ratio = self.at(i, rhs).max(0.0) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((k, r)) => {
                            let tie = (ratio - r).abs() <= 1e-12 * (1.0 + r.abs());
                            if ratio < r && !tie || tie && self.basis[i] < self.basis[k] {
                                Some((i, ratio))
                            } else {
                                Some((k, r))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else { return Ok(false) };
            self.pivot(r, c);
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Quadrature(format!("simplex exceeded {MAX_PIVOTS} pivots")));
            }
        }
    }
}

fn solve(c: &[f64], rows: &[Row]) -> Result<Solution> {
    let n = c.len();
    // Row normalization: unit max-norm and nonnegative right-hand side.
    let mut kept = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let scale = r.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if scale == 0.0 {
            let ok = match r.sense {
                Sense::Le => r.rhs >= -1e-12,
                Sense::Ge => r.rhs <= 1e-12,
                Sense::Eq => r.rhs.abs() <= 1e-12,
            };
            if !ok {
                return Err(Error::Infeasible(format!("row {i} has no coefficients and cannot hold")));
            }
            continue;
        }
        let flip = r.rhs < 0.0;
        let f = if flip { -1.0 / scale } else { 1.0 / scale };
        let sense = match (r.sense, flip) {
            (Sense::Le, true) => Sense::Ge,
            (Sense::Ge, true) => Sense::Le,
            (s, _) => s,
        };
        kept.push((i, f, sense));
    }
    let m = kept.len();
    let n_slack = kept.iter().filter(|k| k.2 != Sense::Eq).count();
    let n_art = kept.iter().filter(|k| k.2 != Sense::Le).count();
    let ncols = n + n_slack + n_art;
    let width = ncols + 1;
    let mut data = vec![0.0; m * width];
    let mut basis = vec![0; m];
    let mut unit = vec![0; m];
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for (i, &(src, f, sense)) in kept.iter().enumerate() {
        let row = &mut data[i * width..(i + 1) * width];
        for (a, b) in row.iter_mut().zip(&rows[src].coeffs) {
            *a = f * b;
        }
        row[ncols] = f * rows[src].rhs;
        match sense {
            Sense::Le => {
                row[next_slack] = 1.0;
                unit[i] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                unit[i] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                row[next_art] = 1.0;
                unit[i] = next_art;
                next_art += 1;
            }
        }
        basis[i] = unit[i];
    }
    let mut t = Tableau { width, data, cost: Vec::new(), basis, pivots: 0 };
    let art0 = n + n_slack;
    if n_art > 0 {
        let mut c1 = vec![0.0; ncols];
        c1[art0..].iter_mut().for_each(|x| *x = 1.0);
        t.set_cost(&c1);
        t.iterate(ncols, 1e-12)?;
        let bmax = (0..m).map(|i| t.at(i, ncols).abs()).fold(1.0, f64::max);
        let infeas = -t.cost[ncols];
        if infeas > 1e-9 * bmax {
            return Err(Error::Infeasible(format!("phase one ended with residual {infeas:.3e}")));
        }
        for i in 0..m {
            if t.basis[i] >= art0 {
                if let Some(j) = (0..art0).find(|&j| t.at(i, j).abs() > 1e-9) {
                    t.pivot(i, j);
                }
            }
        }
    }
    let cmax = c.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let mut c2 = c.to_vec();
    c2.resize(ncols, 0.0);
    t.set_cost(&c2);
    if !t.iterate(art0, 1e-11 * cmax)? {
        return Err(Error::Unbounded("objective decreases without bound".into()));
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.at(i, ncols).max(0.0);
        }
    }
    let mut duals = vec![0.0; rows.len()];
    for (i, &(src, f, _)) in kept.iter().enumerate() {
        duals[src] = -t.cost[unit[i]] * f;
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(Solution { x, objective, duals, pivots: t.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.add(vec![1.0, 0.0], Sense::Le, 4.0).unwrap();
        lp.add(vec![0.0, 2.0], Sense::Le, 12.0).unwrap();
        lp.add(vec![3.0, 2.0], Sense::Le, 18.0).unwrap();
        let s = lp.maximize().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        // Shadow prices (0, 3/2, 1).
        for (y, e) in s.duals.iter().zip([0.0, 1.5, 1.0]) {
            assert!((y - e).abs() < 1e-12, "{:?}", s.duals);
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y + 3z, x + y + z = 1, y + z ≥ 0.5 → y = 0.5, x = 0.5, value 1.5.
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 3.0]);
        lp.add(vec![1.0, 1.0, 1.0], Sense::Eq, 1.0).unwrap();
        lp.add(vec![0.0, 1.0, 1.0], Sense::Ge, 0.5).unwrap();
        let s = lp.minimize().unwrap();
        assert!((s.objective - 1.5).abs() < 1e-12);
        assert!((lp.dual_value(&s.duals) - 1.5).abs() < 1e-12);
        assert!(lp.dual_violation_min(&s.duals) < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![1.0], Sense::Le, 1.0).unwrap();
        lp.add(vec![1.0], Sense::Ge, 2.0).unwrap();
        assert!(matches!(lp.minimize(), Err(Error::Infeasible(_))));
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add(vec![1.0, -1.0], Sense::Le, 1.0).unwrap();
        assert!(matches!(lp.minimize(), Err(Error::Unbounded(_))));
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![0.0], Sense::Ge, 1.0).unwrap();
        assert!(matches!(lp.minimize(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn negative_rhs_and_redundant_rows() {
        // -x ≤ -1 is x ≥ 1; the duplicated equality is redundant.
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add(vec![-1.0, 0.0], Sense::Le, -1.0).unwrap();
        lp.add(vec![1.0, 1.0], Sense::Eq, 3.0).unwrap();
        lp.add(vec![2.0, 2.0], Sense::Eq, 6.0).unwrap();
        let s = lp.minimize().unwrap();
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!(lp.min_slack(&s.x) > -1e-12);
        assert!((lp.dual_value(&s.duals) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the largest-coefficient rule.
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Sense::Le, 0.0).unwrap();
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Sense::Le, 0.0).unwrap();
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0).unwrap();
        let s = lp.minimize().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-12, "{}", s.objective);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        // Strong duality and feasibility on random bounded feasible problems.
        #[test]
        fn strong_duality(seed in 0u64..10_000, n in 2usize..8, m in 1usize..8) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mut lp = LinearProgram::new((0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
            for _ in 0..m {
                let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let ax: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
                let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..3)];
                let rhs = match sense { Sense::Le => ax + rng.gen::<f64>(), Sense::Ge => ax - rng.gen::<f64>(), Sense::Eq => ax };
                lp.add(a, sense, rhs).unwrap();
            }
            lp.add(vec![1.0; n], Sense::Le, 10.0 + x0.iter().sum::<f64>()).unwrap();
            let s = lp.minimize().unwrap();
            prop_assert!(lp.min_slack(&s.x) > -1e-9);
            prop_assert!(lp.value(&s.x) <= lp.value(&x0) + 1e-9);
            prop_assert!(lp.dual_violation_min(&s.duals) < 1e-9);
            prop_assert!((lp.dual_value(&s.duals) - s.objective).abs() < 1e-9 * (1.0 + s.objective.abs()));
        }
    }
}
