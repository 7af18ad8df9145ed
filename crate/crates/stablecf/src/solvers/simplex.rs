//! Equality-constrained l1 minimization by a split-variable primal simplex.
//!
//! `min ||w||_1 s.t. P w = m` is rewritten with `w = u - v`, `u, v >= 0` as
//! a standard-form linear program over `2N` variables and solved in two
//! phases with Bland's anti-cycling rule, so the result is a deterministic
//! basic optimum with at most `K` nonzero weights.

use nalgebra::{DMatrix, DVector};

use super::SolverError;

/// A basic optimal solution of the l1 program.
#[derive(Debug, Clone)]
pub struct L1Solution {
    pub w: Vec<f64>,
    /// `sum |w_n|`, recomputed from the returned weights.
    pub objective: f64,
    pub nonzero_count: usize,
    pub iterations: usize,
}

const REDUCED_COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const REFACTOR_PERIOD: usize = 100;
/// Pivots smaller than this trigger an immediate refactorization.
const SMALL_PIVOT: f64 = 1e-6;
/// Consecutive degenerate pivots before switching the ratio test from the
/// stabilized largest-pivot rule to strict lowest-index (Bland) selection.
const STALL_LIMIT: usize = 500;

struct Simplex<'a> {
    p: &'a DMatrix<f64>,
    row_sign: Vec<f64>,
    b: DVector<f64>,
    k: usize,
    n_points: usize,
    n_real: usize,
    /// Basic variable per row; artificials are indices `n_real + i`.
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: DMatrix<f64>,
    x_b: DVector<f64>,
    iterations: usize,
    cap: usize,
    pivots_since_refactor: usize,
}

enum Phase {
    DriveArtificialsToZero,
    MinimizeL1Norm,
}

impl<'a> Simplex<'a> {
    fn new(p: &'a DMatrix<f64>, m: &[f64]) -> Self {
        let k = p.nrows();
        let n_points = p.ncols();
        let row_sign: Vec<f64> = m.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let b = DVector::from_iterator(k, m.iter().zip(&row_sign).map(|(&v, &s)| s * v));
        let n_real = 2 * n_points;
        let x_b = b.clone();
        Self {
            p,
            row_sign,
            b,
            k,
            n_points,
            n_real,
            basis: (0..k).map(|i| n_real + i).collect(),
            in_basis: vec![false; n_real],
            binv: DMatrix::identity(k, k),
            x_b,
            iterations: 0,
            cap: 50 * (n_points + k),
            pivots_since_refactor: 0,
        }
    }

    /// Column `j` of the sign-flipped constraint matrix, for real variables:
    /// `+P` columns first, then `-P` columns.
    fn column_entry(&self, j: usize, row: usize) -> f64 {
        if j < self.n_points {
            self.row_sign[row] * self.p[(row, j)]
        } else {
            -self.row_sign[row] * self.p[(row, j - self.n_points)]
        }
    }

    fn cost(&self, phase: &Phase, j: usize) -> f64 {
        match phase {
            Phase::DriveArtificialsToZero => {
                if j >= self.n_real {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::MinimizeL1Norm => {
                if j >= self.n_real {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    fn simplex_multipliers(&self, phase: &Phase) -> DVector<f64> {
        let c_b = DVector::from_iterator(self.k, self.basis.iter().map(|&j| self.cost(phase, j)));
        self.binv.transpose() * c_b
    }

    fn direction(&self, j: usize) -> DVector<f64> {
        let a_j = DVector::from_iterator(self.k, (0..self.k).map(|i| self.column_entry(j, i)));
        &self.binv * a_j
    }

    /// Ratio test. The entering column always follows Bland's lowest-index
    /// rule; for the leaving row, minimum-ratio ties are normally broken by
    /// the largest pivot element (numerical stability on degenerate point
    /// grids), falling back to strict lowest-variable-index selection when
    /// the iteration has stalled on degenerate pivots.
    fn leaving_row(&self, d: &DVector<f64>, strict_bland: bool) -> Option<usize> {
        let mut theta_min = f64::INFINITY;
        for i in 0..self.k {
            if d[i] > PIVOT_TOL {
                theta_min = theta_min.min(self.x_b[i] / d[i]);
            }
        }
        if !theta_min.is_finite() {
            return None;
        }
        let tie = theta_min + 1e-9 * (1.0 + theta_min.abs());
        let mut choice: Option<usize> = None;
        for i in 0..self.k {
            if d[i] > PIVOT_TOL && self.x_b[i] / d[i] <= tie {
                choice = Some(match choice {
                    None => i,
                    Some(best) => {
                        let better = if strict_bland {
                            self.basis[i] < self.basis[best]
                        } else {
                            d[i] > d[best]
                        };
                        if better {
                            i
                        } else {
                            best
                        }
                    }
                });
            }
        }
        choice
    }

    fn pivot(
        &mut self,
        entering: usize,
        row: usize,
        d: &DVector<f64>,
    ) -> Result<(), SolverError> {
        let theta = self.x_b[row] / d[row];
        for i in 0..self.k {
            if i != row {
                self.x_b[i] = (self.x_b[i] - theta * d[i]).max(0.0);
            }
        }
        self.x_b[row] = theta.max(0.0);

        let piv = d[row];
        for c in 0..self.k {
            self.binv[(row, c)] /= piv;
        }
        for i in 0..self.k {
            if i != row {
                let factor = d[i];
                if factor != 0.0 {
                    for c in 0..self.k {
                        let delta = factor * self.binv[(row, c)];
                        self.binv[(i, c)] -= delta;
                    }
                }
            }
        }

        let leaving = self.basis[row];
        if leaving < self.n_real {
            self.in_basis[leaving] = false;
        }
        self.basis[row] = entering;
        self.in_basis[entering] = true;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_PERIOD || piv.abs() < SMALL_PIVOT {
            self.refactor()?;
        }
        Ok(())
    }

    /// Rebuilds the basis inverse and the basic values from scratch.
    fn refactor(&mut self) -> Result<(), SolverError> {
        let basis_matrix = DMatrix::from_fn(self.k, self.k, |i, c| {
            let j = self.basis[c];
            if j < self.n_real {
                self.column_entry(j, i)
            } else if j - self.n_real == i {
                1.0
            } else {
                0.0
            }
        });
        let Some(inv) = basis_matrix.lu().try_inverse() else {
            return Err(SolverError::LostFeasibility {
                residual: f64::INFINITY,
            });
        };
        self.binv = inv;
        self.x_b = &self.binv * &self.b;
        // Rounding can leave eps-level negatives on degenerate basics;
        // anything larger surfaces in the final feasibility check.
        for v in self.x_b.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Entering column: Dantzig pricing (most negative reduced cost, lowest
    /// index on ties) normally, strict Bland lowest-index when stalled. The
    /// reduced costs of the split columns come from one product `t = P^T y`:
    /// `rc(u_j) = c_j - t_j` and `rc(v_j) = c_j + t_j`.
    fn entering_column(&self, phase: &Phase, y: &DVector<f64>, strict_bland: bool) -> Option<usize> {
        let signed_y: Vec<f64> = (0..self.k).map(|i| y[i] * self.row_sign[i]).collect();
        let mut t = vec![0.0f64; self.n_points];
        for i in 0..self.k {
            let yi = signed_y[i];
            if yi != 0.0 {
                for (j, tj) in t.iter_mut().enumerate() {
                    *tj += yi * self.p[(i, j)];
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n_real {
            if self.in_basis[j] {
                continue;
            }
            let dot = if j < self.n_points { t[j] } else { -t[j - self.n_points] };
            let rc = self.cost(phase, j) - dot;
            if rc < -REDUCED_COST_TOL {
                if strict_bland {
                    return Some(j);
                }
                if best.map_or(true, |(_, r)| rc < r) {
                    best = Some((j, rc));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn run_phase(&mut self, phase: Phase) -> Result<(), SolverError> {
        let mut degenerate_streak = 0usize;
        loop {
            if self.iterations >= self.cap {
                return Err(SolverError::IterationLimit(self.cap));
            }
            let strict = degenerate_streak >= STALL_LIMIT;
            let y = self.simplex_multipliers(&phase);
            let Some(j) = self.entering_column(&phase, &y, strict) else {
                return Ok(());
            };
            let d = self.direction(j);
            let Some(row) = self.leaving_row(&d, strict) else {
                // The l1 objective is bounded below, so an unbounded ray
                // only arises from numerical failure.
                return Err(SolverError::LostFeasibility {
                    residual: f64::INFINITY,
                });
            };
            let theta = self.x_b[row] / d[row];
            if theta <= 1e-12 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.pivot(j, row, &d)?;
            self.iterations += 1;
        }
    }

    fn artificial_level(&self) -> f64 {
        (0..self.k)
            .filter(|&i| self.basis[i] >= self.n_real)
            .map(|i| self.x_b[i])
            .sum()
    }

    /// Pivots any zero-level artificial out of the basis; a row where no real
    /// column can pivot means `P` was rank-deficient.
    fn drive_out_artificials(&mut self) -> Result<(), SolverError> {
        for row in 0..self.k {
            if self.basis[row] < self.n_real {
                continue;
            }
            let binv_row: Vec<f64> = (0..self.k).map(|c| self.binv[(row, c)]).collect();
            let mut found = None;
            for j in 0..self.n_real {
                if self.in_basis[j] {
                    continue;
                }
                let entry: f64 = (0..self.k)
                    .map(|i| binv_row[i] * self.column_entry(j, i))
                    .sum();
                if entry.abs() > 1e-7 {
                    found = Some(j);
                    break;
                }
            }
            let Some(j) = found else {
                return Err(SolverError::RankDeficient);
            };
            let d = self.direction(j);
            self.pivot(j, row, &d)?;
        }
        Ok(())
    }

    fn extract(&mut self, m: &[f64]) -> Result<L1Solution, SolverError> {
        self.refactor()?;
        let mut w = vec![0.0; self.n_points];
        for i in 0..self.k {
            let j = self.basis[i];
            if j < self.n_points {
                w[j] += self.x_b[i];
            } else if j < self.n_real {
                w[j - self.n_points] -= self.x_b[i];
            }
        }
        let m_inf = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut residual = 0.0f64;
        for i in 0..self.k {
            let achieved: f64 = (0..self.n_points).map(|n| self.p[(i, n)] * w[n]).sum();
            residual = residual.max((achieved - m[i]).abs());
        }
        if residual > 1e-9 * (1.0 + m_inf) {
            return Err(SolverError::LostFeasibility { residual });
        }
        let objective = w.iter().map(|v| v.abs()).sum();
        let nonzero_count = w.iter().filter(|v| **v != 0.0).count();
        Ok(L1Solution {
            w,
            objective,
            nonzero_count,
            iterations: self.iterations,
        })
    }
}

/// Minimizes `||w||_1` over `{ w : P w = m }`, returning a basic optimal
/// solution (at most `K` nonzeros). Requires `P` to have full row rank,
/// which callers establish with [`super::rank_of`].
pub fn l1_minimize(p: &DMatrix<f64>, m: &[f64]) -> Result<L1Solution, SolverError> {
    let k = p.nrows();
    if m.len() != k {
        return Err(SolverError::LengthMismatch {
            expected: k,
            got: m.len(),
        });
    }
    let mut simplex = Simplex::new(p, m);
    simplex.run_phase(Phase::DriveArtificialsToZero)?;
    let b_inf = simplex.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if simplex.artificial_level() > 1e-8 * (1.0 + b_inf) {
        return Err(SolverError::Infeasible);
    }
    simplex.drive_out_artificials()?;
    simplex.run_phase(Phase::MinimizeL1Norm)?;
    simplex.extract(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_the_sparse_vertex() {
        let p = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let sol = l1_minimize(&p, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-12);
        assert_eq!(sol.nonzero_count, 1);
        assert_relative_eq!(sol.w[2], 1.0, epsilon = 1e-10);
        assert_eq!(sol.w[0], 0.0);
        assert_eq!(sol.w[1], 0.0);
    }

    #[test]
    fn square_system_returns_the_unique_solution() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let sol = l1_minimize(&p, &[2.0, 0.0]).unwrap();
        assert_relative_eq!(sol.w[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.w[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn handles_negative_rhs() {
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let sol = l1_minimize(&p, &[-3.0]).unwrap();
        assert_relative_eq!(sol.objective, 3.0, epsilon = 1e-12);
        assert!(sol.nonzero_count <= 1);
    }

    #[test]
    fn infeasible_system_is_reported() {
        // Two contradictory copies of the same equation.
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            l1_minimize(&p, &[1.0, 2.0]),
            Err(SolverError::Infeasible)
        ));
    }

    /// Enumerates every potential basis among the split columns and keeps
    /// the best feasible objective; exhaustive LP oracle for small systems.
    fn vertex_enumeration_optimum(p: &DMatrix<f64>, m: &[f64]) -> Option<f64> {
        let k = p.nrows();
        let n2 = 2 * p.ncols();
        let column = |j: usize, i: usize| {
            if j < p.ncols() {
                p[(i, j)]
            } else {
                -p[(i, j - p.ncols())]
            }
        };
        let mut best: Option<f64> = None;
        let mut subset: Vec<usize> = (0..k).collect();
        loop {
            let basis = DMatrix::from_fn(k, k, |i, c| column(subset[c], i));
            if let Some(inv) = basis.lu().try_inverse() {
                let x = inv * DVector::from_column_slice(m);
                if x.iter().all(|&v| v >= -1e-9) {
                    let obj: f64 = x.iter().map(|v| v.max(0.0)).sum();
                    best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
            // Next k-subset of 0..n2 in lexicographic order.
            let mut idx = k;
            loop {
                if idx == 0 {
                    return best;
                }
                idx -= 1;
                if subset[idx] < n2 - (k - idx) {
                    subset[idx] += 1;
                    for t in idx + 1..k {
                        subset[t] = subset[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn objective_matches_vertex_enumeration_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut done = 0;
        while done < 25 {
            let k = rng.random_range(1..=4usize);
            let n = rng.random_range(k..=8usize);
            let p = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..=1.0));
            if crate::solvers::rank_of(&p).rank < k {
                continue;
            }
            let w0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let m: Vec<f64> = (0..k)
                .map(|i| (0..n).map(|j| p[(i, j)] * w0[j]).sum())
                .collect();
            let sol = l1_minimize(&p, &m).unwrap();
            let oracle = vertex_enumeration_optimum(&p, &m).expect("feasible by construction");
            assert!(
                (sol.objective - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()),
                "simplex {} vs enumeration {}",
                sol.objective,
                oracle
            );
            assert!(sol.nonzero_count <= k);
            done += 1;
        }
    }

    #[test]
    fn l1_norm_never_exceeds_least_squares_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let k = rng.random_range(1..=3usize);
            let n = rng.random_range(k + 1..=7usize);
            let p = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..=1.0));
            if crate::solvers::rank_of(&p).rank < k {
                continue;
            }
            let w0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let m: Vec<f64> = (0..k)
                .map(|i| (0..n).map(|j| p[(i, j)] * w0[j]).sum())
                .collect();
            let l1 = l1_minimize(&p, &m).unwrap();
            let ls = crate::solvers::min_norm_weighted_ls(&p, &m, &vec![1.0; n]).unwrap();
            let ls_norm: f64 = ls.iter().map(|v| v.abs()).sum();
            assert!(l1.objective <= ls_norm + 1e-9);
        }
    }
}
