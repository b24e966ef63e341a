//! Small dense two-phase simplex for the linear programs that arise from
//! halfspace sets: boundedness, bounding intervals and interior feasibility.
//!
//! Problems are `maximize c·x subject to A x <= b` with `x` free. Free
//! variables are split into positive and negative parts; Bland's rule keeps the
//! pivoting deterministic and cycle-free.

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Optimal vertex in the original (free) variables.
    pub x: Vec<f64>,
    /// Optimal objective value.
    pub value: f64,
    /// Dual multiplier per constraint row, `y >= 0`, with `A^T y = c`.
    ///
    /// These are the sensitivities of the optimal value to the right-hand
    /// side; the sensitivity to row `i` of `A` is `-y_i x^T`.
    pub duals: Vec<f64>,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize, objective: &mut [f64], obj_value: &mut f64) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rhs[i] -= f * pivot_rhs;
            }
        }
        let f = objective[c];
        if f != 0.0 {
            for (v, pv) in objective.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            *obj_value += f * pivot_rhs;
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on `objective` (reduced costs, maximization)
    /// restricted to columns `< active_cols`. Returns false when unbounded.
    fn optimize(&mut self, objective: &mut [f64], obj_value: &mut f64, active_cols: usize) -> bool {
        // Bland's rule terminates; the bound only guards against NaN inputs.
        let max_iter = 50 * (self.cols + self.rows.len()) + 100;
        for _ in 0..max_iter {
            let entering = (0..active_cols).find(|&j| objective[j] > PIVOT_TOL);
            let Some(c) = entering else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14
                                || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, c, objective, obj_value),
            }
        }
        true
    }
}

/// Maximizes `c·x` subject to `a[i]·x <= b[i]` for free `x`.
///
/// Every row of `a` must have length `c.len()`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    assert_eq!(m, b.len(), "row count mismatch");
    // Column layout: [x+ (n) | x- (n) | slack (m) | artificial (k)]
    let needs_art: Vec<bool> = b.iter().map(|&bi| bi < 0.0).collect();
    let n_art = needs_art.iter().filter(|&&v| v).count();
    let slack0 = 2 * n;
    let art0 = slack0 + m;
    let cols = art0 + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = art0;
    for i in 0..m {
        assert_eq!(a[i].len(), n, "row width mismatch");
        let sign = if needs_art[i] { -1.0 } else { 1.0 };
        let mut row = vec![0.0; cols];
        for j in 0..n {
            row[j] = sign * a[i][j];
            row[n + j] = -sign * a[i][j];
        }
        row[slack0 + i] = sign;
        if needs_art[i] {
            row[next_art] = 1.0;
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(slack0 + i);
        }
        rows.push(row);
        rhs.push(sign * b[i]);
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis,
        cols,
    };

    if n_art > 0 {
        // Phase 1: maximize -sum(artificials).
        let mut obj = vec![0.0; cols];
        let mut val = 0.0;
        for j in art0..cols {
            obj[j] = -1.0;
        }
        // Price out the basic artificials.
        for i in 0..m {
            if t.basis[i] >= art0 {
                for j in 0..cols {
                    obj[j] += t.rows[i][j];
                }
                val -= t.rhs[i];
            }
        }
        // Reduced costs r_j = c_j - c_B B^-1 A_j; with the sign convention of
        // `pivot`, `val` tracks the negated objective.
        t.optimize(&mut obj, &mut val, cols);
        let infeasibility: f64 = (0..m)
            .filter(|&i| t.basis[i] >= art0)
            .map(|i| t.rhs[i])
            .sum();
        if infeasibility > FEAS_TOL * (1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return LpOutcome::Infeasible;
        }
        // Drive zero-valued artificials out of the basis.
        for i in 0..m {
            if t.basis[i] >= art0 {
                if let Some(c) = (0..art0).find(|&j| t.rows[i][j].abs() > 1e-9) {
                    let mut dummy = vec![0.0; cols];
                    let mut dv = 0.0;
                    t.pivot(i, c, &mut dummy, &mut dv);
                }
            }
        }
    }

    // Phase 2 over the structural and slack columns only.
    let mut obj = vec![0.0; cols];
    for j in 0..n {
        obj[j] = c[j];
        obj[n + j] = -c[j];
    }
    let mut val = 0.0;
    for i in 0..m {
        let bc = t.basis[i];
        let cb = if bc < n {
            c[bc]
        } else if bc < 2 * n {
            -c[bc - n]
        } else {
            0.0
        };
        if cb != 0.0 {
            for j in 0..cols {
                obj[j] -= cb * t.rows[i][j];
            }
            val += cb * t.rhs[i];
        }
    }
    if !t.optimize(&mut obj, &mut val, art0) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    for (i, &bc) in t.basis.iter().enumerate() {
        if bc < n {
            x[bc] += t.rhs[i];
        } else if bc < 2 * n {
            x[bc - n] -= t.rhs[i];
        }
    }
    let duals = (0..m).map(|i| (-obj[slack0 + i]).max(0.0)).collect();
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal(LpSolution { x, value, duals })
}
