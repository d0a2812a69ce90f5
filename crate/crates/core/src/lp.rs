//! Small dense two-phase simplex for
//!
//! ```text
//! minimize cᵀx  subject to  A x ≥ b,  l ≤ x ≤ u
//! ```
//!
//! Sized for a handful of variables; Bland's rule keeps it from cycling.

const EPS: f64 = 1e-10;

/// One `a·x ≥ b` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    /// Indices of the `≥` rows that phase one could not satisfy, and the
    /// variables whose bounds cross.
    Infeasible {
        rows: Vec<usize>,
        bounds: Vec<usize>,
    },
    Unbounded,
    Malformed(String),
}

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right side.
    cells: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.cells[r][c];
        for v in self.cells[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.cells[r].clone();
        for (i, row) in self.cells.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost·z` over the columns allowed by `allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<(), LpError> {
        let max_iter = 50 * (self.cells.len() + self.cols) + 100;
        for _ in 0..max_iter {
            // reduced costs
            let mut enter = None;
            for j in 0..self.cols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, row) in self.cells.iter().enumerate() {
                    d -= cost[self.basis[i]] * row[j];
                }
                if d < -EPS {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.cells.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[rhs] / row[c];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - EPS
                                || (ratio <= lr + EPS && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, c);
        }
        Err(LpError::Malformed("simplex iteration limit reached".into()))
    }
}

/// Solves the bounded LP. `upper` entries may be `f64::INFINITY`.
pub fn solve(
    cost: &[f64],
    rows: &[Row],
    lower: &[f64],
    upper: &[f64],
) -> Result<LpSolution, LpError> {
    let n = cost.len();
    if lower.len() != n || upper.len() != n || rows.iter().any(|r| r.coeffs.len() != n) {
        return Err(LpError::Malformed("dimension mismatch".into()));
    }
    let crossed: Vec<usize> = (0..n).filter(|&j| lower[j] > upper[j] + EPS).collect();
    if !crossed.is_empty() {
        return Err(LpError::Infeasible {
            rows: vec![],
            bounds: crossed,
        });
    }
    let scale: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.coeffs
                .iter()
                .fold(r.rhs.abs(), |m, v| m.max(v.abs()))
                .max(1e-300)
        })
        .collect();

    // Shift x = l + y so that y ≥ 0.
    let finite_upper: Vec<usize> = (0..n).filter(|&j| upper[j].is_finite()).collect();
    let m_ge = rows.len();
    let m = m_ge + finite_upper.len();
    // columns: y (n), surplus per ≥ row (m_ge), slack per upper row, artificial per ≥ row
    let surplus0 = n;
    let slack0 = surplus0 + m_ge;
    let art0 = slack0 + finite_upper.len();
    let cols = art0 + m_ge;
    let mut cells = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let mut artificial_rows = Vec::new();

    for (i, row) in rows.iter().enumerate() {
        let shifted: f64 = row.rhs
            - row
                .coeffs
                .iter()
                .zip(lower)
                .map(|(a, l)| a * l)
                .sum::<f64>();
        let s = scale[i];
        let sign = if shifted < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            cells[i][j] = sign * row.coeffs[j] / s;
        }
        cells[i][surplus0 + i] = -sign;
        cells[i][cols] = sign * shifted / s;
        if sign < 0.0 {
            basis[i] = surplus0 + i;
        } else {
            cells[i][art0 + i] = 1.0;
            basis[i] = art0 + i;
            artificial_rows.push(i);
        }
    }
    for (k, &j) in finite_upper.iter().enumerate() {
        let i = m_ge + k;
        cells[i][j] = 1.0;
        cells[i][slack0 + k] = 1.0;
        cells[i][cols] = upper[j] - lower[j];
        basis[i] = slack0 + k;
    }

    let mut t = Tableau { cells, basis, cols };
    if !artificial_rows.is_empty() {
        let mut phase1 = vec![0.0; cols];
        for i in 0..m_ge {
            phase1[art0 + i] = 1.0;
        }
        t.optimize(&phase1, &|_| true)?;
        let infeasible: Vec<usize> = (0..m)
            .filter(|&i| t.basis[i] >= art0 && t.cells[i][cols] > 1e-9)
            .map(|i| t.basis[i] - art0)
            .collect();
        if !infeasible.is_empty() {
            return Err(LpError::Infeasible {
                rows: infeasible,
                bounds: vec![],
            });
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if t.basis[i] >= art0 {
                if let Some(c) =
                    (0..art0).find(|&c| t.cells[i][c].abs() > EPS && !t.basis.contains(&c))
                {
                    t.pivot(i, c);
                }
            }
        }
    }
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(cost);
    t.optimize(&phase2, &|j| j < art0)?;

    let mut x = lower.to_vec();
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] += t.cells[i][cols];
        }
    }
    for j in 0..n {
        x[j] = x[j].clamp(lower[j], upper[j]);
    }
    let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, objective })
}
