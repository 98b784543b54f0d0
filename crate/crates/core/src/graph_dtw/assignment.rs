//! Exact minimum-cost assignment on a square cost matrix.
//!
//! Shortest augmenting path with row/column potentials (Kuhn–Munkres in the
//! Jonker–Volgenant formulation), O(n³).

/// Returns `assign` where row `i` is matched to column `assign[i]`.
///
/// `cost` is row-major `n × n`. Entries must be finite.
pub fn solve(cost: &[f64], n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    Solver::default().solve_into(cost, n, &mut out);
    out
}

/// Reusable buffers for repeated small assignments.
#[derive(Debug, Default)]
pub(crate) struct Solver {
    u: Vec<f64>,
    v: Vec<f64>,
    row_of_col: Vec<usize>,
    way: Vec<usize>,
    min_to: Vec<f64>,
    used: Vec<bool>,
}

impl Solver {
    pub(crate) fn solve_into(&mut self, cost: &[f64], n: usize, assign: &mut Vec<usize>) {
        assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
        assign.clear();
        if n == 0 {
            return;
        }
        // 1-based arrays; index 0 is the virtual source column.
        for buf in [&mut self.u, &mut self.v, &mut self.min_to] {
            buf.clear();
            buf.resize(n + 1, 0.0);
        }
        for buf in [&mut self.row_of_col, &mut self.way] {
            buf.clear();
            buf.resize(n + 1, 0);
        }
        self.used.clear();
        self.used.resize(n + 1, false);
        let Self {
            u,
            v,
            row_of_col,
            way,
            min_to,
            used,
        } = self;

        for i in 1..=n {
            row_of_col[0] = i;
            let mut j0 = 0usize;
            min_to.iter_mut().for_each(|m| *m = f64::INFINITY);
            used.iter_mut().for_each(|b| *b = false);
            loop {
                used[j0] = true;
                let i0 = row_of_col[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0usize;
                for j in 1..=n {
                    if used[j] {
                        continue;
                    }
                    let reduced = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if reduced < min_to[j] {
                        min_to[j] = reduced;
                        way[j] = j0;
                    }
                    if min_to[j] < delta {
                        delta = min_to[j];
                        j1 = j;
                    }
                }
                for j in 0..=n {
                    if used[j] {
                        u[row_of_col[j]] += delta;
                        v[j] -= delta;
                    } else {
                        min_to[j] -= delta;
                    }
                }
                j0 = j1;
                if row_of_col[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                row_of_col[j0] = row_of_col[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }

        assign.resize(n, 0);
        for j in 1..=n {
            assign[row_of_col[j] - 1] = j - 1;
        }
    }
}
