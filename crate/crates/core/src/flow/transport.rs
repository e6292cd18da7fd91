//! Balanced transportation problem solved by the transportation simplex
//! (network simplex on a complete bipartite graph).
//!
//! Supplies and demands are integers, so every basic solution is integral.
//! Costs are any [`Cost`]; with exact rationals the optimum is exact.
//! Pivoting follows Bland's rule: the lowest row-major non-basic cell with a
//! negative reduced cost enters, and ties for leaving go to the lowest cell.

use std::collections::VecDeque;

use thiserror::Error;

use crate::scalar::Cost;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem<C> {
    pub supplies: Vec<i64>,
    pub demands: Vec<i64>,
    /// Row-major `supplies.len() x demands.len()` unit costs.
    pub costs: Vec<C>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution<C> {
    /// Row-major flows.
    pub flows: Vec<i64>,
    pub objective: C,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("unbalanced problem: supply {supply} != demand {demand}")]
    Unbalanced { supply: i64, demand: i64 },
    #[error("negative supply or demand")]
    Negative,
    #[error("cost matrix has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("pivot limit reached")]
    PivotLimit,
}

impl<C: Cost> TransportProblem<C> {
    pub fn rows(&self) -> usize {
        self.supplies.len()
    }

    pub fn cols(&self) -> usize {
        self.demands.len()
    }

    pub fn cost(&self, i: usize, j: usize) -> C {
        self.costs[i * self.cols() + j]
    }

    pub fn objective_of(&self, flows: &[i64]) -> C {
        flows
            .iter()
            .zip(&self.costs)
            .filter(|(&f, _)| f != 0)
            .fold(C::zero(), |acc, (&f, &c)| acc + c * C::from_i64(f))
    }
}

pub fn solve_transportation<C: Cost>(p: &TransportProblem<C>) -> Result<TransportSolution<C>, TransportError> {
    let (m, n) = (p.rows(), p.cols());
    if p.costs.len() != m * n {
        return Err(TransportError::Shape {
            expected: m * n,
            found: p.costs.len(),
        });
    }
    if p.supplies.iter().chain(&p.demands).any(|&v| v < 0) {
        return Err(TransportError::Negative);
    }
    let supply: i64 = p.supplies.iter().sum();
    let demand: i64 = p.demands.iter().sum();
    if supply != demand {
        return Err(TransportError::Unbalanced { supply, demand });
    }
    if m == 0 || n == 0 {
        return Ok(TransportSolution {
            flows: vec![0; m * n],
            objective: C::zero(),
            pivots: 0,
        });
    }

    let mut flows = vec![0i64; m * n];
    let mut basic = vec![false; m * n];
    least_cost_basis(p, &mut flows, &mut basic);

    let tol = C::tolerance();
    let limit = 50 * (m * n + m + n) + 1000;
    let mut pivots = 0;
    let mut u = vec![C::zero(); m];
    let mut v = vec![C::zero(); n];
    loop {
        let tree = Tree::build(m, n, &basic);
        tree.potentials(p, &mut u, &mut v);

        let entering = (0..m * n).find(|&cell| {
            if basic[cell] {
                return false;
            }
            let (i, j) = (cell / n, cell % n);
            let rc = p.costs[cell] - u[i] - v[j];
            rc < C::zero() - tol
        });
        let Some(enter) = entering else {
            break;
        };
        pivots += 1;
        if pivots > limit {
            return Err(TransportError::PivotLimit);
        }

        // path in the basis tree from column node back to the entering row
        let (ei, ej) = (enter / n, enter % n);
        let path = tree.path(ei, m + ej);
        // path cells alternate -, +, -, ... starting from the column end
        let mut leave = usize::MAX;
        let mut theta = i64::MAX;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 && (flows[cell] < theta || (flows[cell] == theta && cell < leave)) {
                theta = flows[cell];
                leave = cell;
            }
        }
        flows[enter] += theta;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                flows[cell] -= theta;
            } else {
                flows[cell] += theta;
            }
        }
        basic[leave] = false;
        basic[enter] = true;
    }

    Ok(TransportSolution {
        objective: p.objective_of(&flows),
        flows,
        pivots,
    })
}

/// Least-cost initial basis with exactly `m + n - 1` basic cells.
fn least_cost_basis<C: Cost>(p: &TransportProblem<C>, flows: &mut [i64], basic: &mut [bool]) {
    let (m, n) = (p.rows(), p.cols());
    let mut order: Vec<usize> = (0..m * n).collect();
    order.sort_by(|&a, &b| {
        p.costs[a]
            .partial_cmp(&p.costs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut row_rem = p.supplies.clone();
    let mut col_rem = p.demands.clone();
    let mut row_on = vec![true; m];
    let mut col_on = vec![true; n];
    let (mut rows_left, mut cols_left) = (m, n);
    for cell in order {
        let (i, j) = (cell / n, cell % n);
        if !row_on[i] || !col_on[j] {
            continue;
        }
        let q = row_rem[i].min(col_rem[j]);
        flows[cell] = q;
        basic[cell] = true;
        row_rem[i] -= q;
        col_rem[j] -= q;
        if rows_left == 1 && cols_left == 1 {
            break;
        }
        if row_rem[i] == 0 && rows_left > 1 {
            row_on[i] = false;
            rows_left -= 1;
        } else {
            col_on[j] = false;
            cols_left -= 1;
        }
    }
}

/// Spanning tree over `m` row nodes and `n` column nodes (`m + j`).
struct Tree {
    m: usize,
    n: usize,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Tree {
    fn build(m: usize, n: usize, basic: &[bool]) -> Self {
        let mut adj = vec![Vec::new(); m + n];
        for (cell, _) in basic.iter().enumerate().filter(|(_, &b)| b) {
            let (i, j) = (cell / n, cell % n);
            adj[i].push((m + j, cell));
            adj[m + j].push((i, cell));
        }
        Self { m, n, adj }
    }

    fn potentials<C: Cost>(&self, p: &TransportProblem<C>, u: &mut [C], v: &mut [C]) {
        let mut seen = vec![false; self.m + self.n];
        let mut queue = VecDeque::new();
        u[0] = C::zero();
        seen[0] = true;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &(next, cell) in &self.adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let c = p.costs[cell];
                if next >= self.m {
                    v[next - self.m] = c - u[node];
                } else {
                    u[next] = c - v[node - self.m];
                }
                queue.push_back(next);
            }
        }
    }

    /// Cells on the tree path from `to` back to `from`, listed from `to`.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        let mut queue = VecDeque::new();
        seen[from] = true;
        queue.push_back(from);
        while let Some(node) = queue.pop_front() {
            if node == to {
                break;
            }
            for &(next, cell) in &self.adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, cell));
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = to;
        while node != from {
            let (prev, cell) = parent[node].expect("basis is a spanning tree");
            cells.push(cell);
            node = prev;
        }
        cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn single_pair() {
        let p = TransportProblem {
            supplies: vec![90],
            demands: vec![90],
            costs: vec![1.0f64],
        };
        let s = solve_transportation(&p).unwrap();
        assert_eq!(s.flows, vec![90]);
        assert_eq!(s.objective, 90.0);
    }

    #[test]
    fn prefers_cheaper_supplier() {
        // two suppliers, consumer plus a zero-cost slack column
        let p = TransportProblem {
            supplies: vec![100, 100],
            demands: vec![90, 110],
            costs: vec![0.1f64, 0.0, 0.5, 0.0],
        };
        let s = solve_transportation(&p).unwrap();
        assert_eq!(s.flows[0], 90);
        assert_eq!(s.flows[2], 0);
    }

    #[test]
    fn classic_textbook_instance() {
        // 3x4 instance with known optimum 743
        let p = TransportProblem {
            supplies: vec![7, 9, 18],
            demands: vec![5, 8, 7, 14],
            costs: vec![19i64, 30, 50, 10, 70, 30, 40, 60, 40, 8, 70, 20],
        };
        let s = solve_transportation(&p).unwrap();
        assert_eq!(s.objective, 743);
        assert_eq!(s.flows.iter().sum::<i64>(), 34);
    }

    #[test]
    fn rational_costs_are_exact() {
        let r = |a: i64, b: i64| Ratio::new(a, b);
        let p = TransportProblem {
            supplies: vec![3, 2],
            demands: vec![1, 4],
            costs: vec![r(1, 3), r(2, 3), r(1, 7), r(5, 7)],
        };
        let s = solve_transportation(&p).unwrap();
        assert_eq!(s.objective, p.objective_of(&s.flows));
        // route row 1 to column 0, rest along column 1
        assert_eq!(s.objective, r(1, 7) + r(2, 3) * r(3, 1) + r(5, 7));
    }

    #[test]
    fn rejects_unbalanced() {
        let p = TransportProblem {
            supplies: vec![1],
            demands: vec![2],
            costs: vec![1.0f64],
        };
        assert!(matches!(solve_transportation(&p), Err(TransportError::Unbalanced { .. })));
    }

    #[test]
    fn degenerate_zero_supplies() {
        let p = TransportProblem {
            supplies: vec![0, 5, 0],
            demands: vec![5, 0],
            costs: vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        let s = solve_transportation(&p).unwrap();
        assert_eq!(s.flows, vec![0, 0, 5, 0, 0, 0]);
    }
}
