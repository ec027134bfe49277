//! Dense linear assignment with deterministic tie-breaking.
//!
//! The Hungarian method (shortest augmenting paths with potentials) produces an
//! optimal assignment and a dual certificate `u_i + v_j <= c_ij`. Every
//! optimal assignment uses only tight edges of any optimal dual, so the
//! lexicographically smallest optimal permutation is the lexicographically
//! smallest perfect matching of the tight-edge graph, found greedily row by
//! row with alternating-path feasibility checks.

use std::collections::VecDeque;

/// Result of an assignment solve.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// `row_to_col[i]` is the column assigned to row `i`.
    pub row_to_col: Vec<usize>,
    pub total: f64,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

/// Solve `min sum_i cost[i * n + sigma(i)]` over permutations `sigma`.
pub fn solve_assignment(cost: &[f64], n: usize) -> Assignment {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Assignment {
            row_to_col: Vec::new(),
            total: 0.0,
            row_potential: Vec::new(),
            col_potential: Vec::new(),
        };
    }
    let (mut row_to_col, u, v) = hungarian(cost, n);
    let scale = cost.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * (n as f64).max(1.0);
    lexicographic_refine(cost, n, &u, &v, tol, &mut row_to_col);
    let total = crate::stats::pairwise_sum(
        &row_to_col
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .collect::<Vec<_>>(),
    );
    Assignment {
        row_to_col,
        total,
        row_potential: u,
        col_potential: v,
    }
}

/// Returns the assignment and duals with `c_ij - u_i - v_j >= 0`.
fn hungarian(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-indexed working arrays; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - ui0 - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

fn lexicographic_refine(cost: &[f64], n: usize, u: &[f64], v: &[f64], tol: f64, row_to_col: &mut [usize]) {
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    // Tight adjacency in both directions, columns ascending per row.
    let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if cost[i * n + j] - u[i] - v[j] <= tol || row_to_col[i] == j {
                row_adj[i].push(j);
                col_adj[j].push(i);
            }
        }
    }
    let mut col_reached = vec![false; n];
    let mut row_seen = vec![false; n];
    let mut next_col = vec![usize::MAX; n];
    let mut touched_cols = Vec::new();
    let mut touched_rows = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..n {
        let c0 = row_to_col[i];
        if row_adj[i].first() == Some(&c0) {
            continue;
        }
        // Columns row i could take while rows > i still admit a perfect
        // matching: c0 itself, and any column freed by an alternating chain
        // that ends in c0.
        col_reached[c0] = true;
        touched_cols.push(c0);
        queue.push_back(c0);
        while let Some(c) = queue.pop_front() {
            for &r in &col_adj[c] {
                if r > i && !row_seen[r] {
                    row_seen[r] = true;
                    touched_rows.push(r);
                    next_col[r] = c;
                    let c2 = row_to_col[r];
                    if !col_reached[c2] {
                        col_reached[c2] = true;
                        touched_cols.push(c2);
                        queue.push_back(c2);
                    }
                }
            }
        }
        let j = *row_adj[i]
            .iter()
            .find(|&&j| col_reached[j])
            .expect("current column is always reachable");
        if j != c0 {
            let mut r = col_to_row[j];
            row_to_col[i] = j;
            col_to_row[j] = i;
            loop {
                let c = next_col[r];
                let holder = col_to_row[c];
                row_to_col[r] = c;
                col_to_row[c] = r;
                if c == c0 {
                    break;
                }
                r = holder;
            }
        }
        for c in touched_cols.drain(..) {
            col_reached[c] = false;
        }
        for r in touched_rows.drain(..) {
            row_seen[r] = false;
        }
    }
}
