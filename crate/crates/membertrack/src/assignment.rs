//! Exact minimum-cost assignment via the Kuhn-Munkres algorithm with dual
//! potentials, O(rows² · cols).

/// Solves the rectangular assignment problem for a `rows x cols` cost matrix
/// with `rows <= cols`: every row is matched to a distinct column so that the
/// total cost is minimal.
///
/// Returns the minimal total cost and the matched column per row. Costs must
/// be finite.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let rows = cost.len();
    if rows == 0 {
        return (0.0, Vec::new());
    }
    let cols = cost[0].len();
    assert!(
        rows <= cols,
        "assignment needs rows <= cols, got {rows} x {cols}"
    );
    assert!(
        cost.iter()
            .all(|r| r.len() == cols && r.iter().all(|c| c.is_finite())),
        "cost matrix must be rectangular and finite"
    );

    const UNASSIGNED: usize = usize::MAX;
    // column `cols` is a virtual slot used to seed each augmentation
    let mut row_potential = vec![0.0; rows];
    let mut col_potential = vec![0.0; cols + 1];
    let mut assigned_row = vec![UNASSIGNED; cols + 1];

    for row in 0..rows {
        assigned_row[cols] = row;
        let mut j_cur = cols;
        let mut min_reduced = vec![f64::INFINITY; cols];
        let mut parent = vec![cols; cols];
        let mut visited = vec![false; cols + 1];

        // grow the alternating tree until a free column is reached
        loop {
            visited[j_cur] = true;
            let i_cur = assigned_row[j_cur];
            let mut delta = f64::INFINITY;
            let mut j_next = cols;
            for j in 0..cols {
                if visited[j] {
                    continue;
                }
                let reduced = cost[i_cur][j] - row_potential[i_cur] - col_potential[j];
                if reduced < min_reduced[j] {
                    min_reduced[j] = reduced;
                    parent[j] = j_cur;
                }
                if min_reduced[j] < delta {
                    delta = min_reduced[j];
                    j_next = j;
                }
            }
            for j in 0..=cols {
                if visited[j] {
                    row_potential[assigned_row[j]] += delta;
                    col_potential[j] -= delta;
                } else {
                    min_reduced[j] -= delta;
                }
            }
            j_cur = j_next;
            if assigned_row[j_cur] == UNASSIGNED {
                break;
            }
        }

        // flip matched edges back along the augmenting path
        while j_cur != cols {
            let j_prev = parent[j_cur];
            assigned_row[j_cur] = assigned_row[j_prev];
            j_cur = j_prev;
        }
    }

    let mut assignment = vec![UNASSIGNED; rows];
    for j in 0..cols {
        if assigned_row[j] != UNASSIGNED {
            assignment[assigned_row[j]] = j;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .sum();
    (total, assignment)
}
