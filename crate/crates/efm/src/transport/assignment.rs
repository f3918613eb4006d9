//! Exact optimal transport between equal-weight empirical measures:
//! assignment (equal sizes) and successive-shortest-path min-cost flow
//! (unequal sizes, uniform marginals).

use ndarray::{Array2, ArrayView2};

use crate::error::{EfmError, Result};
use crate::transport::plan::CouplingPlan;

/// Shortest-augmenting-path assignment (Jonker-Volgenant potentials),
/// O(n^2 m). Requires rows <= cols; returns the assigned column per row and
/// the total cost.
pub fn min_cost_assignment(cost: &ArrayView2<f64>) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    let m = cost.ncols();
    if n == 0 || n > m {
        return Err(EfmError::Input(format!("assignment: need 1 <= rows <= cols, got {}x{}", n, m)));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(EfmError::Numerical("assignment: non-finite cost entry".into()));
    }

    // 1-indexed with a virtual row 0; p[j] = row matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[[i, j]])
        .sum();
    Ok((assign, total))
}

fn pairwise_sq_cost(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let mut cost = Array2::<f64>::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            cost[[i, j]] = ra
                .iter()
                .zip(rb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    cost
}

/// Exact OT permutation between equal-size point sets under squared
/// Euclidean cost. Unequal sizes are an error by contract.
pub fn exact_ot_plan(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<CouplingPlan> {
    if a.nrows() != b.nrows() {
        return Err(EfmError::Input(format!(
            "exact_ot_plan: batch sizes differ ({} vs {})",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.nrows() == 0 {
        return Err(EfmError::Input("exact_ot_plan: empty batches".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(EfmError::Input(format!(
            "exact_ot_plan: dimensions differ ({} vs {})",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(EfmError::Numerical("exact_ot_plan: non-finite coordinate".into()));
    }
    let n = a.nrows();
    let cost = pairwise_sq_cost(&a, &b);
    let (assign, _) = min_cost_assignment(&cost.view())?;
    let plan = CouplingPlan {
        arity: 2,
        sizes: vec![n, n],
        support: assign.iter().enumerate().map(|(i, &j)| vec![i, j]).collect(),
        weights: vec![1.0 / n as f64; n],
        deterministic: true,
    };
    Ok(plan)
}

/// Optimal transport cost between uniform measures of different sizes, for a
/// given dense cost matrix. Successive shortest paths with Dijkstra
/// potentials on integer-scaled marginals (row supply m, column demand n).
/// Intended for modest sizes; guard keeps n*m within ~1e6.
pub fn uniform_transport_cost(cost: &ArrayView2<f64>) -> Result<f64> {
    let n = cost.nrows();
    let m = cost.ncols();
    if n == 0 || m == 0 {
        return Err(EfmError::Input("transport: empty cost matrix".into()));
    }
    if n * m > 1_000_000 {
        return Err(EfmError::Input(
            "transport: unequal-size instance too large; subsample to equal sizes".into(),
        ));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(EfmError::Numerical("transport: non-finite cost entry".into()));
    }

    // Nodes: 0 = source, 1..=n rows, n+1..=n+m cols, n+m+1 = sink.
    let rows_off = 1;
    let cols_off = 1 + n;
    let sink = n + m + 1;
    let v_count = n + m + 2;

    #[derive(Clone)]
    struct Edge {
        to: usize,
        cap: i64,
        cost: f64,
        rev: usize,
    }
    let mut graph: Vec<Vec<Edge>> = vec![Vec::new(); v_count];
    let add_edge = |graph: &mut Vec<Vec<Edge>>, from: usize, to: usize, cap: i64, cost: f64| {
        let rev_from = graph[to].len();
        let rev_to = graph[from].len();
        graph[from].push(Edge { to, cap, cost, rev: rev_from });
        graph[to].push(Edge { to: from, cap: 0, cost: -cost, rev: rev_to });
    };
    for i in 0..n {
        add_edge(&mut graph, 0, rows_off + i, m as i64, 0.0);
    }
    for i in 0..n {
        for j in 0..m {
            add_edge(&mut graph, rows_off + i, cols_off + j, i64::MAX / 4, cost[[i, j]]);
        }
    }
    for j in 0..m {
        add_edge(&mut graph, cols_off + j, sink, n as i64, 0.0);
    }

    let total_flow = (n as i64) * (m as i64);
    let mut flow = 0i64;
    let mut total_cost = 0.0f64;
    let mut potential = vec![0.0f64; v_count];
    // Costs are nonnegative, so zero initial potentials are valid.
    while flow < total_flow {
        // Dense Dijkstra over reduced costs.
        let mut dist = vec![f64::INFINITY; v_count];
        let mut visited = vec![false; v_count];
        let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); v_count];
        dist[0] = 0.0;
        for _ in 0..v_count {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for x in 0..v_count {
                if !visited[x] && dist[x] < best {
                    best = dist[x];
                    u = x;
                }
            }
            if u == usize::MAX {
                break;
            }
            visited[u] = true;
            for (ei, e) in graph[u].iter().enumerate() {
                if e.cap <= 0 {
                    continue;
                }
                let nd = dist[u] + e.cost + potential[u] - potential[e.to];
                if nd < dist[e.to] - 1e-15 {
                    dist[e.to] = nd;
                    prev[e.to] = (u, ei);
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(EfmError::Numerical("transport: no augmenting path".into()));
        }
        for x in 0..v_count {
            if dist[x].is_finite() {
                potential[x] += dist[x];
            }
        }
        // Bottleneck along the path.
        let mut push = total_flow - flow;
        let mut node = sink;
        while node != 0 {
            let (u, ei) = prev[node];
            push = push.min(graph[u][ei].cap);
            node = u;
        }
        let mut node = sink;
        while node != 0 {
            let (u, ei) = prev[node];
            let rev = graph[u][ei].rev;
            graph[u][ei].cap -= push;
            graph[node][rev].cap += push;
            total_cost += graph[u][ei].cost * push as f64;
            node = u;
        }
        flow += push;
    }
    Ok(total_cost / total_flow as f64)
}
