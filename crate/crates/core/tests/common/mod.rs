//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use esor_core::numerics::{dot, Matrix, QpProblem};
use rand::Rng;

/// Random strictly convex QP in 1 to 3 variables with a finite box and up to
/// four rows, all satisfied by a random interior point.
pub fn random_qp(rng: &mut impl Rng) -> QpProblem {
    let n = rng.gen_range(1..=3);
    let m: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum::<f64>()
                + if i == j { 0.1 } else { 0.0 };
        }
    }
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut p = QpProblem::new(h, q);
    let mut inner = vec![0.0; n];
    for (j, c) in inner.iter_mut().enumerate() {
        let lo = -rng.gen_range(0.5..2.0);
        let hi = rng.gen_range(0.5..2.0);
        *c = rng.gen_range(0.8 * lo..0.8 * hi);
        p = p.with_bounds(j, Some(lo), Some(hi));
    }
    for _ in 0..rng.gen_range(0..=4) {
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs = dot(&g, &inner) - rng.gen_range(0.0..0.5);
        p = p.with_constraint(g, rhs);
    }
    p
}

/// Every constraint as `g · v ≥ w`, box sides included.
fn halfspaces(p: &QpProblem) -> Vec<(Vec<f64>, f64)> {
    let n = p.dim();
    let mut out: Vec<(Vec<f64>, f64)> = p
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.rhs))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if let Some(lo) = p.lower[j] {
            out.push((e.clone(), lo));
        }
        if let Some(hi) = p.upper[j] {
            out.push((e.iter().map(|v| -v).collect(), -hi));
        }
    }
    out
}

pub fn feasible(p: &QpProblem, v: &[f64], tol: f64) -> bool {
    halfspaces(p).iter().all(|(g, w)| dot(g, v) >= w - tol)
}

/// Solves `M x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot vanishes.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(p, c);
        b.swap(p, c);
        for r in c + 1..n {
            let k = m[r][c] / m[c][c];
            for j in c..n {
                m[r][j] -= k * m[c][j];
            }
            b[r] -= k * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (b[i] - (i + 1..n).map(|k| m[i][k] * x[k]).sum::<f64>()) / m[i][i];
    }
    Some(x)
}

/// Exact minimizer by enumerating every set of at most `n` active
/// constraints. For a strictly convex problem the optimum minimizes the
/// objective on its own active set, so the best feasible candidate wins.
pub fn enumerate_active_sets(p: &QpProblem) -> Option<Vec<f64>> {
    let n = p.dim();
    let spaces = halfspaces(p);
    let m = spaces.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > n {
            continue;
        }
        let k = n + active.len();
        let mut kkt = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        for i in 0..n {
            for j in 0..n {
                kkt[i][j] = p.hessian[(i, j)];
            }
            rhs[i] = -p.linear[i];
        }
        for (r, &a) in active.iter().enumerate() {
            for j in 0..n {
                kkt[n + r][j] = spaces[a].0[j];
                kkt[j][n + r] = spaces[a].0[j];
            }
            rhs[n + r] = spaces[a].1;
        }
        let Some(sol) = gauss_solve(kkt, rhs) else {
            continue;
        };
        let v = sol[..n].to_vec();
        if !feasible(p, &v, 1e-10) {
            continue;
        }
        let f = p.objective(&v);
        if best.as_ref().is_none_or(|(b, _)| f < *b) {
            best = Some((f, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Best feasible point on a grid over the box, zoomed in around the
/// incumbent until the spacing is far below the target accuracy.
pub fn grid_search(p: &QpProblem) -> Option<Vec<f64>> {
    let n = p.dim();
    let lo: Vec<f64> = p
        .lower
        .iter()
        .map(|v| v.expect("oracle needs a finite box"))
        .collect();
    let hi: Vec<f64> = p
        .upper
        .iter()
        .map(|v| v.expect("oracle needs a finite box"))
        .collect();
    let coarse = match n {
        1 => 2001,
        2 => 201,
        _ => 31,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let scan = |lo: &[f64], hi: &[f64], pts: usize, best: &mut Option<(f64, Vec<f64>)>| {
        let total = pts.pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let v: Vec<f64> = (0..n)
                .map(|j| {
                    let k = rem % pts;
                    rem /= pts;
                    lo[j] + (hi[j] - lo[j]) * k as f64 / (pts - 1) as f64
                })
                .collect();
            if !feasible(p, &v, 0.0) {
                continue;
            }
            let f = p.objective(&v);
            if best.as_ref().is_none_or(|(b, _)| f < *b) {
                *best = Some((f, v));
            }
        }
    };
    scan(&lo, &hi, coarse, &mut best);
    let mut half: Vec<f64> = (0..n)
        .map(|j| 2.0 * (hi[j] - lo[j]) / (coarse - 1) as f64)
        .collect();
    for _ in 0..30 {
        let Some((_, c)) = best.clone() else { break };
        let zl: Vec<f64> = (0..n).map(|j| (c[j] - half[j]).max(lo[j])).collect();
        let zh: Vec<f64> = (0..n).map(|j| (c[j] + half[j]).min(hi[j])).collect();
        scan(&zl, &zh, 11, &mut best);
        half.iter_mut().for_each(|h| *h *= 0.5);
    }
    best.map(|(_, v)| v)
}

/// Oracle optimum from active-set enumeration, cross-checked against the
/// refined grid: a strictly feasible grid point can never beat the optimum.
pub fn oracle_objective(p: &QpProblem) -> Option<f64> {
    let exact = p.objective(&enumerate_active_sets(p)?);
    if let Some(g) = grid_search(p) {
        let fg = p.objective(&g);
        assert!(
            fg >= exact - 1e-9,
            "grid point {g:?} beats the enumerated optimum: {fg} < {exact}"
        );
    }
    Some(exact)
}
