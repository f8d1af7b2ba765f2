//! Exact active-set solver for tiny strictly convex quadratic programs.
//!
//! ```text
//!     minimize    1/2 v' H v + q' v
//!     subject to  G v >= w          (one row per constraint)
//!                 lo <= v <= hi     (optional, per variable)
//! ```
//!
//! With at most four variables and eight rows every candidate active set can
//! be enumerated outright. Each candidate's KKT equality system is solved and
//! the feasible KKT point with the lowest objective wins; ties keep the
//! candidate enumerated first (smallest set, then lexicographic order).

use super::matrix::{dot, linear_solve, Matrix};
use super::NumericsError;

pub const MAX_VARIABLES: usize = 4;
pub const MAX_ROWS: usize = 8;
/// Primal feasibility tolerance used when accepting a candidate.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Multipliers above `-DUAL_TOL` count as dual feasible.
pub const DUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: Matrix,
    pub linear: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

/// Identifies one constraint of a [`QpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActiveConstraint {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub point: Vec<f64>,
    pub objective: f64,
    pub active: Vec<ActiveConstraint>,
    /// Multipliers aligned with `active`.
    pub multipliers: Vec<f64>,
}

impl QpProblem {
    pub fn new(hessian: Matrix, linear: Vec<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            constraints: Vec::new(),
            lower: vec![None; n],
            upper: vec![None; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// Adds `coeffs . v >= rhs`.
    pub fn with_constraint(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.constraints.push(LinearConstraint { coeffs, rhs });
        self
    }

    pub fn with_bounds(mut self, var: usize, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        let hv = self
            .hessian
            .mul_vec(v)
            .expect("validated problem has consistent dimensions");
        0.5 * dot(v, &hv) + dot(&self.linear, v)
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        let n = self.dim();
        if n == 0 || n > MAX_VARIABLES || self.constraints.len() > MAX_ROWS {
            return Err(NumericsError::ProblemTooLarge {
                variables: n,
                rows: self.constraints.len(),
            });
        }
        if self.hessian.rows() != n || self.hessian.cols() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n * n,
                found: self.hessian.rows() * self.hessian.cols(),
            });
        }
        if !self.hessian.is_symmetric(1e-12) {
            return Err(NumericsError::NotSymmetric);
        }
        if !self.hessian.is_positive_definite() {
            return Err(NumericsError::NotPositiveDefinite);
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: self.lower.len().min(self.upper.len()),
            });
        }
        for c in &self.constraints {
            if c.coeffs.len() != n {
                return Err(NumericsError::DimensionMismatch {
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFinite);
            }
        }
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        for j in 0..n {
            if let (Some(lo), Some(hi)) = (self.lower[j], self.upper[j]) {
                if lo > hi {
                    return Err(NumericsError::InvalidBounds {
                        var: j,
                        lower: lo,
                        upper: hi,
                    });
                }
            }
        }
        Ok(())
    }

    /// Every constraint, rows first, as `(id, coeffs, rhs)` with `coeffs . v >= rhs`.
    fn all_constraints(&self) -> Vec<(ActiveConstraint, Vec<f64>, f64)> {
        let n = self.dim();
        let unit = |j: usize, s: f64| {
            let mut e = vec![0.0; n];
            e[j] = s;
            e
        };
        let mut out: Vec<_> = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| (ActiveConstraint::Row(i), c.coeffs.clone(), c.rhs))
            .collect();
        out.extend(
            self.lower
                .iter()
                .enumerate()
                .filter_map(|(j, lo)| lo.map(|lo| (ActiveConstraint::Lower(j), unit(j, 1.0), lo))),
        );
        out.extend(
            self.upper.iter().enumerate().filter_map(|(j, hi)| {
                hi.map(|hi| (ActiveConstraint::Upper(j), unit(j, -1.0), -hi))
            }),
        );
        out
    }

    /// Smallest slack `coeffs . v - rhs` over all constraints, scaled per row.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        self.all_constraints()
            .iter()
            .map(|(_, g, w)| (w - dot(g, v)) / (1.0 + w.abs()))
            .fold(0.0, f64::max)
    }
}

/// Solves a tiny QP exactly. Returns [`NumericsError::Infeasible`] when no
/// candidate point satisfies every constraint.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, NumericsError> {
    problem.validate()?;
    let n = problem.dim();
    let cons = problem.all_constraints();
    let max_active = n.min(cons.len());

    let mut best_kkt: Option<QpSolution> = None;
    let mut best_primal: Option<QpSolution> = None;
    let improves = |cand: f64, best: &Option<QpSolution>| match best {
        None => true,
        Some(b) => cand < b.objective - 1e-12 * (1.0 + b.objective.abs()),
    };

    for size in 0..=max_active {
        for subset in combinations(cons.len(), size) {
            if conflicting_bounds(&subset, &cons) {
                continue;
            }
            let Some((point, multipliers)) = solve_kkt(problem, &cons, &subset) else {
                continue;
            };
            let primal_ok = cons
                .iter()
                .all(|(_, g, w)| dot(g, &point) - w >= -FEASIBILITY_TOL * (1.0 + w.abs()));
            if !primal_ok {
                continue;
            }
            let objective = problem.objective(&point);
            let dual_ok = multipliers.iter().all(|&l| l >= -DUAL_TOL);
            let candidate = || QpSolution {
                point: point.clone(),
                objective,
                active: subset.iter().map(|&i| cons[i].0).collect(),
                multipliers: multipliers.clone(),
            };
            if dual_ok && improves(objective, &best_kkt) {
                best_kkt = Some(candidate());
            }
            if improves(objective, &best_primal) {
                best_primal = Some(candidate());
            }
        }
    }
    best_kkt.or(best_primal).ok_or(NumericsError::Infeasible)
}

fn conflicting_bounds(subset: &[usize], cons: &[(ActiveConstraint, Vec<f64>, f64)]) -> bool {
    subset.iter().any(|&i| match cons[i].0 {
        ActiveConstraint::Lower(j) => subset
            .iter()
            .any(|&k| cons[k].0 == ActiveConstraint::Upper(j)),
        _ => false,
    })
}

/// Solves `[H -A'; A 0] [v; l] = [-q; w]` for the constraints in `subset`.
fn solve_kkt(
    problem: &QpProblem,
    cons: &[(ActiveConstraint, Vec<f64>, f64)],
    subset: &[usize],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = problem.dim();
    let k = subset.len();
    let dim = n + k;
    let mut kkt = Matrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = problem.hessian[(i, j)];
        }
        rhs[i] = -problem.linear[i];
    }
    for (a, &ci) in subset.iter().enumerate() {
        let (_, g, w) = &cons[ci];
        for j in 0..n {
            kkt[(j, n + a)] = -g[j];
            kkt[(n + a, j)] = g[j];
        }
        rhs[n + a] = *w;
    }
    let sol = linear_solve(&kkt, &rhs).ok()?;
    Some((sol[..n].to_vec(), sol[n..].to_vec()))
}

/// All `size`-element subsets of `0..n` in lexicographic order.
fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(
        start: usize,
        n: usize,
        size: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, size, current, out);
            current.pop();
        }
    }
    rec(0, n, size, &mut current, &mut out);
    out
}
