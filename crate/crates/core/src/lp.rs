//! Exact rational linear programming.
//!
//! Dense two-phase tableau simplex with Bland's rule. All variables are
//! non-negative. Infeasible programs return a Farkas vector `y` (one entry
//! per constraint, in the caller's row order and sign convention) such that
//! `y^T A <= 0` on every variable column, `y_i <= 0` on `<=` rows,
//! `y_i >= 0` on `>=` rows and `y^T b > 0`.

use num::{Signed, Zero};

use crate::scalar::{qi, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Q)>,
    pub relation: Relation,
    pub rhs: Q,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    num_vars: usize,
    constraints: Vec<Constraint>,
    objective: Option<Vec<Q>>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<Q>, value: Q },
    Infeasible { farkas: Vec<Q> },
    Unbounded,
}

impl LpOutcome {
    pub fn solution(&self) -> Option<&[Q]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible { .. })
    }
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            constraints: Vec::new(),
            objective: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Appends a fresh variable and returns its index.
    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        if let Some(obj) = &mut self.objective {
            obj.push(Q::zero());
        }
        self.num_vars - 1
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Adds `sum coeffs[i].1 * x[coeffs[i].0]  (relation)  rhs`.
    pub fn add_constraint(&mut self, coeffs: Vec<(usize, Q)>, relation: Relation, rhs: Q) {
        debug_assert!(coeffs.iter().all(|(i, _)| *i < self.num_vars));
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn add_dense(&mut self, row: &[Q], relation: Relation, rhs: Q) {
        let coeffs = row
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| (i, v.clone()))
            .collect();
        self.add_constraint(coeffs, relation, rhs);
    }

    /// Minimization objective.
    pub fn set_objective(&mut self, c: Vec<Q>) {
        assert_eq!(c.len(), self.num_vars);
        self.objective = Some(c);
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }

    /// Checks a Farkas vector against this program.
    pub fn verify_farkas(&self, y: &[Q]) -> bool {
        if y.len() != self.constraints.len() {
            return false;
        }
        let mut col = vec![Q::zero(); self.num_vars];
        let mut yb = Q::zero();
        for (c, yi) in self.constraints.iter().zip(y) {
            match c.relation {
                Relation::Le if yi.is_positive() => return false,
                Relation::Ge if yi.is_negative() => return false,
                _ => {}
            }
            for (j, a) in &c.coeffs {
                col[*j] += a * yi;
            }
            yb += &c.rhs * yi;
        }
        yb.is_positive() && col.iter().all(|v| !v.is_positive())
    }

    /// Checks that `x` satisfies every constraint exactly.
    pub fn is_feasible_point(&self, x: &[Q]) -> bool {
        x.len() == self.num_vars
            && x.iter().all(|v| !v.is_negative())
            && self.constraints.iter().all(|c| {
                let lhs = c
                    .coeffs
                    .iter()
                    .fold(Q::zero(), |acc, (j, a)| acc + a * &x[*j]);
                match c.relation {
                    Relation::Eq => lhs == c.rhs,
                    Relation::Le => lhs <= c.rhs,
                    Relation::Ge => lhs >= c.rhs,
                }
            })
    }
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    rhs: Vec<Q>,
    basis: Vec<usize>,
    sign: Vec<bool>,
    num_structural: usize,
    num_cols: usize,
    artificial_start: usize,
    dropped: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n = lp.num_vars;
        let slack_count = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let artificial_start = n + slack_count;
        let num_cols = artificial_start + m;
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut sign = Vec::with_capacity(m);
        let mut slack = n;
        for (i, c) in lp.constraints.iter().enumerate() {
            let mut row = vec![Q::zero(); num_cols];
            for (j, a) in &c.coeffs {
                row[*j] += a;
            }
            match c.relation {
                Relation::Le => {
                    row[slack] = qi(1);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = qi(-1);
                    slack += 1;
                }
                Relation::Eq => {}
            }
            let mut b = c.rhs.clone();
            let flip = b.is_negative();
            if flip {
                for v in row.iter_mut() {
                    if !v.is_zero() {
                        *v = -v.clone();
                    }
                }
                b = -b;
            }
            row[artificial_start + i] = qi(1);
            rows.push(row);
            rhs.push(b);
            sign.push(flip);
        }
        Tableau {
            rows,
            rhs,
            basis: (artificial_start..artificial_start + m).collect(),
            sign,
            num_structural: n,
            num_cols,
            artificial_start,
            dropped: vec![false; m],
        }
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [Q], obj_rhs: &mut Q) {
        let p = self.rows[r][c].clone();
        let nz: Vec<usize> = (0..self.num_cols)
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        for &j in &nz {
            self.rows[r][j] /= &p;
        }
        self.rhs[r] /= &p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for &j in &nz {
                let delta = &f * &pivot_row[j];
                self.rows[i][j] -= delta;
            }
            let delta = &f * &pivot_rhs;
            self.rhs[i] -= delta;
        }
        if !obj[c].is_zero() {
            let f = obj[c].clone();
            for &j in &nz {
                let delta = &f * &pivot_row[j];
                obj[j] -= delta;
            }
            *obj_rhs -= &f * &pivot_rhs;
        }
        self.basis[r] = c;
    }

    /// Bland's rule iterations; returns false when unbounded.
    fn optimize(&mut self, obj: &mut [Q], obj_rhs: &mut Q, eligible: impl Fn(usize) -> bool) -> bool {
        loop {
            let entering = (0..self.num_cols).find(|&j| eligible(j) && obj[j].is_negative());
            let Some(c) = entering else { return true };
            let mut best: Option<(usize, Q)> = None;
            for i in 0..self.rows.len() {
                if self.dropped[i] || !self.rows[i][c].is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / &self.rows[i][c];
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((r, _)) = best else { return false };
            self.pivot(r, c, obj, obj_rhs);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let m = self.rows.len();
        // phase 1: minimize the sum of artificials
        let mut obj = vec![Q::zero(); self.num_cols];
        let mut obj_rhs = Q::zero();
        for j in self.artificial_start..self.num_cols {
            obj[j] = qi(1);
        }
        for i in 0..m {
            for j in 0..self.num_cols {
                if !self.rows[i][j].is_zero() {
                    obj[j] -= &self.rows[i][j];
                }
            }
            obj_rhs -= &self.rhs[i];
        }
        self.optimize(&mut obj, &mut obj_rhs, |_| true);
        let phase1_value = -obj_rhs.clone();
        if phase1_value.is_positive() {
            let farkas = (0..m)
                .map(|i| {
                    let y = qi(1) - &obj[self.artificial_start + i];
                    if self.sign[i] {
                        -y
                    } else {
                        y
                    }
                })
                .collect();
            return LpOutcome::Infeasible { farkas };
        }
        // drive zero-level artificials out of the basis
        for r in 0..m {
            if self.basis[r] < self.artificial_start {
                continue;
            }
            match (0..self.artificial_start).find(|&j| !self.rows[r][j].is_zero()) {
                Some(c) => {
                    let mut dummy = vec![Q::zero(); self.num_cols];
                    let mut dummy_rhs = Q::zero();
                    self.pivot(r, c, &mut dummy, &mut dummy_rhs);
                }
                None => self.dropped[r] = true,
            }
        }
        let cost = lp
            .objective
            .clone()
            .unwrap_or_else(|| vec![Q::zero(); self.num_structural]);
        let mut obj = vec![Q::zero(); self.num_cols];
        obj[..self.num_structural].clone_from_slice(&cost);
        let mut obj_rhs = Q::zero();
        for r in 0..m {
            if self.dropped[r] {
                continue;
            }
            let b = self.basis[r];
            if b < self.num_structural && !cost[b].is_zero() {
                let cb = cost[b].clone();
                for j in 0..self.num_cols {
                    if !self.rows[r][j].is_zero() {
                        obj[j] -= &cb * &self.rows[r][j];
                    }
                }
                obj_rhs -= &cb * &self.rhs[r];
            }
        }
        let art = self.artificial_start;
        if !self.optimize(&mut obj, &mut obj_rhs, |j| j < art) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![Q::zero(); self.num_structural];
        for r in 0..m {
            if !self.dropped[r] && self.basis[r] < self.num_structural {
                x[self.basis[r]] = self.rhs[r].clone();
            }
        }
        LpOutcome::Optimal { x, value: -obj_rhs }
    }
}

/// Solves `sum_j lambda_j g_j = v`, `lambda >= 0`.
///
/// Returns `Ok(lambda)` or `Err(z)` with `z . g_j >= 0` for all `j` and
/// `z . v < 0`.
pub fn conic_combination(generators: &[Vec<Q>], v: &[Q]) -> Result<Vec<Q>, Vec<Q>> {
    let d = v.len();
    let mut lp = LinearProgram::new(generators.len());
    for i in 0..d {
        let coeffs = generators
            .iter()
            .enumerate()
            .filter(|(_, g)| !g[i].is_zero())
            .map(|(j, g)| (j, g[i].clone()))
            .collect();
        lp.add_constraint(coeffs, Relation::Eq, v[i].clone());
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => Ok(x),
        LpOutcome::Infeasible { farkas } => Err(farkas.into_iter().map(|y| -y).collect()),
        LpOutcome::Unbounded => unreachable!("feasibility programs have no objective"),
    }
}
