//! Dual active-set solver for `min |x - x0|^2` subject to `A x <= b`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    /// Sparse row: (variable, coefficient).
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(k, c)| c * x[k]).sum()
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.value(x)
    }

    fn dense(&self, n: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        for &(k, c) in &self.coeffs {
            v[k] += c;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers per constraint (zero when inactive).
    pub multipliers: Vec<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    /// The constraint that could not be satisfied together with the active set.
    Infeasible(usize),
    NoProgress,
}

const FEAS_TOL: f64 = 1e-12;

/// Goldfarb–Idnani iterations specialised to an identity Hessian. Starts from the
/// unconstrained optimum `x0` and adds the most violated constraint until all hold.
pub fn project_onto_polyhedron(x0: &[f64], constraints: &[LinearConstraint]) -> Result<QpSolution, QpError> {
    let n = x0.len();
    let rows: Vec<DVector<f64>> = constraints.iter().map(|c| c.dense(n)).collect();
    let mut x = DVector::from_column_slice(x0);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_iters = 50 * (constraints.len() + n + 1);
    let mut iterations = 0;
    loop {
        // Most violated constraint, scaled by the row norm.
        let mut pick = None;
        let mut worst = FEAS_TOL;
        for (k, c) in constraints.iter().enumerate() {
            if active.contains(&k) {
                continue;
            }
            let norm = rows[k].norm().max(1e-300);
            let v = (rows[k].dot(&x) - c.rhs) / norm;
            if v > worst {
                worst = v;
                pick = Some(k);
            }
        }
        let Some(p) = pick else { break };
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iters {
                return Err(QpError::NoProgress);
            }
            let np = &rows[p];
            // r = (N^T N)^-1 N^T n_p and z = n_p - N r, in the decrease direction of a_p . x.
            let (z, r) = if active.is_empty() {
                (np.clone(), DVector::zeros(0))
            } else {
                let nmat = DMatrix::from_columns(&active.iter().map(|&k| rows[k].clone()).collect::<Vec<_>>());
                let gram = nmat.transpose() * &nmat;
                let rhs = nmat.transpose() * np;
                let r = match gram.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => gram.svd(true, true).solve(&rhs, 1e-14).map_err(|_| QpError::NoProgress)?,
                };
                (np - &nmat * &r, r)
            };
            let violation = np.dot(&x) - constraints[p].rhs;
            let zz = z.dot(&z);
            let t2 = if zz > 1e-20 * np.dot(np).max(1e-300) { violation / zz } else { f64::INFINITY };
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (a, &ra) in r.iter().enumerate() {
                if ra > 1e-14 {
                    let t = u[a] / ra;
                    if t < t1 {
                        t1 = t;
                        block = Some(a);
                    }
                }
            }
            if t1.is_infinite() && t2.is_infinite() {
                return Err(QpError::Infeasible(p));
            }
            if t2.is_infinite() {
                // Dual step only: release the blocking constraint.
                let a = block.unwrap();
                for (ua, ra) in u.iter_mut().zip(r.iter()) {
                    *ua -= t1 * ra;
                }
                up += t1;
                active.remove(a);
                u.remove(a);
                continue;
            }
            let t = t1.min(t2);
            x -= &z * t;
            for (ua, ra) in u.iter_mut().zip(r.iter()) {
                *ua -= t * ra;
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let a = block.unwrap();
            active.remove(a);
            u.remove(a);
        }
    }
    polish(&mut x, constraints, &rows);
    let mut multipliers = vec![0.0; constraints.len()];
    for (&k, &v) in active.iter().zip(&u) {
        // The objective is |x - x0|^2, twice the solver's scaling.
        multipliers[k] = 2.0 * v;
    }
    Ok(QpSolution {
        x: x.as_slice().to_vec(),
        multipliers,
        active,
        iterations,
    })
}

/// Removes round-off violations left by the active-set steps so every constraint
/// holds exactly in floating point. Moves are a few ulps of the data.
fn polish(x: &mut DVector<f64>, constraints: &[LinearConstraint], rows: &[DVector<f64>]) {
    for _ in 0..32 {
        let mut clean = true;
        for (c, row) in constraints.iter().zip(rows) {
            let v = c.value(x.as_slice()) - c.rhs;
            if v <= 0.0 {
                continue;
            }
            clean = false;
            let scale = c.rhs.abs().max(c.coeffs.iter().map(|&(k, a)| (a * x[k]).abs()).fold(0.0, f64::max));
            let step = (v + 4.0 * f64::EPSILON * scale) / row.dot(row).max(1e-300);
            *x -= row * step;
        }
        if clean {
            return;
        }
    }
}

/// Largest KKT residual: stationarity, primal feasibility, dual sign and complementarity.
pub fn kkt_residual(x0: &[f64], constraints: &[LinearConstraint], sol: &QpSolution) -> f64 {
    let n = x0.len();
    let mut grad: Vec<f64> = (0..n).map(|k| 2.0 * (sol.x[k] - x0[k])).collect();
    let mut worst: f64 = 0.0;
    for (c, &mu) in constraints.iter().zip(&sol.multipliers) {
        for &(k, a) in &c.coeffs {
            grad[k] += mu * a;
        }
        worst = worst.max(-c.slack(&sol.x)).max(-mu).max((mu * c.slack(&sol.x)).abs());
    }
    grad.iter().fold(worst, |w, g| w.max(g.abs()))
}
