use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};

/// Zero potentials are floored here before taking logs.
pub const POTENTIAL_FLOOR: f64 = 1e-300;
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Contact,
    Repetition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    /// Part id this variable stands for.
    pub id: usize,
    /// Label values (candidate exemplar ids, or material indices).
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseFactor {
    pub a: usize,
    pub b: usize,
    /// Row-major `|L_a| x |L_b|`, linear space.
    pub table: Vec<f64>,
    pub weight: f64,
    pub kind: FactorKind,
}

/// A pairwise MRF: one unary table per variable and weighted pairwise tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub variables: Vec<Variable>,
    pub unaries: Vec<Vec<f64>>,
    pub pairwise: Vec<PairwiseFactor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Label index per variable.
    pub indices: Vec<usize>,
    /// Label value per variable.
    pub labels: Vec<usize>,
    pub log_potential: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) fn safe_ln(x: f64) -> f64 {
    x.max(POTENTIAL_FLOOR).ln()
}

impl FactorGraph {
    pub fn new() -> Self {
        FactorGraph {
            variables: Vec::new(),
            unaries: Vec::new(),
            pairwise: Vec::new(),
        }
    }

    pub fn add_variable(&mut self, id: usize, labels: Vec<usize>, unary: Vec<f64>) -> usize {
        self.variables.push(Variable { id, labels });
        self.unaries.push(unary);
        self.variables.len() - 1
    }

    pub fn add_pairwise(&mut self, a: usize, b: usize, table: Vec<f64>, weight: f64, kind: FactorKind) {
        self.pairwise.push(PairwiseFactor {
            a,
            b,
            table,
            weight,
            kind,
        });
    }

    pub fn domain(&self, v: usize) -> usize {
        self.variables[v].labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.unaries.len() != self.variables.len() {
            return Err(ReformError::FactorGraph("one unary table per variable required".into()));
        }
        for (v, u) in self.unaries.iter().enumerate() {
            if u.len() != self.domain(v) || u.is_empty() {
                return Err(ReformError::FactorGraph(format!("unary of variable {v} has wrong size")));
            }
            if u.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(ReformError::FactorGraph(format!("unary of variable {v} has a non-finite or negative entry")));
            }
        }
        for (k, f) in self.pairwise.iter().enumerate() {
            if f.a >= self.variables.len() || f.b >= self.variables.len() || f.a == f.b {
                return Err(ReformError::FactorGraph(format!("factor {k} references invalid variables")));
            }
            if f.table.len() != self.domain(f.a) * self.domain(f.b) {
                return Err(ReformError::FactorGraph(format!("factor {k} table has wrong size")));
            }
            if !(f.weight.is_finite() && f.weight >= 0.0) || f.table.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(ReformError::FactorGraph(format!("factor {k} has a non-finite or negative entry")));
            }
        }
        Ok(())
    }

    /// log F of a full labeling given by label indices.
    pub fn log_potential(&self, idx: &[usize]) -> f64 {
        let mut s: f64 = self.unaries.iter().zip(idx).map(|(u, &i)| safe_ln(u[i])).sum();
        for f in &self.pairwise {
            let nb = self.domain(f.b);
            s += f.weight * safe_ln(f.table[idx[f.a] * nb + idx[f.b]]);
        }
        s
    }

    pub fn assignment(&self, indices: Vec<usize>, converged: bool, iterations: usize) -> Assignment {
        Assignment {
            labels: indices.iter().enumerate().map(|(v, &i)| self.variables[v].labels[i]).collect(),
            log_potential: self.log_potential(&indices),
            indices,
            converged,
            iterations,
        }
    }

    /// Removes labels whose unary is exactly zero; pairwise tables are sliced to match.
    /// Returns the variable index that lost its whole domain, if any.
    pub fn prune_zero_unaries(&mut self) -> std::result::Result<(), usize> {
        let keep: Vec<Vec<usize>> = self
            .unaries
            .iter()
            .map(|u| (0..u.len()).filter(|&i| u[i] > 0.0).collect())
            .collect();
        if let Some(v) = keep.iter().position(|k| k.is_empty()) {
            return Err(v);
        }
        for f in &mut self.pairwise {
            let nb = self.variables[f.b].labels.len();
            let mut t = Vec::with_capacity(keep[f.a].len() * keep[f.b].len());
            for &i in &keep[f.a] {
                for &j in &keep[f.b] {
                    t.push(f.table[i * nb + j]);
                }
            }
            f.table = t;
        }
        for (v, k) in keep.iter().enumerate() {
            self.variables[v].labels = k.iter().map(|&i| self.variables[v].labels[i]).collect();
            self.unaries[v] = k.iter().map(|&i| self.unaries[v][i]).collect();
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Default for FactorGraph {
    fn default() -> Self {
        FactorGraph::new()
    }
}

/// Exhaustive MAP; ties keep the lexicographically first labeling.
pub fn brute_force_map(g: &FactorGraph) -> Result<Assignment> {
    g.validate()?;
    let n = g.variables.len();
    let space: u128 = (0..n).map(|v| g.domain(v) as u128).product();
    if space > BRUTE_FORCE_LIMIT {
        return Err(ReformError::LabelSpaceTooLarge(space));
    }
    let mut idx = vec![0usize; n];
    let mut best = idx.clone();
    let mut best_val = f64::NEG_INFINITY;
    loop {
        let val = g.log_potential(&idx);
        if val > best_val {
            best_val = val;
            best.clone_from(&idx);
        }
        // Odometer with the last variable fastest.
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(g.assignment(best, true, 0));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < g.domain(k) {
                break;
            }
            idx[k] = 0;
        }
    }
}
