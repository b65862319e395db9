use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{safe_ln, Assignment, FactorGraph};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpMode {
    SumProduct,
    MaxProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpSettings {
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
    pub mode: BpMode,
}

impl Default for BpSettings {
    fn default() -> Self {
        BpSettings {
            max_iters: 100,
            damping: 0.5,
            tol: 1e-6,
            mode: BpMode::MaxProduct,
        }
    }
}

/// Merged log-table between two variables (parallel factors summed).
struct Edge {
    a: usize,
    b: usize,
    /// `|L_a| x |L_b|`, weighted log potentials.
    log: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn normalize(m: &mut [f64]) {
    let z = log_sum_exp(m);
    for x in m.iter_mut() {
        *x -= z;
    }
}

fn merged_edges(g: &FactorGraph) -> Vec<Edge> {
    let mut map: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for f in &g.pairwise {
        let (na, nb) = (g.domain(f.a), g.domain(f.b));
        let (lo, hi) = (f.a.min(f.b), f.a.max(f.b));
        let entry = map.entry((lo, hi)).or_insert_with(|| vec![0.0; na * nb]);
        for i in 0..na {
            for j in 0..nb {
                let v = f.weight * safe_ln(f.table[i * nb + j]);
                if f.a == lo {
                    entry[i * nb + j] += v;
                } else {
                    entry[j * na + i] += v;
                }
            }
        }
    }
    map.into_iter().map(|((a, b), log)| Edge { a, b, log }).collect()
}

/// Loopy belief propagation in log space with synchronous damped updates.
///
/// Messages are normalized to log-sum-exp zero. Decoding picks each variable's
/// belief argmax in index order, conditioning on already decoded neighbours so
/// that ties cannot produce an inconsistent labeling; ties go to the smallest index.
pub fn run_loopy_bp(g: &FactorGraph, s: &BpSettings) -> Result<Assignment> {
    g.validate()?;
    let n = g.variables.len();
    let unary: Vec<Vec<f64>> = g.unaries.iter().map(|u| u.iter().map(|&x| safe_ln(x)).collect()).collect();
    let edges = merged_edges(g);
    // msgs[2e] : a -> b (over L_b), msgs[2e+1] : b -> a (over L_a)
    let mut msgs: Vec<Vec<f64>> = Vec::with_capacity(2 * edges.len());
    let mut incident: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for (e, ed) in edges.iter().enumerate() {
        let (na, nb) = (g.domain(ed.a), g.domain(ed.b));
        msgs.push(vec![-(nb as f64).ln(); nb]);
        msgs.push(vec![-(na as f64).ln(); na]);
        incident[ed.a].push((e, true));
        incident[ed.b].push((e, false));
    }

    let belief = |msgs: &[Vec<f64>], v: usize| -> Vec<f64> {
        let mut b = unary[v].clone();
        for &(e, is_a) in &incident[v] {
            let m = &msgs[2 * e + usize::from(is_a)];
            for (x, y) in b.iter_mut().zip(m) {
                *x += y;
            }
        }
        b
    };

    let mut converged = edges.is_empty();
    let mut iterations = 0;
    if !converged {
        for it in 0..s.max_iters {
            iterations = it + 1;
            let beliefs: Vec<Vec<f64>> = (0..n).map(|v| belief(&msgs, v)).collect();
            let mut next = msgs.clone();
            let mut delta: f64 = 0.0;
            for (e, ed) in edges.iter().enumerate() {
                let (na, nb) = (g.domain(ed.a), g.domain(ed.b));
                for dir in 0..2 {
                    // dir 0: a -> b, dir 1: b -> a
                    let (src, ns, nt) = if dir == 0 { (ed.a, na, nb) } else { (ed.b, nb, na) };
                    let back = &msgs[2 * e + 1 - dir];
                    let cavity: Vec<f64> = (0..ns).map(|i| beliefs[src][i] - back[i]).collect();
                    let mut out = vec![0.0; nt];
                    let mut terms = vec![0.0; ns];
                    for (t, o) in out.iter_mut().enumerate() {
                        for (i, term) in terms.iter_mut().enumerate() {
                            let pot = if dir == 0 { ed.log[i * nb + t] } else { ed.log[t * nb + i] };
                            *term = cavity[i] + pot;
                        }
                        *o = match s.mode {
                            BpMode::SumProduct => log_sum_exp(&terms),
                            BpMode::MaxProduct => terms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        };
                    }
                    normalize(&mut out);
                    let old = &msgs[2 * e + dir];
                    for (o, p) in out.iter_mut().zip(old) {
                        *o = (1.0 - s.damping) * *o + s.damping * p;
                    }
                    normalize(&mut out);
                    for (o, p) in out.iter().zip(old) {
                        delta = delta.max((o - p).abs());
                    }
                    next[2 * e + dir] = out;
                }
            }
            msgs = next;
            if delta < s.tol {
                converged = true;
                break;
            }
        }
    }

    let mut idx: Vec<Option<usize>> = vec![None; n];
    for v in 0..n {
        let mut b = unary[v].clone();
        for &(e, is_a) in &incident[v] {
            let ed = &edges[e];
            let other = if is_a { ed.b } else { ed.a };
            match idx[other] {
                Some(j) => {
                    let nb = g.domain(ed.b);
                    for (i, x) in b.iter_mut().enumerate() {
                        *x += if is_a { ed.log[i * nb + j] } else { ed.log[j * nb + i] };
                    }
                }
                None => {
                    for (x, y) in b.iter_mut().zip(&msgs[2 * e + usize::from(is_a)]) {
                        *x += y;
                    }
                }
            }
        }
        let mut best = 0;
        for i in 1..b.len() {
            if b[i] > b[best] {
                best = i;
            }
        }
        idx[v] = Some(best);
    }
    let indices = idx.into_iter().map(|i| i.unwrap()).collect();
    Ok(g.assignment(indices, converged, iterations))
}
