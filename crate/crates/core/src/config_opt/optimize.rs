use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{evaluate, edge_dir, AngleConstraint, AngleOptParams, AngleProblem, Configuration, ConstraintSet, Motion, SlideParam};
use crate::error::Result;
use crate::exemplar_db::Database;
use crate::geometry::Vec3;
use crate::structure::GROUND;

const DEG: f64 = 180.0 / std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSettings {
    pub w_l: f64,
    pub w_r: f64,
    pub sigma: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub threshold: f64,
}

impl From<&AngleOptParams> for OptimizeSettings {
    fn from(p: &AngleOptParams) -> Self {
        OptimizeSettings {
            w_l: p.w_l,
            w_r: p.w_r,
            sigma: p.sigma,
            grad_tol: p.grad_tol,
            max_iters: p.max_iters,
            threshold: p.threshold,
        }
    }
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        OptimizeSettings::from(&AngleOptParams::default())
    }
}

/// Folded angle in degrees between two directions.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    angle_and_grads(a, b).0
}

/// Folded angle and its gradients with respect to both directions.
fn angle_and_grads(a: &Vec3, b: &Vec3) -> (f64, Vec3, Vec3) {
    let (na, nb) = (a.norm(), b.norm());
    let c = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    let g = c.abs();
    let theta = g.acos() * DEG;
    let dtheta_dc = -DEG * c.signum() / (1.0 - g * g).max(1e-24).sqrt();
    let dc_da = b / (na * nb) - a * (c / (na * na));
    let dc_db = a / (na * nb) - b * (c / (nb * nb));
    (theta, dc_da * dtheta_dc, dc_db * dtheta_dc)
}

struct Rot {
    part: usize,
    var: usize,
    pivot: Vec3,
    /// Distances from the pivot to the two ends.
    a: f64,
    b: f64,
}

struct Slide {
    part: usize,
    end: usize,
    host: usize,
    var: usize,
    host_seg: [Vec3; 2],
}

/// The angle objective of one constraint set over its free variables.
pub struct Objective<'a> {
    problem: &'a AngleProblem,
    settings: OptimizeSettings,
    rots: Vec<Rot>,
    slides: Vec<Slide>,
    /// (edge index, target) of retained constrained edges.
    terms: Vec<(usize, f64)>,
    n: usize,
    x0: Vec<f64>,
}

enum DirSource {
    Fixed(Vec3),
    Rot(usize),
    /// Slide variables per end (`None` = that end stays) and the original segment.
    Slide([Option<usize>; 2], [Vec3; 2]),
}

fn host_point(seg: &[Vec3; 2], t: f64) -> Vec3 {
    seg[0] * t + seg[1] * (1.0 - t)
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a AngleProblem, constraints: &[AngleConstraint], set: &ConstraintSet, settings: &OptimizeSettings) -> Self {
        let mut rots = Vec::new();
        let mut slides = Vec::new();
        let mut x0 = Vec::new();
        for (&id, m) in &set.motions {
            let seg = problem.parts[&id].segment.expect("moving parts are linear");
            match m {
                Motion::Rotate { pivot, .. } => {
                    let d = (seg[1] - seg[0]).normalize();
                    rots.push(Rot {
                        part: id,
                        var: x0.len(),
                        pivot: *pivot,
                        a: (pivot - seg[0]).norm(),
                        b: (seg[1] - pivot).norm(),
                    });
                    x0.extend_from_slice(d.as_slice());
                }
                Motion::Slide { ends } => {
                    for (end, se) in ends.iter().enumerate() {
                        let Some(se) = se else { continue };
                        let host_seg = problem.parts[&se.host].segment.expect("hosts are linear");
                        // Start from the projection of the current end onto the host.
                        let d = host_seg[0] - host_seg[1];
                        let t = ((seg[end] - host_seg[1]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                        slides.push(Slide {
                            part: id,
                            end,
                            host: se.host,
                            var: x0.len(),
                            host_seg,
                        });
                        x0.push(t);
                    }
                }
            }
        }
        let terms = constraints
            .iter()
            .filter(|c| c.active && !set.dropped.contains(&c.edge))
            .map(|c| (c.edge, c.target))
            .collect();
        Objective {
            problem,
            settings: *settings,
            rots,
            slides,
            terms,
            n: x0.len(),
            x0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn initial(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn is_bounded(&self, k: usize) -> bool {
        self.slides.iter().any(|s| s.var == k)
    }

    pub fn project(&self, x: &mut [f64]) {
        for s in &self.slides {
            x[s.var] = x[s.var].clamp(0.0, 1.0);
        }
    }

    fn source(&self, id: usize) -> Option<DirSource> {
        if let Some(k) = self.rots.iter().position(|r| r.part == id) {
            return Some(DirSource::Rot(k));
        }
        let mine: Vec<&Slide> = self.slides.iter().filter(|s| s.part == id).collect();
        if !mine.is_empty() {
            let mut vars = [None, None];
            for s in mine {
                vars[s.end] = Some(s.var);
            }
            let seg = self.problem.parts[&id].segment.unwrap();
            return Some(DirSource::Slide(vars, seg));
        }
        None
    }

    fn dir(&self, src: &DirSource, x: &[f64]) -> Vec3 {
        match src {
            DirSource::Fixed(d) => *d,
            DirSource::Rot(k) => {
                let v = self.rots[*k].var;
                Vec3::new(x[v], x[v + 1], x[v + 2])
            }
            DirSource::Slide(vars, seg) => self.slide_end(vars[1], seg[1], x) - self.slide_end(vars[0], seg[0], x),
        }
    }

    fn slide_end(&self, var: Option<usize>, stay: Vec3, x: &[f64]) -> Vec3 {
        match var {
            Some(v) => {
                let s = self.slides.iter().find(|s| s.var == v).unwrap();
                host_point(&s.host_seg, x[v])
            }
            None => stay,
        }
    }

    /// Adds `g . d(dir)/dx` into `grad`.
    fn push_dir_grad(&self, src: &DirSource, g: &Vec3, grad: &mut [f64]) {
        match src {
            DirSource::Fixed(_) => {}
            DirSource::Rot(k) => {
                let v = self.rots[*k].var;
                for c in 0..3 {
                    grad[v + c] += g[c];
                }
            }
            DirSource::Slide(vars, _) => {
                for (end, var) in vars.iter().enumerate() {
                    if let Some(v) = var {
                        let s = self.slides.iter().find(|s| s.var == *v).unwrap();
                        let dp = s.host_seg[0] - s.host_seg[1];
                        let sign = if end == 1 { 1.0 } else { -1.0 };
                        grad[*v] += sign * g.dot(&dp);
                    }
                }
            }
        }
    }

    fn term_sources(&self, edge: usize) -> Option<(DirSource, DirSource)> {
        let e = &self.problem.edges[edge];
        let empty = BTreeMap::new();
        let src = |id: usize| -> Option<DirSource> {
            match self.source(id) {
                Some(s) => Some(s),
                None => edge_dir(self.problem, &empty, e, id).map(DirSource::Fixed),
            }
        };
        Some((src(e.i)?, src(e.j)?))
    }

    /// Objective value and gradient.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut grad = vec![0.0; self.n];
        for &(edge, target) in &self.terms {
            let Some((si, sj)) = self.term_sources(edge) else { continue };
            let (di, dj) = (self.dir(&si, x), self.dir(&sj, x));
            let (theta, gi, gj) = angle_and_grads(&di, &dj);
            let r = theta - target;
            f += r * r;
            self.push_dir_grad(&si, &(gi * (2.0 * r)), &mut grad);
            self.push_dir_grad(&sj, &(gj * (2.0 * r)), &mut grad);
        }
        // Length preservation of rotating parts; identically zero under this parametrization.
        for r in &self.rots {
            let w = Vec3::new(x[r.var], x[r.var + 1], x[r.var + 2]);
            let l2 = ((w / w.norm()) * (r.a + r.b)).norm_squared();
            let l0 = (r.a + r.b) * (r.a + r.b);
            f += self.settings.w_l * (l2 - l0) * (l2 - l0);
        }
        // Repulsion between parts sliding on common hosts, one Gaussian over all shared hosts.
        let s2 = self.settings.sigma * self.settings.sigma;
        for (_, _, pairs) in self.repulsion_pairs() {
            let expo: f64 = pairs.iter().map(|&(a, b, l2)| l2 * (x[a] - x[b]).powi(2)).sum::<f64>() / s2;
            let rep = self.settings.w_r * (-expo).exp();
            f += rep;
            for &(a, b, l2) in &pairs {
                let d = rep * (-2.0 * l2 * (x[a] - x[b]) / s2);
                grad[a] += d;
                grad[b] -= d;
            }
        }
        (f, grad)
    }

    /// Per pair of sliding parts: (slide variable, slide variable, squared host length) on shared hosts.
    fn repulsion_pairs(&self) -> Vec<(usize, usize, Vec<(usize, usize, f64)>)> {
        let mut out: Vec<(usize, usize, Vec<(usize, usize, f64)>)> = Vec::new();
        for (k, sa) in self.slides.iter().enumerate() {
            for sb in &self.slides[k + 1..] {
                if sa.host != sb.host || sa.part == sb.part {
                    continue;
                }
                let (m, n) = (sa.part.min(sb.part), sa.part.max(sb.part));
                let l2 = (sa.host_seg[0] - sa.host_seg[1]).norm_squared();
                match out.iter_mut().find(|(a, b, _)| *a == m && *b == n) {
                    Some(e) => e.2.push((sa.var, sb.var, l2)),
                    None => out.push((m, n, vec![(sa.var, sb.var, l2)])),
                }
            }
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }

    /// Segments of every moving part at `x`.
    pub fn segments(&self, x: &[f64]) -> BTreeMap<usize, [Vec3; 2]> {
        let mut out = BTreeMap::new();
        for r in &self.rots {
            let u = Vec3::new(x[r.var], x[r.var + 1], x[r.var + 2]).normalize();
            out.insert(r.part, [r.pivot - u * r.a, r.pivot + u * r.b]);
        }
        for s in &self.slides {
            let seg = *out.entry(s.part).or_insert_with(|| self.problem.parts[&s.part].segment.unwrap());
            let mut seg = seg;
            seg[s.end] = host_point(&s.host_seg, x[s.var]);
            out.insert(s.part, seg);
        }
        out
    }

    pub fn slide_params(&self, x: &[f64]) -> Vec<SlideParam> {
        self.slides
            .iter()
            .map(|s| SlideParam {
                part: s.part,
                end: s.end,
                host: s.host,
                t: x[s.var],
            })
            .collect()
    }

    fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| {
                if self.is_bounded(k) && ((x[k] <= 0.0 && g[k] > 0.0) || (x[k] >= 1.0 && g[k] < 0.0)) {
                    0.0
                } else {
                    g[k]
                }
            })
            .collect()
    }
}

pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Projected quasi-Newton descent with an Armijo search along the projection arc.
pub fn minimize(obj: &Objective, settings: &OptimizeSettings) -> MinimizeResult {
    let n = obj.dim();
    let mut x = obj.initial();
    obj.project(&mut x);
    let (mut f, mut g) = obj.eval(&x);
    if n == 0 {
        return MinimizeResult { x, f, converged: true, iterations: 0 };
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..settings.max_iters {
        iterations = it + 1;
        let pg = obj.projected_gradient(&x, &g);
        let pg_norm = pg.iter().map(|v| v * v).sum::<f64>().sqrt();
        if pg_norm < settings.grad_tol {
            converged = true;
            iterations = it;
            break;
        }
        let active: Vec<bool> = (0..n).map(|k| pg[k] == 0.0 && g[k] != 0.0).collect();
        let mut p: Vec<f64> = (0..n).map(|r| -(0..n).filter(|&c| !active[c]).map(|c| h[(r, c)] * pg[c]).sum::<f64>()).collect();
        for k in 0..n {
            if active[k] {
                p[k] = 0.0;
            }
        }
        if p.iter().zip(&pg).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            h = DMatrix::identity(n, n);
            p = pg.iter().map(|v| -v).collect();
        }
        let mut alpha = if it == 0 { (1.0 / pg_norm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            obj.project(&mut xn);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gk, (a, b))| gk * (a - b)).sum();
            let (fn_, gn) = obj.eval(&xn);
            if fn_.is_finite() && fn_ <= f + 1e-4 * decrease && decrease < 0.0 {
                accepted = Some((xn, fn_, gn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if h != DMatrix::identity(n, n) {
                h = DMatrix::identity(n, n);
                continue;
            }
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sn = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yn = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * sn * yn {
            let sv = DMatrix::from_column_slice(n, 1, &s);
            let yv = DMatrix::from_column_slice(n, 1, &y);
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - &sv * yv.transpose() * rho;
            let b = &i - &yv * sv.transpose() * rho;
            h = &a * &h * &b + &sv * sv.transpose() * rho;
        }
        let stalled = (f - fn_).abs() <= 1e-15 * f.abs().max(1e-300) && sn < 1e-15;
        x = xn;
        f = fn_;
        g = gn;
        if stalled {
            break;
        }
    }
    MinimizeResult { x, f, converged, iterations }
}

/// Optimizes one set and reports feasibility of the result.
pub fn optimize_configuration(
    problem: &AngleProblem,
    constraints: &[AngleConstraint],
    set: &ConstraintSet,
    db: &Database,
    settings: &OptimizeSettings,
) -> Result<Configuration> {
    let obj = Objective::new(problem, constraints, set, settings);
    let res = minimize(&obj, settings);
    let segments = obj.segments(&res.x);
    let (report, feasible, hanging) = evaluate(problem, constraints, set, &segments, db, settings.threshold)?;
    let mut dropped: Vec<(usize, usize)> = set.dropped.iter().map(|&k| (problem.edges[k].i, problem.edges[k].j)).collect();
    dropped.extend(set.dropped_ground.iter().map(|&p| (p, GROUND)));
    Ok(Configuration {
        set_index: (set.index != usize::MAX).then_some(set.index),
        segments,
        slides: obj.slide_params(&res.x),
        objective: res.f,
        converged: res.converged,
        iterations: res.iterations,
        dropped,
        report,
        feasible,
        hanging,
    })
}
