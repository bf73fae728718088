//! Densest mutually consistent subset of an affinity matrix.

use nalgebra::{DMatrix, DVector};

use super::affinity::{indicator_density, AffinityMatrix};
use super::MatchError;

/// Matrices up to this size also get an exhaustive pass over all cliques.
pub const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensestParams {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for DensestParams {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Densest {
    /// Selected indices, ascending.
    pub selected: Vec<usize>,
    pub density: f64,
    pub iterations: usize,
}

fn consistent(m: &DMatrix<f64>, i: usize, j: usize) -> bool {
    i == j || m[(i, j)] > 0.0
}

/// Zero the weaker end of every inconsistent pair that is still active.
fn project(m: &DMatrix<f64>, v: &mut DVector<f64>) {
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            if v[i] > 0.0 && v[j] > 0.0 && !consistent(m, i, j) {
                if v[j] <= v[i] {
                    v[j] = 0.0;
                } else {
                    v[i] = 0.0;
                }
            }
        }
    }
}

/// Projected power ascent from the uniform vector.
pub fn power_ascent(m: &DMatrix<f64>, params: &DensestParams) -> (DVector<f64>, usize) {
    let n = m.nrows();
    let mut u = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    project(m, &mut u);
    u /= u.norm();
    let mut iterations = 0;
    for _ in 0..params.max_iterations {
        iterations += 1;
        let mut v = m * &u;
        for x in v.iter_mut() {
            *x = x.max(0.0);
        }
        project(m, &mut v);
        let norm = v.norm();
        if norm == 0.0 {
            break;
        }
        v /= norm;
        let step = (&v - &u).norm();
        u = v;
        if step < params.tolerance {
            break;
        }
    }
    (u, iterations)
}

/// Threshold at half the peak, then keep a mutually consistent subset
/// greedily in order of decreasing weight.
fn round(m: &DMatrix<f64>, u: &DVector<f64>) -> Vec<usize> {
    let peak = u.max();
    let mut order: Vec<usize> = (0..u.len()).filter(|&i| u[i] >= 0.5 * peak && u[i] > 0.0).collect();
    order.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if chosen.iter().all(|&j| consistent(m, i, j)) {
            chosen.push(i);
        }
    }
    if chosen.is_empty() {
        chosen.push(0);
    }
    chosen.sort_unstable();
    chosen
}

/// Add, drop and swap single members while density strictly improves.
fn local_search(m: &DMatrix<f64>, mut set: Vec<usize>) -> Vec<usize> {
    let n = m.nrows();
    let mut best = indicator_density(m, &set);
    loop {
        let mut improved = false;
        for k in 0..n {
            if set.contains(&k) || !set.iter().all(|&j| consistent(m, k, j)) {
                continue;
            }
            let mut trial = set.clone();
            trial.push(k);
            let d = indicator_density(m, &trial);
            if d > best + 1e-15 {
                set = trial;
                best = d;
                improved = true;
            }
        }
        if set.len() > 1 {
            for pos in 0..set.len() {
                let mut trial = set.clone();
                trial.remove(pos);
                let d = indicator_density(m, &trial);
                if d > best + 1e-15 {
                    set = trial;
                    best = d;
                    improved = true;
                    break;
                }
            }
        }
        'swap: for pos in 0..set.len() {
            for k in 0..n {
                if set.contains(&k) {
                    continue;
                }
                let mut trial = set.clone();
                trial.remove(pos);
                if !trial.iter().all(|&j| consistent(m, k, j)) {
                    continue;
                }
                trial.push(k);
                let d = indicator_density(m, &trial);
                if d > best + 1e-15 {
                    set = trial;
                    best = d;
                    improved = true;
                    break 'swap;
                }
            }
        }
        if !improved {
            break;
        }
    }
    set.sort_unstable();
    set
}

/// Every clique of the consistency graph, scored exhaustively.
pub fn exhaustive_densest(m: &DMatrix<f64>) -> (Vec<usize>, f64) {
    fn grow(m: &DMatrix<f64>, current: &mut Vec<usize>, start: usize, best: &mut (Vec<usize>, f64)) {
        for k in start..m.nrows() {
            if current.iter().all(|&j| consistent(m, k, j)) {
                current.push(k);
                let d = indicator_density(m, current);
                if d > best.1 + 1e-15 {
                    *best = (current.clone(), d);
                }
                grow(m, current, k + 1, best);
                current.pop();
            }
        }
    }
    let mut best = (vec![0], indicator_density(m, &[0]));
    grow(m, &mut Vec::new(), 0, &mut best);
    best
}

/// Relaxation alone: power ascent, rounding and local search.
pub fn solve_relaxed(m: &DMatrix<f64>, params: &DensestParams) -> Result<Densest, MatchError> {
    if m.nrows() == 0 {
        return Err(MatchError::EmptyAffinity);
    }
    let (u, iterations) = power_ascent(m, params);
    let selected = local_search(m, round(m, &u));
    let density = indicator_density(m, &selected);
    Ok(Densest {
        selected,
        density,
        iterations,
    })
}

pub fn solve_densest(affinity: &AffinityMatrix, params: &DensestParams) -> Result<Densest, MatchError> {
    solve_densest_matrix(&affinity.entries, params)
}

pub fn solve_densest_matrix(m: &DMatrix<f64>, params: &DensestParams) -> Result<Densest, MatchError> {
    let mut out = solve_relaxed(m, params)?;
    if m.nrows() <= EXACT_LIMIT {
        let (set, d) = exhaustive_densest(m);
        if d > out.density + 1e-12 {
            out.selected = set;
            out.density = d;
        }
    }
    Ok(out)
}
