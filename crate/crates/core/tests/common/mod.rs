#![allow(dead_code)]

use binvmm::crossbar::{CrossbarParams, CrossbarState, RowPolicy};
use binvmm::rng::Rng;
use rand::Rng as _;

/// Resistances log-uniform in [0.5, 200] MΩ.
pub fn random_resistances(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| (rng.random_range(0.5f64.ln()..200f64.ln())).exp())
        .collect()
}

pub fn params(driver_resistance: f64) -> CrossbarParams {
    CrossbarParams {
        driver_resistance,
        rail: None,
        ..CrossbarParams::default()
    }
}

pub fn random_crossbar(
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    driver_resistance: f64,
) -> CrossbarState {
    let res = random_resistances(rng, rows * cols);
    CrossbarState::from_resistances(rows, cols, &res, params(driver_resistance)).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Dense solve with partial pivoting; `a` is row-major n×n.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        let pivot = a[k][k];
        assert!(pivot.abs() > 0.0, "singular system");
        for i in k + 1..n {
            let f = a[i][k] / pivot;
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(i);
            for (aij, akj) in lower[0][k..].iter_mut().zip(&upper[k][k..]) {
                *aij -= f * akj;
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Full modified-nodal solve of a lumped row read.
///
/// Every source, column and row is a node. Fixed nodes (sources, the sensed
/// row, grounded rows, and columns when the driver is ideal) get an identity
/// equation; the rest get KCL. Returns (sensed current, row voltages,
/// column voltages).
pub fn mna_read(
    xbar: &CrossbarState,
    sensed: usize,
    policy: RowPolicy,
    drive: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let (rows, cols) = (xbar.rows(), xbar.cols());
    let rd = xbar.params.driver_resistance;
    let src = |c: usize| c;
    let col = |c: usize| cols + c;
    let row = |r: usize| 2 * cols + r;
    let n = 2 * cols + rows;

    let mut g = vec![vec![0.0; n]; n];
    let mut stamp = |a: usize, b: usize, cond: f64| {
        g[a][a] += cond;
        g[b][b] += cond;
        g[a][b] -= cond;
        g[b][a] -= cond;
    };
    for c in 0..cols {
        if rd > 0.0 {
            stamp(src(c), col(c), 1.0 / rd);
        }
        for r in 0..rows {
            stamp(col(c), row(r), xbar.conductance(r, c));
        }
    }

    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for c in 0..cols {
        fixed[src(c)] = Some(drive[c]);
        if rd == 0.0 {
            fixed[col(c)] = Some(drive[c]);
        }
    }
    for r in 0..rows {
        if r == sensed || policy == RowPolicy::Grounded {
            fixed[row(r)] = Some(0.0);
        }
    }

    let mut a = g;
    let mut b = vec![0.0; n];
    for i in 0..n {
        if let Some(v) = fixed[i] {
            a[i] = vec![0.0; n];
            a[i][i] = 1.0;
            b[i] = v;
        }
    }
    let v = gauss_solve(a, b);
    let current = (0..cols)
        .map(|c| xbar.conductance(sensed, c) * v[col(c)])
        .sum();
    let rv = (0..rows).map(|r| v[row(r)]).collect();
    let cv = (0..cols).map(|c| v[col(c)]).collect();
    (current, rv, cv)
}
