//! Restarted GMRES for matrix-free linear solves.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` from `x = 0` until `||b - A x|| <= rtol ||b||`.
///
/// `apply` evaluates `A v`. At most `max_iter` products are used, restarting
/// every `restart` iterations. Returns the best iterate found.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, GmresOutcome)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            GmresOutcome {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let restart = restart.max(1).min(n.max(1));
    let mut total = 0;
    let mut r = b.to_vec();
    let mut rnorm = bnorm;
    while total < max_iter {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / rnorm).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = rnorm;
        let mut m = 0;
        while m < restart && total < max_iter {
            let mut w = apply(&v[m])?;
            if w.len() != n || w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Breakdown("operator returned a non-finite product".into()));
            }
            total += 1;
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                h[i][m] = hij;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
            }
            let wn = norm(&w);
            h[m + 1][m] = wn;
            for i in 0..m {
                let t = cs[i] * h[i][m] + sn[i] * h[i + 1][m];
                h[i + 1][m] = -sn[i] * h[i][m] + cs[i] * h[i + 1][m];
                h[i][m] = t;
            }
            let d = h[m][m].hypot(h[m + 1][m]);
            if d == 0.0 {
                return Err(Error::Breakdown("singular Hessenberg column".into()));
            }
            cs[m] = h[m][m] / d;
            sn[m] = h[m + 1][m] / d;
            h[m][m] = d;
            h[m + 1][m] = 0.0;
            g[m + 1] = -sn[m] * g[m];
            g[m] *= cs[m];
            m += 1;
            let happy = wn <= 1e-14 * bnorm;
            if g[m].abs() <= rtol * bnorm || happy {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for j in i + 1..m {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&v[j]).for_each(|(a, b)| *a += yj * b);
        }
        let ax = apply(&x)?;
        total += 1;
        r = b.iter().zip(&ax).map(|(a, b)| a - b).collect();
        rnorm = norm(&r);
        if rnorm <= rtol * bnorm || rnorm == 0.0 {
            break;
        }
    }
    Ok((
        x,
        GmresOutcome {
            iterations: total,
            relative_residual: rnorm / bnorm,
        },
    ))
}
