//! Anderson acceleration for fixed-point problems `x = F(x)`.

use nalgebra::{DMatrix, DVector};

/// Sliding-window history of iterates and residuals `g = F(x) - x`.
#[derive(Debug, Clone)]
pub struct Anderson {
    window: usize,
    beta: f64,
    xs: Vec<Vec<f64>>,
    gs: Vec<Vec<f64>>,
}

impl Anderson {
    pub fn new(window: usize, beta: f64) -> Self {
        Self {
            window: window.max(1),
            beta,
            xs: Vec::new(),
            gs: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    /// Records `(x, g)` and returns the next iterate.
    pub fn next(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        self.xs.push(x.to_vec());
        self.gs.push(g.to_vec());
        if self.xs.len() > self.window + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let m = self.xs.len() - 1;
        let plain: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + self.beta * b).collect();
        if m == 0 {
            return plain;
        }
        let n = x.len();
        let dg = DMatrix::from_fn(n, m, |i, j| self.gs[j + 1][i] - self.gs[j][i]);
        let rhs = DVector::from_column_slice(g);
        let svd = dg.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let gamma = match svd.solve(&rhs, tol) {
            Ok(v) if v.iter().all(|x| x.is_finite()) => v,
            _ => {
                self.reset();
                return plain;
            }
        };
        let mut out = plain;
        for j in 0..m {
            let c = gamma[j];
            for (i, o) in out.iter_mut().enumerate() {
                let dx = self.xs[j + 1][i] - self.xs[j][i];
                *o -= c * (dx + self.beta * dg[(i, j)]);
            }
        }
        out
    }
}
