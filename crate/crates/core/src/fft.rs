//! Multidimensional complex FFT on a cubic grid with `n` points per axis.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plans for an `n^d` grid. Plans are immutable and `Sync`,
/// so one instance can be shared across threads.
#[derive(Clone)]
pub struct GridFft {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft")
            .field("n", &self.n)
            .field("dim", &self.dim)
            .finish()
    }
}

impl GridFft {
    pub fn new(n: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform, `X_k = sum_j x_j exp(-2 pi i k j / n)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&self.forward, data);
    }

    /// Unnormalized inverse transform, `x_j = sum_k X_k exp(+2 pi i k j / n)`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(&self.inverse, data);
    }

    fn apply(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.n;
        let total = self.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Row-major layout: the last axis is contiguous.
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..total).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    if stride == 1 {
                        plan.process_with_scratch(&mut data[start..start + n], &mut scratch);
                    } else {
                        for (i, slot) in line.iter_mut().enumerate() {
                            *slot = data[start + i * stride];
                        }
                        plan.process_with_scratch(&mut line, &mut scratch);
                        for (i, value) in line.iter().enumerate() {
                            data[start + i * stride] = *value;
                        }
                    }
                }
            }
        }
    }

    /// Flat index of the (signed) wavevector `k`, wrapped modulo `n`.
    pub fn wave_index(&self, k: &[i32]) -> usize {
        let n = self.n as i64;
        k.iter()
            .fold(0usize, |acc, &ki| acc * self.n + (ki as i64).rem_euclid(n) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_forward_is_scaled_identity() {
        let fft = GridFft::new(5, 2);
        let orig: Vec<Complex64> = (0..25)
            .map(|i| Complex64::new(i as f64 * 0.3 - 2.0, (i * i) as f64 * 0.01))
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / 25.0 - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_wave_lands_on_its_index() {
        let n = 6;
        let fft = GridFft::new(n, 3);
        let k = [1i32, -2, 0];
        let mut data = vec![Complex64::new(0.0, 0.0); fft.len()];
        for i0 in 0..n {
            for i1 in 0..n {
                for i2 in 0..n {
                    let phase = 2.0 * std::f64::consts::PI
                        * (k[0] as f64 * i0 as f64 + k[1] as f64 * i1 as f64 + k[2] as f64 * i2 as f64)
                        / n as f64;
                    data[(i0 * n + i1) * n + i2] = Complex64::from_polar(1.0, phase);
                }
            }
        }
        fft.forward(&mut data);
        let idx = fft.wave_index(&k);
        assert!((data[idx] - Complex64::new(216.0, 0.0)).norm() < 1e-9);
        let others: f64 = data
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, z)| z.norm())
            .sum();
        assert!(others < 1e-9);
    }
}
