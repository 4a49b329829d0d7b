//! Divergence-free trigonometric Galerkin basis on the periodic box `[0, L)^d`.
//!
//! A real velocity field is stored by its complex amplitudes on the
//! Hermitian half-space of wavevectors (first nonzero component positive),
//! one amplitude per polarization:
//!
//! ```text
//! v(x) = sum_{k in half-space} sum_pol  c_{k,pol} e_{k,pol} exp(i 2 pi k.x / L) + c.c.
//! ```
//!
//! The polarization vectors are real, unit and orthogonal to `k`, so every
//! field is divergence-free by construction. The zero mode is never stored.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fft::GridFft;

/// Default padding factor for pseudo-spectral products (3/2 rule).
pub const DEFAULT_GRID_FACTOR: f64 = 1.5;

/// Periodic box `[0, L)^d` with a cubic wavevector cutoff `max_i |k_i| <= n_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusDomain {
    dim: usize,
    side_length: f64,
    n_max: usize,
}

impl TorusDomain {
    pub fn new(dim: usize, side_length: f64, n_max: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDomain(format!("dimension must be 2 or 3, got {dim}")));
        }
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "side length must be positive and finite, got {side_length}"
            )));
        }
        if n_max == 0 {
            return Err(Error::InvalidDomain(
                "n_max must be at least 1 (the zero mode is excluded)".into(),
            ));
        }
        Ok(Self {
            dim,
            side_length,
            n_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `|Omega| = L^d`.
    pub fn volume(&self) -> f64 {
        self.side_length.powi(self.dim as i32)
    }

    /// Physical wavenumber of `k = 1`, i.e. `2 pi / L`.
    pub fn wavenumber_unit(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.side_length
    }

    /// Number of retained divergence-free modes, `(d-1) * #half-space wavevectors`.
    pub fn mode_count(&self) -> usize {
        let side = 2 * self.n_max + 1;
        (self.dim - 1) * (side.pow(self.dim as u32) - 1) / 2
    }

    /// Same box with a different cutoff.
    pub fn with_n_max(&self, n_max: usize) -> Result<Self> {
        Self::new(self.dim, self.side_length, n_max)
    }
}

/// One divergence-free basis mode: a half-space wavevector and a polarization index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DivFreeMode {
    k: [i32; 3],
    dim: u8,
    polarization: u8,
}

impl DivFreeMode {
    pub fn new(k: &[i32], polarization: u8) -> Result<Self> {
        let dim = k.len();
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDomain(format!("wavevector must have 2 or 3 components, got {dim}")));
        }
        if k.iter().all(|&c| c == 0) {
            return Err(Error::InvalidDomain("the zero wavevector is not a basis mode".into()));
        }
        if polarization as usize >= dim - 1 {
            return Err(Error::InvalidDomain(format!(
                "polarization {polarization} out of range for d = {dim}"
            )));
        }
        let mut full = [0; 3];
        full[..dim].copy_from_slice(k);
        Ok(Self {
            k: full,
            dim: dim as u8,
            polarization,
        })
    }

    pub fn wavevector(&self) -> &[i32] {
        &self.k[..self.dim as usize]
    }

    pub fn polarization(&self) -> u8 {
        self.polarization
    }

    pub fn k_squared(&self) -> i64 {
        self.wavevector().iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    /// Unit polarization vector (zero-padded to three components).
    pub fn polarization_vector(&self) -> [f64; 3] {
        polarization_vector(self.wavevector(), self.polarization)
    }
}

/// True when `k` lies in the Hermitian half-space: first nonzero component positive.
pub fn in_half_space(k: &[i32]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

fn polarization_vector(k: &[i32], polarization: u8) -> [f64; 3] {
    let kf: Vec<f64> = k.iter().map(|&c| c as f64).collect();
    let norm = kf.iter().map(|c| c * c).sum::<f64>().sqrt();
    if k.len() == 2 {
        return [-kf[1] / norm, kf[0] / norm, 0.0];
    }
    // Cross k with the coordinate axis it is least aligned with.
    let axis = (0..3)
        .min_by(|&a, &b| kf[a].abs().partial_cmp(&kf[b].abs()).unwrap().then(a.cmp(&b)))
        .unwrap();
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let kv = [kf[0], kf[1], kf[2]];
    let e1 = normalize(cross(kv, a));
    if polarization == 0 {
        e1
    } else {
        let khat = [kv[0] / norm, kv[1] / norm, kv[2] / norm];
        normalize(cross(khat, e1))
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Retained modes in canonical order: lexicographic in `k`, then polarization.
pub fn enumerate_modes(domain: &TorusDomain) -> Vec<DivFreeMode> {
    let n = domain.n_max as i32;
    let d = domain.dim;
    let mut out = Vec::with_capacity(domain.mode_count());
    let side = (2 * n + 1) as usize;
    let total = side.pow(d as u32);
    let mut k = vec![0i32; d];
    for flat in 0..total {
        let mut rem = flat;
        for slot in k.iter_mut().rev() {
            *slot = (rem % side) as i32 - n;
            rem /= side;
        }
        if in_half_space(&k) {
            for pol in 0..(d - 1) as u8 {
                out.push(DivFreeMode::new(&k, pol).expect("enumerated mode is valid"));
            }
        }
    }
    out
}

/// Domain, mode list and polarization table shared by all fields on it.
#[derive(Debug)]
pub struct Basis {
    domain: TorusDomain,
    modes: Vec<DivFreeMode>,
    polarizations: Vec<[f64; 3]>,
}

impl Basis {
    pub fn new(domain: TorusDomain) -> Arc<Self> {
        let modes = enumerate_modes(&domain);
        let polarizations = modes.iter().map(|m| m.polarization_vector()).collect();
        Arc::new(Self {
            domain,
            modes,
            polarizations,
        })
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn modes(&self) -> &[DivFreeMode] {
        &self.modes
    }

    pub fn polarizations(&self) -> &[[f64; 3]] {
        &self.polarizations
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Canonical index of a mode, if retained.
    pub fn index_of(&self, mode: &DivFreeMode) -> Option<usize> {
        self.modes.binary_search(mode).ok()
    }

    /// Number of real Galerkin coordinates (two per complex amplitude).
    pub fn real_dim(&self) -> usize {
        2 * self.modes.len()
    }

    /// `sqrt(2 L^d)`: maps complex amplitudes onto L2-orthonormal real coordinates.
    pub fn coordinate_scale(&self) -> f64 {
        (2.0 * self.domain.volume()).sqrt()
    }
}

/// Real divergence-free velocity field in the Galerkin space.
#[derive(Debug, Clone)]
pub struct SpectralField {
    basis: Arc<Basis>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.basis.domain == other.basis.domain && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(basis: &Arc<Basis>) -> Self {
        Self {
            basis: Arc::clone(basis),
            coeffs: vec![Complex64::new(0.0, 0.0); basis.len()],
        }
    }

    pub fn from_coefficients(basis: &Arc<Basis>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coefficients, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        Ok(Self {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    /// Builds a field from L2-orthonormal real coordinates (see [`Self::to_coords`]).
    pub fn from_coords(basis: &Arc<Basis>, coords: &[f64]) -> Result<Self> {
        if coords.len() != basis.real_dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} real coordinates, got {}",
                basis.real_dim(),
                coords.len()
            )));
        }
        let s = 1.0 / basis.coordinate_scale();
        let coeffs = coords
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0] * s, p[1] * s))
            .collect();
        Ok(Self {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    /// Real coordinates `a` with `|a|^2 = ||v||^2_{L^2}`; the Galerkin vector `c^n`.
    pub fn to_coords(&self) -> Vec<f64> {
        let s = self.basis.coordinate_scale();
        self.coeffs.iter().flat_map(|c| [c.re * s, c.im * s]).collect()
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.basis.domain
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn coefficient(&self, mode: &DivFreeMode) -> Option<Complex64> {
        self.basis.index_of(mode).map(|i| self.coeffs[i])
    }

    pub fn set_coefficient(&mut self, mode: &DivFreeMode, value: Complex64) -> Result<()> {
        let i = self
            .basis
            .index_of(mode)
            .ok_or_else(|| Error::InvalidDomain(format!("mode {mode:?} is not retained")))?;
        self.coeffs[i] = value;
        Ok(())
    }

    /// `(u, v)_{L^2}`, summing both `k` and `-k`.
    pub fn inner(&self, other: &Self) -> f64 {
        let sum: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        2.0 * self.basis.domain.volume() * sum
    }

    /// `||v||^2_{L^2} = L^d sum_{k != 0} |c_k|^2` (Parseval over the full lattice).
    pub fn norm_squared(&self) -> f64 {
        2.0 * self.basis.domain.volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `||grad v||^2_{L^2}`, exact in spectral space.
    pub fn gradient_norm_squared(&self) -> f64 {
        let unit2 = self.basis.domain.wavenumber_unit().powi(2);
        let sum: f64 = self
            .coeffs
            .iter()
            .zip(&self.basis.modes)
            .map(|(c, m)| c.norm_sqr() * m.k_squared() as f64)
            .sum();
        2.0 * self.basis.domain.volume() * unit2 * sum
    }

    /// Spectral divergence `sum_pol c e . k` per half-space wavevector.
    /// Zero by construction; exposed for checks.
    pub fn max_spectral_divergence(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.basis.modes.iter().zip(&self.basis.polarizations))
            .map(|(c, (m, e))| {
                let dot: f64 = m.wavevector().iter().zip(e).map(|(&k, e)| k as f64 * e).sum();
                (c * dot).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * factor;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Restriction to a coarser cutoff on the same box (modes dropped).
    pub fn truncate(&self, coarse: &Arc<Basis>) -> Result<Self> {
        if coarse.domain.dim != self.domain().dim
            || coarse.domain.side_length != self.domain().side_length
            || coarse.domain.n_max > self.domain().n_max
        {
            return Err(Error::InvalidDomain("target basis is not a coarsening".into()));
        }
        let coeffs = coarse
            .modes
            .iter()
            .map(|m| self.coefficient(m).unwrap_or_default())
            .collect();
        Ok(Self {
            basis: Arc::clone(coarse),
            coeffs,
        })
    }
}

/// Real samples of a vector field on an `n^d` grid, one flat array per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGrid {
    pub points_per_axis: usize,
    pub components: Vec<Vec<f64>>,
}

/// Real samples of a symmetric tensor field. Components are stored for
/// `a <= b` in row-major order: `xx, xy, yy` in 2D and
/// `xx, xy, xz, yy, yz, zz` in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorGrid {
    pub dim: usize,
    pub points_per_axis: usize,
    pub components: Vec<Vec<f64>>,
}

/// Index pairs `(a, b)`, `a <= b`, matching the component order of [`SymTensorGrid`].
pub fn sym_pairs(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        2 => &[(0, 0), (0, 1), (1, 1)],
        _ => &[(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)],
    }
}

impl SymTensorGrid {
    pub fn zeros(dim: usize, points_per_axis: usize) -> Self {
        let len = points_per_axis.pow(dim as u32);
        Self {
            dim,
            points_per_axis,
            components: vec![vec![0.0; len]; sym_pairs(dim).len()],
        }
    }

    pub fn len(&self) -> usize {
        self.components.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full `d x d` tensor at grid point `i`, zero-padded to 3x3.
    pub fn at(&self, i: usize) -> [[f64; 3]; 3] {
        let mut t = [[0.0; 3]; 3];
        for (c, &(a, b)) in sym_pairs(self.dim).iter().enumerate() {
            t[a][b] = self.components[c][i];
            t[b][a] = self.components[c][i];
        }
        t
    }

    /// Squared Frobenius norm at grid point `i`.
    pub fn norm_sq_at(&self, i: usize) -> f64 {
        sym_pairs(self.dim)
            .iter()
            .enumerate()
            .map(|(c, &(a, b))| {
                let v = self.components[c][i];
                if a == b {
                    v * v
                } else {
                    2.0 * v * v
                }
            })
            .sum()
    }

    pub fn trace_at(&self, i: usize) -> f64 {
        sym_pairs(self.dim)
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| a == b)
            .map(|(c, _)| self.components[c][i])
            .sum()
    }
}

/// Smallest 2,3,5-smooth integer `>= n`.
fn smooth_size(mut n: usize) -> usize {
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Grid points per axis for a cutoff and padding factor: the smallest
/// FFT-friendly size strictly above `2 n_max grid_factor`.
pub fn grid_points(n_max: usize, grid_factor: f64) -> Result<usize> {
    if !(grid_factor.is_finite() && grid_factor >= 1.0) {
        let required = 2 * n_max + 1;
        return Err(Error::GridTooSmall {
            points: (2.0 * n_max as f64 * grid_factor).floor().max(0.0) as usize,
            n_max,
            required,
        });
    }
    let min = (2.0 * n_max as f64 * grid_factor).floor() as usize + 1;
    Ok(smooth_size(min.max(2 * n_max + 1)))
}

/// Spectral/physical transforms for one basis at one grid resolution.
#[derive(Debug, Clone)]
pub struct Transform {
    basis: Arc<Basis>,
    fft: GridFft,
    /// Flat FFT index of `+k` and `-k` for every mode.
    plus: Vec<usize>,
    minus: Vec<usize>,
}

impl Transform {
    pub fn new(basis: &Arc<Basis>, grid_factor: f64) -> Result<Self> {
        let n = grid_points(basis.domain.n_max, grid_factor)?;
        Self::with_points(basis, n)
    }

    /// Transform on an explicit grid; `points` must exceed `2 n_max`.
    pub fn with_points(basis: &Arc<Basis>, points: usize) -> Result<Self> {
        let n_max = basis.domain.n_max;
        if points < 2 * n_max + 1 {
            return Err(Error::GridTooSmall {
                points,
                n_max,
                required: 2 * n_max + 1,
            });
        }
        let fft = GridFft::new(points, basis.domain.dim);
        let plus = basis.modes.iter().map(|m| fft.wave_index(m.wavevector())).collect();
        let minus = basis
            .modes
            .iter()
            .map(|m| {
                let neg: Vec<i32> = m.wavevector().iter().map(|c| -c).collect();
                fft.wave_index(&neg)
            })
            .collect();
        Ok(Self {
            basis: Arc::clone(basis),
            fft,
            plus,
            minus,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn points_per_axis(&self) -> usize {
        self.fft.points_per_axis()
    }

    pub fn grid_len(&self) -> usize {
        self.fft.len()
    }

    /// Volume element of the quadrature rule, `(L / n)^d`.
    pub fn cell_volume(&self) -> f64 {
        self.basis.domain.volume() / self.grid_len() as f64
    }

    /// Inverse transform of the Hermitian spectrum `z_m` at `+k_m` (`conj` at `-k_m`).
    fn to_physical(&self, values: impl Iterator<Item = Complex64>) -> Vec<f64> {
        let mut spec = vec![Complex64::new(0.0, 0.0); self.grid_len()];
        for ((z, &p), &m) in values.zip(&self.plus).zip(&self.minus) {
            spec[p] += z;
            spec[m] += z.conj();
        }
        self.fft.inverse(&mut spec);
        spec.into_iter().map(|z| z.re).collect()
    }

    /// Normalized Fourier coefficients `(1/|Omega|) int f exp(-i k.x)` at every `+k_m`.
    fn to_spectral(&self, data: &[f64]) -> Vec<Complex64> {
        let mut spec: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut spec);
        let norm = 1.0 / self.grid_len() as f64;
        self.plus.iter().map(|&p| spec[p] * norm).collect()
    }

    fn check_field(&self, field: &SpectralField) -> Result<()> {
        if field.basis.domain != self.basis.domain {
            return Err(Error::ShapeMismatch("field lives on a different basis".into()));
        }
        Ok(())
    }

    /// Samples `v` on this transform's grid.
    pub fn synthesize(&self, field: &SpectralField) -> Result<VectorGrid> {
        self.check_field(field)?;
        let components = (0..self.basis.domain.dim)
            .map(|a| {
                self.to_physical(
                    field
                        .coeffs
                        .iter()
                        .zip(&self.basis.polarizations)
                        .map(|(c, e)| c * e[a]),
                )
            })
            .collect();
        Ok(VectorGrid {
            points_per_axis: self.points_per_axis(),
            components,
        })
    }

    /// Leray projection of grid data onto the retained divergence-free modes (`P^n`).
    pub fn analyze(&self, grid: &VectorGrid) -> Result<SpectralField> {
        let d = self.basis.domain.dim;
        if grid.points_per_axis != self.points_per_axis()
            || grid.components.len() != d
            || grid.components.iter().any(|c| c.len() != self.grid_len())
        {
            return Err(Error::ShapeMismatch(format!(
                "expected {d} components on a {}^{d} grid",
                self.points_per_axis()
            )));
        }
        if grid.components.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("grid velocity"));
        }
        let hats: Vec<Vec<Complex64>> = grid.components.iter().map(|c| self.to_spectral(c)).collect();
        let coeffs = self
            .basis
            .polarizations
            .iter()
            .enumerate()
            .map(|(m, e)| (0..d).map(|a| hats[a][m] * e[a]).sum())
            .collect();
        Ok(SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs,
        })
    }

    /// Spectral symbol of `Dv_ab` for mode `m` per unit amplitude.
    fn sym_grad_symbol(&self, m: usize, a: usize, b: usize) -> Complex64 {
        let unit = self.basis.domain.wavenumber_unit();
        let k = self.basis.modes[m].wavevector();
        let e = &self.basis.polarizations[m];
        Complex64::new(0.0, 0.5 * unit * (k[b] as f64 * e[a] + k[a] as f64 * e[b]))
    }

    /// `Dv = (grad v + grad v^T) / 2` sampled on this grid.
    pub fn sym_gradient(&self, field: &SpectralField) -> Result<SymTensorGrid> {
        self.check_field(field)?;
        let dim = self.basis.domain.dim;
        let components = sym_pairs(dim)
            .iter()
            .map(|&(a, b)| {
                self.to_physical(
                    field
                        .coeffs
                        .iter()
                        .enumerate()
                        .map(|(m, c)| c * self.sym_grad_symbol(m, a, b)),
                )
            })
            .collect();
        Ok(SymTensorGrid {
            dim,
            points_per_axis: self.points_per_axis(),
            components,
        })
    }

    /// Full velocity gradient `grad v` sampled on this grid, row-major `d x d`.
    pub fn gradient(&self, field: &SpectralField) -> Result<Vec<Vec<f64>>> {
        self.check_field(field)?;
        let dim = self.basis.domain.dim;
        let unit = self.basis.domain.wavenumber_unit();
        let mut out = Vec::with_capacity(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                out.push(self.to_physical(field.coeffs.iter().enumerate().map(|(m, c)| {
                    let k = self.basis.modes[m].wavevector();
                    c * Complex64::new(0.0, unit * k[b] as f64 * self.basis.polarizations[m][a])
                })));
            }
        }
        Ok(out)
    }

    /// Leray-projected divergence `P^n div T` of a symmetric tensor field,
    /// as a field in the Galerkin space. Equals the quadrature of
    /// `-(T, D omega)` against every basis function.
    pub fn project_divergence(&self, tensor: &SymTensorGrid) -> Result<SpectralField> {
        let dim = self.basis.domain.dim;
        if tensor.dim != dim || tensor.points_per_axis != self.points_per_axis() {
            return Err(Error::ShapeMismatch("tensor grid does not match transform".into()));
        }
        let unit = self.basis.domain.wavenumber_unit();
        let hats: Vec<Vec<Complex64>> = tensor.components.iter().map(|c| self.to_spectral(c)).collect();
        let pairs = sym_pairs(dim);
        let coeffs = self
            .basis
            .modes
            .iter()
            .zip(&self.basis.polarizations)
            .enumerate()
            .map(|(m, (mode, e))| {
                let k = mode.wavevector();
                // e_a * i k_b T_ab summed over all (a, b); off-diagonal pairs appear twice.
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, &(a, b)) in pairs.iter().enumerate() {
                    let w = if a == b {
                        e[a] * k[b] as f64
                    } else {
                        e[a] * k[b] as f64 + e[b] * k[a] as f64
                    };
                    acc += hats[c][m] * w;
                }
                acc * Complex64::new(0.0, unit)
            })
            .collect();
        Ok(SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs,
        })
    }

    /// Quadrature `int f dx` of grid data with the Riemann rule.
    pub fn integrate(&self, data: impl Iterator<Item = f64>) -> f64 {
        data.sum::<f64>() * self.cell_volume()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRepr {
    d: usize,
    #[serde(rename = "L")]
    side_length: f64,
    n_max: usize,
    modes: Vec<Vec<serde_json::Value>>,
}

impl Serialize for SpectralField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let dom = self.domain();
        let modes = self
            .basis
            .modes
            .iter()
            .zip(&self.coeffs)
            .map(|(m, c)| {
                let mut row: Vec<serde_json::Value> =
                    m.wavevector().iter().map(|&k| serde_json::Value::from(k)).collect();
                row.push(serde_json::Value::from(m.polarization));
                row.push(serde_json::Value::from(c.re));
                row.push(serde_json::Value::from(c.im));
                row
            })
            .collect();
        FieldRepr {
            d: dom.dim,
            side_length: dom.side_length,
            n_max: dom.n_max,
            modes,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpectralField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = FieldRepr::deserialize(deserializer)?;
        let domain = TorusDomain::new(repr.d, repr.side_length, repr.n_max).map_err(D::Error::custom)?;
        let basis = Basis::new(domain);
        if repr.modes.len() != basis.len() {
            return Err(D::Error::custom(format!(
                "expected {} modes, found {}",
                basis.len(),
                repr.modes.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(basis.len());
        for (row, mode) in repr.modes.iter().zip(basis.modes()) {
            if row.len() != repr.d + 3 {
                return Err(D::Error::custom("mode row must be [k..., pol, re, im]"));
            }
            let k: Option<Vec<i64>> = row[..repr.d].iter().map(|v| v.as_i64()).collect();
            let pol = row[repr.d].as_u64();
            let same = k.as_ref().is_some_and(|k| {
                k.iter().zip(mode.wavevector()).all(|(&a, &b)| a == b as i64)
            }) && pol == Some(mode.polarization as u64);
            if !same {
                return Err(D::Error::custom(format!(
                    "mode rows out of canonical order at {:?}",
                    mode.wavevector()
                )));
            }
            let re = row[repr.d + 1].as_f64().ok_or_else(|| D::Error::custom("re not a number"))?;
            let im = row[repr.d + 2].as_f64().ok_or_else(|| D::Error::custom("im not a number"))?;
            coeffs.push(Complex64::new(re, im));
        }
        Ok(SpectralField { basis, coeffs })
    }
}
