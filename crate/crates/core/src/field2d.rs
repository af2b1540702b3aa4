//! Truncated 2D Fourier-Galerkin algebra for n-component periodic vector
//! fields on [0,1]^2: spectral derivatives, dealiased products, periodic
//! inner product, and a binary snapshot format.
//!
//! Conventions: modes e^{2 pi i k.x} with integer k in [-N/2, N/2); spectral
//! coefficient = fft(phys)/N^2; every nonlinear product is masked by the
//! per-axis 2/3 rule so quadratic interactions of resolved modes are exact.

use crate::{Error, Result};
use ndarray::{Array2, Array3};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// In-place unnormalized 2D FFT of an N x N complex array.
pub fn fft2_inplace(a: &mut Array2<C64>, inverse: bool) {
    let n = a.nrows();
    let fft = plan(n, inverse);
    // rows (contiguous)
    for mut row in a.rows_mut() {
        fft.process(row.as_slice_mut().expect("contiguous row"));
    }
    // columns via scratch
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = a[[i, j]];
        }
        fft.process(&mut col);
        for i in 0..n {
            a[[i, j]] = col[i];
        }
    }
}

/// Integer frequency of row/col index i on an N-grid: i or i-N.
#[inline]
pub fn freq(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Uniform collocation grid points j/N for j = 0..N.
pub fn grid_points(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 / n as f64).collect()
}

/// 2D grid descriptor: N x N collocation points on [0,1]^2, N even >= 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    pub n_modes: usize,
}

impl Grid2D {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes < 8 || n_modes % 2 != 0 {
            return Err(Error::InputError(format!(
                "grid size must be even and >= 8, got {n_modes}"
            )));
        }
        Ok(Grid2D { n_modes })
    }

    /// Per-axis 2/3-rule dealias mask: true where |k| < N/3 on both axes.
    pub fn dealias_mask(&self) -> Array2<bool> {
        let n = self.n_modes;
        let lim = n as f64 / 3.0;
        Array2::from_shape_fn((n, n), |(i, j)| {
            (freq(i, n).abs() as f64) < lim && (freq(j, n).abs() as f64) < lim
        })
    }
}

/// n-component periodic field stored coefficient-major: coeffs[(comp, k1, k2)].
#[derive(Debug, Clone)]
pub struct PeriodicField {
    pub grid: Grid2D,
    pub ncomp: usize,
    pub coeffs: Array3<C64>,
    pub real_valued: bool,
}

impl PeriodicField {
    pub fn zeros(grid: Grid2D, ncomp: usize) -> Self {
        let n = grid.n_modes;
        PeriodicField {
            grid,
            ncomp,
            coeffs: Array3::zeros((ncomp, n, n)),
            real_valued: true,
        }
    }

    /// Build from physical real values phys[(comp, x1, x2)].
    pub fn from_phys(grid: Grid2D, phys: &Array3<f64>) -> Result<Self> {
        let n = grid.n_modes;
        if phys.shape()[1] != n || phys.shape()[2] != n {
            return Err(Error::ShapeMismatch(format!(
                "physical array shape {:?} vs grid {n}",
                phys.shape()
            )));
        }
        let ncomp = phys.shape()[0];
        let mut coeffs = Array3::zeros((ncomp, n, n));
        let norm = 1.0 / (n * n) as f64;
        for c in 0..ncomp {
            let mut a = Array2::from_shape_fn((n, n), |(i, j)| C64::new(phys[[c, i, j]], 0.0));
            fft2_inplace(&mut a, false);
            coeffs
                .index_axis_mut(ndarray::Axis(0), c)
                .assign(&a.mapv(|z| z * norm));
        }
        Ok(PeriodicField {
            grid,
            ncomp,
            coeffs,
            real_valued: true,
        })
    }

    /// Build from complex physical values.
    pub fn from_phys_complex(grid: Grid2D, phys: &Array3<C64>) -> Result<Self> {
        let n = grid.n_modes;
        if phys.shape()[1] != n || phys.shape()[2] != n {
            return Err(Error::ShapeMismatch("physical array vs grid".into()));
        }
        let ncomp = phys.shape()[0];
        let mut coeffs = Array3::zeros((ncomp, n, n));
        let norm = 1.0 / (n * n) as f64;
        for c in 0..ncomp {
            let mut a = phys.index_axis(ndarray::Axis(0), c).to_owned();
            fft2_inplace(&mut a, false);
            coeffs
                .index_axis_mut(ndarray::Axis(0), c)
                .assign(&a.mapv(|z| z * norm));
        }
        Ok(PeriodicField {
            grid,
            ncomp,
            coeffs,
            real_valued: false,
        })
    }

    /// Materialize physical complex values (exact inverse of from_phys*).
    pub fn to_phys_complex(&self) -> Array3<C64> {
        let n = self.grid.n_modes;
        let mut out = Array3::zeros((self.ncomp, n, n));
        for c in 0..self.ncomp {
            let mut a = self.coeffs.index_axis(ndarray::Axis(0), c).to_owned();
            fft2_inplace(&mut a, true);
            out.index_axis_mut(ndarray::Axis(0), c).assign(&a);
        }
        out
    }

    /// Materialize physical real values (imaginary parts dropped).
    pub fn to_phys(&self) -> Array3<f64> {
        self.to_phys_complex().mapv(|z| z.re)
    }

    /// Spectral derivative: coefficient k multiplied by 2 pi i k_dir.
    pub fn differentiate(&self, dir: usize) -> PeriodicField {
        assert!(dir == 1 || dir == 2, "dir must be 1 or 2");
        let n = self.grid.n_modes;
        let mut out = self.clone();
        for c in 0..self.ncomp {
            for i in 0..n {
                for j in 0..n {
                    let k = if dir == 1 { freq(i, n) } else { freq(j, n) };
                    let factor = C64::new(0.0, 2.0 * std::f64::consts::PI * k as f64);
                    out.coeffs[[c, i, j]] = self.coeffs[[c, i, j]] * factor;
                }
            }
        }
        out
    }

    /// Dealiased pointwise product of two single- or multi-component fields
    /// with matching component counts (component-wise product).
    pub fn multiply(&self, other: &PeriodicField) -> Result<PeriodicField> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("grid mismatch in multiply".into()));
        }
        if self.ncomp != other.ncomp && self.ncomp != 1 && other.ncomp != 1 {
            return Err(Error::ShapeMismatch("component mismatch in multiply".into()));
        }
        let f = self.to_phys_complex();
        let g = other.to_phys_complex();
        let ncomp = self.ncomp.max(other.ncomp);
        let n = self.grid.n_modes;
        let mut prod = Array3::zeros((ncomp, n, n));
        for c in 0..ncomp {
            let cf = if self.ncomp == 1 { 0 } else { c };
            let cg = if other.ncomp == 1 { 0 } else { c };
            for i in 0..n {
                for j in 0..n {
                    prod[[c, i, j]] = f[[cf, i, j]] * g[[cg, i, j]];
                }
            }
        }
        let mut out = PeriodicField::from_phys_complex(self.grid, &prod)?;
        out.real_valued = self.real_valued && other.real_valued;
        out.apply_dealias();
        Ok(out)
    }

    /// Zero out coefficients outside the 2/3 band.
    pub fn apply_dealias(&mut self) {
        let mask = self.grid.dealias_mask();
        let n = self.grid.n_modes;
        for c in 0..self.ncomp {
            for i in 0..n {
                for j in 0..n {
                    if !mask[[i, j]] {
                        self.coeffs[[c, i, j]] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    /// Periodic inner product <f; g> = int conj(f).g, skew-linear in f.
    /// Equals the Parseval sum over spectral coefficients.
    pub fn inner_product_per(&self, other: &PeriodicField) -> Result<C64> {
        if self.grid != other.grid || self.ncomp != other.ncomp {
            return Err(Error::ShapeMismatch("inner_product_per shapes".into()));
        }
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in self.coeffs.iter().zip(other.coeffs.iter()) {
            acc += a.conj() * b;
        }
        Ok(acc)
    }

    /// L^p norm of the physical field magnitude (p = inf allowed via p = f64::INFINITY).
    pub fn lp_norm(&self, p: f64) -> f64 {
        let phys = self.to_phys_complex();
        lp_of_values(phys.iter().map(|z| z.norm()), p, phys.len())
    }

    /// Conjugate-symmetry defect max |coef(-k) - conj(coef(k))|.
    pub fn conj_symmetry_defect(&self) -> f64 {
        let n = self.grid.n_modes;
        let mut worst: f64 = 0.0;
        for c in 0..self.ncomp {
            for i in 0..n {
                for j in 0..n {
                    let im = (n - i) % n;
                    let jm = (n - j) % n;
                    let d = (self.coeffs[[c, im, jm]] - self.coeffs[[c, i, j]].conj()).norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }

    /// Modes with coefficient magnitude above tol: (comp, k1, k2, coef).
    pub fn sparse_modes(&self, tol: f64) -> Vec<(usize, i64, i64, C64)> {
        let n = self.grid.n_modes;
        let mut out = Vec::new();
        for c in 0..self.ncomp {
            for i in 0..n {
                for j in 0..n {
                    let z = self.coeffs[[c, i, j]];
                    if z.norm() > tol {
                        out.push((c, freq(i, n), freq(j, n), z));
                    }
                }
            }
        }
        out
    }

    /// Trigonometric evaluation of a real-valued field at arbitrary points
    /// (fractional cell coordinates, periodic). Returns (ncomp, npts).
    pub fn eval_at_points(&self, pts: &[[f64; 2]]) -> Array2<f64> {
        use rayon::prelude::*;
        let modes = self.sparse_modes(1e-14);
        let ncomp = self.ncomp;
        let vals: Vec<Vec<f64>> = pts
            .par_iter()
            .map(|&p| {
                let mut acc = vec![0.0; ncomp];
                for &(c, k1, k2, z) in &modes {
                    let ph = 2.0 * std::f64::consts::PI * (k1 as f64 * p[0] + k2 as f64 * p[1]);
                    acc[c] += z.re * ph.cos() - z.im * ph.sin();
                }
                acc
            })
            .collect();
        Array2::from_shape_fn((ncomp, pts.len()), |(c, i)| vals[i][c])
    }

    /// Resample onto a new grid size by spectral truncation / zero padding.
    pub fn resample(&self, n_new: usize) -> Result<PeriodicField> {
        let grid = Grid2D::new(n_new)?;
        let n_old = self.grid.n_modes;
        let mut out = PeriodicField::zeros(grid, self.ncomp);
        out.real_valued = self.real_valued;
        let half = n_old.min(n_new) as i64 / 2;
        for c in 0..self.ncomp {
            for i in 0..n_old {
                for j in 0..n_old {
                    let k1 = freq(i, n_old);
                    let k2 = freq(j, n_old);
                    if k1.abs() < half && k2.abs() < half {
                        let ni = k1.rem_euclid(n_new as i64) as usize;
                        let nj = k2.rem_euclid(n_new as i64) as usize;
                        out.coeffs[[c, ni, nj]] = self.coeffs[[c, i, j]];
                    }
                }
            }
        }
        Ok(out)
    }

    // ---- binary snapshot format ----
    // header: magic "PSF2" | version u32 | N u32 | n u32 | real flag u8
    // body: little-endian f64 (re, im) pairs, component-major, row-major.

    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"PSF2")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.grid.n_modes as u32).to_le_bytes())?;
        w.write_all(&(self.ncomp as u32).to_le_bytes())?;
        w.write_all(&[u8::from(self.real_valued)])?;
        for z in self.coeffs.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"PSF2" {
            return Err(Error::InputError("bad field snapshot magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != 1 {
            return Err(Error::InputError(format!("unknown snapshot version {version}")));
        }
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let ncomp = u32::from_le_bytes(b4) as usize;
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let real_valued = b1[0] != 0;
        let grid = Grid2D::new(n)?;
        let mut coeffs = Array3::zeros((ncomp, n, n));
        let mut b8 = [0u8; 8];
        for z in coeffs.iter_mut() {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            *z = C64::new(re, im);
        }
        Ok(PeriodicField {
            grid,
            ncomp,
            coeffs,
            real_valued,
        })
    }
}

/// L^p "norm" of a value iterator treated as uniform samples on a unit-area
/// domain: (mean |v|^p)^{1/p}; sup norm for p = infinity.
pub fn lp_of_values<I: Iterator<Item = f64>>(vals: I, p: f64, count: usize) -> f64 {
    if p.is_infinite() {
        vals.fold(0.0_f64, f64::max)
    } else {
        let s: f64 = vals.map(|v| v.powf(p)).sum();
        (s / count as f64).powf(1.0 / p)
    }
}
