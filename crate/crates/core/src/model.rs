//! Reaction-diffusion-advection systems W_t = Lap W + Div G(W) + f(W):
//! the model trait with analytic or finite-difference derivatives, the
//! built-in test systems, and the traveling-wave profile residual.

use crate::field2d::{freq, PeriodicField};
use crate::{Error, Result};
use ndarray::{Array2, Array3, Array4, Array5};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Pointwise model definition. `f` and `G` are required; derivative
/// evaluators default to central differences with relative step 1e-5.
pub trait RDSystem: Send + Sync {
    fn n(&self) -> usize;
    fn name(&self) -> &str;

    /// Reaction term f(w), out has length n.
    fn f_point(&self, w: &[f64], out: &mut [f64]);

    /// Flux G(w) as a 2 x n matrix, row-major: out[d*n + i] = G_{d,i}(w).
    fn g_point(&self, w: &[f64], out: &mut [f64]);

    /// Jacobian df[i*n+j] = d f_i / d w_j.
    fn df_point(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut wp = w.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = 1e-5 * w[j].abs().max(1.0);
            wp[j] = w[j] + h;
            self.f_point(&wp, &mut fp);
            wp[j] = w[j] - h;
            self.f_point(&wp, &mut fm);
            wp[j] = w[j];
            for i in 0..n {
                out[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }

    /// dG[(d*n+i)*n+j] = d G_{d,i} / d w_j.
    fn dg_point(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut wp = w.to_vec();
        let mut gp = vec![0.0; 2 * n];
        let mut gm = vec![0.0; 2 * n];
        for j in 0..n {
            let h = 1e-5 * w[j].abs().max(1.0);
            wp[j] = w[j] + h;
            self.g_point(&wp, &mut gp);
            wp[j] = w[j] - h;
            self.g_point(&wp, &mut gm);
            wp[j] = w[j];
            for di in 0..2 * n {
                out[di * n + j] = (gp[di] - gm[di]) / (2.0 * h);
            }
        }
    }

    /// Hessian d2f[(i*n+j)*n+l] = d^2 f_i / (d w_j d w_l), FD of df.
    fn d2f_point(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut wp = w.to_vec();
        let mut jp = vec![0.0; n * n];
        let mut jm = vec![0.0; n * n];
        for l in 0..n {
            let h = 1e-5 * w[l].abs().max(1.0);
            wp[l] = w[l] + h;
            self.df_point(&wp, &mut jp);
            wp[l] = w[l] - h;
            self.df_point(&wp, &mut jm);
            wp[l] = w[l];
            for ij in 0..n * n {
                out[ij * n + l] = (jp[ij] - jm[ij]) / (2.0 * h);
            }
        }
    }

    /// d2G[((d*n+i)*n+j)*n+l] = d^2 G_{d,i} / (d w_j d w_l), FD of dG.
    fn d2g_point(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut wp = w.to_vec();
        let mut jp = vec![0.0; 2 * n * n];
        let mut jm = vec![0.0; 2 * n * n];
        for l in 0..n {
            let h = 1e-5 * w[l].abs().max(1.0);
            wp[l] = w[l] + h;
            self.dg_point(&wp, &mut jp);
            wp[l] = w[l] - h;
            self.dg_point(&wp, &mut jm);
            wp[l] = w[l];
            for ij in 0..2 * n * n {
                out[ij * n + l] = (jp[ij] - jm[ij]) / (2.0 * h);
            }
        }
    }
}

// ---- grid-level evaluation helpers ----

fn gather_state(w: &Array3<f64>, i: usize, j: usize, buf: &mut [f64]) {
    for (c, b) in buf.iter_mut().enumerate() {
        *b = w[[c, i, j]];
    }
}

/// f applied pointwise on a physical (n,N,N) array.
pub fn f_grid(sys: &dyn RDSystem, w: &Array3<f64>) -> Array3<f64> {
    let (n, n1, n2) = (sys.n(), w.shape()[1], w.shape()[2]);
    let mut out = Array3::zeros((n, n1, n2));
    let mut st = vec![0.0; n];
    let mut val = vec![0.0; n];
    for i in 0..n1 {
        for j in 0..n2 {
            gather_state(w, i, j, &mut st);
            sys.f_point(&st, &mut val);
            for c in 0..n {
                out[[c, i, j]] = val[c];
            }
        }
    }
    out
}

/// df pointwise: (n,n,N,N) with [i,j] = d f_i / d w_j.
pub fn df_grid(sys: &dyn RDSystem, w: &Array3<f64>) -> Array4<f64> {
    let (n, n1, n2) = (sys.n(), w.shape()[1], w.shape()[2]);
    let mut out = Array4::zeros((n, n, n1, n2));
    let mut st = vec![0.0; n];
    let mut val = vec![0.0; n * n];
    for i in 0..n1 {
        for j in 0..n2 {
            gather_state(w, i, j, &mut st);
            sys.df_point(&st, &mut val);
            for a in 0..n {
                for b in 0..n {
                    out[[a, b, i, j]] = val[a * n + b];
                }
            }
        }
    }
    out
}

/// G pointwise: (2,n,N,N).
pub fn g_grid(sys: &dyn RDSystem, w: &Array3<f64>) -> Array4<f64> {
    let (n, n1, n2) = (sys.n(), w.shape()[1], w.shape()[2]);
    let mut out = Array4::zeros((2, n, n1, n2));
    let mut st = vec![0.0; n];
    let mut val = vec![0.0; 2 * n];
    for i in 0..n1 {
        for j in 0..n2 {
            gather_state(w, i, j, &mut st);
            sys.g_point(&st, &mut val);
            for d in 0..2 {
                for c in 0..n {
                    out[[d, c, i, j]] = val[d * n + c];
                }
            }
        }
    }
    out
}

/// dG pointwise: (2,n,n,N,N) with [d,i,j] = d G_{d,i} / d w_j.
pub fn dg_grid(sys: &dyn RDSystem, w: &Array3<f64>) -> Array5<f64> {
    let (n, n1, n2) = (sys.n(), w.shape()[1], w.shape()[2]);
    let mut out = Array5::zeros((2, n, n, n1, n2));
    let mut st = vec![0.0; n];
    let mut val = vec![0.0; 2 * n * n];
    for i in 0..n1 {
        for j in 0..n2 {
            gather_state(w, i, j, &mut st);
            sys.dg_point(&st, &mut val);
            for d in 0..2 {
                for a in 0..n {
                    for b in 0..n {
                        out[[d, a, b, i, j]] = val[(d * n + a) * n + b];
                    }
                }
            }
        }
    }
    out
}

// ---- wave parameters ----

/// Wave vectors and speed. Columns of `k` are the wave vectors K_1, K_2;
/// Omega = -K^T c holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    pub k: [[f64; 2]; 2],
    pub c: [f64; 2],
    pub omega: [f64; 2],
}

impl WaveParams {
    pub fn new(k: [[f64; 2]; 2], c: [f64; 2]) -> Result<Self> {
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        if det.abs() < 1e-14 {
            return Err(Error::InputError("wave matrix must be invertible".into()));
        }
        let omega = [
            -(k[0][0] * c[0] + k[1][0] * c[1]),
            -(k[0][1] * c[0] + k[1][1] * c[1]),
        ];
        Ok(WaveParams { k, c, omega })
    }

    /// K^T c as a length-2 vector.
    pub fn ktc(&self) -> [f64; 2] {
        [-self.omega[0], -self.omega[1]]
    }

    pub fn det_k(&self) -> f64 {
        self.k[0][0] * self.k[1][1] - self.k[0][1] * self.k[1][0]
    }
}

/// Fourier symbols of (K grad)_1, (K grad)_2 with Bloch shift xi:
/// on mode k they are i * row_m(K) . (2 pi k + xi).
pub fn k_grad_symbols(k: [[f64; 2]; 2], n_modes: usize, xi: [f64; 2]) -> (Array2<C64>, Array2<C64>) {
    let n = n_modes;
    let mut d1 = Array2::zeros((n, n));
    let mut d2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let q1 = 2.0 * PI * freq(i, n) as f64 + xi[0];
            let q2 = 2.0 * PI * freq(j, n) as f64 + xi[1];
            d1[[i, j]] = C64::new(0.0, k[0][0] * q1 + k[0][1] * q2);
            d2[[i, j]] = C64::new(0.0, k[1][0] * q1 + k[1][1] * q2);
        }
    }
    (d1, d2)
}

/// Profile-equation residual
/// T(K grad)(K grad)U + T(K grad)G(U) + (K^T c . grad)U + f(U),
/// evaluated pseudospectrally with dealiased nonlinear terms.
pub fn residual(sys: &dyn RDSystem, u: &PeriodicField, wp: &WaveParams) -> Result<PeriodicField> {
    if u.ncomp != sys.n() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} components, model {} has {}",
            u.ncomp,
            sys.name(),
            sys.n()
        )));
    }
    let n = u.grid.n_modes;
    let nc = u.ncomp;
    let (d1, d2) = k_grad_symbols(wp.k, n, [0.0, 0.0]);
    let ktc = wp.ktc();
    let mask = u.grid.dealias_mask();
    let phys = u.to_phys();
    let fval = PeriodicField::from_phys(u.grid, &f_grid(sys, &phys))?;
    let gval = g_grid(sys, &phys);
    let g1 = PeriodicField::from_phys(u.grid, &gval.index_axis(ndarray::Axis(0), 0).to_owned())?;
    let g2 = PeriodicField::from_phys(u.grid, &gval.index_axis(ndarray::Axis(0), 1).to_owned())?;

    let mut out = PeriodicField::zeros(u.grid, nc);
    for c in 0..nc {
        for i in 0..n {
            for j in 0..n {
                let q1 = 2.0 * PI * freq(i, n) as f64;
                let q2 = 2.0 * PI * freq(j, n) as f64;
                let lap = d1[[i, j]] * d1[[i, j]] + d2[[i, j]] * d2[[i, j]];
                let adv = C64::new(0.0, ktc[0] * q1 + ktc[1] * q2);
                let mut v = (lap + adv) * u.coeffs[[c, i, j]];
                if mask[[i, j]] {
                    v += d1[[i, j]] * g1.coeffs[[c, i, j]]
                        + d2[[i, j]] * g2.coeffs[[c, i, j]]
                        + fval.coeffs[[c, i, j]];
                }
                out.coeffs[[c, i, j]] = v;
            }
        }
    }
    Ok(out)
}

// ---- built-in systems ----

/// Linear test system f(W) = M W, G(W) = L W (entries L[d][i][j]).
#[derive(Debug, Clone)]
pub struct LinearTest {
    pub m: Array2<f64>,
    pub l: Array3<f64>,
}

impl LinearTest {
    pub fn new(m: Array2<f64>, l: Option<Array3<f64>>) -> Self {
        let n = m.nrows();
        LinearTest {
            l: l.unwrap_or_else(|| Array3::zeros((2, n, n))),
            m,
        }
    }
}

impl RDSystem for LinearTest {
    fn n(&self) -> usize {
        self.m.nrows()
    }
    fn name(&self) -> &str {
        "linear"
    }
    fn f_point(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            out[i] = (0..n).map(|j| self.m[[i, j]] * w[j]).sum();
        }
    }
    fn g_point(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n();
        for d in 0..2 {
            for i in 0..n {
                out[d * n + i] = (0..n).map(|j| self.l[[d, i, j]] * w[j]).sum();
            }
        }
    }
    fn df_point(&self, _w: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.m[[i, j]];
            }
        }
    }
    fn dg_point(&self, _w: &[f64], out: &mut [f64]) {
        let n = self.n();
        for d in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    out[(d * n + i) * n + j] = self.l[[d, i, j]];
                }
            }
        }
    }
}

/// Two-species Brusselator reaction kinetics, no flux (G = 0).
#[derive(Debug, Clone, Copy)]
pub struct Brusselator {
    pub alpha: f64,
    pub b: f64,
}

impl Brusselator {
    pub fn new(alpha: f64, b: f64) -> Self {
        Brusselator { alpha, b }
    }
    /// Spatially constant equilibrium (alpha, b/alpha).
    pub fn const_state(&self) -> [f64; 2] {
        [self.alpha, self.b / self.alpha]
    }
    /// Linearization at the constant state.
    pub fn m_matrix(&self) -> Array2<f64> {
        let [u, v] = self.const_state();
        ndarray::arr2(&[
            [-(self.b + 1.0) + 2.0 * u * v, u * u],
            [self.b - 2.0 * u * v, -u * u],
        ])
    }
}

impl RDSystem for Brusselator {
    fn n(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "brusselator"
    }
    fn f_point(&self, w: &[f64], out: &mut [f64]) {
        let (u, v) = (w[0], w[1]);
        out[0] = self.alpha - (self.b + 1.0) * u + u * u * v;
        out[1] = self.b * u - u * u * v;
    }
    fn g_point(&self, _w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn df_point(&self, w: &[f64], out: &mut [f64]) {
        let (u, v) = (w[0], w[1]);
        out[0] = -(self.b + 1.0) + 2.0 * u * v;
        out[1] = u * u;
        out[2] = self.b - 2.0 * u * v;
        out[3] = -u * u;
    }
    fn dg_point(&self, _w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Brusselator with a quadratic self-advection flux: asymmetric transport
/// that removes the parity symmetry of the kinetics.
#[derive(Debug, Clone, Copy)]
pub struct AdvectiveBrusselator {
    pub alpha: f64,
    pub b: f64,
    pub adv: f64,
}

impl AdvectiveBrusselator {
    pub fn new(alpha: f64, b: f64, adv: f64) -> Self {
        AdvectiveBrusselator { alpha, b, adv }
    }
    pub fn const_state(&self) -> [f64; 2] {
        [self.alpha, self.b / self.alpha]
    }
    pub fn m_matrix(&self) -> Array2<f64> {
        Brusselator::new(self.alpha, self.b).m_matrix()
    }
}

impl RDSystem for AdvectiveBrusselator {
    fn n(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "brusselator_adv"
    }
    fn f_point(&self, w: &[f64], out: &mut [f64]) {
        Brusselator::new(self.alpha, self.b).f_point(w, out);
    }
    fn df_point(&self, w: &[f64], out: &mut [f64]) {
        Brusselator::new(self.alpha, self.b).df_point(w, out);
    }
    fn g_point(&self, w: &[f64], out: &mut [f64]) {
        let (u, v) = (w[0], w[1]);
        out.fill(0.0);
        out[0] = self.adv * u * u; // G_{1,u}: adds adv * d_{x1}(u^2)
        out[3] = self.adv * v * v; // G_{2,v}: adds adv * d_{x2}(v^2)
    }
    fn dg_point(&self, w: &[f64], out: &mut [f64]) {
        let (u, v) = (w[0], w[1]);
        out.fill(0.0);
        out[0] = 2.0 * self.adv * u; // d G_{1,u} / du
        out[7] = 2.0 * self.adv * v; // d G_{2,v} / dv
    }
}

/// Two coupled complex Ginzburg-Landau blocks (n = 4, z_j = u_j + i v_j):
///   dt z_j = Lap z_j + a d_{x_j}(i z_j) + (m + i om) z_j
///            - ((g + i gam) rho_j + (h + i dl) rho_{3-j}) z_j,  rho_j = |z_j|^2.
/// Admits closed-form plane-wave profiles used as solver oracles.
#[derive(Debug, Clone, Copy)]
pub struct LambdaOmega {
    pub m: f64,
    pub om: f64,
    pub gam: f64,
    pub dl: f64,
    pub g: f64,
    pub h: f64,
    pub a: f64,
}

impl LambdaOmega {
    /// Closed-form wave at wave matrix K: amplitudes R, frequencies Omega,
    /// speed c with Omega = -K^T c.
    pub fn exact_wave(&self, k: [[f64; 2]; 2]) -> Result<([f64; 2], [f64; 2], [f64; 2])> {
        let col_sq = |j: usize| k[0][j] * k[0][j] + k[1][j] * k[1][j];
        let mu = [
            self.m - 4.0 * PI * PI * col_sq(0) - 2.0 * PI * self.a * k[0][0],
            self.m - 4.0 * PI * PI * col_sq(1) - 2.0 * PI * self.a * k[1][1],
        ];
        // [g h; h g] Rsq = mu
        let det = self.g * self.g - self.h * self.h;
        let rsq = [
            (self.g * mu[0] - self.h * mu[1]) / det,
            (self.g * mu[1] - self.h * mu[0]) / det,
        ];
        if rsq[0] <= 0.0 || rsq[1] <= 0.0 {
            return Err(Error::DegenerateWave(format!(
                "no plane wave at this K: Rsq = {rsq:?}"
            )));
        }
        let omega = [
            (self.om - self.gam * rsq[0] - self.dl * rsq[1]) / (2.0 * PI),
            (self.om - self.gam * rsq[1] - self.dl * rsq[0]) / (2.0 * PI),
        ];
        // c = -(K^T)^{-1} Omega
        let det_kt = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        let c = [
            -(k[1][1] * omega[0] - k[1][0] * omega[1]) / det_kt,
            -(-k[0][1] * omega[0] + k[0][0] * omega[1]) / det_kt,
        ];
        Ok(([rsq[0].sqrt(), rsq[1].sqrt()], omega, c))
    }

    /// Physical profile field (R1 cos th1, R1 sin th1, R2 cos th2, R2 sin th2)
    /// with th_j = 2 pi (y_j + phase_j).
    pub fn wave_field(r: [f64; 2], n_modes: usize, phase: [f64; 2]) -> Array3<f64> {
        Array3::from_shape_fn((4, n_modes, n_modes), |(c, i, j)| {
            let y1 = i as f64 / n_modes as f64 + phase[0];
            let y2 = j as f64 / n_modes as f64 + phase[1];
            match c {
                0 => r[0] * (2.0 * PI * y1).cos(),
                1 => r[0] * (2.0 * PI * y1).sin(),
                2 => r[1] * (2.0 * PI * y2).cos(),
                _ => r[1] * (2.0 * PI * y2).sin(),
            }
        })
    }
}

impl RDSystem for LambdaOmega {
    fn n(&self) -> usize {
        4
    }
    fn name(&self) -> &str {
        "lambda_omega"
    }
    fn f_point(&self, w: &[f64], out: &mut [f64]) {
        let (u1, v1, u2, v2) = (w[0], w[1], w[2], w[3]);
        let r1 = u1 * u1 + v1 * v1;
        let r2 = u2 * u2 + v2 * v2;
        let c1 = self.g * r1 + self.h * r2;
        let d1 = self.gam * r1 + self.dl * r2;
        let c2 = self.g * r2 + self.h * r1;
        let d2 = self.gam * r2 + self.dl * r1;
        out[0] = self.m * u1 - self.om * v1 - (c1 * u1 - d1 * v1);
        out[1] = self.m * v1 + self.om * u1 - (c1 * v1 + d1 * u1);
        out[2] = self.m * u2 - self.om * v2 - (c2 * u2 - d2 * v2);
        out[3] = self.m * v2 + self.om * u2 - (c2 * v2 + d2 * u2);
    }
    fn df_point(&self, w: &[f64], out: &mut [f64]) {
        let (u1, v1, u2, v2) = (w[0], w[1], w[2], w[3]);
        let (g, h, gam, dl, m, om) = (self.g, self.h, self.gam, self.dl, self.m, self.om);
        let r1 = u1 * u1 + v1 * v1;
        let r2 = u2 * u2 + v2 * v2;
        let c1 = g * r1 + h * r2;
        let d1 = gam * r1 + dl * r2;
        let c2 = g * r2 + h * r1;
        let d2 = gam * r2 + dl * r1;
        let row = |out: &mut [f64], i: usize, vals: [f64; 4]| {
            out[4 * i..4 * i + 4].copy_from_slice(&vals);
        };
        row(out, 0, [
            m - c1 - 2.0 * g * u1 * u1 + 2.0 * gam * u1 * v1,
            -om - 2.0 * g * v1 * u1 + d1 + 2.0 * gam * v1 * v1,
            -2.0 * h * u2 * u1 + 2.0 * dl * u2 * v1,
            -2.0 * h * v2 * u1 + 2.0 * dl * v2 * v1,
        ]);
        row(out, 1, [
            om - 2.0 * g * u1 * v1 - d1 - 2.0 * gam * u1 * u1,
            m - c1 - 2.0 * g * v1 * v1 - 2.0 * gam * v1 * u1,
            -2.0 * h * u2 * v1 - 2.0 * dl * u2 * u1,
            -2.0 * h * v2 * v1 - 2.0 * dl * v2 * u1,
        ]);
        row(out, 2, [
            -2.0 * h * u1 * u2 + 2.0 * dl * u1 * v2,
            -2.0 * h * v1 * u2 + 2.0 * dl * v1 * v2,
            m - c2 - 2.0 * g * u2 * u2 + 2.0 * gam * u2 * v2,
            -om - 2.0 * g * v2 * u2 + d2 + 2.0 * gam * v2 * v2,
        ]);
        row(out, 3, [
            -2.0 * h * u1 * v2 - 2.0 * dl * u1 * u2,
            -2.0 * h * v1 * v2 - 2.0 * dl * v1 * u2,
            om - 2.0 * g * u2 * v2 - d2 - 2.0 * gam * u2 * u2,
            m - c2 - 2.0 * g * v2 * v2 - 2.0 * gam * v2 * u2,
        ]);
    }
    fn g_point(&self, w: &[f64], out: &mut [f64]) {
        // Div G realizes a d_{x_j}(i z_j) for block j.
        let (u1, v1, u2, v2) = (w[0], w[1], w[2], w[3]);
        out.fill(0.0);
        out[0] = -self.a * v1;
        out[1] = self.a * u1;
        out[4 + 2] = -self.a * v2;
        out[4 + 3] = self.a * u2;
    }
    fn dg_point(&self, _w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let a = self.a;
        let n = 4;
        out[(0 * n + 0) * n + 1] = -a;
        out[(0 * n + 1) * n + 0] = a;
        out[(n + 2) * n + 3] = -a;
        out[(n + 3) * n + 2] = a;
    }
}

// ---- user-defined polynomial models ----

/// One monomial term coef * prod_j w_j^{exps[j]}.
#[derive(Debug, Clone)]
pub struct PolyTerm {
    pub coef: f64,
    pub exps: Vec<u32>,
}

/// Polynomial model defined by coefficient tables (total degree <= 4).
/// Derivatives come from the trait's finite-difference defaults.
#[derive(Debug, Clone)]
pub struct PolynomialModel {
    pub ncomp: usize,
    pub label: String,
    /// f_terms[i] = monomials of f_i.
    pub f_terms: Vec<Vec<PolyTerm>>,
    /// g_terms[d][i] = monomials of G_{d,i}.
    pub g_terms: [Vec<Vec<PolyTerm>>; 2],
}

impl PolynomialModel {
    pub fn new(
        ncomp: usize,
        label: String,
        f_terms: Vec<Vec<PolyTerm>>,
        g_terms: [Vec<Vec<PolyTerm>>; 2],
    ) -> Result<Self> {
        let check = |terms: &[Vec<PolyTerm>], what: &str| -> Result<()> {
            if terms.len() != ncomp {
                return Err(Error::InputError(format!(
                    "{what} must have {ncomp} component entries"
                )));
            }
            for comp in terms {
                for t in comp {
                    if t.exps.len() != ncomp {
                        return Err(Error::InputError(format!(
                            "{what}: exponent list length must equal {ncomp}"
                        )));
                    }
                    let deg: u32 = t.exps.iter().sum();
                    if deg > 4 {
                        return Err(Error::InputError(format!(
                            "{what}: monomial degree {deg} exceeds 4"
                        )));
                    }
                }
            }
            Ok(())
        };
        check(&f_terms, "f")?;
        check(&g_terms[0], "G row 1")?;
        check(&g_terms[1], "G row 2")?;
        Ok(PolynomialModel {
            ncomp,
            label,
            f_terms,
            g_terms,
        })
    }

    fn eval_terms(terms: &[PolyTerm], w: &[f64]) -> f64 {
        terms
            .iter()
            .map(|t| {
                t.coef
                    * t.exps
                        .iter()
                        .zip(w)
                        .map(|(&e, &x)| x.powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }
}

impl RDSystem for PolynomialModel {
    fn n(&self) -> usize {
        self.ncomp
    }
    fn name(&self) -> &str {
        &self.label
    }
    fn f_point(&self, w: &[f64], out: &mut [f64]) {
        for (i, terms) in self.f_terms.iter().enumerate() {
            out[i] = Self::eval_terms(terms, w);
        }
    }
    fn g_point(&self, w: &[f64], out: &mut [f64]) {
        let n = self.ncomp;
        for d in 0..2 {
            for (i, terms) in self.g_terms[d].iter().enumerate() {
                out[d * n + i] = Self::eval_terms(terms, w);
            }
        }
    }
}
