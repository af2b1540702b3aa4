//! Phase reconstruction tools on a large periodic box standing in for the
//! plane: inverse Laplacian and its gradient (Biot-Savart), low/high
//! frequency splitting, Gaussian phase sources, and inversion of Id - phi by
//! fixed-point iteration.

use crate::field2d::{fft2_inplace, freq};
use crate::multiplier::chi_bump;
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Frequency of index i on an n-point grid over a box of side `width`.
pub fn xi_freq(i: usize, n: usize, width: f64) -> f64 {
    2.0 * std::f64::consts::PI * freq(i, n) as f64 / width
}

fn to_spec(f: &Array2<f64>) -> Array2<C64> {
    let mut s = f.mapv(|v| C64::new(v, 0.0));
    fft2_inplace(&mut s, false);
    let n2 = (f.nrows() * f.ncols()) as f64;
    s.mapv_inplace(|z| z / n2);
    s
}

fn to_phys(mut s: Array2<C64>) -> Array2<f64> {
    fft2_inplace(&mut s, true);
    s.mapv(|z| z.re)
}

/// Spectral gradient of a scalar field on the box.
pub fn gradient(f: &Array2<f64>, width: f64) -> [Array2<f64>; 2] {
    let n = f.nrows();
    let s = to_spec(f);
    let mut g1 = s.clone();
    let mut g2 = s;
    for i in 0..n {
        for j in 0..n {
            let x1 = xi_freq(i, n, width);
            let x2 = xi_freq(j, n, width);
            g1[[i, j]] *= C64::new(0.0, x1);
            g2[[i, j]] *= C64::new(0.0, x2);
        }
    }
    [to_phys(g1), to_phys(g2)]
}

/// Biot-Savart gradient: v with v-hat = i xi / |xi|^2 d-hat, zero mode
/// dropped. Curl-free by construction; div v recovers d minus its mean.
pub fn grad_inv_laplacian(d: &Array2<f64>, width: f64) -> [Array2<f64>; 2] {
    let n = d.nrows();
    let s = to_spec(d);
    let mut v1 = Array2::zeros((n, n));
    let mut v2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == 0 && j == 0 {
                continue;
            }
            let x1 = xi_freq(i, n, width);
            let x2 = xi_freq(j, n, width);
            let r2 = x1 * x1 + x2 * x2;
            // v = grad(invlap d): symbol (i xi) * (-1/|xi|^2)
            v1[[i, j]] = s[[i, j]] * C64::new(0.0, -x1 / r2);
            v2[[i, j]] = s[[i, j]] * C64::new(0.0, -x2 / r2);
        }
    }
    [to_phys(v1), to_phys(v2)]
}

/// Inverse Laplacian: phi-hat = -d-hat/|xi|^2 off the zero mode, so that
/// Laplacian(phi) = d - mean(d); zero mean on the box.
pub fn inv_laplacian(d: &Array2<f64>, width: f64) -> Array2<f64> {
    let n = d.nrows();
    let s = to_spec(d);
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == 0 && j == 0 {
                continue;
            }
            let x1 = xi_freq(i, n, width);
            let x2 = xi_freq(j, n, width);
            p[[i, j]] = -s[[i, j]] / (x1 * x1 + x2 * x2);
        }
    }
    to_phys(p)
}

/// Split f = f_LF + f_HF by the smooth radial bump of radius xi0.
pub fn lowfreq_split(f: &Array2<f64>, width: f64, xi0: f64) -> (Array2<f64>, Array2<f64>) {
    let n = f.nrows();
    let s = to_spec(f);
    let mut lf = s.clone();
    let mut hf = s;
    for i in 0..n {
        for j in 0..n {
            let x1 = xi_freq(i, n, width);
            let x2 = xi_freq(j, n, width);
            let c = chi_bump((x1 * x1 + x2 * x2).sqrt(), xi0);
            lf[[i, j]] *= c;
            hf[[i, j]] *= 1.0 - c;
        }
    }
    (to_phys(lf), to_phys(hf))
}

/// Discrete curl sup-norm of a 2-component vector field (spectral).
pub fn curl_sup(v: &[Array2<f64>; 2], width: f64) -> f64 {
    let g0 = gradient(&v[0], width);
    let g1 = gradient(&v[1], width);
    (&g1[0] - &g0[1])
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
}

/// Periodic bicubic (Catmull-Rom) interpolation; (x, y) in grid units.
pub fn interp_bicubic(f: &Array2<f64>, x: f64, y: f64) -> f64 {
    let n = f.nrows() as i64;
    let cr = |p: [f64; 4], t: f64| -> f64 {
        p[1] + 0.5
            * t
            * (p[2] - p[0]
                + t * (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]
                    + t * (3.0 * (p[1] - p[2]) + p[3] - p[0])))
    };
    let ix = x.floor() as i64;
    let iy = y.floor() as i64;
    let tx = x - ix as f64;
    let ty = y - iy as f64;
    let mut rows = [0.0; 4];
    for (r, row) in rows.iter_mut().enumerate() {
        let gi = (ix + r as i64 - 1).rem_euclid(n) as usize;
        let mut p = [0.0; 4];
        for (c, v) in p.iter_mut().enumerate() {
            let gj = (iy + c as i64 - 1).rem_euclid(n) as usize;
            *v = f[[gi, gj]];
        }
        *row = cr(p, ty);
    }
    cr(rows, tx)
}

/// A 2-component phase field on the periodic box [0, width)^2.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub width: f64,
    pub phi: [Array2<f64>; 2],
    /// sup-norm of the Jacobian grad phi (contraction constant bound)
    pub grad_sup: f64,
}

impl PhaseField {
    pub fn new(width: f64, phi: [Array2<f64>; 2]) -> Self {
        let mut grad_sup = 0.0_f64;
        for comp in phi.iter() {
            for g in gradient(comp, width).iter() {
                grad_sup = grad_sup.max(g.iter().map(|v| v.abs()).fold(0.0, f64::max));
            }
        }
        PhaseField { width, phi, grad_sup }
    }

    pub fn n_grid(&self) -> usize {
        self.phi[0].nrows()
    }

    /// phi at an arbitrary point (box coordinates), bicubic.
    pub fn eval(&self, pt: [f64; 2]) -> [f64; 2] {
        let sc = self.n_grid() as f64 / self.width;
        let x = pt[0] * sc;
        let y = pt[1] * sc;
        [
            interp_bicubic(&self.phi[0], x, y),
            interp_bicubic(&self.phi[1], x, y),
        ]
    }

    /// Inverse of Id - phi at the target points: y with y - phi(y) = x.
    pub fn invert(&self, pts: &[[f64; 2]], tol: f64) -> Result<Vec<[f64; 2]>> {
        if self.grad_sup >= 1.0 {
            return Err(Error::ContractionViolated(format!(
                "grad sup {} >= 1",
                self.grad_sup
            )));
        }
        let out = invert_points(&|p| self.eval(p), pts, tol, 200)?;
        // composition check
        let mut worst = 0.0_f64;
        for (x, y) in pts.iter().zip(&out) {
            let p = self.eval(*y);
            worst = worst
                .max((y[0] - p[0] - x[0]).abs())
                .max((y[1] - p[1] - x[1]).abs());
        }
        if worst > 10.0 * tol {
            return Err(Error::ContractionViolated(format!(
                "composition defect {worst} over {}",
                10.0 * tol
            )));
        }
        Ok(out)
    }
}

/// Fixed-point iteration y <- x + phi(y) per target point.
pub fn invert_points(
    phi_eval: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
    pts: &[[f64; 2]],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<[f64; 2]>> {
    let results: Vec<std::result::Result<[f64; 2], String>> = pts
        .par_iter()
        .map(|&x| {
            let mut y = x;
            let mut prev_delta = f64::INFINITY;
            for _ in 0..max_iter {
                let p = phi_eval(y);
                let ny = [x[0] + p[0], x[1] + p[1]];
                let delta = (ny[0] - y[0]).abs().max((ny[1] - y[1]).abs());
                y = ny;
                if delta < tol {
                    return Ok(y);
                }
                if delta > prev_delta * 1.001 && delta > 10.0 * tol {
                    return Err(format!("diverging iteration at {x:?}, delta {delta}"));
                }
                prev_delta = delta;
            }
            Err(format!("no convergence at {x:?}"))
        })
        .collect();
    results
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(Error::ContractionViolated)
}

/// Gaussian phase source: Laplacian(phi_m) = sign * amp_m * Gaussian(sigma),
/// normalized so the source integrates to sign * amp_m.
pub fn make_phase_source(
    n: usize,
    width: f64,
    amps: [f64; 2],
    sigma: f64,
    sign: f64,
) -> Result<(PhaseField, [Array2<f64>; 2])> {
    let dx = width / n as f64;
    if sigma < 4.0 * dx {
        return Err(Error::InputError(format!(
            "source width {sigma} under 4 grid cells ({})",
            4.0 * dx
        )));
    }
    let mut g = Array2::zeros((n, n));
    let c = width / 2.0;
    for ((i, j), v) in g.indexed_iter_mut() {
        let x = i as f64 * dx - c;
        let y = j as f64 * dx - c;
        *v = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
            / (2.0 * std::f64::consts::PI * sigma * sigma);
    }
    let mut phi_comps = Vec::with_capacity(2);
    let mut sources = Vec::with_capacity(2);
    for m in 0..2 {
        let d = g.mapv(|v| sign * amps[m] * v);
        phi_comps.push(inv_laplacian(&d, width));
        sources.push(d);
    }
    let pf = PhaseField::new(width, [phi_comps.remove(0), phi_comps.remove(0)]);
    if pf.grad_sup >= 0.5 {
        return Err(Error::AmplitudeTooLarge(format!(
            "sup |grad phi| = {} >= 0.5",
            pf.grad_sup
        )));
    }
    Ok((pf, [sources.remove(0), sources.remove(0)]))
}

/// Grid-deformation rows (x, y, x - phi1, y - phi2) for plotting.
pub fn deformation_rows(pf: &PhaseField, stride: usize) -> Vec<[f64; 4]> {
    let n = pf.n_grid();
    let dx = pf.width / n as f64;
    let mut rows = Vec::new();
    for i in (0..n).step_by(stride) {
        for j in (0..n).step_by(stride) {
            let x = i as f64 * dx;
            let y = j as f64 * dx;
            rows.push([x, y, x - pf.phi[0][[i, j]], y - pf.phi[1][[i, j]]]);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(n: usize, width: f64, sigma: f64, center: f64) -> Array2<f64> {
        let dx = width / n as f64;
        Array2::from_shape_fn((n, n), |(i, j)| {
            let x = i as f64 * dx - center;
            let y = j as f64 * dx - center;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
    }

    #[test]
    fn biot_savart_recovers_gradient_of_gaussian() {
        let (n, width) = (256, 64.0);
        let g = gaussian(n, width, 2.0, width / 2.0);
        // d = Laplacian g (spectral)
        let grads = gradient(&g, width);
        let d = {
            let g1 = gradient(&grads[0], width);
            let g2 = gradient(&grads[1], width);
            &g1[0] + &g2[1]
        };
        let v = grad_inv_laplacian(&d, width);
        // g has negligible mean leakage at this box size
        let mut worst = 0.0_f64;
        for k in 0..2 {
            worst = worst.max(
                (&v[k] - &grads[k])
                    .iter()
                    .map(|x| x.abs())
                    .fold(0.0, f64::max),
            );
        }
        assert!(worst < 1e-8, "BS gradient error {worst}");
        // curl-free
        let d_norm = d.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(curl_sup(&v, width) <= 1e-10 * d_norm);
    }

    #[test]
    fn mean_zero_dipole_l2_stable_under_doubling() {
        let sigma = 1.5;
        let energies: Vec<f64> = [64.0, 128.0]
            .iter()
            .map(|&width| {
                let n = (width * 4.0) as usize;
                let g = gaussian(n, width, sigma, width / 2.0);
                let d = gradient(&g, width)[0].clone(); // mean-zero dipole
                let v = grad_inv_laplacian(&d, width);
                let dx = width / n as f64;
                ((v[0].mapv(|x| x * x) + v[1].mapv(|x| x * x)).sum() * dx * dx).sqrt()
            })
            .collect();
        let rel = (energies[1] - energies[0]).abs() / energies[0];
        assert!(rel <= 0.02, "dipole L2 changed by {rel} under doubling");
    }

    #[test]
    fn mean_one_source_log_growth() {
        let (n, width) = (1024, 256.0);
        let sigma = 1.0;
        let mut d = gaussian(n, width, sigma, width / 2.0);
        let dx = width / n as f64;
        let mass: f64 = d.sum() * dx * dx;
        d.mapv_inplace(|v| v / mass); // mean one
        let v = grad_inv_laplacian(&d, width);
        // ||v||^2 over B_R grows like (1/2 pi) ln R
        // keep radii well inside the box: periodic images flatten the
        // far-field growth near width/4
        let radii: Vec<f64> = vec![6.0, 9.0, 13.5, 20.0, 30.0];
        let c = width / 2.0;
        let energies: Vec<f64> = radii
            .iter()
            .map(|&r| {
                let mut e = 0.0;
                for ((i, j), &v0) in v[0].indexed_iter() {
                    let x = i as f64 * dx - c;
                    let y = j as f64 * dx - c;
                    if x * x + y * y <= r * r {
                        e += (v0 * v0 + v[1][[i, j]] * v[1][[i, j]]) * dx * dx;
                    }
                }
                e
            })
            .collect();
        // least-squares slope of energy against ln R
        let us: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let mu = us.iter().sum::<f64>() / us.len() as f64;
        let me = energies.iter().sum::<f64>() / energies.len() as f64;
        let num: f64 = us.iter().zip(&energies).map(|(u, e)| (u - mu) * (e - me)).sum();
        let den: f64 = us.iter().map(|u| (u - mu) * (u - mu)).sum();
        let slope = num / den;
        let expect = 1.0 / (2.0 * PI);
        assert!(
            (slope - expect).abs() <= 0.05 * expect,
            "log slope {slope} vs {expect}"
        );
    }

    #[test]
    fn inv_laplacian_roundtrip_and_log_extraction() {
        let (n, width) = (512, 128.0);
        // band-limited mean-zero f
        let dx = width / n as f64;
        let f = Array2::from_shape_fn((n, n), |(i, j)| {
            let x = 2.0 * PI * i as f64 * dx / width;
            let y = 2.0 * PI * j as f64 * dx / width;
            (3.0 * x).cos() * (2.0 * y).sin() + 0.5 * (x + 5.0 * y).sin()
        });
        let lap = {
            let g = gradient(&f, width);
            let g1 = gradient(&g[0], width);
            let g2 = gradient(&g[1], width);
            &g1[0] + &g2[1]
        };
        let back = inv_laplacian(&lap, width);
        let mean = f.sum() / (n * n) as f64;
        let worst = f
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - mean - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "roundtrip {worst}");
        // mean-one Gaussian: phi - ln(|x|^2)/(4 pi) bounded on annuli
        let mut d = gaussian(n, width, 1.0, width / 2.0);
        let mass: f64 = d.sum() * dx * dx;
        d.mapv_inplace(|v| v / mass);
        let phi = inv_laplacian(&d, width);
        let c = width / 2.0;
        let mut sup = 0.0_f64;
        let mut samples = Vec::new();
        for ((i, j), &p) in phi.indexed_iter() {
            let x = i as f64 * dx - c;
            let y = j as f64 * dx - c;
            let r2 = x * x + y * y;
            if r2 >= 100.0 && r2 <= (width / 4.0) * (width / 4.0) {
                let dev = p - r2.ln() / (4.0 * PI);
                samples.push(dev);
                sup = sup.max(dev.abs());
            }
        }
        // deviation must be a near-constant offset (box constant): spread small
        let mean_dev = samples.iter().sum::<f64>() / samples.len() as f64;
        let spread = samples
            .iter()
            .map(|s| (s - mean_dev).abs())
            .fold(0.0, f64::max);
        assert!(spread < 0.05, "annulus spread {spread} (sup {sup})");
    }

    #[test]
    fn lowfreq_split_properties() {
        let (n, width) = (128, 32.0);
        let xi0 = 1.0;
        // band-limited below cutoff: only |xi| <= 2 pi/width * 2 modes
        let f = Array2::from_shape_fn((n, n), |(i, j)| {
            ((2.0 * PI * i as f64 / n as f64).cos()) * ((2.0 * PI * j as f64 / n as f64).sin())
        });
        let (_, hf) = lowfreq_split(&f, width, xi0);
        assert!(hf.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-12);
        // white-noise energy additivity (cross terms vanish per mode)
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let (lf, hf) = lowfreq_split(&w, width, xi0);
        let e = |a: &Array2<f64>| a.iter().map(|x| x * x).sum::<f64>();
        // Parseval: total = |chi f|^2 + |(1-chi) f|^2 + 2<chi f,(1-chi)f>;
        // compare energies of f and lf+hf instead (exact split)
        let total = e(&w);
        let recon = e(&(&lf + &hf));
        assert!((total - recon).abs() < 1e-12 * total);
        // HF bound: ||f_HF|| <= (2/xi0) ||grad f|| (bump is 1 inside xi0/2)
        let g = gradient(&w, width);
        let grad_l2 = (e(&g[0]) + e(&g[1])).sqrt();
        assert!(e(&hf).sqrt() <= 2.0 / xi0 * grad_l2);
    }

    #[test]
    fn phase_source_properties() {
        let (n, width) = (256, 64.0);
        let (pf, src) = make_phase_source(n, width, [0.3, 0.18], 2.0, 1.0).unwrap();
        let dx = width / n as f64;
        // integral of the source = amplitude
        let m0: f64 = src[0].sum() * dx * dx;
        assert!((m0 - 0.3).abs() < 1e-10, "source mass {m0}");
        // sign flip negates exactly
        let (pf2, _) = make_phase_source(n, width, [0.3, 0.18], 2.0, -1.0).unwrap();
        let worst = pf.phi[0]
            .iter()
            .zip(pf2.phi[0].iter())
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-14);
        // zero amplitude
        let (pf0, _) = make_phase_source(n, width, [0.0, 0.0], 2.0, 1.0).unwrap();
        assert!(pf0.phi[0].iter().all(|v| v.abs() < 1e-15));
        // too-strong source trips the amplitude guard
        assert!(matches!(
            make_phase_source(n, width, [300.0, 0.0], 2.0, 1.0),
            Err(Error::AmplitudeTooLarge(_))
        ));
        // width under 4 cells rejected
        assert!(make_phase_source(n, width, [0.1, 0.0], 0.5, 1.0).is_err());
    }

    #[test]
    fn inversion_examples() {
        // constant phi: inverse = Id + constant
        let out = invert_points(&|_| [0.3, -0.1], &[[1.0, 2.0]], 1e-12, 50).unwrap();
        assert!((out[0][0] - 1.3).abs() < 1e-12 && (out[0][1] - 1.9).abs() < 1e-12);
        // linear phi = 0.3 x1 e1: y1 - 0.3 y1 = x1 => y1 = x1/0.7
        let out = invert_points(&|p| [0.3 * p[0], 0.0], &[[1.4, -0.6]], 1e-13, 200).unwrap();
        assert!((out[0][0] - 1.4 / 0.7).abs() < 1e-11);
        assert!((out[0][1] + 0.6).abs() < 1e-13);
        // random smooth periodic phi with kappa ~ 0.4: iteration count bound
        let (n, width) = (128, 16.0);
        let phi0 = Array2::from_shape_fn((n, n), |(i, j)| {
            let x = 2.0 * PI * i as f64 / n as f64;
            let y = 2.0 * PI * j as f64 / n as f64;
            0.4 / (2.0 * PI / width) * (x).sin() * (y).cos()
        });
        let pf = PhaseField::new(width, [phi0.clone(), phi0.mapv(|v| 0.5 * v)]);
        let kappa: f64 = pf.grad_sup;
        assert!(kappa < 0.45 && kappa > 0.3, "kappa {kappa}");
        let tol: f64 = 1e-10;
        let max_needed = (tol.ln() / kappa.ln()).ceil() as usize + 2;
        let pts: Vec<[f64; 2]> = (0..50)
            .map(|k| [0.31 * k as f64 % width, 0.17 * k as f64 % width])
            .collect();
        let ys = invert_points(&|p| pf.eval(p), &pts, tol, max_needed).unwrap();
        let inv2 = pf.invert(&pts, tol).unwrap();
        for (a, b) in ys.iter().zip(&inv2) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn composition_norm_inequality() {
        // ||A o (Id-phi) - B||_p <= (1-kappa)^{-2/p} ||A - B o (Id-phi)^{-1}||_p
        let (n, width) = (128, 16.0);
        let phi0 = Array2::from_shape_fn((n, n), |(i, j)| {
            let x = 2.0 * PI * i as f64 / n as f64;
            let y = 2.0 * PI * j as f64 / n as f64;
            0.25 / (2.0 * PI / width) * (x + 0.3).sin() * (2.0 * y).cos()
        });
        let pf = PhaseField::new(width, [phi0.clone(), phi0.mapv(|v| -0.7 * v)]);
        let kappa = pf.grad_sup;
        assert!(kappa < 0.5);
        let smooth = |pt: [f64; 2], s: f64| -> f64 {
            let x = 2.0 * PI * pt[0] / width;
            let y = 2.0 * PI * pt[1] / width;
            (x + s).cos() * (2.0 * y - s).sin() + 0.3 * (3.0 * x * s.cos()).sin()
        };
        let a_fun = |p: [f64; 2]| smooth(p, 0.4);
        let b_fun = |p: [f64; 2]| smooth(p, 1.1);
        let dx = width / n as f64;
        let pts: Vec<[f64; 2]> = (0..n * n)
            .map(|k| [(k / n) as f64 * dx, (k % n) as f64 * dx])
            .collect();
        let inv = pf.invert(&pts, 1e-12).unwrap();
        for p in [2.0, 4.0, f64::INFINITY] {
            let norm = |vals: &[f64]| -> f64 {
                if p.is_infinite() {
                    vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
                } else {
                    (vals.iter().map(|v| v.abs().powf(p)).sum::<f64>() * dx * dx).powf(1.0 / p)
                }
            };
            let lhs_vals: Vec<f64> = pts
                .iter()
                .map(|&x| {
                    let ph = pf.eval(x);
                    a_fun([x[0] - ph[0], x[1] - ph[1]]) - b_fun(x)
                })
                .collect();
            let rhs_vals: Vec<f64> = pts
                .iter()
                .zip(&inv)
                .map(|(&x, &y)| a_fun(x) - b_fun(y))
                .collect();
            let lhs = norm(&lhs_vals);
            let rhs = (1.0 - kappa).powf(-2.0 / p.min(1e9)) * norm(&rhs_vals);
            assert!(
                lhs <= rhs * 1.01,
                "p={p}: lhs {lhs} > rhs {rhs} (kappa {kappa})"
            );
        }
    }
}
