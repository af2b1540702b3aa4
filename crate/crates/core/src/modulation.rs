//! First-order modulation system classification (strictly hyperbolic /
//! simultaneously diagonalizable / scalar), Friedrichs symmetrizers,
//! diffusivity margins, the quadratic coefficient table Lambda, and the
//! averaged well-posed operator D0 built from angular multiplier tables.

use crate::bloch::{
    assemble_symbol, crit_pair, dual_basis, ip, l1_row, translation_mode, LowFreqExpansion,
};
use crate::model::RDSystem;
use crate::profile::WaveDescriptor;
use crate::{Error, Result};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

type M2 = [[f64; 2]; 2];
type M2c = [[C64; 2]; 2];

fn m2_zero() -> M2c {
    [[C64::new(0.0, 0.0); 2]; 2]
}

/// The quadratic damping form of the expansion: D(xi) ~ i A(xi) + Bq(xi)
/// with Bq(xi) = -(b11 xi1^2 + 2 b12 xi1 xi2 + b22 xi2^2).
pub fn bq_of(exp: &LowFreqExpansion, xi: [f64; 2]) -> M2 {
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = -(exp.b11[r][c] * xi[0] * xi[0]
                + 2.0 * exp.b12[r][c] * xi[0] * xi[1]
                + exp.b22[r][c] * xi[1] * xi[1]);
        }
    }
    out
}

// ---- classification ----

#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    /// Case (a): real distinct eigenvalues in every direction.
    CaseA,
    /// Case (b): simultaneously diagonalizable over R; P holds the common
    /// eigenbasis (columns).
    CaseB { p: M2 },
    /// Case (b0): both coefficient matrices scalar.
    CaseB0,
    NotHyperbolic { witness: [f64; 2] },
}

/// Row vectors of A(xi) = A1 xi1 + A2 xi2 as linear forms:
/// A(xi) = [[a.xi, b.xi],[c.xi, d.xi]].
fn proof_rows(a1: &M2, a2: &M2) -> ([f64; 2], [f64; 2], [f64; 2], [f64; 2]) {
    (
        [a1[0][0], a2[0][0]],
        [a1[0][1], a2[0][1]],
        [a1[1][0], a2[1][0]],
        [a1[1][1], a2[1][1]],
    )
}

fn cross(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

fn scale_of(a1: &M2, a2: &M2) -> f64 {
    a1.iter()
        .flatten()
        .chain(a2.iter().flatten())
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

/// Classify the first-order system using the proof coordinates: the
/// discriminant quadratic form Q(xi) = (b.xi)(c.xi) + ((a-d).xi)^2/4 is
/// positive definite exactly in the strict case.
pub fn classify_hyperbolic(a1: &M2, a2: &M2) -> Classification {
    let scale = scale_of(a1, a2);
    let tol = 1e-10 * scale.max(1e-300);
    let (a, b, c, d) = proof_rows(a1, a2);
    let ad = [a[0] - d[0], a[1] - d[1]];

    // Case (b0): both matrices scalar
    let scalar = a1[0][1].abs() <= tol
        && a1[1][0].abs() <= tol
        && a2[0][1].abs() <= tol
        && a2[1][0].abs() <= tol
        && (a1[0][0] - a1[1][1]).abs() <= tol
        && (a2[0][0] - a2[1][1]).abs() <= tol;
    if scalar {
        return Classification::CaseB0;
    }

    // strict case: Q(xi) = xi^T M xi positive definite
    let m11 = b[0] * c[0] + ad[0] * ad[0] / 4.0;
    let m22 = b[1] * c[1] + ad[1] * ad[1] / 4.0;
    let m12 = (b[0] * c[1] + b[1] * c[0]) / 2.0 + ad[0] * ad[1] / 4.0;
    let tr = m11 + m22;
    let det = m11 * m22 - m12 * m12;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let qmin = tr / 2.0 - disc;
    let q_scale = scale * scale;
    if qmin > 1e-10 * q_scale {
        return Classification::CaseA;
    }

    // Case (b): (a-d), b, c colinear and the residual diagonalizable
    let colinear = cross(ad, b).abs() <= tol * scale.max(1e-300)
        && cross(ad, c).abs() <= tol * scale.max(1e-300)
        && cross(b, c).abs() <= tol * scale.max(1e-300);
    if colinear {
        // pick a direction where the common form is largest, diagonalize there
        let best = {
            let candidates = [[1.0, 0.0], [0.0, 1.0], [0.707, 0.707], [0.707, -0.707]];
            *candidates
                .iter()
                .max_by(|x, y| {
                    let f = |w: &[f64; 2]| {
                        (ad[0] * w[0] + ad[1] * w[1]).abs()
                            + (b[0] * w[0] + b[1] * w[1]).abs()
                            + (c[0] * w[0] + c[1] * w[1]).abs()
                    };
                    f(x).partial_cmp(&f(y)).unwrap()
                })
                .unwrap()
        };
        let axi = [
            [
                a1[0][0] * best[0] + a2[0][0] * best[1],
                a1[0][1] * best[0] + a2[0][1] * best[1],
            ],
            [
                a1[1][0] * best[0] + a2[1][0] * best[1],
                a1[1][1] * best[0] + a2[1][1] * best[1],
            ],
        ];
        if let Some((_, v)) = eig_real2(&axi, tol) {
            // verify the basis diagonalizes both matrices
            if diagonalizes(&v, a1, tol) && diagonalizes(&v, a2, tol) {
                return Classification::CaseB { p: v };
            }
        }
    }
    // witness: direction minimizing Q (eigenvector of the smallest eigenvalue)
    let witness = if m12.abs() > 1e-300 {
        let w = [m12, qmin - m11];
        let nw = (w[0] * w[0] + w[1] * w[1]).sqrt();
        [w[0] / nw, w[1] / nw]
    } else if m11 <= m22 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    Classification::NotHyperbolic { witness }
}

/// Real eigendecomposition of a 2x2 matrix; None when eigenvalues are
/// complex or the matrix is defective. Scalar matrices return the identity
/// basis.
pub fn eig_real2(m: &M2, tol: f64) -> Option<([f64; 2], M2)> {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc < -tol * tol {
        return None;
    }
    let sq = disc.max(0.0).sqrt();
    let lam = [tr / 2.0 - sq, tr / 2.0 + sq];
    if sq <= tol {
        // equal eigenvalues: diagonalizable only if scalar
        if m[0][1].abs() <= tol && m[1][0].abs() <= tol && (m[0][0] - m[1][1]).abs() <= tol {
            return Some((lam, [[1.0, 0.0], [0.0, 1.0]]));
        }
        return None;
    }
    let col = |l: f64| -> [f64; 2] {
        let v = if m[0][1].abs() > tol {
            [m[0][1], l - m[0][0]]
        } else if m[1][0].abs() > tol {
            [l - m[1][1], m[1][0]]
        } else if (m[0][0] - l).abs() <= tol {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    };
    let v0 = col(lam[0]);
    let v1 = col(lam[1]);
    Some((lam, [[v0[0], v1[0]], [v0[1], v1[1]]]))
}

fn inv2(m: &M2) -> M2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

fn mul2(a: &M2, b: &M2) -> M2 {
    let mut o = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            o[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    o
}

fn diagonalizes(v: &M2, m: &M2, tol: f64) -> bool {
    let d = mul2(&inv2(v), &mul2(m, v));
    d[0][1].abs() <= 10.0 * tol && d[1][0].abs() <= 10.0 * tol
}

// ---- symmetrizer ----

/// Friedrichs symmetrizer for the classified pair; validated S > 0 and
/// S A_j symmetric before returning.
pub fn symmetrizer(a1: &M2, a2: &M2, class: &Classification) -> Result<M2> {
    let scale = scale_of(a1, a2);
    let (a, b, c, d) = proof_rows(a1, a2);
    let ad = [a[0] - d[0], a[1] - d[1]];
    let s = match class {
        Classification::NotHyperbolic { .. } => {
            return Err(Error::ValidationFailure(
                "no symmetrizer for a non-hyperbolic system".into(),
            ))
        }
        Classification::CaseB0 => [[1.0, 0.0], [0.0, 1.0]],
        Classification::CaseA => {
            // c-row = alpha b-row + beta (a-d)-row; strict case guarantees
            // b and (a-d) independent
            let det = cross(b, ad);
            if det.abs() < 1e-12 * scale * scale {
                return Err(Error::ValidationFailure(
                    "strict case with dependent proof rows".into(),
                ));
            }
            let alpha = cross(c, ad) / det;
            let beta = cross(b, c) / det;
            if alpha <= beta * beta {
                return Err(Error::ValidationFailure(format!(
                    "sign condition alpha > beta^2 violated: {alpha} vs {}",
                    beta * beta
                )));
            }
            [[alpha, -beta], [-beta, 1.0]]
        }
        Classification::CaseB { p } => {
            // colinear rows: b = beta l, c = gamma l for a common form l
            let l = if b[0].abs() + b[1].abs() > c[0].abs() + c[1].abs() {
                b
            } else {
                c
            };
            let ln = (l[0] * l[0] + l[1] * l[1]).sqrt();
            if ln < 1e-12 * scale {
                // both off-diagonal forms vanish: already symmetric
                [[1.0, 0.0], [0.0, 1.0]]
            } else {
                let lu = [l[0] / ln, l[1] / ln];
                let beta = b[0] * lu[0] + b[1] * lu[1];
                let gamma = c[0] * lu[0] + c[1] * lu[1];
                if beta.abs() > 1e-12 * scale && gamma.abs() > 1e-12 * scale {
                    [
                        [(gamma / beta).abs().sqrt(), 0.0],
                        [0.0, (beta / gamma).abs().sqrt()],
                    ]
                } else {
                    // triangular subcase: build S from the diagonalizing basis,
                    // S = (P P^T)^{-1}
                    let pi = inv2(p);
                    let mut s = [[0.0; 2]; 2];
                    for r in 0..2 {
                        for cc in 0..2 {
                            s[r][cc] = pi[0][r] * pi[0][cc] + pi[1][r] * pi[1][cc];
                        }
                    }
                    s
                }
            }
        }
    };
    validate_symmetrizer(&s, a1, a2)?;
    Ok(s)
}

pub fn validate_symmetrizer(s: &M2, a1: &M2, a2: &M2) -> Result<()> {
    let scale = scale_of(a1, a2).max(1e-300);
    let s_scale = scale_of(s, s).max(1e-300);
    if (s[0][1] - s[1][0]).abs() > 1e-12 * s_scale {
        return Err(Error::ValidationFailure("S not symmetric".into()));
    }
    let tr = s[0][0] + s[1][1];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if tr <= 0.0 || det <= 0.0 {
        return Err(Error::ValidationFailure("S not positive definite".into()));
    }
    for m in [a1, a2] {
        let sa = mul2(s, m);
        if (sa[0][1] - sa[1][0]).abs() > 1e-10 * s_scale * scale {
            return Err(Error::ValidationFailure(format!(
                "S A not symmetric: defect {}",
                (sa[0][1] - sa[1][0]).abs()
            )));
        }
    }
    Ok(())
}

// ---- diffusivity ----

pub struct DiffusivityReport {
    /// Smallest damping margin theta over all sampled directions.
    pub theta: f64,
    /// Per-direction (angle, branch margins).
    pub margins: Vec<(f64, [f64; 2])>,
    pub pass: bool,
}

/// Damping margins of the quadratic part against the hyperbolic eigenmodes:
/// for each unit direction, the Rayleigh quantities <l; Bq(w) v> on the
/// eigenpairs of A(w) (distinct case) or the spectrum of Bq(w) (scalar
/// directions). Margins are positive when the mode is damped.
pub fn diffusivity_check(exp: &LowFreqExpansion, m_dirs: usize) -> DiffusivityReport {
    let mut theta = f64::INFINITY;
    let mut margins = Vec::with_capacity(m_dirs);
    let b_scale = [exp.b11, exp.b12, exp.b22]
        .iter()
        .flat_map(|m| m.iter().flatten())
        .map(|v| v.abs())
        .fold(0.0_f64, f64::max);
    for i in 0..m_dirs {
        let ang = PI * i as f64 / m_dirs as f64;
        let w = [ang.cos(), ang.sin()];
        let aw = exp.a_of(w);
        let bw = bq_of(exp, w);
        let a_scale = scale_of(&aw, &aw);
        let mut pair = [0.0; 2];
        match eig_real2(&aw, 1e-10 * a_scale.max(1e-300)) {
            Some((lam, v)) if (lam[1] - lam[0]).abs() > 1e-8 * a_scale.max(1e-300) => {
                let vi = inv2(&v);
                for j in 0..2 {
                    // Rayleigh coefficient of the r^2 eigenvalue correction
                    let mut val = 0.0;
                    for r in 0..2 {
                        for cc in 0..2 {
                            val += vi[j][r] * bw[r][cc] * v[cc][j];
                        }
                    }
                    pair[j] = -val;
                }
            }
            _ => {
                // scalar/degenerate direction: spectrum of Bq(w)
                let tr = bw[0][0] + bw[1][1];
                let det = bw[0][0] * bw[1][1] - bw[0][1] * bw[1][0];
                let disc = tr * tr / 4.0 - det;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    pair = [-(tr / 2.0 + sq), -(tr / 2.0 - sq)];
                } else {
                    // complex pair: common real part
                    pair = [-tr / 2.0, -tr / 2.0];
                }
            }
        }
        theta = theta.min(pair[0].min(pair[1]));
        margins.push((ang, pair));
    }
    DiffusivityReport {
        theta,
        margins,
        pass: theta >= 1e-3 * b_scale,
    }
}

// ---- Lambda coefficient table ----

/// Quadratic coefficient table indexed [j][l][p][m].
#[derive(Debug, Clone)]
pub struct LambdaTable(pub [[[[C64; 2]; 2]; 2]; 2]);

impl LambdaTable {
    /// Contraction matching the second-order symbol derivative:
    /// out[l][m] = sum_{j,p} T[j][l][p][m] z_j z_p with z = i K eta.
    pub fn contract(&self, z: [C64; 2]) -> M2c {
        let mut out = m2_zero();
        for j in 0..2 {
            for l in 0..2 {
                for p in 0..2 {
                    for m in 0..2 {
                        out[l][m] += self.0[j][l][p][m] * z[j] * z[p];
                    }
                }
            }
        }
        out
    }
}

/// Assemble the quadratic coefficient table
/// T[j][l][p][m] = delta_{lm} delta_{jp}
///   + <qt_l; L1_row_j(dU/dK_{p,m}) + sum_r (K^T dc/dK_{p,m})_r dU/dK_{j,r}>.
pub fn lambda_coeffs(sys: &dyn RDSystem, wd: &WaveDescriptor) -> Result<LambdaTable> {
    let dku = wd
        .dku
        .as_ref()
        .ok_or_else(|| Error::MissingArtifact("wave derivatives dKU not computed".into()))?;
    let dkc = wd
        .dkc
        .as_ref()
        .ok_or_else(|| Error::MissingArtifact("wave derivatives dKc not computed".into()))?;
    let u_phys = wd.u.to_phys();
    let sym0 = assemble_symbol(sys, &u_phys, &wd.wp, [0.0, 0.0]);
    let cp = crit_pair(&sym0.matrix)?;
    let q0 = [translation_mode(&wd.u, 1), translation_mode(&wd.u, 2)];
    let qt0 = dual_basis(&cp.vl, &q0)?;
    let k = wd.wp.k;
    let mut t = [[[[C64::new(0.0, 0.0); 2]; 2]; 2]; 2];
    for j in 0..2 {
        for p in 0..2 {
            for m in 0..2 {
                let idx = p * 2 + m;
                let l1 = l1_row(sys, &u_phys, &wd.wp, &dku[idx], j);
                // v = K^T dc/dK_{p,m}
                let v = [
                    k[0][0] * dkc[idx][0] + k[1][0] * dkc[idx][1],
                    k[0][1] * dkc[idx][0] + k[1][1] * dkc[idx][1],
                ];
                let extra = dku[j * 2].mapv(|z| z * v[0]) + dku[j * 2 + 1].mapv(|z| z * v[1]);
                let total = &l1 + &extra;
                for l in 0..2 {
                    let mut val = ip(&qt0[l], &total);
                    if l == m && j == p {
                        val += 1.0;
                    }
                    t[j][l][p][m] = val;
                }
            }
        }
    }
    Ok(LambdaTable(t))
}

// ---- angular multiplier tables and D0 ----

fn fft_series(vals: &[C64]) -> Vec<C64> {
    let m = vals.len();
    let mut buf = vals.to_vec();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    buf.iter().map(|z| z / m as f64).collect()
}

fn eval_series(co: &[C64], om: f64) -> C64 {
    let m = co.len();
    let mut acc = C64::new(0.0, 0.0);
    for (i, c) in co.iter().enumerate() {
        let k = crate::field2d::freq(i, m) as f64;
        acc += c * C64::new(0.0, k * om).exp();
    }
    acc
}

/// Per-direction homogeneous multiplier data of the dispersive case:
/// D0(i r e(omega)) = sum_j (i r alpha_j + r^2 beta_j) pi_j, tables on M
/// uniform angles with trigonometric interpolation. beta is stored in the
/// symbol's own sign convention (Re beta < 0 means damping).
#[derive(Debug, Clone)]
pub struct AngularTable {
    pub m_angles: usize,
    pub alpha: Vec<[f64; 2]>,
    pub beta: Vec<[C64; 2]>,
    pub pis: Vec<[M2c; 2]>,
    alpha_co: [Vec<C64>; 2],
    beta_co: [Vec<C64>; 2],
    pis_co: Vec<Vec<C64>>, // 8 series: branch-major, row, col
}

impl AngularTable {
    pub fn from_tables(alpha: Vec<[f64; 2]>, beta: Vec<[C64; 2]>, pis: Vec<[M2c; 2]>) -> Self {
        let m = alpha.len();
        let series = |f: &dyn Fn(usize) -> C64| fft_series(&(0..m).map(f).collect::<Vec<_>>());
        let alpha_co = [
            series(&|i| C64::new(alpha[i][0], 0.0)),
            series(&|i| C64::new(alpha[i][1], 0.0)),
        ];
        let beta_co = [series(&|i| beta[i][0]), series(&|i| beta[i][1])];
        let mut pis_co = Vec::with_capacity(8);
        for j in 0..2 {
            for r in 0..2 {
                for c in 0..2 {
                    pis_co.push(series(&|i| pis[i][j][r][c]));
                }
            }
        }
        AngularTable {
            m_angles: m,
            alpha,
            beta,
            pis,
            alpha_co,
            beta_co,
            pis_co,
        }
    }

    /// Interpolated (alpha_j, beta_j, pi_j) at angle omega.
    pub fn eval(&self, om: f64) -> ([f64; 2], [C64; 2], [M2c; 2]) {
        let a = [
            eval_series(&self.alpha_co[0], om).re,
            eval_series(&self.alpha_co[1], om).re,
        ];
        let b = [
            eval_series(&self.beta_co[0], om),
            eval_series(&self.beta_co[1], om),
        ];
        let mut p = [m2_zero(), m2_zero()];
        for j in 0..2 {
            for r in 0..2 {
                for c in 0..2 {
                    p[j][r][c] = eval_series(&self.pis_co[(j * 2 + r) * 2 + c], om);
                }
            }
        }
        (a, b, p)
    }
}

/// Representation of the second-order replacement operator Lambda0.
#[derive(Debug, Clone)]
pub enum Lambda0 {
    /// Differential form: quadratic part evaluated from coefficient matrices
    /// (cases (b) and (b0); case (b) stores the projected matrices).
    Differential {
        b11: M2,
        b12: M2,
        b22: M2,
    },
    /// Angular multiplier table (case (a)).
    Angular(AngularTable),
}

/// Build Lambda0 for the classified system.
/// - (b0): the quadratic expansion itself.
/// - (b): diagonal part of P^{-1} Bq P in the common eigenbasis.
/// - (a): per-angle eigen-expansion tables, M angles.
pub fn build_lambda0(
    exp: &LowFreqExpansion,
    class: &Classification,
    m_angles: usize,
) -> Result<Lambda0> {
    match class {
        Classification::NotHyperbolic { witness } => Err(Error::ValidationFailure(format!(
            "system not hyperbolic (witness direction {witness:?})"
        ))),
        Classification::CaseB0 => Ok(Lambda0::Differential {
            b11: exp.b11,
            b12: exp.b12,
            b22: exp.b22,
        }),
        Classification::CaseB { p } => {
            // project each coefficient matrix onto the diagonal in the common
            // eigenbasis: M -> P diag(P^{-1} M P) P^{-1}
            let pi = inv2(p);
            let proj = |m: &M2| -> M2 {
                let d = mul2(&pi, &mul2(m, p));
                let dd = [[d[0][0], 0.0], [0.0, d[1][1]]];
                mul2(p, &mul2(&dd, &pi))
            };
            Ok(Lambda0::Differential {
                b11: proj(&exp.b11),
                b12: proj(&exp.b12),
                b22: proj(&exp.b22),
            })
        }
        Classification::CaseA => {
            let mut alpha = Vec::with_capacity(m_angles);
            let mut beta = Vec::with_capacity(m_angles);
            let mut pis = Vec::with_capacity(m_angles);
            for i in 0..m_angles {
                let om = 2.0 * PI * i as f64 / m_angles as f64;
                let w = [om.cos(), om.sin()];
                let aw = exp.a_of(w);
                let bw = bq_of(exp, w);
                let a_scale = scale_of(&aw, &aw).max(1e-300);
                let (lam, v) = eig_real2(&aw, 1e-12 * a_scale).ok_or_else(|| {
                    Error::ExpansionFailure(format!(
                        "eigenvalue branches not separable at angle {om:.4}"
                    ))
                })?;
                if (lam[1] - lam[0]).abs() <= 1e-9 * a_scale {
                    return Err(Error::ExpansionFailure(format!(
                        "hyperbolic eigenvalues collide at angle {om:.4}"
                    )));
                }
                let vi = inv2(&v);
                let mut al = [0.0; 2];
                let mut be = [C64::new(0.0, 0.0); 2];
                let mut pj = [m2_zero(), m2_zero()];
                for j in 0..2 {
                    al[j] = lam[j];
                    let mut rayleigh = 0.0;
                    for r in 0..2 {
                        for c in 0..2 {
                            rayleigh += vi[j][r] * bw[r][c] * v[c][j];
                            pj[j][r][c] = C64::new(v[r][j] * vi[j][c], 0.0);
                        }
                    }
                    be[j] = C64::new(rayleigh, 0.0);
                }
                alpha.push(al);
                beta.push(be);
                pis.push(pj);
            }
            Ok(Lambda0::Angular(AngularTable::from_tables(alpha, beta, pis)))
        }
    }
}

/// Evaluate D0(i xi) = A(i xi) + second-order Lambda0 contribution.
pub fn d0_eval(lambda0: &Lambda0, exp: &LowFreqExpansion, xi: [f64; 2]) -> M2c {
    let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
    if r == 0.0 {
        return m2_zero();
    }
    match lambda0 {
        Lambda0::Differential { b11, b12, b22 } => {
            let aw = exp.a_of(xi);
            let mut out = m2_zero();
            for rr in 0..2 {
                for cc in 0..2 {
                    let quad = -(b11[rr][cc] * xi[0] * xi[0]
                        + 2.0 * b12[rr][cc] * xi[0] * xi[1]
                        + b22[rr][cc] * xi[1] * xi[1]);
                    out[rr][cc] = C64::new(quad, aw[rr][cc]);
                }
            }
            out
        }
        Lambda0::Angular(tab) => {
            let om = xi[1].atan2(xi[0]).rem_euclid(2.0 * PI);
            let (al, be, pj) = tab.eval(om);
            let mut out = m2_zero();
            for j in 0..2 {
                let lam = C64::new(0.0, r * al[j]) + be[j] * (r * r);
                for rr in 0..2 {
                    for cc in 0..2 {
                        out[rr][cc] += lam * pj[j][rr][cc];
                    }
                }
            }
            out
        }
    }
}

/// exp(t D0(i xi)): eigen-factor form for the angular tables, matrix
/// exponential for the differential cases.
pub fn exp_d0(lambda0: &Lambda0, exp: &LowFreqExpansion, xi: [f64; 2], t: f64) -> M2c {
    let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
    let mut eye = m2_zero();
    eye[0][0] = C64::new(1.0, 0.0);
    eye[1][1] = C64::new(1.0, 0.0);
    if r == 0.0 {
        return eye;
    }
    match lambda0 {
        Lambda0::Angular(tab) => {
            let om = xi[1].atan2(xi[0]).rem_euclid(2.0 * PI);
            let (al, be, pj) = tab.eval(om);
            let mut out = m2_zero();
            for j in 0..2 {
                let f = ((C64::new(0.0, r * al[j]) + be[j] * (r * r)) * t).exp();
                for rr in 0..2 {
                    for cc in 0..2 {
                        out[rr][cc] += f * pj[j][rr][cc];
                    }
                }
            }
            out
        }
        Lambda0::Differential { .. } => {
            let d0 = d0_eval(lambda0, exp, xi);
            let mut g = d0;
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v *= t;
                }
            }
            crate::multiplier::expm2(&g)
        }
    }
}

/// Dispersion-curvature proxy of the dispersive case: min over angles and
/// branches of |alpha_j + alpha_j''| (second angular derivative computed
/// spectrally from the table).
pub fn dispersive_curvature_check(tab: &AngularTable) -> f64 {
    let m = tab.m_angles;
    let mut min_val = f64::INFINITY;
    for j in 0..2 {
        let co = fft_series(
            &(0..m)
                .map(|i| C64::new(tab.alpha[i][j], 0.0))
                .collect::<Vec<_>>(),
        );
        for i in 0..m {
            let om = 2.0 * PI * i as f64 / m as f64;
            let mut second = C64::new(0.0, 0.0);
            for (ki, c) in co.iter().enumerate() {
                let k = crate::field2d::freq(ki, m) as f64;
                second += c * C64::new(0.0, k * om).exp() * (-k * k);
            }
            min_val = min_val.min((tab.alpha[i][j] + second.re).abs());
        }
    }
    min_val
}
