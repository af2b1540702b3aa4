//! Phase-anchored Newton solver for periodic wave profiles U^K and speeds
//! c(K), continuation in the wave matrix K, and the wave-family derivatives
//! dU/dK, dc/dK, dOmega/dK, d2Omega/dK2 used by the modulation analysis.

use crate::bloch::{assemble_symbol, crit_pair, dual_basis, ip, phys_of_spec, ravel_spec, translation_mode};
use crate::field2d::{fft2_inplace, Grid2D, PeriodicField};
use crate::model::{g_grid, k_grad_symbols, residual, RDSystem, WaveParams};
use crate::{Error, Result};
use ndarray::{Array1, Array2, Array3};
use ndarray_linalg::Solve;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// A converged wave with optional family derivatives.
/// Derivative tables are indexed by the flattened K-entry p*2+m (dK_{p,m}).
#[derive(Debug, Clone)]
pub struct WaveDescriptor {
    pub wp: WaveParams,
    pub u: PeriodicField,
    pub residual_norm: f64,
    /// Physical anchor fields of the two phase conditions.
    pub anchors: [Array3<f64>; 2],
    /// Reference profile the phase conditions are taken against.
    pub anchor_ref: Array3<f64>,
    pub dku: Option<[Array1<C64>; 4]>,
    pub dkc: Option<[[f64; 2]; 4]>,
    pub dkomega: Option<[[f64; 2]; 4]>,
    /// d2Omega[pm][qr] in R^2, symmetric in (pm, qr).
    pub d2komega: Option<[[[f64; 2]; 4]; 4]>,
}

fn sup(a: &Array3<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Gram-matrix independence measure of the two translation modes:
/// smallest eigenvalue of the normalized Gram matrix.
pub fn independence_measure(u: &PeriodicField) -> f64 {
    let d1 = translation_mode(u, 1);
    let d2 = translation_mode(u, 2);
    let g11 = ip(&d1, &d1).re;
    let g22 = ip(&d2, &d2).re;
    let g12 = ip(&d1, &d2);
    let scale = g11.max(g22);
    if scale < 1e-20 {
        return 0.0;
    }
    let tr = g11 + g22;
    let det = g11 * g22 - g12.norm_sqr();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - disc) / scale
}

/// Default anchors: the two coordinate derivatives of the seed.
fn seed_anchors(seed: &Array3<f64>, grid: Grid2D) -> Result<[Array3<f64>; 2]> {
    let f = PeriodicField::from_phys(grid, seed)?;
    Ok([f.differentiate(1).to_phys(), f.differentiate(2).to_phys()])
}

/// dR/dc_j = (K grad)_j U, physical.
fn drdc(u: &PeriodicField, k: [[f64; 2]; 2], j: usize) -> Array3<f64> {
    let n = u.grid.n_modes;
    let (d1, d2) = k_grad_symbols(k, n, [0.0, 0.0]);
    let d = if j == 0 { d1 } else { d2 };
    let mut out = u.clone();
    for c in 0..u.ncomp {
        for p in 0..n {
            for q in 0..n {
                out.coeffs[[c, p, q]] = u.coeffs[[c, p, q]] * d[[p, q]];
            }
        }
    }
    out.to_phys()
}

/// Convert the spectral Galerkin matrix to the physical-basis Jacobian
/// J_phys = P^{-1} L P (P: physical -> spectral per component) using FFTs on
/// rows and columns; returns the real part.
fn spectral_to_phys_jacobian(l: &Array2<C64>, nc: usize, n: usize) -> Array2<f64> {
    let nn = n * n;
    let dim = nc * nn;
    let mut m = l.clone();
    let norm = 1.0 / nn as f64;
    // right-multiplication by P = kron(F,F)/N^2 acts on each row blockwise
    let mut scratch = Array2::<C64>::zeros((n, n));
    for r in 0..dim {
        for b in 0..nc {
            for p in 0..n {
                for q in 0..n {
                    scratch[[p, q]] = m[[r, b * nn + p * n + q]];
                }
            }
            fft2_inplace(&mut scratch, false);
            for p in 0..n {
                for q in 0..n {
                    m[[r, b * nn + p * n + q]] = scratch[[p, q]] * norm;
                }
            }
        }
    }
    // left-multiplication by P^{-1} = kron(Fi,Fi) acts on each column blockwise
    for c in 0..dim {
        for b in 0..nc {
            for p in 0..n {
                for q in 0..n {
                    scratch[[p, q]] = m[[b * nn + p * n + q, c]];
                }
            }
            fft2_inplace(&mut scratch, true);
            for p in 0..n {
                for q in 0..n {
                    m[[b * nn + p * n + q, c]] = scratch[[p, q]];
                }
            }
        }
    }
    m.mapv(|z| z.re)
}

/// Assemble the bordered Newton matrix at state (U, c):
/// [ J_phys  dR/dc ; anchors/NN  0 ], size (n N^2 + 2)^2 real.
fn newton_matrix(
    sys: &dyn RDSystem,
    u: &PeriodicField,
    wp: &WaveParams,
    anchors: &[Array3<f64>; 2],
) -> Array2<f64> {
    let n = u.grid.n_modes;
    let nc = u.ncomp;
    let nn = n * n;
    let dim = nc * nn;
    let u_phys = u.to_phys();
    let ls = assemble_symbol(sys, &u_phys, wp, [0.0, 0.0]);
    let jp = spectral_to_phys_jacobian(&ls.matrix, nc, n);
    let mut a = Array2::<f64>::zeros((dim + 2, dim + 2));
    a.slice_mut(ndarray::s![..dim, ..dim]).assign(&jp);
    for j in 0..2 {
        let col = drdc(u, wp.k, j);
        for (r, v) in col.iter().enumerate() {
            a[[r, dim + j]] = *v;
        }
        for (cidx, v) in anchors[j].iter().enumerate() {
            a[[dim + j, cidx]] = v / nn as f64;
        }
    }
    a
}

/// Newton solve with explicit anchors and phase reference.
#[allow(clippy::too_many_arguments)]
pub fn solve_profile_anchored(
    sys: &dyn RDSystem,
    k: [[f64; 2]; 2],
    seed_phys: &Array3<f64>,
    c_seed: [f64; 2],
    anchors: &[Array3<f64>; 2],
    anchor_ref: &Array3<f64>,
    tol: f64,
    maxit: usize,
) -> Result<WaveDescriptor> {
    let n = seed_phys.shape()[1];
    let nc = sys.n();
    let nn = n * n;
    let dim = nc * nn;
    let grid = Grid2D::new(n)?;
    let mut w = seed_phys.clone();
    let mut c = c_seed;
    let mut res_norm = f64::INFINITY;
    let mut converged = false;
    for _ in 0..maxit {
        let wp = WaveParams::new(k, c)?;
        let uf = PeriodicField::from_phys(grid, &w)?;
        let res = residual(sys, &uf, &wp)?.to_phys();
        let pc = [
            anchors[0]
                .iter()
                .zip(w.iter().zip(anchor_ref.iter()))
                .map(|(a, (x, s))| a * (x - s))
                .sum::<f64>()
                / nn as f64,
            anchors[1]
                .iter()
                .zip(w.iter().zip(anchor_ref.iter()))
                .map(|(a, (x, s))| a * (x - s))
                .sum::<f64>()
                / nn as f64,
        ];
        res_norm = sup(&res).max(pc[0].abs().max(pc[1].abs()));
        if res_norm < tol {
            converged = true;
            break;
        }
        if !res_norm.is_finite() {
            return Err(Error::NoConvergence(format!(
                "Newton residual diverged on {}",
                sys.name()
            )));
        }
        let a = newton_matrix(sys, &uf, &wp, anchors);
        let mut rhs = Array1::<f64>::zeros(dim + 2);
        for (i, v) in res.iter().enumerate() {
            rhs[i] = -v;
        }
        rhs[dim] = -pc[0];
        rhs[dim + 1] = -pc[1];
        let dx = a
            .solve_into(rhs)
            .map_err(|e| Error::SingularJacobian(format!("{e}")))?;
        for (i, v) in w.iter_mut().enumerate() {
            *v += dx[i];
        }
        c[0] += dx[dim];
        c[1] += dx[dim + 1];
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "Newton stalled at residual {res_norm:.3e} on {}",
            sys.name()
        )));
    }
    let u = PeriodicField::from_phys(grid, &w)?;
    if independence_measure(&u) < 1e-6 {
        return Err(Error::DegenerateWave(
            "translation modes dependent (constant or 1D profile)".into(),
        ));
    }
    Ok(WaveDescriptor {
        wp: WaveParams::new(k, c)?,
        u,
        residual_norm: res_norm,
        anchors: anchors.clone(),
        anchor_ref: anchor_ref.clone(),
        dku: None,
        dkc: None,
        dkomega: None,
        d2komega: None,
    })
}

/// Newton solve anchored to the seed's own translation modes.
pub fn solve_profile(
    sys: &dyn RDSystem,
    k: [[f64; 2]; 2],
    seed_phys: &Array3<f64>,
    c_seed: [f64; 2],
    tol: f64,
) -> Result<WaveDescriptor> {
    let grid = Grid2D::new(seed_phys.shape()[1])?;
    let anchors = seed_anchors(seed_phys, grid)?;
    solve_profile_anchored(sys, k, seed_phys, c_seed, &anchors, seed_phys, tol, 40)
}

/// Weakly nonlinear Turing-square seed around a constant state:
/// seed = const + eps (cos 2 pi x1 + cos 2 pi x2) v_crit, with v_crit the
/// eigenvector of the most unstable eigenvalue of the 2x2 linearization.
pub fn turing_square_seed(
    const_state: &[f64],
    m: &Array2<f64>,
    eps: f64,
    n_modes: usize,
) -> Result<Array3<f64>> {
    if m.nrows() != 2 {
        return Err(Error::InputError("Turing-square seed needs a 2x2 linearization".into()));
    }
    let tr = m[[0, 0]] + m[[1, 1]];
    let det = m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]];
    let disc = tr * tr / 4.0 - det;
    if disc < 0.0 {
        return Err(Error::InputError("complex eigenvalues; no real critical mode".into()));
    }
    let lam = tr / 2.0 + disc.sqrt();
    // eigenvector of the larger eigenvalue
    let v = if m[[0, 1]].abs() > 1e-14 {
        [m[[0, 1]], lam - m[[0, 0]]]
    } else {
        [lam - m[[1, 1]], m[[1, 0]]]
    };
    let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let v = [v[0] / nv, v[1] / nv];
    Ok(Array3::from_shape_fn((2, n_modes, n_modes), |(c, i, j)| {
        let x1 = i as f64 / n_modes as f64;
        let x2 = j as f64 / n_modes as f64;
        const_state[c] + eps * ((2.0 * PI * x1).cos() + (2.0 * PI * x2).cos()) * v[c]
    }))
}

/// Continuation of a descriptor to a target wave matrix along a straight
/// path with adaptive step halving; re-anchors to the current profile.
pub fn continue_in_k(
    sys: &dyn RDSystem,
    wd: &WaveDescriptor,
    k_target: [[f64; 2]; 2],
    steps: usize,
    tol: f64,
) -> Result<WaveDescriptor> {
    let k0 = wd.wp.k;
    let mut cur = wd.clone();
    let mut t = 0.0_f64;
    let mut dt = 1.0 / steps.max(1) as f64;
    let mut halvings = 0;
    while t < 1.0 - 1e-12 {
        let tn = (t + dt).min(1.0);
        let mut k = [[0.0; 2]; 2];
        for p in 0..2 {
            for m in 0..2 {
                k[p][m] = k0[p][m] + tn * (k_target[p][m] - k0[p][m]);
            }
        }
        let seed = cur.u.to_phys();
        let grid = cur.u.grid;
        let anchors = seed_anchors(&seed, grid)?;
        match solve_profile_anchored(sys, k, &seed, cur.wp.c, &anchors, &seed, tol, 20) {
            Ok(next) => {
                cur = next;
                t = tn;
            }
            Err(Error::NoConvergence(_)) if halvings < 8 => {
                dt /= 2.0;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(cur)
}

/// Explicit partial dR/dK_{p,m} at the solution:
/// d_{y_m} ( 2 (K grad)_p U + G_p(U) + c_p U ), physical.
fn drdk(sys: &dyn RDSystem, u: &PeriodicField, wp: &WaveParams, p: usize, m: usize) -> Array3<f64> {
    let n = u.grid.n_modes;
    let nc = u.ncomp;
    let (d1, d2) = k_grad_symbols(wp.k, n, [0.0, 0.0]);
    let dp = if p == 0 { &d1 } else { &d2 };
    let mask = u.grid.dealias_mask();
    let gval = g_grid(sys, &u.to_phys());
    let gp = PeriodicField::from_phys(
        u.grid,
        &gval.index_axis(ndarray::Axis(0), p).to_owned(),
    )
    .unwrap();
    let mut inner = PeriodicField::zeros(u.grid, nc);
    for c in 0..nc {
        for i in 0..n {
            for j in 0..n {
                let mut v = 2.0 * dp[[i, j]] * u.coeffs[[c, i, j]] + wp.c[p] * u.coeffs[[c, i, j]];
                if mask[[i, j]] {
                    v += gp.coeffs[[c, i, j]];
                }
                inner.coeffs[[c, i, j]] = v;
            }
        }
    }
    inner.differentiate(1 + m).to_phys()
}

/// Fill dKU, dKc, dKOmega, d2KOmega by continuation finite differences with
/// step h (fourth-order first differences; centered second differences), and
/// cross-check dKU against the bordered linear solve of the differentiated
/// profile equation.
pub fn wave_derivatives(sys: &dyn RDSystem, wd: &WaveDescriptor, h: f64) -> Result<WaveDescriptor> {
    let n = wd.u.grid.n_modes;
    let nc = wd.u.ncomp;
    let nn = n * n;
    let dim = nc * nn;
    let w0 = wd.u.to_phys();

    // adjoint-kernel anchors: duals of the translation modes in the left
    // kernel of L0, so the phase stays fixed across the family
    let sym0 = assemble_symbol(sys, &w0, &wd.wp, [0.0, 0.0]);
    let cp = crit_pair(&sym0.matrix)?;
    let q0 = [translation_mode(&wd.u, 1), translation_mode(&wd.u, 2)];
    let qt0 = dual_basis(&cp.vl, &q0)?;
    let anchors = [
        phys_of_spec(&qt0[0], nc, n).mapv(|z| z.re),
        phys_of_spec(&qt0[1], nc, n).mapv(|z| z.re),
    ];

    let fam = |k: [[f64; 2]; 2]| -> Result<(Array3<f64>, [f64; 2], [f64; 2])> {
        let out = solve_profile_anchored(sys, k, &w0, wd.wp.c, &anchors, &w0, 1e-11, 25)?;
        Ok((out.u.to_phys(), out.wp.c, out.wp.omega))
    };
    let kof = |entries: &[(usize, usize, f64)]| {
        let mut k = wd.wp.k;
        for &(p, m, dv) in entries {
            k[p][m] += dv;
        }
        k
    };

    let mut dku: Vec<Array1<C64>> = Vec::with_capacity(4);
    let mut dkc = [[0.0_f64; 2]; 4];
    let mut dkom = [[0.0_f64; 2]; 4];
    let mut om_p = [[0.0_f64; 2]; 4];
    let mut om_m = [[0.0_f64; 2]; 4];
    let grid = wd.u.grid;
    for p in 0..2 {
        for m in 0..2 {
            let idx = p * 2 + m;
            let (wp1, cp1, op1) = fam(kof(&[(p, m, h)]))?;
            let (wm1, cm1, om1) = fam(kof(&[(p, m, -h)]))?;
            let (wp2, cp2, op2) = fam(kof(&[(p, m, 2.0 * h)]))?;
            let (wm2, cm2, om2) = fam(kof(&[(p, m, -2.0 * h)]))?;
            om_p[idx] = op1;
            om_m[idx] = om1;
            let mut du = Array3::<f64>::zeros((nc, n, n));
            for (o, (((a, b), c2), d2v)) in du
                .iter_mut()
                .zip(wp1.iter().zip(wm1.iter()).zip(wp2.iter()).zip(wm2.iter()))
            {
                *o = (8.0 * (a - b) - (c2 - d2v)) / (12.0 * h);
            }
            dku.push(ravel_spec(&PeriodicField::from_phys(grid, &du)?.coeffs));
            for r in 0..2 {
                dkc[idx][r] = (8.0 * (cp1[r] - cm1[r]) - (cp2[r] - cm2[r])) / (12.0 * h);
                dkom[idx][r] = (8.0 * (op1[r] - om1[r]) - (op2[r] - om2[r])) / (12.0 * h);
            }
        }
    }
    let dku: [Array1<C64>; 4] = [
        dku[0].clone(),
        dku[1].clone(),
        dku[2].clone(),
        dku[3].clone(),
    ];

    // second differences of Omega; mixed entries from the 4-point stencil
    let om0 = wd.wp.omega;
    let mut d2om = [[[0.0_f64; 2]; 4]; 4];
    for idx in 0..4 {
        for r in 0..2 {
            d2om[idx][idx][r] = (om_p[idx][r] - 2.0 * om0[r] + om_m[idx][r]) / (h * h);
        }
    }
    for a in 0..4 {
        for b in (a + 1)..4 {
            let (pa, ma) = (a / 2, a % 2);
            let (pb, mb) = (b / 2, b % 2);
            let (_, _, opp) = fam(kof(&[(pa, ma, h), (pb, mb, h)]))?;
            let (_, _, omm) = fam(kof(&[(pa, ma, -h), (pb, mb, -h)]))?;
            let (_, _, opm) = fam(kof(&[(pa, ma, h), (pb, mb, -h)]))?;
            let (_, _, omp) = fam(kof(&[(pa, ma, -h), (pb, mb, h)]))?;
            for r in 0..2 {
                let v = (opp[r] + omm[r] - opm[r] - omp[r]) / (4.0 * h * h);
                d2om[a][b][r] = v;
                d2om[b][a][r] = v;
            }
        }
    }

    // bordered cross-check: A [du; dc] = -[dR/dK_pm; 0] with the same anchors
    let a = newton_matrix(sys, &wd.u, &wd.wp, &anchors);
    // family-wide scale: some single entries can be exactly zero (symmetry),
    // so relative errors are taken against the largest derivative overall
    let mut worst_num: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for p in 0..2 {
        for m in 0..2 {
            let idx = p * 2 + m;
            let rhs_field = drdk(sys, &wd.u, &wd.wp, p, m);
            let mut rhs = Array1::<f64>::zeros(dim + 2);
            for (i, v) in rhs_field.iter().enumerate() {
                rhs[i] = -v;
            }
            let sol = a
                .clone()
                .solve_into(rhs)
                .map_err(|e| Error::SingularJacobian(format!("{e}")))?;
            // compare physical dU
            let fd_phys = phys_of_spec(&dku[idx], nc, n);
            let mut num: f64 = 0.0;
            let mut den: f64 = 0.0;
            for (i, v) in fd_phys.iter().enumerate() {
                num = num.max((sol[i] - v.re).abs());
                den = den.max(v.re.abs());
            }
            // also the speed derivative
            for r in 0..2 {
                num = num.max((sol[dim + r] - dkc[idx][r]).abs());
                den = den.max(dkc[idx][r].abs());
            }
            worst_num = worst_num.max(num);
            scale = scale.max(den);
        }
    }
    let worst_rel = worst_num / scale.max(1e-300);
    if worst_rel > 1e-3 {
        return Err(Error::InconsistentDerivative(format!(
            "bordered-solve vs finite-difference dKU: rel err {worst_rel:.3e}"
        )));
    }

    let mut out = wd.clone();
    out.anchors = anchors;
    out.anchor_ref = w0;
    out.dku = Some(dku);
    out.dkc = Some(dkc);
    out.dkomega = Some(dkom);
    out.d2komega = Some(d2om);
    Ok(out)
}

// ---- wave archive ----

/// Versioned wave archive: JSON header line (metadata + scalars) followed by
/// field snapshots for the profile and, when present, the four dKU fields.
pub fn write_archive<W: std::io::Write>(wd: &WaveDescriptor, model_name: &str, w: &mut W) -> Result<()> {
    let header = serde_json::json!({
        "format": "patternspectra-wave",
        "version": 1,
        "model": model_name,
        "k": wd.wp.k,
        "c": wd.wp.c,
        "omega": wd.wp.omega,
        "residual_norm": wd.residual_norm,
        "n_modes": wd.u.grid.n_modes,
        "ncomp": wd.u.ncomp,
        "has_dku": wd.dku.is_some(),
        "dkc": wd.dkc,
        "dkomega": wd.dkomega,
        "d2komega": wd.d2komega,
    });
    writeln!(w, "{header}")?;
    wd.u.write_snapshot(w)?;
    if let Some(dku) = &wd.dku {
        for v in dku {
            let f = PeriodicField {
                grid: wd.u.grid,
                ncomp: wd.u.ncomp,
                coeffs: crate::bloch::unravel_spec(v, wd.u.ncomp, wd.u.grid.n_modes),
                real_valued: true,
            };
            f.write_snapshot(w)?;
        }
    }
    Ok(())
}

pub struct WaveArchive {
    pub model: String,
    pub wd: WaveDescriptor,
}

pub fn read_archive<R: std::io::BufRead>(r: &mut R) -> Result<WaveArchive> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let hdr: serde_json::Value =
        serde_json::from_str(&line).map_err(|e| Error::InputError(format!("archive header: {e}")))?;
    if hdr["format"] != "patternspectra-wave" || hdr["version"] != 1 {
        return Err(Error::InputError("unrecognized wave archive header".into()));
    }
    let getm2 = |v: &serde_json::Value| -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        for p in 0..2 {
            for q in 0..2 {
                m[p][q] = v[p][q].as_f64().unwrap_or(0.0);
            }
        }
        m
    };
    let getv2 = |v: &serde_json::Value| -> [f64; 2] {
        [v[0].as_f64().unwrap_or(0.0), v[1].as_f64().unwrap_or(0.0)]
    };
    let k = getm2(&hdr["k"]);
    let c = getv2(&hdr["c"]);
    let u = PeriodicField::read_snapshot(r)?;
    let grid = u.grid;
    let anchors = seed_anchors(&u.to_phys(), grid)?;
    let anchor_ref = u.to_phys();
    let mut wd = WaveDescriptor {
        wp: WaveParams::new(k, c)?,
        u,
        residual_norm: hdr["residual_norm"].as_f64().unwrap_or(f64::NAN),
        anchors,
        anchor_ref,
        dku: None,
        dkc: None,
        dkomega: None,
        d2komega: None,
    };
    if hdr["has_dku"].as_bool().unwrap_or(false) {
        let mut dku = Vec::with_capacity(4);
        for _ in 0..4 {
            let f = PeriodicField::read_snapshot(r)?;
            dku.push(ravel_spec(&f.coeffs));
        }
        wd.dku = Some([dku[0].clone(), dku[1].clone(), dku[2].clone(), dku[3].clone()]);
        if hdr["dkc"].is_array() {
            let mut dkc = [[0.0; 2]; 4];
            let mut dkom = [[0.0; 2]; 4];
            for i in 0..4 {
                dkc[i] = getv2(&hdr["dkc"][i]);
                dkom[i] = getv2(&hdr["dkomega"][i]);
            }
            wd.dkc = Some(dkc);
            wd.dkomega = Some(dkom);
        }
        if hdr["d2komega"].is_array() {
            let mut d2 = [[[0.0; 2]; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    d2[i][j] = getv2(&hdr["d2komega"][i][j]);
                }
            }
            wd.d2komega = Some(d2);
        }
    }
    Ok(WaveArchive {
        model: hdr["model"].as_str().unwrap_or("").to_string(),
        wd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Brusselator, LambdaOmega, LinearTest};
    use ndarray::arr2;

    fn lamom() -> LambdaOmega {
        LambdaOmega {
            m: 1.0,
            om: 0.5,
            gam: 0.2,
            dl: -0.1,
            g: 1.0,
            h: 0.35,
            a: 0.1,
        }
    }

    #[test]
    fn newton_recovers_closed_form_wave() {
        let lo = lamom();
        let k = [[0.05, 0.01], [0.0, 0.055]];
        let (r, _, c_exact) = lo.exact_wave(k).unwrap();
        let n = 12;
        // rough seed: wrong amplitude, zero speed guess
        let seed = LambdaOmega::wave_field([r[0] * 1.3, r[1] * 1.3], n, [0.0, 0.0]);
        let wd = solve_profile(&lo, k, &seed, [0.0, 0.0], 1e-12).unwrap();
        assert!((wd.wp.c[0] - c_exact[0]).abs() < 1e-9, "c0 {} vs {}", wd.wp.c[0], c_exact[0]);
        assert!((wd.wp.c[1] - c_exact[1]).abs() < 1e-9);
        // amplitudes match up to translation: compare |coefficients|
        let exact = PeriodicField::from_phys(
            wd.u.grid,
            &LambdaOmega::wave_field(r, n, [0.0, 0.0]),
        )
        .unwrap();
        let err = wd
            .u
            .coeffs
            .iter()
            .zip(exact.coeffs.iter())
            .map(|(a, b)| (a.norm() - b.norm()).abs())
            .fold(0.0_f64, f64::max);
        assert!(err < 1e-9, "coefficient magnitude err {err}");
    }

    #[test]
    fn hurwitz_linear_system_degenerates() {
        let sys = LinearTest::new(arr2(&[[-1.0, 0.2], [0.0, -0.5]]), None);
        let n = 8;
        let seed = Array3::from_shape_fn((2, n, n), |(c, i, j)| {
            0.3 * ((2.0 * PI * i as f64 / n as f64).cos() + c as f64 * (2.0 * PI * j as f64 / n as f64).sin())
        });
        let err = solve_profile(&sys, [[0.1, 0.0], [0.0, 0.1]], &seed, [0.0, 0.0], 1e-12);
        assert!(
            matches!(err, Err(Error::DegenerateWave(_))),
            "expected DegenerateWave, got {err:?}"
        );
    }

    #[test]
    fn brusselator_square_newton_quadratic_convergence() {
        let bru = Brusselator::new(1.0, 4.5);
        let n = 12;
        let lam = {
            let m = bru.m_matrix();
            let tr = m[[0, 0]] + m[[1, 1]];
            let det = m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]];
            let d = (tr * tr / 4.0 - det).sqrt();
            [tr / 2.0 - d, tr / 2.0 + d]
        };
        let tgt = lam[0] + 0.25 * (lam[1] - lam[0]);
        let kv = tgt.sqrt() / (2.0 * PI);
        let k = [[kv, 0.0], [0.0, kv]];
        let seed = turing_square_seed(&bru.const_state(), &bru.m_matrix(), 0.3, n).unwrap();
        let wd = solve_profile(&bru, k, &seed, [0.0, 0.0], 1e-11).unwrap();
        assert!(wd.residual_norm < 1e-11);
        // no advection, kinetics symmetric under reflection: standing wave
        assert!(wd.wp.c[0].abs() < 1e-8 && wd.wp.c[1].abs() < 1e-8, "c = {:?}", wd.wp.c);
        // genuinely 2D
        assert!(independence_measure(&wd.u) > 0.1);
    }

    #[test]
    fn continuation_round_trip() {
        let lo = lamom();
        let k = [[0.05, 0.01], [0.0, 0.055]];
        let (r, _, c) = lo.exact_wave(k).unwrap();
        let n = 12;
        let seed = LambdaOmega::wave_field(r, n, [0.0, 0.0]);
        let wd = solve_profile(&lo, k, &seed, c, 1e-12).unwrap();
        let k2 = [[0.055, 0.01], [0.0, 0.0605]];
        let fwd = continue_in_k(&lo, &wd, k2, 4, 1e-12).unwrap();
        // Omega = -K^T c along the path by construction
        let om = fwd.wp.omega;
        let ktc = fwd.wp.ktc();
        assert!((om[0] + ktc[0]).abs() < 1e-14 && (om[1] + ktc[1]).abs() < 1e-14);
        let back = continue_in_k(&lo, &fwd, k, 4, 1e-12).unwrap();
        let err = back
            .u
            .coeffs
            .iter()
            .zip(wd.u.coeffs.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        assert!(err < 1e-8, "round-trip profile err {err}");
        assert!((back.wp.c[0] - wd.wp.c[0]).abs() < 1e-8);
    }

    #[test]
    fn wave_derivatives_match_closed_form_family() {
        let lo = LambdaOmega {
            m: 1.0,
            om: 0.06676325599919307,
            gam: 0.2,
            dl: -0.1,
            g: 1.0,
            h: 0.35,
            a: 0.0,
        };
        let k = [[0.05, 0.01], [0.0, (0.05f64 * 0.05 - 0.01 * 0.01).sqrt()]];
        let (r, omega, c) = lo.exact_wave(k).unwrap();
        // slow-transport wave: Omega = 0, c = 0
        assert!(omega[0].abs() < 1e-12 && omega[1].abs() < 1e-12, "omega {omega:?}");
        let n = 12;
        let seed = LambdaOmega::wave_field(r, n, [0.0, 0.0]);
        let wd = solve_profile(&lo, k, &seed, c, 1e-12).unwrap();
        let wd = wave_derivatives(&lo, &wd, 1e-4 * 0.07).unwrap();
        let dkc = wd.dkc.unwrap();
        // frozen closed-form family oracles for dc/dK_{p,m}
        let oracle = [
            [-3.36535281, 3.17166169],
            [0.48690211, -0.78633824],
            [0.0, 0.0],
            [2.38532344, -3.85225492],
        ];
        for i in 0..4 {
            for rix in 0..2 {
                assert!(
                    (dkc[i][rix] - oracle[i][rix]).abs() < 2e-5,
                    "dkc[{i}][{rix}] = {} vs {}",
                    dkc[i][rix],
                    oracle[i][rix]
                );
            }
        }
        // product-rule identity: dOmega = -(dK)^T c - K^T dKc; here c = 0 so
        // dOmega/dK_{p,m} = -K^T dc/dK_{p,m} (entry shift absent)
        let dkom = wd.dkomega.unwrap();
        for p in 0..2 {
            for m in 0..2 {
                let idx = p * 2 + m;
                for rix in 0..2 {
                    let pred = -(k[0][rix] * dkc[idx][0] + k[1][rix] * dkc[idx][1])
                        - if rix == m { wd.wp.c[p] } else { 0.0 };
                    assert!(
                        (dkom[idx][rix] - pred).abs() < 1e-8,
                        "dOmega identity: {} vs {}",
                        dkom[idx][rix],
                        pred
                    );
                }
            }
        }
    }

    #[test]
    fn second_omega_derivatives_match_closed_form() {
        let lo = LambdaOmega {
            m: 1.0,
            om: 0.06676325599919307,
            gam: 0.2,
            dl: -0.1,
            g: 1.0,
            h: 0.35,
            a: 0.0,
        };
        let k = [[0.05, 0.01], [0.0, (0.05f64 * 0.05 - 0.01 * 0.01).sqrt()]];
        let (r, _, c) = lo.exact_wave(k).unwrap();
        let n = 12;
        let seed = LambdaOmega::wave_field(r, n, [0.0, 0.0]);
        let wd = solve_profile(&lo, k, &seed, c, 1e-12).unwrap();
        // larger step for the second differences: the Omega signal is ~h^2
        let wd = wave_derivatives(&lo, &wd, 2e-3).unwrap();
        let d2 = wd.d2komega.unwrap();
        // frozen closed-form mixed second derivatives of Omega
        let checks: [((usize, usize), [f64; 2]); 3] = [
            ((0, 0), [3.36535281, -2.43451055]),
            ((3, 3), [-2.43451055, 3.36535281]),
            ((1, 1), [-2.43451055, 3.36535281]),
        ];
        for ((a, b), v) in checks {
            for rix in 0..2 {
                assert!(
                    (d2[a][b][rix] - v[rix]).abs() < 1e-3,
                    "d2Omega[{a}][{b}][{rix}] = {} vs {}",
                    d2[a][b][rix],
                    v[rix]
                );
            }
        }
        // symmetry in the two K-directions
        for a in 0..4 {
            for b in 0..4 {
                for rix in 0..2 {
                    assert!((d2[a][b][rix] - d2[b][a][rix]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn archive_round_trip() {
        let lo = lamom();
        let k = [[0.05, 0.01], [0.0, 0.055]];
        let (r, _, c) = lo.exact_wave(k).unwrap();
        let n = 8;
        let seed = LambdaOmega::wave_field(r, n, [0.0, 0.0]);
        let wd = solve_profile(&lo, k, &seed, c, 1e-12).unwrap();
        let mut buf = Vec::new();
        write_archive(&wd, lo.name(), &mut buf).unwrap();
        let arc = read_archive(&mut std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(arc.model, "lambda_omega");
        assert_eq!(arc.wd.wp.k, wd.wp.k);
        let err = arc
            .wd
            .u
            .coeffs
            .iter()
            .zip(wd.u.coeffs.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        assert_eq!(err, 0.0);
    }
}
