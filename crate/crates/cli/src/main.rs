//! Batch pipeline driver: parses a TOML run configuration, dispatches one
//! command per process, and persists machine-readable artifacts (wave
//! archives, JSON reports, CSV plot data, run manifests).
//!
//! Exit codes: 0 pass, 1 numerical-check failure, 2 input error, 3 internal.

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array3;
use patternspectra_core::bloch::{expand_symbol, spectrum_slice};
use patternspectra_core::config::{ModelConfig, RunConfig};
use patternspectra_core::model::{LambdaOmega, RDSystem};
use patternspectra_core::modulation::{
    build_lambda0, classify_hyperbolic, diffusivity_check, lambda_coeffs, Classification,
};
use patternspectra_core::multiplier::{
    benchmark_b0_difference, benchmark_counterexample, benchmark_damped_wave, compare_semigroups,
    decay_series, dyadic_times, DecayFit, MultiplierSemigroup,
};
use patternspectra_core::profile::{
    continue_in_k, read_archive, solve_profile, turing_square_seed, wave_derivatives,
    write_archive, WaveArchive,
};
use patternspectra_core::report::{config_hash, diagnostics_rows, write_csv, write_json, Manifest};
use patternspectra_core::sim::{run_comparison, ComparisonConfig, WhithamSystem};
use patternspectra_core::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "patternspectra", version, about = "2D periodic wave stability pipeline")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// rayon worker count (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// benchmark suite size
    #[arg(long, global = true, value_enum, default_value_t = Suite::Quick)]
    suite: Suite,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Suite {
    Paper,
    Quick,
    Full,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Paper => "paper",
            Suite::Quick => "quick",
            Suite::Full => "full",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the wave profile and its K-derivative family; write the archive
    Profile,
    /// Bloch spectrum sweep over [-pi, pi]^2 from an archived wave
    Spectrum,
    /// Hyperbolicity classification and diffusivity check of the averaged system
    Classify,
    /// Whitham first/second-order tables and averaged-operator construction
    Whitham,
    /// Matrix Fourier-multiplier decay benchmarks (pass/fail table)
    Decay,
    /// Side-by-side reaction-diffusion / modulation comparison run
    Simulate,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InputError(_) | Error::Io(_) | Error::MissingArtifact(_) | Error::ShapeMismatch(_) => 2,
        Error::Internal(_) | Error::EigSolver(_) => 3,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not set thread count: {e}");
            std::process::exit(3);
        }
    }
    let code = match run(&cli) {
        Ok(pass) => {
            if pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

struct Ctx {
    cfg: RunConfig,
    cfg_text: String,
    out: PathBuf,
    threads: usize,
    suite: Suite,
}

impl Ctx {
    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(
            command,
            &self.cfg_text,
            self.cfg.seed,
            self.threads,
            self.suite.name(),
        )
    }

    fn archive_path(&self) -> PathBuf {
        self.out.join("wave.arc")
    }

    /// Archive lookup: output dir first, then the PATTERNSPECTRA_CACHE dir
    /// keyed by config hash.
    fn find_archive(&self) -> Result<WaveArchive> {
        let local = self.archive_path();
        let path = if local.exists() {
            local
        } else if let Some(c) = cache_path(&self.cfg_text) {
            if c.exists() {
                c
            } else {
                return Err(Error::MissingArtifact(format!(
                    "no wave archive at {} (run `profile` first)",
                    local.display()
                )));
            }
        } else {
            return Err(Error::MissingArtifact(format!(
                "no wave archive at {} (run `profile` first)",
                local.display()
            )));
        };
        let f = std::fs::File::open(path)?;
        read_archive(&mut std::io::BufReader::new(f))
    }
}

fn cache_path(cfg_text: &str) -> Option<PathBuf> {
    std::env::var_os("PATTERNSPECTRA_CACHE")
        .map(|d| PathBuf::from(d).join(format!("{}.arc", config_hash(cfg_text))))
}

fn load_ctx(cli: &Cli) -> Result<Ctx> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InputError("--config PATH is required".to_string()))?;
    let cfg_text = std::fs::read_to_string(path)?;
    let cfg = RunConfig::from_toml_str(&cfg_text)?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    std::fs::create_dir_all(&out)?;
    Ok(Ctx {
        cfg,
        cfg_text,
        out,
        threads: cli.threads.unwrap_or(0),
        suite: cli.suite,
    })
}

fn run(cli: &Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Decay => {
            // decay benchmarks are self-contained; config is optional
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&out)?;
            cmd_decay(&out, cli.suite, cli.threads.unwrap_or(0))
        }
        Cmd::Profile => cmd_profile(&load_ctx(cli)?),
        Cmd::Spectrum => cmd_spectrum(&load_ctx(cli)?),
        Cmd::Classify => cmd_classify(&load_ctx(cli)?),
        Cmd::Whitham => cmd_whitham(&load_ctx(cli)?),
        Cmd::Simulate => cmd_simulate(&load_ctx(cli)?),
    }
}

/// Initial profile guess per model family.
fn make_seed(cfg: &RunConfig, k: [[f64; 2]; 2]) -> Result<(Array3<f64>, [f64; 2])> {
    let n = cfg.grid_n;
    let eps = cfg.seed_eps.unwrap_or(0.3);
    match &cfg.model {
        ModelConfig::Brusselator { alpha, b } => {
            let sys = patternspectra_core::model::Brusselator::new(*alpha, *b);
            Ok((
                turing_square_seed(&sys.const_state(), &sys.m_matrix(), eps, n)?,
                cfg.c,
            ))
        }
        ModelConfig::AdvectiveBrusselator { alpha, b, adv } => {
            let sys = patternspectra_core::model::AdvectiveBrusselator::new(*alpha, *b, *adv);
            Ok((
                turing_square_seed(&sys.const_state(), &sys.m_matrix(), eps, n)?,
                cfg.c,
            ))
        }
        ModelConfig::LambdaOmega {
            m,
            om,
            gam,
            dl,
            g,
            h,
            a,
        } => {
            let sys = LambdaOmega {
                m: *m,
                om: *om,
                gam: *gam,
                dl: *dl,
                g: *g,
                h: *h,
                a: *a,
            };
            let (r, _, c) = sys.exact_wave(k)?;
            Ok((LambdaOmega::wave_field(r, n, [0.0, 0.0]), c))
        }
    }
}

fn cmd_profile(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    let sys = cfg.model.build();
    let k_start = cfg.k_seed.unwrap_or(cfg.k);
    let (seed, c_seed) = make_seed(cfg, k_start)?;
    let mut wd = solve_profile(sys.as_ref(), k_start, &seed, c_seed, cfg.tolerances.newton_tol)?;
    if cfg.k_seed.is_some() {
        wd = continue_in_k(
            sys.as_ref(),
            &wd,
            cfg.k,
            cfg.continuation_steps.unwrap_or(8),
            cfg.tolerances.newton_tol,
        )?;
    }
    wd = wave_derivatives(sys.as_ref(), &wd, cfg.tolerances.h)?;
    let mut f = std::fs::File::create(ctx.archive_path())?;
    write_archive(&wd, cfg.model.name(), &mut f)?;
    if let Some(c) = cache_path(&ctx.cfg_text) {
        if let Some(dir) = c.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::fs::File::create(c)?;
        write_archive(&wd, cfg.model.name(), &mut f)?;
    }
    write_json(&ctx.out.join("manifest.json"), &ctx.manifest("profile"))?;
    write_json(
        &ctx.out.join("profile.json"),
        &serde_json::json!({
            "model": cfg.model.name(),
            "k": wd.wp.k,
            "c": wd.wp.c,
            "omega": wd.wp.omega,
            "residual_norm": wd.residual_norm,
            "dkc": wd.dkc,
            "dkomega": wd.dkomega,
        }),
    )?;
    println!(
        "profile: residual {:.3e}, c = ({:.6}, {:.6}), archive {}",
        wd.residual_norm,
        wd.wp.c[0],
        wd.wp.c[1],
        ctx.archive_path().display()
    );
    Ok(true)
}

fn cmd_spectrum(ctx: &Ctx) -> Result<bool> {
    let ar = ctx.find_archive()?;
    let sys = ctx.cfg.model.build();
    let u_phys = ar.wd.u.to_phys();
    let m = match ctx.suite {
        Suite::Quick => 9,
        _ => 25,
    };
    let mut xis = Vec::new();
    for i in 0..m {
        for j in 0..m {
            xis.push([
                -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / (m - 1) as f64,
                -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / (m - 1) as f64,
            ]);
        }
    }
    let slice = spectrum_slice(sys.as_ref(), &u_phys, &ar.wd.wp, &xis)?;
    let rows: Vec<Vec<f64>> = slice
        .points
        .iter()
        .map(|p| vec![p.xi[0], p.xi[1], p.eigvals[0].re, p.eigvals[0].im])
        .collect();
    write_csv(
        &ctx.out.join("spectrum.csv"),
        &["xi1", "xi2", "re_top", "im_top"],
        &rows,
    )?;
    write_json(&ctx.out.join("manifest.json"), &ctx.manifest("spectrum"))?;
    write_json(
        &ctx.out.join("spectrum.json"),
        &serde_json::json!({
            "max_re": slice.max_re,
            "max_re_over_xi2": slice.max_re_over_xi2,
            "n_points": slice.points.len(),
        }),
    )?;
    println!(
        "spectrum: max Re lambda = {:.6e}, sup Re/|xi|^2 = {:.6e}",
        slice.max_re, slice.max_re_over_xi2
    );
    Ok(slice.max_re_over_xi2 < 0.0)
}

fn case_name(c: &Classification) -> &'static str {
    match c {
        Classification::CaseA => "CaseA",
        Classification::CaseB { .. } => "CaseB",
        Classification::CaseB0 => "CaseB0",
        Classification::NotHyperbolic { .. } => "NotHyperbolic",
    }
}

fn expansion_of(ar: &WaveArchive, sys: &dyn RDSystem) -> Result<patternspectra_core::bloch::LowFreqExpansion> {
    let dku = ar
        .wd
        .dku
        .as_ref()
        .ok_or_else(|| Error::MissingArtifact("archive lacks dKU fields".into()))?;
    let dkc = ar
        .wd
        .dkc
        .as_ref()
        .ok_or_else(|| Error::MissingArtifact("archive lacks dKc".into()))?;
    expand_symbol(sys, &ar.wd.u, &ar.wd.wp, dku, dkc, 1e-3, 5e-2)
}

fn cmd_classify(ctx: &Ctx) -> Result<bool> {
    let ar = ctx.find_archive()?;
    let sys = ctx.cfg.model.build();
    let exp = expansion_of(&ar, sys.as_ref())?;
    let class = classify_hyperbolic(&exp.a1, &exp.a2);
    let diff = diffusivity_check(&exp, 4096);
    write_json(&ctx.out.join("manifest.json"), &ctx.manifest("classify"))?;
    write_json(
        &ctx.out.join("classify.json"),
        &serde_json::json!({
            "case": case_name(&class),
            "a1": exp.a1, "a2": exp.a2,
            "b11": exp.b11, "b12": exp.b12, "b22": exp.b22,
            "theta": diff.theta,
            "diffusivity_pass": diff.pass,
        }),
    )?;
    println!("{}", case_name(&class));
    println!(
        "diffusivity: theta = {:.6e} ({})",
        diff.theta,
        if diff.pass { "PASS" } else { "FAIL" }
    );
    Ok(diff.pass && !matches!(class, Classification::NotHyperbolic { .. }))
}

fn cmd_whitham(ctx: &Ctx) -> Result<bool> {
    let ar = ctx.find_archive()?;
    let sys = ctx.cfg.model.build();
    let exp = expansion_of(&ar, sys.as_ref())?;
    let class = classify_hyperbolic(&exp.a1, &exp.a2);
    let tab = lambda_coeffs(sys.as_ref(), &ar.wd)?;
    let l0 = build_lambda0(&exp, &class, 256)?;
    let l0_kind = match &l0 {
        patternspectra_core::modulation::Lambda0::Differential { .. } => "differential",
        patternspectra_core::modulation::Lambda0::Angular(_) => "angular",
    };
    // flatten the Lambda coefficient table for the report
    let mut lam = Vec::new();
    for j in 0..2 {
        for l in 0..2 {
            for p in 0..2 {
                for m in 0..2 {
                    let z = tab.0[j][l][p][m];
                    lam.push(serde_json::json!({
                        "j": j, "l": l, "p": p, "m": m, "re": z.re, "im": z.im
                    }));
                }
            }
        }
    }
    write_json(&ctx.out.join("manifest.json"), &ctx.manifest("whitham"))?;
    write_json(
        &ctx.out.join("whitham.json"),
        &serde_json::json!({
            "case": case_name(&class),
            "averaged_operator": l0_kind,
            "a1": exp.a1, "a2": exp.a2,
            "b11": exp.b11, "b12": exp.b12, "b22": exp.b22,
            "lambda_table": lam,
            "dkc": ar.wd.dkc,
            "d2komega": ar.wd.d2komega,
        }),
    )?;
    println!(
        "whitham: case {}, averaged operator {} form",
        case_name(&class),
        l0_kind
    );
    Ok(true)
}

struct Bench {
    label: &'static str,
    expected: f64,
    tol: f64,
    fit: Result<DecayFit>,
}

fn decay_benchmarks(suite: Suite) -> Vec<Bench> {
    // paper-suite parameters: dyadic times to 512, fit window [32, 512],
    // 2048^2 frequency grid; the quick suite shortens everything
    let (t_max, window, n, tol_scale) = match suite {
        Suite::Quick => (64.0, (4.0, 64.0), 512, 2.0),
        _ => (512.0, (32.0, 512.0), 2048, 1.0),
    };
    let times = dyadic_times(t_max);
    let xi0 = 1.0;
    let mut out = Vec::new();
    out.push(Bench {
        label: "heat L1->Linf",
        expected: 1.0,
        tol: 0.05 * tol_scale,
        fit: decay_series(
            &MultiplierSemigroup::heat(Some(xi0)),
            1.0,
            f64::INFINITY,
            &times,
            n,
            window,
        ),
    });
    let disp_full = MultiplierSemigroup::dispersive(1.0, true, Some(xi0));
    let disp_avg = MultiplierSemigroup::dispersive(1.0, false, Some(xi0));
    out.push(Bench {
        label: "dispersive full L1->Linf",
        expected: 1.25,
        tol: 0.1 * tol_scale,
        fit: decay_series(&disp_full, 1.0, f64::INFINITY, &times, n, window),
    });
    out.push(Bench {
        label: "dispersive difference L1->Linf",
        expected: 1.75,
        tol: 0.15 * tol_scale,
        fit: compare_semigroups(&disp_full, &disp_avg, 1.0, f64::INFINITY, &times, n, window),
    });
    out.push(Bench {
        label: "scalar difference L2->L2",
        expected: 0.5,
        tol: 0.05 * tol_scale,
        fit: benchmark_b0_difference(&times, xi0, window),
    });
    match benchmark_damped_wave(&[2.0, 4.0, f64::INFINITY], &times, window) {
        Ok(fits) => {
            for (p, fit) in fits {
                let expected = 0.75 - 1.5 / p;
                let label: &'static str = if p == 2.0 {
                    "damped wave L1->L2"
                } else if p == 4.0 {
                    "damped wave L1->L4"
                } else {
                    "damped wave L1->Linf"
                };
                out.push(Bench {
                    label,
                    expected,
                    tol: 0.1 * tol_scale,
                    fit: Ok(fit),
                });
            }
        }
        Err(e) => out.push(Bench {
            label: "damped wave L1->Lp",
            expected: 0.0,
            tol: 0.0,
            fit: Err(e),
        }),
    }
    out
}

fn cmd_decay(out_dir: &Path, suite: Suite, threads: usize) -> Result<bool> {
    let benches = decay_benchmarks(suite);
    let mut all_pass = true;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    println!("decay benchmark suite [{}]", suite.name());
    for b in &benches {
        match &b.fit {
            Ok(fit) => {
                let pass = (fit.exponent - b.expected).abs() <= b.tol;
                all_pass &= pass;
                println!(
                    "{} {}: exponent {:.4} (expected {:.2} +- {:.2}{})",
                    if pass { "PASS" } else { "FAIL" },
                    b.label,
                    fit.exponent,
                    b.expected,
                    b.tol,
                    if fit.log_flag { ", log factor" } else { "" }
                );
                for (t, v) in fit.times.iter().zip(&fit.values) {
                    rows.push(vec![*t, *v]);
                }
                reports.push(serde_json::json!({
                    "label": b.label,
                    "expected": b.expected,
                    "tolerance": b.tol,
                    "exponent": fit.exponent,
                    "log_flag": fit.log_flag,
                    "pass": pass,
                }));
            }
            Err(e) => {
                all_pass = false;
                println!("FAIL {}: {e}", b.label);
                reports.push(serde_json::json!({
                    "label": b.label,
                    "error": format!("{e}"),
                    "pass": false,
                }));
            }
        }
    }
    // degenerate-perturbation counterexample: coefficients of the two
    // eigenvalue branches and the vanishing diffusive ratio
    let cx = benchmark_counterexample();
    let ratio_end = cx.sup_ratio.last().map(|x| x.1.abs()).unwrap_or(f64::INFINITY);
    let cx_pass = (cx.im_cubic - 1.0).abs() <= 0.02
        && (cx.re_quartic + 1.0).abs() <= 0.02
        && (cx.lam2_quad + 1.0).abs() <= 0.02
        && ratio_end < 1e-6;
    all_pass &= cx_pass;
    println!(
        "{} counterexample branches: i r^3 coef {:.4}, -r^4 coef {:.4}, -r^2 coef {:.4}, sup ratio {:.2e}",
        if cx_pass { "PASS" } else { "FAIL" },
        cx.im_cubic,
        -cx.re_quartic,
        -cx.lam2_quad,
        ratio_end
    );
    reports.push(serde_json::json!({
        "label": "counterexample",
        "im_cubic": cx.im_cubic,
        "re_quartic": cx.re_quartic,
        "lam2_quad": cx.lam2_quad,
        "sup_ratio": cx.sup_ratio,
        "pass": cx_pass,
    }));
    write_csv(&out_dir.join("decay_series.csv"), &["t", "value"], &rows)?;
    write_json(&out_dir.join("decay.json"), &serde_json::json!(reports))?;
    write_json(
        &out_dir.join("manifest.json"),
        &Manifest::new("decay", "", 0, threads, suite.name()),
    )?;
    Ok(all_pass)
}

fn cmd_simulate(ctx: &Ctx) -> Result<bool> {
    let ar = ctx.find_archive()?;
    let sys = ctx.cfg.model.build();
    let exp = expansion_of(&ar, sys.as_ref())?;
    let class = classify_hyperbolic(&exp.a1, &exp.a2);
    if matches!(class, Classification::NotHyperbolic { .. }) {
        return Err(Error::ValidationFailure(
            "averaged system is not hyperbolic; no modulation run".into(),
        ));
    }
    let diff = diffusivity_check(&exp, 4096);
    if !diff.pass {
        return Err(Error::ValidationFailure(format!(
            "diffusivity check failed (theta = {:.3e})",
            diff.theta
        )));
    }
    let l0 = build_lambda0(&exp, &class, 256)?;
    let ws = WhithamSystem::from_wave(&ar.wd, exp, l0)?;
    let sc = &ctx.cfg.sim;
    // snapshots at dyadic times within the run
    let mut snaps = Vec::new();
    let mut t = 1.0;
    while t <= sc.t_end {
        snaps.push(t);
        t *= 2.0;
    }
    let cfg = ComparisonConfig {
        m: sc.cells,
        npc: sc.points_per_cell,
        source_width: sc.source_width,
        source_amps: sc.source_amps,
        t_end: sc.t_end,
        dt_whitham: sc.dt_whitham,
        dt_rd: sc.dt_rd,
        snap_times: snaps,
        run_rd: sc.run_rd,
    };
    let outp = run_comparison(sys.as_ref(), &ar.wd, ws, &cfg)?;
    let mut rows = diagnostics_rows(2.0, &outp.kdev_series);
    for (t, norms) in &outp.err_series {
        for (p, v) in [(2.0, norms[0]), (4.0, norms[1]), (f64::INFINITY, norms[2])] {
            rows.push(vec![*t, p, v]);
        }
    }
    write_csv(&ctx.out.join("diagnostics.csv"), &["t", "p", "norm"], &rows)?;
    // decay fit of the K-deviation L2 norm over the second half of the run
    let ts: Vec<f64> = outp.kdev_series.iter().map(|x| x.0).collect();
    let vs: Vec<f64> = outp.kdev_series.iter().map(|x| x.1).collect();
    let fit = patternspectra_core::multiplier::fit_decay(
        &ts,
        &vs,
        (sc.t_end / 16.0, sc.t_end),
    );
    let (exponent, fit_json) = match &fit {
        Ok(f) => (
            Some(f.exponent),
            serde_json::json!({"exponent": f.exponent, "r2": f.r2, "log_flag": f.log_flag}),
        ),
        Err(e) => (None, serde_json::json!({"error": format!("{e}")})),
    };
    write_json(&ctx.out.join("manifest.json"), &ctx.manifest("simulate"))?;
    write_json(
        &ctx.out.join("simulate.json"),
        &serde_json::json!({
            "kdev_series": outp.kdev_series,
            "err_series_count": outp.err_series.len(),
            "kdev_fit": fit_json,
        }),
    )?;
    match exponent {
        Some(x) => println!("simulate: K-deviation L2 decay exponent {x:.4}"),
        None => println!("simulate: K-deviation decay fit unavailable"),
    }
    Ok(true)
}
