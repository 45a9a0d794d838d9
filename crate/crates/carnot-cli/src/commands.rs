//! The five subcommands.

use std::sync::Arc;
use std::time::Instant;

use carnot::besov::{
    besov_norm, cwt_norm, heat_char_norm, laplacian_shift_check, ratio_stats,
    sublaplacian_commensurability, RatioStats,
};
use carnot::frames::{
    discrete_equiv_report, frame_report, make_lattice, tightness_vs_density, Frame,
};
use carnot::io::{read_gfn_on, write_coefficients, write_gfn, KernelCache};
use carnot::spectral::SubLaplacian;
use carnot::wavelets::{
    build_lp_wavelet, calderon_reconstruct, calderon_reconstruct_oracle, check_orthogonal_scales,
    make_psi_hat, partition_of_unity_residual, BuildOptions, LPWavelet,
};
use carnot::{GridFunction, MultiplierProfile};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{num, Output};
use crate::CliError;

/// Largest grid on which the Euclidean Fourier-oracle cross-check runs.
const ORACLE_MAX_NODES: usize = 4097;

/// Residual growth tolerated by the monotonicity checks (rounding level).
const MONOTONE_SLACK: f64 = 1e-12;

fn build_wavelet(
    cfg: &ExperimentConfig,
    lm: Arc<SubLaplacian>,
    psi_hat: MultiplierProfile,
    check_moments: bool,
) -> Result<LPWavelet, CliError> {
    let options = BuildOptions {
        backend: cfg.backend,
        moment_degrees: cfg.tolerances.moment_degrees,
        moment_tol: cfg.tolerances.moments,
        check_moments,
        cache: KernelCache::from_env()?,
    };
    Ok(build_lp_wavelet(lm, psi_hat, cfg.j_range, &options)?)
}

fn inputs(
    cfg: &ExperimentConfig,
    lm: &SubLaplacian,
    count: usize,
) -> Result<Vec<GridFunction>, CliError> {
    if cfg.inputs.is_empty() {
        Ok(cfg.test_family(count).generate(lm, cfg.backend)?)
    } else {
        cfg.inputs
            .iter()
            .map(|p| read_gfn_on(p, lm.grid()).map_err(CliError::from))
            .collect()
    }
}

#[derive(Serialize)]
struct GroupInfo {
    label: String,
    n: usize,
    weights: Vec<u32>,
    step: u32,
    homogeneous_dim: u32,
    brackets: Vec<[f64; 4]>,
    quasi_triangle_samples: usize,
    quasi_triangle_constant: f64,
}

pub fn group_info(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let g = cfg.group_spec()?;
    let t = Instant::now();
    let info = GroupInfo {
        label: g.label(),
        n: g.dim(),
        weights: g.weights().to_vec(),
        step: g.step(),
        homogeneous_dim: g.homogeneous_dim(),
        brackets: g
            .brackets()
            .iter()
            .map(|b| [(b.i + 1) as f64, (b.j + 1) as f64, (b.k + 1) as f64, b.c])
            .collect(),
        quasi_triangle_samples: cfg.quasi_triangle_samples,
        quasi_triangle_constant: g.quasi_triangle_constant(cfg.quasi_triangle_samples, cfg.seed),
    };
    out.step("group", t.elapsed());
    out.say(format!(
        "group {}: n = {}, weights {:?}, step {}, Q = {}",
        info.label, info.n, info.weights, info.step, info.homogeneous_dim
    ));
    for b in &info.brackets {
        out.say(format!("  [Y{}, Y{}] = {} Y{}", b[0], b[1], b[3], b[2]));
    }
    out.say(format!(
        "  quasi-triangle constant ({} pairs): {:.4}",
        info.quasi_triangle_samples, info.quasi_triangle_constant
    ));
    out.json("group_info.json", &info)?;
    Ok(())
}

#[derive(Clone, Serialize)]
struct Check {
    name: String,
    value: f64,
    tolerance: f64,
    passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn non_increasing(name: impl Into<String>, seq: &[f64]) -> Self {
        let worst = seq
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        Check {
            name: name.into(),
            value: worst,
            tolerance: MONOTONE_SLACK,
            passed: seq.len() < 2 || worst <= MONOTONE_SLACK,
        }
    }
}

#[derive(Serialize)]
struct KernelRef {
    j: Option<i32>,
    role: &'static str,
    file: String,
    backend: String,
}

#[derive(Serialize)]
struct WaveletManifest<'a> {
    bump: &'a carnot::BumpSpec,
    j_range: (i32, i32),
    lambda_max: f64,
    moments_skipped: bool,
    moments_order: u32,
    moments_scale: i32,
    partition_of_unity_residual: f64,
    kernels: Vec<KernelRef>,
    checks: &'a [Check],
}

pub fn wavelet(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let tol = &cfg.tolerances;
    let t = Instant::now();
    let lm = cfg.laplacian()?;
    out.step("assemble", t.elapsed());
    let psi_hat = cfg.psi_hat()?;
    let t = Instant::now();
    let w = build_wavelet(cfg, lm.clone(), psi_hat.clone(), !cfg.skip_moments)?;
    out.step("build", t.elapsed());

    let mut checks = Vec::new();
    let pou = partition_of_unity_residual(&psi_hat, 8, 4f64.powi(-6), 4f64.powi(6), 20_001);
    checks.push(Check::at_most(
        "partition_of_unity",
        pou,
        tol.partition_of_unity,
    ));
    if !cfg.skip_moments {
        for row in w.moments() {
            checks.push(Check::at_most(
                format!("moments_degree_{}@j={}", row.degree, w.moments_scale()),
                row.max_normalized,
                tol.moments,
            ));
        }
    }
    let (lo, hi) = w.j_range();
    for j in lo..=hi - 2 {
        checks.push(Check::at_most(
            format!("orthogonality_{j}_{}", j + 2),
            check_orthogonal_scales(&w, j, j + 2)?,
            tol.orthogonality,
        ));
    }
    for j in lo..=hi {
        checks.push(Check::at_most(
            format!("reproducing_{j}"),
            w.reproducing_defect(j)?,
            tol.reproducing,
        ));
    }
    let t = Instant::now();
    let gs = inputs(cfg, &lm, cfg.family.count.min(4))?;
    let oracle = lm.grid().group().is_abelian() && lm.grid().len() <= ORACLE_MAX_NODES;
    let mut calderon_rows = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        let mut spectral = Vec::new();
        let mut fourier = Vec::new();
        for big_j in 1..=cfg.calderon_j {
            let r = calderon_reconstruct(&w, g, big_j)?.1;
            spectral.push(r);
            let o = if oracle {
                Some(calderon_reconstruct_oracle(&psi_hat, g, big_j)?.1)
            } else {
                None
            };
            if let Some(o) = o {
                fourier.push(o);
            }
            calderon_rows.push(vec![
                i.to_string(),
                big_j.to_string(),
                num(r),
                o.map(num).unwrap_or_default(),
            ]);
        }
        checks.push(Check::at_most(
            format!("calderon_spectral_J{}[{i}]", cfg.calderon_j),
            *spectral.last().unwrap(),
            tol.calderon,
        ));
        checks.push(Check::non_increasing(
            format!("calderon_spectral_monotone[{i}]"),
            &spectral,
        ));
        if oracle {
            checks.push(Check::at_most(
                format!("calderon_oracle_J{}[{i}]", cfg.calderon_j),
                *fourier.last().unwrap(),
                tol.calderon,
            ));
        }
    }
    out.step("checks", t.elapsed());

    let mut kernels = Vec::new();
    for j in lo..=hi {
        let name = format!("kernels/psi_j{j}.gfn");
        let k = w.kernel(j)?;
        let p = out.path(&name)?;
        write_gfn(&p, &k.kernel)?;
        kernels.push(KernelRef {
            j: Some(j),
            role: "psi",
            file: name,
            backend: k.backend.name().into(),
        });
    }
    let name = "kernels/reproducing.gfn".to_string();
    let p = out.path(&name)?;
    write_gfn(&p, &w.reproducing_kernel().kernel)?;
    kernels.push(KernelRef {
        j: None,
        role: "reproducing",
        file: name,
        backend: w.reproducing_kernel().backend.name().into(),
    });

    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                num(c.value),
                num(c.tolerance),
                c.passed.to_string(),
            ]
        })
        .collect();
    out.csv(
        "checks.csv",
        &["check", "value", "tolerance", "passed"],
        &rows,
    )?;
    out.csv(
        "calderon.csv",
        &["function", "J", "spectral_residual", "oracle_residual"],
        &calderon_rows,
    )?;
    out.json(
        "wavelet.json",
        &WaveletManifest {
            bump: &cfg.bump,
            j_range: w.j_range(),
            lambda_max: lm.lambda_max(),
            moments_skipped: cfg.skip_moments,
            moments_order: w.moments_order(),
            moments_scale: w.moments_scale(),
            partition_of_unity_residual: pou,
            kernels,
            checks: &checks,
        },
    )?;
    for c in &checks {
        out.say(format!(
            "{} {:<36} {:.3e} (tolerance {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        ));
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| {
            format!(
                "{} = {:.3e} exceeds tolerance {:.1e}",
                c.name, c.value, c.tolerance
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Contract(failed.join("; ")))
    }
}

#[derive(Serialize)]
struct BesovSummary {
    p: f64,
    q: f64,
    s: f64,
    window: (i32, i32),
    cwt_over_dyadic: RatioStats,
}

pub fn besov(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let t = Instant::now();
    let lm = cfg.laplacian()?;
    let psi_hat = cfg.psi_hat()?;
    let w = build_wavelet(cfg, lm.clone(), psi_hat.clone(), true)?;
    let us = inputs(cfg, &lm, cfg.family.count)?;
    out.step("setup", t.elapsed());
    let window = cfg.besov.window.unwrap_or(w.j_range());
    let heat = cfg.besov.heat.as_ref();
    let mut header = vec!["function", "p", "q", "s", "dyadic", "cwt"];
    if heat.is_some() {
        header.push("heat");
    }
    header.push("l2");
    let t = Instant::now();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for params in &cfg.besov.params {
        let mut ratios = Vec::new();
        for (i, u) in us.iter().enumerate() {
            let (b, _) = besov_norm(u, &w, params, window)?;
            let c = cwt_norm(
                u,
                &lm,
                &psi_hat,
                w.moments_order(),
                params,
                &cfg.besov.cwt_scales,
                cfg.backend,
            )?;
            if b > 0.0 {
                ratios.push(c / b);
            }
            let mut row = vec![
                i.to_string(),
                num(params.p),
                num(params.q),
                num(params.s),
                num(b),
                num(c),
            ];
            if let Some(h) = heat {
                row.push(num(heat_char_norm(
                    u,
                    &lm,
                    h.k,
                    params,
                    &h.t_grid,
                    cfg.backend,
                )?));
            }
            row.push(num(u.lp_norm(2.0)));
            rows.push(row);
        }
        summary.push(BesovSummary {
            p: params.p,
            q: params.q,
            s: params.s,
            window,
            cwt_over_dyadic: ratio_stats(&ratios),
        });
    }
    out.step("norms", t.elapsed());
    out.csv("besov.csv", &header, &rows)?;
    out.json("besov_summary.json", &summary)?;
    for s in &summary {
        out.say(format!(
            "(p, q, s) = ({}, {}, {}): cwt/dyadic spread {:.3} over {} functions",
            s.p, s.q, s.s, s.cwt_over_dyadic.spread, s.cwt_over_dyadic.n
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct FrameSummary {
    report: carnot::frames::FrameReport,
    density_precheck_passed: bool,
    discrete_equivalence: Option<carnot::frames::DiscreteEquivReport>,
    complement: bool,
    j_range: (i32, i32),
}

pub fn frame(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let fc = &cfg.frame;
    let t = Instant::now();
    let lm = cfg.laplacian()?;
    let w = Arc::new(build_wavelet(cfg, lm.clone(), cfg.psi_hat()?, true)?);
    let jr = fc.j_range.unwrap_or(w.j_range());
    let us = inputs(cfg, &lm, cfg.family.count)?;
    let set = make_lattice(lm.grid().group(), fc.alpha, lm.grid())?;
    let frame = Frame::new(w.clone(), set, jr)?.with_complement(fc.complement);
    out.step("setup", t.elapsed());

    let t = Instant::now();
    let probes = frame.krylov_probes(&us, fc.krylov_steps)?;
    let osc = frame.osc_at_tile();
    let (report, dual) =
        frame_report(&frame, &us[0], &probes, cfg.tolerances.neumann, fc.max_iter)?;
    out.step("inversion", t.elapsed());
    let precheck = osc < 1.0;
    let t = Instant::now();
    let equiv = if precheck {
        Some(discrete_equiv_report(&us, &frame, &fc.params, osc)?)
    } else {
        None
    };
    out.step("equivalence", t.elapsed());

    for (i, u) in us.iter().take(fc.coefficient_files).enumerate() {
        let c = frame.analysis(u)?;
        let (a, b) = write_coefficients(out.dir(), &format!("coefficients_{i}"), &c)?;
        out.record(a);
        out.record(b);
    }
    let (a, b) = write_coefficients(out.dir(), "dual_coefficients_0", &dual)?;
    out.record(a);
    out.record(b);

    let t = Instant::now();
    let rows = tightness_vs_density(&w, &fc.sweep(), &us, jr, &fc.params, fc.complement)?;
    out.step("density_sweep", t.elapsed());
    let density_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.alpha),
                num(r.tile_volume),
                num(r.tile_radius),
                num(r.osc_l1),
                num(r.rho),
                num(r.spread),
            ]
        })
        .collect();
    out.csv(
        "density.csv",
        &[
            "alpha",
            "tile_volume",
            "tile_radius",
            "osc_l1",
            "rho",
            "spread",
        ],
        &density_rows,
    )?;
    let history_rows: Vec<Vec<String>> = report
        .residual_history
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), num(*r)])
        .collect();
    out.csv("neumann.csv", &["iteration", "residual"], &history_rows)?;
    if let Some(e) = &equiv {
        let srows: Vec<Vec<String>> = e
            .sampling
            .iter()
            .map(|(i, j, r)| vec![i.to_string(), j.to_string(), num(*r)])
            .collect();
        out.csv("sampling.csv", &["function", "j", "ratio"], &srows)?;
        let seq: Vec<Vec<String>> = us
            .iter()
            .enumerate()
            .zip(&e.ratios)
            .map(|((i, _), r)| vec![i.to_string(), num(*r)])
            .collect();
        out.csv(
            "discrete_equivalence.csv",
            &["function", "seq_over_besov"],
            &seq,
        )?;
    }
    let summary = FrameSummary {
        density_precheck_passed: precheck,
        discrete_equivalence: equiv,
        complement: fc.complement,
        j_range: jr,
        report,
    };
    out.json("frame_report.json", &summary)?;
    let r = &summary.report;
    out.say(format!(
        "alpha {}: osc_l1 {:.3} (precheck {}), rho {:.4}, {} Neumann steps, reconstruction residual {:.3e}",
        r.alpha,
        r.osc_l1,
        if precheck { "passed" } else { "failed" },
        r.deviation.rho,
        r.neumann_iters,
        r.reconstruction_residual
    ));
    for row in &rows {
        out.say(format!(
            "  alpha {:<8.4} osc {:.3} rho {:.4} spread {:.4}",
            row.alpha, row.osc_l1, row.rho, row.spread
        ));
    }
    if r.reconstruction_residual > cfg.tolerances.reconstruction {
        return Err(CliError::Contract(format!(
            "atomic reconstruction residual {:.3e} exceeds tolerance {:.1e}",
            r.reconstruction_residual, cfg.tolerances.reconstruction
        )));
    }
    Ok(())
}

pub fn equiv(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let ec = &cfg.equiv;
    let t = Instant::now();
    let lm = cfg.laplacian()?;
    let psi_hat = cfg.psi_hat()?;
    let w = build_wavelet(cfg, lm.clone(), psi_hat.clone(), true)?;
    let us = inputs(cfg, &lm, cfg.family.count)?;
    out.step("setup", t.elapsed());
    let window = w.j_range();
    let params = &ec.params;
    let besov = |wv: &LPWavelet, u: &GridFunction, win: (i32, i32)| -> carnot::Result<f64> {
        Ok(besov_norm(u, wv, params, win)?.0)
    };

    let mut summary: Vec<Vec<String>> = Vec::new();
    let mut detail: Vec<Vec<String>> = Vec::new();
    let mut push = |name: &str, win: (i32, i32), ratios: &[f64], summary: &mut Vec<Vec<String>>| {
        let st = ratio_stats(ratios);
        summary.push(vec![
            name.to_string(),
            format!("{}..{}", win.0, win.1),
            st.n.to_string(),
            num(st.min),
            num(st.max),
            num(st.mean),
            num(st.spread),
        ]);
        for (i, r) in ratios.iter().enumerate() {
            detail.push(vec![name.to_string(), i.to_string(), num(*r)]);
        }
    };

    let t = Instant::now();
    if let Some(bump2) = &ec.bump_pair {
        let psi2 = make_psi_hat(&carnot::wavelets::make_phi_hat(bump2)?)?;
        let w2 = build_wavelet(cfg, lm.clone(), psi2, true)?;
        let mut ratios = Vec::new();
        for u in &us {
            ratios.push(besov(&w, u, window)? / besov(&w2, u, window)?);
        }
        push("wavelet_pair", window, &ratios, &mut summary);
    }
    if let Some(basis2) = &ec.basis_pair {
        let lm2 = cfg.laplacian_with(Some(basis2.clone()))?;
        let w2 = build_wavelet(cfg, lm2.clone(), psi_hat.clone(), true)?;
        let mut ratios = Vec::new();
        for u in &us {
            ratios.push(besov(&w, u, window)? / besov(&w2, u, window)?);
        }
        push("sublaplacian_pair", window, &ratios, &mut summary);
        let plateau = cfg.test_family(1).plateau()?;
        let (up, down) =
            sublaplacian_commensurability(&lm, &lm2, ec.k, &us, &plateau, cfg.backend)?;
        summary.push(vec![
            format!("commensurability_k{}", ec.k),
            String::new(),
            us.len().to_string(),
            num(down),
            num(up),
            String::new(),
            String::new(),
        ]);
    }
    let mut ratios = Vec::new();
    for u in &us {
        let c = cwt_norm(
            u,
            &lm,
            &psi_hat,
            w.moments_order(),
            params,
            &cfg.besov.cwt_scales,
            cfg.backend,
        )?;
        ratios.push(c / besov(&w, u, window)?);
    }
    push("cwt_vs_dyadic", window, &ratios, &mut summary);
    let (shift, _) = laplacian_shift_check(&us, &w, ec.k, params, window)?;
    push(
        &format!("laplacian_shift_k{}", ec.k),
        window,
        &shift,
        &mut summary,
    );
    for &big_j in &ec.windows {
        let win = ((-big_j).max(window.0), big_j.min(window.1));
        let mut ratios = Vec::new();
        for u in &us {
            ratios.push(besov(&w, u, win)? / u.lp_norm(2.0));
        }
        push(&format!("window_J{big_j}"), win, &ratios, &mut summary);
    }
    out.step("reports", t.elapsed());
    out.csv(
        "equiv.csv",
        &["report", "window", "n", "min", "max", "mean", "spread"],
        &summary,
    )?;
    out.csv(
        "equiv_ratios.csv",
        &["report", "function", "ratio"],
        &detail,
    )?;
    for row in &summary {
        let spread = row[6]
            .parse::<f64>()
            .map(|v| format!("{v:.4}"))
            .unwrap_or_default();
        out.say(format!(
            "{:<24} window {:<8} spread {spread}",
            row[0], row[1]
        ));
    }
    Ok(())
}
