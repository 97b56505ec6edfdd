use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use log::info;
use serde::Serialize;
use serde_json::json;

use dualrail::bell::{
    analytic_amplitude, analytic_sweep, bootstrap_sigma, correlation_curve, curve_csv, sweep_csv, threshold_sweep,
    BellConfig, BellSummary,
};
use dualrail::fock::{fidelity, make_true_state, ModelSpec, TwoModeDensityMatrix};
use dualrail::maxlik::{bin_data, effective_efficiency, reconstruct as run_maxlik, Histogram, ReconConfig, Reconstruction};
use dualrail::rng::derive_seed;
use dualrail::sampler::{read_samples, sample_run, write_samples, QuadratureSample};
use dualrail::wigner::{cross_section, two_mode_wigner, PhasePoint4, Plane};

use crate::config::{BellSection, PipelineConfig, WignerSection};
use crate::{BellArgs, ExitError, PipelineArgs, ReconstructArgs, SimulateArgs, WignerArgs};

type CmdResult<T = ()> = Result<T, ExitError>;

fn runtime(e: impl Into<anyhow::Error>) -> ExitError {
    ExitError::Runtime(e.into())
}

fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(runtime)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn load_samples(path: &Path) -> CmdResult<Vec<QuadratureSample>> {
    let samples = read_samples(path)?;
    if samples.is_empty() {
        return Err(ExitError::Validation(anyhow!("{} contains no samples", path.display())));
    }
    Ok(samples)
}

fn simulate_stage(cfg: &PipelineConfig, out: &Path) -> CmdResult<Vec<QuadratureSample>> {
    let stage_seed = derive_seed(cfg.run.seed, "simulate");
    let run = dualrail::sampler::RunConfig { rng_seed: stage_seed, ..cfg.run_config() };
    info!("sampling {} quadrature pairs", run.n_samples);
    let samples = sample_run(&run)?;
    write_samples(&samples, &out.join("samples.csv"))?;
    write_json(
        &out.join("simulate_manifest.json"),
        &json!({
            "seed": cfg.run.seed,
            "stage_seed": stage_seed,
            "model": cfg.model,
            "n_samples": cfg.run.n_samples,
            "phase_schedule": cfg.run.phase_schedule,
            "rows": samples.len(),
            "generated_unix": unix_time(),
        }),
    )?;
    Ok(samples)
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let mut cfg = PipelineConfig::load_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = args.samples {
        cfg.run.n_samples = n;
    }
    cfg.validate()?;
    ensure_dir(&args.out)?;
    write_json(&args.out.join("config.json"), &cfg)?;
    let samples = simulate_stage(&cfg, &args.out)?;
    println!("wrote {} samples to {}", samples.len(), args.out.join("samples.csv").display());
    Ok(())
}

fn histogram_csv(hist: &Histogram) -> String {
    let povm = hist.povm();
    let bins = povm.quad_bins();
    let mut out = String::from("phase_bin,phase_center,a_lo,a_hi,b_lo,b_hi,count\n");
    for p in 0..povm.n_phase() {
        let centre = povm.phase_setting(p).delta_theta();
        for (a, ba) in bins.iter().enumerate() {
            for (b, bb) in bins.iter().enumerate() {
                let c = hist.counts()[povm.flat_index(p, a, b)];
                if c > 0.0 {
                    let _ = writeln!(out, "{p},{centre},{},{},{},{},{c}", ba.lo, ba.hi, bb.lo, bb.hi);
                }
            }
        }
    }
    out
}

fn density_csv(state: &TwoModeDensityMatrix) -> String {
    let mut out = String::from("k,l,m,n,re,im\n");
    for (k, l, m, n, v) in state.nonzero_entries() {
        let _ = writeln!(out, "{k},{l},{m},{n},{},{}", v.re, v.im);
    }
    out
}

fn reconstruct_stage(
    samples: &[QuadratureSample],
    recon: &ReconConfig,
    model: Option<&ModelSpec>,
    out: &Path,
) -> CmdResult<Reconstruction> {
    recon.validate()?;
    info!("building POVM set ({} phase bins, {} quadrature bins)", recon.phase_bins, recon.quad_edges.len() - 1);
    let povm = recon.build_povm()?;
    let hist = bin_data(samples, povm);
    let rec = run_maxlik(&hist, recon)?;
    let fit = effective_efficiency(&rec.state);
    let fid = model.map(|m| fidelity(&rec.state, &make_true_state(m, false))).transpose()?;

    write_json(&out.join("state.json"), &rec.state)?;
    write_text(&out.join("density_matrix.csv"), &density_csv(&rec.state))?;
    write_text(&out.join("histogram.csv"), &histogram_csv(&hist))?;
    write_json(
        &out.join("diagnostics.json"),
        &json!({
            "recon": recon,
            "diagnostics": rec.diagnostics,
            "efficiency_fit": fit,
            "fidelity": fid,
        }),
    )?;

    let d = &rec.diagnostics;
    println!("iterations {} converged {} log-likelihood {}", d.iterations, d.converged, d.final_log_likelihood);
    println!("eta_hat {:.4} tau_squared_hat {:.4}", fit.eta, fit.tau_squared);
    if let Some(f) = fid {
        println!("fidelity {f:.5}");
    }
    Ok(rec)
}

fn convergence_check(rec: &Reconstruction) -> CmdResult {
    if rec.diagnostics.converged {
        Ok(())
    } else {
        Err(ExitError::NonConvergence(
            rec.diagnostics.warning.clone().unwrap_or_else(|| "reconstruction did not converge".into()),
        ))
    }
}

pub fn reconstruct(args: &ReconstructArgs) -> CmdResult {
    let cfg = args.config.as_deref().map(PipelineConfig::load).transpose()?;
    let model = cfg.as_ref().map(|c| c.model);
    let mut recon = cfg.as_ref().map(|c| c.recon.clone()).unwrap_or_default().resolve(model.as_ref());
    if let Some(eta) = args.eta_det {
        recon.eta_det = eta;
    }
    let samples = load_samples(&args.input)?;
    ensure_dir(&args.out)?;
    let rec = reconstruct_stage(&samples, &recon, model.as_ref(), &args.out)?;
    convergence_check(&rec)
}

fn wigner_stage(state: &TwoModeDensityMatrix, section: &WignerSection, out: &Path) -> CmdResult<f64> {
    for &plane in &section.planes {
        let grid = cross_section(state, plane, section.range, section.step)?;
        let name = plane.name();
        grid.write(&out.join(format!("wigner_{name}.csv")), &out.join(format!("wigner_{name}_axes.json")))?;
        info!("wrote {name} grid ({}×{})", grid.axes.n, grid.axes.n);
    }
    let origin = two_mode_wigner(state, PhasePoint4::origin())?;
    println!("W(0,0,0,0) = {origin:.6e}");
    Ok(origin)
}

fn read_state(path: &Path) -> CmdResult<TwoModeDensityMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(runtime)?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid state {}", path.display()))
        .map_err(ExitError::Validation)
}

pub fn wigner(args: &WignerArgs) -> CmdResult {
    let state = read_state(&args.state)?;
    let planes = if args.plane.is_empty() { Plane::ALL.to_vec() } else { args.plane.clone() };
    let section = WignerSection { planes, range: (args.min, args.max), step: args.step };
    ensure_dir(&args.out)?;
    wigner_stage(&state, &section, &args.out)?;
    Ok(())
}

fn bell_stage(samples: &[QuadratureSample], section: &BellSection, seed: u64, out: &Path) -> CmdResult<BellSummary> {
    let config = section.config();
    let curve = correlation_curve(samples, &config)?;
    let mut summary = BellSummary::from_curve(&curve);
    if section.bootstrap > 0 {
        summary.sigma_bootstrap =
            Some(bootstrap_sigma(samples, &config, section.bootstrap, derive_seed(seed, "bell-bootstrap"))?);
    }
    write_text(&out.join("bell_curve.csv"), &curve_csv(&curve))?;
    write_json(&out.join("bell_summary.json"), &summary)?;
    if !section.sweep.is_empty() {
        let rows = threshold_sweep(samples, config.phase_bins, &section.sweep)?;
        write_text(&out.join("bell_sweep.csv"), &sweep_csv(&rows))?;
    }
    println!(
        "T {} V {:.4} ± {:.4} S {:.4} retained_fraction {:.4} violation {}",
        summary.threshold,
        summary.amplitude,
        summary.sigma_amplitude,
        summary.s_value,
        summary.retained_fraction,
        summary.violation
    );
    Ok(summary)
}

pub fn bell(args: &BellArgs) -> CmdResult {
    let cfg = PipelineConfig::load_or_default(args.config.as_deref())?;
    let mut section = cfg.bell.clone();
    if let Some(t) = args.threshold {
        section.threshold = t;
    }
    if let Some(nb) = args.phase_bins {
        section.phase_bins = nb;
    }
    if let Some(b) = args.bootstrap {
        section.bootstrap = b;
    }
    section.sweep = args.sweep.clone().unwrap_or_default();
    section.config().validate()?;
    for &t in &section.sweep {
        BellConfig::new(t, section.phase_bins)?;
    }
    let samples = load_samples(&args.input)?;
    ensure_dir(&args.out)?;
    bell_stage(&samples, &section, args.seed.unwrap_or(cfg.run.seed), &args.out)?;
    Ok(())
}

pub fn pipeline(args: &PipelineArgs) -> CmdResult {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(t) = args.threshold {
        cfg.bell.threshold = t;
    }
    if !args.plane.is_empty() {
        cfg.wigner.planes = args.plane.clone();
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    ensure_dir(&out)?;
    write_json(&out.join("config.json"), &cfg)?;

    let samples = simulate_stage(&cfg, &out)?;
    let recon = cfg.recon.resolve(Some(&cfg.model));
    let rec = reconstruct_stage(&samples, &recon, Some(&cfg.model), &out)?;
    rec.state.validate()?;
    let origin = wigner_stage(&rec.state, &cfg.wigner, &out)?;
    let summary = bell_stage(&samples, &cfg.bell, cfg.run.seed, &out)?;

    let analytic = analytic_sweep(&cfg.model, &cfg.bell.sweep)?;
    write_text(&out.join("bell_sweep_analytic.csv"), &sweep_csv(&analytic))?;
    let analytic_v = analytic_amplitude(&cfg.model, cfg.bell.threshold)?;
    println!("analytic V at T {}: {analytic_v:.4}", cfg.bell.threshold);

    write_json(
        &out.join("pipeline_manifest.json"),
        &json!({
            "seed": cfg.run.seed,
            "stage_seeds": {
                "simulate": derive_seed(cfg.run.seed, "simulate"),
                "bell-bootstrap": derive_seed(cfg.run.seed, "bell-bootstrap"),
            },
            "model": cfg.model,
            "counts": {
                "samples": samples.len(),
                "retained": (summary.retained_fraction * samples.len() as f64).round() as u64,
            },
            "converged": rec.diagnostics.converged,
            "wigner_origin": origin,
            "bell_amplitude": summary.amplitude,
            "bell_amplitude_analytic": analytic_v,
            "generated_unix": unix_time(),
        }),
    )?;
    convergence_check(&rec)
}
