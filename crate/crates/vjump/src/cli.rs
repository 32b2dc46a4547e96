//! Command implementations behind the `vjump` binary: structural analysis,
//! abscissa scans, decay-rate measurement and field/particle simulation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::dispersion::{diffusion_report, spectral_abscissa_scan};
use crate::error::{Error, Result};
use crate::linalg::{ols_slope, ols_slope_stderr};
use crate::forests;
use crate::model::{check_irreducible, check_sk_condition, check_span_condition};
use crate::particles::{density_histogram, l1_distance, ParticleEnsemble};
use crate::spectral::{
    l2_distance, lyapunov_functional, safe_horizon, solve_hyperbolic_many, solve_parabolic,
    total_density, Eta,
};

#[derive(Debug, Parser)]
#[command(name = "vjump", version, about = "Velocity-jump transport laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural checks plus drift and diffusion by every applicable route.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the two-tree forest families to forests.json.
        #[arg(long)]
        dump_forests: bool,
    },
    /// Spectral abscissa scan over frequency rays with a fitted uniform
    /// dissipation constant.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100.0)]
        kappa_max: f64,
        #[arg(long, default_value_t = 48)]
        samples: usize,
    },
    /// Large-time decay rates of the density and of the parabolic mismatch.
    Decay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Field snapshots, dissipation functionals and optional particle overlay.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the Monte Carlo ensemble alongside the fields.
        #[arg(long)]
        particles: bool,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { config, out, dump_forests } => {
            let cfg = RunConfig::from_path(&config)?;
            let dir = out_dir(&cfg, out)?;
            cmd_analyze(&cfg, &dir, dump_forests)
        }
        Command::Spectrum { config, out, kappa_max, samples } => {
            let cfg = RunConfig::from_path(&config)?;
            let dir = out_dir(&cfg, out)?;
            cmd_spectrum(&cfg, &dir, kappa_max, samples)
        }
        Command::Decay { config, out } => {
            let cfg = RunConfig::from_path(&config)?;
            let dir = out_dir(&cfg, out)?;
            cmd_decay(&cfg, &dir)
        }
        Command::Simulate { config, out, particles } => {
            let cfg = RunConfig::from_path(&config)?;
            let dir = out_dir(&cfg, out)?;
            cmd_simulate(&cfg, &dir, particles)
        }
    }
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| cfg.outputs.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// 17 significant digits: round-trips every f64.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig, dir: &Path, dump_forests: bool) -> Result<()> {
    let model = cfg.build_model()?;
    let connectivity = check_irreducible(&model);
    let span = check_span_condition(&model);
    let sk = if model.is_symmetric() {
        Some(check_sk_condition(&model)?)
    } else {
        None
    };
    let report = diffusion_report(&model)?;
    let mut value = serde_json::to_value(&report)?;
    let obj = value.as_object_mut().unwrap();
    obj.insert(
        "model".into(),
        json!({
            "states": model.num_states(),
            "dim": model.dim(),
            "symmetric": model.is_symmetric(),
        }),
    );
    obj.insert(
        "checks".into(),
        json!({
            "irreducible": connectivity.connected,
            "components": connectivity.num_components,
            "span": span.spans,
            "span_rank": span.rank,
            "sk": sk,
        }),
    );
    write_json(dir, "report.json", &value)?;
    if dump_forests {
        let family = forests::forest_pairs(&model)?;
        let dump: Vec<_> = family
            .members
            .iter()
            .map(|f| {
                json!({
                    "trees": f.trees.iter()
                        .map(|t| t.iter().map(|v| v + 1).collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                    "arcs": f.arcs.iter().map(|&(i, j)| [i + 1, j + 1]).collect::<Vec<_>>(),
                    "weight": f.weight,
                })
            })
            .collect();
        write_json(dir, "forests.json", &dump)?;
    }
    Ok(())
}

/// Scan directions: the coordinate axes plus, beyond one dimension, the
/// normalized all-ones diagonal.
fn scan_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for a in 0..d {
        let mut e = vec![0.0; d];
        e[a] = 1.0;
        dirs.push(e);
    }
    if d > 1 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
    }
    dirs
}

pub fn cmd_spectrum(cfg: &RunConfig, dir: &Path, kappa_max: f64, samples: usize) -> Result<()> {
    if !(kappa_max > 0.0) {
        return Err(Error::Invalid("kappa-max must be positive".into()));
    }
    if samples < 2 {
        return Err(Error::Invalid("samples must be at least 2".into()));
    }
    let model = cfg.build_model()?;
    if !check_irreducible(&model).connected {
        return Err(Error::Precondition("irreducibility violated".into()));
    }
    let directions = scan_directions(model.dim());
    let kappa_min = kappa_max * 1e-3;
    let ratio = (kappa_max / kappa_min).powf(1.0 / (samples - 1) as f64);

    let mut csv = String::from("kappa_norm,direction,abscissa,c0_local\n");
    let mut c0 = f64::INFINITY;
    let mut worst = f64::NEG_INFINITY;
    let zero_scan = spectral_abscissa_scan(&model, &[vec![0.0; model.dim()]])?;
    csv.push_str(&format!(
        "{},0,{},inf\n",
        fmt(0.0),
        fmt(zero_scan.samples[0].abscissa)
    ));
    for (di, u) in directions.iter().enumerate() {
        let kappas: Vec<Vec<f64>> = (0..samples)
            .map(|s| {
                let r = kappa_min * ratio.powi(s as i32);
                u.iter().map(|x| x * r).collect()
            })
            .collect();
        let scan = spectral_abscissa_scan(&model, &kappas)?;
        c0 = c0.min(scan.c0);
        worst = worst.max(scan.worst_abscissa);
        for s in &scan.samples {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                fmt(s.kappa_norm),
                di + 1,
                fmt(s.abscissa),
                fmt(s.c0_local)
            ));
        }
    }
    fs::write(dir.join("spectrum.csv"), csv)?;
    write_json(
        dir,
        "spectrum.json",
        &json!({
            "c0": c0,
            "worst_abscissa": worst,
            "dissipative": c0 > 0.0,
            "kappa_max": kappa_max,
            "samples_per_direction": samples,
            "directions": directions,
        }),
    )?;
    Ok(())
}

fn geometric_times(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t_max / t_min).log10();
    let count = (decades * per_decade as f64).ceil() as usize + 1;
    (0..count)
        .map(|i| t_min * 10f64.powf(i as f64 / per_decade as f64))
        .map(|t| t.min(t_max))
        .collect()
}

pub fn cmd_decay(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let model = cfg.build_model()?;
    if !model.is_symmetric() {
        return Err(Error::Precondition(
            "decay measurement requires symmetric transition rates".into(),
        ));
    }
    if !check_sk_condition(&model)? {
        return Err(Error::Precondition(
            "dissipativity condition fails: no uniform decay to measure".into(),
        ));
    }
    let decay = cfg
        .decay
        .clone()
        .ok_or_else(|| Error::Invalid("decay: section missing".into()))?;
    let grid = cfg.build_grid()?;
    let datum = cfg.build_initial()?;
    let report = diffusion_report(&model)?;
    let d_eff = report.d_effective_matrix();
    let d_norm = report
        .d_hessian
        .iter()
        .flatten()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    if report.psd_min_eig <= 0.0 {
        return Err(Error::Precondition(format!(
            "diffusion matrix is not positive definite (min eig {:.3e})",
            report.psd_min_eig
        )));
    }

    let width = datum.bumps.iter().map(|b| b.width).fold(0.0, f64::max);
    let horizon = safe_horizon(model.max_speed(), width, d_norm, grid.half_width());
    let mut times = geometric_times(decay.t_min, decay.t_max, decay.per_decade);
    let requested = times.len();
    times.retain(|&t| t <= horizon);
    let truncated = times.len() < requested;
    if truncated {
        eprintln!(
            "warning: box supports decay measurement only to t = {horizon:.3e}; \
             dropping {} of {requested} sample times (enlarge L to keep them)",
            requested - times.len()
        );
    }
    if times.len() < 3 {
        return Err(Error::Guard(format!(
            "only {} usable sample times before wrap-around (horizon {horizon:.3e}); \
             enlarge the box or lower t_min",
            times.len()
        )));
    }

    let f0 = datum.realize(grid, model.num_states())?;
    let u0 = total_density(&f0);
    let fields = solve_hyperbolic_many(&model, &f0, &times)?;

    let mut csv = String::from("t,norm_u,norm_parabolic,norm_diff\n");
    let mut log_t = Vec::new();
    let mut log_u = Vec::new();
    let mut log_diff = Vec::new();
    for (&t, f) in times.iter().zip(&fields) {
        let u = total_density(f);
        let upar = solve_parabolic(&d_eff, &u0, t, &report.v_drift)?;
        let nu = u.l2_norm();
        let np = upar.l2_norm();
        let nd = l2_distance(&u, &upar)?;
        if !(nu.is_finite() && nd.is_finite()) {
            return Err(Error::Guard(format!("non-finite norm at t = {t}")));
        }
        csv.push_str(&format!("{},{},{},{}\n", fmt(t), fmt(nu), fmt(np), fmt(nd)));
        log_t.push(t.log10());
        log_u.push(nu.log10());
        log_diff.push(nd.log10());
    }
    fs::write(dir.join("decay.csv"), csv)?;

    // Fit over the last decade of usable times.
    let t_last = *times.last().unwrap();
    let keep: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t_last / 10.0).collect();
    if keep.len() < 3 {
        return Err(Error::Guard("fewer than 3 points in the fitting decade".into()));
    }
    let sel = |v: &[f64]| -> Vec<f64> { keep.iter().map(|&i| v[i]).collect() };
    let (xs, yu, yd) = (sel(&log_t), sel(&log_u), sel(&log_diff));
    let (slope_u, _) = ols_slope(&xs, &yu);
    let (slope_diff, _) = ols_slope(&xs, &yd);
    let d = model.dim() as f64;
    let expected_u = -d / 4.0;
    let expected_diff = -d / 4.0 - 0.5;
    let summary = json!({
        "slope_u": slope_u,
        "stderr_u": ols_slope_stderr(&xs, &yu),
        "expected_u": expected_u,
        "pass_u": (slope_u - expected_u).abs() <= 0.1,
        "slope_diff": slope_diff,
        "stderr_diff": ols_slope_stderr(&xs, &yd),
        "expected_diff": expected_diff,
        "pass_diff": (slope_diff - expected_diff).abs() <= 0.1,
        "fit_window": [t_last / 10.0, t_last],
        "truncated": truncated,
        "horizon": horizon,
    });
    write_json(dir, "decay.json", &summary)?;
    Ok(())
}

fn snapshot_name(t: f64) -> String {
    format!("snapshots_{t}.csv")
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path, particles: bool) -> Result<()> {
    let model = cfg.build_model()?;
    if !check_irreducible(&model).connected {
        return Err(Error::Precondition("irreducibility violated".into()));
    }
    let grid = cfg.build_grid()?;
    let datum = cfg.build_initial()?;
    let times = cfg
        .times
        .clone()
        .ok_or_else(|| Error::Invalid("times: section missing".into()))?;
    let f0 = datum.realize(grid, model.num_states())?;
    let fields = solve_hyperbolic_many(&model, &f0, &times)?;

    let mut lyap = String::from("t,square,absolute,positive_part\n");
    for (&t, f) in times.iter().zip(&fields) {
        let phys = f.to_physical();
        let mut csv = String::new();
        for a in 0..grid.dim() {
            csv.push_str(&format!("x{},", a + 1));
        }
        for c in 0..model.num_states() {
            csv.push_str(&format!("f{}", c + 1));
            csv.push(if c + 1 == model.num_states() { '\n' } else { ',' });
        }
        for cell in 0..grid.num_cells() {
            for x in grid.position(cell) {
                csv.push_str(&fmt(x));
                csv.push(',');
            }
            for (c, comp) in phys.iter().enumerate() {
                csv.push_str(&fmt(comp[cell]));
                csv.push(if c + 1 == phys.len() { '\n' } else { ',' });
            }
        }
        fs::write(dir.join(snapshot_name(t)), csv)?;
        lyap.push_str(&format!(
            "{},{},{},{}\n",
            fmt(t),
            fmt(lyapunov_functional(f, &Eta::Square)),
            fmt(lyapunov_functional(f, &Eta::Absolute)),
            fmt(lyapunov_functional(f, &Eta::PositivePart)),
        ));
    }
    fs::write(dir.join("lyapunov.csv"), lyap)?;

    if particles {
        let pc = cfg
            .particles
            .clone()
            .ok_or_else(|| Error::Invalid("particles: section missing".into()))?;
        let mut ensemble =
            ParticleEnsemble::from_bumps(&model, &datum.bumps, pc.count, pc.dt, pc.seed)?;
        let mass: f64 = (0..model.num_states()).map(|c| f0.mass(c)).sum();
        if mass <= 0.0 {
            return Err(Error::Precondition(
                "particle comparison needs positive total mass".into(),
            ));
        }
        let mut csv = String::from("t,l1_distance\n");
        for (&t, f) in times.iter().zip(&fields) {
            ensemble.advance_to(t);
            let hist = density_histogram(&ensemble, grid)?;
            let mut u = total_density(f);
            let scale = 1.0 / mass;
            for mode in 0..grid.num_cells() {
                *u.coeff_mut(mode, 0) *= ndarray_linalg::c64::new(scale, 0.0);
            }
            let dist = l1_distance(&hist, &u)?;
            csv.push_str(&format!("{},{}\n", fmt(ensemble.time()), fmt(dist)));
        }
        fs::write(dir.join("particles.csv"), csv)?;
    }
    Ok(())
}

