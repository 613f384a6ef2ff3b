//! Scenario orchestration.
//!
//! [`run`] executes one [`ExperimentConfig`] into a directory, writing a
//! manifest before the first output and again after the last. Invariants are
//! evaluated from the files on disk, so [`check`] can repeat them later on a
//! stored run without recomputing anything.
//!
//! Files written per scenario (all CSV files have a header row):
//!
//! | file | columns |
//! |------|---------|
//! | `background_series.csv` | t, theta_inf, u_inf_over_theta_inf, fluct_u, fluct_e, mass, momentum, energy |
//! | `background_snapshot_t{t}.csv` | x, rho, u, e |
//! | `macro_series.csv` | t, R, theta, theta_inf, max_u |
//! | `macro_snapshot_t{t}.csv` | x, rho, u |
//! | `kinetic_series.csv` | t, d_theta, d_v, theta_min, theta_max, theta_mean, r_v, m1, m2, dissipation, theta_inf |
//! | `kinetic_particles_t{t}.csv` | id, x, v, theta, weight |
//! | `kinetic_moments_t{t}.csv` | x, rho, j, h, a, b, s_v, s_theta |
//! | `particle_trajectory.csv` | t, species, agent_id, x, v, theta |
//! | `particle_series.csv` | t, sum_v1, sum_theta1, momentum, v_diameter, theta_min1, theta_max1 |
//!
//! plus `*_diagnostics.json` summaries and, for sweeps, `sweep.json` and one
//! `eps_{ε}/` directory per member.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ReductionMode, Scenario, ThetaInit};
use crate::diagnostics::{
    cloud_to_grid, decay_window, fit_decay, moment_budget, weak_velocity_bound, BudgetInputs,
    FourierFeatures, LimitComparison, MomentBudget, RateFit, SnapshotDistance,
};
use crate::error::{Result, TcsError};
use crate::fluid::{run_background, BackgroundRun, BackgroundSource, FluidSolver};
use crate::geometry::GridFn1D;
use crate::io::{
    read_csv, sha256_file, write_csv, write_json, FileEntry, InvariantCheck, RunManifest,
    MANIFEST_NAME,
};
use crate::kinetic::{
    advance, moments_on_grid, sample_cloud, theta_envelope, CloudSpec, KineticCloud, KineticRun,
    Relaxation, ScalingRegime,
};
use crate::macro_limit::{relax_theta, run_macro, MacroConfig, MacroRun, Regime, VelocityOperator};
use crate::particle::{integrate_with, AgentState, Couplings, Kernels, TwoSpeciesSystem};
use crate::presets;

/// Environment variable holding the root directory for relative outputs.
pub const OUTPUT_ROOT_VAR: &str = "TCS_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Run directory of a config: `output` itself if absolute, else under [`output_root`].
pub fn resolve_output(cfg: &ExperimentConfig) -> PathBuf {
    let p = PathBuf::from(&cfg.output);
    if p.is_absolute() {
        p
    } else {
        output_root().join(p)
    }
}

fn in_pool<T: Send>(mode: ReductionMode, f: impl FnOnce() -> T + Send) -> Result<T> {
    match mode {
        ReductionMode::Fast => Ok(f()),
        ReductionMode::Deterministic => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| TcsError::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn snap_name(prefix: &str, t: f64) -> String {
    format!("{prefix}_t{t}.csv")
}

/// Background run covering `[0, t_end]`.
pub fn background_run(cfg: &ExperimentConfig, t_end: f64, snapshots: &[f64]) -> Result<BackgroundRun> {
    let m = cfg.background_m();
    let k = cfg.background_kernel()?;
    let solver = FluidSolver::new(m, &k, &k);
    run_background(&solver, &cfg.preset.background(m), t_end, cfg.background.cfl, snapshots)
}

/// Limit-system parameters shared by every scenario.
pub fn macro_config(cfg: &ExperimentConfig, regime: Regime, t_end: f64, snapshots: Vec<f64>) -> Result<MacroConfig> {
    Ok(MacroConfig {
        m: cfg.grid.m,
        t_end,
        cfl: cfg.grid.cfl,
        max_dt: cfg.macro_.max_dt,
        regime,
        phi: cfg.macro_phi()?,
        potential: cfg.macro_potential()?,
        weno: cfg.macro_.weno,
        output_dt: cfg.grid.output_dt,
        snapshot_times: snapshots,
    })
}

/// `θ(0)` of the weak limit as configured.
pub fn weak_theta0(cfg: &ExperimentConfig, bg: &BackgroundSource) -> Result<f64> {
    match cfg.macro_.theta0 {
        Some(ThetaInit::Value(v)) => Ok(v),
        Some(ThetaInit::Keyword(_)) => Ok(bg.theta_inf_at(0.0)),
        None => cfg
            .preset
            .theta0()
            .ok_or_else(|| TcsError::MissingKey("macro.theta0".into())),
    }
}

/// Initial cloud for a kinetic run: positions from the preset density,
/// velocities about the limit velocity at `t = 0` and `θ` uniform.
///
/// The velocity profile solves the limit velocity equation with `θ_eff = θ^∞(0)`
/// for strong relaxation and with the cloud-mean `θ` for weak relaxation, so
/// the cloud starts on the same data as its limit. Without a background the
/// profile is zero.
pub fn initial_cloud(
    cfg: &ExperimentConfig,
    regime: ScalingRegime,
    bg: Option<&BackgroundSource>,
) -> Result<KineticCloud> {
    let k = &cfg.kinetic;
    let rho0 = cfg.preset.limit_density(cfg.grid.m);
    let spec = CloudSpec {
        n: k.n,
        sigma_v: k.sigma_v,
        theta_min: k.theta_min,
        theta_max: k.theta_max,
        seed: k.seed,
    };
    let mut ps = sample_cloud(&spec, &rho0, |_| 0.0)?;
    if let Some(b) = bg {
        let mean: f64 = ps.iter().map(|p| p.weight * p.theta).sum();
        let th_inf = b.theta_inf_at(0.0);
        let th_eff = match regime.relaxation {
            Relaxation::Strong => th_inf,
            Relaxation::Weak => mean,
        };
        let op = VelocityOperator::new(cfg.grid.m, &cfg.macro_phi()?, &cfg.macro_potential()?);
        let u0 = op.solve_velocity(&rho0, b.u_inf_at(0.0), th_inf, th_eff)?;
        for p in &mut ps {
            p.v += u0.interpolate(p.x);
        }
    }
    KineticCloud::new(ps, regime, cfg.macro_potential()?)
}

/// Limit regime matching a kinetic cloud.
pub fn limit_regime(cloud: &KineticCloud) -> Regime {
    match cloud.regime.relaxation {
        Relaxation::Strong => Regime::Strong,
        Relaxation::Weak => Regime::Weak {
            theta0: cloud.mean_theta(),
        },
    }
}

/// Quantitative checks of one kinetic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticAnalysis {
    pub eps: f64,
    pub relaxation: Relaxation,
    /// Confinement envelope `(θ_m, θ_M)`.
    pub theta_m: f64,
    pub theta_big_m: f64,
    pub confinement_violations: usize,
    pub d_theta0: f64,
    /// Finite-difference `sup |dθ^∞/dt|` of the background, when present.
    pub theta_inf_rate: Option<f64>,
    pub decay_fit: Option<RateFit>,
    /// `1/(ε θ_M²)`
    pub decay_bound: f64,
    /// Records with `D_θ(t) > 1.5 D_θ(0) e^{−t/(εθ_M²)}` (strong relaxation only).
    pub exp_bound_violations: Option<usize>,
    /// `max_{t ≥ √ε} max(θ_max − θ^∞, θ^∞ − θ_min)` with a background.
    pub deviation: Option<f64>,
    /// `max_{t ∈ [√ε, 2]} |mean θ − θ_ODE(t)|` for weak relaxation.
    pub tracking_error: Option<f64>,
    pub budget: Option<MomentBudget>,
    /// `(v_M, max R_v)` for weak relaxation.
    pub velocity_bound: Option<(f64, f64)>,
}

/// `bg_theta` is the range `(θ̄_m, θ̄_M)` of the background internal energy,
/// which the background keeps for all times; it is ignored without a background.
pub fn analyse_kinetic(
    cloud0: &KineticCloud,
    run: &KineticRun,
    bg: Option<&BackgroundSource>,
    bg_theta: (f64, f64),
) -> Result<KineticAnalysis> {
    let regime = cloud0.regime;
    let eps = regime.eps;
    let ps = &cloud0.particles;
    let th0 = ps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.theta), h.max(p.theta)));
    let env = match bg {
        Some(_) => theta_envelope(th0, bg_theta),
        None => th0,
    };
    let series = &run.series;
    let confinement_violations = series
        .iter()
        .filter(|r| r.theta_min < env.0 || r.theta_max > env.1)
        .count();
    let d0 = th0.1 - th0.0;
    let rate = 1.0 / (eps * env.1 * env.1);
    let (lo, hi) = decay_window(eps, env.1);
    let dth: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.d_theta)).collect();
    let decay_fit = fit_decay(&dth, lo, hi).ok();
    let exp_bound_violations = (regime.relaxation == Relaxation::Strong).then(|| {
        series
            .iter()
            .filter(|r| r.d_theta > 1.5 * d0 * (-r.t * rate).exp() + 1e-15)
            .count()
    });
    let late = |t: f64| t >= eps.sqrt() - 1e-12;
    let deviation = bg.map(|_| {
        series
            .iter()
            .filter(|r| late(r.t))
            .map(|r| (r.theta_max - r.theta_inf).max(r.theta_inf - r.theta_min))
            .fold(0.0, f64::max)
    });
    let tracking_error = match (regime.relaxation, bg) {
        (Relaxation::Weak, Some(b)) => {
            let t_end = series.last().map_or(0.0, |r| r.t);
            let ode = relax_theta(cloud0.mean_theta(), b, run.dt, t_end)?;
            let mut err: f64 = 0.0;
            for r in series.iter().filter(|r| late(r.t) && r.t <= 2.0 + 1e-12) {
                let k = (r.t / run.dt).round() as usize;
                if k < ode.len() && (ode[k].0 - r.t).abs() < 1e-9 {
                    err = err.max((ode[k].1 - r.theta_mean).abs());
                }
            }
            Some(err)
        }
        _ => None,
    };
    let phi = regime.phi();
    let inputs = BudgetInputs {
        eps,
        phi_sup: phi.sup(),
        grad_w_sup: cloud0.potential.grad_sup(),
        theta_m: env.0,
        theta_big_m: env.1,
        d_theta0: d0,
    };
    let ratio = |t: f64| bg.map_or(0.0, |b| b.ratio_at(t));
    let budget = moment_budget(series, ratio, &inputs).ok();
    let velocity_bound = if regime.relaxation == Relaxation::Weak {
        let v0 = ps.iter().map(|p| p.v.abs()).fold(0.0, f64::max);
        let sup_ratio = bg.map_or(0.0, |b| b.ratio.iter().fold(0.0, |a: f64, r| a.max(r.abs())));
        weak_velocity_bound(v0, &inputs, sup_ratio)
            .ok()
            .map(|vm| (vm, series.iter().map(|r| r.r_v).fold(0.0, f64::max)))
    } else {
        None
    };
    Ok(KineticAnalysis {
        eps,
        relaxation: regime.relaxation,
        theta_m: env.0,
        theta_big_m: env.1,
        confinement_violations,
        d_theta0: d0,
        theta_inf_rate: bg.map(|b| b.theta_inf_rate()),
        decay_fit,
        decay_bound: rate,
        exp_bound_violations,
        deviation,
        tracking_error,
        budget,
        velocity_bound,
    })
}

/// Collected outputs of one scenario.
#[derive(Default)]
struct Emitted {
    files: Vec<FileEntry>,
}

impl Emitted {
    fn csv<I: IntoIterator<Item = Vec<f64>>>(&mut self, dir: &Path, rel: &str, header: &[&str], rows: I) -> Result<()> {
        let n = write_csv(&dir.join(rel), header, rows)?;
        self.files.push(FileEntry::new(dir, rel, n)?);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, dir: &Path, rel: &str, value: &T) -> Result<()> {
        let n = write_json(&dir.join(rel), value)?;
        self.files.push(FileEntry::new(dir, rel, n)?);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct BackgroundDiagnostics {
    steps: usize,
    max_envelope_excursion: f64,
    max_theta_decrease: f64,
    min_rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct MacroDiagnostics {
    steps: usize,
    t_end: f64,
    max_clip: f64,
    max_mass_error: f64,
    final_theta: f64,
}

fn emit_background(out: &mut Emitted, dir: &Path, run: &BackgroundRun, snapshots: &[f64]) -> Result<()> {
    let s = &run.source;
    out.csv(
        dir,
        "background_series.csv",
        &["t", "theta_inf", "u_inf_over_theta_inf", "fluct_u", "fluct_e", "mass", "momentum", "energy"],
        (0..s.times.len()).map(|k| {
            let (_, a, b, c) = run.totals[k];
            vec![s.times[k], s.theta_inf[k], s.ratio[k], s.fluct_u[k], s.fluct_e[k], a, b, c]
        }),
    )?;
    for (st, &t) in run.snapshots.iter().zip(snapshots) {
        let (u, e) = (st.velocity(), st.internal());
        out.csv(
            dir,
            &snap_name("background_snapshot", t),
            &["x", "rho", "u", "e"],
            (0..st.m()).map(|i| vec![st.rho.node(i), st.rho.values[i], u.values[i], e.values[i]]),
        )?;
    }
    out.json(
        dir,
        "background_diagnostics.json",
        &BackgroundDiagnostics {
            steps: run.steps,
            max_envelope_excursion: run.max_envelope_excursion,
            max_theta_decrease: run.max_theta_decrease,
            min_rho: run.min_rho,
        },
    )
}

fn emit_macro(out: &mut Emitted, dir: &Path, run: &MacroRun, t_end: f64) -> Result<()> {
    out.csv(
        dir,
        "macro_series.csv",
        &["t", "R", "theta", "theta_inf", "max_u"],
        run.series
            .iter()
            .map(|s| vec![s.t, s.order_parameter, s.theta, s.theta_inf, s.max_u]),
    )?;
    for sn in &run.snapshots {
        out.csv(
            dir,
            &snap_name("macro_snapshot", sn.t),
            &["x", "rho", "u"],
            (0..sn.rho.m()).map(|i| vec![sn.rho.node(i), sn.rho.values[i], sn.u.values[i]]),
        )?;
    }
    out.json(
        dir,
        "macro_diagnostics.json",
        &MacroDiagnostics {
            steps: run.steps,
            t_end,
            max_clip: run.max_clip,
            max_mass_error: run.max_mass_error,
            final_theta: run.final_theta,
        },
    )
}

fn emit_kinetic(
    out: &mut Emitted,
    dir: &Path,
    cfg: &ExperimentConfig,
    run: &KineticRun,
    analysis: &KineticAnalysis,
    with_snapshots: bool,
) -> Result<()> {
    out.csv(
        dir,
        "kinetic_series.csv",
        &[
            "t", "d_theta", "d_v", "theta_min", "theta_max", "theta_mean", "r_v", "m1", "m2",
            "dissipation", "theta_inf",
        ],
        run.series.iter().map(|r| {
            vec![
                r.t, r.d_theta, r.d_v, r.theta_min, r.theta_max, r.theta_mean, r.r_v, r.m1, r.m2,
                r.dissipation, r.theta_inf,
            ]
        }),
    )?;
    if with_snapshots {
        let mm = cfg.kinetic.moment_m;
        let bw = cfg.kinetic.bandwidth.unwrap_or(2.0 / mm as f64);
        for sn in &run.snapshots {
            out.csv(
                dir,
                &snap_name("kinetic_particles", sn.t),
                &["id", "x", "v", "theta", "weight"],
                sn.particles
                    .iter()
                    .enumerate()
                    .map(|(i, p)| vec![i as f64, p.x, p.v, p.theta, p.weight]),
            )?;
            let cloud = KineticCloud {
                particles: sn.particles.clone(),
                ..run.final_cloud.clone()
            };
            let ms = moments_on_grid(&cloud, mm, bw)?;
            out.csv(
                dir,
                &snap_name("kinetic_moments", sn.t),
                &["x", "rho", "j", "h", "a", "b", "s_v", "s_theta"],
                (0..mm).map(|i| {
                    vec![
                        ms.rho.node(i),
                        ms.rho.values[i],
                        ms.j.values[i],
                        ms.h.values[i],
                        ms.a.values[i],
                        ms.b.values[i],
                        ms.s_v.values[i],
                        ms.s_theta.values[i],
                    ]
                }),
            )?;
        }
    }
    out.json(dir, "kinetic_diagnostics.json", analysis)
}

fn scenario_background(cfg: &ExperimentConfig, dir: &Path, out: &mut Emitted) -> Result<BackgroundSource> {
    let bg = background_run(cfg, cfg.grid.t_end, &cfg.grid.snapshots)?;
    emit_background(out, dir, &bg, &cfg.grid.snapshots)?;
    Ok(bg.source)
}

fn scenario_macro(cfg: &ExperimentConfig, dir: &Path, out: &mut Emitted) -> Result<()> {
    let bg = scenario_background(cfg, dir, out)?;
    let regime = match cfg.scenario {
        Scenario::MacroWeak => Regime::Weak {
            theta0: weak_theta0(cfg, &bg)?,
        },
        _ => Regime::Strong,
    };
    let mc = macro_config(cfg, regime, cfg.grid.t_end, cfg.grid.snapshots.clone())?;
    let run = run_macro(&mc, &cfg.preset.limit_density(cfg.grid.m), &bg)?;
    emit_macro(out, dir, &run, cfg.grid.t_end)
}

fn scenario_kinetic(cfg: &ExperimentConfig, dir: &Path, out: &mut Emitted) -> Result<()> {
    let bg = if cfg.kinetic.background {
        Some(scenario_background(cfg, dir, out)?)
    } else {
        None
    };
    let cloud = initial_cloud(cfg, cfg.regime()?, bg.as_ref())?;
    let run = advance(&cloud, bg.as_ref(), cfg.kinetic.dt, cfg.grid.t_end, &cfg.grid.snapshots)?;
    let analysis = analyse_kinetic(&cloud, &run, bg.as_ref(), cfg.background_theta_range())?;
    emit_kinetic(out, dir, cfg, &run, &analysis, true)
}

/// Initial agents of the particle scenario.
pub fn particle_system(cfg: &ExperimentConfig) -> Result<TwoSpeciesSystem> {
    let p = &cfg.particle;
    let spec = CloudSpec {
        n: p.n1,
        sigma_v: p.sigma_v,
        theta_min: p.theta_min,
        theta_max: p.theta_max,
        seed: p.seed,
    };
    let s1: Vec<AgentState> = sample_cloud(&spec, &cfg.preset.limit_density(cfg.grid.m), |_| 0.0)?
        .into_iter()
        .map(|q| AgentState::new(q.x, q.v, q.theta))
        .collect();
    let s2: Vec<AgentState> = (0..p.n2)
        .map(|k| {
            let x = (k as f64 + 0.5) / p.n2 as f64;
            AgentState::new(x, presets::background_u0(x), presets::background_e0(x))
        })
        .collect();
    let phi = crate::geometry::InfluenceFn::regular(p.lambda)?;
    let c = Couplings {
        kappa1: p.kappa,
        kappa2: p.kappa,
        nu1: p.nu,
        nu2: p.nu,
        kappa_c: p.kappa_c,
        nu_c: p.nu_c,
        ..Couplings::zero()
    };
    Ok(TwoSpeciesSystem::new(s1, s2, c, Kernels::uniform(phi)))
}

fn scenario_particle(cfg: &ExperimentConfig, dir: &Path, out: &mut Emitted) -> Result<()> {
    let sys = particle_system(cfg)?;
    let traj = integrate_with(&sys, cfg.particle.dt, cfg.grid.t_end, cfg.particle.stride)?;
    let mut rows = vec![];
    let mut series = vec![];
    for (k, &t) in traj.times.iter().enumerate() {
        for (sp, agents) in [(1.0, &traj.species1[k]), (2.0, &traj.species2[k])] {
            for (i, a) in agents.iter().enumerate() {
                rows.push(vec![t, sp, i as f64, a.x, a.v, a.theta]);
            }
        }
        let s1 = &traj.species1[k];
        let s2 = &traj.species2[k];
        let c = &sys.couplings;
        let sv1: f64 = s1.iter().map(|a| a.v).sum();
        let st1: f64 = s1.iter().map(|a| a.theta).sum();
        let mom = c.m1 * sv1 + c.m2 * s2.iter().map(|a| a.v).sum::<f64>();
        let (tl, th) = s1
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(a.theta), h.max(a.theta)));
        series.push(vec![t, sv1, st1, mom, crate::particle::velocity_diameter(s1), tl, th]);
    }
    out.csv(dir, "particle_trajectory.csv", &["t", "species", "agent_id", "x", "v", "theta"], rows)?;
    out.csv(
        dir,
        "particle_series.csv",
        &["t", "sum_v1", "sum_theta1", "momentum", "v_diameter", "theta_min1", "theta_max1"],
        series,
    )
}

/// Result of an ε-sweep together with the member runs.
pub struct SweepOutcome {
    pub comparison: LimitComparison,
    pub macro_run: MacroRun,
    pub members: Vec<(KineticCloud, KineticRun, KineticAnalysis)>,
}

/// Runs the kinetic level for each `ε` (decreasing) and measures the distance
/// to the limit system at the sweep snapshots.
///
/// All members share the initial cloud; the limit reference starts from the
/// same density and, for weak relaxation, from the cloud-mean `θ`.
pub fn epsilon_sweep(cfg: &ExperimentConfig, epsilons: &[f64], bg: &BackgroundSource) -> Result<SweepOutcome> {
    if epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons.is_empty() {
        return Err(TcsError::Config("epsilon list must be non-empty and strictly decreasing".into()));
    }
    let snaps = cfg.sweep.snapshots.clone();
    let t_end = snaps.iter().copied().fold(0.0, f64::max);
    let member = |eps: f64| -> Result<(KineticCloud, KineticRun, KineticAnalysis)> {
        let cloud = initial_cloud(cfg, cfg.regime_at(eps)?, Some(bg))?;
        let run = advance(&cloud, Some(bg), cfg.kinetic.dt, t_end, &snaps)?;
        let analysis = analyse_kinetic(&cloud, &run, Some(bg), cfg.background_theta_range())?;
        Ok((cloud, run, analysis))
    };
    let members: Vec<_> = match cfg.reduction {
        ReductionMode::Fast => epsilons.par_iter().map(|&e| member(e)).collect::<Result<_>>()?,
        ReductionMode::Deterministic => epsilons.iter().map(|&e| member(e)).collect::<Result<_>>()?,
    };
    let regime = limit_regime(&members[0].0);
    let macro_run = run_macro(
        &macro_config(cfg, regime, t_end, snaps.clone())?,
        &cfg.preset.limit_density(cfg.grid.m),
        bg,
    )?;
    let features = FourierFeatures::standard();
    let mut distances = vec![];
    for (_, run, _) in &members {
        let mut row: Vec<SnapshotDistance> = vec![];
        for &t in &snaps {
            let ks = run
                .snapshots
                .iter()
                .find(|s| (s.t - t).abs() < 1e-9)
                .ok_or_else(|| TcsError::Invariant(format!("kinetic snapshot at t = {t} missing")))?;
            let ms = macro_run
                .snapshots
                .iter()
                .find(|s| (s.t - t).abs() < 1e-9)
                .ok_or_else(|| TcsError::Invariant(format!("limit snapshot at t = {t} missing")))?;
            let atoms: Vec<_> = ks.particles.iter().map(|p| (p.x, p.v, p.weight)).collect();
            row.push(cloud_to_grid(t, &atoms, &ms.rho, &ms.u, &features)?);
        }
        distances.push(row);
    }
    let fits = members.iter().map(|m| m.2.decay_fit).collect();
    let comparison = LimitComparison::new(epsilons.to_vec(), snaps, distances, fits)?;
    Ok(SweepOutcome {
        comparison,
        macro_run,
        members,
    })
}

fn scenario_sweep(cfg: &ExperimentConfig, dir: &Path, out: &mut Emitted, epsilons: &[f64]) -> Result<()> {
    let t_end = cfg.sweep.snapshots.iter().copied().fold(0.0, f64::max);
    let bg = background_run(cfg, t_end, &[])?;
    emit_background(out, dir, &bg, &[])?;
    let sw = epsilon_sweep(cfg, epsilons, &bg.source)?;
    emit_macro(out, dir, &sw.macro_run, t_end)?;
    for (e, (_, run, analysis)) in epsilons.iter().zip(&sw.members) {
        let sub = format!("eps_{e}");
        let mut inner = Emitted::default();
        emit_kinetic(&mut inner, &dir.join(&sub), cfg, run, analysis, false)?;
        for mut f in inner.files {
            f.path = format!("{sub}/{}", f.path);
            out.files.push(f);
        }
    }
    out.json(dir, "sweep.json", &sw.comparison)?;
    println!("{}", sw.comparison.summary());
    Ok(())
}

/// Runs a config into `dir` and returns the final manifest.
///
/// The manifest is written with `incomplete = true` before any work and
/// rewritten at the end. A failing scenario leaves the incomplete manifest
/// with the error recorded; failing enforced invariants are reported as
/// [`TcsError::Invariant`] after all files are written.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest> {
    run_sweep(cfg, dir, None)
}

/// Like [`run`], overriding the sweep list (the scenario becomes `epsilon-sweep`).
pub fn run_sweep(cfg: &ExperimentConfig, dir: &Path, epsilons: Option<&[f64]>) -> Result<RunManifest> {
    let mut cfg = cfg.clone();
    if let Some(e) = epsilons {
        cfg.scenario = Scenario::EpsilonSweep;
        cfg.sweep.epsilons = e.to_vec();
    }
    let warnings = cfg.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut manifest = RunManifest::start(&cfg, warnings)?;
    manifest.write(dir)?;
    let clock = Instant::now();
    let mut out = Emitted::default();
    let result = in_pool(cfg.reduction, || match cfg.scenario {
        Scenario::BackgroundOnly => scenario_background(&cfg, dir, &mut out).map(|_| ()),
        Scenario::MacroStrong | Scenario::MacroWeak => scenario_macro(&cfg, dir, &mut out),
        Scenario::Kinetic => scenario_kinetic(&cfg, dir, &mut out),
        Scenario::Particle => scenario_particle(&cfg, dir, &mut out),
        Scenario::EpsilonSweep => scenario_sweep(&cfg, dir, &mut out, &cfg.sweep.epsilons),
    })
    .and_then(|r| r);
    manifest.files = out.files;
    manifest.wall_clock_s = clock.elapsed().as_secs_f64();
    if let Err(e) = result {
        manifest.error = Some(e.to_string());
        manifest.write(dir)?;
        return Err(e);
    }
    manifest.invariants = stored_invariants(dir, &manifest)?;
    manifest.incomplete = false;
    manifest.write(dir)?;
    let bad = manifest.violations();
    if !bad.is_empty() {
        let names: Vec<_> = bad.iter().map(|c| c.name.as_str()).collect();
        return Err(TcsError::Invariant(format!(
            "{} (see {})",
            names.join(", "),
            dir.join(MANIFEST_NAME).display()
        )));
    }
    Ok(manifest)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| TcsError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn rel_drift(series: &[f64], scale: f64) -> f64 {
    let s = if scale > 0.0 { scale } else { 1.0 };
    series.iter().map(|v| (v - series[0]).abs()).fold(0.0, f64::max) / s
}

fn has(manifest: &RunManifest, rel: &str) -> bool {
    manifest.files.iter().any(|f| f.path == rel)
}

fn kinetic_invariants(dir: &Path, prefix: &str, manifest: &RunManifest, checks: &mut Vec<InvariantCheck>) -> Result<()> {
    let a: KineticAnalysis = read_json(&dir.join(format!("{prefix}kinetic_diagnostics.json")))?;
    let series = read_csv(&dir.join(format!("{prefix}kinetic_series.csv")))?;
    let (lo, hi) = (series.column("theta_min")?, series.column("theta_max")?);
    let violations = lo
        .iter()
        .zip(&hi)
        .filter(|(l, h)| **l < a.theta_m || **h > a.theta_big_m)
        .count();
    let tag = |s: &str| format!("{prefix}{s}");
    checks.push(InvariantCheck::at_most(&tag("theta_confinement_violations"), violations as f64, 0.0));
    if let Some(v) = a.exp_bound_violations {
        checks.push(InvariantCheck::at_most(&tag("theta_exponential_bound_violations"), v as f64, 0.0));
    }
    if let Some(b) = a.budget {
        checks.push(InvariantCheck::at_most(&tag("moment_lemma_margin"), b.lemma_lhs - b.lemma_rhs, 0.0));
        checks.push(InvariantCheck::at_most(
            &tag("moment_corollary_margin"),
            b.corollary_lhs - b.corollary_rhs,
            0.0,
        ));
    }
    if let Some((vm, rv)) = a.velocity_bound {
        checks.push(InvariantCheck::at_most(&tag("weak_velocity_support"), rv, vm));
    }
    for f in manifest
        .files
        .iter()
        .filter(|f| f.path.starts_with(&format!("{prefix}kinetic_particles_t")))
    {
        let w: f64 = read_csv(&dir.join(&f.path))?.column("weight")?.iter().sum();
        checks.push(InvariantCheck::at_most(&format!("{}_mass_error", f.path), (w - 1.0).abs(), 1e-12));
    }
    Ok(())
}

/// Invariants recomputed from the files of a run directory.
pub fn stored_invariants(dir: &Path, manifest: &RunManifest) -> Result<Vec<InvariantCheck>> {
    let mut checks = vec![];
    if has(manifest, "background_series.csv") {
        let t = read_csv(&dir.join("background_series.csv"))?;
        for name in ["mass", "momentum", "energy"] {
            let c = t.column(name)?;
            let scale = c[0].abs();
            checks.push(InvariantCheck::at_most(&format!("background_{name}_drift"), rel_drift(&c, scale), 1e-10));
        }
        let d: BackgroundDiagnostics = read_json(&dir.join("background_diagnostics.json"))?;
        checks.push(InvariantCheck::at_most("background_envelope_excursion", d.max_envelope_excursion, 1e-6));
        checks.push(InvariantCheck::flag("background_density_positive", d.min_rho > 0.0));
    }
    if has(manifest, "macro_series.csv") {
        let r = read_csv(&dir.join("macro_series.csv"))?.column("R")?;
        checks.push(InvariantCheck::flag(
            "order_parameter_in_unit_interval",
            r.iter().all(|v| (0.0..=1.0).contains(v)),
        ));
        let d: MacroDiagnostics = read_json(&dir.join("macro_diagnostics.json"))?;
        checks.push(InvariantCheck::at_most("transport_clip", d.max_clip, 1e-8));
        checks.push(InvariantCheck::at_most(
            "transport_mass_drift_per_time",
            d.max_mass_error / d.t_end.max(1.0),
            1e-12,
        ));
        for f in manifest.files.iter().filter(|f| f.path.starts_with("macro_snapshot_t")) {
            let rho = read_csv(&dir.join(&f.path))?.column("rho")?;
            let g = GridFn1D::new(rho);
            checks.push(InvariantCheck::at_most(&format!("{}_mass_error", f.path), (g.integral() - 1.0).abs(), 1e-10));
            checks.push(InvariantCheck::flag(&format!("{}_nonnegative", f.path), g.min() >= 0.0));
        }
    }
    if has(manifest, "kinetic_series.csv") {
        kinetic_invariants(dir, "", manifest, &mut checks)?;
    }
    for e in manifest.config.epsilons() {
        let prefix = format!("eps_{e}/");
        if manifest.config.scenario == Scenario::EpsilonSweep && has(manifest, &format!("{prefix}kinetic_series.csv")) {
            kinetic_invariants(dir, &prefix, manifest, &mut checks)?;
        }
    }
    if has(manifest, "sweep.json") {
        let c: LimitComparison = read_json(&dir.join("sweep.json"))?;
        let again = LimitComparison::new(c.epsilons.clone(), c.snapshots.clone(), c.distances.clone(), c.rate_fits.clone())?;
        checks.push(InvariantCheck::flag("sweep_monotone_in_epsilon", again.all_monotone()).advisory());
    }
    if has(manifest, "particle_series.csv") {
        let p = &manifest.config.particle;
        let t = read_csv(&dir.join("particle_series.csv"))?;
        let traj = read_csv(&dir.join("particle_trajectory.csv"))?;
        let (t0, v0) = (traj.column("t")?, traj.column("v")?);
        let scale: f64 = t0.iter().zip(&v0).filter(|(t, _)| **t == 0.0).map(|(_, v)| v.abs()).sum();
        if p.n2 == 0 {
            checks.push(InvariantCheck::at_most("particle_velocity_sum_drift", rel_drift(&t.column("sum_v1")?, scale), 1e-8));
            let st = t.column("sum_theta1")?;
            checks.push(InvariantCheck::at_most("particle_theta_sum_drift", rel_drift(&st, st[0].abs()), 1e-8));
            let (lo, hi) = (t.column("theta_min1")?, t.column("theta_max1")?);
            let ok = lo.iter().all(|&l| l >= lo[0] - 1e-12) && hi.iter().all(|&h| h <= hi[0] + 1e-12);
            checks.push(InvariantCheck::flag("particle_theta_confinement", ok));
        } else {
            checks.push(InvariantCheck::at_most("particle_momentum_drift", rel_drift(&t.column("momentum")?, scale), 1e-8));
        }
    }
    Ok(checks)
}

/// Result of re-verifying a stored run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub manifest: PathBuf,
    pub checks: Vec<InvariantCheck>,
}

impl CheckReport {
    pub fn failures(&self) -> Vec<&InvariantCheck> {
        self.checks.iter().filter(|c| c.enforced && !c.passed).collect()
    }
}

/// Re-verifies a stored run: completeness, file inventory and hashes, and the
/// invariant suite recomputed from the stored outputs.
pub fn check(manifest_path: &Path) -> Result<CheckReport> {
    let manifest = RunManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut checks = vec![InvariantCheck::flag("run_complete", !manifest.incomplete)];
    for f in &manifest.files {
        let p = dir.join(&f.path);
        let ok = p.exists() && sha256_file(&p)? == f.sha256;
        checks.push(InvariantCheck::flag(&format!("{}_intact", f.path), ok));
        if ok && f.path.ends_with(".csv") {
            let rows = read_csv(&p)?.rows.len();
            checks.push(InvariantCheck::flag(&format!("{}_rows", f.path), rows == f.rows));
        }
    }
    if checks.iter().all(|c| c.passed) {
        checks.extend(stored_invariants(dir, &manifest)?);
    }
    Ok(CheckReport {
        manifest: manifest_path.to_path_buf(),
        checks,
    })
}
