//! Command-line front end. Every command writes its outputs plus `run.meta`
//! into the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{build_kdag, build_transition, toy, min_entry_probe, AssembledSystem};
use crate::chain::{
    center_of_mass, evolve, gaussian_initial, marginal_theta, stationary, steps_for_times, to_grid,
    Stationary,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{fmt_g17, matrix_pgm, sparse_text, write_csv, write_csv_rows, write_meta, Grid};
use crate::mesh::Mesh;
use crate::model::{derive_system, ratio_from_slope};
use crate::montecarlo::{compare_cells, ensemble_at, ensemble_histogram, grid_cell_averages, psd_welch, theta_series, Method};
use crate::spectral::{chain_spectrum, loglog_slope};
use crate::sweep::{sweep, Stability, SweepMethod};

#[derive(Parser, Debug)]
#[command(name = "hybrid-fpk", version, about = "Markov-chain FEM for switched Fokker-Planck equations")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set model.sigma=0.3` (repeatable).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Scaled-down preset: coarse mesh, fewer and longer-step MC paths.
    #[arg(long, global = true)]
    pub desk: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print mesh and region statistics.
    MeshInfo,
    /// Evolve the initial Gaussian and write snapshots.
    Evolve,
    /// Stationary density and its theta marginal.
    Stationary,
    /// Autocorrelation and PSD of theta (chain route, optional MC route).
    Psd,
    /// Monte Carlo ensemble histogram at mc.t_end.
    Mc,
    /// Parameter sweep of the stationary theta marginal.
    Sweep {
        /// Shorthand for `--set sweep.param=...`.
        #[arg(long)]
        param: Option<String>,
        /// Shorthand for `--set sweep.method=...` (chain, mc-sode, mc-sdde).
        #[arg(long)]
        method: Option<String>,
    },
    /// Distances between a nodal grid and a cell histogram grid.
    Compare {
        #[arg(long)]
        fem: PathBuf,
        #[arg(long)]
        mc: PathBuf,
    },
    /// Check the duplicated-row elimination on the four-state toy chain.
    ToyCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

type Meta = Vec<(String, String)>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let mut overrides = c.set.clone();
    if let Command::Sweep { param, method } = &cli.command {
        if let Some(p) = param {
            overrides.push(format!("sweep.param=\"{p}\""));
        }
        if let Some(m) = method {
            overrides.push(format!("sweep.method=\"{m}\""));
        }
    }
    let cfg = RunConfig::load(c.config.as_deref(), &overrides, c.desk)?;
    if let Some(n) = c.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&c.out)?;
    let start = Instant::now();
    let (name, extra) = match &cli.command {
        Command::MeshInfo => ("mesh-info", mesh_info(&cfg)?),
        Command::Evolve => ("evolve", cmd_evolve(&cfg, &c.out)?),
        Command::Stationary => ("stationary", cmd_stationary(&cfg, &c.out)?),
        Command::Psd => ("psd", cmd_psd(&cfg, &c.out)?),
        Command::Mc => ("mc", cmd_mc(&cfg, &c.out)?),
        Command::Sweep { .. } => ("sweep", cmd_sweep(&cfg, &c.out)?),
        Command::Compare { fem, mc } => ("compare", cmd_compare(fem, mc)?),
        Command::ToyCheck { trials, seed } => ("toy-check", toy_check(*trials, *seed)?),
    };
    let mut meta: Meta = vec![
        ("command".into(), name.into()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("desk".into(), c.desk.to_string()),
        ("workers".into(), rayon::current_num_threads().to_string()),
        (
            "config_file".into(),
            c.config.as_ref().map_or("none".into(), |p| p.display().to_string()),
        ),
    ];
    for (i, s) in c.set.iter().enumerate() {
        meta.push((format!("override.{i}"), s.clone()));
    }
    meta.extend(cfg.entries());
    meta.extend(extra);
    meta.push(("wall_time_s".into(), format!("{:.3}", start.elapsed().as_secs_f64())));
    write_meta(&c.out.join("run.meta"), &meta)
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn build(cfg: &RunConfig) -> Result<Mesh> {
    cfg.mesh.build(cfg.model.a)
}

fn node_grid(mesh: &Mesh, values: Vec<f64>) -> Grid {
    Grid {
        theta_min: mesh.theta(0),
        theta_max: mesh.theta(mesh.n_theta - 1),
        n_theta: mesh.n_theta,
        omega_min: mesh.omega(0),
        omega_max: mesh.omega(mesh.n_omega - 1),
        n_omega: mesh.n_omega,
        values,
    }
}

fn write_grid(dir: &Path, stem: &str, g: &Grid) -> Result<()> {
    g.write(&dir.join(format!("{stem}.grid")))?;
    std::fs::write(dir.join(format!("{stem}.pgm")), g.to_pgm())?;
    Ok(())
}

fn mesh_info(cfg: &RunConfig) -> Result<Meta> {
    let mesh = build(cfg)?;
    let (snap_t, snap_o) = mesh.snapping_error();
    let rows = [
        kv("n_theta", mesh.n_theta),
        kv("n_omega", mesh.n_omega),
        kv("grid_nodes", mesh.n_theta * mesh.n_omega),
        kv("elements", mesh.n_elements()),
        kv("elements_on", mesh.regions[0].elements.len()),
        kv("elements_off", mesh.regions[1].elements.len()),
        kv("nodes_on", mesh.n_a()),
        kv("nodes_off", mesh.n_b()),
        kv("switching_nodes", mesh.n_s()),
        kv("chain_states", mesh.n_dedup()),
        kv("ratio", fmt_g17(ratio_from_slope(cfg.model.a))),
        kv("interface_offset_theta", fmt_g17(snap_t)),
        kv("interface_offset_omega", fmt_g17(snap_o)),
    ];
    for (k, v) in &rows {
        println!("{k} = {v}");
    }
    Ok(rows.to_vec())
}

fn assemble(cfg: &RunConfig, mesh: &Mesh, dt: f64) -> Result<AssembledSystem> {
    let sys = derive_system(&cfg.model)?;
    AssembledSystem::new(mesh, &sys, dt, cfg.sim.mass)
}

fn cmd_evolve(cfg: &RunConfig, out: &Path) -> Result<Meta> {
    let mesh = build(cfg)?;
    let asm = assemble(cfg, &mesh, cfg.sim.dt)?;
    let op = build_transition(&asm)?;
    let (p0, under) = gaussian_initial(&mesh, &asm, cfg.sim.init_mean, cfg.sim.init_std)?;
    if under {
        eprintln!("warning: initial standard deviation below two grid cells");
    }
    let min_rel = min_entry_probe(&op, 8);
    let steps = steps_for_times(&cfg.sim.snapshots, cfg.sim.dt);
    let snaps = evolve(&op, &asm, &p0, &steps)?;
    let mut t = Vec::new();
    let mut mass = Vec::new();
    let mut com_t = Vec::new();
    let mut com_o = Vec::new();
    let mut growth: f64 = 0.0;
    for (n, p) in &snaps {
        let time = *n as f64 * cfg.sim.dt;
        // sum c|p| is 1 for a nonnegative density; growth means the step is too long
        let l1: f64 = asm.c.iter().zip(&p.values).map(|(c, v)| c * v.abs()).sum();
        growth = growth.max(l1);
        let com = center_of_mass(&mesh, &asm, &p.values);
        write_grid(out, &format!("pdf_t{time}"), &node_grid(&mesh, to_grid(&mesh, &p.values)))?;
        println!(
            "t = {time} s  mass = {}  center = ({:.6e}, {:.6e})",
            fmt_g17(p.mass),
            com[0],
            com[1]
        );
        t.push(time);
        mass.push(p.mass);
        com_t.push(com[0]);
        com_o.push(com[1]);
    }
    if growth > 10.0 {
        eprintln!("warning: weighted L1 norm of the density reached {growth:.3}; reduce sim.dt");
    }
    write_csv(
        &out.join("evolve.csv"),
        &["time_s", "mass", "theta_mean", "omega_mean"],
        &[&t, &mass, &com_t, &com_o],
    )?;
    if cfg.sim.export_psi {
        std::fs::write(out.join("psi.txt"), sparse_text(&op.to_csr()))?;
    }
    let mut meta = vec![
        kv("chain_states", mesh.n_dedup()),
        kv("initial_under_resolved", under),
        kv("psi_min_entry_rel", fmt_g17(min_rel)),
        kv("max_weighted_l1", fmt_g17(growth)),
    ];
    if let Some(m) = mass.last() {
        meta.push(kv("final_mass", fmt_g17(*m)));
    }
    Ok(meta)
}

fn stationary_meta(st: &Stationary) -> Meta {
    vec![
        kv("null_method", format!("{:?}", st.method).to_lowercase()),
        kv("sigma1", fmt_g17(st.sigma1)),
        kv("sigma2", fmt_g17(st.sigma2)),
        kv("clipped_mass", fmt_g17(st.clipped_mass)),
        kv("negative_mass", fmt_g17(st.negative_mass)),
        kv("min_entry", fmt_g17(st.min_entry)),
    ]
}

fn cmd_stationary(cfg: &RunConfig, out: &Path) -> Result<Meta> {
    let mesh = build(cfg)?;
    let asm = assemble(cfg, &mesh, 0.0)?;
    let st = stationary(&asm, cfg.sim.null_method)?;
    write_grid(out, "stationary", &node_grid(&mesh, to_grid(&mesh, &st.p.values)))?;
    let (theta, m) = marginal_theta(&mesh, &st.p.values);
    write_csv(&out.join("marginal.csv"), &["theta_rad", "density"], &[&theta, &m])?;
    if cfg.sim.export_kdag {
        std::fs::write(out.join("kdag.txt"), sparse_text(&build_kdag(&asm)))?;
    }
    println!(
        "stationary: {} states, sigma2 = {:.3e}, clipped mass = {:.3e}, negative mass = {:.3e}",
        mesh.n_dedup(),
        st.sigma2,
        st.clipped_mass,
        st.negative_mass
    );
    Ok(stationary_meta(&st))
}

fn cmd_psd(cfg: &RunConfig, out: &Path) -> Result<Meta> {
    let mesh = build(cfg)?;
    let asm = assemble(cfg, &mesh, cfg.sim.dt)?;
    let st = stationary(&asm, cfg.sim.null_method)?;
    let op = build_transition(&asm)?;
    let sp = chain_spectrum(&op, &asm, &st.p.values, cfg.psd.horizon_s, cfg.psd.max_lags)?;
    write_csv(&out.join("psd.csv"), &["freq_hz", "psd"], &[&sp.freqs, &sp.psd])?;
    write_csv(&out.join("autocorr.csv"), &["lag_s", "autocorr"], &[&sp.lags, &sp.autocorr])?;
    let slope = loglog_slope(&sp.freqs, &sp.psd, cfg.psd.f_lo, cfg.psd.f_hi);
    let show = |s: Option<f64>| s.map_or("nan".to_string(), fmt_g17);
    println!("chain slope over [{}, {}] Hz: {}", cfg.psd.f_lo, cfg.psd.f_hi, show(slope));
    let mut meta = stationary_meta(&st);
    meta.extend([
        kv("lag_stride", sp.stride),
        kv("lags", sp.lags.len()),
        kv("theta_mean", fmt_g17(sp.mean)),
        kv("chain_slope", show(slope)),
    ]);
    if cfg.psd.mc {
        let (freqs, psd, skipped) = mc_psd(cfg)?;
        write_csv(&out.join("psd_mc.csv"), &["freq_hz", "psd"], &[&freqs, &psd])?;
        let s = loglog_slope(&freqs, &psd, cfg.psd.f_lo, cfg.psd.f_hi);
        let label = match cfg.psd.mc_method {
            Method::Sode => "S-ODE",
            Method::Sdde => "S-DDE",
        };
        println!("{label} slope over [{}, {}] Hz: {} ({skipped} paths skipped)", cfg.psd.f_lo, cfg.psd.f_hi, show(s));
        meta.extend([kv("mc_slope", show(s)), kv("mc_paths_skipped", skipped)]);
    }
    Ok(meta)
}

/// Welch-averaged periodogram of stationary theta paths (`psd.mc_method`).
pub fn mc_psd(cfg: &RunConfig) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let p = &cfg.psd;
    let mut mc = cfg.mc_config();
    mc.paths = p.mc_paths;
    mc.dt = p.mc_dt;
    mc.record_stride = p.mc_sample_stride;
    let series = theta_series(&cfg.model, &mc, p.mc_method, p.mc_burn_in_s, p.mc_segment_s)?;
    let sample_dt = p.mc_dt * p.mc_sample_stride as f64;
    let n = (p.mc_segment_s / sample_dt).round() as usize;
    let (sp, skipped) = psd_welch(&series, sample_dt, n)?;
    Ok((sp.freqs, sp.psd, skipped))
}

fn cmd_mc(cfg: &RunConfig, out: &Path) -> Result<Meta> {
    let mesh = build(cfg)?;
    let mc = cfg.mc_config();
    let ends = ensemble_at(&cfg.model, &mc, cfg.mc.method, mc.steps())?;
    let h = ensemble_histogram(&ends, &mesh)?;
    let cells: Vec<f64> = h.density.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
    let g = Grid {
        theta_min: mesh.theta(0) + 0.5 * mesh.dtheta,
        theta_max: mesh.theta(mesh.n_theta - 1) - 0.5 * mesh.dtheta,
        n_theta: mesh.n_theta - 1,
        omega_min: mesh.omega(0) + 0.5 * mesh.domega,
        omega_max: mesh.omega(mesh.n_omega - 1) - 0.5 * mesh.domega,
        n_omega: mesh.n_omega - 1,
        values: cells,
    };
    write_grid(out, "hist", &g)?;
    println!(
        "{} paths, {} diverged, {} outside the mesh at t = {} s",
        h.paths, h.diverged, h.outside, mc.t_end
    );
    Ok(vec![
        kv("paths", h.paths),
        kv("diverged", h.diverged),
        kv("outside", h.outside),
    ])
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Meta> {
    let s = &cfg.sweep;
    let r = sweep(s.param, &s.values, &cfg.model, s.method, &cfg.sweep_settings())?;
    let mut header = vec!["param".to_string()];
    header.extend(r.theta.iter().map(|t| fmt_g17(*t)));
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for p in &r.points {
        let mut row = vec![p.value];
        match &p.marginal {
            Some(m) => row.extend(m),
            None => row.extend(std::iter::repeat_n(-1.0, r.theta.len())),
        }
        rows.push(row);
        let code = match p.stability {
            Stability::Stable => 0.0,
            Stability::Unstable => 1.0,
            Stability::Unreliable => 2.0,
        };
        flags.push(vec![p.value, code]);
        println!("{} = {:.4}  {:?}  {}", r.param.name(), p.value, p.stability, p.note);
    }
    write_csv_rows(&out.join("sweep.csv"), &header, &rows)?;
    write_csv_rows(
        &out.join("sweep_flags.csv"),
        &["param".to_string(), "flag".to_string()],
        &flags,
    )?;
    // first value on the bottom row, like a y axis
    let img: Vec<Vec<f64>> = rows.iter().rev().map(|r| r[1..].to_vec()).collect();
    std::fs::write(out.join("sweep.pgm"), matrix_pgm(&img))?;
    let unstable = r.points.iter().filter(|p| p.stability != Stability::Stable).count();
    Ok(vec![kv("points", r.points.len()), kv("flagged", unstable), kv("method_tag", match r.method {
        SweepMethod::Chain => "chain",
        SweepMethod::McSode => "mc-sode",
        SweepMethod::McSdde => "mc-sdde",
    })])
}

fn cmd_compare(fem: &Path, mc: &Path) -> Result<Meta> {
    let f = Grid::read(fem)?;
    let h = Grid::read(mc)?;
    if f.n_theta < 2 || f.n_omega < 2 || h.n_theta + 1 != f.n_theta || h.n_omega + 1 != f.n_omega {
        return Err(Error::Format("histogram cells do not match the nodal grid".into()));
    }
    let dt = (f.theta_max - f.theta_min) / (f.n_theta - 1) as f64;
    let dw = (f.omega_max - f.omega_min) / (f.n_omega - 1) as f64;
    let off = (h.theta_min - f.theta_min - 0.5 * dt).abs() / dt + (h.omega_min - f.omega_min - 0.5 * dw).abs() / dw;
    if off > 1e-6 {
        return Err(Error::Format("histogram cells are not centred between grid nodes".into()));
    }
    let cells = grid_cell_averages(f.n_theta, f.n_omega, &f.values);
    let split = (0..h.n_theta)
        .filter(|&i| h.theta_min + i as f64 * dt < 0.0)
        .count();
    let d = compare_cells(h.n_theta, split, dt * dw, &cells, &h.values)?;
    println!(
        "l1={} hellinger={} peak_gap_cells={}",
        fmt_g17(d.l1),
        fmt_g17(d.hellinger),
        d.peak_gap
    );
    Ok(vec![
        kv("fem", fem.display()),
        kv("mc", mc.display()),
        kv("l1", fmt_g17(d.l1)),
        kv("hellinger", fmt_g17(d.hellinger)),
        kv("peak_gap_cells", d.peak_gap),
    ])
}

/// Random integer (rational over a common denominator) toy chains; returns
/// the worst residual.
pub fn toy_residual(trials: usize, seed: u64) -> i64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0;
    for _ in 0..trials {
        let mut e = [0i64; 25];
        e.iter_mut().for_each(|v| *v = rng.random_range(0..1000));
        worst = worst.max(toy::residual(&toy::redundant_from(&e)));
    }
    worst
}

fn toy_check(trials: usize, seed: u64) -> Result<Meta> {
    let r = toy_residual(trials, seed);
    println!("toy residual = {r} over {trials} random chains");
    if r != 0 {
        return Err(Error::Numerical(format!("toy residual {r} is not zero")));
    }
    Ok(vec![kv("trials", trials), kv("seed", seed), kv("residual", r)])
}
