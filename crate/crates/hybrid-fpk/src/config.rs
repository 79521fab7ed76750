//! Run configuration: built-in presets overlaid by a TOML file and
//! `--set section.key=value` overrides. Unknown keys are rejected.

use serde::Deserialize;

use crate::assembly::MassMode;
use crate::chain::NullMethod;
use crate::error::{Error, Result};
use crate::io::fmt_g17;
use crate::mesh::Domain;
use crate::model::{slope_from_ratio, ModelParams};
use crate::montecarlo::{McConfig, Method};
use crate::sweep::{linspace, MeshSpec, SweepMethod, SweepParam, SweepSettings};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelSection>,
    mesh: Option<MeshSection>,
    sim: Option<SimSection>,
    mc: Option<McSection>,
    sweep: Option<SweepSection>,
    psd: Option<PsdSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct ModelSection {
    m: Option<f64>,
    h: Option<f64>,
    g: Option<f64>,
    I: Option<f64>,
    K: Option<f64>,
    K_mgh_ratio: Option<f64>,
    B: Option<f64>,
    P: Option<f64>,
    P_mgh_ratio: Option<f64>,
    D: Option<f64>,
    a: Option<f64>,
    ratio: Option<f64>,
    delta: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSection {
    theta_min: Option<f64>,
    theta_max: Option<f64>,
    omega_min: Option<f64>,
    omega_max: Option<f64>,
    dtheta: Option<f64>,
    domega: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    dt: Option<f64>,
    snapshots: Option<Vec<f64>>,
    init_mean: Option<[f64; 2]>,
    init_std: Option<[f64; 2]>,
    mass: Option<String>,
    null_method: Option<String>,
    export_kdag: Option<bool>,
    export_psi: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct McSection {
    paths: Option<usize>,
    t_end: Option<f64>,
    dt: Option<f64>,
    seed: Option<u64>,
    record_stride: Option<usize>,
    method: Option<String>,
    bounds_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    param: Option<String>,
    method: Option<String>,
    values: Option<Vec<f64>>,
    min: Option<f64>,
    max: Option<f64>,
    count: Option<usize>,
    clipped_limit: Option<f64>,
    diverge_limit: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PsdSection {
    horizon_s: Option<f64>,
    max_lags: Option<usize>,
    f_lo: Option<f64>,
    f_hi: Option<f64>,
    mc: Option<bool>,
    mc_paths: Option<usize>,
    mc_segment_s: Option<f64>,
    mc_burn_in_s: Option<f64>,
    mc_dt: Option<f64>,
    mc_sample_stride: Option<usize>,
    mc_method: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub snapshots: Vec<f64>,
    pub init_mean: [f64; 2],
    pub init_std: [f64; 2],
    pub mass: MassMode,
    pub null_method: NullMethod,
    pub export_kdag: bool,
    pub export_psi: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRun {
    pub cfg: McConfig,
    pub method: Method,
    pub bounds_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub param: SweepParam,
    pub method: SweepMethod,
    pub values: Vec<f64>,
    pub clipped_limit: f64,
    pub diverge_limit: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdRun {
    pub horizon_s: f64,
    pub max_lags: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub mc: bool,
    pub mc_paths: usize,
    pub mc_segment_s: f64,
    pub mc_burn_in_s: f64,
    pub mc_dt: f64,
    pub mc_sample_stride: usize,
    pub mc_method: Method,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub mesh: MeshSpec,
    pub sim: SimConfig,
    pub mc: McRun,
    pub sweep: SweepRun,
    pub psd: PsdRun,
}

fn parse_method(s: &str, key: &str) -> Result<Method> {
    match s {
        "sode" => Ok(Method::Sode),
        "sdde" => Ok(Method::Sdde),
        _ => Err(Error::Config(format!("{key} '{s}' (expected sode or sdde)"))),
    }
}

impl RunConfig {
    /// Full-scale defaults.
    pub fn full() -> Self {
        Self {
            model: ModelParams::default(),
            mesh: MeshSpec::default(),
            sim: SimConfig {
                dt: 1e-4,
                snapshots: vec![0.0, 0.5, 1.0, 5.0, 10.0, 50.0],
                init_mean: [0.01, 0.0],
                init_std: [0.001, 0.001],
                mass: MassMode::Consistent,
                null_method: NullMethod::Auto,
                export_kdag: false,
                export_psi: false,
            },
            mc: McRun {
                cfg: McConfig {
                    paths: 50_000,
                    t_end: 50.0,
                    dt: 1e-4,
                    record_stride: 500_000,
                    ..McConfig::default()
                },
                method: Method::Sode,
                bounds_scale: 2.0,
            },
            sweep: SweepRun {
                param: SweepParam::Ratio,
                method: SweepMethod::Chain,
                values: linspace(0.45, 0.95, 26),
                clipped_limit: 0.05,
                diverge_limit: 0.5,
            },
            psd: PsdRun {
                horizon_s: 120.0,
                max_lags: 16_384,
                f_lo: 0.03,
                f_hi: 0.3,
                mc: false,
                mc_paths: 50,
                mc_segment_s: 120.0,
                mc_burn_in_s: 30.0,
                mc_dt: 1e-4,
                mc_sample_stride: 100,
                mc_method: Method::Sdde,
            },
        }
    }

    /// Scaled-down preset for quick runs.
    pub fn desk() -> Self {
        let mut c = Self::full();
        c.mesh = MeshSpec::desk();
        c.sim.dt = DESK_DT;
        c.mc.cfg.paths = 10_000;
        c.mc.cfg.dt = 1e-3;
        c.mc.cfg.record_stride = 50_000;
        c.psd.mc_dt = 1e-3;
        c.psd.mc_sample_stride = 10;
        c.sweep.values = linspace(0.45, 0.95, 26);
        c
    }

    pub fn load(path: Option<&std::path::Path>, overrides: &[String], desk: bool) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let file: FileConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut c = if desk { Self::desk() } else { Self::full() };
        c.overlay(file)?;
        c.validate()?;
        Ok(c)
    }

    fn overlay(&mut self, f: FileConfig) -> Result<()> {
        if let Some(m) = f.model {
            let p = &mut self.model;
            set(&mut p.m, m.m);
            set(&mut p.h, m.h);
            set(&mut p.g, m.g);
            p.i = m.I.unwrap_or(p.m * p.h * p.h);
            let mgh = p.m * p.g * p.h;
            p.k = match (m.K_mgh_ratio, m.K) {
                (Some(r), _) => r * mgh,
                (None, Some(k)) => k,
                (None, None) => 0.8 * mgh,
            };
            p.p = match (m.P_mgh_ratio, m.P) {
                (Some(r), _) => r * mgh,
                (None, Some(v)) => v,
                (None, None) => 0.25 * mgh,
            };
            set(&mut p.b, m.B);
            set(&mut p.d, m.D);
            set(&mut p.a, m.a);
            if let Some(r) = m.ratio {
                p.a = slope_from_ratio(r).map_err(|e| Error::Config(e.to_string()))?;
            }
            set(&mut p.delta, m.delta);
            set(&mut p.sigma, m.sigma);
        }
        if let Some(m) = f.mesh {
            let d = &mut self.mesh.domain;
            set(&mut d.theta_min, m.theta_min);
            set(&mut d.theta_max, m.theta_max);
            set(&mut d.omega_min, m.omega_min);
            set(&mut d.omega_max, m.omega_max);
            set(&mut self.mesh.dtheta, m.dtheta);
            set(&mut self.mesh.domega, m.domega);
        }
        if let Some(s) = f.sim {
            let c = &mut self.sim;
            set(&mut c.dt, s.dt);
            set(&mut c.snapshots, s.snapshots);
            set(&mut c.init_mean, s.init_mean);
            set(&mut c.init_std, s.init_std);
            if let Some(m) = s.mass {
                c.mass = match m.as_str() {
                    "consistent" => MassMode::Consistent,
                    "lumped" => MassMode::Lumped,
                    _ => return Err(Error::Config(format!("sim.mass '{m}'"))),
                };
            }
            if let Some(m) = s.null_method {
                c.null_method = match m.as_str() {
                    "auto" => NullMethod::Auto,
                    "inverse" => NullMethod::InverseIteration,
                    "svd" => NullMethod::DenseSvd,
                    _ => return Err(Error::Config(format!("sim.null_method '{m}'"))),
                };
            }
            set(&mut c.export_kdag, s.export_kdag);
            set(&mut c.export_psi, s.export_psi);
        }
        if let Some(m) = f.mc {
            let c = &mut self.mc;
            set(&mut c.cfg.paths, m.paths);
            set(&mut c.cfg.t_end, m.t_end);
            set(&mut c.cfg.dt, m.dt);
            set(&mut c.cfg.seed, m.seed);
            set(&mut c.cfg.record_stride, m.record_stride);
            set(&mut c.bounds_scale, m.bounds_scale);
            if let Some(s) = m.method {
                c.method = parse_method(&s, "mc.method")?;
            }
        }
        if let Some(s) = f.sweep {
            let c = &mut self.sweep;
            if let Some(p) = s.param {
                c.param = SweepParam::parse(&p)?;
                let (lo, hi) = c.param.range();
                c.values = linspace(lo, hi, 26);
            }
            if let Some(m) = s.method {
                c.method = SweepMethod::parse(&m)?;
            }
            if s.min.is_some() || s.max.is_some() || s.count.is_some() {
                let (lo, hi) = c.param.range();
                c.values = linspace(s.min.unwrap_or(lo), s.max.unwrap_or(hi), s.count.unwrap_or(26));
            }
            set(&mut c.values, s.values);
            set(&mut c.clipped_limit, s.clipped_limit);
            set(&mut c.diverge_limit, s.diverge_limit);
        }
        if let Some(s) = f.psd {
            let c = &mut self.psd;
            set(&mut c.horizon_s, s.horizon_s);
            set(&mut c.max_lags, s.max_lags);
            set(&mut c.f_lo, s.f_lo);
            set(&mut c.f_hi, s.f_hi);
            set(&mut c.mc, s.mc);
            set(&mut c.mc_paths, s.mc_paths);
            set(&mut c.mc_segment_s, s.mc_segment_s);
            set(&mut c.mc_burn_in_s, s.mc_burn_in_s);
            set(&mut c.mc_dt, s.mc_dt);
            set(&mut c.mc_sample_stride, s.mc_sample_stride);
            if let Some(m) = s.mc_method {
                c.mc_method = parse_method(&m, "psd.mc_method")?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.model.validate().map_err(cfg)?;
        self.mesh.build(self.model.a).map_err(cfg)?;
        if !(self.sim.dt > 0.0) {
            return Err(Error::Config("sim.dt must be positive".into()));
        }
        if self.sim.snapshots.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("sim.snapshots must be nonnegative".into()));
        }
        if !(self.sim.init_std[0] > 0.0 && self.sim.init_std[1] > 0.0) {
            return Err(Error::Config("sim.init_std must be positive".into()));
        }
        self.mc_config().validate().map_err(cfg)?;
        if !(self.mc.bounds_scale >= 1.0) {
            return Err(Error::Config("mc.bounds_scale must be at least 1".into()));
        }
        let (lo, hi) = self.sweep.param.range();
        if self.sweep.values.is_empty() || self.sweep.values.iter().any(|v| *v < lo || *v > hi) {
            return Err(Error::Config(format!(
                "sweep values must lie in [{lo}, {hi}] for {}",
                self.sweep.param.name()
            )));
        }
        let p = &self.psd;
        if !(p.horizon_s > 0.0 && p.max_lags >= 8 && p.f_lo > 0.0 && p.f_hi > p.f_lo) {
            return Err(Error::Config("invalid [psd] settings".into()));
        }
        if !(p.mc_dt > 0.0 && p.mc_segment_s > 0.0 && p.mc_burn_in_s >= 0.0 && p.mc_paths >= 1 && p.mc_sample_stride >= 1) {
            return Err(Error::Config("invalid [psd] Monte Carlo settings".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        self.mesh.domain
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            init_mean: self.sim.init_mean,
            init_std: self.sim.init_std,
            bounds: self.mesh.domain.scaled(self.mc.bounds_scale),
            ..self.mc.cfg.clone()
        }
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            mesh: self.mesh.clone(),
            mc: self.mc_config(),
            clipped_limit: self.sweep.clipped_limit,
            diverge_limit: self.sweep.diverge_limit,
        }
    }

    /// Resolved configuration as section.key=value pairs.
    pub fn entries(&self) -> Vec<(String, String)> {
        let g = |v: f64| fmt_g17(v);
        let list = |v: &[f64]| format!("[{}]", v.iter().map(|x| fmt_g17(*x)).collect::<Vec<_>>().join(", "));
        let m = &self.model;
        let mut e: Vec<(&str, String)> = vec![
            ("model.m", g(m.m)),
            ("model.h", g(m.h)),
            ("model.g", g(m.g)),
            ("model.I", g(m.i)),
            ("model.K", g(m.k)),
            ("model.B", g(m.b)),
            ("model.P", g(m.p)),
            ("model.D", g(m.d)),
            ("model.a", g(m.a)),
            ("model.delta", g(m.delta)),
            ("model.sigma", g(m.sigma)),
        ];
        let d = &self.mesh.domain;
        e.extend([
            ("mesh.theta_min", g(d.theta_min)),
            ("mesh.theta_max", g(d.theta_max)),
            ("mesh.omega_min", g(d.omega_min)),
            ("mesh.omega_max", g(d.omega_max)),
            ("mesh.dtheta", g(self.mesh.dtheta)),
            ("mesh.domega", g(self.mesh.domega)),
        ]);
        let s = &self.sim;
        e.extend([
            ("sim.dt", g(s.dt)),
            ("sim.snapshots", list(&s.snapshots)),
            ("sim.init_mean", list(&s.init_mean)),
            ("sim.init_std", list(&s.init_std)),
            ("sim.mass", format!("{:?}", s.mass).to_lowercase()),
            ("sim.null_method", format!("{:?}", s.null_method).to_lowercase()),
            ("sim.export_kdag", s.export_kdag.to_string()),
            ("sim.export_psi", s.export_psi.to_string()),
        ]);
        let c = &self.mc;
        e.extend([
            ("mc.paths", c.cfg.paths.to_string()),
            ("mc.t_end", g(c.cfg.t_end)),
            ("mc.dt", g(c.cfg.dt)),
            ("mc.seed", c.cfg.seed.to_string()),
            ("mc.record_stride", c.cfg.record_stride.to_string()),
            ("mc.method", format!("{:?}", c.method).to_lowercase()),
            ("mc.bounds_scale", g(c.bounds_scale)),
        ]);
        let w = &self.sweep;
        e.extend([
            ("sweep.param", w.param.name().to_string()),
            ("sweep.method", w.method.name().to_string()),
            ("sweep.values", list(&w.values)),
            ("sweep.clipped_limit", g(w.clipped_limit)),
            ("sweep.diverge_limit", g(w.diverge_limit)),
        ]);
        let p = &self.psd;
        e.extend([
            ("psd.horizon_s", g(p.horizon_s)),
            ("psd.max_lags", p.max_lags.to_string()),
            ("psd.f_lo", g(p.f_lo)),
            ("psd.f_hi", g(p.f_hi)),
            ("psd.mc", p.mc.to_string()),
            ("psd.mc_paths", p.mc_paths.to_string()),
            ("psd.mc_segment_s", g(p.mc_segment_s)),
            ("psd.mc_burn_in_s", g(p.mc_burn_in_s)),
            ("psd.mc_dt", g(p.mc_dt)),
            ("psd.mc_sample_stride", p.mc_sample_stride.to_string()),
            ("psd.mc_method", format!("{:?}", p.mc_method).to_lowercase()),
        ]);
        e.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Chain time step of the desk preset.
pub const DESK_DT: f64 = 1e-3;

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

fn apply_override(table: &mut toml::Table, o: &str) -> Result<()> {
    let (path, raw) = o
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{o}' is not section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override '{o}' is not section.key=value")))?;
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let sec = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match sec {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("'{section}' is not a section"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_keys_win() {
        let c = RunConfig::load(
            None,
            &["model.K=100.0".into(), "model.K_mgh_ratio=0.5".into()],
            true,
        )
        .unwrap();
        assert!((c.model.k - 0.5 * 588.6).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::load(None, &["model.bogus=1".into()], true).is_err());
        assert!(RunConfig::load(None, &["nosection.x=1".into()], true).is_err());
        assert!(RunConfig::load(None, &["sim.dt=-1".into()], true).is_err());
    }

    #[test]
    fn desk_preset() {
        let c = RunConfig::load(None, &[], true).unwrap();
        assert_eq!(c.mesh.dtheta, 0.002);
        assert_eq!(c.mc.cfg.paths, 10_000);
        let p = RunConfig::load(None, &[], false).unwrap();
        assert_eq!(p.mesh.dtheta, 0.0005);
    }
}
