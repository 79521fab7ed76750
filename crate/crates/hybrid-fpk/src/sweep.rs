//! One-parameter sweeps of the stationary theta marginal with stability flags.

use rayon::prelude::*;

use crate::assembly::{AssembledSystem, MassMode};
use crate::chain::{marginal_theta, stationary, NullMethod, Stationary};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, Domain, Mesh};
use crate::model::{derive_system, ModelParams};
use crate::montecarlo::{ensemble_at, McConfig, Method};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Delta,
    Sigma,
    Ratio,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Self::Delta),
            "sigma" => Ok(Self::Sigma),
            "ratio" => Ok(Self::Ratio),
            _ => Err(Error::Config(format!("unknown sweep parameter '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Delta => "delta",
            Self::Sigma => "sigma",
            Self::Ratio => "ratio",
        }
    }

    /// Documented range of the axis.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Self::Delta => (0.0, 0.5),
            Self::Sigma => (0.0, 0.5),
            Self::Ratio => (0.45, 0.95),
        }
    }

    pub fn apply(&self, base: &ModelParams, v: f64) -> Result<ModelParams> {
        match self {
            Self::Delta => Ok(ModelParams {
                delta: v,
                ..base.clone()
            }),
            Self::Sigma => Ok(ModelParams {
                sigma: v,
                ..base.clone()
            }),
            Self::Ratio => base.with_ratio(v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMethod {
    Chain,
    McSode,
    McSdde,
}

impl SweepMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Self::Chain),
            "mc-sode" => Ok(Self::McSode),
            "mc-sdde" => Ok(Self::McSdde),
            _ => Err(Error::Config(format!("unknown sweep method '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Chain => "chain",
            Self::McSode => "mc-sode",
            Self::McSdde => "mc-sdde",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Unreliable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshSpec {
    pub domain: Domain,
    pub dtheta: f64,
    pub domega: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            domain: Domain::default(),
            dtheta: 0.0005,
            domega: 0.0002,
        }
    }
}

impl MeshSpec {
    pub fn desk() -> Self {
        Self {
            dtheta: 0.002,
            domega: 0.0008,
            ..Self::default()
        }
    }

    pub fn build(&self, a: f64) -> Result<Mesh> {
        build_mesh(self.domain, self.dtheta, self.domega, a)
    }
}

/// Thresholds behind the stability flags.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub mesh: MeshSpec,
    pub mc: McConfig,
    /// Chain: weighted negative (clipped or not) mass fraction above which
    /// the stationary density is called unstable.
    pub clipped_limit: f64,
    /// MC: divergent path fraction above which the point is unstable.
    pub diverge_limit: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            mesh: MeshSpec::default(),
            mc: McConfig::default(),
            clipped_limit: 0.05,
            diverge_limit: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub stability: Stability,
    /// Unit-mass theta marginal on the mesh theta nodes; None when flagged.
    pub marginal: Option<Vec<f64>>,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub param: SweepParam,
    pub method: SweepMethod,
    pub theta: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn chain_stationary(params: &ModelParams, mesh: &Mesh) -> Result<(AssembledSystem, Stationary)> {
    let sys = derive_system(params)?;
    let asm = AssembledSystem::new(mesh, &sys, 0.0, MassMode::Consistent)?;
    let st = stationary(&asm, NullMethod::Auto)?;
    Ok((asm, st))
}

fn chain_point(params: &ModelParams, s: &SweepSettings) -> Result<(Stability, Option<Vec<f64>>, String)> {
    let mesh = s.mesh.build(params.a)?;
    let (_, st) = match chain_stationary(params, &mesh) {
        Ok(v) => v,
        Err(e @ Error::IllPosed { .. }) => return Ok((Stability::Unstable, None, e.to_string())),
        Err(e) => return Err(e),
    };
    let bad = st.clipped_mass + st.negative_mass;
    let note = format!("negative_mass={:.3e} sigma2={:.3e}", bad, st.sigma2);
    if bad > s.clipped_limit {
        return Ok((Stability::Unstable, None, note));
    }
    let (_, m) = marginal_theta(&mesh, &st.p.values);
    Ok((Stability::Stable, Some(normalize(m, s.mesh.dtheta)), note))
}

fn normalize(mut m: Vec<f64>, h: f64) -> Vec<f64> {
    let z = crate::chain::integrate(&m, h);
    if z > 0.0 {
        m.iter_mut().for_each(|v| *v /= z);
    }
    m
}

fn mc_point(params: &ModelParams, method: Method, s: &SweepSettings, n_theta: usize, theta0: f64) -> Result<(Stability, Option<Vec<f64>>, String)> {
    let ends = ensemble_at(params, &s.mc, method, s.mc.steps())?;
    let div = ends.iter().filter(|e| e.is_none()).count() as f64 / ends.len() as f64;
    let note = format!("diverged={div:.3}");
    if div > s.diverge_limit {
        return Ok((Stability::Unstable, None, note));
    }
    let h = s.mesh.dtheta;
    let mut m = vec![0.0; n_theta];
    for x in ends.iter().flatten() {
        let i = ((x[0] - theta0) / h).round();
        if i >= 0.0 && (i as usize) < n_theta {
            m[i as usize] += 1.0;
        }
    }
    Ok((Stability::Stable, Some(normalize(m, h)), note))
}

/// Classifies one parameter point.
pub fn stability_probe(params: &ModelParams, method: SweepMethod, s: &SweepSettings) -> Result<Stability> {
    Ok(match method {
        SweepMethod::Chain => {
            if params.sigma == 0.0 {
                Stability::Unreliable
            } else {
                chain_point(params, s)?.0
            }
        }
        SweepMethod::McSode => mc_point(params, Method::Sode, s, 1, 0.0)?.0,
        SweepMethod::McSdde => mc_point(params, Method::Sdde, s, 1, 0.0)?.0,
    })
}

/// Runs every point; failures are recorded per point and the sweep goes on.
pub fn sweep(param: SweepParam, values: &[f64], base: &ModelParams, method: SweepMethod, s: &SweepSettings) -> Result<SweepResult> {
    let probe = s.mesh.build(base.a)?;
    let theta: Vec<f64> = (0..probe.n_theta).map(|i| probe.theta(i)).collect();
    let theta0 = theta[0];
    let nt = theta.len();
    let run = |v: f64| -> SweepPoint {
        let res = param.apply(base, v).and_then(|p| match method {
            SweepMethod::Chain if p.sigma == 0.0 => Ok((Stability::Unreliable, None, "sigma=0".to_string())),
            SweepMethod::Chain => chain_point(&p, s),
            SweepMethod::McSode => mc_point(&p, Method::Sode, s, nt, theta0),
            SweepMethod::McSdde => mc_point(&p, Method::Sdde, s, nt, theta0),
        });
        match res {
            Ok((stability, marginal, note)) => SweepPoint {
                value: v,
                stability,
                marginal,
                note,
            },
            Err(e) => SweepPoint {
                value: v,
                stability: Stability::Unstable,
                marginal: None,
                note: e.to_string(),
            },
        }
    };
    let points = match method {
        SweepMethod::Chain => values.par_iter().map(|&v| run(v)).collect(),
        // paths are already parallel
        _ => values.iter().map(|&v| run(v)).collect(),
    };
    Ok(SweepResult {
        param,
        method,
        theta,
        points,
    })
}
