//! Intermittent-control pendulum: parameters, on/off drift fields, region rule.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

/// Physical and control parameters. `i` is stored explicitly (default m h^2).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub h: f64,
    pub g: f64,
    pub i: f64,
    pub k: f64,
    pub b: f64,
    pub p: f64,
    pub d: f64,
    pub a: f64,
    pub delta: f64,
    pub sigma: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let (m, h, g) = (60.0, 1.0, 9.81);
        let mgh = m * g * h;
        Self {
            m,
            h,
            g,
            i: m * h * h,
            k: 0.8 * mgh,
            b: 4.0,
            p: 0.25 * mgh,
            d: 10.0,
            a: -0.4,
            delta: 0.2,
            sigma: 0.2,
        }
    }
}

impl ModelParams {
    pub fn mgh(&self) -> f64 {
        self.m * self.g * self.h
    }

    /// Effective inertia of the small-delay ODE.
    pub fn i_eff(&self) -> f64 {
        self.i - self.d * self.delta
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.h > 0.0 && self.g > 0.0 && self.i > 0.0) {
            return Err(Error::Param("m, h, g and I must be positive".into()));
        }
        if self.i_eff() <= 0.0 {
            return Err(Error::Param(format!(
                "I - D*delta = {} must be positive",
                self.i_eff()
            )));
        }
        if self.sigma < 0.0 || self.delta < 0.0 {
            return Err(Error::Param("sigma and delta must be nonnegative".into()));
        }
        if !self.a.is_finite() {
            return Err(Error::Param("slope a must be finite".into()));
        }
        Ok(())
    }

    /// Same parameters with the slope set from an on-area ratio.
    pub fn with_ratio(&self, ratio: f64) -> Result<Self> {
        Ok(Self {
            a: slope_from_ratio(ratio)?,
            ..self.clone()
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    On,
    Off,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub a_on: Mat2,
    pub a_off: Mat2,
    pub d_on: Mat2,
    pub d_off: Mat2,
    /// Noise amplitude entering the omega equation, per region.
    pub s_on: f64,
    pub s_off: f64,
}

impl SystemMatrices {
    pub fn a(&self, region: Region) -> &Mat2 {
        match region {
            Region::On => &self.a_on,
            _ => &self.a_off,
        }
    }

    pub fn diffusion(&self, region: Region) -> &Mat2 {
        match region {
            Region::On => &self.d_on,
            _ => &self.d_off,
        }
    }

    pub fn noise(&self, region: Region) -> f64 {
        match region {
            Region::On => self.s_on,
            _ => self.s_off,
        }
    }
}

pub fn derive_system(p: &ModelParams) -> Result<SystemMatrices> {
    p.validate()?;
    let ie = p.i_eff();
    let mgh = p.mgh();
    let a_on = [
        [0.0, 1.0],
        [(mgh - p.k - p.p) / ie, (-p.b - p.d + p.p * p.delta) / ie],
    ];
    let a_off = [[0.0, 1.0], [(mgh - p.k) / p.i, -p.b / p.i]];
    let s_on = p.sigma / ie;
    let s_off = p.sigma / p.i;
    Ok(SystemMatrices {
        a_on,
        a_off,
        d_on: [[0.0, 0.0], [0.0, 0.5 * s_on * s_on]],
        d_off: [[0.0, 0.0], [0.0, 0.5 * s_off * s_off]],
        s_on,
        s_off,
    })
}

pub fn mat_vec(a: &Mat2, x: Vec2) -> Vec2 {
    [
        a[0][0] * x[0] + a[0][1] * x[1],
        a[1][0] * x[0] + a[1][1] * x[1],
    ]
}

pub fn drift(sys: &SystemMatrices, region: Region, x: Vec2) -> Result<Vec2> {
    match region {
        Region::Boundary => Err(Error::Param(
            "drift is undefined on the switching boundary".into(),
        )),
        r => Ok(mat_vec(sys.a(r), x)),
    }
}

/// Sign rule: Off where theta*(omega - a*theta) < 0.
pub fn classify_slope(a: f64, x: Vec2) -> Region {
    let s = x[0] * (x[1] - a * x[0]);
    if s > 0.0 {
        Region::On
    } else if s < 0.0 {
        Region::Off
    } else {
        Region::Boundary
    }
}

pub fn classify(p: &ModelParams, x: Vec2) -> Region {
    classify_slope(p.a, x)
}

/// Region used by integrators: boundary points count as Off.
pub fn side(a: f64, x: Vec2) -> Region {
    match classify_slope(a, x) {
        Region::On => Region::On,
        _ => Region::Off,
    }
}

pub fn ratio_from_slope(a: f64) -> f64 {
    0.5 - a.atan() / PI
}

pub fn slope_from_ratio(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Param(format!("ratio {ratio} outside (0, 1)")));
    }
    Ok((PI * (0.5 - ratio)).tan())
}

pub fn eigenvalues(a: &Mat2) -> (f64, f64) {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        (tr / 2.0, tr / 2.0)
    } else {
        let s = disc.sqrt();
        ((tr + s) / 2.0, (tr - s) / 2.0)
    }
}
