//! Stationary autocorrelation of theta through powers of Psi, and its PSD.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::assembly::{AssembledSystem, TransitionOperator};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct SpectrumResult {
    pub lags: Vec<f64>,
    pub autocorr: Vec<f64>,
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub dt: f64,
    pub stride: usize,
    pub mean: f64,
}

/// Any linear map that can stand in for Psi.
pub trait Propagator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl Propagator for TransitionOperator {
    fn len(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        TransitionOperator::apply(self, x, out)
    }
}

/// Dense column-stochastic matrix (row-major), for small hand-built chains.
pub struct DenseChain(pub Vec<Vec<f64>>);

impl Propagator for DenseChain {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.0.iter().enumerate() {
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// R(j) = sum_n w_n theta_n (Psi^j (theta o p))_n at j = 0, s, 2s, ... (lags
/// lag count). `w` converts nodal values to probabilities (basis integrals).
pub fn autocorrelation<P: Propagator>(
    op: &P,
    theta: &[f64],
    w: &[f64],
    p: &[f64],
    lags: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    let n = op.len();
    let stride = stride.max(1);
    let wt: Vec<f64> = theta.iter().zip(w).map(|(t, c)| t * c).collect();
    let mut v: Vec<f64> = theta.iter().zip(p).map(|(t, q)| t * q).collect();
    let mut next = vec![0.0; n];
    let mut out = Vec::with_capacity(lags);
    let r0: f64 = wt.iter().zip(&v).map(|(a, b)| a * b).sum();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    out.push(r0);
    for j in 1..lags {
        for _ in 0..stride {
            op.apply(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        let r: f64 = wt.iter().zip(&v).map(|(a, b)| a * b).sum();
        if !r.is_finite() {
            return Err(Error::Divergence { step: j * stride });
        }
        if j % 64 == 0 {
            let mx = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if mx > 1e6 * scale {
                return Err(Error::Divergence { step: j * stride });
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Even-extended FFT of R - mean^2. One-sided, so that sum(psd) * df
/// reproduces R(0) - mean^2.
pub fn psd(r: &[f64], dt_eff: f64, mean: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let j = r.len();
    if j < 8 {
        return Err(Error::Param("at least 8 lags are required".into()));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite autocorrelation".into()));
    }
    let l = 2 * j;
    let m2 = mean * mean;
    let mut buf = vec![Complex::new(0.0, 0.0); l];
    for k in 0..j {
        buf[k].re = r[k] - m2;
        if k > 0 {
            buf[l - k].re = r[k] - m2;
        }
    }
    FftPlanner::<f64>::new().plan_fft_forward(l).process(&mut buf);
    let df = 1.0 / (l as f64 * dt_eff);
    let freqs = (0..=j).map(|m| m as f64 * df).collect();
    let psd = (0..=j)
        .map(|m| {
            let s = dt_eff * buf[m].re;
            if m == 0 || m == j {
                s
            } else {
                2.0 * s
            }
        })
        .collect();
    Ok((freqs, psd))
}

/// Stationary mean of theta under p.
pub fn theta_mean(sys: &AssembledSystem, p: &[f64]) -> f64 {
    sys.theta
        .iter()
        .zip(&sys.c)
        .zip(p)
        .map(|((t, c), q)| t * c * q)
        .sum()
}

/// Chain-route spectrum with the default lag horizon policy: `horizon_s` of
/// lags, stride so that no more than `max_lags` are recorded.
pub fn chain_spectrum(
    op: &TransitionOperator,
    sys: &AssembledSystem,
    p: &[f64],
    horizon_s: f64,
    max_lags: usize,
) -> Result<SpectrumResult> {
    let steps = (horizon_s / op.dt).round() as usize;
    let stride = steps.div_ceil(max_lags).max(1);
    let lags = steps / stride;
    let r = autocorrelation(op, &sys.theta, &sys.c, p, lags, stride)?;
    let dt_eff = stride as f64 * op.dt;
    let mean = theta_mean(sys, p);
    let (freqs, psd) = psd(&r, dt_eff, mean)?;
    Ok(SpectrumResult {
        lags: (0..r.len()).map(|j| j as f64 * dt_eff).collect(),
        autocorr: r,
        freqs,
        psd,
        dt: op.dt,
        stride,
        mean,
    })
}

/// Least-squares slope of log10(psd) against log10(f) over [f_lo, f_hi].
pub fn loglog_slope(freqs: &[f64], psd: &[f64], f_lo: f64, f_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(psd)
        .filter(|(f, p)| **f >= f_lo && **f <= f_hi && **p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_is_flat() {
        let mut r = vec![0.0; 64];
        r[0] = 1.0;
        let (_, p) = psd(&r, 0.1, 0.0).unwrap();
        for v in &p[1..p.len() - 1] {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_line() {
        let j = 256;
        let dt = 0.01;
        let f0 = 10.0 / (2.0 * j as f64 * dt);
        let r: Vec<f64> = (0..j)
            .map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64 * dt).cos())
            .collect();
        let (f, p) = psd(&r, dt, 0.0).unwrap();
        let (imax, _) = p
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert!((f[imax] - f0).abs() < 1e-12);
    }

    #[test]
    fn parseval() {
        let r: Vec<f64> = (0..200).map(|k| (-(k as f64) / 20.0).exp()).collect();
        let (f, p) = psd(&r, 0.05, 0.0).unwrap();
        let df = f[1] - f[0];
        let total: f64 = p.iter().sum::<f64>() * df;
        assert!((total - r[0]).abs() < 1e-12);
    }

    #[test]
    fn too_few_lags() {
        assert!(psd(&[1.0; 7], 0.1, 0.0).is_err());
    }
}
