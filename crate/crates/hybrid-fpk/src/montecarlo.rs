//! Euler-Maruyama sample paths of the switched S-ODE and the delayed S-DDE,
//! ensemble histograms on the mesh, Welch-style PSDs, PDF distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::mesh::{Domain, Mesh};
use crate::model::{derive_system, mat_vec, side, ModelParams, Region, Vec2};
use crate::spectral::SpectrumResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Sode,
    Sdde,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Steps between recorded samples.
    pub record_stride: usize,
    /// Initial state distribution: Gaussian mean and std (std 0 = fixed).
    pub init_mean: Vec2,
    pub init_std: Vec2,
    /// Escape box; paths leaving it are flagged divergent.
    pub bounds: Domain,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 50_000,
            t_end: 50.0,
            dt: 1e-4,
            seed: 20_240_101,
            record_stride: 500_000,
            init_mean: [0.01, 0.0],
            init_std: [0.001, 0.001],
            bounds: Domain::default().scaled(2.0),
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 1 || !(self.dt > 0.0) || !(self.t_end >= 0.0) || self.record_stride < 1 {
            return Err(Error::Param("invalid Monte Carlo configuration".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec2>,
    /// First time the path left the escape box.
    pub diverged_at: Option<f64>,
}

/// Independent stream per (seed, path index).
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

fn initial_state(cfg: &McConfig, rng: &mut ChaCha8Rng) -> Vec2 {
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    [
        cfg.init_mean[0] + cfg.init_std[0] * z0,
        cfg.init_mean[1] + cfg.init_std[1] * z1,
    ]
}

/// Runs one path and hands every recorded state to `record`.
fn run_path<F>(params: &ModelParams, cfg: &McConfig, path_index: u64, method: Method, mut record: F) -> Result<Option<f64>>
where
    F: FnMut(usize, Vec2),
{
    let mut rng = path_rng(cfg.seed, path_index);
    let x0 = initial_state(cfg, &mut rng);
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let b = &cfg.bounds;
    match method {
        Method::Sode => {
            let sys = derive_system(params)?;
            let mut x = x0;
            record(0, x);
            for n in 1..=steps {
                let k = side(params.a, x);
                let f = mat_vec(sys.a(k), x);
                let xi: f64 = rng.sample(StandardNormal);
                x = [x[0] + f[0] * dt, x[1] + f[1] * dt + sys.noise(k) * sq * xi];
                if n % cfg.record_stride == 0 {
                    record(n, x);
                }
                if !b.contains(x) {
                    return Ok(Some(n as f64 * dt));
                }
            }
        }
        Method::Sdde => {
            params.validate()?;
            let lag = params.delta / dt;
            let nd = lag.round() as usize;
            if (lag - nd as f64).abs() > 1e-9 * lag.max(1.0) {
                return Err(Error::Param("delay must be an integer number of steps".into()));
            }
            let stiff = params.mgh() - params.k;
            let inv_i = 1.0 / params.i;
            let mut hist = vec![x0; nd.max(1)];
            let mut head = 0usize;
            let mut x = x0;
            record(0, x);
            for n in 1..=steps {
                let xd = if nd == 0 { x } else { hist[head] };
                let tau = match side(params.a, xd) {
                    Region::On => -params.p * xd[0] - params.d * xd[1],
                    _ => 0.0,
                };
                if nd > 0 {
                    hist[head] = x;
                    head = (head + 1) % nd;
                }
                let xi: f64 = rng.sample(StandardNormal);
                let acc = inv_i * (stiff * x[0] - params.b * x[1] + tau);
                x = [x[0] + x[1] * dt, x[1] + acc * dt + params.sigma * inv_i * sq * xi];
                if n % cfg.record_stride == 0 {
                    record(n, x);
                }
                if !b.contains(x) {
                    return Ok(Some(n as f64 * dt));
                }
            }
        }
    }
    Ok(None)
}

fn collect_path(params: &ModelParams, cfg: &McConfig, path_index: u64, method: Method) -> Result<Path> {
    cfg.validate()?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let diverged_at = run_path(params, cfg, path_index, method, |n, x| {
        times.push(n as f64 * cfg.dt);
        states.push(x);
    })?;
    Ok(Path {
        times,
        states,
        diverged_at,
    })
}

pub fn simulate_sode(params: &ModelParams, cfg: &McConfig, path_index: u64) -> Result<Path> {
    collect_path(params, cfg, path_index, Method::Sode)
}

pub fn simulate_sdde(params: &ModelParams, cfg: &McConfig, path_index: u64) -> Result<Path> {
    collect_path(params, cfg, path_index, Method::Sdde)
}

pub fn simulate(params: &ModelParams, cfg: &McConfig, path_index: u64, method: Method) -> Result<Path> {
    collect_path(params, cfg, path_index, method)
}

/// State of each path at step `at` (None if it diverged earlier). Parallel
/// over paths; result order is path order.
pub fn ensemble_at(params: &ModelParams, cfg: &McConfig, method: Method, at: usize) -> Result<Vec<Option<Vec2>>> {
    cfg.validate()?;
    let mut c = cfg.clone();
    c.t_end = at as f64 * cfg.dt;
    c.record_stride = at.max(1);
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut last = None;
            let div = run_path(params, &c, i, method, |n, x| {
                if n == at {
                    last = Some(x);
                }
            })?;
            Ok(if div.is_some() { None } else { last })
        })
        .collect()
}

/// Fraction of paths that leave the escape box before `t_end`.
pub fn divergence_fraction(params: &ModelParams, cfg: &McConfig, method: Method) -> Result<f64> {
    let ends = ensemble_at(params, cfg, method, cfg.steps())?;
    Ok(ends.iter().filter(|e| e.is_none()).count() as f64 / ends.len() as f64)
}

/// Element-wise empirical density.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// Density per global grid element.
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
    pub paths: usize,
    pub diverged: usize,
    pub outside: usize,
}

/// counts / (paths * area); diverged paths and points outside the mesh are
/// left out but still count in the denominator.
pub fn ensemble_histogram(states: &[Option<Vec2>], mesh: &Mesh) -> Result<Histogram> {
    let mut counts = vec![0u64; mesh.n_elements()];
    let mut diverged = 0;
    let mut outside = 0;
    for s in states {
        match s {
            None => diverged += 1,
            Some(x) => match mesh.locate(*x) {
                Some(g) => counts[g] += 1,
                None => outside += 1,
            },
        }
    }
    if diverged == states.len() {
        return Err(Error::Numerical("all paths diverged".into()));
    }
    let n = states.len() as f64;
    let density = counts
        .iter()
        .enumerate()
        .map(|(g, &c)| c as f64 / (n * mesh.global_element_area(g)))
        .collect();
    Ok(Histogram {
        density,
        counts,
        paths: states.len(),
        diverged,
        outside,
    })
}

/// Element averages of a nodal density (mean of the three vertex values).
pub fn element_averages(mesh: &Mesh, p: &[f64]) -> Vec<f64> {
    let grid = crate::chain::to_grid(mesh, p);
    mesh.cell_elements
        .iter()
        .map(|&(k, e)| {
            let r = &mesh.regions[k];
            r.elements[e].iter().map(|&n| grid[r.grid[n]]).sum::<f64>() / 3.0
        })
        .collect()
}

/// Cell densities from element densities (the two triangles of a cell have
/// equal area). Cells are theta-major within omega rows.
pub fn cell_densities(elem: &[f64]) -> Vec<f64> {
    elem.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

/// Cell densities of a nodal grid (omega-major, `nt` columns), using the
/// same element averages as `element_averages`.
pub fn grid_cell_averages(nt: usize, no: usize, g: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity((nt - 1) * (no - 1));
    for j in 0..no - 1 {
        for i in 0..nt - 1 {
            let v = |a: usize, b: usize| g[b * nt + a];
            let lower = v(i, j) + v(i + 1, j) + v(i, j + 1);
            let upper = v(i + 1, j + 1) + v(i, j + 1) + v(i + 1, j);
            out.push((lower + upper) / 6.0);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdfDistance {
    pub l1: f64,
    pub hellinger: f64,
    /// Chebyshev distance in grid cells between the peaks, worst half-plane.
    pub peak_gap: usize,
}

/// Distances between two element-wise densities on the same mesh, computed
/// on grid cells.
pub fn compare_pdf(mesh: &Mesh, fem: &[f64], hist: &[f64]) -> Result<PdfDistance> {
    let ne = mesh.n_elements();
    if fem.len() != ne || hist.len() != ne {
        return Err(Error::Param("densities are not on the same mesh".into()));
    }
    compare_cells(
        mesh.n_theta - 1,
        mesh.i0,
        mesh.dtheta * mesh.domega,
        &cell_densities(fem),
        &cell_densities(hist),
    )
}

/// Cell-level distances. `split` is the first cell column with theta >= 0;
/// peaks are compared separately on each side since the stationary density
/// is point-symmetric with twin maxima.
pub fn compare_cells(nct: usize, split: usize, cell_area: f64, fem: &[f64], hist: &[f64]) -> Result<PdfDistance> {
    if fem.len() != hist.len() || nct == 0 || fem.len() % nct != 0 {
        return Err(Error::Param("densities are not on the same mesh".into()));
    }
    let mut l1 = 0.0;
    let mut h2 = 0.0;
    for (f, h) in fem.iter().zip(hist) {
        l1 += (f - h).abs() * cell_area;
        let d = f.max(0.0).sqrt() - h.max(0.0).sqrt();
        h2 += d * d * cell_area;
    }
    let cell = |c: usize| (c % nct, c / nct);
    let mut gap = 0usize;
    for left in [true, false] {
        let pick = |v: &[f64]| {
            (0..v.len())
                .filter(|&c| (cell(c).0 < split) == left)
                .fold((0usize, f64::MIN), |b, c| if v[c] > b.1 { (c, v[c]) } else { b })
                .0
        };
        let (a, b) = (cell(pick(fem)), cell(pick(hist)));
        gap = gap.max(a.0.abs_diff(b.0).max(a.1.abs_diff(b.1)));
    }
    Ok(PdfDistance {
        l1,
        hellinger: (0.5 * h2).sqrt(),
        peak_gap: gap,
    })
}

/// Averaged one-sided periodogram of sampled theta series (mean removed per
/// series). Series shorter than `n` samples are skipped; the count of skipped
/// series is returned with the spectrum.
pub fn psd_welch(series: &[Vec<f64>], sample_dt: f64, n: usize) -> Result<(SpectrumResult, usize)> {
    if n < 8 {
        return Err(Error::Param("segment too short".into()));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let half = n / 2;
    let mut acc = vec![0.0; half + 1];
    let mut used = 0usize;
    let mut skipped = 0usize;
    for s in series {
        if s.len() < n {
            skipped += 1;
            continue;
        }
        let seg = &s[s.len() - n..];
        let mean = seg.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = seg.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        fft.process(&mut buf);
        for m in 0..=half {
            let p = buf[m].norm_sqr() * sample_dt / n as f64;
            acc[m] += if m == 0 || (n % 2 == 0 && m == half) { p } else { 2.0 * p };
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Numerical("no series long enough for the segment".into()));
    }
    acc.iter_mut().for_each(|v| *v /= used as f64);
    let df = 1.0 / (n as f64 * sample_dt);
    Ok((
        SpectrumResult {
            freqs: (0..=half).map(|m| m as f64 * df).collect(),
            psd: acc,
            dt: sample_dt,
            stride: 1,
            ..Default::default()
        },
        skipped,
    ))
}

/// theta series of `paths` stationary sample paths: `burn_in` seconds are
/// discarded, then `segment` seconds are sampled every `record_stride` steps.
pub fn theta_series(
    params: &ModelParams,
    cfg: &McConfig,
    method: Method,
    burn_in: f64,
    segment: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut c = cfg.clone();
    c.t_end = burn_in + segment;
    c.validate()?;
    let first = (burn_in / c.dt).round() as usize;
    (0..c.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = Vec::new();
            let div = run_path(params, &c, i, method, |n, x| {
                if n > first {
                    s.push(x[0]);
                }
            })?;
            if div.is_some() {
                s.clear();
            }
            Ok(s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(paths: usize, t: f64) -> McConfig {
        McConfig {
            paths,
            t_end: t,
            dt: 1e-3,
            seed: 7,
            record_stride: 1,
            init_mean: [0.0, 0.0],
            init_std: [0.0, 0.0],
            bounds: Domain::default().scaled(2.0),
        }
    }

    #[test]
    fn origin_is_fixed_without_noise() {
        let p = ModelParams {
            sigma: 0.0,
            ..Default::default()
        };
        let path = simulate_sode(&p, &cfg(1, 1.0), 0).unwrap();
        assert!(path.states.iter().all(|x| *x == [0.0, 0.0]));
    }

    #[test]
    fn deterministic_streams() {
        let p = ModelParams::default();
        let c = cfg(1, 2.0);
        assert_eq!(simulate_sdde(&p, &c, 3).unwrap(), simulate_sdde(&p, &c, 3).unwrap());
        assert_ne!(simulate_sdde(&p, &c, 3).unwrap(), simulate_sdde(&p, &c, 4).unwrap());
    }

    #[test]
    fn periodogram_line() {
        let n = 1024;
        let dt = 0.01;
        let f0 = 32.0 / (n as f64 * dt);
        let s: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64 * dt).sin())
            .collect();
        let (sp, _) = psd_welch(&[s], dt, n).unwrap();
        let imax = (0..sp.psd.len()).max_by(|&a, &b| sp.psd[a].total_cmp(&sp.psd[b])).unwrap();
        assert!((sp.freqs[imax] - f0).abs() < 1e-12);
    }
}
