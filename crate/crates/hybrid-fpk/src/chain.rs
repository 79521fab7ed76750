//! Initial densities, time evolution, stationary density, marginals.

use crate::assembly::{build_kdag, AssembledSystem, TransitionOperator};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::Vec2;
use crate::sparse::{norm2, Csr, SparseLu};

/// Deduplicated nodal density.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    pub values: Vec<f64>,
    pub mass: f64,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>, sys: &AssembledSystem) -> Self {
        let mass = sys.mass(&values);
        Self { values, mass }
    }
}

/// Gaussian node values normalised to unit mass. The flag reports a standard
/// deviation below two grid cells.
pub fn gaussian_initial(
    mesh: &Mesh,
    sys: &AssembledSystem,
    mean: Vec2,
    std: Vec2,
) -> Result<(ProbabilityVector, bool)> {
    if !(std[0] > 0.0 && std[1] > 0.0) {
        return Err(Error::Param("initial standard deviations must be positive".into()));
    }
    if !mesh.domain.contains(mean) {
        return Err(Error::Param("initial mean outside the domain".into()));
    }
    let under = std[0] < 2.0 * mesh.dtheta || std[1] < 2.0 * mesh.domega;
    let mut v: Vec<f64> = mesh
        .dedup_coords()
        .iter()
        .map(|x| {
            let u = (x[0] - mean[0]) / std[0];
            let w = (x[1] - mean[1]) / std[1];
            (-0.5 * (u * u + w * w)).exp()
        })
        .collect();
    let m = sys.mass(&v);
    if !(m > 0.0) {
        return Err(Error::Numerical("initial Gaussian has no mass on the mesh".into()));
    }
    v.iter_mut().for_each(|x| *x /= m);
    Ok((ProbabilityVector::new(v, sys), under))
}

/// Iterates Psi and returns snapshots at the requested step indices (sorted,
/// deduplicated). Aborts on non-finite values or growth beyond `blowup`.
pub fn evolve(
    op: &TransitionOperator,
    sys: &AssembledSystem,
    p0: &ProbabilityVector,
    snapshot_steps: &[usize],
) -> Result<Vec<(usize, ProbabilityVector)>> {
    let mut steps: Vec<usize> = snapshot_steps.to_vec();
    steps.sort_unstable();
    steps.dedup();
    let mut out = Vec::with_capacity(steps.len());
    let mut p = p0.values.clone();
    let mut next = vec![0.0; p.len()];
    let scale = p0.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut n = 0usize;
    for &s in &steps {
        while n < s {
            op.apply(&p, &mut next);
            std::mem::swap(&mut p, &mut next);
            n += 1;
            if n % 100 == 0 || n == s {
                let mx = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !mx.is_finite() || mx > 1e6 * scale.max(1.0) {
                    return Err(Error::Divergence { step: n });
                }
            }
        }
        out.push((n, ProbabilityVector::new(p.clone(), sys)));
    }
    Ok(out)
}

/// Snapshot times (s) rounded to the step grid.
pub fn steps_for_times(times: &[f64], dt: f64) -> Vec<usize> {
    times.iter().map(|t| (t / dt).round() as usize).collect()
}

/// Centre of mass (theta, omega) of a nodal density.
pub fn center_of_mass(mesh: &Mesh, sys: &AssembledSystem, p: &[f64]) -> Vec2 {
    let x = mesh.dedup_coords();
    let mut m = 0.0;
    let mut s = [0.0, 0.0];
    for (n, xn) in x.iter().enumerate() {
        let w = sys.c[n] * p[n];
        m += w;
        s[0] += w * xn[0];
        s[1] += w * xn[1];
    }
    [s[0] / m, s[1] / m]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NullMethod {
    /// Dense SVD below `DENSE_LIMIT` nodes, inverse iteration above.
    #[default]
    Auto,
    InverseIteration,
    DenseSvd,
}

pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Debug)]
pub struct Stationary {
    pub p: ProbabilityVector,
    /// Residual ||K x|| / ||x|| of the kernel vector (relative to max |K|).
    pub sigma1: f64,
    /// Estimate of the next singular value (relative to max |K|).
    pub sigma2: f64,
    /// Weighted mass of entries zeroed by the clipping rule.
    pub clipped_mass: f64,
    /// Weighted mass of the remaining negative entries.
    pub negative_mass: f64,
    pub min_entry: f64,
    pub method: NullMethod,
}

/// Null vector of K via shifted inverse iteration; returns (x, residual).
fn kernel_inverse_iteration(k: &Csr, scale: f64) -> Result<(Vec<f64>, SparseLu)> {
    let n = k.n_rows;
    let jitter = 1e-14 * scale;
    let shifted = k.add(&Csr::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect()), jitter);
    let lu = SparseLu::new(&shifted)?;
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..50 {
        let prev = x.clone();
        lu.solve_in_place(&mut x);
        let nx = norm2(&x);
        if !nx.is_finite() || nx == 0.0 {
            return Err(Error::Numerical("inverse iteration broke down".into()));
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let s = if crate::sparse::dot(&x, &prev) < 0.0 { -1.0 } else { 1.0 };
        let d: f64 = x.iter().zip(&prev).map(|(a, b)| (a - s * b).abs()).fold(0.0, f64::max);
        if d < 1e-15 {
            break;
        }
    }
    Ok((x, lu))
}

/// Second smallest singular value of K by inverse iteration on K^T K with
/// the right null vector `x` and the left null vector deflated, reusing the
/// shifted factorization.
fn second_singular(lu: &SparseLu, x: &[f64]) -> Result<f64> {
    let n = x.len();
    let deflate = |v: &mut [f64], u: &[f64]| {
        let c = crate::sparse::dot(v, u);
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
    };
    let mut y = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..30 {
        lu.solve_transpose_in_place(&mut y);
        let ny = norm2(&y);
        y.iter_mut().for_each(|v| *v /= ny);
    }
    // deterministic start with no special symmetry
    let mut z: Vec<f64> = (0..n).map(|i| ((i * 7919 % 1013) as f64 / 1013.0) - 0.5).collect();
    deflate(&mut z, x);
    let mut est = 0.0;
    for _ in 0..60 {
        let nz = norm2(&z);
        if !(nz > 0.0) || !nz.is_finite() {
            return Ok(0.0);
        }
        z.iter_mut().for_each(|v| *v /= nz);
        lu.solve_transpose_in_place(&mut z);
        deflate(&mut z, &y);
        lu.solve_in_place(&mut z);
        deflate(&mut z, x);
        let g = norm2(&z);
        if !g.is_finite() {
            return Ok(0.0);
        }
        let new = 1.0 / g.sqrt();
        if (new - est).abs() <= 1e-6 * new {
            return Ok(new);
        }
        est = new;
    }
    Ok(est)
}

fn kernel_dense(k: &Csr) -> (Vec<f64>, f64, f64) {
    let n = k.n_rows;
    let mut d = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in k.triplets() {
        d[(r, c)] += v;
    }
    let svd = d.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap());
    let i = order[0];
    let x: Vec<f64> = (0..n).map(|j| vt[(i, j)]).collect();
    let s2 = if n > 1 { s[order[1]] } else { f64::INFINITY };
    (x, s[i], s2)
}

/// Kernel of K, deduplicated, clipped and mass-normalised.
pub fn stationary(sys: &AssembledSystem, method: NullMethod) -> Result<Stationary> {
    let k = build_kdag(sys);
    let scale = k.max_abs();
    let method = match method {
        NullMethod::Auto if k.n_rows <= DENSE_LIMIT => NullMethod::DenseSvd,
        NullMethod::Auto => NullMethod::InverseIteration,
        m => m,
    };
    let (x, sigma1, sigma2) = match method {
        NullMethod::DenseSvd => {
            let (x, s1, s2) = kernel_dense(&k);
            (x, s1 / scale, s2 / scale)
        }
        _ => {
            let (x, lu) = kernel_inverse_iteration(&k, scale)?;
            let r = norm2(&k.mul(&x)) / norm2(&x);
            let s2 = second_singular(&lu, &x)?;
            (x, r / scale, s2 / scale)
        }
    };
    let floor = sigma1.max(f64::EPSILON);
    if !(sigma2 >= 1e3 * floor) {
        return Err(Error::IllPosed {
            ratio: sigma2 / floor,
        });
    }
    finish_kernel(sys, &x, sigma1, sigma2, method)
}

fn finish_kernel(
    sys: &AssembledSystem,
    x: &[f64],
    sigma1: f64,
    sigma2: f64,
    method: NullMethod,
) -> Result<Stationary> {
    let mut p = sys.dedup.eliminate(x);
    let m = sys.mass(&p);
    if m == 0.0 || !m.is_finite() {
        return Err(Error::Numerical("kernel vector has zero mass".into()));
    }
    p.iter_mut().for_each(|v| *v /= m);
    let max = p.iter().fold(0.0f64, |a, &v| a.max(v));
    let mut clipped = 0.0;
    let mut negative = 0.0;
    let mut min_entry = f64::INFINITY;
    for (n, v) in p.iter_mut().enumerate() {
        min_entry = min_entry.min(*v);
        if *v < 0.0 {
            if -*v < 1e-8 * max {
                clipped += sys.c[n] * -*v;
                *v = 0.0;
            } else {
                negative += sys.c[n] * -*v;
            }
        }
    }
    let m = sys.mass(&p);
    p.iter_mut().for_each(|v| *v /= m);
    Ok(Stationary {
        p: ProbabilityVector::new(p, sys),
        sigma1,
        sigma2,
        clipped_mass: clipped,
        negative_mass: negative,
        min_entry,
        method,
    })
}

/// Nodal values on the full (n_omega x n_theta) grid, omega-major.
pub fn to_grid(mesh: &Mesh, p: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; mesh.n_theta * mesh.n_omega];
    for (n, &gi) in mesh.dedup_grid().iter().enumerate() {
        g[gi] = p[n];
    }
    g
}

/// Inverse of `to_grid`.
pub fn from_grid(mesh: &Mesh, grid: &[f64]) -> Vec<f64> {
    mesh.dedup_grid().iter().map(|&g| grid[g]).collect()
}

fn trapezoid(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i == 0 || i + 1 == n { 0.5 * h } else { h })
        .collect()
}

/// theta marginal at grid columns: sum over omega with trapezoidal weights.
pub fn marginal_theta(mesh: &Mesh, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = to_grid(mesh, p);
    let w = trapezoid(mesh.n_omega, mesh.domega);
    let nt = mesh.n_theta;
    let m = (0..nt)
        .map(|i| (0..mesh.n_omega).map(|j| g[j * nt + i] * w[j]).sum())
        .collect();
    ((0..nt).map(|i| mesh.theta(i)).collect(), m)
}

/// Trapezoid integral of a sampled marginal.
pub fn integrate(values: &[f64], h: f64) -> f64 {
    trapezoid(values.len(), h).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Indices of strict local maxima whose height exceeds `rel` times the
/// global maximum.
pub fn local_maxima(m: &[f64], rel: f64) -> Vec<usize> {
    let top = m.iter().cloned().fold(f64::MIN, f64::max);
    let mut out = Vec::new();
    let n = m.len();
    let mut i = 1;
    while i + 1 < n {
        if m[i] > m[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && m[j + 1] == m[i] {
                j += 1;
            }
            if j + 1 < n && m[j + 1] < m[i] && m[i] > rel * top {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// |theta| of the highest marginal peak.
pub fn peak_abs_theta(theta: &[f64], m: &[f64]) -> f64 {
    let mut best = 0;
    for i in 0..m.len() {
        if m[i] > m[best] {
            best = i;
        }
    }
    theta[best].abs()
}

/// max |p(x) - p(-x)| over grid nodes.
pub fn point_asymmetry(mesh: &Mesh, p: &[f64]) -> f64 {
    let g = to_grid(mesh, p);
    let (nt, no) = (mesh.n_theta, mesh.n_omega);
    let mut worst: f64 = 0.0;
    for j in 0..no {
        for i in 0..nt {
            let (mi, mj) = (2 * mesh.i0 as isize - i as isize, 2 * mesh.j0 as isize - j as isize);
            if mi < 0 || mj < 0 || mi >= nt as isize || mj >= no as isize {
                continue;
            }
            let v = g[mj as usize * nt + mi as usize];
            worst = worst.max((g[j * nt + i] - v).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxima() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.5, 2.0, 0.0], 0.1), vec![1, 3]);
        assert_eq!(local_maxima(&[0.0, 1.0, 1.0, 1.0, 0.0], 0.1), vec![2]);
        assert!(local_maxima(&[0.0, 1.0, 2.0], 0.1).is_empty());
    }
}
