//! Galerkin matrices of the two-region Fokker-Planck problem and the Markov
//! transition operator built from them.
//!
//! Region k evolves as M_k dp_k/dt = -(K_k - Kd_k - Ks_k) p_k + (switching
//! flux), with the unknown switching flux eliminated so that shared nodes stay
//! equal across regions. All integrands are polynomials of degree <= 3 along
//! edges and <= 2 on triangles, so edge-midpoint and Simpson rules are exact.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{edge_normal, DedupOperators, Mesh, RegionMesh, A, B};
use crate::model::{mat_vec, Mat2, SystemMatrices, Vec2};
use crate::sparse::{Cholesky, Csr};

pub type Elem3 = [[f64; 3]; 3];

pub fn element_mass(x: &[Vec2; 3]) -> Result<Elem3> {
    let ar = crate::mesh::signed_area(x);
    if !(ar > 0.0) {
        return Err(Error::Mesh(format!("element with non-positive area {ar}")));
    }
    let d = ar / 6.0;
    let o = ar / 12.0;
    Ok([[d, o, o], [o, d, o], [o, o, d]])
}

fn gradients(x: &[Vec2; 3], ar: f64) -> [Vec2; 3] {
    let mut g = [[0.0; 2]; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        *gi = [
            (x[j][1] - x[k][1]) / (2.0 * ar),
            (x[k][0] - x[j][0]) / (2.0 * ar),
        ];
    }
    g
}

/// Element matrix of phi_i div(f phi_j) + grad phi_i . D grad phi_j with f = A x.
pub fn element_stiffness(x: &[Vec2; 3], a: &Mat2, d: &Mat2) -> Result<Elem3> {
    let ar = crate::mesh::signed_area(x);
    if !(ar > 0.0) {
        return Err(Error::Mesh(format!("element with non-positive area {ar}")));
    }
    let g = gradients(x, ar);
    let tr = a[0][0] + a[1][1];
    let mut k = [[0.0; 3]; 3];
    // edge midpoints; phi takes 1/2 on the two edge vertices, 0 on the third
    for l in 0..3 {
        let (p, q) = (l, (l + 1) % 3);
        let m = [(x[p][0] + x[q][0]) / 2.0, (x[p][1] + x[q][1]) / 2.0];
        let f = mat_vec(a, m);
        let w = ar / 3.0;
        let phi = |n: usize| if n == p || n == q { 0.5 } else { 0.0 };
        for i in [p, q] {
            for (j, gj) in g.iter().enumerate() {
                let adv = tr * phi(j) + f[0] * gj[0] + f[1] * gj[1];
                k[i][j] += w * phi(i) * adv;
            }
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let dg = [
                d[0][0] * g[j][0] + d[0][1] * g[j][1],
                d[1][0] * g[j][0] + d[1][1] * g[j][1],
            ];
            k[i][j] += ar * (g[i][0] * dg[0] + g[i][1] * dg[1]);
        }
    }
    Ok(k)
}

/// Edge integral of phi_i (n . A x) phi_j over local edge `l`, by Simpson.
/// Returns the 2x2 block for the edge's (start, end) vertices.
pub fn edge_flux(x: &[Vec2; 3], l: usize, a: &Mat2) -> [[f64; 2]; 2] {
    let (n, len) = edge_normal(x, l);
    let p = x[l];
    let q = x[(l + 1) % 3];
    let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
    let fn_ = |y: Vec2| {
        let f = mat_vec(a, y);
        n[0] * f[0] + n[1] * f[1]
    };
    let (f0, fm, f1) = (fn_(p), fn_(m), fn_(q));
    let h = len / 6.0;
    [[h * (f0 + fm), h * fm], [h * fm, h * (fm + f1)]]
}

fn assemble_elements<F>(r: &RegionMesh, elem: F) -> Result<Csr>
where
    F: Fn(&[Vec2; 3]) -> Result<Elem3> + Sync,
{
    let blocks: Vec<Elem3> = (0..r.elements.len())
        .into_par_iter()
        .map(|e| elem(&r.element_coords(e)))
        .collect::<Result<_>>()?;
    let mut t = Vec::with_capacity(9 * blocks.len());
    for (e, km) in blocks.iter().enumerate() {
        let el = r.elements[e];
        for i in 0..3 {
            for j in 0..3 {
                t.push((el[i], el[j], km[i][j]));
            }
        }
    }
    Ok(Csr::from_triplets(r.len(), r.len(), t))
}

fn assemble_edges(r: &RegionMesh, edges: &[(usize, usize)], a: &Mat2) -> Csr {
    let mut t = Vec::with_capacity(4 * edges.len());
    for &(e, l) in edges {
        let x = r.element_coords(e);
        let blk = edge_flux(&x, l, a);
        let el = r.elements[e];
        let v = [el[l], el[(l + 1) % 3]];
        for i in 0..2 {
            for j in 0..2 {
                t.push((v[i], v[j], blk[i][j]));
            }
        }
    }
    Csr::from_triplets(r.len(), r.len(), t)
}

pub fn assemble_mass(mesh: &Mesh) -> Result<[Csr; 2]> {
    Ok([
        assemble_elements(&mesh.regions[A], element_mass)?,
        assemble_elements(&mesh.regions[B], element_mass)?,
    ])
}

pub fn assemble_stiffness(mesh: &Mesh, sys: &SystemMatrices) -> Result<[Csr; 2]> {
    let mut out = Vec::with_capacity(2);
    for k in [A, B] {
        let r = &mesh.regions[k];
        let (a, d) = (*sys.a(r.region), *sys.diffusion(r.region));
        out.push(assemble_elements(r, |x| element_stiffness(x, &a, &d))?);
    }
    Ok(out.try_into().expect("two regions"))
}

pub fn assemble_domain_flux(mesh: &Mesh, sys: &SystemMatrices) -> [Csr; 2] {
    [A, B].map(|k| {
        let r = &mesh.regions[k];
        assemble_edges(r, &r.domain_edges, sys.a(r.region))
    })
}

/// Jump-type switching would add its re-entry terms here.
pub fn assemble_switching_flux(mesh: &Mesh, sys: &SystemMatrices) -> [Csr; 2] {
    [A, B].map(|k| {
        let r = &mesh.regions[k];
        assemble_edges(r, &r.switching_edges, sys.a(r.region))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MassMode {
    #[default]
    Consistent,
    /// Row-sum diagonal mass.
    Lumped,
}

/// All region matrices plus bookkeeping needed by the chain.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub dedup: DedupOperators,
    pub m: [Csr; 2],
    pub k: [Csr; 2],
    pub kd: [Csr; 2],
    pub ks: [Csr; 2],
    /// Basis integrals per redundant slot (M_k 1).
    pub c_rdn: Vec<f64>,
    /// Deduplicated basis integrals Z_cmb^T c_rdn.
    pub c: Vec<f64>,
    /// theta coordinate per deduplicated node.
    pub theta: Vec<f64>,
    pub dt: f64,
    pub mass_mode: MassMode,
}

impl AssembledSystem {
    pub fn new(mesh: &Mesh, sys: &SystemMatrices, dt: f64, mass_mode: MassMode) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(Error::Param(format!("time step {dt} must be nonnegative")));
        }
        let mut m = assemble_mass(mesh)?;
        if mass_mode == MassMode::Lumped {
            m = m.map(|mk| {
                let s = mk.row_sums();
                Csr::from_triplets(s.len(), s.len(), s.into_iter().enumerate().map(|(i, v)| (i, i, v)).collect())
            });
        }
        let k = assemble_stiffness(mesh, sys)?;
        let kd = assemble_domain_flux(mesh, sys);
        let ks = assemble_switching_flux(mesh, sys);
        let dedup = DedupOperators::from_mesh(mesh);
        let mut c_rdn = m[A].row_sums();
        c_rdn.extend(m[B].row_sums());
        let c = dedup.combine_transpose(&c_rdn);
        let theta = mesh.dedup_coords().iter().map(|x| x[0]).collect();
        Ok(Self {
            dedup,
            m,
            k,
            kd,
            ks,
            c_rdn,
            c,
            theta,
            dt,
            mass_mode,
        })
    }

    pub fn mass(&self, p: &[f64]) -> f64 {
        crate::sparse::dot(&self.c, p)
    }
}

/// Markov transition operator p -> Psi p on deduplicated vectors.
pub struct TransitionOperator {
    pub dedup: DedupOperators,
    pub dt: f64,
    g_a: Csr,
    h_b: Csr,
    g_b: Csr,
    chol: [Cholesky; 2],
    /// Dense S^{-1}, row-major N^s x N^s.
    s_inv: Vec<f64>,
}

impl TransitionOperator {
    pub fn n(&self) -> usize {
        self.dedup.n_dedup()
    }

    /// Psi_rdn applied to a redundant vector [p_A; p_B].
    pub fn apply_redundant(&self, rdn: &[f64]) -> Vec<f64> {
        let z = &self.dedup;
        let (na, nb, ns) = (z.n_a, z.n_b, z.n_s());
        let (pa, pb) = rdn.split_at(na);

        let mut qa = self.g_a.mul(pa);
        let hb = self.h_b.mul(pb);
        for &(ia, ib) in &z.pairing {
            qa[ia] -= hb[ib];
        }
        let mut qb = self.g_b.mul(pb);
        for v in qa.iter_mut().chain(qb.iter_mut()) {
            *v = -*v;
        }
        self.chol[A].solve_in_place(&mut qa);
        self.chol[B].solve_in_place(&mut qb);

        let mut rhs = vec![0.0; ns];
        for (i, &(ia, ib)) in z.pairing.iter().enumerate() {
            rhs[i] = -qa[ia] + qb[ib];
        }
        let mut ua = vec![0.0; na];
        let mut ub = vec![0.0; nb];
        for (i, &(ia, ib)) in z.pairing.iter().enumerate() {
            let row = &self.s_inv[i * ns..(i + 1) * ns];
            let ri: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            ua[ia] = -ri;
            ub[ib] = ri;
        }
        self.chol[A].solve_in_place(&mut ua);
        self.chol[B].solve_in_place(&mut ub);

        let dt = self.dt;
        let mut out = Vec::with_capacity(na + nb);
        out.extend((0..na).map(|i| pa[i] + dt * (qa[i] + ua[i])));
        out.extend((0..nb).map(|i| pb[i] + dt * (qb[i] + ub[i])));
        out
    }

    /// Psi p = Z_elm Psi_rdn Z_cmb p. `out` has the deduplicated length.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let z = &self.dedup;
        let next = self.apply_redundant(&z.combine(p));
        let na = z.n_a;
        out[..na].copy_from_slice(&next[..na]);
        for (r, &n) in z.l_b_interior.idx.iter().enumerate() {
            out[na + r] = next[na + n];
        }
    }

    pub fn step(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.apply(p, &mut out);
        out
    }

    /// Explicit Psi by columns; only for small meshes.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut cols = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        for (j, col) in cols.iter_mut().enumerate() {
            e[j] = 1.0;
            self.apply(&e, col);
            e[j] = 0.0;
        }
        (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
    }

    /// Explicit Psi as sparse triplets, dropping exact zeros.
    pub fn to_csr(&self) -> Csr {
        let n = self.n();
        let mut t = Vec::new();
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for (i, &v) in col.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Csr::from_triplets(n, n, t)
    }
}

/// Most negative entry of Psi e_j relative to its largest entry, over point
/// masses at `probes` spread-out nodes.
pub fn min_entry_probe(op: &TransitionOperator, probes: usize) -> f64 {
    let n = op.n();
    let probes = probes.clamp(1, n);
    let mut min_rel: f64 = 0.0;
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for k in 0..probes {
        let j = (2 * k + 1) * n / (2 * probes);
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        let max = col.iter().cloned().fold(0.0, f64::max);
        let min = col.iter().cloned().fold(0.0, f64::min);
        if max > 0.0 {
            min_rel = min_rel.min(min / max);
        }
    }
    min_rel
}

pub fn build_transition(sys: &AssembledSystem) -> Result<TransitionOperator> {
    let z = sys.dedup.clone();
    let g_a = sys.k[A].add(&sys.kd[A], -1.0).add(&sys.ks[A], -1.0);
    let h_b = sys.ks[B].clone();
    let g_b = sys.k[B].add(&sys.kd[B], -1.0);
    let chol = [Cholesky::new(&sys.m[A])?, Cholesky::new(&sys.m[B])?];

    // S = -(L_A M_A^{-1} L_A^T + L_B M_B^{-1} L_B^T)
    let ns = z.n_s();
    let mut s = nalgebra::DMatrix::<f64>::zeros(ns, ns);
    for (k, ex) in [(A, &z.l_a), (B, &z.l_b)] {
        let n = ex.n_cols;
        let mut x = vec![0.0; n * ns];
        for (i, &c) in ex.idx.iter().enumerate() {
            x[i * n + c] = 1.0;
        }
        chol[k].solve_many(&mut x, ns);
        for j in 0..ns {
            for (i, &c) in ex.idx.iter().enumerate() {
                s[(i, j)] -= x[j * n + c];
            }
        }
    }
    let inv = if ns == 0 {
        nalgebra::DMatrix::zeros(0, 0)
    } else {
        s.try_inverse().ok_or(Error::SingularInterface)?
    };
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInterface);
    }
    let mut s_inv = Vec::with_capacity(ns * ns);
    for i in 0..ns {
        for j in 0..ns {
            s_inv.push(inv[(i, j)]);
        }
    }
    Ok(TransitionOperator {
        dedup: z,
        dt: sys.dt,
        g_a,
        h_b,
        g_b,
        chol,
        s_inv,
    })
}

/// Stationary system matrix acting on redundant vectors [p_A; p_B].
pub fn build_kdag(sys: &AssembledSystem) -> Csr {
    let z = &sys.dedup;
    let (na, nb, ns) = (z.n_a, z.n_b, z.n_s());
    let n = na + nb;
    let mut t = Vec::new();
    let g_a = sys.k[A].add(&sys.kd[A], -1.0).add(&sys.ks[A], -1.0);
    t.extend(g_a.triplets());
    let g_b_full = sys.k[B].add(&sys.kd[B], -1.0).add(&sys.ks[B], -1.0);
    for &(ia, ib) in &z.pairing {
        for k in g_b_full.indptr[ib]..g_b_full.indptr[ib + 1] {
            t.push((ia, na + g_b_full.indices[k], g_b_full.data[k]));
        }
    }
    let g_b = sys.k[B].add(&sys.kd[B], -1.0);
    for (r, &ib) in z.l_b_interior.idx.iter().enumerate() {
        for k in g_b.indptr[ib]..g_b.indptr[ib + 1] {
            t.push((na + r, na + g_b.indices[k], g_b.data[k]));
        }
    }
    let base = na + nb - ns;
    for (i, &(ia, ib)) in z.pairing.iter().enumerate() {
        t.push((base + i, ia, 1.0));
        t.push((base + i, na + ib, -1.0));
    }
    Csr::from_triplets(n, n, t)
}

/// Four-state chain with state 2 split into 2A (region A) and 2B (region B).
pub mod toy {
    use crate::mesh::DedupOperators;

    pub type IMat = Vec<Vec<i64>>;

    pub fn dedup() -> DedupOperators {
        DedupOperators::from_pairing(2, 3, vec![(1, 0)])
    }

    pub fn to_int(m: &[Vec<f64>]) -> IMat {
        m.iter().map(|r| r.iter().map(|&v| v as i64).collect()).collect()
    }

    pub fn matmul(a: &IMat, b: &IMat) -> IMat {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut c = vec![vec![0i64; m]; n];
        for i in 0..n {
            for l in 0..k {
                for j in 0..m {
                    c[i][j] += a[i][l] * b[l][j];
                }
            }
        }
        c
    }

    /// Redundant 5x5 matrix over [1, 2A, 2B, 3, 4] satisfying the duplication
    /// constraints: transitions from 1, 3, 4 into 2A and 2B are equal.
    /// Entries are numerators over a common denominator.
    pub fn redundant_from(entries: &[i64; 25]) -> IMat {
        let mut psi: IMat = entries.chunks(5).map(|r| r.to_vec()).collect();
        for j in [0usize, 3, 4] {
            psi[2][j] = psi[1][j];
        }
        psi
    }

    /// Hand reduction: drop row 2B, sum columns 2A and 2B.
    pub fn reduce_by_hand(r: &IMat) -> IMat {
        let rows = [0usize, 1, 3, 4];
        rows.iter()
            .map(|&i| vec![r[i][0], r[i][1] + r[i][2], r[i][3], r[i][4]])
            .collect()
    }

    /// Max |Z_elm Psi_rdn Z_cmb - hand reduction| over entries.
    pub fn residual(r: &IMat) -> i64 {
        let z = dedup();
        let ze = to_int(&z.z_elm_dense());
        let zc = to_int(&z.z_cmb_dense());
        let via = matmul(&matmul(&ze, r), &zc);
        let hand = reduce_by_hand(r);
        via.iter()
            .flatten()
            .zip(hand.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_triangle_mass() {
        let x = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = element_mass(&x).unwrap();
        assert!((m[0][0] - 1.0 / 12.0).abs() < 1e-16);
        assert!((m[0][1] - 1.0 / 24.0).abs() < 1e-16);
        assert!(element_mass(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn unit_triangle_laplacian() {
        let x = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let zero = [[0.0; 2]; 2];
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let k = element_stiffness(&x, &zero, &id).unwrap();
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
        let k0 = element_stiffness(&x, &zero, &zero).unwrap();
        assert!(k0.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn toy_defaults() {
        let z = toy::dedup();
        assert_eq!(z.r_dense(), vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let e: [i64; 25] = core::array::from_fn(|i| (i as i64 * 7) % 11);
        assert_eq!(toy::residual(&toy::redundant_from(&e)), 0);
    }
}
