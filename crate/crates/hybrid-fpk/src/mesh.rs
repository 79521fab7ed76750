//! Two-region triangulated grid with duplicated switching-boundary nodes.
//!
//! Region A is the On set, region B the Off set. Each rectangular cell is cut
//! by its negative-slope diagonal; an element belongs to the region that
//! `classify` assigns to its centroid (Off on ties). The switching boundary is
//! the set of element edges separating A from B, so it always runs along
//! element sides.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{classify_slope, Region, Vec2};

pub const A: usize = 0;
pub const B: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub theta_min: f64,
    pub theta_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Self {
            theta_min: -0.1,
            theta_max: 0.1,
            omega_min: -0.02,
            omega_max: 0.02,
        }
    }
}

impl Domain {
    pub fn area(&self) -> f64 {
        (self.theta_max - self.theta_min) * (self.omega_max - self.omega_min)
    }

    /// Same rectangle scaled about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            theta_min: s * self.theta_min,
            theta_max: s * self.theta_max,
            omega_min: s * self.omega_min,
            omega_max: s * self.omega_max,
        }
    }

    pub fn contains(&self, x: Vec2) -> bool {
        x[0] >= self.theta_min && x[0] <= self.theta_max && x[1] >= self.omega_min && x[1] <= self.omega_max
    }
}

/// 0/1 row selector stored as an index map: row r picks column `idx[r]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extractor {
    pub n_cols: usize,
    pub idx: Vec<usize>,
}

impl Extractor {
    pub fn rows(&self) -> usize {
        self.idx.len()
    }

    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.idx.iter().map(|&c| x[c]).collect()
    }

    /// out += L^T y
    pub fn scatter_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &c) in self.idx.iter().enumerate() {
            out[c] += y[r];
        }
    }

    pub fn scatter(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        self.scatter_add(y, &mut out);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.idx
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; self.n_cols];
                row[c] = 1.0;
                row
            })
            .collect()
    }
}

/// Nodes, elements and boundary-edge lists of one region.
#[derive(Clone, Debug)]
pub struct RegionMesh {
    pub region: Region,
    pub nodes: Vec<Vec2>,
    /// Grid index (j * n_theta + i) of each local node.
    pub grid: Vec<usize>,
    /// Counter-clockwise local node triples.
    pub elements: Vec<[usize; 3]>,
    /// (element, local edge) pairs on the rectangle perimeter. Local edge l
    /// joins vertices l and (l + 1) % 3.
    pub domain_edges: Vec<(usize, usize)>,
    pub switching_edges: Vec<(usize, usize)>,
}

impl RegionMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn element_coords(&self, e: usize) -> [Vec2; 3] {
        let el = self.elements[e];
        [self.nodes[el[0]], self.nodes[el[1]], self.nodes[el[2]]]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        signed_area(&self.element_coords(e))
    }

    pub fn area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.element_area(e)).sum()
    }

    pub fn element_extractor(&self, e: usize) -> Extractor {
        Extractor {
            n_cols: self.len(),
            idx: self.elements[e].to_vec(),
        }
    }
}

pub fn signed_area(x: &[Vec2; 3]) -> f64 {
    0.5 * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]))
}

/// Outward unit normal and length of local edge `l` of a CCW triangle.
pub fn edge_normal(x: &[Vec2; 3], l: usize) -> (Vec2, f64) {
    let p = x[l];
    let q = x[(l + 1) % 3];
    let t = [q[0] - p[0], q[1] - p[1]];
    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
    ([t[1] / len, -t[0] / len], len)
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub domain: Domain,
    pub dtheta: f64,
    pub domega: f64,
    pub a: f64,
    pub n_theta: usize,
    pub n_omega: usize,
    /// Grid indices of the origin.
    pub i0: usize,
    pub j0: usize,
    pub regions: [RegionMesh; 2],
    /// Shared switching nodes as (local A index, local B index), grid order.
    pub pairing: Vec<(usize, usize)>,
    /// Per grid element (2 per cell, lower-left first): (region, local element).
    pub cell_elements: Vec<(usize, usize)>,
}

impl Mesh {
    pub fn n_a(&self) -> usize {
        self.regions[A].len()
    }

    pub fn n_b(&self) -> usize {
        self.regions[B].len()
    }

    pub fn n_s(&self) -> usize {
        self.pairing.len()
    }

    /// N = N_A + N_B (redundant size).
    pub fn n_total(&self) -> usize {
        self.n_a() + self.n_b()
    }

    /// N - N^s (deduplicated size).
    pub fn n_dedup(&self) -> usize {
        self.n_total() - self.n_s()
    }

    pub fn n_elements(&self) -> usize {
        self.cell_elements.len()
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 - self.i0 as f64) * self.dtheta
    }

    pub fn omega(&self, j: usize) -> f64 {
        (j as f64 - self.j0 as f64) * self.domega
    }

    pub fn switching_extractor(&self, k: usize) -> Extractor {
        Extractor {
            n_cols: self.regions[k].len(),
            idx: self
                .pairing
                .iter()
                .map(|&(ia, ib)| if k == A { ia } else { ib })
                .collect(),
        }
    }

    /// Selects the B nodes that are not on the switching boundary.
    pub fn b_interior_extractor(&self) -> Extractor {
        let mut shared = vec![false; self.n_b()];
        for &(_, ib) in &self.pairing {
            shared[ib] = true;
        }
        Extractor {
            n_cols: self.n_b(),
            idx: (0..self.n_b()).filter(|&n| !shared[n]).collect(),
        }
    }

    /// Grid index of every deduplicated node (A nodes, then B interior nodes).
    pub fn dedup_grid(&self) -> Vec<usize> {
        let mut g = self.regions[A].grid.clone();
        let bi = self.b_interior_extractor();
        g.extend(bi.idx.iter().map(|&n| self.regions[B].grid[n]));
        g
    }

    pub fn dedup_coords(&self) -> Vec<Vec2> {
        let mut c = self.regions[A].nodes.clone();
        let bi = self.b_interior_extractor();
        c.extend(bi.idx.iter().map(|&n| self.regions[B].nodes[n]));
        c
    }

    /// Global grid element containing `x`, or None outside the domain.
    pub fn locate(&self, x: Vec2) -> Option<usize> {
        let u = x[0] / self.dtheta + self.i0 as f64;
        let v = x[1] / self.domega + self.j0 as f64;
        let nc_t = self.n_theta - 1;
        let nc_o = self.n_omega - 1;
        if !(u >= 0.0 && v >= 0.0 && u <= nc_t as f64 && v <= nc_o as f64) {
            return None;
        }
        let i = (u.floor() as usize).min(nc_t - 1);
        let j = (v.floor() as usize).min(nc_o - 1);
        let (fu, fv) = (u - i as f64, v - j as f64);
        let t = usize::from(fu + fv > 1.0);
        Some(2 * (j * nc_t + i) + t)
    }

    pub fn global_element_area(&self, g: usize) -> f64 {
        let (k, e) = self.cell_elements[g];
        self.regions[k].element_area(e)
    }

    /// Max and mean |omega - a theta| at midpoints of switching edges off the
    /// theta = 0 axis.
    pub fn snapping_error(&self) -> (f64, f64) {
        let r = &self.regions[A];
        let mut max: f64 = 0.0;
        let mut sum = 0.0;
        let mut n = 0usize;
        for &(e, l) in &r.switching_edges {
            let x = r.element_coords(e);
            let p = x[l];
            let q = x[(l + 1) % 3];
            if p[0] == 0.0 && q[0] == 0.0 {
                continue;
            }
            let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
            let err = (m[1] - self.a * m[0]).abs();
            max = max.max(err);
            sum += err;
            n += 1;
        }
        (max, if n > 0 { sum / n as f64 } else { 0.0 })
    }
}

fn grid_count(lo: f64, hi: f64, d: f64, name: &str) -> Result<(usize, usize)> {
    if !(d > 0.0) || !(hi > lo) {
        return Err(Error::Mesh(format!("bad {name} extent or spacing")));
    }
    let cells = (hi - lo) / d;
    let n = cells.round();
    if (cells - n).abs() > 1e-9 * n.max(1.0) || n < 2.0 {
        return Err(Error::Mesh(format!(
            "spacing {d} does not divide the {name} extent"
        )));
    }
    let o = -lo / d;
    let i0 = o.round();
    if !(lo < 0.0 && hi > 0.0) || (o - i0).abs() > 1e-9 * n {
        return Err(Error::Mesh(format!(
            "{name} grid must contain 0 as an interior node"
        )));
    }
    Ok((n as usize + 1, i0 as usize))
}

pub fn build_mesh(domain: Domain, dtheta: f64, domega: f64, a: f64) -> Result<Mesh> {
    let (nt, i0) = grid_count(domain.theta_min, domain.theta_max, dtheta, "theta")?;
    let (no, j0) = grid_count(domain.omega_min, domain.omega_max, domega, "omega")?;
    if !a.is_finite() {
        return Err(Error::Mesh("slope must be finite".into()));
    }
    let coord = |g: usize| -> Vec2 {
        let (i, j) = (g % nt, g / nt);
        [
            (i as f64 - i0 as f64) * dtheta,
            (j as f64 - j0 as f64) * domega,
        ]
    };

    // Grid triangles, region labels from integer-exact centroids.
    let nct = nt - 1;
    let nco = no - 1;
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(2 * nct * nco);
    let mut label: Vec<usize> = Vec::with_capacity(2 * nct * nco);
    for j in 0..nco {
        for i in 0..nct {
            let g = |ii: usize, jj: usize| jj * nt + ii;
            let k = i as f64 - i0 as f64;
            let l = j as f64 - j0 as f64;
            let lower = [g(i, j), g(i + 1, j), g(i, j + 1)];
            let upper = [g(i + 1, j + 1), g(i, j + 1), g(i + 1, j)];
            for (tri, off) in [(lower, 1.0), (upper, 2.0)] {
                let c = [(3.0 * k + off) * dtheta / 3.0, (3.0 * l + off) * domega / 3.0];
                let r = match classify_slope(a, c) {
                    Region::On => A,
                    _ => B,
                };
                tris.push(tri);
                label.push(r);
            }
        }
    }

    // Region-local numbering in grid order.
    let mut used = vec![[false; 2]; nt * no];
    for (t, tri) in tris.iter().enumerate() {
        for &g in tri {
            used[g][label[t]] = true;
        }
    }
    let mut local = vec![[usize::MAX; 2]; nt * no];
    let mut regions: Vec<RegionMesh> = [Region::On, Region::Off]
        .into_iter()
        .map(|region| RegionMesh {
            region,
            nodes: Vec::new(),
            grid: Vec::new(),
            elements: Vec::new(),
            domain_edges: Vec::new(),
            switching_edges: Vec::new(),
        })
        .collect();
    let mut pairing = Vec::new();
    for g in 0..nt * no {
        for k in [A, B] {
            if used[g][k] {
                local[g][k] = regions[k].nodes.len();
                regions[k].nodes.push(coord(g));
                regions[k].grid.push(g);
            }
        }
        if used[g][A] && used[g][B] {
            pairing.push((local[g][A], local[g][B]));
        }
    }

    let mut cell_elements = Vec::with_capacity(tris.len());
    for (t, tri) in tris.iter().enumerate() {
        let k = label[t];
        let e = regions[k].elements.len();
        regions[k]
            .elements
            .push([local[tri[0]][k], local[tri[1]][k], local[tri[2]][k]]);
        cell_elements.push((k, e));
    }

    // Classify edges by the labels of the triangles sharing them.
    let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(3 * tris.len());
    for (t, tri) in tris.iter().enumerate() {
        for l in 0..3 {
            let (p, q) = (tri[l], tri[(l + 1) % 3]);
            edges.entry((p.min(q), p.max(q))).or_default().push(3 * t + l);
        }
    }
    let mut keys: Vec<_> = edges.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let owners = &edges[&key];
        match owners.as_slice() {
            [only] => {
                let (t, l) = (only / 3, only % 3);
                let (k, e) = cell_elements[t];
                regions[k].domain_edges.push((e, l));
            }
            [s, u] => {
                let (ts, tu) = (s / 3, u / 3);
                if label[ts] != label[tu] {
                    for &o in [s, u] {
                        let (k, e) = cell_elements[o / 3];
                        regions[k].switching_edges.push((e, o % 3));
                    }
                }
            }
            _ => return Err(Error::Mesh("non-manifold edge".into())),
        }
    }
    for r in regions.iter_mut() {
        r.domain_edges.sort_unstable();
        r.switching_edges.sort_unstable();
    }
    if regions[A].elements.is_empty() || regions[B].elements.is_empty() {
        return Err(Error::Mesh("one region has no elements".into()));
    }

    let regions: [RegionMesh; 2] = regions.try_into().expect("two regions");
    let dom = Domain {
        theta_min: -(i0 as f64) * dtheta,
        theta_max: (nt - 1 - i0) as f64 * dtheta,
        omega_min: -(j0 as f64) * domega,
        omega_max: (no - 1 - j0) as f64 * domega,
    };
    Ok(Mesh {
        domain: dom,
        dtheta,
        domega,
        a,
        n_theta: nt,
        n_omega: no,
        i0,
        j0,
        regions,
        pairing,
        cell_elements,
    })
}

/// Deduplication operators. R is stored as the pairing list.
#[derive(Clone, Debug)]
pub struct DedupOperators {
    pub n_a: usize,
    pub n_b: usize,
    pub pairing: Vec<(usize, usize)>,
    pub l_a: Extractor,
    pub l_b: Extractor,
    pub l_b_interior: Extractor,
}

impl DedupOperators {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        Self {
            n_a: mesh.n_a(),
            n_b: mesh.n_b(),
            pairing: mesh.pairing.clone(),
            l_a: mesh.switching_extractor(A),
            l_b: mesh.switching_extractor(B),
            l_b_interior: mesh.b_interior_extractor(),
        }
    }

    /// Operators from bare index data (used by the toy fixture).
    pub fn from_pairing(n_a: usize, n_b: usize, pairing: Vec<(usize, usize)>) -> Self {
        let l_a = Extractor {
            n_cols: n_a,
            idx: pairing.iter().map(|p| p.0).collect(),
        };
        let l_b = Extractor {
            n_cols: n_b,
            idx: pairing.iter().map(|p| p.1).collect(),
        };
        let mut shared = vec![false; n_b];
        for p in &pairing {
            shared[p.1] = true;
        }
        let l_b_interior = Extractor {
            n_cols: n_b,
            idx: (0..n_b).filter(|&n| !shared[n]).collect(),
        };
        Self {
            n_a,
            n_b,
            pairing,
            l_a,
            l_b,
            l_b_interior,
        }
    }

    pub fn n_s(&self) -> usize {
        self.pairing.len()
    }

    pub fn n_total(&self) -> usize {
        self.n_a + self.n_b
    }

    pub fn n_dedup(&self) -> usize {
        self.n_total() - self.n_s()
    }

    /// Z_elm: drops the B copies of shared nodes.
    pub fn eliminate(&self, p_rdn: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_dedup());
        out.extend_from_slice(&p_rdn[..self.n_a]);
        out.extend(self.l_b_interior.idx.iter().map(|&n| p_rdn[self.n_a + n]));
        out
    }

    /// Z_cmb: copies A values onto the B copies of shared nodes.
    pub fn combine(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_total()];
        out[..self.n_a].copy_from_slice(&p[..self.n_a]);
        for (r, &n) in self.l_b_interior.idx.iter().enumerate() {
            out[self.n_a + n] = p[self.n_a + r];
        }
        for &(ia, ib) in &self.pairing {
            out[self.n_a + ib] = p[ia];
        }
        out
    }

    /// Z_cmb^T: folds redundant weights onto deduplicated slots.
    pub fn combine_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_dedup());
        out.extend_from_slice(&y[..self.n_a]);
        out.extend(self.l_b_interior.idx.iter().map(|&n| y[self.n_a + n]));
        for &(ia, ib) in &self.pairing {
            out[ia] += y[self.n_a + ib];
        }
        out
    }

    /// R as a dense N_A x N_B matrix.
    pub fn r_dense(&self) -> Vec<Vec<f64>> {
        let mut r = vec![vec![0.0; self.n_b]; self.n_a];
        for &(ia, ib) in &self.pairing {
            r[ia][ib] = 1.0;
        }
        r
    }

    pub fn z_elm_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_total();
        let mut z = Vec::with_capacity(self.n_dedup());
        for i in 0..self.n_a {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            z.push(row);
        }
        for &c in &self.l_b_interior.idx {
            let mut row = vec![0.0; n];
            row[self.n_a + c] = 1.0;
            z.push(row);
        }
        z
    }

    pub fn z_cmb_dense(&self) -> Vec<Vec<f64>> {
        let nd = self.n_dedup();
        let mut z = vec![vec![0.0; nd]; self.n_total()];
        for (i, row) in z.iter_mut().enumerate().take(self.n_a) {
            row[i] = 1.0;
        }
        for (r, &c) in self.l_b_interior.idx.iter().enumerate() {
            z[self.n_a + c][self.n_a + r] = 1.0;
        }
        for &(ia, ib) in &self.pairing {
            z[self.n_a + ib][ia] = 1.0;
        }
        z
    }
}

pub fn build_dedup(mesh: &Mesh) -> DedupOperators {
    DedupOperators::from_mesh(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Mesh {
        let d = Domain {
            theta_min: -1.0,
            theta_max: 1.0,
            omega_min: -1.0,
            omega_max: 1.0,
        };
        build_mesh(d, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn tiny_counts() {
        let m = tiny();
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.n_s(), 5);
        assert_eq!(m.n_a(), 7);
        assert_eq!(m.n_b(), 7);
        assert_eq!(m.n_dedup(), 9);
        let pts = m.switching_extractor(A);
        let xs: Vec<Vec2> = pts.idx.iter().map(|&n| m.regions[A].nodes[n]).collect();
        assert_eq!(
            xs,
            vec![[0.0, -1.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        );
    }

    #[test]
    fn tiny_element_extractor() {
        // quadrant I lower-left triangle: grid nodes 4, 5, 7 -> A serials 4, 5, 6
        let m = tiny();
        let r = &m.regions[A];
        let e = r
            .elements
            .iter()
            .position(|el| el.iter().map(|&n| r.grid[n]).collect::<Vec<_>>() == vec![4, 5, 7])
            .unwrap();
        let ex = r.element_extractor(e);
        let one_based: Vec<usize> = ex.idx.iter().map(|n| n + 1).collect();
        assert_eq!(one_based, vec![4, 5, 6]);
        let p: Vec<f64> = (0..r.len()).map(|n| n as f64 * 1.5).collect();
        let g = ex.gather(&p);
        assert_eq!(g, vec![4.5, 6.0, 7.5]);
        let s = ex.scatter(&[1.0, 1.0, 1.0]);
        assert_eq!(s.iter().filter(|&&v| v != 0.0).count(), 3);
    }

    #[test]
    fn full_mesh_counts() {
        let m = build_mesh(Domain::default(), 0.0005, 0.0002, -0.4).unwrap();
        assert_eq!(m.n_theta * m.n_omega, 80_601);
        assert_eq!(m.n_elements(), 160_000);
        assert_eq!(m.n_s(), 401);
        assert!(m.snapping_error().0 < 1e-15);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(build_mesh(Domain::default(), 0.003, 0.0008, -0.4).is_err());
        let d = Domain {
            theta_min: 0.01,
            theta_max: 0.1,
            omega_min: -0.02,
            omega_max: 0.02,
        };
        assert!(build_mesh(d, 0.001, 0.0008, -0.4).is_err());
    }

    #[test]
    fn dedup_algebra() {
        let m = tiny();
        let z = DedupOperators::from_mesh(&m);
        let p: Vec<f64> = (0..z.n_dedup()).map(|i| i as f64 + 0.5).collect();
        assert_eq!(z.eliminate(&z.combine(&p)), p);
        let r = z.r_dense();
        assert_eq!(r.iter().flatten().filter(|&&v| v == 1.0).count(), m.n_s());
    }
}
