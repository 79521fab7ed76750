use std::sync::OnceLock;

use proptest::prelude::*;

use hybrid_fpk::assembly::{build_transition, AssembledSystem, MassMode, TransitionOperator};
use hybrid_fpk::chain::{from_grid, to_grid};
use hybrid_fpk::io::{fmt_g17, Grid};
use hybrid_fpk::mesh::{build_mesh, DedupOperators, Domain, Mesh, A, B};
use hybrid_fpk::model::{classify_slope, derive_system, ratio_from_slope, slope_from_ratio, ModelParams, Region};

struct Small {
    mesh: Mesh,
    asm: AssembledSystem,
    op: TransitionOperator,
}

fn small() -> &'static Small {
    static S: OnceLock<Small> = OnceLock::new();
    S.get_or_init(|| {
        let mesh = build_mesh(Domain::default(), 0.004, 0.002, -0.4).unwrap();
        let sys = derive_system(&ModelParams::default()).unwrap();
        let asm = AssembledSystem::new(&mesh, &sys, 1e-3, MassMode::Consistent).unwrap();
        let op = build_transition(&asm).unwrap();
        Small { mesh, asm, op }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regions_are_point_symmetric(a in -3.0f64..1.0, t in -1.0f64..1.0, w in -1.0f64..1.0) {
        prop_assert_eq!(classify_slope(a, [t, w]), classify_slope(a, [-t, -w]));
    }

    #[test]
    fn ratio_round_trip(r in 0.01f64..0.99) {
        let a = slope_from_ratio(r).unwrap();
        prop_assert!((ratio_from_slope(a) - r).abs() < 1e-12);
    }

    #[test]
    fn off_arc_matches_ratio(r in 0.3f64..0.9, t in 0.0f64..std::f64::consts::TAU) {
        // rays in S_off fill angles of total length 2 pi (1 - ratio)
        use std::f64::consts::{FRAC_PI_2, PI};
        let a = slope_from_ratio(r).unwrap();
        let c = classify_slope(a, [t.cos(), t.sin()]);
        let u = (t - FRAC_PI_2).rem_euclid(PI);
        let edge = a.atan() + FRAC_PI_2;
        prop_assume!(c != Region::Boundary && u > 1e-9 && (u - edge).abs() > 1e-9);
        prop_assert_eq!(c == Region::Off, u < edge);
        prop_assert!((edge / PI - (1.0 - r)).abs() < 1e-12);
    }

    #[test]
    fn extractor_round_trip(v in prop::collection::vec(-1.0f64..1.0, 1usize..2)) {
        let s = small();
        let r = &s.mesh.regions[A];
        let n = r.nodes.len();
        let p: Vec<f64> = (0..n).map(|i| v[0] * i as f64).collect();
        for e in [0, r.elements.len() / 2, r.elements.len() - 1] {
            let ex = r.element_extractor(e);
            let y = ex.gather(&p);
            let back = ex.scatter(&y);
            for (k, &i) in ex.idx.iter().enumerate() {
                prop_assert_eq!(back[i], y[k]);
            }
            prop_assert_eq!(back.iter().filter(|x| **x != 0.0).count() <= 3, true);
        }
    }

    #[test]
    fn grid_text_round_trip(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 12)) {
        let g = Grid {
            theta_min: -0.1,
            theta_max: 0.1,
            n_theta: 4,
            omega_min: -0.02,
            omega_max: 0.02,
            n_omega: 3,
            values: vals,
        };
        prop_assert_eq!(Grid::parse(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn g17_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL) {
        prop_assert_eq!(fmt_g17(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn psi_conserves_mass(seed in prop::collection::vec(0.0f64..1.0, 16)) {
        let s = small();
        let n = s.op.n();
        let p: Vec<f64> = (0..n).map(|i| seed[i % 16] * (1.0 + (i % 7) as f64)).collect();
        let q = s.op.step(&p);
        let (m0, m1) = (s.asm.mass(&p), s.asm.mass(&q));
        prop_assert!((m1 - m0).abs() <= 1e-10 * m0, "{} -> {}", m0, m1);
    }

    #[test]
    fn dedup_consistency(na in 2usize..12, nb in 2usize..12, k in 1usize..3) {
        let ns = k.min(na).min(nb);
        let pairing: Vec<(usize, usize)> = (0..ns).map(|i| (na - 1 - i, i)).collect();
        let z = DedupOperators::from_pairing(na, nb, pairing);
        let p: Vec<f64> = (0..z.n_dedup()).map(|i| i as f64 * 0.5 - 1.0).collect();
        let rdn = z.combine(&p);
        prop_assert_eq!(rdn.len(), na + nb);
        prop_assert_eq!(z.eliminate(&rdn), p.clone());
        // combine duplicates shared values; the transpose sums them back
        let ones = vec![1.0; na + nb];
        let c = z.combine_transpose(&ones);
        prop_assert_eq!(c.iter().filter(|v| **v == 2.0).count(), ns);
        let dot1: f64 = rdn.iter().sum();
        let dot2: f64 = c.iter().zip(&p).map(|(a, b)| a * b).sum();
        prop_assert!((dot1 - dot2).abs() < 1e-12);
    }

    #[test]
    fn grid_mapping_round_trip(v in prop::collection::vec(-5.0f64..5.0, 8)) {
        let s = small();
        let p: Vec<f64> = (0..s.mesh.n_dedup()).map(|i| v[i % 8] + i as f64).collect();
        prop_assert_eq!(from_grid(&s.mesh, &to_grid(&s.mesh, &p)), p);
    }
}

#[test]
fn mesh_regions_are_point_symmetric() {
    let s = small();
    let m = &s.mesh;
    // every element maps under x -> -x onto an element of the same region
    for k in [A, B] {
        let r = &m.regions[k];
        let mut keys: Vec<Vec<(i64, i64)>> = r
            .elements
            .iter()
            .map(|el| {
                let mut v: Vec<(i64, i64)> = el
                    .iter()
                    .map(|&n| ((r.nodes[n][0] / m.dtheta).round() as i64, (r.nodes[n][1] / m.domega).round() as i64))
                    .collect();
                v.sort();
                v
            })
            .collect();
        keys.sort();
        for key in &keys {
            let mut mirror: Vec<(i64, i64)> = key.iter().map(|&(i, j)| (-i, -j)).collect();
            mirror.sort();
            assert!(keys.binary_search(&mirror).is_ok());
        }
    }
    assert_eq!(m.regions[A].nodes.len() + m.regions[B].nodes.len() - m.n_s(), m.n_dedup());
    let _ = B;
}
