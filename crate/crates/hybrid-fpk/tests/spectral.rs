use std::sync::OnceLock;

use hybrid_fpk::assembly::{build_transition, AssembledSystem, MassMode, TransitionOperator};
use hybrid_fpk::chain::{stationary, NullMethod};
use hybrid_fpk::mesh::{build_mesh, Domain};
use hybrid_fpk::model::{derive_system, ModelParams};
use hybrid_fpk::spectral::{autocorrelation, chain_spectrum, theta_mean};

struct Fixture {
    asm: AssembledSystem,
    op: TransitionOperator,
    p: Vec<f64>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mesh = build_mesh(Domain::default(), 0.004, 0.002, -0.4).unwrap();
        let sys = derive_system(&ModelParams::default()).unwrap();
        let asm = AssembledSystem::new(&mesh, &sys, 2e-3, MassMode::Consistent).unwrap();
        let op = build_transition(&asm).unwrap();
        let p = stationary(&asm, NullMethod::Auto).unwrap().p.values;
        Fixture { asm, op, p }
    })
}

#[test]
fn stride_subsamples_the_lag_sequence() {
    let f = fixture();
    let a = autocorrelation(&f.op, &f.asm.theta, &f.asm.c, &f.p, 40, 1).unwrap();
    let b = autocorrelation(&f.op, &f.asm.theta, &f.asm.c, &f.p, 20, 2).unwrap();
    for (j, v) in b.iter().enumerate() {
        assert!((v - a[2 * j]).abs() <= 1e-14 * a[0], "lag {j}");
    }
}

#[test]
fn zero_lag_is_the_second_moment() {
    let f = fixture();
    let r = autocorrelation(&f.op, &f.asm.theta, &f.asm.c, &f.p, 1, 1).unwrap();
    let m2: f64 = (0..f.p.len()).map(|n| f.asm.c[n] * f.asm.theta[n].powi(2) * f.p[n]).sum();
    assert!((r[0] - m2).abs() < 1e-15);
    // symmetric density has zero mean
    let mean = theta_mean(&f.asm, &f.p);
    assert!(mean.abs() < 1e-8 * m2.sqrt(), "{mean} {m2}");
}

#[test]
fn spectrum_integrates_to_the_variance_and_decorrelates() {
    let f = fixture();
    let s = chain_spectrum(&f.op, &f.asm, &f.p, 60.0, 4096).unwrap();
    let var = s.autocorr[0] - s.mean * s.mean;
    let df = s.freqs[1] - s.freqs[0];
    let total: f64 = s.psd.iter().sum::<f64>() * df;
    assert!((total - var).abs() < 1e-9 * var, "{total} {var}");
    let tail = s.autocorr[s.autocorr.len() - 1] - s.mean * s.mean;
    assert!(tail.abs() < 0.05 * var, "{tail} {var}");
    assert_eq!(s.stride, 8);
}
