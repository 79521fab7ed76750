use hybrid_fpk::chain::marginal_theta;
use hybrid_fpk::model::ModelParams;
use hybrid_fpk::montecarlo::McConfig;
use hybrid_fpk::sweep::{chain_stationary, stability_probe, sweep, MeshSpec, Stability, SweepMethod, SweepParam, SweepSettings};

fn settings(mesh: MeshSpec) -> SweepSettings {
    SweepSettings {
        mesh,
        mc: McConfig {
            paths: 50,
            t_end: 5.0,
            dt: 1e-3,
            record_stride: 5000,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn coarse() -> MeshSpec {
    MeshSpec {
        dtheta: 0.004,
        domega: 0.002,
        ..MeshSpec::default()
    }
}

#[test]
fn zero_noise_chain_is_unreliable() {
    let p = ModelParams {
        sigma: 0.0,
        ..Default::default()
    };
    let s = settings(coarse());
    assert_eq!(stability_probe(&p, SweepMethod::Chain, &s).unwrap(), Stability::Unreliable);
    let r = sweep(SweepParam::Sigma, &[0.0], &ModelParams::default(), SweepMethod::Chain, &s).unwrap();
    assert_eq!(r.points[0].stability, Stability::Unreliable);
    assert!(r.points[0].marginal.is_none());
}

#[test]
fn failed_point_is_recorded_and_sweep_continues() {
    // I - D*delta < 0 at delta = 7
    let s = settings(coarse());
    let r = sweep(SweepParam::Delta, &[7.0, 0.2], &ModelParams::default(), SweepMethod::McSdde, &s).unwrap();
    assert_eq!(r.points.len(), 2);
    assert_eq!(r.points[0].stability, Stability::Unstable);
    assert!(r.points[0].note.contains("positive"), "{}", r.points[0].note);
    assert_eq!(r.points[1].stability, Stability::Stable);
    let m = r.points[1].marginal.as_ref().unwrap();
    assert_eq!(m.len(), r.theta.len());
}

#[test]
fn delay_keeps_the_marginal_bimodal() {
    // raw chain marginals; the sweep's negative-mass flag is not the point here
    let spec = MeshSpec::desk();
    for delta in [0.0, 0.1, 0.2, 0.3, 0.4] {
        let p = ModelParams {
            delta,
            ..Default::default()
        };
        let mesh = spec.build(p.a).unwrap();
        let (_, st) = chain_stationary(&p, &mesh).unwrap();
        let (theta, m) = marginal_theta(&mesh, &st.p.values);
        let centre = theta.iter().position(|t| t.abs() < 1e-12).unwrap();
        let top = m.iter().cloned().fold(0.0, f64::max);
        assert!(m[centre] < top, "delta {delta}");
        let peak = (0..m.len()).fold(0, |b, i| if m[i] > m[b] { i } else { b });
        let mirror = 2 * centre - peak;
        assert!((m[mirror] - m[peak]).abs() < 1e-9 * top, "delta {delta}");
    }
}

#[test]
fn peaks_move_inward_as_ratio_grows() {
    let s = settings(MeshSpec::desk());
    let r = sweep(SweepParam::Ratio, &[0.5, 0.56, 0.62, 0.7, 0.75], &ModelParams::default(), SweepMethod::Chain, &s).unwrap();
    let mut last = f64::INFINITY;
    for pt in r.points.iter().filter(|p| p.stability == Stability::Stable) {
        let m = pt.marginal.as_ref().unwrap();
        let i = (0..m.len()).fold(0, |b, i| if m[i] > m[b] { i } else { b });
        let peak = r.theta[i].abs();
        assert!(peak <= last + 1e-12, "ratio {}: {peak} after {last}", pt.value);
        last = peak;
    }
    assert!(last.is_finite());
}
