//! Calibration of the FEM vs Monte Carlo distance bound on the desk preset.
//!
//! Prints the chain-vs-MC distances next to the MC-vs-MC sampling floor
//! (two seeds) and the S-ODE vs S-DDE gap. Output is kept in
//! `calibration/fem_vs_mc.txt`.
//!
//!     cargo run --release -p hybrid-fpk --example calibrate

use hybrid_fpk::chain::stationary;
use hybrid_fpk::config::RunConfig;
use hybrid_fpk::montecarlo::{compare_pdf, element_averages, ensemble_at, ensemble_histogram, Method};
use hybrid_fpk::sweep::chain_stationary;

fn main() -> hybrid_fpk::Result<()> {
    let cfg = RunConfig::load(None, &[], true)?;
    let mesh = cfg.mesh.build(cfg.model.a)?;
    let (asm, _) = chain_stationary(&cfg.model, &mesh)?;
    let st = stationary(&asm, cfg.sim.null_method)?;
    let fem = element_averages(&mesh, &st.p.values);
    let mc = cfg.mc_config();
    let hist = |method: Method, seed: u64| -> hybrid_fpk::Result<Vec<f64>> {
        let mut c = mc.clone();
        c.seed = seed;
        let ends = ensemble_at(&cfg.model, &c, method, c.steps())?;
        Ok(ensemble_histogram(&ends, &mesh)?.density)
    };
    let sode_a = hist(Method::Sode, mc.seed)?;
    let sode_b = hist(Method::Sode, mc.seed + 1)?;
    let sdde = hist(Method::Sdde, mc.seed)?;
    println!(
        "desk mesh {}x{} nodes, {} paths, t = {} s, dt = {} s",
        mesh.n_theta, mesh.n_omega, mc.paths, mc.t_end, mc.dt
    );
    println!("negative mass of chain density {:.3e}", st.negative_mass);
    let rows = [
        ("chain vs S-ODE", &fem, &sode_a),
        ("chain vs S-ODE seed+1", &fem, &sode_b),
        ("chain vs S-DDE", &fem, &sdde),
        ("S-ODE vs S-ODE seed+1", &sode_a, &sode_b),
        ("S-ODE vs S-DDE", &sode_a, &sdde),
    ];
    for (name, a, b) in rows {
        let d = compare_pdf(&mesh, a, b)?;
        println!(
            "{name:<24} l1={:.4} hellinger={:.4} peak_gap={}",
            d.l1, d.hellinger, d.peak_gap
        );
    }
    Ok(())
}
