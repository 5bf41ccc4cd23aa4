//! Closed-form beams on one multi-user channel, then gradient refinement for
//! both objectives.

use ris_pass::beamform::{assemble_hzm, mrt, refine_beams, rzf_default, HzmParams};
use ris_pass::channel::effective_channel;
use ris_pass::objective::{ee_from_parts, sum_rate_from_channels, Beamformer, Objective, RisConfig};
use ris_pass::scenario::{fixed_pa_placement, sample_scenario, SystemParams};

fn main() -> ris_pass::error::Result<()> {
    let p = SystemParams::desk_default().with_dims(4, 2, 8, 3);
    let s = sample_scenario(&p, 11);
    let z = effective_channel(&fixed_pa_placement(&p)?, &RisConfig::identity(p.n_ris), &s, &p)?;
    let k = z.nrows();
    let share = vec![p.power_budget / k as f64; k];

    let report = |name: &str, b: &Beamformer| {
        let sr = sum_rate_from_channels(&z, &b.w, p.noise_power);
        let ee = ee_from_parts(sr, b.power(), p.circuit_power);
        println!("{name:<24} SR {sr:8.4}  EE {ee:7.4}  power {:6.3} W", b.power());
    };
    report("MRT", &mrt(&z, &share));
    for alpha in [0.5, 1.0] {
        let b = assemble_hzm(&HzmParams { alpha: vec![alpha; k], power: share.clone() }, &z)?;
        report(&format!("hybrid α={alpha}"), &b);
    }
    let rzf = rzf_default(&z, &p)?;
    report("regularized ZF", &rzf);
    for objective in [Objective::SumRate, Objective::EnergyEfficiency] {
        let r = refine_beams(&z, &p, objective, &rzf, 500)?;
        report(&format!("refined {objective:?}"), &r.beam);
        println!("{:<24} {} steps, converged: {}", "", r.iterations, r.converged);
    }
    Ok(())
}
