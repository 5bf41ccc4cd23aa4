//! Sum rate of a single user as one pinching antenna slides along its
//! waveguide. The fast ripple is the direct path beating against the RIS
//! path; the slow envelope is path loss.

use ris_pass::beamform::mrt;
use ris_pass::channel::{effective_channel, PaPlacement};
use ris_pass::objective::{sum_rate_from_channels, RisConfig};
use ris_pass::scenario::{sample_scenario, SystemParams};

fn main() -> ris_pass::error::Result<()> {
    let p = SystemParams::desk_default().with_dims(2, 1, 4, 1);
    let s = sample_scenario(&p, 3);
    let [ux, uy, _] = s.user_positions[0];
    println!("user at ({ux:.2}, {uy:.2}) m, RIS at {:?}", p.ris_position);
    println!("{:>6}  {:>8}  {:>8}", "x (m)", "SR", "no RIS");
    let bare = p.clone().without_ris();
    for i in 0..=20 {
        let x = i as f64 * p.region_length / 20.0;
        let placement = PaPlacement::new(vec![vec![x], vec![ux.clamp(0.0, p.region_length)]]);
        let z = effective_channel(&placement, &RisConfig::identity(p.n_ris), &s, &p)?;
        let z0 = effective_channel(&placement, &RisConfig::identity(0), &s, &bare)?;
        let sr = sum_rate_from_channels(&z, &mrt(&z, &[p.power_budget]).w, p.noise_power);
        let sr0 = sum_rate_from_channels(&z0, &mrt(&z0, &[p.power_budget]).w, p.noise_power);
        println!("{x:6.2}  {sr:8.4}  {sr0:8.4}");
    }
    Ok(())
}
