//! What the RIS and movable antennas buy without any learning: beams
//! optimized over the fixed geometry, with and without the surface, against
//! the grid oracle that also moves the antennas.

use ris_pass::gnn::SystemConfig;
use ris_pass::harness::{baseline_eval, grid_oracle, EvalOptions, GridSpec, Method};
use ris_pass::scenario::{sample_dataset, SystemParams};

fn main() -> ris_pass::error::Result<()> {
    let p = SystemParams::desk_default().with_dims(2, 1, 2, 1);
    let data = sample_dataset(&p, 9, 20);
    let opts = EvalOptions::default();
    for system in [SystemConfig::RisPa, SystemConfig::FixedPaOnly] {
        let r = baseline_eval(system, Method::RefineOnly, None, &data, &p, &opts)?;
        println!("{:<14} fixed geometry, refined beams: mean SR {:.4}", system.label(), r.mean_sr);
    }
    for system in [SystemConfig::RisPa, SystemConfig::PaOnly] {
        let sp = system.apply(&p);
        let mut total = 0.0;
        for s in &data {
            total += grid_oracle(s, &sp, &GridSpec::default())?.value;
        }
        println!("{:<14} grid oracle: mean SR {:.4}", system.label(), total / data.len() as f64);
    }
    Ok(())
}
