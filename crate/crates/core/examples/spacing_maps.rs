//! Unconstrained head outputs mapped onto feasible placements and powers.

use ris_pass::feasible::{normalize_power, raw_power, raw_to_spacing, spacing_to_positions};
use ris_pass::scenario::SystemParams;

fn main() {
    let p = SystemParams::desk_default().with_dims(2, 4, 0, 3);
    println!("D = {} m, Δmin = {} m, δmax = {} m", p.region_length, p.min_spacing, p.max_total_spacing());
    for raw in [vec![vec![-4.0; 4], vec![0.0; 4]], vec![vec![3.0, -1.0, 0.5, 9.0], vec![-9.0, -9.0, -9.0, 9.0]]] {
        let sv = raw_to_spacing(&raw, &p);
        let x = spacing_to_positions(&sv, &p);
        for (r, row) in raw.iter().zip(x.rows()) {
            println!("raw {r:?}\n  → x {:?}", row.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>());
        }
        x.check_feasible(&p).expect("always feasible");
    }
    let powers = normalize_power(&raw_power(&[5.0, 5.0, 5.0], &p), &p);
    println!("powers {powers:?}, total {:.6} W of {} W", powers.iter().sum::<f64>(), p.power_budget);
}
