//! Exhaustive reference solutions on single-user instances, next to random
//! feasible ones and the fixed-geometry beam optimizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ris_pass::harness::{grid_oracle, grid_size, random_solution, refine_only, GridSpec};
use ris_pass::objective::{sum_rate, Objective};
use ris_pass::scenario::{sample_dataset, SystemParams};

fn main() -> ris_pass::error::Result<()> {
    let p = SystemParams::desk_default().with_dims(2, 1, 2, 1);
    let grid = GridSpec::default();
    println!("{} channel evaluations per instance", grid_size(&p, &grid)?);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("{:>3}  {:>8}  {:>8}  {:>8}  {:>8}  placement", "id", "oracle", "grid", "fixed", "random");
    for (i, s) in sample_dataset(&p, 42, 5).iter().enumerate() {
        let o = grid_oracle(s, &p, &grid)?;
        let fixed = sum_rate(&refine_only(s, &p, Objective::SumRate, 500)?, s, &p)?;
        let random = sum_rate(&random_solution(s, &p, &mut rng)?, s, &p)?;
        let x: Vec<String> = o.solution.placement().flat().iter().map(|v| format!("{v:.3}")).collect();
        println!("{i:3}  {:8.4}  {:8.4}  {fixed:8.4}  {random:8.4}  [{}]", o.value, o.grid_value, x.join(", "));
    }
    let big = SystemParams::desk_default();
    match grid_oracle(&sample_dataset(&big, 0, 1)[0], &big, &grid) {
        Err(e) => println!("desk system: {e}"),
        Ok(_) => unreachable!("the desk grid is far beyond the cap"),
    }
    Ok(())
}
