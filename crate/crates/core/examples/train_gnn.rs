//! Trains the three-stage network on a small desk problem and compares the
//! three inference strategies with a random baseline.
//!
//! `cargo run --release --example train_gnn -- [epochs]`

use ris_pass::gnn::{BeamHead, GnnConfig, GnnModel, Network, SystemConfig};
use ris_pass::harness::{baseline_eval, EvalOptions, Method};
use ris_pass::scenario::{sample_dataset, SystemParams};
use ris_pass::train::{init_params, print_history, split_dataset, train, TrainConfig};

fn main() -> ris_pass::error::Result<()> {
    let epochs = std::env::args().nth(1).map_or(8, |a| a.parse().expect("epoch count"));
    let p = SystemParams::desk_default();
    let data = sample_dataset(&p, 1000, 1000);
    let cfg = TrainConfig { epochs, seed: 7, ..TrainConfig::default() };
    let (_, _, test) = split_dataset(&data, cfg.split);
    let opts = EvalOptions::default();

    let mut three = GnnModel::new(GnnConfig { hidden: 32, ..GnnConfig::default() }, &p)?;
    init_params(&mut three.store, 7);
    let mut three = Network::Gnn(three);
    let report = train(&mut three, &data, &p, &cfg)?;
    print_history(&report.history, std::io::stdout().lock())?;

    let mut two = GnnModel::new(GnnConfig { hidden: 32, beams: BeamHead::Rzf, ..GnnConfig::default() }, &p)?;
    init_params(&mut two.store, 7);
    let mut two = Network::Gnn(two);
    train(&mut two, &data, &p, &cfg)?;

    let rows = [
        (Method::StrategyI, Some(&three)),
        (Method::StrategyII, Some(&three)),
        (Method::StrategyIII, Some(&two)),
        (Method::Random, None),
    ];
    for (method, net) in rows {
        let r = baseline_eval(SystemConfig::RisPa, method, net, test, &p, &opts)?;
        println!(
            "{:<8} SR {:7.3}  EE {:6.3}  median {:7.3} ms  feasible {}",
            method.label(),
            r.mean_sr,
            r.mean_ee,
            r.median_time_ms,
            r.all_feasible
        );
    }
    Ok(())
}
