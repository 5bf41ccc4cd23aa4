//! Datasets and trained networks round-trip through JSON bit for bit.

use ris_pass::gnn::checkpoint::{load_network, save_network, store_digest};
use ris_pass::gnn::{GnnConfig, GnnModel, Network};
use ris_pass::harness::strategy_i;
use ris_pass::io::DatasetDoc;
use ris_pass::scenario::SystemParams;
use ris_pass::train::init_params;

fn main() -> ris_pass::error::Result<()> {
    let dir = std::env::temp_dir().join("ris-pass-checkpoints");
    std::fs::create_dir_all(&dir)?;
    let p = SystemParams::desk_default();

    let doc = DatasetDoc::generate(&p, 5, 16)?;
    doc.save(&dir.join("dataset.json"))?;
    let back = DatasetDoc::load(&dir.join("dataset.json"))?;
    println!("dataset: {} scenarios, identical after reload: {}", back.scenarios.len(), back == doc);

    let mut m = GnnModel::new(GnnConfig { hidden: 16, ..GnnConfig::default() }, &p)?;
    init_params(&mut m.store, 3);
    let net = Network::Gnn(m);
    save_network(&net, &p, &dir.join("model.json"))?;
    let (loaded, params) = load_network(&dir.join("model.json"))?;
    println!("weights digest {} / {}", store_digest(net.store()), store_digest(loaded.store()));
    let a = strategy_i(&net, &doc.scenarios[0], &p)?;
    let b = strategy_i(&loaded, &doc.scenarios[0], &params)?;
    println!("same solution after reload: {}", a == b);
    Ok(())
}
