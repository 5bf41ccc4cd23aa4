use super::*;
use crate::gnn::{GnnConfig, GnnModel};
use crate::scenario::sample_dataset;

fn tiny() -> SystemParams {
    SystemParams::desk_default().with_dims(2, 2, 4, 2)
}

fn model(params: &SystemParams, seed: u64) -> Network {
    let mut m = GnnModel::new(GnnConfig { hidden: 6, ..GnnConfig::default() }, params).unwrap();
    init_params(&mut m.store, seed);
    Network::Gnn(m)
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 8, patience: 100, seed: 3, ..TrainConfig::default() }
}

#[test]
fn adam_first_step_moves_by_the_learning_rate() {
    let mut store = ParamStore::default();
    store.add("w", &[2], Init::Zeros);
    let mut adam = Adam::new(&store);
    adam.step(&mut store, &[vec![C64::new(1.0, 0.0), C64::new(0.0, -3.0)]], 1e-3);
    assert!((store.params[0].value[0].re + 1e-3).abs() < 1e-10);
    assert_eq!(store.params[0].value[0].im, 0.0);
    assert!((store.params[0].value[1].im - 1e-3).abs() < 1e-10);

    let snapshot = store.clone();
    adam.step(&mut store, &[vec![C64::new(0.0, 0.0); 2]], 1e-3);
    // With zero gradient the decayed first moment still moves the value,
    // but only along the earlier direction.
    assert!(store.params[0].value[0].re < snapshot.params[0].value[0].re);
    assert_eq!(adam.steps(), 2);

    let mut fresh = ParamStore::default();
    fresh.add("w", &[1], Init::Zeros);
    let mut adam = Adam::new(&fresh);
    adam.step(&mut fresh, &[vec![C64::new(0.0, 0.0)]], 1e-3);
    assert_eq!(fresh.params[0].value[0], C64::new(0.0, 0.0));
}

#[test]
fn real_parameters_ignore_imaginary_gradients() {
    let mut store = ParamStore::default();
    store.add_real("w", &[1], Init::KaimingReal { fan_in: 1 });
    let mut adam = Adam::new(&store);
    adam.step(&mut store, &[vec![C64::new(1.0, 5.0)]], 1e-2);
    assert_eq!(store.params[0].value[0].im, 0.0);
}

#[test]
fn kaiming_statistics() {
    let mut store = ParamStore::default();
    store.add("w", &[1000, 1000], Init::Kaiming { fan_in: 50 });
    store.add("b", &[10], Init::Zeros);
    store.add("r", &[100_000], Init::KaimingReal { fan_in: 8 });
    init_params(&mut store, 1);
    let w = &store.params[0].value;
    let n = w.len() as f64;
    let var = w.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
    assert!((var / (2.0 / 50.0) - 1.0).abs() < 0.03);
    let re_var = w.iter().map(|z| z.re * z.re).sum::<f64>() / n;
    assert!((re_var / (1.0 / 50.0) - 1.0).abs() < 0.03);
    assert!(store.params[1].value.iter().all(|z| *z == C64::new(0.0, 0.0)));
    let r = &store.params[2].value;
    let rv = r.iter().map(|z| z.re * z.re).sum::<f64>() / r.len() as f64;
    assert!((rv / 0.25 - 1.0).abs() < 0.03);
    assert!(r.iter().all(|z| z.im == 0.0));

    let mut again = store.clone();
    init_params(&mut again, 1);
    assert_eq!(again, store);
    init_params(&mut again, 2);
    assert_ne!(again, store);
}

#[test]
fn learning_rate_schedule_and_split() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(0), 1e-3);
    assert_eq!(cfg.lr_at(49), 1e-3);
    assert!((cfg.lr_at(50) - 1e-4).abs() < 1e-18);
    assert!((cfg.lr_at(99) - 1e-5).abs() < 1e-18);

    let data = sample_dataset(&tiny(), 0, 10);
    let (a, b, c) = split_dataset(&data, [0.8, 0.1, 0.1]);
    assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
    assert_eq!(a[0], data[0]);
    assert_eq!(c[0], data[9]);

    let bad = TrainConfig { split: [0.5, 0.1, 0.1], ..TrainConfig::default() };
    assert!(bad.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
}

#[test]
fn zero_epochs_leave_the_model_alone() {
    let p = tiny();
    let mut net = model(&p, 1);
    let before = net.clone();
    let data = sample_dataset(&p, 0, 20);
    let report = train(&mut net, &data, &p, &quick(0)).unwrap();
    assert!(report.history.is_empty());
    assert_eq!(report.best_epoch, None);
    assert_eq!(net, before);
    assert_eq!(report.initial_train_loss, report.final_train_loss);
}

#[test]
fn training_is_reproducible_and_keeps_the_best_epoch() {
    let p = tiny();
    let data = sample_dataset(&p, 5, 60);
    let mut a = model(&p, 2);
    let mut b = model(&p, 2);
    let ra = train(&mut a, &data, &p, &quick(4)).unwrap();
    let rb = train(&mut b, &data, &p, &quick(4)).unwrap();
    assert_eq!(ra.history, rb.history);
    assert_eq!(a, b);

    let best = ra.best_epoch.unwrap();
    let best_val = ra.history[best - 1].val_loss;
    assert!(ra.history.iter().all(|r| best_val <= r.val_loss));
    let (train_set, val_set, _) = split_dataset(&data, [0.8, 0.1, 0.1]);
    let val = evaluate(&a, val_set, &p, Objective::SumRate, Mode::Eval, 8).unwrap();
    assert_eq!(val.loss, best_val);
    // The recorded training loss is the mean reciprocal sum rate of the
    // selected parameters.
    let e = evaluate(&a, train_set, &p, Objective::SumRate, Mode::Train, 8).unwrap();
    let direct = e.sum_rates.iter().map(|r| 1.0 / r.max(objective::SR_FLOOR)).sum::<f64>() / e.sum_rates.len() as f64;
    assert!((ra.history[best - 1].train_loss - direct).abs() <= 1e-10 * direct);
    assert_eq!(ra.final_train_loss, e.loss);
    for (i, r) in ra.history.iter().enumerate() {
        assert_eq!(r.epoch, i + 1);
        assert_eq!(r.lr, 1e-3);
    }
}

#[test]
fn early_stopping_and_ee_objective() {
    let p = tiny();
    let data = sample_dataset(&p, 9, 40);
    let mut net = model(&p, 4);
    let cfg = TrainConfig { objective: Objective::EnergyEfficiency, patience: 1, lr: 0.5, ..quick(30) };
    let r = train(&mut net, &data, &p, &cfg).unwrap();
    assert!(r.history.len() <= 30);
    if r.stopped_early {
        assert_eq!(r.history.len(), r.best_epoch.unwrap() + 1);
    }
    assert!(r.history.iter().all(|h| h.val_ee.is_finite() && h.val_ee >= 0.0));
}

#[test]
fn divergence_is_reported() {
    let p = tiny();
    let data = sample_dataset(&p, 1, 20);
    let mut net = model(&p, 5);
    let store = net.store_mut();
    let last = store.params.iter().position(|q| q.name.ends_with("comb.c2")).unwrap();
    store.params[last].value[0] = C64::new(f64::NAN, 0.0);
    match train(&mut net, &data, &p, &quick(2)) {
        Err(Error::Diverged { epoch: 1, step: 0, .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn history_csv_has_the_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let rec = EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.6, val_sr: 2.0, val_ee: 0.2, lr: 1e-3 };
    write_history(&[rec], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("epoch,train_loss,val_loss,val_SR,val_EE,lr\n1,0.5,0.6,2.0,0.2,0.001"));
    write_history(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), "epoch,train_loss,val_loss,val_SR,val_EE,lr");
}
