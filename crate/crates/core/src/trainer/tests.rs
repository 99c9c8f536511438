use super::*;
use crate::dataset::synthetic_split;
use crate::network::ResNextSpec;
use crate::treecut::ClassTree;

pub(crate) fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        network: NetworkSpec {
            depth: 2,
            first_conv_channels: 4,
            base_channels: vec![4, 8],
            resnext: ResNextSpec {
                cardinality: 2,
                bottleneck_channels: 4,
                out_channels: 4,
            },
            ..NetworkSpec::default()
        },
        epochs: 2,
        batch_size: 3,
        tile: 16,
        margin: 2,
        seed,
        max_passes: 3,
        ..TrainConfig::default()
    }
}

pub(crate) fn tiny_data(seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    synthetic_split(seed, 2, 2, 32, 16).unwrap()
}

#[test]
fn schedule_boundaries() {
    assert_eq!(lr_at(0, 100, 0.01).unwrap(), 0.01);
    assert_eq!(lr_at(49, 100, 0.01).unwrap(), 0.01);
    assert_eq!(lr_at(50, 100, 0.01).unwrap(), 0.01 * 0.1);
    assert_eq!(lr_at(74, 100, 0.01).unwrap(), 0.01 * 0.1);
    assert_eq!(lr_at(75, 100, 0.01).unwrap(), 0.01 * 0.01);
    assert_eq!(lr_at(99, 100, 0.01).unwrap(), 0.01 * 0.01);
    assert!(lr_at(100, 100, 0.01).is_err());
    assert!(lr_at(0, 0, 0.01).is_err());
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for broken in [
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { tile: 60, ..TrainConfig::default() },
        TrainConfig { margin: 32, ..TrainConfig::default() },
    ] {
        assert!(broken.validate().is_err(), "{broken:?}");
    }
}

#[test]
fn one_epoch_step_count() {
    let (train, _) = tiny_data(1);
    assert_eq!(train.len(), 8);
    for batch in [1, 3, 8, 20] {
        let cfg = TrainConfig { epochs: 1, batch_size: batch, ..tiny_config(1) };
        let mut net = TreeSegNet::new(&cfg.network, 0).unwrap();
        let stats = train_pass(&mut net, &train, &cfg, 0).unwrap();
        assert_eq!(stats.steps, 8usize.div_ceil(batch));
    }
    let cfg = tiny_config(1);
    let mut net = TreeSegNet::new(&cfg.network, 0).unwrap();
    assert!(train_pass(&mut net, &[], &cfg, 0).is_err());
}

#[test]
fn training_lowers_loss_and_is_deterministic() {
    let (train, _) = tiny_data(2);
    let cfg = TrainConfig { epochs: 4, ..tiny_config(2) };
    let mut a = TreeSegNet::new(&cfg.network, 2).unwrap();
    let before = dataset_loss(&a, &train, 4).unwrap();
    train_pass(&mut a, &train, &cfg, 0).unwrap();
    let after = dataset_loss(&a, &train, 4).unwrap();
    assert!(after < before, "{after} >= {before}");

    let mut b = TreeSegNet::new(&cfg.network, 2).unwrap();
    train_pass(&mut b, &train, &cfg, 0).unwrap();
    assert_eq!(a.state(), b.state());
    // a different pass index reshuffles
    let mut c = TreeSegNet::new(&cfg.network, 2).unwrap();
    train_pass(&mut c, &train, &cfg, 1).unwrap();
    assert_ne!(a.state(), c.state());
}

#[test]
fn evaluation_conserves_pixels() {
    let (_, val) = tiny_data(3);
    let cfg = tiny_config(3);
    let net = TreeSegNet::new(&cfg.network.clone().with_tree(Some(ClassTree::balanced(6))), 3).unwrap();
    let eval = evaluate_pass(&net, &val, &cfg).unwrap();
    let pixels: usize = val.iter().map(|s| s.labels.data().len()).sum();
    assert_eq!(eval.confusion.total(), pixels as u64);
    assert_eq!(eval.report, score(&eval.confusion).unwrap());
    assert!((0.0..=1.0).contains(&eval.report.oa));
    assert!((0.0..=1.0).contains(&eval.report.mean_f1));
    assert!(evaluate_pass(&net, &[], &cfg).is_err());
}

#[test]
fn workers_do_not_change_predictions() {
    let (_, val) = synthetic_split(4, 0, 1, 48, 16).unwrap();
    let cfg = tiny_config(4);
    let net = TreeSegNet::new(&cfg.network, 4).unwrap();
    let one = predict_scores(&net, &val[0].image, &cfg).unwrap();
    let three = predict_scores(&net, &val[0].image, &TrainConfig { workers: 3, ..cfg.clone() }).unwrap();
    assert_eq!(one, three);
    let total: f64 = (0..6).map(|c| one.get(c, 7, 11) as f64).sum();
    assert!((total - 1.0).abs() < 1e-5);
}

#[test]
fn untrained_network_is_near_chance() {
    // A random network mostly predicts one arbitrary class, so its OA is that class's
    // share; averaged over network seeds it sits near 1/C.
    let (_, val) = synthetic_split(5, 0, 2, 64, 64).unwrap();
    let mut cfg = tiny_config(5);
    cfg.tile = 32;
    cfg.margin = 4;
    let seeds = 12;
    let mean: f64 = (0..seeds)
        .map(|s| {
            let net = TreeSegNet::new(&cfg.network, 100 + s).unwrap();
            evaluate_pass(&net, &val, &cfg).unwrap().report.oa
        })
        .sum::<f64>()
        / seeds as f64;
    assert!((mean - 1.0 / 6.0).abs() <= 0.15, "mean OA {mean}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn schedule_steps_down_twice(total in 1usize..5000, base in 1e-4f64..1.0) {
            let rates: Vec<f64> = (0..total).map(|s| lr_at(s, total, base).unwrap()).collect();
            prop_assert!(rates.windows(2).all(|p| p[1] <= p[0]));
            prop_assert!(rates.iter().all(|&r| r == base || r == base * 0.1 || r == base * 0.01));
            prop_assert_eq!(rates[0], base);
            prop_assert!(lr_at(total, total, base).is_err());
        }
    }
}
