//! Training-loop behaviour on small synthetic data sets.

mod common;

use rand::Rng;
use tensorloom::network::{self, evaluate, mean_loss, train};
use tensorloom::{Hyper, MnistSet, Params, Tensor};

fn synthetic(n: usize, seed: u64) -> MnistSet {
    let mut r = common::rng(seed);
    let images = Tensor::new(
        [n, 28, 28],
        (0..n * 784).map(|_| r.gen_range(0.0f32..=1.0)).collect(),
    )
    .unwrap();
    let labels = (0..n).map(|_| r.gen_range(0..10u8)).collect();
    MnistSet::new(images, labels).unwrap()
}

#[test]
fn zero_epochs_leave_parameters_untouched() {
    let data = synthetic(5, 1);
    let p = Params::init(9);
    let h = Hyper {
        epochs: 0,
        ..Hyper::default()
    };
    let report = train(&p, &data, &h, |_, _| {}).unwrap();
    assert!(report.params.bit_eq(&p));
    assert!(report.epoch_losses.is_empty());
}

#[test]
fn training_is_deterministic() {
    let data = synthetic(12, 2);
    let h = Hyper {
        epochs: 2,
        batch: 5,
        ..Hyper::default()
    };
    let a = train(&Params::init(h.seed), &data, &h, |_, _| {}).unwrap();
    let b = train(&Params::init(h.seed), &data, &h, |_, _| {}).unwrap();
    assert!(a.params.bit_eq(&b.params));
    assert_eq!(a.epoch_losses, b.epoch_losses);
}

#[test]
fn worker_count_does_not_change_results() {
    let data = synthetic(13, 3);
    let h = Hyper {
        epochs: 1,
        batch: 4,
        ..Hyper::default()
    };
    let p0 = Params::init(h.seed);
    let base = train(&p0, &data, &h, |_, _| {}).unwrap();
    for w in [2, 3, 8] {
        let r = network::with_workers(w, || train(&p0, &data, &h, |_, _| {})).unwrap();
        assert!(r.params.bit_eq(&base.params), "workers={w}");
        assert_eq!(r.epoch_losses, base.epoch_losses, "workers={w}");
    }
}

#[test]
fn one_epoch_reduces_loss_on_ten_examples() {
    let data = synthetic(10, 4);
    let p0 = Params::init(42);
    let before = mean_loss(&p0, &data).unwrap();
    let h = Hyper {
        epochs: 1,
        batch: 1,
        rate: 0.05,
        seed: 42,
    };
    let after = mean_loss(&train(&p0, &data, &h, |_, _| {}).unwrap().params, &data).unwrap();
    assert!(after < before, "loss {before} -> {after}");
}

#[test]
fn on_epoch_sees_every_epoch_in_order() {
    let data = synthetic(6, 5);
    let h = Hyper {
        epochs: 3,
        batch: 4,
        ..Hyper::default()
    };
    let mut seen = Vec::new();
    let r = train(&Params::init(1), &data, &h, |e, l| seen.push((e, l))).unwrap();
    assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(seen.iter().map(|s| s.1).collect::<Vec<_>>(), r.epoch_losses);
}

#[test]
fn zero_params_predict_class_zero() {
    // All outputs equal 0.5, so the lowest index wins every argmax.
    let data = synthetic(40, 6);
    let zeros = data.labels().iter().filter(|&&l| l == 0).count() as f64 / 40.0;
    assert_eq!(evaluate(&Params::zeros(), &data).unwrap(), zeros);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let p = Params::init(77);
    let mut buf = Vec::new();
    p.write_checkpoint(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"TLM1");
    assert!(Params::decode_checkpoint(&buf).unwrap().bit_eq(&p));
    assert!(Params::decode_checkpoint(&buf[..buf.len() - 1]).is_err());
    let mut longer = buf.clone();
    longer.push(0);
    assert!(Params::decode_checkpoint(&longer).is_err());
}
