//! Train on the bundled MNIST subset and report per-epoch loss and accuracy.
//!
//! cargo run --release --example train_mnist -- [TRAIN_LIMIT] [EPOCHS] [RATE]

use std::path::PathBuf;
use std::time::Instant;

use tensorloom::network::{evaluate, train};
use tensorloom::{Hyper, MnistSet, Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let limit: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let rate: f32 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.05);

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let train_set = MnistSet::from_files(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        Some(limit),
    )?;
    let test_set = MnistSet::from_files(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
        Some(limit),
    )?;
    let h = Hyper {
        epochs,
        rate,
        ..Hyper::default()
    };
    println!("{} train / {} test, {h:?}", train_set.len(), test_set.len());

    let start = Instant::now();
    let report = train(&Params::init(h.seed), &train_set, &h, |e, l| {
        println!("epoch {} mean loss {l:.6}", e + 1);
    })?;
    println!(
        "accuracy {:.4}  ({:.1}s)",
        evaluate(&report.params, &test_set)?,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
