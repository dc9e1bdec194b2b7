//! Run the seed-42 network on one digit and print the class scores.
//!
//! cargo run --release --example forward_pass [-- IMAGES LABELS]

use std::path::PathBuf;

use tensorloom::mnist::one_hot;
use tensorloom::network::{argmax, forward, loss, param_count};
use tensorloom::{MnistSet, Params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (images, labels) = data_paths();
    let set = MnistSet::from_files(images, labels, Some(1))?;
    let p = Params::init(42);
    println!("{} parameters", param_count());

    let x = set.image(0);
    let (yhat, cache) = forward(&x, &p)?;
    println!(
        "activation shapes: c1 {} s1 {} c2 {} s2 {} out {}",
        cache.c1.shape(),
        cache.s1.shape(),
        cache.c2.shape(),
        cache.s2.shape(),
        yhat.shape()
    );
    let scores = yhat.data();
    for (c, s) in scores.iter().enumerate() {
        println!("  class {c}: {s:.4}");
    }
    println!(
        "label {}  predicted {}  loss {:.4}",
        set.label(0),
        argmax(scores),
        loss(&yhat, &one_hot(set.label(0))?)?
    );
    Ok(())
}

fn data_paths() -> (PathBuf, PathBuf) {
    let mut args = std::env::args_os().skip(1).map(PathBuf::from);
    match (args.next(), args.next()) {
        (Some(i), Some(l)) => (i, l),
        _ => {
            let d = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
            (
                d.join("train-images-idx3-ubyte"),
                d.join("train-labels-idx1-ubyte"),
            )
        }
    }
}
