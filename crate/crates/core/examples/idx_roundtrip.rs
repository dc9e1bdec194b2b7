//! Write a data set and a checkpoint to disk and read both back.
//!
//! cargo run --example idx_roundtrip

use tensorloom::mnist::{self, MnistError};
use tensorloom::{MnistSet, Params, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let images = Tensor::from_fn([3, 28, 28], |iv| {
        ((iv[0] + iv[1] * iv[2]) % 256) as f32 / 255.0
    });
    let set = MnistSet::new(images, vec![3, 1, 4])?;
    let (img, lab) = set.to_idx();
    println!(
        "encoded {} image bytes, {} label bytes",
        img.len(),
        lab.len()
    );

    let back = MnistSet::from_idx(&img, &lab)?;
    println!(
        "labels {:?}  pixels identical: {}",
        back.labels(),
        back.images().bit_eq(set.images())
    );

    // Every corruption is a typed error.
    let mut bad = lab.clone();
    bad[9] = 12;
    match mnist::load_labels(&bad) {
        Err(e @ MnistError::LabelOutOfRange { .. }) => println!("rejected: {e}"),
        other => println!("unexpected: {other:?}"),
    }
    println!("rejected: {}", mnist::load_images(&img[..100]).unwrap_err());

    let dir = std::env::temp_dir().join(format!("tensorloom-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("params.tlm");
    let p = Params::init(42);
    p.save(&path)?;
    println!(
        "checkpoint {} bytes, reload identical: {}",
        std::fs::metadata(&path)?.len(),
        Params::load(&path)?.bit_eq(&p)
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
