//! Time one mini-batch gradient evaluation at several worker counts and
//! check that every count produces the same bits.
//!
//! cargo run --release --example bench_scaling

use std::time::Instant;

use tensorloom::mnist::one_hot;
use tensorloom::network::{batch_gradients, with_workers};
use tensorloom::{Params, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let batch: Vec<(Tensor, Tensor)> = (0..200)
        .map(|i| {
            let x = Tensor::from_fn([28, 28], |iv| {
                ((iv[0] * 28 + iv[1] + i * 13) % 97) as f32 / 97.0
            });
            (x, one_hot((i % 10) as u8).unwrap())
        })
        .collect();
    let p = Params::init(42);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("{cores} core(s) available");
    println!("workers,seconds,speedup_vs_1");

    let mut base = None;
    for w in [1, 2, 4, 8] {
        let start = Instant::now();
        let (g, _) = with_workers(w, || batch_gradients(&p, &batch))?;
        let secs = start.elapsed().as_secs_f64();
        let (t1, g1) = base.get_or_insert((secs, g.clone()));
        assert!(g.bit_eq(g1), "gradients differ at {w} workers");
        println!("{w},{secs:.3},{:.2}", *t1 / secs);
    }
    Ok(())
}
