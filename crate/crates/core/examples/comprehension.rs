//! Rank-polymorphic tensors: construction, selection, and comprehensions
//! evaluated sequentially and on several workers.
//!
//! cargo run --example comprehension

use tensorloom::runtime::with_config;
use tensorloom::{ExecConfig, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = Tensor::new([2, 3], vec![1., 2., 3., 4., 5., 6.])?;
    println!("m = {m:?}");
    println!("m[1]    = {:?}", m.select(&[1])?.data());
    println!("m[1, 2] = {}", m.at(&[1, 2])?);

    // { [i, j] -> i * 10 + j | [i, j] < [3, 4] }
    let grid = Tensor::from_fn([3, 4], |iv| (iv[0] * 10 + iv[1]) as f32);
    println!("grid = {:?}", grid.data());

    // Cells may be tensors themselves: the result shape is frame ++ cell.
    let rows = Tensor::comprehend([2], |iv| m.select(iv).unwrap().map(|x| x * x))?;
    println!(
        "squared rows shape {}  data {:?}",
        rows.shape(),
        rows.data()
    );

    // The same comprehension on 4 workers is bitwise identical.
    let big = |_: ()| Tensor::from_fn([256, 256], |iv| ((iv[0] * 31 + iv[1]) as f32).sin());
    let seq = with_config(ExecConfig::sequential(), || big(()));
    let par = with_config(ExecConfig::new(4).with_threshold(0), || big(()));
    println!("4 workers identical to sequential: {}", seq.bit_eq(&par));

    // Reshape keeps data order; a shape error is a value, not a panic.
    println!("reshape [3,2]: {:?}", m.reshape([3, 2])?.shape());
    println!("reshape [4]:   {}", m.reshape([4]).unwrap_err());
    Ok(())
}
