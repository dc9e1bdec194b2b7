//! The convolution, pooling and backward kernels on small inputs.
//!
//! cargo run --example kernels

use tensorloom::{nn, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let input = Tensor::from_fn([4, 4], |iv| (iv[0] * 4 + iv[1]) as f32);
    let k = Tensor::new([2, 2], vec![1., 0., 0., -1.])?;
    let out = nn::conv(&input, &k)?;
    println!(
        "conv   {} -> {}: {:?}",
        input.shape(),
        out.shape(),
        out.data()
    );

    let ks = Tensor::new([2, 2, 2], vec![1., 0., 0., 0., 0.25, 0.25, 0.25, 0.25])?;
    let bias = Tensor::vector([0.0, 1.0]);
    let m = nn::mconv(&input, &ks, &bias)?;
    println!("mconv  -> {}", m.shape());

    let pooled = nn::avgpool(&input)?;
    println!("avgpool -> {:?}", pooled.data());
    println!("backavgpool -> {:?}", nn::backavgpool(&pooled)?.shape());

    // Gradients of <conv(input, k), d> with respect to k and to input.
    let d = Tensor::filled(out.shape().clone(), 1.0);
    println!("backweights {:?}", nn::backweights(&d, &input)?.data());
    println!("backbias    {}", nn::backbias(&d));
    let din = nn::backin(&d, &k, &input)?;
    println!("backin      {:?}", din.data());

    // Adjointness: both sides of the identity agree.
    let lhs = out.dot(&d)?;
    let rhs = input.dot(&din)?;
    println!("<conv(I,k), d> = {lhs}   <I, backin(d,k)> = {rhs}");

    let s = nn::sigmoid(&Tensor::vector([-2.0, 0.0, 2.0]));
    println!("sigmoid {:?}", s.data());
    Ok(())
}
