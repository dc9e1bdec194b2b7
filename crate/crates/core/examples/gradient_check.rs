//! Compare back-propagated gradients against central finite differences.
//!
//! cargo run --release --example gradient_check

use tensorloom::mnist::one_hot;
use tensorloom::network::{backward, forward, loss, PARAM_NAMES};
use tensorloom::{Params, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A deterministic synthetic "digit": a bright bar in the middle.
    let x = Tensor::from_fn(
        [28, 28],
        |iv| if (10..18).contains(&iv[1]) { 0.9 } else { 0.05 },
    );
    let y = one_hot(1)?;
    let p = Params::init(42);
    let (_, cache) = forward(&x, &p)?;
    let g = backward(&cache, &p, &y)?;

    let eval = |p: &Params| -> f64 { loss(&forward(&x, p).unwrap().0, &y).unwrap() as f64 };
    let h = 1e-2f32;
    for (ti, name) in PARAM_NAMES.iter().enumerate() {
        let n = g.tensors()[ti].len();
        let (mut worst, mut worst_abs) = (0.0f64, 0.0f64);
        for c in (0..n).step_by((n / 5).max(1)) {
            let mut flat = vec![0.0; tensorloom::network::param_count()];
            p.write_flat(&mut flat);
            let at = offset(&p, ti) + c;
            flat[at] = p.tensors()[ti].data()[c] + h;
            let up = eval(&Params::from_flat(&flat));
            flat[at] = p.tensors()[ti].data()[c] - h;
            let down = eval(&Params::from_flat(&flat));
            let numeric = (up - down) / (2.0 * h as f64);
            let analytic = g.tensors()[ti].data()[c] as f64;
            // f32 differences carry ~1e-5 of rounding noise, so tiny
            // gradients are compared against a floor rather than themselves.
            let scale = numeric.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max((numeric - analytic).abs() / scale);
            worst_abs = worst_abs.max((numeric - analytic).abs());
        }
        println!("{name:>2}: worst relative error {worst:.2e}  absolute {worst_abs:.2e}");
    }
    Ok(())
}

fn offset(p: &Params, tensor: usize) -> usize {
    p.tensors()[..tensor].iter().map(|t| t.len()).sum()
}
