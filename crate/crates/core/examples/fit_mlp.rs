//! The raw network layer: a Mish MLP fit to a 1-D curve with hand-written
//! backprop and Adam.

use dagger_lab::nn::{Activation, Adam, Mlp};

fn main() -> anyhow::Result<()> {
    let mut net = Mlp::init(3, &[1, 32, 32, 1], Activation::Mish)?;
    let mut opt = Adam::new(net.params().len(), 3e-3);
    let xs: Vec<f64> = (0..64).map(|i| -3.0 + 6.0 * i as f64 / 63.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    for step in 0..=2000 {
        let (loss, grad) = net.mse_and_grad(&xs, &ys, xs.len())?;
        opt.step(net.params_mut(), &grad)?;
        if step % 400 == 0 {
            println!("step {step:4}  mse {loss:.6}");
        }
    }
    let probe = [-2.0, 0.5, 2.5];
    let out = net.forward(&probe, probe.len())?;
    for (x, y) in probe.iter().zip(out) {
        println!("f({x:+.1}) = {y:+.4}  (sin {:+.4})", x.sin());
    }
    Ok(())
}
