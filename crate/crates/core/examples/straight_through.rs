// Straight-through Gumbel-Softmax: the forward value is one-hot while the
// gradient is that of the soft relaxed sample.

use stgs_nas::autodiff::Tape;
use stgs_nas::sampler::{soft_sample, stgs_forward_backward, NoiseSource, SeededRng};
use stgs_nas::tensor::Tensor;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let logits = Tensor::vector(vec![0.5, -1.0, 2.0, 0.0]);
    let probe = Tensor::vector(vec![1.0, -2.0, 0.5, 3.0]);

    for temperature in [0.1, 1.0, 10.0] {
        let rng = SeededRng::new(3, 0);

        let mut tape = Tape::new();
        let phi = tape.constant(logits.clone());
        let hard = stgs_forward_backward(&mut tape, phi, temperature, &mut NoiseSource::new(rng))?;
        let c = tape.constant(probe.clone());
        let prod = tape.mul(hard, c)?;
        let loss = tape.sum_all(prod);
        let st_grad = tape.backward(loss)?.wrt(&tape, phi);
        let forward = tape.value(hard).clone();

        // same noise, soft path only
        let mut tape = Tape::new();
        let phi = tape.constant(logits.clone());
        let soft = soft_sample(&mut tape, phi, temperature, &mut NoiseSource::new(rng))?;
        let c = tape.constant(probe.clone());
        let prod = tape.mul(soft, c)?;
        let loss = tape.sum_all(prod);
        let soft_grad = tape.backward(loss)?.wrt(&tape, phi);

        println!("lambda {temperature:>4}: forward {:?}", forward.data());
        println!("             soft sample {:?}", tape.value(soft).data());
        println!("             max |grad diff| {:.1e}", st_grad.max_abs_diff(&soft_grad));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("straight-through demo");
}
