// Gumbel noise from counter-based uniforms: moments, a KS test against the
// closed-form CDF, and Gumbel-max categorical sampling.

use stgs_nas::sampler::{gumbel_max, GumbelParams, NoiseSource, SeededRng};
use stgs_nas::stats::{chi_square_test, ks_test, mean, variance};
use stgs_nas::tensor::Tensor;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let rng = SeededRng::new(7, 0);
    let draws = rng.gumbel(0, 100_000);
    let std = GumbelParams::standard();
    let ks = ks_test(&draws, |x| std.cdf(x))?;
    println!("mean {:.4} (Euler-Mascheroni 0.5772)", mean(&draws));
    println!("variance {:.4} (pi^2/6 = 1.6449)", variance(&draws));
    println!("KS D = {:.5}, p = {:.3}", ks.statistic, ks.p_value);

    // the same counter always yields the same draw
    assert_eq!(rng.gumbel(41, 1)[0], draws[41]);

    let probs = [0.1, 0.2, 0.3, 0.4];
    let theta = Tensor::vector(probs.to_vec());
    let mut noise = NoiseSource::new(SeededRng::new(7, 1));
    let mut counts = [0u64; 4];
    for _ in 0..20_000 {
        counts[gumbel_max(&theta, &mut noise)?] += 1;
    }
    let chi = chi_square_test(&counts, &probs)?;
    println!("gumbel-max counts {counts:?}, chi-square p = {:.3}", chi.p_value);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("gumbel statistics");
}
