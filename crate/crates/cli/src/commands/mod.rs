//! One module per family of subcommands.

pub mod barrier;
pub mod boltzmann;
pub mod covering;
pub mod kernel;
pub mod kolmogorov;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

/// Independent stream `stream` of the run seed.
pub fn rng_for(cfg: &RunConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

/// Uniform point of the ball `B_radius(0) ⊂ ℝ^d` by rejection.
pub fn uniform_ball(rng: &mut impl Rng, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if p.iter().map(|x| x * x).sum::<f64>() < 1.0 {
            return p.into_iter().map(|x| radius * x).collect();
        }
    }
}
