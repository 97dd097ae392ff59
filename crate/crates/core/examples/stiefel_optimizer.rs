//! Takes 1000 random momentum steps on the Stiefel manifold and tracks how
//! far the weight drifts from orthonormal columns.
//!
//! `cargo run --release --example stiefel_optimizer`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_regime::layers::{orthogonality_error, random_stiefel, stiefel_step};
use spd_regime::spd::Mat;

fn main() -> spd_regime::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut w = random_stiefel(60, 20, &mut rng);
    let mut buf = Mat::zeros(60, 20);
    let mut worst: f64 = 0.0;
    for step in 0..1000 {
        let g = Mat::from_fn(60, 20, |_, _| rng.random::<f64>() - 0.5);
        stiefel_step(&mut w, &g, &mut buf, 0.05, 0.9)?;
        worst = worst.max(orthogonality_error(&w));
        if step % 200 == 0 {
            println!("step {step:4}  ||WtW - I||_F = {:.3e}", orthogonality_error(&w));
        }
    }
    println!("worst drift over 1000 steps: {worst:.3e}");
    Ok(())
}
