//! Affine-invariant and log-Euclidean geometry on random SPD matrices:
//! distances, invariance under congruence, geodesics and the Karcher mean.
//!
//! `cargo run --release --example spd_geometry`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_regime::spd::{
    affine_distance, corr_distance, geodesic, karcher_mean, log_euclidean_distance, Mat, SpdMatrix, SymMatrix,
};

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
    let a = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    SpdMatrix::new(&a * a.transpose() + Mat::identity(n, n) * 0.1).unwrap()
}

fn main() -> spd_regime::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, y) = (random_spd(5, &mut rng), random_spd(5, &mut rng));
    let g = Mat::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5) + Mat::identity(5, 5);
    let gx = SpdMatrix::new(&g * x.as_mat() * g.transpose())?;
    let gy = SpdMatrix::new(&g * y.as_mat() * g.transpose())?;
    println!("affine distance        {:.12}", affine_distance(&x, &y)?);
    println!("after congruence       {:.12}", affine_distance(&gx, &gy)?);
    println!("log-Euclidean distance {:.12}", log_euclidean_distance(&x, &y)?);

    let mid = geodesic(&x, &y, 0.5)?;
    println!(
        "geodesic midpoint splits the distance: {:.12} + {:.12}",
        affine_distance(&x, &mid)?,
        affine_distance(&mid, &y)?
    );

    let batch: Vec<SpdMatrix> = (0..8).map(|_| random_spd(5, &mut rng)).collect();
    let mean = karcher_mean(&batch)?;
    let spread: f64 = batch.iter().map(|b| affine_distance(&mean, b).unwrap().powi(2)).sum();
    println!("karcher mean dispersion {spread:.6}");

    let c = SymMatrix::new(Mat::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, 0.5, -1.0, 0.5, 1.0]))?;
    println!("correlation distances sqrt(2(1 - c)):\n{}", corr_distance(&c)?.as_mat());
    Ok(())
}
