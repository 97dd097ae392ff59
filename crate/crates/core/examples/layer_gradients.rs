//! Runs one sample through BiMap, ReEig and LogEig, backpropagates a squared
//! Frobenius loss, and compares the analytic input gradient with central
//! finite differences.
//!
//! `cargo run --release --example layer_gradients`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_regime::layers::{
    bimap_backward, bimap_forward, logeig_backward, logeig_forward, reeig_backward, reeig_forward, BiMapLayer,
    ReEigLayer,
};
use spd_regime::spd::{Mat, SpdMatrix, SymMatrix};

fn loss(bimap: &BiMapLayer, reeig: &ReEigLayer, x: &SpdMatrix) -> spd_regime::Result<f64> {
    let l = logeig_forward(&reeig_forward(reeig, &bimap_forward(bimap, x)?)?)?;
    Ok(l.as_mat().norm_squared())
}

fn main() -> spd_regime::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 8;
    let a = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    let x = SpdMatrix::new(&a * a.transpose() + Mat::identity(n, n) * 0.05)?;
    let bimap = BiMapLayer::random(n, 4, &mut rng)?;
    let reeig = ReEigLayer::new(1e-2)?;

    let h = bimap_forward(&bimap, &x)?;
    let r = reeig_forward(&reeig, &h)?;
    let l = logeig_forward(&r)?;
    println!("BiMap output spectrum {:?}", h.eig()?.eigvals.as_slice());
    println!("ReEig output spectrum {:?}", r.eig()?.eigvals.as_slice());

    let g_l = SymMatrix::new(l.as_mat() * 2.0)?;
    let g_r = logeig_backward(&r, &g_l)?.input_grads.remove(0);
    let g_h = reeig_backward(&reeig, &h, &g_r)?.input_grads.remove(0);
    let g_x = bimap_backward(&bimap, &x, &g_h)?.input_grads.remove(0);

    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let mut d = Mat::zeros(n, n);
            d[(i, j)] = 1.0;
            d[(j, i)] = 1.0;
            let plus = SpdMatrix::new(x.as_mat() + &d * step)?;
            let minus = SpdMatrix::new(x.as_mat() - &d * step)?;
            let fd = (loss(&bimap, &reeig, &plus)? - loss(&bimap, &reeig, &minus)?) / (2.0 * step);
            let analytic = (g_x.as_mat().component_mul(&d)).sum();
            worst = worst.max((fd - analytic).abs() / fd.abs().max(1e-8));
        }
    }
    println!("largest relative gap between analytic and finite-difference gradients: {worst:.2e}");
    Ok(())
}
