//! Train residual VQ codebooks and watch the error fall layer by layer.

use dynrate::quant::{rvq_decode, rvq_encode, rvq_fit_with_report};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> dynrate::Result<()> {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let rows: Vec<f32> = (0..3000 * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();

    let (cb, reports) = rvq_fit_with_report(&rows, d, 4, 64, 15, 7)?;
    for (i, r) in reports.iter().enumerate() {
        println!(
            "layer {}: {} Lloyd passes, residual mse {:.4}, reseeded {}",
            i + 1,
            r.objective.len(),
            r.residual_mse,
            r.reseeded
        );
    }

    let x = &rows[..d];
    for n in 1..=cb.num_layers() {
        let code = rvq_encode(&cb, x, n)?;
        let err: f32 = code.residual.iter().map(|r| r * r).sum();
        assert_eq!(rvq_decode(&cb, &code.indices)?, code.approx);
        println!("{n} layers: indices {:?}, squared error {err:.4}", code.indices);
    }
    Ok(())
}
