//! Full pipeline: fit a codec, encode a semantic/acoustic pair at several
//! thresholds and layer counts, and decode back to the base rate.

use dynrate::features::{synth_acoustic_companion, synth_random_walk};
use dynrate::quant::{fsq_fit, rvq_fit};
use dynrate::{decode, encode, CodecModel, EncodeOptions, RefineMode};

fn main() -> dynrate::Result<()> {
    let semantic = synth_random_walk(1500, 16, 0.2, 3);
    let acoustic = synth_acoustic_companion(&semantic, 0.1, 4);

    let fsq = fsq_fit(std::slice::from_ref(&semantic), 5, 8)?;
    let residuals: Vec<f32> = semantic
        .frames()
        .zip(acoustic.frames())
        .flat_map(|(s, a)| {
            let r = fsq.quantize(s).recon;
            a.iter().zip(r).map(|(x, y)| x - y).collect::<Vec<_>>()
        })
        .collect();
    let rvq = rvq_fit(&residuals, 16, 7, 128, 10, 0)?;
    let model = CodecModel::new(fsq, rvq)?;
    println!("codec fingerprint {:016x}", model.fingerprint());

    for tau in [1.0, 0.95, 0.85] {
        for n_q in [1, 4, 8] {
            let opts = EncodeOptions {
                tau,
                n_q,
                ..EncodeOptions::default()
            };
            let ts = encode(&semantic, &acoustic, &model, &opts)?;
            let out = decode(&ts, &model, &RefineMode::Identity)?;
            let mse: f64 = out
                .as_slice()
                .iter()
                .zip(acoustic.as_slice())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / out.as_slice().len() as f64;
            println!(
                "tau {tau:<4} n_q {n_q}: {:>4} tokens ({:>5.2} Hz), decode mse {mse:.5}",
                ts.len(),
                ts.len() as f64 / ts.duration_s()
            );
        }
    }
    Ok(())
}
