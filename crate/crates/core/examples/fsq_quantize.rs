//! Fit a low-rank FSQ quantizer and look at its indices and reconstructions.

use dynrate::features::synth_random_walk;
use dynrate::quant::{feat_alignment_distance, fsq_fit, fsq_index_decode};

fn main() -> dynrate::Result<()> {
    let seq = synth_random_walk(1000, 16, 0.3, 1);
    for levels in [4, 8, 16] {
        let fsq = fsq_fit(std::slice::from_ref(&seq), 5, levels)?;
        let recon: Vec<f32> = seq.frames().flat_map(|f| fsq.quantize(f).recon).collect();
        let dist = feat_alignment_distance(&recon, seq.as_slice(), seq.dim())?;
        println!(
            "L={levels:<2} codebook {:>7} ({:>2} bits)  mean sq. distance {dist:.5}",
            fsq.codebook_size(),
            fsq.index_bits()
        );
    }

    let fsq = fsq_fit(std::slice::from_ref(&seq), 5, 8)?;
    let code = fsq.quantize(seq.frame(0));
    println!("frame 0 -> index {} levels {:?}", code.index, code.levels);
    assert_eq!(fsq_index_decode(code.index as u64, 5, 8)?, code.levels);
    Ok(())
}
