//! Merge a piecewise-constant sequence by adjacent similarity and expand it back.

use dynrate::features::synth_piecewise_constant;
use dynrate::merge::plan_for_sequence;
use dynrate::{adjacent_similarity, apply_merge, unmerge};

fn main() -> dynrate::Result<()> {
    let fx = synth_piecewise_constant(10, (1, 8), 16, 42);
    let seq = &fx.sequence;
    let sims = adjacent_similarity(seq);
    println!(
        "{} frames at {} Hz, {} adjacent similarities",
        seq.len(),
        seq.rate(),
        sims.len()
    );

    for tau in [0.5, 0.9, 0.99, 1.0] {
        let plan = plan_for_sequence(seq, tau, 8)?;
        println!(
            "tau {tau:<4}: {:>3} merged frames, lengths {:?}",
            plan.merged_len(),
            plan.lengths()
        );
    }

    let plan = plan_for_sequence(seq, 0.99, 8)?;
    assert_eq!(plan.lengths(), fx.segment_lengths.as_slice());
    let merged = apply_merge(seq, &plan)?;
    println!("average rate after merging: {:.3} Hz", merged.average_frame_rate());
    let back = unmerge(&merged);
    println!("unmerged back to {} frames, exact: {}", back.len(), &back == seq);
    Ok(())
}
