//! Sweep the merge threshold and calibrate it for a target frame rate.

use dynrate::analysis::{sweep_tau, tau_for_target_rate};
use dynrate::codec::BitLayout;
use dynrate::features::synth_random_walk;

fn main() -> dynrate::Result<()> {
    let seq = synth_random_walk(2000, 16, 0.3, 9);
    let taus: Vec<f64> = (0..7).map(|i| 0.7 + 0.05 * i as f64).collect();
    let curve = sweep_tau(&seq, &taus, 8, 8, &BitLayout::REFERENCE)?;
    println!("  tau   frames   rate Hz   kbps (8 layers)");
    for p in &curve.points {
        println!(
            "{:>5.2} {:>8} {:>9.3} {:>9.3}",
            p.tau, p.merged_frames, p.avg_rate_hz, p.payload_kbps
        );
    }

    for target in [10.0, 6.25, 4.0] {
        let found = tau_for_target_rate(&seq, target, 0.3, 8)?;
        println!(
            "target {target:>5} Hz -> tau {:.4}, {:.3} Hz after {} steps",
            found.tau, found.achieved_rate_hz, found.iterations
        );
    }
    Ok(())
}
