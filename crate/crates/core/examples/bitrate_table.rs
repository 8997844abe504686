//! Frame rates from encoder strides and the bitrates they imply.

use dynrate::analysis::{bitrate_at_rate, display_round, exact_rate, stride_frame_rate};
use dynrate::codec::BitLayout;

fn main() -> dynrate::Result<()> {
    let layout = BitLayout::REFERENCE;
    println!("strides            rate Hz   1 layer kbps   8 layers kbps");
    for strides in [[4, 4, 5, 8, 2], [4, 5, 6, 8, 2], [4, 5, 8, 8, 2]] {
        let rate = stride_frame_rate(16000, &strides)?;
        let one = bitrate_at_rate(exact_rate(rate), 1, &layout);
        let eight = bitrate_at_rate(exact_rate(rate), 8, &layout);
        println!(
            "{:<18} {:>7}   {:>6} ({})   {:>6} ({})",
            format!("{strides:?}"),
            rate.to_string(),
            display_round(&one.total_exact, 2),
            one.total_exact,
            display_round(&eight.total_exact, 2),
            eight.total_exact,
        );
    }
    Ok(())
}
