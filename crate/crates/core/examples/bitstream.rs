//! Pack a token stream into FLXC bytes, inspect the size, and reject damage.

use dynrate::codec::FLXC_HEADER_LEN;
use dynrate::{pack, unpack, FrameRate, TokenLayout, TokenStream};

fn main() -> dynrate::Result<()> {
    let layout = TokenLayout {
        fsq_dims: 5,
        fsq_levels: 8,
        rvq_k: 4096,
        l_max: 8,
    };
    let lengths = vec![3, 1, 8, 2, 5];
    let semantic = vec![17, 32767, 0, 1024, 5];
    let acoustic: Vec<Vec<u32>> = (0..7)
        .map(|l| (0..5).map(|k| (l * 500 + k * 7) as u32).collect())
        .collect();
    let ts = TokenStream::new(semantic, lengths, acoustic, 8, FrameRate::new(25, 2)?, 19, layout)?;

    let bytes = pack(&ts, 0x0123_4567_89ab_cdef)?;
    println!(
        "{} tokens, {} payload bits ({} per token), {} bytes incl. {}-byte header",
        ts.len(),
        ts.payload_bits(),
        ts.payload_bits() / ts.len() as u64,
        bytes.len(),
        FLXC_HEADER_LEN
    );
    let back = unpack(&bytes)?;
    assert_eq!(back.stream, ts);
    println!("round trip ok, fingerprint {:016x}", back.fingerprint);

    match unpack(&bytes[..bytes.len() - 3]) {
        Err(e) => println!("truncated: {e}"),
        Ok(_) => unreachable!(),
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    println!("bad magic: {}", unpack(&bad).unwrap_err());
    Ok(())
}
