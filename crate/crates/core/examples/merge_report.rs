//! Per-token time spans with overlapping labels, as JSON lines.

use dynrate::analysis::{merge_report, parse_annotations};
use dynrate::features::synth_event_density;
use dynrate::quant::{fsq_fit, RvqCodebooks};
use dynrate::{encode, CodecModel, EncodeOptions};

fn main() -> dynrate::Result<()> {
    let semantic = synth_event_density(40, 8, 0.2, 5);
    let acoustic = semantic.clone().with_kind(dynrate::StreamKind::Acoustic);
    let fsq = fsq_fit(std::slice::from_ref(&semantic), 4, 8)?;
    let model = CodecModel::new(fsq, RvqCodebooks::new(vec![vec![0.0; 8]], 1, 8)?)?;
    let opts = EncodeOptions {
        tau: 0.9,
        n_q: 1,
        ..EncodeOptions::default()
    };
    let ts = encode(&semantic, &acoustic, &model, &opts)?;

    let labels = parse_annotations("0.00 0.80 sil\n0.80 1.60 ah\n1.60 3.20 s\n")?;
    let report = merge_report(&ts, Some(&labels))?;
    print!("{}", report.to_jsonl());
    Ok(())
}
