//! Frame-rate and bitrate accounting, tau sweeps, correlation and merge
//! reports.
//!
//! Bitrates count payload bits only (segment length plus indices); container
//! headers are excluded. Rate and bitrate values are also available as exact
//! rationals so display rounding is not at the mercy of binary floats.

use std::fmt::Write as _;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{BitLayout, TokenStream};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::merge::{adjacent_similarity, plan_merge};
use crate::rate::FrameRate;

pub type Exact = Ratio<u128>;

/// Merged frames per second of audio.
pub fn average_frame_rate(ts: &TokenStream) -> Result<f64> {
    average_frame_rate_exact(ts).map(|r| to_f64(&r))
}

pub fn average_frame_rate_exact(ts: &TokenStream) -> Result<Exact> {
    if ts.source_frame_count() == 0 {
        return Err(Error::Domain("average frame rate of a zero-length stream".into()));
    }
    let base = ts.base_rate();
    Ok(Exact::new(
        ts.len() as u128 * base.numer() as u128,
        ts.source_frame_count() as u128 * base.denom() as u128,
    ))
}

pub fn to_f64(r: &Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn exact_rate(rate: FrameRate) -> Exact {
    Exact::new(rate.numer() as u128, rate.denom() as u128)
}

/// Decimal string of `r` rounded half away from zero to `decimals` places.
pub fn display_round(r: &Exact, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let (n, d) = (*r.numer(), *r.denom());
    let scaled = (2 * n * scale + d) / (2 * d);
    let int = scaled / scale;
    if decimals == 0 {
        return int.to_string();
    }
    format!("{int}.{:0width$}", scaled % scale, width = decimals as usize)
}

/// Rounds a display figure such as `"1.3"` or `"0.64"` to that figure's own
/// precision and checks for an exact match.
pub fn matches_display(r: &Exact, figure: &str) -> bool {
    let decimals = figure.split_once('.').map(|(_, f)| f.len() as u32).unwrap_or(0);
    display_round(r, decimals) == figure
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bitrate {
    /// Length and semantic index bits only (`n_q = 1`).
    pub semantic_kbps: f64,
    /// All `n_q` layers.
    pub total_kbps: f64,
    #[serde(skip)]
    pub semantic_exact: Exact,
    #[serde(skip)]
    pub total_exact: Exact,
}

/// Payload bitrate at a given average frame rate.
pub fn bitrate_at_rate(avg_rate: Exact, n_q: usize, layout: &BitLayout) -> Bitrate {
    let sem = avg_rate * Exact::from_integer(layout.semantic_frame_bits() as u128) / Exact::from_integer(1000);
    let total = avg_rate * Exact::from_integer(layout.frame_bits(n_q) as u128) / Exact::from_integer(1000);
    Bitrate {
        semantic_kbps: to_f64(&sem),
        total_kbps: to_f64(&total),
        semantic_exact: sem,
        total_exact: total,
    }
}

pub fn bitrate_kbps(ts: &TokenStream, layout: &BitLayout) -> Result<Bitrate> {
    Ok(bitrate_at_rate(average_frame_rate_exact(ts)?, ts.n_q(), layout))
}

/// `sample_rate / prod(strides)` as an exact rate.
pub fn stride_frame_rate(sample_rate_hz: u32, strides: &[u32]) -> Result<FrameRate> {
    let mut product = 1u64;
    for &s in strides {
        if s == 0 {
            return Err(Error::Config("encoder strides must be >= 1".into()));
        }
        product = product
            .checked_mul(s as u64)
            .ok_or_else(|| Error::Config("stride product overflows".into()))?;
    }
    FrameRate::from_u64(sample_rate_hz as u64, product)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub tau: f64,
    pub merged_frames: usize,
    pub avg_rate_hz: f64,
    pub payload_kbps: f64,
}

/// Average frame rate and projected bitrate per threshold, sorted by tau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
}

impl RateCurve {
    pub fn is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0].tau <= w[1].tau && w[0].avg_rate_hz <= w[1].avg_rate_hz)
    }

    pub fn rate_span(&self) -> f64 {
        let rates = self.points.iter().map(|p| p.avg_rate_hz);
        let max = rates.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = rates.fold(f64::INFINITY, f64::min);
        if self.points.is_empty() {
            0.0
        } else {
            max - min
        }
    }
}

/// Merged frame count for a threshold, from precomputed similarities.
fn merged_frames(sims: &[f64], frames: usize, tau: f64, l_max: usize) -> Result<usize> {
    if frames == 0 {
        return Ok(0);
    }
    Ok(plan_merge(sims, tau, l_max)?.merged_len())
}

/// Plan-only average frame rate of `semantic` at `tau`.
pub fn frame_rate_at_tau(semantic: &FeatureSequence, tau: f64, l_max: usize) -> Result<f64> {
    let duration = semantic.duration_s();
    if duration <= 0.0 {
        return Err(Error::Domain("frame rate of an empty sequence".into()));
    }
    let sims = adjacent_similarity(semantic);
    Ok(merged_frames(&sims, semantic.len(), tau, l_max)? as f64 / duration)
}

pub fn sweep_tau(
    semantic: &FeatureSequence,
    taus: &[f64],
    l_max: usize,
    n_q: usize,
    layout: &BitLayout,
) -> Result<RateCurve> {
    if taus.is_empty() {
        return Err(Error::Config("tau sweep needs at least one threshold".into()));
    }
    if semantic.is_empty() {
        return Err(Error::Domain("cannot sweep an empty sequence".into()));
    }
    let sims = adjacent_similarity(semantic);
    let base = exact_rate(semantic.rate());
    let frames = semantic.len();
    let mut sorted = taus.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let points = sorted
        .par_iter()
        .map(|&tau| {
            let merged = merged_frames(&sims, frames, tau, l_max)?;
            let rate = base * Exact::new(merged as u128, frames as u128);
            Ok(RatePoint {
                tau,
                merged_frames: merged,
                avg_rate_hz: to_f64(&rate),
                payload_kbps: bitrate_at_rate(rate, n_q, layout).total_kbps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSearch {
    pub tau: f64,
    pub achieved_rate_hz: f64,
    pub iterations: usize,
}

pub const TAU_SEARCH_MAX_ITERS: usize = 60;

/// Bisects tau in `[0, 1]` until the plan-only average rate is within `tol_hz`
/// of `target_hz`; otherwise returns the closest threshold seen.
pub fn tau_for_target_rate(semantic: &FeatureSequence, target_hz: f64, tol_hz: f64, l_max: usize) -> Result<TauSearch> {
    let base = semantic.rate().as_f64();
    if target_hz.is_nan() || target_hz <= 0.0 || target_hz > base {
        return Err(Error::Domain(format!(
            "target rate {target_hz} Hz must lie in (0, {base}] Hz"
        )));
    }
    if semantic.is_empty() {
        return Err(Error::Domain("cannot calibrate tau on an empty sequence".into()));
    }
    let sims = adjacent_similarity(semantic);
    let frames = semantic.len();
    let duration = semantic.duration_s();
    let rate_at = |tau: f64| -> Result<f64> { Ok(merged_frames(&sims, frames, tau, l_max)? as f64 / duration) };

    let top = rate_at(1.0)?;
    let mut best = TauSearch {
        tau: 1.0,
        achieved_rate_hz: top,
        iterations: 0,
    };
    if (top - target_hz).abs() <= tol_hz {
        return Ok(best);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for i in 1..=TAU_SEARCH_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let rate = rate_at(mid)?;
        if (rate - target_hz).abs() < (best.achieved_rate_hz - target_hz).abs() {
            best = TauSearch {
                tau: mid,
                achieved_rate_hz: rate,
                iterations: i,
            };
        }
        if (rate - target_hz).abs() <= tol_hz {
            break;
        }
        if rate < target_hz {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Sample Pearson correlation, accumulated in one pass with running
/// co-moments.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} samples", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two samples".into()));
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&a, &b)) in x.iter().zip(y).enumerate() {
        let n = (i + 1) as f64;
        let dx = a - mx;
        let dy = b - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A labelled time interval, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

/// Parses `start end label` lines (seconds, whitespace separated). Blank
/// lines and `#` comments are skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let bad = || Error::Validation(format!("line {}: expected `start end label`", lineno + 1));
        let start: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let end: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let label = parts.collect::<Vec<_>>().join(" ");
        if label.is_empty() {
            return Err(bad());
        }
        out.push(Annotation {
            start_s: start,
            end_s: end,
            label,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub length: usize,
    pub semantic_index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub merged_frames: usize,
    pub source_frames: u64,
    pub duration_s: f64,
    pub avg_rate_hz: f64,
    /// `length_histogram[i]` counts merged frames of length `i + 1`.
    pub length_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub frames: Vec<FrameRecord>,
    pub summary: ReportSummary,
}

impl MergeReport {
    /// One JSON object per merged frame, then a `{"summary": ...}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            let _ = writeln!(out, "{}", serde_json::to_string(f).expect("serializable record"));
        }
        let summary = serde_json::json!({ "summary": self.summary });
        let _ = writeln!(out, "{summary}");
        out
    }
}

/// Time span, length and semantic index of every merged frame, with the
/// labels of any annotation overlapping it.
pub fn merge_report(ts: &TokenStream, annotations: Option<&[Annotation]>) -> Result<MergeReport> {
    let duration = ts.duration_s();
    if let Some(anns) = annotations {
        for (i, a) in anns.iter().enumerate() {
            let ok = a.start_s.is_finite()
                && a.end_s.is_finite()
                && a.start_s >= 0.0
                && a.start_s < a.end_s
                && a.end_s <= duration + 1e-9;
            if !ok {
                return Err(Error::Validation(format!(
                    "annotation {i} [{}, {}] is not a proper interval within [0, {duration}]",
                    a.start_s, a.end_s
                )));
            }
        }
    }
    let base = ts.base_rate();
    let l_max = ts.layout().l_max as usize;
    let mut histogram = vec![0usize; l_max];
    let mut frames = Vec::with_capacity(ts.len());
    let mut cursor = 0u64;
    for (k, (&len, &sem)) in ts.lengths().iter().zip(ts.semantic_indices()).enumerate() {
        let start_s = base.duration_of(cursor);
        cursor += len as u64;
        let end_s = base.duration_of(cursor);
        histogram[len - 1] += 1;
        let labels = annotations.map(|anns| {
            anns.iter()
                .filter(|a| a.start_s < end_s && a.end_s > start_s)
                .map(|a| a.label.clone())
                .collect()
        });
        frames.push(FrameRecord {
            frame: k,
            start_s,
            end_s,
            length: len,
            semantic_index: sem,
            labels,
        });
    }
    let avg_rate_hz = if ts.source_frame_count() == 0 {
        0.0
    } else {
        average_frame_rate(ts)?
    };
    Ok(MergeReport {
        frames,
        summary: ReportSummary {
            merged_frames: ts.len(),
            source_frames: ts.source_frame_count(),
            duration_s: duration,
            avg_rate_hz,
            length_histogram: histogram,
        },
    })
}
