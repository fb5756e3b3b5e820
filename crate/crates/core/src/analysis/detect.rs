//! Transparency-peak candidates on a transmission trace.

use serde::{Deserialize, Serialize};

use crate::spectrum::SpectrumTrace;

/// A local transmission maximum that survived the separation, prominence and
/// width filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCandidate {
    pub index: usize,
    pub position: f64,
    pub height: f64,
    pub prominence: f64,
    /// Full width at half prominence, axis units.
    pub width: f64,
}

/// Finds transparency peaks.
///
/// Local maxima (middle of flat tops) are thinned so that no two lie closer
/// than `min_separation`, keeping the higher one. Prominence is measured
/// within `±min_separation` of each peak so that the broad Doppler background
/// does not inflate it. Peaks wider than `min_separation` at half prominence
/// are line-shape undulations rather than transparency features and are
/// dropped. The result is sorted by position.
pub fn detect_peaks(trace: &SpectrumTrace, prominence: f64, min_separation: f64) -> Vec<PeakCandidate> {
    let x = trace.scan();
    let y = trace.transmission();
    let mut maxima = local_maxima(y);

    // Separation filter, highest first.
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::with_capacity(maxima.len());
    for i in maxima {
        if kept.iter().all(|&k| (x[k] - x[i]).abs() >= min_separation) {
            kept.push(i);
        }
    }
    kept.sort_unstable();

    kept.into_iter()
        .filter_map(|i| {
            let (prom, left_base, right_base) = prominence_of(x, y, i, min_separation);
            if !(prom >= prominence) || prom <= 0.0 {
                return None;
            }
            let width = half_prominence_width(x, y, i, prom, left_base, right_base);
            (width <= min_separation).then_some(PeakCandidate {
                index: i,
                position: x[i],
                height: y[i],
                prominence: prom,
                width,
            })
        })
        .collect()
}

fn local_maxima(y: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = y.len();
    let mut i = 1;
    while i + 1 < n {
        if y[i - 1] < y[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && y[ahead] == y[i] {
                ahead += 1;
            }
            if y[ahead] < y[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    out
}

/// Prominence within `±reach` of peak `i`, with the indices of the two bases.
fn prominence_of(x: &[f64], y: &[f64], i: usize, reach: f64) -> (f64, usize, usize) {
    let top = y[i];
    let mut left_min = top;
    let mut left_base = i;
    let mut j = i;
    while j > 0 && x[i] - x[j - 1] <= reach {
        j -= 1;
        if y[j] > top {
            break;
        }
        if y[j] < left_min {
            left_min = y[j];
            left_base = j;
        }
    }
    let mut right_min = top;
    let mut right_base = i;
    let mut j = i;
    while j + 1 < x.len() && x[j + 1] - x[i] <= reach {
        j += 1;
        if y[j] > top {
            break;
        }
        if y[j] < right_min {
            right_min = y[j];
            right_base = j;
        }
    }
    (top - left_min.max(right_min), left_base, right_base)
}

fn half_prominence_width(x: &[f64], y: &[f64], i: usize, prom: f64, left_base: usize, right_base: usize) -> f64 {
    let level = y[i] - 0.5 * prom;
    let mut j = i;
    while j > left_base && y[j] > level {
        j -= 1;
    }
    let left = if y[j] < level {
        x[j] + (level - y[j]) / (y[j + 1] - y[j]) * (x[j + 1] - x[j])
    } else {
        x[j]
    };
    let mut j = i;
    while j < right_base && y[j] > level {
        j += 1;
    }
    let right = if y[j] < level {
        x[j] - (level - y[j]) / (y[j - 1] - y[j]) * (x[j] - x[j - 1])
    } else {
        x[j]
    };
    right - left
}
