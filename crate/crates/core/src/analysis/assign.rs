//! Matching measured peaks to predicted excitation pathways.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::velocitymap::{ExcitationPathway, PathwaySet};

/// Result of matching `measured` positions against a pathway set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Shift added to measured positions to align them with predictions.
    pub offset: f64,
    /// For each pathway (in pathway-set order), the index of its measured peak.
    pub peak_of_pathway: Vec<Option<usize>>,
    /// Groups of pathway indices that landed on the same measured peak.
    pub merged: Vec<Vec<usize>>,
}

impl Assignment {
    pub fn pathways_of_peak(&self, peak: usize) -> Vec<usize> {
        self.peak_of_pathway
            .iter()
            .enumerate()
            .filter_map(|(i, p)| (*p == Some(peak)).then_some(i))
            .collect()
    }

    pub fn is_merged(&self, pathway: usize) -> bool {
        self.merged.iter().any(|g| g.contains(&pathway))
    }
}

/// Nearest-prediction assignment with a common axis offset. The offset is
/// chosen among all peak-to-prediction alignments to maximise the number of
/// peaks within `gate`, then to minimise their squared misfit. Every measured
/// peak must land within `gate` of some prediction.
pub fn assign_peaks(measured: &[f64], pathways: &PathwaySet, gate: f64) -> Result<Assignment> {
    if pathways.is_empty() {
        return Err(Error::config("pathways", "at least one pathway is required"));
    }
    let predicted: Vec<f64> = pathways.positions();
    let nearest = |x: f64| -> (usize, f64) {
        predicted
            .iter()
            .enumerate()
            .map(|(i, &p)| (i, (p - x).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap()
    };

    let mut best: Option<(usize, f64, f64)> = None;
    let mut offsets: Vec<f64> = vec![0.0];
    for &m in measured {
        for &p in &predicted {
            offsets.push(p - m);
        }
    }
    for off in offsets {
        let mut hits = 0;
        let mut misfit = 0.0;
        for &m in measured {
            let (_, d) = nearest(m + off);
            if d <= gate {
                hits += 1;
                misfit += d * d;
            }
        }
        let better = match best {
            None => true,
            Some((h, e, o)) => hits > h || (hits == h && (misfit < e || (misfit == e && off.abs() < o.abs()))),
        };
        if better {
            best = Some((hits, misfit, off));
        }
    }
    let (_, _, offset) = best.unwrap();

    let mut orphans = Vec::new();
    let mut peak_of_pathway = vec![None; predicted.len()];
    let mut nearest_distance = vec![f64::INFINITY; predicted.len()];
    for (k, &m) in measured.iter().enumerate() {
        let (i, d) = nearest(m + offset);
        if d > gate {
            orphans.push(m);
            continue;
        }
        if d < nearest_distance[i] {
            nearest_distance[i] = d;
            peak_of_pathway[i] = Some(k);
        }
    }
    if !orphans.is_empty() {
        return Err(Error::Assignment { orphans, gate });
    }
    // Pathways with no peak of their own that sit within the gate of a peak
    // already claimed were swallowed by it.
    for (i, &p) in predicted.iter().enumerate() {
        if peak_of_pathway[i].is_some() {
            continue;
        }
        let closest = measured
            .iter()
            .enumerate()
            .map(|(k, &m)| (k, (m + offset - p).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, d)) = closest {
            if d <= gate {
                peak_of_pathway[i] = Some(k);
            }
        }
    }
    let mut merged = Vec::new();
    for k in 0..measured.len() {
        let group: Vec<usize> = (0..predicted.len())
            .filter(|&i| peak_of_pathway[i] == Some(k))
            .collect();
        if group.len() > 1 {
            merged.push(group);
        }
    }
    Ok(Assignment {
        offset,
        peak_of_pathway,
        merged,
    })
}

pub(crate) fn describe(pathways: &[&ExcitationPathway]) -> Vec<String> {
    pathways.iter().map(|p| p.label()).collect()
}
