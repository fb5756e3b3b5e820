mod common;

use common::{Setup, D_SERIES};
use rydberg_eit::analysis::{AnalysisOptions, IntervalKind};
use rydberg_eit::spectrum::{apply_sidebands, distort_axis, ScanDistortion, SidebandSpec};
use rydberg_eit::*;

#[test]
fn s_state_closed_loop_recovers_hyperfine_intervals() {
    let s = Setup::default();
    let (set, trace) = s.simulate(43, &[Series::S12]);
    let a = s.analyze(&trace, &set, &AnalysisOptions::default());
    assert_eq!(a.peaks.len(), 3);
    for (peak, want) in a.peaks.iter().zip([-304.8, -169.2, 0.0]) {
        assert!((peak.fit.center - want).abs() < 1.0, "{} vs {want}", peak.fit.center);
        assert!(!peak.unresolved);
    }
    let upper = a.report.find(43, IntervalKind::Hyperfine, "F'5-F'4@S1/2").unwrap();
    let lower = a.report.find(43, IntervalKind::Hyperfine, "F'4-F'3@S1/2").unwrap();
    assert!((upper.measured_mhz - 251.0).abs() < 1.0);
    assert!((lower.measured_mhz - 201.2).abs() < 1.0);
    assert!(a.report.overlaps.is_empty());
}

#[test]
fn d_state_fine_structure_matches_theory() {
    let s = Setup::default();
    let (set, trace) = s.simulate(50, &D_SERIES);
    assert_eq!(set.len(), 6);
    let a = s.analyze(&trace, &set, &AnalysisOptions::default());
    let theory = s.atom.fine_structure_splitting(50).unwrap();
    for f in ["5", "4", "3"] {
        let r = a
            .report
            .find(50, IntervalKind::FineStructure, &format!("D5/2-D3/2@F'{f}"))
            .unwrap();
        assert!(r.percent_bias.abs() < 1.0, "{r:?}");
        assert_eq!(r.theory_mhz, theory);
    }
}

#[test]
fn coinciding_lines_are_flagged_not_reported() {
    let s = Setup::default();
    let n = 61;
    let (set, trace) = s.simulate(n, &D_SERIES);
    let a = s.analyze(&trace, &set, &AnalysisOptions::default());
    assert!(a.has_unresolved());
    let flagged: Vec<&String> = a.report.overlaps.iter().flat_map(|o| &o.pathways).collect();
    assert!(flagged.iter().any(|p| p.as_str() == "F'=3 -> 61D5/2"), "{flagged:?}");
    assert!(flagged.iter().any(|p| p.as_str() == "F'=5 -> 61D3/2"), "{flagged:?}");
    assert!(a.report.find(n, IntervalKind::FineStructure, "D5/2-D3/2@F'3").is_none());
    assert!(a.report.find(n, IntervalKind::FineStructure, "D5/2-D3/2@F'4").is_some());
}

#[test]
fn hyperfine_intervals_do_not_depend_on_n() {
    let s = Setup::default();
    let mut values = Vec::new();
    for n in [43, 50, 63] {
        let (set, trace) = s.simulate(n, &D_SERIES);
        let a = s.analyze(&trace, &set, &AnalysisOptions::default());
        values.push(
            a.report
                .find(n, IntervalKind::Hyperfine, "F'5-F'4@D3/2")
                .unwrap()
                .measured_mhz,
        );
    }
    let spread =
        values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.5, "{values:?}");
}

#[test]
fn raw_axis_round_trip_through_sidebands() {
    let s = Setup::default();
    let (set, trace) = s.simulate(43, &[Series::S12]);
    let modulated = apply_sidebands(&trace, &SidebandSpec::default()).unwrap();
    let distortion = ScanDistortion {
        c1: 1.0,
        c2: 1.0e-4,
        c3: 5.0e-8,
    };
    let raw = distort_axis(&modulated, &distortion).unwrap();
    let opts = AnalysisOptions {
        rf_frequency: Some(50.0),
        ..Default::default()
    };
    let a = s.analyze(&raw, &set, &opts);
    assert!(a.calibration.is_some());
    assert_eq!(a.sidebands.len(), 3);
    for (pair, theory) in [("F'5-F'4@S1/2", 251.0), ("F'4-F'3@S1/2", 201.2)] {
        let r = a.report.find(43, IntervalKind::Hyperfine, pair).unwrap();
        assert!((r.measured_mhz / theory - 1.0).abs() < 5e-3, "{r:?}");
    }
}

#[test]
fn raw_axis_without_sidebands_is_refused() {
    let s = Setup::default();
    let (set, trace) = s.simulate(43, &[Series::S12]);
    let raw = distort_axis(
        &trace,
        &ScanDistortion {
            c1: 1.0,
            c2: 1e-4,
            c3: 0.0,
        },
    )
    .unwrap();
    let err =
        rydberg_eit::analysis::analyze_trace(&raw, &set, &s.atom, &s.sys, &AnalysisOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Calibration(_)));
}

#[test]
fn trace_survives_text_round_trip_into_analysis() {
    let s = Setup::default();
    let (set, trace) = s.simulate(43, &[Series::S12]);
    let back = SpectrumTrace::parse(&trace.to_text()).unwrap();
    assert_eq!(back, trace);
    let a = s.analyze(&back, &set, &AnalysisOptions::default());
    assert_eq!(a.peaks.len(), 3);
}
