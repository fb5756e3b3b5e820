#![allow(dead_code)]

use rydberg_eit::analysis::{analyze_trace, AnalysisOptions, TraceAnalysis};
use rydberg_eit::spectrum::{grid_around, linear_grid, synthesize_trace};
use rydberg_eit::*;

#[derive(Default)]
pub struct Setup {
    pub atom: AtomData,
    pub sys: LadderSystem,
    pub ens: ThermalEnsemble,
    pub quad: QuadratureSpec,
}

impl Setup {
    pub fn pathways(&self, n: u32, series: &[Series]) -> PathwaySet {
        PathwaySet::predict(
            &self.atom,
            n,
            series,
            &FPrime::ALL,
            &RelativeStrengths::default(),
            &self.sys,
            &self.ens,
        )
        .unwrap()
    }

    /// 43S on the usual [-400, 100] MHz window, nD on a window around its six lines.
    pub fn simulate(&self, n: u32, series: &[Series]) -> (PathwaySet, SpectrumTrace) {
        let set = self.pathways(n, series);
        let grid = if series == [Series::S12] {
            linear_grid(-400.0, 100.0, 2001).unwrap()
        } else {
            grid_around(&set, 100.0, 0.25).unwrap()
        };
        let trace = synthesize_trace(&grid, &set, &self.sys, &self.ens, &self.quad, 5.0).unwrap();
        (set, trace)
    }

    pub fn analyze(&self, trace: &SpectrumTrace, set: &PathwaySet, opts: &AnalysisOptions) -> TraceAnalysis {
        analyze_trace(trace, set, &self.atom, &self.sys, opts).unwrap()
    }
}

pub const D_SERIES: [Series; 2] = [Series::D32, Series::D52];
