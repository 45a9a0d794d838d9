//! Shared fixtures of the benchmark suite.

use std::sync::Arc;

use carnot::frames::make_lattice;
use carnot::spectral::assemble_sublaplacian;
use carnot::wavelets::{build_lp_wavelet, make_phi_hat, make_psi_hat, BuildOptions};
use carnot::{
    Backend, BumpSpec, Frame, GridFunction, GridSpec, GroupSpec, LPWavelet, SubLaplacian,
    TestFamily,
};

pub fn e1_laplacian(half_width: f64, points: usize) -> Arc<SubLaplacian> {
    let grid = GridSpec::uniform(GroupSpec::euclidean(1).unwrap(), half_width, points).unwrap();
    Arc::new(assemble_sublaplacian(Arc::new(grid), None).unwrap())
}

pub fn h1_laplacian(half_width: f64, points: usize) -> Arc<SubLaplacian> {
    let grid = GridSpec::uniform(GroupSpec::heisenberg(1).unwrap(), half_width, points).unwrap();
    Arc::new(assemble_sublaplacian(Arc::new(grid), None).unwrap())
}

pub fn wavelet(lm: &Arc<SubLaplacian>, j_range: (i32, i32), backend: Backend) -> Arc<LPWavelet> {
    let psi = make_psi_hat(&make_phi_hat(&BumpSpec::default()).unwrap()).unwrap();
    let opts = BuildOptions {
        backend,
        ..Default::default()
    };
    Arc::new(build_lp_wavelet(lm.clone(), psi, j_range, &opts).unwrap())
}

pub fn frame(w: &Arc<LPWavelet>, alpha: f64) -> Frame {
    let grid = w.laplacian().grid().clone();
    let set = make_lattice(grid.group(), alpha, &grid).unwrap();
    Frame::new(w.clone(), set, w.j_range())
        .unwrap()
        .with_complement(true)
}

pub fn test_function(lm: &SubLaplacian, seed: u64) -> GridFunction {
    TestFamily {
        count: 1,
        seed,
        band_lo: 0.25,
        band_hi: 4.0,
        envelope: 0.25,
    }
    .generate(lm, Backend::Auto)
    .unwrap()
    .remove(0)
}
