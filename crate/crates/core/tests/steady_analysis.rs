use kerrcat::analysis::{fit_cat, observable_split, spectral_decompose, wigner_numeric, GridSpec};
use kerrcat::exact::ExactSteadyState;
use kerrcat::fock::{number, parity};
use kerrcat::{DensityMatrix, SystemParams, C64};

fn steady(params: &SystemParams) -> DensityMatrix {
    let es = ExactSteadyState::new(params).unwrap();
    let n = es.sufficient_cutoff(params.auto_cutoff()).unwrap();
    es.density_matrix(n).unwrap().density
}

#[test]
fn weak_pump_splits_into_vacuum_and_one_photon() {
    let rho = steady(&SystemParams::new(0.0, 1.0, 0.05, 0.1, 1.0));
    let report = spectral_decompose(&rho).unwrap();
    let split = observable_split(&report, &number(rho.cutoff()).unwrap()).unwrap();
    assert!(split.first.norm() < 1e-2, "{}", split.first);
    assert!((split.second - 1.0).norm() < 1e-2, "{}", split.second);
    assert!(split.discrepancy <= split.bound + 1e-12);
}

#[test]
fn leading_eigenstates_have_opposite_parity() {
    let rho = steady(&SystemParams::new(0.0, 1.0, 10.0, 0.1, 1.0));
    let report = spectral_decompose(&rho).unwrap();
    let split = observable_split(&report, &parity(rho.cutoff()).unwrap()).unwrap();
    assert!((split.first - 1.0).norm() < 1e-6);
    assert!((split.second + 1.0).norm() < 1e-6);
    for p in &report.parities[..2] {
        assert!((p.abs() - 1.0).abs() < 1e-8);
    }
    assert!(report.residual < 1e-2);
    let sum: f64 = report.probabilities.iter().sum();
    assert!((sum - 1.0).abs() < 1e-10);
    assert!(report.probabilities.iter().all(|p| *p >= -1e-10));
}

#[test]
fn dominant_eigenstate_is_a_cat_of_size_near_2_7() {
    let rho = steady(&SystemParams::new(0.0, 1.0, 10.0, 0.1, 1.0));
    let report = spectral_decompose(&rho).unwrap();
    let fit = fit_cat(&report.states[0]).unwrap();
    assert!(1.0 - fit.overlap <= 1e-5, "{}", fit.overlap);
    assert!((fit.alpha.norm() / 2.7 - 1.0).abs() <= 0.05, "{}", fit.alpha);
    assert!(fit.alpha.arg() >= 0.0 && fit.alpha.arg() < std::f64::consts::PI);
}

#[test]
fn mixture_wigner_is_nonnegative_and_matches_closed_form() {
    let params = SystemParams::new(0.0, 1.0, 10.0, 0.1, 1.0);
    let es = ExactSteadyState::new(&params).unwrap();
    let rho = steady(&params);
    let grid = wigner_numeric(&rho, &GridSpec::square(3.0, 0.25)).unwrap();
    assert!(grid.min_value > -1e-6, "{} at {}", grid.min_value, grid.min_location);
    for (i, x) in grid.re_axis.iter().enumerate() {
        for (j, y) in grid.im_axis.iter().enumerate() {
            let w = es.wigner(C64::new(*x, *y)).unwrap();
            assert!((grid.values[(i, j)] - w).abs() < 1e-6);
        }
    }
}
