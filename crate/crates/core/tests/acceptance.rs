//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use kerrcat::analysis::{fit_cat, spectral_decompose, wigner_analytic, wigner_numeric, wigner_numeric_many, GridSpec};
use kerrcat::exact::ExactSteadyState;
use kerrcat::fock::{annihilation, cat_state, coherent_state, creation};
use kerrcat::master::{evolve, fidelity, first_passage, steady_state_nullspace, ChannelLabel, FirstPassageOptions};
use kerrcat::trajectory::{ensemble_with, run_trajectory, TrajectoryOptions};
use kerrcat::{DensityMatrix, Parity, Result, StateVector, SystemParams, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn exact_density(params: &SystemParams, margin: usize) -> Result<DensityMatrix> {
    let es = ExactSteadyState::new(params)?;
    let cutoff = es.sufficient_cutoff(params.auto_cutoff())? + margin;
    Ok(es.density_matrix(cutoff)?.density)
}

/// Δ=0, U=1, γ=0.1, G=10
fn cat_point() -> SystemParams {
    SystemParams::new(0.0, 1.0, 10.0, 0.1, 1.0)
}

fn grid_points() -> Vec<SystemParams> {
    let mut out = Vec::new();
    for d in [-0.2, -0.1, 0.0, 0.1, 0.2] {
        for g in [3.0, 6.0, 9.0, 12.0, 15.0] {
            for gamma in [5.0 / 3.0, 10.0 / 3.0, 5.0] {
                for u in [1.0, 5.5, 10.0] {
                    out.push(SystemParams::new(d, u, g, gamma, 1.0));
                }
            }
        }
    }
    out
}

fn random_points(seed: u64, count: usize) -> Vec<SystemParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let pump = C64::from_polar(rng.gen_range(0.0..15.0), rng.gen_range(0.0..std::f64::consts::TAU));
            SystemParams::new(rng.gen_range(-0.2..0.2), rng.gen_range(1.0..10.0), pump, rng.gen_range(0.01..5.0), 1.0)
        })
        .collect()
}

fn null_vector_agreement() -> Result<Outcome> {
    let start = Instant::now();
    let params = cat_point();
    let cutoff = 50;
    let exact = ExactSteadyState::new(&params)?.density_matrix(cutoff)?.density;
    let null = steady_state_nullspace(&params, cutoff)?.density;
    let f = fidelity(&exact, &null)?;
    let secs = start.elapsed().as_secs_f64();
    outcome(f >= 1.0 - 1e-8 && secs < 60.0, format!("1 - F = {:.2e} at N = {cutoff}, {secs:.1} s", 1.0 - f))
}

struct GridScan {
    worst_residual: (f64, SystemParams),
    worst_overlap: (f64, SystemParams),
    failing_residual: usize,
}

fn scan_grid() -> Result<GridScan> {
    let mut scan = GridScan {
        worst_residual: (f64::NEG_INFINITY, cat_point()),
        worst_overlap: (f64::INFINITY, cat_point()),
        failing_residual: 0,
    };
    for p in grid_points() {
        let report = spectral_decompose(&exact_density(&p, 0)?)?;
        if report.residual >= 1e-2 {
            scan.failing_residual += 1;
        }
        if report.residual > scan.worst_residual.0 {
            scan.worst_residual = (report.residual, p);
        }
        for state in &report.states[..2] {
            let fit = fit_cat(state)?;
            if fit.overlap < scan.worst_overlap.0 {
                scan.worst_overlap = (fit.overlap, p);
            }
        }
    }
    Ok(scan)
}

fn describe(p: &SystemParams) -> String {
    format!("Δ={}, U={}, G={}, γ={:.3}", p.detuning, p.kerr, p.pump.re, p.one_photon_rate)
}

fn residual_bound(scan: &GridScan) -> Result<Outcome> {
    let (r, p) = &scan.worst_residual;
    outcome(
        scan.failing_residual == 0,
        format!(
            "{} of {} points with residual >= 1e-2; worst {r:.3e} at {}",
            scan.failing_residual,
            grid_points().len(),
            describe(p)
        ),
    )
}

fn cat_overlap(scan: &GridScan) -> Result<Outcome> {
    let (o, p) = &scan.worst_overlap;
    let report = spectral_decompose(&exact_density(&cat_point(), 0)?)?;
    let first = fit_cat(&report.states[0])?;
    let second = fit_cat(&report.states[1])?;
    let deficit = (1.0 - first.overlap).max(1.0 - second.overlap);
    let size_err = (first.alpha.norm() / 2.7 - 1.0).abs();
    outcome(
        *o >= 0.98 && deficit <= 1e-5 && size_err <= 0.05,
        format!(
            "grid minimum overlap {o:.4} at {}; cat point 1 - overlap = {deficit:.2e}, α = {:.3} (|α| = {:.3}, arg = {:.3})",
            describe(p),
            first.alpha,
            first.alpha.norm(),
            first.alpha.arg()
        ),
    )
}

fn checkerboard() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for p in random_points(11, 10) {
        let rho = exact_density(&p, 0)?;
        let m = rho.matrix();
        let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if (i + j) % 2 == 1 {
                    worst = worst.max(m[(i, j)].norm() / scale);
                }
            }
        }
    }
    outcome(worst < 1e-12, format!("largest odd coherence {worst:.2e} over 10 points"))
}

fn moments_cross_check() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for p in random_points(23, 10) {
        let es = ExactSteadyState::new(&p)?;
        let rho = exact_density(&p, 20)?;
        let n = rho.cutoff();
        let a = annihilation(n)?;
        let ad = creation(n)?;
        for k in [1usize, 2] {
            let mut op = kerrcat::OperatorMatrix::identity(n)?;
            for _ in 0..k {
                op = ad.compose(&op)?;
            }
            for _ in 0..k {
                op = op.compose(&a)?;
            }
            let trace = (rho.matrix() * op.matrix()).trace();
            let closed = es.moment(k, k)?;
            worst = worst.max((closed - trace).norm() / trace.norm());
        }
    }
    outcome(worst <= 1e-10, format!("largest relative difference {worst:.2e} over 10 points"))
}

fn wigner_checks() -> Result<Outcome> {
    let params = cat_point();
    let es = ExactSteadyState::new(&params)?;
    let analytic = wigner_analytic(&es, &GridSpec::default())?;
    let rho = exact_density(&params, 0)?;
    let inner = GridSpec::square(3.0, 0.05);
    let numeric = wigner_numeric(&rho, &inner)?;
    let mut diff: f64 = 0.0;
    for (i, x) in numeric.re_axis.iter().enumerate() {
        for (j, y) in numeric.im_axis.iter().enumerate() {
            let beta = C64::new(*x, *y);
            if beta.norm() <= 3.0 {
                diff = diff.max((numeric.values[(i, j)] - es.wigner(beta)?).abs());
            }
        }
    }
    let report = spectral_decompose(&rho)?;
    let leading = kerrcat::analysis::wigner_numeric_pure(&report.states[0], &GridSpec::default())?;
    outcome(
        analytic.min_value >= 0.0 && diff <= 1e-6 && leading.min_value < 0.0,
        format!(
            "closed-form minimum {:.2e}; numeric vs closed form {diff:.2e} on |β| <= 3; leading eigenstate minimum {:.4}",
            analytic.min_value, leading.min_value
        ),
    )
}

fn trajectory_convergence() -> Result<Outcome> {
    let params = cat_point();
    let cutoff = 40;
    let psi0 = StateVector::vacuum(cutoff)?;
    let dt = 1e-3;
    let output: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
    let me = evolve(&params, &psi0.to_density(), &output, 1e-8, 1e-10)?;
    let opts = TrajectoryOptions { record_stride: 500, ..TrajectoryOptions::new(5.0, dt) };
    let ens = ensemble_with(&params, &psi0, &opts, 100, 2024)?;
    let mut worst: f64 = 0.0;
    for (k, t) in output.iter().enumerate() {
        let i = ens.times.iter().position(|s| (s - t).abs() < 1e-9).expect("output time on the record grid");
        let obs = &me.observables[k];
        for (mean, se, exact) in [
            (ens.mean_photon_number[i], ens.se_photon_number[i], obs.photon_number),
            (ens.mean_parity[i], ens.se_parity[i], obs.parity),
        ] {
            let z = if se > 0.0 {
                (mean - exact).abs() / se
            } else if mean == exact {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }

    let rec = run_trajectory(&params, &psi0, 20.0, dt, 7)?;
    let mut pure = true;
    for p in &rec.parity {
        pure &= (p.abs() - 1.0).abs() < 1e-6;
    }
    let mut flips_match = true;
    let mut one_photon = 0;
    for w in 0..rec.times.len() - 1 {
        let (t0, t1) = (rec.times[w], rec.times[w + 1]);
        let flips =
            rec.jumps.iter().filter(|j| j.time > t0 && j.time <= t1 && j.channel == ChannelLabel::OnePhoton).count();
        let changed = rec.parity[w].signum() != rec.parity[w + 1].signum();
        flips_match &= changed == (flips % 2 == 1);
    }
    for j in &rec.jumps {
        let expected = if j.channel == ChannelLabel::OnePhoton { -j.parity_before } else { j.parity_before };
        flips_match &= (j.parity_after - expected).abs() < 1e-6;
        if j.channel == ChannelLabel::OnePhoton {
            one_photon += 1;
        }
    }
    outcome(
        worst <= 3.0 && pure && flips_match && one_photon > 0,
        format!(
            "largest deviation {worst:.2} standard errors; single trajectory: parity pure = {pure}, flips at one-photon jumps = {flips_match} ({one_photon} jumps)"
        ),
    )
}

fn metastability() -> Result<Outcome> {
    let params = SystemParams::new(0.0, 1.0, 10.0, 1.0, 1.0);
    let cutoff = 32;
    let target = steady_state_nullspace(&params, cutoff)?.density;
    let report = spectral_decompose(&target)?;
    let alpha = fit_cat(&report.states[0])?.alpha;
    let opts = FirstPassageOptions::default();
    let vacuum = first_passage(&params, &DensityMatrix::fock(0, cutoff)?, &target, 0.999, &opts)?;
    let coherent = coherent_state(alpha, cutoff)?.to_density();
    let from_cat = first_passage(&params, &coherent, &target, 0.999, &opts)?;
    match (vacuum, from_cat) {
        (Some(v), Some(c)) => {
            let ratio = c.time / v.time;
            outcome(
                ratio >= 10.0,
                format!("vacuum {:.3}, coherent |α = {alpha:.3}> {:.4e}, ratio {ratio:.3e}", v.time, c.time),
            )
        }
        (v, c) => outcome(false, format!("threshold not reached: vacuum {v:?}, coherent {c:?}")),
    }
}

fn feedback_stabilization() -> Result<Outcome> {
    let cutoff = 40;
    let rates = [0.1, 1.0, 10.0];
    let mut parities = Vec::new();
    let mut states = Vec::new();
    for rate in rates {
        let params = cat_point().with_feedback(rate, Parity::Odd);
        let rho = steady_state_nullspace(&params, cutoff)?.density;
        parities.push(rho.populations().iter().enumerate().map(|(k, p)| Parity::of(k).sign() * p).sum::<f64>());
        states.push(rho);
    }
    let minima: Vec<f64> = wigner_numeric_many(&states, &GridSpec::default())?.iter().map(|g| g.min_value).collect();
    let strongest = states.last().unwrap();
    let fit = fit_cat(&spectral_decompose(strongest)?.states[0])?;
    let cat = cat_state(fit.alpha, Parity::Even, cutoff)?.to_density();
    let f = fidelity(strongest, &cat)?;
    let increasing = parities.windows(2).all(|w| w[1] > w[0]);
    outcome(
        increasing && minima.iter().all(|m| *m < 0.0) && f > 0.9,
        format!("<P> = {parities:.4?}, Wigner minima = {minima:.4?}, fidelity to even cat {f:.4}"),
    )
}

fn decay_sanity() -> Result<Outcome> {
    let times: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
    let one = evolve(&SystemParams::new(0.0, 0.0, 0.0, 1.0, 0.0), &DensityMatrix::fock(1, 4)?, &times, 1e-10, 1e-12)?;
    let two = evolve(&SystemParams::new(0.0, 0.0, 0.0, 0.0, 1.0), &DensityMatrix::fock(2, 4)?, &times, 1e-10, 1e-12)?;
    let mut err1: f64 = 0.0;
    let mut err2: f64 = 0.0;
    for (k, t) in times.iter().enumerate() {
        err1 = err1.max((one.observables[k].photon_number - (-t).exp()).abs());
        err2 = err2.max((two.snapshots[k].populations()[2] - (-2.0 * t).exp()).abs());
    }
    outcome(err1 <= 1e-6 && err2 <= 1e-6, format!("one-photon error {err1:.2e}, two-photon error {err2:.2e}"))
}

fn main() -> ExitCode {
    let scan = scan_grid();
    type Check<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;
    let grid = |f: fn(&GridScan) -> Result<Outcome>| -> Check<'_> {
        let scan = &scan;
        Box::new(move || match scan {
            Ok(s) => f(s),
            Err(e) => Err(e.clone()),
        })
    };
    let checks: Vec<(&str, Check)> = vec![
        ("closed form matches Liouvillian null vector", Box::new(null_vector_agreement)),
        ("two-eigenstate residual below 1e-2 on parameter grid", grid(residual_bound)),
        ("leading eigenstates are cats", grid(cat_overlap)),
        ("no even-odd coherences", Box::new(checkerboard)),
        ("closed-form moments match trace form", Box::new(moments_cross_check)),
        ("Wigner positivity and agreement", Box::new(wigner_checks)),
        ("trajectory ensemble reproduces master equation", Box::new(trajectory_convergence)),
        ("metastable coherent start", Box::new(metastability)),
        ("parity feedback stabilizes the even cat", Box::new(feedback_stabilization)),
        ("closed-form decay", Box::new(decay_sanity)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{:>2} {} {name}: {detail} [{:.1} s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
