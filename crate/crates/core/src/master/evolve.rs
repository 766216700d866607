//! Adaptive Dormand–Prince 5(4) integration of the master equation.

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, SystemParams};
use crate::linalg::{self, CMat, C64};

use super::{fidelity, Lindbladian};

/// Cumulative Hermiticity/trace repair beyond which integration aborts.
pub const REPAIR_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Store the density matrix at every output time.
    pub keep_snapshots: bool,
    /// Record the fidelity to this state at every output time.
    pub fidelity_target: Option<DensityMatrix>,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { rtol: 1e-8, atol: 1e-10, keep_snapshots: true, fidelity_target: None, max_steps: 500_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observables {
    pub photon_number: f64,
    pub parity: f64,
    pub fidelity: Option<f64>,
}

impl Observables {
    pub(crate) fn of(rho: &CMat, target: Option<&DensityMatrix>) -> Result<Self> {
        let n = rho.nrows();
        let mut photon_number = 0.0;
        let mut parity = 0.0;
        for k in 0..n {
            let p = rho[(k, k)].re;
            photon_number += k as f64 * p;
            parity += if k % 2 == 0 { p } else { -p };
        }
        let fidelity = match target {
            Some(t) => Some(fidelity(t, &DensityMatrix::wrap(rho.clone()))?),
            None => None,
        };
        Ok(Observables { photon_number, parity, fidelity })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegratorStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    /// Sum over accepted steps of the Hermiticity and trace corrections.
    pub repair_total: f64,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    /// Empty unless snapshots were requested.
    pub snapshots: Vec<DensityMatrix>,
    pub observables: Vec<Observables>,
    pub stats: IntegratorStats,
}

/// Integrates from `rho0` at `t = 0` and reports at every time in `t_grid`,
/// keeping snapshots.
pub fn evolve(
    params: &SystemParams,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<EvolutionResult> {
    let opts = EvolveOptions { rtol, atol, ..EvolveOptions::default() };
    evolve_with(params, rho0, t_grid, &opts)
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if !(t_grid[0] >= 0.0) {
        return Err(Error::invalid(format!("time grid must start at t >= 0, got {}", t_grid[0])));
    }
    for w in t_grid.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::invalid(format!("time grid must be strictly increasing ({} then {})", w[0], w[1])));
        }
    }
    Ok(())
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// `out = y + h Σ w_i k_i`, with `y = 0` when absent.
fn combine(out: &mut CMat, y: Option<&CMat>, h: f64, terms: &[(f64, &CMat)]) {
    let o = out.as_mut_slice();
    match y {
        Some(y) => o.copy_from_slice(y.as_slice()),
        None => o.fill(C64::new(0.0, 0.0)),
    }
    for (w, k) in terms {
        if *w == 0.0 {
            continue;
        }
        let s = h * w;
        for (oi, ki) in o.iter_mut().zip(k.as_slice()) {
            *oi += ki * s;
        }
    }
}

fn error_norm(err: &CMat, y: &CMat, y_new: &CMat, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for ((e, a), b) in err.as_slice().iter().zip(y.as_slice()).zip(y_new.as_slice()) {
        let sc = atol + rtol * a.norm().max(b.norm());
        acc += (e.norm() / sc).powi(2);
    }
    (acc / err.len() as f64).sqrt()
}

fn rms_scaled(v: &CMat, y: &CMat, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for (x, a) in v.as_slice().iter().zip(y.as_slice()) {
        acc += (x.norm() / (atol + rtol * a.norm())).powi(2);
    }
    (acc / v.len() as f64).sqrt()
}

/// Replaces `rho` by its Hermitian part with unit trace; returns the size of
/// the correction.
pub(crate) fn repair(rho: &mut CMat) -> f64 {
    repair_with_trace(rho).0
}

fn repair_with_trace(rho: &mut CMat) -> (f64, f64) {
    let herm = linalg::hermitian_part(rho);
    let defect = linalg::max_abs(&(&herm - &*rho));
    let tr = linalg::trace(&herm).re;
    *rho = herm.unscale(tr);
    (defect + (tr - 1.0).abs(), tr)
}

pub fn evolve_with(
    params: &SystemParams,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    check_grid(t_grid)?;
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::invalid("rtol and atol must be positive"));
    }
    rho0.validate(1e-8)?;
    if let Some(t) = &opts.fidelity_target {
        if t.cutoff() != rho0.cutoff() {
            return Err(Error::invalid("fidelity target has a different cutoff"));
        }
    }
    let gen = Lindbladian::new(params, rho0.cutoff())?;
    let n = rho0.cutoff();
    let target = opts.fidelity_target.as_ref();

    let mut stats = IntegratorStats::default();
    let mut result = EvolutionResult {
        times: Vec::with_capacity(t_grid.len()),
        snapshots: Vec::new(),
        observables: Vec::with_capacity(t_grid.len()),
        stats,
    };
    let record = |rho: &CMat, t: f64, result: &mut EvolutionResult| -> Result<()> {
        result.times.push(t);
        result.observables.push(Observables::of(rho, target)?);
        if opts.keep_snapshots {
            result.snapshots.push(DensityMatrix::wrap(rho.clone()));
        }
        Ok(())
    };

    let zeros = || CMat::zeros(n, n);
    let mut y = rho0.matrix().clone();
    let mut scratch = zeros();
    let (mut k1, mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros());
    let mut stage = zeros();
    let mut y_new = zeros();
    let mut err = zeros();

    let mut eval = |rho: &CMat, out: &mut CMat, stats: &mut IntegratorStats| {
        gen.apply_into(rho, out, &mut scratch);
        stats.rhs_evaluations += 1;
    };

    let mut t = 0.0;
    eval(&y, &mut k1, &mut stats);

    // initial step (Hairer, Nørsett & Wanner, II.4)
    let mut h = {
        let d0 = rms_scaled(&y, &y, opts.rtol, opts.atol);
        let d1 = rms_scaled(&k1, &y, opts.rtol, opts.atol);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        combine(&mut stage, Some(&y), h0, &[(1.0, &k1)]);
        eval(&stage, &mut k2, &mut stats);
        let diff = &k2 - &k1;
        let d2 = rms_scaled(&diff, &y, opts.rtol, opts.atol) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1)
    };

    for &t_out in t_grid {
        while t < t_out {
            if stats.accepted_steps + stats.rejected_steps >= opts.max_steps {
                return Err(Error::Stiffness { t, step: h });
            }
            let remaining = t_out - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let step = if landing { remaining } else { h };
            if step < 1e-13 * t.max(1.0) {
                return Err(Error::Stiffness { t, step });
            }

            combine(&mut stage, Some(&y), step, &[(A21, &k1)]);
            eval(&stage, &mut k2, &mut stats);
            combine(&mut stage, Some(&y), step, &[(A31, &k1), (A32, &k2)]);
            eval(&stage, &mut k3, &mut stats);
            combine(&mut stage, Some(&y), step, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            eval(&stage, &mut k4, &mut stats);
            combine(&mut stage, Some(&y), step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            eval(&stage, &mut k5, &mut stats);
            combine(&mut stage, Some(&y), step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            eval(&stage, &mut k6, &mut stats);
            combine(&mut y_new, Some(&y), step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            eval(&y_new, &mut k7, &mut stats);
            combine(&mut err, None, step, &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)]);

            let e = error_norm(&err, &y, &y_new, opts.rtol, opts.atol);
            if !e.is_finite() {
                stats.rejected_steps += 1;
                h = step * 0.2;
                continue;
            }
            if e <= 1.0 {
                std::mem::swap(&mut y, &mut y_new);
                t = if landing { t_out } else { t + step };
                stats.accepted_steps += 1;
                std::mem::swap(&mut k1, &mut k7);
                // the generator commutes with taking the Hermitian part and
                // with rescaling, so the stored derivative is repaired alike
                let (r, tr) = repair_with_trace(&mut y);
                k1 = linalg::hermitian_part(&k1).unscale(tr);
                stats.repair_total += r;
                if stats.repair_total > REPAIR_LIMIT {
                    return Err(Error::Drift { total: stats.repair_total, limit: REPAIR_LIMIT });
                }
                let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                // a short landing step says nothing about the next one
                h = if landing { h.max(step * fac) } else { step * fac };
            } else {
                stats.rejected_steps += 1;
                h = step * (0.9 * e.powf(-0.2)).max(0.2);
            }
        }
        record(&y, t_out, &mut result)?;
    }
    result.stats = stats;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::steady_density_matrix;
    use crate::fock::{number, Expectation, StateVector};

    #[test]
    fn one_photon_decay_is_exponential() {
        let p = SystemParams::new(0.0, 0.0, 0.0, 0.3, 0.0);
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let r = evolve(&p, &DensityMatrix::fock(1, 6).unwrap(), &grid, 1e-8, 1e-10).unwrap();
        for (t, obs) in r.times.iter().zip(&r.observables) {
            assert!((obs.photon_number - (-0.3 * t).exp()).abs() < 1e-6);
        }
        for s in &r.snapshots {
            assert!(s.hermiticity_defect() < 1e-9);
            assert!((s.trace() - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn two_photon_decay_is_exponential() {
        let p = SystemParams::new(0.0, 0.0, 0.0, 0.0, 1.0);
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3).collect();
        let r = evolve(&p, &DensityMatrix::fock(2, 6).unwrap(), &grid, 1e-8, 1e-10).unwrap();
        for (t, s) in r.times.iter().zip(&r.snapshots) {
            assert!((s.populations()[2] - (-2.0 * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn closed_system_conserves_photon_number_of_fock_state() {
        let p = SystemParams::new(0.4, 1.0, 0.0, 0.0, 0.0);
        let rho = StateVector::fock(3, 8).unwrap().to_density();
        let r = evolve(&p, &rho, &[0.0, 1.0, 5.0], 1e-8, 1e-10).unwrap();
        let n_op = number(8).unwrap();
        for s in &r.snapshots {
            assert!((s.expectation(&n_op).unwrap().re - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn relaxes_to_closed_form_steady_state() {
        let p = SystemParams::new(0.0, 1.0, 10.0, 0.1, 1.0);
        let n = 50;
        let target = steady_density_matrix(&p, n, 1e-16).unwrap().density;
        let opts = EvolveOptions { keep_snapshots: false, fidelity_target: Some(target), ..EvolveOptions::default() };
        let r = evolve_with(&p, &DensityMatrix::fock(0, n).unwrap(), &[0.0, 40.0], &opts).unwrap();
        let f = r.observables[1].fidelity.unwrap();
        assert!(f >= 1.0 - 1e-6, "fidelity {f}");
        assert!(r.stats.repair_total < 1e-9);
    }

    #[test]
    fn rejects_bad_grids() {
        let p = SystemParams::new(0.0, 0.0, 0.0, 1.0, 0.0);
        let rho = DensityMatrix::fock(0, 4).unwrap();
        assert!(evolve(&p, &rho, &[], 1e-8, 1e-10).is_err());
        assert!(evolve(&p, &rho, &[1.0, 0.5], 1e-8, 1e-10).is_err());
        assert!(evolve(&p, &rho, &[-1.0], 1e-8, 1e-10).is_err());
    }
}
