//! Dense Liouvillian blocks: null-space steady state and exponential
//! propagation over long times.
//!
//! Every jump operator and the Hamiltonian change the photon number by a
//! fixed amount of the same parity as the operator itself, so the generator
//! never mixes entries `(n, m)` with different `(n - m) mod 2`. Each sector is
//! assembled and exponentiated separately, halving the dimension.

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, Parity, SystemParams};
use crate::linalg::{self, CMat, CVec, C64};

use super::evolve::{
    check_grid, evolve_with, repair, EvolutionResult, EvolveOptions, IntegratorStats, Observables, REPAIR_LIMIT,
};
use super::{fidelity, Lindbladian};

/// Indexing of the density-matrix entries `(n, m)` with `(n - m) mod 2` fixed.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    cutoff: usize,
    sector: Parity,
    pairs: Vec<(usize, usize)>,
}

impl SectorBasis {
    /// `sector` is the parity of `n - m`; the steady state lives in `Even`.
    pub fn new(cutoff: usize, sector: Parity) -> Self {
        let mut pairs = Vec::with_capacity(cutoff * cutoff / 2 + 1);
        for m in 0..cutoff {
            for n in 0..cutoff {
                if Parity::of(n + m) == sector {
                    pairs.push((n, m));
                }
            }
        }
        SectorBasis { cutoff, sector, pairs }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn sector(&self) -> Parity {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn gather(&self, rho: &CMat) -> CVec {
        CVec::from_iterator(self.dim(), self.pairs.iter().map(|&(n, m)| rho[(n, m)]))
    }

    /// Writes the sector entries of `rho` from `v`, leaving the rest alone.
    pub fn scatter(&self, v: &CVec, rho: &mut CMat) {
        for (&(n, m), x) in self.pairs.iter().zip(v.iter()) {
            rho[(n, m)] = *x;
        }
    }
}

/// Dense matrix of the generator restricted to one sector.
pub fn sector_superoperator(gen: &Lindbladian, basis: &SectorBasis) -> Result<CMat> {
    let n = gen.cutoff();
    if basis.cutoff() != n {
        return Err(Error::invalid(format!("cutoff mismatch: generator {n} vs basis {}", basis.cutoff())));
    }
    let dim = basis.dim();
    let mut out = CMat::zeros(dim, dim);
    let mut unit = CMat::zeros(n, n);
    let mut image = CMat::zeros(n, n);
    let mut scratch = CMat::zeros(n, n);
    for (col, &(p, q)) in basis.pairs().iter().enumerate() {
        unit[(p, q)] = C64::new(1.0, 0.0);
        gen.apply_into(&unit, &mut image, &mut scratch);
        unit[(p, q)] = C64::new(0.0, 0.0);
        for (row, &(i, j)) in basis.pairs().iter().enumerate() {
            out[(row, col)] = image[(i, j)];
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct NullSpaceSteadyState {
    pub density: DensityMatrix,
    /// Largest entry of the generator applied to the result.
    pub residual: f64,
    pub iterations: usize,
}

/// Steady state as the null vector of the assembled Liouvillian, by shifted
/// inverse iteration on the `(n - m)`-even sector.
pub fn steady_state_nullspace(params: &SystemParams, cutoff: usize) -> Result<NullSpaceSteadyState> {
    params.validate_dissipative()?;
    let gen = Lindbladian::new(params, cutoff)?;
    let basis = SectorBasis::new(cutoff, Parity::Even);
    let mut m = sector_superoperator(&gen, &basis)?;
    let scale = (0..basis.dim()).map(|i| m[(i, i)].norm()).fold(1.0, f64::max);
    // all eigenvalues have Re <= 0, so a small positive shift keeps the
    // factorization regular while making the null vector dominate
    let shift = 1e-10 * scale;
    for i in 0..basis.dim() {
        m[(i, i)] -= shift;
    }
    let lu = m.lu();
    let trace_of =
        |v: &CVec| -> C64 { basis.pairs().iter().zip(v.iter()).filter(|((n, m), _)| n == m).map(|(_, x)| *x).sum() };
    let mut v = basis.gather(&CMat::identity(cutoff, cutoff));
    let mut iterations = 0;
    loop {
        let mut next = lu.solve(&v).ok_or_else(|| Error::Numerical("singular shifted Liouvillian".into()))?;
        let tr = trace_of(&next);
        if tr.norm() == 0.0 || !tr.re.is_finite() {
            return Err(Error::Numerical("null vector has zero trace".into()));
        }
        next.unscale_mut(tr.norm());
        next *= tr.conj() / tr.norm();
        let change = (&next - &v).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        v = next;
        iterations += 1;
        if change < 1e-14 || iterations >= 20 {
            break;
        }
    }
    let mut rho = CMat::zeros(cutoff, cutoff);
    basis.scatter(&v, &mut rho);
    let density = DensityMatrix::wrap(rho).normalized()?;
    let residual = linalg::max_abs(&gen.apply_matrix(density.matrix())?);
    Ok(NullSpaceSteadyState { density, residual, iterations })
}

/// Exact propagators `exp(𝓛 h 2^j)` per sector, built by repeated squaring
/// on demand. Advancing by `k` steps of `h` applies one level per set bit
/// of `k`.
#[derive(Clone, Debug)]
pub struct PropagatorLadder {
    params: SystemParams,
    gen: Lindbladian,
    step: f64,
    bases: [SectorBasis; 2],
    levels: [Vec<CMat>; 2],
}

impl PropagatorLadder {
    pub fn new(params: &SystemParams, cutoff: usize, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid(format!("propagator step must be positive, got {step}")));
        }
        Ok(PropagatorLadder {
            params: *params,
            gen: Lindbladian::new(params, cutoff)?,
            step,
            bases: [SectorBasis::new(cutoff, Parity::Even), SectorBasis::new(cutoff, Parity::Odd)],
            levels: [Vec::new(), Vec::new()],
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn cutoff(&self) -> usize {
        self.gen.cutoff()
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    fn level(&mut self, sector: usize, j: usize) -> Result<&CMat> {
        let levels = &mut self.levels[sector];
        if levels.is_empty() {
            let m = sector_superoperator(&self.gen, &self.bases[sector])?;
            levels.push(linalg::expm(&(m * C64::new(self.step, 0.0)))?);
        }
        while levels.len() <= j {
            let last = levels.last().unwrap();
            let sq = linalg::matmul(last, last);
            levels.push(sq);
        }
        Ok(&levels[j])
    }

    /// `exp(𝓛 h k) rho`, without any repair.
    pub fn advance(&mut self, rho: &CMat, steps: u64) -> Result<CMat> {
        let n = self.cutoff();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::invalid(format!("cutoff mismatch: ladder {n} vs matrix {}", rho.nrows())));
        }
        let mut out = CMat::zeros(n, n);
        for sector in 0..2 {
            let mut v = self.bases[sector].gather(rho);
            if v.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let mut bits = steps;
            let mut j = 0;
            while bits != 0 {
                if bits & 1 == 1 {
                    v = linalg::matvec(self.level(sector, j)?, &v);
                }
                bits >>= 1;
                j += 1;
            }
            self.bases[sector].scatter(&v, &mut out);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct ExponentialOptions {
    /// The propagator step is `t_max / 2^depth`. Each squaring level costs
    /// one dense product, and rounding error grows like `2^depth ε`.
    pub depth: u32,
    /// Levels of the fine ladder; 0 leaves the whole remainder to Runge–Kutta.
    pub fine_depth: u32,
    /// Tolerances for the Runge–Kutta remainder below one propagator step.
    pub rtol: f64,
    pub atol: f64,
    pub keep_snapshots: bool,
    pub fidelity_target: Option<DensityMatrix>,
}

impl Default for ExponentialOptions {
    fn default() -> Self {
        ExponentialOptions {
            depth: 20,
            fine_depth: 20,
            rtol: 1e-10,
            atol: 1e-12,
            keep_snapshots: true,
            fidelity_target: None,
        }
    }
}

/// Evolution by exact sector propagators. The state is carried on the lattice
/// `k h` by the ladder; each output time is reached from the lattice point
/// below it by a finer ladder and a last short Runge–Kutta leg. Cost grows only logarithmically
/// with the time span, which makes this the tool for metastable dynamics
/// spanning many decades. `accepted_steps` counts propagator applications
/// plus Runge–Kutta steps.
pub fn evolve_exponential(
    params: &SystemParams,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &ExponentialOptions,
) -> Result<EvolutionResult> {
    let mut prop = exponential_propagator(params, rho0.cutoff(), t_grid, opts)?;
    evolve_exponential_on(prop.as_mut(), params, rho0, t_grid, opts)
}

/// Two ladders: a coarse one with step `t_max / 2^depth` that carries the
/// state, and a fine one with step `coarse / 2^fine_depth` that covers the
/// offset of each output time from the coarse lattice.
#[derive(Clone, Debug)]
pub struct ExponentialPropagator {
    coarse: PropagatorLadder,
    fine: Option<PropagatorLadder>,
}

impl ExponentialPropagator {
    pub fn params(&self) -> &SystemParams {
        self.coarse.params()
    }

    pub fn cutoff(&self) -> usize {
        self.coarse.cutoff()
    }

    pub fn coarse_step(&self) -> f64 {
        self.coarse.step()
    }
}

/// The propagator [`evolve_exponential`] uses for this grid, or `None` when
/// the grid ends at `t = 0`.
pub fn exponential_propagator(
    params: &SystemParams,
    cutoff: usize,
    t_grid: &[f64],
    opts: &ExponentialOptions,
) -> Result<Option<ExponentialPropagator>> {
    check_grid(t_grid)?;
    if opts.depth == 0 || opts.depth > 60 || opts.fine_depth > 60 {
        return Err(Error::invalid(format!(
            "depth must be in 1..=60 and fine_depth in 0..=60, got {} and {}",
            opts.depth, opts.fine_depth
        )));
    }
    let t_max = *t_grid.last().unwrap();
    if !(t_max > 0.0) {
        return Ok(None);
    }
    let h = t_max / 2f64.powi(opts.depth as i32);
    let fine = if opts.fine_depth > 0 {
        Some(PropagatorLadder::new(params, cutoff, h / 2f64.powi(opts.fine_depth as i32))?)
    } else {
        None
    };
    Ok(Some(ExponentialPropagator { coarse: PropagatorLadder::new(params, cutoff, h)?, fine }))
}

/// [`evolve_exponential`] on a propagator from [`exponential_propagator`],
/// so that several initial states share its levels.
pub fn evolve_exponential_on(
    mut prop: Option<&mut ExponentialPropagator>,
    params: &SystemParams,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &ExponentialOptions,
) -> Result<EvolutionResult> {
    check_grid(t_grid)?;
    rho0.validate(1e-8)?;
    if let Some(p) = prop.as_deref() {
        if p.params() != params || p.cutoff() != rho0.cutoff() {
            return Err(Error::invalid("propagator was built for other parameters or cutoff"));
        }
    }
    let target = opts.fidelity_target.as_ref();
    let mut result = EvolutionResult {
        times: Vec::with_capacity(t_grid.len()),
        snapshots: Vec::new(),
        observables: Vec::with_capacity(t_grid.len()),
        stats: IntegratorStats::default(),
    };
    let rk_opts = EvolveOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        keep_snapshots: true,
        fidelity_target: None,
        ..EvolveOptions::default()
    };
    let mut lattice = rho0.matrix().clone();
    let mut position: u64 = 0;
    for &t in t_grid {
        let mut rho = lattice.clone();
        if let Some(prop) = prop.as_mut() {
            let h = prop.coarse.step();
            let k = ((t / h).floor() as u64).max(position);
            if k > position {
                lattice = prop.coarse.advance(&lattice, k - position)?;
                result.stats.accepted_steps += (k - position).count_ones() as usize;
                result.stats.repair_total += repair(&mut lattice);
                position = k;
            }
            rho = lattice.clone();
            let mut rest = t - k as f64 * h;
            if let Some(fine) = prop.fine.as_mut() {
                let m = (rest / fine.step()).floor().max(0.0) as u64;
                if m > 0 {
                    rho = fine.advance(&rho, m)?;
                    result.stats.accepted_steps += m.count_ones() as usize;
                    result.stats.repair_total += repair(&mut rho);
                    rest -= m as f64 * fine.step();
                }
            }
            if rest > 1e-14 * t.max(1.0) {
                let part = evolve_with(params, &DensityMatrix::wrap(rho), &[rest], &rk_opts)?;
                result.stats.accepted_steps += part.stats.accepted_steps;
                result.stats.rejected_steps += part.stats.rejected_steps;
                result.stats.rhs_evaluations += part.stats.rhs_evaluations;
                result.stats.repair_total += part.stats.repair_total;
                rho = part.snapshots.into_iter().next().unwrap().into_matrix();
            }
            if result.stats.repair_total > REPAIR_LIMIT {
                return Err(Error::Drift { total: result.stats.repair_total, limit: REPAIR_LIMIT });
            }
        }
        result.times.push(t);
        result.observables.push(Observables::of(&rho, target)?);
        if opts.keep_snapshots {
            result.snapshots.push(DensityMatrix::wrap(rho));
        }
    }
    Ok(result)
}

#[derive(Clone, Copy, Debug)]
pub struct FirstPassageOptions {
    /// Time resolution `h`.
    pub step: f64,
    /// Steps of `h` scanned one by one before switching to doubling; rounded
    /// up to a power of two.
    pub scan_steps: u64,
    pub max_time: f64,
}

impl Default for FirstPassageOptions {
    fn default() -> Self {
        FirstPassageOptions { step: 1e-2, scan_steps: 1024, max_time: 1e9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstPassage {
    pub time: f64,
    pub fidelity: f64,
    /// Number of fidelity evaluations used.
    pub evaluations: usize,
}

/// First time on the grid `k h` at which `fidelity(target, ρ(t)) >= threshold`.
///
/// Times up to `scan_steps · h` are checked one by one. Beyond that the time
/// is doubled until the threshold is crossed, and the crossing is then
/// located by bisection inside the last doubling interval, which assumes the
/// fidelity does not dip back below the threshold within it. Returns `None`
/// if the threshold is not reached by `max_time`.
pub fn first_passage(
    params: &SystemParams,
    rho0: &DensityMatrix,
    target: &DensityMatrix,
    threshold: f64,
    opts: &FirstPassageOptions,
) -> Result<Option<FirstPassage>> {
    let mut ladder = PropagatorLadder::new(params, rho0.cutoff(), opts.step)?;
    first_passage_on(&mut ladder, rho0, target, threshold, opts)
}

/// [`first_passage`] on an existing ladder, whose levels are reused across
/// calls. `opts.step` must equal the ladder step.
pub fn first_passage_on(
    ladder: &mut PropagatorLadder,
    rho0: &DensityMatrix,
    target: &DensityMatrix,
    threshold: f64,
    opts: &FirstPassageOptions,
) -> Result<Option<FirstPassage>> {
    if opts.step != ladder.step() {
        return Err(Error::invalid(format!("step {} differs from the ladder step {}", opts.step, ladder.step())));
    }
    if rho0.cutoff() != ladder.cutoff() {
        return Err(Error::invalid("initial state has a different cutoff than the ladder"));
    }
    rho0.validate(1e-8)?;
    if target.cutoff() != rho0.cutoff() {
        return Err(Error::invalid("target has a different cutoff"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("threshold must be in (0, 1], got {threshold}")));
    }
    let mut evaluations = 0;
    let mut fid = |rho: &CMat| -> Result<f64> {
        evaluations += 1;
        let mut r = rho.clone();
        repair(&mut r);
        fidelity(target, &DensityMatrix::wrap(r))
    };

    let mut rho = rho0.matrix().clone();
    let f0 = fid(&rho)?;
    if f0 >= threshold {
        return Ok(Some(FirstPassage { time: 0.0, fidelity: f0, evaluations: 1 }));
    }
    let scan = opts.scan_steps.max(1).next_power_of_two();
    for k in 1..=scan {
        rho = ladder.advance(&rho, 1)?;
        let f = fid(&rho)?;
        if f >= threshold {
            return Ok(Some(FirstPassage { time: k as f64 * opts.step, fidelity: f, evaluations }));
        }
    }

    let mut lo = scan;
    let mut rho_lo = rho;
    loop {
        if lo as f64 * opts.step > opts.max_time || lo > u64::MAX / 4 {
            return Ok(None);
        }
        let rho_hi = ladder.advance(&rho_lo, lo)?;
        let f_hi = fid(&rho_hi)?;
        if f_hi < threshold {
            lo *= 2;
            rho_lo = rho_hi;
            continue;
        }
        // crossing in (lo, 2 lo]
        let mut span = lo / 2;
        let mut best = (2 * lo, f_hi);
        while span >= 1 {
            let cand = ladder.advance(&rho_lo, span)?;
            let f = fid(&cand)?;
            if f < threshold {
                rho_lo = cand;
                lo += span;
            } else {
                best = (lo + span, f);
            }
            span /= 2;
        }
        let (k, f) = best;
        return Ok(Some(FirstPassage { time: k as f64 * opts.step, fidelity: f, evaluations }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::steady_density_matrix;
    use crate::fock::coherent_state;
    use crate::master::evolve;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sector_blocks_match_kronecker_generator() {
        let p = SystemParams::new(0.1, 1.0, c(1.5, 0.3), 0.2, 0.8).with_feedback(0.5, Parity::Odd);
        let n = 7;
        let gen = Lindbladian::new(&p, n).unwrap();
        let full = crate::master::tests::kronecker_generator(&p, n);
        let mut covered = 0;
        for sector in [Parity::Even, Parity::Odd] {
            let basis = SectorBasis::new(n, sector);
            let m = sector_superoperator(&gen, &basis).unwrap();
            for (r, &(i, j)) in basis.pairs().iter().enumerate() {
                for (k, &(p_, q)) in basis.pairs().iter().enumerate() {
                    assert!((m[(r, k)] - full[(i + n * j, p_ + n * q)]).norm() < 1e-13);
                }
            }
            covered += basis.dim();
        }
        assert_eq!(covered, n * n);
        // no coupling between sectors in the full matrix
        for a in 0..n * n {
            for b in 0..n * n {
                let (i, j, p_, q) = (a % n, a / n, b % n, b / n);
                if (i + j) % 2 != (p_ + q) % 2 {
                    assert_eq!(full[(a, b)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn null_vector_matches_closed_form() {
        let p = SystemParams::new(0.1, 2.0, c(3.0, 1.0), 0.5, 1.0);
        let n = 30;
        let ns = steady_state_nullspace(&p, n).unwrap();
        let exact = steady_density_matrix(&p, n, 1e-16).unwrap().density;
        let f = fidelity(&ns.density, &exact).unwrap();
        assert!(f > 1.0 - 1e-10, "{f}");
        assert!(ns.residual < 1e-10);
    }

    #[test]
    fn ladder_agrees_with_runge_kutta() {
        let p = SystemParams::new(0.0, 1.0, 4.0, 0.5, 1.0);
        let n = 20;
        let rho0 = coherent_state(c(1.0, 0.5), n).unwrap().to_density();
        let grid = [0.0, 0.3, 1.7, 4.0];
        let rk = evolve(&p, &rho0, &grid, 1e-10, 1e-12).unwrap();
        let ex = evolve_exponential(&p, &rho0, &grid, &ExponentialOptions::default()).unwrap();
        for (a, b) in rk.snapshots.iter().zip(&ex.snapshots) {
            assert!(linalg::max_abs(&(a.matrix() - b.matrix())) < 1e-8);
        }
    }

    #[test]
    fn shared_ladder_reproduces_fresh_runs() {
        let p = SystemParams::new(0.0, 1.0, 2.0, 0.5, 1.0);
        let n = 20;
        let grid = [0.5, 2.0, 9.0];
        let opts = ExponentialOptions::default();
        let mut ladder = exponential_propagator(&p, n, &grid, &opts).unwrap();
        let target = steady_density_matrix(&p, n, 1e-16).unwrap().density;
        let fp_opts = FirstPassageOptions { step: 0.05, scan_steps: 8, max_time: 1e4 };
        let mut fp_ladder = PropagatorLadder::new(&p, n, fp_opts.step).unwrap();
        for alpha in [c(0.0, 0.0), c(1.0, 0.5), c(-0.5, 1.5)] {
            let rho0 = coherent_state(alpha, n).unwrap().to_density();
            let fresh = evolve_exponential(&p, &rho0, &grid, &opts).unwrap();
            let shared = evolve_exponential_on(ladder.as_mut(), &p, &rho0, &grid, &opts).unwrap();
            for (a, b) in fresh.snapshots.iter().zip(&shared.snapshots) {
                assert_eq!(a.matrix(), b.matrix());
            }
            let a = first_passage(&p, &rho0, &target, 0.99, &fp_opts).unwrap();
            let b = first_passage_on(&mut fp_ladder, &rho0, &target, 0.99, &fp_opts).unwrap();
            assert_eq!(a, b);
        }
        let other = SystemParams::new(0.0, 1.0, 2.5, 0.5, 1.0);
        let rho0 = DensityMatrix::fock(0, n).unwrap();
        assert!(evolve_exponential_on(ladder.as_mut(), &other, &rho0, &grid, &opts).is_err());
        let wrong_step = FirstPassageOptions { step: 0.1, ..fp_opts };
        assert!(first_passage_on(&mut fp_ladder, &rho0, &target, 0.99, &wrong_step).is_err());
    }

    #[test]
    fn first_passage_from_steady_state_is_immediate() {
        let p = SystemParams::new(0.0, 1.0, 2.0, 0.5, 1.0);
        let ss = steady_density_matrix(&p, 20, 1e-16).unwrap().density;
        let fp = first_passage(&p, &ss, &ss, 0.999, &FirstPassageOptions::default()).unwrap().unwrap();
        assert_eq!(fp.time, 0.0);
    }

    #[test]
    fn first_passage_is_consistent_with_fine_evolution() {
        let p = SystemParams::new(0.0, 1.0, 2.0, 0.5, 1.0);
        let n = 20;
        let ss = steady_density_matrix(&p, n, 1e-16).unwrap().density;
        let rho0 = DensityMatrix::fock(0, n).unwrap();
        let opts = FirstPassageOptions { step: 0.01, scan_steps: 4, max_time: 1e4 };
        let fp = first_passage(&p, &rho0, &ss, 0.999, &opts).unwrap().unwrap();
        let before = fp.time - opts.step;
        let grid = [before, fp.time];
        let rk = evolve(&p, &rho0, &grid, 1e-10, 1e-12).unwrap();
        let f_before = fidelity(&ss, &rk.snapshots[0]).unwrap();
        let f_at = fidelity(&ss, &rk.snapshots[1]).unwrap();
        assert!(f_before < 0.999 && f_at >= 0.999, "{before}: {f_before}, {}: {f_at}", fp.time);
    }
}
