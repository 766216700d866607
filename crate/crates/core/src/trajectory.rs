//! Photon-counting quantum trajectories (Monte Carlo wave functions).
//!
//! Fixed time step: in each step one uniform draw decides whether a jump
//! happens (probability `p = δt Σ_c r_c ‖L_c ψ‖²`) and a second picks the
//! channel in proportion to its weight. Without a jump the state is advanced
//! by the precomputed `exp(-i H_eff δt)` and renormalized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{hamiltonian, OperatorMatrix, StateVector, SystemParams};
use crate::linalg::{self, CMat, CVec, C64};
use crate::master::{jump_channels, ChannelLabel};

pub const MAX_JUMP_PROBABILITY: f64 = 0.1;
pub const DEFAULT_DT: f64 = 1e-3;

/// `H_eff = H - (i/2) Σ_c r_c L_c† L_c`.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub matrix: OperatorMatrix,
    pub one_photon_rate: f64,
    pub two_photon_rate: f64,
    pub feedback_rate: f64,
}

pub fn effective_hamiltonian(params: &SystemParams, cutoff: usize) -> Result<EffectiveHamiltonian> {
    let mut m = hamiltonian(params, cutoff)?.into_matrix();
    for ch in jump_channels(params, cutoff)? {
        let l = ch.operator.matrix();
        m -= (l.adjoint() * l) * C64::new(0.0, 0.5 * ch.rate);
    }
    Ok(EffectiveHamiltonian {
        matrix: OperatorMatrix::wrap(m),
        one_photon_rate: params.one_photon_rate,
        two_photon_rate: params.two_photon_rate,
        feedback_rate: params.feedback_rate,
    })
}

/// Nonzero entries of a jump operator.
#[derive(Clone, Debug)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &CMat) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        SparseOp { entries }
    }

    fn apply(&self, v: &CVec) -> CVec {
        let mut out = CVec::zeros(v.len());
        for &(i, j, x) in &self.entries {
            out[i] += x * v[j];
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Channel {
    label: ChannelLabel,
    rate: f64,
    op: SparseOp,
}

/// Everything a trajectory needs that depends only on `(params, cutoff, δt)`.
#[derive(Clone, Debug)]
pub struct TrajectoryPropagator {
    cutoff: usize,
    dt: f64,
    propagator: CMat,
    channels: Vec<Channel>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: StateVector,
    pub jump: Option<ChannelLabel>,
    /// Total jump probability of the step.
    pub probability: f64,
}

impl TrajectoryPropagator {
    pub fn new(params: &SystemParams, cutoff: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let heff = effective_hamiltonian(params, cutoff)?;
        let propagator = linalg::expm(&(heff.matrix.matrix() * C64::new(0.0, -dt)))?;
        let channels = jump_channels(params, cutoff)?
            .into_iter()
            .filter(|c| c.rate > 0.0)
            .map(|c| Channel { label: c.label, rate: c.rate, op: SparseOp::from_dense(c.operator.matrix()) })
            .collect();
        Ok(TrajectoryPropagator { cutoff, dt, propagator, channels })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// One step from a normalized state. `draws[0]` decides jump versus no
    /// jump, `draws[1]` selects the channel; both must lie in `[0, 1)`.
    pub fn step(&self, state: &StateVector, draws: [f64; 2]) -> Result<StepOutcome> {
        if state.cutoff() != self.cutoff {
            return Err(Error::invalid(format!(
                "cutoff mismatch: propagator {} vs state {}",
                self.cutoff,
                state.cutoff()
            )));
        }
        let psi = state.amplitudes();
        let mut images = Vec::with_capacity(self.channels.len());
        let mut weights = Vec::with_capacity(self.channels.len());
        for ch in &self.channels {
            let img = ch.op.apply(psi);
            weights.push(self.dt * ch.rate * img.norm_squared());
            images.push(img);
        }
        let p_tot: f64 = weights.iter().sum();
        if p_tot > MAX_JUMP_PROBABILITY {
            return Err(Error::StepTooLarge {
                probability: p_tot,
                suggested_dt: self.dt * MAX_JUMP_PROBABILITY / p_tot,
            });
        }
        if draws[0] < p_tot {
            let pick = draws[1] * p_tot;
            let mut acc = 0.0;
            let mut chosen = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if pick < acc && *w > 0.0 {
                    chosen = k;
                    break;
                }
            }
            let img = &images[chosen];
            let norm = img.norm();
            return Ok(StepOutcome {
                state: StateVector::from_vector(img.unscale(norm)),
                jump: Some(self.channels[chosen].label),
                probability: p_tot,
            });
        }
        let next = linalg::matvec(&self.propagator, psi);
        let norm = next.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical("state vanished under H_eff propagation".into()));
        }
        Ok(StepOutcome { state: StateVector::from_vector(next.unscale(norm)), jump: None, probability: p_tot })
    }

    /// `exp(-i H_eff δt) ψ` without renormalization.
    pub fn propagate_unnormalized(&self, state: &StateVector) -> CVec {
        linalg::matvec(&self.propagator, state.amplitudes())
    }
}

/// Single step with a freshly built propagator; see [`TrajectoryPropagator::step`].
pub fn step(state: &StateVector, params: &SystemParams, dt: f64, draws: [f64; 2]) -> Result<StepOutcome> {
    TrajectoryPropagator::new(params, state.cutoff(), dt)?.step(state, draws)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: ChannelLabel,
    pub parity_before: f64,
    pub parity_after: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub times: Vec<f64>,
    pub photon_number: Vec<f64>,
    pub parity: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    pub snapshots: Vec<(f64, StateVector)>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    pub horizon: f64,
    pub dt: f64,
    /// Record observables every this many steps (and at `t = 0`).
    pub record_stride: usize,
    /// Store the state at the recorded time nearest to each of these.
    pub snapshot_times: Vec<f64>,
}

impl TrajectoryOptions {
    pub fn new(horizon: f64, dt: f64) -> Self {
        TrajectoryOptions { horizon, dt, record_stride: 1, snapshot_times: Vec::new() }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be >= 1"));
        }
        Ok((self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize)
    }
}

fn observables(psi: &CVec) -> (f64, f64) {
    let mut n = 0.0;
    let mut p = 0.0;
    for (k, z) in psi.iter().enumerate() {
        let w = z.norm_sqr();
        n += k as f64 * w;
        p += if k % 2 == 0 { w } else { -w };
    }
    (n, p)
}

/// Records at `t = k δt` for every step `k`.
pub fn run_trajectory(
    params: &SystemParams,
    psi0: &StateVector,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let prop = TrajectoryPropagator::new(params, psi0.cutoff(), dt)?;
    run_with(&prop, psi0, &TrajectoryOptions::new(horizon, dt), seed)
}

/// Runs one trajectory on a prebuilt propagator.
pub fn run_with(
    prop: &TrajectoryPropagator,
    psi0: &StateVector,
    opts: &TrajectoryOptions,
    seed: u64,
) -> Result<TrajectoryRecord> {
    if (opts.dt - prop.dt()).abs() > 1e-15 * opts.dt {
        return Err(Error::invalid("options and propagator disagree on dt"));
    }
    let steps = opts.steps()?;
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("initial state norm {} is not 1", psi0.norm())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = psi0.clone();
    let capacity = steps / opts.record_stride + 1;
    let mut rec = TrajectoryRecord {
        seed,
        times: Vec::with_capacity(capacity),
        photon_number: Vec::with_capacity(capacity),
        parity: Vec::with_capacity(capacity),
        jumps: Vec::new(),
        snapshots: Vec::new(),
    };
    let mut pending: Vec<f64> = opts.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    let mut pending = pending.into_iter().peekable();
    let stride_dt = opts.dt * opts.record_stride as f64;

    let mut record = |k: usize, psi: &StateVector, rec: &mut TrajectoryRecord| {
        let t = k as f64 * opts.dt;
        let (n, p) = observables(psi.amplitudes());
        rec.times.push(t);
        rec.photon_number.push(n);
        rec.parity.push(p);
        while let Some(&ts) = pending.peek() {
            if ts <= t + 0.5 * stride_dt {
                rec.snapshots.push((t, psi.clone()));
                pending.next();
            } else {
                break;
            }
        }
    };
    record(0, &psi, &mut rec);
    for k in 1..=steps {
        let draws = [rng.gen::<f64>(), rng.gen::<f64>()];
        let before = observables(psi.amplitudes()).1;
        let out = prop.step(&psi, draws)?;
        psi = out.state;
        if let Some(channel) = out.jump {
            rec.jumps.push(JumpEvent {
                time: k as f64 * opts.dt,
                channel,
                parity_before: before,
                parity_after: observables(psi.amplitudes()).1,
            });
        }
        if k % opts.record_stride == 0 || k == steps {
            record(k, &psi, &mut rec);
        }
    }
    Ok(rec)
}

/// Per-trajectory seed from the master seed and index (SplitMix64 finalizer
/// over a Weyl sequence), independent of execution order.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Running sums for per-time means and standard errors; merging is
/// associative, so partial summaries can be combined in any grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSummary {
    pub count: usize,
    pub times: Vec<f64>,
    sum_n: Vec<f64>,
    sumsq_n: Vec<f64>,
    sum_p: Vec<f64>,
    sumsq_p: Vec<f64>,
}

impl PartialSummary {
    pub fn from_record(rec: &TrajectoryRecord) -> Self {
        PartialSummary {
            count: 1,
            times: rec.times.clone(),
            sum_n: rec.photon_number.clone(),
            sumsq_n: rec.photon_number.iter().map(|x| x * x).collect(),
            sum_p: rec.parity.clone(),
            sumsq_p: rec.parity.iter().map(|x| x * x).collect(),
        }
    }

    pub fn merge(mut self, other: &PartialSummary) -> Result<Self> {
        if self.times.len() != other.times.len() {
            return Err(Error::invalid("cannot merge summaries on different time grids"));
        }
        self.count += other.count;
        for (a, b) in [
            (&mut self.sum_n, &other.sum_n),
            (&mut self.sumsq_n, &other.sumsq_n),
            (&mut self.sum_p, &other.sum_p),
            (&mut self.sumsq_p, &other.sumsq_p),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(self)
    }

    pub fn finish(&self) -> EnsembleSummary {
        let c = self.count as f64;
        let stats = |sum: &[f64], sumsq: &[f64]| -> (Vec<f64>, Vec<f64>) {
            sum.iter()
                .zip(sumsq)
                .map(|(s, q)| {
                    let mean = s / c;
                    let se = if self.count > 1 { ((q - c * mean * mean).max(0.0) / (c - 1.0) / c).sqrt() } else { 0.0 };
                    (mean, se)
                })
                .unzip()
        };
        let (mean_n, se_n) = stats(&self.sum_n, &self.sumsq_n);
        let (mean_p, se_p) = stats(&self.sum_p, &self.sumsq_p);
        EnsembleSummary {
            count: self.count,
            times: self.times.clone(),
            mean_photon_number: mean_n,
            se_photon_number: se_n,
            mean_parity: mean_p,
            se_parity: se_p,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub count: usize,
    pub times: Vec<f64>,
    pub mean_photon_number: Vec<f64>,
    pub se_photon_number: Vec<f64>,
    pub mean_parity: Vec<f64>,
    pub se_parity: Vec<f64>,
}

/// Ensemble of `count` trajectories recorded at every step.
pub fn ensemble(
    params: &SystemParams,
    psi0: &StateVector,
    horizon: f64,
    dt: f64,
    count: usize,
    master_seed: u64,
) -> Result<EnsembleSummary> {
    ensemble_with(params, psi0, &TrajectoryOptions::new(horizon, dt), count, master_seed)
}

/// Trajectories run in parallel on the current rayon pool; the reduction is
/// in index order, so results do not depend on scheduling.
pub fn ensemble_with(
    params: &SystemParams,
    psi0: &StateVector,
    opts: &TrajectoryOptions,
    count: usize,
    master_seed: u64,
) -> Result<EnsembleSummary> {
    if count == 0 {
        return Err(Error::invalid("count must be >= 1"));
    }
    let prop = TrajectoryPropagator::new(params, psi0.cutoff(), opts.dt)?;
    let opts = TrajectoryOptions { snapshot_times: Vec::new(), ..opts.clone() };
    let partials: Vec<PartialSummary> = (0..count as u64)
        .into_par_iter()
        .map(|i| run_with(&prop, psi0, &opts, trajectory_seed(master_seed, i)).map(|r| PartialSummary::from_record(&r)))
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let first = iter.next().unwrap();
    let total = iter.try_fold(first, |acc, p| acc.merge(&p))?;
    Ok(total.finish())
}
