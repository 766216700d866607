//! Lindblad master equation: jump channels, the generator, time integration
//! and fidelity between density matrices.
//!
//! The generator is written as
//! `dρ/dt = Kρ + ρK† + Σ_c r_c L_c ρ L_c†` with `K = -iH - ½ Σ_c r_c L_c†L_c`,
//! which is the same as `i[ρ, H] + Σ_c (r_c/2)(2LρL† - L†Lρ - ρL†L)`.

mod banded;
mod evolve;
mod superop;

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::fock::{annihilation, diagonal_operator, hamiltonian, DensityMatrix, OperatorMatrix, Parity, SystemParams};
use crate::linalg::{self, CMat, C64};

use banded::Banded;

pub use evolve::{evolve, evolve_with, EvolutionResult, EvolveOptions, IntegratorStats, Observables};
pub use superop::{
    evolve_exponential, evolve_exponential_on, exponential_propagator, first_passage, first_passage_on,
    sector_superoperator, steady_state_nullspace, ExponentialOptions, ExponentialPropagator, FirstPassage,
    FirstPassageOptions, NullSpaceSteadyState, PropagatorLadder, SectorBasis,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelLabel {
    OnePhoton,
    TwoPhoton,
    Feedback,
}

impl ChannelLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelLabel::OnePhoton => "one-photon",
            ChannelLabel::TwoPhoton => "two-photon",
            ChannelLabel::Feedback => "feedback",
        }
    }
}

impl std::fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A dissipation channel `(rate/2)(2LρL† - L†Lρ - ρL†L)`.
#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub operator: OperatorMatrix,
    pub rate: f64,
    pub label: ChannelLabel,
}

/// `â_f = â (1 ∓ 𝒫)/2`: projects onto the parity sector to suppress, then
/// lowers. Suppressing odd leaves even states untouched.
pub fn feedback_channel(suppress: Parity, rate: f64, cutoff: usize) -> Result<JumpChannel> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::invalid(format!("feedback rate must be finite and >= 0, got {rate}")));
    }
    let projector = diagonal_operator(cutoff, |n| if Parity::of(n) == suppress { 1.0 } else { 0.0 })?;
    Ok(JumpChannel { operator: annihilation(cutoff)?.compose(&projector)?, rate, label: ChannelLabel::Feedback })
}

/// One-photon, two-photon and (when `feedback_rate > 0`) feedback channels.
pub fn jump_channels(params: &SystemParams, cutoff: usize) -> Result<Vec<JumpChannel>> {
    params.validate()?;
    let a = annihilation(cutoff)?;
    let mut out = vec![
        JumpChannel { operator: a.clone(), rate: params.one_photon_rate, label: ChannelLabel::OnePhoton },
        JumpChannel { operator: a.compose(&a)?, rate: params.two_photon_rate, label: ChannelLabel::TwoPhoton },
    ];
    if params.feedback_rate > 0.0 {
        out.push(feedback_channel(params.feedback_suppress, params.feedback_rate, cutoff)?);
    }
    Ok(out)
}

/// The Lindblad generator for fixed parameters and cutoff, in banded form.
#[derive(Clone, Debug)]
pub struct Lindbladian {
    cutoff: usize,
    drift: Banded,
    jumps: Vec<(f64, Banded)>,
}

impl Lindbladian {
    pub fn new(params: &SystemParams, cutoff: usize) -> Result<Self> {
        let channels = jump_channels(params, cutoff)?;
        Self::from_channels(&hamiltonian(params, cutoff)?, &channels)
    }

    pub fn from_channels(h: &OperatorMatrix, channels: &[JumpChannel]) -> Result<Self> {
        let cutoff = h.cutoff();
        let mut k = h.matrix() * C64::new(0.0, -1.0);
        let mut jumps = Vec::new();
        for ch in channels {
            if ch.operator.cutoff() != cutoff {
                return Err(Error::invalid(format!(
                    "channel {} has cutoff {} but the Hamiltonian has {cutoff}",
                    ch.label,
                    ch.operator.cutoff()
                )));
            }
            if ch.rate == 0.0 {
                continue;
            }
            let l = ch.operator.matrix();
            k -= (l.adjoint() * l) * C64::new(0.5 * ch.rate, 0.0);
            jumps.push((ch.rate, Banded::from_dense(l)));
        }
        Ok(Lindbladian { cutoff, drift: Banded::from_dense(&k), jumps })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `out = L(rho)`; `scratch` must be `cutoff x cutoff`.
    pub(crate) fn apply_into(&self, rho: &CMat, out: &mut CMat, scratch: &mut CMat) {
        out.fill(C64::new(0.0, 0.0));
        self.drift.left_mul_add(rho, out);
        self.drift.right_mul_adjoint_add(rho, out, 1.0);
        for (rate, l) in &self.jumps {
            if l.is_zero() {
                continue;
            }
            scratch.fill(C64::new(0.0, 0.0));
            l.left_mul_add(rho, scratch);
            l.right_mul_adjoint_add(scratch, out, *rate);
        }
    }

    /// `dρ/dt` for an arbitrary square matrix of matching size.
    pub fn apply_matrix(&self, rho: &CMat) -> Result<CMat> {
        if rho.nrows() != self.cutoff || rho.ncols() != self.cutoff {
            return Err(Error::invalid(format!(
                "cutoff mismatch: generator {} vs matrix {}x{}",
                self.cutoff,
                rho.nrows(),
                rho.ncols()
            )));
        }
        let mut out = CMat::zeros(self.cutoff, self.cutoff);
        let mut scratch = CMat::zeros(self.cutoff, self.cutoff);
        self.apply_into(rho, &mut out, &mut scratch);
        Ok(out)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<OperatorMatrix> {
        Ok(OperatorMatrix::wrap(self.apply_matrix(rho.matrix())?))
    }
}

/// `dρ/dt = i[ρ, H] + Σ_c (r_c/2)(2LρL† - L†Lρ - ρL†L)`.
pub fn liouvillian_apply(params: &SystemParams, rho: &DensityMatrix) -> Result<OperatorMatrix> {
    Lindbladian::new(params, rho.cutoff())?.apply(rho)
}

/// Eigenvalue floor below which an input to [`fidelity`] is rejected.
pub const FIDELITY_MIN_EIGENVALUE: f64 = -1e-8;

/// Uhlmann fidelity `Tr√(√ρ_A ρ_B √ρ_A)`, clipped to `[0, 1]`.
///
/// Evaluated as the sum of singular values of `√ρ_A √ρ_B`, which is the same
/// quantity but avoids a second square root of a nearly singular matrix.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.cutoff() != b.cutoff() {
        return Err(Error::invalid(format!("cutoff mismatch: {} vs {}", a.cutoff(), b.cutoff())));
    }
    let sa = psd_root(a)?;
    let sb = psd_root(b)?;
    let prod = linalg::matmul(&sa, &sb);
    let f: f64 = SVD::new(prod, false, false).singular_values.iter().sum();
    Ok(f.clamp(0.0, 1.0))
}

fn psd_root(rho: &DensityMatrix) -> Result<CMat> {
    let herm = rho.hermiticity_defect();
    if herm > 1e-8 {
        return Err(Error::InvalidState(format!("not Hermitian (defect {herm:.3e})")));
    }
    let (vals, vecs) = linalg::hermitian_eigen(rho.matrix());
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < FIDELITY_MIN_EIGENVALUE {
        return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
    }
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v.max(0.0).sqrt());
    }
    Ok(linalg::matmul(&scaled, &vecs.adjoint()))
}
