//! Truncated Fock-space states and operators.
//!
//! A cutoff `N` keeps the number states `|0>, ..., |N-1>`. Operators are dense
//! `N x N` matrices; cutoffs used here stay at a few hundred at most.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, ln_factorials, matmul, CMat, CVec, C64};

/// Photon-number parity sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn flipped(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn of(n: usize) -> Parity {
        if n.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Physical parameters of the driven-dissipative resonator (ħ = 1).
///
/// Energies (`detuning`, `kerr`, `pump`) and rates share units; the natural
/// unit is the two-photon loss rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    /// Pump-cavity detuning Δ.
    pub detuning: f64,
    /// Photon-photon interaction U.
    pub kerr: f64,
    /// Two-photon pump amplitude G.
    pub pump: C64,
    /// One-photon loss rate γ.
    pub one_photon_rate: f64,
    /// Two-photon loss rate η.
    pub two_photon_rate: f64,
    /// Rate γ_f of the parity-selective feedback channel.
    pub feedback_rate: f64,
    /// Parity sector the feedback channel drains.
    pub feedback_suppress: Parity,
}

impl SystemParams {
    pub fn new(detuning: f64, kerr: f64, pump: impl Into<C64>, gamma: f64, eta: f64) -> Self {
        SystemParams {
            detuning,
            kerr,
            pump: pump.into(),
            one_photon_rate: gamma,
            two_photon_rate: eta,
            feedback_rate: 0.0,
            feedback_suppress: Parity::Odd,
        }
    }

    pub fn with_feedback(mut self, rate: f64, suppress: Parity) -> Self {
        self.feedback_rate = rate;
        self.feedback_suppress = suppress;
        self
    }

    /// Checks finiteness and the sign of every rate.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("detuning", self.detuning),
            ("kerr", self.kerr),
            ("pump.re", self.pump.re),
            ("pump.im", self.pump.im),
            ("one_photon_rate", self.one_photon_rate),
            ("two_photon_rate", self.two_photon_rate),
            ("feedback_rate", self.feedback_rate),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("one_photon_rate", self.one_photon_rate),
            ("two_photon_rate", self.two_photon_rate),
            ("feedback_rate", self.feedback_rate),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate), additionally requiring some loss so
    /// that a unique steady state exists.
    pub fn validate_dissipative(&self) -> Result<()> {
        self.validate()?;
        if self.one_photon_rate <= 0.0 && self.two_photon_rate <= 0.0 {
            return Err(Error::invalid("steady state needs one_photon_rate > 0 or two_photon_rate > 0"));
        }
        Ok(())
    }

    /// Default cutoff `max(30, ceil(4|g| + 10))` with `g = G / (U - iη)`.
    pub fn auto_cutoff(&self) -> usize {
        let denom = C64::new(self.kerr, -self.two_photon_rate);
        if denom.norm() == 0.0 {
            return 30;
        }
        let g = (self.pump / denom).norm();
        30.max((4.0 * g + 10.0).ceil() as usize)
    }
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        return Err(Error::invalid(format!("cutoff must be >= 2, got {cutoff}")));
    }
    Ok(())
}

fn check_same(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("cutoff mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Pure state in the truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: CVec,
}

impl StateVector {
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        check_cutoff(amps.len())?;
        Ok(StateVector { amps: CVec::from_vec(amps) })
    }

    pub(crate) fn from_vector(amps: CVec) -> Self {
        StateVector { amps }
    }

    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        if n >= cutoff {
            return Err(Error::CutoffTooSmall {
                cutoff,
                required: n + 1,
                reason: format!("Fock state |{n}> is outside the basis"),
            });
        }
        let mut amps = CVec::zeros(cutoff);
        amps[n] = C64::new(1.0, 0.0);
        Ok(StateVector { amps })
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Self::fock(0, cutoff)
    }

    pub fn cutoff(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidState(format!("cannot normalize vector of norm {n}")));
        }
        Ok(StateVector { amps: self.amps.unscale(n) })
    }

    /// `<self|other>`
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_same(self.cutoff(), other.cutoff())?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// `op |self>` without renormalization.
    pub fn apply(&self, op: &OperatorMatrix) -> Result<StateVector> {
        check_same(self.cutoff(), op.cutoff())?;
        Ok(StateVector { amps: linalg::matvec(&op.mat, &self.amps) })
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { mat: &self.amps * self.amps.adjoint() }
    }

    /// Multiplies by the phase that makes the largest-magnitude amplitude real
    /// and positive.
    pub fn with_canonical_phase(&self) -> StateVector {
        let mut best = 0;
        let mut best_abs = -1.0;
        for (i, z) in self.amps.iter().enumerate() {
            if z.norm() > best_abs {
                best_abs = z.norm();
                best = i;
            }
        }
        if best_abs <= 0.0 {
            return self.clone();
        }
        let phase = self.amps[best].conj() / best_abs;
        StateVector { amps: self.amps.map(|z| z * phase) }
    }
}

/// Dense operator on the truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    mat: CMat,
}

impl OperatorMatrix {
    pub fn from_matrix(mat: CMat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::invalid("operator matrix must be square"));
        }
        check_cutoff(mat.nrows())?;
        Ok(OperatorMatrix { mat })
    }

    pub(crate) fn wrap(mat: CMat) -> Self {
        OperatorMatrix { mat }
    }

    pub fn identity(cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        Ok(OperatorMatrix { mat: CMat::identity(cutoff, cutoff) })
    }

    pub fn cutoff(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix { mat: self.mat.adjoint() }
    }

    pub fn compose(&self, rhs: &OperatorMatrix) -> Result<OperatorMatrix> {
        check_same(self.cutoff(), rhs.cutoff())?;
        Ok(OperatorMatrix { mat: matmul(&self.mat, &rhs.mat) })
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.mat)
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        self.mat.singular_values().iter().copied().fold(0.0, f64::max)
    }
}

/// Mixed state in the truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    /// Wraps a square matrix. No positivity or trace check is made here; see
    /// [`validate`](Self::validate).
    pub fn from_matrix(mat: CMat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::invalid("density matrix must be square"));
        }
        check_cutoff(mat.nrows())?;
        Ok(DensityMatrix { mat })
    }

    pub(crate) fn wrap(mat: CMat) -> Self {
        DensityMatrix { mat }
    }

    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        Ok(StateVector::fock(n, cutoff)?.to_density())
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        check_cutoff(populations.len())?;
        let n = populations.len();
        Ok(DensityMatrix {
            mat: DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(populations[i], 0.0) } else { C64::new(0.0, 0.0) }),
        })
    }

    pub fn cutoff(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.mat)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.mat)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.cutoff()).map(|n| self.mat[(n, n)].re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (vals, _) = linalg::hermitian_eigen(&self.mat);
        vals.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Hermitian part rescaled to unit trace.
    pub fn normalized(&self) -> Result<Self> {
        let h = linalg::hermitian_part(&self.mat);
        let tr = linalg::trace(&h).re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::InvalidState(format!("trace {tr} cannot be normalized")));
        }
        Ok(DensityMatrix { mat: h.unscale(tr) })
    }

    /// Hermitian within 1e-10, unit trace within 1e-10, eigenvalues above
    /// `-min_eig_tol`.
    pub fn validate(&self, min_eig_tol: f64) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -min_eig_tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }
}

/// Anything that can produce `<O>` for a Fock-space operator.
pub trait Expectation {
    fn expectation(&self, op: &OperatorMatrix) -> Result<C64>;
}

impl Expectation for StateVector {
    fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        check_same(self.cutoff(), op.cutoff())?;
        Ok(self.amps.dotc(&linalg::matvec(&op.mat, &self.amps)))
    }
}

impl Expectation for DensityMatrix {
    fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        check_same(self.cutoff(), op.cutoff())?;
        // Tr[ρ O] = Σ_ij ρ_ij O_ji
        let n = self.cutoff();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                acc += self.mat[(i, j)] * op.mat[(j, i)];
            }
        }
        Ok(acc)
    }
}

/// `<O>` in either a pure or a mixed state.
pub fn expectation<S: Expectation + ?Sized>(state: &S, op: &OperatorMatrix) -> Result<C64> {
    state.expectation(op)
}

/// Lowering operator: `(n-1, n)` entry is `√n`.
pub fn annihilation(cutoff: usize) -> Result<OperatorMatrix> {
    check_cutoff(cutoff)?;
    let mut mat = CMat::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        mat[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(OperatorMatrix { mat })
}

pub fn creation(cutoff: usize) -> Result<OperatorMatrix> {
    Ok(annihilation(cutoff)?.adjoint())
}

pub fn number(cutoff: usize) -> Result<OperatorMatrix> {
    diagonal_operator(cutoff, |n| n as f64)
}

/// `e^{iπ n}`: diagonal with entries `(-1)^n`.
pub fn parity(cutoff: usize) -> Result<OperatorMatrix> {
    diagonal_operator(cutoff, |n| Parity::of(n).sign())
}

pub(crate) fn diagonal_operator(cutoff: usize, f: impl Fn(usize) -> f64) -> Result<OperatorMatrix> {
    check_cutoff(cutoff)?;
    let mut mat = CMat::zeros(cutoff, cutoff);
    for n in 0..cutoff {
        mat[(n, n)] = C64::new(f(n), 0.0);
    }
    Ok(OperatorMatrix { mat })
}

/// Smallest cutoff keeping Poisson(`mean`) mass of at least `1 - tol`.
pub fn poisson_cutoff(mean: f64, tol: f64) -> usize {
    if mean == 0.0 {
        return 1;
    }
    let ln_mean = mean.ln();
    let mut ln_fact = 0.0;
    let mut mass = 0.0;
    let mut n = 0usize;
    loop {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        mass += (-mean + n as f64 * ln_mean - ln_fact).exp();
        n += 1;
        if mass >= 1.0 - tol || n > 1_000_000 {
            return n;
        }
    }
}

const TRUNCATION_TOL: f64 = 1e-10;

/// Un-normalized coherent amplitudes `e^{-|α|²/2} αⁿ/√n!`, computed in log
/// space.
fn coherent_amplitudes(alpha: C64, cutoff: usize) -> CVec {
    let lf = ln_factorials(cutoff);
    let r = alpha.norm();
    let theta = alpha.arg();
    CVec::from_fn(cutoff, |n, _| {
        if r == 0.0 {
            return if n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        }
        let ln_mag = -0.5 * r * r + n as f64 * r.ln() - 0.5 * lf[n];
        C64::from_polar(ln_mag.exp(), n as f64 * theta)
    })
}

fn check_coherent_truncation(alpha: C64, cutoff: usize, amps: &CVec) -> Result<()> {
    let kept = amps.norm_squared();
    if kept < 1.0 - TRUNCATION_TOL {
        return Err(Error::CutoffTooSmall {
            cutoff,
            required: poisson_cutoff(alpha.norm_sqr(), TRUNCATION_TOL),
            reason: format!("coherent amplitude {alpha} keeps only {kept:.12} of the norm"),
        });
    }
    Ok(())
}

/// Coherent state `|α>`, renormalized after truncation.
pub fn coherent_state(alpha: C64, cutoff: usize) -> Result<StateVector> {
    check_cutoff(cutoff)?;
    let amps = coherent_amplitudes(alpha, cutoff);
    check_coherent_truncation(alpha, cutoff, &amps)?;
    StateVector { amps }.normalized()
}

/// Cat state `(|α> ± |-α>) / √(2(1 ± e^{-2|α|²}))`.
pub fn cat_state(alpha: C64, parity: Parity, cutoff: usize) -> Result<StateVector> {
    check_cutoff(cutoff)?;
    if parity == Parity::Odd && alpha.norm() == 0.0 {
        return Err(Error::DegenerateCat);
    }
    let amps = coherent_amplitudes(alpha, cutoff);
    check_coherent_truncation(alpha, cutoff, &amps)?;
    Ok(cat_from_coherent(amps, parity))
}

/// Projects coherent amplitudes on a parity sector and normalizes. The odd
/// sector of the vacuum is replaced by its `α → 0` limit `|1>`.
pub(crate) fn cat_from_coherent(mut amps: CVec, parity: Parity) -> StateVector {
    for (n, z) in amps.iter_mut().enumerate() {
        if Parity::of(n) != parity {
            *z = C64::new(0.0, 0.0);
        }
    }
    let norm = amps.norm();
    if norm == 0.0 {
        let mut limit = CVec::zeros(amps.len());
        limit[if parity == Parity::Even { 0 } else { 1 }] = C64::new(1.0, 0.0);
        return StateVector { amps: limit };
    }
    StateVector { amps: amps.unscale(norm) }
}

/// Normalized cat amplitudes without truncation checks, with the odd cat at
/// `α = 0` taken as its limit `|1>`. Used by fitting routines that scan `α`.
pub(crate) fn cat_unchecked(alpha: C64, parity: Parity, cutoff: usize) -> StateVector {
    cat_from_coherent(coherent_amplitudes(alpha, cutoff), parity)
}

/// Rotating-frame Hamiltonian
/// `H = -Δ a†a + (U/2) a†a†aa + (G/2) a†a† + (G*/2) aa`.
pub fn hamiltonian(params: &SystemParams, cutoff: usize) -> Result<OperatorMatrix> {
    check_cutoff(cutoff)?;
    let mut mat = CMat::zeros(cutoff, cutoff);
    for n in 0..cutoff {
        let nf = n as f64;
        mat[(n, n)] = C64::new(-params.detuning * nf + 0.5 * params.kerr * nf * (nf - 1.0), 0.0);
        if n + 2 < cutoff {
            let amp = ((nf + 1.0) * (nf + 2.0)).sqrt();
            mat[(n + 2, n)] = params.pump * (0.5 * amp);
            mat[(n, n + 2)] = params.pump.conj() * (0.5 * amp);
        }
    }
    Ok(OperatorMatrix { mat })
}

/// Result of [`displacement`]: the truncated exponential and whether `|β|`
/// is large enough for truncation to spoil unitarity.
#[derive(Clone, Debug)]
pub struct Displacement {
    pub operator: OperatorMatrix,
    pub truncation_warning: bool,
}

/// `exp(β a† - β* a)` evaluated on the truncated generator.
pub fn displacement(beta: C64, cutoff: usize) -> Result<Displacement> {
    let a = annihilation(cutoff)?;
    let generator = a.mat.adjoint() * beta - &a.mat * beta.conj();
    let operator = OperatorMatrix { mat: linalg::expm(&generator)? };
    Ok(Displacement { operator, truncation_warning: beta.norm_sqr() > cutoff as f64 / 4.0 })
}

/// The `cutoff x cutoff` block of the untruncated displacement operator,
/// `<m|D(β)|n>`, from the associated-Laguerre form of its matrix elements.
///
/// Unlike [`displacement`], the entries are exact for any `β`: no truncated
/// generator is exponentiated. The recurrence runs on
/// `u_n = √(n!/(n+k)!) x^{k/2} e^{-x/2} L_n^{(k)}(x)`, `x = |β|²`, which stays
/// bounded by one.
pub fn displacement_elements(beta: C64, cutoff: usize) -> Result<OperatorMatrix> {
    check_cutoff(cutoff)?;
    let mut mat = CMat::zeros(cutoff, cutoff);
    let x = beta.norm_sqr();
    if x == 0.0 {
        return Ok(OperatorMatrix { mat: CMat::identity(cutoff, cutoff) });
    }
    let lf = ln_factorials(cutoff);
    let ln_x = x.ln();
    let phase = C64::from_polar(1.0, beta.arg());
    let mut u = vec![0.0; cutoff];
    let mut up = C64::new(1.0, 0.0); // e^{ikθ}
    for k in 0..cutoff {
        let len = cutoff - k;
        let kf = k as f64;
        u[0] = (0.5 * kf * ln_x - 0.5 * x - 0.5 * lf[k]).exp();
        if len > 1 {
            u[1] = (1.0 + kf - x) * u[0] / (1.0 + kf).sqrt();
        }
        for n in 1..len.saturating_sub(1) {
            let nf = n as f64;
            u[n + 1] = ((2.0 * nf + 1.0 + kf - x) * u[n] - (nf * (nf + kf)).sqrt() * u[n - 1])
                / ((nf + 1.0) * (nf + kf + 1.0)).sqrt();
        }
        // <n|D|n+k> = (-e^{-iθ})^k u_n
        let down = if k % 2 == 0 { up.conj() } else { -up.conj() };
        for n in 0..len {
            mat[(n + k, n)] = up * u[n];
            if k > 0 {
                mat[(n, n + k)] = down * u[n];
            }
        }
        up *= phase;
    }
    Ok(OperatorMatrix { mat })
}

/// `(2/π)` — the Wigner function of the vacuum at the origin.
pub const WIGNER_VACUUM_PEAK: f64 = 2.0 / PI;
