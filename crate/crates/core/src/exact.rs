//! Closed-form steady state of the two-photon driven Kerr resonator.
//!
//! Everything depends on the parameters only through
//! `c = (Δ + iγ/2) / (U - iη)` and `g = G / (U - iη)`, via the coefficients
//! `F(g, c, ℓ) = (i√g)^ℓ ₂F₁(-ℓ, -c; -2c; 2)`.
//!
//! The direct terminating sum for ₂F₁ loses all accuracy beyond ℓ ≈ 20 (terms
//! of size 3^ℓ cancel down to O(1)). For `z = 2` the Gauss contiguous relation
//! in the first parameter collapses to two terms,
//! `(ℓ - 2c) F_{ℓ+1} = ℓ F_{ℓ-1}`, so the even values are the stable product
//! `Π_{j=1..ℓ/2} (2j-1)/(2j-1-2c)` and odd values vanish. That product is what
//! [`hyp2f1_neg_int`] and [`FCoefficientTable`] use; [`hyp2f1_series`] keeps
//! the direct sum for cross-checks.
//!
//! Coefficients grow like `|g|^{ℓ/2}` before the `1/ℓ!` weights win, so all
//! series are accumulated as complex logarithms and exponentiated once a
//! common scale is known.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::fock::SystemParams;
use crate::linalg::{ln_factorials, CMat, C64};

pub const DEFAULT_SERIES_TOL: f64 = 1e-16;
/// Consecutive negligible terms required before a series is cut.
pub const STOP_RUN: usize = 5;
/// Largest population allowed in the last two Fock levels.
pub const TAIL_MASS_LIMIT: f64 = 1e-10;
const POLE_TOL: f64 = 1e-12;
const MAX_TERMS: usize = 1_000_000;

const NEG_INF: C64 = C64::new(f64::NEG_INFINITY, 0.0);

/// The dimensionless pair `(c, g)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedParams {
    pub c: C64,
    pub g: C64,
}

impl ReducedParams {
    pub fn new(c: C64, g: C64) -> Result<Self> {
        if !(c.re.is_finite() && c.im.is_finite() && g.re.is_finite() && g.im.is_finite()) {
            return Err(Error::invalid(format!("reduced parameters must be finite: c={c}, g={g}")));
        }
        Ok(ReducedParams { c, g })
    }

    /// Index `k` at which `(-2c)_k` would divide by (almost) zero, if any.
    pub fn pole(&self) -> Option<usize> {
        pole_index(self.c)
    }
}

/// `c = (Δ + iγ/2)/(U - iη)`, `g = G/(U - iη)`.
pub fn reduced_params(params: &SystemParams) -> Result<ReducedParams> {
    params.validate()?;
    let interaction = C64::new(params.kerr, -params.two_photon_rate);
    if interaction.norm() == 0.0 {
        return Err(Error::invalid("U - iη vanishes; reduced parameters are undefined"));
    }
    let c = C64::new(params.detuning, 0.5 * params.one_photon_rate) / interaction;
    let g = params.pump / interaction;
    ReducedParams::new(c, g)
}

fn pole_index(c: C64) -> Option<usize> {
    let two_c = 2.0 * c;
    let k = two_c.re.round();
    if k >= 0.0 && (two_c - k).norm() < POLE_TOL {
        Some(k as usize)
    } else {
        None
    }
}

fn pole_guard(l: usize, c: C64) -> Result<()> {
    match pole_index(c) {
        Some(k) if k < l => Err(Error::DegenerateParameter { k }),
        _ => Ok(()),
    }
}

/// `₂F₁(-ℓ, -c; -2c; 2)` by direct summation of the terminating series with
/// Pochhammer recurrences. Accurate only for small `ℓ` (see module docs).
pub fn hyp2f1_series(l: usize, c: C64) -> Result<C64> {
    pole_guard(l, c)?;
    let mut sum = C64::new(0.0, 0.0);
    let mut term = C64::new(1.0, 0.0);
    for k in 0..=l {
        sum += term;
        let kf = k as f64;
        term = term * (kf - l as f64) * (kf - c) / ((kf - 2.0 * c) * (kf + 1.0)) * 2.0;
    }
    Ok(sum)
}

/// `₂F₁(-ℓ, -c; -2c; 2)` through the two-term contiguous relation: zero for
/// odd `ℓ`, `Π_{j=1..ℓ/2} (2j-1)/(2j-1-2c)` for even `ℓ`.
pub fn hyp2f1_neg_int(l: usize, c: C64) -> Result<C64> {
    pole_guard(l, c)?;
    if l % 2 == 1 {
        return Ok(C64::new(0.0, 0.0));
    }
    let mut prod = C64::new(1.0, 0.0);
    for j in 1..=l / 2 {
        let odd = (2 * j - 1) as f64;
        prod *= odd / (odd - 2.0 * c);
    }
    Ok(prod)
}

/// `F(g, c, ℓ)` for `ℓ = 0..=L`, stored as complex logarithms.
///
/// Even entries are `(-g)^{ℓ/2} ₂F₁(…)`, which equals `(i√g)^ℓ ₂F₁(…)` on
/// either branch of `√g`; odd entries are exactly zero.
#[derive(Clone, Debug)]
pub struct FCoefficientTable {
    reduced: ReducedParams,
    ln_values: Vec<C64>,
    ln_minus_g: C64,
    /// `ln Π (2j-1)/(2j-1-2c)` up to the last stored even index.
    ln_product: C64,
}

impl FCoefficientTable {
    pub fn new(reduced: ReducedParams, max_index: usize) -> Result<Self> {
        pole_guard(max_index, reduced.c)?;
        let mut table = FCoefficientTable {
            reduced,
            ln_values: vec![C64::new(0.0, 0.0)],
            ln_minus_g: (-reduced.g).ln(),
            ln_product: C64::new(0.0, 0.0),
        };
        table.extend_to(max_index)?;
        Ok(table)
    }

    pub fn reduced(&self) -> ReducedParams {
        self.reduced
    }

    pub fn max_index(&self) -> usize {
        self.ln_values.len() - 1
    }

    pub fn extend_to(&mut self, max_index: usize) -> Result<()> {
        pole_guard(max_index, self.reduced.c)?;
        let c2 = 2.0 * self.reduced.c;
        while self.ln_values.len() <= max_index {
            let l = self.ln_values.len();
            if l % 2 == 1 {
                self.ln_values.push(NEG_INF);
                continue;
            }
            let k = l / 2;
            let odd = (2 * k - 1) as f64;
            self.ln_product += (C64::new(odd, 0.0) / (odd - c2)).ln();
            let v = if self.reduced.g == C64::new(0.0, 0.0) {
                NEG_INF
            } else {
                self.ln_minus_g * k as f64 + self.ln_product
            };
            self.ln_values.push(v);
        }
        Ok(())
    }

    /// `ln F(g, c, ℓ)`; the real part is `-∞` where `F` vanishes.
    pub fn ln_value(&self, l: usize) -> C64 {
        self.ln_values[l]
    }

    pub fn value(&self, l: usize) -> C64 {
        self.ln_values[l].exp()
    }

    pub fn values(&self) -> Vec<C64> {
        self.ln_values.iter().map(|z| z.exp()).collect()
    }
}

/// Table of `F(g, c, ℓ)` for `ℓ = 0..=L`.
pub fn f_coefficients(reduced: ReducedParams, max_index: usize) -> Result<FCoefficientTable> {
    FCoefficientTable::new(reduced, max_index)
}

/// Running `ln Σ e^{x_i}` over real log-magnitudes.
#[derive(Clone, Copy, Debug)]
struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Cuts a series after `STOP_RUN` consecutive terms below `tol` times the
/// running sum of term magnitudes.
struct StopRule {
    ln_tol: f64,
    total: LogSum,
    run: usize,
}

impl StopRule {
    fn new(tol: f64) -> Self {
        StopRule { ln_tol: tol.ln(), total: LogSum::new(), run: 0 }
    }

    /// Feeds `ln |term|` and reports whether the series can stop.
    fn push(&mut self, ln_mag: f64) -> bool {
        let before = self.total.ln();
        self.total.push(ln_mag);
        let small =
            ln_mag == f64::NEG_INFINITY || (before > f64::NEG_INFINITY && ln_mag < self.ln_tol + self.total.ln());
        self.run = if small { self.run + 1 } else { 0 };
        self.run >= STOP_RUN
    }
}

/// Growable `ln k!` cache.
struct LnFact(Vec<f64>);

impl LnFact {
    fn new() -> Self {
        LnFact(ln_factorials(64))
    }

    fn get(&mut self, k: usize) -> f64 {
        if k >= self.0.len() {
            self.0 = ln_factorials((2 * k).max(64));
        }
        self.0[k]
    }
}

/// Output of [`steady_density_matrix`].
#[derive(Clone, Debug)]
pub struct SteadyStateResult {
    pub density: DensityMatrix,
    /// `ln 𝒩`, the log of the trace of the un-normalized truncated matrix.
    pub ln_normalization: f64,
    pub reduced: ReducedParams,
    pub cutoff: usize,
    /// Number of series terms kept (largest `ℓ` + 1).
    pub series_terms: usize,
    /// Population of the last two Fock levels.
    pub tail_mass: f64,
}

impl SteadyStateResult {
    pub fn normalization(&self) -> f64 {
        self.ln_normalization.exp()
    }
}

fn check_analytic_params(params: &SystemParams) -> Result<ReducedParams> {
    params.validate_dissipative()?;
    if params.feedback_rate != 0.0 {
        return Err(Error::UnsupportedParameter(
            "the closed-form steady state excludes the feedback channel (feedback_rate must be 0)".into(),
        ));
    }
    let reduced = reduced_params(params)?;
    if let Some(k) = reduced.pole() {
        return Err(Error::DegenerateParameter { k });
    }
    Ok(reduced)
}

/// Analytic steady state for fixed parameters; caches the coefficient table
/// and the moment normalization so that many correlation functions or Wigner
/// points can be evaluated cheaply. Read-only after construction.
#[derive(Clone, Debug)]
pub struct ExactSteadyState {
    params: SystemParams,
    table: FCoefficientTable,
    /// `ln Σ_ℓ 2^ℓ/ℓ! |F_ℓ|²`
    ln_moment_norm: f64,
    ln_fact: Vec<f64>,
    series_tol: f64,
}

impl ExactSteadyState {
    pub fn new(params: &SystemParams) -> Result<Self> {
        Self::with_tolerance(params, DEFAULT_SERIES_TOL)
    }

    pub fn with_tolerance(params: &SystemParams, series_tol: f64) -> Result<Self> {
        if !(series_tol > 0.0 && series_tol < 1.0) {
            return Err(Error::invalid(format!("series_tol must be in (0, 1), got {series_tol}")));
        }
        let reduced = check_analytic_params(params)?;
        let mut table = FCoefficientTable::new(reduced, 64)?;
        let mut lf = LnFact::new();
        let mut stop = StopRule::new(series_tol);
        let ln2 = 2f64.ln();
        let mut l = 0;
        loop {
            if l > table.max_index() {
                table.extend_to(2 * l)?;
            }
            let t = l as f64 * ln2 - lf.get(l) + 2.0 * table.ln_value(l).re;
            if stop.push(t) {
                break;
            }
            l += 1;
            if l > MAX_TERMS {
                return Err(Error::Numerical("normalization series did not converge".into()));
            }
        }
        // room for moment offsets and Wigner tails
        table.extend_to(2 * l + 64)?;
        let ln_fact = ln_factorials(table.max_index());
        Ok(ExactSteadyState { params: *params, ln_moment_norm: stop.total.ln(), table, ln_fact, series_tol })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn reduced(&self) -> ReducedParams {
        self.table.reduced()
    }

    pub fn table(&self) -> &FCoefficientTable {
        &self.table
    }

    /// Normalization of the correlation-function series (the `n = m = 0`
    /// sum), as a logarithm.
    pub fn ln_moment_normalization(&self) -> f64 {
        self.ln_moment_norm
    }

    fn ln_f(&self, l: usize, scratch: &mut Option<FCoefficientTable>) -> Result<C64> {
        if l <= self.table.max_index() {
            return Ok(self.table.ln_value(l));
        }
        let t = scratch.get_or_insert_with(|| self.table.clone());
        if l > t.max_index() {
            t.extend_to(2 * l)?;
        }
        Ok(t.ln_value(l))
    }

    fn ln_fact(&self, k: usize) -> f64 {
        if k < self.ln_fact.len() {
            self.ln_fact[k]
        } else {
            ln_factorials(k)[k]
        }
    }

    /// Sums `Σ_ℓ e^{t(ℓ)}` for complex log-terms, stopping by the series rule.
    /// Returns `(S, s)` with the sum equal to `e^S s`.
    fn log_series(
        &self,
        mut term: impl FnMut(usize, &mut Option<FCoefficientTable>) -> Result<C64>,
    ) -> Result<(f64, C64)> {
        let mut stop = StopRule::new(self.series_tol);
        let mut terms = Vec::new();
        let mut scratch = None;
        let mut l = 0;
        loop {
            let t = term(l, &mut scratch)?;
            terms.push(t);
            if stop.push(t.re) {
                break;
            }
            l += 1;
            if l > MAX_TERMS {
                return Err(Error::Numerical("series did not converge".into()));
            }
        }
        let shift = terms.iter().map(|t| t.re).fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return Ok((0.0, C64::new(0.0, 0.0)));
        }
        let sum = terms.iter().map(|t| (t - shift).exp()).sum();
        Ok((shift, sum))
    }

    /// `<a†ⁿ aᵐ> = (1/𝒩) Σ_ℓ 2^ℓ/ℓ! F(ℓ+m) F*(ℓ+n)`.
    pub fn moment(&self, n: usize, m: usize) -> Result<C64> {
        let ln2 = 2f64.ln();
        let (shift, sum) = self.log_series(|l, scratch| {
            let fm = self.ln_f(l + m, scratch)?;
            let fn_ = self.ln_f(l + n, scratch)?;
            Ok(fm + fn_.conj() + (l as f64 * ln2 - self.ln_fact(l)))
        })?;
        Ok(sum * (shift - self.ln_moment_norm).exp())
    }

    /// `W(β) = 2/(π𝒩) e^{-2|β|²} |Σ_ℓ (2β*)^ℓ/ℓ! F(ℓ)|²`; never negative.
    pub fn wigner(&self, beta: C64) -> Result<f64> {
        let ln_2b = (2.0 * beta.conj()).ln();
        let (shift, sum) = self.log_series(|l, scratch| {
            if l == 0 {
                return self.ln_f(0, scratch);
            }
            if beta.norm() == 0.0 {
                return Ok(NEG_INF);
            }
            Ok(ln_2b * l as f64 - self.ln_fact(l) + self.ln_f(l, scratch)?)
        })?;
        if sum.norm() == 0.0 {
            return Ok(0.0);
        }
        let ln_w = (2.0 / PI).ln() - 2.0 * beta.norm_sqr() - self.ln_moment_norm + 2.0 * (shift + sum.norm().ln());
        Ok(ln_w.exp())
    }

    /// Steady-state density matrix truncated to `cutoff` Fock levels and
    /// renormalized to unit trace.
    pub fn density_matrix(&self, cutoff: usize) -> Result<SteadyStateResult> {
        if cutoff < 2 {
            return Err(Error::invalid(format!("cutoff must be >= 2, got {cutoff}")));
        }
        let reduced = self.reduced();
        let mut table = self.table.clone();
        let mut lf = LnFact::new();

        // pass 1: find the truncation index from the trace contributions
        let column = |l: usize, table: &mut FCoefficientTable, lf: &mut LnFact| -> Result<Vec<C64>> {
            if l + cutoff > table.max_index() {
                table.extend_to(2 * (l + cutoff))?;
            }
            let lfl = lf.get(l);
            Ok((0..cutoff).map(|n| table.ln_value(l + n) - 0.5 * (lfl + lf.get(n))).collect())
        };
        let mut stop = StopRule::new(self.series_tol);
        let mut columns: Vec<Vec<C64>> = Vec::new();
        loop {
            let col = column(columns.len(), &mut table, &mut lf)?;
            let mut trace_part = LogSum::new();
            for a in &col {
                trace_part.push(2.0 * a.re);
            }
            columns.push(col);
            if stop.push(trace_part.ln()) {
                break;
            }
            if columns.len() > MAX_TERMS {
                return Err(Error::Numerical("density-matrix series did not converge".into()));
            }
        }

        // pass 2: ρ = B B† with B = exp(a - S)
        let shift = columns.iter().flat_map(|c| c.iter().map(|a| a.re)).fold(f64::NEG_INFINITY, f64::max);
        let b: Vec<Vec<C64>> = columns.iter().map(|c| c.iter().map(|a| (a - shift).exp()).collect()).collect();
        let mut mat = CMat::zeros(cutoff, cutoff);
        for n in 0..cutoff {
            for m in (n..cutoff).step_by(2) {
                let mut acc = C64::new(0.0, 0.0);
                for col in &b {
                    acc += col[n] * col[m].conj();
                }
                if n == m {
                    acc.im = 0.0;
                }
                mat[(n, m)] = acc;
                mat[(m, n)] = acc.conj();
            }
        }
        let tr: f64 = (0..cutoff).map(|n| mat[(n, n)].re).sum();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::Numerical(format!("un-normalized trace is {tr}")));
        }
        mat.unscale_mut(tr);
        let tail_mass = mat[(cutoff - 1, cutoff - 1)].re + mat[(cutoff - 2, cutoff - 2)].re;
        if tail_mass > TAIL_MASS_LIMIT {
            return Err(Error::CutoffTooSmall {
                cutoff,
                required: self.required_cutoff(cutoff)?,
                reason: format!("population {tail_mass:.3e} in the last two Fock levels"),
            });
        }
        Ok(SteadyStateResult {
            density: DensityMatrix::wrap(mat),
            ln_normalization: 2.0 * shift + tr.ln(),
            reduced,
            cutoff,
            series_terms: columns.len(),
            tail_mass,
        })
    }

    /// Smallest cutoff at or above `at_least` whose truncated matrix passes
    /// the tail-mass check.
    pub fn sufficient_cutoff(&self, at_least: usize) -> Result<usize> {
        Ok(self.required_cutoff(at_least.max(2) - 1)?.max(at_least))
    }

    /// `ln` of the un-normalized population `Σ_ℓ |F(ℓ+n)|²/(ℓ! n!)`.
    fn ln_population(&self, n: usize, scratch: &mut Option<FCoefficientTable>) -> Result<f64> {
        let mut stop = StopRule::new(self.series_tol);
        let mut l = 0;
        loop {
            let t = 2.0 * self.ln_f(l + n, scratch)?.re - self.ln_fact(l) - self.ln_fact(n);
            if stop.push(t) {
                return Ok(stop.total.ln());
            }
            l += 1;
        }
    }

    /// Smallest cutoff whose last two levels hold at most `TAIL_MASS_LIMIT`.
    fn required_cutoff(&self, from: usize) -> Result<usize> {
        let mut scratch = None;
        let mut ln_pops = Vec::new();
        let mut n = 0;
        // populations eventually decay like |g|^n/n!; walk until they do
        loop {
            ln_pops.push(self.ln_population(n, &mut scratch)?);
            let total = ln_pops.iter().fold(LogSum::new(), |mut s, &x| {
                s.push(x);
                s
            });
            let len = ln_pops.len();
            if len > from && len >= 2 {
                let tail = (ln_pops[len - 1] - total.ln()).exp() + (ln_pops[len - 2] - total.ln()).exp();
                if tail <= TAIL_MASS_LIMIT / 10.0 {
                    return Ok(len);
                }
            }
            n += 1;
            if n > 100 * from.max(100) {
                return Err(Error::Numerical("could not estimate a sufficient cutoff".into()));
            }
        }
    }
}

/// Analytic steady-state density matrix in a `cutoff`-level Fock basis.
pub fn steady_density_matrix(params: &SystemParams, cutoff: usize, series_tol: f64) -> Result<SteadyStateResult> {
    ExactSteadyState::with_tolerance(params, series_tol)?.density_matrix(cutoff)
}

/// Steady-state correlation function `<a†ⁿ aᵐ>`.
pub fn steady_moment(params: &SystemParams, n: usize, m: usize) -> Result<C64> {
    ExactSteadyState::new(params)?.moment(n, m)
}

/// Steady-state Wigner function at `β`.
pub fn steady_wigner(params: &SystemParams, beta: C64) -> Result<f64> {
    ExactSteadyState::new(params)?.wigner(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{number, Expectation};
    use crate::linalg;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cat_point(pump: f64) -> SystemParams {
        SystemParams::new(0.0, 1.0, pump, 0.1, 1.0)
    }

    #[test]
    fn reduced_params_examples() {
        let rp = reduced_params(&cat_point(10.0)).unwrap();
        assert!((rp.c - c(-0.025, 0.025)).norm() < 1e-15);
        assert!((rp.g - c(5.0, 5.0)).norm() < 1e-14);
        assert_eq!(reduced_params(&cat_point(0.0)).unwrap().g, c(0.0, 0.0));
        let bad = SystemParams::new(0.0, 0.0, 1.0, 0.5, 0.0);
        assert!(matches!(reduced_params(&bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hyp2f1_small_indices() {
        for cc in [c(-0.025, 0.025), c(0.3, -1.2), c(2.2, 0.7)] {
            assert_eq!(hyp2f1_neg_int(0, cc).unwrap(), c(1.0, 0.0));
            assert_eq!(hyp2f1_neg_int(1, cc).unwrap(), c(0.0, 0.0));
            assert!(hyp2f1_series(1, cc).unwrap().norm() < 1e-15);
            let two = 1.0 / (1.0 - 2.0 * cc);
            assert!((hyp2f1_neg_int(2, cc).unwrap() - two).norm() < 1e-15);
            assert!((hyp2f1_series(2, cc).unwrap() - two).norm() < 1e-14);
        }
        // 1/(1 - 2c) at c = -0.025 + 0.025i
        let v = hyp2f1_neg_int(2, c(-0.025, 0.025)).unwrap();
        assert!((v - c(0.9502262443438914, 0.04524886877828054)).norm() < 1e-15);
    }

    #[test]
    fn hyp2f1_matches_high_precision_reference() {
        // 60-digit evaluations of the terminating series
        let cc = c(-0.025, 0.025);
        let reference = [
            (10, c(0.9111671793577518, 0.07900635845928307)),
            (40, c(0.8770048606924498, 0.10665459993465823)),
            (60, c(0.867047710978039, 0.11436347279798895)),
            (100, c(0.854535390613992, 0.12382735001863855)),
        ];
        for (l, want) in reference {
            let got = hyp2f1_neg_int(l, cc).unwrap();
            assert!((got - want).norm() / want.norm() < 1e-14, "l={l}: {got} vs {want}");
        }
    }

    #[test]
    fn pole_guard_names_index() {
        assert_eq!(hyp2f1_neg_int(4, c(0.5, 0.0)), Err(Error::DegenerateParameter { k: 1 }));
        assert_eq!(hyp2f1_series(4, c(0.5, 0.0)), Err(Error::DegenerateParameter { k: 1 }));
        // pole beyond the terminating index is harmless
        assert!(hyp2f1_neg_int(1, c(0.5, 0.0)).is_ok());
        let zero_c = SystemParams::new(0.0, 1.0, 2.0, 0.0, 1.0);
        assert!(matches!(steady_density_matrix(&zero_c, 20, 1e-16), Err(Error::DegenerateParameter { k: 0 })));
    }

    #[test]
    fn f_coefficient_examples() {
        let rp = reduced_params(&cat_point(10.0)).unwrap();
        let t = f_coefficients(rp, 30).unwrap();
        assert_eq!(t.value(0), c(1.0, 0.0));
        for l in (1..=30).step_by(2) {
            assert_eq!(t.value(l), c(0.0, 0.0));
        }
        let zero = f_coefficients(reduced_params(&cat_point(0.0)).unwrap(), 10).unwrap();
        assert_eq!(zero.value(0), c(1.0, 0.0));
        for l in 1..=10 {
            assert_eq!(zero.value(l), c(0.0, 0.0));
        }
    }

    #[test]
    fn f_coefficients_are_branch_independent() {
        // (i√g)^ℓ ₂F₁ on both square-root branches against the stored table
        for (cc, g) in [(c(-0.025, 0.025), c(5.0, 5.0)), (c(0.4, 0.9), c(-3.0, 0.2))] {
            let t = f_coefficients(ReducedParams::new(cc, g).unwrap(), 12).unwrap();
            for l in 0..=12 {
                let h = hyp2f1_series(l, cc).unwrap();
                for root in [g.sqrt(), -g.sqrt()] {
                    let direct = (C64::i() * root).powu(l as u32) * h;
                    // the direct series carries ~3^ℓ ε cancellation error
                    let scale = 1.0 + g.norm().powf(l as f64 / 2.0);
                    let err = (direct - t.value(l)).norm() / scale;
                    assert!(err < 1e-10, "l={l} err={err}");
                }
            }
        }
    }

    #[test]
    fn weak_pump_steady_state_is_vacuum() {
        let r = steady_density_matrix(&SystemParams::new(0.0, 1.0, 0.0, 0.5, 1.0), 12, 1e-16).unwrap();
        let vac = DensityMatrix::fock(0, 12).unwrap();
        assert!(linalg::max_abs(&(r.density.matrix() - vac.matrix())) < 1e-15);
        assert_eq!(r.tail_mass, 0.0);
    }

    /// The density matrix summed naively in double precision from the direct ₂F₁ series.
    /// Only usable at small |g|, where ℓ ≲ 20 terms suffice.
    fn naive_density(params: &SystemParams, cutoff: usize) -> CMat {
        let rp = reduced_params(params).unwrap();
        let lmax = 22;
        let f: Vec<C64> = (0..lmax + cutoff)
            .map(|l| {
                if l > 24 {
                    return c(0.0, 0.0); // below double precision at these |g|
                }
                (C64::i() * rp.g.sqrt()).powu(l as u32) * hyp2f1_series(l, rp.c).unwrap()
            })
            .collect();
        let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
        let mut m = CMat::zeros(cutoff, cutoff);
        for n in 0..cutoff {
            for k in 0..cutoff {
                let mut s = c(0.0, 0.0);
                for l in 0..lmax {
                    s += f[l + n] * f[l + k].conj() / (fact(l) * (fact(n) * fact(k)).sqrt());
                }
                m[(n, k)] = s;
            }
        }
        let tr = linalg::trace(&m);
        m / tr
    }

    #[test]
    fn log_space_assembly_matches_naive_sum() {
        let p = SystemParams::new(0.1, 2.0, c(1.0, 0.5), 0.4, 1.0);
        let r = steady_density_matrix(&p, 24, 1e-16).unwrap();
        let naive = naive_density(&p, 24);
        let err = linalg::max_abs(&(r.density.matrix() - naive));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn cat_point_structure() {
        let r = steady_density_matrix(&cat_point(10.0), 50, 1e-16).unwrap();
        let m = r.density.matrix();
        for i in 0..50 {
            for j in 0..50 {
                if (i + j) % 2 == 1 {
                    assert_eq!(m[(i, j)], c(0.0, 0.0));
                }
            }
        }
        assert!(r.density.hermiticity_defect() < 1e-14);
        assert!((r.density.trace() - 1.0).norm() < 1e-12);
        assert!(r.density.min_eigenvalue() > -1e-10);
        assert!(r.tail_mass < 1e-10);

        let n_trace = r.density.expectation(&number(50).unwrap()).unwrap();
        let n_series = steady_moment(&cat_point(10.0), 1, 1).unwrap();
        assert!((n_trace - n_series).norm() / n_series.norm() < 1e-10);
    }

    #[test]
    fn insufficient_cutoff_is_reported() {
        match steady_density_matrix(&cat_point(10.0), 20, 1e-16) {
            Err(Error::CutoffTooSmall { cutoff, required, .. }) => {
                assert_eq!(cutoff, 20);
                assert!(required > 20);
                assert!(steady_density_matrix(&cat_point(10.0), required, 1e-16).is_ok());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn feedback_is_rejected() {
        let p = cat_point(10.0).with_feedback(1.0, crate::fock::Parity::Odd);
        assert!(matches!(steady_density_matrix(&p, 40, 1e-16), Err(Error::UnsupportedParameter(_))));
        let none = SystemParams::new(0.0, 1.0, 1.0, 0.0, 0.0);
        assert!(matches!(steady_moment(&none, 1, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn moment_examples() {
        assert!((steady_moment(&cat_point(10.0), 0, 0).unwrap() - 1.0).norm() < 1e-14);
        assert_eq!(steady_moment(&cat_point(0.0), 1, 1).unwrap(), c(0.0, 0.0));
        // odd total order vanishes identically
        assert_eq!(steady_moment(&cat_point(10.0), 1, 0).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn wigner_examples() {
        let vac = steady_wigner(&cat_point(0.0), c(0.0, 0.0)).unwrap();
        assert!((vac - 2.0 / PI).abs() < 1e-15);
        let w = steady_wigner(&cat_point(0.0), c(0.7, -0.2)).unwrap();
        assert!((w - 2.0 / PI * (-2.0 * 0.53f64).exp()).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn checkerboard_and_positivity(
            d in -0.2f64..0.2, g in 0.0f64..8.0, gamma in 0.05f64..3.0, u in 1.0f64..6.0
        ) {
            let p = SystemParams::new(d, u, g, gamma, 1.0);
            let r = steady_density_matrix(&p, 40, 1e-16).unwrap();
            let m = r.density.matrix();
            for i in 0..40 {
                for j in 0..40 {
                    if (i + j) % 2 == 1 {
                        prop_assert_eq!(m[(i, j)], c(0.0, 0.0));
                    }
                    prop_assert!((m[(i, j)] - m[(j, i)].conj()).norm() < 1e-14);
                }
            }
            prop_assert!(r.density.min_eigenvalue() > -1e-10);
        }

        #[test]
        fn wigner_is_nonnegative(
            g in 0.0f64..12.0, gamma in 0.05f64..3.0, br in -5.0f64..5.0, bi in -5.0f64..5.0
        ) {
            let w = steady_wigner(&SystemParams::new(0.0, 1.0, g, gamma, 1.0), c(br, bi)).unwrap();
            prop_assert!(w >= 0.0);
        }
    }
}
