//! Spectral decomposition, cat-state fitting, observable splitting and
//! Wigner functions on phase-space grids.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::ExactSteadyState;
use crate::fock::{
    cat_unchecked, displacement_elements, DensityMatrix, Expectation, OperatorMatrix, Parity, StateVector,
};
use crate::linalg::{self, CMat, C64};

/// Eigenvalues closer than this are ordered by parity instead.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    /// `p₁ ≥ p₂ ≥ …`
    pub probabilities: Vec<f64>,
    pub states: Vec<StateVector>,
    /// `1 - p₁ - p₂`
    pub residual: f64,
    pub photon_numbers: Vec<f64>,
    pub parities: Vec<f64>,
}

impl SpectrumReport {
    pub fn cutoff(&self) -> usize {
        self.states.first().map_or(0, |s| s.cutoff())
    }

    /// `Σ_κ p_κ |Ψ_κ><Ψ_κ|`
    pub fn reconstruct(&self) -> DensityMatrix {
        let n = self.cutoff();
        let mut m = CMat::zeros(n, n);
        for (p, s) in self.probabilities.iter().zip(&self.states) {
            let v = s.amplitudes();
            m += (v * v.adjoint()) * C64::new(*p, 0.0);
        }
        DensityMatrix::wrap(m)
    }
}

fn has_parity_blocks(m: &CMat) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| (i + j) % 2 == 0 || m[(i, j)] == C64::new(0.0, 0.0)))
}

/// Eigen-decomposition with descending probabilities. A matrix without
/// even–odd coherences is diagonalized block by block, so every eigenstate is
/// an exact parity eigenstate.
pub fn spectral_decompose(rho: &DensityMatrix) -> Result<SpectrumReport> {
    let herm = rho.hermiticity_defect();
    if herm > 1e-8 {
        return Err(Error::InvalidState(format!("not Hermitian (defect {herm:.3e})")));
    }
    let m = rho.matrix();
    let n = rho.cutoff();
    let mut pairs: Vec<(f64, StateVector)> = Vec::with_capacity(n);
    if has_parity_blocks(m) {
        for parity in [Parity::Even, Parity::Odd] {
            let idx: Vec<usize> = (0..n).filter(|&k| Parity::of(k) == parity).collect();
            let block = CMat::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
            let (vals, vecs) = linalg::hermitian_eigen(&block);
            for (k, v) in vals.iter().enumerate() {
                let mut amps = vec![C64::new(0.0, 0.0); n];
                for (a, &i) in idx.iter().enumerate() {
                    amps[i] = vecs[(a, k)];
                }
                pairs.push((*v, StateVector::from_amplitudes(amps)?));
            }
        }
    } else {
        let (vals, vecs) = linalg::hermitian_eigen(m);
        for (k, v) in vals.iter().enumerate() {
            pairs.push((*v, StateVector::from_amplitudes(vecs.column(k).iter().copied().collect())?));
        }
    }
    let parity_of = |s: &StateVector| -> f64 {
        s.amplitudes().iter().enumerate().map(|(k, z)| Parity::of(k).sign() * z.norm_sqr()).sum()
    };
    let mut entries: Vec<(f64, f64, StateVector)> = pairs
        .into_iter()
        .map(|(p, s)| {
            let s = s.with_canonical_phase();
            (p, parity_of(&s), s)
        })
        .collect();
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    // runs of near-equal probabilities are ordered by parity
    let mut start = 0;
    while start < entries.len() {
        let mut end = start + 1;
        while end < entries.len() && entries[end - 1].0 - entries[end].0 < TIE_TOLERANCE {
            end += 1;
        }
        entries[start..end].sort_by(|a, b| b.1.total_cmp(&a.1));
        start = end;
    }
    let photon =
        |s: &StateVector| -> f64 { s.amplitudes().iter().enumerate().map(|(k, z)| k as f64 * z.norm_sqr()).sum() };
    let probabilities: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let residual = 1.0 - probabilities[0] - probabilities.get(1).copied().unwrap_or(0.0);
    Ok(SpectrumReport {
        residual,
        photon_numbers: entries.iter().map(|e| photon(&e.2)).collect(),
        parities: entries.iter().map(|e| e.1).collect(),
        probabilities,
        states: entries.into_iter().map(|e| e.2).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatFit {
    /// Representative with phase in `[0, π)`; `-α` describes the same cat.
    pub alpha: C64,
    pub parity: Parity,
    /// `|<Ψ|C_α^±>|`
    pub overlap: f64,
}

const FIT_GRID: usize = 41;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Best cat approximation `|C_α^±>` of a pure state, with the parity taken
/// from the sign of `<𝒫>`.
pub fn fit_cat(state: &StateVector) -> Result<CatFit> {
    if (state.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("state norm {} is not 1", state.norm())));
    }
    let amps = state.amplitudes();
    let n = state.cutoff();
    let mean_parity: f64 = amps.iter().enumerate().map(|(k, z)| Parity::of(k).sign() * z.norm_sqr()).sum();
    if mean_parity.abs() < 1e-6 {
        return Err(Error::AmbiguousParity(mean_parity));
    }
    let parity = if mean_parity > 0.0 { Parity::Even } else { Parity::Odd };
    let mean_n: f64 = amps.iter().enumerate().map(|(k, z)| k as f64 * z.norm_sqr()).sum();

    let overlap = |r: f64, theta: f64| -> f64 {
        let cat = cat_unchecked(C64::from_polar(r.max(0.0), theta), parity, n);
        cat.amplitudes().dotc(amps).norm()
    };

    let r_max = (2.0 * mean_n).sqrt() + 2.0;
    let dr = r_max / (FIT_GRID - 1) as f64;
    let dtheta = PI / FIT_GRID as f64;
    let mut best = (0.0, 0.0, -1.0);
    for i in 0..FIT_GRID {
        for j in 0..FIT_GRID {
            let (r, th) = (i as f64 * dr, j as f64 * dtheta);
            let o = overlap(r, th);
            if o > best.2 {
                best = (r, th, o);
            }
        }
    }

    // coordinate refinement inside one grid cell around the best node
    let (mut r, mut th) = (best.0, best.1);
    for _ in 0..200 {
        let prev = C64::from_polar(r, th);
        r = golden_max(|x| overlap(x, th), (r - dr).max(0.0), r + dr, 1e-10);
        if r > 1e-9 {
            th = golden_max(|y| overlap(r, y), th - dtheta, th + dtheta, 1e-10);
        }
        if (C64::from_polar(r, th) - prev).norm() < 1e-9 {
            break;
        }
    }

    let mut alpha = C64::from_polar(r, th);
    if r < 1e-9 {
        alpha = C64::new(0.0, 0.0);
    } else {
        let phase = th.rem_euclid(2.0 * PI);
        if phase >= PI {
            alpha = -alpha;
        }
    }
    Ok(CatFit { alpha, parity, overlap: overlap(r, th).min(1.0) })
}

/// `Õ`, `Õ₁`, `Õ₂` and how far `Õ` is from `p₁Õ₁ + p₂Õ₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservableSplit {
    pub total: C64,
    pub first: C64,
    pub second: C64,
    /// `|Õ - (p₁Õ₁ + p₂Õ₂)|`
    pub discrepancy: f64,
    /// `residual · ‖O‖`
    pub bound: f64,
}

pub fn observable_split(report: &SpectrumReport, op: &OperatorMatrix) -> Result<ObservableSplit> {
    if op.cutoff() != report.cutoff() {
        return Err(Error::invalid(format!("cutoff mismatch: {} vs {}", op.cutoff(), report.cutoff())));
    }
    let values: Vec<C64> = report.states.iter().map(|s| s.expectation(op)).collect::<Result<_>>()?;
    let total: C64 = values.iter().zip(&report.probabilities).map(|(v, p)| v * *p).sum();
    let first = values[0];
    let second = values.get(1).copied().unwrap_or(C64::new(0.0, 0.0));
    let p2 = report.probabilities.get(1).copied().unwrap_or(0.0);
    let partial = first * report.probabilities[0] + second * p2;
    Ok(ObservableSplit {
        total,
        first,
        second,
        discrepancy: (total - partial).norm(),
        bound: report.residual.max(0.0) * op.spectral_norm(),
    })
}

/// Rectangular grid of `β` values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { re_min: -5.0, re_max: 5.0, im_min: -5.0, im_max: 5.0, step: 0.05 }
    }
}

impl GridSpec {
    pub fn square(half_width: f64, step: f64) -> Self {
        GridSpec { re_min: -half_width, re_max: half_width, im_min: -half_width, im_max: half_width, step }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max, self.step].iter().all(|v| v.is_finite());
        if !finite || !(self.step > 0.0) || self.re_max < self.re_min || self.im_max < self.im_min {
            return Err(Error::invalid(format!("invalid grid {self:?}")));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| lo + k as f64 * step).collect()
    }

    pub fn re_axis(&self) -> Vec<f64> {
        Self::axis(self.re_min, self.re_max, self.step)
    }

    pub fn im_axis(&self) -> Vec<f64> {
        Self::axis(self.im_min, self.im_max, self.step)
    }

    pub fn cell_area(&self) -> f64 {
        self.step * self.step
    }
}

#[derive(Clone, Debug)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
    /// `values[(i, j)] = W(re_axis[i] + i im_axis[j])`
    pub values: DMatrix<f64>,
    pub min_value: f64,
    pub min_location: C64,
    /// Points with `|β|² > cutoff/4`, where a truncated state's Wigner
    /// function is no longer representative.
    pub truncation_flags: DMatrix<bool>,
}

impl WignerGrid {
    fn build(spec: GridSpec, cutoff: Option<usize>, f: impl Fn(C64) -> Result<f64> + Sync) -> Result<Self> {
        spec.validate()?;
        let re_axis = spec.re_axis();
        let im_axis = spec.im_axis();
        let rows: Vec<Vec<f64>> = re_axis
            .par_iter()
            .map(|&x| im_axis.iter().map(|&y| f(C64::new(x, y))).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let values = DMatrix::from_fn(re_axis.len(), im_axis.len(), |i, j| rows[i][j]);
        let flags = DMatrix::from_fn(re_axis.len(), im_axis.len(), |i, j| match cutoff {
            Some(n) => re_axis[i].powi(2) + im_axis[j].powi(2) > n as f64 / 4.0,
            None => false,
        });
        let mut min_value = f64::INFINITY;
        let mut min_location = C64::new(0.0, 0.0);
        for j in 0..im_axis.len() {
            for i in 0..re_axis.len() {
                if values[(i, j)] < min_value {
                    min_value = values[(i, j)];
                    min_location = C64::new(re_axis[i], im_axis[j]);
                }
            }
        }
        Ok(WignerGrid { spec, re_axis, im_axis, values, min_value, min_location, truncation_flags: flags })
    }

    /// `Σ W · cell area`
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.spec.cell_area()
    }

    pub fn flagged_points(&self) -> usize {
        self.truncation_flags.iter().filter(|f| **f).count()
    }
}

/// `Tr[ρ D(2β) 𝒫]` from a matrix of `<m|D(2β)|n>`.
fn displaced_parity(rho: &CMat, d: &CMat) -> f64 {
    let n = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for col in 0..n {
        let sign = Parity::of(col).sign();
        let mut s = C64::new(0.0, 0.0);
        for row in 0..n {
            s += rho[(col, row)] * d[(row, col)];
        }
        acc += s * sign;
    }
    acc.re
}

/// `W(β) = (2/π) Tr[ρ D(β) 𝒫 D(β)†] = (2/π) Tr[ρ D(2β) 𝒫]`.
pub fn wigner_point(rho: &DensityMatrix, beta: C64) -> Result<f64> {
    let d = displacement_elements(2.0 * beta, rho.cutoff())?;
    Ok(2.0 / PI * displaced_parity(rho.matrix(), d.matrix()))
}

/// Wigner function of a density matrix on a grid. The displacement matrix
/// elements are exact for every `β`, so the result is exact for the given
/// matrix; flags mark points beyond `|β|² = N/4`.
pub fn wigner_numeric(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    WignerGrid::build(*spec, Some(rho.cutoff()), |beta| wigner_point(rho, beta))
}

/// Pure-state variant using `<ψ|D(2β) 𝒫|ψ>`.
pub fn wigner_numeric_pure(psi: &StateVector, spec: &GridSpec) -> Result<WignerGrid> {
    let amps = psi.amplitudes();
    let signed = amps.map_with_location(|k, _, z| z * Parity::of(k).sign());
    WignerGrid::build(*spec, Some(psi.cutoff()), |beta| {
        let d = displacement_elements(2.0 * beta, psi.cutoff())?;
        Ok(2.0 / PI * amps.dotc(&linalg::matvec(d.matrix(), &signed)).re)
    })
}

/// Wigner grids of several matrices sharing one displacement matrix per
/// point.
pub fn wigner_numeric_many(rhos: &[DensityMatrix], spec: &GridSpec) -> Result<Vec<WignerGrid>> {
    let Some(first) = rhos.first() else {
        return Ok(Vec::new());
    };
    let n = first.cutoff();
    if rhos.iter().any(|r| r.cutoff() != n) {
        return Err(Error::invalid("all density matrices must share one cutoff"));
    }
    spec.validate()?;
    let re_axis = spec.re_axis();
    let im_axis = spec.im_axis();
    let rows: Vec<Vec<Vec<f64>>> = re_axis
        .par_iter()
        .map(|&x| {
            im_axis
                .iter()
                .map(|&y| {
                    let d = displacement_elements(C64::new(2.0 * x, 2.0 * y), n)?;
                    Ok(rhos.iter().map(|r| 2.0 / PI * displaced_parity(r.matrix(), d.matrix())).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;
    (0..rhos.len())
        .map(|k| {
            let lookup = |beta: C64| -> Result<f64> {
                let i = ((beta.re - spec.re_min) / spec.step).round() as usize;
                let j = ((beta.im - spec.im_min) / spec.step).round() as usize;
                Ok(rows[i][j][k])
            };
            WignerGrid::build(*spec, Some(n), lookup)
        })
        .collect()
}

/// Closed-form steady-state Wigner function on a grid.
pub fn wigner_analytic(state: &ExactSteadyState, spec: &GridSpec) -> Result<WignerGrid> {
    WignerGrid::build(*spec, None, |beta| state.wigner(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{cat_state, coherent_state, number, parity};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn pure_vacuum_spectrum() {
        let r = spectral_decompose(&DensityMatrix::fock(0, 6).unwrap()).unwrap();
        assert!((r.probabilities[0] - 1.0).abs() < 1e-14);
        assert!(r.residual.abs() < 1e-14);
    }

    #[test]
    fn degenerate_mixture_breaks_tie_by_parity() {
        let rho = DensityMatrix::diagonal(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        let r = spectral_decompose(&rho).unwrap();
        assert_eq!(r.probabilities[0], 0.5);
        assert_eq!(r.probabilities[1], 0.5);
        assert_eq!(r.parities[0], 1.0);
        assert_eq!(r.parities[1], -1.0);
        assert!(r.residual.abs() < 1e-14);
    }

    #[test]
    fn spectrum_of_generic_mixture() {
        let a = coherent_state(c(1.0, 0.3), 20).unwrap();
        let b = coherent_state(c(-0.5, 1.0), 20).unwrap();
        let m = a.to_density().into_matrix() * C64::new(0.7, 0.0) + b.to_density().into_matrix() * C64::new(0.3, 0.0);
        let rho = DensityMatrix::from_matrix(m).unwrap();
        let r = spectral_decompose(&rho).unwrap();
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(linalg::max_abs(&(r.reconstruct().matrix() - rho.matrix())) < 1e-8);
        for (i, s) in r.states.iter().enumerate().take(3) {
            for t in r.states.iter().skip(i + 1).take(3) {
                assert!(s.inner(t).unwrap().norm() < 1e-8);
            }
        }
        // largest amplitude is real and positive
        for s in &r.states {
            let big = s.amplitudes().iter().fold(c(0.0, 0.0), |m, z| if z.norm() > m.norm() { *z } else { m });
            assert!(big.im.abs() < 1e-12 && big.re > 0.0);
        }
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let mut m = CMat::identity(3, 3) / C64::new(3.0, 0.0);
        m[(0, 1)] = c(0.1, 0.0);
        let rho = DensityMatrix::from_matrix(m).unwrap();
        assert!(matches!(spectral_decompose(&rho), Err(Error::InvalidState(_))));
    }

    #[test]
    fn fit_recovers_cats() {
        for r in [0.5, 1.0, 2.0, 3.0] {
            for parity_sign in [Parity::Even, Parity::Odd] {
                let alpha = C64::from_polar(r, 2.0);
                let cat = cat_state(alpha, parity_sign, 40).unwrap();
                let fit = fit_cat(&cat).unwrap();
                assert_eq!(fit.parity, parity_sign);
                assert!((fit.overlap - 1.0).abs() < 1e-8, "r={r}: {}", fit.overlap);
                let err = (fit.alpha - alpha).norm().min((fit.alpha + alpha).norm());
                assert!(err < 1e-6, "r={r}: {} vs {alpha}", fit.alpha);
                let again = fit_cat(&cat).unwrap();
                assert!((again.alpha - fit.alpha).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn fit_of_vacuum_is_zero_amplitude() {
        let fit = fit_cat(&StateVector::vacuum(10).unwrap()).unwrap();
        assert_eq!(fit.alpha, c(0.0, 0.0));
        assert!((fit.overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ambiguous_parity_is_an_error() {
        let s = 0.5f64.sqrt();
        let psi = StateVector::from_amplitudes(vec![c(s, 0.0), c(s, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(fit_cat(&psi), Err(Error::AmbiguousParity(_))));
    }

    #[test]
    fn observable_split_of_pure_state() {
        let psi = cat_state(c(1.5, 0.0), Parity::Even, 30).unwrap();
        let r = spectral_decompose(&psi.to_density()).unwrap();
        let s = observable_split(&r, &number(30).unwrap()).unwrap();
        assert!((s.total - s.first).norm() < 1e-10);
        assert!(s.discrepancy <= s.bound + 1e-10);
        let p = observable_split(&r, &parity(30).unwrap()).unwrap();
        assert!((p.first - 1.0).norm() < 1e-10);
    }

    #[test]
    fn vacuum_wigner_is_gaussian() {
        let rho = DensityMatrix::fock(0, 20).unwrap();
        assert!((wigner_point(&rho, c(0.0, 0.0)).unwrap() - 2.0 / PI).abs() < 1e-15);
        let spec = GridSpec::square(2.0, 0.25);
        let grid = wigner_numeric(&rho, &spec).unwrap();
        for (i, x) in grid.re_axis.iter().enumerate() {
            for (j, y) in grid.im_axis.iter().enumerate() {
                let want = 2.0 / PI * (-2.0 * (x * x + y * y)).exp();
                assert!((grid.values[(i, j)] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pure_and_many_variants_agree() {
        let psi = cat_state(c(1.5, 0.5), Parity::Odd, 30).unwrap();
        let rho = psi.to_density();
        let spec = GridSpec::square(2.0, 0.5);
        let a = wigner_numeric(&rho, &spec).unwrap();
        let b = wigner_numeric_pure(&psi, &spec).unwrap();
        let many = wigner_numeric_many(&[rho.clone(), DensityMatrix::fock(0, 30).unwrap()], &spec).unwrap();
        assert!((&a.values - &b.values).amax() < 1e-12);
        assert!((&a.values - &many[0].values).amax() < 1e-12);
        assert!(a.min_value < 0.0);
        assert!(a.min_value >= -2.0 / PI - 1e-9);
    }

    #[test]
    fn wide_grid_integrates_to_one() {
        let psi = cat_state(c(2.0, 0.0), Parity::Even, 40).unwrap();
        let grid = wigner_numeric_pure(&psi, &GridSpec::square(5.0, 0.1)).unwrap();
        assert!((grid.integral() - 1.0).abs() < 1e-2);
        assert!(grid.flagged_points() > 0);
    }
}
