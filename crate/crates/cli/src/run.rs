//! Scenario dispatch.

use std::path::{Path, PathBuf};

use kerrcat::analysis::{
    fit_cat, observable_split, spectral_decompose, wigner_analytic, wigner_numeric, wigner_numeric_many,
    wigner_numeric_pure, CatFit, SpectrumReport, WignerGrid,
};
use kerrcat::exact::ExactSteadyState;
use kerrcat::fock::{cat_state, number, parity};
use kerrcat::master::{
    evolve_exponential, evolve_exponential_on, evolve_with, exponential_propagator, fidelity, first_passage_on,
    steady_state_nullspace, ChannelLabel, EvolutionResult, EvolveOptions, ExponentialOptions, FirstPassageOptions,
    PropagatorLadder,
};
use kerrcat::trajectory::{ensemble_with, run_with, TrajectoryOptions, TrajectoryPropagator};
use kerrcat::{DensityMatrix, Parity, StateVector, SystemParams};
use rayon::prelude::*;

use crate::config::{CutoffSpec, ExperimentConfig, InitialState, Method, ParamsConfig, Scenario, WignerSource};
use crate::error::{CliError, CliResult};
use crate::output::ResultTable;

/// Command-line adjustments applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cutoff: Option<usize>,
}

impl Overrides {
    /// The config that is actually run; this is what the metadata echoes.
    pub fn apply(&self, config: &ExperimentConfig) -> CliResult<ExperimentConfig> {
        let mut cfg = config.clone();
        if let Some(seed) = self.seed {
            cfg.trajectory.seed = seed;
        }
        if let Some(n) = self.cutoff {
            if n < 2 {
                return Err(CliError::config(format!("cutoff override must be >= 2, got {n}")));
            }
            cfg.cutoff = CutoffSpec::Fixed(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Cutoff for `params`: fixed, or for `auto` the heuristic raised until the
/// closed-form state passes its tail check when that state exists.
pub fn resolve_cutoff(spec: CutoffSpec, params: &SystemParams, series_tol: f64) -> CliResult<usize> {
    match spec {
        CutoffSpec::Fixed(n) => Ok(n),
        CutoffSpec::Auto => {
            let heuristic = params.auto_cutoff();
            if params.feedback_rate == 0.0 {
                Ok(ExactSteadyState::with_tolerance(params, series_tol)?.sufficient_cutoff(heuristic)?)
            } else {
                Ok(heuristic)
            }
        }
    }
}

struct Steady {
    density: DensityMatrix,
    diagnostics: Vec<(&'static str, f64)>,
}

/// Closed form without feedback, Liouvillian null vector with it.
fn steady_state(params: &SystemParams, cutoff: usize, series_tol: f64) -> CliResult<Steady> {
    if params.feedback_rate == 0.0 {
        let r = ExactSteadyState::with_tolerance(params, series_tol)?.density_matrix(cutoff)?;
        Ok(Steady {
            density: r.density,
            diagnostics: vec![
                ("series_terms", r.series_terms as f64),
                ("tail_mass", r.tail_mass),
                ("ln_normalization", r.ln_normalization),
            ],
        })
    } else {
        let r = steady_state_nullspace(params, cutoff)?;
        Ok(Steady {
            density: r.density,
            diagnostics: vec![("nullspace_residual", r.residual), ("nullspace_iterations", r.iterations as f64)],
        })
    }
}

fn try_fit(report: &SpectrumReport, k: usize) -> Option<CatFit> {
    report.states.get(k).and_then(|s| fit_cat(s).ok())
}

fn fit_columns(fit: Option<CatFit>) -> [f64; 3] {
    match fit {
        Some(f) => [f.alpha.re, f.alpha.im, f.overlap],
        None => [f64::NAN; 3],
    }
}

fn add_diagnostics(table: &mut ResultTable, diags: &[(&str, f64)]) {
    for (k, v) in diags {
        if v.is_finite() {
            table.diagnostic(k, *v);
        }
    }
}

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub params: SystemParams,
    pub cutoff: usize,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a ExperimentConfig) -> CliResult<Self> {
        let params = config.params();
        let cutoff = resolve_cutoff(config.cutoff, &params, config.tolerances.series_tol)?;
        Ok(Context { config, params, cutoff })
    }

    fn steady(&self) -> CliResult<Steady> {
        steady_state(&self.params, self.cutoff, self.config.tolerances.series_tol)
    }

    /// Initial states, resolving `fit:` entries against `steady`.
    fn initial_states(&self, steady: Option<&DensityMatrix>) -> CliResult<Vec<(InitialState, StateVector)>> {
        let states = self.config.initial_states()?;
        let alpha = if states.iter().any(InitialState::needs_fit) {
            let owned;
            let rho = match steady {
                Some(r) => r,
                None => {
                    owned = self.steady()?.density;
                    &owned
                }
            };
            Some(fit_cat(&spectral_decompose(rho)?.states[0])?.alpha)
        } else {
            None
        };
        states.into_iter().map(|s| Ok((s, s.build(self.cutoff, alpha)?))).collect()
    }

    fn evolve(
        &self,
        params: &SystemParams,
        rho0: &DensityMatrix,
        target: Option<&DensityMatrix>,
    ) -> CliResult<EvolutionResult> {
        let time = self.config.time()?;
        let grid = time.grid()?;
        let tol = &self.config.tolerances;
        Ok(match time.method {
            Method::Rk => evolve_with(
                params,
                rho0,
                &grid,
                &EvolveOptions {
                    rtol: tol.rtol,
                    atol: tol.atol,
                    keep_snapshots: false,
                    fidelity_target: target.cloned(),
                    ..EvolveOptions::default()
                },
            )?,
            Method::Exponential => evolve_exponential(params, rho0, &grid, &self.exponential_options(target))?,
        })
    }

    fn exponential_options(&self, target: Option<&DensityMatrix>) -> ExponentialOptions {
        let tol = &self.config.tolerances;
        ExponentialOptions {
            rtol: tol.rtol,
            atol: tol.atol,
            keep_snapshots: false,
            fidelity_target: target.cloned(),
            ..ExponentialOptions::default()
        }
    }
}

pub fn execute(config: &ExperimentConfig) -> CliResult<Vec<ResultTable>> {
    let ctx = Context::new(config)?;
    match config.scenario {
        Scenario::Steady => steady(&ctx),
        Scenario::Evolve => evolve(&ctx),
        Scenario::Trajectory => trajectory(&ctx),
        Scenario::Ensemble => ensemble(&ctx),
        Scenario::Feedback => feedback(&ctx),
        Scenario::Wigner => wigner(&ctx),
        Scenario::Sweep => sweep(&ctx),
    }
}

/// Runs the scenario and writes every table; returns the CSV paths.
pub fn run(config: &ExperimentConfig, overrides: &Overrides) -> CliResult<Vec<PathBuf>> {
    let cfg = overrides.apply(config)?;
    let tables = execute(&cfg)?;
    let dir =
        overrides.output_dir.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("output"));
    write_all(&tables, &dir, &cfg)
}

pub fn write_all(tables: &[ResultTable], dir: &Path, cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let prefix = cfg.prefix();
    tables.iter().map(|t| t.write(dir, &prefix, cfg)).collect()
}

fn steady(ctx: &Context) -> CliResult<Vec<ResultTable>> {
    let n = ctx.cutoff;
    let st = ctx.steady()?;
    let rho = &st.density;

    let mut pops = ResultTable::new("populations", &[("n", ""), ("population", "")], n);
    for (k, p) in rho.populations().iter().enumerate() {
        pops.push(vec![k as f64, *p]);
    }

    let report = spectral_decompose(rho)?;
    let mut spectrum =
        ResultTable::new("spectrum", &[("index", ""), ("probability", ""), ("photon_number", ""), ("parity", "")], n);
    for k in 0..report.probabilities.len() {
        spectrum.push(vec![(k + 1) as f64, report.probabilities[k], report.photon_numbers[k], report.parities[k]]);
    }

    let n_split = observable_split(&report, &number(n)?)?;
    let p_split = observable_split(&report, &parity(n)?)?;
    let mut summary = ResultTable::new(
        "summary",
        &[
            ("p1", ""),
            ("p2", ""),
            ("residual", ""),
            ("photon_number", ""),
            ("photon_number_1", ""),
            ("photon_number_2", ""),
            ("parity", ""),
            ("parity_1", ""),
            ("parity_2", ""),
            ("alpha1_re", ""),
            ("alpha1_im", ""),
            ("overlap1", ""),
            ("alpha2_re", ""),
            ("alpha2_im", ""),
            ("overlap2", ""),
        ],
        n,
    );
    let mut row = vec![
        report.probabilities[0],
        report.probabilities.get(1).copied().unwrap_or(0.0),
        report.residual,
        n_split.total.re,
        n_split.first.re,
        n_split.second.re,
        p_split.total.re,
        p_split.first.re,
        p_split.second.re,
    ];
    row.extend(fit_columns(try_fit(&report, 0)));
    row.extend(fit_columns(try_fit(&report, 1)));
    summary.push(row);
    summary.diagnostic("photon_number_bound", n_split.bound);
    summary.diagnostic("parity_bound", p_split.bound);

    let mut tables = vec![pops, spectrum, summary];
    for t in &mut tables {
        add_diagnostics(t, &st.diagnostics);
    }
    Ok(tables)
}

fn evolve(ctx: &Context) -> CliResult<Vec<ResultTable>> {
    let n = ctx.cutoff;
    let st = ctx.steady()?;
    let target = &st.density;
    let initial = ctx.initial_states(Some(target))?;
    let results: Vec<EvolutionResult> = match ctx.config.time()?.method {
        Method::Rk => initial
            .par_iter()
            .map(|(_, psi0)| ctx.evolve(&ctx.params, &psi0.to_density(), Some(target)))
            .collect::<CliResult<_>>()?,
        // one propagator serves every initial state
        Method::Exponential => {
            let opts = ctx.exponential_options(Some(target));
            let grid = ctx.config.time()?.grid()?;
            let mut prop = exponential_propagator(&ctx.params, n, &grid, &opts)?;
            initial
                .iter()
                .map(|(_, psi0)| evolve_exponential_on(prop.as_mut(), &ctx.params, &psi0.to_density(), &grid, &opts))
                .collect::<kerrcat::Result<_>>()?
        }
    };

    let mut table = ResultTable::new(
        "evolve",
        &[("state", ""), ("t", "1/eta"), ("photon_number", ""), ("parity", ""), ("fidelity", "")],
        n,
    );
    let mut repair: f64 = 0.0;
    for (k, ((state, _), res)) in initial.iter().zip(&results).enumerate() {
        table.note(&format!("state_{k}"), state.to_string());
        repair = repair.max(res.stats.repair_total);
        for (t, obs) in res.times.iter().zip(&res.observables) {
            table.push(vec![k as f64, *t, obs.photon_number, obs.parity, obs.fidelity.unwrap_or(f64::NAN)]);
        }
    }
    table.diagnostic("max_repair_total", repair);
    add_diagnostics(&mut table, &st.diagnostics);
    let mut tables = vec![table];

    let time = ctx.config.time()?;
    if let Some(threshold) = time.passage_threshold {
        let opts = FirstPassageOptions { step: time.passage_step, ..FirstPassageOptions::default() };
        let mut ladder = PropagatorLadder::new(&ctx.params, n, opts.step)?;
        let passages: Vec<_> = initial
            .iter()
            .map(|(_, psi0)| first_passage_on(&mut ladder, &psi0.to_density(), target, threshold, &opts))
            .collect::<kerrcat::Result<_>>()?;
        let mut pt = ResultTable::new("passage", &[("state", ""), ("time", "1/eta"), ("fidelity", "")], n);
        pt.diagnostic("threshold", threshold);
        for (k, ((state, _), p)) in initial.iter().zip(&passages).enumerate() {
            pt.note(&format!("state_{k}"), state.to_string());
            match p {
                Some(p) => pt.push(vec![k as f64, p.time, p.fidelity]),
                None => pt.push(vec![k as f64, f64::NAN, f64::NAN]),
            }
        }
        tables.push(pt);
    }
    Ok(tables)
}

fn trajectory_options(ctx: &Context) -> CliResult<TrajectoryOptions> {
    let time = ctx.config.time()?;
    let grid = time.grid()?;
    Ok(TrajectoryOptions {
        record_stride: ctx.config.record_stride()?,
        ..TrajectoryOptions::new(*grid.last().unwrap(), ctx.config.trajectory.dt)
    })
}

const CHANNEL_NOTE: &str = "1 = one-photon loss, 2 = two-photon loss, 3 = feedback";

fn channel_code(c: ChannelLabel) -> f64 {
    match c {
        ChannelLabel::OnePhoton => 1.0,
        ChannelLabel::TwoPhoton => 2.0,
        ChannelLabel::Feedback => 3.0,
    }
}

fn trajectory(ctx: &Context) -> CliResult<Vec<ResultTable>> {
    let n = ctx.cutoff;
    let (state, psi0) = ctx.initial_states(None)?.remove(0);
    let opts = trajectory_options(ctx)?;
    let prop = TrajectoryPropagator::new(&ctx.params, n, opts.dt)?;
    let seed = ctx.config.trajectory.seed;
    let rec = run_with(&prop, &psi0, &opts, seed)?;

    let mut obs = ResultTable::new("trajectory", &[("t", "1/eta"), ("photon_number", ""), ("parity", "")], n);
    for k in 0..rec.times.len() {
        obs.push(vec![rec.times[k], rec.photon_number[k], rec.parity[k]]);
    }
    let mut jumps = ResultTable::new(
        "jumps",
        &[("t", "1/eta"), ("channel", "code"), ("parity_before", ""), ("parity_after", "")],
        n,
    );
    for j in &rec.jumps {
        jumps.push(vec![j.time, channel_code(j.channel), j.parity_before, j.parity_after]);
    }
    jumps.note("channel", CHANNEL_NOTE);
    for t in [&mut obs, &mut jumps] {
        t.seeds = vec![seed];
        t.note("initial", state.to_string());
        t.diagnostic("dt", opts.dt);
    }
    Ok(vec![obs, jumps])
}

fn ensemble(ctx: &Context) -> CliResult<Vec<ResultTable>> {
    let n = ctx.cutoff;
    let (state, psi0) = ctx.initial_states(None)?.remove(0);
    let opts = trajectory_options(ctx)?;
    let tc = &ctx.config.trajectory;
    let summary = ensemble_with(&ctx.params, &psi0, &opts, tc.count, tc.seed)?;

    let mut columns = vec![
        ("t", "1/eta"),
        ("mean_photon_number", ""),
        ("se_photon_number", ""),
        ("mean_parity", ""),
        ("se_parity", ""),
    ];
    if tc.compare {
        columns.extend([("master_photon_number", ""), ("master_parity", "")]);
    }
    let mut table = ResultTable::new("ensemble", &columns, n);
    let master = if tc.compare { Some(ctx.evolve(&ctx.params, &psi0.to_density(), None)?) } else { None };
    for k in 0..summary.times.len() {
        let mut row = vec![
            summary.times[k],
            summary.mean_photon_number[k],
            summary.se_photon_number[k],
            summary.mean_parity[k],
            summary.se_parity[k],
        ];
        if let Some(m) = &master {
            let obs = &m.observables[k];
            row.extend([obs.photon_number, obs.parity]);
        }
        table.push(row);
    }
    table.seeds = vec![tc.seed];
    table.note("seeds", "trajectory i uses trajectory_seed(seed, i)");
    table.note("initial", state.to_string());
    table.diagnostic("count", tc.count as f64);
    table.diagnostic("dt", opts.dt);
    Ok(vec![table])
}

fn grid_table(name: &str, grid: &WignerGrid, cutoff: usize) -> ResultTable {
    let mut t = ResultTable::new(name, &[("re_beta", ""), ("im_beta", ""), ("w", ""), ("flagged", "")], cutoff);
    for (i, x) in grid.re_axis.iter().enumerate() {
        for (j, y) in grid.im_axis.iter().enumerate() {
            let flag = if grid.truncation_flags[(i, j)] { 1.0 } else { 0.0 };
            t.push(vec![*x, *y, grid.values[(i, j)], flag]);
        }
    }
    t.diagnostic("min_value", grid.min_value);
    t.diagnostic("min_re_beta", grid.min_location.re);
    t.diagnostic("min_im_beta", grid.min_location.im);
    t.diagnostic("integral", grid.integral());
    t.diagnostic("flagged_points", grid.flagged_points() as f64);
    t
}

fn feedback(ctx: &Context) -> CliResult<Vec<ResultTable>> {
    let n = ctx.cutoff;
    let fb = ctx.config.feedback.as_ref().expect("validated");
    let suppress: Parity = fb.suppress.into();
    let points: Vec<SystemParams> = fb.rates.iter().map(|r| ctx.params.with_feedback(*r, suppress)).collect();
    let series_tol = ctx.config.tolerances.series_tol;
    let steadies: Vec<Steady> = points.par_iter().map(|p| steady_state(p, n, series_tol)).collect::<CliResult<_>>()?;

    let mut table = ResultTable::new(
        "feedback",
        &[
            ("feedback_rate", "eta"),
            ("parity", ""),
            ("photon_number", ""),
            ("p1", ""),
            ("residual", ""),
            ("alpha_re", ""),
            ("alpha_im", ""),
            ("cat_fidelity", ""),
            ("wigner_min", ""),
        ],
        n,
    );
    let spec = ctx.config.wigner.clone().unwrap_or_default().spec();
    let densities: Vec<DensityMatrix> = steadies.iter().map(|s| s.density.clone()).collect();
    let grids = if fb.wigner { wigner_numeric_many(&densities, &spec)? } else { Vec::new() };
    let kept = if suppress == Parity::Odd { Parity::Even } else { Parity::Odd };
    for (k, (rate, st)) in fb.rates.iter().zip(&steadies).enumerate() {
        let rho = &st.density;
        let report = spectral_decompose(rho)?;
        let pops = rho.populations();
        let parity: f64 = pops.iter().enumerate().map(|(j, p)| Parity::of(j).sign() * p).sum();
        let photons: f64 = pops.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
        let fit = try_fit(&report, 0);
        let cat_fidelity = match fit {
            Some(f) => match cat_state(f.alpha, kept, n) {
                Ok(c) => fidelity(rho, &c.to_density())?,
                Err(_) => f64::NAN,
            },
            None => f64::NAN,
        };
        let [are, aim, _] = fit_columns(fit);
        let wmin = grids.get(k).map_or(f64::NAN, |g| g.min_value);
        table.push(vec![
            *rate,
            parity,
            photons,
            report.probabilities[0],
            report.residual,
            are,
            aim,
            cat_fidelity,
            wmin,
        ]);
    }
    table.note("suppress", format!("{suppress:?}").to_lowercase());
    let mut tables = vec![table];
    for (k, g) in grids.iter().enumerate() {
        let mut t = grid_table(&format!("wigner_{k}"), g, n);
        t.diagnostic("feedback_rate", fb.rates[k]);
        tables.push(t);
    }

    if ctx.config.time.is_some() {
        let (state, psi0) = ctx.initial_states(None)?.remove(0);
        let rho0 = psi0.to_density();
        let runs: Vec<EvolutionResult> =
            points.par_iter().map(|p| ctx.evolve(p, &rho0, None)).collect::<CliResult<_>>()?;
        let mut dynamics = ResultTable::new(
            "dynamics",
            &[("feedback_rate", "eta"), ("t", "1/eta"), ("photon_number", ""), ("parity", "")],
            n,
        );
        for (rate, res) in fb.rates.iter().zip(&runs) {
            for (t, obs) in res.times.iter().zip(&res.observables) {
                dynamics.push(vec![*rate, *t, obs.photon_number, obs.parity]);
            }
        }
        dynamics.note("initial", state.to_string());
        tables.push(dynamics);
    }
    Ok(tables)
}

fn wigner(ctx: &Context) -> CliResult<Vec<ResultTable>> {
    let n = ctx.cutoff;
    let wc = ctx.config.wigner.clone().unwrap_or_default();
    let spec = wc.spec();
    let grid = match wc.source {
        WignerSource::Steady => wigner_numeric(&ctx.steady()?.density, &spec)?,
        WignerSource::Analytic => {
            let es = ExactSteadyState::with_tolerance(&ctx.params, ctx.config.tolerances.series_tol)?;
            wigner_analytic(&es, &spec)?
        }
        WignerSource::Initial => {
            let (_, psi) = ctx.initial_states(None)?.remove(0);
            wigner_numeric_pure(&psi, &spec)?
        }
    };
    let mut t = grid_table("wigner", &grid, n);
    t.note("source", format!("{:?}", wc.source).to_lowercase());
    Ok(vec![t])
}

struct SweepRow {
    params: ParamsConfig,
    cutoff: usize,
    values: Vec<f64>,
}

fn sweep(ctx: &Context) -> CliResult<Vec<ResultTable>> {
    let sw = ctx.config.sweep.as_ref().expect("validated");
    let cfg = ctx.config;
    let points = sw.points(&cfg.params);
    let rows: Vec<SweepRow> = points
        .into_par_iter()
        .map(|pc| -> CliResult<SweepRow> {
            let p = pc.to_params();
            let cutoff = resolve_cutoff(cfg.cutoff, &p, cfg.tolerances.series_tol)?;
            let st = steady_state(&p, cutoff, cfg.tolerances.series_tol)?;
            let report = spectral_decompose(&st.density)?;
            let pops = st.density.populations();
            let parity: f64 = pops.iter().enumerate().map(|(j, q)| Parity::of(j).sign() * q).sum();
            let photons: f64 = pops.iter().enumerate().map(|(j, q)| j as f64 * q).sum();
            let [a1re, a1im, o1] = fit_columns(try_fit(&report, 0));
            let [_, _, o2] = fit_columns(try_fit(&report, 1));
            let values = vec![
                report.probabilities[0],
                report.probabilities.get(1).copied().unwrap_or(0.0),
                report.residual,
                photons,
                parity,
                a1re,
                a1im,
                o1,
                o2,
            ];
            Ok(SweepRow { params: pc, cutoff, values })
        })
        .collect::<CliResult<_>>()?;

    let mut table = ResultTable::new(
        "sweep",
        &[
            ("detuning", "eta"),
            ("kerr", "eta"),
            ("pump", "eta"),
            ("gamma", "eta"),
            ("eta", "eta"),
            ("feedback_rate", "eta"),
            ("cutoff", ""),
            ("p1", ""),
            ("p2", ""),
            ("residual", ""),
            ("photon_number", ""),
            ("parity", ""),
            ("alpha1_re", ""),
            ("alpha1_im", ""),
            ("overlap1", ""),
            ("overlap2", ""),
        ],
        ctx.cutoff,
    );
    let mut max_cutoff = 0;
    for r in rows {
        let p = &r.params;
        let mut row = vec![p.detuning, p.kerr, p.pump, p.gamma, p.eta, p.feedback_rate, r.cutoff as f64];
        row.extend(r.values);
        table.push(row);
        max_cutoff = max_cutoff.max(r.cutoff);
    }
    table.cutoff = max_cutoff;
    table.note("cutoff", "per-point cutoff in the cutoff column");
    Ok(vec![table])
}

/// What `validate` reports about a config without running it.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub scenario: Scenario,
    pub cutoff: usize,
    /// `ceil(4|g| + 10)`, at least 30.
    pub heuristic_cutoff: usize,
    /// Rough peak memory of the largest dense object.
    pub memory_bytes: u64,
}

const COMPLEX_BYTES: u64 = 16;

pub fn plan(config: &ExperimentConfig) -> CliResult<Plan> {
    let params = config.params();
    let cutoff = resolve_cutoff(config.cutoff, &params, config.tolerances.series_tol)?;
    let n = cutoff as u64;
    let dense = n * n * COMPLEX_BYTES;
    let sector = (n * n).div_ceil(2);
    let superop = sector * sector * COMPLEX_BYTES;
    let feedback_on = params.feedback_rate > 0.0
        || config.feedback.as_ref().is_some_and(|f| f.rates.iter().any(|r| *r > 0.0))
        || config.sweep.as_ref().is_some_and(|s| s.feedback_rate.iter().any(|r| *r > 0.0));
    let steady = if feedback_on { 2 * superop } else { 4 * dense };
    let time = config.time.as_ref();
    let dynamics = match time {
        Some(t) if t.passage_threshold.is_some() => 2 * 40 * superop,
        Some(t) if t.method == Method::Exponential => 2 * 21 * superop,
        Some(_) => 12 * dense,
        None => 0,
    };
    let grid = config.wigner.clone().unwrap_or_default().points() as u64 * 8;
    Ok(Plan {
        scenario: config.scenario,
        cutoff,
        heuristic_cutoff: params.auto_cutoff(),
        memory_bytes: steady.max(dynamics).max(grid + dense),
    })
}
