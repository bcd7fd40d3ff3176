//! Direct solves of the discretized scattering problem, the vanishing-
//! absorption continuation, and absorption sweeps of the stability quotient.
//!
//! A solve factorizes the banded system, applies one step of iterative
//! refinement, and distills the solution into a [`SolveReport`]: discrete
//! `H^1`/`L^2` norms, the `H^{-1/2}` datum norm and their quotient, the
//! Galerkin energy residual `|a(u,u) - <eps1^-1 g, u>|`, reflection
//! efficiencies with the absorbed fraction, and the reciprocal condition
//! estimate of the factorization.  The continuation halves the absorption
//! from a starting value, solves every step plus the undamped limit problem
//! directly, and measures how the damped fields close in on the limit field
//! in `L^2`.  Independent solves of a sweep run on a small worker pool capped
//! by the `NIM_GRATING_THREADS` environment variable.

use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;

use crate::analysis::trace_norm;
use crate::assembly::Discretization;
use crate::config::RunConfig;
use crate::dtn::{
    build_mode_set, default_truncation, efficiencies, incident_datum_coefficient,
    rayleigh_coefficients, ModeSet,
};
use crate::error::{Error, Result};
use crate::limits::RCOND_FLOOR;
use crate::mesh::{build_mesh, Mesh};
use crate::oracle::{solve_layered, OracleOptions};
use crate::problem::Region;

/// Escape hatches for deliberately non-physical test setups.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Skips the material sign validation so a homogeneous (all-dielectric)
    /// slab can be solved as a known-answer check of the pipeline.
    pub allow_nonnegative_lower_permittivity: bool,
}

/// Solution coefficients over the free unknowns, with enough of the grid
/// layout to reconstruct nodal values, traces and region restrictions.
#[derive(Debug, Clone)]
pub struct ComplexField {
    nx: usize,
    ny1: usize,
    ny2: usize,
    phase: Complex64,
    coefficients: Vec<Complex64>,
}

impl ComplexField {
    pub(crate) fn new(disc: &Discretization, coefficients: Vec<Complex64>) -> Self {
        assert_eq!(coefficients.len(), disc.n_unknowns());
        ComplexField {
            nx: disc.mesh.nx,
            ny1: disc.mesh.ny1,
            ny2: disc.mesh.ny2,
            phase: disc.dofs().phase(),
            coefficients,
        }
    }

    /// Raw unknowns, row-major from the bottom row upward, `nx` per row.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn n_unknowns(&self) -> usize {
        self.coefficients.len()
    }

    /// Phase factor relating the right edge of the cell to the left.
    pub fn phase(&self) -> Complex64 {
        self.phase
    }

    /// Value at grid node (`ix`, `iy`); the right column `ix = nx` is
    /// reconstructed from the left unknown and the cell phase.
    pub fn node_value(&self, ix: usize, iy: usize) -> Complex64 {
        assert!(ix <= self.nx && iy <= self.ny1 + self.ny2);
        if ix == self.nx {
            self.phase * self.coefficients[iy * self.nx]
        } else {
            self.coefficients[iy * self.nx + ix]
        }
    }

    /// Unknowns along the transparent top boundary.
    pub fn trace_top(&self) -> &[Complex64] {
        let start = (self.ny1 + self.ny2) * self.nx;
        &self.coefficients[start..start + self.nx]
    }

    /// Unknowns along the material interface.
    pub fn trace_interface(&self) -> &[Complex64] {
        let start = self.ny2 * self.nx;
        &self.coefficients[start..start + self.nx]
    }

    /// Unknowns on the rows covered by `region`, interface row included.
    pub fn restrict(&self, region: Region) -> Vec<Complex64> {
        let rows = match region {
            Region::Lower => 0..=self.ny2,
            Region::Upper => self.ny2..=self.ny1 + self.ny2,
        };
        rows.flat_map(|iy| self.coefficients[iy * self.nx..(iy + 1) * self.nx].iter().copied())
            .collect()
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Absorption the solve used.
    pub sigma: f64,
    /// Discrete `H^1(Omega)` norm of the solution.
    pub h1_norm: f64,
    /// Discrete `L^2(Omega)` norm of the solution.
    pub l2_norm: f64,
    /// `H^{-1/2}` norm of the boundary datum (absorption-independent).
    pub g_norm: f64,
    /// `h1_norm / g_norm`, the quotient the limit problem bounds.
    pub stability_ratio: f64,
    /// `|a(u,u) - <eps1^-1 g, u>|` for the computed solution.
    pub energy_residual: f64,
    /// Reflected energy fraction per propagating order.
    pub efficiencies: Vec<(i64, f64)>,
    /// Sum of the propagating efficiencies.
    pub efficiency_sum: f64,
    /// Fraction of the incident energy deposited in the filling.
    pub absorbed_fraction: f64,
    /// `|1 - efficiency_sum - absorbed_fraction|`, the budget closure error.
    pub energy_defect: f64,
    /// Reciprocal condition estimate of the factorization.
    pub condition_estimate: f64,
    /// `|A u - rhs| / |rhs|` after refinement.
    pub linear_residual: f64,
    /// Retained orders `n = -truncation ..= truncation`.
    pub truncation: usize,
    pub n_unknowns: usize,
}

/// A solved field together with its diagnostics.
#[derive(Debug, Clone)]
pub struct Solved {
    pub field: ComplexField,
    pub report: SolveReport,
}

/// A full pipeline run: the discretization objects plus the solution.
#[derive(Debug)]
pub struct SolveRun {
    pub mesh: Mesh,
    pub modes: ModeSet,
    pub field: ComplexField,
    pub report: SolveReport,
}

/// One successful continuation step.
#[derive(Debug, Clone)]
pub struct LapsStep {
    pub sigma: f64,
    pub field: ComplexField,
    pub report: SolveReport,
    /// `L^2` distance to the next (smaller-absorption) successful step.
    pub delta: Option<f64>,
    /// `L^2` distance to the directly solved limit field.
    pub limit_gap: Option<f64>,
}

/// Result of the vanishing-absorption continuation.
#[derive(Debug)]
pub struct LapsResult {
    /// Requested absorption ladder, strictly decreasing, all positive.
    pub sigmas: Vec<f64>,
    /// Successful steps in decreasing-absorption order.
    pub steps: Vec<LapsStep>,
    /// Absorptions whose solve failed, with the failure message.
    pub failures: Vec<(f64, String)>,
    /// Direct solve of the undamped limit problem.
    pub sigma0: Option<Solved>,
    /// `L^2` distance between the smallest-absorption step and the limit.
    pub limit_gap: Option<f64>,
    /// Least-squares slope of `log(limit gap)` against `log(sigma)`.
    pub fitted_rate: Option<f64>,
}

/// One absorption sample of a stability sweep.
#[derive(Debug)]
pub struct StabilityRow {
    pub sigma: f64,
    pub outcome: std::result::Result<SolveReport, String>,
}

/// Stability quotients over a list of absorptions.
#[derive(Debug)]
pub struct StabilitySweep {
    /// One row per requested absorption, input order preserved.
    pub rows: Vec<StabilityRow>,
    pub max_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
}

/// Worker count for a sweep of `jobs` independent solves: the machine
/// parallelism, capped by the `NIM_GRATING_THREADS` environment variable.
pub fn worker_limit(jobs: usize) -> usize {
    let machine = std::thread::available_parallelism().map(usize::from).unwrap_or(1);
    let cap = std::env::var("NIM_GRATING_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(machine);
    cap.min(jobs).max(1)
}

/// Runs `f` over `0..jobs` on the worker pool; the result vector is indexed
/// by job, so the outcome is independent of scheduling order.
pub(crate) fn map_indexed<T, F>(jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = worker_limit(jobs);
    if workers <= 1 {
        return (0..jobs).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..jobs).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs {
                    break;
                }
                let value = f(k);
                *slots[k].lock().unwrap() = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("job skipped"))
        .collect()
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `L^2(Omega)` distance between two fields on the discretization's mesh.
pub fn l2_distance(disc: &Discretization, a: &ComplexField, b: &ComplexField) -> f64 {
    assert_eq!(a.n_unknowns(), b.n_unknowns());
    let diff: Vec<Complex64> = a
        .coefficients
        .iter()
        .zip(&b.coefficients)
        .map(|(x, y)| x - y)
        .collect();
    disc.field_energies(&diff).l2_sq().sqrt()
}

/// Solves the assembled system of `disc` and assembles the report.
///
/// The banded factorization is followed by one step of iterative refinement;
/// a reciprocal condition estimate below [`RCOND_FLOOR`] aborts with
/// [`Error::SingularSystem`], which flags either an exceptional frequency or
/// a near-critical material contrast — perturbing the frequency is the
/// usual way out.  Identical inputs produce bit-identical output.
pub fn solve_discretized(disc: &Discretization) -> Result<Solved> {
    let lu = disc.assemble_matrix().factorize()?;
    let rcond = lu.rcond_estimate();
    if rcond < RCOND_FLOOR {
        return Err(Error::SingularSystem { rcond });
    }

    let b = disc.rhs();
    let mut x = b.clone();
    lu.solve(&mut x)?;
    let ax = disc.apply_operator(&x)?;
    let mut correction: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, yi)| bi - yi).collect();
    lu.solve(&mut correction)?;
    for (xi, di) in x.iter_mut().zip(&correction) {
        *xi += di;
    }

    let ax = disc.apply_operator(&x)?;
    let residual: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, yi)| bi - yi).collect();
    let b_norm = vec_norm(&b);
    let r_norm = vec_norm(&residual);
    let linear_residual = if b_norm > 0.0 { r_norm / b_norm } else { r_norm };
    // a(u,u) - <eps1^-1 g, u> = x^H (A x - b) = -x^H residual.
    let energy_residual = x
        .iter()
        .zip(&residual)
        .map(|(xi, ri)| xi.conj() * ri)
        .sum::<Complex64>()
        .norm();

    let config = disc.config;
    let scalars = &disc.scalars;
    let modes = disc.modes;
    let u_hat = rayleigh_coefficients(modes, &disc.trace_top(&x))?;
    let incident_trace = (-Complex64::i() * scalars.beta * config.h1).exp();
    let outgoing: Vec<Complex64> = modes
        .orders()
        .map(|n| {
            let c = u_hat[modes.index_of(n)];
            if n == 0 {
                c - incident_trace
            } else {
                c
            }
        })
        .collect();
    let effs = efficiencies(modes, &outgoing, scalars.beta)?;
    let efficiency_sum: f64 = effs.iter().map(|(_, e)| e).sum();

    let energies = disc.field_energies(&x);
    let l2_norm = energies.l2_sq().sqrt();
    let h1_norm = energies.h1_sq().sqrt();

    let eps_lower = config.permittivity_at(Region::Lower);
    let sigma = config.sigma;
    let dissipated = sigma / config.omega / eps_lower.norm_sqr() * energies.grad_sq_lower
        + sigma * energies.l2_lower_one_point;
    let absorbed_fraction =
        config.eps1 * dissipated / (config.profile.period * scalars.beta);
    let energy_defect = (1.0 - efficiency_sum - absorbed_fraction).abs();

    let mut g_coeffs = vec![Complex64::new(0.0, 0.0); modes.count()];
    g_coeffs[modes.index_of(0)] = incident_datum_coefficient(scalars, config.h1);
    let g_norm = trace_norm(modes, &g_coeffs, -0.5)?;

    let report = SolveReport {
        sigma,
        h1_norm,
        l2_norm,
        g_norm,
        stability_ratio: h1_norm / g_norm,
        energy_residual,
        efficiencies: effs,
        efficiency_sum,
        absorbed_fraction,
        energy_defect,
        condition_estimate: rcond,
        linear_residual,
        truncation: modes.truncation,
        n_unknowns: x.len(),
    };
    Ok(Solved {
        field: ComplexField::new(disc, x),
        report,
    })
}

fn resolved_truncation(run: &RunConfig) -> Result<usize> {
    let scalars = run.problem.derive_scalars()?;
    let truncation = match run.numerics.modes {
        Some(n) => n,
        None => default_truncation(&run.problem, &scalars, run.numerics.nx),
    };
    let required = 4 * truncation + 4;
    if run.numerics.nx < required {
        return Err(Error::TruncationMismatch {
            modes: truncation,
            required,
            nx: run.numerics.nx,
        });
    }
    Ok(truncation)
}

/// Full pipeline: validate, mesh, assemble, solve, report.
pub fn run_solve(run: &RunConfig) -> Result<SolveRun> {
    run_solve_with(run, &SolveOptions::default())
}

/// [`run_solve`] with explicit [`SolveOptions`].
pub fn run_solve_with(run: &RunConfig, options: &SolveOptions) -> Result<SolveRun> {
    if !options.allow_nonnegative_lower_permittivity {
        let violations = run.problem.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidConfig(violations));
        }
    }
    let scalars = run.problem.derive_scalars()?;
    let truncation = resolved_truncation(run)?;
    let modes = build_mode_set(&scalars, run.problem.profile.period, truncation)?;
    let mesh = build_mesh(
        &run.problem.profile,
        run.problem.h1,
        run.numerics.nx,
        run.numerics.ny1,
        run.numerics.ny2,
    )?;
    let solved = {
        let disc = Discretization::new(&mesh, &run.problem, &modes)?;
        solve_discretized(&disc)?
    };
    Ok(SolveRun {
        mesh,
        modes,
        field: solved.field,
        report: solved.report,
    })
}

/// Least-squares slope of `ln y` against `ln x` over pairs with `y > 0`.
fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Runs the vanishing-absorption continuation.
///
/// Solves at `sigma0 / 2^k` for `k = 0 .. num_steps`, plus the undamped
/// problem directly, all on one shared mesh and mode set so fields are
/// comparable in `L^2`.  A failed step is recorded and skipped; the
/// continuation carries on with the remaining absorptions.  The template's
/// own absorption value is ignored.
pub fn laps_continuation(run: &RunConfig, sigma0: f64, num_steps: usize) -> Result<LapsResult> {
    if !(sigma0 > 0.0) || !sigma0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "continuation start sigma0 = {sigma0} must be positive and finite"
        )));
    }
    if num_steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "continuation needs at least 2 steps, got {num_steps}"
        )));
    }
    let limit_problem = run.problem.with_sigma(0.0);
    let violations = limit_problem.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidConfig(violations));
    }
    let scalars = limit_problem.derive_scalars()?;
    let truncation = resolved_truncation(run)?;
    let modes = build_mode_set(&scalars, limit_problem.profile.period, truncation)?;
    let mesh = build_mesh(
        &limit_problem.profile,
        limit_problem.h1,
        run.numerics.nx,
        run.numerics.ny1,
        run.numerics.ny2,
    )?;
    let norm_disc = Discretization::new(&mesh, &limit_problem, &modes)?;

    let sigmas: Vec<f64> = (0..num_steps)
        .map(|k| sigma0 * 0.5f64.powi(k as i32))
        .collect();
    let mut jobs = sigmas.clone();
    jobs.push(0.0);
    let outcomes = map_indexed(jobs.len(), |k| {
        let problem = limit_problem.with_sigma(jobs[k]);
        Discretization::new(&mesh, &problem, &modes).and_then(|d| solve_discretized(&d))
    });

    let mut steps = Vec::new();
    let mut failures = Vec::new();
    let mut sigma0_solved = None;
    for (sigma, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(solved) if *sigma > 0.0 => steps.push(LapsStep {
                sigma: *sigma,
                field: solved.field,
                report: solved.report,
                delta: None,
                limit_gap: None,
            }),
            Ok(solved) => sigma0_solved = Some(solved),
            Err(err) => failures.push((*sigma, err.to_string())),
        }
    }

    for k in 0..steps.len() {
        if k + 1 < steps.len() {
            steps[k].delta = Some(l2_distance(&norm_disc, &steps[k].field, &steps[k + 1].field));
        }
        if let Some(limit) = &sigma0_solved {
            steps[k].limit_gap = Some(l2_distance(&norm_disc, &steps[k].field, &limit.field));
        }
    }
    let limit_gap = steps.last().and_then(|s| s.limit_gap);
    let fitted_rate = log_log_slope(
        &steps
            .iter()
            .filter_map(|s| s.limit_gap.map(|gap| (s.sigma, gap)))
            .collect::<Vec<_>>(),
    );

    Ok(LapsResult {
        sigmas,
        steps,
        failures,
        sigma0: sigma0_solved,
        limit_gap,
        fitted_rate,
    })
}

/// Solves the template once per absorption in `sigmas` and tabulates the
/// stability quotient; the datum norm is absorption-independent, so the rows
/// share it.  Row order follows the input order.
pub fn stability_sweep(run: &RunConfig, sigmas: &[f64]) -> Result<StabilitySweep> {
    if sigmas.is_empty() {
        return Err(Error::InvalidParameter(
            "stability sweep needs at least one absorption value".into(),
        ));
    }
    if let Some(&bad) = sigmas.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "absorption values must be finite and nonnegative, got {bad}"
        )));
    }
    let template = run.problem.with_sigma(0.0);
    let violations = template.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidConfig(violations));
    }
    let scalars = template.derive_scalars()?;
    let truncation = resolved_truncation(run)?;
    let modes = build_mode_set(&scalars, template.profile.period, truncation)?;
    let mesh = build_mesh(
        &template.profile,
        template.h1,
        run.numerics.nx,
        run.numerics.ny1,
        run.numerics.ny2,
    )?;

    let outcomes = map_indexed(sigmas.len(), |k| {
        let problem = template.with_sigma(sigmas[k]);
        Discretization::new(&mesh, &problem, &modes)
            .and_then(|d| solve_discretized(&d))
            .map(|solved| solved.report)
            .map_err(|err| err.to_string())
    });
    let rows: Vec<StabilityRow> = sigmas
        .iter()
        .zip(outcomes)
        .map(|(&sigma, outcome)| StabilityRow { sigma, outcome })
        .collect();
    let ratios: Vec<f64> = rows
        .iter()
        .filter_map(|row| row.outcome.as_ref().ok().map(|r| r.stability_ratio))
        .collect();
    let max_ratio = ratios.iter().copied().fold(None, |acc: Option<f64>, r| {
        Some(acc.map_or(r, |a| a.max(r)))
    });
    let min_ratio = ratios.iter().copied().fold(None, |acc: Option<f64>, r| {
        Some(acc.map_or(r, |a| a.min(r)))
    });
    Ok(StabilitySweep {
        rows,
        max_ratio,
        min_ratio,
    })
}

/// Writes one CSV row per report; shared by single solves and sweeps.
pub fn write_report_table<W: Write>(out: &mut W, reports: &[&SolveReport]) -> io::Result<()> {
    writeln!(
        out,
        "sigma,h1_norm,l2_norm,g_norm,stability_ratio,energy_residual,efficiency_sum,\
         absorbed_fraction,energy_defect,condition_estimate,linear_residual,truncation,n_unknowns"
    )?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.sigma,
            r.h1_norm,
            r.l2_norm,
            r.g_norm,
            r.stability_ratio,
            r.energy_residual,
            r.efficiency_sum,
            r.absorbed_fraction,
            r.energy_defect,
            r.condition_estimate,
            r.linear_residual,
            r.truncation,
            r.n_unknowns
        )?;
    }
    Ok(())
}

/// Dumps nodal values as `x1,x2,re,im,abs`, right column reconstructed
/// through the cell phase.
pub fn write_field_table<W: Write>(out: &mut W, mesh: &Mesh, field: &ComplexField) -> io::Result<()> {
    writeln!(out, "x1,x2,re,im,abs")?;
    for iy in 0..mesh.n_rows() {
        for ix in 0..=mesh.nx {
            let [x1, x2] = mesh.nodes[mesh.node_id(ix, iy)];
            let v = field.node_value(ix, iy);
            writeln!(out, "{},{},{},{},{}", x1, x2, v.re, v.im, v.norm())?;
        }
    }
    Ok(())
}

/// Writes the continuation table: one row per successful step, decreasing
/// absorption; `delta` and `limit_gap` columns are empty where the neighbor
/// or the limit solve is missing.
pub fn write_continuation_table<W: Write>(out: &mut W, laps: &LapsResult) -> io::Result<()> {
    writeln!(out, "sigma,delta,limit_gap")?;
    for step in &laps.steps {
        writeln!(
            out,
            "{},{},{}",
            step.sigma,
            step.delta.map(|d| d.to_string()).unwrap_or_default(),
            step.limit_gap.map(|g| g.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// One mesh level of an error study against the layered reference solution.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: usize,
    pub nx: usize,
    pub ny1: usize,
    pub ny2: usize,
    /// Horizontal cell width `period / nx`.
    pub h: f64,
    /// `L^2` distance between the solve and the nodal interpolant of the
    /// reference solution.
    pub l2_error: f64,
    /// `L^2` norm of the interpolated reference, for relative readings.
    pub reference_norm: f64,
    /// Dyadic rate `log2(previous error / this error)`; `None` on level 0.
    pub rate: Option<f64>,
}

/// Refinement study: per-level errors and rates plus the fitted slope.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log l2_error` against `log h`.
    pub fitted_rate: Option<f64>,
}

/// Solves the configuration on dyadically refined meshes and measures the
/// `L^2` distance to the layered reference solution at each level.
///
/// Level zero uses the numerics block as given; each further level doubles
/// all three mesh counts.  Only flat interfaces have a reference solution,
/// so corrugated profiles are rejected up front.
pub fn convergence_study(run: &RunConfig, levels: usize) -> Result<ConvergenceStudy> {
    if levels == 0 {
        return Err(Error::InvalidParameter(
            "a convergence study needs at least one mesh level".into(),
        ));
    }
    if !run.problem.profile.is_flat() {
        return Err(Error::OracleUnavailable(
            "the layered reference solution requires a flat interface profile".to_string(),
        ));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let scale = 1usize << level;
        let leveled = RunConfig {
            problem: run.problem.clone(),
            numerics: crate::config::NumericsConfig {
                nx: run.numerics.nx * scale,
                ny1: run.numerics.ny1 * scale,
                ny2: run.numerics.ny2 * scale,
                modes: run.numerics.modes,
            },
        };
        let solved = run_solve(&leveled)?;
        let mesh = &solved.mesh;
        let disc = Discretization::new(mesh, &leveled.problem, &solved.modes)?;
        let reference = solve_layered(&leveled.problem, &solved.modes, OracleOptions::default())?;
        let mut nodal = Vec::with_capacity(disc.n_unknowns());
        for iy in 0..=(mesh.ny1 + mesh.ny2) {
            for ix in 0..mesh.nx {
                let [x1, x2] = mesh.nodes[iy * (mesh.nx + 1) + ix];
                nodal.push(reference.field(x1, x2)?);
            }
        }
        let interpolant = ComplexField::new(&disc, nodal);
        let zero = ComplexField::new(
            &disc,
            vec![Complex64::new(0.0, 0.0); disc.n_unknowns()],
        );
        let l2_error = l2_distance(&disc, &solved.field, &interpolant);
        let reference_norm = l2_distance(&disc, &interpolant, &zero);
        let rate = rows
            .last()
            .filter(|prev| prev.l2_error > 0.0 && l2_error > 0.0)
            .map(|prev| (prev.l2_error / l2_error).log2());
        rows.push(ConvergenceRow {
            level,
            nx: leveled.numerics.nx,
            ny1: leveled.numerics.ny1,
            ny2: leveled.numerics.ny2,
            h: run.problem.profile.period / leveled.numerics.nx as f64,
            l2_error,
            reference_norm,
            rate,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.l2_error)).collect();
    let fitted_rate = log_log_slope(&points);
    Ok(ConvergenceStudy { rows, fitted_rate })
}

/// Writes the refinement study as CSV, one row per mesh level.
pub fn write_convergence_table<W: Write>(
    out: &mut W,
    study: &ConvergenceStudy,
) -> io::Result<()> {
    writeln!(out, "level,nx,ny1,ny2,h,l2_error,reference_norm,rate")?;
    for r in &study.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.level,
            r.nx,
            r.ny1,
            r.ny2,
            r.h,
            r.l2_error,
            r.reference_norm,
            r.rate.map(|x| x.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Writes the stability table: quotient and norms per absorption; failed
/// rows carry the message in the `error` column.
pub fn write_stability_table<W: Write>(out: &mut W, sweep: &StabilitySweep) -> io::Result<()> {
    writeln!(out, "sigma,stability_ratio,h1_norm,g_norm,efficiency_sum,error")?;
    for row in &sweep.rows {
        match &row.outcome {
            Ok(r) => writeln!(
                out,
                "{},{},{},{},{},",
                row.sigma, r.stability_ratio, r.h1_norm, r.g_norm, r.efficiency_sum
            )?,
            Err(message) => writeln!(
                out,
                "{},,,,,{}",
                row.sigma,
                message.replace(',', ";").replace('\n', " ")
            )?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NumericsConfig;
    use crate::problem::{GratingProfile, ProblemConfig};

    fn reference_problem() -> ProblemConfig {
        ProblemConfig {
            profile: GratingProfile {
                period: 2.0 * std::f64::consts::PI,
                mean: 1.0,
                cosine: vec![0.2],
                sine: vec![],
            },
            h1: 2.0,
            eps1: 1.0,
            mu1: 1.0,
            eps2: -2.0,
            mu2: -1.0,
            omega: 1.0,
            theta: 0.0,
            sigma: 0.0,
        }
    }

    fn small_numerics() -> NumericsConfig {
        NumericsConfig {
            nx: 24,
            ny1: 10,
            ny2: 10,
            modes: None,
        }
    }

    #[test]
    fn reference_solve_meets_residual_contracts() {
        let run = RunConfig {
            problem: reference_problem(),
            numerics: NumericsConfig::default(),
        };
        let solved = run_solve(&run).unwrap();
        let r = &solved.report;
        assert!(r.linear_residual <= 1e-10, "residual {}", r.linear_residual);
        assert!(
            r.energy_residual <= 1e-8 * r.h1_norm.powi(2).max(1.0),
            "energy residual {}",
            r.energy_residual
        );
        assert!(r.condition_estimate >= RCOND_FLOOR);
        assert!(r.g_norm > 0.0 && r.stability_ratio > 0.0);
        // Lossless cell: the reflected budget closes on its own.
        assert!(r.absorbed_fraction.abs() < 1e-13);
        assert!((r.efficiency_sum - 1.0).abs() < 1e-3, "sum {}", r.efficiency_sum);
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let run = RunConfig {
            problem: reference_problem(),
            numerics: small_numerics(),
        };
        let a = run_solve(&run).unwrap();
        let b = run_solve(&run).unwrap();
        assert_eq!(a.field.coefficients().len(), b.field.coefficients().len());
        for (x, y) in a.field.coefficients().iter().zip(b.field.coefficients()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        assert_eq!(a.report.h1_norm.to_bits(), b.report.h1_norm.to_bits());
    }

    #[test]
    fn homogeneous_slab_reflects_the_whole_budget() {
        // With identical materials on both sides of the interface the cell is
        // a plain dielectric slab over the mirror plane: everything reflects.
        let mut problem = reference_problem();
        problem.eps2 = 1.0;
        problem.mu2 = 1.0;
        let run = RunConfig {
            problem,
            numerics: NumericsConfig::default(),
        };
        assert!(matches!(run_solve(&run), Err(Error::InvalidConfig(_))));
        let options = SolveOptions {
            allow_nonnegative_lower_permittivity: true,
        };
        let solved = run_solve_with(&run, &options).unwrap();
        assert!(
            (solved.report.efficiency_sum - 1.0).abs() < 1e-3,
            "sum {}",
            solved.report.efficiency_sum
        );
    }

    #[test]
    fn zero_datum_keeps_the_field_exactly_zero() {
        let problem = reference_problem();
        let scalars = problem.derive_scalars().unwrap();
        let modes = build_mode_set(&scalars, problem.profile.period, 0).unwrap();
        let mesh = build_mesh(&problem.profile, problem.h1, 12, 4, 4).unwrap();
        let disc = Discretization::new(&mesh, &problem, &modes).unwrap();
        let lu = disc.assemble_matrix().factorize().unwrap();
        let mut x = vec![Complex64::new(0.0, 0.0); disc.n_unknowns()];
        lu.solve(&mut x).unwrap();
        assert!(x.iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn continuation_halves_exactly_and_closes_on_the_limit() {
        let run = RunConfig {
            problem: reference_problem(),
            numerics: small_numerics(),
        };
        let laps = laps_continuation(&run, 1.0, 6).unwrap();
        assert_eq!(laps.sigmas.len(), 6);
        for pair in laps.sigmas.windows(2) {
            assert!(pair[0] > pair[1]);
            assert_eq!(pair[0] / pair[1], 2.0);
        }
        assert!(laps.failures.is_empty(), "failures: {:?}", laps.failures);
        assert_eq!(laps.steps.len(), 6);
        let limit = laps.sigma0.as_ref().expect("limit solve");
        assert_eq!(limit.report.sigma, 0.0);
        let gaps: Vec<f64> = laps.steps.iter().map(|s| s.limit_gap.unwrap()).collect();
        assert!(
            gaps.last().unwrap() < gaps.first().unwrap(),
            "gaps {gaps:?}"
        );
        assert!(laps.limit_gap.unwrap() > 0.0);
        assert!(laps.steps[0].delta.is_some() && laps.steps[5].delta.is_none());
        assert!(laps.fitted_rate.is_some());
    }

    #[test]
    fn sweep_shares_the_datum_norm_and_matches_the_direct_solve() {
        let run = RunConfig {
            problem: reference_problem(),
            numerics: small_numerics(),
        };
        let sweep = stability_sweep(&run, &[0.5, 0.0, 0.125]).unwrap();
        assert_eq!(sweep.rows.len(), 3);
        let reports: Vec<&SolveReport> = sweep
            .rows
            .iter()
            .map(|row| row.outcome.as_ref().unwrap())
            .collect();
        assert_eq!(reports[0].g_norm.to_bits(), reports[1].g_norm.to_bits());
        assert_eq!(reports[0].g_norm.to_bits(), reports[2].g_norm.to_bits());
        let direct = run_solve(&run.clone()).unwrap();
        assert_eq!(
            reports[1].h1_norm.to_bits(),
            direct.report.h1_norm.to_bits()
        );
        assert!(sweep.max_ratio.unwrap() >= sweep.min_ratio.unwrap());
    }

    #[test]
    fn damped_solve_closes_the_energy_budget() {
        let mut problem = reference_problem();
        problem.sigma = 0.3;
        let run = RunConfig {
            problem,
            numerics: small_numerics(),
        };
        let solved = run_solve(&run).unwrap();
        let r = &solved.report;
        assert!(r.absorbed_fraction > 1e-3, "absorbed {}", r.absorbed_fraction);
        assert!(r.energy_defect < 1e-6, "defect {}", r.energy_defect);
        assert!(r.efficiency_sum < 1.0);
    }

    #[test]
    fn field_accessors_respect_the_cell_phase() {
        let mut problem = reference_problem();
        problem.theta = 0.3;
        let run = RunConfig {
            problem,
            numerics: small_numerics(),
        };
        let solved = run_solve(&run).unwrap();
        let field = &solved.field;
        let rows = run.numerics.ny1 + run.numerics.ny2 + 1;
        for iy in 0..rows {
            let wrapped = field.node_value(run.numerics.nx, iy);
            let folded = field.phase() * field.node_value(0, iy);
            assert!((wrapped - folded).norm() == 0.0);
        }
        assert_eq!(field.trace_top().len(), run.numerics.nx);
        assert_eq!(field.trace_interface().len(), run.numerics.nx);
        let lower = field.restrict(Region::Lower);
        let upper = field.restrict(Region::Upper);
        assert_eq!(lower.len(), (run.numerics.ny2 + 1) * run.numerics.nx);
        assert_eq!(upper.len(), (run.numerics.ny1 + 1) * run.numerics.nx);
        assert_eq!(
            lower[run.numerics.ny2 * run.numerics.nx],
            upper[0]
        );
    }

    #[test]
    fn explicit_truncation_needs_enough_trace_samples() {
        let run = RunConfig {
            problem: reference_problem(),
            numerics: NumericsConfig {
                nx: 12,
                ny1: 4,
                ny2: 4,
                modes: Some(3),
            },
        };
        match run_solve(&run) {
            Err(Error::TruncationMismatch { required, nx, .. }) => {
                assert_eq!(required, 16);
                assert_eq!(nx, 12);
            }
            other => panic!("expected truncation mismatch, got ok={}", other.is_ok()),
        }
    }

    #[test]
    fn report_and_table_writers_emit_headers_and_rows() {
        let run = RunConfig {
            problem: reference_problem(),
            numerics: small_numerics(),
        };
        let solved = run_solve(&run).unwrap();
        let mut report_csv = Vec::new();
        write_report_table(&mut report_csv, &[&solved.report]).unwrap();
        let text = String::from_utf8(report_csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("sigma,"));

        let mut field_csv = Vec::new();
        write_field_table(&mut field_csv, &solved.mesh, &solved.field).unwrap();
        let text = String::from_utf8(field_csv).unwrap();
        let rows = (run.numerics.ny1 + run.numerics.ny2 + 1) * (run.numerics.nx + 1);
        assert_eq!(text.lines().count(), rows + 1);

        let laps = laps_continuation(&run, 0.5, 2).unwrap();
        let mut continuation_csv = Vec::new();
        write_continuation_table(&mut continuation_csv, &laps).unwrap();
        let text = String::from_utf8(continuation_csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), "sigma,delta,limit_gap");
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn flat_study_converges_at_second_order() {
        let mut problem = reference_problem();
        problem.profile = GratingProfile::flat(problem.profile.period, 1.0);
        let run = RunConfig {
            problem,
            numerics: NumericsConfig {
                nx: 8,
                ny1: 4,
                ny2: 4,
                modes: None,
            },
        };
        let study = convergence_study(&run, 3).unwrap();
        assert_eq!(study.rows.len(), 3);
        assert!(study.rows[0].rate.is_none());
        for pair in study.rows.windows(2) {
            assert!(pair[1].l2_error < pair[0].l2_error);
            assert!((pair[0].h / pair[1].h - 2.0).abs() < 1e-15);
        }
        let fitted = study.fitted_rate.unwrap();
        assert!(fitted > 1.8, "fitted rate {fitted}");
        let mut csv = Vec::new();
        write_convergence_table(&mut csv, &study).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("level,"));
    }

    #[test]
    fn corrugated_profiles_have_no_reference_solution() {
        let run = RunConfig {
            problem: reference_problem(),
            numerics: small_numerics(),
        };
        assert!(matches!(
            convergence_study(&run, 2),
            Err(Error::OracleUnavailable(_))
        ));
    }
}
