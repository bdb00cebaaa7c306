//! Ginzburg-Landau energy of the Allen-Cahn model, the history-centered
//! quadratic that makes the iteration monotone, and the dissipation checks.

use crate::engine::{history_term, step_with_observer, History, StepConfig, StepReport};
use crate::error::{Result, SbdfError};
use crate::grid::{grad_norm_sq, l2_distance, linf_norm, Field};
use crate::model::NonlinearModel;
use crate::scheme::SchemeCoeffs;

/// Relative slack applied by both dissipation checks.
pub const ENERGY_SLACK: f64 = 1e-10;

#[inline]
pub fn double_well(u: f64) -> f64 {
    let s = u * u - 1.0;
    0.25 * s * s
}

/// `alpha / 2 * |grad u|^2 + h^2 * sum F(u)`.
pub fn discrete_energy(u: &Field, alpha: f64) -> f64 {
    let g = *u.grid();
    let nx = g.nx();
    let potential = g.reduce_rows(|j| {
        u.values()[j * nx..(j + 1) * nx]
            .iter()
            .map(|&v| double_well(v))
            .sum::<f64>()
    });
    0.5 * alpha * grad_norm_sq(u) + g.h() * g.h() * potential
}

/// The quadratic `(a0 + B dt) / (2 dt) * ||u - H / (beta a0 + beta B dt)||^2`
/// for a fixed history term `H`.
#[derive(Clone, Debug)]
pub struct AuxFunctional {
    center: Field,
    weight: f64,
}

impl AuxFunctional {
    pub fn new(hist_term: &Field, coeffs: &SchemeCoeffs, b: f64, dt: f64) -> Self {
        let scale = coeffs.beta * (coeffs.a0() + b * dt);
        Self {
            center: hist_term.map(|v| v / scale),
            weight: (coeffs.a0() + b * dt) / (2.0 * dt),
        }
    }

    pub fn eval(&self, u: &Field) -> Result<f64> {
        Ok(self.weight * l2_distance(u, &self.center)?.powi(2))
    }
}

pub fn aux_functional(
    u: &Field,
    hist_term: &Field,
    coeffs: &SchemeCoeffs,
    b: f64,
    dt: f64,
) -> Result<f64> {
    AuxFunctional::new(hist_term, coeffs, b, dt).eval(u)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    pub e_h: f64,
    pub h_k: f64,
    pub augmented: f64,
    pub linf: f64,
}

impl EnergyRecord {
    pub fn new(t: f64, e_h: f64, h_k: f64, linf: f64) -> Self {
        Self {
            t,
            e_h,
            h_k,
            augmented: e_h + h_k,
            linf,
        }
    }
}

/// Augmented energy at the start and end of one step, both measured with
/// that step's history term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEnergy {
    pub t: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub index: usize,
    /// Observed change of the monitored quantity.
    pub change: f64,
    /// Largest change the inequality allows, slack included.
    pub allowed: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DissipationReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl DissipationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: DissipationReport) {
        let offset = self.checked;
        self.checked += other.checked;
        self.violations.extend(other.violations.into_iter().map(|mut v| {
            v.index += offset;
            v
        }));
    }
}

/// `a0 / (2 dt) + B / 2`.
pub fn iteration_constant(coeffs: &SchemeCoeffs, b: f64, dt: f64) -> f64 {
    coeffs.a0() / (2.0 * dt) + 0.5 * b
}

/// Checks `E[m+1] - E[m] <= -c * delta[m]^2 + slack(E[m])` for every `m`,
/// where `delta[m]` is the norm of the update that produced iterate `m + 1`.
pub fn check_iteration_dissipation(
    augmented: &[f64],
    deltas: &[f64],
    constant: f64,
) -> Result<DissipationReport> {
    if augmented.len() > 1 && deltas.len() + 1 != augmented.len() {
        return Err(SbdfError::InvalidParameter {
            name: "deltas",
            reason: format!(
                "{} energies need {} increments, got {}",
                augmented.len(),
                augmented.len() - 1,
                deltas.len()
            ),
        });
    }
    let mut report = DissipationReport::default();
    for (m, (pair, d)) in augmented.windows(2).zip(deltas).enumerate() {
        report.checked += 1;
        let change = pair[1] - pair[0];
        let allowed = -constant * d * d + ENERGY_SLACK * (1.0 + pair[0].abs());
        if !(change <= allowed) {
            report.violations.push(Violation {
                index: m,
                change,
                allowed,
            });
        }
    }
    Ok(report)
}

/// Checks `end <= start + slack(start)` for every step.
pub fn check_step_dissipation(steps: &[StepEnergy]) -> DissipationReport {
    let mut report = DissipationReport::default();
    for (n, s) in steps.iter().enumerate() {
        report.checked += 1;
        let change = s.end - s.start;
        let allowed = ENERGY_SLACK * (1.0 + s.start.abs());
        if !(change <= allowed) {
            report.violations.push(Violation {
                index: n,
                change,
                allowed,
            });
        }
    }
    report
}

/// Energies observed during one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEnergyTrace {
    /// End-of-step record; `h_k` uses this step's history term.
    pub record: EnergyRecord,
    pub step: StepEnergy,
    /// Augmented energy of every clamped iterate, starting with the initial
    /// guess. Empty unless iterate tracing was requested.
    pub iterate_energies: Vec<f64>,
    /// `||aux^(m+1) - iterate^(m)||` for each sweep, aligned with the gaps of
    /// `iterate_energies`.
    pub deltas: Vec<f64>,
    /// `||iterate^(m+1) - iterate^(m)||`, the clamped increments. They differ
    /// from `deltas` only where the cut-off moved a node.
    pub increments: Vec<f64>,
    /// Full records of the iterates after the initial guess, all stamped
    /// with the step's end time.
    pub iterates: Vec<EnergyRecord>,
}

impl StepEnergyTrace {
    pub fn check_iterations(&self, coeffs: &SchemeCoeffs, b: f64, dt: f64) -> Result<DissipationReport> {
        check_iteration_dissipation(
            &self.iterate_energies,
            &self.deltas,
            iteration_constant(coeffs, b, dt),
        )
    }
}

/// One step of a scalar Allen-Cahn type model with energy bookkeeping.
pub fn step_with_energy(
    coeffs: &SchemeCoeffs,
    hist: &History,
    model: &NonlinearModel,
    cfg: &StepConfig,
    per_iterate: bool,
) -> Result<(Field, StepReport, StepEnergyTrace)> {
    let b = model.b();
    let alpha = model.alpha();
    let aux = AuxFunctional::new(&history_term(coeffs, hist, b)?, coeffs, b, hist.dt());
    let t_next = hist.t() + hist.dt();
    let record_of = |u: &Field| -> Result<EnergyRecord> {
        Ok(EnergyRecord::new(t_next, discrete_energy(u, alpha), aux.eval(u)?, linf_norm(u)))
    };
    let start = record_of(&hist.latest()[0])?.augmented;
    let mut energies = Vec::new();
    let mut deltas = Vec::new();
    let mut increments = Vec::new();
    let mut iterates = Vec::new();
    let mut failure = None;
    if per_iterate {
        energies.push(start);
    }
    let (mut state, report) = step_with_observer(coeffs, hist, model, cfg, |view| {
        if !per_iterate || failure.is_some() {
            return;
        }
        let step = l2_distance(&view.auxiliary[0], &view.previous[0]);
        let energy = record_of(&view.algorithmic[0]);
        match (step, energy) {
            (Ok(d), Ok(r)) => {
                deltas.push(d);
                increments.push(view.increment);
                energies.push(r.augmented);
                iterates.push(r);
            }
            (Err(e), _) | (_, Err(e)) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let u = state.swap_remove(0);
    let record = record_of(&u)?;
    let trace = StepEnergyTrace {
        step: StepEnergy {
            t: record.t,
            start,
            end: record.augmented,
        },
        record,
        iterate_energies: energies,
        deltas,
        increments,
        iterates,
    };
    Ok((u, report, trace))
}
