//! The five subcommands.

use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbdf_core::energy::{discrete_energy, step_with_energy, DissipationReport, EnergyRecord, StepEnergy};
use sbdf_core::energy::check_step_dissipation;
use sbdf_core::model::{prostate_initials, ProstateModel};
use sbdf_core::reference::{ExponentialIntegrator, DENSE_CAP};
use sbdf_core::{
    ac_initial, ac_reaction, allen_cahn, bootstrap, grad_norm_sq, l2_distance, linf_norm, scheme_coeffs,
    step_with_observer, Field, GridSpec, Integrator, NonlinearModel, ReactionSystem, StepConfig,
};

use crate::config::{snapshot_steps, step_count, InitialKind, Settings};
use crate::error::{HarnessError, Result};
use crate::output::{snapshot_name, Cell, Csv, OutputDir};

fn config_err(key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn seconds(on: bool, start: Instant) -> f64 {
    if on {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Allen-Cahn model, grid and initial field described by `s`.
pub fn ac_problem(s: &Settings) -> Result<(NonlinearModel, Field)> {
    let model = allen_cahn(s.model.epsilon, s.model.b).map_err(|e| config_err("model.b", e.to_string()))?;
    let grid = GridSpec::square(s.grid.n, s.grid.length, s.grid.bc)
        .map_err(|e| config_err("grid.n", e.to_string()))?;
    let mut u0 = match s.initial.kind {
        InitialKind::Example => ac_initial(grid),
        InitialKind::Zero => Field::zeros(grid),
        InitialKind::Constant => Field::constant(grid, s.initial.value),
        InitialKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.initial.seed);
            let a = s.initial.amplitude;
            Field::from_fn(grid, |_, _| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 })
        }
    };
    u0.zero_constrained();
    Ok((model, u0))
}

#[derive(Clone, Debug, Default)]
pub struct MarchOptions {
    pub energy: bool,
    pub mbp: bool,
    pub per_iterate: bool,
    /// Step indices whose state is kept.
    pub keep: Vec<usize>,
    pub timings: bool,
}

/// Everything recorded by one Allen-Cahn time march.
#[derive(Clone, Debug)]
pub struct March {
    pub last: Field,
    /// One row per step, or per iterate. Rows of the starting levels carry
    /// `h_k = 0` since they precede the first full-order step.
    pub energy: Vec<EnergyRecord>,
    /// `(t, linf)` rows, same layout as `energy`.
    pub mbp: Vec<(f64, f64)>,
    /// Augmented energy across every full-order step.
    pub steps: Vec<StepEnergy>,
    /// Iterate-level decrement checks; empty unless iterates were traced.
    pub iterations: DissipationReport,
    /// Fixed-point sweeps, bootstrap included.
    pub iters: usize,
    pub seconds: f64,
    pub kept: Vec<(usize, Field)>,
}

impl March {
    pub fn max_linf(&self) -> f64 {
        self.mbp.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

/// Marches `u0` over `steps` steps of order `k`. `t_key` names the setting
/// blamed when the run is too short for the starting levels.
#[allow(clippy::too_many_arguments)]
pub fn march_allen_cahn(
    model: &NonlinearModel,
    u0: &Field,
    k: usize,
    dt: f64,
    steps: usize,
    cfg: &StepConfig,
    opts: &MarchOptions,
    t_key: &str,
) -> Result<March> {
    if steps + 1 < k {
        return Err(config_err(t_key, format!("order {k} needs at least {} steps, got {steps}", k - 1)));
    }
    let start = Instant::now();
    let coeffs = scheme_coeffs(k).map_err(HarnessError::during("setup"))?;
    let (mut hist, boot) =
        bootstrap(model, vec![u0.clone()], 0.0, k, dt, cfg).map_err(HarnessError::during("bootstrap"))?;
    let mut out = March {
        last: u0.clone(),
        energy: Vec::new(),
        mbp: Vec::new(),
        steps: Vec::new(),
        iterations: DissipationReport::default(),
        iters: boot.total_iters,
        seconds: 0.0,
        kept: Vec::new(),
    };
    let alpha = model.alpha();
    for n in 0..k {
        let u = &hist.level(k - 1 - n)[0];
        let t = n as f64 * dt;
        let linf = linf_norm(u);
        if opts.energy {
            out.energy.push(EnergyRecord::new(t, discrete_energy(u, alpha), 0.0, linf));
        }
        if opts.mbp {
            out.mbp.push((t, linf));
        }
        if opts.keep.contains(&n) {
            out.kept.push((n, u.clone()));
        }
    }
    for n in k..=steps {
        let t = n as f64 * dt;
        let u = if opts.energy {
            let (u, rep, trace) =
                step_with_energy(&coeffs, &hist, model, cfg, opts.per_iterate).map_err(HarnessError::at_step(n))?;
            out.iters += rep.iters;
            out.steps.push(StepEnergy { t, ..trace.step });
            if opts.per_iterate {
                let check = trace
                    .check_iterations(&coeffs, model.b(), dt)
                    .map_err(HarnessError::at_step(n))?;
                out.iterations.merge(check);
                for r in &trace.iterates {
                    out.energy.push(EnergyRecord { t, ..*r });
                    if opts.mbp {
                        out.mbp.push((t, r.linf));
                    }
                }
            } else {
                out.energy.push(EnergyRecord { t, ..trace.record });
                if opts.mbp {
                    out.mbp.push((t, rep.linf));
                }
            }
            u
        } else {
            let mut lin = Vec::new();
            let (mut state, rep) = step_with_observer(&coeffs, &hist, model, cfg, |v| {
                if opts.mbp && opts.per_iterate {
                    lin.push(linf_norm(&v.algorithmic[0]));
                }
            })
            .map_err(HarnessError::at_step(n))?;
            out.iters += rep.iters;
            if opts.mbp {
                if opts.per_iterate {
                    out.mbp.extend(lin.into_iter().map(|l| (t, l)));
                } else {
                    out.mbp.push((t, rep.linf));
                }
            }
            state.swap_remove(0)
        };
        if opts.keep.contains(&n) {
            out.kept.push((n, u.clone()));
        }
        hist.push(vec![u], k);
    }
    out.seconds = seconds(opts.timings, start);
    out.last = hist.latest()[0].clone();
    Ok(out)
}

fn energy_csv(rows: &[EnergyRecord]) -> Csv {
    let mut csv = Csv::new(&["t", "E_h", "H_k", "augmented", "linf"]);
    for r in rows {
        csv.row(&[r.t.into(), r.e_h.into(), r.h_k.into(), r.augmented.into(), r.linf.into()]);
    }
    csv
}

fn mbp_csv(rows: &[(f64, f64)]) -> Csv {
    let mut csv = Csv::new(&["t", "linf"]);
    for &(t, l) in rows {
        csv.row(&[t.into(), l.into()]);
    }
    csv
}

fn note(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn grid_note(n: usize, production: usize) -> (String, String) {
    note(
        "grid.substitution",
        format!("{n}x{n} desk-scale grid in place of {production}x{production}"),
    )
}

pub struct RunOutcome {
    pub march: March,
    pub out: OutputDir,
}

/// Single Allen-Cahn run: final snapshot, traces and manifest.
pub fn run(s: &Settings) -> Result<RunOutcome> {
    let (model, u0) = ac_problem(s)?;
    let sc = &s.scheme;
    let steps = step_count(sc.t_final, sc.dt, "scheme.t_final")?;
    let mut snaps = snapshot_steps(&s.output.snapshot_times, sc.dt, steps, "output.snapshot_times")?;
    if !snaps.iter().any(|(n, _)| *n == steps) {
        snaps.push((steps, format!("{}", sc.t_final)));
    }
    let opts = MarchOptions {
        energy: s.output.energy,
        mbp: s.output.mbp,
        per_iterate: s.output.per_iterate,
        keep: snaps.iter().map(|p| p.0).collect(),
        timings: s.output.timings,
    };
    info!("run: k={} dt={} steps={steps} grid {}^2", sc.k, sc.dt, s.grid.n);
    let march = march_allen_cahn(&model, &u0, sc.k, sc.dt, steps, &sc.step, &opts, "scheme.t_final")?;

    let mut out = OutputDir::create(&s.output.dir)?;
    for (n, label) in &snaps {
        let field = &march.kept.iter().find(|p| p.0 == *n).expect("kept every snapshot step").1;
        out.snapshot(&snapshot_name(label, None), field)?;
    }
    if opts.energy {
        out.csv("energy_trace.csv", energy_csv(&march.energy))?;
    }
    if opts.mbp {
        out.csv("mbp_trace.csv", mbp_csv(&march.mbp))?;
    }
    let mut notes = vec![
        grid_note(s.grid.n, 2048),
        note("steps", steps),
        note("fixed_point_sweeps", march.iters),
        note("max_linf", format!("{:?}", march.max_linf())),
    ];
    if opts.energy {
        let r = check_step_dissipation(&march.steps);
        notes.push(note("step_energy_violations", format!("{} of {}", r.violations.len(), r.checked)));
    }
    if opts.energy && opts.per_iterate {
        let r = &march.iterations;
        notes.push(note("iteration_energy_violations", format!("{} of {}", r.violations.len(), r.checked)));
    }
    out.manifest("run", &s.echo, &notes)?;
    Ok(RunOutcome { march, out })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub error: f64,
    /// `log(err_prev / err) / log(dt_prev / dt)`; undefined on the first row.
    pub order: Option<f64>,
    pub iters: usize,
    pub seconds: f64,
}

fn observed_order(prev: Option<(f64, f64)>, dt: f64, err: f64) -> Option<f64> {
    prev.map(|(pdt, perr)| (perr / err).ln() / (pdt / dt).ln())
}

fn reference_dt(list: &[f64], given: Option<f64>) -> f64 {
    given.unwrap_or_else(|| list.iter().copied().fold(f64::INFINITY, f64::min) / 16.0)
}

pub struct ConvergeOutcome {
    pub tables: Vec<(usize, Vec<ConvergenceRow>)>,
    pub out: OutputDir,
}

/// Temporal errors against a fine reference on the same grid.
pub fn converge(s: &Settings) -> Result<ConvergeOutcome> {
    let (model, u0) = ac_problem(s)?;
    let c = &s.converge;
    let t_final = s.scheme.t_final;
    let cfg = s.scheme.step;
    let ref_dt = reference_dt(&c.dt_list, c.reference_dt);
    let ref_steps = step_count(t_final, ref_dt, "converge.reference_dt")?;
    let counts = c
        .dt_list
        .iter()
        .map(|&dt| step_count(t_final, dt, "converge.dt_list"))
        .collect::<Result<Vec<_>>>()?;
    info!("converge: reference k={} dt={ref_dt} ({ref_steps} steps)", c.reference_k);
    let quiet = MarchOptions::default();
    let reference = march_allen_cahn(&model, &u0, c.reference_k, ref_dt, ref_steps, &cfg, &quiet, "converge.reference_dt")?;

    let timed = MarchOptions {
        timings: s.output.timings,
        ..MarchOptions::default()
    };
    let mut tables = Vec::new();
    for &k in &c.orders {
        let mut rows = Vec::new();
        let mut prev = None;
        for (&dt, &steps) in c.dt_list.iter().zip(&counts) {
            let m = march_allen_cahn(&model, &u0, k, dt, steps, &cfg, &timed, "scheme.t_final")?;
            let error = l2_distance(&m.last, &reference.last).map_err(HarnessError::during("error evaluation"))?;
            info!("converge: k={k} dt={dt} error={error:e}");
            rows.push(ConvergenceRow {
                dt,
                error,
                order: observed_order(prev, dt, error),
                iters: m.iters,
                seconds: m.seconds,
            });
            prev = Some((dt, error));
        }
        tables.push((k, rows));
    }

    let mut out = OutputDir::create(&s.output.dir)?;
    let single = tables.len() == 1;
    for (k, rows) in &tables {
        let mut csv = Csv::new(&["dt", "error", "order", "iters", "seconds"]);
        for r in rows {
            csv.row(&[r.dt.into(), r.error.into(), r.order.into(), r.iters.into(), r.seconds.into()]);
        }
        let name = if single { "convergence.csv".to_string() } else { format!("convergence_k{k}.csv") };
        out.csv(&name, csv)?;
    }
    let notes = [
        grid_note(s.grid.n, 2048),
        note("reference", format!("order {} at dt {ref_dt:?}", c.reference_k)),
    ];
    out.manifest("converge", &s.echo, &notes)?;
    Ok(ConvergeOutcome { tables, out })
}

/// Errors, orders and wall times of the four schemes at one step size.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub dt: f64,
    /// sBDF1, ETD1, sBDF2, ETDRK2, in that order.
    pub error: [f64; 4],
    pub order: [Option<f64>; 4],
    pub seconds: [f64; 4],
}

pub const COMPARED: [&str; 4] = ["sbdf1", "etd1", "sbdf2", "etdrk2"];

pub struct CompareOutcome {
    pub rows: Vec<ComparisonRow>,
    pub out: OutputDir,
}

/// Runs an exponential integrator for `steps` steps; `second` selects
/// ETDRK2 over ETD1.
fn march_etd(etd: &ExponentialIntegrator, u0: &Field, b: f64, dt: f64, steps: usize, second: bool) -> Result<Field> {
    let n = |v: f64| ac_reaction(v) + b * v;
    let mut u = u0.clone();
    for s in 1..=steps {
        u = if second { etd.etdrk2_step(&u, dt, &n) } else { etd.etd1_step(&u, dt, &n) }
            .map_err(HarnessError::at_step(s))?;
    }
    Ok(u)
}

/// sBDF1 against ETD1 and sBDF2 against ETDRK2 on a small grid.
pub fn compare_etd(s: &Settings) -> Result<CompareOutcome> {
    let (model, u0) = ac_problem(s)?;
    let grid = *u0.grid();
    if grid.unknown_count() > DENSE_CAP {
        return Err(config_err(
            "grid.n",
            format!("{} unknowns exceed the dense oracle cap of {DENSE_CAP}", grid.unknown_count()),
        ));
    }
    let c = &s.compare;
    let t_final = s.scheme.t_final;
    let cfg = s.scheme.step;
    let b = model.b();
    let ref_dt = reference_dt(&c.dt_list, c.reference_dt);
    let ref_steps = step_count(t_final, ref_dt, "compare.reference_dt")?;
    let counts = c
        .dt_list
        .iter()
        .map(|&dt| step_count(t_final, dt, "compare.dt_list"))
        .collect::<Result<Vec<_>>>()?;
    let quiet = MarchOptions::default();
    let reference = march_allen_cahn(&model, &u0, 4, ref_dt, ref_steps, &cfg, &quiet, "compare.reference_dt")?;
    let etd = ExponentialIntegrator::separable(grid, model.alpha(), b).map_err(HarnessError::during("ETD setup"))?;

    let run_one = |which: usize, dt: f64, steps: usize| -> Result<(Field, f64)> {
        let start = Instant::now();
        let u = match which {
            0 | 2 => march_allen_cahn(&model, &u0, which / 2 + 1, dt, steps, &cfg, &quiet, "scheme.t_final")?.last,
            1 => march_etd(&etd, &u0, b, dt, steps, false)?,
            _ => march_etd(&etd, &u0, b, dt, steps, true)?,
        };
        Ok((u, seconds(s.output.timings, start)))
    };
    // warm-up, discarded
    for which in 0..4 {
        run_one(which, c.dt_list[0], counts[0])?;
    }
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for (&dt, &steps) in c.dt_list.iter().zip(&counts) {
        let mut row = ComparisonRow {
            dt,
            error: [0.0; 4],
            order: [None; 4],
            seconds: [0.0; 4],
        };
        for which in 0..4 {
            let (u, secs) = run_one(which, dt, steps)?;
            let err = l2_distance(&u, &reference.last).map_err(HarnessError::during("error evaluation"))?;
            row.error[which] = err;
            row.seconds[which] = secs;
            row.order[which] = observed_order(rows.last().map(|p| (p.dt, p.error[which])), dt, err);
        }
        info!("compare-etd: dt={dt} errors {:?}", row.error);
        rows.push(row);
    }

    let mut header = vec!["dt".to_string()];
    for name in COMPARED {
        for col in ["error", "order", "seconds"] {
            header.push(format!("{name}_{col}"));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for r in &rows {
        let mut cells = vec![Cell::F(r.dt)];
        for w in 0..4 {
            cells.extend::<[Cell; 3]>([r.error[w].into(), r.order[w].into(), r.seconds[w].into()]);
        }
        csv.row(&cells);
    }
    let mut out = OutputDir::create(&s.output.dir)?;
    out.csv("comparison.csv", csv)?;
    let notes = [
        grid_note(s.grid.n, 512),
        note("reference", format!("order 4 at dt {ref_dt:?}")),
        note("etd", "per-axis eigenbasis of the five-point operator minus B; N(u) = f(u) + B u"),
        note("timing", "march loop only, after one discarded warm-up pass"),
    ];
    out.manifest("compare-etd", &s.echo, &notes)?;
    Ok(CompareOutcome { rows, out })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MbpRun {
    pub k: usize,
    pub dt: f64,
    pub steps: usize,
    pub max_linf: f64,
    pub trace: Vec<(f64, f64)>,
}

pub struct MbpOutcome {
    pub runs: Vec<MbpRun>,
    pub out: OutputDir,
}

/// Long runs recording the max norm at every step, one directory per
/// `(k, dt)` pair.
pub fn mbp_longrun(s: &Settings) -> Result<MbpOutcome> {
    let (model, u0) = ac_problem(s)?;
    let m = &s.mbp;
    let opts = MarchOptions {
        mbp: true,
        ..MarchOptions::default()
    };
    let mut out = OutputDir::create(&s.output.dir)?;
    let mut runs = Vec::new();
    let mut summary = Csv::new(&["k", "dt", "steps", "max_linf"]);
    for &k in &m.orders {
        for &dt in &m.dt_list {
            let steps = step_count(m.t_final, dt, "mbp.dt_list")?;
            let cfg = StepConfig {
                cutoff_enabled: if k == 1 { m.k1_cutoff } else { true },
                ..s.scheme.step
            };
            let march = march_allen_cahn(&model, &u0, k, dt, steps, &cfg, &opts, "mbp.t_final")?;
            let max_linf = march.max_linf();
            info!("mbp-longrun: k={k} dt={dt} max linf {max_linf:?}");
            out.csv(&format!("k{k}_dt{dt}/mbp_trace.csv"), mbp_csv(&march.mbp))?;
            summary.row(&[k.into(), dt.into(), steps.into(), max_linf.into()]);
            runs.push(MbpRun {
                k,
                dt,
                steps,
                max_linf,
                trace: march.mbp,
            });
        }
    }
    out.csv("mbp_summary.csv", summary)?;
    out.manifest("mbp-longrun", &s.echo, &[grid_note(s.grid.n, 2048)])?;
    Ok(MbpOutcome { runs, out })
}

/// Per-step extremes of the three prostate fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProstateRow {
    pub t: f64,
    pub phi: (f64, f64),
    pub sigma: (f64, f64),
    pub p: (f64, f64),
    pub phi_grad_norm_sq: f64,
}

impl ProstateRow {
    fn of(t: f64, u: &[Field]) -> Self {
        let range = |f: &Field| (f.min_value(), f.max_value());
        Self {
            t,
            phi: range(&u[0]),
            sigma: range(&u[1]),
            p: range(&u[2]),
            phi_grad_norm_sq: grad_norm_sq(&u[0]),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.phi, self.sigma, self.p]
            .iter()
            .all(|r| r.0.is_finite() && r.1.is_finite())
            && self.phi_grad_norm_sq.is_finite()
    }
}

pub struct ProstateOutcome {
    pub rows: Vec<ProstateRow>,
    /// Stabilization used for the tumor equation and the sampled Lipschitz
    /// bound it is meant to dominate.
    pub b_phi: f64,
    pub lipschitz: f64,
    pub out: OutputDir,
}

const FIELD_NAMES: [&str; 3] = ["phi", "sigma", "p"];

/// Tumor, nutrient and PSA fields under the configured therapy schedule.
pub fn prostate(s: &Settings) -> Result<ProstateOutcome> {
    let ps = &s.prostate;
    let model = ProstateModel::new(ps.params.clone(), ps.sigma_range)
        .map_err(|e| config_err("prostate.b_phi", e.to_string()))?;
    let u0 = prostate_initials(ps.n, &ps.seed).map_err(|e| config_err("prostate.n", e.to_string()))?;
    let steps = step_count(ps.t_final, ps.dt, "prostate.t_final")?;
    if steps + 1 < ps.k {
        return Err(config_err("prostate.t_final", format!("order {} needs at least {} steps", ps.k, ps.k - 1)));
    }
    let snaps = snapshot_steps(&ps.snapshot_times, ps.dt, steps, "prostate.snapshot_times")?;
    let mut out = OutputDir::create(&s.output.dir)?;
    let write_snaps = |out: &mut OutputDir, n: usize, u: &[Field]| -> Result<()> {
        for (_, label) in snaps.iter().filter(|p| p.0 == n) {
            for (name, f) in FIELD_NAMES.iter().zip(u) {
                out.snapshot(&snapshot_name(label, Some(name)), f)?;
            }
        }
        Ok(())
    };

    info!("prostate: {}^2, k={} dt={} steps={steps}", ps.n, ps.k, ps.dt);
    let (mut run, _) = Integrator::new(&model, u0.to_vec(), 0.0, ps.k, ps.dt, s.scheme.step)
        .map_err(HarnessError::during("bootstrap"))?;
    let mut rows = Vec::with_capacity(steps + 1);
    for n in 0..ps.k {
        let u = run.history().level(ps.k - 1 - n).to_vec();
        rows.push(ProstateRow::of(n as f64 * ps.dt, &u));
        write_snaps(&mut out, n, &u)?;
    }
    for n in ps.k..=steps {
        run.advance().map_err(HarnessError::at_step(n))?;
        for (f, name) in run.state().iter().zip(FIELD_NAMES) {
            f.check_finite(name).map_err(HarnessError::at_step(n))?;
        }
        rows.push(ProstateRow::of(n as f64 * ps.dt, run.state()));
        write_snaps(&mut out, n, run.state())?;
    }

    let mut trace = Csv::new(&[
        "t", "phi_min", "phi_max", "sigma_min", "sigma_max", "p_min", "p_max", "phi_grad_norm_sq",
    ]);
    let mut mbp = Csv::new(&["t", "linf"]);
    for r in &rows {
        trace.row(&[
            r.t.into(),
            r.phi.0.into(),
            r.phi.1.into(),
            r.sigma.0.into(),
            r.sigma.1.into(),
            r.p.0.into(),
            r.p.1.into(),
            r.phi_grad_norm_sq.into(),
        ]);
        mbp.row(&[r.t.into(), r.phi.0.abs().max(r.phi.1.abs()).into()]);
    }
    out.csv("prostate_trace.csv", trace)?;
    out.csv("mbp_trace.csv", mbp)?;
    let b_phi = model.components()[0].stabilization;
    let notes = [
        grid_note(ps.n, 2048),
        note("parameters", "illustrative defaults unless overridden, not calibrated"),
        note("b_phi", format!("{b_phi:?}")),
        note("phi_lipschitz_estimate", format!("{:?}", model.phi_lipschitz())),
    ];
    out.manifest("prostate", &s.echo, &notes)?;
    Ok(ProstateOutcome {
        rows,
        b_phi,
        lipschitz: model.phi_lipschitz(),
        out,
    })
}
