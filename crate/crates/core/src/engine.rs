//! Stabilized BDF time stepping with a matrix-free fixed-point solve.
//!
//! One step of order `k` solves, node by node,
//!
//! ```text
//! D u = H + w * nbr(u) + beta * dt * (r(u) + B u),
//! D   = beta * a0 + 4 w + 2 beta * B * dt,   w = beta * alpha * dt / h^2,
//! ```
//!
//! where `H` collects the `k` history levels. The solve is a Jacobi sweep of
//! that identity starting from the newest level, with each sweep clamped to
//! the model bounds. All components of a coupled system share one sweep;
//! each has its own `alpha`, `B` and bounds.

use rayon::prelude::*;

use crate::error::{Result, SbdfError};
use crate::grid::{l2_norm, linf_norm, Field, GridSpec};
use crate::model::{Bounds, ReactionSystem};
use crate::scheme::{check_positive, scheme_coeffs, SchemeCoeffs};

/// One field per component.
pub type State = Vec<Field>;

/// Most components a [`ReactionSystem`] may declare.
pub const MAX_COMPONENTS: usize = 8;

/// Deepest step-halving level the bootstrap will recurse to.
const MAX_BOOTSTRAP_DEPTH: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    /// `C` in the stopping tolerance `C * min(dt^{k+1}, h^2)`.
    pub tol_const: f64,
    pub max_iters: usize,
    /// Only consulted for `k = 1`; higher orders always clamp.
    pub cutoff_enabled: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            tol_const: 1.0,
            max_iters: 500,
            cutoff_enabled: true,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("tol_const", self.tol_const)?;
        if self.max_iters == 0 {
            return Err(SbdfError::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn cutoff_active(&self, k: usize) -> bool {
        k >= 2 || self.cutoff_enabled
    }
}

/// The `k` most recent time levels, newest first.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    levels: Vec<State>,
    t: f64,
    dt: f64,
}

impl History {
    /// `levels[0]` is the state at time `t`, `levels[l]` the state at
    /// `t - l * dt`.
    pub fn new(levels: Vec<State>, t: f64, dt: f64) -> Result<Self> {
        check_positive("dt", dt)?;
        let first = levels.first().ok_or(SbdfError::LevelCount { expected: 1, got: 0 })?;
        let nc = first.len();
        if nc == 0 || nc > MAX_COMPONENTS {
            return Err(SbdfError::InvalidParameter {
                name: "components",
                reason: format!("need 1..={MAX_COMPONENTS} components, got {nc}"),
            });
        }
        let g0 = *first[0].grid();
        for state in &levels {
            if state.len() != nc {
                return Err(SbdfError::GridMismatch(format!(
                    "levels carry {} and {} components",
                    nc,
                    state.len()
                )));
            }
            for (c, f) in state.iter().enumerate() {
                let g = f.grid();
                if (g.nx(), g.ny(), g.h()) != (g0.nx(), g0.ny(), g0.h()) {
                    return Err(SbdfError::GridMismatch(format!(
                        "component {c} lives on {}x{} h={}, component 0 on {}x{} h={}",
                        g.nx(),
                        g.ny(),
                        g.h(),
                        g0.nx(),
                        g0.ny(),
                        g0.h()
                    )));
                }
                if *g != *first[c].grid() {
                    return Err(SbdfError::GridMismatch(format!(
                        "component {c} changes grid between levels"
                    )));
                }
                f.check_finite("history level")?;
            }
        }
        Ok(Self { levels, t, dt })
    }

    pub fn scalar(levels: Vec<Field>, t: f64, dt: f64) -> Result<Self> {
        Self::new(levels.into_iter().map(|f| vec![f]).collect(), t, dt)
    }

    pub fn order(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &[Field] {
        &self.levels[l]
    }

    pub fn latest(&self) -> &[Field] {
        &self.levels[0]
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn components(&self) -> usize {
        self.levels[0].len()
    }

    /// Makes `state` the newest level at `t + dt`, keeping at most `keep`
    /// levels.
    pub fn push(&mut self, state: State, keep: usize) {
        self.levels.insert(0, state);
        self.levels.truncate(keep.max(1));
        self.t += self.dt;
    }

    fn grid(&self, c: usize) -> &GridSpec {
        self.levels[0][c].grid()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub iters: usize,
    pub last_increment: f64,
    /// Largest per-component contraction factor.
    pub rho: f64,
    /// Effective stopping tolerance (never below the rounding floor).
    pub tolerance: f64,
    /// l2 residual of the implicit scheme at the returned state.
    pub implicit_residual: f64,
    /// Max norm of component 0.
    pub linf: f64,
    pub increments: Vec<f64>,
}

/// One fixed-point iterate as seen by an observer. `m` counts sweeps from 1.
pub struct IterateView<'a> {
    pub m: usize,
    pub previous: &'a [Field],
    pub auxiliary: &'a [Field],
    pub algorithmic: &'a [Field],
    pub increment: f64,
}

/// `sum_{l=1..k} (-beta a_l - beta (-1)^l C(k,l) B dt) * level_{l-1}` for
/// component `c` of `hist`.
fn history_term_component(coeffs: &SchemeCoeffs, hist: &History, c: usize, b: f64) -> Field {
    let mut out = Field::zeros(*hist.grid(c));
    for l in 1..=coeffs.k {
        let w = coeffs.history_weight(l, b, hist.dt);
        for (o, v) in out.values_mut().iter_mut().zip(hist.level(l - 1)[c].values()) {
            *o += w * v;
        }
    }
    out
}

fn check_levels(coeffs: &SchemeCoeffs, hist: &History) -> Result<()> {
    if hist.order() != coeffs.k {
        return Err(SbdfError::LevelCount {
            expected: coeffs.k,
            got: hist.order(),
        });
    }
    Ok(())
}

/// History term of a scalar problem with stabilization `b`.
pub fn history_term(coeffs: &SchemeCoeffs, hist: &History, b: f64) -> Result<Field> {
    check_levels(coeffs, hist)?;
    Ok(history_term_component(coeffs, hist, 0, b))
}

/// Pointwise clamp to `[lo, hi]`.
pub fn cutoff(u: &Field, lo: f64, hi: f64) -> Field {
    u.map(|v| v.max(lo).min(hi))
}

struct ComponentMap {
    hist: Field,
    divisor: f64,
    nbr_weight: f64,
    react_weight: f64,
    b: f64,
    bounds: Option<Bounds>,
    rho: f64,
}

/// The sweep of one step with everything that does not depend on the
/// iterate precomputed.
pub struct FixedPointMap<'m, M: ReactionSystem + ?Sized> {
    model: &'m M,
    comps: Vec<ComponentMap>,
    grid: GridSpec,
    t_new: f64,
    clamp: bool,
    nbr: Vec<Vec<f64>>,
    react: Vec<f64>,
}

impl<'m, M: ReactionSystem + ?Sized> FixedPointMap<'m, M> {
    pub fn new(coeffs: &SchemeCoeffs, hist: &History, model: &'m M, clamp: bool) -> Result<Self> {
        check_levels(coeffs, hist)?;
        let specs = model.components();
        if specs.len() != hist.components() {
            return Err(SbdfError::InvalidParameter {
                name: "components",
                reason: format!(
                    "model has {} components, history has {}",
                    specs.len(),
                    hist.components()
                ),
            });
        }
        let dt = hist.dt();
        let grid = *hist.grid(0);
        let h = grid.h();
        let comps = specs
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let nbr_weight = coeffs.beta * s.alpha * dt / (h * h);
                let divisor = coeffs.divisor(s.alpha, s.stabilization, dt, h);
                ComponentMap {
                    hist: history_term_component(coeffs, hist, c, s.stabilization),
                    divisor,
                    nbr_weight,
                    react_weight: coeffs.beta * dt,
                    b: s.stabilization,
                    bounds: s.bounds,
                    rho: (divisor - coeffs.beta * coeffs.a0()) / divisor,
                }
            })
            .collect();
        let n = grid.len();
        Ok(Self {
            model,
            comps,
            grid,
            t_new: hist.t() + dt,
            clamp,
            nbr: vec![vec![0.0; n]; specs.len()],
            react: vec![0.0; n * specs.len()],
        })
    }

    pub fn rho(&self) -> f64 {
        self.comps.iter().map(|c| c.rho).fold(0.0, f64::max)
    }

    /// History term of component `c`.
    pub fn history_term(&self, c: usize) -> &Field {
        &self.comps[c].hist
    }

    /// One Jacobi sweep: writes the auxiliary iterate built from `cur` into
    /// `aux`.
    pub fn sweep(&mut self, cur: &[Field], aux: &mut [Field]) -> Result<()> {
        let nc = self.comps.len();
        let g = self.grid;
        let nx = g.nx();
        for (c, buf) in self.nbr.iter_mut().enumerate() {
            let src = cur[c].values();
            let gc = *cur[c].grid();
            gc.par_rows(buf, |j, row| gc.neighbor_sum_row(src, j, row));
        }
        let model = self.model;
        let t = self.t_new;
        self.react
            .par_chunks_mut(nx * nc)
            .enumerate()
            .for_each(|(j, chunk)| {
                let mut u = [0.0; MAX_COMPONENTS];
                for (i, r) in chunk.chunks_exact_mut(nc).enumerate() {
                    let k = j * nx + i;
                    for c in 0..nc {
                        u[c] = cur[c].values()[k];
                    }
                    model.reaction(t, &u[..nc], r);
                }
            });
        for (c, comp) in self.comps.iter().enumerate() {
            let gc = *cur[c].grid();
            let src = cur[c].values();
            let nbr = &self.nbr[c];
            let react = &self.react;
            let inv = 1.0 / comp.divisor;
            let hist = comp.hist.values();
            gc.par_rows(aux[c].values_mut(), |j, row| {
                for (i, o) in row.iter_mut().enumerate() {
                    let k = j * nx + i;
                    *o = if gc.is_constrained(i, j) {
                        0.0
                    } else {
                        let nl = react[k * nc + c] + comp.b * src[k];
                        (hist[k] + comp.nbr_weight * nbr[k] + comp.react_weight * nl) * inv
                    };
                }
            });
            aux[c].check_finite("fixed-point update")?;
        }
        Ok(())
    }

    /// Applies the cut-off (when active) to bounded components.
    pub fn project(&self, aux: &[Field], out: &mut [Field]) {
        for (c, comp) in self.comps.iter().enumerate() {
            let dst = out[c].values_mut();
            let src = aux[c].values();
            match comp.bounds.filter(|_| self.clamp) {
                Some(b) => {
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = b.clamp(s);
                    }
                }
                None => dst.copy_from_slice(src),
            }
        }
    }

    /// l2 norm of the implicit-scheme residual `D (u - sweep(u))` over all
    /// components.
    pub fn implicit_residual(&mut self, u: &[Field]) -> Result<f64> {
        let mut aux: State = u.to_vec();
        self.sweep(u, &mut aux)?;
        let mut sum = 0.0;
        for (c, comp) in self.comps.iter().enumerate() {
            let d = combined_l2(&u[c..c + 1], &aux[c..c + 1])?;
            sum += (comp.divisor * d).powi(2);
        }
        Ok(sum.sqrt())
    }
}

/// `sqrt(sum_c ||u_c - v_c||^2)`.
fn combined_l2(u: &[Field], v: &[Field]) -> Result<f64> {
    let mut sum = 0.0;
    for (a, b) in u.iter().zip(v) {
        sum += crate::grid::l2_distance(a, b)?.powi(2);
    }
    Ok(sum.sqrt())
}

fn combined_norm(u: &[Field]) -> f64 {
    u.iter().map(|f| l2_norm(f).powi(2)).sum::<f64>().sqrt()
}

/// One sweep from `current` without the cut-off.
pub fn fpi_update<M: ReactionSystem + ?Sized>(
    coeffs: &SchemeCoeffs,
    hist: &History,
    current: &[Field],
    model: &M,
) -> Result<State> {
    let mut map = FixedPointMap::new(coeffs, hist, model, false)?;
    let mut aux = current.to_vec();
    map.sweep(current, &mut aux)?;
    Ok(aux)
}

/// Advances `hist` by one step. See [`step_with_observer`].
pub fn step<M: ReactionSystem + ?Sized>(
    coeffs: &SchemeCoeffs,
    hist: &History,
    model: &M,
    cfg: &StepConfig,
) -> Result<(State, StepReport)> {
    step_with_observer(coeffs, hist, model, cfg, |_| {})
}

/// Advances `hist` by one step, calling `observer` after every sweep.
///
/// Iterates start from the newest level. Each sweep is clamped (always for
/// `k >= 2`, optionally for `k = 1`) and the loop stops once the l2 change
/// between successive clamped iterates drops below
/// `max(C * min(dt^{k+1}, h^2), 64 * eps * ||iterate||)`. The second term only
/// matters when the nominal tolerance is below what f64 can resolve.
pub fn step_with_observer<M, F>(
    coeffs: &SchemeCoeffs,
    hist: &History,
    model: &M,
    cfg: &StepConfig,
    mut observer: F,
) -> Result<(State, StepReport)>
where
    M: ReactionSystem + ?Sized,
    F: FnMut(&IterateView<'_>),
{
    cfg.validate()?;
    let mut map = FixedPointMap::new(coeffs, hist, model, cfg.cutoff_active(coeffs.k))?;
    let h = hist.grid(0).h();
    let nominal = cfg.tol_const * hist.dt().powi(coeffs.k as i32 + 1).min(h * h);
    let rho = map.rho();

    let mut cur: State = hist.latest().to_vec();
    let mut aux = cur.clone();
    let mut next = cur.clone();
    let mut increments = Vec::new();
    for m in 1..=cfg.max_iters {
        map.sweep(&cur, &mut aux)?;
        map.project(&aux, &mut next);
        let inc = combined_l2(&next, &cur)?;
        observer(&IterateView {
            m,
            previous: &cur,
            auxiliary: &aux,
            algorithmic: &next,
            increment: inc,
        });
        increments.push(inc);
        let tol = nominal
            .max(64.0 * f64::EPSILON * combined_norm(&next))
            .max(f64::MIN_POSITIVE);
        std::mem::swap(&mut cur, &mut next);
        if inc < tol {
            let implicit_residual = map.implicit_residual(&cur)?;
            let report = StepReport {
                iters: m,
                last_increment: inc,
                rho,
                tolerance: tol,
                implicit_residual,
                linf: linf_norm(&cur[0]),
                increments,
            };
            return Ok((cur, report));
        }
    }
    Err(SbdfError::NotConverged {
        iters: cfg.max_iters,
        last_increment: increments.last().copied().unwrap_or(f64::NAN),
        tolerance: nominal,
        rho,
    })
}

/// How the starting levels were produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BootstrapReport {
    /// Number of step halvings below the run step.
    pub depth: usize,
    /// Step used at the deepest level.
    pub finest_dt: f64,
    /// Steps taken at each level, finest first.
    pub steps_per_level: Vec<usize>,
    pub total_steps: usize,
    pub total_iters: usize,
}

/// Produces the `k - 1` starting levels needed by an order-`k` run with step
/// `dt`, returning the full history at `t0 + (k - 1) dt`.
///
/// The levels come from a step-halving cascade. At the deepest step `d`
/// (the first with `d^2 <= dt^{k+1}`) the orders are climbed one per step,
/// `1, 2, ..., k - 1`. Each shallower level reuses the levels of the one
/// below (step `d / 2`), marches order `k` for `k - 1` more steps at `d / 2`
/// and keeps every other level.
pub fn bootstrap<M: ReactionSystem + ?Sized>(
    model: &M,
    u0: State,
    t0: f64,
    k: usize,
    dt: f64,
    cfg: &StepConfig,
) -> Result<(History, BootstrapReport)> {
    scheme_coeffs(k)?;
    check_positive("dt", dt)?;
    // validates component layout even when no levels are needed
    History::new(vec![u0.clone()], t0, dt)?;
    let mut report = BootstrapReport::default();
    let tau = dt.powi(k as i32 + 1);
    let mut levels = start_levels(model, &u0, t0, k, dt, tau, cfg, 0, &mut report)?;
    levels.insert(0, u0);
    levels.reverse();
    let hist = History::new(levels, t0 + (k - 1) as f64 * dt, dt)?;
    Ok((hist, report))
}

/// Levels at `t0 + d, ..., t0 + (k - 1) d`, oldest first.
#[allow(clippy::too_many_arguments)]
fn start_levels<M: ReactionSystem + ?Sized>(
    model: &M,
    u0: &State,
    t0: f64,
    k: usize,
    d: f64,
    tau: f64,
    cfg: &StepConfig,
    depth: usize,
    report: &mut BootstrapReport,
) -> Result<Vec<State>> {
    if k == 1 {
        return Ok(Vec::new());
    }
    if d * d <= tau || depth >= MAX_BOOTSTRAP_DEPTH {
        report.depth = depth;
        report.finest_dt = d;
        report.steps_per_level.push(k - 1);
        let mut hist = History::new(vec![u0.clone()], t0, d)?;
        let mut out = Vec::with_capacity(k - 1);
        for order in 1..k {
            let coeffs = scheme_coeffs(order)?;
            let (next, r) = step(&coeffs, &hist, model, cfg)?;
            report.total_steps += 1;
            report.total_iters += r.iters;
            out.push(next.clone());
            hist.push(next, order + 1);
        }
        return Ok(out);
    }
    let half = d / 2.0;
    let fine = start_levels(model, u0, t0, k, half, tau, cfg, depth + 1, report)?;
    let mut newest_first: Vec<State> = fine.iter().rev().cloned().collect();
    newest_first.push(u0.clone());
    let mut hist = History::new(newest_first, t0 + (k - 1) as f64 * half, half)?;
    let coeffs = scheme_coeffs(k)?;
    let mut all = fine;
    for _ in 0..k - 1 {
        let (next, r) = step(&coeffs, &hist, model, cfg)?;
        report.total_steps += 1;
        report.total_iters += r.iters;
        all.push(next.clone());
        hist.push(next, k);
    }
    report.steps_per_level.push(k - 1);
    // all[i] sits at t0 + (i + 1) * half; keep the whole multiples of d
    Ok(all.into_iter().skip(1).step_by(2).collect())
}

/// Fixed-step driver: bootstrap once, then [`step`] repeatedly.
pub struct Integrator<'m, M: ReactionSystem + ?Sized> {
    model: &'m M,
    coeffs: SchemeCoeffs,
    cfg: StepConfig,
    hist: History,
    steps: usize,
}

impl<'m, M: ReactionSystem + ?Sized> Integrator<'m, M> {
    pub fn new(
        model: &'m M,
        u0: State,
        t0: f64,
        k: usize,
        dt: f64,
        cfg: StepConfig,
    ) -> Result<(Self, BootstrapReport)> {
        cfg.validate()?;
        let (hist, report) = bootstrap(model, u0, t0, k, dt, &cfg)?;
        Ok((Self::from_history(model, hist, cfg)?, report))
    }

    pub fn from_history(model: &'m M, hist: History, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            coeffs: scheme_coeffs(hist.order())?,
            cfg,
            hist,
            steps: 0,
        })
    }

    pub fn advance(&mut self) -> Result<StepReport> {
        self.advance_with_observer(|_| {})
    }

    pub fn advance_with_observer<F>(&mut self, observer: F) -> Result<StepReport>
    where
        F: FnMut(&IterateView<'_>),
    {
        let (next, report) =
            step_with_observer(&self.coeffs, &self.hist, self.model, &self.cfg, observer)?;
        self.hist.push(next, self.coeffs.k);
        self.steps += 1;
        Ok(report)
    }

    pub fn state(&self) -> &[Field] {
        self.hist.latest()
    }

    pub fn t(&self) -> f64 {
        self.hist.t()
    }

    pub fn history(&self) -> &History {
        &self.hist
    }

    pub fn coeffs(&self) -> &SchemeCoeffs {
        &self.coeffs
    }

    /// Steps taken since construction, bootstrap excluded.
    pub fn steps(&self) -> usize {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundarySpec;
    use crate::model::{ac_reaction, allen_cahn, Bounds, NonlinearModel};
    use std::sync::Arc;

    /// Allen-Cahn reaction without diffusion, B = 2.
    fn scalar_ac() -> NonlinearModel {
        NonlinearModel::new("ac", Arc::new(ac_reaction), 2.0, Bounds::symmetric_unit(), 0.0)
            .unwrap()
    }

    fn scalar_grid() -> GridSpec {
        // 2x2 all-Neumann with h = 0.5: constant fields have zero Laplacian
        // and l2 norms equal the nodal value.
        GridSpec::new(2, 2, 0.5, BoundarySpec::neumann()).unwrap()
    }

    #[test]
    fn history_term_examples() {
        let g = scalar_grid();
        let c1 = scheme_coeffs(1).unwrap();
        let hist = History::scalar(vec![Field::constant(g, 0.5)], 0.0, 1.0).unwrap();
        let h = history_term(&c1, &hist, 2.0).unwrap();
        assert!(h.values().iter().all(|&v| v == 1.5));

        let c2 = scheme_coeffs(2).unwrap();
        let ones = History::scalar(vec![Field::constant(g, 1.0); 2], 0.0, 0.3).unwrap();
        let h = history_term(&c2, &ones, 0.0).unwrap();
        assert!(h.values().iter().all(|&v| v == 3.0));

        let zero = History::scalar(vec![Field::zeros(g); 2], 0.0, 0.3).unwrap();
        assert_eq!(history_term(&c2, &zero, 2.0).unwrap(), Field::zeros(g));
        assert!(matches!(
            history_term(&c2, &hist, 2.0),
            Err(SbdfError::LevelCount { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn scalar_update_example() {
        let g = scalar_grid();
        let model = scalar_ac();
        let c1 = scheme_coeffs(1).unwrap();
        let half = Field::constant(g, 0.5);
        let hist = History::scalar(vec![half.clone()], 0.0, 1.0).unwrap();
        let aux = fpi_update(&c1, &hist, &[half], &model).unwrap();
        for &v in aux[0].values() {
            assert!((v - 0.575).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_data_converges_in_one_sweep() {
        let g = GridSpec::new(6, 6, 0.1, BoundarySpec::periodic()).unwrap();
        let model = allen_cahn(0.1, 2.0).unwrap();
        for k in 1..=4 {
            let c = scheme_coeffs(k).unwrap();
            let hist = History::scalar(vec![Field::zeros(g); k], 0.0, 0.1).unwrap();
            let (u, r) = step(&c, &hist, &model, &StepConfig::default()).unwrap();
            assert_eq!(r.iters, 1);
            assert_eq!(u[0], Field::zeros(g));
        }
    }

    #[test]
    fn cutoff_examples() {
        let g = scalar_grid();
        let u = Field::from_values(g, vec![1.5, -2.0, 0.3, 1.0]).unwrap();
        assert_eq!(cutoff(&u, -1.0, 1.0).values(), &[1.0, -1.0, 0.3, 1.0]);
    }

    #[test]
    fn iteration_cap_reports_state() {
        let g = scalar_grid();
        let model = allen_cahn(0.1, 2.0).unwrap();
        let c1 = scheme_coeffs(1).unwrap();
        let hist = History::scalar(vec![Field::constant(g, 0.5)], 0.0, 1.0).unwrap();
        let cfg = StepConfig {
            max_iters: 2,
            tol_const: 1e-12,
            ..StepConfig::default()
        };
        match step(&c1, &hist, &model, &cfg) {
            Err(SbdfError::NotConverged { iters: 2, rho, .. }) => {
                let want = crate::scheme::contraction_factor(1, model.alpha(), 2.0, 1.0, 0.5);
                assert!((rho - want.unwrap()).abs() < 1e-15)
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn bootstrap_trivial_cases() {
        let g = GridSpec::new(4, 4, 0.25, BoundarySpec::periodic()).unwrap();
        let model = allen_cahn(0.1, 2.0).unwrap();
        let cfg = StepConfig::default();
        let (h1, r1) = bootstrap(&model, vec![Field::constant(g, 0.2)], 0.0, 1, 0.1, &cfg).unwrap();
        assert_eq!(h1.order(), 1);
        assert_eq!(r1.total_steps, 0);
        let (h4, r4) = bootstrap(&model, vec![Field::zeros(g)], 0.0, 4, 0.1, &cfg).unwrap();
        assert_eq!(h4.order(), 4);
        assert!((h4.t() - 0.3).abs() < 1e-15);
        assert!(r4.depth > 0);
        for l in 0..4 {
            assert_eq!(h4.level(l)[0], Field::zeros(g));
        }
    }

    #[test]
    fn history_rejects_inconsistent_levels() {
        let a = Field::zeros(scalar_grid());
        let b = Field::zeros(GridSpec::new(3, 2, 0.5, BoundarySpec::neumann()).unwrap());
        assert!(History::scalar(vec![a.clone(), b], 0.0, 0.1).is_err());
        assert!(History::scalar(vec![a.clone()], 0.0, 0.0).is_err());
        assert!(History::new(vec![vec![a.clone()], vec![a.clone(), a]], 0.0, 0.1).is_err());
    }
}
