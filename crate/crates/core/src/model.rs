//! Reaction terms: the generic scalar nonlinearity with its bound data, the
//! Allen-Cahn instance and a three-field tumor growth system.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Result, SbdfError};
use crate::grid::{BoundarySpec, Field, GridSpec};

/// Closed interval `[lo, hi]` enforced by the cut-off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(SbdfError::InvalidParameter {
                name: "bounds",
                reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
            });
        }
        Ok(Self { lo, hi })
    }

    pub const fn symmetric_unit() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }

    pub const fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Per-component data the engine needs: diffusion coefficient, stabilization
/// constant `B`, and the optional bound interval for the cut-off.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSpec {
    pub name: String,
    pub alpha: f64,
    pub stabilization: f64,
    pub bounds: Option<Bounds>,
}

/// Pointwise reaction of a (possibly coupled) system
/// `u_c' = alpha_c * lap(u_c) + r_c(t, u)`.
pub trait ReactionSystem: Sync {
    fn components(&self) -> &[ComponentSpec];

    /// Writes `r(t, u)` into `out`; both slices hold one entry per component.
    fn reaction(&self, t: f64, u: &[f64], out: &mut [f64]);
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const REGISTRATION_SAMPLES: usize = 10_000;

/// Scalar semilinear model `u' = alpha * lap(u) + f(u)` with stabilization
/// constant `B` and bound interval `[lo, hi]`.
#[derive(Clone)]
pub struct NonlinearModel {
    name: String,
    f: ScalarFn,
    df: Option<ScalarFn>,
    spec: [ComponentSpec; 1],
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("name", &self.name)
            .field("spec", &self.spec[0])
            .finish_non_exhaustive()
    }
}

impl NonlinearModel {
    /// Builds the model and runs the registration check on `f`.
    pub fn new(
        name: impl Into<String>,
        f: ScalarFn,
        b: f64,
        bounds: Bounds,
        alpha: f64,
    ) -> Result<Self> {
        let name = name.into();
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(SbdfError::InvalidParameter {
                name: "alpha",
                reason: format!("must be finite and >= 0, got {alpha}"),
            });
        }
        registration_check(&name, f.as_ref(), b, bounds)?;
        Ok(Self {
            spec: [ComponentSpec {
                name: name.clone(),
                alpha,
                stabilization: b,
                bounds: Some(bounds),
            }],
            name,
            f,
            df: None,
        })
    }

    /// Supplies an analytic derivative used by the Newton oracle.
    pub fn with_derivative(mut self, df: ScalarFn) -> Self {
        self.df = Some(df);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    /// `f'(u)`, analytic when available, else a central difference.
    pub fn derivative(&self, u: f64) -> f64 {
        match &self.df {
            Some(df) => df(u),
            None => {
                let d = 1e-6 * (1.0 + u.abs());
                (self.f(u + d) - self.f(u - d)) / (2.0 * d)
            }
        }
    }

    /// `N(u) = f(u) + B u`.
    #[inline]
    pub fn nonlinear(&self, u: f64) -> f64 {
        self.f(u) + self.b() * u
    }

    pub fn b(&self) -> f64 {
        self.spec[0].stabilization
    }

    pub fn alpha(&self) -> f64 {
        self.spec[0].alpha
    }

    pub fn bounds(&self) -> Bounds {
        self.spec[0].bounds.expect("scalar models always carry bounds")
    }
}

impl ReactionSystem for NonlinearModel {
    fn components(&self) -> &[ComponentSpec] {
        &self.spec
    }

    #[inline]
    fn reaction(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        out[0] = (self.f)(u[0]);
    }
}

/// Checks on a dense sample of `[lo, hi]`:
/// * `|f'| <= B` by finite differences (relative slack `1e-6`),
/// * `f(hi) <= 0 <= f(lo)`,
/// * `N(u) / B` stays in `[lo, hi]`, which makes the first-order sweep map
///   bounded data to bounded data.
pub fn registration_check(name: &str, f: &dyn Fn(f64) -> f64, b: f64, bounds: Bounds) -> Result<()> {
    let fail = |reason: String| SbdfError::ModelCheck {
        model: name.to_string(),
        reason,
    };
    if !(b.is_finite() && b > 0.0) {
        return Err(fail(format!("stabilization constant must be > 0, got {b}")));
    }
    let Bounds { lo, hi } = bounds;
    let width = hi - lo;
    let slack = 1e-12 * b * bounds.max_abs().max(1.0);
    let n = REGISTRATION_SAMPLES;
    let x = |i: usize| lo + width * i as f64 / (n - 1) as f64;
    let d = 1e-6 * width;
    for i in 0..n {
        let u = x(i);
        let fu = f(u);
        if !fu.is_finite() {
            return Err(fail(format!("f({u}) is not finite")));
        }
        let (ul, ur) = ((u - d).max(lo), (u + d).min(hi));
        let slope = (f(ur) - f(ul)) / (ur - ul);
        if slope.abs() > b * (1.0 + 1e-6) + 1e-9 {
            return Err(fail(format!("|f'({u})| ~ {} exceeds B = {b}", slope.abs())));
        }
        let scaled = (fu + b * u) / b;
        if scaled < lo - slack || scaled > hi + slack {
            return Err(fail(format!(
                "(f(u) + B u) / B = {scaled} leaves [{lo}, {hi}] at u = {u}"
            )));
        }
    }
    if f(hi) > slack {
        return Err(fail(format!("f(hi) = {} > 0", f(hi))));
    }
    if f(lo) < -slack {
        return Err(fail(format!("f(lo) = {} < 0", f(lo))));
    }
    Ok(())
}

#[inline]
pub fn ac_reaction(u: f64) -> f64 {
    u - u * u * u
}

/// Allen-Cahn model: `f(u) = u - u^3`, `alpha = epsilon^2`, bounds `[-1, 1]`.
pub fn allen_cahn(epsilon: f64, b: f64) -> Result<NonlinearModel> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(SbdfError::InvalidParameter {
            name: "epsilon",
            reason: format!("must be > 0, got {epsilon}"),
        });
    }
    NonlinearModel::new(
        "allen-cahn",
        Arc::new(ac_reaction),
        b,
        Bounds::symmetric_unit(),
        epsilon * epsilon,
    )
    .map(|m| m.with_derivative(Arc::new(|u: f64| 1.0 - 3.0 * u * u)))
}

/// `0.05 (1 - cos 2 pi x) cos 2 pi y` sampled at the grid nodes.
pub fn ac_initial(grid: GridSpec) -> Field {
    let mut u = Field::from_fn(grid, |i, j| {
        let (x, y) = (grid.coord(i), grid.coord(j));
        0.05 * (1.0 - (2.0 * PI * x).cos()) * (2.0 * PI * y).cos()
    });
    u.zero_constrained();
    u
}

/// Piecewise-linear map through strictly increasing knots, held constant
/// beyond the end knots. Text form: `x:y, x:y, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(SbdfError::Parse("table needs at least one knot".into()));
        }
        for &(x, y) in points {
            if !(x.is_finite() && y.is_finite()) {
                return Err(SbdfError::Parse(format!("non-finite knot {x}:{y}")));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SbdfError::Parse("knots must be strictly increasing in x".into()));
        }
        Ok(Self {
            xs: points.iter().map(|p| p.0).collect(),
            ys: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn constant(v: f64) -> Result<Self> {
        Self::new(&[(0.0, v)])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&xk| xk <= x);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Minimum and maximum over `[a, b]`, attained at `a`, `b` or a knot.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let inner = self.xs.iter().filter(|&&x| a < x && x < b).copied();
        [a, b]
            .into_iter()
            .chain(inner)
            .map(|x| self.eval(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }
}

impl FromStr for PiecewiseLinear {
    type Err = SbdfError;

    fn from_str(s: &str) -> Result<Self> {
        let mut points = Vec::new();
        for item in s.split(',') {
            let item = item.trim();
            let (x, y) = item
                .split_once(':')
                .ok_or_else(|| SbdfError::Parse(format!("expected `x:y`, got `{item}`")))?;
            points.push((parse_num(x)?, parse_num(y)?));
        }
        Self::new(&points)
    }
}

impl fmt::Display for PiecewiseLinear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (x, y)) in self.knots().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x:?}:{y:?}")?;
        }
        Ok(())
    }
}

/// Piecewise-constant signal made of half-open windows `[t0, t1)`; zero
/// outside every window. Text form: `t0:t1:v; t0:t1:v`, empty for none.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedule {
    windows: Vec<(f64, f64, f64)>,
}

impl Schedule {
    pub fn new(mut windows: Vec<(f64, f64, f64)>) -> Result<Self> {
        for &(t0, t1, v) in &windows {
            if !(t0.is_finite() && t1.is_finite() && v.is_finite()) {
                return Err(SbdfError::Parse(format!("non-finite window {t0}:{t1}:{v}")));
            }
            if t1 <= t0 {
                return Err(SbdfError::Parse(format!("empty window {t0}:{t1}")));
            }
        }
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if windows.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(SbdfError::Parse("schedule windows overlap".into()));
        }
        Ok(Self { windows })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.windows
            .iter()
            .find(|&&(t0, t1, _)| t0 <= t && t < t1)
            .map_or(0.0, |w| w.2)
    }

    /// Every value the signal can take, including the implicit zero.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(self.windows.iter().map(|w| w.2))
    }
}

impl FromStr for Schedule {
    type Err = SbdfError;

    fn from_str(s: &str) -> Result<Self> {
        let mut windows = Vec::new();
        for item in s.split(';').map(str::trim).filter(|i| !i.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            let [t0, t1, v] = parts[..] else {
                return Err(SbdfError::Parse(format!("expected `t0:t1:v`, got `{item}`")));
            };
            windows.push((parse_num(t0)?, parse_num(t1)?, parse_num(v)?));
        }
        Self::new(windows)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (t0, t1, v)) in self.windows.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{t0:?}:{t1:?}:{v:?}")?;
        }
        Ok(())
    }
}

fn parse_num(s: &str) -> Result<f64> {
    let s = s.trim();
    s.parse::<f64>()
        .map_err(|_| SbdfError::Parse(format!("`{s}` is not a number")))
}

/// Parameters of the tumor / nutrient / PSA system. Units: micrometres and
/// days. The defaults are illustrative, not calibrated against data.
#[derive(Clone, Debug, PartialEq)]
pub struct ProstateParams {
    pub lambda: f64,
    pub mobility: f64,
    pub m_ref: f64,
    pub eta: f64,
    pub s_h: f64,
    pub s_c: f64,
    pub s: f64,
    pub gamma_h: f64,
    pub gamma_c: f64,
    pub diff_p: f64,
    pub gamma_p: f64,
    pub alpha_h: f64,
    pub alpha_c: f64,
    pub m_of_sigma: PiecewiseLinear,
    pub drug: Schedule,
    /// Stabilization for the tumor equation; `None` uses the sampled
    /// Lipschitz estimate.
    pub b_phi: Option<f64>,
    pub b_sigma: Option<f64>,
    pub b_p: Option<f64>,
}

impl Default for ProstateParams {
    fn default() -> Self {
        Self {
            lambda: 640.0,
            mobility: 1.0,
            m_ref: 0.1,
            eta: 1000.0,
            s_h: 2.75,
            s_c: 2.75,
            s: 0.0,
            gamma_h: 1.0,
            gamma_c: 17.0,
            diff_p: 1000.0,
            gamma_p: 0.274,
            alpha_h: 0.1,
            alpha_c: 1.7,
            m_of_sigma: PiecewiseLinear::new(&[(0.0, 0.2), (1.0, 0.35), (3.0, 0.4)])
                .expect("default table is valid"),
            drug: Schedule::default(),
            b_phi: None,
            b_sigma: None,
            b_p: None,
        }
    }
}

impl ProstateParams {
    /// All rate parameters must be finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda", self.lambda),
            ("M", self.mobility),
            ("m_ref", self.m_ref),
            ("eta", self.eta),
            ("S_h", self.s_h),
            ("S_c", self.s_c),
            ("s", self.s),
            ("gamma_h", self.gamma_h),
            ("gamma_c", self.gamma_c),
            ("D", self.diff_p),
            ("gamma_p", self.gamma_p),
            ("alpha_h", self.alpha_h),
            ("alpha_c", self.alpha_c),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SbdfError::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        for (name, b) in [("B_phi", self.b_phi), ("B_sigma", self.b_sigma), ("B_p", self.b_p)] {
            if let Some(b) = b {
                if !(b.is_finite() && b >= 0.0) {
                    return Err(SbdfError::InvalidParameter {
                        name,
                        reason: format!("must be finite and >= 0, got {b}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Range of `c = 1 - 3 (m(sigma) - m_ref u)` over the given nutrient range
    /// and every value of the drug signal.
    fn shape_range(&self, sigma_range: (f64, f64)) -> (f64, f64) {
        let (m_lo, m_hi) = self.m_of_sigma.range_on(sigma_range.0, sigma_range.1);
        let (u_lo, u_hi) = self
            .drug
            .values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let c_lo = 1.0 - 3.0 * (m_hi - self.m_ref * u_lo);
        let c_hi = 1.0 - 3.0 * (m_lo - self.m_ref * u_hi);
        (c_lo, c_hi)
    }

    /// Sampled bound on `|d r_phi / d phi|` for `phi` in `[0, 1]` and nutrient
    /// values in `sigma_range`. The derivative is affine in `c`, so the two
    /// ends of the `c` range suffice.
    pub fn phi_lipschitz_estimate(&self, sigma_range: (f64, f64)) -> f64 {
        let (c_lo, c_hi) = self.shape_range(sigma_range);
        let m2 = 2.0 * self.mobility;
        let n = 2001;
        let mut best: f64 = 0.0;
        for i in 0..n {
            let p = i as f64 / (n - 1) as f64;
            for c in [c_lo, c_hi] {
                let d = -m2 * ((1.0 - 2.0 * p) * (c - 2.0 * p) - 2.0 * p * (1.0 - p));
                best = best.max(d.abs());
            }
        }
        best
    }
}

/// The three-field system with per-component stabilization fixed at
/// construction.
#[derive(Clone, Debug)]
pub struct ProstateModel {
    params: ProstateParams,
    specs: [ComponentSpec; 3],
    phi_lipschitz: f64,
}

impl ProstateModel {
    /// `sigma_range` is the nutrient range over which the tumor stabilization
    /// must dominate the reaction's Lipschitz constant.
    pub fn new(params: ProstateParams, sigma_range: (f64, f64)) -> Result<Self> {
        params.validate()?;
        let est = params.phi_lipschitz_estimate(sigma_range);
        let b_phi = match params.b_phi {
            Some(b) => {
                if b < est {
                    log::warn!(
                        "B_phi = {b} is below the sampled Lipschitz bound {est:.6} of the tumor reaction"
                    );
                }
                b
            }
            None => est,
        };
        let b_sigma = params.b_sigma.unwrap_or(params.gamma_h.max(params.gamma_c));
        let b_p = params.b_p.unwrap_or(params.gamma_p);
        let spec = |name: &str, alpha, b, bounds| ComponentSpec {
            name: name.to_string(),
            alpha,
            stabilization: b,
            bounds,
        };
        Ok(Self {
            specs: [
                spec("phi", params.lambda, b_phi, Some(Bounds::unit())),
                spec("sigma", params.eta, b_sigma, None),
                spec("p", params.diff_p, b_p, None),
            ],
            params,
            phi_lipschitz: est,
        })
    }

    pub fn params(&self) -> &ProstateParams {
        &self.params
    }

    pub fn phi_lipschitz(&self) -> f64 {
        self.phi_lipschitz
    }

    #[inline]
    fn eval(&self, t: f64, phi: f64, sigma: f64, p: f64) -> [f64; 3] {
        let q = &self.params;
        let u = q.drug.eval(t);
        let shape = 1.0 - 2.0 * phi - 3.0 * (q.m_of_sigma.eval(sigma) - q.m_ref * u);
        let r_phi = -2.0 * q.mobility * phi * (1.0 - phi) * shape;
        let r_sigma = q.s_h * (1.0 - phi) + (q.s_c - q.s) * phi
            - (q.gamma_h * (1.0 - phi) + q.gamma_c * phi) * sigma;
        let r_p = -q.gamma_p * p + q.alpha_h * (1.0 - phi) + q.alpha_c * phi;
        [r_phi, r_sigma, r_p]
    }
}

impl ReactionSystem for ProstateModel {
    fn components(&self) -> &[ComponentSpec] {
        &self.specs
    }

    #[inline]
    fn reaction(&self, t: f64, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.eval(t, u[0], u[1], u[2]));
    }
}

/// Reaction terms of the three fields evaluated node by node at time `t`.
pub fn prostate_reactions(
    phi: &Field,
    sigma: &Field,
    p: &Field,
    t: f64,
    model: &ProstateModel,
) -> Result<(Field, Field, Field)> {
    for (f, ctx) in [(phi, "tumor field"), (sigma, "nutrient field"), (p, "PSA field")] {
        f.check_finite(ctx)?;
        if f.values().len() != phi.values().len() {
            return Err(SbdfError::GridMismatch("prostate fields differ in size".into()));
        }
    }
    let mut out = [phi.clone(), sigma.clone(), p.clone()];
    for k in 0..phi.values().len() {
        let r = model.eval(t, phi.values()[k], sigma.values()[k], p.values()[k]);
        for (o, v) in out.iter_mut().zip(r) {
            o.values_mut()[k] = v;
        }
    }
    let [a, b, c] = out;
    Ok((a, b, c))
}

/// Geometry and concentrations of the initial tumor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TumorSeed {
    pub domain_length: f64,
    pub a: f64,
    pub b: f64,
    pub c_sigma: (f64, f64),
    pub c_p: (f64, f64),
}

impl Default for TumorSeed {
    fn default() -> Self {
        Self {
            domain_length: 3000.0,
            a: 150.0,
            b: 200.0,
            c_sigma: (1.0, -0.8),
            c_p: (0.0625, 0.7975),
        }
    }
}

impl TumorSeed {
    pub fn phi0(&self, x: f64, y: f64) -> f64 {
        let c = 0.5 * self.domain_length;
        let r = (((x - c) / self.a).powi(2) + ((y - c) / self.b).powi(2)).sqrt();
        0.5 - 0.5 * (10.0 * r - 1.0).tanh()
    }
}

/// Grids for the three fields of an `n x n` run: tumor pinned to zero on
/// every edge, nutrient and PSA with zero flux.
pub fn prostate_grids(n: usize, seed: &TumorSeed) -> Result<[GridSpec; 3]> {
    let phi = GridSpec::square(n, seed.domain_length, BoundarySpec::dirichlet())?;
    let other = phi.with_bc(BoundarySpec::neumann())?;
    Ok([phi, other, other])
}

/// Initial tumor, nutrient and PSA fields on `prostate_grids(n, seed)`.
pub fn prostate_initials(n: usize, seed: &TumorSeed) -> Result<[Field; 3]> {
    let [g_phi, g_sigma, g_p] = prostate_grids(n, seed)?;
    let phi_at = |i: usize, j: usize| seed.phi0(g_phi.coord(i), g_phi.coord(j));
    let mut phi = Field::from_fn(g_phi, phi_at);
    let sigma = Field::from_fn(g_sigma, |i, j| seed.c_sigma.0 + seed.c_sigma.1 * phi_at(i, j));
    let p = Field::from_fn(g_p, |i, j| seed.c_p.0 + seed.c_p.1 * phi_at(i, j));
    phi.zero_constrained();
    Ok([phi, sigma, p])
}
