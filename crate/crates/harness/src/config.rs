//! Flat `section.key = value` configuration.
//!
//! Every key has a textual default, so the effective configuration can be
//! echoed verbatim into the run manifest. Keys that no setting consumed are
//! rejected.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sbdf_core::model::{PiecewiseLinear, ProstateParams, Schedule, TumorSeed};
use sbdf_core::{BoundarySpec, EdgeCondition, StepConfig};

use crate::error::{HarnessError, Result};

fn config_err(key: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn valid_key(key: &str) -> bool {
    let ok = |s: &str| {
        !s.is_empty()
            && s.bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
    };
    matches!(key.split_once('.'), Some((a, b)) if ok(a) && ok(b))
}

fn split_assignment(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim().to_string(), v.trim().to_string()))
}

/// Raw key/value pairs plus a record of which keys were read.
#[derive(Debug, Default)]
pub struct Entries {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

impl Entries {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("line {}", n + 1);
            let (key, value) = split_assignment(line)
                .ok_or_else(|| config_err(&at, format!("expected `section.key = value`, got `{line}`")))?;
            if !valid_key(&key) {
                return Err(config_err(at, format!("`{key}` is not a `section.key` name")));
            }
            if out.values.insert(key.clone(), value).is_some() {
                return Err(config_err(key, format!("set twice (again on {at})")));
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = split_assignment(assignment)
            .ok_or_else(|| config_err("--set", format!("expected `section.key=value`, got `{assignment}`")))?;
        if !valid_key(&key) {
            return Err(config_err("--set", format!("`{key}` is not a `section.key` name")));
        }
        self.values.insert(key, value);
        Ok(())
    }

    fn raw(&self, key: &str, default: &str) -> String {
        let v = self.values.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.used.borrow_mut().insert(key.to_string(), v.clone());
        v
    }

    fn get<T: FromStr>(&self, key: &str, default: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.raw(key, default);
        v.parse()
            .map_err(|e| config_err(key, format!("cannot parse `{v}`: {e}")))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        let v = self.raw(key, if default { "true" } else { "false" });
        match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(config_err(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let v = self.raw(key, default);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| config_err(key, format!("cannot parse `{s}`: {e}")))
            })
            .collect()
    }

    /// `auto` (or empty) means "derive it".
    fn optional(&self, key: &str) -> Result<Option<f64>> {
        let v = self.raw(key, "auto");
        if v.is_empty() || v.eq_ignore_ascii_case("auto") {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|e| config_err(key, format!("cannot parse `{v}`: {e}")))
    }

    fn positive(&self, key: &str, default: &str) -> Result<f64> {
        let v: f64 = self.get(key, default)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(config_err(key, format!("must be a finite number > 0, got {v}")));
        }
        Ok(v)
    }

    fn non_negative(&self, key: &str, default: &str) -> Result<f64> {
        let v: f64 = self.get(key, default)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(config_err(key, format!("must be a finite number >= 0, got {v}")));
        }
        Ok(v)
    }

    fn positive_list(&self, key: &str, default: &str) -> Result<Vec<f64>> {
        let v: Vec<f64> = self.list(key, default)?;
        if v.is_empty() {
            return Err(config_err(key, "list is empty"));
        }
        if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(config_err(key, format!("entries must be > 0, got {bad}")));
        }
        Ok(v)
    }

    fn orders(&self, key: &str, default: &str) -> Result<Vec<usize>> {
        let v: Vec<usize> = self.list(key, default)?;
        if v.is_empty() {
            return Err(config_err(key, "list is empty"));
        }
        if let Some(bad) = v.iter().find(|k| !(1..=4).contains(*k)) {
            return Err(config_err(key, format!("orders must be in 1..=4, got {bad}")));
        }
        Ok(v)
    }

    fn order(&self, key: &str, default: &str) -> Result<usize> {
        let k: usize = self.get(key, default)?;
        if !(1..=4).contains(&k) {
            return Err(config_err(key, format!("must be in 1..=4, got {k}")));
        }
        Ok(k)
    }

    fn times(&self, key: &str, default: &str) -> Result<Vec<SnapshotTime>> {
        let v = self.raw(key, default);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s.parse::<f64>() {
                Ok(t) if t.is_finite() && t >= 0.0 => Ok(SnapshotTime {
                    label: s.to_string(),
                    t,
                }),
                _ => Err(config_err(key, format!("`{s}` is not a time >= 0"))),
            })
            .collect()
    }

    /// Fails on the first key nothing asked for.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.values.keys().find(|k| !used.contains_key(*k)) {
            Some(k) => Err(config_err(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }

    /// Effective `key = value` pairs, sorted by key.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.used
            .borrow()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotTime {
    /// The time as written in the configuration; used in file names.
    pub label: String,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    /// `0.05 (1 - cos 2 pi x) cos 2 pi y`.
    Example,
    Zero,
    Constant,
    /// Uniform in `[-amplitude, amplitude]`, drawn from `seed`.
    Random,
}

impl FromStr for InitialKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "example" => Ok(Self::Example),
            "zero" => Ok(Self::Zero),
            "constant" => Ok(Self::Constant),
            "random" => Ok(Self::Random),
            _ => Err("expected example, zero, constant or random".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSettings {
    pub epsilon: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSettings {
    pub n: usize,
    pub length: f64,
    pub bc: BoundarySpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSettings {
    pub k: usize,
    pub dt: f64,
    pub t_final: f64,
    pub step: StepConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialSettings {
    pub kind: InitialKind,
    pub value: f64,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub energy: bool,
    pub mbp: bool,
    pub per_iterate: bool,
    /// Written in addition to the final snapshot.
    pub snapshot_times: Vec<SnapshotTime>,
    /// When off, timing columns are written as 0 so outputs are reproducible.
    pub timings: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergeSettings {
    pub dt_list: Vec<f64>,
    pub reference_dt: Option<f64>,
    pub reference_k: usize,
    pub orders: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareSettings {
    pub dt_list: Vec<f64>,
    pub reference_dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MbpSettings {
    pub dt_list: Vec<f64>,
    pub t_final: f64,
    pub orders: Vec<usize>,
    /// Clamp first-order runs too. Off by default: the first-order scheme
    /// keeps the bound on its own.
    pub k1_cutoff: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProstateSettings {
    pub n: usize,
    pub k: usize,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<SnapshotTime>,
    pub params: ProstateParams,
    pub seed: TumorSeed,
    /// Nutrient range over which the tumor stabilization is checked.
    pub sigma_range: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub model: ModelSettings,
    pub grid: GridSettings,
    pub scheme: SchemeSettings,
    pub initial: InitialSettings,
    pub output: OutputSettings,
    pub converge: ConvergeSettings,
    pub compare: CompareSettings,
    pub mbp: MbpSettings,
    pub prostate: ProstateSettings,
    /// Effective configuration, one `key = value` per entry.
    pub echo: Vec<(String, String)>,
}

const DT_HALVINGS: &str = "0.1, 0.05, 0.025, 0.0125, 0.00625";

fn edge(e: &Entries, key: &str, default: &str) -> Result<EdgeCondition> {
    let v = e.raw(key, default);
    EdgeCondition::parse(&v)
        .ok_or_else(|| config_err(key, format!("expected periodic, dirichlet or neumann, got `{v}`")))
}

fn grid_size(e: &Entries, key: &str, default: &str) -> Result<usize> {
    let n: usize = e.get(key, default)?;
    if n < 3 {
        return Err(config_err(key, format!("need at least 3 nodes per side, got {n}")));
    }
    Ok(n)
}

impl Settings {
    pub fn from_entries(e: &Entries) -> Result<Self> {
        let kind = e.raw("model.kind", "allen-cahn");
        if kind != "allen-cahn" {
            return Err(config_err("model.kind", format!("only `allen-cahn` is supported, got `{kind}`")));
        }
        let model = ModelSettings {
            epsilon: e.positive("model.epsilon", "0.01")?,
            b: e.non_negative("model.b", "2")?,
        };

        let bc = BoundarySpec {
            left: edge(e, "grid.left", "dirichlet")?,
            right: edge(e, "grid.right", "neumann")?,
            bottom: edge(e, "grid.bottom", "neumann")?,
            top: edge(e, "grid.top", "neumann")?,
        };
        bc.validate().map_err(|err| config_err("grid.left", err.to_string()))?;
        let grid = GridSettings {
            n: grid_size(e, "grid.n", "128")?,
            length: e.positive("grid.length", "1")?,
            bc,
        };

        let step = StepConfig {
            tol_const: e.positive("scheme.tol_const", "1")?,
            max_iters: e.get("scheme.max_iters", "500")?,
            cutoff_enabled: e.flag("scheme.cutoff", true)?,
        };
        if step.max_iters == 0 {
            return Err(config_err("scheme.max_iters", "must be at least 1"));
        }
        let scheme = SchemeSettings {
            k: e.order("scheme.k", "2")?,
            dt: e.positive("scheme.dt", "0.1")?,
            t_final: e.positive("scheme.t_final", "1")?,
            step,
        };

        let initial = InitialSettings {
            kind: e.get("initial.kind", "example")?,
            value: e.get("initial.value", "0")?,
            amplitude: e.non_negative("initial.amplitude", "0.9")?,
            seed: e.get("initial.seed", "0")?,
        };
        if !initial.value.is_finite() {
            return Err(config_err("initial.value", "must be finite"));
        }

        let output = OutputSettings {
            dir: PathBuf::from(e.raw("output.dir", "out")),
            energy: e.flag("output.energy", true)?,
            mbp: e.flag("output.mbp", true)?,
            per_iterate: e.flag("output.per_iterate", false)?,
            snapshot_times: e.times("output.snapshot_times", "")?,
            timings: e.flag("output.timings", true)?,
        };

        let converge = ConvergeSettings {
            dt_list: e.positive_list("converge.dt_list", DT_HALVINGS)?,
            reference_dt: e.optional("converge.reference_dt")?,
            reference_k: e.order("converge.reference_k", "4")?,
            orders: e.orders("converge.orders", &scheme.k.to_string())?,
        };
        let compare = CompareSettings {
            dt_list: e.positive_list("compare.dt_list", DT_HALVINGS)?,
            reference_dt: e.optional("compare.reference_dt")?,
        };
        for key in ["converge.reference_dt", "compare.reference_dt"] {
            let v = if key.starts_with("converge") { converge.reference_dt } else { compare.reference_dt };
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(config_err(key, format!("must be > 0, got {v}")));
                }
            }
        }
        let mbp = MbpSettings {
            dt_list: e.positive_list("mbp.dt_list", "0.1, 0.5, 1")?,
            t_final: e.positive("mbp.t_final", "60")?,
            orders: e.orders("mbp.orders", "1, 2, 3, 4")?,
            k1_cutoff: e.flag("mbp.k1_cutoff", false)?,
        };
        let prostate = prostate_settings(e)?;

        e.finish()?;
        Ok(Self {
            model,
            grid,
            scheme,
            initial,
            output,
            converge,
            compare,
            mbp,
            prostate,
            echo: e.echo(),
        })
    }

    /// Reads `path` (if any), applies the overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut e = match path {
            Some(p) => Entries::load(p)?,
            None => Entries::default(),
        };
        for s in overrides {
            e.set(s)?;
        }
        Self::from_entries(&e)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_entries(&Entries::parse(text)?)
    }
}

fn prostate_settings(e: &Entries) -> Result<ProstateSettings> {
    let d = ProstateParams::default();
    let s = TumorSeed::default();
    let num = |key: &str, v: f64| e.non_negative(key, &format!("{v:?}"));
    let stab = |key: &str| -> Result<Option<f64>> {
        match e.optional(key)? {
            Some(b) if !(b.is_finite() && b >= 0.0) => {
                Err(config_err(key, format!("must be >= 0, got {b}")))
            }
            b => Ok(b),
        }
    };
    let params = ProstateParams {
        lambda: num("prostate.lambda", d.lambda)?,
        mobility: num("prostate.mobility", d.mobility)?,
        m_ref: num("prostate.m_ref", d.m_ref)?,
        eta: num("prostate.eta", d.eta)?,
        s_h: num("prostate.s_h", d.s_h)?,
        s_c: num("prostate.s_c", d.s_c)?,
        s: num("prostate.s", d.s)?,
        gamma_h: num("prostate.gamma_h", d.gamma_h)?,
        gamma_c: num("prostate.gamma_c", d.gamma_c)?,
        diff_p: num("prostate.diff_p", d.diff_p)?,
        gamma_p: num("prostate.gamma_p", d.gamma_p)?,
        alpha_h: num("prostate.alpha_h", d.alpha_h)?,
        alpha_c: num("prostate.alpha_c", d.alpha_c)?,
        m_of_sigma: e.get::<PiecewiseLinear>("prostate.m_of_sigma", &d.m_of_sigma.to_string())?,
        drug: e.get::<Schedule>("prostate.drug", &d.drug.to_string())?,
        b_phi: stab("prostate.b_phi")?,
        b_sigma: stab("prostate.b_sigma")?,
        b_p: stab("prostate.b_p")?,
    };
    let seed = TumorSeed {
        domain_length: e.positive("prostate.domain_length", &format!("{:?}", s.domain_length))?,
        a: e.positive("prostate.seed_a", &format!("{:?}", s.a))?,
        b: e.positive("prostate.seed_b", &format!("{:?}", s.b))?,
        ..s
    };
    let sigma_range = (
        e.get::<f64>("prostate.sigma_min", "0")?,
        e.get::<f64>("prostate.sigma_max", "3")?,
    );
    if !(sigma_range.0.is_finite() && sigma_range.1.is_finite() && sigma_range.0 <= sigma_range.1) {
        return Err(config_err("prostate.sigma_max", "need finite sigma_min <= sigma_max"));
    }
    Ok(ProstateSettings {
        n: grid_size(e, "prostate.n", "256")?,
        k: e.order("prostate.k", "2")?,
        dt: e.positive("prostate.dt", "0.01")?,
        t_final: e.positive("prostate.t_final", "30")?,
        snapshot_times: e.times("prostate.snapshot_times", "0, 10, 20, 30")?,
        params,
        seed,
        sigma_range,
    })
}

/// Number of steps of size `dt` that reach `t_final`; `key` names the
/// setting blamed when `t_final` is not a whole multiple of `dt`.
pub fn step_count(t_final: f64, dt: f64, key: &str) -> Result<usize> {
    let n = (t_final / dt).round();
    if n < 1.0 || (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(config_err(
            key,
            format!("final time {t_final} is not a whole number of steps of {dt}"),
        ));
    }
    Ok(n as usize)
}

/// Step indices of the requested snapshot times.
pub fn snapshot_steps(times: &[SnapshotTime], dt: f64, steps: usize, key: &str) -> Result<Vec<(usize, String)>> {
    times
        .iter()
        .map(|s| {
            let n = (s.t / dt).round();
            if (n * dt - s.t).abs() > 1e-9 * s.t.max(dt) || n as usize > steps {
                return Err(config_err(key, format!("time {} is not a step time in [0, {}]", s.label, steps as f64 * dt)));
            }
            Ok((n as usize, s.label.clone()))
        })
        .collect()
}
