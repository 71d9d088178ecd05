//! JSON run configuration and the run artifact produced by synthesis.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonModel, SearchParams, Sense};
use crate::error::{Error, Result};
use crate::sim::IntegratorConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: ModelBlock,
    #[serde(default)]
    pub homogenization: HomogenizationBlock,
    #[serde(default)]
    pub region: RegionBlock,
    pub comparison: ComparisonBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub manifold: ManifoldBlock,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n: usize,
    pub m: usize,
    /// ẋ = f(x, u) over x1..xn, u1..um.
    pub f: Vec<String>,
    /// u = k(x) over x1..xn.
    pub k: Vec<String>,
    /// Triggering condition over x1..xn, e1..en.
    pub gamma: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomogenizationBlock {
    /// Detect homogeneity of the closed loop and only add w when it is absent.
    /// When false, w is always added.
    pub auto: bool,
    /// Target degree when w is added; candidate degree for detection.
    pub xi: Option<f64>,
    /// Degree ϑ used when a non-homogeneous Γ has to be homogenized as
    /// w^{ϑ+1}Γ(z/w).
    pub trigger_theta: f64,
}

impl Default for HomogenizationBlock {
    fn default() -> Self {
        HomogenizationBlock { auto: true, xi: None, trigger_theta: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionBlock {
    pub radius: f64,
}

impl Default for RegionBlock {
    fn default() -> Self {
        RegionBlock { radius: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    ClosedForm,
    PolyRoot,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TStar {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for TStar {
    fn default() -> Self {
        TStar::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TGrid {
    pub min: f64,
    pub max: f64,
    pub per_decade: usize,
    /// Rays used for the containment test.
    pub directions: usize,
}

impl Default for TGrid {
    fn default() -> Self {
        TGrid { min: 1e-5, max: 10.0, per_decade: 32, directions: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChiOverride {
    pub low: Option<Vec<f64>>,
    pub high: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonBlock {
    pub p_low: usize,
    #[serde(default)]
    pub p_high: Option<usize>,
    /// Order of the upper-sense model; none disables τ↑.
    #[serde(default)]
    pub p_upper: Option<usize>,
    #[serde(default)]
    pub method: Option<BoundMethod>,
    #[serde(default)]
    pub t_star: TStar,
    #[serde(default)]
    pub t_grid: TGrid,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub chi_override: ChiOverride,
}

impl ComparisonBlock {
    pub fn bound_method(&self) -> BoundMethod {
        match self.method {
            Some(m) => m,
            None if self.p_high.is_some() => BoundMethod::Iterative,
            None if self.p_low == 3 => BoundMethod::ClosedForm,
            None => BoundMethod::PolyRoot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Periodic,
    Prev,
    Selftrig,
    Event,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Periodic => "periodic",
            StrategyKind::Prev => "prev",
            StrategyKind::Selftrig => "selftrig",
            StrategyKind::Event => "event",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepEntry {
    pub sigma: Option<f64>,
    /// Period of the periodic strategy (s).
    pub periodic_period: Option<f64>,
    /// τ* of the isotropic prior-work rule (s).
    pub prior_tau_star: Option<f64>,
    /// Replaces the global χ override for this entry.
    pub chi_override: Option<ChiOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConditions {
    SphereBoundary {
        count: usize,
        #[serde(default = "one")]
        radius: f64,
        /// Pair of coordinates spanning the circle; quasi-uniform sphere points
        /// when absent.
        #[serde(default)]
        plane: Option<[usize; 2]>,
    },
    Explicit(Vec<Vec<f64>>),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBlock {
    pub strategies: Vec<StrategyKind>,
    pub sweep: Vec<SweepEntry>,
    pub initial_conditions: InitialConditions,
    /// Simulation length for traces (s).
    pub t_end: f64,
    pub n_iter: Vec<usize>,
    /// Initial state for traces.
    pub x0: Option<Vec<f64>>,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock {
            strategies: vec![StrategyKind::Periodic, StrategyKind::Prev, StrategyKind::Selftrig, StrategyKind::Event],
            sweep: vec![],
            initial_conditions: InitialConditions::SphereBoundary { count: 20, radius: 1.0, plane: None },
            t_end: 5.0,
            n_iter: vec![1],
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifoldBlock {
    pub directions: usize,
    /// Overrides the artifact's t*.
    pub t_star: Option<f64>,
}

impl Default for ManifoldBlock {
    fn default() -> Self {
        ManifoldBlock { directions: 360, t_star: None }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub artifact: Option<String>,
    /// Directory for full per-strategy trace CSVs.
    pub trace_dir: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let m = &self.model;
        if m.n == 0 {
            return bad("model.n must be at least 1".into());
        }
        if m.f.len() != m.n {
            return bad(format!("model.f has {} entries, expected n = {}", m.f.len(), m.n));
        }
        if m.k.len() != m.m {
            return bad(format!("model.k has {} entries, expected m = {}", m.k.len(), m.m));
        }
        let c = &self.comparison;
        if c.p_low < 2 {
            return bad(format!("comparison.p_low must be at least 2, got {}", c.p_low));
        }
        if let Some(ph) = c.p_high {
            if ph < c.p_low {
                return bad(format!("comparison.p_high ({ph}) is below p_low ({})", c.p_low));
            }
        }
        if matches!(c.p_upper, Some(p) if p < 2) {
            return bad("comparison.p_upper must be at least 2".into());
        }
        if c.bound_method() == BoundMethod::Iterative && c.p_high.is_none() {
            return bad("the iterative method needs comparison.p_high".into());
        }
        if c.bound_method() == BoundMethod::ClosedForm && c.p_low != 3 {
            return bad("the closed-form method needs p_low = 3".into());
        }
        if let TStar::Fixed(t) = c.t_star {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("comparison.t_star must be positive, got {t}"));
            }
        }
        let g = &c.t_grid;
        if !(g.min > 0.0 && g.max > g.min && g.per_decade > 0 && g.directions > 0) {
            return bad("comparison.t_grid needs 0 < min < max, per_decade > 0, directions > 0".into());
        }
        for (name, chi, p) in self.overrides() {
            if let (Some(chi), Some(p)) = (chi, p) {
                if chi.len() != p {
                    return bad(format!("chi_override.{name} has {} coefficients, expected {p}", chi.len()));
                }
            }
        }
        if !(self.region.radius > 0.0 && self.region.radius.is_finite()) {
            return bad(format!("region.radius must be positive, got {}", self.region.radius));
        }
        if matches!(self.homogenization.xi, Some(xi) if !(xi > 0.0)) {
            return bad("homogenization.xi must be positive".into());
        }
        let uses_sigma = std::iter::once(&m.gamma).chain(&m.f).chain(&m.k).any(|e| mentions(e, "sigma"));
        for s in self.sweep() {
            let sigma = s.sigma.or(m.params.get("sigma").copied());
            if uses_sigma {
                match sigma {
                    Some(v) if v > 0.0 && v < 1.0 => {}
                    Some(v) => return bad(format!("sigma must lie in (0, 1), got {v}")),
                    None => return bad("the model refers to sigma but no value is given".into()),
                }
            }
            for (name, v) in [("periodic_period", s.periodic_period), ("prior_tau_star", s.prior_tau_star)] {
                if matches!(v, Some(t) if !(t > 0.0)) {
                    return bad(format!("sweep.{name} must be positive"));
                }
            }
        }
        let e = &self.experiment;
        if !(e.t_end >= 0.0) {
            return bad("experiment.t_end must be non-negative".into());
        }
        if e.n_iter.contains(&0) {
            return bad("experiment.n_iter entries must be at least 1".into());
        }
        match &e.initial_conditions {
            InitialConditions::SphereBoundary { radius, plane, .. } => {
                if !(*radius > 0.0) {
                    return bad("initial_conditions radius must be positive".into());
                }
                if let Some([a, b]) = plane {
                    if a == b || *a >= m.n || *b >= m.n {
                        return bad(format!("initial_conditions plane {:?} is not a pair of distinct coordinates", [a, b]));
                    }
                }
            }
            InitialConditions::Explicit(xs) => {
                if let Some(x) = xs.iter().find(|x| x.len() != m.n) {
                    return bad(format!("explicit initial condition {x:?} does not have n = {} entries", m.n));
                }
            }
        }
        if matches!(&e.x0, Some(x) if x.len() != m.n) {
            return bad(format!("experiment.x0 must have n = {} entries", m.n));
        }
        self.integrator.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn overrides(&self) -> Vec<(&'static str, Option<&Vec<f64>>, Option<usize>)> {
        let c = &self.comparison;
        let mut all = vec![&c.chi_override];
        all.extend(self.experiment.sweep.iter().filter_map(|s| s.chi_override.as_ref()));
        all.into_iter()
            .flat_map(|o| {
                [
                    ("low", o.low.as_ref(), Some(c.p_low)),
                    ("high", o.high.as_ref(), c.p_high),
                    ("upper", o.upper.as_ref(), c.p_upper),
                ]
            })
            .collect()
    }

    /// Sweep entries, or a single entry built from the model parameters.
    pub fn sweep(&self) -> Vec<SweepEntry> {
        if self.experiment.sweep.is_empty() {
            vec![SweepEntry { sigma: self.model.params.get("sigma").copied(), ..Default::default() }]
        } else {
            self.experiment.sweep.clone()
        }
    }

    /// Model parameters with the entry's σ applied.
    pub fn params_for(&self, entry: &SweepEntry) -> HashMap<String, f64> {
        let mut p: HashMap<String, f64> = self.model.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        if let Some(s) = entry.sigma {
            p.insert("sigma".into(), s);
        }
        p
    }

    pub fn chi_override_for<'a>(&'a self, entry: &'a SweepEntry) -> &'a ChiOverride {
        entry.chi_override.as_ref().unwrap_or(&self.comparison.chi_override)
    }
}

fn mentions(text: &str, ident: &str) -> bool {
    let b = text.as_bytes();
    let is_id = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    text.match_indices(ident).any(|(i, _)| {
        let j = i + ident.len();
        (i == 0 || !is_id(b[i - 1])) && (j >= b.len() || !is_id(b[j]))
    })
}

/// Serializable form of a comparison model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub p: usize,
    pub chi: Vec<f64>,
    pub sense: Sense,
    pub t_star: f64,
    pub region_radius: f64,
    pub margin: f64,
    pub training_samples: usize,
    pub verification_samples: usize,
    pub verified: bool,
    /// "synthesized" or "override".
    pub source: String,
}

impl ModelRecord {
    pub fn from_model(cm: &ComparisonModel, source: &str) -> Self {
        ModelRecord {
            p: cm.p,
            chi: cm.chi.clone(),
            sense: cm.sense,
            t_star: cm.t_star,
            region_radius: cm.region_radius,
            margin: cm.margin,
            training_samples: cm.training_samples,
            verification_samples: cm.verification_samples,
            verified: cm.verified,
            source: source.into(),
        }
    }

    pub fn to_model(&self) -> Result<ComparisonModel> {
        let mut cm = ComparisonModel::new(self.chi.clone(), self.sense, self.region_radius, self.t_star)?;
        cm.margin = self.margin;
        cm.training_samples = self.training_samples;
        cm.verification_samples = self.verification_samples;
        cm.verified = self.verified;
        Ok(cm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub sigma: Option<f64>,
    pub t_star: f64,
    pub low: ModelRecord,
    pub high: Option<ModelRecord>,
    pub upper: Option<ModelRecord>,
}

/// Everything needed to reproduce bounds without re-running synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Identifies the model the coefficients belong to.
    pub model_key: String,
    pub xi: Option<f64>,
    pub gamma_degree: Option<f64>,
    pub homogenized: bool,
    pub region_radius: f64,
    pub seed: u64,
    pub entries: Vec<ArtifactEntry>,
}

impl Artifact {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn entry_for(&self, sigma: Option<f64>) -> Option<&ArtifactEntry> {
        self.entries.iter().find(|e| e.sigma == sigma)
    }
}

/// Stable textual key of the model block and homogenization settings.
pub fn model_key(cfg: &RunConfig) -> String {
    let m = &cfg.model;
    let mut params: Vec<String> =
        m.params.iter().filter(|(k, _)| k.as_str() != "sigma").map(|(k, v)| format!("{k}={v:?}")).collect();
    params.sort();
    format!(
        "n={};m={};f=[{}];k=[{}];gamma={};params=[{}];auto={};xi={:?};theta={:?}",
        m.n,
        m.m,
        m.f.join("|"),
        m.k.join("|"),
        m.gamma,
        params.join(","),
        cfg.homogenization.auto,
        cfg.homogenization.xi,
        cfg.homogenization.trigger_theta
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_match_respects_boundaries() {
        assert!(mentions("0.1*sigma^2", "sigma"));
        assert!(!mentions("sigma2 + x1", "sigma"));
        assert!(!mentions("xsigma", "sigma"));
    }

    #[test]
    fn t_star_forms() {
        let a: TStar = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(a, TStar::Auto(AutoTag::Auto));
        let f: TStar = serde_json::from_str("0.001").unwrap();
        assert_eq!(f, TStar::Fixed(0.001));
        assert!(serde_json::from_str::<TStar>("\"soon\"").is_err());
    }
}
