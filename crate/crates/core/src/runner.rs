//! Config-driven pipeline shared by the command-line tool and the bindings:
//! model setup, synthesis into an artifact, tables, traces, manifold clouds
//! and χ verification.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::comparison::{
    log_grid, search_chi, select_t_star, verify_only, ComparisonModel, SearchParams, Sense, VerificationReport,
};
use crate::config::{
    model_key, Artifact, ArtifactEntry, BoundMethod, InitialConditions, ModelRecord, RunConfig, StrategyKind,
    SweepEntry, TStar,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::manifold::{self, CloudKind, ExactMethod, ManifoldCloud};
use crate::model::{
    build_extended, homogenize_field, homogenize_trigger, lie_chain, scalar_degree, verify_homogeneity, ControlModel,
    ExtendedField, LieChain,
};
use crate::sampling::{self, norm};
use crate::selftrigger::{tau_upper, BoundSpec, SelfTrigger};
use crate::sim::{event_time_oracle, prior_work_interval, run_closed_loop, IntegratorConfig, SimTrace, Strategy, TriggerFn};

/// Everything derived from the model block for one sweep entry.
pub struct Setup {
    pub model: ControlModel,
    /// Closed loop in the original coordinates, used for simulation.
    pub plant: ExtendedField,
    pub plant_gamma: TriggerFn,
    /// Field the bounds are computed on (homogenized when needed).
    pub field: ExtendedField,
    pub gamma: Expr,
    pub field_gamma: TriggerFn,
    pub chain: LieChain,
}

const DEGREE_CANDIDATES: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];

fn detect_degree(field: &ExtendedField, hint: Option<f64>) -> Option<f64> {
    let candidates: Vec<f64> = hint.into_iter().chain(DEGREE_CANDIDATES).collect();
    candidates.into_iter().find(|&xi| verify_homogeneity(field, xi, 16, 1.0, 0x4d0d).passed)
}

/// Build plant, bound field and Lie chain of order `order`.
pub fn build_setup(cfg: &RunConfig, entry: &SweepEntry, order: usize) -> Result<Setup> {
    let m = &cfg.model;
    let params = cfg.params_for(entry);
    let f: Vec<&str> = m.f.iter().map(String::as_str).collect();
    let k: Vec<&str> = m.k.iter().map(String::as_str).collect();
    let model = ControlModel::parse(m.n, m.m, &f, &k, &m.gamma, &params, cfg.region.radius)
        .map_err(|e| Error::Config(e.to_string()))?;
    let plant = build_extended(&model)?;
    let plant_gamma = TriggerFn::new(&model.gamma, &plant)?;
    let h = &cfg.homogenization;
    let vars = plant.var_refs();
    let gamma_homogeneous = scalar_degree(&model.gamma, &vars, false, 0x5eed).is_some();
    let native = if h.auto && gamma_homogeneous { detect_degree(&plant, h.xi) } else { None };
    let (field, gamma) = match native {
        Some(xi) => (plant.clone().with_degree(xi, 16, 0x4d0d)?, model.gamma.clone()),
        None => {
            let field = homogenize_field(&plant, h.xi.unwrap_or(1.0))?;
            let gamma =
                if gamma_homogeneous { model.gamma.clone() } else { homogenize_trigger(&model.gamma, h.trigger_theta) };
            (field, gamma)
        }
    };
    let field_gamma = TriggerFn::new(&gamma, &field)?;
    let chain = lie_chain(&field, &gamma, order)?;
    Ok(Setup { model, plant, plant_gamma, field, gamma, field_gamma, chain })
}

/// Rays through every fresh state the bounds will be evaluated at. With w
/// appended, (x, 0, 1) for |x| < 1 is a different ray than for |x| = 1, so the
/// whole operating ball is covered rather than its boundary sphere.
pub fn containment_rays(cfg: &RunConfig, field: &ExtendedField, count: usize) -> Vec<Vec<f64>> {
    let n = cfg.model.n;
    if !field.homogenized {
        return manifold::default_directions(n, false, count);
    }
    let r_op = cfg.comparison.search.operating_radius;
    let unit = manifold::default_directions(n, false, count);
    let mut rays = Vec::with_capacity(unit.len() * RAY_FRACTIONS.len());
    for f in RAY_FRACTIONS {
        for d in &unit {
            let mut z: Vec<f64> = d[..n].iter().map(|v| v * f * r_op / norm(&d[..n])).collect();
            z.extend(std::iter::repeat_n(0.0, n));
            z.push(1.0);
            let nz = norm(&z);
            rays.push(z.iter().map(|v| v / nz).collect());
        }
    }
    rays
}

const RAY_FRACTIONS: [f64; 8] = [0.02, 0.1, 0.2, 0.35, 0.5, 0.7, 0.85, 1.0];

/// Highest Lie-derivative order any configured model needs.
pub fn chain_order(cfg: &RunConfig) -> usize {
    let c = &cfg.comparison;
    [Some(c.p_low), c.p_high, c.p_upper].into_iter().flatten().max().unwrap_or(c.p_low)
}

fn search_params(cfg: &RunConfig) -> SearchParams {
    SearchParams { seed: cfg.seed, ..cfg.comparison.search.clone() }
}

/// Integrator settings with the step bounded by t*/4 so that no event can
/// hide inside a single step.
pub fn integrator_for(cfg: &RunConfig, t_star: f64) -> IntegratorConfig {
    let mut ic = cfg.integrator;
    if t_star.is_finite() && t_star > 0.0 {
        ic.max_step = ic.max_step.min(t_star / 4.0);
    }
    ic
}

fn obtain(
    setup: &Setup,
    cfg: &RunConfig,
    p: usize,
    sense: Sense,
    chi: Option<&Vec<f64>>,
) -> Result<(ComparisonModel, &'static str)> {
    let params = search_params(cfg);
    let r = cfg.region.radius;
    match chi {
        Some(chi) => {
            let (cm, _) = verify_only(&setup.field, &setup.chain, r, chi.clone(), sense, &params, &cfg.integrator)?;
            Ok((cm, "override"))
        }
        None => Ok((search_chi(&setup.field, &setup.chain, r, p, sense, &params, &cfg.integrator)?, "synthesized")),
    }
}

fn synthesize_entry(cfg: &RunConfig, entry: &SweepEntry) -> Result<(ArtifactEntry, Setup)> {
    let setup = build_setup(cfg, entry, chain_order(cfg))?;
    let c = &cfg.comparison;
    let ov = cfg.chi_override_for(entry);
    let (low, low_src) = obtain(&setup, cfg, c.p_low, Sense::Lower, ov.low.as_ref())?;
    let t_star = match c.t_star {
        TStar::Fixed(t) => t,
        TStar::Auto(_) => {
            let g = &c.t_grid;
            let dirs = containment_rays(cfg, &setup.field, g.directions);
            select_t_star(&low, &setup.chain, cfg.region.radius, &log_grid(g.min, g.max, g.per_decade), &dirs)?
        }
    };
    let low = low.with_t_star(t_star)?;
    let high = match c.p_high {
        Some(p) => {
            let (cm, src) = obtain(&setup, cfg, p, Sense::Lower, ov.high.as_ref())?;
            Some(ModelRecord::from_model(&cm.with_t_star(t_star)?, src))
        }
        None => None,
    };
    let upper = match c.p_upper {
        Some(p) => {
            let (cm, src) = obtain(&setup, cfg, p, Sense::Upper, ov.upper.as_ref())?;
            Some(ModelRecord::from_model(&cm.with_t_star(t_star)?, src))
        }
        None => None,
    };
    let entry = ArtifactEntry { sigma: entry.sigma, t_star, low: ModelRecord::from_model(&low, low_src), high, upper };
    Ok((entry, setup))
}

/// Synthesize (or verify overrides of) every comparison model in the sweep.
pub fn synthesize(cfg: &RunConfig) -> Result<Artifact> {
    let mut entries = Vec::new();
    let mut head: Option<Setup> = None;
    for e in cfg.sweep() {
        let (entry, setup) = synthesize_entry(cfg, &e)?;
        entries.push(entry);
        head.get_or_insert(setup);
    }
    let setup = head.ok_or_else(|| Error::Config("empty sweep".into()))?;
    Ok(Artifact {
        model_key: model_key(cfg),
        xi: setup.field.xi,
        gamma_degree: setup.chain.gamma_degree,
        homogenized: setup.field.homogenized,
        region_radius: cfg.region.radius,
        seed: cfg.seed,
        entries,
    })
}

/// Reject artifacts produced for a different model.
pub fn check_artifact(cfg: &RunConfig, art: &Artifact) -> Result<()> {
    if art.model_key != model_key(cfg) {
        return Err(Error::Config("artifact was produced for a different model or homogenization".into()));
    }
    for e in cfg.sweep() {
        if art.entry_for(e.sigma).is_none() {
            return Err(Error::Config(format!("artifact has no entry for sigma = {:?}", e.sigma)));
        }
    }
    Ok(())
}

/// Plant states the table is averaged over.
pub fn initial_conditions(cfg: &RunConfig) -> Vec<Vec<f64>> {
    let n = cfg.model.n;
    match &cfg.experiment.initial_conditions {
        InitialConditions::Explicit(xs) => xs.clone(),
        InitialConditions::SphereBoundary { count, radius, plane } => match (plane, n) {
            (_, 1) => (0..*count).map(|k| vec![if k % 2 == 0 { *radius } else { -*radius }]).collect(),
            (Some([a, b]), _) => sampling::circle_points(*count, n, (*a, *b), *radius),
            (None, 2) => sampling::circle_points(*count, 2, (0, 1), *radius),
            (None, 3) => sampling::fibonacci_sphere(*count, *radius),
            (None, _) => {
                sampling::sphere_points(*count, n, cfg.seed).into_iter().map(|d| d.iter().map(|v| v * radius).collect()).collect()
            }
        },
    }
}

/// Self-trigger policy for an artifact entry.
pub fn policy(cfg: &RunConfig, setup: &Setup, entry: &ArtifactEntry, n_iter: usize) -> Result<SelfTrigger> {
    let low = entry.low.to_model()?;
    let spec = match cfg.comparison.bound_method() {
        BoundMethod::ClosedForm => BoundSpec::ClosedFormP3(low),
        BoundMethod::PolyRoot => BoundSpec::PolyRoot(low),
        BoundMethod::Iterative => {
            let high = entry
                .high
                .as_ref()
                .ok_or_else(|| Error::Config("iterative method needs a high-order model in the artifact".into()))?
                .to_model()?;
            BoundSpec::Iterative { low, high, n_iter }
        }
    };
    Ok(SelfTrigger { chain: setup.chain.clone(), spec })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub sigma: Option<f64>,
    pub n_iter: Option<usize>,
    /// Averages over the initial conditions, in seconds.
    pub periodic: Option<f64>,
    pub prev: Option<f64>,
    pub selftrig: Option<f64>,
    pub event: Option<f64>,
    pub upper: Option<f64>,
    pub samples: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Average first inter-execution time from each initial condition, per σ and
/// per iteration count.
pub fn table(cfg: &RunConfig, art: &Artifact) -> Result<Vec<TableRow>> {
    check_artifact(cfg, art)?;
    let xs = initial_conditions(cfg);
    if xs.is_empty() {
        return Ok(vec![]);
    }
    let has = |k: StrategyKind| cfg.experiment.strategies.contains(&k);
    let iterative = cfg.comparison.bound_method() == BoundMethod::Iterative;
    let n_iters: Vec<Option<usize>> =
        if iterative { cfg.experiment.n_iter.iter().map(|&k| Some(k)).collect() } else { vec![None] };
    let mut rows = Vec::new();
    for sweep in cfg.sweep() {
        let entry = art.entry_for(sweep.sigma).expect("checked above");
        let setup = build_setup(cfg, &sweep, chain_order(cfg))?;
        let ic = integrator_for(cfg, entry.t_star);
        let event = if has(StrategyKind::Event) {
            let t: Vec<f64> = xs
                .par_iter()
                .map(|x| event_time_oracle(&setup.plant, &setup.plant_gamma, &setup.plant.fresh_state(x), &ic))
                .collect::<Result<_>>()?;
            mean(&t)
        } else {
            None
        };
        let periodic = if has(StrategyKind::Periodic) { sweep.periodic_period } else { None };
        let prev = match (has(StrategyKind::Prev), sweep.prior_tau_star) {
            (true, Some(ts)) => {
                let xi = setup.field.xi.unwrap_or(1.0);
                let t: Vec<f64> = xs
                    .iter()
                    .map(|x| prior_work_interval(x, ts, cfg.region.radius, xi, setup.field.homogenized))
                    .collect();
                mean(&t)
            }
            _ => None,
        };
        let upper = match &entry.upper {
            Some(rec) => {
                let cm = rec.to_model()?;
                let t: Vec<f64> = xs
                    .par_iter()
                    .map(|x| tau_upper(&cm, &setup.chain, &setup.field.fresh_state(x)))
                    .collect::<Result<_>>()?;
                mean(&t)
            }
            None => None,
        };
        for &n_iter in &n_iters {
            let selftrig = if has(StrategyKind::Selftrig) {
                let pol = policy(cfg, &setup, entry, n_iter.unwrap_or(1))?;
                let t: Vec<f64> = xs.par_iter().map(|x| Ok(pol.bound(x)?.tau_lower)).collect::<Result<_>>()?;
                mean(&t)
            } else {
                None
            };
            rows.push(TableRow {
                sigma: sweep.sigma,
                n_iter,
                periodic,
                prev,
                selftrig,
                event,
                upper,
                samples: xs.len(),
            });
        }
    }
    Ok(rows)
}

fn ms(v: Option<f64>) -> String {
    v.map_or(String::new(), |s| format!("{:.6}", s * 1e3))
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_table_csv(rows: &[TableRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "sigma,n_iter,periodic_ms,selftrig_prev_ms,selftrig_new_ms,event_ms,selftrig_upper_ms,samples")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            opt(r.sigma),
            opt(r.n_iter),
            ms(r.periodic),
            ms(r.prev),
            ms(r.selftrig),
            ms(r.event),
            ms(r.upper),
            r.samples
        )?;
    }
    Ok(())
}

fn select_entries(cfg: &RunConfig, sigma: Option<f64>) -> Result<Vec<SweepEntry>> {
    let all = cfg.sweep();
    match sigma {
        None => Ok(all),
        Some(s) => {
            let hit: Vec<SweepEntry> = all.into_iter().filter(|e| e.sigma == Some(s)).collect();
            if hit.is_empty() {
                Err(Error::Config(format!("sigma = {s} is not part of the sweep")))
            } else {
                Ok(hit)
            }
        }
    }
}

/// Closed-loop runs from `x0` for every configured strategy.
pub fn traces(cfg: &RunConfig, art: &Artifact, sigma: Option<f64>, x0: &[f64]) -> Result<Vec<(Option<f64>, SimTrace)>> {
    check_artifact(cfg, art)?;
    if x0.len() != cfg.model.n {
        return Err(Error::Config(format!("x0 must have n = {} entries", cfg.model.n)));
    }
    let n_iter = cfg.experiment.n_iter.iter().copied().max().unwrap_or(1);
    let mut out = Vec::new();
    for sweep in select_entries(cfg, sigma)? {
        let entry = art.entry_for(sweep.sigma).expect("checked above");
        let setup = build_setup(cfg, &sweep, chain_order(cfg))?;
        let ic = integrator_for(cfg, entry.t_star);
        let pol = policy(cfg, &setup, entry, n_iter)?;
        let mut strategies = Vec::new();
        for k in &cfg.experiment.strategies {
            let s = match k {
                StrategyKind::Periodic => sweep.periodic_period.map(|period| Strategy::Periodic { period }),
                StrategyKind::Prev => sweep.prior_tau_star.map(|tau_star| Strategy::PriorWork {
                    tau_star,
                    radius: cfg.region.radius,
                    xi: setup.field.xi.unwrap_or(1.0),
                    homogenized: setup.field.homogenized,
                }),
                StrategyKind::Selftrig => Some(Strategy::SelfTriggered(&pol)),
                StrategyKind::Event => Some(Strategy::Event),
            };
            if let Some(s) = s {
                strategies.push(s);
            }
        }
        let runs: Vec<SimTrace> = strategies
            .par_iter()
            .map(|s| run_closed_loop(&setup.plant, &setup.plant_gamma, s, x0, cfg.experiment.t_end, &ic))
            .collect::<Result<_>>()?;
        out.extend(runs.into_iter().map(|t| (sweep.sigma, t)));
    }
    Ok(out)
}

/// One row per execution: its instant and the time until the next one.
pub fn write_exec_csv(traces: &[(Option<f64>, SimTrace)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "sigma,strategy,index,t_s,inter_exec_ms")?;
    for (sigma, tr) in traces {
        let gaps = tr.inter_exec();
        for (i, g) in gaps.iter().enumerate() {
            writeln!(w, "{},{},{},{:.9},{:.6}", opt(*sigma), tr.strategy, i, tr.exec_instants[i], g * 1e3)?;
        }
    }
    Ok(())
}

/// Approximate and exact isochrones plus the inscribed sphere.
pub fn manifold_clouds(
    cfg: &RunConfig,
    art: &Artifact,
    sigma: Option<f64>,
    t_star: Option<f64>,
    kinds: &[CloudKind],
) -> Result<Vec<ManifoldCloud>> {
    check_artifact(cfg, art)?;
    let sweep = select_entries(cfg, sigma)?.into_iter().next().ok_or_else(|| Error::Config("empty sweep".into()))?;
    let entry = art.entry_for(sweep.sigma).expect("checked above");
    let setup = build_setup(cfg, &sweep, chain_order(cfg))?;
    let t_star = t_star.or(cfg.manifold.t_star).unwrap_or(entry.t_star);
    let cm = entry.low.to_model()?.with_t_star(t_star)?;
    let dirs = manifold::default_directions(cfg.model.n, setup.field.homogenized, cfg.manifold.directions);
    let ic = integrator_for(cfg, t_star);
    let want = |k: CloudKind| kinds.contains(&k);
    let approx = if want(CloudKind::Approx) { Some(manifold::sample_approx(&cm, &setup.chain, &dirs, t_star)?) } else { None };
    let exact = if want(CloudKind::Exact) || want(CloudKind::Sphere) {
        let method = if setup.field.xi.is_some() { ExactMethod::ScalingLaw } else { ExactMethod::Bisection };
        Some(manifold::sample_exact(&setup.field, &setup.field_gamma, &dirs, t_star, &ic, method)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for k in kinds {
        match k {
            CloudKind::Approx => out.extend(approx.clone()),
            CloudKind::Exact => out.extend(exact.clone()),
            CloudKind::Sphere => {
                let r = exact.as_ref().and_then(manifold::inscribed_radius).unwrap_or(cfg.region.radius);
                out.push(manifold::sphere_cloud(&dirs, r, t_star)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub sigma: Option<f64>,
    pub role: &'static str,
    pub p: usize,
    pub sense: Sense,
    pub report: VerificationReport,
}

/// Re-check the coefficients of an artifact (or of the config overrides) on a
/// fresh verification set.
pub fn verify(cfg: &RunConfig, art: Option<&Artifact>) -> Result<Vec<VerifyRow>> {
    if let Some(a) = art {
        check_artifact(cfg, a)?;
    }
    let mut params = search_params(cfg);
    params.seed = params.seed.wrapping_add(0x7e51);
    let mut rows = Vec::new();
    for sweep in cfg.sweep() {
        let setup = build_setup(cfg, &sweep, chain_order(cfg))?;
        let ov = cfg.chi_override_for(&sweep);
        let models: Vec<(&'static str, Sense, Option<Vec<f64>>)> = match art {
            Some(a) => {
                let e = a.entry_for(sweep.sigma).expect("checked above");
                vec![
                    ("low", Sense::Lower, Some(e.low.chi.clone())),
                    ("high", Sense::Lower, e.high.as_ref().map(|r| r.chi.clone())),
                    ("upper", Sense::Upper, e.upper.as_ref().map(|r| r.chi.clone())),
                ]
            }
            None => vec![
                ("low", Sense::Lower, ov.low.clone()),
                ("high", Sense::Lower, ov.high.clone()),
                ("upper", Sense::Upper, ov.upper.clone()),
            ],
        };
        for (role, sense, chi) in models {
            let Some(chi) = chi else { continue };
            let p = chi.len();
            let (_, report) =
                verify_only(&setup.field, &setup.chain, cfg.region.radius, chi, sense, &params, &cfg.integrator)?;
            rows.push(VerifyRow { sigma: sweep.sigma, role, p, sense, report });
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("nothing to verify: give an artifact or chi_override".into()));
    }
    Ok(rows)
}

pub fn write_verify_csv(rows: &[VerifyRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "sigma,model,p,sense,samples,violations,max_residual,passed")?;
    for r in rows {
        let sense = match r.sense {
            Sense::Lower => "lower",
            Sense::Upper => "upper",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{:e},{}",
            opt(r.sigma),
            r.role,
            r.p,
            sense,
            r.report.samples,
            r.report.violations,
            r.report.max_residual,
            r.report.passed
        )?;
    }
    Ok(())
}

/// Warn about trace starts outside the region where bounds are guaranteed.
pub fn outside_region(cfg: &RunConfig, x0: &[f64]) -> bool {
    norm(x0) > cfg.region.radius
}
