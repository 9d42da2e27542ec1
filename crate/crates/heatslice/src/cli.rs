//! Config-driven experiment runner behind the `heatslice` binary.
//!
//! Every command writes `<out>/<command>.csv` with a `<command>.json` sidecar and prints one
//! pass/fail line per check. The exit status is 0 when every check passes, 1 when one fails and
//! 2 when the run could not complete.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{
    self, check_refinement_order, check_sphere_heat, heat_study, CheckResult, HeatParams, IndexParams,
    LocalizeParams, RescaleParams, ScalingParams, Tolerances,
};
use crate::geometry::ModelManifold;
use crate::kernels::RefineSchedule;
use crate::par::{self, Execution};
use crate::rescale_index::RescaleFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Geometry,
    Heat,
    Defect,
    Residual,
    Localize,
    FlatModel,
    Rescale,
    Index,
    All,
}

impl Command {
    pub fn stem(self) -> &'static str {
        match self {
            Command::Geometry => "geometry",
            Command::Heat => "heat",
            Command::Defect => "defect",
            Command::Residual => "residual",
            Command::Localize => "localize",
            Command::FlatModel => "flat-model",
            Command::Rescale => "rescale",
            Command::Index => "index",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "heatslice", version, about = "Time-sliced heat kernels, Getzler rescaling and index densities")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override one tolerance, e.g. `--tol-override kr_order=0.8`. Repeatable.
    #[arg(long = "tol-override", value_name = "KEY=VAL")]
    pub tol_override: Vec<String>,
    /// Seed for the random test kernels.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Sphere,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldConfig {
    pub kind: ManifoldKind,
    /// Sphere radius.
    pub radius: f64,
    /// Torus periods, one per dimension.
    pub periods: Vec<f64>,
    /// Grid resolution per coordinate.
    pub resolution: Vec<usize>,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig { kind: ManifoldKind::Sphere, radius: 1.0, periods: vec![], resolution: vec![48, 96] }
    }
}

impl ManifoldConfig {
    pub fn build(&self) -> Result<ModelManifold> {
        match self.kind {
            ManifoldKind::Sphere if self.radius > 0.0 => Ok(ModelManifold::sphere(self.radius)),
            ManifoldKind::Sphere => Err(Error::Config(format!("manifold.radius must be positive, got {}", self.radius))),
            ManifoldKind::Torus if !self.periods.is_empty() && self.periods.iter().all(|p| *p > 0.0) => Ok(ModelManifold::torus(&self.periods)),
            ManifoldKind::Torus => Err(Error::Config("manifold.periods must be a nonempty list of positive lengths".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t: f64,
    /// Times for the scaling fits and the index sweep.
    pub sweep: Vec<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { t: 1.0, sweep: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub start_depth: u32,
    pub max_depth: u32,
    pub tol: f64,
    /// Fixed slice count for the rescaling study.
    pub slices: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        let s = RefineSchedule::default();
        PartitionConfig { start_depth: s.start_depth, max_depth: s.max_depth, tol: s.tol, slices: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescaleConfig {
    pub base_point: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        let p = RescaleParams::default();
        RescaleConfig { base_point: p.base_point, scales: p.scales }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub nodes: usize,
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    pub mesh: f64,
    pub strength: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        let p = LocalizeParams::default();
        LocalizeConfig { nodes: p.nodes, radii: p.radii, times: p.times, mesh: p.mesh, strength: p.strength }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    /// Resolution of the grid for the density integral.
    pub density_resolution: Vec<usize>,
    /// Dyadic depth of the heat-route partition.
    pub depth: u32,
}

impl Default for IndexConfig {
    fn default() -> Self {
        let p = IndexParams::default();
        IndexConfig { density_resolution: p.density_resolution, depth: p.depth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatModelConfig {
    /// JSON fixtures; the bundled m = 2 and m = 4 models when empty.
    pub fixtures: Vec<PathBuf>,
    pub t: f64,
    pub slices: usize,
}

impl Default for FlatModelConfig {
    fn default() -> Self {
        FlatModelConfig { fixtures: vec![], t: 1.0, slices: 64 }
    }
}

/// The whole experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub manifold: ManifoldConfig,
    pub time: TimeConfig,
    pub partition: PartitionConfig,
    pub rescale: RescaleConfig,
    pub localize: LocalizeConfig,
    pub index: IndexConfig,
    pub flat_model: FlatModelConfig,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out: PathBuf::from("out"),
            seed: 11,
            threads: None,
            manifold: ManifoldConfig::default(),
            time: TimeConfig::default(),
            partition: PartitionConfig::default(),
            rescale: RescaleConfig::default(),
            localize: LocalizeConfig::default(),
            index: IndexConfig::default(),
            flat_model: FlatModelConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML; errors name the offending line and field.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Artifacts of one command: the checks and the rows of its CSV table.
pub struct Outcome {
    pub checks: Vec<CheckResult>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub extra: serde_json::Value,
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn checks_table(checks: &[CheckResult]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["id", "name", "passed", "seconds", "detail"].map(String::from).to_vec();
    let rows = checks.iter().map(|c| vec![c.id.to_string(), c.name.clone(), c.passed.to_string(), format!("{:.3}", c.seconds), c.detail.clone()]).collect();
    (header, rows)
}

fn scaling_params(cfg: &ExperimentConfig) -> Result<ScalingParams> {
    let mut p = ScalingParams { manifold: cfg.manifold.build()?, ..Default::default() };
    if !cfg.time.sweep.is_empty() {
        p.times = cfg.time.sweep.clone();
    }
    Ok(p)
}

/// Run one command with a validated config.
pub fn execute(command: Command, cfg: &ExperimentConfig, exec: Execution, mut report: impl FnMut(&CheckResult)) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let simple = |checks: Vec<CheckResult>, extra: serde_json::Value| {
        let (header, rows) = checks_table(&checks);
        Outcome { checks, header, rows, extra }
    };
    let outcome = match command {
        Command::Geometry => {
            let manifold = cfg.manifold.build()?;
            let x0 = cfg.rescale.base_point.clone();
            let fam = RescaleFamily::new(manifold.clone(), &x0)?;
            let samples = vec![(vec![0.3, -0.2], vec![-0.4, 0.5]), (vec![0.6, 0.2], vec![0.5, -0.7])];
            let start = std::time::Instant::now();
            let mut rows = Vec::new();
            let mut worst: f64 = 0.0;
            for &r in &cfg.rescale.scales {
                let res = fam.with_scale(r)?.identity_residuals(&samples)?;
                worst = worst.max(res.max());
                rows.push(
                    [r, res.metric, res.distance, res.log, res.ricci, res.scalar, res.volume].iter().map(|v| fmt(*v)).collect::<Vec<_>>(),
                );
            }
            let check = CheckResult {
                id: 0,
                name: "g_r identities".into(),
                passed: worst < tol.gr_identity,
                detail: format!("worst residual {worst:.1e} over {} scales (bar {:.0e})", cfg.rescale.scales.len(), tol.gr_identity),
                metrics: json!({"worst": worst}),
                seconds: start.elapsed().as_secs_f64(),
            };
            report(&check);
            let header = ["r", "metric", "distance", "log", "ricci", "scalar", "volume"].map(String::from).to_vec();
            Outcome { checks: vec![check], header, rows, extra: json!({"manifold": manifold.name(), "base_point": x0}) }
        }
        Command::Heat => {
            let p = HeatParams {
                manifold: cfg.manifold.build()?,
                resolution: cfg.manifold.resolution.clone(),
                t: cfg.time.t,
                schedule: RefineSchedule { start_depth: cfg.partition.start_depth, max_depth: cfg.partition.max_depth, tol: cfg.partition.tol },
            };
            let study = heat_study(&p, exec)?;
            let checks = vec![check_sphere_heat(&study, tol), check_refinement_order(&study, tol)];
            checks.iter().for_each(&mut report);
            let header = ["depth", "mesh", "sup_diff", "op_diff", "fitted_order"].map(String::from).to_vec();
            let rows = study
                .table
                .rows
                .iter()
                .map(|r| vec![r.depth.to_string(), fmt(r.mesh), fmt(r.sup_diff), fmt(r.op_diff), fmt(r.fitted_order)])
                .collect();
            Outcome { checks, header, rows, extra: json!({"manifold": p.manifold.name(), "t": p.t, "oracle": study.oracle}) }
        }
        Command::Defect | Command::Residual => {
            let p = scaling_params(cfg)?;
            let check = if command == Command::Defect { experiments::defect_scaling(&p, tol)? } else { experiments::residual_scaling(&p, tol)? };
            report(&check);
            let key = if command == Command::Defect { "defect" } else { "residual" };
            let values: Vec<f64> = serde_json::from_value(check.metrics[key].clone())?;
            let rows = p.times.iter().zip(&values).map(|(t, v)| vec![fmt(*t), fmt(*v)]).collect();
            Outcome { checks: vec![check], header: vec!["t".into(), key.into()], rows, extra: json!({"manifold": p.manifold.name()}) }
        }
        Command::Localize => {
            let l = &cfg.localize;
            let p = LocalizeParams { nodes: l.nodes, radii: l.radii.clone(), times: l.times.clone(), mesh: l.mesh, strength: l.strength, ..Default::default() };
            let check = experiments::localization(&p, tol, exec)?;
            report(&check);
            let mut rows = Vec::new();
            for t in check.metrics["tables"].as_array().into_iter().flatten() {
                for r in t["table"]["rows"].as_array().into_iter().flatten() {
                    rows.push(vec![t["r0"].to_string(), r["t"].to_string(), r["slices"].to_string(), r["diff"].to_string()]);
                }
            }
            Outcome { checks: vec![check], header: ["r0", "t", "slices", "diff"].map(String::from).to_vec(), rows, extra: json!({}) }
        }
        Command::FlatModel => {
            let f = &cfg.flat_model;
            let models = if f.fixtures.is_empty() {
                vec![experiments::load_flat_model(experiments::FLAT_M2)?, experiments::load_flat_model(experiments::FLAT_M4)?]
            } else {
                f.fixtures.iter().map(|p| experiments::load_flat_model(&fs::read_to_string(p)?)).collect::<Result<Vec<_>>>()?
            };
            let table = experiments::flat_model_table(&models, f.t, f.slices)?;
            let mut checks = vec![experiments::flat_model_check(&models, tol)?];
            if let Some(m2) = models.iter().find(|m| m.dim() == 2) {
                checks.insert(0, experiments::mehler_check(m2, tol)?);
            }
            checks.iter().for_each(&mut report);
            let header = ["m", "partition_vs_closed", "duhamel_vs_closed", "partition_vs_duhamel", "partition_rel", "partition_order"]
                .map(String::from)
                .to_vec();
            let rows = table
                .iter()
                .map(|r| {
                    vec![
                        r.m.to_string(),
                        fmt(r.partition_vs_closed),
                        fmt(r.duhamel_vs_closed),
                        fmt(r.partition_vs_duhamel),
                        fmt(r.partition_rel),
                        r.partition_order.map_or("exact".into(), fmt),
                    ]
                })
                .collect();
            Outcome { checks, header, rows, extra: json!({"t": f.t, "slices": f.slices}) }
        }
        Command::Rescale => {
            let radius = match cfg.manifold.build()? {
                ModelManifold::RoundSphere { radius } => radius,
                m => return Err(Error::Config(format!("rescale runs on a sphere, got {}", m.name()))),
            };
            let p = RescaleParams {
                radius,
                base_point: cfg.rescale.base_point.clone(),
                scales: cfg.rescale.scales.clone(),
                t: cfg.time.t,
                slices: cfg.partition.slices,
                seed: cfg.seed,
            };
            let o = experiments::rescaling(&p, tol, exec)?;
            report(&o.check);
            let mut rows = Vec::new();
            for r in &o.study.rows {
                for (id, d) in &r.coeff_diffs {
                    rows.push(vec![fmt(r.r), id.clone(), fmt(*d)]);
                }
            }
            Outcome { checks: vec![o.check], header: ["r", "coeff_id", "abs_diff"].map(String::from).to_vec(), rows, extra: json!({}) }
        }
        Command::Index => {
            let manifold = cfg.manifold.build()?;
            let defaults = IndexParams::default();
            let p = IndexParams {
                density_resolution: cfg.index.density_resolution.clone(),
                heat_resolution: cfg.manifold.resolution.clone(),
                t: cfg.time.t,
                depth: cfg.index.depth,
                sweep: if cfg.time.sweep.is_empty() { defaults.sweep } else { cfg.time.sweep.clone() },
                ..defaults
            };
            let start = std::time::Instant::now();
            let routes = experiments::index_routes(&manifold, &p, true, exec)?;
            let expected = routes.expected.ok_or_else(|| Error::Config(format!("no Euler characteristic known for {}", manifold.name())))?;
            let ms = routes.mckean_singer.as_ref().expect("heat route requested");
            let (formula_tol, heat_tol) = if expected == 0.0 { (tol.index_torus, tol.index_torus) } else { (tol.index_formula, tol.index_mckean_singer) };
            let passed = (routes.formula - expected).abs() < formula_tol && (ms.index_estimate - expected).abs() < heat_tol && ms.sweep_variation() < tol.index_sweep;
            let check = CheckResult {
                id: 9,
                name: "index".into(),
                passed,
                detail: format!("density route {:.8}, heat route {:.5} (sweep variation {:.4}), expected {expected}", routes.formula, ms.index_estimate, ms.sweep_variation()),
                metrics: serde_json::to_value(&routes)?,
                seconds: start.elapsed().as_secs_f64(),
            };
            report(&check);
            let mut rows = vec![vec!["density".into(), fmt(p.t), fmt(routes.formula)], vec!["heat".into(), fmt(p.t), fmt(ms.index_estimate)]];
            rows.extend(ms.t_sweep.iter().map(|(t, v)| vec!["heat_sweep".into(), fmt(*t), fmt(*v)]));
            Outcome { checks: vec![check], header: ["route", "t", "index"].map(String::from).to_vec(), rows, extra: json!({}) }
        }
        Command::All => {
            let checks = experiments::run_all(tol, cfg.seed, exec, &mut report);
            simple(checks, json!({}))
        }
    };
    Ok(outcome)
}

fn write_artifacts(dir: &Path, command: Command, cfg: &ExperimentConfig, o: &Outcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let stem = command.stem();
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv"))).map_err(io)?;
    w.write_record(&o.header).map_err(io)?;
    for r in &o.rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    let sidecar = json!({
        "command": command,
        "config": cfg,
        "passed": o.checks.iter().all(|c| c.passed),
        "checks": o.checks,
        "extra": o.extra,
    });
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
    let mut summary = fs::File::create(dir.join(format!("{stem}_summary.txt")))?;
    for c in &o.checks {
        writeln!(summary, "{}", c.line())?;
    }
    Ok(())
}

/// Resolve flags against the config and run; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match run_inner(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("heatslice {}: {e}", cli.command.stem());
            2
        }
    }
}

fn run_inner(cli: &Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    for o in &cli.tol_override {
        cfg.tolerances.apply_override(o)?;
    }
    let exec = if cfg.threads == Some(1) { Execution::Sequential } else { Execution::Parallel };
    par::init_threads(cfg.threads);
    let outcome = execute(cli.command, &cfg, exec, |c| println!("{}", c.line()))?;
    write_artifacts(&cfg.out, cli.command, &cfg, &outcome)?;
    let passed = outcome.checks.iter().filter(|c| c.passed).count();
    println!("{}: {passed}/{} checks passed; artifacts in {}", cli.command.stem(), outcome.checks.len(), cfg.out.display());
    Ok(passed == outcome.checks.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::parse("[manifold]\nkind = \"sphere\"\nradiu = 2.0\n").unwrap_err().to_string();
        assert!(err.contains("radiu") && err.contains("line 3"), "{err}");
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn torus_needs_periods() {
        let c = ExperimentConfig::parse("[manifold]\nkind = \"torus\"\n").unwrap();
        assert!(matches!(c.manifold.build(), Err(Error::Config(_))));
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c = ExperimentConfig::parse("seed = 3\n[tolerances]\nkr_order = 0.7\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.tolerances.kr_order, 0.7);
        assert_eq!(c.tolerances.algebra, Tolerances::default().algebra);
        assert_eq!(c.manifold, ManifoldConfig::default());
    }
}
