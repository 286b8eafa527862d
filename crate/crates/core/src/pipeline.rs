//! End-to-end placement run: config in, report out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::baselines::{self, ComparisonReport, GreedyResult};
use crate::exec::Execution;
use crate::fim::{ElementaryFimSet, SensorVector};
use crate::priors::{sample_prior, PriorSpec};
use crate::solver::{certify_or_repair, solve_relaxed, BinaryPlacement, RelaxedSolution, SolverOptions};
use crate::structural::{ShearBuildingModel, TimeGrid};
use crate::{Error, Result};

pub const SOFTWARE: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Label of the solver's certified placement in comparison tables.
pub const REFERENCE_LABEL: &str = "z_star";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    ZLow,
    ZHigh,
    ZCommon,
    ZGreedy,
    ZExhaustive,
}

impl Baseline {
    pub const ALL: [Baseline; 5] = [
        Baseline::ZLow,
        Baseline::ZHigh,
        Baseline::ZCommon,
        Baseline::ZGreedy,
        Baseline::ZExhaustive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Baseline::ZLow => "z_low",
            Baseline::ZHigh => "z_high",
            Baseline::ZCommon => "z_common",
            Baseline::ZGreedy => "z_greedy",
            Baseline::ZExhaustive => "z_exhaustive",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == label)
    }
}

fn default_samples() -> usize {
    1000
}

fn default_baselines() -> Vec<Baseline> {
    vec![Baseline::ZLow, Baseline::ZHigh, Baseline::ZCommon, Baseline::ZGreedy]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_dof: usize,
    pub budget: usize,
    pub n_steps: usize,
    /// Sampling interval in seconds.
    pub dt: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Baseline>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write every elementary matrix entry as CSV.
    #[serde(default)]
    pub dump_elementary: bool,
}

impl RunConfig {
    /// Config with the default prior, solver options and baselines.
    pub fn new(n_dof: usize, budget: usize, n_steps: usize, dt: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            n_dof,
            budget,
            n_steps,
            dt,
            n_samples,
            seed,
            prior: PriorSpec::default(),
            solver: SolverOptions::default(),
            baselines: default_baselines(),
            output_dir: None,
            dump_elementary: false,
        }
    }

    /// Every semantic violation, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_dof == 0 {
            v.push("n_dof: must be at least 1".to_string());
        }
        if self.budget == 0 || self.budget > self.n_dof {
            v.push(format!(
                "budget: {} sensors is infeasible for {} DOFs (need 1 <= budget <= n_dof)",
                self.budget, self.n_dof
            ));
        }
        if self.n_steps == 0 {
            v.push("n_steps: must be at least 1".to_string());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push("dt: must be positive and finite".to_string());
        }
        if self.n_samples == 0 {
            v.push("n_samples: must be at least 1".to_string());
        }
        if let Err(e) = self.prior.validate() {
            v.push(format!("prior: {e}"));
        }
        if let Err(e) = self.solver.validate() {
            v.push(format!("solver: {e}"));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

const REQUIRED: [&str; 4] = ["n_dof", "budget", "n_steps", "dt"];
const OPTIONAL: [&str; 7] = [
    "n_samples",
    "seed",
    "prior",
    "solver",
    "baselines",
    "output_dir",
    "dump_elementary",
];

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errors: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("{key}: {e}"));
            None
        }
    }
}

/// Parses and validates a JSON run config, reporting every violation found
/// rather than stopping at the first.
pub fn validate_config(raw: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(raw).map_err(|e| Error::Config(vec![format!("malformed JSON: {e}")]))?;
    let Value::Object(obj) = value else {
        return Err(Error::Config(vec!["config must be a JSON object".to_string()]));
    };
    let mut errors = Vec::new();
    for key in obj.keys() {
        if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
            errors.push(format!("{key}: unknown key"));
        }
    }
    for key in REQUIRED {
        if !obj.contains_key(key) {
            errors.push(format!("{key}: missing required field"));
        }
    }
    let mut cfg = RunConfig::new(0, 0, 0, 0.0, default_samples(), 0);
    macro_rules! take {
        ($($name:ident),*) => {$(
            if let Some(v) = field(&obj, stringify!($name), &mut errors) {
                cfg.$name = v;
            }
        )*};
    }
    take!(
        n_dof,
        budget,
        n_steps,
        dt,
        n_samples,
        seed,
        prior,
        solver,
        baselines,
        output_dir,
        dump_elementary
    );
    // Semantic checks only for fields that are present and well-typed.
    let broken = |k: &str| {
        REQUIRED.contains(&k) && !obj.contains_key(k) || errors.iter().any(|e| e.starts_with(&format!("{k}:")))
    };
    let budget_unknowable = broken("n_dof") || broken("budget");
    let semantic: Vec<String> = cfg
        .violations()
        .into_iter()
        .filter(|v| {
            let key = v.split(':').next().unwrap_or_default();
            !broken(key) && !(key == "budget" && budget_unknowable)
        })
        .collect();
    errors.extend(semantic);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    validate_config(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedySummary {
    pub order: Vec<usize>,
    pub evaluations: usize,
    pub regularized: bool,
}

impl From<&GreedyResult> for GreedySummary {
    fn from(g: &GreedyResult) -> Self {
        Self {
            order: g.order.iter().map(|i| i + 1).collect(),
            evaluations: g.evaluations,
            regularized: g.regularized,
        }
    }
}

/// Deterministic run payload: everything except wall-clock timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub software: Software,
    pub config: RunConfig,
    pub relaxed: RelaxedSolution,
    pub placement: BinaryPlacement,
    pub comparison: ComparisonReport,
    pub greedy: Option<GreedySummary>,
    /// Baselines that were requested but not run, with the reason.
    pub skipped: BTreeMap<String, String>,
}

impl PlacementReport {
    pub fn stories(&self) -> Vec<usize> {
        self.placement.delta.stories()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Human-readable summary: the case and selected stories, then the
    /// comparison table.
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "{SOFTWARE} {VERSION}  seed {}", c.seed);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>5} {:>5} {:>6} {:>6} {:>8}  sensor stories",
            "N_d", "N_o", "N", "N_k", "dt"
        );
        let _ = writeln!(
            s,
            "{:>5} {:>5} {:>6} {:>6} {:>8}  {}",
            c.n_dof,
            c.budget,
            c.n_steps,
            c.n_samples,
            c.dt,
            join(&self.stories())
        );
        let p = &self.placement;
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "relaxed: {} Newton iterations, {} evaluations, converged {}, kkt residual {:.2e}",
            self.relaxed.iterations,
            self.relaxed.objective_evaluations,
            self.relaxed.converged,
            self.relaxed.kkt_residual
        );
        let _ = writeln!(
            s,
            "binary: certificate {:?}, certified {}, gap {:.3e}, ambiguous stories [{}]",
            p.certificate,
            p.certified_optimal,
            p.gap,
            join(&p.ambiguous.iter().map(|i| i + 1).collect::<Vec<_>>())
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<14} {:>12} {:>10}  stories",
            "config", "E[log det Q]", "bits gain"
        );
        for r in &self.comparison.rows {
            let _ = writeln!(
                s,
                "{:<14} {:>12.4} {:>10.3}  {}",
                r.label,
                r.objective,
                r.bits_gain,
                join(&r.stories)
            );
        }
        if !self.comparison.evaluations.is_empty() {
            let _ = writeln!(s);
            for (k, v) in &self.comparison.evaluations {
                let _ = writeln!(s, "evaluations {k}: {v}");
            }
        }
        for (k, v) in &self.skipped {
            let _ = writeln!(s, "skipped {k}: {v}");
        }
        s
    }

    /// `story,z_star,delta` rows.
    pub fn write_placement_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "story,z_star,delta")?;
        for (i, (z, d)) in self
            .relaxed
            .z_star
            .as_slice()
            .iter()
            .zip(self.placement.delta.as_slice())
            .enumerate()
        {
            writeln!(out, "{},{},{}", i + 1, z, *d as u8)?;
        }
        Ok(())
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Seconds per stage, in execution order.
    pub stages: Vec<(String, f64)>,
}

pub struct RunOutput {
    pub report: PlacementReport,
    pub timings: Timings,
    pub elementary: ElementaryFimSet,
}

struct Clock {
    last: Instant,
    timings: Timings,
}

impl Clock {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings
            .stages
            .push((stage.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

/// Runs every stage from eigendecomposition to the baseline comparison.
/// Errors carry the name of the stage that produced them.
pub fn run_pipeline(config: &RunConfig, exec: Execution) -> Result<RunOutput> {
    config.validate().map_err(|e| e.at("config"))?;
    let mut clock = Clock {
        last: Instant::now(),
        timings: Timings::default(),
    };

    let model = ShearBuildingModel::uniform(config.n_dof).map_err(|e| e.at("model"))?;
    let grid = TimeGrid::new(config.n_steps, config.dt).map_err(|e| e.at("model"))?;
    clock.lap("model");

    let samples = sample_prior(&config.prior, config.n_samples, config.seed).map_err(|e| e.at("sampling"))?;
    clock.lap("sampling");

    let set = ElementaryFimSet::build(&model, &samples, &grid, exec).map_err(|e| e.at("sensitivities"))?;
    set.preflight().map_err(|e| e.at("preflight"))?;
    clock.lap("sensitivities");

    let opts = SolverOptions {
        execution: exec,
        ..config.solver
    };
    let relaxed = solve_relaxed(&set, config.budget, &opts).map_err(|e| e.at("solve"))?;
    clock.lap("solve");

    let placement = certify_or_repair(&relaxed, &set, &opts).map_err(|e| e.at("repair"))?;
    clock.lap("repair");

    let (comparison, greedy, skipped) =
        run_baselines(config, &set, &relaxed, &placement, exec).map_err(|e| e.at("baselines"))?;
    clock.lap("baselines");

    let report = PlacementReport {
        software: Software {
            name: SOFTWARE.to_string(),
            version: VERSION.to_string(),
        },
        config: config.clone(),
        relaxed,
        placement,
        comparison,
        greedy,
        skipped,
    };
    Ok(RunOutput {
        report,
        timings: clock.timings,
        elementary: set,
    })
}

type BaselineOutcome = (ComparisonReport, Option<GreedySummary>, BTreeMap<String, String>);

fn run_baselines(
    config: &RunConfig,
    set: &ElementaryFimSet,
    relaxed: &RelaxedSolution,
    placement: &BinaryPlacement,
    exec: Execution,
) -> Result<BaselineOutcome> {
    let mut rows: Vec<(String, SensorVector)> = vec![(REFERENCE_LABEL.to_string(), placement.delta.clone())];
    let mut evaluations = BTreeMap::new();
    evaluations.insert(
        REFERENCE_LABEL.to_string(),
        (relaxed.objective_evaluations + placement.objective_evaluations) as u128,
    );
    let mut greedy = None;
    let mut skipped = BTreeMap::new();
    let fixed = baselines::fixed_configs(config.n_dof, config.budget)?;
    let mut requested = config.baselines.clone();
    requested.sort();
    requested.dedup();
    for b in requested {
        match b {
            Baseline::ZLow | Baseline::ZHigh | Baseline::ZCommon => {
                let (label, z) = fixed.iter().find(|(l, _)| l == b.label()).expect("fixed layout exists");
                rows.push((label.clone(), z.clone()));
            }
            Baseline::ZGreedy => {
                let g = baselines::greedy_forward(set, config.budget, exec)?;
                evaluations.insert(b.label().to_string(), g.evaluations as u128);
                greedy = Some(GreedySummary::from(&g));
                rows.push((b.label().to_string(), g.delta));
            }
            Baseline::ZExhaustive => {
                match baselines::exhaustive(set, config.budget, config.solver.enumeration_cap as u128, exec) {
                    Ok(e) => {
                        evaluations.insert(b.label().to_string(), e.evaluations);
                        rows.push((b.label().to_string(), e.delta));
                    }
                    Err(e @ Error::EnumerationCap { .. }) => {
                        skipped.insert(b.label().to_string(), e.to_string());
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let mut report = baselines::compare(&rows, REFERENCE_LABEL, set)?;
    report.evaluations = evaluations;
    Ok((report, greedy, skipped))
}

/// Writes `report.json`, `report.txt`, `placement.csv`, `timings.json` and,
/// when requested, `elementary.csv` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put("report.json", out.report.to_json()?.as_bytes())?;
    put("report.txt", out.report.to_table().as_bytes())?;
    let mut csv = Vec::new();
    out.report.write_placement_csv(&mut csv)?;
    put("placement.csv", &csv)?;
    put(
        "timings.json",
        (serde_json::to_string_pretty(&out.timings)? + "\n").as_bytes(),
    )?;
    if out.report.config.dump_elementary {
        let mut buf = Vec::new();
        out.elementary.write_csv(&mut buf)?;
        put("elementary.csv", &buf)?;
    }
    Ok(written)
}
