//! Config-driven experiment runner.
//!
//! Each subcommand reads one JSON plan, validates it (unknown fields and
//! out-of-range values are rejected), echoes the plan with defaults filled
//! as `plan.json`, and writes its CSV and JSON artifacts into the output
//! directory. Wall-clock timings go to the `run_meta.json` sidecar so that
//! every other file is byte-identical across reruns.

use crate::cantor::{fat_cantor, run_counterexample};
use crate::energy::{energy, tv_relax, RelaxOptions};
use crate::error::{Error, Result};
use crate::functional::{estimate_constants, sweep, EvalOptions};
use crate::grid::{Generator, GridFunction};
use crate::mollifier::{check_admissibility, CheckOptions, FamilyDescription, Verdict};
use crate::reduce::Workers;
use crate::smoothing::{cover, discrete_convolve, partition_of_unity, verify_lip_bound};
use crate::space::{
    default_doubling_scales, estimate_doubling, estimate_poincare, poincare_test_library, DomainMask, MetricMeasureSpace,
    SpaceDescription, WeightSpec,
};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "nonlocal-lab", version, about = "Nonlocal energies on discretized metric measure spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Evaluate a mollifier family over all indices and compare with the reference energy.
    Sweep(#[command(flatten)] RunArgs),
    /// Check the admissibility conditions of a mollifier family.
    CheckMollifier(#[command(flatten)] RunArgs),
    /// Run the fat-Cantor counterexample.
    Counterexample(#[command(flatten)] RunArgs),
    /// Build coverings and partitions of unity and check the Lipschitz bound.
    Smooth(#[command(flatten)] RunArgs),
    /// Compute the reference energy (total variation, its relaxation, or the Sobolev energy).
    Energy(#[command(flatten)] RunArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, clap::Args)]
pub struct RunArgs {
    /// JSON plan.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Seed for sampled validations.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sweep(_) => "sweep",
            Command::CheckMollifier(_) => "check-mollifier",
            Command::Counterexample(_) => "counterexample",
            Command::Smooth(_) => "smooth",
            Command::Energy(_) => "energy",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Sweep(a)
            | Command::CheckMollifier(a)
            | Command::Counterexample(a)
            | Command::Smooth(a)
            | Command::Energy(a) => a,
        }
    }
}

/// Result of a successful run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    CheckFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::CheckFailed => 2,
        }
    }
}

/// A function given by name (`ramp`, `step`, `tent`, `square`, `cantor`) or as a generator object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Named(String),
    Generator(Generator),
}

impl FunctionSpec {
    fn generator(&self, space: &SpaceDescription) -> Result<Generator> {
        let name = match self {
            FunctionSpec::Generator(g) => return Ok(g.clone()),
            FunctionSpec::Named(name) => name,
        };
        Ok(match name.as_str() {
            "ramp" => Generator::Ramp { slope: 1.0, offset: 0.0 },
            "step" => Generator::Step { at: 0.5, height: 1.0 },
            "tent" => Generator::Tent {
                left: 0.375,
                right: 0.625,
                height: 1.0,
            },
            "square" => Generator::Power { power: 2.0 },
            "cantor" => match space {
                SpaceDescription::Interval {
                    weights: WeightSpec::Generator(g),
                    ..
                } if g.generator == "fat_cantor" => Generator::Cantor { depth: g.depth },
                _ => {
                    return Err(Error::Config(
                        "function \"cantor\" needs fat_cantor weights; otherwise give {\"kind\": \"cantor\", \"depth\": m}".into(),
                    ))
                }
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown function {other:?}; expected one of ramp, step, tent, square, cantor, or a generator object"
                )))
            }
        })
    }

    fn build(&self, desc: &SpaceDescription, space: &MetricMeasureSpace) -> Result<GridFunction> {
        self.generator(desc)?.build(space)
    }
}

/// A domain mask: `"full"`, a list of `[a, b]` coordinate intervals, or explicit membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    Named(String),
    Intervals { intervals: Vec<(f64, f64)> },
    Explicit(Vec<bool>),
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec::Named("full".into())
    }
}

impl MaskSpec {
    fn build(&self, space: &MetricMeasureSpace) -> Result<DomainMask> {
        match self {
            MaskSpec::Named(n) if n == "full" => Ok(DomainMask::full(space)),
            MaskSpec::Named(n) => Err(Error::Config(format!("unknown mask {n:?}; expected \"full\""))),
            MaskSpec::Intervals { intervals } => DomainMask::intervals(space, intervals),
            MaskSpec::Explicit(m) => {
                if m.len() != space.len() {
                    return Err(Error::LengthMismatch {
                        expected: space.len(),
                        got: m.len(),
                    });
                }
                Ok(DomainMask::new(m.clone()))
            }
        }
    }
}

fn default_window() -> usize {
    3
}
fn default_deltas() -> Vec<f64> {
    vec![0.5, 0.1]
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_cd() -> f64 {
    2.0
}
fn default_p() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub space: SpaceDescription,
    pub function: FunctionSpec,
    pub family: FamilyDescription,
    pub p: f64,
    #[serde(default)]
    pub omega: MaskSpec,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Envelope radius of the total variation reference (`p = 1`).
    #[serde(default)]
    pub energy_delta: f64,
    /// Overrides the computed reference energy (e.g. an analytic value).
    #[serde(default)]
    pub energy_reference: Option<f64>,
    #[serde(default)]
    pub eval: EvalOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckPlan {
    pub space: SpaceDescription,
    pub family: FamilyDescription,
    pub p: f64,
    /// Probe radii for the `nu`-mass and tail conditions.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub tail_domain: MaskSpec,
    /// Also estimate the Poincaré constant from a seeded test library.
    #[serde(default)]
    pub poincare: bool,
    #[serde(default)]
    pub check: CheckOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexamplePlan {
    pub depth: u32,
    pub n_cells: usize,
    pub radii: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothPlan {
    pub space: SpaceDescription,
    pub function: FunctionSpec,
    #[serde(default = "default_p")]
    pub p: f64,
    pub radii: Vec<f64>,
    /// The set `U`.
    pub target: MaskSpec,
    /// Ambient domain; when given, `R < dist(U, X \ Omega) / 10` is enforced.
    #[serde(default)]
    pub omega: Option<MaskSpec>,
    #[serde(default = "default_cd")]
    pub cd_assumed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxPlan {
    pub eps_schedule: Vec<f64>,
    #[serde(default = "default_relax_tol")]
    pub tol: f64,
    #[serde(default = "default_relax_max_iter")]
    pub max_iter: usize,
}

fn default_relax_tol() -> f64 {
    RelaxOptions::default().tol
}
fn default_relax_max_iter() -> usize {
    RelaxOptions::default().max_iter
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyPlan {
    pub space: SpaceDescription,
    pub function: FunctionSpec,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub relax: Option<RelaxPlan>,
}

/// A validated plan for one subcommand.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Plan {
    Sweep(SweepPlan),
    CheckMollifier(CheckPlan),
    Counterexample(CounterexamplePlan),
    Smooth(SmoothPlan),
    Energy(EnergyPlan),
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("p out of range: p ≥ 1 required, got {p}")))
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Parses and validates the plan for `command` (`sweep`, `check-mollifier`, ...).
pub fn parse_config(command: &str, text: &str) -> Result<Plan> {
    let plan = match command {
        "sweep" => {
            let plan: SweepPlan = parse(text)?;
            check_p(plan.p)?;
            if plan.window == 0 {
                return Err(Error::Config("window out of range: window ≥ 1 required, got 0".into()));
            }
            if !(plan.energy_delta >= 0.0) {
                return Err(Error::Config(format!("energy_delta out of range: ≥ 0 required, got {}", plan.energy_delta)));
            }
            Plan::Sweep(plan)
        }
        "check-mollifier" => {
            let plan: CheckPlan = parse(text)?;
            check_p(plan.p)?;
            if plan.deltas.is_empty() || plan.deltas.iter().any(|d| !(*d > 0.0)) {
                return Err(Error::Config("deltas out of range: nonempty, each > 0".into()));
            }
            Plan::CheckMollifier(plan)
        }
        "counterexample" => {
            let plan: CounterexamplePlan = parse(text)?;
            if !(1..=12).contains(&plan.depth) {
                return Err(Error::Config(format!("depth out of range: 1 ≤ depth ≤ 12 required, got {}", plan.depth)));
            }
            if !(plan.epsilon > 0.0 && plan.epsilon < 1.0) {
                return Err(Error::Config(format!("epsilon out of range: 0 < epsilon < 1 required, got {}", plan.epsilon)));
            }
            Plan::Counterexample(plan)
        }
        "smooth" => {
            let plan: SmoothPlan = parse(text)?;
            check_p(plan.p)?;
            if plan.radii.is_empty() || plan.radii.iter().any(|r| !(*r > 0.0)) {
                return Err(Error::Config("radii out of range: nonempty, each > 0".into()));
            }
            Plan::Smooth(plan)
        }
        "energy" => {
            let plan: EnergyPlan = parse(text)?;
            check_p(plan.p)?;
            if !(plan.delta >= 0.0) {
                return Err(Error::Config(format!("delta out of range: ≥ 0 required, got {}", plan.delta)));
            }
            Plan::Energy(plan)
        }
        other => return Err(Error::Config(format!("unknown command {other:?}"))),
    };
    Ok(plan)
}

/// Formats a float with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Output files collected in memory and written only when a run succeeds.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(name, s);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes into a staging directory next to `out`, then moves the files in.
    /// The staging directory is removed whether or not the write succeeds.
    pub fn commit(&self, out: &Path) -> Result<()> {
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(parent)?;
        let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
        let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
        let result = (|| -> Result<()> {
            std::fs::create_dir_all(&staging)?;
            for (file, contents) in &self.files {
                std::fs::write(staging.join(file), contents)?;
            }
            std::fs::create_dir_all(out)?;
            for (file, _) in &self.files {
                std::fs::rename(staging.join(file), out.join(file))?;
            }
            Ok(())
        })();
        let _ = std::fs::remove_dir_all(&staging);
        result
    }
}

/// Run settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub workers: Workers,
    pub seed: u64,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    workers: usize,
    seed: u64,
    elapsed_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    index_seconds: Option<Vec<f64>>,
}

/// Runs a validated plan, returning the artifacts and the check outcome.
pub fn run_plan(plan: &Plan, ctx: &RunContext) -> Result<(Artifacts, Outcome)> {
    let mut out = Artifacts::default();
    out.json("plan.json", plan)?;
    let start = Instant::now();
    let (command, outcome, index_seconds) = match plan {
        Plan::Sweep(p) => {
            let secs = run_sweep(p, ctx, &mut out).map_err(|e| e.context("sweep"))?;
            ("sweep", Outcome::Pass, Some(secs))
        }
        Plan::CheckMollifier(p) => ("check-mollifier", run_check(p, ctx, &mut out).map_err(|e| e.context("check-mollifier"))?, None),
        Plan::Counterexample(p) => ("counterexample", run_cantor(p, ctx, &mut out).map_err(|e| e.context("counterexample"))?, None),
        Plan::Smooth(p) => ("smooth", run_smooth(p, ctx, &mut out).map_err(|e| e.context("smooth"))?, None),
        Plan::Energy(p) => ("energy", run_energy(p, &mut out).map_err(|e| e.context("energy"))?, None),
    };
    out.json(
        "run_meta.json",
        &RunMeta {
            command,
            version: env!("CARGO_PKG_VERSION"),
            workers: ctx.workers.threads(),
            seed: ctx.seed,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            index_seconds,
        },
    )?;
    Ok((out, outcome))
}

fn run_sweep(plan: &SweepPlan, ctx: &RunContext, out: &mut Artifacts) -> Result<Vec<f64>> {
    let space = plan.space.build().map_err(|e| e.context("space"))?;
    let f = plan.function.build(&plan.space, &space).map_err(|e| e.context("function"))?;
    let family = plan.family.build(plan.p).map_err(|e| e.context("family"))?;
    let omega = plan.omega.build(&space).map_err(|e| e.context("omega"))?;
    // a short family is swept in full with the window shrunk to its length
    let window = plan.window.min(family.len());
    if window < plan.window {
        log::warn!("window {} exceeds the {} family indices; using {window}", plan.window, family.len());
    }
    let result = sweep(&space, &f, &family, &omega, window, &plan.eval, &ctx.workers)?;
    let reference = match plan.energy_reference {
        Some(value) => crate::energy::EnergyReport {
            p: plan.p,
            variant: crate::energy::Variant::Raw,
            value,
            delta: None,
            per_edge: None,
            curve: None,
        },
        None => energy(&f, &space, plan.p, plan.energy_delta).map_err(|e| e.context("energy"))?,
    };
    let estimate = estimate_constants(&result, &reference)?;

    let mut csv = String::from("index_param,value,pairs_enumerated\n");
    for ((x, v), n) in result.indices.iter().zip(&result.values).zip(&result.pairs) {
        writeln!(csv, "{},{},{n}", fmt_float(*x), fmt_float(*v)).expect("write to string");
    }
    let footer = serde_json::json!({
        "tail_lo": result.tail_lo,
        "tail_hi": result.tail_hi,
        "window": result.window,
        "c1_hat": estimate.c1_hat,
        "c2_hat": estimate.c2_hat,
        "degenerate": estimate.degenerate,
        "energy": estimate.energy_ref.value,
    });
    writeln!(csv, "# {footer}").expect("write to string");
    out.add("sweep.csv", csv);
    out.json("sweep.json", &serde_json::json!({ "sweep": result, "constants": estimate }))?;
    Ok(result.seconds)
}

fn run_check(plan: &CheckPlan, ctx: &RunContext, out: &mut Artifacts) -> Result<Outcome> {
    let space = plan.space.build().map_err(|e| e.context("space"))?;
    let family = plan.family.build(plan.p).map_err(|e| e.context("family"))?;
    let tail = plan.tail_domain.build(&space).map_err(|e| e.context("tail_domain"))?;
    let report = check_admissibility(&family, &space, &plan.deltas, &tail, &plan.check, &ctx.workers)?;
    let cd = estimate_doubling(&space, &default_doubling_scales(&space))?;
    let poincare = if plan.poincare {
        let tests = poincare_test_library(&space, ctx.seed)?;
        Some(estimate_poincare(&space, plan.p, &tests, 1.0)?)
    } else {
        None
    };
    let mut csv = String::from("index,param,lower_option,option_a_constant,majorant_sum\n");
    for (i, param) in report.params.iter().enumerate() {
        let opt = serde_json::to_value(report.lower_option[i])?;
        writeln!(
            csv,
            "{i},{},{},{},{}",
            fmt_float(*param),
            opt.as_str().unwrap_or_default(),
            report.option_a_constant[i].map(fmt_float).unwrap_or_default(),
            fmt_float(report.majorant_sums[i])
        )
        .expect("write to string");
    }
    out.add("admissibility.csv", csv);
    out.json(
        "admissibility.json",
        &serde_json::json!({ "report": report, "doubling_constant": cd, "poincare": poincare }),
    )?;
    Ok(match report.verdict {
        Verdict::Pass => Outcome::Pass,
        Verdict::Fail => Outcome::CheckFailed,
    })
}

fn run_cantor(plan: &CounterexamplePlan, ctx: &RunContext, out: &mut Artifacts) -> Result<Outcome> {
    fat_cantor(plan.depth)?;
    let report = run_counterexample(plan.depth, plan.n_cells, &plan.radii, plan.epsilon, &ctx.workers)?;
    let mut csv = String::from("radius,functional_value\n");
    for (r, v) in report.radii.iter().zip(&report.functional_values) {
        writeln!(csv, "{},{}", fmt_float(*r), fmt_float(*v)).expect("write to string");
    }
    out.add("counterexample.csv", csv);
    out.json("counterexample.json", &report)?;
    Ok(if report.lower_bound_check { Outcome::Pass } else { Outcome::CheckFailed })
}

#[derive(Serialize)]
struct SmoothRow {
    radius: f64,
    centers: usize,
    n_classes: usize,
    max_multiplicity: usize,
    c0: f64,
    cd_assumed: f64,
    cd_measured: f64,
    lipschitz_bound: f64,
    max_measured_lipschitz: f64,
    l1_error: f64,
    lip_bound: crate::smoothing::LipBoundReport,
}

fn run_smooth(plan: &SmoothPlan, ctx: &RunContext, out: &mut Artifacts) -> Result<Outcome> {
    let space = plan.space.build().map_err(|e| e.context("space"))?;
    let f = plan.function.build(&plan.space, &space).map_err(|e| e.context("function"))?;
    let u = plan.target.build(&space).map_err(|e| e.context("target"))?;
    let omega = plan.omega.as_ref().map(|m| m.build(&space)).transpose().map_err(|e| e.context("omega"))?;
    let mut rows = Vec::new();
    let mut csv = String::from("R,p,lhs,rhs,measured,theoretical,pass\n");
    let mut all_pass = true;
    for &r in &plan.radii {
        let covering = cover(&space, &u, r, omega.as_ref(), plan.cd_assumed)?;
        let pou = partition_of_unity(&space, &covering)?;
        let h = discrete_convolve(&space, &f, &covering, &pou)?;
        let l1_error = u.indices().map(|x| (h[x] - f[x]).abs() * space.mass(x)).sum();
        let report = verify_lip_bound(&space, &f, &covering, &pou, plan.p, omega.as_ref(), &ctx.workers)?;
        all_pass &= report.pass;
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_float(r),
            fmt_float(plan.p),
            fmt_float(report.lhs),
            fmt_float(report.rhs),
            report.measured_constant.map(fmt_float).unwrap_or_default(),
            fmt_float(report.theoretical_constant),
            report.pass
        )
        .expect("write to string");
        rows.push(SmoothRow {
            radius: r,
            centers: covering.centers.len(),
            n_classes: covering.n_classes,
            max_multiplicity: covering.max_multiplicity,
            c0: covering.c0,
            cd_assumed: covering.cd_assumed,
            cd_measured: covering.cd_measured,
            lipschitz_bound: pou.lipschitz_bound,
            max_measured_lipschitz: pou.measured_lipschitz.iter().copied().fold(0.0, f64::max),
            l1_error,
            lip_bound: report,
        });
    }
    out.add("smooth.csv", csv);
    out.json("smooth.json", &rows)?;
    Ok(if all_pass { Outcome::Pass } else { Outcome::CheckFailed })
}

fn run_energy(plan: &EnergyPlan, out: &mut Artifacts) -> Result<Outcome> {
    let space = plan.space.build().map_err(|e| e.context("space"))?;
    let f = plan.function.build(&plan.space, &space).map_err(|e| e.context("function"))?;
    let report = match &plan.relax {
        Some(relax) => {
            if plan.p != 1.0 {
                return Err(Error::Config(format!("relax needs p = 1, got {}", plan.p)));
            }
            tv_relax(
                &f,
                &space,
                &relax.eps_schedule,
                &RelaxOptions {
                    tol: relax.tol,
                    max_iter: relax.max_iter,
                },
            )?
        }
        None => energy(&f, &space, plan.p, plan.delta)?,
    };
    let mut csv = String::new();
    if let Some(curve) = &report.curve {
        csv.push_str("eps,value,iterations,relative_gap\n");
        for pt in curve {
            writeln!(csv, "{},{},{},{}", fmt_float(pt.eps), fmt_float(pt.value), pt.iterations, fmt_float(pt.relative_gap))
                .expect("write to string");
        }
    } else if let Some(parts) = &report.per_edge {
        csv.push_str("index,contribution\n");
        for (k, v) in parts.iter().enumerate() {
            writeln!(csv, "{k},{}", fmt_float(*v)).expect("write to string");
        }
    }
    out.add("energy.csv", csv);
    out.json("energy.json", &report)?;
    Ok(Outcome::Pass)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Reads the plan, runs it and writes the artifacts.
pub fn execute(command: &Command) -> Result<Outcome> {
    let args = command.args();
    let config = args
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let text = std::fs::read_to_string(config).map_err(|e| Error::from(e).context(format!("reading {}", config.display())))?;
    let plan = parse_config(command.name(), &text)?;
    let ctx = RunContext {
        workers: match args.workers {
            Some(n) => Workers::new(n),
            None => Workers::default(),
        },
        seed: args.seed,
    };
    log::info!("running {} with {:?}", command.name(), ctx.workers);
    let (artifacts, outcome) = run_plan(&plan, &ctx)?;
    artifacts.commit(&out_dir)?;
    if outcome == Outcome::CheckFailed {
        eprintln!("{}: check failed (see {})", command.name(), out_dir.display());
    }
    Ok(outcome)
}
