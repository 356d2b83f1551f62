//! Command-line driver: `validate | gkc | reduce | simulate | converge`.
//!
//! Every command prints a short summary; with `--out DIR` it also writes a
//! JSON report (with a provenance block), the summary and CSV data files.
//! Exit codes: 0 pass, 1 check failed, 2 config/parse error, 3 numerical
//! failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};
use crate::model::{load_system, RelaxationSystem};
use crate::reduction::{derive_reduced_bc, Analysis, ReduceOptions, ReducedBc};
use crate::sim::{run_convergence_study, simulate_epsilon, Scenario, StudyOptions};
use crate::spectral::{check_gkc, EtaSlice, GkcReport, SamplingSpec};

pub const DEFAULT_SEED: u64 = crate::spectral::DEFAULT_SEED;

#[derive(Debug, Parser)]
#[command(
    name = "relaxbc",
    version,
    about = "Boundary conditions for relaxation systems and their equilibrium limits"
)]
pub struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for randomized rim sampling.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Directory for JSON, summary and CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplingArgs {
    /// Points per angle of the tensor grid.
    #[arg(long, default_value_t = 24)]
    pub resolution: usize,
    /// Kreiss constant threshold c.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
    /// Distance of rim samples from the Re xi = 0 boundary.
    #[arg(long, default_value_t = 1e-3)]
    pub rim_delta: f64,
    /// Number of randomized rim points (default resolution squared).
    #[arg(long)]
    pub rim_points: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub refine_rounds: usize,
    /// Sample only eta = 0.
    #[arg(long)]
    pub eta_zero_only: bool,
}

impl SamplingArgs {
    fn spec(&self, seed: u64) -> Result<SamplingSpec> {
        let spec = SamplingSpec {
            resolution: self.resolution,
            c_threshold: self.threshold,
            rim_delta: self.rim_delta,
            rim_points: self.rim_points,
            refine_rounds: self.refine_rounds,
            seed,
            eta_slice: if self.eta_zero_only {
                EtaSlice::ZeroOnly
            } else {
                EtaSlice::Full
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing assumptions on a system file.
    Validate { system: PathBuf },
    /// Sample the generalized Kreiss condition.
    Gkc {
        system: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Derive the reduced boundary condition for the equilibrium system.
    Reduce {
        system: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Proceed even if the Kreiss check fails.
        #[arg(long)]
        force: bool,
    },
    /// Solve one scenario at a single epsilon.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        epsilon: f64,
        /// Use the naive reduced condition (first rows of B_u).
        #[arg(long)]
        naive_bc: bool,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Convergence study over the scenario's epsilons.
    Converge {
        scenario: PathBuf,
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        naive_bc: bool,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
}

/// Result of one command.
pub struct Outcome {
    pub code: i32,
    pub summary: String,
    pub report: Value,
    /// Extra artifacts as `(file name, contents)`.
    pub files: Vec<(String, String)>,
    pub name: &'static str,
}

fn rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn crows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

struct Provenance {
    hasher: Sha256,
    seed: u64,
}

impl Provenance {
    fn new(command: &str, seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(seed.to_le_bytes());
        Provenance { hasher, seed }
    }

    fn input(&mut self, bytes: &[u8]) {
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    fn options<T: Serialize>(&mut self, o: &T) {
        let s = serde_json::to_string(o).expect("options serialize");
        self.input(s.as_bytes());
    }

    fn finish(self, forced: bool) -> Value {
        let digest = self.hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        json!({
            "tool": "relaxbc",
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": hex,
            "seed": self.seed,
            "forced": forced,
        })
    }
}

fn load(path: &Path, prov: &mut Provenance) -> Result<RelaxationSystem> {
    prov.input(&read(path)?);
    Ok(load_system(path)?.0)
}

fn validated(sys: &RelaxationSystem) -> Result<()> {
    let rep = sys.validate();
    if rep.pass() {
        Ok(())
    } else {
        Err(Error::ValidationFailed(rep.failures()))
    }
}

fn gkc_summary(g: &GkcReport) -> String {
    let p = &g.argmin_point;
    format!(
        "Kreiss check: {} (min ratio {:.6e} at xi = {:.6}{:+.6}i, omega = {:?}, eta = {}; threshold {:.1e}, {} samples{})",
        if g.pass { "PASS" } else { "FAIL" },
        g.min_ratio,
        p.xi.re,
        p.xi.im,
        p.omega,
        match p.eta {
            crate::spectral::Eta::Finite(e) => format!("{e:.6}"),
            crate::spectral::Eta::Infinite => "inf".into(),
        },
        g.c_threshold,
        g.samples,
        if g.failures.is_empty() { String::new() } else { format!(", {} failed evaluations", g.failures.len()) }
    )
}

fn bc_report(bc: &ReducedBc) -> Value {
    json!({
        "B_o": rows(&bc.bo),
        "B_o_tilde": rows(&bc.bo_tilde),
        "reduced_operator": rows(&bc.reduced_operator),
        "normalized_operator": rows(&bc.normalized_operator),
        "normalized_rhs": rows(&bc.normalized_rhs),
        "equations": bc.equations,
        "closure_coefficient": rows(&bc.closure_coefficient),
        "Y1_reference": crows(&bc.y1),
        "Y2": rows(&bc.y2),
        "Y3": rows(&bc.y3),
        "ukc_certificate": bc.ukc,
        "residuals": bc.residuals,
        "forced": bc.forced,
    })
}

fn ukc_pass(bc: &ReducedBc, threshold: f64) -> bool {
    bc.ukc.vacuous || (bc.ukc.min_ratio > threshold && bc.ukc.failures == 0)
}

/// Runs the Kreiss check and the reduction, honouring `force`.
fn reduce_pipeline(analysis: &Analysis, spec: &SamplingSpec, force: bool) -> Result<(GkcReport, ReducedBc)> {
    let gkc = check_gkc(analysis, spec)?;
    let bc = derive_reduced_bc(
        analysis,
        Some(&gkc),
        &ReduceOptions {
            force,
            sampling: spec.clone(),
        },
    )?;
    Ok((gkc, bc))
}

fn scenario_inputs(
    scenario: &Path,
    system: &Option<PathBuf>,
    prov: &mut Provenance,
) -> Result<(Scenario, RelaxationSystem)> {
    prov.input(&read(scenario)?);
    let (sc, sys_path) = Scenario::load(scenario)?;
    let path = system
        .clone()
        .or(sys_path)
        .ok_or_else(|| Error::Config("no system file: give --system or set \"system\" in the scenario".into()))?;
    let sys = load(&path, prov)?;
    Ok((sc, sys))
}

fn labels_with_suffix(labels: &[String], suffix: &str) -> Vec<String> {
    labels.iter().map(|l| format!("{l}_{suffix}")).collect()
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match &cli.command {
        Command::Validate { system } => {
            let mut prov = Provenance::new("validate", seed);
            let sys = load(system, &mut prov)?;
            let rep = sys.validate();
            let mut summary = format!(
                "validate {}: {}\n",
                system.display(),
                if rep.pass() { "PASS" } else { "FAIL" }
            );
            for c in &rep.checks {
                summary.push_str(&format!(
                    "  [{}] {} (value {:.3e}, threshold {:.3e}){}\n",
                    if c.pass { "ok" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold,
                    if c.detail.is_empty() {
                        String::new()
                    } else {
                        format!(": {}", c.detail)
                    }
                ));
            }
            for c in &rep.informational {
                summary.push_str(&format!("  [info] {}: {}\n", c.name, c.detail));
            }
            let report = json!({ "provenance": prov.finish(false), "pass": rep.pass(), "validation": rep });
            Ok(Outcome {
                code: if rep.pass() { 0 } else { 1 },
                summary,
                report,
                files: vec![],
                name: "validate",
            })
        }
        Command::Gkc { system, sampling } => {
            let mut prov = Provenance::new("gkc", seed);
            let sys = load(system, &mut prov)?;
            prov.options(sampling);
            validated(&sys)?;
            let spec = sampling.spec(seed)?;
            let analysis = Analysis::new(sys)?;
            let g = check_gkc(&analysis, &spec)?;
            let mut summary = gkc_summary(&g);
            if let Some(m) = g.eta_infinity_min_ratio {
                summary.push_str(&format!("\n  eta = inf limit: min ratio {m:.6e}"));
            }
            summary.push('\n');
            let report = json!({ "provenance": prov.finish(false), "gkc": g });
            Ok(Outcome {
                code: if g.pass { 0 } else { 1 },
                summary,
                files: vec![("gkc_samples.csv".into(), g.csv(analysis.sys.d))],
                report,
                name: "gkc",
            })
        }
        Command::Reduce {
            system,
            sampling,
            force,
        } => {
            let mut prov = Provenance::new("reduce", seed);
            let sys = load(system, &mut prov)?;
            prov.options(&(sampling, force));
            validated(&sys)?;
            let spec = sampling.spec(seed)?;
            let analysis = Analysis::new(sys)?;
            let (g, bc) = reduce_pipeline(&analysis, &spec, *force)?;
            let ok = ukc_pass(&bc, spec.c_threshold);
            let mut summary = format!(
                "{}\nreduced boundary condition{}:\n",
                gkc_summary(&g),
                if bc.forced { " (FORCED)" } else { "" }
            );
            if bc.equations.is_empty() {
                summary.push_str("  (none: no incoming equilibrium characteristics)\n");
            }
            for e in &bc.equations {
                summary.push_str(&format!("  {e}\n"));
            }
            summary.push_str(&format!(
                "reduced Kreiss condition: {} (min ratio {:.6e})\n",
                if bc.ukc.vacuous {
                    "vacuous".to_string()
                } else if ok {
                    "PASS".into()
                } else {
                    "FAIL".into()
                },
                bc.ukc.min_ratio
            ));
            let report = json!({
                "provenance": prov.finish(bc.forced),
                "indices": analysis.idx,
                "gkc": g,
                "reduced_bc": bc_report(&bc),
            });
            Ok(Outcome {
                code: if ok { 0 } else { 1 },
                summary,
                report,
                files: vec![],
                name: "reduce",
            })
        }
        Command::Simulate {
            scenario,
            system,
            epsilon,
            naive_bc,
            force,
            sampling,
        } => {
            let mut prov = Provenance::new("simulate", seed);
            let (sc, sys) = scenario_inputs(scenario, system, &mut prov)?;
            prov.options(&(sampling, epsilon, naive_bc, force));
            validated(&sys)?;
            let analysis = Analysis::new(sys)?;
            sc.validate(&analysis)?;
            let spec = sampling.spec(seed)?;
            let (bc, forced) = if *naive_bc {
                (ReducedBc::naive(&analysis), true)
            } else {
                let (_, bc) = reduce_pipeline(&analysis, &spec, *force)?;
                let f = bc.forced;
                (bc, f)
            };
            let out = simulate_epsilon(&analysis, &bc, &sc, *epsilon, *naive_bc)?;
            let labels = &analysis.sys.labels.state;
            let nu = analysis.sys.nu();
            let mut snap = format!(
                "x,{},{},{}\n",
                labels_with_suffix(labels, "relax").join(","),
                labels_with_suffix(labels, "composite").join(","),
                labels_with_suffix(&labels[..nu], "outer").join(",")
            );
            for i in 0..out.relaxation.centers.len() {
                let f =
                    |v: &nalgebra::DVector<f64>| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(",");
                snap.push_str(&format!(
                    "{:.12e},{},{},{}\n",
                    out.relaxation.centers[i],
                    f(&out.relaxation.state[i]),
                    f(&out.composite[i]),
                    f(&out.equilibrium.state[i])
                ));
            }
            let r = &out.run;
            let summary = format!(
                "simulate eps = {:e}: {} cells, dt = {:.3e}, {} steps\n  L2 error vs composite {:.6e}, vs outer {:.6e}\n  boundary residual of composite {:.3e}\n{}",
                r.epsilon,
                r.cells,
                r.dt,
                r.steps,
                r.error_composite,
                r.error_outer,
                r.boundary_residual,
                r.warnings.iter().map(|w| format!("  warning: {w}\n")).collect::<String>()
            );
            let report = json!({
                "provenance": prov.finish(forced),
                "run": out.run,
                "reduced_bc": bc.equations,
                "relaxation": out.relaxation,
                "equilibrium": out.equilibrium,
            });
            Ok(Outcome {
                code: 0,
                summary,
                report,
                files: vec![
                    ("simulate_snapshot.csv".into(), snap),
                    ("simulate_relaxation_trace.csv".into(), out.relaxation.trace_csv(labels)),
                    (
                        "simulate_equilibrium_trace.csv".into(),
                        out.equilibrium.trace_csv(&labels[..nu]),
                    ),
                ],
                name: "simulate",
            })
        }
        Command::Converge {
            scenario,
            system,
            naive_bc,
            force,
            sampling,
        } => {
            let mut prov = Provenance::new("converge", seed);
            let (sc, sys) = scenario_inputs(scenario, system, &mut prov)?;
            prov.options(&(sampling, naive_bc, force));
            validated(&sys)?;
            let analysis = Analysis::new(sys)?;
            sc.validate(&analysis)?;
            let spec = sampling.spec(seed)?;
            let (bc, forced) = if *naive_bc {
                (ReducedBc::naive(&analysis), true)
            } else {
                let (_, bc) = reduce_pipeline(&analysis, &spec, *force)?;
                let f = bc.forced;
                (bc, f)
            };
            let study = run_convergence_study(
                &analysis,
                &bc,
                &sc,
                StudyOptions {
                    naive: *naive_bc,
                    jobs: cli.jobs,
                },
            )?;
            let fmt_fit = |f: &Option<crate::sim::SlopeFit>| match f {
                Some(f) => format!(
                    "{:.4}{}",
                    f.slope,
                    f.ci95.map_or(String::new(), |c| format!(" ± {c:.4} (95%)"))
                ),
                None => "undefined (degenerate)".into(),
            };
            let mut summary = format!(
                "converge {}{}: {}\n  slope vs composite {} (threshold {})\n  slope vs outer {}\n",
                scenario.display(),
                if *naive_bc { " [naive BC]" } else { "" },
                if study.pass { "PASS" } else { "FAIL" },
                fmt_fit(&study.composite),
                study.threshold,
                fmt_fit(&study.outer)
            );
            for e in &bc.equations {
                summary.push_str(&format!("  reduced BC: {e}\n"));
            }
            for r in &study.runs {
                summary.push_str(&format!(
                    "  eps {:.1e}: composite {:.6e}, outer {:.6e}, {} cells\n",
                    r.epsilon, r.error_composite, r.error_outer, r.cells
                ));
            }
            for w in &study.warnings {
                summary.push_str(&format!("  warning: {w}\n"));
            }
            let report = json!({
                "provenance": prov.finish(forced),
                "reduced_bc": bc.equations,
                "study": study,
            });
            Ok(Outcome {
                code: if study.pass { 0 } else { 1 },
                summary,
                files: vec![("converge.csv".into(), study.csv())],
                report,
                name: "converge",
            })
        }
    }
}

/// Writes `<name>.json`, `<name>_summary.txt` and the CSV artifacts.
pub fn write_artifacts(dir: &Path, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&outcome.report).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join(format!("{}.json", outcome.name)), json + "\n")?;
    std::fs::write(dir.join(format!("{}_summary.txt", outcome.name)), &outcome.summary)?;
    for (name, contents) in &outcome.files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

/// Entry point shared by the binary: returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 2;
        }
        // Fails only if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match execute(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if let Some(dir) = &cli.out {
                if let Err(e) = write_artifacts(dir, &outcome) {
                    eprintln!("error: {e}");
                    return e.exit_code();
                }
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
