//! Scenario files and the `ε`-convergence study of the composite
//! approximation.
//!
//! ```json
//! { "system": "worked_example.json",
//!   "boundary": [{"type": "sin"}, {"type": "cos"}],
//!   "u0": [{"type": "sin", "amplitude": -1, "frequency": 0.333333}],
//!   "T": 0.5, "X_max": 2.0,
//!   "grid": {"kind": "graded", "ratio": 1.05, "h_min_factor": 0.125, "h_max": 2e-4},
//!   "epsilons": [1e-2, 3e-3, 1e-3, 3e-4] }
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{measure_error, solve_equilibrium, solve_relaxation, Ibvp1D, Mesh, SchemeOptions, SimResult, Waveform};
use crate::error::{Error, Result};
use crate::layers::{
    assemble_composite, build_eps_layer, build_second_correction, solve_sqrt_eps_layer, SqrtLayerGrid, TimeTrace,
};
use crate::reduction::{loglog_slope, Analysis, ClosureSolve, ReducedBc};

fn default_ratio() -> f64 {
    1.05
}
fn default_h_min_factor() -> f64 {
    0.125
}
fn default_h_max() -> f64 {
    2e-4
}
fn default_zone_h_factor() -> f64 {
    0.15
}
fn default_zone_width() -> f64 {
    10.0
}
fn default_t() -> f64 {
    0.5
}
fn default_x_max() -> f64 {
    1.0
}
fn default_cfl() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Geometric grading from `h_min = h_min_factor·ε` up to `h_max`;
    /// within `zone_width·√(εT)` of the boundary cells are also kept below
    /// `zone_h_factor·ε` so that numerical viscosity stays small against
    /// the physical one in the diffusive layer.
    Graded {
        #[serde(default = "default_ratio")]
        ratio: f64,
        #[serde(default = "default_h_min_factor")]
        h_min_factor: f64,
        #[serde(default = "default_h_max")]
        h_max: f64,
        #[serde(default = "default_zone_h_factor")]
        zone_h_factor: f64,
        #[serde(default = "default_zone_width")]
        zone_width: f64,
    },
    Uniform {
        cells: usize,
    },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Graded {
            ratio: default_ratio(),
            h_min_factor: default_h_min_factor(),
            h_max: default_h_max(),
            zone_h_factor: default_zone_h_factor(),
            zone_width: default_zone_width(),
        }
    }
}

impl GridSpec {
    pub fn mesh(&self, epsilon: f64, x_max: f64, t_final: f64) -> Result<Mesh> {
        match *self {
            GridSpec::Graded {
                ratio,
                h_min_factor,
                h_max,
                zone_h_factor,
                zone_width,
            } => {
                let h_min = (h_min_factor * epsilon).min(h_max);
                let zone_h = (zone_h_factor * epsilon).clamp(h_min, h_max);
                Mesh::graded_with_zone(
                    x_max,
                    h_min,
                    ratio,
                    h_max,
                    zone_width * (epsilon * t_final).sqrt(),
                    zone_h,
                )
            }
            GridSpec::Uniform { cells } => Mesh::uniform(x_max, cells),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerGridSpec {
    pub nz: usize,
    pub nt: usize,
}

impl Default for LayerGridSpec {
    fn default() -> Self {
        let g = SqrtLayerGrid::default();
        LayerGridSpec { nz: g.nz, nt: g.nt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// System file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    /// One waveform per row of `B`, in `t`.
    pub boundary: Vec<Waveform>,
    /// One waveform per equilibrium component, in `x`.
    pub u0: Vec<Waveform>,
    #[serde(rename = "T", default = "default_t")]
    pub t_final: f64,
    #[serde(rename = "X_max", default = "default_x_max")]
    pub x_max: f64,
    #[serde(default)]
    pub grid: GridSpec,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub layer_grid: LayerGridSpec,
}

impl Scenario {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("{origin}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// Loads a scenario and resolves its system path.
    pub fn load(path: &Path) -> Result<(Self, Option<PathBuf>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let sc = Self::parse(&text, &path.display().to_string())?;
        let sys = sc
            .system
            .as_ref()
            .map(|s| path.parent().unwrap_or_else(|| Path::new(".")).join(s));
        Ok((sc, sys))
    }

    pub fn validate(&self, analysis: &Analysis) -> Result<()> {
        let sys = &analysis.sys;
        if self.epsilons.is_empty() {
            return Err(Error::Config("scenario lists no epsilons".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("epsilons must be positive and finite".into()));
        }
        if self.boundary.len() != sys.b.nrows() {
            return Err(Error::Config(format!(
                "scenario gives {} boundary signals, B has {} rows",
                self.boundary.len(),
                sys.b.nrows()
            )));
        }
        if self.u0.len() != sys.nu() {
            return Err(Error::Config(format!(
                "scenario gives {} initial components, expected {}",
                self.u0.len(),
                sys.nu()
            )));
        }
        if !(self.t_final > 0.0 && self.x_max > 0.0 && self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config("need T > 0, X_max > 0 and 0 < cfl <= 1".into()));
        }
        if self.layer_grid.nz < 4 || self.layer_grid.nt < 2 {
            return Err(Error::Config("layer grid needs nz >= 4 and nt >= 2".into()));
        }
        Ok(())
    }

    pub fn b(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.boundary.len(), self.boundary.iter().map(|w| w.eval(t)))
    }

    pub fn u0(&self, x: f64) -> DVector<f64> {
        DVector::from_iterator(self.u0.len(), self.u0.iter().map(|w| w.eval(x)))
    }

    fn scheme(&self) -> SchemeOptions {
        SchemeOptions {
            cfl: self.cfl,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StudyOptions {
    /// Use the naive reduced condition and no boundary layers.
    pub naive: bool,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsRun {
    pub epsilon: f64,
    pub cells: usize,
    pub h_min: f64,
    pub dt: f64,
    pub steps: usize,
    /// `‖U^ε − U_ε‖` at `t = T`.
    pub error_composite: f64,
    /// `‖U^ε − (ū;0)‖` at `t = T`.
    pub error_outer: f64,
    /// `max_t |B U_ε(0,t) − b(t)|`.
    pub boundary_residual: f64,
    pub cells_in_eps_layer: usize,
    pub sqrt_layer_z_max: f64,
    pub boundary_condition: f64,
    pub warnings: Vec<String>,
}

/// Fields of one `ε` run, kept for snapshot output.
pub struct EpsOutcome {
    pub run: EpsRun,
    pub relaxation: SimResult,
    pub equilibrium: SimResult,
    pub composite: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
    /// Half-width of the 95% confidence interval; absent with two points.
    pub ci95: Option<f64>,
    pub points: usize,
}

impl SlopeFit {
    pub fn fit(eps: &[f64], err: &[f64]) -> Option<Self> {
        let (slope, se) = loglog_slope(eps, err)?;
        let points = eps.iter().zip(err).filter(|(a, b)| **a > 0.0 && **b > 0.0).count();
        let ci95 = (points > 2).then(|| {
            let t = StudentsT::new(0.0, 1.0, (points - 2) as f64).expect("dof > 0");
            t.inverse_cdf(0.975) * se
        });
        Some(SlopeFit {
            slope,
            std_error: se,
            ci95,
            points,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub runs: Vec<EpsRun>,
    pub composite: Option<SlopeFit>,
    pub outer: Option<SlopeFit>,
    pub threshold: f64,
    pub pass: bool,
    pub degenerate: bool,
    pub naive_bc: bool,
    pub warnings: Vec<String>,
}

pub const SLOPE_THRESHOLD: f64 = 0.45;

impl ConvergenceStudy {
    pub fn csv(&self) -> String {
        let mut s = String::from("epsilon,error_composite,error_outer,boundary_residual\n");
        for r in &self.runs {
            s.push_str(&format!(
                "{:.6e},{:.12e},{:.12e},{:.12e}\n",
                r.epsilon, r.error_composite, r.error_outer, r.boundary_residual
            ));
        }
        s
    }
}

/// Runs the relaxation and equilibrium solvers at one `ε` and measures the
/// composite and outer errors at `t = T`.
pub fn simulate_epsilon(
    analysis: &Analysis,
    bc: &ReducedBc,
    scenario: &Scenario,
    epsilon: f64,
    naive: bool,
) -> Result<EpsOutcome> {
    let sys = &analysis.sys;
    let mesh = scenario.grid.mesh(epsilon, scenario.x_max, scenario.t_final)?;
    let u0 = |x: f64| scenario.u0(x);
    let b = |t: f64| scenario.b(t);
    let t_final = scenario.t_final;
    let ibvp = Ibvp1D {
        sys,
        epsilon,
        mesh: &mesh,
        u0: &u0,
        b: &b,
        t_final,
        options: scenario.scheme(),
    };
    let relax = solve_relaxation(&ibvp)?;
    let eq = solve_equilibrium(analysis, bc, &mesh, &u0, &b, t_final, scenario.scheme())?;
    let nu = sys.nu();
    let outer: Vec<DVector<f64>> = eq
        .state
        .iter()
        .map(|u| {
            let mut v = DVector::zeros(sys.n);
            v.rows_mut(0, nu).copy_from(u);
            v
        })
        .collect();
    let mut warnings = vec![];
    let cells_in_eps_layer = mesh.centers.iter().filter(|&&x| x < epsilon).count();
    if cells_in_eps_layer < 4 {
        warnings.push(format!(
            "UnresolvedLayer: only {cells_in_eps_layer} cells inside the eps-layer at eps = {epsilon:e}"
        ));
    }
    let (composite, boundary_residual, z_max) = if naive {
        (outer.clone(), f64::NAN, 0.0)
    } else {
        let cs = ClosureSolve::new(bc, sys, analysis.eq.p0.ncols())?;
        let mut m0 = Vec::with_capacity(eq.trace_times.len());
        let mut ws = Vec::with_capacity(eq.trace_times.len());
        for (t, ub) in eq.trace_times.iter().zip(&eq.boundary_trace) {
            let (m, w) = cs.solve(&b(*t), ub)?;
            m0.push(m);
            ws.push(w);
        }
        let m0_trace = TimeTrace::new(eq.trace_times.clone(), m0)?;
        let ubar_trace = TimeTrace::new(eq.trace_times.clone(), eq.boundary_trace.clone())?;
        let eps_layer = build_eps_layer(analysis, TimeTrace::new(eq.trace_times.clone(), ws)?)?;
        let grid = SqrtLayerGrid {
            nz: scenario.layer_grid.nz,
            nt: scenario.layer_grid.nt,
            ..Default::default()
        };
        let sqrt = solve_sqrt_eps_layer(sys, &analysis.eq, &m0_trace, t_final, grid, &[t_final])?;
        let z_max = sqrt.z_max;
        let corr = build_second_correction(sys, &analysis.eq)?;
        let comp = assemble_composite(analysis, eps_layer, sqrt, corr, epsilon)?;
        let composite = comp.evaluate_grid(&mesh.centers, &eq.state, t_final)?;
        let times: Vec<f64> = if comp.sqrt_layer.n10() > 0 {
            comp.sqrt_layer.dz0_trace.times.clone()
        } else {
            eq.trace_times.clone()
        };
        let residual = times
            .iter()
            .map(|&t| {
                let u = comp.boundary_value(&ubar_trace.at(t), &m0_trace.at(t), t);
                (&sys.b * u - b(t)).norm()
            })
            .fold(0.0, f64::max);
        (composite, residual, z_max)
    };
    let error_composite = measure_error(&relax.state, &composite, &mesh.widths)?;
    let error_outer = measure_error(&relax.state, &outer, &mesh.widths)?;
    let run = EpsRun {
        epsilon,
        cells: mesh.len(),
        h_min: mesh.h_min(),
        dt: relax.dt,
        steps: relax.steps,
        error_composite,
        error_outer,
        boundary_residual,
        cells_in_eps_layer,
        sqrt_layer_z_max: z_max,
        boundary_condition: relax.boundary_condition,
        warnings,
    };
    Ok(EpsOutcome {
        run,
        relaxation: relax,
        equilibrium: eq,
        composite,
    })
}

fn scenario_warnings(analysis: &Analysis, bc: &ReducedBc, scenario: &Scenario) -> Vec<String> {
    let sys = &analysis.sys;
    let mut w = vec![];
    let rho = crate::linalg::norm2(sys.a1());
    if scenario.t_final > 0.9 * scenario.x_max / rho {
        w.push(format!(
            "T = {} exceeds 0.9 X_max / rho(A1) = {:.4}; the outflow boundary may influence x = 0",
            scenario.t_final,
            0.9 * scenario.x_max / rho
        ));
    }
    let mut u0 = DVector::zeros(sys.n);
    u0.rows_mut(0, sys.nu()).copy_from(&scenario.u0(0.0));
    let b0 = scenario.b(0.0);
    let full = (&sys.b * &u0 - &b0).norm();
    if full > 1e-8 {
        w.push(format!(
            "initial and boundary data are incompatible at t = 0 (|B U0(0) - b(0)| = {full:.3e})"
        ));
    }
    if bc.bo.nrows() > 0 {
        let red = (&bc.reduced_operator * scenario.u0(0.0) - &bc.bo * &b0).norm();
        if red > 1e-8 {
            w.push(format!(
                "initial data violate the reduced boundary condition at t = 0 (mismatch {red:.3e})"
            ));
        }
    }
    w
}

/// Errors at `t = T` for each `ε`, with log-log slope fits. Runs are
/// independent and execute in parallel, capped at `opts.jobs` workers.
pub fn run_convergence_study(
    analysis: &Analysis,
    bc: &ReducedBc,
    scenario: &Scenario,
    opts: StudyOptions,
) -> Result<ConvergenceStudy> {
    scenario.validate(analysis)?;
    let run_all = || -> Vec<Result<EpsRun>> {
        scenario
            .epsilons
            .par_iter()
            .map(|&e| simulate_epsilon(analysis, bc, scenario, e, opts.naive).map(|o| o.run))
            .collect()
    };
    let results = match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = runs.iter().map(|r| r.epsilon).collect();
    let ec: Vec<f64> = runs.iter().map(|r| r.error_composite).collect();
    let eo: Vec<f64> = runs.iter().map(|r| r.error_outer).collect();
    let degenerate = ec.iter().all(|&e| e == 0.0);
    let composite = if degenerate { None } else { SlopeFit::fit(&eps, &ec) };
    let outer = SlopeFit::fit(&eps, &eo);
    let mut warnings = scenario_warnings(analysis, bc, scenario);
    if opts.naive {
        warnings.push("naive reduced boundary condition: boundary layers omitted".into());
    }
    warnings.extend(runs.iter().flat_map(|r| r.warnings.iter().cloned()));
    let pass = composite.as_ref().is_some_and(|f| f.slope >= SLOPE_THRESHOLD);
    Ok(ConvergenceStudy {
        runs,
        composite,
        outer,
        threshold: SLOPE_THRESHOLD,
        pass,
        degenerate,
        naive_bc: opts.naive,
        warnings,
    })
}
