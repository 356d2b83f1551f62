//! Half-line finite-volume solvers for the relaxation system and its
//! equilibrium limit, and the composite-error convergence study.
//!
//! Both solvers use first-order characteristic upwinding on a (possibly
//! graded) mesh. The relaxation solver applies the stiff source exactly
//! after each transport step (Lie splitting).

mod signal;
mod study;

pub use signal::Waveform;
pub use study::{
    run_convergence_study, simulate_epsilon, ConvergenceStudy, EpsOutcome, EpsRun, GridSpec, LayerGridSpec, Scenario,
    SlopeFit, StudyOptions, SLOPE_THRESHOLD,
};

use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixtures::columns;
use crate::linalg::{self, sorted_sym_eigen, RMat};
use crate::model::RelaxationSystem;
use crate::reduction::{Analysis, ReducedBc};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl Mesh {
    fn from_faces(faces: Vec<f64>) -> Self {
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths = faces.windows(2).map(|w| w[1] - w[0]).collect();
        Mesh { faces, centers, widths }
    }

    pub fn uniform(x_max: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(x_max > 0.0) {
            return Err(Error::Config("uniform mesh needs cells > 0 and X_max > 0".into()));
        }
        Ok(Self::from_faces(
            (0..=cells).map(|i| x_max * i as f64 / cells as f64).collect(),
        ))
    }

    /// Cells grow geometrically by `ratio` from `h_min` at `x = 0` until
    /// they reach `h_max`, then stay uniform.
    pub fn graded(x_max: f64, h_min: f64, ratio: f64, h_max: f64) -> Result<Self> {
        Self::graded_with_zone(x_max, h_min, ratio, h_max, 0.0, h_max)
    }

    /// As [`Mesh::graded`], but cells starting in `[0, zone_width)` are
    /// also capped at `zone_h`.
    pub fn graded_with_zone(
        x_max: f64,
        h_min: f64,
        ratio: f64,
        h_max: f64,
        zone_width: f64,
        zone_h: f64,
    ) -> Result<Self> {
        if !(x_max > 0.0 && h_min > 0.0 && h_max >= h_min && ratio >= 1.0 && zone_h >= h_min && zone_width >= 0.0) {
            return Err(Error::Config(
                "graded mesh needs 0 < h_min <= h_max, h_min <= zone h, ratio >= 1, X_max > 0".into(),
            ));
        }
        let mut faces = vec![0.0];
        let mut h = h_min;
        let mut x = 0.0;
        while x < x_max {
            let cap = if x < zone_width { zone_h.min(h_max) } else { h_max };
            let step = h.min(cap);
            x = (x + step).min(x_max);
            faces.push(x);
            h *= ratio;
        }
        // Absorb a sliver at the far end into its neighbour.
        let k = faces.len();
        if k > 2 && faces[k - 1] - faces[k - 2] < 0.5 * (faces[k - 2] - faces[k - 3]) {
            faces.remove(k - 2);
        }
        Ok(Self::from_faces(faces))
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn h_min(&self) -> f64 {
        self.widths.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Ghost state at `x = 0`: `U_b = G U₁ + H b`, obtained by replacing the
/// incoming characteristic components of `U₁` so that `B U_b = b`.
#[derive(Debug, Clone)]
pub struct BoundaryClosure {
    pub g: RMat,
    pub h: RMat,
    /// Condition number of the incoming-characteristic extraction matrix.
    pub condition: f64,
}

impl BoundaryClosure {
    /// `incoming` has orthonormal columns spanning the incoming
    /// characteristic directions; `op` is the boundary operator acting on
    /// the state and `rhs` maps boundary data to its right-hand side.
    pub fn new(incoming: &RMat, op: &RMat, rhs: &RMat) -> Result<Self> {
        let n = incoming.nrows();
        let k = incoming.ncols();
        if op.nrows() != k {
            return Err(Error::DimensionMismatch(format!(
                "boundary operator has {} rows but there are {k} incoming characteristics",
                op.nrows()
            )));
        }
        if k == 0 {
            return Ok(BoundaryClosure {
                g: RMat::identity(n, n),
                h: RMat::zeros(n, rhs.ncols()),
                condition: 1.0,
            });
        }
        let m = op * incoming;
        let sv = m.clone().svd(false, false).singular_values;
        let cond = sv.max() / sv.min();
        if !(cond.is_finite() && cond < 1e12) {
            return Err(Error::BoundarySolveSingular { cond });
        }
        let minv = linalg::inverse(&m).ok_or(Error::BoundarySolveSingular { cond })?;
        let keep = RMat::identity(n, n) - incoming * incoming.transpose();
        let g = (RMat::identity(n, n) - incoming * &minv * op) * keep;
        let h = incoming * minv * rhs;
        Ok(BoundaryClosure { g, h, condition: cond })
    }

    pub fn ghost(&self, u1: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        &self.g * u1 + &self.h * b
    }
}

fn incoming_basis(a: &RMat, tau: f64) -> RMat {
    let (vals, vecs) = sorted_sym_eigen(a);
    let plus: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > tau).collect();
    columns(&vecs, &plus)
}

fn spectral_radius(a: &RMat) -> f64 {
    let (vals, _) = sorted_sym_eigen(a);
    vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn split_flux(a: &RMat) -> (RMat, RMat) {
    let (vals, vecs) = sorted_sym_eigen(a);
    let plus = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0)));
    let minus = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.min(0.0)));
    (
        linalg::sym(&(&vecs * RMat::from_diagonal(&plus) * vecs.transpose())),
        linalg::sym(&(&vecs * RMat::from_diagonal(&minus) * vecs.transpose())),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct SchemeOptions {
    pub cfl: f64,
    /// Fixed time step; must satisfy the CFL bound.
    pub dt: Option<f64>,
    /// Periodic in `x` instead of boundary/outflow faces.
    pub periodic: bool,
    pub source: bool,
    /// Number of evenly spaced L² norm samples.
    pub norm_samples: usize,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            cfl: 0.9,
            dt: None,
            periodic: false,
            source: true,
            norm_samples: 50,
        }
    }
}

/// Relaxation IBVP on `[0, X_max]` with equilibrium initial data.
pub struct Ibvp1D<'a> {
    pub sys: &'a RelaxationSystem,
    pub epsilon: f64,
    pub mesh: &'a Mesh,
    /// `u₀(x)`, the equilibrium part of the initial data.
    pub u0: &'a (dyn Fn(f64) -> DVector<f64> + Sync),
    pub b: &'a (dyn Fn(f64) -> DVector<f64> + Sync),
    pub t_final: f64,
    pub options: SchemeOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub centers: Vec<f64>,
    #[serde(skip)]
    pub state: Vec<DVector<f64>>,
    /// Times of the boundary trace (every step).
    pub trace_times: Vec<f64>,
    #[serde(skip)]
    pub boundary_trace: Vec<DVector<f64>>,
    pub norm_times: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub boundary_condition: f64,
    /// Not serialized so reports stay reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl SimResult {
    pub fn final_time(&self) -> f64 {
        *self.trace_times.last().unwrap_or(&0.0)
    }

    pub fn trace_csv(&self, labels: &[String]) -> String {
        let mut s = format!("t,{}\n", labels.join(","));
        for (t, u) in self.trace_times.iter().zip(&self.boundary_trace) {
            let row: Vec<String> = u.iter().map(|x| format!("{x:.12e}")).collect();
            s.push_str(&format!("{t:.12e},{}\n", row.join(",")));
        }
        s
    }

    pub fn snapshot_csv(&self, labels: &[String]) -> String {
        let mut s = format!("x,{}\n", labels.join(","));
        for (x, u) in self.centers.iter().zip(&self.state) {
            let row: Vec<String> = u.iter().map(|x| format!("{x:.12e}")).collect();
            s.push_str(&format!("{x:.12e},{}\n", row.join(",")));
        }
        s
    }
}

/// Discrete `L²(0, X_max)` norm of `a − b` with cell widths `widths`.
pub fn measure_error(a: &[DVector<f64>], b: &[DVector<f64>], widths: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != widths.len() {
        return Err(Error::GridMismatch(format!(
            "fields on {}, {} and {} cells",
            a.len(),
            b.len(),
            widths.len()
        )));
    }
    let mut acc = 0.0;
    for ((u, v), h) in a.iter().zip(b).zip(widths) {
        if u.len() != v.len() {
            return Err(Error::GridMismatch("state dimensions differ".into()));
        }
        acc += h * (u - v).norm_squared();
    }
    Ok(acc.sqrt())
}

struct Transport<'a> {
    n: usize,
    ap: RMat,
    am: RMat,
    a: RMat,
    closure: &'a BoundaryClosure,
    /// Exact source propagator on the trailing `r` components.
    source: Option<(usize, RMat)>,
}

fn march(
    tr: &Transport,
    mesh: &Mesh,
    init: Vec<DVector<f64>>,
    b: &(dyn Fn(f64) -> DVector<f64> + Sync),
    dt: f64,
    steps: usize,
    opts: &SchemeOptions,
) -> Result<SimResult> {
    let start = Instant::now();
    let n = tr.n;
    let cells = mesh.len();
    let mut u: Vec<f64> = init.iter().flat_map(|v| v.iter().copied()).collect();
    let mut flux = vec![0.0; (cells + 1) * n];
    let ap: Vec<f64> = tr.ap.transpose().iter().copied().collect();
    let am: Vec<f64> = tr.am.transpose().iter().copied().collect();
    let af: Vec<f64> = tr.a.transpose().iter().copied().collect();
    let matvec_add = |m: &[f64], x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let row = &m[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * x[j];
            }
            out[i] += s;
        }
    };
    let source = tr.source.as_ref().map(|(r, _)| *r);
    let e: Option<Vec<f64>> = tr.source.as_ref().map(|(_, m)| m.transpose().iter().copied().collect());
    let sample_every = (steps / opts.norm_samples.max(1)).max(1);
    let l2 = |u: &[f64]| -> f64 {
        (0..cells)
            .map(|c| mesh.widths[c] * u[c * n..(c + 1) * n].iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    };
    let mut trace_times = Vec::with_capacity(steps + 1);
    let mut trace = Vec::with_capacity(steps + 1);
    let mut norm_times = vec![0.0];
    let mut norms = vec![l2(&u)];
    let mut ghost = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for step in 0..=steps {
        let t = step as f64 * dt;
        if !opts.periodic {
            let u1 = DVector::from_column_slice(&u[0..n]);
            let gvec = tr.closure.ghost(&u1, &b(t));
            ghost.copy_from_slice(gvec.as_slice());
            trace_times.push(t);
            trace.push(gvec);
        }
        if step == steps {
            break;
        }
        flux.iter_mut().for_each(|f| *f = 0.0);
        for face in 0..=cells {
            let f = &mut flux[face * n..(face + 1) * n];
            if face == 0 {
                if opts.periodic {
                    matvec_add(&ap, &u[(cells - 1) * n..cells * n], f);
                    matvec_add(&am, &u[0..n], f);
                } else {
                    matvec_add(&ap, &ghost, f);
                    matvec_add(&am, &u[0..n], f);
                }
            } else if face == cells {
                if opts.periodic {
                    matvec_add(&ap, &u[(cells - 1) * n..cells * n], f);
                    matvec_add(&am, &u[0..n], f);
                } else {
                    matvec_add(&af, &u[(cells - 1) * n..cells * n], f);
                }
            } else {
                matvec_add(&ap, &u[(face - 1) * n..face * n], f);
                matvec_add(&am, &u[face * n..(face + 1) * n], f);
            }
        }
        for c in 0..cells {
            let k = dt / mesh.widths[c];
            for i in 0..n {
                u[c * n + i] -= k * (flux[(c + 1) * n + i] - flux[c * n + i]);
            }
        }
        if let (Some(r), Some(e)) = (source, &e) {
            let off = n - r;
            for c in 0..cells {
                let v = &mut u[c * n + off..(c + 1) * n];
                for i in 0..r {
                    let row = &e[i * r..(i + 1) * r];
                    tmp[i] = (0..r).map(|j| row[j] * v[j]).sum();
                }
                v.copy_from_slice(&tmp[..r]);
            }
        }
        if (step + 1) % sample_every == 0 || step + 1 == steps {
            let nrm = l2(&u);
            if !nrm.is_finite() {
                return Err(Error::NonFinite(format!("solution blew up at t = {}", t + dt)));
            }
            norm_times.push(t + dt);
            norms.push(nrm);
        }
    }
    let state = (0..cells)
        .map(|c| DVector::from_column_slice(&u[c * n..(c + 1) * n]))
        .collect();
    Ok(SimResult {
        centers: mesh.centers.clone(),
        state,
        trace_times,
        boundary_trace: trace,
        norm_times,
        l2_norms: norms,
        dt,
        steps,
        boundary_condition: tr.closure.condition,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn time_grid(t_final: f64, dt_max: f64, requested: Option<f64>, min_steps: usize) -> Result<(f64, usize)> {
    if !(t_final > 0.0) {
        return Err(Error::Config("final time must be positive".into()));
    }
    if let Some(dt) = requested {
        if dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit: dt_max });
        }
        let steps = (t_final / dt).round().max(1.0) as usize;
        return Ok((t_final / steps as f64, steps));
    }
    let steps = ((t_final / dt_max).ceil() as usize).max(min_steps);
    Ok((t_final / steps as f64, steps))
}

/// Upwind plus exact source for `U_t + A₁U_x = QU/ε`, `BU(0,t) = b(t)`.
pub fn solve_relaxation(ibvp: &Ibvp1D) -> Result<SimResult> {
    let sys = ibvp.sys;
    if sys.d != 1 {
        return Err(Error::AssumptionViolated("the simulator is one-dimensional".into()));
    }
    if !(ibvp.epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let a1 = sys.a1().clone();
    let rho = spectral_radius(&a1);
    let dt_max = ibvp.options.cfl * ibvp.mesh.h_min() / rho.max(f64::MIN_POSITIVE);
    let (dt, steps) = time_grid(ibvp.t_final, dt_max, ibvp.options.dt, 1)?;
    let rplus = incoming_basis(&a1, sys.tau_eig());
    let closure = BoundaryClosure::new(&rplus, &sys.b, &RMat::identity(sys.b.nrows(), sys.b.nrows()))?;
    let (ap, am) = split_flux(&a1);
    let (lam, w) = sorted_sym_eigen(&sys.s());
    let eps = ibvp.epsilon;
    let prop = |dt: f64| -> RMat {
        let d = DVector::from_iterator(lam.len(), lam.iter().map(|l| (l * dt / eps).exp()));
        &w * RMat::from_diagonal(&d) * w.transpose()
    };
    let tr = Transport {
        n: sys.n,
        ap,
        am,
        a: a1,
        closure: &closure,
        source: ibvp.options.source.then(|| (sys.r, prop(dt))),
    };
    let nu = sys.nu();
    let init: Vec<DVector<f64>> = ibvp
        .mesh
        .centers
        .iter()
        .map(|&x| {
            let mut v = DVector::zeros(sys.n);
            v.rows_mut(0, nu).copy_from(&(ibvp.u0)(x));
            v
        })
        .collect();
    march(&tr, ibvp.mesh, init, ibvp.b, dt, steps, &ibvp.options)
}

/// Upwind solution of `ū_t + A₁₁ū_x = 0` with `B_oB_uū(0,t) = B_ob(t)`.
pub fn solve_equilibrium(
    analysis: &Analysis,
    bc: &ReducedBc,
    mesh: &Mesh,
    u0: &(dyn Fn(f64) -> DVector<f64> + Sync),
    b: &(dyn Fn(f64) -> DVector<f64> + Sync),
    t_final: f64,
    options: SchemeOptions,
) -> Result<SimResult> {
    let sys = &analysis.sys;
    if sys.d != 1 {
        return Err(Error::AssumptionViolated("the simulator is one-dimensional".into()));
    }
    let a11 = sys.a11();
    let rho = spectral_radius(&a11);
    let dt_max = if rho > 0.0 {
        options.cfl * mesh.h_min() / rho
    } else {
        f64::INFINITY
    };
    let (dt, steps) = time_grid(t_final, dt_max, options.dt, 200)?;
    let pplus = analysis.eq.p_plus();
    let closure = BoundaryClosure::new(&pplus, &bc.reduced_operator, &bc.bo)?;
    let (ap, am) = split_flux(&a11);
    let tr = Transport {
        n: sys.nu(),
        ap,
        am,
        a: a11,
        closure: &closure,
        source: None,
    };
    let init: Vec<DVector<f64>> = mesh.centers.iter().map(|&x| u0(x)).collect();
    march(&tr, mesh, init, b, dt, steps, &options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::reduction::{derive_reduced_bc, ReduceOptions};

    fn forced_bc(a: &Analysis) -> ReducedBc {
        let opts = ReduceOptions {
            force: true,
            ..Default::default()
        };
        derive_reduced_bc(a, None, &opts).unwrap()
    }

    #[test]
    fn graded_mesh_shape() {
        let m = Mesh::graded(1.0, 1e-4, 1.05, 1e-2).unwrap();
        assert_eq!(m.faces[0], 0.0);
        assert_eq!(*m.faces.last().unwrap(), 1.0);
        assert!((m.widths[0] - 1e-4).abs() < 1e-18);
        assert!((m.widths[1] / m.widths[0] - 1.05).abs() < 1e-12);
        assert!(m.widths.iter().all(|&h| h <= 1e-2 * 1.5 + 1e-15));
        assert!((m.widths.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let z = Mesh::graded_with_zone(1.0, 1e-4, 1.05, 1e-2, 0.1, 5e-4).unwrap();
        for (x, h) in z.faces.iter().zip(&z.widths) {
            assert!(*h <= if *x < 0.1 { 5e-4 } else { 1e-2 } + 1e-15);
        }
        assert!(z.len() > m.len() + 100);
        assert!(Mesh::graded_with_zone(1.0, 1e-4, 1.05, 1e-2, 0.1, 1e-5).is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let sys = fixtures::worked_example();
        let mesh = Mesh::uniform(1.0, 200).unwrap();
        let zero = |_: f64| DVector::zeros(2);
        let u0 = |_: f64| DVector::zeros(1);
        let ibvp = Ibvp1D {
            sys: &sys,
            epsilon: 1e-3,
            mesh: &mesh,
            u0: &u0,
            b: &zero,
            t_final: 0.1,
            options: SchemeOptions::default(),
        };
        let res = solve_relaxation(&ibvp).unwrap();
        assert!(res.state.iter().all(|u| u.norm() == 0.0));
    }

    #[test]
    fn boundary_trace_is_prescribed() {
        let sys = fixtures::worked_example();
        let mesh = Mesh::uniform(1.0, 400).unwrap();
        let b = |t: f64| DVector::from_vec(vec![t.sin(), t.cos()]);
        let u0 = |x: f64| DVector::from_vec(vec![-(x / 3.0).sin() + (x / 3.0).cos() / 3.0]);
        let ibvp = Ibvp1D {
            sys: &sys,
            epsilon: 1e-3,
            mesh: &mesh,
            u0: &u0,
            b: &b,
            t_final: 0.2,
            options: SchemeOptions::default(),
        };
        let res = solve_relaxation(&ibvp).unwrap();
        for (t, u) in res.trace_times.iter().zip(&res.boundary_trace) {
            assert!((u[0] - t.sin()).abs() < 1e-13 && (u[1] - t.cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let sys = fixtures::worked_example();
        let mesh = Mesh::uniform(1.0, 100).unwrap();
        let z = |_: f64| DVector::zeros(2);
        let u0 = |_: f64| DVector::zeros(1);
        let ibvp = Ibvp1D {
            sys: &sys,
            epsilon: 1e-2,
            mesh: &mesh,
            u0: &u0,
            b: &z,
            t_final: 0.1,
            options: SchemeOptions {
                dt: Some(0.01),
                ..Default::default()
            },
        };
        assert!(matches!(solve_relaxation(&ibvp), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn periodic_transport_does_not_increase_energy() {
        let sys = fixtures::worked_example();
        let mesh = Mesh::uniform(1.0, 300).unwrap();
        let z = |_: f64| DVector::zeros(2);
        let u0 = |x: f64| DVector::from_vec(vec![(-(x - 0.5f64).powi(2) * 50.0).exp()]);
        let ibvp = Ibvp1D {
            sys: &sys,
            epsilon: 1.0,
            mesh: &mesh,
            u0: &u0,
            b: &z,
            t_final: 0.5,
            options: SchemeOptions {
                periodic: true,
                source: false,
                norm_samples: 100,
                ..Default::default()
            },
        };
        let res = solve_relaxation(&ibvp).unwrap();
        for w in res.l2_norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-13));
        }
    }

    #[test]
    fn worked_example_equilibrium_matches_characteristics() {
        let a = Analysis::new(fixtures::worked_example()).unwrap();
        let bc = forced_bc(&a);
        let g = |t: f64| t.sin();
        let h = |t: f64| t.cos();
        let b = move |t: f64| DVector::from_vec(vec![g(t), h(t)]);
        let u0f = |x: f64| -(x / 3.0).sin() + (x / 3.0).cos() / 3.0;
        let u0 = move |x: f64| DVector::from_vec(vec![u0f(x)]);
        let t_final = 0.3;
        let exact = |x: f64| {
            if x < 3.0 * t_final {
                g(t_final - x / 3.0) + h(t_final - x / 3.0) / 3.0
            } else {
                u0f(x - 3.0 * t_final)
            }
        };
        let mut errs = vec![];
        for cells in [400, 800] {
            let mesh = Mesh::uniform(2.0, cells).unwrap();
            let res = solve_equilibrium(&a, &bc, &mesh, &u0, &b, t_final, SchemeOptions::default()).unwrap();
            let want: Vec<DVector<f64>> = mesh
                .centers
                .iter()
                .map(|&x| DVector::from_vec(vec![exact(x)]))
                .collect();
            errs.push(measure_error(&res.state, &want, &mesh.widths).unwrap());
        }
        assert!(errs[0] < 5e-3, "{errs:?}");
        assert!(errs[1] < 0.7 * errs[0], "{errs:?}");
    }

    #[test]
    fn zero_speed_mode_keeps_initial_data() {
        let a = Analysis::new(fixtures::double_characteristic()).unwrap();
        let bc = forced_bc(&a);
        let mesh = Mesh::uniform(1.0, 100).unwrap();
        let u0 = |x: f64| DVector::from_vec(vec![0.5 * x.cos()]);
        let b = |t: f64| DVector::from_vec(vec![0.5 + t.sin()]);
        let res = solve_equilibrium(&a, &bc, &mesh, &u0, &b, 0.5, SchemeOptions::default()).unwrap();
        for (x, u) in mesh.centers.iter().zip(&res.state) {
            assert!((u[0] - 0.5 * x.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn measure_error_oracles() {
        let mesh = Mesh::uniform(1.0, 10).unwrap();
        let a: Vec<DVector<f64>> = mesh.centers.iter().map(|_| DVector::from_vec(vec![0.3, 0.0])).collect();
        let z: Vec<DVector<f64>> = mesh.centers.iter().map(|_| DVector::zeros(2)).collect();
        assert_eq!(measure_error(&a, &a, &mesh.widths).unwrap(), 0.0);
        assert!((measure_error(&a, &z, &mesh.widths).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(
            measure_error(&a[1..], &z, &mesh.widths),
            Err(Error::GridMismatch(_))
        ));
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = Mesh::graded(1.0, 1e-3, 1.1, 0.05).unwrap();
        let f: Vec<DVector<f64>> = g
            .centers
            .iter()
            .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let h: Vec<DVector<f64>> = g
            .centers
            .iter()
            .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let mut oracle = 0.0;
        for c in 0..g.len() {
            let mut s = 0.0;
            for i in 0..3 {
                s += (f[c][i] - h[c][i]) * (f[c][i] - h[c][i]);
            }
            oracle += s * (g.faces[c + 1] - g.faces[c]);
        }
        assert!((measure_error(&f, &h, &g.widths).unwrap() - oracle.sqrt()).abs() < 1e-12);
    }
}
