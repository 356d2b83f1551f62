//! Boundary-layer profiles of the composite expansion
//! `U_ε = (ū;0) + (μ₀;ν₀)(x/ε) + (μ₁;0)(x/√ε) + √ε(μ₂;ν₂)(x/√ε)`.
//!
//! Layer construction is implemented for `d = 1`, the case the simulator
//! exercises.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, sorted_sym_eigen, RMat};
use crate::model::RelaxationSystem;
use crate::reduction::{Analysis, EquilibriumFrame};

/// Piecewise-linear vector signal on an increasing time grid.
#[derive(Debug, Clone, Default)]
pub struct TimeTrace {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl TimeTrace {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::GridMismatch(
                "trace needs matching, non-empty time and value lists".into(),
            ));
        }
        Ok(TimeTrace { times, values })
    }

    pub fn constant(value: DVector<f64>, t_final: f64) -> Self {
        TimeTrace {
            times: vec![0.0, t_final],
            values: vec![value.clone(), value],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0].clone();
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            return self.values[last].clone();
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let th = (t - ts[k]) / (ts[k + 1] - ts[k]);
        &self.values[k] * (1.0 - th) + &self.values[k + 1] * th
    }
}

fn require_1d(sys: &RelaxationSystem) -> Result<()> {
    if sys.d != 1 {
        return Err(Error::AssumptionViolated(format!(
            "layer construction is implemented for d = 1, got d = {}",
            sys.d
        )));
    }
    Ok(())
}

/// The `ε`-scale layer `(μ₀;ν₀)(y)`, evaluated in closed form from the
/// stable eigenpairs of `M₂`.
#[derive(Debug, Clone)]
pub struct EpsLayer {
    vs: RMat,
    lambdas: Vec<f64>,
    /// `w(0) = R₂^S wˢ = V_s c` with `c = coef · wˢ`.
    coef: RMat,
    /// Maps `w` to `(μ₀;ν₀)`: `R₁(N;K̃) + R₀L₀R₁…`.
    lift: RMat,
    pub ws_trace: TimeTrace,
    pub gamma: f64,
    n: usize,
}

pub fn build_eps_layer(analysis: &Analysis, ws_trace: TimeTrace) -> Result<EpsLayer> {
    require_1d(&analysis.sys)?;
    let data = &analysis.data;
    let frame = &analysis.frame;
    let n = analysis.sys.n;
    let k2 = data.r2s.ncols();
    if ws_trace.dim() != k2 {
        return Err(Error::DimensionMismatch(format!(
            "w^S trace has dimension {}, expected {k2}",
            ws_trace.dim()
        )));
    }
    let vs = data.stable_vectors.clone();
    let coef = if k2 == 0 {
        RMat::zeros(0, 0)
    } else {
        let gram = vs.transpose() * &vs;
        linalg::solve(&gram, &(vs.transpose() * &data.r2s)).ok_or(Error::SingularKtXKt)?
    };
    let l1 = if k2 == 0 {
        RMat::zeros(n - frame.r0.ncols(), 0)
    } else {
        linalg::vstack(&[&data.n_mat, &data.k_tilde])
    };
    let l0 = frame.l0_from_l1(&analysis.sys) * &l1;
    let lift = &frame.r1 * &l1 + &frame.r0 * l0;
    let gamma = data
        .stable_eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(f64::INFINITY, f64::min)
        / 2.0;
    Ok(EpsLayer {
        vs,
        lambdas: data.stable_eigenvalues.clone(),
        coef,
        lift,
        ws_trace,
        gamma: if gamma.is_finite() { gamma } else { 0.0 },
        n,
    })
}

impl EpsLayer {
    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `w(y) = exp(M₂y) R₂^S wˢ`.
    pub fn w(&self, y: f64, ws: &DVector<f64>) -> DVector<f64> {
        let mut c = &self.coef * ws;
        for (ci, l) in c.iter_mut().zip(&self.lambdas) {
            *ci *= (l * y).exp();
        }
        &self.vs * c
    }

    pub fn evaluate(&self, y: f64, ws: &DVector<f64>) -> DVector<f64> {
        if self.is_empty() {
            return DVector::zeros(self.n);
        }
        &self.lift * self.w(y, ws)
    }

    pub fn evaluate_at(&self, y: f64, t: f64) -> DVector<f64> {
        self.evaluate(y, &self.ws_trace.at(t))
    }

    pub fn profile_csv(&self, t: f64, ys: &[f64], labels: &[String]) -> String {
        let mut s = format!("y,{}\n", labels.join(","));
        let ws = self.ws_trace.at(t);
        for &y in ys {
            let u = self.evaluate(y, &ws);
            let row: Vec<String> = u.iter().map(|x| format!("{x:.12e}")).collect();
            s.push_str(&format!("{y:.12e},{}\n", row.join(",")));
        }
        s
    }
}

/// Discretization of the `√ε`-layer solve on `[0, Z_max] × [0, T]`.
#[derive(Debug, Clone, Copy)]
pub struct SqrtLayerGrid {
    pub nz: usize,
    pub nt: usize,
    /// Overrides the default `12·sqrt(δ_max T)`.
    pub z_max: Option<f64>,
    pub max_doublings: usize,
}

impl Default for SqrtLayerGrid {
    fn default() -> Self {
        SqrtLayerGrid {
            nz: 1200,
            nt: 1000,
            z_max: None,
            max_doublings: 4,
        }
    }
}

/// `m = P₀ᵀμ₁` on a uniform `z` grid, with `∂_t m = −D ∂_zz m`.
#[derive(Debug, Clone)]
pub struct SqrtEpsLayer {
    pub d_matrix: RMat,
    pub z_max: f64,
    pub dz: f64,
    /// Snapshot times and the `n₁₀ × (nz+1)` node values at each.
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<RMat>,
    /// `∂_z m(0, t)` at every solver step.
    pub dz0_trace: TimeTrace,
    pub doublings: usize,
}

fn tridiag_solve(lower: f64, diag: f64, upper: f64, rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    scratch[0] = upper / diag;
    rhs[0] /= diag;
    for i in 1..n {
        let den = diag - lower * scratch[i - 1];
        scratch[i] = upper / den;
        rhs[i] = (rhs[i] - lower * rhs[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// One theta-scheme step for `q_t = δ q_zz` with `q(0) = g`, `q(Z) = 0`.
fn theta_step(q: &mut [f64], delta: f64, dt: f64, dz: f64, theta: f64, g_new: f64, scratch: &mut [f64]) {
    let nz = q.len() - 1;
    let r = delta * dt / (dz * dz);
    let mut rhs: Vec<f64> = (1..nz)
        .map(|i| {
            let lap = q[i - 1] - 2.0 * q[i] + q[i + 1];
            q[i] + (1.0 - theta) * r * lap
        })
        .collect();
    if nz >= 2 {
        rhs[0] += theta * r * g_new;
    }
    tridiag_solve(-theta * r, 1.0 + 2.0 * theta * r, -theta * r, &mut rhs, scratch);
    q[0] = g_new;
    q[1..nz].copy_from_slice(&rhs);
    q[nz] = 0.0;
}

/// `D = P₀ᵀA₁₂S⁻¹A₁₂ᵀP₀`.
pub fn diffusion_matrix(sys: &RelaxationSystem, eq: &EquilibriumFrame) -> Result<RMat> {
    let sinv = linalg::inverse(&sys.s()).ok_or_else(|| Error::AssumptionViolated("S is singular".into()))?;
    let b = sys.a12().transpose() * &eq.p0;
    Ok(linalg::sym(&(b.transpose() * sinv * b)))
}

/// Solves the `√ε`-layer with Dirichlet data `m(0, t) = m0_trace(t)`,
/// `m(Z_max, t) = 0` and `m(·, 0) = 0`, using Crank–Nicolson in the
/// eigenbasis of `−D` after two backward-Euler half steps.
pub fn solve_sqrt_eps_layer(
    sys: &RelaxationSystem,
    eq: &EquilibriumFrame,
    m0_trace: &TimeTrace,
    t_final: f64,
    grid: SqrtLayerGrid,
    snapshot_times: &[f64],
) -> Result<SqrtEpsLayer> {
    require_1d(sys)?;
    let n10 = eq.p0.ncols();
    let d = diffusion_matrix(sys, eq)?;
    if n10 == 0 {
        return Ok(SqrtEpsLayer {
            d_matrix: d,
            z_max: 0.0,
            dz: 1.0,
            snapshot_times: snapshot_times.to_vec(),
            snapshots: snapshot_times.iter().map(|_| RMat::zeros(0, 1)).collect(),
            dz0_trace: TimeTrace::constant(DVector::zeros(0), t_final),
            doublings: 0,
        });
    }
    if m0_trace.dim() != n10 {
        return Err(Error::DimensionMismatch(format!(
            "m(0) trace has dimension {}, expected {n10}",
            m0_trace.dim()
        )));
    }
    let (deltas, v) = sorted_sym_eigen(&(-&d));
    let scale = linalg::norm2(sys.a1()).max(1.0);
    if deltas.iter().any(|&x| x <= 1e-12 * scale) {
        return Err(Error::AssumptionViolated(
            "the diffusion matrix D is not negative definite".into(),
        ));
    }
    if grid.nz < 4 || grid.nt < 2 || !(t_final > 0.0) {
        return Err(Error::Config(
            "sqrt-eps layer grid needs nz >= 4, nt >= 2 and T > 0".into(),
        ));
    }
    let dmax = deltas.iter().cloned().fold(0.0, f64::max);
    let mut z_max = grid.z_max.unwrap_or(12.0 * (dmax * t_final).sqrt());
    let dz = z_max / grid.nz as f64;
    let mut nz = grid.nz;
    let mut doublings = 0;
    loop {
        let out = run_layer(&deltas, &v, m0_trace, t_final, nz, dz, grid.nt, snapshot_times)?;
        let last = out.0.last().unwrap();
        let peak = out.0.iter().map(|s| s.abs().max()).fold(0.0, f64::max);
        let mid = last.column(nz / 2).abs().max();
        if mid <= 1e-6 * peak || doublings >= grid.max_doublings || grid.z_max.is_some() {
            if mid > 1e-6 * peak && grid.z_max.is_none() {
                log::warn!("sqrt-eps layer still above tolerance at Z_max/2 after {doublings} doublings");
            }
            return Ok(SqrtEpsLayer {
                d_matrix: d,
                z_max,
                dz,
                snapshot_times: out.2,
                snapshots: out.0,
                dz0_trace: out.1,
                doublings,
            });
        }
        z_max *= 2.0;
        nz *= 2;
        doublings += 1;
    }
}

type LayerRun = (Vec<RMat>, TimeTrace, Vec<f64>);

#[allow(clippy::too_many_arguments)]
fn run_layer(
    deltas: &[f64],
    v: &RMat,
    m0_trace: &TimeTrace,
    t_final: f64,
    nz: usize,
    dz: f64,
    nt: usize,
    snapshot_times: &[f64],
) -> Result<LayerRun> {
    let k = deltas.len();
    let dt = t_final / nt as f64;
    // Snapshot times are rounded to the nearest solver step.
    let snap_steps: Vec<usize> = snapshot_times
        .iter()
        .map(|&t| ((t / dt).round() as isize).clamp(0, nt as isize) as usize)
        .collect();
    let g_modal = |t: f64| -> DVector<f64> { v.transpose() * m0_trace.at(t) };
    let mut q: Vec<Vec<f64>> = vec![vec![0.0; nz + 1]; k];
    let mut scratch = vec![0.0; nz];
    let mut snaps: Vec<Option<RMat>> = vec![None; snap_steps.len()];
    let mut dz0_t = Vec::with_capacity(nt + 1);
    let mut dz0_v = Vec::with_capacity(nt + 1);
    let record = |q: &Vec<Vec<f64>>| -> RMat {
        let modal = RMat::from_fn(k, nz + 1, |i, j| q[i][j]);
        v * modal
    };
    let slope0 = |q: &Vec<Vec<f64>>| -> DVector<f64> {
        let modal = DVector::from_iterator(k, q.iter().map(|c| (-3.0 * c[0] + 4.0 * c[1] - c[2]) / (2.0 * dz)));
        v * modal
    };
    let take = |step: usize, q: &Vec<Vec<f64>>, snaps: &mut Vec<Option<RMat>>| {
        for (s, &st) in snap_steps.iter().enumerate() {
            if st == step && snaps[s].is_none() {
                snaps[s] = Some(record(q));
            }
        }
    };
    // m(·,0) = 0 in the interior; the boundary node carries m(0,0).
    let g0 = g_modal(0.0);
    for i in 0..k {
        q[i][0] = g0[i];
    }
    take(0, &q, &mut snaps);
    dz0_t.push(0.0);
    dz0_v.push(slope0(&q));
    for step in 1..=nt {
        let t_old = (step - 1) as f64 * dt;
        let t_new = step as f64 * dt;
        if step == 1 {
            let t_half = 0.5 * (t_old + t_new);
            let gh = g_modal(t_half);
            let gn = g_modal(t_new);
            for i in 0..k {
                theta_step(&mut q[i], deltas[i], dt / 2.0, dz, 1.0, gh[i], &mut scratch);
                theta_step(&mut q[i], deltas[i], dt / 2.0, dz, 1.0, gn[i], &mut scratch);
            }
        } else {
            let gn = g_modal(t_new);
            for i in 0..k {
                theta_step(&mut q[i], deltas[i], dt, dz, 0.5, gn[i], &mut scratch);
            }
        }
        if q.iter().any(|c| c.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("sqrt-eps layer solve diverged".into()));
        }
        take(step, &q, &mut snaps);
        dz0_t.push(t_new);
        dz0_v.push(slope0(&q));
    }
    let times: Vec<f64> = snap_steps.iter().map(|&s| s as f64 * dt).collect();
    Ok((
        snaps.into_iter().map(|s| s.expect("snapshot")).collect(),
        TimeTrace::new(dz0_t, dz0_v)?,
        times,
    ))
}

impl SqrtEpsLayer {
    pub fn n10(&self) -> usize {
        self.d_matrix.nrows()
    }

    fn nodes(&self) -> usize {
        self.snapshots.first().map_or(1, |s| s.ncols())
    }

    pub fn snapshot_index(&self, t: f64) -> Result<usize> {
        self.snapshot_times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::GridMismatch(format!("no sqrt-eps layer snapshot at t = {t}")))
    }

    /// `m(z)` at snapshot `snap`, linearly interpolated, zero beyond `Z_max`.
    pub fn m(&self, z: f64, snap: usize) -> DVector<f64> {
        let k = self.n10();
        if k == 0 || z >= self.z_max {
            return DVector::zeros(k);
        }
        let s = &self.snapshots[snap];
        let pos = (z.max(0.0) / self.dz).min((self.nodes() - 1) as f64);
        let i = (pos.floor() as usize).min(self.nodes() - 2);
        let th = pos - i as f64;
        s.column(i) * (1.0 - th) + s.column(i + 1) * th
    }

    /// `∂_z m(z)` at snapshot `snap` from nodal differences, interpolated.
    pub fn dz_m(&self, z: f64, snap: usize) -> DVector<f64> {
        let k = self.n10();
        if k == 0 || z >= self.z_max {
            return DVector::zeros(k);
        }
        let s = &self.snapshots[snap];
        let last = self.nodes() - 1;
        let h = self.dz;
        let node = |i: usize| -> DVector<f64> {
            if i == 0 {
                (s.column(0) * -3.0 + s.column(1) * 4.0 - s.column(2)) / (2.0 * h)
            } else if i == last {
                (s.column(last) * 3.0 - s.column(last - 1) * 4.0 + s.column(last - 2)) / (2.0 * h)
            } else {
                (s.column(i + 1) - s.column(i - 1)) / (2.0 * h)
            }
        };
        let pos = (z.max(0.0) / h).min(last as f64);
        let i = (pos.floor() as usize).min(last - 1);
        let th = pos - i as f64;
        node(i) * (1.0 - th) + node(i + 1) * th
    }

    pub fn profile_csv(&self, snap: usize) -> String {
        let k = self.n10();
        let head: Vec<String> = (1..=k).map(|i| format!("m{i}")).collect();
        let mut s = format!("z,{}\n", head.join(","));
        if k == 0 {
            return s;
        }
        let m = &self.snapshots[snap];
        for j in 0..m.ncols() {
            let row: Vec<String> = m.column(j).iter().map(|x| format!("{x:.12e}")).collect();
            s.push_str(&format!("{:.12e},{}\n", j as f64 * self.dz, row.join(",")));
        }
        s
    }
}

/// `ν₂ = S⁻¹A₁₂ᵀP₀∂_z m`, `P₁ᵀμ₂ = −Λ₁⁻¹P₁ᵀA₁₂S⁻¹A₁₂ᵀP₀∂_z m` and `P₀ᵀμ₂ = 0`.
#[derive(Debug, Clone)]
pub struct SecondCorrection {
    pub nu2_coef: RMat,
    pub mu2_coef: RMat,
}

pub fn build_second_correction(sys: &RelaxationSystem, eq: &EquilibriumFrame) -> Result<SecondCorrection> {
    require_1d(sys)?;
    let sinv = linalg::inverse(&sys.s()).ok_or_else(|| Error::AssumptionViolated("S is singular".into()))?;
    let nu2 = &sinv * sys.a12().transpose() * &eq.p0;
    let mu2 = -(&eq.p1 * eq.lambda1_inv() * eq.p1.transpose() * sys.a12() * &nu2);
    Ok(SecondCorrection {
        nu2_coef: nu2,
        mu2_coef: mu2,
    })
}

impl SecondCorrection {
    /// `(μ₂; ν₂)` for a given `∂_z m`.
    pub fn evaluate(&self, dzm: &DVector<f64>) -> DVector<f64> {
        let mu = &self.mu2_coef * dzm;
        let nu = &self.nu2_coef * dzm;
        let mut out = DVector::zeros(mu.len() + nu.len());
        out.rows_mut(0, mu.len()).copy_from(&mu);
        out.rows_mut(mu.len(), nu.len()).copy_from(&nu);
        out
    }
}

/// Composite asymptotic solution at fixed `ε`.
#[derive(Debug, Clone)]
pub struct CompositeSolution {
    pub epsilon: f64,
    pub eps_layer: EpsLayer,
    pub sqrt_layer: SqrtEpsLayer,
    pub correction: SecondCorrection,
    p0: RMat,
    n: usize,
}

pub fn assemble_composite(
    analysis: &Analysis,
    eps_layer: EpsLayer,
    sqrt_layer: SqrtEpsLayer,
    correction: SecondCorrection,
    epsilon: f64,
) -> Result<CompositeSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    Ok(CompositeSolution {
        epsilon,
        eps_layer,
        sqrt_layer,
        correction,
        p0: analysis.eq.p0.clone(),
        n: analysis.sys.n,
    })
}

impl CompositeSolution {
    fn lift_outer(&self, ubar: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.n);
        u.rows_mut(0, ubar.len()).copy_from(ubar);
        u
    }

    fn sqrt_part(&self, m: &DVector<f64>, dzm: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.n);
        if m.is_empty() {
            return u;
        }
        let mu1 = &self.p0 * m;
        u.rows_mut(0, mu1.len()).copy_from(&mu1);
        u + self.correction.evaluate(dzm) * self.epsilon.sqrt()
    }

    /// `U_ε(x, t)` given the outer value `ū(x, t)`; `t` must be a snapshot
    /// time of the `√ε`-layer.
    pub fn evaluate(&self, x: f64, ubar: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let snap = if self.sqrt_layer.n10() > 0 {
            self.sqrt_layer.snapshot_index(t)?
        } else {
            0
        };
        Ok(self.evaluate_snap(x, ubar, t, snap))
    }

    fn evaluate_snap(&self, x: f64, ubar: &DVector<f64>, t: f64, snap: usize) -> DVector<f64> {
        let eps = self.epsilon;
        let mut u = self.lift_outer(ubar) + self.eps_layer.evaluate_at(x / eps, t);
        if self.sqrt_layer.n10() > 0 {
            let z = x / eps.sqrt();
            u += self.sqrt_part(&self.sqrt_layer.m(z, snap), &self.sqrt_layer.dz_m(z, snap));
        }
        u
    }

    /// Composite on a grid of points with outer values `ubar[i]` at `xs[i]`.
    pub fn evaluate_grid(&self, xs: &[f64], ubar: &[DVector<f64>], t: f64) -> Result<Vec<DVector<f64>>> {
        if xs.len() != ubar.len() {
            return Err(Error::GridMismatch(format!(
                "{} points but {} outer values",
                xs.len(),
                ubar.len()
            )));
        }
        let snap = if self.sqrt_layer.n10() > 0 {
            self.sqrt_layer.snapshot_index(t)?
        } else {
            0
        };
        Ok(xs
            .iter()
            .zip(ubar)
            .map(|(&x, u)| self.evaluate_snap(x, u, t, snap))
            .collect())
    }

    /// `U_ε(0, t)` from boundary traces, using the Dirichlet data of the
    /// `√ε`-layer directly.
    pub fn boundary_value(&self, ubar0: &DVector<f64>, m0: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut u = self.lift_outer(ubar0) + self.eps_layer.evaluate_at(0.0, t);
        if self.sqrt_layer.n10() > 0 {
            u += self.sqrt_part(m0, &self.sqrt_layer.dz0_trace.at(t));
        }
        u
    }
}
