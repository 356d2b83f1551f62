//! Equilibrium-side frames, the algebra of the boundary layers, the
//! large-η behaviour of `M`, and the reduced boundary condition
//! `B_o B_u ū(0) = B_o b` for the equilibrium system.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, hstack, sorted_sym_eigen, to_complex, vstack, CMat, RMat, C64};
use crate::model::{compute_indices, RelaxationSystem, SystemIndices};
use crate::spectral::{
    self, build_kernel_frame, kreiss_ratio, Eta, FrequencyPoint, GkcReport, KernelFrame, SamplingSpec,
};

/// Orthonormal eigenframe `(P₁, P₀)` of `A₁₁` with `P₁ᵀA₁₁P₁ = Λ₁`.
///
/// Columns of `P₁` hold the positive eigenvalues first.
#[derive(Debug, Clone)]
pub struct EquilibriumFrame {
    pub p1: RMat,
    pub p0: RMat,
    pub lambda1: Vec<f64>,
    pub n1_plus: usize,
}

impl EquilibriumFrame {
    pub fn lambda1_inv(&self) -> RMat {
        RMat::from_diagonal(&DVector::from_iterator(
            self.lambda1.len(),
            self.lambda1.iter().map(|l| 1.0 / l),
        ))
    }

    /// Eigenvectors of the positive eigenvalues of `A₁₁`.
    pub fn p_plus(&self) -> RMat {
        self.p1.columns(0, self.n1_plus).into_owned()
    }
}

pub fn build_equilibrium_frame(sys: &RelaxationSystem) -> Result<EquilibriumFrame> {
    let idx = compute_indices(sys)?;
    let a11 = sys.a11();
    let (vals, vecs) = sorted_sym_eigen(&a11);
    let tau = sys.tau_eig();
    let nu = sys.nu();
    let pos: Vec<usize> = (0..nu).rev().filter(|&i| vals[i] > tau).collect();
    let neg: Vec<usize> = (0..nu).filter(|&i| vals[i] < -tau).collect();
    let zero: Vec<usize> = (0..nu).filter(|&i| vals[i].abs() <= tau).collect();
    debug_assert_eq!(pos.len(), idx.n1_plus);
    let p1_idx: Vec<usize> = pos.iter().chain(neg.iter()).copied().collect();
    Ok(EquilibriumFrame {
        p1: crate::fixtures::columns(&vecs, &p1_idx),
        p0: crate::fixtures::columns(&vecs, &zero),
        lambda1: p1_idx.iter().map(|&i| vals[i]).collect(),
        n1_plus: pos.len(),
    })
}

/// Matrices describing the `ε`-layer: `L₁(μ₀; ν₀) = (N; K̃) w` with
/// `∂_y w = M₂ w`.
#[derive(Debug, Clone)]
pub struct ReductionData {
    pub k: RMat,
    pub k_tilde: RMat,
    pub x: RMat,
    pub n_mat: RMat,
    pub m2: RMat,
    pub r2s: RMat,
    /// Eigenvalues of `M₂`, ascending.
    pub m2_eigenvalues: Vec<f64>,
    /// Stable eigenpairs of `M₂`: unit columns `V_s` with `M₂V_s = V_s diag(λ_s)`.
    pub stable_vectors: RMat,
    pub stable_eigenvalues: Vec<f64>,
}

pub fn build_reduction_data(frame: &KernelFrame, eq: &EquilibriumFrame, idx: &SystemIndices) -> Result<ReductionData> {
    let bl = frame.blocks();
    let m = bl.r02_perp.ncols();
    let n10 = eq.p0.ncols();
    if m < n10 {
        return Err(Error::RankDeficientK);
    }
    let k = bl.a12_hat.transpose() * &eq.p0;
    if n10 > 0 {
        let sv = k.clone().svd(false, false).singular_values;
        let smax = sv.max();
        if smax == 0.0 || sv.min() <= linalg::TAU_RANK_REL * smax.max(linalg::norm2(&bl.a12_hat)) {
            return Err(Error::RankDeficientK);
        }
    }
    let k_tilde = linalg::orthonormal_complement(&k).map_err(|_| Error::RankDeficientK)?;
    let l1inv = eq.lambda1_inv();
    let p1t_a12 = eq.p1.transpose() * &bl.a12_hat;
    let x = linalg::sym(&(&bl.a22_hat - p1t_a12.transpose() * &l1inv * &p1t_a12));
    let s_hat = &bl.s_hat;
    let h = linalg::sym(&(k_tilde.transpose() * &x * &k_tilde));
    let g = linalg::sym(&(k_tilde.transpose() * s_hat * &k_tilde));
    let hinv = linalg::inverse(&h).ok_or(Error::SingularKtXKt)?;
    if k_tilde.ncols() > 0 && linalg::norm2(&hinv) * linalg::norm2(&h) > 1e12 {
        return Err(Error::SingularKtXKt);
    }
    let ginv = linalg::inverse(&g).ok_or_else(|| Error::AssumptionViolated("K~^T S^ K~ is singular".into()))?;
    let ktk_inv = linalg::inverse(&(k.transpose() * &k)).ok_or(Error::RankDeficientK)?;
    let n_mat = -(&eq.p1 * &l1inv * &p1t_a12 * &k_tilde)
        + &eq.p0 * ktk_inv * ((k.transpose() * s_hat * &k_tilde) * &ginv * &h - k.transpose() * &x * &k_tilde);
    let m2 = &hinv * &g;

    // M₂ = H⁻¹G with G ≺ 0: with −G = LLᵀ the eigenproblem becomes the
    // symmetric W = L⁻¹HL⁻ᵀ, μ ↦ λ = −1/μ, v = L⁻ᵀz.
    let dim = k_tilde.ncols();
    let expected = idx.n_plus as i64 - idx.n1_plus as i64 - n10 as i64;
    let (r2s, eigs, vs, ls) = if dim == 0 {
        (RMat::zeros(0, 0), vec![], RMat::zeros(0, 0), vec![])
    } else {
        let chol = (-&g)
            .cholesky()
            .ok_or_else(|| Error::AssumptionViolated("S^ restricted to K~ is not negative definite".into()))?;
        let l = chol.l();
        let linv = linalg::inverse(&l).ok_or(Error::SingularKtXKt)?;
        let w = linalg::sym(&(&linv * &h * linv.transpose()));
        let (mu, z) = sorted_sym_eigen(&w);
        let stable: Vec<usize> = (0..dim).filter(|&i| mu[i] > 0.0).collect();
        let mut v = linv.transpose() * crate::fixtures::columns(&z, &stable);
        for mut c in v.column_iter_mut() {
            let nrm = c.norm();
            c /= nrm;
        }
        let ls: Vec<f64> = stable.iter().map(|&i| -1.0 / mu[i]).collect();
        let mut eigs: Vec<f64> = mu.iter().map(|m| -1.0 / m).collect();
        eigs.sort_by(f64::total_cmp);
        (linalg::orthonormalize(&v), eigs, v, ls)
    };
    if r2s.ncols() as i64 != expected.max(0) || expected < 0 {
        return Err(Error::SpectralCountMismatch {
            what: "M2".into(),
            expected: expected.max(0) as usize,
            found: r2s.ncols(),
        });
    }
    let r2s = if dim == 0 {
        RMat::zeros(0, expected.max(0) as usize)
    } else {
        r2s
    };
    let vs = if dim == 0 { RMat::zeros(0, 0) } else { vs };
    Ok(ReductionData {
        k,
        k_tilde,
        x,
        n_mat,
        m2,
        r2s,
        m2_eigenvalues: eigs,
        stable_vectors: vs,
        stable_eigenvalues: ls,
    })
}

/// `(ξ, ω) ↦ M₁(ξ, ω)`, the equilibrium counterpart of `M`.
#[derive(Debug, Clone)]
pub struct M1Evaluator {
    a_j11: Vec<RMat>,
    eq: EquilibriumFrame,
}

impl M1Evaluator {
    pub fn new(sys: &RelaxationSystem, eq: &EquilibriumFrame) -> Self {
        M1Evaluator {
            a_j11: (1..sys.d).map(|j| sys.a_j11(j)).collect(),
            eq: eq.clone(),
        }
    }

    /// `C(ω) = i Σ ω_j A_{j11}`.
    pub fn c(&self, omega: &[f64]) -> CMat {
        let nu = self.eq.p1.nrows();
        let mut m = CMat::zeros(nu, nu);
        for (a, w) in self.a_j11.iter().zip(omega) {
            m += a.map(|x| C64::new(0.0, x * w));
        }
        m
    }

    fn shift_inv(&self, xi: C64, c: &CMat) -> Result<CMat> {
        let p0 = to_complex(&self.eq.p0);
        let n10 = p0.ncols();
        let shift = CMat::identity(n10, n10) * xi + p0.transpose() * c * &p0;
        linalg::solve_c(&shift, &CMat::identity(n10, n10)).ok_or(Error::SingularShift)
    }

    pub fn m1(&self, xi: C64, omega: &[f64]) -> Result<CMat> {
        let c = self.c(omega);
        let p1 = to_complex(&self.eq.p1);
        let p0 = to_complex(&self.eq.p0);
        let m = p1.ncols();
        let inner = CMat::identity(m, m) * xi + p1.transpose() * &c * &p1
            - (p1.transpose() * &c * &p0) * self.shift_inv(xi, &c)? * (p0.transpose() * &c * &p1);
        Ok(-(to_complex(&self.eq.lambda1_inv()) * inner))
    }

    /// Orthonormal stable basis `R₁^S` of `M₁(ξ, ω)`.
    pub fn r1s(&self, xi: C64, omega: &[f64]) -> Result<CMat> {
        let m1 = self.m1(xi, omega)?;
        let split = linalg::split_invariant_subspaces(&m1)?;
        if split.k != self.eq.n1_plus {
            return Err(Error::SpectralCountMismatch {
                what: "M1".into(),
                expected: self.eq.n1_plus,
                found: split.k,
            });
        }
        Ok(split.basis_s)
    }

    /// Upper-left column block of the limit stable matrix:
    /// `(P₁ − P₀ (ξI + P₀ᵀCP₀)⁻¹ P₀ᵀ C P₁) R₁^S`.
    pub fn first_block(&self, xi: C64, omega: &[f64]) -> Result<CMat> {
        let c = self.c(omega);
        let p1 = to_complex(&self.eq.p1);
        let p0 = to_complex(&self.eq.p0);
        let lift = &p1 - &p0 * self.shift_inv(xi, &c)? * (p0.transpose() * &c * &p1);
        Ok(lift * self.r1s(xi, omega)?)
    }
}

/// All frames of one system, computed once.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub sys: RelaxationSystem,
    pub idx: SystemIndices,
    pub frame: KernelFrame,
    pub eq: EquilibriumFrame,
    pub data: ReductionData,
    pub m1: M1Evaluator,
}

impl Analysis {
    pub fn new(sys: RelaxationSystem) -> Result<Self> {
        let idx = compute_indices(&sys)?;
        if !crate::model::check_sk_condition(&sys) {
            return Err(Error::SkConditionViolated);
        }
        let frame = build_kernel_frame(&sys)?;
        let eq = build_equilibrium_frame(&sys)?;
        let data = build_reduction_data(&frame, &eq, &idx)?;
        let m1 = M1Evaluator::new(&sys, &eq);
        Ok(Analysis {
            sys,
            idx,
            frame,
            eq,
            data,
            m1,
        })
    }

    pub fn build_m(&self, p: &FrequencyPoint) -> Result<CMat> {
        spectral::build_m(&self.sys, &self.frame, p)
    }

    /// `R_M^S(ξ, ω, ∞)` in the coordinates of the structured frame `R₁`,
    /// an `(n − n₀) × n₊` matrix.
    pub fn limit_stable_matrix(&self, xi: C64, omega: &[f64]) -> Result<CMat> {
        let nu = self.sys.nu();
        let m = self.frame.r1.ncols() - nu;
        let first = self.m1.first_block(xi, omega)?;
        let p0 = to_complex(&self.eq.p0);
        let nr = to_complex(&(&self.data.n_mat * &self.data.r2s));
        let kr = to_complex(&(&self.data.k_tilde * &self.data.r2s));
        let top = hstack(&[&first, &p0, &nr]);
        let zeros_a = CMat::zeros(m, first.ncols() + p0.ncols());
        let bottom = hstack(&[&zeros_a, &kr]);
        Ok(vstack(&[&top, &bottom]))
    }

    /// Kreiss ratio at a finite point or at `η = ∞`.
    pub fn gkc_ratio(&self, p: &FrequencyPoint) -> Result<f64> {
        match p.eta {
            Eta::Finite(_) => spectral::gkc_ratio_finite(&self.sys, &self.frame, self.idx.n_plus, p),
            Eta::Infinite => {
                let basis = self.limit_stable_matrix(p.xi, &p.omega)?;
                let br1 = to_complex(&(&self.sys.b * &self.frame.r1));
                Ok(kreiss_ratio(&br1, &basis))
            }
        }
    }

    /// Residual of `M ≈ Â₁⁻¹(ηQ̂ + Ĥ)` and the error of the identity
    /// `Ĥ₁₁ = −(ξI + C(ω))` for its top-left block.
    pub fn large_eta_expansion_check(&self, p: &FrequencyPoint) -> Result<LargeEtaResidual> {
        let eta = p
            .eta_finite()
            .ok_or_else(|| Error::Config("large-eta check needs finite eta".into()))?;
        let sys = &self.sys;
        let f = &self.frame;
        let n = sys.n;
        let tang = spectral::tangential(sys, &p.omega)?;
        let h = CMat::from_fn(n, n, |i, j| {
            C64::new(0.0, -tang[(i, j)]) - if i == j { p.xi } else { C64::new(0.0, 0.0) }
        });
        let corr = &f.r0qr0_inv * f.r0.transpose();
        let left = f.r1.transpose() - f.r1.transpose() * &sys.q * &f.r0 * &corr;
        let right = &f.r1 - &f.r0 * (&corr * &sys.q * &f.r1);
        let h_hat = to_complex(&left) * &h * to_complex(&right);
        let approx = linalg::solve_c(
            &to_complex(&f.a1_hat),
            &(to_complex(&f.q_hat) * C64::new(eta, 0.0) + &h_hat),
        )
        .ok_or_else(|| Error::NonFinite("A1_hat singular".into()))?;
        let m = self.build_m(p)?;
        let nu = sys.nu();
        let top = h_hat.view((0, 0), (nu, nu)).into_owned();
        let want = -(CMat::identity(nu, nu) * p.xi + self.m1.c(&p.omega));
        Ok(LargeEtaResidual {
            eta,
            residual: (m - approx).norm(),
            top_left_error: (top - want).norm(),
        })
    }

    /// Largest principal angle between the stable subspace of `M(ξ, ω, η)`
    /// and the span of the `η = ∞` limit matrix.
    pub fn limit_angle(&self, xi: C64, omega: &[f64], eta: f64) -> Result<f64> {
        let m = self.build_m(&FrequencyPoint::new(xi, omega.to_vec(), eta))?;
        let split = linalg::split_invariant_subspaces(&m)?;
        let lim = self.limit_stable_matrix(xi, omega)?;
        Ok(linalg::max_principal_angle(&split.basis_s, &lim))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LargeEtaResidual {
    pub eta: f64,
    pub residual: f64,
    pub top_left_error: f64,
}

/// Least-squares slope of `log y` against `log x`, with its standard error.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let se = if n > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, se))
}

/// Certificate of the uniform Kreiss condition for the reduced operator.
#[derive(Debug, Clone, Serialize)]
pub struct UkcCertificate {
    pub min_ratio: f64,
    pub argmin_point: Option<FrequencyPoint>,
    pub samples: usize,
    pub failures: usize,
    pub vacuous: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedBcResiduals {
    /// `‖B_o (Y₂ Y₃)‖`.
    pub bo_y23: f64,
    /// `‖B_o B_u P₀‖`.
    pub bo_bu_p0: f64,
    /// Agreement of the trailing blocks of `B R₁ R_M^S(·, ∞)` with
    /// `(Y₂ Y₃)` at three random `(ξ, ω)`.
    pub parameter_independence: f64,
    /// Relative gap in `|det(B R₁ R_M^S(∞))| = |det(B_o Y₁)|·|det(B̃_o (Y₂ Y₃))|`.
    pub determinant_identity: f64,
    pub stack_condition: f64,
}

/// Reduced boundary condition `B_o B_u ū(0) = B_o b`.
#[derive(Debug, Clone)]
pub struct ReducedBc {
    pub bo: RMat,
    pub bo_tilde: RMat,
    /// `Y₁` at the reference point `ξ = 1, ω = 0`.
    pub y1: CMat,
    pub y2: RMat,
    pub y3: RMat,
    pub reduced_operator: RMat,
    pub closure_coefficient: RMat,
    pub ukc: UkcCertificate,
    pub residuals: ReducedBcResiduals,
    pub forced: bool,
    /// Row-reduced `(operator | rhs)` with leading operator entries 1.
    pub normalized_operator: RMat,
    pub normalized_rhs: RMat,
    pub equations: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ReduceOptions {
    pub force: bool,
    pub sampling: SamplingSpec,
}

fn fmt_coef(x: f64) -> String {
    format!("{:.3}", x)
}

/// Row-reduces `op` (full row rank) to reduced echelon form and applies
/// the same row operations to `rhs`.
fn normalize_rows(op: &RMat, rhs: &RMat) -> (RMat, RMat) {
    let mut a = op.clone();
    let mut b = rhs.clone();
    let rows = a.nrows();
    let scale = a.abs().max().max(f64::MIN_POSITIVE);
    let mut lead = 0;
    for col in 0..a.ncols() {
        if lead >= rows {
            break;
        }
        let piv = (lead..rows)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        if a[(piv, col)].abs() <= 1e-12 * scale {
            continue;
        }
        a.swap_rows(lead, piv);
        b.swap_rows(lead, piv);
        let p = a[(lead, col)];
        a.row_mut(lead).scale_mut(1.0 / p);
        b.row_mut(lead).scale_mut(1.0 / p);
        a[(lead, col)] = 1.0;
        for i in 0..rows {
            if i != lead {
                let f = a[(i, col)];
                if f != 0.0 {
                    let ra = a.row(lead).into_owned();
                    let rb = b.row(lead).into_owned();
                    let na = a.row(i) - ra * f;
                    let nb = b.row(i) - rb * f;
                    a.set_row(i, &na);
                    b.set_row(i, &nb);
                }
            }
        }
        lead += 1;
    }
    a.iter_mut().for_each(|x| {
        if x.abs() <= 1e-14 * scale {
            *x = 0.0
        }
    });
    (a, b)
}

fn render_equations(sys: &RelaxationSystem, op: &RMat, rhs: &RMat) -> Vec<String> {
    let state = &sys.labels.state[..sys.nu()];
    let bnd = &sys.labels.boundary;
    (0..op.nrows())
        .map(|i| {
            let lhs: Vec<String> = (0..op.ncols())
                .filter(|&j| op[(i, j)] != 0.0)
                .map(|j| {
                    if op[(i, j)] == 1.0 {
                        format!("{}(0,t)", state[j])
                    } else {
                        format!("{}·{}(0,t)", fmt_coef(op[(i, j)]), state[j])
                    }
                })
                .collect();
            let rhs_terms: Vec<String> = (0..rhs.ncols())
                .filter(|&k| rhs[(i, k)].abs() > 1e-14)
                .map(|k| format!("{}·{}(t)", fmt_coef(rhs[(i, k)]), bnd[k]))
                .collect();
            let r = if rhs_terms.is_empty() {
                "0".to_string()
            } else {
                rhs_terms.join(" + ").replace("+ -", "- ")
            };
            format!("{} = {}", lhs.join(" + ").replace("+ -", "- "), r)
        })
        .collect()
}

/// Derives the reduced boundary condition, gated on a passing Kreiss
/// sample unless `opts.force` is set.
pub fn derive_reduced_bc(analysis: &Analysis, gkc: Option<&GkcReport>, opts: &ReduceOptions) -> Result<ReducedBc> {
    let gkc_pass = gkc.is_some_and(|g| g.pass);
    if !gkc_pass && !opts.force {
        return Err(Error::GkcFailed {
            min_ratio: gkc.map_or(f64::NAN, |g| g.min_ratio),
        });
    }
    if !gkc_pass {
        log::warn!("reduced boundary condition derived despite a failed or missing Kreiss check (forced)");
    }
    let sys = &analysis.sys;
    let idx = &analysis.idx;
    let eq = &analysis.eq;
    let data = &analysis.data;
    let bl = analysis.frame.blocks();
    let bu = sys.b_u();
    let bv = sys.b_v();
    let n_plus = idx.n_plus;
    let n1p = idx.n1_plus;
    let y2 = &bu * &eq.p0;
    let y3 = &bu * &data.n_mat * &data.r2s + &bv * &bl.r02_perp * &data.k_tilde * &data.r2s;
    let y23 = hstack(&[&y2, &y3]);
    if y23.ncols() + n1p != n_plus {
        return Err(Error::DegenerateY {
            expected: n_plus - n1p.min(n_plus),
            found: y23.ncols(),
        });
    }
    let bo = linalg::left_nullspace(&y23, n1p).map_err(|e| match e {
        Error::RankMismatch { expected, found } => Error::DegenerateY { expected, found },
        other => other,
    })?;
    let bo_tilde = if n1p == 0 {
        RMat::identity(n_plus, n_plus)
    } else {
        linalg::orthonormal_complement(&bo.transpose())?.transpose()
    };
    let reduced_operator = &bo * &bu;
    let closure_coefficient = &bo_tilde * &y23;
    let stack = vstack(&[&bo, &bo_tilde]);
    let stack_sv = if stack.is_empty() {
        DVector::from_element(1, 1.0)
    } else {
        stack.clone().svd(false, false).singular_values
    };
    let stack_condition = stack_sv.max() / stack_sv.min();
    if linalg::inverse(&closure_coefficient).is_none() && closure_coefficient.nrows() > 0 {
        return Err(Error::SingularClosure);
    }
    let bo_y23 = if y23.is_empty() || bo.is_empty() {
        0.0
    } else {
        (&bo * &y23).norm()
    };
    let bo_bu_p0 = if eq.p0.ncols() == 0 || bo.is_empty() {
        0.0
    } else {
        (&bo * &bu * &eq.p0).norm()
    };

    // Parameter independence and the block-triangular determinant identity.
    let br1 = to_complex(&(&sys.b * &analysis.frame.r1));
    let probes: [(C64, f64); 3] = [
        (C64::new(0.8, 0.3), 0.7),
        (C64::new(0.35, -0.9), -0.4),
        (C64::new(1.7, 0.05), 1.1),
    ];
    let mut indep: f64 = 0.0;
    let mut det_gap: f64 = 0.0;
    let y23c = to_complex(&y23);
    let closure_det = linalg::det(&closure_coefficient).abs();
    for (xi, w) in probes {
        let omega: Vec<f64> = (1..sys.d).map(|j| w * j as f64).collect();
        let lim = analysis.limit_stable_matrix(xi, &omega)?;
        let img = &br1 * &lim;
        let trailing = img.columns(n1p, n_plus - n1p).into_owned();
        if trailing.ncols() > 0 {
            indep = indep.max((trailing - &y23c).norm() / y23c.norm().max(1.0));
        }
        let y1 = img.columns(0, n1p).into_owned();
        let lhs = linalg::det_c(&img).norm();
        let rhs = linalg::det_c(&(to_complex(&bo) * y1)).norm() * closure_det;
        det_gap = det_gap.max((lhs - rhs).abs() / lhs.max(rhs).max(f64::MIN_POSITIVE));
    }
    let y1 = to_complex(&bu) * analysis.m1.first_block(C64::new(1.0, 0.0), &vec![0.0; sys.d - 1])?;
    let ukc = reduced_ukc(analysis, &reduced_operator, &opts.sampling)?;
    let (normalized_operator, normalized_rhs) = normalize_rows(&reduced_operator, &bo);
    let equations = render_equations(sys, &normalized_operator, &normalized_rhs);
    Ok(ReducedBc {
        bo,
        bo_tilde,
        y1,
        y2,
        y3,
        reduced_operator,
        closure_coefficient,
        ukc,
        residuals: ReducedBcResiduals {
            bo_y23,
            bo_bu_p0,
            parameter_independence: indep,
            determinant_identity: det_gap,
            stack_condition,
        },
        forced: !gkc_pass,
        normalized_operator,
        normalized_rhs,
        equations,
    })
}

/// Samples `|det(B_o B_u P₁ R₁^S)| / sqrt(det(R₁^{S*} R₁^S))` over the
/// `(ξ, ω)` hemisphere.
fn reduced_ukc(analysis: &Analysis, reduced_operator: &RMat, spec: &SamplingSpec) -> Result<UkcCertificate> {
    spec.validate()?;
    if analysis.idx.n1_plus == 0 {
        return Ok(UkcCertificate {
            min_ratio: 1.0,
            argmin_point: None,
            samples: 0,
            failures: 0,
            vacuous: true,
        });
    }
    let op_p1 = to_complex(&(reduced_operator * &analysis.eq.p1));
    let families = [(spectral::HemisphereKind::WithoutEta, true, "grid")];
    let out = crate::spectral::sampling_run(analysis.sys.d, spec, &families, |p| {
        let r1s = analysis.m1.r1s(p.xi, &p.omega)?;
        Ok(kreiss_ratio(&op_p1, &r1s))
    });
    let best = out.argmin();
    Ok(UkcCertificate {
        min_ratio: best.map_or(0.0, |b| out.records[b].ratio),
        argmin_point: best.map(|b| out.records[b].point.clone()),
        samples: out.records.len() + out.failures.len(),
        failures: out.failures.len(),
        vacuous: false,
    })
}

/// Factorized closure system `B̃_o (Y₂ Y₃) (m(0); wˢ) = B̃_o b − B̃_o B_u ū(0)`.
#[derive(Debug, Clone)]
pub struct ClosureSolve {
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    bo_tilde: RMat,
    bo_tilde_bu: RMat,
    n10: usize,
    dim: usize,
}

impl ClosureSolve {
    pub fn new(bc: &ReducedBc, sys: &RelaxationSystem, n10: usize) -> Result<Self> {
        let dim = bc.closure_coefficient.nrows();
        let lu = if dim > 0 {
            let lu = bc.closure_coefficient.clone().lu();
            if !lu.is_invertible() {
                return Err(Error::SingularClosure);
            }
            Some(lu)
        } else {
            None
        };
        Ok(ClosureSolve {
            lu,
            bo_tilde: bc.bo_tilde.clone(),
            bo_tilde_bu: &bc.bo_tilde * sys.b_u(),
            n10,
            dim,
        })
    }

    /// Returns `(m(0), wˢ)` for boundary data `b` and equilibrium trace `ū(0)`.
    pub fn solve(&self, b: &DVector<f64>, ubar0: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.dim == 0 {
            return Ok((DVector::zeros(0), DVector::zeros(0)));
        }
        let rhs = &self.bo_tilde * b - &self.bo_tilde_bu * ubar0;
        let sol = self.lu.as_ref().unwrap().solve(&rhs).ok_or(Error::SingularClosure)?;
        Ok((
            sol.rows(0, self.n10).into_owned(),
            sol.rows(self.n10, self.dim - self.n10).into_owned(),
        ))
    }
}

pub fn solve_closure(
    bc: &ReducedBc,
    analysis: &Analysis,
    b_trace: &[DVector<f64>],
    ubar_trace: &[DVector<f64>],
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    if b_trace.len() != ubar_trace.len() {
        return Err(Error::GridMismatch(
            "boundary and equilibrium traces differ in length".into(),
        ));
    }
    let cs = ClosureSolve::new(bc, &analysis.sys, analysis.eq.p0.ncols())?;
    b_trace.iter().zip(ubar_trace).map(|(b, u)| cs.solve(b, u)).collect()
}

impl ReducedBc {
    /// Naive reduction that keeps the first `n₁₊` rows of `B_u ū(0) = b`
    /// and ignores the layers. Used only as a negative control.
    pub fn naive(analysis: &Analysis) -> Self {
        let n1p = analysis.idx.n1_plus;
        let n_plus = analysis.idx.n_plus;
        let mut bo = RMat::zeros(n1p, n_plus);
        for i in 0..n1p {
            bo[(i, i)] = 1.0;
        }
        let reduced_operator = &bo * analysis.sys.b_u();
        let (no, nr) = normalize_rows(&reduced_operator, &bo);
        let bo_tilde = if n1p == 0 {
            RMat::identity(n_plus, n_plus)
        } else {
            linalg::orthonormal_complement(&bo.transpose()).unwrap().transpose()
        };
        ReducedBc {
            equations: render_equations(&analysis.sys, &no, &nr),
            bo,
            bo_tilde,
            y1: CMat::zeros(0, 0),
            y2: RMat::zeros(0, 0),
            y3: RMat::zeros(0, 0),
            reduced_operator,
            closure_coefficient: RMat::zeros(0, 0),
            ukc: UkcCertificate {
                min_ratio: f64::NAN,
                argmin_point: None,
                samples: 0,
                failures: 0,
                vacuous: true,
            },
            residuals: ReducedBcResiduals {
                bo_y23: f64::NAN,
                bo_bu_p0: f64::NAN,
                parameter_independence: f64::NAN,
                determinant_identity: f64::NAN,
                stack_condition: f64::NAN,
            },
            forced: true,
            normalized_operator: no,
            normalized_rhs: nr,
        }
    }
}
