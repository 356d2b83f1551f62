//! Frequency-domain objects of the half-space problem: kernel frames, the
//! blocks `G_kl = R_kᵀ G R_l` of `G = ηQ − ξI − iΣ ω_j A_j`, the reduced
//! matrix `M(ξ, ω, η)` and the Kreiss-type determinant ratio.

mod sampling;

pub use sampling::{check_gkc, EtaSlice, GkcReport, SampleFailure, SampleRecord, SamplingSpec, TrendRow, DEFAULT_SEED};
pub(crate) use sampling::{run_sampler as sampling_run, HemisphereKind};

use serde::ser::{Serialize, Serializer};
use serde::Serialize as DeriveSerialize;

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, CMat, RMat, C64};
use crate::model::RelaxationSystem;

/// Frame adapted to `ker A₁` with the block structures used for the
/// large-η analysis.
#[derive(Debug, Clone)]
pub struct KernelFrame {
    pub r0: RMat,
    pub r1: RMat,
    pub l0: RMat,
    pub l1: RMat,
    pub a1_hat: RMat,
    pub q_hat: RMat,
    /// `(R₀ᵀ Q R₀)⁻¹`.
    pub r0qr0_inv: RMat,
    pub blocks: Option<ElaborateBlocks>,
}

/// Blocks available for the frame `R₁ = blockdiag(I, R₀₂^⊥)`.
#[derive(Debug, Clone)]
pub struct ElaborateBlocks {
    pub r02: RMat,
    pub r02_perp: RMat,
    pub s_hat: RMat,
    pub a12_hat: RMat,
    pub a22_hat: RMat,
}

impl KernelFrame {
    pub fn blocks(&self) -> &ElaborateBlocks {
        self.blocks.as_ref().expect("elaborate frame")
    }

    /// `−(R₀ᵀQR₀)⁻¹ R₀ᵀ Q R₁`, the map from the `R₁` coordinates of a
    /// layer profile to its `R₀` coordinates.
    pub fn l0_from_l1(&self, sys: &RelaxationSystem) -> RMat {
        -(&self.r0qr0_inv * self.r0.transpose() * &sys.q * &self.r1)
    }

    /// Frame from arbitrary bases `r0` of `ker A₁` and `r1` completing it.
    pub fn general(sys: &RelaxationSystem, r0: RMat, r1: RMat) -> Result<Self> {
        let n = sys.n;
        if r0.nrows() != n || r1.nrows() != n || r0.ncols() + r1.ncols() != n {
            return Err(Error::DimensionMismatch("frame columns must split R^n".into()));
        }
        let full = linalg::hstack(&[&r1, &r0]);
        let inv = linalg::inverse(&full).ok_or(Error::RankDeficient {
            sigma_min: 0.0,
            tol: 0.0,
        })?;
        let m = r1.ncols();
        let l1 = inv.rows(0, m).into_owned();
        let l0 = inv.rows(m, r0.ncols()).into_owned();
        let r0qr0 = r0.transpose() * &sys.q * &r0;
        let r0qr0_inv = linalg::inverse(&r0qr0).ok_or(Error::SkConditionViolated)?;
        let a1_hat = r1.transpose() * sys.a1() * &r1;
        let qr1 = &sys.q * &r1;
        let q_hat = r1.transpose() * &qr1 - (r1.transpose() * &sys.q * &r0) * &r0qr0_inv * (r0.transpose() * &qr1);
        Ok(KernelFrame {
            r0,
            r1,
            l0,
            l1,
            a1_hat,
            q_hat,
            r0qr0_inv,
            blocks: None,
        })
    }
}

/// Builds the structured frame `R₁ = blockdiag(I_{n−r}, R₀₂^⊥)`.
pub fn build_kernel_frame(sys: &RelaxationSystem) -> Result<KernelFrame> {
    let (n, r, nu) = (sys.n, sys.r, sys.nu());
    let r0 = sys.r0();
    let n0 = r0.ncols();
    if n0 > r {
        return Err(Error::SkConditionViolated);
    }
    let r02 = r0.rows(nu, r).into_owned();
    let r02_perp = linalg::orthonormal_complement(&r02).map_err(|_| Error::SkConditionViolated)?;
    let r1 = linalg::blockdiag(&RMat::identity(nu, nu), &r02_perp);
    let mut frame = KernelFrame::general(sys, r0, r1)?;
    let s = sys.s();
    let sr = &s * &r02;
    let schur = &s - &sr * &frame.r0qr0_inv * sr.transpose();
    let s_hat = linalg::sym(&(r02_perp.transpose() * schur * &r02_perp));
    let a12_hat = sys.a12() * &r02_perp;
    let a22_hat = linalg::sym(&(r02_perp.transpose() * sys.a22() * &r02_perp));
    frame.q_hat = linalg::blockdiag(&RMat::zeros(nu, nu), &s_hat);
    frame.a1_hat = linalg::sym(&frame.a1_hat);
    let (eigs, _) = linalg::sorted_sym_eigen(&frame.a1_hat);
    let tau = sys.tau_eig();
    if eigs.iter().any(|e| e.abs() <= tau) {
        return Err(Error::RankDeficient {
            sigma_min: eigs.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min),
            tol: tau,
        });
    }
    debug_assert_eq!(frame.r1.ncols(), n - n0);
    frame.blocks = Some(ElaborateBlocks {
        r02,
        r02_perp,
        s_hat,
        a12_hat,
        a22_hat,
    });
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    Finite(f64),
    Infinite,
}

impl Serialize for Eta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Eta::Finite(v) => s.serialize_f64(*v),
            Eta::Infinite => s.serialize_str("inf"),
        }
    }
}

/// A point `(ξ, ω, η)` of the Laplace–Fourier parameter domain.
#[derive(Debug, Clone, PartialEq, DeriveSerialize)]
pub struct FrequencyPoint {
    #[serde(serialize_with = "ser_complex")]
    pub xi: C64,
    pub omega: Vec<f64>,
    pub eta: Eta,
}

fn ser_complex<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

impl FrequencyPoint {
    pub fn new(xi: C64, omega: Vec<f64>, eta: f64) -> Self {
        FrequencyPoint {
            xi,
            omega,
            eta: Eta::Finite(eta),
        }
    }

    pub fn at_infinity(xi: C64, omega: Vec<f64>) -> Self {
        FrequencyPoint {
            xi,
            omega,
            eta: Eta::Infinite,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        FrequencyPoint {
            xi: self.xi * s,
            omega: self.omega.iter().map(|w| w * s).collect(),
            eta: match self.eta {
                Eta::Finite(e) => Eta::Finite(e * s),
                Eta::Infinite => Eta::Infinite,
            },
        }
    }

    pub fn eta_finite(&self) -> Option<f64> {
        match self.eta {
            Eta::Finite(e) => Some(e),
            Eta::Infinite => None,
        }
    }
}

/// `Σ_{j≥2} ω_j A_j`.
pub(crate) fn tangential(sys: &RelaxationSystem, omega: &[f64]) -> Result<RMat> {
    if omega.len() + 1 != sys.d {
        return Err(Error::DimensionMismatch(format!(
            "omega has {} entries, expected d-1 = {}",
            omega.len(),
            sys.d - 1
        )));
    }
    let mut m = RMat::zeros(sys.n, sys.n);
    for (j, w) in omega.iter().enumerate() {
        m += &sys.a[j + 1] * *w;
    }
    Ok(m)
}

/// `G(ξ, ω, η) = ηQ − ξI − iΣ ω_j A_j`.
pub fn dense_g(sys: &RelaxationSystem, p: &FrequencyPoint) -> Result<CMat> {
    let eta = p
        .eta_finite()
        .ok_or_else(|| Error::Config("G is only defined for finite eta".into()))?;
    let tang = tangential(sys, &p.omega)?;
    let n = sys.n;
    Ok(CMat::from_fn(n, n, |i, j| {
        let mut z = C64::new(eta * sys.q[(i, j)], -tang[(i, j)]);
        if i == j {
            z -= p.xi;
        }
        z
    }))
}

#[derive(Debug, Clone)]
pub struct GBlocks {
    pub g00: CMat,
    pub g01: CMat,
    pub g10: CMat,
    pub g11: CMat,
}

pub fn assemble_g(sys: &RelaxationSystem, frame: &KernelFrame, p: &FrequencyPoint) -> Result<GBlocks> {
    let g = dense_g(sys, p)?;
    let r0 = to_complex(&frame.r0);
    let r1 = to_complex(&frame.r1);
    let gr0 = &g * &r0;
    let gr1 = &g * &r1;
    Ok(GBlocks {
        g00: r0.transpose() * &gr0,
        g01: r0.transpose() * &gr1,
        g10: r1.transpose() * &gr0,
        g11: r1.transpose() * &gr1,
    })
}

/// `M = Â₁⁻¹ (G₁₁ − G₁₀ G₀₀⁻¹ G₀₁)`, an `(n−n₀)`-square matrix.
pub fn build_m(sys: &RelaxationSystem, frame: &KernelFrame, p: &FrequencyPoint) -> Result<CMat> {
    let g = assemble_g(sys, frame, p)?;
    let schur = if g.g00.nrows() == 0 {
        g.g11
    } else {
        let x = linalg::solve_c(&g.g00, &g.g01).ok_or_else(|| Error::NonFinite("G00 is singular".into()))?;
        &g.g11 - &g.g10 * x
    };
    linalg::solve_c(&to_complex(&frame.a1_hat), &schur).ok_or_else(|| Error::NonFinite("A1_hat is singular".into()))
}

/// Stable/unstable eigenvalue counts of `m`, checked against `expected`.
pub fn count_stable_eigenvalues(m: &CMat, expected: usize) -> Result<(usize, usize)> {
    let split = linalg::split_invariant_subspaces(m)?;
    let counts = (split.k, m.nrows() - split.k);
    if split.k != expected {
        return Err(Error::SpectralCountMismatch {
            what: "M".into(),
            expected,
            found: split.k,
        });
    }
    Ok(counts)
}

/// `|det(B R₁ R)| / sqrt(det(Rᴴ R))` for any full-rank basis `R`.
pub fn kreiss_ratio(br1: &CMat, basis: &CMat) -> f64 {
    if basis.ncols() == 0 {
        return 1.0;
    }
    let num = linalg::det_c(&(br1 * basis)).norm();
    let gram = linalg::det_c(&(basis.adjoint() * basis)).re;
    num / gram.max(0.0).sqrt()
}

/// Kreiss ratio at a finite point using the orthonormal Schur basis.
pub fn gkc_ratio_finite(sys: &RelaxationSystem, frame: &KernelFrame, n_plus: usize, p: &FrequencyPoint) -> Result<f64> {
    let m = build_m(sys, frame, p)?;
    let split = linalg::split_invariant_subspaces(&m)?;
    if split.k != n_plus {
        return Err(Error::SpectralCountMismatch {
            what: "M".into(),
            expected: n_plus,
            found: split.k,
        });
    }
    let br1 = to_complex(&(&sys.b * &frame.r1));
    Ok(kreiss_ratio(&br1, &split.basis_s))
}

/// Residuals of the frame-change identity between two frames.
#[derive(Debug, Clone, DeriveSerialize)]
pub struct FrameResiduals {
    /// `‖M̃ − C₁⁻¹ M C₁‖ / ‖M‖`.
    pub similarity: f64,
    /// Relative gap between `|det(B R̃₁ C₁⁻¹ R_M^S)|` and `|det(B R₁ R_M^S)|`.
    pub transported_det: f64,
    /// Relative gap, in the second frame, between the Kreiss ratio on its
    /// own Schur basis and on the transported basis `C₁⁻¹R_M^S`. The raw
    /// ratios of the two frames agree only when `C₁` is orthogonal.
    pub ratio: f64,
    /// Largest principal angle between `C₁⁻¹ span(R_M^S)` and the stable
    /// subspace of `M̃` computed from scratch.
    pub subspace_angle: f64,
}

pub fn frame_independence_check(
    sys: &RelaxationSystem,
    a: &KernelFrame,
    b: &KernelFrame,
    n_plus: usize,
    p: &FrequencyPoint,
) -> Result<FrameResiduals> {
    // Express frame b over frame a: R̃₀ = R₀ D₀, R̃₁ = R₁ C₁ + R₀ C₀.
    let c1 = &a.l1 * &b.r1;
    let c0 = &a.l0 * &b.r1;
    let d0 = &a.l0 * &b.r0;
    let resid0 = (&b.r0 - &a.r0 * &d0).norm();
    let resid1 = (&b.r1 - &a.r1 * &c1 - &a.r0 * &c0).norm();
    let scale = b.r0.norm() + b.r1.norm();
    if resid0.max(resid1) > 1e-10 * scale.max(1.0) {
        return Err(Error::FrameMismatch(resid0.max(resid1)));
    }
    let m = build_m(sys, a, p)?;
    let mt = build_m(sys, b, p)?;
    let c1c = to_complex(&c1);
    let c1inv =
        linalg::solve_c(&c1c, &CMat::identity(c1.nrows(), c1.nrows())).ok_or(Error::FrameMismatch(f64::INFINITY))?;
    let similarity = (&mt - &c1inv * &m * &c1c).norm() / m.norm().max(f64::MIN_POSITIVE);
    let split = linalg::split_invariant_subspaces(&m)?;
    let split_t = linalg::split_invariant_subspaces(&mt)?;
    if split.k != n_plus || split_t.k != n_plus {
        return Err(Error::SpectralCountMismatch {
            what: "M".into(),
            expected: n_plus,
            found: split.k.min(split_t.k),
        });
    }
    let br1 = to_complex(&(&sys.b * &a.r1));
    let br1t = to_complex(&(&sys.b * &b.r1));
    let transported = &c1inv * &split.basis_s;
    let det_a = linalg::det_c(&(&br1 * &split.basis_s)).norm();
    let det_b = linalg::det_c(&(&br1t * &transported)).norm();
    let transported_det = (det_a - det_b).abs() / det_a.max(f64::MIN_POSITIVE);
    let rb = kreiss_ratio(&br1t, &split_t.basis_s);
    let rb_transport = kreiss_ratio(&br1t, &transported);
    let ratio = (rb - rb_transport).abs() / rb.max(f64::MIN_POSITIVE);
    let subspace_angle = linalg::max_principal_angle(&transported, &split_t.basis_s);
    Ok(FrameResiduals {
        similarity,
        transported_det,
        ratio,
        subspace_angle,
    })
}
