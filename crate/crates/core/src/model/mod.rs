//! Linear relaxation systems `U_t + Σ A_j U_{x_j} = Q U / ε` on the half
//! space `x₁ > 0` with boundary condition `B U(0) = b`.
//!
//! The internal representation is canonical: every `A_j` symmetric and
//! `Q = diag(0, S)` with `S` symmetric negative definite. Raw systems with
//! a symmetrizer `A₀` are checked against the structural stability
//! conditions and mapped to canonical form by a recorded change of
//! variables.

mod file;

pub use file::{load_system, parse_system, Labels, SystemFile};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, blockdiag, norm2, sorted_sym_eigen, sym, RMat};

const TAU_SYM_REL: f64 = 1e-10;

/// Canonical linear relaxation system.
#[derive(Debug, Clone)]
pub struct RelaxationSystem {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    /// `A₁ … A_d`; `A₁` is the boundary-normal coefficient.
    pub a: Vec<RMat>,
    pub q: RMat,
    pub b: RMat,
    pub labels: Labels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SystemIndices {
    pub n0: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n10: usize,
    pub n1_plus: usize,
    pub n1_minus: usize,
}

impl RelaxationSystem {
    /// Builds a canonical system from `A_j`, the relaxation block `S` and `B`.
    pub fn new(a: Vec<RMat>, s: RMat, b: RMat) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::DimensionMismatch(
                "at least one coefficient matrix A_1 is required".into(),
            ));
        }
        let n = a[0].nrows();
        let r = s.nrows();
        for (j, aj) in a.iter().enumerate() {
            if aj.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "A_{} is {}x{}, expected {n}x{n}",
                    j + 1,
                    aj.nrows(),
                    aj.ncols()
                )));
            }
        }
        if s.ncols() != r || r == 0 || r >= n {
            return Err(Error::DimensionMismatch(format!(
                "S is {}x{}; need square with 1 <= r < n = {n}",
                s.nrows(),
                s.ncols()
            )));
        }
        if b.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} columns, expected {n}",
                b.ncols()
            )));
        }
        let q = blockdiag(&RMat::zeros(n - r, n - r), &s);
        let labels = Labels::default_for(n, r, b.nrows());
        Ok(RelaxationSystem {
            d: a.len(),
            n,
            r,
            a,
            q,
            b,
            labels,
        })
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = labels;
        self
    }

    /// Number of conserved (equilibrium) components, `n − r`.
    pub fn nu(&self) -> usize {
        self.n - self.r
    }

    pub fn s(&self) -> RMat {
        self.q.view((self.nu(), self.nu()), (self.r, self.r)).into_owned()
    }

    pub fn a1(&self) -> &RMat {
        &self.a[0]
    }

    pub fn a11(&self) -> RMat {
        self.a_j11(0)
    }

    /// Top-left `(n−r)` block of `A_{j+1}` (zero-based `j`).
    pub fn a_j11(&self, j: usize) -> RMat {
        self.a[j].view((0, 0), (self.nu(), self.nu())).into_owned()
    }

    pub fn a12(&self) -> RMat {
        self.a[0].view((0, self.nu()), (self.nu(), self.r)).into_owned()
    }

    pub fn a22(&self) -> RMat {
        self.a[0].view((self.nu(), self.nu()), (self.r, self.r)).into_owned()
    }

    pub fn b_u(&self) -> RMat {
        self.b.columns(0, self.nu()).into_owned()
    }

    pub fn b_v(&self) -> RMat {
        self.b.columns(self.nu(), self.r).into_owned()
    }

    pub fn tau_sym(&self) -> f64 {
        TAU_SYM_REL * self.a.iter().map(norm2).fold(0.0, f64::max)
    }

    pub fn tau_eig(&self) -> f64 {
        linalg::TAU_EIG_REL * norm2(self.a1())
    }

    /// Orthonormal basis of `ker A₁` at the `τ_eig` threshold.
    pub fn r0(&self) -> RMat {
        linalg::orthonormal_kernel_tol(self.a1(), self.tau_eig())
    }

    /// Spectral radius of `A₁`, the fastest boundary-normal speed.
    pub fn rho_a1(&self) -> f64 {
        norm2(self.a1())
    }

    /// Full validation of the standing assumptions on a canonical system.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let tau_sym = self.tau_sym();
        for (j, aj) in self.a.iter().enumerate() {
            let asym = (aj - aj.transpose()).abs().max();
            rep.push(Check::le(format!("A_{} symmetric", j + 1), asym, tau_sym));
        }
        let s = self.s();
        let top = self.q.view((0, 0), (self.nu(), self.n)).abs().max();
        let left = self.q.view((0, 0), (self.n, self.nu())).abs().max();
        rep.push(Check::le("Q = diag(0, S)", top.max(left), 0.0));
        rep.push(Check::le(
            "S symmetric",
            (&s - s.transpose()).abs().max(),
            TAU_SYM_REL * norm2(&s),
        ));
        let (s_eigs, _) = sorted_sym_eigen(&s);
        let s_max = s_eigs.last().copied().unwrap_or(-1.0);
        rep.push(Check::lt("S negative definite (max eigenvalue)", s_max, 0.0));
        let ss = structural_stability_canonical(self);
        rep.checks.extend(ss.checks);
        rep.push(Check::bool(
            "Shizuta-Kawashima-like condition",
            check_sk_condition(self),
        ));
        match compute_indices(self) {
            Ok(idx) => {
                rep.push(Check::bool("spectrum classification unambiguous", true));
                let rank_b = numerical_rank(&self.b);
                rep.push(Check::eq_count(
                    "rank(B) = n_plus",
                    rank_b,
                    idx.n_plus,
                    if self.b.nrows() != idx.n_plus {
                        format!("B has {} rows but n_plus = {}", self.b.nrows(), idx.n_plus)
                    } else if rank_b < idx.n_plus {
                        "rank(B) < n_plus".to_string()
                    } else {
                        String::new()
                    },
                    self.b.nrows() == idx.n_plus,
                ));
                rep.indices = Some(idx);
            }
            Err(e) => {
                rep.push(Check::bool("spectrum classification unambiguous", false).detail(e.to_string()));
            }
        }
        let br0 = &self.b * self.r0();
        let br0_norm = if br0.is_empty() { 0.0 } else { br0.abs().max() };
        rep.push(Check::le(
            "B R0 = 0",
            br0_norm,
            TAU_SYM_REL * norm2(&self.b).max(self.a.iter().map(norm2).fold(0.0, f64::max)),
        ));
        if self.d >= 2 {
            let (ok, detail) = constant_multiplicity(self);
            rep.informational
                .push(Check::bool("constant multiplicity of sum omega_j A_j (sampled)", ok).detail(detail));
        }
        rep
    }
}

fn numerical_rank(m: &RMat) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > linalg::TAU_RANK_REL * smax).count()
}

/// One named pass/fail item of a validation report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            pass: value <= threshold,
            value,
            threshold,
            detail: String::new(),
        }
    }

    fn lt(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            pass: value < threshold,
            value,
            threshold,
            detail: String::new(),
        }
    }

    fn bool(name: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.into(),
            pass,
            value: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail: String::new(),
        }
    }

    fn eq_count(name: &str, found: usize, expected: usize, detail: String, shape_ok: bool) -> Self {
        Check {
            name: name.into(),
            pass: found == expected && shape_ok,
            value: found as f64,
            threshold: expected as f64,
            detail,
        }
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Report-only items that never fail validation.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub informational: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indices: Option<SystemIndices>,
}

impl ValidationReport {
    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                if c.detail.is_empty() {
                    c.name.clone()
                } else {
                    format!("{}: {}", c.name, c.detail)
                }
            })
            .collect()
    }
}

/// A system before reduction to canonical form: symmetrizer `A₀`, raw
/// coefficients, relaxation matrix `Q` and the kernel-splitting matrix `P`.
#[derive(Debug, Clone)]
pub struct RawSystem {
    pub a0: RMat,
    pub a: Vec<RMat>,
    pub q: RMat,
    pub p: Option<RMat>,
    pub b: RMat,
    pub labels: Option<Labels>,
}

/// Change of variables `Ũ = T U` carrying a raw system to canonical form.
#[derive(Debug, Clone)]
pub struct Transform {
    pub t: RMat,
    pub t_inv: RMat,
}

impl Transform {
    pub fn identity(n: usize) -> Self {
        Transform {
            t: RMat::identity(n, n),
            t_inv: RMat::identity(n, n),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.t == RMat::identity(self.t.nrows(), self.t.ncols())
    }
}

fn rank_of_q(q: &RMat) -> usize {
    numerical_rank(q)
}

/// Checks items (i)–(iii) plus the Onsager relation for a raw system.
pub fn validate_structural_stability(raw: &RawSystem) -> Result<ValidationReport> {
    let n = raw.a0.nrows();
    if raw.a0.ncols() != n || raw.q.shape() != (n, n) || raw.a.is_empty() {
        return Err(Error::DimensionMismatch(
            "A0 and Q must be square n x n; at least one A_j".into(),
        ));
    }
    for (j, aj) in raw.a.iter().enumerate() {
        if aj.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("A_{} is not {n}x{n}", j + 1)));
        }
    }
    if raw.b.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "B has {} columns, expected {n}",
            raw.b.ncols()
        )));
    }
    let p = raw.p.clone().unwrap_or_else(|| RMat::identity(n, n));
    if p.shape() != (n, n) {
        return Err(Error::DimensionMismatch("P must be n x n".into()));
    }
    let asym = (&raw.a0 - raw.a0.transpose()).abs().max();
    if asym > TAU_SYM_REL * norm2(&raw.a0).max(f64::MIN_POSITIVE) {
        return Err(Error::NonSymmetricSymmetrizer(asym));
    }
    Ok(structural_stability_items(&raw.a0, &raw.a, &raw.q, &p))
}

fn structural_stability_items(a0: &RMat, a: &[RMat], q: &RMat, p: &RMat) -> ValidationReport {
    let n = a0.nrows();
    let mut rep = ValidationReport::default();
    let (a0_eigs, _) = sorted_sym_eigen(a0);
    rep.push(Check::lt(
        "A0 positive definite (negated min eigenvalue)",
        -a0_eigs[0],
        0.0,
    ));

    let r = rank_of_q(q);
    let nu = n - r;
    // (i) P Q P^{-1} = diag(0, S) with S invertible.
    let item_i = match linalg::inverse(p) {
        Some(pinv) => {
            let pq = p * q * pinv;
            let off = pq
                .view((0, 0), (nu, n))
                .abs()
                .max()
                .max(pq.view((0, 0), (n, nu)).abs().max());
            let sblk = pq.view((nu, nu), (r, r)).into_owned();
            let invertible = numerical_rank(&sblk) == r;
            let mut c = Check::le(
                "(i) P Q P^-1 = diag(0, S), S invertible",
                off,
                TAU_SYM_REL * norm2(q).max(f64::MIN_POSITIVE),
            );
            c.pass &= invertible && r > 0;
            if !invertible || r == 0 {
                c.detail = "S block is singular or empty".into();
            }
            c
        }
        None => Check::bool("(i) P Q P^-1 = diag(0, S), S invertible", false).detail("P is singular"),
    };
    rep.push(item_i);
    // (ii) A0 A_j = A_j^T A0.
    let scale_a = a.iter().map(norm2).fold(0.0, f64::max) * norm2(a0);
    let res_ii = a
        .iter()
        .map(|aj| (a0 * aj - aj.transpose() * a0).abs().max())
        .fold(0.0, f64::max);
    rep.push(Check::le("(ii) A0 A_j = A_j^T A0", res_ii, TAU_SYM_REL * scale_a));
    // (iii) A0 Q + Q^T A0 <= -P^T diag(0, I_r) P.
    let mut d = RMat::zeros(n, n);
    for i in nu..n {
        d[(i, i)] = 1.0;
    }
    let sum = a0 * q + q.transpose() * a0 + p.transpose() * d * p;
    let (eigs, _) = sorted_sym_eigen(&sym(&sum));
    let lam_max = *eigs.last().unwrap();
    let scale = norm2(&(a0 * q)) + norm2(&(p.transpose() * p));
    rep.push(Check::le(
        "(iii) lambda_max(A0 Q + Q^T A0 + P^T diag(0,I) P)",
        lam_max,
        TAU_SYM_REL * scale,
    ));
    let onsager = (a0 * q - q.transpose() * a0).abs().max();
    rep.push(Check::le(
        "Onsager relation A0 Q = Q^T A0",
        onsager,
        TAU_SYM_REL * norm2(&(a0 * q)).max(f64::MIN_POSITIVE),
    ));
    rep
}

/// Structural stability of a canonical system: `A₀ = I`, `P = diag(I, c I)`
/// with `c² = min |eig(S)|`, which satisfies item (i) for every `c > 0`.
fn structural_stability_canonical(sys: &RelaxationSystem) -> ValidationReport {
    let (s_eigs, _) = sorted_sym_eigen(&sys.s());
    let c2 = s_eigs.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    let mut p = RMat::identity(sys.n, sys.n);
    if c2.is_finite() && c2 > 0.0 {
        for i in sys.nu()..sys.n {
            p[(i, i)] = c2.sqrt();
        }
    }
    structural_stability_items(&RMat::identity(sys.n, sys.n), &sys.a, &sys.q, &p)
}

/// Orthogonal Procrustes alignment of an orthonormal basis `k` to the
/// coordinate block `e` (same shape): returns `k·Z` closest to `e`.
fn procrustes_align(k: &RMat, e: &RMat) -> RMat {
    if k.ncols() == 0 {
        return k.clone();
    }
    let svd = (k.transpose() * e).svd(true, true);
    let z = svd.u.unwrap() * svd.v_t.unwrap();
    k * z
}

fn is_canonical(raw: &RawSystem) -> bool {
    let n = raw.a0.nrows();
    if raw.a0 != RMat::identity(n, n) {
        return false;
    }
    let r = rank_of_q(&raw.q);
    let nu = n - r;
    let off = raw
        .q
        .view((0, 0), (nu, n))
        .abs()
        .max()
        .max(raw.q.view((0, 0), (n, nu)).abs().max());
    off == 0.0 && raw.a.iter().all(|aj| aj == &aj.transpose()) && raw.q == raw.q.transpose()
}

/// Maps a raw system to canonical form.
///
/// Uses `W = A₀^{1/2}` followed by an orthogonal split of `ker Q` and its
/// complement. The bases are aligned to the coordinate axes, so an already
/// canonical system comes back unchanged with the identity transform.
pub fn canonicalize(raw: &RawSystem) -> Result<(RelaxationSystem, Transform)> {
    let rep = validate_structural_stability(raw)?;
    if !rep.pass() {
        return Err(Error::ValidationFailed(rep.failures()));
    }
    let n = raw.a0.nrows();
    let r = rank_of_q(&raw.q);
    let nu = n - r;
    let labels = raw
        .labels
        .clone()
        .unwrap_or_else(|| Labels::default_for(n, r, raw.b.nrows()));
    if is_canonical(raw) {
        let s = raw.q.view((nu, nu), (r, r)).into_owned();
        let sys = RelaxationSystem::new(raw.a.clone(), s, raw.b.clone())?.with_labels(labels);
        return Ok((sys, Transform::identity(n)));
    }
    let (vals, vecs) = sorted_sym_eigen(&raw.a0);
    let sqrt = RMat::from_diagonal(&nalgebra::DVector::from_iterator(n, vals.iter().map(|v| v.sqrt())));
    let isqrt = RMat::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        vals.iter().map(|v| 1.0 / v.sqrt()),
    ));
    let w = &vecs * sqrt * vecs.transpose();
    let w_inv = &vecs * isqrt * vecs.transpose();
    let qp = sym(&(&w * &raw.q * &w_inv));
    let (qvals, qvecs) = sorted_sym_eigen(&qp);
    // Q' is negative semidefinite: the r most negative eigenvalues span the range.
    let range = qvecs.columns(0, r).into_owned();
    let kernel = qvecs.columns(r, nu).into_owned();
    let _ = qvals;
    let mut e_k = RMat::zeros(n, nu);
    for i in 0..nu {
        e_k[(i, i)] = 1.0;
    }
    let mut e_r = RMat::zeros(n, r);
    for i in 0..r {
        e_r[(nu + i, i)] = 1.0;
    }
    let kernel = procrustes_align(&kernel, &e_k);
    let range = procrustes_align(&range, &e_r);
    let o = linalg::hstack(&[&kernel, &range]).transpose();
    let t = &o * &w;
    let t_inv = &w_inv * o.transpose();
    let a: Vec<RMat> = raw.a.iter().map(|aj| sym(&(&t * aj * &t_inv))).collect();
    let qc = sym(&(&t * &raw.q * &t_inv));
    let s = qc.view((nu, nu), (r, r)).into_owned();
    let b = &raw.b * &t_inv;
    let sys = RelaxationSystem::new(a, s, b)?.with_labels(labels);
    Ok((sys, Transform { t, t_inv }))
}

/// `ker A₁ ∩ ker Q = {0}`, tested as invertibility of `R₀ᵀ Q R₀`.
pub fn check_sk_condition(sys: &RelaxationSystem) -> bool {
    let r0 = sys.r0();
    if r0.ncols() == 0 {
        return true;
    }
    let m = r0.transpose() * &sys.q * &r0;
    let smin = m.clone().svd(false, false).singular_values.min();
    smin > linalg::TAU_RANK_REL * norm2(&sys.q)
}

fn classify(eigs: &[f64], tau: f64) -> Result<(usize, usize, usize)> {
    let (mut neg, mut zero, mut pos) = (0, 0, 0);
    for &e in eigs {
        let a = e.abs();
        if a > tau && a < 10.0 * tau {
            return Err(Error::AmbiguousSpectrum { eigenvalue: e, tau });
        }
        if a <= tau {
            zero += 1;
        } else if e > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    Ok((neg, zero, pos))
}

/// Eigenvalue counts of `A₁` and of its equilibrium block `A₁₁`.
pub fn compute_indices(sys: &RelaxationSystem) -> Result<SystemIndices> {
    let tau = sys.tau_eig();
    let (e1, _) = sorted_sym_eigen(sys.a1());
    let (n_minus, n0, n_plus) = classify(&e1, tau)?;
    let (e11, _) = sorted_sym_eigen(&sys.a11());
    let (n1_minus, n10, n1_plus) = classify(&e11, tau)?;
    Ok(SystemIndices {
        n0,
        n_plus,
        n_minus,
        n10,
        n1_plus,
        n1_minus,
    })
}

/// Report-only probe of constant eigenvalue multiplicity of `Σ ω_j A_j`
/// over a fixed set of unit directions.
fn constant_multiplicity(sys: &RelaxationSystem) -> (bool, String) {
    let d = sys.d;
    let mut pattern: Option<Vec<usize>> = None;
    let samples = 64;
    for s in 0..samples {
        // Deterministic directions from a Kronecker sequence.
        let mut w: Vec<f64> = (0..d)
            .map(|j| {
                let alpha = ((j + 2) as f64).sqrt().fract();
                ((s as f64 + 0.5) * alpha).fract() * 2.0 - 1.0
            })
            .collect();
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm < 1e-8 {
            continue;
        }
        w.iter_mut().for_each(|x| *x /= nrm);
        let mut m = RMat::zeros(sys.n, sys.n);
        for (j, aj) in sys.a.iter().enumerate() {
            m += aj * w[j];
        }
        let (e, _) = sorted_sym_eigen(&m);
        let tol = 1e-7 * norm2(&m).max(1e-300);
        let mut mult = vec![];
        let mut run = 1;
        for i in 1..e.len() {
            if (e[i] - e[i - 1]).abs() <= tol {
                run += 1;
            } else {
                mult.push(run);
                run = 1;
            }
        }
        mult.push(run);
        match &pattern {
            None => pattern = Some(mult),
            Some(p) if *p != mult => {
                return (false, format!("multiplicity pattern {:?} differs from {:?}", mult, p));
            }
            _ => {}
        }
    }
    (
        true,
        format!("pattern {:?} over {samples} directions", pattern.unwrap_or_default()),
    )
}
