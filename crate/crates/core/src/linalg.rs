//! Dense linear-algebra kernels used by the spectral analysis.
//!
//! Everything here works on small dense matrices (a few dozen rows at most)
//! and is pure. The heavy lifting (Schur, SVD, LU, symmetric eigen, Padé
//! exponential) comes from nalgebra; this module adds the pieces nalgebra
//! lacks: eigenvalue reordering of a complex Schur form, full orthonormal
//! complements, left null spaces with rank checks, and principal angles.

use nalgebra::{ComplexField, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<C64>;

/// Relative zero threshold for eigenvalue classification.
pub const TAU_EIG_REL: f64 = 1e-9;
/// Relative threshold for numerical rank decisions.
pub const TAU_RANK_REL: f64 = 1e-9;
/// Relative distance to the imaginary axis treated as "on the axis".
pub const TAU_AXIS_REL: f64 = 1e-8;

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

/// Spectral norm (largest singular value). Zero for empty matrices.
pub fn norm2(a: &RMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn norm2_c(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn det_c(a: &CMat) -> C64 {
    if a.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    a.clone().lu().determinant()
}

pub fn det(a: &RMat) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    a.clone().lu().determinant()
}

/// Solves `a x = b`, failing on singular `a`.
pub fn solve(a: &RMat, b: &RMat) -> Option<RMat> {
    if a.nrows() == 0 {
        return Some(RMat::zeros(0, b.ncols()));
    }
    a.clone().lu().solve(b)
}

pub fn solve_c(a: &CMat, b: &CMat) -> Option<CMat> {
    if a.nrows() == 0 {
        return Some(CMat::zeros(0, b.ncols()));
    }
    a.clone().lu().solve(b)
}

pub fn inverse(a: &RMat) -> Option<RMat> {
    solve(a, &RMat::identity(a.nrows(), a.nrows()))
}

pub fn hstack<T: ComplexField>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.iter().map(|b| b.nrows()).max().unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        if b.ncols() > 0 {
            assert_eq!(b.nrows(), rows, "hstack row mismatch");
            out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        }
        c += b.ncols();
    }
    out
}

pub fn vstack<T: ComplexField>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        if b.nrows() > 0 {
            assert_eq!(b.ncols(), cols, "vstack column mismatch");
            out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        }
        r += b.nrows();
    }
    out
}

pub fn blockdiag(a: &RMat, b: &RMat) -> RMat {
    let mut out = RMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn sym(a: &RMat) -> RMat {
    (a + a.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix sorted ascending.
///
/// Each eigenvector is sign-normalized so its largest-magnitude entry is
/// positive, which makes downstream frames reproducible.
pub fn sorted_sym_eigen(a: &RMat) -> (Vec<f64>, RMat) {
    let n = a.nrows();
    if n == 0 {
        return (vec![], RMat::zeros(0, 0));
    }
    let eig = sym(a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let mut vecs = RMat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (c, &i) in idx.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        let mut best = 0;
        for k in 0..n {
            if col[k].abs() > col[best].abs() + 1e-14 {
                best = k;
            }
        }
        if col[best] < 0.0 {
            col = -col;
        }
        vecs.set_column(c, &col);
        vals.push(eig.eigenvalues[i]);
    }
    (vals, vecs)
}

/// Orthonormal basis of the kernel of a symmetric matrix, using the
/// default threshold `1e-9·‖a‖₂`.
pub fn orthonormal_kernel(a: &RMat) -> RMat {
    let (vals, _) = sorted_sym_eigen(a);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    orthonormal_kernel_tol(a, TAU_EIG_REL * scale)
}

/// Kernel basis from eigenvectors whose eigenvalues lie in `[-tau, tau]`.
pub fn orthonormal_kernel_tol(a: &RMat, tau: f64) -> RMat {
    let (vals, vecs) = sorted_sym_eigen(a);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() <= tau).collect();
    let mut out = RMat::zeros(a.nrows(), cols.len());
    for (c, &i) in cols.iter().enumerate() {
        out.set_column(c, &vecs.column(i));
    }
    out
}

/// Full SVD of an `m×k` matrix, padded so that `u` is square `m×m`.
/// Singular values come back sorted descending, zero-padded to length m.
fn full_left_svd<T>(y: &DMatrix<T>) -> (DMatrix<T>, Vec<f64>)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let m = y.nrows();
    let k = y.ncols();
    let width = m.max(k);
    let mut padded = DMatrix::<T>::zeros(m, width);
    padded.view_mut((0, 0), (m, k)).copy_from(y);
    if m == 0 {
        return (DMatrix::<T>::zeros(0, 0), vec![]);
    }
    let svd = padded.svd(true, false);
    let u = svd.u.expect("requested u");
    let sv = svd.singular_values;
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    let mut u_sorted = DMatrix::<T>::zeros(m, m);
    let mut s_sorted = Vec::with_capacity(m);
    for (c, &i) in idx.iter().take(m).enumerate() {
        u_sorted.set_column(c, &u.column(i));
        s_sorted.push(sv[i]);
    }
    (u_sorted, s_sorted)
}

fn numerical_rank(sv: &[f64]) -> usize {
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > TAU_RANK_REL * smax).count()
}

/// Orthonormal basis of the orthogonal complement of `range(v)`.
pub fn orthonormal_complement(v: &RMat) -> Result<RMat> {
    let n = v.nrows();
    let k = v.ncols();
    if k == 0 {
        return Ok(RMat::identity(n, n));
    }
    if k > n {
        return Err(Error::RankDeficient {
            sigma_min: 0.0,
            tol: 0.0,
        });
    }
    let (u, sv) = full_left_svd(v);
    let smax = sv[0];
    let smin = sv[k - 1];
    if smax == 0.0 || smin <= TAU_RANK_REL * smax {
        return Err(Error::RankDeficient {
            sigma_min: smin,
            tol: TAU_RANK_REL * smax,
        });
    }
    Ok(u.columns(k, n - k).into_owned())
}

/// Orthonormal rows spanning the left null space of `y` (`N·y = 0`).
///
/// `y` must have full column rank and exactly `target_dim` = m − k
/// independent left annihilators.
pub fn left_nullspace<T>(y: &DMatrix<T>, target_dim: usize) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let m = y.nrows();
    let k = y.ncols();
    if k == 0 {
        if target_dim != m {
            return Err(Error::RankMismatch {
                expected: m - target_dim.min(m),
                found: 0,
            });
        }
        return Ok(DMatrix::<T>::identity(m, m));
    }
    let (u, sv) = full_left_svd(y);
    let rank = numerical_rank(&sv);
    if rank != k || m < k || m - k != target_dim {
        return Err(Error::RankMismatch {
            expected: m.saturating_sub(target_dim),
            found: rank,
        });
    }
    Ok(u.columns(k, m - k).adjoint())
}

/// Orthonormal basis for the column span of a full-rank matrix.
pub fn orthonormalize_c(a: &CMat) -> CMat {
    if a.ncols() == 0 {
        return CMat::zeros(a.nrows(), 0);
    }
    a.clone().qr().q()
}

pub fn orthonormalize(a: &RMat) -> RMat {
    if a.ncols() == 0 {
        return RMat::zeros(a.nrows(), 0);
    }
    a.clone().qr().q()
}

/// Largest principal angle between two equal-dimensional subspaces.
///
/// Computed through the sine, `‖(I − P_A) Q_B‖₂`, which stays accurate for
/// tiny angles where `acos` of the cosine would lose half the digits.
pub fn max_principal_angle(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let qa = orthonormalize_c(a);
    let qb = orthonormalize_c(b);
    let resid = &qb - &qa * (qa.adjoint() * &qb);
    norm2_c(&resid).min(1.0).asin()
}

/// Unitary Schur frame of a square matrix with the stable eigenvalues
/// ordered first.
///
/// `m · [basis_s | basis_u] = [basis_s | basis_u] · [[block_s, coupling],
/// [0, block_u]]`. The basis is unitary, so the unstable block lives in the
/// orthogonal complement of the stable subspace rather than in the unstable
/// invariant subspace itself; `coupling` carries the difference.
#[derive(Debug, Clone)]
pub struct StableSubspace {
    pub basis_s: CMat,
    pub basis_u: CMat,
    pub block_s: CMat,
    pub block_u: CMat,
    pub coupling: CMat,
    pub k: usize,
    pub eigenvalues: Vec<C64>,
}

impl StableSubspace {
    pub fn basis(&self) -> CMat {
        hstack(&[&self.basis_s, &self.basis_u])
    }

    pub fn triangular(&self) -> CMat {
        let n = self.basis_s.nrows();
        let mut t = CMat::zeros(n, n);
        let k = self.k;
        t.view_mut((0, 0), (k, k)).copy_from(&self.block_s);
        t.view_mut((0, k), (k, n - k)).copy_from(&self.coupling);
        t.view_mut((k, k), (n - k, n - k)).copy_from(&self.block_u);
        t
    }

    /// `‖M·Z − Z·T‖` relative to `‖M‖`.
    pub fn reconstruction_residual(&self, m: &CMat) -> f64 {
        let z = self.basis();
        let r = m * &z - &z * self.triangular();
        r.norm() / m.norm().max(f64::MIN_POSITIVE)
    }

    /// Gap between the spectra of the two diagonal blocks.
    pub fn spectral_gap(&self) -> f64 {
        let max_s = self.eigenvalues[..self.k]
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_u = self.eigenvalues[self.k..]
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        min_u - max_s
    }
}

/// Swaps the adjacent diagonal entries `j`, `j+1` of an upper triangular
/// `t`, updating the unitary factor `q`.
fn swap_adjacent(t: &mut CMat, q: &mut CMat, j: usize) {
    let n = t.nrows();
    let t11 = t[(j, j)];
    let t22 = t[(j + 1, j + 1)];
    let t12 = t[(j, j + 1)];
    // Eigenvector of the 2x2 block for eigenvalue t22.
    let mut a = t12;
    let mut b = t22 - t11;
    let nrm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if nrm == 0.0 {
        return;
    }
    a /= nrm;
    b /= nrm;
    // G = [[a, -conj(b)], [b, conj(a)]]
    let g = [[a, -b.conj()], [b, a.conj()]];
    for c in 0..n {
        let x = t[(j, c)];
        let y = t[(j + 1, c)];
        t[(j, c)] = g[0][0].conj() * x + g[1][0].conj() * y;
        t[(j + 1, c)] = g[0][1].conj() * x + g[1][1].conj() * y;
    }
    for r in 0..n {
        let x = t[(r, j)];
        let y = t[(r, j + 1)];
        t[(r, j)] = x * g[0][0] + y * g[1][0];
        t[(r, j + 1)] = x * g[0][1] + y * g[1][1];
        let x = q[(r, j)];
        let y = q[(r, j + 1)];
        q[(r, j)] = x * g[0][0] + y * g[1][0];
        q[(r, j + 1)] = x * g[0][1] + y * g[1][1];
    }
    t[(j + 1, j)] = C64::new(0.0, 0.0);
    t[(j, j)] = t22;
    t[(j + 1, j + 1)] = t11;
}

/// Complex Schur form `m = q t qᴴ` with `t` upper triangular.
pub fn complex_schur(m: &CMat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 2000 * n.max(1))
        .ok_or_else(|| Error::NonFinite("Schur iteration did not converge".into()))?;
    let (q, mut t) = schur.unpack();
    for c in 0..n {
        for r in (c + 1)..n {
            t[(r, c)] = C64::new(0.0, 0.0);
        }
    }
    Ok((q, t))
}

/// Splits `m` into its stable (Re λ < 0) and unstable invariant parts using
/// a reordered unitary Schur form.
///
/// Fails with `NearImaginaryEigenvalue` if an eigenvalue sits within
/// `1e-8·‖m‖` of the imaginary axis.
pub fn split_invariant_subspaces(m: &CMat) -> Result<StableSubspace> {
    split_invariant_subspaces_tol(m, TAU_AXIS_REL)
}

pub fn split_invariant_subspaces_tol(m: &CMat, axis_rel: f64) -> Result<StableSubspace> {
    let n = m.nrows();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix passed to invariant-subspace split".into()));
    }
    if n == 0 {
        return Ok(StableSubspace {
            basis_s: CMat::zeros(0, 0),
            basis_u: CMat::zeros(0, 0),
            block_s: CMat::zeros(0, 0),
            block_u: CMat::zeros(0, 0),
            coupling: CMat::zeros(0, 0),
            k: 0,
            eigenvalues: vec![],
        });
    }
    let tol = axis_rel * m.norm();
    let (mut q, mut t) = complex_schur(m)?;
    for i in 0..n {
        let z = t[(i, i)];
        if z.re.abs() <= tol {
            return Err(Error::NearImaginaryEigenvalue {
                re: z.re,
                im: z.im,
                tol,
            });
        }
    }
    // Bubble each stable eigenvalue up to the next free leading slot.
    let mut k = 0;
    for i in 0..n {
        if t[(i, i)].re < 0.0 {
            let mut j = i;
            while j > k {
                swap_adjacent(&mut t, &mut q, j - 1);
                j -= 1;
            }
            k += 1;
        }
    }
    let eigenvalues: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    Ok(StableSubspace {
        basis_s: q.columns(0, k).into_owned(),
        basis_u: q.columns(k, n - k).into_owned(),
        block_s: t.view((0, 0), (k, k)).into_owned(),
        block_u: t.view((k, k), (n - k, n - k)).into_owned(),
        coupling: t.view((0, k), (k, n - k)).into_owned(),
        k,
        eigenvalues,
    })
}

/// `exp(m·y)·v`.
pub fn matrix_exponential_action(m: &RMat, y: f64, v: &DVector<f64>) -> DVector<f64> {
    if m.nrows() == 0 || y == 0.0 {
        return v.clone();
    }
    (m * y).exp() * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> RMat {
        let a = RMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        a.qr().q()
    }

    #[test]
    fn diagonal_split() {
        let m = to_complex(&RMat::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0])));
        let s = split_invariant_subspaces(&m).unwrap();
        assert_eq!(s.k, 1);
        assert!((s.basis_s[(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(s.basis_s[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn worked_example_matrix_is_fully_stable() {
        let m = to_complex(&(RMat::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -3.0]) * 0.5));
        let s = split_invariant_subspaces(&m).unwrap();
        assert_eq!(s.k, 2);
        let mut re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        let r = 1.0 / 2f64.sqrt();
        assert!((re[0] - (-1.0 - r)).abs() < 1e-12);
        assert!((re[1] - (-1.0 + r)).abs() < 1e-12);
    }

    #[test]
    fn prescribed_spectrum_by_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = RMat::from_diagonal(&DVector::from_vec(vec![-3.0, -1.0, -0.2, 0.5, 1.0, 4.0]));
        let v = RMat::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.4..0.4));
        let m = to_complex(&(&v * d * v.clone().try_inverse().unwrap()));
        let s = split_invariant_subspaces(&m).unwrap();
        assert_eq!(s.k, 3);
        assert!(s.reconstruction_residual(&m) < 1e-12);
        assert!(s.spectral_gap() > 0.6);
        let z = s.basis();
        let err = (z.adjoint() * &z - CMat::identity(6, 6)).norm();
        assert!(err < 1e-12);
        // Invariance of the stable basis alone.
        let inv = &m * &s.basis_s - &s.basis_s * &s.block_s;
        assert!(inv.norm() < 1e-12 * m.norm());
    }

    #[test]
    fn near_axis_is_rejected() {
        let m = to_complex(&RMat::from_diagonal(&DVector::from_vec(vec![-1.0, 1e-12])));
        assert!(matches!(
            split_invariant_subspaces(&m),
            Err(Error::NearImaginaryEigenvalue { .. })
        ));
    }

    #[test]
    fn kernel_examples() {
        let a = RMat::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let k = orthonormal_kernel(&a);
        assert_eq!(k.ncols(), 2);
        assert!(k.row(0).norm() < 1e-14);
        let a = RMat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 1.0]);
        assert_eq!(orthonormal_kernel(&a).ncols(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = random_orthogonal(3, &mut rng);
        let a = &o * RMat::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, -1.0])) * o.transpose();
        let k = orthonormal_kernel(&a);
        assert_eq!(k.ncols(), 1);
        let dot = (k.column(0).transpose() * o.column(1))[(0, 0)];
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_examples() {
        let e1 = RMat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let c = orthonormal_complement(&e1).unwrap();
        assert_eq!(c.ncols(), 2);
        assert!(c.row(0).norm() < 1e-14);
        let v = RMat::from_column_slice(2, 1, &[1.0, 1.0]) / 2f64.sqrt();
        let c = orthonormal_complement(&v).unwrap();
        assert!((c[(0, 0)] + c[(1, 0)]).abs() < 1e-14);
        assert!((c[(0, 0)].abs() - 1.0 / 2f64.sqrt()).abs() < 1e-14);
        let bad = RMat::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(orthonormal_complement(&bad), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn left_nullspace_examples() {
        let y = RMat::from_column_slice(2, 1, &[-1.0 / 3.0, 1.0]);
        let n = left_nullspace(&y, 1).unwrap();
        assert!((n[(0, 1)] / n[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        let y = RMat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let n = left_nullspace(&y, 2).unwrap();
        assert!(n.column(0).norm() < 1e-14);
        let y = RMat::zeros(3, 0);
        assert_eq!(left_nullspace(&y, 3).unwrap(), RMat::identity(3, 3));
        let y = RMat::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(left_nullspace(&y, 1), Err(Error::RankMismatch { .. })));
    }

    #[test]
    fn exp_action_examples() {
        let m = RMat::from_element(1, 1, -1.5);
        let v = DVector::from_element(1, 1.0);
        assert!((matrix_exponential_action(&m, 1.0, &v)[0] - (-1.5f64).exp()).abs() < 1e-15);
        let m = RMat::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let w = matrix_exponential_action(&m, 2f64.ln(), &v);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.25).abs() < 1e-14);
        assert_eq!(matrix_exponential_action(&m, 0.0, &v), v);
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let a = CMat::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let th: f64 = 1e-9;
        let b = CMat::from_column_slice(2, 1, &[C64::new(th.cos(), 0.0), C64::new(th.sin(), 0.0)]);
        assert!((max_principal_angle(&a, &b) - th).abs() < 1e-18);
    }
}
