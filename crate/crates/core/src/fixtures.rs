//! Reference systems and random admissible system generators.
//!
//! The generators build `A₁` around a prescribed kernel so characteristic
//! cases (`n₀ ≥ 1`, `n₁₀ ≥ 1`) occur with probability one instead of never,
//! then reject draws that violate the standing assumptions.

use nalgebra::DVector;
use rand::Rng;

use crate::linalg::{self, hstack, sorted_sym_eigen, sym, RMat};
use crate::model::{check_sk_condition, compute_indices, Labels, RelaxationSystem};

fn diag(v: &[f64]) -> RMat {
    RMat::from_diagonal(&DVector::from_row_slice(v))
}

/// `u_t + 3u_x + v_x = 0`, `v_t + u_x + v_x = −v/ε` with `u(0) = g`, `v(0) = h`.
pub fn worked_example() -> RelaxationSystem {
    RelaxationSystem::new(
        vec![RMat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 1.0])],
        diag(&[-1.0]),
        RMat::identity(2, 2),
    )
    .expect("valid")
    .with_labels(Labels {
        state: vec!["u".into(), "v".into()],
        boundary: vec!["g".into(), "h".into()],
    })
}

/// 3×3 system with a characteristic boundary for both the relaxation
/// system and its equilibrium limit: `n₀ = 1`, `n₁₀ = 1`, `n₊ = 1`.
pub fn double_characteristic() -> RelaxationSystem {
    RelaxationSystem::new(
        vec![RMat::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, 1.0, 0.5, 0.5, 0.0, 0.5, 0.0],
        )],
        RMat::from_row_slice(2, 2, &[-1.0, 0.2, 0.2, -2.0]),
        RMat::from_row_slice(1, 3, &[1.0, 0.3, 0.5]),
    )
    .expect("valid")
    .with_labels(Labels {
        state: vec!["u".into(), "v1".into(), "v2".into()],
        boundary: vec!["b".into()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    /// Kernel dimension of `A₁`.
    pub n0: usize,
    /// Kernel dimension of `A₁₁`.
    pub n10: usize,
}

impl FixtureSpec {
    pub fn feasible(&self) -> bool {
        let nu = self.n - self.r;
        self.r >= 1
            && self.r < self.n
            && self.r >= self.n0
            && self.r - self.n0 >= self.n10
            && nu >= self.n10
            && self.d >= 1
    }
}

fn gaussian_like<R: Rng>(rng: &mut R) -> f64 {
    // Sum of uniforms: cheap, bounded, adequate for fixture entries.
    (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.5
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> RMat {
    RMat::from_fn(rows, cols, |_, _| gaussian_like(rng))
}

fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> RMat {
    if n == 0 {
        return RMat::zeros(0, 0);
    }
    random_matrix(n, n, rng).qr().q()
}

fn random_sym<R: Rng>(n: usize, rng: &mut R) -> RMat {
    sym(&random_matrix(n, n, rng))
}

fn random_spectrum<R: Rng>(count: usize, zeros: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..count - zeros)
        .map(|_| {
            let m = rng.gen_range(0.5..2.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    v.extend(std::iter::repeat(0.0).take(zeros));
    v
}

/// One draw of a canonical system with the prescribed kernel dimensions.
///
/// Returns `None` when the draw misses the targets or violates the
/// Shizuta–Kawashima-like condition; callers loop.
pub fn random_system<R: Rng>(spec: FixtureSpec, rng: &mut R) -> Option<RelaxationSystem> {
    if !spec.feasible() {
        return None;
    }
    let FixtureSpec { n, r, d, n0, n10 } = spec;
    let nu = n - r;
    let o = random_orthogonal(nu, rng);
    let a11 = sym(&(&o * diag(&random_spectrum(nu, n10, rng)) * o.transpose()));
    // Kernel of A1 spanned by (Xu; Xv), with Xv orthonormal so that
    // R0^T Q R0 = Xv^T S Xv stays negative definite.
    let xu = random_matrix(nu, n0, rng);
    let xv = if n0 > 0 {
        random_orthogonal(r, rng).columns(0, n0).into_owned()
    } else {
        RMat::zeros(r, 0)
    };
    let proj = RMat::identity(r, r) - &xv * xv.transpose();
    let z = random_matrix(nu, r, rng);
    let a12 = -(&a11 * &xu * xv.transpose()) + &z * &proj;
    let y = -(a12.transpose() * &xu);
    let w = random_sym(r, rng);
    let a22 = sym(
        &(&y * xv.transpose() + &xv * y.transpose() - &xv * (xv.transpose() * &y) * xv.transpose() + &proj * w * &proj),
    );
    let mut a1 = RMat::zeros(n, n);
    a1.view_mut((0, 0), (nu, nu)).copy_from(&a11);
    a1.view_mut((0, nu), (nu, r)).copy_from(&a12);
    a1.view_mut((nu, 0), (r, nu)).copy_from(&a12.transpose());
    a1.view_mut((nu, nu), (r, r)).copy_from(&a22);
    let a1 = sym(&a1);
    let g = random_matrix(r, r, rng);
    let s = -(sym(&(&g * g.transpose())) + RMat::identity(r, r) * 0.3);
    let mut a = vec![a1];
    for _ in 1..d {
        a.push(random_sym(n, rng));
    }
    let provisional = RelaxationSystem::new(a.clone(), s.clone(), RMat::zeros(0, n)).ok()?;
    let idx = compute_indices(&provisional).ok()?;
    if idx.n0 != n0 || idx.n10 != n10 || !check_sk_condition(&provisional) {
        return None;
    }
    let b = boundary_matrix(&provisional, idx.n_plus, 0.2, rng)?;
    RelaxationSystem::new(a, s, b).ok()
}

/// Boundary matrix close to prescribing the incoming characteristic
/// variables: `R₊ᵀ` plus a perturbation, projected so `B R₀ = 0`.
pub fn boundary_matrix<R: Rng>(sys: &RelaxationSystem, n_plus: usize, perturb: f64, rng: &mut R) -> Option<RMat> {
    let n = sys.n;
    let (vals, vecs) = sorted_sym_eigen(sys.a1());
    let tau = sys.tau_eig();
    let plus: Vec<usize> = (0..n).filter(|&i| vals[i] > tau).collect();
    if plus.len() != n_plus {
        return None;
    }
    let mut rp = RMat::zeros(n, n_plus);
    for (c, &i) in plus.iter().enumerate() {
        rp.set_column(c, &vecs.column(i));
    }
    let r0 = sys.r0();
    let proj = RMat::identity(n, n) - &r0 * r0.transpose();
    let b = (rp.transpose() + random_matrix(n_plus, n, rng) * perturb) * proj;
    let rank = if n_plus == 0 {
        0
    } else {
        b.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-6)
            .count()
    };
    (rank == n_plus).then_some(b)
}

/// Rejection-samples until a draw succeeds.
pub fn random_admissible<R: Rng>(spec: FixtureSpec, rng: &mut R, max_tries: usize) -> Option<RelaxationSystem> {
    (0..max_tries).find_map(|_| random_system(spec, rng))
}

/// Random spec with `n ≤ n_max` and characteristic cases well represented.
pub fn random_spec<R: Rng>(n_max: usize, d_max: usize, rng: &mut R) -> FixtureSpec {
    loop {
        let n = rng.gen_range(2..=n_max);
        let r = rng.gen_range(1..n);
        let d = rng.gen_range(1..=d_max);
        let n0 = rng.gen_range(0..=r.min(2));
        let n10 = rng.gen_range(0..=(r - n0).min(n - r).min(1));
        let spec = FixtureSpec { n, r, d, n0, n10 };
        if spec.feasible() {
            return spec;
        }
    }
}

/// Random orthogonal matrix that preserves the `(u, v)` block split.
pub fn block_orthogonal<R: Rng>(nu: usize, r: usize, rng: &mut R) -> RMat {
    linalg::blockdiag(&random_orthogonal(nu, rng), &random_orthogonal(r, rng))
}

/// Conjugates every coefficient by a block-preserving orthogonal `O`:
/// `A_j ↦ O A_j Oᵀ`, `Q ↦ O Q Oᵀ`, `B ↦ B Oᵀ`.
pub fn conjugate(sys: &RelaxationSystem, o: &RMat) -> RelaxationSystem {
    let a = sys.a.iter().map(|aj| sym(&(o * aj * o.transpose()))).collect();
    let nu = sys.nu();
    let or = o.view((nu, nu), (sys.r, sys.r)).into_owned();
    let s = sym(&(&or * sys.s() * or.transpose()));
    RelaxationSystem::new(a, s, &sys.b * o.transpose()).expect("same shapes")
}

/// Frame built from arbitrary (non-orthonormal) bases for tests of frame
/// independence: `R̃₀ = R₀ D₀`, `R̃₁ = R₁ C₁ + R₀ C₀`.
pub fn perturbed_frame<R: Rng>(r0: &RMat, r1: &RMat, with_c0: bool, rng: &mut R) -> (RMat, RMat) {
    let n0 = r0.ncols();
    let m = r1.ncols();
    let d0 = RMat::identity(n0, n0) + random_matrix(n0, n0, rng) * 0.3;
    let c1 = RMat::identity(m, m) + random_matrix(m, m, rng) * 0.3;
    let c0 = if with_c0 {
        random_matrix(n0, m, rng)
    } else {
        RMat::zeros(n0, m)
    };
    (r0 * d0, r1 * c1 + r0 * c0)
}

pub fn columns(m: &RMat, idx: &[usize]) -> RMat {
    let cols: Vec<RMat> = idx.iter().map(|&i| m.columns(i, 1).into_owned()).collect();
    let refs: Vec<&RMat> = cols.iter().collect();
    if refs.is_empty() {
        RMat::zeros(m.nrows(), 0)
    } else {
        hstack(&refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generator_hits_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            FixtureSpec {
                n: 3,
                r: 2,
                d: 1,
                n0: 1,
                n10: 1,
            },
            FixtureSpec {
                n: 5,
                r: 3,
                d: 2,
                n0: 2,
                n10: 1,
            },
            FixtureSpec {
                n: 4,
                r: 2,
                d: 1,
                n0: 0,
                n10: 0,
            },
        ] {
            let sys = random_admissible(spec, &mut rng, 50).expect("draw");
            let idx = compute_indices(&sys).unwrap();
            assert_eq!((idx.n0, idx.n10), (spec.n0, spec.n10));
            let rep = sys.validate();
            assert!(rep.pass(), "{:?}", rep.failures());
        }
    }
}
