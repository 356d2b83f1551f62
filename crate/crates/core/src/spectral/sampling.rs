//! Sampling of the Kreiss ratio over the compactified parameter domain.
//!
//! `M` is positively homogeneous of degree one, so the ratio only depends on
//! the direction of `(Re ξ, η, Im ξ, ω)`. Directions are drawn from the
//! unit hemisphere `Re ξ ≥ δ, η ≥ 0` on a tensor grid in angular
//! coordinates, plus seeded Halton points crowded toward the two degenerate
//! rims (`Re ξ → 0`, `η → ∞`). The `η = ∞` limit is swept separately using
//! the closed-form limit of the stable subspace. Sampling is evidence, not
//! proof.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Eta, FrequencyPoint};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::reduction::Analysis;

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSlice {
    /// All `η ≥ 0` plus the `η = ∞` limit.
    Full,
    /// `η = 0` only: the classical uniform Kreiss condition.
    ZeroOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplingSpec {
    /// Points per angular coordinate.
    pub resolution: usize,
    pub c_threshold: f64,
    /// Smallest `Re ξ` on the unit sphere.
    pub rim_delta: f64,
    /// Halton points added near the rims; `None` means `resolution²`.
    pub rim_points: Option<usize>,
    pub refine_rounds: usize,
    pub seed: u64,
    pub eta_slice: EtaSlice,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec {
            resolution: 24,
            c_threshold: 1e-6,
            rim_delta: 1e-3,
            rim_points: None,
            refine_rounds: 2,
            seed: DEFAULT_SEED,
            eta_slice: EtaSlice::Full,
        }
    }
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Config(format!(
                "sampling resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        if !(self.c_threshold > 0.0) {
            return Err(Error::Config("c_threshold must be positive".into()));
        }
        if !(self.rim_delta > 0.0 && self.rim_delta < 1.0) {
            return Err(Error::Config("rim_delta must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn rim_count(&self) -> usize {
        self.rim_points.unwrap_or(self.resolution * self.resolution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum HemisphereKind {
    /// Coordinates `(Re ξ, η, Im ξ, ω₂…ω_d)`.
    WithEta,
    /// Coordinates `(Re ξ, Im ξ, ω₂…ω_d)`.
    WithoutEta,
}

/// A direction on the hemisphere in angular coordinates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Direction {
    pub angles: Vec<f64>,
    /// Orientation of the `(Im ξ, ω)` block when it is one-dimensional.
    pub sign: f64,
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
    periodic: bool,
}

fn angle_ranges(kind: HemisphereKind, d: usize, delta: f64) -> Vec<Range> {
    let mut v = vec![Range {
        lo: 0.0,
        hi: delta.acos(),
        periodic: false,
    }];
    if kind == HemisphereKind::WithEta {
        v.push(Range {
            lo: 0.0,
            hi: FRAC_PI_2,
            periodic: false,
        });
    }
    // (Im ξ, ω) lives on S^{d-1}.
    let k = d - 1;
    for i in 0..k {
        v.push(if i + 1 < k {
            Range {
                lo: 0.0,
                hi: PI,
                periodic: false,
            }
        } else {
            Range {
                lo: 0.0,
                hi: 2.0 * PI,
                periodic: true,
            }
        });
    }
    v
}

fn sphere_point(angles: &[f64], sign: f64) -> Vec<f64> {
    if angles.is_empty() {
        return vec![sign];
    }
    let mut out = Vec::with_capacity(angles.len() + 1);
    let mut prod = 1.0;
    for a in angles {
        out.push(prod * a.cos());
        prod *= a.sin();
    }
    out.push(prod);
    out
}

pub(crate) fn to_point(kind: HemisphereKind, dir: &Direction) -> FrequencyPoint {
    let th = dir.angles[0];
    let (re, rest) = (th.cos(), th.sin());
    match kind {
        HemisphereKind::WithEta => {
            let ph = dir.angles[1];
            let s = sphere_point(&dir.angles[2..], dir.sign);
            let eta = rest * ph.cos();
            let tail: Vec<f64> = s.iter().map(|x| rest * ph.sin() * x).collect();
            FrequencyPoint {
                xi: C64::new(re, tail[0]),
                omega: tail[1..].to_vec(),
                eta: Eta::Finite(eta),
            }
        }
        HemisphereKind::WithoutEta => {
            let s = sphere_point(&dir.angles[1..], dir.sign);
            let tail: Vec<f64> = s.iter().map(|x| rest * x).collect();
            FrequencyPoint {
                xi: C64::new(re, tail[0]),
                omega: tail[1..].to_vec(),
                eta: Eta::Finite(0.0),
            }
        }
    }
}

fn grid_nodes(r: Range, n: usize) -> Vec<f64> {
    if r.periodic {
        (0..n).map(|i| r.lo + (r.hi - r.lo) * i as f64 / n as f64).collect()
    } else {
        (0..n)
            .map(|i| r.lo + (r.hi - r.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

fn spacing(r: Range, n: usize) -> f64 {
    if r.periodic {
        (r.hi - r.lo) / n as f64
    } else {
        (r.hi - r.lo) / (n - 1) as f64
    }
}

/// Tensor-grid directions, row-major in the angle order.
pub(crate) fn sample_directions(kind: HemisphereKind, d: usize, resolution: usize, delta: f64) -> Vec<Direction> {
    let ranges = angle_ranges(kind, d, delta);
    let nodes: Vec<Vec<f64>> = ranges.iter().map(|&r| grid_nodes(r, resolution)).collect();
    let signs: &[f64] = if d == 1 { &[1.0, -1.0] } else { &[1.0] };
    let mut out = vec![];
    let total: usize = nodes.iter().map(|v| v.len()).product();
    for &sign in signs {
        for flat in 0..total {
            let mut rem = flat;
            let mut angles = vec![0.0; nodes.len()];
            for k in (0..nodes.len()).rev() {
                angles[k] = nodes[k][rem % nodes[k].len()];
                rem /= nodes[k].len();
            }
            out.push(Direction { angles, sign });
        }
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Seeded Halton directions crowded toward the `Re ξ → 0` rim (first half)
/// and the `η → ∞` rim (second half).
fn rim_directions(kind: HemisphereKind, d: usize, count: usize, delta: f64, seed: u64) -> Vec<Direction> {
    let ranges = angle_ranges(kind, d, delta);
    let dims = ranges.len() + usize::from(d == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|i| {
            let t: Vec<f64> = (0..dims)
                .map(|k| (radical_inverse(i as u64 + 1, PRIMES[k % PRIMES.len()]) + shift[k]).fract())
                .collect();
            let first_half = i < count / 2 || kind == HemisphereKind::WithoutEta;
            let angles: Vec<f64> = ranges
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let u = t[k];
                    match (k, first_half) {
                        (0, true) => r.hi * (1.0 - u * u),
                        (1, false) if kind == HemisphereKind::WithEta => r.hi * u * u,
                        _ => r.lo + (r.hi - r.lo) * u,
                    }
                })
                .collect();
            let sign = if d == 1 && t[dims - 1] < 0.5 { -1.0 } else { 1.0 };
            Direction { angles, sign }
        })
        .collect()
}

fn refine_around(kind: HemisphereKind, d: usize, center: &Direction, h: &[f64], delta: f64) -> Vec<Direction> {
    let ranges = angle_ranges(kind, d, delta);
    let per = 9usize;
    let total = per.pow(ranges.len() as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut angles = center.angles.clone();
        for k in (0..ranges.len()).rev() {
            let off = (rem % per) as f64 - 4.0;
            rem /= per;
            let r = ranges[k];
            let mut a = center.angles[k] + off * h[k] / 4.0;
            if r.periodic {
                a = a.rem_euclid(r.hi - r.lo) + r.lo;
            } else {
                a = a.clamp(r.lo, r.hi);
            }
            angles[k] = a;
        }
        out.push(Direction {
            angles,
            sign: center.sign,
        });
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRecord {
    pub point: FrequencyPoint,
    pub ratio: f64,
    pub family: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleFailure {
    pub point: FrequencyPoint,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendRow {
    pub re_xi: f64,
    pub min_ratio: f64,
}

/// Outcome of the Kreiss-condition sampling.
#[derive(Debug, Clone, Serialize)]
pub struct GkcReport {
    pub pass: bool,
    pub min_ratio: f64,
    pub argmin_point: FrequencyPoint,
    pub samples: usize,
    pub includes_eta_infinity: bool,
    pub eta_infinity_min_ratio: Option<f64>,
    pub c_threshold: f64,
    pub rim_delta: f64,
    pub resolution: usize,
    pub refinement_rounds_used: usize,
    pub eta_slice: EtaSlice,
    pub seed: u64,
    pub sub_threshold: Vec<SampleRecord>,
    pub failures: Vec<SampleFailure>,
    /// Minimum ratio per `Re ξ` level of the tensor grid, for the
    /// `Re ξ → 0` trend.
    pub re_xi_trend: Vec<TrendRow>,
    pub note: String,
    #[serde(skip)]
    pub records: Vec<SampleRecord>,
}

impl GkcReport {
    /// CSV of all sampled points: `family,re_xi,im_xi,eta,omega...,ratio`.
    pub fn csv(&self, d: usize) -> String {
        let mut s = String::from("family,re_xi,im_xi,eta");
        for j in 2..=d {
            s.push_str(&format!(",omega{j}"));
        }
        s.push_str(",ratio\n");
        for r in &self.records {
            let eta = match r.point.eta {
                Eta::Finite(e) => format!("{e:.17e}"),
                Eta::Infinite => "inf".into(),
            };
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{}",
                r.family, r.point.xi.re, r.point.xi.im, eta
            ));
            for w in &r.point.omega {
                s.push_str(&format!(",{w:.17e}"));
            }
            s.push_str(&format!(",{:.17e}\n", r.ratio));
        }
        s
    }
}

/// Raw sampler output shared by the Kreiss checks on `M` and on `M₁`.
pub(crate) struct SamplerOutcome {
    pub records: Vec<SampleRecord>,
    pub failures: Vec<SampleFailure>,
    pub rounds: usize,
}

impl SamplerOutcome {
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.records.iter().enumerate() {
            match best {
                Some(b) if self.records[b].ratio <= r.ratio => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

type Family = (HemisphereKind, bool, &'static str);

/// Evaluates `eval` over grid and rim directions of one hemisphere family,
/// then refines around the global minimum while it stays below
/// `10·c_threshold`.
pub(crate) fn run_sampler<F>(d: usize, spec: &SamplingSpec, families: &[Family], eval: F) -> SamplerOutcome
where
    F: Fn(&FrequencyPoint) -> Result<f64> + Sync,
{
    let mut dirs: Vec<(usize, Direction, &'static str)> = vec![];
    for (fi, &(kind, with_rim, name)) in families.iter().enumerate() {
        for dir in sample_directions(kind, d, spec.resolution, spec.rim_delta) {
            dirs.push((fi, dir, name));
        }
        if with_rim {
            for dir in rim_directions(kind, d, spec.rim_count(), spec.rim_delta, spec.seed ^ fi as u64) {
                dirs.push((fi, dir, "rim"));
            }
        }
    }
    let point_of = |fi: usize, dir: &Direction| -> FrequencyPoint {
        let (kind, _, name) = families[fi];
        let p = to_point(kind, dir);
        if name == "eta_inf" {
            FrequencyPoint::at_infinity(p.xi, p.omega)
        } else {
            p
        }
    };
    let evaluate =
        |batch: &[(usize, Direction, &'static str)]| -> Vec<std::result::Result<SampleRecord, SampleFailure>> {
            batch
                .par_iter()
                .map(|(fi, dir, fam)| {
                    let p = point_of(*fi, dir);
                    match eval(&p) {
                        Ok(ratio) => Ok(SampleRecord {
                            point: p,
                            ratio,
                            family: fam,
                        }),
                        Err(e) => Err(SampleFailure {
                            point: p,
                            error: e.to_string(),
                        }),
                    }
                })
                .collect()
        };
    let mut records = vec![];
    let mut failures = vec![];
    let mut origin = vec![];
    for (res, (fi, dir, _)) in evaluate(&dirs).into_iter().zip(dirs.iter()) {
        match res {
            Ok(r) => {
                records.push(r);
                origin.push((*fi, dir.clone()));
            }
            Err(f) => failures.push(f),
        }
    }
    let mut out = SamplerOutcome {
        records,
        failures,
        rounds: 0,
    };
    let mut h_scale = 1.0;
    for _ in 0..spec.refine_rounds {
        let Some(best) = out.argmin() else { break };
        if out.records[best].ratio >= 10.0 * spec.c_threshold {
            break;
        }
        let (fi, center) = origin[best].clone();
        let (kind, _, _) = families[fi];
        let h: Vec<f64> = angle_ranges(kind, d, spec.rim_delta)
            .iter()
            .map(|&r| spacing(r, spec.resolution) * h_scale)
            .collect();
        let batch: Vec<(usize, Direction, &'static str)> = refine_around(kind, d, &center, &h, spec.rim_delta)
            .into_iter()
            .map(|dir| (fi, dir, "refine"))
            .collect();
        for (res, (fi, dir, _)) in evaluate(&batch).into_iter().zip(batch.iter()) {
            match res {
                Ok(r) => {
                    out.records.push(r);
                    origin.push((*fi, dir.clone()));
                }
                Err(f) => out.failures.push(f),
            }
        }
        out.rounds += 1;
        h_scale /= 4.0;
    }
    out
}

/// Samples the generalized Kreiss ratio of `analysis` over the
/// compactified parameter domain.
pub fn check_gkc(analysis: &Analysis, spec: &SamplingSpec) -> Result<GkcReport> {
    spec.validate()?;
    let d = analysis.sys.d;
    let families: Vec<Family> = match spec.eta_slice {
        EtaSlice::Full => vec![
            (HemisphereKind::WithEta, true, "grid"),
            (HemisphereKind::WithoutEta, false, "eta_inf"),
        ],
        EtaSlice::ZeroOnly => vec![(HemisphereKind::WithoutEta, true, "grid")],
    };
    let out = run_sampler(d, spec, &families, |p| analysis.gkc_ratio(p));
    let best = out.argmin().ok_or_else(|| {
        Error::NonFinite(format!(
            "no sample could be evaluated ({} failures)",
            out.failures.len()
        ))
    })?;
    let min_ratio = out.records[best].ratio;
    let eta_inf = out
        .records
        .iter()
        .filter(|r| r.point.eta == Eta::Infinite)
        .map(|r| r.ratio)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    // Trend toward the Re ξ rim from the tensor grid.
    let mut trend: Vec<TrendRow> = vec![];
    for r in out.records.iter().filter(|r| r.family == "grid") {
        let re = r.point.xi.re;
        match trend.iter_mut().find(|t| (t.re_xi - re).abs() <= 1e-12) {
            Some(t) => t.min_ratio = t.min_ratio.min(r.ratio),
            None => trend.push(TrendRow {
                re_xi: re,
                min_ratio: r.ratio,
            }),
        }
    }
    trend.sort_by(|a, b| b.re_xi.total_cmp(&a.re_xi));
    let sub_threshold: Vec<SampleRecord> = out
        .records
        .iter()
        .filter(|r| r.ratio <= spec.c_threshold)
        .cloned()
        .collect();
    let pass = min_ratio > spec.c_threshold && out.failures.is_empty();
    Ok(GkcReport {
        pass,
        min_ratio,
        argmin_point: out.records[best].point.clone(),
        samples: out.records.len() + out.failures.len(),
        includes_eta_infinity: spec.eta_slice == EtaSlice::Full,
        eta_infinity_min_ratio: eta_inf,
        c_threshold: spec.c_threshold,
        rim_delta: spec.rim_delta,
        resolution: spec.resolution,
        refinement_rounds_used: out.rounds,
        eta_slice: spec.eta_slice,
        seed: spec.seed,
        sub_threshold,
        failures: out.failures,
        re_xi_trend: trend,
        note: "sampling of the parameter hemisphere yields evidence, not a proof, of the uniform bound; the Re xi -> 0 trend is reported without conclusion".into(),
        records: out.records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_lie_on_the_admissible_hemisphere() {
        for d in 1..=3 {
            for kind in [HemisphereKind::WithEta, HemisphereKind::WithoutEta] {
                let dirs = sample_directions(kind, d, 6, 1e-3);
                assert!(!dirs.is_empty());
                for dir in dirs.iter().chain(rim_directions(kind, d, 40, 1e-3, 1).iter()) {
                    let p = to_point(kind, dir);
                    assert_eq!(p.omega.len(), d - 1);
                    let eta = p.eta_finite().unwrap();
                    let norm2 = p.xi.norm_sqr() + eta * eta + p.omega.iter().map(|w| w * w).sum::<f64>();
                    assert!((norm2 - 1.0).abs() < 1e-12);
                    assert!(p.xi.re >= 1e-3 - 1e-15);
                    assert!(eta >= 0.0);
                }
            }
        }
    }

    #[test]
    fn grid_reaches_both_rims() {
        let dirs = sample_directions(HemisphereKind::WithEta, 1, 8, 1e-3);
        let pts: Vec<FrequencyPoint> = dirs.iter().map(|d| to_point(HemisphereKind::WithEta, d)).collect();
        assert!(pts.iter().any(|p| (p.xi.re - 1e-3).abs() < 1e-12));
        assert!(pts
            .iter()
            .any(|p| (p.eta_finite().unwrap() - (1.0 - 1e-6f64).sqrt()).abs() < 1e-9));
        assert!(pts.iter().any(|p| (p.xi.re - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rim_points_are_seeded() {
        let a = rim_directions(HemisphereKind::WithEta, 2, 16, 1e-3, 42);
        let b = rim_directions(HemisphereKind::WithEta, 2, 16, 1e-3, 42);
        let c = rim_directions(HemisphereKind::WithEta, 2, 16, 1e-3, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_resolution_is_a_config_error() {
        let spec = SamplingSpec {
            resolution: 0,
            ..Default::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
