use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, SkewProductSystem, TorusPoint};

/// Iteration depth used when a caller does not pick one.
pub const DEFAULT_SPLITTING_DEPTH: usize = 80;
/// Convergence tolerance for the power iteration (angle between two starts).
pub const SPLITTING_TOL: f64 = 1e-10;
/// Default width of the center cone field.
pub const DEFAULT_CONE_WIDTH: f64 = 1e-3;

/// Unit vectors spanning `E^s`, `E^c`, `E^u` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingFrame {
    pub point: TorusPoint,
    pub e_s: [f64; 3],
    pub e_c: [f64; 3],
    pub e_u: [f64; 3],
}

impl SplittingFrame {
    /// Components `(v^s, v^c, v^u)` of `v` along the frame.
    pub fn decompose(&self, v: [f64; 3]) -> Option<(f64, f64, f64)> {
        let m = Matrix3::from_columns(&[
            Vector3::from(self.e_s),
            Vector3::from(self.e_c),
            Vector3::from(self.e_u),
        ]);
        let c = m.lu().solve(&Vector3::from(v))?;
        Some((c[0], c[1], c[2]))
    }

    /// Smallest distance from a unit frame vector to the plane of the other two.
    pub fn min_transversality(&self) -> f64 {
        let v = [
            Vector3::from(self.e_s),
            Vector3::from(self.e_c),
            Vector3::from(self.e_u),
        ];
        (0..3)
            .map(|i| {
                let n = v[(i + 1) % 3].cross(&v[(i + 2) % 3]);
                (v[i].dot(&n) / n.norm()).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn normalize(v: Vector3<f64>) -> Vector3<f64> {
    v / v.norm()
}

fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    // sign-insensitive: directions, not vectors
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    let s = a.cross(b).norm() / (a.norm() * b.norm());
    s.atan2(c)
}

/// Angle between two lines in `R^3`.
pub fn line_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    angle(&Vector3::from(a), &Vector3::from(b))
}

/// Invariant splitting at `p` by power iteration along the orbit.
///
/// `e_u` is pushed forward along the backward orbit ending at `p`, `e_s`
/// backward along the forward orbit. Each direction is iterated from two
/// different starts; if they disagree by more than [`SPLITTING_TOL`] the
/// domination margin is too small for the requested depth.
pub fn compute_splitting(
    system: &SkewProductSystem,
    p: &TorusPoint,
    depth: usize,
) -> Result<SplittingFrame, ModelError> {
    if depth == 0 {
        return Err(ModelError::InvalidDepth);
    }
    let eig = system.eigen();
    let base_u = Vector3::new(eig.e_u[0], eig.e_u[1], 0.0);
    let base_s = Vector3::new(eig.e_s[0], eig.e_s[1], 0.0);
    let e_c = [0.0, 0.0, 1.0];
    if system.is_uncoupled() {
        // constant base block and no coupling row: eigen-directions are invariant
        return Ok(SplittingFrame {
            point: *p,
            e_s: [eig.e_s[0], eig.e_s[1], 0.0],
            e_c,
            e_u: [eig.e_u[0], eig.e_u[1], 0.0],
        });
    }

    let mut backward = Vec::with_capacity(depth);
    let mut z = *p;
    for _ in 0..depth {
        z = system.apply_inverse(&z)?;
        backward.push(z);
    }
    let push_forward = |start: Vector3<f64>| {
        let mut v = start;
        for z in backward.iter().rev() {
            v = normalize(system.differential(z) * v);
        }
        v
    };
    let u1 = push_forward(base_u);
    let u2 = push_forward(normalize(base_u + Vector3::new(0.0, 0.0, 0.5) + 0.3 * base_s));
    if angle(&u1, &u2) > SPLITTING_TOL {
        return Err(ModelError::SplittingNotConverged {
            direction: "unstable",
            depth,
            gap: angle(&u1, &u2),
        });
    }

    let mut forward = Vec::with_capacity(depth);
    let mut z = *p;
    for _ in 0..depth {
        forward.push(z);
        z = system.apply(&z);
    }
    let pull_back = |start: Vector3<f64>| {
        let mut v = start;
        for z in forward.iter().rev() {
            let w = system.differential_inverse_apply(z, [v[0], v[1], v[2]]);
            v = normalize(Vector3::from(w));
        }
        v
    };
    let s1 = pull_back(base_s);
    let s2 = pull_back(normalize(base_s + Vector3::new(0.0, 0.0, 0.5) + 0.3 * base_u));
    if angle(&s1, &s2) > SPLITTING_TOL {
        return Err(ModelError::SplittingNotConverged {
            direction: "stable",
            depth,
            gap: angle(&s1, &s2),
        });
    }

    let orient = |v: Vector3<f64>, reference: &Vector3<f64>| {
        if v.dot(reference) < 0.0 {
            -v
        } else {
            v
        }
    };
    let u = orient(u1, &base_u);
    let s = orient(s1, &base_s);
    Ok(SplittingFrame {
        point: *p,
        e_s: [s[0], s[1], s[2]],
        e_c,
        e_u: [u[0], u[1], u[2]],
    })
}

/// Outcome of [`verify_partial_hyperbolicity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    /// Worst observed `max(‖Df^k e_s‖, 1/‖Df^k e_u‖)^{1/k}`.
    pub lambda_estimate: f64,
    /// Smallest log-gap in the chain of inequalities over all samples.
    pub margin: f64,
    /// Smallest distance from a frame vector to the plane of the other two.
    pub min_transversality: f64,
    pub samples: usize,
    pub violations: usize,
    /// Sample realizing the worst margin.
    pub worst_point: TorusPoint,
    pub pass: bool,
}

/// Check `‖Df^k e_s‖ < min(1, ‖Df^k e_c‖) <= max(1, ‖Df^k e_c‖) < ‖Df^k e_u‖`
/// on seeded random samples.
pub fn verify_partial_hyperbolicity(
    system: &SkewProductSystem,
    sample_count: usize,
    k: usize,
    seed: u64,
) -> Result<HyperbolicityReport, ModelError> {
    if sample_count == 0 || k == 0 {
        return Err(ModelError::InvalidSampleCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = HyperbolicityReport {
        lambda_estimate: 0.0,
        margin: f64::INFINITY,
        min_transversality: f64::INFINITY,
        samples: sample_count,
        violations: 0,
        worst_point: TorusPoint::new(0.0, 0.0, 0.0),
        pass: true,
    };
    for _ in 0..sample_count {
        let p = TorusPoint::new(rng.gen(), rng.gen(), rng.gen());
        let frame = compute_splitting(system, &p, DEFAULT_SPLITTING_DEPTH)?;
        let mut vs = Vector3::from(frame.e_s);
        let mut vc = Vector3::from(frame.e_c);
        let mut vu = Vector3::from(frame.e_u);
        let mut z = p;
        for _ in 0..k {
            let d = system.differential(&z);
            vs = d * vs;
            vc = d * vc;
            vu = d * vu;
            z = system.apply(&z);
        }
        let (ns, nc, nu) = (vs.norm(), vc.norm(), vu.norm());
        let lower = nc.min(1.0).ln() - ns.ln();
        let upper = nu.ln() - nc.max(1.0).ln();
        let m = lower.min(upper);
        if m < report.margin {
            report.margin = m;
            report.worst_point = p;
        }
        if m <= 0.0 {
            report.violations += 1;
        }
        let kf = k as f64;
        let lam = ns.powf(1.0 / kf).max(nu.powf(-1.0 / kf));
        report.lambda_estimate = report.lambda_estimate.max(lam);
        report.min_transversality = report.min_transversality.min(frame.min_transversality());
    }
    report.pass = report.violations == 0;
    Ok(report)
}

/// True iff every chord of the sampled curve lies in the cone
/// `‖v^s + v^u‖ <= a ‖v^c‖` at its starting sample.
pub fn cone_check(
    system: &SkewProductSystem,
    curve: &[TorusPoint],
    a_cone: f64,
) -> Result<bool, ModelError> {
    const MAX_GAP: f64 = 1e-2;
    for pair in curve.windows(2) {
        let gap = pair[0].distance(&pair[1]);
        if gap >= MAX_GAP {
            return Err(ModelError::SamplesTooSparse { gap });
        }
    }
    for pair in curve.windows(2) {
        let v = pair[0].delta_to(&pair[1]);
        let frame = compute_splitting(system, &pair[0], DEFAULT_SPLITTING_DEPTH)?;
        let (s, c, u) = frame.decompose(v).ok_or(ModelError::DegenerateFrame)?;
        let su: Vector3<f64> = s * Vector3::from(frame.e_s) + u * Vector3::from(frame.e_u);
        let cc = c * Vector3::from(frame.e_c);
        if su.norm() > a_cone * cc.norm() {
            return Ok(false);
        }
    }
    Ok(true)
}
