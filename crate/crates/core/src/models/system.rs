use std::f64::consts::TAU;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{ModelError, TorusPoint};
use crate::numerics::{solve_increasing, wrap_unit};

/// One term `amplitude * sin(2π (m · v))` of the fiber translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberTerm {
    pub freq: [i64; 2],
    pub amplitude: f64,
}

/// Plain description of a skew product, as it appears in preset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub matrix: [[i64; 2]; 2],
    #[serde(default)]
    pub terms: Vec<FiberTerm>,
    #[serde(default)]
    pub nonlinearity: f64,
}

/// Eigen data of the hyperbolic base matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseEigen {
    /// `|stable eigenvalue|`.
    pub lambda_s: f64,
    /// `|unstable eigenvalue|`.
    pub lambda_u: f64,
    /// Signed eigenvalues; negative when the trace is negative.
    pub mult_s: f64,
    pub mult_u: f64,
    /// Unit stable eigenvector of the base matrix.
    pub e_s: [f64; 2],
    /// Unit unstable eigenvector of the base matrix.
    pub e_u: [f64; 2],
    // rows of the inverse of [e_s | e_u]
    dual_s: [f64; 2],
    dual_u: [f64; 2],
}

impl BaseEigen {
    /// Coordinates `(s, u)` of `v = s e_s + u e_u`.
    pub fn coords(&self, v: [f64; 2]) -> (f64, f64) {
        (
            self.dual_s[0] * v[0] + self.dual_s[1] * v[1],
            self.dual_u[0] * v[0] + self.dual_u[1] * v[1],
        )
    }

    pub fn vector(&self, s: f64, u: f64) -> [f64; 2] {
        [
            s * self.e_s[0] + u * self.e_u[0],
            s * self.e_s[1] + u * self.e_u[1],
        ]
    }

    /// Base shadowing constant `1/(1-λ_s) + 1/(1-1/λ_u)`.
    pub fn shadowing_constant(&self) -> f64 {
        1.0 / (1.0 - self.lambda_s) + 1.0 / (1.0 - 1.0 / self.lambda_u)
    }
}

/// The map `(v, θ) ↦ (A v, θ + φ(v) + (a/2π) sin 2πθ)` on `T^3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemConfig", into = "SystemConfig")]
pub struct SkewProductSystem {
    matrix: [[i64; 2]; 2],
    inverse: [[i64; 2]; 2],
    terms: Vec<FiberTerm>,
    nonlinearity: f64,
    eigen: BaseEigen,
}

impl TryFrom<SystemConfig> for SkewProductSystem {
    type Error = ModelError;

    fn try_from(c: SystemConfig) -> Result<Self, ModelError> {
        SkewProductSystem::new(c.matrix, c.terms, c.nonlinearity)
    }
}

impl From<SkewProductSystem> for SystemConfig {
    fn from(s: SkewProductSystem) -> Self {
        s.config()
    }
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    let s = if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) { -1.0 } else { 1.0 };
    [s * v[0] / n, s * v[1] / n]
}

fn eigenvector(m: [[i64; 2]; 2], lambda: f64) -> [f64; 2] {
    let (a, b, c, d) = (m[0][0] as f64, m[0][1] as f64, m[1][0] as f64, m[1][1] as f64);
    // pick the better conditioned row of (A - λ I)
    if b.abs() + (a - lambda).abs() >= c.abs() + (d - lambda).abs() {
        unit([b, lambda - a])
    } else {
        unit([lambda - d, c])
    }
}

impl SkewProductSystem {
    pub fn new(
        matrix: [[i64; 2]; 2],
        terms: Vec<FiberTerm>,
        nonlinearity: f64,
    ) -> Result<Self, ModelError> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det != 1 {
            return Err(ModelError::NotUnimodular { det });
        }
        let trace = matrix[0][0] + matrix[1][1];
        if trace.abs() <= 2 {
            return Err(ModelError::NotHyperbolic { trace });
        }
        if !nonlinearity.is_finite() || nonlinearity.abs() >= 1.0 {
            return Err(ModelError::NonlinearityOutOfRange(nonlinearity));
        }
        if terms.iter().any(|t| !t.amplitude.is_finite()) {
            return Err(ModelError::InvalidTerm);
        }
        let inverse = [
            [matrix[1][1], -matrix[0][1]],
            [-matrix[1][0], matrix[0][0]],
        ];
        let tr = trace as f64;
        let disc = (tr * tr - 4.0).sqrt();
        // eigenvalues with |λ_s| < 1 < |λ_u|; for negative trace both are negative
        let (mut lambda_s, mut lambda_u) = ((tr - disc) / 2.0, (tr + disc) / 2.0);
        if tr < 0.0 {
            std::mem::swap(&mut lambda_s, &mut lambda_u);
        }
        // the smaller root loses precision; use λ_s λ_u = 1
        lambda_s = 1.0 / lambda_u;
        let e_s = eigenvector(matrix, lambda_s);
        let e_u = eigenvector(matrix, lambda_u);
        let det_b = e_s[0] * e_u[1] - e_u[0] * e_s[1];
        let eigen = BaseEigen {
            lambda_s: lambda_s.abs(),
            lambda_u: lambda_u.abs(),
            mult_s: lambda_s,
            mult_u: lambda_u,
            e_s,
            e_u,
            dual_s: [e_u[1] / det_b, -e_u[0] / det_b],
            dual_u: [-e_s[1] / det_b, e_s[0] / det_b],
        };
        Ok(Self {
            matrix,
            inverse,
            terms,
            nonlinearity,
            eigen,
        })
    }

    pub fn from_config(config: &SystemConfig) -> Result<Self, ModelError> {
        Self::try_from(config.clone())
    }

    pub fn config(&self) -> SystemConfig {
        SystemConfig {
            matrix: self.matrix,
            terms: self.terms.clone(),
            nonlinearity: self.nonlinearity,
        }
    }

    pub fn matrix(&self) -> [[i64; 2]; 2] {
        self.matrix
    }

    pub fn terms(&self) -> &[FiberTerm] {
        &self.terms
    }

    pub fn nonlinearity(&self) -> f64 {
        self.nonlinearity
    }

    pub fn eigen(&self) -> &BaseEigen {
        &self.eigen
    }

    /// True when the fiber translation is identically zero, i.e. the
    /// differential has no base-to-fiber coupling.
    pub fn is_uncoupled(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0 || t.freq == [0, 0])
    }

    /// Linear base map on `R^2` (no reduction).
    pub fn base_linear(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            m[0][0] as f64 * v[0] + m[0][1] as f64 * v[1],
            m[1][0] as f64 * v[0] + m[1][1] as f64 * v[1],
        ]
    }

    pub fn base_linear_inverse(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.inverse;
        [
            m[0][0] as f64 * v[0] + m[0][1] as f64 * v[1],
            m[1][0] as f64 * v[0] + m[1][1] as f64 * v[1],
        ]
    }

    pub fn base_map(&self, v: [f64; 2]) -> [f64; 2] {
        let w = self.base_linear(v);
        [wrap_unit(w[0]), wrap_unit(w[1])]
    }

    pub fn base_map_inverse(&self, v: [f64; 2]) -> [f64; 2] {
        let w = self.base_linear_inverse(v);
        [wrap_unit(w[0]), wrap_unit(w[1])]
    }

    /// The fiber translation `φ(v)`.
    pub fn translation(&self, v: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * (TAU * (t.freq[0] as f64 * v[0] + t.freq[1] as f64 * v[1])).sin())
            .sum()
    }

    pub fn translation_gradient(&self, v: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for t in &self.terms {
            let c = t.amplitude * TAU * (TAU * (t.freq[0] as f64 * v[0] + t.freq[1] as f64 * v[1])).cos();
            g[0] += c * t.freq[0] as f64;
            g[1] += c * t.freq[1] as f64;
        }
        g
    }

    /// Upper bound for `sup |∇φ|`.
    pub fn translation_gradient_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude.abs() * TAU * (t.freq[0] as f64).hypot(t.freq[1] as f64))
            .sum()
    }

    /// Real-line lift of the fiber map over base point `v`.
    #[inline]
    pub fn fiber_lift(&self, v: [f64; 2], theta: f64) -> f64 {
        theta + self.translation(v) + self.nonlinearity / TAU * (TAU * theta).sin()
    }

    /// Fiber derivative `1 + a cos 2πθ`.
    #[inline]
    pub fn fiber_derivative(&self, theta: f64) -> f64 {
        1.0 + self.nonlinearity * (TAU * theta).cos()
    }

    /// `θ ↦ θ + (a/2π) sin 2πθ` inverted on the real line.
    pub fn fiber_core_inverse(&self, y: f64) -> Result<f64, ModelError> {
        let a = self.nonlinearity;
        if a == 0.0 {
            return Ok(y);
        }
        let r = a.abs() / TAU;
        solve_increasing(
            |t| t + a / TAU * (TAU * t).sin(),
            |t| self.fiber_derivative(t),
            y,
            y - r - 1e-12,
            y + r + 1e-12,
        )
        .ok_or(ModelError::FiberInverseFailed(y))
    }

    /// The diffeomorphism `f`.
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        let base = self.base_map(p.base);
        TorusPoint {
            base,
            fiber: wrap_unit(self.fiber_lift(p.base, p.fiber)),
        }
    }

    /// The inverse `f^{-1}`; the fiber part is solved by monotone root finding.
    pub fn apply_inverse(&self, p: &TorusPoint) -> Result<TorusPoint, ModelError> {
        let base = self.base_map_inverse(p.base);
        let target = p.fiber - self.translation(base);
        let fiber = self.fiber_core_inverse(target)?;
        Ok(TorusPoint {
            base,
            fiber: wrap_unit(fiber),
        })
    }

    /// `Df` in the trivialized tangent bundle (base coordinates first).
    pub fn differential(&self, p: &TorusPoint) -> Matrix3<f64> {
        let m = &self.matrix;
        let g = self.translation_gradient(p.base);
        Matrix3::new(
            m[0][0] as f64,
            m[0][1] as f64,
            0.0,
            m[1][0] as f64,
            m[1][1] as f64,
            0.0,
            g[0],
            g[1],
            self.fiber_derivative(p.fiber),
        )
    }

    /// `Df(p)^{-1} v`, using the block-triangular structure.
    pub fn differential_inverse_apply(&self, p: &TorusPoint, v: [f64; 3]) -> [f64; 3] {
        let b = self.base_linear_inverse([v[0], v[1]]);
        let g = self.translation_gradient(p.base);
        let f = (v[2] - g[0] * b[0] - g[1] * b[1]) / self.fiber_derivative(p.fiber);
        [b[0], b[1], f]
    }

    /// Spectral norm of the base matrix.
    pub fn base_norm(&self) -> f64 {
        let m = &self.matrix;
        let (a, b, c, d) = (m[0][0] as f64, m[0][1] as f64, m[1][0] as f64, m[1][1] as f64);
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        ((s + (s * s - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
    }

    /// Global upper bound for `‖Df‖` (block diagonal part plus coupling row).
    pub fn differential_norm_bound(&self) -> f64 {
        self.base_norm().max(1.0 + self.nonlinearity.abs()) + self.translation_gradient_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> [[i64; 2]; 2] {
        [[2, 1], [1, 1]]
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(
            SkewProductSystem::new([[1, 1], [0, 1]], vec![], 0.0),
            Err(ModelError::NotHyperbolic { trace: 2 })
        ));
        assert!(matches!(
            SkewProductSystem::new([[2, 1], [1, 2]], vec![], 0.0),
            Err(ModelError::NotUnimodular { det: 3 })
        ));
        assert!(matches!(
            SkewProductSystem::new(cat(), vec![], 1.0),
            Err(ModelError::NonlinearityOutOfRange(_))
        ));
    }

    #[test]
    fn cat_map_eigen_data() {
        let s = SkewProductSystem::new(cat(), vec![], 0.0).unwrap();
        let e = s.eigen();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((e.lambda_u - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((e.lambda_u * e.lambda_s - 1.0).abs() < 1e-15);
        assert!((e.e_u[1] / e.e_u[0] - golden).abs() < 1e-14);
        let (cs, cu) = e.coords(e.vector(0.3, -0.7));
        assert!((cs - 0.3).abs() < 1e-14 && (cu + 0.7).abs() < 1e-14);
    }

    #[test]
    fn apply_integer_examples() {
        let s = SkewProductSystem::new(cat(), vec![], 0.0).unwrap();
        assert_eq!(s.apply(&TorusPoint::new(0.0, 0.0, 0.3)).to_array(), [0.0, 0.0, 0.3]);
        assert_eq!(s.apply(&TorusPoint::new(0.5, 0.5, 0.0)).to_array(), [0.5, 0.0, 0.0]);
    }

    #[test]
    fn apply_nonlinear_by_hand() {
        let s = SkewProductSystem::new(
            cat(),
            vec![FiberTerm { freq: [1, 0], amplitude: 0.1 }],
            0.2,
        )
        .unwrap();
        // base (0.5, 0.25); φ(0.25, 0) = 0.1 sin(π/2) = 0.1; fiber 0 stays 0 under sin
        let q = s.apply(&TorusPoint::new(0.25, 0.0, 0.0));
        assert!((q.base[0] - 0.5).abs() < 1e-15);
        assert!((q.base[1] - 0.25).abs() < 1e-15);
        assert!((q.fiber - 0.1).abs() < 1e-15);
    }

    #[test]
    fn inverse_closed_form_when_linear_fiber() {
        let s = SkewProductSystem::new(cat(), vec![], 0.0).unwrap();
        let p = TorusPoint::new(0.1, 0.2, 0.3);
        let back = s.apply_inverse(&p).unwrap();
        assert!(s.apply(&back).distance(&p) < 1e-15);
    }

    #[test]
    fn differential_entries() {
        let s = SkewProductSystem::new(cat(), vec![], 0.2).unwrap();
        let d = s.differential(&TorusPoint::new(0.3, 0.4, 0.0));
        assert_eq!(d[(2, 2)], 1.2);
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(d[(0, 0)], 2.0);
    }

    #[test]
    fn serde_round_trip_through_config() {
        let s = SkewProductSystem::new(
            cat(),
            vec![FiberTerm { freq: [1, 2], amplitude: 0.05 }],
            0.1,
        )
        .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: SkewProductSystem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"matrix":[[1,1],[0,1]],"terms":[],"nonlinearity":0.0}"#;
        assert!(serde_json::from_str::<SkewProductSystem>(bad).is_err());
    }
}
