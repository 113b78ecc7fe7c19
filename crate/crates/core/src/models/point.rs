use serde::{Deserialize, Serialize};

use crate::numerics::{wrap_diff, wrap_unit};

/// A point of `T^3 = T^2 x S^1`, stored with every coordinate in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub base: [f64; 2],
    pub fiber: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64, fiber: f64) -> Self {
        Self {
            base: [wrap_unit(x), wrap_unit(y)],
            fiber: wrap_unit(fiber),
        }
    }

    pub fn from_array(c: [f64; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.base[0], self.base[1], self.fiber]
    }

    /// Coordinate-wise difference `other - self`, each entry reduced to `[-1/2, 1/2]`.
    pub fn delta_to(&self, other: &TorusPoint) -> [f64; 3] {
        [
            wrap_diff(other.base[0] - self.base[0]),
            wrap_diff(other.base[1] - self.base[1]),
            wrap_diff(other.fiber - self.fiber),
        ]
    }

    /// Flat quotient distance.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let d = self.delta_to(other);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    /// Distance between the base projections only.
    pub fn base_distance(&self, other: &TorusPoint) -> f64 {
        let d = self.delta_to(other);
        d[0].hypot(d[1])
    }

    /// Translate by a tangent vector and renormalize.
    pub fn shifted(&self, v: [f64; 3]) -> TorusPoint {
        TorusPoint::new(self.base[0] + v[0], self.base[1] + v[1], self.fiber + v[2])
    }

    /// Bitwise equality of the normalized coordinates.
    pub fn same_bits(&self, other: &TorusPoint) -> bool {
        self.base[0].to_bits() == other.base[0].to_bits()
            && self.base[1].to_bits() == other.base[1].to_bits()
            && self.fiber.to_bits() == other.fiber.to_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_into_unit_cube() {
        let p = TorusPoint::new(1.25, -0.25, 3.0);
        assert_eq!(p.to_array(), [0.25, 0.75, 0.0]);
    }

    #[test]
    fn distance_uses_shortest_representative() {
        let a = TorusPoint::new(0.95, 0.0, 0.0);
        let b = TorusPoint::new(0.05, 0.0, 0.0);
        assert!((a.distance(&b) - 0.1).abs() < 1e-15);
        let c = TorusPoint::new(0.5, 0.5, 0.5);
        let o = TorusPoint::new(0.0, 0.0, 0.0);
        assert!((o.distance(&c) - 0.75f64.sqrt()).abs() < 1e-15);
    }
}
