//! Small geometry helpers shared across the stack: angle normalization,
//! roll/pitch/yaw rotations and point-to-polyline distances.

use serde::{Deserialize, Serialize};

/// Normalize an angle to the half-open interval (-pi, pi].
pub fn normalize_angle(mut a: f64) -> f64 {
    use std::f64::consts::PI;
    if a.is_finite() {
        a = a.rem_euclid(2.0 * PI);
        if a > PI {
            a -= 2.0 * PI;
        }
    }
    a
}

/// A 6-DoF pose: position plus roll/pitch/yaw (Z-Y-X intrinsic convention,
/// world frame x-forward, y-left, z-up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { x, y, z, roll, pitch, yaw }
    }

    /// Rotation matrix R = Rz(yaw) * Ry(pitch) * Rx(roll), row-major.
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let (sr, cr) = self.roll.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    }

    /// Transform a point from the pose's local frame into the world frame.
    pub fn transform(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation();
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.x,
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.y,
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.z,
        ]
    }

    /// The world-frame unit normal of the pose's base plane (local +z axis).
    pub fn plane_normal(&self) -> [f64; 3] {
        let r = self.rotation();
        [r[0][2], r[1][2], r[2][2]]
    }

    /// Compose with a child pose expressed in this pose's frame:
    /// `self.compose(child)` maps the child's local frame to the world.
    pub fn compose(&self, child: &Pose) -> Pose {
        let a = self.rotation();
        let b = child.rotation();
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        let t = self.transform([child.x, child.y, child.z]);
        let (roll, pitch, yaw) = rotation_to_rpy(&m);
        Pose::new(t[0], t[1], t[2], roll, pitch, yaw)
    }
}

/// Extract (roll, pitch, yaw) from a Z-Y-X rotation matrix.
pub fn rotation_to_rpy(r: &[[f64; 3]; 3]) -> (f64, f64, f64) {
    let pitch = (-r[2][0]).clamp(-1.0, 1.0).asin();
    if r[2][0].abs() > 1.0 - 1e-12 {
        // Gimbal lock: yaw and roll are coupled; pin roll to zero.
        let yaw = (-r[0][1]).atan2(r[1][1]);
        (0.0, pitch, yaw)
    } else {
        let roll = r[2][1].atan2(r[2][2]);
        let yaw = r[1][0].atan2(r[0][0]);
        (roll, pitch, yaw)
    }
}

/// Squared Euclidean distance between two planar points.
pub fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Euclidean distance between two planar points.
pub fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    dist2(a, b).sqrt()
}

/// Distance from point `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((p.0 - a.0) * ab.0 + (p.1 - a.1) * ab.1) / len2;
    let t = t.clamp(0.0, 1.0);
    dist(p, (a.0 + t * ab.0, a.1 + t * ab.1))
}

/// Distance from point `p` to a polyline (minimum over its segments).
/// A single-point polyline degenerates to point distance; empty returns None.
pub fn point_polyline_distance(p: (f64, f64), polyline: &[(f64, f64)]) -> Option<f64> {
    match polyline.len() {
        0 => None,
        1 => Some(dist(p, polyline[0])),
        _ => Some(
            polyline
                .windows(2)
                .map(|w| point_segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min),
        ),
    }
}

/// Total length of a polyline.
pub fn polyline_length(polyline: &[(f64, f64)]) -> f64 {
    polyline.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// True iff segment `a`-`b` intersects the disk centered at `c` with radius `r`.
pub fn segment_intersects_disk(a: (f64, f64), b: (f64, f64), c: (f64, f64), r: f64) -> bool {
    point_segment_distance(c, a, b) <= r
}

/// True iff segment `a`-`b` intersects the axis-aligned rectangle
/// [x0,x1] x [y0,y1] (closed).
pub fn segment_intersects_rect(a: (f64, f64), b: (f64, f64), rect: (f64, f64, f64, f64)) -> bool {
    let (x0, y0, x1, y1) = rect;
    let inside = |p: (f64, f64)| p.0 >= x0 && p.0 <= x1 && p.1 >= y0 && p.1 <= y1;
    if inside(a) || inside(b) {
        return true;
    }
    // Liang-Barsky clip of the segment against the rectangle.
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.0 - x0),
        (dx, x1 - a.0),
        (-dy, a.1 - y0),
        (dy, y1 - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn normalize_wraps_into_half_open_interval() {
        assert_relative_eq!(normalize_angle(3.0 * PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(0.3), 0.3);
        assert_relative_eq!(normalize_angle(-0.3), -0.3);
        assert_relative_eq!(normalize_angle(2.0 * PI), 0.0);
    }

    #[test]
    fn rotation_identity_for_zero_angles() {
        let p = Pose::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0);
        assert_eq!(p.transform([1.0, 0.0, 0.0]), [2.0, 2.0, 3.0]);
    }

    #[test]
    fn yaw_rotates_forward_axis() {
        let p = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, PI / 2.0);
        let q = p.transform([1.0, 0.0, 0.0]);
        assert_relative_eq!(q[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(q[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pitch_tips_forward_axis_down() {
        // Positive pitch about +y (y-left convention) lowers the nose.
        let p = Pose::new(0.0, 0.0, 0.0, 0.0, 0.1, 0.0);
        let q = p.transform([1.0, 0.0, 0.0]);
        assert!(q[2] < 0.0);
        assert_relative_eq!(q[2], -(0.1f64.sin()), epsilon = 1e-12);
    }

    #[test]
    fn rpy_round_trips_through_rotation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let p = Pose::new(
                0.0,
                0.0,
                0.0,
                rng.random_range(-1.3..1.3),
                rng.random_range(-1.3..1.3),
                rng.random_range(-3.0..3.0),
            );
            let (roll, pitch, yaw) = rotation_to_rpy(&p.rotation());
            assert_relative_eq!(roll, p.roll, epsilon = 1e-9);
            assert_relative_eq!(pitch, p.pitch, epsilon = 1e-9);
            assert_relative_eq!(yaw, p.yaw, epsilon = 1e-9);
        }
    }

    #[test]
    fn compose_matches_sequential_transform() {
        let a = Pose::new(1.0, 2.0, 0.5, 0.1, -0.2, 0.8);
        let b = Pose::new(0.3, -0.1, 0.25, -0.05, 0.15, -1.1);
        let c = a.compose(&b);
        for p in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.2, -0.7, 0.4]] {
            let direct = c.transform(p);
            let chained = a.transform(b.transform(p));
            for k in 0..3 {
                assert_relative_eq!(direct[k], chained[k], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn point_segment_distance_cases() {
        // Off the middle of a segment.
        assert_relative_eq!(
            point_segment_distance((1.0, 1.0), (0.0, 0.0), (2.0, 0.0)),
            1.0
        );
        // Beyond an endpoint.
        assert_relative_eq!(
            point_segment_distance((3.0, 4.0), (0.0, 0.0), (0.0, 0.0)),
            5.0
        );
        // On the segment.
        assert_relative_eq!(
            point_segment_distance((0.5, 0.0), (0.0, 0.0), (1.0, 0.0)),
            0.0
        );
    }

    #[test]
    fn polyline_distance_is_min_over_segments() {
        let line = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)];
        assert_relative_eq!(
            point_polyline_distance((1.2, 0.5), &line).unwrap(),
            0.2,
            epsilon = 1e-12
        );
        assert!(point_polyline_distance((0.0, 0.0), &[]).is_none());
    }

    #[test]
    fn segment_rect_intersection() {
        let rect = (0.0, 0.0, 1.0, 1.0);
        assert!(segment_intersects_rect((-1.0, 0.5), (2.0, 0.5), rect));
        assert!(segment_intersects_rect((0.5, 0.5), (5.0, 5.0), rect));
        assert!(!segment_intersects_rect((-1.0, 2.0), (2.0, 2.0), rect));
        // Diagonal that clips a corner.
        assert!(segment_intersects_rect((-0.5, 0.5), (0.5, 1.5), rect));
        assert!(!segment_intersects_rect((-0.5, 1.2), (0.2, 1.9), rect));
    }
}
