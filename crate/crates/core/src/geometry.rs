//! 3D primitives shared by the placement analyzer, the sensor models and the
//! filter.
//!
//! Conventions: z-up inertial frame, Hamilton quaternions stored scalar-first,
//! and every orientation maps body-frame vectors into the inertial frame.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Rotation angles below this use the normalized first-order quaternion.
pub const SMALL_ANGLE_SWITCH: f64 = 1e-3;

const OVERLAP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    /// Body to inertial.
    pub orientation: Quat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn at(position: Vec3) -> Self {
        Self::new(position, Quat::identity())
    }

    /// Inertial-frame position of a point fixed in the body frame.
    pub fn transform_point(&self, body_point: &Vec3) -> Vec3 {
        rotate(&self.orientation, body_point) + self.position
    }
}

/// Quaternion for the rotation vector `delta_theta`.
///
/// Uses `(1, dtheta/2)` renormalized in the small-angle regime and the exact
/// exponential map above [`SMALL_ANGLE_SWITCH`].
pub fn quat_from_small_angle(delta_theta: &Vec3) -> Result<Quat> {
    if !delta_theta.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite rotation vector {delta_theta:?}"
        )));
    }
    let angle = delta_theta.norm();
    if angle <= SMALL_ANGLE_SWITCH {
        let h = 0.5 * delta_theta;
        Ok(Quat::from_quaternion(Quaternion::new(1.0, h.x, h.y, h.z)))
    } else {
        let axis = delta_theta / angle;
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(Quat::new_unchecked(Quaternion::new(
            c,
            s * axis.x,
            s * axis.y,
            s * axis.z,
        )))
    }
}

/// `C(q) v`.
pub fn rotate(q: &Quat, v: &Vec3) -> Vec3 {
    q.transform_vector(v)
}

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let finite = min.iter().chain(max.iter()).all(|c| c.is_finite());
        if !finite || (0..3).any(|k| min[k] >= max[k]) {
            return Err(Error::invalid(format!(
                "box corners must be finite with min < max component-wise, got min {:?} max {:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    /// Closed containment.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn contains_interior(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] > self.min[k] && p[k] < self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Parameter interval `(t0, t1)` of `a + t (b - a)`, `t` in `[0, 1]`, that
    /// lies in the open interior of the box. `None` when the segment only
    /// touches faces, edges or corners, or misses entirely.
    pub fn segment_interval(&self, a: &Vec3, b: &Vec3) -> Option<(f64, f64)> {
        let d = b - a;
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        for k in 0..3 {
            if d[k] == 0.0 {
                if a[k] <= self.min[k] || a[k] >= self.max[k] {
                    return None;
                }
            } else {
                let inv = 1.0 / d[k];
                let ta = (self.min[k] - a[k]) * inv;
                let tb = (self.max[k] - a[k]) * inv;
                let (enter, exit) = if ta < tb { (ta, tb) } else { (tb, ta) };
                lo = lo.max(enter);
                hi = hi.min(exit);
                if hi - lo <= OVERLAP_EPS {
                    return None;
                }
            }
        }
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObstacleKind {
    /// Furniture or appliances; blocks radio paths.
    #[default]
    Object,
    /// Structural element. Its faces are also mountable surfaces for anchors.
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub bounds: Aabb,
    pub kind: ObstacleKind,
}

impl Obstacle {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        Ok(Self {
            bounds: Aabb::new(min, max)?,
            kind: ObstacleKind::Object,
        })
    }

    pub fn wall(min: Vec3, max: Vec3) -> Result<Self> {
        Ok(Self {
            bounds: Aabb::new(min, max)?,
            kind: ObstacleKind::Wall,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub name: String,
    pub boundary: Aabb,
    pub obstacles: Vec<Obstacle>,
}

impl Environment {
    pub fn new(name: impl Into<String>, boundary: Aabb, obstacles: Vec<Obstacle>) -> Result<Self> {
        for (idx, obs) in obstacles.iter().enumerate() {
            if !boundary.contains_box(&obs.bounds) {
                return Err(Error::invalid(format!(
                    "obstacle {idx} is not inside the boundary"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            boundary,
            obstacles,
        })
    }

    /// Environment with no obstacles.
    pub fn open(name: impl Into<String>, boundary: Aabb) -> Self {
        Self {
            name: name.into(),
            boundary,
            obstacles: Vec::new(),
        }
    }

    pub fn in_obstacle(&self, p: &Vec3) -> bool {
        self.obstacles
            .iter()
            .any(|o| o.bounds.contains_interior(p))
    }

    /// Rigidly transformed copy (`x -> rot * x + shift`). Boxes stay
    /// axis-aligned, so `rot` must permute/flip axes for obstacles to be exact.
    pub fn transformed(&self, rot: &Mat3, shift: &Vec3) -> Result<Self> {
        let map_box = |b: &Aabb| -> Result<Aabb> {
            let p = rot * b.min + shift;
            let q = rot * b.max + shift;
            Aabb::new(p.inf(&q), p.sup(&q))
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| {
                Ok(Obstacle {
                    bounds: map_box(&o.bounds)?,
                    kind: o.kind,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Environment::new(self.name.clone(), map_box(&self.boundary)?, obstacles)
    }
}

/// True iff the open segment `(a, b)` passes through the interior of any
/// obstacle.
pub fn segment_occluded(a: &Vec3, b: &Vec3, env: &Environment) -> bool {
    env.obstacles
        .iter()
        .any(|o| o.bounds.segment_interval(a, b).is_some())
}

/// Total length of the segment inside obstacle interiors. Overlapping
/// obstacles are counted once.
pub fn penetration_length(a: &Vec3, b: &Vec3, env: &Environment) -> f64 {
    let mut spans: Vec<(f64, f64)> = env
        .obstacles
        .iter()
        .filter_map(|o| o.bounds.segment_interval(a, b))
        .collect();
    if spans.is_empty() {
        return 0.0;
    }
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut covered = 0.0;
    let (mut lo, mut hi) = spans[0];
    for &(s, e) in &spans[1..] {
        if s > hi {
            covered += hi - lo;
            lo = s;
            hi = e;
        } else {
            hi = hi.max(e);
        }
    }
    covered += hi - lo;
    covered * (b - a).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn unit_box_env() -> Environment {
        let boundary = Aabb::new(Vec3::new(-10.0, -10.0, -10.0), Vec3::new(10.0, 10.0, 10.0)).unwrap();
        let obs = Obstacle::new(Vec3::new(0.5, -1.0, -1.0), Vec3::new(1.5, 1.0, 1.0)).unwrap();
        Environment::new("box", boundary, vec![obs]).unwrap()
    }

    fn brute_force_penetration(a: &Vec3, b: &Vec3, env: &Environment, step: f64) -> f64 {
        let len = (b - a).norm();
        let n = (len / step).ceil() as usize;
        let ds = len / n as f64;
        (0..n)
            .filter(|&k| {
                let t = (k as f64 + 0.5) / n as f64;
                env.in_obstacle(&(a + t * (b - a)))
            })
            .count() as f64
            * ds
    }

    #[test]
    fn small_angle_examples() {
        let q = quat_from_small_angle(&Vec3::zeros()).unwrap();
        assert_eq!(q.quaternion().coords, Quat::identity().quaternion().coords);

        // First-order form differs from the exact map by |dtheta|^3/24 here.
        let q = quat_from_small_angle(&Vec3::new(0.02, 0.0, 0.0)).unwrap();
        let n = 1.0001_f64.sqrt();
        assert_relative_eq!(q.w, 1.0 / n, epsilon = 1e-6);
        assert_relative_eq!(q.i, 0.01 / n, epsilon = 1e-6);

        let q = quat_from_small_angle(&Vec3::new(FRAC_PI_2, 0.0, 0.0)).unwrap();
        assert_relative_eq!(q.w, FRAC_PI_4.cos(), epsilon = 1e-12);
        assert_relative_eq!(q.i, FRAC_PI_4.sin(), epsilon = 1e-12);
        assert_eq!((q.j, q.k), (0.0, 0.0));

        assert!(quat_from_small_angle(&Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn rotate_examples() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(rotate(&Quat::identity(), &v), v);
        let qz = Quat::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2);
        let r = rotate(&qz, &Vec3::x());
        assert_relative_eq!(r, Vec3::y(), epsilon = 1e-12);
        assert_eq!(rotate(&qz, &Vec3::zeros()), Vec3::zeros());
    }

    #[test]
    fn occlusion_examples() {
        let env = unit_box_env();
        let a = Vec3::zeros();
        let b = Vec3::new(2.0, 0.0, 0.0);
        assert!(segment_occluded(&a, &b, &env));
        assert!(!segment_occluded(&a, &b, &Environment::open("e", env.boundary)));

        let a2 = Vec3::new(0.0, 2.0, 0.0);
        let b2 = Vec3::new(2.0, 2.0, 0.0);
        assert!(!segment_occluded(&a2, &b2, &env));
        assert_eq!(brute_force_penetration(&a2, &b2, &env, 1e-4), 0.0);
        assert_eq!(penetration_length(&a2, &b2, &env), 0.0);

        assert_relative_eq!(penetration_length(&a, &b, &env), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn face_contact_is_not_occlusion() {
        let env = unit_box_env();
        // Runs along the y = 1 face.
        let a = Vec3::new(0.0, 1.0, 0.0);
        let b = Vec3::new(2.0, 1.0, 0.0);
        assert!(!segment_occluded(&a, &b, &env));
        // Ends exactly on the x = 0.5 face.
        let c = Vec3::new(0.5, 0.0, 0.0);
        assert!(!segment_occluded(&Vec3::new(-1.0, 0.0, 0.0), &c, &env));
        // Starts on a face and goes outward.
        assert!(!segment_occluded(&c, &Vec3::new(-3.0, 2.0, 0.0), &env));
        // Starts on a face and goes inward.
        assert!(segment_occluded(&c, &Vec3::new(1.0, 0.0, 0.0), &env));
    }

    #[test]
    fn two_boxes_penetration_matches_sampling() {
        let boundary = Aabb::new(Vec3::new(-1.0, -5.0, -5.0), Vec3::new(10.0, 5.0, 5.0)).unwrap();
        let obstacles = vec![
            Obstacle::new(Vec3::new(1.0, -1.0, -1.0), Vec3::new(2.0, 1.0, 1.0)).unwrap(),
            Obstacle::new(Vec3::new(4.0, -1.0, -1.0), Vec3::new(5.0, 1.0, 1.0)).unwrap(),
        ];
        let env = Environment::new("two", boundary, obstacles).unwrap();
        let a = Vec3::new(0.0, 0.3, -0.2);
        let b = Vec3::new(7.0, -0.4, 0.5);
        let exact = penetration_length(&a, &b, &env);
        let sampled = brute_force_penetration(&a, &b, &env, 1e-4);
        assert!((exact - sampled).abs() < 1e-3, "{exact} vs {sampled}");
        // Both chords are slightly longer than 1 m due to the slant.
        assert!(exact > 2.0 && exact < 2.1);
    }

    #[test]
    fn overlapping_obstacles_count_once() {
        let boundary = Aabb::new(Vec3::new(-5.0, -5.0, -5.0), Vec3::new(5.0, 5.0, 5.0)).unwrap();
        let obstacles = vec![
            Obstacle::new(Vec3::new(0.0, -1.0, -1.0), Vec3::new(2.0, 1.0, 1.0)).unwrap(),
            Obstacle::new(Vec3::new(1.0, -1.0, -1.0), Vec3::new(3.0, 1.0, 1.0)).unwrap(),
        ];
        let env = Environment::new("overlap", boundary, obstacles).unwrap();
        let len = penetration_length(&Vec3::new(-4.0, 0.0, 0.0), &Vec3::new(4.0, 0.0, 0.0), &env);
        assert_relative_eq!(len, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn environment_rejects_escaping_obstacle() {
        let boundary = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let obs = Obstacle::new(Vec3::new(0.5, 0.5, 0.5), Vec3::new(1.5, 0.9, 0.9)).unwrap();
        assert!(Environment::new("bad", boundary, vec![obs]).is_err());
        assert!(Aabb::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn skew_is_cross_product() {
        let a = Vec3::new(0.3, -1.2, 2.0);
        let b = Vec3::new(-0.7, 0.1, 0.4);
        assert_relative_eq!(skew(&a) * b, a.cross(&b), epsilon = 1e-15);
    }
}
