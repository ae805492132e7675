use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Environment, ObstacleKind, Vec3};

/// Discrete set of admissible anchor positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSearchSpace {
    pub candidates: Vec<Vec3>,
    /// Minimum distance between any two anchors, m.
    pub min_separation: f64,
    /// Anchor indices that are never moved.
    pub fixed: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceGridOptions {
    pub resolution: f64,
    pub min_separation: f64,
    /// Allow candidates on the floor (lowest boundary face).
    pub include_floor: bool,
}

impl Default for SurfaceGridOptions {
    fn default() -> Self {
        Self {
            resolution: 0.25,
            min_separation: 0.5,
            include_floor: false,
        }
    }
}

fn face_samples(b: &Aabb, resolution: f64, out: &mut Vec<Vec3>) {
    let ext = b.extent();
    let counts: Vec<usize> = (0..3)
        .map(|k| ((ext[k] / resolution) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let coord = |k: usize, i: usize| -> f64 {
        if i == counts[k] {
            b.max[k]
        } else {
            b.min[k] + ext[k] * i as f64 / counts[k] as f64
        }
    };
    for normal in 0..3 {
        let (u, v) = ((normal + 1) % 3, (normal + 2) % 3);
        for side in [b.min[normal], b.max[normal]] {
            for iu in 0..=counts[u] {
                for iv in 0..=counts[v] {
                    let mut p = Vec3::zeros();
                    p[normal] = side;
                    p[u] = coord(u, iu);
                    p[v] = coord(v, iv);
                    out.push(p);
                }
            }
        }
    }
}

/// A surface point is mountable when free space lies next to it. Points on
/// a boundary face that is covered by a wall are not.
fn faces_free_space(env: &Environment, p: &Vec3) -> bool {
    const EPS: f64 = 1e-6;
    if !env.boundary.contains(p) || env.in_obstacle(p) {
        return false;
    }
    let steps = [-EPS, 0.0, EPS];
    steps.iter().any(|&dx| {
        steps.iter().any(|&dy| {
            steps.iter().any(|&dz| {
                let q = p + Vec3::new(dx, dy, dz);
                env.boundary.contains_interior(&q) && !env.obstacles.iter().any(|o| o.bounds.contains(&q))
            })
        })
    })
}

impl PlacementSearchSpace {
    pub fn new(candidates: Vec<Vec3>, min_separation: f64, fixed: Vec<usize>) -> Result<Self> {
        if candidates.iter().any(|c| !c.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("candidate positions must be finite"));
        }
        if !(min_separation >= 0.0) {
            return Err(Error::invalid("min_separation must be >= 0"));
        }
        Ok(Self {
            candidates,
            min_separation,
            fixed,
        })
    }

    /// Grid over the surfaces of the free space: boundary faces and the faces
    /// of wall obstacles, keeping points that are not inside any obstacle.
    pub fn surface_grid(env: &Environment, opts: SurfaceGridOptions) -> Result<Self> {
        if !(opts.resolution > 0.0) {
            return Err(Error::invalid(format!(
                "resolution must be > 0, got {}",
                opts.resolution
            )));
        }
        let mut raw = Vec::new();
        face_samples(&env.boundary, opts.resolution, &mut raw);
        for obs in env.obstacles.iter().filter(|o| o.kind == ObstacleKind::Wall) {
            face_samples(&obs.bounds, opts.resolution, &mut raw);
        }
        let floor = env.boundary.min.z;
        let mut seen = BTreeSet::new();
        let candidates = raw
            .into_iter()
            .filter(|p| faces_free_space(env, p))
            .filter(|p| opts.include_floor || p.z > floor + 1e-9)
            .filter(|p| {
                let key = (0..3).map(|k| (p[k] * 1e6).round() as i64).collect::<Vec<_>>();
                seen.insert(key)
            })
            .collect();
        Self::new(candidates, opts.min_separation, Vec::new())
    }

    pub fn is_fixed(&self, k: usize) -> bool {
        self.fixed.contains(&k)
    }

    /// Index of the candidate at `p`, if any.
    pub fn index_of(&self, p: &Vec3) -> Option<usize> {
        self.candidates.iter().position(|c| (c - p).norm() < 1e-9)
    }
}
