use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Pose, Quat, Vec3};
use crate::kinematics::{KinematicSample, Trajectory};

/// Smooth parametric curve `c(u)`, `u` in `[0, domain]`, with first and
/// second derivatives.
trait Curve: Send + Sync {
    fn domain(&self) -> f64;
    fn eval(&self, u: f64) -> [Vec3; 3];
    /// Points where the curve may lose smoothness beyond C2; the arc-length
    /// table keeps them as nodes.
    fn breakpoints(&self) -> Vec<f64>;
}

/// Natural cubic spline through waypoints, chord-length parameterized.
struct CubicSpline {
    knots: Vec<f64>,
    points: Vec<Vec3>,
    /// Second derivatives at the knots.
    m: Vec<Vec3>,
}

impl CubicSpline {
    fn new(points: &[Vec3]) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::invalid("at least two waypoints are required"));
        }
        let mut knots = vec![0.0];
        for w in points.windows(2) {
            let chord = (w[1] - w[0]).norm();
            if !(chord > 1e-9) {
                return Err(Error::invalid("consecutive waypoints coincide"));
            }
            knots.push(knots.last().unwrap() + chord);
        }
        // Tridiagonal system for interior second derivatives; natural ends.
        let mut m = vec![Vec3::zeros(); n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![Vec3::zeros(); k];
            for r in 0..k {
                let i = r + 1;
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                diag[r] = 2.0 * (h0 + h1);
                upper[r] = h1;
                rhs[r] = 6.0 * ((points[i + 1] - points[i]) / h1 - (points[i] - points[i - 1]) / h0);
            }
            // Thomas algorithm; the lower diagonal equals the previous upper one.
            for r in 1..k {
                let lower = knots[r + 1] - knots[r];
                let f = lower / diag[r - 1];
                diag[r] -= f * upper[r - 1];
                rhs[r] = rhs[r] - rhs[r - 1] * f;
            }
            let mut sol = vec![Vec3::zeros(); k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for r in (0..k - 1).rev() {
                sol[r] = (rhs[r] - sol[r + 1] * upper[r]) / diag[r];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self {
            knots,
            points: points.to_vec(),
            m,
        })
    }
}

impl Curve for CubicSpline {
    fn domain(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn eval(&self, u: f64) -> [Vec3; 3] {
        let u = u.clamp(0.0, self.domain());
        let seg = self.knots.partition_point(|&k| k <= u).clamp(1, self.knots.len() - 1) - 1;
        let (u0, u1) = (self.knots[seg], self.knots[seg + 1]);
        let h = u1 - u0;
        let (a, b) = ((u1 - u) / h, (u - u0) / h);
        let (p0, p1, m0, m1) = (self.points[seg], self.points[seg + 1], self.m[seg], self.m[seg + 1]);
        let pos = p0 * a + p1 * b + (m0 * (a * a * a - a) + m1 * (b * b * b - b)) * (h * h / 6.0);
        let vel = (p1 - p0) / h + (m1 * (3.0 * b * b - 1.0) - m0 * (3.0 * a * a - 1.0)) * (h / 6.0);
        let acc = m0 * a + m1 * b;
        [pos, vel, acc]
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots.clone()
    }
}

/// `center + amplitude * sin(2 pi cycles u + phase)` per axis, `u` in `[0, 1]`.
struct Lissajous {
    center: Vec3,
    amplitude: Vec3,
    cycles: Vec3,
    phase: Vec3,
}

impl Curve for Lissajous {
    fn domain(&self) -> f64 {
        1.0
    }

    #[allow(clippy::needless_range_loop)]
    fn eval(&self, u: f64) -> [Vec3; 3] {
        let tau = std::f64::consts::TAU;
        let mut out = [self.center, Vec3::zeros(), Vec3::zeros()];
        for k in 0..3 {
            let w = tau * self.cycles[k];
            let arg = w * u + self.phase[k];
            out[0][k] += self.amplitude[k] * arg.sin();
            out[1][k] = self.amplitude[k] * w * arg.cos();
            out[2][k] = -self.amplitude[k] * w * w * arg.sin();
        }
        out
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
}

/// Hold still, ramp up smoothly, then cruise at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedProfile {
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Initial stationary time, s.
    #[serde(default)]
    pub hold: f64,
    /// Acceleration time from rest to cruise speed, s.
    #[serde(default)]
    pub ramp: f64,
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        Self { speed, hold: 0.0, ramp: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::invalid(format!("speed must be > 0, got {}", self.speed)));
        }
        if !(self.hold >= 0.0 && self.ramp >= 0.0 && self.hold.is_finite() && self.ramp.is_finite()) {
            return Err(Error::invalid("hold and ramp must be finite and >= 0"));
        }
        Ok(())
    }

    fn ramp_distance(&self) -> f64 {
        0.5 * self.speed * self.ramp
    }

    fn duration(&self, length: f64) -> f64 {
        self.hold + self.ramp + (length - self.ramp_distance()) / self.speed
    }

    /// Arc length and its first two time derivatives.
    fn eval(&self, t: f64) -> [f64; 3] {
        let v = self.speed;
        let t = t - self.hold;
        if t <= 0.0 {
            return [0.0; 3];
        }
        if t < self.ramp {
            // quintic smoothstep on speed
            let x = t / self.ramp;
            let s = v * self.ramp * x.powi(4) * (x * x - 3.0 * x + 2.5);
            let sd = v * x.powi(3) * (6.0 * x * x - 15.0 * x + 10.0);
            let sdd = v / self.ramp * 30.0 * x * x * (x - 1.0).powi(2);
            return [s, sd, sdd];
        }
        [self.ramp_distance() + v * (t - self.ramp), v, 0.0]
    }
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];
const TABLE_SUBDIVISIONS: usize = 64;

/// Curve traversed by arc length under a speed profile, level attitude with
/// yaw along the path tangent.
pub struct PathTrajectory {
    curve: Box<dyn Curve>,
    /// `(u, s)` nodes of the arc-length table.
    table: Vec<(f64, f64)>,
    length: f64,
    profile: SpeedProfile,
    duration: f64,
}

impl std::fmt::Debug for PathTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PathTrajectory")
            .field("length", &self.length)
            .field("profile", &self.profile)
            .field("duration", &self.duration)
            .finish()
    }
}

impl PathTrajectory {
    fn new(curve: Box<dyn Curve>, profile: SpeedProfile) -> Result<Self> {
        profile.validate()?;
        let breaks = curve.breakpoints();
        let mut table = vec![(0.0, 0.0)];
        let mut min_speed = f64::INFINITY;
        let mut max_speed: f64 = 0.0;
        let mut min_horizontal = f64::INFINITY;
        for w in breaks.windows(2) {
            let h = (w[1] - w[0]) / TABLE_SUBDIVISIONS as f64;
            for k in 0..TABLE_SUBDIVISIONS {
                let a = w[0] + k as f64 * h;
                let b = if k + 1 == TABLE_SUBDIVISIONS { w[1] } else { a + h };
                let ds = gauss_legendre(&*curve, a, b);
                let s = table.last().unwrap().1 + ds;
                table.push((b, s));
                for x in [a, 0.5 * (a + b)] {
                    let d = curve.eval(x)[1];
                    let sp = d.norm();
                    min_speed = min_speed.min(sp);
                    min_horizontal = min_horizontal.min(d.xy().norm());
                    max_speed = max_speed.max(sp);
                }
            }
        }
        let length = table.last().unwrap().1;
        if length > 0.0 && !(min_speed > 1e-6 * max_speed) {
            return Err(Error::invalid("path has a cusp (zero tangent)"));
        }
        if length > 0.0 && !(min_horizontal > 1e-3 * max_speed) {
            return Err(Error::invalid("path turns vertical; heading along the path is undefined"));
        }
        if length > 0.0 && profile.ramp_distance() > length {
            return Err(Error::invalid(format!(
                "ramp needs {:.3} m but the path is {length:.3} m long",
                profile.ramp_distance()
            )));
        }
        let duration = if length > 0.0 { profile.duration(length) } else { profile.hold + profile.ramp };
        if !(duration > 0.0) {
            return Err(Error::invalid("trajectory has zero duration; set hold > 0 for a static path"));
        }
        Ok(Self {
            curve,
            table,
            length,
            profile,
            duration,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn profile(&self) -> &SpeedProfile {
        &self.profile
    }

    /// Curve parameter at arc length `s`.
    fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        let k = self.table.partition_point(|&(_, sk)| sk <= s).clamp(1, self.table.len() - 1) - 1;
        let (u0, s0) = self.table[k];
        let (u1, s1) = self.table[k + 1];
        if s1 <= s0 {
            return u0;
        }
        let mut u = u0 + (u1 - u0) * (s - s0) / (s1 - s0);
        for _ in 0..20 {
            let f = s0 + gauss_legendre(&*self.curve, u0, u) - s;
            let step = f / self.curve.eval(u)[1].norm();
            u = (u - step).clamp(u0, u1);
            if step.abs() < 1e-14 * (1.0 + u.abs()) {
                break;
            }
        }
        u
    }

    /// Position at every sample time `k * dt`; for boundary checks.
    pub fn positions(&self, dt: f64) -> Vec<Vec3> {
        let n = (self.duration / dt).floor() as usize;
        (0..=n).map(|k| self.sample(k as f64 * dt).pose.position).collect()
    }
}

fn gauss_legendre(curve: &dyn Curve, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(x, w)| w * curve.eval(mid + half * x)[1].norm())
        .sum::<f64>()
        * half
}

impl Trajectory for PathTrajectory {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn sample(&self, t: f64) -> KinematicSample {
        let [s, sd, sdd] = if self.length > 0.0 { self.profile.eval(t) } else { [0.0; 3] };
        let u = if self.length > 0.0 { self.param_at(s) } else { 0.0 };
        let [c, c1, c2] = self.curve.eval(u);
        let (velocity, acceleration, yaw, yaw_rate);
        let speed_u = c1.norm();
        if speed_u > 0.0 {
            let ud = sd / speed_u;
            let udd = sdd / speed_u - sd * c1.dot(&c2) * ud / speed_u.powi(3);
            velocity = c1 * ud;
            acceleration = c2 * (ud * ud) + c1 * udd;
            let horiz = c1.x * c1.x + c1.y * c1.y;
            yaw = c1.y.atan2(c1.x);
            yaw_rate = if horiz > 1e-12 { (c1.x * c2.y - c1.y * c2.x) / horiz * ud } else { 0.0 };
        } else {
            velocity = Vec3::zeros();
            acceleration = Vec3::zeros();
            yaw = 0.0;
            yaw_rate = 0.0;
        }
        KinematicSample {
            t,
            pose: Pose::new(c, Quat::from_euler_angles(0.0, 0.0, yaw)),
            velocity,
            acceleration,
            angular_rate: Vec3::new(0.0, 0.0, yaw_rate),
        }
    }
}

/// Trajectory description as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Waypoints {
        points: Vec<Vec3>,
        #[serde(flatten)]
        profile: SpeedProfile,
    },
    Lissajous {
        center: Vec3,
        amplitude: Vec3,
        /// Oscillations per traversal, per axis.
        cycles: Vec3,
        #[serde(default)]
        phase: Vec3,
        #[serde(flatten)]
        profile: SpeedProfile,
    },
    /// Zig-zag flights of stairs joined by landings, rounded by the spline.
    Stairs {
        start: Vec3,
        flights: usize,
        /// Height gained per flight, m.
        rise: f64,
        /// Horizontal length of a flight along x, m.
        run: f64,
        /// Landing depth beyond the flight end, m.
        landing: f64,
        /// Lateral (y) offset between consecutive flights, m.
        width: f64,
        #[serde(flatten)]
        profile: SpeedProfile,
    },
}

impl TrajectorySpec {
    pub fn profile(&self) -> &SpeedProfile {
        match self {
            TrajectorySpec::Waypoints { profile, .. }
            | TrajectorySpec::Lissajous { profile, .. }
            | TrajectorySpec::Stairs { profile, .. } => profile,
        }
    }
}

/// Waypoints of a stair path: each flight climbs along +x or -x, followed by
/// a landing that shifts sideways for the next flight.
pub fn stair_waypoints(start: Vec3, flights: usize, rise: f64, run: f64, landing: f64, width: f64) -> Result<Vec<Vec3>> {
    if flights == 0 || !(run > 0.0 && landing > 0.0) || !rise.is_finite() || !width.is_finite() {
        return Err(Error::invalid("stairs need flights >= 1, run > 0 and landing > 0"));
    }
    let mut pts = vec![start];
    let mut cur = start;
    for f in 0..flights {
        let dir = if f % 2 == 0 { 1.0 } else { -1.0 };
        cur += Vec3::new(dir * run, 0.0, rise);
        pts.push(cur);
        let turn = cur + Vec3::new(dir * landing, 0.5 * width, 0.0);
        pts.push(turn);
        cur += Vec3::new(0.0, width, 0.0);
        if f + 1 < flights {
            pts.push(cur);
        }
    }
    Ok(pts)
}

/// Build a trajectory and, when a boundary is given, check it stays inside.
pub fn gen_trajectory(spec: &TrajectorySpec, boundary: Option<&Aabb>) -> Result<PathTrajectory> {
    let traj = match spec {
        TrajectorySpec::Waypoints { points, profile } => {
            if let Some(k) = boundary.and_then(|b| points.iter().position(|p| !b.contains(p))) {
                return Err(Error::invalid(format!("waypoint {} is outside the boundary", k + 1)));
            }
            PathTrajectory::new(Box::new(CubicSpline::new(points)?), *profile)?
        }
        TrajectorySpec::Lissajous { center, amplitude, cycles, phase, profile } => {
            let all = [center, amplitude, cycles, phase];
            if !all.iter().all(|v| v.iter().all(|c| c.is_finite())) {
                return Err(Error::invalid("lissajous parameters must be finite"));
            }
            PathTrajectory::new(
                Box::new(Lissajous { center: *center, amplitude: *amplitude, cycles: *cycles, phase: *phase }),
                *profile,
            )?
        }
        TrajectorySpec::Stairs { start, flights, rise, run, landing, width, profile } => {
            let pts = stair_waypoints(*start, *flights, *rise, *run, *landing, *width)?;
            PathTrajectory::new(Box::new(CubicSpline::new(&pts)?), *profile)?
        }
    };
    if let Some(b) = boundary {
        if let Some(p) = traj.positions(0.05).iter().find(|p| !b.contains(p)) {
            return Err(Error::invalid(format!("trajectory leaves the boundary at {:?}", p.as_slice())));
        }
    }
    Ok(traj)
}
