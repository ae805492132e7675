//! File formats: environment, placement and target JSON, JSONL measurement and
//! estimate logs, heatmap CSV and scenario files. Parse errors name the file,
//! line and field.

mod locate;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use locate::{line_of, path_string, Seg};

use crate::error::{Error, Result};
use crate::eskf::{Estimate, InitialCovariance, Profile};
use crate::geometry::{Aabb, Environment, Obstacle, ObstacleKind, Pose, Quat, Vec3};
use crate::measurement::{first_unsorted, AnchorPlacement, ImuParams, MeasurementRecord, Pair, Payload, TdoaMode, TdoaParams};
use crate::placement::{Heatmap, TargetSet};
use crate::sim::{estimate_from_parts, Rates, Scenario, TrajectorySpec, DEFAULT_WARMUP};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Pretty JSON with a trailing newline. Non-finite numbers become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Deserialize with the failing field path and line in the error.
pub fn parse_json<T: DeserializeOwned>(text: &str, file: &Path) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::input(file, inner.line().max(1), if field == "." { "<root>".into() } else { field }, inner.to_string())
    })?;
    de.end()
        .map_err(|e| Error::input(file, e.line().max(1), "<root>", e.to_string()))?;
    Ok(value)
}

fn located(file: &Path, text: &str, path: &[Seg], message: impl Into<String>) -> Error {
    Error::input(file, line_of(text, path), path_string(path), message)
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

// ---- environment ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum KindJson {
    #[default]
    Object,
    Wall,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxJson {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleJson {
    min: [f64; 3],
    max: [f64; 3],
    #[serde(default, skip_serializing_if = "is_object")]
    kind: KindJson,
}

fn is_object(k: &KindJson) -> bool {
    *k == KindJson::Object
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentJson {
    name: String,
    boundary: BoxJson,
    #[serde(default)]
    obstacles: Vec<ObstacleJson>,
}

pub fn parse_environment(text: &str, file: &Path) -> Result<Environment> {
    let raw: EnvironmentJson = parse_json(text, file)?;
    let boundary = Aabb::new(vec3(raw.boundary.min), vec3(raw.boundary.max))
        .map_err(|e| located(file, text, &[Seg::Key("boundary")], e.to_string()))?;
    let mut obstacles = Vec::with_capacity(raw.obstacles.len());
    for (k, o) in raw.obstacles.iter().enumerate() {
        let path = [Seg::Key("obstacles"), Seg::Index(k)];
        let ob = match o.kind {
            KindJson::Object => Obstacle::new(vec3(o.min), vec3(o.max)),
            KindJson::Wall => Obstacle::wall(vec3(o.min), vec3(o.max)),
        }
        .map_err(|e| located(file, text, &path, e.to_string()))?;
        if !boundary.contains_box(&ob.bounds) {
            return Err(located(file, text, &path, "obstacle is not inside the boundary"));
        }
        obstacles.push(ob);
    }
    Environment::new(raw.name, boundary, obstacles)
}

pub fn environment_to_json(env: &Environment) -> String {
    to_json(&EnvironmentJson {
        name: env.name.clone(),
        boundary: BoxJson { min: arr3(&env.boundary.min), max: arr3(&env.boundary.max) },
        obstacles: env
            .obstacles
            .iter()
            .map(|o| ObstacleJson {
                min: arr3(&o.bounds.min),
                max: arr3(&o.bounds.max),
                kind: match o.kind {
                    ObstacleKind::Object => KindJson::Object,
                    ObstacleKind::Wall => KindJson::Wall,
                },
            })
            .collect(),
    })
}

pub fn read_environment(path: &Path) -> Result<Environment> {
    parse_environment(&read_text(path)?, path)
}

// ---- placement ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlacementJson {
    anchors: Vec<[f64; 3]>,
    pairs: Vec<[usize; 2]>,
    #[serde(default)]
    mode: TdoaMode,
}

/// Placement file; pair indices are one-based.
pub fn parse_placement(text: &str, file: &Path) -> Result<AnchorPlacement> {
    let raw: PlacementJson = parse_json(text, file)?;
    let m = raw.anchors.len();
    if m < 2 {
        return Err(located(file, text, &[Seg::Key("anchors")], format!("need at least 2 anchors, got {m}")));
    }
    for (k, a) in raw.anchors.iter().enumerate() {
        if !a.iter().all(|c| c.is_finite()) {
            return Err(located(file, text, &[Seg::Key("anchors"), Seg::Index(k)], "anchor is not finite"));
        }
    }
    let mut pairs = Vec::with_capacity(raw.pairs.len());
    for (k, &[i, j]) in raw.pairs.iter().enumerate() {
        let path = [Seg::Key("pairs"), Seg::Index(k)];
        if i == 0 || j == 0 || i > m || j > m {
            return Err(located(file, text, &path, format!("indices are one-based and must be in 1..={m}, got [{i}, {j}]")));
        }
        if i == j {
            return Err(located(file, text, &path, format!("pair [{i}, {j}] repeats an anchor")));
        }
        pairs.push(Pair::new(i - 1, j - 1));
    }
    if pairs.is_empty() {
        return Err(located(file, text, &[Seg::Key("pairs")], "pair list is empty"));
    }
    AnchorPlacement::new(raw.anchors.into_iter().map(vec3).collect(), pairs, raw.mode)
}

pub fn placement_to_json(p: &AnchorPlacement) -> String {
    to_json(&PlacementJson {
        anchors: p.anchors.iter().map(arr3).collect(),
        pairs: p.pairs.iter().map(|p| [p.i + 1, p.j + 1]).collect(),
        mode: p.mode,
    })
}

pub fn read_placement(path: &Path) -> Result<AnchorPlacement> {
    parse_placement(&read_text(path)?, path)
}

// ---- targets ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetsJson {
    points: Vec<[f64; 3]>,
}

/// Target file `{"points": [[x, y, z], ...]}`; checked against `env` if given.
pub fn parse_targets(text: &str, file: &Path, env: Option<&Environment>) -> Result<TargetSet> {
    let raw: TargetsJson = parse_json(text, file)?;
    if raw.points.is_empty() {
        return Err(located(file, text, &[Seg::Key("points")], "target set is empty"));
    }
    for (k, p) in raw.points.iter().enumerate() {
        let path = [Seg::Key("points"), Seg::Index(k)];
        if !p.iter().all(|c| c.is_finite()) {
            return Err(located(file, text, &path, "point is not finite"));
        }
        if let Some(env) = env {
            if !env.boundary.contains(&vec3(*p)) {
                return Err(located(file, text, &path, "point is outside the environment boundary"));
            }
        }
    }
    TargetSet::new(raw.points.into_iter().map(vec3).collect())
}

pub fn targets_to_json(t: &TargetSet) -> String {
    to_json(&TargetsJson { points: t.points.iter().map(arr3).collect() })
}

pub fn read_targets(path: &Path, env: Option<&Environment>) -> Result<TargetSet> {
    parse_targets(&read_text(path)?, path, env)
}

// ---- measurement log ----

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LogPayload {
    Imu { acc: [f64; 3], gyro: [f64; 3] },
    Tdoa { i: usize, j: usize, d: f64 },
    Gt { p: [f64; 3], q: [f64; 4], v: [f64; 3] },
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    t: f64,
    #[serde(flatten)]
    payload: LogPayload,
}

fn record_line(r: &MeasurementRecord) -> LogLine {
    let payload = match r.payload {
        Payload::Imu { acc, gyro } => LogPayload::Imu { acc: arr3(&acc), gyro: arr3(&gyro) },
        Payload::Tdoa { pair, d } => LogPayload::Tdoa { i: pair.i + 1, j: pair.j + 1, d },
        Payload::GroundTruth { pose, velocity } => {
            let q = pose.orientation.quaternion();
            LogPayload::Gt { p: arr3(&pose.position), q: [q.w, q.i, q.j, q.k], v: arr3(&velocity) }
        }
    };
    LogLine { t: r.t, payload }
}

/// JSONL, one record per line, keys in the order `t, type, ...`.
pub fn log_to_jsonl(records: &[MeasurementRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96);
    for r in records {
        out.push_str(&serde_json::to_string(&record_line(r)).expect("serializable"));
        out.push('\n');
    }
    out
}

fn quat_from_wxyz(q: [f64; 4]) -> std::result::Result<Quat, String> {
    let raw = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    let n = raw.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(format!("quaternion norm is {n}, expected 1"));
    }
    Ok(Quat::new_normalize(raw))
}

/// Parse a JSONL measurement log. Blank lines are skipped. With
/// `anchor_count`, TDOA indices are checked against it. The log must be
/// sorted by time.
pub fn parse_log(text: &str, file: &Path, anchor_count: Option<usize>) -> Result<Vec<MeasurementRecord>> {
    let mut out = Vec::new();
    let mut lines = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(line);
        let raw: LogLine = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            Error::input(file, lineno, if field == "." { "<record>".into() } else { field }, e.into_inner().to_string())
        })?;
        if !raw.t.is_finite() {
            return Err(Error::input(file, lineno, "t", "timestamp is not finite"));
        }
        let bad = |field: &str, msg: String| Error::input(file, lineno, field, msg);
        let payload = match raw.payload {
            LogPayload::Imu { acc, gyro } => {
                if !acc.iter().chain(gyro.iter()).all(|c| c.is_finite()) {
                    return Err(bad("acc", "IMU values must be finite".into()));
                }
                Payload::Imu { acc: vec3(acc), gyro: vec3(gyro) }
            }
            LogPayload::Tdoa { i, j, d } => {
                if i == 0 || j == 0 || i == j {
                    return Err(bad("i", format!("invalid one-based pair [{i}, {j}]")));
                }
                if let Some(m) = anchor_count {
                    if i > m || j > m {
                        return Err(bad(if i > m { "i" } else { "j" }, format!("anchor index out of range 1..={m}")));
                    }
                }
                if !d.is_finite() {
                    return Err(bad("d", "TDOA must be finite".into()));
                }
                Payload::Tdoa { pair: Pair::new(i - 1, j - 1), d }
            }
            LogPayload::Gt { p, q, v } => {
                let q = quat_from_wxyz(q).map_err(|m| bad("q", m))?;
                Payload::GroundTruth { pose: Pose::new(vec3(p), q), velocity: vec3(v) }
            }
        };
        out.push(MeasurementRecord { t: raw.t, payload });
        lines.push(lineno);
    }
    if let Some(k) = first_unsorted(&out) {
        return Err(Error::input(
            file,
            lines[k],
            "t",
            format!("log is not sorted by time: {} follows {}", out[k].t, out[k - 1].t),
        ));
    }
    Ok(out)
}

pub fn read_log(path: &Path, anchor_count: Option<usize>) -> Result<Vec<MeasurementRecord>> {
    parse_log(&read_text(path)?, path, anchor_count)
}

// ---- estimates ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateLine {
    t: f64,
    p: [f64; 3],
    q: [f64; 4],
    v: [f64; 3],
    #[serde(rename = "P_diag")]
    p_diag: [f64; 15],
}

pub fn estimates_to_jsonl(est: &[Estimate]) -> String {
    let mut out = String::with_capacity(est.len() * 256);
    for e in est {
        let q = e.q.quaternion();
        let line = EstimateLine { t: e.t, p: arr3(&e.p), q: [q.w, q.i, q.j, q.k], v: arr3(&e.v), p_diag: e.p_diag };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Estimates read back from JSONL carry only the covariance diagonal.
pub fn parse_estimates(text: &str, file: &Path) -> Result<Vec<Estimate>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(line);
        let raw: EstimateLine = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            Error::input(file, k + 1, field, e.into_inner().to_string())
        })?;
        let q = quat_from_wxyz(raw.q).map_err(|m| Error::input(file, k + 1, "q", m))?;
        if let Some(prev) = out.last().map(|e: &Estimate| e.t) {
            if raw.t < prev {
                return Err(Error::input(file, k + 1, "t", "estimates are not sorted by time"));
            }
        }
        out.push(estimate_from_parts(raw.t, vec3(raw.p), q, vec3(raw.v), raw.p_diag));
    }
    Ok(out)
}

pub fn read_estimates(path: &Path) -> Result<Vec<Estimate>> {
    parse_estimates(&read_text(path)?, path)
}

// ---- heatmap ----

pub fn heatmap_to_csv(h: &Heatmap) -> String {
    let mut out = String::from("x,y,rmse_lb\n");
    for c in &h.cells {
        let _ = writeln!(out, "{},{},{}", c.x, c.y, c.rmse_lb);
    }
    out
}

/// `(x, y, rmse_lb)` rows of a heatmap CSV.
pub fn parse_heatmap_csv(text: &str, file: &Path) -> Result<Vec<[f64; 3]>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "x,y,rmse_lb")) => {}
        _ => return Err(Error::input(file, 1, "header", "expected 'x,y,rmse_lb'")),
    }
    let names = ["x", "y", "rmse_lb"];
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::input(file, k + 1, "row", format!("expected 3 columns, got {}", cols.len())));
            }
            let mut row = [0.0; 3];
            for c in 0..3 {
                row[c] = cols[c]
                    .trim()
                    .parse()
                    .map_err(|_| Error::input(file, k + 1, names[c], format!("'{}' is not a number", cols[c])))?;
            }
            Ok(row)
        })
        .collect()
}

// ---- scenario ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioJson {
    name: String,
    /// Relative to the scenario file.
    environment: PathBuf,
    placement: PathBuf,
    trajectory: TrajectorySpec,
    #[serde(default)]
    imu: ImuParams,
    #[serde(default)]
    tdoa: Option<TdoaParams>,
    #[serde(default)]
    rates: Rates,
    #[serde(default)]
    seed: u64,
    profile: Profile,
    #[serde(default)]
    lever_arm: [f64; 3],
    #[serde(default)]
    initial_covariance: InitialCovariance,
    #[serde(default = "default_warmup")]
    warmup: f64,
}

fn default_warmup() -> f64 {
    DEFAULT_WARMUP
}

/// Scenario file; environment and placement paths are resolved relative to
/// the scenario's directory.
pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = read_text(path)?;
    let raw: ScenarioJson = parse_json(&text, path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let env = read_environment(&dir.join(&raw.environment))?;
    let placement = read_placement(&dir.join(&raw.placement))?;
    let field_err = |field: &str, e: Error| located(path, &text, &[Seg::Key(field)], e.to_string());
    for (field, ok) in [
        ("rates", raw.rates.imu > 0.0 && raw.rates.tdoa > 0.0 && raw.rates.gt > 0.0),
        ("warmup", raw.warmup >= 0.0),
    ] {
        if !ok {
            return Err(located(path, &text, &[Seg::Key(field)], "must be positive"));
        }
    }
    raw.imu.validate().map_err(|e| field_err("imu", e))?;
    let tdoa = raw.tdoa.unwrap_or_else(|| raw.profile.tdoa_params());
    tdoa.validate().map_err(|e| field_err("tdoa", e))?;
    crate::sim::gen_trajectory(&raw.trajectory, Some(&env.boundary)).map_err(|e| field_err("trajectory", e))?;
    Ok(Scenario {
        name: raw.name,
        env,
        placement,
        trajectory: raw.trajectory,
        imu: raw.imu,
        tdoa,
        rates: raw.rates,
        seed: raw.seed,
        profile: raw.profile,
        lever_arm: vec3(raw.lever_arm),
        initial: raw.initial_covariance,
        warmup: raw.warmup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    fn p() -> PathBuf {
        PathBuf::from("test.json")
    }

    #[test]
    fn environment_round_trip_and_errors() {
        let text = r#"{
  "name": "room",
  "boundary": {"min": [0, 0, 0], "max": [5, 4, 3]},
  "obstacles": [
    {"min": [1, 1, 0], "max": [2, 2, 1]},
    {"min": [3, 0, 0], "max": [3.2, 4, 3], "kind": "wall"}
  ]
}"#;
        let env = parse_environment(text, &p()).unwrap();
        assert_eq!(env.obstacles.len(), 2);
        assert_eq!(env.obstacles[1].kind, ObstacleKind::Wall);
        assert_eq!(parse_environment(&environment_to_json(&env), &p()).unwrap(), env);

        let bad = text.replace("[3.2, 4, 3]", "[3.2, 4, 9]");
        match parse_environment(&bad, &p()) {
            Err(Error::Input { line, field, .. }) => assert_eq!((line, field.as_str()), (6, "obstacles[1]")),
            other => panic!("{other:?}"),
        }
        let typo = text.replace("\"max\": [2, 2, 1]", "\"max\": [2, \"x\", 1]");
        match parse_environment(&typo, &p()) {
            Err(Error::Input { line, field, .. }) => {
                assert_eq!(line, 5);
                assert!(field.starts_with("obstacles[0].max"), "{field}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn placement_is_one_based() {
        let text = r#"{"anchors": [[0,0,0],[1,0,0],[0,1,0]], "pairs": [[3,1],[1,2]], "mode": "decentralized"}"#;
        let pl = parse_placement(text, &p()).unwrap();
        assert_eq!(pl.pairs[0], Pair::new(2, 0));
        assert_eq!(pl.mode, TdoaMode::Decentralized);
        assert_eq!(parse_placement(&placement_to_json(&pl), &p()).unwrap(), pl);
        assert!(matches!(
            parse_placement(&text.replace("[3,1]", "[0,1]"), &p()),
            Err(Error::Input { .. })
        ));
    }

    #[test]
    fn log_round_trip_is_exact() {
        let q = Quat::from_euler_angles(0.1, -0.2, 0.3);
        let recs = vec![
            MeasurementRecord::imu(0.0, Vec3::new(0.1, 0.2, 9.81), Vec3::new(1e-3, -2e-3, 0.1 + 0.2)),
            MeasurementRecord::tdoa(0.005, Pair::new(7, 0), 1.0 / 3.0),
            MeasurementRecord::ground_truth(0.01, Pose::new(Vec3::new(1.0, 2.0, 3.0), q), Vec3::new(0.5, 0.0, 0.0)),
        ];
        let text = log_to_jsonl(&recs);
        assert!(text.starts_with("{\"t\":0.0,\"type\":\"imu\""), "{text}");
        assert!(text.contains("\"type\":\"tdoa\",\"i\":8,\"j\":1"));
        let back = parse_log(&text, &p(), Some(8)).unwrap();
        assert_eq!(&back[..2], &recs[..2]);
        let (Payload::GroundTruth { pose: a, .. }, Payload::GroundTruth { pose: b, .. }) = (back[2].payload, recs[2].payload) else {
            panic!()
        };
        assert!((a.orientation.coords - b.orientation.coords).norm() < 1e-15);
    }

    #[test]
    fn log_errors_name_line() {
        let text = "{\"t\":0.0,\"type\":\"imu\",\"acc\":[0,0,9.81],\"gyro\":[0,0,0]}\n\n{\"t\":1.0,\"type\":\"tdoa\",\"i\":1,\"j\":2,\"d\":0.5}\n{\"t\":0.5,\"type\":\"tdoa\",\"i\":1,\"j\":2,\"d\":0.5}\n";
        match parse_log(text, &p(), None) {
            Err(Error::Input { line, field, .. }) => assert_eq!((line, field.as_str()), (4, "t")),
            other => panic!("{other:?}"),
        }
        match parse_log(&text.replace("\"j\":2,\"d\":0.5}\n{", "\"j\":9,\"d\":0.5}\n{"), &p(), Some(8)) {
            Err(Error::Input { line, field, .. }) => assert_eq!((line, field.as_str()), (3, "j")),
            other => panic!("{other:?}"),
        }
        match parse_log("{\"t\":0.0,\"type\":\"radar\"}\n", &p(), None) {
            Err(Error::Input { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heatmap_csv_round_trip() {
        use crate::placement::HeatCell;
        let h = Heatmap {
            height: 1.5,
            xs: vec![0.25, 0.75],
            ys: vec![0.25],
            cells: vec![HeatCell { x: 0.25, y: 0.25, rmse_lb: 0.1234567 }, HeatCell { x: 0.75, y: 0.25, rmse_lb: f64::INFINITY }],
        };
        let csv = heatmap_to_csv(&h);
        assert!(csv.contains("0.75,0.25,inf"));
        let rows = parse_heatmap_csv(&csv, &p()).unwrap();
        assert_eq!(rows[0], [0.25, 0.25, 0.1234567]);
        assert!(rows[1][2].is_infinite());
    }
}
