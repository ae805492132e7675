use std::fs;

use tdoa_forge::io;
use tdoa_forge::Error;

const ENV: &str = r#"{
  "name": "room",
  "boundary": {"min": [0, 0, 0], "max": [6, 6, 4]}
}
"#;

const PLACEMENT: &str = r#"{
  "anchors": [[0, 0, 0.2], [6, 0, 3.8], [6, 6, 0.2], [0, 6, 3.8]],
  "pairs": [[4, 1], [1, 2], [2, 3], [3, 4]]
}
"#;

fn scenario(traj_z: f64) -> String {
    format!(
        r#"{{
  "name": "s",
  "environment": "../env.json",
  "placement": "../placement.json",
  "trajectory": {{
    "kind": "waypoints",
    "points": [[1, 1, 1], [5, 1, 1], [5, 5, {traj_z}]],
    "speed": 1.0
  }},
  "seed": 4,
  "profile": "staircase"
}}
"#
    )
}

#[test]
fn scenario_paths_are_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("env.json"), ENV).unwrap();
    fs::write(dir.path().join("placement.json"), PLACEMENT).unwrap();
    fs::create_dir(dir.path().join("sc")).unwrap();
    let path = dir.path().join("sc/s.json");
    fs::write(&path, scenario(1.5)).unwrap();
    let s = io::read_scenario(&path).unwrap();
    assert_eq!(s.placement.len(), 4);
    assert_eq!(s.seed, 4);
    // Radio model follows the profile when not given; the staircase inflation
    // is a filter setting, not a property of the radios.
    assert_eq!(s.tdoa.sigma, 0.1);
    assert!((s.eskf_config().variance_scheduled - 0.015).abs() < 1e-12);
    assert_eq!(s.warmup, 2.0);

    fs::write(&path, scenario(9.0)).unwrap();
    match io::read_scenario(&path) {
        Err(Error::Input { line, field, .. }) => assert_eq!((line, field.as_str()), (5, "trajectory")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_fields_and_types_name_the_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    fs::write(&path, PLACEMENT.replace("\"pairs\"", "\"pairz\"")).unwrap();
    let err = io::read_placement(&path).unwrap_err();
    assert!(matches!(err, Error::Input { line: 3, .. }), "{err}");
    assert!(err.to_string().contains("p.json:3"), "{err}");

    fs::write(&path, PLACEMENT.replace("[6, 0, 3.8]", "[6, \"0\", 3.8]")).unwrap();
    match io::read_placement(&path) {
        Err(Error::Input { line, field, .. }) => {
            assert_eq!(line, 2);
            assert!(field.starts_with("anchors[1]"), "{field}");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(io::read_placement(&dir.path().join("missing.json")), Err(Error::Io { .. })));
}

#[test]
fn estimates_round_trip() {
    use tdoa_forge::geometry::{Quat, Vec3};
    use tdoa_forge::sim::estimate_from_parts;
    let est: Vec<_> = (0..5)
        .map(|k| {
            let mut d = [0.0; 15];
            for (i, v) in d.iter_mut().enumerate() {
                *v = 0.1 / (i + k + 1) as f64;
            }
            estimate_from_parts(k as f64 * 0.005, Vec3::new(1.0 / 3.0, k as f64, -2.5), Quat::from_euler_angles(0.1, 0.2, k as f64), Vec3::new(0.3, 0.0, 1e-9), d)
        })
        .collect();
    let text = io::estimates_to_jsonl(&est);
    assert!(text.lines().next().unwrap().starts_with("{\"t\":0.0,\"p\":"));
    let back = io::parse_estimates(&text, std::path::Path::new("e.jsonl")).unwrap();
    for (a, b) in back.iter().zip(&est) {
        assert_eq!((a.t, a.p, a.v, a.p_diag), (b.t, b.p, b.v, b.p_diag));
        assert!(a.q.angle_to(&b.q) < 1e-12);
    }
    assert_eq!(io::estimates_to_jsonl(&back), text);
}
