use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fofkit::fof::{read_csej, read_fof, read_occupancy, voxelize_intervals, write_fof};
use fofkit::geometry::shapes::{box_mesh, icosphere};
use fofkit::geometry::{load_mesh, normalize_mesh, raycast_intervals, save_mesh};
use fofkit::joints::SMPL_JOINT_NAMES;
use fofkit::meshing::grid_iou;
use fofkit::Mesh;

fn fofkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fofkit"))
        .args(args)
        .env_remove("FOFKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_mesh(dir: &Path, name: &str, mesh: &Mesh) -> PathBuf {
    let path = dir.join(name);
    save_mesh(mesh, &path).unwrap();
    path
}

fn header(path: &Path) -> [u32; 4] {
    let bytes = fs::read(path).unwrap();
    assert_eq!(&bytes[..4], b"FOF1");
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    [word(0), word(1), word(2), word(3)]
}

#[test]
fn encode_writes_default_header_and_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cube = write_mesh(
        dir.path(),
        "cube.obj",
        &box_mesh([2.0, 0.0, -1.0], [0.5, 1.0, 0.25]),
    );
    let out = dir.path().join("cube.fof");
    let run = fofkit(&["encode", s(&cube), "-o", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(header(&out), [512, 512, 32, 0]);
    assert!(String::from_utf8_lossy(&run.stderr).contains("parity: 0 of"));
    let frame = fs::read_to_string(dir.path().join("cube.fof.frame.json")).unwrap();
    assert!(frame.contains("scale"));

    let run = fofkit(&[
        "encode",
        s(&cube),
        "-o",
        s(&out),
        "--channels",
        "8",
        "--resolution",
        "64",
    ]);
    assert_eq!(code(&run), 0);
    assert_eq!(header(&out), [64, 64, 8, 0]);
}

#[test]
fn open_mesh_is_a_geometry_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut open = box_mesh([0.0; 3], [0.5; 3]);
    // Dropping two triangles leaves a square hole.
    open.triangles.truncate(open.triangles.len() - 2);
    let path = write_mesh(dir.path(), "open.obj", &open);
    let run = fofkit(&[
        "encode",
        s(&path),
        "-o",
        s(&dir.path().join("x.fof")),
        "--resolution",
        "64",
    ]);
    assert_eq!(code(&run), 2, "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn missing_input_is_an_io_error_and_bad_flags_are_usage_errors() {
    let run = fofkit(&["encode", "/nonexistent/a.obj", "-o", "/tmp/a.fof"]);
    assert_eq!(code(&run), 1);
    assert_eq!(code(&fofkit(&["encode", "--bogus"])), 3);
    assert_eq!(code(&fofkit(&["--help"])), 0);
    let run = Command::new(env!("CARGO_BIN_EXE_fofkit"))
        .args(["selftest"])
        .env("FOFKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&run), 3);
}

#[test]
fn decode_round_trip_matches_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let sphere = icosphere([0.3, -0.2, 0.1], 1.7, 5);
    let input = write_mesh(dir.path(), "sphere.ply", &sphere);
    let fof = dir.path().join("sphere.fof");
    let mesh_out = dir.path().join("decoded.obj");
    assert_eq!(
        code(&fofkit(&[
            "encode",
            s(&input),
            "-o",
            s(&fof),
            "--resolution",
            "128"
        ])),
        0
    );
    let run = fofkit(&["decode", s(&fof), "-o", s(&mesh_out), "--depth", "128"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    // Decoded mesh is back in the raw frame; compare in the input's frame.
    let (decoded, _) = load_mesh(&mesh_out).unwrap();
    let (ni, frame) = normalize_mesh(&sphere, 0.05).unwrap();
    let nd = fofkit::geometry::apply_frame(&decoded, &frame);
    let n = 128;
    let a = voxelize_intervals(&raycast_intervals(&ni, n, n).unwrap(), n).unwrap();
    let b = voxelize_intervals(&raycast_intervals(&nd, n, n).unwrap(), n).unwrap();
    let iou = grid_iou(&a, &b, 0.5).unwrap();
    assert!(iou >= 0.97, "IoU {iou}");
}

#[test]
fn truncated_and_empty_grids() {
    let dir = tempfile::tempdir().unwrap();
    let zero = fofkit::FofGrid::zeros(8, 8, 4).unwrap();
    let path = dir.path().join("zero.fof");
    write_fof(&mut fs::File::create(&path).unwrap(), &zero).unwrap();
    let out = dir.path().join("zero.obj");
    let run = fofkit(&["decode", s(&path), "-o", s(&out), "--depth", "8"]);
    assert_eq!(code(&run), 0);
    assert!(String::from_utf8_lossy(&run.stderr).contains("empty mesh"));

    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let run = fofkit(&["decode", s(&path), "-o", s(&out)]);
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
}

fn joints_json(skip: Option<&str>) -> String {
    let entries: Vec<String> = SMPL_JOINT_NAMES
        .iter()
        .enumerate()
        .filter(|(_, name)| Some(**name) != skip)
        .map(|(k, name)| {
            let t = k as f64 / 23.0;
            format!(
                r#"{{"name": "{name}", "p": [{}, {}, 0.1]}}"#,
                t - 0.5,
                0.6 - t
            )
        })
        .collect();
    format!(
        r#"{{"frame": "normalized", "joints": [{}]}}"#,
        entries.join(", ")
    )
}

#[test]
fn embed_joints_writes_one_block_per_joint() {
    let dir = tempfile::tempdir().unwrap();
    let joints = dir.path().join("joints.json");
    fs::write(&joints, joints_json(None)).unwrap();
    let out = dir.path().join("joints.csej");
    let cond = dir.path().join("cond.fof");
    let run = fofkit(&[
        "embed-joints",
        s(&joints),
        "-o",
        s(&out),
        "--resolution",
        "64",
        "--radius",
        "0.1",
        "--condition-out",
        s(&cond),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let (grid, header) = read_csej(&mut fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(grid.shape(), (64, 64, 192));
    assert_eq!(
        (header.joints, header.channels_per_joint, header.radius),
        (24, 8, 0.1)
    );
    assert_eq!(read_fof(&mut fs::File::open(&cond).unwrap()).unwrap(), grid);
    let blocks = fs::read_to_string(dir.path().join("cond.fof.blocks.json")).unwrap();
    assert!(blocks.contains("joint:pelvis"));

    fs::write(&joints, joints_json(Some("left_wrist"))).unwrap();
    let run = fofkit(&["embed-joints", s(&joints), "-o", s(&out), "--radius", "0.1"]);
    assert_eq!(code(&run), 3);
    assert!(String::from_utf8_lossy(&run.stderr).contains("left_wrist"));

    // No radius and no frame to convert the default from.
    fs::write(&joints, joints_json(None)).unwrap();
    assert_eq!(
        code(&fofkit(&["embed-joints", s(&joints), "-o", s(&out)])),
        3
    );
}

#[test]
fn recarve_without_views_reproduces_the_canonical_decode() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_mesh(dir.path(), "cube.obj", &box_mesh([0.0; 3], [0.6, 0.4, 0.5]));
    let occ = dir.path().join("occ.bin");
    let dump = dir.path().join("dump");
    let run = fofkit(&[
        "recarve",
        s(&input),
        "-o",
        s(&dir.path().join("out.obj")),
        "--depth",
        "48",
        "--views",
        "",
        "--occupancy-out",
        s(&occ),
        "--dump-dir",
        s(&dump),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let grid = read_occupancy(&mut fs::File::open(&occ).unwrap()).unwrap();
    let canonical = read_fof(&mut fs::File::open(dump.join("view_0.fof")).unwrap()).unwrap();
    assert_eq!(grid, fofkit::fof::fof_to_occupancy(&canonical, 48).unwrap());
    assert!(!dump.join("view_1.fof").exists());

    let run = fofkit(&[
        "recarve",
        s(&input),
        "-o",
        "/tmp/x.obj",
        "--views",
        "pi/2",
        "--weights",
        "0.5,0.4",
    ]);
    assert_eq!(code(&run), 3);
}

#[test]
fn recarve_talks_to_an_external_refiner() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_mesh(dir.path(), "cube.obj", &box_mesh([0.0; 3], [0.5; 3]));
    let exchange = dir.path().join("exchange");
    let refiner = format!("extern:{}", exchange.display());
    let responder = {
        let exchange = exchange.clone();
        std::thread::spawn(move || {
            let request = exchange.join("view_1.fof");
            for _ in 0..600 {
                if let Ok(grid) = fs::File::open(&request)
                    .map_err(|_| ())
                    .and_then(|mut f| read_fof(&mut f).map_err(|_| ()))
                {
                    let tmp = exchange.join("tmp");
                    write_fof(&mut fs::File::create(&tmp).unwrap(), &grid).unwrap();
                    fs::rename(&tmp, exchange.join("view_1.refined.fof")).unwrap();
                    return true;
                }
                std::thread::sleep(std::time::Duration::from_millis(50));
            }
            false
        })
    };
    let run = fofkit(&[
        "recarve",
        s(&input),
        "-o",
        s(&dir.path().join("out.obj")),
        "--depth",
        "32",
        "--views",
        "90deg",
        "--refiner",
        &refiner,
        "--extern-timeout",
        "30",
    ]);
    assert!(responder.join().unwrap());
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    // Nobody answers view 1 in a fresh directory.
    let silent = format!("extern:{}", dir.path().join("silent").display());
    let run = fofkit(&[
        "recarve",
        s(&input),
        "-o",
        "/tmp/x.obj",
        "--depth",
        "16",
        "--views",
        "pi",
        "--refiner",
        &silent,
        "--extern-timeout",
        "0.3",
    ]);
    assert_eq!(code(&run), 1);
}

#[test]
fn render_writes_one_png_per_view() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_mesh(dir.path(), "s.obj", &icosphere([0.0; 3], 1.0, 2));
    let out = dir.path().join("views");
    let run = fofkit(&["render", s(&input), "-o", s(&out), "--size", "32"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for k in 0..18 {
        assert!(out.join(format!("view_{k:03}.png")).exists());
    }
    assert_eq!(
        code(&fofkit(&[
            "render",
            s(&input),
            "-o",
            s(&out),
            "--views",
            "7"
        ])),
        3
    );
}

#[test]
fn metrics_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_mesh(dir.path(), "a.obj", &icosphere([0.0; 3], 1.0, 3));
    let run = fofkit(&["metrics", s(&a), s(&a), "--samples", "5000", "--grid", "64"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(report["kind"], "mesh");
    assert_eq!(report["iou"], 1.0);
    assert!(report["chamfer"].as_f64().unwrap() < 1e-4);

    let fa = dir.path().join("a.fof");
    let fb = dir.path().join("b.fof");
    assert_eq!(
        code(&fofkit(&[
            "encode",
            s(&a),
            "-o",
            s(&fa),
            "--resolution",
            "32"
        ])),
        0
    );
    assert_eq!(
        code(&fofkit(&[
            "encode",
            s(&a),
            "-o",
            s(&fb),
            "--resolution",
            "32"
        ])),
        0
    );
    let run = fofkit(&["metrics", s(&fa), s(&fb), "--depth", "32"]);
    let report: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(
        (report["kind"].as_str(), report["hf_mse"].as_f64()),
        (Some("fof"), Some(0.0))
    );

    assert_eq!(
        code(&fofkit(&[
            "encode",
            s(&a),
            "-o",
            s(&fb),
            "--resolution",
            "16"
        ])),
        0
    );
    assert_eq!(code(&fofkit(&["metrics", s(&fa), s(&fb)])), 3);
    assert_eq!(code(&fofkit(&["metrics", s(&fa), s(&a)])), 3);
}

#[test]
fn config_file_round_trips_and_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let dumped = fofkit(&["config"]);
    assert_eq!(code(&dumped), 0);
    let path = dir.path().join("pipeline.toml");
    fs::write(&path, &dumped.stdout).unwrap();
    let again = fofkit(&["--config", s(&path), "config"]);
    assert_eq!(again.stdout, dumped.stdout);

    fs::write(&path, "resolution = 40\nchannels = 6\n").unwrap();
    let cube = write_mesh(dir.path(), "c.obj", &box_mesh([0.0; 3], [0.5; 3]));
    let out = dir.path().join("c.fof");
    assert_eq!(
        code(&fofkit(&[
            "--config",
            s(&path),
            "encode",
            s(&cube),
            "-o",
            s(&out)
        ])),
        0
    );
    assert_eq!(header(&out), [40, 40, 6, 0]);

    fs::write(&path, "resolution = \"big\"\n").unwrap();
    assert_eq!(code(&fofkit(&["--config", s(&path), "config"])), 3);
}

#[test]
fn selftest_passes() {
    let run = fofkit(&["selftest"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stdout));
}
