use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mbf_core::generate::load_latent;
use mbf_core::voxel::{load_voxel_grid, GridFormat};

fn mbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbf")).args(args).env_remove("MBF_THREADS").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mbf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbf(&["fit", "/nonexistent/x.vgrid", "--n", "2", "--output-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no such input"));
    let csv = dir.path().join("m.csv");
    assert_eq!(mbf(&["metrics", "/nonexistent.mball", "--output", p(&csv)]).status.code(), Some(2));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(mbf(&["fixture", "--kind", "cube", "--radius", "3", "--output", "x.vgrid"]).status.code(), Some(2));
    assert_eq!(mbf(&["fixture", "-k", "ball"]).status.code(), Some(2));
    assert_eq!(mbf(&["frobnicate"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_mbf"))
        .args(["metrics", "--output", "/tmp/never.csv"])
        .env("MBF_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_metrics_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    ok(&["metrics", "--output", p(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap(), "id,V,A,CSF,Dn,Ds,Dns,phi,C\n");
    let sidecar = fs::read_to_string(dir.path().join("m.csv.run.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
    assert_eq!(json["seed"], 0);
    assert_eq!(json["subcommand"], "metrics");
}

#[test]
fn fixtures_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["ball", "two_balls", "ellipsoid", "angular", "concave"] {
        let a = dir.path().join(format!("{kind}_a.vgrid"));
        let b = dir.path().join(format!("{kind}_b.vgrid"));
        for out in [&a, &b] {
            ok(&["fixture", "--kind", kind, "--radius", "6", "--seed", "3", "--output", p(out)]);
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{kind}");
    }
}

#[test]
fn ball_fixture_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ball.txt");
    ok(&["fixture", "--kind", "ball", "--radius", "5", "--dims", "16", "--output", p(&out)]);
    let g = load_voxel_grid(&out, GridFormat::SparseText).unwrap();
    assert_eq!(g.dims(), [16; 3]);
    let mut brute = 0;
    for z in 0..16 {
        for y in 0..16 {
            for x in 0..16 {
                let d2: f64 = [x, y, z].iter().map(|&c| (c as f64 - 7.5).powi(2)).sum();
                brute += usize::from(d2 <= 25.0);
            }
        }
    }
    assert_eq!(g.occupied_count(), brute);
}

#[test]
fn fit_mesh_and_metrics_on_a_ball() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("ball.vgrid");
    ok(&["fixture", "--kind", "ball", "--radius", "32", "--output", p(&grid)]);
    let fits = dir.path().join("fits");
    ok(&["fit", p(&grid), "--n", "1", "--output-dir", p(&fits)]);
    let summary = fs::read_to_string(fits.join("fit.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "ball");
    let iou: f64 = row[4].parse().unwrap();
    assert!(iou >= 0.95, "IoU {iou}");
    assert!(fits.join("ball.report.txt").is_file() && fits.join("run.json").is_file());

    let model = fits.join("ball.mball");
    let obj = dir.path().join("ball.obj");
    ok(&["mesh", p(&model), "--output", p(&obj)]);
    assert!(fs::read_to_string(&obj).unwrap().starts_with('v'));

    let csv = dir.path().join("m.csv");
    ok(&["metrics", p(&model), p(&grid), "--output", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    // CSF, Dns, phi and C of a ball are 1.
    for r in &rows {
        for i in [2, 5, 6, 7] {
            assert!((r[i] - 1.0).abs() < 0.03, "{text}");
        }
    }
}

#[test]
fn train_generate_and_edit() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let weights = d("w.mbvae");
    let tiny = [
        "--synthetic", "6", "--synthetic-points", "3", "--steps", "20", "--warmup", "10", "--rotations", "1",
        "--shuffles", "2", "--batch-size", "4", "--encoder", "16,8", "--latent", "4", "--decoder", "8,16",
    ];
    let log_path = d("log.csv");
    let mut args = vec!["train", "--seed", "5", "--output", p(&weights), "--log", p(&log_path)];
    args.extend(tiny);
    ok(&args);
    let log = fs::read_to_string(&log_path).unwrap();
    assert!(log.starts_with("step,beta,reconstruction,distribution\n"));
    assert_eq!(log.lines().count(), 21);
    let again = d("w2.mbvae");
    args[4] = p(&again);
    ok(&args);
    assert_eq!(fs::read(&weights).unwrap(), fs::read(&again).unwrap());

    let gen = d("gen");
    ok(&["generate", "--weights", p(&weights), "--count", "3", "--seed", "2", "--output-dir", p(&gen)]);
    let index = fs::read_to_string(gen.join("index.csv")).unwrap();
    assert!(index.starts_with("id,seed,edit_expression\ngen_0000,2,"));
    let (z1, z2) = (gen.join("gen_0000.latent"), gen.join("gen_0001.latent"));

    let interp = d("interp");
    ok(&["latent", "interp", "--weights", p(&weights), "--z1", p(&z1), "--z2", p(&z2), "--output-dir", p(&interp)]);
    for (i, z) in [(0, &z1), (4, &z2)] {
        let decoded = d(&format!("dec{i}.mball"));
        ok(&["latent", "decode", "--weights", p(&weights), "--input", p(z), "--output", p(&decoded)]);
        let endpoint = fs::read(interp.join(format!("interp_{i:02}.mball"))).unwrap();
        assert_eq!(endpoint, fs::read(&decoded).unwrap());
    }
    assert_eq!(fs::read(gen.join("gen_0000.mball")).unwrap(), fs::read(d("dec0.mball")).unwrap());

    let z3 = gen.join("gen_0002.latent");
    let sum = d("sum.latent");
    ok(&["latent", "add", "--z1", p(&z1), "--z2", p(&z2), "--minus", p(&z3), "--output", p(&sum)]);
    let (a, b, c, s) = (load_latent(&z1).unwrap(), load_latent(&z2).unwrap(), load_latent(&z3).unwrap(), load_latent(&sum).unwrap());
    for i in 0..a.len() {
        assert_eq!(s.values()[i], a.values()[i] + b.values()[i] - c.values()[i]);
    }
    let zero = d("zero.latent");
    ok(&["latent", "add", "--plus", p(&z1), "--minus", p(&z1), "--output", p(&zero)]);
    assert!(load_latent(&zero).unwrap().values().iter().all(|&v| v == 0.0));

    let same = d("same.latent");
    ok(&["latent", "perturb", "--input", p(&z1), "--sigma", "0", "--output", p(&same)]);
    assert_eq!(load_latent(&same).unwrap(), a);
    let moved = d("moved.latent");
    let model = d("moved.mball");
    ok(&[
        "latent", "perturb", "--input", p(&z1), "--sigma", "0.5", "--output", p(&moved), "--weights", p(&weights),
        "--decode-output", p(&model),
    ]);
    assert_ne!(load_latent(&moved).unwrap(), a);
    assert!(model.is_file());

    let enc = d("enc.latent");
    ok(&["latent", "encode", "--weights", p(&weights), "--input", p(&d("dec0.mball")), "--output", p(&enc)]);
    assert_eq!(load_latent(&enc).unwrap().len(), 4);
}
