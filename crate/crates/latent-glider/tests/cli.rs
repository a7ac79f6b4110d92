//! End-to-end runs of the command-line tool on a tiny corpus.

use std::path::Path;
use std::process::{Command, Output};

use latent_glider::formats::manifest::RunManifest;
use latent_glider::formats::population::read_snapshot;
use latent_glider::formats::tables::{read_latents, read_rows, GenerationRow, LossRow, TrajectoryRow};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-glider")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small enough to train in seconds on a 13³ lattice.
const TINY: &str = r#"{
    "resolution": 13,
    "mesh_cells": 24,
    "learner": {"channels": [4, 8, 8], "fc_width": 12, "global_dim": 4, "local_codes": 2, "local_dim": 3, "epochs": 3},
    "ga": {"population": 6, "generations": 2},
    "top_k": 3
}"#;

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["train"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["synth-corpus", "--count", "lots"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"resolutoin": 9}"#).unwrap();
    let o = run(&["--config", s(&cfg), "synth-corpus", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&run(&["--config", s(&dir.path().join("missing.json")), "synth-corpus"])), 1);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["preprocess", s(&dir.path().join("nowhere")), "--out", s(&out)])), 2);

    let junk = dir.path().join("junk.sdf");
    std::fs::write(&junk, b"SDF1 but not really").unwrap();
    assert_eq!(code(&run(&["simulate", s(&junk), "--out", s(&out)])), 2);

    let meshes = dir.path().join("meshes");
    std::fs::create_dir(&meshes).unwrap();
    std::fs::write(meshes.join("broken.obj"), "v 0 0 0\nf 1 2 3\n").unwrap();
    assert_eq!(code(&run(&["preprocess", s(&meshes), "--out", s(&out)])), 2);
}

#[test]
fn roundtrip_command_reports_a_closed_surface() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("cube.obj");
    let mesh = latent_glider_core::mesh::box_mesh(
        latent_glider_core::Vec3::splat(-0.3),
        latent_glider_core::Vec3::new(0.3, 0.2, 0.25),
    );
    latent_glider::formats::mesh::write_obj(&cube, &mesh).unwrap();
    let out = dir.path().join("rt");
    let o = run(&["roundtrip", s(&cube), "--resolution", "15", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("roundtrip.json")).unwrap()).unwrap();
    assert_eq!(m["boundary_edges"], 0);
    assert!(m["forward_max"].as_f64().unwrap() <= 1.5 * m["cell_diagonal"].as_f64().unwrap());
    assert!(RunManifest::read(&out.join("manifest.json")).unwrap().stale_artifacts(&out).is_empty());
}

#[test]
fn full_pipeline_on_a_tiny_corpus_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let cfg = d("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let c = s(&cfg);
    let ok = |args: &[&str]| {
        let o = run(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };

    ok(&["--config", c, "--seed", "5", "synth-corpus", "--count", "8", "--out", s(&d("meshes"))]);
    // one unreadable input must not sink the batch
    std::fs::write(d("meshes").join("zz_broken.obj"), "v 0 0 0\nf 1 9 3\n").unwrap();
    let o = ok(&["--config", c, "preprocess", s(&d("meshes")), "--out", s(&d("sdf"))]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("8 lattices written, 1 inputs skipped"));

    ok(&["--config", c, "--seed", "5", "train", s(&d("sdf")), "--out", s(&d("train"))]);
    let losses: Vec<LossRow> = read_rows(&d("train").join("loss.csv")).unwrap();
    assert_eq!(losses.len(), 3);
    let ck = d("train").join("checkpoint.vsl");

    ok(&["--config", c, "encode", "--checkpoint", s(&ck), s(&d("sdf")), "--out", s(&d("enc"))]);
    let latents = read_latents(&d("enc").join("latents.csv")).unwrap();
    assert_eq!(latents.len(), 8);
    assert_eq!(latents[0].1.len(), 4 + 2 * 3);

    ok(&["--config", c, "decode", "--checkpoint", s(&ck), s(&d("enc").join("latents.csv")), "--out", s(&d("dec"))]);
    assert!(d("dec").join("glider_0000.sdf").exists());

    ok(&["--config", c, "simulate", s(&d("meshes").join("glider_0000.obj")), "--out", s(&d("sim"))]);
    let traj: Vec<TrajectoryRow> = read_rows(&d("sim").join("trajectory.csv")).unwrap();
    assert!(traj.len() > 10);
    assert_eq!(traj[0].t, 0.0);

    let optimize = |out: &str| {
        ok(&["--config", c, "--seed", "5", "optimize", "--checkpoint", s(&ck), s(&d("sdf")), "--target", "3", "--out", s(&d(out))]);
    };
    optimize("opt_a");
    optimize("opt_b");
    let a = std::fs::read(d("opt_a").join("generations.csv")).unwrap();
    let b = std::fs::read(d("opt_b").join("generations.csv")).unwrap();
    assert_eq!(a, b, "same seed, same log");
    let rows: Vec<GenerationRow> = read_rows(&d("opt_a").join("generations.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    let last = read_snapshot(&d("opt_a").join("populations/generation_0002.pop")).unwrap();
    assert_eq!(last.genomes.len(), 6);
    let report = std::fs::read_to_string(d("opt_a").join("report.md")).unwrap();
    assert!(report.contains("0.1") && report.contains("Initial") && report.contains("Final"));
    let manifest = RunManifest::read(&d("opt_a").join("manifest.json")).unwrap();
    assert!(manifest.stale_artifacts(&d("opt_a")).is_empty());
    assert_eq!(manifest.seeds, vec![5]);
}
