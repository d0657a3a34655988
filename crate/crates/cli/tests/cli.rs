use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use featreg::*;
use tempfile::TempDir;

fn featreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featreg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn blob_volume(n: usize, shift: f64) -> Volume<f32> {
    let c = n as f64 / 2.0;
    Volume::from_fn([n; 3], |z, y, x| {
        let (z, y, x) = (z as f64, y as f64, x as f64 - shift);
        let a = (-((z - c).powi(2) + (y - c).powi(2) + (x - c).powi(2)) / 18.0).exp();
        let b = (-((z - c + 4.0).powi(2) + (y - c - 3.0).powi(2) + (x - c + 2.0).powi(2)) / 8.0).exp();
        (a + 0.6 * b) as f32
    })
    .unwrap()
}

fn write_field_file(dir: &Path, name: &str, u: DisplacementField<f32>) -> PathBuf {
    let path = dir.join(name);
    write_feature_tensor(&FeatureTensor::Displacement(u), &path).unwrap();
    path
}

fn read_field(path: &Path) -> DisplacementField<f32> {
    read_feature_tensor::<f32>(path).unwrap().into_displacement().unwrap()
}

#[test]
fn register_self_from_config_is_near_zero() {
    let dir = TempDir::new().unwrap();
    let vol = dir.path().join("v.nii.gz");
    write_volume(&blob_volume(20, 0.0), &vol).unwrap();
    let out = dir.path().join("u.ftv");
    let cfg = dir.path().join("run.json");
    let json = format!(
        r#"{{"fixed": "{0}", "moving": "{0}", "output": "{1}", "adam": {{"epochs": 10}}}}"#,
        p(&vol),
        p(&out)
    );
    std::fs::write(&cfg, json).unwrap();
    let r = featreg(&["register", "--config", p(&cfg)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let u = read_field(&out);
    assert!(u.mean_magnitude() < 0.1);
}

#[test]
fn register_output_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (f, m) = (dir.path().join("f.nii"), dir.path().join("m.nii"));
    write_volume(&blob_volume(20, 0.0), &f).unwrap();
    write_volume(&blob_volume(20, 1.5), &m).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = featreg(&["register", "--fixed", p(&f), "--moving", p(&m), "--out", p(&out), "--epochs", "5"]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.ftv"), run("b.ftv"));
}

#[test]
fn flags_override_config_keys() {
    let dir = TempDir::new().unwrap();
    let vol = dir.path().join("v.nii");
    write_volume(&blob_volume(16, 0.0), &vol).unwrap();
    let cfg = dir.path().join("run.json");
    // quantization 3 does not divide the radius, so the config alone is invalid
    std::fs::write(&cfg, r#"{"convex": {"search_radius": 4, "quantization": 3}, "adam": {"epochs": 2}}"#).unwrap();
    let out = dir.path().join("u.ftv");
    let args = ["register", "--config", p(&cfg), "--fixed", p(&vol), "--moving", p(&vol), "--out", p(&out)];
    let bad = featreg(&args);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!out.exists());
    let mut fixed = args.to_vec();
    fixed.extend(["--quantization", "2"]);
    assert!(featreg(&fixed).status.success());
    assert!(out.exists());
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("u.ftv");
    for text in [r#"{"adam": {"epochs": 3"#, r#"{"adam": {"epoch": 3}}"#, r#"{"adam": {"epochs": -1}}"#] {
        std::fs::write(&cfg, text).unwrap();
        let r = featreg(&["register", "--config", p(&cfg), "--fixed", "a.nii", "--moving", "a.nii", "--out", p(&out)]);
        assert_eq!(r.status.code(), Some(2), "{text}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn unwritable_output_is_a_stage_failure() {
    let dir = TempDir::new().unwrap();
    let vol = dir.path().join("v.nii");
    write_volume(&blob_volume(12, 0.0), &vol).unwrap();
    let out = dir.path().join("missing").join("f.ftv");
    let r = featreg(&["encode-mind", "--input", p(&vol), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn evaluate_zero_field_reports_zero_tre() {
    let dir = TempDir::new().unwrap();
    let field = write_field_file(dir.path(), "zero.ftv", DisplacementField::zeros(Grid::image([8, 8, 8])));
    let lm = dir.path().join("a.csv");
    std::fs::write(&lm, "1,2,3\n4.5,2,6\n7,7,0.5\n").unwrap();
    let labels = dir.path().join("seg.nii.gz");
    write_labels(&Volume::from_fn([8, 8, 8], |z, _, x| u32::from(z > 3) + u32::from(x > 5)).unwrap(), &labels).unwrap();
    let report = dir.path().join("report.json");
    let r = featreg(&[
        "evaluate", "--field", p(&field), "--landmarks-fixed", p(&lm), "--landmarks-moving", p(&lm),
        "--seg-fixed", p(&labels), "--seg-moving", p(&labels), "--spacing-moving", "1,1,1.5", "--out", p(&report),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["tre_mm"], 0.0);
    assert_eq!(v["tre30_mm"], 0.0);
    assert_eq!(v["per_landmark_mm"].as_array().unwrap().len(), 3);
    assert_eq!(v["dice_mean"], 1.0);
    assert_eq!(v["dice_per_label"]["2"], 1.0);
    assert_eq!(v["sd_log_jacobian"], 0.0);
    assert_eq!(v["folded_voxel_count"], 0);
}

#[test]
fn evaluate_prints_to_stdout_without_out() {
    let dir = TempDir::new().unwrap();
    let field = write_field_file(dir.path(), "u.ftv", DisplacementField::constant(Grid::image([6, 6, 6]), [0.0, 0.0, 1.0]));
    let r = featreg(&["evaluate", "--field", p(&field)]);
    assert!(r.status.success());
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert!(v["tre_mm"].is_null());
    assert_eq!(v["sd_log_jacobian"], 0.0);
}

#[test]
fn lowrank_pca_requires_a_seed() {
    let dir = TempDir::new().unwrap();
    let vol = dir.path().join("v.nii");
    write_volume(&blob_volume(12, 0.0), &vol).unwrap();
    let feat = dir.path().join("f.ftv");
    assert!(featreg(&["encode-mind", "--input", p(&vol), "--out", p(&feat)]).status.success());
    let (a, b) = (dir.path().join("a.ftv"), dir.path().join("b.ftv"));
    let base = ["pca", "--fixed", p(&feat), "--moving", p(&feat), "--out-fixed", p(&a), "--out-moving", p(&b), "--k", "4"];
    let mut low = base.to_vec();
    low.extend(["--mode", "lowrank"]);
    assert_eq!(featreg(&low).status.code(), Some(2));
    assert!(!a.exists());
    low.extend(["--seed", "3"]);
    assert!(featreg(&low).status.success());
    let reduced = read_feature_tensor::<f32>(&a).unwrap().into_features().unwrap();
    assert_eq!(reduced.channels(), 4);
    assert_eq!(reduced.provenance, Provenance::PcaReduced);
    let mut full = base.to_vec();
    full.extend(["--mode", "full"]);
    assert!(featreg(&full).status.success());
}

#[test]
fn interp_gap_restores_extent() {
    let dir = TempDir::new().unwrap();
    let g = Grid::new([3, 4, 5], [3.0, 1.0, 1.0], [0.0; 3]).unwrap();
    let data: Vec<f32> = (0..2 * g.len()).map(|i| (i / g.len()) as f32 + 3.0 * g.coords(i % g.len())[0] as f32).collect();
    let sparse = FeatureVolume::new(data, 2, g, Provenance::External).unwrap();
    let input = dir.path().join("s.ftv");
    write_feature_tensor(&FeatureTensor::Features(sparse), &input).unwrap();
    let out = dir.path().join("d.ftv");
    assert_eq!(featreg(&["interp-gap", "--input", p(&input), "--out", p(&out)]).status.code(), Some(2));
    let r = featreg(&["interp-gap", "--input", p(&input), "--out", p(&out), "--gap", "3", "--axis", "z"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let dense = read_feature_tensor::<f32>(&out).unwrap().into_features().unwrap();
    assert_eq!(dense.dims(), [7, 4, 5]);
    let dg = *dense.grid();
    for (i, &v) in dense.channel(1).iter().enumerate() {
        assert!((v - (1.0 + dg.coords(i)[0] as f32)).abs() < 1e-5);
    }
}

#[test]
fn warp_and_ensemble_commands() {
    let dir = TempDir::new().unwrap();
    let g = Grid::image([6, 6, 6]);
    let a = write_field_file(dir.path(), "a.ftv", DisplacementField::constant(g, [0.0, 0.0, 1.0]));
    let b = write_field_file(dir.path(), "b.ftv", DisplacementField::constant(g, [2.0, 0.0, 3.0]));
    let out = dir.path().join("o.ftv");
    assert!(featreg(&["ensemble", "mean", "--first", p(&a), "--second", p(&b), "--out", p(&out)]).status.success());
    assert_eq!(read_field(&out).at(0), [1.0, 0.0, 2.0]);
    assert!(featreg(&["ensemble", "sequential", "--first", p(&a), "--second", p(&b), "--out", p(&out)]).status.success());
    assert_eq!(read_field(&out).at(100), [2.0, 0.0, 4.0]);
    assert_eq!(featreg(&["ensemble", "mean", "--first", p(&a), "--out", p(&out)]).status.code(), Some(2));

    let labels = Volume::from_fn([6, 6, 6], |_, _, x| x as u32).unwrap();
    let lp = dir.path().join("l.nii");
    write_labels(&labels, &lp).unwrap();
    let wp = dir.path().join("w.nii");
    assert!(featreg(&["warp", "--input", p(&lp), "--field", p(&a), "--out", p(&wp), "--labels"]).status.success());
    let w = read_labels(&wp).unwrap();
    assert_eq!(w.get(2, 2, 2), 3);
    assert_eq!(w.get(2, 2, 5), 5);

    let vp = dir.path().join("v.nii");
    write_volume(&Volume::from_fn([6, 6, 6], |_, _, x| x as f32).unwrap(), &vp).unwrap();
    assert!(featreg(&["warp", "--input", p(&vp), "--field", p(&a), "--out", p(&wp)]).status.success());
    assert_eq!(read_volume::<f32>(&wp).unwrap().get(1, 1, 1), 2.0);
}

#[test]
fn sequential_ensemble_can_reregister() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("f.nii");
    write_volume(&blob_volume(16, 0.0), &f).unwrap();
    let zero = write_field_file(dir.path(), "z.ftv", DisplacementField::zeros(Grid::image([16; 3])));
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"adam": {"epochs": 5}}"#).unwrap();
    let out = dir.path().join("o.ftv");
    let r = featreg(&["--config", p(&cfg), "ensemble", "sequential", "--first", p(&zero), "--fixed", p(&f), "--moving", p(&f), "--out", p(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(read_field(&out).mean_magnitude() < 0.1);
}

#[test]
fn overlay_writes_a_checkerboard_png() {
    let dir = TempDir::new().unwrap();
    let (f, m) = (dir.path().join("f.nii"), dir.path().join("m.nii"));
    write_volume(&Volume::from_fn([4, 10, 12], |_, _, _| 1.0f32).unwrap(), &f).unwrap();
    write_volume(&Volume::from_fn([4, 10, 12], |_, y, _| y as f32).unwrap(), &m).unwrap();
    let png = dir.path().join("o.png");
    let r = featreg(&["overlay", "--fixed", p(&f), "--moving", p(&m), "--out", p(&png), "--tile", "4"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let img = image::open(&png).unwrap().to_luma8();
    assert_eq!(img.dimensions(), (12, 10));
    // constant fixed tiles map to 0, moving tiles follow the y ramp
    assert_eq!(img.get_pixel(0, 9).0[0], 0);
    assert_eq!(img.get_pixel(5, 9).0[0], 255);
}
