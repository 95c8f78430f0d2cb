use std::path::Path;
use std::process::{Command, Output};

use burstfuse::image::RgbImage;
use burstfuse::io::{load_rgb_image, save_rgb16_png};
use burstfuse::synth::BlobScene;

fn burstfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_burstfuse"))
        .args(args)
        .env_remove("BURSTFUSE_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_truth(path: &Path, side: usize) -> RgbImage {
    let img = BlobScene::new(side, side, 40, 4).render(side, side);
    save_rgb16_png(&img, path).unwrap();
    img
}

#[test]
fn help_exits_zero() {
    let o = burstfuse(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in [
        "merge",
        "synth",
        "bench",
        "corrupt-bench",
        "frames-sweep",
        "analyze-offsets",
        "calibrate-noise",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&burstfuse(&["no-such-command"])), 1);
    assert_eq!(code(&burstfuse(&["merge", "--burst", "x"])), 1);
    assert_eq!(code(&burstfuse(&[])), 1);
}

#[test]
fn missing_burst_dir_exits_two() {
    let o = burstfuse(&[
        "merge",
        "--burst",
        "/definitely/not/here",
        "--out",
        "/tmp/never.png",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("burstfuse:"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "zooom = 2\n").unwrap();
    let o = burstfuse(&[
        "merge",
        "--burst",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("o.png").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("zooom"));

    let o = burstfuse(&["merge", "--burst", ".", "--out", "o.png", "--set", "zoom=9"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn synth_then_merge_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let truth_path = dir.path().join("truth.png");
    let truth = write_truth(&truth_path, 64);
    let burst = dir.path().join("burst");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let o = burstfuse(&[
        "synth",
        "--truth",
        &s(&truth_path),
        "--frames",
        "6",
        "--seed",
        "3",
        "--out",
        &s(&burst),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(burst.join("burst.txt").is_file());
    assert!(burst.join("offsets.csv").is_file());
    assert!(burst.join("frame_005.png").is_file());

    for (mode, zoom) in [("auto", "1"), ("oracle", "1"), ("oracle", "2")] {
        let out = dir.path().join(format!("{mode}_{zoom}.png"));
        let diag = dir.path().join(format!("{mode}_{zoom}.csv"));
        let o = burstfuse(&[
            "merge",
            "--burst",
            &s(&burst),
            "--out",
            &s(&out),
            "--alignment",
            mode,
            "--zoom",
            zoom,
            "--diagnostics",
            &s(&diag),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let img = load_rgb_image(&out).unwrap();
        let side = if zoom == "2" { 128 } else { 64 };
        assert_eq!(img.dims(), (side, side));
        if zoom == "1" {
            let p = burstfuse::metrics::psnr(&img.crop_border(8), &truth.crop_border(8)).unwrap();
            assert!(p > 30.0, "{mode}: {p:.2} dB");
        }
        assert!(diag.is_file());
    }

    let hist = dir.path().join("hist.csv");
    let fields = dir.path().join("fields");
    let o = burstfuse(&[
        "analyze-offsets",
        "--burst",
        &s(&burst),
        "--out",
        &s(&hist),
        "--fields-out",
        &s(&fields),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(hist.is_file());

    let out = dir.path().join("csv.png");
    let o = burstfuse(&[
        "merge",
        "--burst",
        &s(&burst),
        "--out",
        &s(&out),
        "--alignment",
        "csv",
        "--fields",
        &s(&fields),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn calibrate_noise_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = burstfuse(&[
        "calibrate-noise",
        "--slope",
        "0.001",
        "--intercept",
        "0.00001",
        "--bins",
        "8",
        "--samples",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tables = burstfuse::noise::NoiseTables::read_csv(&out).unwrap();
    assert_eq!(tables.len(), 8);
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    std::fs::create_dir(&ds).unwrap();
    write_truth(&ds.join("a.png"), 64);
    std::fs::write(ds.join("notes.txt"), "not an image").unwrap();
    let out = dir.path().join("r.csv");
    let o = burstfuse(&[
        "bench",
        "--dataset",
        ds.to_str().unwrap(),
        "--frames",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = burstfuse::bench::BenchReport::read_csv(&out).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(std::fs::read_to_string(&out)
        .unwrap()
        .starts_with("# border_crop_px=8"));
}
