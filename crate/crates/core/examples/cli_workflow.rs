//! The command-line workflow driven through the library entry point:
//! synthesize a burst, merge it with a config file, analyze its offsets.

use burstfuse::cli;
use burstfuse::io::save_rgb16_png;
use burstfuse::synth::BlobScene;

fn main() {
    let dir = std::env::temp_dir().join("burstfuse-examples/cli");
    std::fs::create_dir_all(&dir).expect("temp dir writable");
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    save_rgb16_png(
        &BlobScene::new(128, 128, 80, 1).render(128, 128),
        &dir.join("truth.png"),
    )
    .expect("write truth");
    std::fs::write(
        dir.join("merge.cfg"),
        "# sharper kernels\nk_detail = 0.25\nzoom = 1.5\n",
    )
    .expect("write config");

    let steps: Vec<Vec<String>> = vec![
        vec![
            "synth".into(),
            "--truth".into(),
            p("truth.png"),
            "--frames".into(),
            "8".into(),
            "--out".into(),
            p("burst"),
        ],
        vec![
            "merge".into(),
            "--burst".into(),
            p("burst"),
            "--out".into(),
            p("merged.png"),
            "--config".into(),
            p("merge.cfg"),
            "--diagnostics".into(),
            p("diagnostics.csv"),
        ],
        vec![
            "analyze-offsets".into(),
            "--burst".into(),
            p("burst"),
            "--bins".into(),
            "10".into(),
            "--out".into(),
            p("hist.csv"),
        ],
        vec![
            "merge".into(),
            "--burst".into(),
            p("missing"),
            "--out".into(),
            p("never.png"),
        ],
    ];
    for args in steps {
        let argv = std::iter::once("burstfuse".to_string()).chain(args.iter().cloned());
        let code = cli::run(argv);
        println!("burstfuse {} -> exit {code}", args[0]);
    }
    println!("outputs in {}", dir.display());
}
