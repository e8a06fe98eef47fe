//! The `gen`, `cluster`, `segment` and `report` commands chained in-process,
//! writing into a scratch directory.
//!
//!     cargo run --release --example cli_workflow [WORK_DIR]

use std::path::PathBuf;

use potts::imaging::{quadrant_image, save_image};

fn potts(args: &[&str]) -> i32 {
    println!("$ potts {}", args.join(" "));
    let argv = std::iter::once("potts").chain(args.iter().copied());
    potts::cli::run(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

fn main() -> potts::error::Result<()> {
    let work = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("potts-workflow"));
    let runs = work.join("runs");
    std::fs::create_dir_all(&runs).map_err(|e| potts::error::PottsError::Io {
        path: runs.clone(),
        source: e,
    })?;
    let w = |name: &str| work.join(name).to_string_lossy().into_owned();
    let r = |name: &str| runs.join(name).to_string_lossy().into_owned();

    let (img, _) = quadrant_image(48, 0.08, 1)?;
    save_image(&img, &work.join("quadrants.png"))?;

    let steps: Vec<Vec<String>> = vec![
        vec![
            "gen",
            "three-circles",
            "--out",
            &w("circles"),
            "--n-points",
            "900",
            "--noise-variance",
            "0.0256",
        ]
        .into_iter()
        .map(String::from)
        .collect(),
        vec![
            "cluster".into(),
            "--data".into(),
            w("circles/points.csv"),
            "--labels".into(),
            w("circles/labels.csv"),
            "--config".into(),
            "preset:three-circles".into(),
            "--n-seeds".into(),
            "30".into(),
            "--n-trials".into(),
            "3".into(),
            "--out".into(),
            r("circles_pdhg.json"),
        ],
        vec![
            "cluster".into(),
            "--data".into(),
            w("circles/points.csv"),
            "--labels".into(),
            w("circles/labels.csv"),
            "--config".into(),
            "preset:three-circles".into(),
            "--solver".into(),
            "admm".into(),
            "--n-seeds".into(),
            "30".into(),
            "--n-trials".into(),
            "3".into(),
            "--out".into(),
            r("circles_admm.json"),
        ],
        vec![
            "segment".into(),
            "--image".into(),
            w("quadrants.png"),
            "--k".into(),
            "4".into(),
            "--force".into(),
            "l2".into(),
            "--out-labels".into(),
            w("quadrants_labels.png"),
            "--out-report".into(),
            r("quadrants.json"),
        ],
        vec![
            "report".into(),
            "--inputs".into(),
            format!("{}/*.json", runs.display()),
            "--out".into(),
            w("summary.csv"),
        ],
    ];
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let code = potts(&args);
        if code != 0 {
            eprintln!("exit status {code}");
            std::process::exit(code);
        }
    }
    print!(
        "{}",
        std::fs::read_to_string(work.join("summary.csv")).unwrap_or_default()
    );
    Ok(())
}
