use super::*;
use crate::experiment::Transform;

fn cli(out: &Path, args: &[&str]) -> Cli {
    let mut argv = vec!["urbanwind", "--out", out.to_str().unwrap()];
    argv.extend_from_slice(args);
    Cli::try_parse_from(argv).unwrap()
}

fn wave_series(frames: usize, n: usize) -> FieldSeries {
    let spec = GridSpec::new(n, n, 1.0).unwrap();
    let frames = (0..frames)
        .map(|t| {
            ScalarField2D::from_fn(spec, |ix, iy| {
                5.0 + ((ix as f64 + 0.7 * t as f64) * std::f64::consts::TAU / n as f64).sin()
                    + 0.3 * (iy as f64 * std::f64::consts::TAU / n as f64).cos()
            })
            .unwrap()
        })
        .collect();
    FieldSeries::new(0.2, frames).unwrap()
}

#[test]
fn global_flags_parse() {
    let c = Cli::try_parse_from([
        "urbanwind", "report", "--out", "x", "--seed", "3", "--deterministic", "--preset", "paper",
    ])
    .unwrap();
    assert_eq!(c.seed, Some(3));
    assert!(c.deterministic);
    assert_eq!(c.preset, Preset::Paper);
    assert!(Cli::try_parse_from(["urbanwind", "report", "--preset", "huge"]).is_err());
    let e = Cli::try_parse_from(["urbanwind", "evaluate", "--model", "m", "--truth", "t", "--case", "W-Nii"]);
    assert!(e.is_err());
}

#[test]
fn series_sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = wave_series(3, 8);
    let p = dir.path().join("s.npy");
    write_series(&p, &s).unwrap();
    let none = SeriesArgs {
        series_dx: None,
        series_dt: None,
    };
    let back = read_series(&p, &none).unwrap();
    assert_eq!(back.dt(), 0.2);
    assert_eq!(back.frames(), s.frames());
    fs::remove_file(p.with_extension("json")).unwrap();
    assert!(matches!(read_series(&p, &none), Err(Error::Config { .. })));
    let given = SeriesArgs {
        series_dx: Some(2.0),
        series_dt: Some(0.5),
    };
    let back = read_series(&p, &given).unwrap();
    assert_eq!((back.spec().dx, back.dt()), (2.0, 0.5));
}

#[test]
fn sdf_command_writes_fields_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GridSpec::new(16, 16, 1.0).unwrap();
    let mask = BuildingMask::from_rects(spec, &[(4, 4, 4, 4)]);
    let mpath = dir.path().join("mask.npy");
    write_field(&mpath, &mask.to_field()).unwrap();
    let out = dir.path().join("sdf");
    run(&cli(&out, &["sdf", "--mask", mpath.to_str().unwrap()])).unwrap();
    let sdf = read_field(&out.join("sdf.npy"), 1.0).unwrap();
    assert!(sdf.get(5, 5) < 0.0 && sdf.get(0, 0) > 0.0);
    let norm = read_field(&out.join("sdf_normalized.npy"), 1.0).unwrap();
    assert!(norm.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join(RUN_MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sdf");
    assert_eq!(
        manifest["inputs"]["geometry"]["sha256"].as_str().unwrap(),
        sha256_file(&mpath).unwrap()
    );
}

#[test]
fn bad_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flow.json");
    fs::write(&cfg, r#"{"reynolds": 100.0, "viscosity": 1.0}"#).unwrap();
    let c = cli(
        &dir.path().join("o"),
        &["simulate", "--config", cfg.to_str().unwrap(), "--steps", "2"],
    );
    let err = run(&c).unwrap_err();
    assert!(matches!(&err, Error::Config { key, .. } if key == "viscosity"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn simulate_writes_series_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    run(&cli(&out, &["simulate", "--nx", "16", "--ny", "16", "--steps", "6", "--record-every", "2"])).unwrap();
    let s = read_series(
        &out.join("magnitude.npy"),
        &SeriesArgs {
            series_dx: None,
            series_dt: None,
        },
    )
    .unwrap();
    assert_eq!(s.len(), 3);
    assert!((s.dt() - 0.2).abs() < 1e-12);
    assert!(out.join("velocity_u.npy").exists() && out.join(RUN_MANIFEST).exists());
}

#[test]
fn empty_matrix_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("matrix.json");
    fs::write(&cfg, r#"{"train": [], "tests": []}"#).unwrap();
    let out = dir.path().join("m");
    run(&cli(&out, &["matrix", "--config", cfg.to_str().unwrap()])).unwrap();
    let rows: Vec<SummaryRow> = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(rows.is_empty());
    assert!(fs::read_to_string(out.join("summary.csv")).unwrap().starts_with("case,"));
}

#[test]
fn pipeline_train_evaluate_and_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let series_path = dir.path().join("truth.npy");
    write_series(&series_path, &wave_series(40, 32)).unwrap();
    let train_cfg = dir.path().join("train.json");
    fs::write(&train_cfg, r#"{"epochs": 2, "batch_size": 4}"#).unwrap();

    let ds = dir.path().join("ds");
    run(&cli(&ds, &["make-dataset", "--series", series_path.to_str().unwrap(), "--regime", "T"])).unwrap();
    let model_dir = dir.path().join("model");
    run(&cli(
        &model_dir,
        &["train", "--dataset", ds.to_str().unwrap(), "--config", train_cfg.to_str().unwrap()],
    ))
    .unwrap();
    assert_eq!(
        fs::read_to_string(model_dir.join("train_log.jsonl")).unwrap().lines().count(),
        2
    );
    let model = model_dir.join("model.fno");

    let ev = dir.path().join("eval");
    let args = [
        "evaluate", "--model", model.to_str().unwrap(), "--truth", series_path.to_str().unwrap(),
        "--case", "W-Syn-T-VF", "--horizon", "10", "--starts", "2", "--at-time", "1.0", "--rms-patch", "16",
    ];
    run(&cli(&ev, &args)).unwrap();
    let report: CaseSummary = serde_json::from_str(&fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.case, "W-Syn-T-VF");
    assert_eq!(report.starts.len(), 2);
    assert_eq!(report.mae_curve.len(), 10);
    assert!(ev.join("forecast.npy").exists() && ev.join("mae.csv").exists());

    // same numbers from the library path with the transform applied by hand
    let trained = load_model(&model).unwrap();
    let truth = read_series(
        &series_path,
        &SeriesArgs {
            series_dx: None,
            series_dt: None,
        },
    )
    .unwrap();
    let flipped = Transform::FlipVertical.apply_series(&truth).unwrap();
    let opts = EvalOptions {
        at_time: 1.0,
        rms_patch: 16,
        wave_numbers: None,
    };
    let direct = evaluate_model(&trained, &flipped, None, "W-Syn-T-VF", &report.starts, 10, &opts).unwrap();
    assert_eq!(direct.mae_at_time, report.mae_at_time);

    // regime mismatch is refused
    let bad = EvaluateArgs {
        case: "W-Syn-P".parse().unwrap(),
        ..EvaluateArgs::try_from_cli(&args).unwrap()
    };
    assert!(matches!(cmd_evaluate(&cli(&ev, &args), &bad), Err(Error::Contract(_))));

    // matrix: one good case, one broken, one cached retrain
    let mcfg = dir.path().join("matrix.json");
    fs::write(
        &mcfg,
        r#"{
            "horizon": 10, "starts": 1, "at_time": 1.0, "rms_patch": 16,
            "train_config": {"epochs": 1, "batch_size": 4},
            "train": [{"name": "t", "series": "truth.npy", "regime": "T"}],
            "tests": [
                {"case": "W-Syn-T", "model": "t", "truth": "truth.npy"},
                {"case": "W-Syn-T-R", "model": "missing", "truth": "truth.npy"}
            ]
        }"#,
    )
    .unwrap();
    let mout = dir.path().join("matrix");
    run(&cli(&mout, &["matrix", "--config", mcfg.to_str().unwrap()])).unwrap();
    let first = fs::read_to_string(mout.join("summary.json")).unwrap();
    let rows: Vec<SummaryRow> = serde_json::from_str(&first).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].error.is_none() && rows[0].mae_at_time.is_some());
    assert!(rows[1].error.as_deref().unwrap().contains("missing"));
    run(&cli(&mout, &["matrix", "--config", mcfg.to_str().unwrap()])).unwrap();
    assert_eq!(fs::read_to_string(mout.join("summary.json")).unwrap(), first);

    let collected = cmd_report(&mout).unwrap();
    assert_eq!(collected.len(), 1);
    assert_eq!(collected[0], rows[0]);
}

impl EvaluateArgs {
    fn try_from_cli(args: &[&str]) -> Option<Self> {
        let mut argv = vec!["urbanwind"];
        argv.extend_from_slice(args);
        match Cli::try_parse_from(argv).ok()?.command {
            Command::Evaluate(a) => Some(a),
            _ => None,
        }
    }
}
