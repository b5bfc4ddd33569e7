//! A two-case matrix driven through the command layer: train west, test the
//! rotated and unrotated north flow.
//!
//! `cargo run --release --example case_matrix -- [out_dir]`

use std::fs;
use std::path::PathBuf;

use clap::Parser;
use urbanwind::cli::{run, write_series, Cli};
use urbanwind::experiment::{simulate_scene, Direction, Scene, DESK_OBSTACLES};
use urbanwind::field::write_npy;

fn main() -> urbanwind::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/case_matrix".into()));
    let data = out.join("data");
    fs::create_dir_all(&data)?;
    let scene = Scene::desk(&DESK_OBSTACLES, 3);
    let west = simulate_scene(&scene, Direction::West)?;
    let north = simulate_scene(&Scene::desk(&DESK_OBSTACLES, 4), Direction::North)?;
    write_series(&data.join("west.npy"), &west.series)?;
    write_series(&data.join("north.npy"), &north.series)?;
    write_npy(data.join("sdf.npy"), &[64, 64], west.sdf.distance())?;
    fs::write(
        out.join("matrix.json"),
        r#"{
  "horizon": 25,
  "starts": 4,
  "at_time": 5.0,
  "rms_patch": 32,
  "train_config": {"epochs": 3, "batch_size": 20},
  "train": [{"name": "west", "series": "data/west.npy", "sdf": "data/sdf.npy", "regime": "P-SDF"}],
  "tests": [
    {"case": "N-Desk-P-SDF", "model": "west", "truth": "data/north.npy", "sdf": "data/sdf.npy"},
    {"case": "N-Desk-P-SDF-R", "model": "west", "truth": "data/north.npy", "sdf": "data/sdf.npy"}
  ]
}
"#,
    )?;
    let config = out.join("matrix.json");
    let cli = Cli::parse_from(["urbanwind", "matrix", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    run(&cli)?;
    print!("{}", fs::read_to_string(out.join("summary.csv"))?);
    Ok(())
}
