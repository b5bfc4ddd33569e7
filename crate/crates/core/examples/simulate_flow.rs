//! Channel flow past the four desk blocks; writes the speed series as `.npy`.
//!
//! `cargo run --release --example simulate_flow -- [out_dir]`

use std::path::PathBuf;

use urbanwind::cli::write_series;
use urbanwind::experiment::{simulate_scene, Direction, Scene, DESK_OBSTACLES};

fn main() -> urbanwind::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/simulate_flow".into()));
    std::fs::create_dir_all(&out)?;
    let scene = Scene::desk(&DESK_OBSTACLES, 7);
    for direction in [Direction::West, Direction::North] {
        let run = simulate_scene(&scene, direction)?;
        let s = &run.series;
        let mean = s.frames().iter().flat_map(|f| f.values()).sum::<f64>() / (s.len() * s.spec().len()) as f64;
        println!(
            "{}: {} frames every {} s, mean speed {mean:.2} m/s, max divergence {:.1e}, min frame correlation {:.4}",
            direction.tag(),
            s.len(),
            s.dt(),
            run.diagnostics.max_divergence,
            run.diagnostics.min_frame_correlation
        );
        write_series(&out.join(format!("speed_{}.npy", direction.tag())), s)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
