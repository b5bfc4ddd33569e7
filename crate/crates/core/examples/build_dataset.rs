//! Sliding-window datasets for the four regimes from one simulated run.

use urbanwind::dataset::{build_dataset, Regime};
use urbanwind::experiment::{dataset_options, simulate_scene, Direction, Scene, DESK_OBSTACLES};
use urbanwind::fno::Preset;

fn main() -> urbanwind::Result<()> {
    let run = simulate_scene(&Scene::desk(&DESK_OBSTACLES, 1), Direction::West)?;
    let opts = dataset_options(Preset::Desk);
    for regime in Regime::ALL {
        let sdf = regime.uses_sdf().then_some(&run.sdf);
        let ds = build_dataset(&run.series, sdf, regime, &opts)?;
        let m = &ds.manifest;
        println!(
            "{:6} {:4} samples of {} x {}x{} -> {} x {}x{}, scale {:.3} m/s, {} train / {} validation",
            regime.tag(),
            m.count,
            ds.store.channels,
            ds.store.height,
            ds.store.width,
            ds.store.out_len,
            ds.store.height,
            ds.store.width,
            m.scale,
            m.train_indices.len(),
            m.val_indices.len()
        );
    }
    Ok(())
}
