//! Trains the desk-preset FNO on the P-SDF regime and saves the parameters.
//!
//! `cargo run --release --example train_fno -- [epochs] [out_dir]`

use std::path::PathBuf;

use urbanwind::cli::save_model;
use urbanwind::dataset::Regime;
use urbanwind::experiment::{simulate_scene, train_config, train_on_run, Direction, Scene, DESK_OBSTACLES};
use urbanwind::fno::Preset;

fn main() -> urbanwind::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(5, |a| a.parse().expect("epochs"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/train_fno".into()));
    let run = simulate_scene(&Scene::desk(&DESK_OBSTACLES, 1), Direction::West)?;
    let mut cfg = train_config(Preset::Desk);
    cfg.epochs = epochs;
    let model = train_on_run(&run, Regime::PatchSdf, Preset::Desk, &cfg, |e| {
        println!("epoch {:3}  train {:.4}  val {:.4}  {:.1}s", e.epoch, e.train_loss, e.val_loss, e.wall_seconds)
    })?;
    let path = save_model(&out, &model)?;
    println!(
        "best epoch {} (val {:.4}), {} parameters, sha256 {}",
        model.card.best_epoch,
        model.card.best_val_loss,
        model.params.param_count(),
        model.params.content_hash()
    );
    println!("wrote {}", path.display());
    Ok(())
}
