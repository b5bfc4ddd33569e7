//! Autoregressive forecast of an unseen run, scored against persistence.

use urbanwind::dataset::Regime;
use urbanwind::experiment::{
    evaluate_model, evaluate_persistence, simulate_scene, spread_starts, train_config, train_on_run, Direction, Scene,
    DESK_OBSTACLES,
};
use urbanwind::fno::Preset;
use urbanwind::metrics::EvalOptions;
use urbanwind::rollout::{predict_series, RolloutPlan};

fn main() -> urbanwind::Result<()> {
    let epochs = std::env::args().nth(1).map_or(5, |a| a.parse().expect("epochs"));
    let train = simulate_scene(&Scene::desk(&DESK_OBSTACLES, 1), Direction::West)?;
    let test = simulate_scene(&Scene::desk(&DESK_OBSTACLES, 2), Direction::West)?;
    let mut cfg = train_config(Preset::Desk);
    cfg.epochs = epochs;
    let model = train_on_run(&train, Regime::PatchSdf, Preset::Desk, &cfg, |_| {})?;

    let horizon = 25;
    let plan = RolloutPlan::new(horizon, model.card.regime, model.card.scale)
        .with_sdf(test.sdf.clone())
        .with_patch(model.card.patch.expect("patched regime"));
    println!("{} frames need {} model calls", horizon, plan.model_calls(10));
    let (forecast, _) = predict_series(&model.params, &test.series, &plan, 0)?;
    println!("forecast {} frames at dt {} s", forecast.len(), forecast.dt());

    let opts = EvalOptions { rms_patch: 32, ..EvalOptions::default() };
    let starts = spread_starts(test.series.len(), 5, horizon, 4)?;
    let fno = evaluate_model(&model, &test.series, Some(&test.sdf), "W-Desk-P-SDF", &starts, horizon, &opts)?;
    let base = evaluate_persistence(&test.series, 5, &starts, horizon, &opts)?;
    println!("step   fno     persistence");
    for (i, (a, b)) in fno.mae_curve.iter().zip(&base.mae_curve).enumerate().step_by(4) {
        println!("{:4}  {a:.4}  {b:.4}", i + 1);
    }
    println!("MAE at 5 s: fno {:.4}, persistence {:.4}", fno.mae_at_time, base.mae_at_time);
    Ok(())
}
