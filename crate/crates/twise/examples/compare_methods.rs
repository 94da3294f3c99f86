//! Loss-function shoot-out on the slab scene ensemble.
//!
//! Fits the twin-surface estimator and the L1/L2/L1+L2/Huber baselines to
//! the same sparse input on ten jittered slab scenes and prints the metric
//! table (millimeters), plus the win/loss pixel counts of the twin-surface
//! result against L2.
//!
//! ```text
//! cargo run --release --example compare_methods
//! ```

use twise::fitter::{fit_kernel_regression, Baseline, FitConfig};
use twise::metrics::{diff_histograms, error_diff, standard_metrics_masked, BinSpec, Region};
use twise::scenegen::{lidar_sample, make_scene, SceneSpec};

fn main() {
    let spec = SceneSpec::Slab2d {
        width: 96,
        height: 64,
        slab_depth: 10.0,
        bg_depth: 30.0,
        jitter: 0.15,
    };
    let methods = [
        ("twin-surface", Baseline::Twise),
        ("l1", Baseline::L1),
        ("l2", Baseline::L2),
        ("l1+l2", Baseline::L1L2),
        ("huber", Baseline::Huber),
    ];
    let seeds = 10u64;

    let mut sums = vec![[0.0f64; 4]; methods.len()];
    let mut wins = 0u64;
    let mut losses = 0u64;
    for seed in 0..seeds {
        let mut scene = make_scene(&spec, seed).unwrap();
        scene.sparse = lidar_sample(&scene.scene, 16, 0, 0.2).unwrap();
        let mut fused = Vec::new();
        let mut support = Vec::new();
        for (_, baseline) in methods {
            let cfg = FitConfig {
                learning_rate: 0.5,
                iterations: 250,
                bandwidth: 3.0,
                baseline,
                ..FitConfig::default()
            };
            let report = fit_kernel_regression(&scene, &cfg.loss_config(), &cfg).unwrap();
            support = report.support.clone();
            fused.push(report.fused_depth());
        }
        for (mi, f) in fused.iter().enumerate() {
            let m = standard_metrics_masked(f, &scene.dense_gt, 2.0, Some(&support), Region::Whole)
                .unwrap()
                .to_millimeters();
            sums[mi][0] += m.mae;
            sums[mi][1] += m.rmse;
            sums[mi][2] += m.tmae;
            sums[mi][3] += m.trmse;
        }
        // error-difference of L2 (reference role) vs twin-surface: positive
        // pixels are twin-surface wins
        let mut gt_supported = scene.dense_gt.clone();
        for (i, ok) in support.iter().enumerate() {
            if !ok {
                gt_supported.invalidate(i % 96, i / 96);
            }
        }
        let diff = error_diff(&fused[2], &fused[0], &gt_supported).unwrap();
        let hists = diff_histograms(&diff, &BinSpec { lo: 0.0, hi: 5.0, count: 10 }).unwrap();
        wins += hists.win_count;
        losses += hists.loss_count;
    }

    println!("slab ensemble, {seeds} seeds, 16-ring sparse input, metrics in mm:");
    println!(
        "{:>14} {:>10} {:>10} {:>10} {:>10}",
        "loss", "MAE", "RMSE", "tMAE", "tRMSE"
    );
    for (mi, (name, _)) in methods.iter().enumerate() {
        println!(
            "{name:>14} {:>10.1} {:>10.1} {:>10.1} {:>10.1}",
            sums[mi][0] / seeds as f64,
            sums[mi][1] / seeds as f64,
            sums[mi][2] / seeds as f64,
            sums[mi][3] / seeds as f64
        );
    }
    println!();
    println!("twin-surface vs L2 pixel duel: {wins} wins, {losses} losses");
}
