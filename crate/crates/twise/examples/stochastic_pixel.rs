//! Empirical confirmation of the expected-loss predictions.
//!
//! Trains a single pixel's three channels by SGD, drawing the ground truth
//! from the binary mixture each step, and compares the converged channels
//! against the closed-form predictions. An L2 single-channel baseline runs
//! on the same mixtures to show the smearing it converges to.
//!
//! ```text
//! cargo run --release --example stochastic_pixel
//! ```

use twise::ambiguity::{fusion_minimizer, gamma_threshold, AmbiguityModel};
use twise::fitter::{fit_stochastic_pixel, Baseline, FitConfig};

fn main() {
    let (d1, d2) = (10.0, 20.0);
    println!("single-pixel SGD, 20k iterations, d = ({d1}, {d2})");
    println!(
        "{:>5} {:>6} {:>9} {:>9} {:>8} {:>8} {:>9} {:>9}",
        "p1", "gamma", "c1", "pred c1", "c2", "pred c2", "sigma", "fused"
    );
    for (p1, gamma) in [(0.5, 2.0), (0.3, 2.0), (0.3, 1.25), (0.1, 2.0), (0.7, 3.0)] {
        let model = AmbiguityModel::binary(d1, d2, p1).unwrap();
        let fit = FitConfig {
            learning_rate: 0.05,
            iterations: 20_000,
            seed: 7,
            gamma,
            ..FitConfig::default()
        };
        let probe = fit_stochastic_pixel(&model, &fit.loss_config(), &fit)
            .unwrap()
            .probe
            .unwrap();
        let thr = gamma_threshold(p1, 1.0 - p1).unwrap();
        let pred_c1 = if gamma > thr { d1 } else { d2 };
        let rale_thr = gamma_threshold(1.0 - p1, p1).unwrap();
        let pred_c2 = if gamma > rale_thr { d2 } else { d1 };
        println!(
            "{p1:>5.2} {gamma:>6.2} {:>9.3} {pred_c1:>9.1} {:>8.3} {pred_c2:>8.1} {:>9.4} {:>9.3}",
            probe.c1, probe.c2, probe.sigma, probe.fused
        );
        let side = fusion_minimizer(p1);
        if !side.is_tie {
            assert_eq!(probe.sigma > 0.5, side.sigma > 0.5, "sigma side disagrees with theory");
        }
    }

    println!();
    let model = AmbiguityModel::binary(d1, d2, 0.3).unwrap();
    let fit = FitConfig {
        baseline: Baseline::L2,
        iterations: 20_000,
        seed: 7,
        ..FitConfig::default()
    };
    let probe = fit_stochastic_pixel(&model, &fit.loss_config(), &fit)
        .unwrap()
        .probe
        .unwrap();
    println!(
        "L2 baseline on p1 = 0.3 converges to {:.3}, the mixture mean 17, between the surfaces",
        probe.c1
    );
}
