//! Expected-loss analysis of a binary depth ambiguity.
//!
//! A boundary pixel is foreground (d1) with probability p1 and background
//! (d2) otherwise. This prints the expected-loss corners for each loss kind,
//! the γ selection threshold √(p2/p1), and which surface each estimator
//! converges to, all without any training.
//!
//! ```text
//! cargo run --example expected_loss
//! ```

use twise::ambiguity::{
    expected_loss, fusion_minimizer, gamma_threshold, minimizer, AmbiguityModel, LossKind,
};

fn main() {
    let (d1, d2) = (10.0, 20.0);
    for p1 in [0.5, 0.3, 0.1] {
        let model = AmbiguityModel::binary(d1, d2, p1).unwrap();
        let thr = gamma_threshold(p1, 1.0 - p1).unwrap();
        println!("binary ambiguity d = ({d1}, {d2}), p1 = {p1}   [threshold sqrt(p2/p1) = {thr:.3}]");
        println!(
            "{:>6} {:>12} {:>12} {:>16} {:>16}",
            "gamma", "E[ale](d1)", "E[ale](d2)", "ale minimizer", "rale minimizer"
        );
        for gamma in [1.0, 1.5, 2.0, 3.0, 5.0] {
            let e1 = expected_loss(&model, LossKind::Ale, gamma, d1).unwrap();
            let e2 = expected_loss(&model, LossKind::Ale, gamma, d2).unwrap();
            let ale_min = minimizer(&model, LossKind::Ale, gamma).unwrap();
            let rale_min = minimizer(&model, LossKind::Rale, gamma).unwrap();
            let fmt = |m: twise::ambiguity::Minimizer| {
                if m.is_tie {
                    "tie".to_string()
                } else if m.depth == d1 {
                    format!("{} (fg)", m.depth)
                } else {
                    format!("{} (bg)", m.depth)
                }
            };
            println!(
                "{gamma:>6.2} {e1:>12.3} {e2:>12.3} {:>16} {:>16}",
                fmt(ale_min),
                fmt(rale_min)
            );
        }
        let sq = minimizer(&model, LossKind::Sq, 1.0).unwrap();
        let fusion = fusion_minimizer(p1);
        println!(
            "squared loss smears to the mean {:.2}; fusion weight picks sigma = {}{}",
            sq.depth,
            fusion.sigma,
            if fusion.is_tie { " (tie)" } else { "" }
        );
        println!();
    }
}
