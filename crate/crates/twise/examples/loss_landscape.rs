//! Shape of the asymmetric loss kernels.
//!
//! Prints ale/rale values and subgradients over a residual grid for a few γ,
//! plus the fusion loss as the blend weight sweeps between two surfaces.
//!
//! ```text
//! cargo run --example loss_landscape
//! ```

use twise::losses::{ale, fusion_loss, logit, rale};

fn main() {
    println!("asymmetric linear error and its reflection");
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "eps", "ale(g=2)", "d/deps", "rale(g=2)", "d/deps");
    let mut eps = -2.0;
    while eps <= 2.0 {
        let a = ale(eps, 2.0).unwrap();
        let r = rale(eps, 2.0).unwrap();
        println!(
            "{eps:>8.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            a.value, a.dvalue, r.value, r.dvalue
        );
        eps += 0.5;
    }

    println!();
    println!("gamma = 1 reduces both to the absolute error:");
    for eps in [-1.5, -0.5, 2.5] {
        let a = ale(eps, 1.0).unwrap().value;
        println!("  ale({eps:>4}, 1) = {a} = |eps|");
    }

    println!();
    println!("fusion loss |sigma*10 + (1-sigma)*20 - 17.5| as sigma sweeps:");
    println!("{:>8} {:>10} {:>12}", "sigma", "value", "d/d(logit)");
    for sigma in [0.05, 0.25, 0.5, 0.75, 0.95] {
        let f = fusion_loss(10.0, 20.0, logit(sigma), 17.5).unwrap();
        println!("{sigma:>8.2} {:>10.4} {:>12.4}", f.value, f.d_c3);
    }
    println!("the minimum sits at sigma = 0.25, the exact blend of the target");
}
