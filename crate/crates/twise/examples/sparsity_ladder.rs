//! LiDAR ring subsampling: 64R down to 8R.
//!
//! Samples the composite scene with each ring count and prints the kept ring
//! subsets and the valid-pixel counts, which halve at every step.
//!
//! ```text
//! cargo run --example sparsity_ladder
//! ```

use twise::scenegen::{kept_rings, lidar_sample, make_scene, SceneSpec};

fn main() {
    let scene = make_scene(&SceneSpec::Composite { width: 192, height: 128, boxes: 3 }, 5).unwrap();
    println!("composite scene 192x128, dense GT pixels: {}", scene.dense_gt.valid_count());
    println!();
    println!("{:>5} {:>12} {:>10}  first kept rings", "rows", "valid px", "ratio");
    let mut prev: Option<f64> = None;
    for rows in [64u32, 32, 16, 8, 0] {
        let sparse = lidar_sample(&scene.scene, rows, 0, 0.2).unwrap();
        let count = sparse.valid_count();
        let rings = kept_rings(rows, 0).unwrap();
        let head: Vec<String> = rings.iter().take(6).map(|r| r.to_string()).collect();
        let ratio = match prev {
            Some(p) if rows > 0 => format!("{:.2}", p / count as f64),
            _ => "-".into(),
        };
        println!(
            "{rows:>4}R {count:>12} {ratio:>10}  [{}{}]",
            head.join(", "),
            if rings.len() > 6 { ", ..." } else { "" }
        );
        if rows > 0 {
            prev = Some(count as f64);
        }
    }
    println!();
    println!("offset shifts the subset without changing its size:");
    println!("  rows=16 offset=0 -> {:?}", &kept_rings(16, 0).unwrap()[..4]);
    println!("  rows=16 offset=1 -> {:?}", &kept_rings(16, 1).unwrap()[..4]);
}
