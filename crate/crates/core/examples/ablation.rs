//! Held-out AUC of the four objective ablations, averaged over seeds.
//!
//! ```text
//! cargo run --release --example ablation -- [seeds] [epochs]
//! ```

use ccrec::data::SyntheticSpec;
use ccrec::train::{run, Ablation, Dataset, TrainConfig};

fn main() -> ccrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(2, |a| a.parse().expect("seeds"));
    let epochs = args.next().map_or(3, |a| a.parse().expect("epochs"));
    let data = Dataset::synthetic(&SyntheticSpec::default(), 50)?;
    for ablation in Ablation::ALL {
        let mut total = 0.0;
        for seed in 0..seeds {
            let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() }.with_ablation(ablation);
            let out = run(&cfg, &data, &mut std::io::sink())?;
            total += out.reports.last().unwrap().metrics.auc.unwrap_or(f64::NAN);
        }
        println!("{:<13} mean AUC {:.4}", ablation.name(), total / seeds as f64);
    }
    Ok(())
}
