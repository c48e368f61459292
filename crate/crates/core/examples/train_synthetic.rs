//! Trains on the default synthetic corpus and prints held-out metrics per
//! epoch.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [epochs] [seed]
//! ```

use std::time::Instant;

use ccrec::data::SyntheticSpec;
use ccrec::train::{run, Dataset, TrainConfig};

fn main() -> ccrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(10, |a| a.parse().expect("epochs"));
    let seed = args.next().map_or(0, |a| a.parse().expect("seed"));

    let data = Dataset::synthetic(&SyntheticSpec::default(), 50)?;
    println!(
        "{} training instances, {} held-out targets, {} features per item",
        data.train.len(),
        data.eval.len(),
        data.features.dim()
    );
    let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
    let started = Instant::now();
    let out = run(&cfg, &data, &mut std::io::sink())?;
    for r in &out.reports {
        let loss = r.stats.mean_loss.map_or("-".to_string(), |l| format!("{:.4}", l.total));
        let auc = r.metrics.auc.map_or(f64::NAN, |a| a);
        println!("epoch {:>2}  loss {loss:>9}  auc {auc:.4}", r.epoch);
    }
    println!("{:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
