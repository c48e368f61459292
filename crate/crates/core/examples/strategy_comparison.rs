//! Trains once per sampling strategy and writes one metrics log each, for
//! plotting training curves side by side.
//!
//! ```text
//! cargo run --release --example strategy_comparison -- [out_dir] [epochs]
//! ```

use ccrec::data::SyntheticSpec;
use ccrec::train::{compare_strategies, Dataset, TrainConfig};

fn main() -> ccrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "strategy-logs".into());
    let epochs = args.next().map_or(3, |a| a.parse().expect("epochs"));
    let spec = SyntheticSpec { n_users: 100, exposures_per_user: 60, ..SyntheticSpec::default() };
    let data = Dataset::synthetic(&spec, 50)?;
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    for (strategy, run) in compare_strategies(&cfg, &data, out.as_ref())? {
        let aucs: Vec<String> = run
            .reports
            .iter()
            .map(|r| r.metrics.auc.map_or("nan".into(), |a| format!("{a:.3}")))
            .collect();
        println!("{:<10} {}", strategy.name(), aucs.join(" "));
    }
    println!("logs in {out}/metrics-<strategy>.log");
    Ok(())
}
