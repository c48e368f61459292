//! Trains briefly, then exports query and augmented representations of a
//! few users to CSV for an offline 2-D projection.

use ccrec::augment::Strategy;
use ccrec::data::SyntheticSpec;
use ccrec::eval::{export_case_study, CaseStudyConfig};
use ccrec::train::{run, Dataset, TrainConfig};

fn main() -> ccrec::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "case.csv".into());
    let spec = SyntheticSpec { n_users: 60, exposures_per_user: 60, ..SyntheticSpec::default() };
    let data = Dataset::synthetic(&spec, 50)?;
    let trained = run(&TrainConfig { epochs: 2, ..TrainConfig::default() }, &data, &mut std::io::sink())?;
    let cfg = CaseStudyConfig { n_users: 2, n_p: 8, n_n: 8, n_z: 256, strategy: Strategy::Random, seed: 0 };
    let rows = export_case_study(&trained.params, &data.features, &data.train, &cfg, out.as_ref())?;
    println!("wrote {rows} rows to {out}");
    Ok(())
}
