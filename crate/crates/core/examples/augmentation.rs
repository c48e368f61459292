//! Builds positive and negative variants of one history under every
//! sampling strategy and prints their hardness.

use ccrec::augment::{construct, dump_line, HardnessSummary, Polarity, Strategy, StrategyState};
use ccrec::data::{sample_substitute_pool, SyntheticSpec};
use ccrec::model::ModelParams;
use ccrec::rng::substream;
use ccrec::train::{score_histories, Dataset};

fn main() -> ccrec::Result<()> {
    let data = Dataset::synthetic(&SyntheticSpec::default(), 50)?;
    let inst = data.eval.iter().max_by_key(|i| i.history.len()).unwrap();
    let params = ModelParams::init(data.features.dim(), &mut substream(0, "init", 0))?;
    let pool = sample_substitute_pool(data.features.n_items(), 256, &Default::default(), &mut substream(0, "pool", 0))?;
    let scores = &score_histories(&params, &data.features, &[inst.history.as_slice()], &pool)?[0];
    println!("user {} with {} behaviors", inst.user, inst.history.len());

    let mut rng = substream(0, "augment", 0);
    let first = construct(&inst.history, &scores.alpha, &scores.beta, &pool, Polarity::Negative, 2, &StrategyState::new(Strategy::Random), &mut rng)?;
    for a in &first {
        println!("{}", dump_line(inst.user, a, &pool));
    }
    println!();
    for strategy in Strategy::ALL {
        let state = StrategyState::at(strategy, 0.5)?;
        let mut line = format!("{:<10}", strategy.name());
        for polarity in [Polarity::Positive, Polarity::Negative] {
            let augs = construct(&inst.history, &scores.alpha, &scores.beta, &pool, polarity, 500, &state, &mut rng)?;
            let s = HardnessSummary::of(&augs).unwrap();
            line += &format!("  {polarity}: mean {:.4} [{:.4}, {:.4}]", s.mean, s.min, s.max);
        }
        println!("{line}");
    }
    Ok(())
}
