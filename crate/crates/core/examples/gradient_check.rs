//! Compares the analytic gradient of the full seven-term loss against
//! central finite differences on a small random instance.

use rand_distr::{Distribution, StandardNormal};

use ccrec::augment::{Strategy, StrategyState};
use ccrec::data::{FeatureTable, TrainingInstance};
use ccrec::model::{ModelParams, PARAM_NAMES};
use ccrec::objectives::MarginConfig;
use ccrec::rng::substream;
use ccrec::train::{batch_gradients, plan_augmentations, LossTerms};

fn main() -> ccrec::Result<()> {
    let dim = 4;
    let mut rng = substream(7, "features", 0);
    let values = (0..24 * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let features = FeatureTable::new(24, dim, values)?;
    let inst = TrainingInstance {
        user: 0,
        history: vec![0, 1, 2, 3],
        targets: vec![(10, true), (11, false), (12, true)],
    };
    let params = ModelParams::init(dim, &mut substream(7, "init", 0))?;
    let pool: Vec<usize> = (14..22).collect();
    let state = StrategyState::new(Strategy::Random);
    let augs = plan_augmentations(&params, &features, &[&inst.history], &pool, 2, 2, &state, &mut [
        substream(7, "augment", 0),
    ])?;
    let margin = MarginConfig::default();
    let batch = [&inst];
    let (loss, grads) = batch_gradients(&params, &features, &batch, &augs, &margin, LossTerms::ALL)?;
    println!("loss {loss}");

    let h = 1e-4;
    let total_at = |ti: usize, k: usize, s: f64| {
        let mut p = params.clone();
        p.tensors_mut()[ti].data_mut()[k] += s * h;
        batch_gradients(&p, &features, &batch, &augs, &margin, LossTerms::ALL).map(|r| r.0.total)
    };
    for (ti, g) in grads.iter().enumerate() {
        let mut worst = 0.0f64;
        for k in 0..g.len() {
            let num = (8.0 * (total_at(ti, k, 1.0)? - total_at(ti, k, -1.0)?)
                - (total_at(ti, k, 2.0)? - total_at(ti, k, -2.0)?))
                / (12.0 * h);
            let a = g.data()[k];
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-8));
        }
        println!("{:<8} {:>3} entries  max rel err {worst:.2e}", PARAM_NAMES[ti], g.len());
    }
    Ok(())
}
