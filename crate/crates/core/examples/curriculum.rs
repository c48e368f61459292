//! Shows how the easy-to-hard curriculum shifts substitute sampling weights
//! and the resulting negative hardness as training progresses.

use rand::Rng as _;

use ccrec::augment::{construct, sampling_weights, HardnessSummary, Polarity, Strategy, StrategyState};
use ccrec::diffmath::Tensor;
use ccrec::rng::substream;

fn main() -> ccrec::Result<()> {
    let scores = [-1.0, 0.0, 1.0, 2.0];
    println!("relatedness scores {scores:?}");
    for step in 0..=4 {
        let t = step as f64 / 4.0;
        let state = StrategyState::at(Strategy::Easy2Hard, t)?;
        let w = sampling_weights(&scores, Polarity::Negative, &state);
        let w: Vec<String> = w.iter().map(|x| format!("{x:.3}")).collect();
        println!("progress {t:.2}  negative weights [{}]", w.join(", "));
    }

    let history = [0, 1, 2, 3, 4, 5, 6, 7];
    let alpha = [1.2, -0.3, 0.8, 0.1, 2.0, -1.0, 0.4, 0.0];
    let pool: Vec<usize> = (100..132).collect();
    let mut rng = substream(1, "beta", 0);
    let values = (0..8 * 32).map(|_| rng.random_range(-2.0..2.0)).collect();
    let beta = Tensor::new(vec![8, 32], values)?;
    let mut state = StrategyState::new(Strategy::Easy2Hard);
    let mut rng = substream(1, "augment", 0);
    println!();
    for decile in 0..=10 {
        state.advance_to(decile as f64 / 10.0)?;
        let augs = construct(&history, &alpha, &beta, &pool, Polarity::Negative, 400, &state, &mut rng)?;
        let s = HardnessSummary::of(&augs).unwrap();
        println!("progress {:.1}  mean negative hardness {:.4}", state.progress(), s.mean);
    }
    Ok(())
}
