use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{FeatureTable, Interaction, ItemId, UserId};
use crate::diffmath::sigmoid;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Parameters of the latent-factor click simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Observed feature dimension.
    pub dim: usize,
    pub latent_dim: usize,
    /// Probability that a sampled label is flipped.
    pub click_noise_rate: f64,
    pub seed: u64,
    /// Distinct items shown to each user, in timestamp order.
    pub exposures_per_user: usize,
    /// Sharpness of the click link: `p = sigmoid(signal_scale · u·v / √latent_dim)`.
    pub signal_scale: f64,
    /// Std of isotropic noise added to the lifted item factors.
    pub feature_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 200,
            n_items: 500,
            dim: 16,
            latent_dim: 8,
            click_noise_rate: 0.1,
            seed: 0,
            exposures_per_user: 100,
            signal_scale: 6.0,
            feature_noise: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if !(0.0..=0.5).contains(&self.click_noise_rate) {
            return fail("click_noise_rate must lie in [0, 0.5]");
        }
        if self.dim == 0 || self.latent_dim == 0 {
            return fail("dim and latent_dim must be positive");
        }
        if self.latent_dim > self.dim {
            return fail("latent_dim may not exceed dim");
        }
        if self.n_items == 0 || self.n_users == 0 {
            return fail("n_users and n_items must be positive");
        }
        if self.exposures_per_user > self.n_items {
            return fail("exposures_per_user may not exceed n_items");
        }
        if !self.signal_scale.is_finite() || self.feature_noise < 0.0 {
            return fail("signal_scale must be finite and feature_noise non-negative");
        }
        Ok(())
    }
}

/// A generated corpus together with the latent truth that produced it.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub features: FeatureTable,
    pub interactions: Vec<Interaction>,
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
}

impl SyntheticCorpus {
    /// `u·v / √latent_dim`, the noiseless click logit before sharpening.
    pub fn latent_score(&self, user: UserId, item: ItemId) -> f64 {
        let u = &self.user_factors[user as usize];
        let v = &self.item_factors[item];
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        dot / (u.len() as f64).sqrt()
    }
}

fn gaussian_rows(rows: usize, cols: usize, rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Modified Gram-Schmidt over the rows; assumes full row rank.
fn orthonormalize(rows: &mut [Vec<f64>]) {
    for i in 0..rows.len() {
        for j in 0..i {
            let proj: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = rows.split_at_mut(i);
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= proj * b;
            }
        }
        let norm = rows[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        rows[i].iter_mut().for_each(|a| *a /= norm);
    }
}

/// Generates features and a click log; a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let seed = spec.seed;
    let user_factors = gaussian_rows(
        spec.n_users,
        spec.latent_dim,
        &mut substream(seed, "synthetic-users", 0),
    );
    let item_factors = gaussian_rows(
        spec.n_items,
        spec.latent_dim,
        &mut substream(seed, "synthetic-items", 0),
    );
    let mut lift = gaussian_rows(
        spec.latent_dim,
        spec.dim,
        &mut substream(seed, "synthetic-lift", 0),
    );
    orthonormalize(&mut lift);

    let mut noise_rng = substream(seed, "synthetic-feature-noise", 0);
    let mut rows = Vec::with_capacity(spec.n_items * spec.dim);
    for factor in &item_factors {
        for c in 0..spec.dim {
            let lifted: f64 = factor.iter().zip(&lift).map(|(q, l)| q * l[c]).sum();
            let eps: f64 = noise_rng.sample(StandardNormal);
            rows.push(lifted + spec.feature_noise * eps);
        }
    }
    let features = FeatureTable::new(spec.n_items, spec.dim, rows)?;

    let norm = (spec.latent_dim as f64).sqrt();
    let mut interactions = Vec::with_capacity(spec.n_users * spec.exposures_per_user);
    for (user, u) in user_factors.iter().enumerate() {
        let mut rng = substream(seed, "synthetic-exposures", user as u64);
        let shown = rand::seq::index::sample(&mut rng, spec.n_items, spec.exposures_per_user);
        for (t, item) in shown.into_iter().enumerate() {
            let dot: f64 = u.iter().zip(&item_factors[item]).map(|(a, b)| a * b).sum();
            let p = sigmoid(spec.signal_scale * dot / norm);
            let mut clicked = rng.random::<f64>() < p;
            if rng.random::<f64>() < spec.click_noise_rate {
                clicked = !clicked;
            }
            interactions.push(Interaction {
                user: user as UserId,
                item,
                timestamp: t as i64,
                clicked,
            });
        }
    }

    Ok(SyntheticCorpus {
        features,
        interactions,
        user_factors,
        item_factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let spec = SyntheticSpec {
            click_noise_rate: 0.0,
            n_users: 20,
            n_items: 60,
            exposures_per_user: 30,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.interactions, b.interactions);
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.interactions, c.interactions);
    }

    fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn full_noise_decorrelates_labels() {
        let spec = SyntheticSpec { click_noise_rate: 0.5, ..SyntheticSpec::default() };
        let c = generate_synthetic(&spec).unwrap();
        assert!(c.interactions.len() >= 10_000);
        let scores: Vec<f64> = c.interactions.iter().map(|r| c.latent_score(r.user, r.item)).collect();
        let labels: Vec<f64> = c.interactions.iter().map(|r| f64::from(u8::from(r.clicked))).collect();
        let r = pearson(&scores, &labels);
        assert!(r.abs() < 0.05, "r = {r}");
    }

    #[test]
    fn noise_free_labels_follow_latent_scores() {
        let spec = SyntheticSpec { click_noise_rate: 0.0, ..SyntheticSpec::default() };
        let c = generate_synthetic(&spec).unwrap();
        let preds: Vec<(f64, bool)> =
            c.interactions.iter().map(|r| (c.latent_score(r.user, r.item), r.clicked)).collect();
        let a = crate::eval::auc(&preds).unwrap();
        assert!(a > 0.95, "Bayes AUC {a}");
    }

    #[test]
    fn lift_is_orthonormal() {
        let mut rows = gaussian_rows(4, 9, &mut substream(3, "t", 0));
        orthonormalize(&mut rows);
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = SyntheticSpec::default();
        for bad in [
            SyntheticSpec { click_noise_rate: 0.6, ..base.clone() },
            SyntheticSpec { latent_dim: 32, ..base.clone() },
            SyntheticSpec { exposures_per_user: 1000, ..base.clone() },
            SyntheticSpec { dim: 0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
