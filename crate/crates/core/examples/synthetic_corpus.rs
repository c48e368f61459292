//! Generates a synthetic click corpus, writes it in the on-disk formats, and
//! reads it back through a run configuration.

use ccrec::config::RunConfig;
use ccrec::data::{generate_synthetic, write_interactions, SyntheticSpec};
use ccrec::eval::auc;

fn main() -> ccrec::Result<()> {
    let spec = SyntheticSpec { click_noise_rate: 0.0, ..SyntheticSpec::default() };
    let corpus = generate_synthetic(&spec)?;
    let clicks = corpus.interactions.iter().filter(|r| r.clicked).count();
    println!(
        "{} exposures, {} clicks, {} items x {} features",
        corpus.interactions.len(),
        clicks,
        corpus.features.n_items(),
        corpus.features.dim()
    );
    let scored: Vec<(f64, bool)> = corpus
        .interactions
        .iter()
        .map(|r| (corpus.latent_score(r.user, r.item), r.clicked))
        .collect();
    println!("AUC of the latent score on noise-free labels: {:.4}", auc(&scored)?);

    let dir = std::env::temp_dir().join("ccrec-synthetic-corpus");
    std::fs::create_dir_all(&dir).map_err(|e| ccrec::Error::Io { path: dir.clone(), source: e })?;
    let features = dir.join("features.bin");
    let log = dir.join("interactions.tsv");
    corpus.features.save(&features)?;
    write_interactions(&log, &corpus.interactions)?;

    let cfg = RunConfig::parse(
        &format!("[data]\nfeatures = {}\ninteractions = {}\n", features.display(), log.display()),
        "inline",
    )?;
    let data = cfg.dataset()?;
    println!(
        "reloaded from {}: {} training instances, {} held-out",
        dir.display(),
        data.train.len(),
        data.eval.len()
    );
    Ok(())
}
