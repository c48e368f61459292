use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
[train]
epochs = 1
batch_size = 8
n_z = 20
n_p = 2
n_n = 2

[synthetic]
n_users = 16
n_items = 80
dim = 4
latent_dim = 2
exposures_per_user = 12
";

fn ccrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccrec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Trains the tiny config into `dir/out` and returns the config path.
fn trained(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, TINY);
    let out = dir.join("out");
    let o = ccrec(&["train", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    cfg
}

#[test]
fn help_lists_subcommands() {
    let o = ccrec(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = text(&o.stdout);
    for sub in ["train", "evaluate", "inspect-augmentations", "export-embeddings"] {
        assert!(help.contains(sub), "{help}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let o = ccrec(&["train", "--config", s(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let cfg = write_config(dir.path(), TINY);
    let o = ccrec(&["train", "--config", s(&cfg), "--strategy", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    for name in ["random", "harder", "easier", "easy2hard", "hard2easy"] {
        assert!(err.contains(name), "{err}");
    }

    let o = ccrec(&["evaluate", "--config", s(&cfg), "--checkpoint", s(&dir.path().join("none.cclm"))]);
    assert_eq!(o.status.code(), Some(2));

    let bad = write_config(dir.path(), "[train]\nepochs = 1\nspeed = 3\n[synthetic]\n");
    let o = ccrec(&["train", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("run.cfg:3:"), "{}", text(&o.stderr));
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let out = dir.path().join("out");
    let log = std::fs::read_to_string(out.join("metrics.log")).unwrap();
    assert!(log.starts_with("epoch 0 "));
    let last = log.lines().rfind(|l| l.starts_with("epoch 1 ")).unwrap();

    let ckpt = out.join("checkpoint.cclm");
    let o = ccrec(&["evaluate", "--config", s(&cfg), "--checkpoint", s(&ckpt)]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let printed = text(&o.stdout);
    assert_eq!(printed.trim_end(), last.trim_start_matches("epoch 1 "));
    assert_eq!(printed.split_whitespace().count(), 4);
}

#[test]
fn resume_continues_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let ckpt = dir.path().join("out/checkpoint.cclm");
    let again = dir.path().join("again");
    let o = ccrec(&["train", "--config", s(&cfg), "--out-dir", s(&again), "--resume", s(&ckpt), "--epochs", "0"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(again.join("checkpoint.cclm")).unwrap());
}

#[test]
fn inspect_augmentations_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let header = "user polarity hardness replacements";

    let o = ccrec(&["inspect-augmentations", "--config", s(&cfg), "--user", "3", "--n", "0"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout), format!("{header}\n"));

    let args = ["inspect-augmentations", "--config", s(&cfg), "--user", "3", "--n", "4"];
    let a = ccrec(&args);
    let b = ccrec(&args);
    assert!(a.status.success(), "{}", text(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let out = text(&a.stdout);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], header);
    assert_eq!(lines.len(), 1 + 2 * (4 + 1));
    for line in lines.iter().skip(1).filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split(' ').collect();
        assert_eq!(f.len(), 4, "{line}");
        assert_eq!(f[0], "3");
        assert!(["positive", "negative"].contains(&f[1]), "{line}");
        let h: f64 = f[2].parse().unwrap();
        assert!(h > 0.0);
        for swap in f[3].split(',') {
            let (pos, item) = swap.split_once(':').unwrap();
            pos.parse::<usize>().unwrap();
            item.parse::<usize>().unwrap();
        }
    }
    assert_eq!(lines.iter().filter(|l| l.starts_with("# ")).count(), 2);
}

#[test]
fn export_embeddings_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let ckpt = dir.path().join("out/checkpoint.cclm");
    let csv = dir.path().join("emb.csv");
    let o = ccrec(&[
        "export-embeddings", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--users", "3", "--out", s(&csv),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let body = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "user_id,role,hardness,dim_0,dim_1,dim_2,dim_3");
    assert_eq!(lines.len(), 1 + 3 * (1 + 2 + 2));
}

#[test]
fn untrained_checkpoints_score_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[train]\nepochs = 0\n\n[synthetic]\nclick_noise_rate = 0\n");
    let seeds = 6;
    let mut total = 0.0;
    for seed in 0..seeds {
        let out = dir.path().join(format!("s{seed}"));
        let seed = seed.to_string();
        let o = ccrec(&["train", "--config", s(&cfg), "--out-dir", s(&out), "--seed", &seed]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let ckpt = out.join("checkpoint.cclm");
        let o = ccrec(&["evaluate", "--config", s(&cfg), "--checkpoint", s(&ckpt)]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        total += text(&o.stdout).split_whitespace().next().unwrap().parse::<f64>().unwrap();
    }
    let mean = total / f64::from(seeds);
    assert!((mean - 0.5).abs() <= 0.05, "mean untrained AUC {mean}");
}
