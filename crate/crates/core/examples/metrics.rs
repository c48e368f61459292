//! AUC and Precision/Recall/F1 at K on hand-made predictions.

use ccrec::eval::{auc, precision_recall_f1_at_k, RankedTarget, UserPredictions};

fn user(user: u64, rows: &[(usize, f64, bool)]) -> UserPredictions {
    let targets = rows.iter().map(|&(item, score, label)| RankedTarget { item, score, label }).collect();
    UserPredictions { user, targets }
}

fn main() -> ccrec::Result<()> {
    let users = [
        user(1, &[(0, 0.9, true), (1, 0.8, false), (2, 0.1, true), (3, 0.05, false)]),
        user(2, &[(4, 0.7, false), (5, 0.7, true), (6, 0.2, false)]),
        user(3, &[(7, 0.4, false)]),
    ];
    let flat: Vec<(f64, bool)> = users.iter().flat_map(|u| u.targets.iter().map(|t| (t.score, t.label))).collect();
    println!("AUC {:.4}", auc(&flat)?);
    for k in [1, 2, 50] {
        let m = precision_recall_f1_at_k(&users, k)?;
        println!("k={k:<3} P {:.4}  R {:.4}  F1 {:.4}", m.precision, m.recall, m.f1);
    }
    Ok(())
}
