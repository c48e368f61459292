use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::rng::substream;

fn cfg() -> MarginConfig {
    MarginConfig::default()
}

fn val(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

#[test]
fn distance_examples() {
    let mut tape = Tape::new();
    let x = constant_vector(&mut tape, &[0.3, -2.0, 1.0]);
    let d = distance(&mut tape, x, x).unwrap();
    assert!(val(&tape, d).abs() < 1e-15);
    let a = constant_vector(&mut tape, &[1.0, 0.0]);
    let b = constant_vector(&mut tape, &[-1.0, 0.0]);
    let c = constant_vector(&mut tape, &[0.0, 1.0]);
    let d = distance(&mut tape, a, b).unwrap();
    assert_eq!(val(&tape, d), 2.0);
    let d = distance(&mut tape, a, c).unwrap();
    assert_eq!(val(&tape, d), 1.0);
    let z = constant_vector(&mut tape, &[0.0, 0.0]);
    assert!(matches!(distance(&mut tape, a, z), Err(Error::Domain(_))));
}

#[test]
fn margin_examples() {
    let c = cfg();
    assert_eq!(adaptive_margin(1.2, 0.8, MarginMode::Sum, &c), 1.5);
    assert_eq!(adaptive_margin(0.3, 0.3, MarginMode::Diff, &c), 0.5);
    assert!((adaptive_margin(0.4, 0.5, MarginMode::Sum, &c) - 0.9).abs() < 1e-15);
    assert!(MarginConfig { delta_l: 2.0, ..c }.validate().is_err());
    assert!(MarginConfig { delta_s: 0.0, ..c }.validate().is_err());
}

/// Representations in the plane at angle θ from the query `[1, 0]`, so
/// `d = 1 − cos θ` can be set exactly.
fn at_distance(tape: &mut Tape, d: f64) -> Var {
    let cos = 1.0 - d;
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    constant_vector(tape, &[cos, sin])
}

#[test]
fn ccl_hinge_examples() {
    let c = MarginConfig { delta_s: 1.0, delta_l: 0.5, delta_u: 0.5 };
    let mut tape = Tape::new();
    let q = constant_vector(&mut tape, &[1.0, 0.0]);
    let p = at_distance(&mut tape, 0.2);
    let n = at_distance(&mut tape, 0.9);
    let l = loss_ccl(&mut tape, q, &[(p, 0.1)], &[(n, 0.1)], &c).unwrap();
    assert_eq!(val(&tape, l), 0.0);
    let p = at_distance(&mut tape, 0.8);
    let n = at_distance(&mut tape, 0.4);
    let l = loss_ccl(&mut tape, q, &[(p, 0.1)], &[(n, 0.1)], &c).unwrap();
    assert!((val(&tape, l) - 0.9).abs() < 1e-12);
    assert!(loss_ccl(&mut tape, q, &[], &[(n, 0.1)], &c).is_err());
}

#[test]
fn ccl_pairwise_empty_cases() {
    let mut tape = Tape::new();
    let q = constant_vector(&mut tape, &[1.0, 0.0]);
    let a = at_distance(&mut tape, 0.7);
    let b = at_distance(&mut tape, 0.1);
    let l = loss_ccl_pos(&mut tape, q, &[(a, 0.4)], &cfg()).unwrap();
    assert_eq!(val(&tape, l), 0.0);
    let l = loss_ccl_pos(&mut tape, q, &[(a, 0.4), (b, 0.4)], &cfg()).unwrap();
    assert_eq!(val(&tape, l), 0.0);
    let l = loss_ccl_neg(&mut tape, q, &[(a, 0.4), (b, 0.4)], &cfg()).unwrap();
    assert_eq!(val(&tape, l), 0.0);
}

#[test]
fn pairwise_directions() {
    let c = cfg();
    let mut tape = Tape::new();
    let q = constant_vector(&mut tape, &[1.0, 0.0]);
    let near = at_distance(&mut tape, 0.1);
    let far = at_distance(&mut tape, 1.9);
    // better positive already much closer: only the margin remains
    let good = loss_ccl_pos(&mut tape, q, &[(near, 0.9), (far, 0.1)], &c).unwrap();
    let bad = loss_ccl_pos(&mut tape, q, &[(near, 0.1), (far, 0.9)], &c).unwrap();
    assert!(val(&tape, good) < val(&tape, bad));
    // harder negative already farther
    let good = loss_ccl_neg(&mut tape, q, &[(near, 0.1), (far, 0.9)], &c).unwrap();
    let bad = loss_ccl_neg(&mut tape, q, &[(near, 0.9), (far, 0.1)], &c).unwrap();
    assert!(val(&tape, good) < val(&tape, bad));
}

#[test]
fn ce_examples() {
    let mut tape = Tape::new();
    let p = constant_vector(&mut tape, &[0.5]);
    let l = loss_ce(&mut tape, p, &[true], CeVariant::Query).unwrap();
    assert!((val(&tape, l) - 2f64.ln()).abs() < 1e-15);

    let p = constant_vector(&mut tape, &[0.3, 0.9]);
    let l = loss_ce(&mut tape, p, &[false, false], CeVariant::Negative).unwrap();
    assert_eq!(val(&tape, l), 0.0);

    let p = constant_vector(&mut tape, &[0.7, 0.2]);
    let l = loss_ce(&mut tape, p, &[true, false], CeVariant::Negative).unwrap();
    assert!((val(&tape, l) - 1.2040).abs() < 1e-4);
    assert!((val(&tape, l) + (0.3f64).ln()).abs() < 1e-12);

    // saturated predictions are clamped rather than producing infinities
    let p = constant_vector(&mut tape, &[0.0, 1.0]);
    let l = loss_ce(&mut tape, p, &[true, false], CeVariant::Positive).unwrap();
    assert!(val(&tape, l).is_finite());
    assert!((val(&tape, l) - 2.0 * -(PROB_FLOOR.ln())).abs() < 1e-3);
}

#[test]
fn cui_examples() {
    let mut tape = Tape::new();
    let p = constant_vector(&mut tape, &[0.7, 0.2]);
    let l = loss_cui(&mut tape, p, &[true, false], &[vec![0, 1]]).unwrap();
    let want = -(0.7f64.exp() / (0.7f64.exp() + 0.2f64.exp())).ln();
    assert!((val(&tape, l) - want).abs() < 1e-15);
    assert!((val(&tape, l) - 0.4741).abs() < 1e-4);

    let p = constant_vector(&mut tape, &[0.7, 0.4]);
    let l = loss_cui(&mut tape, p, &[true, true], &[vec![0, 1]]).unwrap();
    assert!(val(&tape, l).abs() < 1e-15);

    // users with nothing clicked are skipped
    let l = loss_cui(&mut tape, p, &[false, false], &[vec![0, 1], vec![]]).unwrap();
    assert_eq!(val(&tape, l), 0.0);

    let shifted = constant_vector(&mut tape, &[3.7, 3.2]);
    let l2 = loss_cui(&mut tape, shifted, &[true, false], &[vec![0, 1]]).unwrap();
    assert!((val(&tape, l2) - want).abs() < 1e-12);
}

#[test]
fn total_is_the_plain_sum() {
    let mut tape = Tape::new();
    let zeros: [Var; 7] = std::array::from_fn(|_| tape.scalar(0.0));
    let b = total_loss(&mut tape, zeros).unwrap();
    assert_eq!(b.values(&tape).total, 0.0);

    let vals = [0.3, 1.7, 0.0, 2.25, 0.125, 9.5, 0.01];
    let terms: [Var; 7] = std::array::from_fn(|i| tape.scalar(vals[i]));
    let b = total_loss(&mut tape, terms).unwrap();
    let v = b.values(&tape);
    assert!((v.total - vals.iter().sum::<f64>()).abs() < 1e-12);
    assert_eq!(v.get("l_ce-"), Some(9.5));
    assert_eq!(v.to_string(), format!("{} 0.3 1.7 0 2.25 0.125 9.5 0.01", v.total));
}

// -- brute-force scalar oracles --------------------------------------------

fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

fn clamp_margin(x: f64, c: &MarginConfig) -> f64 {
    let x = x * c.delta_s;
    if x < c.delta_l {
        c.delta_l
    } else if x > c.delta_u {
        c.delta_u
    } else {
        x
    }
}

fn oracle_ccl(q: &[f64], pos: &[(Vec<f64>, f64)], neg: &[(Vec<f64>, f64)], c: &MarginConfig) -> f64 {
    let mut s = 0.0;
    for (p, ap) in pos {
        for (n, an) in neg {
            s += f64::max(cos_dist(q, p) - cos_dist(q, n) + clamp_margin(ap + an, c), 0.0);
        }
    }
    s
}

fn oracle_pairwise(q: &[f64], reps: &[(Vec<f64>, f64)], c: &MarginConfig, harder_farther: bool) -> f64 {
    let mut s = 0.0;
    for (ui, ai) in reps {
        for (uk, ak) in reps {
            if ak < ai {
                let m = clamp_margin(ai - ak, c);
                let (di, dk) = (cos_dist(q, ui), cos_dist(q, uk));
                let gap = if harder_farther { dk - di } else { di - dk };
                s += f64::max(gap + m, 0.0);
            }
        }
    }
    s
}

fn oracle_ce(preds: &[f64], labels: &[bool], negative_variant: bool) -> f64 {
    let mut s = 0.0;
    for (p, y) in preds.iter().zip(labels) {
        let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        if negative_variant {
            if *y {
                s -= (1.0 - p).ln();
            }
        } else if *y {
            s -= p.ln();
        } else {
            s -= (1.0 - p).ln();
        }
    }
    s
}

fn oracle_cui(preds: &[f64], labels: &[bool], groups: &[Vec<usize>]) -> f64 {
    let mut s = 0.0;
    for g in groups {
        let sp: f64 = g.iter().filter(|&&i| labels[i]).map(|&i| preds[i].exp()).sum();
        let sn: f64 = g.iter().filter(|&&i| !labels[i]).map(|&i| preds[i].exp()).sum();
        if sp > 0.0 {
            s -= (sp / (sp + sn)).ln();
        }
    }
    s
}

fn rand_vec(rng: &mut crate::rng::Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn losses_match_brute_force() {
    for case in 0..150u64 {
        let mut rng = substream(case, "oracle", 0);
        let d = rng.random_range(2..6);
        let np = rng.random_range(1..5);
        let nn = rng.random_range(1..5);
        let c = MarginConfig {
            delta_s: rng.random_range(0.5..2.0),
            delta_l: rng.random_range(0.1..0.6),
            delta_u: rng.random_range(0.7..1.5),
        };
        let q = rand_vec(&mut rng, d);
        let pos: Vec<(Vec<f64>, f64)> =
            (0..np).map(|_| (rand_vec(&mut rng, d), rng.random_range(0.0..1.0))).collect();
        let neg: Vec<(Vec<f64>, f64)> =
            (0..nn).map(|_| (rand_vec(&mut rng, d), rng.random_range(0.0..1.0))).collect();

        let mut tape = Tape::new();
        let qv = constant_vector(&mut tape, &q);
        let pv: Vec<(Var, f64)> = pos.iter().map(|(u, a)| (constant_vector(&mut tape, u), *a)).collect();
        let nv: Vec<(Var, f64)> = neg.iter().map(|(u, a)| (constant_vector(&mut tape, u), *a)).collect();

        let l = loss_ccl(&mut tape, qv, &pv, &nv, &c).unwrap();
        assert!((val(&tape, l) - oracle_ccl(&q, &pos, &neg, &c)).abs() <= 1e-10);
        let l = loss_ccl_pos(&mut tape, qv, &pv, &c).unwrap();
        assert!((val(&tape, l) - oracle_pairwise(&q, &pos, &c, false)).abs() <= 1e-10);
        let l = loss_ccl_neg(&mut tape, qv, &nv, &c).unwrap();
        assert!((val(&tape, l) - oracle_pairwise(&q, &neg, &c, true)).abs() <= 1e-10);

        let m = rng.random_range(1..12);
        let preds: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        let p = constant_vector(&mut tape, &preds);
        for (variant, neg_variant) in [(CeVariant::Query, false), (CeVariant::Positive, false), (CeVariant::Negative, true)] {
            let l = loss_ce(&mut tape, p, &labels, variant).unwrap();
            assert!((val(&tape, l) - oracle_ce(&preds, &labels, neg_variant)).abs() <= 1e-10);
        }
        let mut groups = vec![Vec::new(); rng.random_range(1..4)];
        for i in 0..m {
            let g = rng.random_range(0..groups.len());
            groups[g].push(i);
        }
        let l = loss_cui(&mut tape, p, &labels, &groups).unwrap();
        assert!((val(&tape, l) - oracle_cui(&preds, &labels, &groups)).abs() <= 1e-10);
    }
}

#[test]
fn moving_a_positive_onto_the_query_lowers_ccl() {
    let mut tape = Tape::new();
    let q = constant_vector(&mut tape, &[0.6, -0.8, 0.1]);
    let p = constant_vector(&mut tape, &[-0.2, 0.4, 0.9]);
    let n = constant_vector(&mut tape, &[0.5, -0.1, 0.3]);
    let before = loss_ccl(&mut tape, q, &[(p, 0.3)], &[(n, 0.2)], &cfg()).unwrap();
    let after = loss_ccl(&mut tape, q, &[(q, 0.3)], &[(n, 0.2)], &cfg()).unwrap();
    assert!(val(&tape, after) < val(&tape, before));
}

#[test]
fn margin_shift_leaves_gradients_alone() {
    // an interior margin is an additive constant inside an active hinge
    let c = MarginConfig { delta_s: 1.0, delta_l: 0.1, delta_u: 1.9 };
    let grad_for = |a: f64| {
        let mut tape = Tape::new();
        let q = tape.param(Tensor::vector(vec![0.6, -0.8, 0.1]));
        let p = tape.param(Tensor::vector(vec![-0.2, 0.4, 0.9]));
        let n = tape.param(Tensor::vector(vec![0.5, -0.1, 0.3]));
        let l = loss_ccl(&mut tape, q, &[(p, a)], &[(n, 0.2)], &c).unwrap();
        tape.backward(l).unwrap();
        (val(&tape, l), tape.grad(q).unwrap().clone())
    };
    let (l0, g0) = grad_for(0.3);
    let (l1, g1) = grad_for(0.3 + 1e-3);
    assert!((l1 - l0 - 1e-3).abs() < 1e-12);
    assert_eq!(g0, g1);
}

proptest! {
    #[test]
    fn margin_stays_in_bounds(a in 0.0f64..20.0, b in 0.0f64..20.0, s in 0.01f64..5.0, diff in any::<bool>()) {
        let c = MarginConfig { delta_s: s, delta_l: 0.5, delta_u: 1.5 };
        let mode = if diff { MarginMode::Diff } else { MarginMode::Sum };
        let m = adaptive_margin(a, b, mode, &c);
        prop_assert!((0.5..=1.5).contains(&m));
    }

    #[test]
    fn distance_is_scale_invariant(
        a in proptest::collection::vec(-2.0f64..2.0, 3),
        b in proptest::collection::vec(-2.0f64..2.0, 3),
        c in 0.01f64..100.0,
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let mut tape = Tape::new();
        let av = constant_vector(&mut tape, &a);
        let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
        let sv = constant_vector(&mut tape, &scaled);
        let bv = constant_vector(&mut tape, &b);
        let d1 = distance(&mut tape, av, bv).unwrap();
        let d2 = distance(&mut tape, sv, bv).unwrap();
        prop_assert!((val(&tape, d1) - val(&tape, d2)).abs() < 1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&val(&tape, d1)));
    }

    #[test]
    fn all_terms_non_negative(seed in any::<u64>()) {
        let mut rng = substream(seed, "nonneg", 0);
        let mut tape = Tape::new();
        let q = constant_vector(&mut tape, &rand_vec(&mut rng, 3));
        let reps: Vec<(Var, f64)> = (0..3)
            .map(|_| {
                let v = rand_vec(&mut rng, 3);
                (constant_vector(&mut tape, &v), rng.random_range(0.0..2.0))
            })
            .collect();
        let ls = [
            loss_ccl(&mut tape, q, &reps[..2], &reps[2..], &cfg()).unwrap(),
            loss_ccl_pos(&mut tape, q, &reps, &cfg()).unwrap(),
            loss_ccl_neg(&mut tape, q, &reps, &cfg()).unwrap(),
        ];
        for l in ls {
            prop_assert!(val(&tape, l) >= 0.0);
        }
    }
}
