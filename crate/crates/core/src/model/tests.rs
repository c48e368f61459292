use super::*;
use crate::rng::substream;

fn table(rows: &[&[f64]]) -> FeatureTable {
    let dim = rows[0].len();
    FeatureTable::new(rows.len(), dim, rows.concat()).unwrap()
}

/// Records `[W1, W2, W3, W4]` leaves from plain matrices.
fn weights(tape: &mut Tape, ws: [&Tensor; 4]) -> [Var; 4] {
    ws.map(|w| tape.param(w.clone()))
}

fn scalar_w(x: f64) -> Tensor {
    Tensor::new(vec![1, 1], vec![x]).unwrap()
}

#[test]
fn orthogonal_items_have_zero_relevance() {
    let feats = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let mut tape = Tape::new();
    let id = Tensor::identity(2);
    let w = weights(&mut tape, [&id, &id, &id, &id]);
    let proj = ItemProjections::from_weights(&mut tape, w, &feats, [0, 1]).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0, 1]).unwrap();
    assert_eq!(tape.value(s.alpha_pair).get(0, 1), 0.0);
}

#[test]
fn identical_history_has_uniform_importance() {
    let feats = table(&[&[0.3, -1.2, 0.7, 2.0]]);
    let mut rng = substream(5, "t", 0);
    let params = ModelParams::init(4, &mut rng).unwrap();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let proj = ItemProjections::new(&mut tape, &pv, &feats, [0]).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0, 0, 0]).unwrap();
    let alpha = tape.value(s.alpha).data().to_vec();
    assert!(alpha.iter().all(|a| *a == alpha[0]));
    let sm = tape.softmax(s.alpha).unwrap();
    for p in tape.value(sm).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    // all-identical history encodes to v·W3
    let u = encode(&mut tape, &proj, &s, Provenance::Query).unwrap();
    let v = Tensor::new(vec![1, 4], feats.row(0).unwrap().to_vec()).unwrap();
    let want = v.matmul(params.get("W3").unwrap()).unwrap();
    for (a, b) in tape.value(u.vector).data().iter().zip(want.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn one_dimensional_scores_and_encoding() {
    let feats = table(&[&[1.0], &[2.0], &[3.0]]);
    let mut tape = Tape::new();
    let one = scalar_w(1.0);
    let w = weights(&mut tape, [&one, &one, &one, &one]);
    let proj = ItemProjections::from_weights(&mut tape, w, &feats, [0, 1, 2]).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0, 1]).unwrap();
    assert_eq!(tape.value(s.alpha_pair).data(), &[1.0, 2.0, 2.0, 4.0]);
    assert_eq!(tape.value(s.alpha).data(), &[3.0, 6.0]);
    assert_eq!(tape.value(s.detached_alpha).data(), &[3.0, 6.0]);

    let beta = score_substitutes(&tape, &proj, &s, &[2]).unwrap();
    assert_eq!(beta.data(), &[3.0, 6.0]);

    // independent oracle: the softmax chain evaluated by hand
    let sm = |a: f64, b: f64| (a.exp() / (a.exp() + b.exp()), b.exp() / (a.exp() + b.exp()));
    let (p00, p01) = sm(1.0, 2.0);
    let (p10, p11) = sm(2.0, 4.0);
    let vhat = [p00 * 1.0 + p01 * 2.0, p10 * 1.0 + p11 * 2.0];
    let (w0, w1) = sm(3.0, 6.0);
    let oracle = w0 * vhat[0] + w1 * vhat[1];
    assert!((oracle - 1.8737).abs() < 1e-4);

    let u = encode(&mut tape, &proj, &s, Provenance::Query).unwrap();
    assert!((tape.value(u.vector).data()[0] - oracle).abs() < 1e-12);
}

#[test]
fn singleton_history_encodes_to_projection() {
    let feats = table(&[&[0.5, -1.0]]);
    let mut tape = Tape::new();
    let w3 = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
    let any = Tensor::from_rows(&[vec![0.2, 0.1], vec![-0.4, 0.9]]).unwrap();
    let w = weights(&mut tape, [&any, &any, &w3, &any]);
    let proj = ItemProjections::from_weights(&mut tape, w, &feats, [0]).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0]).unwrap();
    let u = encode(&mut tape, &proj, &s, Provenance::Query).unwrap();
    assert_eq!(tape.value(u.vector).data(), &[-2.5, 2.0]);
}

#[test]
fn substitute_scores_reuse_w1_w2() {
    let feats = table(&[&[1.0, 2.0], &[0.5, -1.0]]);
    let mut tape = Tape::new();
    let id = Tensor::identity(2);
    let w = weights(&mut tape, [&id, &id, &id, &id]);
    let proj = ItemProjections::from_weights(&mut tape, w, &feats, [0, 1]).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0, 1]).unwrap();
    let beta = score_substitutes(&tape, &proj, &s, &[0]).unwrap();
    assert_eq!(beta.get(0, 0), 5.0); // ‖v_0‖²

    let mut tape = Tape::new();
    let zero = Tensor::zeros(&[2, 2]);
    let w = weights(&mut tape, [&zero, &id, &id, &id]);
    let proj = ItemProjections::from_weights(&mut tape, w, &feats, [0, 1]).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0, 1]).unwrap();
    let beta = score_substitutes(&tape, &proj, &s, &[0, 1]).unwrap();
    assert!(beta.data().iter().all(|b| *b == 0.0));
    assert!(score_substitutes(&tape, &proj, &s, &[]).is_err());
}

#[test]
fn out_of_range_item_is_an_index_error() {
    let feats = table(&[&[1.0, 2.0]]);
    let params = ModelParams::zeros(2).unwrap();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    assert!(matches!(
        ItemProjections::new(&mut tape, &pv, &feats, [3]),
        Err(Error::Index { .. })
    ));
    let proj = ItemProjections::new(&mut tape, &pv, &feats, [0]).unwrap();
    assert!(score_sequence(&mut tape, &proj, &[0, 1]).is_err());
}

#[test]
fn zero_head_predicts_one_half() {
    let feats = table(&[&[1.0, -2.0], &[0.3, 0.3]]);
    let params = ModelParams::zeros(2).unwrap();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let proj = ItemProjections::new(&mut tape, &pv, &feats, [0, 1]).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0]).unwrap();
    let u = encode(&mut tape, &proj, &s, Provenance::Query).unwrap();
    let y = predict_ctr(&mut tape, &pv, &proj, &[u.vector], &[(0, 1)]).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5]);
}

/// Scalar re-implementation of the CTR head.
fn ctr_oracle(params: &ModelParams, u: &[f64], v: &[f64]) -> f64 {
    let d = params.dim();
    let w4 = params.get("W4").unwrap();
    let q: Vec<f64> = (0..d).map(|j| (0..d).map(|i| v[i] * w4.get(i, j)).sum()).collect();
    let mut x: Vec<f64> = u.to_vec();
    x.extend(&q);
    x.extend(u.iter().zip(&q).map(|(a, b)| a * b));
    for layer in 0..3 {
        let w = params.get(&format!("mlp{layer}.w")).unwrap();
        let b = params.get(&format!("mlp{layer}.b")).unwrap();
        let out = w.shape()[1];
        let z: Vec<f64> = (0..out)
            .map(|j| b.data()[j] + (0..x.len()).map(|i| x[i] * w.get(i, j)).sum::<f64>())
            .collect();
        x = if layer < 2 {
            z.into_iter().map(|t| t.max(0.0)).collect()
        } else {
            z.into_iter().map(|t| 1.0 / (1.0 + (-t).exp())).collect()
        };
    }
    x[0]
}

#[test]
fn hand_set_head_matches_scalar_oracle() {
    let mut params = ModelParams::zeros(2).unwrap();
    let set = |p: &mut ModelParams, name: &str, vals: &[f64]| {
        p.get_mut(name).unwrap().data_mut().copy_from_slice(vals);
    };
    set(&mut params, "W4", &[0.5, -0.25, 1.0, 0.75]);
    set(&mut params, "mlp0.w", &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, 1.0, -1.1, 1.2]);
    set(&mut params, "mlp0.b", &[0.05, -0.1]);
    set(&mut params, "mlp1.w", &[0.8, -0.6]);
    set(&mut params, "mlp1.b", &[0.2]);
    set(&mut params, "mlp2.w", &[1.5]);
    set(&mut params, "mlp2.b", &[-0.3]);
    let u = [0.7, -0.4];
    let v = [1.2, 0.9];

    let feats = table(&[&v]);
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let proj = ItemProjections::new(&mut tape, &pv, &feats, [0]).unwrap();
    let uv = tape.constant(Tensor::vector(u.to_vec()));
    let y = predict_ctr(&mut tape, &pv, &proj, &[uv], &[(0, 0)]).unwrap();
    let got = tape.value(y).data()[0];
    let want = ctr_oracle(&params, &u, &v);
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    assert!(got > 0.0 && got < 1.0);
}

#[test]
fn param_count_examples() {
    assert_eq!(param_count(2), 35);
    assert_eq!(param_count(4), 129);
    assert!((1..40).all(|h| param_count(2 * h) < param_count(2 * h + 2)));
    for dim in [2, 4, 16] {
        let p = ModelParams::zeros(dim).unwrap();
        assert_eq!(p.n_scalars(), param_count(dim));
    }
}

#[test]
fn dim_must_be_even() {
    assert!(ModelParams::zeros(3).is_err());
    assert!(ModelParams::zeros(0).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let params = ModelParams::init(6, &mut substream(3, "init", 0)).unwrap();
    let bytes = params.to_bytes();
    assert_eq!(&bytes[..4], b"CCLM");
    let (back, rest) = ModelParams::from_bytes(&bytes).unwrap();
    assert_eq!(back, params);
    assert!(rest.is_empty());
    assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

fn random_table(n: usize, dim: usize, seed: u64) -> FeatureTable {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = substream(seed, "features", 0);
    let rows = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    FeatureTable::new(n, dim, rows).unwrap()
}

fn encode_values(params: &ModelParams, feats: &FeatureTable, history: &[ItemId]) -> Vec<f64> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let proj = ItemProjections::new(&mut tape, &pv, feats, history.iter().copied()).unwrap();
    let s = score_sequence(&mut tape, &proj, history).unwrap();
    let u = encode(&mut tape, &proj, &s, Provenance::Query).unwrap();
    tape.value(u.vector).data().to_vec()
}

#[test]
fn encoder_ignores_history_order() {
    let feats = random_table(10, 4, 1);
    let params = ModelParams::init(4, &mut substream(2, "init", 0)).unwrap();
    let a = encode_values(&params, &feats, &[3, 1, 7, 4, 9]);
    let b = encode_values(&params, &feats, &[9, 4, 3, 7, 1]);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn importance_is_linear_in_each_items_relevances() {
    // Scaling an item's features by c scales its row of α_ij, hence α_t.
    let mut feats = random_table(4, 4, 8);
    let params = ModelParams::init(4, &mut substream(4, "init", 0)).unwrap();
    let alpha = |f: &FeatureTable| {
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let proj = ItemProjections::new(&mut tape, &pv, f, 0..4).unwrap();
        let s = score_sequence(&mut tape, &proj, &[0, 1, 2, 3]).unwrap();
        let pair = tape.value(s.alpha_pair).clone();
        let a = tape.value(s.alpha).data().to_vec();
        for t in 0..4 {
            assert_eq!(a[t], pair.row(t).iter().sum::<f64>());
        }
        (pair, a)
    };
    let (_, base) = alpha(&feats);
    let c = 2.5;
    let mut rows = feats.as_slice().to_vec();
    rows[4..8].iter_mut().for_each(|v| *v *= c);
    feats = FeatureTable::new(4, 4, rows).unwrap();
    let (pair, scaled) = alpha(&feats);
    // row 1 mixes the scaled self-term on both sides; compare the off-diagonal part
    let off_diag: f64 = (0..4).filter(|j| *j != 1).map(|j| pair.get(1, j)).sum();
    let diag = pair.get(1, 1);
    let base_pair_diag = diag / (c * c);
    assert!((off_diag - c * (base[1] - base_pair_diag)).abs() < 1e-10);
    assert!((scaled[1] - (off_diag + diag)).abs() < 1e-12);
}

#[test]
fn detached_importance_carries_no_gradient() {
    let feats = random_table(6, 4, 3);
    let params = ModelParams::init(4, &mut substream(1, "init", 0)).unwrap();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let proj = ItemProjections::new(&mut tape, &pv, &feats, 0..6).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0, 2, 4, 5]).unwrap();
    let probe = tape.softmax(s.detached_alpha).unwrap();
    let probe = tape.dot(probe, s.detached_alpha).unwrap();
    tape.backward(probe).unwrap();
    assert!(tape.grad(pv.w1()).is_none());
    assert!(tape.grad(pv.w2()).is_none());

    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let proj = ItemProjections::new(&mut tape, &pv, &feats, 0..6).unwrap();
    let s = score_sequence(&mut tape, &proj, &[0, 2, 4, 5]).unwrap();
    let u = encode(&mut tape, &proj, &s, Provenance::Query).unwrap();
    let l = tape.sum(u.vector);
    tape.backward(l).unwrap();
    let g = tape.grad(pv.w1()).unwrap();
    assert!(g.data().iter().any(|v| v.abs() > 1e-8));
}

fn fourth_order(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(1.0) - f(-1.0)) - (f(2.0) - f(-2.0))) / (12.0 * h)
}

#[test]
fn ctr_gradient_matches_finite_differences() {
    for seed in 0..5u64 {
        let dim = if seed % 2 == 0 { 2 } else { 4 };
        let feats = random_table(6, dim, seed + 10);
        let mut params = ModelParams::init(dim, &mut substream(seed, "init", 0)).unwrap();
        // nonzero biases so no relu sits exactly at its kink
        for name in ["mlp0.b", "mlp1.b", "mlp2.b"] {
            params.get_mut(name).unwrap().data_mut().iter_mut().for_each(|b| *b = 0.05);
        }
        let history = [0, 1, 3];
        let y_of = |p: &ModelParams| -> (f64, Vec<Tensor>) {
            let mut tape = Tape::new();
            let pv = p.register(&mut tape);
            let proj = ItemProjections::new(&mut tape, &pv, &feats, 0..6).unwrap();
            let s = score_sequence(&mut tape, &proj, &history).unwrap();
            let u = encode(&mut tape, &proj, &s, Provenance::Query).unwrap();
            let y = predict_ctr(&mut tape, &pv, &proj, &[u.vector], &[(0, 5)]).unwrap();
            let y = tape.sum(y);
            tape.backward(y).unwrap();
            (tape.value(y).item().unwrap(), pv.grads(&tape))
        };
        let (_, grads) = y_of(&params);
        let h = 1e-4;
        for (ti, g) in grads.iter().enumerate() {
            for k in 0..g.len() {
                let num = fourth_order(
                    |s| {
                        let mut p = params.clone();
                        p.tensors_mut()[ti].data_mut()[k] += s * h;
                        y_of(&p).0
                    },
                    h,
                );
                let a = g.data()[k];
                let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-8);
                assert!(rel <= 1e-5, "{} [{k}]: {a} vs {num}", PARAM_NAMES[ti]);
            }
        }
    }
}
