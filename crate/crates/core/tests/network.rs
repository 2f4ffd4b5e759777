use nlidb::model::network::{self, attend, decode_step, encode, initial_state, lstm_forward, output, EncoderStates};
use nlidb::model::tensor::Tensor;
use nlidb::model::vocab::{END_ID, START_ID};
use nlidb::model::{beam_search, greedy_decode, Dims, ModelParameters};
use proptest::prelude::*;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor {
        rows,
        cols,
        data: data.to_vec(),
    }
}

fn dims(sv: usize, tv: usize, e: usize, h: usize) -> Dims {
    Dims {
        source_vocab: sv,
        target_vocab: tv,
        embed: e,
        hidden: h,
        pretrained: 0,
    }
}

#[test]
fn lstm_recurrence_by_hand() {
    // One unit, one input: rows are the i, f, o, g gates over [x; h_prev].
    let w = t(4, 2, &[0.5, -0.3, 0.2, 0.4, -0.6, 0.1, 1.0, 0.7]);
    let b = t(4, 1, &[0.1, 0.0, -0.2, 0.05]);
    let (mut h, mut c) = (0.0f64, 0.0f64);
    let (mut hv, mut cv) = (vec![0.0], vec![0.0]);
    for x in [0.5, -1.0] {
        let i = sig(0.5 * x - 0.3 * h + 0.1);
        let f = sig(0.2 * x + 0.4 * h);
        let o = sig(-0.6 * x + 0.1 * h - 0.2);
        let g = (1.0 * x + 0.7 * h + 0.05).tanh();
        c = f * c + i * g;
        h = o * c.tanh();
        let step = lstm_forward(&w, &b, &[x], &hv, &cv);
        assert!((step.h[0] - h).abs() < 1e-15 && (step.c[0] - c).abs() < 1e-15);
        hv = step.h;
        cv = step.c;
    }
    // Spot value for the first step: i = sig(0.35), g = tanh(0.55), c = i g.
    let c1 = sig(0.35) * 0.55f64.tanh();
    let h1 = sig(-0.5) * c1.tanh();
    let s = lstm_forward(&w, &b, &[0.5], &[0.0], &[0.0]);
    assert!((s.c[0] - c1).abs() < 1e-15 && (s.h[0] - h1).abs() < 1e-15);
}

#[test]
fn encoder_states_by_hand() {
    let mut p = ModelParameters::zeros(dims(3, 3, 1, 1));
    p.src_embed = t(3, 1, &[0.0, 0.0, 0.5]);
    p.src_embed.data[1] = -1.0;
    p.enc_fwd_w = t(4, 2, &[0.5, -0.3, 0.2, 0.4, -0.6, 0.1, 1.0, 0.7]);
    p.enc_fwd_b = t(4, 1, &[0.1, 0.0, -0.2, 0.05]);
    p.enc_bwd_w = t(4, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let enc = encode(&p, &[2, 1]).unwrap();

    let run = |w: &[f64; 8], b: &[f64; 4], xs: &[f64]| {
        let (mut h, mut c) = (0.0f64, 0.0f64);
        let mut out = Vec::new();
        for &x in xs {
            let i = sig(w[0] * x + w[1] * h + b[0]);
            let f = sig(w[2] * x + w[3] * h + b[1]);
            let o = sig(w[4] * x + w[5] * h + b[2]);
            let g = (w[6] * x + w[7] * h + b[3]).tanh();
            c = f * c + i * g;
            h = o * c.tanh();
            out.push(h);
        }
        out
    };
    let fwd = run(&[0.5, -0.3, 0.2, 0.4, -0.6, 0.1, 1.0, 0.7], &[0.1, 0.0, -0.2, 0.05], &[0.5, -1.0]);
    let mut bwd = run(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0], &[0.0; 4], &[-1.0, 0.5]);
    bwd.reverse();
    for j in 0..2 {
        assert!((enc.states[j][0] - fwd[j]).abs() < 1e-15);
        assert!((enc.states[j][1] - bwd[j]).abs() < 1e-15);
    }
    assert!((enc.summary[0] - fwd[1]).abs() < 1e-15);
    assert!((enc.summary[1] - bwd[0]).abs() < 1e-15);
}

#[test]
fn attention_of_ln2_and_zero() {
    let enc = EncoderStates {
        states: vec![vec![10.0, 1.0], vec![20.0, 4.0]],
        projected: vec![vec![2f64.ln()], vec![0.0]],
        summary: vec![],
    };
    let (alpha, c) = attend(&[1.0], &enc);
    assert!((alpha[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((alpha[1] - 1.0 / 3.0).abs() < 1e-15);
    assert!((c[0] - 40.0 / 3.0).abs() < 1e-12);
    assert!((c[1] - 2.0).abs() < 1e-12);
}

#[test]
fn output_softmax_by_hand() {
    let mut p = ModelParameters::zeros(dims(2, 3, 1, 1));
    // o = tanh(0.5 h + 0.25 c0 - c1 + 0.1)
    p.combine_w = t(1, 3, &[0.5, 0.25, -1.0]);
    p.combine_b = t(1, 1, &[0.1]);
    p.out_w = t(3, 1, &[2.0, 0.0, -2.0]);
    p.out_b = t(3, 1, &[0.0, 3f64.ln(), 0.0]);
    let (h, c) = ([0.4], [2.0, 0.3]);
    let o = (0.5f64 * 0.4 + 0.25 * 2.0 - 0.3 + 0.1).tanh();
    let logits = [2.0 * o, 3f64.ln(), -2.0 * o];
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let (got_o, dist) = output(&p, &h, &c);
    assert!((got_o[0] - o).abs() < 1e-15);
    for k in 0..3 {
        assert!((dist[k] - logits[k].exp() / z).abs() < 1e-15);
    }
}

#[test]
fn zero_model_is_uniform() {
    let p = ModelParameters::zeros(dims(6, 7, 3, 4));
    let target = [3, 4, 5, END_ID];
    let l = network::loss(&p, &[2, 3, 4], &target).unwrap();
    assert!((l - 4.0 * 7f64.ln()).abs() < 1e-12);
}

#[test]
fn loss_is_sum_of_step_log_probs() {
    let p = ModelParameters::init(dims(10, 8, 4, 5), 0.5, 3);
    let source = [2, 5, 7, 3];
    let target = [4, 2, 6, END_ID];
    let enc = encode(&p, &source).unwrap();
    let mut state = initial_state(&p, &enc);
    let mut prev = START_ID;
    let mut nll = 0.0;
    for &y in &target {
        let (dist, next) = decode_step(&p, prev, &state, &enc);
        nll -= dist[y].ln();
        state = next;
        prev = y;
    }
    assert!((network::loss(&p, &source, &target).unwrap() - nll).abs() < 1e-10);
}

/// Log probability of a fixed token sequence under step-by-step decoding.
fn sequence_log_prob(p: &ModelParameters, source: &[usize], tokens: &[usize]) -> f64 {
    let enc = encode(p, source).unwrap();
    let mut state = initial_state(p, &enc);
    let mut prev = START_ID;
    let mut lp = 0.0;
    for &y in tokens {
        let (dist, next) = decode_step(p, prev, &state, &enc);
        lp += dist[y].ln();
        state = next;
        prev = y;
    }
    lp
}

/// Every output of at most two steps over {a, b, c}: END first, one token then END,
/// or two tokens cut off by the cap. (tokens without END, truncated, log prob)
fn enumerate_two_steps(p: &ModelParameters, source: &[usize]) -> Vec<(Vec<usize>, bool, f64)> {
    let words = [2, 3, 4];
    let mut out = vec![(vec![], false, sequence_log_prob(p, source, &[END_ID]))];
    for &x in &words {
        out.push((vec![x], false, sequence_log_prob(p, source, &[x, END_ID])));
        for &y in &words {
            out.push((vec![x, y], true, sequence_log_prob(p, source, &[x, y])));
        }
    }
    out
}

#[test]
fn beam_matches_exhaustive_enumeration() {
    for seed in 0..60 {
        let p = ModelParameters::init(dims(6, 5, 3, 4), 1.5, seed);
        let source = [2, 3, 5];
        let all = enumerate_two_steps(&p, &source);
        assert_eq!(all.len(), 13);
        let best = all.iter().max_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
        for width in [13, 20] {
            let beam = beam_search(&p, &source, width, 2).unwrap();
            assert_eq!(beam.len(), 13);
            assert_eq!(beam[0].tokens, best.0, "seed {seed}");
            assert_eq!(beam[0].truncated, best.1);
            assert!((beam[0].log_prob - best.2).abs() < 1e-12);
            for h in &beam {
                let m = all.iter().find(|a| a.0 == h.tokens && a.1 == h.truncated).unwrap();
                assert!((h.log_prob - m.2).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn narrow_beam_never_beats_wide_beam() {
    for seed in 0..30 {
        let p = ModelParameters::init(dims(6, 5, 3, 4), 1.5, seed);
        let wide = beam_search(&p, &[2, 4], 13, 2).unwrap();
        for width in 1..13 {
            let narrow = beam_search(&p, &[2, 4], width, 2).unwrap();
            assert!(narrow.len() <= width);
            assert!(narrow[0].log_prob <= wide[0].log_prob + 1e-12);
            assert!(narrow.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
        }
    }
}

#[test]
fn start_is_never_emitted() {
    let mut p = ModelParameters::init(dims(5, 5, 3, 3), 0.3, 1);
    // Make START overwhelmingly likely; decoders must skip it.
    p.out_b.data[START_ID] = 50.0;
    for h in beam_search(&p, &[2, 3], 4, 5).unwrap() {
        assert!(!h.tokens.contains(&START_ID));
    }
    let (greedy, _) = greedy_decode(&p, &[2, 3], 5).unwrap();
    assert!(!greedy.contains(&START_ID));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn distributions_are_normalized(
        seed in any::<u64>(),
        hidden in 1usize..9,
        embed in 1usize..9,
        tv in 2usize..21,
        scale in prop_oneof![Just(0.08), Just(1.0), Just(4.0)],
        source in proptest::collection::vec(0usize..12, 1..8),
        feed in proptest::collection::vec(0usize..21, 0..6),
    ) {
        let p = ModelParameters::init(dims(12, tv, embed, hidden), scale, seed);
        let enc = encode(&p, &source).unwrap();
        let mut state = initial_state(&p, &enc);
        let mut prev = START_ID;
        for step in 0..=feed.len() {
            let (dist, next) = decode_step(&p, prev, &state, &enc);
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(dist.iter().all(|&q| q >= 0.0));
            prop_assert_eq!(next.attention.len(), source.len());
            prop_assert!((next.attention.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            if step < feed.len() {
                prev = feed[step] % tv;
            }
            state = next;
        }
    }

    #[test]
    fn width_one_beam_is_greedy(seed in any::<u64>(), source in proptest::collection::vec(0usize..8, 1..6), max_len in 1usize..12) {
        let p = ModelParameters::init(dims(8, 7, 4, 5), 1.0, seed);
        let beam = beam_search(&p, &source, 1, max_len).unwrap();
        let (greedy, truncated) = greedy_decode(&p, &source, max_len).unwrap();
        prop_assert_eq!(beam.len(), 1);
        prop_assert_eq!(&beam[0].tokens, &greedy);
        prop_assert_eq!(beam[0].truncated, truncated);
    }

    #[test]
    fn reversed_input_mirrors_the_encoder(seed in any::<u64>(), source in proptest::collection::vec(0usize..8, 1..7)) {
        let p = ModelParameters::init(dims(8, 4, 3, 4), 0.5, seed);
        let mut q = p.clone();
        std::mem::swap(&mut q.enc_fwd_w, &mut q.enc_bwd_w);
        std::mem::swap(&mut q.enc_fwd_b, &mut q.enc_bwd_b);
        let rev: Vec<usize> = source.iter().rev().copied().collect();
        let a = encode(&p, &source).unwrap();
        let b = encode(&q, &rev).unwrap();
        let n = source.len();
        for j in 0..n {
            let (af, ab) = a.states[j].split_at(4);
            let (bf, bb) = b.states[n - 1 - j].split_at(4);
            prop_assert_eq!(af, bb);
            prop_assert_eq!(ab, bf);
        }
    }
}
