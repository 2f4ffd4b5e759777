//! Forward and backward passes of the attention encoder-decoder.
//!
//! Gate layout inside every LSTM weight matrix is `[input, forget, output, candidate]`,
//! each block `hidden` rows tall, applied to the concatenation `[x; h_prev]`.

use rand::Rng;

use super::params::ModelParameters;
use super::tensor::{axpy, concat, dot, sigmoid, softmax, Tensor};
use super::vocab::START_ID;
use crate::error::{Error, Result};

/// Cached activations of one LSTM step.
#[derive(Debug, Clone)]
pub struct LstmStep {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn lstm_forward(w: &Tensor, b: &Tensor, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let hd = h_prev.len();
    let xh = concat(x, h_prev);
    let z = w.affine(&xh, b);
    let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z[2 * hd..3 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[3 * hd..].iter().map(|&v| v.tanh()).collect();
    let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    LstmStep {
        xh,
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        g,
        tanh_c,
        c,
        h,
    }
}

/// Returns the gradient with respect to `[x; h_prev]` and to `c_prev`.
fn lstm_backward(
    w: &Tensor,
    step: &LstmStep,
    dh: &[f64],
    dc_in: &[f64],
    gw: &mut Tensor,
    gb: &mut Tensor,
) -> (Vec<f64>, Vec<f64>) {
    let hd = dh.len();
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let (i, f, o, g, tc) = (step.i[k], step.f[k], step.o[k], step.g[k], step.tanh_c[k]);
        let d_o = dh[k] * tc;
        let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dc * g * i * (1.0 - i);
        dz[hd + k] = dc * step.c_prev[k] * f * (1.0 - f);
        dz[2 * hd + k] = d_o * o * (1.0 - o);
        dz[3 * hd + k] = dc * i * (1.0 - g * g);
        dc_prev[k] = dc * f;
    }
    gw.outer_acc(&dz, &step.xh);
    gb.add_vec(&dz);
    (w.matvec_t(&dz), dc_prev)
}

/// Source embedding lookup, concatenating the frozen pretrained vector when present.
fn source_input(p: &ModelParameters, word: usize) -> Vec<f64> {
    match &p.pretrained {
        Some(pre) => concat(p.src_embed.row(word), pre.row(word)),
        None => p.src_embed.row(word).to_vec(),
    }
}

/// Encoder annotations `s_j = [fwd_j; bwd_j]` plus the projections `F s_j`.
#[derive(Debug, Clone)]
pub struct EncoderStates {
    pub states: Vec<Vec<f64>>,
    pub projected: Vec<Vec<f64>>,
    /// `[fwd_last; bwd_first]`, the input to the decoder state initializer.
    pub summary: Vec<f64>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Decoder recurrent state after emitting a token.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub m: Vec<f64>,
    /// Context vector from the last step (zero before the first).
    pub context: Vec<f64>,
    /// Attention weights of the last step (empty before the first).
    pub attention: Vec<f64>,
}

struct EncoderPass {
    fwd: Vec<LstmStep>,
    /// Indexed by source position, not by processing order.
    bwd: Vec<LstmStep>,
    states: EncoderStates,
}

fn run_encoder(p: &ModelParameters, inputs: &[Vec<f64>]) -> EncoderPass {
    let hd = p.dims.hidden;
    let k = inputs.len();
    let zero = vec![0.0; hd];
    let mut fwd: Vec<LstmStep> = Vec::with_capacity(k);
    for x in inputs {
        let (h, c) = fwd.last().map_or((&zero, &zero), |s| (&s.h, &s.c));
        let step = lstm_forward(&p.enc_fwd_w, &p.enc_fwd_b, x, h, c);
        fwd.push(step);
    }
    let mut bwd_rev: Vec<LstmStep> = Vec::with_capacity(k);
    for x in inputs.iter().rev() {
        let (h, c) = bwd_rev.last().map_or((&zero, &zero), |s| (&s.h, &s.c));
        let step = lstm_forward(&p.enc_bwd_w, &p.enc_bwd_b, x, h, c);
        bwd_rev.push(step);
    }
    bwd_rev.reverse();
    let bwd = bwd_rev;
    let states: Vec<Vec<f64>> = (0..k).map(|j| concat(&fwd[j].h, &bwd[j].h)).collect();
    let projected = states.iter().map(|s| p.attn.matvec(s)).collect();
    let summary = concat(&fwd[k - 1].h, &bwd[0].h);
    EncoderPass {
        fwd,
        bwd,
        states: EncoderStates {
            states,
            projected,
            summary,
        },
    }
}

/// Runs the bidirectional encoder without dropout.
pub fn encode(p: &ModelParameters, source: &[usize]) -> Result<EncoderStates> {
    if source.is_empty() {
        return Err(Error::EmptyInput);
    }
    let inputs: Vec<Vec<f64>> = source.iter().map(|&w| source_input(p, w)).collect();
    Ok(run_encoder(p, &inputs).states)
}

pub fn initial_state(p: &ModelParameters, enc: &EncoderStates) -> DecoderState {
    DecoderState {
        h: p.init_h_w.affine(&enc.summary, &p.init_h_b),
        m: p.init_c_w.affine(&enc.summary, &p.init_c_b),
        context: vec![0.0; 2 * p.dims.hidden],
        attention: Vec::new(),
    }
}

/// Bilinear attention: `alpha = softmax_j(h . F s_j)`, `c = sum_j alpha_j s_j`.
pub fn attend(h: &[f64], enc: &EncoderStates) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = enc.projected.iter().map(|u| dot(h, u)).collect();
    let alpha = softmax(&scores);
    let mut context = vec![0.0; enc.states[0].len()];
    for (a, s) in alpha.iter().zip(&enc.states) {
        axpy(*a, s, &mut context);
    }
    (alpha, context)
}

/// Output layer: returns `(o, distribution)` for decoder state `h` and context `c`.
pub fn output(p: &ModelParameters, h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = concat(h, c);
    let o: Vec<f64> = p.combine_w.affine(&a, &p.combine_b).iter().map(|v| v.tanh()).collect();
    let dist = softmax(&p.out_w.affine(&o, &p.out_b));
    (o, dist)
}

/// One decoding step: feeds `prev_token`, returns the next-token distribution and new state.
pub fn decode_step(
    p: &ModelParameters,
    prev_token: usize,
    prev: &DecoderState,
    enc: &EncoderStates,
) -> (Vec<f64>, DecoderState) {
    let x = concat(p.tgt_embed.row(prev_token), &prev.context);
    let step = lstm_forward(&p.dec_w, &p.dec_b, &x, &prev.h, &prev.m);
    let (alpha, context) = attend(&step.h, enc);
    let (_, dist) = output(p, &step.h, &context);
    (
        dist,
        DecoderState {
            h: step.h,
            m: step.c,
            context,
            attention: alpha,
        },
    )
}

/// Inverted-dropout masks drawn per training example.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

fn mask<R: Rng>(dropout: &mut Option<Dropout<'_, R>>, n: usize) -> Option<Vec<f64>> {
    let d = dropout.as_mut()?;
    if d.rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - d.rate);
    Some(
        (0..n)
            .map(|_| if d.rng.gen::<f64>() < d.rate { 0.0 } else { keep })
            .collect(),
    )
}

fn apply(v: &mut [f64], m: &Option<Vec<f64>>) {
    if let Some(m) = m {
        v.iter_mut().zip(m).for_each(|(x, k)| *x *= k);
    }
}

struct DecoderStepCache {
    prev_token: usize,
    embed_mask: Option<Vec<f64>>,
    lstm: LstmStep,
    alpha: Vec<f64>,
    a: Vec<f64>,
    o: Vec<f64>,
    out_mask: Option<Vec<f64>>,
    o_dropped: Vec<f64>,
    dist: Vec<f64>,
}

/// Teacher-forced negative log-likelihood `-sum_i log p(y_i)` of `target` (which
/// must end with END). When `grads` is given, the gradient is accumulated into it.
pub fn loss_and_gradients<R: Rng>(
    p: &ModelParameters,
    source: &[usize],
    target: &[usize],
    mut dropout: Option<Dropout<'_, R>>,
    grads: Option<&mut ModelParameters>,
) -> Result<f64> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hd = p.dims.hidden;
    let ed = p.dims.embed;
    let ein = p.dims.encoder_input();

    let mut in_masks = Vec::with_capacity(source.len());
    let inputs: Vec<Vec<f64>> = source
        .iter()
        .map(|&w| {
            let mut x = source_input(p, w);
            let m = mask(&mut dropout, ein);
            apply(&mut x, &m);
            in_masks.push(m);
            x
        })
        .collect();
    let enc = run_encoder(p, &inputs);
    let states = &enc.states;
    let init = initial_state(p, states);

    let mut steps: Vec<DecoderStepCache> = Vec::with_capacity(target.len());
    let mut loss = 0.0;
    let (mut h, mut m, mut c_prev) = (init.h.clone(), init.m.clone(), init.context.clone());
    for (i, &y) in target.iter().enumerate() {
        let prev_token = if i == 0 { START_ID } else { target[i - 1] };
        let mut e = p.tgt_embed.row(prev_token).to_vec();
        let embed_mask = mask(&mut dropout, ed);
        apply(&mut e, &embed_mask);
        let x = concat(&e, &c_prev);
        let lstm = lstm_forward(&p.dec_w, &p.dec_b, &x, &h, &m);
        let (alpha, context) = attend(&lstm.h, states);
        let a = concat(&lstm.h, &context);
        let o: Vec<f64> = p.combine_w.affine(&a, &p.combine_b).iter().map(|v| v.tanh()).collect();
        let out_mask = mask(&mut dropout, hd);
        let mut o_dropped = o.clone();
        apply(&mut o_dropped, &out_mask);
        let dist = softmax(&p.out_w.affine(&o_dropped, &p.out_b));
        loss -= dist[y].ln();
        h = lstm.h.clone();
        m = lstm.c.clone();
        c_prev = context;
        steps.push(DecoderStepCache {
            prev_token,
            embed_mask,
            lstm,
            alpha,
            a,
            o,
            out_mask,
            o_dropped,
            dist,
        });
    }

    let Some(g) = grads else {
        return Ok(loss);
    };

    let k = source.len();
    let mut d_states = vec![vec![0.0; 2 * hd]; k];
    let mut d_proj = vec![vec![0.0; hd]; k];
    let mut dh_next = vec![0.0; hd];
    let mut dm_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; 2 * hd];
    for (i, st) in steps.iter().enumerate().rev() {
        let mut dlogits = st.dist.clone();
        dlogits[target[i]] -= 1.0;
        g.out_w.outer_acc(&dlogits, &st.o_dropped);
        g.out_b.add_vec(&dlogits);
        let mut d_o = p.out_w.matvec_t(&dlogits);
        apply(&mut d_o, &st.out_mask);
        let dpre: Vec<f64> = d_o.iter().zip(&st.o).map(|(d, o)| d * (1.0 - o * o)).collect();
        g.combine_w.outer_acc(&dpre, &st.a);
        g.combine_b.add_vec(&dpre);
        let da = p.combine_w.matvec_t(&dpre);
        let mut dh: Vec<f64> = da[..hd].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let dc: Vec<f64> = da[hd..].iter().zip(&dc_next).map(|(a, b)| a + b).collect();

        let d_alpha: Vec<f64> = states.states.iter().map(|s| dot(&dc, s)).collect();
        for (j, &a) in st.alpha.iter().enumerate() {
            axpy(a, &dc, &mut d_states[j]);
        }
        let mean = dot(&st.alpha, &d_alpha);
        for j in 0..k {
            let dscore = st.alpha[j] * (d_alpha[j] - mean);
            axpy(dscore, &states.projected[j], &mut dh);
            axpy(dscore, &st.lstm.h, &mut d_proj[j]);
        }

        let (dx, dc_prev) = lstm_backward(&p.dec_w, &st.lstm, &dh, &dm_next, &mut g.dec_w, &mut g.dec_b);
        let mut de = dx[..ed].to_vec();
        apply(&mut de, &st.embed_mask);
        axpy(1.0, &de, g.tgt_embed.row_mut(st.prev_token));
        dc_next = dx[ed..ed + 2 * hd].to_vec();
        dh_next = dx[ed + 2 * hd..].to_vec();
        dm_next = dc_prev;
    }

    // Decoder initializer.
    g.init_h_w.outer_acc(&dh_next, &states.summary);
    g.init_h_b.add_vec(&dh_next);
    g.init_c_w.outer_acc(&dm_next, &states.summary);
    g.init_c_b.add_vec(&dm_next);
    let mut d_summary = p.init_h_w.matvec_t(&dh_next);
    p.init_c_w.matvec_t_acc(&dm_next, &mut d_summary);

    // Attention projection u_j = F s_j.
    for j in 0..k {
        g.attn.outer_acc(&d_proj[j], &states.states[j]);
        p.attn.matvec_t_acc(&d_proj[j], &mut d_states[j]);
    }
    axpy(1.0, &d_summary[..hd], &mut d_states[k - 1][..hd]);
    axpy(1.0, &d_summary[hd..], &mut d_states[0][hd..]);

    let mut d_inputs = vec![vec![0.0; ein]; k];
    let (mut dh, mut dc) = (vec![0.0; hd], vec![0.0; hd]);
    for j in (0..k).rev() {
        let total: Vec<f64> = d_states[j][..hd].iter().zip(&dh).map(|(a, b)| a + b).collect();
        let (dxh, dcp) = lstm_backward(&p.enc_fwd_w, &enc.fwd[j], &total, &dc, &mut g.enc_fwd_w, &mut g.enc_fwd_b);
        axpy(1.0, &dxh[..ein], &mut d_inputs[j]);
        dh = dxh[ein..].to_vec();
        dc = dcp;
    }
    let (mut dh, mut dc) = (vec![0.0; hd], vec![0.0; hd]);
    for j in 0..k {
        let total: Vec<f64> = d_states[j][hd..].iter().zip(&dh).map(|(a, b)| a + b).collect();
        let (dxh, dcp) = lstm_backward(&p.enc_bwd_w, &enc.bwd[j], &total, &dc, &mut g.enc_bwd_w, &mut g.enc_bwd_b);
        axpy(1.0, &dxh[..ein], &mut d_inputs[j]);
        dh = dxh[ein..].to_vec();
        dc = dcp;
    }
    for (j, &w) in source.iter().enumerate() {
        let mut dx = std::mem::take(&mut d_inputs[j]);
        apply(&mut dx, &in_masks[j]);
        axpy(1.0, &dx[..ed], g.src_embed.row_mut(w));
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { example: 0 });
    }
    Ok(loss)
}

/// Loss without dropout or gradients.
pub fn loss(p: &ModelParameters, source: &[usize], target: &[usize]) -> Result<f64> {
    loss_and_gradients::<rand_chacha::ChaCha8Rng>(p, source, target, None, None)
}

/// Loss and gradient without dropout.
pub fn gradients(p: &ModelParameters, source: &[usize], target: &[usize]) -> Result<(f64, ModelParameters)> {
    let mut g = p.zeros_like();
    let l = loss_and_gradients::<rand_chacha::ChaCha8Rng>(p, source, target, None, Some(&mut g))?;
    Ok((l, g))
}
