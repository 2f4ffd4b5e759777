use super::network::{self, DecoderState, EncoderStates};
use super::params::ModelParameters;
use super::vocab::{END_ID, START_ID};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    /// Emitted target ids, excluding START and END.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: DecoderState,
    /// Attention weights of every emitted step, END included.
    pub attention: Vec<Vec<f64>>,
    /// Set when the length cap cut the hypothesis off before END.
    pub truncated: bool,
}

/// Length-capped beam search without length normalization.
///
/// At most `max_len` tokens are generated per hypothesis; END counts as one.
/// START is never proposed. Returned hypotheses are sorted by log probability,
/// best first, at most `width` of them.
pub fn beam_search(p: &ModelParameters, source: &[usize], width: usize, max_len: usize) -> Result<Vec<BeamHypothesis>> {
    let enc = network::encode(p, source)?;
    Ok(search(p, &enc, width.max(1), max_len))
}

fn search(p: &ModelParameters, enc: &EncoderStates, width: usize, max_len: usize) -> Vec<BeamHypothesis> {
    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: network::initial_state(p, enc),
        attention: Vec::new(),
        truncated: false,
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut steps = Vec::with_capacity(live.len());
        for (hi, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(START_ID);
            let (dist, state) = network::decode_step(p, prev, &hyp.state, enc);
            for (tok, &q) in dist.iter().enumerate() {
                if tok != START_ID {
                    candidates.push((hyp.log_prob + q.ln(), hi, tok));
                }
            }
            steps.push(state);
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        candidates.truncate(width);
        let mut next = Vec::with_capacity(width);
        for (lp, hi, tok) in candidates {
            let parent = &live[hi];
            let mut attention = parent.attention.clone();
            attention.push(steps[hi].attention.clone());
            let mut tokens = parent.tokens.clone();
            if tok != END_ID {
                tokens.push(tok);
            }
            let hyp = BeamHypothesis {
                tokens,
                log_prob: lp,
                state: steps[hi].clone(),
                attention,
                truncated: false,
            };
            if tok == END_ID {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        live = next;
        // Scores only fall as tokens are appended, so live hypotheses that already
        // trail the width-th finished one can never enter the result.
        if finished.len() >= width {
            finished.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
            let bar = finished[width - 1].log_prob;
            live.retain(|h| h.log_prob > bar);
        }
    }
    for mut h in live {
        h.truncated = true;
        finished.push(h);
    }
    finished.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    finished.truncate(width);
    finished
}

/// Argmax decoding; START is never emitted.
pub fn greedy_decode(p: &ModelParameters, source: &[usize], max_len: usize) -> Result<(Vec<usize>, bool)> {
    let enc = network::encode(p, source)?;
    let mut state = network::initial_state(p, &enc);
    let mut prev = START_ID;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (mut dist, next) = network::decode_step(p, prev, &state, &enc);
        dist[START_ID] = f64::NEG_INFINITY;
        let tok = super::train::argmax(&dist);
        if tok == END_ID {
            return Ok((out, false));
        }
        out.push(tok);
        prev = tok;
        state = next;
    }
    Ok((out, true))
}
