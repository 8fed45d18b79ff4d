use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{MockConfig, StateDef};
use crate::hashmix::{fnv1a_bytes, mix2};
use crate::routing::{context_hash, synth_routing};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("prefix tail unparseable at byte {offset}: no candidate of state `{state}` matches {snippet:?}")]
    UnparseableTail { state: String, offset: usize, snippet: String },
    #[error("unknown grammar state `{0}`")]
    UnknownState(String),
}

/// Sampling controls accepted on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct MockSampling {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: usize,
    pub max_new_tokens: usize,
    pub stop: Vec<String>,
}

impl Default for MockSampling {
    fn default() -> Self {
        MockSampling { temperature: 1.0, top_p: 1.0, top_k: 0, max_new_tokens: 128, stop: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenOutcome {
    Stop,
    Length,
}

/// One generated sequence with everything the wire format reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub token_ids: Vec<u32>,
    pub token_texts: Vec<String>,
    pub token_logprobs: Vec<f64>,
    /// Per-step reported distribution: (token id, probability), descending.
    pub top_probs: Vec<Vec<(u32, f64)>>,
    /// Routing rows, token-major: `routing[token][layer]` is a top-k set.
    pub routing: Vec<Vec<Vec<u16>>>,
    pub outcome: GenOutcome,
}

fn state<'a>(cfg: &'a MockConfig, name: &str) -> Result<&'a StateDef, GenError> {
    cfg.grammar.get(name).ok_or_else(|| GenError::UnknownState(name.to_string()))
}

/// Splits a request prefix into (ignored prompt, generated-so-far tail) at the
/// last occurrence of any gen-start marker.
pub fn split_tail<'a>(cfg: &MockConfig, prefix: &'a str) -> &'a str {
    let mut best: Option<usize> = None;
    for marker in &cfg.gen_start_markers {
        if marker.is_empty() {
            continue;
        }
        if let Some(pos) = prefix.rfind(marker.as_str()) {
            let end = pos + marker.len();
            best = Some(best.map_or(end, |b: usize| b.max(end)));
        }
    }
    &prefix[best.unwrap_or(0)..]
}

/// Replays the generated-so-far tail through the grammar, longest match per
/// state, returning the reached state and the consumed token IDs.
pub fn walk_tail(cfg: &MockConfig, tail: &str) -> Result<(String, Vec<u32>), GenError> {
    let mut state_name = cfg.start_state.clone();
    let mut consumed = Vec::new();
    let mut rest = tail;
    let mut offset = 0usize;
    while !rest.is_empty() {
        let def = state(cfg, &state_name)?;
        let matched = def
            .candidates
            .iter()
            .filter(|c| rest.starts_with(c.token.as_str()))
            .max_by_key(|c| c.token.len());
        let Some(cand) = matched else {
            let snippet: String = rest.chars().take(24).collect();
            return Err(GenError::UnparseableTail { state: state_name, offset, snippet });
        };
        consumed.push(cfg.token_id(&cand.token).expect("validated token"));
        offset += cand.token.len();
        rest = &rest[cand.token.len()..];
        state_name = cand.next.clone();
    }
    Ok((state_name, consumed))
}

/// The reported distribution for one state: scripted states report their
/// probabilities verbatim; weighted states are normalized then
/// temperature-scaled. Entries are (candidate index, probability), sorted by
/// descending probability with token-id ties broken low-first.
fn reported_distribution(cfg: &MockConfig, def: &StateDef, temperature: f64) -> Vec<(usize, f64)> {
    let mut probs: Vec<(usize, f64)> = if def.scripted {
        def.candidates.iter().enumerate().map(|(i, c)| (i, c.weight)).collect()
    } else {
        let total: f64 = def.candidates.iter().map(|c| c.weight).sum();
        let inv_t = 1.0 / temperature;
        let scaled: Vec<f64> =
            def.candidates.iter().map(|c| (c.weight / total).powf(inv_t)).collect();
        let norm: f64 = scaled.iter().sum();
        scaled.into_iter().enumerate().map(|(i, p)| (i, p / norm)).collect()
    };
    probs.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap().then_with(|| {
            let ta = cfg.token_id(&def.candidates[a.0].token).unwrap();
            let tb = cfg.token_id(&def.candidates[b.0].token).unwrap();
            ta.cmp(&tb)
        })
    });
    probs
}

/// Applies top-k then top-p truncation and renormalizes over the kept set.
fn sampling_distribution(reported: &[(usize, f64)], top_k: usize, top_p: f64) -> Vec<(usize, f64)> {
    let mut kept: Vec<(usize, f64)> = if top_k > 0 && top_k < reported.len() {
        reported[..top_k].to_vec()
    } else {
        reported.to_vec()
    };
    if top_p < 1.0 {
        let mut cum = 0.0;
        let mut cut = kept.len();
        for (i, (_, p)) in kept.iter().enumerate() {
            cum += p;
            if cum >= top_p {
                cut = i + 1;
                break;
            }
        }
        kept.truncate(cut);
    }
    let norm: f64 = kept.iter().map(|(_, p)| p).sum();
    kept.into_iter().map(|(i, p)| (i, p / norm)).collect()
}

/// One decode step: the emitted candidate index plus the reported top list.
///
/// Scripted states emit their configured token and consume no randomness, so
/// a script replays identically on every request that reaches it.
pub fn synth_next(
    cfg: &MockConfig,
    state_name: &str,
    sampling: &MockSampling,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Vec<(u32, f64)>), GenError> {
    let def = state(cfg, state_name)?;
    let reported = reported_distribution(cfg, def, sampling.temperature);
    let top: Vec<(u32, f64)> = reported
        .iter()
        .take(cfg.max_top_report)
        .map(|&(i, p)| (cfg.token_id(&def.candidates[i].token).unwrap(), p))
        .collect();
    let emitted_idx = if def.scripted {
        let emit = def.emit.as_ref().expect("validated scripted state");
        def.candidates.iter().position(|c| &c.token == emit).expect("validated emit")
    } else {
        let dist = sampling_distribution(&reported, sampling.top_k, sampling.top_p);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut chosen = dist[dist.len() - 1].0;
        for (i, p) in &dist {
            cum += p;
            if u < cum {
                chosen = *i;
                break;
            }
        }
        chosen
    };
    Ok((emitted_idx, top))
}

/// Runs a full generation for one request prefix.
pub fn generate(cfg: &MockConfig, prefix: &str, sampling: &MockSampling) -> Result<Generation, GenError> {
    let tail = split_tail(cfg, prefix);
    let (mut state_name, mut context) = walk_tail(cfg, tail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix2(cfg.seed, fnv1a_bytes(prefix.as_bytes())));

    let mut gen = Generation {
        token_ids: Vec::new(),
        token_texts: Vec::new(),
        token_logprobs: Vec::new(),
        top_probs: Vec::new(),
        routing: Vec::new(),
        outcome: GenOutcome::Length,
    };
    for _ in 0..sampling.max_new_tokens {
        let def = state(cfg, &state_name)?;
        let (emitted_idx, top) = synth_next(cfg, &state_name, sampling, &mut rng)?;
        let cand = &def.candidates[emitted_idx];
        if sampling.stop.iter().any(|s| !s.is_empty() && cand.token == *s) {
            gen.outcome = GenOutcome::Stop;
            return Ok(gen);
        }
        let token_id = cfg.token_id(&cand.token).expect("validated token");
        let ctx = context_hash(&context, cfg.context_window);
        let rows: Vec<Vec<u16>> =
            (0..cfg.n_layers).map(|layer| synth_routing(token_id, layer, ctx, cfg)).collect();
        let logprob = top
            .iter()
            .find(|(id, _)| *id == token_id)
            .map(|(_, p)| p.ln())
            .unwrap_or(f64::NEG_INFINITY);
        gen.token_ids.push(token_id);
        gen.token_texts.push(cand.token.clone());
        gen.token_logprobs.push(logprob);
        gen.top_probs.push(top);
        gen.routing.push(rows);
        context.push(token_id);
        state_name = cand.next.clone();
    }
    Ok(gen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Candidate;

    fn cfg() -> MockConfig {
        let mut cfg = MockConfig::default();
        cfg.vocab = vec![";".into(), "a".into(), "b".into(), "c".into()];
        cfg.start_state = "s0".into();
        cfg.n_layers = 2;
        cfg.lambda = vec![0.0, 1.0];
        cfg.slots = 2;
        cfg.n_routed_experts = 8;
        let c = |token: &str, weight: f64, next: &str| Candidate {
            token: token.into(),
            weight,
            next: next.into(),
        };
        cfg.grammar.insert(
            "s0".into(),
            StateDef {
                candidates: vec![c("a", 0.6, "s1"), c("b", 0.4, "s1")],
                scripted: false,
                emit: None,
            },
        );
        cfg.grammar.insert(
            "s1".into(),
            StateDef { candidates: vec![c(";", 1.0, "s1")], scripted: false, emit: None },
        );
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn point_mass_state_reports_logprob_zero() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (idx, top) =
            synth_next(&cfg, "s1", &MockSampling::default(), &mut rng).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, cfg.token_id(";").unwrap());
        assert!((top[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(top[0].1.ln(), 0.0);
    }

    #[test]
    fn temperature_scaling_matches_closed_form() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampling = MockSampling { temperature: 0.7, ..MockSampling::default() };
        let (_, top) = synth_next(&cfg, "s0", &sampling, &mut rng).unwrap();
        let pa = 0.6f64.powf(1.0 / 0.7);
        let pb = 0.4f64.powf(1.0 / 0.7);
        let want = pa / (pa + pb);
        let got = top.iter().find(|(id, _)| *id == cfg.token_id("a").unwrap()).unwrap().1;
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn identical_seed_and_prefix_replays_identically() {
        let cfg = cfg();
        let sampling =
            MockSampling { max_new_tokens: 5, temperature: 0.9, ..MockSampling::default() };
        let a = generate(&cfg, "PROMPT</think>\n\n", &sampling).unwrap();
        let b = generate(&cfg, "PROMPT</think>\n\n", &sampling).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tail_replay_reaches_the_right_state() {
        let cfg = cfg();
        let (state, consumed) = walk_tail(&cfg, "a;;").unwrap();
        assert_eq!(state, "s1");
        assert_eq!(consumed, vec![cfg.token_id("a").unwrap(), cfg.token_id(";").unwrap(), cfg.token_id(";").unwrap()]);
        assert!(matches!(
            walk_tail(&cfg, "zzz"),
            Err(GenError::UnparseableTail { offset: 0, .. })
        ));
    }

    #[test]
    fn top_p_truncates_and_renormalizes() {
        // {a: .5, b: .3, c: .2} with top_p = 0.7 keeps {a, b} renormalized
        let mut cfg = cfg();
        cfg.grammar.insert(
            "t".into(),
            StateDef {
                candidates: vec![
                    Candidate { token: "a".into(), weight: 0.5, next: "s1".into() },
                    Candidate { token: "b".into(), weight: 0.3, next: "s1".into() },
                    Candidate { token: "c".into(), weight: 0.2, next: "s1".into() },
                ],
                scripted: false,
                emit: None,
            },
        );
        cfg.validate().unwrap();
        let def = cfg.grammar.get("t").unwrap();
        let reported = reported_distribution(&cfg, def, 1.0);
        let dist = sampling_distribution(&reported, 0, 0.7);
        assert_eq!(dist.len(), 2);
        assert!((dist[0].1 - 0.625).abs() < 1e-12);
        assert!((dist[1].1 - 0.375).abs() < 1e-12);
        // top_k = 1 forces the argmax
        let dist = sampling_distribution(&reported, 1, 1.0);
        assert_eq!(dist.len(), 1);
        assert!((dist[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stop_token_is_excluded_from_output() {
        let mut cfg = cfg();
        cfg.vocab.push("</function>".into());
        cfg.grammar.insert(
            "s1".into(),
            StateDef {
                candidates: vec![Candidate {
                    token: "</function>".into(),
                    weight: 1.0,
                    next: "s1".into(),
                }],
                scripted: false,
                emit: None,
            },
        );
        cfg.validate().unwrap();
        let sampling = MockSampling {
            max_new_tokens: 10,
            stop: vec!["</function>".into()],
            ..MockSampling::default()
        };
        let gen = generate(&cfg, "", &sampling).unwrap();
        assert_eq!(gen.outcome, GenOutcome::Stop);
        assert_eq!(gen.token_ids.len(), 1, "one content token, stop marker excluded");
        assert!(gen.token_texts[0] == "a" || gen.token_texts[0] == "b");
        assert_eq!(gen.routing.len(), 1);
    }
}
