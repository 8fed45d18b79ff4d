use std::collections::BTreeMap;

use crate::config::{Candidate, MockConfig, StateDef};

fn cand(token: &str, weight: f64, next: &str) -> Candidate {
    Candidate { token: token.to_string(), weight, next: next.to_string() }
}

fn weighted(candidates: Vec<Candidate>) -> StateDef {
    StateDef { candidates, scripted: false, emit: None }
}

fn collect_vocab(grammar: &BTreeMap<String, StateDef>) -> Vec<String> {
    let mut vocab: Vec<String> = grammar
        .values()
        .flat_map(|s| s.candidates.iter().map(|c| c.token.clone()))
        .collect();
    vocab.sort();
    vocab.dedup();
    vocab
}

/// Mixing schedule shaped like the layer profile the analysis is designed to
/// recover: near-token-identity routing in the input layers, strongly
/// context-driven routing in a mid band, moderate in the deep layers, with
/// linear ramps across the unspecified stretches.
pub fn crossing_lambda(n_layers: usize) -> Vec<f64> {
    let mut lambda = vec![0.3; n_layers];
    for (layer, slot) in lambda.iter_mut().enumerate() {
        *slot = if layer <= 3 {
            0.05
        } else if layer < 12 {
            // ramp 0.05 -> 0.8 over layers 4..12
            0.05 + (0.8 - 0.05) * (layer - 3) as f64 / 9.0
        } else if layer <= 22 {
            0.8
        } else if layer < 30 {
            // ramp 0.8 -> 0.3 over layers 23..30
            0.8 - (0.8 - 0.3) * (layer - 22) as f64 / 8.0
        } else {
            0.3
        };
    }
    lambda
}

/// Desk-scale C-function grammar.
///
/// Variation sites give the downstream pipeline something real to measure:
/// three comment-word slots and the local variable name vary without touching
/// the assembly, while a sampled operator and a sampled literal split the
/// corpus into distinct assembly groups. Eight-way near-uniform slots keep
/// those steps flat enough to qualify as decision points at the default
/// threshold; binary choices stay fork-free and diversify only through
/// sampling. Consecutive variation sites are separated by more than a full
/// context window of fixed scaffold tokens, so a difference at one site has
/// rolled out of the window by the next -- the corpus keeps plenty of
/// different-token positions whose contexts match exactly, which is what the
/// context-driven layers of the routing model key on.
pub fn c_demo_config(seed: u64, lambda: Vec<f64>) -> MockConfig {
    let mut g: BTreeMap<String, StateDef> = BTreeMap::new();
    let w1 = ["fast", "quick", "basic", "simple", "plain", "rough", "small", "tidy"];
    let w2 = ["merge", "blend", "fold", "join", "stack", "chain", "group", "mix"];
    let w3 = ["total", "final", "whole", "summed", "joined", "packed", "neat", "full"];
    let vars = ["s", "t", "u", "v", "w", "y", "z", "q"];

    // linear chain of single-candidate states emitting `tokens`, ending in
    // `next`; states are named `{name}_{i}`
    let chain = |g: &mut BTreeMap<String, StateDef>, name: &str, tokens: &[&str], next: &str| {
        for (i, tok) in tokens.iter().enumerate() {
            let state = if i == 0 { name.to_string() } else { format!("{name}_{i}") };
            let to = if i + 1 == tokens.len() { next.to_string() } else { format!("{name}_{}", i + 1) };
            g.insert(state, weighted(vec![cand(tok, 1.0, &to)]));
        }
    };

    let stmt = |v: &str, op: &str, rhs: &str| -> Vec<String> {
        vec![
            "    ".into(), v.into(), " = ".into(), v.into(), " ".into(), op.into(), " ".into(),
            rhs.into(), ";".into(), "\n".into(),
        ]
    };
    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    chain(&mut g, "sig", &["int combine(int a, int b) {", "\n"], "f0");
    let f0: Vec<String> = [
        "    ", "int ", "acc", " = ", "0", ";", "\n",
        "    ", "int ", "lim", " = ", "8", ";", "\n",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    chain(&mut g, "f0", &refs(&f0), "c1");

    // comment sites: indent, marker, one varying word, newline
    chain(&mut g, "c1", &["    ", "// "], "w1");
    g.insert("w1".into(), weighted(w1.iter().map(|w| cand(w, 1.0, "nl1")).collect()));
    chain(&mut g, "nl1", &["\n"], "f1");
    let f1: Vec<String> = [stmt("acc", "+", "a"), stmt("acc", "+", "b")].concat();
    chain(&mut g, "f1", &refs(&f1), "c2");

    chain(&mut g, "c2", &["    ", "// "], "w2");
    g.insert("w2".into(), weighted(w2.iter().map(|w| cand(w, 1.0, "nl2")).collect()));
    chain(&mut g, "nl2", &["\n"], "f2");
    let f2: Vec<String> = [stmt("lim", "+", "acc"), stmt("acc", "-", "lim")].concat();
    chain(&mut g, "f2", &refs(&f2), "c3");

    chain(&mut g, "c3", &["    ", "// "], "w3");
    g.insert("w3".into(), weighted(w3.iter().map(|w| cand(w, 1.0, "nl3")).collect()));
    chain(&mut g, "nl3", &["\n"], "f3");
    let f3: Vec<String> = [stmt("lim", "*", "2"), stmt("acc", "+", "lim")].concat();
    chain(&mut g, "f3", &refs(&f3), "litline");

    // sampled literal: splits assembly groups without forking
    chain(&mut g, "litline", &["    ", "acc", " = ", "acc", " ", "+", " "], "lit");
    g.insert(
        "lit".into(),
        weighted(vec![cand("1", 1.0, "litsemi"), cand("2", 1.0, "litsemi")]),
    );
    chain(&mut g, "litsemi", &[";", "\n"], "f4");
    let f4: Vec<String> = [stmt("acc", "+", "a"), stmt("lim", "+", "acc")].concat();
    chain(&mut g, "f4", &refs(&f4), "vdecl");

    // varying local name, declared here and re-used at the return site; the
    // tail from here on must remember the name, so it forks into per-name
    // state chains
    chain(&mut g, "vdecl", &["    ", "int "], "var");
    g.insert(
        "var".into(),
        weighted(vars.iter().map(|v| cand(v, 1.0, &format!("asn_{v}"))).collect()),
    );
    for v in vars {
        chain(&mut g, &format!("asn_{v}"), &[" = ", "a", " "], &format!("op_{v}"));
        // sampled operator: the second group-splitting axis
        g.insert(
            format!("op_{v}"),
            weighted(vec![
                cand("+", 1.0, &format!("rhs_{v}")),
                cand("-", 1.0, &format!("rhs_{v}")),
            ]),
        );
        let tail: Vec<String> = vec![
            " ".into(), "b".into(), ";".into(), "\n".into(),
            "    ".into(), "return ".into(), v.into(), " + ".into(), "acc".into(), ";".into(),
            "\n".into(),
        ];
        chain(&mut g, &format!("rhs_{v}"), &refs(&tail), "close");
    }
    chain(&mut g, "close", &["}", "\n"], "fin");
    g.insert("fin".into(), weighted(vec![cand("</function>", 1.0, "fin")]));

    let n_layers = lambda.len();
    let cfg = MockConfig {
        vocab: collect_vocab(&g),
        start_state: "sig".to_string(),
        grammar: g,
        lambda,
        n_layers,
        slots: 8,
        n_routed_experts: 256,
        seed,
        ..MockConfig::default()
    };
    cfg.validate().expect("preset validates");
    cfg
}

/// Scripted endpoint with exactly one decision point: the root's first step
/// reports a distribution whose top-3 prefix stays under 0.40 cumulative
/// while the emitted token is outside that prefix, so a default run forks
/// three children and nothing else.
pub fn scripted_three_way_root(seed: u64) -> MockConfig {
    let mut g: BTreeMap<String, StateDef> = BTreeMap::new();
    let mut root_cands = vec![
        cand("alpha", 0.15, "s1"),
        cand("beta", 0.13, "s1"),
        cand("gamma", 0.10, "s1"),
        cand("delta", 0.08, "s1"),
    ];
    for i in 0..6 {
        root_cands.push(cand(&format!("filler{i}"), 0.09, "s1"));
    }
    g.insert(
        "s0".into(),
        StateDef { candidates: root_cands, scripted: true, emit: Some("delta".to_string()) },
    );
    g.insert(
        "s1".into(),
        StateDef {
            candidates: vec![cand("done", 0.95, "s2"), cand("pad", 0.05, "s2")],
            scripted: true,
            emit: Some("done".to_string()),
        },
    );
    g.insert(
        "s2".into(),
        StateDef {
            candidates: vec![cand("</function>", 1.0, "s2")],
            scripted: true,
            emit: Some("</function>".to_string()),
        },
    );
    let cfg = MockConfig {
        vocab: collect_vocab(&g),
        start_state: "s0".to_string(),
        grammar: g,
        lambda: vec![0.5; 8],
        n_layers: 8,
        slots: 4,
        n_routed_experts: 32,
        seed,
        ..MockConfig::default()
    };
    cfg.validate().expect("preset validates");
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, GenOutcome, MockSampling};

    #[test]
    fn crossing_lambda_has_designed_bands() {
        let l = crossing_lambda(40);
        assert_eq!(l.len(), 40);
        assert!(l[..4].iter().all(|&x| x == 0.05));
        assert!(l[12..=22].iter().all(|&x| x == 0.8));
        assert!(l[30..].iter().all(|&x| x == 0.3));
        assert!(l[4] > 0.05 && l[11] < 0.8);
        assert!(l[23] < 0.8 && l[29] > 0.3);
    }

    #[test]
    fn c_demo_generates_a_complete_function() {
        let cfg = c_demo_config(7, crossing_lambda(40));
        let sampling = MockSampling {
            temperature: 0.7,
            top_p: 0.95,
            top_k: 20,
            max_new_tokens: 256,
            stop: vec!["</function>".to_string()],
        };
        let gen = generate(&cfg, "</think>\n\n", &sampling).unwrap();
        assert_eq!(gen.outcome, GenOutcome::Stop);
        let text = gen.token_texts.concat();
        assert!(text.starts_with("int combine(int a, int b) {"), "got {text:?}");
        assert!(text.contains("return "));
        assert!(text.trim_end().ends_with('}'), "got {text:?}");
        assert!(text.contains("// "));
    }

    #[test]
    fn scripted_root_distribution_is_reported_verbatim() {
        let cfg = scripted_three_way_root(1);
        let sampling = MockSampling {
            max_new_tokens: 16,
            stop: vec!["</function>".to_string()],
            ..MockSampling::default()
        };
        let gen = generate(&cfg, "</think>\n\n", &sampling).unwrap();
        assert_eq!(gen.outcome, GenOutcome::Stop);
        assert_eq!(gen.token_texts, vec!["delta", "done"]);
        let step0 = &gen.top_probs[0];
        assert!((step0[0].1 - 0.15).abs() < 1e-12);
        assert!((step0[1].1 - 0.13).abs() < 1e-12);
        assert!((step0[2].1 - 0.10).abs() < 1e-12);
        // fourth-ranked entry is a filler at 0.09, pushing the cumulative past 0.40
        assert!((step0[3].1 - 0.09).abs() < 1e-12);
        let total: f64 = step0.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forked_tails_replay_through_the_script() {
        let cfg = scripted_three_way_root(1);
        let sampling = MockSampling {
            max_new_tokens: 16,
            stop: vec!["</function>".to_string()],
            ..MockSampling::default()
        };
        // child forced with candidate "alpha" instead of the sampled "delta"
        let gen = generate(&cfg, "</think>\n\nalpha", &sampling).unwrap();
        assert_eq!(gen.token_texts, vec!["done"]);
        // its first step is the confident state: no decision point there
        assert!(gen.top_probs[0][0].1 > 0.9);
    }
}
