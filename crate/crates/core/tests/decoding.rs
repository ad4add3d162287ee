//! Speculative and multi-level decoding reproduce greedy decoding exactly.

use proptest::prelude::*;
use specqd_core::specdec::{run_benchmark, verify};
use specqd_core::{
    greedy_generate, speculative_generate, GemmPath, GenerationConfig, LevelSpec, LmConfig,
    SpecTree, TinyLmModel,
};

fn config(vocab: usize, d: usize, layers: usize, seq: usize) -> LmConfig {
    LmConfig {
        vocab_size: vocab,
        d_model: d,
        n_layers: layers,
        n_heads: 4,
        d_ff: 2 * d,
        max_seq_len: seq,
        norm_epsilon: 1e-5,
    }
}

fn prompt_strategy(vocab: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..vocab, 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn output_equals_greedy(
        seed in any::<u64>(),
        prompt in prompt_strategy(48),
        depth in 0usize..=2,
        n in prop::array::uniform2(1usize..=8),
        th in prop::array::uniform2(prop::sample::select(vec![0.0f32, 0.4, 0.65, 1.0])),
        max_new in 0usize..24,
        eos in prop::option::of(0u32..48),
    ) {
        let target = TinyLmModel::init_seeded(config(48, 32, 2, 48), seed).unwrap();
        let mid = target.direct_cast_mxfp4().unwrap();
        let small = TinyLmModel::init_seeded(config(48, 16, 1, 40), seed ^ 1).unwrap();
        let mut tree = SpecTree::new(&target);
        let drafts = [&mid, &small];
        for level in 0..depth {
            tree = tree
                .with_draft(LevelSpec::new(drafts[level]).with_spec_len(n[level]).with_threshold(th[level]))
                .unwrap();
        }
        let cfg = GenerationConfig { max_new, eos };
        let greedy = greedy_generate(&target, &prompt, cfg).unwrap();
        let spec = speculative_generate(&tree, &prompt, cfg).unwrap();
        prop_assert_eq!(&spec.tokens, &greedy.tokens);
        prop_assert_eq!(spec.context_truncated, greedy.context_truncated);

        // every target round accounts for its emitted tokens
        let emitted: usize = spec.rounds.iter().filter(|r| r.level == 1).map(|r| r.emitted).sum();
        if depth > 0 {
            prop_assert_eq!(emitted, spec.tokens.len());
        }
        for r in &spec.rounds {
            prop_assert!(r.accepted <= r.proposed);
            prop_assert!(r.emitted <= r.accepted + 1);
            prop_assert!(r.proposed <= n[r.level - 1]);
        }
        for level in 1..=depth {
            let s = &spec.stats.levels[level];
            prop_assert!(s.accepted <= s.proposed);
        }
    }

    #[test]
    fn rollback_then_forward_matches_fresh(seed in any::<u64>(), tokens in prompt_strategy(32), cut in 0usize..12) {
        let m = TinyLmModel::init_seeded(config(32, 16, 1, 32), seed).unwrap();
        let cut = cut.min(tokens.len());
        let mut cache = m.new_cache();
        m.forward(&mut cache, &tokens).unwrap();
        cache.rollback(cut).unwrap();
        let suffix = [7u32, 3, 1];
        let resumed = m.forward(&mut cache, &suffix).unwrap();
        let mut fresh_cache = m.new_cache();
        let mut all = tokens[..cut].to_vec();
        all.extend_from_slice(&suffix);
        let fresh = m.forward(&mut fresh_cache, &all).unwrap();
        for i in 0..suffix.len() {
            prop_assert_eq!(resumed.row(i), fresh.row(cut + i));
        }
        prop_assert_eq!(cache.tokens(), fresh_cache.tokens());
    }
}

#[test]
fn verify_leaves_cache_at_accepted_prefix() {
    let m = TinyLmModel::init_seeded(config(40, 32, 1, 64), 5).unwrap();
    let prompt = [1, 2, 3, 4];
    let greedy = greedy_generate(&m, &prompt, GenerationConfig::new(6)).unwrap().tokens;
    let mut proposal = greedy[..5].to_vec();
    proposal[3] = (proposal[3] + 1) % 40;
    let mut cache = m.new_cache();
    let v = verify(&m, &mut cache, &prompt, &proposal).unwrap();
    assert_eq!(v.accepted, 3);
    assert_eq!(v.bonus, greedy[3]);
    assert_eq!(cache.len(), prompt.len() + 3);
    assert_eq!(&cache.tokens()[prompt.len()..], &greedy[..3]);
}

#[test]
fn all_gemm_paths_decode_losslessly() {
    let target = TinyLmModel::init_seeded(config(64, 64, 2, 64), 21).unwrap();
    let draft = target.direct_cast_mxfp4().unwrap();
    let prompt = [5, 9, 12, 40];
    let cfg = GenerationConfig::new(20);
    let greedy = greedy_generate(&target, &prompt, cfg).unwrap();
    for path in [GemmPath::Reference, GemmPath::LatescaleF32, GemmPath::Int8] {
        let d = draft.clone().with_exec(specqd_core::ExecOptions {
            mxfp4_path: path,
            simulated_bandwidth: None,
        });
        let tree = SpecTree::new(&target).with_draft(LevelSpec::new(&d)).unwrap();
        let out = speculative_generate(&tree, &prompt, cfg).unwrap();
        assert_eq!(out.tokens, greedy.tokens, "{path}");
    }
}

#[test]
fn quantized_self_draft_beats_unrelated_draft() {
    let target = TinyLmModel::init_seeded(config(64, 64, 2, 96), 3).unwrap();
    let cast = target.direct_cast_mxfp4().unwrap();
    let other = TinyLmModel::init_seeded(config(64, 16, 1, 96), 4).unwrap();
    let prompts: Vec<Vec<u32>> = (0..8).map(|i| vec![i, i + 1, 2 * i]).collect();
    let cfg = GenerationConfig::new(16);
    let alpha = |d: &TinyLmModel| {
        let tree = SpecTree::new(&target)
            .with_draft(LevelSpec::new(d).with_threshold(0.0))
            .unwrap();
        let r = run_benchmark(&tree, &prompts, cfg).unwrap();
        assert!(r.all_lossless());
        r.stats.alpha(1).unwrap()
    };
    let (a_cast, a_other) = (alpha(&cast), alpha(&other));
    assert!(a_cast > a_other, "cast {a_cast} vs unrelated {a_other}");
}

#[test]
fn draft_with_shorter_context_still_lossless() {
    let target = TinyLmModel::init_seeded(config(32, 32, 1, 40), 8).unwrap();
    let draft = TinyLmModel::init_seeded(config(32, 16, 1, 12), 9).unwrap();
    let tree = SpecTree::new(&target)
        .with_draft(LevelSpec::new(&draft).with_spec_len(5).with_threshold(0.0))
        .unwrap();
    let prompt = [1u32, 2, 3, 4, 5, 6, 7, 8];
    let cfg = GenerationConfig::new(100);
    let greedy = greedy_generate(&target, &prompt, cfg).unwrap();
    let spec = speculative_generate(&tree, &prompt, cfg).unwrap();
    assert_eq!(spec.tokens, greedy.tokens);
    assert!(greedy.context_truncated && spec.context_truncated);
    // once the draft's window is full it proposes nothing and the target
    // steps alone
    assert!(spec.rounds.iter().any(|r| r.proposed == 0));
}
