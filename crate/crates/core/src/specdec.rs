//! Greedy speculative decoding, recursively composed into multi-level
//! decoding.
//!
//! A [`SpecTree`] orders models target-first: level `i + 1` drafts for level
//! `i`. A level with its own sub-draft produces its proposals by running
//! speculative decoding against that sub-draft, so every level emits exactly
//! its own greedy continuation and the target's output never depends on how
//! the drafts were produced.
//!
//! Verification compares argmax ids with the same lowest-id tie-break as
//! [`greedy_generate`], which makes the output token-identical to greedy
//! decoding of the target.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::tinylm::{greedy_next, token_probability, KvCache, TinyLmModel};

pub const DEFAULT_SPEC_LEN: usize = 8;
pub const DEFAULT_THRESHOLD: f32 = 0.4;
/// Stricter confidence cut-off for drafts that track the level above poorly.
pub const STRINGENT_THRESHOLD: f32 = 0.65;

/// One level of a [`SpecTree`]. `spec_len` and `threshold` govern how this
/// level drafts for the level above; they are ignored on the target.
#[derive(Debug, Clone, Copy)]
pub struct LevelSpec<'m> {
    pub model: &'m TinyLmModel,
    pub spec_len: usize,
    /// Drafting stops after a token whose softmax probability is below this.
    pub threshold: f32,
}

impl<'m> LevelSpec<'m> {
    pub fn new(model: &'m TinyLmModel) -> Self {
        LevelSpec {
            model,
            spec_len: DEFAULT_SPEC_LEN,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_spec_len(mut self, spec_len: usize) -> Self {
        self.spec_len = spec_len;
        self
    }

    pub fn with_threshold(mut self, threshold: f32) -> Self {
        self.threshold = threshold;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.spec_len == 0 {
            return Err(Error::Config("speculation length must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "confidence threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Draft hierarchy; level 0 is the target.
#[derive(Debug, Clone)]
pub struct SpecTree<'m> {
    levels: Vec<LevelSpec<'m>>,
}

impl<'m> SpecTree<'m> {
    /// A tree with no drafts, i.e. plain greedy decoding.
    pub fn new(target: &'m TinyLmModel) -> Self {
        SpecTree {
            levels: vec![LevelSpec::new(target)],
        }
    }

    /// Appends a draft below the current deepest level.
    pub fn with_draft(mut self, level: LevelSpec<'m>) -> Result<Self> {
        level.validate()?;
        let vocab = self.target().config.vocab_size;
        if level.model.config.vocab_size != vocab {
            return Err(Error::Config(format!(
                "draft vocabulary {} differs from target vocabulary {vocab}",
                level.model.config.vocab_size
            )));
        }
        self.levels.push(level);
        Ok(self)
    }

    pub fn target(&self) -> &'m TinyLmModel {
        self.levels[0].model
    }

    pub fn levels(&self) -> &[LevelSpec<'m>] {
        &self.levels
    }

    /// Number of draft levels.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// The same tree with levels deeper than `depth` removed.
    pub fn truncated(&self, depth: usize) -> SpecTree<'m> {
        SpecTree {
            levels: self.levels[..=depth.min(self.depth())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_new: usize,
    pub eos: Option<u32>,
}

impl GenerationConfig {
    pub fn new(max_new: usize) -> Self {
        GenerationConfig { max_new, eos: None }
    }

    pub fn with_eos(mut self, eos: u32) -> Self {
        self.eos = Some(eos);
        self
    }
}

/// Output of [`greedy_generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<u32>,
    /// Generation stopped because the context window was full.
    pub context_truncated: bool,
    pub elapsed: Duration,
}

fn check_prompt(model: &TinyLmModel, prompt: &[u32]) -> Result<()> {
    if prompt.is_empty() {
        return Err(Error::Empty("prompt"));
    }
    let max = model.config.max_seq_len;
    if prompt.len() > max {
        return Err(Error::ContextOverflow {
            needed: prompt.len(),
            max,
        });
    }
    Ok(())
}

/// Auto-regressive argmax decoding of `model`.
pub fn greedy_generate(
    model: &TinyLmModel,
    prompt: &[u32],
    config: GenerationConfig,
) -> Result<Generation> {
    check_prompt(model, prompt)?;
    let start = Instant::now();
    let mut tokens = Vec::with_capacity(config.max_new);
    let mut context_truncated = false;
    if config.max_new > 0 {
        let mut cache = model.new_cache();
        let mut logits = model.forward(&mut cache, prompt)?;
        loop {
            let token = greedy_next(logits.row(logits.rows() - 1));
            tokens.push(token);
            if config.eos == Some(token) || tokens.len() == config.max_new {
                break;
            }
            if prompt.len() + tokens.len() > model.config.max_seq_len {
                context_truncated = true;
                break;
            }
            logits = model.forward(&mut cache, &[token])?;
        }
    }
    Ok(Generation {
        tokens,
        context_truncated,
        elapsed: start.elapsed(),
    })
}

/// One verification round: `level` is the drafting level whose proposals
/// were checked by level `level - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub level: usize,
    pub proposed: usize,
    pub accepted: usize,
    /// Tokens the verifying level kept after EOS, limit and confidence cuts.
    pub emitted: usize,
    /// The verifier's bonus token survived those cuts.
    pub bonus: bool,
    pub draft_ms: f64,
    pub verify_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    /// Tokens proposed by this level to the level above.
    pub proposed: u64,
    /// Of those, tokens the level above accepted.
    pub accepted: u64,
    pub rounds: u64,
    pub forward_calls: u64,
    pub forward_seconds: f64,
}

impl LevelStats {
    pub fn alpha(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Per-level acceptance and timing aggregates, indexed like the tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub levels: Vec<LevelStats>,
}

impl AcceptanceStats {
    fn with_levels(n: usize) -> Self {
        AcceptanceStats {
            levels: vec![LevelStats::default(); n],
        }
    }

    /// Acceptance ratio of `level`'s drafts; `None` without proposals.
    pub fn alpha(&self, level: usize) -> Option<f64> {
        self.levels.get(level).and_then(LevelStats::alpha)
    }

    pub fn merge(&mut self, other: &AcceptanceStats) {
        if self.levels.len() < other.levels.len() {
            self.levels.resize(other.levels.len(), LevelStats::default());
        }
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.proposed += b.proposed;
            a.accepted += b.accepted;
            a.rounds += b.rounds;
            a.forward_calls += b.forward_calls;
            a.forward_seconds += b.forward_seconds;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeculativeOutput {
    pub tokens: Vec<u32>,
    pub context_truncated: bool,
    pub rounds: Vec<RoundRecord>,
    pub stats: AcceptanceStats,
    pub elapsed: Duration,
}

impl SpeculativeOutput {
    /// Verification rounds performed by the target.
    pub fn target_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.level == 1).count()
    }
}

/// Outcome of verifying a proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    /// Length of the longest proposal prefix matching the verifier's argmax.
    pub accepted: usize,
    /// Verifier's argmax after the accepted prefix.
    pub bonus: u32,
    /// Verifier's softmax probability of each accepted token and the bonus.
    pub probabilities: Vec<f32>,
}

/// Brings `cache` in line with `seq` and returns logits rows for positions
/// `from..seq.len()`. Positions already cached and shared with `seq` before
/// `from` are reused; everything else is rolled back and recomputed.
pub fn sync_logits(
    model: &TinyLmModel,
    cache: &mut KvCache,
    seq: &[u32],
    from: usize,
) -> Result<Matrix> {
    assert!(from < seq.len(), "no positions requested");
    let shared = cache
        .tokens()
        .iter()
        .zip(seq)
        .take_while(|(a, b)| a == b)
        .count();
    let keep = shared.min(from);
    cache.rollback(keep)?;
    let logits = model.forward(cache, &seq[keep..])?;
    let skip = from - keep;
    let vocab = logits.cols();
    Matrix::from_vec(
        logits.rows() - skip,
        vocab,
        logits.as_slice()[skip * vocab..].to_vec(),
    )
}

/// Verifies `proposed` as the continuation of `context` with one forward
/// pass over the last context token and every proposal. Afterwards the cache
/// holds `context` plus the accepted prefix.
pub fn verify(
    model: &TinyLmModel,
    cache: &mut KvCache,
    context: &[u32],
    proposed: &[u32],
) -> Result<Verification> {
    if proposed.is_empty() {
        return Err(Error::Empty("proposal"));
    }
    check_prompt(model, context)?;
    verify_unchecked(model, cache, context, proposed)
}

fn verify_unchecked(
    model: &TinyLmModel,
    cache: &mut KvCache,
    context: &[u32],
    proposed: &[u32],
) -> Result<Verification> {
    let mut seq = Vec::with_capacity(context.len() + proposed.len());
    seq.extend_from_slice(context);
    seq.extend_from_slice(proposed);
    let logits = sync_logits(model, cache, &seq, context.len() - 1)?;
    let mut accepted = 0;
    let mut probabilities = Vec::with_capacity(proposed.len() + 1);
    while accepted < proposed.len() {
        let row = logits.row(accepted);
        if greedy_next(row) != proposed[accepted] {
            break;
        }
        probabilities.push(token_probability(row, proposed[accepted]));
        accepted += 1;
    }
    let row = logits.row(accepted);
    let bonus = greedy_next(row);
    probabilities.push(token_probability(row, bonus));
    cache.rollback(context.len() + accepted)?;
    Ok(Verification {
        accepted,
        bonus,
        probabilities,
    })
}

/// Proposes up to `spec_len` tokens from `tree` level `level` (at least 1)
/// continuing `context`, stopping early after a token whose probability is
/// below the level's threshold. Levels below `level` accelerate the drafting.
pub fn draft_tokens(tree: &SpecTree<'_>, level: usize, context: &[u32]) -> Result<Vec<u32>> {
    if level == 0 || level > tree.depth() {
        return Err(Error::Config(format!(
            "level {level} is not a draft level of a depth-{} tree",
            tree.depth()
        )));
    }
    let spec = tree.levels[level];
    check_prompt(spec.model, context)?;
    let mut session = Session::new(tree);
    let produced = session.generate(level, context, spec.spec_len, Some(spec.threshold), None)?;
    Ok(produced.tokens)
}

/// Speculative (depth 1) or multi-level (depth >= 2) decoding. The output
/// tokens equal `greedy_generate(tree.target(), prompt, config)`.
pub fn speculative_generate(
    tree: &SpecTree<'_>,
    prompt: &[u32],
    config: GenerationConfig,
) -> Result<SpeculativeOutput> {
    check_prompt(tree.target(), prompt)?;
    let start = Instant::now();
    let mut session = Session::new(tree);
    let produced = session.generate(0, prompt, config.max_new, None, config.eos)?;
    Ok(SpeculativeOutput {
        tokens: produced.tokens,
        context_truncated: produced.context_truncated,
        rounds: session.rounds,
        stats: session.stats,
        elapsed: start.elapsed(),
    })
}

struct Produced {
    tokens: Vec<u32>,
    context_truncated: bool,
}

struct Session<'t, 'm> {
    tree: &'t SpecTree<'m>,
    caches: Vec<KvCache>,
    rounds: Vec<RoundRecord>,
    stats: AcceptanceStats,
}

impl<'t, 'm> Session<'t, 'm> {
    fn new(tree: &'t SpecTree<'m>) -> Self {
        Session {
            tree,
            caches: tree.levels.iter().map(|l| l.model.new_cache()).collect(),
            rounds: Vec::new(),
            stats: AcceptanceStats::with_levels(tree.levels.len()),
        }
    }

    fn next_token(&mut self, level: usize, seq: &[u32]) -> Result<(u32, f32)> {
        let model = self.tree.levels[level].model;
        let t = Instant::now();
        let logits = sync_logits(model, &mut self.caches[level], seq, seq.len() - 1)?;
        self.account(level, t.elapsed());
        let row = logits.row(0);
        let token = greedy_next(row);
        Ok((token, token_probability(row, token)))
    }

    fn verify_at(&mut self, level: usize, seq: &[u32], proposed: &[u32]) -> Result<Verification> {
        let model = self.tree.levels[level].model;
        let t = Instant::now();
        let v = verify_unchecked(model, &mut self.caches[level], seq, proposed)?;
        self.account(level, t.elapsed());
        Ok(v)
    }

    fn account(&mut self, level: usize, elapsed: Duration) {
        let s = &mut self.stats.levels[level];
        s.forward_calls += 1;
        s.forward_seconds += elapsed.as_secs_f64();
    }

    /// Emits up to `max_new` tokens of `level`'s greedy continuation of
    /// `context`. Stops after `eos`, or after a token with probability below
    /// `stop_below` (the confidence rule used when this level is a draft).
    fn generate(
        &mut self,
        level: usize,
        context: &[u32],
        max_new: usize,
        stop_below: Option<f32>,
        eos: Option<u32>,
    ) -> Result<Produced> {
        let cap = self.tree.levels[level].model.config.max_seq_len;
        let leaf = level + 1 == self.tree.levels.len();
        let mut seq = context.to_vec();
        let mut tokens = Vec::with_capacity(max_new);
        let mut context_truncated = false;

        while tokens.len() < max_new {
            if seq.len() > cap {
                context_truncated = true;
                break;
            }
            let budget = max_new - tokens.len();
            let mut round = None;
            let candidates: Vec<(u32, f32)> = if leaf {
                vec![self.next_token(level, &seq)?]
            } else {
                let sub = self.tree.levels[level + 1];
                let n = sub.spec_len.min(budget).min(cap - seq.len());
                let t = Instant::now();
                let proposed = if n == 0 {
                    Vec::new()
                } else {
                    self.generate(level + 1, &seq, n, Some(sub.threshold), None)?
                        .tokens
                };
                let draft_ms = t.elapsed().as_secs_f64() * 1e3;
                let t = Instant::now();
                let v = self.verify_at(level, &seq, &proposed)?;
                let verify_ms = t.elapsed().as_secs_f64() * 1e3;

                let s = &mut self.stats.levels[level + 1];
                s.proposed += proposed.len() as u64;
                s.accepted += v.accepted as u64;
                s.rounds += 1;
                round = Some(RoundRecord {
                    level: level + 1,
                    proposed: proposed.len(),
                    accepted: v.accepted,
                    emitted: 0,
                    bonus: false,
                    draft_ms,
                    verify_ms,
                });
                proposed[..v.accepted]
                    .iter()
                    .copied()
                    .chain(std::iter::once(v.bonus))
                    .zip(v.probabilities)
                    .collect()
            };

            let offered = candidates.len();
            let mut kept = 0;
            let mut stop = false;
            for (token, p) in candidates {
                if tokens.len() == max_new {
                    break;
                }
                tokens.push(token);
                seq.push(token);
                kept += 1;
                if eos == Some(token) || stop_below.is_some_and(|th| p < th) {
                    stop = true;
                    break;
                }
            }
            if let Some(mut r) = round {
                r.emitted = kept;
                r.bonus = kept == offered;
                self.rounds.push(r);
            }
            if stop {
                break;
            }
        }
        Ok(Produced {
            tokens,
            context_truncated,
        })
    }
}

/// Per-prompt result of [`run_benchmark`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptResult {
    pub index: usize,
    pub prompt_len: usize,
    pub generated: usize,
    pub greedy_seconds: f64,
    pub speculative_seconds: f64,
    pub speedup: f64,
    /// Acceptance ratio per tree level (index 0, the target, is always `None`).
    pub alphas: Vec<Option<f64>>,
    pub lossless: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub depth: usize,
    pub prompts: Vec<PromptResult>,
    pub geomean_speedup: f64,
    pub stats: AcceptanceStats,
    /// Rounds tagged with their prompt index.
    pub rounds: Vec<(usize, RoundRecord)>,
    /// Greedy output per prompt.
    pub outputs: Vec<Vec<u32>>,
}

impl BenchmarkReport {
    pub fn all_lossless(&self) -> bool {
        self.prompts.iter().all(|p| p.lossless)
    }
}

/// Geometric mean; `NaN` for an empty slice.
pub fn geomean(values: &[f64]) -> f64 {
    let log_sum: f64 = values.iter().map(|v| v.ln()).sum();
    (log_sum / values.len() as f64).exp()
}

/// Times greedy decoding of the target and the speculative pipeline on every
/// prompt. A tree without drafts is the greedy pipeline itself, so its
/// speedup is exactly 1.
pub fn run_benchmark(
    tree: &SpecTree<'_>,
    prompts: &[Vec<u32>],
    config: GenerationConfig,
) -> Result<BenchmarkReport> {
    if prompts.is_empty() {
        return Err(Error::Empty("prompt set"));
    }
    let mut results = Vec::with_capacity(prompts.len());
    let mut stats = AcceptanceStats::with_levels(tree.levels.len());
    let mut rounds = Vec::new();
    let mut outputs = Vec::with_capacity(prompts.len());
    for (index, prompt) in prompts.iter().enumerate() {
        let greedy = greedy_generate(tree.target(), prompt, config)?;
        let greedy_seconds = greedy.elapsed.as_secs_f64();
        let (speculative_seconds, alphas, lossless) = if tree.depth() == 0 {
            (greedy_seconds, vec![None], true)
        } else {
            let spec = speculative_generate(tree, prompt, config)?;
            stats.merge(&spec.stats);
            rounds.extend(spec.rounds.iter().cloned().map(|r| (index, r)));
            let alphas = (0..tree.levels.len()).map(|l| spec.stats.alpha(l)).collect();
            (
                spec.elapsed.as_secs_f64(),
                alphas,
                spec.tokens == greedy.tokens,
            )
        };
        results.push(PromptResult {
            index,
            prompt_len: prompt.len(),
            generated: greedy.tokens.len(),
            greedy_seconds,
            speculative_seconds,
            speedup: if tree.depth() == 0 {
                1.0
            } else {
                greedy_seconds / speculative_seconds
            },
            alphas,
            lossless,
        });
        outputs.push(greedy.tokens);
    }
    let speedups: Vec<f64> = results.iter().map(|r| r.speedup).collect();
    Ok(BenchmarkReport {
        depth: tree.depth(),
        geomean_speedup: geomean(&speedups),
        prompts: results,
        stats,
        rounds,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinylm::LmConfig;

    fn cfg(d: usize, seq: usize) -> LmConfig {
        LmConfig {
            vocab_size: 40,
            d_model: d,
            n_layers: 1,
            n_heads: 2,
            d_ff: 2 * d,
            max_seq_len: seq,
            norm_epsilon: 1e-5,
        }
    }

    #[test]
    fn geomean_definition() {
        assert!((geomean(&[2.0, 8.0]) - 4.0).abs() < 1e-12);
        assert_eq!(geomean(&[1.0, 1.0, 1.0]), 1.0);
    }

    #[test]
    fn tree_validation() {
        let t = TinyLmModel::init_seeded(cfg(32, 32), 1).unwrap();
        let other = TinyLmModel::init_seeded(LmConfig { vocab_size: 41, ..cfg(32, 32) }, 1).unwrap();
        assert!(SpecTree::new(&t).with_draft(LevelSpec::new(&other)).is_err());
        assert!(SpecTree::new(&t).with_draft(LevelSpec::new(&t).with_spec_len(0)).is_err());
        assert!(SpecTree::new(&t).with_draft(LevelSpec::new(&t).with_threshold(1.5)).is_err());
        let tree = SpecTree::new(&t).with_draft(LevelSpec::new(&t)).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.truncated(0).depth(), 0);
    }

    #[test]
    fn greedy_limits() {
        let m = TinyLmModel::init_seeded(cfg(32, 8), 4).unwrap();
        let g = greedy_generate(&m, &[1, 2], GenerationConfig::new(0)).unwrap();
        assert!(g.tokens.is_empty() && !g.context_truncated);
        let g = greedy_generate(&m, &[1, 2], GenerationConfig::new(100)).unwrap();
        // prompt 2 + 7 forwarded + 1 final token = 9 = max_seq_len + 1 tokens total
        assert_eq!(g.tokens.len(), 7);
        assert!(g.context_truncated);
        assert!(greedy_generate(&m, &[], GenerationConfig::new(3)).is_err());
        assert!(greedy_generate(&m, &[0; 9], GenerationConfig::new(3)).is_err());
    }

    #[test]
    fn self_drafting_accepts_everything() {
        let m = TinyLmModel::init_seeded(cfg(32, 64), 9).unwrap();
        let prompt = [3, 1, 4];
        let greedy = greedy_generate(&m, &prompt, GenerationConfig::new(9)).unwrap();
        let mut cache = m.new_cache();
        let v = verify(&m, &mut cache, &prompt, &greedy.tokens[..8]).unwrap();
        assert_eq!(v.accepted, 8);
        assert_eq!(v.bonus, greedy.tokens[8]);
        assert_eq!(cache.len(), prompt.len() + 8);

        let tree = SpecTree::new(&m)
            .with_draft(LevelSpec::new(&m).with_spec_len(4).with_threshold(0.0))
            .unwrap();
        let out = speculative_generate(&tree, &prompt, GenerationConfig::new(20)).unwrap();
        let greedy = greedy_generate(&m, &prompt, GenerationConfig::new(20)).unwrap();
        assert_eq!(out.tokens, greedy.tokens);
        assert_eq!(out.stats.alpha(1), Some(1.0));
        assert_eq!(out.target_rounds(), 4);
    }

    #[test]
    fn mismatched_first_token_still_emits_bonus() {
        let m = TinyLmModel::init_seeded(cfg(32, 64), 9).unwrap();
        let prompt = [5, 6];
        let next = greedy_generate(&m, &prompt, GenerationConfig::new(1)).unwrap().tokens[0];
        let wrong = (next + 1) % 40;
        let mut cache = m.new_cache();
        let v = verify(&m, &mut cache, &prompt, &[wrong, wrong]).unwrap();
        assert_eq!(v.accepted, 0);
        assert_eq!(v.bonus, next);
        assert_eq!(v.probabilities.len(), 1);
        assert_eq!(cache.len(), prompt.len());
        assert!(verify(&m, &mut cache, &prompt, &[]).is_err());
    }

    #[test]
    fn threshold_controls_draft_length() {
        let t = TinyLmModel::init_seeded(cfg(32, 64), 1).unwrap();
        let d = TinyLmModel::init_seeded(cfg(32, 64), 2).unwrap();
        let base = SpecTree::new(&t);
        let eager = base.clone().with_draft(LevelSpec::new(&d).with_spec_len(6).with_threshold(0.0)).unwrap();
        assert_eq!(draft_tokens(&eager, 1, &[1, 2, 3]).unwrap().len(), 6);
        let strict = base.with_draft(LevelSpec::new(&d).with_spec_len(6).with_threshold(1.0)).unwrap();
        assert_eq!(draft_tokens(&strict, 1, &[1, 2, 3]).unwrap().len(), 1);
        assert!(draft_tokens(&strict, 0, &[1]).is_err());
        let plain = greedy_generate(&d, &[1, 2, 3], GenerationConfig::new(6)).unwrap();
        assert_eq!(draft_tokens(&eager, 1, &[1, 2, 3]).unwrap(), plain.tokens);
    }

    #[test]
    fn greedy_tree_benchmark_is_unit_speedup() {
        let m = TinyLmModel::init_seeded(cfg(32, 64), 3).unwrap();
        let report = run_benchmark(&SpecTree::new(&m), &[vec![1, 2], vec![3]], GenerationConfig::new(5)).unwrap();
        assert_eq!(report.geomean_speedup, 1.0);
        assert!(report.all_lossless());
        assert!(run_benchmark(&SpecTree::new(&m), &[], GenerationConfig::new(5)).is_err());
    }
}
