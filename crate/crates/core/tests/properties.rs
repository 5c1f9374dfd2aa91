mod common;

use std::collections::{BTreeMap, HashSet};

use common::Fixture;
use corpusforge_core::analytics::{corpus_stats, sus_score, tokenize, ApprovalBucket};
use corpusforge_core::clock::Timestamp;
use corpusforge_core::domain::{Decision, SentenceId, SentenceStatus, UserId};
use corpusforge_core::ledger::{Balances, Ledger, LedgerError};
use corpusforge_core::invariants;
use proptest::prelude::*;

// Characters the generators draw from, split by whether the tokenizer
// should treat them as punctuation.
const WORD_CHARS: &[char] = &['a', 'b', 'k', 'V', 'U', 'é', 'ŋ', 'ʼ', '7'];
const PUNCT_CHARS: &[char] = &['\'', '.', ',', '!', '?', '"', '(', ')', '“', '”', '—', '-', '¿', '…'];
const SPACE_CHARS: &[char] = &[' ', '\t', '\n', '\u{3000}'];

fn text_strategy() -> impl Strategy<Value = String> {
    let pool: Vec<char> = WORD_CHARS
        .iter()
        .chain(PUNCT_CHARS)
        .chain(SPACE_CHARS)
        .copied()
        .collect();
    prop::collection::vec(prop::sample::select(pool), 0..40).prop_map(|cs| cs.into_iter().collect())
}

/// Independent tokenizer over the generator alphabet.
fn oracle_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split(|c| SPACE_CHARS.contains(&c)) {
        let chars: Vec<char> = raw.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && PUNCT_CHARS.contains(&chars[start]) {
            start += 1;
        }
        while end > start && PUNCT_CHARS.contains(&chars[end - 1]) {
            end -= 1;
        }
        if start < end {
            let token: String = chars[start..end].iter().collect();
            tokens.push(token.to_lowercase());
        }
    }
    tokens
}

fn oracle_median(mut values: Vec<u64>) -> u64 {
    values.sort();
    if values.is_empty() {
        0
    } else {
        values[(values.len() - 1) / 2]
    }
}

proptest! {
    #[test]
    fn tokenize_matches_oracle(text in text_strategy()) {
        prop_assert_eq!(tokenize(&text), oracle_tokens(&text));
    }

    #[test]
    fn tokenize_is_idempotent(text in text_strategy()) {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once);
    }

    #[test]
    fn corpus_stats_match_brute_force(
        pairs in prop::collection::vec((text_strategy(), text_strategy(), 1u32..6), 0..60)
    ) {
        let stats = corpus_stats(pairs.iter().map(|(e, h, a)| (e.as_str(), h.as_str(), *a)));
        let n = pairs.len() as u64;
        prop_assert_eq!(stats.pair_count, n);

        let target: Vec<Vec<String>> = pairs.iter().map(|(_, h, _)| oracle_tokens(h)).collect();
        let source: Vec<Vec<String>> = pairs.iter().map(|(e, _, _)| oracle_tokens(e)).collect();
        prop_assert_eq!(stats.median_words, oracle_median(target.iter().map(|t| t.len() as u64).collect()));
        prop_assert_eq!(stats.source_median_words, oracle_median(source.iter().map(|t| t.len() as u64).collect()));
        prop_assert_eq!(stats.median_chars, oracle_median(pairs.iter().map(|(_, h, _)| h.chars().count() as u64).collect()));
        prop_assert_eq!(stats.source_median_chars, oracle_median(pairs.iter().map(|(e, _, _)| e.chars().count() as u64).collect()));
        prop_assert_eq!(stats.unique_target_words, target.iter().flatten().collect::<HashSet<_>>().len() as u64);
        prop_assert_eq!(stats.unique_source_words, source.iter().flatten().collect::<HashSet<_>>().len() as u64);

        if n == 0 {
            prop_assert!(stats.approval_distribution.is_empty());
        } else {
            let first = pairs.iter().filter(|p| p.2 == 1).count() as f64 / n as f64;
            let second = pairs.iter().filter(|p| p.2 == 2).count() as f64 / n as f64;
            let rest = pairs.iter().filter(|p| p.2 >= 3).count() as f64 / n as f64;
            prop_assert_eq!(stats.approval_distribution[&ApprovalBucket::First], first);
            prop_assert_eq!(stats.approval_distribution[&ApprovalBucket::Second], second);
            prop_assert_eq!(stats.approval_distribution[&ApprovalBucket::ThirdOrLater], rest);
            let total: f64 = stats.approval_distribution.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sus_score_matches_formula(responses in prop::array::uniform10(1u8..=5)) {
        let score = sus_score(&responses).unwrap();
        let mut raw = 0i32;
        for (i, r) in responses.iter().enumerate() {
            raw += if i % 2 == 0 { *r as i32 - 1 } else { 5 - *r as i32 };
        }
        prop_assert_eq!(score, raw as f64 * 2.5);
        prop_assert!((0.0..=100.0).contains(&score));
    }
}

#[derive(Debug, Clone)]
enum LedgerOp {
    Contribute(u8, u64),
    Accrue(u8, u16, bool),
    Disburse(u8, u64),
}

fn ledger_op() -> impl Strategy<Value = LedgerOp> {
    prop_oneof![
        (0u8..4, 0u64..500).prop_map(|(m, a)| LedgerOp::Contribute(m, a)),
        (0u8..5, 0u16..300, any::<bool>()).prop_map(|(t, s, ok)| LedgerOp::Accrue(t, s, ok)),
        (0u8..5, 0u64..60).prop_map(|(t, a)| LedgerOp::Disburse(t, a)),
    ]
}

/// Plain signed arithmetic over the same operations.
#[derive(Default)]
struct Model {
    pool: i64,
    owed: BTreeMap<u8, i64>,
    accrued: HashSet<u16>,
}

impl Model {
    /// Returns whether the operation should be accepted, updating state if so.
    fn apply(&mut self, op: &LedgerOp) -> bool {
        match *op {
            LedgerOp::Contribute(_, a) => {
                if a == 0 {
                    return false;
                }
                self.pool += a as i64;
            }
            LedgerOp::Accrue(t, s, approved) => {
                if !approved || self.accrued.contains(&s) {
                    return false;
                }
                self.accrued.insert(s);
                *self.owed.entry(t).or_default() += 10;
            }
            LedgerOp::Disburse(t, a) => {
                let owed = self.owed.get(&t).copied().unwrap_or(0);
                if a == 0 || a as i64 > owed || a as i64 > self.pool {
                    return false;
                }
                self.pool -= a as i64;
                self.owed.insert(t, owed - a as i64);
            }
        }
        true
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledger_tracks_reference_model(ops in prop::collection::vec(ledger_op(), 1..400)) {
        let mut ledger = Ledger::new();
        let mut model = Model::default();
        let now = Timestamp::from_millis(0);
        for op in &ops {
            let result = match *op {
                LedgerOp::Contribute(m, a) => ledger.contribute(&UserId::new(format!("m{m}")), a, now),
                LedgerOp::Accrue(t, s, approved) => {
                    let status = if approved { SentenceStatus::Approved } else { SentenceStatus::AwaitingReview };
                    ledger.accrue_for_approval(&UserId::new(format!("t{t}")), &SentenceId::new(format!("s{s}")), status, 10, now)
                }
                LedgerOp::Disburse(t, a) => ledger.disburse(&UserId::new(format!("t{t}")), a, now),
            };
            let expected = model.apply(op);
            prop_assert_eq!(result.is_ok(), expected, "{:?} gave {:?}", op, result);
            if let Err(e) = &result {
                let known = matches!(
                    e,
                    LedgerError::NonPositiveAmount
                        | LedgerError::DuplicateAccrual(_)
                        | LedgerError::SentenceNotApproved(_)
                        | LedgerError::InsufficientPool { .. }
                        | LedgerError::ExceedsOwed { .. }
                );
                prop_assert!(known);
            }
            let b = ledger.balances();
            prop_assert_eq!(b.pool_minor as i64, model.pool);
            for (t, owed) in &model.owed {
                prop_assert_eq!(b.owed(&UserId::new(format!("t{t}"))) as i64, *owed);
            }
            prop_assert!(b.is_conserved());
        }
        prop_assert_eq!(&Balances::fold(ledger.entries()).unwrap(), ledger.balances());
        let replayed = Ledger::replay(ledger.entries().to_vec()).unwrap();
        prop_assert_eq!(replayed.balances(), ledger.balances());
    }
}

#[derive(Debug, Clone)]
enum Step {
    Claim(usize),
    Submit(usize),
    Approve(usize),
    Flag(usize),
    Release(usize),
    Tick(u8),
    Expire,
    Export,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        4 => (0usize..3).prop_map(Step::Claim),
        4 => (0usize..3).prop_map(Step::Submit),
        2 => (0usize..2).prop_map(Step::Approve),
        2 => (0usize..2).prop_map(Step::Flag),
        1 => (0usize..3).prop_map(Step::Release),
        2 => (0u8..40).prop_map(Step::Tick),
        1 => Just(Step::Expire),
        1 => Just(Step::Export),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_workflows_keep_invariants(steps in prop::collection::vec(step(), 1..120)) {
        let fx = Fixture::new(3, 2);
        fx.import("b", &["one", "two", "three", "four", "five"]);
        let mut exported: HashSet<SentenceId> = HashSet::new();
        for step in &steps {
            let p = &fx.platform;
            match *step {
                Step::Claim(t) => { let _ = p.claim_next(&fx.translators[t], 20); }
                Step::Submit(t) => {
                    let mine = p.store().query::<corpusforge_core::domain::Sentence>(
                        |s| s.claim.as_ref().is_some_and(|c| c.translator_id == fx.translators[t].id),
                        corpusforge_core::store::Page::all(),
                    );
                    if let Some(s) = mine.first() {
                        let _ = p.submit_translation(&fx.translators[t], &s.payload.id, "hula text", None);
                    }
                }
                Step::Approve(r) | Step::Flag(r) => {
                    let pending = p.store().query::<corpusforge_core::domain::Translation>(
                        |t| t.status == corpusforge_core::domain::TranslationStatus::Submitted,
                        corpusforge_core::store::Page::all(),
                    );
                    if let Some(t) = pending.first() {
                        let decision = if matches!(step, Step::Approve(_)) { Decision::Approve } else { Decision::Flag };
                        p.review_translation(&fx.reviewers[r], &t.payload.id, decision, "redo").unwrap();
                    }
                }
                Step::Release(t) => {
                    let mine = p.store().query::<corpusforge_core::domain::Sentence>(
                        |s| s.claim.as_ref().is_some_and(|c| c.translator_id == fx.translators[t].id),
                        corpusforge_core::store::Page::all(),
                    );
                    if let Some(s) = mine.first() {
                        let _ = p.release_claim(&fx.translators[t], &s.payload.id);
                    }
                }
                Step::Tick(s) => { fx.clock.advance_seconds(s as u64); }
                Step::Expire => { p.expire_leases(p.now()).unwrap(); }
                Step::Export => {
                    p.export_approved(&fx.admin, true).unwrap();
                    for s in p.store().query::<corpusforge_core::domain::Sentence>(
                        |s| s.status == SentenceStatus::Exported,
                        corpusforge_core::store::Page::all(),
                    ) {
                        exported.insert(s.payload.id);
                    }
                }
            }
            let snap = p.store().snapshot();
            let violations = invariants::check(&snap);
            prop_assert!(violations.is_empty(), "after {:?}: {:?}", step, violations);
            for id in &exported {
                let s = snap.get::<corpusforge_core::domain::Sentence>(id.as_str()).unwrap();
                prop_assert_eq!(s.payload.status, SentenceStatus::Exported);
            }
        }
        // Approved sentences accrue exactly once each.
        let snap = fx.platform.store().snapshot();
        let done = snap
            .iter::<corpusforge_core::domain::Sentence>()
            .filter(|s| matches!(s.payload.status, SentenceStatus::Approved | SentenceStatus::Exported))
            .count() as u64;
        prop_assert_eq!(snap.ledger().balances().accrued_total_minor, done * 10);
    }
}
