//! Seeded end-to-end run of the translation pipeline.
//!
//! The simulator imports synthetic English sentences, lets simulated
//! translators claim and translate them, and has simulated reviewers
//! approve each submission with a probability that depends on how many
//! attempts the sentence has had: `p1` for the first, `p2` for the second,
//! and always from the third on. The community pool is funded up front and
//! translators are paid out at the end.
//!
//! Randomness comes from ChaCha8 seeded with [`SimParams::seed`]. All work
//! happens on one thread in a fixed order against a manual clock, so a seed
//! always yields the same report.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use corpusforge_core::analytics::{self, ApprovalBucket, CorpusStats, LeaderboardRow};
use corpusforge_core::clock::{ManualClock, Timestamp};
use corpusforge_core::domain::{
    Decision, Role, SentenceStatus, Translation, TranslationStatus, User, UserId,
};
use corpusforge_core::invariants::{self, Violation};
use corpusforge_core::ledger::{Balances, Kina};
use corpusforge_core::store::{Page, Store};
use corpusforge_core::workflow::{ImportItem, NewUser, Platform, PlatformConfig, WorkflowError};

const START: Timestamp = Timestamp::from_millis(1_767_225_600_000);
const ROUND_SECONDS: u64 = 60;
const LEASE_SECONDS: u64 = 600;
const BATCH_ID: &str = "sim-1";
const MEMBER: &str = "urban-members";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub sentences: usize,
    pub translators: usize,
    pub reviewers: usize,
    pub p1: f64,
    pub p2: f64,
    /// Chance that a translator walks away from a claim and lets the lease
    /// lapse.
    pub abandon: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            sentences: 2000,
            translators: 77,
            reviewers: 4,
            p1: 0.91,
            p2: 8.0 / 9.0,
            abandon: 0.02,
            seed: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0}")]
    InvalidParams(String),
    #[error("invariant violated after round {round}: {violation}")]
    Invariant { round: u64, violation: Violation },
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub params: SimParams,
    pub rounds: u64,
    pub submissions: u64,
    pub expired_leases: u64,
    pub invariant_checks: u64,
    pub corpus: CorpusStats,
    pub leaderboard: Vec<LeaderboardRow>,
    pub balances: Balances,
    pub audit_events: usize,
}

impl SimReport {
    pub fn distribution(&self, bucket: ApprovalBucket) -> f64 {
        self.corpus
            .approval_distribution
            .get(&bucket)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn render(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "simulation");
        let _ = writeln!(
            out,
            "  sentences {}  translators {}  reviewers {}  p1 {:.4}  p2 {:.4}  abandon {:.4}  seed {}",
            p.sentences, p.translators, p.reviewers, p.p1, p.p2, p.abandon, p.seed
        );
        let _ = writeln!(
            out,
            "  rounds {}  submissions {}  expired leases {}  audit events {}  invariant checks {} (0 violations)",
            self.rounds, self.submissions, self.expired_leases, self.audit_events, self.invariant_checks
        );
        let c = &self.corpus;
        let _ = writeln!(out, "corpus");
        let _ = writeln!(out, "  pairs {}", c.pair_count);
        let _ = writeln!(
            out,
            "  unique words  english {}  hula {}",
            c.unique_source_words, c.unique_target_words
        );
        let _ = writeln!(
            out,
            "  median words  english {}  hula {}",
            c.source_median_words, c.median_words
        );
        let _ = writeln!(
            out,
            "  median chars  english {}  hula {}",
            c.source_median_chars, c.median_chars
        );
        let _ = writeln!(out, "approval attempts");
        for bucket in [
            ApprovalBucket::First,
            ApprovalBucket::Second,
            ApprovalBucket::ThirdOrLater,
        ] {
            let _ = writeln!(
                out,
                "  {:<3} {:>6} {:>7.2}%",
                bucket.label(),
                c.approval_counts.get(&bucket).copied().unwrap_or(0),
                self.distribution(bucket) * 100.0
            );
        }
        let _ = writeln!(out, "leaderboard");
        for row in &self.leaderboard {
            let _ = writeln!(
                out,
                "  {:>2}. {:<8} approved {:>4}  submitted {:>4}",
                row.rank, row.translator_id, row.approved_count, row.submitted_count
            );
        }
        let b = &self.balances;
        let _ = writeln!(out, "ledger");
        let _ = writeln!(out, "  contributed {}", Kina(b.contributed_total_minor));
        let _ = writeln!(out, "  accrued     {}", Kina(b.accrued_total_minor));
        let _ = writeln!(out, "  disbursed   {}", Kina(b.disbursed_total_minor));
        let _ = writeln!(out, "  pool        {}", Kina(b.pool_minor));
        let _ = writeln!(out, "  owed        {}", Kina(b.owed_total_minor()));
        out
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_owned()));
        if self.sentences == 0 || self.translators == 0 || self.reviewers == 0 {
            return bad("sentences, translators and reviewers must all be at least 1");
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2), ("abandon", self.abandon)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.abandon >= 1.0 {
            return bad("abandon must be below 1 or nothing is ever submitted");
        }
        Ok(())
    }
}

const ENGLISH_WORDS: &[&str] = &[
    "the", "a", "my", "our", "old", "small", "big", "red", "village", "garden", "canoe", "house",
    "child", "mother", "father", "fish", "rain", "sun", "road", "market", "church", "school",
    "walks", "sees", "brings", "cooks", "carries", "wants", "sleeps", "sings", "to", "from",
    "near", "under", "today", "tomorrow", "quickly", "again", "with", "water", "fire", "pig",
    "coconut", "yam", "beach", "reef", "story", "song", "teacher", "friend",
];

const HULA_SYLLABLES: &[&str] = &[
    "va", "ka", "la", "ma", "na", "ri", "ge", "ko", "bu", "'a", "ve", "lo", "gu", "hi", "mo",
];

fn english_sentence(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(3..=14);
    let words: Vec<&str> = (0..len)
        .map(|_| *ENGLISH_WORDS.choose(rng).expect("word list is not empty"))
        .collect();
    let mut text = words.join(" ");
    if let Some(first) = text.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    text.push(if rng.random_bool(0.2) { '?' } else { '.' });
    text
}

fn hula_sentence(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(2..=12);
    let words: Vec<String> = (0..len)
        .map(|_| {
            let syllables = rng.random_range(1..=3);
            (0..syllables)
                .map(|_| *HULA_SYLLABLES.choose(rng).expect("syllables are not empty"))
                .collect()
        })
        .collect();
    format!("{}.", words.join(" "))
}

struct Sim {
    platform: Platform,
    clock: Arc<ManualClock>,
    rng: ChaCha8Rng,
    admin: User,
    translators: Vec<UserId>,
    reviewers: Vec<UserId>,
    params: SimParams,
    round: u64,
    checks: u64,
}

impl Sim {
    fn check(&mut self) -> Result<(), SimError> {
        self.checks += 1;
        let violations = invariants::check(&self.platform.store().snapshot());
        match violations.into_iter().next() {
            None => Ok(()),
            Some(violation) => Err(SimError::Invariant {
                round: self.round,
                violation,
            }),
        }
    }

    fn user(&self, id: &UserId) -> Result<User, SimError> {
        Ok(self.platform.user(id)?)
    }
}

/// Runs the whole pipeline and returns the final report.
pub fn run(params: &SimParams) -> Result<SimReport, SimError> {
    params.validate()?;
    let clock = Arc::new(ManualClock::new(START));
    let platform = Platform::new(
        Arc::new(Store::in_memory()),
        clock.clone(),
        PlatformConfig {
            lease_seconds: LEASE_SECONDS,
            ..PlatformConfig::default()
        },
    );
    let provisioner = UserId::new("simulator");
    let add = |id: String, role: Role| -> Result<UserId, SimError> {
        let user = platform.provision_user(
            &provisioner,
            NewUser {
                display_name: id.clone(),
                id: UserId::new(id),
                role,
                secret: "simulated".into(),
            },
        )?;
        Ok(user.id)
    };
    let admin_id = add("admin".into(), Role::Admin)?;
    let translators = (0..params.translators)
        .map(|i| add(format!("tr{i:03}"), Role::Translator))
        .collect::<Result<Vec<_>, _>>()?;
    let reviewers = (0..params.reviewers)
        .map(|i| add(format!("rv{i:02}"), Role::Reviewer))
        .collect::<Result<Vec<_>, _>>()?;
    let admin = platform.user(&admin_id)?;

    let mut sim = Sim {
        platform,
        clock,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        admin,
        translators,
        reviewers,
        params: *params,
        round: 0,
        checks: 0,
    };

    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(params.sentences);
    while items.len() < params.sentences {
        let text = english_sentence(&mut sim.rng);
        if seen.insert(text.clone()) {
            items.push(ImportItem::text(text));
        }
    }
    sim.platform.import_batch(&sim.admin, BATCH_ID, &items)?;
    let rate = sim.platform.config().payout_rate_toea;
    let funding = params.sentences as u64 * rate;
    let first_half = funding / 2;
    sim.platform
        .contribute(&sim.admin, &UserId::new(MEMBER), first_half.max(1))?;
    sim.check()?;

    let total = params.sentences as u64;
    let mut submissions = 0;
    let mut expired = 0;
    let mut topped_up = false;
    loop {
        let done = done_count(&sim.platform);
        if done == total {
            break;
        }
        sim.round += 1;
        sim.clock.advance_seconds(ROUND_SECONDS);
        expired += sim.platform.expire_leases(sim.platform.now())? as u64;

        for i in 0..sim.translators.len() {
            let translator = sim.user(&sim.translators[i])?;
            let Some(sentence) = sim.platform.claim_next(&translator, LEASE_SECONDS)? else {
                break;
            };
            if sim.rng.random_bool(sim.params.abandon) {
                continue;
            }
            let text = hula_sentence(&mut sim.rng);
            sim.platform
                .submit_translation(&translator, &sentence.id, &text, None)?;
            submissions += 1;
        }

        let mut pending = sim.platform.store().query::<Translation>(
            |t| t.status == TranslationStatus::Submitted,
            Page::all(),
        );
        pending.sort_by(|a, b| {
            (a.payload.submitted_at, &a.payload.id).cmp(&(b.payload.submitted_at, &b.payload.id))
        });
        for (k, record) in pending.iter().enumerate() {
            let t = &record.payload;
            let reviewer = sim.user(&sim.reviewers[k % sim.reviewers.len()])?;
            let p = match t.attempt_index {
                1 => sim.params.p1,
                2 => sim.params.p2,
                _ => 1.0,
            };
            let (decision, comment) = if sim.rng.random_bool(p) {
                (Decision::Approve, "")
            } else {
                (Decision::Flag, "please revise the wording")
            };
            sim.platform
                .review_translation(&reviewer, &t.id, decision, comment)?;
        }

        if !topped_up && done_count(&sim.platform) * 2 >= total {
            let rest = funding - first_half;
            if rest > 0 {
                sim.platform
                    .contribute(&sim.admin, &UserId::new(MEMBER), rest)?;
            }
            topped_up = true;
        }
        sim.check()?;
    }

    let balances = sim.platform.balances();
    let mut owed: Vec<(UserId, u64)> = balances
        .owed_minor
        .iter()
        .filter(|(_, v)| **v > 0)
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    owed.sort();
    for (translator, amount) in owed {
        let available = sim.platform.balances().pool_minor;
        let pay = amount.min(available);
        if pay > 0 {
            sim.platform.disburse(&sim.admin, &translator, pay)?;
        }
    }
    sim.check()?;

    let corpus = sim.platform.stats().corpus;
    Ok(SimReport {
        params: *params,
        rounds: sim.round,
        submissions,
        expired_leases: expired,
        invariant_checks: sim.checks,
        corpus,
        leaderboard: sim
            .platform
            .leaderboard(NonZeroUsize::new(10).expect("non-zero")),
        balances: sim.platform.balances(),
        audit_events: sim.platform.store().audit_len(),
    })
}

fn done_count(platform: &Platform) -> u64 {
    let counts = platform
        .progress(BATCH_ID)
        .unwrap_or_else(|_| analytics::empty_status_counts());
    counts
        .iter()
        .filter(|(s, _)| matches!(s, SentenceStatus::Approved | SentenceStatus::Exported))
        .map(|(_, n)| *n)
        .sum()
}
