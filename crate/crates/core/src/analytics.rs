//! Corpus statistics, batch progress, the leaderboard and SUS scoring.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::clock::Timestamp;
use crate::domain::{
    Batch, Role, Sentence, SentenceStatus, SusResponse, Translation, TranslationStatus, User,
    UserId,
};
use crate::store::Snapshot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("unknown batch {0:?}")]
    UnknownBatch(String),
    #[error(transparent)]
    Sus(#[from] SusError),
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Splits text into lowercase word tokens.
///
/// Tokens are whitespace-separated runs with leading and trailing
/// punctuation removed. Punctuation inside a token survives, so glottal
/// stop apostrophes (`vula'a`, `vulaʼa`) stay part of the word.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|raw| raw.trim_matches(is_punctuation))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Lower median: the element at index `(n - 1) / 2` of the sorted values.
pub fn lower_median(values: &mut [u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable(mid).1
}

/// How many submissions a sentence needed before approval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ApprovalBucket {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "3+")]
    ThirdOrLater,
}

impl ApprovalBucket {
    pub fn for_attempts(attempts: u32) -> Self {
        match attempts {
            0 | 1 => ApprovalBucket::First,
            2 => ApprovalBucket::Second,
            _ => ApprovalBucket::ThirdOrLater,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ApprovalBucket::First => "1",
            ApprovalBucket::Second => "2",
            ApprovalBucket::ThirdOrLater => "3+",
        }
    }
}

/// Corpus-level metrics. Word medians and unique counts use the target
/// (Hula) side; the `source_*` medians are reported alongside.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: u64,
    pub unique_source_words: u64,
    pub unique_target_words: u64,
    pub median_words: u64,
    pub median_chars: u64,
    pub source_median_words: u64,
    pub source_median_chars: u64,
    pub approval_counts: BTreeMap<ApprovalBucket, u64>,
    /// Fractions per bucket; empty when there are no pairs.
    pub approval_distribution: BTreeMap<ApprovalBucket, f64>,
}

/// Computes corpus metrics over `(english, hula, attempts)` pairs.
pub fn corpus_stats<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str, u32)>) -> CorpusStats {
    let mut source_vocab: HashSet<String> = HashSet::new();
    let mut target_vocab: HashSet<String> = HashSet::new();
    let mut target_words = Vec::new();
    let mut target_chars = Vec::new();
    let mut source_words = Vec::new();
    let mut source_chars = Vec::new();
    let mut counts: BTreeMap<ApprovalBucket, u64> = BTreeMap::new();

    for (english, hula, attempts) in pairs {
        let source_tokens = tokenize(english);
        let target_tokens = tokenize(hula);
        source_words.push(source_tokens.len() as u64);
        target_words.push(target_tokens.len() as u64);
        source_chars.push(english.chars().count() as u64);
        target_chars.push(hula.chars().count() as u64);
        source_vocab.extend(source_tokens);
        target_vocab.extend(target_tokens);
        *counts.entry(ApprovalBucket::for_attempts(attempts)).or_default() += 1;
    }

    let pair_count = target_words.len() as u64;
    let approval_distribution = if pair_count == 0 {
        BTreeMap::new()
    } else {
        [
            ApprovalBucket::First,
            ApprovalBucket::Second,
            ApprovalBucket::ThirdOrLater,
        ]
        .into_iter()
        .map(|b| {
            let n = counts.get(&b).copied().unwrap_or(0);
            (b, n as f64 / pair_count as f64)
        })
        .collect()
    };
    if pair_count > 0 {
        for b in [
            ApprovalBucket::First,
            ApprovalBucket::Second,
            ApprovalBucket::ThirdOrLater,
        ] {
            counts.entry(b).or_insert(0);
        }
    }

    CorpusStats {
        pair_count,
        unique_source_words: source_vocab.len() as u64,
        unique_target_words: target_vocab.len() as u64,
        median_words: lower_median(&mut target_words),
        median_chars: lower_median(&mut target_chars),
        source_median_words: lower_median(&mut source_words),
        source_median_chars: lower_median(&mut source_chars),
        approval_counts: counts,
        approval_distribution,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub translator_id: UserId,
    pub display_name: String,
    pub approved_count: u64,
    pub submitted_count: u64,
    pub rank: u32,
}

/// Ranks translators by approvals, then by who was approved first, then by
/// id. Every row gets a distinct rank.
pub fn leaderboard<'a>(
    users: impl IntoIterator<Item = &'a User>,
    limit: NonZeroUsize,
) -> Vec<LeaderboardRow> {
    let mut translators: Vec<&User> = users
        .into_iter()
        .filter(|u| u.role == Role::Translator)
        .collect();
    translators.sort_by(|a, b| {
        b.approved_count
            .cmp(&a.approved_count)
            .then_with(|| first_approval_key(a).cmp(&first_approval_key(b)))
            .then_with(|| a.id.cmp(&b.id))
    });
    translators
        .into_iter()
        .take(limit.get())
        .enumerate()
        .map(|(i, u)| LeaderboardRow {
            translator_id: u.id.clone(),
            display_name: u.display_name.clone(),
            approved_count: u.approved_count,
            submitted_count: u.submitted_count,
            rank: i as u32 + 1,
        })
        .collect()
}

// Users without an approval sort after everyone who has one.
fn first_approval_key(user: &User) -> (bool, Timestamp) {
    match user.first_approved_at {
        Some(ts) => (false, ts),
        None => (true, Timestamp::EPOCH),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SusError {
    #[error("a SUS questionnaire has 10 items, got {0}")]
    BadLength(usize),
    #[error("item {item} has response {value}, expected 1..=5")]
    OutOfRange { item: usize, value: u8 },
}

/// System Usability Scale score in `0.0..=100.0`.
///
/// Odd-numbered items are positively worded and contribute `response - 1`;
/// even-numbered items contribute `5 - response`. The sum is scaled by 2.5.
pub fn sus_score(responses: &[u8]) -> Result<f64, SusError> {
    if responses.len() != 10 {
        return Err(SusError::BadLength(responses.len()));
    }
    let mut total = 0u32;
    for (i, &value) in responses.iter().enumerate() {
        if !(1..=5).contains(&value) {
            return Err(SusError::OutOfRange { item: i + 1, value });
        }
        // i is 0-based, so even i is an odd-numbered item.
        total += if i % 2 == 0 { value as u32 - 1 } else { 5 - value as u32 };
    }
    Ok(total as f64 * 2.5)
}

/// Mean score over respondents; `None` for an empty set.
pub fn sus_mean<R: AsRef<[u8]>>(respondents: &[R]) -> Result<Option<f64>, SusError> {
    if respondents.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for r in respondents {
        sum += sus_score(r.as_ref())?;
    }
    Ok(Some(sum / respondents.len() as f64))
}

pub type StatusCounts = BTreeMap<SentenceStatus, u64>;

pub fn empty_status_counts() -> StatusCounts {
    SentenceStatus::ALL.into_iter().map(|s| (s, 0)).collect()
}

/// Sentence counts per status for one import batch.
pub fn progress(snapshot: &Snapshot<'_>, batch_id: &str) -> Result<StatusCounts, AnalyticsError> {
    if snapshot.get::<Batch>(batch_id).is_none() {
        return Err(AnalyticsError::UnknownBatch(batch_id.to_owned()));
    }
    let mut counts = empty_status_counts();
    for s in snapshot.iter::<Sentence>() {
        if s.payload.batch_id == batch_id {
            *counts.entry(s.payload.status).or_default() += 1;
        }
    }
    Ok(counts)
}

/// Per-batch status counts for every known batch.
pub fn progress_by_batch(snapshot: &Snapshot<'_>) -> BTreeMap<String, StatusCounts> {
    let mut batches: BTreeMap<String, StatusCounts> = snapshot
        .iter::<Batch>()
        .map(|b| (b.payload.id.clone(), empty_status_counts()))
        .collect();
    for s in snapshot.iter::<Sentence>() {
        let counts = batches
            .entry(s.payload.batch_id.clone())
            .or_insert_with(empty_status_counts);
        *counts.entry(s.payload.status).or_default() += 1;
    }
    batches
}

/// An approved sentence with the translation that was accepted for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ApprovedPair {
    pub sentence: Sentence,
    pub translation: Translation,
}

/// Every approved or exported sentence paired with its approved
/// translation, in sentence id order.
pub fn approved_pairs(snapshot: &Snapshot<'_>) -> Vec<ApprovedPair> {
    let mut approved: HashMap<&str, &Translation> = HashMap::new();
    for t in snapshot.iter::<Translation>() {
        if t.payload.status == TranslationStatus::Approved {
            approved.insert(t.payload.sentence_id.as_str(), &t.payload);
        }
    }
    snapshot
        .iter::<Sentence>()
        .filter(|s| {
            matches!(
                s.payload.status,
                SentenceStatus::Approved | SentenceStatus::Exported
            )
        })
        .filter_map(|s| {
            approved.get(s.payload.id.as_str()).map(|t| ApprovedPair {
                sentence: s.payload.clone(),
                translation: (*t).clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusSummary {
    pub respondents: u64,
    pub mean: Option<f64>,
}

/// Everything the stats endpoint and report show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub corpus: CorpusStats,
    pub translators: u64,
    pub reviewers: u64,
    pub batches: BTreeMap<String, StatusCounts>,
    pub sus: SusSummary,
}

pub fn stats_report(snapshot: &Snapshot<'_>) -> StatsReport {
    let pairs = approved_pairs(snapshot);
    let corpus = corpus_stats(pairs.iter().map(|p| {
        (
            p.sentence.english_text.as_str(),
            p.translation.hula_text.as_str(),
            p.translation.attempt_index,
        )
    }));
    let count_role = |role| {
        snapshot
            .iter::<User>()
            .filter(|u| u.payload.role == role)
            .count() as u64
    };
    let sus: Vec<[u8; 10]> = snapshot
        .iter::<SusResponse>()
        .map(|r| r.payload.responses)
        .collect();
    StatsReport {
        corpus,
        translators: count_role(Role::Translator),
        reviewers: count_role(Role::Reviewer),
        batches: progress_by_batch(snapshot),
        sus: SusSummary {
            respondents: sus.len() as u64,
            // Stored responses were validated on the way in.
            mean: sus_mean(&sus).ok().flatten(),
        },
    }
}

fn percent(fraction: Option<&f64>) -> String {
    format!("{:.1}%", fraction.copied().unwrap_or(0.0) * 100.0)
}

/// Renders a stats report as a two-column text table.
pub fn render_stats(report: &StatsReport) -> String {
    let c = &report.corpus;
    let d = &c.approval_distribution;
    let rows = [
        ("Sentence pairs", c.pair_count.to_string()),
        ("Unique English words", c.unique_source_words.to_string()),
        ("Unique Hula words", c.unique_target_words.to_string()),
        (
            "Median sentence length",
            format!("{} words / {} characters", c.median_words, c.median_chars),
        ),
        (
            "Median English length",
            format!(
                "{} words / {} characters",
                c.source_median_words, c.source_median_chars
            ),
        ),
        (
            "Approved after 1 / 2 / 3+ translations",
            format!(
                "{} / {} / {}",
                percent(d.get(&ApprovalBucket::First)),
                percent(d.get(&ApprovalBucket::Second)),
                percent(d.get(&ApprovalBucket::ThirdOrLater))
            ),
        ),
        ("Translators", report.translators.to_string()),
        ("Reviewers", report.reviewers.to_string()),
        (
            "SUS mean",
            match report.sus.mean {
                Some(mean) => format!("{mean:.1} (n={})", report.sus.respondents),
                None => "n/a".to_owned(),
            },
        ),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (key, value) in rows {
        let _ = writeln!(out, "{key:<width$}  {value}");
    }
    if !report.batches.is_empty() {
        let _ = writeln!(out);
        let _ = write!(out, "{:<16}", "batch");
        for status in SentenceStatus::ALL {
            let _ = write!(out, " {:>15}", status.as_str());
        }
        let _ = writeln!(out);
        for (batch, counts) in &report.batches {
            let _ = write!(out, "{batch:<16}");
            for status in SentenceStatus::ALL {
                let _ = write!(out, " {:>15}", counts.get(&status).copied().unwrap_or(0));
            }
            let _ = writeln!(out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(id: &str, approved: u64, first: Option<i64>) -> User {
        User {
            id: id.into(),
            display_name: id.to_uppercase(),
            role: Role::Translator,
            credential_hash: String::new(),
            approved_count: approved,
            submitted_count: approved + 1,
            first_approved_at: first.map(Timestamp::from_millis),
            created_at: Timestamp::EPOCH,
        }
    }

    fn nz(n: usize) -> NonZeroUsize {
        NonZeroUsize::new(n).unwrap()
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ... !! ").is_empty());
    }

    #[test]
    fn tokenize_strips_edge_punctuation() {
        assert_eq!(tokenize("The kettle (ketolo)!"), ["the", "kettle", "ketolo"]);
    }

    #[test]
    fn tokenize_keeps_inner_apostrophes() {
        let tokens = tokenize("Vula'a Vula'a");
        assert_eq!(tokens, ["vula'a", "vula'a"]);
        assert_eq!(tokens.iter().collect::<HashSet<_>>().len(), 1);
        assert_eq!(tokenize("'Vulaʼa'"), ["vulaʼa"]);
    }

    #[test]
    fn empty_corpus() {
        let stats = corpus_stats(std::iter::empty());
        assert_eq!(stats, CorpusStats::default());
        assert!(stats.approval_distribution.is_empty());
    }

    #[test]
    fn odd_count_median() {
        let hula = ["a b", "a b c d e f g h", &"w ".repeat(20)];
        let stats = corpus_stats(hula.iter().map(|h| ("x", *h, 1)));
        assert_eq!(stats.median_words, 8);
    }

    #[test]
    fn even_count_uses_lower_median() {
        assert_eq!(lower_median(&mut [4, 1, 3, 2]), 2);
        assert_eq!(lower_median(&mut []), 0);
    }

    #[test]
    fn approval_buckets() {
        let stats = corpus_stats([("a", "b", 1), ("a", "b", 2), ("a", "b", 3), ("a", "b", 7)]);
        assert_eq!(stats.approval_distribution[&ApprovalBucket::First], 0.25);
        assert_eq!(stats.approval_distribution[&ApprovalBucket::ThirdOrLater], 0.5);
        let json = serde_json::to_string(&stats.approval_distribution).unwrap();
        assert_eq!(json, r#"{"1":0.25,"2":0.25,"3+":0.5}"#);
    }

    #[test]
    fn leaderboard_tie_break() {
        let users = [user("a", 5, Some(300)), user("b", 7, Some(500)), user("c", 5, Some(100))];
        let ids: Vec<_> = leaderboard(&users, nz(10))
            .into_iter()
            .map(|r| (r.translator_id.to_string(), r.rank))
            .collect();
        assert_eq!(
            ids,
            [("b".to_string(), 1), ("c".to_string(), 2), ("a".to_string(), 3)]
        );
    }

    #[test]
    fn leaderboard_limits_and_skips_other_roles() {
        let mut users: Vec<User> = (0..77).map(|i| user(&format!("t{i:02}"), i, Some(i as i64))).collect();
        assert!(leaderboard(&[], nz(10)).is_empty());
        users[0].role = Role::Reviewer;
        let rows = leaderboard(&users, nz(10));
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].translator_id.as_str(), "t76");
        assert!(leaderboard(&users, nz(100)).len() == 76);
    }

    #[test]
    fn sus_reference_vectors() {
        assert_eq!(sus_score(&[5, 1, 5, 1, 5, 1, 5, 1, 5, 1]).unwrap(), 100.0);
        assert_eq!(sus_score(&[3; 10]).unwrap(), 50.0);
        assert_eq!(sus_score(&[4, 2, 4, 2, 4, 2, 4, 2, 4, 2]).unwrap(), 75.0);
        assert_eq!(sus_score(&[1, 5, 1, 5, 1, 5, 1, 5, 1, 5]).unwrap(), 0.0);
    }

    #[test]
    fn sus_rejects_bad_input() {
        assert_eq!(sus_score(&[3; 9]), Err(SusError::BadLength(9)));
        assert_eq!(sus_score(&[3; 11]), Err(SusError::BadLength(11)));
        let mut r = [3u8; 10];
        r[4] = 6;
        assert_eq!(sus_score(&r), Err(SusError::OutOfRange { item: 5, value: 6 }));
        r[4] = 0;
        assert!(sus_score(&r).is_err());
    }

    #[test]
    fn sus_mean_is_arithmetic_mean() {
        let sets = [[3u8; 10], [5, 1, 5, 1, 5, 1, 5, 1, 5, 1]];
        assert_eq!(sus_mean(&sets).unwrap(), Some(75.0));
        assert_eq!(sus_mean::<[u8; 10]>(&[]).unwrap(), None);
    }
}
