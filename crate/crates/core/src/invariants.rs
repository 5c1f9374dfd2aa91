//! Whole-state consistency checks.
//!
//! [`check`] walks one snapshot and reports every rule it finds broken. The
//! simulator runs it as it goes and tests run it after scripted scenarios.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::domain::{
    AudioAttachment, Batch, Decision, Sentence, SentenceStatus, Translation, TranslationReview,
    TranslationStatus, User,
};
use crate::ledger::{Balances, EntryKind};
use crate::store::Snapshot;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn fail(&mut self, rule: &'static str, detail: impl Into<String>) {
        self.0.push(Violation {
            rule,
            detail: detail.into(),
        });
    }
}

pub fn check(snap: &Snapshot<'_>) -> Vec<Violation> {
    let mut report = Report(Vec::new());

    let mut translations: HashMap<&str, Vec<&Translation>> = HashMap::new();
    for t in snap.iter::<Translation>() {
        translations
            .entry(t.payload.sentence_id.as_str())
            .or_default()
            .push(&t.payload);
    }
    let mut reviews: HashMap<&str, Vec<&TranslationReview>> = HashMap::new();
    for r in snap.iter::<TranslationReview>() {
        reviews
            .entry(r.payload.translation_id.as_str())
            .or_default()
            .push(&r.payload);
    }

    for s in snap.iter::<Sentence>() {
        check_sentence(&mut report, &s.payload, translations.get(s.payload.id.as_str()));
    }

    for t in snap.iter::<Translation>() {
        let t = &t.payload;
        if snap.get::<Sentence>(t.sentence_id.as_str()).is_none() {
            report.fail("translation.sentence", format!("{} references missing {}", t.id, t.sentence_id));
        }
        if let Some(audio) = &t.audio_ref {
            if snap.get::<AudioAttachment>(audio.as_str()).is_none() {
                report.fail("translation.audio", format!("{} references missing {audio}", t.id));
            }
        }
        let decided = reviews.get(t.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        match (t.status, decided) {
            (TranslationStatus::Submitted, []) => {}
            (TranslationStatus::Approved, [r]) if r.decision == Decision::Approve => {}
            (TranslationStatus::Flagged, [r]) if r.decision == Decision::Flag => {}
            (status, rs) => report.fail(
                "review.unique",
                format!("{} is {status:?} with {} review(s)", t.id, rs.len()),
            ),
        }
        for r in decided {
            if r.reviewer_id == t.translator_id {
                report.fail("review.self", format!("{} reviewed by its author", t.id));
            }
            if r.decision == Decision::Flag && r.comment.trim().is_empty() {
                report.fail("review.flag_comment", format!("{} flagged without comment", t.id));
            }
        }
    }

    for u in snap.iter::<User>() {
        if u.payload.approved_count > u.payload.submitted_count {
            report.fail(
                "user.counts",
                format!(
                    "{} approved {} > submitted {}",
                    u.payload.id, u.payload.approved_count, u.payload.submitted_count
                ),
            );
        }
    }

    for a in snap.iter::<AudioAttachment>() {
        if a.payload.byte_length == 0 {
            report.fail("audio.length", format!("{} is empty", a.payload.id));
        }
    }

    let imported: u64 = snap.iter::<Batch>().map(|b| b.payload.imported).sum();
    if imported != snap.count::<Sentence>() as u64 {
        report.fail(
            "sentence.conservation",
            format!("{imported} imported but {} stored", snap.count::<Sentence>()),
        );
    }

    check_ledger(&mut report, snap);

    for (i, e) in snap.audit().iter().enumerate() {
        if e.seq != i as u64 + 1 {
            report.fail("audit.seq", format!("position {} holds seq {}", i + 1, e.seq));
            break;
        }
    }

    report.0
}

fn check_sentence(report: &mut Report, s: &Sentence, history: Option<&Vec<&Translation>>) {
    if !s.claim_matches_status() {
        report.fail("sentence.claim", format!("{} is {} with claim {:?}", s.id, s.status, s.claim));
    }
    if let Some(claim) = &s.claim {
        if !claim.prior_status.is_claimable() {
            report.fail("sentence.claim", format!("{} claimed from {}", s.id, claim.prior_status));
        }
    }
    let mut history: Vec<&Translation> = history.cloned().unwrap_or_default();
    history.sort_by_key(|t| t.attempt_index);
    if history.len() as u32 != s.attempt_count {
        report.fail(
            "sentence.attempts",
            format!("{} counts {} attempts, has {}", s.id, s.attempt_count, history.len()),
        );
    }
    for (i, t) in history.iter().enumerate() {
        if t.attempt_index != i as u32 + 1 {
            report.fail("translation.contiguous", format!("{} attempt indices not 1..n", s.id));
            break;
        }
    }
    let approved: Vec<_> = history
        .iter()
        .filter(|t| t.status == TranslationStatus::Approved)
        .collect();
    let done = matches!(s.status, SentenceStatus::Approved | SentenceStatus::Exported);
    match (done, approved.as_slice()) {
        (true, [t]) if s.attempt_count >= t.attempt_index => {}
        (false, []) => {}
        _ => report.fail(
            "sentence.approved",
            format!("{} is {} with {} approved translation(s)", s.id, s.status, approved.len()),
        ),
    }
    let latest = history.last().map(|t| t.status);
    let consistent = match s.status {
        SentenceStatus::Available => history.is_empty(),
        SentenceStatus::AwaitingReview => latest == Some(TranslationStatus::Submitted),
        SentenceStatus::NeedsRevision => latest == Some(TranslationStatus::Flagged),
        SentenceStatus::Approved | SentenceStatus::Exported => {
            latest == Some(TranslationStatus::Approved)
        }
        SentenceStatus::Claimed => {
            latest.is_none() || latest == Some(TranslationStatus::Flagged)
        }
    };
    if !consistent {
        report.fail(
            "sentence.lifecycle",
            format!("{} is {} but latest translation is {latest:?}", s.id, s.status),
        );
    }
    if history
        .iter()
        .rev()
        .skip(1)
        .any(|t| t.status != TranslationStatus::Flagged)
    {
        report.fail("translation.revision", format!("{} has an undecided earlier attempt", s.id));
    }
}

fn check_ledger(report: &mut Report, snap: &Snapshot<'_>) {
    let ledger = snap.ledger();
    match Balances::fold(ledger.entries()) {
        Ok(folded) if &folded == ledger.balances() => {}
        Ok(_) => report.fail("ledger.replay", "folded balances differ from running balances"),
        Err(e) => report.fail("ledger.replay", e.to_string()),
    }
    if !ledger.balances().is_conserved() {
        report.fail("ledger.conservation", format!("{:?}", ledger.balances()));
    }
    let mut seen = HashSet::new();
    for (i, e) in ledger.entries().iter().enumerate() {
        if e.seq != i as u64 + 1 {
            report.fail("ledger.seq", format!("position {} holds seq {}", i + 1, e.seq));
        }
        if e.kind != EntryKind::Accrual {
            continue;
        }
        let Some(sentence) = &e.sentence_ref else {
            report.fail("ledger.accrual_ref", format!("accrual {} has no sentence", e.seq));
            continue;
        };
        if !seen.insert(sentence) {
            report.fail("ledger.accrual_unique", format!("{sentence} accrued twice"));
        }
        let approved = snap.get::<Sentence>(sentence.as_str()).is_some_and(|s| {
            matches!(
                s.payload.status,
                SentenceStatus::Approved | SentenceStatus::Exported
            )
        });
        if !approved {
            report.fail("ledger.accrual_ref", format!("{sentence} accrued but not approved"));
        }
    }
}
