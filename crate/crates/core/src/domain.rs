//! Domain records, lifecycle enums and the pure transition rules.
//!
//! Two lifecycles are modelled here. A [`Sentence`] moves along
//! `Available -> Claimed -> AwaitingReview -> Approved -> Exported`, with a
//! revision loop through `NeedsRevision` whenever a reviewer flags the
//! submitted translation. A [`Translation`] is decided exactly once: it is
//! either approved or flagged, and a revision is always a new record.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                $name(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                $name(id)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(SentenceId);
string_id!(TranslationId);
string_id!(ReviewId);
string_id!(UserId);
string_id!(AttachmentId);

/// Identifiers double as file names in the on-disk store, so they are kept
/// to a conservative alphabet.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    Translator,
    Reviewer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Translator => "translator",
            Role::Reviewer => "reviewer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "admin" => Ok(Role::Admin),
            "translator" => Ok(Role::Translator),
            "reviewer" => Ok(Role::Reviewer),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceStatus {
    Available,
    Claimed,
    AwaitingReview,
    NeedsRevision,
    Approved,
    Exported,
}

impl SentenceStatus {
    pub const ALL: [SentenceStatus; 6] = [
        SentenceStatus::Available,
        SentenceStatus::Claimed,
        SentenceStatus::AwaitingReview,
        SentenceStatus::NeedsRevision,
        SentenceStatus::Approved,
        SentenceStatus::Exported,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentenceStatus::Available => "available",
            SentenceStatus::Claimed => "claimed",
            SentenceStatus::AwaitingReview => "awaiting_review",
            SentenceStatus::NeedsRevision => "needs_revision",
            SentenceStatus::Approved => "approved",
            SentenceStatus::Exported => "exported",
        }
    }

    pub fn is_terminal(self) -> bool {
        self == SentenceStatus::Exported
    }

    /// Statuses a translator may claim from.
    pub fn is_claimable(self) -> bool {
        matches!(self, SentenceStatus::Available | SentenceStatus::NeedsRevision)
    }
}

impl fmt::Display for SentenceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a sentence may move from `from` to `to`.
///
/// A claim that lapses or is released returns the sentence to the status it
/// was claimed from, so both `Claimed -> Available` and
/// `Claimed -> NeedsRevision` are legal.
pub fn legal_sentence_transition(from: SentenceStatus, to: SentenceStatus) -> bool {
    use SentenceStatus::*;
    matches!(
        (from, to),
        (Available, Claimed)
            | (Claimed, AwaitingReview)
            | (Claimed, Available)
            | (Claimed, NeedsRevision)
            | (AwaitingReview, Approved)
            | (AwaitingReview, NeedsRevision)
            | (NeedsRevision, Claimed)
            | (Approved, Exported)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationStatus {
    Submitted,
    Approved,
    Flagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Flag,
}

impl std::str::FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "approve" => Ok(Decision::Approve),
            "flag" => Ok(Decision::Flag),
            other => Err(format!("unknown decision {other:?}")),
        }
    }
}

/// A live assignment of a sentence to one translator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub translator_id: UserId,
    pub lease_expiry: Timestamp,
    /// Status the sentence returns to if the claim lapses.
    pub prior_status: SentenceStatus,
}

impl Claim {
    /// A lease is live up to and including its expiry instant.
    pub fn is_live_at(&self, now: Timestamp) -> bool {
        now <= self.lease_expiry
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: SentenceId,
    pub english_text: String,
    pub batch_id: String,
    pub status: SentenceStatus,
    pub claim: Option<Claim>,
    pub attempt_count: u32,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
}

impl Sentence {
    pub fn claim_matches_status(&self) -> bool {
        self.claim.is_some() == (self.status == SentenceStatus::Claimed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub id: TranslationId,
    pub sentence_id: SentenceId,
    pub translator_id: UserId,
    pub hula_text: String,
    pub audio_ref: Option<AttachmentId>,
    pub status: TranslationStatus,
    /// 1-based order of submission for its sentence.
    pub attempt_index: u32,
    pub submitted_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationReview {
    pub id: ReviewId,
    pub translation_id: TranslationId,
    pub reviewer_id: UserId,
    pub decision: Decision,
    pub comment: String,
    pub reviewed_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub display_name: String,
    pub role: Role,
    pub credential_hash: String,
    pub approved_count: u64,
    pub submitted_count: u64,
    /// When the first of this user's translations was approved; the
    /// leaderboard breaks ties on it.
    pub first_approved_at: Option<Timestamp>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioAttachment {
    pub id: AttachmentId,
    pub content_type: String,
    pub byte_length: u64,
    /// Location of the payload relative to the store root.
    pub payload_ref: String,
    pub uploaded_by: UserId,
    pub uploaded_at: Timestamp,
}

/// A sealed import batch; created on first import and grown by later ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub id: String,
    pub imported: u64,
    pub skipped_duplicates: u64,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
}

/// One stored System Usability Scale questionnaire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusResponse {
    pub id: String,
    pub respondent_id: UserId,
    pub responses: [u8; 10],
    pub score: f64,
    pub submitted_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub actor_id: UserId,
    pub action: String,
    pub entity_kind: String,
    pub entity_id: String,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub detail: BTreeMap<String, String>,
}

/// An audit event before the log has sequenced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditDraft {
    pub actor_id: UserId,
    pub action: String,
    pub entity_kind: String,
    pub entity_id: String,
    pub timestamp: Timestamp,
    pub detail: BTreeMap<String, String>,
}

impl AuditDraft {
    pub fn new(
        actor_id: &UserId,
        action: &str,
        entity_kind: &str,
        entity_id: impl fmt::Display,
        timestamp: Timestamp,
    ) -> Self {
        AuditDraft {
            actor_id: actor_id.clone(),
            action: action.to_owned(),
            entity_kind: entity_kind.to_owned(),
            entity_id: entity_id.to_string(),
            timestamp,
            detail: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.detail.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn sequenced(self, seq: u64) -> AuditEvent {
        AuditEvent {
            seq,
            actor_id: self.actor_id,
            action: self.action,
            entity_kind: self.entity_kind,
            entity_id: self.entity_id,
            timestamp: self.timestamp,
            detail: self.detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReviewError {
    #[error("translation {0} has already been reviewed")]
    AlreadyReviewed(TranslationId),
    #[error("a flag must carry a comment that guides the revision")]
    EmptyFlagComment,
    #[error("reviewers may not review their own translations")]
    SelfReview,
}

/// Checks a review against the translation it decides.
pub fn validate_review(
    translation: &Translation,
    review: TranslationReview,
) -> Result<TranslationReview, ReviewError> {
    if translation.status != TranslationStatus::Submitted {
        return Err(ReviewError::AlreadyReviewed(translation.id.clone()));
    }
    if review.reviewer_id == translation.translator_id {
        return Err(ReviewError::SelfReview);
    }
    if review.decision == Decision::Flag && review.comment.trim().is_empty() {
        return Err(ReviewError::EmptyFlagComment);
    }
    Ok(review)
}
