//! The translation pipeline: import, claim, submit, review, export.
//!
//! Every operation is a read-modify-write against the [`Store`]: read a
//! snapshot, decide, then commit the changed records at the versions that
//! were read. A version conflict means someone else got there first; the
//! operation re-reads and tries again, up to
//! [`PlatformConfig::max_attempts`] times, before surfacing
//! [`WorkflowError::VersionConflict`].
//!
//! Each successful mutating call commits exactly one audit event, in the
//! same batch as the data it describes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::num::NonZeroUsize;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, LeaderboardRow, StatsReport, StatusCounts};
use crate::clock::{Clock, Timestamp};
use crate::credentials;
use crate::domain::{
    is_valid_id, legal_sentence_transition, validate_review, AttachmentId, AudioAttachment,
    AuditDraft, Batch, Claim, Decision, ReviewError, ReviewId, Role, Sentence, SentenceId,
    SentenceStatus, SusResponse, Translation, TranslationId, TranslationReview,
    TranslationStatus, User, UserId,
};
use crate::ledger::{Balances, LedgerDraft, LedgerEntry, LedgerError, DEFAULT_PAYOUT_RATE_TOEA};
use crate::store::{EntityKind, Store, StoreError, WriteBatch};

/// Actor recorded for housekeeping such as lease expiry.
pub const SYSTEM_ACTOR: &str = "system";

pub mod actions {
    pub const IMPORT: &str = "batch.import";
    pub const CLAIM: &str = "task.claim";
    pub const RELEASE: &str = "task.release";
    pub const EXPIRE: &str = "lease.expire";
    pub const SUBMIT: &str = "translation.submit";
    pub const REVIEW: &str = "translation.review";
    pub const EXPORT: &str = "corpus.export";
    pub const USER_ADD: &str = "user.provision";
    pub const CONTRIBUTE: &str = "ledger.contribute";
    pub const DISBURSE: &str = "ledger.disburse";
    pub const SUS: &str = "sus.submit";
    pub const LOGIN: &str = "auth.login";
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("{role} may not {action}")]
    Forbidden { action: &'static str, role: Role },
    #[error("unknown user or wrong secret")]
    InvalidCredential,
    #[error("batch contains no items")]
    EmptyBatch,
    #[error("invalid batch id {0:?}")]
    InvalidBatchId(String),
    #[error("item {index} has no English text")]
    BlankSourceText { index: usize },
    #[error("invalid id {0:?}")]
    InvalidId(String),
    #[error("lease must be at least one second")]
    InvalidLease,
    #[error("you do not hold the claim on sentence {0}")]
    NotClaimant(SentenceId),
    #[error("translation text is blank")]
    BlankTranslation,
    #[error("the claim on sentence {0} has expired")]
    LeaseExpired(SentenceId),
    #[error("audio attachment is empty")]
    EmptyAudio,
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{kind} {id} not found")]
    NotFound { kind: EntityKind, id: String },
    #[error("{kind} {id} already exists")]
    AlreadyExists { kind: EntityKind, id: String },
    #[error("gave up after repeated version conflicts on {kind} {id}")]
    VersionConflict { kind: EntityKind, id: String },
    #[error("illegal sentence transition {from} -> {to} on {id}")]
    IllegalTransition {
        id: SentenceId,
        from: SentenceStatus,
        to: SentenceStatus,
    },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for WorkflowError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::VersionConflict { kind, id, .. } => WorkflowError::VersionConflict { kind, id },
            StoreError::NotFound { kind, id } => WorkflowError::NotFound { kind, id },
            StoreError::DuplicateId { kind, id } => WorkflowError::AlreadyExists { kind, id },
            StoreError::InvalidId(id) => WorkflowError::InvalidId(id),
            StoreError::Ledger(e) => WorkflowError::Ledger(e),
            other => WorkflowError::Store(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformConfig {
    /// Payout per approved sentence, in toea.
    pub payout_rate_toea: u64,
    pub lease_seconds: u64,
    /// Optimistic attempts per operation before a conflict is reported.
    pub max_attempts: u32,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            payout_rate_toea: DEFAULT_PAYOUT_RATE_TOEA,
            lease_seconds: 3600,
            max_attempts: 5,
        }
    }
}

/// One line of an import file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportItem {
    #[serde(alias = "english_text")]
    pub en: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl ImportItem {
    pub fn text(en: impl Into<String>) -> Self {
        ImportItem {
            en: en.into(),
            id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: String,
    pub imported: u64,
    pub skipped_duplicates: u64,
    pub timestamp: Timestamp,
}

/// One line of the corpus export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub english_text: String,
    pub hula_text: String,
    pub audio_ref: Option<AttachmentId>,
    pub translator_id: UserId,
    pub reviewer_id: UserId,
    pub attempts: u32,
    pub approved_at: Timestamp,
}

/// Serializes records one JSON object per line, each line ending in `\n`.
pub fn to_ndjson(records: &[ExportRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("export records serialize"));
        out.push('\n');
    }
    out
}

/// Parses text produced by [`to_ndjson`]. Blank lines are ignored; errors
/// carry the 1-based line number.
pub fn parse_ndjson(text: &str) -> Result<Vec<ExportRecord>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| (i + 1, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioUpload {
    pub content_type: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub sentence_id: SentenceId,
    pub english_text: String,
    pub translation: Translation,
    /// Comments from earlier flags on this sentence, oldest first.
    pub prior_comments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum TaskList {
    Translator {
        claimed: Vec<Sentence>,
        available: u64,
        needs_revision: u64,
    },
    Reviewer {
        items: Vec<ReviewItem>,
    },
    Admin {
        batches: BTreeMap<String, StatusCounts>,
    },
}

#[derive(Debug, Clone)]
pub struct NewUser {
    pub id: UserId,
    pub display_name: String,
    pub role: Role,
    pub secret: String,
}

const CLAIM_CANDIDATES: usize = 32;

pub struct Platform {
    store: Arc<Store>,
    clock: Arc<dyn Clock>,
    config: PlatformConfig,
}

impl Platform {
    pub fn new(store: Arc<Store>, clock: Arc<dyn Clock>, config: PlatformConfig) -> Self {
        Platform {
            store,
            clock,
            config,
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn require(actor: &User, role: Role, action: &'static str) -> Result<(), WorkflowError> {
        if actor.role == role {
            Ok(())
        } else {
            Err(WorkflowError::Forbidden {
                action,
                role: actor.role,
            })
        }
    }

    fn retry<T>(
        &self,
        mut op: impl FnMut() -> Result<T, WorkflowError>,
    ) -> Result<T, WorkflowError> {
        let mut attempt = 1;
        loop {
            match op() {
                Err(WorkflowError::VersionConflict { .. }) if attempt < self.config.max_attempts => {
                    attempt += 1;
                }
                result => return result,
            }
        }
    }

    pub fn user(&self, id: &UserId) -> Result<User, WorkflowError> {
        Ok(self.store.get::<User>(id.as_str())?.payload)
    }

    /// Registers a user. Provisioning happens out of band (the admin CLI),
    /// so there is no acting user to check.
    pub fn provision_user(&self, provisioner: &UserId, new: NewUser) -> Result<User, WorkflowError> {
        if !is_valid_id(new.id.as_str()) || new.id.as_str() == SYSTEM_ACTOR {
            return Err(WorkflowError::InvalidId(new.id.to_string()));
        }
        let now = self.now();
        let user = User {
            id: new.id.clone(),
            display_name: new.display_name,
            role: new.role,
            credential_hash: credentials::hash_secret(&new.secret),
            approved_count: 0,
            submitted_count: 0,
            first_approved_at: None,
            created_at: now,
        };
        let mut batch = WriteBatch::new();
        batch.put(user.clone(), None).audit(
            AuditDraft::new(provisioner, actions::USER_ADD, "user", &user.id, now)
                .with("role", user.role),
        );
        self.store.commit(batch, now)?;
        Ok(user)
    }

    /// Returns the user if `secret` matches their stored credential.
    pub fn verify_credential(&self, id: &UserId, secret: &str) -> Option<User> {
        let user = self.store.get::<User>(id.as_str()).ok()?.payload;
        credentials::verify_secret(&user.credential_hash, secret).then_some(user)
    }

    /// Checks a credential and records the login. Failed attempts leave no
    /// audit event.
    pub fn login(&self, id: &UserId, secret: &str) -> Result<User, WorkflowError> {
        let user = self
            .verify_credential(id, secret)
            .ok_or(WorkflowError::InvalidCredential)?;
        let now = self.now();
        self.store
            .append_audit(AuditDraft::new(&user.id, actions::LOGIN, "user", &user.id, now))?;
        Ok(user)
    }

    /// Creates one `Available` sentence per distinct item. Items whose
    /// trimmed text matches a stored sentence (in any batch) or an earlier
    /// item are skipped. Text is stored exactly as given.
    pub fn import_batch(
        &self,
        actor: &User,
        batch_id: &str,
        items: &[ImportItem],
    ) -> Result<BatchSummary, WorkflowError> {
        Self::require(actor, Role::Admin, "import batches")?;
        if !is_valid_id(batch_id) {
            return Err(WorkflowError::InvalidBatchId(batch_id.to_owned()));
        }
        if items.is_empty() {
            return Err(WorkflowError::EmptyBatch);
        }
        for (index, item) in items.iter().enumerate() {
            if item.en.trim().is_empty() {
                return Err(WorkflowError::BlankSourceText { index: index + 1 });
            }
            if let Some(id) = &item.id {
                if !is_valid_id(id) {
                    return Err(WorkflowError::InvalidId(id.clone()));
                }
            }
        }

        self.retry(|| {
            let now = self.now();
            let mut batch = WriteBatch::new();
            let mut imported = 0u64;
            let mut skipped = 0u64;
            let existing_batch;
            {
                let snap = self.store.snapshot();
                let mut seen: HashSet<String> = snap
                    .iter::<Sentence>()
                    .map(|s| s.payload.english_text.trim().to_owned())
                    .collect();
                let mut new_ids: HashSet<String> = HashSet::new();
                for item in items {
                    let key = item.en.trim();
                    if !seen.insert(key.to_owned()) {
                        skipped += 1;
                        continue;
                    }
                    let id = match &item.id {
                        Some(id) => {
                            if snap.get::<Sentence>(id).is_some() || !new_ids.insert(id.clone()) {
                                return Err(WorkflowError::AlreadyExists {
                                    kind: EntityKind::Sentence,
                                    id: id.clone(),
                                });
                            }
                            SentenceId::new(id.clone())
                        }
                        None => SentenceId::new(self.store.next_id("s")),
                    };
                    batch.put(
                        Sentence {
                            id,
                            english_text: item.en.clone(),
                            batch_id: batch_id.to_owned(),
                            status: SentenceStatus::Available,
                            claim: None,
                            attempt_count: 0,
                            created_at: now,
                            updated_at: now,
                        },
                        None,
                    );
                    imported += 1;
                }
                existing_batch = snap.get::<Batch>(batch_id).cloned();
            }
            match existing_batch {
                Some(b) => {
                    let mut rec = b.payload;
                    rec.imported += imported;
                    rec.skipped_duplicates += skipped;
                    rec.updated_at = now;
                    batch.put(rec, Some(b.version));
                }
                None => {
                    let rec = Batch {
                        id: batch_id.to_owned(),
                        imported,
                        skipped_duplicates: skipped,
                        created_at: now,
                        updated_at: now,
                    };
                    batch.put(rec, None);
                }
            }
            batch.audit(
                AuditDraft::new(&actor.id, actions::IMPORT, "batch", batch_id, now)
                    .with("imported", imported)
                    .with("skipped_duplicates", skipped),
            );
            self.store.commit(batch, now)?;
            Ok(BatchSummary {
                batch_id: batch_id.to_owned(),
                imported,
                skipped_duplicates: skipped,
                timestamp: now,
            })
        })
    }

    /// Hands the caller the oldest `Available` sentence, or failing that the
    /// oldest `NeedsRevision` one, under a lease of `lease_seconds`.
    pub fn claim_next(
        &self,
        actor: &User,
        lease_seconds: u64,
    ) -> Result<Option<Sentence>, WorkflowError> {
        Self::require(actor, Role::Translator, "claim sentences")?;
        if lease_seconds == 0 {
            return Err(WorkflowError::InvalidLease);
        }
        self.retry(|| {
            let candidates = self.claim_candidates();
            if candidates.is_empty() {
                return Ok(None);
            }
            let mut last_conflict = None;
            for (mut sentence, version) in candidates {
                let now = self.now();
                let prior = sentence.status;
                transition(&mut sentence, SentenceStatus::Claimed, now)?;
                sentence.claim = Some(Claim {
                    translator_id: actor.id.clone(),
                    lease_expiry: now.plus_seconds(lease_seconds),
                    prior_status: prior,
                });
                let mut batch = WriteBatch::new();
                batch.put(sentence.clone(), Some(version)).audit(
                    AuditDraft::new(&actor.id, actions::CLAIM, "sentence", &sentence.id, now)
                        .with("from", prior),
                );
                match self.store.commit(batch, now) {
                    Ok(_) => return Ok(Some(sentence)),
                    Err(e @ StoreError::VersionConflict { .. }) => last_conflict = Some(e),
                    Err(e) => return Err(e.into()),
                }
            }
            Err(last_conflict.expect("candidates were tried").into())
        })
    }

    fn claim_candidates(&self) -> Vec<(Sentence, u64)> {
        let snap = self.store.snapshot();
        let mut eligible: Vec<_> = snap
            .iter::<Sentence>()
            .filter(|s| s.payload.status.is_claimable())
            .map(|s| {
                let rank = u8::from(s.payload.status != SentenceStatus::Available);
                ((rank, s.payload.created_at, &s.payload.id), s)
            })
            .collect();
        if eligible.len() > CLAIM_CANDIDATES {
            eligible.select_nth_unstable_by(CLAIM_CANDIDATES - 1, |a, b| a.0.cmp(&b.0));
            eligible.truncate(CLAIM_CANDIDATES);
        }
        eligible.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        eligible
            .into_iter()
            .map(|(_, s)| (s.payload.clone(), s.version))
            .collect()
    }

    /// Returns every sentence whose lease ran out before `now` to the status
    /// it was claimed from. A sentence that was submitted in the meantime is
    /// left alone.
    pub fn expire_leases(&self, now: Timestamp) -> Result<usize, WorkflowError> {
        let expired: Vec<SentenceId> = self
            .store
            .snapshot()
            .iter::<Sentence>()
            .filter(|s| {
                s.payload
                    .claim
                    .as_ref()
                    .is_some_and(|c| c.lease_expiry < now)
            })
            .map(|s| s.payload.id.clone())
            .collect();

        let system = UserId::new(SYSTEM_ACTOR);
        let mut reverted = 0;
        for id in expired {
            let done = self.retry(|| {
                let current = self.store.get::<Sentence>(id.as_str())?;
                let mut sentence = current.payload;
                let Some(claim) = sentence.claim.take() else {
                    return Ok(false);
                };
                if claim.lease_expiry >= now {
                    return Ok(false);
                }
                transition(&mut sentence, claim.prior_status, self.now())?;
                let mut batch = WriteBatch::new();
                batch.put(sentence, Some(current.version)).audit(
                    AuditDraft::new(&system, actions::EXPIRE, "sentence", &id, self.now())
                        .with("translator", &claim.translator_id)
                        .with("to", claim.prior_status),
                );
                self.store.commit(batch, self.now())?;
                Ok(true)
            })?;
            if done {
                reverted += 1;
            }
        }
        Ok(reverted)
    }

    /// Gives a claimed sentence back before its lease runs out.
    pub fn release_claim(&self, actor: &User, sentence_id: &SentenceId) -> Result<Sentence, WorkflowError> {
        Self::require(actor, Role::Translator, "release claims")?;
        self.retry(|| {
            let now = self.now();
            let current = self.store.get::<Sentence>(sentence_id.as_str())?;
            let mut sentence = current.payload;
            let claim = match sentence.claim.take() {
                Some(c) if c.translator_id == actor.id => c,
                _ => return Err(WorkflowError::NotClaimant(sentence_id.clone())),
            };
            transition(&mut sentence, claim.prior_status, now)?;
            let mut batch = WriteBatch::new();
            batch.put(sentence.clone(), Some(current.version)).audit(AuditDraft::new(
                &actor.id,
                actions::RELEASE,
                "sentence",
                sentence_id,
                now,
            ));
            self.store.commit(batch, now)?;
            Ok(sentence)
        })
    }

    pub fn submit_translation(
        &self,
        actor: &User,
        sentence_id: &SentenceId,
        hula_text: &str,
        audio: Option<AudioUpload>,
    ) -> Result<Translation, WorkflowError> {
        Self::require(actor, Role::Translator, "submit translations")?;
        if hula_text.trim().is_empty() {
            return Err(WorkflowError::BlankTranslation);
        }
        if audio.as_ref().is_some_and(|a| a.bytes.is_empty()) {
            return Err(WorkflowError::EmptyAudio);
        }

        let mut stored_blob: Option<AttachmentId> = None;
        let result = self.retry(|| {
            let now = self.now();
            let current = self.store.get::<Sentence>(sentence_id.as_str())?;
            let mut sentence = current.payload;
            match &sentence.claim {
                Some(c) if c.translator_id == actor.id => {
                    if !c.is_live_at(now) {
                        return Err(WorkflowError::LeaseExpired(sentence_id.clone()));
                    }
                }
                _ => return Err(WorkflowError::NotClaimant(sentence_id.clone())),
            }
            let author = self.store.get::<User>(actor.id.as_str())?;

            let mut batch = WriteBatch::new();
            let audio_ref = match &audio {
                Some(upload) => {
                    let id = match &stored_blob {
                        Some(id) => id.clone(),
                        None => {
                            let id = AttachmentId::new(self.store.next_id("a"));
                            self.store.put_blob(&id, &upload.bytes)?;
                            stored_blob = Some(id.clone());
                            id
                        }
                    };
                    batch.put(
                        AudioAttachment {
                            id: id.clone(),
                            content_type: upload.content_type.clone(),
                            byte_length: upload.bytes.len() as u64,
                            payload_ref: format!("blobs/{id}"),
                            uploaded_by: actor.id.clone(),
                            uploaded_at: now,
                        },
                        None,
                    );
                    Some(id)
                }
                None => None,
            };

            sentence.claim = None;
            sentence.attempt_count += 1;
            transition(&mut sentence, SentenceStatus::AwaitingReview, now)?;
            let translation = Translation {
                id: TranslationId::new(self.store.next_id("t")),
                sentence_id: sentence.id.clone(),
                translator_id: actor.id.clone(),
                hula_text: hula_text.to_owned(),
                audio_ref,
                status: TranslationStatus::Submitted,
                attempt_index: sentence.attempt_count,
                submitted_at: now,
            };
            let mut author_record = author.payload;
            author_record.submitted_count += 1;

            batch
                .put(sentence, Some(current.version))
                .put(translation.clone(), None)
                .put(author_record, Some(author.version))
                .audit(
                    AuditDraft::new(&actor.id, actions::SUBMIT, "translation", &translation.id, now)
                        .with("sentence", sentence_id)
                        .with("attempt", translation.attempt_index),
                );
            self.store.commit(batch, now)?;
            Ok(translation)
        });
        if result.is_err() {
            if let Some(id) = &stored_blob {
                self.store.remove_blob(id);
            }
        }
        result
    }

    pub fn review_translation(
        &self,
        actor: &User,
        translation_id: &TranslationId,
        decision: Decision,
        comment: &str,
    ) -> Result<TranslationReview, WorkflowError> {
        Self::require(actor, Role::Reviewer, "review translations")?;
        self.retry(|| {
            let now = self.now();
            let current = self.store.get::<Translation>(translation_id.as_str())?;
            let review = validate_review(
                &current.payload,
                TranslationReview {
                    id: ReviewId::new(self.store.next_id("r")),
                    translation_id: translation_id.clone(),
                    reviewer_id: actor.id.clone(),
                    decision,
                    comment: comment.to_owned(),
                    reviewed_at: now,
                },
            )?;
            let sentence_rec = self
                .store
                .get::<Sentence>(current.payload.sentence_id.as_str())?;
            let author = self
                .store
                .get::<User>(current.payload.translator_id.as_str())?;

            let mut translation = current.payload;
            let mut sentence = sentence_rec.payload;
            let mut batch = WriteBatch::new();
            match decision {
                Decision::Approve => {
                    translation.status = TranslationStatus::Approved;
                    transition(&mut sentence, SentenceStatus::Approved, now)?;
                    let mut author_record = author.payload;
                    author_record.approved_count += 1;
                    author_record.first_approved_at.get_or_insert(now);
                    batch.put(author_record, Some(author.version));
                    batch.ledger(LedgerDraft::Accrue {
                        translator: translation.translator_id.clone(),
                        sentence: sentence.id.clone(),
                        amount_minor: self.config.payout_rate_toea,
                    });
                }
                Decision::Flag => {
                    translation.status = TranslationStatus::Flagged;
                    transition(&mut sentence, SentenceStatus::NeedsRevision, now)?;
                }
            }
            batch
                .put(translation, Some(current.version))
                .put(sentence.clone(), Some(sentence_rec.version))
                .put(review.clone(), None)
                .audit(
                    AuditDraft::new(&actor.id, actions::REVIEW, "translation", translation_id, now)
                        .with("decision", format!("{decision:?}").to_lowercase())
                        .with("sentence", &sentence.id),
                );
            self.store.commit(batch, now)?;
            Ok(review)
        })
    }

    /// One record per `Approved` sentence, in sentence id order. With
    /// `mark_exported` the sentences move to `Exported` in the same commit.
    pub fn export_approved(
        &self,
        actor: &User,
        mark_exported: bool,
    ) -> Result<Vec<ExportRecord>, WorkflowError> {
        Self::require(actor, Role::Admin, "export the corpus")?;
        self.retry(|| {
            let now = self.now();
            let mut batch = WriteBatch::new();
            let records = {
                let snap = self.store.snapshot();
                let mut approved: HashMap<&str, &Translation> = HashMap::new();
                for t in snap.iter::<Translation>() {
                    if t.payload.status == TranslationStatus::Approved {
                        approved.insert(t.payload.sentence_id.as_str(), &t.payload);
                    }
                }
                let mut reviews: HashMap<&str, &TranslationReview> = HashMap::new();
                for r in snap.iter::<TranslationReview>() {
                    reviews.insert(r.payload.translation_id.as_str(), &r.payload);
                }
                let mut records = Vec::new();
                for s in snap.iter::<Sentence>() {
                    if s.payload.status != SentenceStatus::Approved {
                        continue;
                    }
                    let id = s.payload.id.as_str();
                    let translation = approved.get(id).ok_or_else(|| WorkflowError::NotFound {
                        kind: EntityKind::Translation,
                        id: format!("approved translation of {id}"),
                    })?;
                    let review = reviews.get(translation.id.as_str()).ok_or_else(|| {
                        WorkflowError::NotFound {
                            kind: EntityKind::Review,
                            id: format!("review of {}", translation.id),
                        }
                    })?;
                    records.push(ExportRecord {
                        english_text: s.payload.english_text.clone(),
                        hula_text: translation.hula_text.clone(),
                        audio_ref: translation.audio_ref.clone(),
                        translator_id: translation.translator_id.clone(),
                        reviewer_id: review.reviewer_id.clone(),
                        attempts: translation.attempt_index,
                        approved_at: review.reviewed_at,
                    });
                    if mark_exported {
                        let mut sentence = s.payload.clone();
                        transition(&mut sentence, SentenceStatus::Exported, now)?;
                        batch.put(sentence, Some(s.version));
                    }
                }
                records
            };
            if mark_exported && !records.is_empty() {
                batch.audit(
                    AuditDraft::new(&actor.id, actions::EXPORT, "corpus", "approved", now)
                        .with("records", records.len()),
                );
                self.store.commit(batch, now)?;
            }
            Ok(records)
        })
    }

    pub fn list_tasks(&self, actor: &User) -> TaskList {
        let snap = self.store.snapshot();
        match actor.role {
            Role::Translator => {
                let mut claimed = Vec::new();
                let mut available = 0;
                let mut needs_revision = 0;
                for s in snap.iter::<Sentence>() {
                    match s.payload.status {
                        SentenceStatus::Available => available += 1,
                        SentenceStatus::NeedsRevision => needs_revision += 1,
                        SentenceStatus::Claimed
                            if s.payload
                                .claim
                                .as_ref()
                                .is_some_and(|c| c.translator_id == actor.id) =>
                        {
                            claimed.push(s.payload.clone())
                        }
                        _ => {}
                    }
                }
                TaskList::Translator {
                    claimed,
                    available,
                    needs_revision,
                }
            }
            Role::Reviewer => {
                let mut by_sentence: HashMap<&str, Vec<&Translation>> = HashMap::new();
                for t in snap.iter::<Translation>() {
                    by_sentence
                        .entry(t.payload.sentence_id.as_str())
                        .or_default()
                        .push(&t.payload);
                }
                let mut flag_comments: HashMap<&str, &str> = HashMap::new();
                for r in snap.iter::<TranslationReview>() {
                    if r.payload.decision == Decision::Flag {
                        flag_comments.insert(r.payload.translation_id.as_str(), &r.payload.comment);
                    }
                }
                let items = snap
                    .iter::<Sentence>()
                    .filter(|s| s.payload.status == SentenceStatus::AwaitingReview)
                    .filter_map(|s| {
                        let mut history = by_sentence.get(s.payload.id.as_str())?.clone();
                        history.sort_by_key(|t| t.attempt_index);
                        let latest = history.pop()?;
                        let prior_comments = history
                            .iter()
                            .filter_map(|t| flag_comments.get(t.id.as_str()).map(|c| c.to_string()))
                            .collect();
                        Some(ReviewItem {
                            sentence_id: s.payload.id.clone(),
                            english_text: s.payload.english_text.clone(),
                            translation: latest.clone(),
                            prior_comments,
                        })
                    })
                    .collect();
                TaskList::Reviewer { items }
            }
            Role::Admin => TaskList::Admin {
                batches: analytics::progress_by_batch(&snap),
            },
        }
    }

    pub fn contribute(
        &self,
        actor: &User,
        member: &UserId,
        amount_minor: u64,
    ) -> Result<LedgerEntry, WorkflowError> {
        Self::require(actor, Role::Admin, "record contributions")?;
        self.ledger_op(
            actor,
            actions::CONTRIBUTE,
            LedgerDraft::Contribute {
                member: member.clone(),
                amount_minor,
            },
        )
    }

    pub fn disburse(
        &self,
        actor: &User,
        translator: &UserId,
        amount_minor: u64,
    ) -> Result<LedgerEntry, WorkflowError> {
        Self::require(actor, Role::Admin, "disburse payouts")?;
        self.ledger_op(
            actor,
            actions::DISBURSE,
            LedgerDraft::Disburse {
                translator: translator.clone(),
                amount_minor,
            },
        )
    }

    fn ledger_op(
        &self,
        actor: &User,
        action: &str,
        draft: LedgerDraft,
    ) -> Result<LedgerEntry, WorkflowError> {
        let (party, amount) = match &draft {
            LedgerDraft::Contribute {
                member,
                amount_minor,
            } => (member.clone(), *amount_minor),
            LedgerDraft::Disburse {
                translator,
                amount_minor,
            } => (translator.clone(), *amount_minor),
            LedgerDraft::Accrue { .. } => unreachable!("accruals only come from approvals"),
        };
        if amount == 0 {
            return Err(LedgerError::NonPositiveAmount.into());
        }
        let now = self.now();
        let mut batch = WriteBatch::new();
        batch.ledger(draft).audit(
            AuditDraft::new(&actor.id, action, "ledger", &party, now).with("amount_minor", amount),
        );
        let outcome = self.store.commit(batch, now)?;
        Ok(outcome.ledger.expect("ledger entry committed"))
    }

    pub fn balances(&self) -> Balances {
        self.store.snapshot().ledger().balances().clone()
    }

    pub fn ledger_entries(&self) -> Vec<LedgerEntry> {
        self.store.snapshot().ledger().entries().to_vec()
    }

    /// Scores and stores one SUS questionnaire.
    pub fn record_sus(&self, actor: &User, responses: &[u8]) -> Result<SusResponse, WorkflowError> {
        let score = analytics::sus_score(responses).map_err(AnalyticsError::from)?;
        let mut items = [0u8; 10];
        items.copy_from_slice(responses);
        let now = self.now();
        let record = SusResponse {
            id: self.store.next_id("sus"),
            respondent_id: actor.id.clone(),
            responses: items,
            score,
            submitted_at: now,
        };
        let mut batch = WriteBatch::new();
        batch.put(record.clone(), None).audit(
            AuditDraft::new(&actor.id, actions::SUS, "sus_response", &record.id, now)
                .with("score", score),
        );
        self.store.commit(batch, now)?;
        Ok(record)
    }

    pub fn stats(&self) -> StatsReport {
        analytics::stats_report(&self.store.snapshot())
    }

    pub fn progress(&self, batch_id: &str) -> Result<StatusCounts, WorkflowError> {
        Ok(analytics::progress(&self.store.snapshot(), batch_id)?)
    }

    pub fn leaderboard(&self, limit: NonZeroUsize) -> Vec<LeaderboardRow> {
        let snap = self.store.snapshot();
        analytics::leaderboard(snap.iter::<User>().map(|u| &u.payload), limit)
    }
}

fn transition(
    sentence: &mut Sentence,
    to: SentenceStatus,
    now: Timestamp,
) -> Result<(), WorkflowError> {
    if !legal_sentence_transition(sentence.status, to) {
        return Err(WorkflowError::IllegalTransition {
            id: sentence.id.clone(),
            from: sentence.status,
            to,
        });
    }
    sentence.status = to;
    sentence.updated_at = now;
    Ok(())
}
