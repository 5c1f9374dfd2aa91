//! Community incentive ledger.
//!
//! Members pay into a shared pool, translators accrue a fixed payout for
//! every approved sentence, and disbursements settle what is owed out of
//! the pool. All amounts are integer toea (1 PGK = 100 toea).
//!
//! The ordered entry list is the source of truth: [`Balances::fold`] over
//! the entries must always equal the incrementally maintained balances.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::domain::{SentenceId, SentenceStatus, UserId};

/// Default payout per approved sentence: PGK0.10.
pub const DEFAULT_PAYOUT_RATE_TOEA: u64 = 10;

/// Formats a toea amount as kina, e.g. `PGK1212.40`.
pub struct Kina(pub u64);

impl fmt::Display for Kina {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PGK{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Contribution,
    Accrual,
    Disbursement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub kind: EntryKind,
    pub party: UserId,
    pub amount_minor: u64,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub sentence_ref: Option<SentenceId>,
    pub timestamp: Timestamp,
}

/// A ledger operation that has not been validated or sequenced yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerDraft {
    Contribute {
        member: UserId,
        amount_minor: u64,
    },
    Accrue {
        translator: UserId,
        sentence: SentenceId,
        amount_minor: u64,
    },
    Disburse {
        translator: UserId,
        amount_minor: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("amount must be at least 1 toea")]
    NonPositiveAmount,
    #[error("sentence {0} has already accrued a payout")]
    DuplicateAccrual(SentenceId),
    #[error("sentence {0} is not approved")]
    SentenceNotApproved(SentenceId),
    #[error("pool holds {pool} toea, cannot disburse {requested}")]
    InsufficientPool { pool: u64, requested: u64 },
    #[error("{translator} is owed {owed} toea, cannot disburse {requested}")]
    ExceedsOwed {
        translator: UserId,
        owed: u64,
        requested: u64,
    },
    #[error("entry {found} out of sequence, expected {expected}")]
    OutOfSequence { expected: u64, found: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balances {
    pub pool_minor: u64,
    pub owed_minor: BTreeMap<UserId, u64>,
    pub accrued_total_minor: u64,
    pub disbursed_total_minor: u64,
    pub contributed_total_minor: u64,
}

impl Balances {
    pub fn owed(&self, translator: &UserId) -> u64 {
        self.owed_minor.get(translator).copied().unwrap_or(0)
    }

    pub fn owed_total_minor(&self) -> u64 {
        self.owed_minor.values().sum()
    }

    /// Applies one entry, refusing anything that would make a balance
    /// negative.
    pub fn apply(&mut self, entry: &LedgerEntry) -> Result<(), LedgerError> {
        if entry.amount_minor == 0 {
            return Err(LedgerError::NonPositiveAmount);
        }
        let amount = entry.amount_minor;
        match entry.kind {
            EntryKind::Contribution => {
                self.pool_minor += amount;
                self.contributed_total_minor += amount;
            }
            EntryKind::Accrual => {
                *self.owed_minor.entry(entry.party.clone()).or_default() += amount;
                self.accrued_total_minor += amount;
            }
            EntryKind::Disbursement => {
                let owed = self.owed(&entry.party);
                if amount > owed {
                    return Err(LedgerError::ExceedsOwed {
                        translator: entry.party.clone(),
                        owed,
                        requested: amount,
                    });
                }
                if amount > self.pool_minor {
                    return Err(LedgerError::InsufficientPool {
                        pool: self.pool_minor,
                        requested: amount,
                    });
                }
                self.pool_minor -= amount;
                self.owed_minor.insert(entry.party.clone(), owed - amount);
                self.disbursed_total_minor += amount;
            }
        }
        Ok(())
    }

    pub fn fold<'a>(entries: impl IntoIterator<Item = &'a LedgerEntry>) -> Result<Self, LedgerError> {
        let mut balances = Balances::default();
        for entry in entries {
            balances.apply(entry)?;
        }
        Ok(balances)
    }

    /// `contributed == pool + disbursed`.
    pub fn is_conserved(&self) -> bool {
        self.contributed_total_minor == self.pool_minor + self.disbursed_total_minor
            && self.accrued_total_minor == self.owed_total_minor() + self.disbursed_total_minor
    }
}

/// The ordered entry list plus its running balances.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
    balances: Balances,
    accrued: HashSet<SentenceId>,
}

impl Ledger {
    pub fn new() -> Self {
        Ledger::default()
    }

    /// Rebuilds a ledger from persisted entries, checking sequence numbers
    /// and every balance rule along the way.
    pub fn replay(entries: Vec<LedgerEntry>) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::new();
        for entry in entries {
            let expected = ledger.next_seq();
            if entry.seq != expected {
                return Err(LedgerError::OutOfSequence {
                    expected,
                    found: entry.seq,
                });
            }
            if let Some(sentence) = &entry.sentence_ref {
                if entry.kind == EntryKind::Accrual && ledger.accrued.contains(sentence) {
                    return Err(LedgerError::DuplicateAccrual(sentence.clone()));
                }
            }
            ledger.push(entry)?;
        }
        Ok(ledger)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn balances(&self) -> &Balances {
        &self.balances
    }

    pub fn has_accrual_for(&self, sentence: &SentenceId) -> bool {
        self.accrued.contains(sentence)
    }

    fn next_seq(&self) -> u64 {
        self.entries.len() as u64 + 1
    }

    /// Validates a draft against the current balances and returns the entry
    /// that would be appended. Nothing changes until [`Ledger::push`].
    ///
    /// `sentence_status` is the status the referenced sentence will have once
    /// the surrounding write lands; only accruals look at it.
    pub fn prepare(
        &self,
        draft: &LedgerDraft,
        sentence_status: Option<SentenceStatus>,
        now: Timestamp,
    ) -> Result<LedgerEntry, LedgerError> {
        let (kind, party, amount, sentence_ref) = match draft {
            LedgerDraft::Contribute {
                member,
                amount_minor,
            } => (EntryKind::Contribution, member, *amount_minor, None),
            LedgerDraft::Accrue {
                translator,
                sentence,
                amount_minor,
            } => {
                if sentence_status != Some(SentenceStatus::Approved) {
                    return Err(LedgerError::SentenceNotApproved(sentence.clone()));
                }
                if self.accrued.contains(sentence) {
                    return Err(LedgerError::DuplicateAccrual(sentence.clone()));
                }
                (EntryKind::Accrual, translator, *amount_minor, Some(sentence.clone()))
            }
            LedgerDraft::Disburse {
                translator,
                amount_minor,
            } => (EntryKind::Disbursement, translator, *amount_minor, None),
        };
        let entry = LedgerEntry {
            seq: self.next_seq(),
            kind,
            party: party.clone(),
            amount_minor: amount,
            sentence_ref,
            timestamp: now,
        };
        self.balances.check_entry(&entry)?;
        Ok(entry)
    }

    /// Appends an entry produced by [`Ledger::prepare`].
    pub fn push(&mut self, entry: LedgerEntry) -> Result<(), LedgerError> {
        self.balances.apply(&entry)?;
        if entry.kind == EntryKind::Accrual {
            if let Some(sentence) = &entry.sentence_ref {
                self.accrued.insert(sentence.clone());
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn contribute(
        &mut self,
        member: &UserId,
        amount_minor: u64,
        now: Timestamp,
    ) -> Result<LedgerEntry, LedgerError> {
        self.commit(
            &LedgerDraft::Contribute {
                member: member.clone(),
                amount_minor,
            },
            None,
            now,
        )
    }

    pub fn accrue_for_approval(
        &mut self,
        translator: &UserId,
        sentence: &SentenceId,
        sentence_status: SentenceStatus,
        amount_minor: u64,
        now: Timestamp,
    ) -> Result<LedgerEntry, LedgerError> {
        self.commit(
            &LedgerDraft::Accrue {
                translator: translator.clone(),
                sentence: sentence.clone(),
                amount_minor,
            },
            Some(sentence_status),
            now,
        )
    }

    pub fn disburse(
        &mut self,
        translator: &UserId,
        amount_minor: u64,
        now: Timestamp,
    ) -> Result<LedgerEntry, LedgerError> {
        self.commit(
            &LedgerDraft::Disburse {
                translator: translator.clone(),
                amount_minor,
            },
            None,
            now,
        )
    }

    fn commit(
        &mut self,
        draft: &LedgerDraft,
        sentence_status: Option<SentenceStatus>,
        now: Timestamp,
    ) -> Result<LedgerEntry, LedgerError> {
        let entry = self.prepare(draft, sentence_status, now)?;
        self.push(entry.clone())?;
        Ok(entry)
    }
}

impl Balances {
    // Dry run of `apply`.
    fn check_entry(&self, entry: &LedgerEntry) -> Result<(), LedgerError> {
        if entry.amount_minor == 0 {
            return Err(LedgerError::NonPositiveAmount);
        }
        if entry.kind == EntryKind::Disbursement {
            let owed = self.owed(&entry.party);
            if entry.amount_minor > owed {
                return Err(LedgerError::ExceedsOwed {
                    translator: entry.party.clone(),
                    owed,
                    requested: entry.amount_minor,
                });
            }
            if entry.amount_minor > self.pool_minor {
                return Err(LedgerError::InsufficientPool {
                    pool: self.pool_minor,
                    requested: entry.amount_minor,
                });
            }
        }
        Ok(())
    }
}
