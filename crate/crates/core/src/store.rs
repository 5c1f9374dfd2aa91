//! Versioned document store with an append-only audit log.
//!
//! Every record carries a version that starts at 1 and grows by exactly one
//! per successful write. Writers state the version they read; a stale
//! version is refused with [`StoreError::VersionConflict`]. Several records,
//! audit events and at most one ledger entry can be committed together in a
//! [`WriteBatch`], which is validated and applied as a unit.
//!
//! The store runs either purely in memory or backed by a directory:
//!
//! ```text
//! <root>/sentences/<id>.json      one document per record: {"version", "record"}
//! <root>/translations/<id>.json
//! <root>/...
//! <root>/audit.ndjson             one audit event per line, seq 1..N
//! <root>/ledger.ndjson            one ledger entry per line, seq 1..N
//! <root>/blobs/<attachment id>    raw audio payloads
//! ```
//!
//! Record files are replaced atomically (write to a temporary file, fsync,
//! rename), so after a crash each record holds either its old or its new
//! state.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::domain::{
    is_valid_id, AttachmentId, AudioAttachment, AuditDraft, AuditEvent, Batch, Sentence,
    SentenceStatus, SusResponse, Translation, TranslationReview, User,
};
use crate::ledger::{Ledger, LedgerDraft, LedgerEntry, LedgerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Sentence,
    Translation,
    Review,
    User,
    Attachment,
    Batch,
    SusResponse,
}

impl EntityKind {
    pub const ALL: [EntityKind; 7] = [
        EntityKind::Sentence,
        EntityKind::Translation,
        EntityKind::Review,
        EntityKind::User,
        EntityKind::Attachment,
        EntityKind::Batch,
        EntityKind::SusResponse,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            EntityKind::Sentence => "sentences",
            EntityKind::Translation => "translations",
            EntityKind::Review => "reviews",
            EntityKind::User => "users",
            EntityKind::Attachment => "attachments",
            EntityKind::Batch => "batches",
            EntityKind::SusResponse => "sus_responses",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EntityKind::Sentence => "sentence",
            EntityKind::Translation => "translation",
            EntityKind::Review => "review",
            EntityKind::User => "user",
            EntityKind::Attachment => "attachment",
            EntityKind::Batch => "batch",
            EntityKind::SusResponse => "sus_response",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} {id}: expected version {expected:?}, found {found:?}")]
    VersionConflict {
        kind: EntityKind,
        id: String,
        expected: Option<u64>,
        found: Option<u64>,
    },
    #[error("{kind} {id} already exists")]
    DuplicateId { kind: EntityKind, id: String },
    #[error("{kind} {id} not found")]
    NotFound { kind: EntityKind, id: String },
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
}

/// A record together with the version it was stored at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionedRecord<T> {
    pub version: u64,
    #[serde(rename = "record")]
    pub payload: T,
}

/// A page of query results. `limit` is at least one by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Page {
    pub offset: usize,
    pub limit: NonZeroUsize,
}

impl Page {
    pub fn new(offset: usize, limit: NonZeroUsize) -> Self {
        Page { offset, limit }
    }

    pub fn all() -> Self {
        Page {
            offset: 0,
            limit: NonZeroUsize::MAX,
        }
    }
}

pub struct Table<T> {
    rows: BTreeMap<String, VersionedRecord<T>>,
}

impl<T> Default for Table<T> {
    fn default() -> Self {
        Table {
            rows: BTreeMap::new(),
        }
    }
}

#[derive(Default)]
pub struct Tables {
    sentences: Table<Sentence>,
    translations: Table<Translation>,
    reviews: Table<TranslationReview>,
    users: Table<User>,
    attachments: Table<AudioAttachment>,
    batches: Table<Batch>,
    sus_responses: Table<SusResponse>,
}

/// A document type the store can hold.
pub trait Record: Clone + Serialize + DeserializeOwned + Send + Sync + 'static {
    const KIND: EntityKind;

    fn record_id(&self) -> &str;

    #[doc(hidden)]
    fn table(tables: &Tables) -> &Table<Self>;
    #[doc(hidden)]
    fn table_mut(tables: &mut Tables) -> &mut Table<Self>;
    #[doc(hidden)]
    fn into_any(self) -> AnyRecord;
}

macro_rules! records {
    ($($variant:ident($ty:ty) => $field:ident, $id:expr;)*) => {
        /// Any storable record; the unit a [`WriteBatch`] carries.
        #[derive(Debug, Clone)]
        pub enum AnyRecord {
            $($variant($ty),)*
        }

        $(
            impl Record for $ty {
                const KIND: EntityKind = EntityKind::$variant;

                fn record_id(&self) -> &str {
                    let id: fn(&$ty) -> &str = $id;
                    id(self)
                }

                fn table(tables: &Tables) -> &Table<Self> {
                    &tables.$field
                }

                fn table_mut(tables: &mut Tables) -> &mut Table<Self> {
                    &mut tables.$field
                }

                fn into_any(self) -> AnyRecord {
                    AnyRecord::$variant(self)
                }
            }
        )*

        impl AnyRecord {
            fn kind(&self) -> EntityKind {
                match self {
                    $(AnyRecord::$variant(_) => EntityKind::$variant,)*
                }
            }

            fn id(&self) -> &str {
                match self {
                    $(AnyRecord::$variant(r) => r.record_id(),)*
                }
            }

            fn current_version(&self, tables: &Tables) -> Option<u64> {
                match self {
                    $(AnyRecord::$variant(r) => tables.$field.rows.get(r.record_id()).map(|v| v.version),)*
                }
            }

            fn to_document(&self, version: u64) -> serde_json::Result<Vec<u8>> {
                match self {
                    $(AnyRecord::$variant(r) => document(r, version),)*
                }
            }

            fn install(self, tables: &mut Tables, version: u64) {
                match self {
                    $(AnyRecord::$variant(r) => {
                        tables.$field.rows.insert(
                            r.record_id().to_owned(),
                            VersionedRecord { version, payload: r },
                        );
                    })*
                }
            }
        }

        fn load_tables(root: &Path, tables: &mut Tables) -> Result<(), StoreError> {
            $(load_table::<$ty>(root, &mut tables.$field)?;)*
            Ok(())
        }
    };
}

records! {
    Sentence(Sentence) => sentences, |r| r.id.as_str();
    Translation(Translation) => translations, |r| r.id.as_str();
    Review(TranslationReview) => reviews, |r| r.id.as_str();
    User(User) => users, |r| r.id.as_str();
    Attachment(AudioAttachment) => attachments, |r| r.id.as_str();
    Batch(Batch) => batches, |r| r.id.as_str();
    SusResponse(SusResponse) => sus_responses, |r| r.id.as_str();
}

fn document<T: Serialize>(record: &T, version: u64) -> serde_json::Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        version: u64,
        record: &'a T,
    }
    let mut bytes = serde_json::to_vec_pretty(&Doc { version, record })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Records, audit events and an optional ledger entry committed as a unit.
#[derive(Debug, Default)]
pub struct WriteBatch {
    puts: Vec<(AnyRecord, Option<u64>)>,
    audit: Vec<AuditDraft>,
    ledger: Option<LedgerDraft>,
}

impl WriteBatch {
    pub fn new() -> Self {
        WriteBatch::default()
    }

    /// Stages a write. `expected` is `None` to create, or the version last
    /// read to update.
    pub fn put<R: Record>(&mut self, record: R, expected: Option<u64>) -> &mut Self {
        self.puts.push((record.into_any(), expected));
        self
    }

    pub fn audit(&mut self, event: AuditDraft) -> &mut Self {
        self.audit.push(event);
        self
    }

    /// Stages a ledger entry. A batch carries at most one; a second call
    /// replaces the first.
    pub fn ledger(&mut self, draft: LedgerDraft) -> &mut Self {
        self.ledger = Some(draft);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.puts.is_empty() && self.audit.is_empty() && self.ledger.is_none()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CommitOutcome {
    /// New version of each staged record, in staging order.
    pub versions: Vec<u64>,
    pub audit: Vec<AuditEvent>,
    pub ledger: Option<LedgerEntry>,
}

struct DiskFiles {
    root: PathBuf,
    audit: File,
    ledger: File,
    fsync: bool,
}

struct State {
    tables: Tables,
    audit: Vec<AuditEvent>,
    ledger: Ledger,
    disk: Option<DiskFiles>,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    /// Flush record files and log appends to stable storage before a commit
    /// returns.
    pub fsync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { fsync: true }
    }
}

pub struct Store {
    state: RwLock<State>,
    blobs: Mutex<HashMap<AttachmentId, Vec<u8>>>,
    id_counter: AtomicU64,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let state = self.state.read();
        f.debug_struct("Store")
            .field("root", &state.disk.as_ref().map(|d| d.root.clone()))
            .field("audit_len", &state.audit.len())
            .finish()
    }
}

const AUDIT_FILE: &str = "audit.ndjson";
const LEDGER_FILE: &str = "ledger.ndjson";
const BLOB_DIR: &str = "blobs";

impl Store {
    pub fn in_memory() -> Self {
        Store {
            state: RwLock::new(State {
                tables: Tables::default(),
                audit: Vec::new(),
                ledger: Ledger::new(),
                disk: None,
            }),
            blobs: Mutex::new(HashMap::new()),
            id_counter: AtomicU64::new(0),
        }
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        Store::open_with(root, StoreOptions::default())
    }

    pub fn open_with(root: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        for kind in EntityKind::ALL {
            fs::create_dir_all(root.join(kind.dir_name()))?;
        }
        fs::create_dir_all(root.join(BLOB_DIR))?;

        let mut tables = Tables::default();
        load_tables(&root, &mut tables)?;

        let (audit_file, audit) = open_log::<AuditEvent>(&root.join(AUDIT_FILE))?;
        for (i, event) in audit.iter().enumerate() {
            if event.seq != i as u64 + 1 {
                return Err(StoreError::Corrupt {
                    path: root.join(AUDIT_FILE),
                    reason: format!("audit seq {} at position {}", event.seq, i + 1),
                });
            }
        }
        let (ledger_file, entries) = open_log::<LedgerEntry>(&root.join(LEDGER_FILE))?;
        let ledger = Ledger::replay(entries).map_err(|e| StoreError::Corrupt {
            path: root.join(LEDGER_FILE),
            reason: e.to_string(),
        })?;

        let store = Store {
            state: RwLock::new(State {
                tables,
                audit,
                ledger,
                disk: Some(DiskFiles {
                    root,
                    audit: audit_file,
                    ledger: ledger_file,
                    fsync: options.fsync,
                }),
            }),
            blobs: Mutex::new(HashMap::new()),
            id_counter: AtomicU64::new(0),
        };
        {
            let state = store.state.read();
            let t = &state.tables;
            let ids = t.sentences.rows.keys()
                .chain(t.translations.rows.keys())
                .chain(t.reviews.rows.keys())
                .chain(t.users.rows.keys())
                .chain(t.attachments.rows.keys())
                .chain(t.batches.rows.keys())
                .chain(t.sus_responses.rows.keys());
            for id in ids {
                store.observe_id(id);
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> Option<PathBuf> {
        self.state.read().disk.as_ref().map(|d| d.root.clone())
    }

    /// A fresh identifier `<prefix>-<10 digits>`. Generated ids sort in
    /// creation order.
    pub fn next_id(&self, prefix: &str) -> String {
        let n = self.id_counter.fetch_add(1, Ordering::SeqCst) + 1;
        format!("{prefix}-{n:010}")
    }

    fn observe_id(&self, id: &str) {
        if let Some((_, digits)) = id.rsplit_once('-') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(n) = digits.parse::<u64>() {
                    self.id_counter.fetch_max(n, Ordering::SeqCst);
                }
            }
        }
    }

    pub fn put<R: Record>(&self, record: R, expected: Option<u64>) -> Result<u64, StoreError> {
        let mut batch = WriteBatch::new();
        batch.put(record, expected);
        Ok(self.commit(batch, Timestamp::EPOCH)?.versions[0])
    }

    pub fn get<R: Record>(&self, id: &str) -> Result<VersionedRecord<R>, StoreError> {
        self.state
            .read()
            .tables
            .get::<R>(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound {
                kind: R::KIND,
                id: id.to_owned(),
            })
    }

    /// Records of one kind that satisfy `filter`, in ascending id order.
    pub fn query<R: Record>(
        &self,
        filter: impl Fn(&R) -> bool,
        page: Page,
    ) -> Vec<VersionedRecord<R>> {
        let state = self.state.read();
        R::table(&state.tables)
            .rows
            .values()
            .filter(|v| filter(&v.payload))
            .skip(page.offset)
            .take(page.limit.get())
            .cloned()
            .collect()
    }

    /// Appends one audit event on its own.
    pub fn append_audit(&self, event: AuditDraft) -> Result<AuditEvent, StoreError> {
        let mut batch = WriteBatch::new();
        let ts = event.timestamp;
        batch.audit(event);
        Ok(self.commit(batch, ts)?.audit.remove(0))
    }

    pub fn audit_len(&self) -> usize {
        self.state.read().audit.len()
    }

    pub fn audit_log(&self) -> Vec<AuditEvent> {
        self.state.read().audit.clone()
    }

    /// A consistent read view; writers wait while it is held, so keep it
    /// short.
    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            state: self.state.read(),
        }
    }

    /// Validates every staged write against current versions and the ledger,
    /// then persists and applies all of it, or none of it.
    pub fn commit(&self, batch: WriteBatch, now: Timestamp) -> Result<CommitOutcome, StoreError> {
        let mut state = self.state.write();
        let state = &mut *state;

        let mut versions = Vec::with_capacity(batch.puts.len());
        for (i, (record, expected)) in batch.puts.iter().enumerate() {
            let kind = record.kind();
            let id = record.id();
            if !is_valid_id(id) {
                return Err(StoreError::InvalidId(id.to_owned()));
            }
            if batch.puts[..i]
                .iter()
                .any(|(other, _)| other.kind() == kind && other.id() == id)
            {
                return Err(StoreError::DuplicateId {
                    kind,
                    id: id.to_owned(),
                });
            }
            let found = record.current_version(&state.tables);
            let version = match (expected, found) {
                (None, None) => 1,
                (None, Some(_)) => {
                    return Err(StoreError::DuplicateId {
                        kind,
                        id: id.to_owned(),
                    })
                }
                (Some(e), Some(f)) if *e == f => f + 1,
                (e, f) => {
                    return Err(StoreError::VersionConflict {
                        kind,
                        id: id.to_owned(),
                        expected: *e,
                        found: f,
                    })
                }
            };
            versions.push(version);
        }

        let ledger_entry = match &batch.ledger {
            Some(draft) => {
                let status = match draft {
                    LedgerDraft::Accrue { sentence, .. } => batch
                        .puts
                        .iter()
                        .find_map(|(r, _)| match r {
                            AnyRecord::Sentence(s) if &s.id == sentence => Some(s.status),
                            _ => None,
                        })
                        .or_else(|| {
                            state
                                .tables
                                .sentences
                                .rows
                                .get(sentence.as_str())
                                .map(|v| v.payload.status)
                        }),
                    _ => None::<SentenceStatus>,
                };
                Some(state.ledger.prepare(draft, status, now)?)
            }
            None => None,
        };

        let first_seq = state.audit.len() as u64 + 1;
        let audit: Vec<AuditEvent> = batch
            .audit
            .into_iter()
            .enumerate()
            .map(|(i, draft)| draft.sequenced(first_seq + i as u64))
            .collect();

        if let Some(disk) = &mut state.disk {
            for ((record, _), version) in batch.puts.iter().zip(&versions) {
                let doc = record
                    .to_document(*version)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                let dir = disk.root.join(record.kind().dir_name());
                write_atomically(&dir, &format!("{}.json", record.id()), &doc, disk.fsync)?;
            }
            append_lines(&mut disk.audit, &audit, disk.fsync)?;
            if let Some(entry) = &ledger_entry {
                append_lines(&mut disk.ledger, std::slice::from_ref(entry), disk.fsync)?;
            }
        }

        for ((record, _), version) in batch.puts.into_iter().zip(&versions) {
            self.observe_id(record.id());
            record.install(&mut state.tables, *version);
        }
        state.audit.extend(audit.iter().cloned());
        if let Some(entry) = &ledger_entry {
            state.ledger.push(entry.clone())?;
        }

        Ok(CommitOutcome {
            versions,
            audit,
            ledger: ledger_entry,
        })
    }

    /// Stores an attachment payload and returns its location relative to
    /// the store root.
    pub fn put_blob(&self, id: &AttachmentId, bytes: &[u8]) -> Result<String, StoreError> {
        if !is_valid_id(id.as_str()) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        let payload_ref = format!("{BLOB_DIR}/{id}");
        match self.root() {
            Some(root) => {
                let fsync = self.state.read().disk.as_ref().is_some_and(|d| d.fsync);
                write_atomically(&root.join(BLOB_DIR), id.as_str(), bytes, fsync)?;
            }
            None => {
                self.blobs.lock().insert(id.clone(), bytes.to_vec());
            }
        }
        Ok(payload_ref)
    }

    pub fn get_blob(&self, id: &AttachmentId) -> Result<Vec<u8>, StoreError> {
        let not_found = || StoreError::NotFound {
            kind: EntityKind::Attachment,
            id: id.to_string(),
        };
        if !is_valid_id(id.as_str()) {
            return Err(not_found());
        }
        match self.root() {
            Some(root) => fs::read(root.join(BLOB_DIR).join(id.as_str())).map_err(|e| {
                if e.kind() == io::ErrorKind::NotFound {
                    not_found()
                } else {
                    StoreError::Io(e)
                }
            }),
            None => self.blobs.lock().get(id).cloned().ok_or_else(not_found),
        }
    }

    pub fn remove_blob(&self, id: &AttachmentId) {
        match self.root() {
            Some(root) => {
                let _ = fs::remove_file(root.join(BLOB_DIR).join(id.as_str()));
            }
            None => {
                self.blobs.lock().remove(id);
            }
        }
    }
}

impl Tables {
    pub fn get<R: Record>(&self, id: &str) -> Option<&VersionedRecord<R>> {
        R::table(self).rows.get(id)
    }
}

/// Read access to one consistent state of the store.
pub struct Snapshot<'a> {
    state: RwLockReadGuard<'a, State>,
}

impl Snapshot<'_> {
    pub fn get<R: Record>(&self, id: &str) -> Option<&VersionedRecord<R>> {
        self.state.tables.get::<R>(id)
    }

    /// All records of one kind in ascending id order.
    pub fn iter<R: Record>(&self) -> impl Iterator<Item = &VersionedRecord<R>> {
        R::table(&self.state.tables).rows.values()
    }

    pub fn count<R: Record>(&self) -> usize {
        R::table(&self.state.tables).rows.len()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.state.ledger
    }

    pub fn audit(&self) -> &[AuditEvent] {
        &self.state.audit
    }
}

fn write_atomically(dir: &Path, name: &str, bytes: &[u8], fsync: bool) -> io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        if fsync {
            file.sync_all()?;
        }
    }
    fs::rename(&tmp, dir.join(name))
}

fn append_lines<T: Serialize>(file: &mut File, items: &[T], fsync: bool) -> io::Result<()> {
    if items.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    if fsync {
        file.sync_data()?;
    }
    Ok(())
}

fn load_table<R: Record>(root: &Path, table: &mut Table<R>) -> Result<(), StoreError> {
    let dir = root.join(R::KIND.dir_name());
    for entry in fs::read_dir(&dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name.starts_with('.') && name.ends_with(".tmp") {
            // Interrupted write; the previous document is still in place.
            fs::remove_file(&path)?;
            continue;
        }
        let Some(id) = name.strip_suffix(".json") else {
            continue;
        };
        let bytes = fs::read(&path)?;
        let doc: VersionedRecord<R> =
            serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        if doc.payload.record_id() != id || doc.version == 0 {
            return Err(StoreError::Corrupt {
                path,
                reason: "file name, record id and version disagree".into(),
            });
        }
        table.rows.insert(id.to_owned(), doc);
    }
    Ok(())
}

/// Opens an append-only log, dropping a torn final line left by a crash.
fn open_log<T: DeserializeOwned>(path: &Path) -> Result<(File, Vec<T>), StoreError> {
    let mut file = OpenOptions::new()
        .read(true)
        .create(true)
        .append(true)
        .open(path)?;
    let mut items = Vec::new();
    let mut good_len = 0u64;
    let mut reader = BufReader::new(&mut file);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            break;
        }
        let item = serde_json::from_str(line.trim_end()).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", items.len() + 1),
        })?;
        items.push(item);
        good_len += n as u64;
    }
    drop(reader);
    if file.metadata()?.len() != good_len {
        file.set_len(good_len)?;
        file.seek(SeekFrom::End(0))?;
    }
    Ok((file, items))
}
