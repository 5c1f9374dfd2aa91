#![allow(dead_code)]

use std::sync::Arc;

use corpusforge_core::clock::{ManualClock, Timestamp};
use corpusforge_core::domain::{Role, User, UserId};
use corpusforge_core::invariants;
use corpusforge_core::store::Store;
use corpusforge_core::workflow::{ImportItem, NewUser, Platform, PlatformConfig};

pub const START: Timestamp = Timestamp::from_millis(1_767_225_600_000);

pub struct Fixture {
    pub platform: Platform,
    pub clock: Arc<ManualClock>,
    pub admin: User,
    pub translators: Vec<User>,
    pub reviewers: Vec<User>,
}

impl Fixture {
    pub fn new(translators: usize, reviewers: usize) -> Self {
        Fixture::with_store(Store::in_memory(), translators, reviewers)
    }

    pub fn with_store(store: Store, translators: usize, reviewers: usize) -> Self {
        let clock = Arc::new(ManualClock::new(START));
        let platform = Platform::new(Arc::new(store), clock.clone(), PlatformConfig::default());
        let add = |id: String, role| {
            platform
                .provision_user(
                    &UserId::new("cli"),
                    NewUser {
                        display_name: id.to_uppercase(),
                        id: UserId::new(id),
                        role,
                        secret: "pw".into(),
                    },
                )
                .unwrap()
        };
        let admin = add("admin".into(), Role::Admin);
        let translators = (0..translators).map(|i| add(format!("tr{i}"), Role::Translator)).collect();
        let reviewers = (0..reviewers).map(|i| add(format!("rv{i}"), Role::Reviewer)).collect();
        Fixture { platform, clock, admin, translators, reviewers }
    }

    pub fn import(&self, batch: &str, texts: &[&str]) {
        let items: Vec<ImportItem> = texts.iter().map(|t| ImportItem::text(*t)).collect();
        self.platform.import_batch(&self.admin, batch, &items).unwrap();
    }

    pub fn assert_consistent(&self) {
        let violations = invariants::check(&self.platform.store().snapshot());
        assert!(violations.is_empty(), "{violations:#?}");
    }
}
