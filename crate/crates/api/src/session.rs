//! Bearer-token sessions.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use corpusforge_core::clock::{Clock, Timestamp};
use corpusforge_core::domain::{Role, User, UserId};

pub const DEFAULT_TTL_SECONDS: u64 = 24 * 60 * 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub token: String,
    pub user_id: UserId,
    pub role: Role,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("missing or unknown bearer token")]
    Unauthenticated,
    #[error("session has expired")]
    Expired,
    #[error("this endpoint requires the {required} role")]
    Forbidden { required: Role },
}

pub struct Sessions {
    clock: Arc<dyn Clock>,
    ttl_seconds: u64,
    by_token: RwLock<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(clock: Arc<dyn Clock>, ttl_seconds: u64) -> Self {
        Sessions {
            clock,
            ttl_seconds,
            by_token: RwLock::new(HashMap::new()),
        }
    }

    /// Issues a fresh 256-bit token for `user`.
    pub fn issue(&self, user: &User) -> Session {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        let now = self.clock.now();
        let session = Session {
            token: hex::encode(bytes),
            user_id: user.id.clone(),
            role: user.role,
            issued_at: now,
            expires_at: now.plus_seconds(self.ttl_seconds),
        };
        self.by_token
            .write()
            .insert(session.token.clone(), session.clone());
        session
    }

    /// Resolves a token and checks the role, if one is required. Expired
    /// sessions are dropped on sight.
    pub fn authorize(&self, token: &str, required: Option<Role>) -> Result<Session, AuthError> {
        let session = self
            .by_token
            .read()
            .get(token)
            .cloned()
            .ok_or(AuthError::Unauthenticated)?;
        if self.clock.now() >= session.expires_at {
            self.by_token.write().remove(token);
            return Err(AuthError::Expired);
        }
        match required {
            Some(role) if role != session.role => Err(AuthError::Forbidden { required: role }),
            _ => Ok(session),
        }
    }

    pub fn revoke_user(&self, user: &UserId) {
        self.by_token.write().retain(|_, s| &s.user_id != user);
    }

    pub fn len(&self) -> usize {
        self.by_token.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
