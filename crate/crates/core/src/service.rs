// SPDX-License-Identifier: Apache-2.0

//! The service object every transport talks to.
//!
//! State lives behind an `Arc` that readers clone without waiting on
//! writers. Writers are serialized: each mutation runs against a private
//! copy of the state, the copy is persisted, and only then swapped in. A
//! failed operation or a failed save therefore leaves no trace.

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::assets::AssetPolicy;
use crate::catalog;
use crate::comparison::Poll;
use crate::error::{Error, Result};
use crate::ids::{Clock, DraftId, IdSource, PollId, SessionId, TemplateId, UserId};
use crate::merge::{MasterProfile, MergeSession};
use crate::model::{content_hash, AssetRef, DraftProfile, FeatureDefinition, ProductTemplate, Role, UserRef};
use crate::storage::{MemoryStorage, Storage};

/// Everything the platform knows apart from users and asset bytes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct State {
    pub features: BTreeMap<String, FeatureDefinition>,
    pub templates: BTreeMap<TemplateId, ProductTemplate>,
    pub drafts: BTreeMap<DraftId, DraftProfile>,
    pub sessions: BTreeMap<SessionId, MergeSession>,
    pub masters: BTreeMap<TemplateId, MasterProfile>,
    pub polls: BTreeMap<PollId, Poll>,
    pub assets: BTreeMap<String, AssetRef>,
}

impl State {
    /// Fresh state holding only the builtin feature catalog.
    pub fn seeded() -> Self {
        let mut state = State::default();
        for def in catalog::seed_features() {
            state.features.insert(def.key.clone(), def);
        }
        state
    }

    pub fn template(&self, id: &TemplateId) -> Result<&ProductTemplate> {
        self.templates
            .get(id)
            .ok_or_else(|| Error::not_found("template", id))
    }

    pub fn draft(&self, id: &DraftId) -> Result<&DraftProfile> {
        self.drafts.get(id).ok_or_else(|| Error::not_found("draft", id))
    }

    pub fn session(&self, id: &SessionId) -> Result<&MergeSession> {
        self.sessions
            .get(id)
            .ok_or_else(|| Error::not_found("merge session", id))
    }

    /// Every minted id held in the state (group ids are derived, not minted).
    pub(crate) fn minted_ids(&self) -> impl Iterator<Item = &str> {
        let templates = self.templates.keys().map(|id| id.as_str());
        let drafts = self.drafts.values().flat_map(|d| {
            let claims = d.claims.iter().flat_map(|c| {
                std::iter::once(c.id.as_str()).chain(c.evidence.iter().map(|e| e.id.as_str()))
            });
            std::iter::once(d.id.as_str()).chain(claims)
        });
        let sessions = self.sessions.keys().map(|id| id.as_str());
        let polls = self.polls.keys().map(|id| id.as_str());
        templates.chain(drafts).chain(sessions).chain(polls)
    }
}

#[derive(Clone, Debug)]
pub struct Config {
    pub assets: AssetPolicy,
    pub ids: IdSource,
    pub clock: Clock,
    /// Builtin features loaded into an empty store.
    pub seed_catalog: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            assets: AssetPolicy::default(),
            ids: IdSource::Random,
            clock: Clock::System,
            seed_catalog: true,
        }
    }
}

impl Config {
    /// Sequential ids and a stepping clock, for reproducible runs.
    pub fn deterministic() -> Self {
        Config {
            ids: IdSource::sequential(),
            clock: Clock::stepping(),
            ..Config::default()
        }
    }
}

/// Registered users and the hashes of their bearer tokens.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserDirectory {
    pub users: BTreeMap<UserId, UserRef>,
    /// SHA-256 of the token → user.
    pub tokens: BTreeMap<String, UserId>,
}

impl UserDirectory {
    pub fn by_name(&self, display_name: &str) -> Option<&UserRef> {
        self.users
            .values()
            .find(|u| u.display_name == display_name)
    }
}

/// Mutable view handed to write operations.
pub struct Tx<'a> {
    pub state: &'a mut State,
    pub(crate) ids: &'a mut IdSource,
    pub(crate) clock: &'a mut Clock,
    pub(crate) storage: &'a dyn Storage,
    pub(crate) assets: &'a AssetPolicy,
}

impl Tx<'_> {
    /// Advances the id source past every id in the current state.
    pub(crate) fn observe_state_ids(&mut self) {
        for id in self.state.minted_ids() {
            self.ids.observe(id);
        }
    }

    pub fn mint<I: From<String>>(&mut self, prefix: &str) -> I {
        I::from(self.ids.mint(prefix))
    }

    pub fn now(&mut self) -> chrono::DateTime<chrono::Utc> {
        self.clock.now()
    }
}

pub struct Olympus {
    state: RwLock<Arc<State>>,
    writer: Mutex<()>,
    users: RwLock<UserDirectory>,
    ids: Mutex<IdSource>,
    clock: Mutex<Clock>,
    storage: Box<dyn Storage>,
    config: Config,
}

impl Olympus {
    /// Opens the service over `storage`, seeding the builtin catalog on first use.
    pub fn open(storage: Box<dyn Storage>, config: Config) -> Result<Self> {
        let state = match storage.load_state()? {
            Some(doc) => State::from_document(doc)?,
            None => {
                let state = if config.seed_catalog {
                    State::seeded()
                } else {
                    State::default()
                };
                storage.save_state(&state.to_document())?;
                state
            }
        };
        let users = storage.load_users()?.unwrap_or_default();
        let mut ids = config.ids.clone();
        for id in state.minted_ids().chain(users.users.keys().map(|u| u.as_str())) {
            ids.observe(id);
        }
        Ok(Olympus {
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(()),
            users: RwLock::new(users),
            ids: Mutex::new(ids),
            clock: Mutex::new(config.clock.clone()),
            storage,
            config,
        })
    }

    pub fn in_memory(config: Config) -> Self {
        Self::open(Box::new(MemoryStorage::default()), config)
            .expect("in-memory storage cannot fail to open")
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Committed snapshot; never blocks on writers.
    pub fn snapshot(&self) -> Arc<State> {
        self.state.read().clone()
    }

    pub(crate) fn storage(&self) -> &dyn Storage {
        &*self.storage
    }

    /// Runs `op` atomically: on error nothing changes, on success the new
    /// state is persisted before it becomes visible.
    pub fn write<T>(&self, op: impl FnOnce(&mut Tx<'_>) -> Result<T>) -> Result<T> {
        let _writer = self.writer.lock();
        let mut next = State::clone(&self.snapshot());
        let mut ids = self.ids.lock();
        let mut clock = self.clock.lock();
        let out = {
            let mut tx = Tx {
                state: &mut next,
                ids: &mut ids,
                clock: &mut clock,
                storage: &*self.storage,
                assets: &self.config.assets,
            };
            op(&mut tx)?
        };
        self.storage.save_state(&next.to_document())?;
        *self.state.write() = Arc::new(next);
        Ok(out)
    }

    pub fn users(&self) -> UserDirectory {
        self.users.read().clone()
    }

    /// Creates the user if the name is new, otherwise updates its roles.
    pub fn register_user(&self, display_name: &str, roles: &[Role]) -> Result<UserRef> {
        self.issue(display_name, roles, false).map(|(user, _)| user)
    }

    /// Registers (or updates) the user and returns a fresh bearer token.
    /// Only the token's hash is kept.
    pub fn issue_token(&self, display_name: &str, roles: &[Role]) -> Result<(UserRef, String)> {
        let (user, token) = self.issue(display_name, roles, true)?;
        Ok((user, token.expect("token requested")))
    }

    fn issue(
        &self,
        display_name: &str,
        roles: &[Role],
        with_token: bool,
    ) -> Result<(UserRef, Option<String>)> {
        if roles.is_empty() {
            return Err(Error::EmptyRoles);
        }
        let mut users = self.users.write();
        if let Some(on_disk) = self.storage.load_users()? {
            *users = on_disk;
        }
        let mut next = users.clone();
        let id = match next.by_name(display_name.trim()) {
            Some(existing) => existing.id.clone(),
            None => UserId::new(self.ids.lock().mint(UserId::PREFIX)),
        };
        let user = UserRef::new(id.clone(), display_name.trim(), roles.iter().copied())?;
        next.users.insert(id.clone(), user.clone());
        let token = with_token.then(|| {
            let mut raw = [0u8; 24];
            rand::rng().fill_bytes(&mut raw);
            let token = format!("olp_{}", hex::encode(raw));
            next.tokens.insert(content_hash(token.as_bytes()), id);
            token
        });
        self.storage.save_users(&next)?;
        *users = next;
        Ok((user, token))
    }

    /// Resolves a bearer token, re-reading the directory once on a miss so
    /// tokens issued by another process are picked up.
    pub fn authenticate(&self, token: &str) -> Result<UserRef> {
        let hash = content_hash(token.trim().as_bytes());
        let lookup = |dir: &UserDirectory| {
            dir.tokens
                .get(&hash)
                .and_then(|id| dir.users.get(id))
                .cloned()
        };
        if let Some(user) = lookup(&self.users.read()) {
            return Ok(user);
        }
        if let Some(on_disk) = self.storage.load_users()? {
            let mut users = self.users.write();
            *users = on_disk;
            if let Some(user) = lookup(&users) {
                return Ok(user);
            }
        }
        Err(Error::Unauthenticated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_service_is_seeded_once() {
        let storage = MemoryStorage::default();
        let svc = Olympus::open(Box::new(storage.clone()), Config::default()).unwrap();
        assert_eq!(svc.snapshot().features.len(), 12);
        drop(svc);
        let again = Olympus::open(Box::new(storage), Config::default()).unwrap();
        assert_eq!(again.snapshot().features.len(), 12);
    }

    #[test]
    fn tokens_resolve_to_their_user() {
        let svc = Olympus::in_memory(Config::default());
        let (user, token) = svc.issue_token("YG1", &[Role::CrowdWorker, Role::Student]).unwrap();
        assert_eq!(svc.authenticate(&token).unwrap(), user);
        assert_eq!(svc.authenticate("olp_nope").unwrap_err().code(), "unauthenticated");
        assert_eq!(svc.issue_token("P1", &[]).unwrap_err().code(), "empty_roles");
    }

    #[test]
    fn reissuing_keeps_the_user_and_old_tokens() {
        let svc = Olympus::in_memory(Config::default());
        let (first, t1) = svc.issue_token("P2", &[Role::Student]).unwrap();
        let (second, t2) = svc.issue_token("P2", &[Role::Student, Role::Admin]).unwrap();
        assert_eq!(first.id, second.id);
        assert!(svc.authenticate(&t1).unwrap().has_role(Role::Admin));
        assert_ne!(t1, t2);
    }

    #[test]
    fn failed_write_leaves_state_untouched() {
        let svc = Olympus::in_memory(Config::default());
        let before = svc.snapshot();
        let res: Result<()> = svc.write(|tx| {
            tx.state.features.clear();
            Err(Error::state("boom"))
        });
        assert!(res.is_err());
        assert_eq!(*svc.snapshot(), *before);
    }
}
