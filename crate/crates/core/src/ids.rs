// SPDX-License-Identifier: Apache-2.0

//! Opaque identifiers and the sources that mint them.

use std::fmt;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
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
            fn from(raw: &str) -> Self {
                Self(raw.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(raw: String) -> Self {
                Self(raw)
            }
        }
    };
}

id_type!(UserId, "usr");
id_type!(TemplateId, "tpl");
id_type!(DraftId, "drf");
id_type!(ClaimId, "clm");
id_type!(EvidenceId, "evd");
id_type!(SessionId, "mrg");
id_type!(
    /// Derived from the (feature key, normalized value) pair, never minted.
    GroupId,
    "grp"
);
id_type!(PollId, "pol");

/// Mints fresh identifiers.
#[derive(Debug, Clone)]
pub enum IdSource {
    /// `prefix_<uuid v4 simple>`.
    Random,
    /// `prefix_000001`, `prefix_000002`, ... shared across prefixes.
    Sequential { next: u64 },
}

impl IdSource {
    pub fn sequential() -> Self {
        IdSource::Sequential { next: 1 }
    }

    pub fn mint(&mut self, prefix: &str) -> String {
        match self {
            IdSource::Random => format!("{prefix}_{}", uuid::Uuid::new_v4().simple()),
            IdSource::Sequential { next } => {
                let id = format!("{prefix}_{:06}", *next);
                *next += 1;
                id
            }
        }
    }

    /// Records an id that already exists so a sequential source never
    /// mints it again.
    pub fn observe(&mut self, id: &str) {
        if let IdSource::Sequential { next } = self {
            let counter = id.rsplit_once('_').and_then(|(_, n)| n.parse::<u64>().ok());
            if let Some(n) = counter.filter(|n| *n >= *next) {
                *next = n + 1;
            }
        }
    }
}

/// Source of timestamps for decisions and rankings.
#[derive(Debug, Clone)]
pub enum Clock {
    System,
    /// Starts at `at` and advances by `step` on every read.
    Stepping { at: DateTime<Utc>, step: Duration },
}

impl Clock {
    /// A stepping clock starting at 2019-06-01T09:00:00Z with one-second ticks.
    pub fn stepping() -> Self {
        Clock::Stepping {
            at: Utc.with_ymd_and_hms(2019, 6, 1, 9, 0, 0).unwrap(),
            step: Duration::seconds(1),
        }
    }

    pub fn now(&mut self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Stepping { at, step } => {
                let now = *at;
                *at += *step;
                now
            }
        }
    }
}
