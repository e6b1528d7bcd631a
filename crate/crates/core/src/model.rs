// SPDX-License-Identifier: Apache-2.0

//! Shared domain types.
//!
//! Constructors enforce each type's invariants and fail with
//! [`Error::Validation`] naming the offending field. Values deserialized
//! from the interchange document are re-checked through the `validate`
//! methods before they enter the service.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ids::{ClaimId, DraftId, EvidenceId, TemplateId, UserId};

/// Derives the canonical key of a display name: trimmed, lowercased,
/// whitespace runs collapsed to a single hyphen.
///
/// `"Heart  Rate   Sensor"` becomes `"heart-rate-sensor"`.
pub fn canonical_key(display_name: &str) -> String {
    display_name
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

/// Comparison form of a claim value: trimmed and lowercased.
pub fn normalize_value(value: &str) -> String {
    value.trim().to_lowercase()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    CrowdWorker,
    Admin,
    Student,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::CrowdWorker, Role::Admin, Role::Student];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::CrowdWorker => "crowd_worker",
            Role::Admin => "admin",
            Role::Student => "student",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "crowd_worker" | "worker" => Ok(Role::CrowdWorker),
            "admin" => Ok(Role::Admin),
            "student" => Ok(Role::Student),
            other => Err(Error::validation("roles", format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRef {
    pub id: UserId,
    pub display_name: String,
    pub roles: BTreeSet<Role>,
}

impl UserRef {
    pub fn new(
        id: UserId,
        display_name: impl Into<String>,
        roles: impl IntoIterator<Item = Role>,
    ) -> Result<Self> {
        let user = UserRef {
            id,
            display_name: display_name.into(),
            roles: roles.into_iter().collect(),
        };
        user.validate()?;
        Ok(user)
    }

    pub fn validate(&self) -> Result<()> {
        if self.roles.is_empty() {
            return Err(Error::EmptyRoles);
        }
        if self.display_name.trim().is_empty() {
            return Err(Error::validation("display_name", "must not be empty"));
        }
        Ok(())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn require(&self, role: Role) -> Result<()> {
        if self.has_role(role) {
            Ok(())
        } else {
            Err(Error::Forbidden { required: role })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateStatus {
    Open,
    Merged,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductTemplate {
    pub id: TemplateId,
    pub name: String,
    pub description: String,
    pub brand: String,
    pub created_by: UserId,
    pub status: TemplateStatus,
}

impl ProductTemplate {
    pub fn new(
        id: TemplateId,
        name: &str,
        description: &str,
        brand: &str,
        created_by: UserId,
    ) -> Result<Self> {
        let template = ProductTemplate {
            id,
            name: name.trim().to_owned(),
            description: description.trim().to_owned(),
            brand: brand.trim().to_owned(),
            created_by,
            status: TemplateStatus::Open,
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        Ok(())
    }

    /// Uniqueness key for the catalog.
    pub fn canonical_name(&self) -> String {
        canonical_key(&self.name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Choice,
    FreeText,
    Numeric,
    Boolean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    Single,
    Multi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Builtin,
    Custom,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Builtin => "builtin",
            Origin::Custom => "custom",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDefinition {
    pub key: String,
    pub display_name: String,
    pub value_kind: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub multiplicity: Multiplicity,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_by: Option<UserId>,
}

impl FeatureDefinition {
    pub fn new(
        display_name: &str,
        value_kind: ValueKind,
        choices: Option<Vec<String>>,
        multiplicity: Multiplicity,
        origin: Origin,
        created_by: Option<UserId>,
    ) -> Result<Self> {
        let choices = choices.map(|list| {
            list.into_iter()
                .map(|c| c.trim().to_owned())
                .collect::<Vec<_>>()
        });
        let definition = FeatureDefinition {
            key: canonical_key(display_name),
            display_name: display_name.trim().to_owned(),
            value_kind,
            choices,
            multiplicity,
            origin,
            created_by,
        };
        definition.validate()?;
        Ok(definition)
    }

    pub fn validate(&self) -> Result<()> {
        if self.key.is_empty() {
            return Err(Error::validation("display_name", "must not be empty"));
        }
        if self.key != canonical_key(&self.display_name) {
            return Err(Error::validation(
                "key",
                format!(
                    "{:?} is not the canonical key of {:?}",
                    self.key, self.display_name
                ),
            ));
        }
        match (self.value_kind, &self.choices) {
            (ValueKind::Choice, None) => {
                return Err(Error::validation(
                    "choices",
                    "choice features need at least one choice",
                ))
            }
            (ValueKind::Choice, Some(list)) => {
                if list.is_empty() {
                    return Err(Error::validation(
                        "choices",
                        "choice features need at least one choice",
                    ));
                }
                let mut seen = BTreeSet::new();
                for choice in list {
                    if choice.trim().is_empty() {
                        return Err(Error::validation("choices", "choices must not be empty"));
                    }
                    if !seen.insert(normalize_value(choice)) {
                        return Err(Error::validation(
                            "choices",
                            format!("duplicate choice {choice:?}"),
                        ));
                    }
                }
            }
            (_, Some(_)) => {
                return Err(Error::validation(
                    "choices",
                    "only choice features carry a choice list",
                ))
            }
            (_, None) => {}
        }
        match (self.origin, &self.created_by) {
            (Origin::Custom, None) => Err(Error::validation(
                "created_by",
                "custom features record their creator",
            )),
            (Origin::Builtin, Some(_)) => Err(Error::validation(
                "created_by",
                "builtin features have no creator",
            )),
            _ => Ok(()),
        }
    }

    /// Checks `raw` against the value kind and returns the stored text form.
    ///
    /// Choice values take the definition's spelling, numbers are rendered
    /// canonically and booleans lowercased.
    pub fn validate_value(&self, raw: &str) -> Result<String> {
        let trimmed = raw.trim();
        let invalid = |reason: &str| Error::InvalidValue {
            key: self.key.clone(),
            value: raw.to_owned(),
            reason: reason.to_owned(),
        };
        if trimmed.is_empty() {
            return Err(invalid("value must not be empty"));
        }
        match self.value_kind {
            ValueKind::Choice => {
                let wanted = normalize_value(trimmed);
                self.choices
                    .iter()
                    .flatten()
                    .find(|choice| normalize_value(choice) == wanted)
                    .cloned()
                    .ok_or_else(|| invalid("not one of the allowed choices"))
            }
            ValueKind::Numeric => match trimmed.parse::<f64>() {
                Ok(number) if number.is_finite() => Ok(number.to_string()),
                _ => Err(invalid("expected a number")),
            },
            ValueKind::Boolean => match trimmed.to_lowercase().as_str() {
                "true" => Ok("true".to_owned()),
                "false" => Ok("false".to_owned()),
                _ => Err(invalid("expected true or false")),
            },
            ValueKind::FreeText => Ok(trimmed.to_owned()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Packaging,
    WebPage,
    PromoVideo,
    Advertisement,
    AppUi,
    TermsAndConditions,
    Leaflet,
    Other,
}

/// Where inside a source the supporting information sits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EvidenceLocator {
    DocumentPage { page: u32 },
    VideoTimestamp { seconds: f64 },
    Url { link: String },
    TextQuote { quote: String },
}

impl EvidenceLocator {
    pub fn validate(&self) -> Result<()> {
        match self {
            EvidenceLocator::DocumentPage { page } if *page < 1 => {
                Err(Error::validation("locator.page", "pages start at 1"))
            }
            EvidenceLocator::VideoTimestamp { seconds } if !(seconds.is_finite() && *seconds >= 0.0) => Err(
                Error::validation("locator.seconds", "must be a non-negative number"),
            ),
            EvidenceLocator::Url { link } => validate_absolute_url("locator.link", link),
            EvidenceLocator::TextQuote { quote } if quote.trim().is_empty() => {
                Err(Error::validation("locator.quote", "must not be empty"))
            }
            _ => Ok(()),
        }
    }
}

fn validate_absolute_url(field: &str, link: &str) -> Result<()> {
    match url::Url::parse(link) {
        Ok(parsed) if parsed.has_host() || parsed.scheme() == "file" => Ok(()),
        Ok(_) => Err(Error::validation(field, "address has no host")),
        Err(err) => Err(Error::validation(field, format!("not an absolute address: {err}"))),
    }
}

/// Content-addressed reference to stored asset bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRef {
    /// Lowercase hex SHA-256 of the bytes.
    pub content_hash: String,
    pub media_type: String,
    pub size_bytes: u64,
}

impl AssetRef {
    pub fn for_bytes(bytes: &[u8], media_type: &str) -> Self {
        AssetRef {
            content_hash: content_hash(bytes),
            media_type: media_type.to_owned(),
            size_bytes: bytes.len() as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let well_formed = self.content_hash.len() == 64
            && self
                .content_hash
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(Error::validation(
                "content_hash",
                format!("{:?} is not a hex SHA-256 digest", self.content_hash),
            ));
        }
        Ok(())
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub id: EvidenceId,
    pub source_kind: SourceKind,
    pub locator: EvidenceLocator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<AssetRef>,
    /// External address of the source when no asset was uploaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default)]
    pub note: String,
}

impl Evidence {
    pub fn new(
        id: EvidenceId,
        source_kind: SourceKind,
        locator: EvidenceLocator,
        asset: Option<AssetRef>,
        link: Option<String>,
        note: &str,
    ) -> Result<Self> {
        let evidence = Evidence {
            id,
            source_kind,
            locator,
            asset,
            link: link.map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()),
            note: note.trim().to_owned(),
        };
        evidence.validate()?;
        Ok(evidence)
    }

    pub fn validate(&self) -> Result<()> {
        self.locator.validate()?;
        if let Some(link) = &self.link {
            validate_absolute_url("link", link)?;
        }
        if let Some(asset) = &self.asset {
            asset.validate()?;
        }
        let timestamped = matches!(self.locator, EvidenceLocator::VideoTimestamp { .. });
        if self.source_kind == SourceKind::PromoVideo
            && timestamped
            && self.asset.is_none()
            && self.link.is_none()
        {
            return Err(Error::validation(
                "asset",
                "a timestamped promo video needs an uploaded asset or an external link",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureClaim {
    pub id: ClaimId,
    pub feature_key: String,
    pub value: String,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
    pub author: UserId,
    pub draft_id: DraftId,
}

impl FeatureClaim {
    pub fn new(
        id: ClaimId,
        definition: &FeatureDefinition,
        raw_value: &str,
        author: UserId,
        draft_id: DraftId,
    ) -> Result<Self> {
        Ok(FeatureClaim {
            id,
            feature_key: definition.key.clone(),
            value: definition.validate_value(raw_value)?,
            evidence: Vec::new(),
            author,
            draft_id,
        })
    }

    /// Grouping key used for dedup and merging.
    pub fn group_key(&self) -> (String, String) {
        (self.feature_key.clone(), normalize_value(&self.value))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftStatus {
    InProgress,
    Submitted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DraftProfile {
    pub id: DraftId,
    pub template_id: TemplateId,
    pub worker: UserId,
    #[serde(default)]
    pub claims: Vec<FeatureClaim>,
    pub status: DraftStatus,
    /// Bumped on every write; stale writers get a version conflict.
    #[serde(default)]
    pub version: u64,
}

impl DraftProfile {
    pub fn new(id: DraftId, template_id: TemplateId, worker: UserId) -> Self {
        DraftProfile {
            id,
            template_id,
            worker,
            claims: Vec::new(),
            status: DraftStatus::InProgress,
            version: 0,
        }
    }

    pub fn is_submitted(&self) -> bool {
        self.status == DraftStatus::Submitted
    }

    pub fn claim(&self, id: &ClaimId) -> Option<&FeatureClaim> {
        self.claims.iter().find(|c| &c.id == id)
    }

    /// Claims that carry no evidence yet.
    pub fn unevidenced_claims(&self) -> Vec<ClaimId> {
        self.claims
            .iter()
            .filter(|c| c.evidence.is_empty())
            .map(|c| c.id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn connectivity() -> FeatureDefinition {
        FeatureDefinition::new(
            "Connectivity",
            ValueKind::Choice,
            Some(vec!["Bluetooth 4.0".into(), "Wi-Fi".into(), "NFC".into(), "Zigbee".into()]),
            Multiplicity::Multi,
            Origin::Builtin,
            None,
        )
        .unwrap()
    }

    #[test]
    fn canonical_key_examples() {
        assert_eq!(canonical_key("Water Resistance"), "water-resistance");
        assert_eq!(canonical_key("Heart  Rate   Sensor"), "heart-rate-sensor");
        assert_eq!(canonical_key("  Sleep \t Tracking "), "sleep-tracking");
        assert_eq!(canonical_key("   "), "");
    }

    #[test]
    fn user_needs_a_role() {
        let err = UserRef::new("usr_1".into(), "P1", []).unwrap_err();
        assert_eq!(err.code(), "empty_roles");
        let all = UserRef::new("usr_2".into(), "YG1", Role::ALL).unwrap();
        assert!(Role::ALL.iter().all(|r| all.has_role(*r)));
    }

    #[test]
    fn template_name_is_required() {
        let err = ProductTemplate::new("tpl_1".into(), "  ", "", "", "usr_1".into()).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "name"));
    }

    #[test]
    fn choice_definition_needs_choices() {
        let err = FeatureDefinition::new(
            "Display",
            ValueKind::Choice,
            Some(vec![]),
            Multiplicity::Single,
            Origin::Builtin,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "choices"));
        assert!(FeatureDefinition::new(
            "Display",
            ValueKind::Choice,
            None,
            Multiplicity::Single,
            Origin::Builtin,
            None
        )
        .is_err());
        assert!(FeatureDefinition::new(
            "Price",
            ValueKind::Numeric,
            Some(vec!["1".into()]),
            Multiplicity::Single,
            Origin::Builtin,
            None
        )
        .is_err());
    }

    #[test]
    fn custom_features_record_creator() {
        assert!(FeatureDefinition::new(
            "Sleep Tracking",
            ValueKind::Boolean,
            None,
            Multiplicity::Single,
            Origin::Custom,
            None
        )
        .is_err());
    }

    #[test]
    fn values_are_checked_against_kind() {
        let def = connectivity();
        assert_eq!(def.validate_value(" bluetooth 4.0 ").unwrap(), "Bluetooth 4.0");
        assert_eq!(def.validate_value("Carrier pigeon").unwrap_err().code(), "invalid_value");

        let battery = FeatureDefinition::new(
            "Battery Life",
            ValueKind::Numeric,
            None,
            Multiplicity::Single,
            Origin::Builtin,
            None,
        )
        .unwrap();
        assert_eq!(battery.validate_value("banana").unwrap_err().code(), "invalid_value");
        assert_eq!(battery.validate_value("120.0").unwrap(), "120");
        assert!(battery.validate_value("NaN").is_err());

        let water = FeatureDefinition::new(
            "Water Resistance",
            ValueKind::Boolean,
            None,
            Multiplicity::Single,
            Origin::Custom,
            Some("usr_2".into()),
        )
        .unwrap();
        assert_eq!(water.validate_value("TRUE").unwrap(), "true");
        assert!(water.validate_value("yes").is_err());
    }

    #[test]
    fn locator_bounds() {
        assert!(EvidenceLocator::DocumentPage { page: 0 }.validate().is_err());
        assert!(EvidenceLocator::DocumentPage { page: 1 }.validate().is_ok());
        assert!(EvidenceLocator::VideoTimestamp { seconds: -0.5 }.validate().is_err());
        assert!(EvidenceLocator::VideoTimestamp { seconds: 0.0 }.validate().is_ok());
        assert!(EvidenceLocator::Url { link: "fitbit.com/charge".into() }.validate().is_err());
        assert!(EvidenceLocator::Url { link: "https://www.fitbit.com/charge".into() }
            .validate()
            .is_ok());
        assert!(EvidenceLocator::TextQuote { quote: " ".into() }.validate().is_err());
    }

    #[test]
    fn timestamped_promo_video_needs_a_source() {
        let locator = EvidenceLocator::VideoTimestamp { seconds: 42.0 };
        let bare = Evidence::new("evd_1".into(), SourceKind::PromoVideo, locator.clone(), None, None, "");
        assert!(matches!(bare, Err(Error::Validation { ref field, .. }) if field == "asset"));
        let linked = Evidence::new(
            "evd_2".into(),
            SourceKind::PromoVideo,
            locator.clone(),
            None,
            Some("https://video.example/fitbit".into()),
            "",
        );
        assert!(linked.is_ok());
        let uploaded = Evidence::new(
            "evd_3".into(),
            SourceKind::PromoVideo,
            locator,
            Some(AssetRef::for_bytes(b"frames", "video/mp4")),
            None,
            "demo underwater",
        );
        assert!(uploaded.is_ok());
    }

    #[test]
    fn asset_refs_follow_content() {
        let a = AssetRef::for_bytes(b"same bytes", "application/pdf");
        let b = AssetRef::for_bytes(b"same bytes", "application/pdf");
        let c = AssetRef::for_bytes(b"other bytes", "application/pdf");
        assert_eq!(a, b);
        assert_ne!(a.content_hash, c.content_hash);
        assert_eq!(a.size_bytes, 10);
        a.validate().unwrap();
    }

    #[test]
    fn claim_round_trips_through_json() {
        let def = connectivity();
        let mut claim =
            FeatureClaim::new("clm_1".into(), &def, "Wi-Fi", "usr_1".into(), "drf_1".into()).unwrap();
        claim.evidence.push(
            Evidence::new(
                "evd_1".into(),
                SourceKind::Packaging,
                EvidenceLocator::DocumentPage { page: 3 },
                Some(AssetRef::for_bytes(b"%PDF", "application/pdf")),
                None,
                "box side",
            )
            .unwrap(),
        );
        let text = serde_json::to_string(&claim).unwrap();
        let back: FeatureClaim = serde_json::from_str(&text).unwrap();
        assert_eq!(back, claim);
    }

    proptest! {
        #[test]
        fn canonical_key_is_idempotent(s in "[ a-zA-Z0-9\\t-]{0,24}") {
            let once = canonical_key(&s);
            prop_assert_eq!(canonical_key(&once), once.clone());
            prop_assert!(!once.chars().any(char::is_whitespace));
        }

        #[test]
        fn asset_ref_equality_tracks_bytes(a in proptest::collection::vec(any::<u8>(), 0..64),
                                           b in proptest::collection::vec(any::<u8>(), 0..64)) {
            let ra = AssetRef::for_bytes(&a, "image/png");
            let rb = AssetRef::for_bytes(&b, "image/png");
            prop_assert_eq!(ra == rb, a == b);
        }
    }
}
