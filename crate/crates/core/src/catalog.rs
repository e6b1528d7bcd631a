// SPDX-License-Identifier: Apache-2.0

//! Product templates and the feature catalog.

use crate::error::{Error, Result};
use crate::ids::TemplateId;
use crate::model::{
    canonical_key, FeatureDefinition, Multiplicity, Origin, ProductTemplate, Role, UserRef,
    ValueKind,
};
use crate::service::{Olympus, State};

/// Key of the seeded multi-valued sensors feature.
pub const SENSORS_KEY: &str = "sensors";

fn builtin(
    name: &str,
    kind: ValueKind,
    choices: &[&str],
    multiplicity: Multiplicity,
) -> FeatureDefinition {
    let choices = (kind == ValueKind::Choice)
        .then(|| choices.iter().map(|c| (*c).to_owned()).collect());
    FeatureDefinition::new(name, kind, choices, multiplicity, Origin::Builtin, None)
        .expect("seed definitions are valid")
}

/// The twelve builtin features every fresh store starts with.
pub fn seed_features() -> Vec<FeatureDefinition> {
    use Multiplicity::*;
    use ValueKind::*;
    vec![
        builtin(
            "Connectivity",
            Choice,
            &[
                "Bluetooth",
                "Bluetooth 4.0",
                "Bluetooth LE",
                "Wi-Fi",
                "NFC",
                "Zigbee",
                "Cellular",
                "Ethernet",
            ],
            Multi,
        ),
        builtin(
            "Sensors",
            Choice,
            &[
                "accelerometer",
                "heart-rate",
                "GPS",
                "temperature",
                "pressure",
                "camera",
                "microphone",
            ],
            Multi,
        ),
        builtin("Battery Life", Numeric, &[], Single),
        builtin("Water Resistance", Boolean, &[], Single),
        builtin("Price", Numeric, &[], Single),
        builtin("Companion App", FreeText, &[], Multi),
        builtin("Voice Control", Boolean, &[], Single),
        builtin("Camera", Boolean, &[], Single),
        builtin("Microphone", Boolean, &[], Single),
        builtin(
            "Data Storage Location",
            Choice,
            &["on-device", "cloud", "companion phone"],
            Multi,
        ),
        builtin(
            "Firmware Update Method",
            Choice,
            &["over-the-air", "companion app", "USB", "not updatable"],
            Multi,
        ),
        builtin(
            "Display",
            Choice,
            &["OLED", "LCD", "LED", "E-ink", "none"],
            Single,
        ),
    ]
}

/// Adds a definition; never replaces one already present under the key.
pub(crate) fn add_feature(state: &mut State, def: FeatureDefinition) -> Result<FeatureDefinition> {
    if let Some(existing) = state.features.get(&def.key) {
        return Err(Error::DuplicateKey {
            key: def.key,
            existing_display_name: existing.display_name.clone(),
            origin: existing.origin.to_string(),
        });
    }
    state.features.insert(def.key.clone(), def.clone());
    Ok(def)
}

pub(crate) fn find_by_name<'a>(state: &'a State, name: &str) -> Option<&'a ProductTemplate> {
    let wanted = canonical_key(name);
    state
        .templates
        .values()
        .find(|t| t.canonical_name() == wanted)
}

impl Olympus {
    pub fn create_product_template(
        &self,
        name: &str,
        description: &str,
        brand: &str,
        admin: &UserRef,
    ) -> Result<ProductTemplate> {
        admin.require(Role::Admin)?;
        self.write(|tx| {
            let id: TemplateId = tx.mint(TemplateId::PREFIX);
            let template = ProductTemplate::new(id, name, description, brand, admin.id.clone())?;
            if let Some(existing) = find_by_name(tx.state, &template.name) {
                return Err(Error::DuplicateName {
                    existing_id: existing.id.to_string(),
                    existing_name: existing.name.clone(),
                });
            }
            tx.state
                .templates
                .insert(template.id.clone(), template.clone());
            Ok(template)
        })
    }

    /// Edits template details. Name and brand freeze once any draft targets
    /// the template; the description stays editable.
    pub fn update_template(
        &self,
        id: &TemplateId,
        name: Option<&str>,
        description: Option<&str>,
        brand: Option<&str>,
        admin: &UserRef,
    ) -> Result<ProductTemplate> {
        admin.require(Role::Admin)?;
        self.write(|tx| {
            let current = tx.state.template(id)?.clone();
            let drafted = tx.state.drafts.values().any(|d| &d.template_id == id);
            let renames = name.is_some_and(|n| n.trim() != current.name)
                || brand.is_some_and(|b| b.trim() != current.brand);
            if drafted && renames {
                return Err(Error::state(format!(
                    "template {id} already has drafts; name and brand are frozen"
                )));
            }
            let mut next = ProductTemplate::new(
                current.id.clone(),
                name.unwrap_or(&current.name),
                description.unwrap_or(&current.description),
                brand.unwrap_or(&current.brand),
                current.created_by.clone(),
            )?;
            next.status = current.status;
            if let Some(other) = find_by_name(tx.state, &next.name).filter(|t| t.id != *id) {
                return Err(Error::DuplicateName {
                    existing_id: other.id.to_string(),
                    existing_name: other.name.clone(),
                });
            }
            tx.state.templates.insert(id.clone(), next.clone());
            Ok(next)
        })
    }

    /// Templates sorted by name (case-insensitive).
    pub fn list_templates(&self) -> Vec<ProductTemplate> {
        let mut templates: Vec<_> = self.snapshot().templates.values().cloned().collect();
        templates.sort_by_key(|t| (t.canonical_name(), t.id.clone()));
        templates
    }

    pub fn define_builtin_feature(
        &self,
        display_name: &str,
        value_kind: ValueKind,
        choices: Option<Vec<String>>,
        multiplicity: Multiplicity,
        admin: &UserRef,
    ) -> Result<FeatureDefinition> {
        admin.require(Role::Admin)?;
        let def = FeatureDefinition::new(
            display_name,
            value_kind,
            choices,
            multiplicity,
            Origin::Builtin,
            None,
        )?;
        self.write(|tx| add_feature(tx.state, def))
    }

    /// Definitions sorted by key, optionally restricted to one origin.
    pub fn list_features(&self, filter: Option<Origin>) -> Vec<FeatureDefinition> {
        // BTreeMap iteration is already key-ordered.
        self.snapshot()
            .features
            .values()
            .filter(|d| filter.is_none_or(|origin| d.origin == origin))
            .cloned()
            .collect()
    }
}
