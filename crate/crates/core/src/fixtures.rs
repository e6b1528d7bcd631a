// SPDX-License-Identifier: Apache-2.0

//! The six-device seed scenario.
//!
//! Profiles are built through the ordinary operations: two workers draft
//! each device, an administrator merges the drafts and finalizes a master.
//! Feature values are plausible sample data. The checked-in fixture under
//! `fixtures/six-devices` is this scenario exported with a deterministic
//! configuration.

use crate::error::Result;
use crate::ids::TemplateId;
use crate::investigation::EvidenceInput;
use crate::merge::{Classification, MergeAction};
use crate::model::{EvidenceLocator, Role, SourceKind, UserRef};
use crate::service::{Config, Olympus};

pub const DEVICE_NAMES: [&str; 6] = [
    "Amazon Echo",
    "Beddit",
    "Fitbit",
    "Google Home",
    "June Oven",
    "Oral-B Smart toothbrush",
];

struct Device {
    name: &'static str,
    brand: &'static str,
    description: &'static str,
    site: &'static str,
    claims: &'static [(&'static str, &'static str)],
}

const DEVICES: [Device; 6] = [
    Device {
        name: "Amazon Echo",
        brand: "Amazon",
        description: "voice-controlled smart speaker",
        site: "https://www.amazon.com/echo",
        claims: &[
            ("connectivity", "Wi-Fi"),
            ("connectivity", "Bluetooth"),
            ("sensors", "microphone"),
            ("voice-control", "true"),
            ("microphone", "true"),
            ("camera", "false"),
            ("display", "LED"),
            ("data-storage-location", "cloud"),
            ("firmware-update-method", "over-the-air"),
            ("companion-app", "Amazon Alexa"),
            ("price", "99.99"),
        ],
    },
    Device {
        name: "Beddit",
        brand: "Beddit",
        description: "under-sheet sleep monitor",
        site: "https://www.beddit.com",
        claims: &[
            ("connectivity", "Bluetooth LE"),
            ("sensors", "heart-rate"),
            ("sensors", "temperature"),
            ("sensors", "pressure"),
            ("microphone", "false"),
            ("camera", "false"),
            ("data-storage-location", "companion phone"),
            ("data-storage-location", "cloud"),
            ("firmware-update-method", "companion app"),
            ("companion-app", "Beddit Sleep Monitor"),
            ("price", "149.95"),
        ],
    },
    Device {
        name: "Fitbit",
        brand: "Fitbit",
        description: "wrist-worn activity tracker",
        site: "https://www.fitbit.com",
        claims: &[
            ("connectivity", "Bluetooth LE"),
            ("sensors", "accelerometer"),
            ("sensors", "heart-rate"),
            ("sensors", "GPS"),
            ("battery-life", "120"),
            ("water-resistance", "true"),
            ("display", "OLED"),
            ("data-storage-location", "cloud"),
            ("firmware-update-method", "companion app"),
            ("companion-app", "Fitbit"),
            ("price", "149.95"),
        ],
    },
    Device {
        name: "Google Home",
        brand: "Google",
        description: "voice-controlled smart speaker",
        site: "https://store.google.com/home",
        claims: &[
            ("connectivity", "Wi-Fi"),
            ("connectivity", "Bluetooth"),
            ("sensors", "microphone"),
            ("voice-control", "true"),
            ("microphone", "true"),
            ("camera", "false"),
            ("display", "LED"),
            ("data-storage-location", "cloud"),
            ("firmware-update-method", "over-the-air"),
            ("companion-app", "Google Home"),
            ("price", "129"),
        ],
    },
    Device {
        name: "June Oven",
        brand: "June",
        description: "countertop oven with a built-in camera",
        site: "https://juneoven.com",
        claims: &[
            ("connectivity", "Wi-Fi"),
            ("sensors", "camera"),
            ("sensors", "temperature"),
            ("camera", "true"),
            ("voice-control", "true"),
            ("display", "LCD"),
            ("data-storage-location", "cloud"),
            ("firmware-update-method", "over-the-air"),
            ("companion-app", "June Oven"),
            ("price", "1495"),
        ],
    },
    Device {
        name: "Oral-B Smart toothbrush",
        brand: "Oral-B",
        description: "electric toothbrush with brushing feedback",
        site: "https://oralb.com/smart",
        claims: &[
            ("connectivity", "Bluetooth 4.0"),
            ("sensors", "pressure"),
            ("sensors", "accelerometer"),
            ("battery-life", "336"),
            ("water-resistance", "true"),
            ("data-storage-location", "companion phone"),
            ("firmware-update-method", "not updatable"),
            ("companion-app", "Oral-B"),
            ("price", "219.99"),
        ],
    },
];

/// Bytes of the one uploaded asset in the scenario: a saved product page.
pub const SAMPLE_PAGE: &[u8] =
    b"<!doctype html><title>Oral-B Smart</title><p>Connects to the Oral-B app over Bluetooth 4.0.</p>\n";

fn first_worker_evidence(device: &Device, index: usize) -> EvidenceInput {
    EvidenceInput::new(
        SourceKind::WebPage,
        EvidenceLocator::Url {
            link: format!("{}#spec-{}", device.site, index + 1),
        },
    )
    .with_note("product specification page")
}

fn second_worker_evidence(device: &Device, index: usize) -> EvidenceInput {
    if index.is_multiple_of(3) {
        EvidenceInput::new(SourceKind::Packaging, EvidenceLocator::DocumentPage { page: 2 })
            .with_note("side panel of the retail box")
    } else {
        EvidenceInput::new(
            SourceKind::AppUi,
            EvidenceLocator::TextQuote {
                quote: format!("{} settings screen", device.name),
            },
        )
    }
}

/// Adds one device: two drafts, a merge, a finalized master. The first
/// worker claims everything; the second confirms every other claim, which
/// makes those groups competing.
fn add_device(svc: &Olympus, device: &Device, admin: &UserRef, w1: &UserRef, w2: &UserRef) -> Result<TemplateId> {
    let template = svc.create_product_template(device.name, device.description, device.brand, admin)?;
    let d1 = svc.open_draft(&template.id, w1)?;
    let d2 = svc.open_draft(&template.id, w2)?;
    for (i, (key, value)) in device.claims.iter().enumerate() {
        let claim = svc.add_claim(&d1.id, key, value, w1, None)?;
        svc.attach_evidence(&claim.id, first_worker_evidence(device, i), w1, None)?;
        if i % 2 == 0 {
            let claim = svc.add_claim(&d2.id, key, value, w2, None)?;
            let mut evidence = second_worker_evidence(device, i);
            if device.name == "Oral-B Smart toothbrush" && *key == "connectivity" {
                evidence = EvidenceInput::new(SourceKind::WebPage, EvidenceLocator::TextQuote {
                    quote: "Connects to the Oral-B app over Bluetooth 4.0.".into(),
                })
                .with_upload(SAMPLE_PAGE, "text/html");
            }
            svc.attach_evidence(&claim.id, evidence, w2, None)?;
        }
    }
    svc.submit_draft(&d1.id, w1, None)?;
    svc.submit_draft(&d2.id, w2, None)?;

    let session = svc.open_merge_session(&template.id, std::slice::from_ref(&admin.id), admin)?;
    for group in session.groups.iter().filter(|g| g.classification == Classification::Competing) {
        // Keep the second worker's evidence, which is the more specific one.
        let chosen = group.claims.last().map(|c| c.evidence.iter().map(|e| e.id.clone()).collect());
        let action = MergeAction::SelectEvidence {
            chosen: chosen.unwrap_or_default(),
        };
        svc.decide_group(&session.id, &group.group_id, action, admin, None)?;
    }
    svc.finalize_master(&session.id, admin)?;
    Ok(template.id)
}

/// Builds the scenario on a fresh deterministic in-memory service.
pub fn six_devices() -> Result<Olympus> {
    let svc = Olympus::in_memory(Config::deterministic());
    populate(&svc)?;
    Ok(svc)
}

/// Adds the six devices to `svc` and returns their template ids in
/// [`DEVICE_NAMES`] order.
pub fn populate(svc: &Olympus) -> Result<Vec<TemplateId>> {
    let admin = svc.register_user("fixture-admin", &[Role::Admin])?;
    let w1 = svc.register_user("fixture-worker-1", &[Role::CrowdWorker])?;
    let w2 = svc.register_user("fixture-worker-2", &[Role::CrowdWorker])?;
    DEVICES
        .iter()
        .map(|device| add_device(svc, device, &admin, &w1, &w2))
        .collect()
}
