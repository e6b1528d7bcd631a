// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::PathBuf;

use olympus::ids::TemplateId;
use olympus::investigation::EvidenceInput;
use olympus::merge::{Classification, MasterProfile, MergeAction, MergeSession};
use olympus::model::{EvidenceLocator, Role, SourceKind, UserRef};
use olympus::persistence::{read_bundle, ImportMode};
use olympus::{Config, Olympus};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/six-devices")
}

/// A deterministic in-memory service holding the six-device fixture.
pub fn seeded() -> Olympus {
    let svc = Olympus::in_memory(Config::deterministic());
    load_fixture(&svc);
    svc
}

pub fn load_fixture(svc: &Olympus) {
    let (doc, assets) = read_bundle(&fixture_dir()).expect("fixture reads");
    svc.import_catalogue(doc, ImportMode::Replace, &assets).expect("fixture imports");
}

pub fn template_named(svc: &Olympus, name: &str) -> TemplateId {
    svc.list_templates()
        .into_iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("no template {name}"))
        .id
}

pub struct Walkthrough {
    pub admin: UserRef,
    pub workers: [UserRef; 3],
    pub template: TemplateId,
    pub session: MergeSession,
    pub master: MasterProfile,
}

/// Three workers draft a tracker: W1 and W2 report Bluetooth, W3 reports
/// Wi-Fi. The admin keeps W2's video evidence for Bluetooth and finalizes.
pub fn fitbit_walkthrough(svc: &Olympus, product_name: &str) -> Walkthrough {
    let admin = svc.register_user("merge-admin", &[Role::Admin]).unwrap();
    let workers = ["W1", "W2", "W3"].map(|n| svc.register_user(n, &[Role::CrowdWorker]).unwrap());
    let template = svc
        .create_product_template(product_name, "wrist activity tracker", "Fitbit", &admin)
        .unwrap()
        .id;
    let evidence = [
        EvidenceInput::new(
            SourceKind::WebPage,
            EvidenceLocator::Url { link: "https://www.fitbit.com/charge#specs".into() },
        ),
        EvidenceInput::new(SourceKind::PromoVideo, EvidenceLocator::VideoTimestamp { seconds: 42.0 })
            .with_link("https://video.example.com/fitbit-pairing"),
        EvidenceInput::new(
            SourceKind::AppUi,
            EvidenceLocator::TextQuote { quote: "Wi-Fi sync enabled".into() },
        ),
    ];
    let values = ["Bluetooth", "Bluetooth", "Wi-Fi"];
    for ((worker, value), evidence) in workers.iter().zip(values).zip(evidence) {
        let draft = svc.open_draft(&template, worker).unwrap();
        let claim = svc.add_claim(&draft.id, "connectivity", value, worker, Some(0)).unwrap();
        svc.attach_evidence(&claim.id, evidence, worker, Some(1)).unwrap();
        svc.submit_draft(&draft.id, worker, Some(2)).unwrap();
    }
    let session = svc.open_merge_session(&template, std::slice::from_ref(&admin.id), &admin).unwrap();
    let competing = session
        .groups
        .iter()
        .find(|g| g.classification == Classification::Competing)
        .expect("one competing group");
    let chosen = competing
        .claims
        .iter()
        .find(|c| c.author == workers[1].id)
        .unwrap()
        .evidence
        .iter()
        .map(|e| e.id.clone())
        .collect();
    svc.decide_group(&session.id, &competing.group_id, MergeAction::SelectEvidence { chosen }, &admin, Some(0))
        .unwrap();
    let master = svc.finalize_master(&session.id, &admin).unwrap();
    Walkthrough {
        admin,
        workers,
        template,
        session,
        master,
    }
}

/// Minimal HTTP/1.1 client: one request per connection.
pub fn http(
    addr: std::net::SocketAddr,
    method: &str,
    path: &str,
    token: Option<&str>,
    content_type: &str,
    body: &[u8],
) -> (u16, Vec<u8>) {
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(addr).expect("connect");
    stream.set_read_timeout(Some(std::time::Duration::from_secs(10))).unwrap();
    let mut head = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Length: {}\r\nContent-Type: {content_type}\r\n",
        body.len()
    );
    if let Some(token) = token {
        head.push_str(&format!("Authorization: Bearer {token}\r\n"));
    }
    head.push_str("\r\n");
    stream.write_all(head.as_bytes()).unwrap();
    // A server that rejects early may close before the body is sent; the
    // response it already wrote is still readable.
    let _ = stream.write_all(body);
    let mut raw = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => raw.extend_from_slice(&chunk[..n]),
        }
    }
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("response head");
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    let status = head.split(' ').nth(1).and_then(|s| s.parse().ok()).expect("status line");
    (status, raw[split + 4..].to_vec())
}
