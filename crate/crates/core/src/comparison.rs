// SPDX-License-Identifier: Apache-2.0

//! Cross-product comparison: feature matrices, pairwise diffs, discussion
//! prompts and ranking polls with Borda consensus.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::SENSORS_KEY;
use crate::error::{Error, Result};
use crate::ids::{PollId, TemplateId, UserId};
use crate::merge::MasterProfile;
use crate::model::{normalize_value, Role, UserRef};
use crate::service::{Olympus, State};

pub const DEFAULT_CRITERION: &str = "perceived privacy risk";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductColumn {
    pub id: TemplateId,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellValue {
    pub value: String,
    pub evidence_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cell {
    Values { values: Vec<CellValue> },
    /// The product's master has no entry for the feature. Not the same as "no".
    Unknown,
}

impl Cell {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Cell::Unknown)
    }

    fn normalized_set(&self) -> Option<BTreeSet<String>> {
        match self {
            Cell::Values { values } => Some(values.iter().map(|v| normalize_value(&v.value)).collect()),
            Cell::Unknown => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub products: Vec<ProductColumn>,
    pub feature_keys: Vec<String>,
    /// Feature key → one cell per product, aligned with `products`.
    pub cells: BTreeMap<String, Vec<Cell>>,
}

impl ComparisonMatrix {
    pub fn cell(&self, feature_key: &str, product: usize) -> Option<&Cell> {
        self.cells.get(feature_key).and_then(|row| row.get(product))
    }

    pub fn cell_count(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// Features as rows, products as columns; values joined by `"; "`,
    /// unknown cells rendered as `?`.
    pub fn to_delimited(&self, delimiter: u8) -> Result<String> {
        let mut out = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        let storage_err = |e: csv::Error| Error::Storage(e.to_string());
        let mut header = vec!["feature".to_owned()];
        header.extend(self.products.iter().map(|p| p.name.clone()));
        out.write_record(&header).map_err(storage_err)?;
        for key in &self.feature_keys {
            let mut record = vec![key.clone()];
            for cell in &self.cells[key] {
                record.push(match cell {
                    Cell::Unknown => "?".to_owned(),
                    Cell::Values { values } => values
                        .iter()
                        .map(|v| v.value.as_str())
                        .collect::<Vec<_>>()
                        .join("; "),
                });
            }
            out.write_record(&record).map_err(storage_err)?;
        }
        let bytes = out.into_inner().map_err(|e| Error::Storage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output of utf-8 input"))
    }
}

/// Builds the matrix for `columns`, whose masters are given in the same order.
pub fn build_matrix(columns: Vec<ProductColumn>, masters: &[&MasterProfile]) -> ComparisonMatrix {
    assert_eq!(columns.len(), masters.len(), "one master per column");
    let feature_keys: Vec<String> = masters
        .iter()
        .flat_map(|m| m.entries.iter().map(|e| e.feature_key.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cells = feature_keys
        .iter()
        .map(|key| {
            let row = masters
                .iter()
                .map(|master| {
                    let values: Vec<CellValue> = master
                        .entries
                        .iter()
                        .filter(|e| &e.feature_key == key)
                        .map(|e| CellValue {
                            value: e.value.clone(),
                            evidence_count: e.evidence.len(),
                        })
                        .collect();
                    if values.is_empty() {
                        Cell::Unknown
                    } else {
                        Cell::Values { values }
                    }
                })
                .collect();
            (key.clone(), row)
        })
        .collect();
    ComparisonMatrix {
        products: columns,
        feature_keys,
        cells,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferingFeature {
    pub feature_key: String,
    pub a_values: Vec<String>,
    pub b_values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductDiff {
    pub product_a: TemplateId,
    pub product_b: TemplateId,
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
    pub differing: Vec<DifferingFeature>,
}

fn values_by_key(master: &MasterProfile) -> BTreeMap<&str, Vec<String>> {
    let mut map: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for entry in &master.entries {
        map.entry(&entry.feature_key).or_default().push(entry.value.clone());
    }
    map
}

pub fn diff_masters(a: &MasterProfile, b: &MasterProfile) -> ProductDiff {
    let (av, bv) = (values_by_key(a), values_by_key(b));
    let normalized = |values: &[String]| values.iter().map(|v| normalize_value(v)).collect::<BTreeSet<_>>();
    let mut diff = ProductDiff {
        product_a: a.template_id.clone(),
        product_b: b.template_id.clone(),
        only_in_a: Vec::new(),
        only_in_b: Vec::new(),
        differing: Vec::new(),
    };
    let keys: BTreeSet<&str> = av.keys().chain(bv.keys()).copied().collect();
    for key in keys {
        match (av.get(key), bv.get(key)) {
            (Some(_), None) => diff.only_in_a.push(key.to_owned()),
            (None, Some(_)) => diff.only_in_b.push(key.to_owned()),
            (Some(x), Some(y)) if normalized(x) != normalized(y) => diff.differing.push(DifferingFeature {
                feature_key: key.to_owned(),
                a_values: x.clone(),
                b_values: y.clone(),
            }),
            _ => {}
        }
    }
    diff
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    WhyPresent,
    CrossProductContrast,
    Absence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSubject {
    pub feature_key: String,
    pub products: Vec<TemplateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscussionPrompt {
    pub text: String,
    pub subject: PromptSubject,
    pub kind: PromptKind,
}

/// Noun phrase for a sensor value: quantities get a trailing "sensor".
fn sensor_phrase(value: &str) -> String {
    let noun = match normalize_value(value).as_str() {
        "heart-rate" | "temperature" | "pressure" => format!("{value} sensor"),
        _ => value.to_owned(),
    };
    let article = match noun.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    };
    format!("{article} {noun}")
}

fn join_names(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Discussion prompts for a matrix, ordered by feature key, then kind,
/// then product order.
pub fn generate_prompts(matrix: &ComparisonMatrix) -> Vec<DiscussionPrompt> {
    let mut prompts = Vec::new();
    for key in &matrix.feature_keys {
        let row = &matrix.cells[key];
        let known: Vec<usize> = (0..row.len()).filter(|&i| !row[i].is_unknown()).collect();
        let unknown: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_unknown()).collect();
        let name = |i: usize| matrix.products[i].name.as_str();
        let id = |i: usize| matrix.products[i].id.clone();

        if key == SENSORS_KEY {
            for &i in &known {
                if let Cell::Values { values } = &row[i] {
                    for v in values {
                        prompts.push(DiscussionPrompt {
                            text: format!("Why does {} integrate {}?", name(i), sensor_phrase(&v.value)),
                            subject: PromptSubject {
                                feature_key: key.clone(),
                                products: vec![id(i)],
                                value: Some(v.value.clone()),
                            },
                            kind: PromptKind::WhyPresent,
                        });
                    }
                }
            }
        }

        let distinct: BTreeSet<BTreeSet<String>> =
            known.iter().filter_map(|&i| row[i].normalized_set()).collect();
        if known.len() >= 2 && distinct.len() > 1 {
            let parts: Vec<String> = known
                .iter()
                .map(|&i| match &row[i] {
                    Cell::Values { values } => format!(
                        "{} ({})",
                        name(i),
                        values.iter().map(|v| v.value.as_str()).collect::<Vec<_>>().join("; ")
                    ),
                    Cell::Unknown => unreachable!("known cells only"),
                })
                .collect();
            prompts.push(DiscussionPrompt {
                text: format!("Why does {key} differ between {}?", parts.join(", ")),
                subject: PromptSubject {
                    feature_key: key.clone(),
                    products: known.iter().map(|&i| id(i)).collect(),
                    value: None,
                },
                kind: PromptKind::CrossProductContrast,
            });
        }

        if !known.is_empty() && !unknown.is_empty() {
            let missing: Vec<&str> = unknown.iter().map(|&i| name(i)).collect();
            let present: Vec<&str> = known.iter().map(|&i| name(i)).collect();
            prompts.push(DiscussionPrompt {
                text: format!(
                    "No information on {key} was found for {}, while {} {} it. Is it missing or just undocumented?",
                    join_names(&missing),
                    join_names(&present),
                    if present.len() == 1 { "lists" } else { "list" },
                ),
                subject: PromptSubject {
                    feature_key: key.clone(),
                    products: unknown.iter().map(|&i| id(i)).collect(),
                    value: None,
                },
                kind: PromptKind::Absence,
            });
        }
    }
    prompts
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub poll_id: PollId,
    pub student: UserId,
    pub criterion: String,
    pub ordered_products: Vec<TemplateId>,
    pub submitted_at: DateTime<Utc>,
}

/// A ranking poll. Its product set is fixed by the first ballot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poll {
    pub id: PollId,
    pub criterion: String,
    pub products: BTreeSet<TemplateId>,
    pub rankings: BTreeMap<UserId, Ranking>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusRanking {
    pub poll_id: PollId,
    pub criterion: String,
    pub scores: BTreeMap<TemplateId, u64>,
    pub ordering: Vec<TemplateId>,
    pub voter_count: usize,
}

/// Checks that `ballot` orders exactly the items of `products`.
pub fn check_permutation<P: Ord + std::fmt::Display>(ballot: &[P], products: &BTreeSet<P>) -> Result<()> {
    if let Some(stranger) = ballot.iter().find(|p| !products.contains(p)) {
        return Err(Error::UnknownProduct {
            product: stranger.to_string(),
        });
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = ballot.iter().find(|p| !seen.insert(*p)) {
        return Err(Error::IncompletePermutation {
            reason: format!("{dup} appears more than once"),
        });
    }
    let missing: Vec<String> = products
        .iter()
        .filter(|p| !seen.contains(p))
        .map(ToString::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompletePermutation {
            reason: format!("missing {}", missing.join(", ")),
        });
    }
    Ok(())
}

/// Borda totals: on an n-item ballot the item at position i (0 = first)
/// earns n - 1 - i points.
pub fn borda_scores<'a, P, B>(ballots: B) -> BTreeMap<P, u64>
where
    P: Ord + Clone + 'a,
    B: IntoIterator<Item = &'a [P]>,
{
    let mut scores = BTreeMap::new();
    for ballot in ballots {
        let n = ballot.len() as u64;
        for (position, item) in ballot.iter().enumerate() {
            *scores.entry(item.clone()).or_insert(0) += n - 1 - position as u64;
        }
    }
    scores
}

/// Orders items by score descending, ties broken by `tie_key` ascending.
pub fn consensus_order<P: Clone, K: Ord>(scores: &BTreeMap<P, u64>, tie_key: impl Fn(&P) -> K) -> Vec<P> {
    let mut items: Vec<(&P, u64)> = scores.iter().map(|(p, s)| (p, *s)).collect();
    items.sort_by(|(pa, sa), (pb, sb)| sb.cmp(sa).then_with(|| tie_key(pa).cmp(&tie_key(pb))));
    items.into_iter().map(|(p, _)| p.clone()).collect()
}

fn columns_for(state: &State, product_ids: &[TemplateId]) -> Result<Vec<(ProductColumn, MasterProfile)>> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = product_ids.iter().find(|p| !seen.insert(*p)) {
        return Err(Error::validation("products", format!("{dup} listed twice")));
    }
    let mut unmerged = Vec::new();
    let mut out = Vec::new();
    for id in product_ids {
        let template = state.templates.get(id).ok_or_else(|| Error::UnknownProduct {
            product: id.to_string(),
        })?;
        match state.masters.get(id) {
            Some(master) => out.push((
                ProductColumn {
                    id: id.clone(),
                    name: template.name.clone(),
                },
                master.clone(),
            )),
            None => unmerged.push(id.to_string()),
        }
    }
    if !unmerged.is_empty() {
        return Err(Error::UnmergedProduct { products: unmerged });
    }
    Ok(out)
}

impl Olympus {
    pub fn build_matrix(&self, product_ids: &[TemplateId], student: &UserRef) -> Result<ComparisonMatrix> {
        student.require(Role::Student)?;
        if product_ids.len() < 2 {
            return Err(Error::TooFewProducts {
                found: product_ids.len(),
            });
        }
        let state = self.snapshot();
        let (columns, masters): (Vec<_>, Vec<_>) = columns_for(&state, product_ids)?.into_iter().unzip();
        Ok(build_matrix(columns, &masters.iter().collect::<Vec<_>>()))
    }

    pub fn diff_products(&self, a: &TemplateId, b: &TemplateId, student: &UserRef) -> Result<ProductDiff> {
        student.require(Role::Student)?;
        let state = self.snapshot();
        // Self-diff is allowed, so resolve each side separately.
        let side = |id: &TemplateId| columns_for(&state, std::slice::from_ref(id)).map(|mut v| v.remove(0).1);
        let (ma, mb) = match (side(a), side(b)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(Error::UnmergedProduct { products: mut pa }), Err(Error::UnmergedProduct { products: pb })) => {
                pa.extend(pb);
                pa.dedup();
                return Err(Error::UnmergedProduct { products: pa });
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        Ok(diff_masters(&ma, &mb))
    }

    pub fn discussion_prompts(&self, product_ids: &[TemplateId], student: &UserRef) -> Result<Vec<DiscussionPrompt>> {
        Ok(generate_prompts(&self.build_matrix(product_ids, student)?))
    }

    /// Stores the student's ballot, replacing any earlier one. The first
    /// ballot of a poll defines its product set and criterion.
    pub fn submit_ranking(
        &self,
        poll_id: &PollId,
        ordered_products: &[TemplateId],
        criterion: Option<&str>,
        student: &UserRef,
    ) -> Result<Ranking> {
        student.require(Role::Student)?;
        self.write(|tx| {
            let submitted_at = tx.now();
            let (criterion, products) = match tx.state.polls.get(poll_id) {
                Some(poll) => (poll.criterion.clone(), poll.products.clone()),
                None => {
                    if ordered_products.is_empty() {
                        return Err(Error::IncompletePermutation {
                            reason: "empty ballot".into(),
                        });
                    }
                    if let Some(stranger) = ordered_products.iter().find(|p| !tx.state.templates.contains_key(*p)) {
                        return Err(Error::UnknownProduct {
                            product: stranger.to_string(),
                        });
                    }
                    let criterion = criterion
                        .map(str::trim)
                        .filter(|c| !c.is_empty())
                        .unwrap_or(DEFAULT_CRITERION);
                    (criterion.to_owned(), ordered_products.iter().cloned().collect())
                }
            };
            check_permutation(ordered_products, &products)?;
            let ranking = Ranking {
                poll_id: poll_id.clone(),
                student: student.id.clone(),
                criterion: criterion.clone(),
                ordered_products: ordered_products.to_vec(),
                submitted_at,
            };
            tx.state
                .polls
                .entry(poll_id.clone())
                .or_insert_with(|| Poll {
                    id: poll_id.clone(),
                    criterion,
                    products,
                    rankings: BTreeMap::new(),
                })
                .rankings
                .insert(student.id.clone(), ranking.clone());
            Ok(ranking)
        })
    }

    pub fn aggregate_rankings(&self, poll_id: &PollId, viewer: &UserRef) -> Result<ConsensusRanking> {
        viewer.require(Role::Student)?;
        let state = self.snapshot();
        let poll = state
            .polls
            .get(poll_id)
            .filter(|p| !p.rankings.is_empty())
            .ok_or_else(|| Error::NoRankings {
                poll_id: poll_id.to_string(),
            })?;
        let scores = borda_scores(poll.rankings.values().map(|r| r.ordered_products.as_slice()));
        let name = |id: &TemplateId| {
            let name = state.templates.get(id).map(|t| t.name.clone()).unwrap_or_default();
            (name, id.clone())
        };
        Ok(ConsensusRanking {
            poll_id: poll_id.clone(),
            criterion: poll.criterion.clone(),
            ordering: consensus_order(&scores, name),
            scores,
            voter_count: poll.rankings.len(),
        })
    }
}
