//! TOML model files.
//!
//! ```toml
//! format_version = 1
//!
//! [[arms]]
//! name = "two-state"
//! states = 2
//! discount = 0.9
//! passive = [[0.5, 0.5], [0.0, 1.0]]
//! active  = [[1.0, 0.0], [1.0, 0.0]]
//! rewards = [[0.0, 1.0], [0.3, 0.2]]   # one [passive, active] pair per state
//!
//! [instance]                 # optional
//! arms = ["two-state", "two-state"]
//! plays_per_step = 1
//! discount = 0.9             # optional, checked against every arm
//!
//! [[indices]]                # optional, written by the index cache
//! arm = "two-state"
//! key = "…"                  # digest of arm + solver settings
//! values = [0.41, -0.07]
//! ```
//!
//! Transition rows whose sum is off by more than 1e-6 are rejected; rows
//! within that tolerance are rescaled to sum to one.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Spanned;

use crate::model::{Action, ArmModel, ModelError, STOCHASTIC_TOLERANCE};
use crate::policies::{IndexTable, PolicyError, RmabInstance};

pub const FORMAT_VERSION: u32 = 1;

/// Row-sum error tolerated (and corrected) at parse time.
pub const PARSE_ROW_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },

    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),

    #[error("arm `{arm}`: {source}")]
    Model {
        arm: String,
        #[source]
        source: ModelError,
    },

    #[error("instance: {0}")]
    Instance(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArm {
    pub name: String,
    pub model: ArmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub arms: Vec<String>,
    pub plays_per_step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub arm: String,
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub format_version: u32,
    pub arms: Vec<NamedArm>,
    pub instance: Option<InstanceSpec>,
    pub indices: Vec<IndexEntry>,
}

#[derive(Deserialize)]
struct RawFile {
    format_version: Spanned<u32>,
    #[serde(default)]
    arms: Vec<Spanned<RawArm>>,
    instance: Option<Spanned<InstanceSpec>>,
    #[serde(default)]
    indices: Vec<IndexEntry>,
}

#[derive(Deserialize)]
struct RawArm {
    name: String,
    states: Spanned<usize>,
    discount: Spanned<f64>,
    passive: Spanned<Vec<Spanned<Vec<f64>>>>,
    active: Spanned<Vec<Spanned<Vec<f64>>>>,
    rewards: Spanned<Vec<Spanned<Vec<f64>>>>,
}

#[derive(Serialize)]
struct OutFile<'a> {
    format_version: u32,
    arms: Vec<OutArm<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance: Option<&'a InstanceSpec>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    indices: &'a [IndexEntry],
}

#[derive(Serialize)]
struct OutArm<'a> {
    name: &'a str,
    states: usize,
    discount: f64,
    passive: Vec<Vec<f64>>,
    active: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
}

impl<'a> OutArm<'a> {
    fn new(arm: &'a NamedArm) -> Self {
        OutArm {
            name: &arm.name,
            states: arm.model.num_states(),
            discount: arm.model.discount(),
            passive: arm.model.matrix(Action::Passive),
            active: arm.model.matrix(Action::Active),
            rewards: arm.model.rewards().iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let line = line_of(text, offset);
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    (line, text[line_start..offset].chars().count() + 1)
}

fn invalid(text: &str, span: Range<usize>, message: String) -> ParseError {
    ParseError::Invalid {
        line: line_of(text, span.start),
        message,
    }
}

fn check_rows(
    text: &str,
    arm: &str,
    what: &str,
    rows: Spanned<Vec<Spanned<Vec<f64>>>>,
    k: usize,
    normalize: bool,
) -> Result<Vec<Vec<f64>>, ParseError> {
    let span = rows.span();
    let rows = rows.into_inner();
    if rows.len() != k {
        return Err(invalid(
            text,
            span,
            format!("arm `{arm}`: {what} has {} rows, expected {k}", rows.len()),
        ));
    }
    let width = if normalize { k } else { 2 };
    let mut out = Vec::with_capacity(k);
    for (i, row) in rows.into_iter().enumerate() {
        let span = row.span();
        let mut row = row.into_inner();
        if row.len() != width {
            return Err(invalid(
                text,
                span,
                format!(
                    "arm `{arm}`: {what} row {} has {} entries, expected {width}",
                    i + 1,
                    row.len()
                ),
            ));
        }
        if normalize {
            if let Some(j) = row.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid(
                    text,
                    span,
                    format!(
                        "arm `{arm}`: {what} row {} entry {} = {} is not a probability",
                        i + 1,
                        j + 1,
                        row[j]
                    ),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PARSE_ROW_TOLERANCE {
                return Err(invalid(
                    text,
                    span,
                    format!("arm `{arm}`: {what} row {} sums to {sum}", i + 1),
                ));
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn build_arm(text: &str, raw: Spanned<RawArm>) -> Result<NamedArm, ParseError> {
    let raw = raw.into_inner();
    let name = raw.name;
    let k = *raw.states.get_ref();
    if k == 0 {
        return Err(invalid(text, raw.states.span(), format!("arm `{name}`: states must be positive")));
    }
    let discount_span = raw.discount.span();
    let discount = raw.discount.into_inner();
    if !(discount > 0.0 && discount < 1.0) {
        return Err(invalid(
            text,
            discount_span,
            format!("arm `{name}`: discount {discount} is outside (0, 1)"),
        ));
    }
    let passive = check_rows(text, &name, "passive", raw.passive, k, true)?;
    let active = check_rows(text, &name, "active", raw.active, k, true)?;
    let rewards = check_rows(text, &name, "rewards", raw.rewards, k, false)?
        .into_iter()
        .map(|r| [r[0], r[1]])
        .collect();
    let model = ArmModel::new(passive, active, rewards, discount).map_err(|source| {
        ParseError::Model {
            arm: name.clone(),
            source,
        }
    })?;
    Ok(NamedArm { name, model })
}

/// Parses and validates a model file.
pub fn parse_model(bytes: &[u8]) -> Result<ModelFile, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let (line, column) = line_col(
            &String::from_utf8_lossy(&bytes[..e.valid_up_to()]),
            e.valid_up_to(),
        );
        ParseError::Syntax {
            line,
            column,
            message: "input is not valid UTF-8".into(),
        }
    })?;
    if text.trim().is_empty() {
        return Err(ParseError::Syntax {
            line: 1,
            column: 1,
            message: "empty model file".into(),
        });
    }
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ParseError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let version = *raw.format_version.get_ref();
    if version != FORMAT_VERSION {
        return Err(ParseError::UnsupportedVersion(version));
    }
    let mut arms: Vec<NamedArm> = Vec::with_capacity(raw.arms.len());
    for a in raw.arms {
        let span = a.span();
        let arm = build_arm(text, a)?;
        if arms.iter().any(|x| x.name == arm.name) {
            return Err(invalid(text, span, format!("duplicate arm name `{}`", arm.name)));
        }
        arms.push(arm);
    }
    let instance = match raw.instance {
        None => None,
        Some(spec) => {
            let span = spec.span();
            let spec = spec.into_inner();
            if let Some(missing) = spec.arms.iter().find(|n| !arms.iter().any(|a| &a.name == *n)) {
                return Err(invalid(text, span, format!("instance names unknown arm `{missing}`")));
            }
            Some(spec)
        }
    };
    let file = ModelFile {
        format_version: version,
        arms,
        instance,
        indices: raw.indices,
    };
    if file.instance.is_some() {
        file.instance(None)?;
    }
    Ok(file)
}

impl ModelFile {
    pub fn single(name: &str, model: ArmModel) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            arms: vec![NamedArm {
                name: name.to_string(),
                model,
            }],
            instance: None,
            indices: Vec::new(),
        }
    }

    pub fn arm(&self, name: &str) -> Option<&ArmModel> {
        self.arms.iter().find(|a| a.name == name).map(|a| &a.model)
    }

    pub fn to_toml_string(&self) -> String {
        let out = OutFile {
            format_version: self.format_version,
            arms: self.arms.iter().map(OutArm::new).collect(),
            instance: self.instance.as_ref(),
            indices: &self.indices,
        };
        toml::to_string(&out).expect("model files always serialise")
    }

    /// Builds the instance block, optionally replacing every arm's discount.
    pub fn instance(&self, discount_override: Option<f64>) -> Result<RmabInstance, ParseError> {
        let spec = self
            .instance
            .as_ref()
            .ok_or_else(|| ParseError::Instance("file has no [instance] block".into()))?;
        let mut arms = Vec::with_capacity(spec.arms.len());
        for name in &spec.arms {
            let model = self
                .arm(name)
                .ok_or_else(|| ParseError::Instance(format!("unknown arm `{name}`")))?;
            let model = match discount_override {
                Some(b) => model.with_discount(b).map_err(|source| ParseError::Model {
                    arm: name.clone(),
                    source,
                })?,
                None => {
                    if let Some(b) = spec.discount {
                        if b != model.discount() {
                            return Err(ParseError::Instance(format!(
                                "arm `{name}` has discount {}, instance declares {b}",
                                model.discount()
                            )));
                        }
                    }
                    model.clone()
                }
            };
            arms.push(model);
        }
        RmabInstance::new(arms, spec.plays_per_step)
            .map_err(|e: PolicyError| ParseError::Instance(e.to_string()))
    }

    /// Index table for the instance arms, if every arm has a cached entry
    /// whose key matches `key_of(arm)`.
    pub fn cached_indices(&self, key_of: impl Fn(&ArmModel) -> String) -> Option<IndexTable> {
        let spec = self.instance.as_ref()?;
        let mut per_arm = Vec::with_capacity(spec.arms.len());
        for name in &spec.arms {
            let model = self.arm(name)?;
            let key = key_of(model);
            let entry = self.indices.iter().find(|e| &e.arm == name && e.key == key)?;
            if entry.values.len() != model.num_states() {
                return None;
            }
            per_arm.push(entry.values.clone());
        }
        Some(IndexTable::new(per_arm))
    }
}

/// SHA-256 (hex) of the canonical single-arm serialisation.
pub fn arm_digest(model: &ArmModel) -> String {
    let text = ModelFile::single("arm", model.clone()).to_toml_string();
    hex::encode(Sha256::digest(text.as_bytes()))
}
