//! Classic social-experiment testbed.
//!
//! Each paradigm is a scenario template with `{placeholder}` slots, a list of
//! placeholder bindings (one prompt variant per binding) and a five-option
//! Likert scale ordered from highest bias (O1) to lowest (O5).
//!
//! Paradigms are loaded from JSON testbed documents; the eight built-in
//! paradigms ship as bundled documents under `data/testbed/`.

mod presentation;
pub mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use presentation::{
    draw_permutation, randomize_presentation, LabelScheme, OptionPermutation, PresentedPrompt,
    ANSWER_INSTRUCTION,
};

/// Number of Likert options in every paradigm.
pub const OPTION_COUNT: usize = 5;

/// Likert weights `5 - j` for options O1..O5.
pub const LIKERT_WEIGHTS: [u8; OPTION_COUNT] = [4, 3, 2, 1, 0];

/// Testbed document schema version understood by this loader.
pub const DOCUMENT_SCHEMA_VERSION: u32 = 1;

const BUNDLED: [(&str, &str); 4] = [
    ("authority.json", include_str!("../../data/testbed/authority.json")),
    ("bandwagon.json", include_str!("../../data/testbed/bandwagon.json")),
    ("confirmation.json", include_str!("../../data/testbed/confirmation.json")),
    ("framing.json", include_str!("../../data/testbed/framing.json")),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestbedError {
    #[error("malformed testbed document: {0}")]
    Parse(String),
    #[error("schema violation at `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("paradigm `{paradigm}`: expected {expected} variants, bindings produce {actual}")]
    VariantCount { paradigm: String, expected: usize, actual: usize },
    #[error("paradigm `{paradigm}`: binding {binding} does not bind placeholder `{placeholder}`")]
    MissingPlaceholder { paradigm: String, binding: usize, placeholder: String },
    #[error("duplicate paradigm id `{0}`")]
    DuplicateParadigm(String),
    #[error("unknown paradigm `{0}`")]
    UnknownParadigm(String),
    #[error("option mapping {0:?} is not a permutation of 0..5")]
    InvalidPermutation([usize; OPTION_COUNT]),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

fn schema(field: impl Into<String>, reason: impl Into<String>) -> TestbedError {
    TestbedError::Schema { field: field.into(), reason: reason.into() }
}

/// Cognitive bias family. The four built-in types have dedicated variants;
/// documents may register further types by id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum BiasType {
    Authority,
    Bandwagon,
    Confirmation,
    Framing,
    Custom(String),
}

impl BiasType {
    pub fn id(&self) -> &str {
        match self {
            BiasType::Authority => "authority",
            BiasType::Bandwagon => "bandwagon",
            BiasType::Confirmation => "confirmation",
            BiasType::Framing => "framing",
            BiasType::Custom(s) => s,
        }
    }

    pub fn display_name(&self) -> String {
        match self {
            BiasType::Authority => "Authority Effect".into(),
            BiasType::Bandwagon => "Bandwagon Effect".into(),
            BiasType::Confirmation => "Confirmation Bias".into(),
            BiasType::Framing => "Framing Effect".into(),
            BiasType::Custom(s) => s.clone(),
        }
    }
}

impl From<String> for BiasType {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "authority" => BiasType::Authority,
            "bandwagon" => BiasType::Bandwagon,
            "confirmation" => BiasType::Confirmation,
            "framing" => BiasType::Framing,
            _ => BiasType::Custom(s),
        }
    }
}

impl From<BiasType> for String {
    fn from(b: BiasType) -> Self {
        b.id().to_owned()
    }
}

impl fmt::Display for BiasType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertOptionSet {
    pub options: [String; OPTION_COUNT],
    pub weights: [u8; OPTION_COUNT],
}

impl LikertOptionSet {
    pub fn new(options: [String; OPTION_COUNT]) -> Self {
        Self { options, weights: LIKERT_WEIGHTS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderBinding {
    pub values: BTreeMap<String, String>,
    #[serde(default, rename = "tags")]
    pub category_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmSpec {
    pub id: String,
    pub name: String,
    pub bias: BiasType,
    pub template: String,
    pub placeholder_sets: Vec<PlaceholderBinding>,
    pub options: LikertOptionSet,
    pub expected_variant_count: usize,
}

/// One rendered scenario of a paradigm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub paradigm_id: String,
    pub variant_index: usize,
    pub rendered_scenario: String,
    pub canonical_options: LikertOptionSet,
    pub tags: Vec<String>,
}

impl ParadigmSpec {
    /// One variant per binding, in binding order.
    pub fn expand_variants(&self) -> Vec<PromptVariant> {
        self.placeholder_sets
            .iter()
            .enumerate()
            .map(|(i, b)| PromptVariant {
                paradigm_id: self.id.clone(),
                variant_index: i,
                rendered_scenario: template::render(&self.template, &b.values),
                canonical_options: self.options.clone(),
                tags: b.category_tags.clone(),
            })
            .collect()
    }

    pub fn variant_count(&self) -> usize {
        self.placeholder_sets.len()
    }

    /// Check every invariant a loaded paradigm must satisfy.
    pub fn validate(&self) -> Result<(), TestbedError> {
        let at = |f: &str| format!("{}.{f}", self.id);
        if self.id.trim().is_empty() {
            return Err(schema("paradigm_id", "must be non-empty"));
        }
        if self.options.weights != LIKERT_WEIGHTS {
            return Err(schema(at("weights"), format!("must be {LIKERT_WEIGHTS:?}, got {:?}", self.options.weights)));
        }
        if let Some(i) = self.options.options.iter().position(|o| o.trim().is_empty()) {
            return Err(schema(at(&format!("options[{i}]")), "option text must be non-empty"));
        }
        let names = template::placeholder_names(&self.template);
        if names.is_empty() && self.placeholder_sets.len() > 1 {
            return Err(schema(at("template"), "template has no placeholders but several bindings"));
        }
        if self.placeholder_sets.is_empty() {
            return Err(schema(at("placeholders"), "at least one binding is required"));
        }
        for (i, b) in self.placeholder_sets.iter().enumerate() {
            if b.values.is_empty() && !names.is_empty() {
                return Err(schema(at(&format!("placeholders[{i}].values")), "must be non-empty"));
            }
            for name in &names {
                if !b.values.contains_key(name) {
                    return Err(TestbedError::MissingPlaceholder {
                        paradigm: self.id.clone(),
                        binding: i,
                        placeholder: name.clone(),
                    });
                }
            }
            for (k, v) in &b.values {
                if v.trim().is_empty() {
                    return Err(schema(at(&format!("placeholders[{i}].values.{k}")), "must be non-empty"));
                }
                if template::has_markers(v) {
                    return Err(schema(
                        at(&format!("placeholders[{i}].values.{k}")),
                        "contains an unresolved placeholder marker",
                    ));
                }
            }
        }
        if self.expected_variant_count != self.placeholder_sets.len() {
            return Err(TestbedError::VariantCount {
                paradigm: self.id.clone(),
                expected: self.expected_variant_count,
                actual: self.placeholder_sets.len(),
            });
        }
        Ok(())
    }
}

// --- document schema ---------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParadigm {
    paradigm_id: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    bias_type: Option<String>,
    template: String,
    placeholders: Vec<RawBinding>,
    options: Vec<String>,
    weights: Vec<i64>,
    #[serde(default)]
    expected_variant_count: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBinding {
    values: BTreeMap<String, String>,
    #[serde(default)]
    tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    #[serde(default)]
    schema_version: Option<u32>,
    bias_type: String,
    #[serde(default)]
    name: Option<String>,
    paradigms: Vec<RawParadigm>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDocument {
    Bundle(RawBundle),
    Single(RawParadigm),
}

fn convert(raw: RawParadigm, inherited_bias: Option<&str>, path: &str) -> Result<ParadigmSpec, TestbedError> {
    let bias = match (raw.bias_type.as_deref(), inherited_bias) {
        (Some(b), _) | (None, Some(b)) => BiasType::from(b.to_owned()),
        (None, None) => return Err(schema(format!("{path}.bias_type"), "missing")),
    };
    if raw.options.len() != OPTION_COUNT {
        return Err(schema(
            format!("{path}.options"),
            format!("expected exactly {OPTION_COUNT} options, found {}", raw.options.len()),
        ));
    }
    if raw.weights.len() != OPTION_COUNT || raw.weights.iter().zip(LIKERT_WEIGHTS).any(|(&w, e)| w != i64::from(e)) {
        return Err(schema(format!("{path}.weights"), format!("must be {LIKERT_WEIGHTS:?}, got {:?}", raw.weights)));
    }
    let options: [String; OPTION_COUNT] = raw.options.try_into().expect("length checked");
    let n = raw.placeholders.len();
    let spec = ParadigmSpec {
        name: raw.name.unwrap_or_else(|| raw.paradigm_id.clone()),
        id: raw.paradigm_id,
        bias,
        template: raw.template,
        placeholder_sets: raw
            .placeholders
            .into_iter()
            .map(|b| PlaceholderBinding { values: b.values, category_tags: b.tags })
            .collect(),
        options: LikertOptionSet::new(options),
        expected_variant_count: raw.expected_variant_count.unwrap_or(n),
    };
    spec.validate()?;
    Ok(spec)
}

/// Parse and validate one testbed document (a bundle of paradigms sharing a
/// bias type, or a single paradigm object carrying its own `bias_type`).
pub fn load_testbed(source: &str) -> Result<Vec<ParadigmSpec>, TestbedError> {
    let doc: RawDocument = serde_json::from_str(source).map_err(|e| {
        // untagged enums swallow the field-level message, retry as bundle for a better one
        let detail = serde_json::from_str::<RawBundle>(source).err().unwrap_or(e);
        TestbedError::Parse(detail.to_string())
    })?;
    let specs = match doc {
        RawDocument::Bundle(b) => {
            if let Some(v) = b.schema_version {
                if v != DOCUMENT_SCHEMA_VERSION {
                    return Err(schema("schema_version", format!("unsupported version {v}")));
                }
            }
            if b.paradigms.is_empty() {
                return Err(schema("paradigms", "must list at least one paradigm"));
            }
            let _ = b.name;
            let bias = b.bias_type;
            b.paradigms
                .into_iter()
                .enumerate()
                .map(|(i, p)| convert(p, Some(&bias), &format!("paradigms[{i}]")))
                .collect::<Result<Vec<_>, _>>()?
        }
        RawDocument::Single(p) => vec![convert(p, None, "paradigm")?],
    };
    let mut seen = BTreeSet::new();
    for s in &specs {
        if !seen.insert(s.id.clone()) {
            return Err(TestbedError::DuplicateParadigm(s.id.clone()));
        }
    }
    Ok(specs)
}

pub fn load_testbed_file(path: &Path) -> Result<Vec<ParadigmSpec>, TestbedError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TestbedError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    load_testbed(&text)
}

/// Registry of paradigms keyed by id, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Testbed {
    paradigms: Vec<ParadigmSpec>,
}

impl Testbed {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The eight built-in paradigms.
    pub fn bundled() -> Self {
        let mut tb = Self::empty();
        for (name, text) in BUNDLED {
            let specs = load_testbed(text).unwrap_or_else(|e| panic!("bundled document {name} is invalid: {e}"));
            tb.register(specs).expect("bundled paradigm ids are unique");
        }
        tb
    }

    /// The raw bundled documents as `(file name, json)`.
    pub fn bundled_documents() -> &'static [(&'static str, &'static str)] {
        &BUNDLED
    }

    pub fn register(&mut self, specs: Vec<ParadigmSpec>) -> Result<(), TestbedError> {
        for s in specs {
            s.validate()?;
            if self.get(&s.id).is_some() {
                return Err(TestbedError::DuplicateParadigm(s.id));
            }
            self.paradigms.push(s);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ParadigmSpec> {
        self.paradigms.iter().find(|p| p.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&ParadigmSpec, TestbedError> {
        self.get(id).ok_or_else(|| TestbedError::UnknownParadigm(id.to_owned()))
    }

    pub fn paradigms(&self) -> &[ParadigmSpec] {
        &self.paradigms
    }

    pub fn for_bias(&self, bias: &BiasType) -> Vec<&ParadigmSpec> {
        self.paradigms.iter().filter(|p| &p.bias == bias).collect()
    }

    pub fn bias_types(&self) -> Vec<BiasType> {
        let mut out: Vec<BiasType> = Vec::new();
        for p in &self.paradigms {
            if !out.contains(&p.bias) {
                out.push(p.bias.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_text(name: &str) -> &'static str {
        BUNDLED.iter().find(|(n, _)| *n == name).unwrap().1
    }

    #[test]
    fn bundled_authority_document() {
        let specs = load_testbed(doc_text("authority.json")).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].id, "milgram_obedience");
        assert_eq!(specs[0].expand_variants().len(), 75);
        assert_eq!(specs[1].id, "stanford_prison");
        assert_eq!(specs[1].expand_variants().len(), 30);
        assert!(specs.iter().all(|s| s.bias == BiasType::Authority));
    }

    #[test]
    fn bundled_framing_document() {
        let specs = load_testbed(doc_text("framing.json")).unwrap();
        assert_eq!(specs.len(), 2);
        assert!(specs.iter().all(|s| s.expand_variants().len() == 15));
    }

    #[test]
    fn bundled_counts_per_paradigm() {
        let tb = Testbed::bundled();
        let counts: Vec<(String, usize)> =
            tb.paradigms().iter().map(|p| (p.id.clone(), p.expand_variants().len())).collect();
        let expect = [
            ("milgram_obedience", 75),
            ("stanford_prison", 30),
            ("asch_line", 15),
            ("hotel_towel", 15),
            ("wason_selection", 15),
            ("biased_information", 15),
            ("asian_disease", 15),
            ("investment_insurance", 15),
        ];
        assert_eq!(counts.len(), expect.len());
        for ((id, n), (eid, en)) in counts.iter().zip(expect) {
            assert_eq!((id.as_str(), *n), (eid, en));
        }
        for b in tb.bias_types() {
            assert_eq!(tb.for_bias(&b).len(), 2, "{b}");
        }
    }

    #[test]
    fn milgram_exemplar_renders_verbatim() {
        let tb = Testbed::bundled();
        let v = tb.get("milgram_obedience").unwrap().expand_variants();
        let hit = v.iter().find(|v| v.tags.iter().any(|t| t == "exemplar")).unwrap();
        assert!(hit.rendered_scenario.starts_with(
            "According to Prof. Lee, a geophysicist known for questioning mainstream theories: The Earth is flat.\n\
             The claim is that satellite images and photographs claiming to show a spherical Earth are heavily edited"
        ));
        assert!(v.iter().all(|v| !template::has_markers(&v.rendered_scenario)));
    }

    #[test]
    fn four_options_is_a_schema_violation() {
        let doc = r#"{"bias_type":"authority","paradigm_id":"p","template":"{x}",
            "placeholders":[{"values":{"x":"a"}}],"options":["1","2","3","4"],"weights":[4,3,2,1]}"#;
        match load_testbed(doc) {
            Err(TestbedError::Schema { field, .. }) => assert_eq!(field, "paradigm.options"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_weights_rejected() {
        let doc = r#"{"bias_type":"authority","paradigm_id":"p","template":"{x}",
            "placeholders":[{"values":{"x":"a"}}],"options":["1","2","3","4","5"],"weights":[0,1,2,3,4]}"#;
        assert!(matches!(load_testbed(doc), Err(TestbedError::Schema { field, .. }) if field == "paradigm.weights"));
    }

    #[test]
    fn variant_count_mismatch() {
        let doc = r#"{"bias_type":"authority","paradigm_id":"p","template":"{x}","expected_variant_count":2,
            "placeholders":[{"values":{"x":"a"}}],"options":["1","2","3","4","5"],"weights":[4,3,2,1,0]}"#;
        assert!(matches!(load_testbed(doc), Err(TestbedError::VariantCount { expected: 2, actual: 1, .. })));
    }

    #[test]
    fn missing_placeholder() {
        let doc = r#"{"bias_type":"authority","paradigm_id":"p","template":"{x} {y}",
            "placeholders":[{"values":{"x":"a"}}],"options":["1","2","3","4","5"],"weights":[4,3,2,1,0]}"#;
        assert!(matches!(load_testbed(doc), Err(TestbedError::MissingPlaceholder { placeholder, .. }) if placeholder == "y"));
    }

    #[test]
    fn unresolved_marker_in_value() {
        let doc = r#"{"bias_type":"authority","paradigm_id":"p","template":"{x}",
            "placeholders":[{"values":{"x":"{y}"}}],"options":["1","2","3","4","5"],"weights":[4,3,2,1,0]}"#;
        assert!(matches!(load_testbed(doc), Err(TestbedError::Schema { .. })));
    }

    #[test]
    fn unknown_field_is_reported() {
        let doc = r#"{"bias_type":"authority","paradigms":[{"paradigm_id":"p","template":"{x}","bogus":1,
            "placeholders":[{"values":{"x":"a"}}],"options":["1","2","3","4","5"],"weights":[4,3,2,1,0]}]}"#;
        match load_testbed(doc) {
            Err(TestbedError::Parse(msg)) => assert!(msg.contains("bogus"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_binding_renders_template() {
        let doc = r#"{"bias_type":"halo","paradigm_id":"p","template":"Meet {who} from {where}.",
            "placeholders":[{"values":{"who":"Ann","where":"Oslo"}}],"options":["1","2","3","4","5"],"weights":[4,3,2,1,0]}"#;
        let spec = load_testbed(doc).unwrap().remove(0);
        assert_eq!(spec.bias, BiasType::Custom("halo".into()));
        let v = spec.expand_variants();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rendered_scenario, "Meet Ann from Oslo.");
        assert_eq!(spec.expand_variants(), v);
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut tb = Testbed::bundled();
        let again = tb.get("asch_line").unwrap().clone();
        assert!(matches!(tb.register(vec![again]), Err(TestbedError::DuplicateParadigm(_))));
    }
}
