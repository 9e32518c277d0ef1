//! Module self-description served on `/about` and `/processors`.
//!
//! Parsing is field-aware: every failure names the endpoint and attribute so
//! a module author can see exactly what to fix.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use url::Url;
use uuid::Uuid;

use crate::datamodel::{DataModelVersion, PortType};

pub const ABOUT_ENDPOINT: &str = "/about";
pub const PROCESSORS_ENDPOINT: &str = "/processors";
pub const DOCS_ENDPOINT: &str = "/docs";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Problem {
    Missing,
    Invalid(String),
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct DescriptorError {
    pub endpoint: &'static str,
    /// Attribute name as it appears in the Module API table (`UUID`, `icon`, ...).
    pub field: String,
    /// Index of the offending processor in the `/processors` list.
    pub processor: Option<usize>,
    pub problem: Problem,
}

impl fmt::Display for DescriptorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.problem {
            Problem::Missing => write!(f, "missing required attribute `{}`", self.field)?,
            Problem::Invalid(why) => write!(f, "invalid attribute `{}`: {why}", self.field)?,
            Problem::Duplicate => write!(f, "duplicate `{}`", self.field)?,
        }
        write!(f, " in {}", self.endpoint)?;
        if let Some(i) = self.processor {
            write!(f, " (processor #{i})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDescriptor {
    pub uuid: Uuid,
    pub name: String,
    pub version: String,
    pub data_model: DataModelVersion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organisation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    /// Where the backend reached the module. Never part of the `/about` payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<Url>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPort {
    pub name: String,
    pub types: Vec<PortType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPort {
    pub name: String,
    #[serde(rename = "type")]
    pub port_type: PortType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessorDescriptor {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_name: Option<String>,
    pub data_endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui_endpoint: Option<String>,
    pub icon: String,
    pub category: String,
    pub inputs: Vec<InputPort>,
    pub outputs: Vec<OutputPort>,
    /// Owning module, filled in by the registry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<Uuid>,
}

impl ProcessorDescriptor {
    pub fn input(&self, name: &str) -> Option<&InputPort> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&OutputPort> {
        self.outputs.iter().find(|p| p.name == name)
    }

    /// Display label: the short name when the module provides one.
    pub fn label(&self) -> &str {
        self.short_name.as_deref().unwrap_or(&self.name)
    }

    /// Rewrites relative endpoint addresses against the module's base URL.
    /// The icon is left untouched.
    pub fn resolve_endpoints(&mut self, base: &Url) -> Result<(), url::ParseError> {
        self.data_endpoint = resolve(base, &self.data_endpoint)?.to_string();
        for endpoint in [&mut self.settings_endpoint, &mut self.ui_endpoint]
            .into_iter()
            .flatten()
        {
            *endpoint = resolve(base, endpoint)?.to_string();
        }
        Ok(())
    }
}

/// Normalises a base URL so relative endpoints resolve beneath it.
pub fn normalize_base(base: &Url) -> Url {
    let mut base = base.clone();
    if !base.path().ends_with('/') {
        let path = format!("{}/", base.path());
        base.set_path(&path);
    }
    base
}

/// Absolute URLs pass through; anything else is taken relative to `base`.
/// A leading `/` is relative to the module root, not the host root.
pub fn resolve(base: &Url, endpoint: &str) -> Result<Url, url::ParseError> {
    match Url::parse(endpoint) {
        Ok(url) => Ok(url),
        Err(url::ParseError::RelativeUrlWithoutBase) => {
            normalize_base(base).join(endpoint.trim_start_matches('/'))
        }
        Err(e) => Err(e),
    }
}

struct Fields<'a> {
    map: &'a Map<String, Value>,
    endpoint: &'static str,
    processor: Option<usize>,
}

impl Fields<'_> {
    fn err(&self, field: &str, problem: Problem) -> DescriptorError {
        DescriptorError {
            endpoint: self.endpoint,
            field: field.to_string(),
            processor: self.processor,
            problem,
        }
    }

    /// `key` is the wire name, `label` the attribute name used in errors.
    fn required_str(&self, key: &str, label: &str) -> Result<String, DescriptorError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Err(self.err(label, Problem::Missing)),
            Some(Value::String(s)) if s.trim().is_empty() => Err(self.err(label, Problem::Missing)),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(self.err(label, Problem::Invalid(format!("expected text, got {other}")))),
        }
    }

    fn optional_str(&self, key: &str) -> Result<Option<String>, DescriptorError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) if s.is_empty() => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(self.err(key, Problem::Invalid(format!("expected text, got {other}")))),
        }
    }

    fn required_list(&self, key: &str) -> Result<&Vec<Value>, DescriptorError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Err(self.err(key, Problem::Missing)),
            Some(Value::Array(items)) => Ok(items),
            Some(other) => Err(self.err(key, Problem::Invalid(format!("expected a list, got {other}")))),
        }
    }
}

impl ModuleDescriptor {
    /// Parses an `/about` payload. `authors` may be a single text or a list.
    pub fn from_about(value: &Value) -> Result<Self, DescriptorError> {
        let Value::Object(map) = value else {
            return Err(DescriptorError {
                endpoint: ABOUT_ENDPOINT,
                field: "body".into(),
                processor: None,
                problem: Problem::Invalid("expected an object".into()),
            });
        };
        let f = Fields {
            map,
            endpoint: ABOUT_ENDPOINT,
            processor: None,
        };
        let uuid_text = match map.get("uuid").or_else(|| map.get("UUID")) {
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            Some(Value::String(_)) | Some(Value::Null) | None => {
                return Err(f.err("UUID", Problem::Missing))
            }
            Some(other) => return Err(f.err("UUID", Problem::Invalid(format!("expected text, got {other}")))),
        };
        let uuid = Uuid::parse_str(&uuid_text)
            .map_err(|e| f.err("UUID", Problem::Invalid(e.to_string())))?;
        let name = f.required_str("name", "name")?;
        let version = f.required_str("version", "version")?;
        let data_model = f
            .required_str("data_model", "data_model")?
            .parse()
            .map_err(|e: crate::datamodel::ParseVersionError| {
                f.err("data_model", Problem::Invalid(e.to_string()))
            })?;
        let authors = match map.get("authors") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Array(items)) => items
                .iter()
                .map(|a| match a {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(f.err("authors", Problem::Invalid(format!("expected text, got {other}")))),
                })
                .collect::<Result<_, _>>()?,
            Some(other) => {
                return Err(f.err("authors", Problem::Invalid(format!("expected text or list, got {other}"))))
            }
        };
        Ok(Self {
            uuid,
            name,
            version,
            data_model,
            desc: f.optional_str("desc")?,
            authors,
            organisation: f.optional_str("organisation")?,
            url: f.optional_str("url")?,
            base_url: None,
        })
    }

    /// The `/about` payload a module serves (no `base_url`).
    pub fn to_about(&self) -> Value {
        let mut wire = self.clone();
        wire.base_url = None;
        serde_json::to_value(wire).expect("descriptor serializes")
    }
}

impl ProcessorDescriptor {
    /// Parses a `/processors` payload: a list of processor objects.
    pub fn list_from_wire(value: &Value) -> Result<Vec<Self>, DescriptorError> {
        let Value::Array(items) = value else {
            return Err(DescriptorError {
                endpoint: PROCESSORS_ENDPOINT,
                field: "body".into(),
                processor: None,
                problem: Problem::Invalid("expected a list of processors".into()),
            });
        };
        let mut names = BTreeSet::new();
        let mut processors = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let p = Self::from_wire(item, i)?;
            if !names.insert(p.name.clone()) {
                return Err(DescriptorError {
                    endpoint: PROCESSORS_ENDPOINT,
                    field: "name".into(),
                    processor: Some(i),
                    problem: Problem::Duplicate,
                });
            }
            processors.push(p);
        }
        Ok(processors)
    }

    fn from_wire(value: &Value, index: usize) -> Result<Self, DescriptorError> {
        let Value::Object(map) = value else {
            return Err(DescriptorError {
                endpoint: PROCESSORS_ENDPOINT,
                field: "processor".into(),
                processor: Some(index),
                problem: Problem::Invalid("expected an object".into()),
            });
        };
        let f = Fields {
            map,
            endpoint: PROCESSORS_ENDPOINT,
            processor: Some(index),
        };
        let name = f.required_str("name", "name")?;
        let data_endpoint = f.required_str("data_endpoint", "data_endpoint")?;
        let icon = f.required_str("icon", "icon")?;
        let category = f.required_str("category", "category")?;

        let port_name = |port: &Map<String, Value>, list: &str| -> Result<String, DescriptorError> {
            match port.get("name") {
                Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
                _ => Err(f.err(&format!("{list}.name"), Problem::Missing)),
            }
        };
        let port_type = |raw: &Value, field: &str| -> Result<PortType, DescriptorError> {
            match raw {
                Value::String(s) => s
                    .parse()
                    .map_err(|e: crate::datamodel::UnknownType| f.err(field, Problem::Invalid(e.to_string()))),
                other => Err(f.err(field, Problem::Invalid(format!("expected a type name, got {other}")))),
            }
        };

        let mut inputs = Vec::new();
        for raw in f.required_list("inputs")? {
            let Value::Object(port) = raw else {
                return Err(f.err("inputs", Problem::Invalid("each input must be an object".into())));
            };
            let name = port_name(port, "inputs")?;
            let types = match port.get("types") {
                Some(Value::Array(types)) if !types.is_empty() => types
                    .iter()
                    .map(|t| port_type(t, "inputs.types"))
                    .collect::<Result<Vec<_>, _>>()?,
                Some(Value::Array(_)) => {
                    return Err(f.err("inputs.types", Problem::Invalid("must list at least one type".into())))
                }
                _ => return Err(f.err("inputs.types", Problem::Missing)),
            };
            inputs.push(InputPort { name, types });
        }

        let mut outputs = Vec::new();
        for raw in f.required_list("outputs")? {
            let Value::Object(port) = raw else {
                return Err(f.err("outputs", Problem::Invalid("each output must be an object".into())));
            };
            let name = port_name(port, "outputs")?;
            let port_type = match port.get("type") {
                Some(t) => port_type(t, "outputs.type")?,
                None => return Err(f.err("outputs.type", Problem::Missing)),
            };
            outputs.push(OutputPort { name, port_type });
        }
        if outputs.is_empty() {
            return Err(f.err("outputs", Problem::Invalid("must declare at least one output".into())));
        }
        let mut seen = BTreeSet::new();
        if !inputs.iter().all(|p| seen.insert(p.name.as_str())) {
            return Err(f.err("inputs.name", Problem::Duplicate));
        }
        seen.clear();
        if !outputs.iter().all(|p| seen.insert(p.name.as_str())) {
            return Err(f.err("outputs.name", Problem::Duplicate));
        }

        Ok(Self {
            name,
            short_name: f.optional_str("short_name")?,
            data_endpoint,
            settings_endpoint: f.optional_str("settings_endpoint")?,
            ui_endpoint: f.optional_str("ui_endpoint")?,
            icon,
            category,
            inputs,
            outputs,
            module: None,
        })
    }

    /// The wire form a module serves (no owning-module field).
    pub fn to_wire(&self) -> Value {
        let mut wire = self.clone();
        wire.module = None;
        serde_json::to_value(wire).expect("descriptor serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::AnnotationTypeId;
    use serde_json::json;

    fn about() -> Value {
        json!({
            "uuid": "0b0f6f1e-7d55-4a39-a4f3-0f3c3d4c9b10",
            "name": "angler-preproc",
            "version": "0.1.0",
            "data_model": "1.0.0",
            "authors": "Ana Novak"
        })
    }

    fn processor() -> Value {
        json!({
            "name": "dictionary-ner",
            "data_endpoint": "processors/dictionary-ner/data",
            "icon": "icons/ner.svg",
            "category": "semantic",
            "inputs": [{"name": "tokens", "types": ["tokens"]}],
            "outputs": [{"name": "entities", "type": "sequence_tagging"}]
        })
    }

    #[test]
    fn about_parses_single_author_as_list() {
        let m = ModuleDescriptor::from_about(&about()).unwrap();
        assert_eq!(m.authors, vec!["Ana Novak".to_string()]);
        assert_eq!(m.data_model, DataModelVersion::new(1, 0, 0));
        assert_eq!(ModuleDescriptor::from_about(&m.to_about()).unwrap(), m);
    }

    #[test]
    fn about_missing_uuid_names_field_and_endpoint() {
        let mut v = about();
        v.as_object_mut().unwrap().remove("uuid");
        let err = ModuleDescriptor::from_about(&v).unwrap_err();
        assert_eq!(err.field, "UUID");
        assert_eq!(err.endpoint, "/about");
        assert_eq!(err.problem, Problem::Missing);
        assert_eq!(err.to_string(), "missing required attribute `UUID` in /about");
    }

    #[test]
    fn about_requires_every_underlined_attribute() {
        for field in ["name", "version", "data_model"] {
            let mut v = about();
            v.as_object_mut().unwrap().remove(field);
            let err = ModuleDescriptor::from_about(&v).unwrap_err();
            assert_eq!((err.field.as_str(), err.problem), (field, Problem::Missing));
        }
    }

    #[test]
    fn processor_missing_icon_is_named() {
        let mut p = processor();
        p.as_object_mut().unwrap().remove("icon");
        let err = ProcessorDescriptor::list_from_wire(&json!([p])).unwrap_err();
        assert_eq!(err.field, "icon");
        assert_eq!(err.processor, Some(0));
        assert_eq!(err.endpoint, "/processors");
    }

    #[test]
    fn processor_rejects_unknown_types_and_empty_lists() {
        let mut p = processor();
        p["inputs"][0]["types"] = json!(["named_entities"]);
        assert!(ProcessorDescriptor::list_from_wire(&json!([p])).is_err());
        let mut p = processor();
        p["inputs"][0]["types"] = json!([]);
        assert!(ProcessorDescriptor::list_from_wire(&json!([p])).is_err());
        let mut p = processor();
        p["outputs"] = json!([]);
        assert!(ProcessorDescriptor::list_from_wire(&json!([p])).is_err());
    }

    #[test]
    fn duplicate_processor_names_rejected() {
        let err = ProcessorDescriptor::list_from_wire(&json!([processor(), processor()])).unwrap_err();
        assert_eq!(err.problem, Problem::Duplicate);
        assert_eq!(err.processor, Some(1));
    }

    #[test]
    fn parses_ports() {
        let list = ProcessorDescriptor::list_from_wire(&json!([processor()])).unwrap();
        let p = &list[0];
        assert_eq!(p.input("tokens").unwrap().types, vec![PortType::Annotation(AnnotationTypeId::Tokens)]);
        assert_eq!(p.output("entities").unwrap().port_type, AnnotationTypeId::SequenceTagging.into());
        assert_eq!(p.label(), "dictionary-ner");
        assert_eq!(ProcessorDescriptor::list_from_wire(&json!([p.to_wire()])).unwrap()[0], *p);
    }

    #[test]
    fn endpoints_resolve_under_base_path() {
        let base = Url::parse("http://127.0.0.1:9000/mods/ner").unwrap();
        assert_eq!(
            resolve(&base, "/processors/x/data").unwrap().as_str(),
            "http://127.0.0.1:9000/mods/ner/processors/x/data"
        );
        assert_eq!(
            resolve(&base, "http://other:1/data").unwrap().as_str(),
            "http://other:1/data"
        );
    }
}
