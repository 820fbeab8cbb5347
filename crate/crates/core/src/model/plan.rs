//! Development plans exchanged between the planner and the coding agents.
//!
//! Field names follow the camelCase JSON the planner is asked to produce.
//! Deserialization is lenient (missing fields default) so that structural
//! problems surface through [`DevelopmentPlan::violations`] instead of as
//! opaque parse errors; that lets callers send the model a precise
//! correction.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SchemaField {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Entity {
    pub name: String,
    pub brief_description: String,
    pub main_fields: Vec<SchemaField>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ApiEndpoint {
    pub name: String,
    pub method: String,
    pub path: String,
    pub description: String,
    pub request_schema: Vec<SchemaField>,
    pub response_schema: Vec<SchemaField>,
    pub status_codes: Vec<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BackendPlan {
    pub entities: Vec<Entity>,
    pub api_endpoints: Vec<ApiEndpoint>,
    pub business_rules: Vec<String>,
    pub non_functional: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Section {
    pub name: String,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Layout {
    pub header: bool,
    pub footer: bool,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct DataFlow {
    pub endpoint_path: String,
    pub action: String,
    #[serde(rename = "optimisticUI")]
    pub optimistic_ui: bool,
    pub loading_states: Value,
    pub error_handling: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct NavigationLink {
    pub label: String,
    pub target_route: String,
    pub when: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Page {
    pub name: String,
    pub route: String,
    pub description: String,
    pub layout: Layout,
    pub data_flows: Vec<DataFlow>,
    pub navigation_links: Vec<NavigationLink>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SharedComponent {
    pub name: String,
    pub purpose: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FrontendPlan {
    pub pages: Vec<Page>,
    pub shared_components: Vec<SharedComponent>,
    pub state_management: String,
    #[serde(rename = "accessibilityAndUX")]
    pub accessibility_and_ux: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevelopmentPlan {
    #[serde(rename = "backendPlan")]
    pub backend: BackendPlan,
    #[serde(rename = "frontendPlan")]
    pub frontend: FrontendPlan,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan must be a JSON object with exactly the keys backendPlan and frontendPlan; found {0:?}")]
    TopLevelKeys(Vec<String>),
    #[error("plan does not match the expected structure: {0}")]
    Shape(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    SchemaFieldMissingName { endpoint: String, schema: &'static str },
    SchemaFieldMissingType { endpoint: String, schema: &'static str, field: String },
    BareArrayType { endpoint: String, field: String },
    DynamicBeforeStatic { dynamic: String, r#static: String },
    UnknownDataFlowEndpoint { page: String, endpoint_path: String },
}

impl PlanViolation {
    pub fn is_route_order(&self) -> bool {
        matches!(self, PlanViolation::DynamicBeforeStatic { .. })
    }
}

impl std::fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanViolation::SchemaFieldMissingName { endpoint, schema } => {
                write!(f, "endpoint `{endpoint}`: a {schema} item has no name")
            }
            PlanViolation::SchemaFieldMissingType { endpoint, schema, field } => {
                write!(f, "endpoint `{endpoint}`: {schema} item `{field}` has no type")
            }
            PlanViolation::BareArrayType { endpoint, field } => write!(
                f,
                "endpoint `{endpoint}`: field `{field}` uses `array` without an element type; write array<type>"
            ),
            PlanViolation::DynamicBeforeStatic { dynamic, r#static } => write!(
                f,
                "dynamic route `{dynamic}` is listed before static route `{static}`; place static routes first"
            ),
            PlanViolation::UnknownDataFlowEndpoint { page, endpoint_path } => write!(
                f,
                "page `{page}` has a data flow to `{endpoint_path}`, which is not a backend apiEndpoints path"
            ),
        }
    }
}

/// A route is dynamic when any segment is a parameter (`{id}` or `:id`).
pub fn is_dynamic_route(path: &str) -> bool {
    route_segments(path).any(is_param_segment)
}

fn route_segments(path: &str) -> impl Iterator<Item = &str> {
    let path = path.split(['?', '#']).next().unwrap_or("");
    path.split('/').filter(|s| !s.is_empty())
}

fn is_param_segment(segment: &str) -> bool {
    (segment.starts_with('{') && segment.ends_with('}')) || segment.starts_with(':')
}

/// True when a concrete or templated `candidate` path is served by the
/// endpoint `template`. Parameter segments on either side match any segment.
pub fn route_matches(template: &str, candidate: &str) -> bool {
    let candidate = candidate
        .trim()
        .split_once(' ')
        .filter(|(verb, _)| verb.chars().all(|c| c.is_ascii_uppercase()))
        .map(|(_, rest)| rest.trim())
        .unwrap_or(candidate.trim());
    let a: Vec<&str> = route_segments(template).collect();
    let b: Vec<&str> = route_segments(candidate).collect();
    a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x == y || is_param_segment(x) || is_param_segment(y))
}

impl BackendPlan {
    pub fn violations(&self) -> Vec<PlanViolation> {
        let mut out = Vec::new();
        for ep in &self.api_endpoints {
            let label = if ep.name.is_empty() { ep.path.clone() } else { ep.name.clone() };
            for (schema, fields) in [("requestSchema", &ep.request_schema), ("responseSchema", &ep.response_schema)] {
                for field in fields {
                    if field.name.trim().is_empty() {
                        out.push(PlanViolation::SchemaFieldMissingName { endpoint: label.clone(), schema });
                    }
                    if field.ty.trim().is_empty() {
                        out.push(PlanViolation::SchemaFieldMissingType {
                            endpoint: label.clone(),
                            schema,
                            field: field.name.clone(),
                        });
                    } else if field.ty.trim().eq_ignore_ascii_case("array") {
                        out.push(PlanViolation::BareArrayType { endpoint: label.clone(), field: field.name.clone() });
                    }
                }
            }
        }
        let mut first_dynamic: Option<&str> = None;
        for ep in &self.api_endpoints {
            if is_dynamic_route(&ep.path) {
                first_dynamic.get_or_insert(&ep.path);
            } else if let Some(dynamic) = first_dynamic {
                out.push(PlanViolation::DynamicBeforeStatic {
                    dynamic: dynamic.to_string(),
                    r#static: ep.path.clone(),
                });
            }
        }
        out
    }

    /// Stable partition: static routes first, relative order otherwise kept.
    pub fn sort_static_first(&mut self) {
        self.api_endpoints.sort_by_key(|ep| is_dynamic_route(&ep.path));
    }

    pub fn has_endpoint_for(&self, path: &str) -> bool {
        self.api_endpoints.iter().any(|ep| route_matches(&ep.path, path))
    }
}

impl DevelopmentPlan {
    /// Parses the planner's JSON, requiring exactly the two top-level keys.
    pub fn from_value(value: &Value) -> Result<Self, PlanError> {
        let keys: Vec<String> = value.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
        let mut sorted = keys.clone();
        sorted.sort();
        if sorted != ["backendPlan", "frontendPlan"] {
            return Err(PlanError::TopLevelKeys(keys));
        }
        Ok(serde_json::from_value(value.clone())?)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("plan serialization is infallible")
    }

    pub fn violations(&self) -> Vec<PlanViolation> {
        let mut out = self.backend.violations();
        for page in &self.frontend.pages {
            for flow in &page.data_flows {
                if !flow.endpoint_path.trim().is_empty() && !self.backend.has_endpoint_for(&flow.endpoint_path) {
                    out.push(PlanViolation::UnknownDataFlowEndpoint {
                        page: page.name.clone(),
                        endpoint_path: flow.endpoint_path.clone(),
                    });
                }
            }
        }
        out
    }
}
