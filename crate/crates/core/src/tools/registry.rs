use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Whether a tool reads, edits, or executes against the workspace. Replay
/// re-runs mutations and recomputes inspections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolClass {
    Inspect,
    Mutate,
    Execute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Value,
    pub class: ToolClass,
}

impl ToolSpec {
    /// Function descriptor advertised to the model.
    pub fn descriptor(&self) -> Value {
        json!({"name": self.name, "description": self.description, "parameters": self.parameters})
    }
}

pub const TOOL_NAMES: [&str; 10] = [
    "read_file",
    "write_file",
    "list_directory",
    "glob",
    "search_file_content",
    "read_many_files",
    "run_shell_command",
    "replace",
    "backend_test",
    "frontend_test",
];

#[derive(Debug, Clone)]
pub struct ToolRegistry {
    specs: Vec<ToolSpec>,
}

fn object(properties: Value, required: &[&str]) -> Value {
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false
    })
}

impl Default for ToolRegistry {
    fn default() -> Self {
        let str_ = json!({"type": "string", "minLength": 1});
        let ports = json!({"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1});
        let specs = vec![
            ToolSpec {
                name: "read_file",
                description: "Read a text file. Optional 1-based line offset and line limit select a window; very large files are truncated with a marker.",
                parameters: object(
                    json!({
                        "path": str_,
                        "offset": {"type": "integer", "minimum": 1},
                        "limit": {"type": "integer", "minimum": 1}
                    }),
                    &["path"],
                ),
                class: ToolClass::Inspect,
            },
            ToolSpec {
                name: "write_file",
                description: "Write content to a file, creating parent directories and replacing any previous content.",
                parameters: object(json!({"path": str_, "content": {"type": "string"}}), &["path", "content"]),
                class: ToolClass::Mutate,
            },
            ToolSpec {
                name: "list_directory",
                description: "List the immediate entries of a directory. Directories are marked; ignore globs exclude entries.",
                parameters: object(
                    json!({"path": str_, "ignore": {"type": "array", "items": {"type": "string"}}}),
                    &["path"],
                ),
                class: ToolClass::Inspect,
            },
            ToolSpec {
                name: "glob",
                description: "Find files matching a glob pattern. Returns absolute paths, most recently modified first.",
                parameters: object(json!({"pattern": str_, "path": str_}), &["pattern"]),
                class: ToolClass::Inspect,
            },
            ToolSpec {
                name: "search_file_content",
                description: "Search file contents with a regular expression. Returns matching lines with file path and line number.",
                parameters: object(json!({"pattern": str_, "include": str_, "path": str_}), &["pattern"]),
                class: ToolClass::Inspect,
            },
            ToolSpec {
                name: "read_many_files",
                description: "Read several files or glob patterns and concatenate their text with a header per file.",
                parameters: object(
                    json!({"paths": {"type": "array", "items": str_, "minItems": 1}}),
                    &["paths"],
                ),
                class: ToolClass::Inspect,
            },
            ToolSpec {
                name: "run_shell_command",
                description: "Run one bash command in the workspace. Set background for long-running processes; set is_input to send the command text as input to the running background process.",
                parameters: object(
                    json!({
                        "command": {"type": "string"},
                        "directory": str_,
                        "is_input": {"type": "boolean"},
                        "background": {"type": "boolean"}
                    }),
                    &["command"],
                ),
                class: ToolClass::Execute,
            },
            ToolSpec {
                name: "replace",
                description: "Replace exact literal text in a file. By default old_string must occur exactly once; expected_replacements sets the required count. On any mismatch the file is left untouched.",
                parameters: object(
                    json!({
                        "path": str_,
                        "old_string": str_,
                        "new_string": {"type": "string"},
                        "expected_replacements": {"type": "integer", "minimum": 1}
                    }),
                    &["path", "old_string", "new_string"],
                ),
                class: ToolClass::Mutate,
            },
            ToolSpec {
                name: "backend_test",
                description: "Start the backend with start_command in directory_path, wait until every required port is announced in its logs, send one HTTP request, then shut it down. Returns status, response body and console log.",
                parameters: object(
                    json!({
                        "directory_path": str_,
                        "start_command": str_,
                        "required_ports": ports,
                        "url": str_,
                        "method": {"enum": ["GET", "POST", "PUT", "PATCH", "DELETE", "HEAD", "OPTIONS"]},
                        "data": {},
                        "headers": {"type": "object"}
                    }),
                    &["directory_path", "start_command", "required_ports", "url", "method"],
                ),
                class: ToolClass::Execute,
            },
            ToolSpec {
                name: "frontend_test",
                description: "Start the website with start_command in directory_path and let a GUI agent test it in a browser following the instruction, watching terminal and browser console for errors. Returns a five-part report with functionality and appearance grades.",
                parameters: object(
                    json!({
                        "directory_path": str_,
                        "start_command": str_,
                        "required_ports": ports,
                        "instruction": str_
                    }),
                    &["directory_path", "start_command", "required_ports", "instruction"],
                ),
                class: ToolClass::Execute,
            },
        ];
        Self { specs }
    }
}

impl ToolRegistry {
    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn class_of(&self, name: &str) -> Option<ToolClass> {
        self.get(name).map(|s| s.class)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.specs.iter().map(|s| s.name)
    }

    pub fn names_of_class(&self, class: ToolClass) -> Vec<&'static str> {
        self.specs.iter().filter(|s| s.class == class).map(|s| s.name).collect()
    }

    /// Descriptors for `allowed`, in registry order.
    pub fn descriptors(&self, allowed: &[&str]) -> Vec<Value> {
        self.specs.iter().filter(|s| allowed.contains(&s.name)).map(ToolSpec::descriptor).collect()
    }
}
