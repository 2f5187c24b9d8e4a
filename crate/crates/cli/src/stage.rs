use serde::Serialize;
use serde_json::{json, Value};

/// What one pipeline stage produced.
#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub summary: Value,
    /// `(file name, contents)` written next to the report.
    #[serde(skip)]
    pub files: Vec<(String, String)>,
    /// Names of the invariants that did not hold.
    pub failures: Vec<String>,
}

impl Stage {
    pub fn new(name: &str) -> Self {
        Stage { name: name.into(), summary: json!({}), files: Vec::new(), failures: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn set(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).expect("serializable");
        self.summary.as_object_mut().expect("object summary").insert(key.into(), v);
    }

    /// Records `invariant` as failed unless `ok`.
    pub fn require(&mut self, ok: bool, invariant: &str) {
        if !ok {
            self.failures.push(invariant.into());
        }
    }

    pub fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn skip(name: &str, reason: &str) -> Self {
        let mut s = Stage::new(name);
        s.set("skipped", reason);
        s
    }
}
