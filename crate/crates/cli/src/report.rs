//! Machine-readable run reports.
//!
//! Timings are moved out of the results into a `volatile` section so the
//! rest of the report is byte-identical across runs with the same config.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub results: Value,
    /// Files written next to the report.
    pub artifacts: Vec<String>,
    /// Wall times and the finishing timestamp, keyed by their JSON path in `results`.
    pub volatile: Map<String, Value>,
}

/// Keys that carry timings.
fn is_volatile_key(k: &str) -> bool {
    k == "wall_time_s" || k.ends_with("_time_s")
}

fn strip(value: &mut Value, path: &str, out: &mut Map<String, Value>) {
    match value {
        Value::Object(map) => {
            let keys: Vec<String> = map.keys().cloned().collect();
            for k in keys {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if is_volatile_key(&k) {
                    if let Some(v) = map.remove(&k) {
                        out.insert(p, v);
                    }
                } else if let Some(v) = map.get_mut(&k) {
                    strip(v, &p, out);
                }
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                strip(v, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

impl Report {
    pub fn new(command: &str, seed: u64, config: impl Serialize, results: impl Serialize) -> CliResult<Self> {
        let config = serde_json::to_value(config)?;
        let mut results = serde_json::to_value(results)?;
        let mut volatile = Map::new();
        strip(&mut results, "", &mut volatile);
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        volatile.insert("finished_at_unix_s".into(), now.into());
        Ok(Self { command: command.into(), seed, config, results, artifacts: Vec::new(), volatile })
    }

    /// The report without its volatile section, as compact JSON.
    pub fn stable_payload(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serialises");
        if let Value::Object(m) = &mut v {
            m.remove("volatile");
        }
        v.to_string()
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn timings_move_to_the_volatile_section() {
        let results = json!({"a": 1, "wall_time_s": 2.5, "inner": [{"fit_time_s": 1.0, "r2": 0.9}]});
        let r = Report::new("fit", 3, json!({}), results).unwrap();
        assert_eq!(r.results, json!({"a": 1, "inner": [{"r2": 0.9}]}));
        assert_eq!(r.volatile["wall_time_s"], json!(2.5));
        assert_eq!(r.volatile["inner[0].fit_time_s"], json!(1.0));
        let again = Report::new("fit", 3, json!({}), json!({"a": 1, "wall_time_s": 9.0, "inner": [{"fit_time_s": 3.0, "r2": 0.9}]})).unwrap();
        assert_eq!(r.stable_payload(), again.stable_payload());
    }
}
