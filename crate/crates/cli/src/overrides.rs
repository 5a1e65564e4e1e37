//! `--set key.path=value` overrides applied to a JSON config before it is
//! deserialized, so misspelled keys still hit the schema's unknown-field
//! check.

use serde_json::Value;

/// Parses `value` as JSON, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

pub fn apply(config: &mut Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override {assignment:?} is not of the form key=value"))?;
    if path.is_empty() {
        return Err(format!("override {assignment:?} has an empty key"));
    }
    let mut node = config;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), parse_value(raw));
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| format!("override {path}: {part:?} is not an array index"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("override {path}: index {idx} out of range (length {len})"))?;
                if last {
                    *slot = parse_value(raw);
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("override {path}: {part:?} is inside a non-object value")),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sets_nested_values() {
        let mut v = json!({"train": {"lr": 0.1}, "seeds": [1, 2]});
        apply(&mut v, "train.lr=0.5").unwrap();
        apply(&mut v, "seeds.1=7").unwrap();
        apply(&mut v, "task.kind=sine").unwrap();
        assert_eq!(v, json!({"train": {"lr": 0.5}, "seeds": [1, 7], "task": {"kind": "sine"}}));
    }

    #[test]
    fn rejects_malformed_assignments() {
        let mut v = json!({"seeds": [1]});
        assert!(apply(&mut v, "seeds").is_err());
        assert!(apply(&mut v, "seeds.4=1").is_err());
        assert!(apply(&mut v, "=3").is_err());
    }
}
