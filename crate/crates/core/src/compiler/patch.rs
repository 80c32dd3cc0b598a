use serde_json::Value;

use super::SpecError;

/// Overlay of `value` at the JSON pointer `path` of the emitted chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub path: String,
    pub value: Value,
}

fn merge(target: &mut Value, value: &Value) {
    match (target, value) {
        (Value::Object(t), Value::Object(v)) => {
            for (k, val) in v {
                match t.get_mut(k) {
                    Some(existing) => merge(existing, val),
                    None => {
                        t.insert(k.clone(), val.clone());
                    }
                }
            }
        }
        (t, v) => *t = v.clone(),
    }
}

fn tokens(path: &str) -> Vec<String> {
    if path.is_empty() || path == "/" {
        return Vec::new();
    }
    path.trim_start_matches('/').split('/').map(|t| t.replace("~1", "/").replace("~0", "~")).collect()
}

/// Deep-merges each patch in order. Missing object members along the path
/// are created; array indices must exist, except that `-` or the array
/// length appends.
pub fn apply_patches(chart: &Value, patches: &[Patch]) -> Result<Value, SpecError> {
    let mut out = chart.clone();
    for (i, patch) in patches.iter().enumerate() {
        let err = |msg: String| SpecError::new(format!("/patches/{i}/path"), msg);
        let toks = tokens(&patch.path);
        let mut cur = &mut out;
        for (depth, tok) in toks.iter().enumerate() {
            let last = depth + 1 == toks.len();
            cur = match cur {
                Value::Object(map) => map.entry(tok.clone()).or_insert_with(|| {
                    if last {
                        Value::Null
                    } else {
                        Value::Object(Default::default())
                    }
                }),
                Value::Array(items) => {
                    let idx = if tok == "-" {
                        items.len()
                    } else {
                        tok.parse::<usize>().map_err(|_| err(format!("`{tok}` is not an array index")))?
                    };
                    if idx == items.len() && last {
                        items.push(Value::Null);
                    }
                    items.get_mut(idx).ok_or_else(|| err(format!("index {idx} out of bounds at `{tok}`")))?
                }
                _ => return Err(err(format!("`{}` cannot be created under a scalar", patch.path))),
            };
        }
        merge(cur, &patch.value);
    }
    Ok(out)
}
