//! Config resolution: defaults, then a config file (or a previous run's
//! resolved config), then `--seed`, then `--set` overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Object keys below an empty object or `null` default are not checked.
fn open(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::Object(m) => m.is_empty(),
        _ => false,
    }
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

/// Merge `user` into `base`, rejecting keys the defaults do not know.
pub fn merge(base: &mut Value, user: Value, pointer: &str) -> Result<(), CliError> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) if !b.is_empty() => {
            for (k, v) in u {
                let here = format!("{pointer}/{}", escape(&k));
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(CliError::Config(format!("{here}: unknown key"))),
                }
            }
            Ok(())
        }
        (b @ Value::Object(_), u) if !open(b) => Err(CliError::Config(format!(
            "{}: expected an object, got {}",
            if pointer.is_empty() { "/" } else { pointer },
            kind(&u)
        ))),
        (b, u) => {
            *b = u;
            Ok(())
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// `a.b=v` or `/a/b=v`; the value is JSON if it parses, else a string.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {text:?} is not of the form key=value")))?;
    let key = key.trim();
    let path: Vec<String> = if let Some(p) = key.strip_prefix('/') {
        p.split('/').map(|s| s.replace("~1", "/").replace("~0", "~")).collect()
    } else {
        key.split('.').map(String::from).collect()
    };
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("override key {key:?} has an empty segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut node = root;
    let mut pointer = String::new();
    for (i, seg) in path.iter().enumerate() {
        pointer.push('/');
        pointer.push_str(&escape(seg));
        let last = i + 1 == path.len();
        let is_open = open(node);
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let Value::Object(map) = node else {
            return Err(CliError::Config(format!("{pointer}: parent is not an object")));
        };
        if !map.contains_key(seg) {
            if !is_open {
                return Err(CliError::Config(format!("{pointer}: unknown key")));
            }
            map.insert(seg.clone(), if last { Value::Null } else { Value::Object(Default::default()) });
        }
        node = map.get_mut(seg).expect("key present");
    }
    *node = value;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: JSON syntax error: {e}", path.display())))
}

/// The layered resolution; returns the typed config and its JSON echo.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(
    base: Option<Value>,
    overrides: &[(Vec<String>, Value)],
) -> Result<(T, Value), CliError> {
    let mut resolved = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(user) = base {
        merge(&mut resolved, user, "")?;
    }
    for (path, value) in overrides {
        apply_override(&mut resolved, path, value.clone())?;
    }
    let typed: T = serde_json::from_value(resolved).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    let echo = serde_json::to_value(&typed).expect("config serializes");
    Ok((typed, echo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct Inner {
        x: u32,
        range: [f64; 2],
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    #[serde(deny_unknown_fields, default)]
    struct Outer {
        seed: u64,
        inner: Inner,
        extra: std::collections::BTreeMap<String, Inner>,
    }

    impl Default for Inner {
        fn default() -> Self {
            Self { x: 1, range: [0.0, 1.0] }
        }
    }

    impl Default for Outer {
        fn default() -> Self {
            Self { seed: 0, inner: Inner::default(), extra: Default::default() }
        }
    }

    #[test]
    fn empty_object_gives_defaults() {
        let (c, _) = resolve::<Outer>(Some(json!({})), &[]).unwrap();
        assert_eq!(c, Outer::default());
    }

    #[test]
    fn unknown_nested_key_is_named() {
        let err = resolve::<Outer>(Some(json!({"inner": {"y": 2}})), &[]).unwrap_err();
        assert_eq!(err.to_string(), "/inner/y: unknown key");
    }

    #[test]
    fn override_beats_file() {
        let o = parse_override("seed=9").unwrap();
        let (c, _) = resolve::<Outer>(Some(json!({"seed": 3})), &[o]).unwrap();
        assert_eq!(c.seed, 9);
        let o = parse_override("/inner/range=[2,3]").unwrap();
        let (c, _) = resolve::<Outer>(None, &[o]).unwrap();
        assert_eq!(c.inner.range, [2.0, 3.0]);
    }

    #[test]
    fn override_unknown_key_rejected_but_open_maps_accept() {
        let o = parse_override("inner.z=1").unwrap();
        assert_eq!(resolve::<Outer>(None, &[o]).unwrap_err().to_string(), "/inner/z: unknown key");
        let o = parse_override("extra.a.x=5").unwrap();
        let (c, _) = resolve::<Outer>(None, &[o]).unwrap();
        assert_eq!(c.extra["a"], Inner { x: 5, range: [0.0, 1.0] });
    }

    #[test]
    fn string_fallback() {
        let (_, v) = parse_override("name=abc").unwrap();
        assert_eq!(v, json!("abc"));
        assert!(parse_override("noequals").is_err());
    }
}
