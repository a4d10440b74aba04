//! JSON output with lexicographically ordered keys.

use serde::Serialize;

use crate::error::{Error, Result};

/// Serializes through `serde_json::Value`, whose object map is ordered, so
/// keys come out sorted at every nesting level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| Error::Format(e.to_string()))
}

pub fn to_sorted_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct S {
        zeta: u32,
        alpha: Inner,
    }

    #[derive(Serialize)]
    struct Inner {
        y: u32,
        b: u32,
    }

    #[test]
    fn keys_sorted_recursively() {
        let s = to_sorted_json(&S {
            zeta: 1,
            alpha: Inner { y: 2, b: 3 },
        })
        .unwrap();
        assert_eq!(s, r#"{"alpha":{"b":3,"y":2},"zeta":1}"#);
    }
}
