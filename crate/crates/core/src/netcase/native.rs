use super::{CaseError, NetworkCase};

/// Parses the native JSON case format. Unbounded limits are `null`.
pub fn parse_native_case(text: &str) -> Result<NetworkCase, CaseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let case: NetworkCase = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CaseError::Schema(inner.to_string())
        } else {
            CaseError::Schema(format!("{path}: {inner}"))
        }
    })?;
    case.validate()?;
    Ok(case)
}

pub fn emit_native_case(case: &NetworkCase) -> String {
    let mut out = serde_json::to_string_pretty(case).expect("cases always serialize");
    out.push('\n');
    out
}
