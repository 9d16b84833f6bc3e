use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Python,
    R,
    Julia,
    Matlab,
    Bash,
    Groovy,
    Scala,
    Java,
    Sos,
    Other(String),
    Unknown,
}

impl Language {
    /// Maps a declared language name (`language_info.name` or
    /// `kernelspec.language`).
    pub fn from_declared(name: &str) -> Language {
        let n = name.trim().to_ascii_lowercase();
        match n.as_str() {
            "python" | "python2" | "python3" | "ipython" | "ipython2" | "ipython3" => Language::Python,
            "r" => Language::R,
            "julia" => Language::Julia,
            "matlab" => Language::Matlab,
            "bash" | "sh" | "shell" => Language::Bash,
            "groovy" => Language::Groovy,
            "scala" => Language::Scala,
            "java" => Language::Java,
            "sos" => Language::Sos,
            "" => Language::Unknown,
            _ => Language::Other(n),
        }
    }

    /// Heuristic mapping from a kernelspec *name*.
    pub fn from_kernel_name(name: &str) -> Language {
        let n = name.trim().to_ascii_lowercase();
        if n.is_empty() {
            return Language::Unknown;
        }
        if n.starts_with("python") || n.starts_with("conda-env-") && n.ends_with("-py") || n.starts_with("pyspark") {
            return Language::Python;
        }
        if n == "ir" || n == "r" || n.starts_with("ir") && n[2..].chars().all(|c| c.is_ascii_digit()) {
            return Language::R;
        }
        if n.starts_with("julia") {
            return Language::Julia;
        }
        match n.as_str() {
            "matlab" | "imatlab" | "matlab_kernel" => Language::Matlab,
            "bash" => Language::Bash,
            "groovy" => Language::Groovy,
            "scala" | "spylon-kernel" => Language::Scala,
            "java" | "ijava" => Language::Java,
            "sos" => Language::Sos,
            _ => Language::Other(n),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Language::Python => "python",
            Language::R => "r",
            Language::Julia => "julia",
            Language::Matlab => "matlab",
            Language::Bash => "bash",
            Language::Groovy => "groovy",
            Language::Scala => "scala",
            Language::Java => "java",
            Language::Sos => "sos",
            Language::Other(s) => s,
            Language::Unknown => "unknown",
        }
    }

    /// Inverse of [`Language::as_str`].
    pub fn parse(s: &str) -> Language {
        match s {
            "unknown" => Language::Unknown,
            other => Language::from_declared(other),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `"3.7.6"` → `"3.7"`; a bare major version is kept as is.
pub fn major_minor(version: &str) -> Option<String> {
    let mut parts = version.trim().split('.');
    let major = parts
        .next()
        .filter(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit()))?;
    match parts.next() {
        Some(minor) => {
            let digits: String = minor.chars().take_while(char::is_ascii_digit).collect();
            if digits.is_empty() {
                Some(major.to_string())
            } else {
                Some(format!("{major}.{digits}"))
            }
        }
        None => Some(major.to_string()),
    }
}

/// Language precedence: `language_info.name`, then `kernelspec.language`,
/// then the kernelspec name heuristic.
pub fn detect_language_version(metadata: &Map<String, Value>) -> (Language, Option<String>) {
    let info = metadata.get("language_info");
    let spec = metadata.get("kernelspec");
    let text = |v: Option<&Value>, key: &str| {
        v.and_then(|o| o.get(key))
            .and_then(Value::as_str)
            .map(str::to_string)
            .filter(|s| !s.trim().is_empty())
    };

    let language = text(info, "name")
        .map(|n| Language::from_declared(&n))
        .or_else(|| text(spec, "language").map(|n| Language::from_declared(&n)))
        .or_else(|| text(spec, "name").map(|n| Language::from_kernel_name(&n)))
        .unwrap_or(Language::Unknown);

    let version = info
        .and_then(|o| o.get("version"))
        .and_then(|v| match v {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        })
        .and_then(|v| major_minor(&v));
    (language, version)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn detect(v: Value) -> (Language, Option<String>) {
        detect_language_version(v.as_object().unwrap())
    }

    #[test]
    fn language_info_wins() {
        let got = detect(json!({"language_info": {"name": "python", "version": "3.7.6"},
            "kernelspec": {"name": "ir", "language": "R"}}));
        assert_eq!(got, (Language::Python, Some("3.7".into())));
    }

    #[test]
    fn kernelspec_name_heuristic() {
        assert_eq!(detect(json!({"kernelspec": {"name": "ir"}})), (Language::R, None));
        assert_eq!(detect(json!({"kernelspec": {"name": "julia-1.5"}})).0, Language::Julia);
        assert_eq!(
            detect(json!({"kernelspec": {"name": "python3", "display_name": "Python 3"}})).0,
            Language::Python
        );
        assert_eq!(
            detect(json!({"kernelspec": {"name": "conda-env-analysis-py"}})).0,
            Language::Python
        );
        assert_eq!(detect(json!({"kernelspec": {"name": "ijava"}})).0, Language::Java);
        assert_eq!(
            detect(json!({"kernelspec": {"name": "xcpp17"}})).0,
            Language::Other("xcpp17".into())
        );
    }

    #[test]
    fn kernelspec_language_before_name() {
        assert_eq!(
            detect(json!({"kernelspec": {"name": "custom", "language": "python"}})).0,
            Language::Python
        );
    }

    #[test]
    fn nothing_declared() {
        assert_eq!(detect(json!({})), (Language::Unknown, None));
        assert_eq!(
            detect(json!({"language_info": {"name": ""}})),
            (Language::Unknown, None)
        );
    }

    #[test]
    fn version_splitting() {
        assert_eq!(major_minor("3.10.4").as_deref(), Some("3.10"));
        assert_eq!(major_minor("2.7.18+").as_deref(), Some("2.7"));
        assert_eq!(major_minor("1.5.3").as_deref(), Some("1.5"));
        assert_eq!(major_minor("3").as_deref(), Some("3"));
        assert_eq!(major_minor("abc"), None);
    }

    #[test]
    fn as_str_roundtrip() {
        for l in [
            Language::Python,
            Language::R,
            Language::Sos,
            Language::Unknown,
            Language::Other("haskell".into()),
        ] {
            assert_eq!(Language::parse(l.as_str()), l);
        }
    }
}
