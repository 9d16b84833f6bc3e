use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NameFlags {
    pub title: String,
    pub title_length: usize,
    pub posix_portable: bool,
    pub windows_allowed: bool,
    pub is_untitled: bool,
    pub has_copy: bool,
    pub has_test: bool,
}

const WINDOWS_RESERVED: &[&str] = &["CON", "PRN", "AUX", "NUL"];
const WINDOWS_FORBIDDEN_CHARS: &[char] = &['<', '>', ':', '"', '/', '\\', '|', '?', '*'];

/// Filename title: basename with the final `.ipynb` removed.
pub fn notebook_title(path: &str) -> &str {
    let base = path.rsplit(['/', '\\']).next().unwrap_or(path);
    base.strip_suffix(".ipynb").unwrap_or(base)
}

pub fn is_posix_portable(title: &str) -> bool {
    !title.is_empty()
        && !title.starts_with('-')
        && title
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

pub fn is_windows_allowed(title: &str) -> bool {
    if title.contains(WINDOWS_FORBIDDEN_CHARS) {
        return false;
    }
    let stem = title.split('.').next().unwrap_or("").to_ascii_uppercase();
    if WINDOWS_RESERVED.contains(&stem.as_str()) {
        return false;
    }
    let numbered = |prefix: &str| {
        stem.strip_prefix(prefix)
            .is_some_and(|d| d.len() == 1 && matches!(d.as_bytes()[0], b'1'..=b'9'))
    };
    !(numbered("COM") || numbered("LPT"))
}

pub fn check_name(path: &str) -> NameFlags {
    let title = notebook_title(path).to_string();
    let lower = title.to_lowercase();
    NameFlags {
        title_length: title.chars().count(),
        posix_portable: is_posix_portable(&title),
        windows_allowed: is_windows_allowed(&title),
        is_untitled: lower.contains("untitled"),
        has_copy: lower.contains("copy"),
        has_test: lower.contains("test"),
        title,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn untitled() {
        let f = check_name("notebooks/Untitled3.ipynb");
        assert!(f.is_untitled && f.posix_portable);
        assert_eq!(f.title, "Untitled3");
    }

    #[test]
    fn space_is_not_portable() {
        assert!(!check_name("figure 1.ipynb").posix_portable);
    }

    #[test]
    fn reserved_windows_names() {
        assert!(!check_name("aux.ipynb").windows_allowed);
        assert!(!check_name("COM3.ipynb").windows_allowed);
        assert!(!check_name("lpt1.backup.ipynb").windows_allowed);
        assert!(check_name("COM10.ipynb").windows_allowed);
        assert!(check_name("auxiliary.ipynb").windows_allowed);
        assert!(!check_name("what?.ipynb").windows_allowed);
    }

    #[test]
    fn title_length_and_inner_dots() {
        assert_eq!(check_name("Index.ipynb").title_length, 5);
        assert_eq!(check_name("a.b.ipynb").title, "a.b");
        let f = check_name("Test - Copy1.ipynb");
        assert!(f.has_copy && f.has_test && !f.posix_portable);
        assert!(!check_name("-lead.ipynb").posix_portable);
    }

    fn oracle(title: &str) -> bool {
        const CLASS: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789._-";
        !title.is_empty() && !title.starts_with('-') && title.chars().all(|c| CLASS.contains(c))
    }

    proptest! {
        #[test]
        fn portability_matches_character_class(title in "\\PC{0,12}") {
            let flags = check_name(&format!("{title}.ipynb"));
            prop_assume!(!title.contains('/') && !title.contains('\\'));
            prop_assert_eq!(flags.posix_portable, oracle(&title));
        }
    }
}
