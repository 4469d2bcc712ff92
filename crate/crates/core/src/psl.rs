//! Public-suffix matching over a bundled, versioned snapshot.
//!
//! The snapshot file follows the publicsuffix.org rule format: plain rules,
//! `*.` wildcard rules, `!` exception rules, `//` comments. Matching follows
//! the published algorithm: the longest matching rule wins, exception rules
//! beat wildcard rules, and a name with no matching rule falls back to its
//! last label (the implicit `*` rule).

use std::collections::HashSet;
use std::sync::OnceLock;

const SNAPSHOT: &str = include_str!("../data/public_suffix_list.dat");

#[derive(Debug, Default)]
pub struct SuffixList {
    exact: HashSet<String>,
    // base of a "*.base" rule
    wildcard: HashSet<String>,
    // name of a "!name" rule
    exception: HashSet<String>,
}

/// Result of suffix resolution over the labels of a name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuffixMatch {
    /// Number of labels forming the public suffix.
    pub len: usize,
    /// False when only the fallback (last-label) rule applied.
    pub known: bool,
}

impl SuffixList {
    pub fn parse(data: &str) -> Self {
        let mut list = SuffixList::default();
        for line in data.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") || line.starts_with('#') {
                continue;
            }
            let rule = line.split_whitespace().next().unwrap().to_lowercase();
            if let Some(base) = rule.strip_prefix("*.") {
                list.wildcard.insert(base.to_string());
            } else if let Some(name) = rule.strip_prefix('!') {
                list.exception.insert(name.to_string());
            } else {
                list.exact.insert(rule);
            }
        }
        list
    }

    /// The snapshot shipped with the crate.
    pub fn bundled() -> &'static SuffixList {
        static LIST: OnceLock<SuffixList> = OnceLock::new();
        LIST.get_or_init(|| SuffixList::parse(SNAPSHOT))
    }

    /// True when `suffix` (dotted, lowercase) is itself a listed rule.
    pub fn is_known_suffix(&self, suffix: &str) -> bool {
        if self.exact.contains(suffix) {
            return true;
        }
        match suffix.split_once('.') {
            Some((_, base)) => self.wildcard.contains(base),
            None => false,
        }
    }

    /// Resolves the public suffix of `labels` (lowercase, no wildcard label).
    pub fn match_labels(&self, labels: &[String]) -> SuffixMatch {
        let n = labels.len();
        for k in (1..=n).rev() {
            let cand = labels[n - k..].join(".");
            if self.exception.contains(&cand) {
                return SuffixMatch { len: k - 1, known: true };
            }
        }
        let mut best: Option<usize> = None;
        for k in 1..=n {
            let cand = labels[n - k..].join(".");
            if self.exact.contains(&cand) {
                best = Some(k);
            }
            if k >= 2 && self.wildcard.contains(&labels[n - k + 1..].join(".")) {
                best = Some(best.map_or(k, |b| b.max(k)));
            }
        }
        match best {
            Some(len) => SuffixMatch { len, known: true },
            None => SuffixMatch { len: 1.min(n), known: false },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &str) -> Vec<String> {
        s.split('.').map(str::to_string).collect()
    }

    #[test]
    fn exact_and_second_level() {
        let l = SuffixList::bundled();
        assert_eq!(l.match_labels(&labels("netflix.com")), SuffixMatch { len: 1, known: true });
        assert_eq!(l.match_labels(&labels("example.co.uk")), SuffixMatch { len: 2, known: true });
        assert_eq!(l.match_labels(&labels("a.b.example.co.uk")).len, 2);
    }

    #[test]
    fn wildcard_and_exception() {
        let l = SuffixList::bundled();
        // *.ck: any single label under ck is a suffix ...
        assert_eq!(l.match_labels(&labels("shop.foo.ck")), SuffixMatch { len: 2, known: true });
        // ... except www.ck, which is registrable.
        assert_eq!(l.match_labels(&labels("www.ck")), SuffixMatch { len: 1, known: true });
        assert_eq!(l.match_labels(&labels("sub.www.ck")), SuffixMatch { len: 1, known: true });
    }

    #[test]
    fn fallback_last_label() {
        let l = SuffixList::bundled();
        let m = l.match_labels(&labels("host.notatld"));
        assert_eq!(m, SuffixMatch { len: 1, known: false });
    }

    #[test]
    fn brand_tlds_present() {
        let l = SuffixList::bundled();
        assert!(l.is_known_suffix("netflix"));
        assert!(l.is_known_suffix("ga"));
        assert!(l.is_known_suffix("co.uk"));
        assert!(!l.is_known_suffix("ftl"));
    }
}
