//! Domain-name decomposition against the bundled public-suffix snapshot.

use std::net::{Ipv4Addr, Ipv6Addr};

use crate::psl::SuffixList;

/// A decomposed domain name. `full` preserves the input (minus at most one
/// trailing dot); suffix, registered domain and `core` are lowercase. `core`
/// is every label left of the public suffix concatenated with the dots
/// removed (dashes kept), the string most lexical features operate on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DomainName {
    pub full: String,
    pub labels: Vec<String>,
    pub public_suffix: String,
    pub registered_domain: String,
    pub core: String,
    pub is_wildcard: bool,
    pub is_idn: bool,
    pub is_ip: bool,
    /// False when the suffix came from the last-label fallback rule.
    pub suffix_known: bool,
}

impl DomainName {
    /// Lowercase labels left of the public suffix, wildcard label excluded.
    pub fn stem_labels(&self) -> Vec<String> {
        let skip = usize::from(self.is_wildcard);
        let take = self
            .labels
            .len()
            .saturating_sub(skip + self.suffix_label_count());
        self.labels
            .iter()
            .skip(skip)
            .take(take)
            .map(|l| l.to_lowercase())
            .collect()
    }

    /// The name without its public suffix, dots kept: "a.b.example.com" -> "a.b.example".
    pub fn stem(&self) -> String {
        self.stem_labels().join(".")
    }

    fn suffix_label_count(&self) -> usize {
        if self.public_suffix.is_empty() {
            0
        } else {
            self.public_suffix.split('.').count()
        }
    }
}

/// Normalization applied to certificate domain strings before storage:
/// lowercase, strip at most one trailing dot. Punycode stays as-is.
pub fn normalize_domain(name: &str) -> String {
    let stripped = name.strip_suffix('.').unwrap_or(name);
    stripped.to_lowercase()
}

/// Decomposes any non-empty string; never fails. IP literals get
/// `public_suffix = ""`, `registered_domain = full`, `core` = full sans dots.
pub fn decompose_domain(name: &str) -> DomainName {
    let full = name.strip_suffix('.').unwrap_or(name).to_string();
    let labels: Vec<String> = if full.is_empty() {
        Vec::new()
    } else {
        full.split('.').map(str::to_string).collect()
    };
    let lower: Vec<String> = labels.iter().map(|l| l.to_lowercase()).collect();
    let lower_full = lower.join(".");

    let is_ip = lower_full.parse::<Ipv4Addr>().is_ok()
        || (lower_full.contains(':') && lower_full.parse::<Ipv6Addr>().is_ok());
    let is_wildcard = labels.first().map(String::as_str) == Some("*");
    let is_idn = lower.iter().any(|l| l.starts_with("xn--"));

    if is_ip || labels.is_empty() {
        return DomainName {
            core: lower_full.replace('.', ""),
            registered_domain: lower_full,
            public_suffix: String::new(),
            full,
            labels,
            is_wildcard,
            is_idn,
            is_ip,
            suffix_known: false,
        };
    }

    // Suffix rules are matched on the labels right of the wildcard.
    let match_labels = &lower[usize::from(is_wildcard)..];
    let m = SuffixList::bundled().match_labels(match_labels);
    let n = match_labels.len();
    let public_suffix = match_labels[n - m.len..].join(".");
    let registered_domain = if n > m.len {
        match_labels[n - m.len - 1..].join(".")
    } else {
        match_labels.join(".")
    };
    let core = match_labels[..n - m.len].concat();

    DomainName {
        full,
        labels,
        public_suffix,
        registered_domain,
        core,
        is_wildcard,
        is_idn,
        is_ip,
        suffix_known: m.known,
    }
}
