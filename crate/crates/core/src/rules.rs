//! Heuristic point-based scorer in the Phishing Catcher style: keyword,
//! TLD, nesting and issuer rules accumulate points which are capped and
//! normalized to [0,1]. Needs no training.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::cert::CertificateRecord;
use crate::domain::decompose_domain;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    /// Substring match on the suffix-stripped name, points per distinct hit.
    pub keyword_weights: BTreeMap<String, u32>,
    /// Exact match on the public suffix (no leading dot).
    pub suspicious_tlds: BTreeMap<String, u32>,
    /// Labels beyond this count each accrue `nesting_points`.
    pub nesting_threshold: u32,
    pub nesting_points: u32,
    /// Substring match on the issuer DN, applied once per certificate.
    pub issuer_substring: String,
    pub issuer_points: u32,
    /// Normalization constant: score = min(1, points / cap).
    pub cap: u32,
}

impl RuleSet {
    pub fn validate(&self) -> Result<(), String> {
        if self.cap == 0 {
            return Err("rule cap must be positive".into());
        }
        Ok(())
    }

    /// The rule table shipped with the binary.
    pub fn bundled() -> &'static RuleSet {
        static RULES: OnceLock<RuleSet> = OnceLock::new();
        RULES.get_or_init(|| {
            let rules: RuleSet = serde_json::from_str(include_str!("../data/default_rules.json"))
                .expect("bundled rule table parses");
            rules.validate().expect("bundled rule table valid");
            rules
        })
    }
}

/// Sums rule points over the certificate's domains, plus the issuer rule,
/// and normalizes. Monotone in every weight, bounded by 1.
pub fn score_rules(record: &CertificateRecord, rules: &RuleSet) -> f64 {
    let mut points: u64 = 0;
    for name in record.domains() {
        let d = decompose_domain(&name);
        let stem = d.stem();
        for (kw, pts) in &rules.keyword_weights {
            if stem.contains(kw.as_str()) {
                points += u64::from(*pts);
            }
        }
        if let Some(pts) = rules.suspicious_tlds.get(&d.public_suffix) {
            points += u64::from(*pts);
        }
        let labels = d.labels.len() as u32;
        if labels > rules.nesting_threshold {
            points += u64::from((labels - rules.nesting_threshold) * rules.nesting_points);
        }
    }
    if !rules.issuer_substring.is_empty() && record.issuer_dn.contains(&rules.issuer_substring) {
        points += u64::from(rules.issuer_points);
    }
    (points as f64 / f64::from(rules.cap)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::{fingerprint_bytes, CertificateRecord, KeyAlgorithm, SubjectAttr};
    use chrono::{TimeZone, Utc};

    fn cert(cn: &str, sans: &[&str], issuer: &str) -> CertificateRecord {
        CertificateRecord {
            fingerprint: fingerprint_bytes(cn.as_bytes()),
            common_name: Some(cn.to_string()),
            sans: sans.iter().map(|s| s.to_string()).collect(),
            issuer_dn: issuer.to_string(),
            subject_attrs: [SubjectAttr::CN].into_iter().collect(),
            subject_char_count: cn.len() as u32,
            extension_count: 0,
            policy_oids: vec![],
            not_before: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            not_after: Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap(),
            key_algorithm: KeyAlgorithm::Rsa,
            key_size_bits: 2048,
            has_ocsp: false,
            has_cdp: false,
            ct_log_index: None,
            seen_at: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn pinned_example_saturates_the_cap() {
        // paypal (70) + secure (40) + .ga TLD (20) + issuer (10) = cap (140)
        let rules = RuleSet::bundled();
        assert_eq!(rules.keyword_weights["paypal"], 70);
        assert_eq!(rules.keyword_weights["secure"], 40);
        assert_eq!(rules.suspicious_tlds["ga"], 20);
        assert_eq!(rules.issuer_points, 10);
        assert_eq!(rules.cap, 140);
        let c = cert("paypal-secured.ga", &[], "CN=Let's Encrypt Authority X3");
        assert_eq!(score_rules(&c, rules), 1.0);
    }

    #[test]
    fn no_hits_scores_zero() {
        let c = cert("static.example.org", &[], "CN=DigiCert SHA2");
        assert_eq!(score_rules(&c, RuleSet::bundled()), 0.0);
        // four labels: one beyond the nesting threshold, nothing else
        let deep = cert("anycast.ftl.netflix.com", &[], "CN=DigiCert SHA2");
        assert!((score_rules(&deep, RuleSet::bundled()) - 3.0 / 140.0).abs() < 1e-12);
    }

    #[test]
    fn raising_any_weight_never_lowers_the_score() {
        let c = cert("mail.example.org", &["login.example.org"], "CN=Let's Encrypt R3");
        let base = RuleSet::bundled().clone();
        let base_score = score_rules(&c, &base);
        let mut boosted = base.clone();
        for w in boosted.keyword_weights.values_mut() {
            *w += 5;
        }
        boosted.issuer_points += 5;
        boosted.nesting_points += 5;
        assert!(score_rules(&c, &boosted) >= base_score);
        assert!(score_rules(&c, &boosted) <= 1.0);
    }

    #[test]
    fn nesting_counts_labels_beyond_threshold() {
        let rules = RuleSet {
            keyword_weights: BTreeMap::new(),
            suspicious_tlds: BTreeMap::new(),
            nesting_threshold: 3,
            nesting_points: 3,
            issuer_substring: String::new(),
            issuer_points: 0,
            cap: 140,
        };
        let flat = cert("a.b.com", &[], "");
        assert_eq!(score_rules(&flat, &rules), 0.0);
        let nested = cert("www.paypal.com.evil.example.com", &[], "");
        // 6 labels, 3 beyond the threshold
        assert!((score_rules(&nested, &rules) - 9.0 / 140.0).abs() < 1e-12);
    }
}
