//! The 126-column feature catalog: 22 certificate features, 55 domain
//! features, 49 keyword features, in a fixed order, plus the selection preset
//! and per-certificate vector averaging.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::cert::{CertificateRecord, KeyAlgorithm, SubjectAttr};
use crate::domain::{decompose_domain, DomainName};
use crate::psl::SuffixList;
use crate::text;

pub const CERT_FEATURES: usize = 22;
pub const DOMAIN_FEATURES: usize = 55;
pub const KEYWORD_FEATURES: usize = 49;
pub const TOTAL_FEATURES: usize = CERT_FEATURES + DOMAIN_FEATURES + KEYWORD_FEATURES;
/// Index of the first keyword feature; everything from here up is the
/// keyword category.
pub const KEYWORD_BLOCK_START: usize = CERT_FEATURES + DOMAIN_FEATURES;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("empty input")]
    EmptyInput,
    #[error("mismatched vectors: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    All,
    Selected,
}

impl FeatureSet {
    pub fn len(self) -> usize {
        match self {
            FeatureSet::All => TOTAL_FEATURES,
            FeatureSet::Selected => selected_indices().len(),
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn names(self) -> Vec<&'static str> {
        match self {
            FeatureSet::All => feature_names().iter().map(|s| s.as_str()).collect(),
            FeatureSet::Selected => selected_indices()
                .iter()
                .map(|&i| feature_names()[i].as_str())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubject {
    /// Index into the certificate's deduplicated CN+SAN domain list.
    Domain(usize),
    /// Averaged over all domain vectors of the certificate.
    Cert,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub feature_set: FeatureSet,
    pub fingerprint: [u8; 32],
    pub subject: FeatureSubject,
}

impl FeatureVector {
    /// Projects an `all` vector onto the selected preset, preserving order.
    pub fn select(&self) -> FeatureVector {
        assert_eq!(self.feature_set, FeatureSet::All, "already projected");
        FeatureVector {
            values: selected_indices().iter().map(|&i| self.values[i]).collect(),
            feature_set: FeatureSet::Selected,
            fingerprint: self.fingerprint,
            subject: self.subject,
        }
    }
}

const TABLE_NAMES: [&str; CERT_FEATURES + DOMAIN_FEATURES] = [
    "is_ov",
    "is_ev",
    "is_dv",
    "sub_has_c",
    "sub_has_st",
    "sub_has_l",
    "sub_only_cn",
    "sub_has_cn",
    "sub_dn_count",
    "sub_char_count",
    "sub_ext_count",
    "valid_period",
    "policies_count",
    "is_wildcard",
    "has_ocsp",
    "has_cdp",
    "san_count",
    "average_sd_count",
    "san_tld_count",
    "key_algorithm",
    "key_size",
    "issuer",
    "sub_cn_entropy",
    "sub_cn_is_com",
    "name_san_entropy",
    "has_uppercase_letters",
    "num_dash",
    "num_dash_rd",
    "num_tokens",
    "tld_in_token",
    "https_in_domain",
    "longest_token",
    "special_char_ratio",
    "is_ip",
    "is_idn_domain",
    "san_to_alexa_entropy",
    "vowel_ratio",
    "digit_ratio",
    "length",
    "contains_wwwdot",
    "contains_subdomain_of_only_digits",
    "subdomain_lengths_mean",
    "parts",
    "contains_digits",
    "has_valid_tld",
    "contains_one_char_subdomains",
    "prefix_repetition",
    "char_diversity",
    "contains_tld_as_infix",
    "alphabet_size",
    "shannon_entropy",
    "hex_part_ratio",
    "underscore_ratio",
    "ratio_of_repeated_chars",
    "consecutive_consonant_ratio",
    "consecutive_digits_ratio",
    "1_gram_std",
    "1_gram_median",
    "1_gram_mean",
    "1_gram_min",
    "1_gram_max",
    "1_gram_bottom_quartile",
    "1_gram_top_quartile",
    "2_gram_std",
    "2_gram_median",
    "2_gram_mean",
    "2_gram_min",
    "2_gram_max",
    "2_gram_bottom_quartile",
    "2_gram_top_quartile",
    "3_gram_std",
    "3_gram_median",
    "3_gram_mean",
    "3_gram_min",
    "3_gram_max",
    "3_gram_bottom_quartile",
    "3_gram_top_quartile",
];

/// Canonical column names, catalog order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names: Vec<String> = TABLE_NAMES.iter().map(|s| s.to_string()).collect();
        for kw in KeywordList::bundled().iter() {
            names.push(format!("kw_{kw}"));
        }
        names.push("has_any_keyword".into());
        names.push("keyword_count".into());
        assert_eq!(names.len(), TOTAL_FEATURES);
        names
    })
}

pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

/// Indices of the 50-feature selection preset, ascending.
pub fn selected_indices() -> &'static [usize] {
    static INDICES: OnceLock<Vec<usize>> = OnceLock::new();
    INDICES.get_or_init(|| {
        let raw = include_str!("../data/selected_features.txt");
        let idx: Vec<usize> = raw
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|name| feature_index(name).unwrap_or_else(|| panic!("unknown feature {name}")))
            .collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]), "preset must be in catalog order");
        idx
    })
}

// ── bundled data tables ──────────────────────────────────────────────────

pub struct KeywordList(Vec<String>);

impl KeywordList {
    pub fn bundled() -> &'static KeywordList {
        static KW: OnceLock<KeywordList> = OnceLock::new();
        KW.get_or_init(|| {
            KeywordList(
                include_str!("../data/keywords.txt")
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(|l| l.to_ascii_lowercase())
                    .collect(),
            )
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Popularity ranks for registered domains; line order is the rank.
pub struct PopularRanks(HashMap<String, usize>);

impl PopularRanks {
    pub fn bundled() -> &'static PopularRanks {
        static RANKS: OnceLock<PopularRanks> = OnceLock::new();
        RANKS.get_or_init(|| {
            PopularRanks(
                include_str!("../data/popular_domains.txt")
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .enumerate()
                    .map(|(i, d)| (d.to_ascii_lowercase(), i + 1))
                    .collect(),
            )
        })
    }

    pub fn rank(&self, registered_domain: &str) -> Option<usize> {
        self.0.get(registered_domain).copied()
    }

    pub fn contains(&self, registered_domain: &str) -> bool {
        self.0.contains_key(registered_domain)
    }
}

fn ev_policy_oids() -> &'static HashSet<&'static str> {
    static OIDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    OIDS.get_or_init(|| {
        include_str!("../data/ev_oids.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

// ── categorical codec ────────────────────────────────────────────────────

/// Integer encodings for the two categorical columns. The issuer dictionary
/// is learned from training data (frequency-ranked, ties lexicographic,
/// code 0 doubles as the unseen bucket); key_algorithm uses the fixed codes
/// of [`KeyAlgorithm::code`]. Frozen once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalCodec {
    issuer: BTreeMap<String, u32>,
}

impl CategoricalCodec {
    pub fn fit<'a>(issuers: impl IntoIterator<Item = &'a str>) -> CategoricalCodec {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for dn in issuers {
            *counts.entry(dn).or_default() += 1;
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        CategoricalCodec {
            issuer: ranked
                .into_iter()
                .enumerate()
                .map(|(code, (dn, _))| (dn.to_string(), code as u32))
                .collect(),
        }
    }

    pub fn issuer_code(&self, issuer_dn: &str) -> u32 {
        self.issuer.get(issuer_dn).copied().unwrap_or(0)
    }

    pub fn key_algorithm_code(&self, alg: KeyAlgorithm) -> u32 {
        alg.code()
    }
}

// ── extraction ───────────────────────────────────────────────────────────

fn b(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

pub fn extract_cert_features(
    r: &CertificateRecord,
    codec: &CategoricalCodec,
) -> [f64; CERT_FEATURES] {
    let ev_set = ev_policy_oids();
    let is_ev = r.policy_oids.iter().any(|o| ev_set.contains(o.as_str()));
    let ov_oid = r.policy_oids.iter().any(|o| o == "2.23.140.1.2.2" || o == "2.23.140.1.2.3");
    let dv_oid = r.policy_oids.iter().any(|o| o == "2.23.140.1.2.1");
    let has_org = r.subject_attrs.contains(&SubjectAttr::O);
    // validation level: policy OIDs first, subject shape as fallback
    let is_ov = !is_ev && (ov_oid || (!dv_oid && has_org));
    let is_dv = !is_ev && !is_ov;

    let san_decomps: Vec<DomainName> = r.sans.iter().map(|s| decompose_domain(s)).collect();
    let average_sd_count = if san_decomps.is_empty() {
        0.0
    } else {
        san_decomps.iter().map(|d| d.labels.len() as f64).sum::<f64>() / san_decomps.len() as f64
    };
    let san_tld_count = san_decomps
        .iter()
        .map(|d| d.public_suffix.as_str())
        .collect::<HashSet<_>>()
        .len();

    [
        b(is_ov),
        b(is_ev),
        b(is_dv),
        b(r.subject_attrs.contains(&SubjectAttr::C)),
        b(r.subject_attrs.contains(&SubjectAttr::ST)),
        b(r.subject_attrs.contains(&SubjectAttr::L)),
        b(r.subject_attrs.len() == 1 && r.subject_attrs.contains(&SubjectAttr::CN)),
        b(r.subject_attrs.contains(&SubjectAttr::CN)),
        r.subject_attrs.len() as f64,
        r.subject_char_count as f64,
        r.extension_count as f64,
        r.valid_period_days() as f64,
        r.policy_oids.len() as f64,
        b(r.is_wildcard()),
        b(r.has_ocsp),
        b(r.has_cdp),
        r.sans.len() as f64,
        average_sd_count,
        san_tld_count as f64,
        codec.key_algorithm_code(r.key_algorithm) as f64,
        r.key_size_bits as f64,
        codec.issuer_code(&r.issuer_dn) as f64,
    ]
}

pub fn extract_domain_features(
    d: &DomainName,
    cn: &DomainName,
    sans: &[DomainName],
    popular: &PopularRanks,
) -> [f64; DOMAIN_FEATURES] {
    let suffixes = SuffixList::bundled();
    let full_lower = d.full.to_lowercase();
    let core = d.core.as_str();
    let core_len = core.chars().count();
    let full_len = d.full.chars().count();
    let stem_labels = d.stem_labels();
    let stem = d.stem();

    let tokens: Vec<&str> =
        full_lower.split(['.', '-']).filter(|t| !t.is_empty()).collect();
    let stem_tokens: Vec<&str> = stem.split(['.', '-']).filter(|t| !t.is_empty()).collect();

    let distinct: HashSet<char> = core.chars().collect();
    let repeated = {
        let mut counts: HashMap<char, usize> = HashMap::new();
        for c in core.chars() {
            *counts.entry(c).or_default() += 1;
        }
        counts.values().filter(|&&n| n >= 2).count()
    };
    let alphabetic = core.chars().filter(|c| c.is_ascii_alphabetic()).count();
    let vowels = core.chars().filter(|&c| text::is_vowel(c)).count();
    let digits = core.chars().filter(|c| c.is_ascii_digit()).count();

    let sub_cn_entropy = cn
        .labels
        .first()
        .map(|l| text::shannon_entropy(&l.to_lowercase()))
        .unwrap_or(0.0);
    let name_san_entropy = {
        let dists: Vec<f64> = sans
            .iter()
            .map(|s| {
                let max = cn.core.chars().count().max(s.core.chars().count());
                if max == 0 {
                    0.0
                } else {
                    text::levenshtein(&cn.core, &s.core) as f64 / max as f64
                }
            })
            .collect();
        text::distribution_entropy(&dists)
    };
    let san_to_alexa_entropy = if sans.is_empty() {
        0.0
    } else {
        sans.iter()
            .map(|s| {
                if popular.contains(&s.registered_domain) {
                    0.0
                } else {
                    text::shannon_entropy(&s.core)
                }
            })
            .sum::<f64>()
            / sans.len() as f64
    };

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let g1 = text::ngram_stats(core, 1);
    let g2 = text::ngram_stats(core, 2);
    let g3 = text::ngram_stats(core, 3);

    [
        sub_cn_entropy,
        b(d.public_suffix == "com"),
        name_san_entropy,
        b(d.full.chars().any(|c| c.is_ascii_uppercase())),
        d.full.matches('-').count() as f64,
        d.registered_domain.matches('-').count() as f64,
        tokens.len() as f64,
        b(stem_tokens.iter().any(|t| suffixes.is_known_suffix(t))),
        b(stem.contains("https")),
        tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0) as f64,
        ratio(d.full.chars().filter(|c| !c.is_alphanumeric()).count(), full_len),
        b(d.is_ip),
        b(d.is_idn),
        san_to_alexa_entropy,
        ratio(vowels, alphabetic),
        ratio(digits, core_len),
        full_len as f64,
        b(full_lower.contains("www.")),
        b(stem_labels.iter().any(|l| !l.is_empty() && l.chars().all(|c| c.is_ascii_digit()))),
        if stem_labels.is_empty() {
            0.0
        } else {
            stem_labels.iter().map(|l| l.chars().count() as f64).sum::<f64>()
                / stem_labels.len() as f64
        },
        stem_labels.len() as f64,
        b(core.chars().any(|c| c.is_ascii_digit())),
        b(d.suffix_known),
        b(stem_labels.iter().any(|l| l.chars().count() == 1)),
        b(text::is_repeated_prefix(core)),
        ratio(distinct.len(), core_len),
        b(stem_labels.iter().any(|l| suffixes.is_known_suffix(l))),
        distinct.len() as f64,
        text::shannon_entropy(core),
        ratio(tokens.iter().filter(|t| text::is_hex_token(t)).count(), tokens.len()),
        ratio(d.full.matches('_').count(), full_len),
        ratio(repeated, distinct.len()),
        text::run_ratio(core, text::is_consonant),
        text::run_ratio(core, |c| c.is_ascii_digit()),
        g1.std,
        g1.median,
        g1.mean,
        g1.min,
        g1.max,
        g1.bottom_quartile,
        g1.top_quartile,
        g2.std,
        g2.median,
        g2.mean,
        g2.min,
        g2.max,
        g2.bottom_quartile,
        g2.top_quartile,
        g3.std,
        g3.median,
        g3.mean,
        g3.min,
        g3.max,
        g3.bottom_quartile,
        g3.top_quartile,
    ]
}

pub fn extract_keyword_features(d: &DomainName, kws: &KeywordList) -> [f64; KEYWORD_FEATURES] {
    let stem = d.stem();
    let mut out = [0.0; KEYWORD_FEATURES];
    let mut count = 0usize;
    for (i, kw) in kws.iter().enumerate() {
        if stem.contains(kw) {
            out[i] = 1.0;
            count += 1;
        }
    }
    out[KEYWORD_FEATURES - 2] = b(count > 0);
    out[KEYWORD_FEATURES - 1] = count as f64;
    out
}

/// One `all`-set vector per deduplicated CN/SAN domain of the record.
/// Certificates without any name yield no vectors.
pub fn extract_record(
    r: &CertificateRecord,
    codec: &CategoricalCodec,
    popular: &PopularRanks,
) -> Vec<FeatureVector> {
    let domains = r.domains();
    if domains.is_empty() {
        return Vec::new();
    }
    let decomps: Vec<DomainName> = domains.iter().map(|d| decompose_domain(d)).collect();
    let cn = match &r.common_name {
        Some(cn) => decompose_domain(cn),
        None => decomps[0].clone(),
    };
    let sans: Vec<DomainName> = r.sans.iter().map(|s| decompose_domain(s)).collect();

    let cert_part = extract_cert_features(r, codec);
    let kws = KeywordList::bundled();
    decomps
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut values = Vec::with_capacity(TOTAL_FEATURES);
            values.extend_from_slice(&cert_part);
            values.extend_from_slice(&extract_domain_features(d, &cn, &sans, popular));
            values.extend_from_slice(&extract_keyword_features(d, kws));
            FeatureVector {
                values,
                feature_set: FeatureSet::All,
                fingerprint: r.fingerprint,
                subject: FeatureSubject::Domain(i),
            }
        })
        .collect()
}

/// Coordinate-wise mean over a certificate's domain vectors. Inputs must
/// agree on feature set and fingerprint; order does not matter.
pub fn average_vectors(per_domain: &[FeatureVector]) -> Result<FeatureVector, FeatureError> {
    let first = per_domain.first().ok_or(FeatureError::EmptyInput)?;
    let mut sums = vec![0.0; first.values.len()];
    for v in per_domain {
        if v.feature_set != first.feature_set {
            return Err(FeatureError::Mismatch("feature_set differs".into()));
        }
        if v.fingerprint != first.fingerprint {
            return Err(FeatureError::Mismatch("fingerprint differs".into()));
        }
        for (s, x) in sums.iter_mut().zip(&v.values) {
            *s += x;
        }
    }
    let n = per_domain.len() as f64;
    Ok(FeatureVector {
        values: sums.into_iter().map(|s| s / n).collect(),
        feature_set: first.feature_set,
        fingerprint: first.fingerprint,
        subject: FeatureSubject::Cert,
    })
}

/// Ranks feature indices by importance, keyword category excluded, and
/// returns the top `k`. Ties break toward the lower index.
pub fn mdi_selection(importances: &[f64], k: usize) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..importances.len().min(KEYWORD_BLOCK_START)).collect();
    ranked.sort_by(|&a, &b| {
        importances[b].partial_cmp(&importances[a]).unwrap().then(a.cmp(&b))
    });
    ranked.truncate(k);
    ranked
}

/// Plain matrix export: header of canonical names, one row per vector.
pub fn write_csv<W: Write>(mut w: W, vectors: &[FeatureVector]) -> Result<(), std::io::Error> {
    let set = vectors.first().map(|v| v.feature_set).unwrap_or(FeatureSet::All);
    writeln!(w, "{}", set.names().join(","))?;
    for v in vectors {
        debug_assert_eq!(v.feature_set, set);
        let row: Vec<String> = v.values.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
