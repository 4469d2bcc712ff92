//! Golden feature values for the two reference names and their synthesized
//! certificate records. Rational values are pinned to five decimal places;
//! the four features whose published definitions are not recoverable
//! (sub_cn_entropy, name_san_entropy, san_to_alexa_entropy,
//! consecutive_consonant_ratio) are deliberately absent.

use chrono::{TimeZone, Utc};
use ctphish_core::cert::{fingerprint_bytes, CertificateRecord, KeyAlgorithm, SubjectAttr};
use ctphish_core::domain::decompose_domain;
use ctphish_core::features::{
    extract_cert_features, extract_domain_features, feature_index, CategoricalCodec,
    PopularRanks, CERT_FEATURES,
};

const TOL: f64 = 5e-6;

fn benign_record() -> CertificateRecord {
    CertificateRecord {
        fingerprint: fingerprint_bytes(b"benign-reference"),
        common_name: Some("anycast.ftl.netflix.com".into()),
        sans: vec![
            "anycast.ftl.netflix.com".into(),
            "*.ftl.netflix.com".into(),
            "edge.ftl.netflix.com".into(),
            "cdn0.edge.ftl.netflix.com".into(),
            "cdn1.edge.ftl.netflix.com".into(),
            "api.netflix.net".into(),
            "anycast.ftl.netflix.net".into(),
        ],
        issuer_dn: "C=US, O=DigiCert Inc, CN=DigiCert SHA2 Secure Server CA".into(),
        subject_attrs: [
            SubjectAttr::C,
            SubjectAttr::ST,
            SubjectAttr::L,
            SubjectAttr::O,
            SubjectAttr::OU,
            SubjectAttr::CN,
        ]
        .into_iter()
        .collect(),
        // C=US(2) ST=California(10) L=Los Gatos(9) O=Netflix Inc.(12)
        // OU=Open CDN(8) CN=anycast.ftl.netflix.com(23)
        subject_char_count: 64,
        extension_count: 10,
        policy_oids: vec!["2.23.140.1.2.2".into(), "2.16.840.1.114412.1.1".into()],
        not_before: Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap(),
        not_after: Utc.with_ymd_and_hms(2020, 5, 7, 0, 0, 0).unwrap(),
        key_algorithm: KeyAlgorithm::Ec,
        key_size_bits: 256,
        has_ocsp: true,
        has_cdp: true,
        ct_log_index: None,
        seen_at: Utc.with_ymd_and_hms(2020, 5, 1, 0, 0, 0).unwrap(),
    }
}

fn phishing_record() -> CertificateRecord {
    CertificateRecord {
        fingerprint: fingerprint_bytes(b"phishing-reference"),
        common_name: Some("paypal-secured.ga".into()),
        sans: vec!["paypal-secured.ga".into(), "www.paypal-secured.ga".into()],
        issuer_dn: "C=US, O=Let's Encrypt, CN=Let's Encrypt Authority X3".into(),
        subject_attrs: [SubjectAttr::CN].into_iter().collect(),
        subject_char_count: 17,
        extension_count: 9,
        policy_oids: vec!["2.23.140.1.2.1".into(), "1.3.6.1.4.1.44947.1.1.1".into()],
        not_before: Utc.with_ymd_and_hms(2020, 5, 1, 0, 0, 0).unwrap(),
        not_after: Utc.with_ymd_and_hms(2020, 7, 30, 0, 0, 0).unwrap(),
        key_algorithm: KeyAlgorithm::Rsa,
        key_size_bits: 2048,
        has_ocsp: true,
        has_cdp: false,
        ct_log_index: None,
        seen_at: Utc.with_ymd_and_hms(2020, 5, 1, 0, 0, 0).unwrap(),
    }
}

/// name -> (benign value, phishing value), CN-derived rows only.
const DOMAIN_GOLDEN: &[(&str, f64, f64)] = &[
    ("sub_cn_is_com", 1.0, 0.0),
    ("has_uppercase_letters", 0.0, 0.0),
    ("num_dash", 0.0, 1.0),
    ("num_dash_rd", 0.0, 1.0),
    ("num_tokens", 4.0, 3.0),
    ("tld_in_token", 1.0, 0.0),
    ("https_in_domain", 0.0, 0.0),
    ("longest_token", 7.0, 7.0),
    ("special_char_ratio", 0.13043, 0.11765),
    ("is_ip", 0.0, 0.0),
    ("is_idn_domain", 0.0, 0.0),
    ("vowel_ratio", 0.23529, 0.38462),
    ("digit_ratio", 0.0, 0.0),
    ("length", 23.0, 17.0),
    ("contains_wwwdot", 0.0, 0.0),
    ("contains_subdomain_of_only_digits", 0.0, 0.0),
    ("subdomain_lengths_mean", 5.66667, 14.0),
    ("parts", 3.0, 1.0),
    ("contains_digits", 0.0, 0.0),
    ("has_valid_tld", 1.0, 1.0),
    ("contains_one_char_subdomains", 0.0, 0.0),
    ("prefix_repetition", 0.0, 0.0),
    ("char_diversity", 0.64706, 0.78571),
    ("contains_tld_as_infix", 1.0, 0.0),
    ("alphabet_size", 11.0, 11.0),
    ("shannon_entropy", 3.33718, 3.37878),
    ("hex_part_ratio", 0.0, 0.0),
    ("underscore_ratio", 0.0, 0.0),
    ("ratio_of_repeated_chars", 0.45455, 0.27273),
    ("consecutive_digits_ratio", 0.0, 0.0),
    ("1_gram_std", 0.65555, 0.44536),
    ("1_gram_median", 1.0, 1.0),
    ("1_gram_mean", 1.54545, 1.27273),
    ("1_gram_min", 1.0, 1.0),
    ("1_gram_max", 3.0, 2.0),
    ("1_gram_bottom_quartile", 1.0, 1.0),
    ("1_gram_top_quartile", 2.0, 1.5),
    ("2_gram_std", 0.24944, 0.27639),
    ("2_gram_median", 1.0, 1.0),
    ("2_gram_mean", 1.06667, 1.08333),
    ("2_gram_min", 1.0, 1.0),
    ("2_gram_max", 2.0, 2.0),
    ("2_gram_bottom_quartile", 1.0, 1.0),
    ("2_gram_top_quartile", 1.0, 1.0),
    ("3_gram_std", 0.0, 0.0),
    ("3_gram_median", 1.0, 1.0),
    ("3_gram_mean", 1.0, 1.0),
    ("3_gram_min", 1.0, 1.0),
    ("3_gram_max", 1.0, 1.0),
    ("3_gram_bottom_quartile", 1.0, 1.0),
    ("3_gram_top_quartile", 1.0, 1.0),
];

/// name -> (benign value, phishing value) for rows reconstructible from the
/// record fields alone (codec-dependent and DER-dependent rows excluded).
const CERT_GOLDEN: &[(&str, f64, f64)] = &[
    ("is_ov", 1.0, 0.0),
    ("is_ev", 0.0, 0.0),
    ("is_dv", 0.0, 1.0),
    ("sub_only_cn", 0.0, 1.0),
    ("sub_dn_count", 6.0, 1.0),
    ("sub_char_count", 64.0, 17.0),
    ("valid_period", 36.0, 90.0),
    ("is_wildcard", 1.0, 0.0),
    ("san_count", 7.0, 2.0),
    ("average_sd_count", 4.14286, 2.5),
    ("san_tld_count", 2.0, 1.0),
    ("key_size", 256.0, 2048.0),
];

fn domain_values(record: &CertificateRecord) -> Vec<f64> {
    let cn = decompose_domain(record.common_name.as_ref().unwrap());
    let sans: Vec<_> = record.sans.iter().map(|s| decompose_domain(s)).collect();
    extract_domain_features(&cn, &cn, &sans, PopularRanks::bundled()).to_vec()
}

#[test]
fn domain_rows_match_published_values() {
    let started = std::time::Instant::now();
    let benign = domain_values(&benign_record());
    let phish = domain_values(&phishing_record());
    for &(name, want_benign, want_phish) in DOMAIN_GOLDEN {
        let i = feature_index(name).unwrap() - CERT_FEATURES;
        assert!(
            (benign[i] - want_benign).abs() <= TOL,
            "{name}: benign {} != {want_benign}",
            benign[i]
        );
        assert!(
            (phish[i] - want_phish).abs() <= TOL,
            "{name}: phish {} != {want_phish}",
            phish[i]
        );
    }
    assert!(started.elapsed() < std::time::Duration::from_secs(1));
}

#[test]
fn cert_rows_match_published_values() {
    let codec = CategoricalCodec::fit(std::iter::empty());
    let benign = extract_cert_features(&benign_record(), &codec);
    let phish = extract_cert_features(&phishing_record(), &codec);
    for &(name, want_benign, want_phish) in CERT_GOLDEN {
        let i = feature_index(name).unwrap();
        assert!(
            (benign[i] - want_benign).abs() <= TOL,
            "{name}: benign {} != {want_benign}",
            benign[i]
        );
        assert!(
            (phish[i] - want_phish).abs() <= TOL,
            "{name}: phish {} != {want_phish}",
            phish[i]
        );
    }
    // fixed categorical codes for the key algorithm column
    assert_eq!(benign[feature_index("key_algorithm").unwrap()], 2.0);
    assert_eq!(phish[feature_index("key_algorithm").unwrap()], 1.0);
}

#[test]
fn ratio_rows_stay_in_unit_interval() {
    for record in [benign_record(), phishing_record()] {
        let values = domain_values(&record);
        for name in [
            "special_char_ratio",
            "vowel_ratio",
            "digit_ratio",
            "char_diversity",
            "hex_part_ratio",
            "underscore_ratio",
            "ratio_of_repeated_chars",
            "consecutive_consonant_ratio",
            "consecutive_digits_ratio",
        ] {
            let v = values[feature_index(name).unwrap() - CERT_FEATURES];
            assert!((0.0..=1.0).contains(&v), "{name} out of range: {v}");
        }
    }
}
