//! Normalized certificate records parsed from DER (or precert TBS) bytes.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use x509_parser::prelude::*;
use x509_parser::public_key::PublicKey;

use crate::domain::normalize_domain;

#[derive(Debug, thiserror::Error)]
pub enum CertError {
    #[error("malformed DER: {0}")]
    MalformedDer(String),
    #[error("record io: {0}")]
    Io(#[from] std::io::Error),
    #[error("record json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyAlgorithm {
    Rsa,
    Ec,
    Dsa,
    Other,
}

impl KeyAlgorithm {
    /// Stable integer code: other=0, rsa=1, ec=2, dsa=3.
    pub fn code(self) -> u32 {
        match self {
            KeyAlgorithm::Other => 0,
            KeyAlgorithm::Rsa => 1,
            KeyAlgorithm::Ec => 2,
            KeyAlgorithm::Dsa => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KeyAlgorithm::Rsa => "rsa",
            KeyAlgorithm::Ec => "ec",
            KeyAlgorithm::Dsa => "dsa",
            KeyAlgorithm::Other => "other",
        }
    }
}

/// Subject attribute kinds tracked by the record. Ordering of the variants is
/// the serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubjectAttr {
    C,
    ST,
    L,
    O,
    OU,
    CN,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtLogIndex {
    pub log: String,
    pub index: u64,
}

/// Normalized view of one certificate. `fingerprint` is the SHA-256 of the
/// exact input bytes (full DER, or TBS bytes for precertificates), so
/// reparsing identical bytes yields an identical record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    #[serde(with = "hex32")]
    pub fingerprint: [u8; 32],
    pub common_name: Option<String>,
    pub sans: Vec<String>,
    pub issuer_dn: String,
    pub subject_attrs: BTreeSet<SubjectAttr>,
    pub subject_char_count: u32,
    pub extension_count: u32,
    pub policy_oids: Vec<String>,
    #[serde(with = "ts_rfc3339")]
    pub not_before: DateTime<Utc>,
    #[serde(with = "ts_rfc3339")]
    pub not_after: DateTime<Utc>,
    pub key_algorithm: KeyAlgorithm,
    pub key_size_bits: u32,
    pub has_ocsp: bool,
    pub has_cdp: bool,
    pub ct_log_index: Option<CtLogIndex>,
    #[serde(with = "ts_rfc3339")]
    pub seen_at: DateTime<Utc>,
}

impl CertificateRecord {
    /// Validity period at day resolution (floor), the value feature
    /// `valid_period` reports.
    pub fn valid_period_days(&self) -> i64 {
        (self.not_after - self.not_before).num_seconds().max(0) / 86_400
    }

    /// The deduplicated domain set used downstream: {CN} followed by SANs,
    /// first occurrence wins. A cert whose CN equals its only SAN yields one
    /// domain.
    pub fn domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(self.sans.len() + 1);
        if let Some(cn) = &self.common_name {
            out.push(cn.clone());
        }
        for san in &self.sans {
            if !out.contains(san) {
                out.push(san.clone());
            }
        }
        out
    }

    pub fn is_wildcard(&self) -> bool {
        self.domains().iter().any(|d| d.starts_with("*."))
    }
}

/// SHA-256 of arbitrary bytes; the fingerprint/dedup primitive.
pub fn fingerprint_bytes(bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().into()
}

/// Cross-log dedup key: certificates with byte-identical DER collapse.
pub fn dedup_key(record: &CertificateRecord) -> [u8; 32] {
    record.fingerprint
}

/// Parses a full X.509 v3 certificate.
pub fn parse_der(bytes: &[u8]) -> Result<CertificateRecord, CertError> {
    let (rem, cert) = X509Certificate::from_der(bytes)
        .map_err(|e| CertError::MalformedDer(e.to_string()))?;
    if !rem.is_empty() {
        return Err(CertError::MalformedDer("trailing bytes after certificate".into()));
    }
    build_record(
        fingerprint_bytes(bytes),
        cert.tbs_certificate.subject(),
        cert.tbs_certificate.issuer(),
        cert.tbs_certificate.validity(),
        cert.tbs_certificate.extensions(),
        cert.tbs_certificate.public_key(),
    )
}

/// Parses bare TBS bytes, the form precertificate leaves carry (poison
/// removed per the log's encoding). The poison or SCT extensions still
/// present count toward `extension_count`.
pub fn parse_tbs(bytes: &[u8]) -> Result<CertificateRecord, CertError> {
    let (rem, tbs) =
        TbsCertificate::from_der(bytes).map_err(|e| CertError::MalformedDer(e.to_string()))?;
    if !rem.is_empty() {
        return Err(CertError::MalformedDer("trailing bytes after tbsCertificate".into()));
    }
    build_record(
        fingerprint_bytes(bytes),
        tbs.subject(),
        tbs.issuer(),
        tbs.validity(),
        tbs.extensions(),
        tbs.public_key(),
    )
}

fn build_record(
    fingerprint: [u8; 32],
    subject: &X509Name<'_>,
    issuer: &X509Name<'_>,
    validity: &Validity,
    extensions: &[X509Extension<'_>],
    spki: &SubjectPublicKeyInfo<'_>,
) -> Result<CertificateRecord, CertError> {
    let mut subject_attrs = BTreeSet::new();
    let mut subject_char_count = 0u32;
    let mut common_name = None;
    for rdn in subject.iter() {
        for attr in rdn.iter() {
            let value = attr.as_str().unwrap_or_default();
            subject_char_count += value.chars().count() as u32;
            let kind = match attr.attr_type().to_id_string().as_str() {
                "2.5.4.6" => Some(SubjectAttr::C),
                "2.5.4.8" => Some(SubjectAttr::ST),
                "2.5.4.7" => Some(SubjectAttr::L),
                "2.5.4.10" => Some(SubjectAttr::O),
                "2.5.4.11" => Some(SubjectAttr::OU),
                "2.5.4.3" => {
                    if common_name.is_none() && !value.is_empty() {
                        common_name = Some(normalize_domain(value));
                    }
                    Some(SubjectAttr::CN)
                }
                _ => None,
            };
            if let Some(kind) = kind {
                subject_attrs.insert(kind);
            }
        }
    }

    let mut sans: Vec<String> = Vec::new();
    let mut policy_oids = Vec::new();
    let mut has_ocsp = false;
    let mut has_cdp = false;
    for ext in extensions {
        match ext.parsed_extension() {
            ParsedExtension::SubjectAlternativeName(san) => {
                for name in &san.general_names {
                    let s = match name {
                        GeneralName::DNSName(d) => normalize_domain(d),
                        GeneralName::IPAddress(ip) => match ip.len() {
                            4 => std::net::Ipv4Addr::new(ip[0], ip[1], ip[2], ip[3]).to_string(),
                            16 => {
                                let mut b = [0u8; 16];
                                b.copy_from_slice(ip);
                                std::net::Ipv6Addr::from(b).to_string()
                            }
                            _ => continue,
                        },
                        _ => continue,
                    };
                    if !s.is_empty() && !sans.contains(&s) {
                        sans.push(s);
                    }
                }
            }
            ParsedExtension::CertificatePolicies(policies) => {
                for p in policies {
                    policy_oids.push(p.policy_id.to_id_string());
                }
            }
            ParsedExtension::AuthorityInfoAccess(aia) => {
                // id-ad-ocsp
                has_ocsp |= aia
                    .accessdescs
                    .iter()
                    .any(|d| d.access_method.to_id_string() == "1.3.6.1.5.5.7.48.1");
            }
            ParsedExtension::CRLDistributionPoints(_) => has_cdp = true,
            _ => {
                // CDP may fail structured parsing on exotic encodings; the
                // flag only needs presence.
                if ext.oid.to_id_string() == "2.5.29.31" {
                    has_cdp = true;
                }
            }
        }
    }

    let not_before = asn1_time(validity.not_before)?;
    let not_after = asn1_time(validity.not_after)?;
    if not_before > not_after {
        return Err(CertError::MalformedDer("notBefore after notAfter".into()));
    }

    let (key_algorithm, key_size_bits) = match spki.parsed() {
        Ok(PublicKey::RSA(k)) => (KeyAlgorithm::Rsa, k.key_size() as u32),
        Ok(PublicKey::EC(k)) => (KeyAlgorithm::Ec, k.key_size() as u32),
        Ok(PublicKey::DSA(y)) => (KeyAlgorithm::Dsa, (y.len() * 8) as u32),
        _ => (KeyAlgorithm::Other, 0),
    };

    Ok(CertificateRecord {
        fingerprint,
        common_name,
        sans,
        issuer_dn: issuer.to_string(),
        subject_attrs,
        subject_char_count,
        extension_count: extensions.len() as u32,
        policy_oids,
        not_before,
        not_after,
        key_algorithm,
        key_size_bits,
        has_ocsp,
        has_cdp,
        ct_log_index: None,
        seen_at: Utc.timestamp_opt(Utc::now().timestamp(), 0).unwrap(),
    })
}

fn asn1_time(t: ASN1Time) -> Result<DateTime<Utc>, CertError> {
    Utc.timestamp_opt(t.timestamp(), 0)
        .single()
        .ok_or_else(|| CertError::MalformedDer(format!("unrepresentable time {t}")))
}

// ── persistence ──────────────────────────────────────────────────────────

/// Appends records as JSONL, one object per line.
pub fn write_records<W: Write>(mut w: W, records: &[CertificateRecord]) -> Result<(), CertError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL record stream; fails on the first malformed line.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<CertificateRecord>, CertError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Lowercase-hex serde for 32-byte fingerprints.
pub mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("fingerprint must be 32 bytes"))
    }
}

/// RFC 3339 second-resolution serde for UTC timestamps.
pub mod ts_rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_record() -> CertificateRecord {
        CertificateRecord {
            fingerprint: fingerprint_bytes(b"sample"),
            common_name: Some("paypal-secured.ga".into()),
            sans: vec!["paypal-secured.ga".into(), "www.paypal-secured.ga".into()],
            issuer_dn: "C=US, O=Let's Encrypt, CN=R3".into(),
            subject_attrs: [SubjectAttr::CN].into_iter().collect(),
            subject_char_count: 17,
            extension_count: 9,
            policy_oids: vec!["2.23.140.1.2.1".into()],
            not_before: Utc.with_ymd_and_hms(2020, 5, 1, 0, 0, 0).unwrap(),
            not_after: Utc.with_ymd_and_hms(2020, 7, 30, 0, 0, 0).unwrap(),
            key_algorithm: KeyAlgorithm::Rsa,
            key_size_bits: 2048,
            has_ocsp: true,
            has_cdp: false,
            ct_log_index: Some(CtLogIndex { log: "fixture".into(), index: 17 }),
            seen_at: Utc.with_ymd_and_hms(2020, 5, 1, 12, 0, 0).unwrap(),
        }
    }

    #[test]
    fn fingerprint_matches_fips_vector() {
        // SHA-256("abc") = ba7816bf8f01cfea414140de5dae2223...
        let fp = fingerprint_bytes(b"abc");
        assert_eq!(&fp[..4], &[0xba, 0x78, 0x16, 0xbf]);
        assert_eq!(
            hex::encode(fp),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn record_jsonl_roundtrip_is_lossless() {
        let rec = sample_record();
        let mut buf = Vec::new();
        write_records(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        // field names and wire formats pinned by the persistence contract
        assert!(line.contains("\"fingerprint\":\""));
        assert!(line.contains("\"not_before\":\"2020-05-01T00:00:00Z\""));
        assert!(line.contains("\"key_algorithm\":\"rsa\""));
        let back = read_records(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, vec![rec]);
    }

    #[test]
    fn domains_dedup_cn_and_sans() {
        let rec = sample_record();
        assert_eq!(rec.domains(), vec!["paypal-secured.ga", "www.paypal-secured.ga"]);
        let mut one = sample_record();
        one.sans = vec!["paypal-secured.ga".into()];
        assert_eq!(one.domains().len(), 1);
    }

    #[test]
    fn validity_day_resolution() {
        let rec = sample_record();
        assert_eq!(rec.valid_period_days(), 90);
        let mut degenerate = rec.clone();
        degenerate.not_after = degenerate.not_before;
        assert_eq!(degenerate.valid_period_days(), 0);
    }
}
