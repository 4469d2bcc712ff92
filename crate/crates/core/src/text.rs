//! Character-level string statistics backing the lexical feature catalog.
//!
//! Conventions are frozen so feature values are reproducible:
//! entropy is base 2 over character frequencies; n-gram statistics are
//! statistics of the multiset of occurrence counts of the *distinct* n-grams;
//! std is the population standard deviation; quartiles/median use linear
//! interpolation at position q*(len-1) over the ascending counts.

use std::collections::BTreeMap;

/// Shannon entropy (base 2) of the character distribution of `s`.
pub fn shannon_entropy(s: &str) -> f64 {
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    let mut total = 0usize;
    for c in s.chars() {
        *counts.entry(c).or_insert(0) += 1;
        total += 1;
    }
    entropy_of_counts(counts.values().copied(), total)
}

/// Entropy of an arbitrary nonnegative weight distribution, normalized by its
/// own sum. Zero weights are skipped; an all-zero or empty input yields 0.
pub fn distribution_entropy(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if sum <= 0.0 {
        return 0.0;
    }
    -weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let p = w / sum;
            p * p.log2()
        })
        .sum::<f64>()
}

fn entropy_of_counts(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -counts
        .map(|c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Number of distinct characters in `s`.
pub fn alphabet_size(s: &str) -> usize {
    let mut chars: Vec<char> = s.chars().collect();
    chars.sort_unstable();
    chars.dedup();
    chars.len()
}

/// Statistics over the occurrence counts of the distinct n-grams of a string.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NgramStats {
    pub std: f64,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub bottom_quartile: f64,
    pub top_quartile: f64,
}

/// Computes [`NgramStats`] for the n-grams of `s` (character windows of
/// length `n`). Strings shorter than `n` have no n-grams; everything is 0.
pub fn ngram_stats(s: &str, n: usize) -> NgramStats {
    let chars: Vec<char> = s.chars().collect();
    if n == 0 || chars.len() < n {
        return NgramStats::default();
    }
    let mut counts: BTreeMap<&[char], usize> = BTreeMap::new();
    for w in chars.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    let mut values: Vec<f64> = counts.values().map(|&c| c as f64).collect();
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    NgramStats {
        std: var.sqrt(),
        median: interpolated_quantile(&values, 0.5),
        mean,
        min: values[0],
        max: values[values.len() - 1],
        bottom_quartile: interpolated_quantile(&values, 0.25),
        top_quartile: interpolated_quantile(&values, 0.75),
    }
}

/// Linear-interpolation quantile over ascending `values` at position
/// q*(len-1); `values` must be non-empty.
pub fn interpolated_quantile(values: &[f64], q: f64) -> f64 {
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 == values.len() {
        values[lo]
    } else {
        values[lo] + frac * (values[lo + 1] - values[lo])
    }
}

/// Levenshtein edit distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// True when `s` (length >= 2) is k >= 2 whole repetitions of a prefix,
/// e.g. "abab" or "aaa". Uses the KMP failure function: s is periodic with
/// period p = len - border(len) iff p divides len.
pub fn is_repeated_prefix(s: &str) -> bool {
    let chars: Vec<char> = s.chars().collect();
    let n = chars.len();
    if n < 2 {
        return false;
    }
    let mut failure = vec![0usize; n];
    let mut k = 0usize;
    for i in 1..n {
        while k > 0 && chars[i] != chars[k] {
            k = failure[k - 1];
        }
        if chars[i] == chars[k] {
            k += 1;
        }
        failure[i] = k;
    }
    let border = failure[n - 1];
    let period = n - border;
    border > 0 && n % period == 0
}

/// Fraction of characters of `s` lying inside runs of length >= 2 of
/// characters matching `pred`. Runs are broken by any non-matching character.
pub fn run_ratio(s: &str, pred: impl Fn(char) -> bool) -> f64 {
    let chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return 0.0;
    }
    let mut in_runs = 0usize;
    let mut run = 0usize;
    for &c in chars.iter().chain(std::iter::once(&'\0')) {
        if c != '\0' && pred(c) {
            run += 1;
        } else {
            if run >= 2 {
                in_runs += run;
            }
            run = 0;
        }
    }
    in_runs as f64 / chars.len() as f64
}

pub fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'A' | 'E' | 'I' | 'O' | 'U')
}

/// Alphabetic and not a vowel; 'y' counts as a consonant.
pub fn is_consonant(c: char) -> bool {
    c.is_alphabetic() && !is_vowel(c)
}

pub fn is_hex_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}
