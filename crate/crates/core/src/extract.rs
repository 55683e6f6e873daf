//! Disassembly ingestion: parse a simplified listing, cluster functions by
//! opcode-sequence similarity with MinHash/LSH, and build the function call
//! graph over cluster ids.
//!
//! Listing format (UTF-8 text):
//! - `FUNC <name>` opens a function block
//! - one opcode mnemonic per line inside a block; the first whitespace token
//!   is the opcode; `call <name>` additionally records a callee
//! - `ENDF` closes the block
//! - lines starting with `#` are comments, blank lines are ignored

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DisjointSet, Fcg};
use crate::seeding::{mix, splitmix64};

/// One parsed function: its opcode sequence and outgoing calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub name: String,
    pub opcodes: Vec<String>,
    pub callees: Vec<String>,
}

/// Fixed-length MinHash signature of a function's opcode n-gram set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
}

impl MinHashSignature {
    pub fn num_hashes(&self) -> usize {
        self.values.len()
    }
}

/// Dense 0-based cluster ids per function name, in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub by_function: BTreeMap<String, usize>,
    pub num_clusters: usize,
}

/// Extraction parameters; defaults follow the library-wide conventions
/// (bigrams, 64 hashes in 16 bands of 4 rows).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub ngram: usize,
    pub num_hashes: usize,
    pub bands: usize,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            ngram: 2,
            num_hashes: 64,
            bands: 16,
            seed: 0,
        }
    }
}

/// Parse a listing into function records, in listing order.
pub fn parse_disassembly(text: &str) -> Result<Vec<FunctionRecord>> {
    let mut functions: Vec<FunctionRecord> = Vec::new();
    let mut current: Option<FunctionRecord> = None;
    let mut open_line = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().expect("non-empty line has a token");

        match (&mut current, first) {
            (None, "FUNC") => {
                let name = tokens.next().ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: "FUNC requires a name".into(),
                })?;
                if functions.iter().any(|f| f.name == name) {
                    return Err(Error::DuplicateFunction(name.to_string()));
                }
                current = Some(FunctionRecord {
                    name: name.to_string(),
                    opcodes: Vec::new(),
                    callees: Vec::new(),
                });
                open_line = line_no;
            }
            (None, other) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown directive `{other}` outside a FUNC block"),
                });
            }
            (Some(_), "FUNC") => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "nested FUNC block".into(),
                });
            }
            (Some(record), "ENDF") => {
                functions.push(record.clone());
                current = None;
            }
            (Some(record), opcode) => {
                let mnemonic = opcode.to_ascii_lowercase();
                if mnemonic == "call" {
                    let callee = tokens.next().ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "call requires a callee name".into(),
                    })?;
                    record.callees.push(callee.to_string());
                }
                record.opcodes.push(mnemonic);
            }
        }
    }

    if current.is_some() {
        return Err(Error::Parse {
            line: open_line,
            message: "FUNC block never closed with ENDF".into(),
        });
    }
    Ok(functions)
}

/// All contiguous opcode windows of length `n`, as a token -> multiplicity
/// map. Sequences shorter than `n` yield the single whole-sequence gram.
pub fn opcode_ngrams(function: &FunctionRecord, n: usize) -> Result<BTreeMap<String, usize>> {
    if n == 0 {
        return Err(Error::InvalidParameter("ngram length must be >= 1".into()));
    }
    let mut grams: BTreeMap<String, usize> = BTreeMap::new();
    let ops = &function.opcodes;
    if ops.len() < n {
        *grams.entry(ops.join("\u{1f}")).or_insert(0) += 1;
        return Ok(grams);
    }
    for window in ops.windows(n) {
        *grams.entry(window.join("\u{1f}")).or_insert(0) += 1;
    }
    Ok(grams)
}

/// Stable 64-bit hash of a token (FNV-1a).
fn token_hash(token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in token.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// MinHash over the *set* of grams (multiplicity ignored):
/// `values[h] = min over grams g of mix(hash(g), seed_h)`.
pub fn minhash_signature(
    grams: &BTreeMap<String, usize>,
    num_hashes: usize,
    seed: u64,
) -> Result<MinHashSignature> {
    if num_hashes == 0 {
        return Err(Error::InvalidParameter("num_hashes must be >= 1".into()));
    }
    let base_hashes: Vec<u64> = grams.keys().map(|g| token_hash(g)).collect();
    let mut values = Vec::with_capacity(num_hashes);
    for h in 0..num_hashes {
        let stream = mix(seed, h as u64);
        let min = base_hashes
            .iter()
            .map(|&g| splitmix64(g ^ stream))
            .min()
            .unwrap_or(u64::MAX);
        values.push(min);
    }
    Ok(MinHashSignature { values })
}

/// Band-and-hash clustering: functions sharing any identical band become
/// candidates, clusters are the connected components of the candidate graph.
/// Cluster ids are assigned in first-seen (input) order.
pub fn lsh_cluster(
    names: &[String],
    signatures: &[MinHashSignature],
    bands: usize,
    rows: usize,
) -> Result<ClusterAssignment> {
    if names.len() != signatures.len() {
        return Err(Error::Invalid(format!(
            "{} names for {} signatures",
            names.len(),
            signatures.len()
        )));
    }
    if let Some(sig) = signatures.first() {
        if bands * rows != sig.num_hashes() {
            return Err(Error::BandingMismatch {
                bands,
                rows,
                num_hashes: sig.num_hashes(),
            });
        }
    }

    let mut dsu = DisjointSet::new(names.len());
    let mut buckets: HashMap<(usize, &[u64]), usize> = HashMap::new();
    for (idx, sig) in signatures.iter().enumerate() {
        for band in 0..bands {
            let slice = &sig.values[band * rows..(band + 1) * rows];
            match buckets.get(&(band, slice)) {
                Some(&first) => dsu.union(first, idx),
                None => {
                    buckets.insert((band, slice), idx);
                }
            }
        }
    }

    let mut cluster_of_root: HashMap<usize, usize> = HashMap::new();
    let mut by_function = BTreeMap::new();
    let mut next_id = 0usize;
    for (idx, name) in names.iter().enumerate() {
        let root = dsu.find(idx);
        let id = *cluster_of_root.entry(root).or_insert_with(|| {
            let id = next_id;
            next_id += 1;
            id
        });
        by_function.insert(name.clone(), id);
    }
    Ok(ClusterAssignment {
        by_function,
        num_clusters: next_id,
    })
}

/// Result of [`build_fcg`]: the graph plus ingestion diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FcgBuild {
    pub fcg: Fcg,
    /// Call targets that named no parsed function; their edges are dropped.
    pub unresolved_callees: usize,
}

/// Collapse functions to their cluster ids: vertices are the cluster ids,
/// edges are calls between resolved functions, duplicates collapsed to one.
pub fn build_fcg(functions: &[FunctionRecord], clusters: &ClusterAssignment) -> Result<FcgBuild> {
    let mut edges = Vec::new();
    let mut unresolved = 0usize;
    for f in functions {
        let from = *clusters
            .by_function
            .get(&f.name)
            .ok_or_else(|| Error::Invalid(format!("function `{}` has no cluster id", f.name)))?;
        for callee in &f.callees {
            match clusters.by_function.get(callee) {
                Some(&to) => edges.push((from, to)),
                None => unresolved += 1,
            }
        }
    }
    let num_vertices = clusters.num_clusters;
    let fcg = Fcg::new(num_vertices, (0..num_vertices as u64).collect(), edges)?;
    Ok(FcgBuild {
        fcg,
        unresolved_callees: unresolved,
    })
}

/// Full extraction: parse, featurize, cluster, build.
pub fn extract_fcg(text: &str, cfg: &ExtractConfig) -> Result<FcgBuild> {
    if cfg.bands == 0 || cfg.num_hashes % cfg.bands != 0 {
        return Err(Error::BandingMismatch {
            bands: cfg.bands,
            rows: if cfg.bands == 0 {
                0
            } else {
                cfg.num_hashes / cfg.bands
            },
            num_hashes: cfg.num_hashes,
        });
    }
    let rows = cfg.num_hashes / cfg.bands;
    let functions = parse_disassembly(text)?;
    let mut names = Vec::with_capacity(functions.len());
    let mut signatures = Vec::with_capacity(functions.len());
    for f in &functions {
        let grams = opcode_ngrams(f, cfg.ngram)?;
        signatures.push(minhash_signature(&grams, cfg.num_hashes, cfg.seed)?);
        names.push(f.name.clone());
    }
    let clusters = lsh_cluster(&names, &signatures, cfg.bands, rows)?;
    build_fcg(&functions, &clusters)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grams_of(tokens: &[&str]) -> BTreeMap<String, usize> {
        tokens.iter().map(|t| (t.to_string(), 1usize)).collect()
    }

    fn record(name: &str, opcodes: &[&str], callees: &[&str]) -> FunctionRecord {
        FunctionRecord {
            name: name.into(),
            opcodes: opcodes.iter().map(|s| s.to_string()).collect(),
            callees: callees.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn parse_two_functions() {
        let text = "FUNC f1\n mov\n call f2\nENDF\nFUNC f2\n ret\nENDF";
        let fns = parse_disassembly(text).unwrap();
        assert_eq!(fns.len(), 2);
        assert_eq!(fns[0].name, "f1");
        assert_eq!(fns[0].opcodes, vec!["mov", "call"]);
        assert_eq!(fns[0].callees, vec!["f2"]);
        assert_eq!(fns[1].opcodes, vec!["ret"]);
        assert!(fns[1].callees.is_empty());
    }

    #[test]
    fn parse_empty_input() {
        assert!(parse_disassembly("").unwrap().is_empty());
    }

    #[test]
    fn parse_comments_and_blanks_ignored() {
        let text = "# header\n\nFUNC f\n # inner comment\n nop\nENDF\n";
        let fns = parse_disassembly(text).unwrap();
        assert_eq!(fns[0].opcodes, vec!["nop"]);
    }

    #[test]
    fn parse_duplicate_name_rejected() {
        let text = "FUNC f\nENDF\nFUNC f\nENDF";
        assert!(matches!(
            parse_disassembly(text),
            Err(Error::DuplicateFunction(_))
        ));
    }

    #[test]
    fn parse_unknown_directive_carries_line_number() {
        let text = "FUNC f\nENDF\nbogus";
        match parse_disassembly(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_unclosed_block_rejected() {
        assert!(parse_disassembly("FUNC f\n nop\n").is_err());
    }

    #[test]
    fn ngrams_bigrams() {
        let f = record("f", &["a", "b", "c"], &[]);
        let grams = opcode_ngrams(&f, 2).unwrap();
        assert_eq!(grams.len(), 2);
        assert_eq!(grams.get("a\u{1f}b"), Some(&1));
        assert_eq!(grams.get("b\u{1f}c"), Some(&1));
    }

    #[test]
    fn ngrams_short_sequence_padded() {
        let f = record("f", &["a"], &[]);
        let grams = opcode_ngrams(&f, 2).unwrap();
        assert_eq!(grams.len(), 1);
        assert_eq!(grams.get("a"), Some(&1));
    }

    #[test]
    fn ngrams_repeated_window_multiplicity() {
        let f = record("f", &["a", "a", "a"], &[]);
        let grams = opcode_ngrams(&f, 2).unwrap();
        assert_eq!(grams.get("a\u{1f}a"), Some(&2));
        assert_eq!(grams.values().sum::<usize>(), 2);
    }

    #[test]
    fn minhash_identical_sets_identical_signatures() {
        let a = minhash_signature(&grams_of(&["x", "y"]), 64, 9).unwrap();
        let b = minhash_signature(&grams_of(&["x", "y"]), 64, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minhash_ignores_multiplicity() {
        let mut grams = grams_of(&["x", "y"]);
        grams.insert("x".into(), 5);
        let a = minhash_signature(&grams_of(&["x", "y"]), 64, 9).unwrap();
        let b = minhash_signature(&grams, 64, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minhash_zero_hashes_rejected() {
        assert!(minhash_signature(&grams_of(&["x"]), 0, 1).is_err());
    }

    /// Exact Jaccard of two token sets, the independent oracle for MinHash.
    fn exact_jaccard(a: &[&str], b: &[&str]) -> f64 {
        let sa: std::collections::BTreeSet<_> = a.iter().collect();
        let sb: std::collections::BTreeSet<_> = b.iter().collect();
        let inter = sa.intersection(&sb).count() as f64;
        let union = sa.union(&sb).count() as f64;
        inter / union
    }

    fn agreement_rate(a: &[&str], b: &[&str], trials: u64) -> f64 {
        let (ga, gb) = (grams_of(a), grams_of(b));
        let mut matches = 0usize;
        let mut total = 0usize;
        for seed in 0..trials {
            let sa = minhash_signature(&ga, 64, seed).unwrap();
            let sb = minhash_signature(&gb, 64, seed).unwrap();
            matches += sa
                .values
                .iter()
                .zip(&sb.values)
                .filter(|(x, y)| x == y)
                .count();
            total += 64;
        }
        matches as f64 / total as f64
    }

    #[test]
    fn minhash_agreement_tracks_exact_jaccard() {
        // {a,b} vs {b,c}: J = 1/3.
        let j = exact_jaccard(&["a", "b"], &["b", "c"]);
        assert!((j - 1.0 / 3.0).abs() < 1e-15);
        let rate = agreement_rate(&["a", "b"], &["b", "c"], 1000);
        assert!((rate - j).abs() < 0.05, "agreement {rate} vs jaccard {j}");
    }

    #[test]
    fn minhash_disjoint_sets_rarely_agree() {
        // J = 0; only 64-bit collisions can match. Binomial 99% bound at
        // p ~ 2^-64 over 64k position trials is still zero matches.
        let rate = agreement_rate(&["a", "b"], &["c", "d"], 1000);
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn lsh_identical_signatures_cluster_together() {
        let s = minhash_signature(&grams_of(&["x"]), 64, 3).unwrap();
        let assignment = lsh_cluster(&["f".into(), "g".into()], &[s.clone(), s], 16, 4).unwrap();
        assert_eq!(assignment.num_clusters, 1);
        assert_eq!(assignment.by_function["f"], assignment.by_function["g"]);
    }

    #[test]
    fn lsh_fully_distinct_signatures_split() {
        let a = MinHashSignature {
            values: (0..64).collect(),
        };
        let b = MinHashSignature {
            values: (100..164).collect(),
        };
        let assignment = lsh_cluster(&["f".into(), "g".into()], &[a, b], 16, 4).unwrap();
        assert_eq!(assignment.num_clusters, 2);
    }

    #[test]
    fn lsh_transitive_closure_merges_chain() {
        // A~B share band 0, B~C share band 1, A and C share nothing.
        let mut a: Vec<u64> = (0..64).map(|i| 1000 + i).collect();
        let mut b: Vec<u64> = (0..64).map(|i| 2000 + i).collect();
        let mut c: Vec<u64> = (0..64).map(|i| 3000 + i).collect();
        for i in 0..4 {
            let shared_ab = 1 + i as u64;
            a[i] = shared_ab;
            b[i] = shared_ab;
            let shared_bc = 100 + i as u64;
            b[4 + i] = shared_bc;
            c[4 + i] = shared_bc;
        }
        let sigs = [
            MinHashSignature { values: a },
            MinHashSignature { values: b },
            MinHashSignature { values: c },
        ];
        let assignment = lsh_cluster(&["A".into(), "B".into(), "C".into()], &sigs, 16, 4).unwrap();
        assert_eq!(assignment.num_clusters, 1);
    }

    #[test]
    fn lsh_banding_mismatch_rejected() {
        let s = minhash_signature(&grams_of(&["x"]), 64, 3).unwrap();
        assert!(lsh_cluster(&["f".into()], &[s], 10, 4).is_err());
    }

    #[test]
    fn cluster_ids_are_contiguous_first_seen() {
        let sigs: Vec<MinHashSignature> = (0..5u64)
            .map(|k| MinHashSignature {
                values: (0..64).map(|i| k * 1000 + i).collect(),
            })
            .collect();
        let names: Vec<String> = (0..5).map(|i| format!("f{i}")).collect();
        let assignment = lsh_cluster(&names, &sigs, 16, 4).unwrap();
        let mut ids: Vec<usize> = assignment.by_function.values().copied().collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert_eq!(assignment.by_function["f0"], 0);
        assert_eq!(assignment.by_function["f4"], 4);
    }

    #[test]
    fn build_fcg_single_call() {
        let fns = [record("f1", &["call"], &["f2"]), record("f2", &[], &[])];
        let clusters = ClusterAssignment {
            by_function: [("f1".to_string(), 0), ("f2".to_string(), 1)].into(),
            num_clusters: 2,
        };
        let built = build_fcg(&fns, &clusters).unwrap();
        assert_eq!(built.fcg.num_vertices, 2);
        assert_eq!(built.fcg.edges, vec![(0, 1)]);
        assert_eq!(built.unresolved_callees, 0);
    }

    #[test]
    fn build_fcg_collapses_duplicate_edges() {
        let fns = [
            record("f1", &[], &["f2"]),
            record("f2", &[], &[]),
            record("f3", &[], &["f4"]),
            record("f4", &[], &[]),
        ];
        let clusters = ClusterAssignment {
            by_function: [
                ("f1".to_string(), 0),
                ("f2".to_string(), 1),
                ("f3".to_string(), 0),
                ("f4".to_string(), 1),
            ]
            .into(),
            num_clusters: 2,
        };
        let built = build_fcg(&fns, &clusters).unwrap();
        assert_eq!(built.fcg.edges, vec![(0, 1)]);
    }

    #[test]
    fn build_fcg_keeps_self_loop() {
        let fns = [record("f1", &[], &["f1"])];
        let clusters = ClusterAssignment {
            by_function: [("f1".to_string(), 0)].into(),
            num_clusters: 1,
        };
        let built = build_fcg(&fns, &clusters).unwrap();
        assert_eq!(built.fcg.edges, vec![(0, 0)]);
    }

    #[test]
    fn build_fcg_counts_unresolved_callees() {
        let text = "FUNC f1\n call ghost\nENDF";
        let built = extract_fcg(text, &ExtractConfig::default()).unwrap();
        assert_eq!(built.unresolved_callees, 1);
        assert!(built.fcg.edges.is_empty());
        assert_eq!(built.fcg.num_vertices, 1);
    }

    #[test]
    fn extraction_is_deterministic() {
        let text =
            "FUNC f1\n mov\n add\n call f2\nENDF\nFUNC f2\n mov\n add\nENDF\nFUNC f3\n xor\nENDF";
        let cfg = ExtractConfig::default();
        let a = extract_fcg(text, &cfg).unwrap();
        let b = extract_fcg(text, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.fcg.num_vertices <= 3);
    }
}
