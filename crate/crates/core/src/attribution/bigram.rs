//! Keyword co-occurrence graphs across conversations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::AttributionError;
use crate::tags::IssueTag;

pub const SUICIDE_MIN_COUNT: usize = 10;
pub const ABUSE_PHYSICAL_MIN_COUNT: usize = 5;

/// Shipped edge thresholds for the tags that have one.
pub fn preset_min_count(tag: IssueTag) -> Option<usize> {
    match tag {
        IssueTag::Suicide => Some(SUICIDE_MIN_COUNT),
        IssueTag::AbusePhysical => Some(ABUSE_PHYSICAL_MIN_COUNT),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigramEdge {
    /// `a < b` lexicographically.
    pub a: String,
    pub b: String,
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigramGraph {
    pub min_count: usize,
    /// Sorted; only keywords with a surviving edge.
    pub nodes: Vec<String>,
    /// Sorted by `(a, b)`.
    pub edges: Vec<BigramEdge>,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl BigramGraph {
    pub fn weight(&self, x: &str, y: &str) -> Option<usize> {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        self.edges.iter().find(|e| e.a == a && e.b == b).map(|e| e.weight)
    }

    /// Edges of weight at least `k`, nodes pruned to match.
    pub fn filter(&self, k: usize) -> BigramGraph {
        let edges: Vec<BigramEdge> = self.edges.iter().filter(|e| e.weight >= k).cloned().collect();
        let nodes: BTreeSet<String> = edges.iter().flat_map(|e| [e.a.clone(), e.b.clone()]).collect();
        BigramGraph {
            min_count: k.max(self.min_count),
            nodes: nodes.into_iter().collect(),
            edges,
        }
    }

    /// Graphviz text.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph keywords {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  {};", quote(n));
        }
        for e in &self.edges {
            let _ = writeln!(out, "  {} -- {} [weight={}];", quote(&e.a), quote(&e.b), e.weight);
        }
        out.push_str("}\n");
        out
    }

    /// One JSON object per line: nodes first, then edges.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&json!({"type": "node", "id": n}).to_string());
            out.push('\n');
        }
        for e in &self.edges {
            out.push_str(&json!({"type": "edge", "source": e.a, "target": e.b, "weight": e.weight}).to_string());
            out.push('\n');
        }
        out
    }
}

/// Count each unordered keyword pair once per conversation in which both occur.
pub fn bigram_graph(keyword_sets: &[Vec<String>], min_count: usize) -> Result<BigramGraph, AttributionError> {
    if min_count == 0 {
        return Err(AttributionError::Invalid("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for set in keyword_sets {
        let unique: Vec<&str> = set
            .iter()
            .map(String::as_str)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for (i, a) in unique.iter().enumerate() {
            for b in &unique[i + 1..] {
                *counts.entry((a, b)).or_default() += 1;
            }
        }
    }
    let edges = counts
        .into_iter()
        .filter(|(_, w)| *w >= min_count)
        .map(|((a, b), weight)| BigramEdge {
            a: a.to_string(),
            b: b.to_string(),
            weight,
        })
        .collect::<Vec<_>>();
    let nodes: BTreeSet<String> = edges.iter().flat_map(|e| [e.a.clone(), e.b.clone()]).collect();
    Ok(BigramGraph {
        min_count,
        nodes: nodes.into_iter().collect(),
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sets(n: usize, words: &[&str]) -> Vec<Vec<String>> {
        vec![words.iter().map(|s| s.to_string()).collect(); n]
    }

    #[test]
    fn ten_conversations_one_edge() {
        let g = bigram_graph(&sets(10, &["family", "pain"]), 10).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.weight("pain", "family"), Some(10));
        assert_eq!(g.nodes, ["family", "pain"]);
        let g = bigram_graph(&sets(10, &["family", "pain"]), 11).unwrap();
        assert!(g.edges.is_empty() && g.nodes.is_empty());
    }

    #[test]
    fn duplicates_within_a_conversation_count_once() {
        let g = bigram_graph(&sets(1, &["a", "b", "a", "a"]), 1).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].weight, 1);
    }

    #[test]
    fn presets() {
        assert_eq!(preset_min_count(IssueTag::Suicide), Some(10));
        assert_eq!(preset_min_count(IssueTag::AbusePhysical), Some(5));
        assert_eq!(preset_min_count(IssueTag::Grief), None);
    }

    #[test]
    fn zero_min_count_rejected() {
        assert!(bigram_graph(&[], 0).is_err());
    }

    #[test]
    fn exports() {
        let g = bigram_graph(&sets(2, &["pain", "fam\"ily"]), 1).unwrap();
        assert_eq!(
            g.to_dot(),
            "graph keywords {\n  \"fam\\\"ily\";\n  \"pain\";\n  \"fam\\\"ily\" -- \"pain\" [weight=2];\n}\n"
        );
        let lines: Vec<serde_json::Value> = g.to_jsonl().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2]["weight"], 2);
        assert_eq!(lines[2]["type"], "edge");
    }

    proptest! {
        #[test]
        fn threshold_equals_filtering(
            convs in proptest::collection::vec(proptest::collection::vec("[a-f]", 0..6), 0..40),
            k in 1usize..6,
        ) {
            let full = bigram_graph(&convs, 1).unwrap();
            let direct = bigram_graph(&convs, k).unwrap();
            prop_assert_eq!(direct, full.filter(k));
            for e in &full.edges {
                prop_assert!(e.a < e.b);
                prop_assert_eq!(full.weight(&e.b, &e.a), Some(e.weight));
            }
        }
    }
}
