//! Runs against a full WordNet 3.0 database when `LCP_WORDNET_DIR` is set.

use lcp_core::semantics::{load_wordnet, wordnet_counts, HypernymCounting};

#[test]
fn dog_noun_senses_match_independent_traversal() {
    let Ok(dir) = std::env::var("LCP_WORDNET_DIR") else {
        eprintln!("LCP_WORDNET_DIR not set; skipping");
        return;
    };
    let inv = load_wordnet(dir).unwrap();
    let expected = [
        ("02084071-n", (2, 18)),
        ("10114209-n", (1, 0)),
        ("10023039-n", (1, 0)),
        ("09886220-n", (1, 1)),
        ("07676602-n", (1, 1)),
        ("03901548-n", (1, 0)),
        ("02710044-n", (1, 0)),
    ];
    let senses: Vec<&str> = inv.synsets_for("dog").iter().take(7).map(|s| s.id.as_str()).collect();
    let ids: Vec<&str> = expected.iter().map(|e| e.0).collect();
    assert_eq!(senses, ids);
    for (id, counts) in expected {
        assert_eq!(wordnet_counts(&inv, id, HypernymCounting::Direct), Some(counts), "{id}");
    }
    let dog = inv.synset("02084071-n").unwrap();
    assert_eq!(dog.examples, ["the dog barked all night"]);
}
