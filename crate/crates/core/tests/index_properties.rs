use lcp_core::corpus_index::{build_index, build_index_from_files, load_index, persist_index, DocUnit};
use lcp_core::tokenize::tokenize;
use proptest::prelude::*;

fn corpus() -> impl Strategy<Value = Vec<String>> {
    let word = prop::sample::select(vec!["the", "cat", "sat", "on", "mat", "Dog's", "well-known", "x1", "é"]);
    let line = prop::collection::vec(word, 0..8).prop_map(|w| w.join(" "));
    prop::collection::vec(line, 1..30)
}

proptest! {
    #[test]
    fn counts_add_up(lines in corpus()) {
        let text = lines.join("\n");
        let (idx, stats) = build_index(text.as_bytes(), DocUnit::Line).unwrap();
        prop_assert_eq!(stats.documents, text.lines().count() as u64);
        let tokens: u64 = lines.iter().map(|l| tokenize(l).len() as u64).sum();
        prop_assert_eq!(idx.n_tokens(), tokens);
        for order in 1..=3 {
            let total: u64 = idx.ngrams(order).map(|(_, c)| c).sum();
            let windows: u64 = lines.iter().map(|l| tokenize(l).len().saturating_sub(order - 1) as u64).sum();
            prop_assert_eq!(total, windows);
            for (g, c) in idx.ngrams(order) {
                let toks: Vec<&str> = g.split(' ').collect();
                let df = idx.doc_freq(&toks);
                prop_assert!(df >= 1 && df <= c && df <= idx.n_docs());
            }
        }
    }

    #[test]
    fn documents_are_coarser_than_lines(lines in corpus()) {
        let text = lines.join("\n");
        let (by_line, _) = build_index(text.as_bytes(), DocUnit::Line).unwrap();
        let (by_doc, _) = build_index(text.as_bytes(), DocUnit::Document).unwrap();
        for (g, c) in by_line.ngrams(1) {
            prop_assert_eq!(by_doc.unigram(g), c);
            prop_assert!(by_doc.doc_freq(&[g]) <= by_line.doc_freq(&[g]));
        }
    }
}

#[test]
fn split_files_equal_one_file_and_persistence_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpora/corpus.txt"),
    )
    .unwrap();
    let lines: Vec<&str> = text.lines().take(3000).collect();
    let whole = dir.path().join("whole.txt");
    std::fs::write(&whole, lines.join("\n")).unwrap();
    let parts: Vec<_> = lines
        .chunks(700)
        .enumerate()
        .map(|(i, c)| {
            let p = dir.path().join(format!("part{i}.txt"));
            std::fs::write(&p, c.join("\n")).unwrap();
            p
        })
        .collect();
    let (a, _) = build_index_from_files(&[&whole], DocUnit::Line).unwrap();
    let (b, sb) = build_index_from_files(&parts, DocUnit::Line).unwrap();
    assert_eq!(a, b);
    assert_eq!(sb.documents, 3000);

    for name in ["idx.tsv", "idx.bin"] {
        let p = dir.path().join(name);
        persist_index(&a, &p).unwrap();
        let first = std::fs::read(&p).unwrap();
        assert_eq!(load_index(&p).unwrap(), a);
        persist_index(&b, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first, "{name} not deterministic");
    }
}
