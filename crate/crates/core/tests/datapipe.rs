mod common;

use std::collections::BTreeSet;

use common::{fixture, rng};
use fastdoc_core::datapipe::*;
use fastdoc_core::error::Error;
use proptest::prelude::*;
use rand::Rng;

fn doc(id: &str, text: &str) -> Document {
    Document::from_text(id, text).unwrap()
}

fn with_category(id: &str, cat: &str) -> Document {
    let mut d = doc(id, "Filler text.");
    d.category = Some(cat.into());
    d
}

#[test]
fn three_record_fixture_round_trips() {
    let c = load_corpus(fixture("corpus3.jsonl"), DomainMode::Derived).unwrap();
    assert_eq!(c.len(), 3);
    let a = c.get("manual-001").unwrap();
    assert_eq!(a.sentences, vec!["Connect the equalizer to the stereo.", "Adjust each band slowly."]);
    assert_eq!(a.category.as_deref(), Some("stereo equalizer"));
    assert_eq!(a.hierarchy.as_ref().unwrap().last().unwrap(), "Stereo Systems");
    let b = c.get("manual-002").unwrap();
    assert_eq!(b.sentences, vec!["Insert the disc.", "Press play to start."]);
    assert!(b.hierarchy.is_none());
    let p = c.get("article-003").unwrap();
    let concepts: BTreeSet<String> = ["optimisation", "learning theory"].iter().map(|s| s.to_string()).collect();
    assert_eq!(p.concepts.as_ref().unwrap(), &concepts);
    assert_eq!(p.primary_category(), Some("Machine Learning"));

    let again = parse_corpus(&c.to_jsonl(), DomainMode::Derived).unwrap();
    match parse_corpus(&std::fs::read_to_string(fixture("corpus3.jsonl")).unwrap(), DomainMode::CustomerSupport) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(again.documents, c.documents);
}

#[test]
fn corpus_loading_errors() {
    let empty = parse_corpus("", DomainMode::CustomerSupport).unwrap();
    assert!(empty.is_empty());
    let missing_id = "{\"id\": \"a\", \"text\": \"Fine.\"}\n{\"text\": \"No id.\"}\n";
    match parse_corpus(missing_id, DomainMode::Derived) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let dup = "{\"id\": \"a\", \"text\": \"One.\"}\n{\"id\": \"a\", \"text\": \"Two.\"}\n";
    assert!(matches!(parse_corpus(dup, DomainMode::Derived), Err(Error::Validation(_))));
    assert!(matches!(
        load_corpus("/nonexistent/corpus.jsonl", DomainMode::CustomerSupport),
        Err(Error::Io { .. })
    ));
}

#[test]
fn triplet_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let ts = vec![Triplet::new("a", "b", "c"), Triplet::new("b", "a", "c")];
    write_triplets(&path, &ts).unwrap();
    assert_eq!(read_triplets(&path).unwrap(), ts);
}

#[test]
fn two_plus_one_corpus_yields_the_unique_triplet_shape() {
    let c = Corpus::new(
        vec![with_category("a1", "A"), with_category("a2", "A"), with_category("b1", "B")],
        DomainMode::CustomerSupport,
    )
    .unwrap();
    let out = mine_triplets_metadata(&c, 1, 0).unwrap();
    assert_eq!(out.len(), 1);
    let t = &out[0];
    let valid = [Triplet::new("a1", "a2", "b1"), Triplet::new("a2", "a1", "b1")];
    assert!(valid.contains(t), "{t:?}");
    assert!(common::triplet_is_valid(&c, t));
}

#[test]
fn scientific_mode_doubles_with_swaps() {
    let mk = |id: &str, sub: &str| {
        let mut d = doc(id, "Text.");
        d.hierarchy = Some(vec!["Computer Science".into(), sub.into()]);
        d
    };
    let c = Corpus::new(
        vec![mk("p1", "Machine Learning"), mk("p2", "Machine Learning"), mk("p3", "Databases")],
        DomainMode::Scientific,
    )
    .unwrap();
    let out = mine_triplets_metadata(&c, 1, 3).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[1], out[0].swapped());
}

#[test]
fn single_category_has_no_negative() {
    let c = Corpus::new(
        vec![with_category("a", "A"), with_category("b", "A"), with_category("c", "A")],
        DomainMode::CustomerSupport,
    )
    .unwrap();
    assert!(matches!(mine_triplets_metadata(&c, 5, 0), Err(Error::NoNegativeAvailable(_))));
}

#[test]
fn mining_is_seed_deterministic() {
    let s = common::setup(10, 50, 0);
    assert_eq!(
        mine_triplets_metadata(&s.corpus, 50, 9).unwrap(),
        mine_triplets_metadata(&s.corpus, 50, 9).unwrap()
    );
    assert_ne!(
        mine_triplets_metadata(&s.corpus, 50, 9).unwrap(),
        mine_triplets_metadata(&s.corpus, 50, 10).unwrap()
    );
}

#[test]
fn miner_soundness_over_random_corpora() {
    let sweep = common::miner_sweep(1000, 2024);
    assert!(sweep.mined > 500, "only {} corpora mined", sweep.mined);
    assert_eq!(sweep.violations, 0);
    assert_eq!(sweep.wrong_sizes, 0);
    assert_eq!(sweep.missing_swaps, 0);
}

#[test]
fn taxonomy_parse_pad_and_strip() {
    let t = Taxonomy::parse(
        "Computer Science > Machine Learning > Deep Learning\nComputer Science > Databases\nPhysics > Optics\n",
    )
    .unwrap();
    assert_eq!(t.depth(), 3);
    let cs = t.index_of(0, "Computer Science").unwrap();
    let ml = t.index_of(1, "Machine Learning").unwrap();
    let labels = t.pad_hierarchy(&["Computer Science".into(), "Machine Learning".into()]).unwrap();
    assert_eq!(labels.levels, vec![cs, ml, t.null_index(2)]);
    assert_eq!(labels.strip_nulls(&t), vec![cs, ml]);
    assert!(labels.is_gapless(&t));
    let empty = t.pad_hierarchy(&[]).unwrap();
    assert_eq!(empty.levels, (0..3).map(|l| t.null_index(l)).collect::<Vec<_>>());
    for l in 0..3 {
        assert_eq!(t.null_index(l), t.class_count(l));
    }
    assert!(matches!(t.pad_hierarchy(&["Biology".into()]), Err(Error::Validation(_))));
    assert_eq!(Taxonomy::parse(&t.to_text()).unwrap(), t);
}

#[test]
fn stereo_equalizer_maps_to_stereo_systems() {
    let tax = Taxonomy::load(fixture("product_taxonomy.txt")).unwrap();
    let wv = WordVectors::load(fixture("word_vectors.txt")).unwrap();
    let path = map_category_to_hierarchy("stereo equalizer", &tax, &wv).unwrap();
    assert_eq!(
        path,
        ["Electronics", "Audio", "Audio Players & Recorders", "Stereo Systems"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
    );
    let exact = map_category_to_hierarchy("garden TOOLS", &tax, &wv).unwrap();
    assert_eq!(exact.last().unwrap(), "Garden Tools");
    assert!(matches!(
        map_category_to_hierarchy("zzqx", &tax, &wv),
        Err(Error::UnmappableCategory(_))
    ));
}

#[test]
fn category_mapping_matches_brute_force_cosine() {
    let tax = Taxonomy::parse("A > left\nA > middle\nB > right\n").unwrap();
    let wv = WordVectors::parse("left 1 0 0\nmiddle 0 1 0\nright 0 0 1\na 0.1 0.1 0\nb 0 0 0.1\nquery 0.2 0.9 0.1\n").unwrap();
    let q = [0.2, 0.9, 0.1];
    let mean = |ws: &[&str]| {
        let mut m = [0.0f64; 3];
        for w in ws {
            for (k, v) in wv.get(w).unwrap().iter().enumerate() {
                m[k] += f64::from(*v) / ws.len() as f64;
            }
        }
        m
    };
    let scored = [
        (common::cosine(&q, &mean(&["a", "left"])), "left"),
        (common::cosine(&q, &mean(&["a", "middle"])), "middle"),
        (common::cosine(&q, &mean(&["b", "right"])), "right"),
    ];
    let best = scored.iter().max_by(|x, y| x.0.total_cmp(&y.0)).unwrap().1;
    let got = map_category_to_hierarchy("query", &tax, &wv).unwrap();
    assert_eq!(got.last().unwrap(), best);
}

#[test]
fn rouge_hand_values() {
    let s = rouge_l(&rouge_tokens("the cat sat"), &rouge_tokens("the dog sat"));
    assert_eq!(lcs_len(&rouge_tokens("the cat sat"), &rouge_tokens("the dog sat")), 2);
    assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    let same = rouge_tokens("A b C");
    assert_eq!(rouge_l(&same, &same).f1, 1.0);
    assert_eq!(rouge_l(&rouge_tokens("x y"), &rouge_tokens("p q")).f1, 0.0);
    assert_eq!(rouge_l::<String>(&[], &same).f1, 0.0);
}

fn all_sequences(max_len: usize, alphabet: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..alphabet as u8 {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn rouge_matches_exhaustive_lcs_on_short_sequences() {
    let seqs = all_sequences(6, 3);
    assert_eq!(seqs.len(), 1093);
    let mut r = rng(5);
    // every pair up to length 4, and a dense sample at lengths 5 and 6
    for a in &seqs {
        for b in &seqs {
            if a.len() > 4 && b.len() > 4 && r.random_range(0..40) != 0 {
                continue;
            }
            let l = lcs_exhaustive_check(a, b);
            let s = rouge_l(a, b);
            if a.is_empty() || b.is_empty() || l == 0 {
                assert_eq!(s.f1, 0.0);
                continue;
            }
            let p = l as f64 / b.len() as f64;
            let rc = l as f64 / a.len() as f64;
            assert!((s.precision - p).abs() < 1e-12);
            assert!((s.recall - rc).abs() < 1e-12);
            assert!((s.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
        }
    }
}

fn lcs_exhaustive_check(a: &[u8], b: &[u8]) -> usize {
    let l = common::lcs_exhaustive(a, b);
    assert_eq!(lcs_len(a, b), l, "{a:?} {b:?}");
    l
}

#[test]
fn rouge_miner_pairs_paraphrases_against_outlier() {
    let docs = vec![
        doc("p1", "the battery charges fully in two hours using the supplied cable"),
        doc("p2", "the battery charges fully in three hours using the supplied cable"),
        doc("q1", "press and hold the power button to reset the wireless speaker"),
        doc("q2", "press and hold the power button to pair the wireless speaker"),
        doc("o", "zebra quantum violin orchard"),
    ];
    let corpus = Corpus::new(docs, DomainMode::Derived).unwrap();
    let cfg = RougeMiningConfig {
        count: 20,
        seed: 4,
        pos_threshold: 0.6,
        neg_threshold: 0.1,
        truncate_tokens: 512,
        threads: 2,
    };
    let out = mine_triplets_rouge(&corpus, &cfg).unwrap();
    assert_eq!(out.len(), 20);
    let n = corpus.len();
    let scores = pairwise_rouge_f1(&corpus, 512, 1);
    for t in &out {
        let partner = |id: &str| match id {
            "p1" => "p2",
            "p2" => "p1",
            "q1" => "q2",
            "q2" => "q1",
            _ => "",
        };
        assert_eq!(t.positive_id, partner(&t.anchor_id));
        assert!(["o", "q1", "q2", "p1", "p2"].contains(&t.negative_id.as_str()));
        let (a, p, ng) = (
            corpus.index_of(&t.anchor_id).unwrap(),
            corpus.index_of(&t.positive_id).unwrap(),
            corpus.index_of(&t.negative_id).unwrap(),
        );
        let toks: Vec<Vec<String>> = corpus.documents.iter().map(|d| rouge_tokens(&d.full_text())).collect();
        let oracle = |i: usize, j: usize| {
            let l = common::lcs_exhaustive(&toks[i], &toks[j]) as f64;
            if l == 0.0 {
                0.0
            } else {
                let (pr, rc) = (l / toks[j].len() as f64, l / toks[i].len() as f64);
                2.0 * pr * rc / (pr + rc)
            }
        };
        assert!(oracle(a, p) >= 0.6);
        assert!(oracle(a, ng) <= 0.1);
        assert!((scores[a * n + p] - oracle(a, p)).abs() < 1e-12);
    }
    assert!(out.iter().any(|t| t.negative_id == "o"));
}

#[test]
fn rouge_miner_is_thread_count_independent() {
    let s = common::setup(6, 1, 0);
    let single = pairwise_rouge_f1(&s.corpus, 64, 1);
    let many = pairwise_rouge_f1(&s.corpus, 64, 4);
    assert_eq!(single, many);
}

#[test]
fn rouge_miner_errors() {
    let near_dupes = Corpus::new(
        vec![doc("a", "one two three four"), doc("b", "one two three four"), doc("c", "one two three five")],
        DomainMode::Derived,
    )
    .unwrap();
    assert!(matches!(
        mine_triplets_rouge(&near_dupes, &RougeMiningConfig::default()),
        Err(Error::MiningExhausted(_))
    ));
    let tiny = Corpus::new(vec![doc("a", "x"), doc("b", "y")], DomainMode::Derived).unwrap();
    assert!(matches!(
        mine_triplets_rouge(&tiny, &RougeMiningConfig::default()),
        Err(Error::Validation(_))
    ));
}

#[test]
fn derived_taxonomy_recovers_planted_groups() {
    let mut docs = Vec::new();
    for i in 0..6 {
        docs.push(doc(&format!("k{i}"), &format!("kettle boil water spout lid steam {i}")));
        docs.push(doc(&format!("d{i}"), &format!("drill chuck torque battery bit screw {i}")));
    }
    let corpus = Corpus::new(docs, DomainMode::Derived).unwrap();
    let (tax, paths) = derive_taxonomy(&corpus, 1, 2, 7).unwrap();
    assert_eq!(tax.depth(), 1);
    assert_eq!(tax.class_count(0), 2);
    for group in ['k', 'd'] {
        let labels: BTreeSet<&String> = corpus
            .documents
            .iter()
            .zip(&paths)
            .filter(|(d, _)| d.id.starts_with(group))
            .map(|(_, p)| &p[0])
            .collect();
        assert_eq!(labels.len(), 1, "group {group} is impure");
    }
    assert_eq!(derive_taxonomy(&corpus, 1, 2, 7).unwrap().1, paths);
}

#[test]
fn derived_taxonomy_supports_fifteen_levels() {
    let s = common::setup(20, 1, 0);
    let (tax, paths) = derive_taxonomy(&s.corpus, 15, 2, 1).unwrap();
    assert!(tax.depth() <= 15 && tax.depth() >= 2);
    assert_eq!(paths.len(), s.corpus.len());
    assert!(paths.iter().all(|p| !p.is_empty() && p.len() <= 15));
    assert_eq!(Taxonomy::parse(&tax.to_text()).unwrap(), tax);
    assert!(matches!(derive_taxonomy(&s.corpus, 0, 2, 1), Err(Error::Config(_))));
    assert!(matches!(derive_taxonomy(&s.corpus, 2, 1, 1), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rouge_f1_is_symmetric(a in prop::collection::vec(0u8..4, 0..10), b in prop::collection::vec(0u8..4, 0..10)) {
        prop_assert!((rouge_l(&a, &b).f1 - rouge_l(&b, &a).f1).abs() < 1e-12);
        if !a.is_empty() {
            prop_assert_eq!(rouge_l(&a, &a).f1, 1.0);
        }
    }

    #[test]
    fn padded_labels_have_full_depth(take in 0usize..4) {
        let t = Taxonomy::parse("R > S > T\nR > S > U\nQ > V > W\n").unwrap();
        let path: Vec<String> = ["R", "S", "U"].iter().take(take.min(3)).map(|s| s.to_string()).collect();
        let l = t.pad_hierarchy(&path).unwrap();
        prop_assert_eq!(l.levels.len(), 3);
        let recovered: Vec<String> = l
            .strip_nulls(&t)
            .iter()
            .enumerate()
            .map(|(lv, &i)| t.label(lv, i).unwrap().to_string())
            .collect();
        prop_assert_eq!(recovered, path);
    }
}

#[test]
fn legal_swapped_copies_keep_a_disjoint_negative() {
    let mk = |id: &str, cs: &[&str]| {
        let mut d = doc(id, "Text.");
        d.concepts = Some(cs.iter().map(|s| s.to_string()).collect());
        d
    };
    let c = Corpus::new(
        vec![mk("a", &["tax"]), mk("p", &["tax", "fishing"]), mk("f", &["fishing"]), mk("z", &["energy"])],
        DomainMode::Legal,
    )
    .unwrap();
    let out = mine_triplets_metadata(&c, 30, 1).unwrap();
    assert_eq!(out.len(), 60);
    for t in &out {
        assert!(common::triplet_is_valid(&c, t), "{t:?}");
    }
}
