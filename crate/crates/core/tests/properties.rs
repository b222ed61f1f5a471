use proptest::prelude::*;

use mmkg::augment::{parse_triplet_line, render_triplet};
use mmkg::gateway::EmbeddingVector;
use mmkg::kg::{normalize_key, parse_extraction_output, Chunk, ExtractedRelation, KnowledgeGraph};
use mmkg::verifier::{clamped_cosine, segment_text, Segmentation, VerifierConfig};

proptest! {
    #[test]
    fn normalize_key_is_idempotent(name in "\\PC{0,40}") {
        let once = normalize_key(&name);
        prop_assert_eq!(normalize_key(&once), once);
    }

    #[test]
    fn windows_partition_the_tokens(
        text in "([a-z]{1,6}[.!?]? {1,2}){0,80}",
        fixed_m in 1usize..12,
        max in 1usize..20,
        fixed in any::<bool>(),
    ) {
        let config = VerifierConfig {
            fixed_m,
            max_window_tokens: max,
            segmentation: if fixed { Segmentation::FixedM } else { Segmentation::Sentence },
            ..VerifierConfig::default()
        };
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            prop_assert!(segment_text(&text, &config).is_err());
            return Ok(());
        }
        let windows = segment_text(&text, &config).unwrap();
        let mut next = 0;
        for w in &windows {
            prop_assert_eq!(w.start, next);
            prop_assert!(w.token_count >= 1);
            prop_assert_eq!(w.text.clone(), tokens[w.start..w.start + w.token_count].join(" "));
            next += w.token_count;
        }
        prop_assert_eq!(next, tokens.len());
    }

    #[test]
    fn clamped_cosine_stays_in_range(
        pair in (1usize..64).prop_flat_map(|n| (
            prop::collection::vec(-1e6f32..1e6, n),
            prop::collection::vec(-1e6f32..1e6, n),
        ))
    ) {
        let s = clamped_cosine(&EmbeddingVector::new(pair.0), &EmbeddingVector::new(pair.1)).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn extraction_parser_is_total(raw in "\\PC{0,300}") {
        let _ = parse_extraction_output(&raw);
    }

    #[test]
    fn rendered_triplets_parse_back(
        head in "[a-zA-Z\\[\\]\\\\]{1,6}( [a-zA-Z\\[\\]\\\\]{1,6})?",
        tail in "[a-zA-Z\\[\\]\\\\]{1,6}( [a-zA-Z\\[\\]\\\\]{1,6})?",
        label in "[a-z]{1,8}( [a-z]{1,8})?",
    ) {
        let mut g = KnowledgeGraph::new();
        g.merge(
            &[],
            &[ExtractedRelation {
                source: head.clone(),
                target: tail.clone(),
                description: label.clone(),
                keywords: vec![],
                weight: 1.0,
            }],
            Chunk {
                chunk_id: "c".into(),
                text: String::new(),
                embedding: EmbeddingVector::new(vec![1.0]),
                source_image: None,
            },
        );
        let relation = g.relations().next().unwrap();
        let line = render_triplet(relation, &g).unwrap();
        let (h, l, t) = parse_triplet_line(&line).unwrap();
        prop_assert_eq!(h, g.entity(&relation.head).unwrap().display_name.clone());
        prop_assert_eq!(l, relation.label.clone());
        prop_assert_eq!(t, g.entity(&relation.tail).unwrap().display_name.clone());
    }
}
