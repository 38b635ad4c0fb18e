use std::collections::{BTreeSet, HashMap};

use groundqa::answering::{lexical_extract_span, CandidateKind, ContextParagraph};
use groundqa::corpus::{export_squad, import_squad, AnswerStart, QaExample};
use groundqa::evaluation::*;
use groundqa::fixtures;
use groundqa::moderation::Stopwords;
use groundqa::retrieval::{cosine_similarity, Embedder, HashedEmbedder};
use groundqa::text::{sentence_spans, tokenize, word_count};
use proptest::prelude::*;

fn ids(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn gold(x: &str) -> BTreeSet<String> {
    [x.to_string()].into()
}

#[test]
fn mrr_mixed_ranks() {
    let ranked = vec![ids(&["g", "a", "b"]), ids(&["a", "g", "b"]), ids(&["a", "b", "g"]), ids(&["a", "b", "c", "g"])];
    let golds = vec![gold("g"); 4];
    let r = mrr_at_k(&ranked, &golds, 3).unwrap();
    assert!((r.value - (1.0 + 0.5 + 1.0 / 3.0) / 4.0).abs() < 1e-12);
    assert!((r.value - 0.458333).abs() < 1e-6);
    assert_eq!(mrr_at_k(&ranked[2..3], &golds[..1], 3).unwrap().value, 1.0 / 3.0);
    assert!(mrr_at_k(&[], &[], 3).is_err());
    assert!(mrr_at_k(&ranked, &golds, 0).is_err());
    assert!(mrr_at_k(&ranked, &golds[..2], 3).is_err());
}

#[test]
fn token_f1_examples() {
    assert!((token_f1("park assist on", "park assist") - 0.8).abs() < 1e-12);
    assert_eq!(token_f1("open the door", "open the door"), 1.0);
    assert_eq!(token_f1("seat heating", "tyre pressure"), 0.0);
    assert_eq!(token_f1("", ""), 1.0);
    assert_eq!(token_f1("", "x"), 0.0);
}

#[test]
fn exact_match_normalization() {
    assert_eq!(exact_match("The Park Assist.", "park assist"), 1.0);
    assert_eq!(exact_match("park assist", "parking assistant"), 0.0);
    assert_eq!(exact_match("", ""), 1.0);
    assert_eq!(exact_match("  an   Airbag! ", "airbag"), 1.0);
}

#[test]
fn meteor_examples() {
    assert!((meteor("press the release button", "press the release button") - 0.9921875).abs() < 1e-12);
    assert_eq!(meteor("alpha beta", "gamma delta"), 0.0);
    let (p, r) = (1.0 / 2.0, 1.0 / 3.0);
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    assert!((meteor("door open", "door is shut") - fmean / 2.0).abs() < 1e-12);
}

#[test]
fn meteor_chunks_follow_alignment() {
    let t = |s: &str| tokenize(s);
    assert_eq!(meteor_alignment(&t("a b a"), &t("a b a")), vec![Some(0), Some(1), Some(2)]);
    assert_eq!(meteor_alignment(&t("b a x"), &t("a b")), vec![Some(1), Some(0), None]);
    // two chunks over three matches
    let v = meteor("c d a", "a b c d");
    let (p, r) = (1.0, 3.0 / 4.0);
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    assert!((v - fmean * (1.0 - 0.5 * (2.0f64 / 3.0).powi(3))).abs() < 1e-12);
}

#[test]
fn response_cosine_is_mean_of_pairs() {
    let e = HashedEmbedder::default();
    let preds = ids(&["open the tailgate", "fold the seat"]);
    let refs = ids(&["close the tailgate", "fold the rear seat"]);
    let r = response_cosine(&e, &preds, &refs).unwrap();
    let c = |a: &str, b: &str| cosine_similarity(&e.embed(a).unwrap(), &e.embed(b).unwrap()).unwrap();
    let expected = (c(&preds[0], &refs[0]) + c(&preds[1], &refs[1])) / 2.0;
    assert!((r.value - expected).abs() < 1e-12);
    assert!((response_cosine(&e, &preds, &preds).unwrap().value - 1.0).abs() < 1e-12);
    assert!(response_cosine(&e, &preds, &refs[..1]).is_err());
}

#[test]
fn moderator_accuracy_and_contributions() {
    use CandidateKind::*;
    let r = moderator_accuracy(&[Some(Extractive), Some(Generative)], &[Extractive, Extractive]).unwrap();
    assert_eq!(r.value, 0.5);
    assert_eq!(moderator_accuracy(&[None], &[Extractive]).unwrap().value, 0.0);
    assert!(moderator_accuracy(&[], &[]).is_err());

    let c = contributions(&[Some(Generative), Some(Generative), Some(Generative), Some(Extractive)]).unwrap();
    assert_eq!((c.generative, c.extractive, c.filtered), (0.75, 0.25, 0.0));
    let c = contributions(&[Some(Generative), Some(Generative), Some(Extractive), None]).unwrap();
    assert_eq!((c.generative, c.extractive, c.filtered), (0.5, 0.25, 0.25));
    assert!(contributions(&[]).is_err());
}

/// Windows enumerated directly from sentence boundaries, scored as exact
/// fractions and compared pairwise.
fn lexical_oracle(utterance: &str, paragraphs: &[ContextParagraph], window: usize, sw: &Stopwords) -> Option<String> {
    let content = |s: &str| -> Vec<String> { tokenize(s).into_iter().filter(|t| !sw.contains(t)).collect() };
    let q = content(utterance);
    let mut qcount: HashMap<String, usize> = HashMap::new();
    for t in &q {
        *qcount.entry(t.clone()).or_default() += 1;
    }
    // (num, den, rank, start, len, text)
    let mut all: Vec<(usize, usize, usize, usize, usize, String)> = Vec::new();
    for (rank, p) in paragraphs.iter().enumerate() {
        let s = sentence_spans(&p.text);
        for i in 0..s.len() {
            for j in i..s.len() {
                let text = &p.text[s[i].start..s[j].end];
                let words: usize = (i..=j).map(|k| word_count(&p.text[s[k].clone()])).sum();
                if j > i && words > window {
                    continue;
                }
                let w = content(text);
                let mut left = qcount.clone();
                let mut common = 0;
                for t in &w {
                    if let Some(c) = left.get_mut(t) {
                        if *c > 0 {
                            *c -= 1;
                            common += 1;
                        }
                    }
                }
                if common > 0 {
                    all.push((2 * common, w.len() + q.len(), rank, s[i].start, text.len(), text.to_string()));
                }
            }
        }
    }
    all.sort_by(|a, b| (b.0 * a.1).cmp(&(a.0 * b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)).then(a.4.cmp(&b.4)));
    all.into_iter().next().map(|x| x.5)
}

#[test]
fn lexical_reader_matches_brute_force_oracle() {
    let kb = fixtures::knowledge_base();
    let sw = Stopwords::bundled();
    let dataset = fixtures::eval_dataset();
    let mut questions: Vec<String> = dataset.retrieval.iter().map(|q| q.query.clone()).collect();
    questions.extend(dataset.reader.iter().map(|q| q.question.clone()));
    questions.extend(fixtures::grounding_cases().into_iter().map(|c| c.utterance));
    for q in &questions {
        let hits = kb.search(q, 3, groundqa::retrieval::SearchMode::Bm25).unwrap();
        let ctx: Vec<ContextParagraph> = hits
            .iter()
            .map(|h| ContextParagraph {
                paragraph_id: h.paragraph_id.clone(),
                text: kb.paragraph(&h.paragraph_id).unwrap().text.clone(),
            })
            .collect();
        for window in [8, 25, 60] {
            let got = lexical_extract_span(q, &ctx, window, &sw).unwrap();
            match lexical_oracle(q, &ctx, window, &sw) {
                Some(text) => {
                    assert_eq!(got.text, text, "{q} w={window}");
                    assert!(!got.low_confidence);
                }
                None => assert!(got.low_confidence, "{q}"),
            }
            let span = got.span.unwrap();
            let para = ctx.iter().find(|c| c.paragraph_id == span.paragraph_id).unwrap();
            let chars: String = para.text.chars().skip(span.char_start).take(span.char_end - span.char_start).collect();
            assert_eq!(chars, got.text);
        }
    }
}

#[test]
fn squad_round_trip_preserves_examples() {
    let paragraphs = fixtures::car_manual_paragraphs();
    let examples = fixtures::eval_dataset().reader;
    assert!(examples.iter().any(|e| e.answer_start == AnswerStart::Unanswerable));
    let text = export_squad(&examples, &paragraphs).unwrap();
    let back = import_squad(&text).unwrap();
    assert_eq!(back.examples, examples);
    assert_eq!(export_squad(&back.examples, &paragraphs).unwrap(), text);

    let broken = QaExample {
        answer_start: AnswerStart::Offset(0),
        answer_text: "not in the paragraph".into(),
        ..examples[0].clone()
    };
    assert!(export_squad(&[broken], &paragraphs).is_err());
}

const WORDS: [&str; 8] = ["the", "park", "assist", "seat", "door", "a", "lamp", "key"];

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..7).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn exact_match_implies_full_f1(a in phrase(), b in phrase()) {
        if exact_match(&a, &b) == 1.0 {
            prop_assert_eq!(token_f1(&a, &b), 1.0);
        }
        let f = token_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - token_f1(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn meteor_is_bounded_and_self_score_is_top(a in phrase(), b in phrase()) {
        let m = meteor(&a, &b);
        prop_assert!((0.0..=1.0).contains(&m));
        let n = tokenize(&a).len();
        if n > 0 {
            let own = meteor(&a, &a);
            prop_assert!((own - (1.0 - 0.5 / (n as f64).powi(3))).abs() < 1e-12);
            prop_assert!(m <= 1.0);
        }
    }

    #[test]
    fn mrr_shrinks_with_k_and_ignores_query_order(lists in prop::collection::vec(prop::collection::vec(0u8..6, 0..6), 1..6), g in 0u8..6, k in 1usize..6) {
        let ranked: Vec<Vec<String>> = lists.iter().map(|l| l.iter().map(|x| x.to_string()).collect()).collect();
        let golds = vec![gold(&g.to_string()); ranked.len()];
        let wide = mrr_at_k(&ranked, &golds, k + 1).unwrap().value;
        let narrow = mrr_at_k(&ranked, &golds, k).unwrap().value;
        prop_assert!(narrow <= wide + 1e-12);
        let mut rev = ranked.clone();
        rev.reverse();
        prop_assert!((mrr_at_k(&rev, &golds, k).unwrap().value - narrow).abs() < 1e-12);
    }
}
