use proptest::prelude::*;

use super::*;

fn dlg(id: &str, turns: &[(Speaker, &str)]) -> RawDialogue {
    RawDialogue {
        id: id.into(),
        turns: turns
            .iter()
            .map(|(s, t)| RawTurn {
                speaker: *s,
                text: t.to_string(),
            })
            .collect(),
        listing_price: None,
        dataset_final_price: None,
    }
}

fn n_turns(id: &str, n: usize) -> RawDialogue {
    let turns: Vec<(Speaker, String)> = (0..n)
        .map(|i| (if i % 2 == 0 { Speaker::Seeker } else { Speaker::Supporter }, format!("turn {i}")))
        .collect();
    let refs: Vec<(Speaker, &str)> = turns.iter().map(|(s, t)| (*s, t.as_str())).collect();
    dlg(id, &refs)
}

#[test]
fn load_examples() {
    assert!(parse_dialogues("").unwrap().is_empty());
    let three = r#"{"id":"a","turns":[{"speaker":"A","text":"hi"}]}
{"id":"b","turns":[{"speaker":"seller","text":"$5"}],"listing_price":5}
{"id":"c","turns":[{"speaker":"buyer","text":"ok"}]}"#;
    assert_eq!(parse_dialogues(three).unwrap().len(), 3);
    let bad = "{\"id\":\"a\",\"turns\":[{\"speaker\":\"A\",\"text\":\"hi\"}]}\n{\"id\":\"b\"}";
    assert!(matches!(parse_dialogues(bad), Err(Error::Record { line: 2, .. })));
    let dup = "{\"id\":\"a\",\"turns\":[{\"speaker\":\"A\",\"text\":\"x\"}]}\n{\"id\":\"a\",\"turns\":[{\"speaker\":\"B\",\"text\":\"y\"}]}";
    assert!(matches!(parse_dialogues(dup), Err(Error::DuplicateId(_))));
    assert!(parse_dialogues("{\"id\":\"a\",\"turns\":[{\"speaker\":\"Z\",\"text\":\"x\"}]}").is_err());
    assert!(parse_dialogues("{\"id\":\"a\",\"turns\":[]}").is_err());
}

#[test]
fn support_turn_floor() {
    assert!(filter_support(&[n_turns("a", 5)]).is_empty());
    assert_eq!(filter_support(&[n_turns("a", 6)]).len(), 1);
    assert!(filter_support(&[]).is_empty());
}

#[test]
fn concession_prefix() {
    use Speaker::*;
    let d = dlg(
        "n",
        &[
            (Seller, "It's $100."),
            (Buyer, "Too much, $60?"),
            (Seller, "I can do $90."),
            (Buyer, "How about 75?"),
            (Seller, "80 and done."),
            (Buyer, "ok"),
        ],
    );
    let f = filter_negotiation(&[d]);
    assert_eq!(f.eligible.len(), 1);
    assert_eq!((f.eligible[0].concession_turn, f.eligible[0].prefix_len), (2, 4));

    let flat = dlg(
        "f",
        &[(Seller, "$100"), (Buyer, "$50"), (Seller, "still $100"), (Buyer, "$60"), (Seller, "$110 now")],
    );
    assert_eq!(filter_negotiation(&[flat]).excluded, vec![("f".to_string(), Exclusion::NoConcession)]);

    let short = dlg("s", &[(Seller, "$100"), (Buyer, "$50"), (Seller, "$90"), (Buyer, "$60")]);
    assert_eq!(filter_negotiation(&[short]).excluded[0].1, Exclusion::TooFewTurns);

    let words = dlg("w", &[(Seller, "hi"), (Buyer, "hello"), (Seller, "nice"), (Buyer, "yes"), (Seller, "bye")]);
    assert_eq!(filter_negotiation(&[words]).excluded[0].1, Exclusion::NoParsablePrices);

    let late = dlg("l", &[(Seller, "$100"), (Buyer, "hm"), (Buyer, "hm"), (Seller, "$90"), (Buyer, "ok")]);
    assert_eq!(filter_negotiation(&[late]).excluded[0].1, Exclusion::NoBuyerContinuation);
}

#[test]
fn tail_examples() {
    let xs: Vec<u32> = (0..10).collect();
    assert_eq!(tail_fraction(&xs, 1.0).unwrap(), xs);
    assert_eq!(tail_fraction(&xs, 0.1).unwrap(), vec![9]);
    assert_eq!(tail_fraction(&xs, 0.15).unwrap(), vec![8, 9]);
    assert!(tail_fraction(&xs, 0.0).is_err());
    assert!(tail_fraction(&xs, 1.5).is_err());
}

#[test]
fn empty_fixture_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.jsonl");
    std::fs::write(&p, "").unwrap();
    assert!(load_diagnostic_suite(&p).is_err());
    assert!(load_contrastive_sets(&p, None).is_err());
}

fn arb_dialogue() -> impl Strategy<Value = RawDialogue> {
    let turn = (any::<bool>(), prop::option::of(1u32..200)).prop_map(|(seller, price)| RawTurn {
        speaker: if seller { Speaker::Seller } else { Speaker::Buyer },
        text: price.map_or("no number".to_string(), |p| format!("how about ${p}")),
    });
    (prop::collection::vec(turn, 1..9), any::<u16>()).prop_map(|(turns, id)| RawDialogue {
        id: format!("d{id}"),
        turns,
        listing_price: None,
        dataset_final_price: None,
    })
}

proptest! {
    #[test]
    fn filters_are_idempotent(ds in prop::collection::vec(arb_dialogue(), 0..12)) {
        let s = filter_support(&ds);
        prop_assert_eq!(filter_support(&s), s.clone());
        let once: Vec<RawDialogue> = filter_negotiation(&ds).eligible.into_iter().map(|e| e.dialogue).collect();
        let twice: Vec<RawDialogue> = filter_negotiation(&once).eligible.into_iter().map(|e| e.dialogue).collect();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn prefix_is_strict_and_ends_with_buyer(d in arb_dialogue()) {
        if let Ok((_, len)) = negotiation_eligibility(&d) {
            prop_assert!(len < d.turns.len());
            prop_assert_eq!(d.turns[len - 1].speaker.role(), Role::Target);
        }
    }
}

#[test]
fn training_chunks_start_at_partner_turns() {
    use crate::model::tokenizer::{BOS, EOS};
    let d = dlg("t", &[(Speaker::Seeker, "aa"), (Speaker::Supporter, "bb"), (Speaker::Seeker, "cc"), (Speaker::Supporter, "dd")]);
    let seqs = training_sequences(&[d.clone()], 1000);
    assert_eq!(seqs.len(), 2);
    assert_eq!(seqs[0], crate::dialogue::format_dialogue(&d.history()));
    assert!(seqs.iter().all(|s| s[0] == BOS && *s.last().unwrap() == EOS));
    let short = training_sequences(&[d], 16);
    assert!(short.iter().all(|s| s.len() <= 16));
    assert_eq!(short.len(), 2);
}
