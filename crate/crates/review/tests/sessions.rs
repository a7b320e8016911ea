use medens_core::corpus::{DialogueSnippet, Summary, Turn};
use medens_review::model::BucketFractions;
use medens_review::{
    build_snapshot, replay, EventPayload, GradeBucket, ModelOutputs, NextItem, Report, ReviewError, ReviewStore,
    SessionMode, Winner,
};

fn snippet(id: &str) -> DialogueSnippet {
    DialogueSnippet::new(
        id,
        vec![
            Turn::doctor(format!("Any fever ({id})?")).unwrap(),
            Turn::patient("No fever.").unwrap(),
        ],
    )
    .unwrap()
}

fn outputs(model: &str, ids: &[&str]) -> ModelOutputs {
    ModelOutputs {
        model: model.to_string(),
        records: ids
            .iter()
            .map(|id| (snippet(id), Summary::new(format!("No fever for {id}, variant {}.", model.len())).unwrap()))
            .collect(),
    }
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

fn two_models(n: usize) -> Vec<ModelOutputs> {
    let ids = ids(n);
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    vec![outputs("model-one", &refs), outputs("model-two", &refs)]
}

fn current(store: &ReviewStore, sid: &str) -> medens_review::ReviewItem {
    match store.next_item(sid).unwrap() {
        NextItem::Item(item) => item,
        NextItem::Done => panic!("session already done"),
    }
}

/// Arm of `item` that belongs to `model`, via the server-side snapshot.
fn arm_of(store: &ReviewStore, sid: &str, item_id: &str, model: &str) -> String {
    let snap = store.snapshot(sid).unwrap();
    let item = snap.items.iter().find(|i| i.item_id == item_id).unwrap();
    item.arms.iter().find(|a| a.model == model).unwrap().arm_id.clone()
}

#[test]
fn compare_session_shape() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path()).unwrap();
    let sid = store.create_session(SessionMode::Compare, &two_models(10), 7).unwrap();
    let snap = store.snapshot(&sid).unwrap();
    assert_eq!(snap.items.len(), 10);
    assert!(snap.items.iter().all(|i| i.arms.len() == 2));
    let item = current(&store, &sid);
    assert_eq!(item.position, 0);
    assert!(dir.path().join("sessions").join(format!("{sid}.session.json")).is_file());
}

#[test]
fn creation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path()).unwrap();
    let disjoint = vec![outputs("a", &["x", "y"]), outputs("b", &["p", "q"])];
    assert!(matches!(
        store.create_session(SessionMode::Compare, &disjoint, 1),
        Err(ReviewError::MismatchedIds { .. })
    ));
    assert!(matches!(
        store.create_session(SessionMode::Compare, &[outputs("a", &["x"])], 1),
        Err(ReviewError::TooFewModels { need: 2, have: 1, .. })
    ));
    assert!(store.create_session(SessionMode::Grade, &[outputs("a", &["x"])], 1).is_ok());
    assert!(matches!(store.next_item("nope"), Err(ReviewError::UnknownSession(_))));
    assert!(matches!(store.report("nope"), Err(ReviewError::UnknownSession(_))));
}

#[test]
fn same_seed_same_presentation() {
    let a = build_snapshot("s", SessionMode::Compare, &two_models(20), 5, "t").unwrap();
    let b = build_snapshot("s", SessionMode::Compare, &two_models(20), 5, "t").unwrap();
    assert_eq!(a, b);
    let c = build_snapshot("s", SessionMode::Compare, &two_models(20), 6, "t").unwrap();
    assert_ne!(a.items, c.items);
}

#[test]
fn arm_ids_do_not_reveal_models() {
    let snap = build_snapshot("s", SessionMode::Compare, &two_models(30), 5, "t").unwrap();
    for i in 0..snap.items.len() {
        let json = serde_json::to_string(&snap.blinded(i).unwrap()).unwrap();
        assert!(!json.contains("model-one") && !json.contains("model-two"), "{json}");
        for arm in &snap.items[i].arms {
            assert!(!arm.arm_id.contains("model"));
        }
    }
}

#[test]
fn grade_flow_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path()).unwrap();
    let ids = ["s0", "s1", "s2", "s3"];
    let sid = store.create_session(SessionMode::Grade, &[outputs("m", &ids)], 3).unwrap();

    assert_eq!(
        store.report(&sid).unwrap(),
        Report::Grade {
            per_model: [("m".to_string(), BucketFractions::default())].into(),
            graded_items: [("m".to_string(), 0)].into(),
        }
    );

    let buckets = [GradeBucket::All, GradeBucket::All, GradeBucket::Most, GradeBucket::None];
    for (i, bucket) in buckets.into_iter().enumerate() {
        let item = current(&store, &sid);
        assert_eq!(item.position, i);
        let choice = EventPayload::Choice { winner: Winner::AllGood };
        assert!(matches!(
            store.submit(&sid, &item.item_id, choice),
            Err(ReviewError::WrongMode(SessionMode::Grade))
        ));
        let bad_arm = EventPayload::Grade {
            arm_id: "a-missing".into(),
            bucket,
        };
        assert!(matches!(store.submit(&sid, &item.item_id, bad_arm), Err(ReviewError::UnknownArm(_))));
        let arm = item.arms[0].arm_id.clone();
        let ack = store.submit(&sid, &item.item_id, EventPayload::Grade { arm_id: arm, bucket }).unwrap();
        assert_eq!(ack.cursor, i + 1);
    }
    assert_eq!(store.next_item(&sid).unwrap(), NextItem::Done);

    match store.report(&sid).unwrap() {
        Report::Grade { per_model, graded_items } => {
            let f = per_model["m"];
            assert_eq!((f.all, f.most, f.some, f.none), (0.5, 0.25, 0.0, 0.25));
            assert_eq!(graded_items["m"], 4);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn stale_items_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path()).unwrap();
    let sid = store.create_session(SessionMode::Compare, &two_models(2), 3).unwrap();
    let first = current(&store, &sid);
    store
        .submit(&sid, &first.item_id, EventPayload::Choice { winner: Winner::NoneGood })
        .unwrap();
    assert!(matches!(
        store.submit(&sid, &first.item_id, EventPayload::Choice { winner: Winner::NoneGood }),
        Err(ReviewError::StaleItem { .. })
    ));
    let second = current(&store, &sid);
    store
        .submit(&sid, &second.item_id, EventPayload::Choice { winner: Winner::AllGood })
        .unwrap();
    assert!(matches!(
        store.submit(&sid, &second.item_id, EventPayload::Choice { winner: Winner::AllGood }),
        Err(ReviewError::StaleItem { .. })
    ));
}

#[test]
fn grading_advances_after_every_arm() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path()).unwrap();
    let sid = store.create_session(SessionMode::Grade, &two_models(2), 3).unwrap();
    let item = current(&store, &sid);
    let grade = |arm: &str| EventPayload::Grade {
        arm_id: arm.to_string(),
        bucket: GradeBucket::Some,
    };
    assert_eq!(store.submit(&sid, &item.item_id, grade(&item.arms[0].arm_id)).unwrap().cursor, 0);
    assert_eq!(store.submit(&sid, &item.item_id, grade(&item.arms[1].arm_id)).unwrap().cursor, 1);
}

#[test]
fn compare_tally_credits_all_good_to_everyone() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path()).unwrap();
    let sid = store.create_session(SessionMode::Compare, &two_models(3), 11).unwrap();
    for pick in ["model-one", "model-two", ""] {
        let item = current(&store, &sid);
        let winner = if pick.is_empty() {
            Winner::AllGood
        } else {
            Winner::Arm {
                arm_id: arm_of(&store, &sid, &item.item_id, pick),
            }
        };
        store.submit(&sid, &item.item_id, EventPayload::Choice { winner }).unwrap();
    }
    match store.report(&sid).unwrap() {
        Report::Compare {
            best,
            all_good,
            none_good,
            choices,
        } => {
            assert_eq!(best["model-one"], 2);
            assert_eq!(best["model-two"], 2);
            assert_eq!((all_good, none_good, choices), (1, 0, 3));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn edits_become_human_examples() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path()).unwrap();
    let sid = store.create_session(SessionMode::Compare, &two_models(2), 3).unwrap();
    let item = current(&store, &sid);
    let edit = |text: &str| EventPayload::Edit {
        arm_id: item.arms[1].arm_id.clone(),
        edited_text: text.to_string(),
    };
    store.submit(&sid, &item.item_id, edit("Denies fever.")).unwrap();
    assert!(matches!(store.submit(&sid, &item.item_id, edit("  ")), Err(ReviewError::InvalidEdit(_))));
    assert!(matches!(
        store.submit(&sid, &item.item_id, edit("x [STOP] y")),
        Err(ReviewError::InvalidEdit(_))
    ));
    // Edits do not advance the cursor.
    assert_eq!(current(&store, &sid).item_id, item.item_id);

    let fb = medens_core::corpus::read_dataset(&store.feedback_path()).unwrap();
    assert_eq!(fb.len(), 1);
    let e = &fb.examples[0];
    assert_eq!(e.summary.as_str(), "Denies fever.");
    assert!(e.provenance.is_human());
    assert_eq!(e.snippet.turns(), snippet("s0").turns());
}

#[test]
fn log_replay_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let (sid, report, cursor) = {
        let store = ReviewStore::open(dir.path()).unwrap();
        let sid = store.create_session(SessionMode::Compare, &two_models(5), 9).unwrap();
        for w in [Winner::AllGood, Winner::NoneGood] {
            let item = current(&store, &sid);
            store.submit(&sid, &item.item_id, EventPayload::Choice { winner: w }).unwrap();
        }
        let item = current(&store, &sid);
        let arm = arm_of(&store, &sid, &item.item_id, "model-two");
        store
            .submit(&sid, &item.item_id, EventPayload::Choice { winner: Winner::Arm { arm_id: arm } })
            .unwrap();
        (sid.clone(), store.report(&sid).unwrap(), current(&store, &sid).position)
    };
    let reopened = ReviewStore::open(dir.path()).unwrap();
    assert_eq!(reopened.report(&sid).unwrap(), report);
    assert_eq!(current(&reopened, &sid).position, cursor);

    let log = medens_review::store::read_events(&reopened.events_path(&sid)).unwrap();
    assert_eq!(log.len(), 3);
    let snap = reopened.snapshot(&sid).unwrap();
    assert_eq!(medens_review::model::report(&snap, &log), report);
    assert_eq!(replay(&snap, &log).cursor, 3);
}

#[test]
fn presentation_order_is_uniform() {
    // Position of the first model among three arms, over many items and
    // seeds; chi-square with 2 degrees of freedom.
    let ids = ids(300);
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let outs = vec![outputs("m0", &refs), outputs("m1", &refs), outputs("m2", &refs)];
    let mut counts = [0usize; 3];
    for seed in 0..10 {
        let snap = build_snapshot("s", SessionMode::Compare, &outs, seed, "t").unwrap();
        for item in &snap.items {
            counts[item.arms.iter().position(|a| a.model == "m0").unwrap()] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    let expected = n as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 13.82 is the 0.999 quantile for 2 degrees of freedom.
    assert!(chi2 < 13.82, "counts {counts:?}, chi2 {chi2}");
}
