use hybridlearn_core::datagen::gen_thermostat;
use hybridlearn_core::dtw::SimIndex;
use hybridlearn_core::jumps::update_confidence;
use hybridlearn_core::synthesis::select_candidate;
use hybridlearn_core::{
    finalize, Channel, ChannelSchema, CostModel, HybridAutomaton, LearnerConfig, ModelStore, Neighborhood,
    TransitionRecord,
};
use proptest::prelude::*;

fn thermostat_config() -> LearnerConfig {
    LearnerConfig {
        cost: CostModel::Linear,
        ..LearnerConfig::default()
    }
}

#[test]
fn every_segment_is_attached_once() {
    let traces = gen_thermostat(6, 3);
    let mut store = ModelStore::new(thermostat_config()).unwrap();
    for t in &traces {
        let rep = store.learn_trace(t).unwrap();
        assert_eq!(rep.assignments.len(), rep.change_points.len() + 1);
        assert!(rep.assignments.iter().all(|&s| s < store.states.len()));
    }
    let initial: usize = store
        .transitions
        .iter()
        .filter(|t| t.source.is_none())
        .map(|t| t.support)
        .sum();
    assert_eq!(initial, traces.len());
    assert_eq!(store.traces_processed, traces.len());
    for tr in &store.transitions {
        assert!(tr.confidence.iter().all(|c| *c > 0.0 && *c <= 1.0));
        assert!(tr.neighborhoods.len() <= store.config.max_segments);
    }
    for st in &store.states {
        assert!(st.segments.len() <= store.config.max_segments);
        assert_eq!(st.dwell.len(), st.visits);
    }
}

#[test]
fn resuming_from_serialized_store_matches_one_session() {
    let traces = gen_thermostat(5, 11);
    let mut once = ModelStore::new(thermostat_config()).unwrap();
    for t in &traces {
        once.learn_trace(t).unwrap();
    }
    let mut text = serde_json::to_string(&ModelStore::new(thermostat_config()).unwrap()).unwrap();
    for t in &traces {
        let mut store: ModelStore = serde_json::from_str(&text).unwrap();
        store.learn_trace(t).unwrap();
        text = serde_json::to_string(&store).unwrap();
    }
    assert_eq!(text, serde_json::to_string(&once).unwrap());
}

#[test]
fn model_json_is_a_byte_fixpoint() {
    let traces = gen_thermostat(4, 2);
    let mut store = ModelStore::new(thermostat_config()).unwrap();
    for t in &traces {
        store.learn_trace(t).unwrap();
    }
    let (mut model, _) = finalize(&store).unwrap();
    model.learner = Some(store);
    let first = model.to_json().unwrap();
    let again = HybridAutomaton::from_json(&first).unwrap().to_json().unwrap();
    assert_eq!(first, again);
}

#[test]
fn schema_change_is_rejected() {
    let traces = gen_thermostat(1, 0);
    let mut store = ModelStore::new(thermostat_config()).unwrap();
    store.learn_trace(&traces[0]).unwrap();
    let mut other = traces[0].clone();
    other.schema.channels[0].name = "z".into();
    assert!(store.learn_trace(&other).is_err());
}

#[test]
fn candidate_needs_both_lower_distance_and_higher_diagonality() {
    let sim = |distance, diagonality| SimIndex { distance, diagonality };
    let picked = select_candidate([(0, sim(0.05, 0.7)), (1, sim(0.2, 0.95))]).unwrap();
    assert_eq!(picked.0, 0);
    let picked = select_candidate([(0, sim(0.3, 0.5)), (1, sim(0.1, 0.9))]).unwrap();
    assert_eq!(picked.0, 1);
    assert!(select_candidate(std::iter::empty()).is_none());
}

fn window() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..2.0, 5)
}

proptest! {
    #[test]
    fn confidences_stay_in_unit_interval(
        windows in prop::collection::vec((window(), window(), window()), 1..12),
        beta in 0.1f64..50.0,
    ) {
        let schema = ChannelSchema::new(
            "t",
            false,
            vec![Channel::input("a"), Channel::input("b"), Channel::output("y")],
        ).unwrap();
        let mut tr = TransitionRecord {
            source: Some(0),
            target: 1,
            neighborhoods: Vec::new(),
            confidence: vec![1.0; 2],
            distance_sum: vec![0.0; 2],
            updates: 0,
            support: 0,
        };
        for (k, (a, b, y)) in windows.into_iter().enumerate() {
            let nb = Neighborhood { cp: 10 * k + 2, half_width: 2, times: (0..5).map(|i| i as f64).collect(), channels: vec![a, b, y] };
            update_confidence(&mut tr, nb, beta, &schema, 0.0, 1.0).unwrap();
            for c in &tr.confidence {
                prop_assert!(*c > 0.0 && *c <= 1.0);
            }
        }
        if tr.neighborhoods.len() == 1 {
            prop_assert_eq!(&tr.confidence, &vec![1.0; 2]);
        }
    }

    #[test]
    fn identical_neighborhoods_keep_full_confidence(w in window(), repeats in 2usize..6) {
        let schema = ChannelSchema::new("t", false, vec![Channel::input("a"), Channel::output("y")]).unwrap();
        let mut tr = TransitionRecord {
            source: None,
            target: 0,
            neighborhoods: Vec::new(),
            confidence: vec![1.0],
            distance_sum: vec![0.0],
            updates: 0,
            support: 0,
        };
        for _ in 0..repeats {
            let nb = Neighborhood { cp: 2, half_width: 2, times: (0..5).map(|i| i as f64).collect(), channels: vec![w.clone(), w.clone()] };
            update_confidence(&mut tr, nb, 5.0, &schema, 0.0, 1.0).unwrap();
        }
        prop_assert_eq!(tr.confidence[0], 1.0);
    }
}
