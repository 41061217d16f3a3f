mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{class_name, degraded_topics, expected_class, random_manifest, slot_topics, ManifestOptions};
use fabricmigrate_core::manifest::{
    assign_topic_addresses, check_migration, compile_plan, parse_manifest, render_plan, Manifest, MigrationError,
    SemanticsClass, TopicMechanism,
};
use fabricmigrate_core::model::{slot_layout, validate_graph, CpuId, Target};
use fabricmigrate_core::scenario::{fig2_manifest, fig3_manifest, FIG2_MANIFEST, FIG3_MANIFEST};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn seeded(seed: u64, opts: &ManifestOptions) -> Manifest {
    let text = random_manifest(&mut ChaCha8Rng::seed_from_u64(seed), opts);
    parse_manifest(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

#[test]
fn bundled_deployments_parse() {
    for m in [fig2_manifest(), fig3_manifest()] {
        assert_eq!(m.components.len(), 7);
        assert_eq!(m.fabric.n_fpgas * m.fabric.cpus_per_fpga, 2);
    }
    let cpus: BTreeSet<CpuId> = fig3_manifest()
        .placements
        .iter()
        .filter_map(|p| match p.target {
            Target::Softcore(c) => Some(c),
            _ => None,
        })
        .collect();
    assert_eq!(cpus, BTreeSet::from([CpuId::new(0, 0), CpuId::new(0, 1)]));
}

#[test]
fn before_migration_commands_cross_the_link() {
    let plan = compile_plan(&fig2_manifest()).unwrap();
    for topic in ["balance_cmd", "imu_raw"] {
        let route = plan.routing.topic(topic).unwrap();
        assert!(
            route.edges.iter().all(|e| matches!(e.mechanism, TopicMechanism::LinkBridge { .. })),
            "{topic}: {route:?}"
        );
    }
}

#[test]
fn after_migration_schedules() {
    let plan = compile_plan(&fig3_manifest()).unwrap();
    let cpu0 = plan.schedule(CpuId::new(0, 0)).unwrap();
    assert!(cpu0.tasks.iter().any(|t| t.component == "maintain_position"));
    assert!(plan.schedules.iter().flat_map(|s| &s.tasks).all(|t| t.component != "filter"));
    assert!(matches!(plan.routing.placements["filter"], Target::Gateware(_)));
}

#[test]
fn plan_text_is_stable() {
    for text in [FIG2_MANIFEST, FIG3_MANIFEST] {
        let a = render_plan(&compile_plan(&parse_manifest(text).unwrap()).unwrap());
        let b = render_plan(&compile_plan(&parse_manifest(text).unwrap()).unwrap());
        assert_eq!(a, b);
    }
}

#[test]
fn migration_flags_every_degraded_pair() {
    let before = fig2_manifest();
    let after = fig3_manifest();
    let pb = compile_plan(&before).unwrap();
    let pa = compile_plan(&after).unwrap();
    let report = check_migration(&pb, &pa).unwrap();
    assert!(report.topology_equal);
    assert!(report.equivalent());

    let expected = degraded_topics(&before, &after);
    assert_eq!(
        expected,
        BTreeSet::from(["balance_cmd", "imu_filtered", "imu_raw", "odometry"].map(String::from))
    );
    let flagged: BTreeSet<String> = report
        .warnings()
        .map(|d| match &d.subject {
            Some(fabricmigrate_core::model::Subject::Topic(t)) => t.clone(),
            other => panic!("unexpected subject {other:?}"),
        })
        .collect();
    assert_eq!(flagged, expected);
    let changes: BTreeMap<&str, _> = report.topics.iter().map(|c| (c.topic.as_str(), (c.before, c.after))).collect();
    assert_eq!(
        changes["balance_cmd"],
        (Some(SemanticsClass::Queue), Some(SemanticsClass::LastValue))
    );
}

#[test]
fn identical_plans_are_equivalent_without_warnings() {
    let p = compile_plan(&fig3_manifest()).unwrap();
    let report = check_migration(&p, &p).unwrap();
    assert!(report.equivalent());
    assert_eq!(report.warnings().count(), 0);
}

fn without_component(mut m: Manifest, name: &str) -> Manifest {
    m.components.retain(|c| c.name != name);
    m.placements.retain(|p| p.component != name);
    m
}

#[test]
fn removed_component_is_a_topology_mismatch() {
    let before = compile_plan(&fig2_manifest()).unwrap();
    for c in fig3_manifest().components.iter().map(|c| c.name.clone()) {
        let Ok(after) = compile_plan(&without_component(fig3_manifest(), &c)) else {
            continue;
        };
        match check_migration(&before, &after) {
            Err(MigrationError::TopologyMismatch { only_before, .. }) => assert_eq!(only_before, vec![c]),
            other => panic!("removing {c}: {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn memory_map_is_packed_and_in_bounds(seed in any::<u64>()) {
        let opts = ManifestOptions { shm_words: 4..=48, ..ManifestOptions::default() };
        let m = seeded(seed, &opts);
        let wanted = slot_topics(&m);
        let size = |t: &str| slot_layout(t, &m.topic(t).unwrap().ty).size_words as u32;
        match assign_topic_addresses(&m) {
            Ok(map) => {
                prop_assert_eq!(map.capacity, m.fabric.shm_words_total);
                prop_assert_eq!(map.entries.keys().cloned().collect::<BTreeSet<_>>(), wanted);
                let mut next = 0;
                // BTreeMap order is lexicographic.
                for (t, e) in &map.entries {
                    prop_assert_eq!(e.base, next, "{} not packed", t);
                    prop_assert_eq!(e.size_words, size(t));
                    next += e.size_words;
                }
                prop_assert!(next <= map.capacity);
                let mut words = BTreeSet::new();
                for e in map.entries.values() {
                    for w in e.base..e.base + e.size_words {
                        prop_assert!(words.insert(w), "word {} used twice", w);
                    }
                }
            }
            Err(e) => {
                let mut used = 0;
                let mut first_overflow = None;
                for t in &wanted {
                    if used + size(t) > m.fabric.shm_words_total {
                        first_overflow = Some(t.clone());
                        break;
                    }
                    used += size(t);
                }
                prop_assert_eq!(Some(e.topic), first_overflow);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn plans_are_deterministic_and_routing_total(seed in any::<u64>()) {
        let text = random_manifest(&mut ChaCha8Rng::seed_from_u64(seed), &ManifestOptions::default());
        let m = parse_manifest(&text).unwrap();
        let (Ok(a), Ok(b)) = (compile_plan(&m), compile_plan(&parse_manifest(&text).unwrap())) else {
            return Ok(());
        };
        prop_assert_eq!(render_plan(&a), render_plan(&b));

        for t in &m.topics {
            let route = a.routing.topic(&t.name).unwrap();
            let mut expected = BTreeMap::new();
            for p in m.components.iter().filter(|c| c.publishes.contains(&t.name)) {
                for s in m.components.iter().filter(|c| c.subscribes.contains(&t.name)) {
                    expected.insert((p.name.clone(), s.name.clone()), expected_class(&m, &p.name, &s.name));
                }
            }
            let mut got = BTreeMap::new();
            for e in &route.edges {
                let prev = got.insert((e.publisher.clone(), e.subscriber.clone()), class_name(&e.mechanism));
                prop_assert!(prev.is_none(), "pair routed twice in {}", t.name);
            }
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn graph_diagnostics_ignore_declaration_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = seeded(seed, &ManifestOptions::default());
        let reference = validate_graph(&m.components, &m.topics, &m.services);
        let mut comps = m.components.clone();
        let mut topics = m.topics.clone();
        comps.shuffle(&mut rng);
        topics.shuffle(&mut rng);
        prop_assert_eq!(validate_graph(&comps, &topics, &m.services), reference);
    }

    #[test]
    fn replacement_keeps_topology(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A);
        let before = seeded(seed, &ManifestOptions::default());
        let mut after = before.clone();
        let names: Vec<String> = after.components.iter().map(|c| c.name.clone()).collect();
        for n in &names {
            let t = if rand::Rng::random_bool(&mut rng, 0.5) {
                Target::Host
            } else {
                Target::Softcore(CpuId::new(0, 0))
            };
            after = after.with_placement(n, t);
        }
        let (Ok(pb), Ok(pa)) = (compile_plan(&before), compile_plan(&after)) else {
            return Ok(());
        };
        let report = check_migration(&pb, &pa).unwrap();
        prop_assert!(report.topology_equal);
        let degraded_set = degraded_topics(&before, &after);
        for c in &report.topics {
            let degraded = degraded_set.contains(&c.topic);
            let warned = report
                .warnings()
                .any(|d| d.subject == Some(fabricmigrate_core::model::Subject::Topic(c.topic.clone())));
            prop_assert_eq!(warned, degraded, "topic {}", c.topic);
        }
    }
}
