use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privdeps::dependency::{all_edges, build_all_graphs, facilitated_private_facts, total_edges};
use privdeps::disclosure::{disclosure_round, score_m1, score_m2, DisclosureProtocol, DisclosureSet, Strategy as Ranking};
use privdeps::extension::{extend_public_plan, makespan, public_skeleton, Extension};
use privdeps::harness::{generate_micro_instance, nested_disclosures, MicroParams};
use privdeps::io::{parse_problem, serialize_problem};
use privdeps::mafs::{run_mafs, MafsConfig};
use privdeps::model::{apply, classify_actions, local_view, validate_plan, FactId, MAProblem, Owner};
use privdeps::projection::build_projection;
use privdeps::search::{bfs_oracle, gbfs, SearchBudget};

fn params() -> impl Strategy<Value = MicroParams> {
    (1usize..=3, 0usize..=4, 1usize..=4, 1usize..=6).prop_map(|(agents, private_facts, public_facts, actions)| {
        MicroParams {
            agents,
            private_facts,
            public_facts,
            actions,
        }
    })
}

fn instance() -> impl Strategy<Value = MAProblem> {
    (any::<u64>(), params()).prop_map(|(seed, p)| generate_micro_instance(seed, p))
}

fn subset_by_mask(facts: &[FactId], mask: u32) -> BTreeSet<FactId> {
    facts
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, f)| *f)
        .collect()
}

fn mafs_config() -> MafsConfig {
    MafsConfig {
        budget: SearchBudget::new(500_000, 30_000),
        seed: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn facilitation_is_a_closure(p in instance(), a in 0usize..3, m1 in any::<u32>(), m2 in any::<u32>()) {
        let agent = privdeps::model::AgentId(a % p.num_agents());
        let view = local_view(&p, agent).unwrap();
        let private: Vec<FactId> = p.private_facts_of(agent).collect();
        let small = subset_by_mask(&private, m1 & m2);
        let large = subset_by_mask(&private, m1);
        let closed_small = facilitated_private_facts(&view, &small);
        let closed_large = facilitated_private_facts(&view, &large);
        prop_assert!(small.is_subset(&closed_small));
        prop_assert!(closed_small.is_subset(&closed_large));
        prop_assert_eq!(facilitated_private_facts(&view, &closed_large), closed_large.clone());
        prop_assert!(closed_large.iter().all(|f| p.owner(*f) == Owner::PrivateTo(agent)));
    }

    #[test]
    fn classification_is_idempotent(p in instance()) {
        prop_assert_eq!(classify_actions(p.clone()).unwrap(), p);
    }

    #[test]
    fn documents_round_trip(p in instance()) {
        let text = serialize_problem(&p);
        let back = parse_problem(&text).unwrap();
        prop_assert_eq!(serialize_problem(&back), text);
        prop_assert_eq!(back, p);
    }

    #[test]
    fn apply_matches_strips_semantics(p in instance(), mask in any::<u64>(), which in any::<usize>()) {
        let state = privdeps::model::State::from_indices(
            p.facts.len(),
            (0..p.facts.len()).filter(|i| mask & (1 << i) != 0),
        );
        let action = &p.actions[which % p.actions.len()];
        match apply(&p, &state, action) {
            Ok(next) => {
                prop_assert!(action.pre.iter().all(|f| state.holds(*f)));
                for f in &p.facts {
                    let expected = action.add.contains(&f.id)
                        || (state.holds(f.id) && !action.del.contains(&f.id));
                    prop_assert_eq!(next.holds(f.id), expected);
                }
            }
            Err(_) => prop_assert!(action.pre.iter().any(|f| !state.holds(*f))),
        }
    }

    #[test]
    fn local_views_hide_foreign_private_facts(p in instance()) {
        for agent in p.agent_ids() {
            let view = local_view(&p, agent).unwrap();
            let visible = |f: &FactId| p.owner(*f) == Owner::Public || p.owner(*f) == Owner::PrivateTo(agent);
            prop_assert!(view.facts.iter().all(visible));
            for a in &view.foreign_actions {
                prop_assert!(a.agent != agent);
                prop_assert!(a.pre.iter().chain(&a.add).chain(&a.del).all(|f| p.is_public_fact(*f)));
            }
            prop_assert!(view.own_actions.iter().all(|a| a.agent == agent));
        }
    }

    #[test]
    fn m1_and_m2_scores_never_rise(p in instance(), seed in any::<u64>()) {
        let graphs = build_all_graphs(&p);
        let sets = nested_disclosures(&graphs, 4, seed);
        for g in &graphs {
            for pair in sets.windows(2) {
                for score in [score_m1, score_m2] {
                    let before = score(g, &pair[0]);
                    let after = score(g, &pair[1]);
                    for (edge, s) in &after {
                        prop_assert!(!pair[1].contains(*edge));
                        prop_assert!(s <= &before[edge]);
                    }
                }
            }
        }
    }

    #[test]
    fn incremental_protocol_matches_replay(p in instance(), which in 0usize..4) {
        let strategy = [Ranking::M1, Ranking::M2, Ranking::M3, Ranking::M4][which];
        let graphs = build_all_graphs(&p);
        let mut protocol = DisclosureProtocol::new(&graphs, strategy);
        let mut replayed = DisclosureSet::new();
        let mut rng_a = ChaCha8Rng::seed_from_u64(1);
        let mut rng_b = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..=total_edges(&graphs) {
            protocol.round(&mut rng_a);
            replayed = disclosure_round(&graphs, &replayed, strategy, &mut rng_b);
            prop_assert_eq!(protocol.disclosed(), &replayed);
        }
        prop_assert!(protocol.is_exhausted());
    }

    #[test]
    fn makespan_never_exceeds_length(p in instance()) {
        let graphs = build_all_graphs(&p);
        let all = DisclosureSet::from_edges(all_edges(&graphs));
        if let Ok(plan) = run_mafs(&p, &graphs, &all, mafs_config()).result {
            let m = makespan(&p, &plan).unwrap() as usize;
            prop_assert!(m <= plan.len());
            prop_assert_eq!(m == 0, plan.is_empty());
        }
    }

    #[test]
    fn extensions_validate_and_keep_the_skeleton(p in instance()) {
        let graphs = build_all_graphs(&p);
        let all = DisclosureSet::from_edges(all_edges(&graphs));
        let projection = build_projection(&p, &graphs, &all);
        if let Ok(plan) = gbfs(&projection.task, SearchBudget::default()).result {
            let public = projection.public_plan(&plan);
            if let Extension::Complete(joint) = extend_public_plan(&p, &public, SearchBudget::default()).unwrap() {
                prop_assert!(validate_plan(&p, &joint).is_valid());
                prop_assert_eq!(public_skeleton(&p, &joint), public);
            }
        }
    }

    #[test]
    fn gbfs_solves_exactly_the_solvable_projections(p in instance(), seed in any::<u64>()) {
        let graphs = build_all_graphs(&p);
        for d in nested_disclosures(&graphs, 3, seed) {
            let task = build_projection(&p, &graphs, &d).task;
            let oracle = bfs_oracle(&task, 0, 1 << 16).unwrap();
            let found = gbfs(&task, SearchBudget::default()).result;
            prop_assert_eq!(found.is_ok(), oracle.opt.is_some());
            if let Ok(plan) = found {
                prop_assert!(task.is_plan(&plan));
                prop_assert!(task.plan_cost(&plan) >= oracle.opt.unwrap());
            }
        }
    }
}
