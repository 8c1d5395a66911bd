//! The disclose-then-solve experiment loop, hindsight values, and random
//! micro instances for property tests.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dependency::{build_all_graphs, all_edges, total_edges, DependencyGraph, EdgeId, Producer};
use crate::disclosure::{DisclosureProtocol, DisclosureSet, Strategy};
use crate::extension::{extend_public_plan, makespan, Extension};
use crate::io::{ExperimentRecord, Solver};
use crate::mafs::{run_mafs, MafsConfig, MessageLog};
use crate::model::{Action, ActionId, AgentId, Fact, FactId, JointPlan, MAProblem, Owner, Visibility};
use crate::projection::{build_projection, ProjectedFact};
use crate::search::{gbfs, SearchBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentConfig {
    /// Last round to run; round 0 has nothing disclosed.
    pub max_rounds: usize,
    /// Flat budget for every solver call.
    pub budget: SearchBudget,
    pub seed: u64,
    /// Record real wall-clock times; off by default so output is reproducible.
    pub measure_time: bool,
    pub hindsight: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            max_rounds: 100,
            budget: SearchBudget::default(),
            seed: 0,
            measure_time: false,
            hindsight: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOutcome {
    pub plan: Option<JointPlan>,
    /// Public plan found on the projection, extended or not.
    pub public_plan: Option<Vec<ActionId>>,
    pub mafs_log: Option<MessageLog>,
}

/// Runs one solver under a fixed disclosure set.
pub fn solve(
    problem: &MAProblem,
    graphs: &[DependencyGraph],
    disclosed: &DisclosureSet,
    solver: Solver,
    budget: SearchBudget,
    seed: u64,
) -> SolveOutcome {
    match solver {
        Solver::Projection => {
            let projection = build_projection(problem, graphs, disclosed);
            let Ok(plan) = gbfs(&projection.task, budget).result else {
                return SolveOutcome {
                    plan: None,
                    public_plan: None,
                    mafs_log: None,
                };
            };
            let public = projection.public_plan(&plan);
            let extension = extend_public_plan(problem, &public, budget).expect("projection plans are public");
            SolveOutcome {
                plan: match extension {
                    Extension::Complete(p) => Some(p),
                    Extension::Failed(_) => None,
                },
                public_plan: Some(public),
                mafs_log: None,
            }
        }
        Solver::Mafs => {
            let outcome = run_mafs(problem, graphs, disclosed, MafsConfig { budget, seed });
            SolveOutcome {
                plan: outcome.result.ok(),
                public_plan: None,
                mafs_log: Some(outcome.log),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub record: ExperimentRecord,
    pub disclosed: DisclosureSet,
    pub outcome: SolveOutcome,
}

pub fn run_experiment(problem: &MAProblem, solver: Solver, strategy: Strategy, config: &ExperimentConfig) -> Vec<ExperimentRecord> {
    run_experiment_detailed(problem, solver, strategy, config)
        .into_iter()
        .map(|r| r.record)
        .collect()
}

/// Round 0 discloses nothing (everything for [`Strategy::All`]); every later
/// round publishes one edge per agent. Stops at full disclosure, at the round
/// cap, or when a round publishes nothing.
pub fn run_experiment_detailed(
    problem: &MAProblem,
    solver: Solver,
    strategy: Strategy,
    config: &ExperimentConfig,
) -> Vec<RoundOutcome> {
    let graphs = build_all_graphs(problem);
    let total = total_edges(&graphs);
    let hindsight_value = if config.hindsight {
        hindsight(problem, &graphs, config.budget).map(|h| h.edges.len())
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut protocol = DisclosureProtocol::new(&graphs, strategy);
    let mut rounds = Vec::new();
    let mut round = 0;
    loop {
        let disclosed = protocol.disclosed().clone();
        let started = Instant::now();
        let outcome = solve(problem, &graphs, &disclosed, solver, config.budget, config.seed);
        let wall_ms = if config.measure_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        let plan = outcome.plan.as_ref();
        rounds.push(RoundOutcome {
            record: ExperimentRecord {
                domain: problem.domain.clone(),
                problem: problem.name.clone(),
                solver,
                strategy,
                round,
                disclosed_edges: disclosed.len(),
                total_edges: total,
                solved: plan.is_some(),
                plan_length: plan.map(JointPlan::len),
                makespan: plan.map(|p| makespan(problem, p).expect("solver plans are valid")),
                hindsight: hindsight_value,
                wall_ms,
                seed: config.seed,
            },
            disclosed,
            outcome,
        });
        if round >= config.max_rounds || protocol.is_exhausted() {
            break;
        }
        if protocol.round(&mut rng).is_empty() {
            break;
        }
        round += 1;
    }
    rounds
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hindsight {
    /// Edges the full-disclosure plan relies on, in first-use order.
    pub edges: DisclosureSet,
    pub public_plan: Vec<ActionId>,
}

/// Dependencies used by the projection plan found under full disclosure. Each
/// artificial precondition is credited to the latest earlier step adding it, or
/// to the initial state when no step does.
pub fn hindsight(problem: &MAProblem, graphs: &[DependencyGraph], budget: SearchBudget) -> Option<Hindsight> {
    let all = DisclosureSet::from_edges(all_edges(graphs));
    let projection = build_projection(problem, graphs, &all);
    let plan = gbfs(&projection.task, budget).result.ok()?;
    let public_plan = projection.public_plan(&plan);
    let find = |producer: Producer, fact| -> EdgeId {
        graphs
            .iter()
            .flat_map(|g| &g.edges)
            .find(|e| e.producer == producer && e.fact == fact)
            .map(|e| e.id)
            .expect("under full disclosure every marker has an edge")
    };
    let mut edges = DisclosureSet::new();
    for (i, &step) in plan.iter().enumerate() {
        for &f in &projection.task.actions[step].pre {
            let ProjectedFact::Artificial(fact) = projection.facts[f] else {
                continue;
            };
            let producer = plan[..i]
                .iter()
                .rev()
                .find(|&&j| projection.task.actions[j].add.contains(&f))
                .map(|&j| Producer::Action(projection.actions[j]))
                .unwrap_or(Producer::DummyInit);
            edges.insert(find(producer, fact));
        }
    }
    Some(Hindsight { edges, public_plan })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroParams {
    pub agents: usize,
    pub private_facts: usize,
    pub public_facts: usize,
    pub actions: usize,
}

impl MicroParams {
    pub const MAX: MicroParams = MicroParams {
        agents: 3,
        private_facts: 4,
        public_facts: 4,
        actions: 6,
    };

    pub fn within_caps(&self) -> bool {
        self.agents >= 1
            && self.agents <= Self::MAX.agents
            && self.private_facts <= Self::MAX.private_facts
            && self.public_facts <= Self::MAX.public_facts
            && self.actions <= Self::MAX.actions
    }
}

impl Default for MicroParams {
    fn default() -> Self {
        MicroParams {
            agents: 2,
            private_facts: 2,
            public_facts: 3,
            actions: 4,
        }
    }
}

fn pick<R: Rng>(rng: &mut R, from: &[FactId], max: usize) -> Vec<FactId> {
    let n = rng.gen_range(0..=max.min(from.len()));
    from.choose_multiple(rng, n).copied().collect()
}

/// A random grounded problem; the same seed always gives the same problem.
pub fn generate_micro_instance(seed: u64, params: MicroParams) -> MAProblem {
    assert!(params.within_caps(), "micro instance parameters exceed the caps");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents: Vec<String> = (0..params.agents).map(|i| format!("agent{i}")).collect();
    let mut facts = Vec::new();
    for i in 0..params.public_facts {
        facts.push(Fact {
            id: FactId(facts.len()),
            name: format!("p{i}"),
            owner: Owner::Public,
        });
    }
    for a in 0..params.agents {
        for i in 0..params.private_facts {
            facts.push(Fact {
                id: FactId(facts.len()),
                name: format!("q{a}_{i}"),
                owner: Owner::PrivateTo(AgentId(a)),
            });
        }
    }
    let public: Vec<FactId> = (0..params.public_facts).map(FactId).collect();

    let mut actions = Vec::new();
    for a in 0..params.agents {
        let private: Vec<FactId> = facts
            .iter()
            .filter(|f| f.owner == Owner::PrivateTo(AgentId(a)))
            .map(|f| f.id)
            .collect();
        for k in 0..params.actions {
            let mut pre = pick(&mut rng, &public, 1);
            pre.extend(pick(&mut rng, &private, 2));
            let mut add = pick(&mut rng, &public, 1);
            add.extend(pick(&mut rng, &private, 1));
            if add.is_empty() {
                let pool: Vec<FactId> = public.iter().chain(&private).copied().collect();
                if let Some(f) = pool.choose(&mut rng) {
                    add.push(*f);
                }
            }
            let del: Vec<FactId> = pre
                .iter()
                .copied()
                .filter(|f| !add.contains(f) && rng.gen_bool(0.4))
                .collect();
            actions.push(Action {
                id: ActionId(actions.len()),
                name: format!("a{a}_{k}"),
                agent: AgentId(a),
                pre,
                add,
                del,
                cost: 1,
                visibility: Visibility::Private,
                visibility_override: None,
            });
        }
    }

    let all: Vec<FactId> = facts.iter().map(|f| f.id).collect();
    let init: Vec<FactId> = all.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
    let goal_size = if public.is_empty() { 0 } else { rng.gen_range(1..=public.len().min(2)) };
    let goal = public.choose_multiple(&mut rng, goal_size).copied().collect();
    MAProblem::new("micro", format!("micro-{seed}"), agents, facts, actions, init, goal)
        .expect("generated problems respect ownership")
}

/// `levels` nested disclosure sets (at least two): evenly spaced prefixes of a
/// seeded shuffle of all edges, from the empty set to the full set. Small
/// graphs repeat sets.
pub fn nested_disclosures(graphs: &[DependencyGraph], levels: usize, seed: u64) -> Vec<DisclosureSet> {
    let mut edges: Vec<EdgeId> = all_edges(graphs).collect();
    edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let levels = levels.max(2);
    (0..levels)
        .map(|i| DisclosureSet::from_edges(edges[..i * edges.len() / (levels - 1)].iter().copied()))
        .collect()
}
