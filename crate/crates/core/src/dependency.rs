//! Private dependencies between public actions.
//!
//! Every agent owns a layered graph: producer public actions (plus a dummy
//! init producer) point to artificial facts, artificial facts point to the
//! public actions that need the underlying private precondition, and those
//! consumers point to the public facts they add. Only producer edges are ever
//! disclosed; the other two layers are always known.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::disclosure::DisclosureSet;
use crate::model::{local_view, ActionId, AgentId, FactId, LocalView, MAProblem, ModelError, Owner};

/// Globally unique, run-stable identifier of a producer edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId {
    pub agent: AgentId,
    pub index: usize,
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}.{}", self.agent.0, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArtificialFactId {
    pub agent: AgentId,
    pub index: usize,
}

impl fmt::Display for ArtificialFactId {
    /// Obfuscated name; never reveals the private fact it stands for.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dep_{}_{}", self.agent.0, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtificialFact {
    pub id: ArtificialFactId,
    /// The private precondition this marker stands for. Known only to the owner.
    pub private_fact: FactId,
    /// Public actions of the owner that need `private_fact`, in id order.
    pub consumers: Vec<ActionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Producer {
    Action(ActionId),
    DummyInit,
}

impl Producer {
    pub fn action(self) -> Option<ActionId> {
        match self {
            Producer::Action(a) => Some(a),
            Producer::DummyInit => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DependencyEdge {
    pub id: EdgeId,
    pub producer: Producer,
    pub fact: ArtificialFactId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    pub agent: AgentId,
    pub artificial_facts: Vec<ArtificialFact>,
    /// Producer edges grouped by artificial fact, producers in action id order
    /// with the dummy init producer last.
    pub edges: Vec<DependencyEdge>,
    /// Public add effects of every consumer action.
    pub consumer_public_effects: BTreeMap<ActionId, Vec<FactId>>,
}

impl DependencyGraph {
    pub fn fact(&self, id: ArtificialFactId) -> &ArtificialFact {
        debug_assert_eq!(id.agent, self.agent);
        &self.artificial_facts[id.index]
    }

    pub fn edge(&self, id: EdgeId) -> &DependencyEdge {
        debug_assert_eq!(id.agent, self.agent);
        &self.edges[id.index]
    }

    pub fn contains_edge(&self, id: EdgeId) -> bool {
        id.agent == self.agent && id.index < self.edges.len()
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges.iter().map(|e| e.id)
    }

    pub fn edges_into(&self, fact: ArtificialFactId) -> impl Iterator<Item = &DependencyEdge> + '_ {
        self.edges.iter().filter(move |e| e.fact == fact)
    }

    pub fn fact_for_private(&self, private_fact: FactId) -> Option<&ArtificialFact> {
        self.artificial_facts.iter().find(|f| f.private_fact == private_fact)
    }

    /// Artificial preconditions of a consumer action, in index order.
    pub fn artificial_preconditions(&self, consumer: ActionId) -> Vec<ArtificialFactId> {
        self.artificial_facts
            .iter()
            .filter(|f| f.consumers.contains(&consumer))
            .map(|f| f.id)
            .collect()
    }

    pub fn public_effects(&self, consumer: ActionId) -> &[FactId] {
        self.consumer_public_effects
            .get(&consumer)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Delete-relaxed closure of `seed` under the agent's private actions.
///
/// A private action fires once all of its preconditions are in the accumulated
/// set; its private add effects join the set. Deletes are ignored.
pub fn facilitated_private_facts(view: &LocalView, seed: &BTreeSet<FactId>) -> BTreeSet<FactId> {
    let mut reached = seed.clone();
    let private: Vec<_> = view.private_actions().collect();
    let mut fired = vec![false; private.len()];
    loop {
        let mut changed = false;
        for (i, action) in private.iter().enumerate() {
            if fired[i] || !action.pre.iter().all(|f| reached.contains(f)) {
                continue;
            }
            fired[i] = true;
            changed = true;
            reached.extend(action.add.iter().copied());
        }
        if !changed {
            return reached;
        }
    }
}

pub fn build_dependency_graph(problem: &MAProblem, agent: AgentId) -> Result<DependencyGraph, ModelError> {
    let view = local_view(problem, agent)?;
    let owned = Owner::PrivateTo(agent);
    let public_actions: Vec<_> = view.public_actions().collect();

    let mut consumers: BTreeMap<FactId, Vec<ActionId>> = BTreeMap::new();
    let mut consumer_public_effects = BTreeMap::new();
    for action in &public_actions {
        let mut is_consumer = false;
        for &f in &action.pre {
            if problem.owner(f) == owned {
                consumers.entry(f).or_default().push(action.id);
                is_consumer = true;
            }
        }
        if is_consumer {
            let effects = action.add.iter().copied().filter(|f| problem.is_public_fact(*f)).collect();
            consumer_public_effects.insert(action.id, effects);
        }
    }

    // what each producer can bring about through private chains
    let private_effects = |add: &[FactId]| -> BTreeSet<FactId> {
        add.iter().copied().filter(|f| problem.owner(*f) == owned).collect()
    };
    let reach: Vec<(Producer, BTreeSet<FactId>)> = public_actions
        .iter()
        .map(|a| {
            (
                Producer::Action(a.id),
                facilitated_private_facts(&view, &private_effects(&a.add)),
            )
        })
        .chain(std::iter::once((
            Producer::DummyInit,
            facilitated_private_facts(&view, &private_effects(&problem.init)),
        )))
        .collect();

    let mut artificial_facts = Vec::new();
    let mut edges = Vec::new();
    for (private_fact, consumers) in consumers {
        let id = ArtificialFactId {
            agent,
            index: artificial_facts.len(),
        };
        for (producer, reached) in &reach {
            if !reached.contains(&private_fact) {
                continue;
            }
            // a producer that is the sole consumer only depends on itself
            if let Producer::Action(a) = producer {
                if consumers.as_slice() == [*a] {
                    continue;
                }
            }
            edges.push(DependencyEdge {
                id: EdgeId {
                    agent,
                    index: edges.len(),
                },
                producer: *producer,
                fact: id,
            });
        }
        artificial_facts.push(ArtificialFact {
            id,
            private_fact,
            consumers,
        });
    }

    Ok(DependencyGraph {
        agent,
        artificial_facts,
        edges,
        consumer_public_effects,
    })
}

/// One graph per agent, indexed by agent id.
pub fn build_all_graphs(problem: &MAProblem) -> Vec<DependencyGraph> {
    problem
        .agent_ids()
        .map(|a| build_dependency_graph(problem, a).expect("agent ids come from the problem"))
        .collect()
}

pub fn total_edges(graphs: &[DependencyGraph]) -> usize {
    graphs.iter().map(|g| g.edges.len()).sum()
}

pub fn all_edges(graphs: &[DependencyGraph]) -> impl Iterator<Item = EdgeId> + '_ {
    graphs.iter().flat_map(|g| g.edge_ids())
}

/// Producer/consumer pairs that no disclosed edge of this agent connects.
pub fn undisclosed_pairs(graph: &DependencyGraph, disclosed: &DisclosureSet) -> BTreeSet<(ActionId, ActionId)> {
    let mut hidden = BTreeSet::new();
    let mut revealed = BTreeSet::new();
    for edge in &graph.edges {
        let Producer::Action(producer) = edge.producer else {
            continue;
        };
        let target = if disclosed.contains(edge.id) {
            &mut revealed
        } else {
            &mut hidden
        };
        for &consumer in &graph.fact(edge.fact).consumers {
            target.insert((producer, consumer));
        }
    }
    hidden.difference(&revealed).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn name_set(problem: &MAProblem, facts: &BTreeSet<FactId>) -> Vec<String> {
        facts.iter().map(|f| problem.fact(*f).name.clone()).collect()
    }

    fn fact(problem: &MAProblem, name: &str) -> FactId {
        problem.fact_by_name(name).unwrap().id
    }

    fn action(problem: &MAProblem, name: &str) -> ActionId {
        problem.action_by_name(name).unwrap().id
    }

    #[test]
    fn closure_of_holding_adds_nothing() {
        let p = corpus::rovers_mini();
        let view = local_view(&p, AgentId(0)).unwrap();
        let seed = BTreeSet::from([fact(&p, "holding r1 c1")]);
        assert_eq!(facilitated_private_facts(&view, &seed), seed);
    }

    #[test]
    fn closure_of_empty_seed_without_private_actions() {
        let p = corpus::flip_mini();
        let view = local_view(&p, AgentId(0)).unwrap();
        assert!(facilitated_private_facts(&view, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn closure_of_take_effects_contains_holding() {
        let p = corpus::rovers_mini();
        let view = local_view(&p, AgentId(0)).unwrap();
        let take = p.action_by_name("take r1 c1 b1").unwrap();
        let seed: BTreeSet<_> = take.add.iter().copied().filter(|f| !p.is_public_fact(*f)).collect();
        assert!(facilitated_private_facts(&view, &seed).contains(&fact(&p, "holding r1 c1")));
    }

    #[test]
    fn closure_follows_moves_from_init() {
        let p = corpus::rovers_mini();
        let view = local_view(&p, AgentId(0)).unwrap();
        let seed = BTreeSet::from([fact(&p, "at r1 rock1"), fact(&p, "storage-clear r1")]);
        assert_eq!(
            name_set(&p, &facilitated_private_facts(&view, &seed)),
            vec!["storage-clear r1", "at r1 b1", "at r1 b2", "at r1 rock1"]
        );
    }

    #[test]
    fn rovers_agent_one_graph_shape() {
        let p = corpus::rovers_mini();
        let g = build_dependency_graph(&p, AgentId(0)).unwrap();
        let camera = g.fact_for_private(fact(&p, "holding r1 c1")).unwrap();
        let producers: Vec<_> = g.edges_into(camera.id).map(|e| e.producer).collect();
        assert_eq!(
            producers,
            vec![
                Producer::Action(action(&p, "take r1 c1 b1")),
                Producer::Action(action(&p, "take r1 c1 b2"))
            ]
        );
        assert_eq!(camera.consumers.len(), 3);
        assert_eq!(g.artificial_facts.len(), 3);
        assert_eq!(g.edges.len(), 6);
        let storage = g.fact_for_private(fact(&p, "storage-clear r1")).unwrap();
        let producers: Vec<_> = g.edges_into(storage.id).map(|e| e.producer).collect();
        assert_eq!(producers, vec![Producer::Action(action(&p, "unload r1 b2")), Producer::DummyInit]);
    }

    #[test]
    fn agent_without_public_actions_has_empty_graph() {
        let p = corpus::flip_mini();
        let helper = p.agent_by_name("helper").unwrap();
        let g = build_dependency_graph(&p, helper).unwrap();
        assert!(g.is_empty());
        assert!(g.artificial_facts.is_empty());
    }

    #[test]
    fn construction_is_deterministic() {
        let p = corpus::rovers_mini();
        assert_eq!(build_all_graphs(&p), build_all_graphs(&p));
    }

    #[test]
    fn undisclosed_pairs_extremes() {
        let p = corpus::rovers_mini();
        let g = build_dependency_graph(&p, AgentId(0)).unwrap();
        let all = DisclosureSet::from_edges(g.edge_ids());
        assert!(undisclosed_pairs(&g, &all).is_empty());
        let none = undisclosed_pairs(&g, &DisclosureSet::new());
        // 2 camera producers x 3 consumers + 2 detector producers x 2 consumers
        // + 1 storage producer x 2 consumers
        assert_eq!(none.len(), 6 + 4 + 2);
    }

    #[test]
    fn disclosing_one_camera_edge_removes_its_pairs_only() {
        let p = corpus::rovers_mini();
        let g = build_dependency_graph(&p, AgentId(0)).unwrap();
        let take_b1 = action(&p, "take r1 c1 b1");
        let take_b2 = action(&p, "take r1 c1 b2");
        let image = action(&p, "take-image r1 rock1");
        let edge = g
            .edges
            .iter()
            .find(|e| e.producer == Producer::Action(take_b1))
            .unwrap();
        let d = undisclosed_pairs(&g, &DisclosureSet::from_edges([edge.id]));
        assert!(!d.contains(&(take_b1, image)));
        assert!(d.contains(&(take_b2, image)));
    }
}
