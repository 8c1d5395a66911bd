//! The single-agent projection induced by a disclosure set.
//!
//! Every public action keeps its public preconditions and effects, requires the
//! artificial fact of each private precondition, and adds an artificial fact
//! only when the corresponding producer edge has been published. Artificial
//! facts are never deleted.

use std::collections::HashMap;

use crate::dependency::{ArtificialFactId, DependencyGraph, Producer};
use crate::disclosure::DisclosureSet;
use crate::model::{ActionId, FactId, MAProblem, State};
use crate::search::{Task, TaskAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectedFact {
    Public(FactId),
    Artificial(ArtificialFactId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub task: Task,
    /// Origin of every task fact.
    pub facts: Vec<ProjectedFact>,
    /// Origin of every task action.
    pub actions: Vec<ActionId>,
    index: HashMap<ProjectedFact, usize>,
}

impl Projection {
    pub fn fact_index(&self, fact: ProjectedFact) -> Option<usize> {
        self.index.get(&fact).copied()
    }

    pub fn action_index(&self, action: ActionId) -> Option<usize> {
        self.actions.iter().position(|a| *a == action)
    }

    /// Maps a plan over the task back to problem action ids.
    pub fn public_plan(&self, plan: &[usize]) -> Vec<ActionId> {
        plan.iter().map(|&i| self.actions[i]).collect()
    }

    pub fn is_artificial(&self, index: usize) -> bool {
        matches!(self.facts[index], ProjectedFact::Artificial(_))
    }

    /// Artificial facts true in `state`.
    pub fn artificial_in(&self, state: &State) -> Vec<ArtificialFactId> {
        state
            .iter()
            .filter_map(|i| match self.facts[i] {
                ProjectedFact::Artificial(a) => Some(a),
                ProjectedFact::Public(_) => None,
            })
            .collect()
    }
}

pub fn build_projection(problem: &MAProblem, graphs: &[DependencyGraph], disclosed: &DisclosureSet) -> Projection {
    let mut facts: Vec<ProjectedFact> = problem.public_facts().map(ProjectedFact::Public).collect();
    for graph in graphs {
        facts.extend(graph.artificial_facts.iter().map(|f| ProjectedFact::Artificial(f.id)));
    }
    let index: HashMap<ProjectedFact, usize> = facts.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let fact_names = facts
        .iter()
        .map(|f| match f {
            ProjectedFact::Public(p) => problem.fact(*p).name.clone(),
            ProjectedFact::Artificial(a) => a.to_string(),
        })
        .collect();

    let public = |ids: &[FactId]| -> Vec<usize> {
        ids.iter()
            .filter(|f| problem.is_public_fact(**f))
            .map(|f| index[&ProjectedFact::Public(*f)])
            .collect()
    };

    let mut actions = Vec::new();
    let mut origins = Vec::new();
    for action in problem.public_actions() {
        let graph = &graphs[action.agent.0];
        let mut pre = public(&action.pre);
        for &f in &action.pre {
            if !problem.is_public_fact(f) {
                let artificial = graph
                    .fact_for_private(f)
                    .expect("every private precondition of a public action has an artificial fact");
                pre.push(index[&ProjectedFact::Artificial(artificial.id)]);
            }
        }
        let mut add = public(&action.add);
        for edge in &graph.edges {
            if edge.producer == Producer::Action(action.id) && disclosed.contains(edge.id) {
                add.push(index[&ProjectedFact::Artificial(edge.fact)]);
            }
        }
        actions.push(TaskAction {
            name: action.name.clone(),
            pre,
            add,
            del: public(&action.del),
            cost: action.cost,
        });
        origins.push(action.id);
    }

    let mut init = State::from_indices(facts.len(), public(&problem.init));
    for graph in graphs {
        for edge in &graph.edges {
            if edge.producer == Producer::DummyInit && disclosed.contains(edge.id) {
                init.insert(index[&ProjectedFact::Artificial(edge.fact)]);
            }
        }
    }

    Projection {
        task: Task {
            fact_names,
            actions,
            init,
            goal: public(&problem.goal),
        },
        facts,
        actions: origins,
        index,
    }
}

/// True iff every edge shared under `d1` is also shared under `d2`.
pub fn subsumes(d1: &DisclosureSet, d2: &DisclosureSet) -> bool {
    d1.is_subset(d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::dependency::{all_edges, build_all_graphs, EdgeId};
    use crate::model::AgentId;
    use crate::search::{gbfs, SearchBudget, SearchFailure};

    #[test]
    fn zero_disclosure_leaves_camera_marker_unproduced() {
        let p = corpus::rovers_mini();
        let graphs = build_all_graphs(&p);
        let proj = build_projection(&p, &graphs, &DisclosureSet::new());
        let image = proj
            .action_index(p.action_by_name("take-image r1 rock1").unwrap().id)
            .unwrap();
        let camera = graphs[0]
            .fact_for_private(p.fact_by_name("holding r1 c1").unwrap().id)
            .unwrap()
            .id;
        let marker = proj.fact_index(ProjectedFact::Artificial(camera)).unwrap();
        assert!(proj.task.actions[image].pre.contains(&marker));
        assert!(proj.task.actions.iter().all(|a| !a.add.contains(&marker)));
        assert_eq!(gbfs(&proj.task, SearchBudget::default()).result, Err(SearchFailure::Exhausted));
    }

    #[test]
    fn full_disclosure_is_solvable() {
        let p = corpus::rovers_mini();
        let graphs = build_all_graphs(&p);
        let all = DisclosureSet::from_edges(all_edges(&graphs));
        let proj = build_projection(&p, &graphs, &all);
        let plan = gbfs(&proj.task, SearchBudget::default()).result.unwrap();
        assert!(proj.task.is_plan(&plan));
    }

    #[test]
    fn no_private_fact_survives() {
        let p = corpus::rovers_mini();
        let graphs = build_all_graphs(&p);
        let all = DisclosureSet::from_edges(all_edges(&graphs));
        let proj = build_projection(&p, &graphs, &all);
        for f in &proj.facts {
            if let ProjectedFact::Public(id) = f {
                assert!(p.is_public_fact(*id));
            }
        }
        for name in &proj.task.fact_names {
            assert!(p.fact_by_name(name).is_none_or(|f| f.is_public()), "{name}");
        }
        // artificial facts are add-only
        for a in &proj.task.actions {
            assert!(a.del.iter().all(|&f| !proj.is_artificial(f)));
        }
    }

    #[test]
    fn agent_without_dependencies_keeps_public_parts_only() {
        let p = corpus::flip_mini();
        let graphs = build_all_graphs(&p);
        let proj = build_projection(&p, &graphs, &DisclosureSet::new());
        let helper = p.agent_by_name("helper").unwrap();
        for action in p.actions_of(helper) {
            let i = proj.action_index(action.id).unwrap();
            let names: Vec<_> = proj.task.actions[i]
                .pre
                .iter()
                .map(|&f| proj.task.fact_names[f].clone())
                .collect();
            let expected: Vec<_> = action.pre.iter().map(|f| p.fact(*f).name.clone()).collect();
            assert_eq!(names, expected);
        }
    }

    #[test]
    fn subsumption_basics() {
        let e = |i| EdgeId {
            agent: AgentId(0),
            index: i,
        };
        let d = DisclosureSet::from_edges([e(0), e(1)]);
        assert!(subsumes(&d, &d));
        assert!(subsumes(&DisclosureSet::new(), &d));
        let a = DisclosureSet::from_edges([e(0)]);
        let b = DisclosureSet::from_edges([e(1)]);
        assert!(!subsumes(&a, &b));
        assert!(!subsumes(&b, &a));
    }
}
