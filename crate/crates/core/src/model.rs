//! Grounded multi-agent STRIPS problems with per-fact and per-action privacy,
//! together with the state transition semantics and plan validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense handle of an agent, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

/// Dense handle of a fact, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactId(pub usize);

/// Dense handle of a grounded action, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    Public,
    PrivateTo(AgentId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub id: FactId,
    pub name: String,
    pub owner: Owner,
}

impl Fact {
    pub fn is_public(&self) -> bool {
        self.owner == Owner::Public
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub id: ActionId,
    pub name: String,
    pub agent: AgentId,
    /// Sorted, duplicate free.
    pub pre: Vec<FactId>,
    pub add: Vec<FactId>,
    pub del: Vec<FactId>,
    pub cost: u32,
    /// Derived by [`classify_actions`] unless `visibility_override` is set.
    pub visibility: Visibility,
    pub visibility_override: Option<Visibility>,
}

impl Action {
    pub fn is_public(&self) -> bool {
        self.visibility == Visibility::Public
    }

    /// Every fact mentioned by the action, possibly with repetitions.
    pub fn touched(&self) -> impl Iterator<Item = FactId> + '_ {
        self.pre.iter().chain(&self.add).chain(&self.del).copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("fact `{fact}` is private to agent `{owner}` but occurs in action `{action}` of agent `{agent}`")]
    OwnershipViolation {
        fact: String,
        owner: String,
        action: String,
        agent: String,
    },
    #[error("goal fact `{0}` is private; private goals are not supported")]
    PrivateGoal(String),
    #[error("action `{action}` is not applicable: missing {missing:?}")]
    Inapplicable { action: String, missing: Vec<String> },
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown fact {0}")]
    UnknownFact(FactId),
    #[error("unknown action {0}")]
    UnknownAction(ActionId),
    #[error("action `{action}` both adds and deletes `{fact}`")]
    AddDeleteOverlap { action: String, fact: String },
    #[error("action `{0}` is declared private but touches facts it does not own")]
    InvalidOverride(String),
    #[error("{kind} ids must be dense and in declaration order (position {position} holds id {found})")]
    NonDenseIds {
        kind: &'static str,
        position: usize,
        found: usize,
    },
}

/// A grounded multi-agent STRIPS task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MAProblem {
    pub domain: String,
    pub name: String,
    /// Agent display names, indexed by [`AgentId`].
    pub agents: Vec<String>,
    pub facts: Vec<Fact>,
    pub actions: Vec<Action>,
    /// Sorted, duplicate free.
    pub init: Vec<FactId>,
    /// Sorted, duplicate free.
    pub goal: Vec<FactId>,
}

fn normalize(ids: &mut Vec<FactId>) {
    ids.sort_unstable();
    ids.dedup();
}

impl MAProblem {
    /// Checks referential integrity, normalizes fact sets and classifies the actions.
    pub fn new(
        domain: impl Into<String>,
        name: impl Into<String>,
        agents: Vec<String>,
        facts: Vec<Fact>,
        mut actions: Vec<Action>,
        mut init: Vec<FactId>,
        mut goal: Vec<FactId>,
    ) -> Result<Self, ModelError> {
        for (position, fact) in facts.iter().enumerate() {
            if fact.id.0 != position {
                return Err(ModelError::NonDenseIds {
                    kind: "fact",
                    position,
                    found: fact.id.0,
                });
            }
            if let Owner::PrivateTo(agent) = fact.owner {
                if agent.0 >= agents.len() {
                    return Err(ModelError::UnknownAgent(agent));
                }
            }
        }
        let check_fact = |f: FactId| {
            if f.0 < facts.len() {
                Ok(())
            } else {
                Err(ModelError::UnknownFact(f))
            }
        };
        for (position, action) in actions.iter_mut().enumerate() {
            if action.id.0 != position {
                return Err(ModelError::NonDenseIds {
                    kind: "action",
                    position,
                    found: action.id.0,
                });
            }
            if action.agent.0 >= agents.len() {
                return Err(ModelError::UnknownAgent(action.agent));
            }
            normalize(&mut action.pre);
            normalize(&mut action.add);
            normalize(&mut action.del);
            for f in action.touched() {
                check_fact(f)?;
            }
            if let Some(f) = action.add.iter().find(|f| action.del.binary_search(f).is_ok()) {
                return Err(ModelError::AddDeleteOverlap {
                    action: action.name.clone(),
                    fact: facts[f.0].name.clone(),
                });
            }
        }
        normalize(&mut init);
        normalize(&mut goal);
        for &f in init.iter().chain(&goal) {
            check_fact(f)?;
        }
        classify_actions(MAProblem {
            domain: domain.into(),
            name: name.into(),
            agents,
            facts,
            actions,
            init,
            goal,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> {
        (0..self.agents.len()).map(AgentId)
    }

    pub fn fact(&self, id: FactId) -> &Fact {
        &self.facts[id.0]
    }

    pub fn action(&self, id: ActionId) -> &Action {
        &self.actions[id.0]
    }

    pub fn is_public_fact(&self, id: FactId) -> bool {
        self.facts[id.0].is_public()
    }

    pub fn owner(&self, id: FactId) -> Owner {
        self.facts[id.0].owner
    }

    pub fn check_agent(&self, agent: AgentId) -> Result<(), ModelError> {
        if agent.0 < self.agents.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownAgent(agent))
        }
    }

    pub fn public_facts(&self) -> impl Iterator<Item = FactId> + '_ {
        self.facts.iter().filter(|f| f.is_public()).map(|f| f.id)
    }

    pub fn private_facts_of(&self, agent: AgentId) -> impl Iterator<Item = FactId> + '_ {
        self.facts
            .iter()
            .filter(move |f| f.owner == Owner::PrivateTo(agent))
            .map(|f| f.id)
    }

    pub fn actions_of(&self, agent: AgentId) -> impl Iterator<Item = &Action> + '_ {
        self.actions.iter().filter(move |a| a.agent == agent)
    }

    pub fn public_actions(&self) -> impl Iterator<Item = &Action> + '_ {
        self.actions.iter().filter(|a| a.is_public())
    }

    pub fn init_state(&self) -> State {
        State::from_indices(self.facts.len(), self.init.iter().map(|f| f.0))
    }

    pub fn is_goal(&self, state: &State) -> bool {
        self.goal.iter().all(|f| state.contains(f.0))
    }

    pub fn action_by_name(&self, name: &str) -> Option<&Action> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn fact_by_name(&self, name: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| f.name == name)
    }

    pub fn agent_by_name(&self, name: &str) -> Option<AgentId> {
        self.agents.iter().position(|a| a == name).map(AgentId)
    }
}

/// Assigns each action its visibility and checks the privacy partition.
///
/// An action is public iff it touches at least one public fact, unless the input
/// carries an explicit override. Applying it twice gives the same problem.
pub fn classify_actions(mut problem: MAProblem) -> Result<MAProblem, ModelError> {
    for action in &mut problem.actions {
        for f in action.touched() {
            if let Owner::PrivateTo(owner) = problem.facts[f.0].owner {
                if owner != action.agent {
                    return Err(ModelError::OwnershipViolation {
                        fact: problem.facts[f.0].name.clone(),
                        owner: problem.agents[owner.0].clone(),
                        action: action.name.clone(),
                        agent: problem.agents[action.agent.0].clone(),
                    });
                }
            }
        }
        let touches_public = action.touched().any(|f| problem.facts[f.0].is_public());
        action.visibility = match action.visibility_override {
            Some(Visibility::Private) if touches_public => {
                return Err(ModelError::InvalidOverride(action.name.clone()))
            }
            Some(v) => v,
            None if touches_public => Visibility::Public,
            None => Visibility::Private,
        };
    }
    if let Some(f) = problem.goal.iter().find(|f| !problem.facts[f.0].is_public()) {
        return Err(ModelError::PrivateGoal(problem.facts[f.0].name.clone()));
    }
    Ok(problem)
}

/// Fixed-width truth assignment over a fact space.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    width: usize,
    words: Vec<u64>,
}

impl State {
    pub fn empty(width: usize) -> Self {
        State {
            width,
            words: vec![0; width.div_ceil(64)],
        }
    }

    pub fn from_indices(width: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut state = State::empty(width);
        for i in indices {
            state.insert(i);
        }
        state
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.width);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.width, "fact {i} outside state of width {}", self.width);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.width, "fact {i} outside state of width {}", self.width);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains_all<'a>(&self, indices: impl IntoIterator<Item = &'a usize>) -> bool {
        indices.into_iter().all(|&i| self.contains(i))
    }

    pub fn holds(&self, fact: FactId) -> bool {
        self.contains(fact.0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_subset(&self, other: &State) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&i| self.contains(i))
    }

    pub fn facts(&self) -> impl Iterator<Item = FactId> + '_ {
        self.iter().map(FactId)
    }

    /// Copy of the state restricted to the facts selected by `keep`.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> State {
        State::from_indices(self.width, self.iter().filter(|&i| keep(i)))
    }

    /// Copy of the state embedded into a wider fact space.
    pub fn widened(&self, width: usize) -> State {
        assert!(width >= self.width);
        State::from_indices(width, self.iter())
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Applies `action` to `state`, returning the successor `(state \ del) ∪ add`.
pub fn apply(problem: &MAProblem, state: &State, action: &Action) -> Result<State, ModelError> {
    let missing: Vec<String> = action
        .pre
        .iter()
        .filter(|f| !state.holds(**f))
        .map(|f| problem.facts[f.0].name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::Inapplicable {
            action: action.name.clone(),
            missing,
        });
    }
    Ok(successor(state, action))
}

/// Successor without the applicability check.
pub(crate) fn successor(state: &State, action: &Action) -> State {
    let mut next = state.clone();
    for f in &action.del {
        next.remove(f.0);
    }
    for f in &action.add {
        next.insert(f.0);
    }
    next
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JointPlan {
    pub steps: Vec<ActionId>,
}

impl JointPlan {
    pub fn new(steps: Vec<ActionId>) -> Self {
        JointPlan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    /// `step` equals the plan length when every step applied but the goal failed.
    Invalid { step: usize, unmet: Vec<FactId> },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

pub fn validate_plan(problem: &MAProblem, plan: &JointPlan) -> Verdict {
    let mut state = problem.init_state();
    for (step, &id) in plan.steps.iter().enumerate() {
        let Some(action) = problem.actions.get(id.0) else {
            return Verdict::Invalid {
                step,
                unmet: Vec::new(),
            };
        };
        let unmet: Vec<FactId> = action.pre.iter().copied().filter(|f| !state.holds(*f)).collect();
        if !unmet.is_empty() {
            return Verdict::Invalid { step, unmet };
        }
        state = successor(&state, action);
    }
    let unmet: Vec<FactId> = problem.goal.iter().copied().filter(|f| !state.holds(*f)).collect();
    if unmet.is_empty() {
        Verdict::Valid
    } else {
        Verdict::Invalid {
            step: plan.steps.len(),
            unmet,
        }
    }
}

/// What a single agent knows about the problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalView {
    pub agent: AgentId,
    pub own_actions: Vec<Action>,
    /// Public projections of the other agents' public actions.
    pub foreign_actions: Vec<Action>,
    /// Public facts and the agent's own private facts, in id order.
    pub facts: Vec<FactId>,
}

impl LocalView {
    pub fn private_actions(&self) -> impl Iterator<Item = &Action> + '_ {
        self.own_actions.iter().filter(|a| !a.is_public())
    }

    pub fn public_actions(&self) -> impl Iterator<Item = &Action> + '_ {
        self.own_actions.iter().filter(|a| a.is_public())
    }
}

/// Strips an action down to its public preconditions and effects.
pub fn public_projection(problem: &MAProblem, action: &Action) -> Action {
    let keep = |ids: &[FactId]| -> Vec<FactId> {
        ids.iter().copied().filter(|f| problem.is_public_fact(*f)).collect()
    };
    Action {
        pre: keep(&action.pre),
        add: keep(&action.add),
        del: keep(&action.del),
        ..action.clone()
    }
}

pub fn local_view(problem: &MAProblem, agent: AgentId) -> Result<LocalView, ModelError> {
    problem.check_agent(agent)?;
    let own_actions = problem.actions_of(agent).cloned().collect();
    let foreign_actions = problem
        .public_actions()
        .filter(|a| a.agent != agent)
        .map(|a| public_projection(problem, a))
        .collect();
    let facts = problem
        .facts
        .iter()
        .filter(|f| f.owner == Owner::Public || f.owner == Owner::PrivateTo(agent))
        .map(|f| f.id)
        .collect();
    Ok(LocalView {
        agent,
        own_actions,
        foreign_actions,
        facts,
    })
}
