//! Multi-agent forward search with dependency-gated broadcasting, simulated on
//! one executor with strict round-robin scheduling.
//!
//! Every agent searches over states made of the public facts, its own private
//! facts, and one opaque index per other agent. States reached by a public
//! action are broadcast; a state whose public action directly follows an
//! undisclosed producer of the same agent is neither broadcast nor expanded.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dependency::{undisclosed_pairs, DependencyGraph, Producer};
use crate::disclosure::DisclosureSet;
use crate::model::{successor, validate_plan, ActionId, AgentId, FactId, JointPlan, MAProblem, Owner, State};
use crate::search::{hadd, SearchBudget, SearchFailure, Task, TaskAction};

/// Infinite heuristic values sort last but are kept.
const INFINITE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MafsConfig {
    pub budget: SearchBudget,
    /// Carried into the log for bookkeeping; round-robin scheduling is deterministic.
    pub seed: u64,
}

impl Default for MafsConfig {
    fn default() -> Self {
        MafsConfig {
            budget: SearchBudget::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MafsMessage {
    pub id: usize,
    pub sender: AgentId,
    pub public_action: ActionId,
    /// Public facts that hold, in id order.
    pub public_state: Vec<FactId>,
    /// One opaque private-substate index per agent.
    pub private_indices: Vec<usize>,
    pub g: u64,
    pub h: u64,
    /// Sender-side node the state was taken from.
    pub origin_node: usize,
    /// The previous message on the same search path, if any.
    pub predecessor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MafsError {
    #[error("message {id} carries {found} private indices, expected {expected}")]
    MalformedMessage { id: usize, found: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    Root,
    Local { node: usize, action: ActionId },
    Message(usize),
}

#[derive(Debug, Clone)]
struct Node {
    state: State,
    foreign: Vec<usize>,
    parent: Parent,
    g: u64,
    h: u64,
    /// Latest public action on the path to this node, including its own.
    last_public: Option<ActionId>,
    /// Latest public action strictly before the generating one.
    gate_predecessor: Option<ActionId>,
    /// Latest message on the path to this node, including one sent from it.
    path_message: Option<usize>,
    version: u32,
    expanded: Option<u32>,
}

/// One agent's share of the search.
#[derive(Debug)]
pub struct AgentSearch {
    pub agent: AgentId,
    /// Producer/consumer pairs that may not appear back to back.
    pub forbidden: BTreeSet<(ActionId, ActionId)>,
    nodes: Vec<Node>,
    index: HashMap<(State, Vec<usize>), usize>,
    open: BinaryHeap<Reverse<(u64, u64, usize, u32)>>,
    pushes: u64,
    substates: Vec<State>,
    substate_index: HashMap<State, usize>,
    queue: VecDeque<usize>,
    own_actions: Vec<ActionId>,
    heuristic: HeuristicTask,
    private_mask: Vec<bool>,
}

/// The agent's relaxed view: its own actions, the other agents' public
/// actions with their artificial markers, and what has been disclosed.
#[derive(Debug, Clone)]
pub struct HeuristicTask {
    pub task: Task,
    seed: Vec<usize>,
    width: usize,
}

impl HeuristicTask {
    pub fn new(problem: &MAProblem, graphs: &[DependencyGraph], disclosed: &DisclosureSet, agent: AgentId) -> Self {
        let width = problem.facts.len();
        let mut fact_names: Vec<String> = problem.facts.iter().map(|f| f.name.clone()).collect();
        let mut marker = HashMap::new();
        for graph in graphs.iter().filter(|g| g.agent != agent) {
            for f in &graph.artificial_facts {
                marker.insert(f.id, fact_names.len());
                fact_names.push(f.id.to_string());
            }
        }
        let mut actions = Vec::new();
        for action in &problem.actions {
            if action.agent == agent {
                actions.push(TaskAction::from(action));
                continue;
            }
            if !action.is_public() {
                continue;
            }
            let graph = &graphs[action.agent.0];
            let public = |ids: &[FactId]| -> Vec<usize> {
                ids.iter().filter(|f| problem.is_public_fact(**f)).map(|f| f.0).collect()
            };
            let mut pre = public(&action.pre);
            for f in &action.pre {
                if let Some(a) = graph.fact_for_private(*f) {
                    pre.push(marker[&a.id]);
                }
            }
            let mut add = public(&action.add);
            for edge in &graph.edges {
                if edge.producer == Producer::Action(action.id) && disclosed.contains(edge.id) {
                    add.push(marker[&edge.fact]);
                }
            }
            actions.push(TaskAction {
                name: action.name.clone(),
                pre,
                add,
                del: public(&action.del),
                cost: action.cost,
            });
        }
        let seed = graphs
            .iter()
            .filter(|g| g.agent != agent)
            .flat_map(|g| g.edges.iter())
            .filter(|e| e.producer == Producer::DummyInit && disclosed.contains(e.id))
            .map(|e| marker[&e.fact])
            .collect();
        let task = Task {
            init: State::empty(fact_names.len()),
            fact_names,
            actions,
            goal: problem.goal.iter().map(|f| f.0).collect(),
        };
        HeuristicTask { task, seed, width }
    }

    /// Facts reachable in the relaxation from `state`.
    pub fn relaxed_reachable(&self, state: &State) -> BTreeSet<usize> {
        crate::search::hadd_fact_costs(&self.task, &self.extend(state))
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    fn extend(&self, state: &State) -> State {
        debug_assert_eq!(state.width(), self.width);
        let mut full = state.widened(self.task.num_facts());
        for &m in &self.seed {
            full.insert(m);
        }
        full
    }

    /// `None` is infinity.
    pub fn evaluate(&self, state: &State) -> Option<u64> {
        hadd(&self.task, &self.extend(state))
    }
}

/// Relaxed estimate of `agent` for a problem state restricted to what it sees.
pub fn heuristic_local(
    problem: &MAProblem,
    graphs: &[DependencyGraph],
    disclosed: &DisclosureSet,
    agent: AgentId,
    state: &State,
) -> Option<u64> {
    let mask = visible_mask(problem, agent);
    HeuristicTask::new(problem, graphs, disclosed, agent).evaluate(&state.restricted(|i| mask[i]))
}

fn visible_mask(problem: &MAProblem, agent: AgentId) -> Vec<bool> {
    problem
        .facts
        .iter()
        .map(|f| f.owner == Owner::Public || f.owner == Owner::PrivateTo(agent))
        .collect()
}

enum Step {
    Idle,
    Expanded,
    Goal(usize),
}

impl AgentSearch {
    pub fn new(problem: &MAProblem, graphs: &[DependencyGraph], disclosed: &DisclosureSet, agent: AgentId) -> Self {
        let private_mask: Vec<bool> = problem.facts.iter().map(|f| f.owner == Owner::PrivateTo(agent)).collect();
        let mask = visible_mask(problem, agent);
        let init = problem.init_state();
        let init_private = init.restricted(|i| private_mask[i]);
        let mut search = AgentSearch {
            agent,
            forbidden: undisclosed_pairs(&graphs[agent.0], disclosed),
            nodes: Vec::new(),
            index: HashMap::new(),
            open: BinaryHeap::new(),
            pushes: 0,
            substates: vec![init_private.clone()],
            substate_index: HashMap::from([(init_private, 0)]),
            queue: VecDeque::new(),
            own_actions: problem.actions_of(agent).map(|a| a.id).collect(),
            heuristic: HeuristicTask::new(problem, graphs, disclosed, agent),
            private_mask,
        };
        let root = init.restricted(|i| mask[i]);
        let h = search.heuristic.evaluate(&root).unwrap_or(INFINITE);
        search.insert_new(
            root,
            vec![0; problem.num_agents()],
            Node {
                state: State::empty(0),
                foreign: Vec::new(),
                parent: Parent::Root,
                g: 0,
                h,
                last_public: None,
                gate_predecessor: None,
                path_message: None,
                version: 0,
                expanded: None,
            },
        );
        search
    }

    fn push(&mut self, node: usize) {
        let n = &self.nodes[node];
        self.open.push(Reverse((n.h, self.pushes, node, n.version)));
        self.pushes += 1;
    }

    fn insert_new(&mut self, state: State, foreign: Vec<usize>, mut node: Node) -> usize {
        let id = self.nodes.len();
        node.state = state.clone();
        node.foreign = foreign.clone();
        self.nodes.push(node);
        self.index.insert((state, foreign), id);
        self.push(id);
        id
    }

    fn intern(&mut self, state: &State) -> usize {
        let private = state.restricted(|i| self.private_mask[i]);
        if let Some(&i) = self.substate_index.get(&private) {
            return i;
        }
        let i = self.substates.len();
        self.substates.push(private.clone());
        self.substate_index.insert(private, i);
        i
    }

    pub fn open_is_empty(&self) -> bool {
        self.open.iter().all(|Reverse((_, _, node, version))| {
            let n = &self.nodes[*node];
            n.version != *version || n.expanded == Some(*version)
        })
    }

    /// Queue a message for processing at this agent's next turn.
    pub fn deliver(&mut self, message: usize) {
        self.queue.push_back(message);
    }

    /// Adopts a broadcast state if it is new here, or cheaper than the copy
    /// already known.
    pub fn process_message(&mut self, m: &MafsMessage) -> Result<(), MafsError> {
        let n = self.nodes[0].foreign.len();
        if m.private_indices.len() != n {
            return Err(MafsError::MalformedMessage {
                id: m.id,
                found: m.private_indices.len(),
                expected: n,
            });
        }
        let me = self.agent.0;
        // an index this agent never issued falls back to its initial substate
        let own = self.substates.get(m.private_indices[me]).unwrap_or(&self.substates[0]);
        let mut state = State::from_indices(self.private_mask.len(), m.public_state.iter().map(|f| f.0));
        for i in own.iter() {
            state.insert(i);
        }
        let mut foreign = m.private_indices.clone();
        foreign[me] = 0;

        let local = self.heuristic.evaluate(&state).unwrap_or(INFINITE);
        let h = local.max(m.h);
        let fresh = Node {
            state: State::empty(0),
            foreign: Vec::new(),
            parent: Parent::Message(m.id),
            g: m.g,
            h,
            last_public: Some(m.public_action),
            gate_predecessor: None,
            path_message: Some(m.id),
            version: 0,
            expanded: None,
        };
        match self.index.get(&(state.clone(), foreign.clone())) {
            None => {
                self.insert_new(state, foreign, fresh);
            }
            Some(&id) if self.nodes[id].g > m.g => {
                let node = &mut self.nodes[id];
                let version = node.version + 1;
                *node = Node {
                    state: node.state.clone(),
                    foreign: node.foreign.clone(),
                    version,
                    ..fresh
                };
                self.push(id);
            }
            Some(_) => {}
        }
        Ok(())
    }

    fn pop(&mut self) -> Option<usize> {
        while let Some(Reverse((_, _, node, version))) = self.open.pop() {
            let n = &self.nodes[node];
            if n.version == version && n.expanded != Some(version) {
                return Some(node);
            }
        }
        None
    }

    fn step(&mut self, problem: &MAProblem, round: usize, log: &mut MessageLog) -> Step {
        let Some(id) = self.pop() else {
            return Step::Idle;
        };
        let node = &mut self.nodes[id];
        node.expanded = Some(node.version);
        let own_public = match node.parent {
            Parent::Local { action, .. } if problem.action(action).is_public() => Some(action),
            _ => None,
        };
        if let Some(a) = own_public {
            if let Some(prev) = node.gate_predecessor {
                if self.forbidden.contains(&(prev, a)) {
                    log.gated += 1;
                    return Step::Expanded;
                }
            }
        }

        let goal = problem.is_goal(&self.nodes[id].state);
        if let Some(a) = own_public {
            let own_index = self.intern(&self.nodes[id].state.clone());
            let node = &self.nodes[id];
            let mut private_indices = node.foreign.clone();
            private_indices[self.agent.0] = own_index;
            let message = MafsMessage {
                id: log.messages.len(),
                sender: self.agent,
                public_action: a,
                public_state: node.state.facts().filter(|f| problem.is_public_fact(*f)).collect(),
                private_indices,
                g: node.g,
                h: node.h,
                origin_node: id,
                predecessor: node.path_message,
            };
            self.nodes[id].path_message = Some(message.id);
            log.push(round, message);
        }
        if goal {
            return Step::Goal(id);
        }

        let parent = &self.nodes[id];
        let (state, foreign, g) = (parent.state.clone(), parent.foreign.clone(), parent.g);
        let (last_public, path_message) = (parent.last_public, parent.path_message);
        for i in 0..self.own_actions.len() {
            let action = problem.action(self.own_actions[i]);
            if !action.pre.iter().all(|f| state.holds(*f)) {
                continue;
            }
            let next = successor(&state, action);
            if self.index.contains_key(&(next.clone(), foreign.clone())) {
                continue;
            }
            let h = self.heuristic.evaluate(&next).unwrap_or(INFINITE);
            let public = action.is_public();
            self.insert_new(
                next,
                foreign.clone(),
                Node {
                    state: State::empty(0),
                    foreign: Vec::new(),
                    parent: Parent::Local {
                        node: id,
                        action: action.id,
                    },
                    g: g + u64::from(action.cost),
                    h,
                    last_public: if public { Some(action.id) } else { last_public },
                    gate_predecessor: last_public,
                    path_message,
                    version: 0,
                    expanded: None,
                },
            );
        }
        Step::Expanded
    }
}

/// Line-oriented record of one broadcast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub round: usize,
    pub id: usize,
    pub sender: AgentId,
    pub action: String,
    pub public_state_hash: String,
    pub private_indices: Vec<usize>,
    pub predecessor: Option<usize>,
    pub g: u64,
    pub h: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageLog {
    pub messages: Vec<MafsMessage>,
    pub rounds: Vec<usize>,
    /// Nodes whose expansion the gate stopped.
    pub gated: usize,
}

impl MessageLog {
    fn push(&mut self, round: usize, message: MafsMessage) {
        self.messages.push(message);
        self.rounds.push(round);
    }

    pub fn entries(&self, problem: &MAProblem) -> Vec<LogEntry> {
        self.messages
            .iter()
            .zip(&self.rounds)
            .map(|(m, &round)| LogEntry {
                round,
                id: m.id,
                sender: m.sender,
                action: problem.action(m.public_action).name.clone(),
                public_state_hash: format!("{:016x}", fnv1a(&m.public_state)),
                private_indices: m.private_indices.clone(),
                predecessor: m.predecessor,
                g: m.g,
                h: m.h,
            })
            .collect()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self, problem: &MAProblem) -> String {
        self.entries(problem)
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entries serialize") + "\n")
            .collect()
    }
}

/// Stable 64-bit FNV-1a over fact ids.
pub fn fnv1a(facts: &[FactId]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for f in facts {
        for byte in (f.0 as u64).to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    }
    hash
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MafsOutcome {
    pub result: Result<JointPlan, SearchFailure>,
    pub log: MessageLog,
    pub expansions: u64,
    pub rounds: usize,
}

pub fn run_mafs(problem: &MAProblem, graphs: &[DependencyGraph], disclosed: &DisclosureSet, config: MafsConfig) -> MafsOutcome {
    let deadline = config.budget.deadline();
    let mut agents: Vec<AgentSearch> = problem
        .agent_ids()
        .map(|a| AgentSearch::new(problem, graphs, disclosed, a))
        .collect();
    let mut log = MessageLog::default();
    let mut expansions = 0u64;
    let mut round = 0;
    let finish = |result, log, expansions, rounds| MafsOutcome {
        result,
        log,
        expansions,
        rounds,
    };
    if agents.is_empty() {
        let result = if problem.is_goal(&problem.init_state()) {
            Ok(JointPlan::default())
        } else {
            Err(SearchFailure::Exhausted)
        };
        return finish(result, log, 0, 0);
    }

    loop {
        for i in 0..agents.len() {
            while let Some(m) = agents[i].queue.pop_front() {
                agents[i]
                    .process_message(&log.messages[m])
                    .expect("the simulator only sends well-formed messages");
            }
            if expansions >= config.budget.max_expansions || Instant::now() >= deadline {
                return finish(Err(SearchFailure::Timeout), log, expansions, round);
            }
            let sent = log.messages.len();
            match agents[i].step(problem, round, &mut log) {
                Step::Idle => {}
                Step::Expanded => expansions += 1,
                Step::Goal(node) => {
                    expansions += 1;
                    let plan = reconstruct(&agents, &log, agents[i].agent, node);
                    debug_assert!(validate_plan(problem, &plan).is_valid());
                    return finish(Ok(plan), log, expansions, round);
                }
            }
            for m in sent..log.messages.len() {
                for (j, other) in agents.iter_mut().enumerate() {
                    if j != i {
                        other.deliver(m);
                    }
                }
            }
        }
        round += 1;
        if agents.iter().all(|a| a.queue.is_empty() && a.open_is_empty()) {
            return finish(Err(SearchFailure::Exhausted), log, expansions, round);
        }
    }
}

/// Follows local parents and message provenance back to a root.
fn reconstruct(agents: &[AgentSearch], log: &MessageLog, mut agent: AgentId, mut node: usize) -> JointPlan {
    let mut steps = Vec::new();
    let limit: usize = agents.iter().map(|a| a.nodes.len()).sum();
    loop {
        assert!(steps.len() <= limit, "provenance must be acyclic");
        match agents[agent.0].nodes[node].parent {
            Parent::Root => break,
            Parent::Local { node: parent, action } => {
                steps.push(action);
                node = parent;
            }
            Parent::Message(m) => {
                let message = &log.messages[m];
                steps.push(message.public_action);
                agent = message.sender;
                node = message.origin_node;
                // the origin node itself was reached by the public action
                match agents[agent.0].nodes[node].parent {
                    Parent::Local { node: parent, action } => {
                        debug_assert_eq!(action, message.public_action);
                        node = parent;
                    }
                    other => unreachable!("broadcast states come from local public steps, got {other:?}"),
                }
            }
        }
    }
    steps.reverse();
    JointPlan::new(steps)
}

/// Messages whose public action directly follows an undisclosed producer of
/// the same sender on its search path, judged from the log alone.
pub fn gate_violations(problem: &MAProblem, graphs: &[DependencyGraph], disclosed: &DisclosureSet, log: &MessageLog) -> Vec<usize> {
    let forbidden: Vec<_> = graphs.iter().map(|g| undisclosed_pairs(g, disclosed)).collect();
    log.messages
        .iter()
        .filter(|m| {
            let Some(p) = m.predecessor else {
                return false;
            };
            let prev = &log.messages[p];
            let a = problem.action(m.public_action);
            prev.sender == m.sender
                && problem.action(prev.public_action).agent == a.agent
                && forbidden[m.sender.0].contains(&(prev.public_action, m.public_action))
        })
        .map(|m| m.id)
        .collect()
}

/// Messages that mention a private fact.
pub fn privacy_violations(problem: &MAProblem, log: &MessageLog) -> Vec<usize> {
    log.messages
        .iter()
        .filter(|m| {
            m.public_state.iter().any(|f| !problem.is_public_fact(*f))
                || m.private_indices.len() != problem.num_agents()
        })
        .map(|m| m.id)
        .collect()
}
