//! Classical planning over single-agent STRIPS tasks: the additive heuristic,
//! greedy best-first search, and an exhaustive enumerator used as a test oracle.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{Action, MAProblem, State};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskAction {
    pub name: String,
    pub pre: Vec<usize>,
    pub add: Vec<usize>,
    pub del: Vec<usize>,
    pub cost: u32,
}

impl TaskAction {
    pub fn applicable(&self, state: &State) -> bool {
        state.contains_all(&self.pre)
    }

    pub fn apply(&self, state: &State) -> State {
        let mut next = state.clone();
        for &f in &self.del {
            next.remove(f);
        }
        for &f in &self.add {
            next.insert(f);
        }
        next
    }
}

/// A classical STRIPS task over a dense fact space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub fact_names: Vec<String>,
    pub actions: Vec<TaskAction>,
    pub init: State,
    pub goal: Vec<usize>,
}

impl Task {
    pub fn num_facts(&self) -> usize {
        self.fact_names.len()
    }

    pub fn is_goal(&self, state: &State) -> bool {
        state.contains_all(&self.goal)
    }

    pub fn successors<'a>(&'a self, state: &'a State) -> impl Iterator<Item = (usize, State)> + 'a {
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.applicable(state))
            .map(|(i, a)| (i, a.apply(state)))
    }

    /// Applies `plan` from the initial state; `None` if a step is inapplicable.
    pub fn simulate(&self, plan: &[usize]) -> Option<State> {
        let mut state = self.init.clone();
        for &i in plan {
            let action = &self.actions[i];
            if !action.applicable(&state) {
                return None;
            }
            state = action.apply(&state);
        }
        Some(state)
    }

    pub fn is_plan(&self, plan: &[usize]) -> bool {
        self.simulate(plan).is_some_and(|s| self.is_goal(&s))
    }

    pub fn plan_cost(&self, plan: &[usize]) -> u64 {
        plan.iter().map(|&i| u64::from(self.actions[i].cost)).sum()
    }
}

impl From<&Action> for TaskAction {
    fn from(action: &Action) -> Self {
        let ids = |v: &[crate::model::FactId]| v.iter().map(|f| f.0).collect();
        TaskAction {
            name: action.name.clone(),
            pre: ids(&action.pre),
            add: ids(&action.add),
            del: ids(&action.del),
            cost: action.cost,
        }
    }
}

/// The whole multi-agent problem as one classical task; task indices equal problem ids.
pub fn merged_task(problem: &MAProblem) -> Task {
    Task {
        fact_names: problem.facts.iter().map(|f| f.name.clone()).collect(),
        actions: problem.actions.iter().map(TaskAction::from).collect(),
        init: problem.init_state(),
        goal: problem.goal.iter().map(|f| f.0).collect(),
    }
}

/// Additive delete-relaxation estimate; `None` stands for infinity.
///
/// Fact costs start at 0 for facts in `state`; an action costs 1 plus the sum of
/// its precondition costs and offers that cost to each add effect.
pub fn hadd(task: &Task, state: &State) -> Option<u64> {
    let costs = hadd_fact_costs(task, state);
    task.goal
        .iter()
        .try_fold(0u64, |acc, &g| costs[g].map(|c| acc + c))
}

/// Per-fact additive costs from `state`, computed with a generalized Dijkstra.
pub fn hadd_fact_costs(task: &Task, state: &State) -> Vec<Option<u64>> {
    let n = task.num_facts();
    let mut cost: Vec<Option<u64>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    for f in state.iter() {
        cost[f] = Some(0);
        heap.push(Reverse((0u64, f)));
    }

    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut unmet: Vec<usize> = Vec::with_capacity(task.actions.len());
    let mut pre_sum = vec![0u64; task.actions.len()];
    for (i, action) in task.actions.iter().enumerate() {
        let mut distinct = action.pre.clone();
        distinct.sort_unstable();
        distinct.dedup();
        for &p in &distinct {
            users[p].push(i);
        }
        unmet.push(distinct.len());
        if distinct.is_empty() {
            for &e in &action.add {
                if cost[e].is_none_or(|c| c > 1) {
                    cost[e] = Some(1);
                    heap.push(Reverse((1, e)));
                }
            }
        }
    }

    while let Some(Reverse((c, f))) = heap.pop() {
        if settled[f] || cost[f] != Some(c) {
            continue;
        }
        settled[f] = true;
        for &i in &users[f] {
            unmet[i] -= 1;
            pre_sum[i] += c;
            if unmet[i] == 0 {
                let via = 1 + pre_sum[i];
                for &e in &task.actions[i].add {
                    if cost[e].is_none_or(|old| old > via) {
                        cost[e] = Some(via);
                        heap.push(Reverse((via, e)));
                    }
                }
            }
        }
    }
    cost
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub max_expansions: u64,
    pub wall_clock_ms: u64,
}

impl SearchBudget {
    /// Five minutes and no practical expansion limit.
    pub const DEFAULT: SearchBudget = SearchBudget {
        max_expansions: 50_000_000,
        wall_clock_ms: 300_000,
    };

    pub fn new(max_expansions: u64, wall_clock_ms: u64) -> Self {
        assert!(max_expansions > 0 && wall_clock_ms > 0, "search budgets must be positive");
        SearchBudget {
            max_expansions,
            wall_clock_ms,
        }
    }

    pub fn deadline(&self) -> Instant {
        Instant::now() + Duration::from_millis(self.wall_clock_ms)
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SearchFailure {
    #[error("search space exhausted")]
    Exhausted,
    #[error("search budget exceeded")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchNode {
    pub state: State,
    pub parent: Option<usize>,
    pub action: Option<usize>,
    pub g: u64,
    pub h: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOutcome {
    pub result: Result<Vec<usize>, SearchFailure>,
    pub expansions: u64,
}

/// Greedy best-first search on `hadd`, FIFO among equal estimates.
///
/// States with an infinite estimate are dead ends and never enter the open list.
pub fn gbfs(task: &Task, budget: SearchBudget) -> SearchOutcome {
    let deadline = budget.deadline();
    let mut nodes: Vec<SearchNode> = Vec::new();
    let mut seen: HashMap<State, usize> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut expansions = 0;
    let done = |result| SearchOutcome { result, expansions: 0 };

    let Some(h0) = hadd(task, &task.init) else {
        return done(Err(SearchFailure::Exhausted));
    };
    if task.is_goal(&task.init) {
        return done(Ok(Vec::new()));
    }
    nodes.push(SearchNode {
        state: task.init.clone(),
        parent: None,
        action: None,
        g: 0,
        h: h0,
    });
    seen.insert(task.init.clone(), 0);
    open.push(Reverse((h0, 0usize)));

    while let Some(Reverse((_, id))) = open.pop() {
        if expansions >= budget.max_expansions || Instant::now() >= deadline {
            return SearchOutcome {
                result: Err(SearchFailure::Timeout),
                expansions,
            };
        }
        expansions += 1;
        let state = nodes[id].state.clone();
        for (i, next) in task.successors(&state) {
            if seen.contains_key(&next) {
                continue;
            }
            let Some(h) = hadd(task, &next) else {
                seen.insert(next, usize::MAX);
                continue;
            };
            let child = nodes.len();
            nodes.push(SearchNode {
                state: next.clone(),
                parent: Some(id),
                action: Some(i),
                g: nodes[id].g + u64::from(task.actions[i].cost),
                h,
            });
            if task.is_goal(&next) {
                return SearchOutcome {
                    result: Ok(extract_plan(&nodes, child)),
                    expansions,
                };
            }
            seen.insert(next, child);
            open.push(Reverse((h, child)));
        }
    }
    SearchOutcome {
        result: Err(SearchFailure::Exhausted),
        expansions,
    }
}

fn extract_plan(nodes: &[SearchNode], mut id: usize) -> Vec<usize> {
    let mut plan = Vec::new();
    while let Some(parent) = nodes[id].parent {
        plan.push(nodes[id].action.expect("non-root node has an action"));
        id = parent;
    }
    plan.reverse();
    plan
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleReport {
    /// Every action sequence of length at most `max_len` that ends in a goal state.
    pub plans: BTreeSet<Vec<usize>>,
    /// Cost of a cheapest plan of any length.
    pub opt: Option<u64>,
    /// Distinct states reachable from the initial state.
    pub reachable: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("state space exceeds the cap of {cap}")]
pub struct CapExceeded {
    pub cap: usize,
}

/// Exhaustive enumeration. `state_cap` bounds both the reachable states and the
/// number of enumerated sequences (times 64).
pub fn bfs_oracle(task: &Task, max_len: usize, state_cap: usize) -> Result<OracleReport, CapExceeded> {
    let err = CapExceeded { cap: state_cap };

    // reachable states and cheapest goal cost (uniform-cost over all depths)
    let mut best: HashMap<State, u64> = HashMap::new();
    let mut frontier = BinaryHeap::new();
    best.insert(task.init.clone(), 0);
    frontier.push(Reverse((0u64, task.init.clone())));
    let mut opt = None;
    while let Some(Reverse((g, state))) = frontier.pop() {
        if best.get(&state) != Some(&g) {
            continue;
        }
        if opt.is_none() && task.is_goal(&state) {
            opt = Some(g);
        }
        for (i, next) in task.successors(&state) {
            let cost = g + u64::from(task.actions[i].cost);
            if best.get(&next).is_none_or(|&old| cost < old) {
                best.insert(next.clone(), cost);
                if best.len() > state_cap {
                    return Err(err);
                }
                frontier.push(Reverse((cost, next)));
            }
        }
    }

    // all sequences up to max_len
    let sequence_cap = state_cap.saturating_mul(64);
    let mut visited = 0usize;
    let mut plans = BTreeSet::new();
    let mut queue = VecDeque::from([(Vec::new(), task.init.clone())]);
    while let Some((prefix, state)) = queue.pop_front() {
        if task.is_goal(&state) {
            plans.insert(prefix.clone());
        }
        if prefix.len() == max_len {
            continue;
        }
        for (i, next) in task.successors(&state) {
            visited += 1;
            if visited > sequence_cap {
                return Err(err);
            }
            let mut seq = prefix.clone();
            seq.push(i);
            queue.push_back((seq, next));
        }
    }

    Ok(OracleReport {
        plans,
        opt,
        reachable: best.len(),
    })
}
