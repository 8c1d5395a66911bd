//! Turning a public plan into a joint plan, and scheduling joint plans.

use thiserror::Error;

use crate::model::{successor, validate_plan, ActionId, AgentId, JointPlan, MAProblem, Verdict};
use crate::search::{gbfs, SearchBudget, SearchFailure, Task, TaskAction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtensionError {
    #[error("action `{0}` in the public plan is not public")]
    NonPublicAction(String),
    #[error("plan is invalid at step {step}")]
    InvalidPlan { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// The owner found no private subplan for the step's preconditions.
    NoSubplan(SearchFailure),
    /// Every step applied, but the final state misses part of the goal.
    GoalUnmet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionFailure {
    /// Index into the public plan; the plan length for a final goal failure.
    pub step: usize,
    pub agent: Option<AgentId>,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extension {
    Complete(JointPlan),
    Failed(ExtensionFailure),
}

impl Extension {
    pub fn plan(&self) -> Option<&JointPlan> {
        match self {
            Extension::Complete(p) => Some(p),
            Extension::Failed(_) => None,
        }
    }
}

/// Walks the public plan, letting each owner insert private actions before its
/// public step. There is no backtracking: the first step that cannot be
/// prepared ends the attempt.
///
/// `budget` is the global budget; every step gets an even share of it.
pub fn extend_public_plan(
    problem: &MAProblem,
    public_plan: &[ActionId],
    budget: SearchBudget,
) -> Result<Extension, ExtensionError> {
    for &id in public_plan {
        let action = problem.action(id);
        if !action.is_public() {
            return Err(ExtensionError::NonPublicAction(action.name.clone()));
        }
    }
    let share = public_plan.len().max(1) as u64;
    let step_budget = SearchBudget::new(
        (budget.max_expansions / share).max(1),
        (budget.wall_clock_ms / share).max(1),
    );

    let private_actions: Vec<Vec<&crate::model::Action>> = problem
        .agent_ids()
        .map(|agent| problem.actions_of(agent).filter(|a| !a.is_public()).collect())
        .collect();

    let mut state = problem.init_state();
    let mut steps = Vec::new();
    for (index, &id) in public_plan.iter().enumerate() {
        let action = problem.action(id);
        if !action.pre.iter().all(|f| state.holds(*f)) {
            let own = &private_actions[action.agent.0];
            let subtask = Task {
                fact_names: problem.facts.iter().map(|f| f.name.clone()).collect(),
                actions: own.iter().map(|a| TaskAction::from(*a)).collect(),
                init: state.clone(),
                goal: action.pre.iter().map(|f| f.0).collect(),
            };
            match gbfs(&subtask, step_budget).result {
                Ok(subplan) => {
                    for i in subplan {
                        state = successor(&state, own[i]);
                        steps.push(own[i].id);
                    }
                }
                Err(failure) => {
                    return Ok(Extension::Failed(ExtensionFailure {
                        step: index,
                        agent: Some(action.agent),
                        reason: FailureReason::NoSubplan(failure),
                    }))
                }
            }
        }
        state = successor(&state, action);
        steps.push(id);
    }
    if !problem.is_goal(&state) {
        return Ok(Extension::Failed(ExtensionFailure {
            step: public_plan.len(),
            agent: None,
            reason: FailureReason::GoalUnmet,
        }));
    }
    let plan = JointPlan::new(steps);
    debug_assert!(validate_plan(problem, &plan).is_valid());
    Ok(Extension::Complete(plan))
}

/// Public steps of a joint plan, in order.
pub fn public_skeleton(problem: &MAProblem, plan: &JointPlan) -> Vec<ActionId> {
    plan.steps
        .iter()
        .copied()
        .filter(|a| problem.action(*a).is_public())
        .collect()
}

fn intersects<T: Ord>(a: &[T], b: &[T]) -> bool {
    a.iter().any(|x| b.binary_search(x).is_ok())
}

/// Greedy parallel schedule: one time slot (starting at 1) per step.
///
/// A step goes strictly after the same agent's previous step, after every
/// earlier step that adds or deletes one of its preconditions, and after every
/// earlier step it interferes with (add/delete overlap either way, or it deletes
/// an earlier step's precondition).
pub fn schedule(problem: &MAProblem, plan: &JointPlan) -> Result<Vec<u32>, ExtensionError> {
    if let Verdict::Invalid { step, .. } = validate_plan(problem, plan) {
        return Err(ExtensionError::InvalidPlan { step });
    }
    let mut slots: Vec<u32> = Vec::with_capacity(plan.len());
    for (i, &id) in plan.steps.iter().enumerate() {
        let a = problem.action(id);
        let mut earliest = 0;
        for (j, &prev_id) in plan.steps[..i].iter().enumerate() {
            let b = problem.action(prev_id);
            let ordered = b.agent == a.agent
                || intersects(&b.add, &a.pre)
                || intersects(&b.del, &a.pre)
                || intersects(&a.add, &b.del)
                || intersects(&a.del, &b.add)
                || intersects(&a.del, &b.pre);
            if ordered {
                earliest = earliest.max(slots[j]);
            }
        }
        slots.push(earliest + 1);
    }
    Ok(slots)
}

pub fn makespan(problem: &MAProblem, plan: &JointPlan) -> Result<u32, ExtensionError> {
    Ok(schedule(problem, plan)?.into_iter().max().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::model::{Action, Fact, FactId, Owner, Visibility};

    fn id(problem: &MAProblem, name: &str) -> ActionId {
        problem.action_by_name(name).unwrap().id
    }

    fn simple(agent: usize, i: usize, name: &str, pre: &[usize], add: &[usize]) -> Action {
        Action {
            id: ActionId(i),
            name: name.into(),
            agent: AgentId(agent),
            pre: pre.iter().map(|&f| FactId(f)).collect(),
            add: add.iter().map(|&f| FactId(f)).collect(),
            del: vec![],
            cost: 1,
            visibility: Visibility::Public,
            visibility_override: None,
        }
    }

    fn two_agents(actions: Vec<Action>, goal: &[usize]) -> MAProblem {
        MAProblem::new(
            "t",
            "t",
            vec!["a".into(), "b".into()],
            (0..3)
                .map(|i| Fact {
                    id: FactId(i),
                    name: format!("p{i}"),
                    owner: Owner::Public,
                })
                .collect(),
            actions,
            vec![],
            goal.iter().map(|&f| FactId(f)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn applicable_public_plan_is_kept_verbatim() {
        let p = two_agents(vec![simple(0, 0, "x", &[], &[0]), simple(1, 1, "y", &[0], &[1])], &[1]);
        let plan = [ActionId(0), ActionId(1)];
        let ext = extend_public_plan(&p, &plan, SearchBudget::default()).unwrap();
        assert_eq!(ext, Extension::Complete(JointPlan::new(plan.to_vec())));
    }

    #[test]
    fn rovers_extension_inserts_moves() {
        let p = corpus::rovers_mini();
        let public = [
            "take r1 c1 b1",
            "take r1 md1 b2",
            "drill r1 rock1",
            "collect-sample r1 rock1",
            "core r1 rock1",
            "take r2 c2 b2",
            "take-image r2 rock2",
        ]
        .map(|n| id(&p, n));
        let Extension::Complete(plan) = extend_public_plan(&p, &public, SearchBudget::default()).unwrap() else {
            panic!("extension failed");
        };
        assert!(validate_plan(&p, &plan).is_valid());
        assert_eq!(public_skeleton(&p, &plan), public.to_vec());
        let names: Vec<_> = plan.steps.iter().map(|a| p.action(*a).name.as_str()).collect();
        assert!(names.iter().any(|n| n.starts_with("move r1")), "{names:?}");
        assert!(names.iter().any(|n| n.starts_with("move r2")), "{names:?}");
    }

    #[test]
    fn optimistic_reuse_fails_at_second_consumer() {
        let p = corpus::flip_mini();
        let public = ["fetch", "use-a", "use-b"].map(|n| id(&p, n));
        let ext = extend_public_plan(&p, &public, SearchBudget::default()).unwrap();
        assert_eq!(
            ext,
            Extension::Failed(ExtensionFailure {
                step: 2,
                agent: p.agent_by_name("crafter"),
                reason: FailureReason::NoSubplan(SearchFailure::Exhausted),
            })
        );
    }

    #[test]
    fn private_actions_are_rejected() {
        let p = corpus::rovers_mini();
        let err = extend_public_plan(&p, &[id(&p, "move r1 rock1 b1")], SearchBudget::default()).unwrap_err();
        assert_eq!(err, ExtensionError::NonPublicAction("move r1 rock1 b1".into()));
    }

    #[test]
    fn makespan_examples() {
        let p = two_agents(vec![simple(0, 0, "x", &[], &[0]), simple(1, 1, "y", &[], &[1])], &[0, 1]);
        assert_eq!(makespan(&p, &JointPlan::default()).unwrap_err(), ExtensionError::InvalidPlan { step: 0 });
        let indep = JointPlan::new(vec![ActionId(0), ActionId(1)]);
        assert_eq!(makespan(&p, &indep).unwrap(), 1);

        let q = two_agents(vec![simple(0, 0, "x", &[], &[0]), simple(1, 1, "y", &[0], &[1])], &[1]);
        let chain = JointPlan::new(vec![ActionId(0), ActionId(1)]);
        assert_eq!(schedule(&q, &chain).unwrap(), vec![1, 2]);

        let r = two_agents(vec![simple(0, 0, "x", &[], &[0])], &[]);
        assert_eq!(makespan(&r, &JointPlan::default()).unwrap(), 0);
    }

    #[test]
    fn single_agent_plans_are_sequential() {
        let p = two_agents(vec![simple(0, 0, "x", &[], &[0]), simple(0, 1, "y", &[], &[1])], &[0, 1]);
        let plan = JointPlan::new(vec![ActionId(0), ActionId(1)]);
        assert_eq!(makespan(&p, &plan).unwrap(), 2);
    }
}
