//! Problem documents, DOT export of dependency graphs, and experiment CSV.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dependency::{DependencyGraph, Producer};
use crate::disclosure::{DisclosureSet, Strategy};
use crate::model::{Action, ActionId, AgentId, Fact, FactId, MAProblem, ModelError, Owner, Visibility};
use crate::projection::Projection;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_to: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibilityEntry {
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionEntry {
    pub name: String,
    pub agent: String,
    #[serde(default)]
    pub pre: Vec<String>,
    #[serde(default)]
    pub add: Vec<String>,
    #[serde(default)]
    pub del: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<VisibilityEntry>,
}

/// The on-disk shape of a grounded problem (`.maps.json`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub problem: String,
    pub agents: Vec<String>,
    pub facts: Vec<FactEntry>,
    #[serde(default)]
    pub init: Vec<String>,
    #[serde(default)]
    pub goal: Vec<String>,
    #[serde(default)]
    pub actions: Vec<ActionEntry>,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{kind} `{name}` is not declared")]
    Undeclared { kind: &'static str, name: String },
    #[error("{kind} `{name}` is declared twice")]
    Duplicate { kind: &'static str, name: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IoError {
    /// True for errors about the meaning of a well-formed document.
    pub fn is_semantic(&self) -> bool {
        !matches!(self, IoError::Parse { .. })
    }
}

fn index<'a>(kind: &'static str, names: impl Iterator<Item = &'a str>) -> Result<HashMap<&'a str, usize>, IoError> {
    let mut map = HashMap::new();
    for (i, name) in names.enumerate() {
        if map.insert(name, i).is_some() {
            return Err(IoError::Duplicate {
                kind,
                name: name.to_string(),
            });
        }
    }
    Ok(map)
}

fn lookup(map: &HashMap<&str, usize>, kind: &'static str, name: &str) -> Result<usize, IoError> {
    map.get(name).copied().ok_or_else(|| IoError::Undeclared {
        kind,
        name: name.to_string(),
    })
}

pub fn problem_from_document(doc: &ProblemDocument) -> Result<MAProblem, IoError> {
    let agents = index("agent", doc.agents.iter().map(String::as_str))?;
    let fact_ids = index("fact", doc.facts.iter().map(|f| f.name.as_str()))?;
    index("action", doc.actions.iter().map(|a| a.name.as_str()))?;

    let facts_of = |names: &[String]| -> Result<Vec<FactId>, IoError> {
        names.iter().map(|n| lookup(&fact_ids, "fact", n).map(FactId)).collect()
    };

    let mut facts = Vec::with_capacity(doc.facts.len());
    for (i, entry) in doc.facts.iter().enumerate() {
        let owner = match &entry.private_to {
            None => Owner::Public,
            Some(agent) => Owner::PrivateTo(AgentId(lookup(&agents, "agent", agent)?)),
        };
        facts.push(Fact {
            id: FactId(i),
            name: entry.name.clone(),
            owner,
        });
    }

    let mut actions = Vec::with_capacity(doc.actions.len());
    for (i, entry) in doc.actions.iter().enumerate() {
        let visibility_override = entry.visibility.map(|v| match v {
            VisibilityEntry::Public => Visibility::Public,
            VisibilityEntry::Private => Visibility::Private,
        });
        actions.push(Action {
            id: ActionId(i),
            name: entry.name.clone(),
            agent: AgentId(lookup(&agents, "agent", &entry.agent)?),
            pre: facts_of(&entry.pre)?,
            add: facts_of(&entry.add)?,
            del: facts_of(&entry.del)?,
            cost: entry.cost.unwrap_or(1),
            visibility: Visibility::Private,
            visibility_override,
        });
    }

    Ok(MAProblem::new(
        doc.domain.clone(),
        doc.problem.clone(),
        doc.agents.clone(),
        facts,
        actions,
        facts_of(&doc.init)?,
        facts_of(&doc.goal)?,
    )?)
}

/// Parses a problem document; ids follow declaration order.
pub fn parse_problem(text: &str) -> Result<MAProblem, IoError> {
    let doc: ProblemDocument = serde_json::from_str(text).map_err(|e| IoError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    problem_from_document(&doc)
}

pub fn problem_to_document(problem: &MAProblem) -> ProblemDocument {
    let names = |ids: &[FactId]| ids.iter().map(|f| problem.fact(*f).name.clone()).collect();
    ProblemDocument {
        domain: problem.domain.clone(),
        problem: problem.name.clone(),
        agents: problem.agents.clone(),
        facts: problem
            .facts
            .iter()
            .map(|f| FactEntry {
                name: f.name.clone(),
                private_to: match f.owner {
                    Owner::Public => None,
                    Owner::PrivateTo(a) => Some(problem.agents[a.0].clone()),
                },
            })
            .collect(),
        init: names(&problem.init),
        goal: names(&problem.goal),
        actions: problem
            .actions
            .iter()
            .map(|a| ActionEntry {
                name: a.name.clone(),
                agent: problem.agents[a.agent.0].clone(),
                pre: names(&a.pre),
                add: names(&a.add),
                del: names(&a.del),
                cost: (a.cost != 1).then_some(a.cost),
                visibility: a.visibility_override.map(|v| match v {
                    Visibility::Public => VisibilityEntry::Public,
                    Visibility::Private => VisibilityEntry::Private,
                }),
            })
            .collect(),
    }
}

pub fn serialize_problem(problem: &MAProblem) -> String {
    let mut text = serde_json::to_string_pretty(&problem_to_document(problem)).expect("documents always serialize");
    text.push('\n');
    text
}

/// Writes a projection as a single-agent document. Only public and artificial
/// fact names appear in it.
pub fn projection_to_document(problem: &MAProblem, projection: &Projection) -> ProblemDocument {
    let task = &projection.task;
    let names = |ids: &[usize]| ids.iter().map(|&i| task.fact_names[i].clone()).collect();
    ProblemDocument {
        domain: problem.domain.clone(),
        problem: format!("{}-projection", problem.name),
        agents: vec!["projection".into()],
        facts: task
            .fact_names
            .iter()
            .map(|n| FactEntry {
                name: n.clone(),
                private_to: None,
            })
            .collect(),
        init: names(&task.init.iter().collect::<Vec<_>>()),
        goal: names(&task.goal),
        actions: task
            .actions
            .iter()
            .map(|a| ActionEntry {
                name: a.name.clone(),
                agent: "projection".into(),
                pre: names(&a.pre),
                add: names(&a.add),
                del: names(&a.del),
                cost: (a.cost != 1).then_some(a.cost),
                visibility: None,
            })
            .collect(),
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT rendering of one agent's dependency graph in four ranked columns:
/// producers, artificial facts, consumers, public facts.
pub fn export_dependency_graph_dot(problem: &MAProblem, graph: &DependencyGraph, disclosed: &DisclosureSet) -> String {
    let producer_node = |p: Producer| match p {
        Producer::Action(a) => format!("p_{}", a.0),
        Producer::DummyInit => "p_init".to_string(),
    };
    let mut producers: Vec<Producer> = Vec::new();
    for edge in &graph.edges {
        if !producers.contains(&edge.producer) {
            producers.push(edge.producer);
        }
    }
    let consumers: BTreeSet<ActionId> = graph.consumer_public_effects.keys().copied().collect();
    let public: BTreeSet<FactId> = graph.consumer_public_effects.values().flatten().copied().collect();

    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&format!("dependencies_{}", problem.agents[graph.agent.0])));
    out.push_str("  rankdir=LR;\n  node [shape=box];\n");

    out.push_str("  { rank=same;\n");
    for p in &producers {
        let label = match p {
            Producer::Action(a) => problem.action(*a).name.clone(),
            Producer::DummyInit => "dummy-init".to_string(),
        };
        let _ = writeln!(out, "    {} [label={}];", producer_node(*p), quote(&label));
    }
    out.push_str("  }\n  { rank=same;\n");
    for f in &graph.artificial_facts {
        let _ = writeln!(out, "    {} [label={}, shape=ellipse, color=blue];", f.id, quote(&f.id.to_string()));
    }
    out.push_str("  }\n  { rank=same;\n");
    for c in &consumers {
        let _ = writeln!(out, "    c_{} [label={}];", c.0, quote(&problem.action(*c).name));
    }
    out.push_str("  }\n  { rank=same;\n");
    for f in &public {
        let _ = writeln!(
            out,
            "    f_{} [label={}, shape=ellipse, color=purple];",
            f.0,
            quote(&problem.fact(*f).name)
        );
    }
    out.push_str("  }\n");

    for edge in &graph.edges {
        let style = if disclosed.contains(edge.id) { "solid" } else { "dashed" };
        let _ = writeln!(
            out,
            "  {} -> {} [color=black, style={style}, label={}];",
            producer_node(edge.producer),
            edge.fact,
            quote(&edge.id.to_string())
        );
    }
    for f in &graph.artificial_facts {
        for c in &f.consumers {
            let _ = writeln!(out, "  {} -> c_{} [color=blue];", f.id, c.0);
        }
    }
    for (c, effects) in &graph.consumer_public_effects {
        for f in effects {
            let _ = writeln!(out, "  c_{} -> f_{} [color=purple];", c.0, f.0);
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Projection,
    Mafs,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Projection => "projection",
            Solver::Mafs => "mafs",
        })
    }
}

impl std::str::FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "projection" => Ok(Solver::Projection),
            "mafs" => Ok(Solver::Mafs),
            other => Err(format!("unknown solver `{other}`")),
        }
    }
}

/// One row of experiment output. `makespan` is the greedy scheduler's value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub domain: String,
    pub problem: String,
    pub solver: Solver,
    pub strategy: Strategy,
    pub round: usize,
    pub disclosed_edges: usize,
    pub total_edges: usize,
    pub solved: bool,
    pub plan_length: Option<usize>,
    pub makespan: Option<u32>,
    pub hindsight: Option<usize>,
    pub wall_ms: u64,
    pub seed: u64,
}

pub fn write_experiment_csv(records: &[ExperimentRecord]) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer
        .write_record([
            "domain",
            "problem",
            "solver",
            "strategy",
            "round",
            "disclosed_edges",
            "total_edges",
            "solved",
            "plan_length",
            "makespan",
            "hindsight",
            "wall_ms",
            "seed",
        ])
        .expect("writing to memory");
    for record in records {
        writer.serialize(record).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
}
