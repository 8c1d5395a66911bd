//! Problems bundled with the crate.

use crate::io::parse_problem;
use crate::model::MAProblem;

pub const ROVERS_MINI: &str = include_str!("../corpus/rovers-mini.maps.json");
pub const FLIP_MINI: &str = include_str!("../corpus/flip-mini.maps.json");

/// Two rovers; the first juggles a camera, a mineral detector and its storage.
pub fn rovers_mini() -> MAProblem {
    parse_problem(ROVERS_MINI).expect("bundled problem parses")
}

/// A crafter whose single private token is consumed by either of two public
/// actions, next to a helper that reaches both goals by a longer public route.
pub fn flip_mini() -> MAProblem {
    parse_problem(FLIP_MINI).expect("bundled problem parses")
}

/// Name and contents of every bundled problem.
pub fn all() -> Vec<(&'static str, MAProblem)> {
    vec![("rovers-mini", rovers_mini()), ("flip-mini", flip_mini())]
}
