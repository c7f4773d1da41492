use serde::{Deserialize, Serialize};

use super::ScmError;

/// Directed acyclic graph stored as parent lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct Dag {
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Dag {
    pub fn new(parents: Vec<Vec<usize>>) -> Result<Self, ScmError> {
        let n = parents.len();
        for (i, ps) in parents.iter().enumerate() {
            for &p in ps {
                if p >= n {
                    return Err(ScmError::InvalidDag(format!(
                        "node {i} has parent {p} outside 0..{n}"
                    )));
                }
                if p == i {
                    return Err(ScmError::InvalidDag(format!("node {i} is its own parent")));
                }
            }
            let mut sorted = ps.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(ScmError::InvalidDag(format!("node {i} lists a parent twice")));
            }
        }
        let order = kahn(&parents)
            .ok_or_else(|| ScmError::InvalidDag("graph contains a cycle".into()))?;
        Ok(Self { parents, order })
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    /// Topological order; ties go to the smallest index.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }
}

fn kahn(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (i, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(i);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

impl TryFrom<Vec<Vec<usize>>> for Dag {
    type Error = ScmError;

    fn try_from(parents: Vec<Vec<usize>>) -> Result<Self, ScmError> {
        Self::new(parents)
    }
}

impl From<Dag> for Vec<Vec<usize>> {
    fn from(d: Dag) -> Self {
        d.parents
    }
}
