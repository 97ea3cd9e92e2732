use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::raft::NodeId;
use crate::SimTime;

use super::SimError;

/// Undirected link, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link(pub NodeId, pub NodeId);

impl Link {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Link(a, b)
        } else {
            Link(b, a)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fault {
    Crash { node: usize },
    Recover { node: usize },
    /// Cuts exactly these links; any previously cut link not listed heals.
    Partition { links: Vec<[usize; 2]> },
}

impl Fault {
    /// Cuts every link touching `node` in a cluster of `n`.
    pub fn isolate(node: usize, n: usize) -> Fault {
        Fault::Partition { links: (0..n).filter(|&j| j != node).map(|j| [node, j]).collect() }
    }

    pub fn heal() -> Fault {
        Fault::Partition { links: Vec::new() }
    }

    pub(crate) fn cut_set(links: &[[usize; 2]]) -> BTreeSet<Link> {
        links.iter().map(|&[a, b]| Link::new(NodeId(a), NodeId(b))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultDirective {
    /// Simulated time, in milliseconds from the start of the run.
    pub at_ms: u64,
    #[serde(flatten)]
    pub fault: Fault,
}

impl FaultDirective {
    pub fn at(&self) -> SimTime {
        SimTime::from_millis(self.at_ms)
    }
}

/// Time-ordered list of fault directives.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSchedule {
    #[serde(default, rename = "fault")]
    pub directives: Vec<FaultDirective>,
}

impl FaultSchedule {
    /// Sorts by time (stable) and checks every node reference and that each
    /// recover follows a crash of the same node.
    pub fn new(mut directives: Vec<FaultDirective>, cluster_size: usize) -> Result<Self, SimError> {
        directives.sort_by_key(|d| d.at_ms);
        let mut down: BTreeMap<usize, bool> = BTreeMap::new();
        for d in &directives {
            let check = |node: usize| {
                if node < cluster_size {
                    Ok(())
                } else {
                    Err(SimError::Config {
                        field: "faults".into(),
                        reason: format!("node {node} outside cluster of {cluster_size}"),
                    })
                }
            };
            match &d.fault {
                Fault::Crash { node } => {
                    check(*node)?;
                    down.insert(*node, true);
                }
                Fault::Recover { node } => {
                    check(*node)?;
                    if !down.get(node).copied().unwrap_or(false) {
                        return Err(SimError::Config {
                            field: "faults".into(),
                            reason: format!("recover of node {node} at {} ms without a preceding crash", d.at_ms),
                        });
                    }
                    down.insert(*node, false);
                }
                Fault::Partition { links } => {
                    for &[a, b] in links {
                        check(a)?;
                        check(b)?;
                    }
                }
            }
        }
        Ok(FaultSchedule { directives })
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }
}
