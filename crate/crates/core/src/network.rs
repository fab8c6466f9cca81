//! Neighborhood graphs and a synchronous, audited message substrate.
//!
//! Agents only learn about each other through [`Network::exchange`], which
//! rejects messages that do not follow an `N_i ∪ P_i` edge and records every
//! delivery for later auditing.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;

/// Time-invariant neighbor sets. `N_i` and `P_i` are stored self first,
/// then ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodGraph {
    neighbors: Vec<Vec<usize>>,
    neighbor_of: Vec<Vec<usize>>,
}

fn canonical(i: usize, mut set: Vec<usize>) -> Vec<usize> {
    set.retain(|&j| j != i);
    set.sort_unstable();
    set.dedup();
    set.insert(0, i);
    set
}

impl NeighborhoodGraph {
    /// Takes `adjacency[i]` as `N_i` (self loops added).
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Result<Self, NetworkError> {
        let m = adjacency.len();
        if m == 0 {
            return Err(NetworkError::InvalidGraph("empty agent set".into()));
        }
        if let Some(bad) = adjacency.iter().flatten().find(|&&j| j >= m) {
            return Err(NetworkError::InvalidGraph(format!(
                "neighbor id {bad} out of range for {m} agents"
            )));
        }
        let neighbors: Vec<Vec<usize>> = adjacency
            .into_iter()
            .enumerate()
            .map(|(i, s)| canonical(i, s))
            .collect();
        let mut neighbor_of = vec![Vec::new(); m];
        for (i, n) in neighbors.iter().enumerate() {
            for &j in n {
                neighbor_of[j].push(i);
            }
        }
        let neighbor_of = neighbor_of
            .into_iter()
            .enumerate()
            .map(|(i, s)| canonical(i, s))
            .collect();
        let g = Self {
            neighbors,
            neighbor_of,
        };
        g.check_consistency()?;
        Ok(g)
    }

    /// Every agent neighbors every other.
    pub fn all(m: usize) -> Result<Self, NetworkError> {
        Self::from_adjacency((0..m).map(|_| (0..m).collect()).collect())
    }

    /// `j ∈ N_i` iff `‖p_i − p_j‖ ≤ radius`; with `max_size`, keeps only the
    /// nearest `max_size` (self included), ties broken by ascending id.
    pub fn from_positions(
        positions: &[DVector<f64>],
        radius: Option<f64>,
        max_size: Option<usize>,
    ) -> Result<Self, NetworkError> {
        if positions.is_empty() {
            return Err(NetworkError::InvalidGraph("empty agent set".into()));
        }
        if let Some(r) = radius {
            if !(r > 0.0) {
                return Err(NetworkError::InvalidGraph("radius must be positive".into()));
            }
        }
        if max_size == Some(0) {
            return Err(NetworkError::InvalidGraph(
                "neighborhood size must be at least 1".into(),
            ));
        }
        let adjacency = positions
            .iter()
            .enumerate()
            .map(|(i, pi)| {
                let mut cand: Vec<(f64, usize)> = positions
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, pj)| ((pi - pj).norm(), j))
                    .filter(|&(d, _)| radius.is_none_or(|r| d <= r))
                    .collect();
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if let Some(k) = max_size {
                    cand.truncate(k - 1);
                }
                cand.into_iter().map(|(_, j)| j).collect()
            })
            .collect();
        Self::from_adjacency(adjacency)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// `N_i`, self first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `P_i = {j : i ∈ N_j}`, self first.
    pub fn neighbor_of(&self, i: usize) -> &[usize] {
        &self.neighbor_of[i]
    }

    /// Position of `j` inside `N_i`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors[i].iter().position(|&x| x == j)
    }

    /// True when `from` may send to `to`.
    pub fn is_edge(&self, from: usize, to: usize) -> bool {
        from < self.len()
            && to < self.len()
            && (self.neighbors[to].contains(&from) || self.neighbor_of[to].contains(&from))
    }

    /// Verifies `j ∈ P_i ⇔ i ∈ N_j` and self membership.
    pub fn check_consistency(&self) -> Result<(), NetworkError> {
        let m = self.len();
        for i in 0..m {
            if self.neighbors[i].first() != Some(&i) || self.neighbor_of[i].first() != Some(&i) {
                return Err(NetworkError::InvalidGraph(format!(
                    "agent {i} missing from its own sets"
                )));
            }
            for j in 0..m {
                if self.neighbor_of[i].contains(&j) != self.neighbors[j].contains(&i) {
                    return Err(NetworkError::InvalidGraph(format!(
                        "P_{i} and N_{j} disagree"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of directed non-self edges, `Σ_i (|N_i| − 1)`.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(|n| n.len() - 1).sum()
    }
}

/// Communication rounds of one iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    WarmstartShare,
    ReferenceShare,
    CopiesToOwner,
    GlobalsToNeighbors,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::WarmstartShare => "warmstart_share",
            Phase::ReferenceShare => "reference_share",
            Phase::CopiesToOwner => "copies_to_owner",
            Phase::GlobalsToNeighbors => "globals_to_neighbors",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Trajectory,
    Copy,
    Global,
    Dual,
}

impl PayloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::Trajectory => "trajectory",
            PayloadKind::Copy => "copy",
            PayloadKind::Global => "global",
            PayloadKind::Dual => "dual",
        }
    }
}

/// Anything that can travel through the network.
pub trait Payload: Clone + Send + Sync {
    fn byte_size(&self) -> usize;
}

impl Payload for Vec<DVector<f64>> {
    fn byte_size(&self) -> usize {
        self.iter().map(|v| v.len() * 8).sum()
    }
}

impl<A: Payload, B: Payload> Payload for (A, B) {
    fn byte_size(&self) -> usize {
        self.0.byte_size() + self.1.byte_size()
    }
}

impl<A: Payload> Payload for Option<A> {
    fn byte_size(&self) -> usize {
        self.as_ref().map_or(0, Payload::byte_size)
    }
}

impl Payload for DVector<f64> {
    fn byte_size(&self) -> usize {
        self.len() * 8
    }
}

/// One audited delivery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub sender: usize,
    pub receiver: usize,
    pub kind: PayloadKind,
    pub bytes: usize,
}

/// Outgoing message `(receiver, payload)`.
pub type Outgoing<T> = Vec<(usize, T)>;
/// Delivered message `(sender, payload)`, sorted by sender.
pub type Inbound<T> = Vec<(usize, T)>;

/// Synchronous barrier exchange over a fixed graph.
#[derive(Debug, Clone)]
pub struct Network {
    graph: NeighborhoodGraph,
    log: Vec<MessageRecord>,
    iteration: usize,
}

impl Network {
    pub fn new(graph: NeighborhoodGraph) -> Self {
        Self {
            graph,
            log: Vec::new(),
            iteration: 0,
        }
    }

    pub fn graph(&self) -> &NeighborhoodGraph {
        &self.graph
    }

    pub fn set_iteration(&mut self, iteration: usize) {
        self.iteration = iteration;
    }

    pub fn log(&self) -> &[MessageRecord] {
        &self.log
    }

    /// Delivers `outgoing[i]` from every agent `i`. All sends are validated
    /// before anything is delivered; inbound lists are sorted by sender.
    pub fn exchange<T: Payload>(
        &mut self,
        phase: Phase,
        kind: PayloadKind,
        outgoing: Vec<Outgoing<T>>,
    ) -> Result<Vec<Inbound<T>>, NetworkError> {
        let m = self.graph.len();
        if outgoing.len() != m {
            return Err(NetworkError::InvalidGraph(format!(
                "{} outboxes for {m} agents",
                outgoing.len()
            )));
        }
        for (from, out) in outgoing.iter().enumerate() {
            for (to, _) in out {
                if *to == from || !self.graph.is_edge(from, *to) {
                    return Err(NetworkError::NonEdge { from, to: *to });
                }
            }
        }
        let mut inbound: Vec<Inbound<T>> = vec![Vec::new(); m];
        for (from, out) in outgoing.into_iter().enumerate() {
            for (to, payload) in out {
                self.log.push(MessageRecord {
                    iteration: self.iteration,
                    phase,
                    sender: from,
                    receiver: to,
                    kind,
                    bytes: payload.byte_size(),
                });
                inbound[to].push((from, payload));
            }
        }
        for list in &mut inbound {
            list.sort_by_key(|(s, _)| *s);
        }
        Ok(inbound)
    }

    /// Sends one payload from each agent to every `j ∈ P_i \ {i}`.
    pub fn broadcast_to_dependents<T: Payload>(
        &mut self,
        phase: Phase,
        kind: PayloadKind,
        payloads: &[T],
    ) -> Result<Vec<Inbound<T>>, NetworkError> {
        let outgoing = (0..self.graph.len())
            .map(|i| {
                self.graph.neighbor_of(i)[1..]
                    .iter()
                    .map(|&j| (j, payloads[i].clone()))
                    .collect()
            })
            .collect();
        self.exchange(phase, kind, outgoing)
    }

    /// Count of logged messages that do not follow a graph edge.
    pub fn non_edge_messages(&self) -> usize {
        self.log
            .iter()
            .filter(|r| !self.graph.is_edge(r.sender, r.receiver) || r.sender == r.receiver)
            .count()
    }

    /// Writes the audit log as CSV.
    pub fn write_log<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        write_message_log(&self.log, w)
    }
}

/// Writes message records as CSV.
pub fn write_message_log<W: Write>(log: &[MessageRecord], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iteration", "phase", "sender", "receiver", "kind", "bytes"])?;
    for r in log {
        wr.write_record([
            r.iteration.to_string(),
            r.phase.as_str().to_string(),
            r.sender.to_string(),
            r.receiver.to_string(),
            r.kind.as_str().to_string(),
            r.bytes.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Finds the payload from `sender` in an inbound list.
pub fn take_from<T: Clone>(
    inbound: &Inbound<T>,
    sender: usize,
    receiver: usize,
) -> Result<T, NetworkError> {
    inbound
        .binary_search_by_key(&sender, |(s, _)| *s)
        .map(|idx| inbound[idx].1.clone())
        .map_err(|_| {
            NetworkError::InvalidGraph(format!("missing payload from {sender} at {receiver}"))
        })
}
