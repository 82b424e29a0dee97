//! Agent interconnection graphs with special-agent annotations.
//!
//! Graphs are undirected and irreflexive. Two annotation lists mark special
//! agents: `disconnected` agents keep no edges (they only ever self-train),
//! and `empty` agents hold no local data (they learn purely by aggregating
//! neighbor parameters). The role of every agent follows from those two sets.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Index of one agent, dense in `0..total_agents`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for AgentId {
    fn from(id: usize) -> Self {
        AgentId(id)
    }
}

/// Behavioral role of an agent.
///
/// `Regular` agents are connected and hold data. `Disconnected` agents hold
/// data but no edges, so they self-train. `Empty` agents are connected but
/// hold no data, so they can only learn by aggregation. `EmptyDisconnected`
/// agents have neither and act as frozen controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Regular,
    Disconnected,
    Empty,
    EmptyDisconnected,
}

impl Role {
    pub fn of(has_data: bool, is_connected: bool) -> Role {
        match (has_data, is_connected) {
            (true, true) => Role::Regular,
            (true, false) => Role::Disconnected,
            (false, true) => Role::Empty,
            (false, false) => Role::EmptyDisconnected,
        }
    }

    /// Short code used in metrics files: R, D, E or ED.
    pub fn code(self) -> &'static str {
        match self {
            Role::Regular => "R",
            Role::Disconnected => "D",
            Role::Empty => "E",
            Role::EmptyDisconnected => "ED",
        }
    }

    pub fn is_connected(self) -> bool {
        matches!(self, Role::Regular | Role::Empty)
    }

    pub fn has_data(self) -> bool {
        matches!(self, Role::Regular | Role::Disconnected)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R" => Ok(Role::Regular),
            "D" => Ok(Role::Disconnected),
            "E" => Ok(Role::Empty),
            "ED" => Ok(Role::EmptyDisconnected),
            other => Err(format!("unknown role code `{other}`")),
        }
    }
}

/// One agent's identity, role, and data/connectivity flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentProfile {
    pub id: AgentId,
    pub role: Role,
    pub has_data: bool,
    pub is_connected: bool,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("agent count must be at least 2, got {0}")]
    TooFewAgents(usize),
    #[error("degree {degree} out of range for {agents} agents")]
    DegreeOutOfRange { degree: usize, agents: usize },
    #[error("odd degree {0} is only valid as the fully connected terminal case")]
    OddDegree(usize),
    #[error("agent id {id} out of range for {agents} agents")]
    IdOutOfRange { id: usize, agents: usize },
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("cannot shrink topology from {from} to {to} agents")]
    Shrink { from: usize, to: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected agent graph plus the two special-agent sets.
///
/// Edges are stored as ordered pairs `(a, b)` with `a < b`, which makes
/// symmetry structural and self-loops unrepresentable once validated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    total_agents: usize,
    edges: BTreeSet<(AgentId, AgentId)>,
    disconnected: BTreeSet<AgentId>,
    empty: BTreeSet<AgentId>,
    pub label: String,
}

impl Topology {
    /// Edgeless topology on `total_agents` agents.
    pub fn new(total_agents: usize, label: impl Into<String>) -> Topology {
        Topology {
            total_agents,
            edges: BTreeSet::new(),
            disconnected: BTreeSet::new(),
            empty: BTreeSet::new(),
            label: label.into(),
        }
    }

    pub fn total_agents(&self) -> usize {
        self.total_agents
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(a, b)` pairs with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn disconnected(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.disconnected.iter().copied()
    }

    pub fn empty(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.empty.iter().copied()
    }

    pub fn disconnected_count(&self) -> usize {
        self.disconnected.len()
    }

    /// Agents not in the disconnected list.
    pub fn connected_count(&self) -> usize {
        self.total_agents - self.disconnected.len()
    }

    fn check_id(&self, id: AgentId) -> Result<(), TopologyError> {
        if id.0 >= self.total_agents {
            return Err(TopologyError::IdOutOfRange {
                id: id.0,
                agents: self.total_agents,
            });
        }
        Ok(())
    }

    /// Insert the undirected edge `{a, b}`. Duplicates are ignored.
    pub fn add_edge(&mut self, a: AgentId, b: AgentId) -> Result<(), TopologyError> {
        self.check_id(a)?;
        self.check_id(b)?;
        if a == b {
            return Err(TopologyError::SelfLoop(a.0));
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.insert((lo, hi));
        Ok(())
    }

    pub fn contains_edge(&self, a: AgentId, b: AgentId) -> bool {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&(lo, hi))
    }

    /// Neighbors of `a` in ascending id order.
    pub fn neighbors(&self, a: AgentId) -> Vec<AgentId> {
        let mut out: Vec<AgentId> = self
            .edges
            .iter()
            .filter_map(|&(x, y)| {
                if x == a {
                    Some(y)
                } else if y == a {
                    Some(x)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }

    pub fn degree(&self, a: AgentId) -> usize {
        self.edges
            .iter()
            .filter(|&&(x, y)| x == a || y == a)
            .count()
    }

    pub fn is_connected(&self, a: AgentId) -> bool {
        !self.disconnected.contains(&a)
    }

    pub fn has_data(&self, a: AgentId) -> bool {
        !self.empty.contains(&a)
    }

    pub fn role(&self, a: AgentId) -> Role {
        Role::of(self.has_data(a), self.is_connected(a))
    }

    /// Profiles for all agents in id order.
    pub fn profiles(&self) -> Vec<AgentProfile> {
        (0..self.total_agents)
            .map(|i| {
                let id = AgentId(i);
                AgentProfile {
                    id,
                    role: self.role(id),
                    has_data: self.has_data(id),
                    is_connected: self.is_connected(id),
                }
            })
            .collect()
    }

    /// Grow the agent count, e.g. to append isolated agents after a generated
    /// core graph. Shrinking is rejected.
    pub fn grow_to(mut self, total_agents: usize) -> Result<Topology, TopologyError> {
        if total_agents < self.total_agents {
            return Err(TopologyError::Shrink {
                from: self.total_agents,
                to: total_agents,
            });
        }
        self.total_agents = total_agents;
        Ok(self)
    }

    /// Attach the special-agent sets. Any edge incident to a disconnected
    /// agent is removed so that disconnected agents end with degree 0.
    pub fn annotate(
        &self,
        disconnected: &[AgentId],
        empty: &[AgentId],
    ) -> Result<Topology, TopologyError> {
        for &id in disconnected.iter().chain(empty) {
            self.check_id(id)?;
        }
        let disconnected: BTreeSet<AgentId> = disconnected.iter().copied().collect();
        let empty: BTreeSet<AgentId> = empty.iter().copied().collect();
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|(a, b)| !disconnected.contains(a) && !disconnected.contains(b))
            .collect();
        Ok(Topology {
            total_agents: self.total_agents,
            edges,
            disconnected,
            empty,
            label: self.label.clone(),
        })
    }

    /// Serialize to the line-oriented topology text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.label.is_empty() {
            out.push_str(&format!("# label: {}\n", self.label));
        }
        out.push_str(&format!("agents {}\n", self.total_agents));
        out.push_str(&format!(
            "disconnected {}\n",
            fmt_id_set(&self.disconnected)
        ));
        out.push_str(&format!("empty {}\n", fmt_id_set(&self.empty)));
        for (a, b) in &self.edges {
            out.push_str(&format!("edge {} {}\n", a, b));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TopologyError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Parse the text format. `origin` is used in error messages; `label` is
    /// the fallback when the text carries no `# label:` comment.
    pub fn from_text(text: &str, origin: &str, label: &str) -> Result<Topology, TopologyError> {
        let parse_err = |line: usize, msg: String| TopologyError::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut label = label.to_string();
        let mut total: Option<usize> = None;
        let mut disconnected: Option<Vec<AgentId>> = None;
        let mut empty: Option<Vec<AgentId>> = None;
        let mut edges: BTreeSet<(AgentId, AgentId)> = BTreeSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            if let Some(rest) = raw.trim().strip_prefix("# label:") {
                label = rest.trim().to_string();
                continue;
            }
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_ascii_whitespace();
            let keyword = fields.next().unwrap();
            let rest: Vec<&str> = fields.collect();
            match keyword {
                "agents" => {
                    if total.is_some() {
                        return Err(parse_err(lineno, "duplicate `agents` line".into()));
                    }
                    let n: usize = parse_field(&rest, 0, "agent count", lineno, origin)?;
                    if rest.len() != 1 {
                        return Err(parse_err(lineno, "expected `agents <m>`".into()));
                    }
                    total = Some(n);
                }
                "disconnected" | "empty" => {
                    let total = total
                        .ok_or_else(|| parse_err(lineno, format!("`{keyword}` before `agents`")))?;
                    let ids = parse_id_list(&rest, total, lineno, origin)?;
                    let slot = if keyword == "disconnected" {
                        &mut disconnected
                    } else {
                        &mut empty
                    };
                    if slot.is_some() {
                        return Err(parse_err(lineno, format!("duplicate `{keyword}` line")));
                    }
                    *slot = Some(ids);
                }
                "edge" => {
                    let total =
                        total.ok_or_else(|| parse_err(lineno, "`edge` before `agents`".into()))?;
                    if rest.len() != 2 {
                        return Err(parse_err(lineno, "expected `edge <a> <b>`".into()));
                    }
                    let a: usize = parse_field(&rest, 0, "edge endpoint", lineno, origin)?;
                    let b: usize = parse_field(&rest, 1, "edge endpoint", lineno, origin)?;
                    if a == b {
                        return Err(parse_err(lineno, format!("self-loop on agent {a}")));
                    }
                    if a >= total || b >= total {
                        return Err(parse_err(
                            lineno,
                            format!("edge {a} {b} references an agent >= {total}"),
                        ));
                    }
                    let pair = (AgentId(a.min(b)), AgentId(a.max(b)));
                    if !edges.insert(pair) {
                        return Err(parse_err(lineno, format!("duplicate edge {a} {b}")));
                    }
                }
                other => {
                    return Err(parse_err(lineno, format!("unknown keyword `{other}`")));
                }
            }
        }

        let total = total
            .ok_or_else(|| parse_err(text.lines().count() + 1, "missing `agents` line".into()))?;
        let topo = Topology {
            total_agents: total,
            edges,
            disconnected: disconnected.unwrap_or_default().into_iter().collect(),
            empty: empty.unwrap_or_default().into_iter().collect(),
            label,
        };
        // Disconnected agents must not retain edges.
        for &(a, b) in &topo.edges {
            for id in [a, b] {
                if topo.disconnected.contains(&id) {
                    return Err(TopologyError::Parse {
                        path: origin.to_string(),
                        line: 0,
                        msg: format!("disconnected agent {id} has an edge ({a} {b})"),
                    });
                }
            }
        }
        Ok(topo)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Topology, TopologyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let fallback = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Topology::from_text(&text, &path.display().to_string(), &fallback)
    }
}

fn fmt_id_set(set: &BTreeSet<AgentId>) -> String {
    if set.is_empty() {
        "-".to_string()
    } else {
        set.iter()
            .map(|id| id.0.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn parse_field<T: FromStr>(
    fields: &[&str],
    idx: usize,
    what: &str,
    line: usize,
    origin: &str,
) -> Result<T, TopologyError> {
    fields
        .get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| TopologyError::Parse {
            path: origin.to_string(),
            line,
            msg: format!("invalid or missing {what}"),
        })
}

fn parse_id_list(
    fields: &[&str],
    total: usize,
    line: usize,
    origin: &str,
) -> Result<Vec<AgentId>, TopologyError> {
    if fields == ["-"] || fields.is_empty() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::with_capacity(fields.len());
    for f in fields {
        let id: usize = f.parse().map_err(|_| TopologyError::Parse {
            path: origin.to_string(),
            line,
            msg: format!("invalid agent id `{f}`"),
        })?;
        if id >= total {
            return Err(TopologyError::Parse {
                path: origin.to_string(),
                line,
                msg: format!("agent id {id} out of range for {total} agents"),
            });
        }
        ids.push(AgentId(id));
    }
    Ok(ids)
}

/// Ring-lattice generator: each of the `m` agents is adjacent to the
/// `degree / 2` nearest agents on each side of a circular ordering by id.
/// `degree = m - 1` yields the complete graph (the only case where an odd
/// degree is accepted); intermediate degrees must be even because each sweep
/// step adds one neighbor per side.
pub fn ring_k(m: usize, degree: usize) -> Result<Topology, TopologyError> {
    if m < 2 {
        return Err(TopologyError::TooFewAgents(m));
    }
    if degree > m - 1 {
        return Err(TopologyError::DegreeOutOfRange { degree, agents: m });
    }
    if degree % 2 == 1 && degree != m - 1 {
        return Err(TopologyError::OddDegree(degree));
    }
    let mut topo = Topology::new(m, format!("topo{degree}"));
    if degree == m - 1 {
        for a in 0..m {
            for b in (a + 1)..m {
                topo.add_edge(AgentId(a), AgentId(b))?;
            }
        }
    } else {
        for a in 0..m {
            for step in 1..=degree / 2 {
                topo.add_edge(AgentId(a), AgentId((a + step) % m))?;
            }
        }
    }
    Ok(topo)
}

/// Named special topology families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialKind {
    Chain,
    Ring,
    FullyConnected,
    StarChain,
    RingChain,
}

impl fmt::Display for SpecialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SpecialKind::Chain => "chain",
            SpecialKind::Ring => "ring",
            SpecialKind::FullyConnected => "fully_connected",
            SpecialKind::StarChain => "star_chain",
            SpecialKind::RingChain => "ring_chain",
        };
        f.write_str(name)
    }
}

impl FromStr for SpecialKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(SpecialKind::Chain),
            "ring" => Ok(SpecialKind::Ring),
            "fully_connected" => Ok(SpecialKind::FullyConnected),
            "star_chain" => Ok(SpecialKind::StarChain),
            "ring_chain" => Ok(SpecialKind::RingChain),
            other => Err(format!("unknown topology kind `{other}`")),
        }
    }
}

/// Generate one of the special topology families on `m` agents.
///
/// `star_chain` is agent 0 adjacent to everyone plus a path along 1..m-1.
/// `ring_chain` is a cycle on the first ceil(m/2) agents with a path through
/// the remaining agents hanging off the last cycle agent.
pub fn special(kind: SpecialKind, m: usize) -> Result<Topology, TopologyError> {
    if m < 2 {
        return Err(TopologyError::TooFewAgents(m));
    }
    let mut topo = Topology::new(m, kind.to_string());
    match kind {
        SpecialKind::Chain => {
            for a in 0..m - 1 {
                topo.add_edge(AgentId(a), AgentId(a + 1))?;
            }
        }
        SpecialKind::Ring => {
            add_cycle(&mut topo, 0, m)?;
        }
        SpecialKind::FullyConnected => {
            for a in 0..m {
                for b in (a + 1)..m {
                    topo.add_edge(AgentId(a), AgentId(b))?;
                }
            }
        }
        SpecialKind::StarChain => {
            for b in 1..m {
                topo.add_edge(AgentId(0), AgentId(b))?;
            }
            for a in 1..m - 1 {
                topo.add_edge(AgentId(a), AgentId(a + 1))?;
            }
        }
        SpecialKind::RingChain => {
            let ring_len = m.div_ceil(2);
            add_cycle(&mut topo, 0, ring_len)?;
            for a in ring_len - 1..m - 1 {
                topo.add_edge(AgentId(a), AgentId(a + 1))?;
            }
        }
    }
    Ok(topo)
}

/// Cycle over agents `start..start + len`; degenerates to a single edge for
/// `len == 2` and to nothing for `len < 2` (no multi-edges, no self-loops).
fn add_cycle(topo: &mut Topology, start: usize, len: usize) -> Result<(), TopologyError> {
    if len == 2 {
        topo.add_edge(AgentId(start), AgentId(start + 1))?;
    } else if len >= 3 {
        for i in 0..len {
            topo.add_edge(AgentId(start + i), AgentId(start + (i + 1) % len))?;
        }
    }
    Ok(())
}

/// Degrees of the ring-lattice sweep for `m` agents: 0, 2, 4, ... up to the
/// fully connected terminal degree m-1.
pub fn sweep_degrees(m: usize) -> Vec<usize> {
    let mut degrees: Vec<usize> = (0..m - 1).step_by(2).collect();
    degrees.push(m - 1);
    degrees
}

/// Attach special-agent lists to a generated core graph. Ids beyond the
/// core (the appended always-isolated agents) grow the agent count.
pub fn extend_and_annotate(
    base: Topology,
    disconnected: &[AgentId],
    empty: &[AgentId],
) -> Result<Topology, TopologyError> {
    let max_id = disconnected.iter().chain(empty).map(|id| id.0).max();
    let total = max_id.map_or(base.total_agents(), |hi| base.total_agents().max(hi + 1));
    base.grow_to(total)?.annotate(disconnected, empty)
}

/// Build one annotated sweep member: a ring lattice on `m` agents with the
/// ids in `disconnected`/`empty` attached.
pub fn ring_k_annotated(
    m: usize,
    degree: usize,
    disconnected: &[AgentId],
    empty: &[AgentId],
) -> Result<Topology, TopologyError> {
    extend_and_annotate(ring_k(m, degree)?, disconnected, empty)
}

/// The full annotated sweep, from degree 0 to fully connected.
pub fn sweep(
    m: usize,
    disconnected: &[AgentId],
    empty: &[AgentId],
) -> Result<Vec<Topology>, TopologyError> {
    sweep_degrees(m)
        .into_iter()
        .map(|d| ring_k_annotated(m, d, disconnected, empty))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[usize]) -> Vec<AgentId> {
        v.iter().copied().map(AgentId).collect()
    }

    #[test]
    fn ring_k_degree_two_is_the_ring() {
        let t = ring_k(8, 2).unwrap();
        let expect: BTreeSet<(AgentId, AgentId)> = (0..8)
            .map(|i| {
                let j = (i + 1) % 8;
                (AgentId(i.min(j)), AgentId(i.max(j)))
            })
            .collect();
        assert_eq!(t.edges().collect::<BTreeSet<_>>(), expect);
        assert_eq!(t.edge_count(), 8);
    }

    #[test]
    fn ring_k_degree_zero_is_edgeless() {
        let t = ring_k(8, 0).unwrap();
        assert_eq!(t.edge_count(), 0);
    }

    #[test]
    fn ring_k_terminal_degree_is_complete() {
        let t = ring_k(8, 7).unwrap();
        assert_eq!(t.edge_count(), 28);
        for a in 0..8 {
            assert_eq!(t.degree(AgentId(a)), 7);
        }
    }

    // Independent circulant-graph enumeration used as the oracle for the
    // ring-lattice generator.
    fn circulant(m: usize, offsets: &[usize]) -> BTreeSet<(usize, usize)> {
        let mut edges = BTreeSet::new();
        for i in 0..m {
            for &s in offsets {
                let j = (i + s) % m;
                edges.insert((i.min(j), i.max(j)));
            }
        }
        edges
    }

    #[test]
    fn ring_k_16_4_matches_circulant_enumeration() {
        let t = ring_k(16, 4).unwrap();
        let oracle = circulant(16, &[1, 2]);
        let got: BTreeSet<(usize, usize)> = t.edges().map(|(a, b)| (a.0, b.0)).collect();
        assert_eq!(got, oracle);
        assert_eq!(t.edge_count(), 32);
        for a in 0..16 {
            assert_eq!(t.degree(AgentId(a)), 4);
        }
    }

    #[test]
    fn ring_k_rejects_bad_degrees() {
        assert!(matches!(ring_k(8, 3), Err(TopologyError::OddDegree(3))));
        assert!(matches!(
            ring_k(8, 8),
            Err(TopologyError::DegreeOutOfRange { .. })
        ));
        assert!(matches!(ring_k(1, 0), Err(TopologyError::TooFewAgents(1))));
        // Odd terminal degree is the complete graph, not an error.
        assert!(ring_k(8, 7).is_ok());
    }

    #[test]
    fn special_families_match_expected_edges() {
        let chain = special(SpecialKind::Chain, 4).unwrap();
        assert_eq!(
            chain.edges().map(|(a, b)| (a.0, b.0)).collect::<Vec<_>>(),
            vec![(0, 1), (1, 2), (2, 3)]
        );

        let ring = special(SpecialKind::Ring, 4).unwrap();
        assert_eq!(
            ring.edges().map(|(a, b)| (a.0, b.0)).collect::<Vec<_>>(),
            vec![(0, 1), (0, 3), (1, 2), (2, 3)]
        );

        let full = special(SpecialKind::FullyConnected, 5).unwrap();
        assert_eq!(full.edge_count(), 10);

        // Hub plus path: 0 adjacent to everyone, chain along 1..m-1.
        let star_chain = special(SpecialKind::StarChain, 5).unwrap();
        assert_eq!(star_chain.edge_count(), 2 * 5 - 3);
        assert_eq!(star_chain.degree(AgentId(0)), 4);

        // Cycle on 0..3, path 3-4-5-6-7.
        let ring_chain = special(SpecialKind::RingChain, 8).unwrap();
        assert_eq!(ring_chain.edge_count(), 8);
        assert_eq!(ring_chain.degree(AgentId(0)), 2);
        assert_eq!(ring_chain.degree(AgentId(3)), 3);
        assert_eq!(ring_chain.degree(AgentId(7)), 1);
    }

    #[test]
    fn annotate_assigns_roles_for_the_8_plus_2_setup() {
        let t = special(SpecialKind::Ring, 10).unwrap();
        let t = t.annotate(&ids(&[8, 9]), &ids(&[0, 4, 9])).unwrap();
        assert_eq!(t.degree(AgentId(8)), 0);
        assert_eq!(t.degree(AgentId(9)), 0);
        assert_eq!(t.role(AgentId(9)), Role::EmptyDisconnected);
        assert_eq!(t.role(AgentId(8)), Role::Disconnected);
        assert_eq!(t.role(AgentId(0)), Role::Empty);
        assert_eq!(t.role(AgentId(4)), Role::Empty);
        for a in [1, 2, 3, 5, 6, 7] {
            assert_eq!(t.role(AgentId(a)), Role::Regular);
        }
    }

    #[test]
    fn annotate_assigns_roles_for_the_16_plus_4_setup() {
        let t = ring_k(20, 4).unwrap();
        let t = t
            .annotate(&ids(&[16, 17, 18, 19]), &ids(&[0, 5, 10, 18, 19]))
            .unwrap();
        for a in [18, 19] {
            assert_eq!(t.role(AgentId(a)), Role::EmptyDisconnected);
        }
        for a in [16, 17] {
            assert_eq!(t.role(AgentId(a)), Role::Disconnected);
        }
        for a in [0, 5, 10] {
            assert_eq!(t.role(AgentId(a)), Role::Empty);
        }
        let regulars = t
            .profiles()
            .iter()
            .filter(|p| p.role == Role::Regular)
            .count();
        assert_eq!(regulars, 13);
    }

    #[test]
    fn annotate_with_empty_lists_is_identity() {
        let t = ring_k(8, 4).unwrap();
        assert_eq!(t.annotate(&[], &[]).unwrap(), t);
    }

    #[test]
    fn annotate_rejects_out_of_range_ids() {
        let t = ring_k(8, 2).unwrap();
        assert!(matches!(
            t.annotate(&ids(&[8]), &[]),
            Err(TopologyError::IdOutOfRange { id: 8, agents: 8 })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let t = ring_k_annotated(8, 4, &ids(&[8, 9]), &ids(&[0, 4, 9])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo4.topo");
        t.save(&path).unwrap();
        let back = Topology::load(&path).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn load_reports_self_loop_with_line_number() {
        let text = "agents 4\ndisconnected -\nempty -\nedge 3 3\n";
        let err = Topology::from_text(text, "t", "").unwrap_err();
        match err {
            TopologyError::Parse { line, msg, .. } => {
                assert_eq!(line, 4);
                assert!(msg.contains("self-loop"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_reports_range_violation() {
        let text = "agents 4\ndisconnected -\nempty -\nedge 1 7\n";
        let err = Topology::from_text(text, "t", "").unwrap_err();
        assert!(err.to_string().contains(">= 4"), "{err}");
    }

    #[test]
    fn load_reports_duplicate_edge() {
        let text = "agents 4\ndisconnected -\nempty -\nedge 1 2\nedge 2 1\n";
        let err = Topology::from_text(text, "t", "").unwrap_err();
        match err {
            TopologyError::Parse { line, msg, .. } => {
                assert_eq!(line, 5);
                assert!(msg.contains("duplicate edge"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_unknown_keyword() {
        let err = Topology::from_text("agents 4\nfoo 1\n", "t", "").unwrap_err();
        assert!(err.to_string().contains("unknown keyword"), "{err}");
    }

    #[test]
    fn sweep_sizes_match_the_two_study_setups() {
        assert_eq!(sweep_degrees(8), vec![0, 2, 4, 6, 7]);
        assert_eq!(sweep_degrees(16), vec![0, 2, 4, 6, 8, 10, 12, 14, 15]);
    }

    #[test]
    fn sweep_members_nest_and_keep_exact_degrees() {
        let topos = sweep(8, &ids(&[8, 9]), &ids(&[0, 4, 9])).unwrap();
        assert_eq!(topos.len(), 5);
        for window in topos.windows(2) {
            let (small, big) = (&window[0], &window[1]);
            let small_edges: BTreeSet<_> = small.edges().collect();
            let big_edges: BTreeSet<_> = big.edges().collect();
            assert!(small_edges.is_subset(&big_edges));
            assert!(small_edges.len() < big_edges.len());
        }
        for (t, d) in topos.iter().zip(sweep_degrees(8)) {
            for a in 0..8 {
                assert_eq!(t.degree(AgentId(a)), d);
            }
            assert_eq!(t.edge_count(), 8 * d / 2);
            assert_eq!(t.total_agents(), 10);
        }
    }
}
