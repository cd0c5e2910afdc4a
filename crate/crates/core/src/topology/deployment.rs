use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TopologyError;

pub type NodeId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Bot,
    Origin,
    MasterOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Bots stream raw CSI to the master, which runs all sensing.
    DirectToMaster,
    /// Origins run sensing for their bots and forward per-window records.
    OriginAggregated,
}

impl std::str::FromStr for Mode {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct_to_master" => Ok(Mode::DirectToMaster),
            "origin_aggregated" => Ok(Mode::OriginAggregated),
            other => Err(TopologyError::Malformed(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRole {
    pub id: NodeId,
    pub role: Role,
}

/// Uplink `child -> parent`. A bot's link also names the zone it monitors
/// (defaults to the bot id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub child: NodeId,
    pub parent: NodeId,
    #[serde(default)]
    pub zone: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub nodes: Vec<NodeRole>,
    pub links: Vec<Link>,
    pub mode: Mode,
}

impl Deployment {
    /// One master with `bots` bots linked straight to it (ids 1..=bots, master 0).
    pub fn star(bots: u16, mode: Mode) -> Self {
        let mut nodes = vec![NodeRole { id: 0, role: Role::MasterOrigin }];
        let mut links = Vec::new();
        for b in 1..=bots {
            nodes.push(NodeRole { id: b, role: Role::Bot });
            links.push(Link { child: b, parent: 0, zone: None });
        }
        Self { nodes, links, mode }
    }

    pub fn role_of(&self, id: NodeId) -> Option<Role> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.role)
    }

    pub fn master(&self) -> Result<NodeId, TopologyError> {
        let masters: Vec<NodeId> =
            self.nodes.iter().filter(|n| n.role == Role::MasterOrigin).map(|n| n.id).collect();
        match masters.as_slice() {
            [m] => Ok(*m),
            [] => Err(TopologyError::NoMaster),
            _ => Err(TopologyError::DuplicateMaster(masters)),
        }
    }

    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.links.iter().find(|l| l.child == id).map(|l| l.parent)
    }

    /// Bots in ascending id order.
    pub fn bots(&self) -> Vec<NodeId> {
        let mut b: Vec<NodeId> = self.nodes.iter().filter(|n| n.role == Role::Bot).map(|n| n.id).collect();
        b.sort_unstable();
        b
    }

    /// Origins (not the master) in ascending id order.
    pub fn origins(&self) -> Vec<NodeId> {
        let mut o: Vec<NodeId> = self.nodes.iter().filter(|n| n.role == Role::Origin).map(|n| n.id).collect();
        o.sort_unstable();
        o
    }

    pub fn zone_of(&self, bot: NodeId) -> u16 {
        self.links.iter().find(|l| l.child == bot).and_then(|l| l.zone).unwrap_or(bot)
    }

    /// Number of uplinks from `id` to the master.
    pub fn hops_to_master(&self, id: NodeId) -> Result<usize, TopologyError> {
        let master = self.master()?;
        let mut at = id;
        let mut hops = 0;
        while at != master {
            at = self.parent_of(at).ok_or(TopologyError::Unreachable(id))?;
            hops += 1;
            if hops > self.nodes.len() {
                return Err(TopologyError::Malformed(format!("cycle through node {id}")));
            }
        }
        Ok(hops)
    }

    /// Node that runs the sensing pipeline for `bot` under the current mode.
    pub fn processor_of(&self, bot: NodeId) -> Result<NodeId, TopologyError> {
        match self.mode {
            Mode::DirectToMaster => self.master(),
            Mode::OriginAggregated => self.parent_of(bot).ok_or(TopologyError::Unreachable(bot)),
        }
    }

    /// Exactly one master; ids unique; links only between known nodes;
    /// every bot reaches the master in at most two hops; bots have no
    /// children; the master has no uplink.
    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut seen = BTreeMap::new();
        for n in &self.nodes {
            if seen.insert(n.id, n.role).is_some() {
                return Err(TopologyError::Malformed(format!("node id {} used twice", n.id)));
            }
        }
        let master = self.master()?;
        let mut uplinks = BTreeMap::new();
        for l in &self.links {
            let child = *seen.get(&l.child).ok_or(TopologyError::UnknownNode(l.child))?;
            let parent = *seen.get(&l.parent).ok_or(TopologyError::UnknownNode(l.parent))?;
            if parent == Role::Bot {
                return Err(TopologyError::Malformed(format!("bot {} cannot be a parent", l.parent)));
            }
            if child == Role::MasterOrigin {
                return Err(TopologyError::Malformed(format!("master {master} cannot have an uplink")));
            }
            if uplinks.insert(l.child, l.parent).is_some() {
                return Err(TopologyError::Malformed(format!("node {} has two uplinks", l.child)));
            }
        }
        for n in &self.nodes {
            if n.role == Role::MasterOrigin {
                continue;
            }
            let hops = self.hops_to_master(n.id)?;
            if n.role == Role::Bot && hops > 2 {
                return Err(TopologyError::TooManyHops { node: n.id, hops });
            }
        }
        Ok(())
    }

    /// Copy with `new_master` promoted and every uplink that pointed at the
    /// old master redirected to it.
    pub fn promote(&self, new_master: NodeId) -> Result<Deployment, TopologyError> {
        let old = self.master()?;
        if self.role_of(new_master) != Some(Role::Origin) {
            return Err(TopologyError::Malformed(format!("node {new_master} is not an origin")));
        }
        let mut next = self.clone();
        next.nodes.retain(|n| n.id != old);
        for n in &mut next.nodes {
            if n.id == new_master {
                n.role = Role::MasterOrigin;
            }
        }
        next.links.retain(|l| l.child != new_master);
        for l in &mut next.links {
            if l.parent == old {
                l.parent = new_master;
            }
        }
        Ok(next)
    }

    /// Deterministic failover target: the smallest origin id.
    pub fn failover_target(&self) -> Option<NodeId> {
        self.origins().first().copied()
    }
}
