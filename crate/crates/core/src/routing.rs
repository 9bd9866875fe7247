//! Neighbor table, on-demand route table and RREQ duplicate suppression.
//!
//! Route choice among candidate replies is lexicographic: widest bottleneck
//! energy first, then fewest hops, then lowest next-hop id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mobility::Position;
use crate::scalar::Scalar;
use crate::sim::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry<T> {
    pub id: NodeId,
    pub pos: Position<T>,
    pub residual_energy: T,
    pub last_heard: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborTable<T> {
    entries: BTreeMap<NodeId, NeighborEntry<T>>,
    ttl: f64,
}

impl<T: Scalar> NeighborTable<T> {
    pub fn new(ttl: f64) -> Self {
        Self {
            entries: BTreeMap::new(),
            ttl,
        }
    }

    pub fn ttl(&self) -> f64 {
        self.ttl
    }

    /// Inserts or refreshes `id`; returns true when the entry is new.
    pub fn update(&mut self, id: NodeId, pos: Position<T>, residual_energy: T, now: f64) -> bool {
        self.entries
            .insert(
                id,
                NeighborEntry {
                    id,
                    pos,
                    residual_energy,
                    last_heard: now,
                },
            )
            .is_none()
    }

    /// Entry for `id` if it has not expired at `now`.
    pub fn live(&self, id: NodeId, now: f64) -> Option<&NeighborEntry<T>> {
        self.entries.get(&id).filter(|e| now - e.last_heard <= self.ttl)
    }

    pub fn live_entries(&self, now: f64) -> impl Iterator<Item = &NeighborEntry<T>> {
        let ttl = self.ttl;
        self.entries.values().filter(move |e| now - e.last_heard <= ttl)
    }

    /// Drops expired entries and returns their ids in ascending order.
    pub fn purge(&mut self, now: f64) -> Vec<NodeId> {
        let ttl = self.ttl;
        let expired: Vec<NodeId> = self
            .entries
            .values()
            .filter(|e| now - e.last_heard > ttl)
            .map(|e| e.id)
            .collect();
        for id in &expired {
            self.entries.remove(id);
        }
        expired
    }

    pub fn remove(&mut self, id: NodeId) -> Option<NeighborEntry<T>> {
        self.entries.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteEntry<T> {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    /// Minimum residual energy along the path.
    pub bottleneck_energy: T,
    pub dest_seq: u32,
    pub expires_at: f64,
}

/// Preference order among candidate routes; `Greater` means `a` is better.
pub fn compare_routes<T: Scalar>(a: &RouteEntry<T>, b: &RouteEntry<T>) -> Ordering {
    a.bottleneck_energy
        .partial_cmp(&b.bottleneck_energy)
        .unwrap_or(Ordering::Equal)
        .then(b.hop_count.cmp(&a.hop_count))
        .then(b.next_hop.cmp(&a.next_hop))
}

/// Best candidate under [`compare_routes`].
pub fn select_route<T: Scalar>(candidates: &[RouteEntry<T>]) -> Result<RouteEntry<T>> {
    let mut it = candidates.iter();
    let first = *it
        .next()
        .ok_or(Error::Precondition("select_route needs at least one candidate"))?;
    Ok(it.fold(first, |best, c| {
        if compare_routes(c, &best) == Ordering::Greater {
            *c
        } else {
            best
        }
    }))
}

#[derive(Debug, Clone, Default)]
pub struct RouteTable<T> {
    routes: BTreeMap<NodeId, RouteEntry<T>>,
}

impl<T: Scalar> RouteTable<T> {
    pub fn new() -> Self {
        Self {
            routes: BTreeMap::new(),
        }
    }

    /// Unexpired route to `dest`.
    pub fn lookup(&self, dest: NodeId, now: f64) -> Option<&RouteEntry<T>> {
        self.routes.get(&dest).filter(|r| r.expires_at > now)
    }

    /// Installs `entry` if no live route exists, or if it carries a newer
    /// destination sequence, or an equal sequence and a better metric.
    pub fn offer(&mut self, entry: RouteEntry<T>, now: f64) -> bool {
        let take = match self.lookup(entry.dest, now) {
            None => true,
            Some(cur) => {
                entry.dest_seq > cur.dest_seq
                    || (entry.dest_seq == cur.dest_seq && compare_routes(&entry, cur) == Ordering::Greater)
            }
        };
        if take {
            self.routes.insert(entry.dest, entry);
        }
        take
    }

    /// Unconditional install.
    pub fn install(&mut self, entry: RouteEntry<T>) {
        self.routes.insert(entry.dest, entry);
    }

    /// Extends the lifetime of a live route.
    pub fn refresh(&mut self, dest: NodeId, until: f64, now: f64) {
        if let Some(r) = self.routes.get_mut(&dest) {
            if r.expires_at > now {
                r.expires_at = r.expires_at.max(until);
            }
        }
    }

    /// Removes every route whose next hop is `hop`; returns the affected
    /// destinations in ascending order.
    pub fn invalidate_via(&mut self, hop: NodeId) -> Vec<NodeId> {
        let gone: Vec<NodeId> = self
            .routes
            .values()
            .filter(|r| r.next_hop == hop)
            .map(|r| r.dest)
            .collect();
        for d in &gone {
            self.routes.remove(d);
        }
        gone
    }

    pub fn remove(&mut self, dest: NodeId) -> Option<RouteEntry<T>> {
        self.routes.remove(&dest)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry<T>> {
        self.routes.values()
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

/// `(origin, rreq id)` pairs already handled by a node.
#[derive(Debug, Clone, Default)]
pub struct RreqCache {
    seen: BTreeSet<(NodeId, u32)>,
}

impl RreqCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// True the first time a pair is offered.
    pub fn first_sighting(&mut self, origin: NodeId, rreq_id: u32) -> bool {
        self.seen.insert((origin, rreq_id))
    }

    pub fn contains(&self, origin: NodeId, rreq_id: u32) -> bool {
        self.seen.contains(&(origin, rreq_id))
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}
