//! Cluster-head election, grid partitioning and multi-hop relay selection.
//!
//! Election: every node arms a timer `W = (1 − E_i/E_max)·T2·V_r`; the first
//! to expire in a neighborhood advertises itself (ADV_CH) and suppresses
//! nodes within its overlying radius `R = [1 − α(d_max − D_i)/(d_max − d_min)]·R_max`.
//! The grid fixes one head per occupied cell, and heads relay toward the
//! sink through the candidate head minimizing the summed distance to the
//! evaluator's reference points.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mobility::Position;
use crate::scalar::Scalar;
use crate::sim::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectionParams<T> {
    /// Round period, seconds.
    pub t1: T,
    /// Maximum waiting window, seconds.
    pub t2: T,
    pub vr_lo: T,
    pub vr_hi: T,
    pub alpha: T,
    pub r_max: T,
    /// Node-to-sink distance extremes for the current round.
    pub d_max: T,
    pub d_min: T,
}

impl<T: Scalar> ElectionParams<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t1 > T::zero()
            && self.t2 >= T::zero()
            && T::zero() <= self.vr_lo
            && self.vr_lo <= self.vr_hi
            && T::zero() <= self.alpha
            && self.alpha <= T::one()
            && self.d_min <= self.d_max
            && self.r_max > T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter("inconsistent election parameters".into()))
        }
    }
}

/// `(1 − e_i/e_max)·t2·v_r`.
pub fn waiting_time<T: Scalar>(e_i: T, e_max: T, t2: T, v_r: T) -> Result<T> {
    if !(e_max > T::zero()) {
        return Err(Error::Parameter("waiting_time: e_max must be positive".into()));
    }
    if !(e_i >= T::zero()) || e_i > e_max {
        return Err(Error::Parameter(format!(
            "waiting_time: residual {e_i} outside [0, {e_max}]"
        )));
    }
    Ok((T::one() - e_i / e_max) * t2 * v_r)
}

/// `[1 − α(d_max − d_i)/(d_max − d_min)]·r_max`; `r_max` when the distance
/// spread is zero.
pub fn overlying_radius<T: Scalar>(d_i: T, d_max: T, d_min: T, alpha: T, r_max: T) -> Result<T> {
    if d_max < d_min {
        return Err(Error::Parameter("overlying_radius: d_max < d_min".into()));
    }
    let spread = d_max - d_min;
    if spread <= T::zero() {
        return Ok(r_max);
    }
    Ok((T::one() - alpha * (d_max - d_i) / spread) * r_max)
}

/// Strict ranking used to settle competing heads: more residual energy
/// wins, equal energy goes to the lower id.
pub fn outranks<T: Scalar>(a: (T, NodeId), b: (T, NodeId)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub col: u32,
    pub row: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell<T> {
    pub id: CellId,
    pub min_x: T,
    pub max_x: T,
    pub min_y: T,
    pub max_y: T,
    pub midpoint: Position<T>,
}

/// Square grid over `[0, region]²` with half-open cells; the last row and
/// column also own the region's far edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub region: T,
    pub side: T,
    pub per_axis: u32,
}

/// Cells of side `r_tx/√2`, so any two points of one cell are within `r_tx`.
pub fn grid_partition<T: Scalar>(region: T, r_tx: T) -> Result<Grid<T>> {
    if !(r_tx > T::zero()) || !(region > T::zero()) {
        return Err(Error::Parameter(
            "grid_partition: region and r_tx must be positive".into(),
        ));
    }
    let side = r_tx / T::SQRT_2();
    let per_axis = (region / side).ceil().to_u32().unwrap_or(1).max(1);
    Ok(Grid { region, side, per_axis })
}

impl<T: Scalar> Grid<T> {
    pub fn cell_count(&self) -> usize {
        (self.per_axis as usize).pow(2)
    }

    /// Index `i` with `i·side <= v < (i+1)·side`, matching the bounds that
    /// [`Grid::cell`] reports even where `v / side` rounds across an edge.
    fn index(&self, v: T) -> u32 {
        let last = self.per_axis as i64 - 1;
        let mut i = (v / self.side).floor().to_i64().unwrap_or(0).clamp(0, last);
        let at = |k: i64| T::from_i64(k).unwrap() * self.side;
        if i > 0 && v < at(i) {
            i -= 1;
        } else if i < last && v >= at(i + 1) {
            i += 1;
        }
        i as u32
    }

    /// Cell owning `p`, or `None` outside the region.
    pub fn cell_of(&self, p: Position<T>) -> Option<CellId> {
        if !p.in_region(self.region) {
            return None;
        }
        Some(CellId {
            col: self.index(p.x),
            row: self.index(p.y),
        })
    }

    pub fn cell(&self, id: CellId) -> GridCell<T> {
        let c = T::from_u32(id.col).unwrap();
        let r = T::from_u32(id.row).unwrap();
        let min_x = c * self.side;
        let min_y = r * self.side;
        let max_x = (min_x + self.side).min(self.region);
        let max_y = (min_y + self.side).min(self.region);
        let two = T::lit(2.0);
        GridCell {
            id,
            min_x,
            max_x,
            min_y,
            max_y,
            midpoint: Position::new((min_x + max_x) / two, (min_y + max_y) / two),
        }
    }

    pub fn cells(&self) -> Vec<GridCell<T>> {
        let mut out = Vec::with_capacity(self.cell_count());
        for row in 0..self.per_axis {
            for col in 0..self.per_axis {
                out.push(self.cell(CellId { col, row }));
            }
        }
        out
    }

    /// Groups nodes by cell, recording each node's distance to its cell's
    /// midpoint. Nodes outside the region are skipped.
    pub fn assign(&self, nodes: &[(NodeId, Position<T>)]) -> BTreeMap<CellId, Vec<(NodeId, T)>> {
        let mut out: BTreeMap<CellId, Vec<(NodeId, T)>> = BTreeMap::new();
        for &(id, p) in nodes {
            if let Some(c) = self.cell_of(p) {
                let mid = self.cell(c).midpoint;
                out.entry(c).or_default().push((id, p.distance(&mid)));
            }
        }
        out
    }
}

/// Sum of Euclidean distances from a head to each of its neighbors.
pub fn ch_neighbor_distance<T: Scalar>(ch: Position<T>, neighbors: &[Position<T>]) -> Result<T> {
    if neighbors.is_empty() {
        return Err(Error::Precondition("ch_neighbor_distance needs at least one neighbor"));
    }
    Ok(neighbors.iter().map(|n| ch.distance(n)).sum())
}

/// Candidate minimizing [`ch_neighbor_distance`] to `evaluator_neighbors`;
/// ties go to the lowest id.
pub fn select_relay_ch<T: Scalar>(
    candidates: &[(NodeId, Position<T>)],
    evaluator_neighbors: &[Position<T>],
) -> Result<NodeId> {
    let mut best: Option<(T, NodeId)> = None;
    for &(id, pos) in candidates {
        let score = ch_neighbor_distance(pos, evaluator_neighbors)?;
        best = match best {
            Some((s, b)) if s < score || (s == score && b < id) => Some((s, b)),
            _ => Some((score, id)),
        };
    }
    best.map(|(_, id)| id)
        .ok_or(Error::Precondition("select_relay_ch needs at least one candidate"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub node: NodeId,
    /// Offset from the frame start, seconds.
    pub offset: f64,
    pub len: f64,
}

/// Contiguous, disjoint slots in join order.
pub fn build_schedule(members_in_join_order: &[NodeId], slot_len: f64) -> Vec<Slot> {
    members_in_join_order
        .iter()
        .enumerate()
        .map(|(i, &node)| Slot {
            node,
            offset: i as f64 * slot_len,
            len: slot_len,
        })
        .collect()
}

/// Repeating frame length for a schedule; at least one slot.
pub fn frame_length(members: usize, slot_len: f64) -> f64 {
    members.max(1) as f64 * slot_len
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayHop {
    Sink,
    Head(NodeId),
    /// No head closer to the sink is in range.
    Unavailable,
}

/// Snapshot of the clustering state of a network.
#[derive(Debug, Clone, Default)]
pub struct ClusterPlan {
    pub ch_of_cell: BTreeMap<CellId, NodeId>,
    pub members: BTreeMap<NodeId, NodeId>,
    pub schedule: BTreeMap<NodeId, Vec<Slot>>,
    pub relay_next: BTreeMap<NodeId, RelayHop>,
    pub unclustered: Vec<NodeId>,
}

impl ClusterPlan {
    pub fn heads(&self) -> Vec<NodeId> {
        self.schedule.keys().copied().collect()
    }
}
