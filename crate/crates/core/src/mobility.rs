//! Node placement, random-waypoint motion and the mobility-error predictor
//! that gates adaptive beaconing.
//!
//! The predictor keeps a short history of `(x, y, t)` samples since the last
//! beacon and predicts the node's location as the time-weighted sums
//! `Σ x_j·t_j / k` and `Σ y_j·t_j / k`. In the simulator each sample's `t` is
//! its dwell weight measured in check intervals, so with a regular check
//! cadence every weight is 1 and the prediction is the mean position since
//! the last beacon. A node whose current position strays more than the
//! threshold from that prediction beacons and restarts its history.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Position<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Clamps into the square `[0, side]²`.
    pub fn clamped(self, side: T) -> Self {
        Self {
            x: self.x.max(T::zero()).min(side),
            y: self.y.max(T::zero()).min(side),
        }
    }

    pub fn in_region(&self, side: T) -> bool {
        self.x >= T::zero() && self.x <= side && self.y >= T::zero() && self.y <= side
    }
}

/// Uniform point in `[0, side)²`.
pub fn random_position(side: f64, rng: &mut RngStream) -> Position<f64> {
    let x = rng.uniform(0.0, side).expect("side >= 0");
    let y = rng.uniform(0.0, side).expect("side >= 0");
    Position::new(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointParams<T> {
    pub v_min: T,
    pub v_max: T,
    /// Side of the square deployment region in meters.
    pub region: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointState<T> {
    pub destination: Position<T>,
    pub speed: T,
    /// Zero-pause model: kept for completeness, never set in the future.
    pub pause_until: T,
}

impl WaypointState<f64> {
    /// Draws an initial leg.
    pub fn draw(params: &WaypointParams<f64>, rng: &mut RngStream) -> Self {
        let destination = random_position(params.region, rng);
        let speed = rng.uniform(params.v_min, params.v_max).expect("validated speeds");
        Self {
            destination,
            speed,
            pause_until: 0.0,
        }
    }
}

/// Advances `pos` by `dt` seconds along the current leg. On arrival the node
/// sits exactly at the destination and a fresh destination and speed are
/// drawn. A zero-speed node never moves.
pub fn step_waypoint(
    pos: &mut Position<f64>,
    state: &mut WaypointState<f64>,
    params: &WaypointParams<f64>,
    dt: f64,
    rng: &mut RngStream,
) -> Result<Position<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Precondition("step_waypoint requires dt > 0"));
    }
    if state.speed <= 0.0 {
        return Ok(*pos);
    }
    let remaining = pos.distance(&state.destination);
    let travel = state.speed * dt;
    if travel >= remaining {
        *pos = state.destination;
        *state = WaypointState::draw(params, rng);
    } else {
        let f = travel / remaining;
        pos.x += (state.destination.x - pos.x) * f;
        pos.y += (state.destination.y - pos.y) * f;
    }
    *pos = pos.clamped(params.region);
    Ok(*pos)
}

/// One predictor sample: position, time weight `t`, and the absolute
/// instant it was observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MepSample<T> {
    pub x: T,
    pub y: T,
    pub t: T,
    pub at: T,
}

impl<T: Scalar> MepSample<T> {
    /// Sample observed at `at` with unit weight.
    pub fn unit(pos: Position<T>, at: T) -> Self {
        Self {
            x: pos.x,
            y: pos.y,
            t: T::one(),
            at,
        }
    }
}

/// `Σ x_j·t_j / k` over the samples.
pub fn mep_mean_x<T: Scalar>(samples: &[MepSample<T>]) -> Result<T> {
    weighted_over_count(samples, |s| s.x)
}

/// `Σ y_j·t_j / k` over the samples.
pub fn mep_mean_y<T: Scalar>(samples: &[MepSample<T>]) -> Result<T> {
    weighted_over_count(samples, |s| s.y)
}

fn weighted_over_count<T: Scalar>(samples: &[MepSample<T>], coord: impl Fn(&MepSample<T>) -> T) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Precondition("MEP history is empty"));
    }
    let k = T::from_usize(samples.len()).expect("sample count fits scalar");
    let sum: T = samples.iter().map(|s| coord(s) * s.t).sum();
    Ok(sum / k)
}

/// Euclidean displacement between the current and the predicted location.
pub fn deviation<T: Scalar>(current: Position<T>, predicted: (T, T)) -> T {
    (current.x - predicted.0).hypot(current.y - predicted.1)
}

/// The distance-variation expression with sums inside the squares and no
/// root, kept for auditing only.
pub fn deviation_literal<T: Scalar>(current: Position<T>, predicted: (T, T)) -> T {
    let a = current.x + predicted.0;
    let b = current.y + predicted.1;
    a * a + b * b
}

/// Strict threshold test on the predictor's deviation.
pub fn exceeds_threshold<T: Scalar>(samples: &[MepSample<T>], current: Position<T>, threshold: T) -> Result<bool> {
    let predicted = (mep_mean_x(samples)?, mep_mean_y(samples)?);
    Ok(deviation(current, predicted) > threshold)
}

#[derive(Debug, Clone)]
pub struct MepHistory<T> {
    samples: Vec<MepSample<T>>,
    window: usize,
    last_beacon_pos: Position<T>,
}

impl<T: Scalar> MepHistory<T> {
    /// History seeded with the deployment sample, which is also the position
    /// announced by the initial beacon.
    pub fn new(window: usize, initial: MepSample<T>) -> Self {
        let window = window.max(1);
        let mut samples = Vec::with_capacity(window + 1);
        samples.push(initial);
        Self {
            samples,
            window,
            last_beacon_pos: Position::new(initial.x, initial.y),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn last_beacon_pos(&self) -> Position<T> {
        self.last_beacon_pos
    }

    pub fn samples(&self) -> &[MepSample<T>] {
        &self.samples
    }

    pub fn predicted(&self) -> Result<(T, T)> {
        Ok((mep_mean_x(&self.samples)?, mep_mean_y(&self.samples)?))
    }

    /// Appends a sample, evicting the oldest beyond the window.
    pub fn push(&mut self, sample: MepSample<T>) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(sample.at > last.at) {
                return Err(Error::Precondition("MEP sample timestamps must increase"));
            }
        }
        self.samples.push(sample);
        if self.samples.len() > self.window {
            let excess = self.samples.len() - self.window;
            self.samples.drain(..excess);
        }
        Ok(())
    }

    /// Beacon decision for a new observation. On a trigger the history
    /// restarts from the current sample and the beacon position is updated;
    /// otherwise the sample is appended.
    pub fn observe(&mut self, sample: MepSample<T>, threshold: T) -> Result<bool> {
        let current = Position::new(sample.x, sample.y);
        let trigger = exceeds_threshold(&self.samples, current, threshold)?;
        if trigger {
            self.samples.clear();
            self.samples.push(sample);
            self.last_beacon_pos = current;
        } else {
            self.push(sample)?;
        }
        Ok(trigger)
    }
}
