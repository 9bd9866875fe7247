//! Per-node energy ledger.
//!
//! Consumption is `E_c = e_rxn·N_rx + e_txn·N_tx + p_i·T_i + p_s·T_s` and the
//! residual is `e0 − E_c`. Packet counters are kept in DATA-packet
//! equivalents: a 256-byte DATA frame counts 1, a control frame counts its
//! size relative to that. A separate distance-normalized figure
//! (`Σ e_tx/D + rx + idle + sleep`) is tracked for reporting only.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerState {
    Tx,
    Rx,
    Idle,
    Sleep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams<T> {
    /// Initial energy, joules.
    pub e0: T,
    /// Energy per transmitted DATA packet, joules.
    pub e_txn: T,
    /// Energy per received DATA packet, joules.
    pub e_rxn: T,
    /// Idle listening power, watts.
    pub p_idle: T,
    /// Sleep power, watts.
    pub p_sleep: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger<T> {
    pub e0: T,
    pub e_rxn: T,
    pub e_txn: T,
    pub p_i: T,
    pub p_s: T,
    n_rx: T,
    n_tx: T,
    frames_rx: u64,
    frames_tx: u64,
    t_i: T,
    t_s: T,
    tx_dist_sum: T,
    state: PowerState,
    dead: bool,
    dead_activity: u64,
}

impl<T: Scalar> EnergyLedger<T> {
    pub fn new(params: &EnergyParams<T>) -> Self {
        Self {
            e0: params.e0,
            e_rxn: params.e_rxn,
            e_txn: params.e_txn,
            p_i: params.p_idle,
            p_s: params.p_sleep,
            n_rx: T::zero(),
            n_tx: T::zero(),
            frames_rx: 0,
            frames_tx: 0,
            t_i: T::zero(),
            t_s: T::zero(),
            tx_dist_sum: T::zero(),
            state: PowerState::Idle,
            dead: false,
            dead_activity: 0,
        }
    }

    /// Charges one frame of `weight` DATA-packet equivalents. Transmissions
    /// also feed `e_txn·weight / distance` into the distance-normalized sum.
    /// Returns `false` (and counts the attempt) when the node is dead.
    pub fn charge_packet(&mut self, direction: Direction, weight: T, distance: Option<T>) -> Result<bool> {
        if self.dead {
            self.dead_activity += 1;
            return Ok(false);
        }
        match direction {
            Direction::Tx => {
                let d = match distance {
                    Some(d) if d > T::zero() => d,
                    _ => return Err(Error::Precondition("TX charge requires distance > 0")),
                };
                self.n_tx = self.n_tx + weight;
                self.frames_tx += 1;
                self.tx_dist_sum = self.tx_dist_sum + self.e_txn * weight / d;
                self.state = PowerState::Tx;
            }
            Direction::Rx => {
                self.n_rx = self.n_rx + weight;
                self.frames_rx += 1;
                self.state = PowerState::Rx;
            }
        }
        Ok(true)
    }

    pub fn accrue_state(&mut self, state: PowerState, dt: T) -> Result<()> {
        if !(dt >= T::zero()) {
            return Err(Error::Precondition("accrue_state requires dt >= 0"));
        }
        if self.dead {
            if dt > T::zero() {
                self.dead_activity += 1;
            }
            return Ok(());
        }
        match state {
            PowerState::Idle => self.t_i = self.t_i + dt,
            PowerState::Sleep => self.t_s = self.t_s + dt,
            _ => return Err(Error::Precondition("time accrues only in IDLE or SLEEP")),
        }
        self.state = state;
        Ok(())
    }

    pub fn consumed(&self) -> T {
        self.e_rxn * self.n_rx + self.e_txn * self.n_tx + self.p_i * self.t_i + self.p_s * self.t_s
    }

    pub fn remaining(&self) -> T {
        self.e0 - self.consumed()
    }

    /// Distance-normalized diagnostic; never used for control decisions.
    pub fn remaining_distance_normalized(&self) -> T {
        self.tx_dist_sum + self.e_rxn * self.n_rx + self.p_i * self.t_i + self.p_s * self.t_s
    }

    /// Marks the node dead once its residual is exhausted. Returns the
    /// (possibly updated) dead flag.
    pub fn check_depleted(&mut self) -> bool {
        if !self.dead && self.remaining() <= T::zero() {
            self.dead = true;
        }
        self.dead
    }

    pub fn mark_dead(&mut self) {
        self.dead = true;
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    /// Energy one more frame of `weight` would cost in `direction`.
    pub fn packet_cost(&self, direction: Direction, weight: T) -> T {
        match direction {
            Direction::Tx => self.e_txn * weight,
            Direction::Rx => self.e_rxn * weight,
        }
    }

    /// Longest stretch in `state` the residual can pay for.
    pub fn affordable_time(&self, state: PowerState) -> T {
        let p = match state {
            PowerState::Sleep => self.p_s,
            _ => self.p_i,
        };
        if p <= T::zero() {
            T::infinity()
        } else {
            (self.remaining() / p).max(T::zero())
        }
    }

    pub fn n_rx(&self) -> T {
        self.n_rx
    }

    pub fn n_tx(&self) -> T {
        self.n_tx
    }

    pub fn frames_rx(&self) -> u64 {
        self.frames_rx
    }

    pub fn frames_tx(&self) -> u64 {
        self.frames_tx
    }

    pub fn t_idle(&self) -> T {
        self.t_i
    }

    pub fn t_sleep(&self) -> T {
        self.t_s
    }

    pub fn tx_dist_sum(&self) -> T {
        self.tx_dist_sum
    }

    pub fn state(&self) -> PowerState {
        self.state
    }

    pub fn dead_activity(&self) -> u64 {
        self.dead_activity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EnergyParams<f64> {
        EnergyParams {
            e0: 100.0,
            e_txn: 0.3e-3,
            e_rxn: 0.2e-3,
            p_idle: 1e-3,
            p_sleep: 1e-6,
        }
    }

    #[test]
    fn fresh_ledger() {
        let l = EnergyLedger::new(&params());
        assert_eq!(l.consumed(), 0.0);
        assert_eq!(l.remaining(), 100.0);
        assert_eq!(l.remaining_distance_normalized(), 0.0);
    }

    #[test]
    fn single_rx() {
        let mut l = EnergyLedger::new(&params());
        assert!(l.charge_packet(Direction::Rx, 1.0, None).unwrap());
        assert_eq!(l.n_rx(), 1.0);
        assert_eq!(l.consumed(), 0.2e-3);
    }

    #[test]
    fn tx_feeds_distance_sum() {
        let mut l = EnergyLedger::new(&params());
        l.charge_packet(Direction::Tx, 1.0, Some(10.0)).unwrap();
        assert!((l.tx_dist_sum() - 3e-5).abs() < 1e-18);
        assert!((l.remaining_distance_normalized() - 3e-5).abs() < 1e-18);
        assert!(l.charge_packet(Direction::Tx, 1.0, None).is_err());
        assert!(l.charge_packet(Direction::Tx, 1.0, Some(0.0)).is_err());
    }

    #[test]
    fn state_accrual() {
        let mut l = EnergyLedger::new(&params());
        l.accrue_state(PowerState::Idle, 10.0).unwrap();
        assert!((l.consumed() - 10e-3).abs() < 1e-15);
        let mut s = EnergyLedger::new(&params());
        s.accrue_state(PowerState::Sleep, 50.0).unwrap();
        assert!((s.consumed() - 0.05e-3).abs() < 1e-15);
        let before = s.clone();
        s.accrue_state(PowerState::Sleep, 0.0).unwrap();
        assert_eq!(s.consumed(), before.consumed());
        assert!(s.accrue_state(PowerState::Idle, -1.0).is_err());
        assert!(s.accrue_state(PowerState::Tx, 1.0).is_err());
    }

    fn worked_example() -> EnergyLedger<f64> {
        let mut l = EnergyLedger::new(&params());
        for _ in 0..10 {
            l.charge_packet(Direction::Rx, 1.0, None).unwrap();
        }
        for _ in 0..5 {
            l.charge_packet(Direction::Tx, 1.0, Some(20.0)).unwrap();
        }
        l.accrue_state(PowerState::Idle, 10.0).unwrap();
        l.accrue_state(PowerState::Sleep, 50.0).unwrap();
        l
    }

    #[test]
    fn consumed_worked_example() {
        // 2 + 1.5 + 10 + 0.05 mJ
        let l = worked_example();
        assert!((l.consumed() - 13.55e-3).abs() < 1e-15);
        assert!((l.remaining() - 99.98645).abs() < 1e-12);
        assert_eq!(l.remaining() + l.consumed(), 100.0);
    }

    #[test]
    fn no_tx_normalized_equals_consumed_minus_tx_term() {
        let mut l = EnergyLedger::new(&params());
        l.charge_packet(Direction::Rx, 3.0, None).unwrap();
        l.accrue_state(PowerState::Idle, 2.0).unwrap();
        assert_eq!(l.remaining_distance_normalized(), l.consumed() - l.e_txn * l.n_tx());
    }

    #[test]
    fn depletion_and_dead_activity() {
        let mut p = params();
        p.e0 = 1e-3;
        let mut l = EnergyLedger::new(&p);
        l.accrue_state(PowerState::Idle, 1.0).unwrap();
        assert_eq!(l.remaining(), 0.0);
        assert!(l.check_depleted());
        assert!(!l.charge_packet(Direction::Rx, 1.0, None).unwrap());
        assert_eq!(l.dead_activity(), 1);
        assert_eq!(l.n_rx(), 0.0);
    }

    #[test]
    fn doubling_counters_doubles_consumption() {
        let once = worked_example();
        let mut twice = EnergyLedger::new(&params());
        for _ in 0..20 {
            twice.charge_packet(Direction::Rx, 1.0, None).unwrap();
        }
        for _ in 0..10 {
            twice.charge_packet(Direction::Tx, 1.0, Some(20.0)).unwrap();
        }
        twice.accrue_state(PowerState::Idle, 20.0).unwrap();
        twice.accrue_state(PowerState::Sleep, 100.0).unwrap();
        assert!((twice.consumed() - 2.0 * once.consumed()).abs() < 1e-15);
    }
}
