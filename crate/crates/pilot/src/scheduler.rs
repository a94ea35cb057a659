//! Placement of pending units onto active pilots.

/// What the scheduler needs to know about a pending unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRequest {
    pub unit_id: String,
    pub cores: u32,
    pub runtime_estimate: f64,
}

/// An active pilot as seen at binding time.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSlot {
    pub pilot_id: String,
    pub free_cores: u32,
    pub remaining_seconds: f64,
}

pub trait UnitScheduler {
    /// Returns `(unit_id, pilot_id)` pairs. A unit may only go to a pilot
    /// with enough free cores and remaining lifetime; units left out stay
    /// pending.
    fn bind(&mut self, pending: &[UnitRequest], pilots: &[PilotSlot]) -> Vec<(String, String)>;
}

/// FIFO over units, round-robin over eligible pilots.
#[derive(Debug, Clone, Default)]
pub struct RoundRobinScheduler;

impl UnitScheduler for RoundRobinScheduler {
    fn bind(&mut self, pending: &[UnitRequest], pilots: &[PilotSlot]) -> Vec<(String, String)> {
        bind_units(pending, pilots)
    }
}

pub fn bind_units(pending: &[UnitRequest], pilots: &[PilotSlot]) -> Vec<(String, String)> {
    let mut free: Vec<u32> = pilots.iter().map(|p| p.free_cores).collect();
    let mut cursor = 0;
    let mut out = Vec::new();
    if pilots.is_empty() {
        return out;
    }
    for unit in pending {
        let n = pilots.len();
        let pick = (0..n).map(|k| (cursor + k) % n).find(|&i| {
            free[i] >= unit.cores && pilots[i].remaining_seconds >= unit.runtime_estimate
        });
        if let Some(i) = pick {
            free[i] -= unit.cores;
            cursor = (i + 1) % n;
            out.push((unit.unit_id.clone(), pilots[i].pilot_id.clone()));
        }
    }
    out
}
