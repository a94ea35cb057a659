use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotCapacity {
    pub pilot_id: String,
    pub cores: u32,
    pub free_cores: u32,
    pub remaining_seconds: f64,
}

/// Snapshot of what the active pilots can still take.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregatedCapacity {
    pub time: f64,
    pub pilots: Vec<PilotCapacity>,
    pub total_cores: u64,
    pub free_cores: u64,
    pub remaining_seconds: f64,
}

impl AggregatedCapacity {
    pub fn from_pilots(time: f64, pilots: Vec<PilotCapacity>) -> Self {
        Self {
            time,
            total_cores: pilots.iter().map(|p| u64::from(p.cores)).sum(),
            free_cores: pilots.iter().map(|p| u64::from(p.free_cores)).sum(),
            remaining_seconds: pilots.iter().map(|p| p.remaining_seconds).sum(),
            pilots,
        }
    }
}
