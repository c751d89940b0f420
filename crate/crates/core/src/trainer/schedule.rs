use serde::{Deserialize, Serialize};

/// Sigmoid annealing of a KL coefficient from zero towards `target_weight`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub target_weight: f64,
    pub midpoint_step: u64,
    pub steepness: f64,
}

impl AnnealSchedule {
    pub fn new(target_weight: f64, midpoint_step: u64, steepness: f64) -> Self {
        Self {
            target_weight,
            midpoint_step,
            steepness,
        }
    }

    pub fn weight(&self, step: u64) -> f64 {
        kl_weight(step, self)
    }
}

/// `target · σ(steepness · (step − midpoint))`.
pub fn kl_weight(step: u64, schedule: &AnnealSchedule) -> f64 {
    let x = schedule.steepness * (step as f64 - schedule.midpoint_step as f64);
    schedule.target_weight / (1.0 + (-x).exp())
}
