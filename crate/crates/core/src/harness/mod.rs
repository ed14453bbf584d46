//! Experiment orchestration: scenarios, seeded trials, aggregation and
//! report files.

mod ber;
mod report;
mod scenario;
mod surface;
mod sync_exp;

pub use ber::{run_ber_experiment, run_ber_point, run_rician_sweep, BerPoint, BerRequest};
pub use report::{emit_report, write_csv, CdfRow, ExperimentReport, SurfaceRow};
pub use scenario::{
    load_scenario, BerSettings, ChannelSection, JammerSection, OffsetDistribution, Scenario,
};
pub use surface::{correlation_surface, surface_trial, PeakRow, SurfaceTrial};
pub use sync_exp::{cdf_table, run_sync_experiment, run_sync_trial, SyncTrial, TrialDraw};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for `(master_seed, trial_id)`.
pub fn trial_rng(master_seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_id);
    rng
}
