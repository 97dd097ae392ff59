//! Sharpe-ratio regime labelling, rolling windows, hierarchical ordering,
//! block resampling and leakage-aware splits.

mod label;
mod order;
mod resample;
mod split;
mod window;

pub use label::{label_from_sr, sharpe_ratio, PerRegime, Regime, RegimeLabel, RALLY_ABOVE, STRESSED_BELOW, TRADING_DAYS};
pub use order::hierarchical_order;
pub use resample::{block_resample, DEFAULT_BLOCK_LEN};
pub use split::{
    chronological_split, index_range_for_dates, purged_split, write_labels_csv, SplitAssignment, SplitPlan, DEFAULT_EMBARGO_DAYS,
};
pub use window::{rolling_windows, SampleSource, WindowedSample, DEFAULT_STRIDE, DEFAULT_WINDOW_LEN};
