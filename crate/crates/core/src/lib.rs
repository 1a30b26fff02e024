//! Volume-weighted price statistics from tick-level trades.
//!
//! Trades are `(value, volume, price)` triples with `value = price * volume`.
//! Over an averaging window the crate accumulates power sums of trade values
//! and volumes, derives price moments `p(n) = C_m(n) / U_m(n)` (whose first
//! order is the VWAP), contrasts them with frequency-based statistics, and
//! builds moment-matched characteristic-function approximations from which
//! approximate price densities are recovered.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`.

pub mod aggregation;
pub mod char_fn;
mod dd;
pub mod error;
pub mod ingest;
pub mod power_sums;
pub mod price_moments;
pub mod scalar;
pub mod synthetic;
pub mod trade;

pub use aggregation::{aggregate_macro, weighted_expectation, AgentTape, MacroVariables, Weight};
pub use char_fn::{
    eval_charfn, fit_charfn, gaussian_density, gaussian_pdf, invert_charfn, price_grid, CharFnApprox, DensityApprox,
};
pub use error::{Error, Result};
pub use ingest::{parse_records, parse_tape, partition_windows, TapeFormat, TapeKind, TimestampFormat};
pub use power_sums::{accumulate, accumulate_streaming, to_moments, CompensatedSum, PowerSums, TradeMoments};
pub use price_moments::{
    frequency_price_stats, frequency_value_volume_stats, price_moments_from_trades, vwap, Bins, FrequencyDistribution,
    PriceMoments, VarianceStatus,
};
pub use scalar::{rel_diff, Scalar};
pub use synthetic::{generate, oracle_price_moments, Dependence, PriceLaw, TapeSpec, VolumeLaw};
pub use trade::{make_tick, Alignment, Timestamp, TradeTick, WindowSpec, WindowedTrades};

pub type TradeTick64 = TradeTick<f64>;
pub type WindowedTrades64 = WindowedTrades<f64>;
pub type PowerSums64 = PowerSums<f64>;
pub type TradeMoments64 = TradeMoments<f64>;
pub type PriceMoments64 = PriceMoments<f64>;
pub type CharFnApprox64 = CharFnApprox<f64>;
pub type DensityApprox64 = DensityApprox<f64>;
pub type AgentTape64 = AgentTape<f64>;
pub type MacroVariables64 = MacroVariables<f64>;
