use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum PdmpError {
    /// A rate evaluation exceeded its channel's majorant. The thinning step
    /// would no longer be exact, so the run aborts instead of continuing.
    #[error("channel {channel} rate {rate} exceeded its bound {bound} at t={t}")]
    ChannelBoundViolated {
        channel: u32,
        rate: f64,
        bound: f64,
        t: f64,
    },

    /// The event budget ran out before reaching `t_end`; either the process
    /// is close to explosive or `max_events` is too small for the horizon.
    #[error("event budget exhausted: {events} events before t_end (reached t={t})")]
    ExplosionSuspected { events: u64, t: f64 },

    /// BPS reflection is undefined where the tilted gradient vanishes.
    #[error("degenerate gradient: ||Sigma^(zeta/2) grad Psi||^2 = {norm_sq} < 1e-14")]
    DegenerateGradient { norm_sq: f64 },

    /// Batch-means preconditions (enough batches, batches much longer than
    /// the inter-event time) were not met.
    #[error("trajectory too short for batch means: {detail}")]
    InsufficientLength { detail: String },

    /// Importance weights collapsed; the self-normalized estimate would be
    /// dominated by a handful of samples.
    #[error("degenerate importance weights: ESS {ess:.1} of {n} samples")]
    DegenerateWeights { ess: f64, n: usize },

    /// Autocovariance estimate non-positive over too much of the fit window.
    #[error("autocovariance non-positive before the fit window ends: {detail}")]
    NonPositiveCovariance { detail: String },

    /// Invalid configuration or argument, with the offending key path.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PdmpError>;
