//! Sinusoidal encoding of normalized time.

/// Frequency bands; each contributes a sin and a cos channel.
pub const TIME_BANDS: usize = 6;

/// Channels produced by [`encode_time`].
pub const TIME_ENCODING_DIM: usize = 2 * TIME_BANDS;

/// [sin(2^k pi t), cos(2^k pi t)] for k = 0..TIME_BANDS, t in [0, 1].
pub fn encode_time(t: f64) -> [f64; TIME_ENCODING_DIM] {
    let mut out = [0.0; TIME_ENCODING_DIM];
    for k in 0..TIME_BANDS {
        let arg = (1u64 << k) as f64 * std::f64::consts::PI * t;
        out[2 * k] = arg.sin();
        out[2 * k + 1] = arg.cos();
    }
    out
}
