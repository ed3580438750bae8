//! Float helpers that std provides as inherent methods.

/// `x mod m` in `[0, m)`.
pub(crate) fn rem_euclid(x: f64, m: f64) -> f64 {
    let r = x - m * libm::floor(x / m);
    if r >= m {
        0.0
    } else {
        r
    }
}
