//! Physical-layer and cost metrics for a (PEN, RAN) link.
//!
//! All functions are pure and operate in SI units: watts, hertz, joules,
//! seconds, bits. A link is described by the owning RAN's static profile,
//! the shared channel parameters, the instantaneous fading draw and the
//! bandwidth fraction granted by the RAN.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// Static per-RAN parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RanProfile<R: Real> {
    pub id: usize,
    /// Total spectrum owned by the RAN, split among PENs by `bw_fraction`s.
    pub total_bandwidth_hz: R,
    /// Monetary price per transmitted bit.
    pub cost_per_bit: R,
    /// Access-channel delay added to every transmission.
    pub access_delay_s: R,
    /// Interface-specific scale on the transmission energy.
    pub energy_scale: R,
    /// Interface-specific fixed energy overhead per transmission.
    pub energy_offset_j: R,
    /// Optional nominal rate cap; the achievable rate never exceeds it.
    pub nominal_rate_cap_bps: Option<R>,
}

impl<R: Real> RanProfile<R> {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.total_bandwidth_hz > R::zero()) {
            return Err(RadioError::InvalidProfile("total_bandwidth_hz must be > 0"));
        }
        if self.cost_per_bit < R::zero() {
            return Err(RadioError::InvalidProfile("cost_per_bit must be >= 0"));
        }
        if self.access_delay_s < R::zero() {
            return Err(RadioError::InvalidProfile("access_delay_s must be >= 0"));
        }
        if !(self.energy_scale > R::zero()) {
            return Err(RadioError::InvalidProfile("energy_scale must be > 0"));
        }
        if self.energy_offset_j < R::zero() {
            return Err(RadioError::InvalidProfile("energy_offset_j must be >= 0"));
        }
        if let Some(cap) = self.nominal_rate_cap_bps {
            if !(cap > R::zero()) {
                return Err(RadioError::InvalidProfile("nominal_rate_cap_bps must be > 0"));
            }
        }
        Ok(())
    }
}

/// Channel parameters shared by every link in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<R: Real> {
    pub tx_power_w: R,
    pub noise_density_w_per_hz: R,
    pub path_loss: R,
    pub ber: R,
    /// Derived: -1.5 / ln(5 * ber). Positive for ber < 0.2.
    pub k_factor: R,
}

impl<R: Real> ChannelParams<R> {
    /// Builds the parameter set, deriving the BER-dependent gain factor.
    pub fn new(tx_power_w: R, noise_density_w_per_hz: R, path_loss: R, ber: R) -> Result<Self, RadioError> {
        if !(tx_power_w > R::zero()) {
            return Err(RadioError::InvalidProfile("tx_power_w must be > 0"));
        }
        if !(noise_density_w_per_hz > R::zero()) {
            return Err(RadioError::InvalidProfile("noise_density_w_per_hz must be > 0"));
        }
        if !(path_loss > R::zero()) {
            return Err(RadioError::InvalidProfile("path_loss must be > 0"));
        }
        if !(ber > R::zero() && ber < R::real(0.2)) {
            return Err(RadioError::BerOutOfRange);
        }
        let k_factor = -R::real(1.5) / (R::real(5.0) * ber).ln();
        debug_assert!(k_factor > R::zero());
        Ok(Self { tx_power_w, noise_density_w_per_hz, path_loss, ber, k_factor })
    }
}

/// Per-(PEN, RAN) link state for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState<R: Real> {
    /// Squared fading magnitude for this step.
    pub fading_mag_sq: R,
    /// Fraction of the RAN bandwidth granted to the PEN, in [0, 1].
    pub bw_fraction: R,
    /// Derived channel gain.
    pub gain: R,
    /// Derived achievable rate in bits/s.
    pub rate_bps: R,
}

impl<R: Real> LinkState<R> {
    /// Derives gain and rate from a fading draw and a bandwidth grant.
    pub fn derive(ran: &RanProfile<R>, params: &ChannelParams<R>, fading_mag_sq: R, bw_fraction: R) -> Self {
        let gain = channel_gain(params, fading_mag_sq);
        let rate_bps = link_rate(ran, params, bw_fraction, gain);
        Self { fading_mag_sq, bw_fraction, gain, rate_bps }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadioError {
    /// Positive bits over a link whose rate is zero: the link is unusable.
    #[error("zero-rate transmission")]
    ZeroRate,
    #[error("bit-error rate must lie in (0, 0.2) for a positive gain factor")]
    BerOutOfRange,
    #[error("invalid RAN profile: {0}")]
    InvalidProfile(&'static str),
}

/// Channel gain `K * path_loss * |h|^2`.
pub fn channel_gain<R: Real>(params: &ChannelParams<R>, fading_mag_sq: R) -> R {
    debug_assert!(fading_mag_sq >= R::zero());
    params.k_factor * params.path_loss * fading_mag_sq
}

/// Achievable rate of the link in bits/s.
///
/// Shannon rate over the granted slice `W_ij = bw_fraction * W_j`, capped at
/// the RAN's nominal rate when one is configured. A zero bandwidth fraction
/// yields zero: the link carries nothing.
pub fn link_rate<R: Real>(ran: &RanProfile<R>, params: &ChannelParams<R>, bw_fraction: R, gain: R) -> R {
    debug_assert!(bw_fraction >= R::zero() && bw_fraction <= R::one() + R::epsilon());
    debug_assert!(gain >= R::zero());
    if bw_fraction <= R::zero() {
        return R::zero();
    }
    let width = bw_fraction * ran.total_bandwidth_hz;
    let snr = params.tx_power_w * gain / (params.noise_density_w_per_hz * width);
    // ln_1p keeps precision when the SNR is small.
    let shannon = width * snr.ln_1p() / R::real(std::f64::consts::LN_2);
    match ran.nominal_rate_cap_bps {
        Some(cap) => shannon.min(cap),
        None => shannon,
    }
}

/// Energy in joules spent by the PEN to push `bits` through the link.
///
/// With the uncapped Shannon rate this reduces to
/// `energy_scale * bits * tx_power / rate + energy_offset`.
pub fn link_energy<R: Real>(
    ran: &RanProfile<R>,
    params: &ChannelParams<R>,
    bits: R,
    bw_fraction: R,
    gain: R,
    rate_bps: R,
) -> Result<R, RadioError> {
    debug_assert!(bits >= R::zero());
    if bits == R::zero() {
        return Ok(ran.energy_offset_j);
    }
    if rate_bps <= R::zero() {
        return Err(RadioError::ZeroRate);
    }
    let width = bw_fraction * ran.total_bandwidth_hz;
    let grown = (rate_bps / width).exp2() - R::one();
    let variable = bits * params.noise_density_w_per_hz * width / (rate_bps * gain) * grown;
    Ok(ran.energy_scale * variable + ran.energy_offset_j)
}

/// End-to-end latency in seconds: serialization time plus the access delay.
pub fn link_latency<R: Real>(ran: &RanProfile<R>, bits: R, rate_bps: R) -> Result<R, RadioError> {
    debug_assert!(bits >= R::zero());
    if bits == R::zero() {
        return Ok(ran.access_delay_s);
    }
    if rate_bps <= R::zero() {
        return Err(RadioError::ZeroRate);
    }
    Ok(bits / rate_bps + ran.access_delay_s)
}

/// Monetary cost of sending `bits` over the RAN.
pub fn link_cost<R: Real>(ran: &RanProfile<R>, bits: R) -> R {
    debug_assert!(bits >= R::zero());
    bits * ran.cost_per_bit
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ran(bandwidth_hz: f64, cap: Option<f64>) -> RanProfile<f64> {
        RanProfile {
            id: 0,
            total_bandwidth_hz: bandwidth_hz,
            cost_per_bit: 6e-6,
            access_delay_s: 0.01,
            energy_scale: 1.0,
            energy_offset_j: 1e-4,
            nominal_rate_cap_bps: cap,
        }
    }

    fn channel() -> ChannelParams<f64> {
        ChannelParams::new(0.1, 3.98e-21, 3.6e-6, 1e-3).unwrap()
    }

    #[test]
    fn gain_is_zero_for_zero_fading() {
        assert_eq!(channel_gain(&channel(), 0.0), 0.0);
    }

    #[test]
    fn gain_matches_scalar_oracle() {
        // Independent recomputation of K and the product.
        let p = channel();
        let k_oracle = -1.5 / (5.0f64 * 1e-3).ln();
        assert_relative_eq!(p.k_factor, k_oracle, max_relative = 1e-15);
        assert_relative_eq!(p.k_factor, 0.2831, max_relative = 1e-3);
        let g = channel_gain(&p, 1.0);
        assert_relative_eq!(g, k_oracle * 3.6e-6, max_relative = 1e-15);
        assert_relative_eq!(g, 1.019e-6, max_relative = 1e-3);
    }

    #[test]
    fn gain_is_linear_in_fading() {
        let p = channel();
        assert_relative_eq!(channel_gain(&p, 2.0), 2.0 * channel_gain(&p, 1.0), max_relative = 1e-15);
    }

    #[test]
    fn ber_bounds_enforced() {
        assert_eq!(ChannelParams::new(0.1, 1e-20, 1.0, 0.25).unwrap_err(), RadioError::BerOutOfRange);
        assert_eq!(ChannelParams::new(0.1, 1e-20, 1.0, 0.2).unwrap_err(), RadioError::BerOutOfRange);
        assert!(ChannelParams::new(0.1, 1e-20, 1.0, 0.19).is_ok());
    }

    #[test]
    fn rate_is_zero_for_zero_gain_or_zero_fraction() {
        let r = ran(20e6, None);
        let p = channel();
        assert_eq!(link_rate(&r, &p, 1.0, 0.0), 0.0);
        assert_eq!(link_rate(&r, &p, 0.0, 1e-6), 0.0);
    }

    #[test]
    fn rate_matches_shannon_oracle() {
        let r = ran(20e6, None);
        let p = channel();
        let gain = 1.019e-6;
        // Independent evaluation of the Shannon formula.
        let w: f64 = 20e6;
        let oracle = w * (1.0 + 0.1 * gain / (3.98e-21 * w)).log2();
        let got = link_rate(&r, &p, 1.0, gain);
        assert_relative_eq!(got, oracle, max_relative = 1e-12);
        assert_relative_eq!(got, 4.06e8, max_relative = 1e-2);
    }

    #[test]
    fn rate_respects_nominal_cap() {
        let r = ran(20e6, Some(40e6));
        let p = channel();
        assert_eq!(link_rate(&r, &p, 1.0, 1.019e-6), 4.0e7);
    }

    #[test]
    fn energy_offset_only_for_zero_bits() {
        let r = ran(20e6, None);
        let p = channel();
        assert_eq!(link_energy(&r, &p, 0.0, 0.5, 1e-6, 1e7).unwrap(), 1e-4);
    }

    #[test]
    fn energy_rejects_zero_rate() {
        let r = ran(20e6, None);
        let p = channel();
        assert_eq!(link_energy(&r, &p, 100.0, 0.0, 0.0, 0.0).unwrap_err(), RadioError::ZeroRate);
    }

    #[test]
    fn energy_closed_form_identity_on_uncapped_rate() {
        let r = ran(20e6, None);
        let p = channel();
        let gain = channel_gain(&p, 1.3);
        let theta = 0.4;
        let rate = link_rate(&r, &p, theta, gain);
        let bits = 5e5;
        let e = link_energy(&r, &p, bits, theta, gain, rate).unwrap();
        let identity = r.energy_scale * bits * p.tx_power_w / rate + r.energy_offset_j;
        assert_relative_eq!(e, identity, max_relative = 1e-9);
    }

    #[test]
    fn energy_variable_term_linear_in_bits() {
        let r = ran(20e6, None);
        let p = channel();
        let gain = channel_gain(&p, 0.8);
        let rate = link_rate(&r, &p, 0.5, gain);
        let e1 = link_energy(&r, &p, 1e5, 0.5, gain, rate).unwrap() - r.energy_offset_j;
        let e2 = link_energy(&r, &p, 2e5, 0.5, gain, rate).unwrap() - r.energy_offset_j;
        assert_relative_eq!(e2, 2.0 * e1, max_relative = 1e-12);
    }

    #[test]
    fn latency_table_case() {
        // 1 Mb over a 25 Mbps link with 10 ms access delay.
        let r = ran(20e6, None);
        assert_relative_eq!(link_latency(&r, 1e6, 25e6).unwrap(), 0.04 + 0.01, max_relative = 1e-12);
        assert_eq!(link_latency(&r, 0.0, 0.0).unwrap(), 0.01);
        assert_eq!(link_latency(&r, 10.0, 0.0).unwrap_err(), RadioError::ZeroRate);
    }

    #[test]
    fn cost_table_cases() {
        let mut r = ran(20e6, None);
        assert_relative_eq!(link_cost(&r, 1e6), 6.0, max_relative = 1e-12);
        assert_eq!(link_cost(&r, 0.0), 0.0);
        r.cost_per_bit = 0.1e-6;
        assert_relative_eq!(link_cost(&r, 1e6), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn works_in_f32() {
        let r = RanProfile::<f32> {
            id: 0,
            total_bandwidth_hz: 20e6,
            cost_per_bit: 6e-6,
            access_delay_s: 0.01,
            energy_scale: 1.0,
            energy_offset_j: 1e-4,
            nominal_rate_cap_bps: None,
        };
        let p = ChannelParams::<f32>::new(0.1, 3.98e-15, 3.6e-3, 1e-3).unwrap();
        let g = channel_gain(&p, 1.0);
        assert!(link_rate(&r, &p, 1.0, g) > 0.0);
    }

    proptest! {
        #[test]
        fn rate_monotone_in_fraction_and_gain(
            theta1 in 1e-3f64..1.0, theta2 in 1e-3f64..1.0,
            g1 in 1e-12f64..1e-3, g2 in 1e-12f64..1e-3,
        ) {
            let r = ran(20e6, None);
            let p = channel();
            let (tl, th) = if theta1 <= theta2 { (theta1, theta2) } else { (theta2, theta1) };
            let (gl, gh) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(link_rate(&r, &p, tl, gl) <= link_rate(&r, &p, th, gl) + 1e-9);
            prop_assert!(link_rate(&r, &p, tl, gl) <= link_rate(&r, &p, tl, gh) + 1e-9);
        }

        #[test]
        fn latency_minus_delay_is_serialization_time(bits in 1.0f64..1e7, rate in 1e3f64..1e9) {
            let r = ran(20e6, None);
            let l = link_latency(&r, bits, rate).unwrap();
            prop_assert!((l - r.access_delay_s - bits / rate).abs() < 1e-12 * l.max(1.0));
        }

        #[test]
        fn latency_nonincreasing_in_rate(bits in 1.0f64..1e7, rate in 1e3f64..1e9, bump in 1.0f64..10.0) {
            let r = ran(20e6, None);
            let slow = link_latency(&r, bits, rate).unwrap();
            let fast = link_latency(&r, bits, rate * bump).unwrap();
            prop_assert!(fast <= slow + 1e-15);
        }
    }
}
