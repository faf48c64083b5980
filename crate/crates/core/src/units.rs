//! Nondimensionalization helpers: lengths in units of the first packet's
//! width, times in units of the inverse primary coupling. Keeps coupling
//! magnitudes O(1) on default grids; purely a bookkeeping convenience, the
//! library itself works in the scaled quantities.

/// Conversion scales between laboratory and code units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    /// Laboratory length corresponding to one code length unit (the width of
    /// the first quantum packet's density).
    pub length: f64,
    /// Laboratory time corresponding to one code time unit (1/g1 when the
    /// primary coupling is nonzero).
    pub time: f64,
}

impl Scales {
    /// Scales for a packet of density width `sigma` (lab units) under primary
    /// coupling `g1` (lab units of 1/(time·length) as appropriate to the
    /// interaction).
    pub fn new(sigma: f64, g1: f64) -> Scales {
        assert!(sigma > 0.0, "length scale must be positive");
        let time = if g1 != 0.0 { 1.0 / g1.abs() } else { 1.0 };
        Scales {
            length: sigma,
            time,
        }
    }

    pub fn length_to_code(&self, lab: f64) -> f64 {
        lab / self.length
    }

    pub fn length_from_code(&self, code: f64) -> f64 {
        code * self.length
    }

    pub fn time_to_code(&self, lab: f64) -> f64 {
        lab / self.time
    }

    pub fn time_from_code(&self, code: f64) -> f64 {
        code * self.time
    }

    /// Momentum conversion (hbar = 1 in code units): k_code = k_lab · length.
    pub fn momentum_to_code(&self, lab: f64) -> f64 {
        lab * self.length
    }

    pub fn momentum_from_code(&self, code: f64) -> f64 {
        code / self.length
    }
}
