//! Square QAM constellations with hierarchical Gray labeling.
//!
//! Labels follow the interleaved per-axis rule used by 5G NR: even bit
//! positions drive the in-phase axis and odd positions the quadrature axis,
//!
//! ```text
//! d = ((1 - 2 b0) g(b2, b4, ..) + i (1 - 2 b1) g(b3, b5, ..)) / sqrt(norm)
//! g()            = 1
//! g(b, rest..)   = 2^n - (1 - 2b) g(rest..)     (n = amplitude bits on the axis)
//! ```
//!
//! The first bit pair therefore selects the complex quadrant, the next pair
//! the sub-quadrant inside it, and so on. A network trained with the first
//! two outputs as "quadrant bits" can serve every modulation order.

use crate::error::{invalid, Result};
use num_complex::Complex64;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
    Qam256,
}

impl Modulation {
    pub const ALL: [Modulation; 4] =
        [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64, Modulation::Qam256];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
            Modulation::Qam256 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
            Modulation::Qam64 => "qam64",
            Modulation::Qam256 => "qam256",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "qpsk" | "qam4" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            "qam64" | "64qam" => Ok(Modulation::Qam64),
            "qam256" | "256qam" => Ok(Modulation::Qam256),
            _ => invalid(format!("unknown modulation '{s}'")),
        }
    }
}

/// A unit-energy constellation indexed by bit label.
///
/// The integer label of a bit vector `(b0, .., b_{B-1})` is `sum b_l 2^(B-1-l)`,
/// so `b0` is the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<Complex64>,
}

/// Amplitude on one axis for the given amplitude bits (most significant first).
fn axis_amplitude(amp_bits: &[u8]) -> f64 {
    match amp_bits.split_first() {
        None => 1.0,
        Some((&b, rest)) => {
            let n = amp_bits.len() as i32;
            2f64.powi(n) - (1.0 - 2.0 * f64::from(b)) * axis_amplitude(rest)
        }
    }
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let b = modulation.bits_per_symbol();
        let levels_per_axis = 1usize << (b / 2);
        // Mean energy of the unnormalized grid with M odd-integer levels per axis.
        let m = levels_per_axis as f64;
        let norm = (2.0 * (m * m - 1.0) / 3.0).sqrt();
        let points = (0..1usize << b)
            .map(|label| {
                let bits = label_to_bits(label, b);
                Self::evaluate(&bits) / norm
            })
            .collect();
        Self { modulation, points }
    }

    fn evaluate(bits: &[u8]) -> Complex64 {
        let re_amp: Vec<u8> = bits.iter().skip(2).step_by(2).copied().collect();
        let im_amp: Vec<u8> = bits.iter().skip(3).step_by(2).copied().collect();
        let re = (1.0 - 2.0 * f64::from(bits[0])) * axis_amplitude(&re_amp);
        let im = (1.0 - 2.0 * f64::from(bits[1])) * axis_amplitude(&im_amp);
        Complex64::new(re, im)
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.bits_per_symbol()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Maps a bit vector of length `B` to its constellation point.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Complex64> {
        if bits.len() != self.bits_per_symbol() {
            return invalid(format!(
                "{} expects {} bits per symbol, got {}",
                self.modulation,
                self.bits_per_symbol(),
                bits.len()
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return invalid("bits must be 0 or 1");
        }
        Ok(self.points[bits_to_label(bits)])
    }

    /// Label of the Euclidean-nearest point; ties go to the lowest label.
    pub fn nearest_label(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (label, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    /// Hard decision: bit label of the nearest constellation point.
    pub fn hard_nearest(&self, z: Complex64) -> Vec<u8> {
        label_to_bits(self.nearest_label(z), self.bits_per_symbol())
    }

    pub fn label_bits(&self, label: usize) -> Vec<u8> {
        label_to_bits(label, self.bits_per_symbol())
    }
}

pub fn bits_to_label(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

pub fn label_to_bits(label: usize, n_bits: usize) -> Vec<u8> {
    (0..n_bits).map(|l| ((label >> (n_bits - 1 - l)) & 1) as u8).collect()
}
