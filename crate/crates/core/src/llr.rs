use crate::grid::BitGrid;
use ndarray::{Array2, Array3};

/// Bit log-likelihood ratios `L = log(Pr(b=0) / Pr(b=1))`, `S x F x B`.
/// Only entries where `valid` is set (the data REs) carry meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrGrid {
    pub llr: Array3<f64>,
    pub valid: Array2<bool>,
}

impl LlrGrid {
    pub fn bits_per_symbol(&self) -> usize {
        self.llr.dim().2
    }

    /// Hard decision: 1 if `L < 0`, otherwise 0 (ties decide 0).
    pub fn hard_bit(&self, i: usize, j: usize, l: usize) -> u8 {
        u8::from(self.llr[[i, j, l]] < 0.0)
    }

    /// Counts hard-decision errors on valid REs, per bit plane.
    pub fn count_errors(&self, truth: &BitGrid) -> BitErrorCount {
        let b = self.bits_per_symbol().min(truth.bits_per_symbol());
        let mut count = BitErrorCount::new(b);
        for ((i, j), &v) in self.valid.indexed_iter() {
            if !v || !truth.valid[[i, j]] {
                continue;
            }
            for l in 0..b {
                count.bits[l] += 1;
                if self.hard_bit(i, j, l) != truth.bits[[i, j, l]] {
                    count.errors[l] += 1;
                }
            }
        }
        count
    }

    pub fn is_finite_on_valid(&self) -> bool {
        self.valid.indexed_iter().filter(|(_, &v)| v).all(|((i, j), _)| {
            (0..self.bits_per_symbol()).all(|l| self.llr[[i, j, l]].is_finite())
        })
    }
}

/// Bits and errors per bit plane.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitErrorCount {
    pub bits: Vec<u64>,
    pub errors: Vec<u64>,
}

impl BitErrorCount {
    pub fn new(planes: usize) -> Self {
        Self { bits: vec![0; planes], errors: vec![0; planes] }
    }

    pub fn total_bits(&self) -> u64 {
        self.bits.iter().sum()
    }

    pub fn total_errors(&self) -> u64 {
        self.errors.iter().sum()
    }

    pub fn ber(&self) -> f64 {
        self.total_errors() as f64 / self.total_bits().max(1) as f64
    }

    /// Counts restricted to the given planes.
    pub fn planes(&self, planes: impl IntoIterator<Item = usize>) -> (u64, u64) {
        planes
            .into_iter()
            .filter(|&l| l < self.bits.len())
            .fold((0, 0), |(b, e), l| (b + self.bits[l], e + self.errors[l]))
    }

    pub fn merge(&mut self, other: &BitErrorCount) {
        if self.bits.len() < other.bits.len() {
            self.bits.resize(other.bits.len(), 0);
            self.errors.resize(other.errors.len(), 0);
        }
        for (l, (&b, &e)) in other.bits.iter().zip(&other.errors).enumerate() {
            self.bits[l] += b;
            self.errors[l] += e;
        }
    }
}
