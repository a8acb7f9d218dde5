//! Transmit/receive resource grids and the bit labels they carry.

use crate::constellation::Constellation;
use crate::error::{invalid, Error, Result};
use crate::pilots::PilotConfig;
use crate::tti::TtiSpec;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;

/// Complex `S x F x ports` array. `ports` is 1 for a transmit grid and
/// `N_r` for a received grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub values: Array3<Complex64>,
}

impl ResourceGrid {
    pub fn zeros(symbols: usize, subcarriers: usize, ports: usize) -> Self {
        Self { values: Array3::zeros((symbols, subcarriers, ports)) }
    }

    pub fn from_array(values: Array3<Complex64>) -> Self {
        Self { values }
    }

    pub fn symbols(&self) -> usize {
        self.values.dim().0
    }

    pub fn subcarriers(&self) -> usize {
        self.values.dim().1
    }

    pub fn ports(&self) -> usize {
        self.values.dim().2
    }

    /// Average `|v|^2` over every entry.
    pub fn mean_power(&self) -> f64 {
        let n = self.values.len().max(1) as f64;
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / n
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub(crate) fn check_dims(&self, other: &ResourceGrid, what: &str) -> Result<()> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.values.dim(),
                other.values.dim()
            )));
        }
        Ok(())
    }
}

/// Transmitted bit labels `S x F x B`, meaningful only where `valid` (the data set).
#[derive(Debug, Clone, PartialEq)]
pub struct BitGrid {
    pub bits: Array3<u8>,
    pub valid: Array2<bool>,
}

impl BitGrid {
    pub fn bits_per_symbol(&self) -> usize {
        self.bits.dim().2
    }

    pub fn num_data(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Uniform random payload bits.
pub fn random_payload<R: Rng + ?Sized>(n_bits: usize, rng: &mut R) -> Vec<u8> {
    (0..n_bits).map(|_| rng.random_range(0..2u8)).collect()
}

fn check_tti(pilots: &PilotConfig, tti: &TtiSpec) -> Result<()> {
    if !pilots.matches(tti) {
        return invalid(format!(
            "pilot config '{}' is {:?}, TTI is {}x{}",
            pilots.name(),
            pilots.dims(),
            tti.symbols,
            tti.subcarriers
        ));
    }
    Ok(())
}

fn place_pilots(grid: &mut ResourceGrid, pilots: &PilotConfig) {
    for &(i, j) in pilots.positions() {
        grid.values[[i, j, 0]] = pilots.value(i, j).expect("pilot position");
    }
}

/// Maps `payload` onto the data REs in row-major order and inserts pilots.
pub fn build_tx_grid(
    payload: &[u8],
    constellation: &Constellation,
    pilots: &PilotConfig,
    tti: &TtiSpec,
) -> Result<(ResourceGrid, BitGrid)> {
    check_tti(pilots, tti)?;
    let b = constellation.bits_per_symbol();
    let expected = pilots.num_data() * b;
    if payload.len() != expected {
        return invalid(format!("payload has {} bits, grid needs {expected}", payload.len()));
    }
    let (s, f) = (tti.symbols, tti.subcarriers);
    let mut grid = ResourceGrid::zeros(s, f, 1);
    let mut bits = Array3::zeros((s, f, b));
    let mut valid = Array2::from_elem((s, f), false);
    for ((i, j), chunk) in pilots.data_positions().zip(payload.chunks_exact(b)) {
        grid.values[[i, j, 0]] = constellation.map_bits(chunk)?;
        for (l, &bit) in chunk.iter().enumerate() {
            bits[[i, j, l]] = bit;
        }
        valid[[i, j]] = true;
    }
    place_pilots(&mut grid, pilots);
    Ok((grid, BitGrid { bits, valid }))
}

/// Grid whose four time-frequency quadrants each repeat one random symbol
/// on all of their data REs; pilots are left in place.
pub fn build_probe_grid<R: Rng + ?Sized>(
    tti: &TtiSpec,
    constellation: &Constellation,
    pilots: &PilotConfig,
    rng: &mut R,
) -> Result<(ResourceGrid, BitGrid)> {
    check_tti(pilots, tti)?;
    let (s, f) = (tti.symbols, tti.subcarriers);
    if s % 2 != 0 || f % 2 != 0 {
        return invalid(format!("probe grid needs even S and F, got {s}x{f}"));
    }
    let b = constellation.bits_per_symbol();
    let n_points = constellation.points().len();
    let labels: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..n_points));
    let mut grid = ResourceGrid::zeros(s, f, 1);
    let mut bits = Array3::zeros((s, f, b));
    let mut valid = Array2::from_elem((s, f), false);
    for (i, j) in pilots.data_positions() {
        let q = 2 * usize::from(i >= s / 2) + usize::from(j >= f / 2);
        let label = labels[q];
        grid.values[[i, j, 0]] = constellation.point(label);
        for (l, bit) in constellation.label_bits(label).into_iter().enumerate() {
            bits[[i, j, l]] = bit;
        }
        valid[[i, j]] = true;
    }
    place_pilots(&mut grid, pilots);
    Ok((grid, BitGrid { bits, valid }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::Modulation;
    use crate::pilots::standard_pilot_configs;
    use crate::rng::rng_from_seed;

    fn tiny() -> (TtiSpec, PilotConfig) {
        let tti = TtiSpec::new(2, 2, 1).unwrap();
        let p = PilotConfig::new("corner", &tti, [((0, 0), Complex64::new(0.0, 1.0))]).unwrap();
        (tti, p)
    }

    #[test]
    fn data_fills_row_major() {
        let (tti, pilots) = tiny();
        let qpsk = Constellation::new(Modulation::Qpsk);
        let payload = [0, 0, 0, 1, 1, 1];
        let (grid, bits) = build_tx_grid(&payload, &qpsk, &pilots, &tti).unwrap();
        assert_eq!(grid.values[[0, 0, 0]], Complex64::new(0.0, 1.0));
        assert_eq!(grid.values[[0, 1, 0]], qpsk.map_bits(&[0, 0]).unwrap());
        assert_eq!(grid.values[[1, 0, 0]], qpsk.map_bits(&[0, 1]).unwrap());
        assert_eq!(grid.values[[1, 1, 0]], qpsk.map_bits(&[1, 1]).unwrap());
        assert!(!bits.valid[[0, 0]]);
        assert_eq!(bits.num_data(), 3);
    }

    #[test]
    fn zero_payload_and_pilots() {
        let tti = TtiSpec::default();
        let qpsk = Constellation::new(Modulation::Qpsk);
        let pilots = &standard_pilot_configs(&tti).unwrap()[1];
        let payload = vec![0; pilots.num_data() * 2];
        let (grid, _) = build_tx_grid(&payload, &qpsk, pilots, &tti).unwrap();
        let zero_sym = qpsk.map_bits(&[0, 0]).unwrap();
        for (i, j) in pilots.data_positions() {
            assert_eq!(grid.values[[i, j, 0]], zero_sym);
        }
        for &(i, j) in pilots.positions() {
            assert_eq!(Some(grid.values[[i, j, 0]]), pilots.value(i, j));
        }
    }

    #[test]
    fn payload_length_checked() {
        let (tti, pilots) = tiny();
        let qpsk = Constellation::new(Modulation::Qpsk);
        assert!(build_tx_grid(&[0; 5], &qpsk, &pilots, &tti).is_err());
    }

    #[test]
    fn probe_quadrants_repeat_one_symbol() {
        let tti = TtiSpec::default();
        let pilots = &standard_pilot_configs(&tti).unwrap()[0];
        for m in [Modulation::Qpsk, Modulation::Qam16] {
            let c = Constellation::new(m);
            let mut rng = rng_from_seed(5);
            let (grid, bits) = build_probe_grid(&tti, &c, pilots, &mut rng).unwrap();
            for (qi, qj) in [(0, 0), (0, 36), (7, 0), (7, 36)] {
                let reference = (qi..qi + 7)
                    .flat_map(|i| (qj..qj + 36).map(move |j| (i, j)))
                    .find(|&(i, j)| !pilots.is_pilot(i, j))
                    .unwrap();
                let sym = grid.values[[reference.0, reference.1, 0]];
                assert!(c.points().contains(&sym));
                let label = c.hard_nearest(sym);
                for i in qi..qi + 7 {
                    for j in qj..qj + 36 {
                        if pilots.is_pilot(i, j) {
                            assert_eq!(Some(grid.values[[i, j, 0]]), pilots.value(i, j));
                        } else {
                            assert_eq!(grid.values[[i, j, 0]], sym);
                            let got: Vec<u8> = (0..c.bits_per_symbol()).map(|l| bits.bits[[i, j, l]]).collect();
                            assert_eq!(got, label);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn probe_rejects_odd_dims() {
        let tti = TtiSpec::new(3, 2, 1).unwrap();
        let p = PilotConfig::new("p", &tti, [((0, 0), Complex64::new(1.0, 0.0))]).unwrap();
        let c = Constellation::new(Modulation::Qpsk);
        assert!(build_probe_grid(&tti, &c, &p, &mut rng_from_seed(1)).is_err());
    }
}
