//! Downlink power model: MODCOD selection, required C/N0 and transmit power.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BeamId, PowerTable};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("no MODCOD reaches spectral efficiency {0:.4}")]
    NoFeasibleModcod(f64),
    #[error("beam cannot be served with any channel count up to {0}")]
    InfeasibleBeam(u32),
    #[error("invalid MODCOD table: {0}")]
    InvalidTable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modcod {
    pub name: String,
    pub gamma: f64,
    pub ebn0_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModcodTable {
    rows: Vec<Modcod>,
}

impl ModcodTable {
    pub fn new(rows: Vec<Modcod>) -> Result<Self, LinkError> {
        if rows.is_empty() {
            return Err(LinkError::InvalidTable("empty".into()));
        }
        if rows.iter().any(|r| !(r.gamma > 0.0)) {
            return Err(LinkError::InvalidTable("non-positive spectral efficiency".into()));
        }
        if rows.windows(2).any(|w| !(w[0].gamma < w[1].gamma)) {
            return Err(LinkError::InvalidTable(
                "spectral efficiency not strictly increasing".into(),
            ));
        }
        Ok(ModcodTable { rows })
    }

    pub fn rows(&self) -> &[Modcod] {
        &self.rows
    }

    pub fn min_gamma(&self) -> f64 {
        self.rows[0].gamma
    }

    pub fn max_gamma(&self) -> f64 {
        self.rows[self.rows.len() - 1].gamma
    }

    /// DVB-S2 normal-frame subset, QPSK 1/4 to 32APSK 9/10. Eb/N0 is the
    /// ideal Es/N0 threshold minus 10 log10 of the spectral efficiency.
    pub fn dvb_s2() -> Self {
        let rows = [
            ("QPSK 1/4", 0.490_243, 0.75),
            ("QPSK 1/3", 0.656_448, 0.59),
            ("QPSK 2/5", 0.789_412, 0.73),
            ("QPSK 1/2", 0.988_858, 1.05),
            ("QPSK 3/5", 1.188_304, 1.48),
            ("QPSK 2/3", 1.322_253, 1.89),
            ("QPSK 3/4", 1.487_473, 2.31),
            ("8PSK 3/5", 1.779_991, 3.00),
            ("8PSK 2/3", 1.980_636, 3.65),
            ("16APSK 3/4", 2.966_728, 5.49),
            ("32APSK 4/5", 3.951_571, 7.67),
            ("32APSK 9/10", 4.453_027, 9.56),
        ];
        Self::from_tuples(&rows)
    }

    /// Three-row synthetic table used by examples and tests.
    pub fn test_table() -> Self {
        Self::from_tuples(&[("A", 0.5, 0.0), ("B", 1.0, 3.0), ("C", 2.0, 7.0)])
    }

    fn from_tuples(rows: &[(&str, f64, f64)]) -> Self {
        ModcodTable::new(
            rows.iter()
                .map(|(n, g, e)| Modcod {
                    name: n.to_string(),
                    gamma: *g,
                    ebn0_db: *e,
                })
                .collect(),
        )
        .expect("built-in table is valid")
    }

    /// CSV with header `name,gamma,ebn0_db`.
    pub fn from_csv_reader<R: std::io::Read>(r: R) -> Result<Self, LinkError> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.deserialize::<Modcod>() {
            rows.push(rec.map_err(|e| LinkError::InvalidTable(e.to_string()))?);
        }
        ModcodTable::new(rows)
    }

    pub fn from_csv_path(p: &Path) -> Result<Self, LinkError> {
        let f = std::fs::File::open(p).map_err(|e| LinkError::InvalidTable(e.to_string()))?;
        Self::from_csv_reader(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub roll_off: f64,
    pub obo_db: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    pub system_temp_k: f64,
    pub boltzmann: f64,
    pub slant_range_m: f64,
    pub carrier_freq_hz: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            roll_off: 0.2,
            obo_db: 2.0,
            tx_gain_db: 45.0,
            rx_gain_db: 40.0,
            system_temp_k: 300.0,
            boltzmann: BOLTZMANN,
            slant_range_m: 8_062_000.0,
            carrier_freq_hz: 19.7e9,
        }
    }
}

pub fn required_spectral_efficiency(demand_bps: f64, roll_off: f64, b: u32, bw_hz: f64) -> f64 {
    demand_bps * (1.0 + roll_off) / (b as f64 * bw_hz)
}

/// Lowest-efficiency row that still reaches `gamma_req`.
pub fn select_modcod(gamma_req: f64, table: &ModcodTable) -> Result<&Modcod, LinkError> {
    let rows = table.rows();
    let k = rows.partition_point(|r| r.gamma < gamma_req);
    rows.get(k).ok_or(LinkError::NoFeasibleModcod(gamma_req))
}

pub fn free_space_path_loss_db(range_m: f64, freq_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * range_m * freq_hz / SPEED_OF_LIGHT).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Transmit power in watts for `b` channels.
pub fn required_power(
    demand_bps: f64,
    b: u32,
    bw_hz: f64,
    link: &LinkParams,
    table: &ModcodTable,
) -> Result<f64, LinkError> {
    let g = required_spectral_efficiency(demand_bps, link.roll_off, b, bw_hz);
    let m = select_modcod(g, table)?;
    let cn0 = db_to_linear(m.ebn0_db) * demand_bps / (b as f64 * bw_hz);
    let p_db = 10.0 * cn0.log10() + link.obo_db - link.tx_gain_db - link.rx_gain_db
        + free_space_path_loss_db(link.slant_range_m, link.carrier_freq_hz)
        + 10.0 * (link.boltzmann * link.system_temp_k).log10();
    Ok(db_to_linear(p_db))
}

/// Admissible channel-count range for a demand.
///
/// `b_min` is the first count with a feasible MODCOD and power within the cap;
/// `b_max` is the last count at which the required efficiency still reaches the
/// lowest table entry, since wider allocations only add idle spectrum.
pub fn compute_b_range(
    demand_bps: f64,
    bw_hz: f64,
    link: &LinkParams,
    table: &ModcodTable,
    n_channels: u32,
    p_beam_max: f64,
) -> Result<(u32, u32), LinkError> {
    let b_min = (1..=n_channels)
        .find(|&b| {
            required_power(demand_bps, b, bw_hz, link, table).is_ok_and(|p| p <= p_beam_max)
        })
        .ok_or(LinkError::InfeasibleBeam(n_channels))?;
    let mut b_max = b_min;
    for b in b_min..=n_channels {
        if required_spectral_efficiency(demand_bps, link.roll_off, b, bw_hz) >= table.min_gamma() {
            b_max = b;
        } else {
            break;
        }
    }
    Ok((b_min, b_max))
}

pub fn build_power_table(
    beam_id: BeamId,
    demand_bps: f64,
    b_min: u32,
    b_max: u32,
    bw_hz: f64,
    link: &LinkParams,
    table: &ModcodTable,
) -> Result<PowerTable, LinkError> {
    let p_watts = (b_min..=b_max)
        .map(|b| required_power(demand_bps, b, bw_hz, link, table))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PowerTable {
        beam_id,
        b_min,
        p_watts,
    })
}
