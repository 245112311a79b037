//! Gene-cascade ODE used by the `custom-ode` preset.
//!
//! Six entities: two upstream inputs (FT, FD) whose product drives SOC1,
//! SOC1 induces LFY, LFY and the FT/FD complex induce AP1, and TFL1 represses
//! SOC1, LFY and AP1 while being repressed by AP1. The outcome is the time at
//! which AP1 first exceeds a threshold. A categorical mutant index scales
//! production rates to emulate knock-downs and over-expression lines.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ode::{OdeSystem, Trajectory};
use crate::paramfile::{parse_param_file, ParamFileError, ParamOp};

pub const DEFAULT_PARAMS: &str = include_str!("../../presets/cascade_params.txt");

pub const ENTITIES: [&str; 6] = ["FT", "FD", "SOC1", "LFY", "TFL1", "AP1"];

pub const RATE_NAMES: [&str; 34] = [
    "a_ft",
    "d_ft",
    "tau_ft",
    "a_fd",
    "d_fd",
    "k_cplx",
    "b_soc1",
    "v_soc1",
    "k_soc1",
    "n_soc1",
    "ki_tfl1_soc1",
    "d_soc1",
    "b_lfy",
    "v_lfy",
    "k_lfy",
    "n_lfy",
    "v_lfy_ap1",
    "k_lfy_ap1",
    "n_lfy_ap1",
    "ki_tfl1_lfy",
    "d_lfy",
    "b_tfl1",
    "v_tfl1",
    "ki_ap1",
    "n_tfl1",
    "d_tfl1",
    "b_ap1",
    "v_ap1",
    "k_ap1",
    "n_ap1",
    "w_lfy",
    "w_cplx",
    "ki_tfl1_ap1",
    "d_ap1",
];

/// Number of mutant lines including wild type (index 0).
pub const N_MUTANTS: usize = 19;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("missing rate `{0}`")]
    UnknownRate(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}` out of range: {value}")]
    OutOfRange { name: String, value: f64 },
    #[error(transparent)]
    File(#[from] ParamFileError),
}

/// Production multipliers per entity for each mutant line. Lines 1-6 are
/// knock-downs, 7-12 over-expression, 13-18 double mutants.
fn mutant_factors(mutant: usize) -> [f64; 6] {
    let mut f = [1.0; 6];
    match mutant {
        0 => {}
        1..=6 => f[mutant - 1] = 0.3,
        7..=12 => f[mutant - 7] = 2.5,
        13..=18 => {
            let pairs = [(0, 4), (1, 3), (2, 5), (3, 4), (0, 2), (4, 5)];
            let (a, b) = pairs[mutant - 13];
            f[a] = 0.3;
            f[b] = 2.5;
        }
        _ => unreachable!("mutant index validated"),
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParams {
    pub rates: BTreeMap<String, f64>,
    pub mutant: usize,
}

impl CascadeParams {
    pub fn from_text(text: &str) -> Result<Self, CascadeError> {
        let mut p = Self {
            rates: BTreeMap::new(),
            mutant: 0,
        };
        for line in parse_param_file(text)? {
            match line.op {
                ParamOp::Set => p.set(&line.name, line.value)?,
                ParamOp::Scale => p.scale(&line.name, line.value)?,
            }
        }
        Ok(p)
    }

    pub fn default_params() -> Self {
        Self::from_text(DEFAULT_PARAMS).expect("shipped parameter file is valid")
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), CascadeError> {
        if name == "mutant" {
            if value.fract() != 0.0 || value < 0.0 || value >= N_MUTANTS as f64 {
                return Err(CascadeError::OutOfRange {
                    name: name.into(),
                    value,
                });
            }
            self.mutant = value as usize;
        } else if RATE_NAMES.contains(&name) {
            self.rates.insert(name.into(), value);
        } else {
            return Err(CascadeError::UnknownParameter(name.into()));
        }
        Ok(())
    }

    pub fn scale(&mut self, name: &str, factor: f64) -> Result<(), CascadeError> {
        match self.rates.get_mut(name) {
            Some(v) => {
                *v *= factor;
                Ok(())
            }
            None => Err(CascadeError::UnknownParameter(name.into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CascadeModel {
    r: [f64; 34],
    prod: [f64; 6],
}

impl CascadeModel {
    pub fn new(params: &CascadeParams) -> Result<Self, CascadeError> {
        let mut r = [0.0; 34];
        for (slot, name) in r.iter_mut().zip(RATE_NAMES) {
            let v = *params
                .rates
                .get(name)
                .ok_or_else(|| CascadeError::UnknownRate(name.into()))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(CascadeError::OutOfRange {
                    name: name.into(),
                    value: v,
                });
            }
            *slot = v;
        }
        if params.mutant >= N_MUTANTS {
            return Err(CascadeError::OutOfRange {
                name: "mutant".into(),
                value: params.mutant as f64,
            });
        }
        Ok(Self {
            r,
            prod: mutant_factors(params.mutant),
        })
    }
}

fn hill(x: f64, k: f64, n: f64) -> f64 {
    let xn = x.powf(n);
    xn / (k.powf(n) + xn)
}

impl OdeSystem for CascadeModel {
    fn entity_names(&self) -> Vec<String> {
        ENTITIES.iter().map(|s| s.to_string()).collect()
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; 6]
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let [a_ft, d_ft, tau_ft, a_fd, d_fd, k_cplx, b_soc1, v_soc1, k_soc1, n_soc1, ki_tfl1_soc1, d_soc1, b_lfy, v_lfy, k_lfy, n_lfy, v_lfy_ap1, k_lfy_ap1, n_lfy_ap1, ki_tfl1_lfy, d_lfy, b_tfl1, v_tfl1, ki_ap1, n_tfl1, d_tfl1, b_ap1, v_ap1, k_ap1, n_ap1, w_lfy, w_cplx, ki_tfl1_ap1, d_ap1] =
            self.r;
        let p = &self.prod;
        let [ft, fd, soc1, lfy, tfl1, ap1] = [y[0], y[1], y[2], y[3], y[4], y[5]];
        let complex = k_cplx * ft * fd;
        dy[0] = p[0] * a_ft * (1.0 - (-t / tau_ft).exp()) - d_ft * ft;
        dy[1] = p[1] * a_fd - d_fd * fd;
        dy[2] = p[2] * (b_soc1 + v_soc1 * hill(complex, k_soc1, n_soc1) / (1.0 + tfl1 / ki_tfl1_soc1)) - d_soc1 * soc1;
        dy[3] = p[3]
            * (b_lfy
                + v_lfy * hill(soc1, k_lfy, n_lfy) / (1.0 + tfl1 / ki_tfl1_lfy)
                + v_lfy_ap1 * hill(ap1, k_lfy_ap1, n_lfy_ap1))
            - d_lfy * lfy;
        dy[4] = p[4] * (b_tfl1 + v_tfl1 / (1.0 + (ap1 / ki_ap1).powf(n_tfl1))) - d_tfl1 * tfl1;
        dy[5] = p[5]
            * (b_ap1 + v_ap1 * hill(w_lfy * lfy + w_cplx * complex, k_ap1, n_ap1) / (1.0 + tfl1 / ki_tfl1_ap1))
            - d_ap1 * ap1;
    }
}

/// Output grid, step and AP1 threshold used by the preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeSchedule {
    pub t_end: f64,
    pub dt_out: f64,
    pub step: f64,
    pub threshold: f64,
}

impl Default for CascadeSchedule {
    fn default() -> Self {
        Self {
            t_end: 30.0,
            dt_out: 0.25,
            step: 0.01,
            threshold: 1.0,
        }
    }
}

pub fn simulate_cascade(params: &CascadeParams, schedule: CascadeSchedule) -> Result<Trajectory, String> {
    let model = CascadeModel::new(params).map_err(|e| e.to_string())?;
    let grid = super::ode::uniform_grid(schedule.t_end, schedule.dt_out);
    super::ode::simulate(&model, &grid, schedule.step).map_err(|e| e.to_string())
}
