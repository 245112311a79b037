//! Radiation-response ODE model.
//!
//! Four coupled modules: DNA break repair, the p53/MDM2/WIP1/ATM circuit,
//! apoptosis (intrinsic via cytochrome c and the apoptosome, extrinsic via
//! FasL) and cell-cycle arrest (SIAH/Reprimo, and for Rb-intact cells the
//! Cyclin E/CDK2 brake).
//!
//! Every rate constant is named individually. Saturating terms have the form
//! `V * S / (Km + S)` with their own `km_*` constant; MDM2 protein decays at
//! `k_mdm2_deg`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ode::{integrate_ode, OdeError, OdeSystem, Trajectory};
use crate::paramfile::{parse_param_file, ParamFileError, ParamOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadiationError {
    #[error("missing rate constant `{0}`")]
    UnknownRate(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}` out of range: {value}")]
    OutOfRange { name: String, value: f64 },
    #[error("missing entity `{0}`")]
    MissingEntity(String),
    #[error(transparent)]
    File(#[from] ParamFileError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Default parameter file shipped with the crate.
pub const DEFAULT_PARAMS: &str = include_str!("../../presets/radiation_params.txt");

pub const ENTITIES: [&str; 28] = [
    "oRadiation",
    "oBrokenEnds",
    "oCaps",
    "oCappedEnds",
    "oCappedEndsReady",
    "oFixed",
    "pP53Nuc",
    "pMDM2Nuc",
    "mMDM2Nuc",
    "pP53NucPhos",
    "pWIP1Nuc",
    "mWIP1Nuc",
    "pATMNucPhos",
    "pBcl2",
    "pBclXl",
    "pFasL",
    "pBax",
    "pApaf1",
    "pCytC",
    "pApoptosome",
    "oApoptosis",
    "pE2F",
    "pARF",
    "pP21cip",
    "pECDK2",
    "pSiah",
    "pReprimo",
    "oArrestsignal",
];

const RADIATION: usize = 0;
const BROKEN_ENDS: usize = 1;
const CAPS: usize = 2;
const CAPPED_ENDS: usize = 3;
const CAPPED_READY: usize = 4;
const FIXED: usize = 5;
const P53: usize = 6;
const MDM2: usize = 7;
const MMDM2: usize = 8;
const P53_PHOS: usize = 9;
const WIP1: usize = 10;
const MWIP1: usize = 11;
const ATM_PHOS: usize = 12;
const BCL2: usize = 13;
const BCLXL: usize = 14;
const FASL: usize = 15;
const BAX: usize = 16;
const APAF1: usize = 17;
const CYTC: usize = 18;
const APOPTOSOME: usize = 19;
const APOPTOSIS: usize = 20;
const E2F: usize = 21;
const ARF: usize = 22;
const P21: usize = 23;
const ECDK2: usize = 24;
const SIAH: usize = 25;
const REPRIMO: usize = 26;
const ARREST: usize = 27;

pub const MUTATIONS: [&str; 8] = [
    "MUT_p53",
    "MUT_arf",
    "MUT_Bax",
    "MUT_Apaf1",
    "MUT_Rb",
    "MUT_myc",
    "MUT_Siah",
    "MUT_Reprimo",
];

macro_rules! rate_table {
    ($($field:ident),* $(,)?) => {
        /// Dense copy of the rate constants, resolved once per simulation.
        #[derive(Debug, Clone, PartialEq)]
        #[allow(non_snake_case)]
        pub struct Rates {
            $(pub $field: f64,)*
        }

        pub const RATE_NAMES: &[&str] = &[$(stringify!($field)),*];

        impl Rates {
            fn from_map(map: &BTreeMap<String, f64>) -> Result<Self, RadiationError> {
                Ok(Self {
                    $($field: *map
                        .get(stringify!($field))
                        .ok_or_else(|| RadiationError::UnknownRate(stringify!($field).into()))?,)*
                })
            }
        }
    };
}

rate_table!(
    // damage and repair
    k_rad_decay,
    k_break,
    k_caps_prod,
    k_caps_max,
    k_cap_bind,
    k_caps_decay,
    k_ready,
    k_fix,
    // p53 circuit
    k_p53_syn,
    k_p53_deg,
    k_wip1_dephos,
    km_wip1_dephos,
    k_mdm2_ubiq,
    km_mdm2_ubiq,
    k_atm_phos,
    km_atm_phos,
    k_mdm2_tl,
    k_mdm2_deg,
    k_arf_mdm2,
    k_mmdm2_basal,
    k_mmdm2_tx,
    kd_mdm2_tx,
    k_mmdm2_deg,
    k_wip1_tl,
    k_wip1_deg,
    k_mwip1_basal,
    k_mwip1_tx,
    kd_wip1_tx,
    k_mwip1_deg,
    k_atm_act,
    atm_total,
    km_atm_act,
    k_atm_deact,
    km_atm_deact,
    // apoptosis
    k_bcl2_syn,
    km_bcl2,
    k_bcl2_deg,
    k_bclxl_syn,
    km_bclxl,
    k_bclxl_deg,
    k_fasl_syn,
    km_fasl,
    k_fasl_deg,
    k_bax_syn,
    km_bax,
    k_bax_deg,
    k_apaf1_syn,
    km_apaf1,
    k_apaf1_deg,
    k_cytc_rel,
    w_bax,
    th_bax,
    w_bcl2,
    th_bcl2,
    w_bclxl,
    th_bclxl,
    k_cytc_deg,
    k_apoptosome_form,
    k_apoptosome_deg,
    k_fasl_apo,
    k_apoptosome_apo,
    k_apoptosis_deg,
    // arrest
    k_e2f_deg,
    k_arf_syn,
    km_arf_e2f,
    k_arf_deg,
    k_p21_syn,
    km_p21,
    k_p21_deg,
    k_ecdk2_syn,
    k_p21_inh,
    km_p21_inh,
    k_ecdk2_deg,
    ECDK2_max,
    k_siah_syn,
    km_siah,
    k_siah_deg,
    k_reprimo_syn,
    km_reprimo,
    k_reprimo_deg,
    ka1,
    ka2,
);

/// Named parameters of one radiation simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationParams {
    /// Every rate constant by name. `ka1` is a signed slope; all others are
    /// strictly positive.
    pub rates: BTreeMap<String, f64>,
    /// Mutation coefficients in [0, 1].
    pub mutations: BTreeMap<String, f64>,
    /// 1 when Rb is functional, 0 when impaired.
    pub rb_status: u8,
}

impl RadiationParams {
    /// Parses a flat parameter file. Every name must be a rate, a mutation
    /// coefficient or `rb_status`; scale lines are not allowed here.
    pub fn from_text(text: &str) -> Result<Self, RadiationError> {
        let mut p = Self {
            rates: BTreeMap::new(),
            mutations: BTreeMap::new(),
            rb_status: 1,
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

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), RadiationError> {
        if name == "rb_status" {
            if value != 0.0 && value != 1.0 {
                return Err(RadiationError::OutOfRange {
                    name: name.into(),
                    value,
                });
            }
            self.rb_status = value as u8;
        } else if MUTATIONS.contains(&name) {
            self.mutations.insert(name.to_string(), value);
        } else if RATE_NAMES.contains(&name) {
            self.rates.insert(name.to_string(), value);
        } else {
            return Err(RadiationError::UnknownParameter(name.into()));
        }
        Ok(())
    }

    /// Multiplies an existing rate or mutation coefficient by `factor`.
    pub fn scale(&mut self, name: &str, factor: f64) -> Result<(), RadiationError> {
        let slot = if MUTATIONS.contains(&name) {
            self.mutations.get_mut(name)
        } else {
            self.rates.get_mut(name)
        };
        match slot {
            Some(v) => {
                *v *= factor;
                Ok(())
            }
            None => Err(RadiationError::UnknownParameter(name.into())),
        }
    }

    pub fn validate(&self) -> Result<(), RadiationError> {
        for name in RATE_NAMES {
            let v = *self
                .rates
                .get(*name)
                .ok_or_else(|| RadiationError::UnknownRate((*name).into()))?;
            let ok = if *name == "ka1" {
                v != 0.0 && v.is_finite()
            } else {
                v > 0.0 && v.is_finite()
            };
            if !ok {
                return Err(RadiationError::OutOfRange {
                    name: (*name).into(),
                    value: v,
                });
            }
        }
        for name in MUTATIONS {
            let v = self.mutation(name);
            if !(0.0..=1.0).contains(&v) {
                return Err(RadiationError::OutOfRange {
                    name: name.into(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Missing mutation coefficients default to 1 (wild type).
    pub fn mutation(&self, name: &str) -> f64 {
        self.mutations.get(name).copied().unwrap_or(1.0)
    }
}

/// The resolved model: dense rates plus mutation coefficients.
#[derive(Debug, Clone)]
pub struct RadiationModel {
    pub rates: Rates,
    mut_p53: f64,
    mut_arf: f64,
    mut_bax: f64,
    mut_apaf1: f64,
    mut_rb: f64,
    mut_myc: f64,
    mut_siah: f64,
    mut_reprimo: f64,
    rb_functional: bool,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mm(v: f64, km: f64, s: f64) -> f64 {
    v * s / (km + s)
}

impl RadiationModel {
    pub fn new(params: &RadiationParams) -> Result<Self, RadiationError> {
        params.validate()?;
        Ok(Self {
            rates: Rates::from_map(&params.rates)?,
            mut_p53: params.mutation("MUT_p53"),
            mut_arf: params.mutation("MUT_arf"),
            mut_bax: params.mutation("MUT_Bax"),
            mut_apaf1: params.mutation("MUT_Apaf1"),
            mut_rb: params.mutation("MUT_Rb"),
            mut_myc: params.mutation("MUT_myc"),
            mut_siah: params.mutation("MUT_Siah"),
            mut_reprimo: params.mutation("MUT_Reprimo"),
            rb_functional: params.rb_status == 1,
        })
    }

    /// Tetramerized active p53.
    pub fn p53tt(&self, p53_phos: f64) -> f64 {
        self.mut_p53 * p53_phos.powi(4)
    }

    /// SIAH/Reprimo arrest sigmoid.
    pub fn arrest_sigmoid(&self, siah: f64, reprimo: f64) -> f64 {
        let r = &self.rates;
        1.0 / (1.0 + (r.ka1 * (siah + reprimo - r.ka2)).exp())
    }

    /// Fraction of arrest attributable to a low Cyclin E/CDK2 level,
    /// `1 - ECDK2 / ECDK2_max` clamped to [0, 1].
    pub fn lambda_low(&self, ecdk2: f64) -> f64 {
        (1.0 - ecdk2 / self.rates.ECDK2_max).clamp(0.0, 1.0)
    }

    /// Arrest signal level as a function of the current state.
    pub fn arrest_target(&self, siah: f64, reprimo: f64, ecdk2: f64) -> f64 {
        let g = self.arrest_sigmoid(siah, reprimo);
        if self.rb_functional {
            let lambda = self.lambda_low(ecdk2);
            lambda + (1.0 - lambda) * g
        } else {
            g
        }
    }

    fn p53_target(&self, syn: f64, km: f64, deg: f64, p53tt: f64, level: f64) -> f64 {
        mm(syn, km, p53tt) - deg * level
    }
}

impl OdeSystem for RadiationModel {
    fn entity_names(&self) -> Vec<String> {
        ENTITIES.iter().map(|s| s.to_string()).collect()
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut y = vec![0.0; ENTITIES.len()];
        y[RADIATION] = 1.0;
        y[ECDK2] = self.rates.ECDK2_max;
        y
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let r = &self.rates;
        let be = y[BROKEN_ENDS];
        let caps = y[CAPS];
        let capping = r.k_cap_bind * be * caps;

        dy[RADIATION] = -r.k_rad_decay * y[RADIATION];
        dy[BROKEN_ENDS] = r.k_break * y[RADIATION] - capping;
        dy[CAPS] = (r.k_caps_prod * be).min(r.k_caps_max) - capping - r.k_caps_decay * caps;
        dy[CAPPED_ENDS] = capping - r.k_ready * y[CAPPED_ENDS];
        dy[CAPPED_READY] = r.k_ready * y[CAPPED_ENDS] - r.k_fix * y[CAPPED_READY];
        dy[FIXED] = r.k_fix * y[CAPPED_READY];

        let p53 = y[P53];
        let phos = y[P53_PHOS];
        let mdm2 = y[MDM2];
        let wip1 = y[WIP1];
        let atm = y[ATM_PHOS];
        let p53tt = self.p53tt(phos);

        let dephos = r.k_wip1_dephos * wip1 * phos / (r.km_wip1_dephos + phos);
        let phosph = r.k_atm_phos * atm * p53 / (r.km_atm_phos + p53);
        dy[P53] =
            r.k_p53_syn + dephos - r.k_mdm2_ubiq * mdm2 * p53 / (r.km_mdm2_ubiq + p53) - phosph - r.k_p53_deg * p53;
        dy[MDM2] = r.k_mdm2_tl * y[MMDM2] - r.k_mdm2_deg * mdm2 - self.mut_arf * r.k_arf_mdm2 * y[ARF] * mdm2;
        dy[MMDM2] = r.k_mmdm2_basal + r.k_mmdm2_tx * p53tt / (r.kd_mdm2_tx.powi(4) + p53tt) - r.k_mmdm2_deg * y[MMDM2];
        dy[P53_PHOS] = phosph - dephos;
        dy[WIP1] = r.k_wip1_tl * y[MWIP1] - r.k_wip1_deg * wip1;
        dy[MWIP1] = r.k_mwip1_basal + r.k_mwip1_tx * p53tt / (r.kd_wip1_tx.powi(4) + p53tt) - r.k_mwip1_deg * y[MWIP1];
        let inactive = 0.5 * (r.atm_total - atm).max(0.0);
        dy[ATM_PHOS] = 2.0 * r.k_atm_act * be * inactive / (r.km_atm_act + inactive)
            - 2.0 * r.k_atm_deact * wip1 * atm * atm / (r.km_atm_deact + atm * atm);

        dy[BCL2] = self.p53_target(r.k_bcl2_syn, r.km_bcl2, r.k_bcl2_deg, p53tt, y[BCL2]);
        dy[BCLXL] = self.p53_target(r.k_bclxl_syn, r.km_bclxl, r.k_bclxl_deg, p53tt, y[BCLXL]);
        dy[FASL] = self.p53_target(r.k_fasl_syn, r.km_fasl, r.k_fasl_deg, p53tt, y[FASL]);
        dy[BAX] = self.mut_bax * self.p53_target(r.k_bax_syn, r.km_bax, r.k_bax_deg, p53tt, y[BAX]);
        dy[APAF1] = self.mut_apaf1 * self.p53_target(r.k_apaf1_syn, r.km_apaf1, r.k_apaf1_deg, p53tt, y[APAF1]);

        let cytc = y[CYTC];
        let apoptosome_form = r.k_apoptosome_form * y[APAF1] * cytc.powi(7);
        dy[CYTC] = r.k_cytc_rel
            * logistic(r.w_bax * y[BAX] - r.th_bax)
            * (1.0 - logistic(r.w_bcl2 * y[BCL2] - r.th_bcl2))
            * (1.0 - logistic(r.w_bclxl * y[BCLXL] - r.th_bclxl))
            - r.k_cytc_deg * cytc
            - apoptosome_form;
        dy[APOPTOSOME] = apoptosome_form - r.k_apoptosome_deg * y[APOPTOSOME];
        dy[APOPTOSIS] = r.k_fasl_apo * y[FASL] + r.k_apoptosome_apo * y[APOPTOSOME] - r.k_apoptosis_deg * y[APOPTOSIS];

        dy[E2F] = self.mut_rb * self.mut_myc - r.k_e2f_deg * y[E2F];
        dy[ARF] = self.mut_arf
            * (mm(r.k_arf_syn, r.km_arf_e2f, y[E2F]) - r.k_arf_deg * y[ARF] - r.k_arf_mdm2 * y[ARF] * mdm2);
        dy[P21] = self.p53_target(r.k_p21_syn, r.km_p21, r.k_p21_deg, p53tt, y[P21]);
        dy[ECDK2] = r.k_ecdk2_syn - mm(r.k_p21_inh, r.km_p21_inh, y[P21]) - r.k_ecdk2_deg * y[ECDK2];
        dy[SIAH] = self.mut_siah * self.p53_target(r.k_siah_syn, r.km_siah, r.k_siah_deg, p53tt, y[SIAH]);
        dy[REPRIMO] =
            self.mut_reprimo * self.p53_target(r.k_reprimo_syn, r.km_reprimo, r.k_reprimo_deg, p53tt, y[REPRIMO]);

        // Arrest signal: time derivative of the algebraic target, by the chain rule.
        let g = self.arrest_sigmoid(y[SIAH], y[REPRIMO]);
        let dg = -r.ka1 * g * (1.0 - g) * (dy[SIAH] + dy[REPRIMO]);
        dy[ARREST] = if self.rb_functional {
            let ecdk2 = y[ECDK2];
            let lambda = self.lambda_low(ecdk2);
            let dlambda = if ecdk2 > 0.0 && ecdk2 < r.ECDK2_max {
                -dy[ECDK2] / r.ECDK2_max
            } else {
                0.0
            };
            (1.0 - g) * dlambda + (1.0 - lambda) * dg
        } else {
            dg
        };
    }
}

/// Output grid and step used by the radiation presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiationSchedule {
    pub t_end: f64,
    pub dt_out: f64,
    pub step: f64,
}

impl Default for RadiationSchedule {
    fn default() -> Self {
        Self {
            t_end: 24.0,
            dt_out: 0.5,
            step: 0.01,
        }
    }
}

pub fn simulate_radiation(params: &RadiationParams, schedule: RadiationSchedule) -> Result<Trajectory, RadiationError> {
    let model = RadiationModel::new(params)?;
    let grid = super::ode::uniform_grid(schedule.t_end, schedule.dt_out);
    Ok(integrate_ode(
        |t, y, dy| model.rhs(t, y, dy),
        model.entity_names(),
        &model.initial_state(),
        &grid,
        schedule.step,
    )?)
}

/// Fate class from end-of-simulation levels: 1 apoptosis, 2 repaired and
/// cycling, 3 mitotic catastrophe, 4 quiescence.
pub fn classify_radiation(final_levels: &BTreeMap<String, f64>) -> Result<u8, RadiationError> {
    let get = |name: &str| {
        final_levels
            .get(name)
            .copied()
            .ok_or_else(|| RadiationError::MissingEntity(name.into()))
    };
    let apoptosis = get("oApoptosis")?;
    let fixed = get("oFixed")?;
    let arrest = get("oArrestsignal")?;
    Ok(classify_levels(apoptosis, fixed, arrest))
}

pub fn classify_levels(apoptosis: f64, fixed: f64, arrest: f64) -> u8 {
    if apoptosis >= 0.8 {
        1
    } else if fixed > 0.9 && arrest < 0.5 {
        2
    } else if fixed <= 0.9 && arrest < 0.5 {
        3
    } else {
        4
    }
}
