//! Single-machine-infinite-bus generator models.
//!
//! The machine connects to an infinite bus `V∠0` through a line reactance
//! `x_e`; stator resistance is neglected. With an internal source
//! `(e_d, e_q)` behind reactances `(x_dd, x_qq)` the network solution is
//!
//! ```text
//! i_d = (e_q - V cos δ) / (x_dd + x_e)
//! i_q = (V sin δ - e_d) / (x_qq + x_e)
//! v_d = e_d + x_qq i_q,   v_q = e_q - x_dd i_d
//! P_e = v_d i_d + v_q i_q
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{SignalCatalog, VarKind, VariableInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Swing2,
    Oneaxis3,
    Type1order5,
}

impl ModelId {
    pub const ALL: [ModelId; 3] = [ModelId::Swing2, ModelId::Oneaxis3, ModelId::Type1order5];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Swing2 => "swing2",
            ModelId::Oneaxis3 => "oneaxis3",
            ModelId::Type1order5 => "type1order5",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<ModelId, String> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown model `{s}` (expected swing2, oneaxis3 or type1order5)"))
    }
}

/// Machine and network constants, per unit on the machine base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    /// Base angular frequency (rad/s).
    pub omega_b: f64,
    /// Inertia constant (s).
    pub h: f64,
    pub d: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub x_dp: f64,
    pub x_qp: f64,
    pub x_qpp: f64,
    pub t_d0p: f64,
    pub t_q0p: f64,
    pub t_q0pp: f64,
    pub x_e: f64,
    pub v_inf: f64,
    /// Constant internal voltage of the classical model.
    pub e_p: f64,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            omega_b: 2.0 * std::f64::consts::PI * 50.0,
            h: 5.0,
            d: 5.0,
            x_d: 1.8,
            x_q: 1.7,
            x_dp: 0.3,
            x_qp: 0.55,
            x_qpp: 0.25,
            t_d0p: 6.0,
            t_q0p: 0.4,
            t_q0pp: 0.05,
            x_e: 0.5,
            v_inf: 1.0,
            e_p: 1.1,
        }
    }
}

impl MachineParams {
    pub fn for_model(id: ModelId) -> MachineParams {
        match id {
            ModelId::Swing2 => MachineParams {
                d: 10.0,
                ..Default::default()
            },
            _ => MachineParams::default(),
        }
    }
}

/// Exogenous inputs at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub p_m: f64,
    pub v_f: f64,
    /// Additive change of the line reactance.
    pub dx_e: f64,
}

/// Algebraic signals at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signals {
    pub i_d: f64,
    pub i_q: f64,
    pub p_e: f64,
    pub v_g: f64,
    pub theta_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkModel {
    pub id: ModelId,
    pub params: MachineParams,
}

impl BenchmarkModel {
    pub fn new(id: ModelId) -> BenchmarkModel {
        BenchmarkModel {
            id,
            params: MachineParams::for_model(id),
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self.id {
            ModelId::Swing2 => &["delta", "omega"],
            ModelId::Oneaxis3 => &["delta", "omega", "e_qp"],
            ModelId::Type1order5 => &["delta", "omega", "e_qp", "e_dp", "e_dpp"],
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_names().len()
    }

    pub fn state_info(&self) -> Vec<VariableInfo> {
        self.state_names()
            .iter()
            .map(|n| {
                let (unit, desc) = match *n {
                    "delta" => ("rad", "rotor angle"),
                    "omega" => ("pu", "rotor speed"),
                    "e_qp" => ("pu", "q-axis transient voltage"),
                    "e_dp" => ("pu", "d-axis transient voltage"),
                    _ => ("pu", "d-axis subtransient voltage"),
                };
                VariableInfo::new(n, unit, desc, VarKind::State)
            })
            .collect()
    }

    /// Signals that can be revealed on request, in fixed order.
    pub fn catalog(&self) -> SignalCatalog {
        let mut signals = vec![
            VariableInfo::new("i_d", "pu", "d-axis stator current", VarKind::Algebraic)
                .with_aliases(&["stator_current_d", "d_axis_current"]),
            VariableInfo::new("i_q", "pu", "q-axis stator current", VarKind::Algebraic)
                .with_aliases(&["stator_current_q", "q_axis_current"]),
            VariableInfo::new("P_e", "pu", "electromagnetic power", VarKind::Algebraic)
                .with_aliases(&["electrical_power", "electromagnetic_power", "Pelec", "T_e"]),
            VariableInfo::new("P_m", "pu", "mechanical input power", VarKind::Input)
                .with_aliases(&["mechanical_power", "Pmech", "T_m"]),
        ];
        if self.id != ModelId::Swing2 {
            signals.push(
                VariableInfo::new("v_f", "pu", "excitation (field) voltage", VarKind::Input)
                    .with_aliases(&["v_f*", "vf_star", "excitation_voltage", "field_voltage", "E_fd"]),
            );
        }
        signals.push(
            VariableInfo::new("V_g", "pu", "terminal voltage magnitude", VarKind::Algebraic)
                .with_aliases(&["terminal_voltage", "V_t", "v_g"]),
        );
        signals.push(
            VariableInfo::new("theta_g", "rad", "terminal voltage angle", VarKind::Algebraic)
                .with_aliases(&["terminal_angle", "theta_t"]),
        );
        SignalCatalog { signals }
    }

    /// Catalog signals the ground-truth state equations reference.
    pub fn rhs_variables(&self) -> Vec<String> {
        let names: &[&str] = match self.id {
            ModelId::Swing2 => &["P_e", "P_m"],
            ModelId::Oneaxis3 => &["i_d", "P_e", "P_m", "v_f"],
            ModelId::Type1order5 => &["i_d", "i_q", "P_e", "P_m", "v_f"],
        };
        names.iter().map(|n| n.to_string()).collect()
    }

    /// Internal source and reactances behind which the stator sits.
    fn source(&self, x: &[f64]) -> (f64, f64, f64, f64) {
        let p = &self.params;
        match self.id {
            ModelId::Swing2 => (p.e_p, 0.0, p.x_dp, p.x_dp),
            ModelId::Oneaxis3 => (x[2], 0.0, p.x_dp, p.x_q),
            ModelId::Type1order5 => (x[2], x[4], p.x_dp, p.x_qpp),
        }
    }

    pub fn signals(&self, x: &[f64], u: &Inputs) -> Signals {
        let p = &self.params;
        let (e_q, e_d, x_dd, x_qq) = self.source(x);
        let x_e = p.x_e + u.dx_e;
        let delta = x[0];
        let i_d = (e_q - p.v_inf * delta.cos()) / (x_dd + x_e);
        let i_q = (p.v_inf * delta.sin() - e_d) / (x_qq + x_e);
        let v_d = e_d + x_qq * i_q;
        let v_q = e_q - x_dd * i_d;
        Signals {
            i_d,
            i_q,
            p_e: v_d * i_d + v_q * i_q,
            v_g: v_d.hypot(v_q),
            theta_g: delta - v_d.atan2(v_q),
        }
    }

    pub fn rhs(&self, x: &[f64], u: &Inputs, dx: &mut [f64]) {
        let p = &self.params;
        let s = self.signals(x, u);
        let slip = x[1] - 1.0;
        dx[0] = p.omega_b * slip;
        dx[1] = (u.p_m - s.p_e - p.d * slip) / (2.0 * p.h);
        match self.id {
            ModelId::Swing2 => {}
            ModelId::Oneaxis3 => {
                dx[2] = (u.v_f - x[2] - (p.x_d - p.x_dp) * s.i_d) / p.t_d0p;
            }
            ModelId::Type1order5 => {
                dx[2] = (u.v_f - x[2] - (p.x_d - p.x_dp) * s.i_d) / p.t_d0p;
                dx[3] = (-x[3] + (p.x_q - p.x_qp) * s.i_q) / p.t_q0p;
                dx[4] = (-x[4] + x[3] + (p.x_qp - p.x_qpp) * s.i_q) / p.t_q0pp;
            }
        }
    }

    /// Value of a catalog signal by name.
    pub fn signal_value(&self, name: &str, x: &[f64], u: &Inputs) -> Option<f64> {
        let s = self.signals(x, u);
        Some(match name {
            "i_d" => s.i_d,
            "i_q" => s.i_q,
            "P_e" => s.p_e,
            "P_m" => u.p_m,
            "v_f" => u.v_f,
            "V_g" => s.v_g,
            "theta_g" => s.theta_g,
            _ => return None,
        })
    }

    /// Initial guess for the equilibrium search.
    pub fn nominal_state(&self) -> Vec<f64> {
        match self.id {
            ModelId::Swing2 => vec![0.5, 1.0],
            ModelId::Oneaxis3 => vec![0.5, 1.0, 1.0],
            ModelId::Type1order5 => vec![0.5, 1.0, 1.0, 0.2, 0.2],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swing_power_is_classical() {
        let m = BenchmarkModel::new(ModelId::Swing2);
        let u = Inputs {
            p_m: 0.8,
            v_f: 0.0,
            dx_e: 0.0,
        };
        let p = &m.params;
        let delta: f64 = 0.7;
        let s = m.signals(&[delta, 1.0], &u);
        let classical = p.e_p * p.v_inf / (p.x_dp + p.x_e) * delta.sin();
        assert!((s.p_e - classical).abs() < 1e-14);
        assert!((s.p_e - p.e_p * s.i_q).abs() < 1e-14);
    }

    #[test]
    fn catalog_orders_and_inputs() {
        let m = BenchmarkModel::new(ModelId::Oneaxis3);
        let c = m.catalog();
        assert_eq!(c.names(), ["i_d", "i_q", "P_e", "P_m", "v_f", "V_g", "theta_g"]);
        let inputs: Vec<_> = c.inputs().map(|s| s.name.as_str()).collect();
        assert_eq!(inputs, ["P_m", "v_f"]);
        assert_eq!(c.resolve("electrical power").unwrap().name, "P_e");
        assert_eq!(c.resolve("v_f*").unwrap().name, "v_f");
    }

    #[test]
    fn model_ids_parse() {
        for m in ModelId::ALL {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
        }
        assert!("ieee39".parse::<ModelId>().is_err());
    }
}
