//! Flat `section.key = value` configuration files. Lines are independent,
//! `#` starts a comment anywhere, unknown keys are errors, and a missing
//! key means its default. `serialize` writes every key in a fixed order,
//! so configs round-trip exactly (float values print in shortest
//! round-trip form).

use thiserror::Error;

use crate::grid::BoundaryKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("`{field}` out of range: {value}")]
    Range { field: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    CrankNicolson,
    FirstOrder,
}

impl SchemeKind {
    fn as_key(self) -> &'static str {
        match self {
            SchemeKind::CrankNicolson => "cn",
            SchemeKind::FirstOrder => "first_order",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub bc: BoundaryKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSection {
    pub epsilon: f64,
    pub beta: f64,
    pub m: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSection {
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoSection {
    pub out_dir: String,
    /// Steps between snapshot files; 0 disables snapshots.
    pub snapshot_stride: usize,
    /// Steps between energy rows; 0 disables the energy file.
    pub energy_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub grid: GridSection,
    pub params: ParamSection,
    pub time: TimeSection,
    pub scheme: SchemeKind,
    pub io: IoSection,
    /// Parsed and carried but not consumed yet; the solver is
    /// deterministic and has no random path.
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            grid: GridSection {
                nx: 64,
                ny: 64,
                lx: 1.0,
                ly: 1.0,
                bc: BoundaryKind::Neumann,
            },
            params: ParamSection {
                epsilon: 0.25,
                beta: 0.9,
                m: 0.001,
                c0: 0.0,
            },
            time: TimeSection {
                dt: 0.01,
                t_final: 0.5,
            },
            scheme: SchemeKind::CrankNicolson,
            io: IoSection {
                out_dir: "out".to_string(),
                snapshot_stride: 0,
                energy_stride: 1,
            },
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

pub fn parse_config(text: &str) -> Result<SimulationConfig, ConfigError> {
    let mut cfg = SimulationConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("");
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        seen.push(key.to_string());
        let bad = |v: &str| ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: v.to_string(),
        };
        match key {
            "grid.nx" => cfg.grid.nx = parse_num(line, key, value)?,
            "grid.ny" => cfg.grid.ny = parse_num(line, key, value)?,
            "grid.lx" => cfg.grid.lx = parse_num(line, key, value)?,
            "grid.ly" => cfg.grid.ly = parse_num(line, key, value)?,
            "grid.bc" => {
                cfg.grid.bc = match value {
                    "neumann" => BoundaryKind::Neumann,
                    "periodic" => BoundaryKind::Periodic,
                    other => return Err(bad(other)),
                }
            }
            "params.epsilon" => cfg.params.epsilon = parse_num(line, key, value)?,
            "params.beta" => cfg.params.beta = parse_num(line, key, value)?,
            "params.m" => cfg.params.m = parse_num(line, key, value)?,
            "params.c0" => cfg.params.c0 = parse_num(line, key, value)?,
            "time.dt" => cfg.time.dt = parse_num(line, key, value)?,
            "time.t_final" => cfg.time.t_final = parse_num(line, key, value)?,
            "scheme" => {
                cfg.scheme = match value {
                    "cn" => SchemeKind::CrankNicolson,
                    "first_order" | "first-order" => SchemeKind::FirstOrder,
                    other => return Err(bad(other)),
                }
            }
            "io.out_dir" => cfg.io.out_dir = value.to_string(),
            "io.snapshot_stride" => cfg.io.snapshot_stride = parse_num(line, key, value)?,
            "io.energy_stride" => cfg.io.energy_stride = parse_num(line, key, value)?,
            "seed" => cfg.seed = parse_num(line, key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |field: &'static str, value: String| Err(ConfigError::Range { field, value });
        if self.grid.nx < 2 {
            return range("grid.nx", self.grid.nx.to_string());
        }
        if self.grid.ny < 2 {
            return range("grid.ny", self.grid.ny.to_string());
        }
        if !(self.grid.lx > 0.0 && self.grid.lx.is_finite()) {
            return range("grid.lx", self.grid.lx.to_string());
        }
        if !(self.grid.ly > 0.0 && self.grid.ly.is_finite()) {
            return range("grid.ly", self.grid.ly.to_string());
        }
        if !(self.params.epsilon > 0.0 && self.params.epsilon < 1.0) {
            return range("params.epsilon", self.params.epsilon.to_string());
        }
        if !(self.params.beta >= 0.0 && self.params.beta.is_finite()) {
            return range("params.beta", self.params.beta.to_string());
        }
        if !(self.params.m > 0.0 && self.params.m.is_finite()) {
            return range("params.m", self.params.m.to_string());
        }
        if !(self.params.c0 >= 0.0 && self.params.c0.is_finite()) {
            return range("params.c0", self.params.c0.to_string());
        }
        if !(self.time.dt > 0.0 && self.time.dt.is_finite()) {
            return range("time.dt", self.time.dt.to_string());
        }
        if !(self.time.t_final > 0.0 && self.time.t_final.is_finite()) {
            return range("time.t_final", self.time.t_final.to_string());
        }
        // t_final must be a whole number of steps, same test the time
        // loop applies.
        let n = (self.time.t_final / self.time.dt).round();
        if n < 1.0
            || (n * self.time.dt - self.time.t_final).abs()
                > 1e-12 * self.time.t_final.max(self.time.dt)
        {
            return range("time.t_final", self.time.t_final.to_string());
        }
        Ok(())
    }

    /// Canonical text form; `parse_config` of the output reproduces the
    /// config exactly.
    pub fn serialize(&self) -> String {
        let bc = match self.grid.bc {
            BoundaryKind::Neumann => "neumann",
            BoundaryKind::Periodic => "periodic",
        };
        format!(
            "grid.nx = {}\n\
             grid.ny = {}\n\
             grid.lx = {}\n\
             grid.ly = {}\n\
             grid.bc = {}\n\
             params.epsilon = {}\n\
             params.beta = {}\n\
             params.m = {}\n\
             params.c0 = {}\n\
             time.dt = {}\n\
             time.t_final = {}\n\
             scheme = {}\n\
             io.out_dir = {}\n\
             io.snapshot_stride = {}\n\
             io.energy_stride = {}\n\
             seed = {}\n",
            self.grid.nx,
            self.grid.ny,
            self.grid.lx,
            self.grid.ly,
            bc,
            self.params.epsilon,
            self.params.beta,
            self.params.m,
            self.params.c0,
            self.time.dt,
            self.time.t_final,
            self.scheme.as_key(),
            self.io.out_dir,
            self.io.snapshot_stride,
            self.io.energy_stride,
            self.seed,
        )
    }
}
