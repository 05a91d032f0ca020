//! Run configuration: flat dotted keys (`pulse.tau = 1.0`) read from a TOML
//! file, a previous run's manifest, or `--set` overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rotorient::SimulationConfig64;
use toml::Value;

/// Every key the configuration accepts.
pub const KEYS: &[&str] = &[
    "molecule.b_e",
    "molecule.a_e",
    "molecule.d_j",
    "molecule.d_jk",
    "molecule.d_k",
    "molecule.dipole_debye",
    "ensemble.temperature_k",
    "ensemble.j_max",
    "ensemble.weight_cutoff",
    "ensemble.truncation_tolerance",
    "pulse.e1",
    "pulse.tau",
    "pulse.t0",
    "pulse.support_half_width",
    "relaxation.t2",
    "relaxation.pressure",
    "grid.t_start",
    "grid.t_end",
    "grid.dt_out",
    "propagation.dt",
    "fid.alpha",
    "fid.include_incident",
    "output.dir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sim: SimulationConfig64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim: SimulationConfig64::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn number(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => bail!("{key}: expected a number, got {v}"),
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Parses the right-hand side of `--set key=value`; bare words are strings.
fn parse_scalar(text: &str) -> Value {
    let text = text.trim();
    match format!("v = {text}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.into())),
        Err(_) => Value::String(text.into()),
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then each override in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            for (k, v) in read_entries(p, &text)? {
                cfg.set(&k, &v)?;
            }
        }
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got '{item}'"))?;
            cfg.set(k.trim(), &parse_scalar(v))?;
        }
        cfg.sim.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let s = &mut self.sim;
        match key {
            "molecule.b_e" => s.molecule.constants.b_e = number(key, v)?,
            "molecule.a_e" => s.molecule.constants.a_e = number(key, v)?,
            "molecule.d_j" => s.molecule.constants.d_j = number(key, v)?,
            "molecule.d_jk" => s.molecule.constants.d_jk = number(key, v)?,
            "molecule.d_k" => s.molecule.constants.d_k = number(key, v)?,
            "molecule.dipole_debye" => s.molecule.dipole_debye = number(key, v)?,
            "ensemble.temperature_k" => s.ensemble.temperature_k = number(key, v)?,
            "ensemble.j_max" => {
                s.ensemble.j_max = match v {
                    Value::Integer(i) => u32::try_from(*i).map_err(|_| anyhow!("{key} must be a non-negative integer, got {i}"))?,
                    _ => bail!("{key}: expected an integer, got {v}"),
                }
            }
            "ensemble.weight_cutoff" => s.ensemble.weight_cutoff = number(key, v)?,
            "ensemble.truncation_tolerance" => s.ensemble.truncation_tolerance = number(key, v)?,
            "pulse.e1" => s.pulse.amplitude_kv_cm = number(key, v)?,
            "pulse.tau" => s.pulse.tau_ps = number(key, v)?,
            "pulse.t0" => s.pulse.t0_ps = number(key, v)?,
            "pulse.support_half_width" => s.pulse.support_half_width = number(key, v)?,
            "relaxation.t2" => s.relaxation.t2_ps_atm = number(key, v)?,
            "relaxation.pressure" => s.relaxation.pressure_bar = number(key, v)?,
            "grid.t_start" => s.grid.t_start_ps = number(key, v)?,
            "grid.t_end" => s.grid.t_end_ps = number(key, v)?,
            "grid.dt_out" => s.grid.dt_ps = number(key, v)?,
            "propagation.dt" => s.propagation.max_step_ps = number(key, v)?,
            "fid.alpha" => s.fid.alpha = number(key, v)?,
            "fid.include_incident" => {
                s.fid.include_incident = v.as_bool().ok_or_else(|| anyhow!("{key}: expected true or false, got {v}"))?
            }
            "output.dir" => {
                self.output_dir = PathBuf::from(v.as_str().ok_or_else(|| anyhow!("{key}: expected a path string, got {v}"))?)
            }
            _ => bail!("unknown config key '{key}' (known keys: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Every key with its current value.
    pub fn entries(&self) -> BTreeMap<&'static str, serde_json::Value> {
        use serde_json::Value as J;
        let s = &self.sim;
        let c = &s.molecule.constants;
        BTreeMap::from([
            ("molecule.b_e", J::from(c.b_e)),
            ("molecule.a_e", c.a_e.into()),
            ("molecule.d_j", c.d_j.into()),
            ("molecule.d_jk", c.d_jk.into()),
            ("molecule.d_k", c.d_k.into()),
            ("molecule.dipole_debye", s.molecule.dipole_debye.into()),
            ("ensemble.temperature_k", s.ensemble.temperature_k.into()),
            ("ensemble.j_max", s.ensemble.j_max.into()),
            ("ensemble.weight_cutoff", s.ensemble.weight_cutoff.into()),
            ("ensemble.truncation_tolerance", s.ensemble.truncation_tolerance.into()),
            ("pulse.e1", s.pulse.amplitude_kv_cm.into()),
            ("pulse.tau", s.pulse.tau_ps.into()),
            ("pulse.t0", s.pulse.t0_ps.into()),
            ("pulse.support_half_width", s.pulse.support_half_width.into()),
            ("relaxation.t2", s.relaxation.t2_ps_atm.into()),
            ("relaxation.pressure", s.relaxation.pressure_bar.into()),
            ("grid.t_start", s.grid.t_start_ps.into()),
            ("grid.t_end", s.grid.t_end_ps.into()),
            ("grid.dt_out", s.grid.dt_ps.into()),
            ("propagation.dt", s.propagation.max_step_ps.into()),
            ("fid.alpha", s.fid.alpha.into()),
            ("fid.include_incident", s.fid.include_incident.into()),
            ("output.dir", self.output_dir.display().to_string().into()),
        ])
    }
}

/// Key/value pairs from a TOML config or from the `config` object of a
/// manifest written by an earlier run.
fn read_entries(path: &Path, text: &str) -> Result<Vec<(String, Value)>> {
    let mut out = Vec::new();
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value = serde_json::from_str(text).with_context(|| format!("parsing {}", path.display()))?;
        let cfg = json.get("config").unwrap_or(&json);
        let map = cfg.as_object().ok_or_else(|| anyhow!("{}: expected an object of config keys", path.display()))?;
        for (k, v) in map {
            let value: Value = serde::Deserialize::deserialize(v.clone()).with_context(|| format!("{k}: unsupported value"))?;
            out.push((k.clone(), value));
        }
    } else {
        let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
        flatten("", &table, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_cover_every_key() {
        let e = RunConfig::default().entries();
        assert_eq!(e.len(), KEYS.len());
        assert!(e.values().all(|v| !v.is_null()));
        assert_eq!(e["pulse.e1"], serde_json::json!(100.0));
    }

    #[test]
    fn scalars_parse_as_toml() {
        assert_eq!(parse_scalar("1.5"), Value::Float(1.5));
        assert_eq!(parse_scalar("12"), Value::Integer(12));
        assert_eq!(parse_scalar("true"), Value::Boolean(true));
        assert_eq!(parse_scalar("runs/a"), Value::String("runs/a".into()));
    }

    #[test]
    fn set_and_entries_round_trip() {
        let mut a = RunConfig::default();
        a.set("pulse.tau", &Value::Float(1.7)).unwrap();
        a.set("ensemble.j_max", &Value::Integer(30)).unwrap();
        let mut b = RunConfig::default();
        for (k, v) in a.entries() {
            let v: Value = serde::Deserialize::deserialize(v).unwrap();
            b.set(k, &v).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::default().set("pulse.width", &Value::Float(1.0)).unwrap_err();
        assert!(err.to_string().contains("pulse.width"));
    }
}
