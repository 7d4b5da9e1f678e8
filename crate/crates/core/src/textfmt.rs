//! Plain-text interchange format for environments and policies.
//!
//! One `key = value` pair per line; blank lines and lines starting with `#`
//! are ignored. Array values are whitespace-separated floats in row-major
//! order, printed with 17 significant digits so that every `f64` survives a
//! round trip bit for bit.
//!
//! ```text
//! kind = tabular-mdp
//! version = 1
//! states = 3
//! actions = 2
//! horizon = 2
//! start_state = 0
//! rewards = ...       # H*S*A values, index order [h][s][a]
//! transitions = ...   # H*S*A*S values, index order [h][s][a][s']
//! ```
//!
//! A policy file uses `kind = stochastic-policy`, the same dimension keys
//! (no `start_state`) and `probs = ...` with H*S*A values.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::mdp::{StochasticPolicy, TabularMdp};

pub const FORMAT_VERSION: u32 = 1;
const MDP_KIND: &str = "tabular-mdp";
const POLICY_KIND: &str = "stochastic-policy";

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_array<'a>(out: &mut String, key: &str, values: impl Iterator<Item = &'a f64>) {
    out.push_str(key);
    out.push_str(" =");
    for v in values {
        out.push(' ');
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
}

pub fn write_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind = {MDP_KIND}");
    let _ = writeln!(out, "version = {FORMAT_VERSION}");
    let _ = writeln!(out, "states = {}", mdp.num_states());
    let _ = writeln!(out, "actions = {}", mdp.num_actions());
    let _ = writeln!(out, "horizon = {}", mdp.horizon());
    let _ = writeln!(out, "start_state = {}", mdp.start_state());
    push_array(&mut out, "rewards", mdp.rewards().iter());
    push_array(&mut out, "transitions", mdp.transitions().iter());
    out
}

pub fn write_policy(policy: &StochasticPolicy) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind = {POLICY_KIND}");
    let _ = writeln!(out, "version = {FORMAT_VERSION}");
    let _ = writeln!(out, "states = {}", policy.num_states());
    let _ = writeln!(out, "actions = {}", policy.num_actions());
    let _ = writeln!(out, "horizon = {}", policy.horizon());
    push_array(&mut out, "probs", policy.probs().iter());
    out
}

struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, found {line:?}"),
            })?;
            let key = key.trim().to_string();
            if map.contains_key(&key) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            map.insert(key, (line_no, value.trim().to_string()));
        }
        Ok(Self { map })
    }

    fn get(&self, key: &str) -> Result<(usize, &str)> {
        self.map
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing key `{key}`"),
            })
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let (line, v) = self.get(key)?;
        v.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("`{key}` must be a non-negative integer, found {v:?}"),
        })
    }

    fn floats(&self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let (line, v) = self.get(key)?;
        let values = v
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("`{key}` contains non-numeric token {tok:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(Error::Parse {
                line,
                msg: format!("`{key}` has {} values, expected {expected}", values.len()),
            });
        }
        Ok(values)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        let (line, found) = self.get("kind")?;
        if found != kind {
            return Err(Error::Parse {
                line,
                msg: format!("expected kind `{kind}`, found `{found}`"),
            });
        }
        let version = self.usize("version")?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Parse {
                line: self.get("version")?.0,
                msg: format!("unsupported format version {version}"),
            });
        }
        Ok(())
    }

    fn dims(&self) -> Result<(usize, usize, usize)> {
        Ok((self.usize("states")?, self.usize("actions")?, self.usize("horizon")?))
    }
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let entries = Entries::parse(text)?;
    entries.expect_kind(MDP_KIND)?;
    let (s, a, h) = entries.dims()?;
    let rewards = entries.floats("rewards", h * s * a)?;
    let transitions = entries.floats("transitions", h * s * a * s)?;
    let rewards = Array3::from_shape_vec((h, s, a), rewards).map_err(|e| Error::Dimension(e.to_string()))?;
    let transitions = Array4::from_shape_vec((h, s, a, s), transitions).map_err(|e| Error::Dimension(e.to_string()))?;
    TabularMdp::new(transitions, rewards, entries.usize("start_state")?)
}

pub fn parse_policy(text: &str) -> Result<StochasticPolicy> {
    let entries = Entries::parse(text)?;
    entries.expect_kind(POLICY_KIND)?;
    let (s, a, h) = entries.dims()?;
    let probs = entries.floats("probs", h * s * a)?;
    let probs = Array3::from_shape_vec((h, s, a), probs).map_err(|e| Error::Dimension(e.to_string()))?;
    StochasticPolicy::new(probs)
}

pub fn save_mdp(path: &Path, mdp: &TabularMdp) -> Result<()> {
    std::fs::write(path, write_mdp(mdp)).map_err(|e| Error::io(path, e))
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mdp(&text)
}

pub fn save_policy(path: &Path, policy: &StochasticPolicy) -> Result<()> {
    std::fs::write(path, write_policy(policy)).map_err(|e| Error::io(path, e))
}

pub fn load_policy(path: &Path) -> Result<StochasticPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_policy(&text)
}
