//! Experiment configs: strict TOML/JSON parsing, operator fields shared by
//! the spectral commands, and sweep grids.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use qp2loc::arithmetic::{GOLDEN, SQRT2_MINUS_1};
use qp2loc::green::OperatorFamily;
use qp2loc::interaction::InteractionSpec;
use qp2loc::operator::{Rect, Region};
use qp2loc::potential::{FourierPotential, PotentialSpec};

/// Keys that describe the operator; split off before the command's own
/// parameters are parsed.
pub const OPERATOR_KEYS: [&str; 6] = ["lambda", "omega", "theta", "potential", "interaction", "m_int"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaInput {
    Named(String),
    Value(f64),
}

impl Default for OmegaInput {
    fn default() -> Self {
        Self::Named("golden".into())
    }
}

impl OmegaInput {
    pub fn value(&self) -> Result<f64> {
        match self {
            Self::Named(s) if s == "golden" => Ok(GOLDEN),
            Self::Named(s) if s == "sqrt2m1" => Ok(SQRT2_MINUS_1),
            Self::Named(s) => bail!("unknown frequency preset {s:?} (expected \"golden\" or \"sqrt2m1\")"),
            Self::Value(x) if *x > 0.0 && *x < 1.0 => Ok(*x),
            Self::Value(x) => bail!("omega must lie in (0, 1), got {x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialInput {
    Preset(String),
    Spec(PotentialSpec),
}

impl Default for PotentialInput {
    fn default() -> Self {
        Self::Preset("cos".into())
    }
}

impl PotentialInput {
    pub fn build(&self) -> Result<FourierPotential> {
        Ok(match self {
            Self::Preset(name) => FourierPotential::preset(name)?,
            Self::Spec(spec) => FourierPotential::from_spec(spec)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionInput {
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`, inclusive.
    pub rect: [[i64; 2]; 2],
    #[serde(default)]
    pub cut: Option<[i64; 2]>,
}

impl RegionInput {
    pub fn build(&self) -> Result<Region> {
        let r = Rect::new((self.rect[0][0], self.rect[0][1]), (self.rect[1][0], self.rect[1][1]));
        Ok(Region::elementary(r, self.cut.map(|c| (c[0], c[1])))?)
    }
}

fn default_theta() -> [f64; 2] {
    [0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorInput {
    pub lambda: f64,
    #[serde(default)]
    pub omega: OmegaInput,
    #[serde(default = "default_theta")]
    pub theta: [f64; 2],
    #[serde(default)]
    pub potential: PotentialInput,
    #[serde(default)]
    pub interaction: InteractionSpec,
    #[serde(default)]
    pub m_int: Option<f64>,
}

impl OperatorInput {
    pub fn family(&self) -> Result<OperatorFamily> {
        if !(self.lambda > 0.0) {
            bail!("lambda must be positive, got {}", self.lambda);
        }
        let mut f = OperatorFamily::new(self.lambda, self.omega.value()?, self.potential.build()?, self.interaction.build()?);
        if let Some(m) = self.m_int {
            f.m_int = m;
        }
        Ok(f)
    }

    pub fn theta(&self) -> (f64, f64) {
        (self.theta[0], self.theta[1])
    }
}

/// Reads a config table from TOML (`.toml` or anything else) or JSON
/// (`.json`).
pub fn load(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).context("parsing JSON config")?
    } else {
        let t: toml::Table = toml::from_str(&text).context("parsing TOML config")?;
        serde_json::to_value(t)?
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => bail!("config must be a table"),
    }
}

/// Splits the operator keys off `map`.
pub fn split_operator(map: &Map<String, Value>) -> (Map<String, Value>, Map<String, Value>) {
    let mut op = Map::new();
    let mut rest = Map::new();
    for (k, v) in map {
        if OPERATOR_KEYS.contains(&k.as_str()) {
            op.insert(k.clone(), v.clone());
        } else {
            rest.insert(k.clone(), v.clone());
        }
    }
    (op, rest)
}

pub fn parse<T: for<'de> Deserialize<'de>>(map: Map<String, Value>, what: &str) -> Result<T> {
    serde_json::from_value(Value::Object(map)).map_err(|e| anyhow!("invalid {what}: {e}"))
}

/// Cartesian grid over dotted config paths, keys in sorted order.
pub fn sweep_points(grid: &BTreeMap<String, Vec<f64>>) -> Vec<Vec<(String, f64)>> {
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v));
                    q
                })
            })
            .collect();
    }
    points
}

/// Sets the number at a dotted path such as `lambda` or `theta.0`.
pub fn set_path(map: &mut Map<String, Value>, path: &str, x: f64) -> Result<()> {
    let mut parts = path.split('.');
    let first = parts.next().ok_or_else(|| anyhow!("empty sweep key"))?;
    let mut cur = map.get_mut(first).ok_or_else(|| anyhow!("sweep key {path:?} is not in the config"))?;
    for p in parts {
        cur = match cur {
            Value::Object(m) => m.get_mut(p),
            Value::Array(a) => p.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| anyhow!("sweep key {path:?} is not in the config"))?;
    }
    if !cur.is_number() {
        bail!("sweep key {path:?} does not point at a number");
    }
    let int = cur.is_i64() || cur.is_u64();
    *cur = if int && x.fract() == 0.0 { Value::from(x as i64) } else { Value::from(x) };
    Ok(())
}
