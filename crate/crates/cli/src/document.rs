//! JSON machine and scenario documents.
//!
//! Complex numbers are written as `[re, im]`. Every document carries
//! `"format_version": 1`.

use std::collections::BTreeMap;
use std::fmt;

use qhalt::ancilla_model::{AncillaError, AncillaPolicy, BranchSpec, PolicyKind};
use qhalt::{Complex64, MachineDims, Move, Outcome, RuleKey, TransitionTable};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

/// Scenario amplitudes are accepted, then renormalized, within this distance
/// of unit norm.
pub const LOAD_NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentError {
    /// JSON path or `line:column` of the offending item.
    pub location: String,
    pub message: String,
}

impl fmt::Display for DocumentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for DocumentError {}

fn err(location: impl Into<String>, message: impl Into<String>) -> DocumentError {
    DocumentError { location: location.into(), message: message.into() }
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, DocumentError> {
    serde_json::from_str(text).map_err(|e| err(format!("line {}, column {}", e.line(), e.column()), e.to_string()))
}

fn check_version(v: u32) -> Result<(), DocumentError> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(err("format_version", format!("unsupported version {v}, expected {FORMAT_VERSION}")))
    }
}

fn to_complex(a: [f64; 2], at: impl Fn() -> String) -> Result<Complex64, DocumentError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(Complex64::new(a[0], a[1]))
    } else {
        Err(err(at(), "amplitude is not finite"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsDef {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeDef {
    pub q2: usize,
    pub sym2: usize,
    #[serde(rename = "move")]
    pub movement: i64,
    pub halt2: u8,
    pub amp: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDef {
    pub q: usize,
    pub sym: usize,
    pub halt: u8,
    pub out: Vec<OutcomeDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineDef {
    pub format_version: u32,
    pub dims: DimsDef,
    pub rules: Vec<RuleDef>,
}

fn halt_bit(v: u8, at: impl Fn() -> String) -> Result<bool, DocumentError> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(err(at(), format!("halt bit must be 0 or 1, got {v}"))),
    }
}

impl MachineDef {
    pub fn parse(text: &str) -> Result<Self, DocumentError> {
        let def: Self = from_json(text)?;
        check_version(def.format_version)?;
        Ok(def)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    pub fn to_table(&self) -> Result<TransitionTable, DocumentError> {
        let dims = MachineDims::new(self.dims.m, self.dims.s, self.dims.n).map_err(|e| err("dims", e.to_string()))?;
        let mut table = TransitionTable::new(dims);
        let mut seen = BTreeMap::new();
        for (r, rule) in self.rules.iter().enumerate() {
            let at = || format!("rules[{r}]");
            let key = RuleKey { head: rule.q, symbol: rule.sym, halted: halt_bit(rule.halt, at)? };
            if let Some(first) = seen.insert(key, r) {
                return Err(err(at(), format!("duplicate rule for {key}, first given at rules[{first}]")));
            }
            let mut outs = Vec::with_capacity(rule.out.len());
            for (o, out) in rule.out.iter().enumerate() {
                let at = || format!("rules[{r}].out[{o}]");
                let movement = Move::from_offset(out.movement)
                    .ok_or_else(|| err(at(), format!("move must be -1 or 1, got {}", out.movement)))?;
                outs.push(Outcome::new(out.q2, out.sym2, movement, halt_bit(out.halt2, at)?, to_complex(out.amp, at)?));
            }
            table.set_rule(key, outs).map_err(|e| err(at(), e.to_string()))?;
        }
        Ok(table)
    }

    /// Canonical document: one rule per key in key order, outcomes as stored.
    pub fn from_table(table: &TransitionTable) -> Self {
        let d = table.dims();
        let rules = table
            .rules()
            .map(|(k, outs)| RuleDef {
                q: k.head,
                sym: k.symbol,
                halt: k.halted as u8,
                out: outs
                    .iter()
                    .map(|o| OutcomeDef {
                        q2: o.head,
                        sym2: o.symbol,
                        movement: o.movement.offset(),
                        halt2: o.halted as u8,
                        amp: [o.amp.re, o.amp.im],
                    })
                    .collect(),
            })
            .collect();
        Self { format_version: FORMAT_VERSION, dims: DimsDef { m: d.heads, s: d.symbols, n: d.cells }, rules }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDef {
    pub id: u64,
    pub orbit: Vec<u64>,
    pub halt_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKindDef {
    SharedOrbit,
    PermutedOrbit,
    CustomOrbit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDef {
    pub kind: PolicyKindDef,
    /// Ancilla map per branch id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub permutations: BTreeMap<u64, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDef {
    pub format_version: u32,
    pub branches: Vec<BranchDef>,
    pub amps: Vec<[f64; 2]>,
    pub policy: PolicyDef,
    pub t_max: usize,
}

/// Validated scenario ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub branches: Vec<BranchSpec>,
    pub amps: Vec<Complex64>,
    pub policy: AncillaPolicy,
    pub t_max: usize,
}

impl ScenarioDef {
    pub fn parse(text: &str) -> Result<Self, DocumentError> {
        let def: Self = from_json(text)?;
        check_version(def.format_version)?;
        Ok(def)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    pub fn to_scenario(&self) -> Result<Scenario, DocumentError> {
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| {
                BranchSpec::new(b.id, b.orbit.clone(), b.halt_step)
                    .map_err(|e| err(format!("branches[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if self.amps.len() != branches.len() {
            return Err(err("amps", format!("{} amplitudes for {} branches", self.amps.len(), branches.len())));
        }
        let mut amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| to_complex(*a, || format!("amps[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > LOAD_NORMALIZATION_TOL {
            return Err(err("amps", format!("sum |a|^2 = {norm} is not 1")));
        }
        let scale = 1.0 / norm.sqrt();
        for a in amps.iter_mut() {
            *a *= scale;
        }
        let maps = self.policy.permutations.clone();
        let policy = match self.policy.kind {
            PolicyKindDef::SharedOrbit if !maps.is_empty() => {
                return Err(err("policy.permutations", "SharedOrbit takes no maps"));
            }
            PolicyKindDef::SharedOrbit => Ok(AncillaPolicy::shared()),
            PolicyKindDef::PermutedOrbit => AncillaPolicy::permuted(maps),
            PolicyKindDef::CustomOrbit => AncillaPolicy::custom(maps),
        }
        .map_err(|e: AncillaError| err("policy", e.to_string()))?;
        Ok(Scenario { branches, amps, policy, t_max: self.t_max })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let kind = match s.policy.kind() {
            PolicyKind::SharedOrbit => PolicyKindDef::SharedOrbit,
            PolicyKind::PermutedOrbit => PolicyKindDef::PermutedOrbit,
            PolicyKind::CustomOrbit => PolicyKindDef::CustomOrbit,
        };
        Self {
            format_version: FORMAT_VERSION,
            branches: s
                .branches
                .iter()
                .map(|b| BranchDef { id: b.id(), orbit: b.orbit().to_vec(), halt_step: b.halt_step() })
                .collect(),
            amps: s.amps.iter().map(|a| [a.re, a.im]).collect(),
            policy: PolicyDef { kind, permutations: s.policy.maps().clone() },
            t_max: s.t_max,
        }
    }
}
