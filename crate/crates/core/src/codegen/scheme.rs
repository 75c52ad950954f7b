use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DeltaEnv, InstrEnv, NominalCode, SlotId, SplitMix64};
use crate::isa::{Instruction, ObjectCode, VarId, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValue {
    pub delta: Word,
    pub pinned: bool,
}

/// The full delta assignment of one compilation: a value per slot, the slot
/// of every variable before and after every instruction, and the deltas on
/// inputs and outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObfuscationScheme {
    pub seed: u64,
    pub prng: String,
    /// Indexed by `SlotId`.
    pub slots: Vec<SlotValue>,
    pub envs: Arc<Vec<InstrEnv>>,
    pub in_deltas: BTreeMap<String, Word>,
    pub out_deltas: BTreeMap<String, Word>,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemeError {
    #[error("invalid scheme JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scheme: {0}")]
    Shape(String),
}

impl ObfuscationScheme {
    pub fn delta(&self, s: SlotId) -> Word {
        self.slots[s.index()].delta
    }

    /// Physical constants for `ins` given its nominal constants.
    pub fn physical(&self, ins: &Instruction, env: &InstrEnv) -> (Word, Word) {
        let dy = self.delta(env.y_slot(ins));
        let a = ins.a - self.delta(env.x_slot(ins)) + dy;
        let b = ins.b - self.delta(env.z_slot(ins)) + dy;
        (a, b)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scheme serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ObfuscationScheme, SchemeError> {
        let wire: Wire = serde_json::from_str(text)?;
        wire.try_into()
    }
}

/// Draws one word per free slot, in slot order, and rewrites every constant.
pub fn randomize(nom: &NominalCode, seed: u64) -> (ObjectCode, ObfuscationScheme) {
    let mut rng = SplitMix64::new(seed);
    let slots: Vec<SlotValue> = nom
        .slots
        .iter()
        .map(|s| SlotValue {
            delta: if s.pinned { Word::ZERO } else { Word(rng.next_u32()) },
            pinned: s.pinned,
        })
        .collect();
    let io = |vars: &[VarId], env: &DeltaEnv| {
        vars.iter()
            .map(|&v| (nom.vars[v.index()].clone(), slots[env.slot(v).index()].delta))
            .collect::<BTreeMap<_, _>>()
    };
    let scheme = ObfuscationScheme {
        seed,
        prng: SplitMix64::NAME.to_string(),
        in_deltas: io(&nom.in_vars, &nom.entry_env),
        out_deltas: io(&nom.out_vars, &nom.exit_env),
        slots,
        envs: Arc::clone(&nom.envs),
    };
    let code = nom
        .code
        .iter()
        .zip(nom.envs.iter())
        .map(|(ins, env)| {
            let (a, b) = scheme.physical(ins, env);
            ins.with_constants(a, b)
        })
        .collect();
    let obj = ObjectCode {
        vars: nom.vars.clone(),
        in_vars: nom.in_vars.clone(),
        out_vars: nom.out_vars.clone(),
        code,
    };
    (obj, scheme)
}

#[derive(Serialize, Deserialize)]
struct WireEnv {
    pre: BTreeMap<u32, String>,
    post: BTreeMap<u32, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    seed: String,
    prng: String,
    slots: BTreeMap<u32, SlotValue>,
    envs: Vec<WireEnv>,
    in_deltas: BTreeMap<String, Word>,
    out_deltas: BTreeMap<String, Word>,
}

fn env_to_wire(env: &DeltaEnv) -> BTreeMap<u32, String> {
    env.0.iter().enumerate().map(|(v, s)| (v as u32, s.0.to_string())).collect()
}

fn env_from_wire(m: &BTreeMap<u32, String>, nslots: usize) -> Result<DeltaEnv, SchemeError> {
    let mut env = Vec::with_capacity(m.len());
    for (i, (&v, s)) in m.iter().enumerate() {
        if v as usize != i {
            return Err(SchemeError::Shape(format!("env is missing variable {i}")));
        }
        let s: u32 = s.parse().map_err(|_| SchemeError::Shape(format!("bad slot id {s:?}")))?;
        if s as usize >= nslots {
            return Err(SchemeError::Shape(format!("unknown slot {s}")));
        }
        env.push(SlotId(s));
    }
    Ok(DeltaEnv(env))
}

impl Serialize for ObfuscationScheme {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        Wire {
            seed: format!("0x{:016X}", self.seed),
            prng: self.prng.clone(),
            slots: self.slots.iter().enumerate().map(|(i, s)| (i as u32, *s)).collect(),
            envs: self
                .envs
                .iter()
                .map(|e| WireEnv { pre: env_to_wire(&e.pre), post: env_to_wire(&e.post) })
                .collect(),
            in_deltas: self.in_deltas.clone(),
            out_deltas: self.out_deltas.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ObfuscationScheme {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        Wire::deserialize(de)?.try_into().map_err(serde::de::Error::custom)
    }
}

impl TryFrom<Wire> for ObfuscationScheme {
    type Error = SchemeError;

    fn try_from(w: Wire) -> Result<Self, SchemeError> {
        let seed = w
            .seed
            .strip_prefix("0x")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| SchemeError::Shape(format!("bad seed {:?}", w.seed)))?;
        let mut slots = Vec::with_capacity(w.slots.len());
        for (i, (&id, &sv)) in w.slots.iter().enumerate() {
            if id as usize != i {
                return Err(SchemeError::Shape(format!("slot table is missing slot {i}")));
            }
            slots.push(sv);
        }
        let envs = w
            .envs
            .iter()
            .map(|e| {
                Ok(InstrEnv {
                    pre: env_from_wire(&e.pre, slots.len())?,
                    post: env_from_wire(&e.post, slots.len())?,
                })
            })
            .collect::<Result<Vec<_>, SchemeError>>()?;
        Ok(ObfuscationScheme {
            seed,
            prng: w.prng,
            slots,
            envs: Arc::new(envs),
            in_deltas: w.in_deltas,
            out_deltas: w.out_deltas,
        })
    }
}
