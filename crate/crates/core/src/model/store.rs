use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::data::FeatureSchema;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKey {
    Shared(String),
    Symbol { feature: String, symbol: String },
}

impl ParamKey {
    pub fn shared(name: impl Into<String>) -> Self {
        ParamKey::Shared(name.into())
    }

    pub fn symbol(feature: impl Into<String>, symbol: impl Into<String>) -> Self {
        ParamKey::Symbol { feature: feature.into(), symbol: symbol.into() }
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKey::Shared(name) => write!(f, "{name}"),
            ParamKey::Symbol { feature, symbol } => write!(f, "{feature}={symbol}"),
        }
    }
}

/// Dense index of a parameter group inside one [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub usize);

/// Per-group gradient vectors. Missing groups mean "no gradient", which is
/// not the same as a zero vector.
pub type Gradients<T> = BTreeMap<GroupId, Vec<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    schema: Arc<FeatureSchema>,
    keys: Vec<ParamKey>,
    values: Vec<Vec<T>>,
    owner: Vec<Option<(usize, usize)>>,
    index: BTreeMap<ParamKey, GroupId>,
    shared: BTreeMap<String, GroupId>,
    by_symbol: Vec<Vec<Option<GroupId>>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(schema: FeatureSchema) -> Self {
        let by_symbol = schema.features().iter().map(|f| vec![None; f.cardinality()]).collect();
        Self {
            schema: Arc::new(schema),
            keys: Vec::new(),
            values: Vec::new(),
            owner: Vec::new(),
            index: BTreeMap::new(),
            shared: BTreeMap::new(),
            by_symbol,
        }
    }

    fn push(&mut self, key: ParamKey, owner: Option<(usize, usize)>, values: Vec<T>) -> Result<GroupId> {
        if self.index.contains_key(&key) {
            return Err(Error::Config(format!("parameter group {key} registered twice")));
        }
        let id = GroupId(self.keys.len());
        self.index.insert(key.clone(), id);
        self.keys.push(key);
        self.values.push(values);
        self.owner.push(owner);
        Ok(id)
    }

    pub fn insert_shared(&mut self, name: &str, values: Vec<T>) -> Result<GroupId> {
        let id = self.push(ParamKey::shared(name), None, values)?;
        self.shared.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers the group owned by symbol `s` of feature `f`.
    pub fn insert_symbol(&mut self, f: usize, s: usize, values: Vec<T>) -> Result<GroupId> {
        if f >= self.schema.num_features() || s >= self.schema.cardinality(f) {
            return Err(Error::Config(format!("symbol ({f}, {s}) is not in the schema")));
        }
        let key = ParamKey::symbol(self.schema.feature(f).name(), self.schema.symbol_name(f, s));
        let id = self.push(key, Some((f, s)), values)?;
        self.by_symbol[f][s] = Some(id);
        Ok(id)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn num_groups(&self) -> usize {
        self.keys.len()
    }

    pub fn num_params(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = GroupId> {
        (0..self.keys.len()).map(GroupId)
    }

    pub fn key(&self, id: GroupId) -> &ParamKey {
        &self.keys[id.0]
    }

    pub fn id(&self, key: &ParamKey) -> Option<GroupId> {
        self.index.get(key).copied()
    }

    pub fn shared_id(&self, name: &str) -> Option<GroupId> {
        self.shared.get(name).copied()
    }

    pub fn symbol_id(&self, f: usize, s: usize) -> Option<GroupId> {
        self.by_symbol.get(f)?.get(s).copied().flatten()
    }

    /// `(feature, symbol)` owning the group, `None` for shared groups.
    pub fn owner(&self, id: GroupId) -> Option<(usize, usize)> {
        self.owner[id.0]
    }

    pub fn is_shared(&self, id: GroupId) -> bool {
        self.owner[id.0].is_none()
    }

    pub fn values(&self, id: GroupId) -> &[T] {
        &self.values[id.0]
    }

    pub fn values_mut(&mut self, id: GroupId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub fn get(&self, key: &ParamKey) -> Option<&[T]> {
        self.id(key).map(|id| self.values(id))
    }

    pub fn get_mut(&mut self, key: &ParamKey) -> Option<&mut [T]> {
        self.id(key).map(|id| &mut self.values[id.0][..])
    }

    pub(crate) fn shared_values(&self, name: &str) -> &[T] {
        let id = self.shared_id(name).unwrap_or_else(|| panic!("missing shared group {name}"));
        self.values(id)
    }

    /// Zero vectors for every group.
    pub fn zeros(&self) -> Gradients<T> {
        self.ids().map(|id| (id, vec![T::zero(); self.values(id).len()])).collect()
    }

    /// Re-keys a gradient map by [`ParamKey`].
    pub fn named(&self, grads: &Gradients<T>) -> BTreeMap<ParamKey, Vec<T>> {
        grads.iter().map(|(id, g)| (self.key(*id).clone(), g.clone())).collect()
    }

    /// Writes one line per group:
    /// `shared<TAB>name<TAB>values` or `symbol<TAB>feature<TAB>symbol<TAB>values`,
    /// values space-separated in shortest round-trip form.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for id in self.ids() {
            match self.key(id) {
                ParamKey::Shared(name) => write!(out, "shared\t{name}\t")?,
                ParamKey::Symbol { feature, symbol } => write!(out, "symbol\t{feature}\t{symbol}\t")?,
            }
            let values: Vec<String> = self.values(id).iter().map(ToString::to_string).collect();
            writeln!(out, "{}", values.join(" "))?;
        }
        Ok(())
    }

    /// Reads a dump back into this store's layout.
    pub fn read_dump<R: BufRead>(&mut self, input: R) -> Result<()> {
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Data(format!("dump line {}: {e}", n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let (key, raw) = match fields.as_slice() {
                ["shared", name, raw] => (ParamKey::shared(*name), *raw),
                ["symbol", feature, symbol, raw] => (ParamKey::symbol(*feature, *symbol), *raw),
                _ => return Err(Error::Data(format!("dump line {}: malformed", n + 1))),
            };
            let values = raw
                .split_whitespace()
                .map(|v| v.parse::<T>().map_err(|_| Error::Data(format!("dump line {}: bad value {v:?}", n + 1))))
                .collect::<Result<Vec<T>>>()?;
            let slot = self
                .get_mut(&key)
                .ok_or_else(|| Error::Data(format!("dump line {}: unknown group {key}", n + 1)))?;
            if slot.len() != values.len() {
                return Err(Error::Data(format!("dump line {}: length mismatch for {key}", n + 1)));
            }
            slot.copy_from_slice(&values);
        }
        Ok(())
    }
}
