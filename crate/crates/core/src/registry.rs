//! Name-keyed registries of interchangeable strategies.
//!
//! Sampling strategies, score aggregators, filtering schemes and explanation
//! exporters are all trait objects looked up by name at runtime, so config
//! files and CLI flags select them without a match arm per variant.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Something that can be stored in a [`Registry`].
pub trait Named {
    fn name(&self) -> &'static str;

    /// Alternative spellings accepted on lookup.
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }
}

pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: Vec<Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Later registrations shadow earlier ones with the same name.
    pub fn register(&mut self, entry: Arc<T>) -> &mut Self {
        self.entries.retain(|e| e.name() != entry.name());
        self.entries.push(entry);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .iter()
            .find(|e| e.name() == name || e.aliases().contains(&name))
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}
