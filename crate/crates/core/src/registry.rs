//! Name-keyed registries for interchangeable strategies.
//!
//! Jammer strategies, channel models and precoding phase models each sit
//! behind a trait; a [`Registry`] maps the names used in scenario files and
//! on the command line to shared trait objects.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that can be registered under a stable name.
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers a strategy, replacing any previous entry with the same name.
    pub fn register(&mut self, strategy: Arc<T>) {
        self.entries.insert(strategy.name(), strategy);
    }

    pub fn with(mut self, strategy: Arc<T>) -> Self {
        self.register(strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown {} '{}' (available: {})",
                self.kind,
                name,
                self.names().join(", ")
            ))
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
