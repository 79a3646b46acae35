//! Name-keyed lookup of problem families and step rules.
//!
//! Configs refer to strategies by name; [`Registry::builtin`] knows the
//! shipped ones and callers may add their own before running.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{AsymmError, Result};
use crate::problem::{LocalizationFamily, NnClassifierFamily, ProblemFamily, QuadraticFamily};
use crate::step_rule::{AutoRule, BacktrackingRule, HessianBoundRule, StepRule};

#[derive(Default, Clone)]
pub struct Registry {
    families: BTreeMap<&'static str, Arc<dyn ProblemFamily>>,
    step_rules: BTreeMap<&'static str, Arc<dyn StepRule>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding every shipped family and step rule.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register_family(Arc::new(LocalizationFamily));
        r.register_family(Arc::new(NnClassifierFamily));
        r.register_family(Arc::new(QuadraticFamily));
        r.register_step_rule(Arc::new(AutoRule));
        r.register_step_rule(Arc::new(HessianBoundRule));
        r.register_step_rule(Arc::new(BacktrackingRule));
        r
    }

    /// Adds or replaces a family under its own name.
    pub fn register_family(&mut self, family: Arc<dyn ProblemFamily>) -> Option<Arc<dyn ProblemFamily>> {
        self.families.insert(family.name(), family)
    }

    pub fn register_step_rule(&mut self, rule: Arc<dyn StepRule>) -> Option<Arc<dyn StepRule>> {
        self.step_rules.insert(rule.name(), rule)
    }

    pub fn family(&self, name: &str) -> Result<Arc<dyn ProblemFamily>> {
        self.families.get(name).cloned().ok_or_else(|| AsymmError::UnknownStrategy {
            kind: "problem family",
            name: name.to_string(),
            available: self.family_names().join(", "),
        })
    }

    pub fn step_rule(&self, name: &str) -> Result<Arc<dyn StepRule>> {
        self.step_rules.get(name).cloned().ok_or_else(|| AsymmError::UnknownStrategy {
            kind: "step rule",
            name: name.to_string(),
            available: self.step_rule_names().join(", "),
        })
    }

    pub fn family_names(&self) -> Vec<&'static str> {
        self.families.keys().copied().collect()
    }

    pub fn step_rule_names(&self) -> Vec<&'static str> {
        self.step_rules.keys().copied().collect()
    }
}
