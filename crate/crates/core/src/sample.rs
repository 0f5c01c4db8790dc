//! The shipped requirement library, rule lexicon, gazetteer and scenarios.

use std::sync::Arc;

use crate::emulation::{parse_scenarios, Scenario};
use crate::oracle::{Gazetteer, Lexicon, Oracle, RuleBackend};
use crate::speclang::{parse_library, RequirementLibrary};

pub const LIBRARY: &str = include_str!("../data/library.json");
pub const LEXICON: &str = include_str!("../data/lexicon.txt");
pub const GAZETTEER: &str = include_str!("../data/gazetteer.tsv");
pub const SCENARIOS: &str = include_str!("../data/scenarios.json");

pub fn library() -> RequirementLibrary {
    parse_library(LIBRARY).expect("shipped library is valid")
}

pub fn lexicon() -> Lexicon {
    Lexicon::parse(LEXICON).expect("shipped lexicon is valid")
}

pub fn gazetteer() -> Gazetteer {
    Gazetteer::parse(GAZETTEER).expect("shipped gazetteer is valid")
}

pub fn scenarios() -> Vec<Scenario> {
    parse_scenarios(SCENARIOS).expect("shipped scenarios are valid")
}

/// Rule-backed oracle over the shipped lexicon and gazetteer, without a cache.
pub fn rule_oracle() -> Oracle {
    Oracle::new(Arc::new(RuleBackend::new(lexicon())), Arc::new(gazetteer()))
}
