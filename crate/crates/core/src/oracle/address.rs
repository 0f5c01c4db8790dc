use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::OracleError;

/// Two coordinates within this many metres count as the same place.
const NEARBY_METRES: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddressVerdict {
    pub value: bool,
    /// Canonical forms of the addresses that resolved, in input order.
    pub resolved: Vec<String>,
}

/// Resolves and compares free-text addresses.
pub trait AddressVerifier: Send + Sync {
    /// `addresses` holds one or two entries; blank entries are ignored.
    fn verify(&self, addresses: &[String]) -> Result<AddressVerdict, OracleError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("gazetteer line {line}: {message}")]
pub struct GazetteerError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerEntry {
    pub canonical: String,
    pub aliases: Vec<String>,
    pub coords: Option<(f64, f64)>,
}

/// Offline address verifier backed by a table of canonical addresses and
/// aliases.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    index: HashMap<String, usize>,
}

fn expand(token: &str) -> &str {
    match token {
        "st" => "street",
        "ave" | "av" => "avenue",
        "rd" => "road",
        "blvd" => "boulevard",
        "ln" => "lane",
        "dr" => "drive",
        "ct" => "court",
        "pl" => "place",
        "pkwy" => "parkway",
        "apt" => "apartment",
        "ste" => "suite",
        "n" => "north",
        "s" => "south",
        "e" => "east",
        "w" => "west",
        other => other,
    }
}

/// Lowercases, drops punctuation and expands common abbreviations.
pub(crate) fn normalize(address: &str) -> String {
    let cleaned: String = address
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(expand).collect::<Vec<_>>().join(" ")
}

fn strip_unit(normalized: &str) -> Option<String> {
    let tokens: Vec<&str> = normalized.split(' ').collect();
    let cut = tokens
        .iter()
        .position(|t| matches!(*t, "apartment" | "unit" | "suite" | "floor"))?;
    (cut > 0).then(|| tokens[..cut].join(" "))
}

fn haversine_metres(a: (f64, f64), b: (f64, f64)) -> f64 {
    let r = 6_371_000.0_f64;
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2)
        + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().min(1.0).asin()
}

impl Gazetteer {
    /// Parses tab-separated lines: canonical address, aliases, and an
    /// optional trailing `lat lon` field.
    pub fn parse(source: &str) -> Result<Self, GazetteerError> {
        let mut g = Gazetteer::default();
        for (n, raw) in source.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut fields: Vec<&str> = line.split('\t').map(str::trim).filter(|f| !f.is_empty()).collect();
            let err = |message: String| GazetteerError { line: n + 1, message };
            let coords = match fields.last().map(|f| parse_coords(f)) {
                Some(Some(c)) if fields.len() > 1 => {
                    fields.pop();
                    Some(c)
                }
                _ => None,
            };
            let Some((canonical, aliases)) = fields.split_first() else {
                return Err(err("missing canonical address".into()));
            };
            let entry = GazetteerEntry {
                canonical: canonical.to_string(),
                aliases: aliases.iter().map(|a| a.to_string()).collect(),
                coords,
            };
            g.insert(entry).map_err(err)?;
        }
        Ok(g)
    }

    pub fn insert(&mut self, entry: GazetteerEntry) -> Result<(), String> {
        let id = self.entries.len();
        for name in std::iter::once(&entry.canonical).chain(&entry.aliases) {
            let key = normalize(name);
            if key.is_empty() {
                return Err(format!("address `{name}` normalizes to nothing"));
            }
            if let Some(&other) = self.index.get(&key) {
                if other != id {
                    return Err(format!(
                        "`{name}` already names `{}`",
                        self.entries[other].canonical
                    ));
                }
            }
            self.index.insert(key, id);
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry naming `address`, retrying without a unit designator.
    pub fn lookup(&self, address: &str) -> Option<&GazetteerEntry> {
        self.lookup_id(address).map(|i| &self.entries[i])
    }

    fn lookup_id(&self, address: &str) -> Option<usize> {
        let key = normalize(address);
        if let Some(&i) = self.index.get(&key) {
            return Some(i);
        }
        strip_unit(&key).and_then(|k| self.index.get(&k).copied())
    }

    fn close(&self, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        match (self.entries[a].coords, self.entries[b].coords) {
            (Some(x), Some(y)) => haversine_metres(x, y) <= NEARBY_METRES,
            _ => false,
        }
    }
}

fn parse_coords(field: &str) -> Option<(f64, f64)> {
    let mut parts = field.split_whitespace();
    let lat: f64 = parts.next()?.parse().ok()?;
    let lon: f64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return None;
    }
    Some((lat, lon))
}

impl AddressVerifier for Gazetteer {
    fn verify(&self, addresses: &[String]) -> Result<AddressVerdict, OracleError> {
        let present: Vec<&str> = addresses
            .iter()
            .map(|a| a.trim())
            .filter(|a| !a.is_empty())
            .collect();
        let ids: Vec<Option<usize>> = present.iter().map(|a| self.lookup_id(a)).collect();
        let resolved = ids
            .iter()
            .flatten()
            .map(|&i| self.entries[i].canonical.clone())
            .collect();
        let value = match ids.as_slice() {
            [] => true,
            [one] => one.is_some(),
            [Some(a), Some(b)] => self.close(*a, *b),
            [_, _] => false,
            _ => {
                return Err(OracleError::Protocol(format!(
                    "address verification takes one or two addresses, got {}",
                    addresses.len()
                )))
            }
        };
        Ok(AddressVerdict { value, resolved })
    }
}
