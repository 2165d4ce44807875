//! Settings resolved from flags, an optional TOML file, and built-in defaults,
//! in that order of precedence.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Every key a config file may set, at top level or under `[subcommand]`.
pub const KNOWN_KEYS: &[&str] = &[
    "admissibility_n", "base_n", "budget", "cap", "d_max", "degree_cap", "delta", "e_max", "eps",
    "kappa", "m", "max_delta_prime", "max_n", "n", "n_exact", "n_max", "n_start", "num_max", "p",
    "prime_powers", "primes", "r", "rows", "s", "seed", "seeds", "shapes", "slack", "t_end",
    "t_start", "tile_eps", "tile_kappa", "tuples", "words", "workers",
];

#[derive(Clone, Debug, Serialize)]
pub struct Param {
    pub value: serde_json::Value,
    /// `flag`, `file`, `default` or `derived`.
    pub source: &'static str,
}

pub struct Resolver {
    subcommand: String,
    top: toml::Table,
    section: toml::Table,
    used: BTreeSet<String>,
    /// Path of the file read, or `defaults`.
    pub origin: String,
    pub params: BTreeMap<String, Param>,
}

impl Resolver {
    /// A missing file means built-in defaults.
    pub fn load(path: Option<&Path>, subcommand: &str) -> Result<Self, CliError> {
        let (mut top, origin) = match path {
            Some(p) if p.exists() => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                let table: toml::Table =
                    text.parse().map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                (table, p.display().to_string())
            }
            _ => (toml::Table::new(), "defaults".to_string()),
        };
        let section = match top.remove(subcommand) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(CliError::Usage(format!("[{subcommand}] must be a table"))),
            None => toml::Table::new(),
        };
        for (k, v) in &top {
            let is_section = v.is_table() && crate::SUBCOMMANDS.contains(&k.as_str());
            if !is_section && !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown setting `{k}` in {origin}")));
            }
        }
        if let Some(k) = section.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("unknown setting `{subcommand}.{k}` in {origin}")));
        }
        top.retain(|_, v| !v.is_table());
        Ok(Resolver {
            subcommand: subcommand.to_string(),
            top,
            section,
            used: BTreeSet::new(),
            origin,
            params: BTreeMap::new(),
        })
    }

    fn from_file<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        let Some(v) = self.section.get(key).or_else(|| self.top.get(key)) else {
            return Ok(None);
        };
        self.used.insert(key.to_string());
        T::deserialize(v.clone())
            .map(Some)
            .map_err(|e| CliError::Usage(format!("setting `{key}`: {e}")))
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T, source: &'static str) {
        let value = serde_json::to_value(value).expect("settings serialize");
        self.params.insert(key.to_string(), Param { value, source });
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let (v, source) = match (flag, self.from_file(key)?) {
            (Some(v), _) => (v, "flag"),
            (None, Some(v)) => (v, "file"),
            (None, None) => (default, "default"),
        };
        self.record(key, &v, source);
        Ok(v)
    }

    /// Like [`Resolver::get`] with no default; absent values are not recorded.
    pub fn get_opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let found = match flag {
            Some(v) => Some((v, "flag")),
            None => self.from_file(key)?.map(|v| (v, "file")),
        };
        Ok(found.map(|(v, source)| {
            self.record(key, &v, source);
            v
        }))
    }

    /// The seed, or one derived from a hash of everything resolved so far.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = self.get_opt("seed", flag)? {
            return Ok(s);
        }
        let canon = serde_json::to_string(&self.values()).expect("settings serialize");
        let digest = Sha256::digest(format!("{}\n{canon}", self.subcommand).as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        self.record("seed", &seed, "derived");
        Ok(seed)
    }

    pub fn values(&self) -> BTreeMap<&str, &serde_json::Value> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value)).collect()
    }
}

pub fn parse_rational(key: &str, s: &str) -> Result<soficity::rational::Rational, CliError> {
    soficity::rational::parse(s).map_err(|_| CliError::Usage(format!("`{key}`: cannot parse {s:?} as a rational")))
}

/// `A..B` or `A..=B`, both ends inclusive.
pub fn parse_range(key: &str, s: &str) -> Result<(u64, u64), CliError> {
    let bad = || CliError::Usage(format!("`{key}`: expected A..B, got {s:?}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

/// `p:rmin..rmax`, or `A..B:rmin..rmax` for every prime `p` in `[A, B]`.
pub fn parse_prime_powers(s: &str) -> Result<(u64, u64, u32, u32), CliError> {
    let bad = || CliError::Usage(format!("`prime_powers`: expected p:rmin..rmax, got {s:?}"));
    let (p, r) = s.split_once(':').ok_or_else(bad)?;
    let (p_lo, p_hi) = if p.contains("..") {
        parse_range("prime_powers", p)?
    } else {
        let v: u64 = p.trim().parse().map_err(|_| bad())?;
        (v, v)
    };
    let (r_lo, r_hi) = parse_range("prime_powers", r)?;
    let r_lo: u32 = r_lo.try_into().map_err(|_| bad())?;
    let r_hi: u32 = r_hi.try_into().map_err(|_| bad())?;
    Ok((p_lo, p_hi, r_lo, r_hi))
}

/// Hash of `blob <len>\0<content>`, as git names objects, with SHA-256.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}
