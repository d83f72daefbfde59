//! Words over the alphabet `{1..d}`, finite or eventually periodic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite word, or an eventually periodic infinite word stored as
/// `preperiod ++ cycle` in its shortest form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SymbolWord {
    symbols: Vec<u8>,
    /// `(preperiod, period)`; `symbols.len() == preperiod + period`.
    tail: Option<(usize, usize)>,
}

impl SymbolWord {
    pub fn finite(symbols: Vec<u8>) -> Result<Self> {
        check_symbols(&symbols)?;
        Ok(Self {
            symbols,
            tail: None,
        })
    }

    /// The word `prefix cycle cycle cycle ...`, normalized so that equal
    /// infinite expansions give equal values.
    pub fn eventually_periodic(prefix: &[u8], cycle: &[u8]) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::InvalidWord("empty cycle".into()));
        }
        check_symbols(prefix)?;
        check_symbols(cycle)?;
        let mut cycle = primitive_root(cycle).to_vec();
        let mut prefix = prefix.to_vec();
        // Rotate the cycle backwards while the prefix ends with its last symbol.
        while let Some(&last) = prefix.last() {
            if last != *cycle.last().unwrap() {
                break;
            }
            prefix.pop();
            cycle.rotate_right(1);
        }
        let tail = Some((prefix.len(), cycle.len()));
        prefix.extend_from_slice(&cycle);
        Ok(Self {
            symbols: prefix,
            tail,
        })
    }

    pub fn periodic(cycle: &[u8]) -> Result<Self> {
        Self::eventually_periodic(&[], cycle)
    }

    pub fn is_finite(&self) -> bool {
        self.tail.is_none()
    }

    /// `(preperiod, period)` of an infinite word.
    pub fn periodic_tail(&self) -> Option<(usize, usize)> {
        self.tail
    }

    /// Length of a finite word; `None` for infinite words.
    pub fn len(&self) -> Option<usize> {
        match self.tail {
            None => Some(self.symbols.len()),
            Some(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Largest symbol used.
    pub fn max_symbol(&self) -> u8 {
        self.symbols.iter().copied().max().unwrap_or(0)
    }

    /// Symbol at position `i`, if the word is that long.
    pub fn symbol(&self, i: usize) -> Option<u8> {
        match self.tail {
            None => self.symbols.get(i).copied(),
            Some((p, q)) if i >= p => Some(self.symbols[p + (i - p) % q]),
            Some(_) => Some(self.symbols[i]),
        }
    }

    /// The first `n` symbols (fewer for a short finite word).
    pub fn prefix(&self, n: usize) -> Vec<u8> {
        (0..n).map_while(|i| self.symbol(i)).collect()
    }

    /// The shift `sigma`.
    pub fn shift(&self) -> Self {
        match self.tail {
            None => Self {
                symbols: self.symbols.iter().skip(1).copied().collect(),
                tail: None,
            },
            Some((0, _)) => {
                let mut cycle = self.symbols.clone();
                cycle.rotate_left(1);
                Self::periodic(&cycle).expect("valid cycle")
            }
            Some((p, _)) => {
                Self::eventually_periodic(&self.symbols[1..p], &self.symbols[p..]).expect("valid")
            }
        }
    }

    /// Stored symbols: the full finite word, or `preperiod ++ cycle`.
    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn check_alphabet(&self, d: usize) -> Result<()> {
        if self.max_symbol() as usize > d {
            return Err(Error::InvalidWord(format!(
                "symbol {} outside alphabet 1..{d}",
                self.max_symbol()
            )));
        }
        Ok(())
    }
}

fn check_symbols(symbols: &[u8]) -> Result<()> {
    if symbols.contains(&0) {
        return Err(Error::InvalidWord("symbols start at 1".into()));
    }
    Ok(())
}

fn primitive_root(cycle: &[u8]) -> &[u8] {
    let n = cycle.len();
    (1..=n)
        .filter(|q| n.is_multiple_of(*q))
        .find(|&q| (q..n).all(|i| cycle[i] == cycle[i - q]))
        .map(|q| &cycle[..q])
        .unwrap_or(cycle)
}

/// Joins symbols as digits, or with commas once symbols exceed 9.
pub fn format_symbols(symbols: &[u8]) -> String {
    if symbols.iter().all(|&s| s <= 9) {
        symbols.iter().map(|s| char::from(b'0' + s)).collect()
    } else {
        symbols
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn parse_symbols(text: &str) -> Result<Vec<u8>> {
    let bad = || Error::InvalidWord(format!("cannot parse {text:?}"));
    if text.contains(',') {
        text.split(',')
            .map(|t| t.trim().parse::<u8>().map_err(|_| bad()))
            .collect()
    } else {
        text.chars()
            .map(|c| c.to_digit(10).map(|v| v as u8).ok_or_else(bad))
            .collect()
    }
}

/// Finite words print as `121`; infinite ones as `1(21)`.
impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tail {
            None => write!(f, "{}", format_symbols(&self.symbols)),
            Some((p, _)) => write!(
                f,
                "{}({})",
                format_symbols(&self.symbols[..p]),
                format_symbols(&self.symbols[p..])
            ),
        }
    }
}

impl FromStr for SymbolWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.find('(') {
            None => SymbolWord::finite(parse_symbols(s)?),
            Some(open) => {
                let inner = s[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::InvalidWord(format!("unclosed cycle in {s:?}")))?;
                SymbolWord::eventually_periodic(&parse_symbols(&s[..open])?, &parse_symbols(inner)?)
            }
        }
    }
}

impl TryFrom<String> for SymbolWord {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SymbolWord> for String {
    fn from(w: SymbolWord) -> String {
        w.to_string()
    }
}
