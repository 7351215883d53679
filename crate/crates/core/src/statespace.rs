//! Multispecies site occupancies, ring configurations and sectors.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};

/// Default upper bound on the number of configurations in a sector.
pub const DEFAULT_DIM_CAP: usize = 10_000_000;

/// Number of particles of each species at one site.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Occupancy(Vec<u32>);

impl Occupancy {
    pub fn new(counts: Vec<u32>) -> Self {
        Occupancy(counts)
    }

    pub fn zero(n: usize) -> Self {
        Occupancy(vec![0; n])
    }

    /// Unit vector for species `a` (0-based).
    pub fn unit(n: usize, a: usize) -> Self {
        let mut v = vec![0; n];
        v[a] = 1;
        Occupancy(v)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn to_signed(&self) -> Vec<i64> {
        self.0.iter().map(|&c| c as i64).collect()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Occupancy) -> bool {
        self.n() == other.n() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &Occupancy) -> Occupancy {
        assert_eq!(self.n(), other.n(), "occupancy length mismatch");
        Occupancy(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other`, or `None` if some component would go negative.
    pub fn checked_sub(&self, other: &Occupancy) -> Option<Occupancy> {
        if self.n() != other.n() {
            return None;
        }
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(Occupancy)
    }

    /// Species order reversed.
    pub fn reversed(&self) -> Occupancy {
        Occupancy(self.0.iter().rev().copied().collect())
    }

    /// All `gamma <= self`, in lexicographic order.
    pub fn below(&self) -> Vec<Occupancy> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.n()];
        fn rec(bound: &[u32], i: usize, cur: &mut Vec<u32>, out: &mut Vec<Occupancy>) {
            if i == bound.len() {
                out.push(Occupancy(cur.clone()));
                return;
            }
            for v in 0..=bound[i] {
                cur[i] = v;
                rec(bound, i + 1, cur, out);
            }
        }
        rec(&self.0, 0, &mut cur, &mut out);
        out
    }

    /// All occupancies of `n` species with exactly `total` particles.
    pub fn with_total(n: usize, total: u32) -> Vec<Occupancy> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fn rec(n: usize, i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Occupancy>) {
            if i + 1 == n {
                cur[i] = left;
                out.push(Occupancy(cur.clone()));
                return;
            }
            for v in 0..=left {
                cur[i] = v;
                rec(n, i + 1, left - v, cur, out);
            }
        }
        if n > 0 {
            rec(n, 0, total, &mut cur, &mut out);
        }
        out
    }

    /// Multiset label used in printed configurations: species `a` is
    /// written as the digit `a+1`, repeated; empty site is `∅`.
    pub fn label(&self) -> String {
        if self.is_zero() {
            return "∅".to_string();
        }
        let mut s = String::new();
        for (a, &c) in self.0.iter().enumerate() {
            for _ in 0..c {
                s.push_str(&(a + 1).to_string());
            }
        }
        s
    }
}

impl fmt::Debug for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<u32>> for Occupancy {
    fn from(v: Vec<u32>) -> Self {
        Occupancy(v)
    }
}

/// A basic sector has at least one particle of every species.
pub fn is_basic(m: &Occupancy) -> bool {
    m.0.iter().all(|&c| c >= 1)
}

/// Configuration of a periodic chain of `L` sites.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Config(Vec<Occupancy>);

impl Config {
    pub fn new(sites: Vec<Occupancy>) -> Self {
        if let Some(first) = sites.first() {
            assert!(
                sites.iter().all(|s| s.n() == first.n()),
                "all sites must have the same species count"
            );
        }
        Config(sites)
    }

    pub fn sites(&self) -> &[Occupancy] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n(&self) -> usize {
        self.0.first().map_or(0, Occupancy::n)
    }

    pub fn site(&self, i: usize) -> &Occupancy {
        &self.0[i]
    }

    /// Species totals over all sites.
    pub fn weight(&self) -> Occupancy {
        let mut acc = Occupancy::zero(self.n());
        for s in &self.0 {
            acc = acc.add(s);
        }
        acc
    }

    /// Cyclic shift: site `i` of the result holds site `i + shift` of `self`.
    pub fn rotate(&self, shift: isize) -> Config {
        let len = self.0.len();
        if len == 0 {
            return self.clone();
        }
        let s = shift.rem_euclid(len as isize) as usize;
        let mut v = self.0.clone();
        v.rotate_left(s);
        Config(v)
    }

    /// Site order reversed.
    pub fn reversed(&self) -> Config {
        Config(self.0.iter().rev().cloned().collect())
    }

    pub fn with_site(&self, i: usize, occ: Occupancy) -> Config {
        let mut v = self.0.clone();
        v[i] = occ;
        Config(v)
    }

    pub fn parse_json(s: &str) -> Result<Config> {
        let raw: Vec<Vec<u32>> = serde_json::from_str(s).map_err(|e| ZrpError::Parse {
            input: s.to_string(),
            reason: e.to_string(),
        })?;
        let sites: Vec<Occupancy> = raw.into_iter().map(Occupancy).collect();
        if let Some(first) = sites.first() {
            if sites.iter().any(|x| x.n() != first.n()) {
                return Err(ZrpError::Parse {
                    input: s.to_string(),
                    reason: "sites have different species counts".into(),
                });
            }
        }
        Ok(Config(sites))
    }

    /// Nested-array form such as `[[1,1],[1,0]]`.
    pub fn to_json(&self) -> String {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|o| {
                let inner: Vec<String> = o.0.iter().map(u32::to_string).collect();
                format!("[{}]", inner.join(","))
            })
            .collect();
        format!("[{}]", parts.join(","))
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.0.iter().map(Occupancy::label).collect();
        write!(f, "|{}⟩", labels.join(","))
    }
}

impl fmt::Debug for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// The set of configurations with fixed species totals, with a bijective
/// index.
#[derive(Debug, Clone)]
pub struct Sector {
    n: usize,
    len: usize,
    m: Occupancy,
    configs: Vec<Config>,
    index: HashMap<Config, usize>,
}

fn binom(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `prod_a C(m_a + L - 1, L - 1)`.
pub fn sector_dim(len: usize, m: &Occupancy) -> u128 {
    m.counts()
        .iter()
        .map(|&ma| binom(ma as u128 + len as u128 - 1, len as u128 - 1))
        .product()
}

impl Sector {
    pub fn enumerate(n: usize, len: usize, m: &Occupancy) -> Result<Sector> {
        Self::enumerate_capped(n, len, m, DEFAULT_DIM_CAP)
    }

    pub fn enumerate_capped(n: usize, len: usize, m: &Occupancy, cap: usize) -> Result<Sector> {
        if len == 0 {
            return Err(ZrpError::InvalidParams("L must be >= 1".into()));
        }
        if m.n() != n {
            return Err(ZrpError::LengthMismatch {
                left: n,
                right: m.n(),
            });
        }
        let dim = sector_dim(len, m);
        if dim > cap as u128 {
            return Err(ZrpError::DimensionCap { dim, cap });
        }
        let mut configs = Vec::with_capacity(dim as usize);
        let mut cur: Vec<Occupancy> = Vec::with_capacity(len);
        fn rec(len: usize, left: &Occupancy, cur: &mut Vec<Occupancy>, out: &mut Vec<Config>) {
            if cur.len() + 1 == len {
                cur.push(left.clone());
                out.push(Config(cur.clone()));
                cur.pop();
                return;
            }
            for site in left.below() {
                let rest = left.checked_sub(&site).expect("site below remaining");
                cur.push(site);
                rec(len, &rest, cur, out);
                cur.pop();
            }
        }
        rec(len, m, &mut cur, &mut configs);
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(Sector {
            n,
            len,
            m: m.clone(),
            configs,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of sites.
    pub fn sites(&self) -> usize {
        self.len
    }

    pub fn m(&self) -> &Occupancy {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[Config] {
        &self.configs
    }

    pub fn config(&self, i: usize) -> &Config {
        &self.configs[i]
    }

    pub fn index_of(&self, c: &Config) -> Option<usize> {
        self.index.get(c).copied()
    }
}
