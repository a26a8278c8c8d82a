use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

/// Default number of most recent results kept per pair.
pub const DEFAULT_WINDOW: usize = 200;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinStats {
    pub wins: u32,
    pub draws: u32,
    pub losses: u32,
}

impl WinStats {
    pub fn count(&self) -> u32 {
        self.wins + self.draws + self.losses
    }

    /// `(wins + draws / 2) / count`, or `None` without matches.
    pub fn win_rate(&self) -> Option<f64> {
        match self.count() {
            0 => None,
            n => Some((self.wins as f64 + 0.5 * self.draws as f64) / n as f64),
        }
    }

    fn add(&mut self, outcome: i8) {
        match outcome.signum() {
            1 => self.wins += 1,
            0 => self.draws += 1,
            _ => self.losses += 1,
        }
    }

    pub fn mirrored(&self) -> WinStats {
        WinStats {
            wins: self.losses,
            draws: self.draws,
            losses: self.wins,
        }
    }
}

/// Sliding-window match results per unordered pair. Each pair is stored once,
/// from the perspective of the lexicographically smaller id, so the two
/// directions can never disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct WinRateTable {
    window: usize,
    pairs: BTreeMap<(String, String), VecDeque<i8>>,
}

impl Default for WinRateTable {
    fn default() -> Self {
        WinRateTable::new(DEFAULT_WINDOW)
    }
}

/// Serialized form of one pair's window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairWindow {
    pub a: String,
    pub b: String,
    /// Results from `a`'s perspective, oldest first.
    pub results: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRateDoc {
    pub window: usize,
    pub pairs: Vec<PairWindow>,
}

impl WinRateTable {
    pub fn new(window: usize) -> Self {
        WinRateTable {
            window: window.max(1),
            pairs: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Records `outcome` (+1/0/-1) from `a`'s perspective against `b`.
    pub fn record(&mut self, a: &str, b: &str, outcome: i8) {
        let (key, o) = if a <= b {
            ((a.to_string(), b.to_string()), outcome)
        } else {
            ((b.to_string(), a.to_string()), -outcome)
        };
        let w = self.pairs.entry(key).or_default();
        w.push_back(o.signum());
        while w.len() > self.window {
            w.pop_front();
        }
    }

    pub fn stats(&self, a: &str, b: &str) -> WinStats {
        let (key, flip) = if a <= b {
            ((a.to_string(), b.to_string()), false)
        } else {
            ((b.to_string(), a.to_string()), true)
        };
        let mut s = WinStats::default();
        if let Some(w) = self.pairs.get(&key) {
            w.iter().for_each(|&o| s.add(o));
        }
        if flip {
            s.mirrored()
        } else {
            s
        }
    }

    pub fn win_rate(&self, a: &str, b: &str) -> Option<f64> {
        self.stats(a, b).win_rate()
    }

    /// Pooled stats of `a` against everyone it has played.
    pub fn aggregate(&self, a: &str) -> WinStats {
        let mut total = WinStats::default();
        for (x, y) in self.pairs.keys() {
            if x == a || y == a {
                let other = if x == a { y } else { x };
                let s = self.stats(a, other);
                total.wins += s.wins;
                total.draws += s.draws;
                total.losses += s.losses;
            }
        }
        total
    }

    pub fn to_doc(&self) -> WinRateDoc {
        WinRateDoc {
            window: self.window,
            pairs: self
                .pairs
                .iter()
                .map(|((a, b), w)| PairWindow {
                    a: a.clone(),
                    b: b.clone(),
                    results: w.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &WinRateDoc) -> Self {
        let mut t = WinRateTable::new(doc.window);
        for p in &doc.pairs {
            let key = if p.a <= p.b {
                (p.a.clone(), p.b.clone())
            } else {
                (p.b.clone(), p.a.clone())
            };
            let flip = p.a > p.b;
            t.pairs.insert(key, p.results.iter().map(|&o| if flip { -o } else { o }).collect());
        }
        t
    }
}
