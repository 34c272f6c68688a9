use crate::machine::config::CacheConfig;

/// A resident line: its line address and the tick its data is usable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line {
    pub tag: u64,
    pub ready: u64,
}

/// Set-associative cache with true LRU replacement. Each set is kept in
/// recency order, most recently used first. Addresses are line addresses
/// (byte address divided by the line size).
#[derive(Debug, Clone)]
pub struct Cache {
    ways: usize,
    sets: Vec<Vec<Line>>,
}

impl Cache {
    pub fn new(cfg: &CacheConfig) -> Self {
        let ways = cfg.ways as usize;
        Cache {
            ways,
            sets: (0..cfg.sets()).map(|_| Vec::with_capacity(ways)).collect(),
        }
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    fn set_of(&self, line: u64) -> usize {
        (line % self.sets.len() as u64) as usize
    }

    /// Looks a line up without changing recency.
    pub fn probe(&self, line: u64) -> Option<Line> {
        self.sets[self.set_of(line)]
            .iter()
            .find(|l| l.tag == line)
            .copied()
    }

    pub fn contains(&self, line: u64) -> bool {
        self.probe(line).is_some()
    }

    /// Looks a line up and, on a hit, makes it most recently used.
    pub fn touch(&mut self, line: u64) -> Option<Line> {
        let s = self.set_of(line);
        let set = &mut self.sets[s];
        let pos = set.iter().position(|l| l.tag == line)?;
        let hit = set.remove(pos);
        set.insert(0, hit);
        Some(hit)
    }

    /// Installs a line as most recently used. A line already resident keeps
    /// the earlier of the two ready ticks. Returns the evicted line, if any.
    pub fn insert(&mut self, line: u64, ready: u64) -> Option<Line> {
        let s = self.set_of(line);
        let ways = self.ways;
        let set = &mut self.sets[s];
        if let Some(pos) = set.iter().position(|l| l.tag == line) {
            let mut l = set.remove(pos);
            l.ready = l.ready.min(ready);
            set.insert(0, l);
            return None;
        }
        let evicted = if set.len() == ways { set.pop() } else { None };
        set.insert(0, Line { tag: line, ready });
        evicted
    }

    pub fn invalidate(&mut self, line: u64) -> bool {
        let s = self.set_of(line);
        let set = &mut self.sets[s];
        match set.iter().position(|l| l.tag == line) {
            Some(pos) => {
                set.remove(pos);
                true
            }
            None => false,
        }
    }

    /// Resident lines of one set, most recently used first.
    pub fn set_lines(&self, set: usize) -> &[Line] {
        &self.sets[set]
    }

    pub fn resident(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}
