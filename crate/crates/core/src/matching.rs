//! Pairwise matching: Jaro-Winkler string similarity averaged over shared
//! attributes, a cross-query ledger so no pair is ever compared twice, and a
//! union-find link index that accumulates discovered duplicates.

use std::collections::{HashMap, HashSet};

use crate::catalog::{EntityCollection, EntityRef};

fn jaro(a: &[char], b: &[char]) -> f64 {
    let window = (a.len().max(b.len()) as isize) / 2 - 1;
    let mut a_hit = vec![false; a.len()];
    let mut b_hit = vec![false; b.len()];
    let mut matches = 0usize;
    for i in 0..a.len() {
        let start = (i as isize - window).max(0) as usize;
        let end = ((i as isize + window + 1).max(0) as usize).min(b.len());
        for j in start..end {
            if !b_hit[j] && a[i] == b[j] {
                a_hit[i] = true;
                b_hit[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let mut transposed = 0usize;
    let mut j = 0usize;
    for i in 0..a.len() {
        if a_hit[i] {
            while !b_hit[j] {
                j += 1;
            }
            if a[i] != b[j] {
                transposed += 1;
            }
            j += 1;
        }
    }
    let m = matches as f64;
    let t = (transposed / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro similarity with the Winkler prefix boost (scale 0.1, prefix capped at
/// four chars, applied only above 0.7). Equal non-empty strings score 1.0;
/// any empty operand scores 0.0.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let ac: Vec<char> = a.chars().collect();
    let bc: Vec<char> = b.chars().collect();
    let j = jaro(&ac, &bc);
    if j <= 0.7 {
        return j;
    }
    let prefix = ac
        .iter()
        .zip(bc.iter())
        .take(4)
        .take_while(|(x, y)| x == y)
        .count() as f64;
    j + prefix * 0.1 * (1.0 - j)
}

/// Mean Jaro-Winkler over the non-id attributes present on both entities;
/// 0.0 when they share no populated attribute.
pub fn entity_similarity(collection: &EntityCollection, a: EntityRef, b: EntityRef) -> f64 {
    let ea = collection.entity(a);
    let eb = collection.entity(b);
    let mut total = 0.0;
    let mut count = 0usize;
    for attr in collection.value_attrs() {
        if let (Some(va), Some(vb)) = (ea.value(attr), eb.value(attr)) {
            total += jaro_winkler(va, vb);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Attribute similarity against a threshold.
    Similarity,
    /// Every executed comparison counts as a match.
    CoOccurrence,
}

#[derive(Debug, Clone, Copy)]
pub struct MatchConfig {
    pub mode: MatchMode,
    pub threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            mode: MatchMode::Similarity,
            threshold: 0.35,
        }
    }
}

/// Remembers every pair ever compared for one collection so later queries
/// never repeat work.
#[derive(Debug, Default)]
pub struct ComparisonLedger {
    executed: HashSet<(EntityRef, EntityRef)>,
}

impl ComparisonLedger {
    pub fn contains(&self, a: EntityRef, b: EntityRef) -> bool {
        self.executed.contains(&norm(a, b))
    }

    pub fn record(&mut self, a: EntityRef, b: EntityRef) -> bool {
        self.executed.insert(norm(a, b))
    }

    pub fn len(&self) -> usize {
        self.executed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.executed.is_empty()
    }
}

fn norm(a: EntityRef, b: EntityRef) -> (EntityRef, EntityRef) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Union-find over one collection's entities, tracking which entities have
/// already been fully resolved by some query.
#[derive(Debug, Clone)]
pub struct LinkIndex {
    parent: Vec<EntityRef>,
    members: HashMap<EntityRef, Vec<EntityRef>>,
    resolved: Vec<bool>,
}

impl LinkIndex {
    pub fn new(n: usize) -> LinkIndex {
        LinkIndex {
            parent: (0..n as EntityRef).collect(),
            members: HashMap::new(),
            resolved: vec![false; n],
        }
    }

    pub fn find(&mut self, e: EntityRef) -> EntityRef {
        let mut root = e;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = e;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    pub fn same(&mut self, a: EntityRef, b: EntityRef) -> bool {
        self.find(a) == self.find(b)
    }

    /// Returns true when two previously separate clusters merged.
    pub fn link(&mut self, a: EntityRef, b: EntityRef) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        let ma = self.members.remove(&ra).unwrap_or_else(|| vec![ra]);
        let mb = self.members.remove(&rb).unwrap_or_else(|| vec![rb]);
        let (root, other, mut big, small) = if ma.len() >= mb.len() {
            (ra, rb, ma, mb)
        } else {
            (rb, ra, mb, ma)
        };
        self.parent[other as usize] = root;
        big.extend(small);
        self.members.insert(root, big);
        true
    }

    /// All entities linked with `e`, including `e`, sorted.
    pub fn cluster(&mut self, e: EntityRef) -> Vec<EntityRef> {
        let root = self.find(e);
        let mut out = self.members.get(&root).cloned().unwrap_or_else(|| vec![root]);
        out.sort_unstable();
        out
    }

    pub fn is_resolved(&self, e: EntityRef) -> bool {
        self.resolved[e as usize]
    }

    pub fn mark_resolved(&mut self, e: EntityRef) {
        self.resolved[e as usize] = true;
    }
}

#[derive(Debug, Default)]
pub struct ComparisonOutcome {
    /// Pairs that matched and merged two clusters, in execution order.
    pub new_links: Vec<(EntityRef, EntityRef)>,
    pub executed: u64,
    pub matched: u64,
}

/// Runs candidate pairs through the matcher, updating the link index as
/// matches land so later pairs already implied by transitivity are skipped.
///
/// A pair is skipped without counting when it involves no query entity, is
/// already linked, joins two fully resolved entities, or sits in the ledger.
pub fn execute_comparisons(
    collection: &EntityCollection,
    pairs: &[(EntityRef, EntityRef)],
    qe: &HashSet<EntityRef>,
    li: &mut LinkIndex,
    ledger: &mut ComparisonLedger,
    cfg: &MatchConfig,
    mut capture: Option<&mut Vec<(EntityRef, EntityRef)>>,
) -> ComparisonOutcome {
    let mut out = ComparisonOutcome::default();
    for &(a, b) in pairs {
        if !qe.contains(&a) && !qe.contains(&b) {
            continue;
        }
        if li.same(a, b) {
            continue;
        }
        if li.is_resolved(a) && li.is_resolved(b) {
            continue;
        }
        if !ledger.record(a, b) {
            continue;
        }
        out.executed += 1;
        if let Some(cap) = capture.as_deref_mut() {
            cap.push(norm(a, b));
        }
        let matched = match cfg.mode {
            MatchMode::CoOccurrence => true,
            MatchMode::Similarity => entity_similarity(collection, a, b) >= cfg.threshold,
        };
        if matched {
            out.matched += 1;
            if li.link(a, b) {
                out.new_links.push(norm(a, b));
            }
        }
    }
    out
}
