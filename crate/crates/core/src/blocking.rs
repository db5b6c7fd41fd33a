//! Schema-agnostic token blocking: table, inverse, and query block indexes,
//! plus the hash-join enrichment that pulls table-side candidates into a
//! query's blocks.
//!
//! Every token of every attribute value (id excluded) becomes a blocking key.
//! Block collections are kept in a single canonical order, ascending by block
//! size with ties broken by descending key, so filtering and the planner's
//! estimates are deterministic.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use crate::catalog::{EntityCollection, EntityRef};

/// Lowercased whitespace-delimited tokens; punctuation stays inside tokens
/// ("E.R." is one token). Duplicate tokens within one value collapse.
pub fn tokenize(value: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in value.split_whitespace() {
        let token = raw.to_lowercase();
        if !out.contains(&token) {
            out.push(token);
        }
    }
    out
}

/// Distinct tokens across all non-id attribute values of one entity.
pub fn entity_tokens(collection: &EntityCollection, e: EntityRef) -> Vec<String> {
    let entity = collection.entity(e);
    let mut out: Vec<String> = Vec::new();
    for attr in collection.value_attrs() {
        if let Some(value) = entity.value(attr) {
            for token in tokenize(value) {
                if !out.contains(&token) {
                    out.push(token);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub key: String,
    /// Sorted ascending; an entity appears at most once per block.
    pub members: Vec<EntityRef>,
}

impl Block {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Number of comparisons the block implies: |b|(|b|-1)/2.
    pub fn cardinality(&self) -> u64 {
        let n = self.members.len() as u64;
        n * (n - 1) / 2
    }
}

fn canonical_cmp(a: &Block, b: &Block) -> Ordering {
    a.members
        .len()
        .cmp(&b.members.len())
        .then_with(|| b.key.cmp(&a.key))
}

/// A set of blocks in canonical enumeration order (size ascending, key
/// descending on ties).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockCollection {
    pub blocks: Vec<Block>,
}

impl BlockCollection {
    pub fn from_map(map: HashMap<String, Vec<EntityRef>>) -> BlockCollection {
        let mut blocks: Vec<Block> = map
            .into_iter()
            .map(|(key, mut members)| {
                members.sort_unstable();
                members.dedup();
                Block { key, members }
            })
            .collect();
        blocks.sort_by(canonical_cmp);
        BlockCollection { blocks }
    }

    pub fn resort(&mut self) {
        self.blocks.sort_by(canonical_cmp);
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn total_cardinality(&self) -> u64 {
        self.blocks.iter().map(Block::cardinality).sum()
    }

    /// Block indices per entity, ascending; because `blocks` is canonically
    /// sorted, each list is ordered by block size.
    pub fn entity_block_lists(&self) -> HashMap<EntityRef, Vec<usize>> {
        let mut lists: HashMap<EntityRef, Vec<usize>> = HashMap::new();
        for (i, block) in self.blocks.iter().enumerate() {
            for &m in &block.members {
                lists.entry(m).or_default().push(i);
            }
        }
        lists
    }
}

/// Table Block Index: every token block of a collection plus a key lookup.
#[derive(Debug, Clone)]
pub struct TableBlockIndex {
    pub blocks: BlockCollection,
    by_key: HashMap<String, usize>,
}

impl TableBlockIndex {
    pub fn get(&self, key: &str) -> Option<&Block> {
        self.by_key.get(key).map(|&i| &self.blocks.blocks[i])
    }
}

/// Inverse index: entity -> indices into the TBI's canonical block order,
/// each list ascending (hence ascending by block size).
#[derive(Debug, Clone)]
pub struct InverseTableBlockIndex {
    pub postings: Vec<Vec<usize>>,
}

impl InverseTableBlockIndex {
    pub fn blocks_of(&self, e: EntityRef) -> &[usize] {
        &self.postings[e as usize]
    }
}

pub fn build_table_block_index(
    collection: &EntityCollection,
) -> (TableBlockIndex, InverseTableBlockIndex) {
    let mut map: HashMap<String, Vec<EntityRef>> = HashMap::new();
    for e in collection.refs() {
        for token in entity_tokens(collection, e) {
            map.entry(token).or_default().push(e);
        }
    }
    let blocks = BlockCollection::from_map(map);
    let by_key: HashMap<String, usize> = blocks
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.key.clone(), i))
        .collect();
    let mut postings = vec![Vec::new(); collection.len()];
    for (i, block) in blocks.blocks.iter().enumerate() {
        for &m in &block.members {
            postings[m as usize].push(i);
        }
    }
    (
        TableBlockIndex { blocks, by_key },
        InverseTableBlockIndex { postings },
    )
}

/// Query Block Index: blocks over the query entities only, via the same
/// blocking function as the TBI.
pub fn build_query_block_index(
    collection: &EntityCollection,
    qe: &[EntityRef],
) -> BlockCollection {
    let mut map: HashMap<String, Vec<EntityRef>> = HashMap::new();
    for &e in qe {
        for token in entity_tokens(collection, e) {
            map.entry(token).or_default().push(e);
        }
    }
    BlockCollection::from_map(map)
}

/// Block-Join: hash-join on keys, enriching each query block with all
/// table-side members sharing its key. No new keys appear.
pub fn block_join(qbi: &BlockCollection, tbi: &TableBlockIndex) -> BlockCollection {
    let mut blocks: Vec<Block> = qbi
        .blocks
        .iter()
        .map(|qb| match tbi.get(&qb.key) {
            Some(tb) => Block {
                key: qb.key.clone(),
                members: tb.members.clone(),
            },
            None => qb.clone(),
        })
        .collect();
    blocks.sort_by(canonical_cmp);
    BlockCollection { blocks }
}

/// Writes blocks as JSON lines `{key, size, members}` in enumeration order;
/// members are entity ids.
pub fn dump_jsonl(
    blocks: &BlockCollection,
    collection: &EntityCollection,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    for block in &blocks.blocks {
        let members: Vec<&str> = block
            .members
            .iter()
            .map(|&m| collection.entity(m).id.as_str())
            .collect();
        let line = serde_json::json!({
            "key": block.key,
            "size": block.size(),
            "members": members,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Entity;

    fn collection(rows: &[(&str, &[Option<&str>])]) -> EntityCollection {
        let attrs = 1 + rows.iter().map(|(_, vs)| vs.len()).max().unwrap_or(0);
        let names: Vec<String> = (0..attrs)
            .map(|i| if i == 0 { "Id".into() } else { format!("A{i}") })
            .collect();
        let mut c = EntityCollection::new("T", names, 0);
        for (id, values) in rows {
            let mut vals: Vec<Option<String>> = vec![Some(id.to_string())];
            vals.extend(values.iter().map(|v| v.map(str::to_string)));
            c.push(Entity { id: id.to_string(), values: vals }).unwrap();
        }
        c
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(
            tokenize("Collective Entity Resolution"),
            vec!["collective", "entity", "resolution"]
        );
    }

    #[test]
    fn tokenize_keeps_punctuation() {
        assert_eq!(tokenize("Collective E.R."), vec!["collective", "e.r."]);
    }

    #[test]
    fn tokenize_empty_and_duplicates() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
        assert_eq!(tokenize("a b a"), vec!["a", "b"]);
    }

    #[test]
    fn tbi_from_titles() {
        let c = collection(&[
            ("P_1", &[Some("Collective Entity Resolution")]),
            ("P_2", &[Some("Collective E.R.")]),
        ]);
        let (tbi, _) = build_table_block_index(&c);
        let get = |k: &str| tbi.get(k).map(|b| b.members.clone());
        assert_eq!(get("collective"), Some(vec![0, 1]));
        assert_eq!(get("entity"), Some(vec![0]));
        assert_eq!(get("resolution"), Some(vec![0]));
        assert_eq!(get("e.r."), Some(vec![1]));
        assert_eq!(get("p_1"), None); // id column excluded
    }

    #[test]
    fn singleton_block_retained_with_zero_cardinality() {
        let c = collection(&[("A", &[Some("solo")])]);
        let (tbi, _) = build_table_block_index(&c);
        assert_eq!(tbi.blocks.len(), 1);
        assert_eq!(tbi.blocks.blocks[0].cardinality(), 0);
    }

    #[test]
    fn canonical_order_is_size_asc_key_desc() {
        let mut map = HashMap::new();
        map.insert("a".to_string(), vec![0, 1]);
        map.insert("b".to_string(), vec![0, 1]);
        map.insert("c".to_string(), vec![0]);
        map.insert("d".to_string(), vec![0, 1, 2]);
        let bc = BlockCollection::from_map(map);
        let keys: Vec<&str> = bc.blocks.iter().map(|b| b.key.as_str()).collect();
        assert_eq!(keys, vec!["c", "b", "a", "d"]);
        let sizes: Vec<usize> = bc.blocks.iter().map(Block::size).collect();
        let mut sorted = sizes.clone();
        sorted.sort_unstable();
        assert_eq!(sizes, sorted);
    }

    #[test]
    fn inverse_index_matches_brute_force_scan() {
        let c = collection(&[
            ("1", &[Some("red green"), Some("blue")]),
            ("2", &[Some("green blue"), None]),
            ("3", &[Some("red"), Some("red")]),
        ]);
        let (tbi, itbi) = build_table_block_index(&c);
        for e in c.refs() {
            for token in entity_tokens(&c, e) {
                let block = tbi.get(&token).unwrap();
                assert!(block.members.contains(&e), "{token} missing {e}");
                let idx = tbi
                    .blocks
                    .blocks
                    .iter()
                    .position(|b| b.key == token)
                    .unwrap();
                assert!(itbi.blocks_of(e).contains(&idx));
            }
        }
        for (e, posting) in itbi.postings.iter().enumerate() {
            let mut sorted = posting.clone();
            sorted.sort_unstable();
            assert_eq!(posting, &sorted);
            for &i in posting {
                assert!(tbi.blocks.blocks[i].members.contains(&(e as EntityRef)));
            }
        }
    }

    #[test]
    fn qbi_of_everything_equals_tbi() {
        let c = collection(&[
            ("1", &[Some("x y")]),
            ("2", &[Some("y z")]),
            ("3", &[Some("z x")]),
        ]);
        let (tbi, _) = build_table_block_index(&c);
        let all: Vec<EntityRef> = c.refs().collect();
        let qbi = build_query_block_index(&c, &all);
        assert_eq!(qbi, tbi.blocks);
        assert!(build_query_block_index(&c, &[]).is_empty());
    }

    #[test]
    fn block_join_enriches_with_table_members() {
        let c = collection(&[
            ("q1", &[Some("k1")]),
            ("e5", &[Some("k1")]),
            ("e9", &[Some("k1")]),
            ("e7", &[Some("k2")]),
        ]);
        let (tbi, _) = build_table_block_index(&c);
        let qbi = build_query_block_index(&c, &[0]);
        let eqbi = block_join(&qbi, &tbi);
        assert_eq!(eqbi.blocks.len(), 1);
        assert_eq!(eqbi.blocks[0].key, "k1");
        assert_eq!(eqbi.blocks[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn block_join_of_full_query_is_identity() {
        let c = collection(&[("1", &[Some("x y")]), ("2", &[Some("y")])]);
        let (tbi, _) = build_table_block_index(&c);
        let all: Vec<EntityRef> = c.refs().collect();
        let eqbi = block_join(&build_query_block_index(&c, &all), &tbi);
        assert_eq!(eqbi, tbi.blocks);
    }

    #[test]
    fn shared_token_pairs_co_occur_in_eqbi() {
        let c = collection(&[
            ("1", &[Some("alpha beta")]),
            ("2", &[Some("beta gamma")]),
            ("3", &[Some("gamma delta")]),
        ]);
        let (tbi, _) = build_table_block_index(&c);
        let qe = vec![0];
        let eqbi = block_join(&build_query_block_index(&c, &qe), &tbi);
        // entity 2 shares "beta" with the query entity, so they co-occur
        assert!(eqbi
            .blocks
            .iter()
            .any(|b| b.members.contains(&0) && b.members.contains(&1)));
        // entity 3 shares nothing with entity 1
        assert!(!eqbi.blocks.iter().any(|b| b.members.contains(&2)));
    }

    #[test]
    fn build_is_deterministic() {
        let c = collection(&[
            ("1", &[Some("m n o")]),
            ("2", &[Some("n o p")]),
            ("3", &[Some("o p m")]),
        ]);
        let (a, _) = build_table_block_index(&c);
        let (b, _) = build_table_block_index(&c);
        assert_eq!(a.blocks, b.blocks);
    }

    #[test]
    fn dump_writes_one_line_per_block() {
        let c = collection(&[("1", &[Some("x")]), ("2", &[Some("x")])]);
        let (tbi, _) = build_table_block_index(&c);
        let mut buf = Vec::new();
        dump_jsonl(&tbi.blocks, &c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["key"], "x");
        assert_eq!(v["size"], 2);
        assert_eq!(v["members"][0], "1");
    }
}
