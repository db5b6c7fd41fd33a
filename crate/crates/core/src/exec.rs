//! Plan execution. Deduplication runs block-join, cleaning and matching over
//! just the query entities; joins either pair two resolved sides or restrict
//! a dirty side by the clean side's join values before resolving it. Grouping
//! collapses rows whose slots share clusters into hyper-rows.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::rc::Rc;
use std::time::Instant;

use serde::Serialize;

use crate::blocking::{
    build_query_block_index, build_table_block_index, block_join, InverseTableBlockIndex,
    TableBlockIndex,
};
use crate::catalog::{EntityCollection, EntityRef};
use crate::matching::{
    execute_comparisons, ComparisonLedger, LinkIndex, MatchConfig,
};
use crate::metablocking::{restructure, MetaBlockingConfig};
use crate::planner::{JoinKind, PlanNode};
use crate::sqlfront::{eval_predicate, BoundAttr, BoundQuery};

/// One collection plus every piece of query-time state that outlives a query.
pub struct SourceState {
    pub collection: EntityCollection,
    pub tbi: TableBlockIndex,
    pub itbi: InverseTableBlockIndex,
    pub li: LinkIndex,
    pub ledger: ComparisonLedger,
}

impl SourceState {
    pub fn new(collection: EntityCollection) -> SourceState {
        let (tbi, itbi) = build_table_block_index(&collection);
        let li = LinkIndex::new(collection.len());
        SourceState {
            collection,
            tbi,
            itbi,
            li,
            ledger: ComparisonLedger::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub mb: MetaBlockingConfig,
    pub matching: MatchConfig,
    /// Keep links and resolution marks across queries.
    pub use_link_index: bool,
    /// Record executed comparison pairs into the metrics.
    pub capture_comparisons: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            mb: MetaBlockingConfig::default(),
            matching: MatchConfig::default(),
            use_link_index: true,
            capture_comparisons: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct QueryMetrics {
    pub total_ms: f64,
    pub blocking_ms: f64,
    pub metablocking_ms: f64,
    pub matching_ms: f64,
    pub join_ms: f64,
    pub grouping_ms: f64,
    pub executed_comparisons: u64,
    pub matched_comparisons: u64,
    pub new_links: u64,
    pub query_entities: usize,
    pub resolved_entities: usize,
    pub output_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_pairs: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Clusters over the entities a slot resolved, plus membership lookup.
#[derive(Debug)]
pub struct ResolvedSlot {
    pub clusters: Vec<Vec<EntityRef>>,
    pub of: HashMap<EntityRef, usize>,
}

/// Outcome of deduplicating one query-entity set: the entities influencing
/// the answer (query entities plus every discovered duplicate) and their
/// clusters.
#[derive(Debug)]
pub struct DedupResult {
    pub qe: Vec<EntityRef>,
    pub entities: Vec<EntityRef>,
    pub slot: Rc<ResolvedSlot>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn build_result(li: &mut LinkIndex, qe: &[EntityRef]) -> DedupResult {
    let mut clusters: Vec<Vec<EntityRef>> = Vec::new();
    let mut seen_roots: HashSet<EntityRef> = HashSet::new();
    let mut entities: BTreeSet<EntityRef> = BTreeSet::new();
    for &q in qe {
        let root = li.find(q);
        if seen_roots.insert(root) {
            let members = li.cluster(q);
            entities.extend(members.iter().copied());
            clusters.push(members);
        }
    }
    clusters.sort_by_key(|c| c[0]);
    let mut of = HashMap::new();
    for (i, c) in clusters.iter().enumerate() {
        for &m in c {
            of.insert(m, i);
        }
    }
    DedupResult {
        qe: qe.to_vec(),
        entities: entities.into_iter().collect(),
        slot: Rc::new(ResolvedSlot { clusters, of }),
    }
}

/// Resolves one query-entity set against its collection: enrich the query
/// blocks with table-side candidates, clean them, execute the surviving
/// comparisons, and fold new links into the collection's link index.
pub fn deduplicate(
    state: &mut SourceState,
    mut qe: Vec<EntityRef>,
    cfg: &ExecConfig,
    metrics: &mut QueryMetrics,
) -> DedupResult {
    qe.sort_unstable();
    qe.dedup();
    metrics.query_entities += qe.len();

    let t0 = Instant::now();
    let qbi = build_query_block_index(&state.collection, &qe);
    let eqbi = block_join(&qbi, &state.tbi);
    metrics.blocking_ms += ms(t0);

    let t1 = Instant::now();
    let (pairs, _) = restructure(eqbi, &cfg.mb);
    metrics.metablocking_ms += ms(t1);

    let t2 = Instant::now();
    let qe_set: HashSet<EntityRef> = qe.iter().copied().collect();
    let mut capture = if cfg.capture_comparisons { Some(Vec::new()) } else { None };
    let (outcome, result) = if cfg.use_link_index {
        let outcome = execute_comparisons(
            &state.collection,
            &pairs,
            &qe_set,
            &mut state.li,
            &mut state.ledger,
            &cfg.matching,
            capture.as_mut(),
        );
        for &q in &qe {
            state.li.mark_resolved(q);
        }
        let result = build_result(&mut state.li, &qe);
        (outcome, result)
    } else {
        // transient state: nothing carries over to the next query
        let mut li = LinkIndex::new(state.collection.len());
        let mut ledger = ComparisonLedger::default();
        let outcome = execute_comparisons(
            &state.collection,
            &pairs,
            &qe_set,
            &mut li,
            &mut ledger,
            &cfg.matching,
            capture.as_mut(),
        );
        let result = build_result(&mut li, &qe);
        (outcome, result)
    };
    metrics.matching_ms += ms(t2);
    metrics.executed_comparisons += outcome.executed;
    metrics.matched_comparisons += outcome.matched;
    metrics.new_links += outcome.new_links.len() as u64;
    metrics.resolved_entities += result.entities.len();
    if let Some(cap) = capture {
        let ids = metrics.comparison_pairs.get_or_insert_with(Vec::new);
        for (a, b) in cap {
            ids.push((
                state.collection.entity(a).id.clone(),
                state.collection.entity(b).id.clone(),
            ));
        }
    }
    result
}

/// Entity tuples flowing between operators; each column belongs to one bound
/// source and may carry that slot's resolution.
pub struct RowSet {
    pub slots: Vec<usize>,
    pub resolved: Vec<Option<Rc<ResolvedSlot>>>,
    pub rows: Vec<Vec<EntityRef>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum GroupKey {
    Cluster(usize),
    Single(EntityRef),
}

struct GroupedRows {
    slots: Vec<usize>,
    resolved: Vec<Option<Rc<ResolvedSlot>>>,
    keys: Vec<Vec<GroupKey>>,
}

enum Value {
    Rows(RowSet),
    Resolved(usize, DedupResult),
    Grouped(GroupedRows),
}

fn to_rows(value: Value) -> RowSet {
    match value {
        Value::Rows(r) => r,
        Value::Resolved(slot, dr) => RowSet {
            slots: vec![slot],
            resolved: vec![Some(dr.slot.clone())],
            rows: dr.entities.iter().map(|&e| vec![e]).collect(),
        },
        Value::Grouped(_) => unreachable!("grouped rows feed only projection"),
    }
}

struct Env<'a> {
    bound: &'a BoundQuery,
    states: &'a mut [SourceState],
    map: &'a [usize],
    cfg: &'a ExecConfig,
    metrics: &'a mut QueryMetrics,
}

fn col_of(rows: &RowSet, source: usize) -> usize {
    rows.slots
        .iter()
        .position(|&s| s == source)
        .expect("plan references a slot missing from its input")
}

/// Orients a join edge: returns (acc-side attr, new-side attr) given which
/// slot the new side covers.
fn orient(bound: &BoundQuery, join: usize, new_slot: usize) -> (BoundAttr, BoundAttr) {
    let j = &bound.joins[join];
    if j.right.source == new_slot {
        (j.left, j.right)
    } else {
        (j.right, j.left)
    }
}

fn single_slot(rows: &RowSet) -> usize {
    assert_eq!(rows.slots.len(), 1, "dirty join side must be a single scan");
    rows.slots[0]
}

/// Pairs every left row with every member of each right cluster its join
/// value reaches. Left rows covering one cluster jointly enumerate the full
/// cluster-by-cluster pairing, so grouped output sees complete hyper-rows.
fn emit_join(
    states: &[SourceState],
    map: &[usize],
    l_rows: RowSet,
    acc_attr: BoundAttr,
    right_dr: &DedupResult,
    right_slot: usize,
    right_attr: BoundAttr,
) -> RowSet {
    let lpos = col_of(&l_rows, acc_attr.source);
    let l_coll = &states[map[acc_attr.source]].collection;
    let r_coll = &states[map[right_slot]].collection;
    let mut index: HashMap<&str, Vec<EntityRef>> = HashMap::new();
    for &r in &right_dr.entities {
        if let Some(v) = r_coll.entity(r).value(right_attr.attr) {
            index.entry(v).or_default().push(r);
        }
    }
    let resolution = right_dr.slot.clone();
    let mut rows = Vec::new();
    for row in &l_rows.rows {
        let Some(v) = l_coll.entity(row[lpos]).value(acc_attr.attr) else {
            continue;
        };
        let Some(matches) = index.get(v) else { continue };
        let mut expanded: BTreeSet<EntityRef> = BTreeSet::new();
        for &r in matches {
            expanded.extend(resolution.clusters[resolution.of[&r]].iter().copied());
        }
        for r in expanded {
            let mut out = row.clone();
            out.push(r);
            rows.push(out);
        }
    }
    let mut slots = l_rows.slots;
    slots.push(right_slot);
    let mut resolved = l_rows.resolved;
    resolved.push(Some(resolution));
    RowSet { slots, resolved, rows }
}

/// Join values present on the acc side, for restricting a dirty side.
fn join_values(states: &[SourceState], map: &[usize], rows: &RowSet, attr: BoundAttr) -> HashSet<String> {
    let pos = col_of(rows, attr.source);
    let coll = &states[map[attr.source]].collection;
    rows.rows
        .iter()
        .filter_map(|row| coll.entity(row[pos]).value(attr.attr).map(str::to_string))
        .collect()
}

fn restrict(
    states: &[SourceState],
    map: &[usize],
    dirty: &RowSet,
    attr: BoundAttr,
    values: &HashSet<String>,
) -> Vec<EntityRef> {
    let pos = col_of(dirty, attr.source);
    let coll = &states[map[attr.source]].collection;
    dirty
        .rows
        .iter()
        .map(|row| row[pos])
        .filter(|&e| {
            coll.entity(e)
                .value(attr.attr)
                .map_or(false, |v| values.contains(v))
        })
        .collect()
}

fn eval(node: &PlanNode, env: &mut Env) -> Value {
    match node {
        PlanNode::Scan { source } => {
            let coll = &env.states[env.map[*source]].collection;
            Value::Rows(RowSet {
                slots: vec![*source],
                resolved: vec![None],
                rows: coll.refs().map(|e| vec![e]).collect(),
            })
        }
        PlanNode::Filter { source, child } => {
            let mut rows = to_rows(eval(child, env));
            let pred = env.bound.predicates[*source]
                .as_ref()
                .expect("filter node without predicate");
            let pos = col_of(&rows, *source);
            let coll = &env.states[env.map[*source]].collection;
            rows.rows.retain(|row| eval_predicate(pred, coll, row[pos]));
            Value::Rows(rows)
        }
        PlanNode::Deduplicate { source, child, .. } => {
            let rows = to_rows(eval(child, env));
            let pos = col_of(&rows, *source);
            let qe: Vec<EntityRef> = rows.rows.iter().map(|row| row[pos]).collect();
            let dr = deduplicate(
                &mut env.states[env.map[*source]],
                qe,
                env.cfg,
                env.metrics,
            );
            Value::Resolved(*source, dr)
        }
        PlanNode::DeduplicateJoin { kind, join, left, right } => match kind {
            JoinKind::CleanBoth => {
                let l_rows = to_rows(eval(left, env));
                let Value::Resolved(r_slot, r_dr) = eval(right, env) else {
                    panic!("clean join side must resolve");
                };
                let (acc_attr, right_attr) = orient(env.bound, *join, r_slot);
                let t = Instant::now();
                let out = emit_join(env.states, env.map, l_rows, acc_attr, &r_dr, r_slot, right_attr);
                env.metrics.join_ms += ms(t);
                Value::Rows(out)
            }
            JoinKind::DirtyRight => {
                let l_rows = to_rows(eval(left, env));
                let dirty = to_rows(eval(right, env));
                let r_slot = single_slot(&dirty);
                let (acc_attr, right_attr) = orient(env.bound, *join, r_slot);
                let t = Instant::now();
                let values = join_values(env.states, env.map, &l_rows, acc_attr);
                let qe = restrict(env.states, env.map, &dirty, right_attr, &values);
                env.metrics.join_ms += ms(t);
                let r_dr = deduplicate(
                    &mut env.states[env.map[r_slot]],
                    qe,
                    env.cfg,
                    env.metrics,
                );
                let t = Instant::now();
                let out = emit_join(env.states, env.map, l_rows, acc_attr, &r_dr, r_slot, right_attr);
                env.metrics.join_ms += ms(t);
                Value::Rows(out)
            }
            JoinKind::DirtyLeft => {
                let Value::Resolved(r_slot, r_dr) = eval(right, env) else {
                    panic!("clean join side must resolve");
                };
                let dirty = to_rows(eval(left, env));
                let l_slot = single_slot(&dirty);
                let (l_attr, r_attr) = orient(env.bound, *join, r_slot);
                debug_assert_eq!(l_attr.source, l_slot);
                let t = Instant::now();
                let r_rows = to_rows(Value::Resolved(r_slot, DedupResult {
                    qe: r_dr.qe.clone(),
                    entities: r_dr.entities.clone(),
                    slot: r_dr.slot.clone(),
                }));
                let values = join_values(env.states, env.map, &r_rows, r_attr);
                let qe = restrict(env.states, env.map, &dirty, l_attr, &values);
                env.metrics.join_ms += ms(t);
                let l_dr = deduplicate(
                    &mut env.states[env.map[l_slot]],
                    qe,
                    env.cfg,
                    env.metrics,
                );
                let t = Instant::now();
                let l_rows = to_rows(Value::Resolved(l_slot, l_dr));
                let out = emit_join(env.states, env.map, l_rows, l_attr, &r_dr, r_slot, r_attr);
                env.metrics.join_ms += ms(t);
                Value::Rows(out)
            }
        },
        PlanNode::HashJoin { join, left, right } => {
            let l_rows = to_rows(eval(left, env));
            let r_rows = to_rows(eval(right, env));
            let r_slot = single_slot(&r_rows);
            let (acc_attr, right_attr) = orient(env.bound, *join, r_slot);
            let t = Instant::now();
            let lpos = col_of(&l_rows, acc_attr.source);
            let l_coll = &env.states[env.map[acc_attr.source]].collection;
            let r_coll = &env.states[env.map[r_slot]].collection;
            let mut index: HashMap<&str, Vec<EntityRef>> = HashMap::new();
            for row in &r_rows.rows {
                if let Some(v) = r_coll.entity(row[0]).value(right_attr.attr) {
                    index.entry(v).or_default().push(row[0]);
                }
            }
            let mut rows = Vec::new();
            for row in &l_rows.rows {
                let Some(v) = l_coll.entity(row[lpos]).value(acc_attr.attr) else {
                    continue;
                };
                if let Some(matches) = index.get(v) {
                    for &r in matches {
                        let mut out = row.clone();
                        out.push(r);
                        rows.push(out);
                    }
                }
            }
            let mut slots = l_rows.slots;
            slots.push(r_slot);
            let mut resolved = l_rows.resolved;
            resolved.push(None);
            env.metrics.join_ms += ms(t);
            Value::Rows(RowSet { slots, resolved, rows })
        }
        PlanNode::GroupEntities { child } => {
            let rows = to_rows(eval(child, env));
            let t = Instant::now();
            let mut seen: HashSet<Vec<GroupKey>> = HashSet::new();
            let mut keys: Vec<Vec<GroupKey>> = Vec::new();
            for row in &rows.rows {
                let key: Vec<GroupKey> = row
                    .iter()
                    .zip(&rows.resolved)
                    .map(|(&e, res)| match res {
                        Some(rs) => GroupKey::Cluster(rs.of[&e]),
                        None => GroupKey::Single(e),
                    })
                    .collect();
                if seen.insert(key.clone()) {
                    keys.push(key);
                }
            }
            env.metrics.grouping_ms += ms(t);
            Value::Grouped(GroupedRows {
                slots: rows.slots,
                resolved: rows.resolved,
                keys,
            })
        }
        PlanNode::Project { .. } => unreachable!("projection is handled at the root"),
    }
}

fn members_by_id(coll: &EntityCollection, members: &[EntityRef]) -> Vec<EntityRef> {
    let mut out = members.to_vec();
    out.sort_by(|&a, &b| coll.entity(a).id.cmp(&coll.entity(b).id));
    out
}

fn project_grouped(
    grouped: GroupedRows,
    env: &mut Env,
) -> Vec<Vec<String>> {
    let t = Instant::now();
    // per group and slot: members ordered by entity id
    let group_members: Vec<Vec<Vec<EntityRef>>> = grouped
        .keys
        .iter()
        .map(|key| {
            key.iter()
                .enumerate()
                .map(|(i, k)| {
                    let coll = &env.states[env.map[grouped.slots[i]]].collection;
                    let members = match k {
                        GroupKey::Cluster(c) => grouped.resolved[i]
                            .as_ref()
                            .expect("cluster key on raw slot")
                            .clusters[*c]
                            .clone(),
                        GroupKey::Single(e) => vec![*e],
                    };
                    members_by_id(coll, &members)
                })
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..group_members.len()).collect();
    let least_ids: Vec<Vec<&str>> = group_members
        .iter()
        .map(|slots| {
            slots
                .iter()
                .enumerate()
                .map(|(i, members)| {
                    env.states[env.map[grouped.slots[i]]]
                        .collection
                        .entity(members[0])
                        .id
                        .as_str()
                })
                .collect()
        })
        .collect();
    order.sort_by(|&a, &b| least_ids[a].cmp(&least_ids[b]));

    let mut rows = Vec::with_capacity(order.len());
    for g in order {
        let mut row = Vec::with_capacity(env.bound.projections.len());
        for (attr, _) in &env.bound.projections {
            let pos = grouped
                .slots
                .iter()
                .position(|&s| s == attr.source)
                .expect("projection references an unjoined collection");
            let coll = &env.states[env.map[attr.source]].collection;
            let mut parts: Vec<&str> = Vec::new();
            for &m in &group_members[g][pos] {
                if let Some(v) = coll.entity(m).value(attr.attr) {
                    if !parts.contains(&v) {
                        parts.push(v);
                    }
                }
            }
            row.push(parts.join(" | "));
        }
        rows.push(row);
    }
    env.metrics.grouping_ms += ms(t);
    rows
}

fn project_plain(rows: RowSet, env: &Env) -> Vec<Vec<String>> {
    rows.rows
        .iter()
        .map(|row| {
            env.bound
                .projections
                .iter()
                .map(|(attr, _)| {
                    let pos = rows
                        .slots
                        .iter()
                        .position(|&s| s == attr.source)
                        .expect("projection references an unjoined collection");
                    let coll = &env.states[env.map[attr.source]].collection;
                    coll.entity(row[pos]).value(attr.attr).unwrap_or("").to_string()
                })
                .collect()
        })
        .collect()
}

/// Executes a plan over per-collection states; `source_map[i]` names the
/// state behind the bound query's i-th source (self-joins share one state).
pub fn run_plan(
    plan: &PlanNode,
    bound: &BoundQuery,
    states: &mut [SourceState],
    source_map: &[usize],
    cfg: &ExecConfig,
) -> (QueryOutput, QueryMetrics) {
    let mut metrics = QueryMetrics::default();
    let start = Instant::now();
    let PlanNode::Project { child } = plan else {
        panic!("plan root must project");
    };
    let mut env = Env {
        bound,
        states,
        map: source_map,
        cfg,
        metrics: &mut metrics,
    };
    let value = eval(child, &mut env);
    let rows = match value {
        Value::Grouped(g) => project_grouped(g, &mut env),
        other => project_plain(to_rows(other), &env),
    };
    let columns: Vec<String> = bound.projections.iter().map(|(_, d)| d.clone()).collect();
    metrics.output_rows = rows.len();
    metrics.total_ms = ms(start);
    (QueryOutput { columns, rows }, metrics)
}
