//! Reference route: resolve every collection completely up front, then
//! answer the query over the resulting clusters. Resolution reuses the
//! engine's machinery, but query evaluation here is written against the
//! clusters directly, independent of the operator pipeline, so the two
//! routes can cross-check each other.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use crate::catalog::{EntityCollection, EntityRef};
use crate::exec::{deduplicate, ExecConfig, QueryMetrics, QueryOutput, SourceState};
use crate::sqlfront::{eval_predicate, BoundQuery};

/// Deduplicates the whole collection, folding links into its link index.
pub fn resolve_collection(state: &mut SourceState, cfg: &ExecConfig, metrics: &mut QueryMetrics) {
    let qe: Vec<EntityRef> = state.collection.refs().collect();
    deduplicate(state, qe, cfg, metrics);
}

fn fully_resolved(state: &SourceState) -> bool {
    state.collection.refs().all(|e| state.li.is_resolved(e))
}

fn clusters(state: &mut SourceState) -> Vec<Vec<EntityRef>> {
    let mut by_root: HashMap<EntityRef, Vec<EntityRef>> = HashMap::new();
    for e in state.collection.refs() {
        by_root.entry(state.li.find(e)).or_default().push(e);
    }
    let mut out: Vec<Vec<EntityRef>> = by_root.into_values().collect();
    for c in &mut out {
        c.sort_unstable();
    }
    out.sort_by_key(|c| c[0]);
    out
}

fn members_by_id(coll: &EntityCollection, members: &[EntityRef]) -> Vec<EntityRef> {
    let mut out = members.to_vec();
    out.sort_by(|&a, &b| coll.entity(a).id.cmp(&coll.entity(b).id));
    out
}

fn cluster_values<'c>(
    coll: &'c EntityCollection,
    clusters: &[Vec<EntityRef>],
    attr: usize,
) -> Vec<HashSet<&'c str>> {
    clusters
        .iter()
        .map(|c| c.iter().filter_map(|&e| coll.entity(e).value(attr)).collect())
        .collect()
}

/// One line per step, mirroring what a plan explanation looks like.
pub fn describe(bound: &BoundQuery, collections: &[&EntityCollection]) -> String {
    let attr = |a: crate::sqlfront::BoundAttr| {
        format!(
            "{}.{}",
            bound.sources[a.source].alias, collections[a.source].attribute_names[a.attr]
        )
    };
    let mut lines = Vec::new();
    for (s, src) in bound.sources.iter().enumerate() {
        if bound.dedup {
            lines.push(format!("BatchDeduplicate {}", src.alias));
        } else {
            lines.push(format!("Scan {}", src.alias));
        }
        if bound.predicates[s].is_some() {
            let last = lines.last_mut().unwrap();
            last.push_str(" (filtered)");
        }
    }
    for j in &bound.joins {
        let name = if bound.dedup { "HyperJoin" } else { "HashJoin" };
        lines.push(format!("{name} on {} = {}", attr(j.left), attr(j.right)));
    }
    let cols: Vec<String> = bound.projections.iter().map(|(_, d)| d.clone()).collect();
    lines.push(format!("Project [{}]", cols.join(", ")));
    lines.join("\n")
}

fn dedup_rows(
    bound: &BoundQuery,
    states: &mut [SourceState],
    map: &[usize],
    cfg: &ExecConfig,
    metrics: &mut QueryMetrics,
) -> Vec<Vec<String>> {
    let mut cluster_map: HashMap<usize, Vec<Vec<EntityRef>>> = HashMap::new();
    for &i in map {
        if cluster_map.contains_key(&i) {
            continue;
        }
        if !fully_resolved(&states[i]) {
            resolve_collection(&mut states[i], cfg, metrics);
        }
        cluster_map.insert(i, clusters(&mut states[i]));
    }

    let k = bound.sources.len();
    let src_clusters: Vec<&Vec<Vec<EntityRef>>> = (0..k).map(|s| &cluster_map[&map[s]]).collect();
    let candidates: Vec<Vec<bool>> = (0..k)
        .map(|s| {
            let coll = &states[map[s]].collection;
            src_clusters[s]
                .iter()
                .map(|c| match &bound.predicates[s] {
                    None => true,
                    Some(p) => c.iter().any(|&e| eval_predicate(p, coll, e)),
                })
                .collect()
        })
        .collect();

    let mut placed = vec![false; k];
    placed[0] = true;
    let mut tuples: Vec<Vec<usize>> = src_clusters[0]
        .iter()
        .enumerate()
        .filter(|&(ci, _)| candidates[0][ci])
        .map(|(ci, _)| {
            let mut t = vec![usize::MAX; k];
            t[0] = ci;
            t
        })
        .collect();

    for j in &bound.joins {
        let (old, new) = match (placed[j.left.source], placed[j.right.source]) {
            (true, false) => (j.left, j.right),
            (false, true) => (j.right, j.left),
            (true, true) => {
                let l_vals =
                    cluster_values(&states[map[j.left.source]].collection, src_clusters[j.left.source], j.left.attr);
                let r_vals =
                    cluster_values(&states[map[j.right.source]].collection, src_clusters[j.right.source], j.right.attr);
                tuples.retain(|t| !l_vals[t[j.left.source]].is_disjoint(&r_vals[t[j.right.source]]));
                continue;
            }
            (false, false) => panic!("join connects two unplaced collections"),
        };
        let old_vals = cluster_values(&states[map[old.source]].collection, src_clusters[old.source], old.attr);
        let new_vals = cluster_values(&states[map[new.source]].collection, src_clusters[new.source], new.attr);
        let mut next = Vec::new();
        for t in &tuples {
            let vals = &old_vals[t[old.source]];
            for (nci, nvals) in new_vals.iter().enumerate() {
                if candidates[new.source][nci] && !vals.is_disjoint(nvals) {
                    let mut nt = t.clone();
                    nt[new.source] = nci;
                    next.push(nt);
                }
            }
        }
        placed[new.source] = true;
        tuples = next;
    }
    assert!(placed.iter().all(|&p| p), "query left a collection unjoined");

    let ordered_members: Vec<Vec<Vec<EntityRef>>> = tuples
        .iter()
        .map(|t| {
            (0..k)
                .map(|s| members_by_id(&states[map[s]].collection, &src_clusters[s][t[s]]))
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |g: usize| -> Vec<&str> {
            (0..k)
                .map(|s| states[map[s]].collection.entity(ordered_members[g][s][0]).id.as_str())
                .collect()
        };
        key(a).cmp(&key(b))
    });

    order
        .into_iter()
        .map(|g| {
            bound
                .projections
                .iter()
                .map(|(attr, _)| {
                    let coll = &states[map[attr.source]].collection;
                    let mut parts: Vec<&str> = Vec::new();
                    for &m in &ordered_members[g][attr.source] {
                        if let Some(v) = coll.entity(m).value(attr.attr) {
                            if !parts.contains(&v) {
                                parts.push(v);
                            }
                        }
                    }
                    parts.join(" | ")
                })
                .collect()
        })
        .collect()
}

fn plain_rows(bound: &BoundQuery, states: &[SourceState], map: &[usize]) -> Vec<Vec<String>> {
    let k = bound.sources.len();
    let candidates: Vec<Vec<EntityRef>> = (0..k)
        .map(|s| {
            let coll = &states[map[s]].collection;
            coll.refs()
                .filter(|&e| match &bound.predicates[s] {
                    None => true,
                    Some(p) => eval_predicate(p, coll, e),
                })
                .collect()
        })
        .collect();

    let mut placed = vec![false; k];
    placed[0] = true;
    let mut tuples: Vec<Vec<EntityRef>> = candidates[0]
        .iter()
        .map(|&e| {
            let mut t = vec![EntityRef::MAX; k];
            t[0] = e;
            t
        })
        .collect();

    for j in &bound.joins {
        let value = |a: crate::sqlfront::BoundAttr, e: EntityRef| {
            states[map[a.source]].collection.entity(e).value(a.attr)
        };
        let (old, new) = match (placed[j.left.source], placed[j.right.source]) {
            (true, false) => (j.left, j.right),
            (false, true) => (j.right, j.left),
            (true, true) => {
                tuples.retain(|t| {
                    matches!(
                        (value(j.left, t[j.left.source]), value(j.right, t[j.right.source])),
                        (Some(a), Some(b)) if a == b
                    )
                });
                continue;
            }
            (false, false) => panic!("join connects two unplaced collections"),
        };
        let mut next = Vec::new();
        for t in &tuples {
            let Some(v) = value(old, t[old.source]) else { continue };
            for &e in &candidates[new.source] {
                if value(new, e) == Some(v) {
                    let mut nt = t.clone();
                    nt[new.source] = e;
                    next.push(nt);
                }
            }
        }
        placed[new.source] = true;
        tuples = next;
    }

    tuples.sort_by(|a, b| {
        let key = |t: &Vec<EntityRef>| -> Vec<&str> {
            (0..k)
                .map(|s| states[map[s]].collection.entity(t[s]).id.as_str())
                .collect()
        };
        key(a).cmp(&key(b))
    });
    tuples
        .into_iter()
        .map(|t| {
            bound
                .projections
                .iter()
                .map(|(attr, _)| {
                    states[map[attr.source]]
                        .collection
                        .entity(t[attr.source])
                        .value(attr.attr)
                        .unwrap_or("")
                        .to_string()
                })
                .collect()
        })
        .collect()
}

/// Answers a bound query the batch way. Collections already fully resolved
/// are not resolved again, so repeated queries reuse all earlier work.
pub fn answer(
    bound: &BoundQuery,
    states: &mut [SourceState],
    map: &[usize],
    cfg: &ExecConfig,
) -> (QueryOutput, QueryMetrics) {
    let mut cfg = cfg.clone();
    cfg.use_link_index = true;
    let mut metrics = QueryMetrics::default();
    let start = Instant::now();
    let rows = if bound.dedup {
        dedup_rows(bound, states, map, &cfg, &mut metrics)
    } else {
        plain_rows(bound, states, map)
    };
    let columns: Vec<String> = bound.projections.iter().map(|(_, d)| d.clone()).collect();
    metrics.output_rows = rows.len();
    metrics.total_ms = start.elapsed().as_secs_f64() * 1e3;
    (QueryOutput { columns, rows }, metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::run_plan;
    use crate::fixtures;
    use crate::planner::plan_naive;
    use crate::sqlfront::{bind, parse};

    fn setup() -> Vec<SourceState> {
        vec![
            SourceState::new(fixtures::papers()),
            SourceState::new(fixtures::venues()),
        ]
    }

    fn bind_fixture(states: &[SourceState], sql: &str) -> (BoundQuery, Vec<usize>) {
        let ast = parse(sql).unwrap();
        let bound = bind(&ast, |name| {
            states
                .iter()
                .find(|s| s.collection.name.eq_ignore_ascii_case(name))
                .map(|s| &s.collection)
        })
        .unwrap();
        let map = bound
            .sources
            .iter()
            .map(|src| states.iter().position(|s| s.collection.name == src.collection).unwrap())
            .collect();
        (bound, map)
    }

    const JOIN_SQL: &str = "SELECT DEDUP P.Title, P.Year, V.Rank FROM P \
         INNER JOIN V ON P.Venue = V.Title WHERE P.Venue = 'EDBT'";

    fn clean_pair() -> Vec<SourceState> {
        // duplicates are identical rows and distinct entities share no token,
        // so both routes must recover exactly the same clusters
        let build = |name: &str, attrs: &[&str], rows: &[&[&str]]| {
            let mut c = EntityCollection::new(
                name,
                attrs.iter().map(|s| s.to_string()).collect(),
                0,
            );
            for row in rows {
                c.push(crate::catalog::Entity {
                    id: row[0].to_string(),
                    values: row.iter().map(|v| Some(v.to_string())).collect(),
                })
                .unwrap();
            }
            SourceState::new(c)
        };
        vec![
            build(
                "A",
                &["Id", "Title", "Key"],
                &[
                    &["a1", "alpha beta", "k1"],
                    &["a2", "alpha beta", "k1"],
                    &["a3", "gamma delta", "k2"],
                    &["a4", "gamma delta", "k2"],
                    &["a5", "epsilon zeta", "k3"],
                    &["a6", "epsilon zeta", "k3"],
                ],
            ),
            build(
                "B",
                &["Id", "Name", "Key"],
                &[
                    &["b1", "north south", "k1"],
                    &["b2", "north south", "k1"],
                    &["b3", "east west", "k9"],
                    &["b4", "east west", "k9"],
                    &["b5", "upper lower", "k3"],
                    &["b6", "upper lower", "k3"],
                ],
            ),
        ]
    }

    fn run_both(sql: &str) -> (QueryOutput, QueryOutput) {
        let cfg = ExecConfig::default();
        let mut batch_states = clean_pair();
        let (bound, map) = bind_fixture(&batch_states, sql);
        let (batch_out, _) = answer(&bound, &mut batch_states, &map, &cfg);

        let mut live_states = clean_pair();
        let (bound2, map2) = bind_fixture(&live_states, sql);
        let plan = plan_naive(&bound2).unwrap();
        let (live_out, _) = run_plan(&plan, &bound2, &mut live_states, &map2, &cfg);
        (batch_out, live_out)
    }

    #[test]
    fn matches_on_demand_route_on_separable_data() {
        let (batch_out, live_out) =
            run_both("SELECT DEDUP A.Title, B.Name FROM A INNER JOIN B ON A.Key = B.Key");
        let expected = vec![
            vec!["alpha beta".to_string(), "north south".to_string()],
            vec!["epsilon zeta".to_string(), "upper lower".to_string()],
        ];
        assert_eq!(batch_out.rows, expected);
        assert_eq!(live_out.rows, expected);
        assert_eq!(batch_out.columns, live_out.columns);
    }

    #[test]
    fn matches_on_demand_route_under_a_filter() {
        let (batch_out, live_out) = run_both(
            "SELECT DEDUP A.Title, B.Name FROM A INNER JOIN B ON A.Key = B.Key \
             WHERE A.Title = 'alpha beta'",
        );
        let expected = vec![vec!["alpha beta".to_string(), "north south".to_string()]];
        assert_eq!(batch_out.rows, expected);
        assert_eq!(live_out.rows, expected);
    }

    #[test]
    fn plain_answer_matches_pipeline_as_multiset() {
        let cfg = ExecConfig::default();
        let mut batch_states = setup();
        let sql = "SELECT P.Id, V.Id FROM P INNER JOIN V ON P.Venue = V.Title";
        let (bound, map) = bind_fixture(&batch_states, sql);
        let (batch_out, _) = answer(&bound, &mut batch_states, &map, &cfg);

        let mut live_states = setup();
        let (bound2, map2) = bind_fixture(&live_states, sql);
        let plan = plan_naive(&bound2).unwrap();
        let (live_out, _) = run_plan(&plan, &bound2, &mut live_states, &map2, &cfg);

        let mut live_rows = live_out.rows;
        live_rows.sort();
        assert_eq!(batch_out.rows, live_rows);
        assert_eq!(batch_out.rows.len(), 5);
    }

    #[test]
    fn second_query_resolves_nothing_new() {
        let cfg = ExecConfig::default();
        let mut states = setup();
        let (bound, map) = bind_fixture(&states, JOIN_SQL);
        let (first, m1) = answer(&bound, &mut states, &map, &cfg);
        let (second, m2) = answer(&bound, &mut states, &map, &cfg);
        assert_eq!(first.rows, second.rows);
        assert!(m1.executed_comparisons > 0);
        assert_eq!(m2.executed_comparisons, 0);
        assert_eq!(m2.query_entities, 0);
    }

    #[test]
    fn hyper_rows_respect_predicate_through_any_member() {
        // V_5 has no Rank but its duplicate V_6 has '2': the cluster passes
        let cfg = ExecConfig::default();
        let mut states = setup();
        let (bound, map) = bind_fixture(&states, "SELECT DEDUP Title FROM V WHERE Rank = '2'");
        let (out, _) = answer(&bound, &mut states, &map, &cfg);
        assert_eq!(
            out.rows,
            vec![vec!["CIDR | Conference on Innovative Data Systems Research".to_string()]]
        );
    }

    #[test]
    fn describes_each_step_per_line() {
        let states = setup();
        let (bound, map) = bind_fixture(&states, JOIN_SQL);
        let colls: Vec<&EntityCollection> =
            map.iter().map(|&i| &states[i].collection).collect();
        let text = describe(&bound, &colls);
        assert_eq!(
            text,
            "BatchDeduplicate P (filtered)\nBatchDeduplicate V\nHyperJoin on P.Venue = V.Title\nProject [P.Title, P.Year, V.Rank]"
        );
    }
}
