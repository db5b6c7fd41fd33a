//! Query sessions: named collections with their long-lived indexes, a
//! planner choice, and the SQL entry points.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline;
use crate::catalog::{
    load_collection, load_sidecar, sidecar_path, CatalogError, CollectionStats, EntityCollection,
    EntityRef,
};
use crate::exec::{
    deduplicate, run_plan, ExecConfig, QueryMetrics, QueryOutput, SourceState,
};
use crate::matching::MatchConfig;
use crate::metablocking::MetaBlockingConfig;
use crate::planner::{explain, plan_advanced, plan_naive, PlanContext, PlanError, PlanNode, PlannerSource};
use crate::sqlfront::{bind, parse, BindError, BoundQuery, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerKind {
    Naive,
    Advanced,
    /// Resolve whole collections up front, then answer over the clusters.
    Batch,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub planner: PlannerKind,
    pub mb: MetaBlockingConfig,
    pub matching: MatchConfig,
    /// Keep links, resolution marks and the comparison ledger across queries.
    pub use_link_index: bool,
    /// Record executed comparison pairs into each query's metrics.
    pub capture_comparisons: bool,
    /// Share of a collection sampled by `compute_stats`.
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            planner: PlannerKind::Advanced,
            mb: MetaBlockingConfig::default(),
            matching: MatchConfig::default(),
            use_link_index: true,
            capture_comparisons: false,
            sample_fraction: 0.1,
            seed: 42,
        }
    }
}

#[derive(Debug)]
pub enum EngineError {
    Io(std::io::Error),
    Catalog(CatalogError),
    Parse(ParseError),
    Bind(BindError),
    Plan(PlanError),
    UnknownCollection(String),
    DuplicateCollection(String),
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Io(e) => write!(f, "io: {e}"),
            EngineError::Catalog(e) => write!(f, "{e}"),
            EngineError::Parse(e) => write!(f, "{e}"),
            EngineError::Bind(e) => write!(f, "{e}"),
            EngineError::Plan(e) => write!(f, "{e}"),
            EngineError::UnknownCollection(n) => write!(f, "unknown collection: {n}"),
            EngineError::DuplicateCollection(n) => {
                write!(f, "collection already registered: {n}")
            }
        }
    }
}

impl std::error::Error for EngineError {}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Io(e)
    }
}

impl From<CatalogError> for EngineError {
    fn from(e: CatalogError) -> Self {
        EngineError::Catalog(e)
    }
}

impl From<ParseError> for EngineError {
    fn from(e: ParseError) -> Self {
        EngineError::Parse(e)
    }
}

impl From<BindError> for EngineError {
    fn from(e: BindError) -> Self {
        EngineError::Bind(e)
    }
}

impl From<PlanError> for EngineError {
    fn from(e: PlanError) -> Self {
        EngineError::Plan(e)
    }
}

pub struct Session {
    pub cfg: EngineConfig,
    states: Vec<SourceState>,
    stats: Vec<Option<CollectionStats>>,
    by_name: HashMap<String, usize>,
}

impl Session {
    pub fn new(cfg: EngineConfig) -> Session {
        Session {
            cfg,
            states: Vec::new(),
            stats: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn register(&mut self, collection: EntityCollection) -> Result<usize, EngineError> {
        let key = collection.name.to_ascii_lowercase();
        if self.by_name.contains_key(&key) {
            return Err(EngineError::DuplicateCollection(collection.name.clone()));
        }
        let idx = self.states.len();
        self.states.push(SourceState::new(collection));
        self.stats.push(None);
        self.by_name.insert(key, idx);
        Ok(idx)
    }

    /// Loads one CSV, named after its file stem; a `<stem>.stats.json`
    /// sidecar next to it, if present, supplies sampled statistics.
    pub fn load_csv(&mut self, path: &Path, id_column: &str) -> Result<String, EngineError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "collection".to_string());
        let collection = load_collection(path, &name, id_column)?;
        let sidecar = load_sidecar(&sidecar_path(path))?;
        let idx = self.register(collection)?;
        if let Some(sc) = sidecar {
            self.stats[idx] = Some(sc.stats());
        }
        Ok(name)
    }

    /// Loads every `*.csv` in a directory, in name order.
    pub fn load_dir(&mut self, dir: &Path, id_column: &str) -> Result<Vec<String>, EngineError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        paths.sort();
        let mut names = Vec::new();
        for p in paths {
            names.push(self.load_csv(&p, id_column)?);
        }
        Ok(names)
    }

    pub fn names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.states.iter().map(|s| s.collection.name.as_str()).collect();
        out.sort();
        out
    }

    pub fn collection(&self, name: &str) -> Option<&EntityCollection> {
        self.by_name
            .get(&name.to_ascii_lowercase())
            .map(|&i| &self.states[i].collection)
    }

    pub fn state(&self, name: &str) -> Option<&SourceState> {
        self.by_name.get(&name.to_ascii_lowercase()).map(|&i| &self.states[i])
    }

    pub fn stats_of(&self, name: &str) -> Option<CollectionStats> {
        self.by_name
            .get(&name.to_ascii_lowercase())
            .and_then(|&i| self.stats[i])
    }

    pub fn set_stats(&mut self, name: &str, stats: CollectionStats) -> Result<(), EngineError> {
        let idx = self.index_of(name)?;
        self.stats[idx] = Some(stats);
        Ok(())
    }

    fn index_of(&self, name: &str) -> Result<usize, EngineError> {
        self.by_name
            .get(&name.to_ascii_lowercase())
            .copied()
            .ok_or_else(|| EngineError::UnknownCollection(name.to_string()))
    }

    fn exec_cfg(&self) -> ExecConfig {
        ExecConfig {
            mb: self.cfg.mb,
            matching: self.cfg.matching,
            use_link_index: self.cfg.use_link_index,
            capture_comparisons: self.cfg.capture_comparisons,
        }
    }

    fn bind_sql(&self, sql: &str) -> Result<(BoundQuery, Vec<usize>), EngineError> {
        let ast = parse(sql)?;
        let bound = bind(&ast, |name| {
            self.by_name
                .get(&name.to_ascii_lowercase())
                .map(|&i| &self.states[i].collection)
        })?;
        let map = bound
            .sources
            .iter()
            .map(|src| self.index_of(&src.collection))
            .collect::<Result<Vec<usize>, _>>()?;
        Ok((bound, map))
    }

    fn plan_for(
        &self,
        kind: PlannerKind,
        bound: &BoundQuery,
        map: &[usize],
    ) -> Result<PlanNode, EngineError> {
        match kind {
            PlannerKind::Naive => Ok(plan_naive(bound)?),
            PlannerKind::Advanced => {
                let ctx = PlanContext {
                    sources: map
                        .iter()
                        .map(|&i| {
                            let s = &self.states[i];
                            PlannerSource {
                                collection: &s.collection,
                                tbi: &s.tbi,
                                itbi: &s.itbi,
                                li: &s.li,
                                stats: self.stats[i],
                            }
                        })
                        .collect(),
                    join_stats: vec![None; bound.joins.len()],
                    mb: self.cfg.mb,
                };
                Ok(plan_advanced(bound, &ctx)?)
            }
            PlannerKind::Batch => unreachable!("batch route has no plan tree"),
        }
    }

    pub fn query(&mut self, sql: &str) -> Result<(QueryOutput, QueryMetrics), EngineError> {
        let (bound, map) = self.bind_sql(sql)?;
        match self.cfg.planner {
            PlannerKind::Batch => {
                let cfg = self.exec_cfg();
                Ok(baseline::answer(&bound, &mut self.states, &map, &cfg))
            }
            kind => {
                let plan = self.plan_for(kind, &bound, &map)?;
                let cfg = self.exec_cfg();
                Ok(run_plan(&plan, &bound, &mut self.states, &map, &cfg))
            }
        }
    }

    pub fn explain(&self, sql: &str) -> Result<String, EngineError> {
        let (bound, map) = self.bind_sql(sql)?;
        match self.cfg.planner {
            PlannerKind::Batch => {
                let colls: Vec<&EntityCollection> =
                    map.iter().map(|&i| &self.states[i].collection).collect();
                Ok(baseline::describe(&bound, &colls))
            }
            kind => {
                let plan = self.plan_for(kind, &bound, &map)?;
                let colls: Vec<&EntityCollection> =
                    map.iter().map(|&i| &self.states[i].collection).collect();
                Ok(explain(&plan, &bound, &colls))
            }
        }
    }

    /// Samples the collection, deduplicates the sample against the full
    /// table with throwaway state, and stores the resulting statistics.
    /// The session's own links and ledger stay untouched.
    pub fn compute_stats(&mut self, name: &str) -> Result<CollectionStats, EngineError> {
        let idx = self.index_of(name)?;
        let n = self.states[idx].collection.len();
        if n == 0 {
            let stats = CollectionStats::from_sizes(0, 0);
            self.stats[idx] = Some(stats);
            return Ok(stats);
        }
        let amount = ((n as f64 * self.cfg.sample_fraction).ceil() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let qe: Vec<EntityRef> = rand::seq::index::sample(&mut rng, n, amount)
            .into_iter()
            .map(|i| i as EntityRef)
            .collect();
        let mut cfg = self.exec_cfg();
        cfg.use_link_index = false;
        cfg.capture_comparisons = false;
        let mut metrics = QueryMetrics::default();
        let dr = deduplicate(&mut self.states[idx], qe, &cfg, &mut metrics);
        let stats = CollectionStats::from_sizes(amount, dr.slot.clusters.len());
        self.stats[idx] = Some(stats);
        Ok(stats)
    }
}
