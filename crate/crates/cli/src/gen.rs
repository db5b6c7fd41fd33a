//! Synthetic dirty-collection generator. Produces a fact table L and a
//! dimension table R joined on Category, plus per-table ground-truth pair
//! files and statistics sidecars derived from the generated clusters.
//!
//! The clean profile gives every base record its own tokens and duplicates
//! are exact copies, so distinct entities never share a block. The realistic
//! profile draws values from shared vocabularies and corrupts duplicates
//! with typos, abbreviations, token swaps and blanked attributes.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use dedupq_core::catalog::{
    save_sidecar, sidecar_path, write_collection, Entity, EntityCollection, StatsSidecar,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Clean,
    Realistic,
}

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub rows: usize,
    pub profile: Profile,
    pub seed: u64,
    /// Expected share of records that duplicate another record, in
    /// [0, 0.55]. Clusters hold at most three records, which caps the
    /// attainable share just above 0.55.
    pub dup_fraction: f64,
}

impl GenSpec {
    pub fn new(rows: usize, profile: Profile, seed: u64) -> GenSpec {
        GenSpec {
            rows,
            profile,
            seed,
            dup_fraction: 0.2,
        }
    }
}

#[derive(Debug)]
pub struct TableSummary {
    pub name: String,
    pub rows: usize,
    pub entities: usize,
    pub truth_pairs: usize,
}

struct RawTable {
    name: String,
    attrs: Vec<&'static str>,
    /// One row per record, without ids; parallel `cluster` gives the base
    /// record each row duplicates.
    rows: Vec<Vec<Option<String>>>,
    cluster: Vec<usize>,
    bases: usize,
}

/// Draws a cluster size in 1..=3. Doubles are kept three times as likely
/// as triples; solving the expected duplicate share for that ratio gives
/// p(3) = d / (5 (1 - d)), so d = 0.2 yields the 0.80 / 0.15 / 0.05 split.
fn sample_cluster_size(rng: &mut ChaCha8Rng, dup_fraction: f64) -> usize {
    let q3 = dup_fraction / (5.0 * (1.0 - dup_fraction));
    let r: f64 = rng.gen();
    if r < 1.0 - 4.0 * q3 {
        1
    } else if r < 1.0 - q3 {
        2
    } else {
        3
    }
}

fn syllables() -> Vec<String> {
    let consonants = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
    let vowels = ["a", "e", "i", "o", "u"];
    let mut out = Vec::new();
    for c in consonants {
        for v in vowels {
            out.push(format!("{c}{v}"));
        }
    }
    out
}

fn make_vocab(rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    let syl = syllables();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < count {
        let n = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..n {
            w.push_str(&syl[rng.gen_range(0..syl.len())]);
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> &'a str {
    &pool[rng.gen_range(0..pool.len())]
}

fn phrase(rng: &mut ChaCha8Rng, pool: &[String], min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        words.push(pick(rng, pool));
    }
    words.join(" ")
}

/// Applies one small edit to a value: a character typo, an abbreviated
/// word, or two swapped words.
fn corrupt_value(rng: &mut ChaCha8Rng, value: &str) -> String {
    let mut words: Vec<String> = value.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return value.to_string();
    }
    match rng.gen_range(0..3u8) {
        0 => {
            // typo inside one word
            let w = rng.gen_range(0..words.len());
            let mut chars: Vec<char> = words[w].chars().collect();
            if chars.len() >= 2 {
                let i = rng.gen_range(0..chars.len() - 1);
                match rng.gen_range(0..3u8) {
                    0 => chars.swap(i, i + 1),
                    1 => {
                        chars.remove(i);
                    }
                    _ => chars[i] = 'x',
                }
            } else {
                chars.push('x');
            }
            words[w] = chars.into_iter().collect();
        }
        1 => {
            // abbreviate one word
            let w = rng.gen_range(0..words.len());
            let first = words[w].chars().next().unwrap_or('x');
            words[w] = format!("{first}.");
        }
        _ => {
            // swap two words
            if words.len() >= 2 {
                let i = rng.gen_range(0..words.len() - 1);
                words.swap(i, i + 1);
            }
        }
    }
    words.join(" ")
}

/// Copies a base row and damages it: up to three modifications per record,
/// at most two per attribute, with a small chance of blanking an attribute
/// entirely. The id slot (index 0) is never touched.
fn corrupt_row(rng: &mut ChaCha8Rng, base: &[Option<String>]) -> Vec<Option<String>> {
    let mut row = base.to_vec();
    let attrs = row.len();
    let total = rng.gen_range(1..=3usize);
    let mut per_attr = vec![0u8; attrs];
    for _ in 0..total {
        let a = rng.gen_range(1..attrs);
        if per_attr[a] >= 2 {
            continue;
        }
        per_attr[a] += 1;
        if rng.gen_bool(0.05) {
            row[a] = None;
            per_attr[a] = 2;
            continue;
        }
        if let Some(v) = row[a].take() {
            row[a] = Some(corrupt_value(rng, &v));
        }
    }
    row
}

fn build_clean(rng: &mut ChaCha8Rng, rows: usize, dup: f64) -> (RawTable, RawTable) {
    // every base gets globally unique tokens so only true duplicates share
    // a block; R carries the categories of every second L base
    let mut l_rows = Vec::with_capacity(rows);
    let mut l_cluster = Vec::with_capacity(rows);
    let mut base = 0usize;
    while l_rows.len() < rows {
        let size = sample_cluster_size(rng, dup).min(rows - l_rows.len());
        let row = vec![
            None,
            Some(format!("name{base}a name{base}b")),
            Some(format!("cat{base}")),
            Some(format!("{}", 100_000 + base)),
        ];
        for _ in 0..size {
            l_rows.push(row.clone());
            l_cluster.push(base);
        }
        base += 1;
    }
    let l_bases = base;

    let mut r_rows = Vec::new();
    let mut r_cluster = Vec::new();
    let mut r_base = 0usize;
    for j in (0..l_bases).step_by(2) {
        let size = sample_cluster_size(rng, dup);
        let row = vec![
            None,
            Some(format!("cat{j}")),
            Some(format!("label{j}u label{j}v")),
            Some(format!("{}", 900_000 + j)),
        ];
        for _ in 0..size {
            r_rows.push(row.clone());
            r_cluster.push(r_base);
        }
        r_base += 1;
    }

    (
        RawTable {
            name: "L".to_string(),
            attrs: vec!["Id", "Name", "Category", "Year"],
            rows: l_rows,
            cluster: l_cluster,
            bases: l_bases,
        },
        RawTable {
            name: "R".to_string(),
            attrs: vec!["Id", "Category", "Label", "Grade"],
            rows: r_rows,
            cluster: r_cluster,
            bases: r_base,
        },
    )
}

fn build_realistic(rng: &mut ChaCha8Rng, rows: usize, dup: f64) -> (RawTable, RawTable) {
    // vocabularies grow with the collection so name-token blocks stay
    // discriminating instead of degenerating into a few huge blocks
    let vocab = make_vocab(rng, (rows / 8).max(220));
    let cities = make_vocab(rng, (rows / 100).max(40));
    let r_bases = (rows / 10).max(4);
    let categories: Vec<String> = make_vocab(rng, r_bases)
        .into_iter()
        .map(|w| format!("cat-{w}"))
        .collect();

    let mut l_rows = Vec::with_capacity(rows);
    let mut l_cluster = Vec::with_capacity(rows);
    let mut base = 0usize;
    while l_rows.len() < rows {
        let size = sample_cluster_size(rng, dup).min(rows - l_rows.len());
        let row = vec![
            None,
            Some(phrase(rng, &vocab, 3, 5)),
            Some(pick(rng, &cities).to_string()),
            Some(categories[rng.gen_range(0..categories.len())].clone()),
            Some(format!("{}", 1950 + rng.gen_range(0..70))),
        ];
        l_rows.push(row.clone());
        l_cluster.push(base);
        for _ in 1..size {
            l_rows.push(corrupt_row(rng, &row));
            l_cluster.push(base);
        }
        base += 1;
    }
    let l_bases = base;

    let mut r_rows = Vec::new();
    let mut r_cluster = Vec::new();
    for (j, cat) in categories.iter().enumerate() {
        let size = sample_cluster_size(rng, dup);
        let row = vec![
            None,
            Some(cat.clone()),
            Some(phrase(rng, &vocab, 2, 3)),
            Some(format!("{}", 1 + rng.gen_range(0..5))),
        ];
        r_rows.push(row.clone());
        r_cluster.push(j);
        for _ in 1..size {
            r_rows.push(corrupt_row(rng, &row));
            r_cluster.push(j);
        }
    }

    (
        RawTable {
            name: "L".to_string(),
            attrs: vec!["Id", "Name", "City", "Category", "Year"],
            rows: l_rows,
            cluster: l_cluster,
            bases: l_bases,
        },
        RawTable {
            name: "R".to_string(),
            attrs: vec!["Id", "Category", "Label", "Grade"],
            rows: r_rows,
            cluster: r_cluster,
            bases: categories.len(),
        },
    )
}

fn write_table(out: &Path, rng: &mut ChaCha8Rng, mut table: RawTable) -> Result<TableSummary> {
    let n = table.rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    // ids are assigned in the shuffled file order
    let width = n.to_string().len().max(4);
    let mut collection = EntityCollection::new(
        table.name.clone(),
        table.attrs.iter().map(|s| s.to_string()).collect(),
        0,
    );
    let mut members: Vec<Vec<String>> = vec![Vec::new(); table.bases];
    for (pos, &orig) in order.iter().enumerate() {
        let id = format!("{}_{:0width$}", table.name, pos + 1, width = width);
        table.rows[orig][0] = Some(id.clone());
        members[table.cluster[orig]].push(id.clone());
        collection
            .push(Entity {
                id,
                values: table.rows[orig].clone(),
            })
            .with_context(|| format!("building table {}", table.name))?;
    }
    let csv_path = out.join(format!("{}.csv", table.name));
    write_collection(&collection, &csv_path)
        .with_context(|| format!("writing table {}", table.name))?;

    let truth_dir = out.join("truth");
    fs::create_dir_all(&truth_dir)?;
    let mut truth = fs::File::create(truth_dir.join(format!("{}.csv", table.name)))?;
    let mut pairs = 0usize;
    for m in &mut members {
        m.sort();
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                writeln!(truth, "{},{}", m[i], m[j])?;
                pairs += 1;
            }
        }
    }

    save_sidecar(
        &sidecar_path(&csv_path),
        &StatsSidecar {
            sample_size: n,
            sample_dedup_size: table.bases,
            duplication_factor: if n == 0 {
                0.0
            } else {
                (n - table.bases) as f64 / n as f64
            },
            pairs: Vec::new(),
        },
    )?;

    Ok(TableSummary {
        name: table.name,
        rows: n,
        entities: table.bases,
        truth_pairs: pairs,
    })
}

pub fn generate(out: &Path, spec: &GenSpec) -> Result<Vec<TableSummary>> {
    if !(0.0..=0.55).contains(&spec.dup_fraction) {
        anyhow::bail!("duplicate fraction must be within [0, 0.55]");
    }
    fs::create_dir_all(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (l, r) = match spec.profile {
        Profile::Clean => build_clean(&mut rng, spec.rows, spec.dup_fraction),
        Profile::Realistic => build_realistic(&mut rng, spec.rows, spec.dup_fraction),
    };
    Ok(vec![
        write_table(out, &mut rng, l)?,
        write_table(out, &mut rng, r)?,
    ])
}
