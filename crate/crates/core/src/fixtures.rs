//! Shared demo tables for unit tests: a dirty publications collection with
//! three duplicate groups and a dirty venues collection with three pairs.

use crate::catalog::{Entity, EntityCollection};

fn build(name: &str, attrs: &[&str], rows: &[&[Option<&str>]]) -> EntityCollection {
    let mut c = EntityCollection::new(
        name,
        attrs.iter().map(|s| s.to_string()).collect(),
        0,
    );
    for row in rows {
        c.push(Entity {
            id: row[0].unwrap().to_string(),
            values: row.iter().map(|v| v.map(str::to_string)).collect(),
        })
        .unwrap();
    }
    c
}

/// Eight publications: {P_1,P_2}, {P_3,P_4,P_5} and {P_6,P_7,P_8} describe
/// the same papers.
pub fn papers() -> EntityCollection {
    build(
        "P",
        &["Id", "Title", "Author", "Venue", "Year"],
        &[
            &[Some("P_1"), Some("Collective Entity Resolution"), None, Some("EDBT"), Some("2008")],
            &[Some("P_2"), Some("Collective E.R"), Some("Allan Blake"), Some("International Conference on Extending Database Technology"), Some("2008")],
            &[Some("P_3"), Some("Entity Resolution on Big Data"), Some("Jane Davids, John Doe"), Some("ACM Sigmod"), Some("2017")],
            &[Some("P_4"), Some("E.R on Big Data"), Some("J. Davids, J. Doe"), Some("Sigmod"), None],
            &[Some("P_5"), Some("Entity Resolution on Big Data"), Some("J. Davids, John Doe."), Some("Proc of ACM SIGMOD"), Some("2017")],
            &[Some("P_6"), Some("E.R for consumer data"), Some("Allan Blake, Lisa Davidson"), Some("EDBT"), Some("2015")],
            &[Some("P_7"), Some("Entity-Resolution for consumer data"), Some("A. Blake, L. Davidson"), Some("International Conference on Extending Database Technology"), None],
            &[Some("P_8"), Some("Entity-Resolution for consumer data"), Some("Allan Blake , Davidson Lisa"), Some("EDBT"), Some("2015")],
        ],
    )
}

/// Six venues: {V_1,V_4}, {V_2,V_3} and {V_5,V_6} are duplicates.
pub fn venues() -> EntityCollection {
    build(
        "V",
        &["Id", "Title", "Description", "Rank", "Frequency", "Est."],
        &[
            &[Some("V_1"), Some("International Conference on Extending Database Technology"), Some("Extending Database Technology"), Some("1"), Some("annual"), Some("1984")],
            &[Some("V_2"), Some("SIGMOD"), Some("ACM SIGMOD Conference"), Some("1"), None, Some("1975")],
            &[Some("V_3"), Some("ACM SIGMOD"), None, Some("1"), Some("annual"), Some("1975")],
            &[Some("V_4"), Some("EDBT"), Some("International Conference on Extending Database Technology"), None, Some("yearly"), None],
            &[Some("V_5"), Some("CIDR"), Some("Conference on Innovative Data Systems Research"), None, Some("biennial"), Some("2002")],
            &[Some("V_6"), Some("Conference on Innovative Data Systems Research"), None, Some("2"), Some("biyearly"), Some("2002")],
        ],
    )
}
