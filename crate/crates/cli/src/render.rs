//! Plain-text table rendering for query results.

pub fn table(columns: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = columns.iter().map(|c| c.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:<width$}", c, width = widths.get(i).copied().unwrap_or(0)))
            .collect();
        format!("| {} |", padded.join(" | "))
    };
    let sep = format!(
        "+{}+",
        widths
            .iter()
            .map(|w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("+")
    );
    let mut out = vec![sep.clone(), line(columns), sep.clone()];
    for row in rows {
        out.push(line(row));
    }
    out.push(sep);
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_cells_to_column_width() {
        let cols = vec!["Id".to_string(), "Title".to_string()];
        let rows = vec![
            vec!["a".to_string(), "longer value".to_string()],
            vec!["abcd".to_string(), "x".to_string()],
        ];
        let text = table(&cols, &rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert!(lines[1].contains("| Id   | Title        |"));
    }

    #[test]
    fn renders_empty_result() {
        let cols = vec!["A".to_string()];
        let text = table(&cols, &[]);
        assert_eq!(text.lines().count(), 4);
    }
}
