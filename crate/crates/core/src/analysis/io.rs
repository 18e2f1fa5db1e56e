//! Tab-separated embedding and projection files. Lines starting with `#`
//! are header comments.

use std::io::{self, Write};

use chrono::NaiveDate;

use super::{AnalysisError, LabeledEmbedding};
use crate::ingest::{user_sort_key, Gender};

pub fn write_embeddings<W: Write>(mut w: W, header: &[String], embeddings: &[LabeledEmbedding]) -> io::Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    let dim = embeddings.first().map_or(0, |e| e.z.len());
    write!(w, "user_id\tdate\tsex")?;
    for i in 0..dim {
        write!(w, "\tz_{i}")?;
    }
    writeln!(w)?;
    for e in embeddings {
        write!(w, "{}\t{}\t{}", e.user_id, e.date.format("%Y-%m-%d"), e.sex)?;
        for v in &e.z {
            write!(w, "\t{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
}

fn parse_err(line: usize, reason: impl Into<String>) -> AnalysisError {
    AnalysisError::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_common(line: usize, cols: &[&str]) -> Result<(String, NaiveDate, Gender), AnalysisError> {
    let date = NaiveDate::parse_from_str(cols[1], "%Y-%m-%d").map_err(|e| parse_err(line, format!("date: {e}")))?;
    let sex: Gender = cols[2].parse().map_err(|e: String| parse_err(line, e))?;
    Ok((cols[0].to_string(), date, sex))
}

/// Parses an embedding file. `user_index` follows the sorted user ids; `group` is left empty.
pub fn read_embeddings(text: &str) -> Result<Vec<LabeledEmbedding>, AnalysisError> {
    let mut lines = data_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(0, "missing header row"))?;
    let hcols: Vec<&str> = header.split('\t').collect();
    if hcols.len() < 3 || hcols[..3] != ["user_id", "date", "sex"] {
        return Err(parse_err(hline, "header must start with user_id, date, sex"));
    }
    let dim = hcols.len() - 3;
    let mut out = Vec::new();
    for (ln, l) in lines {
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != dim + 3 {
            return Err(parse_err(ln, format!("expected {} columns, got {}", dim + 3, cols.len())));
        }
        let (user_id, date, sex) = parse_common(ln, &cols)?;
        let z = cols[3..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| parse_err(ln, format!("value '{c}': {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(LabeledEmbedding {
            z,
            sex,
            user_index: 0,
            user_id,
            date,
            group: None,
        });
    }
    let mut users: Vec<&str> = out.iter().map(|e| e.user_id.as_str()).collect();
    users.sort_by_key(|u| user_sort_key(u));
    users.dedup();
    let index: Vec<usize> = out
        .iter()
        .map(|e| users.iter().position(|u| *u == e.user_id).expect("collected above"))
        .collect();
    for (e, i) in out.iter_mut().zip(index) {
        e.user_index = i;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub user_id: String,
    pub date: NaiveDate,
    pub sex: Gender,
    pub x: f64,
    pub y: f64,
}

pub fn write_projection<W: Write>(mut w: W, header: &[String], points: &[ProjectedPoint]) -> io::Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "user_id\tdate\tsex\tx\ty")?;
    for p in points {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", p.user_id, p.date.format("%Y-%m-%d"), p.sex, p.x, p.y)?;
    }
    Ok(())
}

pub fn read_projection(text: &str) -> Result<Vec<ProjectedPoint>, AnalysisError> {
    let mut lines = data_lines(text);
    match lines.next() {
        Some((_, "user_id\tdate\tsex\tx\ty")) => {}
        Some((ln, _)) => return Err(parse_err(ln, "unexpected projection header")),
        None => return Err(parse_err(0, "missing header row")),
    }
    lines
        .map(|(ln, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 5 {
                return Err(parse_err(ln, "expected 5 columns"));
            }
            let (user_id, date, sex) = parse_common(ln, &cols)?;
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(ln, e.to_string()));
            Ok(ProjectedPoint {
                user_id,
                date,
                sex,
                x: num(cols[3])?,
                y: num(cols[4])?,
            })
        })
        .collect()
}
