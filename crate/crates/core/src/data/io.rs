//! Items: JSON lines with keys `item_id, skill_id, subskill_id, difficulty,
//! text`. Responses: CSV `student_id,item_id,correct` with `correct` in
//! `{0,1}`. Students (simulator ground truth): CSV
//! `student_id,theta_0,...,theta_{S-1}`.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Item, ResponseRecord, StudentProfile};
use crate::error::{LensError, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> LensError {
    LensError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| LensError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LensError::io(path, e))
}

pub fn ingest_items(path: impl AsRef<Path>) -> Result<Vec<Item>> {
    let path = path.as_ref();
    read_items(open(path)?, path)
}

/// Parses and validates an items stream; `origin` labels errors.
pub fn read_items(reader: impl Read, origin: &Path) -> Result<Vec<Item>> {
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| LensError::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: Item =
            serde_json::from_str(&line).map_err(|e| parse_err(origin, line_no, e.to_string()))?;
        if item.text.trim().is_empty() {
            return Err(parse_err(
                origin,
                line_no,
                format!("item {} has empty text", item.item_id),
            ));
        }
        if !ids.insert(item.item_id) {
            return Err(parse_err(
                origin,
                line_no,
                format!("duplicate item_id {}", item.item_id),
            ));
        }
        items.push(item);
    }
    let skills: BTreeSet<u32> = items.iter().map(|i| i.skill_id).collect();
    if let Some(missing) = (0..skills.len() as u32).find(|s| !skills.contains(s)) {
        return Err(LensError::Data(format!(
            "skill ids must be contiguous from 0; skill {missing} has no items"
        )));
    }
    Ok(items)
}

pub fn write_items(path: impl AsRef<Path>, items: &[Item]) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| LensError::io(path, e))?;
    }
    out.flush().map_err(|e| LensError::io(path, e))
}

pub fn ingest_responses(path: impl AsRef<Path>) -> Result<Vec<ResponseRecord>> {
    let path = path.as_ref();
    read_responses(open(path)?, path)
}

pub fn read_responses(reader: impl Read, origin: &Path) -> Result<Vec<ResponseRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(origin, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["student_id", "item_id", "correct"] {
        return Err(parse_err(
            origin,
            1,
            format!(
                "expected header student_id,item_id,correct, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(origin, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize, name: &str| -> Result<u32> {
            row.get(i)
                .ok_or_else(|| parse_err(origin, line, format!("missing {name}")))?
                .trim()
                .parse::<u32>()
                .map_err(|e| parse_err(origin, line, format!("bad {name}: {e}")))
        };
        let student_id = field(0, "student_id")?;
        let item_id = field(1, "item_id")?;
        let correct = match field(2, "correct")? {
            0 => false,
            1 => true,
            other => {
                return Err(parse_err(
                    origin,
                    line,
                    format!("correct must be 0 or 1, got {other}"),
                ))
            }
        };
        if !seen.insert((student_id, item_id)) {
            return Err(LensError::Data(format!(
                "{}: duplicate response for (student {student_id}, item {item_id}) at line {line}",
                origin.display()
            )));
        }
        out.push(ResponseRecord {
            student_id,
            item_id,
            correct,
        });
    }
    Ok(out)
}

pub fn write_responses(path: impl AsRef<Path>, records: &[ResponseRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| LensError::io(path, e);
    out.write_all(b"student_id,item_id,correct\n").map_err(io)?;
    for r in records {
        writeln!(
            out,
            "{},{},{}",
            r.student_id,
            r.item_id,
            u8::from(r.correct)
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_students(path: impl AsRef<Path>, profiles: &[StudentProfile]) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| LensError::io(path, e);
    let n_skills = profiles.first().map_or(0, |p| p.theta.len());
    let header: Vec<String> = std::iter::once("student_id".to_string())
        .chain((0..n_skills).map(|s| format!("theta_{s}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for p in profiles {
        write!(out, "{}", p.student_id).map_err(io)?;
        for t in &p.theta {
            // shortest round-trip representation
            write!(out, ",{t:?}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn ingest_students(path: impl AsRef<Path>) -> Result<Vec<StudentProfile>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let n_skills = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .len()
        .saturating_sub(1);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            parse_err(
                path,
                e.position().map_or(0, |p| p.line() as usize),
                e.to_string(),
            )
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != n_skills + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns", n_skills + 1),
            ));
        }
        let student_id = row[0]
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad student_id: {e}")))?;
        let theta = row
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| parse_err(path, line, format!("bad theta: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(StudentProfile { student_id, theta });
    }
    Ok(out)
}
