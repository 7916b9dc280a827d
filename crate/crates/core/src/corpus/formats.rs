use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{
    tokenize, validate_dataset, CorpusError, Dataset, EntityMention, Result, Span, Task,
    TaskInstance,
};

/// Supported on-disk dataset formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One canonical JSON record per line.
    CanonicalJsonl,
    /// `token<TAB>tag` lines, BIO tags, blank line between sentences.
    ConllBio,
    /// `sentence<TAB>e1<TAB>e2<TAB>label[<TAB>e1_type<TAB>e2_type]`.
    ReTsv,
    /// JSON array of `{id?, question, passage, answer}` objects.
    QaJson,
    /// CSV with a header naming `text` and `labels` (and optionally `id`);
    /// multiple labels are `;`-separated.
    TcCsv,
}

impl DatasetFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetFormat::CanonicalJsonl => "canonical-jsonl",
            DatasetFormat::ConllBio => "conll-bio",
            DatasetFormat::ReTsv => "re-tsv",
            DatasetFormat::QaJson => "qa-json",
            DatasetFormat::TcCsv => "tc-csv",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "canonical-jsonl" | "jsonl" => DatasetFormat::CanonicalJsonl,
            "conll-bio" => DatasetFormat::ConllBio,
            "re-tsv" => DatasetFormat::ReTsv,
            "qa-json" => DatasetFormat::QaJson,
            "tc-csv" => DatasetFormat::TcCsv,
            other => return Err(CorpusError::UnknownFormat(other.to_string())),
        })
    }
}

impl serde::Serialize for DatasetFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DatasetFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Loads a dataset file. Every record is validated; the first invalid one
/// aborts the load.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(&text, format)
}

/// Parses dataset text that is already in memory.
pub fn read_dataset(text: &str, format: DatasetFormat) -> Result<Dataset> {
    let ds = match format {
        DatasetFormat::CanonicalJsonl => read_jsonl(text)?,
        DatasetFormat::ConllBio => read_conll(text)?,
        DatasetFormat::ReTsv => read_re_tsv(text)?,
        DatasetFormat::QaJson => read_qa_json(text)?,
        DatasetFormat::TcCsv => read_tc_csv(text)?,
    };
    if let Some((pos, report)) = validate_dataset(&ds).into_iter().next() {
        return Err(CorpusError::Invalid {
            id: ds[pos].id.clone(),
            report,
        });
    }
    Ok(ds)
}

/// Writes the canonical format. Output is a pure function of `ds`.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = io::BufWriter::new(file);
    write_dataset_to(ds, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_dataset_to(ds: &Dataset, w: &mut impl Write) -> io::Result<()> {
    for inst in ds {
        serde_json::to_writer(&mut *w, inst)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl(text: &str) -> Result<Dataset> {
    let mut ds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: TaskInstance = serde_json::from_str(line).map_err(|e| CorpusError::Record {
            line: i + 1,
            field: json_field(&e),
            message: e.to_string(),
        })?;
        ds.push(inst);
    }
    Ok(ds)
}

// serde_json reports "missing field `x`" / "unknown variant" in its message;
// pull the field name out when present.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "record".to_string())
}

fn read_conll(text: &str) -> Result<Dataset> {
    let mut ds = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<(usize, String)> = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<(usize, String)>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let id = format!("ner-{}", ds.len());
        let mut inst = TaskInstance::new(id, Task::Ner, std::mem::take(tokens));
        inst.entities = bio_to_entities(&inst.token_texts(), tags)?;
        tags.clear();
        ds.push(inst);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags)?;
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let mut cols = line.split(['\t', ' ']).filter(|c| !c.is_empty());
        let (Some(tok), Some(tag)) = (cols.next(), cols.next_back()) else {
            return Err(CorpusError::Record {
                line: i + 1,
                field: "tag".into(),
                message: "expected `token<TAB>tag`".into(),
            });
        };
        tokens.push(tok.to_string());
        tags.push((i + 1, tag.to_string()));
    }
    flush(&mut tokens, &mut tags)?;
    Ok(ds)
}

fn bio_to_entities(tokens: &[String], tags: &[(usize, String)]) -> Result<Vec<EntityMention>> {
    let mut out = Vec::new();
    let mut open: Option<(usize, String)> = None;
    let close = |open: &mut Option<(usize, String)>, end: usize, out: &mut Vec<EntityMention>| {
        if let Some((start, ty)) = open.take() {
            out.push(EntityMention::from_tokens(
                tokens,
                Span::new(start, end),
                ty,
            ));
        }
    };
    for (idx, (line, tag)) in tags.iter().enumerate() {
        if tag == "O" {
            close(&mut open, idx.wrapping_sub(1), &mut out);
            continue;
        }
        let (prefix, ty) = tag.split_once('-').ok_or_else(|| CorpusError::Record {
            line: *line,
            field: "tag".into(),
            message: format!("malformed BIO tag `{tag}`"),
        })?;
        match prefix {
            "B" => {
                close(&mut open, idx.wrapping_sub(1), &mut out);
                open = Some((idx, ty.to_string()));
            }
            "I" => match &open {
                Some((_, cur)) if cur == ty => {}
                // a stray I- starts a new entity
                _ => {
                    close(&mut open, idx.wrapping_sub(1), &mut out);
                    open = Some((idx, ty.to_string()));
                }
            },
            _ => {
                return Err(CorpusError::Record {
                    line: *line,
                    field: "tag".into(),
                    message: format!("malformed BIO tag `{tag}`"),
                })
            }
        }
    }
    close(&mut open, tags.len().wrapping_sub(1), &mut out);
    Ok(out)
}

fn find_surface(tokens: &[String], surface: &[String], avoid: Option<Span>) -> Option<Span> {
    if surface.is_empty() || surface.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - surface.len())
        .map(|s| Span::new(s, s + surface.len() - 1))
        .filter(|sp| avoid.is_none_or(|a| !a.overlaps(sp)))
        .find(|sp| tokens[sp.start..=sp.end] == *surface)
}

fn read_re_tsv(text: &str) -> Result<Dataset> {
    const COLUMNS: [&str; 6] = ["sentence", "e1", "e2", "label", "e1_type", "e2_type"];
    let mut ds = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 && cols.len() != 6 {
            return Err(CorpusError::Record {
                line: row,
                field: "row".into(),
                message: format!("expected 4 or 6 columns, found {}", cols.len()),
            });
        }
        for (c, value) in cols.iter().enumerate() {
            if value.trim().is_empty() {
                return Err(CorpusError::Record {
                    line: row,
                    field: COLUMNS[c].into(),
                    message: format!("column {} is empty", c + 1),
                });
            }
        }
        let tokens: Vec<String> = tokenize(cols[0]).into_iter().map(|t| t.text).collect();
        let locate = |c: usize, avoid: Option<Span>| {
            let surface: Vec<String> = tokenize(cols[c]).into_iter().map(|t| t.text).collect();
            find_surface(&tokens, &surface, avoid).ok_or_else(|| CorpusError::Record {
                line: row,
                field: COLUMNS[c].into(),
                message: format!("`{}` not found in sentence", cols[c]),
            })
        };
        let s1 = locate(1, None)?;
        let s2 = locate(2, Some(s1))?;
        let (t1, t2) = if cols.len() == 6 {
            (cols[4].trim(), cols[5].trim())
        } else {
            ("E1", "E2")
        };
        let inst = TaskInstance::new(format!("re-{}", ds.len()), Task::Re, tokens)
            .with_entity(s1, t1)
            .with_entity(s2, t2)
            .with_relation(0, 1, cols[3].trim());
        ds.push(inst);
    }
    Ok(ds)
}

#[derive(Deserialize)]
struct QaRecord {
    id: Option<String>,
    question: String,
    #[serde(alias = "context")]
    passage: String,
    answer: String,
}

fn read_qa_json(text: &str) -> Result<Dataset> {
    let records: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| CorpusError::Record {
            line: e.line(),
            field: "records".into(),
            message: e.to_string(),
        })?;
    let mut ds = Vec::new();
    for (i, value) in records.into_iter().enumerate() {
        let rec: QaRecord = serde_json::from_value(value).map_err(|e| CorpusError::Record {
            line: i + 1,
            field: json_field(&e),
            message: format!("record {}: {e}", i + 1),
        })?;
        let mut inst = TaskInstance::from_text(
            rec.id.unwrap_or_else(|| format!("qa-{i}")),
            Task::Qa,
            &rec.passage,
        );
        inst.question = Some(rec.question);
        inst.answer = Some(rec.answer);
        ds.push(inst);
    }
    Ok(ds)
}

fn read_tc_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Record {
            line: 1,
            field: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col = col("text").ok_or_else(|| CorpusError::Record {
        line: 1,
        field: "text".into(),
        message: "header has no `text` column".into(),
    })?;
    let labels_col = col("labels")
        .or_else(|| col("label"))
        .ok_or_else(|| CorpusError::Record {
            line: 1,
            field: "labels".into(),
            message: "header has no `labels` column".into(),
        })?;
    let id_col = col("id");

    let mut ds = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CorpusError::Record {
            line,
            field: "row".into(),
            message: e.to_string(),
        })?;
        let body = rec.get(text_col).unwrap_or_default();
        if body.trim().is_empty() {
            return Err(CorpusError::Record {
                line,
                field: "text".into(),
                message: "empty text".into(),
            });
        }
        let topics: Vec<String> = rec
            .get(labels_col)
            .unwrap_or_default()
            .split(';')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if topics.is_empty() {
            return Err(CorpusError::Record {
                line,
                field: "labels".into(),
                message: "no labels".into(),
            });
        }
        let id = id_col
            .and_then(|c| rec.get(c))
            .filter(|s| !s.is_empty())
            .map(String::from)
            .unwrap_or_else(|| format!("tc-{i}"));
        let mut inst = TaskInstance::from_text(id, Task::Tc, body);
        inst.topics = topics;
        ds.push(inst);
    }
    Ok(ds)
}
