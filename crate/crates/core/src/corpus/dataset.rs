use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::{encode, Dataset, LabeledExample, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Tsv,
    Jsonl,
}

impl DataFormat {
    /// Guesses the format from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DataFormat::Jsonl,
            _ => DataFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Single,
    Paired,
}

impl Schema {
    fn text_fields(self) -> &'static [&'static str] {
        match self {
            Schema::Single => &["text"],
            Schema::Paired => &["text1", "text2"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

macro_rules! string_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

string_enum!(DataFormat { Tsv => "tsv", Jsonl => "jsonl" });
string_enum!(Schema { Single => "single", Paired => "paired" });
string_enum!(Split { Train => "train", Valid => "valid", Test => "test" });

/// An unencoded row: one or two texts and a label string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub texts: Vec<String>,
    pub label: String,
}

impl RawRow {
    pub fn to_tsv(&self) -> String {
        let mut fields: Vec<&str> = self.texts.iter().map(String::as_str).collect();
        fields.push(&self.label);
        fields.join("\t")
    }

    pub fn to_jsonl(&self) -> String {
        let mut obj = serde_json::Map::new();
        if self.texts.len() == 1 {
            obj.insert("text".into(), Value::String(self.texts[0].clone()));
        } else {
            obj.insert("text1".into(), Value::String(self.texts[0].clone()));
            obj.insert("text2".into(), Value::String(self.texts[1].clone()));
        }
        obj.insert("label".into(), Value::String(self.label.clone()));
        Value::Object(obj).to_string()
    }
}

/// Label strings to contiguous class indices, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelMap {
    pub fn from_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let mut map = Self::default();
        for l in labels {
            map.get_or_insert(&l.into());
        }
        map
    }

    pub fn get_or_insert(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sidecar format: `label<TAB>index` per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(f, "{l}\t{i}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut map = Self::default();
        for (row, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let (label, idx) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::row(path, row + 1, "expected label<TAB>index"))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::row(path, row + 1, format!("bad index {idx:?}")))?;
            if idx != map.len() || map.get(label).is_some() {
                return Err(Error::row(path, row + 1, "label indices must be contiguous and unique"));
            }
            map.get_or_insert(label);
        }
        Ok(map)
    }
}

/// Reads rows without encoding them.
pub fn read_rows(path: &Path, format: DataFormat, schema: Schema) -> Result<Vec<RawRow>> {
    let text = fs::read_to_string(path)?;
    let fields = schema.text_fields();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            DataFormat::Tsv => {
                let parts: Vec<&str> = line.split('\t').collect();
                if parts.len() != fields.len() + 1 {
                    return Err(Error::row(
                        path,
                        row,
                        format!("expected {} tab-separated fields, found {}", fields.len() + 1, parts.len()),
                    ));
                }
                RawRow {
                    texts: parts[..fields.len()].iter().map(|s| s.to_string()).collect(),
                    label: parts[fields.len()].trim().to_string(),
                }
            }
            DataFormat::Jsonl => {
                let value: Value = serde_json::from_str(line)
                    .map_err(|e| Error::row(path, row, format!("invalid JSON: {e}")))?;
                let get = |key: &str| -> Result<String> {
                    match value.get(key) {
                        Some(Value::String(s)) => Ok(s.clone()),
                        Some(Value::Number(n)) => Ok(n.to_string()),
                        Some(Value::Bool(b)) => Ok(b.to_string()),
                        _ => Err(Error::row(path, row, format!("missing field {key:?}"))),
                    }
                };
                RawRow {
                    texts: fields.iter().map(|f| get(f)).collect::<Result<_>>()?,
                    label: get("label")?,
                }
            }
        };
        rows.push(parsed);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: DataFormat,
    pub schema: Schema,
    pub split: Split,
    pub max_len: usize,
}

/// Loads and encodes a dataset file.
///
/// Without a label map, a train split builds one in first-seen order; any
/// other split needs the map from training. With a map, labels it does not
/// know are an error naming the row.
pub fn load_dataset(
    path: &Path,
    opts: &LoadOptions,
    vocab: &Vocabulary,
    label_map: Option<&LabelMap>,
) -> Result<(Dataset, LabelMap)> {
    let rows = read_rows(path, opts.format, opts.schema)?;
    let mut map = match label_map {
        Some(m) => m.clone(),
        None if opts.split == Split::Train => LabelMap::default(),
        None => {
            return Err(Error::row(
                path,
                0,
                format!("{} split needs the label map written at training time", opts.split),
            ))
        }
    };
    let frozen = label_map.is_some();
    let mut examples = Vec::with_capacity(rows.len());
    for (i, raw) in rows.iter().enumerate() {
        let label = if frozen {
            map.get(&raw.label)
                .ok_or_else(|| Error::row(path, i + 1, format!("unknown label {:?}", raw.label)))?
        } else {
            map.get_or_insert(&raw.label)
        };
        let sentences = raw
            .texts
            .iter()
            .map(|t| encode(vocab, t, opts.max_len))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::row(path, i + 1, e.to_string()))?;
        examples.push(LabeledExample { sentences, label });
    }
    let dataset = Dataset::new(examples, map.len(), opts.split)?;
    Ok((dataset, map))
}
