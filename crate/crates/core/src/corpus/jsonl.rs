use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::{tokenize, Dataset, Example, Vocab};
use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 500;

/// Field names of a JSON-lines dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JsonlFields {
    pub label: String,
    pub text: String,
}

impl Default for JsonlFields {
    fn default() -> Self {
        JsonlFields {
            label: "label".into(),
            text: "text".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    /// Lines whose text tokenized to nothing.
    pub skipped_empty: usize,
    /// Examples cut down to the length limit.
    pub truncated: usize,
}

/// Reads one example per line. Labels get dense ids in order of first
/// appearance; new tokens are added to `vocab`. Sentences longer than
/// `max_len` tokens are truncated.
pub fn load_jsonl_dataset(
    path: &Path,
    fields: &JsonlFields,
    vocab: &mut Vocab,
    max_len: usize,
) -> Result<(Dataset, LoadStats)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = LoadStats::default();
    let mut examples = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();

    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let obj: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let label = match obj.get(&fields.label) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(x)) => x.to_string(),
            Some(_) => return Err(parse_err(format!("field {:?} is not a string", fields.label))),
            None => return Err(parse_err(format!("missing field {:?}", fields.label))),
        };
        let text = obj
            .get(&fields.text)
            .ok_or_else(|| parse_err(format!("missing field {:?}", fields.text)))?
            .as_str()
            .ok_or_else(|| parse_err(format!("field {:?} is not a string", fields.text)))?;

        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            log::warn!("{}:{line_no}: empty text after tokenization, skipped", path.display());
            stats.skipped_empty += 1;
            continue;
        }
        if tokens.len() > max_len {
            tokens.truncate(max_len);
            stats.truncated += 1;
        }
        let next = class_names.len();
        let class = *class_ids.entry(label.clone()).or_insert_with(|| {
            class_names.push(label);
            next
        });
        examples.push(Example {
            token_ids: tokens.into_iter().map(|t| vocab.intern(t)).collect(),
            label: class,
        });
    }
    if stats.skipped_empty > 0 {
        log::warn!(
            "{}: skipped {} examples with empty text",
            path.display(),
            stats.skipped_empty
        );
    }
    if examples.is_empty() {
        return Err(Error::Data(format!("{}: no examples", path.display())));
    }
    Ok((Dataset::new(examples, class_names)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_lines_two_classes() {
        let f = write("{\"label\":\"a\",\"text\":\"Hello world\"}\n{\"label\":\"b\",\"text\":\"bye, world.\"}\n");
        let mut v = Vocab::new();
        let (d, stats) = load_jsonl_dataset(f.path(), &JsonlFields::default(), &mut v, 500).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.class_name(1), "b");
        assert_eq!(v.tokens(), &["hello", "world", "bye"]);
        assert_eq!(d.example(1).token_ids, vec![2, 1]);
        assert_eq!(stats.lines, 2);
    }

    #[test]
    fn empty_file_has_no_examples() {
        let f = write("");
        let err = load_jsonl_dataset(f.path(), &JsonlFields::default(), &mut Vocab::new(), 500)
            .unwrap_err();
        assert!(err.to_string().contains("no examples"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write("{\"label\":\"a\",\"text\":\"ok\"}\n{not json}\n");
        match load_jsonl_dataset(f.path(), &JsonlFields::default(), &mut Vocab::new(), 500) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write("{\"label\":\"a\"}\n");
        assert!(matches!(
            load_jsonl_dataset(f.path(), &JsonlFields::default(), &mut Vocab::new(), 500),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_text_skipped_and_counted() {
        let f = write("{\"label\":\"a\",\"text\":\"...\"}\n{\"label\":\"b\",\"text\":\"x y z\"}\n");
        let (d, stats) =
            load_jsonl_dataset(f.path(), &JsonlFields::default(), &mut Vocab::new(), 2).unwrap();
        assert_eq!(stats.skipped_empty, 1);
        assert_eq!(stats.truncated, 1);
        assert_eq!(d.len(), 1);
        assert_eq!(d.example(0).token_ids.len(), 2);
        assert_eq!(d.class_name(0), "b");
    }

    #[test]
    fn custom_fields_and_missing_file() {
        let f = write("{\"cat\":3,\"body\":\"one two\"}\n");
        let fields = JsonlFields {
            label: "cat".into(),
            text: "body".into(),
        };
        let (d, _) = load_jsonl_dataset(f.path(), &fields, &mut Vocab::new(), 500).unwrap();
        assert_eq!(d.class_name(0), "3");
        assert!(matches!(
            load_jsonl_dataset(Path::new("/no/such/file"), &fields, &mut Vocab::new(), 500),
            Err(Error::Io { .. })
        ));
    }
}
