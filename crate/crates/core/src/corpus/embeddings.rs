use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::Vocab;
use crate::nn::Mat;
use crate::{Error, Result};

/// `V x d` word-vector matrix indexed by vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: Mat,
}

impl EmbeddingTable {
    pub fn new(matrix: Mat) -> Result<Self> {
        if matrix.cols() == 0 {
            return Err(Error::Data("embedding dimension must be positive".into()));
        }
        matrix.ensure_finite("embedding table")?;
        Ok(EmbeddingTable { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Number of rows (vocabulary size).
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn row(&self, id: u32) -> Option<&[f64]> {
        let id = id as usize;
        (id < self.matrix.rows()).then(|| self.matrix.row(id))
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmbeddingStats {
    /// Vocabulary tokens with no vector in the file (given zero rows).
    pub oov: usize,
    /// `(V, d)` from the header line, if the file had one.
    pub header: Option<(usize, usize)>,
    pub lines_read: usize,
}

/// Reads a text embedding file (optional `V d` header, then
/// `token v1 ... vd` per line) into a table aligned with `vocab`.
/// Vocabulary tokens missing from the file get zero vectors.
pub fn load_embeddings(path: &Path, vocab: &Vocab) -> Result<(EmbeddingTable, EmbeddingStats)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = EmbeddingStats::default();
    let mut dim: Option<usize> = None;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    let mut seen: HashSet<String> = HashSet::new();

    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();

        if line_no == 1 && rest.len() == 1 {
            if let (Ok(v), Ok(d)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                if d == 0 {
                    return Err(parse_err("header declares dimension 0".into()));
                }
                stats.header = Some((v, d));
                dim = Some(d);
                continue;
            }
        }

        stats.lines_read += 1;
        match dim {
            Some(d) if d != rest.len() => {
                return Err(parse_err(format!(
                    "token {token:?} has {} values, expected {d}",
                    rest.len()
                )))
            }
            None if rest.is_empty() => return Err(parse_err(format!("token {token:?} has no values"))),
            None => dim = Some(rest.len()),
            _ => {}
        }
        if !seen.insert(token.to_string()) {
            log::warn!("{}:{line_no}: duplicate token {token:?}, keeping the first", path.display());
            continue;
        }
        let Some(id) = vocab.lookup(token) else { continue };
        let values = rest
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| parse_err(format!("non-numeric value for token {token:?}")))?;
        rows[id as usize] = Some(values);
    }

    let d = dim.ok_or_else(|| Error::Data(format!("{}: no embedding vectors", path.display())))?;
    let mut matrix = Mat::zeros(vocab.len(), d);
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(v) => matrix.row_mut(i).copy_from_slice(&v),
            None => stats.oov += 1,
        }
    }
    if stats.oov > 0 {
        log::info!("{}: {} of {} tokens out of vocabulary", path.display(), stats.oov, vocab.len());
    }
    Ok((EmbeddingTable::new(matrix)?, stats))
}

/// Writes `table` in the text format read by [`load_embeddings`], with header.
pub fn write_embeddings(path: &Path, vocab: &Vocab, table: &EmbeddingTable) -> Result<()> {
    if vocab.len() != table.len() {
        return Err(Error::Shape(format!(
            "{} tokens for {} embedding rows",
            vocab.len(),
            table.len()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{} {}", table.len(), table.dim()).map_err(io)?;
    for (i, tok) in vocab.tokens().iter().enumerate() {
        write!(out, "{tok}").map_err(io)?;
        for v in table.matrix().row(i) {
            write!(out, " {v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn full_coverage() {
        let f = write("a 1 2 3 4\nb 0.5 0.5 0.5 0.5\nc -1 0 1e-3 2\n");
        let v = Vocab::from_tokens(["c", "a", "b"]);
        let (t, s) = load_embeddings(f.path(), &v).unwrap();
        assert_eq!((t.len(), t.dim(), s.oov), (3, 4, 0));
        assert_eq!(t.row(0).unwrap(), &[-1.0, 0.0, 1e-3, 2.0]);
        assert_eq!(t.row(1).unwrap(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn oov_rows_are_zero() {
        let f = write("a 1 2\n");
        let v = Vocab::from_tokens(["a", "zzz"]);
        let (t, s) = load_embeddings(f.path(), &v).unwrap();
        assert_eq!(s.oov, 1);
        assert_eq!(t.row(1).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn header_sets_dimension() {
        let row = |tok: &str, base: f64| {
            let vals: Vec<String> = (0..300).map(|i| format!("{}", base + i as f64 * 1e-3)).collect();
            format!("{tok} {}\n", vals.join(" "))
        };
        let f = write(&format!("2 300\n{}{}", row("x", 0.0), row("y", 1.0)));
        let v = Vocab::from_tokens(["x", "y"]);
        let (t, s) = load_embeddings(f.path(), &v).unwrap();
        assert_eq!(t.dim(), 300);
        assert_eq!(s.header, Some((2, 300)));
        assert_eq!(t.row(1).unwrap()[299], 1.0 + 299.0 * 1e-3);
    }

    #[test]
    fn malformed_files() {
        let v = Vocab::from_tokens(["a", "b"]);
        let f = write("a 1 2\nb 1 2 3\n");
        assert!(matches!(load_embeddings(f.path(), &v), Err(Error::Parse { line: 2, .. })));
        let f = write("2 2\na 1 2 3\n");
        assert!(matches!(load_embeddings(f.path(), &v), Err(Error::Parse { line: 2, .. })));
        let f = write("a 1 x\n");
        let err = load_embeddings(f.path(), &v).unwrap_err();
        assert!(err.to_string().contains("\"a\""), "{err}");
        let f = write("");
        assert!(load_embeddings(f.path(), &v).is_err());
    }

    #[test]
    fn write_then_read() {
        let v = Vocab::from_tokens(["p", "q"]);
        let t = EmbeddingTable::new(
            Mat::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-300, 7.0]]).unwrap(),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embeddings(f.path(), &v, &t).unwrap();
        let (back, s) = load_embeddings(f.path(), &v).unwrap();
        assert_eq!(back, t);
        assert_eq!(s.header, Some((2, 2)));
    }

    proptest! {
        #[test]
        fn line_order_does_not_matter(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut rng = crate::seeded_rng(seed, 0);
            let mut lines: Vec<String> = (0..8)
                .map(|i| format!("t{i} {} {} {}", i as f64 * 0.5, -(i as f64), seed as f64 / 7.0))
                .collect();
            let v = Vocab::from_tokens((0..10).map(|i| format!("t{i}")));
            let f1 = write(&lines.join("\n"));
            lines.shuffle(&mut rng);
            let f2 = write(&lines.join("\n"));
            let (a, _) = load_embeddings(f1.path(), &v).unwrap();
            let (b, _) = load_embeddings(f2.path(), &v).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
