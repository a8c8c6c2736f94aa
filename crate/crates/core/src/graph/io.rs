use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{GraphRecord, LabeledGraph};
use crate::error::{Error, Result};

/// Parses a JSON Lines corpus. Blank lines are skipped; any other invalid line
/// fails with its 1-based line number.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<LabeledGraph>> {
    let mut graphs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Corpus {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GraphRecord = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            line: line_no,
            message: e.to_string(),
        })?;
        let g = LabeledGraph::from_record(&record).map_err(|e| Error::Corpus {
            line: line_no,
            message: e.to_string(),
        })?;
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledGraph>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file))
}

pub fn write_corpus_to<W: Write>(mut writer: W, graphs: &[LabeledGraph]) -> Result<()> {
    for g in graphs {
        let line = serde_json::to_string(&g.to_record())?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_corpus(path: impl AsRef<Path>, graphs: &[LabeledGraph]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus_to(&mut w, graphs)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(parse_corpus("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn self_loop_names_line() {
        let text = "{\"a\":1,\"b\":1,\"nodes\":[0,0],\"edges\":[[0,1,0]]}\n{\"a\":1,\"b\":1,\"nodes\":[0,0],\"edges\":[[1,1,0]]}\n";
        match parse_corpus(text.as_bytes()) {
            Err(Error::Corpus { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        match parse_corpus("{\"a\":1".as_bytes()) {
            Err(Error::Corpus { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn line_format_is_compact() {
        let g = LabeledGraph::from_parts(2, 1, vec![1, 0], &[(0, 1, 0)]).unwrap();
        let mut buf = Vec::new();
        write_corpus_to(&mut buf, &[g]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"a\":2,\"b\":1,\"nodes\":[1,0],\"edges\":[[0,1,0]]}\n"
        );
    }
}
