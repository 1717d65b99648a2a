use std::path::{Path, PathBuf};

use commentq_core::corpus::{Label, Source};
use commentq_core::extractor::{extract_corpus, extract_file, extract_pairs, CommentKind, ExtractionConfig};
use serde::Deserialize;

#[derive(Debug, Deserialize, PartialEq)]
struct Golden {
    file: String,
    line: usize,
    kind: CommentKind,
    comment: String,
    code: String,
}

fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/c_tree")
}

fn golden() -> Vec<Golden> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/c_tree_golden.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn c_files(root: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .map(|e| e.unwrap().into_path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("c" | "h")))
        .collect();
    files.sort();
    files
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap()
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[test]
fn fixture_tree_meets_coverage_floor() {
    let root = fixture_root();
    assert!(c_files(&root).len() >= 10);
    assert!(golden().len() >= 25);
}

#[test]
fn fixture_tree_matches_golden() {
    let root = fixture_root();
    let config = ExtractionConfig::default();
    let mut actual = Vec::new();
    let mut warnings = Vec::new();
    for path in c_files(&root) {
        let result = extract_file(&path, &config).unwrap();
        warnings.extend(result.warnings);
        for pair in result.pairs {
            actual.push(Golden {
                file: relative(&root, &pair.file),
                line: pair.line,
                kind: pair.kind,
                comment: pair.comment,
                code: pair.code,
            });
        }
    }
    let expected = golden();
    for (a, e) in actual.iter().zip(&expected) {
        assert_eq!(a, e);
    }
    assert_eq!(actual.len(), expected.len());

    assert_eq!(warnings.len(), 1);
    assert_eq!(relative(&root, &warnings[0].file), "lib/util/unterminated.c");
    assert_eq!(warnings[0].line, 2);
}

#[test]
fn comments_are_verbatim_at_recorded_line() {
    let root = fixture_root();
    for path in c_files(&root) {
        let source = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = source.split('\n').collect();
        for pair in extract_file(&path, &ExtractionConfig::default()).unwrap().pairs {
            assert!(source.contains(&pair.comment));
            let first = pair.comment.split('\n').next().unwrap();
            assert!(lines[pair.line - 1].contains(first), "{}:{}", path.display(), pair.line);
        }
    }
}

#[test]
fn corpus_wraps_golden_in_order() {
    let (corpus, warnings) = extract_corpus(&fixture_root(), &ExtractionConfig::default()).unwrap();
    assert_eq!(warnings.len(), 1);
    let expected = golden();
    assert_eq!(corpus.len(), expected.len());
    for (pair, e) in corpus.pairs().iter().zip(&expected) {
        assert_eq!(pair.comment, e.comment);
        assert_eq!(pair.code, e.code);
        assert_eq!(pair.label, Label::Unlabeled);
        assert_eq!(pair.source, Source::Extracted);
        assert_eq!(pair.id, pair.content_hash());
    }
    let (again, _) = extract_corpus(&fixture_root(), &ExtractionConfig::default()).unwrap();
    assert_eq!(corpus, again);
}

#[test]
fn two_files_four_comments() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.c"), "/* one */\nint a;\n// two\nint b;\n").unwrap();
    std::fs::write(dir.path().join("b.h"), "/* three */\nint c;\n/* four */\nint d;\n").unwrap();
    std::fs::write(dir.path().join("c.txt"), "/* ignored */\n").unwrap();
    let (corpus, _) = extract_corpus(dir.path(), &ExtractionConfig::default()).unwrap();
    let comments: Vec<&str> = corpus.pairs().iter().map(|p| p.comment.as_str()).collect();
    assert_eq!(comments, ["/* one */", "// two", "/* three */", "/* four */"]);
}

#[test]
fn empty_directory_gives_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, warnings) = extract_corpus(dir.path(), &ExtractionConfig::default()).unwrap();
    assert!(corpus.is_empty());
    assert!(warnings.is_empty());
}

#[test]
fn missing_root_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(extract_corpus(&dir.path().join("absent"), &ExtractionConfig::default()).is_err());
}

#[test]
fn three_block_comments_three_statements() {
    let src = "/* a */\nx = 1;\n/* b */\ny = 2;\n/* c */\nz = 3;\n";
    let pairs = extract_pairs(src, &ExtractionConfig::default()).pairs;
    let codes: Vec<&str> = pairs.iter().map(|p| p.code.as_str()).collect();
    assert_eq!(codes, ["x = 1;", "y = 2;", "z = 3;"]);
}

#[test]
fn invalid_utf8_is_replaced_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.c");
    std::fs::write(&path, b"/* caf\xe9 */\nint x;\n").unwrap();
    let pairs = extract_file(&path, &ExtractionConfig::default()).unwrap().pairs;
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].comment, "/* caf\u{fffd} */");
}
