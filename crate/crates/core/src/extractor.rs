//! Comment-aware C lexer that mines (comment, following code) pairs.
//!
//! Only enough of C is understood to know where comments are: string and
//! character literals (with escapes), block comments (non-nesting), line
//! comments (with backslash continuation). Preprocessor directives are plain
//! code, so `#if 0` regions are not treated as comments.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::corpus::{CodeCommentPair, Corpus, Label, Source};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// Non-blank, non-comment lines of following code to capture.
    pub context_lines: usize,
    /// Capture the whole brace-balanced body when the comment sits right
    /// above a function definition.
    pub attach_function: bool,
    pub max_code_chars: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            context_lines: 5,
            attach_function: true,
            max_code_chars: 2000,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_lines == 0 {
            return Err(Error::Config("context_lines must be at least 1".into()));
        }
        if self.max_code_chars == 0 {
            return Err(Error::Config("max_code_chars must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommentKind {
    Block,
    Line,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExtraction {
    /// Verbatim source text, markers included.
    pub comment: String,
    pub code: String,
    pub file: PathBuf,
    /// 1-based line of the comment's first character.
    pub line: usize,
    pub kind: CommentKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractWarning {
    pub file: PathBuf,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileExtraction {
    pub pairs: Vec<RawExtraction>,
    pub warnings: Vec<ExtractWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Code,
    Literal,
    Comment,
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
    kind: CommentKind,
}

struct Lexed {
    class: Vec<Class>,
    comments: Vec<Span>,
    unterminated: Option<usize>,
}

fn lex(src: &str) -> Lexed {
    let bytes = src.as_bytes();
    let n = bytes.len();
    let mut class = vec![Class::Code; n];
    let mut comments = Vec::new();
    let mut unterminated = None;
    let mut i = 0;
    while i < n {
        match bytes[i] {
            b'"' | b'\'' => {
                let quote = bytes[i];
                let start = i;
                i += 1;
                while i < n {
                    match bytes[i] {
                        b'\\' => i += 2,
                        b'\n' => break,
                        b if b == quote => {
                            i += 1;
                            break;
                        }
                        _ => i += 1,
                    }
                }
                i = i.min(n);
                class[start..i].fill(Class::Literal);
            }
            b'/' if i + 1 < n && bytes[i + 1] == b'*' => {
                let start = i;
                i += 2;
                let mut closed = false;
                while i + 1 < n {
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        closed = true;
                        break;
                    }
                    i += 1;
                }
                if !closed {
                    i = n;
                    unterminated = Some(start);
                }
                class[start..i].fill(Class::Comment);
                comments.push(Span {
                    start,
                    end: i,
                    kind: CommentKind::Block,
                });
            }
            b'/' if i + 1 < n && bytes[i + 1] == b'/' => {
                let start = i;
                i += 2;
                while i < n && bytes[i] != b'\n' {
                    // backslash-newline splices the next line into the comment
                    if bytes[i] == b'\\' {
                        let mut j = i + 1;
                        if j < n && bytes[j] == b'\r' {
                            j += 1;
                        }
                        if j < n && bytes[j] == b'\n' {
                            i = j + 1;
                            continue;
                        }
                    }
                    i += 1;
                }
                let mut end = i;
                if end > start && bytes[end - 1] == b'\r' {
                    end -= 1;
                }
                class[start..end].fill(Class::Comment);
                comments.push(Span {
                    start,
                    end,
                    kind: CommentKind::Line,
                });
            }
            _ => i += 1,
        }
    }
    Lexed {
        class,
        comments,
        unterminated,
    }
}

/// Merges runs of `//` comments on consecutive lines.
fn coalesce(src: &str, spans: &[Span]) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::with_capacity(spans.len());
    for &span in spans {
        if let Some(prev) = out.last_mut() {
            let gap = &src[prev.end..span.start];
            if prev.kind == CommentKind::Line
                && span.kind == CommentKind::Line
                && gap.trim().is_empty()
                && gap.matches('\n').count() == 1
            {
                prev.end = span.end;
                continue;
            }
        }
        out.push(span);
    }
    out
}

struct Line {
    start: usize,
    end: usize,
}

struct Parsed<'a> {
    src: &'a str,
    lexed: Lexed,
    lines: Vec<Line>,
}

impl<'a> Parsed<'a> {
    fn new(src: &'a str) -> Self {
        let mut lines = Vec::new();
        let mut start = 0;
        for (i, b) in src.bytes().enumerate() {
            if b == b'\n' {
                lines.push(Line { start, end: i });
                start = i + 1;
            }
        }
        lines.push(Line {
            start,
            end: src.len(),
        });
        Parsed {
            src,
            lexed: lex(src),
            lines,
        }
    }

    fn line_of(&self, byte: usize) -> usize {
        self.lines.partition_point(|l| l.start <= byte) - 1
    }

    /// Text of `[start, end)` with comment bytes removed.
    fn stripped(&self, start: usize, end: usize) -> String {
        let bytes = self.src.as_bytes();
        let kept: Vec<u8> = (start..end)
            .filter(|&i| self.lexed.class[i] != Class::Comment)
            .map(|i| bytes[i])
            .collect();
        // comments are removed as whole UTF-8 sequences
        String::from_utf8(kept).expect("comment boundaries are ASCII")
    }

    /// First non-whitespace byte of the line lies inside a comment.
    fn starts_with_comment(&self, line: usize) -> bool {
        let Line { start, end } = self.lines[line];
        let bytes = self.src.as_bytes();
        (start..end)
            .find(|&i| !bytes[i].is_ascii_whitespace())
            .is_some_and(|i| self.lexed.class[i] == Class::Comment)
    }

    fn next_code_pos(&self, from: usize) -> Option<usize> {
        let bytes = self.src.as_bytes();
        (from..bytes.len()).find(|&i| self.lexed.class[i] != Class::Comment && !bytes[i].is_ascii_whitespace())
    }

    /// If a function definition starts at `pos`, the byte just past its closing brace.
    fn function_end(&self, pos: usize) -> Option<usize> {
        const MAX_HEADER: usize = 1024;
        const CONTROL: [&str; 8] = ["if", "for", "while", "switch", "else", "do", "return", "sizeof"];
        let bytes = self.src.as_bytes();
        if bytes[pos] == b'#' {
            return None;
        }
        let word_end = (pos..bytes.len())
            .find(|&i| !(bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_'))
            .unwrap_or(bytes.len());
        if word_end == pos || CONTROL.contains(&&self.src[pos..word_end]) {
            return None;
        }
        let mut depth = 0i32;
        let mut saw_paren = false;
        let mut last_code = 0u8;
        let mut i = pos;
        let open = loop {
            if i >= bytes.len() || i - pos > MAX_HEADER {
                return None;
            }
            if self.lexed.class[i] == Class::Code {
                let b = bytes[i];
                match b {
                    b'(' => {
                        depth += 1;
                        saw_paren = true;
                    }
                    b')' => depth -= 1,
                    b';' | b'=' | b'}' | b'#' if depth == 0 => return None,
                    b'{' if depth == 0 => break i,
                    _ => {}
                }
                if !b.is_ascii_whitespace() {
                    last_code = b;
                }
            } else if self.lexed.class[i] == Class::Literal && depth == 0 {
                return None;
            }
            i += 1;
        };
        if !saw_paren || last_code != b')' {
            return None;
        }
        let mut depth = 0i32;
        for j in open..bytes.len() {
            if self.lexed.class[j] != Class::Code {
                continue;
            }
            match bytes[j] {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(j + 1);
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn code_after(&self, comment_end: usize, config: &ExtractionConfig) -> String {
        let end_line = self.line_of(comment_end.saturating_sub(1));
        let tail_end = self.lines[end_line].end;
        let same_line_code = !self.stripped(comment_end, tail_end).trim().is_empty();

        if config.attach_function {
            if let Some(pos) = self.next_code_pos(comment_end) {
                let pos_line = self.line_of(pos);
                let directly_below = same_line_code
                    || (end_line + 1..pos_line).all(|l| !self.starts_with_comment(l))
                        && !self.starts_with_comment(pos_line);
                if directly_below {
                    if let Some(body_end) = self.function_end(pos) {
                        let start = if pos_line == end_line {
                            comment_end
                        } else {
                            self.lines[pos_line].start
                        };
                        let text = self.stripped(start, body_end);
                        let lines: Vec<&str> = text
                            .split('\n')
                            .map(str::trim_end)
                            .filter(|l| !l.trim().is_empty())
                            .collect();
                        return truncate(lines.join("\n"), config.max_code_chars);
                    }
                }
            }
        }

        let mut collected: Vec<String> = Vec::new();
        if same_line_code {
            collected.push(self.stripped(comment_end, tail_end).trim().to_string());
        }
        let mut line = end_line + 1;
        while collected.len() < config.context_lines && line < self.lines.len() {
            if self.starts_with_comment(line) {
                break;
            }
            let Line { start, end } = self.lines[line];
            let text = self.stripped(start, end);
            let text = text.trim_end();
            if !text.trim().is_empty() {
                collected.push(text.to_string());
            }
            line += 1;
        }
        truncate(collected.join("\n"), config.max_code_chars)
    }
}

fn truncate(mut text: String, max_chars: usize) -> String {
    if let Some((cut, _)) = text.char_indices().nth(max_chars) {
        text.truncate(cut);
    }
    text
}

/// Extracts every comment in `source` together with the code that follows it.
///
/// Comment text is a verbatim slice of `source`, markers included; `file`
/// is left empty (see [`extract_file`]).
pub fn extract_pairs(source: &str, config: &ExtractionConfig) -> FileExtraction {
    let parsed = Parsed::new(source);
    let mut out = FileExtraction::default();
    if let Some(start) = parsed.lexed.unterminated {
        out.warnings.push(ExtractWarning {
            file: PathBuf::new(),
            line: parsed.line_of(start) + 1,
            message: "unterminated block comment; captured to end of file".into(),
        });
    }
    for span in coalesce(source, &parsed.lexed.comments) {
        out.pairs.push(RawExtraction {
            comment: source[span.start..span.end].to_string(),
            code: parsed.code_after(span.end, config),
            file: PathBuf::new(),
            line: parsed.line_of(span.start) + 1,
            kind: span.kind,
        });
    }
    out
}

/// Reads `path` (invalid UTF-8 replaced) and extracts its pairs.
pub fn extract_file(path: &Path, config: &ExtractionConfig) -> Result<FileExtraction> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut result = extract_pairs(&text, config);
    for pair in &mut result.pairs {
        pair.file = path.to_path_buf();
    }
    for warning in &mut result.warnings {
        warning.file = path.to_path_buf();
    }
    Ok(result)
}

fn is_c_file(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("c" | "h"))
}

/// Walks `root` for `*.c` / `*.h` files and wraps every extraction as an
/// unlabeled pair. Unreadable files are skipped with a warning. Pairs whose
/// content repeats an earlier one (by content hash) are kept once.
pub fn extract_corpus(root: &Path, config: &ExtractionConfig) -> Result<(Corpus, Vec<ExtractWarning>)> {
    config.validate()?;
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "root is not a directory"),
        ));
    }
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|entry| match entry {
            Ok(e) => Some(e),
            Err(err) => {
                log::warn!("skipping unreadable entry: {err}");
                None
            }
        })
        .filter(|e| e.file_type().is_file() && is_c_file(e.path()))
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let results: Vec<(PathBuf, Result<FileExtraction>)> = files
        .into_par_iter()
        .map(|path| {
            let result = extract_file(&path, config);
            (path, result)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut pairs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (path, result) in results {
        let extraction = match result {
            Ok(x) => x,
            Err(err) => {
                log::warn!("skipping {}: {err}", path.display());
                warnings.push(ExtractWarning {
                    file: path,
                    line: 0,
                    message: err.to_string(),
                });
                continue;
            }
        };
        for warning in &extraction.warnings {
            log::warn!("{}:{}: {}", warning.file.display(), warning.line, warning.message);
        }
        warnings.extend(extraction.warnings);
        for raw in extraction.pairs {
            let pair = CodeCommentPair::new(raw.comment, raw.code, Label::Unlabeled, Source::Extracted);
            if seen.insert(pair.id.clone()) {
                pairs.push(pair);
            } else {
                log::debug!("{}:{}: duplicate content skipped", raw.file.display(), raw.line);
            }
        }
    }
    let name = root
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("extracted")
        .to_string();
    Ok((Corpus::new(name, pairs)?, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extract(src: &str) -> Vec<RawExtraction> {
        extract_pairs(src, &ExtractionConfig::default()).pairs
    }

    #[test]
    fn table_one_swap_example() {
        let src = "/* Swap two values */\nvoid swapValues(int *x, int *y) {\n    int temp;\n    temp = *x;\n    *x = *y;\n    *y = temp;\n}\n";
        let pairs = extract(src);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].comment, "/* Swap two values */");
        assert_eq!(
            pairs[0].code,
            "void swapValues(int *x, int *y) {\n    int temp;\n    temp = *x;\n    *x = *y;\n    *y = temp;\n}"
        );
        assert_eq!(pairs[0].kind, CommentKind::Block);
        assert_eq!(pairs[0].line, 1);
    }

    #[test]
    fn string_literal_decoy() {
        assert!(extract("char *s = \"/* not a comment */\";").is_empty());
        assert!(extract("char *s = \"// nope\";\nchar c = '/';").is_empty());
        assert!(extract("char *s = \"esc \\\" /* still string */\";").is_empty());
    }

    #[test]
    fn three_block_comments_three_statements() {
        let src = "/* a */\nint a = 1;\n/* b */\nint b = 2;\n\n/* c */\nint c = a + b;\n";
        let pairs = extract(src);
        let codes: Vec<&str> = pairs.iter().map(|p| p.code.as_str()).collect();
        assert_eq!(codes, ["int a = 1;", "int b = 2;", "int c = a + b;"]);
        let lines: Vec<usize> = pairs.iter().map(|p| p.line).collect();
        assert_eq!(lines, [1, 3, 6]);
    }

    #[test]
    fn line_comments_coalesce() {
        let src = "// one\n// two\nint x;\n\n// three\nint y;\n";
        let pairs = extract(src);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].comment, "// one\n// two");
        assert_eq!(pairs[0].code, "int x;");
        assert_eq!(pairs[1].comment, "// three");
    }

    #[test]
    fn block_comments_do_not_nest() {
        let pairs = extract("/* outer /* inner */ int x; */\n");
        assert_eq!(pairs[0].comment, "/* outer /* inner */");
        assert_eq!(pairs[0].code, "int x; */");
    }

    #[test]
    fn unterminated_block_comment_warns() {
        let result = extract_pairs("int a;\n/* never closed\nint b;\n", &ExtractionConfig::default());
        assert_eq!(result.pairs.len(), 1);
        assert_eq!(result.pairs[0].comment, "/* never closed\nint b;\n");
        assert_eq!(result.pairs[0].code, "");
        assert_eq!(result.warnings.len(), 1);
        assert_eq!(result.warnings[0].line, 2);
    }

    #[test]
    fn context_lines_limit() {
        let config = ExtractionConfig {
            context_lines: 2,
            ..ExtractionConfig::default()
        };
        let pairs = extract_pairs("/* x */\na;\n\nb;\nc;\n", &config).pairs;
        assert_eq!(pairs[0].code, "a;\nb;");
    }

    #[test]
    fn trailing_comment_takes_following_code() {
        let pairs = extract("int x; /* counter */\nint y;\n");
        assert_eq!(pairs[0].code, "int y;");
    }

    #[test]
    fn same_line_code_after_comment() {
        let pairs = extract("/* lead */ int x = 0;\nint y;\n");
        assert_eq!(pairs[0].code, "int x = 0;\nint y;");
    }

    #[test]
    fn line_comment_continuation() {
        let pairs = extract("// spliced \\\n still comment\nint z;\n");
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].comment, "// spliced \\\n still comment");
        assert_eq!(pairs[0].code, "int z;");
    }

    #[test]
    fn control_flow_is_not_a_function() {
        let src = "/* loop */\nfor (i = 0; i < n; i++) {\n  a[i] = 0;\n}\n";
        let pairs = extract(src);
        assert_eq!(pairs[0].code, "for (i = 0; i < n; i++) {\n  a[i] = 0;\n}");
        let config = ExtractionConfig {
            context_lines: 1,
            ..ExtractionConfig::default()
        };
        let pairs = extract_pairs("/* check */\nif (x) {\n  y();\n}\n", &config).pairs;
        assert_eq!(pairs[0].code, "if (x) {");
    }

    #[test]
    fn function_body_strips_inner_comments_and_blank_lines() {
        let src = "/* f */\nint f(void)\n{\n\n    return 1; // one\n}\n";
        let pairs = extract(src);
        assert_eq!(pairs[0].code, "int f(void)\n{\n    return 1;\n}");
        assert_eq!(pairs[1].comment, "// one");
        assert_eq!(pairs[1].code, "}");
    }

    #[test]
    fn attach_function_off_uses_context() {
        let config = ExtractionConfig {
            context_lines: 2,
            attach_function: false,
            ..ExtractionConfig::default()
        };
        let src = "/* f */\nint f(void) {\n  a();\n  b();\n}\n";
        assert_eq!(extract_pairs(src, &config).pairs[0].code, "int f(void) {\n  a();");
    }

    #[test]
    fn code_truncated_to_max_chars() {
        let config = ExtractionConfig {
            max_code_chars: 4,
            ..ExtractionConfig::default()
        };
        assert_eq!(extract_pairs("/* x */\nint é = 1;\n", &config).pairs[0].code, "int ");
    }

    #[test]
    fn crlf_line_comment() {
        let pairs = extract("// dos\r\nint x;\r\n");
        assert_eq!(pairs[0].comment, "// dos");
        assert_eq!(pairs[0].code, "int x;");
    }

    #[test]
    fn preprocessor_is_code() {
        let pairs = extract("#if 0\n/* inside */\n#endif\n");
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].code, "#endif");
    }

    #[test]
    fn rejects_zero_context_lines() {
        let config = ExtractionConfig {
            context_lines: 0,
            ..ExtractionConfig::default()
        };
        assert!(config.validate().is_err());
    }
}
