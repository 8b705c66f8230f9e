//! Line-based N-Triples reading and writing.
//!
//! Covers the subset found in multi-modal KG dumps: IRIs, plain literals and
//! typed literals. Blank nodes and language tags are accepted and preserved
//! but nothing downstream interprets them.

use std::fmt::{self, Write as _};
use std::io::BufRead;

use thiserror::Error;

/// An RDF term as it appears in an N-Triples statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RdfTerm {
    Iri(String),
    BlankNode(String),
    Literal {
        value: String,
        datatype: Option<String>,
        language: Option<String>,
    },
}

impl RdfTerm {
    /// Builds an IRI term, rejecting empty values and values carrying
    /// whitespace or angle brackets.
    pub fn iri(value: impl Into<String>) -> Result<Self, InvalidTerm> {
        let value = value.into();
        if value.is_empty() {
            return Err(InvalidTerm("empty IRI".into()));
        }
        if value.chars().any(|c| c.is_whitespace() || c == '<' || c == '>') {
            return Err(InvalidTerm(format!("IRI contains forbidden character: {value:?}")));
        }
        Ok(RdfTerm::Iri(value))
    }

    pub fn literal(value: impl Into<String>) -> Self {
        RdfTerm::Literal { value: value.into(), datatype: None, language: None }
    }

    pub fn typed_literal(value: impl Into<String>, datatype: impl Into<String>) -> Result<Self, InvalidTerm> {
        let datatype = match RdfTerm::iri(datatype)? {
            RdfTerm::Iri(d) => d,
            _ => unreachable!(),
        };
        Ok(RdfTerm::Literal { value: value.into(), datatype: Some(datatype), language: None })
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            RdfTerm::Iri(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, RdfTerm::Literal { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid RDF term: {0}")]
pub struct InvalidTerm(pub String);

/// One `subject predicate object .` line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RdfStatement {
    pub subject: RdfTerm,
    pub predicate: RdfTerm,
    pub object: RdfTerm,
}

impl RdfStatement {
    pub fn new(subject: RdfTerm, predicate: RdfTerm, object: RdfTerm) -> Result<Self, InvalidTerm> {
        if subject.is_literal() {
            return Err(InvalidTerm("literal in subject position".into()));
        }
        if !matches!(predicate, RdfTerm::Iri(_)) {
            return Err(InvalidTerm("predicate must be an IRI".into()));
        }
        Ok(RdfStatement { subject, predicate, object })
    }

    /// Convenience constructor for an all-IRI statement.
    pub fn iris(s: &str, p: &str, o: &str) -> Result<Self, InvalidTerm> {
        RdfStatement::new(RdfTerm::iri(s)?, RdfTerm::iri(p)?, RdfTerm::iri(o)?)
    }
}

/// A malformed input line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message} near `{fragment}`")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
    pub fragment: String,
}

/// Whether malformed lines abort the parse or are skipped and counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Error)]
pub enum NTriplesError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("read failed at line {line}: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
}

/// Result of parsing a whole stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub statements: Vec<RdfStatement>,
    /// Malformed lines skipped in lenient mode.
    pub skipped: usize,
    /// First few skipped-line errors, for diagnostics.
    pub skipped_errors: Vec<ParseError>,
}

const MAX_KEPT_ERRORS: usize = 16;

/// Parses every line of `reader`.
pub fn parse_ntriples<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParseOutcome, NTriplesError> {
    let mut out = ParseOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| NTriplesError::Io { line: lineno, source })?;
        match parse_line(&line, lineno) {
            Ok(Some(st)) => out.statements.push(st),
            Ok(None) => {}
            Err(e) => match mode {
                ParseMode::Strict => return Err(e.into()),
                ParseMode::Lenient => {
                    out.skipped += 1;
                    if out.skipped_errors.len() < MAX_KEPT_ERRORS {
                        out.skipped_errors.push(e);
                    }
                }
            },
        }
    }
    Ok(out)
}

/// Parses an in-memory document.
pub fn parse_str(text: &str, mode: ParseMode) -> Result<ParseOutcome, NTriplesError> {
    parse_ntriples(text.as_bytes(), mode)
}

/// Parses a single line. Blank and comment lines yield `None`.
pub fn parse_line(line: &str, lineno: usize) -> Result<Option<RdfStatement>, ParseError> {
    let mut cur = Cursor { src: line, pos: 0, line: lineno };
    cur.skip_ws();
    if cur.at_end() || cur.peek() == Some('#') {
        return Ok(None);
    }
    let subject = match cur.peek() {
        Some('<') => cur.iri()?,
        Some('_') => cur.blank()?,
        _ => return Err(cur.error("expected IRI or blank node as subject")),
    };
    cur.skip_ws();
    let predicate = match cur.peek() {
        Some('<') => cur.iri()?,
        _ => return Err(cur.error("expected IRI as predicate")),
    };
    cur.skip_ws();
    let object = match cur.peek() {
        Some('<') => cur.iri()?,
        Some('_') => cur.blank()?,
        Some('"') => cur.literal()?,
        _ => return Err(cur.error("expected IRI, blank node or literal as object")),
    };
    cur.skip_ws();
    if cur.peek() != Some('.') {
        return Err(cur.error("expected `.` terminating the statement"));
    }
    cur.bump();
    cur.skip_ws();
    if !cur.at_end() && cur.peek() != Some('#') {
        return Err(cur.error("trailing content after `.`"));
    }
    Ok(Some(RdfStatement { subject, predicate, object }))
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
    }

    fn error(&self, message: &str) -> ParseError {
        let rest = &self.src[self.pos..];
        let fragment: String = rest.chars().take(40).collect();
        ParseError { line: self.line, message: message.to_string(), fragment }
    }

    fn iri(&mut self) -> Result<RdfTerm, ParseError> {
        let start = self.pos;
        self.bump();
        let mut value = String::new();
        loop {
            match self.bump() {
                None => {
                    self.pos = start;
                    return Err(self.error("unterminated IRI"));
                }
                Some('>') => break,
                Some('\\') => value.push(self.unicode_escape()?),
                Some(c) if c.is_whitespace() || c == '<' || c == '"' => {
                    self.pos = start;
                    return Err(self.error("invalid character in IRI"));
                }
                Some(c) => value.push(c),
            }
        }
        RdfTerm::iri(value).map_err(|e| {
            self.pos = start;
            self.error(&e.0)
        })
    }

    fn unicode_escape(&mut self) -> Result<char, ParseError> {
        let width = match self.bump() {
            Some('u') => 4,
            Some('U') => 8,
            _ => return Err(self.error("invalid escape in IRI")),
        };
        self.hex_char(width)
    }

    fn hex_char(&mut self, width: usize) -> Result<char, ParseError> {
        let end = self.pos + width;
        let digits = self.src.get(self.pos..end).ok_or_else(|| self.error("truncated unicode escape"))?;
        let code = u32::from_str_radix(digits, 16).map_err(|_| self.error("bad hex in unicode escape"))?;
        let c = char::from_u32(code).ok_or_else(|| self.error("escape is not a valid code point"))?;
        self.pos = end;
        Ok(c)
    }

    fn blank(&mut self) -> Result<RdfTerm, ParseError> {
        if !self.src[self.pos..].starts_with("_:") {
            return Err(self.error("expected `_:`"));
        }
        self.pos += 2;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                self.bump();
            } else {
                break;
            }
        }
        // a trailing '.' belongs to the statement terminator
        let mut label = &self.src[start..self.pos];
        while label.ends_with('.') {
            label = &label[..label.len() - 1];
            self.pos -= 1;
        }
        if label.is_empty() {
            return Err(self.error("empty blank node label"));
        }
        Ok(RdfTerm::BlankNode(label.to_string()))
    }

    fn literal(&mut self) -> Result<RdfTerm, ParseError> {
        let start = self.pos;
        self.bump();
        let mut value = String::new();
        loop {
            match self.bump() {
                None => {
                    self.pos = start;
                    return Err(self.error("unterminated literal"));
                }
                Some('"') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_char(4)?,
                        Some('U') => self.hex_char(8)?,
                        _ => return Err(self.error("invalid escape in literal")),
                    };
                    value.push(c);
                }
                Some(c) => value.push(c),
            }
        }
        let mut datatype = None;
        let mut language = None;
        if self.src[self.pos..].starts_with("^^") {
            self.pos += 2;
            if self.peek() != Some('<') {
                return Err(self.error("expected datatype IRI after `^^`"));
            }
            match self.iri()? {
                RdfTerm::Iri(d) => datatype = Some(d),
                _ => unreachable!(),
            }
        } else if self.peek() == Some('@') {
            self.bump();
            let tag_start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '-') {
                self.bump();
            }
            if self.pos == tag_start {
                return Err(self.error("empty language tag"));
            }
            language = Some(self.src[tag_start..self.pos].to_string());
        }
        Ok(RdfTerm::Literal { value, datatype, language })
    }
}

impl fmt::Display for RdfTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RdfTerm::Iri(v) => write_iri(f, v),
            RdfTerm::BlankNode(l) => write!(f, "_:{l}"),
            RdfTerm::Literal { value, datatype, language } => {
                f.write_char('"')?;
                for c in value.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c => f.write_char(c)?,
                    }
                }
                f.write_char('"')?;
                if let Some(d) = datatype {
                    f.write_str("^^")?;
                    write_iri(f, d)?;
                } else if let Some(l) = language {
                    write!(f, "@{l}")?;
                }
                Ok(())
            }
        }
    }
}

fn write_iri(f: &mut fmt::Formatter<'_>, iri: &str) -> fmt::Result {
    f.write_char('<')?;
    for c in iri.chars() {
        if matches!(c, '\u{0}'..='\u{20}' | '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') {
            write!(f, "\\u{:04X}", c as u32)?;
        } else {
            f.write_char(c)?;
        }
    }
    f.write_char('>')
}

impl fmt::Display for RdfStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// Writes one statement per line, each terminated by ` .` and a newline.
pub fn serialize_ntriples<'a, I>(statements: I) -> String
where
    I: IntoIterator<Item = &'a RdfStatement>,
{
    let mut out = String::new();
    for st in statements {
        writeln!(out, "{st}").expect("writing to a String cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn freebase_style_relative_iris() {
        let out = parse_str("</ns/g.112ygbz6> </ns/type.object.type> </ns/film.film> .\n", ParseMode::Strict).unwrap();
        assert_eq!(out.statements, vec![RdfStatement::iris("/ns/g.112ygbz6", "/ns/type.object.type", "/ns/film.film").unwrap()]);
    }

    #[test]
    fn typed_literal() {
        let out = parse_str("<e1> <lat> \"48.85\"^^<xsd:double> .", ParseMode::Strict).unwrap();
        let st = &out.statements[0];
        assert_eq!(
            st.object,
            RdfTerm::Literal { value: "48.85".into(), datatype: Some("xsd:double".into()), language: None }
        );
    }

    #[test]
    fn empty_and_comments() {
        assert!(parse_str("", ParseMode::Strict).unwrap().statements.is_empty());
        let out = parse_str("# header\n\n   \n<a> <b> <c> . # trailing\n", ParseMode::Strict).unwrap();
        assert_eq!(out.statements.len(), 1);
    }

    #[test]
    fn escapes_decoded() {
        let out = parse_str(r#"<s> <p> "a\"b\\c\nd\te\u00e9\U0001F600" ."#, ParseMode::Strict).unwrap();
        match &out.statements[0].object {
            RdfTerm::Literal { value, .. } => assert_eq!(value, "a\"b\\c\nd\te\u{e9}\u{1F600}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn language_tag_and_blank_nodes() {
        let out = parse_str("_:b1 <p> \"chat\"@fr .\n<s> <p> _:x.", ParseMode::Strict).unwrap();
        assert_eq!(out.statements[0].subject, RdfTerm::BlankNode("b1".into()));
        assert!(matches!(&out.statements[0].object, RdfTerm::Literal { language: Some(l), .. } if l == "fr"));
        assert_eq!(out.statements[1].object, RdfTerm::BlankNode("x".into()));
    }

    #[test]
    fn strict_error_carries_line_number() {
        let err = parse_str("<a> <b> <c> .\n<a> <b> oops .\n", ParseMode::Strict).unwrap_err();
        match err {
            NTriplesError::Parse(e) => {
                assert_eq!(e.line, 2);
                assert!(e.fragment.starts_with("oops"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lenient_skips_exactly_malformed_lines() {
        let text = "<a> <b> <c> .\n<a> <b> <c>\n\"lit\" <b> <c> .\n<d> <e> \"f\" .\n<x> <y>\n";
        let out = parse_str(text, ParseMode::Lenient).unwrap();
        assert_eq!(out.statements.len(), 2);
        assert_eq!(out.skipped, 3);
        assert_eq!(out.skipped_errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3, 5]);
    }

    #[test]
    fn serialize_single_and_quote() {
        let st = RdfStatement::iris("s", "p", "o").unwrap();
        let text = serialize_ntriples([&st]);
        assert_eq!(text, "<s> <p> <o> .\n");
        let lit = RdfStatement::new(RdfTerm::iri("s").unwrap(), RdfTerm::iri("p").unwrap(), RdfTerm::literal("say \"hi\"")).unwrap();
        assert_eq!(serialize_ntriples([&lit]), "<s> <p> \"say \\\"hi\\\"\" .\n");
    }

    #[test]
    fn invalid_iris_rejected() {
        assert!(RdfTerm::iri("").is_err());
        assert!(RdfTerm::iri("a b").is_err());
        assert!(RdfTerm::iri("a>b").is_err());
        assert!(parse_str("<a b> <p> <o> .", ParseMode::Strict).is_err());
    }

    fn iri_strategy() -> impl Strategy<Value = RdfTerm> {
        "[a-zA-Z0-9/:#._\\-{}|^\\\\\u{e9}]{1,16}".prop_map(|s| RdfTerm::iri(s).unwrap())
    }

    fn object_strategy() -> impl Strategy<Value = RdfTerm> {
        prop_oneof![
            iri_strategy(),
            ".{0,12}".prop_map(RdfTerm::literal),
            (".{0,12}", "[a-z:/#]{1,10}").prop_map(|(v, d)| RdfTerm::typed_literal(v, d).unwrap()),
        ]
    }

    fn statement_strategy() -> impl Strategy<Value = RdfStatement> {
        (iri_strategy(), iri_strategy(), object_strategy()).prop_map(|(s, p, o)| RdfStatement::new(s, p, o).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip(stmts in prop::collection::vec(statement_strategy(), 0..20)) {
            let text = serialize_ntriples(&stmts);
            let back = parse_str(&text, ParseMode::Strict).unwrap();
            prop_assert_eq!(back.statements, stmts);
        }

        #[test]
        fn line_independence(a in prop::collection::vec(statement_strategy(), 0..8),
                             b in prop::collection::vec(statement_strategy(), 0..8)) {
            let ta = serialize_ntriples(&a);
            let tb = serialize_ntriples(&b);
            let joined = parse_str(&(ta.clone() + &tb), ParseMode::Strict).unwrap().statements;
            let mut separate = parse_str(&ta, ParseMode::Strict).unwrap().statements;
            separate.extend(parse_str(&tb, ParseMode::Strict).unwrap().statements);
            prop_assert_eq!(joined, separate);
        }
    }
}
