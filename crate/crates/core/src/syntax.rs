//! A small character cursor shared by the text-format readers.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {col}: {msg}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

pub struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    comment: Option<char>,
}

impl<'a> Cursor<'a> {
    /// `comment` starts a comment running to the end of the line.
    pub fn new(text: &'a str, comment: Option<char>) -> Cursor<'a> {
        Cursor {
            text,
            pos: 0,
            comment,
        }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn set_pos(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    pub fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    pub fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(c) if Some(c) == self.comment => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    /// Skips whitespace, then consumes `token` if it comes next.
    pub fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, token: &str) -> Result<(), SyntaxError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{token}`")))
        }
    }

    /// Reads a run of characters accepted by `pred` (after whitespace).
    pub fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            self.bump();
        }
        &self.text[start..self.pos]
    }

    pub fn ident(&mut self) -> Result<&'a str, SyntaxError> {
        let s = self.take_while(is_ident_char);
        if s.is_empty() {
            Err(self.error("expected a name"))
        } else {
            Ok(s)
        }
    }

    /// A double-quoted string with `\"` and `\\` escapes.
    pub fn quoted(&mut self) -> Result<String, SyntaxError> {
        self.expect("\"")?;
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\\')) => out.push(c),
                    _ => return Err(self.error("bad escape in string")),
                },
                Some(c) => out.push(c),
                None => return Err(self.error("unterminated string")),
            }
        }
    }

    pub fn line_col(&self, pos: usize) -> (usize, usize) {
        let before = &self.text[..pos.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    pub fn error(&self, msg: &str) -> SyntaxError {
        self.error_at(self.pos, msg)
    }

    pub fn error_at(&self, pos: usize, msg: &str) -> SyntaxError {
        let (line, col) = self.line_col(pos);
        SyntaxError {
            line,
            col,
            msg: msg.to_string(),
        }
    }
}

pub fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_lines_and_comments() {
        let mut c = Cursor::new("% note\n  foo \"a\\\"b\"", Some('%'));
        assert_eq!(c.ident().unwrap(), "foo");
        assert_eq!(c.quoted().unwrap(), "a\"b");
        let err = c.expect("x").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(quote("a\"b"), "\"a\\\"b\"");
    }
}
