//! Tokenizer for ISO 10303-21 clear-text exchange files.
//!
//! Works on raw bytes. String literals are decoded byte-for-char (Latin-1),
//! so any byte >= 0x80 survives a decode/encode cycle unchanged regardless
//! of what encoding the exporter actually used.

use super::StepError;

/// Line/column of the first byte of a token, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Entity or section keyword. `ISO-10303-21` and `END-ISO-10303-21`
    /// are lexed as keywords too.
    Keyword(String),
    /// Integer literal, raw text kept for lossless re-serialization.
    Integer(String),
    /// Real literal, raw text.
    Real(String),
    /// String literal with `''` collapsed to `'`; other escapes verbatim.
    Str(String),
    /// `.NAME.` without the dots.
    Enum(String),
    /// `"..."` binary literal without the quotes.
    Binary(String),
    /// `#123`
    Ref(u64),
    LParen,
    RParen,
    Comma,
    Semicolon,
    Equals,
    /// `$`
    Unset,
    /// `*`
    Inherited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Position,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.at).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<u8> {
        self.bytes.get(self.at + offset).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.at += 1;
        if b == b'\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(b)
    }

    fn pos(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn take_while(&mut self, mut pred: impl FnMut(u8) -> bool) -> String {
        let mut out = String::new();
        while let Some(b) = self.peek() {
            if !pred(b) {
                break;
            }
            out.push(b as char);
            self.bump();
        }
        out
    }
}

fn is_keyword_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b == b'!'
}

fn is_keyword_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Split a byte stream into Part 21 tokens, skipping whitespace and comments.
pub fn tokenize(input: &[u8]) -> Result<Vec<Token>, StepError> {
    let mut cur = Cursor {
        bytes: input,
        at: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();

    while let Some(b) = cur.peek() {
        let pos = cur.pos();
        let kind = match b {
            b' ' | b'\t' | b'\r' | b'\n' | b'\x0c' => {
                cur.bump();
                continue;
            }
            b'/' if cur.peek_at(1) == Some(b'*') => {
                cur.bump();
                cur.bump();
                loop {
                    match cur.bump() {
                        Some(b'*') if cur.peek() == Some(b'/') => {
                            cur.bump();
                            break;
                        }
                        Some(_) => {}
                        None => {
                            return Err(StepError::UnterminatedComment {
                                line: pos.line,
                                column: pos.column,
                            })
                        }
                    }
                }
                continue;
            }
            b'(' => single(&mut cur, TokenKind::LParen),
            b')' => single(&mut cur, TokenKind::RParen),
            b',' => single(&mut cur, TokenKind::Comma),
            b';' => single(&mut cur, TokenKind::Semicolon),
            b'=' => single(&mut cur, TokenKind::Equals),
            b'$' => single(&mut cur, TokenKind::Unset),
            b'*' => single(&mut cur, TokenKind::Inherited),
            b'\'' => lex_string(&mut cur, pos)?,
            b'"' => {
                cur.bump();
                let body = cur.take_while(|c| c.is_ascii_hexdigit());
                if cur.bump() != Some(b'"') {
                    return Err(StepError::UnterminatedString {
                        line: pos.line,
                        column: pos.column,
                    });
                }
                TokenKind::Binary(body)
            }
            b'#' => {
                cur.bump();
                let digits = cur.take_while(|c| c.is_ascii_digit());
                let id = digits.parse::<u64>().map_err(|_| illegal(pos, b'#'))?;
                TokenKind::Ref(id)
            }
            b'.' if cur.peek_at(1).is_some_and(is_keyword_start) => {
                cur.bump();
                let name = cur.take_while(is_keyword_char);
                if cur.bump() != Some(b'.') {
                    return Err(illegal(pos, b'.'));
                }
                TokenKind::Enum(name.to_ascii_uppercase())
            }
            b'0'..=b'9' | b'+' | b'-' => lex_number(&mut cur, pos)?,
            b if is_keyword_start(b) => {
                let mut word = String::new();
                if b == b'!' {
                    cur.bump();
                    word.push('!');
                }
                word.push_str(&cur.take_while(is_keyword_char));
                let mut word = word.to_ascii_uppercase();
                // The file delimiters are the only keywords containing hyphens.
                if (word == "ISO" || word == "END") && cur.peek() == Some(b'-') {
                    word.push_str(
                        &cur.take_while(|c| is_keyword_char(c) || c == b'-')
                            .to_ascii_uppercase(),
                    );
                }
                TokenKind::Keyword(word)
            }
            other => return Err(illegal(pos, other)),
        };
        tokens.push(Token { kind, pos });
    }
    Ok(tokens)
}

fn single(cur: &mut Cursor<'_>, kind: TokenKind) -> TokenKind {
    cur.bump();
    kind
}

fn illegal(pos: Position, byte: u8) -> StepError {
    StepError::IllegalCharacter {
        found: byte as char,
        line: pos.line,
        column: pos.column,
    }
}

fn lex_string(cur: &mut Cursor<'_>, pos: Position) -> Result<TokenKind, StepError> {
    cur.bump();
    let mut out = String::new();
    loop {
        match cur.bump() {
            Some(b'\'') => {
                if cur.peek() == Some(b'\'') {
                    cur.bump();
                    out.push('\'');
                } else {
                    return Ok(TokenKind::Str(out));
                }
            }
            Some(b) => out.push(b as char),
            None => {
                return Err(StepError::UnterminatedString {
                    line: pos.line,
                    column: pos.column,
                })
            }
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>, pos: Position) -> Result<TokenKind, StepError> {
    let mut raw = String::new();
    if let Some(sign @ (b'+' | b'-')) = cur.peek() {
        raw.push(sign as char);
        cur.bump();
    }
    let int_part = cur.take_while(|c| c.is_ascii_digit());
    if int_part.is_empty() {
        return Err(illegal(pos, raw.as_bytes().first().copied().unwrap_or(b'?')));
    }
    raw.push_str(&int_part);
    if cur.peek() != Some(b'.') {
        return Ok(TokenKind::Integer(raw));
    }
    cur.bump();
    raw.push('.');
    raw.push_str(&cur.take_while(|c| c.is_ascii_digit()));
    if let Some(e @ (b'E' | b'e')) = cur.peek() {
        let sign = cur.peek_at(1);
        let has_exp_digits = match sign {
            Some(b'+' | b'-') => cur.peek_at(2).is_some_and(|c| c.is_ascii_digit()),
            Some(c) => c.is_ascii_digit(),
            None => false,
        };
        if !has_exp_digits {
            return Err(illegal(cur.pos(), e));
        }
        raw.push(e as char);
        cur.bump();
        if let Some(s @ (b'+' | b'-')) = cur.peek() {
            raw.push(s as char);
            cur.bump();
        }
        raw.push_str(&cur.take_while(|c| c.is_ascii_digit()));
    }
    Ok(TokenKind::Real(raw))
}
