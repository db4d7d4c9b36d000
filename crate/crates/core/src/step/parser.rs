use indexmap::IndexMap;

use super::lexer::{Position, Token, TokenKind};
use super::{Argument, EntityInstance, Record, StepError, StepFile};

struct Parser<'a> {
    tokens: &'a [Token],
    at: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a TokenKind> {
        self.tokens.get(self.at).map(|t| &t.kind)
    }

    fn peek_at(&self, offset: usize) -> Option<&'a TokenKind> {
        self.tokens.get(self.at + offset).map(|t| &t.kind)
    }

    fn pos(&self) -> Position {
        self.tokens
            .get(self.at)
            .or_else(|| self.tokens.last())
            .map(|t| t.pos)
            .unwrap_or(Position { line: 1, column: 1 })
    }

    fn next(&mut self) -> Option<&'a TokenKind> {
        let t = self.peek();
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, word: &str) -> bool {
        match self.peek() {
            Some(TokenKind::Keyword(k)) if k == word => {
                self.at += 1;
                true
            }
            _ => false,
        }
    }

    /// `( arg, arg, ... )` with the opening paren not yet consumed.
    fn arg_list(&mut self) -> Result<Vec<Argument>, String> {
        if !self.eat(&TokenKind::LParen) {
            return Err("expected '('".into());
        }
        let mut args = Vec::new();
        if self.eat(&TokenKind::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.argument()?);
            match self.next() {
                Some(TokenKind::Comma) => continue,
                Some(TokenKind::RParen) => return Ok(args),
                Some(other) => return Err(format!("expected ',' or ')', found {other:?}")),
                None => return Err("unexpected end of input in argument list".into()),
            }
        }
    }

    fn argument(&mut self) -> Result<Argument, String> {
        let arg = match self.peek() {
            Some(TokenKind::LParen) => return self.arg_list().map(Argument::List),
            Some(TokenKind::Keyword(name)) => {
                self.at += 1;
                let mut inner = self.arg_list()?;
                if inner.len() != 1 {
                    return Err(format!(
                        "typed parameter {name} must wrap exactly one value"
                    ));
                }
                return Ok(Argument::Typed(name.clone(), Box::new(inner.remove(0))));
            }
            Some(TokenKind::Integer(raw) | TokenKind::Real(raw)) => Argument::number(raw.as_str()),
            Some(TokenKind::Str(s)) => Argument::Text(s.clone()),
            Some(TokenKind::Enum(e)) => Argument::Enum(e.clone()),
            Some(TokenKind::Binary(b)) => Argument::Binary(b.clone()),
            Some(TokenKind::Ref(0)) => return Err("reference to #0".into()),
            Some(TokenKind::Ref(id)) => Argument::Reference(*id),
            Some(TokenKind::Unset) => Argument::Unset,
            Some(TokenKind::Inherited) => Argument::Inherited,
            Some(other) => return Err(format!("unexpected {other:?} in argument position")),
            None => return Err("unexpected end of input".into()),
        };
        self.at += 1;
        Ok(arg)
    }

    fn record(&mut self) -> Result<Record, String> {
        let name = match self.next() {
            Some(TokenKind::Keyword(k)) => k.clone(),
            Some(other) => return Err(format!("expected entity name, found {other:?}")),
            None => return Err("unexpected end of input".into()),
        };
        let args = self.arg_list()?;
        Ok(Record { name, args })
    }

    fn header(&mut self) -> Result<Vec<Record>, StepError> {
        let malformed = |p: &Parser, reason: &str| {
            let pos = p.pos();
            StepError::MalformedHeader {
                reason: reason.to_string(),
                line: pos.line,
                column: pos.column,
            }
        };
        if !(self.eat_keyword("HEADER") && self.eat(&TokenKind::Semicolon)) {
            return Err(malformed(self, "expected HEADER;"));
        }
        let mut records = Vec::new();
        loop {
            if self.eat_keyword("ENDSEC") {
                if !self.eat(&TokenKind::Semicolon) {
                    return Err(malformed(self, "expected ';' after ENDSEC"));
                }
                return Ok(records);
            }
            let rec = self.record().map_err(|r| malformed(self, &r))?;
            if !self.eat(&TokenKind::Semicolon) {
                return Err(malformed(self, "expected ';' after header record"));
            }
            records.push(rec);
        }
    }

    fn instance(&mut self) -> Result<EntityInstance, StepError> {
        let start = self.pos();
        let id = match self.peek() {
            Some(TokenKind::Ref(id)) => Some(*id),
            _ => None,
        };
        let fail = |p: &Parser, reason: String| {
            let pos = if id.is_some() { p.pos() } else { start };
            StepError::MalformedInstance {
                id,
                reason,
                line: pos.line,
                column: pos.column,
            }
        };
        let Some(id) = id else {
            return Err(fail(self, "expected instance name '#id'".into()));
        };
        if id == 0 {
            return Err(fail(self, "instance id must be positive".into()));
        }
        self.at += 1;
        if !self.eat(&TokenKind::Equals) {
            return Err(fail(self, "expected '='".into()));
        }
        let records = if self.peek() == Some(&TokenKind::LParen) {
            self.at += 1;
            let mut parts = Vec::new();
            while !self.eat(&TokenKind::RParen) {
                parts.push(self.record().map_err(|r| fail(self, r))?);
            }
            if parts.is_empty() {
                return Err(fail(self, "empty complex instance".into()));
            }
            parts
        } else {
            vec![self.record().map_err(|r| fail(self, r))?]
        };
        if !self.eat(&TokenKind::Semicolon) {
            return Err(fail(self, "expected ';' after instance".into()));
        }
        Ok(EntityInstance { id, records })
    }
}

fn first_text(args: &[Argument]) -> Option<&str> {
    args.iter().find_map(|a| match a {
        Argument::Text(s) => Some(s.as_str()),
        Argument::List(items) => first_text(items),
        _ => None,
    })
}

/// Build a [`StepFile`] from a token stream produced by
/// [`tokenize`](super::tokenize).
///
/// Any number of DATA sections is accepted; instances from all of them are
/// merged in file order. The closing `END-ISO-10303-21;` is optional.
pub fn parse_file(tokens: &[Token]) -> Result<StepFile, StepError> {
    let mut p = Parser { tokens, at: 0 };
    if !(p.eat_keyword("ISO-10303-21") && p.eat(&TokenKind::Semicolon)) {
        return Err(StepError::MissingIsoHeader);
    }
    let header = p.header()?;
    let schema_name = header
        .iter()
        .find(|r| r.name == "FILE_SCHEMA")
        .and_then(|r| first_text(&r.args))
        .unwrap_or_default()
        .to_string();

    let mut instances: IndexMap<u64, EntityInstance> = IndexMap::new();
    let mut saw_data = false;
    loop {
        match (p.peek(), p.peek_at(1)) {
            (Some(TokenKind::Keyword(k)), _) if k == "DATA" => {
                p.at += 1;
                // Part 21 edition 3 allows DATA(name, schema);
                if p.peek() == Some(&TokenKind::LParen) {
                    p.arg_list().map_err(|reason| StepError::MalformedInstance {
                        id: None,
                        reason,
                        line: p.pos().line,
                        column: p.pos().column,
                    })?;
                }
                if !p.eat(&TokenKind::Semicolon) {
                    let pos = p.pos();
                    return Err(StepError::MalformedInstance {
                        id: None,
                        reason: "expected ';' after DATA".into(),
                        line: pos.line,
                        column: pos.column,
                    });
                }
                saw_data = true;
                while !p.eat_keyword("ENDSEC") {
                    let inst = p.instance()?;
                    if instances.contains_key(&inst.id) {
                        return Err(StepError::DuplicateInstanceId(inst.id));
                    }
                    instances.insert(inst.id, inst);
                }
                if !p.eat(&TokenKind::Semicolon) {
                    let pos = p.pos();
                    return Err(StepError::MalformedInstance {
                        id: None,
                        reason: "expected ';' after ENDSEC".into(),
                        line: pos.line,
                        column: pos.column,
                    });
                }
            }
            (Some(TokenKind::Keyword(k)), Some(TokenKind::Semicolon)) if k == "END-ISO-10303-21" => {
                break
            }
            (None, _) => break,
            _ if !saw_data => return Err(StepError::MissingDataSection),
            _ => {
                let pos = p.pos();
                return Err(StepError::MalformedInstance {
                    id: None,
                    reason: "unexpected content after DATA section".into(),
                    line: pos.line,
                    column: pos.column,
                });
            }
        }
    }
    if !saw_data {
        return Err(StepError::MissingDataSection);
    }
    Ok(StepFile {
        header,
        instances,
        schema_name,
    })
}
